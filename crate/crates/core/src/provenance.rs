//! Content hashes linking every artifact to the files it was built from.

use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A consumed input file and the SHA-256 of its bytes at consumption time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRef {
    pub path: String,
    pub sha256: String,
}

impl InputRef {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(InputRef {
            path: path.to_string_lossy().into_owned(),
            sha256: sha256_file(path)?,
        })
    }

    /// Records `path` relative to `base` (through `..` if needed) when the two
    /// share a directory below the root, so artifacts can be moved together
    /// with their inputs.
    pub fn relative_to(path: &Path, base: &Path) -> Result<Self> {
        let sha256 = sha256_file(path)?;
        let abs = |p: &Path| p.canonicalize().unwrap_or_else(|_| p.to_path_buf());
        let (full, base) = (abs(path), abs(base));
        let (fc, bc): (Vec<Component>, Vec<Component>) = (full.components().collect(), base.components().collect());
        let common = fc.iter().zip(&bc).take_while(|(a, b)| a == b).count();
        let below_root = fc[..common].iter().any(|c| matches!(c, Component::Normal(_)));
        let shown = if below_root {
            let mut rel = PathBuf::new();
            for _ in common..bc.len() {
                rel.push("..");
            }
            rel.extend(&fc[common..]);
            rel
        } else {
            full
        };
        Ok(InputRef {
            path: shown.to_string_lossy().into_owned(),
            sha256,
        })
    }

    /// The recorded path, resolved against `base` when relative.
    pub fn resolve(&self, base: &Path) -> PathBuf {
        let p = Path::new(&self.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    /// Fails if the file still exists but its contents changed. A file that
    /// has since been moved away is not treated as stale.
    pub fn verify(&self, force: bool) -> Result<()> {
        self.verify_in(Path::new(""), force)
    }

    /// [`verify`](Self::verify) with relative paths taken from `base`.
    pub fn verify_in(&self, base: &Path, force: bool) -> Result<()> {
        let resolved = self.resolve(base);
        let path = resolved.as_path();
        if force || !path.exists() {
            return Ok(());
        }
        let found = sha256_file(path)?;
        if found != self.sha256 {
            return Err(Error::StaleInput {
                path: path.into(),
                recorded: self.sha256.clone(),
                found,
            });
        }
        Ok(())
    }
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_bytes(&bytes))
}

pub fn verify_all(inputs: &[InputRef], force: bool) -> Result<()> {
    inputs.iter().try_for_each(|i| i.verify(force))
}
