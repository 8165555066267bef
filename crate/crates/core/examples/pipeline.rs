//! The staged command-line pipeline run in-process on the demo spec:
//! synth, track, windows, train, eval, phenotype and bench.

use std::path::Path;

use behavior_attn::cli::main_with_args;

fn step(args: &[&str]) {
    println!("$ behavior-attn {}", args.join(" "));
    let code = main_with_args(std::iter::once("behavior-attn").chain(args.iter().copied()));
    assert_eq!(code, 0, "step failed");
}

fn main() {
    let demo = Path::new(env!("CARGO_MANIFEST_DIR")).join("demo");
    let work = std::env::temp_dir().join("behavior-attn-pipeline");
    let _ = std::fs::remove_dir_all(&work);
    let p = |rel: &str| work.join(rel).to_string_lossy().into_owned();
    let spec = demo.join("demo_spec.json").to_string_lossy().into_owned();
    let config = demo.join("demo_config.json").to_string_lossy().into_owned();

    step(&["synth", "--spec", &spec, "--out", &p("data")]);
    let mut windows = vec!["--config", &config, "windows"];
    let tracks: Vec<String> = (0..6).map(|i| p(&format!("data/demo{i:02}.tracks.jsonl"))).collect();
    for (i, t) in tracks.iter().enumerate() {
        step(&["--config", &config, "track", "--stream", &p(&format!("data/demo{i:02}.poses.jsonl"))]);
        windows.extend(["--tracks", t]);
    }
    let (ann, win, run) = (p("data/annotations.csv"), p("windows.json"), p("run"));
    windows.extend(["--annotations", &ann, "--out", &win]);
    step(&windows);
    step(&["--config", &config, "train", "--windows", &win, "--out", &run, "--variant", "p-att"]);
    step(&["--config", &config, "eval", "--checkpoints", &run, "--bootstrap", "500"]);
    let ckpt = p("run/fold0.ckpt.json");
    step(&["--config", &config, "phenotype", "--checkpoint", &ckpt, "--windows", &win, "--category", "restricted_repetitive"]);
    step(&["--config", &config, "bench", "--checkpoint", &ckpt, "--windows", &win]);
    println!("artifacts in {}", work.display());
}
