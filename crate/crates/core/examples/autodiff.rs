//! Reverse-mode gradients checked against central differences, then a few
//! Adam steps fitting a small dense layer.

use std::collections::BTreeMap;

use behavior_attn::autodiff::{AdamConfig, AdamState, Graph, Tensor};

/// Loss of a 1-D convolution followed by softmax over time.
fn loss(x: &Tensor, w: &Tensor, b: &Tensor) -> behavior_attn::Result<(f64, Tensor)> {
    let mut g = Graph::new();
    let xv = g.input(x.clone())?;
    let wv = g.param(w.clone())?;
    let bv = g.param(b.clone())?;
    let h = g.conv1d(xv, wv, bv)?;
    let s = g.softmax(h, 0)?;
    let sq = g.mul(s, s)?;
    let total = g.sum(sq, 0)?;
    let total = g.sum(total, 0)?;
    let value = g.value(total).item();
    let grads = g.backward(total)?;
    Ok((value, grads.get(wv).unwrap().clone()))
}

fn main() -> behavior_attn::Result<()> {
    let x = Tensor::from_fn(&[10, 2], |i| (i as f64 * 0.7).sin());
    let w = Tensor::from_fn(&[3, 2, 4], |i| (i as f64 * 1.3).cos() * 0.5);
    let b = Tensor::zeros(&[4]);
    let (_, grad) = loss(&x, &w, &b)?;
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..w.len() {
        let mut plus = w.clone();
        plus.data_mut()[i] += h;
        let mut minus = w.clone();
        minus.data_mut()[i] -= h;
        let fd = (loss(&x, &plus, &b)?.0 - loss(&x, &minus, &b)?.0) / (2.0 * h);
        worst = worst.max((fd - grad.data()[i]).abs());
    }
    println!("conv1d + softmax: max |analytic - numeric| = {worst:.2e}");

    // Logistic regression: label is x > 1.
    let xs = Tensor::from_fn(&[8, 1], |i| i as f64 / 4.0);
    let ys: Vec<f64> = xs.data().iter().map(|&x| f64::from(x > 1.0)).collect();
    let mut params = BTreeMap::from([
        ("w".to_string(), Tensor::zeros(&[1, 1])),
        ("b".to_string(), Tensor::zeros(&[1])),
    ]);
    let mut adam = AdamState::new(AdamConfig {
        lr: 0.1,
        ..AdamConfig::default()
    });
    for step in 0..=400 {
        let mut g = Graph::new();
        let xv = g.input(xs.clone())?;
        let wv = g.param(params["w"].clone())?;
        let bv = g.param(params["b"].clone())?;
        let z = g.dense(xv, wv, bv)?;
        let bce = g.bce_with_logits(z, &ys, 1.0)?;
        if step % 100 == 0 {
            println!("step {step}: loss {:.5}", g.value(bce).item());
        }
        let grads = g.backward(bce)?;
        let named = BTreeMap::from([
            ("w".to_string(), grads.get(wv).unwrap().clone()),
            ("b".to_string(), grads.get(bv).unwrap().clone()),
        ]);
        adam.apply(&mut params, &named)?;
    }
    let (w, b) = (params["w"].item(), params["b"].item());
    println!("decision boundary at x = {:.3}", -b / w);
    Ok(())
}
