//! Finite-difference check of the autodiff tape: one primitive in isolation,
//! then the whole four-branch model under the hybrid loss (64-bit).
//!
//! `cargo run --example gradient_check`

use hbgsa::model::{check_gradients, HbgsaConfig};
use hbgsa::nn::{grad_check, GradCheckOptions, ParamStore};
use hbgsa::synthetic;

fn main() -> hbgsa::Result<()> {
    let mut store = ParamStore::<f64>::new(1);
    store.add_uniform("x", &[6, 4], 1.0)?;
    store.add_uniform("w", &[4, 4, 3], 0.5)?;
    store.add_uniform("b", &[4], 0.5)?;
    let r = grad_check(&mut store, &GradCheckOptions::default(), |g, p| {
        let y = g.conv1d(p.get("x")?, p.get("w")?, p.get("b")?, 2)?;
        let y = g.gelu(y);
        Ok(g.sum(y))
    })?;
    println!("conv1d + gelu: worst relative error {:.2e} over {} entries", r.max_rel_err, r.entries_checked);

    let config = HbgsaConfig::tiny();
    let batch = synthetic::samples(&config, 16, 7);
    let opts = GradCheckOptions { max_entries_per_param: Some(8), ..Default::default() };
    let r = check_gradients(&config, &batch, 50.0, 7, &opts)?;
    println!("full model + hybrid loss: worst relative error {:.2e} over {} entries", r.max_rel_err, r.entries_checked);
    Ok(())
}
