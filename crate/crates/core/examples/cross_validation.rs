//! k-fold cross-validation with a mean / population-std summary.
//!
//! `cargo run --example cross_validation`

use hbgsa::model::HbgsaConfig;
use hbgsa::synthetic;
use hbgsa::train::{kfold_cv, TrainConfig};

fn main() -> hbgsa::Result<()> {
    let config = HbgsaConfig::tiny();
    let data = synthetic::samples(&config, 100, 3);
    let cfg = TrainConfig { batch_size: 16, max_epochs: 15, learning_rate: 3e-3, early_stop_patience: 5, seed: 3, ..TrainConfig::default() };
    let cv = kfold_cv(&config, &data, 5, &cfg)?;
    for f in &cv.folds {
        println!("fold {}  best epoch {:>2}  rmse {:.3}  r {:?}", f.fold, f.best_epoch, f.metrics.rmse, f.metrics.pearson_r);
    }
    let s = &cv.summary;
    println!("rmse {:.3} +/- {:.3}", s.rmse.mean, s.rmse.std);
    println!("mae  {:.3} +/- {:.3}", s.mae.mean, s.mae.std);
    if let Some(r) = s.pearson_r {
        println!("r    {:.3} +/- {:.3}", r.mean, r.std);
    }
    Ok(())
}
