//! Train briefly, checkpoint, reload and evaluate: metrics JSON plus the
//! scatter and sorted-bar CSV data for plotting.
//!
//! `cargo run --example evaluate`

use hbgsa::cli::eval_outputs;
use hbgsa::model::{build_params, HbgsaConfig};
use hbgsa::synthetic;
use hbgsa::train::{evaluate, load_checkpoint, save_checkpoint, train, TrainConfig};

fn main() -> hbgsa::Result<()> {
    let config = HbgsaConfig::tiny();
    let data = synthetic::samples(&config, 60, 9);
    let (tr, rest) = data.split_at(40);
    let (val, test) = rest.split_at(10);
    let cfg = TrainConfig { batch_size: 16, max_epochs: 30, learning_rate: 3e-3, early_stop_patience: 10, seed: 9, ..TrainConfig::default() };
    let (best, log) = train(&config, build_params(&config, 9)?, tr, val, &cfg)?;
    println!("best epoch {} of {}", log.best_epoch, log.epochs.len());

    let dir = std::env::temp_dir().join(format!("hbgsa-eval-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let ckpt = dir.join("model.ckpt");
    save_checkpoint(&ckpt, &config, &best)?;
    let (config, params) = load_checkpoint(&ckpt)?;

    let (metrics, pred) = evaluate(&config, &params, test, false)?;
    let target: Vec<f64> = test.iter().map(|s| f64::from(s.affinity.unwrap())).collect();
    let (json, scatter, bars) = eval_outputs(&target, &pred, &metrics);
    print!("metrics {json}\nscatter\n{scatter}\nsorted bar\n{bars}");
    std::fs::remove_dir_all(dir)?;
    Ok(())
}
