//! Sweep the Pearson-loss weight with otherwise identical runs and print the
//! CSV table. λ = 0 is plain SmoothL1 training.
//!
//! `cargo run --example lambda_sweep`

use hbgsa::model::HbgsaConfig;
use hbgsa::synthetic;
use hbgsa::train::{lambda_sweep, rows_csv, TrainConfig};

fn main() -> hbgsa::Result<()> {
    let config = HbgsaConfig::tiny();
    let data = synthetic::samples(&config, 120, 5);
    let (train, rest) = data.split_at(80);
    let (val, test) = rest.split_at(20);
    let cfg = TrainConfig { batch_size: 16, max_epochs: 10, learning_rate: 3e-3, early_stop_patience: 4, seed: 5, ..TrainConfig::default() };
    let rows = lambda_sweep(&config, train, val, test, &[0.0, 1.0, 25.0, 50.0, 100.0], &cfg)?;
    print!("{}", rows_csv("lambda", &rows));
    Ok(())
}
