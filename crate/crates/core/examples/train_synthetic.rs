//! Train the model epoch by epoch on generated data whose label is a fixed
//! function of the inputs, reporting loss and training-set fit.
//!
//! `cargo run --example train_synthetic [epochs]`

use hbgsa::model::{build_params, param_count, HbgsaConfig};
use hbgsa::synthetic;
use hbgsa::train::{evaluate, TrainConfig, Trainer};

fn main() -> hbgsa::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let config = HbgsaConfig::default();
    let data = synthetic::samples_capped(&config, 32, 1, 16);
    let params = build_params::<f32>(&config, 0)?;
    println!("model parameters: {}", param_count(&config, &params));

    let cfg = TrainConfig { batch_size: 32, ..TrainConfig::default() };
    let mut trainer = Trainer::new(config.clone(), cfg, params)?;
    for _ in 0..epochs {
        let loss = trainer.train_epoch(&data)?;
        let (m, _) = evaluate(&config, &trainer.params, &data, false)?;
        println!(
            "epoch {:>3}  loss {:>8.4} (smooth-l1 {:.4}, 1-r {:.4})  train rmse {:.3}  r {:.4}",
            trainer.epoch(),
            loss.total,
            loss.reg,
            loss.pearson,
            m.rmse,
            m.pearson_r.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
