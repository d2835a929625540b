//! Virtual-screening order: fit on the labelled fixtures, then rank an
//! unlabeled manifest by predicted affinity, highest first.
//!
//! `cargo run --example screen`

use std::path::Path;

use hbgsa::dataset::{encode_entries, load_manifest, EncodeOptions};
use hbgsa::model::{build_params, predict_all, HbgsaConfig};
use hbgsa::train::{TrainConfig, Trainer};

fn main() -> hbgsa::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let config = HbgsaConfig::default();
    let opts = EncodeOptions { strict: true, ..EncodeOptions::for_model(&config) };

    let (labelled, _) = encode_entries(&load_manifest(&dir.join("manifest.csv"))?, &opts)?;
    let cfg = TrainConfig { lambda: 0.0, learning_rate: 1e-3, ..TrainConfig::default() };
    let mut trainer = Trainer::new(config.clone(), cfg, build_params(&config, 0)?)?;
    for _ in 0..15 {
        trainer.train_epoch(&labelled)?;
    }

    let (library, _) = encode_entries(&load_manifest(&dir.join("screen.csv"))?, &opts)?;
    let mut ranked = predict_all(&config, &trainer.params, &library, 64)?;
    ranked.sort_by(|a, b| b.affinity_pred.total_cmp(&a.affinity_pred));
    println!("rank,id,prediction");
    for (i, p) in ranked.iter().enumerate() {
        println!("{},{},{:.3}", i + 1, p.id, p.affinity_pred);
    }
    Ok(())
}
