//! Build the four model inputs (protein, pocket, SMILES, hydrogen bonds) for
//! every entry of a manifest and round-trip them through the sample cache.
//!
//! `cargo run --example encode_sample [manifest.csv]`

use std::path::PathBuf;

use hbgsa::dataset::{encode_entries, load_manifest, read_cache, write_cache, EncodeOptions};
use hbgsa::featurize::SmilesVocabulary;
use hbgsa::model::HbgsaConfig;

fn main() -> hbgsa::Result<()> {
    let manifest = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/manifest.csv"));
    let entries = load_manifest(&manifest)?;
    let opts = EncodeOptions::for_model(&HbgsaConfig::default());
    let (samples, failed) = encode_entries(&entries, &opts)?;
    println!("{} encoded, {} skipped", samples.len(), failed.len());

    let vocab = SmilesVocabulary::standard();
    for (e, s) in entries.iter().zip(&samples) {
        let tokens = vocab.tokenize(&e.smiles)?;
        let n_bonds = s.hbond.chunks(9).take_while(|r| r.iter().any(|v| *v != 0.0)).count();
        println!(
            "{:<8} protein {}x40  pocket {}x40  smiles {} tokens ({} used)  hbond rows {} real / {}",
            s.id,
            s.protein.len() / 40,
            s.pocket.len() / 40,
            s.smiles.len(),
            tokens.len(),
            n_bonds,
            s.hbond.len() / 9
        );
    }

    let dir = tempfile_dir();
    let path = dir.join("samples.hbgc");
    write_cache(&path, &opts, &samples)?;
    let (_, back) = read_cache(&path, Some(&opts))?;
    println!("cache round trip equal: {}", back == samples);
    std::fs::remove_dir_all(dir)?;
    Ok(())
}

fn tempfile_dir() -> PathBuf {
    let d = std::env::temp_dir().join(format!("hbgsa-encode-{}", std::process::id()));
    std::fs::create_dir_all(&d).expect("temp dir");
    d
}
