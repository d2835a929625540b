//! `hbgsa` command line: one subcommand per pipeline stage.
//!
//! Exit codes: 0 success, 1 usage, 2 data, 3 numeric. Failures print one
//! line `hbgsa: error[<kind>]: <message>` on standard error. Every run
//! first prints its resolved configuration as a JSON line on standard error.
//! Verbosity comes from the `HBGSA_LOG` environment variable.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dataset::{self, EncodeOptions, SplitSpec};
use crate::error::{Error, Result};
use crate::featurize::EncodedSample;
use crate::hbond::{self, HBondCriteria};
use crate::model::{self, HbgsaConfig};
use crate::nn::GradCheckOptions;
use crate::objective::MetricsReport;
use crate::pdb::{parse_atoms, Complex};
use crate::synthetic;
use crate::train::{self, OptimizerKind, TrainConfig};

#[derive(Debug, Parser, Serialize)]
#[command(name = "hbgsa", version, about = "Hydrogen-bond graph affinity model: extraction, training, evaluation and screening")]
pub struct Cli {
    /// Worker threads for parallel featurisation (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Detect hydrogen bonds in a structure; writes one JSON object per bond.
    HbondExtract(ExtractArgs),
    /// Bond count, ligand atom count and their ratio for one structure.
    HbondDensity(DensityArgs),
    /// Bond-count statistics over a manifest; writes a count,frequency histogram CSV.
    HbondStats(StatsArgs),
    /// Featurise a manifest into a binary sample cache.
    Encode(EncodeArgs),
    /// Build train/val/test id lists from index files.
    Split(SplitArgs),
    /// Train with early stopping; writes a checkpoint, its config and a JSON-lines log.
    Train(TrainArgs),
    /// Score a checkpoint; writes metrics JSON, scatter CSV and sorted-bar CSV.
    Eval(EvalArgs),
    /// Rank an unlabeled manifest by predicted affinity (descending).
    Predict(PredictArgs),
    /// One training run per Pearson weight; writes lambda,rmse,mae,pearson_r,ci CSV.
    SweepLambda(SweepArgs),
    /// One training run per ablation variant; writes variant,rmse,mae,pearson_r,ci CSV.
    Ablate(AblateArgs),
    /// Finite-difference check of the model gradients; prints the worst relative error.
    Gradcheck(GradcheckArgs),
    /// k-fold cross-validation; writes per-fold metrics and the mean/std summary as JSON.
    Cv(CvArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ExtractArgs {
    /// Structure file (PDB format).
    #[arg(long)]
    pub pdb: PathBuf,
    /// Ligand residue name (default: every non-water HETATM).
    #[arg(long)]
    pub ligand: Option<String>,
    /// Also write the top-N feature matrix as JSON to this path.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Keep raw coordinates in the feature matrix instead of centring on the ligand.
    #[arg(long)]
    pub no_center: bool,
    /// Output path (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct DensityArgs {
    /// Structure file (PDB format).
    #[arg(long)]
    pub pdb: PathBuf,
    /// Ligand SMILES; when given, the ligand atom count comes from its formula.
    #[arg(long)]
    pub smiles: Option<String>,
    /// Ligand residue name (default: every non-water HETATM).
    #[arg(long)]
    pub ligand: Option<String>,
    /// Output path for the JSON record (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    /// Manifest CSV.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Histogram CSV path (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ModelArgs {
    /// Model config TOML (default: built-in defaults).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Build the bond graph over real (non-padded) bond rows only.
    #[arg(long)]
    pub mask_padded_hbonds: bool,
}

impl ModelArgs {
    fn resolve(&self) -> Result<HbgsaConfig> {
        let mut c = match &self.config {
            Some(p) => HbgsaConfig::from_toml(&read_text(p)?)?,
            None => HbgsaConfig::default(),
        };
        c.mask_padded_hbonds |= self.mask_padded_hbonds;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct EncodeArgs {
    /// Manifest CSV.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Cache file to write.
    #[arg(long)]
    pub cache: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Keep raw bond coordinates instead of centring on the ligand.
    #[arg(long)]
    pub no_center: bool,
    /// Encode entries without a structure file with an all-zero bond block.
    #[arg(long)]
    pub allow_missing_structure: bool,
    /// Abort on the first failing entry instead of skipping it.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    /// General-set index or id list.
    #[arg(long)]
    pub general: PathBuf,
    /// Refined-set index or id list.
    #[arg(long)]
    pub refined: PathBuf,
    /// Core-set index or id list (becomes the test set).
    #[arg(long)]
    pub core: PathBuf,
    /// Id lists removed from every split (repeatable).
    #[arg(long)]
    pub exclude: Vec<PathBuf>,
    /// Validation ids drawn from the refined set.
    #[arg(long, default_value_t = dataset::DEFAULT_VAL_SIZE)]
    pub val_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving train.txt, val.txt and test.txt.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainingArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Seed for initialisation, shuffling and dropout.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pearson-loss weight.
    #[arg(long, default_value_t = 50.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Maximum epochs.
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Epochs without validation-RMSE improvement before stopping.
    #[arg(long, default_value_t = 30)]
    pub patience: usize,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    pub optimizer: OptimizerArg,
    /// SGD momentum.
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    /// Count tied predictions as discordant in the concordance index.
    #[arg(long)]
    pub strict_ci: bool,
}

impl TrainingArgs {
    fn resolve(&self) -> Result<(HbgsaConfig, TrainConfig)> {
        let model = HbgsaConfig { lambda_pearson: self.lambda, ..self.model.resolve()? };
        let optimizer = match self.optimizer {
            OptimizerArg::Adam => OptimizerKind::default(),
            OptimizerArg::Sgd => OptimizerKind::Sgd { momentum: self.momentum },
        };
        let cfg = TrainConfig {
            batch_size: self.batch_size,
            max_epochs: self.epochs,
            learning_rate: self.lr,
            optimizer,
            early_stop_patience: self.patience,
            seed: self.seed,
            lambda: self.lambda,
            strict_ci: self.strict_ci,
            ..TrainConfig::default()
        };
        cfg.validate()?;
        Ok((model, cfg))
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Sample cache from `encode`.
    #[arg(long)]
    pub cache: PathBuf,
    /// Directory with train.txt and val.txt from `split`.
    #[arg(long)]
    pub split: PathBuf,
    /// Checkpoint to write; the model config goes next to it with a .toml extension.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Training log (JSON lines; default: checkpoint path with .log.jsonl).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Ablation variant to train instead of the full model.
    #[arg(long)]
    pub variant: Option<String>,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub cache: PathBuf,
    /// Split directory; evaluates its test.txt ids (default: every cached sample).
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Count tied predictions as discordant in the concordance index.
    #[arg(long)]
    pub strict_ci: bool,
    /// Output directory for metrics.json, scatter.csv and sorted_bar.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Manifest CSV (affinity column may be empty).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Keep raw bond coordinates instead of centring on the ligand.
    #[arg(long)]
    pub no_center: bool,
    /// Predict entries without a structure file from an all-zero bond block.
    #[arg(long)]
    pub allow_missing_structure: bool,
    /// Output CSV id,prediction (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub cache: PathBuf,
    /// Directory with train.txt, val.txt and test.txt.
    #[arg(long)]
    pub split: PathBuf,
    /// Comma-separated Pearson weights.
    #[arg(long, value_delimiter = ',', default_values_t = train::DEFAULT_LAMBDAS)]
    pub lambdas: Vec<f64>,
    /// Output CSV (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct AblateArgs {
    #[arg(long)]
    pub cache: PathBuf,
    /// Directory with train.txt, val.txt and test.txt.
    #[arg(long)]
    pub split: PathBuf,
    /// Comma-separated variant names (default: all rows of the ablation table).
    #[arg(long, value_delimiter = ',')]
    pub variants: Vec<String>,
    /// Output CSV (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Synthetic batch size.
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Pearson-loss weight in the checked objective.
    #[arg(long, default_value_t = 50.0)]
    pub lambda: f64,
    /// Longest synthetic protein sequence.
    #[arg(long, default_value_t = 32)]
    pub max_len: usize,
    /// Entries sampled per parameter tensor (0 = all).
    #[arg(long, default_value_t = 1)]
    pub entries: usize,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-4)]
    pub eps: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fail (exit 3) when the worst relative error exceeds this.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct CvArgs {
    #[arg(long)]
    pub cache: PathBuf,
    /// Number of folds.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Output JSON (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub training: TrainingArgs,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text)?;
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load_complex(pdb: &Path, ligand: Option<&str>) -> Result<Complex> {
    let atoms = parse_atoms(&read_text(pdb)?)?;
    let id = pdb.file_stem().map_or_else(|| "structure".into(), |s| s.to_string_lossy().into_owned());
    Complex::from_atoms(id, atoms, ligand)
}

fn load_samples(cache: &Path, config: &HbgsaConfig) -> Result<Vec<EncodedSample>> {
    let (header, samples) = dataset::read_cache(cache, None)?;
    let expected = EncodeOptions::for_model(config);
    if (header.protein_len, header.pocket_len, header.smiles_len, header.hbond_n)
        != (expected.protein_len, expected.pocket_len, expected.smiles_len, expected.hbond_n)
    {
        return Err(Error::data(format!("{}: cache block lengths do not match the model config", cache.display())));
    }
    Ok(samples)
}

fn split_sets(samples: &[EncodedSample], split: &Path) -> Result<(Vec<EncodedSample>, Vec<EncodedSample>, Vec<EncodedSample>)> {
    let spec = SplitSpec::read(split)?;
    let pick = |ids: &[String]| -> Result<Vec<EncodedSample>> {
        let have: BTreeSet<&str> = samples.iter().map(|s| s.id.as_str()).collect();
        let present: Vec<String> = ids.iter().filter(|id| have.contains(id.as_str())).cloned().collect();
        if present.len() < ids.len() {
            log::warn!("{} split ids are not in the cache", ids.len() - present.len());
        }
        dataset::select(samples, &present)
    };
    Ok((pick(&spec.train)?, pick(&spec.val)?, pick(&spec.test)?))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "null".into(), |x| format!("{x:.6}"))
}

fn cmd_extract(a: &ExtractArgs) -> Result<()> {
    let complex = load_complex(&a.pdb, a.ligand.as_deref())?;
    let criteria = HBondCriteria::default();
    let bonds = hbond::detect_hbonds(&complex, &criteria);
    let text: String = bonds.iter().map(|b| serde_json::to_string(b).expect("bond serialises") + "\n").collect();
    write_out(a.out.as_deref(), &text)?;
    if let Some(p) = &a.features {
        let m = hbond::extract_features(&complex, &criteria, hbond::DEFAULT_TOP_N, !a.no_center);
        let json = serde_json::json!({ "n_real": m.n_real, "rows": m.rows });
        write_out(Some(p), &(json.to_string() + "\n"))?;
    }
    eprintln!("{} hydrogen bonds", bonds.len());
    Ok(())
}

fn cmd_density(a: &DensityArgs) -> Result<()> {
    let mut complex = load_complex(&a.pdb, a.ligand.as_deref())?;
    if let Some(s) = &a.smiles {
        complex.set_formula_from_smiles(s)?;
    }
    let r = hbond::density_record(&complex, &HBondCriteria::default())?;
    println!("n_hbond={} n_ligand={} density={:.3} ({:.1}%)", r.n_hbond, r.n_ligand, r.density, 100.0 * r.density);
    let json = serde_json::to_string(&r).expect("record serialises") + "\n";
    write_out(a.out.as_deref(), &json)
}

fn cmd_stats(a: &StatsArgs) -> Result<()> {
    let entries = dataset::load_manifest(&a.manifest)?;
    let counts: Vec<usize> = dataset::hbond_counts(&entries, &HBondCriteria::default())?.into_iter().map(|(_, c)| c).collect();
    let stats = hbond::hbond_count_stats(&counts)?;
    eprintln!("{}", serde_json::to_string(&stats).expect("stats serialise"));
    let mut csv = String::from("count,frequency\n");
    for (c, f) in hbond::count_histogram(&counts) {
        csv.push_str(&format!("{c},{f}\n"));
    }
    write_out(a.out.as_deref(), &csv)
}

fn cmd_encode(a: &EncodeArgs) -> Result<()> {
    let config = a.model.resolve()?;
    let entries = dataset::load_manifest(&a.manifest)?;
    let opts = EncodeOptions {
        center: !a.no_center,
        allow_missing_structure: a.allow_missing_structure,
        strict: a.strict,
        ..EncodeOptions::for_model(&config)
    };
    let report = dataset::encode_and_cache(&entries, &opts, &a.cache)?;
    eprintln!("wrote {} samples to {} ({} skipped)", report.written, a.cache.display(), report.failed.len());
    for (id, msg) in &report.failed {
        eprintln!("skipped {id}: {msg}");
    }
    Ok(())
}

fn cmd_split(a: &SplitArgs) -> Result<()> {
    let general = dataset::load_id_list(&a.general)?;
    let refined = dataset::load_id_list(&a.refined)?;
    let core = dataset::load_id_list(&a.core)?;
    let mut exclude = BTreeSet::new();
    for p in &a.exclude {
        exclude.extend(dataset::load_id_list(p)?);
    }
    let spec = dataset::clean_and_split(&general, &refined, &core, &exclude, a.seed, a.val_size)?;
    spec.write(&a.out)?;
    eprintln!("train {} val {} test {}", spec.train.len(), spec.val.len(), spec.test.len());
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let (mut model_cfg, cfg) = a.training.resolve()?;
    if let Some(v) = &a.variant {
        model_cfg = model_cfg.ablation_variant(v)?;
    }
    let samples = load_samples(&a.cache, &model_cfg)?;
    let (tr, va, _) = split_sets(&samples, &a.split)?;
    let params = model::build_params::<f32>(&model_cfg, cfg.seed)?;
    let (best, log) = train::train(&model_cfg, params, &tr, &va, &cfg)?;
    train::save_checkpoint(&a.checkpoint, &model_cfg, &best)?;
    let log_path = a.out.clone().unwrap_or_else(|| a.checkpoint.with_extension("log.jsonl"));
    write_out(Some(&log_path), &log.to_json_lines())?;
    eprintln!("best epoch {} of {}; checkpoint {}", log.best_epoch, log.epochs.len(), a.checkpoint.display());
    Ok(())
}

/// Metrics JSON, `(true,pred)` scatter rows and `(rank,true,pred)` rows
/// sorted by ascending true affinity.
pub fn eval_outputs(target: &[f64], pred: &[f64], metrics: &MetricsReport) -> (String, String, String) {
    let mut scatter = String::from("true,pred\n");
    for (t, p) in target.iter().zip(pred) {
        scatter.push_str(&format!("{t:.6},{p:.6}\n"));
    }
    let mut order: Vec<usize> = (0..target.len()).collect();
    order.sort_by(|&i, &j| target[i].total_cmp(&target[j]).then(i.cmp(&j)));
    let mut bars = String::from("rank,true,pred\n");
    for (rank, &i) in order.iter().enumerate() {
        bars.push_str(&format!("{},{:.6},{:.6}\n", rank + 1, target[i], pred[i]));
    }
    (metrics.to_json() + "\n", scatter, bars)
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let (model_cfg, params) = train::load_checkpoint(&a.checkpoint)?;
    let samples = load_samples(&a.cache, &model_cfg)?;
    let set = match &a.split {
        Some(dir) => split_sets(&samples, dir)?.2,
        None => samples,
    };
    if set.is_empty() {
        return Err(Error::EmptyInput("evaluation set"));
    }
    let (metrics, pred) = train::evaluate(&model_cfg, &params, &set, a.strict_ci)?;
    let target: Vec<f64> = set.iter().map(|s| f64::from(s.affinity.unwrap_or(f32::NAN))).collect();
    let (json, scatter, bars) = eval_outputs(&target, &pred, &metrics);
    std::fs::create_dir_all(&a.out)?;
    std::fs::write(a.out.join("metrics.json"), &json)?;
    std::fs::write(a.out.join("scatter.csv"), scatter)?;
    std::fs::write(a.out.join("sorted_bar.csv"), bars)?;
    print!("{json}");
    Ok(())
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let (model_cfg, params) = train::load_checkpoint(&a.checkpoint)?;
    let entries = dataset::load_manifest(&a.manifest)?;
    let opts = EncodeOptions {
        center: !a.no_center,
        allow_missing_structure: a.allow_missing_structure,
        strict: true,
        ..EncodeOptions::for_model(&model_cfg)
    };
    let (samples, _) = dataset::encode_entries(&entries, &opts)?;
    let mut preds = model::predict_all(&model_cfg, &params, &samples, 64)?;
    preds.sort_by(|a, b| b.affinity_pred.total_cmp(&a.affinity_pred).then_with(|| a.id.cmp(&b.id)));
    let mut csv = String::from("id,prediction\n");
    for p in &preds {
        csv.push_str(&format!("{},{:.6}\n", p.id, p.affinity_pred));
    }
    write_out(a.out.as_deref(), &csv)
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let (model_cfg, cfg) = a.training.resolve()?;
    let samples = load_samples(&a.cache, &model_cfg)?;
    let (tr, va, te) = split_sets(&samples, &a.split)?;
    for &l in &a.lambdas {
        TrainConfig { lambda: l, ..cfg.clone() }.validate()?;
    }
    let rows = train::lambda_sweep(&model_cfg, &tr, &va, &te, &a.lambdas, &cfg)?;
    write_out(a.out.as_deref(), &train::rows_csv("lambda", &rows))
}

fn cmd_ablate(a: &AblateArgs) -> Result<()> {
    let (model_cfg, cfg) = a.training.resolve()?;
    let samples = load_samples(&a.cache, &model_cfg)?;
    let (tr, va, te) = split_sets(&samples, &a.split)?;
    let variants: Vec<&str> = if a.variants.is_empty() {
        model::ABLATION_VARIANTS.to_vec()
    } else {
        a.variants.iter().map(String::as_str).collect()
    };
    let rows = train::ablate(&model_cfg, &variants, &tr, &va, &te, &cfg)?;
    write_out(a.out.as_deref(), &train::rows_csv("variant", &rows))
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<()> {
    let config = HbgsaConfig { lambda_pearson: a.lambda, ..a.model.resolve()? };
    if a.batch_size < 2 {
        return Err(Error::config("gradcheck needs a batch of at least 2 samples"));
    }
    let batch = synthetic::samples_capped(&config, a.batch_size, a.seed, a.max_len);
    let opts = GradCheckOptions {
        eps: a.eps,
        max_entries_per_param: (a.entries > 0).then_some(a.entries),
        seed: a.seed,
        ..GradCheckOptions::default()
    };
    let report = model::check_gradients(&config, &batch, a.lambda, a.seed, &opts)?;
    let mut worst = report.worst.as_ref().map_or_else(String::new, |(n, i)| format!(" at {n}[{i}]"));
    if let Some((a, n)) = report.worst_values {
        worst.push_str(&format!(" (analytic {a:.6e}, numeric {n:.6e})"));
    }
    println!("worst relative error {:.3e}{worst} over {} entries", report.max_rel_err, report.entries_checked);
    if report.max_rel_err >= a.tolerance {
        return Err(Error::Numeric(format!("gradient check failed: {:.3e} >= {:.1e}", report.max_rel_err, a.tolerance)));
    }
    Ok(())
}

fn cmd_cv(a: &CvArgs) -> Result<()> {
    let (model_cfg, cfg) = a.training.resolve()?;
    let samples = load_samples(&a.cache, &model_cfg)?;
    let result = train::kfold_cv(&model_cfg, &samples, a.k, &cfg)?;
    for f in &result.folds {
        eprintln!("fold {}: rmse {:.4} pearson {}", f.fold, f.metrics.rmse, fmt_opt(f.metrics.pearson_r));
    }
    let s = &result.summary;
    eprintln!("rmse {:.4} ± {:.4}, mae {:.4} ± {:.4}", s.rmse.mean, s.rmse.std, s.mae.mean, s.mae.std);
    write_out(a.out.as_deref(), &(serde_json::to_string_pretty(&result).expect("cv serialises") + "\n"))
}

pub fn execute(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::config("--threads must be positive"));
        }
        // Fails only if a pool already exists, which is harmless here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::HbondExtract(a) => cmd_extract(a),
        Command::HbondDensity(a) => cmd_density(a),
        Command::HbondStats(a) => cmd_stats(a),
        Command::Encode(a) => cmd_encode(a),
        Command::Split(a) => cmd_split(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
        Command::SweepLambda(a) => cmd_sweep(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Cv(a) => cmd_cv(a),
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses `argv`, runs the subcommand and returns the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("HBGSA_LOG", "warn")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            eprintln!("{}", e.render().to_string().trim_end());
            eprintln!("hbgsa: error[usage]: {}", one_line(e.kind().as_str().unwrap_or("invalid arguments")));
            return 1;
        }
    };
    eprintln!("config: {}", serde_json::to_string(&cli).expect("arguments serialise"));
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("hbgsa: error[{}]: {}", e.kind(), one_line(&e.to_string()));
            e.exit_code()
        }
    }
}
