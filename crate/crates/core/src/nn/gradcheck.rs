//! Central finite-difference gradient checking against the tape.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Mode, ParamVars, Var};
use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Denominator floor of the relative error, so entries whose true
    /// gradient is ~0 are judged on absolute error instead.
    pub floor: f64,
    /// Check at most this many entries per parameter (all when `None`).
    pub max_entries_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { eps: 1e-4, floor: 1e-6, max_entries_per_param: None, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `(parameter name, flat index)` of the worst entry.
    pub worst: Option<(String, usize)>,
    /// `(analytic, numeric)` gradient at the worst entry.
    pub worst_values: Option<(f64, f64)>,
    pub entries_checked: usize,
    /// Entries re-measured with a step 100× smaller because the ±ε probe
    /// disagreed, typically by straddling a relu or max-pool kink.
    pub kinks_refined: usize,
}

/// Compares the tape gradient of the scalar `f` with central differences
/// `(f(θ+ε) − f(θ−ε)) / 2ε`, in eval mode (dropout off).
pub fn grad_check<F>(store: &mut ParamStore<f64>, opts: &GradCheckOptions, mut f: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph<f64>, &ParamVars) -> Result<Var>,
{
    let (analytic, base) = {
        let mut g = Graph::new(Mode::Eval, 0);
        let vars = g.bind_params(store);
        let out = f(&mut g, &vars)?;
        let base = g.value(out).data()[0];
        let grads = g.backward(out)?;
        let per_param: Vec<Option<Vec<f64>>> =
            (0..store.len()).map(|id| vars.var_of(id).and_then(|v| grads.wrt(v)).map(<[f64]>::to_vec)).collect();
        (per_param, base)
    };
    let mut eval = |store: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::new(Mode::Eval, 0);
        let vars = g.bind_params(store);
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).data()[0])
    };

    if !base.is_finite() {
        return Err(Error::Numeric("objective is not finite at the check point".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport { max_rel_err: 0.0, worst: None, worst_values: None, entries_checked: 0, kinks_refined: 0 };
    for id in 0..store.len() {
        let n = store.tensor(id).len();
        let entries: Vec<usize> = match opts.max_entries_per_param {
            Some(m) if m < n => {
                let mut v = sample(&mut rng, n, m).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..n).collect(),
        };
        for i in entries {
            let orig = store.tensor(id).data()[i];
            store.tensor_mut(id).data_mut()[i] = orig + opts.eps;
            let plus = eval(store);
            store.tensor_mut(id).data_mut()[i] = orig - opts.eps;
            let minus = eval(store);
            store.tensor_mut(id).data_mut()[i] = orig;
            let (plus, minus) = (plus?, minus?);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Numeric(format!("non-finite objective perturbing `{}`[{i}]", store.name(id))));
            }
            let a = analytic[id].as_ref().map_or(0.0, |g| g[i]);
            let rel_err = |n: f64| (a - n).abs() / a.abs().max(n.abs()).max(opts.floor);
            let mut numeric = (plus - minus) / (2.0 * opts.eps);
            if rel_err(numeric) > 1e-6 {
                let h = opts.eps * 1e-2;
                store.tensor_mut(id).data_mut()[i] = orig + h;
                let plus = eval(store);
                store.tensor_mut(id).data_mut()[i] = orig - h;
                let minus = eval(store);
                store.tensor_mut(id).data_mut()[i] = orig;
                numeric = (plus? - minus?) / (2.0 * h);
                report.kinks_refined += 1;
            }
            let rel = rel_err(numeric);
            report.entries_checked += 1;
            if rel > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = rel;
                report.worst = Some((store.name(id).to_string(), i));
                report.worst_values = Some((a, numeric));
            }
        }
    }
    Ok(report)
}
