//! Hybrid SmoothL1 + Pearson training loss and the evaluation metrics.
//!
//! All reductions run in `f64` whatever the model precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Graph, Real, Var};

/// Standard deviations at or below this are treated as zero variance.
pub const VARIANCE_EPS: f64 = 1e-8;

fn check_pair(pred: &[f64], target: &[f64], min_len: usize, what: &'static str) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::shape(format!("{what}: {} predictions vs {} targets", pred.len(), target.len())));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput(what));
    }
    if pred.len() < min_len {
        return Err(Error::data(format!("{what} needs at least {min_len} samples, got {}", pred.len())));
    }
    Ok(())
}

/// Mean Huber loss with threshold 1.
pub fn smooth_l1(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target, 1, "smooth_l1")?;
    let s: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, y)| {
            let e = (y - p).abs();
            if e <= 1.0 {
                0.5 * e * e
            } else {
                e - 0.5
            }
        })
        .sum();
    Ok(s / pred.len() as f64)
}

/// Gradient of [`smooth_l1`] w.r.t. the predictions.
pub fn smooth_l1_grad(pred: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    check_pair(pred, target, 1, "smooth_l1")?;
    let n = pred.len() as f64;
    Ok(pred.iter().zip(target).map(|(p, y)| (p - y).clamp(-1.0, 1.0) / n).collect())
}

fn centered(v: &[f64]) -> (Vec<f64>, f64) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let c: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let s = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    (c, s)
}

/// Correlation with the zero-variance guard: `None` when either side is flat.
fn guarded_r(pred: &[f64], target: &[f64]) -> (Option<f64>, Vec<f64>, Vec<f64>, f64, f64) {
    let (xc, sx) = centered(pred);
    let (yc, sy) = centered(target);
    if sx <= VARIANCE_EPS || sy <= VARIANCE_EPS {
        return (None, xc, yc, sx, sy);
    }
    let cov: f64 = xc.iter().zip(&yc).map(|(a, b)| a * b).sum();
    (Some((cov / (sx * sy)).clamp(-1.0, 1.0)), xc, yc, sx, sy)
}

/// `1 − r` over the batch; `r := 0` when either side has zero variance.
pub fn pearson_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target, 2, "pearson_loss")?;
    Ok(1.0 - guarded_r(pred, target).0.unwrap_or(0.0))
}

/// Gradient of [`pearson_loss`]: `−(yc/(sx·sy) − r·xc/sx²)`, zero when degenerate.
pub fn pearson_loss_grad(pred: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    check_pair(pred, target, 2, "pearson_loss")?;
    let (r, xc, yc, sx, sy) = guarded_r(pred, target);
    let Some(r) = r else { return Ok(vec![0.0; pred.len()]) };
    Ok(xc.iter().zip(&yc).map(|(x, y)| -(y / (sx * sy) - r * x / (sx * sx))).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    /// SmoothL1 term.
    pub reg: f64,
    /// `1 − r` term.
    pub pearson: f64,
    pub lambda: f64,
}

/// `SmoothL1 + λ·(1 − r)`.
pub fn hybrid_loss(pred: &[f64], target: &[f64], lambda: f64) -> Result<LossBreakdown> {
    let reg = smooth_l1(pred, target)?;
    let pearson = pearson_loss(pred, target)?;
    Ok(LossBreakdown { total: reg + lambda * pearson, reg, pearson, lambda })
}

pub fn hybrid_loss_grad(pred: &[f64], target: &[f64], lambda: f64) -> Result<(LossBreakdown, Vec<f64>)> {
    let b = hybrid_loss(pred, target, lambda)?;
    let mut g = smooth_l1_grad(pred, target)?;
    if lambda != 0.0 {
        for (a, p) in g.iter_mut().zip(pearson_loss_grad(pred, target)?) {
            *a += lambda * p;
        }
    }
    Ok((b, g))
}

/// Attaches the hybrid loss of the prediction vector `pred` to the tape.
pub fn hybrid_loss_node<T: Real>(g: &mut Graph<T>, pred: Var, target: &[f64], lambda: f64) -> Result<(Var, LossBreakdown)> {
    let p: Vec<f64> = g.value(pred).data().iter().map(|v| v.as_f64()).collect();
    let (b, grad) = hybrid_loss_grad(&p, target, lambda)?;
    if !b.total.is_finite() {
        return Err(Error::Numeric(format!("loss is not finite ({b:?})")));
    }
    let node = g.loss_node(pred, T::lit(b.total), grad.into_iter().map(T::lit).collect())?;
    Ok((node, b))
}

pub fn rmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target, 1, "rmse")?;
    let s: f64 = pred.iter().zip(target).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok((s / pred.len() as f64).sqrt())
}

pub fn mae(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target, 1, "mae")?;
    let s: f64 = pred.iter().zip(target).map(|(p, y)| (p - y).abs()).sum();
    Ok(s / pred.len() as f64)
}

/// Pearson correlation; undefined when either side is constant.
pub fn pearson_r(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target, 2, "pearson_r")?;
    let (xc, sx) = centered(pred);
    let (yc, sy) = centered(target);
    if sx == 0.0 || sy == 0.0 {
        return Err(Error::Undefined("Pearson correlation of a constant vector".into()));
    }
    let cov: f64 = xc.iter().zip(&yc).map(|(a, b)| a * b).sum();
    Ok((cov / (sx * sy)).clamp(-1.0, 1.0))
}

/// Fraction of pairs with `target[i] > target[j]` that the predictions order
/// the same way. Prediction ties count 0.5 unless `strict`.
pub fn concordance_index(pred: &[f64], target: &[f64], strict: bool) -> Result<f64> {
    check_pair(pred, target, 2, "concordance_index")?;
    let tie = if strict { 0.0 } else { 0.5 };
    let mut hits = 0.0;
    let mut pairs = 0u64;
    for i in 0..pred.len() {
        for j in 0..pred.len() {
            if target[i] > target[j] {
                pairs += 1;
                if pred[i] > pred[j] {
                    hits += 1.0;
                } else if pred[i] == pred[j] {
                    hits += tie;
                }
            }
        }
    }
    if pairs == 0 {
        return Err(Error::Undefined("concordance index without comparable pairs".into()));
    }
    Ok(hits / pairs as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse: f64,
    pub mae: f64,
    /// `None` when undefined (fewer than 2 samples or a constant side).
    pub pearson_r: Option<f64>,
    /// `None` when no pair of targets differs.
    pub ci: Option<f64>,
    pub n: usize,
}

impl MetricsReport {
    pub fn compute(pred: &[f64], target: &[f64], strict_ci: bool) -> Result<Self> {
        Ok(MetricsReport {
            rmse: rmse(pred, target)?,
            mae: mae(pred, target)?,
            pearson_r: pearson_r(pred, target).ok(),
            ci: concordance_index(pred, target, strict_ci).ok(),
            n: pred.len(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metrics serialise")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn smooth_l1_branches() {
        assert_eq!(smooth_l1(&[0.5, 1.5], &[0.0, 1.0]).unwrap(), 0.125);
        assert_eq!(smooth_l1(&[2.0], &[0.0]).unwrap(), 1.5);
        assert_eq!(smooth_l1(&[1.0], &[0.0]).unwrap(), 0.5);
        assert!(close(smooth_l1(&[1.0 + 1e-12], &[0.0]).unwrap(), 0.5, 1e-9));
        assert!(matches!(smooth_l1(&[], &[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn pearson_loss_cases() {
        let y = [1.0, 2.0, 4.0, 3.0];
        assert!(close(pearson_loss(&y, &y).unwrap(), 0.0, 1e-12));
        let neg: Vec<f64> = y.iter().map(|v| -(v - 2.5)).collect();
        let yc: Vec<f64> = y.iter().map(|v| v - 2.5).collect();
        assert!(close(pearson_loss(&neg, &yc).unwrap(), 2.0, 1e-12));
        let shifted: Vec<f64> = y.iter().map(|v| v + 7.0).collect();
        assert!(close(pearson_loss(&shifted, &y).unwrap(), 0.0, 1e-12));
        assert_eq!(pearson_loss(&[3.0; 4], &y).unwrap(), 1.0);
        assert_eq!(pearson_loss_grad(&[3.0; 4], &y).unwrap(), vec![0.0; 4]);
        assert!(pearson_loss(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn hybrid_cases() {
        let y = [0.3, -1.2, 2.0, 0.7];
        assert_eq!(hybrid_loss(&y, &y, 50.0).unwrap().total, 0.0);
        let p = [0.1, 0.4, 1.0, -0.3];
        let b = hybrid_loss(&p, &y, 0.0).unwrap();
        assert_eq!(b.total, smooth_l1(&p, &y).unwrap());
    }

    #[test]
    fn hybrid_gradient_matches_finite_differences() {
        let p: Vec<f64> = (0..16).map(|i| ((i * 7919) % 13) as f64 * 0.37 - 2.0).collect();
        let y: Vec<f64> = (0..16).map(|i| ((i * 104_729) % 17) as f64 * 0.21).collect();
        let (_, g) = hybrid_loss_grad(&p, &y, 50.0).unwrap();
        let h = 1e-6;
        for i in 0..16 {
            let mut a = p.clone();
            let mut b = p.clone();
            a[i] += h;
            b[i] -= h;
            let num = (hybrid_loss(&a, &y, 50.0).unwrap().total - hybrid_loss(&b, &y, 50.0).unwrap().total) / (2.0 * h);
            let rel = (g[i] - num).abs() / g[i].abs().max(num.abs()).max(1e-6);
            assert!(rel < 1e-5, "i={i} rel={rel}");
        }
    }

    #[test]
    fn metric_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!(close(rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 12.5f64.sqrt(), 1e-12));
        assert_eq!(mae(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 3.5);
        assert!(close(pearson_r(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0, 1e-12));
        assert!(close(concordance_index(&[1.0, 3.0, 2.0, 4.0], &[1.0, 2.0, 3.0, 4.0], false).unwrap(), 5.0 / 6.0, 1e-12));
        assert_eq!(concordance_index(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], false).unwrap(), 1.0);
        assert_eq!(concordance_index(&[3.0, 2.0, 1.0], &[1.0, 2.0, 3.0], false).unwrap(), 0.0);
        assert_eq!(concordance_index(&[5.0; 3], &[1.0, 2.0, 3.0], false).unwrap(), 0.5);
        assert_eq!(concordance_index(&[5.0; 3], &[1.0, 2.0, 3.0], true).unwrap(), 0.0);
        assert!(matches!(concordance_index(&[1.0, 2.0], &[1.0, 1.0], false), Err(Error::Undefined(_))));
    }

    #[test]
    fn report_json() {
        let r = MetricsReport::compute(&[1.0, 2.0, 3.0], &[1.0, 2.5, 2.9], false).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for k in ["rmse", "mae", "pearson_r", "ci", "n"] {
            assert!(v.get(k).is_some(), "{k}");
        }
    }
}
