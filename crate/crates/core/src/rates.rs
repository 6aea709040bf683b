//! Log-log convergence rates.

use serde::{Deserialize, Serialize};

/// Least-squares slope of `ln y` against `ln x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Rate {
    Defined { slope: f64 },
    Undefined { reason: String },
}

impl Rate {
    pub fn slope(&self) -> Option<f64> {
        match self {
            Rate::Defined { slope } => Some(*slope),
            Rate::Undefined { .. } => None,
        }
    }

    pub fn at_least(&self, threshold: f64) -> bool {
        self.slope().is_some_and(|s| s >= threshold)
    }
}

impl std::fmt::Display for Rate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rate::Defined { slope } => write!(f, "{slope:.4}"),
            Rate::Undefined { reason } => write!(f, "undefined ({reason})"),
        }
    }
}

pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Rate {
    let undefined = |reason: &str| Rate::Undefined { reason: reason.into() };
    if xs.len() != ys.len() || xs.len() < 2 {
        return undefined("need at least two paired samples");
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0 && v.is_finite())) {
        return undefined("samples must be positive and finite");
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-24 * (1.0 + mx * mx) {
        return undefined("sweep parameter does not vary");
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Rate::Defined { slope: sxy / sxx }
}

/// `log2(e_k / e_{k+1})` for a sequence refined by factors of two.
pub fn halving_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}
