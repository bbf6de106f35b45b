//! Concentration bounds for the Monte Carlo estimates of `A`, `G` and `L`
//! under i.i.d. state sampling.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::{Error, Result};

/// `(alpha, beta)` with `alpha = sqrt(sum c_k^2)` over Lipschitz constants and
/// `beta = sqrt(sum |psi_k|_inf^2)`.
pub fn dictionary_constants(dict: &Dictionary) -> Result<(f64, f64)> {
    let lip = dict.lipschitz();
    let sup = dict.sup_norms();
    if lip.iter().chain(sup).any(|v| !v.is_finite()) {
        return Err(Error::domain("dictionary constants must be finite"));
    }
    let alpha = lip.iter().map(|c| c * c).sum::<f64>().sqrt();
    let beta = sup.iter().map(|s| s * s).sum::<f64>().sqrt();
    Ok((alpha, beta))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationInputs {
    /// Number of i.i.d. samples.
    pub m: usize,
    /// Dictionary size.
    pub n: usize,
    pub t: f64,
    pub upsilon: f64,
    /// Lipschitz constant of the dynamics in `(x, tau)`.
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl ConcentrationInputs {
    fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::domain("M and N must be at least 1"));
        }
        for (name, v) in [("t", self.t), ("upsilon", self.upsilon), ("c", self.c), ("alpha", self.alpha), ("beta", self.beta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}

/// Lower bounds on `P(|X~ - X|_Fr < t)`. Values below zero are returned as is.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationBounds {
    pub p_a: f64,
    pub p_g: f64,
    pub p_l: f64,
}

impl ConcentrationBounds {
    /// True when any of the three bounds carries no information.
    pub fn vacuous(&self) -> bool {
        self.p_a <= 0.0 || self.p_g <= 0.0 || self.p_l <= 0.0
    }
}

pub fn concentration_bounds(inp: &ConcentrationInputs) -> Result<ConcentrationBounds> {
    inp.validate()?;
    let lead = 2.0 * (2.0 * inp.n as f64).ln();
    let mt2 = inp.m as f64 * inp.t * inp.t;
    let ab = inp.upsilon * inp.upsilon * inp.alpha * inp.alpha * inp.beta * inp.beta;
    let bound = |denominator: f64| 1.0 - (lead - mt2 / denominator).exp();
    Ok(ConcentrationBounds {
        p_a: bound(24.0 * (inp.c * inp.c + 1.0) * ab),
        p_g: bound(48.0 * ab),
        p_l: bound(48.0 * inp.c * inp.c * ab),
    })
}

/// Sub-Gaussian scale of a sample of `kappa` vectors: the smallest `s` with
/// `exp(E|k - Ek|^2 / s^2) E[exp(|k - Ek|^2 / s^2)] <= 2`, expectations
/// replaced by sample means and `s` found by bisection.
pub fn estimate_upsilon(samples: &[Vec<f64>]) -> Result<f64> {
    let first = samples.first().ok_or_else(|| Error::domain("no samples"))?;
    let dim = first.len();
    if dim == 0 || samples.iter().any(|s| s.len() != dim || s.iter().any(|v| !v.is_finite())) {
        return Err(Error::domain("samples must be finite vectors of equal nonzero length"));
    }
    let count = samples.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|k| samples.iter().map(|s| s[k]).sum::<f64>() / count).collect();
    let d: Vec<f64> = samples
        .iter()
        .map(|s| s.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect();
    let v = d.iter().sum::<f64>() / count;
    let dmax = d.iter().cloned().fold(0.0, f64::max);
    if dmax == 0.0 {
        return Err(Error::domain("samples are all identical"));
    }
    // log of the criterion, with a log-mean-exp for stability.
    let log_phi = |s: f64| {
        let inv = 1.0 / (s * s);
        let log_mean = dmax * inv + (d.iter().map(|&x| ((x - dmax) * inv).exp()).sum::<f64>() / count).ln();
        v * inv + log_mean
    };
    let target = 2f64.ln();
    let mut hi = dmax.sqrt();
    while log_phi(hi) > target {
        hi *= 2.0;
    }
    let mut lo = hi / 2.0;
    while log_phi(lo) <= target {
        lo /= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if log_phi(mid) <= target {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(hi)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundsRow {
    pub m: usize,
    pub t: f64,
    pub bounds: ConcentrationBounds,
}

/// Bounds for every `(M, t)` pair, `M` outermost.
pub fn bounds_table(base: &ConcentrationInputs, ms: &[usize], ts: &[f64]) -> Result<Vec<BoundsRow>> {
    let mut rows = Vec::with_capacity(ms.len() * ts.len());
    for &m in ms {
        for &t in ts {
            let bounds = concentration_bounds(&ConcentrationInputs { m, t, ..*base })?;
            rows.push(BoundsRow { m, t, bounds });
        }
    }
    Ok(rows)
}

/// `M,t,p_A,p_G,p_L,vacuous`.
pub fn write_bounds_csv<W: Write>(rows: &[BoundsRow], mut out: W) -> Result<()> {
    writeln!(out, "M,t,p_A,p_G,p_L,vacuous")?;
    for r in rows {
        let b = &r.bounds;
        writeln!(out, "{},{:.16e},{:.16e},{:.16e},{:.16e},{}", r.m, r.t, b.p_a, b.p_g, b.p_l, b.vacuous())?;
    }
    Ok(())
}
