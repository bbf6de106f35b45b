//! Stochastic Van der Pol oscillator
//!
//! ```text
//! dX1 = X2 dt
//! dX2 = (mu (1 - X1^2) X2 - X1) dt + sqrt(2 delta) dW
//! ```
//!
//! integrated with explicit Euler-Maruyama.

use std::f64::consts::PI;

use faer::{c64, Mat};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{standard_normal, SeedStream};
use crate::snapshots::{monte_carlo_weights, BatchedSnapshotSet};
use crate::{Error, Result};

const OVERFLOW: f64 = 1e8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VdpConfig {
    pub mu: f64,
    pub delta: f64,
    pub em_step: f64,
    pub koopman_dt: f64,
    /// Euler-Maruyama steps discarded before sampling. Defaults to 50
    /// periods of the deterministic limit cycle.
    #[serde(default)]
    pub burn_in: Option<usize>,
    pub seed: u64,
}

impl VdpConfig {
    /// Base frequency `1 - mu^2 / 16` of the limit cycle.
    pub fn omega0(&self) -> f64 {
        1.0 - self.mu * self.mu / 16.0
    }

    /// Euler-Maruyama steps per Koopman sampling interval.
    pub fn stride(&self) -> Result<usize> {
        if !(self.em_step > 0.0 && self.koopman_dt > 0.0) {
            return Err(Error::domain("em_step and koopman_dt must be positive"));
        }
        let ratio = self.koopman_dt / self.em_step;
        let k = ratio.round();
        if k < 1.0 || (ratio - k).abs() > 1e-9 * ratio {
            return Err(Error::domain(format!(
                "koopman_dt / em_step must be a positive integer, got {ratio}"
            )));
        }
        Ok(k as usize)
    }

    pub fn burn_in_steps(&self) -> usize {
        self.burn_in
            .unwrap_or_else(|| (50.0 * 2.0 * PI / self.omega0() / self.em_step).ceil() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::domain("mu must be positive"));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::domain("delta must be nonnegative"));
        }
        self.stride().map(|_| ())
    }
}

pub fn vdp_drift(state: [f64; 2], mu: f64) -> [f64; 2] {
    let [x1, x2] = state;
    [x2, mu * (1.0 - x1 * x1) * x2 - x1]
}

struct Integrator {
    mu: f64,
    h: f64,
    noise: f64,
}

impl Integrator {
    fn new(cfg: &VdpConfig) -> Self {
        Self { mu: cfg.mu, h: cfg.em_step, noise: (2.0 * cfg.delta).sqrt() * cfg.em_step.sqrt() }
    }

    fn advance(&self, mut state: [f64; 2], steps: usize, rng: &mut ChaCha20Rng) -> Result<[f64; 2]> {
        for _ in 0..steps {
            let d = vdp_drift(state, self.mu);
            let xi = standard_normal(rng);
            state = [state[0] + self.h * d[0], state[1] + self.h * d[1] + self.noise * xi];
        }
        if !(state[0].abs() < OVERFLOW && state[1].abs() < OVERFLOW) {
            return Err(Error::Instability(format!(
                "Euler-Maruyama diverged with step {}; try a smaller em_step",
                self.h
            )));
        }
        Ok(state)
    }
}

/// `n_samples` states spaced `koopman_dt` apart after the burn-in, as rows
/// of an `n_samples x 2` matrix. Noise comes from stream 0 of `"simulate"`.
pub fn vdp_em_trajectory(cfg: &VdpConfig, n_samples: usize, x0: [f64; 2]) -> Result<Mat<f64>> {
    cfg.validate()?;
    if n_samples == 0 {
        return Err(Error::domain("need at least one sample"));
    }
    let stride = cfg.stride()?;
    let integ = Integrator::new(cfg);
    let mut rng = SeedStream::new(cfg.seed, "simulate").stream(0);
    let mut state = x0;
    let burn = cfg.burn_in_steps();
    // Burn in chunk by chunk so divergence is caught early.
    let mut done = 0;
    while done < burn {
        let chunk = (burn - done).min(stride.max(1000));
        state = integ.advance(state, chunk, &mut rng)?;
        done += chunk;
    }
    let mut out = Mat::zeros(n_samples, 2);
    for m in 0..n_samples {
        if m > 0 {
            state = integ.advance(state, stride, &mut rng)?;
        }
        out[(m, 0)] = state[0];
        out[(m, 1)] = state[1];
    }
    Ok(out)
}

/// Trajectory samples from `x0 = (1, 0)`, each with two independent
/// one-interval evolutions (streams `2m` and `2m + 1` of `"batch"`).
pub fn vdp_batched_from_trajectory(cfg: &VdpConfig, m1: usize) -> Result<BatchedSnapshotSet> {
    let x = vdp_em_trajectory(cfg, m1, [1.0, 0.0])?;
    let stride = cfg.stride()?;
    let integ = Integrator::new(cfg);
    let family = SeedStream::new(cfg.seed, "batch");
    let images = (0..m1)
        .into_par_iter()
        .map(|m| -> Result<[[f64; 2]; 2]> {
            let start = [x[(m, 0)], x[(m, 1)]];
            let mut out = [[0.0; 2]; 2];
            for (k, slot) in out.iter_mut().enumerate() {
                let mut rng = family.stream((2 * m + k) as u64);
                *slot = integ.advance(start, stride, &mut rng)?;
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let realizations = (0..2).map(|k| Mat::from_fn(m1, 2, |m, c| images[m][k][c])).collect();
    BatchedSnapshotSet::new(x, realizations, monte_carlo_weights(m1)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatticePoint {
    pub m: usize,
    pub k: i64,
    pub value: c64,
}

/// `exp((-m mu + i k omega0) dt)` with `omega0 = 1 - mu^2 / 16`.
pub fn vdp_lattice(m: usize, k: i64, mu: f64, dt: f64) -> c64 {
    let omega0 = 1.0 - mu * mu / 16.0;
    (c64::new(-(m as f64) * mu, k as f64 * omega0) * dt).exp()
}

/// All lattice points with `m <= m_max`, `|k| <= k_max`.
pub fn lattice_points(mu: f64, dt: f64, m_max: usize, k_max: i64) -> Vec<LatticePoint> {
    let mut out = Vec::new();
    for m in 0..=m_max {
        for k in -k_max..=k_max {
            out.push(LatticePoint { m, k, value: vdp_lattice(m, k, mu, dt) });
        }
    }
    out
}

/// Nearest lattice point to `lambda` and the distance to it.
pub fn nearest_lattice(lambda: c64, points: &[LatticePoint]) -> Option<(LatticePoint, f64)> {
    points
        .iter()
        .map(|p| (*p, (p.value - lambda).norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(delta: f64) -> VdpConfig {
        VdpConfig { mu: 0.5, delta, em_step: 3e-3, koopman_dt: 0.3, burn_in: None, seed: 11 }
    }

    #[test]
    fn drift_examples() {
        assert_eq!(vdp_drift([0.0, 0.0], 0.5), [0.0, 0.0]);
        assert_eq!(vdp_drift([1.0, 1.0], 0.5), [1.0, -1.0]);
        assert_eq!(vdp_drift([0.0, 1.0], 0.5), [1.0, 0.5]);
    }

    #[test]
    fn lattice_examples() {
        assert_eq!(vdp_lattice(0, 0, 0.5, 0.3), c64::new(1.0, 0.0));
        let l01 = vdp_lattice(0, 1, 0.5, 0.3);
        assert!((l01 - c64::new(0.9567, 0.2911)).norm() < 1e-4);
        assert!((l01 - c64::new(0.956, 0.290)).norm() < 5e-3);
        let l10 = vdp_lattice(1, 0, 0.5, 0.3);
        assert!((l10.re - (-0.15f64).exp()).abs() < 1e-15);
        let pts = lattice_points(0.5, 0.3, 2, 3);
        assert_eq!(pts.len(), 3 * 7);
        let (p, d) = nearest_lattice(c64::new(0.95, 0.29), &pts).unwrap();
        assert_eq!((p.m, p.k), (0, 1));
        assert!(d < 0.01);
    }

    #[test]
    fn stride_validation() {
        assert_eq!(cfg(0.0).stride().unwrap(), 100);
        assert!(VdpConfig { koopman_dt: 0.301, ..cfg(0.0) }.stride().is_err());
        assert!(VdpConfig { em_step: 0.0, ..cfg(0.0) }.stride().is_err());
    }

    #[test]
    fn deterministic_limit_cycle() {
        let c = VdpConfig { em_step: 1e-3, koopman_dt: 0.1, ..cfg(0.0) };
        let traj = vdp_em_trajectory(&c, 2000, [0.1, 0.0]).unwrap();
        let radius = |m: usize| (traj[(m, 0)].powi(2) + traj[(m, 1)].powi(2)).sqrt();
        let period = (2.0 * PI / c.omega0() / 0.1).round() as usize;
        let max_over = |start: usize| (start..start + period).map(radius).fold(0.0, f64::max);
        let first = max_over(0);
        let later = max_over(2000 - period - 1);
        assert!((first - later).abs() < 1e-2, "{first} vs {later}");
        assert!(first > 1.5 && first < 2.5);
    }

    #[test]
    fn noise_free_em_is_euler() {
        let c = VdpConfig { burn_in: Some(0), ..cfg(0.0) };
        let traj = vdp_em_trajectory(&c, 2, [1.0, 0.0]).unwrap();
        let mut s = [1.0, 0.0];
        for _ in 0..100 {
            let d = vdp_drift(s, 0.5);
            s = [s[0] + 3e-3 * d[0], s[1] + 3e-3 * d[1]];
        }
        assert_eq!([traj[(1, 0)], traj[(1, 1)]], s);
    }

    #[test]
    fn batched_realizations() {
        let noisy = vdp_batched_from_trajectory(&VdpConfig { burn_in: Some(1000), ..cfg(0.02) }, 20).unwrap();
        assert_eq!(noisy.realization_count(), 2);
        assert_ne!(noisy.realizations()[0], noisy.realizations()[1]);
        let again = vdp_batched_from_trajectory(&VdpConfig { burn_in: Some(1000), ..cfg(0.02) }, 20).unwrap();
        assert_eq!(noisy.realizations(), again.realizations());
        let quiet = vdp_batched_from_trajectory(&VdpConfig { burn_in: Some(1000), ..cfg(0.0) }, 20).unwrap();
        assert_eq!(quiet.realizations()[0], quiet.realizations()[1]);
    }

    #[test]
    fn divergence_is_reported() {
        let c = VdpConfig { mu: 50.0, em_step: 0.5, koopman_dt: 0.5, burn_in: Some(200), ..cfg(0.0) };
        assert!(matches!(vdp_em_trajectory(&c, 5, [3.0, 3.0]), Err(Error::Instability(_))));
    }
}
