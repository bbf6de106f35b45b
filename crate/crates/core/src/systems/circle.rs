//! Noisy circle map `x -> x + c + amp sin(2 pi x) + tau (mod 1)` with
//! `tau ~ U[0, noise_sigma]`.
//!
//! For `amp = 0` the Fourier modes `e^{2 pi i j x}` are eigenfunctions with
//! eigenvalues `alpha_j` and the Galerkin matrices are known in closed form.

use std::f64::consts::PI;

use faer::{c64, Mat};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::matrices::{AssemblyMeta, KoopmanMatrices};
use crate::rng::{uniform, SeedStream};
use crate::snapshots::{periodic_trapezoid_weights, BatchedSnapshotSet, SnapshotSet};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircleMapConfig {
    pub c: f64,
    #[serde(default)]
    pub amp: f64,
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    pub seed: u64,
}

fn default_sigma() -> f64 {
    1.0
}

impl CircleMapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma > 0.0 && self.noise_sigma <= 1.0) {
            return Err(Error::domain(format!("noise_sigma must lie in (0, 1], got {}", self.noise_sigma)));
        }
        if !(self.c.is_finite() && self.amp.is_finite()) {
            return Err(Error::domain("circle map parameters must be finite"));
        }
        Ok(())
    }
}

pub fn circle_step(x: f64, tau: f64, cfg: &CircleMapConfig) -> f64 {
    let y = (x + cfg.c + cfg.amp * (2.0 * PI * x).sin() + tau).rem_euclid(1.0);
    // rem_euclid can round up to exactly 1.0 for tiny negative inputs.
    if y >= 1.0 {
        0.0
    } else {
        y
    }
}

/// `alpha_j = e^{2 pi i j c} (e^{2 pi i j sigma} - 1) / (2 pi i j sigma)`, `alpha_0 = 1`.
pub fn circle_alpha(j: i64, cfg: &CircleMapConfig) -> c64 {
    if j == 0 {
        return c64::new(1.0, 0.0);
    }
    let theta = 2.0 * PI * j as f64 * cfg.noise_sigma;
    let rotation = c64::cis(2.0 * PI * j as f64 * cfg.c);
    // (e^{i theta} - 1) / (i theta) = (sin theta + i (1 - cos theta)) / theta
    let noise = c64::new(theta.sin() / theta, (1.0 - theta.cos()) / theta);
    rotation * noise
}

/// One-step variance of the mode `e^{2 pi i j x}`: `1 - |alpha_j|^2`.
pub fn circle_variance(j: i64, cfg: &CircleMapConfig) -> f64 {
    1.0 - circle_alpha(j, cfg).norm_sqr()
}

/// Lipschitz constant of `(x, tau) -> F(x, tau)` in the Euclidean norm,
/// ignoring the wrap-around.
pub fn circle_lipschitz(cfg: &CircleMapConfig) -> f64 {
    let dx = 1.0 + 2.0 * PI * cfg.amp.abs();
    (dx * dx + 1.0).sqrt()
}

/// `M1` equispaced states with trapezoid weights, each pushed forward by
/// `M2` independent noise draws. Realization `k` uses stream `k` of the
/// `"simulate"` family.
pub fn generate_circle_batched(cfg: &CircleMapConfig, m1: usize, m2: usize) -> Result<BatchedSnapshotSet> {
    cfg.validate()?;
    if m1 == 0 || m2 == 0 {
        return Err(Error::domain("M1 and M2 must be at least 1"));
    }
    let xs: Vec<f64> = (0..m1).map(|j| j as f64 / m1 as f64).collect();
    let family = SeedStream::new(cfg.seed, "simulate");
    let realizations: Vec<Mat<f64>> = (0..m2)
        .into_par_iter()
        .map(|k| {
            let mut rng = family.stream(k as u64);
            Mat::from_fn(m1, 1, |j, _| circle_step(xs[j], cfg.noise_sigma * uniform(&mut rng), cfg))
        })
        .collect();
    let x = Mat::from_fn(m1, 1, |j, _| xs[j]);
    BatchedSnapshotSet::new(x, realizations, periodic_trapezoid_weights(m1, 1.0)?)
}

/// `m` i.i.d. pairs with `x ~ U[0, 1)` and weights `1/m`, drawn from stream
/// `index` of the `"iid"` family. Also returns the noise draws.
pub fn generate_circle_iid(cfg: &CircleMapConfig, m: usize, index: u64) -> Result<(SnapshotSet, Vec<f64>)> {
    cfg.validate()?;
    if m == 0 {
        return Err(Error::domain("sample count must be at least 1"));
    }
    let mut rng = SeedStream::new(cfg.seed, "iid").stream(index);
    let mut xs = Vec::with_capacity(m);
    let mut taus = Vec::with_capacity(m);
    for _ in 0..m {
        xs.push(uniform(&mut rng));
        taus.push(cfg.noise_sigma * uniform(&mut rng));
    }
    let x = Mat::from_fn(m, 1, |i, _| xs[i]);
    let y = Mat::from_fn(m, 1, |i, _| circle_step(xs[i], taus[i], cfg));
    Ok((SnapshotSet::with_uniform_weights(x, y)?, taus))
}

/// Exact matrices for the Fourier dictionary with modes `-n..=n` and the
/// uniform measure: `G = L = I`, `A = diag(alpha_j)`, `H = diag|alpha_j|^2`.
/// Only defined for `amp = 0`.
pub fn circle_reference(cfg: &CircleMapConfig, n: usize) -> Result<KoopmanMatrices> {
    cfg.validate()?;
    if cfg.amp != 0.0 {
        return Err(Error::domain("closed-form matrices need amp = 0"));
    }
    let modes: Vec<i64> = (-(n as i64)..=n as i64).collect();
    let size = modes.len();
    let diag = |f: &dyn Fn(i64) -> c64| Mat::from_fn(size, size, |i, j| if i == j { f(modes[i]) } else { c64::new(0.0, 0.0) });
    let one = diag(&|_| c64::new(1.0, 0.0));
    let a = diag(&|j| circle_alpha(j, cfg));
    let h = diag(&|j| c64::new(circle_alpha(j, cfg).norm_sqr(), 0.0));
    let meta = AssemblyMeta {
        states: 0,
        realizations: 0,
        labels: modes.iter().map(|j| format!("fourier[{j}]")).collect(),
        estimator: "closed form".into(),
    };
    KoopmanMatrices::new(one.clone(), a, one, Some(h), meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::Dictionary;
    use crate::matrices::{assemble_batched, estimation_error};

    fn cfg(c: f64, sigma: f64) -> CircleMapConfig {
        CircleMapConfig { c, amp: 0.0, noise_sigma: sigma, seed: 7 }
    }

    #[test]
    fn step_examples() {
        let c = cfg(0.2, 1.0);
        assert!((circle_step(0.9, 0.0, &c) - 0.1).abs() < 1e-15);
        assert_eq!(circle_step(0.0, 0.8, &c), 0.0);
        let perturbed = CircleMapConfig { c: 0.2, amp: 1.0 / (4.0 * PI), noise_sigma: 1.0, seed: 0 };
        assert!((circle_step(0.0, 0.3, &perturbed) - 0.5).abs() < 1e-15);
        assert!(circle_step(0.0, -1e-18, &cfg(0.0, 1.0)) < 1.0);
    }

    #[test]
    fn alpha_examples() {
        let c = cfg(0.2, 1.0);
        assert_eq!(circle_alpha(0, &c), c64::new(1.0, 0.0));
        for j in [-3, -1, 1, 2, 5] {
            assert!(circle_alpha(j, &c).norm() < 1e-15);
            assert!((circle_variance(j, &c) - 1.0).abs() < 1e-15);
        }
        assert_eq!(circle_variance(0, &c), 0.0);
        let half = cfg(0.2, 0.5);
        let expected = c64::cis(2.0 * PI / 5.0) * c64::new(0.0, 2.0 / PI);
        assert!((circle_alpha(1, &half) - expected).norm() < 1e-15);
        assert!((circle_alpha(1, &half).norm() - 0.6366).abs() < 1e-4);
        assert!((circle_variance(1, &half) - (1.0 - 4.0 / (PI * PI))).abs() < 1e-15);
        assert!((circle_alpha(-2, &half) - circle_alpha(2, &half).conj()).norm() < 1e-15);
    }

    #[test]
    fn generation_is_reproducible() {
        let c = cfg(0.2, 0.5);
        let a = generate_circle_batched(&c, 16, 5).unwrap();
        let b = generate_circle_batched(&c, 16, 5).unwrap();
        assert_eq!(a.realizations(), b.realizations());
        assert_eq!(a.realization_count(), 5);
        let one = generate_circle_batched(&c, 16, 1).unwrap();
        let dict = Dictionary::fourier(2, 1.0).unwrap();
        assert!(assemble_batched(&one, &dict).is_err());
        let (s, taus) = generate_circle_iid(&c, 50, 3).unwrap();
        assert_eq!(s.len(), 50);
        assert!(taus.iter().all(|&t| (0.0..0.5).contains(&t)));
        assert!(CircleMapConfig { noise_sigma: 0.0, ..c }.validate().is_err());
    }

    #[test]
    fn assembled_matrices_approach_reference() {
        let c = cfg(0.2, 0.5);
        let dict = Dictionary::fourier(3, 1.0).unwrap();
        let reference = circle_reference(&c, 3).unwrap();
        let data = generate_circle_batched(&c, 64, 4000).unwrap();
        let k = assemble_batched(&data, &dict).unwrap();
        let e = estimation_error(&k, &reference).unwrap();
        assert!(e.g < 1e-12, "{e:?}");
        let tol = 5.0 / 4000f64.sqrt();
        assert!(e.a < tol && e.l < tol && e.h.unwrap() < tol, "{e:?}");
        let cov = crate::spectral::covariance_matrix(&k).unwrap();
        for (i, j) in (-3i64..=3).enumerate() {
            assert!((cov[(i, i)].re - circle_variance(j, &c)).abs() < tol);
        }
        assert!(circle_reference(&CircleMapConfig { amp: 0.1, ..c }, 2).is_err());
    }
}
