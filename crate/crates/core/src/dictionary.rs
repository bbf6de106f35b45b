//! Observable dictionaries and their feature matrices.

use std::f64::consts::PI;

use faer::{c64, Mat, MatRef};
use rayon::prelude::*;

use crate::{Error, Result};

const ROW_CHUNK: usize = 1024;

#[derive(Clone, Debug, PartialEq)]
enum Basis {
    /// `exp(2*pi*i*j*x/period)` for `j = -n..=n` on a one-dimensional state.
    Fourier { n: usize, period: f64 },
    /// `exp(-|x - center_k| / scale)`.
    LaplacianRbf { centers: Mat<f64>, scale: f64 },
}

/// A finite set of observables `psi_1..psi_N` together with the constants the
/// concentration bounds need: per-function Lipschitz constants and sup norms.
#[derive(Clone, Debug, PartialEq)]
pub struct Dictionary {
    basis: Basis,
    lipschitz: Vec<f64>,
    sup_norms: Vec<f64>,
    labels: Vec<String>,
}

impl Dictionary {
    /// Fourier modes ordered `j = -n, ..., n`.
    pub fn fourier(n: usize, period: f64) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::domain(format!("period must be positive, got {period}")));
        }
        let modes = -(n as i64)..=(n as i64);
        let lipschitz = modes.clone().map(|j| 2.0 * PI * j.unsigned_abs() as f64 / period).collect();
        let labels = modes.map(|j| format!("fourier[{j}]")).collect();
        Ok(Self {
            basis: Basis::Fourier { n, period },
            lipschitz,
            sup_norms: vec![1.0; 2 * n + 1],
            labels,
        })
    }

    /// Laplacian radial basis functions around the rows of `centers`.
    pub fn laplacian_rbf(centers: Mat<f64>, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::domain(format!("rbf scale must be positive, got {scale}")));
        }
        let n = centers.nrows();
        if n == 0 || centers.ncols() == 0 {
            return Err(Error::domain("rbf dictionary needs at least one center"));
        }
        for i in 0..n {
            for j in 0..i {
                if (0..centers.ncols()).all(|c| centers[(i, c)] == centers[(j, c)]) {
                    return Err(Error::domain(format!(
                        "duplicate rbf centers {j} and {i} make the Gram matrix singular"
                    )));
                }
            }
        }
        Ok(Self {
            basis: Basis::LaplacianRbf { centers, scale },
            lipschitz: vec![1.0 / scale; n],
            sup_norms: vec![1.0; n],
            labels: (0..n).map(|k| format!("rbf[{k}]")).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Dimension of the state space the observables act on.
    pub fn domain_dim(&self) -> usize {
        match &self.basis {
            Basis::Fourier { .. } => 1,
            Basis::LaplacianRbf { centers, .. } => centers.ncols(),
        }
    }

    pub fn lipschitz(&self) -> &[f64] {
        &self.lipschitz
    }

    pub fn sup_norms(&self) -> &[f64] {
        &self.sup_norms
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Short description, e.g. `fourier(n=20,period=1)`.
    pub fn describe(&self) -> String {
        match &self.basis {
            Basis::Fourier { n, period } => format!("fourier(n={n},period={period})"),
            Basis::LaplacianRbf { centers, scale } => {
                format!("laplacian_rbf(centers={},scale={scale})", centers.nrows())
            }
        }
    }

    /// Evaluate the feature map at one state; `out.len()` must equal `len()`.
    pub fn evaluate_into(&self, x: &[f64], out: &mut [c64]) {
        debug_assert_eq!(out.len(), self.len());
        match &self.basis {
            Basis::Fourier { n, period } => {
                let n = *n;
                out[n] = c64::new(1.0, 0.0);
                for j in 1..=n {
                    // reduce the phase before scaling so exact half-turns stay exact
                    let turns = (j as f64 * x[0] / period).rem_euclid(1.0);
                    let (s, c) = (2.0 * PI * turns).sin_cos();
                    out[n + j] = c64::new(c, s);
                    out[n - j] = c64::new(c, -s);
                }
            }
            Basis::LaplacianRbf { centers, scale } => {
                for (k, o) in out.iter_mut().enumerate() {
                    let dist2: f64 = x.iter().enumerate().map(|(c, v)| (v - centers[(k, c)]).powi(2)).sum();
                    *o = c64::new((-dist2.sqrt() / scale).exp(), 0.0);
                }
            }
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Vec<c64> {
        let mut out = vec![c64::new(0.0, 0.0); self.len()];
        self.evaluate_into(x, &mut out);
        out
    }

    /// Feature matrix with row `m` equal to `Psi(points[m])^T`.
    pub fn evaluate_matrix(&self, points: MatRef<'_, f64>) -> Result<Mat<c64>> {
        if points.ncols() != self.domain_dim() {
            return Err(Error::domain(format!(
                "points have dimension {}, dictionary expects {}",
                points.ncols(),
                self.domain_dim()
            )));
        }
        let m = points.nrows();
        let n = self.len();
        let chunks: Vec<Vec<c64>> = (0..m.div_ceil(ROW_CHUNK))
            .into_par_iter()
            .map(|chunk| {
                let start = chunk * ROW_CHUNK;
                let end = (start + ROW_CHUNK).min(m);
                let mut vals = vec![c64::new(0.0, 0.0); (end - start) * n];
                let mut x = vec![0.0; points.ncols()];
                for (r, row) in (start..end).zip(vals.chunks_mut(n)) {
                    for (c, v) in x.iter_mut().enumerate() {
                        *v = points[(r, c)];
                    }
                    self.evaluate_into(&x, row);
                }
                vals
            })
            .collect();
        let mut out = Mat::zeros(m, n);
        for (chunk, vals) in chunks.iter().enumerate() {
            for (i, row) in vals.chunks(n).enumerate() {
                for (k, v) in row.iter().enumerate() {
                    out[(chunk * ROW_CHUNK + i, k)] = *v;
                }
            }
        }
        Ok(out)
    }
}

/// Median of all pairwise Euclidean distances between rows.
pub fn median_pairwise_distance(points: MatRef<'_, f64>) -> Result<f64> {
    let n = points.nrows();
    if n < 2 {
        return Err(Error::domain("median distance needs at least two points"));
    }
    let mut d: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in 0..i {
            d.push(row_distance(points, i, points, j));
        }
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    Ok(if d.len() % 2 == 1 { d[mid] } else { 0.5 * (d[mid - 1] + d[mid]) })
}

fn row_distance(a: MatRef<'_, f64>, i: usize, b: MatRef<'_, f64>, j: usize) -> f64 {
    (0..a.ncols()).map(|c| (a[(i, c)] - b[(j, c)]).powi(2)).sum::<f64>().sqrt()
}

/// Greedy farthest-point selection of `n` rows, starting from the first row.
///
/// Each step adds the row farthest from the current selection. Ties are
/// broken by a seeded permutation of the row order, so the result is a
/// deterministic function of `(trajectory, n, seed)`.
pub fn pick_centers(trajectory: MatRef<'_, f64>, n: usize, seed: u64) -> Result<Mat<f64>> {
    let m = trajectory.nrows();
    if n == 0 || m < n {
        return Err(Error::domain(format!("cannot pick {n} centers from {m} points")));
    }
    let mut order: Vec<usize> = (0..m).collect();
    {
        use rand::seq::SliceRandom;
        let mut rng = crate::rng::SeedStream::new(seed, "centers").stream(0);
        order.shuffle(&mut rng);
    }
    let mut chosen = vec![0usize];
    let mut dist: Vec<f64> = (0..m).map(|r| row_distance(trajectory, r, trajectory, 0)).collect();
    while chosen.len() < n {
        let mut best = None;
        let mut best_d = 0.0;
        for &r in &order {
            if dist[r] > best_d {
                best_d = dist[r];
                best = Some(r);
            }
        }
        let Some(next) = best else {
            return Err(Error::domain(format!(
                "trajectory has fewer than {n} distinct points"
            )));
        };
        chosen.push(next);
        for r in 0..m {
            dist[r] = dist[r].min(row_distance(trajectory, r, trajectory, next));
        }
    }
    Ok(Mat::from_fn(n, trajectory.ncols(), |i, c| trajectory[(chosen[i], c)]))
}
