//! Pseudospectra and variance-pseudospectra over complex grids.
//!
//! At each grid point `z` the smallest value of
//!
//! ```text
//! g^* [S - z A^* - conj(z) A + |z|^2 G] g / g^* G g
//! ```
//!
//! is found, with `S = H` for the residual and `S = L` for the variance
//! residual. The Gram matrix is factored once and every grid point reduces
//! to a Hermitian eigenproblem in whitened coordinates.

use std::io::Write;

use faer::{c64, Col, Mat};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{adjoint, hermitian_eigen, quad_form, scaled_col, Whitening};
use crate::matrices::KoopmanMatrices;
use crate::spectral::RegularizationPolicy;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    Residual,
    VarianceResidual,
}

impl ResidualKind {
    pub fn name(self) -> &'static str {
        match self {
            ResidualKind::Residual => "residual",
            ResidualKind::VarianceResidual => "variance_residual",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GridProvenance {
    Default { n: usize },
    Rectangle { re: (f64, f64), im: (f64, f64), steps: (usize, usize) },
    Explicit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexGrid {
    points: Vec<c64>,
    provenance: GridProvenance,
}

impl ComplexGrid {
    /// `(1/N)(Z + iZ)` restricted to the disk `|z| <= N`, ordered by
    /// imaginary part and then real part.
    pub fn default_grid(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("default grid needs N >= 1"));
        }
        let r = (n * n) as i64;
        let mut points = Vec::new();
        for b in -r..=r {
            for a in -r..=r {
                if a * a + b * b <= r * r {
                    points.push(c64::new(a as f64 / n as f64, b as f64 / n as f64));
                }
            }
        }
        Ok(Self { points, provenance: GridProvenance::Default { n } })
    }

    /// `steps.0 x steps.1` points including both endpoints of each range.
    pub fn rectangle(re: (f64, f64), im: (f64, f64), steps: (usize, usize)) -> Result<Self> {
        let finite = [re.0, re.1, im.0, im.1].iter().all(|v| v.is_finite());
        if !finite || steps.0 == 0 || steps.1 == 0 {
            return Err(Error::domain("rectangle grid needs finite ranges and at least one step per axis"));
        }
        let axis = |lo: f64, hi: f64, k: usize| -> Vec<f64> {
            if k == 1 {
                vec![lo]
            } else {
                (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
            }
        };
        let xs = axis(re.0, re.1, steps.0);
        let ys = axis(im.0, im.1, steps.1);
        let points = ys.iter().flat_map(|&y| xs.iter().map(move |&x| c64::new(x, y))).collect();
        Ok(Self { points, provenance: GridProvenance::Rectangle { re, im, steps } })
    }

    pub fn explicit(points: Vec<c64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::domain("grid is empty"));
        }
        if points.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::domain("grid contains non-finite points"));
        }
        Ok(Self { points, provenance: GridProvenance::Explicit })
    }

    pub fn points(&self) -> &[c64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn provenance(&self) -> &GridProvenance {
        &self.provenance
    }
}

/// Whitened pencil data shared by all grid points.
pub struct Pencil {
    whitening: Whitening,
    s: Mat<c64>,
    a: Mat<c64>,
    a_adj: Mat<c64>,
    g: Mat<c64>,
    kind: ResidualKind,
}

impl Pencil {
    pub fn new(mats: &KoopmanMatrices, kind: ResidualKind, reg: &RegularizationPolicy) -> Result<Self> {
        let s = match kind {
            ResidualKind::Residual => mats.require_h()?,
            ResidualKind::VarianceResidual => mats.l(),
        };
        let whitening = reg.whiten(mats)?;
        let a = whitening.project(mats.a());
        Ok(Self {
            s: whitening.project(s),
            a_adj: adjoint(a.as_ref()),
            a,
            g: mats.g().to_owned(),
            whitening,
            kind,
        })
    }

    pub fn kind(&self) -> ResidualKind {
        self.kind
    }

    /// Minimal residual at `z` and a Gram-normalized minimizer.
    pub fn evaluate(&self, z: c64) -> Result<(f64, Col<c64>)> {
        let k = self.whitening.rank();
        let zz = z.norm_sqr();
        let d = Mat::from_fn(k, k, |i, j| {
            let mut v = self.s[(i, j)] - z * self.a_adj[(i, j)] - z.conj() * self.a[(i, j)];
            if i == j {
                v += c64::new(zz, 0.0);
            }
            v
        });
        let d = crate::linalg::hermitian_part(d.as_ref());
        let (vals, vecs) = hermitian_eigen(d.as_ref())?;
        let mut g = self.whitening.lift(vecs.col(0));
        let norm = quad_form(self.g.as_ref(), g.as_ref()).re;
        if norm > 0.0 {
            g = scaled_col(g.as_ref(), 1.0 / norm.sqrt());
        }
        Ok((vals[0].max(0.0).sqrt(), g))
    }
}

pub fn min_residual(
    z: c64,
    mats: &KoopmanMatrices,
    kind: ResidualKind,
    reg: &RegularizationPolicy,
) -> Result<(f64, Col<c64>)> {
    Pencil::new(mats, kind, reg)?.evaluate(z)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PseudospectrumGrid {
    pub grid: ComplexGrid,
    pub values: Vec<f64>,
    pub minimizers: Vec<Col<c64>>,
    pub kind: ResidualKind,
    pub epsilon: f64,
}

impl PseudospectrumGrid {
    /// Whether `r < epsilon` at each point.
    pub fn flagged(&self) -> Vec<bool> {
        self.values.iter().map(|&r| r < self.epsilon).collect()
    }

    /// `re(z),im(z),r,flagged` with `flagged` as 0/1.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "re(z),im(z),r,flagged")?;
        for ((z, r), f) in self.grid.points().iter().zip(&self.values).zip(self.flagged()) {
            writeln!(out, "{:.16e},{:.16e},{:.16e},{}", z.re, z.im, r, u8::from(f))?;
        }
        Ok(())
    }

    pub fn sidecar(&self, dictionary: &str) -> GridSidecar {
        GridSidecar {
            kind: self.kind,
            epsilon: self.epsilon,
            dictionary_size: self.minimizers.first().map_or(0, |g| g.nrows()),
            dictionary: dictionary.to_string(),
            points: self.grid.len(),
            grid: self.grid.provenance().clone(),
        }
    }
}

/// JSON metadata written next to a grid CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSidecar {
    pub kind: ResidualKind,
    pub epsilon: f64,
    #[serde(rename = "N")]
    pub dictionary_size: usize,
    pub dictionary: String,
    pub points: usize,
    pub grid: GridProvenance,
}

pub fn pseudospectrum(
    grid: &ComplexGrid,
    mats: &KoopmanMatrices,
    epsilon: f64,
    kind: ResidualKind,
    reg: &RegularizationPolicy,
) -> Result<PseudospectrumGrid> {
    if !(epsilon > 0.0) {
        return Err(Error::domain(format!("epsilon must be positive, got {epsilon}")));
    }
    let pencil = Pencil::new(mats, kind, reg)?;
    let results = grid
        .points()
        .par_iter()
        .map(|&z| pencil.evaluate(z))
        .collect::<Result<Vec<_>>>()?;
    let (values, minimizers) = results.into_iter().unzip();
    Ok(PseudospectrumGrid { grid: grid.clone(), values, minimizers, kind, epsilon })
}
