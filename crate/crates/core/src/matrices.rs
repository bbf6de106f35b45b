//! Galerkin estimates of the Koopman operator from snapshot data.
//!
//! For feature matrices `PsiX`, `PsiY` and weights `W = diag(w)`:
//!
//! ```text
//! G = PsiX^* W PsiX      A = PsiX^* W PsiY      L = PsiY^* W PsiY
//! ```
//!
//! With two independent realizations per state the cross-realization
//! matrix `H = [PsiY1^* W PsiY2 + PsiY2^* W PsiY1] / 2` estimates `K^* K`
//! without the variance that `L` carries. With `M2 > 2` realizations, `A`
//! and `L` average over all realizations and `H` over all ordered pairs of
//! distinct realizations.
//!
//! Snapshot rows are split into fixed-size blocks, each block produces a
//! partial sum, and partials are combined in a fixed binary tree. Results
//! are therefore identical for any thread count.

use std::io::{Read, Write};

use faer::{c64, Mat, MatRef};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::linalg::{frobenius_norm, hermitian_part, scaled, weighted_cross, ZERO};
use crate::snapshots::{BatchedSnapshotSet, SnapshotSet};
use crate::{Error, Result};

/// Snapshot rows (counting every realization) per reduction block.
const BLOCK_ROWS: usize = 2048;

const MAGIC: &[u8; 8] = b"KOOPMAT1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssemblyMeta {
    /// Number of states (`M` unbatched, `M1` batched).
    pub states: usize,
    /// Realizations per state; 1 for unbatched data.
    pub realizations: usize,
    pub labels: Vec<String>,
    /// How `A`, `L`, `H` were averaged over realizations.
    pub estimator: String,
}

/// The quadruple `(G, A, L, H)` with `H` present only for batched data.
#[derive(Clone, Debug, PartialEq)]
pub struct KoopmanMatrices {
    g: Mat<c64>,
    a: Mat<c64>,
    l: Mat<c64>,
    h: Option<Mat<c64>>,
    meta: AssemblyMeta,
}

impl KoopmanMatrices {
    /// Wrap externally computed matrices (analytic references, loaded files).
    pub fn new(g: Mat<c64>, a: Mat<c64>, l: Mat<c64>, h: Option<Mat<c64>>, meta: AssemblyMeta) -> Result<Self> {
        let n = g.nrows();
        let square = |m: &Mat<c64>| m.nrows() == n && m.ncols() == n;
        if n == 0 || !square(&g) || !square(&a) || !square(&l) || h.as_ref().is_some_and(|h| !square(h)) {
            return Err(Error::Schema("Koopman matrices must all be N x N with N >= 1".into()));
        }
        Ok(Self { g, a, l, h, meta })
    }

    pub fn size(&self) -> usize {
        self.g.nrows()
    }

    pub fn g(&self) -> MatRef<'_, c64> {
        self.g.as_ref()
    }

    pub fn a(&self) -> MatRef<'_, c64> {
        self.a.as_ref()
    }

    pub fn l(&self) -> MatRef<'_, c64> {
        self.l.as_ref()
    }

    pub fn h(&self) -> Option<MatRef<'_, c64>> {
        self.h.as_ref().map(|h| h.as_ref())
    }

    pub fn meta(&self) -> &AssemblyMeta {
        &self.meta
    }

    /// `H`, or a capability error explaining what data is missing.
    pub fn require_h(&self) -> Result<MatRef<'_, c64>> {
        self.h().ok_or_else(|| {
            Error::capability(
                "this quantity needs the cross-realization matrix H, which requires batched data \
                 with at least two independent realizations per state",
            )
        })
    }

    /// Keep only the dictionary functions at `indices` (leading principal
    /// submatrices for nested dictionaries).
    pub fn restrict(&self, indices: &[usize]) -> Result<Self> {
        let n = self.size();
        if indices.is_empty() || indices.iter().any(|&i| i >= n) {
            return Err(Error::domain("restriction indices out of range"));
        }
        let sub = |m: &Mat<c64>| Mat::from_fn(indices.len(), indices.len(), |i, j| m[(indices[i], indices[j])]);
        let mut meta = self.meta.clone();
        meta.labels = indices.iter().map(|&i| meta.labels.get(i).cloned().unwrap_or_default()).collect();
        Ok(Self { g: sub(&self.g), a: sub(&self.a), l: sub(&self.l), h: self.h.as_ref().map(sub), meta })
    }

    /// Binary container: magic, `N` (u64 LE), presence flags for G, A, L, H,
    /// then each present matrix as row-major `(re, im)` f64 LE pairs.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&(self.size() as u64).to_le_bytes())?;
        out.write_all(&[1, 1, 1, u8::from(self.h.is_some())])?;
        for m in [Some(&self.g), Some(&self.a), Some(&self.l), self.h.as_ref()].into_iter().flatten() {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    out.write_all(&m[(i, j)].re.to_le_bytes())?;
                    out.write_all(&m[(i, j)].im.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R, meta: AssemblyMeta) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Schema("not a Koopman matrix container".into()));
        }
        let mut word = [0u8; 8];
        input.read_exact(&mut word)?;
        let n = u64::from_le_bytes(word) as usize;
        let mut flags = [0u8; 4];
        input.read_exact(&mut flags)?;
        let mut read_mat = |present: u8| -> Result<Option<Mat<c64>>> {
            if present == 0 {
                return Ok(None);
            }
            let mut m = Mat::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    input.read_exact(&mut word)?;
                    let re = f64::from_le_bytes(word);
                    input.read_exact(&mut word)?;
                    m[(i, j)] = c64::new(re, f64::from_le_bytes(word));
                }
            }
            Ok(Some(m))
        };
        let missing = || Error::Schema("container lacks a required matrix".into());
        let g = read_mat(flags[0])?.ok_or_else(missing)?;
        let a = read_mat(flags[1])?.ok_or_else(missing)?;
        let l = read_mat(flags[2])?.ok_or_else(missing)?;
        let h = read_mat(flags[3])?;
        Self::new(g, a, l, h, meta)
    }

    /// CSV export: `matrix,row,col,re,im`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "matrix,row,col,re,im")?;
        let named = [("G", Some(&self.g)), ("A", Some(&self.a)), ("L", Some(&self.l)), ("H", self.h.as_ref())];
        for (name, m) in named {
            let Some(m) = m else { continue };
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    writeln!(out, "{name},{i},{j},{:.16e},{:.16e}", m[(i, j)].re, m[(i, j)].im)?;
                }
            }
        }
        Ok(())
    }
}

struct Partial {
    g: Mat<c64>,
    a: Mat<c64>,
    l: Mat<c64>,
    h: Option<Mat<c64>>,
}

impl Partial {
    fn add(mut self, other: Partial) -> Partial {
        self.g += &other.g;
        self.a += &other.a;
        self.l += &other.l;
        if let (Some(h), Some(o)) = (self.h.as_mut(), other.h.as_ref()) {
            *h += o;
        }
        self
    }
}

fn tree_sum(mut parts: Vec<Partial>) -> Partial {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(left) = it.next() {
            match it.next() {
                Some(right) => next.push(left.add(right)),
                None => next.push(left),
            }
        }
        parts = next;
    }
    parts.pop().expect("at least one block")
}

fn check_dim(dict: &Dictionary, dim: usize) -> Result<()> {
    if dict.domain_dim() != dim {
        return Err(Error::domain(format!(
            "snapshot dimension {dim} does not match dictionary dimension {}",
            dict.domain_dim()
        )));
    }
    Ok(())
}

fn rows(m: &Mat<f64>, range: std::ops::Range<usize>) -> MatRef<'_, f64> {
    m.as_ref().subrows(range.start, range.len())
}

/// `G = PsiX^* W PsiX`, `A = PsiX^* W PsiY`, `L = PsiY^* W PsiY`; no `H`.
pub fn assemble_unbatched(data: &SnapshotSet, dict: &Dictionary) -> Result<KoopmanMatrices> {
    check_dim(dict, data.dim())?;
    let m = data.len();
    let blocks: Vec<std::ops::Range<usize>> =
        (0..m.div_ceil(BLOCK_ROWS)).map(|b| b * BLOCK_ROWS..((b + 1) * BLOCK_ROWS).min(m)).collect();
    let parts = blocks
        .into_par_iter()
        .map(|range| -> Result<Partial> {
            let w = &data.weights()[range.clone()];
            let px = dict.evaluate_matrix(rows(data.states_x(), range.clone()))?;
            let py = dict.evaluate_matrix(rows(data.states_y(), range))?;
            Ok(Partial {
                g: weighted_cross(px.as_ref(), w, px.as_ref()),
                a: weighted_cross(px.as_ref(), w, py.as_ref()),
                l: weighted_cross(py.as_ref(), w, py.as_ref()),
                h: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let total = tree_sum(parts);
    KoopmanMatrices::new(
        hermitian_part(total.g.as_ref()),
        total.a,
        hermitian_part(total.l.as_ref()),
        None,
        AssemblyMeta {
            states: m,
            realizations: 1,
            labels: dict.labels().to_vec(),
            estimator: "unbatched".into(),
        },
    )
}

/// Batched estimates including `H`. Requires `M2 >= 2`.
pub fn assemble_batched(data: &BatchedSnapshotSet, dict: &Dictionary) -> Result<KoopmanMatrices> {
    check_dim(dict, data.dim())?;
    let m2 = data.realization_count();
    if m2 < 2 {
        return Err(Error::domain(format!(
            "batched assembly needs at least 2 realizations per state, got {m2}"
        )));
    }
    let m1 = data.len();
    let per_block = (BLOCK_ROWS / m2).max(1);
    let blocks: Vec<std::ops::Range<usize>> =
        (0..m1.div_ceil(per_block)).map(|b| b * per_block..((b + 1) * per_block).min(m1)).collect();
    let parts = blocks
        .into_par_iter()
        .map(|range| batched_block(data, dict, range))
        .collect::<Result<Vec<_>>>()?;
    let total = tree_sum(parts);
    let h = total.h.expect("batched partials carry H");
    let estimator = if m2 == 2 {
        "two realizations: A, L averaged over both, H symmetrized cross product".to_string()
    } else {
        format!("{m2} realizations: A, L averaged over all, H averaged over all ordered distinct pairs")
    };
    KoopmanMatrices::new(
        hermitian_part(total.g.as_ref()),
        total.a,
        hermitian_part(total.l.as_ref()),
        Some(hermitian_part(h.as_ref())),
        AssemblyMeta { states: m1, realizations: m2, labels: dict.labels().to_vec(), estimator },
    )
}

fn batched_block(data: &BatchedSnapshotSet, dict: &Dictionary, range: std::ops::Range<usize>) -> Result<Partial> {
    let m2 = data.realization_count();
    let w = &data.weights()[range.clone()];
    let px = dict.evaluate_matrix(rows(data.states_x(), range.clone()))?;
    let g = weighted_cross(px.as_ref(), w, px.as_ref());

    if m2 == 2 {
        let y1 = dict.evaluate_matrix(rows(&data.realizations()[0], range.clone()))?;
        let y2 = dict.evaluate_matrix(rows(&data.realizations()[1], range))?;
        let half = |m: Mat<c64>| scaled(m.as_ref(), 0.5);
        let a = half(weighted_cross(px.as_ref(), w, y1.as_ref()) + weighted_cross(px.as_ref(), w, y2.as_ref()));
        let l = half(weighted_cross(y1.as_ref(), w, y1.as_ref()) + weighted_cross(y2.as_ref(), w, y2.as_ref()));
        let h = half(weighted_cross(y1.as_ref(), w, y2.as_ref()) + weighted_cross(y2.as_ref(), w, y1.as_ref()));
        return Ok(Partial { g, a, l, h: Some(h) });
    }

    // Sum over k != k' of Y_k^* W Y_k' = S^* W S - sum_k Y_k^* W Y_k with S = sum_k Y_k.
    let b = range.len();
    let n = dict.len();
    let mut sum_y = Mat::<c64>::from_fn(b, n, |_, _| ZERO);
    let mut stacked = Mat::<c64>::zeros(b * m2, n);
    let mut stacked_w = Vec::with_capacity(b * m2);
    for (k, real) in data.realizations().iter().enumerate() {
        let y = dict.evaluate_matrix(rows(real, range.clone()))?;
        sum_y += &y;
        for r in 0..b {
            for c in 0..n {
                stacked[(k * b + r, c)] = y[(r, c)];
            }
        }
        stacked_w.extend_from_slice(w);
    }
    let inv_m2 = 1.0 / m2 as f64;
    let diag_sum = weighted_cross(stacked.as_ref(), &stacked_w, stacked.as_ref());
    let a = scaled(weighted_cross(px.as_ref(), w, sum_y.as_ref()).as_ref(), inv_m2);
    let l = scaled(diag_sum.as_ref(), inv_m2);
    let cross = weighted_cross(sum_y.as_ref(), w, sum_y.as_ref()) - &diag_sum;
    let h = scaled(cross.as_ref(), 1.0 / (m2 as f64 * (m2 - 1) as f64));
    Ok(Partial { g, a, l, h: Some(h) })
}

/// Frobenius distances between estimated and reference matrices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EstimationError {
    pub a: f64,
    pub g: f64,
    pub l: f64,
    pub h: Option<f64>,
}

pub fn estimation_error(est: &KoopmanMatrices, reference: &KoopmanMatrices) -> Result<EstimationError> {
    if est.size() != reference.size() {
        return Err(Error::domain(format!(
            "cannot compare {0}x{0} with {1}x{1} matrices",
            est.size(),
            reference.size()
        )));
    }
    let diff = |x: MatRef<'_, c64>, y: MatRef<'_, c64>| frobenius_norm((x.to_owned() - y.to_owned()).as_ref());
    Ok(EstimationError {
        a: diff(est.a(), reference.a()),
        g: diff(est.g(), reference.g()),
        l: diff(est.l(), reference.l()),
        h: match (est.h(), reference.h()) {
            (Some(x), Some(y)) => Some(diff(x, y)),
            _ => None,
        },
    })
}
