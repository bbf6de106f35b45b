//! EDMD eigenpairs with residuals.
//!
//! For an eigenpair `(lambda, g)` the variance residual uses `L`,
//!
//! ```text
//! res_var^2 = g^*[L - lambda A^* - conj(lambda) A + |lambda|^2 G] g / g^* G g
//! ```
//!
//! and the residual proper replaces `L` by `H`. Their squared difference is
//! the integrated variance `g^*(L - H)g / g^* G g`.

use std::io::Write;

use faer::{c64, Col, ColRef, Mat};
use serde::{Deserialize, Serialize};

use crate::linalg::{general_eigen, quad_form, scaled_col, Whitening};
use crate::matrices::KoopmanMatrices;
use crate::{Error, Result};

/// Relative eigenvalue cutoff for the Gram matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizationPolicy {
    pub rel_cutoff: f64,
}

impl Default for RegularizationPolicy {
    fn default() -> Self {
        Self { rel_cutoff: 1e-12 }
    }
}

impl RegularizationPolicy {
    pub fn new(rel_cutoff: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rel_cutoff) {
            return Err(Error::domain(format!("rel_cutoff must lie in [0, 1), got {rel_cutoff}")));
        }
        Ok(Self { rel_cutoff })
    }

    pub fn whiten(&self, mats: &KoopmanMatrices) -> Result<Whitening> {
        Whitening::new(mats.g(), self.rel_cutoff)
    }
}

/// A residual value together with the raw squared quotient it came from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Residual {
    pub value: f64,
    /// Unclamped `numerator / g^* G g`; may be slightly negative.
    pub squared: f64,
    /// True when `squared < 0` and the value was clamped to zero.
    pub clamped: bool,
}

impl Residual {
    fn from_squared(squared: f64) -> Self {
        Self { value: squared.max(0.0).sqrt(), squared, clamped: squared < 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralResult {
    pub eigenvalue: c64,
    /// Dictionary coefficients, normalized so that `g^* G g = 1`.
    pub coeffs: Col<c64>,
    pub res_var: f64,
    pub res: Option<f64>,
    pub integrated_variance: Option<f64>,
    /// Whether either residual had to be clamped at zero.
    pub clamped: bool,
}

/// Eigenpairs of the pencil `(A, G)` on the retained Gram subspace, sorted by
/// descending modulus and then ascending argument. Residual fields are left
/// at zero / `None`.
pub fn solve_eigenpairs(mats: &KoopmanMatrices, reg: &RegularizationPolicy) -> Result<Vec<SpectralResult>> {
    let wh = reg.whiten(mats)?;
    let t = wh.project(mats.a());
    let (values, vectors) = general_eigen(t.as_ref())?;
    let mut out = Vec::with_capacity(values.len());
    for (k, &lambda) in values.iter().enumerate() {
        let g = wh.lift(vectors.col(k));
        let norm = quad_form(mats.g(), g.as_ref()).re;
        if !(norm > 0.0) {
            return Err(Error::Numerical("eigenvector has zero Gram norm".into()));
        }
        let mut g = scaled_col(g.as_ref(), 1.0 / norm.sqrt());
        fix_phase(&mut g);
        out.push(SpectralResult {
            eigenvalue: lambda,
            coeffs: g,
            res_var: 0.0,
            res: None,
            integrated_variance: None,
            clamped: false,
        });
    }
    sort_spectrum(&mut out);
    Ok(out)
}

/// Rotate so the largest-modulus entry is real and positive.
fn fix_phase(g: &mut Col<c64>) {
    let mut best = 0;
    for i in 0..g.nrows() {
        if g[i].norm() > g[best].norm() * (1.0 + 1e-12) {
            best = i;
        }
    }
    let pivot = g[best];
    if pivot.norm() > 0.0 {
        let rot = pivot.conj() / pivot.norm();
        for i in 0..g.nrows() {
            g[i] *= rot;
        }
    }
}

fn sort_spectrum(items: &mut [SpectralResult]) {
    items.sort_by(|a, b| b.eigenvalue.norm().total_cmp(&a.eigenvalue.norm()));
    let mut start = 0;
    while start < items.len() {
        let mut end = start + 1;
        while end < items.len() {
            let (prev, next) = (items[end - 1].eigenvalue.norm(), items[end].eigenvalue.norm());
            if prev - next > 1e-12 * prev.max(1.0) {
                break;
            }
            end += 1;
        }
        items[start..end].sort_by(|a, b| a.eigenvalue.arg().total_cmp(&b.eigenvalue.arg()));
        start = end;
    }
}

struct Forms {
    gram: f64,
    /// `-2 Re(conj(lambda) g^* A g) + |lambda|^2 g^* G g`, shared by both residuals.
    shift: f64,
}

fn forms(lambda: c64, g: ColRef<'_, c64>, mats: &KoopmanMatrices) -> Result<Forms> {
    if g.nrows() != mats.size() {
        return Err(Error::domain(format!(
            "coefficient vector has length {}, expected {}",
            g.nrows(),
            mats.size()
        )));
    }
    let gram = quad_form(mats.g(), g).re;
    if !(gram > 0.0) {
        return Err(Error::domain("observable has zero Gram norm"));
    }
    let cross = quad_form(mats.a(), g);
    let shift = -2.0 * (lambda.conj() * cross).re + lambda.norm_sqr() * gram;
    Ok(Forms { gram, shift })
}

pub fn res_var(lambda: c64, g: ColRef<'_, c64>, mats: &KoopmanMatrices) -> Result<Residual> {
    let f = forms(lambda, g, mats)?;
    Ok(Residual::from_squared((quad_form(mats.l(), g).re + f.shift) / f.gram))
}

/// Needs the cross-realization matrix `H`.
pub fn res(lambda: c64, g: ColRef<'_, c64>, mats: &KoopmanMatrices) -> Result<Residual> {
    let h = mats.require_h()?;
    let f = forms(lambda, g, mats)?;
    Ok(Residual::from_squared((quad_form(h, g).re + f.shift) / f.gram))
}

/// `g^*(L - H)g / g^* G g`.
pub fn integrated_variance(g: ColRef<'_, c64>, mats: &KoopmanMatrices) -> Result<f64> {
    let h = mats.require_h()?;
    let f = forms(c64::new(0.0, 0.0), g, mats)?;
    Ok((quad_form(mats.l(), g).re - quad_form(h, g).re) / f.gram)
}

/// `L - H`.
pub fn covariance_matrix(mats: &KoopmanMatrices) -> Result<Mat<c64>> {
    let h = mats.require_h()?;
    Ok(mats.l().to_owned() - h.to_owned())
}

/// Eigenpairs with every residual the data supports.
pub fn analyze(mats: &KoopmanMatrices, reg: &RegularizationPolicy) -> Result<Vec<SpectralResult>> {
    let mut pairs = solve_eigenpairs(mats, reg)?;
    for p in &mut pairs {
        let rv = res_var(p.eigenvalue, p.coeffs.as_ref(), mats)?;
        p.res_var = rv.value;
        p.clamped = rv.clamped;
        if mats.h().is_some() {
            let r = res(p.eigenvalue, p.coeffs.as_ref(), mats)?;
            p.res = Some(r.value);
            p.integrated_variance = Some(integrated_variance(p.coeffs.as_ref(), mats)?);
            p.clamped |= r.clamped;
        }
    }
    Ok(pairs)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

/// `re(lambda),im(lambda),res_var,res,integrated_variance`; the last two are
/// empty without `H`.
pub fn write_eigs_csv<W: Write>(pairs: &[SpectralResult], mut out: W) -> Result<()> {
    writeln!(out, "re(lambda),im(lambda),res_var,res,integrated_variance")?;
    for p in pairs {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{},{}",
            p.eigenvalue.re,
            p.eigenvalue.im,
            p.res_var,
            opt(p.res),
            opt(p.integrated_variance)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius_norm, mat_vec};
    use crate::matrices::AssemblyMeta;

    fn meta(n: usize) -> AssemblyMeta {
        AssemblyMeta { states: 1, realizations: 2, labels: vec![String::new(); n], estimator: "test".into() }
    }

    fn diag(v: &[c64]) -> Mat<c64> {
        Mat::from_fn(v.len(), v.len(), |i, j| if i == j { v[i] } else { c64::new(0.0, 0.0) })
    }

    fn real_diag(v: &[f64]) -> Mat<c64> {
        diag(&v.iter().map(|&x| c64::new(x, 0.0)).collect::<Vec<_>>())
    }

    /// Exact circle-map matrices with `A = diag(alpha)`, `H = diag|alpha|^2`.
    fn circle(alpha: &[c64]) -> KoopmanMatrices {
        let n = alpha.len();
        let ones = vec![1.0; n];
        let h: Vec<f64> = alpha.iter().map(|a| a.norm_sqr()).collect();
        KoopmanMatrices::new(real_diag(&ones), diag(alpha), real_diag(&ones), Some(real_diag(&h)), meta(n)).unwrap()
    }

    #[test]
    fn diagonal_pencil_sorted() {
        let k = KoopmanMatrices::new(
            real_diag(&[1.0, 1.0]),
            diag(&[c64::new(0.5, 0.0), c64::new(0.0, 0.9)]),
            real_diag(&[1.0, 1.0]),
            None,
            meta(2),
        )
        .unwrap();
        let pairs = solve_eigenpairs(&k, &RegularizationPolicy::default()).unwrap();
        assert!((pairs[0].eigenvalue - c64::new(0.0, 0.9)).norm() < 1e-14);
        assert!((pairs[1].eigenvalue - c64::new(0.5, 0.0)).norm() < 1e-14);
        assert!((pairs[0].coeffs[1] - c64::new(1.0, 0.0)).norm() < 1e-14);
        assert!(pairs[0].coeffs[0].norm() < 1e-14);
        assert!((pairs[1].coeffs[0] - c64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn ties_sorted_by_argument() {
        let vals = [c64::new(0.0, -0.5), c64::new(0.5, 0.0), c64::new(-0.5, 0.0), c64::new(0.0, 0.5)];
        let k = circle(&vals);
        let pairs = solve_eigenpairs(&k, &RegularizationPolicy::default()).unwrap();
        let args: Vec<f64> = pairs.iter().map(|p| p.eigenvalue.arg()).collect();
        for w in args.windows(2) {
            assert!(w[0] <= w[1], "{args:?}");
        }
    }

    #[test]
    fn circle_oracle_residuals() {
        let alpha = [c64::new(1.0, 0.0), c64::new(0.3, 0.4), c64::new(0.3, -0.4), c64::new(-0.1, 0.2)];
        let k = circle(&alpha);
        let pairs = analyze(&k, &RegularizationPolicy::default()).unwrap();
        for p in &pairs {
            let j = alpha.iter().position(|a| (a - p.eigenvalue).norm() < 1e-12).unwrap();
            assert!(p.res.unwrap() < 1e-7);
            assert!((p.res_var - (1.0 - alpha[j].norm_sqr()).sqrt()).abs() < 1e-12);
            assert!((p.integrated_variance.unwrap() - (1.0 - alpha[j].norm_sqr())).abs() < 1e-12);
        }
        let far = c64::new(1e6, 1e6);
        let g = Col::from_fn(4, |i| if i == 1 { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) });
        let r = res(far, g.as_ref(), &k).unwrap();
        assert!((r.value / far.norm() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn capability_and_domain_errors() {
        let k = KoopmanMatrices::new(real_diag(&[1.0]), real_diag(&[0.5]), real_diag(&[1.0]), None, meta(1)).unwrap();
        let g = Col::from_fn(1, |_| c64::new(1.0, 0.0));
        assert!(matches!(res(c64::new(0.5, 0.0), g.as_ref(), &k), Err(Error::Capability(_))));
        assert!(matches!(integrated_variance(g.as_ref(), &k), Err(Error::Capability(_))));
        assert!(matches!(covariance_matrix(&k), Err(Error::Capability(_))));
        let zero = Col::from_fn(1, |_| c64::new(0.0, 0.0));
        assert!(matches!(res_var(c64::new(0.5, 0.0), zero.as_ref(), &k), Err(Error::Domain(_))));
        let z = KoopmanMatrices::new(real_diag(&[0.0]), real_diag(&[0.0]), real_diag(&[0.0]), None, meta(1)).unwrap();
        assert!(matches!(solve_eigenpairs(&z, &RegularizationPolicy::default()), Err(Error::Rank(_))));
        assert!(RegularizationPolicy::new(1.0).is_err());
    }

    #[test]
    fn deterministic_data_residuals_coincide() {
        let mut rng = crate::rng::SeedStream::new(5, "spectral-test").stream(0);
        let mut normal = || crate::rng::standard_normal(&mut rng);
        let n = 4;
        let x = Mat::from_fn(12, n, |_, _| c64::new(normal(), normal()));
        let y = Mat::from_fn(12, n, |_, _| c64::new(normal(), normal()));
        let w = vec![1.0 / 12.0; 12];
        let g = crate::linalg::hermitian_part(crate::linalg::weighted_cross(x.as_ref(), &w, x.as_ref()).as_ref());
        let a = crate::linalg::weighted_cross(x.as_ref(), &w, y.as_ref());
        let l = crate::linalg::hermitian_part(crate::linalg::weighted_cross(y.as_ref(), &w, y.as_ref()).as_ref());
        let k = KoopmanMatrices::new(g, a, l.clone(), Some(l), meta(n)).unwrap();
        let pairs = analyze(&k, &RegularizationPolicy::default()).unwrap();
        for p in &pairs {
            assert_eq!(p.res, Some(p.res_var));
            assert_eq!(p.integrated_variance, Some(0.0));
            let lhs = mat_vec(k.a(), p.coeffs.as_ref()) - mat_vec(k.g(), crate::linalg::scaled_col(p.coeffs.as_ref(), 1.0).as_ref()).iter().map(|v| v * p.eigenvalue).collect::<Col<c64>>();
            let tol = 1e-8 * (frobenius_norm(k.a()) + p.eigenvalue.norm() * frobenius_norm(k.g()));
            assert!(crate::linalg::vec_norm(lhs.as_ref()) <= tol);
            assert!((quad_form(k.g(), p.coeffs.as_ref()).re - 1.0).abs() < 1e-10);
        }
        assert_eq!(covariance_matrix(&k).unwrap(), Mat::<c64>::zeros(n, n));
    }

    #[test]
    fn eigs_csv_layout() {
        let k = KoopmanMatrices::new(real_diag(&[1.0]), real_diag(&[0.5]), real_diag(&[1.0]), None, meta(1)).unwrap();
        let pairs = analyze(&k, &RegularizationPolicy::default()).unwrap();
        let mut buf = Vec::new();
        write_eigs_csv(&pairs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "re(lambda),im(lambda),res_var,res,integrated_variance");
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 5);
        assert_eq!(row[0].parse::<f64>().unwrap(), 0.5);
        assert!(row[3].is_empty() && row[4].is_empty());
    }
}
