//! Forecasting with the EDMD matrix `K = G^+ A` and a-priori error bounds.

use std::io::Write;

use faer::{c64, Col, ColRef, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::linalg::{dot, hermitian_power, mat_vec, matmul_seq, quad_form, spectral_norm};
use crate::matrices::KoopmanMatrices;
use crate::spectral::RegularizationPolicy;
use crate::{Error, Result};

/// `K = G^+ A` with the truncated pseudoinverse of `G`.
pub fn koopman_matrix(mats: &KoopmanMatrices, reg: &RegularizationPolicy) -> Result<Mat<c64>> {
    let pinv = reg.whiten(mats)?.pseudo_inverse();
    Ok(matmul_seq(pinv.as_ref(), mats.a()))
}

/// Largest singular value of `K` in Gram-orthonormal coordinates.
pub fn estimate_operator_norm(mats: &KoopmanMatrices, reg: &RegularizationPolicy) -> Result<f64> {
    let wh = reg.whiten(mats)?;
    spectral_norm(wh.project(mats.a()).as_ref())
}

/// `K^n g`.
pub fn iterate(k: MatRef<'_, c64>, g: ColRef<'_, c64>, n: usize) -> Col<c64> {
    let mut v = g.to_owned();
    for _ in 0..n {
        v = mat_vec(k, v.as_ref());
    }
    v
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub delta_g: f64,
    pub delta_a: f64,
}

/// Perturbation sizes of estimated `(G, A)` against a reference pair.
///
/// With `I_G = G^{1/2} Gt^{-1/2}`:
/// `delta_g = |I_G| |I - I_G^{-1}| + |I - I_G|` and
/// `delta_a = |K| (1 + |I_G|) |I_G - I| + |I_G|^2 |G^{-1/2}(A - At)G^{-1/2}|`.
pub fn deltas_from_reference(est: &KoopmanMatrices, reference: &KoopmanMatrices, norm_k: f64) -> Result<Deltas> {
    if est.size() != reference.size() {
        return Err(Error::domain("estimated and reference matrices differ in size"));
    }
    if !(norm_k >= 0.0) {
        return Err(Error::domain("operator norm must be nonnegative"));
    }
    let n = est.size();
    let eye = Mat::<c64>::identity(n, n);
    let g_half = hermitian_power(reference.g(), 0.5)?;
    let g_mhalf = hermitian_power(reference.g(), -0.5)?;
    let gt_half = hermitian_power(est.g(), 0.5)?;
    let gt_mhalf = hermitian_power(est.g(), -0.5)?;
    let ig = matmul_seq(g_half.as_ref(), gt_mhalf.as_ref());
    let ig_inv = matmul_seq(gt_half.as_ref(), g_mhalf.as_ref());
    let norm_ig = spectral_norm(ig.as_ref())?;
    let dist_ig = spectral_norm((&eye - &ig).as_ref())?;
    let dist_inv = spectral_norm((&eye - &ig_inv).as_ref())?;
    let diff = reference.a().to_owned() - est.a().to_owned();
    let scaled = matmul_seq(matmul_seq(g_mhalf.as_ref(), diff.as_ref()).as_ref(), g_mhalf.as_ref());
    Ok(Deltas {
        delta_g: norm_ig * dist_inv + dist_ig,
        delta_a: norm_k * (1.0 + norm_ig) * dist_ig + norm_ig * norm_ig * spectral_norm(scaled.as_ref())?,
    })
}

fn step_defect(mats: &KoopmanMatrices, h: MatRef<'_, c64>, k: MatRef<'_, c64>, v: ColRef<'_, c64>) -> (f64, Col<c64>) {
    let kv = mat_vec(k, v);
    let av = mat_vec(mats.a(), v);
    let sq = quad_form(h, v).re - 2.0 * dot(kv.as_ref(), av.as_ref()).re + quad_form(mats.g(), kv.as_ref()).re;
    (sq.max(0.0).sqrt(), kv)
}

/// `[delta_0, ..., delta_n]` where `delta_m = sum_{j=1..m} |K|^{m-j} e_j` and
/// `e_j` is the one-step defect of `v = K^{j-1} g`.
pub fn subspace_error_curve(
    mats: &KoopmanMatrices,
    k: MatRef<'_, c64>,
    g: ColRef<'_, c64>,
    n: usize,
    norm_k: f64,
) -> Result<Vec<f64>> {
    let h = mats.require_h()?;
    if k.nrows() != mats.size() || k.ncols() != mats.size() || g.nrows() != mats.size() {
        return Err(Error::domain("forecast matrix and observable must match the dictionary size"));
    }
    let mut curve = Vec::with_capacity(n + 1);
    curve.push(0.0);
    let mut acc = 0.0;
    let mut v = g.to_owned();
    for _ in 0..n {
        let (e, kv) = step_defect(mats, h, k, v.as_ref());
        acc = norm_k * acc + e;
        curve.push(acc);
        v = kv;
    }
    Ok(curve)
}

pub fn subspace_error(
    mats: &KoopmanMatrices,
    k: MatRef<'_, c64>,
    g: ColRef<'_, c64>,
    n: usize,
    norm_k: f64,
) -> Result<f64> {
    Ok(*subspace_error_curve(mats, k, g, n, norm_k)?.last().expect("curve starts at 0"))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastBoundInputs {
    pub norm_k: f64,
    pub delta_g: f64,
    pub delta_a: f64,
    pub delta_n: f64,
}

/// `C_n = (|K|^n - dA^n)/(|K| - dA) dA (dG + 1) + |K|^n dG + delta_n`.
pub fn forecast_error_bound(inputs: &ForecastBoundInputs, n: usize) -> Result<f64> {
    let ForecastBoundInputs { norm_k, delta_g, delta_a, delta_n } = *inputs;
    if [norm_k, delta_g, delta_a, delta_n].iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::domain("forecast bound inputs must be finite and nonnegative"));
    }
    if norm_k <= delta_a {
        return Err(Error::domain(format!(
            "operator norm {norm_k} must exceed delta_A {delta_a} for the geometric sum"
        )));
    }
    let e = n as i32;
    let kn = norm_k.powi(e);
    let geometric = (kn - delta_a.powi(e)) / (norm_k - delta_a);
    Ok(geometric * delta_a * (delta_g + 1.0) + kn * delta_g + delta_n)
}

/// `min(1, variance / a^2)`.
pub fn chernoff_bound(variance: f64, a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::domain("deviation threshold must be positive"));
    }
    if !(variance >= 0.0) {
        return Err(Error::domain("variance must be nonnegative"));
    }
    Ok((variance / (a * a)).min(1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ForecastRow {
    pub n: usize,
    pub norm_prediction: f64,
    pub c_n: Option<f64>,
    /// Needs the cross-realization matrix; absent for unbatched data.
    pub delta_n: Option<f64>,
}

/// Forecast report for `g` over horizons `0..=horizon`. `deltas`, when
/// given together with batched data, fills the `C_n` column.
pub fn forecast_report(
    mats: &KoopmanMatrices,
    reg: &RegularizationPolicy,
    g: ColRef<'_, c64>,
    horizon: usize,
    norm_k: f64,
    deltas: Option<Deltas>,
) -> Result<Vec<ForecastRow>> {
    let k = koopman_matrix(mats, reg)?;
    let curve = match mats.h() {
        Some(_) => Some(subspace_error_curve(mats, k.as_ref(), g, horizon, norm_k)?),
        None => None,
    };
    let mut v = g.to_owned();
    let mut rows = Vec::with_capacity(horizon + 1);
    for n in 0..=horizon {
        if n > 0 {
            v = mat_vec(k.as_ref(), v.as_ref());
        }
        let delta_n = curve.as_ref().map(|c| c[n]);
        let c_n = match (deltas, delta_n) {
            (Some(d), Some(delta_n)) => Some(forecast_error_bound(
                &ForecastBoundInputs { norm_k, delta_g: d.delta_g, delta_a: d.delta_a, delta_n },
                n,
            )?),
            _ => None,
        };
        let norm_prediction = quad_form(mats.g(), v.as_ref()).re.max(0.0).sqrt();
        rows.push(ForecastRow { n, norm_prediction, c_n, delta_n });
    }
    Ok(rows)
}

/// `n,norm_prediction,C_n,delta_n`; missing values are empty fields.
pub fn write_forecast_csv<W: Write>(rows: &[ForecastRow], mut out: W) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|c| format!("{c:.16e}")).unwrap_or_default();
    writeln!(out, "n,norm_prediction,C_n,delta_n")?;
    for r in rows {
        writeln!(out, "{},{:.16e},{},{}", r.n, r.norm_prediction, opt(r.c_n), opt(r.delta_n))?;
    }
    Ok(())
}
