//! Snapshot generation through assembly, spectra and forecasts on the circle
//! map, compared with its closed-form operator.

use faer::Col;
use koopvar::c64;
use koopvar::dictionary::Dictionary;
use koopvar::forecast::{deltas_from_reference, estimate_operator_norm, forecast_report};
use koopvar::matrices::{assemble_batched, estimation_error};
use koopvar::pseudospectra::{ComplexGrid, Pencil, ResidualKind};
use koopvar::snapshots::{bin_to_batched, BinningMode, BinningSpec};
use koopvar::spectral::{analyze, RegularizationPolicy};
use koopvar::systems::{circle_alpha, circle_reference, circle_variance, generate_circle_batched, CircleMapConfig};

fn cfg() -> CircleMapConfig {
    CircleMapConfig { c: 0.2, amp: 0.0, noise_sigma: 0.5, seed: 5 }
}

#[test]
fn circle_eigenvalues_and_residuals() {
    let n = 4;
    let data = generate_circle_batched(&cfg(), 64, 3000).unwrap();
    let mats = assemble_batched(&data, &Dictionary::fourier(n, 1.0).unwrap()).unwrap();
    let pairs = analyze(&mats, &RegularizationPolicy::default()).unwrap();
    assert_eq!(pairs.len(), 2 * n + 1);
    let tol = 5.0 / 3000f64.sqrt();
    for j in -(n as i64)..=n as i64 {
        let alpha = circle_alpha(j, &cfg());
        let p = pairs
            .iter()
            .min_by(|a, b| (a.eigenvalue - alpha).norm().total_cmp(&(b.eigenvalue - alpha).norm()))
            .unwrap();
        assert!((p.eigenvalue - alpha).norm() < tol, "mode {j}");
        // The Fourier modes are exact eigenfunctions: res vanishes and the
        // variance residual carries the mode's variance.
        assert!(p.res.unwrap() < tol, "mode {j}: res {}", p.res.unwrap());
        assert!((p.res_var - circle_variance(j, &cfg()).sqrt()).abs() < tol, "mode {j}");
    }
}

#[test]
fn flattened_then_binned_data_reproduces_the_batched_matrices() {
    let data = generate_circle_batched(&cfg(), 16, 4).unwrap();
    let dict = Dictionary::fourier(3, 1.0).unwrap();
    let direct = assemble_batched(&data, &dict).unwrap();
    let rebinned = bin_to_batched(&data.flatten(), &BinningSpec { mode: BinningMode::Exact, min_occupancy: 2 }).unwrap();
    let again = assemble_batched(&rebinned, &dict).unwrap();
    let e = estimation_error(&again, &direct).unwrap();
    assert!(e.g < 1e-13 && e.a < 1e-13 && e.l < 1e-13 && e.h.unwrap() < 1e-13, "{e:?}");
}

#[test]
fn pseudospectrum_minimizers_are_unit_vectors() {
    let data = generate_circle_batched(&cfg(), 32, 50).unwrap();
    let mats = assemble_batched(&data, &Dictionary::fourier(2, 1.0).unwrap()).unwrap();
    let pencil = Pencil::new(&mats, ResidualKind::Residual, &RegularizationPolicy::default()).unwrap();
    for z in ComplexGrid::default_grid(2).unwrap().points().iter().step_by(7) {
        let (r, g) = pencil.evaluate(*z).unwrap();
        let gg = koopvar::linalg::quad_form(mats.g(), g.as_ref()).re;
        assert!((gg - 1.0).abs() < 1e-10);
        let direct = koopvar::spectral::res(*z, g.as_ref(), &mats).unwrap().value;
        assert!((direct - r).abs() < 1e-8, "{direct} vs {r}");
    }
}

#[test]
fn forecast_report_against_reference() {
    let n = 3;
    let data = generate_circle_batched(&cfg(), 64, 2000).unwrap();
    let mats = assemble_batched(&data, &Dictionary::fourier(n, 1.0).unwrap()).unwrap();
    let reg = RegularizationPolicy::default();
    let norm_k = estimate_operator_norm(&mats, &reg).unwrap();
    assert!((norm_k - 1.0).abs() < 1e-2);
    let deltas = deltas_from_reference(&mats, &circle_reference(&cfg(), n).unwrap(), norm_k).unwrap();
    let g = Col::from_fn(mats.size(), |i| c64::new(if i == n + 1 { 1.0 } else { 0.0 }, 0.0));
    let rows = forecast_report(&mats, &reg, g.as_ref(), 6, norm_k, Some(deltas)).unwrap();
    let alpha = circle_alpha(1, &cfg()).norm();
    for r in &rows {
        // `g = e^{2 pi i x}` decays like |alpha_1|^n.
        assert!((r.norm_prediction - alpha.powi(r.n as i32)).abs() < 0.05, "n = {}", r.n);
        assert!(r.c_n.unwrap() >= r.delta_n.unwrap());
    }
    assert_eq!(rows[0].c_n.unwrap(), deltas.delta_g);
}
