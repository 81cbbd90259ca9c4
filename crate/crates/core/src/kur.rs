//! Kinetic uncertainty bounds on first-passage times of counted jumps.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fpt::format_float;
use crate::jump::{resolvent_moments, Boundary};
use crate::models::thermal_driven_qubit;
use crate::operator::{
    build_liouvillian, c, drazin_inverse, steady_state, DensityMatrix, LindbladModel, Superoperator, I,
};

/// Tolerance on `ℒ₁ + ℒ₂ = ℒ`.
pub const SPLIT_TOL: f64 = 1e-12;
/// Imaginary parts of `Q` below this are dropped.
pub const IMAGINARY_TOL: f64 = 1e-9;
/// Slack on the quantum bound before it counts as violated.
pub const QUANTUM_SLACK: f64 = 1e-6;
/// Tolerance for the Drazin identities.
pub const DRAZIN_TOL: f64 = 1e-9;

/// `K = Σₖ tr(Lₖ†Lₖ ρ)` over monitored channels.
pub fn dynamical_activity(model: &LindbladModel, rho_ss: &DensityMatrix) -> f64 {
    model
        .monitored()
        .map(|(_, ch)| rho_ss.expectation(&ch.rate_operator()).re)
        .sum()
}

/// `(ℒ₁, ℒ₂)` with `ℒ₁ρ = −iHρ + ½Σₖ(LₖρLₖ† − Lₖ†Lₖρ)` and
/// `ℒ₂ρ = iρH + ½Σₖ(LₖρLₖ† − ρLₖ†Lₖ)`; checked to sum to `ℒ`.
pub fn split_liouvillian(model: &LindbladModel) -> Result<(Superoperator, Superoperator)> {
    let h = model.hamiltonian();
    let mut l1 = Superoperator::left(h).scale(-I);
    let mut l2 = Superoperator::right(h).scale(I);
    for ch in model.channels() {
        let half_jump = Superoperator::sandwich(&ch.operator, &ch.operator).scale(c(0.5));
        let ldl = ch.rate_operator();
        l1 = l1 + (&half_jump - &Superoperator::left(&ldl).scale(c(0.5)));
        l2 = l2 + (&half_jump - &Superoperator::right(&ldl).scale(c(0.5)));
    }
    let residual = (&l1 + &l2).max_abs_diff(&build_liouvillian(model));
    if residual > SPLIT_TOL {
        return Err(Error::DecompositionCheck { residual });
    }
    Ok((l1, l2))
}

/// `Q = −4 tr(ℒ₁ℒ⁺ℒ₂ρ) − 4 tr(ℒ₂ℒ⁺ℒ₁ρ)`.
pub fn quantum_correction(model: &LindbladModel, rho_ss: &DensityMatrix, drazin: &Superoperator) -> Result<f64> {
    let (l1, l2) = split_liouvillian(model)?;
    let a = l1.apply(&drazin.apply(&l2.apply(rho_ss))).trace();
    let b = l2.apply(&drazin.apply(&l1.apply(rho_ss))).trace();
    let q = (a + b) * c(-4.0);
    if q.im.abs() >= IMAGINARY_TOL {
        return Err(Error::ImaginaryResidue { residue: q.im });
    }
    if q.im != 0.0 {
        log::debug!("dropping imaginary residue {:.3e} of Q", q.im);
    }
    Ok(q.re)
}

/// Closed-form dynamical activity of the thermal driven qubit.
pub fn qubit_activity(gamma: f64, omega: f64, nbar: f64) -> f64 {
    let m = 2.0 * nbar + 1.0;
    2.0 * gamma * m * (gamma * gamma * nbar * (nbar + 1.0) + 2.0 * omega * omega)
        / (gamma * gamma * m * m + 8.0 * omega * omega)
}

/// Closed-form quantum correction of the thermal driven qubit.
pub fn qubit_correction(gamma: f64, omega: f64, nbar: f64) -> f64 {
    let m = 2.0 * nbar + 1.0;
    32.0 * omega * omega / (gamma * gamma * m * m) * qubit_activity(gamma, omega, nbar)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KurReport {
    pub activity: f64,
    pub correction: f64,
    pub mean: f64,
    pub variance: f64,
    pub snr: f64,
    pub classical_bound: f64,
    pub quantum_bound: f64,
    pub classical_violated: bool,
    pub quantum_violated: bool,
}

impl KurReport {
    pub fn new(activity: f64, correction: f64, mean: f64, variance: f64) -> Self {
        let snr = mean * mean / variance;
        let classical_bound = mean * activity;
        let quantum_bound = mean * (activity + correction);
        Self {
            activity,
            correction,
            mean,
            variance,
            snr,
            classical_bound,
            quantum_bound,
            classical_violated: snr > classical_bound,
            quantum_violated: snr > quantum_bound + QUANTUM_SLACK,
        }
    }
}

/// Bounds and exact FPT moments for reaching `threshold` from the steady state.
pub fn kur_report(model: &LindbladModel, threshold: i64) -> Result<KurReport> {
    let l = build_liouvillian(model);
    let rho = steady_state(&l)?;
    let drazin = drazin_inverse(&l, &rho, DRAZIN_TOL)?;
    let k = dynamical_activity(model, &rho);
    let q = quantum_correction(model, &rho, &drazin)?;
    let r = resolvent_moments(model, &rho, Boundary::Threshold(threshold), Boundary::Unbounded)?;
    Ok(KurReport::new(k, q, r.moments.mean, r.moments.variance))
}

#[derive(Clone, Debug)]
pub struct ScanPoint {
    pub omega_over_gamma: f64,
    pub nbar: f64,
    pub report: std::result::Result<KurReport, String>,
}

/// `lo:hi:count`, linearly spaced and inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        n => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Reports for the thermal driven qubit over `Ω/γ`, one independent job per point.
/// A failing point is kept with its error message.
pub fn kur_scan(gamma: f64, nbar: f64, omega_over_gamma: &[f64], threshold: i64) -> Vec<ScanPoint> {
    omega_over_gamma
        .par_iter()
        .map(|&x| {
            let model = thermal_driven_qubit(gamma, x * gamma, nbar);
            let report = kur_report(&model, threshold).map_err(|e| e.to_string());
            if let Ok(r) = &report {
                if r.correction < 0.0 {
                    log::warn!("negative quantum correction {} at Ω/γ = {x}", r.correction);
                }
            }
            ScanPoint {
                omega_over_gamma: x,
                nbar,
                report,
            }
        })
        .collect()
}

/// Scan CSV with `#` metadata lines; failed points have empty numeric fields.
pub fn write_scan_csv<W: Write>(points: &[ScanPoint], mut out: W, metadata: &[(String, String)]) -> Result<()> {
    for (k, v) in metadata {
        writeln!(out, "# {k}: {v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "omega_over_gamma",
        "nbar",
        "K",
        "Q",
        "E_tau",
        "Var_tau",
        "SNR",
        "classical_bound",
        "quantum_bound",
        "classical_violated",
        "quantum_violated",
        "status",
    ])?;
    for p in points {
        let mut row = vec![format_float(p.omega_over_gamma), format_float(p.nbar)];
        match &p.report {
            Ok(r) => {
                row.extend(
                    [
                        r.activity,
                        r.correction,
                        r.mean,
                        r.variance,
                        r.snr,
                        r.classical_bound,
                        r.quantum_bound,
                    ]
                    .map(format_float),
                );
                row.push(r.classical_violated.to_string());
                row.push(r.quantum_violated.to_string());
                row.push("ok".into());
            }
            Err(msg) => {
                row.extend(std::iter::repeat_n(String::new(), 9));
                row.push(format!("failed: {msg}"));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::decay_qubit;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn dark_steady_state_has_no_activity() {
        let m = decay_qubit(1.0);
        let rho = steady_state(&build_liouvillian(&m)).unwrap();
        assert!(dynamical_activity(&m, &rho).abs() < 1e-14);
    }

    #[test]
    fn activity_and_correction_reference_values() {
        let m = thermal_driven_qubit(1.0, 1.0, 0.1);
        let l = build_liouvillian(&m);
        let rho = steady_state(&l).unwrap();
        let d = drazin_inverse(&l, &rho, DRAZIN_TOL).unwrap();
        let k = dynamical_activity(&m, &rho);
        let q = quantum_correction(&m, &rho, &d).unwrap();
        assert!((k - 5.064 / 9.44).abs() < 1e-12);
        assert!((q - 32.0 / 1.44 * 5.064 / 9.44).abs() < 1e-9);
    }

    #[test]
    fn incoherent_limit_has_no_correction() {
        for nbar in [0.1, 1.0] {
            let m = thermal_driven_qubit(1.0, 0.0, nbar);
            let l = build_liouvillian(&m);
            let rho = steady_state(&l).unwrap();
            let d = drazin_inverse(&l, &rho, DRAZIN_TOL).unwrap();
            assert!(quantum_correction(&m, &rho, &d).unwrap().abs() < 1e-10);
            let k = dynamical_activity(&m, &rho);
            assert!(rel(k, 2.0 * nbar * (nbar + 1.0) / (2.0 * nbar + 1.0)) < 1e-12);
        }
    }

    #[test]
    fn split_sums_to_liouvillian() {
        let m = thermal_driven_qubit(0.7, 1.3, 0.4);
        let (l1, l2) = split_liouvillian(&m).unwrap();
        assert!((&l1 + &l2).max_abs_diff(&build_liouvillian(&m)) < SPLIT_TOL);
    }

    #[test]
    fn bound_ratio_grows_quadratically() {
        let (g, n) = (1.0, 0.5);
        for omega in [5.0, 10.0, 20.0] {
            let ratio = (qubit_activity(g, omega, n) + qubit_correction(g, omega, n)) / qubit_activity(g, omega, n);
            assert!(rel(ratio, 1.0 + 32.0 * omega * omega / 4.0) < 1e-12);
        }
    }

    #[test]
    fn scan_keeps_grid_order_and_csv_shape() {
        let xs = linspace(0.5, 1.5, 3);
        assert_eq!(xs, vec![0.5, 1.0, 1.5]);
        let pts = kur_scan(1.0, 0.5, &xs, 2);
        assert!(pts.iter().zip(&xs).all(|(p, x)| p.omega_over_gamma == *x && p.report.is_ok()));
        for p in &pts {
            let r = p.report.as_ref().unwrap();
            assert!(r.quantum_bound >= r.classical_bound);
            assert!(!r.quantum_violated);
        }
        let mut buf = Vec::new();
        write_scan_csv(&pts, &mut buf, &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().all(|l| l.split(',').count() == 12));
    }
}
