//! Invariant checks shared by the property suite and the acceptance run.
#![allow(dead_code)]

use qfpt_core::fpt::TAIL_TOL;
use qfpt_core::jump::{self, Boundary, ChargeWindow, JumpProblem};
use qfpt_core::kur::split_liouvillian;
use qfpt_core::models::thermal_driven_qubit;
use qfpt_core::state::{evolve, Horizon};
use qfpt_core::trajectory::{simulate, ThresholdSpec, TrajectoryConfig, Unravelling};
use qfpt_core::{
    build_liouvillian, drazin_inverse, steady_state, CMatrix, DensityMatrix, JumpChannel, LindbladModel, C64,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

pub fn random_matrix(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> CMatrix {
    CMatrix::from_fn(d, d, |_, _| {
        C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * scale
    })
}

/// Generic model with two counted channels of charge `±1`.
pub fn random_model(seed: u64, d: usize) -> LindbladModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_matrix(&mut rng, d, 1.0);
    let h = (&a + a.adjoint()) * C64::new(0.5, 0.0);
    let channels = vec![
        JumpChannel::new(random_matrix(&mut rng, d, 1.0), 1.0),
        JumpChannel::new(random_matrix(&mut rng, d, 0.6), -1.0),
    ];
    LindbladModel::new(h, channels).expect("Hermitian by construction")
}

pub fn random_state(seed: u64, d: usize) -> DensityMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let a = random_matrix(&mut rng, d, 1.0);
    let m = &a * a.adjoint();
    let tr = m.trace();
    DensityMatrix::new(m / tr).expect("square")
}

pub fn trace_preservation(seed: u64, d: usize) -> Check {
    let model = random_model(seed, d);
    let l = build_liouvillian(&model);
    let rho = random_state(seed, d);
    let tr = l.apply(&rho).trace().norm();
    if tr > 1e-10 {
        return Err(format!("tr(Lρ) = {tr:e}"));
    }
    Ok(())
}

pub fn hermiticity(seed: u64, d: usize) -> Check {
    let model = random_model(seed, d);
    let window = ChargeWindow::new(-2, 2).unwrap();
    let g = jump::build_block_generator(&model, window).map_err(|e| e.to_string())?;
    let s = jump::initial_state(window, &random_state(seed, d)).map_err(|e| e.to_string())?;
    let s = evolve(&g, &s, 0.7).map_err(|e| e.to_string())?;
    let (herm, _) = s.positivity_defect();
    if herm > 1e-10 {
        return Err(format!("Hermiticity defect {herm:e}"));
    }
    let out = build_liouvillian(&model).apply(&random_state(seed + 1, d));
    let dev = (out.matrix() - out.matrix().adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if dev > 1e-12 {
        return Err(format!("L(ρ) not Hermitian: {dev:e}"));
    }
    Ok(())
}

pub fn positivity(seed: u64, d: usize, t: f64) -> Check {
    let model = random_model(seed, d);
    let window = ChargeWindow::new(-3, 3).unwrap();
    let g = jump::build_block_generator(&model, window).map_err(|e| e.to_string())?;
    let s = jump::initial_state(window, &random_state(seed, d)).map_err(|e| e.to_string())?;
    let s = evolve(&g, &s, t).map_err(|e| e.to_string())?;
    let (_, neg) = s.positivity_defect();
    if neg < -1e-9 {
        return Err(format!("eigenvalue {neg:e}"));
    }
    Ok(())
}

/// Survival monotone, density nonnegative and the probability ledger closed.
pub fn survival_and_ledger(gamma: f64, omega: f64, nbar: f64, threshold: i64) -> Check {
    let model = thermal_driven_qubit(gamma, omega, nbar);
    let rho = steady_state(&build_liouvillian(&model)).map_err(|e| e.to_string())?;
    let mut p = JumpProblem::new(model, rho, Boundary::Threshold(threshold), Boundary::Unbounded);
    p.dt = 0.01;
    p.horizon = Horizon::Fixed(5.0);
    let s = jump::solve(&p).map_err(|e| e.to_string())?;
    s.result.validate().map_err(|e| e.to_string())?;
    if s.result.survival.windows(2).any(|w| w[1] > w[0] + 1e-12) {
        return Err("survival increased".into());
    }
    let _ = TAIL_TOL;
    Ok(())
}

pub fn drazin_identities(seed: u64, d: usize) -> Check {
    let model = random_model(seed, d);
    let l = build_liouvillian(&model);
    let rho = steady_state(&l).map_err(|e| e.to_string())?;
    drazin_inverse(&l, &rho, 1e-9).map_err(|e| e.to_string())?;
    Ok(())
}

pub fn liouvillian_split(seed: u64, d: usize) -> Check {
    split_liouvillian(&random_model(seed, d)).map_err(|e| e.to_string())?;
    Ok(())
}

pub fn seed_reproducibility(seed: u64, diffusive: bool) -> Check {
    let model = thermal_driven_qubit(1.0, 0.8, 0.3);
    let unravelling = if diffusive { Unravelling::Diffusion } else { Unravelling::Jump };
    let mut cfg = TrajectoryConfig::new(
        model,
        DensityMatrix::maximally_mixed(2),
        unravelling,
        ThresholdSpec { upper: Some(2.0), lower: Some(-2.0) },
    );
    cfg.seed = seed;
    cfg.trajectories = 8;
    cfg.horizon = 3.0;
    cfg.path_stride = 50;
    let a = simulate(&cfg).map_err(|e| e.to_string())?;
    let b = simulate(&cfg).map_err(|e| e.to_string())?;
    if a != b {
        return Err(format!("seed {seed}: ensembles differ"));
    }
    Ok(())
}
