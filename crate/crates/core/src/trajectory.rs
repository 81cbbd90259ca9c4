//! Monte Carlo unravellings with charge accumulation and first-hit detection.
//!
//! Conditional states are stepped with first-order Kraus-form updates
//! `ρ ↦ MρM† / tr(MρM†)`, which agree with the Itô stochastic master equation
//! to first order in `dt` and keep `ρ` positive.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fpt::{format_float, ks_distance, FptResult};
use crate::operator::{CMatrix, DensityMatrix, LindbladModel, C64};

/// Hard limit on `dt · (largest total jump rate)`.
pub const JUMP_STEP_LIMIT: f64 = 0.2;
/// Above this `dt · rate` a warning is logged.
pub const JUMP_STEP_WARN: f64 = 0.05;
/// Default limit on `dt · rate_scale` for diffusive trajectories.
pub const DIFFUSION_STEP_LIMIT: f64 = 0.01;
/// Largest tolerated fraction of steps needing an eigenvalue clamp.
pub const REPAIR_FRACTION: f64 = 1e-3;
const CLAMP_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unravelling {
    Jump,
    Diffusion,
}

/// Absorbing thresholds; the charge starts at 0 between them.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ThresholdSpec {
    pub upper: Option<f64>,
    pub lower: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrajectoryConfig {
    pub model: LindbladModel,
    pub initial: DensityMatrix,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub unravelling: Unravelling,
    pub thresholds: ThresholdSpec,
    pub trajectories: usize,
    /// Record `(t, N)` every this many steps; 0 disables paths.
    pub path_stride: usize,
    /// Times at which conditional states are stored.
    pub snapshot_times: Vec<f64>,
    /// Upper bound on `dt · rate_scale` for diffusive runs.
    pub diffusion_step_limit: f64,
}

impl TrajectoryConfig {
    pub fn new(model: LindbladModel, initial: DensityMatrix, unravelling: Unravelling, thresholds: ThresholdSpec) -> Self {
        Self {
            model,
            initial,
            dt: 1e-3,
            horizon: 10.0,
            seed: 0,
            unravelling,
            thresholds,
            trajectories: 1000,
            path_stride: 0,
            snapshot_times: Vec::new(),
            diffusion_step_limit: DIFFUSION_STEP_LIMIT,
        }
    }

    fn validate(&self) -> Result<()> {
        self.model.require_channels()?;
        self.initial.validate(1e-9)?;
        if self.initial.dim() != self.model.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.model.dim(),
                found: self.initial.dim(),
            });
        }
        if !(self.dt > 0.0 && self.horizon > 0.0 && self.dt.is_finite() && self.horizon.is_finite()) {
            return Err(Error::InvalidConfig("dt and horizon must be positive".into()));
        }
        if self.thresholds.upper.is_some_and(|u| !(u > 0.0)) || self.thresholds.lower.is_some_and(|l| !(l < 0.0)) {
            return Err(Error::InvalidConfig(
                "thresholds must bracket the initial charge 0".into(),
            ));
        }
        match self.unravelling {
            Unravelling::Jump => {
                let product = self.dt * self.model.max_jump_rate();
                if product >= JUMP_STEP_LIMIT {
                    return Err(Error::StepTooLarge {
                        product,
                        limit: JUMP_STEP_LIMIT,
                    });
                }
                if product >= JUMP_STEP_WARN {
                    log::warn!("dt * jump rate = {product:.3}; single-jump steps are a coarse approximation");
                }
            }
            Unravelling::Diffusion => {
                let product = self.dt * self.model.rate_scale();
                if product > self.diffusion_step_limit {
                    return Err(Error::StepTooLarge {
                        product,
                        limit: self.diffusion_step_limit,
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Upper,
    Lower,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Outcome {
    Hit { time: f64, side: Side },
    Censored,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub channel: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub index: u64,
    pub outcome: Outcome,
    /// Charge when the trajectory stopped.
    pub final_charge: f64,
    pub path: Vec<(f64, f64)>,
    pub jumps: Vec<JumpEvent>,
    /// Conditional states at the requested snapshot times reached before stopping.
    pub snapshots: Vec<DensityMatrix>,
    pub steps: u64,
    pub repairs: u64,
}

impl TrajectoryRecord {
    pub fn hit_time(&self) -> Option<f64> {
        match self.outcome {
            Outcome::Hit { time, .. } => Some(time),
            Outcome::Censored => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryEnsemble {
    pub records: Vec<TrajectoryRecord>,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
}

impl TrajectoryEnsemble {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn hit_times(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.hit_time()).collect()
    }

    pub fn censored_fraction(&self) -> f64 {
        let censored = self.records.iter().filter(|r| r.outcome == Outcome::Censored).count();
        censored as f64 / self.records.len().max(1) as f64
    }

    /// Mean hit time of absorbed trajectories and its standard error.
    pub fn mean_hit_time(&self) -> Result<(f64, f64)> {
        let hits = self.hit_times();
        if hits.len() < 2 {
            return Err(Error::EmptyEnsemble);
        }
        let n = hits.len() as f64;
        let mean = hits.iter().sum::<f64>() / n;
        let var = hits.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok((mean, (var / n).sqrt()))
    }

    /// Charges of trajectories still running at the horizon.
    pub fn surviving_charges(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.outcome == Outcome::Censored)
            .map(|r| r.final_charge)
            .collect()
    }

    pub fn ks_distance(&self, deterministic: &FptResult) -> Result<f64> {
        ks_distance(deterministic, &self.hit_times())
    }

    /// Average conditional state at snapshot `k`, over trajectories that reached it.
    pub fn mean_snapshot(&self, k: usize) -> Option<DensityMatrix> {
        let states: Vec<&DensityMatrix> = self.records.iter().filter_map(|r| r.snapshots.get(k)).collect();
        let first = states.first()?;
        let d = first.dim();
        let sum = states
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, s| acc + s.matrix());
        DensityMatrix::new(sum / C64::new(states.len() as f64, 0.0)).ok()
    }

    /// `trajectory,hit_time,censored` rows after `#` metadata.
    pub fn write_csv<W: Write>(&self, mut out: W, metadata: &[(String, String)]) -> Result<()> {
        writeln!(out, "# provenance: monte-carlo")?;
        for (k, v) in metadata {
            writeln!(out, "# {k}: {v}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["trajectory", "hit_time", "censored"])?;
        for r in &self.records {
            let (t, c) = match r.hit_time() {
                Some(t) => (format_float(t), "false"),
                None => (String::new(), "true"),
            };
            w.write_record([r.index.to_string(), t, c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Decimated `trajectory,t,N` rows.
    pub fn write_paths_csv<W: Write>(&self, mut out: W, metadata: &[(String, String)]) -> Result<()> {
        for (k, v) in metadata {
            writeln!(out, "# {k}: {v}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["trajectory", "t", "N"])?;
        for r in &self.records {
            for (t, n) in &r.path {
                w.write_record([r.index.to_string(), format_float(*t), format_float(*n)])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Empirical hitting-time density over absorbed trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    /// Empty when nothing was absorbed.
    pub density: Vec<f64>,
    pub absorbed: usize,
    pub censored_fraction: f64,
}

/// Bins `[0, T]` into `bins` equal intervals.
pub fn fpt_histogram(ensemble: &TrajectoryEnsemble, bins: usize) -> Histogram {
    let bins = bins.max(1);
    let width = ensemble.horizon / bins as f64;
    let edges = (0..=bins).map(|i| i as f64 * width).collect();
    let hits = ensemble.hit_times();
    let density = if hits.is_empty() {
        Vec::new()
    } else {
        let mut counts = vec![0usize; bins];
        for t in &hits {
            counts[((t / width) as usize).min(bins - 1)] += 1;
        }
        counts
            .iter()
            .map(|&c| c as f64 / (hits.len() as f64 * width))
            .collect()
    };
    Histogram {
        edges,
        density,
        absorbed: hits.len(),
        censored_fraction: ensemble.censored_fraction(),
    }
}

// --- small column-major d×d kernels on flat slices ---

fn matmul(a: &[C64], b: &[C64], d: usize, out: &mut [C64]) {
    for j in 0..d {
        for i in 0..d {
            let mut s = C64::new(0.0, 0.0);
            for k in 0..d {
                s += a[i + k * d] * b[k + j * d];
            }
            out[i + j * d] = s;
        }
    }
}

/// `out = A ρ A†`.
fn sandwich(a: &[C64], rho: &[C64], d: usize, tmp: &mut [C64], out: &mut [C64]) {
    matmul(a, rho, d, tmp);
    for j in 0..d {
        for i in 0..d {
            let mut s = C64::new(0.0, 0.0);
            for k in 0..d {
                s += tmp[i + k * d] * a[j + k * d].conj();
            }
            out[i + j * d] = s;
        }
    }
}

fn trace(m: &[C64], d: usize) -> C64 {
    (0..d).map(|i| m[i * (d + 1)]).sum()
}

/// `tr(A ρ)`.
fn trace_product(a: &[C64], rho: &[C64], d: usize) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for i in 0..d {
        for k in 0..d {
            s += a[i + k * d] * rho[k + i * d];
        }
    }
    s
}

fn flat(m: &CMatrix) -> Vec<C64> {
    m.as_slice().to_vec()
}

/// Hermitizes, renormalizes and, if needed, clamps negative eigenvalues.
/// Returns whether a clamp was applied.
fn normalize(rho: &mut [C64], d: usize, trajectory: u64) -> Result<bool> {
    for j in 0..d {
        for i in 0..j {
            let avg = (rho[i + j * d] + rho[j + i * d].conj()) * 0.5;
            rho[i + j * d] = avg;
            rho[j + i * d] = avg.conj();
        }
        rho[j * (d + 1)] = C64::new(rho[j * (d + 1)].re, 0.0);
    }
    let tr = trace(rho, d).re;
    if !(tr > 1e-300 && tr.is_finite()) {
        return Err(Error::NormCollapse { trajectory });
    }
    rho.iter_mut().for_each(|z| *z /= tr);
    if d == 1 {
        return Ok(false);
    }
    let m = CMatrix::from_column_slice(d, d, rho);
    let min_eig = if d == 2 {
        let a = m[(0, 0)].re;
        let b = m[(1, 1)].re;
        let off = m[(1, 0)].norm();
        0.5 * (a + b) - (0.25 * (a - b) * (a - b) + off * off).sqrt()
    } else {
        m.clone().symmetric_eigenvalues().min()
    };
    if min_eig >= -CLAMP_TOL {
        return Ok(false);
    }
    let eig = m.symmetric_eigen();
    let vals = eig.eigenvalues.map(|x| C64::new(x.max(0.0), 0.0));
    let fixed = &eig.eigenvectors * CMatrix::from_diagonal(&vals) * eig.eigenvectors.adjoint();
    let tr = fixed.trace().re;
    for (dst, src) in rho.iter_mut().zip(fixed.iter()) {
        *dst = src / tr;
    }
    Ok(true)
}

struct Monitor<'a> {
    cfg: &'a TrajectoryConfig,
    index: u64,
    path: Vec<(f64, f64)>,
    snapshots: Vec<DensityMatrix>,
    next_snapshot: usize,
}

impl<'a> Monitor<'a> {
    fn new(cfg: &'a TrajectoryConfig, index: u64) -> Self {
        Self {
            cfg,
            index,
            path: Vec::new(),
            snapshots: Vec::new(),
            next_snapshot: 0,
        }
    }

    fn observe(&mut self, step: u64, t: f64, n: f64, rho: &[C64]) {
        let stride = self.cfg.path_stride as u64;
        if stride > 0 && step.is_multiple_of(stride) {
            self.path.push((t, n));
        }
        let d = self.cfg.model.dim();
        while self
            .cfg
            .snapshot_times
            .get(self.next_snapshot)
            .is_some_and(|&ts| ts <= t + 0.5 * self.cfg.dt)
        {
            self.snapshots
                .push(DensityMatrix::new(CMatrix::from_column_slice(d, d, rho)).expect("square"));
            self.next_snapshot += 1;
        }
    }

    /// Crossing of a threshold between charges `n0` and `n1` during `[t, t+dt]`.
    fn crossing(&self, t: f64, n0: f64, n1: f64, interpolate: bool) -> Option<Outcome> {
        let dt = self.cfg.dt;
        let at = |level: f64| {
            if interpolate && n1 != n0 {
                t + dt * ((level - n0) / (n1 - n0)).clamp(0.0, 1.0)
            } else {
                t + dt
            }
        };
        if let Some(u) = self.cfg.thresholds.upper {
            if n1 >= u {
                return Some(Outcome::Hit { time: at(u), side: Side::Upper });
            }
        }
        if let Some(l) = self.cfg.thresholds.lower {
            if n1 <= l {
                return Some(Outcome::Hit { time: at(l), side: Side::Lower });
            }
        }
        None
    }

    fn finish(self, outcome: Outcome, n: f64, t: f64, jumps: Vec<JumpEvent>, steps: u64, repairs: u64) -> Result<TrajectoryRecord> {
        if repairs as f64 > REPAIR_FRACTION * steps.max(1) as f64 {
            return Err(Error::PositivityRepairs {
                trajectory: self.index,
                repairs,
                steps,
            });
        }
        let mut path = self.path;
        if self.cfg.path_stride > 0 {
            path.push((t, n));
        }
        Ok(TrajectoryRecord {
            index: self.index,
            outcome,
            final_charge: n,
            path,
            jumps,
            snapshots: self.snapshots,
            steps,
            repairs,
        })
    }
}

fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ index)
}

fn total_steps(cfg: &TrajectoryConfig) -> u64 {
    (cfg.horizon / cfg.dt).round() as u64
}

fn run_ensemble<F>(cfg: &TrajectoryConfig, one: F) -> Result<TrajectoryEnsemble>
where
    F: Fn(u64) -> Result<TrajectoryRecord> + Sync + Send,
{
    let records = (0..cfg.trajectories as u64)
        .into_par_iter()
        .map(one)
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryEnsemble {
        records,
        horizon: cfg.horizon,
        dt: cfg.dt,
        seed: cfg.seed,
    })
}

/// Quantum-jump trajectories with at most one jump per step.
pub fn simulate_jump(cfg: &TrajectoryConfig) -> Result<TrajectoryEnsemble> {
    cfg.validate()?;
    let d = cfg.model.dim();
    let dt = cfg.dt;
    let m0 = flat(&(CMatrix::identity(d, d) - cfg.model.effective_hamiltonian() * C64::new(0.0, dt)));
    // unmonitored emissions are averaged into the no-jump map, to first order
    let unmonitored: Vec<Vec<C64>> = cfg
        .model
        .channels()
        .iter()
        .filter(|ch| !ch.monitored)
        .map(|ch| flat(&(&ch.operator * C64::new(dt.sqrt(), 0.0))))
        .collect();
    let monitored: Vec<(usize, Vec<C64>, Vec<C64>, f64)> = cfg
        .model
        .monitored()
        .map(|(k, ch)| (k, flat(&ch.operator), flat(&ch.rate_operator()), ch.weight))
        .collect();
    let steps = total_steps(cfg);
    let rho0 = flat(cfg.initial.matrix());

    run_ensemble(cfg, |index| {
        let mut rng = rng_for(cfg.seed, index);
        let mut mon = Monitor::new(cfg, index);
        let mut rho = rho0.clone();
        normalize(&mut rho, d, index)?;
        let mut next = vec![C64::new(0.0, 0.0); d * d];
        let mut tmp = vec![C64::new(0.0, 0.0); d * d];
        let mut extra = vec![C64::new(0.0, 0.0); d * d];
        let mut n = 0.0;
        let mut jumps = Vec::new();
        let mut repairs = 0;
        for step in 0..steps {
            let t = step as f64 * dt;
            mon.observe(step, t, n, &rho);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut fired = None;
            for (k, (_, _, ldl, _)) in monitored.iter().enumerate() {
                acc += dt * trace_product(ldl, &rho, d).re;
                if u < acc {
                    fired = Some(k);
                    break;
                }
            }
            match fired {
                Some(k) => {
                    let (channel, l, _, weight) = &monitored[k];
                    sandwich(l, &rho, d, &mut tmp, &mut next);
                    jumps.push(JumpEvent { time: t + dt, channel: *channel });
                    let n1 = n + weight;
                    if let Some(outcome) = mon.crossing(t, n, n1, false) {
                        return mon.finish(outcome, n1, t + dt, jumps, step + 1, repairs);
                    }
                    n = n1;
                }
                None => {
                    sandwich(&m0, &rho, d, &mut tmp, &mut next);
                    for l in &unmonitored {
                        sandwich(l, &rho, d, &mut tmp, &mut extra);
                        next.iter_mut().zip(&extra).for_each(|(a, b)| *a += b);
                    }
                }
            }
            std::mem::swap(&mut rho, &mut next);
            if normalize(&mut rho, d, index)? {
                repairs += 1;
            }
        }
        mon.observe(steps, steps as f64 * dt, n, &rho);
        mon.finish(Outcome::Censored, n, steps as f64 * dt, jumps, steps, repairs)
    })
}

/// Diffusive (homodyne-type) trajectories with linear interpolation of the
/// threshold crossing inside a step.
pub fn simulate_diffusion(cfg: &TrajectoryConfig) -> Result<TrajectoryEnsemble> {
    cfg.validate()?;
    let d = cfg.model.dim();
    let dt = cfg.dt;
    let base = flat(&(CMatrix::identity(d, d) - cfg.model.effective_hamiltonian() * C64::new(0.0, dt)));
    let channels: Vec<(Vec<C64>, f64)> = cfg.model.monitored().map(|(_, ch)| (flat(&ch.rotated()), ch.weight)).collect();
    let products: Vec<Vec<Vec<C64>>> = cfg
        .model
        .monitored()
        .map(|(_, a)| {
            cfg.model
                .monitored()
                .map(|(_, b)| flat(&(a.rotated() * b.rotated())))
                .collect()
        })
        .collect();
    let unmonitored: Vec<Vec<C64>> = cfg
        .model
        .channels()
        .iter()
        .filter(|ch| !ch.monitored)
        .map(|ch| flat(&(&ch.operator * C64::new(dt.sqrt(), 0.0))))
        .collect();
    let steps = total_steps(cfg);
    let rho0 = flat(cfg.initial.matrix());
    let sqrt_dt = dt.sqrt();
    let nch = channels.len();

    run_ensemble(cfg, |index| {
        let mut rng = rng_for(cfg.seed, index);
        let mut mon = Monitor::new(cfg, index);
        let mut rho = rho0.clone();
        normalize(&mut rho, d, index)?;
        let mut m = vec![C64::new(0.0, 0.0); d * d];
        let mut next = vec![C64::new(0.0, 0.0); d * d];
        let mut tmp = vec![C64::new(0.0, 0.0); d * d];
        let mut extra = vec![C64::new(0.0, 0.0); d * d];
        let mut dy = vec![0.0; nch];
        let mut n = 0.0;
        let mut repairs = 0;
        for step in 0..steps {
            let t = step as f64 * dt;
            mon.observe(step, t, n, &rho);
            let mut dn = 0.0;
            for (k, (b, weight)) in channels.iter().enumerate() {
                let x = 2.0 * trace_product(b, &rho, d).re;
                let dw: f64 = rng.sample::<f64, _>(StandardNormal) * sqrt_dt;
                dy[k] = x * dt + dw;
                dn += weight * dy[k];
            }
            m.copy_from_slice(&base);
            for (k, (b, _)) in channels.iter().enumerate() {
                for (mi, bi) in m.iter_mut().zip(b) {
                    *mi += bi * dy[k];
                }
                for (l, prod) in products[k].iter().enumerate() {
                    let coeff = 0.5 * (dy[k] * dy[l] - if k == l { dt } else { 0.0 });
                    for (mi, pi) in m.iter_mut().zip(prod) {
                        *mi += pi * coeff;
                    }
                }
            }
            sandwich(&m, &rho, d, &mut tmp, &mut next);
            for l in &unmonitored {
                sandwich(l, &rho, d, &mut tmp, &mut extra);
                next.iter_mut().zip(&extra).for_each(|(a, b)| *a += b);
            }
            std::mem::swap(&mut rho, &mut next);
            if normalize(&mut rho, d, index)? {
                repairs += 1;
            }
            let n1 = n + dn;
            if let Some(outcome) = mon.crossing(t, n, n1, true) {
                return mon.finish(outcome, n1, t + dt, Vec::new(), step + 1, repairs);
            }
            n = n1;
        }
        mon.observe(steps, steps as f64 * dt, n, &rho);
        mon.finish(Outcome::Censored, n, steps as f64 * dt, Vec::new(), steps, repairs)
    })
}

pub fn simulate(cfg: &TrajectoryConfig) -> Result<TrajectoryEnsemble> {
    match cfg.unravelling {
        Unravelling::Jump => simulate_jump(cfg),
        Unravelling::Diffusion => simulate_diffusion(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{decay_qubit, EXCITED};

    fn decay_config(n: usize) -> TrajectoryConfig {
        let mut cfg = TrajectoryConfig::new(
            decay_qubit(1.0),
            DensityMatrix::basis(2, EXCITED),
            Unravelling::Jump,
            ThresholdSpec { upper: Some(1.0), lower: None },
        );
        cfg.dt = 1e-3;
        cfg.horizon = 20.0;
        cfg.trajectories = n;
        cfg.seed = 7;
        cfg
    }

    #[test]
    fn step_size_limits() {
        let mut cfg = decay_config(1);
        cfg.dt = 0.25;
        assert!(matches!(simulate_jump(&cfg), Err(Error::StepTooLarge { .. })));
    }

    #[test]
    fn decay_hit_times_are_exponential() {
        let e = simulate_jump(&decay_config(4000)).unwrap();
        let (mean, se) = e.mean_hit_time().unwrap();
        assert!((mean - 1.0).abs() < 3.0 * se, "{mean} ± {se}");
        assert!(e.records.iter().all(|r| r.jumps.len() == 1));
    }

    #[test]
    fn same_seed_same_ensemble() {
        let a = simulate_jump(&decay_config(50)).unwrap();
        let b = simulate_jump(&decay_config(50)).unwrap();
        assert_eq!(a, b);
        let mut cfg = decay_config(50);
        cfg.seed = 8;
        assert_ne!(simulate_jump(&cfg).unwrap(), a);
    }

    #[test]
    fn all_censored_histogram() {
        let mut cfg = decay_config(20);
        cfg.initial = DensityMatrix::basis(2, crate::models::GROUND);
        cfg.horizon = 1.0;
        let e = simulate_jump(&cfg).unwrap();
        let h = fpt_histogram(&e, 10);
        assert!(h.density.is_empty());
        assert_eq!(h.censored_fraction, 1.0);
        assert!(matches!(e.mean_hit_time(), Err(Error::EmptyEnsemble)));
    }

    #[test]
    fn csv_rows_per_trajectory() {
        let e = simulate_jump(&decay_config(5)).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf, &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert_eq!(text.lines().nth(1), Some("trajectory,hit_time,censored"));
    }
}
