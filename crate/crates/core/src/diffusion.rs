//! Quantum Fokker–Planck equation for diffusive (homodyne-type) charges.
//!
//! `∂ₜρ_N = ℒρ_N − 𝒦 ∂_N ρ_N + ½ K_diff ∂²_N ρ_N`, discretized with central
//! differences on a uniform grid. Nodes just outside the grid are held at
//! zero, which makes both ends absorbing. Node matrices are densities per unit
//! charge, so weights carry a factor `ΔN`.

use crate::block::BlockGenerator;
use crate::error::{Error, Result};
use crate::fpt::{FptResult, Moments, Provenance, TAIL_TOL};
use crate::jump::{resolvent_moments_on, Boundary, EDGE_TOL};
use crate::models::{sigma_x, sigma_y, sigma_z};
use crate::operator::{build_liouvillian, c, DensityMatrix, LindbladModel, Superoperator};
use crate::state::{march, ChargeState, Horizon, March};

/// Largest grid the auto-sizer will try.
pub const MAX_NODES: usize = 1 << 15;

/// Péclet number above which central differences may oscillate.
pub const PECLET_LIMIT: f64 = 2.0;

/// Uniform grid `a, a+ΔN, …, b` containing the node `0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChargeGrid {
    lower: f64,
    upper: f64,
    step: f64,
    nodes: usize,
}

fn steps_of(x: f64, step: f64, what: &str) -> Result<i64> {
    let k = x / step;
    if (k - k.round()).abs() > 1e-9 * k.abs().max(1.0) {
        return Err(Error::InvalidGrid(format!(
            "{what} {x} is not a multiple of the grid step {step}"
        )));
    }
    Ok(k.round() as i64)
}

impl ChargeGrid {
    pub fn new(lower: f64, upper: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidGrid(format!("grid step must be positive, got {step}")));
        }
        if !(lower < 0.0 && upper > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "grid [{lower}, {upper}] must contain 0 strictly inside"
            )));
        }
        let lo = steps_of(lower, step, "lower edge")?;
        let hi = steps_of(upper, step, "upper edge")?;
        let nodes = (hi - lo + 1) as usize;
        if nodes < 3 {
            return Err(Error::InvalidGrid("a grid needs at least three nodes".into()));
        }
        Ok(Self {
            lower: lo as f64 * step,
            upper: hi as f64 * step,
            step,
            nodes,
        })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Index of the node at `N = 0`.
    pub fn origin(&self) -> usize {
        (-self.lower / self.step).round() as usize
    }

    pub fn charge(&self, i: usize) -> f64 {
        self.lower + i as f64 * self.step
    }
}

/// `𝒦 = Σₖ νₖ 𝒦[Lₖ e^{−iφₖ}]` with `𝒦[A]ρ = Aρ + ρA†`, and `K_diff = Σₖ νₖ²`,
/// both over monitored channels.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftSuperoperator {
    pub drift: Superoperator,
    pub diffusion: f64,
}

impl DriftSuperoperator {
    pub fn new(model: &LindbladModel) -> Result<Self> {
        model.require_channels()?;
        let mut drift = Superoperator::zero(model.dim());
        let mut diffusion = 0.0;
        for (_, ch) in model.monitored() {
            drift = drift + Superoperator::anticommutator_like(&ch.rotated()).scale(c(ch.weight));
            diffusion += ch.weight * ch.weight;
        }
        if !(diffusion > 0.0) {
            return Err(Error::InvalidModel(
                "diffusive charge needs a monitored channel with nonzero weight".into(),
            ));
        }
        Ok(Self { drift, diffusion })
    }

    /// `‖𝒦‖₂ ΔN / K_diff`.
    pub fn peclet(&self, step: f64) -> f64 {
        self.drift.spectral_norm() * step / self.diffusion
    }
}

fn bands(model: &LindbladModel, grid: &ChargeGrid) -> Result<(Superoperator, Superoperator, Superoperator)> {
    let k = DriftSuperoperator::new(model)?;
    let pe = k.peclet(grid.step);
    if pe > PECLET_LIMIT {
        log::warn!(
            "grid Péclet number {pe:.3} exceeds {PECLET_LIMIT}; central differences may oscillate, reduce the charge step"
        );
    }
    let d = model.dim();
    let h = grid.step;
    let id = Superoperator::identity(d);
    let diag = build_liouvillian(model) - id.scale(c(k.diffusion / (h * h)));
    let sub = k.drift.scale(c(1.0 / (2.0 * h))) + id.scale(c(k.diffusion / (2.0 * h * h)));
    let sup = k.drift.scale(c(-1.0 / (2.0 * h))) + id.scale(c(k.diffusion / (2.0 * h * h)));
    Ok((diag, sub, sup))
}

/// Central-difference generator with absorbing ends.
pub fn build_fokker_planck_generator(model: &LindbladModel, grid: &ChargeGrid) -> Result<BlockGenerator> {
    let (diag, sub, sup) = bands(model, grid)?;
    let mut g = BlockGenerator::new(model.dim(), grid.nodes, grid.step);
    g.add_band(0, diag);
    g.add_band(1, sub);
    g.add_band(-1, sup);
    Ok(g)
}

/// Same stencil with zero-flux ends: what would leave the grid is returned
/// to the edge node, so total weight is conserved.
pub fn build_reflecting_generator(model: &LindbladModel, grid: &ChargeGrid) -> Result<BlockGenerator> {
    let (_, sub, sup) = bands(model, grid)?;
    let mut g = build_fokker_planck_generator(model, grid)?;
    g.add_diagonal_correction(0, sup);
    g.add_diagonal_correction(grid.nodes - 1, sub);
    Ok(g)
}

/// All weight on node 0, as a density `ρ(0)/ΔN`.
pub fn initial_state(grid: &ChargeGrid, rho: &DensityMatrix) -> Result<ChargeState> {
    ChargeState::concentrated(rho, grid.nodes, grid.origin(), grid.lower, grid.step, grid.step)
}

/// Node densities `tr ρ_N / G` of the surviving ensemble.
pub fn conditioned_final_distribution(state: &ChargeState) -> Result<Vec<(f64, f64)>> {
    let g = state.survival();
    if !(g > 0.0) {
        return Err(Error::Physics("no surviving weight to condition on".into()));
    }
    let w = state.cell_weight();
    Ok(state
        .charge_distribution()?
        .into_iter()
        .map(|(n, p)| (n, p / (w * g)))
        .collect())
}

/// One grid node for plotting: charge, density `tr ρ_N` and, for qubits, the
/// unnormalized Bloch components `tr(σᵢ ρ_N)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeSample {
    pub charge: f64,
    pub density: f64,
    pub bloch: Option<[f64; 3]>,
}

pub fn node_dump(state: &ChargeState) -> Vec<NodeSample> {
    let paulis = (state.hilbert_dim() == 2).then(|| [sigma_x(), sigma_y(), sigma_z()]);
    (0..state.cells())
        .map(|i| {
            let rho = state.cell(i);
            NodeSample {
                charge: state.charge(i),
                density: rho.trace().re,
                bloch: paulis.as_ref().map(|p| {
                    [
                        rho.expectation(&p[0]).re,
                        rho.expectation(&p[1]).re,
                        rho.expectation(&p[2]).re,
                    ]
                }),
            }
        })
        .collect()
}

/// A first-passage problem for a diffusive charge.
#[derive(Clone, Debug)]
pub struct DiffusionProblem {
    pub model: LindbladModel,
    pub initial: DensityMatrix,
    pub upper: Boundary<f64>,
    pub lower: Boundary<f64>,
    pub step: f64,
    pub dt: f64,
    pub horizon: Horizon,
    pub record_cells: bool,
}

impl DiffusionProblem {
    /// Defaults: `ΔN = 0.01`, `Δt = 0.01 / rate`, open-ended horizon.
    pub fn new(model: LindbladModel, initial: DensityMatrix, upper: Boundary<f64>, lower: Boundary<f64>) -> Self {
        let rate = model.rate_scale().max(1.0);
        Self {
            step: 0.01,
            dt: 0.01 / rate,
            horizon: Horizon::UntilAbsorbed {
                tail: TAIL_TOL * 0.1,
                max: 1e4 / rate,
            },
            model,
            initial,
            upper,
            lower,
            record_cells: false,
        }
    }
}

/// Grid for the given boundaries: a threshold `N_th` puts the first zero
/// node exactly at `N_th`; unbounded sides extend `width` in charge units.
fn grid_for(upper: Boundary<f64>, lower: Boundary<f64>, step: f64, width: (f64, f64)) -> Result<ChargeGrid> {
    let snap = |x: f64| (x / step).ceil() * step;
    let b = match upper {
        Boundary::Threshold(n) if n <= 0.0 => {
            return Err(Error::InvalidGrid(format!("upper threshold {n} must be positive")))
        }
        Boundary::Threshold(n) => steps_of(n, step, "upper threshold")? as f64 * step - step,
        Boundary::Unbounded => snap(width.1),
    };
    let a = match lower {
        Boundary::Threshold(n) if n >= 0.0 => {
            return Err(Error::InvalidGrid(format!("lower threshold {n} must be negative")))
        }
        Boundary::Threshold(n) => steps_of(n, step, "lower threshold")? as f64 * step + step,
        Boundary::Unbounded => -snap(width.0),
    };
    ChargeGrid::new(a, b, step)
}

fn initial_widths(upper: Boundary<f64>, lower: Boundary<f64>) -> (f64, f64) {
    let scale = [upper, lower]
        .iter()
        .filter_map(|b| match b {
            Boundary::Threshold(n) => Some(n.abs()),
            Boundary::Unbounded => None,
        })
        .fold(1.0f64, f64::max);
    (4.0 * scale, 4.0 * scale)
}

/// Grid the auto-sizing starts from, before any widening.
pub fn initial_grid(upper: Boundary<f64>, lower: Boundary<f64>, step: f64) -> Result<ChargeGrid> {
    grid_for(upper, lower, step, initial_widths(upper, lower))
}

#[derive(Clone, Debug)]
pub struct DiffusionSolution {
    pub grid: ChargeGrid,
    pub result: FptResult,
    pub flux_lower: Vec<f64>,
    pub flux_upper: Vec<f64>,
    pub cells: Option<Vec<Vec<f64>>>,
    pub final_state: ChargeState,
}

/// Solves for the FPT density, widening unbounded sides until their edge
/// nodes stay empty to `EDGE_TOL`.
pub fn solve(problem: &DiffusionProblem) -> Result<DiffusionSolution> {
    let mut widths = initial_widths(problem.upper, problem.lower);
    loop {
        let grid = grid_for(problem.upper, problem.lower, problem.step, widths)?;
        if grid.nodes() > MAX_NODES {
            return Err(Error::WindowLimit { limit: MAX_NODES });
        }
        let generator = build_fokker_planck_generator(&problem.model, &grid)?;
        let start = initial_state(&grid, &problem.initial)?;
        let run = march(&generator, &start, problem.dt, problem.horizon, problem.record_cells)?;
        let lower_open = problem.lower == Boundary::Unbounded && run.edge_occupancy.0 >= EDGE_TOL;
        let upper_open = problem.upper == Boundary::Unbounded && run.edge_occupancy.1 >= EDGE_TOL;
        if !lower_open && !upper_open {
            return finish(problem, grid, run);
        }
        log::debug!(
            "grid [{}, {}] edge occupancy {:?}; widening",
            grid.lower(),
            grid.upper(),
            run.edge_occupancy
        );
        if lower_open {
            widths.0 *= 2.0;
        }
        if upper_open {
            widths.1 *= 2.0;
        }
    }
}

fn finish(problem: &DiffusionProblem, grid: ChargeGrid, run: March) -> Result<DiffusionSolution> {
    let keep_lo = matches!(problem.lower, Boundary::Threshold(_));
    let keep_up = matches!(problem.upper, Boundary::Threshold(_));
    let density: Vec<f64> = run
        .flux_lower
        .iter()
        .zip(&run.flux_upper)
        .map(|(lo, up)| (if keep_lo { *lo } else { 0.0 }) + (if keep_up { *up } else { 0.0 }))
        .collect();
    if let Some((i, f)) = density.iter().enumerate().find(|(_, &f)| f < -1e-10) {
        return Err(Error::Physics(format!(
            "negative FPT density {f:.3e} at sample {i}; reduce the charge step"
        )));
    }
    let result = FptResult::new(run.dt, run.survival, density, Provenance::DeterministicDiffusion)?;
    Ok(DiffusionSolution {
        grid,
        result,
        flux_lower: run.flux_lower,
        flux_upper: run.flux_upper,
        cells: run.cells,
        final_state: run.final_state,
    })
}

/// Exact hitting-time moments of the discretized problem from its resolvent,
/// widening unbounded sides until escape through them is below `EDGE_TOL`.
pub fn resolvent_moments(
    model: &LindbladModel,
    initial: &DensityMatrix,
    upper: Boundary<f64>,
    lower: Boundary<f64>,
    step: f64,
) -> Result<(Moments, ChargeGrid)> {
    let mut widths = initial_widths(upper, lower);
    loop {
        let grid = grid_for(upper, lower, step, widths)?;
        if grid.nodes() > MAX_NODES {
            return Err(Error::WindowLimit { limit: MAX_NODES });
        }
        let generator = build_fokker_planck_generator(model, &grid)?;
        let start = initial_state(&grid, initial)?;
        let (moments, leak_lo, leak_up) = resolvent_moments_on(&generator, start.stacked())?;
        let lower_open = lower == Boundary::Unbounded && leak_lo >= EDGE_TOL;
        let upper_open = upper == Boundary::Unbounded && leak_up >= EDGE_TOL;
        if !lower_open && !upper_open {
            return Ok((moments, grid));
        }
        if lower_open {
            widths.0 *= 2.0;
        }
        if upper_open {
            widths.1 *= 2.0;
        }
    }
}
