//! Charge-resolved master equation for counted quantum jumps.
//!
//! `∂ₜρ_N = ℒ₀ρ_N + Σₖ 𝒥ₖ ρ_{N−νₖ}` on a finite window of integer charges.
//! Cells outside the window are identically zero, so the window edges absorb.

use crate::block::BlockGenerator;
use crate::error::{Error, Result};
use crate::fpt::{FptResult, Moments, Provenance, TAIL_TOL};
use crate::operator::{build_jump_super, build_no_jump, DensityMatrix, LindbladModel, C64};
use crate::state::{march, ChargeState, Horizon, March};

/// Largest window the auto-sizer will try.
pub const MAX_CELLS: usize = 8192;

/// Edge occupancy below which a truncated side counts as unbounded.
pub const EDGE_TOL: f64 = 1e-12;

/// Integer charge window `[lower, upper]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChargeWindow {
    lower: i64,
    upper: i64,
}

impl ChargeWindow {
    pub fn new(lower: i64, upper: i64) -> Result<Self> {
        if lower > 0 || upper < 0 {
            return Err(Error::InvalidWindow(format!(
                "window [{lower}, {upper}] must contain the initial charge 0"
            )));
        }
        if lower >= upper {
            return Err(Error::InvalidWindow(format!("window [{lower}, {upper}] is empty or a point")));
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> i64 {
        self.lower
    }

    pub fn upper(&self) -> i64 {
        self.upper
    }

    pub fn cells(&self) -> usize {
        (self.upper - self.lower + 1) as usize
    }

    /// Index of charge 0.
    pub fn origin(&self) -> usize {
        (-self.lower) as usize
    }
}

/// One side of the absorbing region.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Boundary<T> {
    /// Absorb when the charge first reaches this value.
    Threshold(T),
    /// No boundary; the window is widened until its edge is never populated.
    Unbounded,
}

fn integer_weights(model: &LindbladModel) -> Result<Vec<Option<i64>>> {
    model
        .channels()
        .iter()
        .enumerate()
        .map(|(k, ch)| {
            if !ch.monitored {
                Ok(None)
            } else if ch.weight == 0.0 {
                Err(Error::ZeroWeight { index: k })
            } else if ch.weight.fract() != 0.0 || ch.weight.abs() > 1e6 {
                Err(Error::NonIntegerWeight {
                    index: k,
                    weight: ch.weight,
                })
            } else {
                Ok(Some(ch.weight as i64))
            }
        })
        .collect()
}

/// Block generator of the charge-resolved jump equation on `window`.
///
/// Unmonitored channels feed back into the diagonal block.
pub fn build_block_generator(model: &LindbladModel, window: ChargeWindow) -> Result<BlockGenerator> {
    let weights = integer_weights(model)?;
    let mut g = BlockGenerator::new(model.dim(), window.cells(), 1.0);
    let mut diag = build_no_jump(model);
    for (k, w) in weights.iter().enumerate() {
        let jump = build_jump_super(model, k)?;
        match w {
            Some(nu) => g.add_band(*nu as isize, jump),
            None => diag = diag + jump,
        }
    }
    g.add_band(0, diag);
    Ok(g)
}

/// `ρ_N(0) = δ_{N,0} ρ(0)`.
pub fn initial_state(window: ChargeWindow, rho: &DensityMatrix) -> Result<ChargeState> {
    ChargeState::concentrated(rho, window.cells(), window.origin(), window.lower as f64, 1.0, 1.0)
}

/// `(N, P_R(N, t))` with integer charges.
pub fn charge_distribution(state: &ChargeState) -> Result<Vec<(i64, f64)>> {
    Ok(state
        .charge_distribution()?
        .into_iter()
        .map(|(n, p)| (n.round() as i64, p))
        .collect())
}

/// Window implied by the boundaries; unbounded sides start `width` cells out.
fn window_for(upper: Boundary<i64>, lower: Boundary<i64>, width: (i64, i64)) -> Result<ChargeWindow> {
    let b = match upper {
        Boundary::Threshold(n) if n <= 0 => {
            return Err(Error::InvalidWindow(format!("upper threshold {n} must be positive")))
        }
        Boundary::Threshold(n) => n - 1,
        Boundary::Unbounded => width.1,
    };
    let a = match lower {
        Boundary::Threshold(n) if n >= 0 => {
            return Err(Error::InvalidWindow(format!("lower threshold {n} must be negative")))
        }
        Boundary::Threshold(n) => n + 1,
        Boundary::Unbounded => -width.0,
    };
    if a == b {
        // both thresholds adjacent to 0: a single live cell still needs a second to form a window
        return Err(Error::InvalidWindow(
            "thresholds at -1 and +1 leave no room for a window".into(),
        ));
    }
    ChargeWindow::new(a, b)
}

/// Window the auto-sizing starts from, before any widening.
pub fn initial_window(upper: Boundary<i64>, lower: Boundary<i64>) -> Result<ChargeWindow> {
    window_for(upper, lower, (16, 16))
}

/// A first-passage problem for the jump unravelling.
#[derive(Clone, Debug)]
pub struct JumpProblem {
    pub model: LindbladModel,
    pub initial: DensityMatrix,
    pub upper: Boundary<i64>,
    pub lower: Boundary<i64>,
    pub dt: f64,
    pub horizon: Horizon,
    /// Record `P_R(N, t)` for every cell at every sample.
    pub record_cells: bool,
}

impl JumpProblem {
    /// Problem with the default step `0.01 / rate` and an open-ended horizon.
    pub fn new(model: LindbladModel, initial: DensityMatrix, upper: Boundary<i64>, lower: Boundary<i64>) -> Self {
        let rate = model.rate_scale().max(1e-12);
        Self {
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

    fn initial_widths(&self) -> (i64, i64) {
        (16, 16)
    }
}

#[derive(Clone, Debug)]
pub struct JumpSolution {
    pub window: ChargeWindow,
    pub result: FptResult,
    /// Flux through the lower and upper thresholds, sample by sample.
    pub flux_lower: Vec<f64>,
    pub flux_upper: Vec<f64>,
    pub cells: Option<Vec<Vec<f64>>>,
    pub final_state: ChargeState,
}

impl JumpSolution {
    pub fn charges(&self) -> Vec<i64> {
        (self.window.lower()..=self.window.upper()).collect()
    }
}

/// Solves for the FPT density, widening any unbounded side until its edge
/// stays empty to `EDGE_TOL` over the whole run.
pub fn solve(problem: &JumpProblem) -> Result<JumpSolution> {
    problem.model.require_channels()?;
    let mut widths = problem.initial_widths();
    loop {
        let window = window_for(problem.upper, problem.lower, widths)?;
        if window.cells() > MAX_CELLS {
            return Err(Error::WindowLimit { limit: MAX_CELLS });
        }
        let generator = build_block_generator(&problem.model, window)?;
        let start = initial_state(window, &problem.initial)?;
        let run = march(&generator, &start, problem.dt, problem.horizon, problem.record_cells)?;
        let lower_open = problem.lower == Boundary::Unbounded && run.edge_occupancy.0 >= EDGE_TOL;
        let upper_open = problem.upper == Boundary::Unbounded && run.edge_occupancy.1 >= EDGE_TOL;
        if !lower_open && !upper_open {
            return finish(problem, window, run);
        }
        log::debug!(
            "window [{}, {}] edge occupancy {:?}; widening",
            window.lower(),
            window.upper(),
            run.edge_occupancy
        );
        if lower_open {
            widths.0 *= 2;
        }
        if upper_open {
            widths.1 *= 2;
        }
    }
}

fn finish(problem: &JumpProblem, window: ChargeWindow, run: March) -> Result<JumpSolution> {
    let density: Vec<f64> = run
        .flux_lower
        .iter()
        .zip(&run.flux_upper)
        .map(|(lo, up)| {
            let keep_lo = matches!(problem.lower, Boundary::Threshold(_));
            let keep_up = matches!(problem.upper, Boundary::Threshold(_));
            (if keep_lo { *lo } else { 0.0 }) + (if keep_up { *up } else { 0.0 })
        })
        .collect();
    if let Some((i, f)) = density.iter().enumerate().find(|(_, &f)| f < -1e-12) {
        return Err(Error::Physics(format!("negative FPT density {f:.3e} at sample {i}")));
    }
    let result = FptResult::new(run.dt, run.survival, density, Provenance::DeterministicJump)?;
    Ok(JumpSolution {
        window,
        result,
        flux_lower: run.flux_lower,
        flux_upper: run.flux_upper,
        cells: run.cells,
        final_state: run.final_state,
    })
}

/// Exact hitting-time moments from the resolvent of the absorbing generator.
///
/// With `y₁ = −V⁻¹x₀` and `y₂ = −V⁻¹y₁`: `E[τ] = Σ tr y₁`, `E[τ²] = 2 Σ tr y₂`.
/// Absorption through each threshold is its boundary flux evaluated on `y₁`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResolventMoments {
    pub moments: Moments,
    /// Probability of leaving through the lower and upper thresholds.
    pub absorption_lower: f64,
    pub absorption_upper: f64,
    pub window: ChargeWindow,
}

/// Moments of the first-passage time, widening unbounded sides until the
/// probability of escaping through them is below `EDGE_TOL`.
pub fn resolvent_moments(
    model: &LindbladModel,
    initial: &DensityMatrix,
    upper: Boundary<i64>,
    lower: Boundary<i64>,
) -> Result<ResolventMoments> {
    model.require_channels()?;
    let mut widths = (16i64, 16i64);
    loop {
        let window = window_for(upper, lower, widths)?;
        if window.cells() > MAX_CELLS {
            return Err(Error::WindowLimit { limit: MAX_CELLS });
        }
        let generator = build_block_generator(model, window)?;
        let start = initial_state(window, initial)?;
        let (moments, leak_lo, leak_up) = resolvent_moments_on(&generator, start.stacked())?;
        let lower_open = lower == Boundary::Unbounded && leak_lo >= EDGE_TOL;
        let upper_open = upper == Boundary::Unbounded && leak_up >= EDGE_TOL;
        if !lower_open && !upper_open {
            let absorption = moments.absorption;
            if (absorption - 1.0).abs() > 1e-8 {
                return Err(Error::TailNotConverged {
                    survival: 1.0 - absorption,
                    horizon: f64::INFINITY,
                    required_horizon: None,
                });
            }
            return Ok(ResolventMoments {
                moments,
                absorption_lower: leak_lo,
                absorption_upper: leak_up,
                window,
            });
        }
        if lower_open {
            widths.0 *= 2;
        }
        if upper_open {
            widths.1 *= 2;
        }
    }
}

/// `(moments, lower exit probability, upper exit probability)` for a fixed generator.
pub fn resolvent_moments_on(generator: &BlockGenerator, x0: &[C64]) -> Result<(Moments, f64, f64)> {
    let lu = generator
        .shifted_lu(C64::new(1.0, 0.0), C64::new(0.0, 0.0))
        .map_err(|e| match e {
            Error::SingularBlock { .. } => Error::TailNotConverged {
                survival: f64::NAN,
                horizon: f64::INFINITY,
                required_horizon: None,
            },
            other => other,
        })?;
    let neg = |v: Vec<C64>| -> Vec<C64> { v.into_iter().map(|z| -z).collect() };
    let y1 = neg(lu.solve(x0));
    let y2 = neg(lu.solve(&y1));
    let w = generator.cell_weight();
    let total = |y: &[C64]| w * generator.cell_traces(y).iter().sum::<f64>();
    let (lo, up) = generator.boundary_flux(&y1);
    let mean = total(&y1);
    let second = 2.0 * total(&y2);
    if !(mean.is_finite() && second.is_finite()) || mean < 0.0 {
        return Err(Error::TailNotConverged {
            survival: f64::NAN,
            horizon: f64::INFINITY,
            required_horizon: None,
        });
    }
    Ok((Moments::from_raw(mean, second, lo + up), lo, up))
}
