//! Charge-resolved states and their evolution under absorbing generators.

use crate::block::BlockGenerator;
use crate::error::{Error, Result};
use crate::operator::{unvectorize, vec_trace, vectorize, CMatrix, DensityMatrix, C64};
use crate::propagate::Propagator;

/// Cell traces in `[−CLIP_SILENT, 0)` are round-off.
pub const CLIP_SILENT: f64 = 1e-12;
/// Cell weights below `−CLIP_FATAL` mean the integrator failed.
pub const CLIP_FATAL: f64 = 1e-9;

/// Stack of `d × d` cell matrices `ρ_N` on equally spaced charges
/// `N_i = lower + i·spacing`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChargeState {
    d: usize,
    lower: f64,
    spacing: f64,
    cell_weight: f64,
    data: Vec<C64>,
    time: f64,
}

impl ChargeState {
    /// All weight in cell `origin`, scaled by `1 / cell_weight`.
    pub fn concentrated(
        rho: &DensityMatrix,
        cells: usize,
        origin: usize,
        lower: f64,
        spacing: f64,
        cell_weight: f64,
    ) -> Result<Self> {
        if origin >= cells {
            return Err(Error::InvalidState(format!(
                "origin cell {origin} outside {cells} cells"
            )));
        }
        rho.validate(1e-9)?;
        let n = rho.dim() * rho.dim();
        let mut data = vec![C64::new(0.0, 0.0); cells * n];
        let v = vectorize(rho);
        for (dst, src) in data[origin * n..(origin + 1) * n].iter_mut().zip(v.iter()) {
            *dst = src / cell_weight;
        }
        Ok(Self {
            d: rho.dim(),
            lower,
            spacing,
            cell_weight,
            data,
            time: 0.0,
        })
    }

    pub fn from_stacked(
        template: &ChargeState,
        data: Vec<C64>,
        time: f64,
    ) -> Self {
        Self {
            data,
            time,
            ..template.clone()
        }
    }

    pub fn hilbert_dim(&self) -> usize {
        self.d
    }

    pub fn cells(&self) -> usize {
        self.data.len() / (self.d * self.d)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn cell_weight(&self) -> f64 {
        self.cell_weight
    }

    pub fn charge(&self, i: usize) -> f64 {
        self.lower + i as f64 * self.spacing
    }

    pub fn charges(&self) -> Vec<f64> {
        (0..self.cells()).map(|i| self.charge(i)).collect()
    }

    pub fn stacked(&self) -> &[C64] {
        &self.data
    }

    pub fn cell(&self, i: usize) -> DensityMatrix {
        let n = self.d * self.d;
        unvectorize(&self.data[i * n..(i + 1) * n], self.d).expect("cell has d² entries")
    }

    /// Raw `tr ρ_N`, without the cell weight.
    pub fn traces(&self) -> Vec<f64> {
        let n = self.d * self.d;
        self.data
            .chunks(n)
            .map(|c| vec_trace(c, self.d).re)
            .collect()
    }

    /// `G = w Σ_N tr ρ_N`.
    pub fn survival(&self) -> f64 {
        self.cell_weight * self.traces().iter().sum::<f64>()
    }

    /// `(N, w·tr ρ_N)` for every cell, with round-off negatives clipped to zero.
    pub fn charge_distribution(&self) -> Result<Vec<(f64, f64)>> {
        let mut clipped = 0.0f64;
        let out = self
            .traces()
            .into_iter()
            .enumerate()
            .map(|(i, tr)| {
                let p = tr * self.cell_weight;
                if p >= 0.0 {
                    Ok((self.charge(i), p))
                } else if p < -CLIP_FATAL {
                    Err(Error::NegativeProbability {
                        cell: i as i64,
                        value: p,
                    })
                } else {
                    clipped = clipped.max(-p);
                    Ok((self.charge(i), 0.0))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if clipped > CLIP_SILENT {
            log::warn!("clipped negative cell probability of magnitude {clipped:.3e}");
        } else if clipped > 0.0 {
            log::debug!("clipped round-off negative probability {clipped:.3e}");
        }
        Ok(out)
    }

    /// `w Σ_N ρ_N`, the charge-marginalized state.
    pub fn marginal(&self) -> DensityMatrix {
        let n = self.d * self.d;
        let mut acc = vec![C64::new(0.0, 0.0); n];
        for c in self.data.chunks(n) {
            for (a, v) in acc.iter_mut().zip(c) {
                *a += v;
            }
        }
        let m = CMatrix::from_column_slice(self.d, self.d, &acc) * C64::new(self.cell_weight, 0.0);
        DensityMatrix::new(m).expect("square")
    }

    /// Largest Hermiticity defect and most negative eigenvalue over all cells
    /// (each scaled by the cell weight).
    pub fn positivity_defect(&self) -> (f64, f64) {
        let mut herm = 0.0f64;
        let mut neg = 0.0f64;
        for i in 0..self.cells() {
            let m = self.cell(i).into_inner() * C64::new(self.cell_weight, 0.0);
            herm = herm.max(crate::operator::max_abs_diff(&m, &m.adjoint()));
            let h = DensityMatrix::new(m).expect("square").hermitized();
            if let Some(&e) = h.eigenvalues().first() {
                neg = neg.min(e);
            }
        }
        (herm, neg)
    }
}

/// `exp(V t) x`, splitting `t` until each piece is accurate.
pub fn evolve(generator: &BlockGenerator, state: &ChargeState, t: f64) -> Result<ChargeState> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::InvalidConfig(format!("evolution time must be nonnegative, got {t}")));
    }
    if generator.len() != state.stacked().len() {
        return Err(Error::DimensionMismatch {
            expected: generator.len(),
            found: state.stacked().len(),
        });
    }
    if t == 0.0 {
        return Ok(state.clone());
    }
    let mut pieces = 1usize;
    let propagator = loop {
        match Propagator::new(generator, t / pieces as f64, state.stacked()) {
            Ok(p) => break p,
            Err(Error::Convergence(_)) if pieces < 1 << 12 => pieces *= 2,
            Err(e) => return Err(e),
        }
    };
    let mut x = state.stacked().to_vec();
    for _ in 0..pieces {
        x = propagator.step(&x);
    }
    Ok(ChargeState::from_stacked(state, x, state.time() + t))
}

/// When to stop marching.
#[derive(Clone, Copy, Debug)]
pub enum Horizon {
    /// March exactly to `T`.
    Fixed(f64),
    /// March until survival drops below `tail` or `max` is reached.
    UntilAbsorbed { tail: f64, max: f64 },
}

/// Time series recorded while marching an absorbing generator.
#[derive(Clone, Debug)]
pub struct March {
    pub dt: f64,
    pub survival: Vec<f64>,
    pub flux_lower: Vec<f64>,
    pub flux_upper: Vec<f64>,
    /// Largest weight seen in the first and last cell.
    pub edge_occupancy: (f64, f64),
    /// Per-step cell weights `w·tr ρ_N`, if requested.
    pub cells: Option<Vec<Vec<f64>>>,
    pub final_state: ChargeState,
}

/// Steps `initial` on the grid `t_i = i·dt`, recording survival and the
/// boundary fluxes at every sample.
pub fn march(
    generator: &BlockGenerator,
    initial: &ChargeState,
    dt: f64,
    horizon: Horizon,
    record_cells: bool,
) -> Result<March> {
    let propagator = Propagator::new(generator, dt, initial.stacked())?;
    let w = generator.cell_weight();
    let (steps_fixed, max_steps) = match horizon {
        Horizon::Fixed(t) => {
            let s = (t / dt).round() as usize;
            if ((s as f64) * dt - t).abs() > 1e-9 * t.max(1.0) {
                return Err(Error::InvalidConfig(format!(
                    "horizon {t} is not a multiple of the time step {dt}"
                )));
            }
            (Some(s), s)
        }
        Horizon::UntilAbsorbed { max, .. } => (None, (max / dt).ceil() as usize),
    };
    let mut x = initial.stacked().to_vec();
    let cap = steps_fixed.map_or(1024, |s| s + 1);
    let mut survival = Vec::with_capacity(cap);
    let mut flux_lower = Vec::with_capacity(cap);
    let mut flux_upper = Vec::with_capacity(cap);
    let mut cells = record_cells.then(Vec::new);
    let mut edge = (0.0f64, 0.0f64);
    let last = generator.cells() - 1;
    let mut step = 0usize;
    loop {
        let state = ChargeState::from_stacked(initial, x, step as f64 * dt);
        let g = state.survival();
        let (lo, up) = generator.boundary_flux(state.stacked());
        let traces = state.traces();
        edge.0 = edge.0.max((traces[0] * w).abs());
        edge.1 = edge.1.max((traces[last] * w).abs());
        if let Some(c) = cells.as_mut() {
            c.push(state.charge_distribution()?.into_iter().map(|(_, p)| p).collect());
        }
        if let Some(prev) = survival.last() {
            if g > prev + 1e-12 {
                return Err(Error::Physics(format!(
                    "survival increased from {prev:.12e} to {g:.12e} at t = {}",
                    state.time()
                )));
            }
        }
        survival.push(g);
        flux_lower.push(lo);
        flux_upper.push(up);
        let done = match horizon {
            Horizon::Fixed(_) => Some(step) == steps_fixed,
            Horizon::UntilAbsorbed { tail, .. } => g < tail || step >= max_steps,
        };
        if done {
            return Ok(March {
                dt,
                survival,
                flux_lower,
                flux_upper,
                edge_occupancy: edge,
                cells,
                final_state: state,
            });
        }
        x = propagator.step(state.stacked());
        step += 1;
    }
}
