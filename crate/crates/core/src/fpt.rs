//! First-passage-time distributions on a uniform time grid.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default bound on `G(T)` for moments to count as converged.
pub const TAIL_TOL: f64 = 1e-6;

/// Bound on `|G(T) + ∫₀ᵀ f dt − 1|`.
pub const LEDGER_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    DeterministicJump,
    DeterministicDiffusion,
    MonteCarlo,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::DeterministicJump => "deterministic-jump",
            Provenance::DeterministicDiffusion => "deterministic-diffusion",
            Provenance::MonteCarlo => "monte-carlo",
        })
    }
}

/// Moments of the hitting time conditioned on absorption.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub snr: f64,
    pub absorption: f64,
}

impl Moments {
    pub fn from_raw(mean: f64, second: f64, absorption: f64) -> Self {
        let variance = second - mean * mean;
        Self {
            mean,
            variance,
            snr: mean * mean / variance,
            absorption,
        }
    }
}

/// Composite fourth-order quadrature of equally spaced samples.
///
/// Simpson's rule on an even number of intervals; an odd count closes with
/// the 3/8 rule on the last three intervals.
pub fn integrate_uniform(values: &[f64], dt: f64) -> f64 {
    let n = values.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * dt * (values[0] + values[1]),
        3 => dt / 3.0 * (values[0] + 4.0 * values[1] + values[2]),
        _ => {
            let intervals = n - 1;
            let simpson_end = if intervals.is_multiple_of(2) { n - 1 } else { n - 4 };
            let mut s = values[0] + values[simpson_end];
            for (i, v) in values.iter().enumerate().take(simpson_end).skip(1) {
                s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            let mut total = dt / 3.0 * s;
            if simpson_end != n - 1 {
                let v = &values[simpson_end..];
                total += 3.0 * dt / 8.0 * (v[0] + 3.0 * v[1] + 3.0 * v[2] + v[3]);
            }
            total
        }
    }
}

/// Survival and density of a hitting time sampled on `t_i = i·Δt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FptResult {
    pub dt: f64,
    pub survival: Vec<f64>,
    pub density: Vec<f64>,
    pub provenance: Provenance,
}

impl FptResult {
    pub fn new(dt: f64, survival: Vec<f64>, density: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if !(dt > 0.0) || survival.len() != density.len() || survival.len() < 2 {
            return Err(Error::InvalidConfig(
                "FPT samples need a positive step and at least two equally long series".into(),
            ));
        }
        Ok(Self {
            dt,
            survival,
            density,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.survival.len()
    }

    pub fn is_empty(&self) -> bool {
        self.survival.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| i as f64 * self.dt)
    }

    pub fn horizon(&self) -> f64 {
        (self.len() - 1) as f64 * self.dt
    }

    pub fn final_survival(&self) -> f64 {
        *self.survival.last().expect("non-empty")
    }

    /// `1 − G(T)`.
    pub fn absorption(&self) -> f64 {
        1.0 - self.final_survival()
    }

    /// `G(T) + ∫₀ᵀ f dt − 1`.
    pub fn ledger_residual(&self) -> f64 {
        self.final_survival() + integrate_uniform(&self.density, self.dt) - 1.0
    }

    /// Checks `G(0) = 1`, monotone `G`, `f ≥ −1e-10` and the probability ledger.
    pub fn validate(&self) -> Result<()> {
        if (self.survival[0] - 1.0).abs() > 1e-9 {
            return Err(Error::Physics(format!("G(0) = {} != 1", self.survival[0])));
        }
        if let Some(i) = self.survival.windows(2).position(|w| w[1] > w[0] + 1e-12) {
            return Err(Error::Physics(format!(
                "survival increases at t = {}",
                (i + 1) as f64 * self.dt
            )));
        }
        if let Some((i, v)) = self.density.iter().enumerate().find(|(_, &v)| v < -1e-10) {
            return Err(Error::Physics(format!(
                "negative FPT density {v:.3e} at t = {}",
                i as f64 * self.dt
            )));
        }
        let r = self.ledger_residual();
        if r.abs() >= LEDGER_TOL {
            return Err(Error::Convergence(format!(
                "probability ledger residual {r:.3e} exceeds {LEDGER_TOL:e}; reduce the time step"
            )));
        }
        Ok(())
    }

    /// Rough horizon at which survival falls below `eps`, extrapolating the
    /// decay rate of the second half of the record.
    fn required_horizon(&self, eps: f64) -> Option<f64> {
        let g_end = self.final_survival();
        let g_mid = self.survival[self.len() / 2];
        let span = self.horizon() - (self.len() / 2) as f64 * self.dt;
        if g_end <= 0.0 || g_mid <= g_end || span <= 0.0 {
            return None;
        }
        let rate = (g_mid / g_end).ln() / span;
        let extra = (g_end / eps).ln() / rate;
        (rate > 1e-12 && extra.is_finite()).then(|| self.horizon() + extra)
    }

    fn check_tail(&self, eps: f64) -> Result<()> {
        let g = self.final_survival();
        if g < eps {
            Ok(())
        } else {
            Err(Error::TailNotConverged {
                survival: g,
                horizon: self.horizon(),
                required_horizon: self.required_horizon(eps),
            })
        }
    }

    /// Moments conditioned on absorption within the horizon, requiring
    /// `G(T) < eps_tail`.
    pub fn moments(&self, eps_tail: f64) -> Result<Moments> {
        self.check_tail(eps_tail)?;
        self.conditioned_moments()
    }

    /// Moments conditioned on absorption within the horizon without a tail
    /// requirement, for distributions that are defective by construction.
    pub fn conditioned_moments(&self) -> Result<Moments> {
        let absorbed = self.absorption();
        if !(absorbed > 0.0) {
            return Err(Error::TailNotConverged {
                survival: self.final_survival(),
                horizon: self.horizon(),
                required_horizon: None,
            });
        }
        let m1: Vec<f64> = self.times().zip(&self.density).map(|(t, f)| t * f).collect();
        let m2: Vec<f64> = self.times().zip(&m1).map(|(t, f)| t * f).collect();
        Ok(Moments::from_raw(
            integrate_uniform(&m1, self.dt) / absorbed,
            integrate_uniform(&m2, self.dt) / absorbed,
            absorbed,
        ))
    }

    /// CDF of the hitting time conditioned on absorption by `T`, linear
    /// between grid points.
    pub fn conditioned_cdf(&self, t: f64) -> f64 {
        let absorbed = self.absorption();
        if t <= 0.0 {
            return 0.0;
        }
        if t >= self.horizon() {
            return 1.0;
        }
        let x = t / self.dt;
        let i = x.floor() as usize;
        let w = x - i as f64;
        let g = (1.0 - w) * self.survival[i] + w * self.survival[i + 1];
        ((1.0 - g) / absorbed).clamp(0.0, 1.0)
    }

    /// Writes `t,G,f` rows (plus any extra columns) after `#`-prefixed metadata lines.
    pub fn write_csv<W: Write>(
        &self,
        mut out: W,
        metadata: &[(String, String)],
        extra: &[(String, Vec<f64>)],
    ) -> Result<()> {
        writeln!(out, "# provenance: {}", self.provenance)?;
        for (k, v) in metadata {
            writeln!(out, "# {k}: {v}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string(), "G".to_string(), "f".to_string()];
        header.extend(extra.iter().map(|(name, _)| name.clone()));
        w.write_record(&header)?;
        for (i, t) in self.times().enumerate() {
            let mut row = vec![
                format_float(t),
                format_float(self.survival[i]),
                format_float(self.density[i]),
            ];
            row.extend(extra.iter().map(|(_, col)| format_float(col[i])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest round-trip representation, so identical runs give identical bytes.
pub fn format_float(x: f64) -> String {
    format!("{x:e}")
}

/// Kolmogorov–Smirnov distance between the conditioned deterministic CDF and
/// the empirical CDF of absorbed hit times.
pub fn ks_distance(result: &FptResult, hits: &[f64]) -> Result<f64> {
    if hits.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let mut sorted = hits.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(sorted
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let cdf = result.conditioned_cdf(t);
            (cdf - i as f64 / n).max((i + 1) as f64 / n - cdf)
        })
        .fold(0.0, f64::max))
}
