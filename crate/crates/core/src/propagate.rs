//! Action of `exp(V Δt)` on stacked states.
//!
//! Small generators are exponentiated densely once. Large ones use a rational
//! approximant of the exponential, so each substep costs one banded solve per
//! pole. Two are available and the cheaper one that meets the accuracy probe
//! is used:
//!
//! - the `(7, 8)` Padé approximant in factored form, accurate near the
//!   origin and L-stable;
//! - a degree-14 Carathéodory–Fejér approximant in partial fractions, uniformly
//!   accurate to about `1e-13` on the whole negative real axis. It suits the
//!   diffusion generator, whose eigenvalues reach `−K/ΔN²`.

use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::block::{BandedLu, BlockGenerator};
use crate::error::{Error, Result};
use crate::operator::{CMatrix, CVector, C64};

/// Generators with at most this many stacked entries are exponentiated densely.
pub const DENSE_LIMIT: usize = 160;

const PADE_NUM: usize = 7;
const PADE_DEN: usize = 8;
const MAX_SUBSTEPS: usize = 64;
const SUBSTEP_TOL: f64 = 1e-9;

/// Poles and residues `(Re p, Im p, Re c, Im c)` of the upper half-plane terms
/// of `e^z ≈ Σ c/(z − p)`; the remaining terms are their conjugates.
const CF_TERMS: [(f64, f64, f64, f64); 7] = [
    (5.623171534758011, 1.1940664287007021, -27.876162291118927, -102.15000629300958),
    (5.0893745648738005, 3.5888160956024366, 46.934904586920084, 45.64454383887575),
    (3.99340042964899, 6.004818060140396, -23.49897941909373, -5.808219208291809),
    (2.269816525854417, 8.461717806879609, 4.807233308937496, -1.3211122031316358),
    (-0.20872377764756553, 10.991232026330678, -0.3763633673443124, 0.3352046831226544),
    (-3.7032391601781884, 13.656333463712347, 0.009438720564640169, -0.01718573631242183),
    (-8.897735413180197, 16.630935208424827, -7.15387817538745e-05, 0.00014361901813708932),
];

/// `(pole, residue)` of all fourteen partial-fraction terms.
pub fn cf_terms() -> impl Iterator<Item = (C64, C64)> {
    CF_TERMS.iter().flat_map(|&(pr, pi, cr, ci)| {
        [
            (C64::new(pr, pi), C64::new(cr, ci)),
            (C64::new(pr, -pi), C64::new(cr, -ci)),
        ]
    })
}

/// Scalar partial-fraction approximation `r(z) ≈ e^z`.
pub fn cf_exp(z: C64) -> C64 {
    cf_terms().map(|(p, c)| c / (z - p)).sum()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Coefficients of the Padé numerator and denominator in powers of `z`.
fn pade_coefficients(p: usize, q: usize) -> (Vec<f64>, Vec<f64>) {
    let total = factorial(p + q);
    let num = (0..=p)
        .map(|j| factorial(p + q - j) * factorial(p) / (total * factorial(j) * factorial(p - j)))
        .collect();
    let den = (0..=q)
        .map(|j| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * factorial(p + q - j) * factorial(q) / (total * factorial(j) * factorial(q - j))
        })
        .collect();
    (num, den)
}

fn horner(coeffs: &[f64], z: C64) -> C64 {
    coeffs
        .iter()
        .rev()
        .fold(C64::new(0.0, 0.0), |acc, &a| acc * z + a)
}

fn derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(j, &a)| j as f64 * a)
        .collect()
}

fn polish_roots(coeffs: &[f64]) -> Vec<C64> {
    let deg = coeffs.len() - 1;
    let lead = coeffs[deg];
    let mut companion = DMatrix::<f64>::zeros(deg, deg);
    for i in 1..deg {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        companion[(i, deg - 1)] = -coeffs[i] / lead;
    }
    let dc = derivative(coeffs);
    companion
        .complex_eigenvalues()
        .iter()
        .map(|&root| {
            let mut z = root;
            for _ in 0..3 {
                z -= horner(coeffs, z) / horner(&dc, z);
            }
            z
        })
        .collect()
}

/// Factored `(7, 8)` Padé approximant of `e^z`:
/// `r(z) = g / (z − p_0) · Π_{j≥1} (z − z_j)/(z − p_j)`.
#[derive(Debug)]
pub struct PadeFactors {
    pub gain: f64,
    /// `(z_j, p_j)` pairs; the first entry has no zero.
    pub pairs: Vec<(Option<C64>, C64)>,
}

pub fn pade_factors() -> &'static PadeFactors {
    static CACHE: OnceLock<PadeFactors> = OnceLock::new();
    CACHE.get_or_init(|| {
        let (num, den) = pade_coefficients(PADE_NUM, PADE_DEN);
        let mut poles = polish_roots(&den);
        let zeros = polish_roots(&num);
        poles.sort_by(|a, b| a.im.total_cmp(&b.im));
        // pair each zero with its mirror-image pole so every factor is bounded on the left half-plane
        let mut pairs = Vec::with_capacity(PADE_DEN);
        for z in zeros {
            let (idx, _) = poles
                .iter()
                .enumerate()
                .map(|(i, p)| (i, (p + z).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("more poles than zeros");
            pairs.push((Some(z), poles.remove(idx)));
        }
        pairs.insert(0, (None, poles[0]));
        PadeFactors {
            gain: num[PADE_NUM] / den[PADE_DEN],
            pairs,
        }
    })
}

/// Scalar rational approximation `r(z) ≈ e^z`.
pub fn pade_exp(z: C64) -> C64 {
    let f = pade_factors();
    f.pairs.iter().fold(C64::new(f.gain, 0.0), |acc, &(zero, pole)| {
        acc * zero.map_or(C64::new(1.0, 0.0), |q| z - q) / (z - pole)
    })
}

#[derive(Clone, Debug)]
enum Kind {
    Dense(CMatrix),
    Factored {
        factors: Vec<(Option<C64>, C64, BandedLu)>,
        substeps: usize,
    },
    Fractions {
        terms: Vec<(C64, BandedLu)>,
        substeps: usize,
    },
}

/// Which rational approximant a propagator uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Pade,
    Fractions,
}

impl Scheme {
    fn solves_per_substep(self) -> usize {
        match self {
            Scheme::Pade => PADE_DEN,
            Scheme::Fractions => 2 * CF_TERMS.len(),
        }
    }
}

/// Fixed-step propagator `x ↦ exp(V Δt) x`.
#[derive(Clone, Debug)]
pub struct Propagator {
    dt: f64,
    kind: Kind,
}

impl Propagator {
    /// Builds a propagator for step `dt`. `probe` is a representative state
    /// (normally the initial condition) used to choose the number of rational
    /// substeps.
    pub fn new(generator: &BlockGenerator, dt: f64, probe: &[C64]) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("time step must be positive, got {dt}")));
        }
        if generator.len() <= DENSE_LIMIT {
            return Ok(Self::dense(generator, dt));
        }
        let fractions = Self::settle(generator, dt, probe, Scheme::Fractions, MAX_SUBSTEPS);
        // Padé is only worth probing while it can still need fewer solves.
        let budget = match &fractions {
            Ok(p) => (p.substeps() * Scheme::Fractions.solves_per_substep() - 1) / Scheme::Pade.solves_per_substep(),
            Err(_) => MAX_SUBSTEPS,
        };
        if budget >= 1 {
            if let Ok(p) = Self::settle(generator, dt, probe, Scheme::Pade, budget) {
                return Ok(p);
            }
        }
        fractions
    }

    /// Doubles the substep count until two successive counts agree on `probe`.
    fn settle(generator: &BlockGenerator, dt: f64, probe: &[C64], scheme: Scheme, max: usize) -> Result<Self> {
        let mut substeps = 1;
        let mut coarse = Self::rational(generator, dt, substeps, scheme)?;
        let mut reference = coarse.step(probe);
        while substeps <= max {
            let fine = Self::rational(generator, dt, 2 * substeps, scheme)?;
            let refined = fine.step(probe);
            let scale = refined.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
            let diff = refined
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            if diff <= SUBSTEP_TOL * scale && diff.is_finite() {
                log::debug!("{scheme:?} propagator: {substeps} substep(s) per dt = {dt}");
                return Ok(coarse);
            }
            substeps *= 2;
            coarse = fine;
            reference = refined;
        }
        Err(Error::Convergence(format!(
            "rational substepping did not settle within {max} substeps for dt = {dt}"
        )))
    }

    /// Dense exponential regardless of size.
    pub fn dense(generator: &BlockGenerator, dt: f64) -> Self {
        let step = (generator.to_dense() * C64::new(dt, 0.0)).exp();
        Self {
            dt,
            kind: Kind::Dense(step),
        }
    }

    /// Rational propagator with a fixed number of substeps.
    pub fn rational(generator: &BlockGenerator, dt: f64, substeps: usize, scheme: Scheme) -> Result<Self> {
        let h = C64::new(dt / substeps as f64, 0.0);
        let kind = match scheme {
            Scheme::Pade => Kind::Factored {
                factors: pade_factors()
                    .pairs
                    .iter()
                    .map(|&(zero, pole)| Ok((zero, pole, generator.shifted_lu(h, pole)?)))
                    .collect::<Result<Vec<_>>>()?,
                substeps,
            },
            Scheme::Fractions => Kind::Fractions {
                terms: cf_terms()
                    .map(|(pole, residue)| Ok((residue, generator.shifted_lu(h, pole)?)))
                    .collect::<Result<Vec<_>>>()?,
                substeps,
            },
        };
        Ok(Self { dt, kind })
    }

    /// `None` for the dense propagator.
    pub fn scheme(&self) -> Option<Scheme> {
        match self.kind {
            Kind::Dense(_) => None,
            Kind::Factored { .. } => Some(Scheme::Pade),
            Kind::Fractions { .. } => Some(Scheme::Fractions),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn substeps(&self) -> usize {
        match &self.kind {
            Kind::Dense(_) => 1,
            Kind::Factored { substeps, .. } | Kind::Fractions { substeps, .. } => *substeps,
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.kind, Kind::Dense(_))
    }

    /// One step of length `dt`.
    pub fn step(&self, x: &[C64]) -> Vec<C64> {
        match &self.kind {
            Kind::Dense(m) => (m * CVector::from_column_slice(x)).as_slice().to_vec(),
            Kind::Factored { factors, substeps } => {
                let gain = pade_factors().gain;
                let mut cur = x.to_vec();
                for _ in 0..*substeps {
                    for (zero, pole, lu) in factors {
                        let y = lu.solve(&cur);
                        match zero {
                            // (hV − z)(hV − p)⁻¹ = 1 + (p − z)(hV − p)⁻¹
                            Some(z) => {
                                let w = pole - z;
                                for (c, v) in cur.iter_mut().zip(&y) {
                                    *c += w * v;
                                }
                            }
                            None => {
                                for (c, v) in cur.iter_mut().zip(&y) {
                                    *c = v * gain;
                                }
                            }
                        }
                    }
                }
                cur
            }
            Kind::Fractions { terms, substeps } => {
                let mut cur = x.to_vec();
                for _ in 0..*substeps {
                    let mut next = vec![C64::new(0.0, 0.0); cur.len()];
                    for (residue, lu) in terms {
                        for (n, v) in next.iter_mut().zip(lu.solve(&cur)) {
                            *n += residue * v;
                        }
                    }
                    cur = next;
                }
                cur
            }
        }
    }
}
