//! Operator and superoperator algebra for Lindblad models.
//!
//! Density matrices are vectorized by stacking columns, so that
//! `vec(A ρ B) = (Bᵀ ⊗ A) vec(ρ)`. Every superoperator in the crate is a
//! `d² × d²` matrix in that convention.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Default tolerance for algebraic identities.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Maximum entrywise deviation `|H - H†|` accepted for a Hamiltonian.
pub const HERMITICITY_TOL: f64 = 1e-12;

pub(crate) const I: C64 = C64::new(0.0, 1.0);

pub(crate) fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Largest entrywise modulus of `a - b`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

/// Largest deviation from Hermiticity, with its location.
fn hermitian_deviation(m: &CMatrix) -> (f64, usize, usize) {
    let mut worst = (0.0, 0, 0);
    for r in 0..m.nrows() {
        for col in 0..m.ncols() {
            let dev = (m[(r, col)] - m[(col, r)].conj()).norm();
            if dev > worst.0 {
                worst = (dev, r, col);
            }
        }
    }
    worst
}

/// A (possibly sub-normalized) density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    /// Wraps a square matrix. Physicality is checked by [`DensityMatrix::validate`].
    pub fn new(data: CMatrix) -> Result<Self> {
        if data.nrows() != data.ncols() {
            return Err(Error::DimensionMismatch {
                expected: data.nrows(),
                found: data.ncols(),
            });
        }
        Ok(Self(data))
    }

    /// `|i⟩⟨i|` in a `d`-dimensional space.
    pub fn basis(d: usize, i: usize) -> Self {
        let mut m = CMatrix::zeros(d, d);
        m[(i, i)] = c(1.0);
        Self(m)
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self(CMatrix::identity(d, d) * c(1.0 / d as f64))
    }

    /// `|ψ⟩⟨ψ|` for a normalized copy of `psi`.
    pub fn pure(psi: &[C64]) -> Self {
        let v = CVector::from_column_slice(psi);
        let v = &v / c(v.norm());
        Self(&v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// `tr(A ρ)`.
    pub fn expectation(&self, op: &CMatrix) -> C64 {
        (op * &self.0).trace()
    }

    pub fn hermitized(&self) -> Self {
        Self((&self.0 + self.0.adjoint()) * c(0.5))
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .hermitized()
            .0
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Checks Hermiticity, trace in `[0, 1 + tol]` and eigenvalues `>= -tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let (dev, r, col) = hermitian_deviation(&self.0);
        if dev > tol {
            return Err(Error::InvalidState(format!(
                "not Hermitian: deviation {dev:.3e} at ({r}, {col})"
            )));
        }
        let tr = self.trace().re;
        if !(-tol..=1.0 + tol).contains(&tr) {
            return Err(Error::InvalidState(format!("trace {tr} outside [0, 1]")));
        }
        let min = self.eigenvalues()[0];
        if min < -tol {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    /// Trace distance `½‖ρ − σ‖₁`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        let diff = DensityMatrix(&self.0 - &other.0).hermitized();
        0.5 * diff.eigenvalues().iter().map(|x| x.abs()).sum::<f64>()
    }
}

/// Column-stacking vectorization.
pub fn vectorize(rho: &DensityMatrix) -> CVector {
    CVector::from_column_slice(rho.0.as_slice())
}

/// Inverse of [`vectorize`] for a `d`-dimensional Hilbert space.
pub fn unvectorize(v: &[C64], d: usize) -> Result<DensityMatrix> {
    if v.len() != d * d {
        return Err(Error::DimensionMismatch {
            expected: d * d,
            found: v.len(),
        });
    }
    Ok(DensityMatrix(CMatrix::from_column_slice(d, d, v)))
}

/// Trace of a vectorized `d × d` matrix.
pub fn vec_trace(v: &[C64], d: usize) -> C64 {
    (0..d).map(|i| v[i * (d + 1)]).sum()
}

/// Linear map on column-stacked `d × d` matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct Superoperator {
    d: usize,
    data: CMatrix,
}

impl Superoperator {
    pub fn from_matrix(data: CMatrix, d: usize) -> Result<Self> {
        if data.nrows() != d * d || data.ncols() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                found: data.nrows(),
            });
        }
        Ok(Self { d, data })
    }

    pub fn zero(d: usize) -> Self {
        Self {
            d,
            data: CMatrix::zeros(d * d, d * d),
        }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            d,
            data: CMatrix::identity(d * d, d * d),
        }
    }

    /// `ρ ↦ A ρ`.
    pub fn left(a: &CMatrix) -> Self {
        let d = a.nrows();
        Self {
            d,
            data: CMatrix::identity(d, d).kronecker(a),
        }
    }

    /// `ρ ↦ ρ B`.
    pub fn right(b: &CMatrix) -> Self {
        let d = b.nrows();
        Self {
            d,
            data: b.transpose().kronecker(&CMatrix::identity(d, d)),
        }
    }

    /// `ρ ↦ A ρ B†`, i.e. `conj(B) ⊗ A`.
    pub fn sandwich(a: &CMatrix, b: &CMatrix) -> Self {
        Self {
            d: a.nrows(),
            data: b.map(|z| z.conj()).kronecker(a),
        }
    }

    /// `ρ ↦ A ρ + ρ A†`.
    pub fn anticommutator_like(a: &CMatrix) -> Self {
        Self::left(a) + Self::right(&a.adjoint())
    }

    /// `𝒫 x = ρ tr(x)`.
    pub fn trace_projector(rho: &DensityMatrix) -> Self {
        let d = rho.dim();
        let r = vectorize(rho);
        let one = vectorize(&DensityMatrix(CMatrix::identity(d, d)));
        Self {
            d,
            data: r * one.transpose(),
        }
    }

    pub fn hilbert_dim(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.data
    }

    pub fn apply(&self, rho: &DensityMatrix) -> DensityMatrix {
        let v = &self.data * vectorize(rho);
        DensityMatrix(CMatrix::from_column_slice(self.d, self.d, v.as_slice()))
    }

    pub fn apply_vec(&self, v: &CVector) -> CVector {
        &self.data * v
    }

    /// Row vector `t` with `t · vec(ρ) = tr(S ρ)`.
    pub fn trace_row(&self) -> Vec<C64> {
        let d = self.d;
        (0..d * d)
            .map(|col| (0..d).map(|i| self.data[(i * (d + 1), col)]).sum())
            .collect()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            d: self.d,
            data: &self.data * s,
        }
    }

    pub fn max_abs_diff(&self, other: &Superoperator) -> f64 {
        max_abs_diff(&self.data, &other.data)
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.data)
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        self.data
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .fold(0.0, f64::max)
    }
}

impl Add for Superoperator {
    type Output = Superoperator;
    fn add(self, rhs: Superoperator) -> Superoperator {
        Superoperator {
            d: self.d,
            data: self.data + rhs.data,
        }
    }
}

impl<'a> Add<&'a Superoperator> for &'a Superoperator {
    type Output = Superoperator;
    fn add(self, rhs: &Superoperator) -> Superoperator {
        Superoperator {
            d: self.d,
            data: &self.data + &rhs.data,
        }
    }
}

impl Sub for Superoperator {
    type Output = Superoperator;
    fn sub(self, rhs: Superoperator) -> Superoperator {
        Superoperator {
            d: self.d,
            data: self.data - rhs.data,
        }
    }
}

impl<'a> Sub<&'a Superoperator> for &'a Superoperator {
    type Output = Superoperator;
    fn sub(self, rhs: &Superoperator) -> Superoperator {
        Superoperator {
            d: self.d,
            data: &self.data - &rhs.data,
        }
    }
}

impl<'a> Mul<&'a Superoperator> for &'a Superoperator {
    type Output = Superoperator;
    fn mul(self, rhs: &Superoperator) -> Superoperator {
        Superoperator {
            d: self.d,
            data: &self.data * &rhs.data,
        }
    }
}

impl Neg for Superoperator {
    type Output = Superoperator;
    fn neg(self) -> Superoperator {
        Superoperator {
            d: self.d,
            data: -self.data,
        }
    }
}

/// A monitored (or unmonitored) dissipation channel.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpChannel {
    /// `L_k`, in units of square root of a rate.
    pub operator: CMatrix,
    /// Charge increment `ν_k` per detection.
    pub weight: f64,
    /// Homodyne phase `φ_k` in `(−π, π]`.
    pub phase: f64,
    /// Unmonitored channels dissipate but never move the charge.
    pub monitored: bool,
}

impl JumpChannel {
    pub fn new(operator: CMatrix, weight: f64) -> Self {
        Self {
            operator,
            weight,
            phase: 0.0,
            monitored: true,
        }
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn unmonitored(mut self) -> Self {
        self.monitored = false;
        self
    }

    /// `L† L`.
    pub fn rate_operator(&self) -> CMatrix {
        self.operator.adjoint() * &self.operator
    }

    /// `L e^{−iφ}`, the operator entering the homodyne current.
    pub fn rotated(&self) -> CMatrix {
        &self.operator * C64::from_polar(1.0, -self.phase)
    }
}

/// Maps an angle into `(−π, π]`.
fn wrap_phase(phi: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut p = phi.rem_euclid(TAU);
    if p > PI {
        p -= TAU;
    }
    p
}

/// Hamiltonian plus jump channels; the single source of physical truth.
#[derive(Clone, Debug, PartialEq)]
pub struct LindbladModel {
    dim: usize,
    hamiltonian: CMatrix,
    channels: Vec<JumpChannel>,
}

impl LindbladModel {
    pub fn new(hamiltonian: CMatrix, channels: Vec<JumpChannel>) -> Result<Self> {
        let dim = hamiltonian.nrows();
        if dim == 0 {
            return Err(Error::InvalidModel("Hilbert dimension must be positive".into()));
        }
        if hamiltonian.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: hamiltonian.ncols(),
            });
        }
        let (deviation, row, col) = hermitian_deviation(&hamiltonian);
        if deviation >= HERMITICITY_TOL {
            return Err(Error::NonHermitian { deviation, row, col });
        }
        let mut channels = channels;
        for (k, ch) in channels.iter_mut().enumerate() {
            if ch.operator.nrows() != dim || ch.operator.ncols() != dim {
                return Err(Error::InvalidModel(format!(
                    "channel {k} operator is {}x{}, expected {dim}x{dim}",
                    ch.operator.nrows(),
                    ch.operator.ncols()
                )));
            }
            if !ch.weight.is_finite() || !ch.phase.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "channel {k} has a non-finite weight or phase"
                )));
            }
            ch.phase = wrap_phase(ch.phase);
        }
        Ok(Self {
            dim,
            hamiltonian,
            channels,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.hamiltonian
    }

    pub fn channels(&self) -> &[JumpChannel] {
        &self.channels
    }

    pub fn monitored(&self) -> impl Iterator<Item = (usize, &JumpChannel)> {
        self.channels.iter().enumerate().filter(|(_, ch)| ch.monitored)
    }

    pub(crate) fn require_channels(&self) -> Result<()> {
        if self.channels.is_empty() {
            Err(Error::InvalidModel(
                "at least one jump channel is required".into(),
            ))
        } else {
            Ok(())
        }
    }

    /// `H_eff = H − (i/2) Σ_k L_k† L_k`.
    pub fn effective_hamiltonian(&self) -> CMatrix {
        let mut h = self.hamiltonian.clone();
        for ch in &self.channels {
            h -= ch.rate_operator() * (I * 0.5);
        }
        h
    }

    /// Upper bound on the total jump rate `Σ_k tr(L_k† L_k ρ)` over all states.
    pub fn max_jump_rate(&self) -> f64 {
        self.channels
            .iter()
            .map(|ch| {
                DensityMatrix(ch.rate_operator())
                    .eigenvalues()
                    .last()
                    .copied()
                    .unwrap_or(0.0)
            })
            .sum()
    }

    /// Characteristic rate: the larger of the Hamiltonian norm and the total jump rate.
    pub fn rate_scale(&self) -> f64 {
        let h = DensityMatrix(self.hamiltonian.clone())
            .eigenvalues()
            .iter()
            .map(|x| x.abs())
            .fold(0.0, f64::max);
        h.max(self.max_jump_rate())
    }
}

fn hamiltonian_part(h: &CMatrix) -> Superoperator {
    (Superoperator::left(h) - Superoperator::right(h)).scale(-I)
}

fn dissipator(l: &CMatrix) -> Superoperator {
    let ldl = l.adjoint() * l;
    Superoperator::sandwich(l, l)
        - (Superoperator::left(&ldl) + Superoperator::right(&ldl)).scale(c(0.5))
}

/// `ℒρ = −i[H, ρ] + Σ_k (L_k ρ L_k† − ½{L_k† L_k, ρ})`.
pub fn build_liouvillian(model: &LindbladModel) -> Superoperator {
    model
        .channels
        .iter()
        .fold(hamiltonian_part(&model.hamiltonian), |acc, ch| {
            acc + dissipator(&ch.operator)
        })
}

/// `ℒ₀ρ = −i(H_eff ρ − ρ H_eff†)`, the evolution between detections.
pub fn build_no_jump(model: &LindbladModel) -> Superoperator {
    let heff = model.effective_hamiltonian();
    (Superoperator::left(&heff) - Superoperator::right(&heff.adjoint())).scale(-I)
}

/// `𝒥_k ρ = L_k ρ L_k†`.
pub fn build_jump_super(model: &LindbladModel, k: usize) -> Result<Superoperator> {
    let ch = model.channels.get(k).ok_or(Error::ChannelIndex {
        index: k,
        count: model.channels.len(),
    })?;
    Ok(Superoperator::sandwich(&ch.operator, &ch.operator))
}

/// Unique normalized kernel vector of `ℒ`.
///
/// The kernel is read off the right singular vectors; its dimension is the
/// number of singular values below `1e-9 · max(1, σ_max)`.
pub fn steady_state(liouvillian: &Superoperator) -> Result<DensityMatrix> {
    let d = liouvillian.hilbert_dim();
    let svd = liouvillian.matrix().clone().svd(false, true);
    let sv = &svd.singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let cutoff = 1e-9 * smax.max(1.0);
    let kernel_dim = sv.iter().filter(|&&s| s <= cutoff).count();
    if kernel_dim != 1 {
        return Err(Error::DegenerateKernel { dim: kernel_dim });
    }
    let (imin, _) = sv
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty spectrum");
    let v_t = svd.v_t.expect("requested right singular vectors");
    let v: Vec<C64> = v_t.row(imin).iter().map(|z| z.conj()).collect();
    let rho = unvectorize(&v, d)?;
    let tr = rho.trace();
    let rho = DensityMatrix(rho.0 / tr).hermitized();
    let residual = max_abs(liouvillian.apply(&rho).matrix());
    if residual > DEFAULT_TOL * smax.max(1.0) {
        return Err(Error::Convergence(format!(
            "steady-state residual {residual:.3e}"
        )));
    }
    Ok(rho)
}

/// Drazin inverse `ℒ⁺ = 𝒬 (ℒ + 𝒫)⁻¹ 𝒬` with `𝒫x = ρ_ss tr(x)`, `𝒬 = 1 − 𝒫`.
///
/// The defining identities are verified to `tol` before returning.
pub fn drazin_inverse(
    liouvillian: &Superoperator,
    rho_ss: &DensityMatrix,
    tol: f64,
) -> Result<Superoperator> {
    let d = liouvillian.hilbert_dim();
    if rho_ss.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: rho_ss.dim(),
        });
    }
    let p = Superoperator::trace_projector(rho_ss);
    let q = &Superoperator::identity(d) - &p;
    let shifted = liouvillian.matrix() + p.matrix();

    let sv = shifted.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond < 1e12) {
        return Err(Error::IllConditioned { cond });
    }
    let x = shifted
        .lu()
        .solve(q.matrix())
        .ok_or(Error::IllConditioned { cond })?;
    let drazin = Superoperator {
        d,
        data: q.matrix() * x,
    };

    let checks = [
        ("L L+ = 1 - P", (liouvillian * &drazin).max_abs_diff(&q)),
        ("L+ L = 1 - P", (&drazin * liouvillian).max_abs_diff(&q)),
        (
            "L+ rho_ss = 0",
            max_abs(drazin.apply(rho_ss).matrix()),
        ),
        (
            "tr(L+ x) = 0",
            drazin.trace_row().iter().map(|z| z.norm()).fold(0.0, f64::max),
        ),
    ];
    for (identity, residual) in checks {
        if residual > tol {
            return Err(Error::DrazinCheck { identity, residual });
        }
    }
    Ok(drazin)
}
