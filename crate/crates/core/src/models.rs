//! Built-in qubit models. Basis ordering is `(|e⟩, |g⟩)`.

use std::f64::consts::FRAC_PI_2;

use crate::operator::{c, CMatrix, JumpChannel, LindbladModel};

pub const EXCITED: usize = 0;
pub const GROUND: usize = 1;

/// `σ₋ = |g⟩⟨e|`.
pub fn sigma_minus() -> CMatrix {
    let mut m = CMatrix::zeros(2, 2);
    m[(GROUND, EXCITED)] = c(1.0);
    m
}

/// `σ₊ = |e⟩⟨g|`.
pub fn sigma_plus() -> CMatrix {
    sigma_minus().adjoint()
}

pub fn sigma_x() -> CMatrix {
    sigma_plus() + sigma_minus()
}

pub fn sigma_y() -> CMatrix {
    (sigma_plus() - sigma_minus()) * crate::operator::C64::new(0.0, -1.0)
}

pub fn sigma_z() -> CMatrix {
    let mut m = CMatrix::zeros(2, 2);
    m[(EXCITED, EXCITED)] = c(1.0);
    m[(GROUND, GROUND)] = c(-1.0);
    m
}

/// Resonantly driven qubit in a thermal bath, in the frame rotating with the drive.
///
/// `H = Ω(σ₊ + σ₋)`, emission `L₋ = √(γ(n̄+1)) σ₋` with charge `+1` and
/// absorption `L₊ = √(γ n̄) σ₊` with charge `−1`, so the charge counts net
/// emitted excitations.
pub fn thermal_driven_qubit(gamma: f64, omega: f64, nbar: f64) -> LindbladModel {
    let h = sigma_x() * c(omega);
    let channels = vec![
        JumpChannel::new(sigma_minus() * c((gamma * (nbar + 1.0)).sqrt()), 1.0),
        JumpChannel::new(sigma_plus() * c((gamma * nbar).sqrt()), -1.0),
    ];
    LindbladModel::new(h, channels).expect("built-in model is valid")
}

/// Driven qubit at zero temperature under homodyne detection of `σ_y`.
pub fn homodyne_qubit(gamma: f64, omega: f64) -> LindbladModel {
    let h = sigma_x() * c(omega);
    let channels = vec![JumpChannel::new(sigma_minus() * c(gamma.sqrt()), 1.0).with_phase(-FRAC_PI_2)];
    LindbladModel::new(h, channels).expect("built-in model is valid")
}

/// Undriven spontaneous emission, `L = √γ σ₋` with charge `+1`.
pub fn decay_qubit(gamma: f64) -> LindbladModel {
    LindbladModel::new(
        CMatrix::zeros(2, 2),
        vec![JumpChannel::new(sigma_minus() * c(gamma.sqrt()), 1.0)],
    )
    .expect("built-in model is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::max_abs_diff;

    #[test]
    fn pauli_algebra() {
        let i = crate::operator::C64::new(0.0, 1.0);
        let comm = sigma_x() * sigma_y() - sigma_y() * sigma_x();
        assert!(max_abs_diff(&comm, &(sigma_z() * (i * 2.0))) < 1e-15);
    }

    #[test]
    fn homodyne_quadrature_is_sigma_y() {
        let model = homodyne_qubit(1.0, 1.0);
        let b = model.channels()[0].rotated();
        let x = &b + b.adjoint();
        assert!(max_abs_diff(&x, &sigma_y()) < 1e-15);
    }
}
