//! Dense complex linear algebra over small tensor-product Hilbert spaces.
//!
//! All amplitudes are dimensionless and ħ = 1.

mod operator;
mod state;
pub mod subsystem;

pub use operator::Operator;
pub use state::StateVector;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::numerics::{self, tolerances};
use crate::{Error, Result};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = Complex64::new(0.0, 0.0);
#[cfg(test)]
pub(crate) const ONE: C64 = Complex64::new(1.0, 0.0);
#[cfg(test)]
pub(crate) const I: C64 = Complex64::new(0.0, 1.0);

pub fn c64(re: f64, im: f64) -> C64 {
    Complex64::new(re, im)
}

/// Tensor product with `a` as the slow index.
pub fn kron(a: &Operator, b: &Operator) -> Result<Operator> {
    let dim = a
        .dim()
        .checked_mul(b.dim())
        .ok_or(Error::DimensionOverflow {
            requested: usize::MAX,
            max: tolerances().max_dim,
        })?;
    numerics::check_dim(dim)?;
    let m = a.matrix().kronecker(b.matrix());
    if a.is_unitary() && b.is_unitary() {
        Operator::unitary(m)
    } else {
        Operator::new(m)
    }
}

/// `kron` over a list of factors, left to right.
pub fn kron_all(factors: &[&Operator]) -> Result<Operator> {
    let (first, rest) = factors
        .split_first()
        .ok_or_else(|| Error::invalid("factors", "empty tensor product"))?;
    rest.iter().try_fold((*first).clone(), |acc, f| kron(&acc, f))
}

fn check_pair(dim: usize, op: &Operator) -> Result<()> {
    if dim != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            found: dim,
        });
    }
    Ok(())
}

/// `<psi|A|psi>`.
pub fn expectation(psi: &StateVector, a: &Operator) -> Result<C64> {
    check_pair(psi.dim(), a)?;
    let amps = psi.amplitudes();
    let value = amps.dotc(&(a.matrix() * amps));
    if a.is_hermitian() && value.im.abs() > tolerances().state * (1.0 + value.re.abs()) {
        return Err(Error::InvariantViolation(format!(
            "Hermitian expectation has imaginary part {:e}",
            value.im
        )));
    }
    Ok(value)
}

/// Real part of `<psi|A|psi>` for a Hermitian observable.
pub fn expectation_real(psi: &StateVector, a: &Operator) -> Result<f64> {
    if !a.is_hermitian() {
        return Err(Error::NotHermitian {
            deviation: operator::hermitian_deviation(a.matrix()),
        });
    }
    Ok(expectation(psi, a)?.re)
}

/// `<phi|A|psi>`.
pub fn bracket(phi: &StateVector, a: &Operator, psi: &StateVector) -> Result<C64> {
    check_pair(phi.dim(), a)?;
    check_pair(psi.dim(), a)?;
    Ok(phi.amplitudes().dotc(&(a.matrix() * psi.amplitudes())))
}

/// `exp(-i H t)` from the eigendecomposition of a Hermitian `H`.
pub fn expm_hermitian(h: &Operator, t: f64) -> Result<Operator> {
    if !h.is_hermitian() {
        return Err(Error::NotHermitian {
            deviation: operator::hermitian_deviation(h.matrix()),
        });
    }
    if !t.is_finite() {
        return Err(Error::NonFinite("evolution time"));
    }
    let eigen = h.matrix().clone().symmetric_eigen();
    let v = &eigen.eigenvectors;
    let phases = eigen.eigenvalues.map(|lambda| Complex64::from_polar(1.0, -lambda * t));
    let mut scaled = v.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= phases[j];
    }
    Operator::unitary(scaled * v.adjoint())
}

/// Max-entry norm of `AB − BA`.
pub fn commutator_norm(a: &Operator, b: &Operator) -> Result<f64> {
    check_pair(a.dim(), b)?;
    let comm: DMatrix<C64> = a.matrix() * b.matrix() - b.matrix() * a.matrix();
    Ok(operator::max_entry(&comm))
}

/// Max-entry distance between two operators.
pub fn max_abs_diff(a: &Operator, b: &Operator) -> Result<f64> {
    check_pair(a.dim(), b)?;
    Ok(operator::max_entry(&(a.matrix() - b.matrix())))
}

/// Max-entry distance of `A` from the identity.
pub fn identity_deviation(a: &Operator) -> f64 {
    operator::max_entry_dev_from_identity(a.matrix())
}

/// Tr(ρ²) of a density matrix.
pub fn purity(rho: &DMatrix<C64>) -> f64 {
    (rho * rho).trace().re
}
