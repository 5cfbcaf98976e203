use nalgebra::DVector;
use num_complex::Complex64;

use super::operator::Operator;
use super::subsystem;
use crate::numerics::{self, tolerances};
use crate::{Error, Result};

/// A normalized pure state over an ordered tensor product of subsystems.
///
/// The leftmost subsystem is the slowest-varying index of the amplitude array.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    dims: Vec<usize>,
    amps: DVector<Complex64>,
}

impl StateVector {
    /// Wraps `amps` without rescaling; the norm must already be 1.
    pub fn new(dims: Vec<usize>, amps: DVector<Complex64>) -> Result<Self> {
        let state = Self::unchecked(dims, amps)?;
        let norm_sqr = state.amps.norm_squared();
        if (norm_sqr - 1.0).abs() > tolerances().state {
            return Err(Error::NotNormalized { norm_sqr });
        }
        Ok(state)
    }

    /// Rescales `amps` to unit norm.
    pub fn normalized(dims: Vec<usize>, amps: DVector<Complex64>) -> Result<Self> {
        let mut state = Self::unchecked(dims, amps)?;
        let norm = state.amps.norm();
        if norm <= f64::MIN_POSITIVE {
            return Err(Error::NotNormalized { norm_sqr: 0.0 });
        }
        state.amps.unscale_mut(norm);
        Ok(state)
    }

    fn unchecked(dims: Vec<usize>, amps: DVector<Complex64>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::invalid("dims", "subsystem dimensions must be positive"));
        }
        let total = numerics::total_dim(&dims)?;
        if amps.len() != total {
            return Err(Error::DimensionMismatch {
                expected: total,
                found: amps.len(),
            });
        }
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("state amplitudes"));
        }
        Ok(StateVector { dims, amps })
    }

    /// Computational basis state with flat index `index`.
    pub fn basis(dims: Vec<usize>, index: usize) -> Result<Self> {
        let total = numerics::total_dim(&dims)?;
        if index >= total {
            return Err(Error::invalid("index", format!("{index} out of range for dimension {total}")));
        }
        let mut amps = DVector::zeros(total);
        amps[index] = Complex64::new(1.0, 0.0);
        Self::new(dims, amps)
    }

    /// Single-subsystem state from a list of amplitudes, normalized.
    pub fn from_amplitudes(amps: &[Complex64]) -> Result<Self> {
        Self::normalized(vec![amps.len()], DVector::from_column_slice(amps))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amps
    }

    pub fn into_amplitudes(self) -> DVector<Complex64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(self.amps.dotc(&other.amps))
    }

    /// `self ⊗ other`, subsystem lists concatenated.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        numerics::total_dim(&dims)?;
        let amps = self.amps.kronecker(&other.amps);
        Ok(StateVector { dims, amps })
    }

    /// Applies a unitary-flagged operator acting on the full space.
    pub fn evolve(&self, u: &Operator) -> Result<StateVector> {
        if !u.is_unitary() {
            return Err(Error::InvariantViolation(
                "evolve requires a verified unitary".into(),
            ));
        }
        if u.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: u.dim(),
            });
        }
        let amps = u.matrix() * &self.amps;
        StateVector::new(self.dims.clone(), amps)
    }

    /// Applies a unitary-flagged operator to the listed subsystems.
    pub fn evolve_local(&self, u: &Operator, targets: &[usize]) -> Result<StateVector> {
        if !u.is_unitary() {
            return Err(Error::InvariantViolation(
                "evolve_local requires a verified unitary".into(),
            ));
        }
        let amps = subsystem::apply_local(&self.dims, &self.amps, u, targets)?;
        StateVector::new(self.dims.clone(), amps)
    }
}
