//! Spin-j operator algebras, coherent spin states and the Bloch-vector map.
//!
//! Basis order for spin j is m = j, j−1, …, −j, so index 0 is the
//! highest-weight state.

use std::fmt;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::kernel::{self, c64, Operator, StateVector, C64};
use crate::numerics::tolerances;
use crate::{Error, Result};

/// A half-integer spin quantum number, stored as 2j.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Spin(u32);

impl Spin {
    pub const HALF: Spin = Spin(1);

    pub fn new(j: f64) -> Result<Spin> {
        let twice = 2.0 * j;
        if !twice.is_finite() || twice < 0.0 || twice.fract() != 0.0 || twice > u32::MAX as f64 {
            return Err(Error::InvalidSpin(j));
        }
        Ok(Spin(twice as u32))
    }

    pub const fn from_twice(twice: u32) -> Spin {
        Spin(twice)
    }

    pub fn integer(j: u32) -> Spin {
        Spin(2 * j)
    }

    pub fn twice(self) -> u32 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    /// Hilbert-space dimension 2j + 1.
    pub fn dim(self) -> usize {
        self.0 as usize + 1
    }

    /// j(j+1).
    pub fn casimir(self) -> f64 {
        let j = self.value();
        j * (j + 1.0)
    }

    /// m quantum number of basis index `k`.
    pub fn m_of(self, k: usize) -> f64 {
        self.value() - k as f64
    }
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_multiple_of(2) {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

/// Cartesian and ladder operators of a single spin j.
#[derive(Debug, Clone)]
pub struct SpinOperators {
    pub spin: Spin,
    pub jx: Operator,
    pub jy: Operator,
    pub jz: Operator,
    pub jplus: Operator,
    pub jminus: Operator,
}

impl SpinOperators {
    pub fn dim(&self) -> usize {
        self.spin.dim()
    }

    /// Cartesian components in x, y, z order.
    pub fn cartesian(&self) -> [&Operator; 3] {
        [&self.jx, &self.jy, &self.jz]
    }

    /// `n·J` for a (not necessarily unit) direction `n`.
    pub fn along(&self, n: [f64; 3]) -> Result<Operator> {
        let m = self.jx.matrix() * c64(n[0], 0.0)
            + self.jy.matrix() * c64(n[1], 0.0)
            + self.jz.matrix() * c64(n[2], 0.0);
        Operator::hermitian(m)
    }
}

/// Ladder-operator construction of the spin-j algebra.
pub fn spin_operators(spin: Spin) -> Result<SpinOperators> {
    let n = spin.dim();
    crate::numerics::check_dim(n)?;
    let j = spin.value();
    let mut plus = DMatrix::<C64>::zeros(n, n);
    let mut z = DMatrix::<C64>::zeros(n, n);
    for k in 0..n {
        let m = spin.m_of(k);
        z[(k, k)] = c64(m, 0.0);
        if k > 0 {
            // <m+1| J+ |m>
            plus[(k - 1, k)] = c64((j * (j + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
        }
    }
    let minus = plus.adjoint();
    let x = (&plus + &minus) * c64(0.5, 0.0);
    let y = (&plus - &minus) * c64(0.0, -0.5);
    Ok(SpinOperators {
        spin,
        jx: Operator::hermitian(x)?,
        jy: Operator::hermitian(y)?,
        jz: Operator::hermitian(z)?,
        jplus: Operator::new(plus)?,
        jminus: Operator::new(minus)?,
    })
}

/// Highest-weight state |j, j⟩ rotated by `theta` about (−sin φ, cos φ, 0).
pub fn coherent_spin_state(spin: Spin, theta: f64, phi: f64) -> Result<StateVector> {
    if !theta.is_finite() || !phi.is_finite() {
        return Err(Error::NonFinite("coherent state angles"));
    }
    let ops = spin_operators(spin)?;
    let top = StateVector::basis(vec![spin.dim()], 0)?;
    if theta == 0.0 {
        return Ok(top);
    }
    let generator = ops.along([-phi.sin(), phi.cos(), 0.0])?;
    let rotation = kernel::expm_hermitian(&generator, theta)?;
    top.evolve(&rotation)
}

/// Unit polarization vector of a spin-½ state a|↑⟩ + b|↓⟩.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlochVector {
    pub ux: f64,
    pub uy: f64,
    pub uz: f64,
}

impl BlochVector {
    pub fn as_array(&self) -> [f64; 3] {
        [self.ux, self.uy, self.uz]
    }
}

pub(crate) fn check_spinor(a: C64, b: C64) -> Result<()> {
    if !(a.re.is_finite() && a.im.is_finite() && b.re.is_finite() && b.im.is_finite()) {
        return Err(Error::NonFinite("spinor amplitudes"));
    }
    let norm_sqr = a.norm_sqr() + b.norm_sqr();
    if (norm_sqr - 1.0).abs() > tolerances().state {
        return Err(Error::NotNormalized { norm_sqr });
    }
    Ok(())
}

/// u = (2 Re(a*b), 2 Im(a*b), |a|² − |b|²) / (|a|² + |b|²).
///
/// Dividing by the (already checked) norm keeps rounding in the amplitudes
/// from leaking into the vector: a = b = 1/√2 gives ux = 1 exactly.
pub fn bloch_vector(a: C64, b: C64) -> Result<BlochVector> {
    check_spinor(a, b)?;
    let ab = a.conj() * b;
    let n = a.norm_sqr() + b.norm_sqr();
    Ok(BlochVector {
        ux: 2.0 * ab.re / n,
        uy: 2.0 * ab.im / n,
        uz: (a.norm_sqr() - b.norm_sqr()) / n,
    })
}

/// Spin-½ state a|↑⟩ + b|↓⟩.
pub fn spinor(a: C64, b: C64) -> Result<StateVector> {
    check_spinor(a, b)?;
    StateVector::new(vec![2], nalgebra::DVector::from_vec(vec![a, b]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AngularSpread {
    /// √(⟨Jx²⟩ − ⟨Jx⟩²).
    pub delta_l: f64,
    /// delta_l / ⟨Jz⟩.
    pub delta_theta: f64,
}

/// Transverse angular-momentum spread and orientation uncertainty of a state
/// aligned roughly with +z.
pub fn angular_spread(state: &StateVector, ops: &SpinOperators) -> Result<AngularSpread> {
    if state.dim() != ops.dim() {
        return Err(Error::DimensionMismatch {
            expected: ops.dim(),
            found: state.dim(),
        });
    }
    let jz = kernel::expectation_real(state, &ops.jz)?;
    if jz <= 0.0 {
        return Err(Error::OrientationUndefined(jz));
    }
    let jx = kernel::expectation_real(state, &ops.jx)?;
    let jx_sq = ops.jx.compose(&ops.jx)?;
    let jx2 = kernel::expectation_real(state, &jx_sq)?;
    let delta_l = (jx2 - jx * jx).max(0.0).sqrt();
    Ok(AngularSpread {
        delta_l,
        delta_theta: delta_l / jz,
    })
}

/// ⟨J⟩ as a real 3-vector.
pub fn mean_vector(state: &StateVector, ops: &SpinOperators) -> Result<[f64; 3]> {
    Ok([
        kernel::expectation_real(state, &ops.jx)?,
        kernel::expectation_real(state, &ops.jy)?,
        kernel::expectation_real(state, &ops.jz)?,
    ])
}
