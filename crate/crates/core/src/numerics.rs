//! Global numerical tolerances.
//!
//! Every threshold used by the kernel and the audits lives here. The values
//! can be replaced once per process through [`configure`], before anything
//! reads them; afterwards they are frozen.

use std::sync::OnceLock;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Norms, inner products and Hermiticity of observables.
    pub state: f64,
    /// Unitarity, commutators and conservation audits.
    pub operator: f64,
    /// Threshold below which a branch cross-term counts as zero.
    pub cross_term: f64,
    /// Branches lighter than this are dropped from decompositions.
    pub empty_branch: f64,
    /// Largest total Hilbert-space dimension the kernel will allocate.
    pub max_dim: usize,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        state: 1e-12,
        operator: 1e-10,
        cross_term: 1e-8,
        empty_branch: 1e-14,
        max_dim: 1 << 20,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}

static GLOBAL: OnceLock<Tolerances> = OnceLock::new();

/// The active tolerances.
pub fn tolerances() -> &'static Tolerances {
    GLOBAL.get_or_init(Tolerances::default)
}

/// Installs `tol` as the process-wide tolerances. Fails (returning the
/// rejected value) if tolerances were already configured or read.
pub fn configure(tol: Tolerances) -> Result<(), Tolerances> {
    GLOBAL.set(tol)
}

pub(crate) fn check_dim(requested: usize) -> crate::Result<()> {
    let max = tolerances().max_dim;
    if requested > max {
        return Err(crate::Error::DimensionOverflow { requested, max });
    }
    Ok(())
}

/// Product of dimensions, refusing anything above the configured maximum.
pub(crate) fn total_dim(dims: &[usize]) -> crate::Result<usize> {
    let mut total: usize = 1;
    for &d in dims {
        total = total
            .checked_mul(d)
            .ok_or(crate::Error::DimensionOverflow {
                requested: usize::MAX,
                max: tolerances().max_dim,
            })?;
    }
    check_dim(total)?;
    Ok(total)
}
