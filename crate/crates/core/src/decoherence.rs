//! Record amplification into an environment register of qubits.
//!
//! Each environment qubit starts in |0⟩ and is rotated, conditioned on the
//! record reading "dn", to cos χ|0⟩ + sin χ|1⟩ with o = cos χ. After n qubits
//! the environment states attached to the two record sectors overlap by oⁿ.
//! Environment qubits carry no angular momentum.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::apparatus::{self, CompositeSystem, Outcome, APPARATUS, PARTICLE, RECORD};
use crate::kernel::{c64, subsystem, Operator, StateVector, C64, ZERO};
use crate::numerics::tolerances;
use crate::{Error, Result};

/// Default cap on environment size.
pub const MAX_ENV_QUBITS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvironmentConfig {
    pub n_qubits: usize,
    /// Overlap o between the two conditional states of one environment qubit.
    pub overlap: f64,
}

impl EnvironmentConfig {
    pub fn new(n_qubits: usize, overlap: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&overlap) {
            return Err(Error::invalid("overlap", format!("{overlap} is outside [0, 1]")));
        }
        Ok(EnvironmentConfig { n_qubits, overlap })
    }
}

/// |0⟩⟨0|_rec ⊗ 1 + |1⟩⟨1|_rec ⊗ R, R|0⟩ = o|0⟩ + √(1−o²)|1⟩.
fn controlled_copy(overlap: f64) -> Result<Operator> {
    let c = overlap;
    let s = (1.0 - overlap * overlap).max(0.0).sqrt();
    let mut m = DMatrix::<C64>::zeros(4, 4);
    m[(0, 0)] = c64(1.0, 0.0);
    m[(1, 1)] = c64(1.0, 0.0);
    m[(2, 2)] = c64(c, 0.0);
    m[(3, 2)] = c64(s, 0.0);
    m[(2, 3)] = c64(-s, 0.0);
    m[(3, 3)] = c64(c, 0.0);
    Operator::unitary(m)
}

/// Appends `env.n_qubits` environment qubits and copies the record into them.
pub fn amplify_record(state: &StateVector, sys: &CompositeSystem, env: &EnvironmentConfig) -> Result<StateVector> {
    let base = sys.dims();
    if state.dims() != base.as_slice() {
        return Err(Error::invalid(
            "state",
            format!("expected an unamplified state with dims {base:?}, found {:?}", state.dims()),
        ));
    }
    EnvironmentConfig::new(env.n_qubits, env.overlap)?;
    if env.n_qubits == 0 {
        return Ok(state.clone());
    }
    let copy = controlled_copy(env.overlap)?;
    let zero = StateVector::basis(vec![2], 0)?;
    let mut out = state.clone();
    for k in 0..env.n_qubits {
        out = out.tensor(&zero)?;
        out = out.evolve_local(&copy, &[RECORD, base.len() + k])?;
    }
    Ok(out)
}

fn sector(state: &StateVector, outcome: Outcome) -> Result<(Vec<usize>, nalgebra::DVector<C64>)> {
    let (dims, amps) = subsystem::project_out(state.dims(), state.amplitudes(), RECORD, outcome.record_value())?;
    let weight = amps.norm_squared();
    if weight < tolerances().empty_branch {
        return Err(Error::EmptyBranch {
            label: outcome.label(),
            weight,
        });
    }
    Ok((dims, amps / c64(weight.sqrt(), 0.0)))
}

/// ⟨up|A|dn⟩ between the normalized record sectors with the record itself
/// stripped, `A` acting on particle ⊗ apparatus.
///
/// Equivalently the matrix element of the sector-coupling operator
/// A ⊗ |up⟩⟨dn|_rec ⊗ 1_env. It inherits the environment overlap oⁿ.
pub fn macroscopic_cross_term(state: &StateVector, a: &Operator, sys: &CompositeSystem) -> Result<C64> {
    check_pa_operator(a, sys)?;
    let (dims, up) = sector(state, Outcome::Up)?;
    let (_, dn) = sector(state, Outcome::Dn)?;
    let applied = subsystem::apply_local(&dims, &dn, a, &[PARTICLE, APPARATUS])?;
    Ok(up.dotc(&applied))
}

/// ⟨up|A ⊗ 1_rec ⊗ 1_env|dn⟩ between normalized record sectors, record kept.
/// Zero for every A that leaves the record alone.
pub fn sector_cross_term(state: &StateVector, a: &Operator, sys: &CompositeSystem) -> Result<C64> {
    check_pa_operator(a, sys)?;
    let (dims, up) = sector(state, Outcome::Up)?;
    let (_, dn) = sector(state, Outcome::Dn)?;
    let (full, up) = subsystem::embed(&dims, &up, RECORD, 2, 0)?;
    let (_, dn) = subsystem::embed(&dims, &dn, RECORD, 2, 1)?;
    let applied = subsystem::apply_local(&full, &dn, a, &[PARTICLE, APPARATUS])?;
    Ok(up.dotc(&applied))
}

fn check_pa_operator(a: &Operator, sys: &CompositeSystem) -> Result<()> {
    let want = 2 * sys.spin().dim();
    if a.dim() != want {
        return Err(Error::DimensionMismatch {
            expected: want,
            found: a.dim(),
        });
    }
    Ok(())
}

/// (n, oⁿ) for n = 0..=n_max.
pub fn overlap_decay_curve(overlap: f64, n_max: usize) -> Result<Vec<(usize, f64)>> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::invalid("overlap", format!("{overlap} is outside [0, 1)")));
    }
    let exp = i32::try_from(n_max).map_err(|_| Error::invalid("n_max", "too large"))?;
    Ok((0..=exp).map(|n| (n as usize, overlap.powi(n))).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayRow {
    pub n: usize,
    pub bound: f64,
    pub measured: f64,
    pub baseline: f64,
    /// |measured − bound · baseline|.
    pub deviation: f64,
}

/// S_x ⊗ 1 on particle ⊗ apparatus.
///
/// Components of J never couple the two total-j manifolds, so their
/// record-stripped brackets vanish identically; the particle's own spin
/// does couple them and gives a nonzero baseline.
pub fn particle_sx(sys: &CompositeSystem) -> Result<Operator> {
    crate::kernel::kron(&sys.particle_ops().jx, &Operator::identity(sys.spin().dim()))
}

/// Measures |macroscopic cross term| of `op` for every environment size in
/// 0..=n_max and compares against oⁿ × (n = 0 value).
pub fn decay_study(
    sys: &CompositeSystem,
    a: C64,
    b: C64,
    op: &Operator,
    overlap: f64,
    n_max: usize,
) -> Result<Vec<DecayRow>> {
    if n_max > MAX_ENV_QUBITS {
        return Err(Error::invalid(
            "n_max",
            format!("{n_max} exceeds the environment cap of {MAX_ENV_QUBITS} qubits"),
        ));
    }
    let curve = overlap_decay_curve(overlap, n_max)?;
    let premeasured = apparatus::premeasure(a, b, sys)?;
    let baseline = macroscopic_cross_term(&premeasured, op, sys)?.norm();
    curve
        .par_iter()
        .map(|&(n, bound)| {
            let env = EnvironmentConfig::new(n, overlap)?;
            let amplified = amplify_record(&premeasured, sys, &env)?;
            let measured = macroscopic_cross_term(&amplified, op, sys)?.norm();
            Ok(DecayRow {
                n,
                bound,
                measured,
                baseline,
                deviation: (measured - bound * baseline).abs(),
            })
        })
        .collect()
}

/// Overlap of the environment states attached to the two record sectors.
pub fn environment_overlap(env: &EnvironmentConfig) -> Result<C64> {
    let copy = controlled_copy(env.overlap)?;
    let mut overlap = c64(1.0, 0.0);
    let zero = nalgebra::DVector::from_vec(vec![c64(1.0, 0.0), ZERO]);
    let up_q = copy.matrix().view((0, 0), (2, 2)) * &zero;
    let dn_q = copy.matrix().view((2, 2), (2, 2)) * &zero;
    for _ in 0..env.n_qubits {
        overlap *= up_q.dotc(&dn_q);
    }
    Ok(overlap)
}
