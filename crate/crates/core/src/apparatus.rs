//! Exactly conserving measurement of a spin-½ particle by a spin-L apparatus.
//!
//! The Hilbert space is particle (2) ⊗ apparatus (2L+1) ⊗ record qubit (2).
//! The premeasurement unitary is
//!
//! ```text
//! U = Π₊ ⊗ 1_rec + Π₋ ⊗ X_rec
//! ```
//!
//! where Π± project particle ⊗ apparatus onto total spin j = L ± ½. Both
//! projectors are functions of the rotation-invariant S·L, so U commutes with
//! every component of J = S ⊗ 1 + 1 ⊗ L. The record carries no angular
//! momentum. With the apparatus in |L, L⟩ the record reads the particle spin
//! along +z with a small, unavoidable error.
//!
//! Record value 0 is the "up" sector, 1 the "dn" sector.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::ideal::BranchValue;
use crate::kernel::{self, c64, subsystem, Operator, StateVector, C64, ZERO};
use crate::numerics::tolerances;
use crate::spin::{self, Spin, SpinOperators};
use crate::{CVec3, Error, Result, Vec3};

pub const PARTICLE: usize = 0;
pub const APPARATUS: usize = 1;
pub const RECORD: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Outcome {
    Up,
    Dn,
}

impl Outcome {
    pub fn record_value(self) -> usize {
        match self {
            Outcome::Up => 0,
            Outcome::Dn => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Outcome::Up => "up",
            Outcome::Dn => "dn",
        }
    }

    pub const BOTH: [Outcome; 2] = [Outcome::Up, Outcome::Dn];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ApparatusConfig {
    pub spin: Spin,
    /// Polar tilt of the apparatus coherent state away from +z (radians).
    pub tilt: f64,
}

impl ApparatusConfig {
    pub fn aligned(spin: Spin) -> Self {
        ApparatusConfig { spin, tilt: 0.0 }
    }
}

/// Particle, apparatus and record with the conserving premeasurement unitary.
#[derive(Debug, Clone)]
pub struct CompositeSystem {
    config: ApparatusConfig,
    particle_ops: SpinOperators,
    apparatus_ops: SpinOperators,
    j_pa: [Operator; 3],
    j_total: [Operator; 3],
    pi_plus: Operator,
    pi_minus: Operator,
    u_meas: Operator,
    ready: StateVector,
}

fn check_apparatus_spin(spin: Spin) -> Result<()> {
    if spin.twice() < 1 {
        return Err(Error::invalid("L", "apparatus spin must be at least 1/2"));
    }
    Ok(())
}

/// S·L on particle ⊗ apparatus.
fn spin_dot(s: &SpinOperators, l: &SpinOperators) -> Result<Operator> {
    let mut acc = DMatrix::<C64>::zeros(s.dim() * l.dim(), s.dim() * l.dim());
    for (sk, lk) in s.cartesian().iter().zip(l.cartesian()) {
        acc += kernel::kron(sk, lk)?.matrix();
    }
    Operator::hermitian(acc)
}

/// Spectral projectors of S·L onto the j = L + ½ and j = L − ½ manifolds.
///
/// S·L takes the value L/2 on j = L + ½ and −(L+1)/2 on j = L − ½, so
/// Π₊ = (S·L + (L+1)/2) / (L + ½).
pub fn manifold_projectors(spin: Spin) -> Result<(Operator, Operator)> {
    check_apparatus_spin(spin)?;
    let s = spin::spin_operators(Spin::HALF)?;
    let l = spin::spin_operators(spin)?;
    projectors_from(&s, &l)
}

pub(crate) fn projectors_from(s: &SpinOperators, l: &SpinOperators) -> Result<(Operator, Operator)> {
    let lv = l.spin.value();
    let sl = spin_dot(s, l)?;
    let n = sl.dim();
    let id = DMatrix::<C64>::identity(n, n);
    let plus = (sl.matrix() + &id * c64((lv + 1.0) / 2.0, 0.0)) / c64(lv + 0.5, 0.0);
    let minus = &id - &plus;
    Ok((Operator::hermitian(plus)?, Operator::hermitian(minus)?))
}

fn record_flip() -> Operator {
    Operator::unitary(DMatrix::from_row_slice(
        2,
        2,
        &[ZERO, c64(1.0, 0.0), c64(1.0, 0.0), ZERO],
    ))
    .expect("Pauli X is unitary")
}

/// Builds the aligned-apparatus system for spin `spin`.
pub fn build_measurement_unitary(spin: Spin) -> Result<CompositeSystem> {
    CompositeSystem::new(ApparatusConfig::aligned(spin))
}

impl CompositeSystem {
    pub fn new(config: ApparatusConfig) -> Result<Self> {
        check_apparatus_spin(config.spin)?;
        if !config.tilt.is_finite() {
            return Err(Error::NonFinite("apparatus tilt"));
        }
        let particle_ops = spin::spin_operators(Spin::HALF)?;
        let apparatus_ops = spin::spin_operators(config.spin)?;
        let id_p = Operator::identity(2);
        let id_a = Operator::identity(config.spin.dim());
        let id_r = Operator::identity(2);

        let mut j_pa = Vec::with_capacity(3);
        let mut j_total = Vec::with_capacity(3);
        for (s, l) in particle_ops.cartesian().iter().zip(apparatus_ops.cartesian()) {
            let jk = kernel::kron(s, &id_a)?.add(&kernel::kron(&id_p, l)?)?;
            j_total.push(kernel::kron(&jk, &id_r)?);
            j_pa.push(jk);
        }
        let j_pa: [Operator; 3] = j_pa.try_into().expect("three components");
        let j_total: [Operator; 3] = j_total.try_into().expect("three components");

        let (pi_plus, pi_minus) = projectors_from(&particle_ops, &apparatus_ops)?;
        let u = kernel::kron(&pi_plus, &id_r)?
            .add(&kernel::kron(&pi_minus, &record_flip())?)?;
        let u_meas = Operator::unitary(u.into_matrix())?;

        // [U, J⊗1] = [Π₊, J]⊗(1 − X) occupies disjoint entries, so its
        // max-entry norm equals that of [Π₊, J].
        for (k, jk) in j_pa.iter().enumerate() {
            let defect = kernel::commutator_norm(&pi_plus, jk)?;
            if defect > tolerances().operator {
                return Err(Error::InvariantViolation(format!(
                    "premeasurement unitary fails to commute with J_{} ({defect:e})",
                    ["x", "y", "z"][k]
                )));
            }
        }

        let ready = spin::coherent_spin_state(config.spin, config.tilt, 0.0)?;
        Ok(CompositeSystem {
            config,
            particle_ops,
            apparatus_ops,
            j_pa,
            j_total,
            pi_plus,
            pi_minus,
            u_meas,
            ready,
        })
    }

    pub fn config(&self) -> ApparatusConfig {
        self.config
    }

    pub fn spin(&self) -> Spin {
        self.config.spin
    }

    /// [2, 2L+1, 2].
    pub fn dims(&self) -> Vec<usize> {
        vec![2, self.config.spin.dim(), 2]
    }

    pub fn particle_ops(&self) -> &SpinOperators {
        &self.particle_ops
    }

    pub fn apparatus_ops(&self) -> &SpinOperators {
        &self.apparatus_ops
    }

    /// Total angular momentum on particle ⊗ apparatus.
    pub fn j_particle_apparatus(&self) -> &[Operator; 3] {
        &self.j_pa
    }

    /// Total angular momentum on particle ⊗ apparatus ⊗ record.
    pub fn j_total(&self) -> &[Operator; 3] {
        &self.j_total
    }

    pub fn projectors(&self) -> (&Operator, &Operator) {
        (&self.pi_plus, &self.pi_minus)
    }

    pub fn u_meas(&self) -> &Operator {
        &self.u_meas
    }

    pub fn ready_state(&self) -> &StateVector {
        &self.ready
    }

    /// Full max-entry commutator norms ‖[U, J_k]‖ on the whole space.
    pub fn conservation_defect(&self) -> Result<Vec3> {
        let mut out = [0.0; 3];
        for (k, jk) in self.j_total.iter().enumerate() {
            out[k] = kernel::commutator_norm(&self.u_meas, jk)?;
        }
        Ok(out)
    }

    /// (a|↑⟩ + b|↓⟩) ⊗ |ready⟩ ⊗ |rec: 0⟩.
    pub fn initial_state(&self, a: C64, b: C64) -> Result<StateVector> {
        let particle = spin::spinor(a, b)?;
        let record = StateVector::basis(vec![2], 0)?;
        particle.tensor(&self.ready)?.tensor(&record)
    }

    /// ⟨J⟩ of a state whose first two subsystems are particle and apparatus.
    pub fn mean_j(&self, state: &StateVector) -> Result<Vec3> {
        mean_j_local(&self.j_pa, state)
    }

    /// Alternative construction U = exp(−iτ (S·L − L/2) ⊗ (1 − X)/2) with
    /// τ = π / (L + ½), used to cross-check the projector form.
    pub fn generator_unitary(&self) -> Result<Operator> {
        let lv = self.config.spin.value();
        let sl = spin_dot(&self.particle_ops, &self.apparatus_ops)?;
        let n = sl.dim();
        let shifted = sl.sub(&Operator::identity(n).scale_real(lv / 2.0))?;
        let g_rec = Operator::hermitian(DMatrix::from_row_slice(
            2,
            2,
            &[c64(0.5, 0.0), c64(-0.5, 0.0), c64(-0.5, 0.0), c64(0.5, 0.0)],
        ))?;
        let generator = kernel::kron(&shifted, &g_rec)?;
        kernel::expm_hermitian(&generator, std::f64::consts::PI / (lv + 0.5))
    }
}

pub(crate) fn mean_j_local(j_pa: &[Operator; 3], state: &StateVector) -> Result<Vec3> {
    let mut out = [0.0; 3];
    for (k, jk) in j_pa.iter().enumerate() {
        out[k] = subsystem::local_expectation(state.dims(), state.amplitudes(), jk, &[PARTICLE, APPARATUS])?.re;
    }
    Ok(out)
}

/// U_meas applied to (a|↑⟩ + b|↓⟩) ⊗ |ready⟩ ⊗ |rec: 0⟩, with a conservation audit.
pub fn premeasure(a: C64, b: C64, sys: &CompositeSystem) -> Result<StateVector> {
    let initial = sys.initial_state(a, b)?;
    let final_state = initial.evolve(&sys.u_meas)?;
    let before = sys.mean_j(&initial)?;
    let after = sys.mean_j(&final_state)?;
    for k in 0..3 {
        let drift = (after[k] - before[k]).abs();
        if drift > tolerances().operator {
            return Err(Error::InvariantViolation(format!(
                "premeasurement changed <J_{}> by {drift:e}",
                ["x", "y", "z"][k]
            )));
        }
    }
    Ok(final_state)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub label: Outcome,
    /// N or M: real, nonnegative.
    pub coefficient: C64,
    /// Normalized branch state with the record subsystem removed.
    pub state: StateVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchDecomposition {
    pub branches: Vec<Branch>,
    pub source_state: StateVector,
    /// Explanations for omitted branches.
    pub notes: Vec<String>,
}

impl BranchDecomposition {
    pub fn branch(&self, label: Outcome) -> Option<&Branch> {
        self.branches.iter().find(|b| b.label == label)
    }

    pub fn weight(&self, label: Outcome) -> f64 {
        self.branch(label).map_or(0.0, |b| b.coefficient.norm_sqr())
    }

    /// Σ coefficient · (branch ⊗ record label) as an amplitude vector.
    pub fn reconstruct(&self) -> Result<DVector<C64>> {
        let mut acc = DVector::<C64>::zeros(self.source_state.dim());
        for b in &self.branches {
            let (_, emb) = subsystem::embed(
                b.state.dims(),
                b.state.amplitudes(),
                RECORD,
                2,
                b.label.record_value(),
            )?;
            acc += emb * b.coefficient;
        }
        Ok(acc)
    }

    pub fn reconstruction_residual(&self) -> Result<f64> {
        let diff = self.reconstruct()? - self.source_state.amplitudes();
        Ok(diff.iter().fold(0.0_f64, |m, z| m.max(z.norm())))
    }

    /// Per-branch ⟨J⟩ with the branch coefficients, for the classifier.
    pub fn branch_values(&self, sys: &CompositeSystem) -> Result<Vec<BranchValue>> {
        self.branches
            .iter()
            .map(|b| {
                Ok(BranchValue::new(
                    b.label.label(),
                    b.coefficient,
                    mean_j_local(&sys.j_pa, &b.state)?,
                ))
            })
            .collect()
    }
}

fn check_record_layout(state: &StateVector, sys: &CompositeSystem) -> Result<()> {
    let want = sys.dims();
    if state.dims().len() < 3 || state.dims()[..3] != want[..] {
        return Err(Error::invalid(
            "state",
            format!("expected leading subsystems {want:?}, found {:?}", state.dims()),
        ));
    }
    Ok(())
}

/// Splits a premeasured state by record value into normalized branches.
///
/// Works for any state whose first three subsystems are particle, apparatus
/// and record (environment registers may follow).
pub fn decompose_branches(final_state: &StateVector, sys: &CompositeSystem) -> Result<BranchDecomposition> {
    check_record_layout(final_state, sys)?;
    let mut branches = Vec::with_capacity(2);
    let mut notes = Vec::new();
    for label in Outcome::BOTH {
        let (dims, amps) = subsystem::project_out(
            final_state.dims(),
            final_state.amplitudes(),
            RECORD,
            label.record_value(),
        )?;
        let weight = amps.norm_squared();
        if weight < tolerances().empty_branch {
            notes.push(format!("{} branch omitted (weight {weight:e})", label.label()));
            continue;
        }
        let norm = weight.sqrt();
        branches.push(Branch {
            label,
            coefficient: c64(norm, 0.0),
            state: StateVector::normalized(dims, amps)?,
        });
    }
    Ok(BranchDecomposition {
        branches,
        source_state: final_state.clone(),
        notes,
    })
}

/// Initial value, branch values and record-sector cross contribution of J
/// for the classifier.
///
/// The cross contribution is ⟨P_up ψ| J ⊗ 1_rec |P_dn ψ⟩ between the
/// unnormalized record sectors, i.e. c_up* c_dn ⟨up|J|dn⟩.
pub fn apparatus_bookkeeping(a: C64, b: C64, sys: &CompositeSystem) -> Result<(Vec3, Vec<BranchValue>, CVec3)> {
    let initial_state = sys.initial_state(a, b)?;
    let initial = sys.mean_j(&initial_state)?;
    let final_state = premeasure(a, b, sys)?;
    let dec = decompose_branches(&final_state, sys)?;
    let branches = dec.branch_values(sys)?;
    let mut cross = [ZERO; 3];
    let dims = final_state.dims();
    let (_, up) = subsystem::project_out(dims, final_state.amplitudes(), RECORD, 0)?;
    let (_, dn) = subsystem::project_out(dims, final_state.amplitudes(), RECORD, 1)?;
    let (up_full_dims, up) = subsystem::embed(&[dims[0], dims[1]], &up, RECORD, 2, 0)?;
    let (_, dn) = subsystem::embed(&[dims[0], dims[1]], &dn, RECORD, 2, 1)?;
    for (k, jk) in sys.j_pa.iter().enumerate() {
        let applied = subsystem::apply_local(&up_full_dims, &dn, jk, &[PARTICLE, APPARATUS])?;
        cross[k] = up.dotc(&applied);
    }
    Ok((initial, branches, cross))
}

/// C, D, E, F and the normalized states |u⟩, |d′⟩, |d⟩, |u′⟩ on particle ⊗ apparatus.
///
/// |+z⟩|ready⟩ → C|u⟩ + D|d′⟩ and |−z⟩|ready⟩ → E|d⟩ + F|u′⟩; phases are
/// absorbed into the states so the amplitudes are real and nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorAmplitudes {
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    pub u: Option<StateVector>,
    pub d_err: Option<StateVector>,
    pub d_state: Option<StateVector>,
    pub u_err: Option<StateVector>,
}

fn sector_state(state: &StateVector, outcome: Outcome) -> Result<(f64, Option<StateVector>)> {
    let (dims, amps) = subsystem::project_out(state.dims(), state.amplitudes(), RECORD, outcome.record_value())?;
    let norm = amps.norm();
    if norm * norm < tolerances().empty_branch {
        return Ok((norm, None));
    }
    Ok((norm, Some(StateVector::normalized(dims, amps)?)))
}

pub fn extract_error_amplitudes(sys: &CompositeSystem) -> Result<ErrorAmplitudes> {
    let one = c64(1.0, 0.0);
    let p = premeasure(one, ZERO, sys)?;
    let q = premeasure(ZERO, one, sys)?;
    let (c, u) = sector_state(&p, Outcome::Up)?;
    let (d, d_err) = sector_state(&p, Outcome::Dn)?;
    let (e, d_state) = sector_state(&q, Outcome::Dn)?;
    let (f, u_err) = sector_state(&q, Outcome::Up)?;
    let tol = tolerances().operator;
    if (c * c + d * d - 1.0).abs() > tol || (e * e + f * f - 1.0).abs() > tol {
        return Err(Error::InvariantViolation(format!(
            "error amplitudes not normalized: C²+D² = {}, E²+F² = {}",
            c * c + d * d,
            e * e + f * f
        )));
    }
    Ok(ErrorAmplitudes {
        c,
        d,
        e,
        f,
        u,
        d_err,
        d_state,
        u_err,
    })
}

fn bracket_vec(j: &[Operator; 3], bra: &StateVector, ket: &StateVector) -> Result<CVec3> {
    Ok([
        kernel::bracket(bra, &j[0], ket)?,
        kernel::bracket(bra, &j[1], ket)?,
        kernel::bracket(bra, &j[2], ket)?,
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchingReport {
    /// C F ⟨u|J|u′⟩ + E D ⟨d|J|d′⟩*.
    pub lhs: CVec3,
    /// lhs − (½, −i/2, 0).
    pub residuals: CVec3,
    /// ⟨u|J|u′⟩ (zero when a state is absent).
    pub u_bracket: CVec3,
    /// ⟨d|J|d′⟩ (zero when a state is absent).
    pub d_bracket: CVec3,
}

impl MatchingReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
    }
}

/// Target of the coefficient matching: ⟨↑|S|↓⟩ = (½, −i/2, 0).
pub const MATCHING_TARGET: CVec3 = [
    C64 { re: 0.5, im: 0.0 },
    C64 { re: 0.0, im: -0.5 },
    C64 { re: 0.0, im: 0.0 },
];

/// Evaluates the three coefficient-matching equations with numerical brackets.
///
/// The a*b coefficient of ⟨final|J|final⟩ is ⟨p|J|q⟩ = CF⟨u|J|u′⟩ +
/// DE⟨d′|J|d⟩, and ⟨d′|J|d⟩ = ⟨d|J|d′⟩*; the conjugate only matters when
/// D ≠ 0 and ⟨d|J|d′⟩ is complex.
pub fn verify_matching_equations(sys: &CompositeSystem) -> Result<MatchingReport> {
    let amp = extract_error_amplitudes(sys)?;
    let u_bracket = match (&amp.u, &amp.u_err) {
        (Some(u), Some(ue)) => bracket_vec(&sys.j_pa, u, ue)?,
        _ => [ZERO; 3],
    };
    let d_bracket = match (&amp.d_state, &amp.d_err) {
        (Some(d), Some(de)) => bracket_vec(&sys.j_pa, d, de)?,
        _ => [ZERO; 3],
    };
    let mut lhs = [ZERO; 3];
    let mut residuals = [ZERO; 3];
    for k in 0..3 {
        lhs[k] = u_bracket[k] * (amp.c * amp.f) + d_bracket[k].conj() * (amp.e * amp.d);
        residuals[k] = lhs[k] - MATCHING_TARGET[k];
    }
    Ok(MatchingReport {
        lhs,
        residuals,
        u_bracket,
        d_bracket,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingRow {
    pub spin: Spin,
    /// |⟨u|Jx|u′⟩|.
    pub bracket: f64,
    /// Transverse spread of the apparatus ready state.
    pub delta_l: f64,
    /// 1/Δθ = ⟨Lz⟩/ΔL.
    pub inv_delta_theta: f64,
}

/// |⟨u|Jx|u′⟩|, ΔL and 1/Δθ for each aligned apparatus spin.
pub fn bracket_magnitude_scaling(spins: &[Spin]) -> Result<Vec<ScalingRow>> {
    if spins.is_empty() {
        return Err(Error::invalid("L_list", "at least one apparatus spin is required"));
    }
    spins
        .par_iter()
        .map(|&spin| {
            let sys = build_measurement_unitary(spin)?;
            let report = verify_matching_equations(&sys)?;
            let spread = spin::angular_spread(sys.ready_state(), sys.apparatus_ops())?;
            Ok(ScalingRow {
                spin,
                bracket: report.u_bracket[0].norm(),
                delta_l: spread.delta_l,
                inv_delta_theta: 1.0 / spread.delta_theta,
            })
        })
        .collect()
}

/// Boltzmann constant (J/K) used by the thermal estimate.
pub const BOLTZMANN_K: f64 = 1.3807e-23;
/// Reduced Planck constant (J·s) used by the thermal estimate.
pub const HBAR: f64 = 1.0546e-34;
/// Commonly quoted order of magnitude of Δθ for a 0.01 kg·m² device at 300 K.
pub const QUOTED_DELTA_THETA: f64 = 1e-22;

/// Thermal angular-momentum spread and minimum orientation uncertainty, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThermalApparatus {
    pub moment_of_inertia: f64,
    pub temperature: f64,
    pub boltzmann_k: f64,
    pub hbar: f64,
    /// I k T, kg²·m⁴/s².
    pub ikt: f64,
    /// √(I k T), kg·m²/s.
    pub delta_l: f64,
    /// ħ / ΔL, radians.
    pub delta_theta: f64,
}

pub fn thermal_orientation_uncertainty(moment_of_inertia: f64, temperature: f64) -> Result<ThermalApparatus> {
    if !(moment_of_inertia > 0.0 && moment_of_inertia.is_finite()) {
        return Err(Error::invalid("I", "moment of inertia must be positive and finite"));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::invalid("T", "temperature must be positive and finite"));
    }
    let ikt = moment_of_inertia * BOLTZMANN_K * temperature;
    let delta_l = ikt.sqrt();
    Ok(ThermalApparatus {
        moment_of_inertia,
        temperature,
        boltzmann_k: BOLTZMANN_K,
        hbar: HBAR,
        ikt,
        delta_l,
        delta_theta: HBAR / delta_l,
    })
}

/// cos(θ/2)|↑⟩ + e^{iφ} sin(θ/2)|↓⟩.
pub fn spinor_from_angles(theta: f64, phi: f64) -> (C64, C64) {
    (
        c64((theta / 2.0).cos(), 0.0),
        C64::from_polar((theta / 2.0).sin(), phi),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn one() -> C64 {
        c64(1.0, 0.0)
    }

    #[test]
    fn projector_ranks_and_completeness() {
        for twice in [1u32, 2, 3, 4, 7] {
            let spin = Spin::from_twice(twice);
            let (p, m) = manifold_projectors(spin).unwrap();
            let tr_p = p.matrix().trace().re;
            let tr_m = m.matrix().trace().re;
            let lv = spin.value();
            assert!((tr_p - (2.0 * lv + 2.0)).abs() < 1e-12);
            assert!((tr_m - 2.0 * lv).abs() < 1e-12);
            let pp = p.compose(&p).unwrap();
            assert!(kernel::max_abs_diff(&pp, &p).unwrap() < 1e-12);
            let mm = m.compose(&m).unwrap();
            assert!(kernel::max_abs_diff(&mm, &m).unwrap() < 1e-12);
            assert!(kernel::identity_deviation(&p.add(&m).unwrap()) < 1e-15);
        }
    }

    #[test]
    fn spin_half_apparatus_gives_triplet_and_singlet() {
        let (p, m) = manifold_projectors(Spin::HALF).unwrap();
        assert!((p.matrix().trace().re - 3.0).abs() < 1e-14);
        assert!((m.matrix().trace().re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn stretched_state_lies_in_upper_manifold() {
        for l in [1u32, 2, 5] {
            let sys = build_measurement_unitary(Spin::integer(l)).unwrap();
            let up_top = spin::spinor(one(), ZERO).unwrap().tensor(sys.ready_state()).unwrap();
            let projected = sys.projectors().0.matrix() * up_top.amplitudes();
            let diff = (projected - up_top.amplitudes()).norm();
            assert!(diff < 1e-14);
        }
    }

    #[test]
    fn lowered_state_has_upper_weight_one_over_2l_plus_1() {
        let sys = build_measurement_unitary(Spin::integer(2)).unwrap();
        let down_top = spin::spinor(ZERO, one()).unwrap().tensor(sys.ready_state()).unwrap();
        let w = (sys.projectors().0.matrix() * down_top.amplitudes()).norm_squared();
        assert!((w - 0.2).abs() < 1e-14);
    }

    #[test]
    fn projector_matches_eigendecomposition_of_j_squared() {
        // Oracle: diagonalize J² = Σ J_k² on particle ⊗ apparatus and project
        // onto eigenvalues (L+½)(L+3/2).
        let spin = Spin::integer(2);
        let sys = build_measurement_unitary(spin).unwrap();
        let j = sys.j_particle_apparatus();
        let j2 = j.iter().fold(DMatrix::<C64>::zeros(10, 10), |acc, jk| acc + jk.matrix() * jk.matrix());
        let eig = j2.symmetric_eigen();
        let target = 2.5 * 3.5;
        let mut proj = DMatrix::<C64>::zeros(10, 10);
        for (i, lambda) in eig.eigenvalues.iter().enumerate() {
            if (lambda - target).abs() < 1e-8 {
                let v = eig.eigenvectors.column(i);
                proj += v * v.adjoint();
            }
        }
        let diff = (proj - sys.projectors().0.matrix()).iter().fold(0.0_f64, |m, z| m.max(z.norm()));
        assert!(diff < 1e-10);
    }

    #[test]
    fn unitary_commutes_with_all_components() {
        let sys = build_measurement_unitary(Spin::integer(1)).unwrap();
        let defect = sys.conservation_defect().unwrap();
        assert!(defect.iter().all(|&d| d <= 1e-12), "{defect:?}");
        assert!(sys.u_meas().is_unitary());
    }

    #[test]
    fn generator_form_reproduces_projector_form() {
        for twice in [1u32, 2, 5] {
            let sys = build_measurement_unitary(Spin::from_twice(twice)).unwrap();
            let alt = sys.generator_unitary().unwrap();
            assert!(kernel::max_abs_diff(&alt, sys.u_meas()).unwrap() < 1e-10);
        }
    }

    #[test]
    fn up_input_never_flips_record() {
        let sys = build_measurement_unitary(Spin::integer(3)).unwrap();
        let fin = premeasure(one(), ZERO, &sys).unwrap();
        let dec = decompose_branches(&fin, &sys).unwrap();
        assert_eq!(dec.branches.len(), 1);
        assert_eq!(dec.branches[0].label, Outcome::Up);
        assert!((dec.branches[0].coefficient.re - 1.0).abs() < 1e-14);
        assert_eq!(dec.notes.len(), 1);
    }

    #[test]
    fn down_input_flips_record_with_probability_2l_over_2l_plus_1() {
        let sys = build_measurement_unitary(Spin::integer(1)).unwrap();
        let fin = premeasure(ZERO, one(), &sys).unwrap();
        let dec = decompose_branches(&fin, &sys).unwrap();
        assert!((dec.weight(Outcome::Dn) - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn premeasure_conserves_and_matches_initial_values() {
        let sys = build_measurement_unitary(Spin::integer(4)).unwrap();
        let fin = premeasure(one(), ZERO, &sys).unwrap();
        let j = sys.mean_j(&fin).unwrap();
        assert!((j[2] - 4.5).abs() < 1e-12);

        let r = c64(FRAC_1_SQRT_2, 0.0);
        let fin = premeasure(r, r, &sys).unwrap();
        let j = sys.mean_j(&fin).unwrap();
        assert!((j[0] - 0.5).abs() < 1e-12);
        // record flips with probability ½ · 2L/(2L+1) = 4/9
        let dec = decompose_branches(&fin, &sys).unwrap();
        assert!((dec.weight(Outcome::Dn) - 4.0 / 9.0).abs() < 1e-12);
        assert!(matches!(
            premeasure(one(), one(), &sys),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn down_input_branches_for_l_2() {
        let sys = build_measurement_unitary(Spin::integer(2)).unwrap();
        let fin = premeasure(ZERO, one(), &sys).unwrap();
        let dec = decompose_branches(&fin, &sys).unwrap();
        assert!((dec.branch(Outcome::Dn).unwrap().coefficient.re - 0.8f64.sqrt()).abs() < 1e-14);
        assert!((dec.branch(Outcome::Up).unwrap().coefficient.re - 0.2f64.sqrt()).abs() < 1e-14);
        assert!(dec.reconstruction_residual().unwrap() < 1e-14);
    }

    #[test]
    fn error_amplitudes_for_l_1() {
        let sys = build_measurement_unitary(Spin::integer(1)).unwrap();
        let amp = extract_error_amplitudes(&sys).unwrap();
        assert!((amp.c - 1.0).abs() < 1e-14);
        assert!(amp.d.abs() < 1e-14 && amp.d_err.is_none());
        assert!((amp.e - (2.0f64 / 3.0).sqrt()).abs() < 1e-14);
        assert!((amp.f - 1.0 / 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn tilted_apparatus_has_both_error_amplitudes_and_still_matches() {
        let sys = CompositeSystem::new(ApparatusConfig {
            spin: Spin::integer(3),
            tilt: 0.4,
        })
        .unwrap();
        let amp = extract_error_amplitudes(&sys).unwrap();
        assert!(amp.d > 1e-3 && amp.f > 1e-3);
        let rep = verify_matching_equations(&sys).unwrap();
        assert!(rep.max_residual() < 1e-10, "{:?}", rep.residuals);
        assert!(sys.conservation_defect().unwrap().iter().all(|&d| d < 1e-12));
    }

    #[test]
    fn matching_brackets_follow_ladder_oracle() {
        // ⟨u|Jx|u′⟩ = √(2L+1)/2: u = |↑,L⟩, u′ = (|↓,L⟩ + √(2L)|↑,L−1⟩)/√(2L+1)
        let sys = build_measurement_unitary(Spin::integer(1)).unwrap();
        let rep = verify_matching_equations(&sys).unwrap();
        assert!((rep.u_bracket[0] - c64(3f64.sqrt() / 2.0, 0.0)).norm() < 1e-12);
        assert!((rep.lhs[0] - c64(0.5, 0.0)).norm() < 1e-12);

        let sys = build_measurement_unitary(Spin::integer(4)).unwrap();
        let rep = verify_matching_equations(&sys).unwrap();
        assert!((rep.u_bracket[1] - c64(0.0, -1.5)).norm() < 1e-12);
        assert!((rep.lhs[1] - c64(0.0, -0.5)).norm() < 1e-12);
        assert!(rep.lhs[2].norm() < 1e-12);
    }

    #[test]
    fn scaling_rows_follow_closed_forms() {
        let rows = bracket_magnitude_scaling(&[Spin::integer(8)]).unwrap();
        let r = rows[0];
        assert!((r.bracket - 17f64.sqrt() / 2.0).abs() < 1e-12);
        assert!((r.delta_l - 2.0).abs() < 1e-12);
        assert!((r.inv_delta_theta - 4.0).abs() < 1e-12);
        assert!(bracket_magnitude_scaling(&[]).is_err());
    }

    #[test]
    fn thermal_estimate() {
        let t = thermal_orientation_uncertainty(0.01, 300.0).unwrap();
        assert!((t.ikt - 4.1421e-23).abs() < 1e-27);
        assert!((t.delta_l - 6.4359e-12).abs() < 1e-15);
        assert!((t.delta_theta - 1.6386e-23).abs() < 1e-26);
        assert!(thermal_orientation_uncertainty(0.0, 300.0).is_err());
        assert!(thermal_orientation_uncertainty(0.01, -1.0).is_err());
    }

    #[test]
    fn invalid_apparatus_spin() {
        assert!(build_measurement_unitary(Spin::from_twice(0)).is_err());
        assert!(manifold_projectors(Spin::from_twice(0)).is_err());
    }
}
