//! Seeded branch-sampling studies: the satellite ledger and postselected streaks.
//!
//! Every particle meets a fresh apparatus in its ready state, so a run of N
//! particles is N independent premeasurements; cumulative bookkeeping lives
//! in ledgers rather than in an N-fold tensor product.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::apparatus::{self, CompositeSystem, Outcome, PARTICLE};
use crate::kernel::{self, c64, subsystem, StateVector, C64};
use crate::numerics::tolerances;
use crate::spin::{self, Spin};
use crate::{Error, Result, Vec3};

/// Identifier of the sampling generator, recorded in output metadata.
pub const PRNG_ID: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64, stream = trajectory index";

/// Fresh-apparatus note carried into output metadata.
pub const FRESH_APPARATUS_NOTE: &str =
    "each particle meets a fresh apparatus in its ready state; cumulative bookkeeping is carried by ledgers";

fn trajectory_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn sample(rng: &mut ChaCha8Rng, p_up: f64) -> Outcome {
    if rng.random::<f64>() < p_up {
        Outcome::Up
    } else {
        Outcome::Dn
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SatelliteStep {
    pub step: usize,
    pub outcome: Outcome,
    pub branch_weight: f64,
    /// ⟨J⟩ on particle ⊗ apparatus in the sampled branch.
    pub per_branch_j: Vec3,
    /// Cumulative Σ (ideal branch value − ⟨J⟩_initial).
    pub ideal_ledger_j: Vec3,
    /// Cumulative Σ (⟨J⟩_branch − ⟨J⟩_initial).
    pub full_ledger_j: Vec3,
    /// max_k |Σ_branches w ⟨J_k⟩ − ⟨J_k⟩_initial|.
    pub unconditioned_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SatelliteRun {
    pub n_particles: usize,
    pub spin: Spin,
    pub a: C64,
    pub b: C64,
    pub seed: u64,
    pub stream: u64,
    pub prng: &'static str,
    pub initial_j: Vec3,
    pub trajectory: Vec<SatelliteStep>,
}

impl SatelliteRun {
    pub fn final_step(&self) -> &SatelliteStep {
        self.trajectory.last().expect("n_particles ≥ 1")
    }

    pub fn up_count(&self) -> usize {
        self.trajectory.iter().filter(|s| s.outcome == Outcome::Up).count()
    }
}

/// Ideal-model branch value of J: (0, 0, ±½).
fn ideal_value(outcome: Outcome) -> Vec3 {
    match outcome {
        Outcome::Up => crate::ideal::IDEAL_DIAG_U,
        Outcome::Dn => crate::ideal::IDEAL_DIAG_D,
    }
}

/// Branch weights and per-branch ⟨J⟩ of one premeasurement, with the
/// unconditioned audit.
struct Shot {
    weights: [f64; 2],
    values: [Vec3; 2],
    deviation: f64,
}

fn shot(sys: &CompositeSystem, a: C64, b: C64, initial_j: Vec3) -> Result<Shot> {
    let final_state = apparatus::premeasure(a, b, sys)?;
    let dec = apparatus::decompose_branches(&final_state, sys)?;
    let mut weights = [0.0; 2];
    let mut values = [[0.0; 3]; 2];
    for br in &dec.branches {
        let idx = br.label.record_value();
        weights[idx] = br.coefficient.norm_sqr();
        values[idx] = sys.mean_j(&br.state)?;
    }
    let mut deviation = 0.0_f64;
    for k in 0..3 {
        let resummed = weights[0] * values[0][k] + weights[1] * values[1][k];
        deviation = deviation.max((resummed - initial_j[k]).abs());
    }
    if deviation > tolerances().operator {
        return Err(Error::InvariantViolation(format!(
            "unconditioned <J> drifted by {deviation:e} during a shot"
        )));
    }
    Ok(Shot {
        weights,
        values,
        deviation,
    })
}

fn run_trajectory(sys: &CompositeSystem, n: usize, a: C64, b: C64, seed: u64, stream: u64) -> Result<SatelliteRun> {
    let initial_state = sys.initial_state(a, b)?;
    let initial_j = sys.mean_j(&initial_state)?;
    // The ideal account starts from the particle's own ⟨S⟩ = u/2.
    let u = spin::bloch_vector(a, b)?.as_array();
    let mut rng = trajectory_rng(seed, stream);
    let mut ideal = [0.0; 3];
    let mut full = [0.0; 3];
    let mut trajectory = Vec::with_capacity(n);
    for step in 0..n {
        let shot = shot(sys, a, b, initial_j)?;
        let outcome = sample(&mut rng, shot.weights[0]);
        let idx = outcome.record_value();
        let ideal_v = ideal_value(outcome);
        for k in 0..3 {
            ideal[k] += ideal_v[k] - 0.5 * u[k];
            full[k] += shot.values[idx][k] - initial_j[k];
        }
        trajectory.push(SatelliteStep {
            step: step + 1,
            outcome,
            branch_weight: shot.weights[idx],
            per_branch_j: shot.values[idx],
            ideal_ledger_j: ideal,
            full_ledger_j: full,
            unconditioned_deviation: shot.deviation,
        });
    }
    Ok(SatelliteRun {
        n_particles: n,
        spin: sys.spin(),
        a,
        b,
        seed,
        stream,
        prng: PRNG_ID,
        initial_j,
        trajectory,
    })
}

fn check_count(name: &'static str, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid(name, "must be at least 1"));
    }
    Ok(())
}

/// N particles, each premeasured by a fresh aligned spin-L apparatus, with
/// Born-sampled outcomes.
pub fn satellite_run(n: usize, spin_l: Spin, a: C64, b: C64, seed: u64) -> Result<SatelliteRun> {
    check_count("n", n)?;
    spin::bloch_vector(a, b)?;
    let sys = apparatus::build_measurement_unitary(spin_l)?;
    run_trajectory(&sys, n, a, b, seed, 0)
}

/// Independent trajectories on streams 0..trajectories, run in parallel and
/// returned in stream order.
pub fn satellite_ensemble(
    n: usize,
    spin_l: Spin,
    a: C64,
    b: C64,
    seed: u64,
    trajectories: usize,
) -> Result<Vec<SatelliteRun>> {
    check_count("n", n)?;
    check_count("trajectories", trajectories)?;
    spin::bloch_vector(a, b)?;
    let sys = apparatus::build_measurement_unitary(spin_l)?;
    (0..trajectories as u64)
        .into_par_iter()
        .map(|stream| run_trajectory(&sys, n, a, b, seed, stream))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BornStats {
    pub trajectories: usize,
    pub expected_up: f64,
    pub observed_up: f64,
    /// Binomial standard deviation of the observed fraction.
    pub sigma: f64,
}

impl BornStats {
    pub fn z_score(&self) -> f64 {
        if self.sigma == 0.0 {
            if self.observed_up == self.expected_up {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.observed_up - self.expected_up) / self.sigma
        }
    }
}

/// Single-shot up-frequency over independent seeded trajectories.
pub fn born_frequency(spin_l: Spin, a: C64, b: C64, seed: u64, trajectories: usize) -> Result<BornStats> {
    check_count("trajectories", trajectories)?;
    let sys = apparatus::build_measurement_unitary(spin_l)?;
    let initial_j = sys.mean_j(&sys.initial_state(a, b)?)?;
    let p = shot(&sys, a, b, initial_j)?.weights[0];
    let ups: usize = (0..trajectories as u64)
        .into_par_iter()
        .map(|stream| usize::from(sample(&mut trajectory_rng(seed, stream), p) == Outcome::Up))
        .sum();
    let n = trajectories as f64;
    Ok(BornStats {
        trajectories,
        expected_up: p,
        observed_up: ups as f64 / n,
        sigma: (p * (1.0 - p) / n).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SourceMode {
    External,
    Internal,
}

impl std::fmt::Display for SourceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SourceMode::External => "external",
            SourceMode::Internal => "internal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StreakConfig {
    pub n: usize,
    /// Apparatus spin (external mode).
    pub spin_l: Spin,
    pub mode: SourceMode,
    /// Source spin (internal mode).
    pub source_k: Spin,
    /// Source starts in |K, K − deficit⟩ (internal mode).
    pub deficit: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StreakStep {
    pub k: usize,
    /// Probability of the postselected pattern so far.
    pub pattern_probability: f64,
    /// ⟨J_z⟩ of the emitted/measured particle register.
    pub register_jz: f64,
    /// ⟨J²⟩ of the particle register.
    pub register_j2: f64,
    /// ⟨J_z⟩ of the source (internal mode, else 0).
    pub source_jz: f64,
    /// Source + register ⟨J_z⟩ (internal mode, else the register value).
    pub combined_jz: f64,
    /// Source + register ⟨J²⟩ (internal mode, else the register value).
    pub combined_j2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreakReport {
    pub config: StreakConfig,
    /// Postselected pattern, one 'u' per particle.
    pub pattern: String,
    pub steps: Vec<StreakStep>,
    pub postselected_j2: Vec<f64>,
    /// Born-sampled pattern and its register ⟨J²⟩ series.
    pub sampled_pattern: String,
    pub sampled_j2: Vec<f64>,
    /// (min, max) of combined ⟨J²⟩ over the postselected steps.
    pub combined_j2_band: (f64, f64),
    /// max |combined ⟨J_z⟩ − initial|.
    pub combined_jz_drift: f64,
}

/// ⟨J²⟩ of a register of independent spin-½ blocks with mean spins `means`.
fn register_j2(means: &[Vec3]) -> f64 {
    let mut total = [0.0; 3];
    let mut self_sq = 0.0;
    for m in means {
        for k in 0..3 {
            total[k] += m[k];
        }
        self_sq += m.iter().map(|x| x * x).sum::<f64>();
    }
    0.75 * means.len() as f64 + total.iter().map(|x| x * x).sum::<f64>() - self_sq
}

/// Per-outcome particle ⟨S⟩ and probability for |+x⟩ against a fresh spin-L apparatus.
fn external_branches(spin_l: Spin) -> Result<[(f64, Vec3); 2]> {
    let sys = apparatus::build_measurement_unitary(spin_l)?;
    let h = c64(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let fin = apparatus::premeasure(h, h, &sys)?;
    let dec = apparatus::decompose_branches(&fin, &sys)?;
    let mut out = [(0.0, [0.0; 3]); 2];
    for br in &dec.branches {
        let rho = subsystem::reduced_density(br.state.dims(), br.state.amplitudes(), &[PARTICLE])?;
        let s = sys.particle_ops();
        let mean = [
            (s.jx.matrix() * &rho).trace().re,
            (s.jy.matrix() * &rho).trace().re,
            (s.jz.matrix() * &rho).trace().re,
        ];
        out[br.label.record_value()] = (br.coefficient.norm_sqr(), mean);
    }
    Ok(out)
}

fn pattern_char(o: Outcome) -> char {
    match o {
        Outcome::Up => 'u',
        Outcome::Dn => 'd',
    }
}

fn streak_external(cfg: &StreakConfig) -> Result<StreakReport> {
    let branches = external_branches(cfg.spin_l)?;
    let (p_up, up_mean) = branches[0];
    let mut steps = Vec::with_capacity(cfg.n);
    let mut means = Vec::with_capacity(cfg.n);
    let mut prob = 1.0;
    for k in 1..=cfg.n {
        means.push(up_mean);
        prob *= p_up;
        let jz: f64 = means.iter().map(|m| m[2]).sum();
        let j2 = register_j2(&means);
        steps.push(StreakStep {
            k,
            pattern_probability: prob,
            register_jz: jz,
            register_j2: j2,
            source_jz: 0.0,
            combined_jz: jz,
            combined_j2: j2,
        });
    }

    let mut rng = trajectory_rng(cfg.seed, 0);
    let mut sampled_pattern = String::with_capacity(cfg.n);
    let mut sampled_means = Vec::with_capacity(cfg.n);
    let mut sampled_j2 = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let o = sample(&mut rng, p_up);
        sampled_pattern.push(pattern_char(o));
        sampled_means.push(branches[o.record_value()].1);
        sampled_j2.push(register_j2(&sampled_means));
    }
    Ok(finish_report(cfg, steps, sampled_pattern, sampled_j2, 0.0))
}

fn finish_report(
    cfg: &StreakConfig,
    steps: Vec<StreakStep>,
    sampled_pattern: String,
    sampled_j2: Vec<f64>,
    initial_combined_jz: f64,
) -> StreakReport {
    let postselected_j2: Vec<f64> = steps.iter().map(|s| s.register_j2).collect();
    let band = steps.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
        (lo.min(s.combined_j2), hi.max(s.combined_j2))
    });
    let drift = match cfg.mode {
        SourceMode::Internal => steps
            .iter()
            .map(|s| (s.combined_jz - initial_combined_jz).abs())
            .fold(0.0, f64::max),
        SourceMode::External => 0.0,
    };
    StreakReport {
        config: *cfg,
        pattern: "u".repeat(cfg.n),
        steps,
        postselected_j2,
        sampled_pattern,
        sampled_j2,
        combined_j2_band: band,
        combined_jz_drift: drift,
    }
}

/// Source |K, K − deficit⟩.
pub fn source_state(k: Spin, deficit: u32) -> Result<StateVector> {
    if deficit > k.twice() {
        return Err(Error::invalid("deficit", format!("{deficit} exceeds 2K = {}", k.twice())));
    }
    StateVector::basis(vec![k.dim()], deficit as usize)
}

/// Source-internal state after some emissions: a pure spin-K′ source whose
/// emitted particles have been measured along z.
struct InternalSource {
    spin: Spin,
    state: StateVector,
    particle_m: Vec<f64>,
}

impl InternalSource {
    fn source_mean(&self) -> Result<Vec3> {
        spin::mean_vector(&self.state, &spin::spin_operators(self.spin)?)
    }

    fn combined(&self) -> Result<(f64, f64, f64, f64)> {
        let js = self.source_mean()?;
        let sum_m: f64 = self.particle_m.iter().sum();
        let k = self.particle_m.len() as f64;
        let sum_sq: f64 = self.particle_m.iter().map(|m| m * m).sum();
        let reg_j2 = 0.75 * k + sum_m * sum_m - sum_sq;
        let combined_j2 = self.spin.casimir() + 2.0 * js[2] * sum_m + reg_j2;
        Ok((js[2], sum_m, reg_j2, combined_j2))
    }

    /// Emits one particle and measures it along z; returns (p_up, state per outcome).
    fn emit_and_measure(&self) -> Result<[(f64, Option<StateVector>); 2]> {
        let emitted = entangled_source_emit(&self.state, self.spin)?;
        let mut out = [(0.0, None), (0.0, None)];
        for o in Outcome::BOTH {
            let (dims, amps) = subsystem::project_out(emitted.dims(), emitted.amplitudes(), 1, o.record_value())?;
            let w = amps.norm_squared();
            let st = if w < tolerances().empty_branch {
                None
            } else {
                Some(StateVector::normalized(dims, amps)?)
            };
            out[o.record_value()] = (w, st);
        }
        Ok(out)
    }

    fn advance(&mut self, outcome: Outcome, state: StateVector) {
        self.spin = Spin::from_twice(self.spin.twice() - 1);
        self.state = state;
        self.particle_m.push(match outcome {
            Outcome::Up => 0.5,
            Outcome::Dn => -0.5,
        });
    }
}

fn streak_internal(cfg: &StreakConfig) -> Result<StreakReport> {
    // All-up is the worst pattern: each emission lowers the source m by ½,
    // and ⟨Jz⟩ must stay positive before the last one.
    let needed = u64::from(cfg.deficit) * 2 + cfg.n as u64;
    if u64::from(cfg.source_k.twice()) < needed {
        return Err(Error::invalid(
            "K",
            format!(
                "source |{k}, {k} - {d}> cannot emit {n} particles with positive orientation (need 2K >= 2*deficit + n)",
                k = cfg.source_k,
                d = cfg.deficit,
                n = cfg.n
            ),
        ));
    }
    let fresh = || -> Result<InternalSource> {
        Ok(InternalSource {
            spin: cfg.source_k,
            state: source_state(cfg.source_k, cfg.deficit)?,
            particle_m: Vec::new(),
        })
    };
    let mut src = fresh()?;
    let (initial_jz, _, _, _) = src.combined()?;
    let mut steps = Vec::with_capacity(cfg.n);
    let mut prob = 1.0;
    for k in 1..=cfg.n {
        let [(w_up, up), _] = src.emit_and_measure()?;
        let up = up.ok_or(Error::EmptyBranch {
            label: "up",
            weight: w_up,
        })?;
        prob *= w_up;
        src.advance(Outcome::Up, up);
        let (source_jz, reg_jz, reg_j2, combined_j2) = src.combined()?;
        let combined_jz = source_jz + reg_jz;
        if (combined_jz - initial_jz).abs() > tolerances().operator {
            return Err(Error::InvariantViolation(format!(
                "combined <J_z> moved from {initial_jz} to {combined_jz} after emission {k}"
            )));
        }
        steps.push(StreakStep {
            k,
            pattern_probability: prob,
            register_jz: reg_jz,
            register_j2: reg_j2,
            source_jz,
            combined_jz,
            combined_j2,
        });
    }

    let mut rng = trajectory_rng(cfg.seed, 0);
    let mut src = fresh()?;
    let mut sampled_pattern = String::with_capacity(cfg.n);
    let mut sampled_j2 = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let branches = src.emit_and_measure()?;
        let o = sample(&mut rng, branches[0].0);
        let (w, st) = branches[o.record_value()].clone();
        let st = st.ok_or(Error::EmptyBranch {
            label: o.label(),
            weight: w,
        })?;
        src.advance(o, st);
        sampled_pattern.push(pattern_char(o));
        sampled_j2.push(src.combined()?.2);
    }
    Ok(finish_report(cfg, steps, sampled_pattern, sampled_j2, initial_jz))
}

/// Postselects the all-up pattern over `n` particles and reports ⟨J²⟩ growth.
///
/// External: fresh |+x⟩ particles, each measured by its own spin-L apparatus.
/// Internal: particles emitted by a spin-K source through the conserving
/// emission map and measured along z.
pub fn lucky_streak_j2(cfg: &StreakConfig) -> Result<StreakReport> {
    check_count("n", cfg.n)?;
    match cfg.mode {
        SourceMode::External => streak_external(cfg),
        SourceMode::Internal => streak_internal(cfg),
    }
}

/// Isometry H_K → H_{K−½} ⊗ H_½ (source slow, particle fast) mapping |K, m⟩
/// to its Clebsch–Gordan expansion.
///
/// Column m is the normalized projection of |K−½, m−½⟩|↑⟩ (or of
/// |K−½, −K+½⟩|↓⟩ for m = −K) onto the j = K manifold.
pub fn emission_isometry(k: Spin) -> Result<DMatrix<C64>> {
    if k.twice() < 1 {
        return Err(Error::invalid("K", "source spin must be at least 1/2"));
    }
    let rest = Spin::from_twice(k.twice() - 1);
    let half = spin::spin_operators(Spin::HALF)?;
    let rest_ops = spin::spin_operators(rest)?;
    // Projector in particle ⊗ source order.
    let (pi_plus, _) = apparatus::projectors_from(&half, &rest_ops)?;
    let dr = rest.dim();
    let dk = k.dim();
    let mut v = DMatrix::<C64>::zeros(2 * dr, dk);
    for i in 0..dk {
        let (p, s) = if i + 1 < dk { (0, i) } else { (1, dr - 1) };
        let col = pi_plus.matrix().column(p * dr + s);
        let norm = col.norm();
        for pp in 0..2 {
            for ss in 0..dr {
                v[(ss * 2 + pp, i)] = col[pp * dr + ss] / c64(norm, 0.0);
            }
        }
    }
    let gram = v.adjoint() * &v;
    let dev = (gram - DMatrix::<C64>::identity(dk, dk))
        .iter()
        .fold(0.0_f64, |m, z| m.max(z.norm()));
    if dev > tolerances().operator {
        return Err(Error::InvariantViolation(format!("emission map is not an isometry ({dev:e})")));
    }
    Ok(v)
}

/// Emits one particle from the spin-K source in subsystem 0.
///
/// Output dims: [2K, 2, rest...], the new particle directly after the source.
pub fn entangled_source_emit(state: &StateVector, k: Spin) -> Result<StateVector> {
    if state.dims().first() != Some(&k.dim()) {
        return Err(Error::DimensionMismatch {
            expected: k.dim(),
            found: state.dims().first().copied().unwrap_or(0),
        });
    }
    let ops = spin::spin_operators(k)?;
    let jz = subsystem::local_expectation(state.dims(), state.amplitudes(), &ops.jz, &[0])?.re;
    if jz <= 0.0 {
        return Err(Error::OrientationUndefined(jz));
    }
    let v = emission_isometry(k)?;
    let rest = Spin::from_twice(k.twice() - 1);
    let (dims, amps) = subsystem::apply_isometry(state.dims(), state.amplitudes(), &v, 0, &[rest.dim(), 2])?;
    let out = StateVector::normalized(dims, amps)?;

    let rest_ops = spin::spin_operators(rest)?;
    let after = subsystem::local_expectation(out.dims(), out.amplitudes(), &rest_ops.jz, &[0])?.re
        + subsystem::local_expectation(out.dims(), out.amplitudes(), &spin::spin_operators(Spin::HALF)?.jz, &[1])?
            .re;
    if (after - jz).abs() > tolerances().operator {
        return Err(Error::InvariantViolation(format!(
            "emission changed source + particle <J_z> from {jz} to {after}"
        )));
    }
    Ok(out)
}

/// 1 − ⟨↑|ρ|↑⟩ for the particle emitted by |K, K − deficit⟩.
pub fn emission_infidelity(k: Spin, deficit: u32) -> Result<f64> {
    let emitted = entangled_source_emit(&source_state(k, deficit)?, k)?;
    let rho = subsystem::reduced_density(emitted.dims(), emitted.amplitudes(), &[1])?;
    Ok(1.0 - rho[(0, 0)].re)
}

/// Least-squares slope of ln(y) against ln(x).
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::invalid("points", "need at least two strictly positive points"));
    }
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// (K, infidelity) over source spins, computed in parallel.
pub fn infidelity_sweep(ks: &[Spin], deficit: u32) -> Result<Vec<(Spin, f64)>> {
    ks.par_iter()
        .map(|&k| Ok((k, emission_infidelity(k, deficit)?)))
        .collect()
}

/// Purity of the reduced state of the subsystems `keep`.
pub fn reduced_purity(state: &StateVector, keep: &[usize]) -> Result<f64> {
    let rho = subsystem::reduced_density(state.dims(), state.amplitudes(), keep)?;
    Ok(kernel::purity(&rho))
}

/// ⟨J_z⟩ of subsystem `sub` of spin `s`.
pub fn local_jz(state: &StateVector, s: Spin, sub: usize) -> Result<f64> {
    let ops = spin::spin_operators(s)?;
    Ok(subsystem::local_expectation(state.dims(), state.amplitudes(), &ops.jz, &[sub])?.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{Operator, ZERO};
    use std::f64::consts::FRAC_1_SQRT_2;

    fn h() -> C64 {
        c64(FRAC_1_SQRT_2, 0.0)
    }

    #[test]
    fn ideal_ledger_drifts_by_minus_half_per_particle() {
        let run = satellite_run(10, Spin::integer(4), h(), h(), 3).unwrap();
        assert_eq!(run.final_step().ideal_ledger_j[0], -5.0);
        assert!(run.trajectory.iter().all(|s| s.unconditioned_deviation <= 1e-10));
    }

    #[test]
    fn satellite_is_deterministic_and_seed_sensitive() {
        let a = satellite_run(40, Spin::integer(2), h(), h(), 11).unwrap();
        let b = satellite_run(40, Spin::integer(2), h(), h(), 11).unwrap();
        assert_eq!(a, b);
        let c = satellite_run(40, Spin::integer(2), h(), h(), 12).unwrap();
        let pattern = |r: &SatelliteRun| r.trajectory.iter().map(|s| s.outcome).collect::<Vec<_>>();
        assert_ne!(pattern(&a), pattern(&c));
    }

    #[test]
    fn full_ledger_matches_branch_values() {
        let run = satellite_run(5, Spin::integer(1), h(), h(), 1).unwrap();
        let mut acc = [0.0; 3];
        for s in &run.trajectory {
            for k in 0..3 {
                acc[k] += s.per_branch_j[k] - run.initial_j[k];
            }
        }
        for k in 0..3 {
            assert!((acc[k] - run.final_step().full_ledger_j[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn ensemble_is_ordered_by_stream() {
        let runs = satellite_ensemble(3, Spin::integer(1), h(), h(), 5, 6).unwrap();
        for (i, r) in runs.iter().enumerate() {
            assert_eq!(r.stream, i as u64);
        }
        let again = satellite_ensemble(3, Spin::integer(1), h(), h(), 5, 6).unwrap();
        assert_eq!(runs, again);
        assert!(satellite_ensemble(3, Spin::integer(1), h(), h(), 5, 0).is_err());
    }

    #[test]
    fn born_frequency_is_within_three_sigma() {
        let st = born_frequency(Spin::integer(8), h(), h(), 2024, 10_000).unwrap();
        // p_up = ½ + ½ · 1/(2L+1)
        assert!((st.expected_up - (0.5 + 0.5 / 17.0)).abs() < 1e-12);
        assert!(st.z_score().abs() < 3.0, "{st:?}");
    }

    /// Oracle: every |K, m⟩ column holds √((K+m)/2K) on |K−½, m−½⟩|↑⟩ and
    /// √((K−m)/2K) on |K−½, m+½⟩|↓⟩.
    #[test]
    fn emission_isometry_matches_clebsch_gordan() {
        for twice in [1u32, 2, 5, 8] {
            let k = Spin::from_twice(twice);
            let kv = k.value();
            let v = emission_isometry(k).unwrap();
            let dr = twice as usize;
            for i in 0..k.dim() {
                let m = k.m_of(i);
                let mut want = DMatrix::<C64>::zeros(2 * dr, 1);
                if i < dr {
                    want[(i * 2, 0)] = c64(((kv + m) / (2.0 * kv)).sqrt(), 0.0);
                }
                if i > 0 {
                    want[((i - 1) * 2 + 1, 0)] = c64(((kv - m) / (2.0 * kv)).sqrt(), 0.0);
                }
                let got = v.column(i);
                let dev = (got - want.column(0)).iter().fold(0.0_f64, |a, z| a.max(z.norm()));
                assert!(dev < 1e-12, "K={k} m={m}: {dev}");
            }
        }
    }

    #[test]
    fn emission_intertwines_all_components() {
        let k = Spin::integer(3);
        let v = emission_isometry(k).unwrap();
        let big = spin::spin_operators(k).unwrap();
        let rest = spin::spin_operators(Spin::from_twice(5)).unwrap();
        let half = spin::spin_operators(Spin::HALF).unwrap();
        for (c, (r, s)) in big.cartesian().iter().zip(rest.cartesian().iter().zip(half.cartesian())) {
            let j_out = kernel::kron(r, &Operator::identity(2))
                .unwrap()
                .add(&kernel::kron(&Operator::identity(6), s).unwrap())
                .unwrap();
            let lhs = j_out.matrix() * &v;
            let rhs = &v * c.matrix();
            let dev = (lhs - rhs).iter().fold(0.0_f64, |a, z| a.max(z.norm()));
            assert!(dev < 1e-12);
        }
    }

    #[test]
    fn infidelity_is_one_over_2k() {
        for twice in [8u32, 16, 32, 64] {
            let k = Spin::from_twice(twice);
            let inf = emission_infidelity(k, 1).unwrap();
            assert!((inf - 1.0 / (2.0 * k.value())).abs() < 1e-12);
        }
        assert!((emission_infidelity(Spin::integer(8), 1).unwrap() - 0.0625).abs() < 1e-12);
        let sweep = infidelity_sweep(&[4, 8, 16, 32].map(Spin::integer), 1).unwrap();
        let pts: Vec<_> = sweep.iter().map(|(k, f)| (k.value(), *f)).collect();
        assert!((loglog_slope(&pts).unwrap() + 1.0).abs() < 1e-10);
    }

    #[test]
    fn two_emissions_entangle_the_pair_with_the_source() {
        let k = Spin::integer(4);
        let s0 = source_state(k, 1).unwrap();
        let s1 = entangled_source_emit(&s0, k).unwrap();
        let s2 = entangled_source_emit(&s1, Spin::from_twice(7)).unwrap();
        assert_eq!(s2.dims(), &[7, 2, 2]);
        assert!(reduced_purity(&s2, &[1, 2]).unwrap() < 1.0 - 1e-6);
        let before = local_jz(&s0, k, 0).unwrap();
        let after = local_jz(&s2, Spin::integer(3), 0).unwrap()
            + local_jz(&s2, Spin::HALF, 1).unwrap()
            + local_jz(&s2, Spin::HALF, 2).unwrap();
        assert!((before - after).abs() < 1e-10);
    }

    #[test]
    fn emission_requires_positive_orientation() {
        let k = Spin::integer(2);
        let down = StateVector::basis(vec![5], 4).unwrap();
        assert!(matches!(entangled_source_emit(&down, k), Err(Error::OrientationUndefined(_))));
        let wrong = StateVector::basis(vec![3], 0).unwrap();
        assert!(entangled_source_emit(&wrong, k).is_err());
    }

    fn streak(mode: SourceMode, n: usize, k: Spin) -> StreakReport {
        lucky_streak_j2(&StreakConfig {
            n,
            spin_l: Spin::integer(8),
            mode,
            source_k: k,
            deficit: 1,
            seed: 9,
        })
        .unwrap()
    }

    #[test]
    fn internal_streak_source_pays_for_emitted_spin() {
        let r = streak(SourceMode::Internal, 2, Spin::integer(4));
        let first = source_state(Spin::integer(4), 1).unwrap();
        let j0 = local_jz(&first, Spin::integer(4), 0).unwrap();
        assert!((j0 - r.steps[1].source_jz - 1.0).abs() < 1e-12);
        assert!(r.combined_jz_drift <= 1e-10);
        assert_eq!(r.pattern, "uu");
    }

    #[test]
    fn internal_streak_rejects_small_source() {
        let err = lucky_streak_j2(&StreakConfig {
            n: 9,
            spin_l: Spin::integer(1),
            mode: SourceMode::Internal,
            source_k: Spin::integer(4),
            deficit: 1,
            seed: 0,
        });
        assert!(err.is_err());
    }

    /// Oracle for the internal combined ⟨J²⟩: keep every particle as a
    /// subsystem, project onto |↑⟩, and evaluate J² on the full space.
    #[test]
    fn internal_combined_j2_matches_explicit_tensor() {
        let k0 = Spin::integer(2);
        let mut state = source_state(k0, 1).unwrap();
        let mut k = k0;
        for _ in 0..2 {
            state = entangled_source_emit(&state, k).unwrap();
            k = Spin::from_twice(k.twice() - 1);
            let (dims, amps) = subsystem::project_out(state.dims(), state.amplitudes(), 1, 0).unwrap();
            let (dims, amps) = subsystem::embed(&dims, &amps, 1, 2, 0).unwrap();
            state = StateVector::normalized(dims, amps).unwrap();
        }
        let src = spin::spin_operators(k).unwrap();
        let half = spin::spin_operators(Spin::HALF).unwrap();
        let id2 = Operator::identity(2);
        let ids = Operator::identity(k.dim());
        let mut j2 = 0.0;
        for c in 0..3 {
            let jc = kernel::kron_all(&[src.cartesian()[c], &id2, &id2])
                .unwrap()
                .add(&kernel::kron_all(&[&ids, half.cartesian()[c], &id2]).unwrap())
                .unwrap()
                .add(&kernel::kron_all(&[&ids, &id2, half.cartesian()[c]]).unwrap())
                .unwrap();
            let sq = jc.compose(&jc).unwrap();
            j2 += kernel::expectation_real(&state, &sq).unwrap();
        }
        let r = streak(SourceMode::Internal, 2, k0);
        assert!((r.steps[1].combined_j2 - j2).abs() < 1e-10, "{} vs {j2}", r.steps[1].combined_j2);
    }

    /// Oracle: three particle ⊗ apparatus up-branches at L = 1 as one explicit
    /// tensor product, J² of the particle spins evaluated directly.
    #[test]
    fn external_register_j2_matches_explicit_tensor() {
        let l = Spin::integer(1);
        let sys = apparatus::build_measurement_unitary(l).unwrap();
        let fin = apparatus::premeasure(h(), h(), &sys).unwrap();
        let dec = apparatus::decompose_branches(&fin, &sys).unwrap();
        let up = dec.branch(Outcome::Up).unwrap().state.clone();
        let three = up.tensor(&up).unwrap().tensor(&up).unwrap();
        let half = spin::spin_operators(Spin::HALF).unwrap();
        let id6 = Operator::identity(6);
        let ida = Operator::identity(3);
        let mut j2 = 0.0;
        for c in 0..3 {
            let s_local = kernel::kron(half.cartesian()[c], &ida).unwrap();
            let mut jc = Operator::new(DMatrix::zeros(216, 216)).unwrap();
            for slot in 0..3 {
                let mut f: Vec<&Operator> = vec![&id6, &id6, &id6];
                f[slot] = &s_local;
                jc = jc.add(&kernel::kron_all(&f).unwrap()).unwrap();
            }
            j2 += kernel::expectation_real(&three, &jc.compose(&jc).unwrap()).unwrap();
        }
        let r = lucky_streak_j2(&StreakConfig {
            n: 3,
            spin_l: l,
            mode: SourceMode::External,
            source_k: Spin::integer(1),
            deficit: 1,
            seed: 0,
        })
        .unwrap();
        assert!((r.steps[2].register_j2 - j2).abs() < 1e-10);
    }

    #[test]
    fn external_streak_of_six_grows_to_about_twelve() {
        let r = streak(SourceMode::External, 6, Spin::integer(8));
        let last = r.steps[5];
        assert!((last.register_jz - 3.0).abs() < 0.1, "{}", last.register_jz);
        assert!((last.register_j2 - 12.0).abs() < 0.6, "{}", last.register_j2);
        assert!(r.postselected_j2.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(r.sampled_j2.len(), 6);
        assert!(r.sampled_j2.iter().all(|x| x.is_finite() && *x >= 0.0));
    }

    #[test]
    fn source_state_validates_deficit() {
        assert!(source_state(Spin::HALF, 2).is_err());
        let s = source_state(Spin::integer(1), 1).unwrap();
        assert_eq!(s.amplitudes()[1], c64(1.0, 0.0));
        assert_eq!(s.amplitudes()[0], ZERO);
    }
}
