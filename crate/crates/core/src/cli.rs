//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 a numerical
//! invariant failed during the run.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::apparatus::{self, ApparatusConfig, CompositeSystem};
use crate::decoherence;
use crate::experiments::{self, SourceMode, StreakConfig};
use crate::ideal::{self, ViolationReport};
use crate::kernel::{c64, C64};
use crate::numerics::tolerances;
use crate::output::{Cell, Document, Format, Metadata, Table};
use crate::spin::{self, Spin};
use crate::{Error, Result};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "CONSLAB_OUTPUT_DIR";

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Parser)]
#[command(name = "conslab", version, about = "Conservation-law bookkeeping for quantum measurement models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Forced cross terms of the ideal measurement and violation classification.
    Ideal(IdealArgs),
    /// Conserving apparatus model: error amplitudes, matching equations, bracket scaling.
    Measure(MeasureArgs),
    /// Thermal angular-momentum spread and orientation uncertainty (SI units).
    Thermal(ThermalArgs),
    /// Suppression of macroscopic cross terms by record amplification.
    Decohere(DecohereArgs),
    /// Satellite ledger: a stream of particles measured by fresh apparatuses.
    Satellite(SatelliteArgs),
    /// Postselected all-up streaks and the growth of the register's J².
    Streak(StreakArgs),
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Output file (default: $CONSLAB_OUTPUT_DIR/conslab-<command>.<ext>, else stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for parallel sweeps (output does not depend on it).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct SpinorArgs {
    /// Re(a), amplitude of |up>.
    #[arg(long = "a-re", default_value_t = FRAC_1_SQRT_2, allow_negative_numbers = true)]
    a_re: f64,
    /// Im(a).
    #[arg(long = "a-im", default_value_t = 0.0, allow_negative_numbers = true)]
    a_im: f64,
    /// Re(b), amplitude of |down>.
    #[arg(long = "b-re", default_value_t = FRAC_1_SQRT_2, allow_negative_numbers = true)]
    b_re: f64,
    /// Im(b).
    #[arg(long = "b-im", default_value_t = 0.0, allow_negative_numbers = true)]
    b_im: f64,
}

impl SpinorArgs {
    fn amplitudes(&self) -> Result<(C64, C64)> {
        let a = c64(self.a_re, self.a_im);
        let b = c64(self.b_re, self.b_im);
        if let Err(e) = spin::bloch_vector(a, b) {
            return Err(Error::invalid(
                "--a-re/--a-im/--b-re/--b-im",
                format!("spinor rejected: {e}"),
            ));
        }
        Ok((a, b))
    }

    fn echo(&self, cfg: &mut Vec<String>) {
        push(cfg, "--a-re", self.a_re);
        push(cfg, "--a-im", self.a_im);
        push(cfg, "--b-re", self.b_re);
        push(cfg, "--b-im", self.b_im);
    }
}

fn parse_spin(s: &str) -> std::result::Result<Spin, String> {
    let value = match s.split_once('/') {
        Some((num, "2")) => num.trim().parse::<u32>().map(|n| f64::from(n) / 2.0).map_err(|e| e.to_string())?,
        Some(_) => return Err(format!("`{s}` is not a half-integer")),
        None => s.trim().parse::<f64>().map_err(|e| e.to_string())?,
    };
    Spin::new(value).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
struct IdealArgs {
    #[command(flatten)]
    spinor: SpinorArgs,
    /// Apparatus spin used for the apparatus-model comparison (e.g. 4 or 7/2).
    #[arg(long = "L", default_value = "4", value_parser = parse_spin)]
    l: Spin,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct MeasureArgs {
    /// Apparatus spin L (integer or half-integer, e.g. 1 or 3/2).
    #[arg(long = "L", default_value = "1", value_parser = parse_spin)]
    l: Spin,
    /// Polar tilt of the apparatus ready state away from +z, radians.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    tilt: f64,
    /// Largest integer L in the bracket-scaling table (default: L rounded down, at least 1).
    #[arg(long = "l-max")]
    l_max: Option<u32>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct ThermalArgs {
    /// Moment of inertia, kg m^2.
    #[arg(long = "I", default_value_t = 0.01)]
    i: f64,
    /// Temperature, K.
    #[arg(long = "T", default_value_t = 300.0)]
    t: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct DecohereArgs {
    #[arg(long = "L", default_value = "2", value_parser = parse_spin)]
    l: Spin,
    /// Per-qubit overlap o of the environment states, in [0, 1).
    #[arg(long, default_value_t = 0.8)]
    overlap: f64,
    /// Largest environment size.
    #[arg(long = "n-max", default_value_t = 10)]
    n_max: usize,
    #[command(flatten)]
    spinor: SpinorArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct SatelliteArgs {
    /// Particles per trajectory.
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long = "L", default_value = "4", value_parser = parse_spin)]
    l: Spin,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Independent trajectories (PRNG streams 0..trajectories).
    #[arg(long, default_value_t = 1)]
    trajectories: usize,
    #[command(flatten)]
    spinor: SpinorArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct StreakArgs {
    /// Particles in the streak.
    #[arg(long, default_value_t = 6)]
    n: usize,
    /// Apparatus spin (external mode).
    #[arg(long = "L", default_value = "8", value_parser = parse_spin)]
    l: Spin,
    #[arg(long, value_enum, default_value_t = SourceMode::External)]
    mode: SourceMode,
    /// Source spin (internal mode).
    #[arg(long = "K", default_value = "16", value_parser = parse_spin)]
    k: Spin,
    /// Source starts in |K, K - deficit> (internal mode).
    #[arg(long, default_value_t = 1)]
    deficit: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

fn push(cfg: &mut Vec<String>, flag: &str, value: impl std::fmt::Display) {
    cfg.push(flag.to_owned());
    cfg.push(value.to_string());
}

fn finish_config(mut cfg: Vec<String>, out: &OutputArgs) -> Vec<String> {
    push(&mut cfg, "--format", out.format.extension());
    cfg
}

fn f(x: f64) -> Cell {
    Cell::from(x)
}

const AXES: [&str; 3] = ["x", "y", "z"];

fn ideal_command(args: &IdealArgs) -> Result<Document> {
    let (a, b) = args.spinor.amplitudes()?;
    let mut cfg = vec!["ideal".to_owned()];
    args.spinor.echo(&mut cfg);
    push(&mut cfg, "--L", args.l);
    let mut meta = Metadata::new("ideal", finish_config(cfg, &args.output));

    let brackets = ideal::ideal_forced_cross_terms(a, b)?;
    let residuals = ideal::component_residuals(a, b, &brackets)?;
    let mut forced = Table::new(
        "forced_brackets",
        &["component", "cross_re", "cross_im", "diag_u", "diag_d", "residual"],
    );
    for k in 0..3 {
        forced.push(vec![
            Cell::from(AXES[k]),
            f(brackets.cross[k].re),
            f(brackets.cross[k].im),
            f(brackets.diag_u[k]),
            f(brackets.diag_d[k]),
            f(residuals[k]),
        ]);
    }

    let mut class = Table::new(
        "classification",
        &[
            "model",
            "component",
            "kind",
            "initial",
            "branch_average",
            "cross_contribution_re",
            "cross_contribution_im",
        ],
    );
    let mut add = |model: &str, k: usize, r: &ViolationReport| {
        class.push(vec![
            Cell::from(model),
            Cell::from(AXES[k]),
            Cell::from(r.kind.to_string()),
            f(r.conserved_initial[k]),
            f(r.weighted_branch_average[k]),
            f(r.required_cross_term_contribution[k].re),
            f(r.required_cross_term_contribution[k].im),
        ]);
    };
    for k in 0..3 {
        let (init, br, cross) = ideal::ideal_model_bookkeeping(a, b, &brackets, k)?;
        let rep = ideal::classify_violation(init, &br, cross, tolerances().cross_term)?;
        add("ideal", k, &rep);
    }
    let sys = apparatus::build_measurement_unitary(args.l)?;
    let (init, br, cross) = apparatus::apparatus_bookkeeping(a, b, &sys)?;
    let rep = ideal::classify_violation(init, &br, cross, tolerances().cross_term)?;
    for k in 0..3 {
        add("apparatus", k, &rep);
    }
    meta.notes.push(
        "cross_contribution is a*b<u|J|d> (ideal) or the record-sector bracket (apparatus); initial = branch_average + 2 Re(cross_contribution)"
            .to_owned(),
    );
    Ok(Document {
        metadata: meta,
        tables: vec![forced, class],
    })
}

fn measure_command(args: &MeasureArgs) -> Result<Document> {
    let mut cfg = vec!["measure".to_owned()];
    push(&mut cfg, "--L", args.l);
    push(&mut cfg, "--tilt", args.tilt);
    let l_max = args.l_max.unwrap_or_else(|| (args.l.twice() / 2).max(1));
    if l_max == 0 {
        return Err(Error::invalid("--l-max", "must be at least 1"));
    }
    push(&mut cfg, "--l-max", l_max);
    let mut meta = Metadata::new("measure", finish_config(cfg, &args.output));

    let sys = CompositeSystem::new(ApparatusConfig {
        spin: args.l,
        tilt: args.tilt,
    })?;
    let amp = apparatus::extract_error_amplitudes(&sys)?;
    let report = apparatus::verify_matching_equations(&sys)?;
    if report.max_residual() > tolerances().operator {
        return Err(Error::InvariantViolation(format!(
            "matching equations violated: max residual {:e}",
            report.max_residual()
        )));
    }
    let defect = sys.conservation_defect()?;

    let lv = args.l.value();
    let mut amps = Table::new(
        "amplitudes",
        &["L", "tilt", "C", "D", "E", "F", "F_closed_form", "flip_probability"],
    );
    amps.push(vec![
        Cell::from(args.l.to_string()),
        f(args.tilt),
        f(amp.c),
        f(amp.d),
        f(amp.e),
        f(amp.f),
        f(1.0 / (2.0 * lv + 1.0).sqrt()),
        f(amp.e * amp.e),
    ]);
    if args.tilt != 0.0 {
        meta.notes.push("F_closed_form applies to the aligned apparatus only".to_owned());
    }

    let mut matching = Table::new(
        "matching",
        &[
            "component",
            "lhs_re",
            "lhs_im",
            "residual_re",
            "residual_im",
            "u_bracket_re",
            "u_bracket_im",
            "d_bracket_re",
            "d_bracket_im",
            "commutator_norm",
        ],
    );
    for k in 0..3 {
        matching.push(vec![
            Cell::from(AXES[k]),
            f(report.lhs[k].re),
            f(report.lhs[k].im),
            f(report.residuals[k].re),
            f(report.residuals[k].im),
            f(report.u_bracket[k].re),
            f(report.u_bracket[k].im),
            f(report.d_bracket[k].re),
            f(report.d_bracket[k].im),
            f(defect[k]),
        ]);
    }

    let spins: Vec<Spin> = (1..=l_max).map(Spin::integer).collect();
    let rows = apparatus::bracket_magnitude_scaling(&spins)?;
    let mut scaling = Table::new(
        "scaling",
        &[
            "L",
            "bracket",
            "delta_L",
            "inv_delta_theta",
            "bracket_over_delta_L",
            "bracket_over_inv_delta_theta",
            "F",
        ],
    );
    for r in rows {
        let l = r.spin.value();
        scaling.push(vec![
            Cell::from(r.spin.to_string()),
            f(r.bracket),
            f(r.delta_l),
            f(r.inv_delta_theta),
            f(r.bracket / r.delta_l),
            f(r.bracket / r.inv_delta_theta),
            f(1.0 / (2.0 * l + 1.0).sqrt()),
        ]);
    }
    Ok(Document {
        metadata: meta,
        tables: vec![amps, matching, scaling],
    })
}

fn thermal_command(args: &ThermalArgs) -> Result<Document> {
    let mut cfg = vec!["thermal".to_owned()];
    push(&mut cfg, "--I", args.i);
    push(&mut cfg, "--T", args.t);
    let mut meta = Metadata::new("thermal", finish_config(cfg, &args.output));
    let t = apparatus::thermal_orientation_uncertainty(args.i, args.t)?;
    let mut table = Table::new(
        "thermal",
        &[
            "I",
            "T",
            "k",
            "hbar",
            "IkT",
            "delta_L",
            "delta_theta",
            "quoted_delta_theta",
            "quoted_over_computed",
        ],
    );
    table.push(vec![
        f(t.moment_of_inertia),
        f(t.temperature),
        f(t.boltzmann_k),
        f(t.hbar),
        f(t.ikt),
        f(t.delta_l),
        f(t.delta_theta),
        f(apparatus::QUOTED_DELTA_THETA),
        f(apparatus::QUOTED_DELTA_THETA / t.delta_theta),
    ]);
    meta.notes.push(format!(
        "the commonly quoted delta_theta of 1e-22 rad is an order-of-magnitude rounding of the computed {:.3e} rad",
        t.delta_theta
    ));
    Ok(Document {
        metadata: meta,
        tables: vec![table],
    })
}

fn decohere_command(args: &DecohereArgs) -> Result<Document> {
    let (a, b) = args.spinor.amplitudes()?;
    let mut cfg = vec!["decohere".to_owned()];
    push(&mut cfg, "--L", args.l);
    push(&mut cfg, "--overlap", args.overlap);
    push(&mut cfg, "--n-max", args.n_max);
    args.spinor.echo(&mut cfg);
    let mut meta = Metadata::new("decohere", finish_config(cfg, &args.output));
    let sys = apparatus::build_measurement_unitary(args.l)?;
    let op = decoherence::particle_sx(&sys)?;
    let rows = decoherence::decay_study(&sys, a, b, &op, args.overlap, args.n_max)?;
    let mut table = Table::new("decay", &["n", "bound", "measured", "baseline", "ratio", "deviation"]);
    for r in &rows {
        if r.deviation > tolerances().operator {
            return Err(Error::InvariantViolation(format!(
                "cross term at n = {} deviates from the overlap bound by {:e}",
                r.n, r.deviation
            )));
        }
        table.push(vec![
            Cell::from(r.n),
            f(r.bound),
            f(r.measured),
            f(r.baseline),
            f(r.measured / r.baseline),
            f(r.deviation),
        ]);
    }
    meta.notes.push(
        "measured = |<up|S_x (x) 1|dn>| between record sectors with the record stripped; components of total J give exactly 0"
            .to_owned(),
    );
    Ok(Document {
        metadata: meta,
        tables: vec![table],
    })
}

fn satellite_command(args: &SatelliteArgs) -> Result<Document> {
    let (a, b) = args.spinor.amplitudes()?;
    let mut cfg = vec!["satellite".to_owned()];
    push(&mut cfg, "--n", args.n);
    push(&mut cfg, "--L", args.l);
    push(&mut cfg, "--seed", args.seed);
    push(&mut cfg, "--trajectories", args.trajectories);
    args.spinor.echo(&mut cfg);
    let mut meta = Metadata::new("satellite", finish_config(cfg, &args.output));
    meta.seed = Some(args.seed);
    meta.prng = Some(experiments::PRNG_ID);
    meta.notes.push(experiments::FRESH_APPARATUS_NOTE.to_owned());
    meta.notes.push(
        "ideal ledger: each branch keeps only (0,0,+-1/2), so the incoming transverse spin is booked as lost".to_owned(),
    );

    let runs = experiments::satellite_ensemble(args.n, args.l, a, b, args.seed, args.trajectories)?;
    let mut steps = Table::new(
        "trajectory",
        &[
            "trajectory",
            "step",
            "outcome",
            "branch_weight",
            "branch_Jx",
            "branch_Jy",
            "branch_Jz",
            "ideal_ledger_Jx",
            "ideal_ledger_Jy",
            "ideal_ledger_Jz",
            "full_ledger_Jx",
            "full_ledger_Jy",
            "full_ledger_Jz",
            "unconditioned_deviation",
        ],
    );
    let mut summary = Table::new(
        "summary",
        &["trajectory", "up_count", "ideal_drift_x", "full_drift_x", "max_unconditioned_deviation"],
    );
    for run in &runs {
        let mut worst = 0.0_f64;
        for s in &run.trajectory {
            worst = worst.max(s.unconditioned_deviation);
            let mut row = vec![
                Cell::from(run.stream as usize),
                Cell::from(s.step),
                Cell::from(s.outcome.label()),
                f(s.branch_weight),
            ];
            row.extend(s.per_branch_j.iter().map(|&x| f(x)));
            row.extend(s.ideal_ledger_j.iter().map(|&x| f(x)));
            row.extend(s.full_ledger_j.iter().map(|&x| f(x)));
            row.push(f(s.unconditioned_deviation));
            steps.push(row);
        }
        let last = run.final_step();
        summary.push(vec![
            Cell::from(run.stream as usize),
            Cell::from(run.up_count()),
            f(last.ideal_ledger_j[0]),
            f(last.full_ledger_j[0]),
            f(worst),
        ]);
    }
    Ok(Document {
        metadata: meta,
        tables: vec![summary, steps],
    })
}

fn streak_command(args: &StreakArgs) -> Result<Document> {
    let mut cfg = vec!["streak".to_owned()];
    push(&mut cfg, "--n", args.n);
    push(&mut cfg, "--L", args.l);
    push(&mut cfg, "--mode", args.mode);
    push(&mut cfg, "--K", args.k);
    push(&mut cfg, "--deficit", args.deficit);
    push(&mut cfg, "--seed", args.seed);
    let mut meta = Metadata::new("streak", finish_config(cfg, &args.output));
    meta.seed = Some(args.seed);
    meta.prng = Some(experiments::PRNG_ID);
    match args.mode {
        SourceMode::External => meta.notes.push(experiments::FRESH_APPARATUS_NOTE.to_owned()),
        SourceMode::Internal => meta.notes.push(
            "internal source starts in |K, K - deficit>; emitted particles are measured projectively along z".to_owned(),
        ),
    }
    let report = experiments::lucky_streak_j2(&StreakConfig {
        n: args.n,
        spin_l: args.l,
        mode: args.mode,
        source_k: args.k,
        deficit: args.deficit,
        seed: args.seed,
    })?;
    let mut post = Table::new(
        "postselected",
        &[
            "k",
            "pattern_probability",
            "register_Jz",
            "register_J2",
            "source_Jz",
            "combined_Jz",
            "combined_J2",
        ],
    );
    for s in &report.steps {
        post.push(vec![
            Cell::from(s.k),
            f(s.pattern_probability),
            f(s.register_jz),
            f(s.register_j2),
            f(s.source_jz),
            f(s.combined_jz),
            f(s.combined_j2),
        ]);
    }
    let mut sampled = Table::new("sampled", &["k", "outcome", "register_J2"]);
    for (i, (c, j2)) in report.sampled_pattern.chars().zip(&report.sampled_j2).enumerate() {
        sampled.push(vec![Cell::from(i + 1), Cell::from(c.to_string()), f(*j2)]);
    }
    let mut summary = Table::new(
        "summary",
        &["mode", "pattern", "sampled_pattern", "combined_J2_min", "combined_J2_max", "combined_Jz_drift"],
    );
    summary.push(vec![
        Cell::from(report.config.mode.to_string()),
        Cell::from(report.pattern.clone()),
        Cell::from(report.sampled_pattern.clone()),
        f(report.combined_j2_band.0),
        f(report.combined_j2_band.1),
        f(report.combined_jz_drift),
    ]);
    Ok(Document {
        metadata: meta,
        tables: vec![summary, post, sampled],
    })
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ideal(_) => "ideal",
            Command::Measure(_) => "measure",
            Command::Thermal(_) => "thermal",
            Command::Decohere(_) => "decohere",
            Command::Satellite(_) => "satellite",
            Command::Streak(_) => "streak",
        }
    }

    fn output(&self) -> &OutputArgs {
        match self {
            Command::Ideal(a) => &a.output,
            Command::Measure(a) => &a.output,
            Command::Thermal(a) => &a.output,
            Command::Decohere(a) => &a.output,
            Command::Satellite(a) => &a.output,
            Command::Streak(a) => &a.output,
        }
    }

    fn execute(&self) -> Result<Document> {
        match self {
            Command::Ideal(a) => ideal_command(a),
            Command::Measure(a) => measure_command(a),
            Command::Thermal(a) => thermal_command(a),
            Command::Decohere(a) => decohere_command(a),
            Command::Satellite(a) => satellite_command(a),
            Command::Streak(a) => streak_command(a),
        }
    }
}

fn execute_with_jobs(cmd: &Command) -> Result<Document> {
    match cmd.output().jobs {
        None => cmd.execute(),
        Some(0) => Err(Error::invalid("--jobs", "must be at least 1")),
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build()
                .map_err(|e| Error::invalid("--jobs", e.to_string()))?;
            pool.install(|| cmd.execute())
        }
    }
}

/// 2 for a broken numerical invariant, 1 for anything the user can fix.
fn exit_code(e: &Error) -> i32 {
    if e.is_invariant_failure() {
        2
    } else {
        1
    }
}

/// Runs the CLI on `argv` (including the program name), writing results to
/// `stdout` or to a file, diagnostics to `stderr`. Returns the exit code.
pub fn run_with<I, T>(argv: I, output_dir: Option<PathBuf>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                1
            } else {
                let _ = write!(stdout, "{text}");
                0
            };
        }
    };
    let doc = match execute_with_jobs(&cli.command) {
        Ok(doc) => doc,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return exit_code(&e);
        }
    };
    let out = cli.command.output();
    let target = out.out.clone().or_else(|| {
        output_dir.map(|d| d.join(format!("conslab-{}.{}", cli.command.name(), out.format.extension())))
    });
    let rendered = doc.render(out.format);
    match target {
        Some(path) => {
            if let Err(e) = std::fs::write(&path, rendered) {
                let _ = writeln!(stderr, "error: cannot write {}: {e}", path.display());
                return 1;
            }
        }
        None => {
            if let Err(e) = stdout.write_all(rendered.as_bytes()) {
                let _ = writeln!(stderr, "error: cannot write output: {e}");
                return 1;
            }
        }
    }
    0
}

/// Entry point used by the binary: process stdio and `CONSLAB_OUTPUT_DIR`.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let dir = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()).map(PathBuf::from);
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, dir, &mut stdout.lock(), &mut stderr.lock())
}
