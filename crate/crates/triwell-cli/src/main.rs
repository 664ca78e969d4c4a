//! Command line front end for the triple-well simulation library.
//!
//! Every subcommand writes plain CSV data plus two sidecars into the output
//! directory: `config.json`, the resolved run description that `--config`
//! replays bit-identically on the same build, and `metadata.json` with
//! provenance (build ref, timestamps, timings, run statistics).

mod config;
mod exec;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use triwell::presets::{self, EvolveMode, PresetRun};
use triwell::{Error, Result};

use config::{parse_fock, parse_grid, parse_pair, CommandOptions, GridCfg, RunConfig};

const DEFAULT_OMEGA: f64 = -1.0;
const DEFAULT_N: u32 = 30;
const DEFAULT_REL_TOL: f64 = 1e-10;
const DEFAULT_T_END: f64 = 50.0;
const DEFAULT_SAMPLE_DT: f64 = 0.02;

/// Mean-field and exact quantum dynamics of N bosons in three
/// symmetrically coupled wells.
#[derive(Parser)]
#[command(name = "triwell", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report the trap parameters and the derived collision rates.
    Params(ParamsArgs),
    /// List the equilibrium points with coordinates and stability.
    FixedPoints(FixedPointsArgs),
    /// Scan equilibrium count and stability over a (chi, mu) rectangle.
    StabilityMap(StabilityMapArgs),
    /// Integrate the dynamics from one initial state.
    Evolve(EvolveArgs),
    /// Trace twin-condensate orbits on the invariant sphere.
    SpherePortrait(SpherePortraitArgs),
    /// Compute an energy-shell Poincare section (preset-keyed).
    Poincare(PoincareArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Tunneling rate (nonzero).
    #[arg(long, allow_negative_numbers = true)]
    omega: Option<f64>,
    /// Particle number.
    #[arg(long)]
    n: Option<u32>,
    /// On-site collision parameter kappa (N - 1) / omega.
    #[arg(long, allow_negative_numbers = true)]
    chi: Option<f64>,
    /// Cross-well collision parameter lambda (N - 1) / omega.
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    /// Bundled run id (fig1 .. fig10-chaotic); an unknown id lists the table.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "triwell-out")]
    out: PathBuf,
    /// Relative tolerance of the adaptive integrators.
    #[arg(long)]
    rel_tol: Option<f64>,
    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Replay a recorded config.json; excludes the other value flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ParamsArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// On-site collision rate; with --lambda, converted to (chi, mu).
    #[arg(long, allow_negative_numbers = true, requires = "lambda")]
    kappa: Option<f64>,
    /// Cross-well collision rate.
    #[arg(long, allow_negative_numbers = true, requires = "kappa")]
    lambda: Option<f64>,
    /// TOML parameter file; a [trap] block derives the rates from the
    /// well geometry (units with hbar = 1).
    #[arg(long)]
    trap_config: Option<PathBuf>,
}

#[derive(Args)]
struct FixedPointsArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct StabilityMapArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// chi axis as lo:hi:count.
    #[arg(long, allow_hyphen_values = true)]
    chi_grid: Option<String>,
    /// mu axis as lo:hi:count.
    #[arg(long, allow_hyphen_values = true)]
    mu_grid: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Classical,
    Quantum,
    Both,
}

impl ModeArg {
    fn name(self) -> &'static str {
        match self {
            ModeArg::Classical => "classical",
            ModeArg::Quantum => "quantum",
            ModeArg::Both => "both",
        }
    }
}

fn mode_name(mode: EvolveMode) -> &'static str {
    match mode {
        EvolveMode::Classical => "classical",
        EvolveMode::Quantum => "quantum",
        EvolveMode::Both => "both",
    }
}

#[derive(Args)]
struct EvolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Which level of description to integrate.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Initial amplitude of the first mode as re,im.
    #[arg(long, allow_hyphen_values = true)]
    w1: Option<String>,
    /// Initial amplitude of the second mode as re,im.
    #[arg(long, allow_hyphen_values = true)]
    w2: Option<String>,
    /// Initial occupations n1,n2,n3 (quantum mode only).
    #[arg(long)]
    fock: Option<String>,
    /// Integration horizon.
    #[arg(long)]
    t_end: Option<f64>,
    /// Output sample interval.
    #[arg(long)]
    sample_dt: Option<f64>,
}

#[derive(Args)]
struct SpherePortraitArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Seed colatitudes (radians from the solitary-mode pole) as lo:hi:count.
    #[arg(long)]
    theta_grid: Option<String>,
    /// Seed phases as lo:hi:count.
    #[arg(long, allow_hyphen_values = true)]
    phi_grid: Option<String>,
    /// Integration horizon.
    #[arg(long)]
    t_end: Option<f64>,
    /// Output sample interval.
    #[arg(long)]
    sample_dt: Option<f64>,
}

#[derive(Args)]
struct PoincareArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Integration horizon per seed trajectory.
    #[arg(long)]
    t_end: Option<f64>,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Exit status by failure kind: 2 bad input, 3 a numerical routine gave up,
/// 4 the trajectory left the coordinate chart, 1 filesystem trouble.
fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonConverged { .. } | Error::RootBracketing { .. } => 3,
        Error::ChartOverflow { .. } => 4,
        Error::Io(_) => 1,
        _ => 2,
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}

fn run(cli: Cli) -> Result<()> {
    let (cfg, out, workers) = resolve(cli.command)?;
    if let Some(w) = workers {
        if w == 0 {
            return Err(usage("workers must be at least 1"));
        }
        // Ignore failure: the global pool can only be set once per process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    exec::run(&cfg, &out, workers)
}

type Resolved = (RunConfig, PathBuf, Option<usize>);

fn resolve(command: Command) -> Result<Resolved> {
    match command {
        Command::Params(a) => resolve_params(a),
        Command::FixedPoints(a) => resolve_fixed_points(a),
        Command::StabilityMap(a) => resolve_stability_map(a),
        Command::Evolve(a) => resolve_evolve(a),
        Command::SpherePortrait(a) => resolve_sphere_portrait(a),
        Command::Poincare(a) => resolve_poincare(a),
    }
}

/// Handles `--config`: loads the recorded run, refusing other value flags.
fn replay(common: &CommonArgs, extra_flags: bool, name: &str) -> Result<Option<RunConfig>> {
    let Some(path) = &common.config else {
        return Ok(None);
    };
    let other = common.omega.is_some()
        || common.n.is_some()
        || common.chi.is_some()
        || common.mu.is_some()
        || common.preset.is_some()
        || common.rel_tol.is_some()
        || extra_flags;
    if other {
        return Err(usage(
            "--config replays a recorded run; only --out and --workers may accompany it",
        ));
    }
    let cfg = config::load(path)?;
    if cfg.command != name || cfg.options.kind() != name {
        return Err(usage(format!(
            "config records a `{}` run, not `{name}`",
            cfg.command
        )));
    }
    Ok(Some(cfg))
}

fn no_trap_flags(common: &CommonArgs, why: &str) -> Result<()> {
    if common.omega.is_some() || common.n.is_some() || common.chi.is_some() || common.mu.is_some() {
        return Err(usage(format!(
            "{why} fixes omega, n, chi and mu; drop those flags"
        )));
    }
    Ok(())
}

fn rel_tol_of(common: &CommonArgs) -> Result<f64> {
    let rel_tol = common.rel_tol.unwrap_or(DEFAULT_REL_TOL);
    if !(rel_tol > 0.0) || !rel_tol.is_finite() {
        return Err(usage(format!("rel-tol must be positive, got {rel_tol}")));
    }
    Ok(rel_tol)
}

fn finish(
    name: &str,
    preset: Option<String>,
    trap: (f64, u32, f64, f64),
    common: &CommonArgs,
    options: CommandOptions,
) -> Result<Resolved> {
    let cfg = RunConfig {
        command: name.into(),
        preset,
        omega: trap.0,
        n: trap.1,
        chi: trap.2,
        mu: trap.3,
        rel_tol: rel_tol_of(common)?,
        options,
    };
    Ok((cfg, common.out.clone(), common.workers))
}

fn flag_trap(common: &CommonArgs) -> (f64, u32, f64, f64) {
    (
        common.omega.unwrap_or(DEFAULT_OMEGA),
        common.n.unwrap_or(DEFAULT_N),
        common.chi.unwrap_or(0.0),
        common.mu.unwrap_or(0.0),
    )
}

/// Looks up a preset and checks it belongs to the invoked subcommand.
fn preset_for(kind: &str, id: &str) -> Result<presets::Preset> {
    let preset = presets::find(id).ok_or_else(|| {
        usage(format!(
            "unknown preset {id:?}; available: {}",
            presets::ids().join(", ")
        ))
    })?;
    let actual = match &preset.run {
        PresetRun::StabilityMap { .. } => "stability-map",
        PresetRun::SpherePortrait { .. } => "sphere-portrait",
        PresetRun::Evolve { .. } => "evolve",
        PresetRun::Section { .. } => "poincare",
    };
    if actual != kind {
        return Err(usage(format!(
            "preset {id} belongs to `{actual}`, not `{kind}`"
        )));
    }
    Ok(preset)
}

fn resolve_params(a: ParamsArgs) -> Result<Resolved> {
    let extra = a.kappa.is_some() || a.lambda.is_some() || a.trap_config.is_some();
    if let Some(cfg) = replay(&a.common, extra, "params")? {
        return Ok((cfg, a.common.out, a.common.workers));
    }
    if a.common.preset.is_some() {
        return Err(usage("params takes explicit parameters, not a preset"));
    }
    if a.kappa.is_some() && (a.common.chi.is_some() || a.common.mu.is_some()) {
        return Err(usage(
            "give either chi/mu or kappa/lambda, not both; each determines the other",
        ));
    }
    if a.trap_config.is_some()
        && (a.kappa.is_some()
            || a.common.omega.is_some()
            || a.common.n.is_some()
            || a.common.chi.is_some()
            || a.common.mu.is_some())
    {
        return Err(usage(
            "the trap file carries the full parameter set; drop the other parameter flags",
        ));
    }
    let options = CommandOptions::Params {
        kappa: a.kappa,
        lambda: a.lambda,
        trap_config: a.trap_config.map(|p| p.display().to_string()),
    };
    finish("params", None, flag_trap(&a.common), &a.common, options)
}

fn resolve_fixed_points(a: FixedPointsArgs) -> Result<Resolved> {
    if let Some(cfg) = replay(&a.common, false, "fixed-points")? {
        return Ok((cfg, a.common.out, a.common.workers));
    }
    if a.common.preset.is_some() {
        return Err(usage("no bundled runs exist for fixed-points; give --chi/--mu"));
    }
    finish(
        "fixed-points",
        None,
        flag_trap(&a.common),
        &a.common,
        CommandOptions::FixedPoints {},
    )
}

fn resolve_stability_map(a: StabilityMapArgs) -> Result<Resolved> {
    let extra = a.chi_grid.is_some() || a.mu_grid.is_some();
    if let Some(cfg) = replay(&a.common, extra, "stability-map")? {
        return Ok((cfg, a.common.out, a.common.workers));
    }
    if a.common.chi.is_some() || a.common.mu.is_some() {
        return Err(usage(
            "the map scans chi and mu; give --chi-grid and --mu-grid instead",
        ));
    }
    if let Some(id) = &a.common.preset {
        let preset = preset_for("stability-map", id)?;
        if extra {
            return Err(usage(format!("preset {id} fixes the grids; drop --chi-grid/--mu-grid")));
        }
        no_trap_flags(&a.common, &format!("preset {id}"))?;
        let PresetRun::StabilityMap { chi, mu } = preset.run else {
            unreachable!("preset_for checked the kind");
        };
        let trap = (
            preset.params.omega,
            preset.params.n_particles,
            preset.params.chi,
            preset.params.mu,
        );
        let options = CommandOptions::StabilityMap {
            chi_grid: GridCfg::from_spec(chi),
            mu_grid: GridCfg::from_spec(mu),
        };
        return finish("stability-map", Some(id.clone()), trap, &a.common, options);
    }
    let (Some(chi_text), Some(mu_text)) = (&a.chi_grid, &a.mu_grid) else {
        return Err(usage("give --chi-grid and --mu-grid (lo:hi:count), or a preset"));
    };
    let options = CommandOptions::StabilityMap {
        chi_grid: parse_grid(chi_text)?,
        mu_grid: parse_grid(mu_text)?,
    };
    finish("stability-map", None, flag_trap(&a.common), &a.common, options)
}

fn resolve_evolve(a: EvolveArgs) -> Result<Resolved> {
    let extra = a.mode.is_some()
        || a.w1.is_some()
        || a.w2.is_some()
        || a.fock.is_some()
        || a.t_end.is_some()
        || a.sample_dt.is_some();
    if let Some(cfg) = replay(&a.common, extra, "evolve")? {
        return Ok((cfg, a.common.out, a.common.workers));
    }
    if let Some(id) = &a.common.preset {
        let preset = preset_for("evolve", id)?;
        no_trap_flags(&a.common, &format!("preset {id}"))?;
        if a.w1.is_some() || a.w2.is_some() || a.fock.is_some() {
            return Err(usage(format!(
                "preset {id} fixes the initial state; drop --w1/--w2/--fock"
            )));
        }
        let PresetRun::Evolve {
            w1,
            w2,
            mode,
            t_end,
            sample_dt,
        } = preset.run
        else {
            unreachable!("preset_for checked the kind");
        };
        let trap = (
            preset.params.omega,
            preset.params.n_particles,
            preset.params.chi,
            preset.params.mu,
        );
        let options = CommandOptions::Evolve {
            mode: a.mode.map(ModeArg::name).unwrap_or(mode_name(mode)).into(),
            w1: [w1.re, w1.im],
            w2: [w2.re, w2.im],
            fock: None,
            t_end: a.t_end.unwrap_or(t_end),
            sample_dt: a.sample_dt.unwrap_or(sample_dt),
        };
        return finish("evolve", Some(id.clone()), trap, &a.common, options);
    }
    let w1 = a.w1.as_deref().map(parse_pair).transpose()?.unwrap_or([0.0; 2]);
    let w2 = a.w2.as_deref().map(parse_pair).transpose()?.unwrap_or([0.0; 2]);
    let fock = a.fock.as_deref().map(parse_fock).transpose()?;
    if fock.is_some() && (a.w1.is_some() || a.w2.is_some()) {
        return Err(usage("give either --fock or --w1/--w2, not both"));
    }
    let options = CommandOptions::Evolve {
        mode: a.mode.unwrap_or(ModeArg::Classical).name().into(),
        w1,
        w2,
        fock,
        t_end: a.t_end.unwrap_or(DEFAULT_T_END),
        sample_dt: a.sample_dt.unwrap_or(DEFAULT_SAMPLE_DT),
    };
    finish("evolve", None, flag_trap(&a.common), &a.common, options)
}

fn resolve_sphere_portrait(a: SpherePortraitArgs) -> Result<Resolved> {
    let extra = a.theta_grid.is_some()
        || a.phi_grid.is_some()
        || a.t_end.is_some()
        || a.sample_dt.is_some();
    if let Some(cfg) = replay(&a.common, extra, "sphere-portrait")? {
        return Ok((cfg, a.common.out, a.common.workers));
    }
    if let Some(id) = &a.common.preset {
        let preset = preset_for("sphere-portrait", id)?;
        no_trap_flags(&a.common, &format!("preset {id}"))?;
        if a.theta_grid.is_some() || a.phi_grid.is_some() {
            return Err(usage(format!(
                "preset {id} fixes the seed angles; drop --theta-grid/--phi-grid"
            )));
        }
        let PresetRun::SpherePortrait {
            thetas,
            phis,
            t_end,
            sample_dt,
        } = preset.run
        else {
            unreachable!("preset_for checked the kind");
        };
        let trap = (
            preset.params.omega,
            preset.params.n_particles,
            preset.params.chi,
            preset.params.mu,
        );
        let options = CommandOptions::SpherePortrait {
            thetas,
            phis,
            t_end: a.t_end.unwrap_or(t_end),
            sample_dt: a.sample_dt.unwrap_or(sample_dt),
        };
        return finish("sphere-portrait", Some(id.clone()), trap, &a.common, options);
    }
    let (Some(theta_text), Some(phi_text)) = (&a.theta_grid, &a.phi_grid) else {
        return Err(usage(
            "give --theta-grid and --phi-grid (lo:hi:count), or a preset",
        ));
    };
    let options = CommandOptions::SpherePortrait {
        thetas: parse_grid(theta_text)?.to_spec()?.values(),
        phis: parse_grid(phi_text)?.to_spec()?.values(),
        t_end: a.t_end.unwrap_or(40.0),
        sample_dt: a.sample_dt.unwrap_or(DEFAULT_SAMPLE_DT),
    };
    finish("sphere-portrait", None, flag_trap(&a.common), &a.common, options)
}

fn resolve_poincare(a: PoincareArgs) -> Result<Resolved> {
    if let Some(cfg) = replay(&a.common, a.t_end.is_some(), "poincare")? {
        return Ok((cfg, a.common.out, a.common.workers));
    }
    let Some(id) = &a.common.preset else {
        return Err(usage(
            "poincare runs are keyed by a bundled preset (fig6a, fig6b, fig9a, fig9b); give --preset",
        ));
    };
    let preset = preset_for("poincare", id)?;
    no_trap_flags(&a.common, &format!("preset {id}"))?;
    let PresetRun::Section { t_max, .. } = preset.run else {
        unreachable!("preset_for checked the kind");
    };
    let trap = (
        preset.params.omega,
        preset.params.n_particles,
        preset.params.chi,
        preset.params.mu,
    );
    let options = CommandOptions::Poincare {
        t_max: a.t_end.unwrap_or(t_max),
    };
    finish("poincare", Some(id.clone()), trap, &a.common, options)
}
