//! Runs a resolved configuration: creates the output directory, writes the
//! data files, and leaves `config.json` plus `metadata.json` beside them.
//!
//! Data files contain no wall-clock content, so a re-run from the emitted
//! config reproduces them byte for byte on the same build; timestamps and
//! timings live only in the metadata sidecar.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use triwell::classical::{
    classical_energy, integrate, sphere_coords, twin_state_from_angles, ClassicalState,
    IntegrateOptions, Trajectory,
};
use triwell::equilibria::{
    analyze_fixed_points, stability_closed_form, stability_map, FixedPointClass, Stability,
};
use triwell::model::{
    derive_collision_rates, params_from_rates, FockBasis, ModelParams, ParamsConfig, TrapGeometry,
};
use triwell::presets::{self, PresetRun, ShellAnchor};
use triwell::quantum::{propagate, PropagateOptions, QuantumState, QuantumSystem, QuantumTrajectory};
use triwell::sections::{chart_coords, energy_shell_seeds, poincare_section, SectionOptions};
use triwell::{Error, Result, C64};

use crate::config::{CommandOptions, RunConfig};

/// Largest particle number accepted for exact propagation. The Fock
/// dimension grows as `(N+1)(N+2)/2`; past this point a run needs a
/// propagator (Krylov, split-step) this tool does not carry.
pub const QUANTUM_N_CAP: u32 = 200;

pub fn run(cfg: &RunConfig, out: &Path, workers: Option<usize>) -> Result<()> {
    fs::create_dir_all(out)?;
    write_json(&out.join("config.json"), cfg)?;
    let started = Instant::now();
    let outcome = match &cfg.options {
        CommandOptions::Params {
            kappa,
            lambda,
            trap_config,
        } => run_params(cfg, out, *kappa, *lambda, trap_config.as_deref())?,
        CommandOptions::FixedPoints {} => run_fixed_points(cfg, out)?,
        CommandOptions::StabilityMap { chi_grid, mu_grid } => {
            let map = stability_map(
                cfg.omega,
                cfg.n,
                chi_grid.to_spec()?,
                mu_grid.to_spec()?,
            )?;
            let path = out.join("stability_map.csv");
            map.write_csv(fs::File::create(&path)?)?;
            let degenerate = map.cells.iter().filter(|c| c.degenerate).count();
            let unphysical = map.cells.iter().filter(|c| !c.physical).count();
            println!(
                "stability map: {} x {} cells -> {}",
                map.chi_grid.count,
                map.mu_grid.count,
                path.display()
            );
            Outcome {
                outputs: vec!["stability_map.csv"],
                extras: json!({
                    "cells": map.cells.len(),
                    "degenerate_cells": degenerate,
                    "unphysical_sign_cells": unphysical,
                }),
            }
        }
        CommandOptions::Evolve {
            mode,
            w1,
            w2,
            fock,
            t_end,
            sample_dt,
        } => run_evolve(cfg, out, mode, *w1, *w2, *fock, *t_end, *sample_dt)?,
        CommandOptions::SpherePortrait {
            thetas,
            phis,
            t_end,
            sample_dt,
        } => run_sphere_portrait(cfg, out, thetas, phis, *t_end, *sample_dt)?,
        CommandOptions::Poincare { t_max } => run_poincare(cfg, out, *t_max)?,
    };
    write_metadata(
        cfg,
        out,
        workers,
        started.elapsed().as_secs_f64(),
        &outcome,
    )
}

struct Outcome {
    outputs: Vec<&'static str>,
    extras: Value,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    Ok(fs::write(path, text + "\n")?)
}

fn write_metadata(
    cfg: &RunConfig,
    out: &Path,
    workers: Option<usize>,
    wall_seconds: f64,
    outcome: &Outcome,
) -> Result<()> {
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = json!({
        "command": cfg.command,
        "preset": cfg.preset,
        "build": env!("TRIWELL_BUILD_REF"),
        "tool_version": env!("CARGO_PKG_VERSION"),
        "created_unix_s": created,
        "wall_seconds": wall_seconds,
        "workers": workers,
        "rel_tol": cfg.rel_tol,
        "outputs": outcome.outputs,
        "run": outcome.extras,
    });
    write_json(&out.join("metadata.json"), &meta)
}

fn base_params(cfg: &RunConfig) -> Result<ModelParams> {
    ModelParams::new(cfg.omega, cfg.n, cfg.chi, cfg.mu)
}

fn verdict_word(v: Stability) -> &'static str {
    match v {
        Stability::Stable => "stable",
        Stability::Unstable => "unstable",
        Stability::Marginal => "marginal",
    }
}

// ---------------------------------------------------------------- params

#[derive(Serialize)]
struct ParamsReport {
    omega: f64,
    n: u32,
    chi: f64,
    mu: f64,
    kappa: f64,
    lambda: f64,
    omega_eff: f64,
    fock_dimension: usize,
    unphysical_signs: bool,
    collisionless: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    narrow_separation: Option<bool>,
}

fn run_params(
    cfg: &RunConfig,
    out: &Path,
    kappa: Option<f64>,
    lambda: Option<f64>,
    trap_config: Option<&str>,
) -> Result<Outcome> {
    let mut epsilon = None;
    let mut narrow = None;
    let params = if let Some(path) = trap_config {
        let text = fs::read_to_string(path)?;
        let pc = ParamsConfig::from_toml(&text)?;
        match pc.trap {
            Some(tc) => {
                let mut geom = TrapGeometry::new(tc.q0, tc.d, tc.v0, tc.omega_trap, tc.mass)?;
                if let Some(a) = tc.scattering_length {
                    // File units must have hbar = 1 for this cross-check.
                    geom = geom.with_scattering_length(a, 1.0)?;
                }
                let rates = derive_collision_rates(&geom)?;
                epsilon = Some(rates.epsilon);
                narrow = Some(geom.narrow_separation());
                params_from_rates(pc.omega, rates.kappa, rates.lambda, pc.n)?.params
            }
            None => pc.to_params()?,
        }
    } else if let (Some(k), Some(l)) = (kappa, lambda) {
        params_from_rates(cfg.omega, k, l, cfg.n)?.params
    } else {
        base_params(cfg)?
    };

    let report = ParamsReport {
        omega: params.omega,
        n: params.n_particles,
        chi: params.chi,
        mu: params.mu,
        kappa: params.kappa(),
        lambda: params.lambda(),
        omega_eff: params.omega_eff(),
        fock_dimension: FockBasis::dimension_for(params.n_particles),
        unphysical_signs: params.has_unphysical_signs(),
        collisionless: params.collisionless(),
        epsilon,
        narrow_separation: narrow,
    };
    write_json(&out.join("params.json"), &report)?;

    println!("omega     = {}", report.omega);
    println!("n         = {}", report.n);
    println!("chi       = {}", report.chi);
    println!("mu        = {}", report.mu);
    println!("kappa     = {}", report.kappa);
    println!("lambda    = {}", report.lambda);
    println!("omega_eff = {}", report.omega_eff);
    println!("fock_dim  = {}", report.fock_dimension);
    if let Some(eps) = report.epsilon {
        println!("epsilon   = {eps}");
    }
    if report.narrow_separation == Some(true) {
        println!("note: wells overlap appreciably (q0 < 3 d); the three-mode picture is strained");
    }
    if report.unphysical_signs {
        println!("note: chi and mu carry opposite signs, which no single trap geometry produces");
    }

    Ok(Outcome {
        outputs: vec!["params.json"],
        extras: json!({}),
    })
}

// ---------------------------------------------------------- fixed points

fn run_fixed_points(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let params = base_params(cfg)?;
    let entries = analyze_fixed_points(&params)?;

    let path = out.join("fixed_points.csv");
    let mut file = fs::File::create(&path)?;
    writeln!(
        file,
        "class,re_w1,im_w1,re_w2,im_w2,k1,k2,phi1,phi2,energy,stability,\
         re_lambda_sq_a,im_lambda_sq_a,re_lambda_sq_b,im_lambda_sq_b,\
         re_l1,im_l1,re_l2,im_l2,re_l3,im_l3,re_l4,im_l4"
    )?;
    for e in &entries {
        let s = &e.point.state;
        let c = s.to_canonical(params.n_particles);
        let lsq = match e.report.lambda_sq {
            Some([a, b]) => format!("{},{},{},{}", a.re, a.im, b.re, b.im),
            None => ",,,".into(),
        };
        let mut eigs = String::new();
        for k in 0..4 {
            let z = e
                .report
                .eigenvalues
                .get(k)
                .copied()
                .unwrap_or(C64::new(f64::NAN, f64::NAN));
            if k > 0 {
                eigs.push(',');
            }
            eigs.push_str(&format!("{},{}", z.re, z.im));
        }
        writeln!(
            file,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            e.point.class.label(),
            s.w1.re,
            s.w1.im,
            s.w2.re,
            s.w2.im,
            c.k1,
            c.k2,
            c.phi1,
            c.phi2,
            e.point.energy,
            e.report.verdict.code(),
            lsq,
            eigs,
        )?;
    }

    println!(
        "equilibria at omega = {}, N = {}, chi = {}, mu = {}:",
        params.omega, params.n_particles, params.chi, params.mu
    );
    for e in &entries {
        let s = &e.point.state;
        let c = s.to_canonical(params.n_particles);
        let spectrum = match e.report.lambda_sq {
            Some([a, b]) => format!(
                "lambda^2 = ({:+.4}{:+.4}i, {:+.4}{:+.4}i)",
                a.re, a.im, b.re, b.im
            ),
            None => {
                let list: Vec<String> = e
                    .report
                    .eigenvalues
                    .iter()
                    .map(|z| format!("{:+.4}{:+.4}i", z.re, z.im))
                    .collect();
                format!("eigs = ({})", list.join(", "))
            }
        };
        println!(
            "  {:<8} w = ({:+.4}{:+.4}i, {:+.4}{:+.4}i)  K = ({:.3}, {:.3})  phi = ({:+.3}, {:+.3})  E/N = {:+.6}  {}  {}",
            e.point.class.label(),
            s.w1.re,
            s.w1.im,
            s.w2.re,
            s.w2.im,
            c.k1,
            c.k2,
            c.phi1,
            c.phi2,
            e.point.energy,
            spectrum,
            verdict_word(e.report.verdict),
        );
    }

    let counts = |v: Stability| {
        entries
            .iter()
            .filter(|e| e.report.verdict == v)
            .count()
    };
    Ok(Outcome {
        outputs: vec!["fixed_points.csv"],
        extras: json!({
            "records": entries.len(),
            "stable": counts(Stability::Stable),
            "unstable": counts(Stability::Unstable),
            "marginal": counts(Stability::Marginal),
        }),
    })
}

// ---------------------------------------------------------------- evolve

fn parse_mode(mode: &str) -> Result<(bool, bool)> {
    match mode {
        "classical" => Ok((true, false)),
        "quantum" => Ok((false, true)),
        "both" => Ok((true, true)),
        other => Err(Error::Config(format!(
            "mode must be classical, quantum or both, got {other:?}"
        ))),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_evolve(
    cfg: &RunConfig,
    out: &Path,
    mode: &str,
    w1: [f64; 2],
    w2: [f64; 2],
    fock: Option<[u32; 3]>,
    t_end: f64,
    sample_dt: f64,
) -> Result<Outcome> {
    let params = base_params(cfg)?;
    let (classical, quantum) = parse_mode(mode)?;
    if fock.is_some() && classical {
        return Err(Error::Config(
            "a Fock start has no classical amplitudes; use --mode quantum with --fock".into(),
        ));
    }
    let state0 = ClassicalState::new(C64::new(w1[0], w1[1]), C64::new(w2[0], w2[1]));

    let mut outputs = Vec::new();
    let mut extras = serde_json::Map::new();

    if classical {
        let opts = IntegrateOptions::new(t_end, sample_dt).with_rel_tol(cfg.rel_tol);
        let traj = integrate(&state0, &params, &opts)?;
        traj.write_csv(fs::File::create(out.join("classical.csv"))?)?;
        println!(
            "classical: {} samples to t = {}, energy drift {:.2e}",
            traj.times.len(),
            t_end,
            traj.max_energy_drift
        );
        extras.insert(
            "classical".into(),
            json!({
                "samples": traj.times.len(),
                "max_energy_drift": traj.max_energy_drift,
                "converged": traj.converged,
            }),
        );
        outputs.push("classical.csv");
    }

    if quantum {
        let traj = quantum_evolve(&params, &state0, fock, t_end, sample_dt, cfg.rel_tol)?;
        traj.write_csv(fs::File::create(out.join("quantum.csv"))?)?;
        println!(
            "quantum:   {} samples to t = {}, norm drift {:.2e}, energy drift {:.2e}",
            traj.samples.len(),
            t_end,
            traj.max_norm_drift,
            traj.max_energy_drift
        );
        extras.insert(
            "quantum".into(),
            json!({
                "samples": traj.samples.len(),
                "fock_dimension": FockBasis::dimension_for(params.n_particles),
                "max_norm_drift": traj.max_norm_drift,
                "max_energy_drift": traj.max_energy_drift,
                "converged": traj.converged,
            }),
        );
        outputs.push("quantum.csv");
    }

    Ok(Outcome {
        outputs,
        extras: Value::Object(extras),
    })
}

fn quantum_evolve(
    params: &ModelParams,
    state0: &ClassicalState,
    fock: Option<[u32; 3]>,
    t_end: f64,
    sample_dt: f64,
    rel_tol: f64,
) -> Result<QuantumTrajectory> {
    if params.n_particles > QUANTUM_N_CAP {
        return Err(Error::InvalidParameter {
            name: "n",
            message: format!(
                "exact propagation is capped at N = {QUANTUM_N_CAP} (dimension {}); \
                 N = {} needs dimension {}. Reduce N or use --mode classical.",
                FockBasis::dimension_for(QUANTUM_N_CAP),
                params.n_particles,
                FockBasis::dimension_for(params.n_particles),
            ),
        });
    }
    let system = QuantumSystem::new(params);
    let psi0 = match fock {
        Some(occ) => QuantumState::from_fock(system.basis.clone(), occ)?,
        None => QuantumState::coherent(system.basis.clone(), state0.w1, state0.w2),
    };
    let opts = PropagateOptions::new(t_end, sample_dt).with_rel_tol(rel_tol);
    propagate(&psi0, &system.hamiltonian, &opts)
}

// ------------------------------------------------------- sphere portrait

fn run_sphere_portrait(
    cfg: &RunConfig,
    out: &Path,
    thetas: &[f64],
    phis: &[f64],
    t_end: f64,
    sample_dt: f64,
) -> Result<Outcome> {
    let params = base_params(cfg)?;
    for &theta in thetas {
        if !(theta >= 0.0) || theta >= std::f64::consts::PI {
            return Err(Error::Config(format!(
                "theta must lie in [0, pi), got {theta}"
            )));
        }
    }
    let seeds: Vec<(f64, f64)> = thetas
        .iter()
        .flat_map(|&t| phis.iter().map(move |&p| (t, p)))
        .collect();
    if seeds.is_empty() {
        return Err(Error::Config("no portrait seeds given".into()));
    }

    let opts = IntegrateOptions::new(t_end, sample_dt).with_rel_tol(cfg.rel_tol);
    // The flow preserves w1 == w2 exactly (both components step through
    // identical arithmetic), so the sphere projection cannot fail mid-orbit.
    let orbits: Result<Vec<Trajectory>> = seeds
        .par_iter()
        .map(|&(theta, phi)| integrate(&twin_state_from_angles(theta, phi), &params, &opts))
        .collect();
    let orbits = orbits?;

    let path = out.join("portrait.csv");
    let mut file = fs::File::create(&path)?;
    writeln!(file, "trajectory_id,t,theta,phi,ix,iy,iz")?;
    let mut worst_drift = 0.0f64;
    for (id, orbit) in orbits.iter().enumerate() {
        worst_drift = worst_drift.max(orbit.max_energy_drift);
        for (t, s) in orbit.times.iter().zip(&orbit.states) {
            let sp = sphere_coords(s)?;
            writeln!(
                file,
                "{},{},{},{},{},{},{}",
                id, t, sp.theta, sp.phi, sp.i[0], sp.i[1], sp.i[2]
            )?;
        }
    }

    let markers = fs::File::create(out.join("markers.csv"))?;
    let twin_count = write_twin_markers(markers, &params)?;

    println!(
        "portrait: {} orbits to t = {}, {} equilibrium markers, worst energy drift {:.2e}",
        orbits.len(),
        t_end,
        twin_count,
        worst_drift
    );
    Ok(Outcome {
        outputs: vec!["portrait.csv", "markers.csv"],
        extras: json!({
            "trajectories": orbits.len(),
            "markers": twin_count,
            "max_energy_drift": worst_drift,
            "all_converged": orbits.iter().all(|o| o.converged),
        }),
    })
}

/// Markers for the equilibria living on the twin surface, with their
/// stability codes; returns how many were written.
fn write_twin_markers(mut file: fs::File, params: &ModelParams) -> Result<usize> {
    writeln!(file, "class,theta,phi,ix,iy,iz,stability")?;
    let mut count = 0;
    for e in analyze_fixed_points(params)? {
        let twin = matches!(
            e.point.class,
            FixedPointClass::S1 | FixedPointClass::S2 | FixedPointClass::S3 | FixedPointClass::S4
        );
        if !twin {
            continue;
        }
        let sp = sphere_coords(&e.point.state)?;
        writeln!(
            file,
            "{},{},{},{},{},{},{}",
            e.point.class.label(),
            sp.theta,
            sp.phi,
            sp.i[0],
            sp.i[1],
            sp.i[2],
            e.report.verdict.code(),
        )?;
        count += 1;
    }
    Ok(count)
}

// -------------------------------------------------------------- poincare

fn run_poincare(cfg: &RunConfig, out: &Path, t_max: f64) -> Result<Outcome> {
    let id = cfg.preset.as_deref().ok_or_else(|| {
        Error::Config("poincare runs are keyed by a bundled preset; give --preset".into())
    })?;
    let preset = presets::find(id)
        .ok_or_else(|| Error::Config(format!("unknown preset {id:?}")))?;
    let PresetRun::Section {
        spec, seeds, shell, ..
    } = preset.run
    else {
        return Err(Error::Config(format!(
            "preset {id} is not a section run"
        )));
    };
    let params = preset.params;
    if (cfg.omega, cfg.n, cfg.chi, cfg.mu)
        != (
            params.omega,
            params.n_particles,
            params.chi,
            params.mu,
        )
    {
        return Err(Error::Config(format!(
            "config parameters disagree with preset {id}; regenerate the config"
        )));
    }

    let anchor = shell.state();
    let shell_energy = classical_energy(&anchor, &params);
    let seed_result = energy_shell_seeds(&params, shell_energy, &seeds)?;
    if seed_result.seeds.is_empty() {
        return Err(Error::NonConverged {
            what: "seed construction",
            detail: format!(
                "no grid cell reached the shell energy {shell_energy}; sampled energies span {:?}",
                seed_result.energy_range
            ),
        });
    }

    let opts = SectionOptions {
        t_max,
        rel_tol: cfg.rel_tol,
        abs_tol: cfg.rel_tol * 1e-2,
    };
    let result = poincare_section(&seed_result.seeds, &params, &spec, &opts)?;
    let path = out.join("section.csv");
    result.write_csv(fs::File::create(&path)?)?;

    let mut markers = fs::File::create(out.join("markers.csv"))?;
    writeln!(markers, "class,axis1,axis2,stability")?;
    let anchor_class = match shell {
        ShellAnchor::DepletedWell => FixedPointClass::Sdw1,
        ShellAnchor::Vortex => FixedPointClass::VortexPlus,
    };
    let coords = chart_coords(spec.chart, &anchor, params.n_particles);
    let report = stability_closed_form(anchor_class, &params)?;
    writeln!(
        markers,
        "{},{},{},{}",
        anchor_class.label(),
        coords[spec.axes[0].index()],
        coords[spec.axes[1].index()],
        report.verdict.code(),
    )?;

    println!(
        "section {id}: {} seeds ({} cells off shell), {} crossings to t = {} -> {}",
        seed_result.seeds.len(),
        seed_result.skipped_cells,
        result.points.len(),
        t_max,
        path.display()
    );
    if !result.truncated.is_empty() {
        println!(
            "note: {} trajectories left the chart early: ids {:?}",
            result.truncated.len(),
            result.truncated
        );
    }

    Ok(Outcome {
        outputs: vec!["section.csv", "markers.csv"],
        extras: json!({
            "preset_summary": preset.summary,
            "shell_energy": result.shell_energy,
            "anchor_stability": report.verdict.code(),
            "seeds": seed_result.seeds.len(),
            "skipped_cells": seed_result.skipped_cells,
            "sampled_energy_range": [seed_result.energy_range.0, seed_result.energy_range.1],
            "crossings": result.points.len(),
            "rejected_crossings": result.rejected_crossings,
            "truncated_trajectories": result.truncated,
        }),
    })
}
