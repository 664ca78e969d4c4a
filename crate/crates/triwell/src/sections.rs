//! Poincare sections of the mean-field flow on fixed-energy shells.
//!
//! A section is defined by holding one chart coordinate at a fixed value
//! and recording two other coordinates every time a trajectory crosses
//! that plane. Seeds are generated on the plane at a common energy by
//! root-solving the energy function along one remaining coordinate, so
//! every recorded crossing of every trajectory sits on the same shell.

use crate::classical::{
    classical_energy, classical_energy_range, eom_rhs, wrap_angle, CanonicalState,
    CartesianState, ClassicalState, CHART_OVERFLOW_LIMIT,
};
use crate::equilibria::GridSpec;
use crate::model::ModelParams;
use crate::ode::{integrate_adaptive, DenseStep, Dopri5Options, OdeError, StepOutcome};
use crate::{Error, Result};
use rayon::prelude::*;
use std::io::Write;

/// Residual below which a state counts as lying exactly on the plane
/// (seeds start there; fixed points never leave).
const ON_PLANE_TOL: f64 = 1e-12;

/// Required residual after crossing refinement. Brackets that cannot be
/// refined this far (wrap artifacts, grazing touches) are rejected.
const REFINED_TOL: f64 = 1e-10;

/// The coordinate charts a section can be defined in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chart {
    /// Action-angle pairs `(K1, K2, phi1, phi2)`.
    Canonical,
    /// Conjugate pairs `(q1, p1, q2, p2)`.
    Cartesian,
}

/// One coordinate of one chart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectionCoordinate {
    K1,
    K2,
    Phi1,
    Phi2,
    Q1,
    P1,
    Q2,
    P2,
}

impl SectionCoordinate {
    pub fn chart(self) -> Chart {
        match self {
            Self::K1 | Self::K2 | Self::Phi1 | Self::Phi2 => Chart::Canonical,
            Self::Q1 | Self::P1 | Self::Q2 | Self::P2 => Chart::Cartesian,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::K1 => "K1",
            Self::K2 => "K2",
            Self::Phi1 => "phi1",
            Self::Phi2 => "phi2",
            Self::Q1 => "q1",
            Self::P1 => "p1",
            Self::Q2 => "q2",
            Self::P2 => "p2",
        }
    }

    /// Position within the chart's coordinate quadruple.
    pub fn index(self) -> usize {
        match self {
            Self::K1 | Self::Q1 => 0,
            Self::K2 | Self::P1 => 1,
            Self::Phi1 | Self::Q2 => 2,
            Self::Phi2 | Self::P2 => 3,
        }
    }

    /// Angles live on the circle; their residuals are wrapped differences.
    fn is_angle(self) -> bool {
        matches!(self, Self::Phi1 | Self::Phi2)
    }
}

impl std::fmt::Display for SectionCoordinate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Which sign of the plane-coordinate's time derivative to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossingDirection {
    Positive,
    Negative,
    Both,
}

/// Section plane: `condition.0 = condition.1`, reported in `axes`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionSpec {
    pub chart: Chart,
    pub condition: (SectionCoordinate, f64),
    pub direction: CrossingDirection,
    pub axes: [SectionCoordinate; 2],
}

impl SectionSpec {
    pub fn new(
        condition: (SectionCoordinate, f64),
        direction: CrossingDirection,
        axes: [SectionCoordinate; 2],
    ) -> Result<Self> {
        let spec = Self {
            chart: condition.0.chart(),
            condition,
            direction,
            axes,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let (coord, value) = self.condition;
        if coord.chart() != self.chart {
            return Err(Error::InvalidParameter {
                name: "condition",
                message: format!("{coord} does not belong to the {:?} chart", self.chart),
            });
        }
        if !value.is_finite() {
            return Err(Error::InvalidParameter {
                name: "condition",
                message: format!("plane value must be finite, got {value}"),
            });
        }
        for axis in self.axes {
            if axis.chart() != self.chart {
                return Err(Error::InvalidParameter {
                    name: "axes",
                    message: format!("{axis} does not belong to the {:?} chart", self.chart),
                });
            }
            if axis == coord {
                return Err(Error::InvalidParameter {
                    name: "axes",
                    message: format!("plane coordinate {coord} cannot also be an axis"),
                });
            }
        }
        if self.axes[0] == self.axes[1] {
            return Err(Error::InvalidParameter {
                name: "axes",
                message: format!("axes must differ, got {} twice", self.axes[0]),
            });
        }
        Ok(())
    }
}

/// The four chart coordinates of `state`, in the order given by
/// [`SectionCoordinate::index`].
pub fn chart_coords(chart: Chart, state: &ClassicalState, n: u32) -> [f64; 4] {
    match chart {
        Chart::Canonical => {
            let c = state.to_canonical(n);
            [c.k1, c.k2, c.phi1, c.phi2]
        }
        Chart::Cartesian => {
            let c = state.to_cartesian(n);
            [c.q1, c.p1, c.q2, c.p2]
        }
    }
}

fn state_from_coords(chart: Chart, coords: [f64; 4], n: u32) -> Result<ClassicalState> {
    let nf = n as f64;
    match chart {
        Chart::Canonical => CanonicalState {
            k1: coords[0],
            k2: coords[1],
            phi1: coords[2],
            phi2: coords[3],
            n_particles: nf,
        }
        .to_state(),
        Chart::Cartesian => CartesianState {
            q1: coords[0],
            p1: coords[1],
            q2: coords[2],
            p2: coords[3],
            n_particles: nf,
        }
        .to_state(),
    }
}

/// Seed construction recipe: three coordinates swept over grids, the
/// fourth solved so that each seed lands on the target energy shell.
#[derive(Debug, Clone)]
pub struct SeedSpec {
    pub chart: Chart,
    /// The three swept coordinates with their grids; typically the section
    /// plane coordinate is one of them with a single-point grid.
    pub frozen: Vec<(SectionCoordinate, GridSpec)>,
    pub solve: SectionCoordinate,
    pub solve_range: (f64, f64),
    /// Sign-scan resolution along the solved coordinate.
    pub scan_points: usize,
}

impl SeedSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frozen.len() != 3 {
            return Err(Error::InvalidParameter {
                name: "frozen",
                message: format!("need exactly 3 swept coordinates, got {}", self.frozen.len()),
            });
        }
        let mut covered = [false; 4];
        for (coord, grid) in &self.frozen {
            if coord.chart() != self.chart {
                return Err(Error::InvalidParameter {
                    name: "frozen",
                    message: format!("{coord} does not belong to the {:?} chart", self.chart),
                });
            }
            if *coord == self.solve {
                return Err(Error::InvalidParameter {
                    name: "frozen",
                    message: format!("solved coordinate {coord} cannot also be swept"),
                });
            }
            if covered[coord.index()] {
                return Err(Error::InvalidParameter {
                    name: "frozen",
                    message: format!("{coord} listed twice"),
                });
            }
            covered[coord.index()] = true;
            if grid.count == 0 {
                return Err(Error::InvalidParameter {
                    name: "frozen",
                    message: format!("empty grid for {coord}"),
                });
            }
        }
        if self.solve.chart() != self.chart {
            return Err(Error::InvalidParameter {
                name: "solve",
                message: format!("{} does not belong to the {:?} chart", self.solve, self.chart),
            });
        }
        let (lo, hi) = self.solve_range;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParameter {
                name: "solve_range",
                message: format!("need a finite interval, got ({lo}, {hi})"),
            });
        }
        if self.scan_points < 2 {
            return Err(Error::InvalidParameter {
                name: "scan_points",
                message: "need at least 2 scan points".into(),
            });
        }
        Ok(())
    }
}

/// Seeds on the shell plus bookkeeping about cells that produced none.
#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seeds: Vec<ClassicalState>,
    /// Grid cells where the energy never reached the target along the
    /// solved coordinate (or the root failed verification).
    pub skipped_cells: usize,
    /// Sampled range of the energy function, reported so an empty result
    /// can be diagnosed.
    pub energy_range: (f64, f64),
}

/// Builds seeds with per-particle energy `e_target` on the section plane.
/// Each grid cell contributes at most one seed: the first solution of
/// `energy = e_target` along the solved coordinate, found by a sign scan
/// and bisection, verified to `1e-10 * |omega|`.
pub fn energy_shell_seeds(
    params: &ModelParams,
    e_target: f64,
    spec: &SeedSpec,
) -> Result<SeedResult> {
    spec.validate()?;
    let energy_range = classical_energy_range(params, 60, 60);
    let counts: Vec<usize> = spec.frozen.iter().map(|(_, g)| g.count).collect();
    let total_cells = counts.iter().product::<usize>();
    if e_target < energy_range.0 - 1e-9 * params.abs_omega()
        || e_target > energy_range.1 + 1e-9 * params.abs_omega()
    {
        return Ok(SeedResult {
            seeds: Vec::new(),
            skipped_cells: total_cells,
            energy_range,
        });
    }

    let grids: Vec<Vec<f64>> = spec.frozen.iter().map(|(_, g)| g.values()).collect();
    let residual_tol = 1e-10 * params.abs_omega();
    let n = params.n_particles;
    let mut seeds = Vec::new();
    let mut skipped = 0usize;

    for i0 in 0..counts[0] {
        for i1 in 0..counts[1] {
            for i2 in 0..counts[2] {
                let mut coords = [0.0f64; 4];
                for (slot, &i) in [i0, i1, i2].iter().enumerate() {
                    coords[spec.frozen[slot].0.index()] = grids[slot][i];
                }
                let eval = |x: f64| -> Option<f64> {
                    let mut c = coords;
                    c[spec.solve.index()] = x;
                    let s = state_from_coords(spec.chart, c, n).ok()?;
                    Some(classical_energy(&s, params) - e_target)
                };
                match solve_on_interval(&eval, spec.solve_range, spec.scan_points, 0.1 * residual_tol)
                {
                    Some(x) => {
                        let mut c = coords;
                        c[spec.solve.index()] = x;
                        // The interval solver only returns chart-valid points.
                        let s = state_from_coords(spec.chart, c, n).unwrap();
                        if (classical_energy(&s, params) - e_target).abs() < residual_tol {
                            seeds.push(s);
                        } else {
                            skipped += 1;
                        }
                    }
                    None => skipped += 1,
                }
            }
        }
    }
    Ok(SeedResult {
        seeds,
        skipped_cells: skipped,
        energy_range,
    })
}

/// First zero of `f` on `[lo, hi]`: sign scan over `points` samples, then
/// bisection. Samples where `f` is undefined (outside the chart) are
/// skipped. A sample with `|f| <= zero_tol` is returned directly: at a
/// critical point of `f` (a fixed point on its own shell) the residual is
/// quadratic and never changes sign.
fn solve_on_interval(
    f: &dyn Fn(f64) -> Option<f64>,
    (lo, hi): (f64, f64),
    points: usize,
    zero_tol: f64,
) -> Option<f64> {
    let x_at = |i: usize| lo + (hi - lo) * i as f64 / (points - 1) as f64;
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..points {
        let x = x_at(i);
        let Some(fx) = f(x) else {
            prev = None;
            continue;
        };
        if fx.abs() <= zero_tol {
            return Some(x);
        }
        if let Some((px, pf)) = prev {
            if pf * fx < 0.0 {
                let (mut a, mut b, mut fa) = (px, x, pf);
                for _ in 0..90 {
                    let m = 0.5 * (a + b);
                    // Between two chart-valid points the chart section is an
                    // interval, so the midpoint stays valid.
                    let Some(fm) = f(m) else { return None };
                    if fa * fm <= 0.0 {
                        b = m;
                    } else {
                        a = m;
                        fa = fm;
                    }
                }
                return Some(0.5 * (a + b));
            }
        }
        prev = Some((x, fx));
    }
    None
}

/// One recorded plane crossing.
#[derive(Debug, Clone, Copy)]
pub struct SectionPoint {
    pub trajectory_id: usize,
    pub t: f64,
    pub axis1: f64,
    pub axis2: f64,
    /// Per-particle energy at the crossing.
    pub energy: f64,
    /// Full state at the crossing, for chaining and diagnostics.
    pub state: ClassicalState,
}

/// Integration controls for [`poincare_section`].
#[derive(Debug, Clone, Copy)]
pub struct SectionOptions {
    pub t_max: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl SectionOptions {
    pub fn new(t_max: f64) -> Self {
        Self {
            t_max,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
        }
    }
}

/// All crossings of all seed trajectories, ordered by trajectory then time.
#[derive(Debug, Clone)]
pub struct SectionResult {
    pub spec: SectionSpec,
    /// Common per-particle energy of the seeds.
    pub shell_energy: f64,
    pub points: Vec<SectionPoint>,
    /// Ids of trajectories that left the chart before `t_max`; their
    /// crossings up to that time are kept.
    pub truncated: Vec<usize>,
    /// Sign changes that could not be refined to the residual tolerance
    /// (angle-wrap artifacts and grazing touches).
    pub rejected_crossings: usize,
}

impl SectionResult {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "trajectory_id,t,axis1,axis2,energy")?;
        for p in &self.points {
            writeln!(
                w,
                "{},{},{},{},{}",
                p.trajectory_id, p.t, p.axis1, p.axis2, p.energy
            )?;
        }
        Ok(())
    }
}

/// Integrates every seed to `t_max` and collects refined crossings of the
/// section plane. Seeds must share one energy shell to `1e-8 * |omega|`.
/// Trajectories run in parallel; the output order is by seed index.
pub fn poincare_section(
    seeds: &[ClassicalState],
    params: &ModelParams,
    spec: &SectionSpec,
    opts: &SectionOptions,
) -> Result<SectionResult> {
    spec.validate()?;
    if seeds.is_empty() {
        return Err(Error::InvalidParameter {
            name: "seeds",
            message: "need at least one seed".into(),
        });
    }
    if !(opts.t_max > 0.0) || !opts.t_max.is_finite() {
        return Err(Error::InvalidParameter {
            name: "t_max",
            message: format!("must be positive and finite, got {}", opts.t_max),
        });
    }
    if !(opts.rel_tol > 0.0) || !(opts.abs_tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tolerances",
            message: "rel_tol and abs_tol must be positive".into(),
        });
    }
    let shell_energy = classical_energy(&seeds[0], params);
    let shell_tol = 1e-8 * params.abs_omega();
    for (i, s) in seeds.iter().enumerate() {
        let e = classical_energy(s, params);
        if (e - shell_energy).abs() > shell_tol {
            return Err(Error::InvalidParameter {
                name: "seeds",
                message: format!(
                    "seed {i} is off the shell by {:.3e} (tolerance {:.3e})",
                    (e - shell_energy).abs(),
                    shell_tol
                ),
            });
        }
    }

    let traced: Result<Vec<_>> = seeds
        .par_iter()
        .enumerate()
        .map(|(id, seed)| trace_one(id, seed, params, spec, opts))
        .collect();
    let mut points = Vec::new();
    let mut truncated = Vec::new();
    let mut rejected = 0usize;
    for trace in traced? {
        points.extend(trace.points);
        if trace.truncated {
            truncated.push(trace.id);
        }
        rejected += trace.rejected;
    }
    Ok(SectionResult {
        spec: *spec,
        shell_energy,
        points,
        truncated,
        rejected_crossings: rejected,
    })
}

struct TraceOutcome {
    id: usize,
    points: Vec<SectionPoint>,
    truncated: bool,
    rejected: usize,
}

fn trace_one(
    id: usize,
    seed: &ClassicalState,
    params: &ModelParams,
    spec: &SectionSpec,
    opts: &SectionOptions,
) -> Result<TraceOutcome> {
    let n = params.n_particles;
    let (cond, value) = spec.condition;
    let residual = move |y: &[f64]| -> f64 {
        let s = ClassicalState::from_parts(y[0], y[1], y[2], y[3]);
        let c = chart_coords(spec.chart, &s, n)[cond.index()];
        if cond.is_angle() {
            wrap_angle(c - value)
        } else {
            c - value
        }
    };

    let p = *params;
    let rhs = move |_t: f64, y: &[f64], dy: &mut [f64]| {
        let s = ClassicalState::from_parts(y[0], y[1], y[2], y[3]);
        let (d1, d2) = eom_rhs(&s, &p);
        dy[0] = d1.re;
        dy[1] = d1.im;
        dy[2] = d2.re;
        dy[3] = d2.im;
    };

    let mut points = Vec::new();
    let mut truncated = false;
    let mut rejected = 0usize;
    let mut buf = [0.0f64; 4];
    let mut record = |step: &DenseStep, t: f64, g_slope: f64, points: &mut Vec<SectionPoint>| {
        if match (spec.direction, g_slope) {
            (CrossingDirection::Both, _) => false,
            (CrossingDirection::Positive, s) => s <= 0.0,
            (CrossingDirection::Negative, s) => s >= 0.0,
        } {
            return;
        }
        step.eval_into(t, &mut buf);
        let s = ClassicalState::from_parts(buf[0], buf[1], buf[2], buf[3]);
        let coords = chart_coords(spec.chart, &s, n);
        points.push(SectionPoint {
            trajectory_id: id,
            t,
            axis1: coords[spec.axes[0].index()],
            axis2: coords[spec.axes[1].index()],
            energy: classical_energy(&s, params),
            state: s,
        });
    };

    let ode_opts = Dopri5Options {
        rel_tol: opts.rel_tol,
        abs_tol: opts.abs_tol,
        ..Default::default()
    };
    let y0 = [seed.w1.re, seed.w1.im, seed.w2.re, seed.w2.im];
    let mut eval_buf = [0.0f64; 4];

    let res = integrate_adaptive(rhs, 0.0, &y0, opts.t_max, &ode_opts, |step| {
        let end = step.y1();
        let norm = end.iter().map(|v| v * v).sum::<f64>();
        if !norm.is_finite() || norm > CHART_OVERFLOW_LIMIT {
            truncated = true;
            return StepOutcome::Stop;
        }
        let g = |t: f64, buf: &mut [f64; 4]| -> f64 {
            step.eval_into(t, buf);
            residual(buf)
        };
        let g0 = residual(step.y0());
        let g1 = residual(step.y1());
        let span = step.t1 - step.t0;
        let slope_at = |t: f64, buf: &mut [f64; 4]| -> f64 {
            let d = 1e-6 * span;
            let (a, b) = ((t - d).max(step.t0), (t + d).min(step.t1));
            (g(b, buf) - g(a, buf)) / (b - a)
        };
        if g0.abs() <= ON_PLANE_TOL && (step.t0 == 0.0 || g1.abs() <= ON_PLANE_TOL) {
            // On the plane at the step start and either just launched or
            // staying there (a fixed point): record without refinement. A
            // transversal crossing that happens to land on a step boundary
            // is recorded by the preceding step's bisection instead.
            let s = slope_at(step.t0, &mut eval_buf);
            record(step, step.t0, s, &mut points);
        } else if g0 * g1 < 0.0 && !(cond.is_angle() && (g0 - g1).abs() > std::f64::consts::PI) {
            // Transversal crossing inside the step; angle residuals jumping
            // by more than pi went around the cut instead.
            let (mut a, mut b, mut ga) = (step.t0, step.t1, g0);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let gm = g(m, &mut eval_buf);
                if ga * gm <= 0.0 {
                    b = m;
                } else {
                    a = m;
                    ga = gm;
                }
                if b - a < 1e-15 * step.t1.abs().max(1.0) {
                    break;
                }
            }
            let t_c = 0.5 * (a + b);
            if g(t_c, &mut eval_buf).abs() < REFINED_TOL {
                let s = slope_at(t_c, &mut eval_buf);
                record(step, t_c, s, &mut points);
            } else {
                rejected += 1;
            }
        }
        StepOutcome::Continue
    });

    match res {
        Err(OdeError::StepSizeUnderflow { .. }) => truncated = true,
        Err(OdeError::MaxStepsExceeded { t }) => {
            return Err(Error::NonConverged {
                what: "section trajectory",
                detail: format!("step budget exhausted at t = {t} for seed {id}"),
            })
        }
        Ok(_) => {}
    }
    Ok(TraceOutcome {
        id,
        points,
        truncated,
        rejected,
    })
}
