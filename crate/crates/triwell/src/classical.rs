//! Mean-field dynamics on the manifold of SU(3) coherent states.
//!
//! A coherent configuration of the condensate is labeled by two complex
//! amplitudes `(w1, w2)`: the occupation amplitudes of wells 1 and 2
//! relative to well 3, whose amplitude is fixed to 1. The chart covers the
//! whole manifold except the measure-zero set with an empty third mode.
//!
//! The time-dependent variational principle restricted to this manifold
//! yields first-order equations of motion for `(w1, w2)` which conserve the
//! energy per particle [`classical_energy`]. Two alternative real charts are
//! provided: action-angle pairs `(K_j, phi_j)` (well populations and phase
//! differences) and canonically conjugate Cartesian pairs `(q_j, p_j)`.

use crate::model::ModelParams;
use crate::ode::{integrate_adaptive, Dopri5Options, OdeError, StepOutcome};
use crate::{Error, Result, C64};
use std::io::Write;

/// Integration aborts once `|w1|^2 + |w2|^2` exceeds this, i.e. once the
/// third mode holds less than about 1e-8 of the population and the chart
/// degenerates.
pub const CHART_OVERFLOW_LIMIT: f64 = 1e8;

/// Two twin amplitudes are considered equal (state on the twin-condensate
/// subspace) within this absolute tolerance.
pub const TWIN_TOLERANCE: f64 = 1e-9;

/// Coherent-state label `(w1, w2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalState {
    pub w1: C64,
    pub w2: C64,
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = a % std::f64::consts::TAU;
    if x <= -std::f64::consts::PI {
        x += std::f64::consts::TAU;
    } else if x > std::f64::consts::PI {
        x -= std::f64::consts::TAU;
    }
    x
}

impl ClassicalState {
    pub fn new(w1: C64, w2: C64) -> Self {
        Self { w1, w2 }
    }

    pub fn from_parts(re1: f64, im1: f64, re2: f64, im2: f64) -> Self {
        Self::new(C64::new(re1, im1), C64::new(re2, im2))
    }

    /// `|w1|^2 + |w2|^2`.
    pub fn norm_sum(&self) -> f64 {
        self.w1.norm_sqr() + self.w2.norm_sqr()
    }

    pub fn is_finite(&self) -> bool {
        self.w1.re.is_finite()
            && self.w1.im.is_finite()
            && self.w2.re.is_finite()
            && self.w2.im.is_finite()
    }

    /// Well populations and phases `(K_j, phi_j)` for `N` particles:
    /// `w_j = sqrt(K_j / K_3) exp(-i phi_j)` with `K_3 = N - K_1 - K_2`.
    pub fn to_canonical(&self, n: u32) -> CanonicalState {
        let n = n as f64;
        let denom = 1.0 + self.norm_sum();
        CanonicalState {
            k1: n * self.w1.norm_sqr() / denom,
            k2: n * self.w2.norm_sqr() / denom,
            phi1: wrap_angle(-self.w1.arg()),
            phi2: wrap_angle(-self.w2.arg()),
            n_particles: n,
        }
    }

    /// Canonically conjugate Cartesian pairs:
    /// `w_j = (q_j + i p_j) / sqrt(2N - q1^2 - p1^2 - q2^2 - p2^2)`.
    pub fn to_cartesian(&self, n: u32) -> CartesianState {
        let r = (2.0 * n as f64 / (1.0 + self.norm_sum())).sqrt();
        CartesianState {
            q1: r * self.w1.re,
            p1: r * self.w1.im,
            q2: r * self.w2.re,
            p2: r * self.w2.im,
            n_particles: n as f64,
        }
    }

    /// Relabels the modes by a permutation of the amplitude triple
    /// `(w1, w2, 1)`: entry `i` of the permutation names the old mode that
    /// becomes new mode `i`. Fails when the new reference mode would have
    /// amplitude zero (the relabeled state falls outside the chart).
    pub fn relabel(&self, perm: ModePermutation) -> Result<ClassicalState> {
        let amps = [self.w1, self.w2, C64::new(1.0, 0.0)];
        let new = [amps[perm.0[0]], amps[perm.0[1]], amps[perm.0[2]]];
        if new[2].norm() == 0.0 {
            return Err(Error::ChartBoundary(
                "relabeling would put an empty mode in the reference slot".into(),
            ));
        }
        Ok(ClassicalState::new(new[0] / new[2], new[1] / new[2]))
    }
}

/// Permutation of the three mode labels; `perm[i]` is the old (0-based)
/// mode index occupying new slot `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModePermutation(pub [usize; 3]);

impl ModePermutation {
    pub fn new(perm: [usize; 3]) -> Result<Self> {
        let mut seen = [false; 3];
        for &p in &perm {
            if p > 2 || seen[p] {
                return Err(Error::InvalidParameter {
                    name: "perm",
                    message: format!("{perm:?} is not a permutation of (0, 1, 2)"),
                });
            }
            seen[p] = true;
        }
        Ok(Self(perm))
    }

    pub const SWAP_TWINS: ModePermutation = ModePermutation([1, 0, 2]);
    /// Cyclic shift 1 -> 2 -> 3 -> 1 (new slot i takes old mode i - 1).
    pub const CYCLE: ModePermutation = ModePermutation([2, 0, 1]);
}

/// Action-angle chart `(K1, K2, phi1, phi2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalState {
    pub k1: f64,
    pub k2: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub n_particles: f64,
}

impl CanonicalState {
    pub fn k3(&self) -> f64 {
        self.n_particles - self.k1 - self.k2
    }

    pub fn to_state(&self) -> Result<ClassicalState> {
        if self.k1 < 0.0 || self.k2 < 0.0 {
            return Err(Error::ChartBoundary(format!(
                "negative populations (K1, K2) = ({}, {})",
                self.k1, self.k2
            )));
        }
        let k3 = self.k3();
        if k3 <= 0.0 {
            return Err(Error::ChartBoundary(format!(
                "K1 + K2 = {} leaves no population in the reference mode",
                self.k1 + self.k2
            )));
        }
        let amp = |k: f64, phi: f64| {
            C64::from_polar((k / k3).sqrt(), -phi)
        };
        Ok(ClassicalState::new(
            amp(self.k1, self.phi1),
            amp(self.k2, self.phi2),
        ))
    }
}

/// Cartesian chart `(q1, p1, q2, p2)`, constrained to
/// `q1^2 + p1^2 + q2^2 + p2^2 < 2N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianState {
    pub q1: f64,
    pub p1: f64,
    pub q2: f64,
    pub p2: f64,
    pub n_particles: f64,
}

impl CartesianState {
    pub fn radius_sq(&self) -> f64 {
        self.q1 * self.q1 + self.p1 * self.p1 + self.q2 * self.q2 + self.p2 * self.p2
    }

    pub fn to_state(&self) -> Result<ClassicalState> {
        let rest = 2.0 * self.n_particles - self.radius_sq();
        if rest <= 0.0 {
            return Err(Error::ChartBoundary(format!(
                "q^2 + p^2 = {} reaches the sphere radius 2N = {}",
                self.radius_sq(),
                2.0 * self.n_particles
            )));
        }
        let r = rest.sqrt();
        Ok(ClassicalState::new(
            C64::new(self.q1 / r, self.p1 / r),
            C64::new(self.q2 / r, self.p2 / r),
        ))
    }
}

/// Point on the twin-condensate Bloch sphere. `theta` is measured from the
/// negative z-axis (south pole `theta = 0` is the solitary-mode condensate),
/// `phi` is the relative phase. `i = (I_x, I_y, I_z)` is the unit vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpherePoint {
    pub theta: f64,
    pub phi: f64,
    pub i: [f64; 3],
}

/// Maps a twin state `w1 = w2 = w` to its Bloch-sphere point via
/// `sqrt(2) w = exp(-i phi) tan(theta / 2)`. Fails when the amplitudes
/// differ by more than [`TWIN_TOLERANCE`].
pub fn sphere_coords(state: &ClassicalState) -> Result<SpherePoint> {
    if (state.w1 - state.w2).norm() >= TWIN_TOLERANCE {
        return Err(Error::InvalidParameter {
            name: "state",
            message: format!(
                "not a twin-condensate state: |w1 - w2| = {:.3e}",
                (state.w1 - state.w2).norm()
            ),
        });
    }
    let w = state.w1;
    let theta = 2.0 * (std::f64::consts::SQRT_2 * w.norm()).atan();
    let phi = if w.norm() == 0.0 {
        0.0
    } else {
        wrap_angle(-w.arg())
    };
    let denom = 1.0 + 2.0 * w.norm_sqr();
    let scale = 2.0 * std::f64::consts::SQRT_2 / denom;
    Ok(SpherePoint {
        theta,
        phi,
        i: [
            scale * w.re,
            -scale * w.im,
            (2.0 * w.norm_sqr() - 1.0) / denom,
        ],
    })
}

/// Inverse of [`sphere_coords`]: the twin state at the given sphere angles.
pub fn twin_state_from_angles(theta: f64, phi: f64) -> ClassicalState {
    let w = C64::from_polar((theta / 2.0).tan() / std::f64::consts::SQRT_2, -phi);
    ClassicalState::new(w, w)
}

/// Right-hand side of the equations of motion, `(dw1/dt, dw2/dt)`.
pub fn eom_rhs(state: &ClassicalState, params: &ModelParams) -> (C64, C64) {
    let d = 1.0 + state.norm_sum();
    let minus_i_omega = C64::new(0.0, -params.omega);
    (
        minus_i_omega * eom_brace(state.w1, state.w2, params.chi, params.mu, d),
        minus_i_omega * eom_brace(state.w2, state.w1, params.chi, params.mu, d),
    )
}

fn eom_brace(wj: C64, wk: C64, chi: f64, mu: f64, d: f64) -> C64 {
    let one = C64::new(1.0, 0.0);
    let wj_sq = wj.norm_sqr();
    let tunneling = (1.0 + 2.0 * mu) * (one - wj) * (wj + wk + one);
    let onsite = 2.0 * chi / d * wj * (wj_sq - 1.0);
    let cross = (one - wj) * wk.conj() * (wj + wk + wj * wk) - (one + wj) * wk * (wj_sq - 1.0);
    tunneling + onsite - 2.0 * mu / d * cross
}

/// Conserved energy per particle of the mean-field flow.
pub fn classical_energy(state: &ClassicalState, params: &ModelParams) -> f64 {
    let (w1, w2) = (state.w1, state.w2);
    let d = 1.0 + state.norm_sum();
    let re_cross = 2.0 * (w1.conj() * w2).re;
    let tunneling = re_cross + 2.0 * w1.re + 2.0 * w2.re;
    let onsite = w1.norm_sqr().powi(2) + w2.norm_sqr().powi(2) + 1.0;
    let cross = w1.norm_sqr() * 2.0 * w2.re + w2.norm_sqr() * 2.0 * w1.re + re_cross;
    params.omega
        * ((1.0 + 2.0 * params.mu) * tunneling / d
            + (params.chi * onsite - 2.0 * params.mu * cross) / (d * d))
}

/// Total circulation per particle, `<J_S> / N` in the coherent state:
/// `2 Im(w1 - w2 + conj(w1) w2) / (|w1|^2 + |w2|^2 + 1)`.
pub fn classical_js(state: &ClassicalState) -> f64 {
    let num = (state.w1 - state.w2 + state.w1.conj() * state.w2).im;
    2.0 * num / (1.0 + state.norm_sum())
}

/// Per-particle averages of the su(3) generators in the coherent state
/// labeled by `(w1, w2)`. Multiplying by `N` gives the quantum expectation
/// values of the corresponding one-body operators exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorAverages {
    /// Mode populations `<n_j> / N`.
    pub populations: [f64; 3],
    pub q1: f64,
    pub q2: f64,
    pub p: [f64; 3],
    pub j: [f64; 3],
    pub js: f64,
}

impl GeneratorAverages {
    /// Population imbalance of the twin pair against the solitary mode,
    /// `2 <S_z> / N` with `S_z` of the symmetric/solitary two-mode split.
    pub fn iz(&self) -> f64 {
        0.5 * (self.populations[0] + self.populations[1] + self.p[1]
            - 2.0 * self.populations[2])
    }

    /// Occupation fraction of the antisymmetric twin combination,
    /// `<b3^dagger b3> / N`.
    pub fn b3(&self) -> f64 {
        0.5 * (self.populations[0] + self.populations[1] - self.p[1])
    }
}

pub fn generator_expectations(state: &ClassicalState) -> GeneratorAverages {
    let d = 1.0 + state.norm_sum();
    let z = [
        state.w1 / d.sqrt(),
        state.w2 / d.sqrt(),
        C64::new(1.0 / d.sqrt(), 0.0),
    ];
    // One-body averages m[a][b] = <a_a^dagger a_b> / N.
    let m = |a: usize, b: usize| z[a].conj() * z[b];
    let populations = [m(0, 0).re, m(1, 1).re, m(2, 2).re];
    // Generator pairing (k, j): modes (1,3), (2,1), (3,2) in 1-based labels.
    let pairs = [(0usize, 2usize), (1, 0), (2, 1)];
    let mut p = [0.0; 3];
    let mut j = [0.0; 3];
    for (idx, &(k, pj)) in pairs.iter().enumerate() {
        p[idx] = 2.0 * m(k, pj).re;
        j[idx] = -2.0 * m(k, pj).im;
    }
    GeneratorAverages {
        populations,
        q1: 0.5 * (populations[0] - populations[1]),
        q2: (populations[0] + populations[1] - 2.0 * populations[2]) / 3.0,
        p,
        j,
        js: j[0] + j[1] + j[2],
    }
}

/// Options for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct IntegrateOptions {
    pub t_end: f64,
    /// Samples are emitted at integer multiples of this interval.
    pub sample_dt: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl IntegrateOptions {
    pub fn new(t_end: f64, sample_dt: f64) -> Self {
        Self {
            t_end,
            sample_dt,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
        }
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }
}

/// Sampled mean-field trajectory.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub n_particles: u32,
    pub times: Vec<f64>,
    pub states: Vec<ClassicalState>,
    /// Energy per particle at each sample.
    pub energy: Vec<f64>,
    /// Largest relative energy drift over the samples (relative to
    /// `max(|E(0)|, |omega|)`).
    pub max_energy_drift: f64,
    /// Whether the drift stayed below `100 * rel_tol`.
    pub converged: bool,
}

impl Trajectory {
    /// Writes the sampled trajectory as CSV. Populations and phases are the
    /// action-angle coordinates; `energy` is per particle; `js` is the total
    /// circulation `N <J_S> / N`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,re_w1,im_w1,re_w2,im_w2,K1,K2,K3,phi1,phi2,energy,js")?;
        let n = self.n_particles;
        for i in 0..self.times.len() {
            let s = &self.states[i];
            let c = s.to_canonical(n);
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                self.times[i],
                s.w1.re,
                s.w1.im,
                s.w2.re,
                s.w2.im,
                c.k1,
                c.k2,
                c.k3(),
                c.phi1,
                c.phi2,
                self.energy[i],
                n as f64 * classical_js(s),
            )?;
        }
        Ok(())
    }
}

/// Integrates the mean-field equations of motion from `state0` to
/// `opts.t_end`, sampling on the `sample_dt` grid via dense output.
///
/// Fails with [`Error::ChartOverflow`] when the trajectory approaches the
/// chart boundary (third mode nearly empty) and with
/// [`Error::NonConverged`] when the step budget runs out.
pub fn integrate(
    state0: &ClassicalState,
    params: &ModelParams,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    validate_integrate_options(opts)?;
    if !state0.is_finite() {
        return Err(Error::InvalidParameter {
            name: "state0",
            message: "initial amplitudes must be finite".into(),
        });
    }
    if state0.norm_sum() > CHART_OVERFLOW_LIMIT {
        return Err(Error::ChartOverflow { t: 0.0 });
    }

    let e0 = classical_energy(state0, params);
    let scale = e0.abs().max(params.abs_omega());
    let mut traj = Trajectory {
        n_particles: params.n_particles,
        times: vec![0.0],
        states: vec![*state0],
        energy: vec![e0],
        max_energy_drift: 0.0,
        converged: true,
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

    let ode_opts = Dopri5Options {
        rel_tol: opts.rel_tol,
        abs_tol: opts.abs_tol,
        ..Default::default()
    };
    let y0 = [state0.w1.re, state0.w1.im, state0.w2.re, state0.w2.im];
    let t_eps = 1e-12 * opts.t_end.max(1.0);
    let mut next_sample = 1usize;
    let mut overflow_t: Option<f64> = None;
    let mut sample_buf = [0.0; 4];

    let res = integrate_adaptive(rhs, 0.0, &y0, opts.t_end, &ode_opts, |step| {
        loop {
            let t_k = next_sample as f64 * opts.sample_dt;
            if t_k > step.t1 + t_eps {
                break;
            }
            step.eval_into(t_k.clamp(step.t0, step.t1), &mut sample_buf);
            let s = ClassicalState::from_parts(
                sample_buf[0],
                sample_buf[1],
                sample_buf[2],
                sample_buf[3],
            );
            if !s.is_finite() || s.norm_sum() > CHART_OVERFLOW_LIMIT {
                overflow_t = Some(t_k);
                return StepOutcome::Stop;
            }
            let e = classical_energy(&s, &p);
            traj.max_energy_drift = traj.max_energy_drift.max((e - e0).abs() / scale);
            traj.times.push(t_k);
            traj.states.push(s);
            traj.energy.push(e);
            next_sample += 1;
        }
        let end = step.y1();
        let s_end = end[0] * end[0] + end[1] * end[1] + end[2] * end[2] + end[3] * end[3];
        if !s_end.is_finite() || s_end > CHART_OVERFLOW_LIMIT {
            overflow_t = Some(step.t1);
            return StepOutcome::Stop;
        }
        StepOutcome::Continue
    });

    match res {
        Err(OdeError::StepSizeUnderflow { t }) => return Err(Error::ChartOverflow { t }),
        Err(OdeError::MaxStepsExceeded { t }) => {
            return Err(Error::NonConverged {
                what: "mean-field integration",
                detail: format!("step budget exhausted at t = {t}"),
            })
        }
        Ok(_) => {}
    }
    if let Some(t) = overflow_t {
        return Err(Error::ChartOverflow { t });
    }
    traj.converged = traj.max_energy_drift < 100.0 * opts.rel_tol;
    Ok(traj)
}

fn validate_integrate_options(opts: &IntegrateOptions) -> Result<()> {
    if !(opts.t_end > 0.0) || !opts.t_end.is_finite() {
        return Err(Error::InvalidParameter {
            name: "t_end",
            message: format!("must be positive and finite, got {}", opts.t_end),
        });
    }
    if !(opts.sample_dt > 0.0) {
        return Err(Error::InvalidParameter {
            name: "sample_dt",
            message: format!("must be positive, got {}", opts.sample_dt),
        });
    }
    if !(opts.rel_tol > 0.0) || !(opts.abs_tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tolerances",
            message: "rel_tol and abs_tol must be positive".into(),
        });
    }
    Ok(())
}

/// Deterministic estimate of the range of [`classical_energy`] over the
/// chart, from a grid in the action-angle coordinates plus the symmetric
/// reference configurations. Used to sanity-check energy-shell targets.
pub fn classical_energy_range(params: &ModelParams, k_steps: usize, phi_steps: usize) -> (f64, f64) {
    let n = params.n_particles;
    let nf = n as f64;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut visit = |s: &ClassicalState| {
        let e = classical_energy(s, params);
        lo = lo.min(e);
        hi = hi.max(e);
    };
    let phis: Vec<f64> = (0..phi_steps)
        .map(|i| -std::f64::consts::PI + std::f64::consts::TAU * i as f64 / phi_steps as f64)
        .collect();
    for i in 0..=k_steps {
        for j in 0..=(k_steps - i) {
            // Keep a sliver of population in the reference mode.
            let k1 = nf * (i as f64 / k_steps as f64) * 0.999;
            let k2 = nf * (j as f64 / k_steps as f64) * 0.999;
            if k1 + k2 >= nf {
                continue;
            }
            for &phi1 in &phis {
                for &phi2 in &phis {
                    let c = CanonicalState {
                        k1,
                        k2,
                        phi1,
                        phi2,
                        n_particles: nf,
                    };
                    if let Ok(s) = c.to_state() {
                        visit(&s);
                    }
                }
            }
        }
    }
    let one = C64::new(1.0, 0.0);
    let vortex = C64::from_polar(1.0, 2.0 * std::f64::consts::FRAC_PI_3);
    for s in [
        ClassicalState::new(one, one),
        ClassicalState::new(-one, C64::new(0.0, 0.0)),
        ClassicalState::new(C64::new(0.0, 0.0), -one),
        ClassicalState::new(vortex, vortex.conj()),
        ClassicalState::new(vortex.conj(), vortex),
        ClassicalState::new(C64::new(0.0, 0.0), C64::new(0.0, 0.0)),
    ] {
        visit(&s);
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params(omega: f64, chi: f64, mu: f64) -> ModelParams {
        ModelParams::new(omega, 30, chi, mu).unwrap()
    }

    fn vortex_state(sign: f64) -> ClassicalState {
        let w = C64::from_polar(1.0, sign * 2.0 * std::f64::consts::FRAC_PI_3);
        ClassicalState::new(w, w.conj())
    }

    #[test]
    fn symmetric_configurations_are_stationary() {
        let p = params(-1.0, 3.7, 0.42);
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        for s in [
            ClassicalState::new(one, one),
            ClassicalState::new(-one, zero),
            ClassicalState::new(zero, -one),
            vortex_state(1.0),
            vortex_state(-1.0),
        ] {
            let (d1, d2) = eom_rhs(&s, &p);
            assert!(d1.norm() < 1e-13, "w1 residual {} at {s:?}", d1.norm());
            assert!(d2.norm() < 1e-13, "w2 residual {} at {s:?}", d2.norm());
        }
    }

    #[test]
    fn solitary_mode_initial_slope_without_collisions() {
        let p = params(-1.0, 0.0, 0.0);
        let s = ClassicalState::new(C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        let (d1, d2) = eom_rhs(&s, &p);
        // dw_j/dt = -i omega at the south pole for chi = mu = 0.
        assert!((d1 - C64::new(0.0, -p.omega)).norm() < 1e-15);
        assert!((d2 - C64::new(0.0, -p.omega)).norm() < 1e-15);
    }

    #[test]
    fn energy_of_reference_configurations() {
        let (chi, mu, omega) = (2.3, 0.17, -1.2);
        let p = params(omega, chi, mu);
        let one = C64::new(1.0, 0.0);
        let e_s1 = classical_energy(&ClassicalState::new(one, one), &p);
        assert_relative_eq!(
            e_s1,
            omega * (2.0 * (1.0 + 2.0 * mu) + chi / 3.0 - 4.0 * mu / 3.0),
            max_relative = 1e-13
        );
        let e_sdw =
            classical_energy(&ClassicalState::new(-one, C64::new(0.0, 0.0)), &p);
        assert_relative_eq!(
            e_sdw,
            omega * (-(1.0 + 2.0 * mu) + chi / 2.0),
            max_relative = 1e-13
        );
        let e_v = classical_energy(&vortex_state(1.0), &p);
        assert_relative_eq!(
            e_v,
            omega * (-(1.0 + 2.0 * mu) + chi / 3.0 + 2.0 * mu / 3.0),
            max_relative = 1e-13
        );
    }

    #[test]
    fn equations_of_motion_follow_from_the_energy_functional() {
        // Variational identity: i dw_j/dt = (1 + |w1|^2 + |w2|^2) *
        // [(|w_j|^2 + 1) dH/dconj(w_j) + w_j conj(w_k) dH/dconj(w_k)]
        // with H the energy per particle. Wirtinger derivatives by central
        // differences.
        let p = params(-1.3, 2.1, 0.3);
        let h = 1e-6;
        let states = [
            ClassicalState::from_parts(0.3, -0.2, -0.5, 0.7),
            ClassicalState::from_parts(1.1, 0.4, 0.2, -0.9),
            ClassicalState::from_parts(-0.1, 0.0, 0.0, 0.25),
        ];
        for s in states {
            let grad = |which: usize| -> C64 {
                let bump = |re: f64, im: f64| {
                    let mut st = s;
                    match which {
                        0 => st.w1 += C64::new(re, im),
                        _ => st.w2 += C64::new(re, im),
                    }
                    classical_energy(&st, &p)
                };
                let d_re = (bump(h, 0.0) - bump(-h, 0.0)) / (2.0 * h);
                let d_im = (bump(0.0, h) - bump(0.0, -h)) / (2.0 * h);
                C64::new(d_re, d_im) / 2.0
            };
            let g1 = grad(0);
            let g2 = grad(1);
            let denom = 1.0 + s.norm_sum();
            let expect1 = C64::new(0.0, -1.0)
                * denom
                * ((s.w1.norm_sqr() + 1.0) * g1 + s.w1 * s.w2.conj() * g2);
            let expect2 = C64::new(0.0, -1.0)
                * denom
                * ((s.w2.norm_sqr() + 1.0) * g2 + s.w2 * s.w1.conj() * g1);
            let (d1, d2) = eom_rhs(&s, &p);
            assert!(
                (d1 - expect1).norm() < 2e-5 * d1.norm().max(1.0),
                "w1: {d1} vs {expect1}"
            );
            assert!(
                (d2 - expect2).norm() < 2e-5 * d2.norm().max(1.0),
                "w2: {d2} vs {expect2}"
            );
        }
    }

    #[test]
    fn canonical_chart_of_reference_states() {
        let one = C64::new(1.0, 0.0);
        let c = ClassicalState::new(one, one).to_canonical(30);
        assert_relative_eq!(c.k1, 10.0, epsilon = 1e-12);
        assert_relative_eq!(c.k2, 10.0, epsilon = 1e-12);
        assert_relative_eq!(c.k3(), 10.0, epsilon = 1e-12);
        assert_eq!(c.phi1, 0.0);
        let c = ClassicalState::new(-one, C64::new(0.0, 0.0)).to_canonical(30);
        assert_relative_eq!(c.k1, 15.0, epsilon = 1e-12);
        assert_relative_eq!(c.k2, 0.0, epsilon = 1e-12);
        assert_relative_eq!(c.phi1, std::f64::consts::PI, epsilon = 1e-12);
    }

    #[test]
    fn cartesian_chart_of_the_vortex() {
        let c = vortex_state(1.0).to_cartesian(30);
        assert_relative_eq!(c.q1, -5.0_f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(c.p1, 15.0_f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(c.q2, -5.0_f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(c.p2, -15.0_f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn chart_boundaries_are_rejected() {
        let c = CanonicalState {
            k1: 20.0,
            k2: 10.0,
            phi1: 0.0,
            phi2: 0.0,
            n_particles: 30.0,
        };
        assert!(matches!(c.to_state(), Err(Error::ChartBoundary(_))));
        let c = CartesianState {
            q1: 8.0,
            p1: 0.0,
            q2: 0.0,
            p2: 0.0,
            n_particles: 30.0,
        };
        assert!(matches!(c.to_state(), Err(Error::ChartBoundary(_))));
    }

    #[test]
    fn sphere_coordinates_along_the_twin_meridian() {
        let zero = twin_state_from_angles(0.0, 0.0);
        let p = sphere_coords(&zero).unwrap();
        assert_relative_eq!(p.i[2], -1.0, epsilon = 1e-12);

        let equator = ClassicalState::new(
            C64::new(1.0 / 2.0_f64.sqrt(), 0.0),
            C64::new(1.0 / 2.0_f64.sqrt(), 0.0),
        );
        let p = sphere_coords(&equator).unwrap();
        assert_relative_eq!(p.theta, std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
        assert_relative_eq!(p.i[2], 0.0, epsilon = 1e-12);

        let one = C64::new(1.0, 0.0);
        let p = sphere_coords(&ClassicalState::new(one, one)).unwrap();
        assert_relative_eq!(p.i[2], 1.0 / 3.0, epsilon = 1e-12);

        let skew = ClassicalState::from_parts(0.3, 0.0, 0.31, 0.0);
        assert!(sphere_coords(&skew).is_err());
    }

    #[test]
    fn circulation_of_reference_states() {
        assert_relative_eq!(
            classical_js(&vortex_state(1.0)),
            3.0_f64.sqrt(),
            epsilon = 1e-14
        );
        assert_relative_eq!(
            classical_js(&vortex_state(-1.0)),
            -(3.0_f64.sqrt()),
            epsilon = 1e-14
        );
        let s = ClassicalState::new(C64::new(0.0, 1.0), C64::new(0.0, 0.0));
        assert_relative_eq!(classical_js(&s), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn generator_averages_are_consistent() {
        let s = ClassicalState::from_parts(0.4, -0.3, -0.8, 0.2);
        let g = generator_expectations(&s);
        let pop_sum: f64 = g.populations.iter().sum();
        assert_relative_eq!(pop_sum, 1.0, epsilon = 1e-14);
        assert_relative_eq!(g.js, classical_js(&s), epsilon = 1e-14);
        assert_relative_eq!(
            g.q1,
            0.5 * (g.populations[0] - g.populations[1]),
            epsilon = 1e-15
        );
        // Twin states have an empty antisymmetric mode.
        let twin = twin_state_from_angles(1.1, 0.7);
        let g = generator_expectations(&twin);
        assert!(g.b3().abs() < 1e-15);
        assert_relative_eq!(
            g.iz(),
            sphere_coords(&twin).unwrap().i[2],
            epsilon = 1e-13
        );
    }

    #[test]
    fn relabeling_permutes_amplitudes_and_preserves_energy() {
        let p = params(1.0, -2.0, -0.2);
        let s = ClassicalState::from_parts(0.5, 0.2, -0.3, 0.8);
        let swapped = s.relabel(ModePermutation::SWAP_TWINS).unwrap();
        assert_eq!(swapped.w1, s.w2);
        assert_eq!(swapped.w2, s.w1);
        let e = classical_energy(&s, &p);
        for perm in [
            ModePermutation::SWAP_TWINS,
            ModePermutation::CYCLE,
            ModePermutation::new([0, 2, 1]).unwrap(),
        ] {
            let r = s.relabel(perm).unwrap();
            assert_relative_eq!(classical_energy(&r, &p), e, max_relative = 1e-12);
        }
        // Odd permutations reverse the circulation, even ones keep it.
        assert_relative_eq!(
            classical_js(&s.relabel(ModePermutation::SWAP_TWINS).unwrap()),
            -classical_js(&s),
            epsilon = 1e-13
        );
        assert_relative_eq!(
            classical_js(&s.relabel(ModePermutation::CYCLE).unwrap()),
            classical_js(&s),
            epsilon = 1e-13
        );
    }

    #[test]
    fn relabeling_into_an_empty_reference_mode_fails() {
        let s = ClassicalState::new(C64::new(0.0, 0.0), C64::new(0.5, 0.0));
        // New slot 3 takes old mode 1, whose amplitude vanishes.
        let perm = ModePermutation::new([2, 1, 0]).unwrap();
        assert!(matches!(s.relabel(perm), Err(Error::ChartBoundary(_))));
    }

    #[test]
    fn collisionless_evolution_matches_the_single_particle_solution() {
        // For chi = mu = 0 the coherent family is exactly invariant and
        // w_j(t) = (exp(-3 i omega t) - 1) / (exp(-3 i omega t) + 2)
        // starting from the solitary-mode condensate.
        let omega = -1.0;
        let p = params(omega, 0.0, 0.0);
        let s0 = ClassicalState::new(C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        let traj = integrate(&s0, &p, &IntegrateOptions::new(5.0, 0.25)).unwrap();
        assert!(traj.converged);
        for (i, &t) in traj.times.iter().enumerate() {
            let rot = C64::from_polar(1.0, -3.0 * omega * t);
            let want = (rot - 1.0) / (rot + 2.0);
            let got = traj.states[i];
            assert!(
                (got.w1 - want).norm() < 1e-8,
                "t = {t}: {} vs {want}",
                got.w1
            );
            assert!((got.w2 - want).norm() < 1e-8);
        }
    }

    #[test]
    fn twin_subspace_is_exactly_invariant() {
        let p = params(-1.0, 4.0, 0.04);
        let w = C64::new(0.3, 0.1);
        let traj = integrate(
            &ClassicalState::new(w, w),
            &p,
            &IntegrateOptions::new(10.0, 0.5),
        )
        .unwrap();
        for s in &traj.states {
            // The two amplitudes follow bit-identical arithmetic.
            assert_eq!(s.w1, s.w2);
        }
    }

    #[test]
    fn energy_is_conserved_on_a_generic_orbit() {
        let p = params(-1.0, 5.0, 0.05);
        let s0 = ClassicalState::from_parts(0.4, 0.0, -0.2, 0.3);
        let traj = integrate(&s0, &p, &IntegrateOptions::new(50.0, 0.5)).unwrap();
        assert!(traj.converged, "drift {}", traj.max_energy_drift);
        assert!(traj.max_energy_drift < 1e-8);
    }

    #[test]
    fn overflow_at_start_is_reported() {
        let p = params(-1.0, 0.0, 0.0);
        let s0 = ClassicalState::from_parts(2e4, 0.0, 0.0, 0.0);
        match integrate(&s0, &p, &IntegrateOptions::new(1.0, 0.1)) {
            Err(Error::ChartOverflow { t }) => assert_eq!(t, 0.0),
            other => panic!("expected chart overflow, got {other:?}"),
        }
    }

    #[test]
    fn csv_export_is_deterministic_and_well_formed() {
        let p = params(-1.0, 4.0, 0.4);
        let s0 = ClassicalState::new(C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        let traj = integrate(&s0, &p, &IntegrateOptions::new(1.0, 0.25)).unwrap();
        let mut a = Vec::new();
        traj.write_csv(&mut a).unwrap();
        let text = String::from_utf8(a.clone()).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,re_w1,im_w1,re_w2,im_w2,K1,K2,K3,phi1,phi2,energy,js"
        );
        assert_eq!(text.lines().count(), 1 + traj.times.len());
        let traj2 = integrate(&s0, &p, &IntegrateOptions::new(1.0, 0.25)).unwrap();
        let mut b = Vec::new();
        traj2.write_csv(&mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn energy_range_brackets_the_reference_energies() {
        let p = params(-1.0, 5.0, 0.05);
        let (lo, hi) = classical_energy_range(&p, 12, 8);
        let one = C64::new(1.0, 0.0);
        for s in [
            ClassicalState::new(one, one),
            ClassicalState::new(-one, C64::new(0.0, 0.0)),
            vortex_state(1.0),
        ] {
            let e = classical_energy(&s, &p);
            assert!(lo <= e + 1e-12 && e <= hi + 1e-12, "{e} outside [{lo}, {hi}]");
        }
    }

    proptest! {
        #[test]
        fn canonical_roundtrip(re1 in -3.0..3.0f64, im1 in -3.0..3.0f64,
                               re2 in -3.0..3.0f64, im2 in -3.0..3.0f64) {
            let s = ClassicalState::from_parts(re1, im1, re2, im2);
            let back = s.to_canonical(30).to_state().unwrap();
            prop_assert!((back.w1 - s.w1).norm() < 1e-12);
            prop_assert!((back.w2 - s.w2).norm() < 1e-12);
        }

        #[test]
        fn cartesian_roundtrip(re1 in -3.0..3.0f64, im1 in -3.0..3.0f64,
                               re2 in -3.0..3.0f64, im2 in -3.0..3.0f64) {
            let s = ClassicalState::from_parts(re1, im1, re2, im2);
            let back = s.to_cartesian(30).to_state().unwrap();
            prop_assert!((back.w1 - s.w1).norm() < 1e-12);
            prop_assert!((back.w2 - s.w2).norm() < 1e-12);
        }

        #[test]
        fn real_amplitudes_carry_no_circulation(a in -2.0..2.0f64, b in -2.0..2.0f64) {
            let s = ClassicalState::from_parts(a, 0.0, b, 0.0);
            prop_assert!(classical_js(&s).abs() < 1e-14);
        }

        #[test]
        fn circulation_is_bounded_by_sqrt3(re1 in -4.0..4.0f64, im1 in -4.0..4.0f64,
                                           re2 in -4.0..4.0f64, im2 in -4.0..4.0f64) {
            let s = ClassicalState::from_parts(re1, im1, re2, im2);
            prop_assert!(classical_js(&s).abs() <= 3.0_f64.sqrt() + 1e-12);
        }

        #[test]
        fn wrapped_angles_stay_in_range(a in -20.0..20.0f64) {
            let x = wrap_angle(a);
            prop_assert!(x > -std::f64::consts::PI && x <= std::f64::consts::PI);
        }
    }

}
