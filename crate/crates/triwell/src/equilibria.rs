//! Equilibrium points of the mean-field flow and their linear stability.
//!
//! The twin-condensate equilibria `w1 = w2 = w` (real `w`) are the real
//! roots of a quartic polynomial that always contains the uniform state
//! `w = 1`; dividing it out leaves a cubic whose real-root count switches
//! between one and three at two fold lines in the `(chi, mu)` plane,
//! located by the sign of [`discriminant`]. On top of the twin family sit
//! two single-depleted-well states and two vortex states, all independent
//! of the collision parameters.
//!
//! Stability is decided from the eigenvalues of the linearized flow:
//! closed-form expressions for the parameter-independent equilibria and a
//! finite-difference Jacobian for the roaming twin roots.

use crate::classical::{classical_energy, eom_rhs, ClassicalState};
use crate::model::ModelParams;
use crate::poly;
use crate::{Error, Result, C64};
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::io::Write;

/// Two twin roots closer than this (relative) are treated as one fold-
/// degenerate pair.
const ROOT_MERGE_TOL: f64 = 1e-6;

/// Reality filter for polynomial roots, matched to [`ROOT_MERGE_TOL`]: a
/// multiple real root is only located to about square-root accuracy and
/// may carry an imaginary part of that size.
const ROOT_IM_TOL: f64 = 1e-6;

/// Coefficients (highest power first) of the quartic whose real roots are
/// the twin-condensate equilibria; `w = 1` is always a root.
pub fn twin_quartic_coeffs(chi: f64, mu: f64) -> [f64; 5] {
    [
        4.0 * (1.0 + mu),
        -2.0 * (1.0 + chi + 4.0 * mu),
        6.0 * mu,
        2.0 * chi - 1.0,
        -1.0 - 2.0 * mu,
    ]
}

/// The quartic with its guaranteed root at `w = 1` divided out
/// (synthetic division; the remainder vanishes identically).
pub fn twin_cubic_coeffs(chi: f64, mu: f64) -> [f64; 4] {
    let a = twin_quartic_coeffs(chi, mu);
    let b3 = a[0];
    let b2 = a[1] + b3;
    let b1 = a[2] + b2;
    let b0 = a[3] + b1;
    [b3, b2, b1, b0]
}

/// Sign classifier for the cubic's real-root count: positive means one
/// real root, negative means three. Vanishes on the two fold lines.
pub fn discriminant(chi: f64, mu: f64) -> f64 {
    -chi.powi(4) - 2.0 * (3.0 + 7.0 * mu) * chi.powi(3)
        + 3.0 * (2.0 - 11.0 * mu * mu) * chi * chi
        + 2.0 * (5.0 + 12.0 * mu - 18.0 * mu * mu - 52.0 * mu.powi(3)) * chi
        + 2.0 * (9.0 + 76.0 * mu + 228.0 * mu * mu + 264.0 * mu.powi(3) + 76.0 * mu.powi(4))
}

/// The two fold lines `(chi_minus, chi_plus)` at fixed `mu`, found by a
/// sign scan of [`discriminant`] over `chi` in `[-80, 80]` refined by
/// bisection. Fails if the scan does not find exactly two crossings.
pub fn discriminant_roots(mu: f64) -> Result<(f64, f64)> {
    const LO: f64 = -80.0;
    const HI: f64 = 80.0;
    const STEPS: usize = 3200;
    let mut crossings = Vec::new();
    let mut prev_x = LO;
    let mut prev = discriminant(prev_x, mu);
    for i in 1..=STEPS {
        let x = LO + (HI - LO) * i as f64 / STEPS as f64;
        let val = discriminant(x, mu);
        if prev == 0.0 {
            crossings.push(prev_x);
        } else if prev * val < 0.0 {
            let (mut a, mut b, mut fa) = (prev_x, x, prev);
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                let fm = discriminant(m, mu);
                if fa * fm <= 0.0 {
                    b = m;
                } else {
                    a = m;
                    fa = fm;
                }
            }
            crossings.push(0.5 * (a + b));
        }
        prev_x = x;
        prev = val;
    }
    if crossings.len() != 2 {
        return Err(Error::RootBracketing {
            lo: LO,
            hi: HI,
            found: crossings.len(),
            expected: 2,
        });
    }
    Ok((crossings[0], crossings[1]))
}

/// Catalog labels for the equilibrium points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FixedPointClass {
    /// Uniform twin state `w = 1`.
    S1,
    /// Twin root continuing from `w = -1/2` at zero coupling.
    S2,
    /// The member of the fold-born twin pair that is unstable in its
    /// region of existence (the larger root of the pair).
    S3,
    /// The stable member of the fold-born twin pair (the smaller root).
    S4,
    /// `(w1, w2) = (-1, 0)`: second mode empty, modes 1 and 3 in
    /// opposite phase.
    Sdw1,
    /// `(w1, w2) = (0, -1)`: first mode empty.
    Sdw2,
    /// `(w1, w2) = (e^{+2 pi i/3}, e^{-2 pi i/3})`, circulation `+sqrt(3) N`.
    VortexPlus,
    /// The conjugate vortex, circulation `-sqrt(3) N`.
    VortexMinus,
}

impl FixedPointClass {
    pub fn label(self) -> &'static str {
        match self {
            FixedPointClass::S1 => "s1",
            FixedPointClass::S2 => "s2",
            FixedPointClass::S3 => "s3",
            FixedPointClass::S4 => "s4",
            FixedPointClass::Sdw1 => "sdw1",
            FixedPointClass::Sdw2 => "sdw2",
            FixedPointClass::VortexPlus => "vortex+",
            FixedPointClass::VortexMinus => "vortex-",
        }
    }
}

impl std::fmt::Display for FixedPointClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// One catalog entry: class, chart coordinates and energy per particle.
#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub class: FixedPointClass,
    pub state: ClassicalState,
    pub energy: f64,
    /// Set when the underlying twin root coincides (within
    /// [`ROOT_MERGE_TOL`]) with another root, i.e. at a fold or at the
    /// crossing with `w = 1`.
    pub degenerate: bool,
}

fn group_roots(sorted: &[f64]) -> Vec<(f64, usize)> {
    let mut out: Vec<(f64, usize)> = Vec::new();
    for &r in sorted {
        match out.last_mut() {
            Some((center, count)) if (r - *center).abs() <= ROOT_MERGE_TOL * center.abs().max(1.0) => {
                // Running mean keeps the group center unbiased.
                *center = (*center * *count as f64 + r) / (*count as f64 + 1.0);
                *count += 1;
            }
            _ => out.push((r, 1)),
        }
    }
    out
}

fn twin_point(params: &ModelParams, class: FixedPointClass, w: f64, degenerate: bool) -> FixedPoint {
    let state = ClassicalState::new(C64::new(w, 0.0), C64::new(w, 0.0));
    FixedPoint {
        class,
        state,
        energy: classical_energy(&state, params),
        degenerate,
    }
}

/// Assigns `S2`/`S3`/`S4` to the cubic's real roots.
///
/// In the three-root regions the continuation root `s2` sits below the
/// fold-born pair for `chi` beyond the upper fold and above it beyond the
/// lower fold; within each region the ascending order of the roots cannot
/// change (a crossing would be a fold), so the labels follow the order:
/// `[s2, s4, s3]` on the upper side and `[s4, s3, s2]` on the lower side.
fn label_cubic_roots(
    params: &ModelParams,
    groups: &[(f64, usize)],
    out: &mut Vec<FixedPoint>,
) -> Result<()> {
    use FixedPointClass::*;
    let near_one = |w: f64| (w - 1.0).abs() <= ROOT_MERGE_TOL;
    match groups {
        [] => {}
        [(r, 1)] => out.push(twin_point(params, S2, *r, near_one(*r))),
        [(r, 3)] => {
            for class in [S2, S3, S4] {
                out.push(twin_point(params, class, *r, true));
            }
        }
        [(a, ma), (b, mb)] if *ma + *mb == 3 => {
            // Fold: the double root is the just-born s3/s4 pair.
            let (simple, double) = if *ma == 1 { (*a, *b) } else { (*b, *a) };
            out.push(twin_point(params, S2, simple, near_one(simple)));
            out.push(twin_point(params, S3, double, true));
            out.push(twin_point(params, S4, double, true));
        }
        [(a, 1), (b, 1)] => {
            // Degenerate leading coefficient (mu = -1): the cubic drops to
            // a quadratic and the continuation root is gone; report the
            // remaining pair with the usual larger-root-is-s3 convention.
            out.push(twin_point(params, S4, *a, near_one(*a)));
            out.push(twin_point(params, S3, *b, near_one(*b)));
        }
        [(r0, 1), (r1, 1), (r2, 1)] => {
            let (lo, hi) = discriminant_roots(params.mu)?;
            let upper_side = params.chi > 0.5 * (lo + hi);
            let labels = if upper_side { [S2, S4, S3] } else { [S4, S3, S2] };
            for (class, r) in labels.into_iter().zip([*r0, *r1, *r2]) {
                out.push(twin_point(params, class, r, near_one(r)));
            }
        }
        other => {
            return Err(Error::NonConverged {
                what: "twin root labeling",
                detail: format!("unexpected root multiset {other:?}"),
            })
        }
    }
    Ok(())
}

/// Full catalog of equilibrium points at the given parameters, ordered
/// `s1, s2, s3, s4, sdw1, sdw2, vortex+, vortex-` with absent twin roots
/// skipped.
pub fn find_fixed_points(params: &ModelParams) -> Result<Vec<FixedPoint>> {
    use FixedPointClass::*;
    let mut out = Vec::with_capacity(8);

    let cubic = twin_cubic_coeffs(params.chi, params.mu);
    let roots = poly::real_roots(&cubic, ROOT_IM_TOL);
    let groups = group_roots(&roots);
    let s1_degenerate = groups
        .iter()
        .any(|(r, _)| (r - 1.0).abs() <= ROOT_MERGE_TOL);
    out.push(twin_point(params, S1, 1.0, s1_degenerate));
    label_cubic_roots(params, &groups, &mut out)?;
    // Keep catalog order regardless of root positions.
    out[1..].sort_by_key(|p| match p.class {
        S2 => 0,
        S4 => 2,
        S3 => 1,
        _ => 3,
    });

    let zero = C64::new(0.0, 0.0);
    let minus_one = C64::new(-1.0, 0.0);
    for (class, w1, w2) in [
        (Sdw1, minus_one, zero),
        (Sdw2, zero, minus_one),
        (
            VortexPlus,
            C64::from_polar(1.0, 2.0 * std::f64::consts::FRAC_PI_3),
            C64::from_polar(1.0, -2.0 * std::f64::consts::FRAC_PI_3),
        ),
        (
            VortexMinus,
            C64::from_polar(1.0, -2.0 * std::f64::consts::FRAC_PI_3),
            C64::from_polar(1.0, 2.0 * std::f64::consts::FRAC_PI_3),
        ),
    ] {
        let state = ClassicalState::new(w1, w2);
        out.push(FixedPoint {
            class,
            state,
            energy: classical_energy(&state, params),
            degenerate: false,
        });
    }
    Ok(out)
}

/// Number of equilibrium points with purely real chart coordinates:
/// distinct real roots of the twin quartic plus the two single-depleted-
/// well states.
pub fn real_equilibrium_count(chi: f64, mu: f64) -> usize {
    let quartic = twin_quartic_coeffs(chi, mu);
    group_roots(&poly::real_roots(&quartic, ROOT_IM_TOL)).len() + 2
}

/// Linear stability outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
    /// At least one stability exponent vanishes within tolerance; the
    /// linearization is inconclusive (folds, crossings, symmetry lines).
    Marginal,
}

impl Stability {
    /// Map-file encoding: 1 stable, 0 unstable, 2 marginal.
    pub fn code(self) -> i8 {
        match self {
            Stability::Stable => 1,
            Stability::Unstable => 0,
            Stability::Marginal => 2,
        }
    }
}

/// Eigenvalue data backing a stability verdict.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    /// The four eigenvalues of the linearized flow.
    pub eigenvalues: Vec<C64>,
    /// Squared exponents `lambda^2` when a closed form was used; the four
    /// eigenvalues are the two square-root pairs of these.
    pub lambda_sq: Option<[C64; 2]>,
    pub verdict: Stability,
}

const MARGINAL_TOL: f64 = 1e-9;
const REAL_PART_TOL: f64 = 1e-7;

fn verdict_from_lambda_sq(pair: [C64; 2], omega: f64) -> Stability {
    let om2 = omega * omega;
    let mut any_zero = false;
    for z in pair {
        let zeta = z / om2;
        if zeta.norm() < MARGINAL_TOL {
            any_zero = true;
            continue;
        }
        let tol = MARGINAL_TOL * zeta.norm().max(1.0);
        // Oscillatory iff lambda^2 is real and negative.
        if zeta.im.abs() > tol || zeta.re > tol {
            return Stability::Unstable;
        }
    }
    if any_zero {
        Stability::Marginal
    } else {
        Stability::Stable
    }
}

fn verdict_from_eigenvalues(eigs: &[C64], omega: f64) -> Stability {
    let max_abs = eigs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let max_re = eigs.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    if max_re > REAL_PART_TOL * omega.abs().max(max_abs) {
        return Stability::Unstable;
    }
    let min_abs = eigs.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    if min_abs * min_abs < MARGINAL_TOL * omega * omega {
        Stability::Marginal
    } else {
        Stability::Stable
    }
}

fn report_from_lambda_sq(pair: [C64; 2], omega: f64) -> StabilityReport {
    let mut eigenvalues = Vec::with_capacity(4);
    for z in pair {
        let root = z.sqrt();
        eigenvalues.push(root);
        eigenvalues.push(-root);
    }
    StabilityReport {
        verdict: verdict_from_lambda_sq(pair, omega),
        eigenvalues,
        lambda_sq: Some(pair),
    }
}

/// Closed-form squared stability exponents, available for the
/// parameter-independent equilibria (`s1`, the single depleted wells and
/// the vortices). The roaming twin roots `s2`/`s3`/`s4` have no tractable
/// closed form; use [`stability_numeric`] for them.
pub fn stability_closed_form(
    class: FixedPointClass,
    params: &ModelParams,
) -> Result<StabilityReport> {
    let (chi, mu) = (params.chi, params.mu);
    let om2 = params.omega * params.omega;
    let pair = match class {
        FixedPointClass::S1 => {
            // Doubly degenerate exponent; sign flips at chi = 9/4 + mu.
            let l2 = om2 / 3.0 * (3.0 + 4.0 * mu) * (4.0 * chi - 9.0 - 4.0 * mu);
            [C64::new(l2, 0.0), C64::new(l2, 0.0)]
        }
        FixedPointClass::Sdw1 | FixedPointClass::Sdw2 => {
            let t = 9.0 + 4.0 * mu * (10.0 + 11.0 * mu) + chi * (2.0 + chi);
            // The product of the two branches is proportional to
            // (chi - mu)^2 (chi (1 + 2 mu) - mu (4 + 7 mu)), so one
            // exponent vanishes exactly on the line chi = mu.
            let r = (9.0 + 16.0 * mu - chi)
                * (9.0
                    + 128.0 * mu.powi(3)
                    - 8.0 * mu * mu * (chi - 19.0)
                    + chi * (5.0 + 3.0 * chi - chi * chi)
                    + 16.0 * mu * (4.0 + chi + chi * chi));
            let s = C64::new(r, 0.0).sqrt();
            [
                (C64::new(-t, 0.0) + s) * (om2 / 2.0),
                (C64::new(-t, 0.0) - s) * (om2 / 2.0),
            ]
        }
        FixedPointClass::VortexPlus | FixedPointClass::VortexMinus => {
            let a = -104.0 * mu * mu - 16.0 * mu * (6.0 + chi) - 3.0 * (9.0 + 4.0 * chi);
            let r = 3.0 * (3.0 + 4.0 * mu) * (3.0 + 8.0 * mu).powi(2) * (9.0 + 4.0 * mu + 8.0 * chi);
            let s = C64::new(r, 0.0).sqrt();
            [
                (C64::new(a, 0.0) + s) * (om2 / 6.0),
                (C64::new(a, 0.0) - s) * (om2 / 6.0),
            ]
        }
        other => {
            return Err(Error::UnsupportedClass {
                class: other.label(),
            })
        }
    };
    Ok(report_from_lambda_sq(pair, params.omega))
}

/// Characteristic polynomial coefficients (highest power first) of a 4x4
/// matrix, by the Faddeev-LeVerrier recurrence.
fn characteristic_coeffs(a: &DMatrix<f64>) -> [f64; 5] {
    let n = 4;
    debug_assert_eq!((a.nrows(), a.ncols()), (n, n));
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut coeffs = [0.0f64; 5];
    coeffs[0] = 1.0;
    for k in 1..=n {
        m = a * m;
        let c = -m.trace() / k as f64;
        coeffs[k] = c;
        for i in 0..n {
            m[(i, i)] += c;
        }
    }
    coeffs
}

/// Eigenvalues of the linearized flow via its characteristic polynomial.
/// The spectrum of these Jacobians is symmetric under negation, which can
/// stall QR-type eigenvalue iterations; the polynomial route terminates
/// unconditionally.
fn flow_eigenvalues(jac: &DMatrix<f64>) -> Vec<C64> {
    poly::roots(&characteristic_coeffs(jac))
}

/// Jacobian of the flow in the real chart `(Re w1, Im w1, Re w2, Im w2)`,
/// by Richardson-extrapolated central differences.
pub fn jacobian(state: &ClassicalState, params: &ModelParams) -> DMatrix<f64> {
    let x0 = [state.w1.re, state.w1.im, state.w2.re, state.w2.im];
    let f = |x: [f64; 4]| -> [f64; 4] {
        let s = ClassicalState::from_parts(x[0], x[1], x[2], x[3]);
        let (d1, d2) = eom_rhs(&s, params);
        [d1.re, d1.im, d2.re, d2.im]
    };
    let scale = x0.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let h = 1e-3 * scale;
    let mut jac = DMatrix::<f64>::zeros(4, 4);
    for col in 0..4 {
        let diff = |step: f64| -> [f64; 4] {
            let mut plus = x0;
            let mut minus = x0;
            plus[col] += step;
            minus[col] -= step;
            let (fp, fm) = (f(plus), f(minus));
            let mut d = [0.0; 4];
            for i in 0..4 {
                d[i] = (fp[i] - fm[i]) / (2.0 * step);
            }
            d
        };
        let d_h = diff(h);
        let d_h2 = diff(0.5 * h);
        for row in 0..4 {
            jac[(row, col)] = (4.0 * d_h2[row] - d_h[row]) / 3.0;
        }
    }
    jac
}

/// Numeric stability from the eigenvalues of [`jacobian`]. Fails when the
/// supplied state is not actually stationary.
pub fn stability_numeric(state: &ClassicalState, params: &ModelParams) -> Result<StabilityReport> {
    let (d1, d2) = eom_rhs(state, params);
    let residual = d1.norm().hypot(d2.norm());
    let tolerance = 1e-8 * params.abs_omega() * (1.0 + state.norm_sum());
    if residual > tolerance {
        return Err(Error::NotAFixedPoint {
            residual,
            tolerance,
        });
    }
    let eigenvalues = flow_eigenvalues(&jacobian(state, params));
    Ok(StabilityReport {
        verdict: verdict_from_eigenvalues(&eigenvalues, params.omega),
        eigenvalues,
        lambda_sq: None,
    })
}

/// A catalog entry together with its stability analysis. Closed forms are
/// used where available, the finite-difference Jacobian otherwise.
#[derive(Debug, Clone)]
pub struct AnalyzedFixedPoint {
    pub point: FixedPoint,
    pub report: StabilityReport,
}

pub fn analyze_fixed_points(params: &ModelParams) -> Result<Vec<AnalyzedFixedPoint>> {
    find_fixed_points(params)?
        .into_iter()
        .map(|point| {
            let report = match point.class {
                FixedPointClass::S2 | FixedPointClass::S3 | FixedPointClass::S4 => {
                    if point.degenerate {
                        // A merged root pair carries an exactly vanishing
                        // exponent and is only located to square-root
                        // accuracy, so the residual gate would reject it.
                        StabilityReport {
                            eigenvalues: flow_eigenvalues(&jacobian(&point.state, params)),
                            lambda_sq: None,
                            verdict: Stability::Marginal,
                        }
                    } else {
                        stability_numeric(&point.state, params)?
                    }
                }
                other => stability_closed_form(other, params)?,
            };
            Ok(AnalyzedFixedPoint { point, report })
        })
        .collect()
}

/// Uniform sample grid over one parameter axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn new(start: f64, stop: f64, count: usize) -> Result<Self> {
        if count == 0 || !start.is_finite() || !stop.is_finite() {
            return Err(Error::InvalidParameter {
                name: "grid",
                message: format!("invalid grid {start}..{stop} with {count} points"),
            });
        }
        Ok(Self { start, stop, count })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        (0..self.count)
            .map(|i| {
                self.start + (self.stop - self.start) * i as f64 / (self.count - 1) as f64
            })
            .collect()
    }
}

/// One cell of the stability map. Verdict encoding: 1 stable, 0 unstable,
/// 2 marginal, -1 absent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityCell {
    pub chi: f64,
    pub mu: f64,
    pub n_real_roots: usize,
    pub s1: i8,
    pub s2: i8,
    pub s3: i8,
    pub s4: i8,
    pub sdw: i8,
    pub vortex: i8,
    /// A twin root sits within merge tolerance of another (fold or
    /// crossing); verdicts near such cells are tolerance-limited.
    pub degenerate: bool,
    /// Both collision rates carry the same sign, as any single trap
    /// geometry produces. Cells with mixed signs explore the model beyond
    /// that constraint.
    pub physical: bool,
}

/// Stability verdicts over a parameter grid; rows iterate `mu` (outer)
/// then `chi` (inner).
#[derive(Debug, Clone)]
pub struct StabilityMap {
    pub omega: f64,
    pub n_particles: u32,
    pub chi_grid: GridSpec,
    pub mu_grid: GridSpec,
    pub cells: Vec<StabilityCell>,
}

impl StabilityMap {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "chi,mu,n_real_roots,s1_stable,s2_stable,s3_exists,s3_stable,s4_exists,s4_stable,sdw_stable,vortex_stable"
        )?;
        for c in &self.cells {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                c.chi,
                c.mu,
                c.n_real_roots,
                c.s1,
                c.s2,
                (c.s3 != -1) as u8,
                c.s3,
                (c.s4 != -1) as u8,
                c.s4,
                c.sdw,
                c.vortex,
            )?;
        }
        Ok(())
    }
}

fn stability_cell(params: &ModelParams) -> Result<StabilityCell> {
    let mut cell = StabilityCell {
        chi: params.chi,
        mu: params.mu,
        n_real_roots: real_equilibrium_count(params.chi, params.mu),
        s1: -1,
        s2: -1,
        s3: -1,
        s4: -1,
        sdw: -1,
        vortex: -1,
        degenerate: false,
        physical: !params.has_unphysical_signs(),
    };
    for entry in analyze_fixed_points(params)? {
        let code = entry.report.verdict.code();
        cell.degenerate |= entry.point.degenerate;
        match entry.point.class {
            FixedPointClass::S1 => cell.s1 = code,
            FixedPointClass::S2 => cell.s2 = code,
            FixedPointClass::S3 => cell.s3 = code,
            FixedPointClass::S4 => cell.s4 = code,
            FixedPointClass::Sdw1 => cell.sdw = code,
            FixedPointClass::Sdw2 | FixedPointClass::VortexMinus => {}
            FixedPointClass::VortexPlus => cell.vortex = code,
        }
    }
    Ok(cell)
}

/// Scans the catalog over a `(chi, mu)` grid, in parallel over `mu` rows.
/// Fold-degenerate twin roots are reported marginal rather than passed to
/// the finite-difference Jacobian.
pub fn stability_map(
    omega: f64,
    n_particles: u32,
    chi_grid: GridSpec,
    mu_grid: GridSpec,
) -> Result<StabilityMap> {
    let chi_values = chi_grid.values();
    let rows: Result<Vec<Vec<StabilityCell>>> = mu_grid
        .values()
        .par_iter()
        .map(|&mu| {
            chi_values
                .iter()
                .map(|&chi| {
                    let params = ModelParams::new(omega, n_particles, chi, mu)?;
                    stability_cell(&params)
                })
                .collect()
        })
        .collect();
    Ok(StabilityMap {
        omega,
        n_particles,
        chi_grid,
        mu_grid,
        cells: rows?.into_iter().flatten().collect(),
    })
}
