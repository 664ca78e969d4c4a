//! Adaptive Dormand-Prince 5(4) integrator with dense output.
//!
//! This is the single time-stepping core of the crate: the mean-field
//! equations of motion (4 real components), the Schrödinger equation on the
//! Fock space (2 * dim real components) and the Poincaré event refinement
//! all run through it. The dense output is the standard quartic interpolant
//! of the 5(4) pair, so crossings can be located inside an accepted step
//! without re-evaluating the right-hand side.

/// Failure modes of the adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OdeError {
    /// The controller pushed the step below the representable resolution,
    /// typically because the solution blows up.
    StepSizeUnderflow { t: f64 },
    /// The step budget was exhausted before reaching `t_end`.
    MaxStepsExceeded { t: f64 },
}

impl std::fmt::Display for OdeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OdeError::StepSizeUnderflow { t } => {
                write!(f, "step size underflow at t = {t}")
            }
            OdeError::MaxStepsExceeded { t } => {
                write!(f, "maximum step count exceeded at t = {t}")
            }
        }
    }
}

impl std::error::Error for OdeError {}

#[derive(Debug, Clone, Copy)]
pub struct Dopri5Options {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// First trial step; estimated from the initial slope when `None`.
    pub h_initial: Option<f64>,
    pub h_max: Option<f64>,
    pub max_steps: usize,
}

impl Default for Dopri5Options {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            h_initial: None,
            h_max: None,
            max_steps: 20_000_000,
        }
    }
}

/// Whether to keep integrating after an accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Continue,
    Stop,
}

/// One accepted step with its dense-output coefficients.
pub struct DenseStep<'a> {
    pub t0: f64,
    pub t1: f64,
    y0: &'a [f64],
    y1: &'a [f64],
    rcont: &'a [Vec<f64>; 5],
}

impl DenseStep<'_> {
    pub fn h(&self) -> f64 {
        self.t1 - self.t0
    }

    pub fn y0(&self) -> &[f64] {
        self.y0
    }

    pub fn y1(&self) -> &[f64] {
        self.y1
    }

    /// Evaluates the quartic interpolant at `t` within `[t0, t1]`.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let theta = (t - self.t0) / self.h();
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = self.rcont;
        for i in 0..out.len() {
            out[i] = r1[i] + theta * (r2[i] + theta1 * (r3[i] + theta * (r4[i] + theta1 * r5[i])));
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.y0.len()];
        self.eval_into(t, &mut out);
        out
    }
}

/// Final state returned on normal completion (reaching `t_end` or a
/// callback stop).
#[derive(Debug, Clone)]
pub struct Completed {
    pub t: f64,
    pub y: Vec<f64>,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
}

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];

const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];

/// Difference between the 5th- and 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Dense-output weights of the 5(4) pair.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// Integrates `y' = rhs(t, y)` from `t0` to `t_end >= t0`, invoking
/// `on_step` after every accepted step. The callback may sample the dense
/// output and may stop the integration early.
pub fn integrate_adaptive<F, G>(
    mut rhs: F,
    t0: f64,
    y_start: &[f64],
    t_end: f64,
    opts: &Dopri5Options,
    mut on_step: G,
) -> Result<Completed, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    G: FnMut(&DenseStep<'_>) -> StepOutcome,
{
    let dim = y_start.len();
    let mut y = y_start.to_vec();
    let mut t = t0;
    if t_end <= t0 {
        return Ok(Completed {
            t,
            y,
            steps_accepted: 0,
            steps_rejected: 0,
        });
    }

    let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; dim]);
    let mut y_stage = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    let mut rcont: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; dim]);

    rhs(t, &y, &mut k[0]);
    let h_span = t_end - t0;
    let h_max = opts.h_max.unwrap_or(h_span).min(h_span);
    let mut h = opts
        .h_initial
        .unwrap_or_else(|| initial_step(&mut rhs, t, &y, &k[0].clone(), opts))
        .min(h_max);

    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut just_rejected = false;

    loop {
        if accepted + rejected >= opts.max_steps {
            return Err(OdeError::MaxStepsExceeded { t });
        }
        if h < 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(OdeError::StepSizeUnderflow { t });
        }
        let mut last = t + h >= t_end;
        if last {
            h = t_end - t;
        }

        // Stages 2..7 (stage 1 is the FSAL slot k[0]).
        for s in 0..6 {
            for i in 0..dim {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s + 1) {
                    acc += A[s][j] * kj[i];
                }
                y_stage[i] = y[i] + h * acc;
            }
            let ts = t + C[s] * h;
            let (head, tail) = k.split_at_mut(s + 1);
            rhs(ts, &y_stage, &mut tail[0]);
            let _ = head;
        }
        // 5th-order solution is the last stage argument (b row = a7 row).
        y_new.copy_from_slice(&y_stage);

        // Scaled error estimate.
        let mut err_sq = 0.0;
        let mut finite = true;
        for i in 0..dim {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += E[j] * kj[i];
            }
            e *= h;
            let sc = opts.abs_tol + opts.rel_tol * y[i].abs().max(y_new[i].abs());
            let r = e / sc;
            err_sq += r * r;
            finite &= y_new[i].is_finite();
        }
        let err = (err_sq / dim as f64).sqrt();

        if !finite || err > 1.0 {
            // Reject: shrink and retry.
            let fac = if finite {
                (0.9 * err.powf(-0.2)).max(0.2)
            } else {
                0.2
            };
            h *= fac;
            rejected += 1;
            just_rejected = true;
            continue;
        }

        // Dense-output coefficients for the accepted step.
        for i in 0..dim {
            let dy = y_new[i] - y[i];
            let bspl = h * k[0][i] - dy;
            rcont[0][i] = y[i];
            rcont[1][i] = dy;
            rcont[2][i] = bspl;
            rcont[3][i] = dy - h * k[6][i] - bspl;
            let mut dsum = 0.0;
            for (j, kj) in k.iter().enumerate() {
                dsum += D[j] * kj[i];
            }
            rcont[4][i] = h * dsum;
        }

        let t_new = if last { t_end } else { t + h };
        // Guard against round-off leaving a sliver of the interval.
        if t_new >= t_end {
            last = true;
        }
        let step = DenseStep {
            t0: t,
            t1: t_new,
            y0: &y,
            y1: &y_new,
            rcont: &rcont,
        };
        let outcome = on_step(&step);
        accepted += 1;
        t = t_new;
        std::mem::swap(&mut y, &mut y_new);
        k.swap(0, 6); // FSAL: slope at t_new is stage 7.

        if outcome == StepOutcome::Stop || last {
            return Ok(Completed {
                t,
                y,
                steps_accepted: accepted,
                steps_rejected: rejected,
            });
        }

        let facmax = if just_rejected { 1.0 } else { 5.0 };
        just_rejected = false;
        let fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, facmax);
        h = (h * fac).min(h_max);
    }
}

/// Cheap slope-based guess for the first trial step.
fn initial_step<F>(rhs: &mut F, t: f64, y: &[f64], f0: &[f64], opts: &Dopri5Options) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let dim = y.len() as f64;
    let sc =
        |yi: f64| opts.abs_tol + opts.rel_tol * yi.abs();
    let d0 = (y.iter().map(|&v| (v / sc(v)).powi(2)).sum::<f64>() / dim).sqrt();
    let d1 = (y
        .iter()
        .zip(f0)
        .map(|(&yv, &fv)| (fv / sc(yv)).powi(2))
        .sum::<f64>()
        / dim)
        .sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    // One explicit Euler probe to estimate the second derivative.
    let y1: Vec<f64> = y.iter().zip(f0).map(|(&yv, &fv)| yv + h0 * fv).collect();
    let mut f1 = vec![0.0; y.len()];
    rhs(t + h0, &y1, &mut f1);
    let d2 = (f1
        .iter()
        .zip(f0)
        .zip(y)
        .map(|((&a, &b), &yv)| ((a - b) / sc(yv)).powi(2))
        .sum::<f64>()
        / dim)
        .sqrt()
        / h0;
    let d_max = d1.max(d2);
    let h1 = if d_max <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d_max).powf(0.2)
    };
    (100.0 * h0).min(h1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oscillator(_t: f64, y: &[f64], dy: &mut [f64]) {
        dy[0] = y[1];
        dy[1] = -y[0];
    }

    #[test]
    fn harmonic_oscillator_accuracy() {
        let opts = Dopri5Options {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            ..Default::default()
        };
        let done = integrate_adaptive(oscillator, 0.0, &[1.0, 0.0], 20.0, &opts, |_| {
            StepOutcome::Continue
        })
        .unwrap();
        assert!((done.t - 20.0).abs() < 1e-14);
        assert!((done.y[0] - 20.0_f64.cos()).abs() < 1e-8);
        assert!((done.y[1] + 20.0_f64.sin()).abs() < 1e-8);
        assert!(done.steps_accepted > 10);
    }

    #[test]
    fn dense_output_interpolates_to_high_order() {
        let opts = Dopri5Options {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            ..Default::default()
        };
        let mut worst: f64 = 0.0;
        integrate_adaptive(oscillator, 0.0, &[1.0, 0.0], 10.0, &opts, |step| {
            for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let tm = step.t0 + frac * step.h();
                let y = step.eval(tm);
                worst = worst.max((y[0] - tm.cos()).abs());
            }
            StepOutcome::Continue
        })
        .unwrap();
        assert!(worst < 1e-9, "dense output error {worst}");
    }

    #[test]
    fn dense_output_matches_step_endpoints() {
        let opts = Dopri5Options::default();
        integrate_adaptive(oscillator, 0.0, &[1.0, 0.0], 3.0, &opts, |step| {
            let a = step.eval(step.t0);
            let b = step.eval(step.t1);
            assert!((a[0] - step.y0()[0]).abs() < 1e-15);
            assert!((b[0] - step.y1()[0]).abs() < 1e-12);
            StepOutcome::Continue
        })
        .unwrap();
    }

    #[test]
    fn exponential_decay_tolerance_scaling() {
        // Tighter tolerance must reduce the global error.
        let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0];
        let mut errs = Vec::new();
        for rel_tol in [1e-6, 1e-10] {
            let opts = Dopri5Options {
                rel_tol,
                abs_tol: rel_tol * 1e-2,
                ..Default::default()
            };
            let done =
                integrate_adaptive(rhs, 0.0, &[1.0], 5.0, &opts, |_| StepOutcome::Continue)
                    .unwrap();
            errs.push((done.y[0] - (-5.0_f64).exp()).abs());
        }
        assert!(errs[1] < errs[0] / 10.0);
    }

    #[test]
    fn callback_stop_ends_early() {
        let done = integrate_adaptive(
            oscillator,
            0.0,
            &[1.0, 0.0],
            50.0,
            &Dopri5Options::default(),
            |step| {
                if step.t1 > 1.0 {
                    StepOutcome::Stop
                } else {
                    StepOutcome::Continue
                }
            },
        )
        .unwrap();
        assert!(done.t > 1.0 && done.t < 50.0);
    }

    #[test]
    fn blowup_reports_underflow() {
        // y' = y^2 from y(0) = 1 blows up at t = 1.
        let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = y[0] * y[0];
        let res = integrate_adaptive(
            rhs,
            0.0,
            &[1.0],
            2.0,
            &Dopri5Options::default(),
            |_| StepOutcome::Continue,
        );
        match res {
            Err(OdeError::StepSizeUnderflow { t }) => assert!((t - 1.0).abs() < 0.05),
            other => panic!("expected step underflow, got {other:?}"),
        }
    }

    #[test]
    fn zero_span_is_a_no_op() {
        let done = integrate_adaptive(
            oscillator,
            1.0,
            &[0.5, 0.5],
            1.0,
            &Dopri5Options::default(),
            |_| StepOutcome::Continue,
        )
        .unwrap();
        assert_eq!(done.y, vec![0.5, 0.5]);
        assert_eq!(done.steps_accepted, 0);
    }
}
