//! Exact quantum dynamics in the three-mode Fock space.
//!
//! States are amplitude vectors over [`FockBasis`]. The module provides
//! coherent-state preparation, Schroedinger propagation under a sparse
//! Hamiltonian, one-body expectation values (populations, hopping
//! coherences, circulation, twin-sphere projection) and the generalized
//! purity that measures how far a state has spread off the coherent-state
//! manifold. A basis change to the symmetric/antisymmetric combination of
//! the twin wells is included for diagnosing twin-pair depletion.

use crate::classical::{classical_energy, ClassicalState, GeneratorAverages};
use crate::model::{FockBasis, GeneratorSet, ModelParams, OperatorMatrix};
use crate::ode::{integrate_adaptive, Dopri5Options, OdeError, StepOutcome};
use crate::{Error, Result, C64};
use std::io::Write;
use std::sync::Arc;

fn ln_factorials(up_to: usize) -> Vec<f64> {
    let mut t = vec![0.0; up_to + 1];
    for i in 1..=up_to {
        t[i] = t[i - 1] + (i as f64).ln();
    }
    t
}

/// Normalized amplitude vector over a shared Fock basis.
#[derive(Debug, Clone)]
pub struct QuantumState {
    basis: Arc<FockBasis>,
    amplitudes: Vec<C64>,
}

impl QuantumState {
    pub fn new(basis: Arc<FockBasis>, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                got: amplitudes.len(),
            });
        }
        Ok(Self { basis, amplitudes })
    }

    /// Projection of the product coherent configuration `(w1, w2)` onto the
    /// fixed-total-number sector: amplitudes proportional to
    /// `sqrt(N! / (n1! n2! n3!)) w1^n1 w2^n2`. Normalized by construction.
    pub fn coherent(basis: Arc<FockBasis>, w1: C64, w2: C64) -> Self {
        let n = basis.n_particles() as usize;
        let lnf = ln_factorials(n);
        let d = 1.0 + w1.norm_sqr() + w2.norm_sqr();
        let (ln_r1, arg1) = (w1.norm().ln(), w1.arg());
        let (ln_r2, arg2) = (w2.norm().ln(), w2.arg());
        let amplitudes = basis
            .iter()
            .map(|&[n1, n2, n3]| {
                let pow = |count: u32, ln_r: f64| {
                    if count == 0 {
                        0.0
                    } else {
                        count as f64 * ln_r
                    }
                };
                let ln_mag = 0.5
                    * (lnf[n] - lnf[n1 as usize] - lnf[n2 as usize] - lnf[n3 as usize])
                    + pow(n1, ln_r1)
                    + pow(n2, ln_r2)
                    - 0.5 * n as f64 * d.ln();
                C64::from_polar(ln_mag.exp(), n1 as f64 * arg1 + n2 as f64 * arg2)
            })
            .collect();
        Self { basis, amplitudes }
    }

    /// Single occupation-number state `|n1, n2, n3>`.
    pub fn from_fock(basis: Arc<FockBasis>, occ: [u32; 3]) -> Result<Self> {
        let idx = if occ.iter().sum::<u32>() == basis.n_particles() {
            basis.index_of(occ[0], occ[1])?
        } else {
            return Err(Error::InvalidParameter {
                name: "occ",
                message: format!(
                    "occupations {occ:?} sum to {}, basis holds {} particles",
                    occ.iter().sum::<u32>(),
                    basis.n_particles()
                ),
            });
        };
        let mut amplitudes = vec![C64::new(0.0, 0.0); basis.dim()];
        amplitudes[idx] = C64::new(1.0, 0.0);
        Ok(Self { basis, amplitudes })
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn n_particles(&self) -> u32 {
        self.basis.n_particles()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            for c in &mut self.amplitudes {
                *c /= n;
            }
        }
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &QuantumState) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Real part of `<psi| op |psi>`; the state is not renormalized.
    pub fn expectation(&self, op: &OperatorMatrix) -> Result<f64> {
        if op.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: op.dim(),
            });
        }
        Ok(op.expectation(&self.amplitudes).re)
    }

    /// One-body matrix `B[a][b] = <a_a^dagger a_b>`, computed directly from
    /// the amplitudes by single-hop sums. Every generator expectation is a
    /// linear combination of these nine entries.
    pub fn one_body_matrix(&self) -> [[C64; 3]; 3] {
        let mut b = [[C64::new(0.0, 0.0); 3]; 3];
        for (idx, &occ) in self.basis.iter().enumerate() {
            let c = self.amplitudes[idx];
            if c == C64::new(0.0, 0.0) {
                continue;
            }
            for a in 0..3 {
                b[a][a] += c.norm_sqr() * occ[a] as f64;
            }
            // Off-diagonals: <m| a_a^dag a_b |occ> with m = occ - e_b + e_a.
            for a in 0..3 {
                for bb in 0..3 {
                    if a == bb || occ[bb] == 0 {
                        continue;
                    }
                    let mut m = occ;
                    m[bb] -= 1;
                    m[a] += 1;
                    let target = self.basis.index_of(m[0], m[1]).expect("in-sector hop");
                    let amp = (occ[bb] as f64 * (occ[a] + 1) as f64).sqrt();
                    b[a][bb] += self.amplitudes[target].conj() * c * amp;
                }
            }
        }
        b
    }

    /// Per-particle generator averages, the quantum counterpart of the
    /// mean-field [`GeneratorAverages`].
    pub fn generator_averages(&self) -> GeneratorAverages {
        let b = self.one_body_matrix();
        let n = self.n_particles() as f64;
        let populations = [
            b[0][0].re / n,
            b[1][1].re / n,
            b[2][2].re / n,
        ];
        // Hop pairings (k, partner): (1,3), (2,1), (3,2) in 1-based labels.
        let pairs = [(0usize, 2usize), (1, 0), (2, 1)];
        let mut p = [0.0; 3];
        let mut j = [0.0; 3];
        for (idx, &(k, pj)) in pairs.iter().enumerate() {
            p[idx] = 2.0 * b[k][pj].re / n;
            j[idx] = -2.0 * b[k][pj].im / n;
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
}

/// Generalized purity: the coherent-state manifold is exactly the level set
/// where this equals 1, and spreading off the manifold lowers it.
///
/// With total expectation values of the eight su(3) generators,
/// `(9 / N^2) [ <Q1>^2 / 3 + <Q2>^2 / 4 + sum_j (<P_j>^2 + <J_j>^2) / 12 ]`.
pub fn purity(state: &QuantumState) -> f64 {
    let g = state.generator_averages();
    let n = state.n_particles() as f64;
    let q1 = n * g.q1;
    let q2 = n * g.q2;
    let mut sum = q1 * q1 / 3.0 + q2 * q2 / 4.0;
    for k in 0..3 {
        let (p, j) = (n * g.p[k], n * g.j[k]);
        sum += (p * p + j * j) / 12.0;
    }
    9.0 / (n * n) * sum
}

/// Snapshot of the observables tracked along a quantum trajectory.
/// `populations`, `js` and `energy` are totals; `iz` and `b3_occupation`
/// are per-particle fractions; `p` and `j` are per-particle averages.
#[derive(Debug, Clone, Copy)]
pub struct ExpectationSet {
    pub time: f64,
    pub populations: [f64; 3],
    pub q1: f64,
    pub q2: f64,
    pub p: [f64; 3],
    pub j: [f64; 3],
    pub js: f64,
    /// Twin-sphere vertical coordinate `2 <S_z> / N`, in `[-1, 1]`.
    pub iz: f64,
    /// Fraction of particles in the antisymmetric twin combination.
    pub b3_occupation: f64,
    pub purity: f64,
    pub energy: f64,
}

/// Evaluates the tracked observables on a (normalized) state.
pub fn expectations(state: &QuantumState, h: &OperatorMatrix, time: f64) -> Result<ExpectationSet> {
    let g = state.generator_averages();
    let n = state.n_particles() as f64;
    Ok(ExpectationSet {
        time,
        populations: [
            n * g.populations[0],
            n * g.populations[1],
            n * g.populations[2],
        ],
        q1: g.q1,
        q2: g.q2,
        p: g.p,
        j: g.j,
        js: n * g.js,
        iz: g.iz(),
        b3_occupation: g.b3(),
        purity: purity(state),
        energy: state.expectation(h)?,
    })
}

/// Options for [`propagate`].
#[derive(Debug, Clone, Copy)]
pub struct PropagateOptions {
    pub t_end: f64,
    pub sample_dt: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl PropagateOptions {
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

/// Sampled Schroedinger evolution.
#[derive(Debug, Clone)]
pub struct QuantumTrajectory {
    pub samples: Vec<ExpectationSet>,
    pub final_state: QuantumState,
    /// Largest deviation of the state norm from 1 over the samples.
    pub max_norm_drift: f64,
    /// Largest relative drift of `<H>` over the samples.
    pub max_energy_drift: f64,
    pub converged: bool,
}

impl QuantumTrajectory {
    /// Writes the sampled observables as CSV. Populations, `js` and
    /// `energy` are totals; `iz` and `b3` are fractions.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,n1,n2,n3,iz,js,purity,b3,energy")?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                s.time,
                s.populations[0],
                s.populations[1],
                s.populations[2],
                s.iz,
                s.js,
                s.purity,
                s.b3_occupation,
                s.energy,
            )?;
        }
        Ok(())
    }
}

/// Integrates `i dpsi/dt = H psi` from `state0`, sampling the tracked
/// observables on the `sample_dt` grid.
///
/// The Hamiltonian must be Hermitian; the initial state must be normalized
/// (within 1e-6, it is renormalized exactly before integrating). Unitarity
/// is monitored rather than enforced: samples are renormalized for
/// observable evaluation and the worst drift is reported.
pub fn propagate(
    state0: &QuantumState,
    h: &OperatorMatrix,
    opts: &PropagateOptions,
) -> Result<QuantumTrajectory> {
    if h.dim() != state0.dim() {
        return Err(Error::DimensionMismatch {
            expected: state0.dim(),
            got: h.dim(),
        });
    }
    if !(opts.t_end > 0.0) || !(opts.sample_dt > 0.0) {
        return Err(Error::InvalidParameter {
            name: "t_end/sample_dt",
            message: format!("must be positive, got {} and {}", opts.t_end, opts.sample_dt),
        });
    }
    let defect = h.hermiticity_defect();
    if defect > 1e-12 * h.max_abs_entry().max(1.0) {
        return Err(Error::NotHermitian { defect });
    }
    let norm0 = state0.norm();
    if (norm0 - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidParameter {
            name: "state0",
            message: format!("initial state norm {norm0} is not 1"),
        });
    }

    let dim = state0.dim();
    let mut psi0 = state0.clone();
    psi0.normalize();
    // Real layout: y[0..dim] holds the real parts, y[dim..] the imaginary.
    let mut y0 = vec![0.0; 2 * dim];
    for (i, c) in psi0.amplitudes.iter().enumerate() {
        y0[i] = c.re;
        y0[dim + i] = c.im;
    }

    let e0 = psi0.expectation(h)?;
    let energy_scale = e0.abs().max(h.max_abs_entry());
    let first = expectations(&psi0, h, 0.0)?;
    let mut traj = QuantumTrajectory {
        samples: vec![first],
        final_state: psi0.clone(),
        max_norm_drift: 0.0,
        max_energy_drift: 0.0,
        converged: true,
    };

    let mut c_buf = vec![C64::new(0.0, 0.0); dim];
    let mut hc_buf = vec![C64::new(0.0, 0.0); dim];
    let rhs = move |_t: f64, y: &[f64], dy: &mut [f64]| {
        for i in 0..dim {
            c_buf[i] = C64::new(y[i], y[dim + i]);
        }
        h.matvec_into(&c_buf, &mut hc_buf);
        // -i (u + iv) = v - iu
        for i in 0..dim {
            dy[i] = hc_buf[i].im;
            dy[dim + i] = -hc_buf[i].re;
        }
    };

    let ode_opts = Dopri5Options {
        rel_tol: opts.rel_tol,
        abs_tol: opts.abs_tol,
        ..Default::default()
    };
    let t_eps = 1e-12 * opts.t_end.max(1.0);
    let mut next_sample = 1usize;
    let mut sample_buf = vec![0.0; 2 * dim];
    let mut defer: Result<()> = Ok(());

    let res = integrate_adaptive(rhs, 0.0, &y0, opts.t_end, &ode_opts, |step| {
        loop {
            let t_k = next_sample as f64 * opts.sample_dt;
            if t_k > step.t1 + t_eps {
                break;
            }
            step.eval_into(t_k.clamp(step.t0, step.t1), &mut sample_buf);
            let amps: Vec<C64> = (0..dim)
                .map(|i| C64::new(sample_buf[i], sample_buf[dim + i]))
                .collect();
            let mut psi = QuantumState {
                basis: psi0.basis.clone(),
                amplitudes: amps,
            };
            traj.max_norm_drift = traj.max_norm_drift.max((psi.norm() - 1.0).abs());
            psi.normalize();
            match expectations(&psi, h, t_k) {
                Ok(s) => {
                    traj.max_energy_drift = traj
                        .max_energy_drift
                        .max((s.energy - e0).abs() / energy_scale);
                    traj.samples.push(s);
                }
                Err(e) => {
                    defer = Err(e);
                    return StepOutcome::Stop;
                }
            }
            next_sample += 1;
        }
        StepOutcome::Continue
    });

    defer?;
    let done = match res {
        Ok(done) => done,
        Err(OdeError::StepSizeUnderflow { t }) => {
            return Err(Error::NonConverged {
                what: "quantum propagation",
                detail: format!("step size underflow at t = {t}"),
            })
        }
        Err(OdeError::MaxStepsExceeded { t }) => {
            return Err(Error::NonConverged {
                what: "quantum propagation",
                detail: format!("step budget exhausted at t = {t}"),
            })
        }
    };

    let amps: Vec<C64> = (0..dim)
        .map(|i| C64::new(done.y[i], done.y[dim + i]))
        .collect();
    let mut last = QuantumState {
        basis: psi0.basis.clone(),
        amplitudes: amps,
    };
    traj.max_norm_drift = traj.max_norm_drift.max((last.norm() - 1.0).abs());
    last.normalize();
    traj.final_state = last;
    traj.converged = traj.max_norm_drift < 1e-8 && traj.max_energy_drift < 1e-8;
    Ok(traj)
}

/// Orthogonal change of basis from the well modes `(a1, a2, a3)` to the
/// twin-adapted modes `(b1, a3, b3)` with `b1 = (a1 + a2)/sqrt(2)` the
/// symmetric and `b3 = (a1 - a2)/sqrt(2)` the antisymmetric combination.
///
/// Rows are indexed by the occupation triple `(m1, n3, m3)` of
/// `(b1, a3, b3)` in the same [`FockBasis`] enumeration. Matrix elements
/// with `n1 + n2 <= 60` are evaluated by exact integer sums; beyond that a
/// floating-point fallback is used and alternating-sum cancellation limits
/// the accuracy.
pub struct TwinBasisTransform {
    basis: Arc<FockBasis>,
    matrix: OperatorMatrix,
}

impl TwinBasisTransform {
    pub fn new(basis: Arc<FockBasis>) -> Self {
        let n = basis.n_particles() as usize;
        let lnf = ln_factorials(n);
        let ln2 = std::f64::consts::LN_2;
        let mut triplets = Vec::new();
        for (col, &[n1, n2, n3]) in basis.iter().enumerate() {
            let m_total = n1 + n2;
            for m1 in 0..=m_total {
                let m3 = m_total - m1;
                let sum = binomial_convolution(n1, n2, m1);
                if sum == 0.0 {
                    continue;
                }
                let ln_pref = 0.5
                    * (lnf[m1 as usize] + lnf[m3 as usize]
                        - lnf[n1 as usize]
                        - lnf[n2 as usize])
                    - 0.5 * m_total as f64 * ln2;
                let row = basis.index_of(m1, n3).expect("same total occupation");
                triplets.push((row, col, C64::new(sum * ln_pref.exp(), 0.0)));
            }
        }
        let matrix = OperatorMatrix::from_triplets(basis.dim(), triplets);
        Self { basis, matrix }
    }

    pub fn matrix(&self) -> &OperatorMatrix {
        &self.matrix
    }

    /// Re-expresses a state over the twin-adapted modes.
    pub fn apply(&self, state: &QuantumState) -> Result<QuantumState> {
        if state.dim() != self.basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.basis.dim(),
                got: state.dim(),
            });
        }
        Ok(QuantumState {
            basis: self.basis.clone(),
            amplitudes: self.matrix.matvec(&state.amplitudes),
        })
    }
}

/// `sum_{i + k = m1} C(n1, i) C(n2, k) (-1)^(n2 - k)`, the coefficient of
/// an `(m1, m3)` split arising from expanding the binomials of the basis
/// change. Exact integer arithmetic while it fits.
fn binomial_convolution(n1: u32, n2: u32, m1: u32) -> f64 {
    let lo = m1.saturating_sub(n2);
    let hi = m1.min(n1);
    if lo > hi {
        return 0.0;
    }
    if n1 + n2 <= 60 {
        let mut acc: i128 = 0;
        for i in lo..=hi {
            let k = m1 - i;
            let sign = if (n2 - k) % 2 == 0 { 1 } else { -1 };
            acc += sign * binomial_i128(n1, i) * binomial_i128(n2, k);
        }
        acc as f64
    } else {
        let lnf = ln_factorials((n1 + n2) as usize);
        let ln_binom = |n: u32, k: u32| lnf[n as usize] - lnf[k as usize] - lnf[(n - k) as usize];
        let mut acc = 0.0;
        for i in lo..=hi {
            let k = m1 - i;
            let sign = if (n2 - k) % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * (ln_binom(n1, i) + ln_binom(n2, k)).exp();
        }
        acc
    }
}

fn binomial_i128(n: u32, k: u32) -> i128 {
    let k = k.min(n - k);
    let mut acc: i128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as i128 / (i + 1) as i128;
    }
    acc
}

/// Expected total energy of the coherent configuration `(w1, w2)` under
/// the exact Hamiltonian, which coincides with `N` times the mean-field
/// energy per particle.
pub fn coherent_energy(state: &ClassicalState, params: &ModelParams) -> f64 {
    params.n_particles as f64 * classical_energy(state, params)
}

/// Convenience bundle of the operator matrices most evolutions need.
pub struct QuantumSystem {
    pub basis: Arc<FockBasis>,
    pub hamiltonian: OperatorMatrix,
    pub generators: GeneratorSet,
}

impl QuantumSystem {
    pub fn new(params: &ModelParams) -> Self {
        let basis = Arc::new(FockBasis::new(params.n_particles));
        let hamiltonian = crate::model::build_hamiltonian(params, &basis);
        let generators = crate::model::generator_matrices(&basis);
        Self {
            basis,
            hamiltonian,
            generators,
        }
    }
}
