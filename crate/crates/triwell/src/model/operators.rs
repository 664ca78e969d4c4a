//! Sparse second-quantized operators on the three-mode Fock space.
//!
//! All matrices are stored in compressed sparse row form with entries sorted
//! by `(row, col)`, so identical construction inputs give identical entry
//! order and bit-identical exports.

use super::fock::FockBasis;
use super::params::ModelParams;
use crate::{Error, Result, C64};
use nalgebra::DMatrix;
use std::io::Write;

/// Sparse complex matrix over the Fock basis (CSR storage).
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl OperatorMatrix {
    /// Builds from `(row, col, value)` triplets: duplicates are summed,
    /// exact zeros dropped, entries sorted by `(row, col)`.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut rows = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) out of bounds");
            if let (Some(&lr), Some(&lc)) = (rows.last(), cols.last()) {
                if lr == r && lc == c {
                    *vals.last_mut().unwrap() += v;
                    continue;
                }
            }
            rows.push(r);
            cols.push(c);
            vals.push(v);
        }
        // Drop entries that cancelled to exactly zero, then count rows.
        let mut k = 0;
        for i in 0..vals.len() {
            if vals[i] != C64::new(0.0, 0.0) {
                rows[k] = rows[i];
                cols[k] = cols[i];
                vals[k] = vals[i];
                k += 1;
            }
        }
        rows.truncate(k);
        cols.truncate(k);
        vals.truncate(k);
        for &r in &rows {
            row_ptr[r + 1] += 1;
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_triplets(dim, Vec::new())
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_triplets(
            dim,
            (0..dim).map(|i| (i, i, C64::new(1.0, 0.0))).collect(),
        )
    }

    /// Diagonal matrix from real values.
    pub fn diagonal(values: &[f64]) -> Self {
        Self::from_triplets(
            values.len(),
            values
                .iter()
                .enumerate()
                .map(|(i, &v)| (i, i, C64::new(v, 0.0)))
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn max_row_nnz(&self) -> usize {
        (0..self.dim)
            .map(|r| self.row_ptr[r + 1] - self.row_ptr[r])
            .max()
            .unwrap_or(0)
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |i| (r, self.cols[i], self.vals[i]))
        })
    }

    pub fn matvec_into(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        for r in 0..self.dim {
            let mut acc = C64::new(0.0, 0.0);
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[i] * x[self.cols[i]];
            }
            y[r] = acc;
        }
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.dim];
        self.matvec_into(x, &mut y);
        y
    }

    /// `<x| A |x>` (no normalization applied).
    pub fn expectation(&self, x: &[C64]) -> C64 {
        assert_eq!(x.len(), self.dim);
        let mut acc = C64::new(0.0, 0.0);
        for r in 0..self.dim {
            let mut row = C64::new(0.0, 0.0);
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                row += self.vals[i] * x[self.cols[i]];
            }
            acc += x[r].conj() * row;
        }
        acc
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self::from_triplets(
            self.dim,
            self.triplets().map(|(r, c, v)| (r, c, v * factor)).collect(),
        )
    }

    /// Left multiplication by a real diagonal matrix: `diag(d) * A`.
    pub fn scale_rows(&self, diag: &[f64]) -> Self {
        assert_eq!(diag.len(), self.dim);
        Self::from_triplets(
            self.dim,
            self.triplets()
                .map(|(r, c, v)| (r, c, v * diag[r]))
                .collect(),
        )
    }

    /// Sum of scaled terms; all operands must share the dimension.
    pub fn linear_combination(terms: &[(C64, &OperatorMatrix)]) -> Result<Self> {
        let dim = match terms.first() {
            Some((_, m)) => m.dim,
            None => return Ok(Self::zeros(0)),
        };
        let mut triplets = Vec::new();
        for (c, m) in terms {
            if m.dim != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: m.dim,
                });
            }
            triplets.extend(m.triplets().map(|(r, cc, v)| (r, cc, *c * v)));
        }
        Ok(Self::from_triplets(dim, triplets))
    }

    pub fn add(&self, other: &OperatorMatrix) -> Result<Self> {
        Self::linear_combination(&[(C64::new(1.0, 0.0), self), (C64::new(1.0, 0.0), other)])
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    /// Largest entry magnitude of `A - A^dagger`.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut defect = 0.0f64;
        for (r, c, v) in self.triplets() {
            let vt = self.entry(c, r);
            defect = defect.max((v - vt.conj()).norm());
        }
        // Entries of A^dagger with no partner in A.
        for (r, c, v) in self.triplets() {
            if self.entry(c, r) == C64::new(0.0, 0.0) && r != c {
                defect = defect.max(v.norm());
            }
        }
        defect
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.vals.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    fn entry(&self, r: usize, c: usize) -> C64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[range.clone()].binary_search(&c) {
            Ok(i) => self.vals[range.start + i],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    /// Writes the coordinate-list text form: one `row col re im` line per
    /// stored entry, in storage order.
    pub fn write_coo<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (r, c, v) in self.triplets() {
            writeln!(w, "{} {} {} {}", r, c, v.re, v.im)?;
        }
        Ok(())
    }
}

/// For mode `k` (0-based), the partner index pairing the ladder operators in
/// the shift and tunneling generators: modes pair as (1,3), (2,1), (3,2) in
/// 1-based labels.
fn partner(k: usize) -> usize {
    // 1-based rule j = ((k + 1) mod 3) + 1 translated to 0-based indices.
    [2, 0, 1][k]
}

/// Matrix of the single-hop operator `a_dst^dagger a_src` (`dst != src`).
fn hop_matrix(basis: &FockBasis, dst: usize, src: usize) -> OperatorMatrix {
    assert_ne!(dst, src);
    let mut triplets = Vec::new();
    for (i, &occ) in basis.iter().enumerate() {
        if occ[src] == 0 {
            continue;
        }
        let mut to = occ;
        to[src] -= 1;
        to[dst] += 1;
        let j = basis.index_of(to[0], to[1]).expect("hop stays in basis");
        let amp = ((occ[src] as f64) * (to[dst] as f64)).sqrt();
        triplets.push((j, i, C64::new(amp, 0.0)));
    }
    OperatorMatrix::from_triplets(basis.dim(), triplets)
}

/// The su(3) generator matrices used by the diagnostics: the two population
/// imbalances `Q1 = (n1 - n2)/2` and `Q2 = (n1 + n2 - 2 n3)/3`, the
/// tunneling quadratures `P_k` and currents `J_k`, and the total current
/// `J_S = J_1 + J_2 + J_3`.
#[derive(Debug, Clone)]
pub struct GeneratorSet {
    pub q1: OperatorMatrix,
    pub q2: OperatorMatrix,
    pub p: [OperatorMatrix; 3],
    pub j: [OperatorMatrix; 3],
    pub js: OperatorMatrix,
}

pub fn generator_matrices(basis: &FockBasis) -> GeneratorSet {
    let q1: Vec<f64> = basis
        .iter()
        .map(|&[n1, n2, _]| (n1 as f64 - n2 as f64) / 2.0)
        .collect();
    let q2: Vec<f64> = basis
        .iter()
        .map(|&[n1, n2, n3]| (n1 as f64 + n2 as f64 - 2.0 * n3 as f64) / 3.0)
        .collect();
    let one = C64::new(1.0, 0.0);
    let i_unit = C64::new(0.0, 1.0);
    let mut p = Vec::with_capacity(3);
    let mut j = Vec::with_capacity(3);
    for k in 0..3 {
        let pj = partner(k);
        let kj = hop_matrix(basis, k, pj); // a_k^dagger a_j
        let jk = hop_matrix(basis, pj, k); // a_j^dagger a_k
        p.push(OperatorMatrix::linear_combination(&[(one, &kj), (one, &jk)]).unwrap());
        j.push(OperatorMatrix::linear_combination(&[(i_unit, &kj), (-i_unit, &jk)]).unwrap());
    }
    let js =
        OperatorMatrix::linear_combination(&[(one, &j[0]), (one, &j[1]), (one, &j[2])]).unwrap();
    let [p0, p1, p2]: [OperatorMatrix; 3] = p.try_into().unwrap();
    let [j0, j1, j2]: [OperatorMatrix; 3] = j.try_into().unwrap();
    GeneratorSet {
        q1: OperatorMatrix::diagonal(&q1),
        q2: OperatorMatrix::diagonal(&q2),
        p: [p0, p1, p2],
        j: [j0, j1, j2],
        js,
    }
}

/// Many-body Hamiltonian in the Fock basis: symmetric pair tunneling at the
/// dressed rate `omega'`, on-site collisions `kappa`, and cross-well
/// collision corrections `-2 lambda` over ordered index triples with all
/// three modes distinct. Additive multiples of the identity (constant in the
/// particle number) are discarded.
pub fn build_hamiltonian(params: &ModelParams, basis: &FockBasis) -> OperatorMatrix {
    let omega_eff = params.omega_eff();
    let kappa = params.kappa();
    let lambda = params.lambda();
    let mut triplets = Vec::new();
    for (i, &occ) in basis.iter().enumerate() {
        let diag: f64 = kappa
            * occ
                .iter()
                .map(|&n| (n as f64) * (n as f64 - 1.0))
                .sum::<f64>();
        triplets.push((i, i, C64::new(diag, 0.0)));
        // Single hop src -> dst; the remaining mode is the collision
        // spectator whose population dresses the amplitude.
        for dst in 0..3 {
            for src in 0..3 {
                if dst == src || occ[src] == 0 {
                    continue;
                }
                let spect = 3 - dst - src;
                let mut to = occ;
                to[src] -= 1;
                to[dst] += 1;
                let j = basis.index_of(to[0], to[1]).expect("hop stays in basis");
                let amp = ((occ[src] as f64) * (to[dst] as f64)).sqrt()
                    * (omega_eff - 2.0 * lambda * occ[spect] as f64);
                triplets.push((j, i, C64::new(amp, 0.0)));
            }
        }
    }
    OperatorMatrix::from_triplets(basis.dim(), triplets)
}

/// The same Hamiltonian assembled from the generator set:
/// `(omega' - 2 lambda N / 3)(P1 + P2 + P3) + (kappa/2)(4 Q1^2 + 3 Q2^2)
///  + lambda [2 Q1 (P1 - P3) + Q2 (2 P2 - P1 - P3)]`.
/// Agrees with [`build_hamiltonian`] up to a multiple of the identity.
pub fn hamiltonian_from_generators(
    params: &ModelParams,
    basis: &FockBasis,
    gens: &GeneratorSet,
) -> OperatorMatrix {
    let n = basis.n_particles() as f64;
    let omega_eff = params.omega_eff();
    let kappa = params.kappa();
    let lambda = params.lambda();
    let one = C64::new(1.0, 0.0);

    let q1_diag: Vec<f64> = (0..basis.dim()).map(|i| gens.q1.entry(i, i).re).collect();
    let q2_diag: Vec<f64> = (0..basis.dim()).map(|i| gens.q2.entry(i, i).re).collect();
    let quad: Vec<f64> = q1_diag
        .iter()
        .zip(&q2_diag)
        .map(|(&a, &b)| 0.5 * kappa * (4.0 * a * a + 3.0 * b * b))
        .collect();

    let p_sum = OperatorMatrix::linear_combination(&[
        (one, &gens.p[0]),
        (one, &gens.p[1]),
        (one, &gens.p[2]),
    ])
    .unwrap();
    let p1_minus_p3 =
        OperatorMatrix::linear_combination(&[(one, &gens.p[0]), (-one, &gens.p[2])]).unwrap();
    let p_mix = OperatorMatrix::linear_combination(&[
        (C64::new(2.0, 0.0), &gens.p[1]),
        (-one, &gens.p[0]),
        (-one, &gens.p[2]),
    ])
    .unwrap();

    OperatorMatrix::linear_combination(&[
        (C64::new(omega_eff - 2.0 * lambda * n / 3.0, 0.0), &p_sum),
        (one, &OperatorMatrix::diagonal(&quad)),
        (
            C64::new(2.0 * lambda, 0.0),
            &p1_minus_p3.scale_rows(&q1_diag),
        ),
        (C64::new(lambda, 0.0), &p_mix.scale_rows(&q2_diag)),
    ])
    .unwrap()
}

/// Center-of-mass position, momentum and angular-momentum observables of the
/// in-plane motion, expressed through the generator set. The wells sit at
/// distance `q0` from the center; `epsilon` is the mode-overlap factor and
/// `d` the mode width. With `epsilon = 0` the momenta and the angular
/// momentum vanish identically.
#[derive(Debug, Clone)]
pub struct ObservableSet {
    pub x: OperatorMatrix,
    pub y: OperatorMatrix,
    pub px: OperatorMatrix,
    pub py: OperatorMatrix,
    pub lz: OperatorMatrix,
}

pub fn observable_matrices(
    basis: &FockBasis,
    q0: f64,
    d: f64,
    epsilon: f64,
) -> Result<ObservableSet> {
    if !(q0 > 0.0) || !(d > 0.0) {
        return Err(Error::InvalidParameter {
            name: "q0/d",
            message: format!("trap lengths must be positive, got ({q0}, {d})"),
        });
    }
    let gens = generator_matrices(basis);
    let sqrt3 = 3.0_f64.sqrt();
    let one = |x: f64| C64::new(x, 0.0);

    let x = OperatorMatrix::linear_combination(&[
        (one(-1.5 * q0), &gens.q2),
        (one(epsilon * q0 / 4.0), &gens.p[0]),
        (one(epsilon * q0 / 4.0), &gens.p[2]),
        (one(-epsilon * q0 / 2.0), &gens.p[1]),
    ])?;
    let y = OperatorMatrix::linear_combination(&[
        (one(sqrt3 * q0), &gens.q1),
        (one(sqrt3 * epsilon * q0 / 4.0), &gens.p[0]),
        (one(-sqrt3 * epsilon * q0 / 4.0), &gens.p[2]),
    ])?;
    let pscale = 3.0 * epsilon * q0 / (4.0 * d * d);
    let px = OperatorMatrix::linear_combination(&[
        (one(pscale), &gens.j[2]),
        (one(-pscale), &gens.j[0]),
    ])?;
    let pyscale = sqrt3 * epsilon * q0 / (4.0 * d * d);
    let py = OperatorMatrix::linear_combination(&[
        (one(pyscale), &gens.j[0]),
        (one(pyscale), &gens.j[2]),
        (one(-2.0 * pyscale), &gens.j[1]),
    ])?;
    let lz = gens.js.scaled(one(sqrt3 * epsilon * q0 * q0 / (4.0 * d * d)));
    Ok(ObservableSet { x, y, px, py, lz })
}
