//! Symmetric Fock basis of `N` bosons in three modes.

use crate::{Error, Result};

/// Ordered enumeration of the occupation states `|n1, n2, n3>` with
/// `n1 + n2 + n3 = N`.
///
/// States are ordered by `(n1, n2)` lexicographically with the largest
/// occupations first, so the basis starts at `|N, 0, 0>` and ends at
/// `|0, 0, N>`. For `N = 1` the three basis vectors line up with the
/// coherent-amplitude triple `(w1, w2, 1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FockBasis {
    n: u32,
    states: Vec<[u32; 3]>,
}

impl FockBasis {
    pub fn new(n: u32) -> Self {
        let mut states = Vec::with_capacity(Self::dimension_for(n));
        for n1 in (0..=n).rev() {
            for n2 in (0..=n - n1).rev() {
                states.push([n1, n2, n - n1 - n2]);
            }
        }
        Self { n, states }
    }

    /// `(N + 1)(N + 2) / 2`.
    pub fn dimension_for(n: u32) -> usize {
        ((n as usize + 1) * (n as usize + 2)) / 2
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn n_particles(&self) -> u32 {
        self.n
    }

    pub fn state(&self, index: usize) -> [u32; 3] {
        self.states[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u32; 3]> {
        self.states.iter()
    }

    /// Position of `|n1, n2, N - n1 - n2>` in the enumeration, in closed
    /// form.
    pub fn index_of(&self, n1: u32, n2: u32) -> Result<usize> {
        if n1 + n2 > self.n {
            return Err(Error::InvalidParameter {
                name: "occupations",
                message: format!(
                    "n1 + n2 = {} exceeds particle number {}",
                    n1 + n2,
                    self.n
                ),
            });
        }
        let m = (self.n - n1) as usize;
        Ok(m * (m + 1) / 2 + (m - n2 as usize))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_formula() {
        for n in 0..30 {
            let basis = FockBasis::new(n);
            assert_eq!(basis.dim(), ((n as usize + 1) * (n as usize + 2)) / 2);
        }
        assert_eq!(FockBasis::new(30).dim(), 496);
    }

    #[test]
    fn single_particle_order_matches_amplitude_triple() {
        let basis = FockBasis::new(1);
        assert_eq!(basis.state(0), [1, 0, 0]);
        assert_eq!(basis.state(1), [0, 1, 0]);
        assert_eq!(basis.state(2), [0, 0, 1]);
    }

    #[test]
    fn index_formula_matches_enumeration() {
        for n in [0, 1, 2, 5, 13, 30] {
            let basis = FockBasis::new(n);
            for (i, &[n1, n2, n3]) in basis.iter().enumerate() {
                assert_eq!(n1 + n2 + n3, n);
                assert_eq!(basis.index_of(n1, n2).unwrap(), i);
            }
        }
    }

    #[test]
    fn index_of_rejects_overfilled_occupations() {
        let basis = FockBasis::new(4);
        assert!(basis.index_of(3, 2).is_err());
    }

    #[test]
    fn states_are_unique_and_complete() {
        let n = 9;
        let basis = FockBasis::new(n);
        let mut seen = std::collections::HashSet::new();
        for s in basis.iter() {
            assert!(seen.insert(*s));
        }
        assert_eq!(seen.len(), basis.dim());
    }
}
