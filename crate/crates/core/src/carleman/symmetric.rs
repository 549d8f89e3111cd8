//! Orthonormal basis of the symmetric tensor sector.
//!
//! Every lifted state `φ^{⊗k}` is invariant under permutation of its `k`
//! tensor slots, and the Carleman matrix commutes with those permutations
//! (its blocks are Kronecker sums). The trajectory therefore never leaves the
//! symmetric subspace, whose dimension at level `k` is `C(n+k-1, k)` instead
//! of `n^k`. Using the orthonormal basis
//!
//! ```text
//! e_o = (1/√m_o) Σ_{i ∈ orbit o} e_i,      m_o = k! / Π mult!
//! ```
//!
//! the restriction of `Aᵀ` is the transpose of the restriction of `A`, so the
//! Hermitian split and everything downstream can work on the reduced matrix.

/// Multiset orbits of one Carleman level in colex rank order.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricLevel {
    pub(crate) n: usize,
    pub(crate) order: usize,
    /// Sorted slot tuples, one per orbit.
    pub(crate) tuples: Vec<Vec<usize>>,
    /// Orbit sizes `m_o`.
    pub(crate) multiplicity: Vec<f64>,
    binom: Vec<Vec<usize>>,
}

impl SymmetricLevel {
    pub fn new(n: usize, order: usize) -> Self {
        assert!(n >= 1 && order >= 1);
        let top = n + order;
        let mut binom = vec![vec![0usize; order + 2]; top + 1];
        for row in binom.iter_mut() {
            row[0] = 1;
        }
        for m in 1..=top {
            for r in 1..=order + 1 {
                binom[m][r] = binom[m - 1][r - 1] + binom[m - 1][r];
            }
        }
        let count = binom[n + order - 1][order];
        let mut tuples = vec![Vec::new(); count];
        let mut multiplicity = vec![0.0; count];
        let mut current = vec![0usize; order];
        let mut level = Self {
            n,
            order,
            tuples: Vec::new(),
            multiplicity: Vec::new(),
            binom,
        };
        loop {
            let rank = level.rank_sorted(&current);
            multiplicity[rank] = orbit_size(&current);
            tuples[rank] = current.clone();
            // next non-decreasing tuple
            let mut pos = order;
            while pos > 0 && current[pos - 1] == n - 1 {
                pos -= 1;
            }
            if pos == 0 {
                break;
            }
            let v = current[pos - 1] + 1;
            for slot in current.iter_mut().skip(pos - 1) {
                *slot = v;
            }
        }
        level.tuples = tuples;
        level.multiplicity = multiplicity;
        level
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// Colex rank of a non-decreasing tuple.
    pub fn rank_sorted(&self, sorted: &[usize]) -> usize {
        sorted
            .iter()
            .enumerate()
            .map(|(t, &i)| self.binom[i + t][t + 1])
            .sum()
    }

    /// Orbit index of an arbitrary slot tuple.
    pub fn rank(&self, tuple: &[usize]) -> usize {
        let mut sorted = tuple.to_vec();
        sorted.sort_unstable();
        self.rank_sorted(&sorted)
    }

    /// Row-major position of a slot tuple in the full `n^k` space.
    pub fn full_index(&self, tuple: &[usize]) -> usize {
        tuple.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    pub fn tuple_of_full_index(&self, mut index: usize) -> Vec<usize> {
        let mut tuple = vec![0; self.order];
        for slot in tuple.iter_mut().rev() {
            *slot = index % self.n;
            index /= self.n;
        }
        tuple
    }
}

fn orbit_size(sorted: &[usize]) -> f64 {
    let mut size = factorial(sorted.len());
    let mut run = 1usize;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            size /= factorial(run);
            run = 1;
        }
    }
    size /= factorial(run);
    size
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}
