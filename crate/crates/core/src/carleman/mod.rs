//! Truncated Carleman embedding of `dφ/dt = F₁φ + F₂ φ⊗φ`.
//!
//! The lifted state stacks the tensor powers `Φ_k = φ^{⊗k}` for
//! `k = 1..K`. Their dynamics are linear:
//!
//! ```text
//! dΦ_k/dt = A_{k,k} Φ_k + A_{k,k+1} Φ_{k+1},
//! A_{k,l}  = Σ_{v=0}^{k-1} I^{⊗v} ⊗ F_{l-k+1} ⊗ I^{⊗(k-1-v)}
//! ```
//!
//! and truncation drops `A_{K,K+1}`, leaving a square block upper-bidiagonal
//! generator. The constant level `k = 0` is inert because `F₀ = 0` and is not
//! stored.
//!
//! Two coordinate systems are supported. [`CarlemanBasis::Full`] stores every
//! component of `φ^{⊗k}`; [`CarlemanBasis::Symmetric`] stores coordinates in
//! an orthonormal basis of the permutation-symmetric sector (see
//! [`symmetric`]), which holds the same trajectory in far fewer unknowns.

pub mod symmetric;

use crate::error::{Error, Result};
use crate::model::{FieldState, PolynomialSystem};
use crate::sparse::{kron_identity_pad, kron_vec, CsrMatrix};

pub use crate::sparse::kron;
use symmetric::SymmetricLevel;

/// Coordinates used for the lifted state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CarlemanBasis {
    /// All `n^k` components of each tensor power.
    Full,
    /// Orthonormal coordinates on the symmetric tensor sector.
    #[default]
    Symmetric,
}

impl CarlemanBasis {
    pub fn name(self) -> &'static str {
        match self {
            CarlemanBasis::Full => "full",
            CarlemanBasis::Symmetric => "symmetric",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "full" => Some(CarlemanBasis::Full),
            "symmetric" => Some(CarlemanBasis::Symmetric),
            _ => None,
        }
    }
}

/// Block layout of the lifted vector `[Φ₁; Φ₂; …; Φ_K]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CarlemanIndexMap {
    n: usize,
    order: usize,
    basis: CarlemanBasis,
    block_sizes: Vec<usize>,
    block_offsets: Vec<usize>,
    total_dim: usize,
}

impl CarlemanIndexMap {
    pub fn new(n: usize, order: usize, basis: CarlemanBasis) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidParameter {
                name: "K",
                reason: "truncation order must be at least 1".into(),
            });
        }
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "n",
                reason: "base dimension must be at least 1".into(),
            });
        }
        let block_sizes: Vec<usize> = (1..=order)
            .map(|k| match basis {
                CarlemanBasis::Full => n.pow(k as u32),
                CarlemanBasis::Symmetric => multiset_count(n, k),
            })
            .collect();
        let mut block_offsets = Vec::with_capacity(order);
        let mut acc = 0;
        for &s in &block_sizes {
            block_offsets.push(acc);
            acc += s;
        }
        Ok(Self {
            n,
            order,
            basis,
            block_sizes,
            block_offsets,
            total_dim: acc,
        })
    }

    pub fn base_dim(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn basis(&self) -> CarlemanBasis {
        self.basis
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    /// Size of block `k` (1-based).
    pub fn block_size(&self, k: usize) -> usize {
        self.block_sizes[k - 1]
    }

    /// Offset of block `k` (1-based) inside the lifted vector.
    pub fn block_offset(&self, k: usize) -> usize {
        self.block_offsets[k - 1]
    }

    pub fn block_range(&self, k: usize) -> std::ops::Range<usize> {
        let start = self.block_offset(k);
        start..start + self.block_size(k)
    }

    /// Builds `[φ; φ^{⊗2}; …; φ^{⊗K}]` in this map's coordinates.
    pub fn lift(&self, phi: &[f64]) -> Result<Vec<f64>> {
        if phi.len() != self.n {
            return Err(Error::DimensionMismatch {
                context: "lift",
                expected: self.n,
                found: phi.len(),
            });
        }
        let mut out = Vec::with_capacity(self.total_dim);
        match self.basis {
            CarlemanBasis::Full => {
                let mut power = phi.to_vec();
                out.extend_from_slice(&power);
                for _ in 2..=self.order {
                    power = kron_vec(&power, phi);
                    out.extend_from_slice(&power);
                }
            }
            CarlemanBasis::Symmetric => {
                for k in 1..=self.order {
                    let level = SymmetricLevel::new(self.n, k);
                    for (tuple, &m) in level.tuples.iter().zip(&level.multiplicity) {
                        let prod: f64 = tuple.iter().map(|&i| phi[i]).product();
                        out.push(m.sqrt() * prod);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Maps symmetric-sector coordinates to the full tensor layout.
    pub fn expand_to_full(&self, values: &[f64]) -> Result<Vec<f64>> {
        match self.basis {
            CarlemanBasis::Full => Ok(values.to_vec()),
            CarlemanBasis::Symmetric => {
                let full = CarlemanIndexMap::new(self.n, self.order, CarlemanBasis::Full)?;
                let mut out = vec![0.0; full.total_dim];
                for k in 1..=self.order {
                    let level = SymmetricLevel::new(self.n, k);
                    let src = &values[self.block_range(k)];
                    let dst = &mut out[full.block_range(k)];
                    for (i, slot) in dst.iter_mut().enumerate() {
                        let o = level.rank(&level.tuple_of_full_index(i));
                        *slot = src[o] / level.multiplicity[o].sqrt();
                    }
                }
                Ok(out)
            }
        }
    }
}

fn multiset_count(n: usize, k: usize) -> usize {
    // C(n+k-1, k)
    let mut num = 1u128;
    for i in 0..k {
        num = num * (n + i) as u128 / (i + 1) as u128;
    }
    num as usize
}

/// Truncated Carleman generator `A`.
#[derive(Clone, Debug)]
pub struct CarlemanOperator {
    pub index_map: CarlemanIndexMap,
    pub matrix: CsrMatrix<f64>,
}

impl CarlemanOperator {
    pub fn dim(&self) -> usize {
        self.index_map.total_dim()
    }

    /// Extracts the `(k, l)` block of the assembled matrix.
    pub fn block(&self, k: usize, l: usize) -> CsrMatrix<f64> {
        let rows = self.index_map.block_range(k);
        let cols = self.index_map.block_range(l);
        let triplets = rows
            .clone()
            .flat_map(|i| self.matrix.row(i).map(move |(j, v)| (i, j, v)))
            .filter(|&(_, j, _)| cols.contains(&j))
            .map(|(i, j, v)| (i - rows.start, j - cols.start, v))
            .collect();
        CsrMatrix::from_triplets(rows.len(), cols.len(), triplets)
    }

    /// `A_{k,k}`.
    pub fn diagonal_block(&self, k: usize) -> CsrMatrix<f64> {
        self.block(k, k)
    }

    /// `A_{k,k+1}`, for `k < K`.
    pub fn super_block(&self, k: usize) -> CsrMatrix<f64> {
        self.block(k, k + 1)
    }
}

/// Lifted state `Φ(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CarlemanState {
    pub time: f64,
    pub values: Vec<f64>,
    pub index_map: CarlemanIndexMap,
}

impl CarlemanState {
    pub fn block(&self, k: usize) -> &[f64] {
        &self.values[self.index_map.block_range(k)]
    }
}

/// Upper bound on stored nonzeros accepted by [`assemble_carleman_with`].
pub const DEFAULT_MAX_NNZ: usize = 50_000_000;

/// `A_{k,l} = Σ_v I^{⊗v} ⊗ F_{l-k+1} ⊗ I^{⊗(k-1-v)}` in the full basis.
pub fn transfer_block(system: &PolynomialSystem, k: usize, l: usize) -> Result<CsrMatrix<f64>> {
    let order = l as isize - k as isize + 1;
    let generator = match order {
        1 => &system.f1,
        2 => &system.f2,
        _ => return Err(Error::UnsupportedBlock { k, l, order }),
    };
    if k == 0 {
        return Err(Error::InvalidParameter {
            name: "k",
            reason: "blocks start at k = 1".into(),
        });
    }
    let n = system.dim();
    let mut acc: Option<CsrMatrix<f64>> = None;
    for v in 0..k {
        let term = kron_identity_pad(n.pow(v as u32), generator, n.pow((k - 1 - v) as u32));
        acc = Some(match acc {
            None => term,
            Some(sum) => sum.add_scaled(1.0, &term)?,
        });
    }
    Ok(acc.expect("k >= 1"))
}

/// Full-basis Carleman generator truncated at order `K`.
pub fn assemble_carleman(system: &PolynomialSystem, order: usize) -> Result<CarlemanOperator> {
    assemble_carleman_with(system, order, CarlemanBasis::Full, DEFAULT_MAX_NNZ)
}

/// Carleman generator in the requested basis. Fails with
/// [`Error::DimensionCap`] when the estimated number of nonzeros exceeds
/// `max_nnz`.
pub fn assemble_carleman_with(
    system: &PolynomialSystem,
    order: usize,
    basis: CarlemanBasis,
    max_nnz: usize,
) -> Result<CarlemanOperator> {
    let n = system.dim();
    let index_map = CarlemanIndexMap::new(n, order, basis)?;
    let estimate = estimated_nnz(system, &index_map);
    if estimate > max_nnz {
        return Err(Error::DimensionCap {
            dim: estimate,
            cap: max_nnz,
        });
    }
    let matrix = match basis {
        CarlemanBasis::Full => {
            let mut triplets = Vec::with_capacity(estimate);
            for k in 1..=order {
                let row0 = index_map.block_offset(k);
                transfer_block(system, k, k)?.push_block(row0, row0, &mut triplets);
                if k < order {
                    transfer_block(system, k, k + 1)?.push_block(row0, index_map.block_offset(k + 1), &mut triplets);
                }
            }
            CsrMatrix::from_triplets(index_map.total_dim(), index_map.total_dim(), triplets)
        }
        CarlemanBasis::Symmetric => assemble_symmetric(system, &index_map),
    };
    Ok(CarlemanOperator { index_map, matrix })
}

fn estimated_nnz(system: &PolynomialSystem, map: &CarlemanIndexMap) -> usize {
    (1..=map.order())
        .map(|k| {
            let rows = map.block_size(k);
            let per_row_f1 = system.f1.nnz().div_ceil(system.dim().max(1));
            let per_row_f2 = system.f2.nnz().div_ceil(system.dim().max(1));
            rows.saturating_mul(k).saturating_mul(per_row_f1 + per_row_f2)
        })
        .sum()
}

/// Restriction of `A` to the symmetric sector:
/// `A_s[o', o] = √(m_{o'}/m_o) Σ_{i ∈ o} A[rep(o'), i]`.
fn assemble_symmetric(system: &PolynomialSystem, map: &CarlemanIndexMap) -> CsrMatrix<f64> {
    let n = system.dim();
    let order = map.order();
    let levels: Vec<SymmetricLevel> = (1..=order + 1).map(|k| SymmetricLevel::new(n, k)).collect();
    let mut triplets = Vec::new();
    let mut scratch = Vec::with_capacity(order + 1);
    for k in 1..=order {
        let level = &levels[k - 1];
        let row0 = map.block_offset(k);
        for (o_row, rep) in level.tuples.iter().enumerate() {
            let m_row = level.multiplicity[o_row];
            let mut diag_acc: Vec<(usize, f64)> = Vec::new();
            for v in 0..k {
                for (c, val) in system.f1.row(rep[v]) {
                    scratch.clear();
                    scratch.extend_from_slice(rep);
                    scratch[v] = c;
                    diag_acc.push((level.rank(&scratch), val));
                }
            }
            for (o, val) in diag_acc {
                let w = (m_row / level.multiplicity[o]).sqrt();
                triplets.push((row0 + o_row, row0 + o, w * val));
            }
            if k < order {
                let up = &levels[k];
                let col0 = map.block_offset(k + 1);
                for v in 0..k {
                    for (c2, val) in system.f2.row(rep[v]) {
                        let (a, b) = (c2 / n, c2 % n);
                        scratch.clear();
                        scratch.extend_from_slice(&rep[..v]);
                        scratch.push(a);
                        scratch.push(b);
                        scratch.extend_from_slice(&rep[v + 1..]);
                        let o = up.rank(&scratch);
                        let w = (m_row / up.multiplicity[o]).sqrt();
                        triplets.push((row0 + o_row, col0 + o, w * val));
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(map.total_dim(), map.total_dim(), triplets)
}

/// Full-basis lift `[φ; φ^{⊗2}; …; φ^{⊗K}]`.
pub fn lift_state(phi: &FieldState, order: usize) -> Result<CarlemanState> {
    let map = CarlemanIndexMap::new(phi.values.len(), order, CarlemanBasis::Full)?;
    lift_state_in(phi, &map)
}

pub fn lift_state_in(phi: &FieldState, map: &CarlemanIndexMap) -> Result<CarlemanState> {
    Ok(CarlemanState {
        time: phi.time,
        values: map.lift(&phi.values)?,
        index_map: map.clone(),
    })
}

/// Physical field from the first block. Level-one orbits are singletons, so
/// this is the same in both bases.
pub fn project_state(state: &CarlemanState) -> FieldState {
    FieldState::new(state.time, state.block(1).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_polynomial_system, NodeLayout, ReactionDiffusionParams, SpatialGrid1D};

    fn scalar_system(d: f64, q: f64, r: f64) -> PolynomialSystem {
        let grid = SpatialGrid1D::with_spacing(1.0, 1, NodeLayout::Vertex).unwrap();
        build_polynomial_system(&ReactionDiffusionParams::new(d, q, r).unwrap(), &grid).unwrap()
    }

    #[test]
    fn scalar_transfer_blocks() {
        let sys = scalar_system(0.0, 1.0, -1.0);
        assert_eq!(transfer_block(&sys, 2, 2).unwrap().to_dense(), vec![vec![2.0]]);
        assert_eq!(transfer_block(&sys, 2, 3).unwrap().to_dense(), vec![vec![-2.0]]);
        assert_eq!(transfer_block(&sys, 1, 1).unwrap(), sys.f1);
    }

    #[test]
    fn transfer_block_rejects_higher_generators() {
        let sys = scalar_system(0.0, 1.0, -1.0);
        assert!(matches!(transfer_block(&sys, 2, 4), Err(Error::UnsupportedBlock { .. })));
        assert!(matches!(transfer_block(&sys, 3, 2), Err(Error::UnsupportedBlock { .. })));
    }

    #[test]
    fn scalar_logistic_generators() {
        let sys = scalar_system(0.0, 1.0, -1.0);
        let a2 = assemble_carleman(&sys, 2).unwrap();
        assert_eq!(a2.matrix.to_dense(), vec![vec![1.0, -1.0], vec![0.0, 2.0]]);
        let a3 = assemble_carleman(&sys, 3).unwrap();
        assert_eq!(
            a3.matrix.to_dense(),
            vec![vec![1.0, -1.0, 0.0], vec![0.0, 2.0, -2.0], vec![0.0, 0.0, 3.0]]
        );
    }

    #[test]
    fn order_one_is_f1() {
        let grid = SpatialGrid1D::new(1.0, 4, NodeLayout::Vertex).unwrap();
        let sys = build_polynomial_system(&ReactionDiffusionParams::default(), &grid).unwrap();
        assert_eq!(assemble_carleman(&sys, 1).unwrap().matrix, sys.f1);
    }

    #[test]
    fn lift_examples() {
        let s = lift_state(&FieldState::new(0.0, vec![0.5]), 3).unwrap();
        assert_eq!(s.values, vec![0.5, 0.25, 0.125]);
        let s = lift_state(&FieldState::new(0.0, vec![1.0, 0.0]), 2).unwrap();
        assert_eq!(s.values, vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let s = lift_state(&FieldState::new(0.0, vec![0.0; 3]), 3).unwrap();
        assert!(s.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn project_examples() {
        let s = lift_state(&FieldState::new(0.0, vec![0.5]), 3).unwrap();
        assert_eq!(project_state(&s).values, vec![0.5]);
        let phi = FieldState::new(0.3, vec![0.1, -0.2, 0.7]);
        assert_eq!(project_state(&lift_state(&phi, 3).unwrap()), phi);
    }

    #[test]
    fn index_map_dimensions() {
        let m = CarlemanIndexMap::new(3, 3, CarlemanBasis::Full).unwrap();
        assert_eq!(m.total_dim(), (3usize.pow(4) - 3) / 2);
        assert_eq!(m.block_offset(1), 0);
        assert_eq!(m.block_offset(2), 3);
        assert_eq!(m.block_offset(3), 12);
        let one = CarlemanIndexMap::new(1, 5, CarlemanBasis::Full).unwrap();
        assert_eq!(one.total_dim(), 5);
        let sym = CarlemanIndexMap::new(12, 3, CarlemanBasis::Symmetric).unwrap();
        assert_eq!(sym.total_dim(), 12 + 78 + 364);
        assert!(CarlemanIndexMap::new(3, 0, CarlemanBasis::Full).is_err());
    }

    #[test]
    fn nnz_cap_is_enforced() {
        let grid = SpatialGrid1D::new(1.0, 6, NodeLayout::Vertex).unwrap();
        let sys = build_polynomial_system(&ReactionDiffusionParams::default(), &grid).unwrap();
        let err = assemble_carleman_with(&sys, 3, CarlemanBasis::Full, 100).unwrap_err();
        assert!(matches!(err, Error::DimensionCap { .. }));
    }
}
