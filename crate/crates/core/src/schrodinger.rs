//! Warped phase transformation of a linear system `du/dt = A u`.
//!
//! `A` is split as `H₁ + iH₂` with both parts Hermitian. Writing
//! `v(t, p) = e^{-p} u(t)` turns the dissipative part into advection in an
//! auxiliary coordinate `p`:
//!
//! ```text
//! ∂v/∂t = -H₁ ∂v/∂p + iH₂ v
//! ```
//!
//! On a uniform periodic `p`-grid with gradient matrix `∇ₚ`, the stacked
//! state `ψ = [ψ₀; …; ψ_{n_p-1}]` evolves under
//! `H̃ = -∇ₚ ⊗ H₁ + I ⊗ iH₂`. The initial data are extended to `p < 0` as
//! `e^{-|p|}`; the physical state is read back at nodes with `p > 0`.

use num_complex::Complex64;

use crate::carleman::{CarlemanIndexMap, CarlemanState};
use crate::error::{Error, Result};
use crate::sparse::{kron, CsrMatrix, Scalar};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// `A = H₁ + iH₂` with `H₁ = (A + A†)/2` and `H₂ = -i(A - A†)/2`.
#[derive(Clone, Debug)]
pub struct HermitianSplit {
    pub h1: CsrMatrix<Complex64>,
    pub h2: CsrMatrix<Complex64>,
}

impl HermitianSplit {
    pub fn dim(&self) -> usize {
        self.h1.nrows()
    }

    /// The skew-Hermitian part `iH₂`.
    pub fn skew_part(&self) -> CsrMatrix<Complex64> {
        self.h2.scaled(I)
    }

    /// `H₁ + iH₂`.
    pub fn reconstruct(&self) -> CsrMatrix<Complex64> {
        self.h1.add_scaled(I, &self.h2).expect("split parts share a shape")
    }

    /// `(H₁, iH₂)` as real matrices when the split came from a real `A`
    /// (then `H₁` is symmetric and `iH₂` antisymmetric).
    pub fn real_parts(&self) -> Option<(CsrMatrix<f64>, CsrMatrix<f64>)> {
        let skew = self.skew_part();
        let real = |m: &CsrMatrix<Complex64>| m.values().iter().all(|v| v.im == 0.0);
        if real(&self.h1) && real(&skew) {
            Some((self.h1.map(|v| v.re), skew.map(|v| v.re)))
        } else {
            None
        }
    }
}

pub fn hermitian_split<T: Scalar>(a: &CsrMatrix<T>) -> Result<HermitianSplit> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            context: "hermitian split needs a square matrix",
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    let a = a.to_complex();
    let adj = a.adjoint();
    let h1 = a.add_scaled(Complex64::new(1.0, 0.0), &adj)?.scaled(Complex64::new(0.5, 0.0));
    let h2 = a.add_scaled(Complex64::new(-1.0, 0.0), &adj)?.scaled(Complex64::new(0.0, -0.5));
    Ok(HermitianSplit { h1, h2 })
}

/// Uniform periodic grid on `[p_left, p_right)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxGrid {
    p_left: f64,
    p_right: f64,
    n_p: usize,
    dp: f64,
    nodes: Vec<f64>,
}

impl AuxGrid {
    pub fn p_left(&self) -> f64 {
        self.p_left
    }

    pub fn p_right(&self) -> f64 {
        self.p_right
    }

    pub fn n_p(&self) -> usize {
        self.n_p
    }

    pub fn dp(&self) -> f64 {
        self.dp
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Index of the smallest node with `p ≥ dp`, i.e. the first strictly
    /// positive node.
    pub fn first_positive(&self) -> Option<usize> {
        let tol = 1e-9 * self.dp;
        self.nodes.iter().position(|&p| p >= self.dp - tol)
    }

    /// Weights `e^{-|p_j|}` of the extended initial data.
    pub fn warp_weights(&self) -> Vec<f64> {
        self.nodes.iter().map(|p| (-p.abs()).exp()).collect()
    }
}

pub fn build_aux_grid(p_left: f64, p_right: f64, n_p: usize) -> Result<AuxGrid> {
    if !(p_left.is_finite() && p_left < 0.0) {
        return Err(Error::InvalidParameter {
            name: "p_left",
            reason: format!("must be negative, got {p_left}"),
        });
    }
    if !(p_right.is_finite() && p_right > 0.0) {
        return Err(Error::InvalidParameter {
            name: "p_right",
            reason: format!("must be positive, got {p_right}"),
        });
    }
    if n_p < 2 {
        return Err(Error::InvalidParameter {
            name: "n_p",
            reason: format!("need at least two nodes, got {n_p}"),
        });
    }
    let dp = (p_right - p_left) / n_p as f64;
    let nodes = (0..n_p).map(|j| p_left + j as f64 * dp).collect();
    Ok(AuxGrid {
        p_left,
        p_right,
        n_p,
        dp,
        nodes,
    })
}

/// First-order upwind gradient for leftward transport, periodic:
/// `(1/dp)(-I + S)` with `S` the cyclic forward shift.
pub fn build_upwind_gradient(grid: &AuxGrid) -> CsrMatrix<f64> {
    let n = grid.n_p();
    let inv = 1.0 / grid.dp();
    let mut triplets = Vec::with_capacity(2 * n);
    for j in 0..n {
        triplets.push((j, j, -inv));
        triplets.push((j, (j + 1) % n, inv));
    }
    CsrMatrix::from_triplets(n, n, triplets)
}

/// Central periodic gradient `(S - Sᵀ)/(2dp)`; exactly antisymmetric.
pub fn build_central_gradient(grid: &AuxGrid) -> Result<CsrMatrix<f64>> {
    let n = grid.n_p();
    if n < 3 {
        return Err(Error::InvalidParameter {
            name: "n_p",
            reason: "central gradient needs at least three nodes".into(),
        });
    }
    let half = 0.5 / grid.dp();
    let mut triplets = Vec::with_capacity(2 * n);
    for j in 0..n {
        triplets.push((j, (j + 1) % n, half));
        triplets.push((j, (j + n - 1) % n, -half));
    }
    Ok(CsrMatrix::from_triplets(n, n, triplets))
}

/// `H̃ = -∇ₚ ⊗ H₁ + I ⊗ iH₂`, kept in factored form.
#[derive(Clone, Debug)]
pub struct WptOperator {
    grad: CsrMatrix<f64>,
    h1: CsrMatrix<Complex64>,
    skew: CsrMatrix<Complex64>,
}

impl WptOperator {
    pub fn n_p(&self) -> usize {
        self.grad.nrows()
    }

    pub fn block_dim(&self) -> usize {
        self.h1.nrows()
    }

    pub fn dim(&self) -> usize {
        self.n_p() * self.block_dim()
    }

    pub fn gradient(&self) -> &CsrMatrix<f64> {
        &self.grad
    }

    /// Blockwise product: `(H̃ψ)_j = -H₁ Σ_m ∇[j,m] ψ_m + iH₂ ψ_j`.
    pub fn apply(&self, psi: &[Complex64]) -> Result<Vec<Complex64>> {
        if psi.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "WPT operator input",
                expected: self.dim(),
                found: psi.len(),
            });
        }
        let m = self.block_dim();
        let mut out = vec![Complex64::new(0.0, 0.0); psi.len()];
        let mut mix = vec![Complex64::new(0.0, 0.0); m];
        for j in 0..self.n_p() {
            mix.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            for (col, g) in self.grad.row(j) {
                for (acc, &x) in mix.iter_mut().zip(&psi[col * m..(col + 1) * m]) {
                    *acc += x * g;
                }
            }
            let block = &mut out[j * m..(j + 1) * m];
            self.h1.mul_add_into(Complex64::new(-1.0, 0.0), &mix, block);
            self.skew.mul_add_into(Complex64::new(1.0, 0.0), &psi[j * m..(j + 1) * m], block);
        }
        Ok(out)
    }

    /// Materializes the full Kronecker form.
    pub fn materialize(&self) -> CsrMatrix<Complex64> {
        let grad = self.grad.to_complex();
        let advect = kron(&grad, &self.h1).scaled(Complex64::new(-1.0, 0.0));
        let phase = kron(&CsrMatrix::identity(self.n_p()), &self.skew);
        advect.add_scaled(Complex64::new(1.0, 0.0), &phase).expect("matching shapes")
    }
}

pub fn assemble_wpt_operator(split: &HermitianSplit, grad_p: &CsrMatrix<f64>) -> Result<WptOperator> {
    if !grad_p.is_square() {
        return Err(Error::DimensionMismatch {
            context: "p-gradient must be square",
            expected: grad_p.nrows(),
            found: grad_p.ncols(),
        });
    }
    if split.h1.shape() != split.h2.shape() || !split.h1.is_square() {
        return Err(Error::DimensionMismatch {
            context: "hermitian split parts",
            expected: split.h1.nrows(),
            found: split.h2.nrows(),
        });
    }
    Ok(WptOperator {
        grad: grad_p.clone(),
        h1: split.h1.clone(),
        skew: split.skew_part(),
    })
}

/// Split, grid, gradient and enlarged generator together.
#[derive(Clone, Debug)]
pub struct WptSystem {
    pub split: HermitianSplit,
    pub grid: AuxGrid,
    pub grad_p: CsrMatrix<f64>,
    pub h_tilde: WptOperator,
}

impl WptSystem {
    /// Upwind system for the generator `a`.
    pub fn upwind(a: &CsrMatrix<f64>, grid: AuxGrid) -> Result<Self> {
        let split = hermitian_split(a)?;
        let grad_p = build_upwind_gradient(&grid);
        let h_tilde = assemble_wpt_operator(&split, &grad_p)?;
        Ok(Self {
            split,
            grid,
            grad_p,
            h_tilde,
        })
    }
}

/// Warped state `ψ = [ψ₀; …; ψ_{n_p-1}]`, each block of the lifted dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct WptState {
    pub time: f64,
    pub block_dim: usize,
    pub values: Vec<Complex64>,
}

impl WptState {
    pub fn n_p(&self) -> usize {
        self.values.len() / self.block_dim
    }

    pub fn block(&self, j: usize) -> &[Complex64] {
        &self.values[j * self.block_dim..(j + 1) * self.block_dim]
    }
}

/// `ψ(0) = P ⊗ Φ(0)` with `P_j = e^{-|p_j|}`.
pub fn initialize_wpt_state(phi0: &CarlemanState, grid: &AuxGrid) -> WptState {
    let weights: Vec<Complex64> = grid.warp_weights().into_iter().map(Complex64::from).collect();
    let phi: Vec<Complex64> = phi0.values.iter().map(|&v| Complex64::from(v)).collect();
    WptState {
        time: phi0.time,
        block_dim: phi.len(),
        values: crate::sparse::kron_vec(&weights, &phi),
    }
}

/// How the lifted state is read back from `ψ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RecoverySpec {
    /// `Φ ≈ e^{p_j} ψ_j` at one node; `None` picks the first node with
    /// `p ≥ dp`.
    Point { index: Option<usize> },
    /// Mean of `e^{p_j} ψ_j` over the nodes with `p_min ≤ p_j ≤ p_max`.
    Window { p_min: f64, p_max: f64 },
}

impl Default for RecoverySpec {
    fn default() -> Self {
        RecoverySpec::Point { index: None }
    }
}

impl RecoverySpec {
    /// Node indices used by this rule on `grid`, all with `p > 0`.
    pub fn nodes(&self, grid: &AuxGrid) -> Result<Vec<usize>> {
        let picked: Vec<usize> = match *self {
            RecoverySpec::Point { index: Some(j) } => {
                if j >= grid.n_p() {
                    return Err(Error::InvalidParameter {
                        name: "recovery_index",
                        reason: format!("{j} is outside the {}-node p-grid", grid.n_p()),
                    });
                }
                vec![j]
            }
            RecoverySpec::Point { index: None } => match grid.first_positive() {
                Some(j) => vec![j],
                None => {
                    return Err(Error::NonPositiveRecovery {
                        p: *grid.nodes().last().expect("n_p >= 2"),
                    })
                }
            },
            RecoverySpec::Window { p_min, p_max } => {
                let js: Vec<usize> = (0..grid.n_p())
                    .filter(|&j| grid.nodes()[j] >= p_min && grid.nodes()[j] <= p_max)
                    .collect();
                if js.is_empty() {
                    return Err(Error::InvalidParameter {
                        name: "recovery_window",
                        reason: format!("no node inside [{p_min}, {p_max}]"),
                    });
                }
                js
            }
        };
        for &j in &picked {
            let p = grid.nodes()[j];
            if p <= 0.0 {
                return Err(Error::NonPositiveRecovery { p });
            }
        }
        Ok(picked)
    }
}

/// Lifted state recovered from `ψ`, with the discarded imaginary part.
#[derive(Clone, Debug)]
pub struct Recovered {
    pub state: CarlemanState,
    /// Euclidean norm of the imaginary part that was dropped.
    pub imag_residual: f64,
    pub nodes: Vec<usize>,
}

pub fn recover_state(psi: &WptState, grid: &AuxGrid, recovery: &RecoverySpec, index_map: &CarlemanIndexMap) -> Result<Recovered> {
    if psi.block_dim != index_map.total_dim() || psi.n_p() != grid.n_p() {
        return Err(Error::DimensionMismatch {
            context: "recovery",
            expected: index_map.total_dim() * grid.n_p(),
            found: psi.values.len(),
        });
    }
    let nodes = recovery.nodes(grid)?;
    let mut acc = vec![Complex64::new(0.0, 0.0); psi.block_dim];
    for &j in &nodes {
        let w = grid.nodes()[j].exp();
        for (a, &v) in acc.iter_mut().zip(psi.block(j)) {
            *a += v * w;
        }
    }
    let inv = 1.0 / nodes.len() as f64;
    let imag_residual = acc.iter().map(|v| (v.im * inv).powi(2)).sum::<f64>().sqrt();
    Ok(Recovered {
        state: CarlemanState {
            time: psi.time,
            values: acc.iter().map(|v| v.re * inv).collect(),
            index_map: index_map.clone(),
        },
        imag_residual,
        nodes,
    })
}

/// `‖H̃ + H̃†‖_max` for `H̃ = -∇ₚ ⊗ H₁ + I ⊗ iH₂`.
///
/// Zero up to rounding whenever `grad` is antisymmetric; the upwind
/// gradient is not, and yields a positive residual. Evaluated block by
/// block: block `(j, k)` of the sum is
/// `-∇[j,k] H₁ - ∇[k,j] H₁† + δ_jk (iH₂ + (iH₂)†)`.
pub fn verify_skew_hermitian(split: &HermitianSplit, grad: &CsrMatrix<f64>) -> Result<f64> {
    let op = assemble_wpt_operator(split, grad)?;
    let h1_adj = op.h1.adjoint();
    let phase = op.skew.add_scaled(Complex64::new(1.0, 0.0), &op.skew.adjoint())?;
    let mut pairs: Vec<(f64, f64, bool)> = Vec::new();
    for j in 0..op.n_p() {
        pairs.push((grad.get(j, j), grad.get(j, j), true));
    }
    for (j, k, _) in grad.triplets().filter(|&(j, k, _)| j != k) {
        pairs.push((grad.get(j, k), grad.get(k, j), false));
    }
    pairs.sort_by(|a, b| a.partial_cmp(b).expect("finite gradient"));
    pairs.dedup();
    let mut worst = 0.0f64;
    for (a, b, diagonal) in pairs {
        let mut block = op.h1.scaled(Complex64::new(-a, 0.0)).add_scaled(Complex64::new(-b, 0.0), &h1_adj)?;
        if diagonal {
            block = block.add_scaled(Complex64::new(1.0, 0.0), &phase)?;
        }
        worst = worst.max(block.max_abs());
    }
    Ok(worst)
}
