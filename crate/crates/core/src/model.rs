//! The reaction–diffusion model `∂φ/∂t = D ∂²φ/∂x² + Qφ + Rφ²` on `(0, x_R)`
//! with homogeneous Dirichlet boundaries, its second-order central
//! discretization, and the quadratic polynomial form `dφ/dt = F₁φ + F₂ φ⊗φ`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Where the `n_x` unknowns sit relative to the two Dirichlet boundaries.
///
/// The discrete Laplacian is the same `tridiag(1, -2, 1) / dx²` for all
/// layouts; they differ in the spacing and in where the zero ghost values
/// live, which decides what continuous problem the scheme approximates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum NodeLayout {
    /// `dx = x_R / (n_x + 1)`, `x_j = (j + 1) dx`. The ghosts sit exactly on
    /// `x = 0` and `x = x_R`, so the scheme is second order in `dx`.
    #[default]
    Vertex,
    /// `dx = x_R / n_x`, `x_j = (j + ½) dx`. Ghosts half a cell outside.
    CellCentered,
    /// `dx = x_R / n_x`, `x_j = (j + 1) dx`. Right ghost at `x_R + dx`.
    LeftOffset,
}

impl NodeLayout {
    pub fn name(self) -> &'static str {
        match self {
            NodeLayout::Vertex => "vertex",
            NodeLayout::CellCentered => "cell_centered",
            NodeLayout::LeftOffset => "left_offset",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "vertex" => Some(NodeLayout::Vertex),
            "cell_centered" => Some(NodeLayout::CellCentered),
            "left_offset" => Some(NodeLayout::LeftOffset),
            _ => None,
        }
    }
}

/// Uniform grid of interior nodes on `(0, x_length)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialGrid1D {
    x_length: f64,
    n_x: usize,
    dx: f64,
    layout: NodeLayout,
    nodes: Vec<f64>,
}

impl SpatialGrid1D {
    pub fn new(x_length: f64, n_x: usize, layout: NodeLayout) -> Result<Self> {
        if n_x == 0 {
            return Err(Error::InvalidParameter {
                name: "n_x",
                reason: "need at least one node".into(),
            });
        }
        if !(x_length.is_finite() && x_length > 0.0) {
            return Err(Error::InvalidParameter {
                name: "x_length",
                reason: format!("must be positive, got {x_length}"),
            });
        }
        let (dx, first) = match layout {
            NodeLayout::Vertex => {
                let dx = x_length / (n_x + 1) as f64;
                (dx, dx)
            }
            NodeLayout::CellCentered => {
                let dx = x_length / n_x as f64;
                (dx, 0.5 * dx)
            }
            NodeLayout::LeftOffset => {
                let dx = x_length / n_x as f64;
                (dx, dx)
            }
        };
        let nodes = (0..n_x).map(|j| first + j as f64 * dx).collect();
        Ok(Self {
            x_length,
            n_x,
            dx,
            layout,
            nodes,
        })
    }

    /// Grid whose spacing is exactly `dx`; the domain length follows from
    /// the layout.
    pub fn with_spacing(dx: f64, n_x: usize, layout: NodeLayout) -> Result<Self> {
        let x_length = match layout {
            NodeLayout::Vertex => dx * (n_x + 1) as f64,
            NodeLayout::CellCentered | NodeLayout::LeftOffset => dx * n_x as f64,
        };
        Self::new(x_length, n_x, layout)
    }

    pub fn x_length(&self) -> f64 {
        self.x_length
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn layout(&self) -> NodeLayout {
        self.layout
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Coordinates of the left and right zero ghosts (`φ₋₁`, `φ_{n_x}`).
    pub fn ghost_coords(&self) -> (f64, f64) {
        (self.nodes[0] - self.dx, self.nodes[self.n_x - 1] + self.dx)
    }
}

/// Coefficients of `f(φ) = Qφ + Rφ²` and the diffusion constant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReactionDiffusionParams {
    pub diffusion: f64,
    pub linear_rate: f64,
    pub quadratic_rate: f64,
}

impl ReactionDiffusionParams {
    pub fn new(diffusion: f64, linear_rate: f64, quadratic_rate: f64) -> Result<Self> {
        let params = Self {
            diffusion,
            linear_rate,
            quadratic_rate,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        // D = 0 is admitted so that pure reaction kinetics can be checked
        // against closed forms.
        if !(self.diffusion.is_finite() && self.diffusion >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "D",
                reason: format!("must be finite and non-negative, got {}", self.diffusion),
            });
        }
        if !self.linear_rate.is_finite() {
            return Err(Error::InvalidParameter {
                name: "Q",
                reason: "must be finite".into(),
            });
        }
        if !self.quadratic_rate.is_finite() {
            return Err(Error::InvalidParameter {
                name: "R",
                reason: "must be finite".into(),
            });
        }
        Ok(())
    }
}

impl Default for ReactionDiffusionParams {
    fn default() -> Self {
        Self {
            diffusion: 1.0,
            linear_rate: 1.0,
            quadratic_rate: -1.0,
        }
    }
}

/// Nodal values `φ_j(t)` at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldState {
    pub time: f64,
    pub values: Vec<f64>,
}

impl FieldState {
    pub fn new(time: f64, values: Vec<f64>) -> Self {
        Self { time, values }
    }

    pub fn check_against(&self, grid: &SpatialGrid1D) -> Result<()> {
        if self.values.len() != grid.n_x() {
            return Err(Error::DimensionMismatch {
                context: "field state",
                expected: grid.n_x(),
                found: self.values.len(),
            });
        }
        Ok(())
    }
}

/// `dφ/dt = F₁φ + F₂(φ⊗φ)`; `F₀` and every `F_m` with `m > 2` vanish.
#[derive(Clone, Debug)]
pub struct PolynomialSystem {
    pub f1: CsrMatrix<f64>,
    pub f2: CsrMatrix<f64>,
    pub grid: SpatialGrid1D,
}

impl PolynomialSystem {
    /// Builds a system from arbitrary generators; `f1` must be `n×n` and
    /// `f2` must be `n×n²`.
    pub fn from_generators(f1: CsrMatrix<f64>, f2: CsrMatrix<f64>, grid: SpatialGrid1D) -> Result<Self> {
        let n = grid.n_x();
        if f1.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                context: "F1 shape",
                expected: n,
                found: f1.nrows(),
            });
        }
        if f2.shape() != (n, n * n) {
            return Err(Error::DimensionMismatch {
                context: "F2 shape",
                expected: n * n,
                found: f2.ncols(),
            });
        }
        Ok(Self { f1, f2, grid })
    }

    pub fn dim(&self) -> usize {
        self.f1.nrows()
    }

    /// Evaluates `F₁φ + F₂(φ⊗φ)` through the Kronecker form.
    pub fn eval_kronecker(&self, phi: &[f64]) -> Vec<f64> {
        let mut out = self.f1.matvec(phi);
        let sq = crate::sparse::kron_vec(phi, phi);
        self.f2.mul_add_into(1.0, &sq, &mut out);
        out
    }
}

/// `(1/dx²) tridiag(1, -2, 1)` with the Dirichlet closure (no wrap entries).
pub fn build_laplacian(grid: &SpatialGrid1D) -> Result<CsrMatrix<f64>> {
    let n = grid.n_x();
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "n_x",
            reason: "need at least one node".into(),
        });
    }
    let inv = 1.0 / (grid.dx() * grid.dx());
    let mut triplets = Vec::with_capacity(3 * n);
    for j in 0..n {
        if j > 0 {
            triplets.push((j, j - 1, inv));
        }
        triplets.push((j, j, -2.0 * inv));
        if j + 1 < n {
            triplets.push((j, j + 1, inv));
        }
    }
    Ok(CsrMatrix::from_triplets(n, n, triplets))
}

pub fn build_polynomial_system(params: &ReactionDiffusionParams, grid: &SpatialGrid1D) -> Result<PolynomialSystem> {
    params.validate()?;
    let n = grid.n_x();
    let lap = build_laplacian(grid)?;
    let f1 = lap
        .scaled(params.diffusion)
        .add_scaled(params.linear_rate, &CsrMatrix::identity(n))?;
    // φ⊗φ component (a, b) sits at a·n + b, so φ_j² is column j·n + j.
    let f2 = CsrMatrix::from_triplets(
        n,
        n * n,
        (0..n).map(|j| (j, j * n + j, params.quadratic_rate)).collect(),
    );
    PolynomialSystem::from_generators(f1, f2, grid.clone())
}

/// The profile `φ(0, x) = 0.5 − 0.5 cos(2πx)` sampled at the grid nodes.
pub fn sample_initial(grid: &SpatialGrid1D) -> FieldState {
    let values = grid.nodes().iter().map(|&x| initial_profile(x)).collect();
    FieldState::new(0.0, values)
}

pub fn initial_profile(x: f64) -> f64 {
    0.5 - 0.5 * (2.0 * PI * x).cos()
}

/// `DΔφ + Qφ + Rφ²` evaluated nodewise, without forming `φ⊗φ`.
pub fn eval_nonlinear_rhs(state: &FieldState, params: &ReactionDiffusionParams, grid: &SpatialGrid1D) -> Result<Vec<f64>> {
    state.check_against(grid)?;
    let phi = &state.values;
    let mut out = vec![0.0; phi.len()];
    rhs_into(phi, params, grid.dx(), &mut out);
    Ok(out)
}

pub(crate) fn rhs_into(phi: &[f64], params: &ReactionDiffusionParams, dx: f64, out: &mut [f64]) {
    let n = phi.len();
    let scale = params.diffusion / (dx * dx);
    for j in 0..n {
        let left = if j > 0 { phi[j - 1] } else { 0.0 };
        let right = if j + 1 < n { phi[j + 1] } else { 0.0 };
        let u = phi[j];
        out[j] = scale * (left - 2.0 * u + right) + params.linear_rate * u + params.quadratic_rate * u * u;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::CsrMatrix;

    fn unit_spacing(n: usize) -> SpatialGrid1D {
        SpatialGrid1D::with_spacing(1.0, n, NodeLayout::Vertex).unwrap()
    }

    #[test]
    fn laplacian_three_nodes() {
        let lap = build_laplacian(&unit_spacing(3)).unwrap();
        let expected = vec![vec![-2.0, 1.0, 0.0], vec![1.0, -2.0, 1.0], vec![0.0, 1.0, -2.0]];
        assert_eq!(lap.to_dense(), expected);
    }

    #[test]
    fn laplacian_single_node() {
        assert_eq!(build_laplacian(&unit_spacing(1)).unwrap().to_dense(), vec![vec![-2.0]]);
    }

    #[test]
    fn laplacian_half_spacing_scales_by_four() {
        let grid = SpatialGrid1D::with_spacing(0.5, 3, NodeLayout::CellCentered).unwrap();
        let lap = build_laplacian(&grid).unwrap();
        let expected = vec![vec![-8.0, 4.0, 0.0], vec![4.0, -8.0, 4.0], vec![0.0, 4.0, -8.0]];
        assert_eq!(lap.to_dense(), expected);
    }

    #[test]
    fn zero_nodes_rejected() {
        assert!(SpatialGrid1D::new(1.0, 0, NodeLayout::Vertex).is_err());
    }

    #[test]
    fn layouts_place_nodes() {
        let v = SpatialGrid1D::new(1.0, 3, NodeLayout::Vertex).unwrap();
        assert_eq!(v.nodes(), &[0.25, 0.5, 0.75]);
        assert_eq!(v.ghost_coords(), (0.0, 1.0));
        let c = SpatialGrid1D::new(1.0, 4, NodeLayout::CellCentered).unwrap();
        assert_eq!(c.nodes(), &[0.125, 0.375, 0.625, 0.875]);
        let l = SpatialGrid1D::new(1.0, 4, NodeLayout::LeftOffset).unwrap();
        assert_eq!(l.nodes(), &[0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn quadratic_map_selects_diagonal_columns() {
        let grid = unit_spacing(2);
        let params = ReactionDiffusionParams::new(0.0, 0.0, -1.0).unwrap();
        let sys = build_polynomial_system(&params, &grid).unwrap();
        assert_eq!(sys.f2.to_dense(), vec![vec![-1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, -1.0]]);
    }

    #[test]
    fn scalar_system_generators() {
        let sys = build_polynomial_system(&ReactionDiffusionParams::new(1.0, 1.0, -1.0).unwrap(), &unit_spacing(1)).unwrap();
        assert_eq!(sys.f1.to_dense(), vec![vec![-1.0]]);
        assert_eq!(sys.f2.to_dense(), vec![vec![-1.0]]);
    }

    #[test]
    fn vanishing_nonlinearity_gives_empty_f2() {
        let sys = build_polynomial_system(&ReactionDiffusionParams::new(1.0, 1.0, 0.0).unwrap(), &unit_spacing(4)).unwrap();
        assert_eq!(sys.f2.nnz(), 0);
        assert_eq!(sys.f2.shape(), (4, 16));
    }

    #[test]
    fn initial_profile_values() {
        assert!((initial_profile(0.5) - 1.0).abs() < 1e-15);
        assert!((initial_profile(0.25) - 0.5).abs() < 1e-15);
        assert!(initial_profile(1.0).abs() < 1e-15);
    }

    #[test]
    fn rhs_examples() {
        let params = ReactionDiffusionParams::new(0.0, 1.0, -1.0).unwrap();
        let grid = unit_spacing(1);
        let rhs = eval_nonlinear_rhs(&FieldState::new(0.0, vec![0.5]), &params, &grid).unwrap();
        assert!((rhs[0] - 0.25).abs() < 1e-15);

        let zero = eval_nonlinear_rhs(&FieldState::new(0.0, vec![0.0; 1]), &params, &grid).unwrap();
        assert_eq!(zero, vec![0.0]);

        let diff = ReactionDiffusionParams::new(1.0, 0.0, 0.0).unwrap();
        let rhs = eval_nonlinear_rhs(&FieldState::new(0.0, vec![1.0; 3]), &diff, &unit_spacing(3)).unwrap();
        assert_eq!(rhs, vec![-1.0, 0.0, -1.0]);
    }

    #[test]
    fn rhs_rejects_wrong_length() {
        let err = eval_nonlinear_rhs(&FieldState::new(0.0, vec![0.0; 2]), &Default::default(), &unit_spacing(3));
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn params_reject_negative_diffusion() {
        assert!(ReactionDiffusionParams::new(-1.0, 0.0, 0.0).is_err());
        assert!(ReactionDiffusionParams::new(1.0, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn generators_shape_checked() {
        let grid = unit_spacing(2);
        let bad = PolynomialSystem::from_generators(CsrMatrix::identity(2), CsrMatrix::zeros(2, 3), grid);
        assert!(bad.is_err());
    }
}
