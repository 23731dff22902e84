//! Sampled functions on a uniform grid of `[0, 1]`, the orthonormal
//! trigonometric basis, and the quadrature used for every `∫ · dt`.
//!
//! Integrals use the composite trapezoid rule on the grid, endpoints included.
//! On a grid containing both `t = 0` and `t = 1` this rule integrates
//! trigonometric polynomials of frequency below `T - 1` exactly, so the basis
//! is orthonormal to rounding error under the discrete inner product.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SgflmError};

/// Number of grid points used for covariate curves unless configured otherwise.
pub const DEFAULT_GRID_POINTS: usize = 50;

const SPACING_RTOL: f64 = 1e-12;

/// How a grid is laid out on `[0, 1]`. Only the endpoint-inclusive layout is
/// produced; the tag is carried in metadata so readers know the convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridLayout {
    EndpointInclusive,
}

/// Serializable description of a uniform grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points: usize,
    pub layout: GridLayout,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            points: DEFAULT_GRID_POINTS,
            layout: GridLayout::EndpointInclusive,
        }
    }
}

impl GridSpec {
    pub fn abscissae(&self) -> Result<Vec<f64>> {
        uniform_grid(self.points)
    }
}

/// `points` equally spaced abscissae `0, 1/(T-1), ..., 1`.
pub fn uniform_grid(points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(SgflmError::InvalidArgument(format!(
            "a grid needs at least 2 points, got {points}"
        )));
    }
    let last = (points - 1) as f64;
    Ok((0..points).map(|k| k as f64 / last).collect())
}

/// A real function sampled on a uniform grid of `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionGrid {
    grid_points: Vec<f64>,
    values: Vec<f64>,
}

impl FunctionGrid {
    pub fn new(grid_points: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid_points.len() != values.len() {
            return Err(SgflmError::InvalidArgument(format!(
                "grid has {} points but {} values were given",
                grid_points.len(),
                values.len()
            )));
        }
        check_uniform(&grid_points)?;
        Ok(FunctionGrid {
            grid_points,
            values,
        })
    }

    /// Samples `f` on the given grid.
    pub fn from_fn(grid_points: &[f64], f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid_points.iter().map(|&t| f(t)).collect();
        Self::new(grid_points.to_vec(), values)
    }

    pub fn zeros(grid_points: &[f64]) -> Result<Self> {
        Self::new(grid_points.to_vec(), vec![0.0; grid_points.len()])
    }

    pub fn grid_points(&self) -> &[f64] {
        &self.grid_points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.grid_points[1] - self.grid_points[0]
    }

    pub fn same_grid(&self, other: &FunctionGrid) -> bool {
        self.grid_points.len() == other.grid_points.len()
            && self
                .grid_points
                .iter()
                .zip(&other.grid_points)
                .all(|(a, b)| (a - b).abs() <= 1e-12)
    }

    fn ensure_same_grid(&self, other: &FunctionGrid) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(SgflmError::GridMismatch(format!(
                "{}-point grid vs {}-point grid",
                self.len(),
                other.len()
            )))
        }
    }

    /// Pointwise `self + scale * other`.
    pub fn axpy(&self, scale: f64, other: &FunctionGrid) -> Result<FunctionGrid> {
        self.ensure_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + scale * b)
            .collect();
        Ok(FunctionGrid {
            grid_points: self.grid_points.clone(),
            values,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> FunctionGrid {
        FunctionGrid {
            grid_points: self.grid_points.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Trapezoid approximation of `∫ f(t)^2 dt`.
    pub fn squared_norm(&self) -> f64 {
        trapezoid(self.spacing(), self.values.iter().map(|v| v * v))
    }
}

fn check_uniform(points: &[f64]) -> Result<()> {
    if points.len() < 2 {
        return Err(SgflmError::InvalidArgument(format!(
            "a grid needs at least 2 points, got {}",
            points.len()
        )));
    }
    let first = points[0];
    let last = points[points.len() - 1];
    let span = last - first;
    if span <= 0.0 || !span.is_finite() {
        return Err(SgflmError::InvalidArgument(
            "grid must be strictly increasing".into(),
        ));
    }
    if first < -SPACING_RTOL || last > 1.0 + SPACING_RTOL {
        return Err(SgflmError::InvalidArgument(format!(
            "grid [{first}, {last}] leaves [0, 1]"
        )));
    }
    let h = span / (points.len() - 1) as f64;
    for (k, &t) in points.iter().enumerate() {
        let expected = first + k as f64 * h;
        if (t - expected).abs() > SPACING_RTOL * span {
            return Err(SgflmError::InvalidArgument(format!(
                "grid spacing is not uniform at index {k}: {t} vs {expected}"
            )));
        }
    }
    Ok(())
}

fn trapezoid(h: f64, samples: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = samples.len();
    let mut acc = 0.0;
    for (k, v) in samples.enumerate() {
        let w = if k == 0 || k + 1 == n { 0.5 } else { 1.0 };
        acc += w * v;
    }
    acc * h
}

/// Composite trapezoid approximation of `∫₀¹ f(t) g(t) dt`.
pub fn quad_inner_product(f: &FunctionGrid, g: &FunctionGrid) -> Result<f64> {
    f.ensure_same_grid(g)?;
    Ok(trapezoid(
        f.spacing(),
        f.values.iter().zip(&g.values).map(|(a, b)| a * b),
    ))
}

/// Basis coefficients of a function, or projection scores of a covariate curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreVector(pub Vec<f64>);

impl ScoreVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<f64>> for ScoreVector {
    fn from(v: Vec<f64>) -> Self {
        ScoreVector(v)
    }
}

/// The first `J` trigonometric basis functions evaluated on a shared grid:
/// `φ₁ = 1`, `φ_{2k} = √2 cos(2πkt)`, `φ_{2k+1} = √2 sin(2πkt)`.
#[derive(Debug, Clone)]
pub struct BasisSet {
    functions: Vec<FunctionGrid>,
}

impl BasisSet {
    pub fn num_functions(&self) -> usize {
        self.functions.len()
    }

    pub fn functions(&self) -> &[FunctionGrid] {
        &self.functions
    }

    pub fn function(&self, j: usize) -> &FunctionGrid {
        &self.functions[j]
    }

    pub fn grid_points(&self) -> &[f64] {
        self.functions[0].grid_points()
    }

    /// Values `φ_1(t_k), ..., φ_J(t_k)` at grid index `k`.
    pub fn row(&self, k: usize) -> Vec<f64> {
        self.functions.iter().map(|f| f.values[k]).collect()
    }

    /// Quadrature Gram matrix `[⟨φ_u, φ_v⟩]`.
    pub fn gram(&self) -> nalgebra::DMatrix<f64> {
        let j = self.functions.len();
        nalgebra::DMatrix::from_fn(j, j, |u, v| {
            quad_inner_product(&self.functions[u], &self.functions[v])
                .expect("basis functions share a grid")
        })
    }
}

/// Evaluates the `j`-th (zero-based) trigonometric basis function at `t`.
pub fn trig_basis_value(j: usize, t: f64) -> f64 {
    if j == 0 {
        return 1.0;
    }
    let k = j.div_ceil(2) as f64;
    if j % 2 == 1 {
        SQRT_2 * (2.0 * PI * k * t).cos()
    } else {
        SQRT_2 * (2.0 * PI * k * t).sin()
    }
}

pub fn make_trig_basis(num_functions: usize, grid_points: &[f64]) -> Result<BasisSet> {
    if num_functions == 0 {
        return Err(SgflmError::InvalidArgument(
            "basis must contain at least one function".into(),
        ));
    }
    if grid_points.len() < 2 * num_functions + 1 {
        return Err(SgflmError::InvalidArgument(format!(
            "{} grid points cannot resolve {} trigonometric functions (need at least {})",
            grid_points.len(),
            num_functions,
            2 * num_functions + 1
        )));
    }
    let functions = (0..num_functions)
        .map(|j| FunctionGrid::from_fn(grid_points, |t| trig_basis_value(j, t)))
        .collect::<Result<Vec<_>>>()?;
    Ok(BasisSet { functions })
}

/// Scores `∫ X φ_j dt` for every basis function.
pub fn project(x: &FunctionGrid, basis: &BasisSet) -> Result<ScoreVector> {
    basis
        .functions
        .iter()
        .map(|phi| quad_inner_product(x, phi))
        .collect::<Result<Vec<_>>>()
        .map(ScoreVector)
}

/// `Σ_j coeffs[j] φ_j(t)` on the basis grid. Shorter coefficient vectors use
/// the leading basis functions.
pub fn reconstruct(coeffs: &[f64], basis: &BasisSet) -> Result<FunctionGrid> {
    if coeffs.len() > basis.num_functions() {
        return Err(SgflmError::InvalidArgument(format!(
            "{} coefficients for a basis of {} functions",
            coeffs.len(),
            basis.num_functions()
        )));
    }
    let grid = basis.grid_points();
    let mut values = vec![0.0; grid.len()];
    for (c, phi) in coeffs.iter().zip(&basis.functions) {
        for (v, p) in values.iter_mut().zip(&phi.values) {
            *v += c * p;
        }
    }
    FunctionGrid::new(grid.to_vec(), values)
}

/// Returns `X_i - X̄` for each curve together with the sample mean `X̄`.
pub fn center_covariates(curves: &[FunctionGrid]) -> Result<(Vec<FunctionGrid>, FunctionGrid)> {
    let mean = mean_curve(curves)?;
    let centered = curves
        .iter()
        .map(|x| x.axpy(-1.0, &mean))
        .collect::<Result<Vec<_>>>()?;
    Ok((centered, mean))
}

/// Pointwise mean of a non-empty list of curves on a shared grid.
pub fn mean_curve(curves: &[FunctionGrid]) -> Result<FunctionGrid> {
    let first = curves
        .first()
        .ok_or_else(|| SgflmError::InvalidArgument("no curves to average".into()))?;
    let mut acc = vec![0.0; first.len()];
    for x in curves {
        first.ensure_same_grid(x)?;
        for (a, v) in acc.iter_mut().zip(&x.values) {
            *a += v;
        }
    }
    let n = curves.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    FunctionGrid::new(first.grid_points.clone(), acc)
}
