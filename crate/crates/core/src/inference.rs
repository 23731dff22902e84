//! Sandwich (Godambe) inference for fitted models.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::basis::BasisSet;
use crate::error::{Result, SgflmError};
use crate::linalg::{condition_number, spd_inverse, symmetrize};
use crate::model::{composite_loglik_derivatives, Dataset, Theta};

/// Empirical sandwich matrices at `θ̂`.
///
/// For the independence model (`includes_eta == false`) every matrix is over
/// `(α, β)` only and `g11_inv` is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichMatrices {
    pub h: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub g11_inv: Option<f64>,
    /// Block of `g_inv` for `(α, β_1..β_p)`.
    pub g22_inv: DMatrix<f64>,
    pub includes_eta: bool,
    pub cond_h: f64,
    pub cond_j: f64,
}

impl SandwichMatrices {
    /// Builds `G = H J⁻¹ H` and `G⁻¹ = H⁻¹ J H⁻¹` from given `H` and `J`.
    pub fn from_hj(h: DMatrix<f64>, j: DMatrix<f64>, includes_eta: bool) -> Result<Self> {
        if h.shape() != j.shape() || h.nrows() != h.ncols() || h.nrows() < 1 + usize::from(includes_eta) {
            return Err(SgflmError::InvalidArgument(format!(
                "H is {:?} and J is {:?}",
                h.shape(),
                j.shape()
            )));
        }
        let h = symmetrize(&h);
        let j = symmetrize(&j);
        let (h_inv, cond_h) = spd_inverse(&h, "H")?;
        let (j_inv, cond_j) = spd_inverse(&j, "J")?;
        let g = symmetrize(&(&h * &j_inv * &h));
        let g_inv = symmetrize(&(&h_inv * &j * &h_inv));
        let d = h.nrows();
        let (g11_inv, g22_inv) = if includes_eta {
            (Some(g_inv[(0, 0)]), g_inv.view((1, 1), (d - 1, d - 1)).clone_owned())
        } else {
            (None, g_inv.clone())
        };
        Ok(SandwichMatrices {
            h,
            j,
            g,
            g_inv,
            g11_inv,
            g22_inv,
            includes_eta,
            cond_h,
            cond_j,
        })
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }
}

fn collect_hj(datasets: &[Dataset], theta: &Theta, first: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if datasets.is_empty() {
        return Err(SgflmError::InvalidArgument("no datasets".into()));
    }
    let k = theta.dim() - first;
    let mut h = DMatrix::zeros(k, k);
    let mut j = DMatrix::zeros(k, k);
    for ds in datasets {
        let d = composite_loglik_derivatives(theta, ds)?;
        let g = d.gradient.rows(first, k).clone_owned();
        h -= d.hessian.view((first, first), (k, k));
        j += &g * g.transpose();
    }
    let n = datasets.len() as f64;
    Ok((h / n, j / n))
}

/// Empirical `Ĥ_N`, `Ĵ_N` and Godambe matrices for the spatial model.
pub fn sandwich(datasets: &[Dataset], theta_hat: &Theta) -> Result<SandwichMatrices> {
    let (h, j) = collect_hj(datasets, theta_hat, 0)?;
    SandwichMatrices::from_hj(h, j, true)
}

/// Sandwich matrices of the independence model: η is fixed at zero and
/// dropped from every matrix.
pub fn sandwich_independence(datasets: &[Dataset], theta_hat: &Theta) -> Result<SandwichMatrices> {
    let mut t = theta_hat.clone();
    t.eta = 0.0;
    let (h, j) = collect_hj(datasets, &t, 1)?;
    SandwichMatrices::from_hj(h, j, false)
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(SgflmError::InvalidArgument(format!("level {level} must lie in (0, 1)")));
    }
    Ok(())
}

/// Two-sided normal quantile `z_{(1+level)/2}`.
pub fn normal_quantile(level: f64) -> Result<f64> {
    check_level(level)?;
    Ok(Normal::standard().inverse_cdf(0.5 * (1.0 + level)))
}

pub fn chi_squared_quantile(df: usize, level: f64) -> Result<f64> {
    check_level(level)?;
    let dist = ChiSquared::new(df as f64)
        .map_err(|e| SgflmError::InvalidArgument(format!("chi-squared with {df} df: {e}")))?;
    Ok(dist.inverse_cdf(level))
}

/// `η̂ ± z_{(1+level)/2} √(G11_inv / N)`.
pub fn ci_eta_from(g11_inv: f64, eta_hat: f64, n: usize, level: f64) -> Result<(f64, f64)> {
    if !(g11_inv > 0.0) || !g11_inv.is_finite() {
        return Err(SgflmError::Numerical(format!("G11 inverse {g11_inv} is not positive")));
    }
    if n == 0 {
        return Err(SgflmError::InvalidArgument("N must be positive".into()));
    }
    let half = if level == 0.0 {
        0.0
    } else {
        normal_quantile(level)? * (g11_inv / n as f64).sqrt()
    };
    Ok((eta_hat - half, eta_hat + half))
}

pub fn ci_eta(s: &SandwichMatrices, eta_hat: f64, n: usize, level: f64) -> Result<(f64, f64)> {
    let g11 = s
        .g11_inv
        .ok_or_else(|| SgflmError::InvalidArgument("sandwich has no η component".into()))?;
    ci_eta_from(g11, eta_hat, n, level)
}

fn standardize(quad: f64, df: usize) -> f64 {
    (quad - df as f64) / (2.0 * df as f64).sqrt()
}

/// `{N (θ̂−θ₀)ᵀ Ĝ (θ̂−θ₀) − (p+2)} / √(2(p+2))`.
pub fn quadratic_stat_theta(s: &SandwichMatrices, theta_hat: &Theta, theta0: &Theta, n: usize) -> Result<f64> {
    let a = theta_hat.to_vector();
    let b = theta0.to_vector();
    let (d, first) = if s.includes_eta { (&a - &b, 0) } else { (&a - &b, 1) };
    let k = s.dim();
    if a.len() != b.len() || a.len() - first != k {
        return Err(SgflmError::InvalidArgument(format!(
            "θ̂ has {} entries, θ₀ {}, sandwich {k}",
            a.len(),
            b.len()
        )));
    }
    let d = d.rows(first, k).clone_owned();
    let quad = n as f64 * (d.transpose() * &s.g * &d)[(0, 0)];
    Ok(standardize(quad, k))
}

/// `{N (β̂−β₀)ᵀ (Ĝ22⁻)⁻¹ (β̂−β₀) − (p+1)} / √(2(p+1))` where the vectors
/// include the intercept.
pub fn quadratic_stat_beta(s: &SandwichMatrices, beta_hat: &[f64], beta0: &[f64], n: usize) -> Result<f64> {
    let k = s.g22_inv.nrows();
    if beta_hat.len() != k || beta0.len() != k {
        return Err(SgflmError::InvalidArgument(format!(
            "coefficient vectors of length {} and {} for a {k}-dimensional block",
            beta_hat.len(),
            beta0.len()
        )));
    }
    let (prec, _) = spd_inverse(&s.g22_inv, "G22 inverse")?;
    let d = DVector::from_iterator(k, beta_hat.iter().zip(beta0).map(|(a, b)| a - b));
    let quad = n as f64 * (d.transpose() * prec * &d)[(0, 0)];
    Ok(standardize(quad, k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBand {
    pub grid_points: Vec<f64>,
    pub center: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
    pub simultaneous: bool,
}

impl ConfidenceBand {
    pub fn contains(&self, values: &[f64]) -> bool {
        values.len() == self.center.len()
            && values
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    pub fn envelope(&self) -> (f64, f64) {
        let lo = self.lower.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.upper.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// Band for `β(t) = Σ_{j≤p} β_j φ_j(t)` from the `(α, β)` block of `Ĝ⁻¹`.
///
/// The simultaneous band uses the `χ²_{p+1}` quantile of the coefficient
/// ellipsoid; the pointwise band uses the normal quantile with the same
/// variance function.
pub fn band_beta(
    s: &SandwichMatrices,
    theta_hat: &Theta,
    basis: &BasisSet,
    n: usize,
    level: f64,
    simultaneous: bool,
) -> Result<ConfidenceBand> {
    let p = theta_hat.p();
    if s.g22_inv.nrows() != p + 1 {
        return Err(SgflmError::InvalidArgument(format!(
            "G22 inverse is {}×{} but θ̂ has p = {p}",
            s.g22_inv.nrows(),
            s.g22_inv.ncols()
        )));
    }
    if p > basis.num_functions() {
        return Err(SgflmError::InvalidArgument(format!(
            "p = {p} exceeds the {} basis functions",
            basis.num_functions()
        )));
    }
    if n == 0 {
        return Err(SgflmError::InvalidArgument("N must be positive".into()));
    }
    let crit = if simultaneous {
        chi_squared_quantile(p + 1, level)?.sqrt()
    } else {
        normal_quantile(level)?
    };
    let cov = s.g22_inv.view((1, 1), (p, p));
    let grid = basis.grid_points().to_vec();
    let mut center = Vec::with_capacity(grid.len());
    let mut lower = Vec::with_capacity(grid.len());
    let mut upper = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let phi = DVector::from_iterator(p, (0..p).map(|j| basis.function(j).values()[k]));
        let c = phi.dot(&DVector::from_column_slice(&theta_hat.beta));
        let var = (phi.transpose() * cov * &phi)[(0, 0)].max(0.0);
        let half = crit * (var / n as f64).sqrt();
        center.push(c);
        lower.push(c - half);
        upper.push(c + half);
    }
    Ok(ConfidenceBand {
        grid_points: grid,
        center,
        lower,
        upper,
        level,
        simultaneous,
    })
}

/// Condition numbers of `H`, `J` and `G⁻¹` for diagnostics output.
pub fn condition_report(s: &SandwichMatrices) -> [(&'static str, f64); 3] {
    [("H", s.cond_h), ("J", s.cond_j), ("G_inv", condition_number(&s.g_inv))]
}
