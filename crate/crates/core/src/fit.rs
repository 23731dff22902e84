//! Maximum composite likelihood fitting.
//!
//! The pipeline for one truncation level `p`:
//! 1. independence-model logistic regression (optionally on leading principal
//!    components of the scores) for `(α, β)`;
//! 2. golden-section search of the likelihood slice in `η` with `(α, β)` fixed;
//! 3. damped Newton ascent on `Σ_k l_c(θ | y_k)` with a Levenberg ridge and
//!    step halving.
//!
//! [`select_p_aic`] repeats this over candidate truncation levels.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{project, BasisSet, FunctionGrid};
use crate::error::{Result, SgflmError};
use crate::linalg::spd_solve;
use crate::model::{
    logistic, log1pexp, total_composite_loglik, total_derivatives, Dataset, Theta, DEFAULT_ETA_MAX,
};

/// Ridge added to the IRLS normal equations of the initializer.
pub const INIT_RIDGE: f64 = 1e-6;

const GOLDEN_TOL: f64 = 1e-4;
const LAMBDA_START: f64 = 1e-6;
const LAMBDA_MAX: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Logistic regression on leading principal components of the scores.
    Fpcr,
    /// Logistic regression on the first `p` basis scores.
    Direct,
    Zeros,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Spatial model with dependence parameter η.
    Sgflm,
    /// Independence model (η fixed at 0).
    Gflm,
}

impl std::str::FromStr for ModelKind {
    type Err = SgflmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgflm" => Ok(ModelKind::Sgflm),
            "gflm" => Ok(ModelKind::Gflm),
            other => Err(SgflmError::InvalidArgument(format!("unknown model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub p_candidates: Vec<usize>,
    pub eta_bounds: (f64, f64),
    pub max_iter: usize,
    /// Absolute tolerance on the sup-norm of the summed score.
    pub grad_tol: f64,
    pub step_halving_max: usize,
    pub init_mode: InitMode,
    pub eta_max: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            p_candidates: (1..=10).collect(),
            eta_bounds: (-DEFAULT_ETA_MAX, DEFAULT_ETA_MAX),
            max_iter: 100,
            grad_tol: 1e-6,
            step_halving_max: 30,
            init_mode: InitMode::Fpcr,
            eta_max: DEFAULT_ETA_MAX,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.eta_bounds;
        if !(lo < hi) || lo < -self.eta_max || hi > self.eta_max {
            return Err(SgflmError::InvalidArgument(format!(
                "eta bounds ({lo}, {hi}) must be increasing and within ±{}",
                self.eta_max
            )));
        }
        if !(self.grad_tol > 0.0) {
            return Err(SgflmError::InvalidArgument("grad_tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(SgflmError::InvalidArgument("max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PRow {
    pub p: usize,
    pub aic: Option<f64>,
    pub loglik: Option<f64>,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelKind,
    pub theta_hat: Theta,
    pub p_selected: usize,
    pub aic: f64,
    pub loglik: f64,
    pub converged: bool,
    pub n_iterations: usize,
    /// Sup-norm of the score over the free coordinates at `theta_hat`.
    pub grad_norm: f64,
    pub per_p_table: Vec<PRow>,
}

/// `AIC = 2q - 2 l_{c,N}(θ̂)`.
pub fn aic(num_params: usize, loglik: f64) -> f64 {
    2.0 * num_params as f64 - 2.0 * loglik
}

/// Number of estimated parameters at truncation level `p`.
pub fn num_params(model: ModelKind, p: usize) -> usize {
    match model {
        ModelKind::Sgflm => p + 2,
        ModelKind::Gflm => p + 1,
    }
}

#[derive(Debug, Clone)]
pub struct IrlsFit {
    /// Intercept first, then slopes.
    pub coef: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Logistic regression by iteratively reweighted least squares.
///
/// `design` holds the covariates without the intercept column; `ridge` is
/// added to the diagonal of every normal-equation matrix.
pub fn irls_logistic(
    design: &DMatrix<f64>,
    y: &[u8],
    ridge: f64,
    max_iter: usize,
    tol: f64,
) -> Result<IrlsFit> {
    let n = design.nrows();
    let k = design.ncols() + 1;
    if y.len() != n {
        return Err(SgflmError::InvalidArgument(format!(
            "{} responses for {n} design rows",
            y.len()
        )));
    }
    let x = |i: usize, m: usize| if m == 0 { 1.0 } else { design[(i, m - 1)] };
    let mut coef = DVector::<f64>::zeros(k);
    for it in 1..=max_iter {
        let mut info = DMatrix::<f64>::identity(k, k) * ridge;
        let mut score = DVector::<f64>::zeros(k);
        for i in 0..n {
            let lin: f64 = (0..k).map(|m| coef[m] * x(i, m)).sum();
            let mu = logistic(lin);
            let w = (mu * (1.0 - mu)).max(1e-12);
            let r = f64::from(y[i]) - mu;
            for u in 0..k {
                let xu = x(i, u);
                score[u] += r * xu;
                for v in 0..=u {
                    info[(u, v)] += w * xu * x(i, v);
                }
            }
        }
        score -= &coef * ridge;
        for u in 0..k {
            for v in 0..u {
                info[(v, u)] = info[(u, v)];
            }
        }
        let step = spd_solve(&info, &score).ok_or_else(|| {
            SgflmError::Numerical("IRLS information matrix is not positive definite".into())
        })?;
        if step.iter().any(|s| !s.is_finite()) {
            return Err(SgflmError::Numerical("IRLS produced a non-finite step".into()));
        }
        coef += &step;
        if step.amax() < tol {
            return Ok(IrlsFit {
                coef: coef.iter().copied().collect(),
                converged: true,
                iterations: it,
            });
        }
    }
    Ok(IrlsFit {
        coef: coef.iter().copied().collect(),
        converged: false,
        iterations: max_iter,
    })
}

fn pooled(datasets: &[Dataset], cols: usize) -> (DMatrix<f64>, Vec<u8>) {
    let total: usize = datasets.iter().map(|d| d.num_sites()).sum();
    let mut z = DMatrix::zeros(total, cols);
    let mut y = Vec::with_capacity(total);
    let mut row = 0;
    for ds in datasets {
        for i in 0..ds.num_sites() {
            for m in 0..cols {
                z[(row, m)] = ds.scores()[(i, m)];
            }
            row += 1;
        }
        y.extend_from_slice(ds.responses());
    }
    (z, y)
}

fn check_datasets(datasets: &[Dataset], p: usize) -> Result<()> {
    let first = datasets
        .first()
        .ok_or_else(|| SgflmError::InvalidArgument("no datasets to fit".into()))?;
    for ds in datasets {
        if ds.num_scores() < p {
            return Err(SgflmError::InvalidArgument(format!(
                "truncation level {p} exceeds the {} stored scores",
                ds.num_scores()
            )));
        }
        if ds.lattice().spec() != first.lattice().spec() {
            return Err(SgflmError::Data("replicates use different lattices".into()));
        }
    }
    Ok(())
}

/// Independence-model starting values `(α, β_1..β_p)` from pooled replicates.
///
/// With `rotate = true` the regression uses the leading `p` principal
/// components of all stored scores, and the fitted coefficients are rotated
/// back to the basis and truncated to the first `p`.
pub fn init_independence(datasets: &[Dataset], p: usize, rotate: bool) -> Result<(f64, Vec<f64>)> {
    check_datasets(datasets, p)?;
    let ones: usize = datasets.iter().flat_map(|d| d.responses()).map(|&v| v as usize).sum();
    let total: usize = datasets.iter().map(|d| d.num_sites()).sum();
    if ones == 0 || ones == total {
        return Err(SgflmError::Data(
            "pooled responses must contain both 0s and 1s".into(),
        ));
    }
    if p == 0 {
        let ybar = ones as f64 / total as f64;
        return Ok(((ybar / (1.0 - ybar)).ln(), Vec::new()));
    }
    let (design, rotation) = if rotate {
        let j = datasets[0].num_scores();
        let (z, _) = pooled(datasets, j);
        let rot = leading_components(&z, p);
        (&z * &rot, Some(rot))
    } else {
        (pooled(datasets, p).0, None)
    };
    let y: Vec<u8> = datasets.iter().flat_map(|d| d.responses().iter().copied()).collect();
    let fit = irls_logistic(&design, &y, INIT_RIDGE, 100, 1e-10)?;
    if !fit.converged {
        return Err(SgflmError::Numerical(format!(
            "IRLS initializer did not converge in {} iterations",
            fit.iterations
        )));
    }
    let alpha = fit.coef[0];
    let slopes = DVector::from_column_slice(&fit.coef[1..]);
    let beta = match rotation {
        Some(rot) => (rot * slopes).rows(0, p).iter().copied().collect(),
        None => slopes.iter().copied().collect(),
    };
    Ok((alpha, beta))
}

/// `J × p` matrix of the leading eigenvectors of the sample covariance of `z`.
fn leading_components(z: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
    let n = z.nrows() as f64;
    let means = z.row_mean();
    let mut centered = z.clone();
    for mut row in centered.row_iter_mut() {
        row -= &means;
    }
    let cov = centered.transpose() * &centered / (n - 1.0).max(1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut rot = DMatrix::zeros(z.ncols(), p);
    for (c, &k) in order.iter().take(p).enumerate() {
        let mut v = eig.eigenvectors.column(k).clone_owned();
        // Fix the sign so the largest-magnitude loading is positive.
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v = -v;
        }
        rot.set_column(c, &v);
    }
    rot
}

/// Golden-section maximization of `η ↦ Σ_k l_c((η, α₀, β₀) | y_k)` on
/// `eta_bounds`. The bounds themselves are candidates too.
pub fn init_eta_slice(
    datasets: &[Dataset],
    alpha0: f64,
    beta0: &[f64],
    eta_bounds: (f64, f64),
) -> Result<f64> {
    let slice = |eta: f64| total_composite_loglik(&Theta::new(eta, alpha0, beta0.to_vec()), datasets);
    let (mut a, mut b) = eta_bounds;
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = slice(c)?;
    let mut fd = slice(d)?;
    while b - a > GOLDEN_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = slice(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = slice(d)?;
        }
    }
    let mid = 0.5 * (a + b);
    let mut best = (mid, slice(mid)?);
    for eta in [eta_bounds.0, eta_bounds.1] {
        let v = slice(eta)?;
        if v > best.1 {
            best = (eta, v);
        }
    }
    Ok(best.0)
}

/// Outcome of a Newton run, before AIC bookkeeping.
#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub theta: Theta,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Objective after every accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

/// Damped Newton ascent on `Σ_k l_c`. When `free_eta` is false the η entry of
/// `start` is held fixed.
pub fn newton_maximize(
    datasets: &[Dataset],
    start: Theta,
    free_eta: bool,
    config: &FitConfig,
) -> Result<NewtonOutcome> {
    let first = if free_eta { 0 } else { 1 };
    let clamp = |mut t: Theta| {
        if free_eta {
            t.eta = t.eta.clamp(config.eta_bounds.0, config.eta_bounds.1);
        }
        t
    };
    let mut theta = clamp(start);
    let mut lambda = LAMBDA_START;
    let mut derivs = total_derivatives(&theta, datasets)?;
    let mut trace = vec![derivs.value];
    let dim = theta.dim();
    let k = dim - first;

    for iter in 0..config.max_iter {
        let grad = derivs.gradient.rows(first, k).clone_owned();
        let grad_norm = grad.amax();
        if !derivs.value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(SgflmError::Numerical("objective became non-finite".into()));
        }
        if grad_norm < config.grad_tol {
            return Ok(NewtonOutcome {
                loglik: derivs.value,
                theta,
                converged: true,
                iterations: iter,
                grad_norm,
                trace,
            });
        }
        let neg_hess = -derivs.hessian.view((first, first), (k, k)).clone_owned();
        // Near the optimum the gain of a step is below the rounding error of
        // the summed objective, so allow a decrease of a few ulps.
        let slack = 64.0 * f64::EPSILON * derivs.value.abs().max(1.0);
        let mut accepted = None;
        while lambda <= LAMBDA_MAX {
            let damped = &neg_hess + DMatrix::identity(k, k) * lambda;
            let Some(step) = spd_solve(&damped, &grad) else {
                lambda *= 10.0;
                continue;
            };
            let base = theta.to_vector();
            let mut scale = 1.0;
            for _ in 0..=config.step_halving_max {
                let mut cand = base.clone();
                for u in 0..k {
                    cand[first + u] += scale * step[u];
                }
                let cand = clamp(Theta::from_slice(cand.as_slice())?);
                let value = total_composite_loglik(&cand, datasets)?;
                if value.is_finite() && value >= derivs.value - slack {
                    accepted = Some(cand);
                    break;
                }
                scale *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
            lambda *= 10.0;
        }
        let Some(next) = accepted else {
            return Ok(NewtonOutcome {
                loglik: derivs.value,
                theta,
                converged: false,
                iterations: iter,
                grad_norm,
                trace,
            });
        };
        lambda = (lambda / 10.0).max(LAMBDA_START);
        theta = next;
        derivs = total_derivatives(&theta, datasets)?;
        trace.push(derivs.value);
    }
    let grad_norm = derivs.gradient.rows(first, k).amax();
    Ok(NewtonOutcome {
        loglik: derivs.value,
        converged: grad_norm < config.grad_tol,
        theta,
        iterations: config.max_iter,
        grad_norm,
        trace,
    })
}

fn starting_regression(datasets: &[Dataset], p: usize, mode: InitMode) -> (f64, Vec<f64>) {
    let attempt = match mode {
        InitMode::Fpcr => init_independence(datasets, p, true),
        InitMode::Direct => init_independence(datasets, p, false),
        InitMode::Zeros => return (0.0, vec![0.0; p]),
    };
    attempt.unwrap_or_else(|_| (0.0, vec![0.0; p]))
}

fn fit_fixed_p(datasets: &[Dataset], p: usize, model: ModelKind, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    check_datasets(datasets, p)?;
    let (alpha0, beta0) = starting_regression(datasets, p, config.init_mode);
    let (start, free_eta) = match model {
        ModelKind::Sgflm => {
            let eta0 = init_eta_slice(datasets, alpha0, &beta0, config.eta_bounds)?;
            (Theta::new(eta0, alpha0, beta0), true)
        }
        ModelKind::Gflm => (Theta::new(0.0, alpha0, beta0), false),
    };
    let out = newton_maximize(datasets, start, free_eta, config)?;
    let q = num_params(model, p);
    Ok(FitResult {
        model,
        aic: aic(q, out.loglik),
        loglik: out.loglik,
        converged: out.converged,
        n_iterations: out.iterations,
        grad_norm: out.grad_norm,
        per_p_table: vec![PRow {
            p,
            aic: Some(aic(q, out.loglik)),
            loglik: Some(out.loglik),
            converged: out.converged,
            error: None,
        }],
        theta_hat: out.theta,
        p_selected: p,
    })
}

/// Spatial model fit at truncation level `p`.
pub fn fit_sgflm(datasets: &[Dataset], p: usize, config: &FitConfig) -> Result<FitResult> {
    fit_fixed_p(datasets, p, ModelKind::Sgflm, config)
}

/// Independence-model fit at truncation level `p` (η fixed at 0).
pub fn fit_gflm(datasets: &[Dataset], p: usize, config: &FitConfig) -> Result<FitResult> {
    fit_fixed_p(datasets, p, ModelKind::Gflm, config)
}

pub fn fit_model(datasets: &[Dataset], p: usize, model: ModelKind, config: &FitConfig) -> Result<FitResult> {
    fit_fixed_p(datasets, p, model, config)
}

/// Fits every candidate truncation level and keeps the smallest AIC.
/// Converged fits are preferred over non-converged ones.
pub fn select_p_aic(datasets: &[Dataset], model: ModelKind, config: &FitConfig) -> Result<FitResult> {
    if config.p_candidates.is_empty() {
        return Err(SgflmError::InvalidArgument("no candidate truncation levels".into()));
    }
    let fits: Vec<(usize, Result<FitResult>)> = config
        .p_candidates
        .par_iter()
        .map(|&p| (p, fit_fixed_p(datasets, p, model, config)))
        .collect();
    let table: Vec<PRow> = fits
        .iter()
        .map(|(p, r)| match r {
            Ok(f) => PRow {
                p: *p,
                aic: Some(f.aic),
                loglik: Some(f.loglik),
                converged: f.converged,
                error: None,
            },
            Err(e) => PRow {
                p: *p,
                aic: None,
                loglik: None,
                converged: false,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let best = fits
        .into_iter()
        .filter_map(|(_, r)| r.ok())
        .min_by(|a, b| {
            (!a.converged, a.aic)
                .partial_cmp(&(!b.converged, b.aic))
                .unwrap_or(std::cmp::Ordering::Equal)
        });
    match best {
        Some(mut fit) => {
            fit.per_p_table = table;
            Ok(fit)
        }
        None => Err(SgflmError::Numerical(format!(
            "every truncation level failed: {}",
            table
                .iter()
                .filter_map(|r| r.error.as_ref().map(|e| format!("p={}: {e}", r.p)))
                .collect::<Vec<_>>()
                .join("; ")
        ))),
    }
}

/// `α + Σ_{j≤p} β_j ∫ X̄ φ_j dt`: the intercept that gives the same fitted
/// means on mean-centered covariates as `(α, β)` gives on the raw ones.
pub fn adjust_intercept_for_centering(
    alpha_hat: f64,
    beta_hat: &[f64],
    xbar: &FunctionGrid,
    basis: &BasisSet,
) -> Result<f64> {
    if beta_hat.len() > basis.num_functions() {
        return Err(SgflmError::InvalidArgument(format!(
            "{} slopes for a basis of {} functions",
            beta_hat.len(),
            basis.num_functions()
        )));
    }
    let s = project(xbar, basis)?;
    Ok(shift_intercept(alpha_hat, beta_hat, &s.0))
}

/// `α + Σ_j β_j m_j` for precomputed mean scores `m`.
pub fn shift_intercept(alpha: f64, beta: &[f64], mean_scores: &[f64]) -> f64 {
    alpha + beta.iter().zip(mean_scores).map(|(b, m)| b * m).sum::<f64>()
}

/// Inverse of [`shift_intercept`]: raw-covariate intercept from a
/// centered-covariate fit.
pub fn raw_intercept(alpha_centered: f64, beta: &[f64], mean_scores: &[f64]) -> f64 {
    alpha_centered - beta.iter().zip(mean_scores).map(|(b, m)| b * m).sum::<f64>()
}

/// Independence log-likelihood `Σ y log κ + (1-y) log(1-κ)` over replicates.
pub fn independence_loglik(theta: &Theta, datasets: &[Dataset]) -> f64 {
    datasets
        .iter()
        .map(|ds| {
            crate::model::linear_predictors(theta, ds.scores())
                .iter()
                .zip(ds.responses())
                .map(|(&l, &y)| f64::from(y) * l - log1pexp(l))
                .sum::<f64>()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{make_trig_basis, uniform_grid};
    use crate::lattice::{build_lattice, NeighborhoodKind};
    use crate::model::DatasetMeta;
    use crate::simulate::{simulate_case, SimConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn small_case(eta: f64, replicates: usize, seed: u64) -> Vec<Dataset> {
        let mut c = SimConfig::standard(eta);
        c.lattice.rows = 10;
        c.lattice.cols = 10;
        c.replicates = replicates;
        c.burn_in = 50;
        c.thin = 20;
        c.seed = seed;
        simulate_case(&c, 0, 0).unwrap().datasets
    }

    /// Independent Bernoulli data with the default regression function.
    fn independent_data(replicates: usize, seed: u64) -> (Vec<Dataset>, Vec<f64>) {
        let lattice = Arc::new(build_lattice(10, 10, true, NeighborhoodKind::FourNearest).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = vec![0.3, 1.0, 0.5, 1.0 / 3.0];
        let data = (0..replicates)
            .map(|_| {
                let scores = DMatrix::from_fn(100, 5, |_, j| {
                    let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
                    z / (j + 1) as f64
                });
                let y = (0..100)
                    .map(|i| {
                        let lin = truth[0] + (0..3).map(|m| truth[1 + m] * scores[(i, m)]).sum::<f64>();
                        u8::from(rng.random::<f64>() < logistic(lin))
                    })
                    .collect();
                Dataset::new(lattice.clone(), scores, y, DatasetMeta::plain(5)).unwrap()
            })
            .collect();
        (data, truth)
    }

    #[test]
    fn aic_formula() {
        assert_eq!(aic(5, -100.0), 210.0);
        assert_eq!(num_params(ModelKind::Sgflm, 3), 5);
        assert_eq!(num_params(ModelKind::Gflm, 3), 4);
    }

    #[test]
    fn intercept_only_initializer() {
        let lattice = Arc::new(build_lattice(4, 4, true, NeighborhoodKind::FourNearest).unwrap());
        let y: Vec<u8> = (0..16).map(|i| u8::from(i % 4 == 0)).collect();
        let ds = Dataset::new(lattice, DMatrix::zeros(16, 3), y, DatasetMeta::plain(3)).unwrap();
        let (a, b) = init_independence(std::slice::from_ref(&ds), 2, false).unwrap();
        let want = (0.25f64 / 0.75).ln();
        assert!((a - want).abs() < 1e-6, "{a} vs {want}");
        assert!(b.iter().all(|v| v.abs() < 1e-6));
        let (a0, _) = init_independence(std::slice::from_ref(&ds), 0, false).unwrap();
        assert!((a0 - want).abs() < 1e-12);
    }

    #[test]
    fn initializer_rejects_constant_responses() {
        let lattice = Arc::new(build_lattice(3, 3, true, NeighborhoodKind::FourNearest).unwrap());
        let ds = Dataset::new(lattice, DMatrix::zeros(9, 1), vec![1; 9], DatasetMeta::plain(1)).unwrap();
        assert!(matches!(init_independence(&[ds], 1, false), Err(SgflmError::Data(_))));
    }

    #[test]
    fn initializer_recovers_independent_truth() {
        let (data, truth) = independent_data(40, 12);
        let (a, b) = init_independence(&data, 3, false).unwrap();
        // Standard errors from the inverse Fisher information at the estimate.
        let theta = Theta::new(0.0, a, b.clone());
        let d = total_derivatives(&theta, &data).unwrap();
        let info = -d.hessian.view((1, 1), (4, 4)).clone_owned();
        let cov = info.try_inverse().unwrap();
        let est = [a, b[0], b[1], b[2]];
        for m in 0..4 {
            let se = cov[(m, m)].sqrt();
            assert!((est[m] - truth[m]).abs() < 4.0 * se, "coef {m}: {} vs {} (se {se})", est[m], truth[m]);
        }
    }

    #[test]
    fn rotation_is_invariant_when_p_equals_j() {
        let (data, _) = independent_data(5, 3);
        let (a1, b1) = init_independence(&data, 5, true).unwrap();
        let (a2, b2) = init_independence(&data, 5, false).unwrap();
        let t1 = Theta::new(0.0, a1, b1);
        let t2 = Theta::new(0.0, a2, b2);
        for ds in &data {
            let f1 = crate::model::MeanField::new(&t1, ds.scores());
            let f2 = crate::model::MeanField::new(&t2, ds.scores());
            for (x, y) in f1.kappa.iter().zip(&f2.kappa) {
                assert!((x - y).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn eta_slice_stays_in_bounds_and_finds_null() {
        let data = small_case(0.0, 20, 1);
        let (a, b) = init_independence(&data, 3, true).unwrap();
        let eta = init_eta_slice(&data, a, &b, (-1.0, 1.0)).unwrap();
        assert!(eta.abs() < 0.1, "eta0 = {eta}");
        let edge = init_eta_slice(&data, a, &b, (0.5, 1.0)).unwrap();
        assert!((0.5..=1.0).contains(&edge));
    }

    #[test]
    fn eta_slice_is_unimodal_on_dependent_data() {
        let data = small_case(0.6, 10, 2);
        let (a, b) = init_independence(&data, 3, true).unwrap();
        let vals: Vec<f64> = (0..50)
            .map(|k| {
                let eta = -2.0 + 4.0 * k as f64 / 49.0;
                total_composite_loglik(&Theta::new(eta, a, b.clone()), &data).unwrap()
            })
            .collect();
        let local_max = (1..49).filter(|&k| vals[k] > vals[k - 1] && vals[k] > vals[k + 1]).count();
        assert_eq!(local_max, 1);
    }

    #[test]
    fn newton_converges_and_ascends() {
        let data = small_case(0.6, 10, 3);
        let cfg = FitConfig::default();
        let fit = fit_sgflm(&data, 3, &cfg).unwrap();
        assert!(fit.converged);
        let d = total_derivatives(&fit.theta_hat, &data).unwrap();
        assert!(d.gradient.amax() < cfg.grad_tol);
        assert!((fit.loglik - d.value).abs() < 1e-9);

        let out = newton_maximize(&data, Theta::new(0.0, 0.0, vec![0.0; 3]), true, &cfg).unwrap();
        assert!(out.trace.windows(2).all(|w| w[1] >= w[0] - 1e-10 * w[0].abs()));
        assert!(out.converged);
    }

    #[test]
    fn frozen_eta_matches_irls() {
        let (data, _) = independent_data(6, 8);
        let cfg = FitConfig::default();
        let fit = fit_gflm(&data, 3, &cfg).unwrap();
        let (z, y) = pooled(&data, 3);
        let irls = irls_logistic(&z, &y, 0.0, 100, 1e-12).unwrap();
        assert!(irls.converged);
        let got = fit.theta_hat.regression_coefficients();
        for (g, w) in got.iter().zip(&irls.coef) {
            assert!((g - w).abs() < 1e-6);
        }
        assert_eq!(fit.theta_hat.eta, 0.0);
        assert!((fit.loglik - independence_loglik(&fit.theta_hat, &data)).abs() < 1e-8);
    }

    #[test]
    fn gflm_is_sgflm_with_eta_frozen() {
        let data = small_case(0.9, 6, 4);
        let cfg = FitConfig::default();
        let g = fit_gflm(&data, 2, &cfg).unwrap();
        let (a, b) = init_independence(&data, 2, true).unwrap();
        let frozen = newton_maximize(&data, Theta::new(0.0, a, b), false, &cfg).unwrap();
        for (x, y) in g.theta_hat.regression_coefficients().iter().zip(frozen.theta.regression_coefficients()) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn intercept_only_gflm() {
        let lattice = Arc::new(build_lattice(5, 5, true, NeighborhoodKind::FourNearest).unwrap());
        let y: Vec<u8> = (0..25).map(|i| u8::from(i % 5 < 2)).collect();
        let ds = Dataset::new(lattice, DMatrix::zeros(25, 2), y, DatasetMeta::plain(2)).unwrap();
        let fit = fit_gflm(&[ds], 0, &FitConfig::default()).unwrap();
        assert!((fit.theta_hat.alpha - (0.4f64 / 0.6).ln()).abs() < 1e-9);
    }

    #[test]
    fn aic_selection_table_and_nesting() {
        let data = small_case(0.6, 8, 5);
        let cfg = FitConfig {
            p_candidates: vec![1, 2, 3, 4, 5],
            ..FitConfig::default()
        };
        let fit = select_p_aic(&data, ModelKind::Sgflm, &cfg).unwrap();
        assert_eq!(fit.per_p_table.len(), 5);
        let ll: Vec<f64> = fit.per_p_table.iter().map(|r| r.loglik.unwrap()).collect();
        assert!(ll.windows(2).all(|w| w[1] >= w[0] - 1e-6), "{ll:?}");
        let best = fit
            .per_p_table
            .iter()
            .min_by(|a, b| a.aic.partial_cmp(&b.aic).unwrap())
            .unwrap();
        assert_eq!(best.p, fit.p_selected);
        assert!(select_p_aic(&data, ModelKind::Sgflm, &FitConfig { p_candidates: vec![], ..cfg }).is_err());
    }

    #[test]
    fn permutation_invariance() {
        let data = small_case(0.6, 6, 6);
        let cfg = FitConfig::default();
        let a = fit_sgflm(&data, 3, &cfg).unwrap();
        let mut rev = data.clone();
        rev.reverse();
        let b = fit_sgflm(&rev, 3, &cfg).unwrap();
        for (x, y) in a.theta_hat.to_vector().iter().zip(b.theta_hat.to_vector().iter()) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn scaling_covariance() {
        let data = small_case(0.6, 6, 7);
        let c = 2.5;
        let scaled: Vec<Dataset> = data
            .iter()
            .map(|d| Dataset::new(d.lattice_arc().clone(), d.scores() * c, d.responses().to_vec(), d.meta.clone()).unwrap())
            .collect();
        let cfg = FitConfig::default();
        let a = fit_sgflm(&data, 3, &cfg).unwrap();
        let b = fit_sgflm(&scaled, 3, &cfg).unwrap();
        assert!((a.theta_hat.eta - b.theta_hat.eta).abs() < 1e-6);
        for (x, y) in a.theta_hat.beta.iter().zip(&b.theta_hat.beta) {
            assert!((x / c - y).abs() < 1e-6);
        }
    }

    #[test]
    fn centering_adjustment() {
        let g = uniform_grid(50).unwrap();
        let basis = make_trig_basis(5, &g).unwrap();
        let zero = FunctionGrid::zeros(&g).unwrap();
        assert_eq!(adjust_intercept_for_centering(0.7, &[1.0, 2.0], &zero, &basis).unwrap(), 0.7);
        let xbar = FunctionGrid::from_fn(&g, |t| 4.0 * t * (3.0 * t).sin()).unwrap();
        assert_eq!(adjust_intercept_for_centering(0.7, &[0.0, 0.0], &xbar, &basis).unwrap(), 0.7);

        // κ from raw scores with α equals κ from centered scores with the
        // adjusted intercept.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let curves: Vec<FunctionGrid> = (0..30)
            .map(|_| {
                let a: f64 = rng.random_range(-1.0..1.0);
                let b: f64 = rng.random_range(-1.0..1.0);
                FunctionGrid::from_fn(&g, |t| 4.0 * t * (3.0 * t).sin() + a * t + b * (5.0 * t).cos()).unwrap()
            })
            .collect();
        let (centered, mean) = crate::basis::center_covariates(&curves).unwrap();
        let beta = [0.8, -0.4, 0.3];
        let alpha = -0.2;
        let adjusted = adjust_intercept_for_centering(alpha, &beta, &mean, &basis).unwrap();
        let s_mean = project(&mean, &basis).unwrap();
        assert!((raw_intercept(adjusted, &beta, &s_mean.0) - alpha).abs() < 1e-14);
        for (raw, cen) in curves.iter().zip(&centered) {
            let sr = project(raw, &basis).unwrap();
            let sc = project(cen, &basis).unwrap();
            let k_raw = crate::model::kappa(&Theta::new(0.0, alpha, beta.to_vec()), &sr.0);
            let k_cen = crate::model::kappa(&Theta::new(0.0, adjusted, beta.to_vec()), &sc.0);
            assert!((k_raw - k_cen).abs() < 1e-10);
        }
        assert!(adjust_intercept_for_centering(0.0, &[0.0; 6], &mean, &basis).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = FitConfig::default();
        c.eta_bounds = (1.0, -1.0);
        assert!(c.validate().is_err());
        c.eta_bounds = (-3.0, 1.0);
        assert!(c.validate().is_err());
        let mut c = FitConfig::default();
        c.grad_tol = 0.0;
        assert!(c.validate().is_err());
    }
}
