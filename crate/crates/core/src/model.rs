//! The binary-conditionals spatial functional model in its centered
//! autologistic form.
//!
//! For site `i` with truncated scores `ε^(i)`:
//!
//! ```text
//! logit κ_i = α + Σ_{m≤p} β_m ε_m^(i)
//! A_i       = logit κ_i + η Σ_{j∈N_i} (y_j - κ_j)
//! B_i       = log(1 + e^{A_i})
//! l_c(θ|y)  = Σ_i (A_i y_i - B_i)
//! ```
//!
//! The parameter vector is ordered `θ = (η, α, β_1, ..., β_p)`; every gradient
//! and Hessian in the crate uses this ordering.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::GridSpec;
use crate::error::{Result, SgflmError};
use crate::lattice::Lattice;

/// Default bound on `|η|`; the autologistic field degenerates for large η.
pub const DEFAULT_ETA_MAX: f64 = 2.0;

/// `1 / (1 + e^{-x})` without overflow for large `|x|`.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
#[inline]
pub fn log1pexp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub eta: f64,
    pub alpha: f64,
    pub beta: Vec<f64>,
}

impl Theta {
    pub fn new(eta: f64, alpha: f64, beta: Vec<f64>) -> Self {
        Theta { eta, alpha, beta }
    }

    /// Truncation level `p`.
    pub fn p(&self) -> usize {
        self.beta.len()
    }

    /// Length of the full parameter vector, `p + 2`.
    pub fn dim(&self) -> usize {
        self.beta.len() + 2
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim());
        v[0] = self.eta;
        v[1] = self.alpha;
        for (k, b) in self.beta.iter().enumerate() {
            v[2 + k] = *b;
        }
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() < 2 {
            return Err(SgflmError::InvalidArgument(format!(
                "parameter vector needs at least 2 entries, got {}",
                v.len()
            )));
        }
        Ok(Theta {
            eta: v[0],
            alpha: v[1],
            beta: v[2..].to_vec(),
        })
    }

    /// `(α, β_1, ..., β_p)`, the regression block including the intercept.
    pub fn regression_coefficients(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.p() + 1);
        v.push(self.alpha);
        v.extend_from_slice(&self.beta);
        v
    }

    pub fn validate(&self, eta_max: f64) -> Result<()> {
        if !self.eta.is_finite() || !self.alpha.is_finite() || self.beta.iter().any(|b| !b.is_finite())
        {
            return Err(SgflmError::InvalidArgument(
                "parameter vector has non-finite entries".into(),
            ));
        }
        if self.eta.abs() > eta_max {
            return Err(SgflmError::InvalidArgument(format!(
                "|eta| = {} exceeds the bound {eta_max}",
                self.eta.abs()
            )));
        }
        Ok(())
    }
}

/// Provenance carried alongside a replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub grid: GridSpec,
    pub basis_size: usize,
    /// Whether the scores were computed from mean-centered covariate curves.
    pub centered: bool,
    /// `∫ X̄ φ_j dt` for the curve mean removed before projection, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicate: Option<usize>,
}

impl DatasetMeta {
    pub fn plain(basis_size: usize) -> Self {
        DatasetMeta {
            grid: GridSpec::default(),
            basis_size,
            centered: false,
            mean_scores: None,
            seed: None,
            replicate: None,
        }
    }
}

/// One replicate: projection scores and binary responses on a lattice.
#[derive(Debug, Clone)]
pub struct Dataset {
    lattice: Arc<Lattice>,
    scores: DMatrix<f64>,
    responses: Vec<u8>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(
        lattice: Arc<Lattice>,
        scores: DMatrix<f64>,
        responses: Vec<u8>,
        meta: DatasetMeta,
    ) -> Result<Self> {
        let n = lattice.num_sites();
        if scores.nrows() != n {
            return Err(SgflmError::Data(format!(
                "score matrix has {} rows for {n} sites",
                scores.nrows()
            )));
        }
        if responses.len() != n {
            return Err(SgflmError::Data(format!(
                "{} responses for {n} sites",
                responses.len()
            )));
        }
        if let Some(bad) = responses.iter().position(|&y| y > 1) {
            return Err(SgflmError::Data(format!(
                "response at site {bad} is {}, expected 0 or 1",
                responses[bad]
            )));
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(SgflmError::Data("score matrix has non-finite entries".into()));
        }
        Ok(Dataset {
            lattice,
            scores,
            responses,
            meta,
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn lattice_arc(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    /// `n × J` matrix of scores `ε_j^(i)`.
    pub fn scores(&self) -> &DMatrix<f64> {
        &self.scores
    }

    pub fn responses(&self) -> &[u8] {
        &self.responses
    }

    pub fn num_sites(&self) -> usize {
        self.responses.len()
    }

    pub fn num_scores(&self) -> usize {
        self.scores.ncols()
    }

    pub fn with_responses(&self, responses: Vec<u8>) -> Result<Self> {
        Dataset::new(self.lattice.clone(), self.scores.clone(), responses, self.meta.clone())
    }

    fn check_truncation(&self, p: usize) -> Result<()> {
        if p > self.num_scores() {
            return Err(SgflmError::InvalidArgument(format!(
                "truncation level {p} exceeds the {} stored scores",
                self.num_scores()
            )));
        }
        Ok(())
    }
}

/// `α + Σ_{m≤p} β_m ε_m^(i)` for every site.
pub fn linear_predictors(theta: &Theta, scores: &DMatrix<f64>) -> Vec<f64> {
    let p = theta.p();
    (0..scores.nrows())
        .map(|i| {
            let mut acc = theta.alpha;
            for m in 0..p {
                acc += theta.beta[m] * scores[(i, m)];
            }
            acc
        })
        .collect()
}

/// Independence-model mean `κ_i` for one row of scores.
pub fn kappa(theta: &Theta, scores_row: &[f64]) -> f64 {
    let lin = theta.alpha
        + theta
            .beta
            .iter()
            .zip(scores_row)
            .map(|(b, e)| b * e)
            .sum::<f64>();
    logistic(lin)
}

/// Per-site linear predictors and independence means for a fixed θ.
#[derive(Debug, Clone)]
pub struct MeanField {
    pub lin: Vec<f64>,
    pub kappa: Vec<f64>,
}

impl MeanField {
    pub fn new(theta: &Theta, scores: &DMatrix<f64>) -> Self {
        let lin = linear_predictors(theta, scores);
        let kappa = lin.iter().map(|&l| logistic(l)).collect();
        MeanField { lin, kappa }
    }

    /// `A_i` given the current responses `y`, which may be any reals.
    #[inline]
    pub fn natural_parameter<Y: Copy + Into<f64>>(
        &self,
        lattice: &Lattice,
        eta: f64,
        y: &[Y],
        i: usize,
    ) -> f64 {
        let dep: f64 = lattice
            .neighbors(i)
            .iter()
            .map(|&j| y[j].into() - self.kappa[j])
            .sum();
        self.lin[i] + eta * dep
    }
}

fn check_site(dataset: &Dataset, i: usize) -> Result<()> {
    if i >= dataset.num_sites() {
        return Err(SgflmError::InvalidArgument(format!(
            "site {i} out of range for {} sites",
            dataset.num_sites()
        )));
    }
    Ok(())
}

pub fn natural_parameter(theta: &Theta, dataset: &Dataset, i: usize) -> Result<f64> {
    check_site(dataset, i)?;
    dataset.check_truncation(theta.p())?;
    let field = MeanField::new(theta, dataset.scores());
    Ok(field.natural_parameter(dataset.lattice(), theta.eta, dataset.responses(), i))
}

/// `P(Y_i = 1 | y(N_i))`.
pub fn conditional_probability(theta: &Theta, dataset: &Dataset, i: usize) -> Result<f64> {
    natural_parameter(theta, dataset, i).map(logistic)
}

/// Log composite likelihood `l_c(θ | y)` of one replicate.
pub fn composite_loglik(theta: &Theta, dataset: &Dataset) -> Result<f64> {
    dataset.check_truncation(theta.p())?;
    let field = MeanField::new(theta, dataset.scores());
    let y = dataset.responses();
    let lattice = dataset.lattice();
    let mut total = 0.0;
    for i in 0..dataset.num_sites() {
        let a = field.natural_parameter(lattice, theta.eta, y, i);
        total += a * f64::from(y[i]) - log1pexp(a);
    }
    Ok(total)
}

/// Value, gradient and Hessian of `l_c` with respect to `(η, α, β)`.
#[derive(Debug, Clone)]
pub struct CLDerivatives {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl CLDerivatives {
    pub fn zeros(dim: usize) -> Self {
        CLDerivatives {
            value: 0.0,
            gradient: DVector::zeros(dim),
            hessian: DMatrix::zeros(dim, dim),
        }
    }

    pub fn accumulate(&mut self, other: &CLDerivatives) {
        self.value += other.value;
        self.gradient += &other.gradient;
        self.hessian += &other.hessian;
    }
}

/// Analytic derivatives of `l_c` for one replicate.
///
/// With `x_i = (1, ε_1^(i), ..., ε_p^(i))`, `w_j = κ_j(1 - κ_j)` and
/// `r_i = y_i - logistic(A_i)`:
///
/// ```text
/// ∂A_i/∂η   = Σ_{j∈N_i} (y_j - κ_j)
/// ∂A_i/∂γ   = x_i - η Σ_{j∈N_i} w_j x_j                     (γ = (α, β))
/// ∂²A_i/∂η∂γ = -Σ_{j∈N_i} w_j x_j
/// ∂²A_i/∂γ∂γ' = -η Σ_{j∈N_i} w_j (1 - 2κ_j) x_j x_j'
/// ```
///
/// and `l_c'' = -Σ π_i(1-π_i) ∇A_i ∇A_iᵀ + Σ r_i ∇²A_i`. The last sum is
/// regrouped by neighbor `j` using symmetry of the neighborhoods.
pub fn composite_loglik_derivatives(theta: &Theta, dataset: &Dataset) -> Result<CLDerivatives> {
    dataset.check_truncation(theta.p())?;
    let p = theta.p();
    let d = p + 2;
    let q = p + 1;
    let n = dataset.num_sites();
    let lattice = dataset.lattice();
    let scores = dataset.scores();
    let y = dataset.responses();
    let eta = theta.eta;
    let field = MeanField::new(theta, scores);

    let design = |i: usize, m: usize| -> f64 {
        if m == 0 {
            1.0
        } else {
            scores[(i, m - 1)]
        }
    };
    let w: Vec<f64> = field.kappa.iter().map(|k| k * (1.0 - k)).collect();

    let mut out = CLDerivatives::zeros(d);
    let mut residual = vec![0.0; n];
    let mut grad_a = vec![0.0; d];
    let mut nbr_wx = vec![0.0; q];
    let mut eta_gamma = vec![0.0; q];

    for i in 0..n {
        let mut dep = 0.0;
        nbr_wx.iter_mut().for_each(|v| *v = 0.0);
        for &j in lattice.neighbors(i) {
            dep += f64::from(y[j]) - field.kappa[j];
            for (m, v) in nbr_wx.iter_mut().enumerate() {
                *v += w[j] * design(j, m);
            }
        }
        let a = field.lin[i] + eta * dep;
        let prob = logistic(a);
        let yi = f64::from(y[i]);
        let r = yi - prob;
        residual[i] = r;
        out.value += a * yi - log1pexp(a);

        grad_a[0] = dep;
        for m in 0..q {
            grad_a[1 + m] = design(i, m) - eta * nbr_wx[m];
        }
        let curv = prob * (1.0 - prob);
        for u in 0..d {
            out.gradient[u] += r * grad_a[u];
            for v in 0..=u {
                out.hessian[(u, v)] -= curv * grad_a[u] * grad_a[v];
            }
        }
        for m in 0..q {
            eta_gamma[m] -= r * nbr_wx[m];
        }
    }

    for m in 0..q {
        out.hessian[(1 + m, 0)] += eta_gamma[m];
    }
    if eta != 0.0 {
        for j in 0..n {
            let r_sum: f64 = lattice.neighbors(j).iter().map(|&i| residual[i]).sum();
            let k = field.kappa[j];
            let c = -eta * w[j] * (1.0 - 2.0 * k) * r_sum;
            if c == 0.0 {
                continue;
            }
            for u in 0..q {
                let xu = design(j, u);
                for v in 0..=u {
                    out.hessian[(1 + u, 1 + v)] += c * xu * design(j, v);
                }
            }
        }
    }
    for u in 0..d {
        for v in 0..u {
            out.hessian[(v, u)] = out.hessian[(u, v)];
        }
    }
    Ok(out)
}

/// Sum of `l_c` over independent replicates, in replicate order.
pub fn total_composite_loglik(theta: &Theta, datasets: &[Dataset]) -> Result<f64> {
    let mut total = 0.0;
    for ds in datasets {
        total += composite_loglik(theta, ds)?;
    }
    Ok(total)
}

/// Summed derivatives over replicates, accumulated in replicate order.
pub fn total_derivatives(theta: &Theta, datasets: &[Dataset]) -> Result<CLDerivatives> {
    let mut acc = CLDerivatives::zeros(theta.dim());
    for ds in datasets {
        acc.accumulate(&composite_loglik_derivatives(theta, ds)?);
    }
    Ok(acc)
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use crate::lattice::{build_lattice, NeighborhoodKind};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn constant_dataset(y: Vec<u8>, num_scores: usize) -> Dataset {
        let lattice = Arc::new(build_lattice(4, 4, true, NeighborhoodKind::FourNearest).unwrap());
        let scores = DMatrix::zeros(16, num_scores);
        Dataset::new(lattice, scores, y, DatasetMeta::plain(num_scores)).unwrap()
    }

    #[test]
    fn kappa_examples() {
        let zero = Theta::new(0.0, 0.0, vec![0.0; 3]);
        assert_eq!(kappa(&zero, &[0.3, -2.0, 1.0]), 0.5);
        let t = Theta::new(0.0, 0.0, vec![1.0, 0.5, 1.0 / 3.0]);
        let want = 1.0 / (1.0 + (-11.0f64 / 6.0).exp());
        assert!((kappa(&t, &[1.0, 1.0, 1.0]) - want).abs() < 1e-15);
        assert!((want - 0.862_158_343).abs() < 1e-9);
        let sat = Theta::new(0.0, 40.0, vec![]);
        assert!((kappa(&sat, &[]) - 1.0).abs() < 1e-12);
        assert!(kappa(&Theta::new(0.0, -800.0, vec![]), &[]) >= 0.0);
    }

    #[test]
    fn natural_parameter_examples() {
        let mut y = vec![0u8; 16];
        let ds = constant_dataset(y.clone(), 1);
        // site 5 = (1,1) on the 4x4 torus has neighbors 1, 4, 6, 9.
        for &j in ds.lattice().neighbors(5) {
            y[j] = 1;
        }
        let ds = ds.with_responses(y).unwrap();
        let t = Theta::new(0.6, 0.0, vec![0.0]);
        assert!((natural_parameter(&t, &ds, 5).unwrap() - 1.2).abs() < 1e-15);
        let indep = Theta::new(0.0, 0.7, vec![0.0]);
        assert!((natural_parameter(&indep, &ds, 5).unwrap() - 0.7).abs() < 1e-15);
        assert!(natural_parameter(&t, &ds, 16).is_err());

        let p = conditional_probability(&t, &ds, 5).unwrap();
        assert!((p - 1.0 / (1.0 + (-1.2f64).exp())).abs() < 1e-15);
        assert!((p - 0.76852).abs() < 1e-5);
        assert_eq!(p + (1.0 - p), 1.0);
        assert_eq!(logistic(0.0), 0.5);
    }

    #[test]
    fn centering_annihilates_dependence() {
        let ds = random_dataset(5, 5, 3, 11);
        let t = Theta::new(1.3, 0.2, vec![0.4, -0.8, 0.3]);
        let field = MeanField::new(&t, ds.scores());
        for i in 0..25 {
            let a = field.natural_parameter(ds.lattice(), t.eta, &field.kappa, i);
            assert!((a - field.lin[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_theta_gives_n_log_half() {
        let ds = random_dataset(6, 7, 2, 3);
        let t = Theta::new(0.0, 0.0, vec![0.0, 0.0]);
        let l = composite_loglik(&t, &ds).unwrap();
        assert!((l + 42.0 * std::f64::consts::LN_2).abs() < 1e-10);
    }

    #[test]
    fn independence_reduction_is_bernoulli_loglik() {
        let ds = random_dataset(6, 6, 4, 5);
        let t = Theta::new(0.0, 0.3, vec![0.5, -1.0, 0.25]);
        let mut want = 0.0;
        for i in 0..36 {
            let row: Vec<f64> = (0..3).map(|m| ds.scores()[(i, m)]).collect();
            let k = kappa(&t, &row);
            want += if ds.responses()[i] == 1 { k.ln() } else { (1.0 - k).ln() };
        }
        let got = composite_loglik(&t, &ds).unwrap();
        assert!((got - want).abs() < 1e-10 * want.abs());
    }

    #[test]
    fn loglik_matches_term_by_term_oracle() {
        let ds = random_dataset(3, 3, 2, 17);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let t = random_theta(2, &mut rng);
            let mut want = 0.0;
            for i in 0..9 {
                let ki = |s: usize| {
                    let row = [ds.scores()[(s, 0)], ds.scores()[(s, 1)]];
                    kappa(&t, &row)
                };
                let mut a = (ki(i) / (1.0 - ki(i))).ln();
                for &j in ds.lattice().neighbors(i) {
                    a += t.eta * (f64::from(ds.responses()[j]) - ki(j));
                }
                let p1 = a.exp() / (1.0 + a.exp());
                want += if ds.responses()[i] == 1 { p1.ln() } else { (1.0 - p1).ln() };
            }
            let got = composite_loglik(&t, &ds).unwrap();
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn loglik_is_finite_for_extreme_parameters() {
        let ds = random_dataset(4, 4, 1, 1);
        let t = Theta::new(2.0, 500.0, vec![300.0]);
        assert!(composite_loglik(&t, &ds).unwrap().is_finite());
    }

    #[test]
    fn balanced_responses_have_zero_intercept_gradient() {
        let y: Vec<u8> = (0..16).map(|i| (i % 2) as u8).collect();
        let ds = constant_dataset(y, 2);
        let d = composite_loglik_derivatives(&Theta::new(0.0, 0.0, vec![0.0, 0.0]), &ds).unwrap();
        assert!(d.gradient[1].abs() < 1e-15);
    }

    #[test]
    fn truncation_beyond_stored_scores_is_rejected() {
        let ds = random_dataset(3, 3, 2, 1);
        assert!(composite_loglik(&Theta::new(0.0, 0.0, vec![0.0; 3]), &ds).is_err());
    }

    #[test]
    fn dataset_validation() {
        let lattice = Arc::new(build_lattice(3, 3, true, NeighborhoodKind::FourNearest).unwrap());
        let meta = DatasetMeta::plain(1);
        assert!(Dataset::new(lattice.clone(), DMatrix::zeros(9, 1), vec![2; 9], meta.clone()).is_err());
        assert!(Dataset::new(lattice.clone(), DMatrix::zeros(8, 1), vec![0; 9], meta.clone()).is_err());
        assert!(Dataset::new(lattice.clone(), DMatrix::zeros(9, 1), vec![0; 8], meta.clone()).is_err());
        let mut bad = DMatrix::zeros(9, 1);
        bad[(0, 0)] = f64::NAN;
        assert!(Dataset::new(lattice, bad, vec![0; 9], meta).is_err());
    }

    fn fd_check(theta: &Theta, ds: &Dataset) -> (f64, f64) {
        let d = composite_loglik_derivatives(theta, ds).unwrap();
        let base = theta.to_vector();
        let h = 1e-5;
        let mut grad_err: f64 = 0.0;
        let mut hess_err: f64 = 0.0;
        for u in 0..theta.dim() {
            let mut plus = base.clone();
            plus[u] += h;
            let mut minus = base.clone();
            minus[u] -= h;
            let tp = Theta::from_slice(plus.as_slice()).unwrap();
            let tm = Theta::from_slice(minus.as_slice()).unwrap();
            let fd = (composite_loglik(&tp, ds).unwrap() - composite_loglik(&tm, ds).unwrap()) / (2.0 * h);
            grad_err = grad_err.max((fd - d.gradient[u]).abs() / d.gradient[u].abs().max(1.0));
            let gp = composite_loglik_derivatives(&tp, ds).unwrap().gradient;
            let gm = composite_loglik_derivatives(&tm, ds).unwrap().gradient;
            for v in 0..theta.dim() {
                let fdh = (gp[v] - gm[v]) / (2.0 * h);
                hess_err = hess_err.max((fdh - d.hessian[(v, u)]).abs() / d.hessian[(v, u)].abs().max(1.0));
            }
        }
        (grad_err, hess_err)
    }

    #[test]
    fn hessian_is_symmetric() {
        let ds = random_dataset(5, 4, 3, 8);
        let d = composite_loglik_derivatives(&Theta::new(0.9, -0.3, vec![0.2, 1.1, -0.4]), &ds).unwrap();
        assert!((&d.hessian - d.hessian.transpose()).amax() < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn derivatives_match_finite_differences(seed in 0u64..10_000, p in 0usize..4) {
            let ds = random_dataset(4, 5, 4, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
            let t = random_theta(p, &mut rng);
            let (ge, he) = fd_check(&t, &ds);
            prop_assert!(ge < 1e-5, "gradient rel err {ge}");
            prop_assert!(he < 1e-4, "hessian rel err {he}");
        }

        #[test]
        fn translation_consistency(seed in 0u64..10_000) {
            let ds = random_dataset(4, 4, 3, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            let t = random_theta(3, &mut rng);
            let means: Vec<f64> = (0..3).map(|m| ds.scores().column(m).mean()).collect();
            let mut centered = ds.scores().clone();
            for m in 0..3 {
                for i in 0..16 {
                    centered[(i, m)] -= means[m];
                }
            }
            let shifted = Theta::new(
                t.eta,
                t.alpha + t.beta.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>(),
                t.beta.clone(),
            );
            let cds = Dataset::new(ds.lattice_arc().clone(), centered, ds.responses().to_vec(), ds.meta.clone()).unwrap();
            let f0 = MeanField::new(&t, ds.scores());
            let f1 = MeanField::new(&shifted, cds.scores());
            for i in 0..16 {
                prop_assert!((f0.kappa[i] - f1.kappa[i]).abs() < 1e-10);
                prop_assert!((natural_parameter(&t, &ds, i).unwrap() - natural_parameter(&shifted, &cds, i).unwrap()).abs() < 1e-10);
            }
            let l0 = composite_loglik(&t, &ds).unwrap();
            let l1 = composite_loglik(&shifted, &cds).unwrap();
            prop_assert!((l0 - l1).abs() < 1e-10);
        }
    }
}
