//! Functional covariates, Gibbs simulation of centered autologistic fields, and
//! the exact joint distribution for small lattices.
//!
//! A case is `N` replicates on a shared lattice. Each replicate draws fresh
//! covariate curves `X_i(t) = μ(t) + Σ_j ε_j φ_j(t)`. The linear predictor uses
//! the full curve, `α + ∫ β X_i dt`, and the stored scores are projections of
//! the mean-centered curves. The mean `X̄` is taken over every curve of the
//! case, so the centered-scale intercept `α + Σ_j β_j ∫ X̄ φ_j dt` is shared
//! by all replicates.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::{
    center_covariates, make_trig_basis, project, BasisSet, FunctionGrid, GridSpec,
};
use crate::error::{Result, SgflmError};
use crate::lattice::{Lattice, LatticeSpec};
use crate::model::{log1pexp, logistic, Dataset, DatasetMeta, MeanField, Theta, DEFAULT_ETA_MAX};
use crate::rng::{stream_rng, tag};

/// Largest lattice accepted by [`exact_joint`].
pub const MAX_EXACT_SITES: usize = 20;

/// Mean function of the covariate process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MeanCurve {
    /// `μ(t) = 4 t sin(3t)`.
    FourTSinThreeT,
    Zero,
    Sampled { values: Vec<f64> },
}

impl MeanCurve {
    pub fn on_grid(&self, grid: &[f64]) -> Result<FunctionGrid> {
        match self {
            MeanCurve::FourTSinThreeT => FunctionGrid::from_fn(grid, |t| 4.0 * t * (3.0 * t).sin()),
            MeanCurve::Zero => FunctionGrid::zeros(grid),
            MeanCurve::Sampled { values } => FunctionGrid::new(grid.to_vec(), values.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainMode {
    /// One chain per replicate, each started from Bernoulli(0.5) and run for
    /// `burn_in` sweeps before its single draw.
    PerReplicate,
    /// One chain per case: `burn_in` sweeps, then a draw every `thin` sweeps.
    /// The conditionals switch to replicate `k`'s covariates for the sweeps
    /// leading up to draw `k`.
    ThinnedShared,
}

impl std::str::FromStr for ChainMode {
    type Err = SgflmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_replicate" => Ok(ChainMode::PerReplicate),
            "thinned_shared" => Ok(ChainMode::ThinnedShared),
            other => Err(SgflmError::InvalidArgument(format!("unknown chain mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub lattice: LatticeSpec,
    /// Parameters on the raw-covariate scale: `logit κ_i = α + ∫ β X_i dt`.
    pub true_theta: Theta,
    pub basis_size: usize,
    pub grid: GridSpec,
    pub mu: MeanCurve,
    /// Standard deviation of each generating score `ε_j`.
    pub score_sd: Vec<f64>,
    pub burn_in: usize,
    pub thin: usize,
    pub replicates: usize,
    pub seed: u64,
    pub chain_mode: ChainMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig::standard(0.6)
    }
}

impl SimConfig {
    /// The 20×20 torus design with `μ(t) = 4t sin 3t`, `ε_j ~ N(0, 1/j²)`,
    /// `α = 0`, `β_j = 1/j` for `j ≤ 3`, and 20 replicates per case.
    pub fn standard(eta: f64) -> Self {
        let basis_size = 20;
        SimConfig {
            lattice: LatticeSpec::default(),
            true_theta: Theta::new(eta, 0.0, vec![1.0, 0.5, 1.0 / 3.0]),
            basis_size,
            grid: GridSpec::default(),
            mu: MeanCurve::FourTSinThreeT,
            score_sd: (1..=basis_size).map(|j| 1.0 / j as f64).collect(),
            burn_in: 200,
            thin: 200,
            replicates: 20,
            seed: 20_240_601,
            chain_mode: ChainMode::ThinnedShared,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin < 1 {
            return Err(SgflmError::InvalidArgument("thin must be at least 1".into()));
        }
        if self.replicates < 1 {
            return Err(SgflmError::InvalidArgument("need at least one replicate".into()));
        }
        if self.score_sd.len() != self.basis_size {
            return Err(SgflmError::InvalidArgument(format!(
                "{} score standard deviations for a basis of {}",
                self.score_sd.len(),
                self.basis_size
            )));
        }
        if self.score_sd.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(SgflmError::InvalidArgument(
                "score standard deviations must be finite and non-negative".into(),
            ));
        }
        if self.true_theta.p() > self.basis_size {
            return Err(SgflmError::InvalidArgument(format!(
                "true beta has {} coefficients but the basis has {}",
                self.true_theta.p(),
                self.basis_size
            )));
        }
        self.true_theta.validate(DEFAULT_ETA_MAX)
    }

    pub fn basis(&self) -> Result<BasisSet> {
        make_trig_basis(self.basis_size, &self.grid.abscissae()?)
    }
}

/// One replicate's covariate curves with their generating and projected scores.
#[derive(Debug, Clone)]
pub struct CovariateDraw {
    pub curves: Vec<FunctionGrid>,
    /// `n × J` matrix of the `ε_j^(i)` used to build the curves.
    pub generating_scores: DMatrix<f64>,
    /// `n × J` matrix of `∫ X_i φ_j dt` for the uncentered curves.
    pub raw_scores: DMatrix<f64>,
}

pub fn generate_covariates(
    config: &SimConfig,
    basis: &BasisSet,
    num_sites: usize,
    rng: &mut impl Rng,
) -> Result<CovariateDraw> {
    let grid = basis.grid_points();
    let mu = config.mu.on_grid(grid)?;
    let j_count = config.basis_size;
    let mut generating = DMatrix::zeros(num_sites, j_count);
    let mut raw = DMatrix::zeros(num_sites, j_count);
    let mut curves = Vec::with_capacity(num_sites);
    for i in 0..num_sites {
        let mut values = mu.values().to_vec();
        for j in 0..j_count {
            let z: f64 = StandardNormal.sample(rng);
            let eps = config.score_sd[j] * z;
            generating[(i, j)] = eps;
            for (v, phi) in values.iter_mut().zip(basis.function(j).values()) {
                *v += eps * phi;
            }
        }
        let curve = FunctionGrid::new(grid.to_vec(), values)?;
        let s = project(&curve, basis)?;
        for j in 0..j_count {
            raw[(i, j)] = s.0[j];
        }
        curves.push(curve);
    }
    Ok(CovariateDraw {
        curves,
        generating_scores: generating,
        raw_scores: raw,
    })
}

/// Centered score matrices for a set of draws, centering on the mean curve of
/// all their curves. Returns the matrices, the mean curve, and its scores.
pub fn centered_scores(
    draws: &[CovariateDraw],
    basis: &BasisSet,
) -> Result<(Vec<DMatrix<f64>>, FunctionGrid, Vec<f64>)> {
    let all: Vec<FunctionGrid> = draws.iter().flat_map(|d| d.curves.iter().cloned()).collect();
    let (centered, mean) = center_covariates(&all)?;
    let j_count = basis.num_functions();
    let mut out = Vec::with_capacity(draws.len());
    let mut it = centered.iter();
    for d in draws {
        let n = d.curves.len();
        let mut m = DMatrix::zeros(n, j_count);
        for i in 0..n {
            let s = project(it.next().expect("one centered curve per input"), basis)?;
            for j in 0..j_count {
                m[(i, j)] = s.0[j];
            }
        }
        out.push(m);
    }
    let mean_scores = project(&mean, basis)?.0;
    Ok((out, mean, mean_scores))
}

/// Systematic-scan Gibbs sampler over sites in row-major order.
#[derive(Debug, Clone)]
pub struct GibbsSampler<'a> {
    lattice: &'a Lattice,
    field: MeanField,
    eta: f64,
    state: Vec<u8>,
}

impl<'a> GibbsSampler<'a> {
    /// Starts from independent Bernoulli(0.5) draws.
    pub fn new(lattice: &'a Lattice, field: MeanField, eta: f64, rng: &mut impl Rng) -> Self {
        let state = (0..lattice.num_sites()).map(|_| u8::from(rng.random::<bool>())).collect();
        GibbsSampler {
            lattice,
            field,
            eta,
            state,
        }
    }

    pub fn with_state(lattice: &'a Lattice, field: MeanField, eta: f64, state: Vec<u8>) -> Self {
        GibbsSampler {
            lattice,
            field,
            eta,
            state,
        }
    }

    pub fn set_field(&mut self, field: MeanField) {
        self.field = field;
    }

    pub fn state(&self) -> &[u8] {
        &self.state
    }

    pub fn sweep(&mut self, rng: &mut impl Rng) {
        for i in 0..self.state.len() {
            let a = self.field.natural_parameter(self.lattice, self.eta, &self.state, i);
            let u: f64 = rng.random();
            self.state[i] = u8::from(u < logistic(a));
        }
    }

    pub fn run(&mut self, sweeps: usize, rng: &mut impl Rng) {
        for _ in 0..sweeps {
            self.sweep(rng);
        }
    }
}

/// The replicates of one Monte Carlo case.
#[derive(Debug, Clone)]
pub struct MCCase {
    pub datasets: Vec<Dataset>,
    pub case_seed: u64,
    pub case_index: u64,
    /// True parameters on the raw-covariate scale.
    pub true_theta: Theta,
    /// True parameters on the centered-covariate scale of `datasets`.
    pub true_theta_centered: Theta,
    /// `∫ X̄ φ_j dt` for the pooled mean curve.
    pub mean_scores: Vec<f64>,
}

/// Draws responses for the given centered score matrices.
///
/// `theta` must be on the scale of `scores`. With [`ChainMode::PerReplicate`]
/// replicate `k` uses the stream `(seed, CHAIN, k)`; with
/// [`ChainMode::ThinnedShared`] the single chain uses `(seed, CHAIN)`.
pub fn gibbs_simulate(
    config: &SimConfig,
    lattice: &Arc<Lattice>,
    theta: &Theta,
    scores: &[DMatrix<f64>],
    seed: u64,
) -> Result<Vec<Vec<u8>>> {
    let n = lattice.num_sites();
    if let Some(bad) = scores.iter().find(|s| s.nrows() != n) {
        return Err(SgflmError::InvalidArgument(format!(
            "score matrix with {} rows for a lattice of {n} sites",
            bad.nrows()
        )));
    }
    let fields: Vec<MeanField> = scores.iter().map(|s| MeanField::new(theta, s)).collect();
    let mut out = Vec::with_capacity(fields.len());
    match config.chain_mode {
        ChainMode::PerReplicate => {
            for (k, field) in fields.into_iter().enumerate() {
                let mut rng = stream_rng(seed, &[tag::CHAIN, k as u64]);
                let mut chain = GibbsSampler::new(lattice, field, theta.eta, &mut rng);
                chain.run(config.burn_in.max(1), &mut rng);
                out.push(chain.state().to_vec());
            }
        }
        ChainMode::ThinnedShared => {
            let mut rng = stream_rng(seed, &[tag::CHAIN]);
            let mut it = fields.into_iter();
            let Some(first) = it.next() else {
                return Ok(out);
            };
            let mut chain = GibbsSampler::new(lattice, first, theta.eta, &mut rng);
            chain.run(config.burn_in, &mut rng);
            chain.run(config.thin, &mut rng);
            out.push(chain.state().to_vec());
            for field in it {
                chain.set_field(field);
                chain.run(config.thin, &mut rng);
                out.push(chain.state().to_vec());
            }
        }
    }
    Ok(out)
}

/// Simulates case `case_index` of a study; every random draw comes from
/// streams keyed by `(config.seed, case_index, attempt)`.
pub fn simulate_case(config: &SimConfig, case_index: u64, attempt: u64) -> Result<MCCase> {
    config.validate()?;
    let lattice = Arc::new(config.lattice.build()?);
    let basis = config.basis()?;
    let case_seed = crate::rng::stream_rng(config.seed, &[case_index, attempt]).random::<u64>();
    let n = lattice.num_sites();

    let draws = (0..config.replicates)
        .map(|k| {
            let mut rng = stream_rng(case_seed, &[tag::COVARIATES, k as u64]);
            generate_covariates(config, &basis, n, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let (scores, _mean, mean_scores) = centered_scores(&draws, &basis)?;

    let truth = &config.true_theta;
    let shift: f64 = truth.beta.iter().zip(&mean_scores).map(|(b, m)| b * m).sum();
    let truth_centered = Theta::new(truth.eta, truth.alpha + shift, truth.beta.clone());

    let responses = gibbs_simulate(config, &lattice, &truth_centered, &scores, case_seed)?;
    let datasets = scores
        .into_iter()
        .zip(responses)
        .enumerate()
        .map(|(k, (s, y))| {
            let meta = DatasetMeta {
                grid: config.grid,
                basis_size: config.basis_size,
                centered: true,
                mean_scores: Some(mean_scores.clone()),
                seed: Some(case_seed),
                replicate: Some(k),
            };
            Dataset::new(lattice.clone(), s, y, meta)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MCCase {
        datasets,
        case_seed,
        case_index,
        true_theta: truth.clone(),
        true_theta_centered: truth_centered,
        mean_scores,
    })
}

/// Exact joint pmf over `{0,1}^n`, indexed so that bit `i` of the index is `y_i`.
///
/// The unnormalized log mass is
/// `Σ_i y_i (logit κ_i - η Σ_{j∈N_i} κ_j) + η Σ_{i<j, j∈N_i} y_i y_j`,
/// whose full conditionals are exactly the centered autologistic ones.
pub fn exact_joint(theta: &Theta, scores: &DMatrix<f64>, lattice: &Lattice) -> Result<Vec<f64>> {
    let n = lattice.num_sites();
    if n > MAX_EXACT_SITES {
        return Err(SgflmError::InvalidArgument(format!(
            "exact enumeration is limited to {MAX_EXACT_SITES} sites, got {n}"
        )));
    }
    if scores.nrows() != n {
        return Err(SgflmError::InvalidArgument(format!(
            "score matrix has {} rows for {n} sites",
            scores.nrows()
        )));
    }
    let field = MeanField::new(theta, scores);
    let leading: Vec<f64> = (0..n)
        .map(|i| {
            let s: f64 = lattice.neighbors(i).iter().map(|&j| field.kappa[j]).sum();
            field.lin[i] - theta.eta * s
        })
        .collect();
    let edges: Vec<(usize, usize)> = lattice.edges().collect();
    let states = 1usize << n;
    let mut logm = Vec::with_capacity(states);
    for s in 0..states {
        let mut v = 0.0;
        for (i, l) in leading.iter().enumerate() {
            if s >> i & 1 == 1 {
                v += l;
            }
        }
        for &(i, j) in &edges {
            if s >> i & 1 == 1 && s >> j & 1 == 1 {
                v += theta.eta;
            }
        }
        logm.push(v);
    }
    let max = logm.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logm.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= z);
    Ok(probs)
}

/// `P(y_i = 1 | y_{-i})` implied by a joint pmf at the given state.
pub fn joint_conditional(joint: &[f64], state: usize, i: usize) -> f64 {
    let on = joint[state | (1 << i)];
    let off = joint[state & !(1 << i)];
    on / (on + off)
}

/// Log-space version of [`joint_conditional`], computed from the unnormalized
/// log mass differences; accurate even when the joint is extremely peaked.
pub fn joint_log_odds(theta: &Theta, scores: &DMatrix<f64>, lattice: &Lattice, state: usize, i: usize) -> f64 {
    let field = MeanField::new(theta, scores);
    let s: f64 = lattice.neighbors(i).iter().map(|&j| field.kappa[j]).sum();
    let mut odds = field.lin[i] - theta.eta * s;
    for &j in lattice.neighbors(i) {
        if state >> j & 1 == 1 {
            odds += theta.eta;
        }
    }
    odds
}

/// Total-variation distance between two pmfs on the same support.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Log probability of `y` under the independence model `Bernoulli(κ_i)`.
pub fn independence_log_mass(field: &MeanField, y: &[u8]) -> f64 {
    field
        .lin
        .iter()
        .zip(y)
        .map(|(&l, &yi)| f64::from(yi) * l - log1pexp(l))
        .sum()
}
