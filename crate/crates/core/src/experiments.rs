//! Monte Carlo harness: simulate cases, fit both models, and aggregate
//! performance criteria.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{reconstruct, BasisSet, FunctionGrid};
use crate::error::{Result, SgflmError};
use crate::fit::{fit_model, raw_intercept, select_p_aic, FitConfig, FitResult, ModelKind};
use crate::inference::{band_beta, ci_eta, sandwich, sandwich_independence, ConfidenceBand};
use crate::model::{conditional_probability, Dataset, Theta};
use crate::simulate::{simulate_case, MCCase, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCOptions {
    pub cases: usize,
    /// Fit every case at this truncation level instead of selecting by AIC.
    pub fixed_p: Option<usize>,
    pub level: f64,
    pub simultaneous: bool,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

impl Default for MCOptions {
    fn default() -> Self {
        MCOptions {
            cases: 100,
            fixed_p: None,
            level: 0.95,
            simultaneous: true,
            workers: None,
        }
    }
}

/// One model's results on one case. `theta_hat.alpha` is on the raw-covariate
/// scale; `alpha_centered` is the fitted intercept on the centered scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutcome {
    pub model: ModelKind,
    pub theta_hat: Theta,
    pub alpha_centered: f64,
    pub p_selected: usize,
    pub converged: bool,
    pub aic: f64,
    pub loglik: f64,
    pub beta_curve: Vec<f64>,
    pub ise: f64,
    pub fmse: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_eta: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<ConfidenceBand>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_index: u64,
    pub attempts: u64,
    pub case_seed: Option<u64>,
    pub excluded: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
    pub sgflm: Option<ModelOutcome>,
    pub gflm: Option<ModelOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub model: ModelKind,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCReport {
    pub sim_config: SimConfig,
    pub fit_config: FitConfig,
    pub options: MCOptions,
    pub master_seed: u64,
    pub records: Vec<CaseRecord>,
    pub excluded: usize,
    pub reseeded: usize,
    pub metrics: Vec<MetricValue>,
    /// Cases where the spatial model's FMSE is below the independence model's.
    pub fmse_wins: usize,
    pub truth_curve: Vec<f64>,
    pub grid_points: Vec<f64>,
    pub average_band_sgflm: Option<ConfidenceBand>,
    pub average_band_gflm: Option<ConfidenceBand>,
}

impl MCReport {
    pub fn metric(&self, model: ModelKind, name: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|m| m.model == model && m.metric == name)
            .map(|m| m.value)
    }

    pub fn included(&self) -> impl Iterator<Item = &CaseRecord> {
        self.records.iter().filter(|r| !r.excluded)
    }

    pub fn eta(&self) -> f64 {
        self.sim_config.true_theta.eta
    }
}

/// `(E_M, MSE_M)`: sample mean and mean squared deviation from `truth`.
pub fn metric_scalar(values: &[f64], truth: f64) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(SgflmError::InvalidArgument("no values".into()));
    }
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let mse = values.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / m;
    Ok((mean, mse))
}

fn check_grids(curves: &[FunctionGrid], reference: &FunctionGrid) -> Result<()> {
    match curves.iter().find(|c| !c.same_grid(reference)) {
        Some(c) => Err(SgflmError::GridMismatch(format!(
            "{}-point curve against a {}-point reference",
            c.len(),
            reference.len()
        ))),
        None => Ok(()),
    }
}

/// `M⁻¹ Σ_m ∫ (β − β̂_m)² dt`.
pub fn metric_mise(curves: &[FunctionGrid], truth: &FunctionGrid) -> Result<f64> {
    if curves.is_empty() {
        return Err(SgflmError::InvalidArgument("no curves".into()));
    }
    check_grids(curves, truth)?;
    let total = curves
        .iter()
        .map(|c| c.axpy(-1.0, truth).map(|d| d.squared_norm()))
        .sum::<Result<f64>>()?;
    Ok(total / curves.len() as f64)
}

/// Pointwise mean of curves sharing a grid.
pub fn mean_of_curves(curves: &[FunctionGrid]) -> Result<FunctionGrid> {
    crate::basis::mean_curve(curves)
}

/// `M⁻¹ Σ_m ∫ (β̂_m − β̄)² dt` about the Monte Carlo mean curve.
pub fn metric_iv(curves: &[FunctionGrid]) -> Result<f64> {
    if curves.len() < 2 {
        return Err(SgflmError::InvalidArgument(format!(
            "integrated variance needs at least 2 curves, got {}",
            curves.len()
        )));
    }
    let mean = mean_of_curves(curves)?;
    metric_mise(curves, &mean)
}

/// `M⁻¹ Σ_m 𝕀(truth ∈ CI_m)`.
pub fn metric_ci_coverage(intervals: &[(f64, f64)], truth: f64) -> Result<f64> {
    if intervals.is_empty() {
        return Err(SgflmError::InvalidArgument("no intervals".into()));
    }
    let hits = intervals.iter().filter(|(lo, hi)| *lo <= truth && truth <= *hi).count();
    Ok(hits as f64 / intervals.len() as f64)
}

/// Mean over replicates of the site-averaged squared residual
/// `(y_i − p̂rob_i)²`, where `p̂rob` is the conditional success probability
/// under `theta` (η = 0 gives the independence-model fit).
pub fn case_fmse(datasets: &[Dataset], theta: &Theta) -> Result<f64> {
    if datasets.is_empty() {
        return Err(SgflmError::InvalidArgument("no datasets".into()));
    }
    let mut total = 0.0;
    for ds in datasets {
        let mut s = 0.0;
        for (i, &y) in ds.responses().iter().enumerate() {
            let p = conditional_probability(theta, ds, i)?;
            s += (f64::from(y) - p).powi(2);
        }
        total += s / ds.num_sites() as f64;
    }
    Ok(total / datasets.len() as f64)
}

/// FMSE averaged over cases, each with its own fitted parameters.
pub fn metric_fmse(cases: &[(&[Dataset], &Theta)]) -> Result<f64> {
    if cases.is_empty() {
        return Err(SgflmError::InvalidArgument("no cases".into()));
    }
    let total = cases
        .iter()
        .map(|(d, t)| case_fmse(d, t))
        .sum::<Result<f64>>()?;
    Ok(total / cases.len() as f64)
}

/// Pointwise means of center, lower, and upper curves.
pub fn average_band(bands: &[ConfidenceBand]) -> Result<ConfidenceBand> {
    let first = bands
        .first()
        .ok_or_else(|| SgflmError::InvalidArgument("no bands".into()))?;
    let len = first.grid_points.len();
    for b in bands {
        if b.grid_points.len() != len
            || b.grid_points.iter().zip(&first.grid_points).any(|(a, c)| (a - c).abs() > 1e-12)
        {
            return Err(SgflmError::GridMismatch("bands on different grids".into()));
        }
    }
    let m = bands.len() as f64;
    let avg = |f: fn(&ConfidenceBand) -> &Vec<f64>| -> Vec<f64> {
        (0..len).map(|k| bands.iter().map(|b| f(b)[k]).sum::<f64>() / m).collect()
    };
    Ok(ConfidenceBand {
        grid_points: first.grid_points.clone(),
        center: avg(|b| &b.center),
        lower: avg(|b| &b.lower),
        upper: avg(|b| &b.upper),
        level: first.level,
        simultaneous: first.simultaneous,
    })
}

fn fit_one(datasets: &[Dataset], model: ModelKind, fit: &FitConfig, fixed_p: Option<usize>) -> Result<FitResult> {
    match fixed_p {
        Some(p) => fit_model(datasets, p, model, fit),
        None => select_p_aic(datasets, model, fit),
    }
}

fn outcome(
    case: &MCCase,
    result: FitResult,
    basis: &BasisSet,
    truth: &FunctionGrid,
    options: &MCOptions,
) -> Result<ModelOutcome> {
    let data = &case.datasets;
    let n = data.len();
    let theta_c = result.theta_hat.clone();
    let curve = reconstruct(&theta_c.beta, basis)?;
    let ise = curve.axpy(-1.0, truth)?.squared_norm();
    let fmse = case_fmse(data, &theta_c)?;
    let mut theta_raw = theta_c.clone();
    theta_raw.alpha = raw_intercept(theta_c.alpha, &theta_c.beta, &case.mean_scores);

    let (ci, band, band_error) = match result.model {
        ModelKind::Sgflm => {
            let s = sandwich(data, &theta_c)?;
            let ci = ci_eta(&s, theta_c.eta, n, options.level)?;
            let band = band_beta(&s, &theta_c, basis, n, options.level, options.simultaneous)?;
            (Some(ci), Some(band), None)
        }
        ModelKind::Gflm => match sandwich_independence(data, &theta_c)
            .and_then(|s| band_beta(&s, &theta_c, basis, n, options.level, options.simultaneous))
        {
            Ok(b) => (None, Some(b), None),
            Err(e) => (None, None, Some(e.to_string())),
        },
    };
    Ok(ModelOutcome {
        model: result.model,
        theta_hat: theta_raw,
        alpha_centered: theta_c.alpha,
        p_selected: result.p_selected,
        converged: result.converged,
        aic: result.aic,
        loglik: result.loglik,
        beta_curve: curve.values().to_vec(),
        ise,
        fmse,
        ci_eta: ci,
        band,
        band_error,
    })
}

fn attempt_case(
    sim: &SimConfig,
    fit: &FitConfig,
    options: &MCOptions,
    basis: &BasisSet,
    truth: &FunctionGrid,
    case_index: u64,
    attempt: u64,
) -> std::result::Result<(u64, ModelOutcome, ModelOutcome), (Option<u64>, String)> {
    let case = simulate_case(sim, case_index, attempt).map_err(|e| (None, format!("simulate: {e}")))?;
    let seed = Some(case.case_seed);
    let run = |model: ModelKind| -> std::result::Result<ModelOutcome, (Option<u64>, String)> {
        let res = fit_one(&case.datasets, model, fit, options.fixed_p)
            .map_err(|e| (seed, format!("{model:?} fit: {e}")))?;
        if !res.converged {
            return Err((seed, format!("{model:?} fit did not converge (|g| = {:.3e})", res.grad_norm)));
        }
        outcome(&case, res, basis, truth, options).map_err(|e| (seed, format!("{model:?} inference: {e}")))
    };
    let s = run(ModelKind::Sgflm)?;
    let g = run(ModelKind::Gflm)?;
    Ok((case.case_seed, s, g))
}

/// Runs one case, re-seeding once if simulation, fitting, or inference fails.
pub fn run_case(
    sim: &SimConfig,
    fit: &FitConfig,
    options: &MCOptions,
    basis: &BasisSet,
    truth: &FunctionGrid,
    case_index: u64,
) -> CaseRecord {
    let mut errors = Vec::new();
    let mut last_seed = None;
    for attempt in 0..2 {
        match attempt_case(sim, fit, options, basis, truth, case_index, attempt) {
            Ok((seed, s, g)) => {
                return CaseRecord {
                    case_index,
                    attempts: attempt + 1,
                    case_seed: Some(seed),
                    excluded: false,
                    errors,
                    sgflm: Some(s),
                    gflm: Some(g),
                }
            }
            Err((seed, e)) => {
                last_seed = seed;
                errors.push(e);
            }
        }
    }
    CaseRecord {
        case_index,
        attempts: 2,
        case_seed: last_seed,
        excluded: true,
        errors,
        sgflm: None,
        gflm: None,
    }
}

/// Runs `options.cases` cases and aggregates the performance criteria.
///
/// Cases are independent; results are gathered in case order so the report
/// does not depend on scheduling.
pub fn run_mc(sim: &SimConfig, fit: &FitConfig, options: &MCOptions) -> Result<MCReport> {
    sim.validate()?;
    fit.validate()?;
    if options.cases == 0 {
        return Err(SgflmError::InvalidArgument("need at least one case".into()));
    }
    if let Some(p) = options.fixed_p {
        if p > sim.basis_size {
            return Err(SgflmError::InvalidArgument(format!(
                "fixed p = {p} exceeds the basis size {}",
                sim.basis_size
            )));
        }
    }
    let basis = sim.basis()?;
    let truth = reconstruct(&sim.true_theta.beta, &basis)?;
    let work = || -> Vec<CaseRecord> {
        (0..options.cases as u64)
            .into_par_iter()
            .map(|k| run_case(sim, fit, options, &basis, &truth, k))
            .collect()
    };
    let records = match options.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| SgflmError::InvalidArgument(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    build_report(sim.clone(), fit.clone(), options.clone(), records, &truth)
}

/// Aggregates per-case records into a report.
pub fn build_report(
    sim: SimConfig,
    fit: FitConfig,
    options: MCOptions,
    records: Vec<CaseRecord>,
    truth: &FunctionGrid,
) -> Result<MCReport> {
    let excluded = records.iter().filter(|r| r.excluded).count();
    let reseeded = records.iter().filter(|r| r.attempts > 1).count();
    let grid = truth.grid_points().to_vec();
    let mut metrics = Vec::new();
    let mut bands = (None, None);
    let fmse_wins = records
        .iter()
        .filter_map(|r| Some((r.sgflm.as_ref()?, r.gflm.as_ref()?)))
        .filter(|(s, g)| s.fmse < g.fmse)
        .count();

    for model in [ModelKind::Gflm, ModelKind::Sgflm] {
        let outs: Vec<&ModelOutcome> = records
            .iter()
            .filter_map(|r| match model {
                ModelKind::Sgflm => r.sgflm.as_ref(),
                ModelKind::Gflm => r.gflm.as_ref(),
            })
            .collect();
        if outs.is_empty() {
            continue;
        }
        let mut push = |name: &str, value: f64| {
            metrics.push(MetricValue {
                model,
                metric: name.to_string(),
                value,
            })
        };
        if model == ModelKind::Sgflm {
            let etas: Vec<f64> = outs.iter().map(|o| o.theta_hat.eta).collect();
            let (e, mse) = metric_scalar(&etas, sim.true_theta.eta)?;
            push("E_eta", e);
            push("MSE_eta", mse);
        }
        let alphas: Vec<f64> = outs.iter().map(|o| o.theta_hat.alpha).collect();
        let (e, mse) = metric_scalar(&alphas, sim.true_theta.alpha)?;
        push("E_alpha", e);
        push("MSE_alpha", mse);
        let curves = outs
            .iter()
            .map(|o| FunctionGrid::new(grid.clone(), o.beta_curve.clone()))
            .collect::<Result<Vec<_>>>()?;
        push("MISE_beta", metric_mise(&curves, truth)?);
        if curves.len() >= 2 {
            push("IV_beta", metric_iv(&curves)?);
        }
        if model == ModelKind::Sgflm {
            let cis: Vec<(f64, f64)> = outs.iter().filter_map(|o| o.ci_eta).collect();
            if !cis.is_empty() {
                push("CI_eta", metric_ci_coverage(&cis, sim.true_theta.eta)?);
            }
        }
        let fmse = outs.iter().map(|o| o.fmse).sum::<f64>() / outs.len() as f64;
        push("FMSE", fmse);

        let case_bands: Vec<ConfidenceBand> = outs.iter().filter_map(|o| o.band.clone()).collect();
        let avg = if case_bands.is_empty() {
            None
        } else {
            Some(average_band(&case_bands)?)
        };
        match model {
            ModelKind::Sgflm => bands.0 = avg,
            ModelKind::Gflm => bands.1 = avg,
        }
    }
    Ok(MCReport {
        master_seed: sim.seed,
        truth_curve: truth.values().to_vec(),
        grid_points: grid,
        sim_config: sim,
        fit_config: fit,
        options,
        records,
        excluded,
        reseeded,
        metrics,
        fmse_wins,
        average_band_sgflm: bands.0,
        average_band_gflm: bands.1,
    })
}

/// Metric rows of the summary table, in display order.
pub const TABLE_METRICS: [&str; 8] = [
    "E_eta", "MSE_eta", "E_alpha", "MSE_alpha", "MISE_beta", "IV_beta", "CI_eta", "FMSE",
];

fn eta_label(eta: f64) -> String {
    format!("{eta}")
}

/// Summary table with one row per metric and one column per (model, η),
/// GFLM columns first. Missing entries are written as `-`.
pub fn table_csv(reports: &[MCReport], header: &[String]) -> String {
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    out.push_str("metric");
    for model in ["gflm", "sgflm"] {
        for r in reports {
            let _ = write!(out, ",{model}_eta{}", eta_label(r.eta()));
        }
    }
    out.push('\n');
    for name in TABLE_METRICS {
        out.push_str(name);
        for model in [ModelKind::Gflm, ModelKind::Sgflm] {
            for r in reports {
                match r.metric(model, name) {
                    Some(v) => {
                        let _ = write!(out, ",{v}");
                    }
                    None => out.push_str(",-"),
                }
            }
        }
        out.push('\n');
    }
    out.push_str("cases_used");
    for model in [ModelKind::Gflm, ModelKind::Sgflm] {
        for r in reports {
            let used = r
                .records
                .iter()
                .filter(|c| match model {
                    ModelKind::Sgflm => c.sgflm.is_some(),
                    ModelKind::Gflm => c.gflm.is_some(),
                })
                .count();
            let _ = write!(out, ",{used}");
        }
    }
    out.push('\n');
    out
}

/// Average bands and the true curve on the grid.
pub fn bands_csv(report: &MCReport, header: &[String]) -> String {
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    out.push_str("t,truth,sgflm_center,sgflm_lower,sgflm_upper,gflm_center,gflm_lower,gflm_upper\n");
    for (k, t) in report.grid_points.iter().enumerate() {
        let _ = write!(out, "{t},{}", report.truth_curve[k]);
        for band in [&report.average_band_sgflm, &report.average_band_gflm] {
            match band {
                Some(b) => {
                    let _ = write!(out, ",{},{},{}", b.center[k], b.lower[k], b.upper[k]);
                }
                None => out.push_str(",,,"),
            }
        }
        out.push('\n');
    }
    out
}

/// One JSON record per case, preceded by a metadata record.
pub fn cases_jsonl(report: &MCReport, meta: &serde_json::Value) -> Result<String> {
    let mut out = serde_json::to_string(meta)?;
    out.push('\n');
    for r in &report.records {
        let mut line = serde_json::to_value(r)?;
        if let Some(obj) = line.as_object_mut() {
            obj.insert("eta".into(), serde_json::json!(report.eta()));
        }
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    Ok(out)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| SgflmError::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| SgflmError::io(path, e))
}

/// Writes `table1.csv`, `bands_eta<η>.csv` per report, and `cases.jsonl`.
pub fn write_outputs(
    dir: &Path,
    reports: &[MCReport],
    header: &[String],
    meta: &serde_json::Value,
) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(SgflmError::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        ));
    }
    let mut written = Vec::new();
    let table = dir.join("table1.csv");
    write_file(&table, &table_csv(reports, header))?;
    written.push(table);
    for r in reports {
        let path = dir.join(format!("bands_eta{}.csv", eta_label(r.eta())));
        write_file(&path, &bands_csv(r, header))?;
        written.push(path);
    }
    let mut jsonl = String::new();
    for (k, r) in reports.iter().enumerate() {
        let text = cases_jsonl(r, meta)?;
        // The metadata record is written once.
        let body = if k == 0 { &text[..] } else { text.split_once('\n').map_or("", |x| x.1) };
        jsonl.push_str(body);
    }
    let path = dir.join("cases.jsonl");
    write_file(&path, &jsonl)?;
    written.push(path);
    Ok(written)
}
