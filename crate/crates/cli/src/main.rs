//! `sgflm`: simulate, fit, and study spatial functional logistic models.
//!
//! Exit codes: 0 success, 2 configuration or I/O error, 3 invalid data,
//! 4 numerical failure (including non-convergence).

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use sgflm_core::basis::{make_trig_basis, reconstruct};
use sgflm_core::error::SgflmError;
use sgflm_core::experiments::{run_mc, write_outputs, MCOptions};
use sgflm_core::fit::{fit_model, raw_intercept, select_p_aic, FitResult, ModelKind};
use sgflm_core::inference::{
    band_beta, ci_eta, condition_report, quadratic_stat_beta, quadratic_stat_theta, sandwich,
    sandwich_independence,
};
use sgflm_core::io::{read_case, write_case, write_function_csv, CaseManifest};
use sgflm_core::model::{Dataset, Theta};
use sgflm_core::simulate::{simulate_case, ChainMode};

use config::{parse_bounds, parse_lattice, PChoice, RunConfig};

#[derive(Parser)]
#[command(name = "sgflm", version, about = "Spatial functional logistic regression on lattices")]
struct Cli {
    /// JSON file of flat dotted keys (e.g. "sim.eta"); flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (must exist). Defaults to $SGFLM_OUT or ".".
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one case of N replicates and write it as a dataset directory.
    Simulate(SimArgs),
    /// Fit a model to a dataset directory.
    Fit(FitArgs),
    /// Fit, then write the confidence band for β(t) and the CI for η.
    Band(BandArgs),
    /// Monte Carlo study over one or more values of η.
    Mc(McArgs),
}

#[derive(Args)]
struct SimFlags {
    /// Lattice size as ROWSxCOLS.
    #[arg(long, value_parser = parse_lattice)]
    lattice: Option<(usize, usize)>,
    /// Replicates per case.
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    /// per_replicate or thinned_shared.
    #[arg(long)]
    chain_mode: Option<ChainMode>,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, allow_hyphen_values = true)]
    eta: Option<f64>,
    /// Case index within the seeded study.
    #[arg(long)]
    case: Option<u64>,
    #[command(flatten)]
    sim: SimFlags,
}

#[derive(Args)]
struct FitFlags {
    /// sgflm or gflm.
    #[arg(long)]
    model: Option<ModelKind>,
    /// Truncation level, or "auto" for AIC selection.
    #[arg(long)]
    p: Option<PChoice>,
    /// Largest truncation level tried by "auto".
    #[arg(long)]
    p_max: Option<usize>,
    /// Search interval for η as "lo,hi".
    #[arg(long, value_parser = parse_bounds, allow_hyphen_values = true)]
    eta_bounds: Option<(f64, f64)>,
    /// Convergence tolerance on the sup-norm of the score.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Args)]
struct FitArgs {
    /// Dataset directory written by `simulate`.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    fit: FitFlags,
}

#[derive(Args)]
struct BandArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    fit: FitFlags,
    #[arg(long)]
    level: Option<f64>,
    /// Pointwise normal band instead of the simultaneous one.
    #[arg(long)]
    pointwise: bool,
}

#[derive(Args)]
struct McArgs {
    /// Comma-separated values of η.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    eta: Option<Vec<f64>>,
    #[arg(long)]
    cases: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Fit every case at this truncation level instead of selecting by AIC.
    #[arg(long)]
    fixed_p: Option<usize>,
    #[arg(long)]
    level: Option<f64>,
    #[command(flatten)]
    sim: SimFlags,
    #[command(flatten)]
    fit: FitFlags,
}

enum Failure {
    Config(String),
    Core(SgflmError),
    NotConverged(String),
}

impl From<SgflmError> for Failure {
    fn from(e: SgflmError) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Core(e) => match e {
                SgflmError::InvalidArgument(_) | SgflmError::Io { .. } => 2,
                SgflmError::Data(_) | SgflmError::GridMismatch(_) | SgflmError::Csv(_) | SgflmError::Json(_) => 3,
                SgflmError::Numerical(_) | SgflmError::IllConditioned { .. } => 4,
            },
            Failure::NotConverged(_) => 4,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Config(m) | Failure::NotConverged(m) => m.clone(),
            Failure::Core(e) => e.to_string(),
        }
    }
}

type Outcome = Result<(), Failure>;

impl SimFlags {
    fn apply(&self, c: &mut RunConfig) {
        if let Some((r, k)) = self.lattice {
            c.sim.rows = r;
            c.sim.cols = k;
        }
        if let Some(v) = self.replicates {
            c.sim.replicates = v;
        }
        if let Some(v) = self.seed {
            c.sim.seed = v;
        }
        if let Some(v) = self.burn_in {
            c.sim.burn_in = v;
        }
        if let Some(v) = self.thin {
            c.sim.thin = v;
        }
        if let Some(v) = self.chain_mode {
            c.sim.chain_mode = v;
        }
    }
}

impl FitFlags {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(v) = self.model {
            c.fit.model = v;
        }
        if let Some(v) = self.p {
            c.fit.p = v;
        }
        if let Some(v) = self.p_max {
            c.fit.p_max = v;
        }
        if let Some(v) = self.eta_bounds {
            c.fit.eta_bounds = v;
        }
        if let Some(v) = self.tol {
            c.fit.tol = v;
        }
        if let Some(v) = self.max_iter {
            c.fit.max_iter = v;
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut c = RunConfig::default();
    if let Some(path) = &cli.config {
        c.apply_file(path).map_err(Failure::Config)?;
    }
    if let Some(out) = &cli.out {
        c.out = out.clone();
    }
    match &cli.command {
        Command::Simulate(a) => {
            if let Some(v) = a.eta {
                c.sim.eta = v;
            }
            if let Some(v) = a.case {
                c.sim.case_index = v;
            }
            a.sim.apply(&mut c);
        }
        Command::Fit(a) => a.fit.apply(&mut c),
        Command::Band(a) => {
            a.fit.apply(&mut c);
            if let Some(v) = a.level {
                c.inference.level = v;
            }
            if a.pointwise {
                c.inference.pointwise = true;
            }
        }
        Command::Mc(a) => {
            if let Some(v) = &a.eta {
                c.mc.etas = v.clone();
            }
            if let Some(v) = a.cases {
                c.mc.cases = v;
            }
            if a.workers.is_some() {
                c.mc.workers = a.workers;
            }
            if a.fixed_p.is_some() {
                c.mc.fixed_p = a.fixed_p;
            }
            if let Some(v) = a.level {
                c.inference.level = v;
            }
            a.sim.apply(&mut c);
            a.fit.apply(&mut c);
        }
    }
    if !c.out.is_dir() {
        return Err(Failure::Config(format!(
            "output directory {} does not exist",
            c.out.display()
        )));
    }
    Ok(c)
}

fn write_json(path: &Path, value: &Value) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(SgflmError::from)? + "\n";
    std::fs::write(path, text).map_err(|e| SgflmError::io(path, e))?;
    Ok(())
}

fn provenance(c: &RunConfig) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("config_hash".into(), json!(c.hash()));
    m.insert("seed".into(), json!(c.sim.seed));
    m
}

fn cmd_simulate(c: &RunConfig) -> Outcome {
    let sim = c.sim_config(c.sim.eta);
    let case = simulate_case(&sim, c.sim.case_index, 0)?;
    let manifest = CaseManifest {
        lattice: sim.lattice,
        grid: sim.grid,
        basis_size: sim.basis_size,
        replicates: sim.replicates,
        centered: true,
        mean_scores: Some(case.mean_scores.clone()),
        seed: Some(case.case_seed),
        true_theta: Some(sim.true_theta.clone()),
        config_hash: Some(c.hash()),
    };
    write_case(&c.out, &case.datasets, &manifest, &c.header())?;
    println!("{}", serde_json::to_string_pretty(c).map_err(SgflmError::from)?);
    Ok(())
}

fn run_fit(c: &RunConfig, manifest: &CaseManifest, data: &[Dataset]) -> Result<FitResult, Failure> {
    let fit_cfg = c.fit_config(manifest.basis_size);
    fit_cfg.validate()?;
    let result = match c.fit.p {
        PChoice::Auto => select_p_aic(data, c.fit.model, &fit_cfg)?,
        PChoice::Fixed(p) => fit_model(data, p, c.fit.model, &fit_cfg)?,
    };
    Ok(result)
}

fn theta_json(model: ModelKind, theta: &Theta) -> Value {
    let mut m = Map::new();
    if model == ModelKind::Sgflm {
        m.insert("eta".into(), json!(theta.eta));
    }
    m.insert("alpha".into(), json!(theta.alpha));
    m.insert("beta".into(), json!(theta.beta));
    Value::Object(m)
}

fn fit_json(c: &RunConfig, manifest: &CaseManifest, fit: &FitResult) -> Value {
    let mut m = provenance(c);
    m.insert("model".into(), json!(fit.model));
    m.insert("converged".into(), json!(fit.converged));
    m.insert("n_iterations".into(), json!(fit.n_iterations));
    m.insert("grad_norm".into(), json!(fit.grad_norm));
    m.insert("p_selected".into(), json!(fit.p_selected));
    m.insert("aic".into(), json!(fit.aic));
    m.insert("loglik".into(), json!(fit.loglik));
    m.insert("theta_hat".into(), theta_json(fit.model, &fit.theta_hat));
    if let Some(ms) = manifest.mean_scores.as_ref().filter(|_| manifest.centered) {
        m.insert("alpha_raw".into(), json!(raw_intercept(fit.theta_hat.alpha, &fit.theta_hat.beta, ms)));
    }
    m.insert("per_p_table".into(), json!(fit.per_p_table));
    Value::Object(m)
}

fn cmd_fit(c: &RunConfig, data_dir: &Path) -> Outcome {
    let (manifest, data) = read_case(data_dir)?;
    let fit = run_fit(c, &manifest, &data)?;
    write_json(&c.out.join("fit.json"), &fit_json(c, &manifest, &fit))?;
    let basis = make_trig_basis(manifest.basis_size, &manifest.grid.abscissae()?)?;
    write_function_csv(&c.out.join("beta_hat.csv"), &reconstruct(&fit.theta_hat.beta, &basis)?, &c.header())?;
    if !fit.converged {
        return Err(Failure::NotConverged(format!(
            "fit did not converge after {} iterations (|g| = {:.3e}); diagnostics in fit.json",
            fit.n_iterations, fit.grad_norm
        )));
    }
    println!("{}", serde_json::to_string(&theta_json(fit.model, &fit.theta_hat)).map_err(SgflmError::from)?);
    Ok(())
}

/// Generating coefficients on the fitted scale, padded or truncated to `p`.
fn truth_on_fit_scale(manifest: &CaseManifest, p: usize) -> Option<Theta> {
    let t = manifest.true_theta.as_ref()?;
    let mut beta = t.beta.clone();
    beta.resize(p, 0.0);
    let mut alpha = t.alpha;
    if manifest.centered {
        let ms = manifest.mean_scores.as_ref()?;
        alpha += t.beta.iter().zip(ms).map(|(b, m)| b * m).sum::<f64>();
    }
    Some(Theta::new(t.eta, alpha, beta))
}

fn cmd_band(c: &RunConfig, data_dir: &Path) -> Outcome {
    let (manifest, data) = read_case(data_dir)?;
    let fit = run_fit(c, &manifest, &data)?;
    if !fit.converged {
        write_json(&c.out.join("fit.json"), &fit_json(c, &manifest, &fit))?;
        return Err(Failure::NotConverged("fit did not converge; diagnostics in fit.json".into()));
    }
    let theta = &fit.theta_hat;
    let n = data.len();
    let s = match fit.model {
        ModelKind::Sgflm => sandwich(&data, theta)?,
        ModelKind::Gflm => sandwich_independence(&data, theta)?,
    };
    let basis = make_trig_basis(manifest.basis_size, &manifest.grid.abscissae()?)?;
    let level = c.inference.level;
    let band = band_beta(&s, theta, &basis, n, level, !c.inference.pointwise)?;

    let mut csv = c.header().iter().map(|h| format!("# {h}\n")).collect::<String>();
    csv.push_str("t,center,lower,upper\n");
    for k in 0..band.grid_points.len() {
        csv.push_str(&format!("{},{},{},{}\n", band.grid_points[k], band.center[k], band.lower[k], band.upper[k]));
    }
    let path = c.out.join("band.csv");
    std::fs::write(&path, csv).map_err(|e| SgflmError::io(&path, e))?;

    let mut m = provenance(c);
    m.insert("model".into(), json!(fit.model));
    m.insert("p".into(), json!(theta.p()));
    m.insert("n_replicates".into(), json!(n));
    m.insert("level".into(), json!(level));
    m.insert("simultaneous".into(), json!(band.simultaneous));
    m.insert("theta_hat".into(), theta_json(fit.model, theta));
    if fit.model == ModelKind::Sgflm {
        let (lo, hi) = ci_eta(&s, theta.eta, n, level)?;
        m.insert("ci_eta".into(), json!([lo, hi]));
        m.insert("g11_inv".into(), json!(s.g11_inv));
    }
    let conds: Map<String, Value> = condition_report(&s).iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    m.insert("condition_numbers".into(), Value::Object(conds));
    if let Some(truth) = truth_on_fit_scale(&manifest, theta.p()) {
        let mut stats = Map::new();
        if fit.model == ModelKind::Sgflm {
            stats.insert("theta".into(), json!(quadratic_stat_theta(&s, theta, &truth, n)?));
        }
        stats.insert(
            "beta".into(),
            json!(quadratic_stat_beta(&s, &theta.regression_coefficients(), &truth.regression_coefficients(), n)?),
        );
        m.insert("quadratic_stats_at_truth".into(), Value::Object(stats));
    }
    write_json(&c.out.join("inference.json"), &Value::Object(m))?;
    Ok(())
}

fn cmd_mc(c: &RunConfig) -> Outcome {
    if c.mc.etas.is_empty() {
        return Err(Failure::Config("no values of eta given".into()));
    }
    let options = MCOptions {
        cases: c.mc.cases,
        fixed_p: c.mc.fixed_p,
        level: c.inference.level,
        simultaneous: !c.inference.pointwise,
        workers: c.mc.workers,
    };
    let mut reports = Vec::new();
    for &eta in &c.mc.etas {
        let sim = c.sim_config(eta);
        let fit = c.fit_config(sim.basis_size);
        let report = run_mc(&sim, &fit, &options)?;
        eprintln!(
            "eta={eta}: {} cases, {} excluded, {} reseeded",
            report.records.len(),
            report.excluded,
            report.reseeded
        );
        reports.push(report);
    }
    let mut meta = provenance(c);
    meta.insert("record".into(), json!("metadata"));
    meta.insert("config".into(), serde_json::to_value(c).map_err(SgflmError::from)?);
    if let Some(obj) = meta.get_mut("config").and_then(Value::as_object_mut) {
        obj.remove("out");
        if let Some(mc) = obj.get_mut("mc").and_then(Value::as_object_mut) {
            mc.remove("workers");
        }
    }
    write_outputs(&c.out, &reports, &c.header(), &Value::Object(meta))?;
    print!("{}", sgflm_core::experiments::table_csv(&reports, &[]));
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    let c = resolve(cli)?;
    match &cli.command {
        Command::Simulate(_) => cmd_simulate(&c),
        Command::Fit(a) => cmd_fit(&c, &a.data),
        Command::Band(a) => cmd_band(&c, &a.data),
        Command::Mc(_) => cmd_mc(&c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("sgflm: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
