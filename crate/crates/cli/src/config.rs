//! Resolved run configuration: defaults, then a JSON file of flat dotted
//! keys, then command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use sgflm_core::fit::{FitConfig, InitMode, ModelKind};
use sgflm_core::model::DEFAULT_ETA_MAX;
use sgflm_core::simulate::{ChainMode, SimConfig};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "SGFLM_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PChoice {
    Auto,
    Fixed(usize),
}

impl std::str::FromStr for PChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(PChoice::Auto);
        }
        s.parse::<usize>()
            .map(PChoice::Fixed)
            .map_err(|_| format!("expected \"auto\" or a non-negative integer, got {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSection {
    pub eta: f64,
    pub replicates: usize,
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub case_index: u64,
    pub burn_in: usize,
    pub thin: usize,
    pub chain_mode: ChainMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSection {
    pub model: ModelKind,
    pub p: PChoice,
    pub p_max: usize,
    pub eta_bounds: (f64, f64),
    pub tol: f64,
    pub max_iter: usize,
    pub init: InitMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceSection {
    pub level: f64,
    pub pointwise: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSection {
    pub etas: Vec<f64>,
    pub cases: usize,
    pub fixed_p: Option<usize>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub sim: SimSection,
    pub fit: FitSection,
    pub inference: InferenceSection,
    pub mc: McSection,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let standard = SimConfig::standard(0.6);
        let fit = FitConfig::default();
        RunConfig {
            sim: SimSection {
                eta: standard.true_theta.eta,
                replicates: standard.replicates,
                rows: standard.lattice.rows,
                cols: standard.lattice.cols,
                seed: standard.seed,
                case_index: 0,
                burn_in: standard.burn_in,
                thin: standard.thin,
                chain_mode: standard.chain_mode,
            },
            fit: FitSection {
                model: ModelKind::Sgflm,
                p: PChoice::Auto,
                p_max: 10,
                eta_bounds: fit.eta_bounds,
                tol: fit.grad_tol,
                max_iter: fit.max_iter,
                init: fit.init_mode,
            },
            inference: InferenceSection {
                level: 0.95,
                pointwise: false,
            },
            mc: McSection {
                etas: vec![0.3, 0.6, 0.9, 1.2],
                cases: 100,
                fixed_p: None,
                workers: None,
            },
            out: std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("."), PathBuf::from),
        }
    }
}

fn want_f64(key: &str, v: &Value) -> Result<f64, String> {
    v.as_f64().ok_or_else(|| format!("{key}: expected a number, got {v}"))
}

fn want_usize(key: &str, v: &Value) -> Result<usize, String> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| format!("{key}: expected a non-negative integer, got {v}"))
}

fn want_u64(key: &str, v: &Value) -> Result<u64, String> {
    v.as_u64().ok_or_else(|| format!("{key}: expected a non-negative integer, got {v}"))
}

fn want_str<'a>(key: &str, v: &'a Value) -> Result<&'a str, String> {
    v.as_str().ok_or_else(|| format!("{key}: expected a string, got {v}"))
}

fn want_f64_list(key: &str, v: &Value) -> Result<Vec<f64>, String> {
    match v {
        Value::Array(items) => items.iter().map(|x| want_f64(key, x)).collect(),
        Value::String(s) => parse_f64_list(s).map_err(|e| format!("{key}: {e}")),
        other => Ok(vec![want_f64(key, other)?]),
    }
}

pub fn parse_f64_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| format!("{x:?} is not a number")))
        .collect()
}

pub fn parse_bounds(s: &str) -> Result<(f64, f64), String> {
    match parse_f64_list(s)?.as_slice() {
        [lo, hi] => Ok((*lo, *hi)),
        _ => Err(format!("expected \"lo,hi\", got {s:?}")),
    }
}

/// Parses `RxC`, e.g. `20x20`.
pub fn parse_lattice(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected ROWSxCOLS, got {s:?}"))?;
    let r = r.trim().parse().map_err(|_| format!("bad row count in {s:?}"))?;
    let c = c.trim().parse().map_err(|_| format!("bad column count in {s:?}"))?;
    Ok((r, c))
}

fn parse_enum<T: std::str::FromStr>(key: &str, v: &Value) -> Result<T, String> {
    let s = want_str(key, v)?;
    s.parse().map_err(|_| format!("{key}: unknown value {s:?}"))
}

impl RunConfig {
    /// Applies one flat dotted key from a config file.
    pub fn set(&mut self, key: &str, v: &Value) -> Result<(), String> {
        match key {
            "sim.eta" => self.sim.eta = want_f64(key, v)?,
            "sim.replicates" => self.sim.replicates = want_usize(key, v)?,
            "sim.lattice" => (self.sim.rows, self.sim.cols) = parse_lattice(want_str(key, v)?)?,
            "sim.rows" => self.sim.rows = want_usize(key, v)?,
            "sim.cols" => self.sim.cols = want_usize(key, v)?,
            "sim.seed" | "seed" => self.sim.seed = want_u64(key, v)?,
            "sim.case_index" => self.sim.case_index = want_u64(key, v)?,
            "sim.burn_in" => self.sim.burn_in = want_usize(key, v)?,
            "sim.thin" => self.sim.thin = want_usize(key, v)?,
            "sim.chain_mode" => self.sim.chain_mode = parse_enum(key, v)?,
            "fit.model" => self.fit.model = parse_enum(key, v)?,
            "fit.p" => {
                self.fit.p = match v {
                    Value::String(s) => s.parse()?,
                    other => PChoice::Fixed(want_usize(key, other)?),
                }
            }
            "fit.p_max" => self.fit.p_max = want_usize(key, v)?,
            "fit.eta_bounds" => {
                self.fit.eta_bounds = match want_f64_list(key, v)?.as_slice() {
                    [lo, hi] => (*lo, *hi),
                    _ => return Err(format!("{key}: expected two numbers")),
                }
            }
            "fit.tol" => self.fit.tol = want_f64(key, v)?,
            "fit.max_iter" => self.fit.max_iter = want_usize(key, v)?,
            "fit.init" => {
                self.fit.init = match want_str(key, v)? {
                    "fpcr" => InitMode::Fpcr,
                    "direct" => InitMode::Direct,
                    "zeros" => InitMode::Zeros,
                    other => return Err(format!("{key}: unknown value {other:?}")),
                }
            }
            "inference.level" => self.inference.level = want_f64(key, v)?,
            "inference.pointwise" => {
                self.inference.pointwise = v.as_bool().ok_or_else(|| format!("{key}: expected a boolean"))?
            }
            "mc.eta" | "mc.etas" => self.mc.etas = want_f64_list(key, v)?,
            "mc.cases" => self.mc.cases = want_usize(key, v)?,
            "mc.fixed_p" => {
                self.mc.fixed_p = if v.is_null() { None } else { Some(want_usize(key, v)?) }
            }
            "mc.workers" => {
                self.mc.workers = if v.is_null() { None } else { Some(want_usize(key, v)?) }
            }
            "out" | "output.dir" => self.out = PathBuf::from(want_str(key, v)?),
            other => return Err(format!("unknown config key {other:?}")),
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let map = value
            .as_object()
            .ok_or_else(|| format!("{}: expected a JSON object of dotted keys", path.display()))?;
        for (k, v) in map {
            self.set(k, v).map_err(|e| format!("{}: {e}", path.display()))?;
        }
        Ok(())
    }

    pub fn sim_config(&self, eta: f64) -> SimConfig {
        let mut sim = SimConfig::standard(eta);
        sim.replicates = self.sim.replicates;
        sim.lattice.rows = self.sim.rows;
        sim.lattice.cols = self.sim.cols;
        sim.seed = self.sim.seed;
        sim.burn_in = self.sim.burn_in;
        sim.thin = self.sim.thin;
        sim.chain_mode = self.sim.chain_mode;
        sim
    }

    pub fn fit_config(&self, basis_size: usize) -> FitConfig {
        FitConfig {
            p_candidates: (1..=self.fit.p_max.min(basis_size)).collect(),
            eta_bounds: self.fit.eta_bounds,
            max_iter: self.fit.max_iter,
            grad_tol: self.fit.tol,
            init_mode: self.fit.init,
            eta_max: DEFAULT_ETA_MAX,
            ..FitConfig::default()
        }
    }

    /// SHA-256 of the configuration, leaving out settings that do not affect
    /// results (output directory, worker count).
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("out");
        }
        if let Some(mc) = v.get_mut("mc").and_then(Value::as_object_mut) {
            mc.remove("workers");
        }
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }

    pub fn header(&self) -> Vec<String> {
        vec![format!("config_hash={}", self.hash()), format!("seed={}", self.sim.seed)]
    }
}
