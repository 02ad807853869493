//! Resolution of run settings: flags, then the TOML config file, then defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use upsa_core::backtest::{
    EstimatorSpec, DEFAULT_GRID_HI, DEFAULT_GRID_LO, DEFAULT_GRID_N, DEFAULT_HALF_LIFE,
    DEFAULT_T_IS, DEFAULT_T_OOS,
};
use upsa_core::upsa::BasisScaling;
use upsa_core::{log_grid, BacktestConfig, EstimatorKind, McsConfig, MissingPolicy, YearMonth};

use crate::args::RunArgs;
use crate::failure::Failure;

pub const OUT_DIR_ENV: &str = "UPSA_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "upsa-out";

/// Contents of a `--config` file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub out_dir: Option<PathBuf>,
    pub t_is: Option<usize>,
    pub t_oos: Option<usize>,
    pub step: Option<usize>,
    pub grid_lo: Option<f64>,
    pub grid_hi: Option<f64>,
    pub grid_n: Option<usize>,
    pub half_life: Option<f64>,
    pub eval_start: Option<String>,
    pub eval_end: Option<String>,
    pub estimators: Option<Vec<String>>,
    pub renormalize_ao_diag: Option<bool>,
    pub basis_scaling: Option<String>,
    pub missing: Option<String>,
    pub oracle_cache: Option<PathBuf>,
    pub seed: Option<u64>,
    pub mcs_alpha: Option<f64>,
    pub mcs_block: Option<usize>,
    pub mcs_boot: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| Failure::config(format!("invalid config {}: {e}", path.display())))
    }
}

/// Fully resolved parameters of a run, as recorded in the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub data: PathBuf,
    pub out_dir: PathBuf,
    pub t_is: usize,
    pub t_oos: usize,
    pub step: usize,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_n: usize,
    pub half_life: f64,
    pub eval_start: Option<YearMonth>,
    pub eval_end: Option<YearMonth>,
    pub estimators: Vec<EstimatorKind>,
    pub renormalize_ao_diag: bool,
    pub basis_scaling: BasisScaling,
    pub missing: MissingPolicy,
    pub oracle_cache: Option<PathBuf>,
    pub seed: u64,
    pub mcs: McsConfig,
}

/// MCS overrides given on the command line.
#[derive(Debug, Default, Clone, Copy)]
pub struct McsFlags {
    pub alpha: Option<f64>,
    pub block: Option<usize>,
    pub boot: Option<usize>,
}

fn parse_month(s: &str, what: &str) -> Result<YearMonth, Failure> {
    s.parse()
        .map_err(|_| Failure::config(format!("{what}: expected YYYY-MM, got '{s}'")))
}

fn parse_scaling(s: &str) -> Result<BasisScaling, Failure> {
    match s {
        "gross-exposure" | "gross" => Ok(BasisScaling::GrossExposure),
        "raw" => Ok(BasisScaling::Raw),
        _ => Err(Failure::config(format!("unknown basis scaling '{s}'"))),
    }
}

pub fn parse_estimators(names: &[String]) -> Result<Vec<EstimatorKind>, Failure> {
    let kinds = names
        .iter()
        .map(|n| n.trim())
        .filter(|n| !n.is_empty())
        .map(|n| n.parse::<EstimatorKind>().map_err(Failure::from))
        .collect::<Result<Vec<_>, _>>()?;
    if kinds.is_empty() {
        return Err(Failure::config("no estimators selected"));
    }
    Ok(kinds)
}

/// Default output directory: `$UPSA_OUT_DIR`, else `./upsa-out`.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

impl Settings {
    pub fn resolve(args: &RunArgs, grid_lo: Option<f64>, mcs: McsFlags) -> Result<Self, Failure> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let month = |flag: &Option<String>, file: &Option<String>, what| {
            flag.as_ref()
                .or(file.as_ref())
                .map(|s| parse_month(s, what))
                .transpose()
        };
        let estimators = match args.estimators.as_ref().or(file.estimators.as_ref()) {
            Some(names) => parse_estimators(names)?,
            None => EstimatorKind::SHRINKAGE.to_vec(),
        };
        let missing = match args.missing.as_ref().or(file.missing.as_ref()) {
            Some(s) => s.parse::<MissingPolicy>().map_err(Failure::config)?,
            None => MissingPolicy::default(),
        };
        let basis_scaling = match args.basis_scaling.as_ref().or(file.basis_scaling.as_ref()) {
            Some(s) => parse_scaling(s)?,
            None => BasisScaling::default(),
        };
        let defaults = McsConfig::default();
        let settings = Self {
            data: args.data.clone(),
            out_dir: args
                .out
                .clone()
                .or(file.out_dir)
                .unwrap_or_else(default_out_dir),
            t_is: args.t_is.or(file.t_is).unwrap_or(DEFAULT_T_IS),
            t_oos: args.t_oos.or(file.t_oos).unwrap_or(DEFAULT_T_OOS),
            step: args.step.or(file.step).unwrap_or(1),
            grid_lo: grid_lo.or(file.grid_lo).unwrap_or(DEFAULT_GRID_LO),
            grid_hi: args.grid_hi.or(file.grid_hi).unwrap_or(DEFAULT_GRID_HI),
            grid_n: args.grid_n.or(file.grid_n).unwrap_or(DEFAULT_GRID_N),
            half_life: args
                .half_life
                .or(file.half_life)
                .unwrap_or(DEFAULT_HALF_LIFE),
            eval_start: month(&args.eval_start, &file.eval_start, "eval-start")?,
            eval_end: month(&args.eval_end, &file.eval_end, "eval-end")?,
            estimators,
            renormalize_ao_diag: if args.no_ao_renorm {
                false
            } else {
                file.renormalize_ao_diag.unwrap_or(true)
            },
            basis_scaling,
            missing,
            oracle_cache: args.oracle_cache.clone().or(file.oracle_cache),
            seed: args.seed.or(file.seed).unwrap_or(0),
            mcs: McsConfig {
                alpha: mcs.alpha.or(file.mcs_alpha).unwrap_or(defaults.alpha),
                block_len: mcs.block.or(file.mcs_block).unwrap_or(defaults.block_len),
                n_boot: mcs.boot.or(file.mcs_boot).unwrap_or(defaults.n_boot),
                seed: args.seed.or(file.seed).unwrap_or(defaults.seed),
            },
        };
        settings.backtest_config()?.validate()?;
        let m = &settings.mcs;
        if !(m.alpha > 0.0 && m.alpha < 1.0) || m.block_len == 0 || m.n_boot == 0 {
            return Err(Failure::config(
                "mcs: alpha must lie in (0, 1) and block length and replicas must be positive",
            ));
        }
        Ok(settings)
    }

    /// Short tag of the missing-data policy, part of the oracle cache key.
    pub fn missing_tag(&self) -> &'static str {
        match self.missing {
            MissingPolicy::Strict => "strict",
            MissingPolicy::DropIncomplete => "drop",
        }
    }

    pub fn backtest_config(&self) -> Result<BacktestConfig, Failure> {
        let grid = log_grid(self.grid_lo, self.grid_hi, self.grid_n)?;
        Ok(BacktestConfig {
            t_is: self.t_is,
            t_oos: self.t_oos,
            step: self.step,
            eval_start: self.eval_start,
            eval_end: self.eval_end,
            estimators: self
                .estimators
                .iter()
                .map(|&k| EstimatorSpec {
                    renormalize_ao_diag: self.renormalize_ao_diag,
                    ..EstimatorSpec::new(k)
                        .with_grid(grid.clone())
                        .with_half_life(self.half_life)
                })
                .collect(),
            seed: self.seed,
            basis_scaling: self.basis_scaling,
        })
    }
}
