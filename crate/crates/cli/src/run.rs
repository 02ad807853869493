//! The `backtest`, `sweep` and `synth` commands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use upsa_core::oracle::{oracle_records, OracleHistory, OracleRecord};
use upsa_core::report::{
    cumulative_rows, sharpe_mcs, standard_comparisons, weights_file_name, write_cumulative,
    write_mcs, write_sharpe_series, write_summary, write_sweep, write_tests, write_weights,
};
use upsa_core::{
    generate_synthetic_panel, load_returns_csv, run_backtest_with_oracles, sweep_grid_lower_bound,
    sweep_window_length, BacktestResult, LoadOptions, ReturnsPanel,
};

use crate::args::{BacktestArgs, SweepArgs, SynthArgs};
use crate::failure::Failure;
use crate::manifest::{sha256_file, Dataset, Manifest};
use crate::settings::{default_out_dir, McsFlags, Settings};

const CUMULATIVE_TARGET_VOL: f64 = 0.10;

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::config(format!("cannot create output dir {}: {e}", dir.display())))
}

/// Creates `dir/name`, hands a buffered writer to `write`, and records the file.
fn emit(
    manifest: &mut Manifest,
    dir: &Path,
    name: &str,
    write: impl FnOnce(&mut BufWriter<File>) -> Result<(), Failure>,
) -> Result<(), Failure> {
    let path = dir.join(name);
    let file = File::create(&path)
        .map_err(|e| Failure::config(format!("cannot create {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    write(&mut w)?;
    w.flush()
        .map_err(|e| Failure::config(format!("cannot write {}: {e}", path.display())))?;
    manifest.files.push(name.to_string());
    Ok(())
}

fn load(settings: &Settings, manifest: &mut Manifest) -> Result<ReturnsPanel, Failure> {
    let loaded = load_returns_csv(&settings.data, &LoadOptions::with_policy(settings.missing))?;
    let panel = loaded.panel;
    manifest.dataset = Some(Dataset {
        path: settings.data.clone(),
        sha256: sha256_file(&settings.data)?,
        months: panel.len(),
        assets: panel.n_assets(),
        first_month: panel.dates()[0].to_string(),
        last_month: panel.dates()[panel.len() - 1].to_string(),
        dropped_assets: loaded.dropped,
    });
    Ok(panel)
}

/// Shared prologue: resolve the output dir, write a `running` manifest, load
/// the panel, then run `body`. The manifest is finalized either way.
fn with_manifest(
    command: &str,
    settings: &Settings,
    body: impl FnOnce(&ReturnsPanel, &mut Manifest) -> Result<(), Failure>,
) -> Result<(), Failure> {
    let dir = &settings.out_dir;
    create_dir(dir)?;
    let mut manifest = Manifest::new(command, dir, settings)?;
    manifest.save()?;
    let outcome = load(settings, &mut manifest).and_then(|panel| {
        manifest.save()?;
        body(&panel, &mut manifest)
    });
    manifest.finish(&outcome)?;
    outcome
}

fn cache_path(dir: &Path, manifest: &Manifest, settings: &Settings) -> Option<PathBuf> {
    let hash = &manifest.dataset.as_ref()?.sha256;
    Some(dir.join(format!(
        "oracles_{}_{}_{}_{}.csv",
        &hash[..16],
        settings.missing_tag(),
        settings.t_is,
        settings.t_oos
    )))
}

fn records(
    panel: &ReturnsPanel,
    settings: &Settings,
    manifest: &mut Manifest,
) -> Result<Vec<OracleRecord>, Failure> {
    if !settings.estimators.iter().any(|k| k.uses_ao()) {
        return Ok(Vec::new());
    }
    let cached = settings
        .oracle_cache
        .as_deref()
        .and_then(|dir| cache_path(dir, manifest, settings));
    if let Some(path) = &cached {
        if path.exists() {
            let file = File::open(path)
                .map_err(|e| Failure::data(format!("cannot read {}: {e}", path.display())))?;
            let history =
                OracleHistory::read_csv(std::io::BufReader::new(file), settings.half_life)?;
            manifest
                .notes
                .push(format!("oracle records read from {}", path.display()));
            return Ok(history.records().to_vec());
        }
    }
    let records = oracle_records(panel, settings.t_is, settings.t_oos)?;
    if let Some(path) = &cached {
        create_dir(path.parent().unwrap_or(Path::new(".")))?;
        let history = OracleHistory::from_records(records.clone(), settings.half_life)?;
        let file = File::create(path)
            .map_err(|e| Failure::config(format!("cannot create {}: {e}", path.display())))?;
        history.write_csv(BufWriter::new(file))?;
        manifest
            .notes
            .push(format!("oracle records written to {}", path.display()));
    }
    Ok(records)
}

fn print_summary(result: &BacktestResult) {
    println!(
        "{:<12} {:>8} {:>10} {:>9} {:>9} {:>9}",
        "estimator", "sharpe", "diversif", "turnover", "leverage", "max_dd"
    );
    for s in &result.series {
        let m = &s.metrics;
        println!(
            "{:<12} {:>8.3} {:>10.2} {:>9.3} {:>9.3} {:>9.3}",
            s.name,
            m.sharpe_annualized,
            m.diversification,
            m.turnover,
            m.gross_leverage,
            m.max_drawdown
        );
    }
}

fn write_backtest_outputs(
    result: &BacktestResult,
    settings: &Settings,
    manifest: &mut Manifest,
) -> Result<(), Failure> {
    let dir = settings.out_dir.clone();
    emit(manifest, &dir, "summary.csv", |w| {
        Ok(write_summary(w, result)?)
    })?;
    emit(manifest, &dir, "sharpe_series.csv", |w| {
        Ok(write_sharpe_series(w, result)?)
    })?;
    for s in &result.series {
        if s.weights.is_some() {
            emit(manifest, &dir, &weights_file_name(s), |w| {
                write_weights(w, s)?;
                Ok(())
            })?;
        }
    }
    if result.series.len() >= 2 {
        let tests = standard_comparisons(result)?;
        emit(manifest, &dir, "tests.csv", |w| Ok(write_tests(w, &tests)?))?;
    } else {
        manifest
            .notes
            .push("tests.csv skipped: one estimator".into());
    }
    match sharpe_mcs(result, &settings.mcs) {
        Ok(mcs) => emit(manifest, &dir, "mcs.csv", |w| Ok(write_mcs(w, &mcs)?))?,
        Err(upsa_core::Error::InvalidMcsInput(why)) => {
            eprintln!("warning: mcs.csv skipped: needs {why}");
            manifest.notes.push(format!("mcs.csv skipped: needs {why}"));
        }
        Err(e) => return Err(e.into()),
    }
    match cumulative_rows(result, CUMULATIVE_TARGET_VOL) {
        Ok(rows) => emit(manifest, &dir, "cumulative_returns.csv", |w| {
            Ok(write_cumulative(w, &rows)?)
        })?,
        Err(e @ upsa_core::Error::SeriesTooShort { .. }) => {
            eprintln!("warning: cumulative_returns.csv skipped: {e}");
            manifest
                .notes
                .push(format!("cumulative_returns.csv skipped: {e}"));
        }
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

pub fn backtest(args: &BacktestArgs) -> Result<(), Failure> {
    let settings = Settings::resolve(
        &args.run,
        args.grid_lo,
        McsFlags {
            alpha: args.mcs_alpha,
            block: args.mcs_block,
            boot: args.mcs_boot,
        },
    )?;
    let config = settings.backtest_config()?;
    with_manifest("backtest", &settings, |panel, manifest| {
        let records = records(panel, &settings, manifest)?;
        let result = run_backtest_with_oracles(panel, &config, &records)?;
        write_backtest_outputs(&result, &settings, manifest)?;
        print_summary(&result);
        println!(
            "{} rebalance dates, outputs in {}",
            result.dates.len(),
            settings.out_dir.display()
        );
        Ok(())
    })
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, Failure> {
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse()
                .map_err(|_| Failure::config(format!("{what}: cannot parse '{v}'")))
        })
        .collect()
}

/// `a..b:step` (inclusive of `b` when it is on the step) or `a,b,c`.
pub fn parse_window_spec(s: &str) -> Result<Vec<usize>, Failure> {
    let Some((a, rest)) = s.split_once("..") else {
        return parse_list(s, "window");
    };
    let (b, step) = rest.split_once(':').unwrap_or((rest, "1"));
    let num = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|_| Failure::config(format!("window: cannot parse '{v}' in '{s}'")))
    };
    let (a, b, step) = (num(a)?, num(b)?, num(step)?);
    if step == 0 {
        return Err(Failure::config("window: step must be positive"));
    }
    Ok((a..=b).step_by(step).collect())
}

pub fn sweep(args: &SweepArgs) -> Result<(), Failure> {
    let settings = Settings::resolve(&args.run, None, McsFlags::default())?;
    let config = settings.backtest_config()?;
    let (default_name, lo, windows) = match (&args.grid_lo, &args.window) {
        (Some(lo), None) => ("grid_lo", parse_list::<f64>(lo, "grid-lo")?, Vec::new()),
        (None, Some(w)) => ("window", Vec::new(), parse_window_spec(w)?),
        _ => return Err(Failure::config("give exactly one of --grid-lo or --window")),
    };
    if lo.is_empty() && windows.is_empty() {
        return Err(Failure::config(format!("empty {default_name} sweep")));
    }
    let name = args.name.as_deref().unwrap_or(default_name);
    if name.is_empty()
        || !name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
    {
        return Err(Failure::config(format!("invalid sweep name '{name}'")));
    }
    let file = format!("sweep_{name}.csv");
    with_manifest("sweep", &settings, |panel, manifest| {
        let table = if windows.is_empty() {
            sweep_grid_lower_bound(panel, &config, &lo)?
        } else {
            sweep_window_length(panel, &config, &windows)?
        };
        emit(manifest, &settings.out_dir, &file, |w| {
            Ok(write_sweep(w, &table)?)
        })?;
        print!("{:>12}", table.parameter);
        for e in &table.estimators {
            print!(" {e:>11}");
        }
        println!();
        for (v, row) in table.values.iter().zip(&table.mean_sharpe) {
            print!("{v:>12}");
            for s in row {
                print!(" {s:>11.3}");
            }
            println!();
        }
        Ok(())
    })
}

pub fn synth(args: &SynthArgs) -> Result<(), Failure> {
    let panel = generate_synthetic_panel(args.n, args.months, args.drift, args.seed)?;
    let path = args
        .output
        .clone()
        .unwrap_or_else(|| default_out_dir().join("synthetic.csv"));
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    create_dir(&dir)?;
    let config = serde_json::json!({
        "n": args.n,
        "months": args.months,
        "drift": args.drift,
        "seed": args.seed,
    });
    let mut manifest =
        Manifest::new("synth", &dir, config)?.with_path(path.with_extension("manifest.json"));
    let file = File::create(&path)
        .map_err(|e| Failure::config(format!("cannot create {}: {e}", path.display())))?;
    let outcome = panel.write_csv(BufWriter::new(file)).map_err(Failure::from);
    if outcome.is_ok() {
        manifest.files.push(
            path.file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
        println!(
            "wrote {} months x {} assets to {}",
            panel.len(),
            panel.n_assets(),
            path.display()
        );
    }
    manifest.finish(&outcome)?;
    outcome
}
