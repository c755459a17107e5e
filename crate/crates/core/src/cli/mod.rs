//! Command-line front end.
//!
//! ```text
//! twophoton scan     --config run.json [--seed N] [--out DIR] [--svg]
//! twophoton map      --config run.json [--out DIR]
//! twophoton fit      scan.csv [--config run.json] [--out DIR] [--svg]
//! twophoton report   --config run.json [--seed N] [--out DIR] [--svg]
//! twophoton validate --config run.json
//! ```
//!
//! Every output file carries the run manifest (command, seed, resolved
//! configuration, output names). A manifest is itself accepted by `--config`,
//! and re-running from it reproduces the outputs byte for byte.
//!
//! Exit codes: 0 success, 2 configuration or I/O error, 3 physics-domain
//! error, 4 analysis failure (degenerate data, no convergence).

mod config;
mod output;

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{self, Comparison, EnvelopeShape, FitOptions, FitResult};
use crate::detection::{self, RateUnits};
use crate::error::{Error, Result};
use crate::optics::QuadratureSpec;
use crate::scans::{self, ScanResult, ScanSpec};
use crate::setup::{DerivedQuantities, OpticalSetup, SetupConfig};
use crate::states::TwoPhotonState;

pub use config::{
    ConfigSource, CountingConfig, DephasingConfig, MapConfig, RunConfig, RunManifest, ScanConfig,
    StateConfig,
};
pub use output::{parse_scan_csv, read_scan_csv, scan_csv, write_atomic, ScanTable};

#[derive(Debug, Parser)]
#[command(
    name = "twophoton",
    version,
    about = "Two-photon far-field interference simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration or a manifest from an earlier run (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Random seed; overrides the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Also write SVG plots (scan, fit, report).
    #[arg(long, global = true)]
    pub svg: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scan and write scan.csv and scan.json.
    Scan,
    /// Write the y = 0 coincidence map over (ξ1, ξ2) to map.csv.
    Map,
    /// Fit a scan CSV and compare with theory (fit.json, fit.txt).
    Fit {
        /// Scan CSV; defaults to the input recorded in a fit manifest.
        input: Option<PathBuf>,
    },
    /// Scan, fit and compare in one run.
    Report,
    /// Check a configuration and print the derived scales.
    Validate,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Scan => "scan",
            Command::Map => "map",
            Command::Fit { .. } => "fit",
            Command::Report => "report",
            Command::Validate => "validate",
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
/// Diagnostics go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(lines) => {
            let mut stdout = std::io::stdout().lock();
            for line in lines {
                // a closed pipe is not an error for the run itself
                if writeln!(stdout, "{line}").is_err() {
                    break;
                }
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command; returns the lines to print on success.
pub fn execute(cli: &Cli) -> Result<Vec<String>> {
    let source = cli.config.as_deref().map(ConfigSource::load).transpose()?;
    match &cli.command {
        Command::Fit { input } => cmd_fit(cli, source.as_ref(), input.as_deref()),
        command => {
            let source = source
                .ok_or_else(|| Error::Config(format!("{} needs --config", command.name())))?;
            let (config, seed) = resolve(&source, cli.seed)?;
            match command {
                Command::Scan => cmd_scan(cli, &config, seed),
                Command::Map => cmd_map(cli, &config, seed),
                Command::Report => cmd_report(cli, &config, seed),
                Command::Validate => cmd_validate(&config),
                Command::Fit { .. } => unreachable!(),
            }
        }
    }
}

/// Configuration with the effective seed written back into it.
fn resolve(source: &ConfigSource, seed_override: Option<u64>) -> Result<(RunConfig, u64)> {
    let mut config = source
        .config()
        .cloned()
        .ok_or_else(|| Error::Config("manifest carries no run configuration".into()))?;
    let seed = seed_override.or(source.seed()).unwrap_or(0);
    config.seed = Some(seed);
    config.validate()?;
    Ok((config, seed))
}

/// Ideal scan, then dephasing and counting noise as configured.
pub fn simulate_scan(config: &RunConfig, seed: u64) -> Result<ScanResult> {
    let spec: ScanSpec = config.scan_spec()?;
    let setup = config.optical_setup();
    let mut result = match &config.dephasing {
        Some(d) => scans::dephased_scan(
            &spec,
            &setup,
            d.sigma_theta_deg.to_radians(),
            d.mc_samples,
            seed,
        )?,
        None => scans::run_scan(&spec, &setup)?,
    };
    if let Some(counting) = &config.counting {
        result = scans::apply_counting(&result, &counting.model(&setup)?, seed)?;
    }
    Ok(result)
}

fn manifest_for(
    command: &str,
    config: &RunConfig,
    seed: u64,
    outputs: &[&str],
) -> Result<RunManifest> {
    let mut manifest = RunManifest::new(command, seed);
    manifest.derived = Some(config.optical_setup().derive()?);
    manifest.config = Some(config.clone());
    manifest.outputs = outputs.iter().map(|s| s.to_string()).collect();
    Ok(manifest)
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("output serializes");
    text.push('\n');
    text.into_bytes()
}

fn write(dir: &Path, name: &str, contents: &[u8], written: &mut Vec<String>) -> Result<()> {
    let path = dir.join(name);
    write_atomic(&path, contents)?;
    written.push(format!("wrote {}", path.display()));
    Ok(())
}

#[derive(Serialize)]
struct ScanSidecar<'a> {
    manifest: &'a RunManifest,
    spec: &'a ScanSpec,
    derived: &'a DerivedQuantities,
}

fn scan_plot(result: &ScanResult, manifest: &RunManifest) -> String {
    let x_label = if result.spec.kind.is_spatial() {
        "s (m)"
    } else {
        "parameter (rad)"
    };
    let counted = result.samples.iter().all(|s| s.corrected.is_some());
    let points = result
        .samples
        .iter()
        .map(|s| {
            (
                s.parameter,
                if counted {
                    s.corrected.unwrap_or(0.0)
                } else {
                    s.ideal_rate
                },
            )
        })
        .collect();
    let y_label = if counted {
        "corrected counts"
    } else {
        "normalized rate"
    };
    output::svg_plot(
        x_label,
        y_label,
        &[output::Series {
            color: "black",
            points,
        }],
        manifest,
    )
}

fn cmd_scan(cli: &Cli, config: &RunConfig, seed: u64) -> Result<Vec<String>> {
    let result = simulate_scan(config, seed)?;
    let mut names = vec!["scan.csv", "scan.json"];
    if cli.svg {
        names.push("scan.svg");
    }
    let manifest = manifest_for("scan", config, seed, &names)?;
    let mut written = Vec::new();
    write(
        &cli.out,
        "scan.csv",
        &scan_csv(&result, &manifest)?,
        &mut written,
    )?;
    let sidecar = ScanSidecar {
        manifest: &manifest,
        spec: &result.spec,
        derived: &result.derived,
    };
    write(&cli.out, "scan.json", &to_json(&sidecar), &mut written)?;
    if cli.svg {
        write(
            &cli.out,
            "scan.svg",
            scan_plot(&result, &manifest).as_bytes(),
            &mut written,
        )?;
    }
    Ok(written)
}

/// Peak-normalized narrow-slit rate on the grid ξ1 × ξ2 (x = ξΛ, y = 0).
pub fn coincidence_map(config: &RunConfig, grid: &MapConfig) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let setup = config.optical_setup();
    let derived = setup.derive()?;
    let state = TwoPhotonState::prepare_from_hwp(config.alpha(), config.theta());
    let step = (grid.xi_max - grid.xi_min) / (grid.points - 1) as f64;
    let xi: Vec<f64> = (0..grid.points)
        .map(|i| grid.xi_min + i as f64 * step)
        .collect();
    let rates = xi
        .par_iter()
        .map(|&a| {
            xi.iter()
                .map(|&b| {
                    detection::rate_narrow(
                        &state,
                        a * derived.period,
                        b * derived.period,
                        &setup,
                        RateUnits::PeakNormalized,
                    )
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((xi, rates))
}

#[derive(Serialize)]
struct MapSidecar<'a> {
    manifest: &'a RunManifest,
    grid: &'a MapConfig,
}

fn cmd_map(cli: &Cli, config: &RunConfig, seed: u64) -> Result<Vec<String>> {
    let grid = config.map.unwrap_or_default();
    let (xi, rates) = coincidence_map(config, &grid)?;
    let manifest = manifest_for("map", config, seed, &["map.csv", "map.json"])?;
    let mut written = Vec::new();
    write(
        &cli.out,
        "map.csv",
        &output::map_csv(&xi, &rates, &manifest)?,
        &mut written,
    )?;
    let sidecar = MapSidecar {
        manifest: &manifest,
        grid: &grid,
    };
    write(&cli.out, "map.json", &to_json(&sidecar), &mut written)?;
    Ok(written)
}

#[derive(Debug, Clone, Serialize)]
struct FitOutput<'a> {
    manifest: &'a RunManifest,
    fit: &'a FitResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<&'a Comparison>,
}

/// Fits a parsed scan table; spatial scans get a Gaussian envelope and a
/// comparison with `setup`, angular scans a flat one.
pub fn fit_table(
    table: &ScanTable,
    setup: &OpticalSetup,
) -> Result<(FitResult, Option<Comparison>)> {
    let options = if table.angular {
        FitOptions::flat()
    } else {
        FitOptions::default()
    };
    let fit = analysis::fit_fringe(&table.samples, &options)?;
    let comparison = if table.angular {
        None
    } else {
        Some(analysis::compare(&fit, setup)?)
    };
    Ok((fit, comparison))
}

fn fit_text(fit: &FitResult, comparison: Option<&Comparison>, manifest: &RunManifest) -> String {
    let m = &fit.model;
    let u = &fit.uncertainties;
    let pm = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |e| format!("{e:.4e}"));
    let mut lines = vec![
        format!("# manifest {}", manifest.to_json_line()),
        format!("kind: {:?}", fit.kind),
        format!(
            "converged: {} after {} iterations",
            fit.converged, fit.iterations
        ),
        format!(
            "residual norm: {:.6e} (start {:.6e})",
            fit.residual_norm, fit.initial_residual_norm
        ),
        format!("visibility: {:.6} ± {}", m.visibility, pm(u.visibility)),
    ];
    if let Some(p) = m.period_s {
        lines.push(format!("period in s: {:.6e} ± {}", p, pm(u.period_s)));
        lines.push(format!("phase0: {:.6} ± {} rad", m.phase0, pm(u.phase0)));
    }
    if let Some(w) = m.envelope_sigma {
        lines.push(format!(
            "envelope width in s: {:.6e} ± {}",
            w,
            pm(u.envelope_sigma)
        ));
    }
    if fit.visibility_clamped {
        lines.push("note: fitted parameters were outside their physical range and clamped".into());
    }
    if let Some(c) = comparison {
        lines.extend(c.summary.iter().cloned());
    }
    let mut text = lines.join("\n");
    text.push('\n');
    text
}

fn fit_plot(table: &ScanTable, fit: &FitResult, manifest: &RunManifest) -> String {
    let data: Vec<(f64, f64)> = table.samples.iter().map(|s| (s.s, s.value)).collect();
    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
            (a.min(p.0), b.max(p.0))
        });
    let model = (0..=400)
        .map(|i| {
            let s = lo + (hi - lo) * i as f64 / 400.0;
            (s, fit.model.evaluate(s))
        })
        .collect();
    let x_label = if table.angular {
        "parameter (rad)"
    } else {
        "s (m)"
    };
    output::svg_plot(
        x_label,
        "value",
        &[
            output::Series {
                color: "gray",
                points: data,
            },
            output::Series {
                color: "red",
                points: model,
            },
        ],
        manifest,
    )
}

fn write_fit(
    cli: &Cli,
    prefix: &str,
    table: &ScanTable,
    manifest: &RunManifest,
    setup: &OpticalSetup,
    written: &mut Vec<String>,
) -> Result<()> {
    let (fit, comparison) = fit_table(table, setup)?;
    let doc = FitOutput {
        manifest,
        fit: &fit,
        comparison: comparison.as_ref(),
    };
    write(&cli.out, &format!("{prefix}.json"), &to_json(&doc), written)?;
    let text = fit_text(&fit, comparison.as_ref(), manifest);
    write(&cli.out, &format!("{prefix}.txt"), text.as_bytes(), written)?;
    if cli.svg {
        write(
            &cli.out,
            &format!("{prefix}.svg"),
            fit_plot(table, &fit, manifest).as_bytes(),
            written,
        )?;
    }
    written.extend(text.lines().skip(1).map(str::to_string));
    Ok(())
}

fn cmd_fit(cli: &Cli, source: Option<&ConfigSource>, input: Option<&Path>) -> Result<Vec<String>> {
    let input = match (input, source) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(ConfigSource::Manifest(m))) if m.input.is_some() => {
            PathBuf::from(m.input.as_deref().unwrap_or_default())
        }
        _ => return Err(Error::Config("fit needs an input CSV".into())),
    };
    let table = read_scan_csv(&input)?;
    let config = match (source, &table.manifest) {
        (Some(ConfigSource::Run(c)), _) => Some(c.clone()),
        (Some(ConfigSource::Manifest(m)), _) if m.config.is_some() => m.config.clone(),
        (_, Some(m)) => m.config.clone(),
        _ => None,
    };
    let setup_config = config
        .as_ref()
        .map_or_else(SetupConfig::reference, |c| c.setup);
    let setup = setup_config.to_setup();
    setup.check()?;
    let seed = cli
        .seed
        .or(source.and_then(ConfigSource::seed))
        .or(table.manifest.as_ref().map(|m| m.seed))
        .unwrap_or(0);

    let mut names = vec!["fit.json", "fit.txt"];
    if cli.svg {
        names.push("fit.svg");
    }
    let mut manifest = RunManifest::new("fit", seed);
    manifest.config = config.map(|mut c| {
        c.seed = Some(seed);
        c
    });
    manifest.derived = Some(setup.derive()?);
    manifest.input = Some(input.display().to_string());
    manifest.envelope = Some(if table.angular {
        EnvelopeShape::Flat
    } else {
        EnvelopeShape::Gaussian
    });
    manifest.outputs = names.iter().map(|s| s.to_string()).collect();

    let mut written = Vec::new();
    write_fit(cli, "fit", &table, &manifest, &setup, &mut written)?;
    Ok(written)
}

fn cmd_report(cli: &Cli, config: &RunConfig, seed: u64) -> Result<Vec<String>> {
    let result = simulate_scan(config, seed)?;
    let mut names = vec!["scan.csv", "report.json", "report.txt"];
    if cli.svg {
        names.push("report.svg");
    }
    let manifest = manifest_for("report", config, seed, &names)?;
    let csv = scan_csv(&result, &manifest)?;
    // fit exactly what a later `fit scan.csv` would read
    let table = parse_scan_csv(std::str::from_utf8(&csv).expect("csv is utf-8"))?;
    let mut written = Vec::new();
    write(&cli.out, "scan.csv", &csv, &mut written)?;
    write_fit(
        cli,
        "report",
        &table,
        &manifest,
        &config.optical_setup(),
        &mut written,
    )?;
    Ok(written)
}

fn cmd_validate(config: &RunConfig) -> Result<Vec<String>> {
    let setup = config.optical_setup();
    let derived = setup.derive()?;
    let quad = QuadratureSpec::default_for(&setup);
    let mut x_max = 0.0f64;
    if let Some(scan) = &config.scan {
        if scan.kind.is_spatial() {
            let spec = config.scan_spec()?;
            x_max = x_max.max(spec.start.abs()).max(spec.stop.abs()) + setup.slit_width / 2.0;
        }
    }
    if let Some(map) = &config.map {
        x_max = x_max.max(map.xi_min.abs().max(map.xi_max.abs()) * derived.period);
    }
    quad.check_nyquist(x_max, &setup)?;
    Ok(vec![
        format!("sigma = {:.3} um", derived.sigma * 1e6),
        format!("Lambda = {:.3} um", derived.period * 1e6),
        format!(
            "quadrature: {} points over +-{:.3} um resolves |x| <= {:.3e} m",
            quad.points_per_axis,
            quad.half_extent * 1e6,
            x_max
        ),
        "configuration ok".to_string(),
    ])
}
