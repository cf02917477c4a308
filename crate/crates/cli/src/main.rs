mod logs;
mod serve;

use std::fmt::Write as _;
use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use vcm_core::config::RunConfig;
use vcm_core::simulator::{run_batch, write_batch};
use vcm_econometrics::design::filter_rounds;
use vcm_econometrics::{pool_design, tobit_fit, Bounds, TobitData, TobitFit};
use vcm_report::{build_report, render_report};

#[derive(Parser)]
#[command(name = "vcmlab", version, about = "Public-goods experiments: simulate, estimate, analyze, run live sessions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run simulated sessions from a TOML run configuration.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replications: Option<u32>,
    },
    /// Fit the censored contribution regression for one cell.
    Estimate {
        /// Glob of .jsonl logs or record CSVs.
        #[arg(long)]
        logs: String,
        #[arg(long)]
        cell: String,
        /// Key-value summary; coefficients go to `<stem>.coefficients.csv` beside it.
        #[arg(long)]
        out: PathBuf,
        /// Session settings for CSV input, taken from a run configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Restrict to rounds a..b (inclusive).
        #[arg(long, value_parser = parse_rounds)]
        rounds: Option<RangeInclusive<u32>>,
    },
    /// Build reciprocity, regression and comparison tables across cells.
    Analyze {
        #[arg(long)]
        logs: String,
        /// Comma-separated cell labels, in table order; default is every cell found.
        #[arg(long, value_delimiter = ',')]
        cells: Option<Vec<String>>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_rounds)]
        rounds: Option<RangeInclusive<u32>>,
        /// Cell pair to compare as A:B; repeatable. Default: same-treatment pairs.
        #[arg(long, value_parser = parse_pair)]
        compare: Vec<(String, String)>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a live session for twelve networked participants.
    Serve(serve::ServeArgs),
}

fn parse_rounds(s: &str) -> Result<RangeInclusive<u32>, String> {
    let (a, b) = s
        .split_once("..=")
        .or_else(|| s.split_once(".."))
        .ok_or_else(|| format!("expected a..b, got `{s}`"))?;
    let a: u32 = a.trim().parse().map_err(|_| format!("bad start round `{a}`"))?;
    let b: u32 = b.trim().parse().map_err(|_| format!("bad end round `{b}`"))?;
    if a == 0 || a > b {
        return Err(format!("round range {a}..{b} is empty or starts before round 1"));
    }
    Ok(a..=b)
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    match s.split_once(':') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
        _ => Err(format!("expected A:B, got `{s}`")),
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate { config, out, seed, replications } => simulate(&config, &out, seed, replications),
        Command::Estimate { logs, cell, out, config, rounds } => estimate(&logs, &cell, &out, config.as_deref(), rounds),
        Command::Analyze { logs, cells, out, rounds, compare, config } => {
            analyze(&logs, cells, &out, rounds, compare, config.as_deref())
        }
        Command::Serve(args) => serve::run(args),
    }
}

fn simulate(config: &Path, out: &Path, seed: Option<u64>, replications: Option<u32>) -> Result<()> {
    let mut run = RunConfig::load(config)?;
    if let Some(s) = seed {
        run.run.seed = Some(s);
    }
    if let Some(r) = replications {
        run.run.replications = Some(r);
    }
    let spec = run.to_run_spec()?;
    let batch = run_batch(&spec)?;
    let written = write_batch(&batch, out)?;
    let m = &batch.summary.per_round_means;
    eprintln!(
        "{} sessions, {} files in {}; mean contribution round 1 {:.2}, round {} {:.2}",
        batch.logs.len(),
        written.len(),
        out.display(),
        m.first().copied().unwrap_or(f64::NAN),
        m.len(),
        m.last().copied().unwrap_or(f64::NAN),
    );
    Ok(())
}

fn estimate(
    pattern: &str,
    cell: &str,
    out: &Path,
    config: Option<&Path>,
    rounds: Option<RangeInclusive<u32>>,
) -> Result<()> {
    let all = logs::load(pattern, config)?;
    let selected = logs::select_cell(&all, cell)?;
    let mut rows = pool_design(&selected)?;
    if let Some(r) = &rounds {
        rows = filter_rounds(rows, r);
    }
    let data = TobitData::from_rows(&rows)?;
    let fit = tobit_fit(&data, &Bounds::tokens(selected[0].config().endowment))?;

    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(out, key_values(cell, &fit, selected.len())).with_context(|| format!("writing {}", out.display()))?;
    let table = coefficient_table_path(out);
    fs::write(&table, coefficient_csv(&fit)).with_context(|| format!("writing {}", table.display()))?;
    eprintln!("{} observations, {} clusters -> {}, {}", fit.n, fit.clusters, out.display(), table.display());
    Ok(())
}

fn coefficient_table_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    out.with_file_name(format!("{stem}.coefficients.csv"))
}

fn key_values(cell: &str, fit: &TobitFit, sessions: usize) -> String {
    let mut s = String::new();
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| v.to_string());
    let _ = writeln!(s, "cell = {cell}");
    let _ = writeln!(s, "sessions = {sessions}");
    let _ = writeln!(s, "n = {}", fit.n);
    let _ = writeln!(s, "clusters = {}", fit.clusters);
    let _ = writeln!(s, "lower_bound = {}", fit.bounds.lower);
    let _ = writeln!(s, "upper_bound = {}", fit.bounds.upper);
    for (j, name) in fit.names.iter().enumerate() {
        let _ = writeln!(s, "coef.{name} = {}", fit.coefficients[j]);
        let _ = writeln!(s, "se.{name} = {}", fit.std_errors[j]);
        let _ = writeln!(s, "p.{name} = {}", fit.p(j));
    }
    let _ = writeln!(s, "sigma = {}", fit.sigma);
    let _ = writeln!(s, "se.sigma = {}", fit.sigma_se);
    let _ = writeln!(s, "llf = {}", fit.llf);
    let _ = writeln!(s, "llf_null = {}", fit.llf_null);
    let _ = writeln!(s, "pseudo_r2 = {}", fit.pseudo_r2);
    let _ = writeln!(s, "corr_observed_predicted = {}", opt(fit.corr_observed_predicted));
    let _ = writeln!(s, "censored_lower = {}", fit.censored_lower);
    let _ = writeln!(s, "censored_upper = {}", fit.censored_upper);
    let _ = writeln!(s, "iterations = {}", fit.iterations);
    let _ = writeln!(s, "gradient_norm = {}", fit.gradient_norm);
    s
}

fn coefficient_csv(fit: &TobitFit) -> String {
    let mut s = String::from("coefficient,estimate,clustered_se\n");
    for (j, name) in fit.names.iter().enumerate() {
        let _ = writeln!(s, "{name},{},{}", fit.coefficients[j], fit.std_errors[j]);
    }
    let _ = writeln!(s, "sigma,{},{}", fit.sigma, fit.sigma_se);
    s
}

fn analyze(
    pattern: &str,
    cells: Option<Vec<String>>,
    out: &Path,
    rounds: Option<RangeInclusive<u32>>,
    compare: Vec<(String, String)>,
    config: Option<&Path>,
) -> Result<()> {
    let all = logs::load(pattern, config)?;
    let labels = match cells {
        Some(c) => c,
        None => logs::cell_labels(&all),
    };
    let mut grouped = Vec::new();
    for label in labels {
        let selected = logs::select_cell(&all, &label)?;
        grouped.push((label, selected));
    }
    if grouped.is_empty() {
        bail!("no cells to analyze");
    }
    let pairs = (!compare.is_empty()).then_some(compare.as_slice());
    let mut report = build_report(&grouped, pairs, rounds)?;
    report.generated_at = Some(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
    let written = render_report(&report, out)?;
    for c in &report.cells {
        if let Err(e) = &c.fit {
            eprintln!("warning: cell {} not estimated: {e}", c.label);
        }
    }
    eprintln!("{} cells, {} files in {}", report.cells.len(), written.len(), out.display());
    Ok(())
}
