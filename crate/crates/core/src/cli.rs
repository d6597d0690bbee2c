//! Command-line interface.
//!
//! Exit codes: 0 on success, 1 on runtime or validation failure, 2 on
//! usage, configuration or input errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Deserialize;

use crate::engine::{run_randomization_test, RandTestConfig};
use crate::error::{Error, Result};
use crate::experiments::{run_scenario, ScenarioConfig};
use crate::groups::{GroupAction, GroupKind};
use crate::numerics::{DataMatrix, RngStream};
use crate::statistics::TestStatistic;
use crate::theory::{
    bernoulli_bound_design, bernoulli_bound_regression, chi2_shift_gaussian, consistency_margin, varl_lowrank_exact,
    varl_sparse, ConsistencyInputs, Proposition,
};
use crate::validation::{run_validation, Level};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "randinv", version, about = "Group-invariance randomization tests")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a power experiment described by a JSON config and write its CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run one randomization test on a numeric CSV matrix.
    Test {
        #[arg(long)]
        data: PathBuf,
        /// colmean_linf, colmean_max, linf, opnorm or kyfan:K:ZETA
        #[arg(long)]
        stat: String,
        /// signflip, permutation, rotation or column_rotation
        #[arg(long)]
        group: String,
        /// Number of random transforms
        #[arg(long = "K")]
        draws: usize,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Theory calculations: varL-sparse, varL-lowrank, margin, bernoulli-bound.
    Theory {
        subcommand: String,
        /// key=value parameters (margin also takes the proposition name)
        params: Vec<String>,
        /// Also write the report as key,value CSV
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the self-check suite.
    Validate {
        #[arg(long, conflicts_with = "full")]
        quick: bool,
        #[arg(long)]
        full: bool,
    },
}

/// Top-level configuration file of `simulate`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Parse { .. } => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Simulate {
            config,
            out: out_path,
            seed,
            workers,
        } => cmd_simulate(&config, out_path, seed, workers, out),
        Command::Test {
            data,
            stat,
            group,
            draws,
            alpha,
            seed,
        } => cmd_test(&data, &stat, &group, draws, alpha, seed, out),
        Command::Theory { subcommand, params, csv } => cmd_theory(&subcommand, &params, csv.as_deref(), out),
        Command::Validate { full, .. } => cmd_validate(if full { Level::Full } else { Level::Quick }, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn entropy_seed() -> u64 {
    rand::random()
}

fn write_out(out: &mut dyn Write, text: std::fmt::Arguments<'_>) -> Result<()> {
    out.write_fmt(text)?;
    Ok(())
}

pub fn cmd_simulate(
    config: &Path,
    out_path: Option<PathBuf>,
    seed: Option<u64>,
    workers: Option<usize>,
    out: &mut dyn Write,
) -> Result<i32> {
    let text = fs::read_to_string(config)
        .map_err(|e| Error::config("config", format!("cannot read {}: {e}", config.display())))?;
    let run_cfg = RunConfig::from_json(&text)?;
    let output = out_path
        .or(run_cfg.output.clone())
        .ok_or_else(|| Error::config("output", "no output path in the config or on the command line"))?;
    let seed = match seed.or(run_cfg.seed).or(run_cfg.scenario.seed) {
        Some(s) => s,
        None => {
            let s = entropy_seed();
            write_out(out, format_args!("seed drawn from entropy: {s}\n"))?;
            s
        }
    };
    let workers = workers.or(run_cfg.workers).unwrap_or(0);
    let scenario = run_cfg.scenario.resolve(seed)?;
    let result = run_scenario(&scenario, workers)?;
    let file = fs::File::create(&output)?;
    result.curve.write_csv(std::io::BufWriter::new(file))?;
    write_out(
        out,
        format_args!(
            "scenario {} seed {} reps {} -> {}\n{}",
            scenario.kind.name(),
            seed,
            scenario.reps,
            output.display(),
            result.curve
        ),
    )?;
    if let Some(report) = &result.regression_report {
        write_out(out, format_args!("\nconsistency margins for the realized design\n{report}"))?;
    }
    Ok(EXIT_OK)
}

/// Reads a numeric CSV matrix. A first row whose first cell is not a
/// number is taken as a header. Rows and columns in errors are 1-based
/// file positions.
pub fn read_data_csv(text: &str) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if i == 0 && rec.get(0).map(|c| c.parse::<f64>().is_err()).unwrap_or(false) {
            continue;
        }
        let mut row = Vec::with_capacity(rec.len());
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: line,
                col: j + 1,
                message: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: line,
                    col: j + 1,
                    message: format!("`{cell}` is not finite"),
                });
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    row: line,
                    col: row.len().min(first.len()) + 1,
                    message: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            row: 1,
            col: 1,
            message: "no numeric rows".into(),
        });
    }
    DataMatrix::from_rows(&rows)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_test(
    data: &Path,
    stat: &str,
    group: &str,
    draws: usize,
    alpha: f64,
    seed: Option<u64>,
    out: &mut dyn Write,
) -> Result<i32> {
    let text = fs::read_to_string(data)
        .map_err(|e| Error::config("data", format!("cannot read {}: {e}", data.display())))?;
    let x = read_data_csv(&text)?;
    let stat = TestStatistic::parse(stat)?;
    let kind = GroupKind::parse(group).ok_or_else(|| {
        Error::config(
            "group",
            format!("unknown group `{group}` (expected signflip, permutation, rotation, column_rotation)"),
        )
    })?;
    let cfg = RandTestConfig::new(draws, alpha).map_err(|e| Error::config("K/alpha", e.to_string()))?;
    let action = GroupAction::for_data(kind, &x).map_err(|e| Error::config("group", e.to_string()))?;
    action.check(&x).map_err(|e| Error::config("group", e.to_string()))?;
    let seed = seed.unwrap_or_else(entropy_seed);
    let mut rng = RngStream::new(seed, 0);
    let outcome = run_randomization_test(&x, &stat, &action, &cfg, &mut rng)?;
    write_out(
        out,
        format_args!(
            "data = {} ({}x{})\nstat = {}\ngroup = {}\nK = {}\nalpha = {}\nseed = {}\nt0 = {}\nk = {}\nreject = {}\np_value = {}\n",
            data.display(),
            x.rows(),
            x.cols(),
            stat.name(),
            kind.name(),
            draws,
            alpha,
            seed,
            outcome.t0,
            outcome.k,
            outcome.reject,
            outcome.p_value
        ),
    )?;
    Ok(EXIT_OK)
}

/// `key=value` parameters plus any bare words, in order.
struct Params {
    pairs: Vec<(String, String)>,
    bare: Vec<String>,
}

impl Params {
    fn parse(raw: &[String]) -> Self {
        let mut pairs = Vec::new();
        let mut bare = Vec::new();
        for item in raw {
            match item.split_once('=') {
                Some((k, v)) => pairs.push((k.trim().to_string(), v.trim().to_string())),
                None => bare.push(item.clone()),
            }
        }
        Self { pairs, bare }
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.pairs.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn value<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| v.parse().map_err(|_| Error::config(key, format!("cannot parse `{v}`"))))
            .transpose()
    }

    fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.value(key)?.ok_or_else(|| Error::config(key, "required parameter is missing"))
    }

    fn only(&self, allowed: &[&str]) -> Result<()> {
        for (k, _) in &self.pairs {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::config(k.as_str(), format!("unknown parameter (allowed: {})", allowed.join(", "))));
            }
        }
        Ok(())
    }

    fn echo(&self) -> String {
        self.bare
            .iter()
            .cloned()
            .chain(self.pairs.iter().map(|(k, v)| format!("{k}={v}")))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

pub fn cmd_theory(sub: &str, raw: &[String], csv_path: Option<&Path>, out: &mut dyn Write) -> Result<i32> {
    let params = Params::parse(raw);
    let report: Vec<(String, String)> = match sub {
        "varL-sparse" => {
            params.only(&["n", "p", "tau", "chi2", "family"])?;
            let n: usize = params.require("n")?;
            let p: usize = params.require("p")?;
            let chi2 = match (params.value::<f64>("chi2")?, params.value::<f64>("tau")?) {
                (Some(c), None) => c,
                (None, Some(tau)) => {
                    let family = params.get("family").unwrap_or("gaussian");
                    if family != "gaussian" {
                        return Err(Error::config("family", format!("no closed form for `{family}`; pass chi2= instead")));
                    }
                    chi2_shift_gaussian(tau)
                }
                _ => return Err(Error::config("tau", "give exactly one of tau= or chi2=")),
            };
            let v = varl_sparse(n, p, chi2).map_err(|e| Error::config("n/p/chi2", e.to_string()))?;
            vec![("chi2".into(), chi2.to_string()), ("varL_sparse".into(), v.to_string())]
        }
        "varL-lowrank" => {
            params.only(&["n", "tau"])?;
            let n: usize = params.require("n")?;
            let tau: f64 = params.require("tau")?;
            let v = varl_lowrank_exact(n, tau).map_err(|e| Error::config("n", e.to_string()))?;
            vec![("varL_lowrank".into(), v.to_string())]
        }
        "margin" => {
            let name = match (params.bare.as_slice(), params.get("proposition")) {
                ([name], None) => name.clone(),
                ([], Some(name)) => name.to_string(),
                _ => return Err(Error::config("proposition", "name exactly one proposition")),
            };
            let prop = Proposition::parse(&name)?;
            let mut map = serde_json::Map::new();
            for (k, v) in &params.pairs {
                if k == "proposition" {
                    continue;
                }
                let value = if let Ok(i) = v.parse::<u64>() {
                    serde_json::Value::from(i)
                } else {
                    let f: f64 = v.parse().map_err(|_| Error::config(k.as_str(), format!("cannot parse `{v}`")))?;
                    serde_json::Value::from(f)
                };
                map.insert(k.clone(), value);
            }
            let inputs: ConsistencyInputs = serde_json::from_value(serde_json::Value::Object(map))
                .map_err(|e| Error::config("margin", e.to_string()))?;
            let m = consistency_margin(prop, &inputs)?;
            vec![
                ("margin".into(), m.randomization.to_string()),
                ("deterministic_margin".into(), m.deterministic.to_string()),
            ]
        }
        "bernoulli-bound" => {
            params.only(&["target", "design", "eps", "n", "p", "l", "mc", "seed"])?;
            let target = params.get("target").unwrap_or("design");
            let l: f64 = params.value("l")?.unwrap_or(5.0);
            let mc: usize = params.value("mc")?.unwrap_or(2000);
            let seed: u64 = params.value("seed")?.unwrap_or(0);
            let mut rng = RngStream::new(seed, 0);
            let design = match params.get("design") {
                Some(path) => read_data_csv(
                    &fs::read_to_string(path).map_err(|e| Error::config("design", format!("cannot read {path}: {e}")))?,
                )?,
                None => {
                    let n: usize = params.require("n")?;
                    let p: usize = params.require("p")?;
                    if n == 0 || p == 0 {
                        return Err(Error::config("n", "dimensions must be at least 1"));
                    }
                    DataMatrix::from_fn(n, p, |_, _| rng.normal())
                }
            };
            let bound = match target {
                "design" => bernoulli_bound_design(&design, l, mc, &mut rng),
                "regression" => {
                    let eps: Vec<f64> = match params.get("eps") {
                        Some(path) => read_data_csv(
                            &fs::read_to_string(path).map_err(|e| Error::config("eps", format!("cannot read {path}: {e}")))?,
                        )?
                        .to_row_major()
                        .iter()
                        .map(|v| v.abs())
                        .collect(),
                        None => (0..design.rows()).map(|_| rng.normal().abs()).collect(),
                    };
                    bernoulli_bound_regression(&design, &eps, l, mc, &mut rng)
                }
                other => return Err(Error::config("target", format!("expected design or regression, got `{other}`"))),
            }
            .map_err(|e| Error::config("bernoulli-bound", e.to_string()))?;
            vec![
                ("b_estimate".into(), bound.b_estimate.to_string()),
                ("r_value".into(), bound.r_value.to_string()),
                ("l".into(), bound.l.to_string()),
                ("u_plus".into(), bound.u_plus.to_string()),
                ("mc_samples".into(), bound.mc_samples.to_string()),
                ("mc_standard_error".into(), bound.mc_standard_error.to_string()),
            ]
        }
        other => {
            return Err(Error::config(
                "subcommand",
                format!("unknown theory command `{other}` (expected varL-sparse, varL-lowrank, margin, bernoulli-bound)"),
            ))
        }
    };
    write_out(out, format_args!("{sub} {}\n", params.echo()))?;
    for (k, v) in &report {
        write_out(out, format_args!("{k} = {v}\n"))?;
    }
    if let Some(path) = csv_path {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["key", "value"])?;
        for (k, v) in &report {
            w.write_record([k, v])?;
        }
        w.flush()?;
    }
    Ok(EXIT_OK)
}

pub fn cmd_validate(level: Level, out: &mut dyn Write) -> Result<i32> {
    let report = run_validation(level);
    write_out(out, format_args!("{report}"))?;
    match report.first_failure() {
        None => {
            write_out(out, format_args!("all {} checks passed\n", report.results.len()))?;
            Ok(EXIT_OK)
        }
        Some(failure) => {
            write_out(out, format_args!("first failing check: {}\n", failure.name))?;
            Ok(EXIT_FAILURE)
        }
    }
}
