//! Monte Carlo power experiments.
//!
//! Every scenario draws replicate `r` at grid point `g` from the stream
//! `(g << 40) | (slot << 32) | r` of the master seed. Slot 0 of a noise
//! variant holds the data and the following slots hold one stream per
//! method, so all methods see the same data and the worker count never
//! changes the output.

use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{project_out_nuisance, run_randomization_test, RandTestConfig};
use crate::error::{Error, Result};
use crate::groups::{GroupAction, GroupKind};
use crate::noise::{build_signal, sample_noise, BaseLaw, NoiseFamily, NoiseSpec, SignalSpec, SphericalUnit};
use crate::numerics::{normal_quantile, student_t_quantile, DataMatrix, RngStream};
use crate::statistics::{DiffNorm, OlsContext, TestStatistic};
use crate::theory::{
    bernoulli_bound_design, bernoulli_bound_regression, consistency_margin, BernoulliBound, ConsistencyInputs, Margins,
    Proposition,
};

/// Stream id of the fixed regression design.
pub const DESIGN_STREAM: u64 = u64::MAX;
/// Stream id of the noise draw behind the regression margin report.
pub const REPORT_NOISE_STREAM: u64 = u64::MAX - 1;

/// Default grid top for the regression scenario.
pub const REGRESSION_GRID_MAX: f64 = 2.5;
/// Default rows per sample in the sparse scenarios.
pub const SPARSE_DEFAULT_N: usize = 20;

const GRID_POINTS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    SparseVector,
    HeavyTail,
    TwoSample,
    Lowrank,
    Regression,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::SparseVector => "sparse_vector",
            ScenarioKind::HeavyTail => "heavy_tail",
            ScenarioKind::TwoSample => "two_sample",
            ScenarioKind::Lowrank => "lowrank",
            ScenarioKind::Regression => "regression",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodSpec {
    Randomization {
        group: GroupKind,
        #[serde(rename = "K")]
        draws: usize,
    },
    Deterministic,
    TTest,
}

impl MethodSpec {
    pub fn randomization(group: GroupKind, draws: usize) -> Self {
        MethodSpec::Randomization { group, draws }
    }

    pub fn label(&self) -> String {
        match self {
            MethodSpec::Randomization { group, draws } => {
                let short = match group {
                    GroupKind::SignflipRows => "signflip",
                    GroupKind::PermuteRows => "permutation",
                    GroupKind::RotateFull => "rotation",
                    GroupKind::RotatePerColumn => "column_rotation",
                };
                format!("{short}_K{draws}")
            }
            MethodSpec::Deterministic => "deterministic".into(),
            MethodSpec::TTest => "t_test".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum GridConfig {
    Values(Vec<f64>),
    Linspace {
        #[serde(default)]
        start: f64,
        stop: f64,
        points: usize,
    },
}

/// `points` equally spaced values from `start` to `stop`, both included.
pub fn linspace(start: f64, stop: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..points)
            .map(|i| start + (stop - start) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// Scenario description as written in a configuration file. Unset fields
/// take the scenario's defaults in [`ScenarioConfig::resolve`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: ScenarioKind,
    pub alpha: f64,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub p: Option<usize>,
    #[serde(default)]
    pub n_prime: Option<usize>,
    #[serde(default)]
    pub noise: Option<NoiseFamily>,
    /// Degrees of freedom of the heavy-tail scenario's t noise.
    #[serde(default)]
    pub dfs: Option<Vec<f64>>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub methods: Option<Vec<MethodSpec>>,
    #[serde(default)]
    pub reps: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Deviation multiplier for the Bernoulli bounds (regression only).
    #[serde(default)]
    pub l: Option<f64>,
    /// Monte Carlo draws for the Bernoulli bounds (regression only).
    #[serde(default)]
    pub mc: Option<usize>,
}

impl ScenarioConfig {
    /// All defaults for `kind` at level `alpha`.
    pub fn new(name: ScenarioKind, alpha: f64) -> Self {
        Self {
            name,
            alpha,
            n: None,
            p: None,
            n_prime: None,
            noise: None,
            dfs: None,
            grid: None,
            methods: None,
            reps: None,
            seed: None,
            l: None,
            mc: None,
        }
    }

    /// Fills in defaults and validates. `seed` is the master seed to use.
    pub fn resolve(&self, seed: u64) -> Result<Scenario> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("alpha", format!("must lie in (0,1), got {}", self.alpha)));
        }
        let kind = self.name;
        let (n_def, p_def, reps_def) = match kind {
            ScenarioKind::SparseVector | ScenarioKind::HeavyTail => (SPARSE_DEFAULT_N, 100, 1000),
            ScenarioKind::TwoSample => (15, 1, 1000),
            ScenarioKind::Lowrank => (50, 50, 500),
            ScenarioKind::Regression => (100, 20, 500),
        };
        let n = self.n.unwrap_or(n_def);
        let p = self.p.unwrap_or(p_def);
        let n_prime = self.n_prime.unwrap_or(n);
        let reps = self.reps.unwrap_or(reps_def);
        if n == 0 {
            return Err(Error::config("n", "must be at least 1"));
        }
        if p == 0 {
            return Err(Error::config("p", "must be at least 1"));
        }
        if reps == 0 || reps as u64 > u32::MAX as u64 {
            return Err(Error::config("reps", "must lie in 1..=2^32-1"));
        }
        if self.n_prime.is_some() && kind != ScenarioKind::TwoSample {
            return Err(Error::config("n_prime", "only the two_sample scenario has a second sample"));
        }
        match kind {
            ScenarioKind::SparseVector | ScenarioKind::HeavyTail if n < 2 => {
                return Err(Error::config("n", "sign flips need at least 2 rows"));
            }
            ScenarioKind::TwoSample if n < 2 || n_prime < 2 => {
                return Err(Error::config("n", "each sample needs at least 2 observations"));
            }
            ScenarioKind::Regression if n <= p => {
                return Err(Error::config("n", "regression needs more rows than covariates"));
            }
            _ => {}
        }

        let noise = self.resolve_noise(n, p, n_prime)?;
        let grid = self.resolve_grid(n, p)?;
        let methods = self.resolve_methods()?;
        for m in &methods {
            check_method(kind, m, &noise)?;
        }
        let l = self.l.unwrap_or(5.0);
        let mc = self.mc.unwrap_or(2000);
        if kind == ScenarioKind::Regression {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::config("l", "must be positive"));
            }
            if mc < 100 {
                return Err(Error::config("mc", "must be at least 100"));
            }
        } else if self.l.is_some() || self.mc.is_some() {
            return Err(Error::config("l", "Bernoulli bound settings apply to the regression scenario only"));
        }
        Ok(Scenario {
            kind,
            n,
            p,
            n_prime,
            noise,
            grid,
            methods,
            alpha: self.alpha,
            reps,
            seed,
            l,
            mc,
        })
    }

    fn resolve_noise(&self, n: usize, p: usize, n_prime: usize) -> Result<Vec<NoiseVariant>> {
        let rows = if self.name == ScenarioKind::TwoSample { n + n_prime } else { n };
        let variant = |family: NoiseFamily, suffix: String| -> Result<NoiseVariant> {
            let spec = NoiseSpec::new(family, rows, p).map_err(|e| Error::config("noise", e.to_string()))?;
            Ok(NoiseVariant { spec, suffix })
        };
        if self.name == ScenarioKind::HeavyTail {
            if self.noise.is_some() {
                return Err(Error::config("noise", "heavy_tail noise is set through `dfs`"));
            }
            let dfs = self.dfs.clone().unwrap_or_else(|| vec![3.0, 5.0]);
            if dfs.is_empty() {
                return Err(Error::config("dfs", "must be nonempty"));
            }
            return dfs
                .into_iter()
                .map(|df| {
                    let family = NoiseFamily::IidStudent { df };
                    let spec = NoiseSpec::new(family, rows, p).map_err(|e| Error::config("dfs", e.to_string()))?;
                    let suffix = format!("_{}", spec.label());
                    Ok(NoiseVariant { spec, suffix })
                })
                .collect();
        }
        if self.dfs.is_some() {
            return Err(Error::config("dfs", "only the heavy_tail scenario takes `dfs`"));
        }
        let family = match (&self.noise, self.name) {
            (Some(f), _) => f.clone(),
            (None, ScenarioKind::Regression) => NoiseFamily::HeteroskedasticSignSymmetric {
                scales: None,
                base: BaseLaw::default(),
            },
            (None, _) => NoiseFamily::IidNormal,
        };
        Ok(vec![variant(family, String::new())?])
    }

    fn resolve_grid(&self, n: usize, p: usize) -> Result<Vec<f64>> {
        let grid = match &self.grid {
            Some(GridConfig::Values(v)) => v.clone(),
            Some(GridConfig::Linspace { start, stop, points }) => linspace(*start, *stop, *points),
            None => {
                let top = match self.name {
                    ScenarioKind::SparseVector | ScenarioKind::HeavyTail => 4.0 * (p as f64).ln().sqrt(),
                    ScenarioKind::TwoSample => 3.0,
                    // operator norm of the signal reaches 3(√n + √p) at the top
                    ScenarioKind::Lowrank => 3.0 * ((n as f64).sqrt() + (p as f64).sqrt()) / (n as f64 / 2.0).sqrt(),
                    ScenarioKind::Regression => REGRESSION_GRID_MAX,
                };
                linspace(0.0, top, GRID_POINTS)
            }
        };
        if grid.is_empty() {
            return Err(Error::config("grid", "must be nonempty"));
        }
        if grid.len() >= 1 << 24 {
            return Err(Error::config("grid", "too many points"));
        }
        if grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("grid", "values must be finite"));
        }
        Ok(grid)
    }

    fn resolve_methods(&self) -> Result<Vec<MethodSpec>> {
        use GroupKind::*;
        let r = MethodSpec::randomization;
        let methods = self.methods.clone().unwrap_or_else(|| match self.name {
            ScenarioKind::SparseVector => vec![
                r(RotateFull, 19),
                r(RotateFull, 99),
                r(SignflipRows, 19),
                r(SignflipRows, 99),
                MethodSpec::Deterministic,
            ],
            ScenarioKind::HeavyTail => vec![r(SignflipRows, 19), r(SignflipRows, 99)],
            ScenarioKind::TwoSample => vec![r(PermuteRows, 99), MethodSpec::TTest],
            ScenarioKind::Lowrank => vec![r(RotatePerColumn, 19)],
            ScenarioKind::Regression => vec![r(SignflipRows, 99)],
        });
        if methods.is_empty() {
            return Err(Error::config("methods", "must be nonempty"));
        }
        // one data slot plus one slot per method must fit in 8 bits per variant
        if methods.len() > 60 {
            return Err(Error::config("methods", "at most 60 methods"));
        }
        let mut labels: Vec<String> = methods.iter().map(MethodSpec::label).collect();
        labels.sort();
        labels.dedup();
        if labels.len() != methods.len() {
            return Err(Error::config("methods", "duplicate method"));
        }
        for m in &methods {
            if let MethodSpec::Randomization { draws, .. } = m {
                RandTestConfig::new(*draws, self.alpha).map_err(|e| Error::config("methods", e.to_string()))?;
            }
        }
        Ok(methods)
    }
}

fn rotation_ready(family: &NoiseFamily, unit: SphericalUnit) -> bool {
    match family {
        NoiseFamily::IidNormal => true,
        NoiseFamily::Spherical { unit: u, .. } => *u == unit,
        _ => false,
    }
}

fn check_method(kind: ScenarioKind, m: &MethodSpec, noise: &[NoiseVariant]) -> Result<()> {
    use GroupKind::*;
    let unsupported = || Error::config("methods", format!("{} is not available in {}", m.label(), kind.name()));
    let families = || noise.iter().map(|v| &v.spec.family);
    match (kind, m) {
        (ScenarioKind::SparseVector | ScenarioKind::HeavyTail, MethodSpec::Randomization { group: SignflipRows, .. }) => {}
        (ScenarioKind::SparseVector | ScenarioKind::HeavyTail, MethodSpec::Randomization { group: RotateFull, .. }) => {
            if !families().all(|f| rotation_ready(f, SphericalUnit::Rows)) {
                return Err(Error::config("methods", "rotation needs iid normal or spherical-row noise"));
            }
        }
        (ScenarioKind::SparseVector, MethodSpec::Deterministic) => {
            if !families().all(|f| *f == NoiseFamily::IidNormal) {
                return Err(Error::config(
                    "methods",
                    "the deterministic critical value is calibrated for iid normal noise only",
                ));
            }
        }
        (ScenarioKind::TwoSample, MethodSpec::Randomization { group: PermuteRows, .. }) | (ScenarioKind::TwoSample, MethodSpec::TTest) => {
            if !families().all(|f| {
                matches!(
                    f,
                    NoiseFamily::IidNormal | NoiseFamily::IidStudent { .. } | NoiseFamily::IidCauchy
                )
            }) {
                return Err(Error::config("noise", "two_sample needs iid noise"));
            }
        }
        (ScenarioKind::Lowrank, MethodSpec::Randomization { group: RotatePerColumn, .. }) => {
            if !families().all(|f| rotation_ready(f, SphericalUnit::Columns)) {
                return Err(Error::config("methods", "column rotation needs iid normal or spherical-column noise"));
            }
        }
        (ScenarioKind::Regression, MethodSpec::Randomization { group: SignflipRows, .. }) => {
            if families().any(|f| matches!(f, NoiseFamily::Spherical { unit: SphericalUnit::Columns, .. })) {
                return Err(Error::config("noise", "regression sign flips need independent rows"));
            }
        }
        _ => return Err(unsupported()),
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseVariant {
    pub spec: NoiseSpec,
    /// Appended to method labels; empty when the scenario has one variant.
    pub suffix: String,
}

/// A fully specified scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub n: usize,
    pub p: usize,
    pub n_prime: usize,
    pub noise: Vec<NoiseVariant>,
    pub grid: Vec<f64>,
    pub methods: Vec<MethodSpec>,
    pub alpha: f64,
    pub reps: usize,
    pub seed: u64,
    pub l: f64,
    pub mc: usize,
}

impl Scenario {
    /// Method labels in output order.
    pub fn labels(&self) -> Vec<String> {
        self.noise
            .iter()
            .flat_map(|v| self.methods.iter().map(move |m| format!("{}{}", m.label(), v.suffix)))
            .collect()
    }

    fn stream(&self, grid: usize, slot: usize, rep: usize) -> RngStream {
        RngStream::new(self.seed, ((grid as u64) << 40) | ((slot as u64) << 32) | rep as u64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerRow {
    pub scenario: String,
    pub method: String,
    pub signal: f64,
    pub reps: usize,
    pub rejections: usize,
    pub power: f64,
    pub se: f64,
    pub seed: u64,
}

impl PowerRow {
    pub fn new(scenario: &str, method: &str, signal: f64, reps: usize, rejections: usize, seed: u64) -> Self {
        let power = rejections as f64 / reps as f64;
        Self {
            scenario: scenario.into(),
            method: method.into(),
            signal,
            reps,
            rejections,
            power,
            se: (power * (1.0 - power) / reps as f64).sqrt(),
            seed,
        }
    }
}

/// Rejection frequencies per (grid point, method), grid-major.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PowerCurve {
    pub rows: Vec<PowerRow>,
}

pub const CSV_HEADER: [&str; 8] = ["scenario", "method", "signal", "reps", "rejections", "power", "se", "seed"];

fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

impl PowerCurve {
    pub fn methods(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.method) {
                out.push(r.method.clone());
            }
        }
        out
    }

    /// Rows of one method, in grid order.
    pub fn series(&self, method: &str) -> Vec<&PowerRow> {
        self.rows.iter().filter(|r| r.method == method).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.scenario.clone(),
                r.method.clone(),
                fmt_real(r.signal),
                r.reps.to_string(),
                r.rejections.to_string(),
                fmt_real(r.power),
                fmt_real(r.se),
                r.seed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != CSV_HEADER {
            return Err(Error::Parse {
                row: 1,
                col: 1,
                message: format!("expected header {}", CSV_HEADER.join(",")),
            });
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 2;
            let field = |col: usize| -> &str { rec.get(col).unwrap_or("") };
            fn parse<T: std::str::FromStr>(s: &str, row: usize, col: usize) -> Result<T> {
                s.parse().map_err(|_| Error::Parse {
                    row,
                    col: col + 1,
                    message: format!("cannot parse `{s}`"),
                })
            }
            rows.push(PowerRow {
                scenario: field(0).to_string(),
                method: field(1).to_string(),
                signal: parse(field(2), row, 2)?,
                reps: parse(field(3), row, 3)?,
                rejections: parse(field(4), row, 4)?,
                power: parse(field(5), row, 5)?,
                se: parse(field(6), row, 6)?,
                seed: parse(field(7), row, 7)?,
            });
        }
        Ok(Self { rows })
    }
}

impl fmt::Display for PowerCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>10}  {:<24} {:>7} {:>7}", "signal", "method", "power", "se")?;
        for r in &self.rows {
            writeln!(f, "{:>10.4}  {:<24} {:>7.4} {:>7.4}", r.signal, r.method, r.power, r.se)?;
        }
        Ok(())
    }
}

/// Finite-sample consistency margins for the realized regression design.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegressionReport {
    /// `U⁺(T(X), l)`.
    pub design_bound: BernoulliBound,
    /// `U⁺(𝒳(|ε|), l)` for one null noise draw; used as the noise level `t`.
    pub noise_bound: BernoulliBound,
    /// `(τ, margins)` per grid point.
    pub margins: Vec<(f64, Margins)>,
}

impl fmt::Display for RegressionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = &self.design_bound;
        let e = &self.noise_bound;
        writeln!(
            f,
            "U+(T(X), l={}) = {:.6} (b = {:.6} ± {:.2e}, r = {:.6})",
            d.l, d.u_plus, d.b_estimate, d.mc_standard_error, d.r_value
        )?;
        writeln!(
            f,
            "U+(X(|eps|), l={}) = {:.6} (b = {:.6} ± {:.2e}, r = {:.6})",
            e.l, e.u_plus, e.b_estimate, e.mc_standard_error, e.r_value
        )?;
        writeln!(f, "{:>10} {:>14} {:>14}", "tau", "randomization", "deterministic")?;
        for (tau, m) in &self.margins {
            writeln!(f, "{:>10.4} {:>14.6} {:>14.6}", tau, m.randomization, m.deterministic)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub curve: PowerCurve,
    pub regression_report: Option<RegressionReport>,
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))
}

/// Runs `replicate(grid_index, signal, rep)` for every grid point and
/// replicate and tallies the per-method rejection flags.
fn tally<F>(sc: &Scenario, workers: usize, replicate: F) -> Result<PowerCurve>
where
    F: Fn(usize, f64, usize) -> Result<Vec<bool>> + Sync,
{
    let labels = sc.labels();
    let pool = build_pool(workers)?;
    let mut rows = Vec::with_capacity(sc.grid.len() * labels.len());
    for (g, &signal) in sc.grid.iter().enumerate() {
        let flags: Vec<Vec<bool>> =
            pool.install(|| (0..sc.reps).into_par_iter().map(|r| replicate(g, signal, r)).collect::<Result<_>>())?;
        for (m, label) in labels.iter().enumerate() {
            let count = flags.iter().filter(|f| f[m]).count();
            rows.push(PowerRow::new(sc.kind.name(), label, signal, sc.reps, count, sc.seed));
        }
    }
    Ok(PowerCurve { rows })
}

/// Critical value of `‖Z‖_∞` for `Z ~ N(0, I_p)` at level `alpha`.
pub fn deterministic_linf_critical_value(p: usize, alpha: f64) -> Result<f64> {
    normal_quantile(((1.0 - alpha).powf(1.0 / p as f64) + 1.0) / 2.0)
}

fn expect_kind(sc: &Scenario, kinds: &[ScenarioKind]) -> Result<()> {
    if kinds.contains(&sc.kind) {
        Ok(())
    } else {
        Err(Error::config("name", format!("runner does not handle {}", sc.kind.name())))
    }
}

/// Sparse mean detection: `X = 1_n sᵀ/√n + N` with `s = (μ, 0, …, 0)`, so
/// that `√n·x̄ ~ s + N(0, I_p)` under Gaussian noise. Sign flips act on the
/// rows; the rotation test and the deterministic test use `√n·x̄`.
pub fn run_sparse_vector_experiment(sc: &Scenario, workers: usize) -> Result<PowerCurve> {
    expect_kind(sc, &[ScenarioKind::SparseVector, ScenarioKind::HeavyTail])?;
    let (n, p) = (sc.n, sc.p);
    let scale = (n as f64).sqrt();
    let critical = deterministic_linf_critical_value(p, sc.alpha)?;
    let rows_stat = TestStatistic::colmean_linf();
    let vec_stat = TestStatistic::linf();
    let signflip = GroupAction::signflip_rows(n)?;
    let rotation = GroupAction::rotate_full(p)?;
    let configs = method_configs(sc)?;
    let stride = sc.methods.len() + 1;
    tally(sc, workers, |g, mu, r| {
        let mut flags = Vec::with_capacity(sc.noise.len() * sc.methods.len());
        for (v, variant) in sc.noise.iter().enumerate() {
            let mut data_rng = sc.stream(g, v * stride, r);
            let noise = sample_noise(&variant.spec, &mut data_rng)?;
            let signal = build_signal(&SignalSpec::SparseVector {
                mu: mu / scale,
                support: vec![0],
                p,
            })?;
            let x = DataMatrix::from_fn(n, p, |i, j| noise[(i, j)] + signal[(j, 0)]);
            let mean = DataMatrix::column(&x.column_means().iter().map(|m| m * scale).collect::<Vec<_>>())?;
            for (m, method) in sc.methods.iter().enumerate() {
                let mut rng = sc.stream(g, v * stride + m + 1, r);
                let reject = match method {
                    MethodSpec::Randomization { group, .. } => {
                        let cfg = configs[m].expect("randomization config");
                        match group {
                            GroupKind::SignflipRows => {
                                run_randomization_test(&x, &rows_stat, &signflip, &cfg, &mut rng)?.reject
                            }
                            _ => run_randomization_test(&mean, &vec_stat, &rotation, &cfg, &mut rng)?.reject,
                        }
                    }
                    _ => mean.max_abs() > critical,
                };
                flags.push(reject);
            }
        }
        Ok(flags)
    })
}

/// The sparse experiment under iid Student-t noise, one variant per df.
pub fn run_heavy_tail_experiment(sc: &Scenario, workers: usize) -> Result<PowerCurve> {
    expect_kind(sc, &[ScenarioKind::HeavyTail])?;
    run_sparse_vector_experiment(sc, workers)
}

fn method_configs(sc: &Scenario) -> Result<Vec<Option<RandTestConfig>>> {
    sc.methods
        .iter()
        .map(|m| match m {
            MethodSpec::Randomization { draws, .. } => RandTestConfig::new(*draws, sc.alpha).map(Some),
            _ => Ok(None),
        })
        .collect()
}

/// Pooled-variance two-sided two-sample t-test.
pub fn two_sample_t_test(z: &[f64], y: &[f64], alpha: f64) -> Result<bool> {
    let (n, m) = (z.len(), y.len());
    if n < 2 || m < 2 {
        return Err(Error::domain("each sample needs at least 2 observations"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mz, my) = (mean(z), mean(y));
    let ss = z.iter().map(|v| (v - mz).powi(2)).sum::<f64>() + y.iter().map(|v| (v - my).powi(2)).sum::<f64>();
    let df = (n + m - 2) as f64;
    let pooled = ss / df;
    if pooled.is_nan() || pooled <= 0.0 {
        log::warn!("two-sample t-test: zero pooled variance, not rejecting");
        return Ok(false);
    }
    let t = (mz - my) / (pooled * (1.0 / n as f64 + 1.0 / m as f64)).sqrt();
    Ok(t.abs() > student_t_quantile(1.0 - alpha / 2.0, df)?)
}

/// Two samples of sizes `n` and `n′` stacked into one matrix; the first
/// sample is shifted by `μ` in every coordinate. The permutation test
/// removes the common mean before permuting rows.
pub fn run_two_sample_experiment(sc: &Scenario, workers: usize) -> Result<PowerCurve> {
    expect_kind(sc, &[ScenarioKind::TwoSample])?;
    let (n1, n2, p) = (sc.n, sc.n_prime, sc.p);
    let total = n1 + n2;
    let stat = TestStatistic::twosample_diff(n1, n2, DiffNorm::L2)?;
    let action = GroupAction::permute_rows(total)?;
    let ones = vec![vec![1.0; total]];
    let configs = method_configs(sc)?;
    let variant = &sc.noise[0];
    tally(sc, workers, |g, mu, r| {
        let mut data_rng = sc.stream(g, 0, r);
        let noise = sample_noise(&variant.spec, &mut data_rng)?;
        let x = DataMatrix::from_fn(total, p, |i, j| noise[(i, j)] + if i < n1 { mu } else { 0.0 });
        let projected = project_out_nuisance(&x, &ones)?;
        sc.methods
            .iter()
            .enumerate()
            .map(|(m, method)| match method {
                MethodSpec::Randomization { .. } => {
                    let mut rng = sc.stream(g, m + 1, r);
                    let cfg = configs[m].expect("randomization config");
                    Ok(run_randomization_test(&projected, &stat, &action, &cfg, &mut rng)?.reject)
                }
                _ => {
                    // the t-test is univariate; use the first coordinate
                    let col = x.column_values(0);
                    two_sample_t_test(&col[..n1], &col[n1..], sc.alpha)
                }
            })
            .collect()
    })
}

/// Rank-one detection: `X = √(n/2)·τ·v uᵀ + N` with `u = 1_p/√p` and
/// `v = 1_n/√n`, operator-norm statistic, independent column rotations.
pub fn run_lowrank_experiment(sc: &Scenario, workers: usize) -> Result<PowerCurve> {
    expect_kind(sc, &[ScenarioKind::Lowrank])?;
    let (n, p) = (sc.n, sc.p);
    let left = vec![1.0 / (n as f64).sqrt(); n];
    let right = vec![1.0 / (p as f64).sqrt(); p];
    let stat = TestStatistic::opnorm();
    let action = GroupAction::rotate_per_column(n)?;
    let configs = method_configs(sc)?;
    let variant = &sc.noise[0];
    tally(sc, workers, |g, tau, r| {
        let signal = build_signal(&SignalSpec::RankOne {
            tau,
            left: left.clone(),
            right: right.clone(),
        })?;
        let mut data_rng = sc.stream(g, 0, r);
        let x = sample_noise(&variant.spec, &mut data_rng)?.add(&signal)?;
        sc.methods
            .iter()
            .enumerate()
            .map(|(m, _)| {
                let mut rng = sc.stream(g, m + 1, r);
                let cfg = configs[m].expect("randomization config");
                Ok(run_randomization_test(&x, &stat, &action, &cfg, &mut rng)?.reject)
            })
            .collect()
    })
}

/// The seeded Gaussian design of the regression scenario.
pub fn regression_design(sc: &Scenario) -> DataMatrix {
    let mut rng = RngStream::new(sc.seed, DESIGN_STREAM);
    DataMatrix::from_fn(sc.n, sc.p, |_, _| rng.normal())
}

/// Sparse regression: `Y = Xβ + ε` with `β = τ·e₁`, statistic `‖X†Y‖_∞`,
/// sign flips of the rows of `Y`. Also reports the Bernoulli-bound margins
/// for the realized design.
pub fn run_regression_experiment(sc: &Scenario, workers: usize) -> Result<(PowerCurve, RegressionReport)> {
    expect_kind(sc, &[ScenarioKind::Regression])?;
    let (n, p) = (sc.n, sc.p);
    let design = regression_design(sc);
    let ctx = Arc::new(OlsContext::new(design.clone()));
    let stat = TestStatistic::ols_linf_with(ctx);
    let action = GroupAction::signflip_rows(n)?;
    let configs = method_configs(sc)?;
    let variant = &sc.noise[0];
    let spec1 = NoiseSpec::new(variant.spec.family.clone(), n, 1)?;
    let curve = tally(sc, workers, |g, tau, r| {
        let beta = build_signal(&SignalSpec::RegressionBeta {
            tau,
            support: vec![0],
            p,
        })?;
        let mut data_rng = sc.stream(g, 0, r);
        let y = design.matmul(&beta)?.add(&sample_noise(&spec1, &mut data_rng)?)?;
        sc.methods
            .iter()
            .enumerate()
            .map(|(m, _)| {
                let mut rng = sc.stream(g, m + 1, r);
                let cfg = configs[m].expect("randomization config");
                Ok(run_randomization_test(&y, &stat, &action, &cfg, &mut rng)?.reject)
            })
            .collect()
    })?;
    let report = regression_report(sc, &design, &spec1)?;
    Ok((curve, report))
}

fn regression_report(sc: &Scenario, design: &DataMatrix, spec1: &NoiseSpec) -> Result<RegressionReport> {
    let mut rng = RngStream::new(sc.seed, REPORT_NOISE_STREAM);
    let eps = sample_noise(spec1, &mut rng)?;
    let eps_abs: Vec<f64> = eps.column_values(0).iter().map(|e| e.abs()).collect();
    let design_bound = bernoulli_bound_design(design, sc.l, sc.mc, &mut rng)?;
    let noise_bound = bernoulli_bound_regression(design, &eps_abs, sc.l, sc.mc, &mut rng)?;
    let margins = sc
        .grid
        .iter()
        .map(|&tau| {
            // X has full column rank, so ‖P_X β‖_∞ = ‖β‖_∞ = τ
            let inputs = ConsistencyInputs {
                s_inf: Some(tau.abs()),
                u_plus: Some(design_bound.u_plus),
                t: Some(noise_bound.u_plus),
                ..Default::default()
            };
            Ok((tau, consistency_margin(Proposition::Regression, &inputs)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RegressionReport {
        design_bound,
        noise_bound,
        margins,
    })
}

/// Dispatches on the scenario kind.
pub fn run_scenario(sc: &Scenario, workers: usize) -> Result<ExperimentOutput> {
    let (curve, regression_report) = match sc.kind {
        ScenarioKind::SparseVector => (run_sparse_vector_experiment(sc, workers)?, None),
        ScenarioKind::HeavyTail => (run_heavy_tail_experiment(sc, workers)?, None),
        ScenarioKind::TwoSample => (run_two_sample_experiment(sc, workers)?, None),
        ScenarioKind::Lowrank => (run_lowrank_experiment(sc, workers)?, None),
        ScenarioKind::Regression => {
            let (c, r) = run_regression_experiment(sc, workers)?;
            (c, Some(r))
        }
    };
    Ok(ExperimentOutput { curve, regression_report })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: ScenarioKind) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::new(kind, 0.05);
        cfg.reps = Some(20);
        cfg.grid = Some(GridConfig::Values(vec![0.0, 2.0]));
        cfg
    }

    #[test]
    fn default_grids() {
        let sc = ScenarioConfig::new(ScenarioKind::SparseVector, 0.05).resolve(1).unwrap();
        assert_eq!(sc.grid.len(), 20);
        assert_eq!(sc.grid[0], 0.0);
        assert!((sc.grid[19] - 8.583_864_105_157_389).abs() < 1e-12);
        assert_eq!(sc.labels().len(), 5);
        let ht = ScenarioConfig::new(ScenarioKind::HeavyTail, 0.05).resolve(1).unwrap();
        assert_eq!(
            ht.labels(),
            vec!["signflip_K19_t3", "signflip_K99_t3", "signflip_K19_t5", "signflip_K99_t5"]
        );
        let lr = ScenarioConfig::new(ScenarioKind::Lowrank, 0.05).resolve(1).unwrap();
        assert!((lr.grid[19] - 6.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn config_validation_names_keys() {
        let mut cfg = ScenarioConfig::new(ScenarioKind::SparseVector, 1.5);
        assert!(cfg.resolve(1).unwrap_err().to_string().contains("alpha"));
        cfg.alpha = 0.05;
        cfg.noise = Some(NoiseFamily::IidStudent { df: 3.0 });
        let err = cfg.resolve(1).unwrap_err().to_string();
        assert!(err.contains("methods"), "{err}");
        cfg.methods = Some(vec![MethodSpec::TTest]);
        assert!(cfg.resolve(1).is_err());
        let mut two = ScenarioConfig::new(ScenarioKind::TwoSample, 0.05);
        two.reps = Some(0);
        assert!(two.resolve(1).unwrap_err().to_string().contains("reps"));
    }

    #[test]
    fn json_config() {
        let cfg: ScenarioConfig = serde_json::from_str(
            r#"{"name":"sparse_vector","alpha":0.05,"methods":[{"type":"randomization","group":"signflip_rows","K":19}],
                "grid":{"stop":1.0,"points":3}}"#,
        )
        .unwrap();
        let sc = cfg.resolve(3).unwrap();
        assert_eq!(sc.grid, vec![0.0, 0.5, 1.0]);
        assert_eq!(sc.labels(), vec!["signflip_K19"]);
        let missing = serde_json::from_str::<ScenarioConfig>(r#"{"name":"sparse_vector"}"#).unwrap_err();
        assert!(missing.to_string().contains("alpha"));
        assert!(serde_json::from_str::<ScenarioConfig>(r#"{"name":"sparse_vector","alpha":0.05,"bogus":1}"#).is_err());
    }

    #[test]
    fn every_scenario_runs_and_is_reproducible() {
        for kind in [
            ScenarioKind::SparseVector,
            ScenarioKind::HeavyTail,
            ScenarioKind::TwoSample,
            ScenarioKind::Regression,
        ] {
            let mut cfg = small(kind);
            if kind == ScenarioKind::Regression {
                cfg.mc = Some(200);
            }
            let sc = cfg.resolve(7).unwrap();
            let a = run_scenario(&sc, 1).unwrap();
            let b = run_scenario(&sc, 3).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.curve.rows.len(), sc.grid.len() * sc.labels().len());
            assert_eq!(a.regression_report.is_some(), kind == ScenarioKind::Regression);
            for row in &a.curve.rows {
                assert!(row.rejections <= row.reps);
            }
        }
    }

    #[test]
    fn lowrank_runs() {
        let mut cfg = small(ScenarioKind::Lowrank);
        cfg.n = Some(8);
        cfg.p = Some(6);
        cfg.reps = Some(10);
        let sc = cfg.resolve(2).unwrap();
        let out = run_lowrank_experiment(&sc, 2).unwrap();
        assert_eq!(out.rows.len(), 2);
    }

    #[test]
    fn csv_round_trip() {
        let curve = PowerCurve {
            rows: vec![
                PowerRow::new("sparse_vector", "rotation_K19", 0.451_807_879_186_662_9, 1000, 57, 42),
                PowerRow::new("sparse_vector", "deterministic", 1.0 / 3.0, 1000, 1000, u64::MAX),
            ],
        };
        let text = curve.to_csv_string().unwrap();
        assert!(text.starts_with("scenario,method,signal,reps,rejections,power,se,seed\n"));
        let back = PowerCurve::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, curve);
    }

    #[test]
    fn t_test_basics() {
        let z = [1.0, 1.0 + 1e-9, 1.0 - 1e-9];
        assert!(!two_sample_t_test(&z, &z, 0.05).unwrap());
        assert!(!two_sample_t_test(&[2.0, 2.0], &[2.0, 2.0], 0.05).unwrap());
        assert!(two_sample_t_test(&[10.0, 10.5, 9.5], &[0.0, 0.5, -0.5], 0.05).unwrap());
        assert!(two_sample_t_test(&[1.0], &[1.0, 2.0], 0.05).is_err());
    }

    #[test]
    fn critical_value() {
        let c = deterministic_linf_critical_value(100, 0.05).unwrap();
        assert!((c - 3.473_978_869_154_048).abs() < 1e-9);
    }
}
