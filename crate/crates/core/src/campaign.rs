//! Batch experiment driver behind the command-line tool: configuration,
//! the five campaigns, CSV output and the key-value run summary.
//!
//! Every campaign is a pure function of `(RunConfig, seed)`. Paths run in
//! parallel on a pool of `threads` workers, results are collected in path
//! order and reduced with pairwise sums, so outputs do not depend on the
//! worker count.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{
    check_lipschitz_growth, check_semimonotone, nemitsky, CheckOptions, CoefficientSet,
    DiffusionSpec, JumpCoeffSpec, LinearMap, LinearMarkJump, Reaction,
};
use crate::convolution::{ito_slack_along, ito_tolerance, CadlagPath};
use crate::error::{Error, Result};
use crate::models::{
    build_delay, build_hyperbolic, build_linear_scalar, build_reaction_diffusion, doleans_dade,
    DelayConfig, ExampleId, HyperbolicConfig, LinearScalarConfig, ReactionDiffusionConfig,
};
use crate::noise::{
    sample_prm, Channel, MarkLaw, MarkSpaceSpec, NoiseRealization, StreamSeeder, TimeGrid,
    WienerSpec,
};
use crate::solver::{
    direct_path, direct_solve, picard_campaign, picard_solve, rescale_to_contraction,
    unscale_path, ModelSpec, PicardOptions,
};
use crate::state_space::WeightedInnerProduct;
use crate::stats::{linear_fit, pairwise_sum, quantile, Estimate};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PicardSettings {
    #[serde(flatten)]
    pub options: PicardOptions,
    /// Allowed factor between `eₙ₊₁/eₙ` and `C₁T/(n+1)`.
    pub ratio_safety: f64,
    /// First `n` at which the rate and monotonicity checks apply.
    pub rate_from: usize,
    /// Standard errors allowed above the moment bound.
    pub moment_sigmas: f64,
    /// Paths solved twice with different inner damping.
    pub uniqueness_paths: usize,
    pub uniqueness_damping: f64,
    /// Bound on `E sup‖X − Y‖² / E sup‖X‖²`.
    pub uniqueness_threshold: f64,
    /// Paths used for the rescaling comparison when `α ≠ 0`.
    pub rescale_paths: usize,
    /// Write every `stride`-th grid point of the sample path.
    pub stride: usize,
}

impl Default for PicardSettings {
    fn default() -> Self {
        Self {
            options: PicardOptions::default(),
            ratio_safety: 2.0,
            rate_from: 2,
            moment_sigmas: 2.0,
            uniqueness_paths: 50,
            uniqueness_damping: 0.5,
            uniqueness_threshold: 1e-6,
            rescale_paths: 100,
            stride: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ItoSettings {
    /// Constant `c` of the tolerance `c√Δt`; the model's calibrated value
    /// when absent.
    pub constant: Option<f64>,
    pub max_violation_rate: f64,
    /// Also run at `Δt/2` on the same noise and require a non-increasing
    /// violation rate.
    pub refine: bool,
}

impl Default for ItoSettings {
    fn default() -> Self {
        Self {
            constant: None,
            max_violation_rate: 0.01,
            refine: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSettings {
    /// Step sizes `2⁻ᵏ` for `k` in `coarsest_level..=finest_level`.
    pub coarsest_level: u32,
    pub finest_level: u32,
    /// Level at which the absolute error is checked.
    pub reference_level: u32,
    pub min_order: f64,
    pub max_reference_rms: f64,
}

impl Default for BenchmarkSettings {
    fn default() -> Self {
        Self {
            coarsest_level: 6,
            finest_level: 12,
            reference_level: 10,
            min_order: 0.45,
            max_reference_rms: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HypothesisSettings {
    pub samples: usize,
    /// Run the checker self-tests on known-good and known-bad maps.
    pub self_test: bool,
    /// Relative tolerance of the linear-jump Lipschitz ratio against `E[ξ²]`.
    pub jump_ratio_tolerance: f64,
    /// Paths for the noise-layer checks; zero disables them.
    pub noise_paths: usize,
    /// Standard errors allowed for the isometry and compensation checks.
    pub noise_sigmas: f64,
    /// Standard errors allowed for the jump-count mean.
    pub count_sigmas: f64,
}

impl Default for HypothesisSettings {
    fn default() -> Self {
        Self {
            samples: 10_000,
            self_test: true,
            jump_ratio_tolerance: 0.05,
            noise_paths: 10_000,
            noise_sigmas: 4.0,
            count_sigmas: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSettings {
    /// Paths written to the CSV; statistics use all `paths`.
    pub dump_paths: usize,
    pub stride: usize,
    /// Paths also solved by Picard iteration for a cross-check.
    pub cross_check_paths: usize,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        Self {
            dump_paths: 4,
            stride: 10,
            cross_check_paths: 8,
        }
    }
}

/// Full description of a run. Top-level `dim` and `horizon` override the
/// selected example's own values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub example: ExampleId,
    pub dim: Option<usize>,
    pub dt: f64,
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    /// Worker threads; zero uses all cores.
    pub threads: usize,
    pub output: PathBuf,
    pub picard: PicardSettings,
    pub ito: ItoSettings,
    pub benchmark: BenchmarkSettings,
    pub hypothesis: HypothesisSettings,
    pub simulate: SimulateSettings,
    pub reaction_diffusion: ReactionDiffusionConfig,
    pub hyperbolic_wave: HyperbolicConfig,
    pub delay_equation: DelayConfig,
    pub linear_scalar: LinearScalarConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            example: ExampleId::ReactionDiffusion,
            dim: None,
            dt: 1e-3,
            horizon: 1.0,
            paths: 500,
            seed: 0,
            threads: 1,
            output: PathBuf::from("out"),
            picard: PicardSettings::default(),
            ito: ItoSettings::default(),
            benchmark: BenchmarkSettings::default(),
            hypothesis: HypothesisSettings::default(),
            simulate: SimulateSettings::default(),
            reaction_diffusion: ReactionDiffusionConfig::default(),
            hyperbolic_wave: HyperbolicConfig::default(),
            delay_equation: DelayConfig::default(),
            linear_scalar: LinearScalarConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let table: toml::Table = s.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        check_picard_keys(&table)?;
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        let steps = (self.horizon / self.dt).round();
        if steps < 1.0 || (steps * self.dt - self.horizon).abs() > 1e-9 * self.horizon {
            return bad(format!(
                "horizon {} is not a multiple of dt {}",
                self.horizon, self.dt
            ));
        }
        if self.paths == 0 {
            return bad("paths must be at least 1".into());
        }
        if self.dim == Some(0) {
            return bad("dim must be at least 1".into());
        }
        let b = &self.benchmark;
        if b.coarsest_level > b.finest_level
            || b.finest_level > 20
            || !(b.coarsest_level..=b.finest_level).contains(&b.reference_level)
        {
            return bad(format!(
                "benchmark levels {}..={} with reference {} are inconsistent",
                b.coarsest_level, b.finest_level, b.reference_level
            ));
        }
        if self.picard.stride == 0 || self.simulate.stride == 0 {
            return bad("stride must be at least 1".into());
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::with_step(self.dt, self.horizon)
    }

    pub fn seeder(&self) -> StreamSeeder {
        StreamSeeder::new(self.seed)
    }
}

/// Builds the configured example with the top-level overrides applied.
pub fn build_model(cfg: &RunConfig) -> Result<ModelSpec> {
    build_example(cfg, cfg.example)
}

pub fn build_example(cfg: &RunConfig, id: ExampleId) -> Result<ModelSpec> {
    match id {
        ExampleId::ReactionDiffusion => {
            let mut c = cfg.reaction_diffusion.clone();
            c.horizon = cfg.horizon;
            if let Some(d) = cfg.dim {
                c.modes = d;
                c.points = c.points.max(4 * d);
            }
            build_reaction_diffusion(&c)
        }
        ExampleId::HyperbolicWave => {
            let mut c = cfg.hyperbolic_wave.clone();
            c.horizon = cfg.horizon;
            if let Some(d) = cfg.dim {
                c.modes = d;
                c.points = c.points.max(4 * d);
            }
            build_hyperbolic(&c)
        }
        ExampleId::DelayEquation => {
            let mut c = cfg.delay_equation.clone();
            c.horizon = cfg.horizon;
            if let Some(d) = cfg.dim {
                c.cells = d;
            }
            build_delay(&c)
        }
        ExampleId::LinearScalar => {
            let mut c = cfg.linear_scalar.clone();
            c.horizon = cfg.horizon;
            build_linear_scalar(&c)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Picard,
    ItoCheck,
    Benchmark,
    HypothesisCheck,
    Simulate,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Picard => "picard",
            Command::ItoCheck => "ito-check",
            Command::Benchmark => "benchmark",
            Command::HypothesisCheck => "hypothesis-check",
            Command::Simulate => "simulate",
        }
    }
}

/// Process exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Pass = 0,
    DiagnosticFailure = 2,
    ConfigError = 3,
    Divergence = 4,
}

impl ExitStatus {
    pub fn of(outcome: &Result<RunSummary>) -> Self {
        match outcome {
            Ok(s) if s.pass() => ExitStatus::Pass,
            Ok(_) => ExitStatus::DiagnosticFailure,
            Err(e) => Self::of_error(e),
        }
    }

    pub fn of_error(e: &Error) -> Self {
        match e {
            Error::Divergence { .. } | Error::NonConvergence { .. } => ExitStatus::Divergence,
            _ => ExitStatus::ConfigError,
        }
    }

    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Diagnostic {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            pass,
            detail,
        }
    }
}

/// Outcome of a campaign. [`RunSummary::render`] is a deterministic
/// function of configuration and seed; wall-clock time is kept apart.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub command: Command,
    pub model: String,
    pub seed: u64,
    pub diagnostics: Vec<Diagnostic>,
    pub stats: Vec<(String, String)>,
    pub config: RunConfig,
    pub files: Vec<String>,
    pub elapsed_seconds: f64,
}

impl RunSummary {
    fn new(command: Command, model: &str, cfg: &RunConfig) -> Self {
        Self {
            command,
            model: model.into(),
            seed: cfg.seed,
            diagnostics: Vec::new(),
            stats: Vec::new(),
            config: cfg.clone(),
            files: Vec::new(),
            elapsed_seconds: 0.0,
        }
    }

    pub fn pass(&self) -> bool {
        self.diagnostics.iter().all(|d| d.pass)
    }

    pub fn diagnostic(&self, name: &str) -> Option<&Diagnostic> {
        self.diagnostics.iter().find(|d| d.name == name)
    }

    pub fn stat(&self, key: &str) -> Option<&str> {
        self.stats
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn check(&mut self, name: &str, pass: bool, detail: String) {
        self.diagnostics.push(Diagnostic::new(name, pass, detail));
    }

    fn stat_f(&mut self, key: impl Into<String>, v: f64) {
        self.stats.push((key.into(), num(v)));
    }

    fn stat_s(&mut self, key: impl Into<String>, v: impl ToString) {
        self.stats.push((key.into(), v.to_string()));
    }

    /// `key = value` lines: header, diagnostics, statistics, then the full
    /// effective configuration under `config.`.
    pub fn render(&self) -> Result<String> {
        let mut s = String::new();
        let _ = writeln!(s, "schema = \"spde-picard/summary v{SCHEMA_VERSION}\"");
        let _ = writeln!(s, "command = \"{}\"", self.command.as_str());
        let _ = writeln!(s, "model = \"{}\"", self.model);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "pass = {}", self.pass());
        for d in &self.diagnostics {
            let _ = writeln!(s, "diagnostic.{}.pass = {}", d.name, d.pass);
            let _ = writeln!(s, "diagnostic.{}.detail = {:?}", d.name, d.detail);
        }
        for (k, v) in &self.stats {
            let _ = writeln!(s, "stat.{k} = {v}");
        }
        for f in &self.files {
            let _ = writeln!(s, "file = {f:?}");
        }
        let value = toml::Value::try_from(&self.config).map_err(|e| Error::Config(e.to_string()))?;
        flatten_toml("config", &value, &mut s);
        Ok(s)
    }

    /// Writes `summary.txt`, `config.toml` and `timing.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("summary.txt"), self.render()?)?;
        fs::write(dir.join("config.toml"), self.config.to_toml()?)?;
        fs::write(
            dir.join("timing.txt"),
            format!("elapsed_seconds = {:.3}\n", self.elapsed_seconds),
        )?;
        Ok(())
    }
}

/// `[picard]` flattens the solver options into its own keys, which serde
/// cannot combine with `deny_unknown_fields`; the keys are checked here.
fn check_picard_keys(table: &toml::Table) -> Result<()> {
    let Some(toml::Value::Table(picard)) = table.get("picard") else {
        return Ok(());
    };
    let known = toml::Table::try_from(PicardSettings::default()).map_err(|e| Error::Config(e.to_string()))?;
    match picard.keys().find(|k| !known.contains_key(*k)) {
        Some(k) => Err(Error::Config(format!("unknown field `{k}` in [picard]"))),
        None => Ok(()),
    }
}

fn flatten_toml(prefix: &str, v: &toml::Value, out: &mut String) {
    match v {
        toml::Value::Table(t) => {
            for (k, v) in t {
                flatten_toml(&format!("{prefix}.{k}"), v, out);
            }
        }
        other => {
            let _ = writeln!(out, "{prefix} = {other}");
        }
    }
}

fn num(v: f64) -> String {
    format!("{v:.12e}")
}

/// CSV writer whose first line is a `# schema:` comment.
struct CsvOut {
    writer: csv::Writer<BufWriter<File>>,
    name: String,
}

impl CsvOut {
    fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mut file = BufWriter::new(File::create(dir.join(name))?);
        let stem = name.trim_end_matches(".csv");
        writeln!(file, "# schema: spde-picard/{stem} v{SCHEMA_VERSION}")?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(header)?;
        Ok(Self {
            writer,
            name: name.into(),
        })
    }

    fn row(&mut self, fields: &[String]) -> Result<()> {
        self.writer.write_record(fields)?;
        Ok(())
    }

    fn finish(mut self, summary: &mut RunSummary) -> Result<()> {
        self.writer.flush()?;
        summary.files.push(self.name);
        Ok(())
    }
}

fn path_rows(
    csv: &mut CsvOut,
    id: u64,
    path: &CadlagPath,
    metric: &WeightedInnerProduct,
    stride: usize,
) -> Result<()> {
    let steps = path.len() - 1;
    let mut i = 0;
    loop {
        let x = path.value(i);
        let mut row = vec![id.to_string(), num(path.grid().time(i)), num(metric.norm_sq(x))];
        row.extend(x.iter().map(|v| num(*v)));
        csv.row(&row)?;
        if i == steps {
            break;
        }
        i = (i + stride).min(steps);
    }
    Ok(())
}

fn path_header(dim: usize) -> Vec<String> {
    let mut h = vec!["path".to_string(), "t".into(), "norm_sq".into()];
    h.extend((0..dim).map(|k| format!("x{k}")));
    h
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs `command` and writes its CSV files and summary into `cfg.output`.
pub fn run(command: Command, cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let start = Instant::now();
    let mut summary = with_pool(cfg.threads, || match command {
        Command::Picard => run_picard_campaign(cfg),
        Command::ItoCheck => run_ito_check(cfg),
        Command::Benchmark => run_benchmark_oracle(cfg),
        Command::HypothesisCheck => run_hypothesis_check(cfg),
        Command::Simulate => run_simulate(cfg),
    })??;
    summary.elapsed_seconds = start.elapsed().as_secs_f64();
    summary.write(&cfg.output)?;
    Ok(summary)
}

/// Picard campaign: the iteration table against the predicted bound, the
/// moment bound, uniqueness across inner damping and, for `α ≠ 0`, the
/// rescaling equivalence.
pub fn run_picard_campaign(cfg: &RunConfig) -> Result<RunSummary> {
    let model = build_model(cfg)?;
    let grid = cfg.grid()?;
    let seeder = cfg.seeder();
    let set = &cfg.picard;
    let opts = set.options;
    let mut summary = RunSummary::new(Command::Picard, model.name(), cfg);
    let (trace, records) = picard_campaign(&model, &grid, cfg.paths, &seeder, &opts)?;
    let floor = opts.resolution_floor(trace.moment_lhs[0].mean);

    let mut csv = CsvOut::create(
        &cfg.output,
        "picard_iterations.csv",
        &[
            "n",
            "e_n",
            "std_error",
            "predicted",
            "ratio",
            "ratio_bound",
            "moment_lhs",
            "moment_lhs_se",
            "moment_rhs",
            "moment_rhs_se",
        ],
    )?;
    for (n, e) in trace.e.iter().enumerate() {
        csv.row(&[
            n.to_string(),
            num(e.mean),
            num(e.std_error),
            num(trace.predicted[n]),
            trace.ratio(n).map_or("nan".into(), num),
            num(trace.ratio_bound(n)),
            num(trace.moment_lhs[n].mean),
            num(trace.moment_lhs[n].std_error),
            num(trace.moment_rhs[n].mean),
            num(trace.moment_rhs[n].std_error),
        ])?;
    }
    csv.finish(&mut summary)?;

    // Rate: eₙ₊₁/eₙ ≤ safety · C₁T/(n+1) while eₙ₊₁ is resolvable.
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut monotone = true;
    for n in set.rate_from..trace.e.len().saturating_sub(1) {
        if trace.e[n + 1].mean <= floor {
            break;
        }
        checked += 1;
        let r = trace.ratio(n).unwrap_or(f64::INFINITY);
        worst = worst.max(r / (set.ratio_safety * trace.ratio_bound(n)));
        monotone &= trace.e[n + 1].mean < trace.e[n].mean;
    }
    summary.check(
        "picard_rate",
        worst <= 1.0,
        format!(
            "max (e_(n+1)/e_n) / ({} C1 T/(n+1)) = {worst:.4} over {checked} ratios, C1 = {:.6e}",
            set.ratio_safety, trace.c1
        ),
    );
    summary.check(
        "picard_monotone",
        monotone,
        format!("e_n strictly decreasing from n = {}", set.rate_from),
    );
    let viol = trace.moment_violations(set.moment_sigmas);
    summary.check(
        "moment_bound",
        viol.is_empty(),
        format!("iterates above bound by > {} s.e.: {viol:?}", set.moment_sigmas),
    );
    summary.check(
        "apriori_bound",
        trace.apriori_violations == 0,
        format!("{} grid points above the a-priori bound", trace.apriori_violations),
    );

    // Uniqueness: the same paths with a different inner damping.
    let u = set.uniqueness_paths.min(cfg.paths);
    if u > 0 {
        let alt = PicardOptions {
            inner: opts.inner.with_damping(set.uniqueness_damping),
            ..opts
        };
        let pairs: Vec<(f64, f64)> = (0..u as u64)
            .into_par_iter()
            .map(|p| {
                let (x, _) = picard_solve(&model, &seeder, p, &grid, &opts)?;
                let (y, _) = picard_solve(&model, &seeder, p, &grid, &alt)?;
                Ok((x.sup_dist_sq(&y, model.metric())?, x.sup_norm_sq(model.metric())))
            })
            .collect::<Result<_>>()?;
        let d = pairwise_sum(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
        let s = pairwise_sum(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
        let rel = if s > 0.0 { d / s } else { d };
        summary.check(
            "uniqueness",
            rel <= set.uniqueness_threshold,
            format!("E sup|X-Y|^2 / E sup|X|^2 = {rel:.3e} over {u} paths (damping 1 vs {})", set.uniqueness_damping),
        );
        summary.stat_f("uniqueness.relative_distance", rel);
    }

    if model.alpha() != 0.0 && set.rescale_paths > 0 {
        rescaling_check(&model, &grid, &seeder, set.rescale_paths.min(cfg.paths), &opts, &mut summary)?;
    }

    summary.stat_s("paths", trace.paths);
    summary.stat_f("c0", trace.c0);
    summary.stat_f("c1", trace.c1);
    summary.stat_f("lipschitz", trace.lipschitz);
    summary.stat_f("growth", trace.growth);
    summary.stat_f("monotonicity", trace.monotonicity);
    for (n, e) in trace.e.iter().enumerate() {
        summary.stat_f(format!("e_n.{n}"), e.mean);
    }

    let (x, _) = picard_solve(&model, &seeder, 0, &grid, &opts)?;
    let header = path_header(model.dim());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = CsvOut::create(&cfg.output, "picard_paths.csv", &header)?;
    path_rows(&mut csv, 0, &x, model.metric(), set.stride)?;
    csv.finish(&mut summary)?;
    let _ = records;
    Ok(summary)
}

/// Compares the solver run on the contraction-rescaled model and mapped
/// back with the solver run on the model as given, on shared noise.
fn rescaling_check(
    model: &ModelSpec,
    grid: &TimeGrid,
    seeder: &StreamSeeder,
    paths: usize,
    opts: &PicardOptions,
    summary: &mut RunSummary,
) -> Result<()> {
    let alpha = model.alpha();
    let rescaled = rescale_to_contraction(model);
    let metric = model.metric();
    let on = PicardOptions { rescale: true, ..*opts };
    let off = PicardOptions { rescale: false, ..*opts };
    let rows: Vec<[f64; 5]> = (0..paths as u64)
        .into_par_iter()
        .map(|p| {
            let (a, _) = picard_solve(model, seeder, p, grid, &on)?;
            let (b, _) = picard_solve(model, seeder, p, grid, &off)?;
            let direct = direct_solve(model, seeder, p, grid)?.path;
            let tilde = unscale_path(&direct_solve(&rescaled, seeder, p, grid)?.path, alpha);
            let picard_gap = a.sup_dist_sq(&b, metric)?.sqrt();
            let direct_gap = direct.sup_dist_sq(&tilde, metric)?.sqrt();
            // Scheme error: distance between the two integrators.
            let quad = direct.sup_dist_sq(&b, metric)?.sqrt();
            Ok([
                picard_gap.max(direct_gap),
                quad,
                metric.norm_sq(a.terminal()),
                metric.norm_sq(b.terminal()),
                metric.norm_sq(tilde.terminal()) - metric.norm_sq(direct.terminal()),
            ])
        })
        .collect::<Result<_>>()?;
    let worst = rows
        .iter()
        .map(|r| r[0] / (10.0 * r[1]).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    summary.check(
        "rescale_pathwise",
        worst <= 1.0,
        format!("max sup-gap / (10 x scheme error) = {worst:.3e} over {paths} paths"),
    );
    let col = |k: usize| Estimate::from_samples(&rows.iter().map(|r| r[k]).collect::<Vec<_>>());
    let (ea, eb, diff) = (col(2), col(3), col(4));
    let se = (ea.std_error.powi(2) + eb.std_error.powi(2)).sqrt();
    let gap = (ea.mean - eb.mean).abs();
    summary.check(
        "rescale_statistics",
        gap <= 3.0 * se && diff.mean.abs() <= 3.0 * (diff.std_error + se),
        format!(
            "E|X_T|^2 rescaled {:.6e} vs direct frame {:.6e}, gap {gap:.3e}, 3 s.e. {:.3e}",
            ea.mean,
            eb.mean,
            3.0 * se
        ),
    );
    summary.stat_f("rescale.max_gap", rows.iter().map(|r| r[0]).fold(0.0, f64::max));
    summary.stat_f("rescale.mean_scheme_error", col(1).mean);
    Ok(())
}

/// Per-path outcome of the Itô-inequality check at both step sizes.
struct ItoPath {
    slack: Vec<f64>,
    coarse_violation: bool,
    fine_violation: Option<bool>,
}

/// Itô-type inequality along explicit solutions at `Δt` and, on the same
/// noise, `Δt/2`.
pub fn run_ito_check(cfg: &RunConfig) -> Result<RunSummary> {
    let model = build_model(cfg)?;
    let grid = cfg.grid()?;
    let fine = grid.refined(2);
    let seeder = cfg.seeder();
    let c = cfg.ito.constant.unwrap_or(model.ito_constant());
    let (tol_c, tol_f) = (ito_tolerance(c, grid.dt()), ito_tolerance(c, fine.dt()));
    let metric = model.metric();
    let alpha = model.alpha();
    let refine = cfg.ito.refine;
    let runs: Vec<ItoPath> = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|p| {
            let x0 = model.sample_initial(&seeder, p);
            let (coarse_noise, fine_noise) = if refine {
                let f = model.sample_noise(&fine, &seeder, p)?;
                (f.coarsen(2, &grid)?, Some(f))
            } else {
                (model.sample_noise(&grid, &seeder, p)?, None)
            };
            let sol = direct_path(&model, &x0, &grid, &coarse_noise)?;
            let rep = ito_slack_along(&sol.path, alpha, &sol.increments, metric, tol_c)?;
            let fine_violation = match fine_noise {
                Some(n) => {
                    let s = direct_path(&model, &x0, &fine, &n)?;
                    Some(ito_slack_along(&s.path, alpha, &s.increments, metric, tol_f)?.violation)
                }
                None => None,
            };
            Ok(ItoPath {
                slack: rep.slack,
                coarse_violation: rep.violation,
                fine_violation,
            })
        })
        .collect::<Result<_>>()?;
    let mut summary = RunSummary::new(Command::ItoCheck, model.name(), cfg);
    let n = runs.len() as f64;
    let vc = runs.iter().filter(|r| r.coarse_violation).count();
    let rate_c = vc as f64 / n;

    let mut csv = CsvOut::create(&cfg.output, "ito_rates.csv", &["dt", "tolerance", "paths", "violations", "rate"])?;
    csv.row(&[num(grid.dt()), num(tol_c), runs.len().to_string(), vc.to_string(), num(rate_c)])?;
    summary.check(
        "ito_violation_rate",
        rate_c <= cfg.ito.max_violation_rate,
        format!("{vc}/{} paths violate at tolerance {c:.4e} sqrt(dt) = {tol_c:.4e}", runs.len()),
    );
    summary.stat_f("ito.constant", c);
    summary.stat_f("ito.rate", rate_c);
    if refine {
        let vf = runs.iter().filter(|r| r.fine_violation == Some(true)).count();
        let rate_f = vf as f64 / n;
        csv.row(&[num(fine.dt()), num(tol_f), runs.len().to_string(), vf.to_string(), num(rate_f)])?;
        summary.check(
            "ito_refinement",
            rate_f <= rate_c,
            format!("rate {rate_c:.4} at dt, {rate_f:.4} at dt/2"),
        );
        summary.stat_f("ito.rate_refined", rate_f);
    }
    csv.finish(&mut summary)?;

    let mut csv = CsvOut::create(
        &cfg.output,
        "ito_slack.csv",
        &["t", "min", "q01", "q05", "q50", "q95", "violation_fraction"],
    )?;
    let mut column = vec![0.0; runs.len()];
    for i in 0..=grid.steps() {
        for (c, r) in column.iter_mut().zip(&runs) {
            *c = r.slack[i];
        }
        let below = column.iter().filter(|s| **s < -tol_c).count() as f64 / n;
        csv.row(&[
            num(grid.time(i)),
            num(column.iter().copied().fold(f64::INFINITY, f64::min)),
            num(quantile(&column, 0.01)),
            num(quantile(&column, 0.05)),
            num(quantile(&column, 0.5)),
            num(quantile(&column, 0.95)),
            num(below),
        ])?;
    }
    csv.finish(&mut summary)?;
    Ok(summary)
}

/// Strong error of the explicit scheme for the linear scalar model against
/// its stochastic exponential, over step sizes `2⁻ᵏ`.
pub fn run_benchmark_oracle(cfg: &RunConfig) -> Result<RunSummary> {
    let mut lc = cfg.linear_scalar.clone();
    lc.horizon = cfg.horizon;
    let model = build_linear_scalar(&lc)?;
    let b = &cfg.benchmark;
    let finest = TimeGrid::new(cfg.horizon, 1usize << b.finest_level)?;
    let levels: Vec<u32> = (b.coarsest_level..=b.finest_level).collect();
    let grids: Vec<TimeGrid> = levels
        .iter()
        .map(|k| TimeGrid::new(cfg.horizon, 1usize << k))
        .collect::<Result<_>>()?;
    let seeder = cfg.seeder();
    let errors: Vec<Vec<f64>> = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|p| {
            let noise = model.sample_noise(&finest, &seeder, p)?;
            let x0 = model.sample_initial(&seeder, p);
            let w_t = noise.wiener.terminal().first().copied().unwrap_or(0.0);
            let exact = doleans_dade(
                x0[0],
                lc.a,
                lc.sigma,
                &lc.marks,
                cfg.horizon,
                w_t,
                noise.jumps.events().iter().map(|e| e.mark),
            );
            levels
                .iter()
                .zip(&grids)
                .map(|(k, g)| {
                    let factor = 1usize << (b.finest_level - k);
                    let coarse = if factor == 1 { noise.clone() } else { noise.coarsen(factor, g)? };
                    let x = direct_path(&model, &x0, g, &coarse)?.path;
                    Ok((x.terminal()[0] - exact).powi(2))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut summary = RunSummary::new(Command::Benchmark, model.name(), cfg);
    let mut csv = CsvOut::create(&cfg.output, "benchmark.csv", &["level", "dt", "rms_error", "std_error", "paths"])?;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let mut reference = f64::NAN;
    for (i, (k, g)) in levels.iter().zip(&grids).enumerate() {
        let sq = Estimate::from_samples(&errors.iter().map(|e| e[i]).collect::<Vec<_>>());
        let rms = sq.mean.sqrt();
        let se = if rms > 0.0 { sq.std_error / (2.0 * rms) } else { 0.0 };
        csv.row(&[k.to_string(), num(g.dt()), num(rms), num(se), errors.len().to_string()])?;
        xs.push(g.dt().ln());
        ys.push(rms.ln());
        if *k == b.reference_level {
            reference = rms;
        }
        summary.stat_f(format!("rms.level_{k}"), rms);
    }
    csv.finish(&mut summary)?;
    let (order, _) = linear_fit(&xs, &ys);
    summary.check(
        "strong_order",
        order >= b.min_order,
        format!("fitted order {order:.4} (minimum {})", b.min_order),
    );
    summary.check(
        "reference_error",
        reference < b.max_reference_rms,
        format!("rms error {reference:.4e} at dt = 2^-{} (maximum {})", b.reference_level, b.max_reference_rms),
    );
    summary.stat_f("order", order);
    Ok(summary)
}

/// Hypothesis checks on the configured model, checker self-tests on
/// known maps and the noise-layer checks.
pub fn run_hypothesis_check(cfg: &RunConfig) -> Result<RunSummary> {
    let mut summary = RunSummary::new(Command::HypothesisCheck, cfg.example.as_str(), cfg);
    let set = &cfg.hypothesis;
    match build_model(cfg) {
        Ok(model) => {
            let r = model.check_hypotheses(set.samples, cfg.seed)?;
            let s = &r.semimonotone;
            summary.check(
                "semimonotone",
                s.pass,
                format!("max ratio {:.6e}, declared M = {}", s.max_ratio, s.declared),
            );
            let l = &r.lipschitz_growth;
            summary.check(
                "lipschitz",
                l.pass_lipschitz,
                format!("observed {:.6e} (g {:.6e}, k {:.6e}), declared C = {}", l.lipschitz, l.lipschitz_g, l.lipschitz_k, l.declared_c),
            );
            summary.check(
                "growth",
                l.pass_growth,
                format!("observed {:.6e}, declared D = {}", l.growth, l.declared_d),
            );
            let last = r.continuity.probes.last().copied().unwrap_or((0.0, 0.0));
            summary.check(
                "continuity",
                r.continuity.pass,
                format!("max |<y, f(x+e y) - f(x)>| = {:.3e} at e = {:.1e}", last.1, last.0),
            );
            summary.check(
                "contraction",
                !r.contraction.violation,
                format!(
                    "max |S_t x| / (e^(alpha t)|x|) = {:.12}, max |S_t x| / |x| = {:.6}",
                    r.contraction.max_excess, r.contraction.max_ratio
                ),
            );
            summary.stat_f("ito_constant", model.ito_constant());
        }
        Err(Error::Hypothesis { detail, .. }) => summary.check("model_hypotheses", false, detail),
        Err(e) => return Err(e),
    }
    if set.self_test {
        checker_self_test(cfg, &mut summary)?;
    }
    if set.noise_paths > 0 {
        noise_checks(cfg, &mut summary)?;
    }
    Ok(summary)
}

fn checker_self_test(cfg: &RunConfig, summary: &mut RunSummary) -> Result<()> {
    let set = &cfg.hypothesis;
    let modes = cfg.dim.unwrap_or(cfg.reaction_diffusion.modes);
    let points = cfg.reaction_diffusion.points.max(2 * modes);
    let metric = WeightedInnerProduct::unit(modes);
    let opts = CheckOptions {
        samples: set.samples,
        horizon: cfg.horizon,
        ..Default::default()
    };
    let seeder = cfg.seeder();
    let good = nemitsky(Reaction::NegCubeRoot, modes, points)?;
    let r = check_semimonotone(&good, &metric, &opts, &mut seeder.stream(0, Channel::Auxiliary))?;
    summary.check(
        "self_test_cube_root_monotone",
        r.pass,
        format!("max ratio {:.6e} against M = 0", r.max_ratio),
    );
    let mut bad = nemitsky(Reaction::Cubic { coefficient: 1.0 }, modes, points)?;
    bad.monotonicity = 0.0;
    let r = check_semimonotone(&bad, &metric, &opts, &mut seeder.stream(1, Channel::Auxiliary))?;
    summary.check(
        "self_test_cubic_rejected",
        !r.pass,
        format!("max ratio {:.6e} against M = 0", r.max_ratio),
    );
    let marks = if cfg.reaction_diffusion.marks.is_trivial() {
        MarkSpaceSpec::new(2.0, MarkLaw::Normal { mean: 0.0, sd: 0.5 })?
    } else {
        cfg.reaction_diffusion.marks.clone()
    };
    let m2 = marks.second_moment();
    let jump = CoefficientSet::new(
        crate::coefficients::DriftSpec::zero(modes),
        DiffusionSpec::zero(modes, 0),
        JumpCoeffSpec {
            evaluator: std::sync::Arc::new(LinearMarkJump {
                map: LinearMap::Scaled { dim: modes, factor: 1.0 },
            }),
            lipschitz: m2,
            growth: m2,
        },
    )?;
    let r = check_lipschitz_growth(&jump, &metric, &marks, &opts, &mut seeder.stream(2, Channel::Auxiliary))?;
    let rel = (r.lipschitz_k / m2 - 1.0).abs();
    summary.check(
        "self_test_jump_lipschitz",
        rel <= set.jump_ratio_tolerance,
        format!("observed {:.6e} vs E[xi^2] = {m2:.6e}, relative gap {rel:.3e}", r.lipschitz_k),
    );
    Ok(())
}

/// Itô isometry for `∫W dW`, zero mean and isometry of a compensated
/// jump integral, and the mean jump count.
fn noise_checks(cfg: &RunConfig, summary: &mut RunSummary) -> Result<()> {
    let set = &cfg.hypothesis;
    let grid = TimeGrid::new(cfg.horizon, 100)?;
    let marks = match cfg.example {
        ExampleId::ReactionDiffusion => cfg.reaction_diffusion.marks.clone(),
        ExampleId::HyperbolicWave => cfg.hyperbolic_wave.levy.jumps.clone(),
        ExampleId::DelayEquation => cfg.delay_equation.levy.jumps.clone(),
        ExampleId::LinearScalar => cfg.linear_scalar.marks.clone(),
    };
    let marks = if marks.is_trivial() {
        MarkSpaceSpec::new(2.0, MarkLaw::Uniform { low: -0.3, high: 0.5 })?
    } else {
        marks
    };
    let seeder = StreamSeeder::new(cfg.seed ^ 0x006E_6F69_7365);
    let t = cfg.horizon;
    let h = |s: f64| 1.0 + s;
    let rows: Vec<[f64; 4]> = (0..set.noise_paths as u64)
        .into_par_iter()
        .map(|p| {
            let noise = NoiseRealization::sample(&WienerSpec { modes: 1 }, &marks, &grid, &seeder, p)?;
            // ∫₀ᵀ W dW as a left-point sum.
            let mut w = 0.0;
            let mut ito = 0.0;
            for j in 0..grid.steps() {
                let dw = noise.wiener.step(j)[0];
                ito += w * dw;
                w += dw;
            }
            // ∫∫ h(s) ξ Ñ(ds, dξ) with h(s) = 1 + s, exactly compensated.
            let jumps: f64 = noise.jumps.events().iter().map(|e| h(e.time) * e.mark).sum();
            let comp = jumps - marks.first_moment() * (t + 0.5 * t * t);
            Ok([ito, comp, noise.jumps.events().len() as f64, 0.0])
        })
        .collect::<Result<_>>()?;
    let col = |f: &dyn Fn(&[f64; 4]) -> f64| Estimate::from_samples(&rows.iter().map(f).collect::<Vec<_>>());
    let k = set.noise_sigmas;

    // E(∫W dW)² = Σ tⱼ Δt for the left-point sum.
    let exact_ito = (0..grid.steps()).map(|j| grid.time(j) * grid.dt()).sum::<f64>();
    let sq = col(&|r| r[0] * r[0]);
    summary.check(
        "noise_ito_isometry",
        (sq.mean - exact_ito).abs() <= k * sq.std_error,
        format!("E I^2 = {:.6e} +- {:.2e}, expected {exact_ito:.6e}", sq.mean, sq.std_error),
    );
    let mean = col(&|r| r[1]);
    summary.check(
        "noise_compensated_mean",
        mean.mean.abs() <= k * mean.std_error,
        format!("mean {:.6e} +- {:.2e}", mean.mean, mean.std_error),
    );
    // E(∫∫hξ dÑ)² = ∫h² ds · ∫ξ² dν
    let exact_jump = ((1.0 + t).powi(3) - 1.0) / 3.0 * marks.second_moment();
    let jsq = col(&|r| r[1] * r[1]);
    summary.check(
        "noise_jump_isometry",
        (jsq.mean - exact_jump).abs() <= k * jsq.std_error,
        format!("E J^2 = {:.6e} +- {:.2e}, expected {exact_jump:.6e}", jsq.mean, jsq.std_error),
    );
    let count = col(&|r| r[2]);
    let expected = marks.intensity * t;
    summary.check(
        "noise_jump_count",
        (count.mean - expected).abs() <= set.count_sigmas * count.std_error,
        format!("mean count {:.6} +- {:.2e}, expected {expected}", count.mean, count.std_error),
    );
    Ok(())
}

/// Direct (exponential Euler) paths: CSV dump, moments and a Picard
/// cross-check on a few paths.
pub fn run_simulate(cfg: &RunConfig) -> Result<RunSummary> {
    let model = build_model(cfg)?;
    let grid = cfg.grid()?;
    let seeder = cfg.seeder();
    let metric = model.metric();
    let set = &cfg.simulate;
    let dump = set.dump_paths.min(cfg.paths);
    let solved: Vec<(f64, f64, Option<CadlagPath>)> = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|p| {
            let x = direct_solve(&model, &seeder, p, &grid)?.path;
            let keep = (p as usize) < dump;
            Ok((metric.norm_sq(x.terminal()), x.sup_norm_sq(metric), keep.then_some(x)))
        })
        .collect::<Result<_>>()?;
    let mut summary = RunSummary::new(Command::Simulate, model.name(), cfg);
    let header = path_header(model.dim());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = CsvOut::create(&cfg.output, "simulate_paths.csv", &header)?;
    for (p, (_, _, x)) in solved.iter().enumerate() {
        if let Some(x) = x {
            path_rows(&mut csv, p as u64, x, metric, set.stride)?;
        }
    }
    csv.finish(&mut summary)?;
    let term = Estimate::from_samples(&solved.iter().map(|s| s.0).collect::<Vec<_>>());
    let sup = Estimate::from_samples(&solved.iter().map(|s| s.1).collect::<Vec<_>>());
    summary.check(
        "finite",
        term.mean.is_finite() && sup.mean.is_finite(),
        format!("E|X_T|^2 = {:.6e}, E sup|X|^2 = {:.6e}", term.mean, sup.mean),
    );
    summary.stat_f("terminal_norm_sq.mean", term.mean);
    summary.stat_f("terminal_norm_sq.std_error", term.std_error);
    summary.stat_f("sup_norm_sq.mean", sup.mean);
    let cross = set.cross_check_paths.min(cfg.paths);
    if cross > 0 {
        let opts = cfg.picard.options;
        let d: Vec<f64> = (0..cross as u64)
            .into_par_iter()
            .map(|p| {
                let a = direct_solve(&model, &seeder, p, &grid)?.path;
                let (b, _) = picard_solve(&model, &seeder, p, &grid, &opts)?;
                a.sup_dist_sq(&b, metric)
            })
            .collect::<Result<_>>()?;
        summary.stat_f("picard_direct_sup_dist_sq.mean", Estimate::from_samples(&d).mean);
    }
    Ok(summary)
}

/// Draws `n` standard normals from the auxiliary stream of `path`; a
/// convenience for examples that need reproducible scratch randomness.
pub fn auxiliary_normals(seeder: &StreamSeeder, path: u64, n: usize) -> Vec<f64> {
    let mut rng = seeder.stream(path, Channel::Auxiliary);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Jump count of the Poisson random measure over `[0, horizon]` for each
/// of `paths` paths.
pub fn jump_counts(marks: &MarkSpaceSpec, horizon: f64, seeder: &StreamSeeder, paths: usize) -> Result<Vec<usize>> {
    (0..paths as u64)
        .into_par_iter()
        .map(|p| Ok(sample_prm(marks, horizon, &mut seeder.stream(p, Channel::Jumps))?.len()))
        .collect()
}
