//! JSON experiment specs and the batch runner behind the command-line tool.
//!
//! A spec names a command, its parameters, an optional seed and an output
//! directory. Unknown keys are rejected at every level. Each run writes its
//! artifacts plus `manifest.json` (spec hash, seed, library version).

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::contraction::{
    simulate_recursion, verify_compact_case, verify_heavy_tail_case, verify_light_tail_case,
    ContractionMap, Correlation, ShockDistribution, ShockFamily, ShockKind, HEAVY_TOLERANCE,
    LIGHT_TOLERANCE,
};
use crate::hetbeta::{
    minimum_horizon, simulate_birth_death, solve_equilibrium, survivor_tail_check, AgentType,
    Economy, HetBetaError,
};
use crate::ifp::{
    euler_residuals, pih_margin_check, policy_lower_bound_check, solve, AssetGrid, IfProblem,
    IfpError, MarkovIncome, Policy, SolveConfig, Spacing, DEFAULT_A_MAX_MULTIPLE, DEFAULT_A_MIN,
    DEFAULT_NODES,
};
use crate::io::{self as aio, IoError};
use crate::reproduce::{reproduce, ReproduceError};
use crate::tails::{
    classify_tail, empirical_mgf, markov_bound_check, polynomial_decay_rate, ClassifyConfig,
    MgfValue, TailSample,
};
use crate::utility::{asymptotic_rra, default_probes, UtilitySpec, BRRA_CEILING};
use crate::wealth::{
    ar1_domination_check, derive_rho, simulate_panel, tail_inheritance_report, InheritanceConfig,
    PanelSettings, WealthError,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Tails,
    Contraction,
    IfpSolve,
    IfpSimulate,
    HetbetaSolve,
    HetbetaSimulate,
    Reproduce,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Tails => "tails",
            Command::Contraction => "contraction",
            Command::IfpSolve => "ifp-solve",
            Command::IfpSimulate => "ifp-simulate",
            Command::HetbetaSolve => "hetbeta-solve",
            Command::HetbetaSimulate => "hetbeta-simulate",
            Command::Reproduce => "reproduce",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(
            self,
            Command::Contraction | Command::IfpSimulate | Command::HetbetaSimulate
        )
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub parameters: Value,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Schema(e.to_string()))
    }

    /// SHA-256 of the canonical (sorted-key, compact) JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(&serde_json::to_value(self).expect("spec serializes"))
            .expect("value serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExperimentError {
    Schema(String),
    Solver(String),
    Io(String),
}

impl ExperimentError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Schema(_) => 2,
            ExperimentError::Solver(_) => 3,
            ExperimentError::Io(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentError::Schema(_) => "schema",
            ExperimentError::Solver(_) => "solver",
            ExperimentError::Io(_) => "io",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            ExperimentError::Schema(m) | ExperimentError::Solver(m) | ExperimentError::Io(m) => m,
        }
    }

    pub fn to_json(&self) -> Value {
        json!({ "error": { "kind": self.kind(), "exit_code": self.exit_code(), "message": self.message() } })
    }
}

impl fmt::Display for ExperimentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

impl std::error::Error for ExperimentError {}

impl From<IoError> for ExperimentError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::File { .. } => ExperimentError::Io(e.to_string()),
            IoError::Format { .. } => ExperimentError::Schema(e.to_string()),
        }
    }
}

fn schema(e: impl fmt::Display) -> ExperimentError {
    ExperimentError::Schema(e.to_string())
}

fn solver(e: impl fmt::Display) -> ExperimentError {
    ExperimentError::Solver(e.to_string())
}

fn from_ifp(e: IfpError) -> ExperimentError {
    match e {
        IfpError::SolverError(_) | IfpError::NotConverged(_) => solver(e),
        _ => schema(e),
    }
}

fn from_wealth(e: WealthError) -> ExperimentError {
    match e {
        WealthError::Ifp(inner) => from_ifp(inner),
        WealthError::Tail(_) => solver(e),
        _ => schema(e),
    }
}

fn from_hetbeta(e: HetBetaError) -> ExperimentError {
    match e {
        HetBetaError::SolverError(_) | HetBetaError::Tail(_) => solver(e),
        _ => schema(e),
    }
}

fn params<T: DeserializeOwned>(value: &Value, command: Command) -> Result<T, ExperimentError> {
    let v = if value.is_null() { json!({}) } else { value.clone() };
    serde_json::from_value(v).map_err(|e| schema(format!("{command} parameters: {e}")))
}

// ---------------------------------------------------------------------------
// Parameter blocks

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum UtilityConfig {
    Crra { gamma: f64 },
    Hara { a: f64, b: f64 },
    Cara { b: f64 },
    LogShifted { b: f64 },
}

impl UtilityConfig {
    pub fn build(self) -> Result<UtilitySpec, ExperimentError> {
        match self {
            UtilityConfig::Crra { gamma } => UtilitySpec::crra(gamma),
            UtilityConfig::Hara { a, b } => UtilitySpec::hara(a, b),
            UtilityConfig::Cara { b } => UtilitySpec::cara(b),
            UtilityConfig::LogShifted { b } => UtilitySpec::log_shifted(b),
        }
        .map_err(schema)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistConfig {
    Constant { value: f64 },
    Uniform { lo: f64, hi: f64 },
    Exponential { rate: f64 },
    Pareto { alpha: f64, xmin: f64 },
}

impl From<DistConfig> for ShockDistribution {
    fn from(d: DistConfig) -> Self {
        match d {
            DistConfig::Constant { value } => ShockDistribution::Constant(value),
            DistConfig::Uniform { lo, hi } => ShockDistribution::Uniform { lo, hi },
            DistConfig::Exponential { rate } => ShockDistribution::Exponential { rate },
            DistConfig::Pareto { alpha, xmin } => ShockDistribution::Pareto { alpha, xmin },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapConfig {
    Linear { rho: f64 },
    LinearPlusCap { rho: f64, cap: f64 },
    Custom { rho: f64, xs: Vec<f64>, phis: Vec<f64> },
}

impl MapConfig {
    fn build(&self) -> Result<ContractionMap, ExperimentError> {
        match self {
            MapConfig::Linear { rho } => ContractionMap::linear(*rho),
            MapConfig::LinearPlusCap { rho, cap } => ContractionMap::linear_plus_cap(*rho, *cap),
            MapConfig::Custom { rho, xs, phis } => {
                ContractionMap::custom(xs.clone(), phis.clone(), *rho)
            }
        }
        .map_err(schema)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShockConfig {
    Iid {
        distribution: DistConfig,
    },
    MarkovModulated {
        transition: Vec<Vec<f64>>,
        per_state: Vec<DistConfig>,
        #[serde(default)]
        initial_state: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationConfig {
    #[default]
    Iid,
    PerfectlyCorrelated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovBoundConfig {
    pub s: f64,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailsParams {
    pub input: PathBuf,
    /// Hill order statistics; defaults to 1% of the sample.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub upper_fraction: Option<f64>,
    #[serde(default)]
    pub pooled: bool,
    #[serde(default)]
    pub mgf_s: Vec<f64>,
    #[serde(default)]
    pub markov: Vec<MarkovBoundConfig>,
}

fn default_steps() -> usize {
    80
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractionParams {
    pub map: MapConfig,
    pub shocks: ShockConfig,
    #[serde(default)]
    pub correlation: CorrelationConfig,
    #[serde(default = "default_steps")]
    pub steps: usize,
    pub paths: usize,
    #[serde(default)]
    pub x0: f64,
    /// Hill `k` for the heavy case; defaults to 1% of the paths.
    #[serde(default)]
    pub hill_k: Option<usize>,
}

fn default_proxy_states() -> usize {
    15
}

fn default_tail_prob() -> f64 {
    1e-5
}

fn default_stay() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IncomeConfig {
    Markov {
        states: Vec<String>,
        matrix: Vec<Vec<f64>>,
        y: Vec<f64>,
    },
    Iid {
        y: Vec<f64>,
        probs: Vec<f64>,
    },
    TwoState {
        y_low: f64,
        y_high: f64,
        #[serde(default = "default_stay")]
        stay: f64,
    },
    ExponentialProxy {
        rate: f64,
        #[serde(default = "default_proxy_states")]
        states: usize,
        #[serde(default = "default_tail_prob")]
        tail_prob: f64,
    },
    ParetoProxy {
        alpha: f64,
        xmin: f64,
        #[serde(default = "default_proxy_states")]
        states: usize,
        #[serde(default = "default_tail_prob")]
        tail_prob: f64,
    },
}

impl IncomeConfig {
    fn build(&self) -> Result<MarkovIncome, ExperimentError> {
        match self {
            IncomeConfig::Markov { states, matrix, y } => {
                MarkovIncome::new(states.clone(), matrix.clone(), y.clone())
            }
            IncomeConfig::Iid { y, probs } => MarkovIncome::iid(y.clone(), probs.clone()),
            IncomeConfig::TwoState {
                y_low,
                y_high,
                stay,
            } => MarkovIncome::two_state(*y_low, *y_high, *stay),
            IncomeConfig::ExponentialProxy {
                rate,
                states,
                tail_prob,
            } => MarkovIncome::exponential_proxy(*rate, *states, *tail_prob),
            IncomeConfig::ParetoProxy {
                alpha,
                xmin,
                states,
                tail_prob,
            } => MarkovIncome::pareto_proxy(*alpha, *xmin, *states, *tail_prob),
        }
        .map_err(schema)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpacingConfig {
    #[default]
    Geometric,
    Linear,
}

fn default_a_min() -> f64 {
    DEFAULT_A_MIN
}

fn default_nodes() -> usize {
    DEFAULT_NODES
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_a_min")]
    pub a_min: f64,
    /// Defaults to 300 × mean income.
    #[serde(default)]
    pub a_max: Option<f64>,
    #[serde(default = "default_nodes")]
    pub n: usize,
    #[serde(default)]
    pub spacing: SpacingConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub noise_floor: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
}

impl SolverConfig {
    fn build(&self) -> Result<SolveConfig, ExperimentError> {
        let mut c = SolveConfig::default();
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(schema(format!("solver tol must be positive, got {t}")));
            }
            c.tol = Some(t);
        }
        if let Some(f) = self.noise_floor {
            if !(f >= 0.0) {
                return Err(schema(format!("noise_floor must be nonnegative, got {f}")));
            }
            c.noise_floor = f;
        }
        if let Some(m) = self.max_iter {
            c.max_iter = m;
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IfpParams {
    pub beta: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub utility: UtilityConfig,
    pub income: IncomeConfig,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl IfpParams {
    pub fn build(&self) -> Result<IfProblem, ExperimentError> {
        let utility = self.utility.build()?;
        let income = self.income.build()?;
        let grid = match self.grid {
            None => AssetGrid::default_for_mean_income(income.mean()),
            Some(g) => {
                let a_max = match g.a_max {
                    Some(a) => a,
                    None if income.mean() > 0.0 => DEFAULT_A_MAX_MULTIPLE * income.mean(),
                    None => {
                        return Err(schema("zero mean income: give grid.a_max explicitly"));
                    }
                };
                let spacing = match g.spacing {
                    SpacingConfig::Geometric => Spacing::Geometric,
                    SpacingConfig::Linear => Spacing::Linear,
                };
                AssetGrid::new(g.a_min, a_max, g.n, spacing)
            }
        }
        .map_err(schema)?;
        IfProblem::new(self.beta, self.r, utility, income, grid).map_err(schema)
    }
}

fn default_horizon() -> usize {
    500
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IfpSimulateParams {
    pub problem: IfpParams,
    /// Solved-policy CSV from `ifp-solve`; solved in-process when absent.
    #[serde(default)]
    pub policy: Option<PathBuf>,
    pub agents: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub a0: Option<f64>,
    #[serde(default = "default_true")]
    pub domination: bool,
    #[serde(default = "default_slack")]
    pub domination_slack: f64,
}

fn default_slack() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentTypeConfig {
    pub pi: f64,
    pub p: f64,
    pub y: f64,
    pub beta: f64,
    pub gamma: f64,
}

fn default_eq_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HetBetaParams {
    pub types: Vec<AgentTypeConfig>,
    /// Stop once `|f(R)|` is at most this.
    #[serde(default = "default_eq_tol")]
    pub tol: f64,
}

impl HetBetaParams {
    fn build(&self) -> Result<Economy, ExperimentError> {
        Economy::new(
            self.types
                .iter()
                .map(|t| AgentType {
                    pi: t.pi,
                    p: t.p,
                    y: t.y,
                    beta: t.beta,
                    gamma: t.gamma,
                })
                .collect(),
        )
        .map_err(schema)
    }
}

fn default_agents() -> usize {
    crate::hetbeta::MIN_AGENTS
}

fn default_n_max() -> u32 {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HetBetaSimulateParams {
    pub types: Vec<AgentTypeConfig>,
    #[serde(default = "default_eq_tol")]
    pub tol: f64,
    #[serde(default = "default_agents")]
    pub agents: usize,
    /// Defaults to the smallest horizon with `(1 − min p)^T < 1e−4`.
    #[serde(default)]
    pub horizon: Option<usize>,
    /// Largest survivor-tail step checked against the exact law.
    #[serde(default = "default_n_max")]
    pub survivor_n_max: u32,
    #[serde(default)]
    pub hill_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReproduceParams {
    pub id: String,
}

// ---------------------------------------------------------------------------
// Runner

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub command: Command,
    pub seed: Option<u64>,
    pub spec_sha256: String,
    pub version: String,
    pub spec: ExperimentSpec,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// Main report, also printed by the command-line tool.
    pub summary: Value,
    pub manifest: Manifest,
}

struct Sink<'a> {
    dir: &'a Path,
    outputs: Vec<Artifact>,
    inputs: Vec<Artifact>,
}

fn file_sha256(path: &Path) -> Result<String, ExperimentError> {
    let bytes = std::fs::read(path).map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Sink<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn record(&mut self, name: &str) -> Result<(), ExperimentError> {
        let sha256 = file_sha256(&self.path(name))?;
        self.outputs.push(Artifact {
            file: name.to_string(),
            sha256,
        });
        Ok(())
    }

    fn input(&mut self, path: &Path) -> Result<(), ExperimentError> {
        let sha256 = file_sha256(path)?;
        self.inputs.push(Artifact {
            file: path.display().to_string(),
            sha256,
        });
        Ok(())
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), ExperimentError> {
        aio::write_json(&self.path(name), value)?;
        self.record(name)
    }

    fn column(&mut self, name: &str, header: &str, values: &[f64]) -> Result<(), ExperimentError> {
        aio::write_column(&self.path(name), header, values)?;
        self.record(name)
    }

    fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), ExperimentError> {
        aio::write_table(&self.path(name), header, rows)?;
        self.record(name)
    }
}

/// Validate `spec`, run it, and write artifacts and `manifest.json` into
/// `spec.output_dir`.
pub fn run(spec: &ExperimentSpec) -> Result<RunOutcome, ExperimentError> {
    if spec.command.is_stochastic() && spec.seed.is_none() {
        return Err(schema(format!("command {} requires a seed", spec.command)));
    }
    // Parse before touching the filesystem so schema errors win.
    let job = Job::parse(spec)?;
    std::fs::create_dir_all(&spec.output_dir)
        .map_err(|e| ExperimentError::Io(format!("{}: {e}", spec.output_dir.display())))?;
    let mut sink = Sink {
        dir: &spec.output_dir,
        outputs: Vec::new(),
        inputs: Vec::new(),
    };
    let seed = spec.seed.unwrap_or(0);
    let summary = match job {
        Job::Tails(p) => run_tails(&p, &mut sink)?,
        Job::Contraction(p) => run_contraction(&p, seed, &mut sink)?,
        Job::IfpSolve(p) => run_ifp_solve(&p, &mut sink)?,
        Job::IfpSimulate(p) => run_ifp_simulate(&p, seed, &mut sink)?,
        Job::HetbetaSolve(p) => run_hetbeta_solve(&p, &mut sink)?,
        Job::HetbetaSimulate(p) => run_hetbeta_simulate(&p, seed, &mut sink)?,
        Job::Reproduce(p) => run_reproduce(&p, spec.seed, &mut sink)?,
    };
    let manifest = Manifest {
        command: spec.command,
        seed: spec.seed,
        spec_sha256: spec.hash(),
        version: VERSION.to_string(),
        spec: spec.clone(),
        inputs: sink.inputs,
        outputs: sink.outputs,
    };
    aio::write_json(&spec.output_dir.join("manifest.json"), &manifest)?;
    Ok(RunOutcome { summary, manifest })
}

enum Job {
    Tails(TailsParams),
    Contraction(ContractionParams),
    IfpSolve(IfpParams),
    IfpSimulate(IfpSimulateParams),
    HetbetaSolve(HetBetaParams),
    HetbetaSimulate(HetBetaSimulateParams),
    Reproduce(ReproduceParams),
}

impl Job {
    fn parse(spec: &ExperimentSpec) -> Result<Self, ExperimentError> {
        let v = &spec.parameters;
        let c = spec.command;
        Ok(match c {
            Command::Tails => Job::Tails(params(v, c)?),
            Command::Contraction => Job::Contraction(params(v, c)?),
            Command::IfpSolve => Job::IfpSolve(params(v, c)?),
            Command::IfpSimulate => Job::IfpSimulate(params(v, c)?),
            Command::HetbetaSolve => Job::HetbetaSolve(params(v, c)?),
            Command::HetbetaSimulate => Job::HetbetaSimulate(params(v, c)?),
            Command::Reproduce => Job::Reproduce(params(v, c)?),
        })
    }
}

fn run_tails(p: &TailsParams, sink: &mut Sink) -> Result<Value, ExperimentError> {
    let values = aio::read_column(&p.input)?;
    sink.input(&p.input)?;
    let sample = TailSample::new(values, p.input.display().to_string())
        .map_err(schema)?
        .with_pooled(p.pooled);
    let n = sample.len();
    let mut config = ClassifyConfig::default();
    if let Some(k) = p.k {
        if !(k >= 1 && k < n) {
            return Err(schema(format!("k must lie in [1, {}), got {k}", n)));
        }
        config.hill_k = Some(k);
    }
    if let Some(f) = p.upper_fraction {
        if !(f > 0.0 && f < 1.0) {
            return Err(schema(format!("upper_fraction must lie in (0, 1), got {f}")));
        }
        config.upper_fraction = f;
    }
    let report = classify_tail(&sample, &config);
    sink.json("tail_report.json", &report)?;

    if !p.mgf_s.is_empty() {
        let curve = empirical_mgf(&sample, &p.mgf_s).map_err(schema)?;
        let rows = curve
            .s_points
            .iter()
            .zip(&curve.m_values)
            .map(|(s, m)| match m {
                MgfValue::Finite(v) => vec![s.to_string(), v.to_string(), "false".into()],
                MgfValue::Divergent => vec![s.to_string(), String::new(), "true".into()],
            })
            .collect::<Vec<_>>();
        sink.table("mgf.csv", &["s", "m", "divergent"], &rows)?;
    }
    if !p.markov.is_empty() {
        let mut rows = Vec::new();
        for m in &p.markov {
            for pt in markov_bound_check(&sample, m.s, &[m.x]).map_err(schema)? {
                rows.push(vec![
                    m.s.to_string(),
                    pt.x.to_string(),
                    pt.lhs.to_string(),
                    pt.rhs.to_string(),
                    pt.holds.to_string(),
                ]);
            }
        }
        sink.table("markov_bound.csv", &["s", "x", "survival", "bound", "holds"], &rows)?;
    }
    serde_json::to_value(&report).map_err(solver)
}

enum DecayCase {
    Compact(f64),
    Light(f64),
    Heavy(f64),
}

fn decay_case(dists: &[ShockDistribution]) -> DecayCase {
    let mut y_max: f64 = 0.0;
    let mut lambda = f64::INFINITY;
    let mut alpha = f64::INFINITY;
    for d in dists {
        match *d {
            ShockDistribution::Constant(v) => y_max = y_max.max(v),
            ShockDistribution::Uniform { hi, .. } => y_max = y_max.max(hi),
            ShockDistribution::Exponential { rate } => lambda = lambda.min(rate),
            ShockDistribution::Pareto { alpha: a, .. } => alpha = alpha.min(a),
        }
    }
    if alpha.is_finite() {
        DecayCase::Heavy(alpha)
    } else if lambda.is_finite() {
        DecayCase::Light(lambda)
    } else {
        DecayCase::Compact(y_max)
    }
}

fn run_contraction(p: &ContractionParams, seed: u64, sink: &mut Sink) -> Result<Value, ExperimentError> {
    let map = p.map.build()?;
    let correlation = match p.correlation {
        CorrelationConfig::Iid => Correlation::Iid,
        CorrelationConfig::PerfectlyCorrelated => Correlation::PerfectlyCorrelated,
    };
    let (kind, dists): (ShockKind, Vec<ShockDistribution>) = match &p.shocks {
        ShockConfig::Iid { distribution } => {
            let d: ShockDistribution = (*distribution).into();
            (ShockKind::Iid(d.clone()), vec![d])
        }
        ShockConfig::MarkovModulated {
            transition,
            per_state,
            initial_state,
        } => {
            let ds: Vec<ShockDistribution> = per_state.iter().map(|d| (*d).into()).collect();
            (
                ShockKind::MarkovModulated {
                    transition: transition.clone(),
                    per_state: ds.clone(),
                    initial_state: *initial_state,
                },
                ds,
            )
        }
    };
    let shocks = ShockFamily::new(kind, correlation).map_err(schema)?;
    if let Some(k) = p.hill_k {
        if !(k >= 1 && k < p.paths) {
            return Err(schema(format!("hill_k must lie in [1, {}), got {k}", p.paths)));
        }
    }
    let panel = simulate_recursion(&map, &shocks, p.x0, p.steps, p.paths, seed).map_err(schema)?;
    sink.column("terminal_values.csv", "x", panel.terminal_values.values())?;

    let (case, verification) = match decay_case(&dists) {
        DecayCase::Compact(y_max) => (
            "compact",
            serde_json::to_value(verify_compact_case(&panel, &map, y_max).map_err(schema)?),
        ),
        DecayCase::Light(lambda) => (
            "light",
            serde_json::to_value(
                verify_light_tail_case(&panel, lambda, LIGHT_TOLERANCE).map_err(solver)?,
            ),
        ),
        DecayCase::Heavy(alpha) => {
            let k = p.hill_k.unwrap_or((p.paths / 100).max(1));
            (
                "heavy",
                serde_json::to_value(
                    verify_heavy_tail_case(&panel, alpha, k, HEAVY_TOLERANCE).map_err(schema)?,
                ),
            )
        }
    };
    let verification = verification.map_err(solver)?;
    let tail = classify_tail(&panel.terminal_values, &ClassifyConfig::default());
    let holds = verification["holds"].as_bool().unwrap_or(false);
    let report = json!({
        "case": case,
        "holds": holds,
        "verification": verification,
        "panel": {
            "paths": panel.paths,
            "steps": panel.steps,
            "x0": panel.x0,
            "rho": panel.rho_used,
            "seed": panel.seed,
            "running_max": panel.running_max,
        },
        "tail": tail,
    });
    sink.json("contraction_report.json", &report)?;
    Ok(report)
}

fn ifp_checks(policy: &Policy, problem: &IfProblem) -> Result<Value, ExperimentError> {
    let utility = problem.utility();
    let rra = asymptotic_rra(utility, &default_probes(), BRRA_CEILING).map_err(solver)?;
    let euler = euler_residuals(policy, problem);
    let lower_bound = match utility {
        UtilitySpec::Crra { .. } => Some(policy_lower_bound_check(policy, problem, 1e-8).map_err(solver)?),
        _ => None,
    };
    let (pih, pih_note) = if problem.r() < 1.0 {
        (None, Some("R < 1: the consumption margin check needs R >= 1".to_string()))
    } else if !rra.brra {
        (None, Some("relative risk aversion is unbounded".to_string()))
    } else {
        match pih_margin_check(policy, problem, rra.gamma_bar) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    Ok(json!({
        "rra": { "gamma_bar": rra.gamma_bar, "probe_estimate": rra.probe_estimate, "brra": rra.brra },
        "euler": euler,
        "lower_bound": lower_bound,
        "pih": pih,
        "pih_note": pih_note,
    }))
}

fn run_ifp_solve(p: &IfpParams, sink: &mut Sink) -> Result<Value, ExperimentError> {
    let problem = p.build()?;
    let config = p.solver.build()?;
    let labels = problem.income().labels().to_vec();
    let (policy, report, converged) = match solve(&problem, &config) {
        Ok((policy, report)) => (policy, report, true),
        Err(IfpError::NotConverged(boxed)) => {
            let (policy, report) = *boxed;
            (policy, report, false)
        }
        Err(e) => return Err(from_ifp(e)),
    };
    aio::write_policy(&sink.path("policy.csv"), &policy, &labels)?;
    sink.record("policy.csv")?;
    let checks = ifp_checks(&policy, &problem)?;
    let out = json!({
        "solve": report,
        "checks": checks,
        "income": {
            "states": labels,
            "y": problem.income().y(),
            "stationary": problem.income().stationary(),
            "truncation_quantile": problem.income().truncation_quantile(),
        },
        "grid": {
            "a_min": problem.grid().a_min(),
            "a_max": problem.grid().a_max(),
            "n": problem.grid().len(),
        },
    });
    sink.json("solve_report.json", &out)?;
    if !converged {
        return Err(solver(format!(
            "solver stopped after {} iterations with metric {} above tolerance {}",
            report.iterations, report.final_metric, report.effective_tolerance
        )));
    }
    Ok(out)
}

fn run_ifp_simulate(p: &IfpSimulateParams, seed: u64, sink: &mut Sink) -> Result<Value, ExperimentError> {
    let problem = p.problem.build()?;
    let labels = problem.income().labels().to_vec();
    let policy = match &p.policy {
        Some(path) => {
            let pol = aio::read_policy(path, Arc::new(problem.grid().clone()), &labels)?;
            sink.input(path)?;
            pol
        }
        None => solve(&problem, &p.problem.solver.build()?).map_err(from_ifp)?.0,
    };
    let gamma_bar = problem.utility().gamma_bar_exact();
    let rho = derive_rho(&problem, gamma_bar).map_err(from_wealth)?;
    let (a_hat, pih) = if problem.r() < 1.0 {
        // a' = R(a − c) + y' ≤ R a + y' everywhere when R < 1.
        (Some(problem.grid().a_min()), None)
    } else {
        let rep = pih_margin_check(&policy, &problem, gamma_bar).map_err(from_ifp)?;
        (rep.a_hat, Some(rep))
    };
    let mut settings = PanelSettings::new(p.agents, p.horizon, seed);
    settings.a0 = p.a0;
    let panel = simulate_panel(&policy, &problem, &settings).map_err(from_wealth)?;
    sink.column("wealth.csv", "wealth", panel.terminal_wealth.values())?;
    sink.column("income.csv", "income", panel.terminal_income.values())?;
    let rows: Vec<Vec<String>> = panel
        .mean_path
        .iter()
        .enumerate()
        .map(|(t, m)| vec![t.to_string(), m.to_string()])
        .collect();
    sink.table("mean_wealth.csv", &["t", "mean_wealth"], &rows)?;

    let inheritance =
        tail_inheritance_report(&panel, &problem, rho.rho, a_hat, &InheritanceConfig::default())
            .map_err(from_wealth)?;
    let domination = match (p.domination, a_hat) {
        (true, Some(a)) => Some(
            ar1_domination_check(&policy, &problem, &settings, rho.rho, a, p.domination_slack)
                .map_err(from_wealth)?,
        ),
        _ => None,
    };
    let out = json!({
        "rho": rho,
        "a_hat": a_hat,
        "pih": pih,
        "panel": {
            "agents": panel.agents,
            "horizon": panel.horizon,
            "seed": panel.seed,
            "a0": panel.a0,
            "clamped": panel.clamped,
        },
        "inheritance": inheritance,
        "domination": domination,
    });
    sink.json("inheritance_report.json", &out)?;
    Ok(out)
}

fn run_hetbeta_solve(p: &HetBetaParams, sink: &mut Sink) -> Result<Value, ExperimentError> {
    let economy = p.build()?;
    let result = solve_equilibrium(&economy, p.tol).map_err(from_hetbeta)?;
    let out = json!({ "economy": economy.types(), "equilibrium": result });
    sink.json("equilibrium.json", &out)?;
    Ok(out)
}

fn run_hetbeta_simulate(
    p: &HetBetaSimulateParams,
    seed: u64,
    sink: &mut Sink,
) -> Result<Value, ExperimentError> {
    let economy = HetBetaParams {
        types: p.types.clone(),
        tol: p.tol,
    }
    .build()?;
    let result = solve_equilibrium(&economy, p.tol).map_err(from_hetbeta)?;
    let horizon = p.horizon.unwrap_or_else(|| minimum_horizon(&economy));
    let panel =
        simulate_birth_death(&economy, &result, p.agents, horizon, seed).map_err(from_hetbeta)?;
    sink.column("cross_section.csv", "wealth", panel.wealth.values())?;

    let k = p.hill_k.unwrap_or((p.agents / 100).max(1));
    let hill = if result.degenerate {
        None
    } else {
        Some(polynomial_decay_rate(&panel.wealth, k).map_err(schema)?)
    };
    let survivor = match result.alpha {
        Some(alpha) => {
            let j = result
                .types
                .iter()
                .position(|o| o.alpha == Some(alpha))
                .expect("tail exponent comes from a type");
            Some(json!({
                "type": j,
                "points": survivor_tail_check(&economy, &result, &panel, j, p.survivor_n_max)
                    .map_err(from_hetbeta)?,
            }))
        }
        None => None,
    };
    let out = json!({
        "equilibrium": result,
        "agents": p.agents,
        "horizon": horizon,
        "seed": seed,
        "capped": panel.capped,
        "hill_k": k,
        "hill": hill,
        "survivor": survivor,
    });
    sink.json("birth_death_report.json", &out)?;
    Ok(out)
}

fn run_reproduce(p: &ReproduceParams, seed: Option<u64>, sink: &mut Sink) -> Result<Value, ExperimentError> {
    let rep = reproduce(&p.id, seed).map_err(|e| match e {
        ReproduceError::UnknownId(_) => schema(e),
        ReproduceError::Failed(_) => solver(e),
    })?;
    sink.json("reproduce_report.json", &rep)?;
    let out = serde_json::to_value(&rep).map_err(solver)?;
    if !rep.passed {
        return Err(solver(format!("experiment {} did not pass", rep.id)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(text: &str) -> Result<ExperimentSpec, ExperimentError> {
        ExperimentSpec::from_json(text)
    }

    #[test]
    fn strict_top_level() {
        assert!(spec(r#"{"command":"tails","output_dir":"o","parameters":{}}"#).is_ok());
        let e = spec(r#"{"command":"tails","output_dir":"o","extra":1}"#).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = spec(r#"{"command":"nope","output_dir":"o"}"#).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn strict_nested_blocks() {
        let ok: IfpParams = serde_json::from_value(json!({
            "beta": 0.95, "R": 1.02,
            "utility": {"family": "crra", "gamma": 2.0},
            "income": {"kind": "two_state", "y_low": 0.5, "y_high": 1.5}
        }))
        .unwrap();
        assert_eq!(ok.utility, UtilityConfig::Crra { gamma: 2.0 });
        let bad = serde_json::from_value::<IfpParams>(json!({
            "beta": 0.95, "R": 1.02,
            "utility": {"family": "crra", "gamma": 2.0, "typo": 1},
            "income": {"kind": "two_state", "y_low": 0.5, "y_high": 1.5}
        }));
        assert!(bad.is_err());
        let bad = serde_json::from_value::<IfpParams>(json!({
            "beta": 0.95, "R": 1.02,
            "utility": {"family": "crra", "gamma": 2.0},
            "income": {"kind": "two_state", "y_low": 0.5, "y_high": 1.5, "typo": 1}
        }));
        assert!(bad.is_err());
    }

    #[test]
    fn stochastic_commands_need_seed() {
        let s = spec(
            r#"{"command":"contraction","output_dir":"o","parameters":{
                "map":{"kind":"linear","rho":0.5},
                "shocks":{"kind":"iid","distribution":{"family":"uniform","lo":0,"hi":1}},
                "paths":10}}"#,
        )
        .unwrap();
        assert_eq!(run(&s).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn hash_is_stable_under_key_order() {
        let a = spec(r#"{"command":"reproduce","output_dir":"o","parameters":{"id":"x"}}"#).unwrap();
        let b = spec(r#"{"parameters":{"id":"x"},"output_dir":"o","command":"reproduce"}"#).unwrap();
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn domain_errors_map_to_schema() {
        let dir = tempfile::tempdir().unwrap();
        let s = ExperimentSpec {
            command: Command::IfpSolve,
            seed: None,
            output_dir: dir.path().to_path_buf(),
            parameters: json!({
                "beta": 0.99, "R": 1.02,
                "utility": {"family": "crra", "gamma": 2.0},
                "income": {"kind": "two_state", "y_low": 0.5, "y_high": 1.5}
            }),
        };
        assert_eq!(run(&s).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn contraction_run_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let s = ExperimentSpec {
            command: Command::Contraction,
            seed: Some(7),
            output_dir: dir.path().to_path_buf(),
            parameters: json!({
                "map": {"kind": "linear", "rho": 0.9},
                "shocks": {"kind": "iid", "distribution": {"family": "uniform", "lo": 0.0, "hi": 1.0}},
                "steps": 100, "paths": 2000
            }),
        };
        let out = run(&s).unwrap();
        assert_eq!(out.summary["case"], "compact");
        assert_eq!(out.summary["holds"], true);
        let names: Vec<_> = out.manifest.outputs.iter().map(|a| a.file.as_str()).collect();
        assert_eq!(names, ["terminal_values.csv", "contraction_report.json"]);
        assert!(dir.path().join("manifest.json").exists());
    }
}
