use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};
use tailwealth::experiment::{run, Command, ExperimentError, ExperimentSpec};
use tailwealth::reproduce::IDS;

#[derive(Parser)]
#[command(name = "tailwealth", version, about = "Tail-inheritance experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Out {
    /// Directory for artifacts and manifest.json.
    #[arg(long, short, default_value = "output")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a JSON experiment spec (or re-run the spec stored in a manifest).
    Run {
        #[arg(long)]
        spec: PathBuf,
        /// Override the spec's output directory.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Classify the tail of a single-column CSV sample.
    Tails {
        #[arg(long)]
        input: PathBuf,
        /// Hill order statistics; defaults to 1% of the sample.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        upper_fraction: Option<f64>,
        /// Sample pools draws across time.
        #[arg(long)]
        pooled: bool,
        /// Comma-separated points for the empirical MGF.
        #[arg(long, value_delimiter = ',')]
        mgf_s: Vec<f64>,
        #[command(flatten)]
        out: Out,
    },
    /// Simulate X_t = φ(X_{t−1}) + Y_t and verify the applicable tail bound.
    Contraction {
        /// JSON parameter block (map, shocks, paths, ...).
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        out: Out,
    },
    /// Solve an income fluctuation problem by policy iteration.
    IfpSolve {
        /// JSON problem block (beta, R, utility, income, grid, solver).
        #[arg(long)]
        problem: PathBuf,
        #[command(flatten)]
        out: Out,
    },
    /// Simulate a wealth panel and compare its tail with income.
    IfpSimulate {
        #[arg(long)]
        problem: PathBuf,
        /// Solved policy CSV; solved in-process when omitted.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, default_value_t = 100_000)]
        agents: usize,
        #[arg(long, default_value_t = 500)]
        horizon: usize,
        #[arg(long)]
        a0: Option<f64>,
        #[arg(long)]
        no_domination: bool,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        out: Out,
    },
    /// Solve the heterogeneous-discount-factor equilibrium.
    HetbetaSolve {
        /// JSON array of agent types {pi, p, y, beta, gamma}.
        #[arg(long)]
        economy: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        out: Out,
    },
    /// Simulate the birth-death cross-section of the equilibrium.
    HetbetaSimulate {
        #[arg(long)]
        economy: PathBuf,
        #[arg(long)]
        agents: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        out: Out,
    },
    /// Run a canned acceptance experiment.
    Reproduce {
        /// Experiment id (see --list).
        id: Option<String>,
        #[arg(long, conflicts_with = "id")]
        theorem: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Print the known ids and exit.
        #[arg(long)]
        list: bool,
        #[command(flatten)]
        out: Out,
    },
}

fn read_json(path: &Path) -> Result<Value, ExperimentError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| ExperimentError::Schema(format!("{}: {e}", path.display())))
}

fn object(pairs: Vec<(&str, Option<Value>)>) -> Value {
    let map: Map<String, Value> = pairs
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
        .collect();
    Value::Object(map)
}

fn spec_for(cmd: Cmd) -> Result<Option<ExperimentSpec>, ExperimentError> {
    let spec = |command, seed, out: Out, parameters| ExperimentSpec {
        command,
        seed,
        output_dir: out.out,
        parameters,
    };
    Ok(Some(match cmd {
        Cmd::Run { spec: path, out } => {
            let mut v = read_json(&path)?;
            if v.get("spec_sha256").is_some() {
                v = v["spec"].take();
            }
            let mut s: ExperimentSpec = serde_json::from_value(v)
                .map_err(|e| ExperimentError::Schema(format!("{}: {e}", path.display())))?;
            if let Some(o) = out {
                s.output_dir = o;
            }
            s
        }
        Cmd::Tails {
            input,
            k,
            upper_fraction,
            pooled,
            mgf_s,
            out,
        } => spec(
            Command::Tails,
            None,
            out,
            object(vec![
                ("input", Some(json!(input))),
                ("k", k.map(|k| json!(k))),
                ("upper_fraction", upper_fraction.map(|f| json!(f))),
                ("pooled", pooled.then_some(json!(true))),
                ("mgf_s", (!mgf_s.is_empty()).then_some(json!(mgf_s))),
            ]),
        ),
        Cmd::Contraction { params, seed, out } => {
            spec(Command::Contraction, Some(seed), out, read_json(&params)?)
        }
        Cmd::IfpSolve { problem, out } => spec(Command::IfpSolve, None, out, read_json(&problem)?),
        Cmd::IfpSimulate {
            problem,
            policy,
            agents,
            horizon,
            a0,
            no_domination,
            seed,
            out,
        } => spec(
            Command::IfpSimulate,
            Some(seed),
            out,
            object(vec![
                ("problem", Some(read_json(&problem)?)),
                ("policy", policy.map(|p| json!(p))),
                ("agents", Some(json!(agents))),
                ("horizon", Some(json!(horizon))),
                ("a0", a0.map(|a| json!(a))),
                ("domination", no_domination.then_some(json!(false))),
            ]),
        ),
        Cmd::HetbetaSolve { economy, tol, out } => spec(
            Command::HetbetaSolve,
            None,
            out,
            object(vec![
                ("types", Some(read_json(&economy)?)),
                ("tol", tol.map(|t| json!(t))),
            ]),
        ),
        Cmd::HetbetaSimulate {
            economy,
            agents,
            horizon,
            seed,
            out,
        } => spec(
            Command::HetbetaSimulate,
            Some(seed),
            out,
            object(vec![
                ("types", Some(read_json(&economy)?)),
                ("agents", agents.map(|a| json!(a))),
                ("horizon", horizon.map(|h| json!(h))),
            ]),
        ),
        Cmd::Reproduce {
            id,
            theorem,
            seed,
            list,
            out,
        } => {
            if list {
                for id in IDS {
                    println!("{id}");
                }
                return Ok(None);
            }
            let id = id.or(theorem).ok_or_else(|| {
                ExperimentError::Schema("reproduce needs an experiment id".into())
            })?;
            spec(Command::Reproduce, seed, out, json!({ "id": id }))
        }
    }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = spec_for(cli.command).and_then(|s| s.map(|s| run(&s)).transpose());
    match result {
        Ok(Some(outcome)) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&outcome.summary).expect("summary serializes")
            );
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
