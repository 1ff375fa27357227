use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use maasim_core::bench::{run_bench, run_pipeline, BenchPlan, PipelineConfig};
use maasim_core::dataset::{load_dataset, save_dataset, save_schema, Dataset};
use maasim_core::fixtures;
use maasim_core::forest::{load_model, Forest};
use maasim_core::moo::{run, AlgoConfig, Algorithm, RunResult, SimProblem};
use maasim_core::simcore::{load_catalog, ActionCatalog, SessionState};
use maasim_core::Error;
use maasim_service::{ServiceConfig, World};

#[derive(Parser)]
#[command(name = "maasim", version, about = "Liveability simulation: model pipeline, advisor benchmark and game server")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean the data, train and prune the forest, cross-validate, write model files.
    Pipeline {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// TOML pipeline settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every algorithm repeatedly and write metric tables.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "nsga2,paes,spea2,epsmoea")]
        algorithms: Vec<Algorithm>,
        #[arg(long, value_delimiter = ',', default_value = "10000,20000")]
        evaluations: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        algo: AlgoArgs,
        #[arg(long)]
        out: PathBuf,
        /// Concurrent runs; all cores when omitted.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// One optimizer run; prints the front as JSON.
    Optimize {
        #[arg(long)]
        algorithm: Algorithm,
        #[arg(long, default_value_t = 10_000)]
        evaluations: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        algo: AlgoArgs,
    },
    /// Serve the JSON API.
    Serve {
        /// `key = value` settings file; environment variables override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
        /// Serve the built-in synthetic world instead of model files.
        #[arg(long)]
        demo: bool,
    },
    /// Write a seeded synthetic dataset and its schema.
    Synth {
        #[arg(long, value_enum, default_value_t = SynthKind::Planted)]
        kind: SynthKind,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    /// 1000 rows, 20 indicators, five balanced classes.
    Planted,
    /// 997 × 54 with constant, duplicated, sparse columns and a rare class.
    Limburg,
    /// The twelve-action benchmark data.
    Actions,
}

#[derive(Args)]
struct ProblemArgs {
    /// Use the built-in twelve-action fixture (seeded by --fixture-seed).
    #[arg(long, conflicts_with_all = ["dataset", "model", "catalog"])]
    fixture: bool,
    #[arg(long, default_value_t = 42)]
    fixture_seed: u64,
    #[arg(long, required_unless_present = "fixture")]
    dataset: Option<PathBuf>,
    #[arg(long, required_unless_present = "fixture")]
    model: Option<PathBuf>,
    #[arg(long, required_unless_present = "fixture")]
    catalog: Option<PathBuf>,
    /// Starting neighbourhood; the fixture defaults to its lowest-scoring row.
    #[arg(long, required_unless_present = "fixture")]
    neighbourhood: Option<String>,
}

#[derive(Args)]
struct AlgoArgs {
    #[arg(long, default_value_t = 100)]
    population: usize,
    #[arg(long, default_value_t = 100)]
    archive: usize,
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
}

impl AlgoArgs {
    fn config(&self) -> AlgoConfig {
        AlgoConfig { population: self.population, archive: self.archive, epsilon: self.epsilon, ..Default::default() }
    }
}

struct LoadedProblem {
    forest: Forest,
    catalog: ActionCatalog,
    session: SessionState,
}

impl ProblemArgs {
    fn load(&self) -> Result<LoadedProblem, Error> {
        if self.fixture {
            let fx = fixtures::action_fixture(self.fixture_seed)?;
            let session = match &self.neighbourhood {
                Some(id) => SessionState::from_dataset(&fx.dataset, id, &fx.forest)?,
                None => fx.session,
            };
            return Ok(LoadedProblem { forest: fx.forest, catalog: fx.catalog, session });
        }
        let need = |p: &Option<PathBuf>| p.clone().expect("clap enforces presence");
        let forest = load_model(need(&self.model))?;
        let ds: Dataset = load_dataset(need(&self.dataset))?;
        let catalog = load_catalog(need(&self.catalog), &forest.feature_names)?;
        catalog.validate(forest.n_features)?;
        let id = self.neighbourhood.clone().expect("clap enforces presence");
        let session = SessionState::from_dataset(&ds, &id, &forest)?;
        Ok(LoadedProblem { forest, catalog, session })
    }
}

fn pipeline(dataset: &Path, out: &Path, config: Option<&Path>, seed: Option<u64>) -> Result<(), Error> {
    let mut cfg = match config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let o = run_pipeline(dataset, out, &cfg)?;
    let r = &o.report;
    println!(
        "columns {} -> {} (constant) -> {} (correlation) -> {} (importance); rows {} -> {}",
        r.input_columns, r.columns_after_constant, r.columns_after_correlation, r.final_columns, r.input_rows, r.rows_after_class_filter
    );
    println!("macro recall ({}-fold): {:.4}", o.cv.k, r.macro_recall);
    Ok(())
}

fn synth(kind: SynthKind, seed: u64, out: &Path) -> Result<(), Error> {
    let ds = match kind {
        SynthKind::Planted => fixtures::planted(seed)?,
        SynthKind::Limburg => fixtures::limburg_like(seed)?,
        SynthKind::Actions => fixtures::action_fixture(seed)?.dataset,
    };
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    save_dataset(&ds, out.join("dataset.csv"))?;
    save_schema(&ds.meta, out.join("schema.json"))?;
    println!("wrote {} rows x {} indicators to {}", ds.n_rows(), ds.n_cols(), out.display());
    Ok(())
}

fn serve(config: Option<&Path>, port: Option<u16>, demo: bool) -> Result<(), Error> {
    let mut cfg = ServiceConfig::from_env(config)?;
    if let Some(p) = port {
        cfg.port = p;
    }
    let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Config(format!("runtime: {e}")))?;
    if demo {
        return rt.block_on(maasim_service::serve_world(World::demo(42)?, cfg));
    }
    rt.block_on(maasim_service::serve(cfg))
}

/// Prints to stdout; a closed pipe is not an error.
fn emit(text: &str) -> Result<(), Error> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e)),
        _ => Ok(()),
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Pipeline { dataset, out, config, seed } => pipeline(&dataset, &out, config.as_deref(), seed),
        Command::Bench { algorithms, evaluations, runs, seed, problem, algo, out, jobs } => {
            let p = problem.load()?;
            let sim = SimProblem { base: &p.session, forest: &p.forest, catalog: &p.catalog };
            let plan = BenchPlan { algorithms, budgets: evaluations, runs, base_seed: seed, algo: algo.config(), jobs };
            let o = run_bench(&sim, &plan, &out)?;
            for row in o.summary.iter().filter(|r| r.metric == maasim_core::metrics::Metric::Cardinality) {
                println!("{:8} {:>6} FE  cardinality {:7.2} ± {:.2}", row.algorithm, row.budget, row.mean, row.sd);
            }
            println!("{} runs written to {}", o.runs.len(), out.display());
            Ok(())
        }
        Command::Optimize { algorithm, evaluations, seed, problem, algo } => {
            let p = problem.load()?;
            let sim = SimProblem { base: &p.session, forest: &p.forest, catalog: &p.catalog };
            let cfg = AlgoConfig { evaluations, seed, ..algo.config() };
            let outcome = run(algorithm, &sim, &cfg)?;
            emit(&serde_json::to_string_pretty(&RunResult::new(algorithm, seed, &outcome))?)
        }
        Command::Serve { config, port, demo } => serve(config.as_deref(), port, demo),
        Command::Synth { kind, seed, out } => synth(kind, seed, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 1 } else { 2 })
        }
    }
}
