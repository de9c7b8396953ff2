use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use persona16::gateway::{load_model_config, select_model, ConfigError, ModelSpec, RetryPolicy};
use persona16::prompt::{enumerate_plan, write_plan_jsonl, ConditionKind, PlanOptions, PromptError};
use persona16::report::{write_all_reports, write_analyses, write_profile_reports, Analysis, ReportError};
use persona16::run::{execute_run, ProfileSet, RunError, RunSettings, PROFILES_FILE};
use persona16::scoring::VarianceMode;
use persona16::traits::parse_trait_loose;
use persona16::{load_bank, ItemBank, TraitId};

#[derive(Parser, Debug)]
#[command(name = "persona16", version, about = "16PF profiling and trait induction for chat models")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Item bank JSON; the built-in reference bank when omitted.
    #[arg(long, global = true)]
    bank: Option<PathBuf>,
    /// JSON list of model specs.
    #[arg(long, global = true)]
    model_config: Option<PathBuf>,
    /// Which configured model to run; needed when the config lists several.
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true, default_value_t = 4)]
    concurrency: usize,
    /// Overrides the model's configured temperature.
    #[arg(long, global = true)]
    temperature: Option<f64>,
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Continue the run already in --out.
    #[arg(long, global = true)]
    resume: bool,
    /// SAC intensity levels, comma separated.
    #[arg(long, global = true, value_delimiter = ',', default_values_t = vec![1u8, 3, 5])]
    levels: Vec<u8>,
    #[arg(long, global = true, default_value = "population")]
    variance_mode: VarianceMode,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = 5)]
    max_attempts: u32,
    /// Samples per prompt; 1 is single-shot.
    #[arg(long, global = true, default_value_t = 1)]
    repeats: u32,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Neutral inventory profile (one answer per bank item).
    Profile,
    /// Trait-induced runs.
    Induce {
        #[command(subcommand)]
        mode: InduceMode,
    },
    /// Neutral intensity profile.
    SacNeutral,
    /// One analysis over scored profiles.
    Analyze {
        #[arg(value_parser = parse_analysis)]
        analysis: Analysis,
        /// profiles.json files or run directories.
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        /// Neutral profile kind for distances and sd.
        #[arg(long)]
        kind: Option<NeutralKind>,
    },
    /// Every report the inputs support.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Write a plan without running it.
    Plan {
        #[arg(long)]
        kind: PlanKind,
        #[arg(long, value_delimiter = ',')]
        targets: Vec<String>,
    },
}

#[derive(Subcommand, Debug)]
enum InduceMode {
    P2 {
        /// Target traits, comma separated; all when omitted.
        #[arg(long, value_delimiter = ',')]
        targets: Vec<String>,
    },
    Sac {
        #[arg(long, value_delimiter = ',')]
        targets: Vec<String>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum NeutralKind {
    Mpi,
    Sac,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PlanKind {
    MpiNeutral,
    P2,
    SacNeutral,
    Sac,
}

fn parse_analysis(s: &str) -> Result<Analysis, String> {
    s.parse()
}

/// Exit status classes: 1 for recorded job failures or a run that stopped, 2
/// for bad configuration or inputs.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let e = e.into();
        let config = if let Some(r) = e.downcast_ref::<RunError>() {
            r.is_config_error()
        } else if let Some(r) = e.downcast_ref::<ReportError>() {
            r.is_config_error()
        } else {
            e.is::<ConfigError>() || e.is::<PromptError>() || e.is::<persona16::bank::BankError>()
        };
        if config {
            Failure::Config(e)
        } else {
            Failure::Runtime(e)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<ExitCode, Failure> {
    let g = &cli.global;
    match &cli.command {
        Command::Profile => run_grid(g, PlanOptions::new(ConditionKind::MpiNeutral)),
        Command::SacNeutral => run_grid(g, PlanOptions::new(ConditionKind::SacNeutral)),
        Command::Induce { mode: InduceMode::P2 { targets } } => {
            run_grid(g, PlanOptions::new(ConditionKind::P2Induced).with_targets(parse_targets(targets)?))
        }
        Command::Induce { mode: InduceMode::Sac { targets } } => run_grid(
            g,
            PlanOptions::new(ConditionKind::SacInduced)
                .with_targets(parse_targets(targets)?)
                .with_levels(g.levels.clone()),
        ),
        Command::Analyze { analysis, inputs, kind } => {
            let set = load_inputs(inputs)?;
            let kind = kind.map(|k| match k {
                NeutralKind::Mpi => ConditionKind::MpiNeutral,
                NeutralKind::Sac => ConditionKind::SacNeutral,
            });
            let files = write_analyses(&set, &[*analysis], kind, &g.out)?;
            list(&files);
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { inputs } => {
            let set = load_inputs(inputs)?;
            let files = write_all_reports(&set, &g.out, g.variance_mode)?;
            list(&files);
            Ok(ExitCode::SUCCESS)
        }
        Command::Plan { kind, targets } => {
            let bank = open_bank(g)?;
            let kind = match kind {
                PlanKind::MpiNeutral => ConditionKind::MpiNeutral,
                PlanKind::P2 => ConditionKind::P2Induced,
                PlanKind::SacNeutral => ConditionKind::SacNeutral,
                PlanKind::Sac => ConditionKind::SacInduced,
            };
            let opts = PlanOptions::new(kind)
                .with_targets(parse_targets(targets)?)
                .with_levels(g.levels.clone())
                .with_repeats(g.repeats);
            let jobs = enumerate_plan(&bank, &opts)?;
            std::fs::create_dir_all(&g.out).with_context(|| format!("creating {}", g.out.display()))?;
            let path = g.out.join("plan.jsonl");
            let f = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            write_plan_jsonl(&jobs, std::io::BufWriter::new(f))?;
            println!("{} jobs -> {}", jobs.len(), path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn parse_targets(raw: &[String]) -> Result<Vec<TraitId>, Failure> {
    if raw.is_empty() {
        return Ok(TraitId::ALL.to_vec());
    }
    raw.iter()
        .map(|s| parse_trait_loose(s).map_err(|e| Failure::Config(anyhow::anyhow!(e))))
        .collect()
}

fn open_bank(g: &Global) -> Result<ItemBank, Failure> {
    match &g.bank {
        Some(p) => Ok(load_bank(p).with_context(|| format!("loading bank {}", p.display())).map_err(Failure::Config)?),
        None => Ok(ItemBank::reference()),
    }
}

fn open_model(g: &Global) -> Result<ModelSpec, Failure> {
    let path = g
        .model_config
        .as_ref()
        .ok_or_else(|| Failure::Config(anyhow::anyhow!("--model-config is required for runs")))?;
    let specs = load_model_config(path).map_err(|e| Failure::Config(anyhow::Error::new(e).context(path.display().to_string())))?;
    let mut spec = select_model(&specs, g.model.as_deref())?;
    if let Some(t) = g.temperature {
        spec.temperature = t;
    }
    spec.validate()?;
    Ok(spec)
}

fn run_grid(g: &Global, grid: PlanOptions) -> Result<ExitCode, Failure> {
    if g.concurrency == 0 {
        return Err(Failure::Config(anyhow::anyhow!("--concurrency must be positive")));
    }
    let bank = Arc::new(open_bank(g)?);
    let model = open_model(g)?;
    let grid = grid.with_repeats(g.repeats);
    let settings = RunSettings {
        out_dir: g.out.clone(),
        resume: g.resume,
        concurrency: g.concurrency,
        cache_dir: g.cache_dir.clone(),
        retry: RetryPolicy { max_attempts: g.max_attempts.max(1), ..RetryPolicy::default() },
    };
    let outcome = execute_run(bank, &model, &grid, &settings)?;
    let files = write_profile_reports(&outcome.profiles, &outcome.out_dir, g.variance_mode)?;
    let s = outcome.summary;
    println!(
        "run {}: {} succeeded, {} failed, {} skipped, {} backend calls",
        outcome.manifest.run_id, s.succeeded, s.failed, s.skipped, outcome.backend_calls
    );
    list(&files);
    if outcome.missing() > 0 {
        eprintln!("{} planned answers are missing; rerun with --resume after fixing the cause", outcome.missing());
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn load_inputs(inputs: &[PathBuf]) -> Result<ProfileSet, Failure> {
    let sets = inputs
        .iter()
        .map(|p| {
            let file = if p.is_dir() { p.join(PROFILES_FILE) } else { p.to_path_buf() };
            if !file.is_file() {
                return Err(Failure::Config(anyhow::anyhow!("no scored profiles at {}", file.display())));
            }
            Ok(ProfileSet::load(&file)?)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ProfileSet::merge(sets)?)
}

fn list(files: &[PathBuf]) {
    for f in files {
        println!("  {}", f.display());
    }
}
