use clap::{Args, Parser, Subcommand, ValueEnum};
use cosmoforge::comm::CommEventLog;
use cosmoforge::jrl::{self, JrlError, SymbolMapping};
use cosmoforge::noise::{format_matrix, parse_matrix, Normalizer};
use cosmoforge::pipeline::{
    classify_dataset, estimate_noise, events_path, simulate_comms, synthesize, write_outputs, NoiseConfig, PipelineConfig,
    PipelineError, LOOP_CLOSURE_MODEL, ODOMETRY_MODEL,
};
use cosmoforge::stats::{evaluate, parse_estimate, summarize};
use cosmoforge::sync::{read_trial, SyncError};
use cosmoforge::frontend::FrontendParams;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_VALIDATION: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "cosmoforge", version, about = "Multi-robot C-SLAM benchmark dataset synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write a dataset plus its event log.
    Synthesize(SynthesizeArgs),
    /// Run only synchronization, keyframing and the channel simulation.
    SimulateComms(SimulateArgs),
    /// Estimate odometry and loop-closure noise models from one trial.
    EstimateNoise(EstimateArgs),
    /// Relabel loop-closure outliers of a dataset.
    Classify(ClassifyArgs),
    /// Summarize a dataset, optionally scoring an estimate against it.
    Stats(StatsArgs),
    /// Check every dataset invariant.
    Validate(ValidateArgs),
    /// Partition a centralized factor graph into a per-robot dataset.
    Convert(ConvertArgs),
}

#[derive(Clone, Copy, ValueEnum, Default)]
enum Format {
    #[default]
    Table,
    Json,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// wifi, pro-radio or custom:<path>.
    #[arg(long = "comm-model")]
    comm_model: Option<String>,
}

impl PipelineArgs {
    fn load(&self) -> Result<PipelineConfig, CliError> {
        let mut cfg = PipelineConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(m) = &self.comm_model {
            // Paths given on the command line are relative to the working directory.
            cfg.comm_model = match m.strip_prefix("custom:") {
                Some(p) => format!("custom:{}", absolute(Path::new(p)).display()),
                None => m.clone(),
            };
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthesizeArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Dataset path; the event log goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Event log CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args)]
struct EstimateArgs {
    /// Stamped-pose trial file.
    #[arg(long)]
    trial: PathBuf,
    /// Pipeline config supplying front-end parameters and thresholds.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "trans-max")]
    trans_max: Option<f64>,
    #[arg(long = "rot-max")]
    rot_max: Option<f64>,
    /// Divide by |M| − 1 instead of |M|.
    #[arg(long)]
    unbiased: bool,
    /// Output directory for odometry.txt and loop_closure.txt.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args)]
struct ClassifyArgs {
    dataset: PathBuf,
    /// Loop-closure noise matrix; the dataset's own model when absent.
    #[arg(long)]
    noise: Option<PathBuf>,
    /// Odometry noise matrix, used with --classify-odometry.
    #[arg(long = "odometry-noise")]
    odometry_noise: Option<PathBuf>,
    #[arg(long = "classify-odometry")]
    classify_odometry: bool,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args)]
struct StatsArgs {
    dataset: PathBuf,
    /// Event log to include communication counts.
    #[arg(long)]
    events: Option<PathBuf>,
    /// Estimate file (`robot index stamp tx ty tz qw qx qy qz`) to score.
    #[arg(long)]
    estimate: Option<PathBuf>,
    /// Rigidly align the estimate before scoring.
    #[arg(long)]
    align: bool,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args)]
struct ValidateArgs {
    dataset: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args)]
struct ConvertArgs {
    /// Global graph text file.
    graph: PathBuf,
    /// Key tag to robot mapping, e.g. `a=alpha,b=bravo`.
    #[arg(long)]
    robots: String,
    #[arg(long, default_value = "converted")]
    name: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Debug)]
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
    fn io(path: &Path, e: std::io::Error) -> Self {
        Self {
            code: EXIT_IO,
            message: format!("{}: {e}", path.display()),
        }
    }
    fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }
}

fn jrl_code(e: &JrlError) -> u8 {
    match e {
        JrlError::Io { .. } => EXIT_IO,
        _ => EXIT_VALIDATION,
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let code = match &e {
            PipelineError::Io { .. } | PipelineError::Sync(SyncError::Io { .. }) => EXIT_IO,
            PipelineError::Config(_) => EXIT_USAGE,
            PipelineError::Jrl(j) => jrl_code(j),
            _ => EXIT_VALIDATION,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<JrlError> for CliError {
    fn from(e: JrlError) -> Self {
        Self {
            code: jrl_code(&e),
            message: e.to_string(),
        }
    }
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes")
}

fn cmd_synthesize(args: SynthesizeArgs) -> Result<(), CliError> {
    let cfg = args.pipeline.load()?;
    let out = match (&args.out, &cfg.output) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => cfg.resolve(p),
        (None, None) => PathBuf::from(format!("{}.json", cfg.name)),
    };
    let result = synthesize(&cfg)?;
    let events = write_outputs(&result, &out)?;
    match args.format {
        Format::Table => {
            print!("{}", result.summary.to_table());
            println!("wrote {} and {}", out.display(), events.display());
        }
        Format::Json => println!("{}", to_json(&result.summary)),
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let cfg = args.pipeline.load()?;
    let trials = cfg.load_trials()?;
    let pass = simulate_comms(&cfg, &trials)?;
    let csv = pass.events.to_csv();
    match &args.out {
        None => print!("{csv}"),
        Some(p) => {
            write_text(p, &csv)?;
            let stats = pass.events.stats();
            match args.format {
                Format::Table => println!(
                    "initialized {}  delivered {}  failed {}  bytes {}",
                    stats.initialized, stats.delivered, stats.failed, stats.bytes_delivered
                ),
                Format::Json => println!("{}", to_json(&stats)),
            }
        }
    }
    Ok(())
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), CliError> {
    let (params, mut noise, config_seed) = match &args.config {
        Some(p) => {
            let cfg = PipelineConfig::load(p)?;
            (cfg.frontend, cfg.noise, Some(cfg.seed))
        }
        None => (FrontendParams::default(), NoiseConfig::default(), None),
    };
    let seed = args
        .seed
        .or(config_seed)
        .ok_or_else(|| CliError::usage("a seed is required: pass --seed or --config"))?;
    if let Some(v) = args.trans_max {
        noise.trans_max = v;
    }
    if let Some(v) = args.rot_max {
        noise.rot_max = v;
    }
    if args.unbiased {
        noise.normalizer = Normalizer::CountMinusOne;
    }
    let robot = args
        .trial
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "robot".into());
    let trial = read_trial(&robot, &args.trial).map_err(|e| match e {
        SyncError::Io { .. } => CliError {
            code: EXIT_IO,
            message: e.to_string(),
        },
        other => CliError::validation(other.to_string()),
    })?;
    let models = estimate_noise(&trial, &params, &noise, seed)?;
    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let odom_path = args.out.join("odometry.txt");
    let lc_path = args.out.join("loop_closure.txt");
    write_text(&odom_path, &format_matrix(&models.odometry.covariance))?;
    write_text(&lc_path, &format_matrix(&models.loop_closure.covariance))?;
    match args.format {
        Format::Table => {
            println!("odometry      {} samples -> {}", models.odometry.sample_count, odom_path.display());
            println!("loop_closure  {} samples -> {}", models.loop_closure.sample_count, lc_path.display());
        }
        Format::Json => println!(
            "{}",
            to_json(&serde_json::json!({
                ODOMETRY_MODEL: models.odometry,
                LOOP_CLOSURE_MODEL: models.loop_closure,
            }))
        ),
    }
    Ok(())
}

fn read_matrix(path: &Path) -> Result<cosmoforge::Covariance6, CliError> {
    parse_matrix(&read_text(path)?).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn cmd_classify(args: ClassifyArgs) -> Result<(), CliError> {
    let mut dataset = jrl::read(&args.dataset)?;
    let model = |file: &Option<PathBuf>, name: &str| -> Result<cosmoforge::Covariance6, CliError> {
        match file {
            Some(p) => read_matrix(p),
            None => dataset
                .noise_models
                .get(name)
                .map(|m| m.covariance)
                .ok_or_else(|| CliError::usage(format!("dataset has no `{name}` noise model; pass a matrix file"))),
        }
    };
    let lc = model(&args.noise, LOOP_CLOSURE_MODEL)?;
    let odom = if args.classify_odometry {
        Some(model(&args.odometry_noise, ODOMETRY_MODEL)?)
    } else {
        None
    };
    if !(args.confidence > 0.0 && args.confidence < 1.0) {
        return Err(CliError::usage("--confidence must lie in (0, 1)"));
    }
    let n = classify_dataset(&mut dataset, &lc, odom.as_ref(), args.confidence)
        .map_err(|e| CliError::validation(e.to_string()))?;
    jrl::write(&dataset, &args.out)?;
    let summary = summarize(&dataset, None);
    match args.format {
        Format::Table => {
            println!("labeled {n} outliers");
            println!("LC   {}", summary.lc.display());
            println!("IRLC {}", summary.irlc.display());
        }
        Format::Json => println!("{}", to_json(&summary)),
    }
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<(), CliError> {
    let dataset = jrl::read(&args.dataset)?;
    let log = match &args.events {
        Some(p) => Some(CommEventLog::from_csv(&read_text(p)?).map_err(|e| CliError::validation(format!("{}: {e}", p.display())))?),
        None => {
            let default = events_path(&args.dataset);
            match fs::read_to_string(&default) {
                Ok(text) => CommEventLog::from_csv(&text).ok(),
                Err(_) => None,
            }
        }
    };
    let summary = summarize(&dataset, log.as_ref());
    let metrics = match &args.estimate {
        Some(p) => {
            let est = parse_estimate(&read_text(p)?).map_err(|e| CliError::validation(format!("{}: {e}", p.display())))?;
            Some(evaluate(&est, &dataset, args.align).map_err(|e| CliError::validation(e.to_string()))?)
        }
        None => None,
    };
    match args.format {
        Format::Table => {
            print!("{}", summary.to_table());
            if let Some(m) = &metrics {
                println!();
                print!("{}", m.to_table());
            }
        }
        Format::Json => {
            let mut v = serde_json::json!({ "summary": summary });
            if let Some(m) = &metrics {
                v["metrics"] = serde_json::to_value(m).expect("metrics serialize");
            }
            println!("{}", to_json(&v));
        }
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), CliError> {
    let dataset = jrl::read_unchecked(&args.dataset)?;
    let violations = dataset.validate();
    match args.format {
        Format::Table => {
            for v in &violations {
                println!("{v}");
            }
            if violations.is_empty() {
                println!("{}: ok", args.dataset.display());
            }
        }
        Format::Json => println!("{}", to_json(&violations)),
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(CliError::validation(format!(
            "{}: {} invariant violation(s)",
            args.dataset.display(),
            violations.len()
        )))
    }
}

fn cmd_convert(args: ConvertArgs) -> Result<(), CliError> {
    let mapping = SymbolMapping::parse(&args.robots).map_err(CliError::usage)?;
    let text = read_text(&args.graph)?;
    let input_err = |e: jrl::PartitionError| CliError::validation(format!("{}: {e}", args.graph.display()));
    let (entries, poses) = jrl::parse_global_graph(&text).map_err(input_err)?;
    let reference = if poses.is_empty() {
        None
    } else {
        Some(jrl::reference_from_poses(&poses, &mapping).map_err(input_err)?)
    };
    let mut dataset = jrl::partition_global_graph(&args.name, &entries, &mapping, reference.as_ref()).map_err(input_err)?;
    dataset
        .metadata
        .extra
        .insert("converted_from".into(), args.graph.display().to_string().into());
    jrl::write(&dataset, &args.out)?;
    let summary = summarize(&dataset, None);
    match args.format {
        Format::Table => print!("{}", summary.to_table()),
        Format::Json => println!("{}", to_json(&summary)),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synthesize(a) => cmd_synthesize(a),
        Command::SimulateComms(a) => cmd_simulate(a),
        Command::EstimateNoise(a) => cmd_estimate(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Convert(a) => cmd_convert(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
