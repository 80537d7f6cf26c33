use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use teamalloc::datagen::{self, DatasetConfig};
use teamalloc::nn::{self, checkpoint, train::write_history_csv, TrainConfig};
use teamalloc::sim::{self, BenchConfig, EpisodeConfig};
use teamalloc::solver::{solve_one_step, SolveOptions};
use teamalloc::Instance;

#[derive(Debug, Parser, Serialize)]
#[command(name = "teamalloc", version, about = "Robot team reallocation: data, solver, policy and simulation")]
struct Cli {
    /// Root seed; every random choice derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "TEAMALLOC_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
enum Command {
    /// Generate a labeled dataset (or a single instance with --instance-only).
    Gen(GenArgs),
    /// Solve one reallocation step exactly and print the result as JSON.
    Solve(SolveArgs),
    /// Train a policy on a generated dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Run a policy episode on an instance.
    Infer(InferArgs),
    /// Exact vs policy runtime scaling.
    Bench(BenchArgs),
    /// Summarize a dataset directory, split file, checkpoint or instance.
    Inspect(InspectArgs),
}

#[derive(Debug, Args, Serialize)]
struct GenArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    teams_min: usize,
    #[arg(long, default_value_t = 7)]
    teams_max: usize,
    #[arg(long, default_value_t = 3)]
    robots_per_team_min: usize,
    #[arg(long, default_value_t = 5)]
    robots_per_team_max: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Per-sample labeling budget.
    #[arg(long, default_value_t = 10_000)]
    timeout_ms: u64,
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    test_fraction: f64,
    /// Write one unlabeled instance to `instance.json` instead of a dataset.
    #[arg(long)]
    instance_only: bool,
}

#[derive(Debug, Args, Serialize)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// 0 disables the timeout.
    #[arg(long, default_value_t = 10_000)]
    timeout_ms: u64,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    /// Dataset directory written by `gen`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    weight_decay: f64,
    #[arg(long, default_value_t = 0.1)]
    dropout: f64,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.15)]
    aux_weight: f64,
    #[arg(long, default_value_t = 1.25)]
    move_emphasis: f64,
    #[arg(long, default_value_t = 128)]
    hidden: usize,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// train, val or test.
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, default_value_t = 0.15)]
    aux_weight: f64,
    #[arg(long, default_value_t = 1.25)]
    move_emphasis: f64,
}

#[derive(Debug, Args, Serialize)]
struct InferArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 200)]
    max_steps: usize,
    /// Stop when total fire drops below this fraction of the initial total.
    #[arg(long, default_value_t = 1e-3)]
    fire_eps: f64,
}

#[derive(Debug, Args, Serialize)]
struct BenchArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [3, 4, 5, 6, 7])]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    robots_per_team: usize,
    #[arg(long, default_value_t = 60_000)]
    exact_timeout_ms: u64,
    /// Larger sizes run the policy only.
    #[arg(long, default_value_t = 7)]
    exact_max_teams: usize,
    #[arg(long, default_value_t = 200)]
    max_steps: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
}

#[derive(Debug, Args, Serialize)]
struct InspectArgs {
    path: PathBuf,
}

/// Bad input from the user, as opposed to a failure inside the tool.
#[derive(Debug)]
struct UserError(String);

impl std::fmt::Display for UserError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UserError {}

fn user(msg: impl Into<String>) -> anyhow::Error {
    UserError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UserError>().is_some() {
        return 1;
    }
    match err.downcast_ref::<teamalloc::Error>() {
        Some(teamalloc::Error::NonFiniteLoss { .. }) | None => 2,
        Some(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn threads(cli: &Cli) -> usize {
    cli.threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

fn timeout(ms: u64) -> Option<Duration> {
    (ms > 0).then(|| Duration::from_millis(ms))
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| user(format!("{}: {e}", path.display())))
}

/// Prints to stdout, treating a closed pipe as success.
fn emit(text: &str) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn emit_json(value: &impl Serialize) -> anyhow::Result<()> {
    emit(&(serde_json::to_string_pretty(value)? + "\n"))
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let threads = threads(cli);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| anyhow!("thread pool: {e}"))?;
    std::fs::create_dir_all(&cli.out_dir)
        .map_err(|e| user(format!("{}: {e}", cli.out_dir.display())))?;
    write_json(
        &cli.out_dir.join("run-meta.json"),
        &json!({
            "tool": env!("CARGO_BIN_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "argv": std::env::args().collect::<Vec<_>>(),
            "seed": cli.seed,
            "threads": threads,
            "config": cli,
        }),
    )?;
    match &cli.command {
        Command::Gen(a) => gen(cli, a, threads),
        Command::Solve(a) => solve(cli, a, threads),
        Command::Train(a) => train(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::Infer(a) => infer(cli, a),
        Command::Bench(a) => bench(cli, a),
        Command::Inspect(a) => inspect(a),
    }
}

fn gen(cli: &Cli, a: &GenArgs, threads: usize) -> anyhow::Result<()> {
    if a.instance_only {
        let inst = datagen::sample_instance(
            cli.seed,
            a.teams_min..=a.teams_max,
            a.robots_per_team_min..=a.robots_per_team_max,
        )?;
        let path = cli.out_dir.join("instance.json");
        inst.save(&path)?;
        emit(&format!("{}\n", path.display()))?;
        return Ok(());
    }
    let config = DatasetConfig {
        num_samples: a.n,
        teams_min: a.teams_min,
        teams_max: a.teams_max,
        robots_per_team_min: a.robots_per_team_min,
        robots_per_team_max: a.robots_per_team_max,
        seed: cli.seed,
        lambda: a.lambda,
        alpha: a.alpha,
        timeout: Duration::from_millis(a.timeout_ms),
        val_fraction: a.val_fraction,
        test_fraction: a.test_fraction,
        threads,
        ..DatasetConfig::default()
    };
    let manifest = datagen::generate_dataset(&config, &cli.out_dir)?;
    log::info!(
        "wrote {} samples ({} train, {} val, {} test), move fraction {:.4}",
        manifest.num_samples,
        manifest.splits.train,
        manifest.splits.val,
        manifest.splits.test,
        manifest.move_fraction
    );
    Ok(())
}

fn load_instance(path: &Path) -> anyhow::Result<Instance> {
    Ok(Instance::load(path)?)
}

fn solve(cli: &Cli, a: &SolveArgs, threads: usize) -> anyhow::Result<()> {
    let inst = load_instance(&a.instance)?;
    let opts = SolveOptions {
        lambda: a.lambda,
        alpha: a.alpha,
        timeout: timeout(a.timeout_ms),
        threads,
    };
    let res = solve_one_step(
        &inst.problem,
        &inst.assignment,
        &inst.oracle(),
        &inst.hamilton_mask(),
        &opts,
    )?;
    write_json(&cli.out_dir.join("solve.json"), &res)?;
    emit_json(&res)?;
    Ok(())
}

fn train(cli: &Cli, a: &TrainArgs) -> anyhow::Result<()> {
    let ds = datagen::read_dataset(&a.data)?;
    if ds.train.is_empty() {
        return Err(user(format!("{}: training split is empty", a.data.display())));
    }
    let config = TrainConfig {
        epochs: a.epochs,
        lr: a.lr,
        weight_decay: a.weight_decay,
        dropout: a.dropout,
        batch_size: a.batch_size,
        aux_weight: a.aux_weight,
        move_emphasis: a.move_emphasis,
        seed: cli.seed,
        hidden: a.hidden,
    };
    let out = nn::train(&ds.train, &ds.val, &ds.manifest.normalization, &config)?;
    checkpoint::save(&out.policy, &cli.out_dir.join("checkpoint.json"))?;
    write_history_csv(&out.history, &cli.out_dir.join("history.csv"))?;
    let test = nn::evaluate(&out.policy, &ds.test, &config.loss_weights())?;
    let summary = json!({
        "best_epoch": out.best_epoch,
        "val": out.history.get(out.best_epoch.saturating_sub(1)).map(|h| h.val),
        "test": test,
        "all_stay_baseline": 1.0 - ds.manifest.move_fraction,
        "config": config,
    });
    write_json(&cli.out_dir.join("train-summary.json"), &summary)?;
    emit_json(&summary)?;
    Ok(())
}

fn eval(cli: &Cli, a: &EvalArgs) -> anyhow::Result<()> {
    let policy = checkpoint::load(&a.checkpoint)?;
    let ds = datagen::read_dataset(&a.data)?;
    let samples = match a.split.as_str() {
        "train" => &ds.train,
        "val" => &ds.val,
        "test" => &ds.test,
        other => return Err(user(format!("unknown split {other:?}; expected train, val or test"))),
    };
    let weights = nn::policy::LossWeights {
        aux_weight: a.aux_weight,
        move_emphasis: a.move_emphasis,
    };
    let metrics = nn::evaluate(&policy, samples, &weights)?;
    write_json(&cli.out_dir.join("eval.json"), &metrics)?;
    emit_json(&metrics)?;
    Ok(())
}

fn infer(cli: &Cli, a: &InferArgs) -> anyhow::Result<()> {
    let policy = checkpoint::load(&a.checkpoint)?;
    let mut inst = load_instance(&a.instance)?;
    let config = EpisodeConfig {
        max_steps: a.max_steps,
        fire_epsilon: a.fire_eps,
        ..EpisodeConfig::default()
    };
    let log = sim::run_episode(&mut inst, &policy, &config)?;
    write_json(&cli.out_dir.join("episode.json"), &log)?;
    log.write_fire_csv(&cli.out_dir.join("fire.csv"))?;
    log::info!(
        "{} steps, terminal {:?}, fire {:.4} -> {:.4}",
        log.steps.len(),
        log.terminal,
        log.initial_fire.iter().sum::<f64>(),
        inst.mission.total_fire_all()
    );
    Ok(())
}

fn bench(cli: &Cli, a: &BenchArgs) -> anyhow::Result<()> {
    if a.sizes.is_empty() || a.sizes.contains(&0) || a.robots_per_team == 0 {
        return Err(user("--sizes and --robots-per-team must be positive"));
    }
    let policy = checkpoint::load(&a.checkpoint)?;
    let config = BenchConfig {
        sizes: a.sizes.clone(),
        robots_per_team: a.robots_per_team,
        exact_timeout: Duration::from_millis(a.exact_timeout_ms),
        exact_max_teams: a.exact_max_teams,
        lambda: a.lambda,
        alpha: a.alpha,
        episode: EpisodeConfig {
            max_steps: a.max_steps,
            ..EpisodeConfig::default()
        },
        seed: cli.seed,
    };
    let report = sim::run_bench(&config, &policy)?;
    sim::write_bench_csv(&report.rows, &cli.out_dir.join("bench.csv"))?;
    write_json(&cli.out_dir.join("bench.json"), &report)?;
    emit(&sim::bench_csv(&report.rows))?;
    Ok(())
}

fn inspect(a: &InspectArgs) -> anyhow::Result<()> {
    let p = &a.path;
    let summary = if p.is_dir() {
        let m = datagen::read_manifest(&p.join("manifest.json"))?;
        json!({
            "kind": "dataset",
            "num_samples": m.num_samples,
            "splits": m.splits,
            "team_histogram": m.team_histogram,
            "robot_histogram": m.robot_histogram,
            "move_fraction": m.move_fraction,
            "skipped": m.skipped,
            "schema_version": m.schema.version,
        })
    } else if p.extension().is_some_and(|e| e == "jsonl") {
        let (header, samples) = datagen::read_split(p)?;
        let moves: usize = samples.iter().map(|s| s.move_count()).sum();
        let robots: usize = samples.iter().map(|s| s.label.len()).sum();
        json!({
            "kind": "split",
            "header": header,
            "samples": samples.len(),
            "robots": robots,
            "moves": moves,
        })
    } else {
        let text = std::fs::read_to_string(p).map_err(|e| user(format!("{}: {e}", p.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| user(format!("{}: not JSON: {e}", p.display())))?;
        if value.get("format").and_then(|f| f.as_str()) == Some(checkpoint::CHECKPOINT_FORMAT) {
            let policy = checkpoint::load(p)?;
            json!({
                "kind": "checkpoint",
                "config": policy.net.config,
                "parameters": policy.net.num_parameters(),
                "schema": policy.schema,
                "normalization_source": policy.normalization.source,
            })
        } else {
            let inst = load_instance(p)?;
            json!({
                "kind": "instance",
                "teams": inst.num_teams(),
                "robots": inst.num_robots(),
                "team_sizes": inst.assignment.team_sizes(inst.num_teams()),
                "total_fire": inst.mission.total_fire_all(),
            })
        }
    };
    emit_json(&summary)?;
    Ok(())
}
