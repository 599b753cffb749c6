//! `fsim`: experiment harness for the federated simulation engine.
//!
//! Exit codes: 0 on success, 1 on validation errors (bad flags, configs, or
//! input files), 2 on runtime failures.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fsim_cli::audio::read_audio_file;
use fsim_cli::config::{self, CentralConfig, GridConfig, RunConfig, TaskSource};
use fsim_cli::harness::{self, CellOutcome, CentralOptions};
use fsim_cli::manifest::{now_rfc3339, task_fingerprint, RunManifest};
use fsim_cli::report;
use fsim_core::data::{
    ingest_metadata, partition_by_uploader, uploader_histogram, SizeLaw, Split, SynthTaskSpec,
    Vocabulary,
};
use fsim_core::features::{clip_to_mel_patches, inherit_labels, patch_to_text, SAMPLE_RATE};
use fsim_core::metrics::{cohort_size, selection_probability};

#[derive(Parser)]
#[command(
    name = "fsim",
    version,
    about = "Deterministic federated-averaging experiment harness",
    after_help = "The FSIM_THREADS environment variable caps worker parallelism."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Partition a clip manifest into uploader clients and print roster stats
    Partition(PartitionArgs),
    /// Generate a synthetic federated task and export it
    Synth(SynthArgs),
    /// Extract labeled log-mel patches for the clips in a manifest
    Features(FeaturesArgs),
    /// Train a centralized baseline with early stopping
    TrainCentral(TrainCentralArgs),
    /// Run one federated configuration
    TrainFed(TrainFedArgs),
    /// Run a (C, E, seed) grid of federated configurations
    Grid(GridArgs),
    /// Regenerate report tables from saved records
    Report(ReportArgs),
    /// Client selection probability calculator
    Prob(ProbArgs),
}

#[derive(Args)]
struct PartitionArgs {
    /// Clip manifest (clip_id,uploader,labels,split,duration_s)
    #[arg(long)]
    manifest: PathBuf,
    /// Keep uploaders contributing at least this many train clips
    #[arg(long, default_value_t = 100)]
    min_clips: usize,
    /// Optional CSV of the resulting roster (client_id,n_k)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// JSON file holding a synthetic task spec (flags override it)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    clients: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    input_dim: Option<usize>,
    /// Power-law exponent for client sizes
    #[arg(long)]
    exponent: Option<f64>,
    #[arg(long)]
    min_size: Option<usize>,
    #[arg(long)]
    max_size: Option<usize>,
    /// Dirichlet concentration; small = strong label skew
    #[arg(long)]
    label_skew: Option<f64>,
    #[arg(long)]
    eval_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output FSIM1 dataset blob
    #[arg(long)]
    out: PathBuf,
    /// Also export the task in the clip-manifest format
    #[arg(long)]
    manifest_out: Option<PathBuf>,
}

#[derive(Args)]
struct FeaturesArgs {
    /// Clip manifest naming the clips and labels
    #[arg(long)]
    manifest: PathBuf,
    /// Directory holding <clip_id>.wav (PCM16 mono, 22,050 Hz) or <clip_id>.f64
    #[arg(long)]
    audio_dir: PathBuf,
    /// Output FSIM1 patches blob
    #[arg(long)]
    out: PathBuf,
    /// Optional text export of the first extracted patch
    #[arg(long)]
    dump_patch: Option<PathBuf>,
}

#[derive(Args)]
struct TrainCentralArgs {
    /// JSON centralized-training config
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Override: maximum epochs
    #[arg(long)]
    epochs: Option<u32>,
    /// Override: mini-batch size (B)
    #[arg(long)]
    b: Option<usize>,
    /// Override: early-stopping patience
    #[arg(long)]
    patience: Option<u32>,
    /// Override: seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainFedArgs {
    /// JSON run config (task, model, federation)
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Override: client fraction (C)
    #[arg(long)]
    c: Option<f64>,
    /// Override: local epochs (E)
    #[arg(long)]
    e: Option<u32>,
    /// Override: mini-batch size (B)
    #[arg(long)]
    b: Option<usize>,
    /// Override: communication rounds
    #[arg(long)]
    rounds: Option<u32>,
    /// Override: seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GridArgs {
    /// JSON grid config
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// One or more records.json files from previous runs
    #[arg(long, required = true, num_args = 1..)]
    records: Vec<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ProbArgs {
    /// Total number of clients (N)
    #[arg(long)]
    n: usize,
    /// Client fraction per round (C)
    #[arg(long)]
    c: f64,
    /// Communication rounds (R)
    #[arg(long)]
    rounds: u32,
}

/// Failure classified for the process exit code.
enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn validation(e: impl std::fmt::Display) -> Self {
        CliError::Validation(e.to_string())
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        match e {
            config::ConfigError::Task { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

type CliResult = Result<(), CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // help/version requests are successes, parse problems are
            // validation errors
            let _ = err.print();
            return if err.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };

    if let Some(threads) = std::env::var("FSIM_THREADS").ok().and_then(|v| v.parse::<usize>().ok())
    {
        if threads >= 1 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
        }
    }

    let result = match cli.command {
        Command::Partition(args) => cmd_partition(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Features(args) => cmd_features(args),
        Command::TrainCentral(args) => cmd_train_central(args),
        Command::TrainFed(args) => cmd_train_fed(args),
        Command::Grid(args) => cmd_grid(args),
        Command::Report(args) => cmd_report(args),
        Command::Prob(args) => cmd_prob(args),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", path.display())))
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn cmd_partition(args: PartitionArgs) -> CliResult {
    let clips = ingest_metadata(&args.manifest).map_err(CliError::validation)?;
    let train_clips = clips.iter().filter(|c| c.split == Split::Train).count();
    let val_clips = clips.iter().filter(|c| c.split == Split::Val).count();
    let test_clips = clips.len() - train_clips - val_clips;
    let hist = uploader_histogram(&clips);
    let clients = partition_by_uploader(&clips, args.min_clips);
    let retained: usize = clients.iter().map(|c| c.n_k()).sum();
    let share = if train_clips > 0 { 100.0 * retained as f64 / train_clips as f64 } else { 0.0 };

    println!("clips: {} (train {train_clips}, val {val_clips}, test {test_clips})", clips.len());
    println!("train uploaders: {}", hist.total_uploaders());
    println!(
        "uploader histogram: 1 clip: {} | 2-10: {} | 11-99: {} | >=100: {}",
        hist.single, hist.two_to_ten, hist.eleven_to_ninety_nine, hist.hundred_or_more
    );
    println!("clients with >= {} clips: {}", args.min_clips, clients.len());
    println!("retained train clips: {retained} ({share:.1}% of train split)");

    if let Some(out) = args.out {
        let mut csv = String::from("client_id,n_k\n");
        for client in &clients {
            csv.push_str(&format!("{},{}\n", client.client_id, client.n_k()));
        }
        write_file(&out, &csv)?;
        println!("roster written to {}", out.display());
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> CliResult {
    let mut spec = match &args.config {
        Some(path) => config::load_json::<SynthTaskSpec>(path)?,
        None => SynthTaskSpec {
            num_clients: 20,
            num_classes: 6,
            input_dim: 12,
            size_law: SizeLaw { exponent: 1.5, min_size: 20, max_size: 200 },
            label_skew: 0.1,
            eval_fraction: 0.2,
            seed: 0,
        },
    };
    if let Some(v) = args.clients {
        spec.num_clients = v;
    }
    if let Some(v) = args.classes {
        spec.num_classes = v;
    }
    if let Some(v) = args.input_dim {
        spec.input_dim = v;
    }
    if let Some(v) = args.exponent {
        spec.size_law.exponent = v;
    }
    if let Some(v) = args.min_size {
        spec.size_law.min_size = v;
    }
    if let Some(v) = args.max_size {
        spec.size_law.max_size = v;
    }
    if let Some(v) = args.label_skew {
        spec.label_skew = v;
    }
    if let Some(v) = args.eval_fraction {
        spec.eval_fraction = v;
    }
    if let Some(v) = args.seed {
        spec.seed = v;
    }

    let task = fsim_core::data::synth_federated_task(&spec).map_err(CliError::validation)?;
    fsim_core::io::save_dataset(&args.out, &task).map_err(CliError::runtime)?;
    println!(
        "task: {} clients, {} examples, {} classes, eval {} examples",
        task.clients.len(),
        task.total_examples(),
        spec.num_classes,
        task.eval.len()
    );
    println!("fingerprint: {}", task_fingerprint(&task));
    println!("dataset written to {}", args.out.display());

    if let Some(path) = args.manifest_out {
        let mut buf = Vec::new();
        fsim_core::data::write_synth_manifest(&task, &mut buf).map_err(CliError::runtime)?;
        std::fs::write(&path, buf)
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
        println!("manifest written to {}", path.display());
    }
    Ok(())
}

fn cmd_features(args: FeaturesArgs) -> CliResult {
    let clips = ingest_metadata(&args.manifest).map_err(CliError::validation)?;
    let vocab = Vocabulary::from_clips(&clips);
    let mut patches = Vec::new();
    for clip in &clips {
        let mut path = args.audio_dir.join(format!("{}.wav", clip.clip_id));
        if !path.exists() {
            path = args.audio_dir.join(format!("{}.f64", clip.clip_id));
        }
        if !path.exists() {
            return Err(CliError::validation(format!(
                "no audio for clip {} under {}",
                clip.clip_id,
                args.audio_dir.display()
            )));
        }
        let audio = read_audio_file(&path, SAMPLE_RATE).map_err(CliError::validation)?;
        let mels = clip_to_mel_patches(&audio).map_err(CliError::runtime)?;
        patches.extend(inherit_labels(clip, &vocab, mels).map_err(CliError::validation)?);
    }
    if let Some(dump) = &args.dump_patch {
        if let Some(first) = patches.first() {
            write_file(dump, &patch_to_text(&first.values))?;
        }
    }
    fsim_core::io::save_patches(&args.out, &vocab, &patches).map_err(CliError::runtime)?;
    println!(
        "{} patches from {} clips ({} classes) written to {}",
        patches.len(),
        clips.len(),
        vocab.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_train_central(args: TrainCentralArgs) -> CliResult {
    let mut config: CentralConfig = config::load_json(&args.config)?;
    if let Some(v) = args.epochs {
        config.epochs = v;
    }
    if let Some(v) = args.b {
        config.batch_size = v;
    }
    if let Some(v) = args.patience {
        config.patience = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    let started = now_rfc3339();
    let task = config.task.load()?;
    let opts = CentralOptions {
        epochs: config.epochs,
        batch_size: config.batch_size,
        optimizer: config.optimizer,
        patience: config.patience,
        seed: config.seed,
    };
    let run = harness::train_central(&config.model, &task.pooled_train(), &task.eval, &opts)
        .map_err(classify_harness)?;

    ensure_dir(&args.out_dir)?;
    let mut epochs_csv = String::from("epoch,train_loss,val_pr_auc\n");
    for e in &run.epochs {
        epochs_csv.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.val_pr_auc));
    }
    let epochs_path = args.out_dir.join("epochs.csv");
    write_file(&epochs_path, &epochs_csv)?;
    let checkpoint_path = args.out_dir.join("best.fsim");
    fsim_core::io::save_params(&checkpoint_path, &run.best_params).map_err(CliError::runtime)?;

    let manifest = RunManifest {
        run_id: format!("central-s{}", config.seed),
        config: serde_json::to_value(&config).expect("config serializes"),
        data_fingerprint: task_fingerprint(&task),
        started,
        finished: now_rfc3339(),
        artifacts: BTreeMap::from([
            ("epochs".to_string(), epochs_path.display().to_string()),
            ("checkpoint".to_string(), checkpoint_path.display().to_string()),
        ]),
    };
    manifest
        .save(&args.out_dir.join("manifest.json"))
        .map_err(|e| CliError::runtime(format!("cannot write manifest: {e}")))?;

    println!(
        "trained {} epochs; best val pr_auc {} at epoch {}",
        run.epochs.len(),
        run.best_pr_auc,
        run.best_epoch
    );
    Ok(())
}

fn classify_harness(err: harness::HarnessError) -> CliError {
    match err {
        harness::HarnessError::Invalid(_) => CliError::validation(err),
        _ => CliError::runtime(err),
    }
}

fn cmd_train_fed(args: TrainFedArgs) -> CliResult {
    let mut config: RunConfig = config::load_json(&args.config)?;
    if let Some(v) = args.c {
        config.federation.client_fraction = v;
    }
    if let Some(v) = args.e {
        config.federation.local_epochs = v;
    }
    if let Some(v) = args.b {
        config.federation.batch_size = v;
    }
    if let Some(v) = args.rounds {
        config.federation.rounds = v;
    }
    if let Some(v) = args.seed {
        config.federation.seed = v;
    }
    config.federation.validate().map_err(CliError::validation)?;

    let started = now_rfc3339();
    let task = config.task.load()?;
    let series = harness::run_cell(&config.model, &task.clients, &task.eval, &config.federation)
        .map_err(classify_harness)?;

    ensure_dir(&args.out_dir)?;
    let outcomes = vec![CellOutcome::Ok(series.clone())];
    let records_path = args.out_dir.join(report::RECORDS_FILE);
    report::save_records(&outcomes, &records_path).map_err(CliError::runtime)?;
    let runs = report::successful_runs(&outcomes);
    let (series_path, summary_path) =
        report::emit_report(&runs, &args.out_dir).map_err(CliError::runtime)?;
    let checkpoint_path = args.out_dir.join("final.fsim");
    // re-run is unnecessary: recover final params deterministically
    let rerun = fsim_core::federation::run_federation(
        &config.federation,
        &task.clients,
        &task.eval,
        &config.model,
    )
    .map_err(CliError::runtime)?;
    fsim_core::io::save_params(&checkpoint_path, &rerun.final_params)
        .map_err(CliError::runtime)?;

    let manifest = RunManifest {
        run_id: series.run_id.clone(),
        config: serde_json::to_value(&config).expect("config serializes"),
        data_fingerprint: task_fingerprint(&task),
        started,
        finished: now_rfc3339(),
        artifacts: BTreeMap::from([
            ("series".to_string(), series_path.display().to_string()),
            ("summary".to_string(), summary_path.display().to_string()),
            ("records".to_string(), records_path.display().to_string()),
            ("checkpoint".to_string(), checkpoint_path.display().to_string()),
        ]),
    };
    manifest
        .save(&args.out_dir.join("manifest.json"))
        .map_err(|e| CliError::runtime(format!("cannot write manifest: {e}")))?;

    println!(
        "run {}: {} rounds, max pr_auc {}, mean pr_auc {}",
        series.run_id,
        series.records.len(),
        series.max_pr_auc(),
        series.mean_pr_auc()
    );
    Ok(())
}

fn cmd_grid(args: GridArgs) -> CliResult {
    let grid: GridConfig = config::load_json(&args.config)?;
    grid.validate()?;
    let started = now_rfc3339();
    let task = grid.task.load()?;
    let outcomes = harness::grid_search(&grid, &task, &grid.model);

    ensure_dir(&args.out_dir)?;
    let records_path = args.out_dir.join(report::RECORDS_FILE);
    report::save_records(&outcomes, &records_path).map_err(CliError::runtime)?;
    let runs = report::successful_runs(&outcomes);
    let failed: Vec<(&str, &str)> = outcomes
        .iter()
        .filter_map(|o| match o {
            CellOutcome::Failed { run_id, error } => Some((run_id.as_str(), error.as_str())),
            CellOutcome::Ok(_) => None,
        })
        .collect();
    for (run_id, error) in &failed {
        eprintln!("cell {run_id} failed: {error}");
    }
    let mut artifacts = BTreeMap::from([(
        "records".to_string(),
        records_path.display().to_string(),
    )]);
    if !runs.is_empty() {
        let (series_path, summary_path) =
            report::emit_report(&runs, &args.out_dir).map_err(CliError::runtime)?;
        artifacts.insert("series".to_string(), series_path.display().to_string());
        artifacts.insert("summary".to_string(), summary_path.display().to_string());
    }
    if !failed.is_empty() {
        let mut failures = String::from("run_id,error\n");
        for (run_id, error) in &failed {
            failures.push_str(&format!("{run_id},{}\n", error.replace(',', ";")));
        }
        let failures_path = args.out_dir.join("failures.csv");
        write_file(&failures_path, &failures)?;
        artifacts.insert("failures".to_string(), failures_path.display().to_string());
    }

    let manifest = RunManifest {
        run_id: format!("grid-{}cells", outcomes.len()),
        config: serde_json::to_value(&grid).expect("config serializes"),
        data_fingerprint: task_fingerprint(&task),
        started,
        finished: now_rfc3339(),
        artifacts,
    };
    manifest
        .save(&args.out_dir.join("manifest.json"))
        .map_err(|e| CliError::runtime(format!("cannot write manifest: {e}")))?;

    println!("{} cells run, {} ok, {} failed", outcomes.len(), runs.len(), failed.len());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> CliResult {
    let mut outcomes = Vec::new();
    for path in &args.records {
        outcomes.extend(report::load_records(path).map_err(CliError::validation)?);
    }
    let runs = report::successful_runs(&outcomes);
    ensure_dir(&args.out_dir)?;
    let (series_path, summary_path) =
        report::emit_report(&runs, &args.out_dir).map_err(CliError::validation)?;
    println!("wrote {} and {}", series_path.display(), summary_path.display());
    Ok(())
}

fn cmd_prob(args: ProbArgs) -> CliResult {
    if args.n == 0 {
        return Err(CliError::Validation("N must be >= 1".into()));
    }
    if !(args.c > 0.0 && args.c <= 1.0) {
        return Err(CliError::Validation(format!("C = {} must lie in (0, 1]", args.c)));
    }
    if args.rounds == 0 {
        return Err(CliError::Validation("rounds must be >= 1".into()));
    }
    let m = cohort_size(args.n, args.c);
    let p = selection_probability(args.n, args.c, args.rounds);
    println!("cohort size m = {m} of N = {}; P(selected at least once in {} rounds) = {p}", args.n, args.rounds);
    Ok(())
}
