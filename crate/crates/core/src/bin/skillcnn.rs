use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use skillcnn::cam::{compute_trial_cam, export_cam_csv, export_trajectory_svg};
use skillcnn::data::synth::{synth_generate, SynthConfig};
use skillcnn::data::{
    canonical_grouping, default_grouping, parse_kinematics, ColumnMap, Manifest, Skill, Task, Trial,
};
use skillcnn::gradcheck::{run_suite, Coverage, Fault, FD_TOLERANCE, MAX_CHECK_LEN};
use skillcnn::metrics::{aggregate_runs, format_report_json, format_report_tsv};
use skillcnn::model::{ChannelGrouping, TrainedModel};
use skillcnn::nn::Mts;
use skillcnn::training::{format_predictions, run_loso, train, TrainConfig};
use skillcnn::{Error, Result};

#[derive(Parser)]
#[command(
    name = "skillcnn",
    version,
    about = "Surgical skill classification from kinematics"
)]
struct Cli {
    /// Log progress to stderr
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model on every trial of a task
    Train(TrainArgs),
    /// Leave-one-super-trial-out evaluation
    Loso(LosoArgs),
    /// Class activation map of one trial
    Cam(CamArgs),
    /// Write a synthetic dataset
    Synth(SynthArgs),
    /// Finite-difference check of every gradient
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Column map JSON; defaults to the JIGSAWS layout
    #[arg(long)]
    columns: Option<PathBuf>,
    /// Restrict to one task (Suturing, Needle_Passing, Knot_Tying)
    #[arg(long)]
    task: Option<Task>,
}

#[derive(Args)]
struct TrainFlags {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 0.2)]
    val_fraction: f64,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 1e-5)]
    l2: f64,
    /// Feed raw kinematics instead of z-scored channels
    #[arg(long)]
    no_normalize: bool,
}

impl TrainFlags {
    fn config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            l2_lambda: self.l2,
            val_fraction: self.val_fraction,
            seed: self.seed,
            normalize: !self.no_normalize,
            ..TrainConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct LosoArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    train: TrainFlags,
    /// Repetitions with seeds seed..seed+runs-1
    #[arg(long, default_value_t = 1)]
    runs: usize,
    /// Worker threads; 1 runs folds sequentially
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CamArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Kinematics file of the trial
    #[arg(long)]
    trial: PathBuf,
    /// Class to map (N, I or E); defaults to the predicted class
    #[arg(long)]
    class: Option<Skill>,
    /// Two input channels for the trajectory plot, e.g. 0,1
    #[arg(long, value_delimiter = ',', num_args = 2)]
    channels: Option<Vec<usize>>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 6)]
    subjects: usize,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long, default_value_t = 300)]
    min_len: usize,
    #[arg(long, default_value_t = 600)]
    max_len: usize,
    #[arg(long, default_value = "synth")]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    instances: usize,
    /// Longest input length drawn
    #[arg(long, default_value_t = 12)]
    len: usize,
    /// Perturb only this many coordinates per tensor
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long)]
    columns: Option<PathBuf>,
    #[arg(long, hide = true)]
    inject_fault: Option<String>,
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Timestamps live only here so every other output is reproducible.
fn write_metadata(dir: &Path, command: &str, started: u64) -> Result<()> {
    let meta = json!({
        "command": command,
        "args": std::env::args().skip(1).collect::<Vec<_>>(),
        "version": env!("CARGO_PKG_VERSION"),
        "started_unix_s": started,
        "finished_unix_s": now_secs(),
    });
    write(
        &dir.join("run_metadata.json"),
        &serde_json::to_string_pretty(&meta).expect("metadata serializes"),
    )
}

fn grouping(columns: Option<&Path>) -> Result<ChannelGrouping> {
    match columns {
        Some(p) => canonical_grouping(&ColumnMap::load(p)?),
        None => Ok(default_grouping()),
    }
}

fn load_data(args: &DataArgs) -> Result<(ChannelGrouping, Vec<Trial>)> {
    let mut manifest = Manifest::load(&args.manifest)?;
    if let Some(task) = args.task {
        manifest = manifest.filter_task(task);
    }
    if manifest.entries.is_empty() {
        return Err(Error::EmptyInput("no manifest entries match".into()));
    }
    Ok((grouping(args.columns.as_deref())?, manifest.load_trials()?))
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let started = now_secs();
    let config = args.train.config()?;
    let (grouping, trials) = load_data(&args.data)?;
    let first = trials[0].task;
    if trials.iter().any(|t| t.task != first) {
        return Err(Error::Config(
            "manifest holds several tasks; select one with --task".into(),
        ));
    }
    create_dir(&args.out)?;
    let (model, mut report) = train(&grouping, &trials, &config)?;
    let ckpt = args.out.join("model.json");
    model.save(&ckpt)?;
    report.checkpoint = Some("model.json".into());
    write(
        &args.out.join("train_report.json"),
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    write_metadata(&args.out, "train", started)?;
    println!(
        "trained on {} trials; best epoch {} (val loss {:.4}); wrote {}",
        report.fit_trials.len(),
        report.best_epoch,
        report.best_val_loss,
        ckpt.display()
    );
    Ok(())
}

fn cmd_loso(args: &LosoArgs) -> Result<()> {
    let started = now_secs();
    let config = args.train.config()?;
    if args.threads == Some(0) {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    let (grouping, trials) = load_data(&args.data)?;
    create_dir(&args.out)?;
    let result = run_loso(&trials, &grouping, &config, args.runs, args.threads)?;
    write(
        &args.out.join("predictions.tsv"),
        &format_predictions(&result.rows),
    )?;
    let summaries = aggregate_runs(&result.rows)?;
    let tsv = format_report_tsv(&summaries);
    write(&args.out.join("metrics.tsv"), &tsv)?;
    write(
        &args.out.join("metrics.json"),
        &format_report_json(&summaries),
    )?;
    write_metadata(&args.out, "loso", started)?;
    print!("{tsv}");
    Ok(())
}

fn cmd_cam(args: &CamArgs) -> Result<()> {
    let started = now_secs();
    let model = TrainedModel::load(&args.checkpoint)?;
    let series: Mts<f32> = parse_kinematics(&args.trial)?;
    let stem = args
        .trial
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trial".into());
    let channels = match &args.channels {
        Some(c) => (c[0], c[1]),
        None => {
            let xyz = &model
                .net
                .grouping
                .sub_cluster("ML", "xyz")
                .ok_or_else(|| Error::Config("grouping has no ML xyz sub-cluster".into()))?
                .channels;
            (xyz[0], xyz[1])
        }
    };
    // task and skill are unknown for a bare file; only the series matters here
    let trial = Trial {
        subject: stem.clone(),
        task: Task::Suturing,
        trial_index: 0,
        skill: Skill::Novice,
        series,
    };
    let mut map = compute_trial_cam(&model, &trial)?;
    map.trial = Some(stem.clone());
    let class = args.class.unwrap_or(map.predicted);
    create_dir(&args.out)?;
    let csv = args.out.join(format!("{stem}_cam.csv"));
    let svg = args.out.join(format!("{stem}_cam_{class}.svg"));
    export_cam_csv(&map, &csv)?;
    export_trajectory_svg(&trial.series, &map, class.index(), channels, &svg)?;
    write_metadata(&args.out, "cam", started)?;
    println!(
        "predicted {}; wrote {} and {}",
        map.predicted,
        csv.display(),
        svg.display()
    );
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let started = now_secs();
    let cfg = SynthConfig {
        seed: args.seed,
        n_subjects: args.subjects,
        trials_per_subject: args.trials,
        min_len: args.min_len,
        max_len: args.max_len,
    };
    let ds = synth_generate(&cfg)?;
    create_dir(&args.out)?;
    let manifest = ds.write_to(&args.out)?;
    let mut windows = String::from("subject\ttrial_index\tstart\tlen\tcycles_per_100_frames\n");
    for (t, inj) in ds.trials.iter().zip(&ds.injections) {
        windows.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            t.subject, t.trial_index, inj.start, inj.len, inj.cycles_per_100_frames
        ));
    }
    write(&args.out.join("injections.tsv"), &windows)?;
    write_metadata(&args.out, "synth", started)?;
    println!(
        "wrote {} trials; manifest {}",
        ds.trials.len(),
        manifest.display()
    );
    Ok(())
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<bool> {
    if args.len == 0 || args.len > MAX_CHECK_LEN {
        return Err(Error::Config(format!(
            "--len must be in 1..={MAX_CHECK_LEN}"
        )));
    }
    let fault = args.inject_fault.as_ref().map(|prefix| Fault {
        tensor_prefix: prefix.clone(),
        offset: 1e-2,
    });
    let coverage = args.sample.map_or(Coverage::All, Coverage::Sample);
    let report = run_suite(
        &grouping(args.columns.as_deref())?,
        args.instances,
        args.len,
        args.seed,
        coverage,
        fault.as_ref(),
    )?;
    print!("{}{}", report.layers, report.model);
    let ok = report.passed(FD_TOLERANCE);
    for t in report
        .layers
        .failing(FD_TOLERANCE)
        .chain(report.model.failing(FD_TOLERANCE))
    {
        println!(
            "FAIL {}: max relative error {:.3e} at index {:?}",
            t.name, t.max_rel_error, t.worst_index
        );
    }
    println!(
        "{}: max relative error {:.3e} (tolerance {:.0e})",
        if ok { "PASS" } else { "FAIL" },
        report.max_rel_error(),
        FD_TOLERANCE
    );
    Ok(ok)
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Parse { .. } | Error::Io { .. } | Error::Json { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let outcome = match &cli.command {
        Command::Train(a) => cmd_train(a).map(|_| true),
        Command::Loso(a) => cmd_loso(a).map(|_| true),
        Command::Cam(a) => cmd_cam(a).map(|_| true),
        Command::Synth(a) => cmd_synth(a).map(|_| true),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.code());
            ExitCode::from(exit_code(&e))
        }
    }
}
