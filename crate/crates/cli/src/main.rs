use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pnp_csi::config::{self, KeyValues};
use pnp_csi::denoiser::train::{examples, train_with_progress};
use pnp_csi::experiment::{self, BenchConfig, ExperimentConfig, ExperimentOutput};
use pnp_csi::io::{load_sample_set, save_sample_set, DatasetPaths};

/// Plug-and-play CSI reconstruction with a learned angular-delay denoiser.
#[derive(Parser, Debug)]
#[command(name = "pnp-csi", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate train/val/test splits of synthetic channels
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Base path; writes <stem>.train/.val/.test.<ext>
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the denoiser on a generated dataset
    Train {
        /// Dataset base path used with gen-data
        #[arg(long)]
        data: PathBuf,
        /// Weights file to write
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Pilot-based channel estimation
    RunCe(RunArgs),
    /// Antenna extrapolation
    RunAe(RunArgs),
    /// CSI feedback reconstruction
    RunCf(RunArgs),
    /// All tasks and feedback settings from one config
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Pilot preset A|B|C|D or pattern file
    #[arg(long)]
    pattern: Option<String>,
    /// Antenna selection preset A|B or index file
    #[arg(long)]
    selection: Option<String>,
    /// Compression ratio, decimal or a/b
    #[arg(long)]
    cr: Option<String>,
    /// Quantizer bits or `none`
    #[arg(long)]
    bits: Option<String>,
    /// Comma-separated SNR points
    #[arg(long)]
    snr_db: Option<String>,
    #[arg(long)]
    denoiser: Option<String>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    return_best: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trace_dir: Option<PathBuf>,
}

fn load_kv(path: Option<&Path>) -> Result<KeyValues> {
    Ok(match path {
        Some(p) => KeyValues::load(p)?,
        None => KeyValues::default(),
    })
}

fn gen_data(config: Option<&Path>, out: &Path, seed: u64) -> Result<()> {
    let kv = load_kv(config)?;
    let cfg = config::dataset_config(&kv)?;
    kv.reject_unused()?;
    let ds = pnp_csi::gen_dataset(&cfg, seed)?;
    let paths = DatasetPaths::from_base(out);
    for (path, set) in [(&paths.train, &ds.train), (&paths.val, &ds.val), (&paths.test, &ds.test)] {
        save_sample_set(path, set).with_context(|| format!("writing {}", path.display()))?;
        eprintln!("wrote {} ({} samples)", path.display(), set.len());
    }
    Ok(())
}

fn train(data: &Path, out: &Path, config: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let mut kv = load_kv(config)?;
    if let Some(s) = seed {
        kv.set("seed", s.to_string());
    }
    let arch = config::architecture(&kv)?;
    let cfg = config::train_config(&kv)?;
    let limit: Option<usize> = kv.get("max_train")?;
    kv.reject_unused()?;
    let paths = DatasetPaths::from_base(data);
    let train_set = load_sample_set(&paths.train)?;
    let val_set = load_sample_set(&paths.val)?;
    let mut tr = examples(&train_set);
    if let Some(n) = limit {
        tr.truncate(n);
    }
    let va = examples(&val_set);
    eprintln!(
        "training {} parameters on {} samples ({} validation)",
        arch.param_count(),
        tr.len(),
        va.len()
    );
    let outcome = train_with_progress(&tr, &va, arch, &cfg, |s| {
        eprintln!(
            "epoch {:4}  train {:.5}  val {:.5}  lr {:.2e}",
            s.epoch, s.train_loss, s.val_loss, s.lr
        );
    })?;
    outcome.weights.save(out)?;
    eprintln!("best epoch {}; wrote {}", outcome.best_epoch, out.display());
    Ok(())
}

fn emit(out: &ExperimentOutput, to_file: bool) -> Result<()> {
    if let Some(h) = &out.weights_sha256 {
        eprintln!("weights sha256 {h}");
    }
    if !to_file {
        std::io::stdout().write_all(out.csv().as_bytes())?;
    }
    Ok(())
}

fn run(task: &str, args: &RunArgs) -> Result<()> {
    let mut kv = KeyValues::load(&args.config)?;
    if let Some(t) = kv.str("task") {
        if t != task {
            bail!("config is for task '{t}', command runs '{task}'");
        }
    }
    kv.set("task", task);
    let overrides = [
        ("pattern", args.pattern.clone()),
        ("selection", args.selection.clone()),
        ("cr", args.cr.clone()),
        ("bits", args.bits.clone()),
        ("snr_db", args.snr_db.clone()),
        ("denoiser", args.denoiser.clone()),
        ("iters", args.iters.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("out", args.out.as_ref().map(|p| p.display().to_string())),
        ("trace_dir", args.trace_dir.as_ref().map(|p| p.display().to_string())),
    ];
    for (k, v) in overrides {
        if let Some(v) = v {
            kv.set(k, v);
        }
    }
    if args.return_best {
        kv.set("return_best", "true");
    }
    let cfg = ExperimentConfig::from_kv(&kv)?;
    kv.reject_unused()?;
    let out = experiment::run_experiment(&cfg)?;
    emit(&out, cfg.out.is_some())
}

fn bench(config: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let mut kv = KeyValues::load(config)?;
    if let Some(s) = seed {
        kv.set("seed", s.to_string());
    }
    if let Some(o) = out {
        kv.set("out", o.display().to_string());
    }
    let cfg = BenchConfig::from_kv(&kv)?;
    kv.reject_unused()?;
    let result = experiment::run_bench(&cfg)?;
    emit(&result, cfg.base.out.is_some())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::GenData { config, out, seed } => gen_data(config.as_deref(), out, *seed),
        Command::Train {
            data,
            out,
            config,
            seed,
        } => train(data, out, config.as_deref(), *seed),
        Command::RunCe(a) => run("ce", a),
        Command::RunAe(a) => run("ae", a),
        Command::RunCf(a) => run("cf", a),
        Command::Bench { config, seed, out } => bench(config, *seed, out.as_deref()),
    }
}
