use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use terragym::env::write_trace_jsonl;
use terragym::harness::{
    ablate, checkpoint_env_config, evaluate, replay, run_train, GreedyPolicy, HarnessError, RunConfig, Variant,
    VARIANTS,
};
use terragym::neuralnet::Checkpoint;
use terragym::terrain::{generate_with, io as hf_io, GridGeometry, TaskSpec, TerrainType};

#[derive(Parser)]
#[command(name = "terragym", version, about = "Multi-task locomotion learning over procedural terrain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one terrain and write it as an HF1 heightfield file.
    GenTerrain {
        #[arg(long = "type")]
        terrain: TerrainType,
        /// `name=value` or `name=low:high`; repeat for every parameter.
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
        #[arg(long, default_value_t = 64)]
        rows: usize,
        #[arg(long, default_value_t = 64)]
        cols: usize,
        /// Cell edge length in meters.
        #[arg(long, default_value_t = 0.25)]
        cell: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a policy; writes config.toml, metrics.jsonl and checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `out_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Overrides `seed` in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Greedy evaluation of a checkpoint on an eval suite.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Run config whose `[[eval]]` cells and episode settings are used;
        /// defaults apply when omitted.
        #[arg(long)]
        suite: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-episode CSV output.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Train the full, reactive, blind and sequential variants and compare
    /// them on the eval suite.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        /// Eval seed; training uses the config seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Subset of variants, comma separated.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<VariantArg>,
    },
    /// Run one greedy episode and dump its trace as JSON lines.
    Replay {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "type")]
        terrain: TerrainType,
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the default run config.
    DefaultConfig,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Binary,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Full,
    Reactive,
    Blind,
    Sequential,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Full => Variant::Full,
            VariantArg::Reactive => Variant::Reactive,
            VariantArg::Blind => Variant::Blind,
            VariantArg::Sequential => Variant::Sequential,
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure { code: e.exit_code() as u8, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure { code: 3, message: format!("{}: {e}", path.display()) }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

fn task_spec(terrain: TerrainType, params: &[String]) -> Result<TaskSpec, Failure> {
    let mut spec = TaskSpec::new(terrain);
    for p in params {
        let (name, value) = p.split_once('=').ok_or_else(|| usage(format!("--param `{p}`: expected NAME=VALUE")))?;
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| usage(format!("--param `{p}`: `{s}` is not a number")));
        spec = match value.split_once(':') {
            Some((lo, hi)) => spec.bound(name.trim(), num(lo)?, num(hi)?),
            None => spec.fixed(name.trim(), num(value)?),
        };
    }
    spec.validate().map_err(|e| usage(e.to_string()))?;
    Ok(spec)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Failure> {
    Checkpoint::load(path).map_err(|e| io_failure(path, e))
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::GenTerrain { terrain, params, rows, cols, cell, seed, format, out } => {
            let spec = task_spec(terrain, &params)?.with_seed(seed);
            if !(cell > 0.0 && cell.is_finite()) {
                return Err(usage("--cell must be positive"));
            }
            let geometry = GridGeometry { rows, cols, cell_length: cell, cell_width: cell, origin: [0.0, 0.0] };
            let field = generate_with(&spec, &geometry).map_err(|e| usage(e.to_string()))?;
            let mut w = create(&out)?;
            match format {
                Format::Text => hf_io::write_text(&field, &mut w),
                Format::Binary => hf_io::write_binary(&field, &mut w),
            }
            .and_then(|_| w.flush())
            .map_err(|e| io_failure(&out, e))?;
        }
        Command::Train { config, out, resume, seed } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = out
                .or_else(|| cfg.out_dir.clone())
                .ok_or_else(|| usage("no output directory: pass --out or set out_dir"))?;
            let ckpt = resume.as_deref().map(load_checkpoint).transpose()?;
            let result = run_train(&cfg, &dir, ckpt.as_ref(), |m| {
                eprintln!(
                    "iter {:>5}  steps {:>9}  return {:>9.3}  tcr {:>6.3}  kl {:.4}",
                    m.iter, m.env_steps, m.mean_return, m.mean_tcr, m.kl
                );
            })?;
            println!("{}", result.final_path.display());
        }
        Command::Eval { checkpoint, suite, episodes, seed, csv } => {
            let cfg = load_config(suite.as_deref())?;
            let ckpt = load_checkpoint(&checkpoint)?;
            let env = Arc::new(checkpoint_env_config(&cfg, &ckpt)?);
            let net = ckpt.net().map_err(|e| Failure { code: 3, message: e.to_string() })?;
            if episodes == 0 {
                return Err(usage("--episodes must be >= 1"));
            }
            let report = evaluate(&GreedyPolicy { net: &net, params: &ckpt.params }, &cfg.eval, &env, episodes, seed)?;
            print!("{}", report.table());
            if let Some(path) = csv {
                let mut w = create(&path)?;
                report.write_csv(&mut w).map_err(|e| io_failure(&path, e))?;
            }
        }
        Command::Ablate { config, out, episodes, seed, variants } => {
            let cfg = RunConfig::load(&config)?;
            if episodes == 0 {
                return Err(usage("--episodes must be >= 1"));
            }
            let variants: Vec<Variant> =
                if variants.is_empty() { VARIANTS.to_vec() } else { variants.into_iter().map(Into::into).collect() };
            let dir = out.or_else(|| cfg.out_dir.clone());
            let table = ablate(&cfg, &variants, episodes, seed, dir.as_deref(), |v, m| {
                eprintln!("{:<10} iter {:>5}  steps {:>9}  tcr {:>6.3}", v.name(), m.iter, m.env_steps, m.mean_tcr);
            })?;
            let text = table.render();
            print!("{text}");
            if let Some(dir) = dir {
                let path = dir.join("ablation.txt");
                std::fs::write(&path, &text).map_err(|e| io_failure(&path, e))?;
                let path = dir.join("ablation.csv");
                let mut w = create(&path)?;
                table.write_csv(&mut w).map_err(|e| io_failure(&path, e))?;
            }
        }
        Command::Replay { checkpoint, config, terrain, params, seed, out } => {
            let cfg = load_config(config.as_deref())?;
            let spec = task_spec(terrain, &params)?;
            let ckpt = load_checkpoint(&checkpoint)?;
            let env = Arc::new(checkpoint_env_config(&cfg, &ckpt)?);
            let net = ckpt.net().map_err(|e| Failure { code: 3, message: e.to_string() })?;
            let (record, trace) = replay(&GreedyPolicy { net: &net, params: &ckpt.params }, &spec, &env, seed)?;
            let mut w = create(&out)?;
            write_trace_jsonl(&trace, &mut w).and_then(|_| w.flush()).map_err(|e| io_failure(&out, e))?;
            println!(
                "{} steps  tcr {:.3}  success {}  -> {}",
                record.steps,
                record.tcr,
                record.success,
                out.display()
            );
        }
        Command::DefaultConfig => {
            io::stdout().write_all(RunConfig::default().to_toml().as_bytes()).map_err(|e| Failure { code: 4, message: e.to_string() })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
