use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use twohop::bench::{emit_results, fit_dof_slope, run_sweep, to_csv, to_json, Format, Normalizer, SweepConfig};
use twohop::channel::{augment, ChannelPair, SwapVariant};
use twohop::converse::{dof_upper_bound, mimo_decompose, mimo_decompose_g22, verify_decomposition};
use twohop::relaying::{
    check_mimo_topology, end_to_end, mimo_kernel_with, mimo_phase_kernels, scalar_kernel, RelayKernel, Topology,
};
use twohop::schemes::{phase_kernels, simulate_transmission, SimOptions, SymbolPlan};

#[derive(Parser)]
#[command(name = "twohop", version, about = "Two-hop interference channel relaying toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo rate sweep over a channel ensemble.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutFormat,
        /// Overrides `output_path` of the config; stdout when neither is set.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Sweep, then fit the DoF slope of every scheme.
    Dof {
        #[arg(long)]
        config: PathBuf,
        /// `lo:hi` in dB.
        #[arg(long, default_value = "50:80")]
        window: String,
        #[arg(long, default_value = "half-log2")]
        normalizer: String,
    },
    /// Build one relay kernel and check its interference pattern.
    Topology {
        #[arg(long)]
        channel: PathBuf,
        #[arg(long)]
        topology: String,
        /// Use the matrix construction (also for m = 1).
        #[arg(long)]
        mimo: bool,
    },
    /// Decomposition residuals and rank-based DoF bounds of a kernel list.
    Verify {
        #[arg(long)]
        channel: PathBuf,
        #[arg(long)]
        kernels: PathBuf,
    },
    /// Symbol-level run of the three-phase scheme.
    Simulate {
        #[arg(long)]
        channel: PathBuf,
        #[arg(long, default_value_t = 30.0)]
        power_db: f64,
        #[arg(long, default_value_t = 1_000_000)]
        symbols: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        partitions: usize,
    },
}

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_channel(path: &Path) -> Result<ChannelPair> {
    Ok(ChannelPair::from_json(&read_json(path)?)?)
}

fn parse_window(s: &str) -> Result<(f64, f64)> {
    let (lo, hi) = s.split_once(':').context("window must look like lo:hi")?;
    Ok((lo.trim().parse()?, hi.trim().parse()?))
}

/// Real channel the three-phase machinery runs on, its swap variant and the
/// factor mapping complex power to real-model power.
fn real_model(cp: &ChannelPair) -> Result<(ChannelPair, SwapVariant, f64)> {
    if cp.is_real() {
        Ok((cp.clone(), SwapVariant::RealLastFirst, 1.0))
    } else {
        Ok((augment(cp)?, SwapVariant::ComplexFirstFirst, 2.0))
    }
}

fn topology_cmd(channel: &Path, topology: &str, mimo: bool) -> Result<Value> {
    let cp = read_channel(channel)?;
    let topology: Topology = topology.parse()?;
    if !mimo && cp.m() == 1 && cp.is_real() {
        let k = scalar_kernel(&cp, topology)?;
        let e = end_to_end(&cp, &k)?;
        let g = |i, j| e.block(i, j)[(0, 0)];
        return Ok(json!({
            "kernel": k,
            "gains": { "g11": g(1, 1), "g12": g(1, 2), "g21": g(2, 1), "g22": g(2, 2) },
        }));
    }
    let (real, variant, _) = real_model(&cp)?;
    let k = mimo_kernel_with(&real, topology, variant)?;
    let check = check_mimo_topology(&real, &k, topology, variant)?;
    let passes = check.passes(real.m());
    Ok(json!({ "kernel": k, "check": check, "passes": passes }))
}

fn verify_cmd(channel: &Path, kernels: &Path) -> Result<Value> {
    let cp = read_channel(channel)?;
    let kernels: Vec<RelayKernel> = serde_json::from_value(read_json(kernels)?)?;
    let Some(first) = kernels.first() else { bail!("kernel list is empty") };
    let bounds = dof_upper_bound(&cp, &kernels)?;
    let residuals = if cp.m() == 1 {
        json!({ "scalar_identity": verify_decomposition(&cp, &kernels, first.dim())? })
    } else {
        let mut per_kernel = Vec::new();
        for k in &kernels {
            let e = end_to_end(&cp, k)?;
            let d11 = mimo_decompose(&e.g11, &e.g12, &e.g21)?;
            let d22 = mimo_decompose_g22(&e.g22, &e.g12, &e.g21)?;
            per_kernel.push(json!({
                "g11_residual": d11.relative_residual,
                "g11_correction_rank": d11.correction_rank,
                "g22_residual": d22.relative_residual,
                "g22_correction_rank": d22.correction_rank,
            }));
        }
        Value::Array(per_kernel)
    };
    Ok(json!({ "residuals": residuals, "bounds": bounds }))
}

fn simulate_cmd(channel: &Path, power_db: f64, symbols: usize, seed: u64, partitions: usize) -> Result<Value> {
    let cp = read_channel(channel)?;
    let p = 10f64.powf(power_db / 10.0);
    let (real, variant, mult) = real_model(&cp)?;
    let (kernels, plan) = if cp.is_real() {
        phase_kernels(&real)?
    } else {
        let (c1, c2) = variant.columns(real.m());
        (mimo_phase_kernels(&real, variant)?, SymbolPlan::new(real.m(), c1, c2)?)
    };
    let opts = SimOptions { partitions, ..SimOptions::default() };
    let stats = simulate_transmission(&real, &kernels, plan, mult * p, symbols, seed, opts)?;
    Ok(serde_json::to_value(stats)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sweep { config, format, output } => {
            let cfg = SweepConfig::from_json_file(&config)?;
            let table = run_sweep(&cfg)?;
            let format = match format {
                OutFormat::Csv => Format::Csv,
                OutFormat::Json => Format::Json,
            };
            match output.or(cfg.output_path.map(PathBuf::from)) {
                Some(path) => {
                    emit_results(&table.rows, format, &path)?;
                    eprintln!("wrote {} rows to {} ({} rejected draws)", table.rows.len(), path.display(), table.rejections);
                }
                None => match format {
                    Format::Csv => print!("{}", to_csv(&table.rows)),
                    Format::Json => println!("{}", to_json(&table.rows)?),
                },
            }
        }
        Command::Dof { config, window, normalizer } => {
            let cfg = SweepConfig::from_json_file(&config)?;
            let window = parse_window(&window)?;
            let normalizer: Normalizer = normalizer.parse()?;
            let table = run_sweep(&cfg)?;
            let mut fits = serde_json::Map::new();
            for scheme in &cfg.schemes {
                let rows = table.scheme_rows(scheme.label());
                fits.insert(scheme.label().to_string(), serde_json::to_value(fit_dof_slope(&rows, normalizer, window)?)?);
            }
            println!("{}", serde_json::to_string_pretty(&fits)?);
        }
        Command::Topology { channel, topology, mimo } => {
            println!("{}", serde_json::to_string_pretty(&topology_cmd(&channel, &topology, mimo)?)?);
        }
        Command::Verify { channel, kernels } => {
            println!("{}", serde_json::to_string_pretty(&verify_cmd(&channel, &kernels)?)?);
        }
        Command::Simulate { channel, power_db, symbols, seed, partitions } => {
            println!("{}", serde_json::to_string_pretty(&simulate_cmd(&channel, power_db, symbols, seed, partitions)?)?);
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
