//! `wrpn`: quantize tensors, analyze compute cost and memory footprint,
//! train desk-scale networks, benchmark the packed kernels and check the
//! published cost tables.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use wrpn::analyzer::{
    cost_table, load_descriptor, memory_footprint, reproduce, CostModel, FootprintReport,
    LayerBits, Phase, PrecisionPolicy, STANDARD_GRID,
};
use wrpn::kernels::{bench_gemm, BenchConfig, BenchMode, BENCH_CSV_HEADER};
use wrpn::quant::{
    binarize_weights_bwn, clip_acts, clip_weights, quantize_acts_wrpn,
    quantize_weights_dorefa_codes, quantize_weights_wrpn, QuantizedTensor,
};
use wrpn::train::{build_network, desk_scale_task, load_idx, train, LrStep, TrainConfig};
use wrpn::Tensor;

#[derive(Parser)]
#[command(
    name = "wrpn",
    version,
    about = "Wide reduced-precision network toolkit"
)]
struct Cli {
    /// Worker threads for parallel kernels (defaults to all cores).
    #[arg(long, global = true, env = "WRPN_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quantize a tensor file and write the codes container.
    Quantize(QuantizeArgs),
    /// Bit-weighted compute cost over a precision grid.
    AnalyzeCost(CostArgs),
    /// Training and inference memory footprint over batch sizes.
    AnalyzeMemory(MemoryArgs),
    /// Train a network and write the per-epoch log.
    Train(TrainArgs),
    /// Time the packed GEMM kernels against the FP32 reference.
    Bench(BenchArgs),
    /// Recompute every published cost figure and compare.
    ReproTables(ReproArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Wrpn,
    Dorefa,
    Bwn,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Weight,
    Activation,
}

#[derive(Args)]
struct QuantizeArgs {
    /// Tensor container to read.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "wrpn")]
    family: Family,
    #[arg(long, default_value_t = 4)]
    bits: u32,
    #[arg(long, value_enum, default_value = "weight")]
    kind: Kind,
    /// Output container (defaults to the input path with a `.q` suffix).
    /// A JSON summary is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Uniform,
    ExemptFirstLast,
}

impl From<ModelArg> for CostModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Uniform => CostModel::Uniform,
            ModelArg::ExemptFirstLast => CostModel::ExemptFirstLast,
        }
    }
}

#[derive(Args)]
struct CostArgs {
    /// Shipped network name or descriptor JSON path.
    #[arg(long)]
    net: String,
    /// Widening factors, one table block each.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    widen: Vec<f64>,
    /// `standard` (32,8,4,2,1) or a comma-separated bit list.
    #[arg(long, default_value = "standard")]
    grid: String,
    #[arg(long, value_enum, default_value = "uniform")]
    model: ModelArg,
    /// CSV output path.
    #[arg(long, default_value = "cost.csv")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhaseArg {
    Training,
    Inference,
    Both,
}

#[derive(Args)]
struct MemoryArgs {
    #[arg(long)]
    net: String,
    #[arg(long, value_delimiter = ',', default_value = "1,32,128,256")]
    batches: Vec<usize>,
    #[arg(long, value_enum, default_value = "both")]
    phase: PhaseArg,
    #[arg(long, default_value_t = 4.0)]
    bytes_per_act: f64,
    #[arg(long, default_value_t = 4.0)]
    bytes_per_weight: f64,
    #[arg(long, default_value = "memory.csv")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    /// First and last conv/FC layers stay FP32.
    Standard,
    /// Every conv/FC layer at the requested precision.
    Uniform,
}

#[derive(Args)]
struct TrainArgs {
    /// Shipped network name or descriptor JSON path.
    #[arg(long, default_value = "mlp-blobs")]
    net: String,
    #[arg(long, default_value_t = 1.0)]
    widen: f64,
    #[arg(long, default_value_t = 32)]
    bits_a: u32,
    #[arg(long, default_value_t = 32)]
    bits_w: u32,
    #[arg(long, value_enum, default_value = "standard")]
    policy: PolicyArg,
    /// TrainConfig JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Constant learning rate (replaces the schedule).
    #[arg(long)]
    lr: Option<f32>,
    /// IDX image file; without it the synthetic blob task is used.
    #[arg(long, requires = "labels")]
    images: Option<PathBuf>,
    #[arg(long, requires = "images")]
    labels: Option<PathBuf>,
    #[arg(long, requires = "eval_labels")]
    eval_images: Option<PathBuf>,
    #[arg(long, requires = "eval_images")]
    eval_labels: Option<PathBuf>,
    /// Use only the first N training samples.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, default_value = "train_log.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated modes: fp32, int4, ternary, binary, or `all`.
    #[arg(long, default_value = "all")]
    modes: String,
    #[arg(long, default_value_t = 64)]
    m: usize,
    #[arg(long, default_value_t = 64)]
    n: usize,
    #[arg(long, default_value_t = 1024)]
    k: usize,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "bench.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct ReproArgs {
    #[arg(long, value_enum, default_value = "uniform")]
    model: ModelArg,
    #[arg(long, default_value = "repro_tables.csv")]
    out: PathBuf,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn quantize(a: QuantizeArgs) -> Result<()> {
    let x = Tensor::load(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let q: QuantizedTensor = match (a.family, a.kind) {
        (Family::Wrpn, Kind::Weight) => quantize_weights_wrpn(&clip_weights(&x), a.bits)?,
        (Family::Wrpn, Kind::Activation) => quantize_acts_wrpn(&clip_acts(&x), a.bits)?,
        (Family::Dorefa, Kind::Weight) => quantize_weights_dorefa_codes(&x, a.bits)?,
        (Family::Bwn, Kind::Weight) if a.bits == 1 => binarize_weights_bwn(&clip_weights(&x))?,
        (Family::Bwn, Kind::Weight) => bail!("bwn binarization is 1-bit only"),
        (_, Kind::Activation) => bail!("only the wrpn family quantizes activations"),
    };
    let out = a.out.unwrap_or_else(|| {
        let mut p = a.input.clone().into_os_string();
        p.push(".q");
        p.into()
    });
    q.save(&out)?;
    let deq = q.dequantize();
    let mse = x
        .data()
        .iter()
        .zip(deq.data())
        .map(|(a, b)| f64::from(a - b).powi(2))
        .sum::<f64>()
        / x.len() as f64;
    let mut levels: Vec<(i32, usize)> = Vec::new();
    let mut codes = q.codes().to_vec();
    codes.sort_unstable();
    for c in codes {
        match levels.last_mut() {
            Some((v, n)) if *v == c => *n += 1,
            _ => levels.push((c, 1)),
        }
    }
    let summary = json!({
        "format": "wrpn-quantize-summary/1",
        "input": a.input.display().to_string(),
        "output": out.display().to_string(),
        "shape": q.shape(),
        "bits": q.spec().bits(),
        "scale": q.scale(),
        "mse": mse,
        "levels": levels.iter().map(|(c, n)| json!({"code": c, "count": n})).collect::<Vec<_>>(),
    });
    let mut json_path = out.clone().into_os_string();
    json_path.push(".json");
    write(
        Path::new(&json_path),
        &(serde_json::to_string_pretty(&summary)? + "\n"),
    )?;
    println!(
        "quantized {:?} to {} bits, scale {}",
        q.shape(),
        q.spec().bits(),
        q.scale()
    );
    println!(
        "{} distinct codes, mean squared error {mse:.6e}",
        levels.len()
    );
    for (c, n) in &levels {
        println!("  code {c:>4}: {n}");
    }
    println!(
        "wrote {} and {}",
        out.display(),
        Path::new(&json_path).display()
    );
    Ok(())
}

fn parse_grid(s: &str) -> Result<Vec<u32>> {
    if s == "standard" {
        return Ok(STANDARD_GRID.to_vec());
    }
    s.split(',')
        .map(|b| {
            let v: u32 = b
                .trim()
                .parse()
                .with_context(|| format!("bad bit width {b:?}"))?;
            LayerBits::new(v, v)?;
            Ok(v)
        })
        .collect()
}

fn analyze_cost(a: CostArgs) -> Result<()> {
    let desc = load_descriptor(&a.net)?;
    let table = cost_table(&desc, &a.widen, &parse_grid(&a.grid)?, a.model.into())?;
    write(&a.out, &table.to_csv())?;
    print!("{}", table.pretty());
    println!("wrote {}", a.out.display());
    Ok(())
}

fn analyze_memory(a: MemoryArgs) -> Result<()> {
    let desc = load_descriptor(&a.net)?;
    let phases: &[Phase] = match a.phase {
        PhaseArg::Training => &[Phase::Training],
        PhaseArg::Inference => &[Phase::Inference],
        PhaseArg::Both => &[Phase::Training, Phase::Inference],
    };
    let mut csv = format!("{}\n", FootprintReport::CSV_HEADER);
    println!("{}: activation share of total memory", desc.name);
    println!(
        "{:>8} {:>10} {:>14} {:>10}",
        "batch", "phase", "total MiB", "act share"
    );
    for &phase in phases {
        for &b in &a.batches {
            let r = memory_footprint(&desc, b, phase, a.bytes_per_act, a.bytes_per_weight)?;
            csv.push_str(&r.csv_line());
            csv.push('\n');
            let name = if phase == Phase::Training {
                "training"
            } else {
                "inference"
            };
            println!(
                "{b:>8} {name:>10} {:>14.1} {:>9.1}%",
                r.total() / (1024.0 * 1024.0),
                100.0 * r.activation_fraction()
            );
        }
    }
    write(&a.out, &csv)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let desc = load_descriptor(&a.net)?;
    let bits = LayerBits::new(a.bits_a, a.bits_w)?;
    let policy = match a.policy {
        PolicyArg::Standard => PrecisionPolicy::standard(&desc, bits),
        PolicyArg::Uniform => PrecisionPolicy::uniform(bits),
    };
    let mut cfg = match &a.config {
        Some(p) => serde_json::from_str(
            &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )
        .with_context(|| format!("parsing {}", p.display()))?,
        None => TrainConfig::desk_scale(1),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(b) = a.batch_size {
        cfg.batch_size = b;
    }
    if let Some(lr) = a.lr {
        cfg.lr_schedule = vec![LrStep { from_epoch: 0, lr }];
    }
    cfg.validate()?;
    let (train_set, eval_set) = match (&a.images, &a.labels) {
        (Some(i), Some(l)) => {
            let tr = load_idx(i, l)?;
            let ev = match (&a.eval_images, &a.eval_labels) {
                (Some(i), Some(l)) => Some(load_idx(i, l)?),
                _ => None,
            };
            (tr, ev)
        }
        _ => {
            let (tr, ev) = desk_scale_task()?;
            (tr, Some(ev))
        }
    };
    let train_set = match a.limit {
        Some(n) => train_set.truncate(n),
        None => train_set,
    };
    let mut net = build_network(&desc, a.widen, &policy, cfg.seed)?;
    println!(
        "training {} ({} parameters) at {}b A / {}b W on {} samples, {} epochs",
        net.name,
        net.num_params(),
        a.bits_a,
        a.bits_w,
        train_set.len(),
        cfg.epochs
    );
    let log = train(&mut net, &train_set, eval_set.as_ref(), &cfg)?;
    for r in &log.rows {
        println!(
            "epoch {:>3}  loss {:.4}  top-1 {:.2}%",
            r.epoch,
            r.loss,
            100.0 * r.top1
        );
    }
    write(&a.out, &log.to_csv())?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let modes: Vec<BenchMode> = if a.modes == "all" {
        BenchMode::ALL.to_vec()
    } else {
        a.modes
            .split(',')
            .map(|m| {
                BenchMode::parse(m.trim()).with_context(|| format!("unknown bench mode {m:?}"))
            })
            .collect::<Result<_>>()?
    };
    let rows = bench_gemm(
        &BenchConfig {
            m: a.m,
            n: a.n,
            k: a.k,
            repetitions: a.reps,
            seed: a.seed,
        },
        &modes,
    )?;
    let mut csv = format!("{BENCH_CSV_HEADER}\n");
    println!(
        "{:>8} {:>12} {:>8} {:>10} {:>10} {:>12}",
        "mode", "ns/call", "GOPS", "bytes/op", "speedup", "first-order"
    );
    for r in &rows {
        csv.push_str(&r.csv_line());
        csv.push('\n');
        println!(
            "{:>8} {:>12.0} {:>8.3} {:>10} {:>9.2}x {:>11.1}x",
            r.mode.to_string(),
            r.ns_per_call,
            r.effective_gops,
            r.bytes_per_operand,
            r.speedup_vs_fp32,
            r.first_order_efficiency
        );
    }
    write(&a.out, &csv)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn repro_tables(a: ReproArgs) -> Result<bool> {
    let report = reproduce(a.model.into())?;
    write(&a.out, &report.to_csv())?;
    print!("{}", report.pretty());
    println!("wrote {}", a.out.display());
    Ok(report.all_passed())
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Quantize(a) => quantize(a)?,
        Command::AnalyzeCost(a) => analyze_cost(a)?,
        Command::AnalyzeMemory(a) => analyze_memory(a)?,
        Command::Train(a) => train_cmd(a)?,
        Command::Bench(a) => bench(a)?,
        Command::ReproTables(a) => return repro_tables(a),
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some values fall outside their tolerance");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
