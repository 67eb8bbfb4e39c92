//! `oqss`: batch driver for target generation, synthesis, verification,
//! hafnian benchmarking and Wigner grids.

mod config;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use oqss_core::backcast::{forward_verify, plan_layers, synthesize, NodeParams, SynthesisResult};
use oqss_core::fock::{normalize, wigner_csv, wigner_grid, FockVector};
use oqss_core::gkp::{gkp_coefficients, truncation_fidelity, GkpParams};
use oqss_core::hafnian::{benchmark_csv, benchmark_hafnian, corrected_log2_slope, default_sweep};
use oqss_core::Error;
use serde::Serialize;

use config::{RunConfig, TargetSpec};

const EXIT_USAGE: u8 = 2;
const EXIT_PLANNING: u8 = 3;
const EXIT_SOLVER: u8 = 4;
const EXIT_IO: u8 = 5;
const EXIT_PARSE: u8 = 6;
const EXIT_CONSISTENCY: u8 = 7;

#[derive(Parser)]
#[command(name = "oqss", version, about = "Heralded linear-optical state synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the truncated GKP codeword in the `n re im` format.
    GkpTarget {
        #[arg(long, allow_negative_numbers = true)]
        db: f64,
        #[arg(long)]
        nmax: usize,
        #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=1))]
        logical: u8,
        /// Default: gkp_<db>db_n<nmax>.txt
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plan, synthesize and forward-verify a run described by a TOML config.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-simulate a stored result and compare it with a target file.
    Verify {
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        target: PathBuf,
    },
    /// Time the loop hafnian over D = min..=max and emit CSV.
    HafnianBench {
        #[arg(long)]
        min: usize,
        #[arg(long)]
        max: usize,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
        step: u64,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the Wigner function of a Fock file on a grid and emit CSV.
    Wigner {
        #[arg(long)]
        fock: PathBuf,
        /// `lo,hi`
        #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
        q: (f64, f64),
        #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
        p: (f64, f64),
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        nq: u64,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        np: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or_else(|| format!("expected `lo,hi`, got {s:?}"))?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
    if !(lo < hi) {
        return Err(format!("need lo < hi, got {lo},{hi}"));
    }
    Ok((lo, hi))
}

/// Command failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Planning(_) | Error::Capacity { .. } => EXIT_PLANNING,
            Error::Split { .. } | Error::Solver { .. } | Error::DegenerateHerald(_) | Error::NonFinite { .. } => {
                EXIT_SOLVER
            }
            Error::Io(_) => EXIT_IO,
            Error::Parse(_) | Error::Json(_) => EXIT_PARSE,
            Error::Consistency { .. } => EXIT_CONSISTENCY,
            Error::Contract(_) | Error::Validity(_) | Error::Degenerate(_) => EXIT_USAGE,
        };
        Failure::new(code, e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::new(EXIT_IO, format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read_fock(path: &Path) -> Result<FockVector, Failure> {
    let v = FockVector::from_text(&read_text(path)?).map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())))?;
    Ok(normalize(&v)?.0)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => write_text(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_gkp_target(db: f64, nmax: usize, logical: u8, out: Option<PathBuf>) -> Result<(), Failure> {
    let params = GkpParams::new(db, logical)?;
    let v = gkp_coefficients(&params, nmax)?;
    let f = truncation_fidelity(&params, nmax)?;
    let out = out.unwrap_or_else(|| PathBuf::from(format!("gkp_{db}db_n{nmax}.txt")));
    write_text(&out, &v.to_text())?;
    println!("wrote {}", out.display());
    println!("delta {:.6}", params.delta());
    println!("truncation fidelity {f:.9}");
    Ok(())
}

/// Fresh run directory `<root>/run-<unix ms>-seed<seed>`, suffixed when
/// the name is taken.
fn create_run_dir(root: &Path, seed: u64) -> Result<PathBuf, Failure> {
    fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
    let ms = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis());
    let base = format!("run-{ms}-seed{seed}");
    for k in 0..1000 {
        let name = if k == 0 { base.clone() } else { format!("{base}-{k}") };
        let dir = root.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(io_err(&dir, e)),
        }
    }
    Err(Failure::new(EXIT_IO, format!("no free run directory under {}", root.display())))
}

#[derive(Serialize)]
struct LeafCircuit<'a> {
    node: String,
    herald: &'a [usize],
    circuit: oqss_core::gaussian::Circuit,
}

fn configure_threads(cfg: &RunConfig) -> Result<(), Failure> {
    let threads = match std::env::var("OQSS_THREADS") {
        Ok(s) => Some(
            s.trim()
                .parse::<usize>()
                .map_err(|e| Failure::new(EXIT_USAGE, format!("OQSS_THREADS={s:?}: {e}")))?,
        ),
        Err(_) => cfg.threads,
    };
    if let Some(n) = threads.filter(|&n| n > 0) {
        // Fails only if a pool already exists, which keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn cmd_synthesize(config_path: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let text = read_text(config_path)?;
    let mut cfg = RunConfig::parse(&text)
        .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", config_path.display())))?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(dir) = std::env::var_os("OQSS_OUTPUT_DIR") {
        cfg.output_dir = PathBuf::from(dir);
    }
    cfg.synthesis = cfg.synthesis.clone().with_seed(cfg.seed);
    configure_threads(&cfg)?;

    let base = config_path.parent().unwrap_or(Path::new("."));
    let target = cfg.load_target(base)?;
    let n_max = cfg.n_max(&target);
    let plan = plan_layers(n_max, &cfg.plan.policy)?;
    let target_label = match &cfg.target {
        TargetSpec::Gkp { db, logical, n_max } => format!("GKP |{logical}> {db} dB, n <= {n_max}"),
        TargetSpec::Fock(p) => format!("Fock file {}", p.display()),
    };

    let result = synthesize(&target, &plan, &cfg.synthesis)?;
    let forward = if result.is_complete() {
        Some(forward_verify(&result, &result.target))
    } else {
        None
    };

    let output_dir = if cfg.output_dir.is_absolute() {
        cfg.output_dir.clone()
    } else {
        std::env::current_dir().map_err(|e| io_err(Path::new("."), e))?.join(&cfg.output_dir)
    };
    let dir = create_run_dir(&output_dir, cfg.seed)?;
    let config_toml = cfg.to_toml();
    let ok_forward = forward.as_ref().and_then(|f| f.as_ref().ok());
    write_text(&dir.join("config.toml"), &config_toml)?;
    write_text(&dir.join("target.txt"), &target.to_text())?;
    write_text(&dir.join("result.json"), &result.to_json()?)?;
    let circuits: Vec<LeafCircuit> = result
        .nodes
        .iter()
        .filter_map(|n| match &n.params {
            NodeParams::Leaf { herald, circuit } => Some(LeafCircuit {
                node: n.id.to_string(),
                herald,
                circuit: circuit.circuit(),
            }),
            NodeParams::Interior { .. } => None,
        })
        .collect();
    write_text(
        &dir.join("circuits.json"),
        &serde_json::to_string_pretty(&circuits).map_err(Error::from)?,
    )?;
    let report = report::render(&result, ok_forward, cfg.fidelity_floor, &config_toml, &target_label);
    write_text(&dir.join("report.txt"), &report)?;

    println!("run directory {}", dir.display());
    println!(
        "end-to-end fidelity {}",
        result.end_to_end_fidelity.map_or("n/a".into(), |f| format!("{f:.9}"))
    );
    println!(
        "success probability {}",
        result.cumulative_success_probability.map_or("n/a".into(), |p| format!("{p:.6e}"))
    );
    println!("wall time {:.3} s", result.wall_time_s);

    if let Some(Err(e)) = forward {
        return Err(e.into());
    }
    if let Some(f) = result.failures.first() {
        return Err(Failure::new(EXIT_SOLVER, format!("node {}: {}", f.id, f.message)));
    }
    match result.end_to_end_fidelity {
        Some(f) if f >= cfg.fidelity_floor => Ok(()),
        Some(f) => Err(Failure::new(
            EXIT_SOLVER,
            format!("end-to-end fidelity {f:.9} is below the floor {}", cfg.fidelity_floor),
        )),
        None => Err(Failure::new(EXIT_SOLVER, "synthesis produced no end-to-end state")),
    }
}

fn cmd_verify(result_path: &Path, target_path: &Path) -> Result<(), Failure> {
    let text = read_text(result_path)?;
    let result = SynthesisResult::from_json(&text)
        .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", result_path.display())))?;
    let target = read_fock(target_path)?;
    let report = forward_verify(&result, &target)?;
    println!("fidelity {:.12}", report.fidelity);
    println!("success probability {:.6e}", report.success_probability);
    println!("first-layer probability {:.6e}", report.first_layer_probability);
    if let Some(stored) = result.end_to_end_fidelity {
        println!("stored fidelity {stored:.12} (difference {:.3e})", (report.fidelity - stored).abs());
    }
    Ok(())
}

fn cmd_hafnian_bench(min: usize, max: usize, step: u64, repeats: usize, out: Option<PathBuf>) -> Result<(), Failure> {
    if min > max {
        return Err(Failure::new(EXIT_USAGE, format!("--min {min} exceeds --max {max}")));
    }
    let sizes = default_sweep((min..=max).step_by(step as usize));
    let rows = benchmark_hafnian(&sizes, repeats)?;
    emit(out.as_deref(), &benchmark_csv(&rows))?;
    match corrected_log2_slope(&rows) {
        Some(s) => eprintln!("slope of log2(t / D^3) per unit D: {s:.4} (2^{s:.4} = {:.4})", s.exp2()),
        None => eprintln!("slope: n/a (needs at least two sizes)"),
    }
    Ok(())
}

fn cmd_wigner(
    fock: &Path,
    q: (f64, f64),
    p: (f64, f64),
    nq: u64,
    np: u64,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let v = read_fock(fock)?;
    let grid = wigner_grid(&v, q, p, (nq as usize, np as usize))?;
    emit(out.as_deref(), &wigner_csv(&grid, q, p))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::GkpTarget { db, nmax, logical, out } => cmd_gkp_target(db, nmax, logical, out),
        Command::Synthesize { config, seed } => cmd_synthesize(&config, seed),
        Command::Verify { result, target } => cmd_verify(&result, &target),
        Command::HafnianBench {
            min,
            max,
            step,
            repeats,
            out,
        } => cmd_hafnian_bench(min, max, step, repeats, out),
        Command::Wigner { fock, q, p, nq, np, out } => cmd_wigner(&fock, q, p, nq, np, out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
