// SPDX-License-Identifier: Apache-2.0

//! Command-line entry point. Machine-readable output goes to `--out` (or
//! standard output when absent); diagnostics go to standard error.
//!
//! Exit codes: 0 success, 1 a hard check failed, 2 usage or input error.

use std::io::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bitword::BitWord;
use crate::bounds::figure_curve;
use crate::circuit::{
    build_projection, constant_circuit, identity_circuit, observation_partition, parse_circuit, random_circuit,
    validate_budget,
};
use crate::code::{CodeMode, ConcatenatedCode, SystemParams};
use crate::error::{Error, Result};
use crate::experiment::{self, header, parse_config, result_json, results_csv, write_output};
use crate::verify::{all_passed, rows_csv, run_suite, Suite};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cktchan", version, about = "Circuit-limited adversarial channel simulator and proof-quantity checker")]
struct Cli {
    /// Worker thread cap; defaults to the hardware concurrency.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a config (single or sweep) and write the results CSV.
    Simulate(SimulateArgs),
    /// Exact error probability of a config by enumeration; writes JSON.
    ExactPe(ExactArgs),
    /// Run a built-in verification suite; writes check rows as CSV.
    Verify(VerifyArgs),
    /// Capacity and bound curves over p for a fixed r.
    Bounds(BoundsArgs),
    /// Netlist tools.
    Circuit {
        #[command(subcommand)]
        action: CircuitCmd,
    },
    /// Generate codebook or circuit files.
    Gen {
        #[command(subcommand)]
        what: GenCmd,
    },
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed of every grid point.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the full result records as JSON lines.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Record wall time as 0 so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Debug, Args)]
struct ExactArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    no_timing: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SuiteArg {
    Claims,
    Variation,
    Binomial,
    Listdecode,
    Identity,
    All,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    suite: SuiteArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[arg(long)]
    r: f64,
    #[arg(long, default_value_t = 100)]
    grid: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum CircuitCmd {
    /// Parse a netlist and check it against the size and width budget.
    Validate {
        #[arg(long)]
        file: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long, default_value_t = 1)]
        c: u64,
        #[arg(long, default_value_t = 2)]
        s: u32,
    },
    /// Evaluate a netlist on one input bit string.
    Eval {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        input: String,
    },
    /// Sizes of the observation sets of a netlist.
    Partition {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Concat,
    Plain,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CircuitKind {
    Identity,
    Constant,
    Projection,
    Random,
}

#[derive(Debug, Subcommand)]
enum GenCmd {
    /// Sample a code and write it as a codebook file.
    Codebook {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        rate: f64,
        #[arg(long, value_enum, default_value = "concat")]
        mode: ModeArg,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a netlist.
    Circuit {
        #[arg(long, value_enum)]
        kind: CircuitKind,
        #[arg(long)]
        n: usize,
        /// Output width for constant and random circuits.
        #[arg(long, default_value_t = 1)]
        width: usize,
        /// One-based positions for projections, comma separated.
        #[arg(long, value_delimiter = ',')]
        indices: Vec<usize>,
        #[arg(long, default_value_t = 8)]
        gates: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_output(p, text),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes())?;
            so.flush()?;
            Ok(())
        }
    }
}

fn read(path: &PathBuf) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Assertion(_) => EXIT_CHECK_FAILED,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let run = || match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("cktchan: {e}");
            exit_code(&e)
        }
    };
    match cli.threads {
        Some(0) => {
            eprintln!("cktchan: --threads must be positive");
            EXIT_USAGE
        }
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(run),
            Err(e) => {
                eprintln!("cktchan: thread pool: {e}");
                EXIT_USAGE
            }
        },
        None => run(),
    }
}

fn execute(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::ExactPe(a) => exact_pe(a),
        Command::Verify(a) => verify(a),
        Command::Bounds(a) => bounds(a),
        Command::Circuit { action } => circuit(action),
        Command::Gen { what } => gen(what),
    }
}

fn simulate(a: SimulateArgs) -> Result<i32> {
    let mut grid = parse_config(&read(&a.config)?)?.into_grid();
    if grid.is_empty() {
        return Err(Error::Usage("config holds no experiments".into()));
    }
    if let Some(s) = a.seed {
        for c in &mut grid {
            c.seed = s;
        }
    }
    for c in &grid {
        eprintln!("resolved config: {}", serde_json::to_string(c).expect("config serializes"));
    }
    let rows = experiment::sweep(&grid);
    for (k, r) in rows.iter().enumerate() {
        if let Err(e) = r {
            eprintln!("grid point {k}: {e}");
        }
    }
    emit(&a.out, &results_csv(&grid, &rows, !a.no_timing))?;
    if let Some(path) = &a.json {
        let mut text = String::new();
        for r in rows.iter().flatten() {
            text.push_str(&result_json(r, !a.no_timing));
        }
        write_output(path, &text)?;
    }
    // A failed hard assert in any row fails the run.
    if rows.iter().any(|r| matches!(r, Err(e) if e.starts_with("assertion failed"))) {
        return Ok(EXIT_CHECK_FAILED);
    }
    if rows.iter().all(|r| r.is_err()) {
        return Ok(EXIT_USAGE);
    }
    Ok(EXIT_OK)
}

fn exact_pe(a: ExactArgs) -> Result<i32> {
    let grid = parse_config(&read(&a.config)?)?.into_grid();
    if grid.len() != 1 {
        return Err(Error::Usage("exact-pe takes a single config".into()));
    }
    let mut cfg = grid.into_iter().next().expect("one config");
    cfg.exact = true;
    eprintln!("resolved config: {}", serde_json::to_string(&cfg).expect("config serializes"));
    let res = experiment::run_exact_pe(&cfg)?;
    eprintln!("exact error probability {} ({})", res.exact.as_deref().unwrap_or(""), res.p_hat);
    emit(&a.out, &result_json(&res, !a.no_timing))?;
    Ok(EXIT_OK)
}

fn verify(a: VerifyArgs) -> Result<i32> {
    let suite = match a.suite {
        SuiteArg::Claims => Suite::Claims,
        SuiteArg::Variation => Suite::Variation,
        SuiteArg::Binomial => Suite::Binomial,
        SuiteArg::Listdecode => Suite::ListDecode,
        SuiteArg::Identity => Suite::Identity,
        SuiteArg::All => Suite::All,
    };
    let rows = run_suite(suite, a.seed)?;
    let hash = {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(format!("verify {:?} seed {}", a.suite, a.seed).as_bytes()))
    };
    emit(&a.out, &rows_csv(&rows, &header(a.seed, &hash)))?;
    let failed = rows.iter().filter(|r| r.pass == crate::verify::Outcome::Fail).count();
    eprintln!("{} rows, {failed} failed", rows.len());
    Ok(if all_passed(&rows) { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn bounds(a: BoundsArgs) -> Result<i32> {
    let curve = figure_curve(a.r, a.grid)?;
    let hash = {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(format!("bounds r {} grid {}", a.r, a.grid).as_bytes()))
    };
    let mut text = header(0, &hash);
    text.push_str(&format!("# r {}\n# p_star {}\n", curve.r, curve.p_star));
    text.push_str("p,shannon,gv,langberg,mrrw1,regime,value\n");
    for pt in &curve.points {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            pt.p,
            pt.shannon,
            pt.gv,
            pt.langberg.map(|v| v.to_string()).unwrap_or_default(),
            pt.mrrw1,
            pt.regime.as_str(),
            pt.value
        ));
    }
    emit(&a.out, &text)?;
    eprintln!("p* = {}", curve.p_star);
    Ok(EXIT_OK)
}

fn circuit(action: CircuitCmd) -> Result<i32> {
    match action {
        CircuitCmd::Validate { file, r, c, s } => {
            let ckt = parse_circuit(&read(&file)?)?;
            let rep = validate_budget(&ckt, r, c, s);
            println!(
                "inputs {} gates {} size {} budget {} outputs {} required {} ok {}",
                ckt.n_inputs(),
                ckt.gates().len(),
                rep.size,
                rep.budget,
                rep.output_width,
                rep.required_width,
                rep.ok
            );
            Ok(if rep.ok { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
        CircuitCmd::Eval { file, input } => {
            let ckt = parse_circuit(&read(&file)?)?;
            let x: BitWord = input
                .parse()
                .map_err(|_| Error::Usage(format!("input {input:?} is not a bit string")))?;
            println!("{}", ckt.evaluate(&x)?);
            Ok(EXIT_OK)
        }
        CircuitCmd::Partition { file, out } => {
            let ckt = parse_circuit(&read(&file)?)?;
            let part = observation_partition(&ckt)?;
            let mut text = String::from("psi,size\n");
            for (psi, size) in part.cells() {
                text.push_str(&format!("{psi},{size}\n"));
            }
            emit(&out, &text)?;
            eprintln!("{} nonempty observation sets", part.num_cells());
            Ok(EXIT_OK)
        }
    }
}

fn gen(what: GenCmd) -> Result<i32> {
    match what {
        GenCmd::Codebook {
            n,
            rho,
            rate,
            mode,
            seed,
            out,
        } => {
            let params = SystemParams::new(n, 0.0, 0.0, rate, rho)?;
            let mode = match mode {
                ModeArg::Concat => CodeMode::Concat,
                ModeArg::Plain => CodeMode::Plain,
            };
            let code = ConcatenatedCode::from_seed(&params, mode, seed)?;
            emit(&out, &code.to_text())?;
            Ok(EXIT_OK)
        }
        GenCmd::Circuit {
            kind,
            n,
            width,
            indices,
            gates,
            seed,
            out,
        } => {
            let ckt = match kind {
                CircuitKind::Identity => identity_circuit(n),
                CircuitKind::Constant => constant_circuit(n, width),
                CircuitKind::Projection => build_projection(n, &indices)?,
                CircuitKind::Random => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    random_circuit(n, gates, width, &mut rng)
                }
            };
            emit(&out, &ckt.to_netlist())?;
            Ok(EXIT_OK)
        }
    }
}
