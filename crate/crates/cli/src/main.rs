// SPDX-License-Identifier: Apache-2.0

//! `verexp`: tables, audits, the end-to-end pipeline and the per-party
//! commands.

use std::fs;
use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use verexp::audit;
use verexp::backend::{Backend, ExternalBackend, MockBackend, ProvingKey, VerifyingKey, DEFAULT_LAMBDA};
use verexp::constraints::synthesize_main;
use verexp::field::PrimeField;
use verexp::params::{build_table, Epsilon, Method, ProtocolParams, DEFAULT_TABLE_LEN};
use verexp::protocol::{
    open_board, post_result, provider_commit, run_pipeline, serve, verexp_prove, verexp_verify, FileBoard, MemoryBoard,
    Opening, PipelineConfig, Tamper, ANALYST,
};
use verexp::{Error, Result};

const EXIT_HELP: &str = "\
Exit codes:
  0  success: verifier accepted, audit passed
  1  verifier rejected or an audit bound failed
  2  invalid parameters, arguments or input files
  3  board is missing entries (e.g. verify before prove)
  4  board server unreachable
  5  any other failure (I/O, backend, malformed artifacts)";

#[derive(Parser)]
#[command(name = "verexp", version, about = "Verifiable DP median via the exponential mechanism", after_help = EXIT_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a lookup table and write it as canonical JSON.
    Table {
        #[arg(long, default_value = "1")]
        epsilon: String,
        #[arg(long, default_value_t = DEFAULT_TABLE_LEN)]
        l: usize,
        #[arg(long, default_value = "setk")]
        method: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a parameters file.
    Params {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Setup, commitments, proof and verification in one process.
    Pipeline(PipelineArgs),
    /// Like `pipeline`, repeated, reporting witness/prove/verify times.
    Bench {
        #[command(flatten)]
        run: PipelineArgs,
        #[arg(long, default_value_t = 3)]
        repeat: u32,
    },
    /// Check a privacy, utility or approximation bound.
    Audit {
        #[command(subcommand)]
        kind: AuditKind,
    },
    /// Serve a board over TCP until killed.
    BoardServe {
        #[arg(long, default_value = "127.0.0.1:0")]
        addr: String,
        /// Persist entries to this JSONL file.
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Generate proving and verifying keys.
    Setup {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_LAMBDA)]
        lambda: u32,
        #[arg(long)]
        pk: PathBuf,
        #[arg(long)]
        vk: PathBuf,
    },
    /// Provider: commit to one input and write the opening for the analyst.
    Commit {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        board: BoardArgs,
        #[arg(long)]
        owner: String,
        #[arg(long)]
        x: u64,
        /// Randomness seed; fresh OS entropy when absent.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        opening: PathBuf,
    },
    /// Analyst: prove from the openings and post result and proof.
    Prove {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        board: BoardArgs,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        pk: PathBuf,
        #[arg(long = "opening", required = true)]
        openings: Vec<PathBuf>,
    },
    /// Verifier: check the board; exits 0 only on accept.
    Verify {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        board: BoardArgs,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        vk: PathBuf,
    },
}

#[derive(Args, Clone)]
struct ParamArgs {
    /// Parameters file (overrides the flags below).
    #[arg(long = "params")]
    file: Option<PathBuf>,
    #[arg(long)]
    m: Option<usize>,
    /// `A:B` for the integers A..=B, or a comma-separated list.
    #[arg(long, default_value = "0:99")]
    range: String,
    /// File with one range value per line or whitespace separated.
    #[arg(long)]
    range_file: Option<PathBuf>,
    #[arg(long, default_value = "1")]
    epsilon: String,
    #[arg(long, default_value = "setk")]
    method: String,
    #[arg(long, default_value_t = DEFAULT_TABLE_LEN)]
    l: usize,
    #[arg(long)]
    bit_width: Option<u32>,
}

#[derive(Args, Clone)]
struct BoardArgs {
    /// `memory`, `file:PATH` or `tcp:HOST:PORT`.
    #[arg(long, env = "VEREXP_BOARD", default_value = "memory")]
    board: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Mock,
    External,
}

#[derive(Args, Clone)]
struct BackendArgs {
    #[arg(long, value_enum, default_value = "mock")]
    backend: BackendKind,
    /// Executable implementing the external backend protocol.
    #[arg(long, env = "VEREXP_BACKEND_CMD")]
    backend_cmd: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct PipelineArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[command(flatten)]
    board: BoardArgs,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Explicit provider inputs, comma-separated.
    #[arg(long)]
    inputs: Option<String>,
    /// provider-input, provider-randomness, med, commitment or range.
    #[arg(long)]
    tamper: Option<String>,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: u32,
    /// Write the transcript JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum AuditKind {
    /// Exhaustive adjacent-database ratio and additive-gap audit.
    Dp {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = 10_000_000)]
        max_pairs: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Utility tail bounds for one database or all of range^m.
    Utility {
        #[command(flatten)]
        params: ParamArgs,
        /// Comma-separated database; every database when absent.
        #[arg(long)]
        db: Option<String>,
        #[arg(long, default_value_t = 100_000)]
        max_dbs: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Table approximation error and ratio invariants.
    Table {
        #[arg(long, default_value = "1")]
        epsilon: String,
        #[arg(long, default_value_t = DEFAULT_TABLE_LEN)]
        l: usize,
        #[arg(long, default_value = "setk")]
        method: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distance of the reduced randomness from uniform.
    Rho {
        #[arg(long)]
        p: String,
        #[arg(long)]
        s: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Chi-square test of sampled outputs against the exact distribution.
    Chisq {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        db: String,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 1e-3)]
        significance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Command outcome: `Ok(true)` maps to exit 0, `Ok(false)` to exit 1.
type Outcome = Result<bool>;

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Param(_)
        | Error::InputShape(_)
        | Error::Domain(_)
        | Error::Precondition(_)
        | Error::AuditScope(_)
        | Error::Overflow(_)
        | Error::Json(_) => 2,
        Error::IncompleteBoard(_) => 3,
        Error::Transport(_) => 4,
        _ => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("verexp: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn parse_list(s: &str) -> Result<Vec<u64>> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| Error::Param(format!("not an integer: {t:?}"))))
        .collect()
}

fn parse_range(s: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once(':') {
        let a: u64 = a.trim().parse().map_err(|_| Error::Param(format!("bad range start in {s:?}")))?;
        let b: u64 = b.trim().parse().map_err(|_| Error::Param(format!("bad range end in {s:?}")))?;
        if a > b {
            return Err(Error::Param(format!("empty range {s:?}")));
        }
        return Ok((a..=b).collect());
    }
    parse_list(s)
}

fn method(s: &str) -> Result<Method> {
    Method::from_str(s)
}

impl ParamArgs {
    fn load(&self) -> Result<ProtocolParams> {
        let params = self.load_unchecked()?;
        params.ensure_valid()?;
        Ok(params)
    }

    /// For audits, which never touch the field or the circuit.
    fn load_for_audit(&self) -> Result<ProtocolParams> {
        let params = self.load_unchecked()?;
        params.ensure_mechanism_valid()?;
        Ok(params)
    }

    fn load_unchecked(&self) -> Result<ProtocolParams> {
        Ok(match &self.file {
            Some(path) => ProtocolParams::from_json_str(&fs::read_to_string(path)?)?,
            None => {
                let m = self.m.ok_or_else(|| Error::Param("--m or --params is required".into()))?;
                let range = match &self.range_file {
                    Some(path) => parse_list(&fs::read_to_string(path)?)?,
                    None => parse_range(&self.range)?,
                };
                let mut p = ProtocolParams::with_table_len(range, m, Epsilon::parse(&self.epsilon)?, method(&self.method)?, self.l)?;
                if let Some(w) = self.bit_width {
                    p.bit_width = w;
                }
                p
            }
        })
    }
}

impl BackendArgs {
    fn build(&self, seed: u64) -> Result<Box<dyn Backend>> {
        Ok(match self.backend {
            BackendKind::Mock => Box::new(MockBackend::new(seed)),
            BackendKind::External => {
                let cmd = self.backend_cmd.clone().ok_or_else(|| {
                    Error::Param("--backend external needs --backend-cmd or VEREXP_BACKEND_CMD".into())
                })?;
                Box::new(ExternalBackend::new(cmd))
            }
        })
    }
}

fn write_out(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(fs::write(path, contents)?)
}

fn emit_report<T: Serialize>(report: &T, out: &Option<PathBuf>) -> Result<()> {
    if let Some(path) = out {
        write_out(path, serde_json::to_string_pretty(report)?.as_bytes())?;
    }
    Ok(())
}

fn verdict_word(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn ms(d: Duration) -> String {
    format!("{:.1}ms", d.as_secs_f64() * 1e3)
}

fn dispatch(command: Command) -> Outcome {
    match command {
        Command::Table { epsilon, l, method: m, out } => {
            let table = build_table(&Epsilon::parse(&epsilon)?, l, method(&m)?)?;
            let json = verexp::params::canonical_json(&table.to_json());
            match out {
                Some(path) => write_out(&path, json.as_bytes())?,
                None => println!("{json}"),
            }
            eprintln!("{} entries, head {}, tail {}", table.len(), table.head(), table.tail());
            Ok(true)
        }
        Command::Params { params, out } => {
            let p = params.load()?;
            let json = serde_json::to_string_pretty(&p.to_json())?;
            match out {
                Some(path) => write_out(&path, json.as_bytes())?,
                None => println!("{json}"),
            }
            Ok(true)
        }
        Command::Pipeline(args) => {
            let (transcript, timings) = pipeline_once(&args)?;
            let v = &transcript.verdict;
            match v.med {
                Some(med) if v.accept => println!("accept med={med}"),
                _ => println!("reject: {}", v.reasons.join("; ")),
            }
            println!("t_w={} t_p={} t_v={}", ms(timings.witness), ms(timings.prove), ms(timings.verify));
            if let Some(path) = &args.out {
                write_out(path, transcript.to_json().as_bytes())?;
            }
            Ok(v.accept)
        }
        Command::Bench { run, repeat } => {
            let mut all = true;
            println!("{:>4} {:>6} {:>12} {:>12} {:>12}  verdict", "run", "m", "t_w", "t_p", "t_v");
            for i in 0..repeat.max(1) {
                let mut args = run.clone();
                args.seed = run.seed.wrapping_add(i as u64);
                args.board.board = "memory".into();
                let (t, tm) = pipeline_once(&args)?;
                all &= t.verdict.accept;
                println!(
                    "{:>4} {:>6} {:>12} {:>12} {:>12}  {}",
                    i,
                    t.params.m,
                    ms(tm.witness),
                    ms(tm.prove),
                    ms(tm.verify),
                    if t.verdict.accept { "accept" } else { "reject" }
                );
            }
            Ok(all)
        }
        Command::Audit { kind } => run_audit(kind),
        Command::BoardServe { addr, file } => {
            let board: Arc<dyn verexp::protocol::Board> = match &file {
                Some(path) => Arc::new(FileBoard::open(path)?),
                None => Arc::new(MemoryBoard::new()),
            };
            let listener = TcpListener::bind(&addr)?;
            let handle = serve(listener, board)?;
            println!("listening on {}", handle.addr());
            std::io::stdout().flush()?;
            handle.join();
            Ok(true)
        }
        Command::Setup { params, backend, seed, lambda, pk, vk } => {
            let p = params.load()?;
            let cs = synthesize_main(&p)?;
            let keys = backend.build(seed)?.setup(&cs, lambda)?;
            write_out(&pk, &keys.pk.to_bytes())?;
            write_out(&vk, &keys.vk.to_bytes())?;
            println!("{} constraints, {} variables, params digest {}", cs.num_constraints(), cs.num_vars(), keys.params_digest());
            Ok(true)
        }
        Command::Commit { params, board, owner, x, seed, opening } => {
            let p = params.load()?;
            let f = PrimeField::new(&p.p)?;
            let board = open_board(&board.board)?;
            let mut rng = match seed {
                Some(s) => ChaCha20Rng::seed_from_u64(s),
                None => ChaCha20Rng::from_entropy(),
            };
            let rec = provider_commit(&owner, x, &p, &mut rng, board.as_ref())?;
            write_out(&opening, serde_json::to_string_pretty(&rec.opening(&f))?.as_bytes())?;
            println!("{owner} committed at board index {}", rec.board_index);
            Ok(true)
        }
        Command::Prove { params, board, backend, pk, openings } => {
            let p = params.load()?;
            let f = PrimeField::new(&p.p)?;
            let board = open_board(&board.board)?;
            let pk = ProvingKey::from_bytes(&fs::read(&pk)?)?;
            let openings: Vec<Opening> = openings
                .iter()
                .map(|path| -> Result<Opening> { Ok(serde_json::from_str(&fs::read_to_string(path)?)?) })
                .collect::<Result<_>>()?;
            let cs = synthesize_main(&p)?;
            let outcome = verexp_prove(backend.build(0)?.as_ref(), &pk, &cs, &p, &openings)?;
            let (ri, pi) = post_result(board.as_ref(), ANALYST, &p.digest()?, &f, &outcome.range, &outcome.outputs, &outcome.proof)?;
            println!("med={} result at {ri}, proof at {pi}", outcome.outputs.med);
            println!("t_w={} t_p={}", ms(outcome.witness_time), ms(outcome.prove_time));
            Ok(true)
        }
        Command::Verify { params, board, backend, vk } => {
            let p = params.load()?;
            let board = open_board(&board.board)?;
            let vk = VerifyingKey::from_bytes(&fs::read(&vk)?)?;
            let v = verexp_verify(backend.build(0)?.as_ref(), &vk, &p, board.as_ref())?;
            match v.med {
                Some(med) if v.accept => println!("accept med={med}"),
                _ => println!("reject: {}", v.reasons.join("; ")),
            }
            Ok(v.accept)
        }
    }
}

fn pipeline_once(args: &PipelineArgs) -> Result<(verexp::protocol::Transcript, verexp::protocol::Timings)> {
    let p = args.params.load()?;
    let mut config = PipelineConfig::new(p, args.seed);
    config.lambda = args.lambda;
    config.tamper = args.tamper.as_deref().map(Tamper::parse).transpose()?;
    config.inputs = args.inputs.as_deref().map(parse_list).transpose()?;
    let backend = args.backend.build(args.seed)?;
    let board = open_board(&args.board.board)?;
    let transcript = run_pipeline(&config, backend.as_ref(), board.as_ref())?;
    let timings = transcript.timings.clone();
    Ok((transcript, timings))
}

fn run_audit(kind: AuditKind) -> Outcome {
    match kind {
        AuditKind::Dp { params, max_pairs, out } => {
            let p = params.load_for_audit()?;
            let r = audit::dp_ratio_audit(&p, max_pairs)?;
            println!("{:<26} {}", "databases", r.databases);
            println!("{:<26} {}", "adjacent pairs", r.adjacent_pairs);
            match r.max_ratio_approx {
                Some(v) => println!("{:<26} {v:.6}", "max ratio"),
                None => println!("{:<26} -", "max ratio"),
            }
            println!("{:<26} {:.6}", "e^eps", r.e_epsilon.approx);
            println!("{:<26} {}", "additive gap", r.additive_gap);
            println!("{:<26} {:.6e}", "gap bound", r.delta_bound.approx);
            println!("{:<26} {}", "one-sided zero elements", r.one_sided_zero_elements);
            for f in &r.failures {
                println!("failure: {f}");
            }
            println!("{}", verdict_word(r.pass));
            emit_report(&r, &out)?;
            Ok(r.pass)
        }
        AuditKind::Utility { params, db, max_dbs, out } => {
            let p = params.load_for_audit()?;
            let reports = match db {
                Some(db) => vec![audit::utility_bound_audit(&p, &parse_list(&db)?, None)?],
                None => audit::utility_bound_sweep(&p, max_dbs)?,
            };
            let pass = reports.iter().all(|r| r.pass);
            println!("{:<10} {:>8} {:>20} {:>14}", "c", "dbs", "worst Pr", "bound");
            if let [r] = reports.as_slice() {
                for row in &r.rows {
                    println!("{:<10} {:>8} {:>20} {:>14.6}", row.c, 1, row.probability, row.bound.approx);
                }
            } else {
                let failing = reports.iter().filter(|r| !r.pass).count();
                println!("{} databases, {} failing", reports.len(), failing);
            }
            println!("{}", verdict_word(pass));
            emit_report(&reports, &out)?;
            Ok(pass)
        }
        AuditKind::Table { epsilon, l, method: m, out } => {
            let table = build_table(&Epsilon::parse(&epsilon)?, l, method(&m)?)?;
            let r = audit::table_error_audit(&table)?;
            println!("{:<14} {:.6} (index {})", "max error", r.max_error.approx, r.worst_index);
            println!("{:<14} {:.6}", "bound", r.bound.approx);
            println!("{:<14} {}", "shape", if r.shape_ok { "ok" } else { "violated" });
            println!("{}", verdict_word(r.pass));
            emit_report(&r, &out)?;
            Ok(r.pass)
        }
        AuditKind::Rho { p, s, out } => {
            let big = |v: &str| BigUint::from_str(v).map_err(|_| Error::Param(format!("not a non-negative integer: {v:?}")));
            let r = audit::rho_distance(&big(&p)?, &big(&s)?)?;
            println!("{:<12} {}", "distance", r.closed_form);
            println!("{:<12} {}", "brute force", r.brute_force.as_deref().unwrap_or("-"));
            println!("{:<12} {}", "bound", r.bound);
            println!("{}", verdict_word(r.pass));
            emit_report(&r, &out)?;
            Ok(r.pass)
        }
        AuditKind::Chisq { params, db, trials, significance, seed, out } => {
            let p = params.load_for_audit()?;
            let r = audit::sampling_chisquare(&p, &parse_list(&db)?, trials, significance, seed)?;
            println!("{:<12} {:.4} (df {})", "statistic", r.statistic, r.df);
            println!("{:<12} {:.6}", "p-value", r.p_value);
            println!("{:<12} {:?}", "zero hits", r.zero_mass_hits);
            println!("{}", verdict_word(r.pass));
            emit_report(&r, &out)?;
            Ok(r.pass)
        }
    }
}
