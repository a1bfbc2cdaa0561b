//! `drablocus` command-line front end.
//!
//! Exit codes: 0 success, 1 verification or feasibility failure (or a
//! simulator fault), 2 usage error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use drablocus::aes_ref::Aes128;
use drablocus::hex::{format_block, parse_block};
use drablocus::metrics::report::{self, Record};
use drablocus::metrics::Catalog;
use drablocus::simulator::{measure_cadence, parse_jobs, write_outputs, Circuit, Job, RunResult, Simulator};
use drablocus::tables::{build_mixcolumns_image, build_sbox_image, RomImage};
use drablocus::{Error, Mode};

#[derive(Parser)]
#[command(name = "drablocus", version, about = "Cycle-accurate AES-128 pipeline model and evaluation reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the known-answer vectors through the reference cipher and the simulator
    Vectors {
        #[arg(long, value_enum, default_value_t = EngineSet::Both)]
        engine: EngineSet,
        /// Test hook: flip one bit of each S-box entry the vectors look up first
        #[arg(long, hide = true)]
        corrupt_sbox: bool,
    },
    /// Encrypt a file block by block (no padding, no chaining)
    Encrypt(CryptArgs),
    /// Decrypt a file block by block (no padding, no chaining)
    Decrypt(CryptArgs),
    /// Run job files through the cycle-accurate pipeline
    Simulate {
        #[command(flatten)]
        key: KeyArg,
        /// Job file; repeat to run several files on worker threads
        #[arg(long = "jobs", required = true)]
        jobs: Vec<PathBuf>,
        /// Per-cycle trace (only with a single job file)
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Clock for the ns and Gbps figures; defaults to the catalog's DRAB-LOCUS clock
        #[arg(long)]
        freq: Option<f64>,
        /// Output blocks go here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Resource, efficiency, power and co-location reports
    Metrics {
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Restrict every report to one design
        #[arg(long)]
        design: Option<String>,
        #[arg(long, value_enum, default_value_t = ReportKind::All)]
        table: ReportKind,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Resources left after placing an accelerator and an AES design together
    Colocate {
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Defaults to the accelerator's own device
        #[arg(long)]
        device: Option<String>,
        #[arg(long, required_unless_present = "all")]
        accel: Option<String>,
        #[arg(long, required_unless_present = "all")]
        aes: Option<String>,
        /// Every accelerator against every design
        #[arg(long, conflicts_with_all = ["accel", "aes", "device"])]
        all: bool,
    },
    /// Write a memory image as one hex word per line
    DumpTables {
        #[arg(value_enum)]
        table: TableKind,
        /// Cipher key, for the key store
        #[arg(long, env = "DRABLOCUS_KEY")]
        key: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct KeyArg {
    /// 32 hex digits
    #[arg(long, env = "DRABLOCUS_KEY", hide_env_values = true)]
    key: String,
}

#[derive(clap::Args)]
struct CryptArgs {
    #[command(flatten)]
    key: KeyArg,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Engine::Ref)]
    engine: Engine,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Engine {
    Ref,
    Sim,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EngineSet {
    Ref,
    Sim,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportKind {
    All,
    Design,
    Efficiency,
    Power,
    Colocation,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Jsonl,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TableKind {
    Sbox,
    MixColumns,
    KeyStore,
}

/// Bad flags or unusable input: exit 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Input problems are usage errors; simulator faults and I/O are failures.
fn lib_error(e: Error) -> anyhow::Error {
    match e {
        Error::Parse { .. } | Error::UnknownName { .. } | Error::Catalog(_) | Error::Precondition(_) => usage(e.to_string()),
        other => other.into(),
    }
}

fn parse_key(s: &str) -> Result<u128> {
    parse_block(s.trim()).map_err(|e| match e {
        Error::Parse { message, .. } => usage(format!("bad key: {message}")),
        other => usage(format!("bad key: {other}")),
    })
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn load_catalog(path: Option<&Path>) -> Result<Catalog> {
    match path {
        Some(p) => Catalog::load(p).map_err(|e| match e {
            Error::Io(io) => usage(format!("cannot read {}: {io}", p.display())),
            other => usage(format!("{}: {other}", p.display())),
        }),
        None => Ok(Catalog::reference()),
    }
}

/// Sink for results: a file if given, else stdout.
fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(io::BufWriter::new(
            fs::File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        // a closed pipe downstream (`| head`) is not worth a message
        Err(e) if e.downcast_ref::<io::Error>().is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe) => ExitCode::from(1),
        Err(e) => {
            eprintln!("drablocus: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Vectors { engine, corrupt_sbox } => vectors(engine, corrupt_sbox),
        Command::Encrypt(args) => crypt(Mode::Encrypt, args),
        Command::Decrypt(args) => crypt(Mode::Decrypt, args),
        Command::Simulate { key, jobs, trace, freq, out } => simulate(&key.key, &jobs, trace.as_deref(), freq, out.as_deref()),
        Command::Metrics { catalog, design, table, format } => metrics(catalog.as_deref(), design.as_deref(), table, format),
        Command::Colocate { catalog, device, accel, aes, all } => {
            let cat = load_catalog(catalog.as_deref())?;
            if all {
                let records = report::colocation_records(&cat).map_err(lib_error)?;
                write!(io::stdout(), "{}", report::colocation_table(&cat, &records))?;
                return Ok(ExitCode::SUCCESS);
            }
            let (accel, aes) = (accel.expect("required by clap"), aes.expect("required by clap"));
            let c = cat.colocate(device.as_deref(), &accel, &aes).map_err(lib_error)?;
            writeln!(io::stdout(), "{} {} {} {}", c.slices, c.brams, c.dsps, if c.feasible { "feasible" } else { "infeasible" })?;
            Ok(if c.feasible { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::DumpTables { table, key, out } => {
            let image = match table {
                TableKind::Sbox => build_sbox_image(),
                TableKind::MixColumns => build_mixcolumns_image(),
                TableKind::KeyStore => {
                    let key = key.ok_or_else(|| usage("the key store needs --key or DRABLOCUS_KEY"))?;
                    simulated_key_store(parse_key(&key)?)?
                }
            };
            let mut w = sink(out.as_deref())?;
            image.dump_hex(&mut w)?;
            w.flush()?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// The key store as the pipeline's own key initialization leaves it.
fn simulated_key_store(key: u128) -> Result<RomImage> {
    let mut c = Circuit::new(key)?;
    c.wait_ready(None).map_err(lib_error)?;
    Ok(c.keys.store_contents())
}

const VECTORS: [(&str, u128, u128, u128); 2] = [
    (
        "cipher-example",
        0x2b7e151628aed2a6abf7158809cf4f3c,
        0x3243f6a8885a308d313198a2e0370734,
        0x3925841d02dc09fbdc118597196a0b32,
    ),
    (
        "aes128-example",
        0x000102030405060708090a0b0c0d0e0f,
        0x00112233445566778899aabbccddeeff,
        0x69c4e0d86a7b0430d8cdb78070b4c55a,
    ),
];

fn vectors(engine: EngineSet, corrupt_sbox: bool) -> Result<ExitCode> {
    let mut sbox = build_sbox_image();
    if corrupt_sbox {
        for (_, key, pt, _) in VECTORS {
            sbox.words_mut()[((key ^ pt) >> 120) as usize] ^= 0x01;
        }
    }
    let mut failures = 0;
    let mut stdout = io::stdout().lock();
    let mut report = |engine: &str, name: &str, mode: Mode, got: u128, want: u128| -> io::Result<()> {
        if got == want {
            writeln!(stdout, "PASS {engine} {name} {mode} {}", format_block(got))
        } else {
            failures += 1;
            writeln!(stdout, "FAIL {engine} {name} {mode} got {} want {}", format_block(got), format_block(want))
        }
    };
    for (name, key, pt, ct) in VECTORS {
        if engine != EngineSet::Sim {
            let aes = Aes128::new(key);
            report("ref", name, Mode::Encrypt, aes.encrypt(pt), ct)?;
            report("ref", name, Mode::Decrypt, aes.decrypt(ct), pt)?;
        }
        if engine != EngineSet::Ref {
            let sim = Simulator::new(key).with_images(sbox.clone(), build_mixcolumns_image());
            let jobs = [Job::new(0, Mode::Encrypt, pt), Job::new(1, Mode::Decrypt, ct)];
            let run = sim.run(&jobs)?;
            let got = run.outputs_in_input_order(&jobs);
            report("sim", name, Mode::Encrypt, got[0].block, ct)?;
            report("sim", name, Mode::Decrypt, got[1].block, pt)?;
        }
    }
    if failures > 0 {
        eprintln!("drablocus: {failures} vector check(s) failed");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn crypt(mode: Mode, args: CryptArgs) -> Result<ExitCode> {
    let key = parse_key(&args.key.key)?;
    let data = read_input(&args.input)?;
    if data.len() % 16 != 0 {
        return Err(usage(format!(
            "{} is {} bytes, not a multiple of 16 (raw block mode has no padding)",
            args.input.display(),
            data.len()
        )));
    }
    let blocks: Vec<u128> = data.chunks_exact(16).map(drablocus::hex::block_from_bytes).collect();
    let processed: Vec<u128> = match args.engine {
        _ if blocks.is_empty() => Vec::new(),
        Engine::Ref => {
            let aes = Aes128::new(key);
            blocks.iter().map(|&b| aes.process(mode, b)).collect()
        }
        Engine::Sim => {
            let jobs: Vec<Job> = blocks.iter().enumerate().map(|(i, &b)| Job::new(i as u64, mode, b)).collect();
            let run = Simulator::new(key).run(&jobs)?;
            run.outputs_in_input_order(&jobs).iter().map(|o| o.block).collect()
        }
    };
    let bytes: Vec<u8> = processed.iter().flat_map(|b| b.to_be_bytes()).collect();
    fs::write(&args.out, bytes).with_context(|| format!("cannot write {}", args.out.display()))?;
    Ok(ExitCode::SUCCESS)
}

fn simulate(key: &str, files: &[PathBuf], trace: Option<&Path>, freq: Option<f64>, out: Option<&Path>) -> Result<ExitCode> {
    let key = parse_key(key)?;
    if trace.is_some() && files.len() > 1 {
        return Err(usage("--trace takes a single --jobs file"));
    }
    let freq = match freq {
        Some(f) if f.is_finite() && f > 0.0 => f,
        Some(f) => return Err(usage(format!("--freq must be a positive clock in MHz, got {f}"))),
        None => Catalog::reference()
            .design("DRAB-LOCUS")
            .ok()
            .and_then(|d| d.frequency_mhz)
            .ok_or_else(|| anyhow!("reference catalog has no DRAB-LOCUS clock"))?,
    };
    let mut job_lists = Vec::with_capacity(files.len());
    for f in files {
        let text = String::from_utf8(read_input(f)?).map_err(|_| usage(format!("{} is not UTF-8", f.display())))?;
        let jobs = parse_jobs(&text).map_err(|e| usage(format!("{}: {e}", f.display())))?;
        if jobs.is_empty() {
            return Err(usage(format!("{}: no jobs", f.display())));
        }
        job_lists.push(jobs);
    }

    let sim = Simulator::new(key);
    let results: Vec<Result<RunResult, Error>> = if let Some(path) = trace {
        let mut w = io::BufWriter::new(fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?);
        let r = sim.run_traced(&job_lists[0], &mut w);
        w.flush()?;
        vec![r]
    } else {
        // one circuit per worker
        std::thread::scope(|s| {
            let handles: Vec<_> = job_lists.iter().map(|jobs| s.spawn(|| sim.run(jobs))).collect();
            handles.into_iter().map(|h| h.join().expect("simulation worker panicked")).collect()
        })
    };

    let mut w = sink(out)?;
    let mut summary = String::new();
    for ((file, jobs), result) in files.iter().zip(&job_lists).zip(results) {
        let run = result.with_context(|| format!("simulating {}", file.display()))?;
        if files.len() > 1 {
            writeln!(w, "# {}", file.display())?;
        }
        write_outputs(&run.outputs_in_input_order(jobs), &mut w)?;
        summary.push_str(&summarize(file, &run, freq));
    }
    w.flush()?;
    drop(w);
    io::stdout().write_all(summary.as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

/// Run summary as `#` lines so it can share stdout with the output blocks.
fn summarize(file: &Path, run: &RunResult, freq: f64) -> String {
    let s = &run.summary;
    let lat: Vec<u64> = s.blocks.iter().map(|b| b.latency()).collect();
    let (lo, hi) = (lat.iter().min().copied().unwrap_or(0), lat.iter().max().copied().unwrap_or(0));
    let period = 1000.0 / freq;
    let cad = measure_cadence(s, freq);
    let mut out = format!(
        "# summary {}: blocks={} total_cycles={} key_init_cycles={} flush_cycles={} stall_cycles={} max_in_flight={}\n",
        file.display(),
        s.blocks.len(),
        s.total_cycles,
        s.key_init_cycles,
        s.flush_cycles,
        s.stall_cycles,
        s.max_in_flight
    );
    out.push_str(&format!(
        "# latency min={lo} max={hi} cycles ({:.3} ns at {freq} MHz)\n",
        hi as f64 * period
    ));
    match (cad.measured, cad.window, cad.measured_gbps) {
        (Some(m), Some((blocks, cycles)), Some(g)) => out.push_str(&format!(
            "# cadence {blocks} blocks / {cycles} cycles = {m:.5} blk/cyc ({g:.4} Gbps); ideal {:.5} ({:.4} Gbps)\n",
            cad.ideal, cad.ideal_gbps
        )),
        _ => out.push_str(&format!(
            "# cadence not measured (needs {} jobs); ideal {:.5} blk/cyc ({:.4} Gbps)\n",
            drablocus::simulator::SATURATION_JOBS,
            cad.ideal,
            cad.ideal_gbps
        )),
    }
    out
}

fn metrics(catalog: Option<&Path>, design: Option<&str>, kind: ReportKind, format: Format) -> Result<ExitCode> {
    let mut cat = load_catalog(catalog)?;
    if let Some(name) = design {
        cat.design(name).map_err(lib_error)?;
        cat.designs.retain(|d| d.name == name);
    }
    let want = |k: ReportKind| kind == ReportKind::All || kind == k;
    let mut sections: Vec<(&str, Vec<Record>, String)> = Vec::new();
    if want(ReportKind::Design) {
        sections.push(("Resources and performance", report::design_records(&cat), report::design_table(&cat)));
    }
    if want(ReportKind::Efficiency) {
        let r = report::efficiency_records(&cat).map_err(lib_error)?;
        let t = report::efficiency_table(&r);
        sections.push(("Throughput per resource (Mbps per unit)", r, t));
    }
    if want(ReportKind::Power) {
        let r = report::power_records(&cat);
        let t = report::power_table(&r);
        sections.push(("Power and energy per block", r, t));
    }
    if want(ReportKind::Colocation) {
        let r = report::colocation_records(&cat).map_err(lib_error)?;
        let t = report::colocation_table(&cat, &r);
        sections.push(("Co-location remainders", r, t));
    }
    let mut stdout = io::stdout().lock();
    for (i, (title, records, table)) in sections.iter().enumerate() {
        match format {
            Format::Table => {
                if i > 0 {
                    writeln!(stdout)?;
                }
                writeln!(stdout, "{title}\n")?;
                write!(stdout, "{table}")?;
            }
            Format::Jsonl => {
                for r in records {
                    writeln!(stdout, "{}", r.to_json_line())?;
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
