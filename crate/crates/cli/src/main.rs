// SPDX-License-Identifier: Apache-2.0
//! `rfsync`: demo experiments and config-driven runs of the multi-board
//! simulator. Exit codes: 0 success, 2 usage or schema error, 3 simulation
//! error, 1 output I/O failure.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use rfsync_core::demos::{
    cz_chevron, res_flux, sync_bench, ChevronConfig, ChevronError, LengthMode, Range, ResFluxConfig, ResFluxError,
    SkewSummary, SyncBenchConfig, SyncBenchError,
};
use rfsync_core::orchestrator::{
    compile, run_experiment, sha256_hex, trace, ConfigError, ExecError, ExperimentConfig, RunError, RunMeta,
    SimContext,
};
use rfsync_core::qpu::{QpuError, QpuParams};

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `println!` that ignores a closed stdout.
macro_rules! say {
    ($($t:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Parser)]
#[command(name = "rfsync", version, about = "Deterministic multi-board qubit-control simulator")]
struct Cli {
    /// Simulation seed; defaults to 1.
    #[arg(long, global = true, env = "RFSYNC_SEED")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Lengths {
    Random,
    Sweep,
}

#[derive(Subcommand)]
enum Command {
    /// Cross-board pulse skew over repeated SYNC barriers.
    SyncBench {
        #[arg(long, default_value_t = 2)]
        boards: usize,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        /// RMS jitter of each board's sample clock.
        #[arg(long, default_value_t = 0.0)]
        jitter_ps: f64,
        /// Use the original SYNC resume rule.
        #[arg(long)]
        legacy: bool,
        /// Leave converter tiles unsynchronized.
        #[arg(long)]
        no_mts: bool,
        /// Filler lengths before SYNC: random, or a sweep over board 0.
        #[arg(long, value_enum, default_value = "random")]
        lengths: Lengths,
        #[arg(long, default_value = "out/sync-bench")]
        out: PathBuf,
    },
    /// Resonator response against probe frequency and flux bias on all qubits.
    ResFlux {
        /// QPU parameter file (JSON); the built-in table by default.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Probe offset from each bare resonator in Hz, START:STOP:STEP.
        #[arg(long, allow_hyphen_values = true)]
        freq_range: Option<Range>,
        /// Flux bias in V, START:STOP:STEP or one value.
        #[arg(long, allow_hyphen_values = true)]
        bias_range: Option<Range>,
        #[arg(long)]
        nshots: Option<usize>,
        #[arg(long, default_value = "out/res-flux")]
        out: PathBuf,
    },
    /// |11> population against flux pulse amplitude and duration.
    CzChevron {
        /// High- and low-frequency qubit, e.g. `q2,q7`.
        #[arg(long, default_value = "q2,q7")]
        pair: String,
        /// Flux excursion in V; 41 points around the resonance by default.
        #[arg(long, allow_hyphen_values = true)]
        amp_range: Option<Range>,
        /// Flux pulse duration in ns.
        #[arg(long)]
        dur_range: Option<Range>,
        #[arg(long)]
        nshots: Option<usize>,
        #[arg(long)]
        allow_same_board: bool,
        /// QPU parameter file (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out/cz-chevron")]
        out: PathBuf,
    },
    /// Run an experiment config and write its ResultSet.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "out/run")]
        out: PathBuf,
        /// Write `result.bin` instead of `result.csv`.
        #[arg(long)]
        raw: bool,
    },
    /// Write the timing-processor event trace of one batch of a config.
    Trace {
        config: PathBuf,
        /// Host-loop batch to trace.
        #[arg(long, default_value_t = 0)]
        batch: usize,
        #[arg(long, default_value = "out/trace.csv")]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Sim(String),
    Output(PathBuf, std::io::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Sim(_) => 3,
            CliError::Output(..) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Sim(m) => f.write_str(m),
            CliError::Output(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Compile(_) | RunError::CompileBatch { .. } => CliError::Usage(e.to_string()),
            RunError::Exec { .. } => CliError::Sim(e.to_string()),
        }
    }
}

impl From<ExecError> for CliError {
    fn from(e: ExecError) -> Self {
        match e {
            ExecError::Qpu(_) => CliError::Usage(e.to_string()),
            _ => CliError::Sim(e.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<QpuError> for CliError {
    fn from(e: QpuError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<SyncBenchError> for CliError {
    fn from(e: SyncBenchError) -> Self {
        match e {
            SyncBenchError::Lockstep { .. } | SyncBenchError::MissingPulse { .. } => CliError::Sim(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<ResFluxError> for CliError {
    fn from(e: ResFluxError) -> Self {
        match e {
            ResFluxError::Run(r) => r.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<ChevronError> for CliError {
    fn from(e: ChevronError) -> Self {
        match e {
            ChevronError::Run(r) => r.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

/// Written as `manifest.json` next to every output.
#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config_path: Option<String>,
    /// Hash of the config file, or of the effective demo settings.
    config_sha256: String,
    seed: u64,
    out_dir: String,
    version: &'static str,
}

struct Out {
    dir: PathBuf,
}

impl Out {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Output(dir.into(), e))?;
        Ok(Out { dir: dir.into() })
    }

    fn write(&self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let err = |e| CliError::Output(path.clone(), e);
        let mut w = BufWriter::new(File::create(&path).map_err(err)?);
        f(&mut w).and_then(|_| w.flush()).map_err(err)?;
        info!("wrote {}", path.display());
        Ok(())
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
            writeln!(w)
        })
    }

    fn manifest(&self, command: &str, config: Option<&Path>, sha: String, seed: u64) -> Result<(), CliError> {
        self.json(
            "manifest.json",
            &RunManifest {
                command,
                config_path: config.map(|p| p.display().to_string()),
                config_sha256: sha,
                seed,
                out_dir: self.dir.display().to_string(),
                version: VERSION,
            },
        )
    }
}

fn read_input(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn load_qpu(path: Option<&Path>) -> Result<(QpuParams, Option<String>), CliError> {
    match path {
        None => Ok((QpuParams::default_table(), None)),
        Some(p) => {
            let text = read_input(p)?;
            let params = QpuParams::from_json(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            params.validate()?;
            Ok((params, Some(text)))
        }
    }
}

/// `q2,q7` or `2,7`.
fn parse_pair(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Usage(format!("--pair: expected qH,qL, got `{s}`"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    let q = |t: &str| t.trim().trim_start_matches('q').parse::<usize>().map_err(|_| bad());
    Ok((q(a)?, q(b)?))
}

fn settings_hash<T: Serialize>(settings: &T, file: Option<&str>) -> String {
    let mut text = serde_json::to_string(settings).expect("serializable settings");
    if let Some(f) = file {
        text.push('\n');
        text.push_str(f);
    }
    sha256_hex(text.as_bytes())
}

#[derive(Serialize)]
struct SyncSummary<'a> {
    boards: usize,
    reps: usize,
    jitter_ps: f64,
    legacy: bool,
    mts: bool,
    skew: &'a SkewSummary,
    tile_skew: &'a SkewSummary,
    resume_offsets_cycles: Vec<u64>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let seed = cli.seed.unwrap_or(1);
    match cli.command {
        Command::SyncBench {
            boards,
            reps,
            jitter_ps,
            legacy,
            no_mts,
            lengths,
            out,
        } => {
            let cfg = SyncBenchConfig {
                boards,
                reps,
                jitter_ps,
                legacy,
                mts: !no_mts,
                seed,
                lengths: match lengths {
                    Lengths::Random => LengthMode::Random,
                    Lengths::Sweep => LengthMode::Sweep,
                },
                ..SyncBenchConfig::default()
            };
            let r = sync_bench(&cfg)?;
            let out = Out::new(&out)?;
            out.write("sync_bench.csv", |w| r.write_csv(w))?;
            out.json(
                "summary.json",
                &SyncSummary {
                    boards,
                    reps,
                    jitter_ps,
                    legacy,
                    mts: cfg.mts,
                    skew: &r.summary,
                    tile_skew: &r.tile_summary,
                    resume_offsets_cycles: r.offset_set.iter().copied().collect(),
                },
            )?;
            out.manifest("sync-bench", None, settings_hash(&cfg, None), seed)?;
            let s = &r.summary;
            say!(
                "{reps} reps: max {:.1} ps, rms {:.1} ps, p99.9 {:.1} ps; resume offsets {:?} cycles",
                s.max_fs / 1e3,
                s.rms_fs / 1e3,
                s.p999_fs / 1e3,
                r.offset_set
            );
        }
        Command::ResFlux {
            config,
            freq_range,
            bias_range,
            nshots,
            out,
        } => {
            let (params, text) = load_qpu(config.as_deref())?;
            let d = ResFluxConfig::default();
            let cfg = ResFluxConfig {
                freq: freq_range.unwrap_or(d.freq),
                bias: bias_range.unwrap_or(d.bias),
                nshots: nshots.unwrap_or(d.nshots),
                seed,
                ..d
            };
            let r = res_flux(&params, &cfg)?;
            let out = Out::new(&out)?;
            for q in 0..r.f_bare_hz.len() {
                out.write(&format!("res_flux_q{q}.csv"), |w| r.write_qubit_csv(q, w))?;
            }
            out.write("sweet_spots.csv", |w| r.write_sweet_spots_csv(w))?;
            out.manifest("res-flux", config.as_deref(), settings_hash(&cfg, text.as_deref()), seed)?;
            for s in &r.sweet_spots {
                say!("q{}: sweet spot {:.4} V (table {:.4} V)", s.qubit, s.extracted_v, s.table_v);
            }
        }
        Command::CzChevron {
            pair,
            amp_range,
            dur_range,
            nshots,
            allow_same_board,
            config,
            out,
        } => {
            let (high, low) = parse_pair(&pair)?;
            let (params, text) = load_qpu(config.as_deref())?;
            let d = ChevronConfig::default();
            let cfg = ChevronConfig {
                high,
                low,
                amp: amp_range.or(d.amp),
                dur: dur_range.unwrap_or(d.dur),
                nshots: nshots.unwrap_or(d.nshots),
                seed,
                allow_same_board,
                ..d
            };
            let r = cz_chevron(&params, &cfg)?;
            let out = Out::new(&out)?;
            out.write(&format!("chevron_q{high}_q{low}.csv"), |w| r.write_csv(w))?;
            out.manifest("cz-chevron", config.as_deref(), settings_hash(&cfg, text.as_deref()), seed)?;
            let min = r.first_min_ns.map_or("none".to_string(), |m| format!("{m:.3} ns"));
            say!(
                "q{high}-q{low}: first minimum {min} (1/4g = {:.3} ns), asymmetry {:.4}",
                1e9 / (4.0 * r.g_qq_hz),
                r.asymmetry
            );
        }
        Command::Run { config, out, raw } => {
            let text = read_input(&config)?;
            let cfg = ExperimentConfig::from_json(&text)?;
            let base = config.parent().unwrap_or(Path::new("."));
            let params = cfg.qpu_params(base)?;
            let seed = cli.seed.or(cfg.seed).unwrap_or(1);
            let ctx = SimContext::new(seed, params);
            let (_, result) = run_experiment(&cfg.experiment(), &cfg.board_map(), &ctx)?;
            let sha = sha256_hex(text.as_bytes());
            let meta = RunMeta {
                seed,
                config_sha256: sha.clone(),
                version: VERSION.into(),
            };
            let out = Out::new(&out)?;
            if raw {
                out.write("result.bin", |w| result.write_raw(w))?;
            } else {
                out.write("result.csv", |w| result.write_csv(w))?;
            }
            out.write("result.json", |w| result.write_sidecar(w, &meta))?;
            out.manifest("run", Some(&config), sha, seed)?;
            let [a, b, s, c] = result.shape();
            say!("result {a}x{b}x{s}x{c} written to {}", out.dir.display());
        }
        Command::Trace { config, batch, out } => {
            let text = read_input(&config)?;
            let cfg = ExperimentConfig::from_json(&text)?;
            let base = config.parent().unwrap_or(Path::new("."));
            let params = cfg.qpu_params(base)?;
            let seed = cli.seed.or(cfg.seed).unwrap_or(1);
            let compiled = compile(&cfg.experiment(), &cfg.board_map()).map_err(|e| CliError::Usage(e.to_string()))?;
            let n = compiled.batches.len();
            let bundle = compiled
                .batches
                .get(batch)
                .ok_or_else(|| CliError::Usage(format!("--batch {batch}: config has {n} batches")))?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| CliError::Output(dir.into(), e))?;
            }
            let err = |e| CliError::Output(out.clone(), e);
            let mut w = BufWriter::new(File::create(&out).map_err(err)?);
            trace(bundle, &SimContext::new(seed, params), &mut w)?.and_then(|_| w.flush()).map_err(err)?;
            say!("trace of batch {batch} written to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
