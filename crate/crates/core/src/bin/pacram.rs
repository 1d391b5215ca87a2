use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pacram::command::{LogReader, LogWriter, NullSink, Tee};
use pacram::config::RunConfig;
use pacram::controller::AddressMapper;
use pacram::dram::topology::Topology;
use pacram::error::{ConfigError, Error};
use pacram::pacram::{derive_config, scale_mitigation_thresholds};
use pacram::profiles::{
    bundled_profiles, cost_curve, find_profile, inflection_point, load_profiles, write_curve, CostMetric, EnergyFormula,
    RestorationLevel,
};
use pacram::sim::{cached_alone_ipc, run_once, Resolved, Workload};
use pacram::sweep::{run_sweep, sweep_points, write_sweep};
use pacram::verifier::{Verifier, VerifyReport};
use pacram::workload::{gen_attacker, gen_random, save_trace, write_stats, AttackPattern, RandomSpec};
use pacram::DeviceTimings;

/// Exit status when the verifier finds a violation.
const EXIT_VIOLATION: u8 = 2;

#[derive(Parser)]
#[command(name = "pacram", version, about = "DRAM simulator with partial-restoration preventive refreshes")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Formula {
    Time,
    Energy,
}

#[derive(Clone, Copy, ValueEnum)]
enum TraceKind {
    Attack,
    Random,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one configuration and write stats.csv and the command log.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Check the command stream with both oracles; exit 2 on any violation.
        #[arg(long)]
        verify: bool,
        /// Output directory (overrides output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate every (nrh, mechanism, level) point of the [sweep] section.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        verify: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Preventive-refresh cost curve of one module.
    CostModel {
        #[arg(long)]
        profile: String,
        /// Profile CSV; the bundled tables by default.
        #[arg(long)]
        profiles: Option<PathBuf>,
        #[arg(long, default_value = "ddr4_default")]
        preset: String,
        /// `energy` uses count times per-refresh energy instead of count times total time.
        #[arg(long, value_enum, default_value = "time")]
        energy_formula: Formula,
        #[arg(long)]
        out: PathBuf,
    },
    /// Partial-restoration parameters of a module at one level.
    DeriveConfig {
        #[arg(long)]
        profile: String,
        #[arg(long)]
        level: RestorationLevel,
        #[arg(long)]
        profiles: Option<PathBuf>,
        #[arg(long, default_value = "ddr4_default")]
        preset: String,
        /// Comma-separated nominal thresholds to rescale.
        #[arg(long, value_delimiter = ',', default_value = "1024,512,256,128,64,32")]
        nrh: Vec<u32>,
    },
    /// Check a command log for timing and read-disturbance violations.
    Verify {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Write a synthetic trace.
    GenTrace {
        #[arg(long, value_enum)]
        kind: TraceKind,
        #[arg(long)]
        out: PathBuf,
        /// Topology and address mapping come from this config when given.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        bank: usize,
        #[arg(long, default_value_t = 1000)]
        victim: u32,
        #[arg(long, default_value = "double_sided")]
        pattern: AttackPattern,
        #[arg(long, default_value_t = 10_000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1 << 30)]
        footprint: u64,
        #[arg(long, default_value_t = 0.25)]
        write_fraction: f64,
        #[arg(long, default_value_t = 4)]
        max_bubbles: u32,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
        }
    }
    let f = File::create(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    Ok(BufWriter::new(f))
}

fn profiles(path: Option<&Path>) -> Result<Vec<pacram::profiles::ChipProfile>, Error> {
    Ok(match path {
        Some(p) => load_profiles(p)?,
        None => bundled_profiles(),
    })
}

fn verdict(report: &VerifyReport) -> ExitCode {
    eprint!("{report}");
    if report.is_clean() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VIOLATION)
    }
}

fn dispatch(cmd: Cmd) -> Result<ExitCode, Error> {
    match cmd {
        Cmd::Run { config, verify, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(o) = out {
                cfg.output.dir = o;
            }
            let workload = Workload::from_config(&cfg)?;
            let r = Resolved::new(&cfg, None, None, None)?;
            let dir = cfg.output.dir.clone();
            let mut verifier = verify.then(|| Verifier::new(&r.verify_params(&cfg)));
            let mut null = NullSink;
            let mut log = if cfg.output.cmdlog.is_empty() {
                None
            } else {
                Some(LogWriter::new(create(&dir.join(&cfg.output.cmdlog))?))
            };
            let mut stats = {
                let mut sinks: Vec<&mut dyn pacram::command::CommandSink> = Vec::new();
                if let Some(l) = log.as_mut() {
                    sinks.push(l);
                }
                if let Some(v) = verifier.as_mut() {
                    sinks.push(v);
                }
                if sinks.is_empty() {
                    sinks.push(&mut null);
                }
                run_once(&cfg, &r, &workload, &mut Tee { sinks })?
            };
            if let Some(l) = log {
                let path = dir.join(&cfg.output.cmdlog);
                l.close().map_err(|source| Error::Io { path, source })?;
            }
            if let Some(alone) = cached_alone_ipc(&cfg, &workload)? {
                stats.set_alone_ipc(&alone);
            }
            let path = dir.join(&cfg.output.stats);
            write_stats(create(&path)?, std::slice::from_ref(&stats))?;
            println!("wrote {}", path.display());
            Ok(match verifier {
                Some(v) => verdict(&v.report()),
                None => ExitCode::SUCCESS,
            })
        }
        Cmd::Sweep { config, verify, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(o) = out {
                cfg.output.dir = o;
            }
            let workload = Workload::from_config(&cfg)?;
            let points = sweep_points(&cfg)?;
            let mut results = run_sweep(&cfg, &workload, &points, verify)?;
            if let Some(alone) = cached_alone_ipc(&cfg, &workload)? {
                for r in &mut results {
                    r.stats.set_alone_ipc(&alone);
                }
            }
            let dir = &cfg.output.dir;
            let sweep_path = dir.join(&cfg.output.sweep);
            write_sweep(create(&sweep_path)?, &results)?;
            let stats: Vec<_> = results.iter().map(|r| r.stats.clone()).collect();
            let stats_path = dir.join(&cfg.output.stats);
            write_stats(create(&stats_path)?, &stats)?;
            println!("wrote {} ({} runs) and {}", sweep_path.display(), results.len(), stats_path.display());
            let dirty: Vec<_> = results.iter().filter(|r| r.report.as_ref().is_some_and(|v| !v.is_clean())).collect();
            for r in &dirty {
                eprint!("{}: {}", r.stats.run_id, r.report.as_ref().unwrap());
            }
            Ok(if dirty.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_VIOLATION) })
        }
        Cmd::CostModel { profile, profiles: path, preset, energy_formula, out } => {
            let all = profiles(path.as_deref())?;
            let p = find_profile(&all, &profile)?;
            let timings = DeviceTimings::preset(&preset)?;
            let formula = match energy_formula {
                Formula::Time => EnergyFormula::CountTimesTotalTime,
                Formula::Energy => EnergyFormula::CountTimesRefreshEnergy,
            };
            let curve = cost_curve(p, &timings, formula)?;
            write_curve(create(&out)?, &curve)?;
            let t = inflection_point(&curve.points, CostMetric::Time);
            let e = inflection_point(&curve.points, CostMetric::Energy);
            println!("{profile}: time-cost minimum at M={t}, energy-cost minimum at M={e}");
            for l in &curve.retention_failures {
                println!("{profile}: retention failure at M={l}, level omitted");
            }
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::DeriveConfig { profile, level, profiles: path, preset, nrh } => {
            let all = profiles(path.as_deref())?;
            let p = find_profile(&all, &profile)?;
            let timings = DeviceTimings::preset(&preset)?;
            let c = derive_config(p, level, &timings)?;
            let scaled = scale_mitigation_thresholds(&nrh, p, level)?;
            let mut o = std::io::stdout().lock();
            let io = |e| Error::Io { path: "<stdout>".into(), source: e };
            writeln!(o, "module = \"{}\"", c.module_id).map_err(io)?;
            writeln!(o, "level = {}", c.level).map_err(io)?;
            writeln!(o, "t_ras_red_ns = {}", c.t_ras_red_ns).map_err(io)?;
            writeln!(o, "nrh_nominal = {}", c.nrh_nominal).map_err(io)?;
            writeln!(o, "nrh_scaled = {}", c.nrh_scaled).map_err(io)?;
            writeln!(o, "nrh_ratio = {:.2}", f64::from(c.ratio_percent) / 100.0).map_err(io)?;
            writeln!(o, "n_pcr = {}", c.n_pcr).map_err(io)?;
            match c.t_fcri_ns {
                Some(ns) => writeln!(o, "t_fcri_ns = {ns}").map_err(io)?,
                None => writeln!(o, "t_fcri = \"all_partial\"").map_err(io)?,
            }
            let list = |v: &[u32]| v.iter().map(u32::to_string).collect::<Vec<_>>().join(", ");
            writeln!(o, "thresholds = [{}]", list(&nrh)).map_err(io)?;
            writeln!(o, "scaled_thresholds = [{}]", list(&scaled)).map_err(io)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Verify { log, config } => {
            let cfg = RunConfig::load(&config)?;
            let r = Resolved::new(&cfg, None, None, None)?;
            let mut v = Verifier::new(&r.verify_params(&cfg));
            for c in LogReader::open(&log)? {
                pacram::command::CommandSink::record(&mut v, &c?);
            }
            pacram::command::CommandSink::finish(&mut v, 0);
            Ok(verdict(&v.report()))
        }
        Cmd::GenTrace { kind, out, config, bank, victim, pattern, count, seed, footprint, write_fraction, max_bubbles } => {
            let (topo, group) = match &config {
                Some(p) => {
                    let c = RunConfig::load(p)?;
                    (c.topology, c.mop_group)
                }
                None => (Topology::default(), 4),
            };
            let mapper = AddressMapper::new(topo, group)?;
            let entries = match kind {
                TraceKind::Attack => {
                    if bank >= topo.total_banks() || victim >= topo.rows_per_bank {
                        return Err(ConfigError::Invalid("bank or victim row out of range".into()).into());
                    }
                    gen_attacker(&mapper, bank, victim, count, pattern)
                }
                TraceKind::Random => {
                    if !(0.0..=1.0).contains(&write_fraction) || footprint < 64 || footprint > mapper.capacity() {
                        return Err(ConfigError::Invalid("bad write fraction or footprint".into()).into());
                    }
                    let spec = RandomSpec { accesses: count, footprint_bytes: footprint, write_fraction, max_bubbles, sequential: 0.0 };
                    gen_random(&spec, seed)
                }
            };
            save_trace(&out, &entries)?;
            println!("wrote {} accesses to {}", entries.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
