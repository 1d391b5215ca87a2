//! End-to-end acceptance checks, one PASS/FAIL line each.
//!
//! Runs with its own harness so every line is printed even when an earlier
//! check fails. Pass a substring as the first argument to run a subset.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command as Process;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pacram::command::{CmdKind, Command, Restore};
use pacram::config::{AttackSpec, RunConfig};
use pacram::mitigation::{default_raaimt, graphene_table_size, windowed_quota, Graphene, MechanismKind};
use pacram::pacram::{derive_config, fcri_formula, scale_mitigation_thresholds};
use pacram::profiles::{
    bundled_profiles, cost_curve, find_profile, inflection_point, CostMetric, EnergyFormula, Fcri, RestorationLevel,
};
use pacram::sim::{run_once, Resolved, Workload};
use pacram::sweep::{run_point, run_sweep, SweepPoint};
use pacram::verifier::fuzz::legal_stream;
use pacram::verifier::{replay_timing, DisturbanceKind, TimingChecker, TimingRules, VerifyReport};
use pacram::workload::{AttackPattern, RandomSpec};
use pacram::{DeviceTimings, Tick};

type Outcome = Result<String, String>;

/// Per-run timing results gathered by the simulation checks for the timing check.
#[derive(Default)]
struct Ctx {
    timing_totals: Vec<(String, u64)>,
}

fn lvl(m: f64) -> RestorationLevel {
    RestorationLevel::from_factor(m).unwrap()
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- 1

fn fcri_golden(_: &mut Ctx) -> Outcome {
    let t = DeviceTimings::ddr4_default();
    let profiles = bundled_profiles();
    let mut checked = 0;
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    let mut truncated = Vec::new();
    for p in &profiles {
        for l in p.applicable_levels() {
            if l.is_nominal() {
                continue;
            }
            let table = p.pacram_params(l).unwrap();
            let c = derive_config(p, l, &t).map_err(|e| e.to_string())?;
            if (c.nrh_scaled, c.n_pcr) != (table.nrh_effective, table.n_pcr) {
                bad.push(format!("{}@{}: parameters differ", p.module_id, l));
            }
            let Fcri::Finite { ns } = table.t_fcri else { continue };
            let got = fcri_formula(c.n_pcr, c.nrh_scaled, c.t_ras_red_ns, &t);
            let err = (got / ns as f64 - 1.0).abs();
            checked += 1;
            // a few short intervals are printed truncated to whole milliseconds
            let whole_ms = ns % 1_000_000 == 0 && (got / 1e6).floor() as u64 == ns / 1_000_000;
            if err <= 0.02 {
                worst = worst.max(err);
            } else if whole_ms {
                truncated.push(format!("{}@{}", p.module_id, l));
            } else {
                bad.push(format!("{}@{}: {got:.0} ns vs {ns} ns", p.module_id, l));
            }
            let expect_all_partial = got >= t.t_refw;
            if c.is_all_partial() != expect_all_partial {
                bad.push(format!("{}@{}: all-partial flag", p.module_id, l));
            }
        }
    }
    for (m, level, ns) in [("S6", 0.36, 374e6), ("H5", 0.27, 135e6), ("H4", 0.27, 489e3)] {
        let p = find_profile(&profiles, m).unwrap();
        let c = derive_config(p, lvl(level), &t).unwrap();
        let got = fcri_formula(c.n_pcr, c.nrh_scaled, c.t_ras_red_ns, &t);
        if (got / ns - 1.0).abs() > 0.02 {
            bad.push(format!("anchor {m}@{level}: {got:.0} ns vs {ns} ns"));
        }
    }
    let detail = format!(
        "{checked} table rows, worst relative error {:.3}%, matched at whole-ms precision: {}",
        worst * 100.0,
        if truncated.is_empty() { "none".to_string() } else { truncated.join(" ") }
    );
    ensure(bad.is_empty() && checked > 0, if bad.is_empty() { detail } else { format!("{detail}; {}", bad.join("; ")) })
}

// ---------------------------------------------------------------- 2

fn threshold_scaling(_: &mut Ctx) -> Outcome {
    let profiles = bundled_profiles();
    let h5 = find_profile(&profiles, "H5").unwrap();
    let got = scale_mitigation_thresholds(&[1024, 512, 256, 128, 64, 32], h5, lvl(0.27)).map_err(|e| e.to_string())?;
    let want = vec![942, 471, 235, 117, 58, 29];
    ensure(got == want, format!("H5@0.27 scaled thresholds {got:?}, expected {want:?}"))
}

// ---------------------------------------------------------------- 3

fn cost_model(_: &mut Ctx) -> Outcome {
    let t = DeviceTimings::ddr4_default();
    let profiles = bundled_profiles();
    let mut lines = Vec::new();
    let mut ok = true;
    // (module, allowed minima, time reduction %, energy reduction %)
    for (m, allowed, time_red, energy_red) in [("H5", [0.36, 0.27], 43.0, 40.0), ("S6", [0.45, 0.36], 28.0, 19.0)] {
        let curve = cost_curve(find_profile(&profiles, m).unwrap(), &t, EnergyFormula::CountTimesTotalTime).unwrap();
        let at = |l: RestorationLevel, metric| curve.points.iter().find(|p| p.level == l).unwrap().metric(metric);
        let tmin = inflection_point(&curve.points, CostMetric::Time);
        let emin = inflection_point(&curve.points, CostMetric::Energy);
        let tr = (1.0 - at(tmin, CostMetric::Time)) * 100.0;
        let er = (1.0 - at(emin, CostMetric::Energy)) * 100.0;
        let place = allowed.iter().any(|&a| lvl(a) == tmin);
        let t_ok = (tr - time_red).abs() <= 5.0;
        let e_ok = (er - energy_red).abs() <= 5.0;
        ok &= place && t_ok && e_ok;
        lines.push(format!(
            "{m}: time min at {tmin} ({}) reduction {tr:.1}% vs {time_red}% ({}), energy min at {emin} reduction {er:.1}% vs {energy_red}% ({})",
            if place { "ok" } else { "wrong level" },
            if t_ok { "ok" } else { "off" },
            if e_ok { "ok" } else { "off" },
        ));
    }
    ensure(ok, lines.join("; "))
}

// ---------------------------------------------------------------- 4

const NRHS: [u32; 6] = [1024, 512, 256, 128, 64, 32];

fn attack_cfg(pacram: Option<(&str, f64)>, acts: u64, seed: u64) -> RunConfig {
    let mut c = RunConfig::default();
    c.seed = seed;
    c.workload.attack = Some(AttackSpec { bank: 0, victim: 1000, pattern: AttackPattern::DoubleSided, length: 1024 });
    c.workload.instructions = u64::MAX / 4;
    c.workload.warmup = 0;
    c.workload.max_activations = Some(acts);
    if let Some((module, level)) = pacram {
        c.pacram.enabled = true;
        c.pacram.profile = Some(module.into());
        c.pacram.level = Some(level);
    }
    c.validate().unwrap();
    c
}

fn security_deterministic(ctx: &mut Ctx) -> Outcome {
    let acts = 10_000_000;
    let mut runs = 0;
    let mut max_ratio = 0.0f64;
    let mut failures = Vec::new();
    for (name, pac) in [("off", None), ("S6@0.36", Some(("S6", 0.36))), ("H5@0.27", Some(("H5", 0.27)))] {
        let cfg = attack_cfg(pac, acts, 1);
        let workload = Workload::from_config(&cfg).unwrap();
        let level = pac.map(|(_, l)| lvl(l));
        let mut points = Vec::new();
        for &nrh in &NRHS {
            for mechanism in [MechanismKind::Graphene, MechanismKind::Hydra, MechanismKind::Rfm, MechanismKind::Prac] {
                points.push(SweepPoint { mechanism, nrh, level });
            }
        }
        for r in run_sweep(&cfg, &workload, &points, true).map_err(|e| e.to_string())? {
            let rep = r.report.unwrap();
            runs += 1;
            let id = format!("{}/{}/{name}", r.point.mechanism, r.point.nrh);
            ctx.timing_totals.push((id.clone(), rep.timing_total));
            max_ratio = max_ratio.max(f64::from(rep.max_disturbance) / f64::from(r.nrh_effective));
            let flips = count(&rep, |k| matches!(k, DisturbanceKind::Threshold { .. }));
            let partial = count(&rep, |k| matches!(k, DisturbanceKind::ConsecutivePartials { .. }));
            let stale = count(&rep, |k| matches!(k, DisturbanceKind::StaleFullRestore { .. }));
            if r.stats.acts < acts || flips + partial + stale > 0 || rep.disturbance_total > 0 {
                failures.push(format!("{id}: {} acts, {flips} flips, {partial} partial-budget, {stale} stale", r.stats.acts));
            }
        }
    }
    let detail = format!("{runs} runs of {acts} activations, peak disturbance {:.0}% of threshold", max_ratio * 100.0);
    ensure(failures.is_empty(), if failures.is_empty() { detail } else { format!("{detail}; {}", failures.join("; ")) })
}

fn count(rep: &VerifyReport, f: impl Fn(DisturbanceKind) -> bool) -> usize {
    rep.disturbance.iter().filter(|v| f(v.kind)).count()
}

// ---------------------------------------------------------------- 5

/// Smallest `k` with `P(X <= k) >= q` for `X ~ Poisson(lambda)`.
fn poisson_quantile(lambda: f64, q: f64) -> u64 {
    let mut pmf = (-lambda).exp();
    let mut cdf = pmf;
    let mut k = 0;
    while cdf < q {
        k += 1;
        pmf *= lambda / k as f64;
        cdf += pmf;
    }
    k
}

fn security_para(ctx: &mut Ctx) -> Outcome {
    let nrh = 128u32;
    let p = 11.0 / f64::from(nrh);
    let acts = 100_000u64;
    let runs = 100;
    // Every disturbance of a row comes with a refresh of that row with
    // probability p. A flip needs nrh - 1 unrefreshed disturbances after some
    // reset, so the expected flips per row are at most
    // (resets + 1) * (1 - p)^(nrh - 1).
    let miss = (1.0 - p).powi(nrh as i32 - 1);
    let rows = 7.0; // victim, both aggressors, two rows past each aggressor
    let disturbances = 4.0 * acts as f64;
    let mut flips = 0u64;
    let mut bound = 0.0;
    for seed in 0..runs {
        let cfg = attack_cfg(None, acts, seed);
        let workload = Workload::from_config(&cfg).unwrap();
        let point = SweepPoint { mechanism: MechanismKind::Para, nrh, level: None };
        let r = run_point(&cfg, &workload, point, true).map_err(|e| e.to_string())?;
        let rep = r.report.unwrap();
        ctx.timing_totals.push((format!("para/seed{seed}"), rep.timing_total));
        flips += count(&rep, |k| matches!(k, DisturbanceKind::Threshold { .. })) as u64;
        let refw = DeviceTimings::ddr5_default().ticks().refw;
        let periodic = rows * (r.stats.ticks / refw + 1) as f64;
        bound += miss * (rows + p * disturbances + periodic);
    }
    // one-sided test: the flip count must not be significantly above the bound
    let limit = poisson_quantile(bound, 0.999);
    let rate_ok = flips <= limit;

    let cfg = attack_cfg(None, 1_000_000, 12345);
    let workload = Workload::from_config(&cfg).unwrap();
    let point = SweepPoint { mechanism: MechanismKind::Para, nrh, level: None };
    let s = run_point(&cfg, &workload, point, false).map_err(|e| e.to_string())?.stats;
    let rate = s.triggers as f64 / s.acts as f64;
    let trig_ok = (rate / p - 1.0).abs() <= 0.01;
    ensure(
        rate_ok && trig_ok,
        format!(
            "{flips} flips in {runs} runs ({:.3}/run) vs bound {:.3}/run (99.9% limit {limit} total); trigger rate {rate:.5} vs p {p:.5} ({:+.2}%)",
            flips as f64 / runs as f64,
            bound / runs as f64,
            (rate / p - 1.0) * 100.0
        ),
    )
}

// ---------------------------------------------------------------- 6

/// Earliest legal tick of `log[i]` from pairwise gaps to earlier commands,
/// written without the verifier's per-bank shadow state.
fn pairwise_earliest(log: &[Command], i: usize, r: &TimingRules) -> Tick {
    let c = &log[i];
    let horizon = 4 * (r.rfc + r.rc + r.ras + r.rp);
    let busy = |x: &Command| if x.restore == Some(Restore::Partial) { r.ras_partial } else { r.ras } + r.rp;
    let opens = |k: CmdKind| matches!(k, CmdKind::Act | CmdKind::Vrr | CmdKind::Rfm);
    let mut earliest = 0;
    for j in (0..i).rev() {
        let p = &log[j];
        if p.tick + horizon < c.tick {
            break;
        }
        let same_rank = p.rank == c.rank;
        let same_bank = same_rank && p.bank == c.bank;
        let gap = match (p.kind, c.kind) {
            (CmdKind::Rd | CmdKind::Wr, CmdKind::Rd | CmdKind::Wr) => Some(r.bl),
            (CmdKind::Ref, k) if same_rank && (opens(k) || k == CmdKind::Ref) => {
                Some(if p.restore == Some(Restore::Partial) { r.rfc_partial } else { r.rfc })
            }
            (CmdKind::Act, CmdKind::Ref) if same_rank => Some(r.rc),
            (CmdKind::Pre, CmdKind::Ref) if same_rank => Some(r.rp),
            (CmdKind::Vrr, CmdKind::Ref) if same_rank => Some(busy(p)),
            (CmdKind::Act, k) if same_bank && opens(k) => Some(r.rc),
            (CmdKind::Act, CmdKind::Pre) if same_bank => Some(r.ras),
            (CmdKind::Act, CmdKind::Rd | CmdKind::Wr) if same_bank => Some(r.rcd),
            (CmdKind::Pre, k) if same_bank && opens(k) => Some(r.rp),
            (CmdKind::Vrr, k) if same_bank && opens(k) => Some(busy(p)),
            _ => None,
        };
        if let Some(g) = gap {
            earliest = earliest.max(p.tick + g);
        }
    }
    earliest
}

struct MutationTally {
    commands: usize,
    binding: usize,
    caught: usize,
    false_alarms: usize,
    oracle_illegal: usize,
}

/// Shifts each command one tick earlier in turn and asks the verifier about
/// the shifted copy, with the verifier's state taken just before it.
fn mutate_all(log: &[Command], rules: TimingRules, ranks: usize, bpr: usize) -> MutationTally {
    let mut checker = TimingChecker::new(rules, ranks, bpr);
    let mut t = MutationTally { commands: log.len(), binding: 0, caught: 0, false_alarms: 0, oracle_illegal: 0 };
    for (i, c) in log.iter().enumerate() {
        let earliest = pairwise_earliest(log, i, &rules);
        if c.tick < earliest {
            t.oracle_illegal += 1;
        }
        if c.tick > 0 {
            let binding = c.tick == earliest;
            let mut shifted = *c;
            shifted.tick -= 1;
            let flagged = checker.clone().check(&shifted).is_some();
            t.binding += usize::from(binding);
            match (binding, flagged) {
                (true, true) => t.caught += 1,
                (false, true) => t.false_alarms += 1,
                _ => {}
            }
        }
        checker.check(c);
    }
    t
}

fn timing_legality(ctx: &mut Ctx) -> Outcome {
    let mut problems = Vec::new();
    let dirty: Vec<_> = ctx.timing_totals.iter().filter(|(_, n)| *n > 0).collect();
    if ctx.timing_totals.is_empty() {
        problems.push("no simulation runs recorded (run the security checks first)".to_string());
    }
    for (id, n) in &dirty {
        problems.push(format!("{id}: {n} timing violations"));
    }

    let cfg = RunConfig::default();
    let timings = cfg.device_timings().unwrap();
    let topo = cfg.topology;
    let (ranks, bpr) = (topo.total_ranks(), topo.banks_per_rank());
    let partial = (lvl(0.27).t_ras_red(timings.t_ras), 0.27);
    let rules = TimingRules::new(&timings, Some(partial));
    let mut fuzz_cmds = 0;
    for seed in 0..2 {
        let s = legal_stream(topo, &timings, partial, 1_000_000, 8, seed);
        fuzz_cmds += s.len();
        let v = replay_timing(&s, rules, ranks, bpr);
        if !v.is_empty() {
            problems.push(format!("fuzz seed {seed}: {} violations, first {}", v.len(), v[0]));
        }
    }

    // mutation harness over fuzz streams and simulator logs
    let mut tallies = Vec::new();
    for seed in 10..13 {
        let s = legal_stream(topo, &timings, partial, 50_000, 4, seed);
        tallies.push(("fuzz", mutate_all(&s, rules, ranks, bpr)));
    }
    for (mechanism, pac) in [(MechanismKind::Rfm, Some(("H5", 0.27))), (MechanismKind::Hydra, Some(("S6", 0.36))), (MechanismKind::Prac, None)] {
        let mut c = attack_cfg(pac, 20_000, 3);
        c.nrh = 64;
        c.mitigation = mechanism;
        c.workload.random = Some(RandomSpec { accesses: 20_000, footprint_bytes: 1 << 28, write_fraction: 0.3, max_bubbles: 6, sequential: 0.3 });
        c.workload.random_cores = 2;
        let workload = Workload::from_config(&c).unwrap();
        let r = Resolved::new(&c, None, None, None).unwrap();
        let mut log: Vec<Command> = Vec::new();
        run_once(&c, &r, &workload, &mut log).unwrap();
        let rules = r.verify_params(&c).timing;
        tallies.push(("sim", mutate_all(&log, rules, ranks, bpr)));
    }
    let mut commands = 0;
    let mut binding = 0;
    let mut caught = 0;
    for (src, t) in &tallies {
        commands += t.commands;
        binding += t.binding;
        caught += t.caught;
        if t.oracle_illegal > 0 {
            problems.push(format!("{src}: pairwise oracle rejects {} unmutated commands", t.oracle_illegal));
        }
        if t.caught != t.binding {
            problems.push(format!("{src}: {} of {} one-tick-early mutations escaped", t.binding - t.caught, t.binding));
        }
        if t.false_alarms > 0 {
            problems.push(format!("{src}: {} legal shifts flagged", t.false_alarms));
        }
    }
    let detail = format!(
        "{} simulated runs clean, {fuzz_cmds} fuzz commands clean, {caught}/{binding} gap-shrinking mutations caught over {commands} commands",
        ctx.timing_totals.len()
    );
    ensure(problems.is_empty() && binding > 0, if problems.is_empty() { detail } else { format!("{detail}; {}", problems.join("; ")) })
}

// ---------------------------------------------------------------- 7

fn busy_time(_: &mut Ctx) -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.seed = 5;
    cfg.mitigation = MechanismKind::Rfm;
    cfg.nrh = 32;
    cfg.workload.random = Some(RandomSpec { accesses: 200_000, footprint_bytes: 1 << 30, write_fraction: 0.25, max_bubbles: 2, sequential: 0.0 });
    cfg.workload.random_cores = 4;
    cfg.workload.instructions = 600_000;
    cfg.workload.warmup = 0;
    cfg.pacram.profile = Some("H5".into());
    cfg.pacram.level = Some(0.27);
    cfg.validate().unwrap();
    let workload = Workload::from_config(&cfg).unwrap();
    let base = run_point(&cfg, &workload, SweepPoint { mechanism: MechanismKind::Rfm, nrh: 32, level: None }, true)
        .map_err(|e| e.to_string())?;
    let pac = run_point(&cfg, &workload, SweepPoint { mechanism: MechanismKind::Rfm, nrh: 32, level: Some(lvl(0.27)) }, true)
        .map_err(|e| e.to_string())?;

    let rules = TimingRules::new(&cfg.device_timings().unwrap(), Some((lvl(0.27).t_ras_red(33.0), 0.27)));
    let latency_ratio = (rules.ras_partial + rules.rp) as f64 / (rules.ras + rules.rp) as f64;
    let count_ratio = f64::from(default_raaimt(32)) / f64::from(default_raaimt(pac.nrh_effective));
    let predicted = count_ratio * latency_ratio;
    let per_act = |s: &pacram::workload::RunStats| s.total_busy_ticks() as f64 / s.acts as f64;
    let measured = per_act(&pac.stats) / per_act(&base.stats);
    let err = (measured / predicted - 1.0).abs();
    let ipc = |s: &pacram::workload::RunStats| s.ipc().iter().sum::<f64>();
    let (i0, i1) = (ipc(&base.stats), ipc(&pac.stats));
    let flips = |r: &pacram::sweep::SweepResult| r.report.as_ref().unwrap().disturbance_total;
    let timing = base.report.as_ref().unwrap().timing_total + pac.report.as_ref().unwrap().timing_total;
    ensure(
        err <= 0.10 && i1 > i0 && timing == 0,
        format!(
            "busy ratio {measured:.3} vs predicted {predicted:.3} (count {count_ratio:.3} x latency {latency_ratio:.3}, off by {:.1}%); IPC {i0:.4} -> {i1:.4} ({:+.2}%){}",
            err * 100.0,
            (i1 / i0 - 1.0) * 100.0,
            if timing == 0 { String::new() } else { format!("; {timing} timing violations") }
        ) + &format!("; disturbance violations on this benign trace: {} without, {} with partial restoration", flips(&base), flips(&pac)),
    )
}

// ---------------------------------------------------------------- 8

fn frequent_items(_: &mut Ctx) -> Outcome {
    let window = 10_000u32;
    let k = 64usize;
    let mut worst = 0u32;
    let mut problems = Vec::new();
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graphene::new(1, k, u32::MAX, u64::MAX);
        let mut exact: HashMap<u32, u32> = HashMap::new();
        for n in 1..=window {
            // a few hot rows over a wide uniform background
            let row = if rng.gen_bool(0.4) { rng.gen_range(0..8) } else { rng.gen_range(0..4096) };
            g.on_activate(0, row, 0);
            *exact.entry(row).or_default() += 1;
            if n % 1000 == 0 || n == window {
                let bound = n / k as u32;
                for row in 0..4096 {
                    let e = exact.get(&row).copied().unwrap_or(0);
                    let est = g.table(0).estimate(row);
                    if est < e || est - e > bound {
                        problems.push(format!("seed {seed} after {n}: row {row} estimate {est}, exact {e}"));
                    }
                    worst = worst.max(est.saturating_sub(e));
                }
            }
        }
        if problems.len() > 5 {
            break;
        }
    }

    let timings = DeviceTimings::ddr5_default();
    let window_acts = timings.ticks().refw / timings.ticks().rc;
    let mut triggers = Vec::new();
    for nrh in NRHS {
        let q = windowed_quota(nrh, 2);
        let mut g = Graphene::new(1, graphene_table_size(window_acts, q, 65536), q, u64::MAX);
        let first = (1..=nrh).find(|_| g.on_activate(0, 77, 0));
        match first {
            Some(n) if n <= q => triggers.push(format!("{nrh}:{n}")),
            other => problems.push(format!("nrh {nrh}: first trigger {other:?}, quota {q}")),
        }
    }
    ensure(
        problems.is_empty(),
        format!(
            "50 streams of {window}, worst overestimate {worst} (bound {}); single-row first trigger nrh:act {}{}",
            window / k as u32,
            triggers.join(" "),
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
        ),
    )
}

// ---------------------------------------------------------------- 9

fn determinism(_: &mut Ctx) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let trace = dir.path().join("mix.trace");
    let bin = env!("CARGO_BIN_EXE_pacram");
    let status = Process::new(bin)
        .args(["gen-trace", "--kind", "random", "--count", "20000", "--seed", "9", "--out"])
        .arg(&trace)
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        r#"
run_id = "determinism"
seed = 31
mitigation = "hydra"
nrh = 256

[pacram]
enabled = true
profile = "H5"
level = 0.27

[workload]
traces = ["mix.trace"]
instructions = 60_000
warmup = 10_000
random_cores = 1

[workload.random]
accesses = 20000
footprint_bytes = 268435456

[workload.attack]
victim = 4000
"#,
    )
    .map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = Process::new(bin)
            .args(["run", "--verify", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(format!("run {run}: {}", String::from_utf8_lossy(&o.stderr)));
        }
        let read = |f: &str| std::fs::read(out.join(f)).map_err(|e| e.to_string());
        outputs.push((read("stats.csv")?, read("run.cmdlog")?));
    }
    let same_stats = outputs[0].0 == outputs[1].0;
    let same_log = outputs[0].1 == outputs[1].1;
    ensure(
        same_stats && same_log && !outputs[0].1.is_empty(),
        format!(
            "stats.csv {} ({} bytes), run.cmdlog {} ({} bytes)",
            if same_stats { "identical" } else { "differs" },
            outputs[0].0.len(),
            if same_log { "identical" } else { "differs" },
            outputs[0].1.len()
        ),
    )
}

// ----------------------------------------------------------------

fn main() {
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let checks: [(&str, fn(&mut Ctx) -> Outcome); 9] = [
        ("fcri_golden_values", fcri_golden),
        ("threshold_scaling", threshold_scaling),
        ("cost_model_minima", cost_model),
        ("security_deterministic_mechanisms", security_deterministic),
        ("security_para", security_para),
        ("timing_legality", timing_legality),
        ("busy_time_prediction", busy_time),
        ("frequent_items_oracle", frequent_items),
        ("determinism", determinism),
    ];
    let mut ctx = Ctx::default();
    let mut failed = Vec::new();
    for (i, (name, check)) in checks.iter().enumerate() {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let start = Instant::now();
        let outcome = match catch_unwind(AssertUnwindSafe(|| check(&mut ctx))) {
            Ok(o) => o,
            Err(e) => Err(format!(
                "panicked: {}",
                e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
            )),
        };
        let secs = start.elapsed().as_secs_f64();
        let (status, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("[{}] {name}: {status} ({secs:.1}s) {detail}", i + 1);
        if outcome.is_err() {
            failed.push(*name);
        }
    }
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
