//! Command-line surface and experiment campaigns. Subcommands wrap the
//! library pipeline (analyze, optimize, simulate, generate); `experiment`
//! sweeps utilization groups over seeded synthetic sets and emits one CSV
//! per evaluation figure. Campaign points run in parallel and merge in
//! index order, so a rerun with the same seeds is byte-identical.
//!
//! Exit codes: 0 success, 2 infeasible or unschedulable input, 1 error.

use crate::model::{ContegoSolution, Mode, TaskSet};
use crate::selection::{self, survey_branches, Unschedulable};
use crate::server_opt::ServerSearchConfig;
use crate::sim::{
    detection_experiment, empirical_cdf, simulate, DetectionSample, ModeManagerConfig,
    ReleasePolicy, SimConfig,
};
use crate::time::{Rat, Time};
use crate::workload::{generate, GenSpec};
use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(
    name = "contego",
    version,
    about = "Schedulability analysis and parameter selection for security-augmented real-time systems"
)]
pub struct Cli {
    /// Directory for generated files.
    #[arg(long, env = "CONTEGO_OUT_DIR", default_value = ".", global = true)]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a task-set file and check the bare RT core.
    Analyze { taskset: PathBuf },
    /// Select server parameters and adapted periods for both modes.
    Optimize {
        taskset: PathBuf,
        /// Solution file to write (default: <stem>.solution.json).
        #[arg(long)]
        solution_out: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        grid_steps: u32,
        #[arg(long, default_value_t = 2)]
        refine_rounds: u32,
        /// Largest replenishment period to consider.
        #[arg(long)]
        p_max: Option<String>,
    },
    /// Replay a task set, optionally with a solution and anomaly script.
    Simulate {
        taskset: PathBuf,
        #[arg(long)]
        solution: Option<PathBuf>,
        #[arg(long)]
        horizon: String,
        /// JSON list of {"time", "class"} injections.
        #[arg(long)]
        script: Option<PathBuf>,
        /// Enable mode switching, reverting after this ACTIVE timeout.
        #[arg(long)]
        switch_timeout: Option<String>,
        /// Sporadic releases, periods stretched by up to this fraction.
        #[arg(long)]
        jitter: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Basename for the trace and summary files.
        #[arg(long)]
        name: Option<String>,
    },
    /// Write a seeded synthetic task set.
    Generate {
        #[arg(long, default_value_t = 4)]
        n_rt: usize,
        #[arg(long, default_value_t = 3)]
        n_sec: usize,
        /// Real-time utilization target; the security budget is derived
        /// from it via --sec-fraction.
        #[arg(long, default_value_t = 0.5)]
        util: f64,
        #[arg(long, default_value_t = 0.5)]
        sec_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep total-utilization groups and emit the evaluation CSVs.
    Experiment {
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.3, 0.45, 0.6, 0.75, 0.9])]
        util_groups: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        sets_per_point: usize,
        #[arg(long, default_value_t = 4)]
        n_rt: usize,
        #[arg(long, default_value_t = 3)]
        n_sec: usize,
        #[arg(long, default_value_t = 0.5)]
        sec_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        detection_runs: usize,
    },
}

/// What a finished command means for the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmdOutcome {
    Done,
    Unschedulable,
}

pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(CmdOutcome::Done) => 0,
        Ok(CmdOutcome::Unschedulable) => 2,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn dispatch(cli: Cli) -> Result<CmdOutcome> {
    let out_dir = cli.out_dir;
    match cli.command {
        Command::Analyze { taskset } => cmd_analyze(&taskset),
        Command::Optimize {
            taskset,
            solution_out,
            grid_steps,
            refine_rounds,
            p_max,
        } => {
            let cfg = ServerSearchConfig {
                p_max: p_max.map(|s| parse_time(&s, "p-max")).transpose()?,
                grid_steps,
                refine_rounds,
            };
            cmd_optimize(&taskset, solution_out, &cfg, &out_dir)
        }
        Command::Simulate {
            taskset,
            solution,
            horizon,
            script,
            switch_timeout,
            jitter,
            seed,
            name,
        } => {
            let sim_cfg = SimConfig {
                horizon: parse_time(&horizon, "horizon")?,
                release_policy: match jitter {
                    Some(j) => ReleasePolicy::JitteredSporadic {
                        seed,
                        jitter: parse_time(&j, "jitter")?,
                    },
                    None => ReleasePolicy::Synchronous,
                },
                anomaly_script: match script {
                    Some(path) => read_json(&path)?,
                    None => Vec::new(),
                },
                mode_manager: switch_timeout
                    .map(|t| Ok::<_, anyhow::Error>(ModeManagerConfig::new(parse_time(&t, "switch-timeout")?)))
                    .transpose()?,
            };
            cmd_simulate(&taskset, solution.as_deref(), &sim_cfg, name, &out_dir)
        }
        Command::Generate {
            n_rt,
            n_sec,
            util,
            sec_fraction,
            seed,
            out,
        } => {
            let spec = GenSpec {
                sec_util_fraction: sec_fraction,
                ..GenSpec::new(n_rt, n_sec, util, seed)
            };
            let path = out.unwrap_or_else(|| out_dir.join(format!("taskset-seed{seed}.json")));
            let ts = generate(&spec)?;
            write_file(&path, &ts.to_json())?;
            println!("wrote {}", path.display());
            Ok(CmdOutcome::Done)
        }
        Command::Experiment {
            util_groups,
            sets_per_point,
            n_rt,
            n_sec,
            sec_fraction,
            seed,
            detection_runs,
        } => {
            let config = ExperimentConfig {
                util_groups,
                sets_per_point,
                n_rt,
                n_sec,
                sec_util_fraction: sec_fraction,
                seed,
                detection_runs,
                output_dir: out_dir,
            };
            let report = run_experiment(&config)?;
            for line in &report.failures {
                eprintln!("skipped: {line}");
            }
            println!(
                "{} of {} generated sets solved in both modes",
                report.solved_sets, report.generated_sets
            );
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            Ok(CmdOutcome::Done)
        }
    }
}

fn parse_time(s: &str, what: &str) -> Result<Time> {
    s.parse::<Rat>()
        .map_err(|e| anyhow!("bad {what} value {s:?}: {e}"))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

fn cmd_analyze(taskset: &Path) -> Result<CmdOutcome> {
    let ts: TaskSet = read_json(taskset)?;
    let violations = crate::model::validate_task_set(&ts);
    if !violations.is_empty() {
        bail!(
            "invalid task set {}: {}",
            taskset.display(),
            violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ")
        );
    }
    let report = crate::analysis::is_rt_schedulable(&ts);
    for (id, response) in &report.response_times {
        let task = ts.rt_tasks.iter().find(|t| t.id == *id).expect("reported task exists");
        match response {
            crate::analysis::ResponseTime::Converged(w) => {
                let verdict = if w <= &task.deadline { "ok" } else { "MISS" };
                println!("{id}: response {w} vs deadline {} {verdict}", task.deadline);
            }
            crate::analysis::ResponseTime::Divergent => {
                println!("{id}: response diverges past deadline {}", task.deadline);
            }
        }
    }
    if report.schedulable {
        println!("rt core schedulable");
        Ok(CmdOutcome::Done)
    } else {
        println!("rt core unschedulable");
        Ok(CmdOutcome::Unschedulable)
    }
}

fn cmd_optimize(
    taskset: &Path,
    solution_out: Option<PathBuf>,
    cfg: &ServerSearchConfig,
    out_dir: &Path,
) -> Result<CmdOutcome> {
    let ts: TaskSet = read_json(taskset)?;
    match selection::solve(&ts, cfg) {
        Ok(solved) => {
            let m = &solved.metrics;
            println!(
                "passive: eta {} (xi {:.6}), server Q={} P={}",
                m.eta_passive,
                m.xi_passive,
                solved.solution.passive_server.capacity,
                solved.solution.passive_server.replenish_period
            );
            println!(
                "active: eta {} (xi {:.6}), server Q={} P={} at level {}",
                m.eta_active,
                m.xi,
                solved.solution.active_server.capacity,
                solved.solution.active_server.replenish_period,
                solved.solution.active_level
            );
            for w in &solved.warnings {
                eprintln!("warning: {w}");
            }
            let path = solution_out.unwrap_or_else(|| {
                let stem = taskset
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "taskset".to_string());
                out_dir.join(format!("{stem}.solution.json"))
            });
            write_file(&path, &solved.solution.to_json())?;
            println!("wrote {}", path.display());
            Ok(CmdOutcome::Done)
        }
        Err(Unschedulable::InvalidTaskSet(vs)) => {
            bail!("invalid task set {}: {}", taskset.display(), Unschedulable::InvalidTaskSet(vs))
        }
        Err(e) => {
            println!("unschedulable: {e}");
            let hint = match e {
                Unschedulable::RtBaseline => {
                    "the RT tasks miss deadlines on their own; no server placement can help"
                }
                Unschedulable::Passive(_) => {
                    "no feasible bottom-priority server; relax desired periods or reduce RT load"
                }
                Unschedulable::Active(_) => {
                    "no priority level admits an active server; try a smaller min level or longer maximum periods"
                }
                Unschedulable::InvalidTaskSet(_) => unreachable!("handled above"),
            };
            println!("hint: {hint}");
            Ok(CmdOutcome::Unschedulable)
        }
    }
}

fn cmd_simulate(
    taskset: &Path,
    solution: Option<&Path>,
    cfg: &SimConfig,
    name: Option<String>,
    out_dir: &Path,
) -> Result<CmdOutcome> {
    let ts: TaskSet = read_json(taskset)?;
    let sol: Option<ContegoSolution> = solution.map(read_json).transpose()?;
    let trace = simulate(&ts, sol.as_ref(), cfg)?;

    let base = name.unwrap_or_else(|| {
        taskset
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".to_string())
    });
    let trace_path = out_dir.join(format!("{base}.trace.tsv"));
    write_file(&trace_path, &trace.export_lines())?;

    let s = &trace.summary;
    let mut summary = String::from("key,value\n");
    let _ = writeln!(summary, "rt_deadline_misses,{}", s.rt_deadline_misses);
    let _ = writeln!(summary, "security_deadline_misses,{}", s.security_deadline_misses);
    let _ = writeln!(summary, "undetected_anomalies,{}", s.undetected_anomalies);
    let _ = writeln!(summary, "abandoned_security_jobs,{}", s.abandoned_security_jobs);
    let _ = writeln!(summary, "mode_switches,{}", s.mode_intervals.len() - 1);
    for (id, w) in &s.max_response {
        let _ = writeln!(summary, "max_response.{id},{:.9}", w.to_f64());
    }
    let summary_path = out_dir.join(format!("{base}.summary.csv"));
    write_file(&summary_path, &summary)?;

    if !s.detections.is_empty() {
        let mut csv = String::from("inject,detect,latency\n");
        for d in &s.detections {
            let _ = writeln!(
                csv,
                "{:.9},{:.9},{:.9}",
                d.inject_time.to_f64(),
                d.detect_time.to_f64(),
                d.latency.to_f64()
            );
        }
        let det_path = out_dir.join(format!("{base}.detections.csv"));
        write_file(&det_path, &csv)?;
        println!("wrote {}", det_path.display());
    }

    println!(
        "{} events, {} rt misses, {} security misses over horizon {}",
        trace.events.len(),
        s.rt_deadline_misses,
        s.security_deadline_misses,
        cfg.horizon
    );
    println!("wrote {}", trace_path.display());
    println!("wrote {}", summary_path.display());
    Ok(CmdOutcome::Done)
}

// ---------------------------------------------------------------------
// Experiment campaign.

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Total base utilization per group (real-time share plus security budget).
    pub util_groups: Vec<f64>,
    pub sets_per_point: usize,
    pub n_rt: usize,
    pub n_sec: usize,
    pub sec_util_fraction: f64,
    pub seed: u64,
    /// Paired runs for the detection-latency CDF.
    pub detection_runs: usize,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Defaults sized to finish in minutes on a desktop.
    pub fn desk_scale(output_dir: PathBuf, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            util_groups: vec![0.3, 0.45, 0.6, 0.75, 0.9],
            sets_per_point: 100,
            n_rt: 4,
            n_sec: 3,
            sec_util_fraction: 0.5,
            seed,
            detection_runs: 50,
            output_dir,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentReport {
    pub files: Vec<PathBuf>,
    pub generated_sets: usize,
    pub solved_sets: usize,
    /// Skipped points, logged but not fatal.
    pub failures: Vec<String>,
}

enum PointOutcome {
    GenFailed(String),
    /// Counted toward the denominator; neither branch accepted.
    Rejected,
    Surveyed {
        passive_ok: bool,
        active_ok: bool,
        solved: Option<Box<SolvedPoint>>,
    },
}

struct SolvedPoint {
    eta_passive: Rat,
    eta_active: Rat,
    xi_passive: f64,
    xi_active: f64,
    solution: ContegoSolution,
}

struct PointResult {
    group: usize,
    set: usize,
    outcome: PointOutcome,
}

fn point_seed(seed: u64, group: usize, set: usize) -> u64 {
    let mut z = seed
        ^ (group as u64).wrapping_mul(0xA24B_AED4_963E_E407)
        ^ (set as u64).wrapping_mul(0x9FB2_1C65_1E98_DF25);
    z = (z ^ (z >> 32)).wrapping_mul(0xD6E8_FEB8_6659_FD93);
    z ^ (z >> 32)
}

/// Groups name the total base utilization: the generator takes the RT
/// share and derives the security budget from the fraction.
fn point_spec(config: &ExperimentConfig, group: usize, set: usize) -> GenSpec {
    let total = config.util_groups[group];
    let rt_target = if config.n_rt == 0 {
        total
    } else {
        total * (1.0 - config.sec_util_fraction)
    };
    GenSpec {
        sec_util_fraction: config.sec_util_fraction,
        ..GenSpec::new(
            config.n_rt,
            config.n_sec,
            rt_target,
            point_seed(config.seed, group, set),
        )
    }
}

fn evaluate_point(config: &ExperimentConfig, group: usize, set: usize) -> PointOutcome {
    let ts = match generate(&point_spec(config, group, set)) {
        Ok(ts) => ts,
        Err(e) => return PointOutcome::GenFailed(e.to_string()),
    };
    let survey = match survey_branches(&ts, &ServerSearchConfig::default()) {
        Ok(s) => s,
        Err(Unschedulable::RtBaseline) => return PointOutcome::Rejected,
        Err(e) => return PointOutcome::GenFailed(e.to_string()),
    };
    let solved = match (&survey.passive, &survey.active) {
        (Ok(pa), Ok(ac)) => Some(Box::new(SolvedPoint {
            eta_passive: pa.periods.eta.clone(),
            eta_active: ac.periods.eta.clone(),
            xi_passive: selection::mode_xi(ts.security(Mode::Passive), &pa.periods.periods),
            xi_active: selection::mode_xi(ts.security(Mode::Active), &ac.periods.periods),
            solution: ContegoSolution {
                passive_server: pa.server.clone(),
                active_server: ac.server.clone(),
                passive_periods: pa.periods.periods.clone(),
                active_periods: ac.periods.periods.clone(),
                active_level: ac.level,
                passive_tightness: pa.periods.eta.clone(),
                active_tightness: ac.periods.eta.clone(),
            },
        })),
        _ => None,
    };
    PointOutcome::Surveyed {
        passive_ok: survey.passive.is_ok(),
        active_ok: survey.active.is_ok(),
        solved,
    }
}

/// Latency samples for one group's first fully solved set, or an error
/// string describing why the group contributes nothing.
fn group_detection_samples(
    config: &ExperimentConfig,
    group: usize,
    results: &[PointResult],
) -> Result<(Vec<DetectionSample>, Vec<DetectionSample>), String> {
    let candidate = results
        .iter()
        .filter(|r| r.group == group)
        .find_map(|r| match &r.outcome {
            PointOutcome::Surveyed { solved: Some(s), .. } => Some((r.set, &s.solution)),
            _ => None,
        });
    let Some((set, solution)) = candidate else {
        return Err(format!(
            "group {:.4}: no solved set for the detection study",
            config.util_groups[group]
        ));
    };
    let ts = generate(&point_spec(config, group, set)).expect("solved point regenerates");
    let longest = solution
        .passive_periods
        .values()
        .chain(solution.active_periods.values())
        .max()
        .cloned()
        .unwrap_or_else(Rat::one);
    let horizon = &longest * &Rat::from_int(4);
    let timeout = &longest * &Rat::from_int(2);
    let study = detection_experiment(
        &ts,
        solution,
        config.detection_runs,
        point_seed(config.seed, group, usize::MAX),
        &ModeManagerConfig::new(timeout),
        &horizon,
    )
    .map_err(|e| format!("group {:.4}: {e}", config.util_groups[group]))?;
    Ok((study.switching, study.passive_only))
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    if config.util_groups.is_empty() {
        bail!("no utilization groups");
    }
    if config.util_groups.iter().any(|u| !(*u > 0.0 && *u < 1.0)) {
        bail!("utilization groups must lie in (0, 1)");
    }
    if config.sets_per_point == 0 {
        bail!("sets_per_point must be at least 1");
    }

    let points: Vec<(usize, usize)> = (0..config.util_groups.len())
        .flat_map(|g| (0..config.sets_per_point).map(move |s| (g, s)))
        .collect();
    let results: Vec<PointResult> = points
        .par_iter()
        .map(|&(group, set)| PointResult {
            group,
            set,
            outcome: evaluate_point(config, group, set),
        })
        .collect();

    let mut failures = Vec::new();
    let mut fig2 = String::from("util,set,eta_passive,eta_active,eta_diff\n");
    let mut fig3 = String::from("util,set,xi_passive,xi_active\n");
    let mut fig4 =
        String::from("util,generated,passive_accepted,active_accepted,passive_ratio,active_ratio\n");
    let mut generated_sets = 0usize;
    let mut solved_sets = 0usize;

    for (group, util) in config.util_groups.iter().enumerate() {
        let mut generated = 0usize;
        let mut passive_accepted = 0usize;
        let mut active_accepted = 0usize;
        for r in results.iter().filter(|r| r.group == group) {
            match &r.outcome {
                PointOutcome::GenFailed(e) => {
                    failures.push(format!("group {util:.4} set {}: {e}", r.set));
                }
                PointOutcome::Rejected => generated += 1,
                PointOutcome::Surveyed {
                    passive_ok,
                    active_ok,
                    solved,
                } => {
                    generated += 1;
                    passive_accepted += usize::from(*passive_ok);
                    active_accepted += usize::from(*active_ok);
                    if let Some(s) = solved {
                        solved_sets += 1;
                        let _ = writeln!(
                            fig2,
                            "{util:.4},{},{:.9},{:.9},{:.9}",
                            r.set,
                            s.eta_passive.to_f64(),
                            s.eta_active.to_f64(),
                            (&s.eta_active - &s.eta_passive).to_f64()
                        );
                        let _ = writeln!(
                            fig3,
                            "{util:.4},{},{:.9},{:.9}",
                            r.set, s.xi_passive, s.xi_active
                        );
                    }
                }
            }
        }
        generated_sets += generated;
        let ratio = |n: usize| {
            if generated == 0 {
                0.0
            } else {
                n as f64 / generated as f64
            }
        };
        let _ = writeln!(
            fig4,
            "{util:.4},{generated},{passive_accepted},{active_accepted},{:.6},{:.6}",
            ratio(passive_accepted),
            ratio(active_accepted)
        );
    }

    let mut switching = Vec::new();
    let mut passive_only = Vec::new();
    let detection: Vec<_> = (0..config.util_groups.len())
        .into_par_iter()
        .map(|g| group_detection_samples(config, g, &results))
        .collect();
    for outcome in detection {
        match outcome {
            Ok((sw, pa)) => {
                switching.extend(sw);
                passive_only.extend(pa);
            }
            Err(e) => failures.push(e),
        }
    }
    let mut fig6 = String::from("variant,latency,cum_prob\n");
    for (variant, samples) in [("switching", &switching), ("passive_only", &passive_only)] {
        let latencies: Vec<Time> = samples.iter().map(|s| s.latency.clone()).collect();
        if let Ok(points) = empirical_cdf(&latencies) {
            for (value, prob) in points {
                let _ = writeln!(
                    fig6,
                    "{variant},{:.9},{:.9}",
                    value.to_f64(),
                    prob.to_f64()
                );
            }
        }
    }

    fs::create_dir_all(&config.output_dir)
        .with_context(|| format!("creating {}", config.output_dir.display()))?;
    let mut files = Vec::new();
    for (name, content) in [
        ("fig2_eta_diff.csv", &fig2),
        ("fig3_xi.csv", &fig3),
        ("fig4_acceptance.csv", &fig4),
        ("fig6_detection_cdf.csv", &fig6),
    ] {
        let path = config.output_dir.join(name);
        write_file(&path, content)?;
        files.push(path);
    }
    Ok(ExperimentReport {
        files,
        generated_sets,
        solved_sets,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            util_groups: vec![0.3, 0.6],
            sets_per_point: 4,
            n_rt: 2,
            n_sec: 2,
            sec_util_fraction: 0.5,
            seed: 11,
            detection_runs: 3,
            output_dir: dir.to_path_buf(),
        }
    }

    #[test]
    fn campaign_emits_all_figures_with_sane_rows() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_experiment(&tiny_config(dir.path())).unwrap();
        assert_eq!(report.files.len(), 4);
        assert!(report.generated_sets <= 8);

        let fig4 = fs::read_to_string(dir.path().join("fig4_acceptance.csv")).unwrap();
        let rows: Vec<&str> = fig4.lines().skip(1).collect();
        assert_eq!(rows.len(), 2);
        for row in rows {
            let cols: Vec<&str> = row.split(',').collect();
            let passive_ratio: f64 = cols[4].parse().unwrap();
            let active_ratio: f64 = cols[5].parse().unwrap();
            assert!((0.0..=1.0).contains(&passive_ratio));
            assert!((0.0..=1.0).contains(&active_ratio));
            assert!(active_ratio >= passive_ratio);
        }

        let fig2 = fs::read_to_string(dir.path().join("fig2_eta_diff.csv")).unwrap();
        for row in fig2.lines().skip(1) {
            let diff: f64 = row.split(',').nth(4).unwrap().parse().unwrap();
            assert!(diff >= -1e-12, "eta_diff negative: {row}");
        }

        let fig3 = fs::read_to_string(dir.path().join("fig3_xi.csv")).unwrap();
        for row in fig3.lines().skip(1) {
            for col in row.split(',').skip(2) {
                let xi: f64 = col.parse().unwrap();
                assert!((0.0..=1.0 + 1e-12).contains(&xi));
            }
        }
    }

    #[test]
    fn campaign_reruns_are_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_experiment(&tiny_config(a.path())).unwrap();
        run_experiment(&tiny_config(b.path())).unwrap();
        for name in [
            "fig2_eta_diff.csv",
            "fig3_xi.csv",
            "fig4_acceptance.csv",
            "fig6_detection_cdf.csv",
        ] {
            let left = fs::read(a.path().join(name)).unwrap();
            let right = fs::read(b.path().join(name)).unwrap();
            assert_eq!(left, right, "{name} differs between reruns");
        }
    }

    #[test]
    fn bad_campaign_configs_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        cfg.util_groups.clear();
        assert!(run_experiment(&cfg).is_err());

        let mut cfg = tiny_config(dir.path());
        cfg.util_groups = vec![1.5];
        assert!(run_experiment(&cfg).is_err());

        let mut cfg = tiny_config(dir.path());
        cfg.sets_per_point = 0;
        assert!(run_experiment(&cfg).is_err());
    }
}
