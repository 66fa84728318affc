//! End-to-end parameter selection. Checks the RT core stands on its own,
//! sizes a server per mode (for ACTIVE, at every admissible priority
//! level), stretches security periods under the server utilization bound,
//! and reports the tightness and effectiveness metrics.
//!
//! Both branches must succeed for a solution; the ACTIVE branch keeps the
//! level with the best cumulative tightness, ties to the largest level
//! (least perturbation of the RT order).

use crate::analysis::{
    check_supply, is_rt_schedulable, rm_order_security, security_workload, server_interference,
    InterferenceContext,
};
use crate::model::{
    validate_task_set, ContegoSolution, Mode, SecurityTask, ServerParams, TaskSet, Violation,
};
use crate::period_opt::{adapt_periods, server_util_bound_floor, PeriodProblem, PeriodSolution};
use crate::server_opt::{select_active_params, select_passive_params, ServerSearchConfig};
use crate::time::{Rat, Time};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Evaluation metrics for one solved instance. Tightness values are exact;
/// the effectiveness scores ξ involve a Euclidean norm and stay floating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub eta_passive: Rat,
    pub eta_active: Rat,
    pub eta_diff: Rat,
    /// ξ of the active-mode periods, in [0, 1].
    pub xi: f64,
    /// ξ of the passive-mode periods.
    pub xi_passive: f64,
    /// Per-task T_des/T, keyed by task id, one map per mode.
    pub per_task_tightness_passive: BTreeMap<String, Rat>,
    pub per_task_tightness_active: BTreeMap<String, Rat>,
}

/// A complete, feasible configuration plus its metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solved {
    pub solution: ContegoSolution,
    pub metrics: MetricsReport,
    /// Non-fatal observations, e.g. supply rechecked at the adapted
    /// periods instead of the desired ones the server was sized at.
    pub warnings: Vec<String>,
}

fn format_violations(vs: &[Violation]) -> String {
    vs.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Unschedulable {
    #[error("invalid task set: {}", format_violations(.0))]
    InvalidTaskSet(Vec<Violation>),
    #[error("rt task set unschedulable on its own")]
    RtBaseline,
    #[error("passive branch infeasible: {0}")]
    Passive(String),
    #[error("active branch infeasible: {0}")]
    Active(String),
}

/// One mode's feasible configuration before metrics are attached.
#[derive(Debug, Clone)]
pub struct ModeSolution {
    pub server: ServerParams,
    pub periods: PeriodSolution,
    pub level: usize,
}

/// Feasibility of the two branches, each tried on its own: the ACTIVE
/// search runs even when PASSIVE fails, so acceptance-ratio experiments
/// can count the branches separately.
#[derive(Debug, Clone)]
pub struct BranchSurvey {
    pub passive: Result<ModeSolution, String>,
    pub active: Result<ModeSolution, String>,
}

/// Validate, check the bare RT core, then size both branches.
pub fn survey_branches(
    ts: &TaskSet,
    cfg: &ServerSearchConfig,
) -> Result<BranchSurvey, Unschedulable> {
    let violations = validate_task_set(ts);
    if !violations.is_empty() {
        return Err(Unschedulable::InvalidTaskSet(violations));
    }
    if !is_rt_schedulable(ts).schedulable {
        return Err(Unschedulable::RtBaseline);
    }
    let passive = solve_mode(ts, None, cfg);
    let m = ts.rt_tasks.len();
    let mut candidates = Vec::new();
    let mut failures = Vec::new();
    for level in ts.min_active_level..=m {
        match solve_mode(ts, Some(level), cfg) {
            Ok(c) => candidates.push(c),
            Err(e) => failures.push(format!("level {level}: {e}")),
        }
    }
    let active = pick_best(candidates).ok_or_else(|| failures.join("; "));
    Ok(BranchSurvey { passive, active })
}

/// Size the server for one mode at the desired periods, then adapt the
/// periods under that server's utilization bound and period floor.
fn solve_mode(
    ts: &TaskSet,
    level: Option<usize>,
    cfg: &ServerSearchConfig,
) -> Result<ModeSolution, String> {
    let (tasks, server) = match level {
        None => {
            let tasks = ts.security(Mode::Passive);
            let desired = desired_periods(tasks);
            (tasks, select_passive_params(ts, &desired, cfg))
        }
        Some(l) => {
            let tasks = ts.security(Mode::Active);
            let desired = desired_periods(tasks);
            (tasks, select_active_params(ts, l, &desired, cfg))
        }
    };
    let server = server.map_err(|e| e.to_string())?;
    let q = &server.capacity;
    let p = &server.replenish_period;
    let problem = PeriodProblem {
        tasks: tasks.to_vec(),
        utilization_budget: server_util_bound_floor(tasks.len(), q, p),
        floor_period: &(&Rat::from_int(3) * p) - &(&Rat::from_int(2) * q),
    };
    let periods = adapt_periods(&problem).map_err(|e| e.to_string())?;
    Ok(ModeSolution {
        level: server.level,
        server,
        periods,
    })
}

fn desired_periods(tasks: &[SecurityTask]) -> BTreeMap<String, Time> {
    tasks
        .iter()
        .map(|s| (s.id.clone(), s.desired_period.clone()))
        .collect()
}

/// Among feasible level candidates, the best η; ties go to the largest
/// level. Assumes candidates arrive in ascending level order.
fn pick_best(candidates: Vec<ModeSolution>) -> Option<ModeSolution> {
    candidates.into_iter().fold(None, |best, cand| match best {
        Some(b) if cand.periods.eta < b.periods.eta => Some(b),
        _ => Some(cand),
    })
}

/// Feasibility checking and parameter selection across both modes.
pub fn solve(ts: &TaskSet, cfg: &ServerSearchConfig) -> Result<Solved, Unschedulable> {
    let survey = survey_branches(ts, cfg)?;
    let passive = survey.passive.map_err(Unschedulable::Passive)?;
    let active = survey.active.map_err(Unschedulable::Active)?;

    let mut warnings = Vec::new();
    for (mode, sol) in [(Mode::Passive, &passive), (Mode::Active, &active)] {
        warnings.extend(recheck_supply(ts, mode, &sol.server, &sol.periods.periods));
    }

    let metrics = MetricsReport {
        eta_passive: passive.periods.eta.clone(),
        eta_active: active.periods.eta.clone(),
        eta_diff: &active.periods.eta - &passive.periods.eta,
        xi: mode_xi(ts.security(Mode::Active), &active.periods.periods),
        xi_passive: mode_xi(ts.security(Mode::Passive), &passive.periods.periods),
        per_task_tightness_passive: per_task_tightness(
            ts.security(Mode::Passive),
            &passive.periods.periods,
        ),
        per_task_tightness_active: per_task_tightness(
            ts.security(Mode::Active),
            &active.periods.periods,
        ),
    };
    let solution = ContegoSolution {
        passive_server: passive.server,
        active_server: active.server,
        passive_periods: passive.periods.periods,
        active_periods: active.periods.periods,
        active_level: active.level,
        passive_tightness: metrics.eta_passive.clone(),
        active_tightness: metrics.eta_active.clone(),
    };
    Ok(Solved {
        solution,
        metrics,
        warnings,
    })
}

fn recheck_supply(
    ts: &TaskSet,
    mode: Mode,
    server: &ServerParams,
    periods: &BTreeMap<String, Time>,
) -> Vec<String> {
    let ctx = InterferenceContext::for_server(ts, server.level);
    let delta = server_interference(&server.replenish_period, &ctx.higher_rt);
    let ordered = rm_order_security(ts.security(mode), periods);
    let mut out = Vec::new();
    for (i, (id, wcet, period)) in ordered.iter().enumerate() {
        let hp: Vec<(Time, Time)> = ordered[..i]
            .iter()
            .map(|(_, c, t)| (c.clone(), t.clone()))
            .collect();
        let demand = security_workload(wcet, period, &hp);
        if !check_supply(
            &server.capacity,
            &server.replenish_period,
            &delta,
            period,
            &demand,
        ) {
            out.push(format!(
                "{mode} supply falls short for {id} at adapted period {period}"
            ));
        }
    }
    out
}

/// Cumulative weighted tightness Σ ωᵢ·Tᵢ^des/Tᵢ over solved periods.
pub fn tightness(tasks: &[SecurityTask]) -> Result<Rat, TightnessError> {
    tasks
        .iter()
        .map(|s| {
            s.solved_period
                .as_ref()
                .map(|t| &s.weight * &(&s.desired_period / t))
                .ok_or_else(|| TightnessError::UnsolvedPeriod(s.id.clone()))
        })
        .sum()
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TightnessError {
    #[error("task {0} has no solved period")]
    UnsolvedPeriod(String),
}

/// Normalized distance of the solved periods from the desired ones:
/// 1 − ‖T − T^des‖₂ / ‖T^max − T^des‖₂, clamped into [0, 1].
pub fn effectiveness(
    solved: &[Time],
    desired: &[Time],
    maximum: &[Time],
) -> Result<f64, EffectivenessError> {
    if solved.is_empty() || solved.len() != desired.len() || solved.len() != maximum.len() {
        return Err(EffectivenessError::BadShape);
    }
    let dist = |a: &[Time], b: &[Time]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let d = (x - y).to_f64();
                d * d
            })
            .sum::<f64>()
            .sqrt()
    };
    let denom = dist(maximum, desired);
    if denom == 0.0 {
        return Err(EffectivenessError::DegenerateBounds);
    }
    Ok((1.0 - dist(solved, desired) / denom).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EffectivenessError {
    #[error("period vectors empty or of different lengths")]
    BadShape,
    #[error("degenerate bounds: maximum periods equal desired periods")]
    DegenerateBounds,
}

/// ξ for one mode's task vector. Fully degenerate bounds pin every period
/// at its desired value, which counts as a perfect score.
pub(crate) fn mode_xi(tasks: &[SecurityTask], periods: &BTreeMap<String, Time>) -> f64 {
    if tasks.iter().all(|s| s.max_period == s.desired_period) {
        return 1.0;
    }
    let pick = |f: fn(&SecurityTask) -> Time| tasks.iter().map(f).collect::<Vec<_>>();
    let solved: Vec<Time> = tasks.iter().map(|s| periods[&s.id].clone()).collect();
    let desired = pick(|s| s.desired_period.clone());
    let maximum = pick(|s| s.max_period.clone());
    effectiveness(&solved, &desired, &maximum).expect("bounds checked non-degenerate")
}

fn per_task_tightness(
    tasks: &[SecurityTask],
    periods: &BTreeMap<String, Time>,
) -> BTreeMap<String, Rat> {
    tasks
        .iter()
        .map(|s| (s.id.clone(), &s.desired_period / &periods[&s.id]))
        .collect()
}
