//! Closed-form schedulability checks: response-time analysis for the RT
//! tasks, and the server-side constraints (server schedulability, supply
//! to the security tasks, and the bound protecting RT tasks that run
//! below an active server).
//!
//! Everything here is exact rational arithmetic; boundary equality counts
//! as satisfied, matching the non-strict inequalities of the underlying
//! theory.

use crate::model::{RealTimeTask, SecurityTask, TaskSet};
use crate::time::{ceil_div, Rat, Time};
use std::collections::BTreeMap;

/// Outcome of the response-time recurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponseTime {
    Converged(Time),
    /// The iterate exceeded the deadline; no fixed point at or below it.
    Divergent,
}

impl ResponseTime {
    pub fn meets(&self, deadline: &Time) -> bool {
        match self {
            ResponseTime::Converged(w) => w <= deadline,
            ResponseTime::Divergent => false,
        }
    }
}

/// Least fixed point of w = C + Σ_{h ∈ hp} ⌈w/T_h⌉·C_h, starting at w = C.
/// Iterates are non-decreasing, so the fixed point is reported as soon as
/// an iterate repeats; once an iterate exceeds the deadline the recurrence
/// cannot converge at or below it and `Divergent` is returned.
pub fn response_time(task: &RealTimeTask, hp: &[RealTimeTask]) -> ResponseTime {
    let mut w = task.wcet.clone();
    loop {
        if w > task.deadline {
            return ResponseTime::Divergent;
        }
        let next = hp.iter().fold(task.wcet.clone(), |acc, h| {
            acc + ceil_div(&w, &h.period) * &h.wcet
        });
        if next == w {
            return ResponseTime::Converged(w);
        }
        w = next;
    }
}

/// Per-task response times plus the overall verdict.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RtSchedReport {
    pub schedulable: bool,
    /// In priority order, one entry per RT task.
    pub response_times: Vec<(String, ResponseTime)>,
}

/// True iff every RT task's worst-case response time is within its
/// deadline. Vacuously true for an empty set.
pub fn is_rt_schedulable(ts: &TaskSet) -> RtSchedReport {
    let mut response_times = Vec::with_capacity(ts.rt_tasks.len());
    let mut schedulable = true;
    for (j, task) in ts.rt_tasks.iter().enumerate() {
        let w = response_time(task, &ts.rt_tasks[..j]);
        schedulable &= w.meets(&task.deadline);
        response_times.push((task.id.clone(), w));
    }
    RtSchedReport {
        schedulable,
        response_times,
    }
}

/// Worst-case interference the server suffers from higher-priority RT
/// tasks over one replenishment period: Δ = Σ (P/T_h + 1)·C_h. The linear
/// form (not a ceiling) keeps the optimizers' objective continuous in P.
pub fn server_interference(p: &Time, hp_rt: &[RealTimeTask]) -> Time {
    hp_rt
        .iter()
        .map(|h| (p / &h.period + Rat::one()) * &h.wcet)
        .sum()
}

/// Server schedulability: the server, seen as a task with budget Q and
/// period P, finishes its budget within the period: Q + Δ ≤ P.
pub fn check_server_schedulable(q: &Time, p: &Time, hp_rt: &[RealTimeTask]) -> bool {
    q + &server_interference(p, hp_rt) <= *p
}

/// Worst-case demand a security task places on the server within one of
/// its own periods, counting same-server higher-priority monitors:
/// I = C + Σ ⌈T/T_h⌉·C_h. `hp_sec` carries (wcet, period) pairs.
pub fn security_workload(wcet: &Time, t_i: &Time, hp_sec: &[(Time, Time)]) -> Time {
    hp_sec.iter().fold(wcet.clone(), |acc, (c_h, t_h)| {
        acc + ceil_div(t_i, t_h) * c_h
    })
}

/// Supply condition: the server's minimum guaranteed supply over the
/// task's period covers the demand: (Q/P)·[T − (P − Q) − Δ] ≥ I.
pub fn check_supply(q: &Time, p: &Time, delta: &Time, t_i: &Time, i_i: &Time) -> bool {
    let bracket = t_i - &(p - q) - delta;
    &(q / p) * &bracket >= *i_i
}

/// Protection of an RT task running below an active server: its demand
/// plus RT interference plus the server envelope fit in the deadline:
/// C + Σ_{hp} ⌈D/T_h⌉·C_h + (D/P + 1)·Q ≤ D.
pub fn check_lp_rt(q: &Time, p: &Time, task: &RealTimeTask, hp_rt: &[RealTimeTask]) -> bool {
    let d = &task.deadline;
    let rt_interference: Rat = hp_rt
        .iter()
        .map(|h| ceil_div(d, &h.period) * &h.wcet)
        .sum();
    &task.wcet + &rt_interference + (d / p + Rat::one()) * q <= *d
}

/// The task environment seen from one vantage point: RT tasks above and
/// below a priority level, plus same-server security tasks of higher
/// priority than a given monitor. The three sequences are disjoint.
#[derive(Debug, Clone)]
pub struct InterferenceContext {
    pub higher_rt: Vec<RealTimeTask>,
    pub lower_rt: Vec<RealTimeTask>,
    pub higher_sec: Vec<SecurityTask>,
}

impl InterferenceContext {
    /// Context for a server placed at `level`: RT tasks with priority
    /// index < level are above it, the rest below. No security peers.
    pub fn for_server(ts: &TaskSet, level: usize) -> InterferenceContext {
        let level = level.min(ts.rt_tasks.len());
        InterferenceContext {
            higher_rt: ts.rt_tasks[..level].to_vec(),
            lower_rt: ts.rt_tasks[level..].to_vec(),
            higher_sec: Vec::new(),
        }
    }
}

/// Security tasks in server-internal RM order (ascending period, ties by
/// ascending id) under the given period assignment. Returns
/// (task id, wcet, period) triples; the higher-priority peers of entry i
/// are entries 0..i.
pub fn rm_order_security(
    tasks: &[SecurityTask],
    periods: &BTreeMap<String, Time>,
) -> Vec<(String, Time, Time)> {
    let mut ordered: Vec<(String, Time, Time)> = tasks
        .iter()
        .map(|s| {
            let t = periods
                .get(&s.id)
                .cloned()
                .unwrap_or_else(|| s.desired_period.clone());
            (s.id.clone(), s.wcet.clone(), t)
        })
        .collect();
    ordered.sort_by(|a, b| a.2.cmp(&b.2).then_with(|| a.0.cmp(&b.0)));
    ordered
}
