//! Task models, validation, and rate-monotonic priority assignment.
//!
//! A system here is a legacy set of hard real-time tasks plus two lists of
//! sporadic security monitors: the ones run while the system is quiescent
//! (passive) and the ones run while it is hunting a suspected intrusion
//! (active). Real-time tasks have fixed rate-monotonic priorities, index 0
//! highest. The security monitors execute inside a budgeted server whose
//! priority level depends on the mode: below every RT task in passive mode,
//! at some level in `[min_active_level, m]` in active mode.

use crate::time::{Rat, Time};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

/// A legacy hard real-time task (C, T, D), constrained deadline D ≤ T.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "RawRealTimeTask")]
pub struct RealTimeTask {
    pub id: String,
    pub wcet: Time,
    pub period: Time,
    pub deadline: Time,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRealTimeTask {
    id: String,
    wcet: Time,
    period: Time,
    #[serde(default)]
    deadline: Option<Time>,
}

impl From<RawRealTimeTask> for RealTimeTask {
    fn from(raw: RawRealTimeTask) -> Self {
        let deadline = raw.deadline.unwrap_or_else(|| raw.period.clone());
        RealTimeTask {
            id: raw.id,
            wcet: raw.wcet,
            period: raw.period,
            deadline,
        }
    }
}

impl RealTimeTask {
    pub fn new(id: &str, wcet: Time, period: Time) -> Self {
        let deadline = period.clone();
        RealTimeTask {
            id: id.to_string(),
            wcet,
            period,
            deadline,
        }
    }

    pub fn with_deadline(mut self, deadline: Time) -> Self {
        self.deadline = deadline;
        self
    }

    pub fn utilization(&self) -> Rat {
        &self.wcet / &self.period
    }
}

/// A sporadic security monitor (C, T_des, T_max, ω). Its actual period is
/// chosen by the optimizer within [desired_period, max_period]; the deadline
/// is implicit (equal to the solved period).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "RawSecurityTask")]
pub struct SecurityTask {
    pub id: String,
    pub wcet: Time,
    pub desired_period: Time,
    pub max_period: Time,
    pub weight: Rat,
    /// Anomaly classes this monitor can detect (used by the simulator).
    pub detects: Vec<String>,
    #[serde(skip)]
    pub solved_period: Option<Time>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSecurityTask {
    id: String,
    wcet: Time,
    desired_period: Time,
    max_period: Time,
    #[serde(default)]
    weight: Option<Rat>,
    #[serde(default)]
    detects: Vec<String>,
}

impl From<RawSecurityTask> for SecurityTask {
    fn from(raw: RawSecurityTask) -> Self {
        SecurityTask {
            id: raw.id,
            wcet: raw.wcet,
            desired_period: raw.desired_period,
            max_period: raw.max_period,
            weight: raw.weight.unwrap_or_else(Rat::one),
            detects: raw.detects,
            solved_period: None,
        }
    }
}

impl SecurityTask {
    pub fn new(id: &str, wcet: Time, desired_period: Time, max_period: Time) -> Self {
        SecurityTask {
            id: id.to_string(),
            wcet,
            desired_period,
            max_period,
            weight: Rat::one(),
            detects: Vec::new(),
            solved_period: None,
        }
    }

    pub fn with_weight(mut self, weight: Rat) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_detects(mut self, classes: &[&str]) -> Self {
        self.detects = classes.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn with_solved_period(mut self, period: Time) -> Self {
        self.solved_period = Some(period);
        self
    }

    /// Utilization at the desired (shortest admissible) period.
    pub fn desired_utilization(&self) -> Rat {
        &self.wcet / &self.desired_period
    }
}

/// Which security list (and server placement) is in force.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    Passive,
    Active,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Passive => write!(f, "passive"),
            Mode::Active => write!(f, "active"),
        }
    }
}

/// Server budget: capacity Q per replenishment period P, at a fixed
/// priority level (m = below all RT tasks).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerParams {
    pub capacity: Time,
    pub replenish_period: Time,
    pub mode: Mode,
    pub level: usize,
}

impl ServerParams {
    /// Q/P, the server's bandwidth share.
    pub fn ratio(&self) -> Rat {
        &self.capacity / &self.replenish_period
    }
}

/// The complete system under analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSet {
    /// Must be in RM order (ascending period, ties by ascending id);
    /// the index is the priority, 0 highest.
    pub rt_tasks: Vec<RealTimeTask>,
    pub passive_security: Vec<SecurityTask>,
    pub active_security: Vec<SecurityTask>,
    /// Lowest-numbered (most privileged) level the active server may take.
    pub min_active_level: usize,
}

impl TaskSet {
    pub fn from_json(s: &str) -> Result<TaskSet, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("task set serializes")
    }

    /// Copy with rt_tasks put into RM order.
    pub fn with_rm_priorities(mut self) -> Result<TaskSet, ModelError> {
        if !self.rt_tasks.is_empty() {
            self.rt_tasks = assign_rm_priorities(self.rt_tasks)?;
        }
        Ok(self)
    }

    pub fn rt_count(&self) -> usize {
        self.rt_tasks.len()
    }

    pub fn security(&self, mode: Mode) -> &[SecurityTask] {
        match mode {
            Mode::Passive => &self.passive_security,
            Mode::Active => &self.active_security,
        }
    }

    pub fn rt_utilization(&self) -> Rat {
        self.rt_tasks.iter().map(|t| t.utilization()).sum()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("no tasks to prioritize")]
    EmptyTaskList,
    #[error("duplicate task id {0:?}")]
    DuplicateId(String),
}

/// Sort into RM order: ascending period, equal periods by ascending id.
/// The returned index is the priority (0 highest). Total and deterministic,
/// so re-running on any permutation yields the same sequence.
pub fn assign_rm_priorities(mut tasks: Vec<RealTimeTask>) -> Result<Vec<RealTimeTask>, ModelError> {
    if tasks.is_empty() {
        return Err(ModelError::EmptyTaskList);
    }
    let mut seen = BTreeSet::new();
    for t in &tasks {
        if !seen.insert(t.id.clone()) {
            return Err(ModelError::DuplicateId(t.id.clone()));
        }
    }
    tasks.sort_by(|a, b| a.period.cmp(&b.period).then_with(|| a.id.cmp(&b.id)));
    Ok(tasks)
}

/// A single broken invariant, naming the offending task where applicable.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("task {id}: wcet must be positive")]
    NonPositiveWcet { id: String },
    #[error("task {id}: wcet exceeds deadline")]
    WcetExceedsDeadline { id: String },
    #[error("task {id}: deadline exceeds period")]
    DeadlineExceedsPeriod { id: String },
    #[error("security task {id}: wcet exceeds desired period")]
    WcetExceedsDesiredPeriod { id: String },
    #[error("security task {id}: desired period exceeds max period")]
    DesiredExceedsMaxPeriod { id: String },
    #[error("security task {id}: weight must be positive")]
    NonPositiveWeight { id: String },
    #[error("security task {id}: solved period outside [desired, max]")]
    SolvedPeriodOutOfBounds { id: String },
    #[error("duplicate task id {id:?}")]
    DuplicateId { id: String },
    #[error("rt task {id} out of rate-monotonic order")]
    RtTasksNotRmOrdered { id: String },
    #[error("min_active_level {level} out of range for {rt_count} rt tasks")]
    MinActiveLevelOutOfRange { level: usize, rt_count: usize },
}

/// Check every model invariant and return all violations (not just the
/// first). An empty vector means the set is valid.
pub fn validate_task_set(ts: &TaskSet) -> Vec<Violation> {
    let mut out = Vec::new();

    for t in &ts.rt_tasks {
        if !t.wcet.is_positive() {
            out.push(Violation::NonPositiveWcet { id: t.id.clone() });
        }
        if t.wcet > t.deadline {
            out.push(Violation::WcetExceedsDeadline { id: t.id.clone() });
        }
        if t.deadline > t.period {
            out.push(Violation::DeadlineExceedsPeriod { id: t.id.clone() });
        }
    }
    for w in ts.rt_tasks.windows(2) {
        let in_order = w[0].period < w[1].period
            || (w[0].period == w[1].period && w[0].id < w[1].id);
        if !in_order {
            out.push(Violation::RtTasksNotRmOrdered { id: w[1].id.clone() });
        }
    }

    for s in ts.passive_security.iter().chain(&ts.active_security) {
        if !s.wcet.is_positive() {
            out.push(Violation::NonPositiveWcet { id: s.id.clone() });
        }
        if s.wcet > s.desired_period {
            out.push(Violation::WcetExceedsDesiredPeriod { id: s.id.clone() });
        }
        if s.desired_period > s.max_period {
            out.push(Violation::DesiredExceedsMaxPeriod { id: s.id.clone() });
        }
        if !s.weight.is_positive() {
            out.push(Violation::NonPositiveWeight { id: s.id.clone() });
        }
        if let Some(p) = &s.solved_period {
            if *p < s.desired_period || *p > s.max_period {
                out.push(Violation::SolvedPeriodOutOfBounds { id: s.id.clone() });
            }
        }
    }

    // Ids must be unique within each list, and no security id may collide
    // with an RT id. The same id in both security lists is allowed: it is
    // the same monitor configured per mode.
    let mut rt_ids = BTreeSet::new();
    for t in &ts.rt_tasks {
        if !rt_ids.insert(t.id.as_str()) {
            out.push(Violation::DuplicateId { id: t.id.clone() });
        }
    }
    for list in [&ts.passive_security, &ts.active_security] {
        let mut ids = BTreeSet::new();
        for s in list {
            if !ids.insert(s.id.as_str()) || rt_ids.contains(s.id.as_str()) {
                out.push(Violation::DuplicateId { id: s.id.clone() });
            }
        }
    }

    let m = ts.rt_tasks.len();
    let level_ok = if m == 0 {
        ts.min_active_level == 0
    } else {
        (1..=m).contains(&ts.min_active_level)
    };
    if !level_ok {
        out.push(Violation::MinActiveLevelOutOfRange {
            level: ts.min_active_level,
            rt_count: m,
        });
    }

    out
}

/// Everything parameter selection decides: periods and server budget for
/// both modes, plus the active server's priority level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContegoSolution {
    pub passive_server: ServerParams,
    pub active_server: ServerParams,
    pub passive_periods: std::collections::BTreeMap<String, Time>,
    pub active_periods: std::collections::BTreeMap<String, Time>,
    pub active_level: usize,
    pub passive_tightness: Rat,
    pub active_tightness: Rat,
}

impl ContegoSolution {
    pub fn from_json(s: &str) -> Result<ContegoSolution, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serializes")
    }
}
