//! Discrete-event simulation of the fixed-priority preemptive schedule:
//! RT tasks under RM, the budgeted security server at its mode's priority
//! level, and the PASSIVE/ACTIVE mode manager driven by an anomaly script.
//!
//! Server runtime rules: a security arrival finding the server cold opens
//! a window with full capacity Q ending one replenishment period later;
//! capacity drains only while a security job actually executes (frozen
//! under preemption); exhaustion with pending work suspends the server
//! until the window boundary, where it recharges in full; an emptied queue
//! closes the window, so later arrivals inside it wait for the boundary
//! too. Windows therefore start at least P apart and carry at most Q of
//! execution each, which keeps every analysis envelope sound.
//!
//! All times are exact rationals, so event coincidence is exact;
//! same-instant work is processed in a fixed order (completions, deadline
//! misses, replenishments, releases, injections, mode switches). A release
//! whose deadline lies within the horizon is always matched by a COMPLETE
//! or DEADLINE_MISS; jobs truncated by the horizon stay unmatched.

use crate::analysis::{check_lp_rt, check_server_schedulable, is_rt_schedulable};
use crate::model::{validate_task_set, ContegoSolution, Mode, SecurityTask, TaskSet, Violation};
use crate::time::{lcm_big, Rat, Time};
use num::{BigInt, One};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Release,
    Start,
    Preempt,
    Complete,
    DeadlineMiss,
    ServerReplenish,
    ServerExhaust,
    ModeSwitch,
    AnomalyInject,
    AnomalyDetect,
}

impl std::fmt::Display for EventKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EventKind::Release => "RELEASE",
            EventKind::Start => "START",
            EventKind::Preempt => "PREEMPT",
            EventKind::Complete => "COMPLETE",
            EventKind::DeadlineMiss => "DEADLINE_MISS",
            EventKind::ServerReplenish => "SERVER_REPLENISH",
            EventKind::ServerExhaust => "SERVER_EXHAUST",
            EventKind::ModeSwitch => "MODE_SWITCH",
            EventKind::AnomalyInject => "ANOMALY_INJECT",
            EventKind::AnomalyDetect => "ANOMALY_DETECT",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimEvent {
    pub time: Time,
    pub kind: EventKind,
    pub subject: String,
}

impl SimEvent {
    /// One line-delimited trace record: time, kind, subject.
    pub fn to_line(&self) -> String {
        format!("{}\t{}\t{}", self.time, self.kind, self.subject)
    }
}

/// One scripted anomaly: at `time` the system state turns anomalous in
/// class `class` until some matching security job observes it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnomalyInjection {
    pub time: Time,
    pub class: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwitchDirective {
    Activate,
    Ignore,
}

/// Mode-manager policy: which anomaly classes wake the ACTIVE mode, and
/// how long a fruitless hunt lasts before falling back to PASSIVE.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeManagerConfig {
    pub active_timeout: Time,
    /// Classes not listed default to `Activate`.
    pub switch_triggers: BTreeMap<String, SwitchDirective>,
}

impl ModeManagerConfig {
    pub fn new(active_timeout: Time) -> Self {
        ModeManagerConfig {
            active_timeout,
            switch_triggers: BTreeMap::new(),
        }
    }

    fn directive(&self, class: &str) -> SwitchDirective {
        self.switch_triggers
            .get(class)
            .copied()
            .unwrap_or(SwitchDirective::Activate)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReleasePolicy {
    /// All first releases at t=0, then strictly periodic (RM worst case).
    Synchronous,
    /// Sporadic: inter-arrival T·(1 + jitter·u) with u drawn uniformly on
    /// the millitick grid; first releases stay at the anchor.
    JitteredSporadic { seed: u64, jitter: Rat },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: Time,
    pub release_policy: ReleasePolicy,
    pub anomaly_script: Vec<AnomalyInjection>,
    /// None disables mode switching: the system stays PASSIVE throughout.
    pub mode_manager: Option<ModeManagerConfig>,
}

impl SimConfig {
    /// PASSIVE-only synchronous run with no anomalies.
    pub fn plain(horizon: Time) -> Self {
        SimConfig {
            horizon,
            release_policy: ReleasePolicy::Synchronous,
            anomaly_script: Vec::new(),
            mode_manager: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionSample {
    pub inject_time: Time,
    pub detect_time: Time,
    /// detect_time − inject_time.
    pub latency: Time,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimSummary {
    pub rt_deadline_misses: usize,
    pub security_deadline_misses: usize,
    /// Max observed response time per task id.
    pub max_response: BTreeMap<String, Time>,
    pub detections: Vec<DetectionSample>,
    /// Anomalies injected but never observed within the horizon.
    pub undetected_anomalies: usize,
    /// (switch time, mode entered), starting with the initial mode at 0.
    pub mode_intervals: Vec<(Time, Mode)>,
    /// Security jobs discarded by mode switches.
    pub abandoned_security_jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimTrace {
    pub events: Vec<SimEvent>,
    pub summary: SimSummary,
}

impl SimTrace {
    /// All events as line-delimited records.
    pub fn export_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        out
    }

    pub fn misses(&self) -> impl Iterator<Item = &SimEvent> {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::DeadlineMiss)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("invalid task set: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidTaskSet(Vec<Violation>),
    #[error("solution fails re-verification: {0}")]
    InvalidSolution(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("horizon must be positive")]
    NonPositiveHorizon,
    #[error("hyperperiod of {ticks} ticks exceeds the cap of {cap}")]
    HyperperiodOverCap { ticks: String, cap: i64 },
    #[error("empty sample set")]
    EmptySamples,
}

pub const HYPERPERIOD_TICK_CAP: i64 = 10_000_000;

/// Paired detection-latency measurements: the same seeded anomalies run
/// once with mode switching enabled and once PASSIVE-only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionStudy {
    pub switching: Vec<DetectionSample>,
    pub passive_only: Vec<DetectionSample>,
    pub undetected_switching: usize,
    pub undetected_passive: usize,
    /// Pairs excluded because either arm missed the anomaly.
    pub dropped_pairs: usize,
}

// ---------------------------------------------------------------------
// Engine internals.

fn midx(mode: Mode) -> usize {
    match mode {
        Mode::Passive => 0,
        Mode::Active => 1,
    }
}

fn server_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Passive => "passive_server",
        Mode::Active => "active_server",
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Phase {
    Cold,
    Windowed {
        capacity: Time,
        window_end: Time,
        /// Queue went idle (or was abandoned): remaining capacity is void
        /// and arrivals wait for the boundary.
        idle_closed: bool,
        consumed: Time,
    },
}

#[derive(Debug, Clone)]
struct ServerSetup {
    q: Time,
    p: Time,
    level: usize,
}

#[derive(Debug, Clone)]
struct SecCtx {
    id: String,
    wcet: Time,
    period: Time,
    /// Priority among same-server peers: position in RM order.
    rm_rank: usize,
    detects: Vec<String>,
}

#[derive(Debug, Clone)]
struct RtJob {
    task: usize,
    release: Time,
    deadline: Time,
    remaining: Time,
    missed: bool,
}

#[derive(Debug, Clone)]
struct SecJob {
    task: usize,
    release: Time,
    deadline: Time,
    remaining: Time,
    missed: bool,
    first_exec: Option<Time>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum RunnerKey {
    Rt { task: usize, release: Time },
    Sec { task: usize, release: Time },
}

#[derive(Debug, Clone)]
struct PendingAnomaly {
    inject: Time,
    class: String,
    detected: bool,
}

struct Engine<'a> {
    ts: &'a TaskSet,
    horizon: Time,
    policy: ReleasePolicy,
    mode_cfg: Option<&'a ModeManagerConfig>,
    rng: Option<ChaCha8Rng>,
    setup: [Option<ServerSetup>; 2],
    sec_ctx: [Vec<SecCtx>; 2],

    now: Time,
    mode: Mode,
    rt_jobs: Vec<RtJob>,
    sec_jobs: Vec<SecJob>,
    rt_next: Vec<Time>,
    sec_next: Vec<Time>,
    phases: [Phase; 2],
    active_timer: Option<Time>,
    script: Vec<AnomalyInjection>,
    script_idx: usize,
    anomalies: Vec<PendingAnomaly>,
    pending_switch: Option<Mode>,
    running: Option<RunnerKey>,

    events: Vec<SimEvent>,
    rt_misses: usize,
    sec_misses: usize,
    max_response: BTreeMap<String, Time>,
    detections: Vec<DetectionSample>,
    mode_intervals: Vec<(Time, Mode)>,
    abandoned: usize,
}

impl<'a> Engine<'a> {
    fn new(ts: &'a TaskSet, sol: Option<&'a ContegoSolution>, cfg: &'a SimConfig) -> Engine<'a> {
        let mut setup = [None, None];
        let mut sec_ctx = [Vec::new(), Vec::new()];
        if let Some(sol) = sol {
            for (mode, server, periods) in [
                (Mode::Passive, &sol.passive_server, &sol.passive_periods),
                (Mode::Active, &sol.active_server, &sol.active_periods),
            ] {
                setup[midx(mode)] = Some(ServerSetup {
                    q: server.capacity.clone(),
                    p: server.replenish_period.clone(),
                    level: server.level,
                });
                sec_ctx[midx(mode)] = build_sec_ctx(ts.security(mode), periods);
            }
        }
        let rng = match &cfg.release_policy {
            ReleasePolicy::Synchronous => None,
            ReleasePolicy::JitteredSporadic { seed, .. } => {
                Some(ChaCha8Rng::seed_from_u64(*seed))
            }
        };
        let mut script = cfg.anomaly_script.clone();
        script.sort_by(|a, b| a.time.cmp(&b.time).then_with(|| a.class.cmp(&b.class)));
        let n_pa = sec_ctx[0].len();
        Engine {
            ts,
            horizon: cfg.horizon.clone(),
            policy: cfg.release_policy.clone(),
            mode_cfg: cfg.mode_manager.as_ref(),
            rng,
            setup,
            sec_ctx,
            now: Rat::zero(),
            mode: Mode::Passive,
            rt_jobs: Vec::new(),
            sec_jobs: Vec::new(),
            rt_next: vec![Rat::zero(); ts.rt_tasks.len()],
            sec_next: vec![Rat::zero(); n_pa],
            phases: [Phase::Cold, Phase::Cold],
            active_timer: None,
            script,
            script_idx: 0,
            anomalies: Vec::new(),
            pending_switch: None,
            running: None,
            events: Vec::new(),
            rt_misses: 0,
            sec_misses: 0,
            max_response: BTreeMap::new(),
            detections: Vec::new(),
            mode_intervals: vec![(Rat::zero(), Mode::Passive)],
            abandoned: 0,
        }
    }

    fn emit(&mut self, kind: EventKind, subject: &str) {
        self.events.push(SimEvent {
            time: self.now.clone(),
            kind,
            subject: subject.to_string(),
        });
    }

    fn run(&mut self) {
        loop {
            while self.fire_due() {}
            if self.now >= self.horizon {
                break;
            }
            self.pick_and_advance();
        }
    }

    fn fire_due(&mut self) -> bool {
        let mut fired = self.fire_completions();
        fired |= self.fire_deadline_misses();
        fired |= self.fire_replenish();
        fired |= self.fire_releases();
        fired |= self.fire_injections();
        fired |= self.fire_mode_switch();
        fired
    }

    fn find_rt(&self, task: usize, release: &Time) -> Option<usize> {
        self.rt_jobs
            .iter()
            .position(|j| j.task == task && j.release == *release)
    }

    fn find_sec(&self, task: usize, release: &Time) -> Option<usize> {
        self.sec_jobs
            .iter()
            .position(|j| j.task == task && j.release == *release)
    }

    fn update_response(&mut self, id: &str, release: &Time) {
        let response = &self.now - release;
        let entry = self
            .max_response
            .entry(id.to_string())
            .or_insert_with(Rat::zero);
        if response > *entry {
            *entry = response;
        }
    }

    fn fire_completions(&mut self) -> bool {
        let Some(key) = self.running.clone() else {
            return false;
        };
        match key {
            RunnerKey::Rt { task, release } => {
                let Some(i) = self.find_rt(task, &release) else {
                    self.running = None;
                    return false;
                };
                if !self.rt_jobs[i].remaining.is_zero() {
                    return false;
                }
                let job = self.rt_jobs.remove(i);
                let id = self.ts.rt_tasks[job.task].id.clone();
                self.emit(EventKind::Complete, &id);
                self.update_response(&id, &job.release);
                self.running = None;
                true
            }
            RunnerKey::Sec { task, release } => {
                let Some(i) = self.find_sec(task, &release) else {
                    self.running = None;
                    return false;
                };
                let cur = midx(self.mode);
                let capacity_zero = match &self.phases[cur] {
                    Phase::Windowed { capacity, .. } => capacity.is_zero(),
                    Phase::Cold => true,
                };
                if self.sec_jobs[i].remaining.is_zero() {
                    let job = self.sec_jobs.remove(i);
                    let id = self.sec_ctx[cur][job.task].id.clone();
                    self.emit(EventKind::Complete, &id);
                    self.update_response(&id, &job.release);
                    self.match_detections(&job);
                    self.running = None;
                    if self.sec_jobs.is_empty() {
                        if let Phase::Windowed { idle_closed, .. } = &mut self.phases[cur] {
                            *idle_closed = true;
                        }
                    } else if capacity_zero {
                        self.emit(EventKind::ServerExhaust, server_name(self.mode));
                    }
                    true
                } else if capacity_zero {
                    self.emit(EventKind::ServerExhaust, server_name(self.mode));
                    self.running = None;
                    true
                } else {
                    false
                }
            }
        }
    }

    /// A completed security job observes every pending anomaly of a class
    /// it detects, provided it began executing at or after the injection
    /// (a scan already underway cannot see fresh state).
    fn match_detections(&mut self, job: &SecJob) {
        let cur = midx(self.mode);
        let detects = self.sec_ctx[cur][job.task].detects.clone();
        let started = job.first_exec.clone().expect("completed job has started");
        let mut hits = Vec::new();
        for a in &mut self.anomalies {
            if !a.detected && started >= a.inject && detects.iter().any(|c| c == &a.class) {
                a.detected = true;
                hits.push((a.inject.clone(), a.class.clone()));
            }
        }
        for (inject, class) in hits {
            self.emit(EventKind::AnomalyDetect, &class);
            self.detections.push(DetectionSample {
                detect_time: self.now.clone(),
                latency: &self.now - &inject,
                inject_time: inject,
            });
            if self.mode == Mode::Active && self.mode_cfg.is_some() {
                self.pending_switch = Some(Mode::Passive);
            }
        }
    }

    fn fire_deadline_misses(&mut self) -> bool {
        let mut fired = false;
        let now = self.now.clone();
        for i in 0..self.rt_jobs.len() {
            if !self.rt_jobs[i].missed && self.rt_jobs[i].deadline <= now {
                self.rt_jobs[i].missed = true;
                self.rt_misses += 1;
                let id = self.ts.rt_tasks[self.rt_jobs[i].task].id.clone();
                self.emit(EventKind::DeadlineMiss, &id);
                fired = true;
            }
        }
        let cur = midx(self.mode);
        for i in 0..self.sec_jobs.len() {
            if !self.sec_jobs[i].missed && self.sec_jobs[i].deadline <= now {
                self.sec_jobs[i].missed = true;
                self.sec_misses += 1;
                let id = self.sec_ctx[cur][self.sec_jobs[i].task].id.clone();
                self.emit(EventKind::DeadlineMiss, &id);
                fired = true;
            }
        }
        fired
    }

    fn fire_replenish(&mut self) -> bool {
        let cur = midx(self.mode);
        let Some(setup) = self.setup[cur].clone() else {
            return false;
        };
        let Phase::Windowed {
            capacity,
            window_end,
            idle_closed,
            ..
        } = &self.phases[cur]
        else {
            return false;
        };
        if *window_end > self.now {
            return false;
        }
        let pending = !self.sec_jobs.is_empty();
        if pending {
            // An open window with work pending drains completely once the
            // server passes schedulability; a closed one may keep residue.
            debug_assert!(capacity.is_zero() || *idle_closed);
            self.phases[cur] = Phase::Windowed {
                capacity: setup.q.clone(),
                window_end: &self.now + &setup.p,
                idle_closed: false,
                consumed: Rat::zero(),
            };
            self.emit(EventKind::ServerReplenish, server_name(self.mode));
        } else {
            self.phases[cur] = Phase::Cold;
        }
        true
    }

    fn jitter_for(&mut self, period: &Time) -> Time {
        match (&self.policy, &mut self.rng) {
            (ReleasePolicy::JitteredSporadic { jitter, .. }, Some(rng))
                if jitter.is_positive() =>
            {
                let k = rng.gen_range(0..=1000u32);
                &(period * jitter) * &Rat::ratio(i64::from(k), 1000)
            }
            _ => Rat::zero(),
        }
    }

    fn fire_releases(&mut self) -> bool {
        if self.now >= self.horizon {
            return false;
        }
        let mut fired = false;
        for i in 0..self.rt_next.len() {
            if self.rt_next[i] != self.now {
                continue;
            }
            let (id, wcet, period, deadline) = {
                let t = &self.ts.rt_tasks[i];
                (
                    t.id.clone(),
                    t.wcet.clone(),
                    t.period.clone(),
                    t.deadline.clone(),
                )
            };
            self.rt_jobs.push(RtJob {
                task: i,
                release: self.now.clone(),
                deadline: &self.now + &deadline,
                remaining: wcet,
                missed: false,
            });
            self.emit(EventKind::Release, &id);
            let j = self.jitter_for(&period);
            self.rt_next[i] = &(&self.now + &period) + &j;
            fired = true;
        }
        let cur = midx(self.mode);
        for i in 0..self.sec_next.len() {
            if self.sec_next[i] != self.now {
                continue;
            }
            let (id, wcet, period) = {
                let c = &self.sec_ctx[cur][i];
                (c.id.clone(), c.wcet.clone(), c.period.clone())
            };
            self.sec_jobs.push(SecJob {
                task: i,
                release: self.now.clone(),
                deadline: &self.now + &period,
                remaining: wcet,
                missed: false,
                first_exec: None,
            });
            self.emit(EventKind::Release, &id);
            let j = self.jitter_for(&period);
            self.sec_next[i] = &(&self.now + &period) + &j;
            self.open_server_window();
            fired = true;
        }
        fired
    }

    /// A security arrival wakes a cold server (a stale window counts as
    /// cold). Arrivals inside a live window never reset it.
    fn open_server_window(&mut self) {
        let cur = midx(self.mode);
        let Some(setup) = self.setup[cur].clone() else {
            return;
        };
        if let Phase::Windowed { window_end, .. } = &self.phases[cur] {
            if *window_end <= self.now {
                self.phases[cur] = Phase::Cold;
            }
        }
        if self.phases[cur] == Phase::Cold {
            self.phases[cur] = Phase::Windowed {
                capacity: setup.q.clone(),
                window_end: &self.now + &setup.p,
                idle_closed: false,
                consumed: Rat::zero(),
            };
        }
    }

    fn fire_injections(&mut self) -> bool {
        let mut fired = false;
        while self.script_idx < self.script.len()
            && self.script[self.script_idx].time <= self.now
        {
            let inj = self.script[self.script_idx].clone();
            self.script_idx += 1;
            self.emit(EventKind::AnomalyInject, &inj.class);
            self.anomalies.push(PendingAnomaly {
                inject: inj.time.clone(),
                class: inj.class.clone(),
                detected: false,
            });
            if let Some(mm) = self.mode_cfg {
                if mm.directive(&inj.class) == SwitchDirective::Activate {
                    match self.mode {
                        Mode::Passive => self.pending_switch = Some(Mode::Active),
                        // A fresh suspicion extends the hunt.
                        Mode::Active => {
                            self.active_timer = Some(&self.now + &mm.active_timeout);
                        }
                    }
                }
            }
            fired = true;
        }
        fired
    }

    fn fire_mode_switch(&mut self) -> bool {
        if self.mode == Mode::Active
            && self.pending_switch.is_none()
            && matches!(&self.active_timer, Some(t) if *t <= self.now)
        {
            self.pending_switch = Some(Mode::Passive);
            self.active_timer = None;
        }
        let Some(target) = self.pending_switch.take() else {
            return false;
        };
        if target == self.mode {
            return false;
        }
        let cur = midx(self.mode);
        self.abandoned += self.sec_jobs.len();
        self.sec_jobs.clear();
        if matches!(self.running, Some(RunnerKey::Sec { .. })) {
            self.running = None;
        }
        if let Phase::Windowed { idle_closed, .. } = &mut self.phases[cur] {
            *idle_closed = true;
        }
        self.mode = target;
        self.emit(EventKind::ModeSwitch, &target.to_string());
        let ncur = midx(target);
        if let Phase::Windowed { window_end, .. } = &self.phases[ncur] {
            if *window_end <= self.now {
                self.phases[ncur] = Phase::Cold;
            }
        }
        // Incoming tasks restart their sporadic pattern at the switch.
        self.sec_next = vec![self.now.clone(); self.sec_ctx[ncur].len()];
        self.active_timer = match target {
            Mode::Active => {
                let mm = self.mode_cfg.expect("switching requires a mode manager");
                Some(&self.now + &mm.active_timeout)
            }
            Mode::Passive => None,
        };
        self.mode_intervals.push((self.now.clone(), target));
        true
    }

    /// Highest-priority eligible entity: RT jobs by RM index, the server
    /// wedged at its level (beating RT tasks at indices >= level), and
    /// within the server the RM-first pending security job.
    fn pick(&self) -> Option<RunnerKey> {
        let rt_best = self
            .rt_jobs
            .iter()
            .filter(|j| j.remaining.is_positive())
            .min_by(|a, b| {
                a.task
                    .cmp(&b.task)
                    .then_with(|| a.release.cmp(&b.release))
            })
            .map(|j| {
                (
                    j.task,
                    RunnerKey::Rt {
                        task: j.task,
                        release: j.release.clone(),
                    },
                )
            });
        let sec_best = self.eligible_server_head();
        match (rt_best, sec_best) {
            (None, None) => None,
            (Some((_, k)), None) => Some(k),
            (None, Some((_, k))) => Some(k),
            (Some((rt_task, rk)), Some((level, sk))) => {
                if rt_task < level {
                    Some(rk)
                } else {
                    Some(sk)
                }
            }
        }
    }

    fn eligible_server_head(&self) -> Option<(usize, RunnerKey)> {
        let cur = midx(self.mode);
        let setup = self.setup[cur].as_ref()?;
        let Phase::Windowed {
            capacity,
            idle_closed: false,
            ..
        } = &self.phases[cur]
        else {
            return None;
        };
        if !capacity.is_positive() {
            return None;
        }
        let ctx = &self.sec_ctx[cur];
        let head = self
            .sec_jobs
            .iter()
            .filter(|j| j.remaining.is_positive())
            .min_by(|a, b| {
                ctx[a.task]
                    .rm_rank
                    .cmp(&ctx[b.task].rm_rank)
                    .then_with(|| a.release.cmp(&b.release))
            })?;
        Some((
            setup.level,
            RunnerKey::Sec {
                task: head.task,
                release: head.release.clone(),
            },
        ))
    }

    fn runner_subject(&self, key: &RunnerKey) -> String {
        match key {
            RunnerKey::Rt { task, .. } => self.ts.rt_tasks[*task].id.clone(),
            RunnerKey::Sec { task, .. } => self.sec_ctx[midx(self.mode)][*task].id.clone(),
        }
    }

    fn runner_alive(&self, key: &RunnerKey) -> bool {
        match key {
            RunnerKey::Rt { task, release } => self
                .find_rt(*task, release)
                .map(|i| self.rt_jobs[i].remaining.is_positive())
                .unwrap_or(false),
            RunnerKey::Sec { task, release } => self
                .find_sec(*task, release)
                .map(|i| self.sec_jobs[i].remaining.is_positive())
                .unwrap_or(false),
        }
    }

    fn pick_and_advance(&mut self) {
        let picked = self.pick();
        if picked != self.running {
            if let Some(old) = self.running.clone() {
                if self.runner_alive(&old) {
                    let subject = self.runner_subject(&old);
                    self.emit(EventKind::Preempt, &subject);
                }
            }
            if let Some(new) = &picked {
                let subject = self.runner_subject(new);
                self.emit(EventKind::Start, &subject);
                if let RunnerKey::Sec { task, release } = new {
                    let i = self.find_sec(*task, release).expect("picked job exists");
                    if self.sec_jobs[i].first_exec.is_none() {
                        self.sec_jobs[i].first_exec = Some(self.now.clone());
                    }
                }
            }
            self.running = picked.clone();
        }
        let until = self.next_boundary(&picked);
        let dt = &until - &self.now;
        debug_assert!(dt.is_positive(), "no progress at {}", self.now);
        if let Some(key) = &picked {
            self.deplete(key, &dt);
        }
        self.now = until;
    }

    fn deplete(&mut self, key: &RunnerKey, dt: &Time) {
        match key {
            RunnerKey::Rt { task, release } => {
                let i = self.find_rt(*task, release).expect("running job exists");
                self.rt_jobs[i].remaining -= dt;
            }
            RunnerKey::Sec { task, release } => {
                let i = self.find_sec(*task, release).expect("running job exists");
                self.sec_jobs[i].remaining -= dt;
                let cur = midx(self.mode);
                let q = self.setup[cur].as_ref().map(|s| s.q.clone());
                if let Phase::Windowed {
                    capacity, consumed, ..
                } = &mut self.phases[cur]
                {
                    *capacity -= dt;
                    *consumed += dt;
                    debug_assert!(!capacity.is_negative());
                    debug_assert!(q.map(|q| *consumed <= q).unwrap_or(false));
                }
            }
        }
    }

    fn next_boundary(&self, picked: &Option<RunnerKey>) -> Time {
        let mut next = self.horizon.clone();
        let mut consider = |cand: &Time| {
            if *cand > self.now && *cand < next {
                next = cand.clone();
            }
        };
        match picked {
            Some(RunnerKey::Rt { task, release }) => {
                let i = self.find_rt(*task, release).expect("picked job exists");
                consider(&(&self.now + &self.rt_jobs[i].remaining));
            }
            Some(RunnerKey::Sec { task, release }) => {
                let i = self.find_sec(*task, release).expect("picked job exists");
                let mut span = self.sec_jobs[i].remaining.clone();
                if let Phase::Windowed { capacity, .. } = &self.phases[midx(self.mode)] {
                    span = span.min(capacity.clone());
                }
                consider(&(&self.now + &span));
            }
            None => {}
        }
        for t in &self.rt_next {
            if *t < self.horizon {
                consider(t);
            }
        }
        for t in &self.sec_next {
            if *t < self.horizon {
                consider(t);
            }
        }
        for j in &self.rt_jobs {
            if !j.missed {
                consider(&j.deadline);
            }
        }
        for j in &self.sec_jobs {
            if !j.missed {
                consider(&j.deadline);
            }
        }
        if !self.sec_jobs.is_empty() {
            if let Phase::Windowed { window_end, .. } = &self.phases[midx(self.mode)] {
                consider(window_end);
            }
        }
        if let Some(t) = &self.active_timer {
            consider(t);
        }
        if self.script_idx < self.script.len() {
            consider(&self.script[self.script_idx].time);
        }
        next
    }

    fn finish(self) -> SimTrace {
        let undetected = self.anomalies.iter().filter(|a| !a.detected).count();
        SimTrace {
            events: self.events,
            summary: SimSummary {
                rt_deadline_misses: self.rt_misses,
                security_deadline_misses: self.sec_misses,
                max_response: self.max_response,
                detections: self.detections,
                undetected_anomalies: undetected,
                mode_intervals: self.mode_intervals,
                abandoned_security_jobs: self.abandoned,
            },
        }
    }
}

fn build_sec_ctx(tasks: &[SecurityTask], periods: &BTreeMap<String, Time>) -> Vec<SecCtx> {
    let mut order: Vec<usize> = (0..tasks.len()).collect();
    let period_of = |i: usize| {
        periods
            .get(&tasks[i].id)
            .cloned()
            .unwrap_or_else(|| tasks[i].desired_period.clone())
    };
    order.sort_by(|&a, &b| {
        period_of(a)
            .cmp(&period_of(b))
            .then_with(|| tasks[a].id.cmp(&tasks[b].id))
    });
    let mut rank = vec![0usize; tasks.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    tasks
        .iter()
        .enumerate()
        .map(|(i, t)| SecCtx {
            id: t.id.clone(),
            wcet: t.wcet.clone(),
            period: period_of(i),
            rm_rank: rank[i],
            detects: t.detects.clone(),
        })
        .collect()
}

// ---------------------------------------------------------------------
// Validation.

fn validate_solution(ts: &TaskSet, sol: &ContegoSolution) -> Result<(), String> {
    if !is_rt_schedulable(ts).schedulable {
        return Err("rt tasks unschedulable on their own".into());
    }
    let m = ts.rt_tasks.len();
    if sol.passive_server.mode != Mode::Passive || sol.passive_server.level != m {
        return Err("passive server must sit below every rt task".into());
    }
    if sol.active_server.mode != Mode::Active
        || sol.active_server.level < ts.min_active_level
        || sol.active_server.level > m
    {
        return Err("active server level out of range".into());
    }
    if sol.active_level != sol.active_server.level {
        return Err("stated active level disagrees with the server".into());
    }
    for (name, server) in [
        ("passive", &sol.passive_server),
        ("active", &sol.active_server),
    ] {
        if !server.capacity.is_positive() || server.capacity > server.replenish_period {
            return Err(format!("{name} server budget outside (0, P]"));
        }
        if !check_server_schedulable(
            &server.capacity,
            &server.replenish_period,
            &ts.rt_tasks[..server.level],
        ) {
            return Err(format!("{name} server overloaded by rt interference"));
        }
    }
    for (j, task) in ts.rt_tasks.iter().enumerate().skip(sol.active_server.level) {
        if !check_lp_rt(
            &sol.active_server.capacity,
            &sol.active_server.replenish_period,
            task,
            &ts.rt_tasks[..j],
        ) {
            return Err(format!(
                "rt task {} unprotected below the active server",
                task.id
            ));
        }
    }
    for (mode, periods) in [
        (Mode::Passive, &sol.passive_periods),
        (Mode::Active, &sol.active_periods),
    ] {
        let tasks = ts.security(mode);
        if periods.len() != tasks.len() {
            return Err(format!("{mode} period map does not cover the task list"));
        }
        for t in tasks {
            let Some(period) = periods.get(&t.id) else {
                return Err(format!("{mode} period map misses task {}", t.id));
            };
            if *period < t.desired_period || *period > t.max_period {
                return Err(format!(
                    "{mode} period for {} outside [desired, max]",
                    t.id
                ));
            }
        }
    }
    Ok(())
}

fn validate_run(
    ts: &TaskSet,
    sol: Option<&ContegoSolution>,
    cfg: &SimConfig,
) -> Result<(), SimError> {
    if !cfg.horizon.is_positive() {
        return Err(SimError::NonPositiveHorizon);
    }
    let violations = validate_task_set(ts);
    if !violations.is_empty() {
        return Err(SimError::InvalidTaskSet(violations));
    }
    if let Some(mm) = &cfg.mode_manager {
        if !mm.active_timeout.is_positive() {
            return Err(SimError::InvalidConfig(
                "active timeout must be positive".into(),
            ));
        }
    }
    if let ReleasePolicy::JitteredSporadic { jitter, .. } = &cfg.release_policy {
        if jitter.is_negative() {
            return Err(SimError::InvalidConfig("jitter must be nonnegative".into()));
        }
    }
    for inj in &cfg.anomaly_script {
        if inj.time.is_negative() {
            return Err(SimError::InvalidConfig(
                "anomaly times must be nonnegative".into(),
            ));
        }
    }
    if let Some(sol) = sol {
        validate_solution(ts, sol).map_err(SimError::InvalidSolution)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------
// Public operations.

/// Run the schedule over `cfg.horizon`. Without a solution only the RT
/// tasks run (no server, no security work); without a mode manager the
/// system stays PASSIVE. Supply shortfalls surface as security deadline
/// misses in the summary, never as errors.
pub fn simulate(
    ts: &TaskSet,
    sol: Option<&ContegoSolution>,
    cfg: &SimConfig,
) -> Result<SimTrace, SimError> {
    validate_run(ts, sol, cfg)?;
    let mut engine = Engine::new(ts, sol, cfg);
    engine.run();
    Ok(engine.finish())
}

/// Least common multiple of the given rational periods, as (value, ticks
/// of the implied common grid).
fn rational_lcm(values: &[Time]) -> (Time, BigInt) {
    let mut denom = BigInt::one();
    for v in values {
        denom = lcm_big(&denom, v.denom());
    }
    let mut ticks = BigInt::one();
    for v in values {
        let scaled = v.numer() * (&denom / v.denom());
        ticks = lcm_big(&ticks, &scaled);
    }
    (Rat::from_big(ticks.clone(), denom), ticks)
}

/// Synchronous-release simulation over one hyperperiod, reporting every
/// deadline miss. The hyperperiod covers the RT periods plus, when a
/// solution is given, the passive periods and server cycle.
pub fn hyperperiod_check(
    ts: &TaskSet,
    sol: Option<&ContegoSolution>,
) -> Result<Vec<SimEvent>, SimError> {
    let mut periods: Vec<Time> = ts.rt_tasks.iter().map(|t| t.period.clone()).collect();
    if let Some(sol) = sol {
        periods.extend(sol.passive_periods.values().cloned());
        periods.push(sol.passive_server.replenish_period.clone());
    }
    if periods.is_empty() {
        return Ok(Vec::new());
    }
    let (hyperperiod, ticks) = rational_lcm(&periods);
    if ticks > BigInt::from(HYPERPERIOD_TICK_CAP) {
        return Err(SimError::HyperperiodOverCap {
            ticks: ticks.to_string(),
            cap: HYPERPERIOD_TICK_CAP,
        });
    }
    let trace = simulate(ts, sol, &SimConfig::plain(hyperperiod))?;
    Ok(trace.misses().cloned().collect())
}

fn mix_seed(seed: u64, run: u64) -> u64 {
    let mut z = seed ^ run.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Paired seeded runs measuring detection latency with and without mode
/// switching. Each run injects one anomaly at a random millitick in the
/// first half of the horizon, with a class both modes can detect; pairs
/// where either arm misses are dropped and counted.
pub fn detection_experiment(
    ts: &TaskSet,
    sol: &ContegoSolution,
    runs: usize,
    seed: u64,
    mode_cfg: &ModeManagerConfig,
    horizon: &Time,
) -> Result<DetectionStudy, SimError> {
    let classes_of = |tasks: &[SecurityTask]| {
        tasks
            .iter()
            .flat_map(|t| t.detects.iter().cloned())
            .collect::<std::collections::BTreeSet<_>>()
    };
    if !horizon.is_positive() {
        return Err(SimError::NonPositiveHorizon);
    }
    let passive_classes = classes_of(ts.security(Mode::Passive));
    let active_classes = classes_of(ts.security(Mode::Active));
    let pool: Vec<String> = passive_classes
        .intersection(&active_classes)
        .cloned()
        .collect();
    if pool.is_empty() && runs > 0 {
        return Err(SimError::InvalidConfig(
            "no anomaly class is detectable in both modes".into(),
        ));
    }

    let max_tick_rat = (&(horizon / &Rat::from_int(2)) * &Rat::from_int(1000)).floor();
    let max_tick = max_tick_rat
        .numer()
        .try_into()
        .map_err(|_| SimError::InvalidConfig("horizon too large for tick grid".into()))?;
    let max_tick: u64 = max_tick;

    let mut study = DetectionStudy {
        switching: Vec::new(),
        passive_only: Vec::new(),
        undetected_switching: 0,
        undetected_passive: 0,
        dropped_pairs: 0,
    };
    for run in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, run as u64));
        let tick = rng.gen_range(0..=max_tick);
        let class = pool[rng.gen_range(0..pool.len())].clone();
        let inject = Rat::ratio(tick as i64, 1000);
        let script = vec![AnomalyInjection {
            time: inject.clone(),
            class,
        }];
        let passive_cfg = SimConfig {
            horizon: horizon.clone(),
            release_policy: ReleasePolicy::Synchronous,
            anomaly_script: script.clone(),
            mode_manager: None,
        };
        let mut switch_cfg = passive_cfg.clone();
        switch_cfg.mode_manager = Some(mode_cfg.clone());

        let passive_trace = simulate(ts, Some(sol), &passive_cfg)?;
        let switch_trace = simulate(ts, Some(sol), &switch_cfg)?;
        let sample_in = |trace: &SimTrace| {
            trace
                .summary
                .detections
                .iter()
                .find(|s| s.inject_time == inject)
                .cloned()
        };
        match (sample_in(&switch_trace), sample_in(&passive_trace)) {
            (Some(s), Some(p)) => {
                study.switching.push(s);
                study.passive_only.push(p);
            }
            (s, p) => {
                if s.is_none() {
                    study.undetected_switching += 1;
                }
                if p.is_none() {
                    study.undetected_passive += 1;
                }
                study.dropped_pairs += 1;
            }
        }
    }
    Ok(study)
}

/// Right-continuous empirical distribution: for each distinct sample v,
/// the fraction of samples ≤ v. The last point always has probability 1.
pub fn empirical_cdf(samples: &[Time]) -> Result<Vec<(Time, Rat)>, SimError> {
    if samples.is_empty() {
        return Err(SimError::EmptySamples);
    }
    let mut sorted = samples.to_vec();
    sorted.sort();
    let n = Rat::from_int(sorted.len() as i64);
    let mut out: Vec<(Time, Rat)> = Vec::new();
    for (i, v) in sorted.iter().enumerate() {
        let prob = &Rat::from_int(i as i64 + 1) / &n;
        match out.last_mut() {
            Some((last, p)) if last == v => *p = prob,
            _ => out.push((v.clone(), prob)),
        }
    }
    Ok(out)
}
