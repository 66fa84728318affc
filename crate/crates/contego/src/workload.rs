//! Seeded synthetic task-set generation for experiment campaigns.
//!
//! RT utilizations come from unbiased simplex sampling (UUniFast) at a
//! target sum; periods are drawn from a divisor-rich menu so hyperperiods
//! stay simulable; execution times are the products rounded to the
//! millitick grid. Security tasks get the same treatment against a
//! budget derived from the security share of total utilization, plus a
//! desired-to-maximum period stretch of 2x to 5x and a criticality
//! weight in {1,2,3}. Identical passive and active lists keep the two
//! modes comparable. Everything is a pure function of the seed.

use crate::model::{
    assign_rm_priorities, validate_task_set, RealTimeTask, SecurityTask, TaskSet,
};
use crate::time::Rat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Periods with small pairwise LCMs: any subset's hyperperiod divides 400.
pub const DEFAULT_PERIOD_MENU: [i64; 11] = [4, 5, 8, 10, 16, 20, 25, 40, 50, 80, 100];

/// Attempts before a spec is declared ungeneratable. Redraws are rare
/// (an execution time rounding to zero), so exhausting this means the
/// spec itself is hopeless, not the luck.
pub const RETRY_CAP: u32 = 64;

/// Grid for generated execution times and period stretches.
const TICK: i64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub n_rt: usize,
    pub n_sec: usize,
    /// Total RT utilization; with n_rt = 0 this is the security budget.
    pub rt_util_target: f64,
    /// Security share of total utilization (0.5: equal budgets).
    pub sec_util_fraction: f64,
    pub period_menu: Vec<i64>,
    pub seed: u64,
}

impl GenSpec {
    pub fn new(n_rt: usize, n_sec: usize, rt_util_target: f64, seed: u64) -> GenSpec {
        GenSpec {
            n_rt,
            n_sec,
            rt_util_target,
            sec_util_fraction: 0.5,
            period_menu: DEFAULT_PERIOD_MENU.to_vec(),
            seed,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GenError {
    #[error("unusable generator spec: {0}")]
    BadSpec(String),
    #[error("gave up after {attempts} attempts: {last_problem}")]
    RetriesExhausted { attempts: u32, last_problem: String },
}

/// Unbiased point on the simplex Σ u_i = target, u_i ≥ 0 (UUniFast).
pub fn uunifast(rng: &mut impl Rng, n: usize, target: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let mut sum = target;
    for i in 1..n {
        let next = sum * rng.gen::<f64>().powf(1.0 / (n - i) as f64);
        out.push(sum - next);
        sum = next;
    }
    out.push(sum);
    out
}

fn round_to_tick(x: f64) -> Rat {
    Rat::ratio((x * TICK as f64).round() as i64, TICK)
}

fn check_spec(spec: &GenSpec) -> Result<(), GenError> {
    let bad = |msg: &str| Err(GenError::BadSpec(msg.to_string()));
    if spec.n_rt == 0 && spec.n_sec == 0 {
        return bad("nothing to generate");
    }
    if !(spec.rt_util_target > 0.0 && spec.rt_util_target < 1.0) {
        return bad("utilization target must lie in (0, 1)");
    }
    if !(spec.sec_util_fraction > 0.0 && spec.sec_util_fraction <= 1.0) {
        return bad("security fraction must lie in (0, 1]");
    }
    if spec.sec_util_fraction == 1.0 && spec.n_rt > 0 {
        return bad("security cannot take the whole budget while rt tasks exist");
    }
    if spec.n_sec == 0 && spec.sec_util_fraction == 1.0 {
        return bad("security fraction 1 needs security tasks");
    }
    if spec.period_menu.is_empty() {
        return bad("empty period menu");
    }
    if spec.period_menu.iter().any(|p| *p <= 0) {
        return bad("periods must be positive");
    }
    Ok(())
}

/// Security budget implied by a `GenSpec`: the fraction is of the total, so
/// sec = rt · f/(1−f); with no RT tasks the target itself is the budget.
fn security_budget(spec: &GenSpec) -> f64 {
    if spec.n_rt == 0 {
        spec.rt_util_target
    } else {
        spec.rt_util_target * spec.sec_util_fraction / (1.0 - spec.sec_util_fraction)
    }
}

fn try_generate(spec: &GenSpec, rng: &mut ChaCha8Rng) -> Result<TaskSet, String> {
    let pick_period = |rng: &mut ChaCha8Rng| {
        Rat::from_int(spec.period_menu[rng.gen_range(0..spec.period_menu.len())])
    };

    let rt_utils = uunifast(rng, spec.n_rt, spec.rt_util_target);
    let mut rt_tasks = Vec::with_capacity(spec.n_rt);
    for (j, u) in rt_utils.iter().enumerate() {
        let period = pick_period(rng);
        let wcet = round_to_tick(u * period.to_f64());
        if !wcet.is_positive() {
            return Err(format!("rt execution time for u={u:.6} rounds to zero"));
        }
        rt_tasks.push(RealTimeTask::new(&format!("rt{}", j + 1), wcet, period));
    }

    let sec_utils = uunifast(rng, spec.n_sec, security_budget(spec));
    let mut security = Vec::with_capacity(spec.n_sec);
    for (i, u) in sec_utils.iter().enumerate() {
        let desired = pick_period(rng);
        let wcet = round_to_tick(u * desired.to_f64());
        if !wcet.is_positive() {
            return Err(format!("security execution time for u={u:.6} rounds to zero"));
        }
        if wcet > desired {
            return Err(format!("security task {} overflows its period", i + 1));
        }
        let stretch = Rat::ratio(2 * TICK + rng.gen_range(0..=3 * TICK), TICK);
        let weight = Rat::from_int(rng.gen_range(1..=3));
        security.push(
            SecurityTask::new(
                &format!("sec{}", i + 1),
                wcet,
                desired.clone(),
                &desired * &stretch,
            )
            .with_weight(weight)
            .with_detects(&[&format!("cls{}", i + 1)]),
        );
    }

    let m = rt_tasks.len();
    let ts = TaskSet {
        rt_tasks: if m == 0 {
            rt_tasks
        } else {
            assign_rm_priorities(rt_tasks).map_err(|e| e.to_string())?
        },
        passive_security: security.clone(),
        active_security: security,
        min_active_level: if m == 0 { 0 } else { 1.max(m.div_ceil(2)) },
    };
    let violations = validate_task_set(&ts);
    if violations.is_empty() {
        Ok(ts)
    } else {
        Err(format!(
            "generated set fails validation: {}",
            violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ")
        ))
    }
}

/// Deterministic under the seed: redraws continue the same stream.
pub fn generate(spec: &GenSpec) -> Result<TaskSet, GenError> {
    check_spec(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut last_problem = String::new();
    for _ in 0..RETRY_CAP {
        match try_generate(spec, &mut rng) {
            Ok(ts) => return Ok(ts),
            Err(problem) => last_problem = problem,
        }
    }
    Err(GenError::RetriesExhausted {
        attempts: RETRY_CAP,
        last_problem,
    })
}
