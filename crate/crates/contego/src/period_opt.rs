//! Monitoring-period adaptation: choose each security task's period within
//! [desired, max] to maximize cumulative weighted tightness
//! Σ ωᵢ·Tᵢ^des/Tᵢ under a utilization budget and a uniform floor period.
//!
//! The substitution x = 1/T makes both the objective Σ ωᵢTᵢ^des·xᵢ and the
//! constraint Σ Cᵢxᵢ ≤ budget linear, so the problem is a continuous
//! knapsack: start every x at its lower bound, spend the remaining budget
//! on tasks in descending ωᵢTᵢ^des/Cᵢ order (the marginal task gets a
//! fractional raise). That greedy solution is exactly optimal.
//!
//! Two budget providers are included: the classical Liu & Layland bound
//! residual left by the RT tasks, and the utilization bound of a budgeted
//! server (capacity Q, replenishment period P), which degenerates to the
//! Liu & Layland bound at Q = P.

use crate::model::{Mode, SecurityTask, TaskSet};
use crate::time::{Rat, Time};
use std::collections::BTreeMap;
use thiserror::Error;

/// One period-adaptation instance.
#[derive(Debug, Clone)]
pub struct PeriodProblem {
    pub tasks: Vec<SecurityTask>,
    /// Right-hand side of Σ Cᵢ/Tᵢ ≤ budget.
    pub utilization_budget: Rat,
    /// Uniform lower bound on every period beyond its own desired value
    /// (max RT period for the RM baseline, 3P − 2Q for the server form).
    pub floor_period: Time,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeriodSolution {
    pub periods: BTreeMap<String, Time>,
    /// Achieved Σ ωᵢ·Tᵢ^des/Tᵢ.
    pub eta: Rat,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum InfeasiblePeriod {
    #[error("floor period {floor} exceeds max period of task {id}")]
    FloorExceedsMax { id: String, floor: Time },
    #[error("utilization budget {budget} is not positive")]
    NonPositiveBudget { budget: Rat },
    #[error("even maximal periods need utilization {required}, over budget {budget}")]
    BudgetTooSmall { required: Rat, budget: Rat },
}

/// Exact optimum of the period-adaptation problem, or why none exists.
pub fn adapt_periods(problem: &PeriodProblem) -> Result<PeriodSolution, InfeasiblePeriod> {
    if problem.tasks.is_empty() {
        return Ok(PeriodSolution {
            periods: BTreeMap::new(),
            eta: Rat::zero(),
        });
    }

    struct Var<'a> {
        task: &'a SecurityTask,
        x_lo: Rat,
        x_hi: Rat,
    }

    let mut vars = Vec::with_capacity(problem.tasks.len());
    for task in &problem.tasks {
        if problem.floor_period > task.max_period {
            return Err(InfeasiblePeriod::FloorExceedsMax {
                id: task.id.clone(),
                floor: problem.floor_period.clone(),
            });
        }
        let shortest = task.desired_period.clone().max(problem.floor_period.clone());
        vars.push(Var {
            task,
            x_lo: task.max_period.recip(),
            x_hi: shortest.recip(),
        });
    }

    let budget = &problem.utilization_budget;
    if !budget.is_positive() {
        return Err(InfeasiblePeriod::NonPositiveBudget {
            budget: budget.clone(),
        });
    }
    let mandatory: Rat = vars.iter().map(|v| &v.task.wcet * &v.x_lo).sum();
    if mandatory > *budget {
        return Err(InfeasiblePeriod::BudgetTooSmall {
            required: mandatory,
            budget: budget.clone(),
        });
    }

    // Descending marginal objective gain per unit of budget, ωT^des/C;
    // ties by ascending id for determinism.
    vars.sort_by(|a, b| {
        let ra = &(&a.task.weight * &a.task.desired_period) / &a.task.wcet;
        let rb = &(&b.task.weight * &b.task.desired_period) / &b.task.wcet;
        rb.cmp(&ra).then_with(|| a.task.id.cmp(&b.task.id))
    });

    let mut remaining = budget - &mandatory;
    let mut periods = BTreeMap::new();
    let mut eta = Rat::zero();
    for v in &vars {
        let full_cost = &v.task.wcet * &(&v.x_hi - &v.x_lo);
        let x = if remaining >= full_cost {
            remaining -= full_cost;
            v.x_hi.clone()
        } else {
            let x = &v.x_lo + &(&remaining / &v.task.wcet);
            remaining = Rat::zero();
            x
        };
        eta += &(&v.task.weight * &v.task.desired_period) * &x;
        periods.insert(v.task.id.clone(), x.recip());
    }

    Ok(PeriodSolution { periods, eta })
}

/// Largest total utilization a set of n rate-monotonic tasks served by a
/// budgeted server (capacity Q, replenishment period P) can always
/// sustain: n·[((3 − Q/P)/(3 − 2Q/P))^{1/n} − 1]. At Q = P this is the
/// Liu & Layland bound n(2^{1/n} − 1).
pub fn server_util_bound(n: usize, q: &Time, p: &Time) -> f64 {
    assert!(n >= 1, "bound needs at least one task");
    let ratio = bound_base(q, p);
    n as f64 * (ratio.to_f64().powf(1.0 / n as f64) - 1.0)
}

/// Utilization left for n extra tasks under the Liu & Layland bound once
/// the existing tasks' utilization is subtracted:
/// (m + n)(2^{1/(m+n)} − 1) − rt_util. May be ≤ 0.
pub fn rm_residual_bound(m: usize, n: usize, rt_util: f64) -> f64 {
    let k = m + n;
    if k == 0 {
        return -rt_util;
    }
    k as f64 * ((2.0f64).powf(1.0 / k as f64) - 1.0) - rt_util
}

/// (3 − Q/P)/(3 − 2Q/P), the base of the server utilization bound.
fn bound_base(q: &Time, p: &Time) -> Rat {
    assert!(q.is_positive() && q <= p, "need 0 < Q <= P");
    let three = Rat::from_int(3);
    let ratio = q / p;
    &(&three - &ratio) / &(&three - &(&ratio + &ratio))
}

/// Bisection steps for the rational root floors; 2⁻⁴⁸ per-root error
/// keeps the budget within ~3e-13 of exact for n ≤ 64.
const ROOT_BITS: u32 = 48;

/// Largest y on the 2^-bits grid with yⁿ ≤ x. Requires x ≥ 0.
fn nth_root_floor(x: &Rat, n: u32, bits: u32) -> Rat {
    assert!(!x.is_negative());
    if n == 1 || x.is_zero() {
        return x.clone();
    }
    let mut lo = Rat::zero();
    let mut hi = x.clone().max(Rat::one());
    for _ in 0..bits {
        let mid = &(&lo + &hi) / &Rat::from_int(2);
        if mid.pow(n) <= *x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Rational lower bound on server_util_bound: sound to admit against
/// (never exceeds the true bound), within n·2⁻⁴⁸ of it.
pub fn server_util_bound_floor(n: usize, q: &Time, p: &Time) -> Rat {
    assert!(n >= 1);
    let root = nth_root_floor(&bound_base(q, p), n as u32, ROOT_BITS);
    Rat::from_int(n as i64) * (root - Rat::one())
}

/// Rational lower bound on rm_residual_bound, same guarantees.
pub fn rm_residual_bound_floor(m: usize, n: usize, rt_util: &Rat) -> Rat {
    let k = m + n;
    if k == 0 {
        return -rt_util.clone();
    }
    let root = nth_root_floor(&Rat::from_int(2), k as u32, ROOT_BITS);
    Rat::from_int(k as i64) * (root - Rat::one()) - rt_util.clone()
}

/// Which RT tasks count toward the Liu & Layland term when the server
/// runs above some of them. `AllRtTasks` charges the whole RT set;
/// `AboveLevelOnly` charges only tasks with priority above the server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BaselineTaskCount {
    #[default]
    AllRtTasks,
    AboveLevelOnly,
}

/// Period adaptation against the raw RM bound (no server): budget is the
/// Liu & Layland residual, floor is the largest period among the RT tasks
/// the security tasks must stay below (all of them in passive mode, those
/// above `level` in active mode).
pub fn adapt_periods_rm_baseline(
    ts: &TaskSet,
    mode: Mode,
    level: usize,
    counting: BaselineTaskCount,
) -> Result<PeriodSolution, InfeasiblePeriod> {
    let tasks = ts.security(mode);
    if tasks.is_empty() {
        return Ok(PeriodSolution {
            periods: BTreeMap::new(),
            eta: Rat::zero(),
        });
    }
    let above = match mode {
        Mode::Passive => &ts.rt_tasks[..],
        Mode::Active => &ts.rt_tasks[..level.min(ts.rt_tasks.len())],
    };
    let counted = match (mode, counting) {
        (Mode::Passive, _) | (_, BaselineTaskCount::AllRtTasks) => &ts.rt_tasks[..],
        (Mode::Active, BaselineTaskCount::AboveLevelOnly) => above,
    };
    let rt_util: Rat = counted.iter().map(|t| t.utilization()).sum();
    let budget = rm_residual_bound_floor(counted.len(), tasks.len(), &rt_util);
    if !budget.is_positive() {
        return Err(InfeasiblePeriod::NonPositiveBudget { budget });
    }
    let floor_period = above
        .iter()
        .map(|t| t.period.clone())
        .max()
        .unwrap_or_else(Rat::zero);
    adapt_periods(&PeriodProblem {
        tasks: tasks.to_vec(),
        utilization_budget: budget,
        floor_period,
    })
}
