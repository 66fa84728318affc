//! Shared brute-force oracles and helpers for the integration suites.
//!
//! The oracles recompute feasibility straight from the closed-form
//! constraints with exact rationals and search by exhaustive grid
//! enumeration, independently of the library's solvers.

// Each integration target compiles this module separately and uses a
// different subset of it.
#![allow(dead_code)]

use contego::time::{ceil_div, Rat, Time};
use contego::{RealTimeTask, SecurityTask};

pub fn t(s: &str) -> Time {
    s.parse().unwrap()
}

pub fn rt(id: &str, c: &str, p: &str) -> RealTimeTask {
    RealTimeTask::new(id, t(c), t(p))
}

pub fn sec(id: &str, c: &str, des: &str, max: &str) -> SecurityTask {
    SecurityTask::new(id, t(c), t(des), t(max))
}

/// splitmix-style stream for deterministic test seeds.
pub fn mix(seed: u64, k: u64) -> u64 {
    let mut z = seed.wrapping_add(k.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Inclusive rational lattice lo, lo+step, ..., plus hi itself.
pub fn lattice(lo: &Rat, hi: &Rat, step: &Rat) -> Vec<Rat> {
    let mut out = Vec::new();
    let mut x = lo.clone();
    while x <= *hi {
        out.push(x.clone());
        x = &x + step;
    }
    if out.last() != Some(hi) && lo <= hi {
        out.push(hi.clone());
    }
    out
}

// ---------------------------------------------------------------------
// Period-adaptation oracle.

pub struct PeriodInstance {
    /// (weight, wcet, desired, max) per security task.
    pub tasks: Vec<(Rat, Rat, Rat, Rat)>,
    pub budget: Rat,
    pub floor: Rat,
}

/// Exhaustive search over the period lattice: best Σ ω·T_des/T subject
/// to Σ C/T ≤ budget and T ∈ [max(T_des, floor), T_max].
pub fn grid_best_eta(inst: &PeriodInstance, step: &Rat) -> Option<(Vec<Rat>, Rat)> {
    let axes: Vec<Vec<Rat>> = inst
        .tasks
        .iter()
        .map(|(_, _, des, max)| {
            let lo = des.clone().max(inst.floor.clone());
            if lo > *max {
                Vec::new()
            } else {
                lattice(&lo, max, step)
            }
        })
        .collect();
    if axes.iter().any(|a| a.is_empty()) {
        return None;
    }
    let mut best: Option<(Vec<Rat>, Rat)> = None;
    let mut idx = vec![0usize; axes.len()];
    loop {
        let point: Vec<Rat> = idx.iter().zip(&axes).map(|(&i, ax)| ax[i].clone()).collect();
        let util: Rat = inst
            .tasks
            .iter()
            .zip(&point)
            .map(|((_, c, _, _), t)| c / t)
            .sum();
        if util <= inst.budget {
            let eta: Rat = inst
                .tasks
                .iter()
                .zip(&point)
                .map(|((w, _, des, _), t)| w * &(des / t))
                .sum();
            if best.as_ref().map(|(_, b)| eta > *b).unwrap_or(true) {
                best = Some((point, eta));
            }
        }
        // Odometer increment over the axes.
        let mut k = 0;
        loop {
            if k == axes.len() {
                return best;
            }
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

// ---------------------------------------------------------------------
// Server-parameter oracle.

pub struct ServerInstance {
    /// RT tasks above the server level, any order.
    pub higher_rt: Vec<RealTimeTask>,
    /// RT tasks below the server level (ACTIVE placements), in RM order.
    pub lower_rt: Vec<RealTimeTask>,
    /// Security (wcet, period) pairs the server must feed.
    pub security: Vec<(Rat, Rat)>,
    pub p_max: Rat,
}

fn interference_window(p: &Rat, higher_rt: &[RealTimeTask]) -> Rat {
    higher_rt
        .iter()
        .map(|h| &(&(p / &h.period) + &Rat::one()) * &h.wcet)
        .sum()
}

/// All three constraint families, straight from the analysis formulas.
pub fn server_point_ok(inst: &ServerInstance, q: &Rat, p: &Rat) -> bool {
    if !q.is_positive() || q > p {
        return false;
    }
    let delta = interference_window(p, &inst.higher_rt);
    if &(q + &delta) > p {
        return false;
    }
    let mut ordered = inst.security.clone();
    ordered.sort_by(|a, b| a.1.cmp(&b.1));
    for (i, (c_i, t_i)) in ordered.iter().enumerate() {
        let demand: Rat = ordered[..i]
            .iter()
            .fold(c_i.clone(), |acc, (c_h, t_h)| {
                acc + &ceil_div(t_i, t_h) * c_h
            });
        let supply = &(q / p) * &(&(t_i - &(p - q)) - &delta);
        if supply < demand {
            return false;
        }
    }
    for (i, low) in inst.lower_rt.iter().enumerate() {
        let d = &low.deadline;
        // Everything of higher priority interferes: the tasks above the
        // server plus the lower tasks preceding this one in RM order.
        let rt_part: Rat = inst
            .higher_rt
            .iter()
            .chain(&inst.lower_rt[..i])
            .map(|h| &ceil_div(d, &h.period) * &h.wcet)
            .sum();
        let server_part = &(&(d / p) + &Rat::one()) * q;
        if &(&(&low.wcet + &rt_part) + &server_part) > d {
            return false;
        }
    }
    true
}

/// Best Q/P over a points × points lattice covering (0, p_max]².
pub fn server_grid_best(inst: &ServerInstance, points: u32) -> Option<(Rat, Rat, Rat)> {
    let n = Rat::from_int(i64::from(points));
    let mut best: Option<(Rat, Rat, Rat)> = None;
    for pk in 1..=points {
        let p = &(&inst.p_max * &Rat::from_int(i64::from(pk))) / &n;
        for qk in 1..=points {
            let q = &(&p * &Rat::from_int(i64::from(qk))) / &n;
            if !server_point_ok(inst, &q, &p) {
                continue;
            }
            let ratio = &q / &p;
            let better = match &best {
                None => true,
                Some((_, _, b)) => ratio > *b,
            };
            if better {
                best = Some((q, p.clone(), ratio));
            }
        }
    }
    best
}

// ---------------------------------------------------------------------
// Distribution helpers.

/// Worst shortfall of F_a below F_b across the merged support. Zero
/// means F_a first-order dominates F_b (a's samples are faster
/// everywhere); a positive value is the largest crossing in CDF mass.
pub fn cdf_dominance_gap(a: &[(Time, Rat)], b: &[(Time, Rat)]) -> Rat {
    let eval = |cdf: &[(Time, Rat)], x: &Time| {
        cdf.iter()
            .rev()
            .find(|(v, _)| v <= x)
            .map(|(_, p)| p.clone())
            .unwrap_or_else(Rat::zero)
    };
    let mut support: Vec<Time> = a.iter().chain(b).map(|(v, _)| v.clone()).collect();
    support.sort();
    support.dedup();
    support
        .iter()
        .map(|x| &eval(b, x) - &eval(a, x))
        .fold(Rat::zero(), |acc, g| acc.max(g))
}

pub fn mean(samples: &[Time]) -> Rat {
    let sum: Rat = samples.iter().sum();
    &sum / &Rat::from_int(samples.len() as i64)
}
