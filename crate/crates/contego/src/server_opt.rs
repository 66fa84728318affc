//! Server parameter selection: find (Q, P) maximizing the bandwidth share
//! Q/P subject to the `analysis` constraints, for either mode.
//!
//! For a fixed P the largest admissible Q is closed-form:
//! min(P − Δ(P), min over protected RT tasks of slackⱼ/(Dⱼ/P + 1)), and
//! the supply check is monotone in Q, so a one-dimensional sweep over P
//! with exact arithmetic finds the grid optimum; optional refinement
//! re-grids around the incumbent. Infeasibility is reported as the first
//! violated constraint per grid region.

use crate::analysis::{
    check_supply, rm_order_security, security_workload, server_interference,
    InterferenceContext,
};
use crate::model::{Mode, SecurityTask, ServerParams, TaskSet};
use crate::time::{ceil_div, Rat, Time};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone)]
pub struct ServerSearchConfig {
    /// Largest replenishment period to consider; defaults to the shortest
    /// security period (longer P makes the supply bracket go negative).
    pub p_max: Option<Time>,
    /// Grid points per sweep.
    pub grid_steps: u32,
    /// Re-grid passes around the incumbent.
    pub refine_rounds: u32,
}

impl Default for ServerSearchConfig {
    fn default() -> Self {
        ServerSearchConfig {
            p_max: None,
            grid_steps: 64,
            refine_rounds: 2,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum InfeasibleServer {
    #[error("empty security set")]
    EmptySecuritySet,
    #[error("no feasible server parameters with P up to {p_max}: {summary}")]
    NoFeasiblePoint { p_max: Time, summary: String },
}

/// P3: best passive server. The server sits below every RT task, so only
/// server schedulability and the supply constraints bind.
pub fn select_passive_params(
    ts: &TaskSet,
    periods: &BTreeMap<String, Time>,
    cfg: &ServerSearchConfig,
) -> Result<ServerParams, InfeasibleServer> {
    let m = ts.rt_tasks.len();
    let ctx = InterferenceContext::for_server(ts, m);
    let (q, p) = search(&ctx, &ts.passive_security, periods, cfg)?;
    Ok(ServerParams {
        capacity: q,
        replenish_period: p,
        mode: Mode::Passive,
        level: m,
    })
}

/// P5: best active server at the given priority level. RT tasks below the
/// level additionally constrain Q through the interference envelope.
pub fn select_active_params(
    ts: &TaskSet,
    level: usize,
    periods: &BTreeMap<String, Time>,
    cfg: &ServerSearchConfig,
) -> Result<ServerParams, InfeasibleServer> {
    let m = ts.rt_tasks.len();
    assert!(
        (ts.min_active_level..=m).contains(&level),
        "level {level} outside [{}, {m}]",
        ts.min_active_level
    );
    let ctx = InterferenceContext::for_server(ts, level);
    let (q, p) = search(&ctx, &ts.active_security, periods, cfg)?;
    Ok(ServerParams {
        capacity: q,
        replenish_period: p,
        mode: Mode::Active,
        level,
    })
}

/// Why a grid point admits no capacity.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Block {
    ServerSched,
    LpRt(String),
    Supply(String),
}

impl std::fmt::Display for Block {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Block::ServerSched => write!(f, "interference leaves the server no capacity"),
            Block::LpRt(id) => write!(f, "rt task {id} fails the low-priority bound"),
            Block::Supply(id) => write!(f, "supply falls short for security task {id}"),
        }
    }
}

fn search(
    ctx: &InterferenceContext,
    sec: &[SecurityTask],
    periods: &BTreeMap<String, Time>,
    cfg: &ServerSearchConfig,
) -> Result<(Time, Time), InfeasibleServer> {
    assert!(cfg.grid_steps >= 2, "grid needs at least two steps");
    if sec.is_empty() {
        return Err(InfeasibleServer::EmptySecuritySet);
    }

    // Demand I_i of each security task under server-internal RM order.
    let ordered = rm_order_security(sec, periods);
    let demands: Vec<(String, Time, Time)> = ordered
        .iter()
        .enumerate()
        .map(|(i, (id, wcet, period))| {
            let hp: Vec<(Time, Time)> = ordered[..i]
                .iter()
                .map(|(_, c, t)| (c.clone(), t.clone()))
                .collect();
            (id.clone(), period.clone(), security_workload(wcet, period, &hp))
        })
        .collect();

    let p_max = cfg.p_max.clone().unwrap_or_else(|| {
        demands
            .iter()
            .map(|(_, t, _)| t.clone())
            .min()
            .expect("nonempty security set")
    });
    assert!(p_max.is_positive(), "p_max must be positive");

    // Q-independent slack of each protected RT task; non-positive slack
    // makes every (Q, P) infeasible at this level.
    let mut lp_slack = Vec::with_capacity(ctx.lower_rt.len());
    for (i, task) in ctx.lower_rt.iter().enumerate() {
        let interference: Rat = ctx
            .higher_rt
            .iter()
            .chain(&ctx.lower_rt[..i])
            .map(|h| ceil_div(&task.deadline, &h.period) * &h.wcet)
            .sum();
        let slack = &(&task.deadline - &task.wcet) - &interference;
        if !slack.is_positive() {
            return Err(InfeasibleServer::NoFeasiblePoint {
                p_max,
                summary: format!("{} even as Q approaches zero", Block::LpRt(task.id.clone())),
            });
        }
        lp_slack.push((task.id.clone(), slack, task.deadline.clone()));
    }

    let evaluate = |p: &Time| -> Result<Time, Block> {
        let delta = server_interference(p, &ctx.higher_rt);
        let mut q_cap = p - &delta;
        if !q_cap.is_positive() {
            return Err(Block::ServerSched);
        }
        for (id, slack, deadline) in &lp_slack {
            let cap = slack / &(&(deadline / p) + &Rat::one());
            if cap < q_cap {
                q_cap = cap;
            }
            if !q_cap.is_positive() {
                return Err(Block::LpRt(id.clone()));
            }
        }
        for (id, t_i, i_i) in &demands {
            if !check_supply(&q_cap, p, &delta, t_i, i_i) {
                return Err(Block::Supply(id.clone()));
            }
        }
        Ok(q_cap)
    };

    let steps = cfg.grid_steps as i64;
    let mut best: Option<(Rat, Time, Time)> = None; // (ratio, P, Q)
    let mut blocks: Vec<(Time, Block)> = Vec::new();
    let mut lo = Rat::zero();
    let mut hi = p_max.clone();
    for round in 0..=cfg.refine_rounds {
        let width = &(&hi - &lo) / &Rat::from_int(steps);
        for k in 1..=steps {
            let p = &lo + &(&width * &Rat::from_int(k));
            if !p.is_positive() || p > p_max {
                continue;
            }
            match evaluate(&p) {
                Ok(q) => {
                    let ratio = &q / &p;
                    let better = match &best {
                        None => true,
                        Some((br, bp, bq)) => {
                            ratio > *br
                                || (ratio == *br && (p < *bp || (p == *bp && q < *bq)))
                        }
                    };
                    if better {
                        best = Some((ratio, p, q));
                    }
                }
                Err(block) => {
                    if round == 0 {
                        blocks.push((p, block));
                    }
                }
            }
        }
        match &best {
            None => break,
            Some((_, bp, _)) => {
                lo = (bp - &width).max(Rat::zero());
                hi = (bp + &width).min(p_max.clone());
            }
        }
    }

    match best {
        Some((_, p, q)) => Ok((q, p)),
        None => Err(InfeasibleServer::NoFeasiblePoint {
            p_max,
            summary: summarize(&blocks),
        }),
    }
}

/// Compress per-point failures into "P ≤ x: reason" regions.
fn summarize(blocks: &[(Time, Block)]) -> String {
    let mut regions: Vec<String> = Vec::new();
    let mut run: Option<(&Block, &Time)> = None;
    for (p, block) in blocks {
        match run {
            Some((current, _)) if current == block => run = Some((current, p)),
            Some((current, end)) => {
                regions.push(format!("P ≤ {end}: {current}"));
                run = Some((block, p));
            }
            None => run = Some((block, p)),
        }
    }
    if let Some((block, end)) = run {
        regions.push(format!("P ≤ {end}: {block}"));
    }
    regions.join("; ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{check_lp_rt, check_server_schedulable};
    use crate::model::{assign_rm_priorities, RealTimeTask};
    use proptest::prelude::*;

    fn t(s: &str) -> Time {
        s.parse().unwrap()
    }

    fn rt(id: &str, c: &str, p: &str) -> RealTimeTask {
        RealTimeTask::new(id, t(c), t(p))
    }

    fn sec(id: &str, c: &str, des: &str, max: &str) -> SecurityTask {
        SecurityTask::new(id, t(c), t(des), t(max))
    }

    fn set(rt_tasks: Vec<RealTimeTask>, security: Vec<SecurityTask>) -> TaskSet {
        let m = rt_tasks.len();
        TaskSet {
            rt_tasks: if rt_tasks.is_empty() {
                rt_tasks
            } else {
                assign_rm_priorities(rt_tasks).unwrap()
            },
            passive_security: security.clone(),
            active_security: security,
            min_active_level: m.min(1),
        }
    }

    fn desired_periods(sec: &[SecurityTask]) -> BTreeMap<String, Time> {
        sec.iter()
            .map(|s| (s.id.clone(), s.desired_period.clone()))
            .collect()
    }

    #[test]
    fn no_rt_tasks_gives_full_bandwidth() {
        let ts = set(vec![], vec![sec("s1", "1", "10", "40")]);
        let params = select_passive_params(
            &ts,
            &desired_periods(&ts.passive_security),
            &ServerSearchConfig::default(),
        )
        .unwrap();
        assert_eq!(params.ratio(), Rat::one());
        assert_eq!(params.level, 0);
        assert_eq!(params.mode, Mode::Passive);
    }

    #[test]
    fn heavy_rt_task_starves_short_horizon_server() {
        // Q <= P/2 - 4 needs P > 8, but then the supply bracket
        // T - (P - Q) - delta stays negative: infeasible everywhere.
        let ts = set(vec![rt("r1", "4", "8")], vec![sec("s1", "1", "10", "40")]);
        let err = select_passive_params(
            &ts,
            &desired_periods(&ts.passive_security),
            &ServerSearchConfig::default(),
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("no capacity"), "{msg}");
        assert!(msg.contains("supply"), "{msg}");
    }

    #[test]
    fn feasible_point_sits_on_the_schedulability_boundary() {
        // Same RT load with a long-horizon monitor: optimum has
        // Q = P - delta = P/2 - 4 exactly; feasible P ends near 89.8.
        let ts = set(vec![rt("r1", "4", "8")], vec![sec("s1", "1", "100", "400")]);
        let params = select_passive_params(
            &ts,
            &desired_periods(&ts.passive_security),
            &ServerSearchConfig::default(),
        )
        .unwrap();
        let p = &params.replenish_period;
        let q = &params.capacity;
        assert_eq!(*q, &(p / &t("2")) - &t("4"));
        let ratio = params.ratio().to_f64();
        assert!(ratio > 0.45 && ratio < 0.4555, "ratio {ratio}");
        assert!(check_server_schedulable(q, p, &ts.rt_tasks));
    }

    #[test]
    fn oversized_rt_demand_is_infeasible() {
        let ts = set(vec![rt("r1", "7", "8")], vec![sec("s1", "2", "10", "40")]);
        let err = select_passive_params(
            &ts,
            &desired_periods(&ts.passive_security),
            &ServerSearchConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, InfeasibleServer::NoFeasiblePoint { .. }));
    }

    #[test]
    fn empty_security_set_reported() {
        let ts = set(vec![rt("r1", "1", "4")], vec![]);
        let err = select_passive_params(&ts, &BTreeMap::new(), &ServerSearchConfig::default())
            .unwrap_err();
        assert_eq!(err, InfeasibleServer::EmptySecuritySet);
        let err = select_active_params(&ts, 1, &BTreeMap::new(), &ServerSearchConfig::default())
            .unwrap_err();
        assert_eq!(err, InfeasibleServer::EmptySecuritySet);
    }

    #[test]
    fn bottom_level_active_equals_passive() {
        let ts = set(
            vec![rt("r1", "1", "4"), rt("r2", "2", "10")],
            vec![sec("s1", "0.5", "30", "90"), sec("s2", "0.5", "40", "80")],
        );
        let periods = desired_periods(&ts.passive_security);
        let cfg = ServerSearchConfig::default();
        let pa = select_passive_params(&ts, &periods, &cfg).unwrap();
        let ac = select_active_params(&ts, 2, &periods, &cfg).unwrap();
        assert_eq!(pa.capacity, ac.capacity);
        assert_eq!(pa.replenish_period, ac.replenish_period);
        assert_eq!(ac.mode, Mode::Active);
        assert_eq!(ac.level, 2);
    }

    #[test]
    fn mid_level_search_respects_low_priority_bound() {
        // Protected task (C=2, D=10) with hp (1,4): slack 5, so
        // Q <= 5P/(10+P); server schedulability gives Q <= 3P/4 - 1.
        // The true optimum Q/P = 0.3911 sits where the two caps meet.
        let ts = set(
            vec![rt("r1", "1", "4"), rt("r2", "2", "10")],
            vec![sec("s1", "1", "12", "48")],
        );
        let periods = desired_periods(&ts.active_security);
        let params =
            select_active_params(&ts, 1, &periods, &ServerSearchConfig::default()).unwrap();
        let ratio = params.ratio().to_f64();
        assert!(ratio > 0.3905 && ratio < 0.39115, "ratio {ratio}");
        let p = &params.replenish_period;
        let q = &params.capacity;
        assert!(check_server_schedulable(q, p, &ts.rt_tasks[..1]));
        assert!(check_lp_rt(q, p, &ts.rt_tasks[1], &ts.rt_tasks[..1]));
    }

    #[test]
    fn level_with_hopeless_protected_task_is_rejected_outright() {
        // r2 alone already has zero slack at its deadline: 8 - 4 - 4.
        let ts = set(
            vec![rt("r1", "4", "8"), rt("r2", "4", "8")],
            vec![sec("s1", "1", "20", "80")],
        );
        let err = select_active_params(
            &ts,
            1,
            &desired_periods(&ts.active_security),
            &ServerSearchConfig::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("r2"), "{err}");
    }

    #[test]
    fn search_is_deterministic() {
        let ts = set(
            vec![rt("r1", "1", "4"), rt("r2", "2", "10")],
            vec![sec("s1", "1", "12", "48")],
        );
        let periods = desired_periods(&ts.active_security);
        let cfg = ServerSearchConfig::default();
        let a = select_active_params(&ts, 1, &periods, &cfg).unwrap();
        let b = select_active_params(&ts, 1, &periods, &cfg).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        // Whatever comes back satisfies every analysis predicate exactly.
        #[test]
        fn returned_params_pass_all_checks(
            c1 in 1..=3i64, p1 in 4..=8i64,
            c2 in 1..=3i64, p2 in 9..=16i64,
            cs in 1..=2i64, ds in 10..=30i64,
            level in 0..=2usize,
        ) {
            let mut ts = set(
                vec![rt("r1", &c1.to_string(), &p1.to_string()),
                     rt("r2", &c2.to_string(), &p2.to_string())],
                vec![sec("s1", &cs.to_string(), &ds.to_string(), &(4 * ds).to_string())],
            );
            ts.min_active_level = 1;
            let periods = desired_periods(&ts.active_security);
            let cfg = ServerSearchConfig { grid_steps: 16, refine_rounds: 1, p_max: None };
            let level = level.max(ts.min_active_level);
            if let Ok(params) = select_active_params(&ts, level, &periods, &cfg) {
                let q = &params.capacity;
                let p = &params.replenish_period;
                prop_assert!(q.is_positive() && q <= p);
                let hp = &ts.rt_tasks[..level];
                prop_assert!(check_server_schedulable(q, p, hp));
                for (j, task) in ts.rt_tasks.iter().enumerate().skip(level) {
                    prop_assert!(check_lp_rt(q, p, task, &ts.rt_tasks[..j]));
                }
                let delta = server_interference(p, hp);
                let i_1 = security_workload(&ts.active_security[0].wcet, &t(&ds.to_string()), &[]);
                prop_assert!(check_supply(q, p, &delta, &t(&ds.to_string()), &i_1));
            }
        }
    }
}
