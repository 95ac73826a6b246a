//! Exact optimization over deterministic strategies.
//!
//! Depth-first branch-and-bound over decision epochs. Each tree level fixes
//! one epoch's policy; the occupancy of the shared prefix is kept on the
//! DFS stack and extended by one stage per child. A child whose own epoch
//! breaks capacity in some scenario is cut, since no completion can repair
//! an earlier epoch.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluate::evaluate_strategy;
use crate::forward::{expected_total, within_capacity, StageOccupancy};
use crate::model::{Instance, Strategy};

/// Largest state count whose policy columns we are willing to enumerate.
pub const MAX_STATE_BITS: usize = 20;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SearchLimits {
    pub max_nodes: Option<u64>,
    pub max_seconds: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactOptions {
    pub limits: SearchLimits,
    /// Cut subtrees whose optimistic completion cannot beat the incumbent.
    pub bound_pruning: bool,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions {
            limits: SearchLimits::default(),
            bound_pruning: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    LimitExceeded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Best objective found (`None` when no feasible strategy was seen).
    pub value: Option<f64>,
    pub strategy: Option<Strategy>,
    pub nodes_explored: u64,
    /// Nodes generated at each decision epoch (index 0 is epoch 1).
    #[serde(skip)]
    pub nodes_per_depth: Vec<u64>,
}

impl SolveResult {
    /// Value and strategy of an optimal result, or the matching error.
    pub fn optimum(&self) -> Result<(f64, &Strategy)> {
        match (self.status, self.value, self.strategy.as_ref()) {
            (SolveStatus::Optimal, Some(v), Some(s)) => Ok((v, s)),
            (SolveStatus::LimitExceeded, ..) => Err(Error::LimitExceeded(format!(
                "search stopped after {} nodes",
                self.nodes_explored
            ))),
            _ => Err(Error::Infeasible),
        }
    }

    /// Search log as CSV: one row per decision epoch.
    pub fn write_search_log<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "nodes"])?;
        for (k, n) in self.nodes_per_depth.iter().enumerate() {
            w.write_record([(k + 1).to_string(), n.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("search log", e))?;
        Ok(())
    }
}

/// All `2^n` binary policies in lexicographic order of `(pi_0, ..., pi_{n-1})`.
pub fn lexicographic_policies(n: usize) -> Vec<Vec<u8>> {
    (0..1usize << n)
        .map(|k| (0..n).map(|i| ((k >> (n - 1 - i)) & 1) as u8).collect())
        .collect()
}

fn check_state_bits(inst: &Instance) -> Result<()> {
    if inst.num_states() > MAX_STATE_BITS {
        return Err(Error::InvalidParameter(format!(
            "{} states exceed the {MAX_STATE_BITS}-state enumeration limit",
            inst.num_states()
        )));
    }
    Ok(())
}

struct Shared {
    nodes: AtomicU64,
    aborted: AtomicBool,
    max_nodes: Option<u64>,
    deadline: Option<Instant>,
}

impl Shared {
    fn new(limits: SearchLimits) -> Self {
        Shared {
            nodes: AtomicU64::new(0),
            aborted: AtomicBool::new(false),
            max_nodes: limits.max_nodes,
            deadline: limits
                .max_seconds
                .map(|s| Instant::now() + Duration::from_secs_f64(s.max(0.0))),
        }
    }

    /// Registers one node; false once a limit has been hit.
    fn tick(&self) -> bool {
        if self.aborted.load(Ordering::Relaxed) {
            return false;
        }
        let count = self.nodes.fetch_add(1, Ordering::Relaxed) + 1;
        let over_nodes = self.max_nodes.is_some_and(|m| count > m);
        let over_time = self.deadline.is_some_and(|d| Instant::now() > d);
        if over_nodes || over_time {
            self.aborted.store(true, Ordering::Relaxed);
            return false;
        }
        true
    }
}

struct Branch<'a> {
    inst: &'a Instance,
    policies: &'a [Vec<u8>],
    shared: &'a Shared,
    prune: bool,
    floor: f64,
    // per scenario: (max(0, max r), max(0, R_D, max R))
    unit_bounds: Vec<(f64, f64)>,
    path: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
    nodes_explored: u64,
    nodes_per_depth: Vec<u64>,
}

impl Branch<'_> {
    fn tick(&mut self, epoch: usize) -> bool {
        self.nodes_explored += 1;
        self.nodes_per_depth[epoch - 1] += 1;
        self.shared.tick()
    }

    fn feasible_extension(&self, stages: &[StageOccupancy], prev: &[u8], policy: &[u8], epoch: usize) -> Option<Vec<StageOccupancy>> {
        let mut next = Vec::with_capacity(stages.len());
        for (stage, sc) in stages.iter().zip(&self.inst.scenarios) {
            let ext = stage.extend(sc, prev, policy, self.inst.absorbing_reward);
            if !within_capacity(self.inst, epoch, ext.special_care_mass(policy)) {
                return None;
            }
            next.push(ext);
        }
        Some(next)
    }

    /// Optimistic value of any completion of the current prefix.
    fn upper_bound(&self, epoch: usize, stages: &[StageOccupancy]) -> f64 {
        let remaining = (self.inst.horizon - 1 - epoch) as f64;
        expected_total(
            self.inst,
            stages.iter().zip(&self.unit_bounds).map(|(s, &(rmax, tmax))| {
                s.partial_value() + s.alive_mass() * (remaining * rmax + tmax)
            }),
        )
    }

    fn descend(&mut self, epoch: usize, stages: &[StageOccupancy]) {
        let inst = self.inst;
        let last_epoch = inst.horizon - 1;
        let current = &self.policies[*self.path.last().expect("non-empty path")];
        if epoch == last_epoch {
            let values = stages
                .iter()
                .zip(&inst.scenarios)
                .map(|(s, sc)| s.finish(sc, current, inst.absorbing_reward).value);
            let u = expected_total(inst, values);
            if self.best.as_ref().is_none_or(|(b, _)| u > *b) {
                self.best = Some((u, self.path.clone()));
            }
            return;
        }
        if self.prune {
            let incumbent = self.best.as_ref().map_or(self.floor, |(b, _)| b.max(self.floor));
            let margin = 1e-9 * (1.0 + incumbent.abs());
            if self.upper_bound(epoch, stages) < incumbent - margin {
                return;
            }
        }
        for c in 0..self.policies.len() {
            if !self.tick(epoch + 1) {
                return;
            }
            let policy = &self.policies[c];
            if let Some(next) = self.feasible_extension(stages, current, policy, epoch + 1) {
                self.path.push(c);
                self.descend(epoch + 1, &next);
                self.path.pop();
            }
        }
    }
}

fn path_strategy(policies: &[Vec<u8>], path: &[usize], n: usize) -> Strategy {
    let bits = path.iter().flat_map(|&c| policies[c].iter().copied()).collect();
    Strategy::from_bits(path.len(), n, bits)
}

/// Maximum-reward capacity-feasible strategy by branch-and-bound.
pub fn solve_exact(inst: &Instance, limits: SearchLimits) -> Result<SolveResult> {
    solve_exact_with(inst, ExactOptions { limits, ..ExactOptions::default() })
}

pub fn solve_exact_with(inst: &Instance, options: ExactOptions) -> Result<SolveResult> {
    check_state_bits(inst)?;
    let n = inst.num_states();
    let epochs = inst.num_epochs();
    let policies = lexicographic_policies(n);
    let shared = Shared::new(options.limits);

    // the all-regular-care strategy never uses capacity, so it is a valid floor
    let floor_eval = evaluate_strategy(inst, &Strategy::zeros(epochs, n))?;
    let floor = if floor_eval.feasible { floor_eval.total_reward } else { f64::NEG_INFINITY };
    let unit_bounds: Vec<(f64, f64)> = inst
        .scenarios
        .iter()
        .map(|sc| {
            let rmax = sc.max_reward().max(0.0);
            let tmax = sc.max_terminal_reward().max(inst.absorbing_reward).max(0.0);
            (rmax, tmax)
        })
        .collect();

    // top-level branches run in parallel; each keeps its own incumbent so
    // node counts and the final reduction are schedule-independent
    let outcomes: Vec<Branch> = (0..policies.len())
        .into_par_iter()
        .map(|first| {
            let mut branch = Branch {
                inst,
                policies: &policies,
                shared: &shared,
                prune: options.bound_pruning,
                floor,
                unit_bounds: unit_bounds.clone(),
                path: Vec::with_capacity(epochs),
                best: None,
                nodes_explored: 0,
                nodes_per_depth: vec![0; epochs],
            };
            if !branch.tick(1) {
                return branch;
            }
            let policy = &policies[first];
            let mut stages = Vec::with_capacity(inst.num_scenarios());
            for sc in &inst.scenarios {
                let s = StageOccupancy::initial(&inst.theta, sc, policy);
                if !within_capacity(inst, 1, s.special_care_mass(policy)) {
                    return branch;
                }
                stages.push(s);
            }
            branch.path.push(first);
            branch.descend(1, &stages);
            branch
        })
        .collect();

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut nodes_explored = 0;
    let mut nodes_per_depth = vec![0; epochs];
    for b in outcomes {
        nodes_explored += b.nodes_explored;
        for (acc, n) in nodes_per_depth.iter_mut().zip(&b.nodes_per_depth) {
            *acc += n;
        }
        if let Some((u, path)) = b.best {
            if best.as_ref().is_none_or(|(bu, _)| u > *bu) {
                best = Some((u, path));
            }
        }
    }
    let status = if shared.aborted.load(Ordering::Relaxed) {
        SolveStatus::LimitExceeded
    } else if best.is_some() {
        SolveStatus::Optimal
    } else {
        SolveStatus::Infeasible
    };
    Ok(SolveResult {
        status,
        value: best.as_ref().map(|(u, _)| *u),
        strategy: best.map(|(_, path)| path_strategy(&policies, &path, n)),
        nodes_explored,
        nodes_per_depth,
    })
}

/// Best strategy that applies one policy at every epoch.
pub fn solve_exact_stationary(inst: &Instance, limits: SearchLimits) -> Result<SolveResult> {
    check_state_bits(inst)?;
    let n = inst.num_states();
    let epochs = inst.num_epochs();
    let shared = Shared::new(limits);
    let mut best: Option<(f64, Strategy)> = None;
    let mut nodes_explored = 0;
    for policy in lexicographic_policies(n) {
        if !shared.tick() {
            break;
        }
        nodes_explored += 1;
        let strat = Strategy::stationary(&policy, epochs);
        let eval = evaluate_strategy(inst, &strat)?;
        if eval.feasible && best.as_ref().is_none_or(|(b, _)| eval.total_reward > *b) {
            best = Some((eval.total_reward, strat));
        }
    }
    let status = if shared.aborted.load(Ordering::Relaxed) {
        SolveStatus::LimitExceeded
    } else if best.is_some() {
        SolveStatus::Optimal
    } else {
        SolveStatus::Infeasible
    };
    let mut nodes_per_depth = vec![0; epochs];
    if let Some(first) = nodes_per_depth.first_mut() {
        *first = nodes_explored;
    }
    Ok(SolveResult {
        status,
        value: best.as_ref().map(|(u, _)| *u),
        strategy: best.map(|(_, s)| s),
        nodes_explored,
        nodes_per_depth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Scenario;

    fn single_state(capacity: f64, r0: f64, r1: f64) -> Instance {
        let sc = Scenario::from_nested(
            vec![vec![vec![0.9], vec![0.95]]],
            vec![vec![0.1, 0.05]],
            vec![vec![r0, r1]],
            vec![7.0],
        )
        .unwrap();
        Instance {
            horizon: 2,
            states: vec!["s0".into()],
            population: 10,
            theta: vec![1.0],
            capacities: vec![capacity],
            absorbing_reward: 0.0,
            scenario_probabilities: vec![1.0],
            scenarios: vec![sc],
        }
    }

    #[test]
    fn lexicographic_order() {
        assert_eq!(
            lexicographic_policies(2),
            vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]
        );
    }

    #[test]
    fn dominant_action_with_slack_capacity() {
        let res = solve_exact(&single_state(10.0, 5.0, 6.0), SearchLimits::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        assert_eq!(res.strategy.unwrap().action(1, 0), 1);
    }

    #[test]
    fn zero_capacity_forces_regular_care() {
        let inst = single_state(0.0, 5.0, 6.0);
        let res = solve_exact(&inst, SearchLimits::default()).unwrap();
        let zero = Strategy::zeros(1, 1);
        assert_eq!(res.strategy.as_ref(), Some(&zero));
        assert_eq!(res.value, Some(evaluate_strategy(&inst, &zero).unwrap().total_reward));
        let st = solve_exact_stationary(&inst, SearchLimits::default()).unwrap();
        assert_eq!(st.value, res.value);
    }

    #[test]
    fn node_limit_reports_limit_exceeded() {
        let mut inst = single_state(10.0, 5.0, 6.0);
        inst.horizon = 6;
        inst.capacities = vec![10.0; 5];
        let res = solve_exact(&inst, SearchLimits { max_nodes: Some(3), max_seconds: None }).unwrap();
        assert_eq!(res.status, SolveStatus::LimitExceeded);
        assert!(res.optimum().is_err());
    }
}
