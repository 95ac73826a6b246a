//! Parallel approximate dynamic programming over the policy network.
//!
//! The network has one column per decision epoch and one node per policy
//! combination. Arc lengths depend on the path that reaches the tail node,
//! so every node keeps only the occupancy of its best incoming path and
//! discards the rest. That single-label recursion is what makes the method
//! approximate when capacity binds.
//!
//! A node's value is the expected reward of its stored path through its own
//! epoch (nodes in the last column also carry the terminal terms). This is
//! the running sum of arc lengths `f_pred + eta`, evaluated from the path's
//! accumulated occupancy rather than by adding arc increments.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forward::{expected_total, within_capacity, StageOccupancy};
use crate::model::{Instance, Strategy};

pub const MAX_STATE_BITS: usize = 20;

/// A policy for one epoch packed into an integer: bit `i` is the action
/// for state `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct PolicyCombination(pub u32);

impl PolicyCombination {
    pub fn encode(policy: &[u8]) -> Self {
        assert!(policy.len() <= 32, "policy too wide to pack");
        PolicyCombination(
            policy
                .iter()
                .enumerate()
                .fold(0u32, |acc, (i, &a)| acc | (u32::from(a & 1) << i)),
        )
    }

    pub fn decode(self, num_states: usize) -> Vec<u8> {
        (0..num_states).map(|i| ((self.0 >> i) & 1) as u8).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PadpStatus {
    Solved,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PadpResult {
    pub status: PadpStatus,
    /// Value of the longest feasible strategy path.
    pub value: Option<f64>,
    /// Combination chosen at each epoch along the best path.
    pub path: Vec<PolicyCombination>,
    pub num_states: usize,
    /// Alive nodes in each column after pruning.
    pub alive_counts: Vec<usize>,
    /// Wall-clock seconds spent per column (not part of the JSON output).
    pub stage_seconds: Vec<f64>,
}

impl PadpResult {
    pub fn strategy(&self) -> Option<Strategy> {
        decode_path(self).ok()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "f_padp": self.value,
            "strategy": self.strategy(),
            "alive_counts": self.alive_counts,
            "status": self.status,
        })
    }

    pub fn write_timing<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "alive", "seconds"])?;
        for (k, (alive, secs)) in self.alive_counts.iter().zip(&self.stage_seconds).enumerate() {
            w.write_record([(k + 1).to_string(), alive.to_string(), format!("{secs:.6}")])?;
        }
        w.flush().map_err(|e| Error::io("timing log", e))?;
        Ok(())
    }
}

/// Strategy encoded by the best path of a solved result.
pub fn decode_path(result: &PadpResult) -> Result<Strategy> {
    if result.status != PadpStatus::Solved {
        return Err(Error::Infeasible);
    }
    let n = result.num_states;
    let bits = result.path.iter().flat_map(|c| c.decode(n)).collect();
    Ok(Strategy::from_bits(result.path.len(), n, bits))
}

struct Node {
    value: f64,
    pred: Option<u32>,
    occupancy: Vec<StageOccupancy>,
}

fn infeasible(n: usize, alive_counts: Vec<usize>, stage_seconds: Vec<f64>) -> PadpResult {
    PadpResult {
        status: PadpStatus::Infeasible,
        value: None,
        path: Vec::new(),
        num_states: n,
        alive_counts,
        stage_seconds,
    }
}

/// Node value of a path whose occupancy at `epoch` is `stages`.
fn path_value(inst: &Instance, stages: &[StageOccupancy], policy: &[u8], is_last: bool) -> f64 {
    if is_last {
        expected_total(
            inst,
            stages
                .iter()
                .zip(&inst.scenarios)
                .map(|(s, sc)| s.finish(sc, policy, inst.absorbing_reward).value),
        )
    } else {
        expected_total(inst, stages.iter().map(StageOccupancy::partial_value))
    }
}

pub fn solve_padp(inst: &Instance) -> Result<PadpResult> {
    let n = inst.num_states();
    if n > MAX_STATE_BITS {
        return Err(Error::InvalidParameter(format!(
            "{n} states exceed the {MAX_STATE_BITS}-bit policy network limit"
        )));
    }
    let epochs = inst.num_epochs();
    let width = 1usize << n;
    let policies: Vec<Vec<u8>> = (0..width)
        .map(|c| PolicyCombination(c as u32).decode(n))
        .collect();
    let mut alive_counts = Vec::with_capacity(epochs);
    let mut stage_seconds = Vec::with_capacity(epochs);
    // predecessor links of every column, kept for decoding
    let mut links: Vec<Vec<Option<u32>>> = Vec::with_capacity(epochs);

    let started = Instant::now();
    let mut column: Vec<Option<Node>> = policies
        .par_iter()
        .map(|policy| {
            let mut occupancy = Vec::with_capacity(inst.num_scenarios());
            for sc in &inst.scenarios {
                let s = StageOccupancy::initial(&inst.theta, sc, policy);
                if !within_capacity(inst, 1, s.special_care_mass(policy)) {
                    return None;
                }
                occupancy.push(s);
            }
            Some(Node {
                value: path_value(inst, &occupancy, policy, epochs == 1),
                pred: None,
                occupancy,
            })
        })
        .collect();
    stage_seconds.push(started.elapsed().as_secs_f64());
    alive_counts.push(column.iter().filter(|c| c.is_some()).count());
    links.push(column.iter().map(|c| c.as_ref().and_then(|n| n.pred)).collect());
    if alive_counts[0] == 0 {
        return Ok(infeasible(n, alive_counts, stage_seconds));
    }

    for epoch in 2..=epochs {
        let started = Instant::now();
        let is_last = epoch == epochs;
        let prev = &column;
        let next: Vec<Option<Node>> = policies
            .par_iter()
            .map(|policy| {
                let mut best: Option<Node> = None;
                for (p, pred) in prev.iter().enumerate() {
                    let Some(pred) = pred else { continue };
                    let prev_policy = &policies[p];
                    let mut occupancy = Vec::with_capacity(inst.num_scenarios());
                    let mut feasible = true;
                    for (s, sc) in pred.occupancy.iter().zip(&inst.scenarios) {
                        let ext = s.extend(sc, prev_policy, policy, inst.absorbing_reward);
                        if !within_capacity(inst, epoch, ext.special_care_mass(policy)) {
                            feasible = false;
                            break;
                        }
                        occupancy.push(ext);
                    }
                    if !feasible {
                        continue;
                    }
                    let value = path_value(inst, &occupancy, policy, is_last);
                    // strict comparison keeps the smallest predecessor code on ties
                    if best.as_ref().is_none_or(|b| value > b.value) {
                        best = Some(Node {
                            value,
                            pred: Some(p as u32),
                            occupancy,
                        });
                    }
                }
                best
            })
            .collect();
        column = next;
        stage_seconds.push(started.elapsed().as_secs_f64());
        let alive = column.iter().filter(|c| c.is_some()).count();
        alive_counts.push(alive);
        links.push(column.iter().map(|c| c.as_ref().and_then(|n| n.pred)).collect());
        if alive == 0 {
            return Ok(infeasible(n, alive_counts, stage_seconds));
        }
    }

    let (end, value) = column
        .iter()
        .enumerate()
        .filter_map(|(c, node)| node.as_ref().map(|nd| (c, nd.value)))
        .fold(None, |acc: Option<(usize, f64)>, (c, v)| match acc {
            Some((_, bv)) if v <= bv => acc,
            _ => Some((c, v)),
        })
        .expect("last column has an alive node");

    let mut path = vec![PolicyCombination(end as u32)];
    let mut code = end as u32;
    for k in (1..epochs).rev() {
        code = links[k][code as usize].expect("alive node has a predecessor");
        path.push(PolicyCombination(code));
    }
    path.reverse();

    Ok(PadpResult {
        status: PadpStatus::Solved,
        value: Some(value),
        path,
        num_states: n,
        alive_counts,
        stage_seconds,
    })
}
