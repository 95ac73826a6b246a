//! Strategy evaluation through the forward equations, capacity checks,
//! the two valid-inequality diagnostics, and a cohort Monte Carlo oracle.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::forward::{capacity_overflow, expected_total, StageOccupancy};
use crate::model::{Instance, OccupancyTrajectory, ScenarioOccupancy, Strategy, CAPACITY_SLACK};
use crate::rng::stream_rng;

/// First capacity violation in `(scenario, epoch)` lexicographic order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapacityViolation {
    pub scenario: usize,
    pub epoch: usize,
    /// `N * sum_i X_{i,1} - C_t`, in headcount.
    pub overflow: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationResult {
    pub trajectory: OccupancyTrajectory,
    /// Total expected reward `U` of the population.
    pub total_reward: f64,
    pub feasible: bool,
    pub first_violation: Option<CapacityViolation>,
    /// Expected reward of one individual under each scenario.
    pub scenario_values: Vec<f64>,
}

impl EvaluationResult {
    pub fn to_json(&self, include_trajectory: bool) -> serde_json::Value {
        let mut v = serde_json::json!({
            "U": self.total_reward,
            "feasible": self.feasible,
            "first_violation": self.first_violation,
        });
        if include_trajectory {
            v["trajectory"] = serde_json::to_value(&self.trajectory).expect("trajectory serializes");
        }
        v
    }
}

struct ScenarioPass {
    occupancy: ScenarioOccupancy,
    value: f64,
    violation: Option<(usize, f64)>,
}

fn evaluate_scenario(inst: &Instance, strat: &Strategy, omega: usize) -> ScenarioPass {
    let sc = &inst.scenarios[omega];
    let n = inst.num_states();
    let horizon = inst.horizon;
    let r_d = inst.absorbing_reward;
    let mut occ = ScenarioOccupancy::zeros(horizon, n);
    let mut violation = None;

    let mut stage = StageOccupancy::initial(&inst.theta, sc, strat.policy(1));
    for t in 1..horizon {
        if t > 1 {
            stage = stage.extend(sc, strat.policy(t - 1), strat.policy(t), r_d);
        }
        let policy = strat.policy(t);
        for (i, (&x, &a)) in stage.mass.iter().zip(policy).enumerate() {
            *occ.x_mut(t, i, a as usize) = x;
        }
        occ.z[t - 1] = stage.absorbed;
        let overflow = capacity_overflow(inst, t, stage.special_care_mass(policy));
        if violation.is_none() && overflow > CAPACITY_SLACK {
            violation = Some((t, overflow));
        }
    }
    let terminal = stage.finish(sc, strat.policy(horizon - 1), r_d);
    occ.z[horizon - 1] = terminal.absorbed;
    occ.y = terminal.y;
    ScenarioPass {
        occupancy: occ,
        value: terminal.value,
        violation,
    }
}

/// Runs the forward equations for every scenario, totals the expected
/// reward and checks capacity at every epoch.
pub fn evaluate_strategy(inst: &Instance, strat: &Strategy) -> Result<EvaluationResult> {
    strat.check_dimensions(inst)?;
    let passes: Vec<ScenarioPass> = (0..inst.num_scenarios())
        .into_par_iter()
        .map(|w| evaluate_scenario(inst, strat, w))
        .collect();

    let total_reward = expected_total(inst, passes.iter().map(|p| p.value));
    let first_violation = passes.iter().enumerate().find_map(|(w, p)| {
        p.violation.map(|(epoch, overflow)| CapacityViolation {
            scenario: w,
            epoch,
            overflow,
        })
    });
    let scenario_values = passes.iter().map(|p| p.value).collect();
    Ok(EvaluationResult {
        trajectory: OccupancyTrajectory {
            horizon: inst.horizon,
            num_states: inst.num_states(),
            scenarios: passes.into_iter().map(|p| p.occupancy).collect(),
        },
        total_reward,
        feasible: first_violation.is_none(),
        first_violation,
        scenario_values,
    })
}

/// Largest `|lhs - 1|` over the per-period probability-conservation
/// identities (total occupancy plus absorbed mass equals one).
pub fn check_proposition1(inst: &Instance, traj: &OccupancyTrajectory) -> f64 {
    let horizon = inst.horizon;
    let n = inst.num_states();
    let mut worst: f64 = 0.0;
    for occ in &traj.scenarios {
        for t in 1..horizon {
            let mut lhs: f64 = (0..n).map(|i| occ.x(t, i, 0) + occ.x(t, i, 1)).sum();
            if t >= 2 {
                lhs += occ.z(t);
            }
            worst = worst.max((lhs - 1.0).abs());
        }
        let lhs = occ.y.iter().sum::<f64>() + occ.z(horizon);
        worst = worst.max((lhs - 1.0).abs());
    }
    worst
}

/// Per-scenario slack of the aggregated-capacity inequality
/// `sum_t [sum_i X^t_{i,0} + Z^t] >= T - (sum_t C_t + N) / N`.
pub fn check_proposition2(inst: &Instance, traj: &OccupancyTrajectory) -> Vec<f64> {
    let n = inst.num_states();
    let pop = inst.population as f64;
    let bound = inst.horizon as f64 - (inst.capacities.iter().sum::<f64>() + pop) / pop;
    traj.scenarios
        .iter()
        .map(|occ| {
            let lhs: f64 = (1..inst.horizon)
                .map(|t| (0..n).map(|i| occ.x(t, i, 0)).sum::<f64>() + occ.z(t))
                .sum();
            lhs - bound
        })
        .collect()
}

fn sample_index(rng: &mut impl Rng, weights: impl Iterator<Item = f64> + Clone) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (k, w) in weights.enumerate() {
        if w > 0.0 {
            last_positive = k;
        }
        cum += w;
        if u < cum {
            return k;
        }
    }
    last_positive
}

/// Simulates `samples_per_scenario` individuals per scenario under the
/// strategy and returns the empirical occupancy frequencies.
///
/// Scenario `w` draws from stream `w` of the seeded generator, so the
/// output does not depend on the thread schedule.
pub fn simulate_cohort(
    inst: &Instance,
    strat: &Strategy,
    samples_per_scenario: usize,
    seed: u64,
) -> Result<OccupancyTrajectory> {
    strat.check_dimensions(inst)?;
    if samples_per_scenario == 0 {
        return Err(crate::Error::InvalidParameter("samples per scenario must be at least 1".into()));
    }
    let n = inst.num_states();
    let horizon = inst.horizon;
    let scenarios = (0..inst.num_scenarios())
        .into_par_iter()
        .map(|w| {
            let sc = &inst.scenarios[w];
            let mut rng = stream_rng(seed, w as u64);
            let mut x_counts = vec![0u64; (horizon - 1) * n * 2];
            let mut absorbed_at = vec![0u64; horizon + 1];
            let mut y_counts = vec![0u64; n];
            for _ in 0..samples_per_scenario {
                let mut state = sample_index(&mut rng, inst.theta.iter().copied());
                let mut absorbed = false;
                for t in 1..horizon {
                    let a = strat.action(t, state) as usize;
                    x_counts[((t - 1) * n + state) * 2 + a] += 1;
                    // outcome n is the absorbing state
                    let next = sample_index(
                        &mut rng,
                        sc.p_row(state, a).iter().copied().chain(std::iter::once(sc.q(state, a))),
                    );
                    if next == n {
                        absorbed_at[t + 1] += 1;
                        absorbed = true;
                        break;
                    }
                    state = next;
                }
                if !absorbed {
                    y_counts[state] += 1;
                }
            }
            let m = samples_per_scenario as f64;
            let mut occ = ScenarioOccupancy::zeros(horizon, n);
            occ.x = x_counts.iter().map(|&c| c as f64 / m).collect();
            let mut cum = 0u64;
            for (z, &count) in occ.z.iter_mut().zip(&absorbed_at[1..]) {
                cum += count;
                *z = cum as f64 / m;
            }
            occ.y = y_counts.iter().map(|&c| c as f64 / m).collect();
            occ
        })
        .collect();
    Ok(OccupancyTrajectory {
        horizon,
        num_states: n,
        scenarios,
    })
}
