//! Stage-by-stage forward propagation of occupancy measures.
//!
//! Every solver extends prefixes through [`StageOccupancy::extend`] and
//! totals through [`StageOccupancy::finish`] and [`expected_total`], so a
//! strategy gets the same floating-point value whichever path computed it.

use crate::model::{Instance, Scenario, CAPACITY_SLACK};

/// Occupancy of one scenario at one decision epoch, plus the reward
/// accumulated along the prefix that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOccupancy {
    /// `X^t_{i, pi_i^t}`; the entry for the other action is zero.
    pub mass: Vec<f64>,
    /// Cumulative absorbed mass `Z^t`.
    pub absorbed: f64,
    /// `sum_{t' <= t} (Z^{t'} - Z^{t'-1}) R_D`.
    pub absorbing_reward: f64,
    /// `sum_{t' <= t} sum_i X^{t'}_{i,pi} r_{i,pi}`.
    pub stage_reward: f64,
}

/// Terminal-period quantities of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalOccupancy {
    pub y: Vec<f64>,
    /// `Z^T`.
    pub absorbed: f64,
    /// Expected reward of one individual in this scenario.
    pub value: f64,
}

fn stage_reward(sc: &Scenario, mass: &[f64], policy: &[u8]) -> f64 {
    mass.iter()
        .zip(policy)
        .enumerate()
        .map(|(i, (&x, &a))| x * sc.reward(i, a as usize))
        .sum()
}

/// Pushes `mass` (taken under `policy`) one period forward.
fn transition(sc: &Scenario, mass: &[f64], policy: &[u8]) -> (Vec<f64>, f64) {
    let n = mass.len();
    let mut next = vec![0.0; n];
    let mut into_absorbing = 0.0;
    for (i, (&x, &a)) in mass.iter().zip(policy).enumerate() {
        let a = a as usize;
        for (nj, &p) in next.iter_mut().zip(sc.p_row(i, a)) {
            *nj += x * p;
        }
        into_absorbing += x * sc.q(i, a);
    }
    (next, into_absorbing)
}

impl StageOccupancy {
    /// Epoch-1 occupancy: `X^1_{i, pi_i^1} = theta_i`, `Z^1 = 0`.
    pub fn initial(theta: &[f64], sc: &Scenario, policy: &[u8]) -> Self {
        let mass = theta.to_vec();
        let stage_reward = stage_reward(sc, &mass, policy);
        StageOccupancy {
            mass,
            absorbed: 0.0,
            absorbing_reward: 0.0,
            stage_reward,
        }
    }

    /// Occupancy at the next epoch when `prev_policy` was applied here and
    /// `policy` is applied there.
    pub fn extend(&self, sc: &Scenario, prev_policy: &[u8], policy: &[u8], absorbing_reward: f64) -> Self {
        let (mass, into_absorbing) = transition(sc, &self.mass, prev_policy);
        let absorbed = self.absorbed + into_absorbing;
        StageOccupancy {
            absorbing_reward: self.absorbing_reward + (absorbed - self.absorbed) * absorbing_reward,
            stage_reward: self.stage_reward + stage_reward(sc, &mass, policy),
            mass,
            absorbed,
        }
    }

    /// Period-`T` occupancy after applying `policy` at the last epoch.
    pub fn finish(&self, sc: &Scenario, policy: &[u8], absorbing_reward: f64) -> TerminalOccupancy {
        let (y, into_absorbing) = transition(sc, &self.mass, policy);
        let absorbed = self.absorbed + into_absorbing;
        let absorbing_total = self.absorbing_reward + (absorbed - self.absorbed) * absorbing_reward;
        let terminal: f64 = y
            .iter()
            .enumerate()
            .map(|(i, &m)| m * sc.terminal_reward(i))
            .sum();
        TerminalOccupancy {
            value: absorbing_total + self.stage_reward + terminal,
            y,
            absorbed,
        }
    }

    /// Reward accumulated through this epoch (no terminal terms).
    pub fn partial_value(&self) -> f64 {
        self.absorbing_reward + self.stage_reward
    }

    /// `sum_i X^t_{i,1}`.
    pub fn special_care_mass(&self, policy: &[u8]) -> f64 {
        self.mass
            .iter()
            .zip(policy)
            .filter(|(_, &a)| a == 1)
            .map(|(&x, _)| x)
            .sum()
    }

    /// Probability mass still in non-absorbing states.
    pub fn alive_mass(&self) -> f64 {
        self.mass.iter().sum()
    }
}

/// `N * sum_i X^t_{i,1} - C_t`; positive beyond the slack means a violation.
pub fn capacity_overflow(inst: &Instance, epoch: usize, special_care_mass: f64) -> f64 {
    inst.population as f64 * special_care_mass - inst.capacity(epoch)
}

pub fn within_capacity(inst: &Instance, epoch: usize, special_care_mass: f64) -> bool {
    capacity_overflow(inst, epoch, special_care_mass) <= CAPACITY_SLACK
}

/// `N * sum_w lambda_w v_w`, accumulated in scenario order.
pub fn expected_total(inst: &Instance, per_scenario: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = 0.0;
    for (&lambda, v) in inst.scenario_probabilities.iter().zip(per_scenario) {
        acc += lambda * v;
    }
    inst.population as f64 * acc
}
