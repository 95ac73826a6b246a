//! Test oracles written directly from the model equations, without going
//! through the library's forward propagation.
#![allow(dead_code, clippy::needless_range_loop)]

use capmdp::evaluate::{evaluate_strategy, EvaluationResult};
use capmdp::model::{Instance, InstanceParams, Scenario, Strategy, CAPACITY_SLACK};
use capmdp::random_instance;

/// Occupancy of one scenario computed with plain nested loops.
pub struct NaiveOccupancy {
    /// `x[t-1][i][a]`
    pub x: Vec<Vec<[f64; 2]>>,
    /// `z[t-1]` is `Z^t` for `t = 1..=T`.
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    pub value: f64,
}

pub fn naive_occupancy(inst: &Instance, sc: &Scenario, strat: &Strategy) -> NaiveOccupancy {
    let n = inst.num_states();
    let horizon = inst.horizon;
    let mut x = vec![vec![[0.0; 2]; n]; horizon - 1];
    let mut z = vec![0.0; horizon];
    for i in 0..n {
        x[0][i][strat.action(1, i) as usize] = inst.theta[i];
    }
    for t in 2..horizon {
        let mut dz = 0.0;
        for i in 0..n {
            for a in 0..2 {
                dz += x[t - 2][i][a] * sc.q(i, a);
            }
        }
        z[t - 1] = z[t - 2] + dz;
        for j in 0..n {
            let mut inflow = 0.0;
            for i in 0..n {
                for a in 0..2 {
                    inflow += x[t - 2][i][a] * sc.p(i, a, j);
                }
            }
            x[t - 1][j][strat.action(t, j) as usize] = inflow;
        }
    }
    let last = horizon - 2;
    let mut y = vec![0.0; n];
    let mut dz = 0.0;
    for i in 0..n {
        for a in 0..2 {
            dz += x[last][i][a] * sc.q(i, a);
            for (j, yj) in y.iter_mut().enumerate() {
                *yj += x[last][i][a] * sc.p(i, a, j);
            }
        }
    }
    z[horizon - 1] = z[horizon - 2] + dz;

    let mut value = 0.0;
    for xt in &x {
        for (i, xi) in xt.iter().enumerate() {
            value += xi[0] * sc.reward(i, 0) + xi[1] * sc.reward(i, 1);
        }
    }
    for (i, yi) in y.iter().enumerate() {
        value += yi * sc.terminal_reward(i);
    }
    for t in 2..=horizon {
        value += (z[t - 1] - z[t - 2]) * inst.absorbing_reward;
    }
    NaiveOccupancy { x, z, y, value }
}

/// `(U, feasible)` from the naive occupancy.
pub fn naive_value(inst: &Instance, strat: &Strategy) -> (f64, bool) {
    let pop = inst.population as f64;
    let mut total = 0.0;
    let mut feasible = true;
    for (lambda, sc) in inst.scenario_probabilities.iter().zip(&inst.scenarios) {
        let occ = naive_occupancy(inst, sc, strat);
        total += lambda * occ.value;
        for t in 1..inst.horizon {
            let special: f64 = occ.x[t - 1].iter().map(|xi| xi[1]).sum();
            if pop * special - inst.capacities[t - 1] > CAPACITY_SLACK {
                feasible = false;
            }
        }
    }
    (pop * total, feasible)
}

/// Strategy number `k` in lexicographic order of its row-major bits.
pub fn strategy_from_index(k: u64, epochs: usize, n: usize) -> Strategy {
    let m = epochs * n;
    let bits = (0..m).map(|b| ((k >> (m - 1 - b)) & 1) as u8).collect();
    Strategy::from_bits(epochs, n, bits)
}

/// Visits every deterministic strategy in lexicographic order.
pub fn for_each_strategy(inst: &Instance, mut visit: impl FnMut(Strategy, EvaluationResult)) {
    let epochs = inst.num_epochs();
    let n = inst.num_states();
    for k in 0..1u64 << (epochs * n) {
        let s = strategy_from_index(k, epochs, n);
        let eval = evaluate_strategy(inst, &s).unwrap();
        visit(s, eval);
    }
}

/// Best feasible strategy by flat enumeration; the first maximizer in
/// lexicographic order wins ties.
pub fn brute_force_optimum(inst: &Instance) -> Option<(f64, Strategy)> {
    let mut best: Option<(f64, Strategy)> = None;
    for_each_strategy(inst, |s, eval| {
        if eval.feasible && best.as_ref().is_none_or(|(b, _)| eval.total_reward > *b) {
            best = Some((eval.total_reward, s));
        }
    });
    best
}

/// Smallest Hamming distance from `target` to any feasible strategy.
pub fn brute_force_repair_distance(inst: &Instance, target: &Strategy) -> usize {
    let mut best = usize::MAX;
    for_each_strategy(inst, |s, eval| {
        if eval.feasible {
            best = best.min(s.hamming(target));
        }
    });
    best
}

/// The small seeded family shared by the oracle tests.
pub fn small_suite(count: usize, seed0: u64) -> Vec<Instance> {
    (0..count as u64)
        .map(|k| {
            let n = [2, 3][(k % 2) as usize];
            let horizon = [4, 5][((k / 2) % 2) as usize];
            let scenarios = [3, 5][((k / 4) % 2) as usize];
            let c = [0.2, 0.3, 0.4, 0.6][((k / 8) % 4) as usize];
            let eps = [0.1, 0.25, 0.5][(k % 3) as usize];
            random_instance(n, &InstanceParams::new(scenarios, horizon, c, eps, seed0 + k)).unwrap()
        })
        .collect()
}

/// An instance whose transitions, deaths and initial state are all 0/1.
pub fn deterministic_chain(n: usize, horizon: usize, start: usize, next: &[[usize; 2]], dies: &[[bool; 2]]) -> Instance {
    let mut sc = Scenario::zeros(n);
    for i in 0..n {
        for a in 0..2 {
            if dies[i][a] {
                sc.set_q(i, a, 1.0);
            } else {
                sc.set_p(i, a, next[i][a], 1.0);
            }
            sc.set_reward(i, a, 100.0 + (10 * i + a) as f64);
        }
        sc.set_terminal_reward(i, 50.0 + i as f64);
    }
    let mut theta = vec![0.0; n];
    theta[start] = 1.0;
    Instance {
        horizon,
        states: (0..n).map(|i| format!("s{i}")).collect(),
        population: 100,
        theta,
        capacities: vec![100.0; horizon - 1],
        absorbing_reward: 3.0,
        scenario_probabilities: vec![1.0],
        scenarios: vec![sc],
    }
    .into_validated()
    .unwrap()
}
