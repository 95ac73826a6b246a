//! Instance generation.
//!
//! A nominal model is the entrywise mean of Monte Carlo draws that satisfy
//! the chronic-care ordering rules. Scenarios then perturb every nominal
//! parameter by independent multiplicative uniform noise of radius `eps`
//! and renormalize the transition rows.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Instance, InstanceParams, Scenario, NUM_ACTIONS};
use crate::rng::{stream_rng, NOMINAL_STREAM, SCENARIO_STREAM_BASE};

/// States of the chronic-care model (engagement x health status).
pub const CHRONIC_CARE_STATES: [&str; 6] = [
    "Low-Simple",
    "Low-Moderate",
    "Low-Complex",
    "High-Simple",
    "High-Moderate",
    "High-Complex",
];

pub const DEFAULT_MC_ITERATIONS: usize = 10_000;

// transitions that change both health status and engagement
const DIAGONAL_ZEROS: [(usize, usize); 8] = [(0, 4), (1, 5), (3, 1), (4, 2), (4, 0), (5, 1), (1, 3), (2, 4)];
const SIMPLE_TO_COMPLEX_ZEROS: [(usize, usize); 2] = [(0, 2), (3, 5)];
const RECOVERY_ZEROS: [(usize, usize); 4] = [(1, 0), (2, 1), (4, 3), (5, 4)];

/// Position of each state in the chain `s2 >= s5 = s1 >= s4 = s0 >= s3`
/// shared by death probabilities and rewards.
const CHAIN_LEVEL: [usize; 6] = [2, 1, 0, 3, 2, 1];

/// `(from, to)` of each worsening transition.
const WORSEN: [(usize, usize); 4] = [(0, 1), (1, 2), (3, 4), (4, 5)];

/// Ordering rules for the six-state chronic-care model.
#[derive(Debug, Clone, PartialEq)]
pub struct ChronicCareRules {
    /// Upper bound on every death probability.
    pub death_cap: f64,
    pub reward_min: f64,
    pub reward_max: f64,
    /// Sampling range for the engagement-switch probabilities.
    pub awareness_switch_max: f64,
    /// Redraws allowed before sampling gives up.
    pub max_attempts: usize,
}

impl Default for ChronicCareRules {
    fn default() -> Self {
        ChronicCareRules {
            death_cap: 0.20,
            reward_min: 100.0,
            reward_max: 1000.0,
            awareness_switch_max: 0.30,
            max_attempts: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleViolation {
    pub rule: &'static str,
    pub detail: String,
}

impl fmt::Display for RuleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.rule, self.detail)
    }
}

struct Checker<'a> {
    sc: &'a Scenario,
}

impl Checker<'_> {
    fn ge(&self, rule: &'static str, lhs: (f64, String), rhs: (f64, String)) -> Result<(), RuleViolation> {
        if lhs.0 >= rhs.0 {
            Ok(())
        } else {
            Err(RuleViolation { rule, detail: format!("{} = {} < {} = {}", lhs.1, lhs.0, rhs.1, rhs.0) })
        }
    }

    fn eq(&self, rule: &'static str, lhs: (f64, String), rhs: (f64, String)) -> Result<(), RuleViolation> {
        if lhs.0 == rhs.0 {
            Ok(())
        } else {
            Err(RuleViolation { rule, detail: format!("{} = {} != {} = {}", lhs.1, lhs.0, rhs.1, rhs.0) })
        }
    }

    fn p(&self, i: usize, a: usize, j: usize) -> (f64, String) {
        (self.sc.p(i, a, j), format!("P[{i}][{a}][{j}]"))
    }

    fn q(&self, i: usize, a: usize) -> (f64, String) {
        (self.sc.q(i, a), format!("Q[{i}][{a}]"))
    }

    fn r(&self, i: usize, a: usize) -> (f64, String) {
        (self.sc.reward(i, a), format!("r[{i}][{a}]"))
    }

    fn zeros(&self, rule: &'static str, pairs: &[(usize, usize)]) -> Result<(), RuleViolation> {
        for &(i, j) in pairs {
            for a in 0..NUM_ACTIONS {
                if self.sc.p(i, a, j) != 0.0 {
                    return Err(RuleViolation { rule, detail: format!("P[{i}][{a}][{j}] = {} must be 0", self.sc.p(i, a, j)) });
                }
            }
        }
        Ok(())
    }

    /// `v(2) >= v(5) = v(1) >= v(4) = v(0) >= v(3)`
    fn chain(&self, rule: &'static str, v: impl Fn(usize) -> (f64, String)) -> Result<(), RuleViolation> {
        self.ge(rule, v(2), v(5))?;
        self.eq(rule, v(5), v(1))?;
        self.ge(rule, v(1), v(4))?;
        self.eq(rule, v(4), v(0))?;
        self.ge(rule, v(0), v(3))
    }
}

impl ChronicCareRules {
    /// Checks the eleven transition rules and four reward rules; returns the
    /// first violated one.
    pub fn check(&self, sc: &Scenario, absorbing_reward: f64) -> Result<(), RuleViolation> {
        if sc.num_states() != CHRONIC_CARE_STATES.len() {
            return Err(RuleViolation { rule: "state space", detail: format!("{} states, expected 6", sc.num_states()) });
        }
        let c = Checker { sc };
        for a in 0..NUM_ACTIONS {
            c.ge("transition rule 1 (worse health worsens more)", c.p(1, a, 2), c.p(0, a, 1))?;
            c.ge("transition rule 1 (worse health worsens more)", c.p(4, a, 5), c.p(3, a, 4))?;
            c.ge("transition rule 2 (higher engagement worsens less)", c.p(0, a, 1), c.p(3, a, 4))?;
            c.ge("transition rule 2 (higher engagement worsens less)", c.p(1, a, 2), c.p(4, a, 5))?;
        }
        for &(i, j) in &WORSEN {
            c.ge("transition rule 3 (special care slows worsening)", c.p(i, 0, j), c.p(i, 1, j))?;
        }
        for a in 0..NUM_ACTIONS {
            c.eq("transition rule 4 (equal engagement gain)", c.p(0, a, 3), c.p(1, a, 4))?;
            c.eq("transition rule 4 (equal engagement gain)", c.p(1, a, 4), c.p(2, a, 5))?;
        }
        for i in 0..3 {
            c.ge("transition rule 4 (special care raises engagement gain)", c.p(i, 1, i + 3), c.p(i, 0, i + 3))?;
        }
        for a in 0..NUM_ACTIONS {
            c.eq("transition rule 5 (equal engagement loss)", c.p(3, a, 0), c.p(4, a, 1))?;
            c.eq("transition rule 5 (equal engagement loss)", c.p(4, a, 1), c.p(5, a, 2))?;
        }
        for i in 3..6 {
            c.ge("transition rule 5 (special care lowers engagement loss)", c.p(i, 0, i - 3), c.p(i, 1, i - 3))?;
        }
        c.zeros("transition rule 6 (no diagonal moves)", &DIAGONAL_ZEROS)?;
        c.zeros("transition rule 7 (no simple-to-complex jump)", &SIMPLE_TO_COMPLEX_ZEROS)?;
        c.zeros("transition rule 8 (no recovery)", &RECOVERY_ZEROS)?;
        for a in 0..NUM_ACTIONS {
            c.chain("transition rule 9 (death probability ordering)", |i| c.q(i, a))?;
        }
        for i in 0..6 {
            c.ge("transition rule 10 (special care lowers death)", c.q(i, 0), c.q(i, 1))?;
        }
        for i in 0..6 {
            for a in 0..NUM_ACTIONS {
                c.ge("transition rule 11 (death probability cap)", (self.death_cap, "cap".into()), c.q(i, a))?;
            }
        }
        for a in 0..NUM_ACTIONS {
            c.chain("reward rule 1 (reward ordering)", |i| c.r(i, a))?;
        }
        for i in 0..6 {
            c.ge("reward rule 2 (special care preferred)", c.r(i, 1), c.r(i, 0))?;
        }
        for i in 0..6 {
            let mean = (sc.reward(i, 0) + sc.reward(i, 1)) / 2.0;
            c.eq("reward rule 3 (terminal reward is the action mean)", (sc.terminal_reward(i), format!("R[{i}]")), (mean, "mean_a r".into()))?;
        }
        for i in 0..6 {
            for a in 0..NUM_ACTIONS {
                let r = sc.reward(i, a);
                if !(self.reward_min..=self.reward_max).contains(&r) {
                    return Err(RuleViolation {
                        rule: "reward rule 4 (reward domain)",
                        detail: format!("r[{i}][{a}] = {r} outside [{}, {}]", self.reward_min, self.reward_max),
                    });
                }
            }
        }
        if absorbing_reward != 0.0 {
            return Err(RuleViolation { rule: "reward rule 4 (reward domain)", detail: format!("R_D = {absorbing_reward} must be 0") });
        }
        Ok(())
    }
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// `k` uniforms on `[lo, hi)` sorted in descending order.
fn sorted_desc<const K: usize>(rng: &mut impl Rng, lo: f64, hi: f64) -> [f64; K] {
    let mut v = [0.0; K];
    for x in v.iter_mut() {
        *x = uniform(rng, lo, hi);
    }
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Puts the leftover row mass on the self-loop. False when it is negative.
fn fill_self_loops(sc: &mut Scenario) -> bool {
    let n = sc.num_states();
    for i in 0..n {
        for a in 0..NUM_ACTIONS {
            let others: f64 = (0..n).filter(|&j| j != i).map(|j| sc.p(i, a, j)).sum();
            let residual = 1.0 - (others + sc.q(i, a));
            if residual < 0.0 {
                return false;
            }
            sc.set_p(i, a, i, residual);
        }
    }
    true
}

/// One random model satisfying every chronic-care rule.
///
/// Death levels, engagement switches and rewards are drawn constructively
/// so their orderings hold by construction; worsening probabilities are
/// redrawn until every self-loop residual is non-negative.
pub fn sample_rule_satisfying_model(rules: &ChronicCareRules, rng: &mut impl Rng) -> Result<Scenario> {
    // death probabilities: four chain levels per action, action 1 below action 0
    let d0: [f64; 4] = sorted_desc(rng, 0.0, rules.death_cap);
    let mut d1 = [0.0; 4];
    d1[3] = uniform(rng, 0.0, d0[3]);
    for k in (0..3).rev() {
        d1[k] = uniform(rng, d1[k + 1], d0[k]);
    }

    // engagement switches shared across health levels
    let [up1, up0]: [f64; 2] = sorted_desc(rng, 0.0, rules.awareness_switch_max);
    let [down0, down1]: [f64; 2] = sorted_desc(rng, 0.0, rules.awareness_switch_max);

    // rewards: action 1 levels, action 0 below them
    let r1: [f64; 4] = sorted_desc(rng, rules.reward_min, rules.reward_max);
    let mut r0 = [0.0; 4];
    r0[0] = uniform(rng, rules.reward_min, r1[0]);
    for k in 1..4 {
        r0[k] = uniform(rng, rules.reward_min, r0[k - 1].min(r1[k]));
    }

    let mut base = Scenario::zeros(6);
    for (i, &level) in CHAIN_LEVEL.iter().enumerate() {
        base.set_q(i, 0, d0[level]);
        base.set_q(i, 1, d1[level]);
        base.set_reward(i, 0, r0[level]);
        base.set_reward(i, 1, r1[level]);
        base.set_terminal_reward(i, (r0[level] + r1[level]) / 2.0);
    }
    for (a, (up, down)) in [(up0, down0), (up1, down1)].into_iter().enumerate() {
        for i in 0..3 {
            base.set_p(i, a, i + 3, up);
            base.set_p(i + 3, a, i, down);
        }
    }

    // room left in the action-0 rows that carry a worsening move
    let room = WORSEN
        .iter()
        .map(|&(i, _)| 1.0 - base.q(i, 0) - base.p_row(i, 0).iter().sum::<f64>())
        .fold(f64::INFINITY, f64::min);

    let mut last = String::new();
    for _ in 0..rules.max_attempts {
        let v: [f64; 4] = sorted_desc(rng, 0.0, room);
        // w[k] is the worsening probability of WORSEN[k] = 0->1, 1->2, 3->4, 4->5
        let (w0, w4) = if rng.random::<bool>() { (v[1], v[2]) } else { (v[2], v[1]) };
        let normal = [w0, v[0], v[3], w4];
        let mut special = [0.0; 4];
        special[2] = uniform(rng, 0.0, normal[2]);
        special[0] = uniform(rng, special[2], normal[0]);
        special[3] = uniform(rng, special[2], normal[3]);
        special[1] = uniform(rng, special[0].max(special[3]), normal[1]);

        let mut sc = base.clone();
        for (k, &(i, j)) in WORSEN.iter().enumerate() {
            sc.set_p(i, 0, j, normal[k]);
            sc.set_p(i, 1, j, special[k]);
        }
        if !fill_self_loops(&mut sc) {
            last = "negative self-loop residual".into();
            continue;
        }
        match rules.check(&sc, 0.0) {
            Ok(()) => return Ok(sc),
            Err(v) => last = v.to_string(),
        }
    }
    Err(Error::RejectionLimitExceeded { attempts: rules.max_attempts, last })
}

/// Center model from which scenarios are sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalModel {
    pub model: Scenario,
    pub labels: Vec<String>,
}

impl NominalModel {
    pub fn num_states(&self) -> usize {
        self.model.num_states()
    }
}

/// Entrywise mean of `iterations` rule-satisfying draws.
///
/// Rows are then closed to exactly one on the self-loop entry, which no
/// rule constrains, so every averaged ordering and equality survives.
pub fn estimate_nominal(rules: &ChronicCareRules, iterations: usize, rng: &mut impl Rng) -> Result<NominalModel> {
    if iterations == 0 {
        return Err(Error::InvalidParameter("Monte Carlo iterations must be at least 1".into()));
    }
    let mut sum = Scenario::zeros(6);
    for _ in 0..iterations {
        let draw = sample_rule_satisfying_model(rules, rng)?;
        for (acc, x) in sum.parameters_mut().zip(draw.parameters()) {
            *acc += x;
        }
    }
    let count = iterations as f64;
    let mut mean = sum.map_parameters(|x| x / count);
    for i in 0..6 {
        mean.set_terminal_reward(i, (mean.reward(i, 0) + mean.reward(i, 1)) / 2.0);
        for a in 0..NUM_ACTIONS {
            let residual = 1.0 - mean.row_sum(i, a);
            mean.set_p(i, a, i, mean.p(i, a, i) + residual);
        }
    }
    Ok(NominalModel {
        model: mean,
        labels: CHRONIC_CARE_STATES.iter().map(|s| s.to_string()).collect(),
    })
}

/// Unrestricted random nominal model on `n` states, for solver testing.
///
/// Rows are dense; special care has lower death probability and a higher
/// reward than regular care in every state, so capacity is contested.
pub fn random_nominal(num_states: usize, rng: &mut impl Rng) -> NominalModel {
    let n = num_states;
    let mut sc = Scenario::zeros(n);
    for i in 0..n {
        let q0 = uniform(rng, 0.0, 0.2);
        let q1 = uniform(rng, 0.0, q0);
        for (a, q) in [q0, q1].into_iter().enumerate() {
            let weights: Vec<f64> = (0..n).map(|_| uniform(rng, 0.0, 1.0)).collect();
            let total: f64 = weights.iter().sum();
            for (j, w) in weights.iter().enumerate() {
                sc.set_p(i, a, j, (1.0 - q) * w / total);
            }
            sc.set_q(i, a, q);
        }
        let r0 = uniform(rng, 100.0, 900.0);
        let r1 = r0 + uniform(rng, 0.0, 100.0);
        sc.set_reward(i, 0, r0);
        sc.set_reward(i, 1, r1);
        sc.set_terminal_reward(i, (r0 + r1) / 2.0);
    }
    NominalModel {
        model: sc,
        labels: (0..n).map(|i| format!("s{i}")).collect(),
    }
}

/// Scales each `(i, a)` row of `P` and `Q` to sum to one.
fn normalize_rows(sc: &mut Scenario) {
    let n = sc.num_states();
    for i in 0..n {
        for a in 0..NUM_ACTIONS {
            let total = sc.row_sum(i, a);
            for p in sc.p_row_mut(i, a) {
                *p /= total;
            }
            sc.set_q(i, a, sc.q(i, a) / total);
        }
    }
}

/// Builds `I(|Omega|, T, c, eps)` around `nominal`.
///
/// Scenario `w` draws its noise from its own stream of the seeded
/// generator. `theta` and `lambda` are uniform, every `C_t = c N`, and the
/// absorbing-state reward is zero.
pub fn generate_instance(params: &InstanceParams, nominal: &NominalModel) -> Result<Instance> {
    params.check()?;
    let n = nominal.num_states();
    let eps = params.epsilon;
    let scenarios: Vec<Scenario> = (0..params.n_scenarios)
        .into_par_iter()
        .map(|w| {
            let mut rng = stream_rng(params.seed, SCENARIO_STREAM_BASE + w as u64);
            let mut sc = nominal
                .model
                .map_parameters(|x| x * (1.0 - eps + 2.0 * eps * rng.random::<f64>()));
            normalize_rows(&mut sc);
            sc
        })
        .collect();
    let pop = params.population as f64;
    Instance {
        horizon: params.horizon,
        states: nominal.labels.clone(),
        population: params.population,
        theta: vec![1.0 / n as f64; n],
        capacities: vec![params.c * pop; params.horizon - 1],
        absorbing_reward: 0.0,
        scenario_probabilities: vec![1.0 / params.n_scenarios as f64; params.n_scenarios],
        scenarios,
    }
    .into_validated()
}

/// Chronic-care instance: nominal from `mc_iterations` draws, then noise.
pub fn chronic_care_instance(params: &InstanceParams, mc_iterations: usize) -> Result<Instance> {
    params.check()?;
    let mut rng = stream_rng(params.seed, NOMINAL_STREAM);
    let nominal = estimate_nominal(&ChronicCareRules::default(), mc_iterations, &mut rng)?;
    generate_instance(params, &nominal)
}

/// Instance around an unrestricted random nominal model on `num_states` states.
pub fn random_instance(num_states: usize, params: &InstanceParams) -> Result<Instance> {
    params.check()?;
    if num_states == 0 {
        return Err(Error::InvalidParameter("at least one state is required".into()));
    }
    let mut rng = stream_rng(params.seed, NOMINAL_STREAM);
    let nominal = random_nominal(num_states, &mut rng);
    generate_instance(params, &nominal)
}
