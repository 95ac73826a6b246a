//! Domain types for capacity-constrained multi-model MDPs.
//!
//! States are indexed `0..n` and exclude the absorbing state, which only
//! appears through the `Q` arrays and the cumulative absorbed mass `Z`.
//! Actions are binary: `0` is regular care and `1` is the capacity-limited
//! special care. Decision epochs are numbered `1..T` (exclusive of `T`).

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for every probability identity.
pub const PROBABILITY_TOLERANCE: f64 = 1e-9;

/// Absolute slack (headcount units) allowed on `N * sum_i X_{i,1} <= C_t`.
pub const CAPACITY_SLACK: f64 = 1e-6;

/// Number of actions; the action space is always `{0, 1}`.
pub const NUM_ACTIONS: usize = 2;

/// `(P, Q, r, R)` as nested vectors.
pub type NestedParameters = (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>);

/// One model of the dynamics: transition arrays and rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioRepr", into = "ScenarioRepr")]
pub struct Scenario {
    n: usize,
    // [i][a][j] flattened
    p: Vec<f64>,
    // [i][a]
    q: Vec<f64>,
    // [i][a]
    r: Vec<f64>,
    // [i]
    terminal: Vec<f64>,
}

impl Scenario {
    pub fn zeros(num_states: usize) -> Self {
        Scenario {
            n: num_states,
            p: vec![0.0; num_states * NUM_ACTIONS * num_states],
            q: vec![0.0; num_states * NUM_ACTIONS],
            r: vec![0.0; num_states * NUM_ACTIONS],
            terminal: vec![0.0; num_states],
        }
    }

    /// Builds a scenario from nested `P[i][a][j]`, `Q[i][a]`, `r[i][a]`, `R[i]`.
    pub fn from_nested(
        p: Vec<Vec<Vec<f64>>>,
        q: Vec<Vec<f64>>,
        r: Vec<Vec<f64>>,
        terminal: Vec<f64>,
    ) -> Result<Self> {
        let n = p.len();
        let shape = |what: &str| Error::DimensionMismatch(format!("scenario {what} has the wrong shape for {n} states"));
        if q.len() != n || r.len() != n || terminal.len() != n {
            return Err(shape("Q/r/R"));
        }
        let mut out = Scenario::zeros(n);
        for (i, rows) in p.iter().enumerate() {
            if rows.len() != NUM_ACTIONS {
                return Err(shape("P"));
            }
            for (a, row) in rows.iter().enumerate() {
                if row.len() != n {
                    return Err(shape("P"));
                }
                out.p_row_mut(i, a).copy_from_slice(row);
            }
        }
        for i in 0..n {
            if q[i].len() != NUM_ACTIONS || r[i].len() != NUM_ACTIONS {
                return Err(shape("Q/r"));
            }
            for a in 0..NUM_ACTIONS {
                out.set_q(i, a, q[i][a]);
                out.set_reward(i, a, r[i][a]);
            }
            out.set_terminal_reward(i, terminal[i]);
        }
        Ok(out)
    }

    pub fn num_states(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn p(&self, i: usize, a: usize, j: usize) -> f64 {
        self.p[(i * NUM_ACTIONS + a) * self.n + j]
    }

    #[inline]
    pub fn p_row(&self, i: usize, a: usize) -> &[f64] {
        let start = (i * NUM_ACTIONS + a) * self.n;
        &self.p[start..start + self.n]
    }

    pub fn p_row_mut(&mut self, i: usize, a: usize) -> &mut [f64] {
        let start = (i * NUM_ACTIONS + a) * self.n;
        &mut self.p[start..start + self.n]
    }

    pub fn set_p(&mut self, i: usize, a: usize, j: usize, value: f64) {
        self.p[(i * NUM_ACTIONS + a) * self.n + j] = value;
    }

    #[inline]
    pub fn q(&self, i: usize, a: usize) -> f64 {
        self.q[i * NUM_ACTIONS + a]
    }

    pub fn set_q(&mut self, i: usize, a: usize, value: f64) {
        self.q[i * NUM_ACTIONS + a] = value;
    }

    #[inline]
    pub fn reward(&self, i: usize, a: usize) -> f64 {
        self.r[i * NUM_ACTIONS + a]
    }

    pub fn set_reward(&mut self, i: usize, a: usize, value: f64) {
        self.r[i * NUM_ACTIONS + a] = value;
    }

    #[inline]
    pub fn terminal_reward(&self, i: usize) -> f64 {
        self.terminal[i]
    }

    pub fn set_terminal_reward(&mut self, i: usize, value: f64) {
        self.terminal[i] = value;
    }

    /// `sum_j P_{iaj} + Q_{ia}`.
    pub fn row_sum(&self, i: usize, a: usize) -> f64 {
        self.p_row(i, a).iter().sum::<f64>() + self.q(i, a)
    }

    pub fn max_reward(&self) -> f64 {
        self.r.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_terminal_reward(&self) -> f64 {
        self.terminal.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Applies `f` to every scalar parameter in a fixed order (P, Q, r, R).
    pub fn map_parameters(&self, mut f: impl FnMut(f64) -> f64) -> Scenario {
        Scenario {
            n: self.n,
            p: self.p.iter().map(|&x| f(x)).collect(),
            q: self.q.iter().map(|&x| f(x)).collect(),
            r: self.r.iter().map(|&x| f(x)).collect(),
            terminal: self.terminal.iter().map(|&x| f(x)).collect(),
        }
    }

    pub(crate) fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.p
            .iter()
            .chain(&self.q)
            .chain(&self.r)
            .chain(&self.terminal)
            .copied()
    }

    pub(crate) fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.p
            .iter_mut()
            .chain(self.q.iter_mut())
            .chain(self.r.iter_mut())
            .chain(self.terminal.iter_mut())
    }

    pub fn to_nested(&self) -> NestedParameters {
        let n = self.n;
        let p = (0..n)
            .map(|i| (0..NUM_ACTIONS).map(|a| self.p_row(i, a).to_vec()).collect())
            .collect();
        let q = (0..n)
            .map(|i| (0..NUM_ACTIONS).map(|a| self.q(i, a)).collect())
            .collect();
        let r = (0..n)
            .map(|i| (0..NUM_ACTIONS).map(|a| self.reward(i, a)).collect())
            .collect();
        (p, q, r, self.terminal.clone())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioRepr {
    #[serde(rename = "P")]
    p: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    terminal: Vec<f64>,
}

impl TryFrom<ScenarioRepr> for Scenario {
    type Error = Error;

    fn try_from(repr: ScenarioRepr) -> Result<Self> {
        Scenario::from_nested(repr.p, repr.q, repr.r, repr.terminal)
    }
}

impl From<Scenario> for ScenarioRepr {
    fn from(s: Scenario) -> Self {
        let (p, q, r, terminal) = s.to_nested();
        ScenarioRepr { p, q, r, terminal }
    }
}

/// A capacity-constrained multi-model MDP instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    /// Number of periods `T`; decision epochs are `1..T`.
    #[serde(rename = "T")]
    pub horizon: usize,
    /// Labels of the non-absorbing states.
    pub states: Vec<String>,
    /// Population size `N`.
    #[serde(rename = "N")]
    pub population: u64,
    /// Initial distribution over non-absorbing states.
    pub theta: Vec<f64>,
    /// `C_t` for decision epochs `1..T`, in expected-headcount units.
    pub capacities: Vec<f64>,
    pub absorbing_reward: f64,
    #[serde(rename = "lambda")]
    pub scenario_probabilities: Vec<f64>,
    pub scenarios: Vec<Scenario>,
}

impl Instance {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_epochs(&self) -> usize {
        self.horizon.saturating_sub(1)
    }

    pub fn num_scenarios(&self) -> usize {
        self.scenarios.len()
    }

    /// `C_t` for a 1-based decision epoch.
    pub fn capacity(&self, epoch: usize) -> f64 {
        self.capacities[epoch - 1]
    }

    /// Same instance restricted to scenario `omega` with probability one.
    pub fn single_scenario(&self, omega: usize) -> Instance {
        Instance {
            scenarios: vec![self.scenarios[omega].clone()],
            scenario_probabilities: vec![1.0],
            ..self.clone()
        }
    }

    /// Same instance with `C_t = fraction * N` for every epoch.
    pub fn with_capacity_fraction(&self, fraction: f64) -> Instance {
        let cap = fraction * self.population as f64;
        Instance {
            capacities: vec![cap; self.num_epochs()],
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Vec<ValidationIssue> {
        validate_instance(self)
    }

    /// Validates and returns the instance, or the full list of issues.
    pub fn into_validated(self) -> Result<Self> {
        let issues = validate_instance(&self);
        if issues.is_empty() {
            Ok(self)
        } else {
            Err(Error::Validation(issues))
        }
    }
}

/// One violated instance invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    HorizonTooShort { horizon: usize },
    NoStates,
    NoScenarios,
    ZeroPopulation,
    ScenarioCountMismatch { scenarios: usize, probabilities: usize },
    ThetaLength { expected: usize, got: usize },
    ThetaNegative { state: usize, value: f64 },
    ThetaSum { sum: f64 },
    ScenarioProbabilityNonPositive { scenario: usize, value: f64 },
    ScenarioProbabilitySum { sum: f64 },
    CapacityLength { expected: usize, got: usize },
    CapacityNegative { epoch: usize, value: f64 },
    ScenarioStateCount { scenario: usize, expected: usize, got: usize },
    NegativeTransition { scenario: usize, state: usize, action: usize, to: usize, value: f64 },
    NegativeAbsorption { scenario: usize, state: usize, action: usize, value: f64 },
    RowSum { scenario: usize, state: usize, action: usize, sum: f64 },
    NonFinite { what: String },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ValidationIssue::*;
        match self {
            HorizonTooShort { horizon } => write!(f, "horizon T = {horizon} must be at least 2"),
            NoStates => write!(f, "state list is empty"),
            NoScenarios => write!(f, "scenario list is empty"),
            ZeroPopulation => write!(f, "population N must be positive"),
            ScenarioCountMismatch { scenarios, probabilities } => write!(
                f,
                "{scenarios} scenarios but {probabilities} scenario probabilities"
            ),
            ThetaLength { expected, got } => {
                write!(f, "theta has {got} entries, expected {expected}")
            }
            ThetaNegative { state, value } => write!(f, "theta[{state}] = {value} is negative"),
            ThetaSum { sum } => write!(f, "initial distribution theta sums {sum}"),
            ScenarioProbabilityNonPositive { scenario, value } => {
                write!(f, "lambda[{scenario}] = {value} is not positive")
            }
            ScenarioProbabilitySum { sum } => write!(f, "scenario probabilities sum {sum}"),
            CapacityLength { expected, got } => {
                write!(f, "capacities has {got} entries, expected T-1 = {expected}")
            }
            CapacityNegative { epoch, value } => {
                write!(f, "capacity C_{epoch} = {value} is negative")
            }
            ScenarioStateCount { scenario, expected, got } => write!(
                f,
                "scenario {scenario} covers {got} states, expected {expected}"
            ),
            NegativeTransition { scenario, state, action, to, value } => write!(
                f,
                "scenario {scenario}: P[{state}][{action}][{to}] = {value} is negative"
            ),
            NegativeAbsorption { scenario, state, action, value } => write!(
                f,
                "scenario {scenario}: Q[{state}][{action}] = {value} is negative"
            ),
            RowSum { scenario, state, action, sum } => write!(
                f,
                "scenario {scenario}: sum_j P[{state}][{action}][j] + Q[{state}][{action}] = {sum} (deficit {})",
                1.0 - sum
            ),
            NonFinite { what } => write!(f, "{what} is not finite"),
        }
    }
}

/// Lists every violated invariant of `inst`. Empty means valid.
pub fn validate_instance(inst: &Instance) -> Vec<ValidationIssue> {
    use ValidationIssue::*;
    let mut issues = Vec::new();
    let n = inst.num_states();

    if inst.horizon < 2 {
        issues.push(HorizonTooShort { horizon: inst.horizon });
    }
    if n == 0 {
        issues.push(NoStates);
    }
    if inst.scenarios.is_empty() {
        issues.push(NoScenarios);
    }
    if inst.population == 0 {
        issues.push(ZeroPopulation);
    }
    if !inst.absorbing_reward.is_finite() {
        issues.push(NonFinite { what: "absorbing_reward".into() });
    }

    if inst.theta.len() != n {
        issues.push(ThetaLength { expected: n, got: inst.theta.len() });
    } else {
        for (i, &v) in inst.theta.iter().enumerate() {
            if !v.is_finite() {
                issues.push(NonFinite { what: format!("theta[{i}]") });
            } else if v < 0.0 {
                issues.push(ThetaNegative { state: i, value: v });
            }
        }
        let sum: f64 = inst.theta.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
            issues.push(ThetaSum { sum });
        }
    }

    if inst.scenarios.len() != inst.scenario_probabilities.len() {
        issues.push(ScenarioCountMismatch {
            scenarios: inst.scenarios.len(),
            probabilities: inst.scenario_probabilities.len(),
        });
    }
    for (w, &v) in inst.scenario_probabilities.iter().enumerate() {
        if !(v.is_finite() && v > 0.0) {
            issues.push(ScenarioProbabilityNonPositive { scenario: w, value: v });
        }
    }
    if !inst.scenario_probabilities.is_empty() {
        let sum: f64 = inst.scenario_probabilities.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
            issues.push(ScenarioProbabilitySum { sum });
        }
    }

    let epochs = inst.num_epochs();
    if inst.capacities.len() != epochs {
        issues.push(CapacityLength { expected: epochs, got: inst.capacities.len() });
    }
    for (k, &c) in inst.capacities.iter().enumerate() {
        if !c.is_finite() {
            issues.push(NonFinite { what: format!("capacity C_{}", k + 1) });
        } else if c < 0.0 {
            issues.push(CapacityNegative { epoch: k + 1, value: c });
        }
    }

    for (w, sc) in inst.scenarios.iter().enumerate() {
        if sc.num_states() != n {
            issues.push(ScenarioStateCount { scenario: w, expected: n, got: sc.num_states() });
            continue;
        }
        if sc.parameters().any(|x| !x.is_finite()) {
            issues.push(NonFinite { what: format!("a parameter of scenario {w}") });
            continue;
        }
        for i in 0..n {
            for a in 0..NUM_ACTIONS {
                for j in 0..n {
                    let v = sc.p(i, a, j);
                    if v < 0.0 {
                        issues.push(NegativeTransition { scenario: w, state: i, action: a, to: j, value: v });
                    }
                }
                let qv = sc.q(i, a);
                if qv < 0.0 {
                    issues.push(NegativeAbsorption { scenario: w, state: i, action: a, value: qv });
                }
                let sum = sc.row_sum(i, a);
                if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
                    issues.push(RowSum { scenario: w, state: i, action: a, sum });
                }
            }
        }
    }
    issues
}

/// Parses an instance from canonical JSON and validates it.
pub fn instance_from_json(text: &str) -> Result<Instance> {
    let inst: Instance = serde_json::from_str(text)?;
    inst.into_validated()
}

pub fn instance_to_json(inst: &Instance) -> Result<String> {
    Ok(serde_json::to_string_pretty(inst)?)
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    instance_from_json(&text)
}

pub fn save_instance(inst: &Instance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = instance_to_json(inst)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// A deterministic strategy: one binary action per (decision epoch, state).
///
/// Ordering is lexicographic over the row-major `(t, i)` bit sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "StrategyRepr", into = "StrategyRepr")]
pub struct Strategy {
    epochs: usize,
    states: usize,
    bits: Vec<u8>,
}

impl Strategy {
    pub fn zeros(epochs: usize, states: usize) -> Self {
        Strategy { epochs, states, bits: vec![0; epochs * states] }
    }

    /// Builds from rows indexed `[t-1][i]`.
    pub fn from_rows(rows: Vec<Vec<u8>>) -> Result<Self> {
        let epochs = rows.len();
        let states = rows.first().map_or(0, Vec::len);
        let mut bits = Vec::with_capacity(epochs * states);
        for (k, row) in rows.into_iter().enumerate() {
            if row.len() != states {
                return Err(Error::DimensionMismatch(format!(
                    "strategy row {} has {} entries, expected {states}",
                    k + 1,
                    row.len()
                )));
            }
            if let Some(bad) = row.iter().find(|&&b| b > 1) {
                return Err(Error::InvalidParameter(format!(
                    "strategy entry {bad} in row {} is not binary",
                    k + 1
                )));
            }
            bits.extend(row);
        }
        Ok(Strategy { epochs, states, bits })
    }

    /// Repeats one policy over every epoch.
    pub fn stationary(policy: &[u8], epochs: usize) -> Self {
        let mut bits = Vec::with_capacity(epochs * policy.len());
        for _ in 0..epochs {
            bits.extend_from_slice(policy);
        }
        Strategy { epochs, states: policy.len(), bits }
    }

    pub fn from_bits(epochs: usize, states: usize, bits: Vec<u8>) -> Self {
        assert_eq!(bits.len(), epochs * states, "bit vector length");
        assert!(bits.iter().all(|&b| b <= 1), "strategy bits must be 0/1");
        Strategy { epochs, states, bits }
    }

    pub fn num_epochs(&self) -> usize {
        self.epochs
    }

    pub fn num_states(&self) -> usize {
        self.states
    }

    /// Action vector for 1-based decision epoch `epoch`.
    #[inline]
    pub fn policy(&self, epoch: usize) -> &[u8] {
        let k = epoch - 1;
        &self.bits[k * self.states..(k + 1) * self.states]
    }

    #[inline]
    pub fn action(&self, epoch: usize, state: usize) -> u8 {
        self.bits[(epoch - 1) * self.states + state]
    }

    /// Row-major `(t, i)` bits.
    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    /// Flips the entry at row-major position `index`.
    pub fn flip(&mut self, index: usize) {
        self.bits[index] ^= 1;
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.bits.chunks(self.states.max(1)).map(<[u8]>::to_vec).collect()
    }

    pub fn hamming(&self, other: &Strategy) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count()
    }

    pub fn is_stationary(&self) -> bool {
        (2..=self.epochs).all(|t| self.policy(t) == self.policy(1))
    }

    pub fn check_dimensions(&self, inst: &Instance) -> Result<()> {
        if self.epochs != inst.num_epochs() || self.states != inst.num_states() {
            return Err(Error::DimensionMismatch(format!(
                "strategy is {}x{}, instance needs {}x{} (epochs x states)",
                self.epochs,
                self.states,
                inst.num_epochs(),
                inst.num_states()
            )));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StrategyRepr {
    pi: Vec<Vec<u8>>,
}

impl TryFrom<StrategyRepr> for Strategy {
    type Error = Error;

    fn try_from(repr: StrategyRepr) -> Result<Self> {
        Strategy::from_rows(repr.pi)
    }
}

impl From<Strategy> for StrategyRepr {
    fn from(s: Strategy) -> Self {
        StrategyRepr { pi: s.rows() }
    }
}

pub fn load_strategy(path: impl AsRef<Path>) -> Result<Strategy> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_strategy(strat: &Strategy, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string(strat)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Occupancy measures of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOccupancy {
    /// `X^t_{ia}` flattened `[t-1][i][a]` over decision epochs.
    pub x: Vec<f64>,
    /// Cumulative absorbed mass `Z^t` for periods `1..=T`; `Z^1 = 0`.
    pub z: Vec<f64>,
    /// Terminal-period occupancy `Y_i`.
    pub y: Vec<f64>,
}

impl ScenarioOccupancy {
    pub fn zeros(horizon: usize, n: usize) -> Self {
        ScenarioOccupancy {
            x: vec![0.0; horizon.saturating_sub(1) * n * NUM_ACTIONS],
            z: vec![0.0; horizon],
            y: vec![0.0; n],
        }
    }

    fn num_states(&self) -> usize {
        self.y.len()
    }

    #[inline]
    pub fn x(&self, epoch: usize, i: usize, a: usize) -> f64 {
        self.x[((epoch - 1) * self.num_states() + i) * NUM_ACTIONS + a]
    }

    pub fn x_mut(&mut self, epoch: usize, i: usize, a: usize) -> &mut f64 {
        let n = self.num_states();
        &mut self.x[((epoch - 1) * n + i) * NUM_ACTIONS + a]
    }

    /// `Z^t` for period `t` in `1..=T`.
    #[inline]
    pub fn z(&self, period: usize) -> f64 {
        self.z[period - 1]
    }

    /// `Z^t - Z^{t-1}` for `t` in `2..=T`.
    pub fn delta_z(&self, period: usize) -> f64 {
        self.z(period) - self.z(period - 1)
    }
}

/// Per-scenario occupancy measures induced by one strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyTrajectory {
    pub horizon: usize,
    pub num_states: usize,
    pub scenarios: Vec<ScenarioOccupancy>,
}

impl Serialize for OccupancyTrajectory {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Out {
            #[serde(rename = "X")]
            x: Vec<Vec<Vec<[f64; 2]>>>,
            #[serde(rename = "Z")]
            z: Vec<Vec<f64>>,
            #[serde(rename = "Y")]
            y: Vec<Vec<f64>>,
        }
        let n = self.num_states;
        let out = Out {
            x: self
                .scenarios
                .iter()
                .map(|s| {
                    (1..self.horizon)
                        .map(|t| (0..n).map(|i| [s.x(t, i, 0), s.x(t, i, 1)]).collect())
                        .collect()
                })
                .collect(),
            // periods 2..=T
            z: self.scenarios.iter().map(|s| s.z[1..].to_vec()).collect(),
            y: self.scenarios.iter().map(|s| s.y.clone()).collect(),
        };
        out.serialize(serializer)
    }
}

/// Parameters of a generated instance `I(|Omega|, T, c, eps)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceParams {
    pub n_scenarios: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    /// Capacity fraction `c`; every `C_t = c * N`.
    pub c: f64,
    pub epsilon: f64,
    pub seed: u64,
    #[serde(rename = "N", default = "default_population")]
    pub population: u64,
}

pub const DEFAULT_POPULATION: u64 = 1000;

fn default_population() -> u64 {
    DEFAULT_POPULATION
}

impl InstanceParams {
    pub fn new(n_scenarios: usize, horizon: usize, c: f64, epsilon: f64, seed: u64) -> Self {
        InstanceParams { n_scenarios, horizon, c, epsilon, seed, population: DEFAULT_POPULATION }
    }

    pub fn check(&self) -> Result<()> {
        if self.n_scenarios == 0 {
            return Err(Error::InvalidParameter("number of scenarios must be at least 1".into()));
        }
        if self.horizon < 2 {
            return Err(Error::InvalidParameter(format!("T = {} must be at least 2", self.horizon)));
        }
        if !(self.c > 0.0 && self.c <= 1.0) {
            return Err(Error::InvalidParameter(format!("c = {} must lie in (0, 1]", self.c)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon = {} must lie in (0, 1)",
                self.epsilon
            )));
        }
        if self.population == 0 {
            return Err(Error::InvalidParameter("N must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_state(p_stay: f64, q: f64) -> Instance {
        let sc = Scenario::from_nested(
            vec![vec![vec![p_stay], vec![p_stay]]],
            vec![vec![q, q]],
            vec![vec![5.0, 6.0]],
            vec![7.0],
        )
        .unwrap();
        Instance {
            horizon: 2,
            states: vec!["s0".into()],
            population: 10,
            theta: vec![1.0],
            capacities: vec![10.0],
            absorbing_reward: 0.0,
            scenario_probabilities: vec![1.0],
            scenarios: vec![sc],
        }
    }

    #[test]
    fn identity_scenario_is_valid() {
        assert!(validate_instance(&one_state(1.0, 0.0)).is_empty());
    }

    #[test]
    fn row_deficit_is_reported() {
        let issues = validate_instance(&one_state(0.9, 0.08));
        assert_eq!(issues.len(), 2);
        match &issues[0] {
            ValidationIssue::RowSum { state, action, sum, .. } => {
                assert_eq!((*state, *action), (0, 0));
                assert!((1.0 - sum - 0.02).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(issues[0].to_string().contains("deficit 0.02"));
    }

    #[test]
    fn scenario_probability_sum_is_reported() {
        let mut inst = one_state(1.0, 0.0);
        inst.scenarios.push(inst.scenarios[0].clone());
        inst.scenario_probabilities = vec![0.5, 0.6];
        let issues = validate_instance(&inst);
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].to_string(), "scenario probabilities sum 1.1");
    }

    #[test]
    fn structural_issues() {
        let mut inst = one_state(1.0, 0.0);
        inst.horizon = 1;
        inst.capacities = vec![-1.0];
        inst.theta = vec![0.5];
        let issues = validate_instance(&inst);
        assert!(issues.contains(&ValidationIssue::HorizonTooShort { horizon: 1 }));
        assert!(issues.contains(&ValidationIssue::CapacityLength { expected: 0, got: 1 }));
        assert!(issues.contains(&ValidationIssue::CapacityNegative { epoch: 1, value: -1.0 }));
        assert!(issues.contains(&ValidationIssue::ThetaSum { sum: 0.5 }));
    }

    #[test]
    fn missing_field_is_named() {
        let inst = one_state(1.0, 0.0);
        let mut value = serde_json::to_value(&inst).unwrap();
        value.as_object_mut().unwrap().remove("capacities");
        let err = instance_from_json(&value.to_string()).unwrap_err();
        assert!(err.to_string().contains("capacities"), "{err}");
    }

    #[test]
    fn unknown_field_is_rejected() {
        let inst = one_state(1.0, 0.0);
        let mut value = serde_json::to_value(&inst).unwrap();
        value.as_object_mut().unwrap().insert("foo".into(), 1.into());
        let err = instance_from_json(&value.to_string()).unwrap_err();
        assert!(err.to_string().contains("foo"), "{err}");

        let mut value = serde_json::to_value(&inst).unwrap();
        value["scenarios"][0].as_object_mut().unwrap().insert("extra".into(), 1.into());
        let err = instance_from_json(&value.to_string()).unwrap_err();
        assert!(err.to_string().contains("extra"), "{err}");
    }

    #[test]
    fn invalid_instance_aborts_load() {
        let text = instance_to_json(&one_state(0.9, 0.05)).unwrap();
        assert!(matches!(instance_from_json(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn strategy_json_shape() {
        let s = Strategy::from_rows(vec![vec![0, 1], vec![1, 1]]).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(text, r#"{"pi":[[0,1],[1,1]]}"#);
        let back: Strategy = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<Strategy>(r#"{"pi":[[0,2]]}"#).is_err());
        assert!(serde_json::from_str::<Strategy>(r#"{"pi":[[0,1],[1]]}"#).is_err());
    }

    #[test]
    fn strategy_order_is_row_major_lexicographic() {
        let a = Strategy::from_rows(vec![vec![0, 1], vec![1, 1]]).unwrap();
        let b = Strategy::from_rows(vec![vec![1, 0], vec![0, 0]]).unwrap();
        assert!(a < b);
        assert_eq!(a.hamming(&b), 4);
        assert_eq!(a.policy(2), &[1, 1]);
    }

    #[test]
    fn params_domain() {
        assert!(InstanceParams::new(5, 5, 0.4, 0.25, 1).check().is_ok());
        assert!(InstanceParams::new(5, 5, 0.4, 1.5, 1).check().is_err());
        assert!(InstanceParams::new(5, 5, 0.0, 0.25, 1).check().is_err());
        assert!(InstanceParams::new(0, 5, 0.4, 0.25, 1).check().is_err());
    }
}
