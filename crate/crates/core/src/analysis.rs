//! Stochastic-value experiments on a single instance.
//!
//! * EVSS: relative loss of planning on one scenario (then repairing the
//!   plan to be feasible everywhere) versus the multi-scenario optimum.
//! * EVPI: mean wait-and-see value minus the multi-scenario optimum.
//! * Flexibility: gain of time-varying over stationary strategies.
//! * Capacity sweep: optimum as a function of the capacity fraction `c`.
//!
//! Scenario averages are weighted by the scenario probabilities, which is
//! the plain mean on generated instances.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluate::evaluate_strategy;
use crate::exact::{solve_exact, solve_exact_stationary, SearchLimits};
use crate::forward::expected_total;
use crate::model::{Instance, Strategy};
use crate::padp::{decode_path, solve_padp};

pub const DEFAULT_MAX_REPAIR_DISTANCE: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Exact,
    Padp,
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Solver::Exact),
            "padp" => Ok(Solver::Padp),
            other => Err(Error::InvalidParameter(format!("unknown solver {other:?}"))),
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Solver::Exact => "exact",
            Solver::Padp => "padp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisOptions {
    pub solver: Solver,
    pub limits: SearchLimits,
    pub max_repair_distance: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            solver: Solver::Exact,
            limits: SearchLimits::default(),
            max_repair_distance: DEFAULT_MAX_REPAIR_DISTANCE,
        }
    }
}

/// Optimal (or PADP) value and strategy of `inst`.
pub fn optimize(inst: &Instance, solver: Solver, limits: SearchLimits) -> Result<(f64, Strategy)> {
    match solver {
        Solver::Exact => {
            let res = solve_exact(inst, limits)?;
            let (value, strat) = res.optimum()?;
            Ok((value, strat.clone()))
        }
        Solver::Padp => {
            let res = solve_padp(inst)?;
            let strat = decode_path(&res)?;
            Ok((res.value.expect("solved result has a value"), strat))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Repair {
    pub strategy: Strategy,
    /// Number of flipped entries.
    pub distance: usize,
    /// `U` of the repaired strategy.
    pub value: f64,
    /// True when the distance cap was hit and the exact optimum was used.
    pub fallback: bool,
}

/// Calls `visit` with every `k`-subset of `0..m` in lexicographic order.
fn for_each_subset(m: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    if k > m {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx);
        let Some(pos) = (0..k).rev().find(|&p| idx[p] < m - k + p) else { return };
        idx[pos] += 1;
        for q in pos + 1..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
}

fn prefer(a: (f64, Strategy), b: (f64, Strategy)) -> (f64, Strategy) {
    if a.0 > b.0 || (a.0 == b.0 && a.1 <= b.1) {
        a
    } else {
        b
    }
}

/// Nearest capacity-feasible strategy to `target` in Hamming distance.
///
/// Distances `d = 0, 1, ...` are tried in turn; at the first distance with
/// a feasible flip set the candidate with the largest `U` wins, ties going
/// to the lexicographically smallest strategy. Past `max_distance` the
/// exact optimum is returned with its measured distance.
pub fn repair_strategy(inst: &Instance, target: &Strategy, max_distance: usize) -> Result<Repair> {
    target.check_dimensions(inst)?;
    let m = target.bits().len();
    for d in 0..=max_distance.min(m) {
        let mut subsets = Vec::new();
        for_each_subset(m, d, |s| subsets.push(s.to_vec()));
        let best = subsets
            .par_iter()
            .map(|flips| -> Result<Option<(f64, Strategy)>> {
                let mut cand = target.clone();
                for &k in flips {
                    cand.flip(k);
                }
                let eval = evaluate_strategy(inst, &cand)?;
                Ok(eval.feasible.then_some((eval.total_reward, cand)))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .reduce(prefer);
        if let Some((value, strategy)) = best {
            return Ok(Repair { strategy, distance: d, value, fallback: false });
        }
    }
    let res = solve_exact(inst, SearchLimits::default())?;
    let (value, strat) = res.optimum()?;
    Ok(Repair {
        distance: strat.hamming(target),
        strategy: strat.clone(),
        value,
        fallback: true,
    })
}

/// Per-scenario wait-and-see results.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ScenarioRow {
    pub scenario: usize,
    /// Optimum of the single-scenario problem.
    pub wait_and_see: f64,
    /// `U` of the repaired scenario strategy on the full instance.
    pub repaired_value: Option<f64>,
    pub repair_distance: Option<usize>,
    pub repair_fallback: Option<bool>,
    pub evss_percent: Option<f64>,
    #[serde(skip)]
    pub strategy: Strategy,
    /// Value of one individual under this scenario (kept for EVPI).
    #[serde(skip)]
    unit_value: f64,
}

fn wait_and_see(inst: &Instance, opts: &AnalysisOptions, repair: bool, here_and_now: f64) -> Result<Vec<ScenarioRow>> {
    (0..inst.num_scenarios())
        .into_par_iter()
        .map(|w| {
            let sub = inst.single_scenario(w);
            let (value, strategy) = optimize(&sub, opts.solver, opts.limits)?;
            let unit_value = evaluate_strategy(&sub, &strategy)?.scenario_values[0];
            let mut row = ScenarioRow {
                scenario: w,
                wait_and_see: value,
                repaired_value: None,
                repair_distance: None,
                repair_fallback: None,
                evss_percent: None,
                strategy,
                unit_value,
            };
            if repair {
                let fixed = repair_strategy(inst, &row.strategy, opts.max_repair_distance)?;
                if fixed.value == 0.0 {
                    return Err(Error::DivisionByZero(format!("repaired value of scenario {w} is zero")));
                }
                row.evss_percent = Some((here_and_now - fixed.value) / fixed.value * 100.0);
                row.repaired_value = Some(fixed.value);
                row.repair_distance = Some(fixed.distance);
                row.repair_fallback = Some(fixed.fallback);
            }
            Ok(row)
        })
        .collect()
}

fn weighted_mean(inst: &Instance, values: impl Iterator<Item = f64>) -> f64 {
    inst.scenario_probabilities.iter().zip(values).map(|(l, v)| l * v).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvssResult {
    pub evss_percent: f64,
    pub here_and_now: f64,
    pub per_scenario: Vec<ScenarioRow>,
}

pub fn compute_evss(inst: &Instance, opts: &AnalysisOptions) -> Result<EvssResult> {
    let (here_and_now, _) = optimize(inst, opts.solver, opts.limits)?;
    let per_scenario = wait_and_see(inst, opts, true, here_and_now)?;
    let evss_percent = weighted_mean(inst, per_scenario.iter().map(|r| r.evss_percent.unwrap_or(0.0)));
    Ok(EvssResult { evss_percent, here_and_now, per_scenario })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvpiResult {
    pub evpi_absolute: f64,
    pub evpi_percent: f64,
    pub here_and_now: f64,
    pub per_scenario: Vec<ScenarioRow>,
}

fn evpi_from_rows(inst: &Instance, here_and_now: f64, rows: &[ScenarioRow]) -> Result<(f64, f64)> {
    if here_and_now == 0.0 {
        return Err(Error::DivisionByZero("here-and-now value is zero".into()));
    }
    // totalled the same way as U so that wait-and-see >= here-and-now survives rounding
    let mean_ws = expected_total(inst, rows.iter().map(|r| r.unit_value));
    let evpi = mean_ws - here_and_now;
    Ok((evpi, evpi / here_and_now * 100.0))
}

/// Wait-and-see strategies are not repaired here: each one is feasible for
/// its own scenario, which is all the wait-and-see value needs.
pub fn compute_evpi(inst: &Instance, opts: &AnalysisOptions) -> Result<EvpiResult> {
    let (here_and_now, _) = optimize(inst, opts.solver, opts.limits)?;
    let per_scenario = wait_and_see(inst, opts, false, here_and_now)?;
    let (evpi_absolute, evpi_percent) = evpi_from_rows(inst, here_and_now, &per_scenario)?;
    Ok(EvpiResult { evpi_absolute, evpi_percent, here_and_now, per_scenario })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlexibilityResult {
    pub flexibility_percent: f64,
    pub here_and_now: f64,
    pub stationary_value: f64,
}

fn stationary_optimum(inst: &Instance, limits: SearchLimits) -> Result<f64> {
    let (value, _) = solve_exact_stationary(inst, limits)?.optimum()?;
    if value == 0.0 {
        return Err(Error::DivisionByZero("stationary optimum is zero".into()));
    }
    Ok(value)
}

pub fn compute_flexibility(inst: &Instance, opts: &AnalysisOptions) -> Result<FlexibilityResult> {
    let (here_and_now, _) = optimize(inst, opts.solver, opts.limits)?;
    let stationary_value = stationary_optimum(inst, opts.limits)?;
    Ok(FlexibilityResult {
        flexibility_percent: (here_and_now - stationary_value) / stationary_value * 100.0,
        here_and_now,
        stationary_value,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepRow {
    pub c: f64,
    pub value: f64,
    pub strategy: Strategy,
    /// Value dropped below the previous grid point.
    pub non_monotone: bool,
}

/// Re-solves with `C_t = c N` for each `c` of an ascending grid.
pub fn capacity_sweep(inst: &Instance, grid: &[f64], opts: &AnalysisOptions) -> Result<Vec<SweepRow>> {
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("capacity grid must be sorted ascending".into()));
    }
    if let Some(c) = grid.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
        return Err(Error::InvalidParameter(format!("capacity fraction {c} must be finite and non-negative")));
    }
    let solved = grid
        .par_iter()
        .map(|&c| optimize(&inst.with_capacity_fraction(c), opts.solver, opts.limits))
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<SweepRow> = Vec::with_capacity(grid.len());
    for (&c, (value, strategy)) in grid.iter().zip(solved) {
        let non_monotone = rows.last().is_some_and(|prev| value < prev.value);
        rows.push(SweepRow { c, value, strategy, non_monotone });
    }
    Ok(rows)
}

/// `start:stop:step` (inclusive of `stop` up to rounding).
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidParameter(format!("grid {spec:?} is not start:stop:step"));
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let [start, stop, step] = parts[..] else { return Err(bad()) };
    if step.is_nan() || step <= 0.0 || stop < start {
        return Err(bad());
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    // rounded to 12 decimals so 0.2 + 3 * 0.1 prints as 0.5
    Ok((0..=count)
        .map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Evss,
    Evpi,
    Flexibility,
    Sweep,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "evss" => Suite::Evss,
            "evpi" => Suite::Evpi,
            "flexibility" => Suite::Flexibility,
            "sweep" => Suite::Sweep,
            "all" => Suite::All,
            other => return Err(Error::InvalidParameter(format!("unknown suite {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AnalysisReport {
    pub solver: Solver,
    /// True when values come from PADP rather than the exact solver.
    pub approximate: bool,
    pub here_and_now: Option<f64>,
    pub evss_percent: Option<f64>,
    pub evpi_absolute: Option<f64>,
    pub evpi_percent: Option<f64>,
    pub per_scenario: Vec<ScenarioRow>,
    pub flexibility_percent: Option<f64>,
    pub stationary_value: Option<f64>,
    pub sweep: Vec<SweepRow>,
}

impl AnalysisReport {
    fn empty(solver: Solver) -> Self {
        AnalysisReport {
            solver,
            approximate: solver == Solver::Padp,
            here_and_now: None,
            evss_percent: None,
            evpi_absolute: None,
            evpi_percent: None,
            per_scenario: Vec::new(),
            flexibility_percent: None,
            stationary_value: None,
            sweep: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Flat CSV: `kind,scenario,c,value,wait_and_see,repaired_value,repair_distance,evss_percent,non_monotone`.
    ///
    /// `scenario` rows carry the per-scenario columns, `sweep` rows carry
    /// `c` and `value`, and each summary row (`here_and_now`, `evss_percent`,
    /// `evpi_absolute`, `evpi_percent`, `flexibility_percent`,
    /// `stationary_value`) carries only `value`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        fn opt<T: ToString>(v: Option<T>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "kind",
            "scenario",
            "c",
            "value",
            "wait_and_see",
            "repaired_value",
            "repair_distance",
            "evss_percent",
            "non_monotone",
        ])?;
        for r in &self.per_scenario {
            w.write_record([
                "scenario".to_string(),
                r.scenario.to_string(),
                String::new(),
                String::new(),
                r.wait_and_see.to_string(),
                opt(r.repaired_value),
                opt(r.repair_distance),
                opt(r.evss_percent),
                String::new(),
            ])?;
        }
        for r in &self.sweep {
            w.write_record([
                "sweep".to_string(),
                String::new(),
                r.c.to_string(),
                r.value.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                r.non_monotone.to_string(),
            ])?;
        }
        let summary = [
            ("here_and_now", self.here_and_now),
            ("evss_percent", self.evss_percent),
            ("evpi_absolute", self.evpi_absolute),
            ("evpi_percent", self.evpi_percent),
            ("flexibility_percent", self.flexibility_percent),
            ("stationary_value", self.stationary_value),
        ];
        for (kind, value) in summary {
            if let Some(v) = value {
                let mut rec = vec![String::new(); 9];
                rec[0] = kind.to_string();
                rec[3] = v.to_string();
                w.write_record(&rec)?;
            }
        }
        w.flush().map_err(|e| Error::io("analysis csv", e))?;
        Ok(())
    }
}

/// Runs one suite (or all) and assembles the report.
pub fn run_suite(inst: &Instance, suite: Suite, grid: &[f64], opts: &AnalysisOptions) -> Result<AnalysisReport> {
    let mut report = AnalysisReport::empty(opts.solver);
    let wants = |s: Suite| suite == s || suite == Suite::All;

    if wants(Suite::Evss) || wants(Suite::Evpi) || wants(Suite::Flexibility) {
        let (here_and_now, _) = optimize(inst, opts.solver, opts.limits)?;
        report.here_and_now = Some(here_and_now);
        if wants(Suite::Evss) || wants(Suite::Evpi) {
            let rows = wait_and_see(inst, opts, wants(Suite::Evss), here_and_now)?;
            if wants(Suite::Evss) {
                report.evss_percent = Some(weighted_mean(inst, rows.iter().map(|r| r.evss_percent.unwrap_or(0.0))));
            }
            if wants(Suite::Evpi) {
                let (abs, pct) = evpi_from_rows(inst, here_and_now, &rows)?;
                report.evpi_absolute = Some(abs);
                report.evpi_percent = Some(pct);
            }
            report.per_scenario = rows;
        }
        if wants(Suite::Flexibility) {
            let stationary = stationary_optimum(inst, opts.limits)?;
            report.stationary_value = Some(stationary);
            report.flexibility_percent = Some((here_and_now - stationary) / stationary * 100.0);
        }
    }
    if wants(Suite::Sweep) {
        report.sweep = capacity_sweep(inst, grid, opts)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Scenario;

    fn two_state(capacity: f64, horizon: usize) -> Instance {
        let sc = Scenario::from_nested(
            vec![
                vec![vec![0.7, 0.2], vec![0.8, 0.15]],
                vec![vec![0.1, 0.8], vec![0.3, 0.65]],
            ],
            vec![vec![0.1, 0.05], vec![0.1, 0.05]],
            vec![vec![100.0, 150.0], vec![200.0, 260.0]],
            vec![125.0, 230.0],
        )
        .unwrap();
        Instance {
            horizon,
            states: vec!["a".into(), "b".into()],
            population: 10,
            theta: vec![0.5, 0.5],
            capacities: vec![capacity; horizon - 1],
            absorbing_reward: 0.0,
            scenario_probabilities: vec![1.0],
            scenarios: vec![sc],
        }
        .into_validated()
        .unwrap()
    }

    #[test]
    fn subsets_in_lexicographic_order() {
        let mut seen = Vec::new();
        for_each_subset(4, 2, |s| seen.push(s.to_vec()));
        assert_eq!(seen, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        let mut count = 0;
        for_each_subset(3, 0, |s| {
            assert!(s.is_empty());
            count += 1;
        });
        assert_eq!(count, 1);
    }

    #[test]
    fn feasible_target_is_unchanged() {
        let inst = two_state(10.0, 3);
        let target = Strategy::from_rows(vec![vec![1, 0], vec![0, 1]]).unwrap();
        let r = repair_strategy(&inst, &target, 6).unwrap();
        assert_eq!((r.distance, &r.strategy), (0, &target));
    }

    #[test]
    fn zero_capacity_flips_every_one() {
        let inst = two_state(0.0, 3);
        let target = Strategy::from_rows(vec![vec![1, 1], vec![1, 1]]).unwrap();
        let r = repair_strategy(&inst, &target, 6).unwrap();
        assert_eq!(r.distance, 4);
        assert_eq!(r.strategy, Strategy::zeros(2, 2));
        assert!(!r.fallback);
    }

    #[test]
    fn distance_cap_falls_back_to_exact() {
        let inst = two_state(0.0, 3);
        let target = Strategy::from_rows(vec![vec![1, 1], vec![1, 1]]).unwrap();
        let r = repair_strategy(&inst, &target, 1).unwrap();
        assert!(r.fallback);
        assert_eq!(r.distance, 4);
    }

    #[test]
    fn single_scenario_values_vanish() {
        let inst = two_state(4.0, 4);
        let report = run_suite(&inst, Suite::All, &[0.0, 1.0], &AnalysisOptions::default()).unwrap();
        assert_eq!(report.evss_percent, Some(0.0));
        assert_eq!(report.evpi_absolute, Some(0.0));
        assert!(report.flexibility_percent.unwrap() >= 0.0);
        assert!(report.sweep[1].value >= report.sweep[0].value);
    }

    #[test]
    fn flexibility_is_zero_at_two_periods() {
        let inst = two_state(4.0, 2);
        let f = compute_flexibility(&inst, &AnalysisOptions::default()).unwrap();
        assert_eq!(f.flexibility_percent, 0.0);
    }

    #[test]
    fn grid_parsing() {
        let g = parse_grid("0.2:0.8:0.1").unwrap();
        assert_eq!(g, vec![0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]);
        assert!(parse_grid("0.2:0.8").is_err());
        assert!(parse_grid("0.8:0.2:0.1").is_err());
    }

    #[test]
    fn unsorted_grid_is_rejected() {
        let inst = two_state(4.0, 3);
        assert!(capacity_sweep(&inst, &[0.5, 0.2], &AnalysisOptions::default()).is_err());
    }
}
