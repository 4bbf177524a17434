//! Bipartite Bell scenarios, behaviors, correlators, and Bell expressions.
//!
//! Inputs and outcomes are 0-based. For binary scenarios outcome `0` is the
//! `+1` eigenvalue and outcome `1` the `-1` eigenvalue, so that
//! `<A_x B_y> = sum_ab (-1)^(a+b) P(ab|xy)`.
//!
//! Probability tables are stored row-major over `(a, b, x, y)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for normalization and no-signalling checks.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Largest number of deterministic strategies [`BellExpression::local_bound`] will enumerate.
pub const ENUMERATION_LIMIT: u128 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "ScenarioRepr", into = "ScenarioRepr")]
pub struct Scenario {
    inputs_a: usize,
    inputs_b: usize,
    outputs_a: usize,
    outputs_b: usize,
}

#[derive(Serialize, Deserialize)]
struct ScenarioRepr {
    x: usize,
    y: usize,
    a: usize,
    b: usize,
}

impl TryFrom<ScenarioRepr> for Scenario {
    type Error = Error;

    fn try_from(r: ScenarioRepr) -> Result<Self> {
        Scenario::new(r.x, r.y, r.a, r.b)
    }
}

impl From<Scenario> for ScenarioRepr {
    fn from(s: Scenario) -> Self {
        ScenarioRepr { x: s.inputs_a, y: s.inputs_b, a: s.outputs_a, b: s.outputs_b }
    }
}

/// One entry `(a, b, x, y)` of a probability or coefficient table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Cell {
    pub a: usize,
    pub b: usize,
    pub x: usize,
    pub y: usize,
}

impl Scenario {
    pub fn new(inputs_a: usize, inputs_b: usize, outputs_a: usize, outputs_b: usize) -> Result<Self> {
        if inputs_a == 0 || inputs_b == 0 || outputs_a == 0 || outputs_b == 0 {
            return Err(Error::InvalidScenario("all cardinalities must be at least 1".into()));
        }
        outputs_a
            .checked_mul(outputs_b)
            .and_then(|n| n.checked_mul(inputs_a))
            .and_then(|n| n.checked_mul(inputs_b))
            .ok_or_else(|| Error::InvalidScenario("table size overflows".into()))?;
        Ok(Scenario { inputs_a, inputs_b, outputs_a, outputs_b })
    }

    /// Two-outcome scenario with the given numbers of inputs.
    pub fn binary(inputs_a: usize, inputs_b: usize) -> Result<Self> {
        Scenario::new(inputs_a, inputs_b, 2, 2)
    }

    /// The 2-input, 2-outcome scenario of the CHSH inequality.
    pub fn chsh() -> Self {
        Scenario { inputs_a: 2, inputs_b: 2, outputs_a: 2, outputs_b: 2 }
    }

    pub fn inputs_a(&self) -> usize {
        self.inputs_a
    }

    pub fn inputs_b(&self) -> usize {
        self.inputs_b
    }

    pub fn outputs_a(&self) -> usize {
        self.outputs_a
    }

    pub fn outputs_b(&self) -> usize {
        self.outputs_b
    }

    pub fn is_binary(&self) -> bool {
        self.outputs_a == 2 && self.outputs_b == 2
    }

    pub fn num_cells(&self) -> usize {
        self.outputs_a * self.outputs_b * self.inputs_a * self.inputs_b
    }

    pub fn num_setting_pairs(&self) -> usize {
        self.inputs_a * self.inputs_b
    }

    #[inline]
    pub fn index(&self, a: usize, b: usize, x: usize, y: usize) -> usize {
        debug_assert!(a < self.outputs_a && b < self.outputs_b);
        debug_assert!(x < self.inputs_a && y < self.inputs_b);
        ((a * self.outputs_b + b) * self.inputs_a + x) * self.inputs_b + y
    }

    pub fn cell(&self, index: usize) -> Cell {
        let y = index % self.inputs_b;
        let rest = index / self.inputs_b;
        let x = rest % self.inputs_a;
        let rest = rest / self.inputs_a;
        let b = rest % self.outputs_b;
        let a = rest / self.outputs_b;
        Cell { a, b, x, y }
    }

    /// All cells in storage order.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.num_cells()).map(move |i| self.cell(i))
    }

    pub(crate) fn ensure_same(&self, other: &Scenario) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::ScenarioMismatch { expected: self.to_string(), found: other.to_string() })
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|x|={} |y|={} |a|={} |b|={}", self.inputs_a, self.inputs_b, self.outputs_a, self.outputs_b)
    }
}

/// A conditional distribution `P(ab|xy)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Behavior {
    scenario: Scenario,
    probabilities: Vec<f64>,
}

impl Behavior {
    pub fn new(scenario: Scenario, probabilities: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(scenario, probabilities, DEFAULT_TOLERANCE)
    }

    /// Validates nonnegativity and per-setting normalization to within `tol`.
    pub fn with_tolerance(scenario: Scenario, probabilities: Vec<f64>, tol: f64) -> Result<Self> {
        if probabilities.len() != scenario.num_cells() {
            return Err(Error::InvalidBehavior(format!(
                "expected {} probabilities, found {}",
                scenario.num_cells(),
                probabilities.len()
            )));
        }
        if let Some((i, p)) =
            probabilities.iter().enumerate().find(|(_, p)| !p.is_finite() || **p < -tol || **p > 1.0 + tol)
        {
            let c = scenario.cell(i);
            return Err(Error::InvalidBehavior(format!("P({}{}|{}{}) = {p} is not a probability", c.a, c.b, c.x, c.y)));
        }
        let behavior = Behavior { scenario, probabilities };
        for x in 0..scenario.inputs_a {
            for y in 0..scenario.inputs_b {
                let total = behavior.setting_total(x, y);
                if (total - 1.0).abs() > tol {
                    return Err(Error::InvalidBehavior(format!("probabilities for setting ({x},{y}) sum to {total}")));
                }
            }
        }
        Ok(behavior)
    }

    pub fn from_fn(scenario: Scenario, f: impl Fn(Cell) -> f64) -> Result<Self> {
        let probabilities = scenario.cells().map(f).collect();
        Self::new(scenario, probabilities)
    }

    /// White noise: every outcome pair equally likely.
    pub fn uniform(scenario: Scenario) -> Self {
        let p = 1.0 / (scenario.outputs_a * scenario.outputs_b) as f64;
        Behavior { scenario, probabilities: vec![p; scenario.num_cells()] }
    }

    /// Local deterministic behavior with outcome `alice[x]` for input `x` and `bob[y]` for `y`.
    pub fn deterministic(scenario: Scenario, alice: &[usize], bob: &[usize]) -> Result<Self> {
        if alice.len() != scenario.inputs_a
            || bob.len() != scenario.inputs_b
            || alice.iter().any(|&a| a >= scenario.outputs_a)
            || bob.iter().any(|&b| b >= scenario.outputs_b)
        {
            return Err(Error::InvalidBehavior("deterministic strategy does not fit scenario".into()));
        }
        Self::from_fn(scenario, |c| if alice[c.x] == c.a && bob[c.y] == c.b { 1.0 } else { 0.0 })
    }

    /// The PR box: `a XOR b = x AND y` with uniform marginals.
    pub fn pr_box() -> Self {
        Self::from_fn(Scenario::chsh(), |c| if (c.a ^ c.b) == (c.x & c.y) { 0.5 } else { 0.0 })
            .expect("PR box is normalized")
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    #[inline]
    pub fn prob(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        self.probabilities[self.scenario.index(a, b, x, y)]
    }

    fn setting_total(&self, x: usize, y: usize) -> f64 {
        let s = &self.scenario;
        (0..s.outputs_a).flat_map(|a| (0..s.outputs_b).map(move |b| (a, b))).map(|(a, b)| self.prob(a, b, x, y)).sum()
    }

    pub fn marginal_a(&self, a: usize, x: usize, y: usize) -> f64 {
        (0..self.scenario.outputs_b).map(|b| self.prob(a, b, x, y)).sum()
    }

    pub fn marginal_b(&self, b: usize, x: usize, y: usize) -> f64 {
        (0..self.scenario.outputs_a).map(|a| self.prob(a, b, x, y)).sum()
    }

    /// Largest violation of the no-signalling conditions.
    pub fn signalling_deviation(&self) -> f64 {
        let s = self.scenario;
        let mut worst = 0.0f64;
        for x in 0..s.inputs_a {
            for a in 0..s.outputs_a {
                let reference = self.marginal_a(a, x, 0);
                for y in 1..s.inputs_b {
                    worst = worst.max((self.marginal_a(a, x, y) - reference).abs());
                }
            }
        }
        for y in 0..s.inputs_b {
            for b in 0..s.outputs_b {
                let reference = self.marginal_b(b, 0, y);
                for x in 1..s.inputs_a {
                    worst = worst.max((self.marginal_b(b, x, y) - reference).abs());
                }
            }
        }
        worst
    }

    pub fn is_no_signalling(&self, tol: f64) -> bool {
        self.signalling_deviation() <= tol
    }

    pub fn ensure_no_signalling(&self, tol: f64) -> Result<()> {
        let deviation = self.signalling_deviation();
        if deviation <= tol {
            Ok(())
        } else {
            Err(Error::Signalling { deviation, tolerance: tol })
        }
    }

    /// `weight * self + (1 - weight) * other`.
    pub fn mix(&self, other: &Behavior, weight: f64) -> Result<Behavior> {
        self.scenario.ensure_same(&other.scenario)?;
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::OutOfRange(format!("mixing weight {weight}")));
        }
        let probabilities =
            self.probabilities.iter().zip(&other.probabilities).map(|(p, q)| weight * p + (1.0 - weight) * q).collect();
        Behavior::new(self.scenario, probabilities)
    }

    /// `max_ab P(ab|xy)`: the guessing probability of an extremal behavior.
    pub fn max_prob(&self, x: usize, y: usize) -> f64 {
        let s = self.scenario;
        (0..s.outputs_a)
            .flat_map(|a| (0..s.outputs_b).map(move |b| (a, b)))
            .map(|(a, b)| self.prob(a, b, x, y))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Serialize)]
struct BehaviorTable<'a> {
    scenario: Scenario,
    probabilities: &'a [f64],
}

#[derive(Deserialize)]
#[serde(untagged)]
enum BehaviorRepr {
    Table { scenario: Scenario, probabilities: Vec<f64> },
    Correlators { correlators: CorrelatorSet },
}

impl Serialize for Behavior {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        BehaviorTable { scenario: self.scenario, probabilities: &self.probabilities }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Behavior {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let behavior = match BehaviorRepr::deserialize(deserializer)? {
            BehaviorRepr::Table { scenario, probabilities } => Behavior::new(scenario, probabilities),
            BehaviorRepr::Correlators { correlators } => behavior_from_correlators(&correlators),
        };
        behavior.map_err(serde::de::Error::custom)
    }
}

/// Marginals and two-body correlators of a binary-outcome behavior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorSet {
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    /// `ab[x][y] = <A_x B_y>`.
    #[serde(rename = "AB")]
    pub ab: Vec<Vec<f64>>,
}

impl CorrelatorSet {
    pub fn new(a: Vec<f64>, b: Vec<f64>, ab: Vec<Vec<f64>>) -> Result<Self> {
        let set = CorrelatorSet { a, b, ab };
        set.validate()?;
        Ok(set)
    }

    fn validate(&self) -> Result<()> {
        if self.a.is_empty() || self.b.is_empty() {
            return Err(Error::InvalidBehavior("correlator set needs at least one input per party".into()));
        }
        if self.ab.len() != self.a.len() || self.ab.iter().any(|row| row.len() != self.b.len()) {
            return Err(Error::InvalidBehavior("correlator table shape does not match marginals".into()));
        }
        let out_of_range = self
            .a
            .iter()
            .chain(&self.b)
            .chain(self.ab.iter().flatten())
            .any(|v| !v.is_finite() || v.abs() > 1.0 + DEFAULT_TOLERANCE);
        if out_of_range {
            return Err(Error::InvalidBehavior("correlators must lie in [-1, 1]".into()));
        }
        Ok(())
    }

    pub fn scenario(&self) -> Result<Scenario> {
        Scenario::binary(self.a.len(), self.b.len())
    }

    /// `E00 + E01 + E10 - E11` for the 2x2 case.
    pub fn chsh(&self) -> f64 {
        self.ab[0][0] + self.ab[0][1] + self.ab[1][0] - self.ab[1][1]
    }
}

#[inline]
fn sign(outcome: usize) -> f64 {
    if outcome == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `P(ab|xy) = (1 + (-1)^a <A_x> + (-1)^b <B_y> + (-1)^(a+b) <A_x B_y>) / 4`.
pub fn behavior_from_correlators(c: &CorrelatorSet) -> Result<Behavior> {
    c.validate()?;
    let scenario = c.scenario()?;
    Behavior::from_fn(scenario, |cell| {
        let (sa, sb) = (sign(cell.a), sign(cell.b));
        (1.0 + sa * c.a[cell.x] + sb * c.b[cell.y] + sa * sb * c.ab[cell.x][cell.y]) / 4.0
    })
}

/// Inverse of [`behavior_from_correlators`]; the behavior must be binary and no-signalling.
pub fn correlators_from_behavior(p: &Behavior) -> Result<CorrelatorSet> {
    correlators_from_behavior_with_tolerance(p, DEFAULT_TOLERANCE)
}

pub fn correlators_from_behavior_with_tolerance(p: &Behavior, tol: f64) -> Result<CorrelatorSet> {
    let s = p.scenario();
    if !s.is_binary() {
        return Err(Error::NonBinary);
    }
    p.ensure_no_signalling(tol)?;
    let a = (0..s.inputs_a()).map(|x| p.marginal_a(0, x, 0) - p.marginal_a(1, x, 0)).collect();
    let b = (0..s.inputs_b()).map(|y| p.marginal_b(0, 0, y) - p.marginal_b(1, 0, y)).collect();
    let ab = (0..s.inputs_a())
        .map(|x| {
            (0..s.inputs_b())
                .map(|y| p.prob(0, 0, x, y) + p.prob(1, 1, x, y) - p.prob(0, 1, x, y) - p.prob(1, 0, x, y))
                .collect()
        })
        .collect();
    Ok(CorrelatorSet { a, b, ab })
}

/// Setting-choice distribution `p(x, y)`, row-major over `(x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct InputDistribution {
    inputs_a: usize,
    inputs_b: usize,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct InputDistributionRepr {
    weights: Vec<Vec<f64>>,
}

impl InputDistribution {
    pub fn new(inputs_a: usize, inputs_b: usize, weights: Vec<f64>) -> Result<Self> {
        if inputs_a == 0 || inputs_b == 0 || weights.len() != inputs_a * inputs_b {
            return Err(Error::InvalidInputDistribution(format!(
                "expected {} weights for {inputs_a}x{inputs_b} inputs",
                inputs_a * inputs_b
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInputDistribution("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > DEFAULT_TOLERANCE {
            return Err(Error::InvalidInputDistribution(format!("weights sum to {total}")));
        }
        Ok(InputDistribution { inputs_a, inputs_b, weights })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let inputs_a = rows.len();
        let inputs_b = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != inputs_b) {
            return Err(Error::InvalidInputDistribution("ragged weight table".into()));
        }
        Self::new(inputs_a, inputs_b, rows.into_iter().flatten().collect())
    }

    pub fn uniform(inputs_a: usize, inputs_b: usize) -> Self {
        let w = 1.0 / (inputs_a * inputs_b) as f64;
        InputDistribution { inputs_a, inputs_b, weights: vec![w; inputs_a * inputs_b] }
    }

    /// All weight on the single pair `(x, y)`.
    pub fn point(inputs_a: usize, inputs_b: usize, x: usize, y: usize) -> Result<Self> {
        if x >= inputs_a || y >= inputs_b {
            return Err(Error::InvalidInputDistribution(format!("setting ({x},{y}) out of range")));
        }
        let mut weights = vec![0.0; inputs_a * inputs_b];
        weights[x * inputs_b + y] = 1.0;
        Ok(InputDistribution { inputs_a, inputs_b, weights })
    }

    pub fn weight(&self, x: usize, y: usize) -> f64 {
        self.weights[x * self.inputs_b + y]
    }

    /// Setting pairs with strictly positive weight, in row-major order.
    pub fn support(&self) -> Vec<(usize, usize)> {
        (0..self.inputs_a)
            .flat_map(|x| (0..self.inputs_b).map(move |y| (x, y)))
            .filter(|&(x, y)| self.weight(x, y) > 0.0)
            .collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.weights.chunks(self.inputs_b).map(<[f64]>::to_vec).collect()
    }

    pub fn ensure_fits(&self, scenario: &Scenario) -> Result<()> {
        if self.inputs_a != scenario.inputs_a() || self.inputs_b != scenario.inputs_b() {
            return Err(Error::InvalidInputDistribution(format!(
                "distribution over {}x{} inputs does not fit scenario {scenario}",
                self.inputs_a, self.inputs_b
            )));
        }
        Ok(())
    }
}

impl Serialize for InputDistribution {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        InputDistributionRepr { weights: self.rows() }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for InputDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = InputDistributionRepr::deserialize(deserializer)?;
        InputDistribution::from_rows(repr.weights).map_err(serde::de::Error::custom)
    }
}

/// Correlator-basis coefficients of a binary Bell expression:
/// `constant + sum_x a[x] <A_x> + sum_y b[y] <B_y> + sum_xy ab[x][y] <A_x B_y>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorTerms {
    #[serde(default)]
    pub constant: f64,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    #[serde(rename = "AB")]
    pub ab: Vec<Vec<f64>>,
}

/// A linear functional `sum_abxy c_abxy P(ab|xy)` on behaviors.
#[derive(Clone, Debug, PartialEq)]
pub struct BellExpression {
    scenario: Scenario,
    coefficients: Vec<f64>,
    local_bound: Option<f64>,
}

impl BellExpression {
    pub fn new(scenario: Scenario, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != scenario.num_cells() {
            return Err(Error::InvalidBehavior(format!(
                "expected {} coefficients, found {}",
                scenario.num_cells(),
                coefficients.len()
            )));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidBehavior("coefficients must be finite".into()));
        }
        Ok(BellExpression { scenario, coefficients, local_bound: None })
    }

    pub fn zero(scenario: Scenario) -> Self {
        BellExpression { scenario, coefficients: vec![0.0; scenario.num_cells()], local_bound: None }
    }

    /// The functional `sum_ab P(ab|00)`, equal to 1 on every behavior.
    pub fn normalization(scenario: Scenario) -> Self {
        let mut expr = Self::zero(scenario);
        for a in 0..scenario.outputs_a() {
            for b in 0..scenario.outputs_b() {
                expr.coefficients[scenario.index(a, b, 0, 0)] = 1.0;
            }
        }
        expr
    }

    /// Builds the cell table of a binary expression given in correlator form.
    pub fn from_correlator_terms(terms: &CorrelatorTerms) -> Result<Self> {
        let scenario = Scenario::binary(terms.a.len(), terms.b.len())?;
        if terms.ab.len() != terms.a.len() || terms.ab.iter().any(|r| r.len() != terms.b.len()) {
            return Err(Error::InvalidBehavior("correlator term table shape mismatch".into()));
        }
        let nsettings = scenario.num_setting_pairs() as f64;
        let coefficients = scenario
            .cells()
            .map(|c| {
                let (sa, sb) = (sign(c.a), sign(c.b));
                terms.constant / nsettings
                    + sa * terms.a[c.x] / scenario.inputs_b() as f64
                    + sb * terms.b[c.y] / scenario.inputs_a() as f64
                    + sa * sb * terms.ab[c.x][c.y]
            })
            .collect();
        Self::new(scenario, coefficients)
    }

    /// Unique correlator-basis form of a binary expression, valid on no-signalling behaviors.
    pub fn correlator_terms(&self) -> Result<CorrelatorTerms> {
        let s = self.scenario;
        if !s.is_binary() {
            return Err(Error::NonBinary);
        }
        let mut terms = CorrelatorTerms {
            constant: 0.0,
            a: vec![0.0; s.inputs_a()],
            b: vec![0.0; s.inputs_b()],
            ab: vec![vec![0.0; s.inputs_b()]; s.inputs_a()],
        };
        for c in s.cells() {
            let v = self.coefficients[s.index(c.a, c.b, c.x, c.y)] / 4.0;
            let (sa, sb) = (sign(c.a), sign(c.b));
            terms.constant += v;
            terms.a[c.x] += sa * v;
            terms.b[c.y] += sb * v;
            terms.ab[c.x][c.y] += sa * sb * v;
        }
        Ok(terms)
    }

    /// CHSH: `<A0B0> + <A0B1> + <A1B0> - <A1B1>`, local bound 2.
    pub fn chsh() -> Self {
        Self::gamma(1.0)
    }

    /// `gamma <A0B0> + <A0B1> + <A1B0> - <A1B1>` with local bound `max(1 + gamma, 3 - gamma)`.
    pub fn gamma(gamma: f64) -> Self {
        let terms = CorrelatorTerms {
            constant: 0.0,
            a: vec![0.0; 2],
            b: vec![0.0; 2],
            ab: vec![vec![gamma, 1.0], vec![1.0, -1.0]],
        };
        let mut expr = Self::from_correlator_terms(&terms).expect("2x2 binary terms are well formed");
        expr.local_bound = Some((1.0 + gamma).max(3.0 - gamma));
        expr
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficient(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        self.coefficients[self.scenario.index(a, b, x, y)]
    }

    /// Local bound recorded at construction, if any.
    pub fn known_local_bound(&self) -> Option<f64> {
        self.local_bound
    }

    pub fn with_local_bound(mut self, bound: Option<f64>) -> Self {
        self.local_bound = bound;
        self
    }

    pub fn evaluate(&self, p: &Behavior) -> Result<f64> {
        self.scenario.ensure_same(&p.scenario())?;
        Ok(self.coefficients.iter().zip(p.probabilities()).map(|(c, q)| c * q).sum())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        BellExpression {
            scenario: self.scenario,
            coefficients: self.coefficients.iter().map(|c| c * factor).collect(),
            local_bound: None,
        }
    }

    pub fn add(&self, other: &BellExpression) -> Result<Self> {
        self.scenario.ensure_same(&other.scenario)?;
        Ok(BellExpression {
            scenario: self.scenario,
            coefficients: self.coefficients.iter().zip(&other.coefficients).map(|(a, b)| a + b).collect(),
            local_bound: None,
        })
    }

    /// Exact maximum over local deterministic strategies.
    ///
    /// Bob's best response is chosen per input, which is exact because the
    /// expression is linear in his strategy once Alice's is fixed.
    pub fn local_bound(&self) -> Result<f64> {
        let s = self.scenario;
        let count = (s.outputs_a() as u128)
            .checked_pow(s.inputs_a() as u32)
            .and_then(|n| (s.outputs_b() as u128).checked_pow(s.inputs_b() as u32).and_then(|m| n.checked_mul(m)))
            .unwrap_or(u128::MAX);
        if count > ENUMERATION_LIMIT {
            return Err(Error::EnumerationTooLarge { count, limit: ENUMERATION_LIMIT });
        }
        let mut alice = vec![0usize; s.inputs_a()];
        let mut best = f64::NEG_INFINITY;
        loop {
            let value: f64 = (0..s.inputs_b())
                .map(|y| {
                    (0..s.outputs_b())
                        .map(|b| (0..s.inputs_a()).map(|x| self.coefficient(alice[x], b, x, y)).sum::<f64>())
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .sum();
            best = best.max(value);
            if !odometer(&mut alice, s.outputs_a()) {
                break;
            }
        }
        Ok(best)
    }
}

/// Advances a mixed-radix counter; returns false after wrapping to all zeros.
pub(crate) fn odometer(digits: &mut [usize], radix: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < radix {
            return true;
        }
        *d = 0;
    }
    false
}

#[derive(Serialize)]
struct BellTable<'a> {
    scenario: Scenario,
    coefficients: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    local_bound: Option<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum BellRepr {
    Table { scenario: Scenario, coefficients: Vec<f64>, local_bound: Option<f64> },
    Correlators { correlators: CorrelatorTerms, local_bound: Option<f64> },
}

impl Serialize for BellExpression {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        BellTable { scenario: self.scenario, coefficients: &self.coefficients, local_bound: self.local_bound }
            .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BellExpression {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let expr = match BellRepr::deserialize(deserializer)? {
            BellRepr::Table { scenario, coefficients, local_bound } => {
                BellExpression::new(scenario, coefficients).map(|e| e.with_local_bound(local_bound))
            }
            BellRepr::Correlators { correlators, local_bound } => {
                BellExpression::from_correlator_terms(&correlators).map(|e| e.with_local_bound(local_bound))
            }
        };
        expr.map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pr_correlators() -> CorrelatorSet {
        CorrelatorSet::new(vec![0.0, 0.0], vec![0.0, 0.0], vec![vec![1.0, 1.0], vec![1.0, -1.0]]).unwrap()
    }

    #[test]
    fn scenario_rejects_zero_cardinality() {
        assert!(Scenario::new(0, 2, 2, 2).is_err());
        assert!(Scenario::new(2, 2, 2, 0).is_err());
        assert!(Scenario::new(usize::MAX, 2, 2, 2).is_err());
    }

    #[test]
    fn cell_index_roundtrip() {
        let s = Scenario::new(3, 2, 2, 3).unwrap();
        for i in 0..s.num_cells() {
            let c = s.cell(i);
            assert_eq!(s.index(c.a, c.b, c.x, c.y), i);
        }
    }

    #[test]
    fn behavior_rejects_bad_tables() {
        let s = Scenario::chsh();
        assert!(Behavior::new(s, vec![0.25; 15]).is_err());
        let mut p = vec![0.25; 16];
        p[0] = 0.3;
        assert!(matches!(Behavior::new(s, p), Err(Error::InvalidBehavior(_))));
        let mut p = vec![0.25; 16];
        p[0] = -0.1;
        p[s.index(1, 1, 0, 0)] = 0.6;
        assert!(Behavior::new(s, p).is_err());
    }

    #[test]
    fn chsh_examples() {
        let chsh = BellExpression::chsh();
        let det = Behavior::deterministic(Scenario::chsh(), &[0, 0], &[0, 0]).unwrap();
        assert_abs_diff_eq!(chsh.evaluate(&det).unwrap(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(chsh.evaluate(&Behavior::pr_box()).unwrap(), 4.0, epsilon = 1e-15);
        let pr = behavior_from_correlators(&pr_correlators()).unwrap();
        assert_eq!(pr, Behavior::pr_box());
    }

    #[test]
    fn evaluate_rejects_scenario_mismatch() {
        let p = Behavior::uniform(Scenario::new(2, 2, 3, 3).unwrap());
        assert!(matches!(BellExpression::chsh().evaluate(&p), Err(Error::ScenarioMismatch { .. })));
    }

    #[test]
    fn gamma_expression_bounds() {
        assert_eq!(BellExpression::gamma(1.0).known_local_bound(), Some(2.0));
        assert_eq!(BellExpression::gamma(0.75).known_local_bound(), Some(2.25));
        assert_eq!(BellExpression::gamma(2.0).known_local_bound(), Some(3.0));
        assert_abs_diff_eq!(BellExpression::gamma(2.0).local_bound().unwrap(), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(BellExpression::gamma(0.75).local_bound().unwrap(), 2.25, epsilon = 1e-12);
        assert_abs_diff_eq!(BellExpression::chsh().local_bound().unwrap(), 2.0, epsilon = 1e-12);
        assert_eq!(BellExpression::gamma(1.0).coefficients(), BellExpression::chsh().coefficients());
    }

    #[test]
    fn single_setting_local_bound_is_max_coefficient() {
        let s = Scenario::new(1, 1, 3, 2).unwrap();
        let expr = BellExpression::new(s, vec![0.1, -2.0, 0.7, 0.3, 0.65, -1.0]).unwrap();
        assert_abs_diff_eq!(expr.local_bound().unwrap(), 0.7, epsilon = 1e-15);
    }

    #[test]
    fn local_bound_enumeration_cap() {
        let s = Scenario::new(12, 12, 4, 4).unwrap();
        assert!(matches!(BellExpression::zero(s).local_bound(), Err(Error::EnumerationTooLarge { .. })));
    }

    #[test]
    fn correlator_examples() {
        let zero = CorrelatorSet::new(vec![0.0; 2], vec![0.0; 2], vec![vec![0.0; 2]; 2]).unwrap();
        let p = behavior_from_correlators(&zero).unwrap();
        assert!(p.probabilities().iter().all(|&q| (q - 0.25).abs() < 1e-15));

        let mut ab = vec![vec![0.0; 2]; 2];
        ab[0][0] = 1.0;
        let p = behavior_from_correlators(&CorrelatorSet::new(vec![0.0; 2], vec![0.0; 2], ab).unwrap()).unwrap();
        assert_eq!(p.prob(0, 0, 0, 0), 0.5);
        assert_eq!(p.prob(1, 1, 0, 0), 0.5);
        assert_eq!(p.prob(0, 1, 0, 0), 0.0);
        assert_eq!(p.prob(1, 0, 0, 0), 0.0);
    }

    #[test]
    fn correlators_require_binary_and_no_signalling() {
        let p = Behavior::uniform(Scenario::new(2, 2, 3, 2).unwrap());
        assert!(matches!(correlators_from_behavior(&p), Err(Error::NonBinary)));
        // Alice's marginal follows Bob's input.
        let signalling =
            Behavior::from_fn(Scenario::chsh(), |c| if c.a == c.y && c.b == 0 { 1.0 } else { 0.0 }).unwrap();
        assert!(matches!(correlators_from_behavior(&signalling), Err(Error::Signalling { .. })));
    }

    #[test]
    fn correlator_terms_roundtrip_on_gamma() {
        let terms = BellExpression::gamma(0.75).correlator_terms().unwrap();
        assert_abs_diff_eq!(terms.ab[0][0], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(terms.ab[1][1], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(terms.constant, 0.0, epsilon = 1e-15);
        assert!(terms.a.iter().chain(&terms.b).all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn json_forms() {
        let p = behavior_from_correlators(&pr_correlators()).unwrap();
        let text = serde_json::to_string(&p).unwrap();
        assert!(text.contains("\"scenario\":{\"x\":2,\"y\":2,\"a\":2,\"b\":2}"));
        let back: Behavior = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
        let from_corr: Behavior =
            serde_json::from_str(r#"{"correlators":{"A":[0,0],"B":[0,0],"AB":[[1,1],[1,-1]]}}"#).unwrap();
        assert_eq!(from_corr, p);

        let expr = BellExpression::gamma(0.75);
        let back: BellExpression = serde_json::from_str(&serde_json::to_string(&expr).unwrap()).unwrap();
        assert_eq!(back, expr);
        let parsed: BellExpression =
            serde_json::from_str(r#"{"correlators":{"A":[0,0],"B":[0,0],"AB":[[1,1],[1,-1]]},"local_bound":2}"#)
                .unwrap();
        assert_eq!(parsed.coefficients(), BellExpression::chsh().coefficients());

        let dist: InputDistribution = serde_json::from_str(r#"{"weights":[[0.5,0.5],[0,0]]}"#).unwrap();
        assert_eq!(dist.support(), vec![(0, 0), (0, 1)]);
        assert!(serde_json::from_str::<InputDistribution>(r#"{"weights":[[0.5,0.6]]}"#).is_err());
    }

    fn brute_force_local_bound(expr: &BellExpression) -> f64 {
        let s = expr.scenario();
        let mut best = f64::NEG_INFINITY;
        let mut alice = vec![0; s.inputs_a()];
        loop {
            let mut bob = vec![0; s.inputs_b()];
            loop {
                let det = Behavior::deterministic(s, &alice, &bob).unwrap();
                best = best.max(expr.evaluate(&det).unwrap());
                if !odometer(&mut bob, s.outputs_b()) {
                    break;
                }
            }
            if !odometer(&mut alice, s.outputs_a()) {
                break;
            }
        }
        best
    }

    fn arb_behavior(s: Scenario) -> impl Strategy<Value = Behavior> {
        let per_setting = s.outputs_a() * s.outputs_b();
        proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, per_setting), s.num_setting_pairs()).prop_map(
            move |weights| {
                Behavior::from_fn(s, |c| {
                    let w = &weights[c.x * s.inputs_b() + c.y];
                    w[c.a * s.outputs_b() + c.b] / w.iter().sum::<f64>()
                })
                .unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn evaluation_is_linear(
            p in arb_behavior(Scenario::new(2, 3, 2, 3).unwrap()),
            q in arb_behavior(Scenario::new(2, 3, 2, 3).unwrap()),
            coeffs in proptest::collection::vec(-3.0f64..3.0, 36),
            w in 0.0f64..1.0,
        ) {
            let expr = BellExpression::new(p.scenario(), coeffs).unwrap();
            let mixed = p.mix(&q, w).unwrap();
            let lhs = expr.evaluate(&mixed).unwrap();
            let rhs = w * expr.evaluate(&p).unwrap() + (1.0 - w) * expr.evaluate(&q).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn gamma_local_bound_matches_formula(gamma in 0.0f64..3.0) {
            let expr = BellExpression::gamma(gamma);
            let formula = (1.0 + gamma).max(3.0 - gamma);
            prop_assert!((expr.local_bound().unwrap() - formula).abs() < 1e-12);
            prop_assert!((brute_force_local_bound(&expr) - formula).abs() < 1e-12);
        }

        #[test]
        fn local_bound_matches_brute_force(coeffs in proptest::collection::vec(-2.0f64..2.0, 3 * 2 * 2 * 3)) {
            let expr = BellExpression::new(Scenario::new(2, 3, 3, 2).unwrap(), coeffs).unwrap();
            prop_assert!((expr.local_bound().unwrap() - brute_force_local_bound(&expr)).abs() < 1e-12);
        }

        #[test]
        fn correlator_roundtrip(
            a in proptest::collection::vec(-0.3f64..0.3, 2),
            b in proptest::collection::vec(-0.3f64..0.3, 3),
            ab in proptest::collection::vec(proptest::collection::vec(-0.3f64..0.3, 3), 2),
        ) {
            let c = CorrelatorSet::new(a, b, ab).unwrap();
            let p = behavior_from_correlators(&c).unwrap();
            let back = correlators_from_behavior(&p).unwrap();
            let flat = |c: &CorrelatorSet| c.a.iter().chain(&c.b).chain(c.ab.iter().flatten()).copied().collect::<Vec<_>>();
            for (u, v) in flat(&c).iter().zip(flat(&back)) {
                prop_assert!((u - v).abs() < 1e-15);
            }
            prop_assert!(p.is_no_signalling(1e-15));
        }

        #[test]
        fn correlator_terms_preserve_value_on_ns_points(
            coeffs in proptest::collection::vec(-2.0f64..2.0, 16),
            corr in proptest::collection::vec(-0.2f64..0.2, 8),
        ) {
            let expr = BellExpression::new(Scenario::chsh(), coeffs).unwrap();
            let rebuilt = BellExpression::from_correlator_terms(&expr.correlator_terms().unwrap()).unwrap();
            let c = CorrelatorSet::new(corr[0..2].to_vec(), corr[2..4].to_vec(),
                vec![corr[4..6].to_vec(), corr[6..8].to_vec()]).unwrap();
            let p = behavior_from_correlators(&c).unwrap();
            prop_assert!((expr.evaluate(&p).unwrap() - rebuilt.evaluate(&p).unwrap()).abs() < 1e-12);
        }
    }
}
