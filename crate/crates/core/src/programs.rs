//! Guessing-probability programs.
//!
//! A verifier's strategy is a vector assigning a guessed outcome pair to each
//! supported setting pair. Each strategy gets one subnormalized block, modeled
//! at the chosen relaxation level; the block weights are the identity moments
//! and sum to one.

use std::time::Duration;

use serde::Serialize;

use crate::bell::{Behavior, BellExpression, InputDistribution, Scenario, DEFAULT_TOLERANCE};
use crate::certificate::{extract_certificate, Certificate};
use crate::error::{Error, Result};
use crate::relaxation::{independent_cells, BlockModel, Level, NoSignallingStructure};
use crate::solver::{self, ConicProblem, SolveReport, SolveStatus, SolverSettings};

pub const DEFAULT_BLOCK_BUDGET: usize = 4096;

/// Inward step applied to `v` when the violation program is infeasible at the boundary.
pub const BOUNDARY_RETRY_STEP: f64 = 1e-9;

/// Relative size below which the non-constant part of an expression is treated as solver noise.
pub const CONSTANT_EXPRESSION_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProgramOptions {
    pub level: Level,
    pub solver: SolverSettings,
    pub block_budget: usize,
    /// Tolerance for normalization and no-signalling checks on input behaviors.
    pub tolerance: f64,
}

impl ProgramOptions {
    pub fn new(level: Level) -> Self {
        ProgramOptions {
            level,
            solver: SolverSettings::default(),
            block_budget: DEFAULT_BLOCK_BUDGET,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

impl Default for ProgramOptions {
    fn default() -> Self {
        ProgramOptions::new(Level::Local1)
    }
}

/// Strategy vectors over the support of an input distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategyFamily {
    scenario: Scenario,
    support: Vec<(usize, usize)>,
    weights: Vec<f64>,
}

impl StrategyFamily {
    pub fn new(scenario: Scenario, dist: &InputDistribution) -> Result<Self> {
        dist.ensure_fits(&scenario)?;
        let support = dist.support();
        let weights = support.iter().map(|&(x, y)| dist.weight(x, y)).collect();
        Ok(StrategyFamily { scenario, support, weights })
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn support(&self) -> &[(usize, usize)] {
        &self.support
    }

    /// `(|a||b|)^{|support|}`, saturating.
    pub fn block_count(&self) -> u128 {
        let base = (self.scenario.outputs_a() * self.scenario.outputs_b()) as u128;
        (0..self.support.len()).try_fold(1u128, |acc, _| acc.checked_mul(base)).unwrap_or(u128::MAX)
    }

    /// Guessed outcome pair for each supported setting pair.
    pub fn strategy(&self, index: usize) -> Vec<(usize, usize)> {
        let ob = self.scenario.outputs_b();
        let base = self.scenario.outputs_a() * ob;
        let mut rest = index;
        self.support
            .iter()
            .map(|_| {
                let digit = rest % base;
                rest /= base;
                (digit / ob, digit % ob)
            })
            .collect()
    }

    fn ensure_budget(&self, budget: usize, duplication: usize) -> Result<usize> {
        let needed = self.block_count().saturating_mul(duplication as u128);
        if needed > budget as u128 {
            return Err(Error::BlockBudget { needed, budget });
        }
        Ok(needed as usize)
    }
}

/// Linear constraint tying the blocks to the observed data.
#[derive(Clone, Debug)]
pub enum ProgramConstraint {
    /// `Σ_λ P_λ = P` on the independent cells.
    Behavior(Behavior),
    /// `Σ_λ expr(P_λ) = v` and `Σ_λ weight_λ = 1`.
    Violation { expr: BellExpression, v: f64 },
}

/// Assembled guessing program.
#[derive(Clone, Debug)]
pub struct GuessingProblem {
    model: BlockModel,
    family: StrategyFamily,
    dist: InputDistribution,
    constraint: ProgramConstraint,
    duplication: usize,
    conic: ConicProblem,
    /// Cell-coefficient table of each equality row.
    row_functionals: Vec<Vec<f64>>,
}

impl GuessingProblem {
    pub fn behavior(p: &Behavior, dist: &InputDistribution, opts: &ProgramOptions) -> Result<Self> {
        p.ensure_no_signalling(opts.tolerance.max(DEFAULT_TOLERANCE))?;
        Self::assemble(p.scenario(), dist, ProgramConstraint::Behavior(p.clone()), opts, 1)
    }

    pub fn violation(expr: &BellExpression, v: f64, dist: &InputDistribution, opts: &ProgramOptions) -> Result<Self> {
        if !v.is_finite() {
            return Err(Error::OutOfRange(format!("Bell value {v}")));
        }
        Self::assemble(expr.scenario(), dist, ProgramConstraint::Violation { expr: expr.clone(), v }, opts, 1)
    }

    /// Same program with every strategy block repeated `factor` times.
    pub fn duplicated(&self, factor: usize, opts: &ProgramOptions) -> Result<Self> {
        let dist = self.dist.clone();
        Self::assemble(self.family.scenario, &dist, self.constraint.clone(), opts, self.duplication * factor.max(1))
    }

    pub fn input_distribution(&self) -> InputDistribution {
        self.dist.clone()
    }

    fn assemble(
        scenario: Scenario,
        dist: &InputDistribution,
        constraint: ProgramConstraint,
        opts: &ProgramOptions,
        duplication: usize,
    ) -> Result<Self> {
        let family = StrategyFamily::new(scenario, dist)?;
        let blocks = family.ensure_budget(opts.block_budget, duplication)?;
        let model = BlockModel::new(scenario, opts.level)?;
        let nv = model.num_vars();

        let mut conic = ConicProblem::new();
        for b in 0..blocks {
            let off = conic.add_variables(format!("block{b}"), nv);
            let strategy = family.strategy(b / duplication);
            for (k, &(x, y)) in family.support.iter().enumerate() {
                let (a, bb) = strategy[k];
                let cell = scenario.index(a, bb, x, y);
                for &(v, c) in model.cell_terms(cell) {
                    conic.add_objective_term(off + v, family.weights[k] * c);
                }
            }
            conic.add_cone(model.cone(off));
        }

        let mut row_functionals = Vec::new();
        let mut add_row = |conic: &mut ConicProblem, functional: Vec<f64>, rhs: f64| {
            let mut per_block = vec![0.0; nv];
            for (cell, &c) in functional.iter().enumerate() {
                if c != 0.0 {
                    for &(v, k) in model.cell_terms(cell) {
                        per_block[v] += c * k;
                    }
                }
            }
            let terms: Vec<(usize, f64)> = (0..blocks)
                .flat_map(|b| {
                    per_block.iter().enumerate().filter(|(_, c)| **c != 0.0).map(move |(v, &c)| (b * nv + v, c))
                })
                .collect();
            conic.add_equality(terms, rhs);
            row_functionals.push(functional);
        };

        match &constraint {
            ProgramConstraint::Behavior(p) => {
                scenario.ensure_same(&p.scenario())?;
                for cell in independent_cells(&scenario) {
                    let idx = scenario.index(cell.a, cell.b, cell.x, cell.y);
                    let mut f = vec![0.0; scenario.num_cells()];
                    f[idx] = 1.0;
                    add_row(&mut conic, f, p.probabilities()[idx]);
                }
            }
            ProgramConstraint::Violation { expr, v } => {
                scenario.ensure_same(&expr.scenario())?;
                let norm = BellExpression::normalization(scenario);
                if !is_constant_on_ns(expr) {
                    let scale = expr.coefficients().iter().fold(0.0f64, |m, c| m.max(c.abs()));
                    add_row(&mut conic, expr.scaled(1.0 / scale).coefficients().to_vec(), v / scale);
                } else {
                    if !matches_constant(expr, *v) {
                        return Err(Error::Infeasible(format!(
                            "expression is constant {} on normalized behaviors, requested {v}",
                            constant_value(expr)
                        )));
                    }
                }
                add_row(&mut conic, norm.coefficients().to_vec(), 1.0);
            }
        }

        Ok(GuessingProblem { model, family, dist: dist.clone(), constraint, duplication, conic, row_functionals })
    }

    pub fn model(&self) -> &BlockModel {
        &self.model
    }

    pub fn level(&self) -> Level {
        self.model.level()
    }

    pub fn family(&self) -> &StrategyFamily {
        &self.family
    }

    pub fn constraint(&self) -> &ProgramConstraint {
        &self.constraint
    }

    pub fn conic(&self) -> &ConicProblem {
        &self.conic
    }

    pub fn num_blocks(&self) -> usize {
        self.conic.variable_blocks().len()
    }

    pub fn block_offset(&self, block: usize) -> usize {
        block * self.model.num_vars()
    }

    pub fn row_functionals(&self) -> &[Vec<f64>] {
        &self.row_functionals
    }

    /// Strategy guessed by a block.
    pub fn block_strategy(&self, block: usize) -> Vec<(usize, usize)> {
        self.family.strategy(block / self.duplication)
    }

    pub fn solve_report(&self, settings: &SolverSettings) -> Result<SolveReport> {
        solver::solve(&self.conic, settings)
    }

    pub fn solve(&self, settings: &SolverSettings) -> Result<GuessingResult> {
        let report = self.solve_report(settings)?;
        self.result_from_report(report)
    }

    fn result_from_report(&self, report: SolveReport) -> Result<GuessingResult> {
        ensure_solved(&report)?;
        let g = clamp_guess(report.primal_value);
        let block_weights =
            (0..self.num_blocks()).map(|b| report.x[self.block_offset(b) + self.model.weight_var()]).collect();
        let certificate = extract_certificate(self, &report).ok();
        Ok(GuessingResult {
            guessing_probability: g,
            min_entropy_bits: min_entropy(g)?,
            status: report.status,
            primal_value: report.primal_value,
            dual_value: report.dual_value,
            gap: report.gap(),
            level: self.level(),
            block_weights,
            certificate,
            bell_value: None,
            iterations: report.iterations,
            solve_time: report.solve_time,
        })
    }
}

fn ensure_solved(report: &SolveReport) -> Result<()> {
    match report.status {
        SolveStatus::Optimal | SolveStatus::NearOptimal => Ok(()),
        SolveStatus::Infeasible => Err(Error::Infeasible("no decomposition satisfies the constraints".into())),
        SolveStatus::Unbounded => Err(Error::Solver("program reported unbounded".into())),
        SolveStatus::Failed => {
            Err(Error::Solver(report.message.clone().unwrap_or_else(|| "solver did not converge".into())))
        }
    }
}

/// Solved values slightly above one are rounding; anything further is kept so it stays visible.
fn clamp_guess(g: f64) -> f64 {
    if g > 1.0 && g <= 1.0 + 1e-6 {
        1.0
    } else {
        g
    }
}

/// Coefficients of an expression on the moments `1, A, B, AB`.
fn moment_coefficients(expr: &BellExpression) -> Vec<f64> {
    let ns = NoSignallingStructure::new(expr.scenario());
    let mut d = vec![0.0; ns.num_vars()];
    for (cell, &c) in expr.coefficients().iter().enumerate() {
        for &(v, k) in ns.cell_terms(cell) {
            d[v] += c * k;
        }
    }
    d
}

fn is_constant_on_ns(expr: &BellExpression) -> bool {
    let d = moment_coefficients(expr);
    let scale = d.iter().fold(1.0f64, |m, c| m.max(c.abs()));
    d[1..].iter().all(|c| c.abs() <= CONSTANT_EXPRESSION_TOL * scale)
}

/// Whether `v` is the value taken by a constant expression.
fn matches_constant(expr: &BellExpression, v: f64) -> bool {
    let d = moment_coefficients(expr);
    let spread: f64 = d[1..].iter().map(|c| c.abs()).sum();
    (d[0] - v).abs() <= spread + 1e-9 * (1.0 + v.abs())
}

fn constant_value(expr: &BellExpression) -> f64 {
    moment_coefficients(expr)[0]
}

#[derive(Clone, Debug, Serialize)]
pub struct GuessingResult {
    #[serde(rename = "G")]
    pub guessing_probability: f64,
    pub min_entropy_bits: f64,
    pub level: Level,
    pub status: SolveStatus,
    pub gap: f64,
    pub primal_value: f64,
    pub dual_value: f64,
    pub block_weights: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Certificate>,
    /// Bell value actually imposed, when it differs from the one requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bell_value: Option<f64>,
    pub iterations: u32,
    #[serde(serialize_with = "serialize_secs")]
    pub solve_time: Duration,
}

fn serialize_secs<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

pub fn min_entropy(g: f64) -> Result<f64> {
    if !(g > 0.0 && g <= 1.0 + 1e-6) {
        return Err(Error::OutOfRange(format!("guessing probability {g} not in (0, 1]")));
    }
    Ok(0.0 - g.log2())
}

/// `G_{x,y}(P)`: guessing the outcome pair of one fixed setting pair.
pub fn guessing_fixed_settings(p: &Behavior, x: usize, y: usize, opts: &ProgramOptions) -> Result<GuessingResult> {
    let s = p.scenario();
    let dist = InputDistribution::point(s.inputs_a(), s.inputs_b(), x, y)?;
    guessing_weighted(p, &dist, opts)
}

/// `G(p, P)`: average guessing probability over settings drawn from `dist`.
pub fn guessing_weighted(p: &Behavior, dist: &InputDistribution, opts: &ProgramOptions) -> Result<GuessingResult> {
    GuessingProblem::behavior(p, dist, opts)?.solve(&opts.solver)
}

/// `G(v)`: guessing probability certified by the value `v` of a single Bell expression.
pub fn guessing_from_violation(
    expr: &BellExpression,
    v: f64,
    dist: &InputDistribution,
    opts: &ProgramOptions,
) -> Result<GuessingResult> {
    let problem = GuessingProblem::violation(expr, v, dist, opts)?;
    match problem.solve(&opts.solver) {
        Err(Error::Infeasible(msg)) => {
            let v_in = inward(expr, v)?;
            if v_in == v {
                return Err(Error::Infeasible(msg));
            }
            let mut result = GuessingProblem::violation(expr, v_in, dist, opts)?.solve(&opts.solver)?;
            result.bell_value = Some(v_in);
            Ok(result)
        }
        other => other,
    }
}

/// `v` moved by [`BOUNDARY_RETRY_STEP`] towards the value at white noise.
fn inward(expr: &BellExpression, v: f64) -> Result<f64> {
    let center = expr.evaluate(&Behavior::uniform(expr.scenario()))?;
    Ok(if v > center {
        v - BOUNDARY_RETRY_STEP
    } else if v < center {
        v + BOUNDARY_RETRY_STEP
    } else {
        v
    })
}

/// `f_xy(v)`: the best single normalized block maximizing one outcome pair at Bell value `v`.
pub fn single_strategy_curve(expr: &BellExpression, v: f64, x: usize, y: usize, opts: &ProgramOptions) -> Result<f64> {
    let s = expr.scenario();
    if x >= s.inputs_a() || y >= s.inputs_b() {
        return Err(Error::OutOfRange(format!("setting pair ({x}, {y}) outside scenario {s}")));
    }
    let attempt = |v: f64| -> Result<Option<f64>> {
        let model = BlockModel::new(s, opts.level)?;
        let mut best: Option<f64> = None;
        for a in 0..s.outputs_a() {
            for b in 0..s.outputs_b() {
                let mut conic = ConicProblem::new();
                let off = conic.add_variables("block", model.num_vars());
                conic.add_equality(vec![(off + model.weight_var(), 1.0)], 1.0);
                let mut row = vec![0.0; model.num_vars()];
                for (cell, &c) in expr.coefficients().iter().enumerate() {
                    for &(var, k) in model.cell_terms(cell) {
                        row[var] += c * k;
                    }
                }
                if is_constant_on_ns(expr) {
                    if !matches_constant(expr, v) {
                        return Ok(None);
                    }
                } else {
                    conic.add_equality(
                        row.iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(i, &c)| (off + i, c)).collect(),
                        v,
                    );
                }
                for &(var, k) in model.cell_terms(s.index(a, b, x, y)) {
                    conic.add_objective_term(off + var, k);
                }
                conic.add_cone(model.cone(off));
                let report = solver::solve(&conic, &opts.solver)?;
                match report.status {
                    SolveStatus::Infeasible => {}
                    _ => {
                        ensure_solved(&report)?;
                        let val = report.primal_value;
                        best = Some(best.map_or(val, |b: f64| b.max(val)));
                    }
                }
            }
        }
        Ok(best)
    };
    if let Some(best) = attempt(v)? {
        return Ok(clamp_guess(best));
    }
    let v_in = inward(expr, v)?;
    match attempt(v_in)? {
        Some(best) if v_in != v => Ok(clamp_guess(best)),
        _ => Err(Error::Infeasible(format!("Bell value {v} is not attainable"))),
    }
}

/// Input-weighted program with every block restricted to the no-signalling polytope; a single LP.
pub fn guessing_no_signalling(p: &Behavior, dist: &InputDistribution, opts: &ProgramOptions) -> Result<GuessingResult> {
    let opts = ProgramOptions { level: Level::NoSignalling, ..opts.clone() };
    guessing_weighted(p, dist, &opts)
}

/// `Σ_{xy} p(x,y) max_{ab} P(ab|xy)`: the guess achieved without any decomposition.
pub fn trivial_guess(p: &Behavior, dist: &InputDistribution) -> Result<f64> {
    dist.ensure_fits(&p.scenario())?;
    Ok(dist.support().iter().map(|&(x, y)| dist.weight(x, y) * p.max_prob(x, y)).sum())
}
