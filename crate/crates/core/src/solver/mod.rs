//! Conic optimization abstraction.
//!
//! Programs are assembled as a [`ConicProblem`] and handed to a
//! [`ConicSolver`] through a [`SolverRegistry`]. Every adapter must return
//! dual solutions, since certificates are read off them.
//!
//! Dual sign convention for `max c'x` s.t. `g_k'x = r_k`, `e_j(x) = G_j x + h_j in K_j`:
//! the report carries `y_k` and `Z_j in K_j*` with
//!
//! ```text
//! sum_k y_k g_k - sum_j G_j' Z_j = c,      dual value = sum_k y_k r_k + sum_j <h_j, Z_j>,
//! ```
//!
//! so that `c'x <= dual value` for every feasible `x`.

mod clarabel_backend;
mod problem;

use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use clarabel_backend::ClarabelSolver;
pub use problem::{triu_index, triu_len, AffineExpr, ConeConstraint, ConicProblem, EqualityConstraint, VariableBlock};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Requested primal/dual feasibility tolerance.
    pub feasibility_tol: f64,
    /// Requested duality-gap tolerance (absolute and relative).
    pub gap_tol: f64,
    /// Largest gap at which a reduced-accuracy solution still counts as optimal.
    pub accept_gap: f64,
    pub max_iter: u32,
    /// Constant diagonal regularization of the KKT system. Guessing programs
    /// pinned to boundary points of the quantum set have no strictly feasible
    /// point; a value above the solver's usual 1e-8 keeps them convergent.
    pub static_regularization: f64,
    pub verbose: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            feasibility_tol: 1e-8,
            gap_tol: 1e-8,
            accept_gap: 1e-6,
            max_iter: 200,
            static_regularization: 1e-7,
            verbose: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    NearOptimal,
    Infeasible,
    Unbounded,
    Failed,
}

impl SolveStatus {
    pub fn is_solved(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::NearOptimal)
    }
}

/// Dual variable of one cone constraint.
#[derive(Clone, Debug, PartialEq)]
pub enum ConeDual {
    Nonnegative(Vec<f64>),
    /// Full symmetric matrix, row-major.
    Psd {
        dim: usize,
        matrix: Vec<f64>,
    },
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub primal_value: f64,
    pub dual_value: f64,
    pub x: Vec<f64>,
    pub equality_duals: Vec<f64>,
    pub cone_duals: Vec<ConeDual>,
    pub iterations: u32,
    pub solve_time: Duration,
    /// Factor the objective was multiplied by before solving; values above are unscaled.
    pub objective_scale: f64,
    pub backend: &'static str,
    pub message: Option<String>,
}

impl SolveReport {
    pub fn gap(&self) -> f64 {
        (self.primal_value - self.dual_value).abs()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Capabilities {
    pub psd: bool,
    pub duals: bool,
}

pub trait ConicSolver: Send + Sync {
    fn name(&self) -> &'static str;

    fn capabilities(&self) -> Capabilities;

    fn solve(&self, problem: &ConicProblem, settings: &SolverSettings) -> Result<SolveReport>;
}

/// Ordered set of solver adapters; problems go to the first adapter that can handle them.
pub struct SolverRegistry {
    backends: Vec<Box<dyn ConicSolver>>,
}

impl SolverRegistry {
    pub fn empty() -> Self {
        SolverRegistry { backends: Vec::new() }
    }

    pub fn register(&mut self, backend: Box<dyn ConicSolver>) -> Result<()> {
        if !backend.capabilities().duals {
            return Err(Error::Solver(format!("backend '{}' does not return dual solutions", backend.name())));
        }
        self.backends.push(backend);
        Ok(())
    }

    pub fn backend_names(&self) -> Vec<&'static str> {
        self.backends.iter().map(|b| b.name()).collect()
    }

    /// Picks the first adapter able to handle the problem's cones. LP-only
    /// problems may therefore be routed to an LP-only adapter registered
    /// ahead of the PSD-capable one.
    pub fn select(&self, problem: &ConicProblem) -> Result<&dyn ConicSolver> {
        let needs_psd = problem.has_psd();
        self.backends
            .iter()
            .find(|b| !needs_psd || b.capabilities().psd)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::Solver("no registered backend supports this problem".into()))
    }

    /// Solves, retrying on numerical failure first with the objective
    /// rescaled to unit magnitude and then with neighbouring regularization
    /// constants. The returned status always reflects the final attempt.
    pub fn solve(&self, problem: &ConicProblem, settings: &SolverSettings) -> Result<SolveReport> {
        problem.validate()?;
        let backend = self.select(problem)?;
        let mut report = backend.solve(problem, settings)?;
        if report.status != SolveStatus::Failed {
            return Ok(report);
        }
        let largest = problem.objective().iter().map(|(_, c)| c.abs()).fold(0.0, f64::max);
        if largest > 0.0 && (largest - 1.0).abs() > 1e-12 {
            let scale = 1.0 / largest;
            let mut scaled = problem.clone();
            scaled.scale_objective(scale);
            report = unscale(backend.solve(&scaled, settings)?, scale);
            if report.status != SolveStatus::Failed {
                return Ok(report);
            }
        }
        for factor in [0.1, 10.0] {
            let alt =
                SolverSettings { static_regularization: settings.static_regularization * factor, ..settings.clone() };
            report = backend.solve(problem, &alt)?;
            if report.status != SolveStatus::Failed {
                return Ok(report);
            }
        }
        Ok(report)
    }
}

fn unscale(mut report: SolveReport, scale: f64) -> SolveReport {
    report.primal_value /= scale;
    report.dual_value /= scale;
    report.equality_duals.iter_mut().for_each(|y| *y /= scale);
    for dual in &mut report.cone_duals {
        match dual {
            ConeDual::Nonnegative(v) => v.iter_mut().for_each(|z| *z /= scale),
            ConeDual::Psd { matrix, .. } => matrix.iter_mut().for_each(|z| *z /= scale),
        }
    }
    report.objective_scale = scale;
    report
}

impl Default for SolverRegistry {
    fn default() -> Self {
        let mut registry = SolverRegistry::empty();
        registry.register(Box::new(ClarabelSolver)).expect("clarabel returns duals");
        registry
    }
}

/// Solves with the default registry.
pub fn solve(problem: &ConicProblem, settings: &SolverSettings) -> Result<SolveReport> {
    SolverRegistry::default().solve(problem, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn trivial_lp() {
        // max x  s.t.  1 - x >= 0,  x >= 0
        let mut p = ConicProblem::new();
        let x = p.add_variables("x", 1);
        p.add_objective_term(x, 1.0);
        p.add_cone(ConeConstraint::Nonnegative(vec![
            AffineExpr { terms: vec![(x, -1.0)], constant: 1.0 },
            AffineExpr::variable(x),
        ]));
        let r = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(r.primal_value, 1.0, epsilon = 1e-7);
        assert!(r.gap() <= 1e-7);
        match &r.cone_duals[0] {
            ConeDual::Nonnegative(z) => {
                assert_abs_diff_eq!(z[0], 1.0, epsilon = 1e-6);
                assert!(z[1].abs() < 1e-6);
            }
            other => panic!("unexpected dual {other:?}"),
        }
    }

    #[test]
    fn two_by_two_psd() {
        // max G01  s.t.  G00 = G11 = 1,  G psd
        let mut p = ConicProblem::new();
        let g = p.add_variables("G", 3);
        p.add_objective_term(g + 1, 1.0);
        p.add_equality(vec![(g, 1.0)], 1.0);
        p.add_equality(vec![(g + 2, 1.0)], 1.0);
        p.add_cone(ConeConstraint::Psd {
            dim: 2,
            entries: vec![AffineExpr::variable(g), AffineExpr::variable(g + 1), AffineExpr::variable(g + 2)],
        });
        let r = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(r.primal_value, 1.0, epsilon = 1e-7);
        // Dual identity: sum_k y_k g_k - G'Z = c
        let ConeDual::Psd { matrix, .. } = &r.cone_duals[0] else { panic!() };
        assert_abs_diff_eq!(r.equality_duals[0] - matrix[0], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(-(matrix[1] + matrix[2]), 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.equality_duals[1] - matrix[3], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.equality_duals[0] + r.equality_duals[1], r.dual_value, epsilon = 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut p = ConicProblem::new();
        let x = p.add_variables("x", 1);
        p.add_objective_term(x, 1.0);
        p.add_equality(vec![(x, 1.0)], -1.0);
        p.add_cone(ConeConstraint::Nonnegative(vec![AffineExpr::variable(x)]));
        assert_eq!(solve(&p, &SolverSettings::default()).unwrap().status, SolveStatus::Infeasible);

        let mut p = ConicProblem::new();
        let x = p.add_variables("x", 1);
        p.add_objective_term(x, 1.0);
        p.add_cone(ConeConstraint::Nonnegative(vec![AffineExpr::variable(x)]));
        assert_eq!(solve(&p, &SolverSettings::default()).unwrap().status, SolveStatus::Unbounded);
    }

    struct NoDuals;

    impl ConicSolver for NoDuals {
        fn name(&self) -> &'static str {
            "no-duals"
        }
        fn capabilities(&self) -> Capabilities {
            Capabilities { psd: false, duals: false }
        }
        fn solve(&self, _: &ConicProblem, _: &SolverSettings) -> Result<SolveReport> {
            unreachable!()
        }
    }

    #[test]
    fn registry_rejects_adapters_without_duals() {
        let mut registry = SolverRegistry::empty();
        assert!(registry.register(Box::new(NoDuals)).is_err());
        assert!(registry.backend_names().is_empty());
        let p = ConicProblem::new();
        assert!(registry.select(&p).is_err());
    }

    #[test]
    fn repeated_solves_are_deterministic() {
        let mut p = ConicProblem::new();
        let g = p.add_variables("G", 3);
        p.add_objective_term(g + 1, 1.0);
        p.add_objective_term(g, -0.3);
        p.add_equality(vec![(g, 1.0), (g + 2, 1.0)], 1.0);
        p.add_cone(ConeConstraint::Psd {
            dim: 2,
            entries: vec![AffineExpr::variable(g), AffineExpr::variable(g + 1), AffineExpr::variable(g + 2)],
        });
        let first = solve(&p, &SolverSettings::default()).unwrap();
        for _ in 0..3 {
            let again = solve(&p, &SolverSettings::default()).unwrap();
            assert!((again.primal_value - first.primal_value).abs() <= 1e-8);
        }
    }
}
