use std::time::Duration;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, PSDTriangleConeT, SolverStatus, SupportedConeT,
    ZeroConeT,
};

use super::problem::{triu_len, ConeConstraint, ConicProblem};
use super::{Capabilities, ConeDual, ConicSolver, SolveReport, SolveStatus, SolverSettings};
use crate::error::{Error, Result};

/// Interior-point adapter around the Clarabel conic solver.
#[derive(Clone, Copy, Debug, Default)]
pub struct ClarabelSolver;

impl ConicSolver for ClarabelSolver {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { psd: true, duals: true }
    }

    fn solve(&self, problem: &ConicProblem, settings: &SolverSettings) -> Result<SolveReport> {
        let n = problem.num_vars();
        let sqrt2 = std::f64::consts::SQRT_2;

        // Clarabel form: min q'x  s.t.  A x + s = b,  s in K.
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut b = Vec::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

        let mut m = 0;
        for eq in problem.equalities() {
            for &(j, c) in &eq.terms {
                rows.push(m);
                cols.push(j);
                vals.push(c);
            }
            b.push(eq.rhs);
            m += 1;
        }
        if !problem.equalities().is_empty() {
            cones.push(ZeroConeT(problem.equalities().len()));
        }
        for cone in problem.cones() {
            match cone {
                ConeConstraint::Nonnegative(exprs) => {
                    for e in exprs {
                        for &(j, c) in &e.terms {
                            rows.push(m);
                            cols.push(j);
                            vals.push(-c);
                        }
                        b.push(e.constant);
                        m += 1;
                    }
                    cones.push(NonnegativeConeT(exprs.len()));
                }
                ConeConstraint::Psd { dim, entries } => {
                    let mut k = 0;
                    for col in 0..*dim {
                        for row in 0..=col {
                            let scale = if row == col { 1.0 } else { sqrt2 };
                            let e = &entries[k];
                            for &(j, c) in &e.terms {
                                rows.push(m);
                                cols.push(j);
                                vals.push(-c * scale);
                            }
                            b.push(e.constant * scale);
                            m += 1;
                            k += 1;
                        }
                    }
                    cones.push(PSDTriangleConeT(*dim));
                }
            }
        }

        let a = CscMatrix::new_from_triplets(m, n, rows, cols, vals);
        let p = CscMatrix::<f64>::zeros((n, n));
        let q: Vec<f64> = problem.objective_vector().iter().map(|c| -c).collect();

        let clarabel_settings = DefaultSettingsBuilder::default()
            .verbose(settings.verbose)
            .max_iter(settings.max_iter)
            .tol_gap_abs(settings.gap_tol)
            .tol_gap_rel(settings.gap_tol)
            .tol_feas(settings.feasibility_tol)
            .chordal_decomposition_enable(false)
            .presolve_enable(false)
            .static_regularization_constant(settings.static_regularization)
            .build()
            .map_err(|e| Error::Solver(format!("invalid settings: {e:?}")))?;

        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, clarabel_settings)
            .map_err(|e| Error::Solver(format!("problem setup failed: {e:?}")))?;
        solver.solve();
        let sol = &solver.solution;

        let primal_value = -sol.obj_val;
        let dual_value = -sol.obj_val_dual;
        let status = match sol.status {
            SolverStatus::Solved => SolveStatus::Optimal,
            SolverStatus::AlmostSolved if (primal_value - dual_value).abs() <= settings.accept_gap => {
                SolveStatus::NearOptimal
            }
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
            _ => SolveStatus::Failed,
        };

        let z = &sol.z;
        let neq = problem.equalities().len();
        let equality_duals = z[..neq].to_vec();
        let mut offset = neq;
        let mut cone_duals = Vec::with_capacity(problem.cones().len());
        for cone in problem.cones() {
            match cone {
                ConeConstraint::Nonnegative(exprs) => {
                    cone_duals.push(ConeDual::Nonnegative(z[offset..offset + exprs.len()].to_vec()));
                    offset += exprs.len();
                }
                ConeConstraint::Psd { dim, .. } => {
                    let d = *dim;
                    let mut matrix = vec![0.0; d * d];
                    let mut k = offset;
                    for col in 0..d {
                        for row in 0..=col {
                            let v = if row == col { z[k] } else { z[k] / sqrt2 };
                            matrix[row * d + col] = v;
                            matrix[col * d + row] = v;
                            k += 1;
                        }
                    }
                    cone_duals.push(ConeDual::Psd { dim: d, matrix });
                    offset += triu_len(d);
                }
            }
        }

        Ok(SolveReport {
            status,
            primal_value,
            dual_value,
            x: sol.x.clone(),
            equality_duals,
            cone_duals,
            iterations: sol.iterations,
            solve_time: Duration::from_secs_f64(sol.solve_time.max(0.0)),
            objective_scale: 1.0,
            backend: "clarabel",
            message: match status {
                SolveStatus::Optimal => None,
                _ => Some(format!("{:?}", sol.status)),
            },
        })
    }
}
