//! Bell-expression certificates read off the dual of a guessing program.
//!
//! With equality multipliers `y_k` and cone duals `Z_λ`, the certificate is
//! `c = Σ_k y_k r_k` where `r_k` is the cell functional of equality row `k`,
//! and `M_λ = -Z_λ`. Dual feasibility reads, for every block `λ` and moment `i`,
//!
//! ```text
//! Σ_abxy f_i(ab|xy) c_abxy + Tr(F_i M_λ) = Σ_xy p(x,y) f_i(α_xy β_xy|xy),
//! ```
//!
//! and any behavior with Bell value `v = c·P` has guessing probability at most `v`.
//! For reconstruction programs `c` is supported on the independent cells,
//! which makes it a canonical representative of its no-signalling class.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bell::{Behavior, BellExpression, InputDistribution};
use crate::error::{Error, Result};
use crate::programs::{guessing_from_violation, GuessingProblem, ProgramConstraint, ProgramOptions};
use crate::relaxation::Level;
use crate::solver::{ConeDual, SolveReport};

/// Relative gap above which a certificate is flagged advisory.
pub const OPTIMAL_GAP: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub bell: BellExpression,
    /// Upper bound on the guessing probability (the dual objective).
    pub claimed_bound: f64,
    /// Value of the certificate at the certified behavior.
    pub bell_value: f64,
    pub primal_value: f64,
    pub gap: f64,
    /// Set when the relative gap exceeds [`OPTIMAL_GAP`].
    pub advisory: bool,
    pub level: Level,
    pub inputs: InputDistribution,
    /// SHA-256 of the defining behavior or Bell constraint, inputs and level.
    pub fingerprint: String,
    /// Largest dual-feasibility violation over all blocks and moments.
    pub dual_residual: f64,
    /// Largest eigenvalue over all `M_λ`; nonpositive up to rounding.
    pub max_block_eigenvalue: f64,
    #[serde(skip)]
    pub block_duals: Vec<ConeDual>,
}

fn negate(dual: &ConeDual) -> ConeDual {
    match dual {
        ConeDual::Nonnegative(z) => ConeDual::Nonnegative(z.iter().map(|v| -v).collect()),
        ConeDual::Psd { dim, matrix } => ConeDual::Psd { dim: *dim, matrix: matrix.iter().map(|v| -v).collect() },
    }
}

/// Largest eigenvalue (or entry, for the linear blocks) of a dual block.
fn max_eigenvalue(dual: &ConeDual) -> f64 {
    match dual {
        ConeDual::Nonnegative(z) => z.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ConeDual::Psd { dim, matrix } => {
            let m = DMatrix::from_row_slice(*dim, *dim, matrix);
            m.symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max)
        }
    }
}

pub fn fingerprint(problem: &GuessingProblem) -> String {
    let constraint = match problem.constraint() {
        ProgramConstraint::Behavior(p) => serde_json::json!({ "behavior": p }),
        ProgramConstraint::Violation { expr, v } => serde_json::json!({ "expression": expr, "value": v }),
    };
    let payload = serde_json::json!({
        "constraint": constraint,
        "support": problem.family().support(),
        "inputs": problem.input_distribution(),
        "level": problem.level(),
    });
    hex::encode(Sha256::digest(payload.to_string().as_bytes()))
}

/// Reorganizes the dual solution of a solved guessing program into a certificate.
pub fn extract_certificate(problem: &GuessingProblem, report: &SolveReport) -> Result<Certificate> {
    if !report.status.is_solved() {
        return Err(Error::DualUnavailable);
    }
    let rows = problem.row_functionals();
    let eqs = problem.conic().equalities();
    if report.equality_duals.len() != rows.len() || report.cone_duals.len() != problem.num_blocks() {
        return Err(Error::DualUnavailable);
    }
    let scenario = problem.family().scenario();
    let mut c = vec![0.0; scenario.num_cells()];
    for (y, f) in report.equality_duals.iter().zip(rows) {
        for (ci, fi) in c.iter_mut().zip(f) {
            *ci += y * fi;
        }
    }
    let bell_value: f64 = report.equality_duals.iter().zip(eqs).map(|(y, e)| y * e.rhs).sum();
    let bell = BellExpression::new(scenario, c)?;
    let block_duals: Vec<ConeDual> = report.cone_duals.iter().map(negate).collect();
    let gap = report.gap();
    let mut cert = Certificate {
        bell,
        claimed_bound: report.dual_value,
        bell_value,
        primal_value: report.primal_value,
        gap,
        advisory: gap / report.primal_value.abs().max(1.0) > OPTIMAL_GAP,
        level: problem.level(),
        inputs: problem.input_distribution(),
        fingerprint: fingerprint(problem),
        dual_residual: 0.0,
        max_block_eigenvalue: block_duals.iter().map(max_eigenvalue).fold(f64::NEG_INFINITY, f64::max),
        block_duals,
    };
    cert.dual_residual = dual_residual(problem, &cert)?;
    Ok(cert)
}

/// Largest violation of the dual-feasibility identity over all blocks and moments.
pub fn dual_residual(problem: &GuessingProblem, cert: &Certificate) -> Result<f64> {
    let model = problem.model();
    let nv = model.num_vars();
    let mut fc = vec![0.0; nv];
    for (cell, &c) in cert.bell.coefficients().iter().enumerate() {
        for &(v, k) in model.cell_terms(cell) {
            fc[v] += c * k;
        }
    }
    let obj = problem.conic().objective_vector();
    let mut worst = 0.0f64;
    for (b, m) in cert.block_duals.iter().enumerate() {
        let tr = model.cone_adjoint(m)?;
        let off = problem.block_offset(b);
        for i in 0..nv {
            worst = worst.max((fc[i] + tr[i] - obj[off + i]).abs());
        }
    }
    Ok(worst)
}

/// Re-bounds the guessing probability using only the certificate's value on `p`.
pub fn verify_certificate(
    cert: &Certificate,
    p: &Behavior,
    dist: &InputDistribution,
    opts: &ProgramOptions,
) -> Result<f64> {
    let v = cert.bell.evaluate(p)?;
    Ok(guessing_from_violation(&cert.bell, v, dist, opts)?.guessing_probability)
}

/// Least-squares match of a 2x2 binary certificate to `s (γ E00 + E01 + E10 − E11)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GammaFit {
    pub gamma: f64,
    pub scale: f64,
    /// Norm of the correlator coefficients left unexplained, relative to the fitted part.
    pub correlator_residual: f64,
    /// Norm of the marginal coefficients relative to the fitted correlator part.
    pub marginal_weight: f64,
}

pub fn fit_gamma(expr: &BellExpression) -> Result<GammaFit> {
    let s = expr.scenario();
    if !s.is_binary() || s.inputs_a() != 2 || s.inputs_b() != 2 {
        return Err(Error::InvalidScenario(format!("gamma fit needs the 2x2 binary scenario, found {s}")));
    }
    let t = expr.correlator_terms()?;
    // unknowns (u, w) = (s γ, s): e00 = u, e01 = w, e10 = w, e11 = -w
    let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, -1.0]);
    let e = DVector::from_row_slice(&[t.ab[0][0], t.ab[0][1], t.ab[1][0], t.ab[1][1]]);
    let sol = a
        .clone()
        .svd(true, true)
        .solve(&e, 1e-14)
        .map_err(|msg| Error::Solver(format!("least squares failed: {msg}")))?;
    let (u, w) = (sol[0], sol[1]);
    let fitted = &a * &sol;
    let fitted_norm = fitted.norm().max(f64::MIN_POSITIVE);
    let marginal: f64 = t.a.iter().chain(&t.b).map(|v| v * v).sum::<f64>().sqrt();
    Ok(GammaFit {
        gamma: if w != 0.0 { u / w } else { f64::INFINITY },
        scale: w,
        correlator_residual: (&e - &fitted).norm() / fitted_norm,
        marginal_weight: marginal / fitted_norm,
    })
}
