use std::fmt::Write as _;

use crate::error::{Error, Result};

/// `sum_k coeff_k * x[var_k] + constant`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn variable(index: usize) -> Self {
        AffineExpr { terms: vec![(index, 1.0)], constant: 0.0 }
    }

    pub fn constant(value: f64) -> Self {
        AffineExpr { terms: Vec::new(), constant: value }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }
}

/// `sum_k coeff_k * x[var_k] = rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct EqualityConstraint {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// Affine expressions constrained to lie in a cone.
#[derive(Clone, Debug, PartialEq)]
pub enum ConeConstraint {
    Nonnegative(Vec<AffineExpr>),
    /// Symmetric matrix given by its upper triangle in column-major order
    /// `(0,0), (0,1), (1,1), (0,2), ...`; see [`triu_index`].
    Psd {
        dim: usize,
        entries: Vec<AffineExpr>,
    },
}

impl ConeConstraint {
    pub fn len(&self) -> usize {
        match self {
            ConeConstraint::Nonnegative(rows) => rows.len(),
            ConeConstraint::Psd { entries, .. } => entries.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn rows(&self) -> &[AffineExpr] {
        match self {
            ConeConstraint::Nonnegative(rows) => rows,
            ConeConstraint::Psd { entries, .. } => entries,
        }
    }
}

/// Position of `(row, col)` in the column-major upper triangle (symmetric in its arguments).
#[inline]
pub fn triu_index(row: usize, col: usize) -> usize {
    let (r, c) = if row <= col { (row, col) } else { (col, row) };
    c * (c + 1) / 2 + r
}

#[inline]
pub fn triu_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// A contiguous, named range of decision variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VariableBlock {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

/// Maximize a linear objective over free variables subject to linear
/// equalities and affine cone memberships.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConicProblem {
    blocks: Vec<VariableBlock>,
    num_vars: usize,
    objective: Vec<(usize, f64)>,
    equalities: Vec<EqualityConstraint>,
    cones: Vec<ConeConstraint>,
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `len` new variables and returns the index of the first.
    pub fn add_variables(&mut self, name: impl Into<String>, len: usize) -> usize {
        let start = self.num_vars;
        self.blocks.push(VariableBlock { name: name.into(), start, len });
        self.num_vars += len;
        start
    }

    pub fn add_objective_term(&mut self, var: usize, coeff: f64) {
        if coeff != 0.0 {
            self.objective.push((var, coeff));
        }
    }

    pub fn add_equality(&mut self, terms: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.equalities.push(EqualityConstraint { terms, rhs });
        self.equalities.len() - 1
    }

    pub fn add_cone(&mut self, cone: ConeConstraint) -> usize {
        self.cones.push(cone);
        self.cones.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn scale_objective(&mut self, factor: f64) {
        self.objective.iter_mut().for_each(|(_, c)| *c *= factor);
    }

    pub fn variable_blocks(&self) -> &[VariableBlock] {
        &self.blocks
    }

    pub fn objective(&self) -> &[(usize, f64)] {
        &self.objective
    }

    pub fn equalities(&self) -> &[EqualityConstraint] {
        &self.equalities
    }

    pub fn cones(&self) -> &[ConeConstraint] {
        &self.cones
    }

    pub fn has_psd(&self) -> bool {
        self.cones.iter().any(|c| matches!(c, ConeConstraint::Psd { .. }))
    }

    /// Dense objective vector.
    pub fn objective_vector(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.num_vars];
        for &(i, v) in &self.objective {
            c[i] += v;
        }
        c
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|&(i, c)| c * x[i]).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let mut covered = 0;
        for block in &self.blocks {
            if block.start != covered {
                return Err(Error::Solver(format!("variable block '{}' is not contiguous", block.name)));
            }
            covered += block.len;
        }
        if covered != self.num_vars {
            return Err(Error::Solver("variables outside any block".into()));
        }
        let in_range = |terms: &[(usize, f64)]| terms.iter().all(|&(i, c)| i < self.num_vars && c.is_finite());
        if !in_range(&self.objective) {
            return Err(Error::Solver("objective references an unknown variable".into()));
        }
        if self.equalities.iter().any(|e| !in_range(&e.terms) || !e.rhs.is_finite()) {
            return Err(Error::Solver("equality references an unknown variable".into()));
        }
        for cone in &self.cones {
            if let ConeConstraint::Psd { dim, entries } = cone {
                if entries.len() != triu_len(*dim) {
                    return Err(Error::Solver(format!(
                        "PSD cone of dimension {dim} needs {} entries, found {}",
                        triu_len(*dim),
                        entries.len()
                    )));
                }
            }
            if cone.rows().iter().any(|e| !in_range(&e.terms) || !e.constant.is_finite()) {
                return Err(Error::Solver("cone row references an unknown variable".into()));
            }
        }
        Ok(())
    }

    /// Writes the problem in SDPA sparse format (`.dat-s`).
    ///
    /// SDPA minimizes `c'x` subject to `sum_i F_i x_i - F_0 >= 0`, so the
    /// objective is negated, each cone row `e(x)` contributes `F_i = coeffs`
    /// and `F_0 = -constant`, and equalities become pairs of diagonal entries.
    pub fn to_sdpa(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "\"maximization problem; objective negated for SDPA\"");
        let _ = writeln!(out, "{}", self.num_vars);

        let mut sizes: Vec<i64> = Vec::new();
        // (block, row, col, expr-or-equality) entries
        let mut lp_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
        for eq in &self.equalities {
            lp_rows.push((eq.terms.clone(), -eq.rhs));
            lp_rows.push((eq.terms.iter().map(|&(i, c)| (i, -c)).collect(), eq.rhs));
        }
        let mut psd_blocks = Vec::new();
        for cone in &self.cones {
            match cone {
                ConeConstraint::Nonnegative(rows) => {
                    lp_rows.extend(rows.iter().map(|r| (r.terms.clone(), r.constant)));
                }
                ConeConstraint::Psd { dim, entries } => psd_blocks.push((*dim, entries)),
            }
        }
        sizes.extend(psd_blocks.iter().map(|(d, _)| *d as i64));
        if !lp_rows.is_empty() {
            sizes.push(-(lp_rows.len() as i64));
        }
        let _ = writeln!(out, "{}", sizes.len());
        let _ = writeln!(out, "{}", sizes.iter().map(i64::to_string).collect::<Vec<_>>().join(" "));
        let c = self.objective_vector();
        let _ = writeln!(out, "{}", c.iter().map(|v| format!("{}", -v)).collect::<Vec<_>>().join(" "));

        let mut emit = |mat: usize, block: usize, i: usize, j: usize, v: f64| {
            if v != 0.0 {
                let _ = writeln!(out, "{mat} {block} {i} {j} {v}");
            }
        };
        for (b, (dim, entries)) in psd_blocks.iter().enumerate() {
            for col in 0..*dim {
                for row in 0..=col {
                    let e = &entries[triu_index(row, col)];
                    emit(0, b + 1, row + 1, col + 1, -e.constant);
                    for &(var, coeff) in &e.terms {
                        emit(var + 1, b + 1, row + 1, col + 1, coeff);
                    }
                }
            }
        }
        let lp_block = psd_blocks.len() + 1;
        for (k, (terms, constant)) in lp_rows.iter().enumerate() {
            emit(0, lp_block, k + 1, k + 1, -constant);
            for &(var, coeff) in terms {
                emit(var + 1, lp_block, k + 1, k + 1, coeff);
            }
        }
        out
    }
}
