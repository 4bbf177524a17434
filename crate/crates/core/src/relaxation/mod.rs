//! Moment-matrix relaxations of the quantum set.
//!
//! A [`MomentStructure`] is indexed by a [`MonomialBasis`] of projector
//! words. Entry `(i, j)` of the moment matrix is the expectation of
//! `w_i^† w_j`; entries sharing a canonical moment share one variable, and
//! variable 0 is the identity moment (the block weight). The last outcome of
//! every input is eliminated by completeness, so `P(ab|xy)` is an affine
//! combination of the moments `1`, `A_{a|x}`, `B_{b|y}` and `A_{a|x} B_{b|y}`.

mod words;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::json;

pub use words::{Projector, Word};

use crate::bell::{Behavior, BellExpression, Cell, Scenario};
use crate::error::{Error, Result};
use crate::solver::{
    solve, triu_index, triu_len, AffineExpr, ConeConstraint, ConeDual, ConicProblem, EqualityConstraint, SolverSettings,
};

/// Largest moment matrix the builder will produce.
pub const MAX_MATRIX_SIZE: usize = 2000;

/// Relaxation used to model each strategy block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Level {
    /// Words `{1} ∪ A ∪ B ∪ AB`.
    #[default]
    Local1,
    /// All canonical words of length at most `k`.
    Npa(usize),
    /// No-signalling polytope; blocks are linear rather than PSD.
    NoSignalling,
}

impl Level {
    pub fn is_psd(self) -> bool {
        !matches!(self, Level::NoSignalling)
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Local1 => f.write_str("local-1"),
            Level::Npa(k) => write!(f, "npa-{k}"),
            Level::NoSignalling => f.write_str("ns"),
        }
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "local-1" | "local1" | "1+ab" => Ok(Level::Local1),
            "ns" | "no-signalling" | "no-signaling" => Ok(Level::NoSignalling),
            _ => {
                let k = t
                    .strip_prefix("npa-")
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k >= 1)
                    .ok_or_else(|| Error::UnsupportedLevel(s.to_string()))?;
                Ok(Level::Npa(k))
            }
        }
    }
}

impl Serialize for Level {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Level {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ordered, canonical operator words indexing the moment matrix; the identity comes first.
#[derive(Clone, Debug, PartialEq)]
pub struct MonomialBasis {
    scenario: Scenario,
    level: Level,
    words: Vec<Word>,
}

impl MonomialBasis {
    pub fn new(scenario: Scenario, level: Level) -> Result<Self> {
        let (ix, oa) = (scenario.inputs_a(), scenario.outputs_a());
        let (iy, ob) = (scenario.inputs_b(), scenario.outputs_b());
        let mut words = Vec::new();
        let push_products = |la: usize, lb: usize, words: &mut Vec<Word>| {
            for a in words::party_products(ix, oa, la) {
                for b in words::party_products(iy, ob, lb) {
                    words.push(Word::new(&a, &b).expect("generated products are nonzero"));
                }
            }
        };
        match level {
            Level::Local1 => {
                push_products(0, 0, &mut words);
                push_products(1, 0, &mut words);
                push_products(0, 1, &mut words);
                push_products(1, 1, &mut words);
            }
            Level::Npa(k) if k >= 1 => {
                for len in 0..=k {
                    for la in (0..=len).rev() {
                        push_products(la, len - la, &mut words);
                        if words.len() > MAX_MATRIX_SIZE {
                            return Err(Error::UnsupportedLevel(format!(
                                "{level} in scenario {scenario} exceeds {MAX_MATRIX_SIZE} words"
                            )));
                        }
                    }
                }
            }
            _ => return Err(Error::UnsupportedLevel(format!("{level} has no moment matrix"))),
        }
        Ok(MonomialBasis { scenario, level, words })
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Interned canonical moments.
#[derive(Clone, Debug, Default)]
struct MomentTable {
    index: HashMap<Word, usize>,
    moments: Vec<Word>,
}

impl MomentTable {
    fn intern(&mut self, word: &Word) -> usize {
        let key = word.moment_key();
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        self.moments.push(key.clone());
        self.index.insert(key, self.moments.len() - 1);
        self.moments.len() - 1
    }

    fn lookup(&self, word: &Word) -> Option<usize> {
        self.index.get(&word.moment_key()).copied()
    }
}

/// Expansion of one party's projector over non-eliminated words.
fn projector_expansion(outputs: usize, input: usize, outcome: usize, alice: bool) -> Vec<(Word, f64)> {
    let single = |o: usize| if alice { Word::alice(input, o) } else { Word::bob(input, o) };
    if outcome + 1 < outputs {
        vec![(single(outcome), 1.0)]
    } else {
        let mut terms = vec![(Word::identity(), 1.0)];
        terms.extend((0..outputs - 1).map(|o| (single(o), -1.0)));
        terms
    }
}

/// Sparse expansion of every cell `P(ab|xy)` in terms of interned moments.
fn build_cell_map(
    scenario: &Scenario,
    mut var_of: impl FnMut(&Word) -> Result<usize>,
) -> Result<Vec<Vec<(usize, f64)>>> {
    let mut map = Vec::with_capacity(scenario.num_cells());
    for cell in scenario.cells() {
        let ea = projector_expansion(scenario.outputs_a(), cell.x, cell.a, true);
        let eb = projector_expansion(scenario.outputs_b(), cell.y, cell.b, false);
        let mut terms: Vec<(usize, f64)> = Vec::new();
        for (wa, ca) in &ea {
            for (wb, cb) in &eb {
                let w = wa.mul(wb).expect("different parties never annihilate");
                let var = var_of(&w)?;
                match terms.iter_mut().find(|(v, _)| *v == var) {
                    Some(t) => t.1 += ca * cb,
                    None => terms.push((var, ca * cb)),
                }
            }
        }
        terms.retain(|&(_, c)| c != 0.0);
        terms.sort_by_key(|&(v, _)| v);
        map.push(terms);
    }
    Ok(map)
}

/// Cells whose reconstruction, for a no-signalling target, implies every other cell:
/// `(a,b,x,y)` with both outcomes non-last, `(a,last,x,0)`, `(last,b,0,y)` and `(last,last,0,0)`.
pub fn independent_cells(scenario: &Scenario) -> Vec<Cell> {
    let (la, lb) = (scenario.outputs_a() - 1, scenario.outputs_b() - 1);
    scenario
        .cells()
        .filter(|c| match (c.a == la, c.b == lb) {
            (false, false) => true,
            (false, true) => c.y == 0,
            (true, false) => c.x == 0,
            (true, true) => c.x == 0 && c.y == 0,
        })
        .collect()
}

/// Moment-matrix template `Γ(x) = Σ_i F_i x_i` for one block.
#[derive(Clone, Debug)]
pub struct MomentStructure {
    basis: MonomialBasis,
    moments: Vec<Word>,
    /// Row-major `n × n`; `None` where the product vanishes.
    entries: Vec<Option<usize>>,
    cell_map: Vec<Vec<(usize, f64)>>,
}

/// Builds the moment-matrix template of a PSD level.
pub fn build_structure(scenario: Scenario, level: Level) -> Result<MomentStructure> {
    let basis = MonomialBasis::new(scenario, level)?;
    let n = basis.len();
    let mut table = MomentTable::default();
    table.intern(&Word::identity());
    let mut entries = vec![None; n * n];
    for i in 0..n {
        let left = basis.words[i].adjoint();
        for j in i..n {
            if let Some(w) = left.mul(&basis.words[j]) {
                let v = table.intern(&w);
                entries[i * n + j] = Some(v);
                entries[j * n + i] = Some(v);
            }
        }
    }
    let cell_map = build_cell_map(&scenario, |w| {
        table.lookup(w).ok_or_else(|| Error::UnsupportedLevel(format!("{level} does not contain the moment {w}")))
    })?;
    Ok(MomentStructure { basis, moments: table.moments, entries, cell_map })
}

impl MomentStructure {
    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn scenario(&self) -> Scenario {
        self.basis.scenario
    }

    pub fn level(&self) -> Level {
        self.basis.level
    }

    /// Side length of the moment matrix.
    pub fn size(&self) -> usize {
        self.basis.len()
    }

    pub fn num_vars(&self) -> usize {
        self.moments.len()
    }

    /// Canonical word of each moment variable.
    pub fn moments(&self) -> &[Word] {
        &self.moments
    }

    /// Index of the moment pinned by normalization (the identity).
    pub fn normalization_var(&self) -> usize {
        0
    }

    pub fn entry(&self, row: usize, col: usize) -> Option<usize> {
        self.entries[row * self.size() + col]
    }

    /// `f_i(ab|xy)` for one cell, as sparse `(variable, coefficient)` pairs.
    pub fn cell_terms(&self, cell_index: usize) -> &[(usize, f64)] {
        &self.cell_map[cell_index]
    }

    /// All nonzero entries `(row, col, 1)` of `F_i`, both triangles.
    pub fn f_matrix(&self, var: usize) -> Vec<(usize, usize, f64)> {
        let n = self.size();
        (0..n * n).filter(|&k| self.entries[k] == Some(var)).map(|k| (k / n, k % n, 1.0)).collect()
    }

    /// Dense row-major `Γ(x)`.
    pub fn gamma(&self, x: &[f64]) -> Vec<f64> {
        self.entries.iter().map(|e| e.map_or(0.0, |v| x[v])).collect()
    }

    /// PSD cone on `Γ(x[offset..])`.
    pub fn psd_cone(&self, offset: usize) -> ConeConstraint {
        let n = self.size();
        let mut entries = vec![AffineExpr::default(); triu_len(n)];
        for col in 0..n {
            for row in 0..=col {
                if let Some(v) = self.entry(row, col) {
                    entries[triu_index(row, col)] = AffineExpr::variable(offset + v);
                }
            }
        }
        ConeConstraint::Psd { dim: n, entries }
    }

    /// `Tr(F_i M)` for every variable `i`.
    pub fn trace_with(&self, matrix: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_vars()];
        for (k, e) in self.entries.iter().enumerate() {
            if let Some(v) = e {
                out[*v] += matrix[k];
            }
        }
        out
    }

    /// Equalities pinning a single normalized block to `P`: the identity moment
    /// equals 1 and every cell expansion equals `P(ab|xy)`.
    pub fn behavior_constraints(&self, p: &Behavior) -> Result<Vec<EqualityConstraint>> {
        self.scenario().ensure_same(&p.scenario())?;
        let mut out = vec![EqualityConstraint { terms: vec![(self.normalization_var(), 1.0)], rhs: 1.0 }];
        out.extend(
            self.cell_map
                .iter()
                .zip(p.probabilities())
                .map(|(terms, &rhs)| EqualityConstraint { terms: terms.clone(), rhs }),
        );
        Ok(out)
    }

    /// Sparse triplet dump of every `F_i` and the `f_i(ab|xy)` map.
    pub fn to_json(&self) -> serde_json::Value {
        let f_mats: Vec<_> = (0..self.num_vars())
            .map(|i| {
                json!({
                    "var": i,
                    "moment": self.moments[i].to_string(),
                    "entries": self.f_matrix(i).iter().map(|&(r, c, v)| json!([r, c, v])).collect::<Vec<_>>(),
                })
            })
            .collect();
        json!({
            "scenario": self.scenario(),
            "level": self.level(),
            "size": self.size(),
            "num_vars": self.num_vars(),
            "normalization_var": self.normalization_var(),
            "words": self.basis.words.iter().map(Word::to_string).collect::<Vec<_>>(),
            "F": f_mats,
            "f": cell_map_json(&self.scenario(), &self.cell_map),
        })
    }
}

fn cell_map_json(scenario: &Scenario, map: &[Vec<(usize, f64)>]) -> serde_json::Value {
    scenario
        .cells()
        .zip(map)
        .map(|(c, terms)| {
            json!({
                "cell": [c.a, c.b, c.x, c.y],
                "terms": terms.iter().map(|&(v, k)| json!([v, k])).collect::<Vec<_>>(),
            })
        })
        .collect()
}

/// Linear block model: the no-signalling moments `1, A, B, AB` with every cell nonnegative.
#[derive(Clone, Debug)]
pub struct NoSignallingStructure {
    scenario: Scenario,
    moments: Vec<Word>,
    cell_map: Vec<Vec<(usize, f64)>>,
}

impl NoSignallingStructure {
    pub fn new(scenario: Scenario) -> Self {
        let mut table = MomentTable::default();
        table.intern(&Word::identity());
        let cell_map = build_cell_map(&scenario, |w| Ok(table.intern(w))).expect("interning cannot fail");
        NoSignallingStructure { scenario, moments: table.moments, cell_map }
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn num_vars(&self) -> usize {
        self.moments.len()
    }

    pub fn moments(&self) -> &[Word] {
        &self.moments
    }

    pub fn cell_terms(&self, cell_index: usize) -> &[(usize, f64)] {
        &self.cell_map[cell_index]
    }

    /// Nonnegativity of every cell of the block at `x[offset..]`.
    pub fn nonnegative_cone(&self, offset: usize) -> ConeConstraint {
        ConeConstraint::Nonnegative(
            self.cell_map
                .iter()
                .map(|terms| AffineExpr { terms: terms.iter().map(|&(v, c)| (offset + v, c)).collect(), constant: 0.0 })
                .collect(),
        )
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "scenario": self.scenario,
            "level": Level::NoSignalling,
            "num_vars": self.num_vars(),
            "moments": self.moments.iter().map(Word::to_string).collect::<Vec<_>>(),
            "f": cell_map_json(&self.scenario, &self.cell_map),
        })
    }
}

/// Per-block model used by the guessing programs.
#[derive(Clone, Debug)]
pub enum BlockModel {
    Moment(MomentStructure),
    NoSignalling(NoSignallingStructure),
}

impl BlockModel {
    pub fn new(scenario: Scenario, level: Level) -> Result<Self> {
        match level {
            Level::NoSignalling => Ok(BlockModel::NoSignalling(NoSignallingStructure::new(scenario))),
            _ => build_structure(scenario, level).map(BlockModel::Moment),
        }
    }

    pub fn level(&self) -> Level {
        match self {
            BlockModel::Moment(m) => m.level(),
            BlockModel::NoSignalling(_) => Level::NoSignalling,
        }
    }

    pub fn scenario(&self) -> Scenario {
        match self {
            BlockModel::Moment(m) => m.scenario(),
            BlockModel::NoSignalling(n) => n.scenario(),
        }
    }

    pub fn num_vars(&self) -> usize {
        match self {
            BlockModel::Moment(m) => m.num_vars(),
            BlockModel::NoSignalling(n) => n.num_vars(),
        }
    }

    /// Variable holding the block weight.
    pub fn weight_var(&self) -> usize {
        0
    }

    pub fn cell_terms(&self, cell_index: usize) -> &[(usize, f64)] {
        match self {
            BlockModel::Moment(m) => m.cell_terms(cell_index),
            BlockModel::NoSignalling(n) => n.cell_terms(cell_index),
        }
    }

    /// Value of `P(ab|xy)` for a block with moments `x`.
    pub fn cell_value(&self, cell_index: usize, x: &[f64]) -> f64 {
        self.cell_terms(cell_index).iter().map(|&(v, c)| c * x[v]).sum()
    }

    pub fn cone(&self, offset: usize) -> ConeConstraint {
        match self {
            BlockModel::Moment(m) => m.psd_cone(offset),
            BlockModel::NoSignalling(n) => n.nonnegative_cone(offset),
        }
    }

    /// `G' Z` restricted to this block's variables, where `e(x) = G x` is the block's cone map.
    pub fn cone_adjoint(&self, dual: &ConeDual) -> Result<Vec<f64>> {
        match (self, dual) {
            (BlockModel::Moment(m), ConeDual::Psd { dim, matrix }) if *dim == m.size() => Ok(m.trace_with(matrix)),
            (BlockModel::NoSignalling(n), ConeDual::Nonnegative(z)) if z.len() == n.cell_map.len() => {
                let mut out = vec![0.0; n.num_vars()];
                for (terms, &zj) in n.cell_map.iter().zip(z) {
                    for &(v, c) in terms {
                        out[v] += c * zj;
                    }
                }
                Ok(out)
            }
            _ => Err(Error::Solver("cone dual does not match the block model".into())),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            BlockModel::Moment(m) => m.to_json(),
            BlockModel::NoSignalling(n) => n.to_json(),
        }
    }
}

/// Largest value of `expr` over one normalized block of the relaxation.
pub fn max_bell_value(expr: &BellExpression, level: Level, settings: &SolverSettings) -> Result<f64> {
    let model = BlockModel::new(expr.scenario(), level)?;
    let mut prob = ConicProblem::new();
    let off = prob.add_variables("block", model.num_vars());
    prob.add_equality(vec![(off + model.weight_var(), 1.0)], 1.0);
    for (cell, &c) in expr.coefficients().iter().enumerate() {
        for &(v, k) in model.cell_terms(cell) {
            prob.add_objective_term(off + v, c * k);
        }
    }
    prob.add_cone(model.cone(off));
    let r = solve(&prob, settings)?;
    if !r.status.is_solved() {
        return Err(Error::Solver(format!("Bell maximization ended with status {:?}", r.status)));
    }
    Ok(r.primal_value)
}
