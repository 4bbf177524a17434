//! From raw coincidence counts to a no-signalling behavior.
//!
//! Counts per setting pair give setting-dependent marginals `⟨A_xy⟩`, `⟨B_xy⟩`
//! and correlators `⟨A_xy B_xy⟩`. Statistical noise makes the marginals depend
//! on the remote setting; averaging them over the remote input is the
//! orthogonal projection onto the no-signalling subspace.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::bell::{behavior_from_correlators, Behavior, CorrelatorSet, Scenario};
use crate::error::{Error, Result};
use crate::relaxation::{build_structure, independent_cells, Level};
use crate::solver::{solve, AffineExpr, ConeConstraint, ConicProblem, SolverSettings};

/// Counts for one setting pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettingCounts {
    pub x: usize,
    pub y: usize,
    /// Trials.
    #[serde(rename = "N")]
    pub n: u64,
    /// Coincidences (both detectors report outcome 0).
    #[serde(rename = "C")]
    pub c: u64,
    /// Alice singles.
    #[serde(rename = "SA")]
    pub sa: u64,
    /// Bob singles.
    #[serde(rename = "SB")]
    pub sb: u64,
}

impl SettingCounts {
    pub fn validate(&self) -> Result<()> {
        let (x, y) = (self.x, self.y);
        if self.n == 0 {
            return Err(Error::InvalidCounts(format!("setting ({x},{y}): N must be positive")));
        }
        if self.c > self.sa.min(self.sb) || self.sa.max(self.sb) > self.n {
            return Err(Error::InvalidCounts(format!("setting ({x},{y}): need C <= min(SA, SB) and SA, SB <= N")));
        }
        Ok(())
    }
}

/// One complete set of counts, one row per setting pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountsRecord {
    inputs_a: usize,
    inputs_b: usize,
    /// Row-major over `(x, y)`.
    rows: Vec<SettingCounts>,
}

impl CountsRecord {
    /// Sorts the rows and checks that every setting pair appears exactly once.
    pub fn new(mut rows: Vec<SettingCounts>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidCounts("no rows".into()));
        }
        rows.sort_by_key(|r| (r.x, r.y));
        let inputs_a = rows.iter().map(|r| r.x).max().unwrap_or(0) + 1;
        let inputs_b = rows.iter().map(|r| r.y).max().unwrap_or(0) + 1;
        if rows.len() != inputs_a * inputs_b {
            return Err(Error::InvalidCounts(format!(
                "expected {} rows for {inputs_a}x{inputs_b} settings, found {}",
                inputs_a * inputs_b,
                rows.len()
            )));
        }
        for (k, r) in rows.iter().enumerate() {
            if (r.x, r.y) != (k / inputs_b, k % inputs_b) {
                return Err(Error::InvalidCounts(format!(
                    "setting ({},{}) missing or repeated",
                    k / inputs_b,
                    k % inputs_b
                )));
            }
            r.validate()?;
        }
        Ok(CountsRecord { inputs_a, inputs_b, rows })
    }

    /// Reads CSV with header `x,y,N,C,SA,SB`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<SettingCounts>, _>>()?;
        CountsRecord::new(rows)
    }

    pub fn to_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn inputs_a(&self) -> usize {
        self.inputs_a
    }

    pub fn inputs_b(&self) -> usize {
        self.inputs_b
    }

    pub fn rows(&self) -> &[SettingCounts] {
        &self.rows
    }

    pub fn get(&self, x: usize, y: usize) -> &SettingCounts {
        &self.rows[x * self.inputs_b + y]
    }
}

/// Setting-dependent correlators; all tables are indexed `[x][y]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawCorrelators {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "AB")]
    pub ab: Vec<Vec<f64>>,
}

impl RawCorrelators {
    fn shape(&self) -> Result<(usize, usize)> {
        let ix = self.a.len();
        let iy = self.a.first().map_or(0, Vec::len);
        let ok = ix > 0
            && iy > 0
            && [&self.a, &self.b, &self.ab].iter().all(|t| t.len() == ix && t.iter().all(|row| row.len() == iy));
        if !ok {
            return Err(Error::InvalidBehavior(
                "per-setting correlator tables must share one rectangular shape".into(),
            ));
        }
        Ok((ix, iy))
    }

    /// Flattened coordinates `(A_xy, B_xy, AB_xy)` in row-major order.
    pub fn to_vector(&self) -> Vec<f64> {
        [&self.a, &self.b, &self.ab].iter().flat_map(|t| t.iter().flatten().copied()).collect()
    }

    /// Raw coordinates of a no-signalling correlator set.
    pub fn from_no_signalling(c: &CorrelatorSet) -> Self {
        let (ix, iy) = (c.a.len(), c.b.len());
        RawCorrelators {
            a: (0..ix).map(|x| vec![c.a[x]; iy]).collect(),
            b: (0..ix).map(|_| c.b.clone()).collect(),
            ab: c.ab.clone(),
        }
    }

    /// Largest dependence of a marginal on the remote setting.
    pub fn signalling(&self) -> f64 {
        let spread = |vals: &mut dyn Iterator<Item = f64>| {
            let v: Vec<f64> = vals.collect();
            v.iter().copied().fold(f64::NEG_INFINITY, f64::max) - v.iter().copied().fold(f64::INFINITY, f64::min)
        };
        let ix = self.a.len();
        let iy = self.a.first().map_or(0, Vec::len);
        let sa = (0..ix).map(|x| spread(&mut self.a[x].iter().copied())).fold(0.0, f64::max);
        let sb = (0..iy).map(|y| spread(&mut self.b.iter().map(|row| row[y]))).fold(0.0, f64::max);
        sa.max(sb)
    }
}

pub fn counts_to_correlators(rec: &CountsRecord) -> Result<RawCorrelators> {
    let table = |f: &dyn Fn(&SettingCounts) -> f64| -> Vec<Vec<f64>> {
        (0..rec.inputs_a).map(|x| (0..rec.inputs_b).map(|y| f(rec.get(x, y))).collect()).collect()
    };
    for r in rec.rows() {
        r.validate()?;
    }
    Ok(RawCorrelators {
        a: table(&|r| (2.0 * r.sa as f64 - r.n as f64) / r.n as f64),
        b: table(&|r| (2.0 * r.sb as f64 - r.n as f64) / r.n as f64),
        ab: table(&|r| (4.0 * r.c as f64 - 2.0 * r.sa as f64 - 2.0 * r.sb as f64 + r.n as f64) / r.n as f64),
    })
}

/// Averages each marginal over the remote input; joint correlators are kept.
pub fn project_no_signalling(raw: &RawCorrelators) -> Result<CorrelatorSet> {
    let (ix, iy) = raw.shape()?;
    let a = (0..ix).map(|x| raw.a[x].iter().sum::<f64>() / iy as f64).collect();
    let b = (0..iy).map(|y| raw.b.iter().map(|row| row[y]).sum::<f64>() / ix as f64).collect();
    CorrelatorSet::new(a, b, raw.ab.clone())
}

/// Raw and projected correlators with the Euclidean length of the correction.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProjectionReport {
    pub raw: RawCorrelators,
    pub projected: CorrelatorSet,
    pub residual_norm: f64,
    pub raw_signalling: f64,
    pub chsh: Option<f64>,
}

pub fn projection_report(raw: &RawCorrelators) -> Result<ProjectionReport> {
    let projected = project_no_signalling(raw)?;
    let back = RawCorrelators::from_no_signalling(&projected).to_vector();
    let residual_norm = raw.to_vector().iter().zip(&back).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
    let chsh = (projected.a.len() == 2 && projected.b.len() == 2).then(|| projected.chsh());
    Ok(ProjectionReport { raw: raw.clone(), projected, residual_norm, raw_signalling: raw.signalling(), chsh })
}

/// Counts → correlators → projection → behavior.
pub fn process_counts(rec: &CountsRecord) -> Result<(Behavior, ProjectionReport)> {
    let report = projection_report(&counts_to_correlators(rec)?)?;
    Ok((behavior_from_correlators(&report.projected)?, report))
}

/// Slack within which a behavior still counts as a member of the relaxation.
pub const MEMBERSHIP_TOLERANCE: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MembershipReport {
    pub level: Level,
    pub feasible: bool,
    /// Largest `t` with `Γ − t·1 ⪰ 0` over all completions of the moment
    /// matrix; the smallest probability for the no-signalling level.
    pub margin: f64,
}

/// Whether `p` admits a positive semidefinite moment matrix at `level`.
pub fn check_quantum_membership(p: &Behavior, level: Level) -> Result<MembershipReport> {
    p.ensure_no_signalling(1e-9)?;
    let margin = match level {
        Level::NoSignalling => p.probabilities().iter().copied().fold(f64::INFINITY, f64::min),
        _ => psd_margin(p, level)?,
    };
    Ok(MembershipReport { level, feasible: margin >= -MEMBERSHIP_TOLERANCE, margin })
}

fn psd_margin(p: &Behavior, level: Level) -> Result<f64> {
    let s: Scenario = p.scenario();
    let m = build_structure(s, level)?;
    let mut prob = ConicProblem::new();
    let off = prob.add_variables("moments", m.num_vars());
    let t = prob.add_variables("margin", 1);
    prob.add_objective_term(t, 1.0);
    prob.add_equality(vec![(off + m.normalization_var(), 1.0)], 1.0);
    for cell in independent_cells(&s) {
        let idx = s.index(cell.a, cell.b, cell.x, cell.y);
        prob.add_equality(m.cell_terms(idx).iter().map(|&(v, c)| (off + v, c)).collect(), p.probabilities()[idx]);
    }
    let ConeConstraint::Psd { dim, mut entries } = m.psd_cone(off) else {
        return Err(Error::UnsupportedLevel(level.to_string()));
    };
    for d in 0..dim {
        entries[crate::solver::triu_index(d, d)].terms.push((t, -1.0));
    }
    // keeps the problem bounded when Γ has free entries
    prob.add_cone(ConeConstraint::Nonnegative(vec![AffineExpr { terms: vec![(t, -1.0)], constant: 1.0 }]));
    prob.add_cone(ConeConstraint::Psd { dim, entries });
    let r = solve(&prob, &SolverSettings::default())?;
    if !r.status.is_solved() {
        return Err(Error::Solver(format!("membership program ended with status {:?}", r.status)));
    }
    Ok(r.primal_value)
}
