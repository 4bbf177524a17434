//! Two-qubit quantum behaviors.
//!
//! States are `cos θ |00⟩ + sin θ |11⟩`; measurements are planar observables
//! `cos φ σ_z + sin φ σ_x` with outcome 0 on the `+1` eigenspace.

use std::f64::consts::{FRAC_PI_4, PI};

use argmin::core::{CostFunction, Error as ArgminError, Executor, State};
use argmin::solver::neldermead::NelderMead;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bell::{Behavior, BellExpression, InputDistribution, Scenario};
use crate::error::{Error, Result};
use crate::programs::{guessing_weighted, ProgramOptions};

/// Born-rule statistics of one pair of planar observables on the partially entangled state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairStatistics {
    pub mean_a: f64,
    pub mean_b: f64,
    pub correlation: f64,
}

impl PairStatistics {
    pub fn new(theta: f64, phi_a: f64, phi_b: f64) -> Self {
        let (c2, s2) = ((2.0 * theta).cos(), (2.0 * theta).sin());
        PairStatistics {
            mean_a: phi_a.cos() * c2,
            mean_b: phi_b.cos() * c2,
            correlation: phi_a.cos() * phi_b.cos() + phi_a.sin() * phi_b.sin() * s2,
        }
    }

    /// `P(a, b)` for ideal detectors.
    pub fn joint(&self, a: usize, b: usize) -> f64 {
        let sa = if a == 0 { 1.0 } else { -1.0 };
        let sb = if b == 0 { 1.0 } else { -1.0 };
        (1.0 + sa * self.mean_a + sb * self.mean_b + sa * sb * self.correlation) / 4.0
    }

    pub fn marginal_a(&self, a: usize) -> f64 {
        (1.0 + if a == 0 { self.mean_a } else { -self.mean_a }) / 2.0
    }

    pub fn marginal_b(&self, b: usize) -> f64 {
        (1.0 + if b == 0 { self.mean_b } else { -self.mean_b }) / 2.0
    }
}

/// Binary behavior of ideal planar measurements at the given angles.
pub fn two_qubit_behavior(theta: f64, alice: &[f64], bob: &[f64]) -> Result<Behavior> {
    if !theta.is_finite() || alice.iter().chain(bob).any(|v| !v.is_finite()) {
        return Err(Error::InvalidModel("angles must be finite".into()));
    }
    let s = Scenario::binary(alice.len(), bob.len())?;
    Behavior::from_fn(s, |c| PairStatistics::new(theta, alice[c.x], bob[c.y]).joint(c.a, c.b))
}

/// The `Φ+` point attaining the quantum maximum of CHSH.
pub fn tsirelson_behavior() -> Behavior {
    let a = [0.0, PI / 2.0];
    let b = [PI / 4.0, -PI / 4.0];
    two_qubit_behavior(FRAC_PI_4, &a, &b).expect("finite angles")
}

/// How missing detections enter the statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Binning {
    /// No-click is a third outcome, index 2.
    ThreeOutcome,
    /// No-click is relabelled as outcome 1.
    BinToOutcome1,
    /// Only the detector for outcome 0 exists; anything else reads as outcome 1.
    SingleDetector,
}

impl Binning {
    pub fn outputs(self) -> usize {
        match self {
            Binning::ThreeOutcome => 3,
            _ => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EberhardConfig {
    pub theta: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub eta: f64,
    pub binning: Binning,
}

impl EberhardConfig {
    pub fn validate(&self) -> Result<()> {
        if ![self.theta, self.alpha1, self.alpha2, self.eta].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidModel("parameters must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidModel(format!("efficiency {} outside [0, 1]", self.eta)));
        }
        if !(0.0..=FRAC_PI_4 + 1e-12).contains(&self.theta) {
            return Err(Error::InvalidModel(format!("state angle {} outside [0, pi/4]", self.theta)));
        }
        Ok(())
    }

    /// Observable angles `φ` of `A_0, A_1` and `B_0, B_1`.
    pub fn measurement_angles(&self) -> ([f64; 2], [f64; 2]) {
        ([-self.alpha1, self.alpha2], [self.alpha1, -self.alpha2])
    }

    pub fn with_binning(mut self, binning: Binning) -> Self {
        self.binning = binning;
        self
    }
}

/// Detection-weighted statistics: both click with `η²`, exactly one with `η(1−η)`, neither with `(1−η)²`.
pub fn eberhard_behavior(cfg: &EberhardConfig) -> Result<Behavior> {
    cfg.validate()?;
    let (phi_a, phi_b) = cfg.measurement_angles();
    let eta = cfg.eta;
    let stats = |x: usize, y: usize| PairStatistics::new(cfg.theta, phi_a[x], phi_b[y]);
    match cfg.binning {
        Binning::ThreeOutcome => {
            let s = Scenario::new(2, 2, 3, 3)?;
            Behavior::from_fn(s, |c| {
                let st = stats(c.x, c.y);
                match (c.a, c.b) {
                    (2, 2) => (1.0 - eta) * (1.0 - eta),
                    (2, b) => (1.0 - eta) * eta * st.marginal_b(b),
                    (a, 2) => eta * (1.0 - eta) * st.marginal_a(a),
                    (a, b) => eta * eta * st.joint(a, b),
                }
            })
        }
        Binning::BinToOutcome1 => {
            let three = eberhard_behavior(&cfg.with_binning(Binning::ThreeOutcome))?;
            let bin = |o: usize| -> &'static [usize] {
                if o == 0 {
                    &[0]
                } else {
                    &[1, 2]
                }
            };
            Behavior::from_fn(Scenario::chsh(), |c| {
                bin(c.a)
                    .iter()
                    .flat_map(|&a| bin(c.b).iter().map(move |&b| (a, b)))
                    .map(|(a, b)| three.prob(a, b, c.x, c.y))
                    .sum()
            })
        }
        Binning::SingleDetector => {
            // a click on the outcome-0 detector happens with probability η P(0)
            Behavior::from_fn(Scenario::chsh(), |c| {
                let st = stats(c.x, c.y);
                let both = eta * eta * st.joint(0, 0);
                let a0 = eta * st.marginal_a(0);
                let b0 = eta * st.marginal_b(0);
                match (c.a, c.b) {
                    (0, 0) => both,
                    (0, _) => a0 - both,
                    (_, 0) => b0 - both,
                    _ => 1.0 - a0 - b0 + both,
                }
            })
        }
    }
}

/// CHSH value `E00 + E01 + E10 − E11` of the binary statistics of a configuration.
pub fn eberhard_chsh(cfg: &EberhardConfig) -> Result<f64> {
    let cfg = if cfg.binning == Binning::ThreeOutcome { cfg.with_binning(Binning::BinToOutcome1) } else { *cfg };
    BellExpression::chsh().evaluate(&eberhard_behavior(&cfg)?)
}

#[derive(Clone, Debug)]
pub enum EberhardObjective {
    ChshValue,
    /// Min-entropy of the 2-outcome statistics under the given program options and inputs.
    MinEntropy {
        options: ProgramOptions,
        inputs: InputDistribution,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EberhardOptimum {
    pub config: EberhardConfig,
    pub chsh: f64,
    /// Objective value at the optimum (CHSH value or bits).
    pub objective: f64,
}

/// Clamps `θ` into its canonical range, adding a penalty for the distance moved.
fn clamp_theta(theta: f64) -> (f64, f64) {
    let t = theta.clamp(0.0, FRAC_PI_4);
    (t, (theta - t).abs())
}

struct EberhardCost<'a> {
    eta: f64,
    objective: &'a EberhardObjective,
}

impl EberhardCost<'_> {
    fn value(&self, p: &[f64]) -> f64 {
        let (theta, penalty) = clamp_theta(p[0]);
        let cfg = EberhardConfig { theta, alpha1: p[1], alpha2: p[2], eta: self.eta, binning: Binning::BinToOutcome1 };
        let v = match self.objective {
            EberhardObjective::ChshValue => eberhard_chsh(&cfg).unwrap_or(f64::NEG_INFINITY),
            EberhardObjective::MinEntropy { options, inputs } => eberhard_behavior(&cfg)
                .and_then(|b| guessing_weighted(&b, inputs, options))
                .map(|r| r.min_entropy_bits)
                .unwrap_or(f64::NEG_INFINITY),
        };
        v - penalty
    }
}

impl CostFunction for EberhardCost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, ArgminError> {
        Ok(-self.value(p))
    }
}

/// Angles maximizing the objective on the 2-outcome (binned) statistics: a
/// coarse grid over `(θ, α₁, α₂)` refined by Nelder–Mead.
pub fn optimize_eberhard(eta: f64, objective: &EberhardObjective) -> Result<EberhardOptimum> {
    if !(eta > 2.0 / 3.0 - 1e-12 && eta <= 1.0) {
        return Err(Error::InvalidModel(format!("efficiency {eta} outside (2/3, 1]")));
    }
    let chsh_cost = EberhardCost { eta, objective: &EberhardObjective::ChshValue };
    // θ is sampled densely near 0 where the optimum sits for η close to 2/3
    let thetas: Vec<f64> = (1..=16).map(|k| FRAC_PI_4 * (k as f64 / 16.0).powi(2)).collect();
    let alphas: Vec<f64> = (0..48).map(|k| -PI + 2.0 * PI * k as f64 / 48.0).collect();
    let mut grid = Vec::with_capacity(thetas.len() * alphas.len() * alphas.len());
    for &t in &thetas {
        for &a1 in &alphas {
            for &a2 in &alphas {
                grid.push([t, a1, a2]);
            }
        }
    }
    let start = grid
        .par_iter()
        .map(|p| (chsh_cost.value(p), *p))
        .reduce(|| (f64::NEG_INFINITY, [0.0; 3]), |a, b| if b.0 > a.0 { b } else { a })
        .1;

    let refine = |cost: EberhardCost, start: [f64; 3], step: f64| -> Result<Vec<f64>> {
        let mut simplex = vec![start.to_vec()];
        for i in 0..3 {
            let mut p = start.to_vec();
            p[i] += if i == 0 && p[0] + step > FRAC_PI_4 { -step } else { step };
            simplex.push(p);
        }
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(1e-13)
            .map_err(|e| Error::Solver(format!("Nelder-Mead setup: {e}")))?;
        let res = Executor::new(cost, solver)
            .configure(|s| s.max_iters(2000))
            .run()
            .map_err(|e| Error::Solver(format!("Nelder-Mead: {e}")))?;
        Ok(res.state().get_best_param().cloned().unwrap_or_else(|| start.to_vec()))
    };

    let mut best = refine(EberhardCost { eta, objective: &EberhardObjective::ChshValue }, start, 0.02)?;
    if let EberhardObjective::MinEntropy { .. } = objective {
        let p = [clamp_theta(best[0]).0, best[1], best[2]];
        best = refine(EberhardCost { eta, objective }, p, 0.05)?;
    }
    let config = EberhardConfig {
        theta: clamp_theta(best[0]).0,
        alpha1: best[1],
        alpha2: best[2],
        eta,
        binning: Binning::BinToOutcome1,
    };
    let chsh = eberhard_chsh(&config)?;
    let value = EberhardCost { eta, objective }.value(&[config.theta, config.alpha1, config.alpha2]);
    if chsh <= 2.0 {
        return Err(Error::NoViolation { best: chsh, bound: 2.0 });
    }
    Ok(EberhardOptimum { config, chsh, objective: value })
}

/// Data used for one point of an efficiency curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EtaMode {
    /// CHSH value only, fixed setting pair.
    ChshFixed,
    /// Full binned statistics, fixed setting pair.
    Full2Fixed,
    /// Full statistics with the no-click outcome, fixed setting pair.
    Full3Fixed,
    /// CHSH value only, uniform settings.
    ChshUniform,
    /// Full binned statistics, uniform settings.
    Full2Uniform,
}

impl EtaMode {
    pub const ALL: [EtaMode; 5] =
        [EtaMode::ChshFixed, EtaMode::Full2Fixed, EtaMode::Full3Fixed, EtaMode::ChshUniform, EtaMode::Full2Uniform];

    pub fn name(self) -> &'static str {
        match self {
            EtaMode::ChshFixed => "chsh-fixed",
            EtaMode::Full2Fixed => "full2-fixed",
            EtaMode::Full3Fixed => "full3-fixed",
            EtaMode::ChshUniform => "chsh-uniform",
            EtaMode::Full2Uniform => "full2-uniform",
        }
    }

    pub fn is_uniform(self) -> bool {
        matches!(self, EtaMode::ChshUniform | EtaMode::Full2Uniform)
    }
}

impl std::str::FromStr for EtaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EtaMode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::OutOfRange(format!("unknown mode '{s}'")))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EtaPoint {
    pub eta: f64,
    pub mode: EtaMode,
    pub config: EberhardConfig,
    pub chsh: f64,
    pub guessing_probability: f64,
    pub min_entropy_bits: f64,
    pub gap: f64,
}

/// Certified min-entropy of the Eberhard statistics at the given angles.
///
/// Fixed modes guess the outcomes of `setting`; CHSH modes only use the
/// binned CHSH value.
pub fn eta_point_at(
    config: &EberhardConfig,
    mode: EtaMode,
    setting: (usize, usize),
    opts: &ProgramOptions,
) -> Result<EtaPoint> {
    let binned = eberhard_behavior(&config.with_binning(Binning::BinToOutcome1))?;
    let chsh = BellExpression::chsh().evaluate(&binned)?;
    let dist = if mode.is_uniform() {
        InputDistribution::uniform(2, 2)
    } else {
        InputDistribution::point(2, 2, setting.0, setting.1)?
    };
    let r = match mode {
        EtaMode::ChshFixed | EtaMode::ChshUniform => {
            crate::programs::guessing_from_violation(&BellExpression::chsh(), chsh, &dist, opts)?
        }
        EtaMode::Full2Fixed | EtaMode::Full2Uniform => guessing_weighted(&binned, &dist, opts)?,
        EtaMode::Full3Fixed => {
            guessing_weighted(&eberhard_behavior(&config.with_binning(Binning::ThreeOutcome))?, &dist, opts)?
        }
    };
    Ok(EtaPoint {
        eta: config.eta,
        mode,
        config: *config,
        chsh,
        guessing_probability: r.guessing_probability,
        min_entropy_bits: r.min_entropy_bits,
        gap: r.gap,
    })
}

/// [`eta_point_at`] with CHSH-optimal angles, or zero entropy when no violation is possible.
pub fn eta_point(eta: f64, mode: EtaMode, setting: (usize, usize), opts: &ProgramOptions) -> Result<EtaPoint> {
    match optimize_eberhard(eta, &EberhardObjective::ChshValue) {
        Ok(best) => eta_point_at(&best.config, mode, setting, opts),
        Err(Error::NoViolation { .. }) | Err(Error::InvalidModel(_)) if (0.0..=1.0).contains(&eta) => {
            let config = EberhardConfig { theta: 0.0, alpha1: 0.0, alpha2: 0.0, eta, binning: Binning::BinToOutcome1 };
            eta_point_at(&config, mode, setting, opts)
        }
        Err(e) => Err(e),
    }
}

fn ensure_gamma_domain(gamma: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma >= 1.0) {
        return Err(Error::OutOfRange(format!("closed forms hold for gamma >= 1, got {gamma}")));
    }
    Ok(())
}

/// Angle between `a_0` and `b_0` at the maximum of the γ-expression.
pub fn gamma_theta00(gamma: f64) -> Result<f64> {
    ensure_gamma_domain(gamma)?;
    let inner = 5.0 + (3f64.sqrt() * ((3.0 * gamma - 1.0) * (gamma + 1.0)).sqrt() - 1.0) / gamma;
    Ok(3.0 * (inner.sqrt() / (2.0 * 2f64.sqrt())).acos())
}

/// Maximal quantum value of the γ-expression.
pub fn gamma_vq(gamma: f64) -> Result<f64> {
    let t = gamma_theta00(gamma)?;
    Ok(gamma * t.cos() + 3.0 * (PI / 6.0 + t / 3.0).sin())
}

/// Coplanar measurement directions attaining [`gamma_vq`] on `Φ+`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GammaAngles {
    pub theta00: f64,
    pub alpha: f64,
    pub a: [f64; 2],
    pub b: [f64; 2],
}

impl GammaAngles {
    /// `a_x · b_y`.
    pub fn inner_product(&self, x: usize, y: usize) -> f64 {
        (self.a[x] - self.b[y]).cos()
    }

    pub fn behavior(&self) -> Behavior {
        two_qubit_behavior(FRAC_PI_4, &self.a, &self.b).expect("finite angles")
    }
}

pub fn gamma_optimal_angles(gamma: f64) -> Result<GammaAngles> {
    let theta00 = gamma_theta00(gamma)?;
    let alpha = (PI - theta00) / 3.0;
    Ok(GammaAngles { theta00, alpha, a: [theta00, -alpha], b: [0.0, theta00 + alpha] })
}
