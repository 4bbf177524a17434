//! `randcert`: certify device-independent randomness from Bell-test data.

mod manifest;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use randcert::bell::{Behavior, BellExpression, InputDistribution, Scenario};
use randcert::datasets;
use randcert::pipeline::{check_quantum_membership, process_counts, CountsRecord};
use randcert::programs::{guessing_from_violation, guessing_weighted, ProgramOptions, DEFAULT_BLOCK_BUDGET};
use randcert::quantum::{
    eberhard_behavior, eta_point_at, gamma_optimal_angles, gamma_vq, optimize_eberhard, Binning, EberhardConfig,
    EberhardObjective, EtaMode,
};
use randcert::relaxation::Level;
use randcert::solver::{SolveStatus, SolverSettings};

use manifest::RunManifest;

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_INPUT: u8 = 4;

#[derive(Parser)]
#[command(name = "randcert", version, about = "Device-independent randomness certification from Bell-test statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Guessing probability and min-entropy certified by a full behavior.
    Certify {
        /// Behavior JSON file, or `builtin:<name>` for a bundled dataset.
        behavior: String,
        #[command(flatten)]
        program: ProgramArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Guessing probability certified by the value of a single Bell expression.
    CertifyViolation {
        /// `chsh`, `gamma:<γ>` or a Bell-expression JSON file.
        #[arg(long)]
        expr: String,
        /// Observed value of the expression.
        #[arg(long)]
        value: f64,
        #[command(flatten)]
        program: ProgramArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Turns a counts CSV (`x,y,N,C,SA,SB`) into a no-signalling behavior.
    Project {
        counts: PathBuf,
        /// Relaxation used for the quantum-membership check.
        #[arg(long, default_value = "local-1")]
        level: Level,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Min-entropy as a function of the Bell value, as CSV.
    ScanViolation {
        #[arg(long, default_value = "chsh")]
        expr: String,
        /// `start:stop:count` or a comma-separated list.
        #[arg(long)]
        values: String,
        #[command(flatten)]
        program: ProgramArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Min-entropy of Eberhard statistics as a function of detection efficiency, as CSV.
    ScanEta {
        /// `start:stop:count` or a comma-separated list.
        #[arg(long)]
        etas: String,
        /// Comma-separated subset of chsh-fixed, full2-fixed, full3-fixed, chsh-uniform, full2-uniform.
        #[arg(long, default_value = "chsh-fixed,full2-fixed,full3-fixed,chsh-uniform,full2-uniform")]
        modes: String,
        /// Setting pair guessed in the fixed modes.
        #[arg(long, default_value = "0,0")]
        setting: String,
        /// Relaxation for the uniform modes; defaults to --level.
        #[arg(long)]
        uniform_level: Option<Level>,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::Chsh)]
        objective: ObjectiveArg,
        #[command(flatten)]
        program: ProgramArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Extracts and re-verifies the certificate of a certify result.
    Certificate {
        /// Result JSON written by `certify` or `certify-violation`.
        result: PathBuf,
        /// Verify on this behavior instead of the one stored in the result.
        #[arg(long)]
        behavior: Option<String>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Checks whether a behavior admits a positive semidefinite moment matrix.
    CheckQuantum {
        behavior: String,
        #[arg(long, default_value = "local-1")]
        level: Level,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Generates two-qubit model behaviors.
    Model {
        /// Detection efficiency per side.
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        alpha1: Option<f64>,
        #[arg(long)]
        alpha2: Option<f64>,
        #[arg(long, value_enum, default_value_t = BinningArg::BinToOutcome1)]
        binning: BinningArg,
        /// Objective of the angle search when angles are not all given.
        #[arg(long, value_enum, default_value_t = ObjectiveArg::Chsh)]
        objective: ObjectiveArg,
        /// Emit the maximally entangled optimum of the γ-expression instead.
        #[arg(long, conflicts_with_all = ["theta", "alpha1", "alpha2"])]
        gamma: Option<f64>,
        #[command(flatten)]
        program: ProgramArgs,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Args, Clone)]
struct ProgramArgs {
    /// Relaxation: local-1, npa-<k> or ns.
    #[arg(long, default_value = "local-1")]
    level: Level,
    /// Setting distribution: uniform, point:x,y or a JSON file.
    #[arg(long, default_value = "uniform")]
    inputs: String,
    /// Requested solver feasibility and gap tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Largest number of strategy blocks a program may use.
    #[arg(long, default_value_t = DEFAULT_BLOCK_BUDGET)]
    blocks_budget: usize,
}

impl ProgramArgs {
    fn options(&self) -> Result<ProgramOptions, Failure> {
        let mut opts = ProgramOptions::new(self.level);
        opts.block_budget = self.blocks_budget;
        if let Some(tol) = self.tol {
            if !(tol > 0.0 && tol < 1.0) {
                return Err(Failure::input(format!("--tol must lie in (0, 1), got {tol}")));
            }
            opts.solver = SolverSettings {
                feasibility_tol: tol,
                gap_tol: tol,
                accept_gap: opts.solver.accept_gap.max(tol),
                ..opts.solver
            };
        }
        Ok(opts)
    }

    fn manifest(&self, m: &mut RunManifest, opts: &ProgramOptions, dist: Option<&InputDistribution>) {
        m.level = Some(self.level);
        m.solver = Some(opts.solver.clone());
        m.block_budget = Some(opts.block_budget);
        m.input_distribution = dist.cloned();
        if !matches!(self.inputs.as_str(), "uniform") && !self.inputs.starts_with("point:") {
            m.input_files.push(self.inputs.clone());
        }
    }
}

#[derive(Args, Clone)]
struct OutArgs {
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Chsh,
    MinEntropy,
}

#[derive(Clone, Copy, ValueEnum)]
enum BinningArg {
    ThreeOutcome,
    #[value(name = "bin-to-outcome1")]
    BinToOutcome1,
    SingleDetector,
}

impl From<BinningArg> for Binning {
    fn from(b: BinningArg) -> Self {
        match b {
            BinningArg::ThreeOutcome => Binning::ThreeOutcome,
            BinningArg::BinToOutcome1 => Binning::BinToOutcome1,
            BinningArg::SingleDetector => Binning::SingleDetector,
        }
    }
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure { code: EXIT_INPUT, message: message.into() }
    }
}

impl From<randcert::Error> for Failure {
    fn from(e: randcert::Error) -> Self {
        let code = match e {
            randcert::Error::Infeasible(_) | randcert::Error::NoViolation { .. } => EXIT_INFEASIBLE,
            ref e if e.is_input_error() => EXIT_INPUT,
            _ => EXIT_SOLVER,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::input(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::input(e.to_string())
    }
}

fn status_code(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::Optimal | SolveStatus::NearOptimal => 0,
        SolveStatus::Infeasible => EXIT_INFEASIBLE,
        SolveStatus::Unbounded | SolveStatus::Failed => EXIT_SOLVER,
    }
}

fn read_json(path: &Path) -> Result<Value, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// A behavior JSON file, a file with a top-level `behavior` field, or `builtin:<name>`.
fn load_behavior(src: &str) -> Result<Behavior, Failure> {
    if let Some(name) = src.strip_prefix("builtin:") {
        return datasets::builtin(name)
            .map(|d| d.behavior)
            .ok_or_else(|| Failure::input(format!("unknown builtin dataset '{name}'")));
    }
    let value = read_json(Path::new(src))?;
    let inner = value.get("behavior").cloned().unwrap_or(value);
    serde_json::from_value(inner).map_err(|e| Failure::input(format!("{src}: {e}")))
}

fn load_expression(src: &str) -> Result<BellExpression, Failure> {
    if src == "chsh" {
        return Ok(BellExpression::chsh());
    }
    if let Some(g) = src.strip_prefix("gamma:") {
        let g: f64 = g.parse().map_err(|_| Failure::input(format!("bad gamma value '{g}'")))?;
        return Ok(BellExpression::gamma(g));
    }
    let value = read_json(Path::new(src))?;
    serde_json::from_value(value).map_err(|e| Failure::input(format!("{src}: {e}")))
}

fn parse_pair(s: &str) -> Result<(usize, usize), Failure> {
    let bad = || Failure::input(format!("expected a setting pair 'x,y', got '{s}'"));
    let (x, y) = s.split_once(',').ok_or_else(bad)?;
    Ok((x.trim().parse().map_err(|_| bad())?, y.trim().parse().map_err(|_| bad())?))
}

fn parse_inputs(text: &str, scenario: Scenario) -> Result<InputDistribution, Failure> {
    let dist = if text == "uniform" {
        InputDistribution::uniform(scenario.inputs_a(), scenario.inputs_b())
    } else if let Some(pair) = text.strip_prefix("point:") {
        let (x, y) = parse_pair(pair)?;
        InputDistribution::point(scenario.inputs_a(), scenario.inputs_b(), x, y)?
    } else {
        serde_json::from_value(read_json(Path::new(text))?)?
    };
    dist.ensure_fits(&scenario)?;
    Ok(dist)
}

/// `start:stop:count` (inclusive, evenly spaced) or a comma-separated list.
fn parse_grid(text: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::input(format!("bad grid '{text}'"));
    let parts: Vec<&str> = text.split(':').collect();
    let values: Vec<f64> = if parts.len() == 3 {
        let (a, b): (f64, f64) = (parts[0].parse().map_err(|_| bad())?, parts[1].parse().map_err(|_| bad())?);
        let n: usize = parts[2].parse().map_err(|_| bad())?;
        match n {
            0 => return Err(bad()),
            1 => vec![a],
            _ => (0..n).map(|k| ((a + (b - a) * k as f64 / (n - 1) as f64) * 1e12).round() / 1e12).collect(),
        }
    } else {
        text.split(',').map(|v| v.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    Ok(values)
}

fn emit(out: &OutArgs, text: &str) -> Result<(), Failure> {
    match &out.out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::input(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn emit_json(out: &OutArgs, manifest: &mut RunManifest, body: Value) -> Result<(), Failure> {
    if let Some(p) = &out.out {
        manifest.outputs.push(p.display().to_string());
    }
    let mut doc = json!({ "manifest": manifest });
    if let (Value::Object(d), Value::Object(b)) = (&mut doc, body) {
        d.extend(b);
    }
    emit(out, &(serde_json::to_string_pretty(&doc)? + "\n"))
}

/// Writes CSV to the output and the manifest next to it (or to standard error).
fn emit_csv(out: &OutArgs, manifest: &mut RunManifest, csv: &str) -> Result<(), Failure> {
    match &out.out {
        Some(p) => {
            let mpath = PathBuf::from(format!("{}.manifest.json", p.display()));
            manifest.outputs.push(p.display().to_string());
            manifest.outputs.push(mpath.display().to_string());
            fs::write(&mpath, serde_json::to_string_pretty(manifest)? + "\n")?;
        }
        None => eprintln!("{}", serde_json::to_string(manifest)?),
    }
    emit(out, csv)
}

fn cmd_certify(behavior: &str, program: &ProgramArgs, out: &OutArgs) -> Result<u8, Failure> {
    let p = load_behavior(behavior)?;
    let opts = program.options()?;
    let dist = parse_inputs(&program.inputs, p.scenario())?;
    let r = guessing_weighted(&p, &dist, &opts)?;
    let mut m = RunManifest::new("certify");
    if !behavior.starts_with("builtin:") {
        m.input_files.push(behavior.into());
    }
    m.scenario = Some(p.scenario());
    program.manifest(&mut m, &opts, Some(&dist));
    eprintln!("G = {:.10}, H_min = {:.10} bits per run ({:?})", r.guessing_probability, r.min_entropy_bits, r.status);
    let code = status_code(r.status);
    emit_json(out, &mut m, json!({ "behavior": p, "result": r }))?;
    Ok(code)
}

fn cmd_certify_violation(expr: &str, value: f64, program: &ProgramArgs, out: &OutArgs) -> Result<u8, Failure> {
    let e = load_expression(expr)?;
    let opts = program.options()?;
    let dist = parse_inputs(&program.inputs, e.scenario())?;
    let r = guessing_from_violation(&e, value, &dist, &opts)?;
    let mut m = RunManifest::new("certify-violation");
    if !(expr == "chsh" || expr.starts_with("gamma:")) {
        m.input_files.push(expr.into());
    }
    m.scenario = Some(e.scenario());
    program.manifest(&mut m, &opts, Some(&dist));
    eprintln!("G = {:.10}, H_min = {:.10} bits per run ({:?})", r.guessing_probability, r.min_entropy_bits, r.status);
    let code = status_code(r.status);
    emit_json(out, &mut m, json!({ "expression": e, "value": value, "result": r }))?;
    Ok(code)
}

fn cmd_project(counts: &Path, level: Level, out: &OutArgs) -> Result<u8, Failure> {
    let file = fs::File::open(counts).map_err(|e| Failure::input(format!("{}: {e}", counts.display())))?;
    let rec = CountsRecord::from_csv(file)?;
    let (p, report) = process_counts(&rec)?;
    let membership = check_quantum_membership(&p, level)?;
    let mut m = RunManifest::new("project");
    m.input_files.push(counts.display().to_string());
    m.scenario = Some(p.scenario());
    m.level = Some(level);
    if !membership.feasible {
        eprintln!(
            "projected behavior is outside the {level} relaxation (margin {:.3e}); not certifiable",
            membership.margin
        );
    }
    emit_json(out, &mut m, json!({ "behavior": p, "provenance": report, "membership": membership }))?;
    Ok(if membership.feasible { 0 } else { EXIT_INFEASIBLE })
}

fn csv_field(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.12}"))
}

fn cmd_scan_violation(expr: &str, values: &str, program: &ProgramArgs, out: &OutArgs) -> Result<u8, Failure> {
    let e = load_expression(expr)?;
    let grid = parse_grid(values)?;
    let opts = program.options()?;
    let dist = parse_inputs(&program.inputs, e.scenario())?;
    let rows: Vec<Result<String, Failure>> = grid
        .par_iter()
        .map(|&v| match guessing_from_violation(&e, v, &dist, &opts) {
            Ok(r) => Ok(format!(
                "{v},{},{},{},{}",
                csv_field(Some(r.bell_value.unwrap_or(v))),
                csv_field(Some(r.guessing_probability)),
                csv_field(Some(r.min_entropy_bits)),
                status_name(r.status)
            )),
            Err(randcert::Error::Infeasible(_)) => Ok(format!("{v},,,,infeasible")),
            Err(err) => Err(err.into()),
        })
        .collect();
    let mut csv = String::from("v (dimensionless),v_used (dimensionless),G (dimensionless),H_min (bits),status\n");
    let mut code = 0;
    for row in rows {
        let row = row?;
        if !row.ends_with("optimal") {
            code = EXIT_INFEASIBLE;
        }
        csv.push_str(&row);
        csv.push('\n');
    }
    let mut m = RunManifest::new("scan-violation");
    m.scenario = Some(e.scenario());
    program.manifest(&mut m, &opts, Some(&dist));
    emit_csv(out, &mut m, &csv)?;
    Ok(code)
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Optimal => "optimal",
        SolveStatus::NearOptimal => "near-optimal",
        SolveStatus::Infeasible => "infeasible",
        SolveStatus::Unbounded => "unbounded",
        SolveStatus::Failed => "failed",
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_scan_eta(
    etas: &str,
    modes: &str,
    setting: &str,
    uniform_level: Option<Level>,
    objective: ObjectiveArg,
    program: &ProgramArgs,
    out: &OutArgs,
) -> Result<u8, Failure> {
    let grid = parse_grid(etas)?;
    let modes: Vec<EtaMode> = modes.split(',').map(|s| s.trim().parse()).collect::<Result<_, _>>()?;
    let setting = parse_pair(setting)?;
    let opts = program.options()?;
    let uniform_opts = ProgramOptions { level: uniform_level.unwrap_or(program.level), ..opts.clone() };
    let fixed_dist = InputDistribution::point(2, 2, setting.0, setting.1)?;
    let objective_name = match objective {
        ObjectiveArg::Chsh => "chsh",
        ObjectiveArg::MinEntropy => "min-entropy",
    };

    let rows: Vec<Result<Vec<String>, Failure>> = grid
        .par_iter()
        .map(|&eta| {
            let obj = match objective {
                ObjectiveArg::Chsh => EberhardObjective::ChshValue,
                ObjectiveArg::MinEntropy => {
                    EberhardObjective::MinEntropy { options: opts.clone(), inputs: fixed_dist.clone() }
                }
            };
            let config = match optimize_eberhard(eta, &obj) {
                Ok(best) => best.config,
                // no violation: a product of deterministic-like statistics carries no randomness
                Err(randcert::Error::NoViolation { .. }) | Err(randcert::Error::InvalidModel(_))
                    if (0.0..=1.0).contains(&eta) =>
                {
                    EberhardConfig { theta: 0.0, alpha1: 0.0, alpha2: 0.0, eta, binning: Binning::BinToOutcome1 }
                }
                Err(e) => return Err(e.into()),
            };
            modes
                .iter()
                .map(|&mode| {
                    let o = if mode.is_uniform() { &uniform_opts } else { &opts };
                    let p = eta_point_at(&config, mode, setting, o)?;
                    Ok(format!(
                        "{eta},{},{},{},{},{},{},{},{},{},{}",
                        mode.name(),
                        o.level,
                        objective_name,
                        csv_field(Some(config.theta)),
                        csv_field(Some(config.alpha1)),
                        csv_field(Some(config.alpha2)),
                        csv_field(Some(p.chsh)),
                        csv_field(Some(p.guessing_probability)),
                        csv_field(Some(p.min_entropy_bits)),
                        format_args!("{:.3e}", p.gap),
                    ))
                })
                .collect()
        })
        .collect();
    let mut csv = String::from(
        "eta (dimensionless),mode,level,angle_objective,theta (rad),alpha1 (rad),alpha2 (rad),chsh (dimensionless),G (dimensionless),H_min (bits),gap (dimensionless)\n",
    );
    for row in rows {
        for line in row? {
            csv.push_str(&line);
            csv.push('\n');
        }
    }
    let mut m = RunManifest::new("scan-eta");
    m.scenario = Some(Scenario::chsh());
    program.manifest(&mut m, &opts, Some(&fixed_dist));
    emit_csv(out, &mut m, &csv)?;
    Ok(0)
}

fn cmd_certificate(result: &Path, behavior: Option<&str>, out: &OutArgs) -> Result<u8, Failure> {
    let doc = read_json(result)?;
    let cert = doc
        .pointer("/result/certificate")
        .ok_or_else(|| Failure { code: EXIT_SOLVER, message: "result carries no certificate".into() })?;
    let field =
        |name: &str| cert.get(name).cloned().ok_or_else(|| Failure::input(format!("certificate lacks '{name}'")));
    let bell: BellExpression = serde_json::from_value(field("bell")?)?;
    let inputs: InputDistribution = serde_json::from_value(field("inputs")?)?;
    let level: Level = serde_json::from_value(field("level")?)?;
    let claimed: f64 = serde_json::from_value(field("claimed_bound")?)?;
    let mut opts = ProgramOptions::new(level);
    if let Some(s) = doc.pointer("/manifest/solver") {
        opts.solver = serde_json::from_value(s.clone())?;
    }
    if let Some(b) = doc.pointer("/manifest/block_budget").and_then(Value::as_u64) {
        opts.block_budget = b as usize;
    }

    let target = match behavior {
        Some(src) => Some(load_behavior(src)?),
        None => doc.get("behavior").map(|b| serde_json::from_value::<Behavior>(b.clone())).transpose()?,
    };
    // the certificate's own value at the target behavior is all that is used
    let value = match &target {
        Some(p) => bell.evaluate(p)?,
        None => serde_json::from_value(field("bell_value")?)?,
    };
    let verified = guessing_from_violation(&bell, value, &inputs, &opts)?;
    let mut m = RunManifest::new("certificate");
    m.input_files.push(result.display().to_string());
    m.scenario = Some(bell.scenario());
    m.level = Some(level);
    m.input_distribution = Some(inputs.clone());
    m.solver = Some(opts.solver.clone());
    let difference = verified.guessing_probability - claimed;
    eprintln!(
        "certificate value {value:.10}: bound {:.10} (claimed {claimed:.10}, difference {difference:.2e})",
        verified.guessing_probability
    );
    let code = status_code(verified.status);
    emit_json(
        out,
        &mut m,
        json!({
            "certificate": cert,
            "evaluated_value": value,
            "verified_bound": verified.guessing_probability,
            "verified_min_entropy_bits": randcert::programs::min_entropy(verified.guessing_probability).ok(),
            "claimed_bound": claimed,
            "difference": difference,
        }),
    )?;
    Ok(code)
}

fn cmd_check_quantum(behavior: &str, level: Level, out: &OutArgs) -> Result<u8, Failure> {
    let p = load_behavior(behavior)?;
    let report = check_quantum_membership(&p, level)?;
    let mut m = RunManifest::new("check-quantum");
    if !behavior.starts_with("builtin:") {
        m.input_files.push(behavior.into());
    }
    m.scenario = Some(p.scenario());
    m.level = Some(level);
    eprintln!("{} at {level}: margin {:.3e}", if report.feasible { "member" } else { "not a member" }, report.margin);
    emit_json(out, &mut m, json!({ "report": report }))?;
    Ok(if report.feasible { 0 } else { EXIT_INFEASIBLE })
}

#[derive(Serialize)]
struct ModelOutput {
    config: EberhardConfig,
    chsh: f64,
    optimized: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    objective_value: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_model(
    eta: f64,
    angles: (Option<f64>, Option<f64>, Option<f64>),
    binning: Binning,
    objective: ObjectiveArg,
    gamma: Option<f64>,
    program: &ProgramArgs,
    out: &OutArgs,
) -> Result<u8, Failure> {
    let mut m = RunManifest::new("model");
    m.scenario = Some(Scenario::chsh());
    if let Some(g) = gamma {
        let ang = gamma_optimal_angles(g)?;
        let p = ang.behavior();
        let value = BellExpression::gamma(g).evaluate(&p)?;
        emit_json(
            out,
            &mut m,
            json!({ "behavior": p, "gamma": g, "angles": ang, "value": value, "closed_form_value": gamma_vq(g)? }),
        )?;
        return Ok(0);
    }
    let (config, optimized, objective_value) = match angles {
        (Some(theta), Some(alpha1), Some(alpha2)) => {
            (EberhardConfig { theta, alpha1, alpha2, eta, binning }, false, None)
        }
        (None, None, None) => {
            let opts = program.options()?;
            let obj = match objective {
                ObjectiveArg::Chsh => EberhardObjective::ChshValue,
                ObjectiveArg::MinEntropy => {
                    let dist = parse_inputs(&program.inputs, Scenario::chsh())?;
                    program.manifest(&mut m, &opts, Some(&dist));
                    EberhardObjective::MinEntropy { options: opts, inputs: dist }
                }
            };
            let best = optimize_eberhard(eta, &obj)?;
            (best.config.with_binning(binning), true, Some(best.objective))
        }
        _ => return Err(Failure::input("give all of --theta, --alpha1, --alpha2 or none of them")),
    };
    let p = eberhard_behavior(&config)?;
    let chsh = randcert::quantum::eberhard_chsh(&config)?;
    emit_json(
        out,
        &mut m,
        json!({ "behavior": p, "model": ModelOutput { config, chsh, optimized, objective_value } }),
    )?;
    Ok(0)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match &cli.command {
        Command::Certify { behavior, program, out } => cmd_certify(behavior, program, out),
        Command::CertifyViolation { expr, value, program, out } => cmd_certify_violation(expr, *value, program, out),
        Command::Project { counts, level, out } => cmd_project(counts, *level, out),
        Command::ScanViolation { expr, values, program, out } => cmd_scan_violation(expr, values, program, out),
        Command::ScanEta { etas, modes, setting, uniform_level, objective, program, out } => {
            cmd_scan_eta(etas, modes, setting, *uniform_level, *objective, program, out)
        }
        Command::Certificate { result, behavior, out } => cmd_certificate(result, behavior.as_deref(), out),
        Command::CheckQuantum { behavior, level, out } => cmd_check_quantum(behavior, *level, out),
        Command::Model { eta, theta, alpha1, alpha2, binning, objective, gamma, program, out } => {
            cmd_model(*eta, (*theta, *alpha1, *alpha2), (*binning).into(), *objective, *gamma, program, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
