//! Command-line front end: gain synthesis, certificate checking, single
//! simulations, Monte Carlo batches and metric reports.
//!
//! All outputs are machine-first (CSV/JSON), carry the fully resolved
//! configuration, and contain no timestamps, so identical invocations
//! produce byte-identical files.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::contraction::{
    column_or_row_terms, dmat4, synthesize_gain_set, Certificate, GainSet, MatrixMeasureKind,
    StateBox,
};
use crate::control::{ControlLimits, JacobianMode};
use crate::metrics::glycemic_report;
use crate::model::{equilibrium_for_setpoint, subject, MealParams, PlantState};
use crate::scenarios::{
    run_monte_carlo, sample_init, sample_patient, scenario_spec, MonteCarloConfig, ScenarioId,
    TrajectorySummary,
};
use crate::sim::{simulate_closed_loop, SimOptions, Trajectory};
use crate::{Error, Result};

#[derive(Parser)]
#[command(
    name = "apcon",
    version,
    about = "Contraction-certified glucose control: gain synthesis, simulation and outcome metrics"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize certified observer/controller gains for a subject
    Synth(SynthArgs),
    /// Re-evaluate a gain file's contraction margin and per-column slack
    Check(CheckArgs),
    /// Run one closed-loop scenario; writes trajectory CSV + report JSON
    Simulate(SimulateArgs),
    /// Run a seeded Monte Carlo batch from a config file
    Montecarlo(McArgs),
    /// Recompute outcome metrics from a trajectory CSV
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    One,
    Two,
    Inf,
}

impl From<NormArg> for MatrixMeasureKind {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::One => MatrixMeasureKind::One,
            NormArg::Two => MatrixMeasureKind::Two,
            NormArg::Inf => MatrixMeasureKind::Inf,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Corrected,
    PaperLiteral,
}

impl From<ModeArg> for JacobianMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Corrected => JacobianMode::Corrected,
            ModeArg::PaperLiteral => JacobianMode::PaperLiteral,
        }
    }
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected lo:hi, got {s:?}"))?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
    if lo > hi {
        return Err(format!("empty range {lo}:{hi}"));
    }
    Ok((lo, hi))
}

#[derive(Args)]
struct SynthArgs {
    /// Subject label (1, 3 or 5)
    #[arg(long)]
    subject: String,
    /// Glucose range the certificate must cover (mg/dl)
    #[arg(long = "box", value_parser = parse_range, default_value = "0:400")]
    glucose_box: (f64, f64),
    /// Effective-insulin deviation range for the closed-loop certificate
    #[arg(long, value_parser = parse_range, default_value = "0:0.2")]
    x2d: (f64, f64),
    #[arg(long, value_enum, default_value_t = NormArg::One)]
    norm: NormArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Corrected)]
    mode: ModeArg,
    /// Required contraction margin (1/min)
    #[arg(long, default_value_t = 1e-3)]
    margin: f64,
    /// Output gain file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// Gain file produced by `synth`
    #[arg(long)]
    gains: PathBuf,
    /// Subject to evaluate against (defaults to the file's label)
    #[arg(long)]
    subject: Option<String>,
    /// Metric override: "identity", "cert" or four comma-separated weights
    #[arg(long, default_value = "cert")]
    theta: String,
    /// Glucose-range override
    #[arg(long = "box", value_parser = parse_range)]
    glucose_box: Option<(f64, f64)>,
    #[arg(long, value_parser = parse_range)]
    x2d: Option<(f64, f64)>,
    #[arg(long, value_enum)]
    norm: Option<NormArg>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "1")]
    scenario: String,
    #[arg(long)]
    subject: String,
    /// Gain file; gains are synthesized with default settings when omitted
    #[arg(long)]
    gains: Option<PathBuf>,
    /// Master seed for the randomized scenarios (2A-2D)
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Glucose setpoint (mg/dl)
    #[arg(long, default_value_t = 120.0)]
    setpoint: f64,
    /// Output directory for trajectory.csv and report.json
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct McArgs {
    /// Monte Carlo config file (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; results are invariant to this
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Master-seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Gain-file override (takes precedence over the config's `gains`)
    #[arg(long)]
    gains: Option<PathBuf>,
    /// Output directory for trials.json and aggregate.json
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Trajectory CSV produced by `simulate`
    #[arg(long)]
    input: PathBuf,
    /// Output JSON file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parse argv, dispatch and map errors to exit codes: 0 success, 1 config or
/// usage, 2 infeasible, 3 integration failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.cmd {
        Command::Synth(a) => cmd_synth(&a),
        Command::Check(a) => cmd_check(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Montecarlo(a) => cmd_montecarlo(&a),
        Command::Report(a) => cmd_report(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Infeasible { .. } | Error::InfeasibleSetpoint { .. } => 2,
                Error::Integration { .. } => 3,
                _ => 1,
            }
        }
    }
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn state_box(glucose: (f64, f64), x2d: (f64, f64)) -> Result<StateBox> {
    StateBox::glucose(glucose.0, glucose.1)?.with_x2d(x2d.0, x2d.1)
}

fn load_gains(path: &Path) -> Result<GainSet> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read gain file {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn default_gains(subject_label: &str, mode: JacobianMode) -> Result<GainSet> {
    let p = subject(subject_label)?;
    let sbox = state_box((0.0, 400.0), (0.0, 0.2))?;
    synthesize_gain_set(&p, &sbox, MatrixMeasureKind::One, 1e-3, mode)
}

fn cmd_synth(a: &SynthArgs) -> Result<i32> {
    let p = subject(&a.subject)?;
    let sbox = state_box(a.glucose_box, a.x2d)?;
    let gains = synthesize_gain_set(&p, &sbox, a.norm.into(), a.margin, a.mode.into())?;
    write_json(&gains, a.out.as_deref())?;
    Ok(0)
}

fn parse_theta(s: &str, cert: &Certificate) -> Result<[f64; 4]> {
    match s {
        "cert" => Ok(cert.theta),
        "identity" => Ok([1.0; 4]),
        list => {
            let vals: Vec<f64> = list
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("bad theta {list:?}: {e}")))?;
            vals.try_into()
                .map_err(|_| Error::Config("theta needs exactly four weights".into()))
        }
    }
}

/// Worst-case (over box corners) per-column or per-row slacks of the scaled
/// Jacobian; the margin is their minimum.
fn corner_slacks(cert: &Certificate, p: &crate::model::PatientParams) -> Option<[f64; 4]> {
    if cert.kind == MatrixMeasureKind::Two {
        return None; // no columnwise decomposition for the 2-norm measure
    }
    let corners = {
        let b = cert.state_box;
        let mut c = vec![(b.x1.lo, b.x2d.lo), (b.x1.hi, b.x2d.lo)];
        c.push((b.x1.lo, b.x2d.hi));
        c.push((b.x1.hi, b.x2d.hi));
        c
    };
    let mut slacks = [f64::INFINITY; 4];
    for (x1, x2d) in corners {
        let j = match cert.gain {
            crate::contraction::CertifiedGain::Observer(l) => {
                crate::control::observer_virtual_jacobian(p, &l, x1)
            }
            crate::contraction::CertifiedGain::Controller(k) => {
                let shift = p.egp / p.p1;
                crate::control::closed_loop_jacobian(
                    p,
                    &k,
                    &[x1 - shift, x2d, 0.0, 0.0],
                    cert.mode.unwrap_or(JacobianMode::Corrected),
                )
            }
        };
        let mut scaled = dmat4(&j);
        for i in 0..4 {
            for jj in 0..4 {
                scaled[(i, jj)] *= cert.theta[i] / cert.theta[jj];
            }
        }
        for (s, term) in slacks.iter_mut().zip(column_or_row_terms(&scaled, cert.kind)) {
            *s = s.min(-term);
        }
    }
    Some(slacks)
}

fn cmd_check(a: &CheckArgs) -> Result<i32> {
    let gains = load_gains(&a.gains)?;
    let label = a.subject.clone().unwrap_or_else(|| gains.label.clone());
    let p = subject(&label)?;
    let mut worst = f64::INFINITY;
    for (name, cert) in [("observer", &gains.observer), ("controller", &gains.controller)] {
        let mut cert = cert.clone();
        cert.theta = parse_theta(&a.theta, &cert)?;
        if let Some(b) = a.glucose_box {
            cert.state_box.x1 = crate::contraction::Interval::new(b.0, b.1)?;
        }
        if let Some(b) = a.x2d {
            cert.state_box.x2d = crate::contraction::Interval::new(b.0, b.1)?;
        }
        if let Some(n) = a.norm {
            cert.kind = n.into();
        }
        if let Some(m) = a.mode {
            cert.mode = Some(m.into());
        }
        let margin = cert.recheck(&p);
        worst = worst.min(margin);
        println!("{name} margin: {margin:.6e}");
        if let Some(slacks) = corner_slacks(&cert, &p) {
            println!(
                "{name} column slacks: {:.6e} {:.6e} {:.6e} {:.6e}",
                slacks[0], slacks[1], slacks[2], slacks[3]
            );
        }
    }
    Ok(if worst > 0.0 { 0 } else { 2 })
}

/// Resolved single-run configuration embedded in report.json.
#[derive(Serialize)]
struct SimReport {
    subject: String,
    scenario: ScenarioId,
    seed: u64,
    setpoint: f64,
    sim: SimOptions,
    meals: Vec<(f64, f64)>,
    meal_params: MealParams,
    plant_params: crate::model::PatientParams,
    x0: PlantState,
    gains: GainSet,
    summary: TrajectorySummary,
    report: crate::metrics::GlycemicReport,
}

fn cmd_simulate(a: &SimulateArgs) -> Result<i32> {
    let id: ScenarioId = a.scenario.parse()?;
    let nominal = subject(&a.subject)?;
    let spec = scenario_spec(id);
    let gains = match &a.gains {
        Some(path) => load_gains(path)?,
        None => default_gains(&a.subject, JacobianMode::Corrected)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let plant_p = sample_patient(&nominal, &spec.perturbation, &mut rng)?;
    let x0 = sample_init(&spec.init, &mut rng)?;
    let eq = equilibrium_for_setpoint(&nominal, a.setpoint)?;
    let opts = SimOptions::new(spec.duration);
    let traj = simulate_closed_loop(
        &plant_p,
        &nominal,
        &eq,
        &gains.observer_gain(),
        &gains.controller_gain(),
        &ControlLimits::default(),
        &spec.meals,
        &MealParams::default(),
        &x0,
        &x0,
        &opts,
    )?;
    fs::create_dir_all(&a.out)?;
    let mut csv = Vec::new();
    traj.write_csv(&mut csv)?;
    fs::write(a.out.join("trajectory.csv"), csv)?;
    let report = SimReport {
        subject: a.subject.clone(),
        scenario: id,
        seed: a.seed,
        setpoint: a.setpoint,
        sim: opts,
        meals: spec.meals.clone(),
        meal_params: MealParams::default(),
        plant_params: plant_p,
        x0,
        gains,
        summary: TrajectorySummary::from_trajectory(&traj),
        report: glycemic_report(&traj.bg())?,
    };
    write_json(&report, Some(&a.out.join("report.json")))?;
    Ok(0)
}

fn cmd_montecarlo(a: &McArgs) -> Result<i32> {
    let text = fs::read_to_string(&a.config)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", a.config.display())))?;
    let mut cfg: MonteCarloConfig = serde_json::from_str(&text)?;
    if let Some(seed) = a.seed {
        cfg.master_seed = seed;
    }
    let gains = if let Some(path) = &a.gains {
        load_gains(path)?
    } else if let Some(rel) = &cfg.gains {
        let base = a.config.parent().unwrap_or_else(|| Path::new("."));
        load_gains(&base.join(rel))?
    } else {
        default_gains(&cfg.subject, JacobianMode::Corrected)?
    };
    let (trials, aggregate) = run_monte_carlo(&cfg, &gains, a.workers)?;
    fs::create_dir_all(&a.out)?;
    write_json(&trials, Some(&a.out.join("trials.json")))?;
    write_json(&aggregate, Some(&a.out.join("aggregate.json")))?;
    Ok(0)
}

#[derive(Serialize)]
struct RecomputedReport {
    input: String,
    summary: TrajectorySummary,
    report: crate::metrics::GlycemicReport,
}

fn cmd_report(a: &ReportArgs) -> Result<i32> {
    let file = fs::File::open(&a.input)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", a.input.display())))?;
    let traj = Trajectory::read_csv(std::io::BufReader::new(file))?;
    let out = RecomputedReport {
        input: a.input.display().to_string(),
        summary: TrajectorySummary::from_trajectory(&traj),
        report: glycemic_report(&traj.bg())?,
    };
    write_json(&out, a.out.as_deref())?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_parsing() {
        assert_eq!(parse_range("40:400").unwrap(), (40.0, 400.0));
        assert_eq!(parse_range(" 0 : 0.2 ").unwrap(), (0.0, 0.2));
        assert!(parse_range("400:40").is_err());
        assert!(parse_range("40").is_err());
        assert!(parse_range("a:b").is_err());
    }

    #[test]
    fn theta_parsing() {
        let cert = Certificate {
            kind: MatrixMeasureKind::One,
            theta: [1.0, 2.0, 3.0, 4.0],
            state_box: StateBox::glucose(0.0, 300.0).unwrap(),
            margin: 0.0,
            mode: None,
            gain: crate::contraction::CertifiedGain::Observer(
                crate::control::ObserverGain::zero(),
            ),
            label: None,
        };
        assert_eq!(parse_theta("cert", &cert).unwrap(), [1.0, 2.0, 3.0, 4.0]);
        assert_eq!(parse_theta("identity", &cert).unwrap(), [1.0; 4]);
        assert_eq!(parse_theta("1,1e5,50,60", &cert).unwrap(), [1.0, 1e5, 50.0, 60.0]);
        assert!(parse_theta("1,2,3", &cert).is_err());
        assert!(parse_theta("1,2,3,x", &cert).is_err());
    }

    #[test]
    fn usage_errors_exit_1_help_exits_0() {
        assert_eq!(run(["apcon", "--definitely-not-a-flag"]), 1);
        assert_eq!(run(["apcon", "--help"]), 0);
        assert_eq!(run(["apcon", "synth", "--subject", "9"]), 1);
    }
}
