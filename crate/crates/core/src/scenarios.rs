//! Simulation scenarios: the nominal three-meal day and the four
//! intra-patient variability studies, plus the seeded Monte Carlo harness.
//!
//! Determinism contract: trial `i` draws from a counter-based rng stream
//! derived from `(master_seed, i)`, and aggregation runs in trial-index
//! order, so results are independent of worker count and scheduling.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contraction::GainSet;
use crate::control::ControlLimits;
use crate::metrics::{glycemic_report, GlycemicReport};
use crate::model::{equilibrium_for_setpoint, subject, MealParams, PatientParams, PlantState};
use crate::sim::{simulate_closed_loop, SimOptions, Trajectory};
use crate::{Error, Result};

/// Scenario identifiers: the nominal day and the Table-3 variability rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioId {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2A")]
    TwoA,
    #[serde(rename = "2B")]
    TwoB,
    #[serde(rename = "2C")]
    TwoC,
    #[serde(rename = "2D")]
    TwoD,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 5] =
        [ScenarioId::One, ScenarioId::TwoA, ScenarioId::TwoB, ScenarioId::TwoC, ScenarioId::TwoD];

    pub fn label(&self) -> &'static str {
        match self {
            ScenarioId::One => "1",
            ScenarioId::TwoA => "2A",
            ScenarioId::TwoB => "2B",
            ScenarioId::TwoC => "2C",
            ScenarioId::TwoD => "2D",
        }
    }
}

impl std::str::FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "1" => Ok(ScenarioId::One),
            "2A" => Ok(ScenarioId::TwoA),
            "2B" => Ok(ScenarioId::TwoB),
            "2C" => Ok(ScenarioId::TwoC),
            "2D" => Ok(ScenarioId::TwoD),
            other => Err(Error::Config(format!("unknown scenario {other:?}"))),
        }
    }
}

impl std::fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Relative half-widths (fractions) for the multiplicative perturbation of
/// p1..p5. A width of 0.30 means the parameter is drawn uniformly from
/// ±30% around nominal; 0 leaves it at nominal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub half_widths: [f64; 5],
}

impl PerturbationSpec {
    pub fn none() -> Self {
        Self { half_widths: [0.0; 5] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.half_widths.iter().any(|w| !(0.0..1.0).contains(w)) {
            return Err(Error::Domain(format!("half-widths must lie in [0,1): {self:?}")));
        }
        Ok(())
    }
}

/// An initial-condition component: pinned, or drawn uniformly from a range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitValue {
    Fixed(f64),
    Interval([f64; 2]),
}

impl InitValue {
    pub fn validate(&self) -> Result<()> {
        match self {
            InitValue::Fixed(v) if v.is_finite() => Ok(()),
            InitValue::Interval([lo, hi]) if lo.is_finite() && hi.is_finite() && lo <= hi => Ok(()),
            _ => Err(Error::Domain(format!("bad initial-condition component: {self:?}"))),
        }
    }
}

/// Initial plant state, componentwise fixed or randomized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub x1: InitValue,
    pub x2: InitValue,
    pub x3: InitValue,
    pub x4: InitValue,
}

impl InitSpec {
    pub fn fixed(x1: f64, x2: f64, x3: f64, x4: f64) -> Self {
        Self {
            x1: InitValue::Fixed(x1),
            x2: InitValue::Fixed(x2),
            x3: InitValue::Fixed(x3),
            x4: InitValue::Fixed(x4),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for v in [&self.x1, &self.x2, &self.x3, &self.x4] {
            v.validate()?;
        }
        Ok(())
    }
}

/// A fully specified scenario: inputs, randomization and horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub perturbation: PerturbationSpec,
    pub init: InitSpec,
    /// (time min, grams) meal announcements.
    pub meals: Vec<(f64, f64)>,
    pub duration: f64,
}

/// Three 75 g meals at t = 10, 360 and 720 min over a 24 h horizon.
fn standard_meals() -> Vec<(f64, f64)> {
    vec![(10.0, 75.0), (360.0, 75.0), (720.0, 75.0)]
}

/// Pure scenario builder; two calls yield identical configurations.
pub fn scenario_spec(id: ScenarioId) -> ScenarioSpec {
    // The variability rows start effective insulin at 0.1 rather than the
    // nominal day's 0.01; both values are kept verbatim from the source
    // settings.
    let (half_widths, init) = match id {
        ScenarioId::One => ([0.0; 5], InitSpec::fixed(120.0, 0.01, 1.0, 1.0)),
        ScenarioId::TwoA => {
            ([0.0, 0.0, 0.30, 0.0, 0.0], InitSpec::fixed(120.0, 0.1, 1.0, 1.0))
        }
        ScenarioId::TwoB => {
            ([0.0, 0.0, 0.0, 0.30, 0.30], InitSpec::fixed(120.0, 0.1, 1.0, 1.0))
        }
        ScenarioId::TwoC => ([0.30; 5], InitSpec::fixed(120.0, 0.1, 1.0, 1.0)),
        ScenarioId::TwoD => (
            [0.30; 5],
            InitSpec {
                x1: InitValue::Interval([80.0, 140.0]),
                x2: InitValue::Fixed(0.01),
                x3: InitValue::Interval([0.0, 10.0]),
                x4: InitValue::Fixed(1.0),
            },
        ),
    };
    ScenarioSpec {
        id,
        perturbation: PerturbationSpec { half_widths },
        init,
        meals: standard_meals(),
        duration: 1440.0,
    }
}

/// Nominal-day inputs bound to a subject.
pub fn scenario1(subject_label: &str) -> Result<(PatientParams, ScenarioSpec)> {
    Ok((subject(subject_label)?, scenario_spec(ScenarioId::One)))
}

/// Variability-row inputs bound to a subject.
pub fn scenario2(id: ScenarioId, subject_label: &str) -> Result<(PatientParams, ScenarioSpec)> {
    if id == ScenarioId::One {
        return Err(Error::Config("scenario2 expects one of 2A-2D".into()));
    }
    Ok((subject(subject_label)?, scenario_spec(id)))
}

/// Draw a perturbed parameter set: each p_i multiplied by 1 + w_i (2u - 1)
/// with u uniform on [0,1). Five draws happen unconditionally so the stream
/// position never depends on which widths are zero. EGP and p6 are never
/// perturbed.
pub fn sample_patient<R: Rng>(
    nominal: &PatientParams,
    spec: &PerturbationSpec,
    rng: &mut R,
) -> Result<PatientParams> {
    spec.validate()?;
    let mut factors = [1.0_f64; 5];
    for (f, w) in factors.iter_mut().zip(spec.half_widths) {
        let u: f64 = rng.gen();
        *f = 1.0 + w * (2.0 * u - 1.0);
    }
    let sampled = PatientParams {
        p1: nominal.p1 * factors[0],
        p2: nominal.p2 * factors[1],
        p3: nominal.p3 * factors[2],
        p4: nominal.p4 * factors[3],
        p5: nominal.p5 * factors[4],
        p6: nominal.p6,
        egp: nominal.egp,
        label: nominal.label.clone(),
    };
    sampled.validate()?;
    Ok(sampled)
}

/// Draw an initial state; fixed components consume no rng draws.
pub fn sample_init<R: Rng>(spec: &InitSpec, rng: &mut R) -> Result<PlantState> {
    spec.validate()?;
    let mut draw = |v: &InitValue| match *v {
        InitValue::Fixed(x) => x,
        InitValue::Interval([lo, hi]) => rng.gen_range(lo..=hi),
    };
    Ok(PlantState::new(draw(&spec.x1), draw(&spec.x2), draw(&spec.x3), draw(&spec.x4)))
}

fn default_trial_count() -> usize {
    100
}

fn default_g_sp() -> f64 {
    120.0
}

fn default_sim() -> SimOptions {
    SimOptions::new(1440.0)
}

fn default_hold() -> f64 {
    1.0
}

/// Serializable Monte Carlo batch description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub subject: String,
    pub scenario: ScenarioId,
    #[serde(default = "default_trial_count")]
    pub trial_count: usize,
    pub master_seed: u64,
    #[serde(default = "default_g_sp")]
    pub g_sp: f64,
    /// Overrides the scenario's meal list when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meals: Option<Vec<(f64, f64)>>,
    #[serde(default = "default_sim")]
    pub sim: SimOptions,
    #[serde(default)]
    pub u_min: f64,
    /// None means an unconstrained pump.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_max: Option<f64>,
    #[serde(default = "default_hold")]
    pub hold_period: f64,
    /// Certificate (gain file) path, relative to the config's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<String>,
}

impl MonteCarloConfig {
    pub fn new(subject: &str, scenario: ScenarioId, master_seed: u64) -> Self {
        Self {
            subject: subject.to_string(),
            scenario,
            trial_count: default_trial_count(),
            master_seed,
            g_sp: default_g_sp(),
            meals: None,
            sim: default_sim(),
            u_min: 0.0,
            u_max: None,
            hold_period: default_hold(),
            gains: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trial_count < 1 {
            return Err(Error::Config("trial_count must be at least 1".into()));
        }
        self.sim.validate()?;
        self.limits().validate()?;
        Ok(())
    }

    pub fn limits(&self) -> ControlLimits {
        ControlLimits {
            u_min: self.u_min,
            u_max: self.u_max.unwrap_or(f64::INFINITY),
            hold_period: self.hold_period,
        }
    }
}

/// Trajectory digest kept per trial (full traces stay in the simulator).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub samples: usize,
    pub min_bg: f64,
    pub max_bg: f64,
    pub mean_bg: f64,
    pub violations: usize,
}

impl TrajectorySummary {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let bg = traj.bg();
        let n = bg.len().max(1) as f64;
        Self {
            samples: traj.len(),
            min_bg: bg.iter().cloned().fold(f64::INFINITY, f64::min),
            max_bg: bg.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            mean_bg: bg.iter().sum::<f64>() / n,
            violations: traj.violation_count(),
        }
    }
}

/// What happened in one trial: a summary + report, or the failure reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
#[allow(clippy::large_enum_variant)] // failures are rare; boxing buys nothing
pub enum McOutcome {
    Ok {
        params: PatientParams,
        x0: PlantState,
        summary: TrajectorySummary,
        report: GlycemicReport,
    },
    Failed {
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub index: usize,
    #[serde(flatten)]
    pub outcome: McOutcome,
}

/// Index-ordered means over successful trials plus CVGA zone counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub config: MonteCarloConfig,
    pub trials_ok: usize,
    pub trials_failed: usize,
    pub mean_pct_eu: f64,
    pub mean_pct_hyper: f64,
    pub mean_pct_hypo: f64,
    pub mean_pct_severe_hypo: f64,
    pub mean_lbgi: f64,
    pub mean_hbgi: f64,
    pub mean_bg: f64,
    pub mean_cov: f64,
    pub mean_hba1c: f64,
    pub min_bg: f64,
    pub max_bg: f64,
    pub cvga_counts: BTreeMap<String, usize>,
}

fn run_trial(
    index: usize,
    cfg: &MonteCarloConfig,
    spec: &ScenarioSpec,
    nominal: &PatientParams,
    gains: &GainSet,
    meals: &[(f64, f64)],
) -> TrialResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
    rng.set_stream(index as u64);
    let attempt = (|| -> Result<McOutcome> {
        let plant_p = sample_patient(nominal, &spec.perturbation, &mut rng)?;
        let x0 = sample_init(&spec.init, &mut rng)?;
        let eq = equilibrium_for_setpoint(nominal, cfg.g_sp)?;
        let traj = simulate_closed_loop(
            &plant_p,
            nominal,
            &eq,
            &gains.observer_gain(),
            &gains.controller_gain(),
            &cfg.limits(),
            meals,
            &MealParams::default(),
            &x0,
            &x0,
            &cfg.sim,
        )?;
        Ok(McOutcome::Ok {
            params: plant_p,
            x0,
            summary: TrajectorySummary::from_trajectory(&traj),
            report: glycemic_report(&traj.bg())?,
        })
    })();
    let outcome = attempt.unwrap_or_else(|e| McOutcome::Failed { error: e.to_string() });
    TrialResult { index, outcome }
}

fn aggregate(cfg: &MonteCarloConfig, trials: &[TrialResult]) -> Result<AggregateReport> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut sums = [0.0_f64; 9];
    let mut min_bg = f64::INFINITY;
    let mut max_bg = f64::NEG_INFINITY;
    let mut ok = 0usize;
    for t in trials {
        if let McOutcome::Ok { summary, report, .. } = &t.outcome {
            ok += 1;
            for (s, v) in sums.iter_mut().zip([
                report.pct_eu,
                report.pct_hyper,
                report.pct_hypo,
                report.pct_severe_hypo,
                report.lbgi,
                report.hbgi,
                report.mean_bg,
                report.cov,
                report.hba1c,
            ]) {
                *s += v;
            }
            min_bg = min_bg.min(summary.min_bg);
            max_bg = max_bg.max(summary.max_bg);
            *counts.entry(report.cvga.label().to_string()).or_insert(0) += 1;
        }
    }
    if ok == 0 {
        return Err(Error::Domain("every Monte Carlo trial failed".into()));
    }
    let n = ok as f64;
    Ok(AggregateReport {
        config: cfg.clone(),
        trials_ok: ok,
        trials_failed: trials.len() - ok,
        mean_pct_eu: sums[0] / n,
        mean_pct_hyper: sums[1] / n,
        mean_pct_hypo: sums[2] / n,
        mean_pct_severe_hypo: sums[3] / n,
        mean_lbgi: sums[4] / n,
        mean_hbgi: sums[5] / n,
        mean_bg: sums[6] / n,
        mean_cov: sums[7] / n,
        mean_hba1c: sums[8] / n,
        min_bg,
        max_bg,
        cvga_counts: counts,
    })
}

/// Run the batch on `workers` threads. Per-trial seeds and the index-ordered
/// reduction make the output independent of the worker count.
pub fn run_monte_carlo(
    cfg: &MonteCarloConfig,
    gains: &GainSet,
    workers: usize,
) -> Result<(Vec<TrialResult>, AggregateReport)> {
    cfg.validate()?;
    let nominal = subject(&cfg.subject)?;
    let spec = scenario_spec(cfg.scenario);
    let meals = cfg.meals.clone().unwrap_or_else(|| spec.meals.clone());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let trials: Vec<TrialResult> = pool.install(|| {
        (0..cfg.trial_count)
            .into_par_iter()
            .map(|i| run_trial(i, cfg, &spec, &nominal, gains, &meals))
            .collect()
    });
    let agg = aggregate(cfg, &trials)?;
    Ok((trials, agg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contraction::{synthesize_gain_set, MatrixMeasureKind, StateBox};
    use crate::control::JacobianMode;
    use approx::assert_relative_eq;

    fn gains_for(label: &str) -> GainSet {
        let p = subject(label).unwrap();
        let sbox = StateBox::glucose(0.0, 400.0)
            .unwrap()
            .with_x2d(0.0, 0.2)
            .unwrap();
        synthesize_gain_set(&p, &sbox, MatrixMeasureKind::One, 1e-3, JacobianMode::Corrected)
            .unwrap()
    }

    #[test]
    fn scenario_tables() {
        let s1 = scenario_spec(ScenarioId::One);
        assert_eq!(s1.meals, vec![(10.0, 75.0), (360.0, 75.0), (720.0, 75.0)]);
        assert_eq!(s1.duration, 1440.0);
        assert_eq!(s1.init, InitSpec::fixed(120.0, 0.01, 1.0, 1.0));
        assert_eq!(s1.perturbation, PerturbationSpec::none());

        let s2a = scenario_spec(ScenarioId::TwoA);
        assert_eq!(s2a.perturbation.half_widths, [0.0, 0.0, 0.30, 0.0, 0.0]);
        assert_eq!(s2a.init.x2, InitValue::Fixed(0.1));

        let s2b = scenario_spec(ScenarioId::TwoB);
        assert_eq!(s2b.perturbation.half_widths, [0.0, 0.0, 0.0, 0.30, 0.30]);

        let s2c = scenario_spec(ScenarioId::TwoC);
        assert_eq!(s2c.perturbation.half_widths, [0.30; 5]);
        assert_eq!(s2c.init.x1, InitValue::Fixed(120.0));

        let s2d = scenario_spec(ScenarioId::TwoD);
        assert_eq!(s2d.init.x1, InitValue::Interval([80.0, 140.0]));
        assert_eq!(s2d.init.x2, InitValue::Fixed(0.01));
        assert_eq!(s2d.init.x3, InitValue::Interval([0.0, 10.0]));
        assert_eq!(s2d.init.x4, InitValue::Fixed(1.0));
        assert_eq!(s2d.meals, s1.meals);

        // purity
        assert_eq!(scenario_spec(ScenarioId::TwoD), scenario_spec(ScenarioId::TwoD));
        assert!(scenario1("1").is_ok());
        assert!(scenario1("9").is_err());
        assert!(scenario2(ScenarioId::One, "1").is_err());
    }

    #[test]
    fn scenario_id_strings() {
        for id in ScenarioId::ALL {
            assert_eq!(id.label().parse::<ScenarioId>().unwrap(), id);
            let json = serde_json::to_string(&id).unwrap();
            assert_eq!(json, format!("\"{}\"", id.label()));
        }
        assert_eq!("2d".parse::<ScenarioId>().unwrap(), ScenarioId::TwoD); // case-insensitive
        assert!("3".parse::<ScenarioId>().is_err());
        assert!("2E".parse::<ScenarioId>().is_err());
    }

    #[test]
    fn sampling_bounds_and_determinism() {
        let nominal = subject("1").unwrap();
        let spec = scenario_spec(ScenarioId::TwoA).perturbation;
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = sample_patient(&nominal, &spec, &mut rng).unwrap();
            assert!(s.p3 >= 0.7 * nominal.p3 && s.p3 <= 1.3 * nominal.p3);
            // unflagged parameters copied exactly
            assert_eq!(s.p1, nominal.p1);
            assert_eq!(s.p2, nominal.p2);
            assert_eq!(s.p4, nominal.p4);
            assert_eq!(s.p5, nominal.p5);
            assert_eq!(s.p6, nominal.p6);
            assert_eq!(s.egp, nominal.egp);
        }

        // zero half-widths reproduce nominal exactly
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = sample_patient(&nominal, &PerturbationSpec::none(), &mut rng).unwrap();
        assert_eq!(s, nominal);

        // same stream twice -> identical draw
        let spec2d = scenario_spec(ScenarioId::TwoD);
        let mut r1 = ChaCha8Rng::seed_from_u64(11);
        let mut r2 = ChaCha8Rng::seed_from_u64(11);
        assert_eq!(
            sample_patient(&nominal, &spec2d.perturbation, &mut r1).unwrap(),
            sample_patient(&nominal, &spec2d.perturbation, &mut r2).unwrap()
        );
        let i1 = sample_init(&spec2d.init, &mut r1).unwrap();
        let i2 = sample_init(&spec2d.init, &mut r2).unwrap();
        assert_eq!(i1, i2);
        assert!((80.0..=140.0).contains(&i1.x1));
        assert!((0.0..=10.0).contains(&i1.x3));
        assert_eq!(i1.x2, 0.01);
        assert_eq!(i1.x4, 1.0);

        assert!(sample_patient(
            &nominal,
            &PerturbationSpec { half_widths: [1.0, 0.0, 0.0, 0.0, 0.0] },
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn degenerate_monte_carlo_matches_direct_run() {
        let gains = gains_for("1");
        let mut cfg = MonteCarloConfig::new("1", ScenarioId::One, 42);
        cfg.trial_count = 1;
        let (trials, agg) = run_monte_carlo(&cfg, &gains, 1).unwrap();
        assert_eq!(trials.len(), 1);
        assert_eq!(agg.trials_ok, 1);

        let (p, spec) = scenario1("1").unwrap();
        let eq = equilibrium_for_setpoint(&p, 120.0).unwrap();
        let x0 = PlantState::new(120.0, 0.01, 1.0, 1.0);
        let traj = simulate_closed_loop(
            &p,
            &p,
            &eq,
            &gains.observer_gain(),
            &gains.controller_gain(),
            &cfg.limits(),
            &spec.meals,
            &MealParams::default(),
            &x0,
            &x0,
            &cfg.sim,
        )
        .unwrap();
        let direct = glycemic_report(&traj.bg()).unwrap();
        match &trials[0].outcome {
            McOutcome::Ok { report, summary, .. } => {
                assert_eq!(report, &direct);
                assert_eq!(summary.samples, 1441);
            }
            McOutcome::Failed { error } => panic!("trial failed: {error}"),
        }
        assert_relative_eq!(agg.mean_bg, direct.mean_bg, epsilon = 1e-12);
    }

    #[test]
    fn aggregate_ranges_and_worker_invariance() {
        let gains = gains_for("3");
        let mut cfg = MonteCarloConfig::new("3", ScenarioId::TwoC, 2024);
        cfg.trial_count = 12;
        let (t1, a1) = run_monte_carlo(&cfg, &gains, 1).unwrap();
        let (t4, a4) = run_monte_carlo(&cfg, &gains, 4).unwrap();
        assert_eq!(t1, t4);
        assert_eq!(
            serde_json::to_string(&a1).unwrap(),
            serde_json::to_string(&a4).unwrap()
        );
        assert_eq!(a1.trials_ok + a1.trials_failed, 12);
        for pct in [a1.mean_pct_eu, a1.mean_pct_hyper, a1.mean_pct_hypo] {
            assert!((0.0..=100.0).contains(&pct));
        }
        assert!(
            (a1.mean_pct_eu + a1.mean_pct_hyper + a1.mean_pct_hypo - 100.0).abs() < 1e-9
        );
        assert_eq!(a1.cvga_counts.values().sum::<usize>(), a1.trials_ok);
    }

    fn bundled_configs() -> Vec<(std::path::PathBuf, MonteCarloConfig)> {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/configs");
        let mut out = Vec::new();
        for subject in ["1", "3", "5"] {
            for id in ScenarioId::ALL {
                let name = format!("s{subject}_{}.json", id.label().to_ascii_lowercase());
                out.push((dir.join(name), MonteCarloConfig::new(subject, id, 42)));
            }
        }
        out
    }

    /// Rewrites data/configs/; run with `cargo test -- --ignored regenerate`.
    #[test]
    #[ignore]
    fn regenerate_bundled_configs() {
        for (path, cfg) in bundled_configs() {
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            let mut text = serde_json::to_string_pretty(&cfg).unwrap();
            text.push('\n');
            std::fs::write(path, text).unwrap();
        }
    }

    #[test]
    fn bundled_configs_match_builders() {
        for (path, cfg) in bundled_configs() {
            let text = std::fs::read_to_string(&path)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            let parsed: MonteCarloConfig = serde_json::from_str(&text).unwrap();
            assert_eq!(parsed, cfg, "{}", path.display());
            parsed.validate().unwrap();
            let mut expect = serde_json::to_string_pretty(&cfg).unwrap();
            expect.push('\n');
            assert_eq!(text, expect, "{} needs regeneration", path.display());
        }
    }

    #[test]
    fn config_json_roundtrip_and_defaults() {
        let cfg = MonteCarloConfig::new("5", ScenarioId::TwoD, 7);
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: MonteCarloConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);

        // defaults fill in when omitted
        let sparse: MonteCarloConfig = serde_json::from_str(
            r#"{"subject":"1","scenario":"2B","master_seed":9}"#,
        )
        .unwrap();
        assert_eq!(sparse.trial_count, 100);
        assert_eq!(sparse.g_sp, 120.0);
        assert_eq!(sparse.hold_period, 1.0);
        assert_eq!(sparse.sim, SimOptions::new(1440.0));

        let mut bad = cfg;
        bad.trial_count = 0;
        assert!(bad.validate().is_err());
    }
}
