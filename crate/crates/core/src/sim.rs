//! Fixed-step integration and closed-loop orchestration of plant, meal
//! cascade, observer and sample-and-hold controller.
//!
//! The coupled system is 10-dimensional: 4 plant states, 2 meal compartments
//! and 4 observer states. Integration is classical RK4 at a fixed step, so
//! identical inputs produce bit-identical trajectories. The observer sees the
//! measured glucose at every integrator stage; only the control input is
//! latched, at multiples of the hold period.

use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

use crate::control::{control_law, observer_deriv, ControlLimits, ControllerGain, ObserverGain};
use crate::model::{
    meal_deriv, plant_deriv, EquilibriumPoint, MealParams, MealState, PatientParams, PlantState,
};
use crate::{Error, Result};

/// Meals are injected as rectangular pulses of this width (min).
pub const MEAL_PULSE_WIDTH: f64 = 1.0;

/// Integrator and recording configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Integrator step (min).
    pub step_h: f64,
    /// Recording interval (min); must be an integer multiple of `step_h`.
    pub record_every: f64,
    /// Total simulated time (min).
    pub duration: f64,
    /// Sample-and-hold interval of the control input (min).
    pub hold_period: f64,
}

impl SimOptions {
    pub fn new(duration: f64) -> Self {
        Self { step_h: 0.1, record_every: 1.0, duration, hold_period: 1.0 }
    }

    fn multiple_of_step(&self, value: f64, name: &str) -> Result<usize> {
        let n = (value / self.step_h).round();
        if n < 1.0 || (n * self.step_h - value).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "{name} ({value} min) must be a positive integer multiple of step_h ({})",
                self.step_h
            )));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<(usize, usize, usize)> {
        if !(self.step_h > 0.0 && self.duration > 0.0) {
            return Err(Error::Domain(format!("invalid sim options: {self:?}")));
        }
        let rec = self.multiple_of_step(self.record_every, "record_every")?;
        let hold = self.multiple_of_step(self.hold_period, "hold_period")?;
        let total = self.multiple_of_step(self.duration, "duration")?;
        Ok((total, rec, hold))
    }
}

/// Time-indexed record of one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub x: Vec<[f64; 4]>,
    pub xh: Vec<[f64; 4]>,
    pub u: Vec<f64>,
    pub ra: Vec<f64>,
    pub meal_state: Vec<[f64; 2]>,
    /// Model-violation markers (x1 < 0 or x3, x4 < 0 at the sample).
    pub flags: Vec<bool>,
}

impl Trajectory {
    fn with_capacity(n: usize) -> Self {
        Self {
            times: Vec::with_capacity(n),
            x: Vec::with_capacity(n),
            xh: Vec::with_capacity(n),
            u: Vec::with_capacity(n),
            ra: Vec::with_capacity(n),
            meal_state: Vec::with_capacity(n),
            flags: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Recorded blood glucose series (x1).
    pub fn bg(&self) -> Vec<f64> {
        self.x.iter().map(|s| s[0]).collect()
    }

    pub fn violation_count(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }

    /// CSV export: `t,x1,x2,x3,x4,xh1,xh2,xh3,xh4,u,ra,d1,d2`, one row per
    /// record step, full double precision (shortest round-trip formatting).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,x1,x2,x3,x4,xh1,xh2,xh3,xh4,u,ra,d1,d2")?;
        for i in 0..self.len() {
            let x = self.x[i];
            let xh = self.xh[i];
            let d = self.meal_state[i];
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                self.times[i],
                x[0],
                x[1],
                x[2],
                x[3],
                xh[0],
                xh[1],
                xh[2],
                xh[3],
                self.u[i],
                self.ra[i],
                d[0],
                d[1]
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Config("empty trajectory CSV".into()))??;
        if header.trim() != "t,x1,x2,x3,x4,xh1,xh2,xh3,xh4,u,ra,d1,d2" {
            return Err(Error::Config(format!("unexpected CSV header: {header}")));
        }
        let mut t = Self::with_capacity(0);
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("CSV line {}: {e}", lineno + 2)))?;
            if vals.len() != 13 {
                return Err(Error::Config(format!(
                    "CSV line {}: expected 13 columns, got {}",
                    lineno + 2,
                    vals.len()
                )));
            }
            t.times.push(vals[0]);
            t.x.push([vals[1], vals[2], vals[3], vals[4]]);
            t.xh.push([vals[5], vals[6], vals[7], vals[8]]);
            t.u.push(vals[9]);
            t.ra.push(vals[10]);
            t.meal_state.push([vals[11], vals[12]]);
            t.flags.push(vals[1] < 0.0 || vals[3] < 0.0 || vals[4] < 0.0);
        }
        Ok(t)
    }
}

/// One classical 4-stage Runge-Kutta update.
pub fn rk4_step<const N: usize, F>(f: F, t: f64, x: &[f64; N], h: f64) -> Result<[f64; N]>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::Domain(format!("step size must be positive, got {h}")));
    }
    let add = |x: &[f64; N], k: &[f64; N], s: f64| {
        let mut y = *x;
        for i in 0..N {
            y[i] += s * k[i];
        }
        y
    };
    let k1 = f(t, x);
    let k2 = f(t + h / 2.0, &add(x, &k1, h / 2.0));
    let k3 = f(t + h / 2.0, &add(x, &k2, h / 2.0));
    let k4 = f(t + h, &add(x, &k3, h));
    let mut out = *x;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        if !out[i].is_finite() || !k1[i].is_finite() || !k4[i].is_finite() {
            return Err(Error::Integration {
                t,
                reason: format!("non-finite integrator stage in component {i}"),
            });
        }
    }
    Ok(out)
}

/// Carbohydrate input rate (mg/dl/min) from a meal list at time `t`.
fn carb_rate(meals: &[(f64, f64)], mp: &MealParams, t: f64) -> f64 {
    meals
        .iter()
        .filter(|(tm, _)| *tm <= t && t < *tm + MEAL_PULSE_WIDTH)
        .map(|(_, grams)| grams * mp.carb_gain / MEAL_PULSE_WIDTH)
        .sum()
}

enum ControlSource<'a> {
    /// Sample-and-hold feedback law.
    Loop { eq: &'a EquilibriumPoint, k: &'a ControllerGain, lim: &'a ControlLimits },
    /// Constant infusion (estimation experiments).
    Constant(f64),
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    plant_p: &PatientParams,
    model_p: &PatientParams,
    l: &ObserverGain,
    source: ControlSource<'_>,
    meals: &[(f64, f64)],
    mp: &MealParams,
    x0: &PlantState,
    xh0: &PlantState,
    opts: &SimOptions,
) -> Result<Trajectory> {
    plant_p.validate()?;
    model_p.validate()?;
    mp.validate()?;
    let (total_steps, rec_steps, hold_steps) = opts.validate()?;
    if !x0.is_finite() || !xh0.is_finite() {
        return Err(Error::Domain("non-finite initial state".into()));
    }
    if meals.iter().any(|(tm, g)| *tm < 0.0 || *tm >= opts.duration || *g < 0.0) {
        return Err(Error::Config("meal times must lie within [0, duration)".into()));
    }

    // z = [x1..x4, d1, d2, xh1..xh4]
    let mut z = [0.0_f64; 10];
    z[..4].copy_from_slice(&x0.as_array());
    z[6..].copy_from_slice(&xh0.as_array());

    let h = opts.step_h;
    let mut traj = Trajectory::with_capacity(total_steps / rec_steps + 1);
    let mut u = match source {
        ControlSource::Constant(u0) => u0,
        ControlSource::Loop { .. } => 0.0, // latched before the first step below
    };

    for k in 0..=total_steps {
        let t = k as f64 * h;
        if let ControlSource::Loop { eq, k: kg, lim } = &source {
            if k % hold_steps == 0 {
                let xh = PlantState::from_array([z[6], z[7], z[8], z[9]]);
                u = control_law(&xh, eq, kg, lim);
            }
        }
        if k % rec_steps == 0 {
            let x = [z[0], z[1], z[2], z[3]];
            traj.times.push(t);
            traj.x.push(x);
            traj.xh.push([z[6], z[7], z[8], z[9]]);
            traj.u.push(u);
            traj.ra.push(z[5] / mp.t_max);
            traj.meal_state.push([z[4], z[5]]);
            traj.flags.push(x[0] < 0.0 || x[2] < 0.0 || x[3] < 0.0);
        }
        if k == total_steps {
            break;
        }

        // Latch the piecewise-constant meal input at the step midpoint so no
        // RK4 stage samples across a pulse edge: edges sit on step
        // boundaries whenever step_h divides the 1 min pulse width, keeping
        // the integrator fourth-order through meal starts.
        let carb = carb_rate(meals, mp, t + 0.5 * h);
        let deriv = |_t: f64, z: &[f64; 10]| -> [f64; 10] {
            let x = PlantState::from_array([z[0], z[1], z[2], z[3]]);
            let m = MealState { d1: z[4], d2: z[5] };
            let xh = PlantState::from_array([z[6], z[7], z[8], z[9]]);
            let nan4 = [f64::NAN; 4];
            let (dm, ra) = meal_deriv(&m, mp, carb).unwrap_or(([f64::NAN; 2], f64::NAN));
            let dx = plant_deriv(&x, plant_p, u, ra).unwrap_or(nan4);
            let dxh = observer_deriv(&xh, x.x1, u, model_p, l).unwrap_or(nan4);
            [dx[0], dx[1], dx[2], dx[3], dm[0], dm[1], dxh[0], dxh[1], dxh[2], dxh[3]]
        };
        z = rk4_step(deriv, t, &z, h)?;
    }
    Ok(traj)
}

/// Closed-loop run: plant + meal cascade + observer + sample-and-hold law.
///
/// `plant_p` drives the true dynamics; `model_p` is the parameter set the
/// observer (and the gains) were designed for. They coincide in nominal runs
/// and differ under parametric perturbation.
#[allow(clippy::too_many_arguments)]
pub fn simulate_closed_loop(
    plant_p: &PatientParams,
    model_p: &PatientParams,
    eq: &EquilibriumPoint,
    l: &ObserverGain,
    k: &ControllerGain,
    lim: &ControlLimits,
    meals: &[(f64, f64)],
    mp: &MealParams,
    x0: &PlantState,
    xh0: &PlantState,
    opts: &SimOptions,
) -> Result<Trajectory> {
    lim.validate()?;
    let opts = SimOptions { hold_period: lim.hold_period, ..*opts };
    simulate(
        plant_p,
        model_p,
        l,
        ControlSource::Loop { eq, k, lim },
        meals,
        mp,
        x0,
        xh0,
        &opts,
    )
}

/// Open-loop estimation run: constant infusion, observer in parallel.
#[allow(clippy::too_many_arguments)]
pub fn simulate_estimation(
    p: &PatientParams,
    l: &ObserverGain,
    meal: (f64, f64),
    mp: &MealParams,
    x0: &PlantState,
    xh0: &PlantState,
    u_const: f64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    simulate(p, p, l, ControlSource::Constant(u_const), &[meal], mp, x0, xh0, opts)
}
