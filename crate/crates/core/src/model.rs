//! Glucose-insulin plant (MVP model), meal absorption, equilibrium algebra
//! and analytic Jacobians.
//!
//! States: `x1` blood glucose (mg/dl), `x2` effective insulin (1/min),
//! `x3` plasma insulin (mU/l), `x4` subcutaneous insulin (mU/l). The meal
//! cascade `d1 -> d2` feeds the plant through the appearance rate
//! `ra = d2 / t_max` (mg/dl/min).

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Physiological constants of one virtual patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientParams {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub p4: f64,
    pub p5: f64,
    pub p6: f64,
    pub egp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl PatientParams {
    /// All parameters must be strictly positive and finite.
    pub fn validate(&self) -> Result<()> {
        let vals = [self.p1, self.p2, self.p3, self.p4, self.p5, self.p6, self.egp];
        if vals.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Domain(format!(
                "patient parameters must be strictly positive and finite: {self:?}"
            )));
        }
        Ok(())
    }

    /// The zero-insulin equilibrium glucose EGP/p1 (mg/dl).
    pub fn open_loop_glucose(&self) -> f64 {
        self.egp / self.p1
    }
}

/// The three virtual subjects bundled with the crate (data/patients.json).
pub fn bundled_patients() -> Vec<PatientParams> {
    serde_json::from_str(include_str!("../data/patients.json"))
        .expect("bundled patients.json must parse")
}

/// Look up a bundled subject by label ("1", "3" or "5").
pub fn subject(label: &str) -> Result<PatientParams> {
    bundled_patients()
        .into_iter()
        .find(|p| p.label.as_deref() == Some(label))
        .ok_or_else(|| Error::Config(format!("unknown subject label {label:?}")))
}

/// Four-state physiological state vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub x4: f64,
}

impl PlantState {
    pub fn new(x1: f64, x2: f64, x3: f64, x4: f64) -> Self {
        Self { x1, x2, x3, x4 }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x1, self.x2, self.x3, self.x4]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self { x1: a[0], x2: a[1], x3: a[2], x4: a[3] }
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }
}

/// Meal-absorption model constants.
///
/// `bio` is stored verbatim; the source table prints "Bio=71" labeled
/// unitless, and the shipped defaults interpret that as 71% (0.71). Use
/// [`MealParams::table_literal`] for the printed value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MealParams {
    /// Time-to-maximum absorption (min).
    pub t_max: f64,
    /// Bioavailability multiplier (dimensionless).
    pub bio: f64,
    /// Model meal-input units (mg/dl) per gram of carbohydrate.
    pub carb_gain: f64,
}

impl Default for MealParams {
    fn default() -> Self {
        Self { t_max: 43.0, bio: 0.71, carb_gain: 1.0 }
    }
}

impl MealParams {
    /// The literal table values (Bio stored as 71, not 0.71).
    pub fn table_literal() -> Self {
        Self { t_max: 43.0, bio: 71.0, carb_gain: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_max > 0.0 && self.bio > 0.0 && self.carb_gain > 0.0) {
            return Err(Error::Domain(format!("meal parameters must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Gut glucose masses in the two meal compartments (mg/dl each).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MealState {
    pub d1: f64,
    pub d2: f64,
}

impl MealState {
    pub fn zero() -> Self {
        Self { d1: 0.0, d2: 0.0 }
    }
}

/// A steady state of the plant together with the basal input that sustains it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumPoint {
    pub state: PlantState,
    pub u_basal: f64,
    pub g_sp: f64,
}

/// Right-hand side of the plant ODE.
pub fn plant_deriv(x: &PlantState, p: &PatientParams, u: f64, ra: f64) -> Result<[f64; 4]> {
    if !x.is_finite() || !u.is_finite() || !ra.is_finite() {
        return Err(Error::Domain("non-finite input to plant_deriv".into()));
    }
    Ok([
        -p.p1 * x.x1 - x.x1 * x.x2 + p.egp + ra,
        -p.p2 * x.x2 + p.p3 * x.x3,
        -p.p4 * x.x3 + p.p4 * x.x4,
        -p.p5 * x.x4 + p.p6 * u,
    ])
}

/// Right-hand side of the meal cascade; also returns the appearance rate ra.
pub fn meal_deriv(m: &MealState, mp: &MealParams, carb_rate: f64) -> Result<([f64; 2], f64)> {
    if !m.d1.is_finite() || !m.d2.is_finite() || !carb_rate.is_finite() {
        return Err(Error::Domain("non-finite input to meal_deriv".into()));
    }
    let ra = m.d2 / mp.t_max;
    Ok(([
        -m.d1 / mp.t_max + mp.bio * carb_rate,
        m.d1 / mp.t_max - m.d2 / mp.t_max,
    ], ra))
}

/// Solve for the steady state holding glucose at `g_sp` with a constant input.
///
/// The setpoint family contains the open-loop equilibrium [EGP/p1, 0, 0, 0]
/// (u = 0) at `g_sp = EGP/p1`; lower setpoints require positive basal insulin.
pub fn equilibrium_for_setpoint(p: &PatientParams, g_sp: f64) -> Result<EquilibriumPoint> {
    let max = p.open_loop_glucose();
    if !(g_sp > 0.0 && g_sp <= max) {
        return Err(Error::InfeasibleSetpoint { g_sp, max });
    }
    let x2 = (p.egp - p.p1 * g_sp) / g_sp;
    let x3 = (p.p2 / p.p3) * x2;
    let u_basal = (p.p5 / p.p6) * x3;
    Ok(EquilibriumPoint {
        state: PlantState::new(g_sp, x2, x3, x3),
        u_basal,
        g_sp,
    })
}

/// Componentwise shift into deviation coordinates around an equilibrium.
pub fn to_deviation(x: &PlantState, eq: &EquilibriumPoint) -> [f64; 4] {
    let a = x.as_array();
    let e = eq.state.as_array();
    [a[0] - e[0], a[1] - e[1], a[2] - e[2], a[3] - e[3]]
}

/// Inverse of [`to_deviation`].
pub fn from_deviation(xd: &[f64; 4], eq: &EquilibriumPoint) -> PlantState {
    let e = eq.state.as_array();
    PlantState::from_array([xd[0] + e[0], xd[1] + e[1], xd[2] + e[2], xd[3] + e[3]])
}

/// Analytic Jacobian of [`plant_deriv`] with respect to the state.
pub fn plant_jacobian(x: &PlantState, p: &PatientParams) -> [[f64; 4]; 4] {
    [
        [-p.p1 - x.x2, -x.x1, 0.0, 0.0],
        [0.0, -p.p2, p.p3, 0.0],
        [0.0, 0.0, -p.p4, p.p4],
        [0.0, 0.0, 0.0, -p.p5],
    ]
}
