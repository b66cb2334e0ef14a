//! Matrix measures (logarithmic norms), scaled-metric contraction
//! certificates over state boxes, and margin-maximizing gain synthesis.
//!
//! A certificate states that the relevant Jacobian J satisfies
//! mu(Theta J Theta^-1) <= -beta everywhere on a box of operating states,
//! with Theta a positive diagonal metric. Every Jacobian entry is affine in
//! the box variables and mu1/mu_inf are convex in each |entry|, so the
//! extremum over the box is attained at the box corners; corner evaluation
//! is therefore exact, not an approximation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::control::{
    closed_loop_jacobian, observer_virtual_jacobian, ControllerGain, JacobianMode, ObserverGain,
};
use crate::model::PatientParams;
use crate::{Error, Result};

/// Which induced norm the measure is taken in (table of standard formulas).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixMeasureKind {
    One,
    Two,
    Inf,
}

/// mu1: max over columns j of (a_jj + sum_{i!=j} |a_ij|);
/// mu2: largest eigenvalue of (A + A^T)/2;
/// mu_inf: max over rows i of (a_ii + sum_{j!=i} |a_ij|).
pub fn matrix_measure(a: &DMatrix<f64>, kind: MatrixMeasureKind) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::Domain(format!(
            "matrix measure requires a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.is_empty() || a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("matrix must be nonempty with finite entries".into()));
    }
    Ok(match kind {
        MatrixMeasureKind::One | MatrixMeasureKind::Inf => column_or_row_terms(a, kind)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max),
        MatrixMeasureKind::Two => {
            let sym = (a + a.transpose()) * 0.5;
            sym.symmetric_eigenvalues()
                .iter()
                .fold(f64::NEG_INFINITY, |m, &v| m.max(v))
        }
    })
}

/// The per-column (mu1) or per-row (mu_inf) terms whose maximum is the measure.
pub fn column_or_row_terms(a: &DMatrix<f64>, kind: MatrixMeasureKind) -> Vec<f64> {
    let n = a.nrows();
    (0..n)
        .map(|j| {
            let mut t = a[(j, j)];
            for i in 0..n {
                if i != j {
                    t += match kind {
                        MatrixMeasureKind::One => a[(i, j)].abs(),
                        MatrixMeasureKind::Inf => a[(j, i)].abs(),
                        MatrixMeasureKind::Two => 0.0,
                    };
                }
            }
            t
        })
        .collect()
}

/// Measure of Theta A Theta^-1 for a positive diagonal Theta.
pub fn scaled_measure(a: &DMatrix<f64>, theta: &[f64], kind: MatrixMeasureKind) -> Result<f64> {
    matrix_measure(&scale(a, theta)?, kind)
}

fn scale(a: &DMatrix<f64>, theta: &[f64]) -> Result<DMatrix<f64>> {
    if theta.len() != a.nrows() {
        return Err(Error::Domain("theta length must match matrix dimension".into()));
    }
    if theta.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::Domain("theta entries must be positive and finite".into()));
    }
    let mut s = a.clone();
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            s[(i, j)] = a[(i, j)] * theta[i] / theta[j];
        }
    }
    Ok(s)
}

pub(crate) fn dmat4(rows: &[[f64; 4]; 4]) -> DMatrix<f64> {
    DMatrix::from_fn(4, 4, |i, j| rows[i][j])
}

/// A closed interval used as one axis of a [`StateBox`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Domain(format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Intervals for the free variables of the certified Jacobians: glucose `x1`
/// for the observer, and (`x1`, effective-insulin deviation `x2d`) for the
/// closed loop. The closed-loop entry (1,2) depends on x1d only through
/// x1 = EGP/p1 + x1d, so both feasibility checks share the glucose axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateBox {
    pub x1: Interval,
    pub x2d: Interval,
}

impl StateBox {
    /// Glucose range only; x2d pinned at 0.
    pub fn glucose(lo: f64, hi: f64) -> Result<Self> {
        Ok(Self { x1: Interval::new(lo, hi)?, x2d: Interval::point(0.0) })
    }

    pub fn with_x2d(mut self, lo: f64, hi: f64) -> Result<Self> {
        self.x2d = Interval::new(lo, hi)?;
        Ok(self)
    }

    fn corners(&self) -> Vec<(f64, f64)> {
        let mut c = vec![(self.x1.lo, self.x2d.lo)];
        if self.x1.hi != self.x1.lo {
            c.push((self.x1.hi, self.x2d.lo));
        }
        if self.x2d.hi != self.x2d.lo {
            c.push((self.x1.lo, self.x2d.hi));
            if self.x1.hi != self.x1.lo {
                c.push((self.x1.hi, self.x2d.hi));
            }
        }
        c
    }
}

/// Contraction margin of the observer's virtual system over the box.
///
/// Positive margin certifies exponential convergence of the estimates while
/// the measured glucose stays inside the box; a nonpositive value is an
/// infeasibility report, not an error.
pub fn observer_feasibility(
    p: &PatientParams,
    l: &ObserverGain,
    sbox: &StateBox,
    theta: &[f64; 4],
    kind: MatrixMeasureKind,
) -> f64 {
    sbox.corners()
        .into_iter()
        .map(|(x1, _)| {
            let j = dmat4(&observer_virtual_jacobian(p, l, x1));
            -scaled_measure(&j, theta, kind).expect("valid theta")
        })
        .fold(f64::INFINITY, f64::min)
}

/// Contraction margin of the closed-loop deviation dynamics over the box.
pub fn controller_feasibility(
    p: &PatientParams,
    k: &ControllerGain,
    sbox: &StateBox,
    theta: &[f64; 4],
    kind: MatrixMeasureKind,
    mode: JacobianMode,
) -> f64 {
    let shift = p.egp / p.p1;
    sbox.corners()
        .into_iter()
        .map(|(x1, x2d)| {
            let xd = [x1 - shift, x2d, 0.0, 0.0];
            let j = dmat4(&closed_loop_jacobian(p, k, &xd, mode));
            -scaled_measure(&j, theta, kind).expect("valid theta")
        })
        .fold(f64::INFINITY, f64::min)
}

/// Which gain a certificate covers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CertifiedGain {
    #[serde(rename = "observer")]
    Observer(ObserverGain),
    #[serde(rename = "controller")]
    Controller(ControllerGain),
}

/// A box-local contraction certificate: gains, diagonal metric, norm kind
/// and the certified margin beta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: MatrixMeasureKind,
    pub theta: [f64; 4],
    #[serde(rename = "box")]
    pub state_box: StateBox,
    pub margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<JacobianMode>,
    pub gain: CertifiedGain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Certificate {
    pub fn observer_gain(&self) -> Option<ObserverGain> {
        match self.gain {
            CertifiedGain::Observer(l) => Some(l),
            CertifiedGain::Controller(_) => None,
        }
    }

    pub fn controller_gain(&self) -> Option<ControllerGain> {
        match self.gain {
            CertifiedGain::Controller(k) => Some(k),
            CertifiedGain::Observer(_) => None,
        }
    }

    /// Re-evaluate the margin of this certificate's gains for a subject.
    pub fn recheck(&self, p: &PatientParams) -> f64 {
        match self.gain {
            CertifiedGain::Observer(l) => {
                observer_feasibility(p, &l, &self.state_box, &self.theta, self.kind)
            }
            CertifiedGain::Controller(k) => controller_feasibility(
                p,
                &k,
                &self.state_box,
                &self.theta,
                self.kind,
                self.mode.unwrap_or(JacobianMode::Corrected),
            ),
        }
    }
}

/// Observer and controller certificates for one subject, as serialized to
/// gain files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSet {
    pub label: String,
    pub mode: JacobianMode,
    pub observer: Certificate,
    pub controller: Certificate,
}

impl GainSet {
    pub fn observer_gain(&self) -> ObserverGain {
        self.observer.observer_gain().expect("observer certificate holds L")
    }

    pub fn controller_gain(&self) -> ControllerGain {
        self.controller.controller_gain().expect("controller certificate holds K")
    }

    pub fn margin(&self) -> f64 {
        self.observer.margin.min(self.controller.margin)
    }
}

// Log-spaced search grids. Ratios parameterize theta as cumulative products
// theta = (1, r2, r2*r3, r2*r3*r4), which makes the mu1 column terms of both
// Jacobians separable in the ratios.
const RATIO_GRID: [f64; 9] =
    [1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6];
const GAIN_GRID: [f64; 17] = [
    0.0, -1e-3, 1e-3, -1e-2, 1e-2, -1e-1, 1e-1, -1.0, 1.0, -1e1, 1e1, -1e2, 1e2, -1e3, 1e3,
    -1e4, 1e4,
];

fn theta_from_ratios(r: &[f64; 3]) -> [f64; 4] {
    [1.0, r[0], r[0] * r[1], r[0] * r[1] * r[2]]
}

/// Deterministic coordinate descent over theta ratios and a gain grid.
/// Accepts a move only on strict margin improvement, so the zero gain vector
/// (the sweep start) wins all ties and returned gains have minimal L1 norm
/// among grid optima reached by the sweep path.
fn descend<F: Fn(&[f64; 4], &[f64; 4]) -> f64>(eval: F) -> ([f64; 4], [f64; 4], f64) {
    let mut ratios = [1.0_f64; 3];
    let mut gains = [0.0_f64; 4];
    let mut best = eval(&theta_from_ratios(&ratios), &gains);
    for _sweep in 0..50 {
        let mut improved = false;
        for i in 0..3 {
            for &r in &RATIO_GRID {
                let mut cand = ratios;
                cand[i] = r;
                let m = eval(&theta_from_ratios(&cand), &gains);
                if m > best {
                    best = m;
                    ratios = cand;
                    improved = true;
                }
            }
        }
        for i in 0..4 {
            for &g in &GAIN_GRID {
                let mut cand = gains;
                cand[i] = g;
                let m = eval(&theta_from_ratios(&ratios), &cand);
                if m > best {
                    best = m;
                    gains = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    (theta_from_ratios(&ratios), gains, best)
}

/// Search for an observer gain and metric whose margin reaches
/// `required_margin`; returns the descent optimum.
pub fn synthesize_observer_gains(
    p: &PatientParams,
    sbox: &StateBox,
    kind: MatrixMeasureKind,
    required_margin: f64,
) -> Result<Certificate> {
    let (theta, gains, margin) =
        descend(|theta, g| observer_feasibility(p, &ObserverGain(*g), sbox, theta, kind));
    if margin < required_margin {
        return Err(Error::Infeasible { best_margin: margin });
    }
    Ok(Certificate {
        kind,
        theta,
        state_box: *sbox,
        margin,
        mode: None,
        gain: CertifiedGain::Observer(ObserverGain(gains)),
        label: p.label.clone(),
    })
}

/// Controller counterpart of [`synthesize_observer_gains`].
pub fn synthesize_controller_gains(
    p: &PatientParams,
    sbox: &StateBox,
    kind: MatrixMeasureKind,
    required_margin: f64,
    mode: JacobianMode,
) -> Result<Certificate> {
    let (theta, gains, margin) =
        descend(|theta, g| controller_feasibility(p, &ControllerGain(*g), sbox, theta, kind, mode));
    if margin < required_margin {
        return Err(Error::Infeasible { best_margin: margin });
    }
    Ok(Certificate {
        kind,
        theta,
        state_box: *sbox,
        margin,
        mode: Some(mode),
        gain: CertifiedGain::Controller(ControllerGain(gains)),
        label: p.label.clone(),
    })
}

/// Synthesize both certificates for one subject.
pub fn synthesize_gain_set(
    p: &PatientParams,
    sbox: &StateBox,
    kind: MatrixMeasureKind,
    required_margin: f64,
    mode: JacobianMode,
) -> Result<GainSet> {
    let observer = synthesize_observer_gains(p, sbox, kind, required_margin)?;
    let controller = synthesize_controller_gains(p, sbox, kind, required_margin, mode)?;
    Ok(GainSet {
        label: p.label.clone().unwrap_or_default(),
        mode,
        observer,
        controller,
    })
}
