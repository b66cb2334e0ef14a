//! Extended Luenberger observer, proportional state feedback, and the
//! Jacobians the contraction engine certifies.

use serde::{Deserialize, Serialize};

use crate::model::{EquilibriumPoint, PatientParams, PlantState};
use crate::{Error, Result};

/// Observer correction gains L = [l1 l2 l3 l4].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObserverGain(pub [f64; 4]);

impl ObserverGain {
    pub fn zero() -> Self {
        Self([0.0; 4])
    }

    pub fn norm_l1(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum()
    }
}

/// Feedback gains K = [k1 k2 k3 k4] mapping deviation state to input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerGain(pub [f64; 4]);

impl ControllerGain {
    pub fn zero() -> Self {
        Self([0.0; 4])
    }

    pub fn norm_l1(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum()
    }
}

/// Pump constraints and the sample-and-hold interval of the control law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlLimits {
    pub u_min: f64,
    pub u_max: f64,
    /// Sample-and-hold interval (min).
    pub hold_period: f64,
}

impl Default for ControlLimits {
    fn default() -> Self {
        Self { u_min: 0.0, u_max: f64::INFINITY, hold_period: 1.0 }
    }
}

impl ControlLimits {
    pub fn validate(&self) -> Result<()> {
        if !(self.u_min >= 0.0 && self.u_min < self.u_max && self.hold_period > 0.0) {
            return Err(Error::Domain(format!("invalid control limits: {self:?}")));
        }
        Ok(())
    }
}

/// Which sign convention the closed-loop Jacobian entry (1,2) uses.
///
/// Deriving the deviated dynamics from the plant and the translation gives
/// the negative sign (entry equals -x1 at the shifted origin); the literal
/// variant keeps the printed positive sign for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    Corrected,
    PaperLiteral,
}

/// Observer right-hand side. The bilinear term uses the measured glucose `y`.
pub fn observer_deriv(
    xh: &PlantState,
    y: f64,
    u: f64,
    p: &PatientParams,
    l: &ObserverGain,
) -> Result<[f64; 4]> {
    if !xh.is_finite() || !y.is_finite() || !u.is_finite() {
        return Err(Error::Domain("non-finite input to observer_deriv".into()));
    }
    let e1 = xh.x1 - y;
    let [l1, l2, l3, l4] = l.0;
    Ok([
        -p.p1 * xh.x1 - xh.x2 * y + p.egp + l1 * e1,
        -p.p2 * xh.x2 + p.p3 * xh.x3 + l2 * e1,
        -p.p4 * xh.x3 + p.p4 * xh.x4 + l3 * e1,
        -p.p5 * xh.x4 + p.p6 * u + l4 * e1,
    ])
}

/// Proportional law on the estimated deviation, clamped to the pump range.
pub fn control_law(
    xh: &PlantState,
    eq: &EquilibriumPoint,
    k: &ControllerGain,
    lim: &ControlLimits,
) -> f64 {
    let xd = crate::model::to_deviation(xh, eq);
    let raw = eq.u_basal + k.0.iter().zip(xd).map(|(ki, di)| ki * di).sum::<f64>();
    raw.clamp(lim.u_min, lim.u_max)
}

/// Jacobian of the observer's virtual system; affine in (L, x1).
pub fn observer_virtual_jacobian(
    p: &PatientParams,
    l: &ObserverGain,
    x1: f64,
) -> [[f64; 4]; 4] {
    let [l1, l2, l3, l4] = l.0;
    [
        [-p.p1 + l1, -x1, 0.0, 0.0],
        [l2, -p.p2, p.p3, 0.0],
        [l3, 0.0, -p.p4, p.p4],
        [l4, 0.0, 0.0, -p.p5],
    ]
}

/// Jacobian of the closed-loop deviation dynamics f(x_d) + BK x_d.
pub fn closed_loop_jacobian(
    p: &PatientParams,
    k: &ControllerGain,
    x_d: &[f64; 4],
    mode: JacobianMode,
) -> [[f64; 4]; 4] {
    let shift = p.egp / p.p1;
    let e12 = match mode {
        JacobianMode::Corrected => -shift - x_d[0],
        JacobianMode::PaperLiteral => shift - x_d[0],
    };
    let [k1, k2, k3, k4] = k.0;
    [
        [-p.p1 - x_d[1], e12, 0.0, 0.0],
        [0.0, -p.p2, p.p3, 0.0],
        [0.0, 0.0, -p.p4, p.p4],
        [k1 * p.p6, k2 * p.p6, k3 * p.p6, k4 * p.p6 - p.p5],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{equilibrium_for_setpoint, plant_deriv, subject};
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn observer_fixed_point_at_equilibrium() {
        let p = subject("1").unwrap();
        let eq = equilibrium_for_setpoint(&p, p.open_loop_glucose()).unwrap();
        let d = observer_deriv(&eq.state, eq.state.x1, 0.0, &p, &ObserverGain([0.1, -0.2, 0.3, 0.4]))
            .unwrap();
        for v in d {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn zero_gain_observer_is_model_copy_with_measured_output() {
        let p = subject("1").unwrap();
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..20 {
            let xh = PlantState::new(
                rng.gen_range(50.0..300.0),
                rng.gen_range(0.0..0.05),
                rng.gen_range(0.0..30.0),
                rng.gen_range(0.0..30.0),
            );
            let y = rng.gen_range(50.0..300.0);
            let u = rng.gen_range(0.0..3e4);
            let obs = observer_deriv(&xh, y, u, &p, &ObserverGain::zero()).unwrap();
            // plant_deriv with the bilinear term evaluated at y instead of xh.x1
            let mut plant = plant_deriv(&xh, &p, u, 0.0).unwrap();
            plant[0] += xh.x1 * xh.x2 - xh.x2 * y;
            for (a, b) in obs.iter().zip(plant) {
                assert_relative_eq!(*a, b, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn output_error_correction_term() {
        let p = subject("1").unwrap();
        let y = 120.0;
        let xh = PlantState::new(y + 10.0, 0.0, 0.0, 0.0);
        let l = ObserverGain([-0.01, 0.0, 0.0, 0.0]);
        let with = observer_deriv(&xh, y, 0.0, &p, &l).unwrap();
        let without = observer_deriv(&xh, y, 0.0, &p, &ObserverGain::zero()).unwrap();
        assert_relative_eq!(with[0] - without[0], -0.1, max_relative = 1e-12);
    }

    #[test]
    fn control_law_basal_and_saturation() {
        let p = subject("1").unwrap();
        let eq = equilibrium_for_setpoint(&p, 120.0).unwrap();
        let lim = ControlLimits::default();

        let u = control_law(&eq.state, &eq, &ControllerGain([1.0, 2.0, 3.0, 4.0]), &lim);
        assert_eq!(u, eq.u_basal);

        let mut rng = StdRng::seed_from_u64(9);
        for _ in 0..20 {
            let xh = PlantState::new(
                rng.gen_range(50.0..300.0),
                rng.gen_range(0.0..0.05),
                rng.gen_range(0.0..30.0),
                rng.gen_range(0.0..30.0),
            );
            assert_eq!(control_law(&xh, &eq, &ControllerGain::zero(), &lim), eq.u_basal);
        }

        // raw -20 clamps at u_min = 0
        let eq0 = EquilibriumPoint {
            state: PlantState::new(100.0, 0.0, 0.0, 0.0),
            u_basal: 0.0,
            g_sp: 100.0,
        };
        let xh = PlantState::new(110.0, 0.0, 0.0, 0.0);
        let u = control_law(&xh, &eq0, &ControllerGain([-2.0, 0.0, 0.0, 0.0]), &lim);
        assert_eq!(u, 0.0);
    }

    #[test]
    fn control_law_translation_equivariance() {
        let p = subject("1").unwrap();
        let eq = equilibrium_for_setpoint(&p, 120.0).unwrap();
        let k = ControllerGain([-3.0, 10.0, -0.5, 2.0]);
        let lim = ControlLimits { u_min: f64::MIN, u_max: f64::MAX, hold_period: 1.0 };
        let xh = PlantState::new(150.0, 0.01, 3.0, 4.0);
        let v = [13.0, -0.4, 2.0, 7.5];
        let shifted_xh = PlantState::from_array([
            xh.x1 + v[0],
            xh.x2 + v[1],
            xh.x3 + v[2],
            xh.x4 + v[3],
        ]);
        let shifted_eq = EquilibriumPoint {
            state: PlantState::from_array([
                eq.state.x1 + v[0],
                eq.state.x2 + v[1],
                eq.state.x3 + v[2],
                eq.state.x4 + v[3],
            ]),
            u_basal: eq.u_basal,
            g_sp: eq.g_sp,
        };
        assert_relative_eq!(
            control_law(&xh, &eq, &k, &lim),
            control_law(&shifted_xh, &shifted_eq, &k, &lim),
            epsilon = 1e-9
        );
    }

    #[test]
    fn observer_jacobian_values_and_affinity() {
        let p = subject("1").unwrap();
        let j0 = observer_virtual_jacobian(&p, &ObserverGain::zero(), 0.0);
        assert_eq!(
            [j0[0][0], j0[1][1], j0[2][2], j0[3][3]],
            [-p.p1, -p.p2, -p.p4, -p.p5]
        );

        let j = observer_virtual_jacobian(&p, &ObserverGain([-0.01, 0.0, 0.0, 0.0]), 120.0);
        assert_relative_eq!(j[0][0], -0.0122, max_relative = 1e-12);
        assert_eq!(j[0][1], -120.0);

        // J(alpha L) - J(0) = alpha (J(L) - J(0))
        let l = ObserverGain([0.3, -0.7, 0.11, 0.05]);
        let alpha = 2.5;
        let la = ObserverGain([l.0[0] * alpha, l.0[1] * alpha, l.0[2] * alpha, l.0[3] * alpha]);
        let j_l = observer_virtual_jacobian(&p, &l, 55.0);
        let j_la = observer_virtual_jacobian(&p, &la, 55.0);
        let j_0 = observer_virtual_jacobian(&p, &ObserverGain::zero(), 55.0);
        for r in 0..4 {
            for c in 0..4 {
                assert_relative_eq!(
                    j_la[r][c] - j_0[r][c],
                    alpha * (j_l[r][c] - j_0[r][c]),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn closed_loop_jacobian_rows_and_modes() {
        let p = subject("1").unwrap();
        let k = ControllerGain([2.0, -3.0, 0.5, -7.0]);
        for mode in [JacobianMode::Corrected, JacobianMode::PaperLiteral] {
            let j = closed_loop_jacobian(&p, &k, &[5.0, 0.01, -1.0, 2.0], mode);
            assert_eq!(
                j[3],
                [2.0 * p.p6, -3.0 * p.p6, 0.5 * p.p6, -7.0 * p.p6 - p.p5]
            );
        }
        let jc = closed_loop_jacobian(&p, &ControllerGain::zero(), &[0.0; 4], JacobianMode::Corrected);
        assert_relative_eq!(jc[0][1], -604.545454545, max_relative = 1e-9);
        let jp =
            closed_loop_jacobian(&p, &ControllerGain::zero(), &[0.0; 4], JacobianMode::PaperLiteral);
        assert_relative_eq!(jp[0][1], 604.545454545, max_relative = 1e-9);
    }

    #[test]
    fn closed_loop_jacobian_matches_finite_differences() {
        // corrected mode vs central differences of f(x_d) + BK x_d
        let p = subject("1").unwrap();
        let k = ControllerGain([-1.0, 4.0, -0.2, 3.0]);
        let shift = p.egp / p.p1;
        let f = |xd: &[f64; 4]| {
            let kx: f64 = k.0.iter().zip(xd).map(|(ki, di)| ki * di).sum();
            [
                -p.p1 * xd[0] - shift * xd[1] - xd[0] * xd[1],
                -p.p2 * xd[1] + p.p3 * xd[2],
                -p.p4 * xd[2] + p.p4 * xd[3],
                -p.p5 * xd[3] + p.p6 * kx,
            ]
        };
        let mut rng = StdRng::seed_from_u64(21);
        for _ in 0..20 {
            let xd = [
                rng.gen_range(-500.0..100.0),
                rng.gen_range(-0.02..0.05),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
            ];
            let j = closed_loop_jacobian(&p, &k, &xd, JacobianMode::Corrected);
            for col in 0..4 {
                let h = 1e-6 * xd[col].abs().max(1.0);
                let mut hi = xd;
                let mut lo = xd;
                hi[col] += h;
                lo[col] -= h;
                let (f_hi, f_lo) = (f(&hi), f(&lo));
                for row in 0..4 {
                    let fd = (f_hi[row] - f_lo[row]) / (2.0 * h);
                    assert!(
                        (fd - j[row][col]).abs() <= 1e-6 * j[row][col].abs().max(1.0),
                        "entry ({row},{col}): fd {fd} vs {}",
                        j[row][col]
                    );
                }
            }
        }
    }
}
