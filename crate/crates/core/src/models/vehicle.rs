//! Single-track (bicycle) vehicle models: the nonlinear lateral model with
//! lagged arctan tire forces and its linearization as an LPV system.

use nalgebra::DMatrix;

use super::{gaussian, BlackBoxModel};
use crate::lpv::{check_input, LpvMatrices, LpvSystem};
use crate::ode::{rk4, TimeGrid};
use crate::pce::ParameterEnsemble;
use crate::signal::Input;
use crate::{Error, Result};

/// Deterministic vehicle data of a mid-size car.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    /// Initial speed (m/s).
    pub v0: f64,
    /// Mass (kg).
    pub mass: f64,
    /// CoG to front / rear axle (m).
    pub lf: f64,
    pub lr: f64,
    /// Friction coefficients.
    pub mu_f: f64,
    pub mu_r: f64,
    /// Tire shape factors multiplying the normal load in the force law.
    pub c_f: f64,
    pub c_r: f64,
    pub g: f64,
    /// Tire force time constants (s).
    pub t_f: f64,
    pub t_r: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            v0: 13.89,
            mass: 2700.0,
            lf: 1.548,
            lr: 1.441,
            mu_f: 1.0,
            mu_r: 1.0,
            c_f: 0.953,
            c_r: 1.878,
            g: 9.81,
            t_f: 28.57e-3,
            t_r: 28.57e-3,
        }
    }
}

impl VehicleParams {
    fn wheelbase(&self) -> f64 {
        self.lf + self.lr
    }

    /// Peak-force scale of the front tire, `mu_f C_f m g l_r / (l_f + l_r)`.
    pub fn front_force_scale(&self) -> f64 {
        self.mu_f * self.c_f * self.mass * self.g * self.lr / self.wheelbase()
    }

    pub fn rear_force_scale(&self) -> f64 {
        self.mu_r * self.c_r * self.mass * self.g * self.lf / self.wheelbase()
    }
}

/// Minimum speed; slip angles divide by `v cos(beta)`.
const MIN_SPEED: f64 = 1.0;

/// Nonlinear single-track model with `theta = (J_z, B_f, B_r, omega_s, d_s)`,
/// state `(yaw rate, side slip, speed, F_yf, F_yr, delta, delta')`, steering
/// command input and yaw-rate output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearSingleTrack {
    pub params: VehicleParams,
}

impl NonlinearSingleTrack {
    pub fn new(params: VehicleParams) -> Self {
        Self { params }
    }

    /// Priors of `J_z, B_f, B_r, omega_s, d_s` (second arguments are standard
    /// deviations).
    pub fn ensemble() -> ParameterEnsemble {
        ParameterEnsemble::new([
            ("J_z", gaussian(6000.0, 1000.0)),
            ("B_f", gaussian(10.0, 1.0)),
            ("B_r", gaussian(10.0, 1.0)),
            ("omega_s", gaussian(17.0, 4.0)),
            ("d_s", gaussian(0.75, 0.05)),
        ])
        .expect("valid ensemble")
    }

    /// Right-hand side for steering command `u`.
    pub fn rhs(&self, theta: &[f64], u: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        let p = &self.params;
        let (jz, bf, br, ws, ds) = (theta[0], theta[1], theta[2], theta[3], theta[4]);
        let (yaw, beta, v, fyf, fyr, delta, ddelta) = (x[0], x[1], x[2], x[3], x[4], x[5], x[6]);
        if !(v > MIN_SPEED) {
            return Err(Error::Domain(format!("speed {v} m/s fell below {MIN_SPEED} m/s")));
        }
        let vx = v * beta.cos();
        let alpha_f = delta - ((p.lf * yaw + v * beta.sin()) / vx).atan();
        let alpha_r = ((p.lr * yaw - v * beta.sin()) / vx).atan();
        let fyf_ss = p.front_force_scale() * (bf * alpha_f).atan();
        let fyr_ss = p.rear_force_scale() * (br * alpha_r).atan();
        dx[0] = (p.lf * fyf * delta.cos() - p.lr * fyr) / jz;
        dx[1] = (fyf * delta.cos() + fyr) / (p.mass * v) - yaw;
        dx[2] = (fyf * (delta - beta).sin() + fyr * beta.sin()) / p.mass;
        dx[3] = (fyf_ss - fyf) / p.t_f;
        dx[4] = (fyr_ss - fyr) / p.t_r;
        dx[5] = ddelta;
        dx[6] = ws * ws * (u - delta) - 2.0 * ds * ws * ddelta;
        Ok(())
    }

    /// Full 7-state trajectory (states as rows).
    pub fn simulate_states(&self, theta: &[f64], u: &dyn Input, grid: &TimeGrid) -> Result<DMatrix<f64>> {
        check_input(u, 1)?;
        if theta.len() != 5 {
            return Err(Error::Dimension(format!("single-track model takes 5 parameters, got {}", theta.len())));
        }
        if !(theta[0] > 0.0 && theta[3] > 0.0) {
            return Err(Error::Domain(format!("J_z and omega_s must be positive, got {theta:?}")));
        }
        let mut x0 = [0.0; 7];
        x0[2] = self.params.v0;
        let mut out = DMatrix::zeros(7, grid.len());
        let mut ub = [0.0];
        rk4(
            grid,
            &x0,
            |t, x, dx| {
                u.eval_into(t, &mut ub);
                self.rhs(theta, ub[0], x, dx)
            },
            |k, _, x| out.set_column(k, &nalgebra::DVector::from_column_slice(x)),
        )?;
        Ok(out)
    }
}

impl BlackBoxModel for NonlinearSingleTrack {
    fn q(&self) -> usize {
        5
    }

    fn m(&self) -> usize {
        1
    }

    fn l(&self) -> usize {
        1
    }

    fn simulate(&self, theta: &[f64], u: &dyn Input, grid: &TimeGrid) -> Result<DMatrix<f64>> {
        Ok(self.simulate_states(theta, u, grid)?.rows(0, 1).into_owned())
    }
}

/// Priors of the linear model `J_z, K_f, K_r, omega_s, d_s, v`.
pub(crate) fn linear_ensemble() -> ParameterEnsemble {
    ParameterEnsemble::new([
        ("J_z", gaussian(6000.0, 1000.0)),
        ("K_f", gaussian(9.53, 1.2)),
        ("K_r", gaussian(18.8, 2.0)),
        ("omega_s", gaussian(17.0, 4.0)),
        ("d_s", gaussian(0.75, 0.05)),
        ("v", gaussian(11.27, 0.87)),
    ])
    .expect("valid ensemble")
}

/// Linearized single-track model with `theta = (J_z, K_f, K_r, omega_s, d_s, v)`,
/// state `(yaw rate, side slip, delta, delta')`, output yaw rate.
///
/// Cornering stiffnesses are `c_f = K_f m g l_r / L` and `c_r = K_r m g l_f / L`.
pub fn linear_single_track_lpv(p: VehicleParams) -> LpvSystem {
    let load_f = p.mass * p.g * p.lr / p.wheelbase();
    let load_r = p.mass * p.g * p.lf / p.wheelbase();
    LpvSystem::new(4, 1, 1, 6, move |th| {
        let (jz, kf, kr, ws, ds, v) = (th[0], th[1], th[2], th[3], th[4], th[5]);
        let cf = kf * load_f;
        let cr = kr * load_r;
        let (lf, lr, m) = (p.lf, p.lr, p.mass);
        #[rustfmt::skip]
        let a = DMatrix::from_row_slice(4, 4, &[
            -(cf * lf * lf + cr * lr * lr) / (jz * v), (cr * lr - cf * lf) / jz, cf * lf / jz, 0.0,
            (cr * lr - cf * lf) / (m * v * v) - 1.0,   -(cf + cr) / (m * v),      cf / (m * v),  0.0,
            0.0,                                       0.0,                       0.0,           1.0,
            0.0,                                       0.0,                       -ws * ws,      -2.0 * ds * ws,
        ]);
        let b = DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 0.0, ws * ws]);
        let c = DMatrix::from_row_slice(1, 4, &[1.0, 0.0, 0.0, 0.0]);
        LpvMatrices::new(a, b, c)
    })
}
