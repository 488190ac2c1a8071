use nalgebra::{DMatrix, DVector};

use super::BlackBoxModel;
use crate::lpv::{check_input, LpvMatrices, LpvSystem};
use crate::ode::{rk4, TimeGrid};
use crate::pce::{Marginal, ParameterEnsemble};
use crate::signal::Input;
use crate::{Error, Result};

/// `d x' = -c x + u`, `y = x + noise`, with `theta = (c, d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpringDamper {
    /// Standard deviation of the additive measurement noise.
    pub meas_std: f64,
}

impl SpringDamper {
    pub fn new(meas_std: f64) -> Self {
        Self { meas_std }
    }

    /// `c ~ U(1.8, 2.2)`, `d ~ U(0.9, 1.1)`.
    pub fn ensemble() -> ParameterEnsemble {
        ParameterEnsemble::new([
            ("c", Marginal::uniform(1.8, 2.2).expect("valid prior")),
            ("d", Marginal::uniform(0.9, 1.1).expect("valid prior")),
        ])
        .expect("valid ensemble")
    }

    pub fn lpv(&self) -> LpvSystem {
        let var = self.meas_std * self.meas_std;
        LpvSystem::new(1, 1, 1, 2, move |th| {
            let (c, d) = (th[0], th[1]);
            let mut m = LpvMatrices::new(
                DMatrix::from_element(1, 1, -c / d),
                DMatrix::from_element(1, 1, 1.0 / d),
                DMatrix::from_element(1, 1, 1.0),
            );
            m.meas_cov = DMatrix::from_element(1, 1, var);
            m
        })
    }
}

impl BlackBoxModel for SpringDamper {
    fn q(&self) -> usize {
        2
    }

    fn m(&self) -> usize {
        1
    }

    fn l(&self) -> usize {
        1
    }

    fn simulate(&self, theta: &[f64], u: &dyn Input, grid: &TimeGrid) -> Result<DMatrix<f64>> {
        check_input(u, 1)?;
        let (c, d) = match theta {
            [c, d] if *c > 0.0 && *d > 0.0 => (*c, *d),
            [_, _] => return Err(Error::Domain(format!("spring-damper needs c, d > 0, got {theta:?}"))),
            _ => return Err(Error::Dimension(format!("spring-damper takes 2 parameters, got {}", theta.len()))),
        };
        let mut y = DVector::zeros(grid.len());
        let mut ub = [0.0];
        rk4(
            grid,
            &[0.0],
            |t, x, dx| {
                u.eval_into(t, &mut ub);
                dx[0] = (-c * x[0] + ub[0]) / d;
                Ok(())
            },
            |k, _, x| y[k] = x[0],
        )?;
        Ok(DMatrix::from_row_slice(1, grid.len(), y.as_slice()))
    }
}
