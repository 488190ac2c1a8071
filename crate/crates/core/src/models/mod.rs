//! Reference systems and the black-box simulation contract.

mod spring_damper;
mod vehicle;

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;

pub use spring_damper::SpringDamper;
pub use vehicle::{linear_single_track_lpv, NonlinearSingleTrack, VehicleParams};

use crate::lpv::LpvSystem;
use crate::ode::TimeGrid;
use crate::pce::{Marginal, ParameterEnsemble};
use crate::signal::Input;
use crate::{Error, Result};

/// A deterministic simulator `y = M(u, theta)`.
pub trait BlackBoxModel: Send + Sync {
    /// Number of parameters.
    fn q(&self) -> usize;
    /// Number of outputs.
    fn m(&self) -> usize;
    /// Number of inputs.
    fn l(&self) -> usize;
    /// Output trajectory, `m` rows and one column per grid point.
    fn simulate(&self, theta: &[f64], u: &dyn Input, grid: &TimeGrid) -> Result<DMatrix<f64>>;
}

impl BlackBoxModel for LpvSystem {
    fn q(&self) -> usize {
        LpvSystem::q(self)
    }

    fn m(&self) -> usize {
        LpvSystem::m(self)
    }

    fn l(&self) -> usize {
        LpvSystem::l(self)
    }

    fn simulate(&self, theta: &[f64], u: &dyn Input, grid: &TimeGrid) -> Result<DMatrix<f64>> {
        LpvSystem::simulate(self, theta, u, grid)
    }
}

/// Wraps a model and counts its simulations (thread-safe).
pub struct CountingModel<'a> {
    inner: &'a dyn BlackBoxModel,
    count: AtomicUsize,
}

impl<'a> CountingModel<'a> {
    pub fn new(inner: &'a dyn BlackBoxModel) -> Self {
        Self { inner, count: AtomicUsize::new(0) }
    }

    pub fn count(&self) -> usize {
        self.count.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.count.store(0, Ordering::Relaxed);
    }
}

impl BlackBoxModel for CountingModel<'_> {
    fn q(&self) -> usize {
        self.inner.q()
    }

    fn m(&self) -> usize {
        self.inner.m()
    }

    fn l(&self) -> usize {
        self.inner.l()
    }

    fn simulate(&self, theta: &[f64], u: &dyn Input, grid: &TimeGrid) -> Result<DMatrix<f64>> {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.simulate(theta, u, grid)
    }
}

/// A registered reference model with its prior and defaults.
pub struct ModelEntry {
    pub name: &'static str,
    pub ensemble: ParameterEnsemble,
    pub outputs: Vec<String>,
    pub black_box: Box<dyn BlackBoxModel>,
    /// Present when the model has an LPV form usable by the intrusive engine.
    pub lpv: Option<LpvSystem>,
    /// Default integration step in seconds.
    pub step: f64,
}

/// Names accepted by [`model_by_name`].
pub const MODEL_NAMES: [&str; 3] = ["spring_damper", "single_track_nl", "single_track_lin"];

/// Looks up a reference model. `meas_std` is the measurement-noise standard
/// deviation used by models that have one (the spring-damper).
pub fn model_by_name(name: &str, meas_std: f64) -> Result<ModelEntry> {
    match name {
        "spring_damper" => {
            let sd = SpringDamper::new(meas_std);
            Ok(ModelEntry {
                name: "spring_damper",
                ensemble: SpringDamper::ensemble(),
                outputs: vec!["x".into()],
                lpv: Some(sd.lpv()),
                black_box: Box::new(sd),
                step: 1e-3,
            })
        }
        "single_track_nl" => Ok(ModelEntry {
            name: "single_track_nl",
            ensemble: NonlinearSingleTrack::ensemble(),
            outputs: vec!["yaw_rate".into()],
            black_box: Box::new(NonlinearSingleTrack::new(VehicleParams::default())),
            lpv: None,
            step: 2e-3,
        }),
        "single_track_lin" => Ok(ModelEntry {
            name: "single_track_lin",
            ensemble: vehicle::linear_ensemble(),
            outputs: vec!["yaw_rate".into()],
            black_box: Box::new(linear_single_track_lpv(VehicleParams::default())),
            lpv: Some(linear_single_track_lpv(VehicleParams::default())),
            step: 2e-3,
        }),
        other => Err(Error::Config(format!(
            "unknown model `{other}` (expected one of {})",
            MODEL_NAMES.join(", ")
        ))),
    }
}

pub(crate) fn gaussian(mean: f64, std: f64) -> Marginal {
    Marginal::gaussian(mean, std).expect("valid prior")
}
