//! Browser bindings for three spring-damper studies: surrogate sensitivity
//! trajectories, the sampling-based estimator next to them, and the design
//! objective of a sinusoidal input.

use excite::lpv::{build_surrogate, noise_to_minimal_sensitivity, simulate_surrogate, SurrogateSystem};
use excite::models::SpringDamper;
use excite::ode::TimeGrid;
use excite::optimize::{EngineSpec, ExcitationProblem, ProblemSetup};
use excite::pce::{gauss_quadrature, ChaosBasis};
use excite::sensitivity::{SensitivityKind, SensitivityTrajectory};
use excite::signal::{AdmissibleSet, CostWeights, SignalSpec, SignalTemplate};
use excite::transport::{nonintrusive_sensitivity_trajectory, TransportConfig};
use nalgebra::DMatrix;
use wasm_bindgen::prelude::*;

const HORIZON: f64 = 10.0;
const STEP: f64 = 0.01;

fn js_err(e: excite::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn grid() -> TimeGrid {
    TimeGrid::new(0.0, HORIZON, STEP).expect("valid grid")
}

fn surrogate(degree: usize) -> Result<SurrogateSystem, JsError> {
    if degree == 0 || degree > 8 {
        return Err(JsError::new("degree must lie in 1..=8"));
    }
    let basis = ChaosBasis::new(SpringDamper::ensemble(), degree).map_err(js_err)?;
    let quad = gauss_quadrature(basis.ensemble(), 2 * (degree + 1)).map_err(js_err)?;
    build_surrogate(&SpringDamper::new(0.0).lpv(), &basis, &quad).map_err(js_err)
}

fn sinusoid(u0: f64, f: f64, phase: f64) -> Result<SignalSpec, JsError> {
    if !(u0.is_finite() && f.is_finite() && phase.is_finite()) || u0 < 0.0 || f < 0.0 {
        return Err(JsError::new("amplitude and frequency must be non-negative"));
    }
    Ok(SignalSpec::Sinusoid { u0, f, phase })
}

fn s_min(meas_std: f64) -> Result<Vec<DMatrix<f64>>, JsError> {
    if !(meas_std >= 0.0 && meas_std.is_finite()) {
        return Err(JsError::new("noise level must be non-negative"));
    }
    noise_to_minimal_sensitivity(&SpringDamper::new(meas_std).lpv(), &[2.0, 1.0], &grid(), 2).map_err(js_err)
}

/// Sensitivity trajectories of the spring-damper displacement.
#[wasm_bindgen]
pub struct Trajectories {
    times: Vec<f64>,
    mean: Vec<f64>,
    s_c: Vec<f64>,
    s_d: Vec<f64>,
    s_min: Vec<f64>,
    impact_c: f64,
    impact_d: f64,
}

#[wasm_bindgen]
impl Trajectories {
    pub fn times(&self) -> Vec<f64> {
        self.times.clone()
    }
    pub fn mean(&self) -> Vec<f64> {
        self.mean.clone()
    }
    pub fn s_c(&self) -> Vec<f64> {
        self.s_c.clone()
    }
    pub fn s_d(&self) -> Vec<f64> {
        self.s_d.clone()
    }
    pub fn s_min(&self) -> Vec<f64> {
        self.s_min.clone()
    }
    pub fn impact_c(&self) -> f64 {
        self.impact_c
    }
    pub fn impact_d(&self) -> f64 {
        self.impact_d
    }
}

/// First-order sensitivities from the Galerkin surrogate for the input
/// `u0 sin(2 pi f t - phase)`.
#[wasm_bindgen]
pub fn surrogate_sensitivity(u0: f64, f: f64, phase: f64, degree: usize, meas_std: f64) -> Result<Trajectories, JsError> {
    let s = surrogate(degree)?;
    let g = grid();
    let tr = simulate_surrogate(&s, &sinusoid(u0, f, phase)?, &g).map_err(js_err)?;
    let st = SensitivityTrajectory::from_coefficients(s.basis(), &tr.times, &tr.y, s_min(meas_std)?, SensitivityKind::FirstOrder)
        .map_err(js_err)?;
    let impact = st.impact().map_err(js_err)?;
    Ok(Trajectories {
        mean: tr.y.row(0).iter().copied().collect(),
        s_c: st.s.iter().map(|m| m[(0, 0)]).collect(),
        s_d: st.s.iter().map(|m| m[(0, 1)]).collect(),
        s_min: st.s_min.iter().map(|m| m[(0, 0)]).collect(),
        impact_c: impact[(0, 0)],
        impact_d: impact[(0, 1)],
        times: tr.times,
    })
}

/// Normalized first-order indices along the trajectory from both engines.
#[wasm_bindgen]
pub struct IndexComparison {
    times: Vec<f64>,
    su_c: Vec<f64>,
    su_d: Vec<f64>,
    iota_c: Vec<f64>,
    iota_d: Vec<f64>,
}

#[wasm_bindgen]
impl IndexComparison {
    pub fn times(&self) -> Vec<f64> {
        self.times.clone()
    }
    pub fn su_c(&self) -> Vec<f64> {
        self.su_c.clone()
    }
    pub fn su_d(&self) -> Vec<f64> {
        self.su_d.clone()
    }
    pub fn iota_c(&self) -> Vec<f64> {
        self.iota_c.clone()
    }
    pub fn iota_d(&self) -> Vec<f64> {
        self.iota_d.clone()
    }
}

/// Sobol indices from the degree-3 surrogate next to the transport estimate
/// from `n_samples` model runs.
#[wasm_bindgen]
pub fn compare_engines(u0: f64, f: f64, phase: f64, n_samples: usize, seed: u64) -> Result<IndexComparison, JsError> {
    if !(2..=20_000).contains(&n_samples) {
        return Err(JsError::new("sample count must lie in 2..=20000"));
    }
    let spec = sinusoid(u0, f, phase)?;
    let g = grid();
    let stride = 10;
    let cfg = TransportConfig { stride, ..TransportConfig::new(n_samples, seed) };
    let model = SpringDamper::new(0.0);
    let (_, ot) = nonintrusive_sensitivity_trajectory(&model, &spec, &SpringDamper::ensemble(), &g, &cfg).map_err(js_err)?;

    let s = surrogate(3)?;
    let tr = simulate_surrogate(&s, &spec, &g).map_err(js_err)?;
    let at: Vec<usize> = ot.times.iter().map(|t| (t / STEP).round() as usize).collect();
    let y = DMatrix::from_fn(tr.y.nrows(), at.len(), |r, c| tr.y[(r, at[c])]);
    let zero = vec![DMatrix::zeros(1, 2); at.len()];
    let st = SensitivityTrajectory::from_coefficients(s.basis(), &ot.times, &y, zero, SensitivityKind::FirstOrder)
        .map_err(js_err)?;
    let su = |j: usize| st.su.iter().map(|x| if x.defined[0] { x.values[(0, j)] } else { f64::NAN }).collect();
    Ok(IndexComparison { su_c: su(0), su_d: su(1), iota_c: ot.iota_s(0), iota_d: ot.iota_s(1), times: ot.times })
}

/// Design objective `J` of a sinusoid for the two weightings: sensitivity to
/// the spring constant only, and to the damping only. Returns `[J_c, J_d]`.
#[wasm_bindgen]
pub fn sinusoid_objective(u0: f64, f: f64, phase: f64, meas_std: f64) -> Result<Vec<f64>, JsError> {
    let s = surrogate(3)?;
    let smin = s_min(meas_std)?;
    let mut out = Vec::with_capacity(2);
    for q in [[1.0, 0.0], [0.0, 1.0]] {
        let setup = ProblemSetup {
            template: SignalTemplate::Sinusoid,
            boxes: vec![(0.0, 1.0), (0.0, 5.0), (0.0, 2.0 * std::f64::consts::PI)],
            admissible: AdmissibleSet::unconstrained(HORIZON),
            weights: CostWeights::diagonal(&q, &[0.0]).map_err(js_err)?,
            chance: vec![],
            grid: grid(),
            eval_stride: 1,
            s_min: smin.clone(),
            penalty: Some(1.0),
        };
        let problem = ExcitationProblem::new(setup, EngineSpec::Intrusive(&s)).map_err(js_err)?;
        out.push(problem.evaluate(&[u0, f, phase]).map_err(js_err)?.j);
    }
    Ok(out)
}
