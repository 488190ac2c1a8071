//! Input parameterizations, admissibility checks, the sensitivity cost
//! functional and the one-sided chance-constraint surrogate.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::lpv::check_psd;
use crate::ode::trapezoid;
use crate::{Error, Result};

/// A time-dependent input `u(t)` with `dim()` channels.
pub trait Input: Send + Sync {
    fn dim(&self) -> usize;
    fn eval_into(&self, t: f64, out: &mut [f64]);
}

impl<F: Fn(f64) -> f64 + Send + Sync> Input for F {
    fn dim(&self) -> usize {
        1
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        out[0] = self(t);
    }
}

/// One ramp `sat(u0 + (t - (t_end - dur)) / dur * (u_end - u0))`, saturated to the
/// interval spanned by `u0` and `u_end`. It leaves `u0` at `t_end - dur` and
/// reaches `u_end` at `t_end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ramp {
    pub u0: f64,
    pub u_end: f64,
    pub t_end: f64,
    pub dur: f64,
}

impl Ramp {
    pub fn start(&self) -> f64 {
        self.t_end - self.dur
    }

    pub fn slope(&self) -> f64 {
        (self.u_end - self.u0) / self.dur
    }

    pub fn eval(&self, t: f64) -> f64 {
        let raw = self.u0 + (t - self.start()) / self.dur * (self.u_end - self.u0);
        raw.clamp(self.u0.min(self.u_end), self.u0.max(self.u_end))
    }
}

/// Scalar input signal.
#[derive(Debug, Clone, PartialEq)]
pub enum SignalSpec {
    /// `u0 * sin(2 pi f t - phase)`.
    Sinusoid { u0: f64, f: f64, phase: f64 },
    /// Sum of ramps.
    Ramps(Vec<Ramp>),
    /// Linear interpolation of `values` at increasing `knots`, held constant
    /// outside.
    PiecewiseLinear { knots: Vec<f64>, values: Vec<f64> },
}

impl SignalSpec {
    pub fn zero() -> Self {
        SignalSpec::Ramps(Vec::new())
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            SignalSpec::Sinusoid { u0, f, phase } => u0 * (2.0 * PI * f * t - phase).sin(),
            SignalSpec::Ramps(ramps) => ramps.iter().map(|r| r.eval(t)).sum(),
            SignalSpec::PiecewiseLinear { knots, values } => {
                if knots.is_empty() {
                    return 0.0;
                }
                if t <= knots[0] {
                    return values[0];
                }
                let last = knots.len() - 1;
                if t >= knots[last] {
                    return values[last];
                }
                let k = knots.partition_point(|&x| x <= t) - 1;
                let w = (t - knots[k]) / (knots[k + 1] - knots[k]);
                values[k] + w * (values[k + 1] - values[k])
            }
        }
    }

    /// Samples the signal on `times`.
    pub fn sample(&self, times: &[f64]) -> Vec<f64> {
        times.iter().map(|&t| self.eval(t)).collect()
    }

    /// Breakpoints of a piecewise-linear signal inside `[0, horizon]`, sorted,
    /// including both ends. `None` for smooth signals.
    fn breakpoints(&self, horizon: f64) -> Option<Vec<f64>> {
        let mut pts = vec![0.0, horizon];
        match self {
            SignalSpec::Sinusoid { .. } => return None,
            SignalSpec::Ramps(ramps) => {
                for r in ramps {
                    pts.push(r.start());
                    pts.push(r.t_end);
                }
            }
            SignalSpec::PiecewiseLinear { knots, .. } => pts.extend_from_slice(knots),
        }
        pts.retain(|t| (0.0..=horizon).contains(t));
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        Some(pts)
    }

    /// Maximum of `|u|` over `[0, horizon]`, in closed form.
    pub fn max_abs(&self, horizon: f64) -> f64 {
        match self {
            SignalSpec::Sinusoid { u0, f, phase } => {
                // |sin| peaks where 2 pi f t - phase = pi/2 + k pi
                let mut cands = vec![0.0, horizon];
                cands.extend(sin_critical_points(*f, *phase + PI / 2.0, horizon));
                cands.iter().map(|&t| self.eval(t).abs()).fold(0.0, f64::max).min(u0.abs())
            }
            _ => self
                .breakpoints(horizon)
                .unwrap()
                .iter()
                .map(|&t| self.eval(t).abs())
                .fold(0.0, f64::max),
        }
    }

    /// Maximum of `|du/dt|` over `[0, horizon]`, in closed form.
    pub fn max_rate(&self, horizon: f64) -> f64 {
        match self {
            SignalSpec::Sinusoid { u0, f, phase } => {
                let w = 2.0 * PI * f;
                let rate = |t: f64| (u0 * w * (w * t - phase).cos()).abs();
                let mut cands = vec![0.0, horizon];
                cands.extend(sin_critical_points(*f, *phase, horizon));
                cands.iter().map(|&t| rate(t)).fold(0.0, f64::max).min((u0 * w).abs())
            }
            SignalSpec::Ramps(ramps) => {
                let pts = self.breakpoints(horizon).unwrap();
                pts.windows(2)
                    .map(|seg| {
                        let mid = 0.5 * (seg[0] + seg[1]);
                        ramps
                            .iter()
                            .filter(|r| r.start() < mid && mid < r.t_end)
                            .map(Ramp::slope)
                            .sum::<f64>()
                            .abs()
                    })
                    .fold(0.0, f64::max)
            }
            SignalSpec::PiecewiseLinear { knots, values } => knots
                .windows(2)
                .zip(values.windows(2))
                .filter(|(k, _)| k[1] > 0.0 && k[0] < horizon)
                .map(|(k, v)| ((v[1] - v[0]) / (k[1] - k[0])).abs())
                .fold(0.0, f64::max),
        }
    }

    /// Structural violation: a ramp with non-positive duration or starting
    /// before `t = 0`; total amount by which the constraints `0 < dur <= t_end`
    /// are missed.
    fn structure_violation(&self) -> f64 {
        match self {
            SignalSpec::Ramps(ramps) => ramps
                .iter()
                .map(|r| (r.dur - r.t_end).max(0.0) + (-r.dur).max(0.0))
                .sum(),
            _ => 0.0,
        }
    }
}

/// Times in `(0, horizon)` where `2 pi f t - offset` is a multiple of `pi`.
fn sin_critical_points(f: f64, offset: f64, horizon: f64) -> Vec<f64> {
    if f <= 0.0 {
        return Vec::new();
    }
    let w = 2.0 * PI * f;
    let k_lo = ((-offset) / PI).ceil() as i64;
    let k_hi = ((w * horizon - offset) / PI).floor() as i64;
    (k_lo..=k_hi)
        .map(|k| (offset + k as f64 * PI) / w)
        .filter(|&t| t > 0.0 && t < horizon)
        .collect()
}

impl Input for SignalSpec {
    fn dim(&self) -> usize {
        1
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        out[0] = self.eval(t);
    }
}

/// Mapping from a flat parameter vector to a [`SignalSpec`].
#[derive(Debug, Clone, PartialEq)]
pub enum SignalTemplate {
    /// `p = [u0, f, phase]`.
    Sinusoid,
    /// `p = [u0, u_end, t_end, dur]` repeated `n` times.
    Ramps { n: usize },
    /// `p` = values at the fixed knots.
    PiecewiseLinear { knots: Vec<f64> },
}

impl SignalTemplate {
    pub fn dim(&self) -> usize {
        match self {
            SignalTemplate::Sinusoid => 3,
            SignalTemplate::Ramps { n } => 4 * n,
            SignalTemplate::PiecewiseLinear { knots } => knots.len(),
        }
    }

    pub fn build(&self, p: &[f64]) -> Result<SignalSpec> {
        if p.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "signal template takes {} parameters, got {}",
                self.dim(),
                p.len()
            )));
        }
        Ok(match self {
            SignalTemplate::Sinusoid => SignalSpec::Sinusoid { u0: p[0], f: p[1], phase: p[2] },
            SignalTemplate::Ramps { .. } => SignalSpec::Ramps(
                p.chunks_exact(4)
                    .map(|c| Ramp { u0: c[0], u_end: c[1], t_end: c[2], dur: c[3] })
                    .collect(),
            ),
            SignalTemplate::PiecewiseLinear { knots } => {
                if knots.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Domain("knots must be strictly increasing".into()));
                }
                SignalSpec::PiecewiseLinear { knots: knots.clone(), values: p.to_vec() }
            }
        })
    }

    /// Inverse of [`build`](Self::build) for specs of the matching kind.
    pub fn params(&self, spec: &SignalSpec) -> Option<Vec<f64>> {
        match (self, spec) {
            (SignalTemplate::Sinusoid, SignalSpec::Sinusoid { u0, f, phase }) => Some(vec![*u0, *f, *phase]),
            (SignalTemplate::Ramps { n }, SignalSpec::Ramps(r)) if r.len() == *n => {
                Some(r.iter().flat_map(|r| [r.u0, r.u_end, r.t_end, r.dur]).collect())
            }
            (SignalTemplate::PiecewiseLinear { knots }, SignalSpec::PiecewiseLinear { knots: k, values })
                if k == knots =>
            {
                Some(values.clone())
            }
            _ => None,
        }
    }
}

/// Amplitude, rate and boundary constraints on an input over `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleSet {
    pub horizon: f64,
    pub u_max: Option<f64>,
    pub rate_max: Option<f64>,
    pub u_start: Option<f64>,
    pub u_end: Option<f64>,
}

impl AdmissibleSet {
    pub fn unconstrained(horizon: f64) -> Self {
        Self { horizon, u_max: None, rate_max: None, u_start: None, u_end: None }
    }
}

/// Non-negative violation magnitudes; zero everywhere means admissible.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AdmissibilityReport {
    pub amplitude: f64,
    pub rate: f64,
    pub start: f64,
    pub end: f64,
    pub structure: f64,
}

impl AdmissibilityReport {
    pub fn violations(&self) -> [f64; 5] {
        [self.amplitude, self.rate, self.start, self.end, self.structure]
    }

    pub fn is_feasible(&self) -> bool {
        self.violations().iter().all(|v| *v <= 0.0)
    }

    pub fn squared_sum(&self) -> f64 {
        self.violations().iter().map(|v| v * v).sum()
    }
}

impl std::fmt::Display for AdmissibilityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "feasible: {}", self.is_feasible())?;
        writeln!(f, "amplitude violation: {:e}", self.amplitude)?;
        writeln!(f, "rate violation: {:e}", self.rate)?;
        writeln!(f, "initial value violation: {:e}", self.start)?;
        writeln!(f, "final value violation: {:e}", self.end)?;
        write!(f, "ramp structure violation: {:e}", self.structure)
    }
}

/// Checks `spec` against `set` over the whole horizon using closed forms
/// (piecewise-linear signals attain their extrema at breakpoints, sinusoids at
/// their critical points).
pub fn check_admissible(spec: &SignalSpec, set: &AdmissibleSet) -> AdmissibilityReport {
    let t_end = set.horizon;
    AdmissibilityReport {
        amplitude: set.u_max.map_or(0.0, |m| (spec.max_abs(t_end) - m).max(0.0)),
        rate: set.rate_max.map_or(0.0, |m| (spec.max_rate(t_end) - m).max(0.0)),
        start: set.u_start.map_or(0.0, |u| (spec.eval(0.0) - u).abs()),
        end: set.u_end.map_or(0.0, |u| (spec.eval(t_end) - u).abs()),
        structure: spec.structure_violation(),
    }
}

/// Brute-force variant of [`check_admissible`] on `n_points` uniform samples,
/// with rates from forward differences. Used to cross-check the closed forms.
pub fn check_admissible_dense(spec: &SignalSpec, set: &AdmissibleSet, n_points: usize) -> AdmissibilityReport {
    let n = n_points.max(2);
    let dt = set.horizon / (n - 1) as f64;
    let u: Vec<f64> = (0..n).map(|k| spec.eval(k as f64 * dt)).collect();
    let max_abs = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let max_rate = u.windows(2).fold(0.0f64, |a, w| a.max(((w[1] - w[0]) / dt).abs()));
    AdmissibilityReport {
        amplitude: set.u_max.map_or(0.0, |m| (max_abs - m).max(0.0)),
        rate: set.rate_max.map_or(0.0, |m| (max_rate - m).max(0.0)),
        start: set.u_start.map_or(0.0, |v| (u[0] - v).abs()),
        end: set.u_end.map_or(0.0, |v| (u[n - 1] - v).abs()),
        structure: spec.structure_violation(),
    }
}

/// Weights of the stage cost `vec(dS)^T Q vec(dS) - u^T R u`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl CostWeights {
    /// `q` is `(m q) x (m q)` acting on the column-wise vectorization of `dS`,
    /// `r` is `l x l`. Both must be symmetric positive semidefinite.
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() || !r.is_square() {
            return Err(Error::Dimension("cost weights must be square".into()));
        }
        check_psd(&q, "Q")?;
        check_psd(&r, "R")?;
        Ok(Self { q, r })
    }

    pub fn diagonal(q: &[f64], r: &[f64]) -> Result<Self> {
        Self::new(
            DMatrix::from_diagonal(&DVector::from_column_slice(q)),
            DMatrix::from_diagonal(&DVector::from_column_slice(r)),
        )
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// Stage cost at one time instant.
    pub fn stage(&self, ds: &DMatrix<f64>, u: &[f64]) -> Result<f64> {
        if ds.len() != self.q.nrows() || u.len() != self.r.nrows() {
            return Err(Error::Dimension(format!(
                "stage cost expects {} sensitivities and {} inputs, got {} and {}",
                self.q.nrows(),
                self.r.nrows(),
                ds.len(),
                u.len()
            )));
        }
        // nalgebra storage is column-major, which is exactly vec(dS)
        let v = ds.as_slice();
        let mut gain = 0.0;
        for (i, vi) in v.iter().enumerate() {
            if *vi == 0.0 {
                continue;
            }
            for (j, vj) in v.iter().enumerate() {
                gain += vi * self.q[(i, j)] * vj;
            }
        }
        let mut penalty = 0.0;
        for (i, ui) in u.iter().enumerate() {
            for (j, uj) in u.iter().enumerate() {
                penalty += ui * self.r[(i, j)] * uj;
            }
        }
        Ok(gain - penalty)
    }
}

/// Trapezoid integral of the stage cost. `ds[k]` and `u[k]` are the effective
/// sensitivity and input at `times[k]`.
pub fn cost_functional(times: &[f64], ds: &[DMatrix<f64>], u: &[Vec<f64>], weights: &CostWeights) -> Result<f64> {
    if ds.len() != times.len() || u.len() != times.len() {
        return Err(Error::Dimension(format!(
            "{} times, {} sensitivity samples, {} input samples",
            times.len(),
            ds.len(),
            u.len()
        )));
    }
    let stage = ds
        .iter()
        .zip(u)
        .map(|(s, uk)| weights.stage(s, uk))
        .collect::<Result<Vec<_>>>()?;
    Ok(trapezoid(times, &stage))
}

/// Deterministic surrogate of `Pr(y > y_max) <= alpha` from Cantelli's
/// inequality: `y_max - mean - sigma sqrt((1 - alpha) / alpha)`. The constraint
/// is certified when the margin is non-negative.
pub fn chance_constraint_margin(mean: f64, variance: f64, y_max: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("risk level alpha = {alpha} outside (0, 1)")));
    }
    if variance < 0.0 {
        return Err(Error::Domain(format!("negative variance {variance}")));
    }
    Ok(y_max - mean - variance.sqrt() * ((1.0 - alpha) / alpha).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn ramp_values() {
        let r = SignalSpec::Ramps(vec![Ramp { u0: 0.0, u_end: 1.0, t_end: 2.0, dur: 1.0 }]);
        assert_eq!(r.eval(0.5), 0.0);
        assert_abs_diff_eq!(r.eval(1.5), 0.5, epsilon = 1e-15);
        assert_eq!(r.eval(3.0), 1.0);
    }

    #[test]
    fn descending_ramp_saturates_both_ends() {
        let r = Ramp { u0: 0.3, u_end: -0.2, t_end: 4.0, dur: 2.0 };
        assert_eq!(r.eval(0.0), 0.3);
        assert_eq!(r.eval(5.0), -0.2);
        assert_abs_diff_eq!(r.eval(3.0), 0.05, epsilon = 1e-15);
    }

    #[test]
    fn sinusoid_value() {
        let s = SignalSpec::Sinusoid { u0: 1.0, f: 0.35, phase: 2.31 };
        for t in [0.0, 0.7, 3.3] {
            assert_eq!(s.eval(t), (2.0 * PI * 0.35 * t - 2.31).sin());
        }
    }

    #[test]
    fn piecewise_linear_interpolates() {
        let s = SignalSpec::PiecewiseLinear { knots: vec![0.0, 1.0, 3.0], values: vec![0.0, 2.0, 1.0] };
        assert_eq!(s.eval(-1.0), 0.0);
        assert_eq!(s.eval(0.5), 1.0);
        assert_eq!(s.eval(2.0), 1.5);
        assert_eq!(s.eval(9.0), 1.0);
        assert_eq!(s.max_rate(3.0), 2.0);
    }

    #[test]
    fn steep_ramp_rate_violation() {
        let s = SignalSpec::Ramps(vec![Ramp { u0: 0.0, u_end: 1.0, t_end: 2.0, dur: 1.0 }]);
        let set = AdmissibleSet { rate_max: Some(0.157), ..AdmissibleSet::unconstrained(10.0) };
        assert_abs_diff_eq!(check_admissible(&s, &set).rate, 0.843, epsilon = 1e-12);
    }

    #[test]
    fn table_signals_are_admissible() {
        let set = AdmissibleSet { u_max: Some(1.0), ..AdmissibleSet::unconstrained(10.0) };
        let a = SignalSpec::Sinusoid { u0: 1.0, f: 0.002, phase: 1.591 };
        assert!(check_admissible(&a, &set).is_feasible());
        let vehicle = AdmissibleSet {
            horizon: 10.0,
            u_max: Some(0.14),
            rate_max: Some(0.157),
            u_start: Some(0.0),
            u_end: Some(0.0),
        };
        assert!(check_admissible(&SignalSpec::zero(), &vehicle).is_feasible());
    }

    #[test]
    fn ramp_duration_beyond_end_time_is_a_violation() {
        let s = SignalSpec::Ramps(vec![Ramp { u0: 0.0, u_end: 0.1, t_end: 1.0, dur: 1.5 }]);
        let r = check_admissible(&s, &AdmissibleSet::unconstrained(10.0));
        assert_abs_diff_eq!(r.structure, 0.5, epsilon = 1e-15);
        assert!(!r.is_feasible());
    }

    #[test]
    fn cost_examples() {
        let times = [0.0, 0.5, 1.0];
        let one = DMatrix::from_element(1, 1, 1.0);
        let w = CostWeights::diagonal(&[1.0], &[0.0]).unwrap();
        let j = cost_functional(&times, &vec![one.clone(); 3], &vec![vec![0.0]; 3], &w).unwrap();
        assert_abs_diff_eq!(j, 1.0, epsilon = 1e-15);

        let times = [0.0, 1.0, 2.0];
        let w = CostWeights::diagonal(&[1.0], &[1.0]).unwrap();
        let zero = DMatrix::zeros(1, 1);
        let j = cost_functional(&times, &vec![zero; 3], &vec![vec![1.0]; 3], &w).unwrap();
        assert_abs_diff_eq!(j, -2.0, epsilon = 1e-15);
    }

    #[test]
    fn selecting_weight_ignores_other_column() {
        let w = CostWeights::diagonal(&[1.0, 0.0], &[0.0]).unwrap();
        let a = DMatrix::from_row_slice(1, 2, &[0.3, 0.1]);
        let b = DMatrix::from_row_slice(1, 2, &[0.3, 7.0]);
        assert_eq!(w.stage(&a, &[0.0]).unwrap(), w.stage(&b, &[0.0]).unwrap());
    }

    #[test]
    fn vectorization_is_column_wise() {
        // m = 2 outputs, q = 2 parameters; weight only the (output 1, param 0) entry
        let mut q = DMatrix::zeros(4, 4);
        q[(1, 1)] = 1.0;
        let w = CostWeights::new(q, DMatrix::zeros(1, 1)).unwrap();
        let ds = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(w.stage(&ds, &[0.0]).unwrap(), 9.0);
    }

    #[test]
    fn indefinite_weights_rejected() {
        assert!(CostWeights::diagonal(&[-1.0], &[0.0]).is_err());
    }

    #[test]
    fn cantelli_margins() {
        assert_eq!(chance_constraint_margin(0.3, 0.0, 1.0, 0.1).unwrap(), 0.7);
        assert_abs_diff_eq!(chance_constraint_margin(0.0, 1.0, 2.0, 0.25).unwrap(), 2.0 - 3f64.sqrt(), epsilon = 1e-15);
        assert!(chance_constraint_margin(1.0, 0.01, 1.0, 0.2).unwrap() < 0.0);
        assert!(chance_constraint_margin(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(chance_constraint_margin(0.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn cantelli_is_conservative_for_gaussians() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (mean, sd, alpha): (f64, f64, f64) = (0.2, 0.5, 0.1);
        let kappa: f64 = ((1.0 - alpha) / alpha).sqrt();
        let y_max = mean + sd * kappa;
        assert_abs_diff_eq!(chance_constraint_margin(mean, sd * sd, y_max, alpha).unwrap(), 0.0, epsilon = 1e-12);
        let n = 100_000;
        let exceed = (0..n)
            .filter(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                mean + sd * z > y_max
            })
            .count();
        assert!((exceed as f64 / n as f64) <= alpha);
    }

    #[test]
    fn cost_is_additive_over_intervals() {
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.01).collect();
        let ds: Vec<_> = times.iter().map(|t| DMatrix::from_element(1, 1, t.sin())).collect();
        let u: Vec<_> = times.iter().map(|t| vec![t.cos()]).collect();
        let w = CostWeights::diagonal(&[2.0], &[0.5]).unwrap();
        let full = cost_functional(&times, &ds, &u, &w).unwrap();
        let left = cost_functional(&times[..41], &ds[..41], &u[..41], &w).unwrap();
        let right = cost_functional(&times[40..], &ds[40..], &u[40..], &w).unwrap();
        assert_abs_diff_eq!(full, left + right, epsilon = 1e-12);
    }

    fn ramp_strategy() -> impl Strategy<Value = Ramp> {
        (-0.3..0.3f64, -0.3..0.3f64, 0.1..10.0f64, 0.05..1.0f64)
            .prop_map(|(u0, u_end, t_end, frac)| Ramp { u0, u_end, t_end, dur: frac * t_end })
    }

    proptest! {
        #[test]
        fn ramps_are_continuous_at_breakpoints(ramps in prop::collection::vec(ramp_strategy(), 1..5)) {
            let s = SignalSpec::Ramps(ramps.clone());
            for r in &ramps {
                for t in [r.start(), r.t_end] {
                    let eps = 1e-9;
                    prop_assert!((s.eval(t - eps) - s.eval(t + eps)).abs() < 1e-6);
                }
            }
        }

        #[test]
        fn closed_form_check_matches_dense_grid(
            ramps in prop::collection::vec(ramp_strategy(), 1..4),
            u_max in 0.05..0.6f64,
            rate_max in 0.05..2.0f64,
        ) {
            let s = SignalSpec::Ramps(ramps);
            let set = AdmissibleSet { horizon: 10.0, u_max: Some(u_max), rate_max: Some(rate_max), u_start: None, u_end: None };
            let exact = check_admissible(&s, &set);
            let dense = check_admissible_dense(&s, &set, 100_001);
            // closed forms are exact, so the sampled maximum can only fall short
            prop_assert!(exact.amplitude >= dense.amplitude - 1e-12);
            prop_assert!(exact.rate >= dense.rate - 1e-9);
            if exact.is_feasible() { prop_assert!(dense.is_feasible()); }
            // verdicts agree away from the grid-resolution band
            if exact.amplitude > 0.02 { prop_assert!(dense.amplitude > 0.0); }
            if exact.rate > 0.05 { prop_assert!(dense.rate > 0.0); }
        }

        #[test]
        fn sinusoid_closed_form_matches_dense_grid(u0 in 0.0..1.0f64, f in 0.0..2.0f64, phase in -3.2..3.2f64) {
            let s = SignalSpec::Sinusoid { u0, f, phase };
            let t_end = 3.0;
            let n = 100_001;
            let dt = t_end / (n - 1) as f64;
            let dense_max = (0..n).map(|k| s.eval(k as f64 * dt).abs()).fold(0.0, f64::max);
            let w = 2.0 * PI * f;
            let dense_rate = (0..n).map(|k| (u0 * w * (w * k as f64 * dt - phase).cos()).abs()).fold(0.0, f64::max);
            prop_assert!((s.max_abs(t_end) - dense_max).abs() < 1e-8);
            prop_assert!((s.max_rate(t_end) - dense_rate).abs() < 1e-6);
        }
    }
}
