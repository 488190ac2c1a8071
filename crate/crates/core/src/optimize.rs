//! Differential evolution over signal parameters with penalty-handled
//! constraints, optional gradient refinement, and the excitation problem that
//! ties a signal template to a sensitivity engine.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lpv::{Propagator, SurrogateSystem};
use crate::models::{BlackBoxModel, CountingModel};
use crate::ode::{trapezoid, TimeGrid};
use crate::par::map_indexed;
use crate::pce::ParameterEnsemble;
use crate::sensitivity::{build_index_sets, output_variance, sensitivity_at, IndexSets, SensitivityKind};
use crate::signal::{
    chance_constraint_margin, check_admissible, AdmissibilityReport, AdmissibleSet, CostWeights, SignalSpec,
    SignalTemplate,
};
use crate::transport::{sample_parameters, strided_indices, BinStrategy, SampleSet, TransportConfig};
use crate::{Error, Result};

/// Differential evolution settings (`rand/1/bin`).
#[derive(Debug, Clone, PartialEq)]
pub struct DeConfig {
    /// Population size per parameter dimension; the population holds
    /// `pop_per_dim * dim(p)` members.
    pub pop_per_dim: usize,
    pub max_iter: usize,
    /// Differential weight.
    pub f: f64,
    /// Crossover rate.
    pub cr: f64,
    pub seed: u64,
    /// Stop when the best value has not improved by more than `1e-10` over
    /// this many generations.
    pub stagnation: Option<usize>,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self { pop_per_dim: 20, max_iter: 100, f: 0.8, cr: 0.9, seed: 0, stagnation: Some(30) }
    }
}

impl DeConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.pop_per_dim * dim < 4 {
            return Err(Error::Config(format!(
                "population of {} members is too small (need at least 4)",
                self.pop_per_dim * dim
            )));
        }
        if !(self.f > 0.0 && self.f <= 2.0) {
            return Err(Error::Config(format!("differential weight F = {} outside (0, 2]", self.f)));
        }
        if !(0.0..=1.0).contains(&self.cr) {
            return Err(Error::Config(format!("crossover rate CR = {} outside [0, 1]", self.cr)));
        }
        Ok(())
    }
}

/// Outcome of a maximization run.
#[derive(Debug, Clone, PartialEq)]
pub struct DeResult {
    pub best_p: Vec<f64>,
    pub best_j: f64,
    /// Best value after the initial population and after every generation.
    pub trace: Vec<f64>,
    pub evaluations: usize,
    pub generations: usize,
}

fn clip(p: &mut [f64], boxes: &[(f64, f64)]) {
    for (x, (lo, hi)) in p.iter_mut().zip(boxes) {
        *x = x.clamp(*lo, *hi);
    }
}

fn sanitize(j: f64) -> f64 {
    if j.is_nan() {
        f64::NEG_INFINITY
    } else {
        j
    }
}

fn member_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn check_boxes(boxes: &[(f64, f64)]) -> Result<()> {
    if boxes.is_empty() {
        return Err(Error::Config("empty parameter box".into()));
    }
    for (i, (lo, hi)) in boxes.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Config(format!("invalid bounds [{lo}, {hi}] for parameter {i}")));
        }
    }
    Ok(())
}

/// Maximizes `objective` over `boxes`.
///
/// Every member draws its random numbers from its own ChaCha8 stream
/// (`seed`, stream `generation * pop + member`), and all trial vectors of a
/// generation are evaluated before selection, so the result does not depend on
/// evaluation order or thread count. `initial` members (clipped) replace the
/// first random members. `on_generation(gen, best_j, best_p)` is called after
/// every generation.
pub fn differential_evolution(
    objective: &(dyn Fn(&[f64]) -> f64 + Sync),
    boxes: &[(f64, f64)],
    cfg: &DeConfig,
    initial: &[Vec<f64>],
    mut on_generation: impl FnMut(usize, f64, &[f64]),
) -> Result<DeResult> {
    check_boxes(boxes)?;
    let dim = boxes.len();
    cfg.validate(dim)?;
    let np = cfg.pop_per_dim * dim;
    let mut pop: Vec<Vec<f64>> = (0..np)
        .map(|i| {
            let mut rng = member_rng(cfg.seed, i as u64);
            boxes.iter().map(|(lo, hi)| if hi > lo { rng.random_range(*lo..=*hi) } else { *lo }).collect()
        })
        .collect();
    for (slot, p) in pop.iter_mut().zip(initial) {
        if p.len() != dim {
            return Err(Error::Dimension(format!("initial member has {} entries, expected {dim}", p.len())));
        }
        slot.copy_from_slice(p);
        clip(slot, boxes);
    }
    let mut fit: Vec<f64> = map_indexed(np, |i| sanitize(objective(&pop[i])));
    let mut evaluations = np;
    let argmax = |fit: &[f64]| {
        let mut b = 0;
        for (i, v) in fit.iter().enumerate() {
            if *v > fit[b] {
                b = i;
            }
        }
        b
    };
    let mut best = argmax(&fit);
    let mut trace = vec![fit[best]];
    on_generation(0, fit[best], &pop[best]);

    let mut generations = 0;
    for gen in 1..=cfg.max_iter {
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let mut rng = member_rng(cfg.seed, (gen * np + i) as u64);
                let mut pick = |excl: &[usize]| loop {
                    let r = rng.random_range(0..np);
                    if !excl.contains(&r) {
                        break r;
                    }
                };
                let a = pick(&[i]);
                let b = pick(&[i, a]);
                let c = pick(&[i, a, b]);
                let forced = rng.random_range(0..dim);
                let mut trial = pop[i].clone();
                for k in 0..dim {
                    if k == forced || rng.random::<f64>() < cfg.cr {
                        trial[k] = pop[a][k] + cfg.f * (pop[b][k] - pop[c][k]);
                    }
                }
                clip(&mut trial, boxes);
                trial
            })
            .collect();
        let trial_fit: Vec<f64> = map_indexed(np, |i| sanitize(objective(&trials[i])));
        evaluations += np;
        for (i, (t, ft)) in trials.into_iter().zip(trial_fit).enumerate() {
            if ft >= fit[i] {
                pop[i] = t;
                fit[i] = ft;
            }
        }
        best = argmax(&fit);
        trace.push(fit[best]);
        generations = gen;
        on_generation(gen, fit[best], &pop[best]);
        if let Some(window) = cfg.stagnation {
            if trace.len() > window {
                let old = trace[trace.len() - 1 - window];
                if fit[best] - old <= 1e-10 {
                    log::debug!("stagnation stop after {gen} generations");
                    break;
                }
            }
        }
    }
    Ok(DeResult { best_p: pop[best].clone(), best_j: fit[best], trace, evaluations, generations })
}

/// Local refinement result.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineResult {
    pub p: Vec<f64>,
    pub j: f64,
    pub evaluations: usize,
}

/// Projected quasi-Newton (BFGS) ascent from `p0` with central finite-difference
/// gradients (relative step 1e-6, absolute floor 1e-9). Stops when the projected
/// gradient or the step falls below `tol`. Never returns a point worse than `p0`.
pub fn refine_local(
    objective: &(dyn Fn(&[f64]) -> f64 + Sync),
    p0: &[f64],
    boxes: &[(f64, f64)],
    tol: f64,
    max_iter: usize,
) -> RefineResult {
    let dim = p0.len();
    let mut p = p0.to_vec();
    clip(&mut p, boxes);
    let mut j = sanitize(objective(&p));
    let mut evals = 1;
    if !j.is_finite() {
        log::warn!("objective is not finite at the refinement start; keeping it");
        return RefineResult { p, j, evaluations: evals };
    }
    let gradient = |p: &[f64], evals: &mut usize| -> Option<DVector<f64>> {
        let parts: Vec<Option<f64>> = map_indexed(dim, |k| {
            let h = (1e-6 * p[k].abs()).max(1e-9);
            let (lo, hi) = boxes[k];
            let mut up = p.to_vec();
            let mut dn = p.to_vec();
            up[k] = (p[k] + h).min(hi);
            dn[k] = (p[k] - h).max(lo);
            let span = up[k] - dn[k];
            if span <= 0.0 {
                return Some(0.0);
            }
            let g = (objective(&up) - objective(&dn)) / span;
            g.is_finite().then_some(g)
        });
        *evals += 2 * dim;
        parts.into_iter().collect::<Option<Vec<_>>>().map(DVector::from_vec)
    };
    let project = |g: &DVector<f64>, p: &[f64]| -> DVector<f64> {
        DVector::from_fn(dim, |k, _| {
            let (lo, hi) = boxes[k];
            if (p[k] <= lo && g[k] < 0.0) || (p[k] >= hi && g[k] > 0.0) {
                0.0
            } else {
                g[k]
            }
        })
    };
    let Some(mut g) = gradient(&p, &mut evals) else {
        log::warn!("non-finite gradient at the refinement start; keeping it");
        return RefineResult { p, j, evaluations: evals };
    };
    // inverse Hessian of -J
    let mut h_inv = DMatrix::<f64>::identity(dim, dim);
    for _ in 0..max_iter {
        let pg = project(&g, &p);
        if pg.amax() <= tol {
            break;
        }
        let mut dir = &h_inv * &pg;
        if dir.dot(&pg) <= 0.0 {
            h_inv = DMatrix::identity(dim, dim);
            dir = pg.clone();
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut cand: Vec<f64> = p.iter().zip(dir.iter()).map(|(x, d)| x + alpha * d).collect();
            clip(&mut cand, boxes);
            let jc = sanitize(objective(&cand));
            evals += 1;
            if jc > j {
                accepted = Some((cand, jc));
                break;
            }
            alpha *= 0.5;
        }
        let Some((cand, jc)) = accepted else { break };
        let s = DVector::from_iterator(dim, cand.iter().zip(&p).map(|(a, b)| a - b));
        let step = s.amax();
        p = cand;
        j = jc;
        let Some(g_new) = gradient(&p, &mut evals) else { break };
        // curvature pair for the minimization of -J
        let y = &g - &g_new;
        let sy = s.dot(&y);
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let id = DMatrix::<f64>::identity(dim, dim);
            let left = &id - &s * y.transpose() * rho;
            let right = &id - &y * s.transpose() * rho;
            h_inv = &left * &h_inv * &right + &s * s.transpose() * rho;
        }
        g = g_new;
        if step <= tol {
            break;
        }
    }
    RefineResult { p, j, evaluations: evals }
}

/// One-sided probabilistic output bound `Pr(y_i > y_max) <= alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChanceConstraint {
    pub output: usize,
    pub y_max: f64,
    pub alpha: f64,
}

/// Problem data shared by both engines.
#[derive(Debug, Clone)]
pub struct ProblemSetup {
    pub template: SignalTemplate,
    pub boxes: Vec<(f64, f64)>,
    pub admissible: AdmissibleSet,
    pub weights: CostWeights,
    pub chance: Vec<ChanceConstraint>,
    pub grid: TimeGrid,
    /// The cost is integrated over every `eval_stride`-th grid point.
    pub eval_stride: usize,
    /// Minimal sensitivity, one `m x q` matrix per grid point or a single one
    /// used at all times.
    pub s_min: Vec<DMatrix<f64>>,
    /// Penalty coefficient; `None` picks `1e3` times the objective scale.
    pub penalty: Option<f64>,
}

/// Sensitivity engine bound to a problem.
pub enum EngineSpec<'a> {
    /// Galerkin surrogate; one surrogate simulation per objective call.
    Intrusive(&'a SurrogateSystem),
    /// Bures/transport estimator on a black-box model; `N_s` model runs per
    /// objective call on one fixed parameter sample set.
    Transport {
        model: &'a dyn BlackBoxModel,
        ensemble: &'a ParameterEnsemble,
        config: TransportConfig,
    },
}

enum Engine<'a> {
    Intrusive {
        surrogate: &'a SurrogateSystem,
        propagator: Propagator,
        sets: IndexSets,
    },
    Transport {
        model: CountingModel<'a>,
        theta: DMatrix<f64>,
        seed: u64,
        bins: usize,
        strategy: BinStrategy,
    },
}

/// Detailed objective value of one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Cost functional without penalties.
    pub j: f64,
    pub admissibility: AdmissibilityReport,
    /// Worst (smallest) Cantelli margin over time per chance constraint.
    pub chance_margins: Vec<f64>,
    /// `j - rho * (violations^2 + negative margins^2)`.
    pub penalized: f64,
}

impl Evaluation {
    pub fn is_feasible(&self) -> bool {
        self.admissibility.is_feasible() && self.chance_margins.iter().all(|m| *m >= 0.0)
    }
}

/// Sensitivity-related series of one candidate at the evaluation times.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSeries {
    pub times: Vec<f64>,
    pub s: Vec<DMatrix<f64>>,
    pub ds: Vec<DMatrix<f64>>,
    /// Output mean and variance (including measurement noise), `m` each.
    pub mean: Vec<Vec<f64>>,
    pub variance: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
}

/// A finite-dimensional excitation design problem.
pub struct ExcitationProblem<'a> {
    setup: ProblemSetup,
    engine: Engine<'a>,
    eval_idx: Vec<usize>,
    times: Vec<f64>,
    penalty: f64,
    surrogate_runs: AtomicUsize,
    m: usize,
    q: usize,
}

impl<'a> ExcitationProblem<'a> {
    pub fn new(setup: ProblemSetup, engine: EngineSpec<'a>) -> Result<Self> {
        check_boxes(&setup.boxes)?;
        if setup.boxes.len() != setup.template.dim() {
            return Err(Error::Config(format!(
                "{} parameter bounds for a signal with {} parameters",
                setup.boxes.len(),
                setup.template.dim()
            )));
        }
        let grid = setup.grid;
        let (engine, m, q) = match engine {
            EngineSpec::Intrusive(s) => {
                if s.l() != 1 {
                    return Err(Error::Dimension("signal templates drive single-input systems".into()));
                }
                let sets = build_index_sets(s.basis());
                let q = s.basis().q();
                (Engine::Intrusive { surrogate: s, propagator: s.propagator(grid.step()), sets }, s.m(), q)
            }
            EngineSpec::Transport { model, ensemble, config } => {
                if model.l() != 1 {
                    return Err(Error::Dimension("signal templates drive single-input systems".into()));
                }
                if ensemble.q() != model.q() {
                    return Err(Error::Dimension(format!(
                        "model has {} parameters, ensemble {}",
                        model.q(),
                        ensemble.q()
                    )));
                }
                // drawn once per problem: every candidate sees the same samples
                let theta = sample_parameters(ensemble, config.n_samples, config.seed)?;
                let bins = config.n_bins();
                (
                    Engine::Transport {
                        model: CountingModel::new(model),
                        theta,
                        seed: config.seed,
                        bins,
                        strategy: config.strategy,
                    },
                    model.m(),
                    model.q(),
                )
            }
        };
        let all_times = grid.times();
        let eval_idx = strided_indices(all_times.len(), setup.eval_stride);
        let times = eval_idx.iter().map(|&k| all_times[k]).collect();
        if setup.s_min.len() != 1 && setup.s_min.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} minimal-sensitivity samples for a grid of {} points",
                setup.s_min.len(),
                grid.len()
            )));
        }
        if setup.s_min.iter().any(|s| s.shape() != (m, q)) {
            return Err(Error::Dimension(format!("minimal sensitivity must be {m}x{q}")));
        }
        if setup.weights.q().nrows() != m * q || setup.weights.r().nrows() != 1 {
            return Err(Error::Dimension(format!(
                "Q must be {0}x{0} and R 1x1 for {m} outputs and {q} parameters",
                m * q
            )));
        }
        if let Some(c) = setup.chance.iter().find(|c| c.output >= m) {
            return Err(Error::Config(format!("chance constraint on output {} of {m}", c.output)));
        }
        let mut problem = Self {
            penalty: setup.penalty.unwrap_or(1.0),
            setup,
            engine,
            eval_idx,
            times,
            surrogate_runs: AtomicUsize::new(0),
            m,
            q,
        };
        if problem.setup.penalty.is_none() {
            let center: Vec<f64> = problem.setup.boxes.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
            let scale = problem.evaluate(&center).map(|e| e.j.abs()).unwrap_or(0.0);
            problem.penalty = 1e3 * if scale > 0.0 { scale } else { 1.0 };
            problem.reset_counters();
        }
        Ok(problem)
    }

    pub fn setup(&self) -> &ProblemSetup {
        &self.setup
    }

    pub fn dim(&self) -> usize {
        self.setup.template.dim()
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    /// Times at which the cost is evaluated.
    pub fn eval_times(&self) -> &[f64] {
        &self.times
    }

    pub fn surrogate_runs(&self) -> usize {
        self.surrogate_runs.load(Ordering::Relaxed)
    }

    pub fn model_runs(&self) -> usize {
        match &self.engine {
            Engine::Transport { model, .. } => model.count(),
            Engine::Intrusive { .. } => 0,
        }
    }

    pub fn reset_counters(&self) {
        self.surrogate_runs.store(0, Ordering::Relaxed);
        if let Engine::Transport { model, .. } = &self.engine {
            model.reset();
        }
    }

    fn s_min_at(&self, k: usize) -> &DMatrix<f64> {
        if self.setup.s_min.len() == 1 {
            &self.setup.s_min[0]
        } else {
            &self.setup.s_min[self.eval_idx[k]]
        }
    }

    /// Sensitivities and output moments of the signal `spec`.
    pub fn series(&self, spec: &SignalSpec) -> Result<CandidateSeries> {
        let grid = &self.setup.grid;
        let (s, mean, mut variance): (Vec<DMatrix<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>) = match &self.engine {
            Engine::Intrusive { surrogate, propagator, sets } => {
                self.surrogate_runs.fetch_add(1, Ordering::Relaxed);
                let y = surrogate.simulate_outputs(propagator, spec, grid)?;
                let ell = surrogate.ell();
                let mut s = Vec::with_capacity(self.eval_idx.len());
                let mut mean = Vec::with_capacity(self.eval_idx.len());
                let mut var = Vec::with_capacity(self.eval_idx.len());
                for &k in &self.eval_idx {
                    let col = y.column(k);
                    s.push(sensitivity_at(col.as_slice(), sets, SensitivityKind::FirstOrder)?);
                    mean.push((0..self.m).map(|i| col[i * ell]).collect());
                    var.push(output_variance(col.as_slice(), surrogate.basis())?);
                }
                (s, mean, var)
            }
            Engine::Transport { model, theta, seed, bins, strategy } => {
                let set = SampleSet::simulate(model, theta.clone(), *seed, spec, grid)?;
                let all_times = grid.times();
                let traj = set.indices(&all_times, &self.eval_idx, *bins, *strategy)?;
                let mut mean = Vec::with_capacity(self.eval_idx.len());
                let mut var = Vec::with_capacity(self.eval_idx.len());
                for &k in &self.eval_idx {
                    let (mu, cov) = crate::transport::empirical_moments(&set.outputs_at(k))?;
                    mean.push(mu.iter().copied().collect());
                    var.push(cov.diagonal().iter().copied().collect());
                }
                ((0..self.eval_idx.len()).map(|k| traj.s_matrix(k)).collect(), mean, var)
            }
        };
        let mut ds = Vec::with_capacity(s.len());
        for (k, sk) in s.iter().enumerate() {
            let smin = self.s_min_at(k);
            ds.push(sk.zip_map(smin, |a, b| (a - b).max(0.0)));
            // measurement noise: S_min rows hold the noise standard deviation
            for (i, v) in variance[k].iter_mut().enumerate() {
                *v += smin[(i, 0)] * smin[(i, 0)];
            }
        }
        let u = self.times.iter().map(|&t| vec![spec.eval(t)]).collect();
        Ok(CandidateSeries { times: self.times.clone(), s, ds, mean, variance, u })
    }

    pub fn evaluate(&self, p: &[f64]) -> Result<Evaluation> {
        let spec = self.setup.template.build(p)?;
        let admissibility = check_admissible(&spec, &self.setup.admissible);
        let ser = self.series(&spec)?;
        let stage = ser
            .ds
            .iter()
            .zip(&ser.u)
            .map(|(d, u)| self.setup.weights.stage(d, u))
            .collect::<Result<Vec<_>>>()?;
        let j = trapezoid(&ser.times, &stage);
        let mut chance_margins = Vec::with_capacity(self.setup.chance.len());
        for c in &self.setup.chance {
            let mut worst = f64::INFINITY;
            for (mu, var) in ser.mean.iter().zip(&ser.variance) {
                worst = worst.min(chance_constraint_margin(mu[c.output], var[c.output], c.y_max, c.alpha)?);
            }
            chance_margins.push(worst);
        }
        let violation = admissibility.squared_sum() + chance_margins.iter().map(|m| m.min(0.0).powi(2)).sum::<f64>();
        Ok(Evaluation { j, admissibility, chance_margins, penalized: j - self.penalty * violation })
    }

    /// Penalized cost; `-inf` when the engine fails.
    pub fn objective(&self, p: &[f64]) -> f64 {
        match self.evaluate(p) {
            Ok(e) => e.penalized,
            Err(e) => {
                log::debug!("objective failed at {p:?}: {e}");
                f64::NEG_INFINITY
            }
        }
    }

    /// Impact score `integral |dS_ij| dt` of a signal.
    pub fn impact(&self, spec: &SignalSpec) -> Result<DMatrix<f64>> {
        let ser = self.series(spec)?;
        crate::sensitivity::impact_score(&ser.times, &ser.ds)
    }

    pub fn n_outputs(&self) -> usize {
        self.m
    }

    pub fn n_params(&self) -> usize {
        self.q
    }
}

/// Settings of [`solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub de: DeConfig,
    /// Run the gradient refinement after DE.
    pub refine: bool,
    pub refine_tol: f64,
    pub refine_max_iter: usize,
    /// Candidates injected into the initial population.
    pub initial: Vec<Vec<f64>>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self { de: DeConfig::default(), refine: true, refine_tol: 1e-8, refine_max_iter: 50, initial: Vec::new() }
    }
}

/// Result of [`solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub best_p: Vec<f64>,
    /// Penalized objective at `best_p`.
    pub best_j: f64,
    pub evaluation: Evaluation,
    /// Best value per DE generation, followed by the refined value if refinement ran.
    pub trace: Vec<f64>,
    pub evaluations: usize,
    pub generations: usize,
    pub surrogate_runs: usize,
    pub model_runs: usize,
}

/// Differential evolution followed by optional local refinement.
pub fn solve(problem: &ExcitationProblem<'_>, cfg: &SolveConfig) -> Result<OptimizationResult> {
    let obj = |p: &[f64]| problem.objective(p);
    let boxes = &problem.setup.boxes;
    let de = differential_evolution(&obj, boxes, &cfg.de, &cfg.initial, |gen, best, p| {
        let feasible = problem
            .setup
            .template
            .build(p)
            .map(|s| check_admissible(&s, &problem.setup.admissible).is_feasible())
            .unwrap_or(false);
        log::info!("iter {gen:4}  best J {best:.6e}  feasible {feasible}");
    })?;
    let mut trace = de.trace.clone();
    let mut best_p = de.best_p.clone();
    let mut best_j = de.best_j;
    let mut evaluations = de.evaluations;
    if cfg.refine && best_j.is_finite() {
        let r = refine_local(&obj, &best_p, boxes, cfg.refine_tol, cfg.refine_max_iter);
        evaluations += r.evaluations;
        if r.j >= best_j {
            best_p = r.p;
            best_j = r.j;
        }
        trace.push(best_j);
    }
    let evaluation = problem.evaluate(&best_p)?;
    Ok(OptimizationResult {
        best_p,
        best_j,
        evaluation,
        trace,
        evaluations,
        generations: de.generations,
        surrogate_runs: problem.surrogate_runs(),
        model_runs: problem.model_runs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(target: [f64; 3]) -> impl Fn(&[f64]) -> f64 + Sync {
        move |p: &[f64]| -p.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
    }

    #[test]
    fn sphere_benchmark() {
        let target = [1.0, -2.0, 3.5];
        let f = sphere(target);
        let cfg = DeConfig { max_iter: 200, stagnation: None, ..Default::default() };
        let r = differential_evolution(&f, &[(-5.0, 5.0); 3], &cfg, &[], |_, _, _| {}).unwrap();
        let err: f64 = r.best_p.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-2, "{err}");
        assert_eq!(r.evaluations, 60 * 201);
        assert!(r.trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn identical_population_is_stationary() {
        let f = sphere([0.0; 3]);
        let boxes = [(0.5, 0.5), (0.2, 0.2), (-1.0, -1.0)];
        let cfg = DeConfig { max_iter: 5, pop_per_dim: 2, stagnation: None, ..Default::default() };
        let r = differential_evolution(&f, &boxes, &cfg, &[], |_, _, _| {}).unwrap();
        assert_eq!(r.best_p, vec![0.5, 0.2, -1.0]);
        assert!(r.trace.iter().all(|v| *v == r.trace[0]));
    }

    #[test]
    fn same_seed_same_trace() {
        let f = |p: &[f64]| -(p[0] - 0.3).powi(2) - (p[1] * p[0]).sin().abs();
        let cfg = DeConfig { max_iter: 30, pop_per_dim: 5, seed: 42, ..Default::default() };
        let a = differential_evolution(&f, &[(-2.0, 2.0); 2], &cfg, &[], |_, _, _| {}).unwrap();
        let b = differential_evolution(&f, &[(-2.0, 2.0); 2], &cfg, &[], |_, _, _| {}).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn candidates_respect_boxes() {
        let boxes = [(0.0, 1.0), (-3.0, -2.0)];
        let f = |p: &[f64]| {
            assert!(p[0] >= 0.0 && p[0] <= 1.0 && p[1] >= -3.0 && p[1] <= -2.0);
            p[0] + p[1]
        };
        let cfg = DeConfig { max_iter: 20, pop_per_dim: 4, ..Default::default() };
        let r = differential_evolution(&f, &boxes, &cfg, &[vec![9.0, 9.0]], |_, _, _| {}).unwrap();
        assert!((r.best_j - (-1.0)).abs() < 1e-9);
    }

    #[test]
    fn invalid_config_rejected() {
        let f = |_: &[f64]| 0.0;
        let bad = DeConfig { f: 0.0, ..Default::default() };
        assert!(differential_evolution(&f, &[(0.0, 1.0)], &bad, &[], |_, _, _| {}).is_err());
        let tiny = DeConfig { pop_per_dim: 3, ..Default::default() };
        assert!(differential_evolution(&f, &[(0.0, 1.0)], &tiny, &[], |_, _, _| {}).is_err());
        assert!(differential_evolution(&f, &[(1.0, 0.0)], &DeConfig::default(), &[], |_, _, _| {}).is_err());
    }

    #[test]
    fn refine_at_optimum_stays() {
        let f = |p: &[f64]| -(p[0] - 1.0).powi(2) - 2.0 * (p[1] + 0.5).powi(2);
        let r = refine_local(&f, &[1.0, -0.5], &[(-3.0, 3.0); 2], 1e-8, 50);
        assert_eq!(r.p, vec![1.0, -0.5]);
    }

    #[test]
    fn refine_finds_parabola_vertex() {
        let f = |p: &[f64]| -3.0 * (p[0] - 0.7).powi(2) + 1.0;
        let r = refine_local(&f, &[-1.5], &[(-2.0, 2.0)], 1e-8, 100);
        assert!((r.p[0] - 0.7).abs() <= 1e-6, "{:?}", r.p);
    }

    #[test]
    fn refine_respects_bounds_and_kinks() {
        let f = |p: &[f64]| p[0] - 50.0 * (p[0] - 0.3).max(0.0).powi(2) - (p[1] - 0.1).abs();
        let p0 = [0.0, 0.0];
        let r = refine_local(&f, &p0, &[(0.0, 1.0), (-1.0, 1.0)], 1e-10, 100);
        assert!(r.j >= f(&p0));
        let g = |p: &[f64]| p[0];
        let r = refine_local(&g, &[0.2], &[(0.0, 1.0)], 1e-10, 100);
        assert_eq!(r.p, vec![1.0]);
    }

    #[test]
    fn refine_keeps_non_finite_start() {
        let f = |_: &[f64]| f64::NAN;
        let r = refine_local(&f, &[0.3], &[(0.0, 1.0)], 1e-8, 10);
        assert_eq!(r.p, vec![0.3]);
    }
}
