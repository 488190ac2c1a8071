//! Turns a parsed configuration into validated model, grid and signal objects.
//! Everything that can be rejected without running a simulation is rejected
//! here, so config errors never leave partial output behind.

use excite::models::{model_by_name, ModelEntry};
use excite::ode::TimeGrid;
use excite::optimize::ChanceConstraint;
use excite::signal::{AdmissibleSet, CostWeights, SignalSpec, SignalTemplate};
use excite::transport::{BinStrategy, TransportConfig};

use crate::config::{EngineSection, RunConfig, SignalKind, SignalSection, Strategy};
use crate::Command;

/// Noise level of the spring-damper scenario when the config gives none.
pub const SPRING_DAMPER_MEAS_STD: f64 = 0.007;

pub enum EngineChoice {
    Intrusive { degree: usize, quad_order: usize },
    Transport(TransportConfig),
}

pub struct Prepared {
    pub cfg: RunConfig,
    pub seed: u64,
    pub entry: ModelEntry,
    pub grid: TimeGrid,
    pub engine: EngineChoice,
    /// Sensitivity evaluation stride on the simulation grid.
    pub stride: usize,
    pub template: Option<SignalTemplate>,
    pub admissible: AdmissibleSet,
}

type Res<T> = Result<T, String>;

fn need<T>(v: Option<T>, what: &str) -> Res<T> {
    v.ok_or_else(|| format!("missing `{what}`"))
}

fn template_of(s: &SignalSection) -> Res<SignalTemplate> {
    Ok(match s.kind {
        SignalKind::Sinusoid => SignalTemplate::Sinusoid,
        SignalKind::Ramps => {
            let n = need(s.n, "signal.n")?;
            if n == 0 {
                return Err("signal.n must be positive".into());
            }
            SignalTemplate::Ramps { n }
        }
        SignalKind::PiecewiseLinear => {
            let knots = need(s.knots.clone(), "signal.knots")?;
            if knots.is_empty() || knots.windows(2).any(|w| w[1] <= w[0]) || knots.iter().any(|k| !k.is_finite()) {
                return Err("signal.knots must be finite and strictly increasing".into());
            }
            SignalTemplate::PiecewiseLinear { knots }
        }
    })
}

/// Names of the signal parameters, used as CSV headers.
pub fn signal_param_names(t: &SignalTemplate) -> Vec<String> {
    match t {
        SignalTemplate::Sinusoid => vec!["u0".into(), "f".into(), "phase".into()],
        SignalTemplate::Ramps { n } => (1..=*n)
            .flat_map(|i| [format!("u0_{i}"), format!("u_end_{i}"), format!("t_end_{i}"), format!("dur_{i}")])
            .collect(),
        SignalTemplate::PiecewiseLinear { knots } => (1..=knots.len()).map(|i| format!("v_{i}")).collect(),
    }
}

pub fn build_signal(t: &SignalTemplate, p: &[f64], what: &str) -> Res<SignalSpec> {
    if p.iter().any(|v| !v.is_finite()) {
        return Err(format!("{what}: non-finite signal parameter"));
    }
    t.build(p).map_err(|e| format!("{what}: {e}"))
}

fn positive(v: f64, what: &str) -> Res<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(format!("`{what}` must be positive and finite, got {v}"))
    }
}

pub fn prepare(cfg: RunConfig, seed_override: Option<u64>, cmd: Command) -> Res<Prepared> {
    let seed = seed_override.unwrap_or(cfg.seed);
    let meas_std = match (cfg.model.name.as_str(), cfg.model.meas_std) {
        (_, Some(s)) => s,
        ("spring_damper", None) => SPRING_DAMPER_MEAS_STD,
        _ => 0.0,
    };
    if !(meas_std >= 0.0 && meas_std.is_finite()) {
        return Err(format!("model.meas_std must be non-negative, got {meas_std}"));
    }
    let entry = model_by_name(&cfg.model.name, meas_std).map_err(|e| e.to_string())?;
    positive(cfg.model.horizon, "model.horizon")?;
    let step = cfg.model.step.unwrap_or(entry.step);
    positive(step, "model.step")?;
    let grid = TimeGrid::new(0.0, cfg.model.horizon, step).map_err(|e| e.to_string())?;
    let (m, q) = (entry.outputs.len(), entry.ensemble.q());

    let (engine, stride) = match &cfg.engine {
        EngineSection::Intrusive { degree, quad_order, stride } => {
            if entry.lpv.is_none() {
                return Err(format!("model `{}` has no LPV form; use the transport engine", entry.name));
            }
            let order = quad_order.unwrap_or(2 * (degree + 1));
            if order == 0 {
                return Err("engine.quad_order must be positive".into());
            }
            let nodes = (order as f64).powi(q as i32);
            if nodes > 5e7 {
                return Err(format!("quadrature grid of {nodes:e} nodes is too large"));
            }
            (EngineChoice::Intrusive { degree: *degree, quad_order: order }, *stride)
        }
        EngineSection::Transport { samples, bins, strategy, stride } => {
            if *samples < 2 {
                return Err(format!("engine.samples must be at least 2, got {samples}"));
            }
            if let Some(b) = bins {
                if *b == 0 || b > samples {
                    return Err(format!("engine.bins must lie in 1..={samples}"));
                }
            }
            let strategy = match strategy {
                Strategy::Equiprobable => BinStrategy::Equiprobable,
                Strategy::Equiwidth => BinStrategy::Equiwidth,
            };
            let tc = TransportConfig { bins: *bins, strategy, stride: *stride, ..TransportConfig::new(*samples, seed) };
            (EngineChoice::Transport(tc), *stride)
        }
    };
    if stride == 0 {
        return Err("engine.stride must be positive".into());
    }
    if let Some(s) = cfg.s_min {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(format!("s_min must be non-negative, got {s}"));
        }
    }

    let template = cfg.signal.as_ref().map(template_of).transpose()?;
    let a = cfg.admissible.clone().unwrap_or_default();
    let admissible = AdmissibleSet {
        horizon: cfg.model.horizon,
        u_max: a.u_max,
        rate_max: a.rate_max,
        u_start: a.u_start,
        u_end: a.u_end,
    };
    for (v, what) in [(a.u_max, "admissible.u_max"), (a.rate_max, "admissible.rate_max")] {
        if let Some(v) = v {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("`{what}` must be non-negative"));
            }
        }
    }

    let p = Prepared { cfg, seed, entry, grid, engine, stride, template, admissible };
    match cmd {
        Command::Sensitivity => {
            let t = need(p.template.as_ref(), "[signal]")?;
            let params = need(p.cfg.signal.as_ref().and_then(|s| s.params.as_ref()), "signal.params")?;
            build_signal(t, params, "signal.params")?;
        }
        Command::Optimize => {
            let t = need(p.template.as_ref(), "[signal]")?;
            let bounds = need(p.cfg.signal.as_ref().and_then(|s| s.bounds.as_ref()), "signal.bounds")?;
            if bounds.len() != t.dim() {
                return Err(format!("signal.bounds has {} entries, the signal has {} parameters", bounds.len(), t.dim()));
            }
            if bounds.iter().any(|[lo, hi]| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
                return Err("signal.bounds must be finite with lower <= upper".into());
            }
            p.weights(m, q)?;
            p.chance(m)?;
            let o = need(p.cfg.optimize.as_ref(), "[optimize]")?;
            if o.eval_stride == 0 {
                return Err("optimize.eval_stride must be positive".into());
            }
            p.de_config().validate(t.dim()).map_err(|e| e.to_string())?;
            if o.initial.iter().any(|c| c.len() != t.dim()) {
                return Err(format!("optimize.initial candidates must have {} entries", t.dim()));
            }
            if let Some(r) = o.penalty {
                positive(r, "optimize.penalty")?;
            }
        }
        Command::Identify => {
            let t = need(p.template.as_ref(), "[signal]")?;
            let id = need(p.cfg.identify.as_ref(), "[identify]")?;
            if id.truth.len() != q || id.bounds.len() != q || id.start.as_ref().is_some_and(|s| s.len() != q) {
                return Err(format!("identify.truth, start and bounds need {q} entries"));
            }
            if !(id.noise_std >= 0.0 && id.noise_std.is_finite()) {
                return Err("identify.noise_std must be non-negative".into());
            }
            let start = id.start.clone().unwrap_or_else(|| p.entry.ensemble.means());
            for (k, [lo, hi]) in id.bounds.iter().enumerate() {
                if !(lo <= hi) || start[k] < *lo || start[k] > *hi {
                    return Err(format!("identify bounds for parameter {k} must contain the start value"));
                }
            }
            if id.datasets.is_empty() {
                return Err("identify.datasets is empty".into());
            }
            for d in &id.datasets {
                build_signal(t, &d.params, &format!("dataset `{}`", d.label))?;
            }
        }
        Command::Rank => {
            let t = need(p.template.as_ref(), "[signal]")?;
            let r = need(p.cfg.rank.as_ref(), "[rank]")?;
            if p.entry.ensemble.index_of(&r.sort_by).is_none() {
                return Err(format!(
                    "rank.sort_by `{}` is not a parameter (expected one of {})",
                    r.sort_by,
                    p.entry.ensemble.names().join(", ")
                ));
            }
            if r.signals.is_empty() {
                return Err("rank.signals is empty".into());
            }
            for s in &r.signals {
                build_signal(t, &s.params, &format!("signal `{}`", s.label))?;
            }
        }
        Command::Surrogate => {
            if !matches!(p.engine, EngineChoice::Intrusive { .. }) {
                return Err("surrogate export needs the intrusive engine".into());
            }
        }
    }
    Ok(p)
}

impl Prepared {
    pub fn weights(&self, m: usize, q: usize) -> Res<CostWeights> {
        let w = need(self.cfg.weights.as_ref(), "[weights]")?;
        if w.q.len() != m * q || w.r.len() != 1 {
            return Err(format!("weights.q needs {} entries and weights.r one", m * q));
        }
        CostWeights::diagonal(&w.q, &w.r).map_err(|e| e.to_string())
    }

    pub fn chance(&self, m: usize) -> Res<Vec<ChanceConstraint>> {
        self.cfg
            .chance
            .iter()
            .map(|c| {
                if c.output >= m {
                    return Err(format!("chance constraint on output {} of {m}", c.output));
                }
                if !(c.alpha > 0.0 && c.alpha < 1.0) {
                    return Err(format!("chance alpha must lie in (0, 1), got {}", c.alpha));
                }
                Ok(ChanceConstraint { output: c.output, y_max: c.y_max, alpha: c.alpha })
            })
            .collect()
    }

    pub fn de_config(&self) -> excite::optimize::DeConfig {
        let o = self.cfg.optimize.as_ref().expect("validated");
        excite::optimize::DeConfig {
            pop_per_dim: o.pop_per_dim,
            max_iter: o.max_iter,
            f: o.f,
            cr: o.cr,
            seed: self.seed,
            stagnation: (o.stagnation > 0).then_some(o.stagnation),
        }
    }

    pub fn m(&self) -> usize {
        self.entry.outputs.len()
    }

    pub fn q(&self) -> usize {
        self.entry.ensemble.q()
    }
}
