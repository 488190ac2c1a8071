//! Command bodies. Each returns the files to write; nothing touches the disk
//! until the whole computation has succeeded.

use excite::identify::{least_squares_fit, synthesize_measurements, write_estimates_csv, Measurement};
use excite::lpv::{build_surrogate, noise_to_minimal_sensitivity, simulate_surrogate, SurrogateSystem};
use excite::optimize::{solve, EngineSpec, ExcitationProblem, ProblemSetup, SolveConfig};
use excite::pce::{gauss_quadrature, ChaosBasis};
use excite::sensitivity::{effective_sensitivity, impact_score, SensitivityKind, SensitivityTrajectory};
use excite::signal::{check_admissible, SignalSpec};
use excite::transport::{nonintrusive_sensitivity_trajectory, strided_indices};
use excite::{Error, Result};
use nalgebra::DMatrix;

use crate::prepare::{build_signal, signal_param_names, EngineChoice, Prepared};

pub type Files = Vec<(String, Vec<u8>)>;

fn csv_bytes(f: impl FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        f(&mut w)?;
        w.flush()?;
    }
    Ok(buf)
}

pub fn surrogate(p: &Prepared) -> Result<Option<SurrogateSystem>> {
    let EngineChoice::Intrusive { degree, quad_order } = p.engine else {
        return Ok(None);
    };
    let lpv = p.entry.lpv.as_ref().expect("validated");
    let basis = ChaosBasis::new(p.entry.ensemble.clone(), degree)?;
    let quad = gauss_quadrature(&p.entry.ensemble, quad_order)?;
    log::info!("building surrogate: degree {degree}, {} quadrature nodes", quad.len());
    Ok(Some(build_surrogate(lpv, &basis, &quad)?))
}

/// Minimal sensitivity on every grid point.
fn s_min_series(p: &Prepared) -> Result<Vec<DMatrix<f64>>> {
    let (m, q, len) = (p.m(), p.q(), p.grid.len());
    if let Some(c) = p.cfg.s_min {
        return Ok(vec![DMatrix::from_element(m, q, c); len]);
    }
    match &p.entry.lpv {
        Some(lpv) => noise_to_minimal_sensitivity(lpv, &p.entry.ensemble.means(), &p.grid, q),
        None => Ok(vec![DMatrix::zeros(m, q); len]),
    }
}

struct SensitivityRun {
    times: Vec<f64>,
    ds: Vec<DMatrix<f64>>,
    csv: Vec<u8>,
}

fn run_sensitivity(p: &Prepared, s: Option<&SurrogateSystem>, spec: &SignalSpec, s_min: &[DMatrix<f64>]) -> Result<SensitivityRun> {
    let all_times = p.grid.times();
    let at = strided_indices(all_times.len(), p.stride);
    let times: Vec<f64> = at.iter().map(|&k| all_times[k]).collect();
    let s_min_at: Vec<DMatrix<f64>> = at.iter().map(|&k| s_min[k].clone()).collect();
    let mut csv = Vec::new();
    match &p.engine {
        EngineChoice::Intrusive { .. } => {
            let s = s.expect("surrogate built for the intrusive engine");
            let tr = simulate_surrogate(s, spec, &p.grid)?;
            let y = DMatrix::from_fn(tr.y.nrows(), at.len(), |r, c| tr.y[(r, at[c])]);
            let st = SensitivityTrajectory::from_coefficients(s.basis(), &times, &y, s_min_at, SensitivityKind::FirstOrder)?;
            st.write_csv(&mut csv, &p.entry.outputs, p.entry.ensemble.names())?;
            Ok(SensitivityRun { times, ds: st.ds, csv })
        }
        EngineChoice::Transport(tc) => {
            let (_, traj) = nonintrusive_sensitivity_trajectory(p.entry.black_box.as_ref(), spec, &p.entry.ensemble, &p.grid, tc)?;
            traj.write_csv(&mut csv, p.entry.ensemble.names())?;
            let ds = (0..traj.times.len())
                .map(|k| effective_sensitivity(&traj.s_matrix(k), &s_min_at[k]))
                .collect::<Result<Vec<_>>>()?;
            Ok(SensitivityRun { times, ds, csv })
        }
    }
}

pub fn cmd_sensitivity(p: &Prepared) -> Result<Files> {
    let s = surrogate(p)?;
    let t = p.template.as_ref().expect("validated");
    let params = p.cfg.signal.as_ref().and_then(|s| s.params.as_ref()).expect("validated");
    let spec = build_signal(t, params, "signal").map_err(Error::Config)?;
    let s_min = s_min_series(p)?;
    let run = run_sensitivity(p, s.as_ref(), &spec, &s_min)?;
    let impact = impact_score(&run.times, &run.ds)?;
    let names = p.entry.ensemble.names();
    let impact_csv = csv_bytes(|w| {
        w.write_record(["output", "parameter", "impact"])?;
        for (i, out) in p.entry.outputs.iter().enumerate() {
            for (j, name) in names.iter().enumerate() {
                w.write_record([out.clone(), name.clone(), format!("{:e}", impact[(i, j)])])?;
            }
        }
        Ok(())
    })?;
    Ok(vec![("sensitivity.csv".into(), run.csv), ("impact.csv".into(), impact_csv)])
}

pub fn cmd_optimize(p: &Prepared) -> Result<Files> {
    let s = surrogate(p)?;
    let t = p.template.clone().expect("validated");
    let o = p.cfg.optimize.as_ref().expect("validated");
    let bounds = p.cfg.signal.as_ref().and_then(|s| s.bounds.clone()).expect("validated");
    let setup = ProblemSetup {
        template: t.clone(),
        boxes: bounds.iter().map(|[a, b]| (*a, *b)).collect(),
        admissible: p.admissible.clone(),
        weights: p.weights(p.m(), p.q()).map_err(Error::Config)?,
        chance: p.chance(p.m()).map_err(Error::Config)?,
        grid: p.grid,
        eval_stride: o.eval_stride,
        s_min: s_min_series(p)?,
        penalty: o.penalty,
    };
    let engine = match &p.engine {
        EngineChoice::Intrusive { .. } => EngineSpec::Intrusive(s.as_ref().expect("built")),
        EngineChoice::Transport(tc) => EngineSpec::Transport {
            model: p.entry.black_box.as_ref(),
            ensemble: &p.entry.ensemble,
            config: tc.clone(),
        },
    };
    let problem = ExcitationProblem::new(setup, engine)?;
    let cfg = SolveConfig {
        de: p.de_config(),
        refine: o.refine,
        initial: o.initial.clone(),
        ..Default::default()
    };
    let r = solve(&problem, &cfg)?;
    log::info!(
        "done: J = {:.6e} after {} generations, {} objective calls, {} surrogate and {} model runs",
        r.evaluation.j,
        r.generations,
        r.evaluations,
        r.surrogate_runs,
        r.model_runs
    );
    let names = signal_param_names(&t);
    let optimum = csv_bytes(|w| {
        let mut header = names.clone();
        header.extend(["J".to_string(), "J_penalized".to_string(), "feasible".to_string()]);
        w.write_record(&header)?;
        let mut row: Vec<String> = r.best_p.iter().map(|v| format!("{v:?}")).collect();
        row.push(format!("{:?}", r.evaluation.j));
        row.push(format!("{:?}", r.evaluation.penalized));
        row.push(r.evaluation.is_feasible().to_string());
        w.write_record(&row)?;
        Ok(())
    })?;
    let trace = csv_bytes(|w| {
        w.write_record(["iteration", "best_J"])?;
        for (k, v) in r.trace.iter().enumerate() {
            w.write_record([k.to_string(), format!("{v:?}")])?;
        }
        Ok(())
    })?;
    let spec = t.build(&r.best_p)?;
    let signal = signal_csv(&spec, &p.grid.times())?;
    Ok(vec![
        ("optimum.csv".into(), optimum),
        ("trace.csv".into(), trace),
        ("signal.csv".into(), signal),
    ])
}

fn signal_csv(spec: &SignalSpec, times: &[f64]) -> Result<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record(["t", "u_1"])?;
        for &t in times {
            w.write_record([format!("{t}"), format!("{:e}", spec.eval(t))])?;
        }
        Ok(())
    })
}

pub fn cmd_identify(p: &Prepared) -> Result<Files> {
    let t = p.template.as_ref().expect("validated");
    let id = p.cfg.identify.as_ref().expect("validated");
    let model = p.entry.black_box.as_ref();
    let mut data: Vec<Measurement> = Vec::with_capacity(id.datasets.len());
    for (k, d) in id.datasets.iter().enumerate() {
        let spec = build_signal(t, &d.params, &d.label).map_err(Error::Config)?;
        let seed = d.seed.unwrap_or(p.seed.wrapping_add(k as u64));
        data.push(synthesize_measurements(model, &id.truth, &spec, &p.grid, id.noise_std, seed, d.label.clone())?);
    }
    let start = id.start.clone().unwrap_or_else(|| p.entry.ensemble.means());
    let bounds: Vec<(f64, f64)> = id.bounds.iter().map(|[a, b]| (*a, *b)).collect();
    let mut reports = Vec::new();
    for d in &data {
        reports.push(least_squares_fit(model, std::slice::from_ref(d), &start, &bounds, d.label.clone())?);
    }
    if id.combined && data.len() > 1 {
        reports.push(least_squares_fit(model, &data, &start, &bounds, "combined")?);
    }
    for r in &reports {
        if !r.unidentifiable.is_empty() {
            log::warn!("dataset `{}`: {} unidentifiable direction(s)", r.label, r.unidentifiable.len());
        }
    }
    let mut buf = Vec::new();
    write_estimates_csv(&mut buf, &reports, p.entry.ensemble.names())?;
    Ok(vec![("estimates.csv".into(), buf)])
}

pub fn cmd_rank(p: &Prepared) -> Result<Files> {
    let s = surrogate(p)?;
    let t = p.template.as_ref().expect("validated");
    let rank = p.cfg.rank.as_ref().expect("validated");
    let s_min = s_min_series(p)?;
    let q = p.q();
    let mut rows = Vec::with_capacity(rank.signals.len());
    for sig in &rank.signals {
        let spec = build_signal(t, &sig.params, &sig.label).map_err(Error::Config)?;
        let scores = match run_sensitivity(p, s.as_ref(), &spec, &s_min) {
            Ok(run) => {
                let imp = impact_score(&run.times, &run.ds)?;
                (0..q).map(|j| imp.column(j).sum()).collect()
            }
            // a signal that excites nothing scores zero
            Err(Error::ZeroVariance) => vec![0.0; q],
            Err(e) => return Err(e),
        };
        let admissible = check_admissible(&spec, &p.admissible).is_feasible();
        rows.push((sig.label.clone(), scores, admissible));
    }
    let key = p.entry.ensemble.index_of(&rank.sort_by).expect("validated");
    rows.sort_by(|a: &(String, Vec<f64>, bool), b| b.1[key].total_cmp(&a.1[key]));
    let names = p.entry.ensemble.names();
    let csv = csv_bytes(|w| {
        let mut header = vec!["signal".to_string()];
        header.extend(names.iter().cloned());
        header.push("admissible".into());
        w.write_record(&header)?;
        for (label, scores, adm) in &rows {
            let mut rec = vec![label.clone()];
            rec.extend(scores.iter().map(|v| format!("{v:e}")));
            rec.push(adm.to_string());
            w.write_record(&rec)?;
        }
        Ok(())
    })?;
    Ok(vec![("ranking.csv".into(), csv)])
}

pub fn cmd_surrogate(p: &Prepared) -> Result<Files> {
    let s = surrogate(p)?.expect("validated");
    let mut buf = Vec::new();
    s.write_to(&mut buf)?;
    Ok(vec![("surrogate.txt".into(), buf)])
}
