//! One function per subcommand. Each writes its artifacts into the output
//! directory and returns the written paths and a verdict.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use kmv_core::coupling::{build_projection_coupling_with, pw_bound_terms};
use kmv_core::girsanov::{reweight_flow, v_contraction, v_distance};
use kmv_core::killed_sde::simulate_flow;
use kmv_core::measures::{read_measure, write_flow, LyapunovV, MeasureFlow};
use kmv_core::picard::{fokker_planck_residual, picard_solve_from, DirichletTestFunction, PicardConfig, PicardOutcome};
use kmv_core::transport::{transport, Method, TransportOptions};
use kmv_core::Error;

use crate::config::{build_initial, ExperimentConfig};
use crate::output::{num, Table};

/// Written files and whether the run met its own pass condition.
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub pass: bool,
    pub summary: String,
}

fn flow_files(flow: &MeasureFlow, dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(write_flow(flow, &dir.join("flow"))?)
}

fn mass_table(flow: &MeasureFlow) -> Table {
    let mut t = Table::new(&["t", "mass"]);
    for (k, m) in flow.masses().into_iter().enumerate() {
        t.row(&[num(flow.grid().time(k)), num(m)]);
    }
    t
}

pub fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let dom = cfg.build_domain()?;
    let field = cfg.build_field()?;
    let e = cfg.build_initial(cfg.initial()?)?;
    let grid = cfg.time_grid()?;
    let gamma = e.to_measure(&dom)?;
    let run = simulate_flow(&field, &MeasureFlow::constant(grid, &gamma), &e, &cfg.simulation_options()?)?;
    let mut files = flow_files(&run.flow, out)?;
    files.push(mass_table(&run.flow).write(&out.join("mass.csv"))?);
    let mut ex = Table::new(&["particle", "exit_time"]);
    for (i, t) in run.ensemble.exit_times().iter().enumerate() {
        ex.row(&[i.to_string(), if t.is_finite() { num(*t) } else { "inf".into() }]);
    }
    files.push(ex.write(&out.join("exits.csv"))?);
    Ok(Outcome {
        files,
        pass: true,
        summary: format!("simulated {} particles; killed fraction {:.6}", e.len(), run.killed_fraction()),
    })
}

pub fn picard_config(cfg: &ExperimentConfig, particles: usize) -> Result<PicardConfig> {
    let g = cfg.grid()?;
    let mut pc = PicardConfig::new(cfg.time_grid()?, particles, g.dt, cfg.metric()?);
    pc.theta = cfg.picard.theta;
    pc.tol = cfg.picard.tol;
    pc.max_iter = cfg.picard.max_iter;
    pc.seed = cfg.seed;
    pc.bridge_correction = cfg.simulate.bridge;
    pc.v = cfg.lyapunov()?;
    Ok(pc)
}

/// Run the fixed-point iteration; non-convergence is returned as Ok with
/// the error so the trace can still be written.
pub fn solve_fixed_point(cfg: &ExperimentConfig) -> Result<std::result::Result<PicardOutcome, Error>> {
    let dom = cfg.build_domain()?;
    let field = cfg.build_field()?;
    let e = cfg.build_initial(cfg.initial()?)?;
    let pc = picard_config(cfg, e.len())?;
    let gamma = e.to_measure(&dom)?;
    match picard_solve_from(&field, &gamma, &e, &pc) {
        Ok(o) => Ok(Ok(o)),
        Err(err @ Error::NonConvergence { .. }) => Ok(Err(err)),
        Err(err) => Err(err.into()),
    }
}

pub fn picard(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let mut files = Vec::new();
    let mut trace = Table::new(&["iteration", "distance"]);
    let mut timing = Table::new(&["iteration", "wall_time"]);
    let mut verdict = Table::new(&["converged", "iterations", "theta", "last_distance"]);
    let (pass, summary) = match solve_fixed_point(cfg)? {
        Ok(o) => {
            for e in &o.trace {
                trace.row(&[e.iteration.to_string(), num(e.distance)]);
                timing.row(&[e.iteration.to_string(), format!("{:.6}", e.wall_time)]);
            }
            let last = o.trace.last().map(|e| e.distance).unwrap_or(0.0);
            verdict.row(&["true".into(), o.converged_at.to_string(), num(o.theta), num(last)]);
            files.extend(flow_files(&o.flow, out)?);
            (true, format!("converged at iteration {} (θ = {})", o.converged_at, o.theta))
        }
        Err(Error::NonConvergence { iterations, last_distance, trace: t }) => {
            for (i, d) in t.iter().enumerate() {
                trace.row(&[(i + 1).to_string(), num(*d)]);
            }
            verdict.row(&["false".into(), iterations.to_string(), "nan".into(), num(last_distance)]);
            (false, format!("no convergence after {iterations} iterations, last distance {last_distance:e}"))
        }
        Err(e) => return Err(e.into()),
    };
    files.push(trace.write(&out.join("trace.csv"))?);
    files.push(timing.write(&out.join("timing.csv"))?);
    files.push(verdict.write(&out.join("verdict.csv"))?);
    Ok(Outcome { files, pass, summary })
}

pub fn couple(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let dom = cfg.build_domain()?;
    let field = cfg.build_field()?;
    let spec = cfg.couple.clone().unwrap_or(crate::config::CoupleSpec {
        initial2: None,
        drift_shift: 0.0,
    });
    let e1 = cfg.build_initial(cfg.initial()?)?;
    let e2 = match &spec.initial2 {
        Some(s) => build_initial(&dom, s, cfg.seed)?,
        None => e1.clone(),
    };
    if e2.len() != e1.len() {
        bail!("both coupled ensembles need the same particle count");
    }
    let field2 = field.with_drift_shift(vec![spec.drift_shift; field.dim()])?;
    let grid = cfg.time_grid()?;
    let opts = cfg.simulation_options()?;
    let flow1 = simulate_flow(&field, &MeasureFlow::constant(grid, &e1.to_measure(&dom)?), &e1, &opts)?.flow;
    let flow2 = simulate_flow(&field2, &MeasureFlow::constant(grid, &e2.to_measure(&dom)?), &e2, &opts)?.flow;
    let c = build_projection_coupling_with(&field, &field2, &flow1, &flow2, (&e1, &e2), &opts)?;
    let mut t = Table::new(&["t", "w1hat_lhs", "direct", "killed1", "killed2", "pass_flag"]);
    let mut all = true;
    for k in 0..grid.nodes() {
        let p = pw_bound_terms(&c, k)?;
        let ok = p.holds(3.0);
        all &= ok;
        t.row(&[num(p.t), num(p.lhs), num(p.direct), num(p.killed1), num(p.killed2), u8::from(ok).to_string()]);
    }
    Ok(Outcome {
        files: vec![t.write(&out.join("couple.csv"))?],
        pass: all,
        summary: format!("projection bound {} at all {} nodes", if all { "holds" } else { "FAILS" }, grid.nodes()),
    })
}

pub fn dist(cfg: &ExperimentConfig, config_dir: &Path, out: &Path) -> Result<Outcome> {
    let dom = cfg.build_domain()?;
    let spec = cfg.dist.as_ref().context("the dist subcommand needs a [dist] table")?;
    let read = |p: &Path| -> Result<_> {
        let full = if p.is_absolute() { p.to_path_buf() } else { config_dir.join(p) };
        let f = fs::File::open(&full).with_context(|| format!("opening {}", full.display()))?;
        Ok(read_measure(dom.clone(), f)?)
    };
    let (mu, nu) = (read(&spec.first)?, read(&spec.second)?);
    let method = match spec.method.as_deref().unwrap_or("auto") {
        "auto" => Method::Auto,
        "exact" => Method::Exact,
        "closed_form" => Method::ClosedForm,
        "sinkhorn" => Method::Sinkhorn(Default::default()),
        other => bail!("unknown transport method `{other}`"),
    };
    let mut t = Table::new(&["metric", "distance", "method", "iterations", "duality_gap"]);
    for (name, mut opts) in [("w1_hat", TransportOptions::truncated()), ("w1", TransportOptions::untruncated())] {
        opts.method = method;
        let r = transport(&mu, &nu, &opts)?;
        t.row(&[name.into(), num(r.distance), r.stats.method.into(), r.stats.iterations.to_string(), r.stats.duality_gap.map(num).unwrap_or_default()]);
    }
    Ok(Outcome {
        files: vec![t.write(&out.join("dist.csv"))?],
        pass: true,
        summary: "distances written".into(),
    })
}

pub fn girsanov_check(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let dom = cfg.build_domain()?;
    let field = cfg.build_field()?;
    let spec = cfg.girsanov.as_ref().context("girsanov-check needs a [girsanov] table")?;
    let e1 = cfg.build_initial(cfg.initial()?)?;
    let e2 = build_initial(&dom, &spec.second, cfg.seed ^ 0x2)?;
    let grid = cfg.time_grid()?;
    let opts = cfg.simulation_options()?;
    let flow1 = MeasureFlow::constant(grid, &e1.to_measure(&dom)?);
    let flow2 = MeasureFlow::constant(grid, &e2.to_measure(&dom)?);
    let v = cfg.lyapunov()?.unwrap_or_else(|| LyapunovV::constant_one(dom.dim()));
    let r = reweight_flow(&field, &flow1, &flow2, &e1, &opts)?;
    let mut t = Table::new(&["t", "mean_R", "ess", "v_dist", "pass"]);
    let mut all = true;
    for k in 0..grid.nodes() {
        let ok = (r.mean_r[k] - 1.0).abs() <= 3.0 * r.se_r[k] + 1e-9;
        all &= ok;
        let vd = v_distance(r.base.at(k), r.flow.at(k), &v)?;
        t.row(&[num(grid.time(k)), num(r.mean_r[k]), num(r.ess[k]), num(vd), u8::from(ok).to_string()]);
    }
    let mut lt = Table::new(&["lambda", "lhs", "rho", "ratio"]);
    let mut prev = f64::INFINITY;
    for &l in &spec.lambdas {
        let row = v_contraction(&r, &flow1, &flow2, &v, l)?;
        all &= row.ratio <= prev;
        prev = row.ratio;
        lt.row(&[num(l), num(row.lhs), num(row.rho), num(row.ratio)]);
    }
    Ok(Outcome {
        files: vec![t.write(&out.join("girsanov.csv"))?, lt.write(&out.join("v_contraction.csv"))?],
        pass: all,
        summary: format!("martingale and λ-monotonicity checks {}", if all { "pass" } else { "FAIL" }),
    })
}

pub fn validate(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let dom = cfg.build_domain()?;
    let field = cfg.build_field()?;
    let opts = kmv_core::coefficients::ValidationOptions {
        samples: cfg.validate.samples,
        seed: cfg.seed,
        t_max: cfg.grid.map(|g| g.t_end).unwrap_or(1.0),
        v: cfg.lyapunov()?,
        ..Default::default()
    };
    let rep = kmv_core::coefficients::validate_hypotheses(&field, &dom, &opts)?;
    let mut t = Table::new(&["check", "enforced", "checked", "max_lhs", "worst_ratio", "worst_excess", "pass"]);
    for r in &rep.rows {
        t.row(&[
            r.name.into(),
            r.enforced.to_string(),
            r.checked.to_string(),
            num(r.max_lhs),
            num(r.worst_ratio),
            num(r.worst_excess),
            u8::from(r.pass).to_string(),
        ]);
    }
    // Report-only: the verdict is written, the exit status stays zero.
    Ok(Outcome {
        files: vec![t.write(&out.join("validate.csv"))?],
        pass: true,
        summary: format!("{rep}"),
    })
}

pub fn fp_residual(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let dom = cfg.build_domain()?;
    let field = cfg.build_field()?;
    let flow = if cfg.fp_residual.fixed_point {
        match solve_fixed_point(cfg)? {
            Ok(o) => o.flow,
            Err(e) => bail!("fixed point not reached: {e}"),
        }
    } else {
        let e = cfg.build_initial(cfg.initial()?)?;
        let grid = cfg.time_grid()?;
        simulate_flow(&field, &MeasureFlow::constant(grid, &e.to_measure(&dom)?), &e, &cfg.simulation_options()?)?.flow
    };
    let f = match cfg.fp_residual.test_function.as_str() {
        "sine" => DirichletTestFunction::sine(&dom)?,
        "zero" => DirichletTestFunction::zero(&dom)?,
        other => bail!("unknown test function `{other}` (expected sine or zero)"),
    };
    let res = fokker_planck_residual(&flow, &field, &f)?;
    let mut t = Table::new(&["test_function", "residual"]);
    t.row(&[cfg.fp_residual.test_function.clone(), num(res)]);
    Ok(Outcome {
        files: vec![t.write(&out.join("fp_residual.csv"))?],
        pass: true,
        summary: format!("residual {res:.6e}"),
    })
}
