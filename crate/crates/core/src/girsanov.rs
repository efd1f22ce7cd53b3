//! Realizing Φμ² on the paths of Φμ¹ through the Girsanov density
//! R_t = exp(∫⟨ξ, dW⟩ − ½∫|ξ|² dt), ξ = σ*(σσ*)⁻¹{b(·, μ²) − b(·, μ¹)}.

use std::time::Instant;

use crate::coefficients::CoefficientField;
use crate::error::{invalid, Error, Result};
use crate::killed_sde::{normalized_weights, simulate_flow, simulate_tilted, NodeState, ParticleEnsemble, SimulationOptions};
use crate::measures::{LyapunovV, MeasureFlow, SubProbMeasure};
use crate::picard::{choose_theta, reweight_trace, PicardConfig, PicardOutcome, TraceEntry};
use crate::transport::{weighted_sup, weighted_variation, weighted_variation_binned, Binning};

/// Bin width for ‖·‖_V between clouds that do not share atoms.
pub const FALLBACK_BIN_WIDTH: f64 = 0.02;

/// Per-node importance weights of one base run.
#[derive(Clone, Debug)]
pub struct ReweightedFlow {
    /// Φμ² on the atoms of Φμ¹, weights R/ΣR.
    pub flow: MeasureFlow,
    /// Φμ¹, weights 1/N.
    pub base: MeasureFlow,
    /// log R at each node, per particle.
    pub log_weights: Vec<Vec<f64>>,
    /// Sample mean of R at each node.
    pub mean_r: Vec<f64>,
    /// Standard error of `mean_r`.
    pub se_r: Vec<f64>,
    /// (ΣR)²/ΣR² at each node.
    pub ess: Vec<f64>,
}

impl ReweightedFlow {
    /// mean R within `k` standard errors of 1 at every node.
    pub fn martingale_ok(&self, k: f64) -> bool {
        self.mean_r
            .iter()
            .zip(&self.se_r)
            .all(|(m, s)| (m - 1.0).abs() <= k * s + 1e-12)
    }
}

fn weight_stats(lw: &[f64]) -> (f64, f64, f64) {
    let n = lw.len() as f64;
    let r: Vec<f64> = lw.iter().map(|l| l.exp()).collect();
    let mean = r.iter().sum::<f64>() / n;
    let var = r.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    let s2: f64 = r.iter().map(|x| x * x).sum();
    let ess = if s2 > 0.0 { (mean * n).powi(2) / s2 } else { 0.0 };
    (mean, (var / n).sqrt(), ess)
}

/// Drive `initial` under `flow1` and weight its paths toward `flow2`.
pub fn reweight_flow(
    field: &CoefficientField,
    flow1: &MeasureFlow,
    flow2: &MeasureFlow,
    initial: &ParticleEnsemble,
    opts: &SimulationOptions,
) -> Result<ReweightedFlow> {
    if field.diffusion_depends_on_measure() {
        return invalid("noise has to be distribution independent for reweighting");
    }
    let start = initial.clone().with_log_weights();
    let o = SimulationOptions {
        record_paths: true,
        ..*opts
    };
    let out = simulate_tilted(field, flow1, Some(flow2), &start, &o)?;
    let paths: Vec<NodeState> = out.paths.unwrap_or_default();
    let n = initial.len();
    let uniform = vec![1.0 / n as f64; n];
    let base: Vec<SubProbMeasure> = out
        .flow
        .snapshots()
        .iter()
        .map(|s| s.reweighted(uniform.clone()))
        .collect::<Result<_>>()?;
    let mut log_weights = Vec::with_capacity(paths.len());
    let (mut mean_r, mut se_r, mut ess) = (Vec::new(), Vec::new(), Vec::new());
    for p in paths {
        let lw = p.log_weights.unwrap_or_else(|| vec![0.0; n]);
        let (m, s, e) = weight_stats(&lw);
        mean_r.push(m);
        se_r.push(s);
        ess.push(e);
        log_weights.push(lw);
    }
    Ok(ReweightedFlow {
        flow: out.flow,
        base: MeasureFlow::new(*flow1.grid(), base)?,
        log_weights,
        mean_r,
        se_r,
        ess,
    })
}

/// ‖μ − ν‖_V: exact on shared atoms, binned otherwise.
pub fn v_distance(mu: &SubProbMeasure, nu: &SubProbMeasure, v: &LyapunovV) -> Result<f64> {
    if mu.shares_atoms_with(nu) {
        weighted_variation(mu, nu, v)
    } else {
        let bins = Binning {
            origin: vec![0.0; mu.dim()],
            width: FALLBACK_BIN_WIDTH,
        };
        weighted_variation_binned(mu, nu, v, &bins)
    }
}

fn v_node_distances(a: &MeasureFlow, b: &MeasureFlow, v: &LyapunovV) -> Result<Vec<f64>> {
    if a.grid() != b.grid() {
        return invalid("flows live on different time grids");
    }
    (0..a.grid().nodes()).map(|k| v_distance(a.at(k), b.at(k), v)).collect()
}

/// One λ of the weighted-variation contraction check.
#[derive(Clone, Debug, PartialEq)]
pub struct VContraction {
    pub lambda: f64,
    /// sup_t e^{−λt}‖Φμ¹_t − Φμ²_t‖_V on shared atoms.
    pub lhs: f64,
    /// ρ_λ(μ¹, μ²).
    pub rho: f64,
    /// sup_t (∫₀ᵗ e^{−2λ(t−s)} ds)^{1/2}.
    pub horizon: f64,
    /// lhs/ρ_λ.
    pub ratio: f64,
}

impl VContraction {
    /// C·ρ_λ·horizon.
    pub fn rhs(&self, c: f64) -> f64 {
        c * self.rho * self.horizon
    }

    /// The constant this run would need: lhs/(ρ_λ·horizon).
    pub fn implied_constant(&self) -> f64 {
        self.lhs / (self.rho * self.horizon)
    }
}

/// Shared-atom pair (Φμ¹, Φμ²) for [`v_contraction`].
pub fn shared_images(
    field: &CoefficientField,
    initial: &ParticleEnsemble,
    flow1: &MeasureFlow,
    flow2: &MeasureFlow,
    opts: &SimulationOptions,
) -> Result<ReweightedFlow> {
    reweight_flow(field, flow1, flow2, initial, opts)
}

/// Evaluate lhs and ρ_λ for each λ from one shared-atom realization.
pub fn v_contraction(images: &ReweightedFlow, flow1: &MeasureFlow, flow2: &MeasureFlow, v: &LyapunovV, lambda: f64) -> Result<VContraction> {
    let grid = flow1.grid();
    let rho = weighted_sup(grid, &v_node_distances(flow1, flow2, v)?, lambda);
    if rho == 0.0 {
        return Err(Error::Indeterminate {
            denominator: 0.0,
            threshold: 0.0,
        });
    }
    let lhs = weighted_sup(grid, &v_node_distances(&images.base, &images.flow, v)?, lambda);
    let t = grid.t_end();
    let horizon = if lambda > 0.0 {
        ((1.0 - (-2.0 * lambda * t).exp()) / (2.0 * lambda)).sqrt()
    } else {
        t.sqrt()
    };
    Ok(VContraction {
        lambda,
        lhs,
        rho,
        horizon,
        ratio: lhs / rho,
    })
}

/// Sweep of [`v_contraction`] with a verdict: every lhs ≤ C·ρ_λ·horizon,
/// ratios non-increasing in λ and below 1 at the largest λ.
#[derive(Clone, Debug)]
pub struct VContractionCheck {
    pub rows: Vec<VContraction>,
    pub c: f64,
    pub pass: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn v_contraction_check(
    field: &CoefficientField,
    initial: &ParticleEnsemble,
    flow1: &MeasureFlow,
    flow2: &MeasureFlow,
    v: &LyapunovV,
    lambdas: &[f64],
    c: f64,
    opts: &SimulationOptions,
) -> Result<VContractionCheck> {
    let images = shared_images(field, initial, flow1, flow2, opts)?;
    let rows: Vec<VContraction> = lambdas
        .iter()
        .map(|&l| v_contraction(&images, flow1, flow2, v, l))
        .collect::<Result<_>>()?;
    let bounded = rows.iter().all(|r| r.lhs <= r.rhs(c));
    let decreasing = rows.windows(2).all(|w| w[1].ratio <= w[0].ratio);
    let last_small = rows.last().map(|r| r.ratio < 1.0).unwrap_or(false);
    Ok(VContractionCheck {
        rows,
        c,
        pass: bounded && decreasing && last_small,
    })
}

/// Per-start moment ratio E[sup_t V(X_t)^p]/V(X₀)^p.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentRow {
    pub start: Vec<f64>,
    pub particles: usize,
    pub ratio: f64,
    pub se: f64,
}

#[derive(Clone, Debug)]
pub struct MomentBound {
    pub rows: Vec<MomentRow>,
    pub max: f64,
    pub pass: bool,
}

/// Simulate under `flow` (typically a fixed point) and group particles by
/// their starting point. The sup over time is taken over grid nodes. PASS
/// iff the ratio at the start with the largest V(X₀) does not exceed the
/// largest ratio among the other starts by more than 3σ, i.e. the ratio
/// does not grow with V(X₀).
pub fn moment_bound_check(
    field: &CoefficientField,
    v: &LyapunovV,
    flow: &MeasureFlow,
    initial: &ParticleEnsemble,
    p: f64,
    opts: &SimulationOptions,
) -> Result<MomentBound> {
    if !(p >= 1.0) {
        return invalid("moment order p must be at least 1");
    }
    let o = SimulationOptions {
        record_paths: true,
        ..*opts
    };
    let out = simulate_flow(field, flow, initial, &o)?;
    let paths = out.paths.unwrap_or_default();
    let d = initial.dim();
    let n = initial.len();
    let mut sup = vec![0.0f64; n];
    for st in &paths {
        for (i, s) in sup.iter_mut().enumerate() {
            *s = s.max(v.value(&st.positions[i * d..(i + 1) * d]).powf(p));
        }
    }
    let mut groups: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for i in 0..n {
        let x0 = initial.position(i);
        let ratio = sup[i] / v.value(x0).powf(p);
        match groups.iter_mut().find(|g| g.0 == x0) {
            Some(g) => g.1.push(ratio),
            None => groups.push((x0.to_vec(), vec![ratio])),
        }
    }
    let mut rows: Vec<MomentRow> = groups
        .into_iter()
        .map(|(start, r)| {
            let k = r.len() as f64;
            let mean = r.iter().sum::<f64>() / k;
            let var = r.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1.0).max(1.0);
            MomentRow {
                start,
                particles: r.len(),
                ratio: mean,
                se: (var / k).sqrt(),
            }
        })
        .collect();
    rows.sort_by(|a, b| v.value(&a.start).total_cmp(&v.value(&b.start)));
    let max = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let pass = match rows.split_last() {
        Some((top, rest)) if !rest.is_empty() => {
            let others = rest.iter().map(|r| r.ratio + 3.0 * r.se).fold(0.0, f64::max);
            top.ratio - 3.0 * top.se <= others
        }
        _ => true,
    };
    Ok(MomentBound { rows, max, pass })
}

/// Picard iteration in hypothesis-E mode: one base run realizes every
/// iterate by reweighting, so successive iterates share atoms. The base run
/// is refreshed at the current iterate when N_eff falls below
/// `ess_fraction`·N at any node.
pub(crate) fn picard_reweighted(
    field: &CoefficientField,
    gamma: &SubProbMeasure,
    initial: &ParticleEnsemble,
    config: &PicardConfig,
) -> Result<PicardOutcome> {
    if field.diffusion_depends_on_measure() {
        return invalid("noise has to be distribution independent for reweighting");
    }
    let v = config.v.clone().unwrap_or_else(|| LyapunovV::constant_one(field.dim()));
    let grid = config.grid;
    let opts = SimulationOptions {
        bridge_correction: config.bridge_correction,
        ..SimulationOptions::new(config.dt)
    };
    let clock = Instant::now();
    let mut base_flow = MeasureFlow::constant(grid, gamma);
    let mut prev = base_flow.clone();
    let mut trace: Vec<TraceEntry> = Vec::new();
    let mut theta = config.theta;
    let mut refreshes = 0;
    let n = initial.len() as f64;
    for it in 1..=config.max_iter {
        let mut next = reweight_flow(field, &base_flow, &prev, initial, &opts)?;
        if next.ess.iter().any(|e| *e < config.ess_fraction * n) {
            refreshes += 1;
            base_flow = prev.clone();
            next = reweight_flow(field, &base_flow, &prev, initial, &opts)?;
        }
        let nd = v_node_distances(&next.flow, &prev, &v)?;
        trace.push(TraceEntry {
            iteration: it,
            distance: 0.0,
            wall_time: clock.elapsed().as_secs_f64(),
            node_distances: nd,
            refreshes,
        });
        if config.theta.is_none() {
            theta = choose_theta(&grid, &trace).or(theta);
        }
        let th = theta.unwrap_or(0.0);
        reweight_trace(&grid, &mut trace, th);
        if trace.last().unwrap().distance < config.tol {
            return Ok(PicardOutcome {
                flow: next.flow,
                trace,
                theta: th,
                converged_at: it,
            });
        }
        prev = next.flow;
    }
    Err(Error::NonConvergence {
        iterations: config.max_iter,
        last_distance: trace.last().map(|e| e.distance).unwrap_or(f64::NAN),
        trace: trace.iter().map(|e| e.distance).collect(),
    })
}

/// ESS fraction (ΣR)²/(N·ΣR²) of normalized weights.
pub fn ess_fraction(log_w: &[f64]) -> f64 {
    let w = normalized_weights(log_w);
    1.0 / (w.len() as f64 * w.iter().map(|x| x * x).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{Hypothesis, Kernel, Metadata};
    use crate::geometry::Domain;
    use crate::measures::TimeGrid;
    use std::sync::Arc;

    fn setup() -> (Arc<Domain>, CoefficientField, ParticleEnsemble, TimeGrid) {
        let dom = Arc::new(Domain::interval(0.0, 1.0).unwrap());
        let f = CoefficientField::mean_field(1, 1.0, 0.5, Kernel::Mass, 1.0, Metadata::new(Hypothesis::E, 4.0, 10.0, 0.5)).unwrap();
        let pts: Vec<f64> = (0..4000).map(|i| 0.1 + 0.8 * (i as f64 + 0.5) / 4000.0).collect();
        let e = ParticleEnsemble::from_points(&dom, pts, 17).unwrap();
        (dom, f, e, TimeGrid::new(0.2, 4).unwrap())
    }

    fn mass_flow(dom: &Arc<Domain>, grid: TimeGrid, masses: &[f64]) -> MeasureFlow {
        let snaps = masses
            .iter()
            .map(|&m| SubProbMeasure::from_atoms(dom.clone(), &[(vec![0.5], m)]).unwrap())
            .collect();
        MeasureFlow::new(grid, snaps).unwrap()
    }

    #[test]
    fn identical_flows_give_unit_weights() {
        let (dom, f, e, grid) = setup();
        let fl = MeasureFlow::constant(grid, &e.to_measure(&dom).unwrap());
        let r = reweight_flow(&f, &fl, &fl, &e, &SimulationOptions::new(1e-3)).unwrap();
        assert!(r.log_weights.iter().flatten().all(|l| *l == 0.0));
        for k in 0..grid.nodes() {
            assert_eq!(r.flow.at(k).weights(), r.base.at(k).weights());
        }
    }

    #[test]
    fn constant_tilt_keeps_unit_mean() {
        let (dom, f, e, grid) = setup();
        let a = mass_flow(&dom, grid, &[1.0, 0.9, 0.8, 0.7, 0.6]);
        let b = mass_flow(&dom, grid, &[0.6, 0.5, 0.4, 0.3, 0.2]);
        let r = reweight_flow(&f, &a, &b, &e, &SimulationOptions::new(1e-3)).unwrap();
        assert!(r.martingale_ok(3.0), "{:?} ± {:?}", r.mean_r, r.se_r);
        // A surviving particle's log R is ξ·ΔW summed, ξ = ½Δm with Δm = −0.4.
        assert!(r.ess.iter().all(|x| *x > 0.9 * 4000.0));
    }

    #[test]
    fn weights_stay_one_before_divergence() {
        let (dom, f, e, grid) = setup();
        let a = mass_flow(&dom, grid, &[1.0, 0.9, 0.8, 0.7, 0.6]);
        let b = mass_flow(&dom, grid, &[1.0, 0.9, 0.8, 0.2, 0.1]);
        let r = reweight_flow(&f, &a, &b, &e, &SimulationOptions::new(1e-3)).unwrap();
        for k in 0..=3 {
            assert!(r.log_weights[k].iter().all(|l| *l == 0.0), "node {k}");
        }
        assert!(r.log_weights[4].iter().any(|l| *l != 0.0));
    }

    #[test]
    fn measure_dependent_noise_is_rejected() {
        let (dom, _, e, grid) = setup();
        let f = CoefficientField::from_fn(1, 1, |_, _, _, o| o[0] = 0.0, |_, _, mu, o| o[0] = 1.0 + mu.mass(), true, false, Metadata::new(Hypothesis::E, 1.0, 1.0, 1.0));
        let fl = MeasureFlow::constant(grid, &e.to_measure(&dom).unwrap());
        assert!(matches!(reweight_flow(&f, &fl, &fl, &e, &SimulationOptions::new(1e-3)), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn shared_atom_identity_and_duality_direction() {
        let (dom, f, e, grid) = setup();
        let a = mass_flow(&dom, grid, &[1.0, 0.9, 0.8, 0.7, 0.6]);
        let b = mass_flow(&dom, grid, &[0.6, 0.5, 0.4, 0.3, 0.2]);
        let r = reweight_flow(&f, &a, &b, &e, &SimulationOptions::new(1e-3)).unwrap();
        let v = LyapunovV::constant_one(1);
        let k = grid.intervals();
        let direct = weighted_variation(r.base.at(k), r.flow.at(k), &v).unwrap();
        let lw = &r.log_weights[k];
        let w = normalized_weights(lw);
        let n = e.len() as f64;
        let by_hand: f64 = (0..e.len())
            .filter(|&i| r.base.at(k).is_alive(i))
            .map(|i| (1.0 / n - w[i]).abs())
            .sum();
        assert!((direct - by_hand).abs() < 1e-12);
        // |μ(f) − ν(f)| ≤ ‖μ − ν‖_V for |f| ≤ V, here f = 1_O.
        assert!((r.base.at(k).mass() - r.flow.at(k).mass()).abs() <= direct + 1e-12);
    }

    #[test]
    fn still_particles_have_unit_moment_ratio() {
        let dom = Arc::new(Domain::interval(0.0, 1.0).unwrap());
        let f = CoefficientField::linear(1, 0.0, vec![0.0], 0.0, Metadata::new(Hypothesis::E, 0.0, 1.0, 0.0)).unwrap();
        let e = ParticleEnsemble::from_points(&dom, vec![0.2, 0.2, 0.5, 0.9], 1).unwrap();
        let grid = TimeGrid::new(0.1, 2).unwrap();
        let fl = MeasureFlow::constant(grid, &e.to_measure(&dom).unwrap());
        let m = moment_bound_check(&f, &LyapunovV::quadratic(1), &fl, &e, 2.0, &SimulationOptions::new(1e-2)).unwrap();
        assert!(m.rows.iter().all(|r| r.ratio == 1.0));
        assert_eq!(m.rows.len(), 3);
        assert!(m.pass);
    }

    #[test]
    fn reweighted_picard_converges_on_shared_atoms() {
        let (dom, f, e, grid) = setup();
        let mut cfg = PicardConfig::new(grid, e.len(), 1e-3, crate::picard::MetricKind::WeightedVariation);
        cfg.tol = 1e-6;
        let g = e.to_measure(&dom).unwrap();
        let out = crate::picard::picard_solve_from(&f, &g, &e, &cfg).unwrap();
        assert!(out.converged_at <= 10, "{:?}", out.trace);
        let d: Vec<f64> = out.trace.iter().map(|t| t.distance).collect();
        assert!(d.windows(2).skip(1).all(|w| w[1] <= w[0]), "{d:?}");
    }
}
