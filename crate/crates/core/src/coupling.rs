//! The coupling by projection of two synchronously driven killed ensembles,
//! and the quantities of the Ŵ₁ stability estimates built on it.

use std::sync::Arc;

use rayon::prelude::*;

use crate::coefficients::CoefficientField;
use crate::error::{invalid, Result};
use crate::geometry::Domain;
use crate::killed_sde::{align_time, simulate_flow, step_frozen, ParticleEnsemble, Semantics, SimulationOptions};
use crate::measures::{MeasureFlow, SubProbMeasure, TimeGrid};
use crate::transport::w1_hat;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    BothAlive,
    /// τ₂ ≤ t and τ₂ < τ₁: (X¹, P_∂X¹).
    SecondDead,
    /// Everything else, including ties τ₁ = τ₂: (P_∂X², X²).
    FirstDead,
}

/// Regime at time t given exit times. The instant t = τ₁,₂ already counts as
/// killed, so a particle started on ∂O is paired by projection from t = 0.
pub fn regime(t: f64, tau1: f64, tau2: f64) -> Regime {
    if t < tau1.min(tau2) {
        Regime::BothAlive
    } else if tau2 <= t && tau2 < tau1 {
        Regime::SecondDead
    } else {
        Regime::FirstDead
    }
}

/// Paired states at one grid node.
#[derive(Clone, Debug)]
pub struct CoupledNode {
    pub t: f64,
    /// X¹_t and X²_t as simulated.
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    /// The projected pair (X̄¹_t, X̄²_t).
    pub bar1: Vec<f64>,
    pub bar2: Vec<f64>,
    pub regime: Vec<Regime>,
}

#[derive(Clone, Debug)]
pub struct ProjectionCoupling {
    pub domain: Arc<Domain>,
    pub grid: TimeGrid,
    pub dim: usize,
    pub nodes: Vec<CoupledNode>,
    pub tau1: Vec<f64>,
    pub tau2: Vec<f64>,
    /// (X¹, X²) frozen at τ₁,₂ = τ₁∧τ₂ (end-of-step positions), for the
    /// stopped-pair estimates.
    pub stopped1: Vec<f64>,
    pub stopped2: Vec<f64>,
    /// Φμ¹ and Φμ² as empirical flows of the two ensembles.
    pub image1: MeasureFlow,
    pub image2: MeasureFlow,
}

impl ProjectionCoupling {
    pub fn len(&self) -> usize {
        self.tau1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau1.is_empty()
    }

    /// L^O of X̄ⁱ at node k (weight 1/N per particle).
    pub fn marginal(&self, k: usize, which: usize) -> Result<SubProbMeasure> {
        let node = &self.nodes[k];
        let pts = if which == 1 { &node.bar1 } else { &node.bar2 };
        let alive: Vec<bool> = vec![true; self.len()];
        SubProbMeasure::restrict_to_o(self.domain.clone(), pts, &alive)
    }
}

/// Simulate both ensembles in lock-step under their flows with the same
/// Brownian increments and assemble the projection pairing at every node.
pub fn build_projection_coupling(
    field: &CoefficientField,
    flow1: &MeasureFlow,
    flow2: &MeasureFlow,
    initials: (&ParticleEnsemble, &ParticleEnsemble),
    opts: &SimulationOptions,
) -> Result<ProjectionCoupling> {
    build_projection_coupling_with(field, field, flow1, flow2, initials, opts)
}

/// As [`build_projection_coupling`] with separate coefficients per side.
pub fn build_projection_coupling_with(
    field1: &CoefficientField,
    field2: &CoefficientField,
    flow1: &MeasureFlow,
    flow2: &MeasureFlow,
    initials: (&ParticleEnsemble, &ParticleEnsemble),
    opts: &SimulationOptions,
) -> Result<ProjectionCoupling> {
    let (e1, e2) = initials;
    if e1.seed() != e2.seed() || e1.ids() != e2.ids() {
        return invalid("coupled ensembles must share the seed and particle ids");
    }
    if flow1.grid() != flow2.grid() || !flow1.domain().same_as(flow2.domain()) {
        return invalid("flows live on different grids or domains");
    }
    if opts.semantics != Semantics::FreezeAtExit {
        return invalid("the projection coupling is defined for killed solutions");
    }
    let grid = *flow1.grid();
    let domain = flow1.domain().clone();
    let d = domain.dim();
    let n = e1.len();
    let sub = if grid.intervals() == 0 { 0 } else { grid.substeps(opts.dt)? };
    let (mut a, mut b) = (e1.clone(), e2.clone());
    let mut stopped1 = vec![0.0; n * d];
    let mut stopped2 = vec![0.0; n * d];
    let mut stopped = vec![false; n];
    let mut raw: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(grid.nodes());
    let mut snaps1 = Vec::with_capacity(grid.nodes());
    let mut snaps2 = Vec::with_capacity(grid.nodes());
    let mark = |a: &ParticleEnsemble, b: &ParticleEnsemble, s1: &mut [f64], s2: &mut [f64], st: &mut [bool]| {
        for i in 0..n {
            if !st[i] && !(a.alive_flags()[i] && b.alive_flags()[i]) {
                st[i] = true;
                s1[i * d..(i + 1) * d].copy_from_slice(a.position(i));
                s2[i * d..(i + 1) * d].copy_from_slice(b.position(i));
            }
        }
    };
    mark(&a, &b, &mut stopped1, &mut stopped2, &mut stopped);
    raw.push((a.positions().to_vec(), b.positions().to_vec()));
    snaps1.push(a.to_measure(&domain)?);
    snaps2.push(b.to_measure(&domain)?);
    for k in 0..grid.intervals() {
        let f1 = field1.freeze(flow1.at(k))?;
        let f2 = field2.freeze(flow2.at(k))?;
        for _ in 0..sub {
            step_frozen(&mut a, f1.as_ref(), &domain, field1.noise_dim(), opts.dt, opts.semantics, opts.bridge_correction)?;
            step_frozen(&mut b, f2.as_ref(), &domain, field2.noise_dim(), opts.dt, opts.semantics, opts.bridge_correction)?;
            mark(&a, &b, &mut stopped1, &mut stopped2, &mut stopped);
        }
        align_time(&mut a, grid.time(k + 1));
        align_time(&mut b, grid.time(k + 1));
        raw.push((a.positions().to_vec(), b.positions().to_vec()));
        snaps1.push(a.to_measure(&domain)?);
        snaps2.push(b.to_measure(&domain)?);
    }
    // Pairs alive at T are stopped at T.
    for i in 0..n {
        if !stopped[i] {
            stopped1[i * d..(i + 1) * d].copy_from_slice(a.position(i));
            stopped2[i * d..(i + 1) * d].copy_from_slice(b.position(i));
        }
    }
    let tau1 = a.exit_times().to_vec();
    let tau2 = b.exit_times().to_vec();
    let nodes = raw
        .into_iter()
        .enumerate()
        .map(|(k, (x1, x2))| pair_node(&domain, grid.time(k), x1, x2, &tau1, &tau2))
        .collect::<Result<_>>()?;
    Ok(ProjectionCoupling {
        domain,
        grid,
        dim: d,
        nodes,
        tau1,
        tau2,
        stopped1,
        stopped2,
        image1: MeasureFlow::new(grid, snaps1)?,
        image2: MeasureFlow::new(grid, snaps2)?,
    })
}

fn pair_node(domain: &Domain, t: f64, x1: Vec<f64>, x2: Vec<f64>, tau1: &[f64], tau2: &[f64]) -> Result<CoupledNode> {
    let d = domain.dim();
    let n = tau1.len();
    let rows: Vec<(Regime, Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = &x1[i * d..(i + 1) * d];
            let q = &x2[i * d..(i + 1) * d];
            let r = regime(t, tau1[i], tau2[i]);
            Ok(match r {
                Regime::BothAlive => (r, p.to_vec(), q.to_vec()),
                Regime::SecondDead => (r, p.to_vec(), domain.project_to_boundary(p)?),
                Regime::FirstDead => (r, domain.project_to_boundary(q)?, q.to_vec()),
            })
        })
        .collect::<Result<_>>()?;
    let mut bar1 = Vec::with_capacity(n * d);
    let mut bar2 = Vec::with_capacity(n * d);
    let mut regime_v = Vec::with_capacity(n);
    for (r, p, q) in rows {
        regime_v.push(r);
        bar1.extend(p);
        bar2.extend(q);
    }
    Ok(CoupledNode {
        t,
        x1,
        x2,
        bar1,
        bar2,
        regime: regime_v,
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if n == 0.0 {
        return (0.0, 0.0);
    }
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (var / n).sqrt())
}

/// Right-hand side terms of the projection bound at one node.
#[derive(Clone, Debug, PartialEq)]
pub struct PwTerms {
    pub t: f64,
    /// Ŵ₁(Φμ¹_t, Φμ²_t) from the two empirical flows.
    pub lhs: f64,
    /// E[1∧|X¹_t − X²_t|; t < τ₁,₂].
    pub direct: f64,
    /// E[(r₀∧ρ_∂(X²_t))·1{t∧τ₂ ≥ τ₁}].
    pub killed1: f64,
    /// E[(r₀∧ρ_∂(X¹_t))·1{t∧τ₁ ≥ τ₂}].
    pub killed2: f64,
    pub r0: f64,
    /// Standard error of direct + (killed₁ + killed₂)/r₀.
    pub se: f64,
}

impl PwTerms {
    pub fn bound(&self) -> f64 {
        self.direct + (self.killed1 + self.killed2) / self.r0
    }

    /// lhs ≤ bound + kσ.
    pub fn holds(&self, k: f64) -> bool {
        self.lhs <= self.bound() + k * self.se + 1e-12
    }
}

pub fn pw_bound_terms(c: &ProjectionCoupling, k: usize) -> Result<PwTerms> {
    if k >= c.nodes.len() {
        return invalid(format!("node {k} outside the grid"));
    }
    let node = &c.nodes[k];
    let t = node.t;
    let d = c.dim;
    let r0 = c.domain.r0();
    let n = c.len();
    let mut direct = Vec::with_capacity(n);
    let mut k1 = Vec::with_capacity(n);
    let mut k2 = Vec::with_capacity(n);
    let mut total = Vec::with_capacity(n);
    for i in 0..n {
        let p = &node.x1[i * d..(i + 1) * d];
        let q = &node.x2[i * d..(i + 1) * d];
        let (t1, t2) = (c.tau1[i], c.tau2[i]);
        let dd = if t < t1.min(t2) { dist(p, q).min(1.0) } else { 0.0 };
        let a = if t.min(t2) >= t1 { c.domain.boundary_distance(q)?.min(r0) } else { 0.0 };
        let b = if t.min(t1) >= t2 { c.domain.boundary_distance(p)?.min(r0) } else { 0.0 };
        direct.push(dd);
        k1.push(a);
        k2.push(b);
        total.push(dd + (a + b) / r0);
    }
    let lhs = w1_hat(c.image1.at(k), c.image2.at(k))?;
    Ok(PwTerms {
        t,
        lhs,
        direct: mean_se(&direct).0,
        killed1: mean_se(&k1).0,
        killed2: mean_se(&k2).0,
        r0,
        se: mean_se(&total).1,
    })
}

/// Terms of the stopped-pair estimate at one node:
/// lhs = E[1∧|X¹ − X²|_{t∧τ₁,₂}], initial = E[1∧|X¹₀ − X²₀|],
/// integral = ∫₀ᵗ K(s) Ŵ₁(μ¹_s, μ²_s)² ds (trapezoid on the grid).
#[derive(Clone, Debug, PartialEq)]
pub struct C2Row {
    pub t: f64,
    pub lhs: f64,
    pub se: f64,
    pub initial: f64,
    pub integral: f64,
}

impl C2Row {
    /// Smallest c ≥ 1 with lhs ≤ √c·initial + (c·integral)^{1/2}.
    pub fn implied_constant(&self) -> f64 {
        let s = self.initial + self.integral.sqrt();
        if s <= 0.0 {
            return if self.lhs > 0.0 { f64::INFINITY } else { 1.0 };
        }
        (self.lhs / s).powi(2).max(1.0)
    }

    pub fn holds(&self, c: f64, k: f64) -> bool {
        self.lhs - k * self.se <= c.sqrt() * self.initial + (c * self.integral).sqrt() + 1e-12
    }
}

pub fn c2_terms(c: &ProjectionCoupling, flow1: &MeasureFlow, flow2: &MeasureFlow, k_fn: &dyn Fn(f64) -> f64) -> Result<Vec<C2Row>> {
    let d = c.dim;
    let n = c.len();
    let grid = c.grid;
    let w: Vec<f64> = (0..grid.nodes())
        .map(|k| w1_hat(flow1.at(k), flow2.at(k)))
        .collect::<Result<_>>()?;
    let x0 = &c.nodes[0];
    let initial = mean_se(
        &(0..n)
            .map(|i| dist(&x0.x1[i * d..(i + 1) * d], &x0.x2[i * d..(i + 1) * d]).min(1.0))
            .collect::<Vec<_>>(),
    )
    .0;
    let mut integral = 0.0;
    let mut rows = Vec::with_capacity(grid.nodes());
    for (k, node) in c.nodes.iter().enumerate() {
        let t = node.t;
        if k > 0 {
            let (a, b) = (grid.time(k - 1), t);
            integral += 0.5 * (k_fn(a) * w[k - 1].powi(2) + k_fn(b) * w[k].powi(2)) * (b - a);
        }
        let vals: Vec<f64> = (0..n)
            .map(|i| {
                let tau = c.tau1[i].min(c.tau2[i]);
                let (p, q) = if t < tau {
                    (&node.x1[i * d..(i + 1) * d], &node.x2[i * d..(i + 1) * d])
                } else {
                    (&c.stopped1[i * d..(i + 1) * d], &c.stopped2[i * d..(i + 1) * d])
                };
                dist(p, q).min(1.0)
            })
            .collect();
        let (lhs, se) = mean_se(&vals);
        rows.push(C2Row {
            t,
            lhs,
            se,
            initial,
            integral,
        });
    }
    Ok(rows)
}

/// Monte Carlo estimate of E[r₀∧ρ_∂(X_t)] from a single start.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryDecay {
    pub start: Vec<f64>,
    pub rho: f64,
    pub lhs: f64,
    pub se: f64,
}

impl BoundaryDecay {
    pub fn ratio(&self) -> f64 {
        if self.rho > 0.0 {
            self.lhs / self.rho
        } else {
            0.0
        }
    }

    pub fn rhs(&self, c: f64) -> f64 {
        c * self.rho
    }

    /// lhs ≤ c·ρ_∂(x) + kσ.
    pub fn holds(&self, c: f64, k: f64) -> bool {
        self.lhs <= self.rhs(c) + k * self.se + 1e-12
    }
}

/// `trials` particles from x, simulated to time t with the measure
/// argument frozen at their own empirical law on a grid of `intervals`.
#[allow(clippy::too_many_arguments)]
pub fn boundary_decay_check(
    field: &CoefficientField,
    domain: &Arc<Domain>,
    x: &[f64],
    t: f64,
    trials: usize,
    seed: u64,
    opts: &SimulationOptions,
) -> Result<BoundaryDecay> {
    let rho = domain.boundary_distance(x)?;
    let e = ParticleEnsemble::from_points(domain, x.repeat(trials), seed)?;
    if rho == 0.0 {
        return Ok(BoundaryDecay {
            start: x.to_vec(),
            rho,
            lhs: 0.0,
            se: 0.0,
        });
    }
    let grid = TimeGrid::new(t, 1)?;
    let flow = MeasureFlow::constant(grid, &e.to_measure(domain)?);
    let out = simulate_flow(field, &flow, &e, opts)?;
    let r0 = domain.r0();
    let vals: Vec<f64> = (0..trials)
        .map(|i| domain.boundary_distance(out.ensemble.position(i)).map(|r| r.min(r0)))
        .collect::<Result<_>>()?;
    let (lhs, se) = mean_se(&vals);
    Ok(BoundaryDecay {
        start: x.to_vec(),
        rho,
        lhs,
        se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{Hypothesis, Kernel, Metadata};

    fn model() -> CoefficientField {
        CoefficientField::mean_field(1, 1.0, 0.25, Kernel::TruncatedDistance, 1.0, Metadata::new(Hypothesis::A, 1.0, 1.0, 0.0)).unwrap()
    }

    fn dom() -> Arc<Domain> {
        Arc::new(Domain::interval(-1.0, 1.0).unwrap().with_r0(0.25).unwrap())
    }

    fn ensemble(d: &Arc<Domain>, lo: f64, n: usize, seed: u64) -> ParticleEnsemble {
        let pts: Vec<f64> = (0..n).map(|i| lo + (i as f64 + 0.5) / n as f64).collect();
        ParticleEnsemble::from_points(d, pts, seed).unwrap()
    }

    #[test]
    fn regime_rules() {
        assert_eq!(regime(0.5, 1.0, 2.0), Regime::BothAlive);
        assert_eq!(regime(0.0, 1.0, 0.0), Regime::SecondDead);
        assert_eq!(regime(0.0, 0.0, 0.0), Regime::FirstDead);
        assert_eq!(regime(0.7, 0.3, 0.3), Regime::FirstDead);
        assert_eq!(regime(0.7, 0.5, 0.3), Regime::SecondDead);
        assert_eq!(regime(0.7, 0.3, 0.5), Regime::FirstDead);
        assert_eq!(regime(0.7, f64::INFINITY, 0.5), Regime::SecondDead);
    }

    #[test]
    fn identical_inputs_give_zero_terms() {
        let d = dom();
        let e = ensemble(&d, -0.5, 500, 3);
        let grid = TimeGrid::new(0.3, 3).unwrap();
        let fl = MeasureFlow::constant(grid, &e.to_measure(&d).unwrap());
        let c = build_projection_coupling(&model(), &fl, &fl, (&e, &e), &SimulationOptions::new(1e-3)).unwrap();
        for k in 0..grid.nodes() {
            assert_eq!(c.nodes[k].bar1, c.nodes[k].bar2);
            let p = pw_bound_terms(&c, k).unwrap();
            assert_eq!((p.direct, p.killed1, p.killed2, p.lhs), (0.0, 0.0, 0.0, 0.0));
        }
        for i in 0..e.len() {
            let r = c.nodes[grid.intervals()].regime[i];
            if c.tau1[i].is_finite() {
                assert_eq!(r, Regime::FirstDead);
            } else {
                assert_eq!(r, Regime::BothAlive);
            }
        }
    }

    #[test]
    fn boundary_starts_pair_by_projection() {
        let d = dom();
        let e1 = ParticleEnsemble::from_points(&d, vec![0.9, -1.0], 1).unwrap();
        let e2 = ParticleEnsemble::from_points(&d, vec![-1.0, -1.0], 1).unwrap();
        let grid = TimeGrid::new(0.1, 1).unwrap();
        let fl = MeasureFlow::constant(grid, &e1.to_measure(&d).unwrap());
        let c = build_projection_coupling(&model(), &fl, &fl, (&e1, &e2), &SimulationOptions::new(1e-3)).unwrap();
        let n0 = &c.nodes[0];
        assert_eq!(n0.regime, vec![Regime::SecondDead, Regime::FirstDead]);
        assert_eq!(n0.bar2[0], 1.0);
        assert_eq!(n0.bar1[1], -1.0);
    }

    #[test]
    fn marginals_match_and_bound_holds() {
        let d = dom();
        let f = model();
        let e1 = ensemble(&d, -0.5, 3000, 8);
        let e2 = ensemble(&d, -0.4, 3000, 8);
        let grid = TimeGrid::new(0.5, 5).unwrap();
        let fl1 = MeasureFlow::constant(grid, &e1.to_measure(&d).unwrap());
        let fl2 = MeasureFlow::constant(grid, &e2.to_measure(&d).unwrap());
        let c = build_projection_coupling(&f, &fl1, &fl2, (&e1, &e2), &SimulationOptions::new(1e-3)).unwrap();
        for k in 0..grid.nodes() {
            let m = c.marginal(k, 1).unwrap();
            let img = c.image1.at(k);
            assert_eq!(m.alive_flags(), img.alive_flags());
            for (i, x, _) in img.interior() {
                assert_eq!(m.location(i), x);
            }
            let p = pw_bound_terms(&c, k).unwrap();
            assert!(p.lhs <= p.bound() + 1e-12, "{p:?}");
        }
        let rows = c2_terms(&c, &fl1, &fl2, &|_| 1.0).unwrap();
        assert!(rows.iter().all(|r| r.implied_constant().is_finite()));
    }

    #[test]
    fn decay_is_zero_on_boundary() {
        let d = Arc::new(Domain::interval(0.0, 1.0).unwrap());
        let f = CoefficientField::linear(1, 0.0, vec![0.0], 1.0, Metadata::new(Hypothesis::A, 0.0, 1.0, 0.0)).unwrap();
        let b = boundary_decay_check(&f, &d, &[0.0], 0.05, 100, 1, &SimulationOptions::new(1e-3)).unwrap();
        assert_eq!((b.lhs, b.rhs(3.0)), (0.0, 0.0));
    }

    #[test]
    fn seed_mismatch_is_rejected() {
        let d = dom();
        let e1 = ensemble(&d, -0.5, 10, 1);
        let e2 = ensemble(&d, -0.5, 10, 2);
        let grid = TimeGrid::new(0.1, 1).unwrap();
        let fl = MeasureFlow::constant(grid, &e1.to_measure(&d).unwrap());
        assert!(build_projection_coupling(&model(), &fl, &fl, (&e1, &e2), &SimulationOptions::new(1e-3)).is_err());
    }
}
