//! Distances between O-distributions.
//!
//! Ŵ₁ and W₁ are computed as partial transport with a boundary reservoir on
//! each side: mass of μ may be sent to ∂O at cost 1∧ρ_∂ (resp. ρ_∂), and
//! mass of ν may be drawn from ∂O at the same price. The literal variant
//! (cost integrated over O×O only, plan a probability on Ō×Ō) is available
//! through [`BoundaryConvention::Literal`].

mod line;
mod simplex;
mod sinkhorn;

pub use sinkhorn::SinkhornParams;

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::geometry::DomainKind;
use crate::measures::{LyapunovV, MeasureFlow, SubProbMeasure, TimeGrid};

/// Mass scale used to quantize weights for the exact solver.
const MASS_SCALE: f64 = 1e12;
/// The exact solver is used up to this many atoms per side under `Auto`.
pub const EXACT_ATOM_LIMIT: usize = 2000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GroundCost {
    /// 1∧|x − y|, reservoir 1∧ρ_∂.
    #[default]
    Truncated,
    /// |x − y|, reservoir ρ_∂.
    Untruncated,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BoundaryConvention {
    /// Cost over Ō×Ō with unlimited reservoirs.
    #[default]
    Reservoir,
    /// Cost over O×O only; reservoirs hold 1 − μ(O) and 1 − ν(O) for free.
    Literal,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Method {
    #[default]
    Auto,
    Exact,
    ClosedForm,
    Sinkhorn(SinkhornParams),
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TransportOptions {
    pub cost: GroundCost,
    pub convention: BoundaryConvention,
    pub method: Method,
}

impl TransportOptions {
    pub fn truncated() -> Self {
        Self::default()
    }

    pub fn untruncated() -> Self {
        Self {
            cost: GroundCost::Untruncated,
            ..Self::default()
        }
    }
}

/// Atom index in the source or target measure, or the boundary reservoir.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Endpoint {
    Atom(usize),
    Boundary,
}

#[derive(Clone, Debug)]
pub struct TransportPlan {
    pub pairs: Vec<(Endpoint, Endpoint, f64)>,
    pub cost: f64,
}

impl TransportPlan {
    /// Total mass moved between interior atoms.
    pub fn direct_mass(&self) -> f64 {
        self.pairs
            .iter()
            .filter(|p| matches!((p.0, p.1), (Endpoint::Atom(_), Endpoint::Atom(_))))
            .map(|p| p.2)
            .sum()
    }

    /// Mass sent from μ to ∂O and drawn from ∂O into ν.
    pub fn boundary_mass(&self) -> (f64, f64) {
        let mut out = (0.0, 0.0);
        for p in &self.pairs {
            match (p.0, p.1) {
                (Endpoint::Atom(_), Endpoint::Boundary) => out.0 += p.2,
                (Endpoint::Boundary, Endpoint::Atom(_)) => out.1 += p.2,
                _ => {}
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct SolverStats {
    pub method: &'static str,
    pub iterations: usize,
    /// Primal minus dual bound, for the entropic solver.
    pub duality_gap: Option<f64>,
    pub source_atoms: usize,
    pub target_atoms: usize,
}

#[derive(Clone, Debug)]
pub struct TransportResult {
    pub distance: f64,
    pub plan: Option<TransportPlan>,
    pub stats: SolverStats,
}

/// Interior atoms with positive weight, plus their ground-cost data.
struct Side<'a> {
    mu: &'a SubProbMeasure,
    idx: Vec<usize>,
    w: Vec<f64>,
    rho: Vec<f64>,
}

impl<'a> Side<'a> {
    fn new(mu: &'a SubProbMeasure) -> Result<Self> {
        let mut idx = Vec::new();
        let mut w = Vec::new();
        let mut rho = Vec::new();
        for (i, x, wi) in mu.interior() {
            if wi > 0.0 {
                idx.push(i);
                w.push(wi);
                rho.push(mu.domain().boundary_distance(x)?);
            }
        }
        Ok(Self { mu, idx, w, rho })
    }

    fn loc(&self, k: usize) -> &[f64] {
        self.mu.location(self.idx[k])
    }

    fn mass(&self) -> f64 {
        self.w.iter().sum()
    }
}

struct Problem<'a> {
    s: Side<'a>,
    t: Side<'a>,
    truncated: bool,
    literal: bool,
}

impl Problem<'_> {
    fn clip(&self, c: f64) -> f64 {
        if self.truncated {
            c.min(1.0)
        } else {
            c
        }
    }

    /// Cost on the augmented index set: index n is the reservoir.
    fn cost(&self, i: usize, j: usize) -> f64 {
        let (n1, n2) = (self.s.idx.len(), self.t.idx.len());
        match (i == n1, j == n2) {
            (true, true) => 0.0,
            (false, true) => {
                if self.literal {
                    0.0
                } else {
                    self.clip(self.s.rho[i])
                }
            }
            (true, false) => {
                if self.literal {
                    0.0
                } else {
                    self.clip(self.t.rho[j])
                }
            }
            (false, false) => {
                let d: f64 = self
                    .s
                    .loc(i)
                    .iter()
                    .zip(self.t.loc(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                self.clip(d.sqrt())
            }
        }
    }

    /// Reservoir masses (source side, target side) in real units.
    fn reservoirs(&self) -> (f64, f64) {
        let (a, b) = (self.s.mass(), self.t.mass());
        if self.literal {
            let q = a.max(b).max(1.0);
            (q - a, q - b)
        } else {
            (b, a)
        }
    }
}

enum Line {
    Interval { a: f64, length: f64 },
    HalfLine { normal: f64, offset: f64 },
}

fn line_of(p: &Problem) -> Option<Line> {
    if p.literal {
        return None;
    }
    match p.s.mu.domain().kind() {
        DomainKind::Interval { a, b } if !p.truncated || b - a <= 2.0 => Some(Line::Interval {
            a: *a,
            length: b - a,
        }),
        DomainKind::HalfSpace { normal, offset } if normal.len() == 1 && !p.truncated => Some(Line::HalfLine {
            normal: normal[0],
            offset: *offset,
        }),
        _ => None,
    }
}

fn closed_form(p: &Problem, line: &Line) -> f64 {
    let mut atoms: Vec<(f64, f64)> = Vec::with_capacity(p.s.idx.len() + p.t.idx.len());
    let coord = |x: &[f64]| match line {
        Line::Interval { a, .. } => x[0] - a,
        Line::HalfLine { normal, offset } => normal * x[0] - offset,
    };
    for k in 0..p.s.idx.len() {
        atoms.push((coord(p.s.loc(k)), p.s.w[k]));
    }
    for k in 0..p.t.idx.len() {
        atoms.push((coord(p.t.loc(k)), -p.t.w[k]));
    }
    match line {
        Line::Interval { length, .. } => line::interval(&mut atoms, *length),
        Line::HalfLine { .. } => line::half_line(&mut atoms),
    }
}

fn exact(p: &Problem) -> Result<(f64, TransportPlan, usize)> {
    let (n1, n2) = (p.s.idx.len(), p.t.idx.len());
    let quant = |w: f64| (w * MASS_SCALE).round() as i64;
    let mut supply: Vec<i64> = p.s.w.iter().map(|&w| quant(w)).collect();
    let mut demand: Vec<i64> = p.t.w.iter().map(|&w| quant(w)).collect();
    let (sa, sb): (i64, i64) = (supply.iter().sum(), demand.iter().sum());
    if p.literal {
        let q = quant(1.0).max(sa).max(sb);
        supply.push(q - sa);
        demand.push(q - sb);
    } else {
        supply.push(sb);
        demand.push(sa);
    }
    let (m1, m2) = (n1 + 1, n2 + 1);
    let real: Vec<f64> = (0..m1 * m2).map(|a| p.cost(a / m2, a % m2)).collect();
    let cmax = real.iter().copied().fold(0.0f64, f64::max).max(1.0);
    let scale = MASS_SCALE / cmax;
    let icost: Vec<i64> = real.iter().map(|c| (c * scale).round() as i64).collect();
    let sol = simplex::solve(&supply, &demand, &icost)?;
    let mut pairs = Vec::new();
    let mut cost = 0.0;
    for (a, &f) in sol.flow.iter().enumerate() {
        if f == 0 {
            continue;
        }
        let (i, j) = (a / m2, a % m2);
        let mass = f as f64 / MASS_SCALE;
        cost += mass * real[a];
        let src = if i == n1 { Endpoint::Boundary } else { Endpoint::Atom(p.s.idx[i]) };
        let dst = if j == n2 { Endpoint::Boundary } else { Endpoint::Atom(p.t.idx[j]) };
        if src != Endpoint::Boundary || dst != Endpoint::Boundary {
            pairs.push((src, dst, mass));
        }
    }
    Ok((cost, TransportPlan { pairs, cost }, sol.pivots))
}

fn entropic(p: &Problem, params: &SinkhornParams) -> (f64, f64, usize) {
    let (r1, r2) = p.reservoirs();
    let mut a = p.s.w.clone();
    a.push(r1);
    let mut b = p.t.w.clone();
    b.push(r2);
    // Zero-mass rows and columns are dropped; index maps keep the cost lookup.
    let ia: Vec<usize> = (0..a.len()).filter(|&i| a[i] > 0.0).collect();
    let jb: Vec<usize> = (0..b.len()).filter(|&j| b[j] > 0.0).collect();
    let av: Vec<f64> = ia.iter().map(|&i| a[i]).collect();
    let bv: Vec<f64> = jb.iter().map(|&j| b[j]).collect();
    let out = sinkhorn::solve(&av, &bv, |i, j| p.cost(ia[i], jb[j]), params);
    (out.primal, out.primal - out.dual, out.iterations)
}

/// Distance between two O-distributions with full control over cost,
/// boundary convention and solver.
pub fn transport(mu: &SubProbMeasure, nu: &SubProbMeasure, opts: &TransportOptions) -> Result<TransportResult> {
    if !mu.domain().same_as(nu.domain()) {
        return invalid("measures live on different domains");
    }
    let p = Problem {
        s: Side::new(mu)?,
        t: Side::new(nu)?,
        truncated: opts.cost == GroundCost::Truncated,
        literal: opts.convention == BoundaryConvention::Literal,
    };
    let mut stats = SolverStats {
        method: "",
        iterations: 0,
        duality_gap: None,
        source_atoms: p.s.idx.len(),
        target_atoms: p.t.idx.len(),
    };
    let line = line_of(&p);
    let method = match opts.method {
        Method::Auto => {
            if line.is_some() {
                Method::ClosedForm
            } else if p.s.idx.len().max(p.t.idx.len()) <= EXACT_ATOM_LIMIT {
                Method::Exact
            } else {
                Method::Sinkhorn(SinkhornParams::default())
            }
        }
        m => m,
    };
    match method {
        Method::ClosedForm => {
            let Some(line) = line else {
                return invalid("no closed form for this domain, cost and convention");
            };
            stats.method = "closed_form_1d";
            Ok(TransportResult {
                distance: closed_form(&p, &line),
                plan: None,
                stats,
            })
        }
        Method::Exact | Method::Auto => {
            let (d, plan, pivots) = exact(&p)?;
            stats.method = "network_simplex";
            stats.iterations = pivots;
            Ok(TransportResult {
                distance: d,
                plan: Some(plan),
                stats,
            })
        }
        Method::Sinkhorn(params) => {
            let (d, gap, it) = entropic(&p, &params);
            stats.method = "sinkhorn";
            stats.iterations = it;
            stats.duality_gap = Some(gap);
            Ok(TransportResult {
                distance: d,
                plan: None,
                stats,
            })
        }
    }
}

/// Ŵ₁(μ, ν).
pub fn w1_hat(mu: &SubProbMeasure, nu: &SubProbMeasure) -> Result<f64> {
    Ok(transport(mu, nu, &TransportOptions::truncated())?.distance)
}

/// W₁(μ, ν).
pub fn w1(mu: &SubProbMeasure, nu: &SubProbMeasure) -> Result<f64> {
    Ok(transport(mu, nu, &TransportOptions::untruncated())?.distance)
}

/// Cubic bins of side `width` anchored at `origin`.
#[derive(Clone, Debug)]
pub struct Binning {
    pub origin: Vec<f64>,
    pub width: f64,
}

/// ‖μ − ν‖_V on shared atoms: Σ V(x)|w_μ(x) − w_ν(x)| over interior atoms.
pub fn weighted_variation(mu: &SubProbMeasure, nu: &SubProbMeasure, v: &LyapunovV) -> Result<f64> {
    if !mu.domain().same_as(nu.domain()) {
        return invalid("measures live on different domains");
    }
    if !mu.shares_atoms_with(nu) {
        return invalid("weighted variation needs shared atoms or a binning");
    }
    let eff = |m: &SubProbMeasure, i: usize| if m.is_alive(i) { m.weight(i) } else { 0.0 };
    let mut acc = 0.0;
    for i in 0..mu.len() {
        let dw = (eff(mu, i) - eff(nu, i)).abs();
        if dw > 0.0 {
            acc += v.weight(mu.location(i)) * dw;
        }
    }
    Ok(acc)
}

/// ‖μ − ν‖_V after binning both measures; V is evaluated at bin centres.
pub fn weighted_variation_binned(
    mu: &SubProbMeasure,
    nu: &SubProbMeasure,
    v: &LyapunovV,
    bins: &Binning,
) -> Result<f64> {
    if !mu.domain().same_as(nu.domain()) {
        return invalid("measures live on different domains");
    }
    if bins.origin.len() != mu.dim() || !(bins.width > 0.0) {
        return invalid("binning does not match the domain");
    }
    let mut cells: BTreeMap<Vec<i64>, (f64, f64)> = BTreeMap::new();
    let key = |x: &[f64]| -> Vec<i64> {
        x.iter()
            .zip(&bins.origin)
            .map(|(xi, o)| ((xi - o) / bins.width).floor() as i64)
            .collect()
    };
    for (_, x, w) in mu.interior() {
        cells.entry(key(x)).or_default().0 += w;
    }
    for (_, x, w) in nu.interior() {
        cells.entry(key(x)).or_default().1 += w;
    }
    let mut acc = 0.0;
    for (k, (a, b)) in &cells {
        let centre: Vec<f64> = k
            .iter()
            .zip(&bins.origin)
            .map(|(&ki, o)| o + (ki as f64 + 0.5) * bins.width)
            .collect();
        acc += v.weight(&centre) * (a - b).abs();
    }
    Ok(acc)
}

/// Base distance used inside flow metrics.
#[derive(Clone, Debug)]
pub enum FlowDistance {
    W1Hat,
    W1,
    WeightedVariation(LyapunovV),
}

impl FlowDistance {
    pub fn eval(&self, mu: &SubProbMeasure, nu: &SubProbMeasure) -> Result<f64> {
        match self {
            FlowDistance::W1Hat => w1_hat(mu, nu),
            FlowDistance::W1 => w1(mu, nu),
            FlowDistance::WeightedVariation(v) => weighted_variation(mu, nu, v),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FlowDistance::W1Hat => "w1_hat",
            FlowDistance::W1 => "w1",
            FlowDistance::WeightedVariation(_) => "weighted_variation",
        }
    }
}

/// Base distance at every grid node.
pub fn node_distances(f1: &MeasureFlow, f2: &MeasureFlow, base: &FlowDistance) -> Result<Vec<f64>> {
    if f1.grid() != f2.grid() {
        return invalid("flows live on different time grids");
    }
    (0..f1.grid().nodes())
        .into_par_iter()
        .map(|k| base.eval(f1.at(k), f2.at(k)))
        .collect()
}

/// sup_k e^{−θ t_k} d_k.
pub fn weighted_sup(grid: &TimeGrid, d: &[f64], theta: f64) -> f64 {
    d.iter()
        .enumerate()
        .map(|(k, v)| (-theta * grid.time(k)).exp() * v)
        .fold(0.0, f64::max)
}

/// sup over grid nodes of e^{−θ t_k}·base(f1[k], f2[k]).
pub fn flow_metric(f1: &MeasureFlow, f2: &MeasureFlow, base: &FlowDistance, theta: f64) -> Result<f64> {
    if !(theta >= 0.0) {
        return Err(Error::InvalidArgument("θ must be non-negative".into()));
    }
    let d = node_distances(f1, f2, base)?;
    Ok(weighted_sup(f1.grid(), &d, theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;
    use std::sync::Arc;

    fn unit() -> Arc<Domain> {
        Arc::new(Domain::interval(0.0, 1.0).unwrap())
    }

    fn atoms(d: &Arc<Domain>, a: &[(f64, f64)]) -> SubProbMeasure {
        let v: Vec<(Vec<f64>, f64)> = a.iter().map(|&(x, w)| (vec![x], w)).collect();
        SubProbMeasure::from_atoms(d.clone(), &v).unwrap()
    }

    fn both_methods(mu: &SubProbMeasure, nu: &SubProbMeasure, cost: GroundCost) -> (f64, f64) {
        let e = transport(
            mu,
            nu,
            &TransportOptions {
                cost,
                method: Method::Exact,
                ..Default::default()
            },
        )
        .unwrap()
        .distance;
        let c = transport(
            mu,
            nu,
            &TransportOptions {
                cost,
                method: Method::ClosedForm,
                ..Default::default()
            },
        )
        .unwrap()
        .distance;
        (e, c)
    }

    #[test]
    fn spec_examples() {
        let d = unit();
        let m = atoms(&d, &[(0.3, 0.5), (0.6, 0.5)]);
        assert!(w1_hat(&m, &m).unwrap().abs() < 1e-12);
        let (e, c) = both_methods(&atoms(&d, &[(0.2, 1.0)]), &atoms(&d, &[(0.5, 1.0)]), GroundCost::Truncated);
        assert!((e - 0.3).abs() < 1e-10 && (c - 0.3).abs() < 1e-12);
        let z = SubProbMeasure::zero(d.clone());
        let (e, c) = both_methods(&atoms(&d, &[(0.1, 0.5)]), &z, GroundCost::Truncated);
        assert!((e - 0.05).abs() < 1e-10 && (c - 0.05).abs() < 1e-12);
        let (e, c) = both_methods(&atoms(&d, &[(0.2, 1.0)]), &atoms(&d, &[(0.9, 1.0)]), GroundCost::Untruncated);
        assert!((e - 0.3).abs() < 1e-10 && (c - 0.3).abs() < 1e-12);
        let (e, c) = both_methods(&atoms(&d, &[(0.5, 0.5)]), &z, GroundCost::Untruncated);
        assert!((e - 0.25).abs() < 1e-10 && (c - 0.25).abs() < 1e-12);
    }

    #[test]
    fn plan_is_feasible_and_costed() {
        let d = unit();
        let mu = atoms(&d, &[(0.1, 0.3), (0.45, 0.2), (0.8, 0.4)]);
        let nu = atoms(&d, &[(0.3, 0.5), (0.95, 0.1)]);
        let r = transport(
            &mu,
            &nu,
            &TransportOptions {
                method: Method::Exact,
                ..Default::default()
            },
        )
        .unwrap();
        let plan = r.plan.unwrap();
        for i in 0..mu.len() {
            let out: f64 = plan
                .pairs
                .iter()
                .filter(|p| p.0 == Endpoint::Atom(i))
                .map(|p| p.2)
                .sum();
            assert!((out - mu.weight(i)).abs() < 1e-9);
        }
        for j in 0..nu.len() {
            let inflow: f64 = plan
                .pairs
                .iter()
                .filter(|p| p.1 == Endpoint::Atom(j))
                .map(|p| p.2)
                .sum();
            assert!((inflow - nu.weight(j)).abs() < 1e-9);
        }
        let recomputed: f64 = plan
            .pairs
            .iter()
            .map(|&(s, t, m)| {
                let c = match (s, t) {
                    (Endpoint::Atom(i), Endpoint::Atom(j)) => (mu.location(i)[0] - nu.location(j)[0]).abs(),
                    (Endpoint::Atom(i), Endpoint::Boundary) => d.boundary_distance(mu.location(i)).unwrap(),
                    (Endpoint::Boundary, Endpoint::Atom(j)) => d.boundary_distance(nu.location(j)).unwrap(),
                    _ => 0.0,
                };
                m * c.min(1.0)
            })
            .sum();
        assert!((recomputed - plan.cost).abs() <= 1e-9 * plan.cost.max(1.0));
    }

    #[test]
    fn literal_variant_makes_deficit_free() {
        let d = unit();
        let z = SubProbMeasure::zero(d.clone());
        let r = transport(
            &atoms(&d, &[(0.5, 0.5)]),
            &z,
            &TransportOptions {
                convention: BoundaryConvention::Literal,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(r.distance.abs() < 1e-12);
        let r = transport(
            &atoms(&d, &[(0.2, 1.0)]),
            &atoms(&d, &[(0.9, 1.0)]),
            &TransportOptions {
                cost: GroundCost::Untruncated,
                convention: BoundaryConvention::Literal,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((r.distance - 0.7).abs() < 1e-10);
    }

    #[test]
    fn ball_domain_uses_exact_solver() {
        let d = Arc::new(Domain::ball(vec![0.0, 0.0], 1.0).unwrap());
        let mu = SubProbMeasure::from_atoms(d.clone(), &[(vec![0.5, 0.0], 1.0)]).unwrap();
        let nu = SubProbMeasure::from_atoms(d.clone(), &[(vec![0.0, 0.5], 1.0)]).unwrap();
        let r = transport(&mu, &nu, &TransportOptions::truncated()).unwrap();
        assert_eq!(r.stats.method, "network_simplex");
        // direct √0.5 ≈ 0.707 beats 0.5 + 0.5 through the boundary.
        assert!((r.distance - 0.5f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn sinkhorn_brackets_exact() {
        let d = unit();
        let mu = atoms(&d, &[(0.1, 0.3), (0.45, 0.2), (0.8, 0.4)]);
        let nu = atoms(&d, &[(0.3, 0.5), (0.95, 0.1)]);
        let exact = w1_hat(&mu, &nu).unwrap();
        let r = transport(
            &mu,
            &nu,
            &TransportOptions {
                method: Method::Sinkhorn(SinkhornParams::default()),
                ..Default::default()
            },
        )
        .unwrap();
        let gap = r.stats.duality_gap.unwrap();
        assert!(r.distance >= exact - 1e-9 && r.distance - gap <= exact + 1e-9);
        assert!(gap < 1e-2);
    }

    #[test]
    fn weighted_variation_examples() {
        let d = unit();
        let v = LyapunovV::quadratic(1);
        let a = atoms(&d, &[(0.5, 0.7)]);
        let b = atoms(&d, &[(0.5, 0.4)]);
        assert!((weighted_variation(&a, &b, &v).unwrap() - 0.375).abs() < 1e-15);
        assert_eq!(weighted_variation(&a, &a, &v).unwrap(), 0.0);
        let c = atoms(&d, &[(0.2, 1.0)]);
        let e = atoms(&d, &[(0.8, 1.0)]);
        assert!(weighted_variation(&c, &e, &v).is_err());
        let bins = Binning {
            origin: vec![0.0],
            width: 0.1,
        };
        let one = LyapunovV::constant_one(1);
        assert!((weighted_variation_binned(&c, &e, &one, &bins).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn flow_metric_examples() {
        let d = unit();
        let a = atoms(&d, &[(0.2, 1.0)]);
        let b = atoms(&d, &[(0.5, 1.0)]);
        let single = TimeGrid::single_node();
        let f1 = MeasureFlow::new(single, vec![a.clone()]).unwrap();
        let f2 = MeasureFlow::new(single, vec![b.clone()]).unwrap();
        assert!((flow_metric(&f1, &f2, &FlowDistance::W1Hat, 7.0).unwrap() - 0.3).abs() < 1e-12);
        let g = TimeGrid::new(1.0, 2).unwrap();
        let f1 = MeasureFlow::new(g, vec![a.clone(), a.clone(), a.clone()]).unwrap();
        let f2 = MeasureFlow::new(g, vec![a.clone(), a.clone(), b.clone()]).unwrap();
        assert_eq!(flow_metric(&f1, &f1, &FlowDistance::W1Hat, 0.0).unwrap(), 0.0);
        assert!((flow_metric(&f1, &f2, &FlowDistance::W1Hat, 0.0).unwrap() - 0.3).abs() < 1e-12);
        assert!((flow_metric(&f1, &f2, &FlowDistance::W1Hat, 1.0).unwrap() - 0.3 * (-1.0f64).exp()).abs() < 1e-12);
        let f3 = MeasureFlow::new(single, vec![a]).unwrap();
        assert!(flow_metric(&f1, &f3, &FlowDistance::W1Hat, 0.0).is_err());
    }
}
