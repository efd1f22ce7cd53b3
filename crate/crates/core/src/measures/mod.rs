//! Sub-probability measures on Ō as weighted atom clouds, measure flows on a
//! uniform time grid, Lyapunov weights and the localized space-time norm.

mod io;
mod lpq;
mod lyapunov;

pub use io::{read_flow, read_measure, write_flow, write_measure, FlowManifestEntry};
pub use lpq::{kato_admissible, lpq_norm, SpaceTimeGrid};
pub use lyapunov::{LyapunovReport, LyapunovV};

use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::geometry::Domain;

/// Slack allowed on the total interior mass.
pub const MASS_SLACK: f64 = 1e-12;

/// An O-distribution: atoms in Ō with non-negative weights. Only atoms that
/// are alive and strictly inside O carry mass for O-functionals; dead atoms
/// stay recorded at their boundary location.
#[derive(Clone, Debug)]
pub struct SubProbMeasure {
    domain: Arc<Domain>,
    dim: usize,
    locations: Vec<f64>,
    weights: Vec<f64>,
    alive: Vec<bool>,
}

impl SubProbMeasure {
    pub fn zero(domain: Arc<Domain>) -> Self {
        let dim = domain.dim();
        Self {
            domain,
            dim,
            locations: Vec::new(),
            weights: Vec::new(),
            alive: Vec::new(),
        }
    }

    /// Atoms given as (location, weight); liveness is read off the location.
    pub fn from_atoms(domain: Arc<Domain>, atoms: &[(Vec<f64>, f64)]) -> Result<Self> {
        let dim = domain.dim();
        let mut locations = Vec::with_capacity(atoms.len() * dim);
        let mut weights = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            if x.len() != dim {
                return invalid(format!("atom dimension {} differs from domain dimension {dim}", x.len()));
            }
            locations.extend_from_slice(x);
            weights.push(*w);
        }
        let alive = vec![true; atoms.len()];
        Self::from_parts(domain, locations, weights, alive)
    }

    /// Flat locations (row-major, `dim` per atom), weights and alive flags.
    /// An atom is alive only if flagged alive and strictly inside O.
    pub fn from_parts(
        domain: Arc<Domain>,
        locations: Vec<f64>,
        weights: Vec<f64>,
        mut alive: Vec<bool>,
    ) -> Result<Self> {
        let dim = domain.dim();
        if locations.len() != weights.len() * dim || alive.len() != weights.len() {
            return invalid("locations, weights and alive flags have inconsistent lengths");
        }
        let mut mass = 0.0;
        for (i, w) in weights.iter().enumerate() {
            if !(w.is_finite() && *w >= 0.0) {
                return invalid(format!("atom {i} has invalid weight {w}"));
            }
            let x = &locations[i * dim..(i + 1) * dim];
            domain.boundary_distance(x)?;
            alive[i] = alive[i] && domain.contains(x);
            if alive[i] {
                mass += w;
            }
        }
        // Summation error of N weights near 1/N grows like N·ε.
        if mass > 1.0 + MASS_SLACK + weights.len() as f64 * f64::EPSILON {
            return invalid(format!("interior mass {mass} exceeds 1"));
        }
        Ok(Self {
            domain,
            dim,
            locations,
            weights,
            alive,
        })
    }

    /// Empirical O-distribution of an ensemble: weight 1/N per point, points
    /// that are dead or on ∂O carry no O-mass.
    pub fn restrict_to_o(domain: Arc<Domain>, points: &[f64], alive: &[bool]) -> Result<Self> {
        let n = alive.len();
        if n == 0 {
            return invalid("cannot build an empirical measure from an empty ensemble");
        }
        let w = 1.0 / n as f64;
        Self::from_parts(domain, points.to_vec(), vec![w; n], alive.to_vec())
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of recorded atoms, dead ones included.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn location(&self, i: usize) -> &[f64] {
        &self.locations[i * self.dim..(i + 1) * self.dim]
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn alive_flags(&self) -> &[bool] {
        &self.alive
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    #[inline]
    pub fn is_alive(&self, i: usize) -> bool {
        self.alive[i]
    }

    /// Interior atoms as (index, location, weight).
    pub fn interior(&self) -> impl Iterator<Item = (usize, &[f64], f64)> + '_ {
        (0..self.len())
            .filter(move |&i| self.alive[i])
            .map(move |i| (i, self.location(i), self.weights[i]))
    }

    /// μ(O).
    pub fn mass(&self) -> f64 {
        self.interior().map(|(_, _, w)| w).sum()
    }

    /// Total weight recorded on dead atoms.
    pub fn dead_mass(&self) -> f64 {
        (0..self.len())
            .filter(|&i| !self.alive[i])
            .map(|i| self.weights[i])
            .sum()
    }

    /// μ(f) over interior atoms.
    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F) -> Result<f64> {
        let mut acc = 0.0;
        for (i, x, w) in self.interior() {
            let v = f(x);
            if !v.is_finite() {
                return Err(Error::Evaluation {
                    atom: i,
                    location: x.to_vec(),
                    value: v,
                });
            }
            acc += w * v;
        }
        Ok(acc)
    }

    /// ‖μ‖₁ = μ(|·|).
    pub fn first_moment(&self) -> f64 {
        self.interior()
            .map(|(_, x, w)| w * x.iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum()
    }

    /// Atoms coincide bit-for-bit, so weights can be compared directly.
    pub fn shares_atoms_with(&self, other: &SubProbMeasure) -> bool {
        self.dim == other.dim
            && self.locations.len() == other.locations.len()
            && self
                .locations
                .iter()
                .zip(&other.locations)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Same atoms and liveness, new weights.
    pub fn reweighted(&self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.len() {
            return invalid("weight vector length differs from atom count");
        }
        Self::from_parts(
            self.domain.clone(),
            self.locations.clone(),
            weights,
            self.alive.clone(),
        )
    }
}

/// Uniform time grid 0 = t₀ < … < t_M = T.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    t_end: f64,
    intervals: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, intervals: usize) -> Result<Self> {
        if !(t_end > 0.0 && t_end.is_finite()) || intervals == 0 {
            return invalid("time grid needs T > 0 and at least one interval");
        }
        Ok(Self { t_end, intervals })
    }

    /// A single node at t = 0.
    pub fn single_node() -> Self {
        Self {
            t_end: 0.0,
            intervals: 0,
        }
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn nodes(&self) -> usize {
        self.intervals + 1
    }

    pub fn step(&self) -> f64 {
        if self.intervals == 0 {
            0.0
        } else {
            self.t_end / self.intervals as f64
        }
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.intervals {
            self.t_end
        } else {
            k as f64 * self.step()
        }
    }

    /// Number of integrator steps of size `dt` per grid interval.
    pub fn substeps(&self, dt: f64) -> Result<usize> {
        if !(dt > 0.0) {
            return invalid("dt must be positive");
        }
        let ratio = self.step() / dt;
        let k = ratio.round();
        if k < 1.0 || (ratio - k).abs() > 1e-9 * ratio.max(1.0) {
            return invalid(format!(
                "integrator step {dt} does not divide the grid step {}",
                self.step()
            ));
        }
        Ok(k as usize)
    }
}

/// One O-distribution per grid node.
#[derive(Clone, Debug)]
pub struct MeasureFlow {
    grid: TimeGrid,
    snapshots: Vec<SubProbMeasure>,
}

impl MeasureFlow {
    pub fn new(grid: TimeGrid, snapshots: Vec<SubProbMeasure>) -> Result<Self> {
        if snapshots.len() != grid.nodes() {
            return invalid(format!(
                "flow has {} snapshots for {} grid nodes",
                snapshots.len(),
                grid.nodes()
            ));
        }
        let dom = snapshots[0].domain().clone();
        if snapshots.iter().any(|s| !s.domain().same_as(&dom)) {
            return invalid("flow snapshots live on different domains");
        }
        Ok(Self { grid, snapshots })
    }

    /// The flow that stays at γ at every node.
    pub fn constant(grid: TimeGrid, gamma: &SubProbMeasure) -> Self {
        Self {
            grid,
            snapshots: vec![gamma.clone(); grid.nodes()],
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn snapshots(&self) -> &[SubProbMeasure] {
        &self.snapshots
    }

    pub fn at(&self, k: usize) -> &SubProbMeasure {
        &self.snapshots[k]
    }

    pub fn initial(&self) -> &SubProbMeasure {
        &self.snapshots[0]
    }

    pub fn domain(&self) -> &Arc<Domain> {
        self.snapshots[0].domain()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.mass()).collect()
    }

    /// Killing only removes mass.
    pub fn mass_is_nonincreasing(&self, tol: f64) -> bool {
        self.masses().windows(2).all(|w| w[1] <= w[0] + tol)
    }

    /// ‖μ‖_{1,T} = sup_t ‖μ_t‖₁.
    pub fn sup_first_moment(&self) -> f64 {
        self.snapshots
            .iter()
            .map(|s| s.first_moment())
            .fold(0.0, f64::max)
    }

    /// Membership in C_N^γ: sup_t e^{−Nt}‖μ_t‖₁ ≤ N.
    pub fn in_weighted_moment_ball(&self, n: f64) -> bool {
        (0..self.grid.nodes())
            .map(|k| (-n * self.grid.time(k)).exp() * self.snapshots[k].first_moment())
            .fold(0.0, f64::max)
            <= n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterStream;

    fn unit() -> Arc<Domain> {
        Arc::new(Domain::interval(0.0, 1.0).unwrap())
    }

    #[test]
    fn restriction_examples() {
        let m = SubProbMeasure::restrict_to_o(unit(), &[0.1, 0.2, 0.3, 0.4], &[true; 4]).unwrap();
        assert_eq!(m.interior().count(), 4);
        assert!(m.interior().all(|(_, _, w)| w == 0.25));
        assert!((m.mass() - 1.0).abs() < 1e-15);

        let m = SubProbMeasure::restrict_to_o(
            unit(),
            &[0.0, 0.2, 1.0, 0.4],
            &[false, true, false, true],
        )
        .unwrap();
        assert!((m.mass() - 0.5).abs() < 1e-15);
        assert!((m.mass() + m.dead_mass() - 1.0).abs() < 1e-15);

        let m = SubProbMeasure::restrict_to_o(unit(), &[0.0, 1.0], &[false, false]).unwrap();
        assert_eq!(m.mass(), 0.0);

        assert!(SubProbMeasure::restrict_to_o(unit(), &[], &[]).is_err());
    }

    #[test]
    fn boundary_atoms_are_dead_even_if_flagged_alive() {
        let m = SubProbMeasure::restrict_to_o(unit(), &[0.0, 0.5], &[true, true]).unwrap();
        assert!(!m.is_alive(0));
        assert!((m.mass() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn integrate_examples() {
        let delta = SubProbMeasure::from_atoms(unit(), &[(vec![0.5], 1.0)]).unwrap();
        assert!((delta.integrate(|x| x[0] * x[0]).unwrap() - 0.25).abs() < 1e-15);
        let zero = SubProbMeasure::zero(unit());
        assert_eq!(zero.integrate(|x| x[0].exp()).unwrap(), 0.0);
        let err = delta.integrate(|x| 1.0 / (x[0] - 0.5)).unwrap_err();
        assert!(matches!(err, Error::Evaluation { atom: 0, .. }));
    }

    #[test]
    fn integrate_uniform_clt() {
        let n = 100_000;
        let pts: Vec<f64> = (0..n as u64).map(|i| CounterStream::new(5, i, 0).uniform()).collect();
        let m = SubProbMeasure::restrict_to_o(unit(), &pts, &vec![true; n]).unwrap();
        let mean = m.integrate(|x| x[0]).unwrap();
        let tol = 3.0 * (1.0f64 / 12.0).sqrt() / (n as f64).sqrt();
        assert!((mean - 0.5).abs() <= tol, "{mean}");
    }

    #[test]
    fn first_moment_examples() {
        let delta = SubProbMeasure::from_atoms(unit(), &[(vec![0.5], 1.0)]).unwrap();
        assert!((delta.first_moment() - 0.5).abs() < 1e-15);
        assert_eq!(SubProbMeasure::zero(unit()).first_moment(), 0.0);
        let m = SubProbMeasure::from_atoms(unit(), &[(vec![0.2], 0.5), (vec![0.8], 0.25)]).unwrap();
        assert!((m.first_moment() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn rejects_super_probability_and_outside_atoms() {
        assert!(SubProbMeasure::from_atoms(unit(), &[(vec![0.5], 0.7), (vec![0.6], 0.4)]).is_err());
        assert!(SubProbMeasure::from_atoms(unit(), &[(vec![1.5], 0.1)]).is_err());
        assert!(SubProbMeasure::from_atoms(unit(), &[(vec![0.5], -0.1)]).is_err());
    }

    #[test]
    fn integrate_is_linear_and_homogeneous() {
        let m = SubProbMeasure::from_atoms(unit(), &[(vec![0.2], 0.3), (vec![0.7], 0.6)]).unwrap();
        let f = |x: &[f64]| x[0].sin();
        let g = |x: &[f64]| x[0] * x[0];
        let lhs = m.integrate(|x| 2.0 * f(x) - 3.0 * g(x)).unwrap();
        let rhs = 2.0 * m.integrate(f).unwrap() - 3.0 * m.integrate(g).unwrap();
        assert!((lhs - rhs).abs() < 1e-14);
        let half = m.reweighted(m.weights().iter().map(|w| 0.5 * w).collect()).unwrap();
        assert!((half.integrate(f).unwrap() - 0.5 * m.integrate(f).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn grid_substeps() {
        let g = TimeGrid::new(1.0, 20).unwrap();
        assert_eq!(g.substeps(1e-3).unwrap(), 50);
        assert!(g.substeps(0.03).is_err());
        assert_eq!(g.time(20), 1.0);
    }

    #[test]
    fn flow_moment_ball() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        let m = SubProbMeasure::from_atoms(unit(), &[(vec![0.5], 1.0)]).unwrap();
        let flow = MeasureFlow::constant(g, &m);
        assert!((flow.sup_first_moment() - 0.5).abs() < 1e-15);
        assert!(flow.in_weighted_moment_ball(1.0));
        assert!(!flow.in_weighted_moment_ball(0.1));
        assert!(flow.mass_is_nonincreasing(0.0));
    }
}
