//! Killed Euler–Maruyama integration against a frozen measure flow.
//!
//! Each particle's noise at step k comes from `CounterStream::new(seed, id, k)`:
//! first the m Gaussian increments, then (with bridge correction) one uniform.
//! Replaying a path therefore only needs the seed, the id and the step index.

use std::sync::Arc;

use rayon::prelude::*;

use crate::coefficients::{CoefficientField, Frozen};
use crate::error::{invalid, Error, Result};
use crate::geometry::Domain;
use crate::measures::{MeasureFlow, SubProbMeasure};
use crate::rng::{derive_seed, CounterStream};

/// Sub-seed purpose for initial-law sampling.
const INIT_PURPOSE: u64 = 1;

/// Bridge probabilities below e^{−40} are treated as zero.
const BRIDGE_CUTOFF: f64 = 40.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Semantics {
    /// Stop at the first exit and stay on ∂O.
    #[default]
    FreezeAtExit,
    /// Multiply the increment by 1_O of the current position.
    IndicatorGated,
}

/// N particles with their kill state and noise addressing.
#[derive(Clone, Debug)]
pub struct ParticleEnsemble {
    dim: usize,
    positions: Vec<f64>,
    alive: Vec<bool>,
    exit_times: Vec<f64>,
    ids: Vec<u64>,
    seed: u64,
    t: f64,
    step: u64,
    log_weights: Option<Vec<f64>>,
}

impl ParticleEnsemble {
    /// One particle per point (flat, `dim` per point). Points on ∂O start
    /// dead with exit time 0; points outside Ō are rejected.
    pub fn from_points(domain: &Domain, points: Vec<f64>, seed: u64) -> Result<Self> {
        let d = domain.dim();
        if points.is_empty() || !points.len().is_multiple_of(d) {
            return invalid("point array is empty or not a multiple of the dimension");
        }
        let n = points.len() / d;
        let mut alive = vec![true; n];
        let mut exit_times = vec![f64::INFINITY; n];
        for i in 0..n {
            let x = &points[i * d..(i + 1) * d];
            domain.boundary_distance(x)?;
            if !domain.contains(x) {
                alive[i] = false;
                exit_times[i] = 0.0;
            }
        }
        Ok(Self {
            dim: d,
            positions: points,
            alive,
            exit_times,
            ids: (0..n as u64).collect(),
            seed,
            t: 0.0,
            step: 0,
            log_weights: None,
        })
    }

    /// N i.i.d. draws from γ. With probability 1 − γ(O) a particle starts
    /// dead at the domain anchor.
    pub fn sample(gamma: &SubProbMeasure, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return invalid("ensemble size must be positive");
        }
        let dom = gamma.domain();
        let d = dom.dim();
        let atoms: Vec<(usize, f64)> = gamma.interior().map(|(i, _, w)| (i, w)).collect();
        let mut cum = Vec::with_capacity(atoms.len());
        let mut acc = 0.0;
        for &(_, w) in &atoms {
            acc += w;
            cum.push(acc);
        }
        let init_seed = derive_seed(seed, INIT_PURPOSE);
        let mut points = Vec::with_capacity(n * d);
        for p in 0..n {
            let u = CounterStream::new(init_seed, p as u64, 0).uniform();
            if u >= acc || atoms.is_empty() {
                points.extend_from_slice(dom.anchor());
            } else {
                let j = cum.partition_point(|&c| c <= u).min(atoms.len() - 1);
                points.extend_from_slice(gamma.location(atoms[j].0));
            }
        }
        Self::from_points(dom, points, seed)
    }

    pub fn len(&self) -> usize {
        self.alive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alive.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn alive_flags(&self) -> &[bool] {
        &self.alive
    }

    pub fn exit_times(&self) -> &[f64] {
        &self.exit_times
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn log_weights(&self) -> Option<&[f64]> {
        self.log_weights.as_deref()
    }

    /// Start tracking log R with R₀ = 1.
    pub fn with_log_weights(mut self) -> Self {
        self.log_weights = Some(vec![0.0; self.len()]);
        self
    }

    pub fn alive_fraction(&self) -> f64 {
        self.alive.iter().filter(|a| **a).count() as f64 / self.len() as f64
    }

    /// Empirical O-distribution with weight 1/N per particle. Under gated
    /// semantics stopped particles may sit outside Ō; they are recorded at
    /// their nearest boundary point, carrying no O-mass.
    pub fn to_measure(&self, domain: &Arc<Domain>) -> Result<SubProbMeasure> {
        let locs = self.projected_positions(domain)?;
        let alive: Vec<bool> = (0..self.len())
            .map(|i| self.alive[i] && domain.contains(&locs[i * self.dim..(i + 1) * self.dim]))
            .collect();
        SubProbMeasure::restrict_to_o(domain.clone(), &locs, &alive)
    }

    /// Same atoms weighted by R/ΣR, so that dead particles keep their share
    /// and the interior mass never exceeds 1.
    pub fn to_weighted_measure(&self, domain: &Arc<Domain>) -> Result<SubProbMeasure> {
        let base = self.to_measure(domain)?;
        match &self.log_weights {
            None => Ok(base),
            Some(lw) => base.reweighted(normalized_weights(lw)),
        }
    }

    fn projected_positions(&self, domain: &Domain) -> Result<Vec<f64>> {
        let d = self.dim;
        let mut locs = self.positions.clone();
        for i in 0..self.len() {
            let x = &self.positions[i * d..(i + 1) * d];
            if domain.signed_distance(x) < -domain.tolerance() {
                let p = domain.nearest_boundary_point(x)?;
                locs[i * d..(i + 1) * d].copy_from_slice(&p);
            }
        }
        Ok(locs)
    }
}

/// R⁽ⁱ⁾/ΣR from log-weights, computed stably.
pub fn normalized_weights(log_w: &[f64]) -> Vec<f64> {
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / total).collect()
}

/// State recorded at one grid node.
#[derive(Clone, Debug)]
pub struct NodeState {
    pub positions: Vec<f64>,
    pub alive: Vec<bool>,
    pub log_weights: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimulationOptions {
    pub dt: f64,
    pub semantics: Semantics,
    pub bridge_correction: bool,
    /// Keep per-node particle states.
    pub record_paths: bool,
}

impl SimulationOptions {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            semantics: Semantics::FreezeAtExit,
            bridge_correction: true,
            record_paths: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimulationOutput {
    /// Φμ on the grid of the input flow.
    pub flow: MeasureFlow,
    pub ensemble: ParticleEnsemble,
    pub paths: Option<Vec<NodeState>>,
}

impl SimulationOutput {
    /// Fraction of particles killed by T.
    pub fn killed_fraction(&self) -> f64 {
        1.0 - self.ensemble.alive_fraction()
    }
}

/// Per-step inputs shared by all particles.
struct StepInputs<'a> {
    domain: &'a Domain,
    frozen: &'a dyn Frozen,
    /// b(·, μ²) for the Girsanov density, when tracking log R.
    tilt: Option<&'a dyn Frozen>,
    d: usize,
    m: usize,
    dt: f64,
    t: f64,
    step: u64,
    seed: u64,
    semantics: Semantics,
    bridge: bool,
}

struct Scratch {
    b: Vec<f64>,
    b2: Vec<f64>,
    s: Vec<f64>,
    z: Vec<f64>,
    x: Vec<f64>,
    xi: Vec<f64>,
}

impl Scratch {
    fn new(d: usize, m: usize) -> Self {
        Self {
            b: vec![0.0; d],
            b2: vec![0.0; d],
            s: vec![0.0; d * m],
            z: vec![0.0; m],
            x: vec![0.0; d],
            xi: vec![0.0; m],
        }
    }
}

/// ξ = σ*(σσ*)⁻¹Δb for row-major d×m σ. Returns false if σσ* is singular.
pub(crate) fn girsanov_xi(sigma: &[f64], d: usize, m: usize, db: &[f64], out: &mut [f64]) -> bool {
    if d == 1 && m == 1 {
        if sigma[0] == 0.0 {
            out[0] = 0.0;
            return db[0] == 0.0;
        }
        out[0] = db[0] / sigma[0];
        return true;
    }
    let s = nalgebra::DMatrix::from_row_slice(d, m, sigma);
    let a = &s * s.transpose();
    let Some(chol) = a.cholesky() else {
        if db.iter().all(|v| *v == 0.0) {
            out.fill(0.0);
            return true;
        }
        return false;
    };
    let y = chol.solve(&nalgebra::DVector::from_column_slice(db));
    let xi = s.transpose() * y;
    out.copy_from_slice(xi.as_slice());
    true
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Advance one particle by one step. Returns an error tagged with the
/// particle index for non-finite coefficients or singular noise.
#[allow(clippy::too_many_arguments)]
fn advance(
    inp: &StepInputs<'_>,
    sc: &mut Scratch,
    idx: usize,
    id: u64,
    pos: &mut [f64],
    alive: &mut bool,
    exit_time: &mut f64,
    log_w: Option<&mut f64>,
) -> Result<()> {
    let moving = match inp.semantics {
        Semantics::FreezeAtExit => *alive,
        Semantics::IndicatorGated => inp.domain.contains(pos),
    };
    if !moving {
        return Ok(());
    }
    let (d, m, dt) = (inp.d, inp.m, inp.dt);
    let numeric = |what| Error::Numeric {
        particle: idx,
        time: inp.t,
        what,
    };
    inp.frozen.drift(inp.t, pos, &mut sc.b);
    inp.frozen.diffusion(inp.t, pos, &mut sc.s);
    if !finite(&sc.b) {
        return Err(numeric("drift"));
    }
    if !finite(&sc.s) {
        return Err(numeric("diffusion"));
    }
    let mut stream = CounterStream::new(inp.seed, id, inp.step);
    stream.fill_normals(&mut sc.z);
    let sq = dt.sqrt();

    if let (Some(tilt), Some(lw)) = (inp.tilt, log_w) {
        tilt.drift(inp.t, pos, &mut sc.b2);
        if !finite(&sc.b2) {
            return Err(numeric("tilted drift"));
        }
        for i in 0..d {
            sc.b2[i] -= sc.b[i];
        }
        if !girsanov_xi(&sc.s, d, m, &sc.b2, &mut sc.xi) {
            return Err(Error::Singular { point: pos.to_vec() });
        }
        let mut inc = 0.0;
        for j in 0..m {
            inc += sc.xi[j] * sq * sc.z[j] - 0.5 * sc.xi[j] * sc.xi[j] * dt;
        }
        *lw += inc;
    }

    for i in 0..d {
        let noise: f64 = (0..m).map(|j| sc.s[i * m + j] * sc.z[j]).sum();
        sc.x[i] = pos[i] + sc.b[i] * dt + noise * sq;
    }
    if !finite(&sc.x) {
        return Err(numeric("position"));
    }

    if inp.semantics == Semantics::IndicatorGated {
        pos.copy_from_slice(&sc.x);
        if !inp.domain.contains(pos) && !exit_time.is_finite() {
            *exit_time = inp.t + dt;
        }
        *alive = inp.domain.contains(pos);
        return Ok(());
    }

    if !inp.domain.contains(&sc.x) {
        let (lam, p) = inp.domain.chord_exit(pos, &sc.x);
        pos.copy_from_slice(&p);
        *alive = false;
        *exit_time = inp.t + lam * dt;
        return Ok(());
    }
    if inp.bridge {
        let r0 = inp.domain.signed_distance(pos);
        let r1 = inp.domain.signed_distance(&sc.x);
        // |σ*∇ρ|² ≤ ‖σ‖²_HS gives a cheap lower bound on the exponent.
        let hs: f64 = sc.s.iter().map(|v| v * v).sum();
        if hs > 0.0 && 2.0 * r0 * r1 < BRIDGE_CUTOFF * hs * dt {
            let g = inp.domain.distance_gradient(pos);
            let normal_var: f64 = (0..m)
                .map(|j| (0..d).map(|i| sc.s[i * m + j] * g[i]).sum::<f64>().powi(2))
                .sum();
            if normal_var > 0.0 {
                let p_exit = (-2.0 * r0 * r1 / (normal_var * dt)).exp();
                if stream.uniform() < p_exit {
                    let p = inp.domain.nearest_boundary_point(&sc.x)?;
                    pos.copy_from_slice(&p);
                    *alive = false;
                    *exit_time = inp.t + dt;
                    return Ok(());
                }
            }
        }
    }
    pos.copy_from_slice(&sc.x);
    Ok(())
}

fn run_step(ens: &mut ParticleEnsemble, inp: &StepInputs<'_>) -> Result<()> {
    let d = inp.d;
    let ids = &ens.ids;
    let mut lw_dummy = Vec::new();
    let (lw, has_lw) = match ens.log_weights.as_mut() {
        Some(v) => (v, true),
        None => {
            lw_dummy.resize(ens.alive.len(), 0.0);
            (&mut lw_dummy, false)
        }
    };
    let first_err = ens
        .positions
        .par_chunks_mut(d)
        .zip(ens.alive.par_iter_mut())
        .zip(ens.exit_times.par_iter_mut())
        .zip(lw.par_iter_mut())
        .enumerate()
        .map_init(
            || Scratch::new(inp.d, inp.m),
            |sc, (i, (((pos, alive), et), w))| {
                advance(inp, sc, i, ids[i], pos, alive, et, if has_lw { Some(w) } else { None })
                    .err()
                    .map(|e| (i, e))
            },
        )
        .flatten()
        .min_by_key(|(i, _)| *i);
    if let Some((_, e)) = first_err {
        return Err(e);
    }
    ens.t += inp.dt;
    ens.step += 1;
    Ok(())
}

/// One killed Euler–Maruyama step with μ frozen at `mu`.
pub fn step_killed(
    ens: &mut ParticleEnsemble,
    field: &CoefficientField,
    mu: &SubProbMeasure,
    dt: f64,
    semantics: Semantics,
    bridge_correction: bool,
) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return invalid(format!("step size must be positive, got {dt}"));
    }
    if ens.dim != field.dim() || mu.dim() != field.dim() {
        return invalid("ensemble, measure and coefficient dimensions differ");
    }
    let frozen = field.freeze(mu)?;
    let inp = StepInputs {
        domain: mu.domain(),
        frozen: frozen.as_ref(),
        tilt: None,
        d: field.dim(),
        m: field.noise_dim(),
        dt,
        t: ens.t,
        step: ens.step,
        seed: ens.seed,
        semantics,
        bridge: bridge_correction && semantics == Semantics::FreezeAtExit,
    };
    run_step(ens, &inp)
}

/// One step with coefficients already frozen at the current snapshot, so
/// callers stepping several ensembles in lock-step freeze once per interval.
pub fn step_frozen(
    ens: &mut ParticleEnsemble,
    frozen: &dyn Frozen,
    domain: &Domain,
    noise_dim: usize,
    dt: f64,
    semantics: Semantics,
    bridge_correction: bool,
) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return invalid(format!("step size must be positive, got {dt}"));
    }
    let inp = StepInputs {
        domain,
        frozen,
        tilt: None,
        d: ens.dim,
        m: noise_dim,
        dt,
        t: ens.t,
        step: ens.step,
        seed: ens.seed,
        semantics,
        bridge: bridge_correction && semantics == Semantics::FreezeAtExit,
    };
    run_step(ens, &inp)
}

/// Move the time cursor to a grid node without stepping, removing
/// accumulated rounding in t.
pub fn align_time(ens: &mut ParticleEnsemble, t: f64) {
    ens.t = t;
}

fn node_state(ens: &ParticleEnsemble) -> NodeState {
    NodeState {
        positions: ens.positions.clone(),
        alive: ens.alive.clone(),
        log_weights: ens.log_weights.clone(),
    }
}

/// Integrate over the grid of `mu_flow`, holding μ at the latest node, and
/// return Φμ on the same grid.
pub fn simulate_flow(
    field: &CoefficientField,
    mu_flow: &MeasureFlow,
    initial: &ParticleEnsemble,
    opts: &SimulationOptions,
) -> Result<SimulationOutput> {
    simulate_tilted(field, mu_flow, None, initial, opts)
}

/// As [`simulate_flow`], additionally accumulating log R for the drift
/// change μ¹ → μ² when `tilt_flow` is given (diffusion must not depend on μ).
pub fn simulate_tilted(
    field: &CoefficientField,
    mu_flow: &MeasureFlow,
    tilt_flow: Option<&MeasureFlow>,
    initial: &ParticleEnsemble,
    opts: &SimulationOptions,
) -> Result<SimulationOutput> {
    let grid = *mu_flow.grid();
    let domain = mu_flow.domain().clone();
    if initial.dim != field.dim() || domain.dim() != field.dim() {
        return invalid("ensemble, flow and coefficient dimensions differ");
    }
    if !(opts.dt > 0.0) {
        return invalid("step size must be positive");
    }
    let sub = if grid.intervals() == 0 { 0 } else { grid.substeps(opts.dt)? };
    let mut ens = initial.clone();
    if let Some(tf) = tilt_flow {
        if field.diffusion_depends_on_measure() {
            return invalid("noise has to be distribution independent for reweighting");
        }
        if tf.grid() != &grid || !tf.domain().same_as(&domain) {
            return invalid("tilt flow lives on a different grid or domain");
        }
        if ens.log_weights.is_none() {
            ens.log_weights = Some(vec![0.0; ens.len()]);
        }
    }
    let mut snapshots = Vec::with_capacity(grid.nodes());
    let tracked = tilt_flow.is_some();
    let mut paths = opts.record_paths.then(Vec::new);
    let push = |ens: &ParticleEnsemble, snaps: &mut Vec<SubProbMeasure>, paths: &mut Option<Vec<NodeState>>| -> Result<()> {
        snaps.push(if tracked { ens.to_weighted_measure(&domain)? } else { ens.to_measure(&domain)? });
        if let Some(p) = paths.as_mut() {
            p.push(node_state(ens));
        }
        Ok(())
    };
    push(&ens, &mut snapshots, &mut paths)?;
    // Interaction-free fields ignore μ, so one freeze serves every node.
    let shared = if field.interaction_free() { Some(field.freeze(mu_flow.at(0))?) } else { None };
    for k in 0..grid.intervals() {
        let owned;
        let frozen: &dyn Frozen = match &shared {
            Some(f) => f.as_ref(),
            None => {
                owned = field.freeze(mu_flow.at(k))?;
                owned.as_ref()
            }
        };
        let tilt_owned = match tilt_flow {
            Some(tf) => Some(field.freeze(tf.at(k))?),
            None => None,
        };
        let t0 = grid.time(k);
        for j in 0..sub {
            let inp = StepInputs {
                domain: &domain,
                frozen,
                tilt: tilt_owned.as_deref(),
                d: field.dim(),
                m: field.noise_dim(),
                dt: opts.dt,
                t: t0 + j as f64 * opts.dt,
                step: ens.step,
                seed: ens.seed,
                semantics: opts.semantics,
                bridge: opts.bridge_correction && opts.semantics == Semantics::FreezeAtExit,
            };
            run_step(&mut ens, &inp)?;
        }
        ens.t = grid.time(k + 1);
        push(&ens, &mut snapshots, &mut paths)?;
    }
    Ok(SimulationOutput {
        flow: MeasureFlow::new(grid, snapshots)?,
        ensemble: ens,
        paths,
    })
}

/// The squared-CIR construction on O = (0, ∞): Y solves
/// dY = Y dW + (1 − Y/2) dt from Y₀ = y0 without killing and X = Y².
/// Returns X at time t for each particle.
pub fn cir_companion(n: usize, y0: f64, t: f64, dt: f64, seed: u64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && t >= 0.0) {
        return invalid("invalid time parameters");
    }
    let steps = (t / dt).round() as u64;
    let sq = dt.sqrt();
    Ok((0..n as u64)
        .into_par_iter()
        .map(|p| {
            let mut y = y0;
            for k in 0..steps {
                let z = CounterStream::new(seed, p, k).normal();
                y += y * sq * z + (1.0 - 0.5 * y) * dt;
            }
            y * y
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{Hypothesis, Metadata};
    use crate::measures::TimeGrid;

    fn meta() -> Metadata {
        Metadata::new(Hypothesis::A, 1.0, 1.0, 0.0)
    }

    fn unit() -> Arc<Domain> {
        Arc::new(Domain::interval(0.0, 1.0).unwrap())
    }

    #[test]
    fn still_particle_stays_alive() {
        let dom = unit();
        let f = CoefficientField::linear(1, 0.0, vec![0.0], 0.0, meta()).unwrap();
        let mut e = ParticleEnsemble::from_points(&dom, vec![0.3], 1).unwrap();
        let mu = SubProbMeasure::zero(dom.clone());
        for _ in 0..100 {
            step_killed(&mut e, &f, &mu, 0.01, Semantics::FreezeAtExit, true).unwrap();
        }
        assert_eq!(e.position(0), &[0.3]);
        assert!(e.alive_flags()[0]);
        assert_eq!(e.exit_times()[0], f64::INFINITY);
    }

    #[test]
    fn boundary_start_is_dead_at_zero_and_frozen() {
        let dom = unit();
        let f = CoefficientField::linear(1, 0.0, vec![1.0], 1.0, meta()).unwrap();
        let mut e = ParticleEnsemble::from_points(&dom, vec![0.0, 0.5], 1).unwrap();
        assert_eq!(e.exit_times()[0], 0.0);
        let mu = SubProbMeasure::zero(dom.clone());
        for _ in 0..50 {
            step_killed(&mut e, &f, &mu, 0.01, Semantics::FreezeAtExit, false).unwrap();
        }
        assert_eq!(e.position(0), &[0.0]);
        assert_eq!(e.exit_times()[0], 0.0);
    }

    #[test]
    fn exit_is_clamped_to_boundary_and_never_moves_again() {
        let dom = unit();
        let f = CoefficientField::linear(1, 0.0, vec![0.0], 1.0, meta()).unwrap();
        let pts: Vec<f64> = (0..2000).map(|i| 0.05 + 0.9 * (i as f64 / 1999.0)).collect();
        let mut e = ParticleEnsemble::from_points(&dom, pts, 3).unwrap();
        let mu = SubProbMeasure::zero(dom.clone());
        let mut frozen_at: Vec<Option<f64>> = vec![None; e.len()];
        for _ in 0..200 {
            step_killed(&mut e, &f, &mu, 1e-3, Semantics::FreezeAtExit, true).unwrap();
            for i in 0..e.len() {
                if !e.alive_flags()[i] {
                    let x = e.position(i)[0];
                    assert!(x == 0.0 || x == 1.0);
                    match frozen_at[i] {
                        Some(p) => assert_eq!(p, x),
                        None => frozen_at[i] = Some(x),
                    }
                    assert!(e.exit_times()[i] <= e.time() + 1e-15);
                }
            }
        }
        assert!(frozen_at.iter().any(|p| p.is_some()));
    }

    #[test]
    fn non_finite_coefficients_name_the_particle() {
        let dom = unit();
        let f = CoefficientField::from_fn(
            1,
            1,
            |_, x, _, out| out[0] = if x[0] > 0.5 { f64::NAN } else { 0.0 },
            |_, _, _, out| out[0] = 1.0,
            false,
            true,
            meta(),
        );
        let mut e = ParticleEnsemble::from_points(&dom, vec![0.2, 0.7, 0.9], 1).unwrap();
        let err = step_killed(&mut e, &f, &SubProbMeasure::zero(dom.clone()), 0.01, Semantics::FreezeAtExit, false).unwrap_err();
        assert!(matches!(err, Error::Numeric { particle: 1, what: "drift", .. }), "{err:?}");
    }

    #[test]
    fn inward_drift_without_noise_never_exits() {
        let dom = unit();
        let f = CoefficientField::linear(1, -1.0, vec![0.5], 0.0, meta()).unwrap();
        let pts: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
        let e = ParticleEnsemble::from_points(&dom, pts, 0).unwrap();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let flow = MeasureFlow::constant(grid, &e.to_measure(&dom).unwrap());
        let out = simulate_flow(&f, &flow, &e, &SimulationOptions::new(0.01)).unwrap();
        assert!(out.flow.masses().iter().all(|m| (m - 1.0).abs() < 1e-12));
    }

    #[test]
    fn interaction_free_output_ignores_input_flow() {
        let dom = unit();
        let f = CoefficientField::linear(1, 0.0, vec![0.2], 1.0, meta()).unwrap();
        let e = ParticleEnsemble::from_points(&dom, vec![0.5; 500], 9).unwrap();
        let grid = TimeGrid::new(0.1, 5).unwrap();
        let a = MeasureFlow::constant(grid, &e.to_measure(&dom).unwrap());
        let b = MeasureFlow::constant(grid, &SubProbMeasure::zero(dom.clone()));
        let o = SimulationOptions::new(1e-3);
        let (x, y) = (simulate_flow(&f, &a, &e, &o).unwrap(), simulate_flow(&f, &b, &e, &o).unwrap());
        assert_eq!(x.ensemble.positions(), y.ensemble.positions());
        assert!(x.flow.mass_is_nonincreasing(0.0));
    }

    #[test]
    fn causality_up_to_divergence_node() {
        let dom = Arc::new(Domain::interval(-1.0, 1.0).unwrap());
        let f = CoefficientField::mean_field(1, 1.0, 0.25, crate::coefficients::Kernel::TruncatedDistance, 1.0, meta()).unwrap();
        let pts: Vec<f64> = (0..300).map(|i| -0.5 + i as f64 / 300.0).collect();
        let e = ParticleEnsemble::from_points(&dom, pts, 4).unwrap();
        let grid = TimeGrid::new(0.4, 4).unwrap();
        let g = e.to_measure(&dom).unwrap();
        let other = SubProbMeasure::from_atoms(dom.clone(), &[(vec![0.9], 1.0)]).unwrap();
        let a = MeasureFlow::constant(grid, &g);
        let mut snaps = a.snapshots().to_vec();
        snaps[2] = other.clone();
        snaps[3] = other;
        let b = MeasureFlow::new(grid, snaps).unwrap();
        let mut o = SimulationOptions::new(1e-2);
        o.record_paths = true;
        let (x, y) = (simulate_flow(&f, &a, &e, &o).unwrap(), simulate_flow(&f, &b, &e, &o).unwrap());
        let (px, py) = (x.paths.unwrap(), y.paths.unwrap());
        for k in 0..=2 {
            assert_eq!(px[k].positions, py[k].positions);
        }
        assert_ne!(px[3].positions, py[3].positions);
    }

    #[test]
    fn gated_particles_on_boundary_do_not_move() {
        let dom = Arc::new(Domain::half_space(vec![1.0], 0.0).unwrap());
        let f = CoefficientField::cir_square();
        let mut e = ParticleEnsemble::from_points(&dom, vec![0.0; 100], 5).unwrap();
        let mu = SubProbMeasure::zero(dom.clone());
        for _ in 0..100 {
            step_killed(&mut e, &f, &mu, 1e-3, Semantics::IndicatorGated, false).unwrap();
        }
        assert!(e.positions().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn companion_process_leaves_zero() {
        let x = cir_companion(2000, 0.0, 0.5, 1e-3, 11).unwrap();
        let frac = x.iter().filter(|v| **v > 0.0).count() as f64 / x.len() as f64;
        assert!(frac >= 0.99, "{frac}");
    }

    #[test]
    fn sampling_respects_deficit() {
        let dom = unit();
        let g = SubProbMeasure::from_atoms(dom.clone(), &[(vec![0.2], 0.3), (vec![0.7], 0.3)]).unwrap();
        let e = ParticleEnsemble::sample(&g, 20_000, 1).unwrap();
        let frac = e.alive_fraction();
        assert!((frac - 0.6).abs() < 0.02, "{frac}");
        let left = (0..e.len()).filter(|&i| e.alive_flags()[i] && e.position(i)[0] == 0.2).count() as f64 / e.len() as f64;
        assert!((left - 0.3).abs() < 0.02);
    }

    #[test]
    fn xi_matches_pseudo_inverse_formula() {
        // d = 1, m = 2: σ = (1, 1), σσ* = 2, ξ = σ*Δb/2.
        let mut out = [0.0; 2];
        assert!(girsanov_xi(&[1.0, 1.0], 1, 2, &[0.4], &mut out));
        assert!((out[0] - 0.2).abs() < 1e-15 && (out[1] - 0.2).abs() < 1e-15);
        assert!(!girsanov_xi(&[0.0, 0.0], 1, 2, &[0.4], &mut out));
    }
}
