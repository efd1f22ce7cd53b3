//! Picard iteration μ ↦ Φμ on measure flows, the empirical contraction
//! constant of Φ and the Fokker–Planck residual of a flow.

use std::sync::Arc;
use std::time::Instant;

use crate::coefficients::{CoefficientField, Hypothesis};
use crate::error::{invalid, Error, Result};
use crate::geometry::Domain;
use crate::killed_sde::{simulate_flow, ParticleEnsemble, SimulationOptions};
use crate::measures::{LyapunovV, MeasureFlow, SubProbMeasure, TimeGrid};
use crate::rng::CounterStream;
use crate::transport::{node_distances, weighted_sup, FlowDistance};

/// Candidates for the automatic θ.
pub const THETA_CANDIDATES: [f64; 7] = [0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0];

/// Ratio below which the automatic θ accepts a candidate.
pub const THETA_TARGET_RATIO: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricKind {
    W1Hat,
    W1,
    WeightedVariation,
}

impl MetricKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "w1_hat" => Ok(Self::W1Hat),
            "w1" => Ok(Self::W1),
            "weighted_variation" => Ok(Self::WeightedVariation),
            _ => invalid(format!("unknown metric `{s}`")),
        }
    }

    /// The metric the corresponding theorem contracts.
    pub fn for_hypothesis(tag: Hypothesis) -> Self {
        match tag {
            Hypothesis::A => Self::W1Hat,
            Hypothesis::B => Self::W1,
            Hypothesis::E => Self::WeightedVariation,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PicardConfig {
    /// None selects θ from [`THETA_CANDIDATES`].
    pub theta: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub particles: usize,
    pub dt: f64,
    pub grid: TimeGrid,
    pub metric: MetricKind,
    pub seed: u64,
    pub bridge_correction: bool,
    /// Weight for `WeightedVariation`; V ≡ 1 when absent.
    pub v: Option<LyapunovV>,
    /// Refresh the Girsanov base run when N_eff drops below this fraction.
    pub ess_fraction: f64,
}

impl PicardConfig {
    pub fn new(grid: TimeGrid, particles: usize, dt: f64, metric: MetricKind) -> Self {
        Self {
            theta: None,
            tol: 1e-3,
            max_iter: 20,
            particles,
            dt,
            grid,
            metric,
            seed: 0,
            bridge_correction: true,
            v: None,
            ess_fraction: 0.2,
        }
    }

    pub(crate) fn validate(&self, field: &CoefficientField) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 || self.particles == 0 {
            return invalid("tol must be positive and max_iter, particles at least 1");
        }
        if let Some(th) = self.theta {
            if !(th >= 0.0) {
                return invalid("θ must be non-negative");
            }
        }
        let expected = MetricKind::for_hypothesis(field.meta().tag);
        if self.metric != expected {
            return invalid(format!(
                "hypothesis {:?} contracts in {expected:?}, not {:?}",
                field.meta().tag,
                self.metric
            ));
        }
        Ok(())
    }

    pub(crate) fn base_distance(&self, dim: usize) -> FlowDistance {
        match self.metric {
            MetricKind::W1Hat => FlowDistance::W1Hat,
            MetricKind::W1 => FlowDistance::W1,
            MetricKind::WeightedVariation => {
                FlowDistance::WeightedVariation(self.v.clone().unwrap_or_else(|| LyapunovV::constant_one(dim)))
            }
        }
    }

    fn simulation(&self) -> SimulationOptions {
        SimulationOptions {
            bridge_correction: self.bridge_correction,
            ..SimulationOptions::new(self.dt)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry {
    /// n for the distance between iterates n and n − 1 (iterate 0 is γ held
    /// constant in time).
    pub iteration: usize,
    pub distance: f64,
    pub wall_time: f64,
    /// Per-node base distances, before θ-weighting.
    pub node_distances: Vec<f64>,
    /// Girsanov base refreshes so far (weighted-variation mode only).
    pub refreshes: usize,
}

#[derive(Clone, Debug)]
pub struct PicardOutcome {
    pub flow: MeasureFlow,
    pub trace: Vec<TraceEntry>,
    pub theta: f64,
    pub converged_at: usize,
}

impl PicardOutcome {
    /// Successive ratios d_{n+1}/d_n from iteration `from` on.
    pub fn ratios(&self, from: usize) -> Vec<f64> {
        trace_ratios(&self.trace, from)
    }
}

pub(crate) fn trace_ratios(trace: &[TraceEntry], from: usize) -> Vec<f64> {
    trace
        .windows(2)
        .filter(|w| w[0].iteration >= from)
        .map(|w| w[1].distance / w[0].distance)
        .collect()
}

/// Smallest candidate θ for which every successive ratio of the weighted
/// node distances, from iteration 2 on, is below the target.
pub(crate) fn choose_theta(grid: &TimeGrid, trace: &[TraceEntry]) -> Option<f64> {
    let tail: Vec<&TraceEntry> = trace.iter().filter(|e| e.iteration >= 2).collect();
    if tail.len() < 2 {
        return None;
    }
    THETA_CANDIDATES.iter().copied().find(|&th| {
        tail.windows(2).all(|w| {
            let (a, b) = (weighted_sup(grid, &w[0].node_distances, th), weighted_sup(grid, &w[1].node_distances, th));
            a == 0.0 || b / a < THETA_TARGET_RATIO
        })
    })
}

pub(crate) fn reweight_trace(grid: &TimeGrid, trace: &mut [TraceEntry], theta: f64) {
    for e in trace {
        e.distance = weighted_sup(grid, &e.node_distances, theta);
    }
}

/// Iterate μ⁽ⁿ⁺¹⁾ = Φμ⁽ⁿ⁾ from μ⁽⁰⁾ ≡ γ with common random numbers until the
/// θ-weighted distance between successive iterates drops below `tol`.
pub fn picard_solve(field: &CoefficientField, gamma: &SubProbMeasure, config: &PicardConfig) -> Result<PicardOutcome> {
    let initial = ParticleEnsemble::sample(gamma, config.particles, config.seed)?;
    picard_solve_from(field, gamma, &initial, config)
}

/// As [`picard_solve`] with an explicit initial ensemble (e.g. stratified
/// draws from γ).
pub fn picard_solve_from(
    field: &CoefficientField,
    gamma: &SubProbMeasure,
    initial: &ParticleEnsemble,
    config: &PicardConfig,
) -> Result<PicardOutcome> {
    config.validate(field)?;
    if config.metric == MetricKind::WeightedVariation {
        return crate::girsanov::picard_reweighted(field, gamma, initial, config);
    }
    let base = config.base_distance(field.dim());
    let grid = config.grid;
    let opts = config.simulation();
    let mut prev = MeasureFlow::constant(grid, gamma);
    let mut trace: Vec<TraceEntry> = Vec::new();
    let clock = Instant::now();
    let mut theta = config.theta;
    for n in 1..=config.max_iter {
        let next = simulate_flow(field, &prev, initial, &opts)?.flow;
        let nd = node_distances(&next, &prev, &base)?;
        trace.push(TraceEntry {
            iteration: n,
            distance: 0.0,
            wall_time: clock.elapsed().as_secs_f64(),
            node_distances: nd,
            refreshes: 0,
        });
        if config.theta.is_none() {
            theta = choose_theta(&grid, &trace).or(theta);
        }
        let th = theta.unwrap_or(0.0);
        reweight_trace(&grid, &mut trace, th);
        if trace.last().unwrap().distance < config.tol {
            return Ok(PicardOutcome {
                flow: next,
                trace,
                theta: th,
                converged_at: n,
            });
        }
        prev = next;
    }
    let last = trace.last().map(|e| e.distance).unwrap_or(f64::NAN);
    Err(Error::NonConvergence {
        iterations: config.max_iter,
        last_distance: last,
        trace: trace.iter().map(|e| e.distance).collect(),
    })
}

/// Inputs and outputs of one contraction estimate.
#[derive(Clone, Debug)]
pub struct ContractionEstimate {
    pub ratio: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub theta: f64,
}

/// The input flows are μⁱ = Φ_{γⁱ}(γⁱ held constant); Φ is then applied to
/// both with the initial law γ¹ and common noise. Returns
/// d_θ(Φμ¹, Φμ²)/d_θ(μ¹, μ²).
pub fn estimate_contraction(
    field: &CoefficientField,
    gamma1: &SubProbMeasure,
    gamma2: &SubProbMeasure,
    config: &PicardConfig,
    theta: f64,
) -> Result<ContractionEstimate> {
    let flows = contraction_inputs(field, gamma1, gamma2, config)?;
    contraction_ratio(field, &flows, config, theta)
}

/// The two input flows and the shared initial ensemble for
/// [`contraction_ratio`]; lets one pair of inputs serve several θ.
pub struct ContractionInputs {
    pub mu1: MeasureFlow,
    pub mu2: MeasureFlow,
    pub image1: MeasureFlow,
    pub image2: MeasureFlow,
}

pub fn contraction_inputs(
    field: &CoefficientField,
    gamma1: &SubProbMeasure,
    gamma2: &SubProbMeasure,
    config: &PicardConfig,
) -> Result<ContractionInputs> {
    config.validate(field)?;
    let opts = config.simulation();
    let grid = config.grid;
    let e1 = ParticleEnsemble::sample(gamma1, config.particles, config.seed)?;
    let e2 = ParticleEnsemble::sample(gamma2, config.particles, config.seed)?;
    let mu1 = simulate_flow(field, &MeasureFlow::constant(grid, gamma1), &e1, &opts)?.flow;
    let mu2 = simulate_flow(field, &MeasureFlow::constant(grid, gamma2), &e2, &opts)?.flow;
    let image1 = simulate_flow(field, &mu1, &e1, &opts)?.flow;
    let image2 = simulate_flow(field, &mu2, &e1, &opts)?.flow;
    Ok(ContractionInputs { mu1, mu2, image1, image2 })
}

pub fn contraction_ratio(field: &CoefficientField, inp: &ContractionInputs, config: &PicardConfig, theta: f64) -> Result<ContractionEstimate> {
    let base = config.base_distance(field.dim());
    let grid = inp.mu1.grid();
    let den = weighted_sup(grid, &node_distances(&inp.mu1, &inp.mu2, &base)?, theta);
    if den < 10.0 * config.tol {
        return Err(Error::Indeterminate {
            denominator: den,
            threshold: 10.0 * config.tol,
        });
    }
    let num = weighted_sup(grid, &node_distances(&inp.image1, &inp.image2, &base)?, theta);
    Ok(ContractionEstimate {
        ratio: num / den,
        numerator: num,
        denominator: den,
        theta,
    })
}

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// A C² test function vanishing on ∂O.
#[derive(Clone)]
pub struct DirichletTestFunction {
    dim: usize,
    f: ScalarFn,
    gradient: VectorFn,
    hessian: VectorFn,
}

impl std::fmt::Debug for DirichletTestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DirichletTestFunction").field("dim", &self.dim).finish()
    }
}

/// Tolerance for the boundary-vanishing check.
pub const DIRICHLET_TOL: f64 = 1e-9;

impl DirichletTestFunction {
    /// Checked against the boundary of `domain` at sampled points.
    pub fn new(
        domain: &Domain,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        hessian: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        let tf = Self {
            dim: domain.dim(),
            f: Arc::new(f),
            gradient: Arc::new(gradient),
            hessian: Arc::new(hessian),
        };
        tf.check_boundary(domain, 256)?;
        Ok(tf)
    }

    pub fn zero(domain: &Domain) -> Result<Self> {
        Self::new(domain, |_| 0.0, |_, g| g.fill(0.0), |_, h| h.fill(0.0))
    }

    /// sin(π(x − a)/(b − a)) on (a, b).
    pub fn sine(domain: &Domain) -> Result<Self> {
        let crate::geometry::DomainKind::Interval { a, b } = *domain.kind() else {
            return invalid("the sine test function needs an interval domain");
        };
        let k = std::f64::consts::PI / (b - a);
        Self::new(
            domain,
            move |x| (k * (x[0] - a)).sin(),
            move |x, g| g[0] = k * (k * (x[0] - a)).cos(),
            move |x, h| h[0] = -k * k * (k * (x[0] - a)).sin(),
        )
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    fn check_boundary(&self, domain: &Domain, samples: usize) -> Result<()> {
        for k in 0..samples {
            let mut s = CounterStream::new(0xD1, k as u64, 0);
            let Some(p) = domain.sample_boundary(&mut s) else {
                break;
            };
            let v = self.value(&p);
            if !(v.abs() <= DIRICHLET_TOL) {
                return Err(Error::InvalidTestFunction(format!("f = {v:e} at boundary point {p:?}")));
            }
        }
        Ok(())
    }
}

/// max_k |μ_{t_k}(f) − μ₀(f) − ∫₀^{t_k} μ_s(L_{s,μ_s} f) ds| with the time
/// integral by the trapezoid rule on the flow grid and
/// L = ½ tr(σσ*∇²) + b·∇.
pub fn fokker_planck_residual(flow: &MeasureFlow, field: &CoefficientField, f: &DirichletTestFunction) -> Result<f64> {
    let d = field.dim();
    let m = field.noise_dim();
    if f.dim != d || flow.domain().dim() != d {
        return invalid("test function, flow and coefficients disagree on dimension");
    }
    let grid = flow.grid();
    let mut lf = Vec::with_capacity(grid.nodes());
    let mut mf = Vec::with_capacity(grid.nodes());
    for k in 0..grid.nodes() {
        let mu = flow.at(k);
        let t = grid.time(k);
        let frozen = field.freeze(mu)?;
        let (mut b, mut s, mut g, mut h) = (vec![0.0; d], vec![0.0; d * m], vec![0.0; d], vec![0.0; d * d]);
        let mut acc = 0.0;
        let mut val = 0.0;
        for (_, x, w) in mu.interior() {
            frozen.drift(t, x, &mut b);
            frozen.diffusion(t, x, &mut s);
            (f.gradient)(x, &mut g);
            (f.hessian)(x, &mut h);
            let mut tr = 0.0;
            for i in 0..d {
                for l in 0..d {
                    let a: f64 = (0..m).map(|j| s[i * m + j] * s[l * m + j]).sum();
                    tr += a * h[i * d + l];
                }
            }
            let drift: f64 = b.iter().zip(&g).map(|(p, q)| p * q).sum();
            acc += w * (0.5 * tr + drift);
            val += w * f.value(x);
        }
        lf.push(acc);
        mf.push(val);
    }
    let mut integral = 0.0;
    let mut worst = 0.0f64;
    for k in 1..grid.nodes() {
        integral += 0.5 * (lf[k - 1] + lf[k]) * (grid.time(k) - grid.time(k - 1));
        worst = worst.max((mf[k] - mf[0] - integral).abs());
    }
    Ok(worst)
}
