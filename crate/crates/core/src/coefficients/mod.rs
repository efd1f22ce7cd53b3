//! Coefficient fields (b, σ) with measure dependence and the hypothesis
//! metadata the theory attaches to them.
//!
//! A field is evaluated against a fixed snapshot μ through [`Frozen`], which
//! lets measure functionals be precomputed once per grid interval.

pub mod expr;
pub mod validate;

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::measures::SubProbMeasure;

pub use expr::Expr;
pub use validate::{validate_hypotheses, CheckRow, HypothesisReport, ValidationOptions};

/// Which family of hypotheses the field claims.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hypothesis {
    /// Monotone in Ŵ₁, (A₁)/(A₂).
    A,
    /// Monotone in W₁, (B₁)/(B₂).
    B,
    /// Distribution-free noise and ‖·‖_V-Lipschitz drift, (E).
    E,
}

impl Hypothesis {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Self::A),
            "B" => Ok(Self::B),
            "E" => Ok(Self::E),
            _ => invalid(format!("unknown hypothesis tag `{s}`")),
        }
    }
}

pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Declared constants: K(t), α (as a function of ‖μ‖₁; constant when
/// bounded) and κ.
#[derive(Clone)]
pub struct Metadata {
    pub tag: Hypothesis,
    pub k: TimeFn,
    pub alpha: TimeFn,
    pub kappa: f64,
}

impl fmt::Debug for Metadata {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Metadata")
            .field("tag", &self.tag)
            .field("k(0)", &(self.k)(0.0))
            .field("alpha(0)", &(self.alpha)(0.0))
            .field("kappa", &self.kappa)
            .finish()
    }
}

impl Metadata {
    pub fn new(tag: Hypothesis, k: f64, alpha: f64, kappa: f64) -> Self {
        Self {
            tag,
            k: Arc::new(move |_| k),
            alpha: Arc::new(move |_| alpha),
            kappa,
        }
    }
}

/// (b, σ) evaluated against one frozen measure.
pub trait Frozen: Send + Sync {
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]);

    /// Row-major d×m matrix.
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]);

    /// b = b⁽⁰⁾ + b⁽¹⁾; by default everything is in the regular part.
    fn drift_parts(&self, t: f64, x: &[f64], singular: &mut [f64], regular: &mut [f64]) {
        singular.fill(0.0);
        self.drift(t, x, regular);
    }
}

/// A coefficient family. Implementations build a [`Frozen`] per snapshot.
pub trait Model: Send + Sync {
    fn dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    /// σ does not depend on μ when false.
    fn diffusion_depends_on_measure(&self) -> bool;
    /// Neither b nor σ depends on μ.
    fn interaction_free(&self) -> bool;
    fn freeze<'a>(&'a self, mu: &'a SubProbMeasure) -> Result<Box<dyn Frozen + 'a>>;
}

#[derive(Clone)]
pub struct CoefficientField {
    name: String,
    model: Arc<dyn Model>,
    meta: Metadata,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("meta", &self.meta)
            .finish()
    }
}

impl CoefficientField {
    pub fn new(name: impl Into<String>, model: Arc<dyn Model>, meta: Metadata) -> Self {
        Self {
            name: name.into(),
            model,
            meta,
        }
    }

    /// b(x) = slope·x + shift, σ = sigma·I.
    pub fn linear(dim: usize, slope: f64, shift: Vec<f64>, sigma: f64, meta: Metadata) -> Result<Self> {
        if shift.len() != dim {
            return invalid("shift has the wrong dimension");
        }
        Ok(Self::new("linear", Arc::new(Linear { dim, slope, shift, sigma }), meta))
    }

    /// b(x, μ) = −βx + λ∫κ(x − y)μ(dy), σ = sigma·I.
    pub fn mean_field(dim: usize, beta: f64, lambda: f64, kernel: Kernel, sigma: f64, meta: Metadata) -> Result<Self> {
        if dim == 0 {
            return invalid("dimension must be positive");
        }
        Ok(Self::new(
            "mean_field",
            Arc::new(MeanField {
                dim,
                beta,
                lambda,
                kernel,
                sigma,
            }),
            meta,
        ))
    }

    /// b(x) = 2√x, σ(x) = 2x on (0, ∞).
    pub fn cir_square() -> Self {
        Self::new("cir", Arc::new(CirSquare), Metadata::new(Hypothesis::A, 0.0, 1.0, 0.0))
    }

    /// Coefficients written in the expression language: `drift` has d
    /// entries, `diffusion` d·m entries in row-major order.
    pub fn from_expressions(drift: &[&str], diffusion: &[&str], noise_dim: usize, meta: Metadata) -> Result<Self> {
        let dim = drift.len();
        if dim == 0 || noise_dim == 0 || diffusion.len() != dim * noise_dim {
            return invalid("expression field needs d drift and d·m diffusion entries");
        }
        let drift: Vec<Expr> = drift.iter().map(|s| Expr::parse(s)).collect::<Result<_>>()?;
        let diffusion: Vec<Expr> = diffusion.iter().map(|s| Expr::parse(s)).collect::<Result<_>>()?;
        if drift.iter().chain(&diffusion).any(|e| e.max_coordinate() > dim) {
            return invalid(format!("expression references a coordinate beyond dimension {dim}"));
        }
        Ok(Self::new(
            "expression",
            Arc::new(Expressions {
                dim,
                noise_dim,
                drift,
                diffusion,
            }),
            meta,
        ))
    }

    /// Coefficients given by closures of (t, x, μ).
    pub fn from_fn<B, S>(dim: usize, noise_dim: usize, drift: B, diffusion: S, diffusion_uses_measure: bool, interaction_free: bool, meta: Metadata) -> Self
    where
        B: Fn(f64, &[f64], &SubProbMeasure, &mut [f64]) + Send + Sync + 'static,
        S: Fn(f64, &[f64], &SubProbMeasure, &mut [f64]) + Send + Sync + 'static,
    {
        Self::new(
            "closure",
            Arc::new(Closures {
                dim,
                noise_dim,
                drift: Box::new(drift),
                diffusion: Box::new(diffusion),
                diffusion_uses_measure,
                interaction_free,
            }),
            meta,
        )
    }

    /// The same field with a constant vector added to the drift.
    pub fn with_drift_shift(&self, shift: Vec<f64>) -> Result<Self> {
        if shift.len() != self.dim() {
            return invalid("shift has the wrong dimension");
        }
        Ok(Self {
            name: format!("{}+shift", self.name),
            model: Arc::new(Shifted {
                inner: self.model.clone(),
                shift,
            }),
            meta: self.meta.clone(),
        })
    }

    pub fn with_metadata(mut self, meta: Metadata) -> Self {
        self.meta = meta;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn meta(&self) -> &Metadata {
        &self.meta
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.model.noise_dim()
    }

    pub fn diffusion_depends_on_measure(&self) -> bool {
        self.model.diffusion_depends_on_measure()
    }

    pub fn interaction_free(&self) -> bool {
        self.model.interaction_free()
    }

    pub fn freeze<'a>(&'a self, mu: &'a SubProbMeasure) -> Result<Box<dyn Frozen + 'a>> {
        if mu.dim() != self.dim() {
            return invalid("measure and coefficient dimensions differ");
        }
        self.model.freeze(mu)
    }
}

fn identity_scaled(out: &mut [f64], d: usize, s: f64) {
    out.fill(0.0);
    for i in 0..d {
        out[i * d + i] = s;
    }
}

struct Linear {
    dim: usize,
    slope: f64,
    shift: Vec<f64>,
    sigma: f64,
}

impl Frozen for Linear {
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        for i in 0..self.dim {
            out[i] = self.slope * x[i] + self.shift[i];
        }
    }

    fn diffusion(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        identity_scaled(out, self.dim, self.sigma);
    }
}

impl Model for Linear {
    fn dim(&self) -> usize {
        self.dim
    }
    fn noise_dim(&self) -> usize {
        self.dim
    }
    fn diffusion_depends_on_measure(&self) -> bool {
        false
    }
    fn interaction_free(&self) -> bool {
        true
    }
    fn freeze<'a>(&'a self, _mu: &'a SubProbMeasure) -> Result<Box<dyn Frozen + 'a>> {
        Ok(Box::new(Linear {
            dim: self.dim,
            slope: self.slope,
            shift: self.shift.clone(),
            sigma: self.sigma,
        }))
    }
}

/// Interaction kernels for the mean-field family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kernel {
    /// ∫ 1∧|x − y| μ(dy), added to every component.
    TruncatedDistance,
    /// μ(O).
    Mass,
    /// ∫ (y − x) μ(dy), componentwise attraction.
    Linear,
    /// ∫ exp(−|x − y|²/(2w²)) μ(dy) with width w.
    Gaussian { width: f64 },
    /// ∫ (1 + |y|²) ∧ cap μ(dy).
    CappedMoment { cap: f64 },
}

struct MeanField {
    dim: usize,
    beta: f64,
    lambda: f64,
    kernel: Kernel,
    sigma: f64,
}

/// Sorted 1D atom cloud with prefix sums and a bucket index, so that
/// ∫ 1∧|x − y| μ(dy) costs O(1) expected per evaluation.
struct SortedCloud {
    ys: Vec<f64>,
    cw: Vec<f64>,
    cwy: Vec<f64>,
    lo: f64,
    inv_h: f64,
    buckets: Vec<u32>,
}

impl SortedCloud {
    fn new(mu: &SubProbMeasure) -> Self {
        let mut pts: Vec<(f64, f64)> = mu.interior().map(|(_, x, w)| (x[0], w)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = pts.len();
        let mut cw = vec![0.0; n + 1];
        let mut cwy = vec![0.0; n + 1];
        for (i, &(y, w)) in pts.iter().enumerate() {
            cw[i + 1] = cw[i] + w;
            cwy[i + 1] = cwy[i] + w * y;
        }
        let ys: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let (lo, hi) = if n > 0 { (ys[0], ys[n - 1]) } else { (0.0, 0.0) };
        let nb = n.max(1);
        let span = (hi - lo).max(1e-300);
        let inv_h = nb as f64 / span;
        let mut buckets = vec![0u32; nb + 1];
        let mut i = 0usize;
        for (b, slot) in buckets.iter_mut().enumerate() {
            let edge = lo + b as f64 / inv_h;
            while i < n && ys[i] < edge {
                i += 1;
            }
            *slot = i as u32;
        }
        Self {
            ys,
            cw,
            cwy,
            lo,
            inv_h,
            buckets,
        }
    }

    /// First index with ys[i] ≥ v.
    #[inline]
    fn lower_bound(&self, v: f64) -> usize {
        let n = self.ys.len();
        if n == 0 || v <= self.ys[0] {
            return 0;
        }
        if v > self.ys[n - 1] {
            return n;
        }
        let nb = self.buckets.len() - 1;
        let b = (((v - self.lo) * self.inv_h) as usize).min(nb);
        let mut i = self.buckets[b] as usize;
        // Bucket starts may lag v by floating-point slop; walk either way.
        while i > 0 && self.ys[i - 1] >= v {
            i -= 1;
        }
        while i < n && self.ys[i] < v {
            i += 1;
        }
        i
    }

    /// ∫ 1∧|x − y| μ(dy).
    #[inline]
    fn truncated_distance(&self, x: f64) -> f64 {
        let n = self.ys.len();
        if n == 0 {
            return 0.0;
        }
        let l = self.lower_bound(x - 1.0);
        let m = self.lower_bound(x);
        let r = self.lower_bound(x + 1.0);
        let total = self.cw[n];
        let left = x * (self.cw[m] - self.cw[l]) - (self.cwy[m] - self.cwy[l]);
        let right = (self.cwy[r] - self.cwy[m]) - x * (self.cw[r] - self.cw[m]);
        let far = total - (self.cw[r] - self.cw[l]);
        left + right + far
    }
}

struct FrozenMeanField<'a> {
    f: &'a MeanField,
    mu: &'a SubProbMeasure,
    cloud: Option<SortedCloud>,
    constant: f64,
    mean: Vec<f64>,
}

impl Frozen for FrozenMeanField<'_> {
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let f = self.f;
        let scalar = match f.kernel {
            Kernel::TruncatedDistance => match &self.cloud {
                Some(c) => c.truncated_distance(x[0]),
                None => self
                    .mu
                    .interior()
                    .map(|(_, y, w)| w * dist(x, y).min(1.0))
                    .sum(),
            },
            Kernel::Mass | Kernel::CappedMoment { .. } => self.constant,
            Kernel::Gaussian { width } => {
                let s = 2.0 * width * width;
                self.mu
                    .interior()
                    .map(|(_, y, w)| {
                        let d = dist(x, y);
                        w * (-d * d / s).exp()
                    })
                    .sum()
            }
            Kernel::Linear => 0.0,
        };
        for i in 0..f.dim {
            let inter = if f.kernel == Kernel::Linear {
                self.mean[i] - self.constant * x[i]
            } else {
                scalar
            };
            out[i] = -f.beta * x[i] + f.lambda * inter;
        }
    }

    fn diffusion(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        identity_scaled(out, self.f.dim, self.f.sigma);
    }
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

impl Model for MeanField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn noise_dim(&self) -> usize {
        self.dim
    }
    fn diffusion_depends_on_measure(&self) -> bool {
        false
    }
    fn interaction_free(&self) -> bool {
        self.lambda == 0.0
    }
    fn freeze<'a>(&'a self, mu: &'a SubProbMeasure) -> Result<Box<dyn Frozen + 'a>> {
        let cloud = (self.kernel == Kernel::TruncatedDistance && self.dim == 1).then(|| SortedCloud::new(mu));
        let constant = match self.kernel {
            Kernel::Mass | Kernel::Linear => mu.mass(),
            Kernel::CappedMoment { cap } => mu.integrate(|y| (1.0 + y.iter().map(|v| v * v).sum::<f64>()).min(cap))?,
            _ => 0.0,
        };
        let mut mean = vec![0.0; self.dim];
        if self.kernel == Kernel::Linear {
            for (_, y, w) in mu.interior() {
                for i in 0..self.dim {
                    mean[i] += w * y[i];
                }
            }
        }
        Ok(Box::new(FrozenMeanField {
            f: self,
            mu,
            cloud,
            constant,
            mean,
        }))
    }
}

struct CirSquare;

impl Frozen for CirSquare {
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = 2.0 * x[0].max(0.0).sqrt();
    }
    fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = 2.0 * x[0];
    }
}

impl Model for CirSquare {
    fn dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn diffusion_depends_on_measure(&self) -> bool {
        false
    }
    fn interaction_free(&self) -> bool {
        true
    }
    fn freeze<'a>(&'a self, _mu: &'a SubProbMeasure) -> Result<Box<dyn Frozen + 'a>> {
        Ok(Box::new(CirSquare))
    }
}

struct Expressions {
    dim: usize,
    noise_dim: usize,
    drift: Vec<Expr>,
    diffusion: Vec<Expr>,
}

struct FrozenExpressions<'a> {
    f: &'a Expressions,
    mu: &'a SubProbMeasure,
    drift: Vec<expr::FrozenIntegrals>,
    diffusion: Vec<expr::FrozenIntegrals>,
}

impl Frozen for FrozenExpressions<'_> {
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        for (i, e) in self.f.drift.iter().enumerate() {
            out[i] = e.eval(t, x, self.mu, &self.drift[i]);
        }
    }
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        for (i, e) in self.f.diffusion.iter().enumerate() {
            out[i] = e.eval(t, x, self.mu, &self.diffusion[i]);
        }
    }
}

impl Model for Expressions {
    fn dim(&self) -> usize {
        self.dim
    }
    fn noise_dim(&self) -> usize {
        self.noise_dim
    }
    fn diffusion_depends_on_measure(&self) -> bool {
        self.diffusion.iter().any(Expr::has_integrals)
    }
    fn interaction_free(&self) -> bool {
        !self.drift.iter().chain(&self.diffusion).any(Expr::has_integrals)
    }
    fn freeze<'a>(&'a self, mu: &'a SubProbMeasure) -> Result<Box<dyn Frozen + 'a>> {
        Ok(Box::new(FrozenExpressions {
            f: self,
            mu,
            drift: self.drift.iter().map(|e| e.freeze(mu)).collect(),
            diffusion: self.diffusion.iter().map(|e| e.freeze(mu)).collect(),
        }))
    }
}

struct Shifted {
    inner: Arc<dyn Model>,
    shift: Vec<f64>,
}

struct FrozenShifted<'a> {
    inner: Box<dyn Frozen + 'a>,
    shift: &'a [f64],
}

impl Frozen for FrozenShifted<'_> {
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.inner.drift(t, x, out);
        for (o, s) in out.iter_mut().zip(self.shift) {
            *o += s;
        }
    }
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.inner.diffusion(t, x, out)
    }
}

impl Model for Shifted {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn noise_dim(&self) -> usize {
        self.inner.noise_dim()
    }
    fn diffusion_depends_on_measure(&self) -> bool {
        self.inner.diffusion_depends_on_measure()
    }
    fn interaction_free(&self) -> bool {
        self.inner.interaction_free()
    }
    fn freeze<'a>(&'a self, mu: &'a SubProbMeasure) -> Result<Box<dyn Frozen + 'a>> {
        Ok(Box::new(FrozenShifted {
            inner: self.inner.freeze(mu)?,
            shift: &self.shift,
        }))
    }
}

type FieldFn = Box<dyn Fn(f64, &[f64], &SubProbMeasure, &mut [f64]) + Send + Sync>;

struct Closures {
    dim: usize,
    noise_dim: usize,
    drift: FieldFn,
    diffusion: FieldFn,
    diffusion_uses_measure: bool,
    interaction_free: bool,
}

struct FrozenClosures<'a> {
    f: &'a Closures,
    mu: &'a SubProbMeasure,
}

impl Frozen for FrozenClosures<'_> {
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.f.drift)(t, x, self.mu, out)
    }
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.f.diffusion)(t, x, self.mu, out)
    }
}

impl Model for Closures {
    fn dim(&self) -> usize {
        self.dim
    }
    fn noise_dim(&self) -> usize {
        self.noise_dim
    }
    fn diffusion_depends_on_measure(&self) -> bool {
        self.diffusion_uses_measure
    }
    fn interaction_free(&self) -> bool {
        self.interaction_free
    }
    fn freeze<'a>(&'a self, mu: &'a SubProbMeasure) -> Result<Box<dyn Frozen + 'a>> {
        Ok(Box::new(FrozenClosures { f: self, mu }))
    }
}
