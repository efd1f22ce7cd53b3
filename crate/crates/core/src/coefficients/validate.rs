//! Monte Carlo falsification of the declared hypotheses.

use std::fmt;
use std::sync::Arc;

use super::{CoefficientField, Hypothesis};
use crate::error::{invalid, Result};
use crate::geometry::Domain;
use crate::measures::{LyapunovV, SubProbMeasure};
use crate::rng::CounterStream;
use crate::transport::{w1, w1_hat, weighted_variation};

/// Slack below which an observed excess does not count as a violation.
pub const VIOLATION_SLACK: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct ValidationOptions {
    pub samples: usize,
    pub seed: u64,
    /// Times are drawn uniformly from [0, t_max].
    pub t_max: f64,
    /// Weight for the tag-E Lipschitz row.
    pub v: Option<LyapunovV>,
    /// Atoms per random measure.
    pub atoms: usize,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            samples: 2000,
            seed: 0,
            t_max: 1.0,
            v: None,
            atoms: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub name: &'static str,
    /// Whether the row counts toward the verdict.
    pub enforced: bool,
    pub checked: usize,
    /// Largest left-hand side seen.
    pub max_lhs: f64,
    /// Largest lhs/rhs among samples with rhs > 0.
    pub worst_ratio: f64,
    /// Largest lhs − rhs.
    pub worst_excess: f64,
    /// Sample realizing the worst excess: (t, x, y).
    pub witness: Option<(f64, Vec<f64>, Vec<f64>)>,
    pub pass: bool,
}

impl CheckRow {
    fn new(name: &'static str, enforced: bool) -> Self {
        Self {
            name,
            enforced,
            checked: 0,
            max_lhs: f64::NEG_INFINITY,
            worst_ratio: f64::NEG_INFINITY,
            worst_excess: f64::NEG_INFINITY,
            witness: None,
            pass: true,
        }
    }

    fn record(&mut self, lhs: f64, rhs: f64, t: f64, x: &[f64], y: &[f64]) {
        self.checked += 1;
        self.max_lhs = self.max_lhs.max(lhs);
        if rhs > 0.0 {
            self.worst_ratio = self.worst_ratio.max(lhs / rhs);
        }
        let excess = lhs - rhs;
        if excess > self.worst_excess || excess.is_nan() {
            self.worst_excess = excess;
            self.witness = Some((t, x.to_vec(), y.to_vec()));
        }
        if !(excess <= VIOLATION_SLACK) {
            self.pass = false;
        }
    }
}

#[derive(Clone, Debug)]
pub struct HypothesisReport {
    pub tag: Hypothesis,
    pub rows: Vec<CheckRow>,
}

impl HypothesisReport {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| !r.enforced || r.pass)
    }

    pub fn row(&self, name: &str) -> Option<&CheckRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

impl fmt::Display for HypothesisReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rows {
            writeln!(
                f,
                "{:<14} {} checked={} max_lhs={:.6e} worst_ratio={:.6e} worst_excess={:.6e}{}",
                r.name,
                if r.pass { "PASS" } else { "FAIL" },
                r.checked,
                r.max_lhs,
                r.worst_ratio,
                r.worst_excess,
                if r.enforced { "" } else { " (informational)" }
            )?;
        }
        write!(f, "verdict {}", if self.pass() { "PASS" } else { "FAIL" })
    }
}

fn random_measure(dom: &Arc<Domain>, s: &mut CounterStream, atoms: usize) -> Result<SubProbMeasure> {
    let n = 1 + (s.uniform() * atoms as f64) as usize % atoms.max(1);
    let raw: Vec<f64> = (0..n).map(|_| s.uniform()).collect();
    let total: f64 = raw.iter().sum();
    let mass = if s.uniform() < 0.25 { 1.0 } else { s.uniform() };
    let mut pts = Vec::with_capacity(n);
    for w in raw {
        pts.push((dom.sample_interior(s)?, w / total * mass));
    }
    SubProbMeasure::from_atoms(dom.clone(), &pts)
}

/// Random reweighting on the same atoms, for the tag-E Lipschitz row.
fn perturbed(mu: &SubProbMeasure, s: &mut CounterStream) -> Result<SubProbMeasure> {
    let raw: Vec<f64> = mu.weights().iter().map(|w| w * (0.2 + 1.6 * s.uniform())).collect();
    let total: f64 = raw.iter().sum();
    let scale = if total > 1.0 { 1.0 / total } else { 1.0 };
    mu.reweighted(raw.into_iter().map(|w| w * scale).collect())
}

fn hs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Sample random (t, x, y, μ, ν) and compare against the declared
/// inequalities. Never fails on a violation; only on unusable input.
pub fn validate_hypotheses(field: &CoefficientField, domain: &Arc<Domain>, opts: &ValidationOptions) -> Result<HypothesisReport> {
    let d = field.dim();
    let m = field.noise_dim();
    if domain.dim() != d {
        return invalid("domain and coefficient dimensions differ");
    }
    if opts.samples == 0 {
        return invalid("samples must be positive");
    }
    let meta = field.meta();
    let v = opts.v.clone().unwrap_or_else(|| LyapunovV::constant_one(d));
    let mut mono = CheckRow::new("monotonicity", true);
    let mut growth = CheckRow::new("growth", false);
    let mut ellip = CheckRow::new("ellipticity", true);
    let mut gen = CheckRow::new("generator", true);
    let mut lip = CheckRow::new("lipschitz_v", meta.tag == Hypothesis::E);

    let (mut bx, mut by) = (vec![0.0; d], vec![0.0; d]);
    let (mut sx, mut sy) = (vec![0.0; d * m], vec![0.0; d * m]);
    for k in 0..opts.samples {
        let mut s = CounterStream::new(opts.seed, k as u64, 0);
        let t = opts.t_max * s.uniform();
        let x = domain.sample_interior(&mut s)?;
        let y = domain.sample_interior(&mut s)?;
        let mu = random_measure(domain, &mut s, opts.atoms)?;
        let nu = random_measure(domain, &mut s, opts.atoms)?;
        let (fm, fn_) = (field.freeze(&mu)?, field.freeze(&nu)?);
        let kt = (meta.k)(t);

        fm.drift(t, &x, &mut bx);
        fn_.drift(t, &y, &mut by);
        fm.diffusion(t, &x, &mut sx);
        fn_.diffusion(t, &y, &mut sy);
        let dist = match meta.tag {
            Hypothesis::A | Hypothesis::E => w1_hat(&mu, &nu)?,
            Hypothesis::B => w1(&mu, &nu)?,
        };
        let inner: f64 = (0..d).map(|i| (bx[i] - by[i]) * (x[i] - y[i])).sum();
        let dxy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        mono.record(2.0 * inner + hs_diff(&sx, &sy), kt * (sq(&dxy) + dist * dist), t, &x, &y);

        let bxx: f64 = bx.iter().zip(&x).map(|(b, xi)| b * xi).sum();
        let extra = if meta.tag == Hypothesis::B { mu.first_moment().powi(2) } else { 0.0 };
        growth.record(2.0 * bxx + sq(&sx), kt * (1.0 + sq(&x) + extra), t, &x, &x);

        // Band conditions at a point resampled until it lies near ∂O.
        let mut z = x.clone();
        for _ in 0..64 {
            if domain.in_band(&z)? {
                break;
            }
            z = domain.sample_interior(&mut s)?;
        }
        if domain.in_band(&z)? {
            let alpha = (meta.alpha)(mu.first_moment());
            let grad = domain.distance_gradient(&z);
            let hess = domain.distance_hessian(&z);
            fm.drift(t, &z, &mut bx);
            fm.diffusion(t, &z, &mut sx);
            let proj: f64 = (0..m)
                .map(|j| (0..d).map(|i| sx[i * m + j] * grad[i]).sum::<f64>().powi(2))
                .sum();
            let inv = if proj > 0.0 { 1.0 / proj } else { f64::INFINITY };
            ellip.record(inv, alpha, t, &z, &z);
            let mut tr = 0.0;
            for i in 0..d {
                for l in 0..d {
                    let a: f64 = (0..m).map(|j| sx[i * m + j] * sx[l * m + j]).sum();
                    tr += a * hess[i * d + l];
                }
            }
            let lrho = 0.5 * tr + bx.iter().zip(&grad).map(|(b, g)| b * g).sum::<f64>();
            gen.record(lrho, alpha, t, &z, &z);
        }

        if meta.tag == Hypothesis::E {
            let nu2 = perturbed(&mu, &mut s)?;
            let f2 = field.freeze(&nu2)?;
            fm.drift(t, &x, &mut bx);
            f2.drift(t, &x, &mut by);
            let gap = hs_diff(&bx, &by).sqrt();
            lip.record(gap, meta.kappa * weighted_variation(&mu, &nu2, &v)?, t, &x, &x);
        }
    }
    let mut rows = vec![mono, growth, ellip, gen];
    if meta.tag == Hypothesis::E {
        rows.push(lip);
    }
    Ok(HypothesisReport { tag: meta.tag, rows })
}
