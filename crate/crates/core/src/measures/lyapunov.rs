use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::geometry::Domain;
use crate::rng::CounterStream;

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// A weight V ≥ 1 of class 𝒱 together with its constants K and ε.
///
/// `cap` truncates V when it is used as a weight on unbounded domains; the
/// derivatives are always those of the untruncated V.
#[derive(Clone)]
pub struct LyapunovV {
    dim: usize,
    value: ScalarFn,
    gradient: VectorFn,
    hessian: VectorFn,
    k: f64,
    eps: f64,
    cap: Option<f64>,
}

impl fmt::Debug for LyapunovV {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LyapunovV")
            .field("dim", &self.dim)
            .field("k", &self.k)
            .field("eps", &self.eps)
            .field("cap", &self.cap)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Debug)]
pub struct LyapunovReport {
    pub min_value: f64,
    /// Largest observed sup_{B(x,ε)}(|∇V| + ‖∇²V‖) / (K V(x)).
    pub worst_ratio: f64,
    pub witness: Option<Vec<f64>>,
    pub pass: bool,
}

impl LyapunovV {
    /// `hessian` writes a row-major d×d matrix.
    pub fn new(
        dim: usize,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        hessian: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        k: f64,
        eps: f64,
    ) -> Result<Self> {
        if dim == 0 || !(k > 0.0) || !(eps > 0.0) {
            return invalid("LyapunovV needs dim ≥ 1 and K, ε > 0");
        }
        Ok(Self {
            dim,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            hessian: Arc::new(hessian),
            k,
            eps,
            cap: None,
        })
    }

    /// V ≡ 1.
    pub fn constant_one(dim: usize) -> Self {
        Self::new(
            dim,
            |_| 1.0,
            |_, g| g.fill(0.0),
            |_, h| h.fill(0.0),
            1.0,
            1.0,
        )
        .expect("valid constants")
    }

    /// V(x) = 1 + |x|², with ε = 1 and K = 4 + 2√d (Frobenius Hessian norm).
    pub fn quadratic(dim: usize) -> Self {
        let d = dim;
        Self::new(
            dim,
            |x| 1.0 + x.iter().map(|v| v * v).sum::<f64>(),
            |x, g| {
                for (gi, xi) in g.iter_mut().zip(x) {
                    *gi = 2.0 * xi;
                }
            },
            move |_, h| {
                h.fill(0.0);
                for i in 0..d {
                    h[i * d + i] = 2.0;
                }
            },
            4.0 + 2.0 * (dim as f64).sqrt(),
            1.0,
        )
        .expect("valid constants")
    }

    pub fn with_cap(mut self, cap: f64) -> Result<Self> {
        if !(cap >= 1.0) {
            return invalid("V cap must be at least 1");
        }
        self.cap = Some(cap);
        Ok(self)
    }

    pub fn without_cap(&self) -> Self {
        let mut v = self.clone();
        v.cap = None;
        v
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn cap(&self) -> Option<f64> {
        self.cap
    }

    /// Untruncated V(x).
    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    /// V(x) ∧ cap when a cap is set.
    #[inline]
    pub fn weight(&self, x: &[f64]) -> f64 {
        let v = (self.value)(x);
        match self.cap {
            Some(c) => v.min(c),
            None => v,
        }
    }

    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        (self.gradient)(x, out)
    }

    pub fn hessian(&self, x: &[f64], out: &mut [f64]) {
        (self.hessian)(x, out)
    }

    /// Spot-check V ≥ 1 and the class-𝒱 growth bound at `samples` interior
    /// points, probing each ε-ball at `probes` random points plus its centre.
    pub fn validate(&self, domain: &Domain, samples: usize, probes: usize, seed: u64) -> Result<LyapunovReport> {
        if domain.dim() != self.dim {
            return invalid("V and domain dimensions differ");
        }
        let d = self.dim;
        let mut g = vec![0.0; d];
        let mut h = vec![0.0; d * d];
        let mut y = vec![0.0; d];
        let mut report = LyapunovReport {
            min_value: f64::INFINITY,
            worst_ratio: 0.0,
            witness: None,
            pass: true,
        };
        for s in 0..samples as u64 {
            let mut rng = CounterStream::new(seed, s, 0);
            let x = domain.sample_interior(&mut rng)?;
            let vx = self.value(&x);
            report.min_value = report.min_value.min(vx);
            let mut sup = 0.0f64;
            for p in 0..=probes {
                if p == 0 {
                    y.copy_from_slice(&x);
                } else {
                    let mut dir: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
                    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
                    let r = self.eps * rng.uniform().powf(1.0 / d as f64);
                    for v in dir.iter_mut() {
                        *v *= r / norm;
                    }
                    for i in 0..d {
                        y[i] = x[i] + dir[i];
                    }
                }
                self.gradient(&y, &mut g);
                self.hessian(&y, &mut h);
                let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                let hn = h.iter().map(|v| v * v).sum::<f64>().sqrt();
                sup = sup.max(gn + hn);
            }
            let ratio = sup / (self.k * vx);
            if ratio > report.worst_ratio {
                report.worst_ratio = ratio;
                report.witness = Some(x.clone());
            }
        }
        report.pass = report.min_value >= 1.0 - 1e-12 && report.worst_ratio <= 1.0 + 1e-8;
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_in_class() {
        let dom = Domain::interval(-3.0, 3.0).unwrap();
        let r = LyapunovV::quadratic(1).validate(&dom, 500, 8, 1).unwrap();
        assert!(r.pass, "{r:?}");
        let ball = Domain::ball(vec![0.0, 0.0], 4.0).unwrap();
        assert!(LyapunovV::quadratic(2).validate(&ball, 300, 8, 2).unwrap().pass);
    }

    #[test]
    fn undersized_constant_fails() {
        let v = LyapunovV::quadratic(1);
        let tight = LyapunovV {
            k: 0.5,
            ..v
        };
        let dom = Domain::interval(-3.0, 3.0).unwrap();
        assert!(!tight.validate(&dom, 200, 4, 1).unwrap().pass);
    }

    #[test]
    fn cap_only_affects_weight() {
        let v = LyapunovV::quadratic(1).with_cap(10.0).unwrap();
        assert_eq!(v.weight(&[5.0]), 10.0);
        assert_eq!(v.value(&[5.0]), 26.0);
        assert_eq!(v.without_cap().weight(&[5.0]), 26.0);
    }
}
