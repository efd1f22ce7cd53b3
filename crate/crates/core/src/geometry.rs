//! Open domains O ⊂ ℝ^d, the boundary distance ρ_∂, the boundary
//! projection P_∂ and the band ∂_{r₀}O = {x ∈ Ō : ρ_∂(x) ≤ r₀}.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::rng::CounterStream;

pub type SignedDistanceFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type ProjectionFn = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;

/// Default absolute tolerance for boundary membership.
pub const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Clone)]
pub enum DomainKind {
    /// The open interval (a, b) in d = 1.
    Interval { a: f64, b: f64 },
    /// The open ball B(center, radius).
    Ball { center: Vec<f64>, radius: f64 },
    /// {x : ⟨normal, x⟩ > offset}, `normal` is stored with unit length.
    HalfSpace { normal: Vec<f64>, offset: f64 },
    /// User-supplied domain. `signed_distance` must be positive inside O and
    /// vanish on ∂O. The projection is optional: domains used only for
    /// membership (the Girsanov engine) do not need one.
    Generic {
        dim: usize,
        signed_distance: SignedDistanceFn,
        projection: Option<ProjectionFn>,
        bounding_box: Option<(Vec<f64>, Vec<f64>)>,
    },
}

impl fmt::Debug for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainKind::Interval { a, b } => write!(f, "Interval({a}, {b})"),
            DomainKind::Ball { center, radius } => write!(f, "Ball({center:?}, {radius})"),
            DomainKind::HalfSpace { normal, offset } => {
                write!(f, "HalfSpace(normal={normal:?}, offset={offset})")
            }
            DomainKind::Generic { dim, .. } => write!(f, "Generic(dim={dim})"),
        }
    }
}

/// The domain O together with the band width r₀ and the anchor x₀ ∈ ∂O used
/// as the projection target outside the band.
#[derive(Clone, Debug)]
pub struct Domain {
    kind: DomainKind,
    r0: f64,
    anchor: Vec<f64>,
    tol: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Domain {
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return invalid(format!("interval needs finite a < b, got ({a}, {b})"));
        }
        let r0 = (0.25 * (b - a)).min(1.0);
        Ok(Self {
            kind: DomainKind::Interval { a, b },
            r0,
            anchor: vec![a],
            tol: BOUNDARY_TOL,
        })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() || !(radius > 0.0 && radius.is_finite()) {
            return invalid("ball needs a non-empty center and a positive finite radius");
        }
        let mut anchor = center.clone();
        anchor[0] += radius;
        Ok(Self {
            kind: DomainKind::Ball { center, radius },
            r0: (0.5 * radius).min(1.0),
            anchor,
            tol: BOUNDARY_TOL,
        })
    }

    pub fn half_space(normal: Vec<f64>, offset: f64) -> Result<Self> {
        let n = norm(&normal);
        if normal.is_empty() || !(n > 0.0 && n.is_finite()) || !offset.is_finite() {
            return invalid("half-space needs a non-zero finite normal and a finite offset");
        }
        let normal: Vec<f64> = normal.iter().map(|v| v / n).collect();
        let offset = offset / n;
        let anchor = normal.iter().map(|v| v * offset).collect();
        Ok(Self {
            kind: DomainKind::HalfSpace { normal, offset },
            r0: 1.0,
            anchor,
            tol: BOUNDARY_TOL,
        })
    }

    /// Generic domain from callables. `r0` is the user-asserted band width
    /// within which nearest boundary points are unique.
    pub fn generic(
        dim: usize,
        signed_distance: SignedDistanceFn,
        projection: Option<ProjectionFn>,
        bounding_box: Option<(Vec<f64>, Vec<f64>)>,
        r0: f64,
        anchor: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 || anchor.len() != dim {
            return invalid("generic domain: anchor dimension mismatch");
        }
        let d = Self {
            kind: DomainKind::Generic {
                dim,
                signed_distance,
                projection,
                bounding_box,
            },
            r0: 1.0,
            anchor: anchor.clone(),
            tol: BOUNDARY_TOL,
        };
        d.with_r0(r0)?.with_anchor(anchor)
    }

    pub fn with_r0(mut self, r0: f64) -> Result<Self> {
        if !(r0 > 0.0 && r0 <= 1.0) {
            return invalid(format!("band width r0 must lie in (0, 1], got {r0}"));
        }
        self.r0 = r0;
        Ok(self)
    }

    pub fn with_anchor(mut self, anchor: Vec<f64>) -> Result<Self> {
        if anchor.len() != self.dim() {
            return invalid("anchor dimension mismatch");
        }
        let sd = self.signed_distance(&anchor);
        if sd.abs() > self.tol {
            return invalid(format!(
                "anchor {anchor:?} is not on the boundary (signed distance {sd:e})"
            ));
        }
        self.anchor = anchor;
        Ok(self)
    }

    pub fn with_tolerance(mut self, tol: f64) -> Result<Self> {
        if !(tol >= 0.0 && tol.is_finite()) {
            return invalid("boundary tolerance must be a finite non-negative number");
        }
        self.tol = tol;
        Ok(self)
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            DomainKind::Interval { .. } => 1,
            DomainKind::Ball { center, .. } => center.len(),
            DomainKind::HalfSpace { normal, .. } => normal.len(),
            DomainKind::Generic { dim, .. } => *dim,
        }
    }

    pub fn is_bounded(&self) -> bool {
        match &self.kind {
            DomainKind::Interval { .. } | DomainKind::Ball { .. } => true,
            DomainKind::HalfSpace { .. } => false,
            DomainKind::Generic { bounding_box, .. } => bounding_box.is_some(),
        }
    }

    /// Whether two handles describe the same domain. Built-in kinds compare by
    /// parameters, generic ones by identity of their distance callable.
    pub fn same_as(&self, other: &Domain) -> bool {
        match (&self.kind, &other.kind) {
            (DomainKind::Interval { a, b }, DomainKind::Interval { a: a2, b: b2 }) => {
                a == a2 && b == b2
            }
            (
                DomainKind::Ball { center, radius },
                DomainKind::Ball {
                    center: c2,
                    radius: r2,
                },
            ) => center == c2 && radius == r2,
            (
                DomainKind::HalfSpace { normal, offset },
                DomainKind::HalfSpace {
                    normal: n2,
                    offset: o2,
                },
            ) => normal == n2 && offset == o2,
            (
                DomainKind::Generic {
                    signed_distance, ..
                },
                DomainKind::Generic {
                    signed_distance: s2,
                    ..
                },
            ) => Arc::ptr_eq(signed_distance, s2),
            _ => false,
        }
    }

    /// Signed distance: positive in O, zero on ∂O, negative outside Ō.
    #[inline]
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match &self.kind {
            DomainKind::Interval { a, b } => (x[0] - a).min(b - x[0]),
            DomainKind::Ball { center, radius } => {
                let r2: f64 = x.iter().zip(center).map(|(p, c)| (p - c) * (p - c)).sum();
                radius - r2.sqrt()
            }
            DomainKind::HalfSpace { normal, offset } => dot(normal, x) - offset,
            DomainKind::Generic {
                signed_distance, ..
            } => signed_distance(x),
        }
    }

    /// x ∈ O, i.e. strictly inside beyond the boundary tolerance.
    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        self.signed_distance(x) > self.tol
    }

    #[inline]
    pub fn on_boundary(&self, x: &[f64]) -> bool {
        self.signed_distance(x).abs() <= self.tol
    }

    /// ρ_∂(x) for x ∈ Ō.
    pub fn boundary_distance(&self, x: &[f64]) -> Result<f64> {
        let sd = self.signed_distance(x);
        if sd < -self.tol || sd.is_nan() {
            return Err(Error::DomainViolation {
                point: x.to_vec(),
                signed_distance: sd,
            });
        }
        Ok(sd.max(0.0))
    }

    pub fn in_band(&self, x: &[f64]) -> Result<bool> {
        Ok(self.boundary_distance(x)? <= self.r0)
    }

    /// The unique nearest boundary point, ignoring the band rule.
    pub fn nearest_boundary_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.kind {
            DomainKind::Interval { a, b } => {
                let (da, db) = (x[0] - a, b - x[0]);
                if da < db {
                    Ok(vec![*a])
                } else if db < da {
                    Ok(vec![*b])
                } else {
                    Err(Error::AmbiguousProjection { point: x.to_vec() })
                }
            }
            DomainKind::Ball { center, radius } => {
                let v: Vec<f64> = x.iter().zip(center).map(|(p, c)| p - c).collect();
                let r = norm(&v);
                if r == 0.0 {
                    return Err(Error::AmbiguousProjection { point: x.to_vec() });
                }
                Ok(center
                    .iter()
                    .zip(&v)
                    .map(|(c, vi)| c + radius * vi / r)
                    .collect())
            }
            DomainKind::HalfSpace { normal, offset } => {
                let s = dot(normal, x) - offset;
                Ok(x.iter().zip(normal).map(|(p, n)| p - s * n).collect())
            }
            DomainKind::Generic { projection, .. } => match projection {
                Some(p) => p(x),
                None => invalid("generic domain was constructed without a projection"),
            },
        }
    }

    /// P_∂x: nearest boundary point inside the band, the anchor x₀ outside.
    pub fn project_to_boundary(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.in_band(x)? {
            self.nearest_boundary_point(x)
        } else {
            Ok(self.anchor.clone())
        }
    }

    /// Inward unit normal ∇ρ_∂ at x (inside the band).
    pub fn distance_gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            DomainKind::Interval { a, b } => {
                if x[0] - a <= b - x[0] {
                    vec![1.0]
                } else {
                    vec![-1.0]
                }
            }
            DomainKind::Ball { center, .. } => {
                let v: Vec<f64> = x.iter().zip(center).map(|(p, c)| p - c).collect();
                let r = norm(&v).max(f64::MIN_POSITIVE);
                v.iter().map(|vi| -vi / r).collect()
            }
            DomainKind::HalfSpace { normal, .. } => normal.clone(),
            DomainKind::Generic { .. } => {
                let h = 1e-6;
                let mut g = vec![0.0; x.len()];
                let mut y = x.to_vec();
                for i in 0..x.len() {
                    y[i] = x[i] + h;
                    let fp = self.signed_distance(&y);
                    y[i] = x[i] - h;
                    let fm = self.signed_distance(&y);
                    y[i] = x[i];
                    g[i] = (fp - fm) / (2.0 * h);
                }
                g
            }
        }
    }

    /// ∇²ρ_∂ at x, row-major d×d.
    pub fn distance_hessian(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        match &self.kind {
            DomainKind::Interval { .. } | DomainKind::HalfSpace { .. } => vec![0.0; d * d],
            DomainKind::Ball { center, .. } => {
                let v: Vec<f64> = x.iter().zip(center).map(|(p, c)| p - c).collect();
                let r = norm(&v).max(f64::MIN_POSITIVE);
                let mut h = vec![0.0; d * d];
                for i in 0..d {
                    for j in 0..d {
                        let id = if i == j { 1.0 } else { 0.0 };
                        h[i * d + j] = -(id - v[i] * v[j] / (r * r)) / r;
                    }
                }
                h
            }
            DomainKind::Generic { .. } => {
                let h = 1e-4;
                let mut out = vec![0.0; d * d];
                let mut y = x.to_vec();
                let f0 = self.signed_distance(x);
                for i in 0..d {
                    for j in 0..d {
                        if i == j {
                            y[i] = x[i] + h;
                            let fp = self.signed_distance(&y);
                            y[i] = x[i] - h;
                            let fm = self.signed_distance(&y);
                            y[i] = x[i];
                            out[i * d + i] = (fp - 2.0 * f0 + fm) / (h * h);
                        } else {
                            let mut eval = |si: f64, sj: f64| {
                                y[i] = x[i] + si * h;
                                y[j] = x[j] + sj * h;
                                let v = self.signed_distance(&y);
                                y[i] = x[i];
                                y[j] = x[j];
                                v
                            };
                            let v =
                                eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0);
                            out[i * d + j] = v / (4.0 * h * h);
                        }
                    }
                }
                out
            }
        }
    }

    /// Locate the first boundary crossing on the chord from `from` (in O) to
    /// `to` (not in O). Returns the chord fraction λ ∈ [0, 1] and the exit
    /// point, placed exactly on ∂O for built-in kinds.
    pub fn chord_exit(&self, from: &[f64], to: &[f64]) -> (f64, Vec<f64>) {
        match &self.kind {
            DomainKind::Interval { a, b } => {
                let (x0, x1) = (from[0], to[0]);
                if x1 - a <= b - x1 {
                    let lam = ((x0 - a) / (x0 - x1)).clamp(0.0, 1.0);
                    (if lam.is_finite() { lam } else { 1.0 }, vec![*a])
                } else {
                    let lam = ((b - x0) / (x1 - x0)).clamp(0.0, 1.0);
                    (if lam.is_finite() { lam } else { 1.0 }, vec![*b])
                }
            }
            DomainKind::Ball { center, radius } => {
                let u: Vec<f64> = from.iter().zip(center).map(|(p, c)| p - c).collect();
                let w: Vec<f64> = to.iter().zip(from).map(|(q, p)| q - p).collect();
                let (aa, bb, cc) = (dot(&w, &w), 2.0 * dot(&u, &w), dot(&u, &u) - radius * radius);
                let lam = if aa > 0.0 {
                    let disc = (bb * bb - 4.0 * aa * cc).max(0.0);
                    ((-bb + disc.sqrt()) / (2.0 * aa)).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                let p: Vec<f64> = from.iter().zip(&w).map(|(p, wi)| p + lam * wi).collect();
                let v: Vec<f64> = p.iter().zip(center).map(|(p, c)| p - c).collect();
                let r = norm(&v);
                let exit = if r > 0.0 {
                    center.iter().zip(&v).map(|(c, vi)| c + radius * vi / r).collect()
                } else {
                    p
                };
                (lam, exit)
            }
            DomainKind::HalfSpace { normal, offset } => {
                let s0 = dot(normal, from) - offset;
                let s1 = dot(normal, to) - offset;
                let lam = if s0 > s1 { (s0 / (s0 - s1)).clamp(0.0, 1.0) } else { 1.0 };
                let p: Vec<f64> = from
                    .iter()
                    .zip(to)
                    .map(|(p, q)| p + lam * (q - p))
                    .collect();
                let s = dot(normal, &p) - offset;
                (lam, p.iter().zip(normal).map(|(pi, n)| pi - s * n).collect())
            }
            DomainKind::Generic { projection, .. } => {
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                let mut p = vec![0.0; from.len()];
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    for i in 0..p.len() {
                        p[i] = from[i] + mid * (to[i] - from[i]);
                    }
                    if self.signed_distance(&p) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                for i in 0..p.len() {
                    p[i] = from[i] + hi * (to[i] - from[i]);
                }
                let exit = match projection.as_ref().map(|f| f(&p)) {
                    Some(Ok(q)) => q,
                    _ => p,
                };
                (hi, exit)
            }
        }
    }

    /// Uniform-ish interior sample used by the hypothesis validators.
    /// Unbounded half-spaces are sampled within distance 5 of the boundary.
    pub fn sample_interior(&self, s: &mut CounterStream) -> Result<Vec<f64>> {
        let d = self.dim();
        for _ in 0..10_000 {
            let x = match &self.kind {
                DomainKind::Interval { a, b } => vec![a + (b - a) * s.uniform()],
                DomainKind::Ball { center, radius } => center
                    .iter()
                    .map(|c| c + radius * (2.0 * s.uniform() - 1.0))
                    .collect(),
                DomainKind::HalfSpace { normal, offset } => {
                    let mut x: Vec<f64> = (0..d).map(|_| 2.0 * s.normal()).collect();
                    let sx = dot(normal, &x) - offset;
                    let target = 5.0 * s.uniform();
                    for (xi, n) in x.iter_mut().zip(normal) {
                        *xi += (target - sx) * n;
                    }
                    x
                }
                DomainKind::Generic { bounding_box, .. } => match bounding_box {
                    Some((lo, hi)) => lo
                        .iter()
                        .zip(hi)
                        .map(|(l, h)| l + (h - l) * s.uniform())
                        .collect(),
                    None => return invalid("generic domain without bounding box cannot be sampled"),
                },
            };
            if self.contains(&x) {
                return Ok(x);
            }
        }
        invalid("could not sample an interior point")
    }

    /// A boundary sample point, when the kind admits one cheaply.
    pub fn sample_boundary(&self, s: &mut CounterStream) -> Option<Vec<f64>> {
        match &self.kind {
            DomainKind::Interval { a, b } => Some(vec![if s.uniform() < 0.5 { *a } else { *b }]),
            DomainKind::Ball { center, radius } => {
                let g: Vec<f64> = center.iter().map(|_| s.normal()).collect();
                let r = norm(&g).max(f64::MIN_POSITIVE);
                Some(center.iter().zip(&g).map(|(c, gi)| c + radius * gi / r).collect())
            }
            DomainKind::HalfSpace { .. } => {
                let x = self.sample_interior(s).ok()?;
                self.nearest_boundary_point(&x).ok()
            }
            DomainKind::Generic { projection, .. } => {
                projection.as_ref()?;
                let x = self.sample_interior(s).ok()?;
                self.nearest_boundary_point(&x).ok()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn boundary_distance_examples() {
        let unit = Domain::interval(0.0, 1.0).unwrap();
        assert!((unit.boundary_distance(&[0.3]).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(unit.boundary_distance(&[1.0]).unwrap(), 0.0);
        let ball = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert!((ball.boundary_distance(&[0.6, 0.0]).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn outside_point_is_a_domain_violation() {
        let unit = Domain::interval(0.0, 1.0).unwrap();
        assert!(matches!(
            unit.boundary_distance(&[1.1]),
            Err(Error::DomainViolation { .. })
        ));
        // within tolerance of the closure is fine
        assert_eq!(unit.boundary_distance(&[1.0 + 1e-10]).unwrap(), 0.0);
    }

    #[test]
    fn projection_examples() {
        let unit = Domain::interval(0.0, 1.0).unwrap().with_r0(0.4).unwrap();
        assert_eq!(unit.project_to_boundary(&[0.3]).unwrap(), vec![0.0]);
        let ball = Domain::ball(vec![0.0, 0.0], 1.0).unwrap().with_r0(0.5).unwrap();
        let p = ball.project_to_boundary(&[0.8, 0.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1].abs() < 1e-15);
        // outside the band the anchor is returned
        let narrow = Domain::interval(0.0, 1.0)
            .unwrap()
            .with_r0(0.1)
            .unwrap()
            .with_anchor(vec![0.0])
            .unwrap();
        assert_eq!(narrow.project_to_boundary(&[0.5]).unwrap(), vec![0.0]);
    }

    #[test]
    fn band_examples() {
        let unit = Domain::interval(0.0, 1.0).unwrap().with_r0(0.25).unwrap();
        assert!(unit.in_band(&[0.1]).unwrap());
        assert!(!unit.in_band(&[0.5]).unwrap());
        let ball = Domain::ball(vec![0.0, 0.0], 1.0).unwrap().with_r0(1.0).unwrap();
        assert!(ball.in_band(&[0.0, 0.0]).unwrap());
        assert!(ball.in_band(&[0.3, -0.2]).unwrap());
    }

    #[test]
    fn midpoint_tie_is_ambiguous() {
        let unit = Domain::interval(0.0, 1.0).unwrap().with_r0(1.0).unwrap();
        assert!(matches!(
            unit.project_to_boundary(&[0.5]),
            Err(Error::AmbiguousProjection { .. })
        ));
    }

    #[test]
    fn anchor_must_be_on_boundary() {
        assert!(Domain::interval(0.0, 1.0).unwrap().with_anchor(vec![0.5]).is_err());
        assert!(Domain::interval(0.0, 1.0).unwrap().with_r0(0.0).is_err());
        assert!(Domain::interval(0.0, 1.0).unwrap().with_r0(1.5).is_err());
    }

    #[test]
    fn boundary_parametrisations_have_zero_distance() {
        let ball = Domain::ball(vec![0.5, -1.0, 2.0], 1.5).unwrap();
        let mut s = CounterStream::new(3, 0, 0);
        for _ in 0..100 {
            let p = ball.sample_boundary(&mut s).unwrap();
            assert!(ball.signed_distance(&p).abs() < 1e-12);
            let q = ball.sample_interior(&mut s).unwrap();
            assert!(ball.signed_distance(&q) > 0.0);
        }
        let hs = Domain::half_space(vec![1.0, 1.0], 0.5).unwrap();
        for _ in 0..100 {
            let p = hs.sample_boundary(&mut s).unwrap();
            assert!(hs.signed_distance(&p).abs() < 1e-12);
        }
    }

    #[test]
    fn chord_exit_lands_on_boundary() {
        let unit = Domain::interval(0.0, 1.0).unwrap();
        let (lam, p) = unit.chord_exit(&[0.2], &[-0.2]);
        assert!((lam - 0.5).abs() < 1e-15);
        assert_eq!(p, vec![0.0]);
        let ball = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        let (lam, p) = ball.chord_exit(&[0.5, 0.0], &[1.5, 0.0]);
        assert!((lam - 0.5).abs() < 1e-12);
        assert!(ball.signed_distance(&p).abs() < 1e-12);
        let sd: SignedDistanceFn = Arc::new(|x: &[f64]| 1.0 - x[0].abs());
        let gen = Domain::generic(1, sd, None, None, 0.5, vec![1.0]).unwrap();
        let (lam, _) = gen.chord_exit(&[0.0], &[2.0]);
        assert!((lam - 0.5).abs() < 1e-12);
    }

    #[test]
    fn generic_projection_is_delegated() {
        let sd: SignedDistanceFn = Arc::new(|x: &[f64]| 1.0 - x[0].abs());
        let proj: ProjectionFn = Arc::new(|x: &[f64]| {
            if x[0] == 0.0 {
                Err(Error::AmbiguousProjection { point: x.to_vec() })
            } else {
                Ok(vec![x[0].signum()])
            }
        });
        let gen = Domain::generic(1, sd.clone(), Some(proj), None, 1.0, vec![1.0]).unwrap();
        assert_eq!(gen.project_to_boundary(&[-0.7]).unwrap(), vec![-1.0]);
        assert!(matches!(
            gen.project_to_boundary(&[0.0]),
            Err(Error::AmbiguousProjection { .. })
        ));
        let membership_only = Domain::generic(1, sd, None, None, 1.0, vec![1.0]).unwrap();
        assert!(membership_only.project_to_boundary(&[0.5]).is_err());
        assert!(membership_only.contains(&[0.5]));
    }

    fn builtins() -> Vec<Domain> {
        vec![
            Domain::interval(-1.0, 2.0).unwrap().with_r0(1.0).unwrap(),
            Domain::ball(vec![0.0, 0.0], 2.0).unwrap().with_r0(1.0).unwrap(),
            Domain::ball(vec![1.0, 0.0, -1.0], 1.0).unwrap().with_r0(0.9).unwrap(),
            Domain::half_space(vec![2.0, -1.0], 0.3).unwrap(),
        ]
    }

    proptest! {
        #[test]
        fn distance_projection_consistency(seed in any::<u64>()) {
            let mut s = CounterStream::new(seed, 0, 0);
            for dom in builtins() {
                let x = dom.sample_interior(&mut s).unwrap();
                let rho = dom.boundary_distance(&x).unwrap();
                if rho <= dom.r0() && rho > 1e-6 {
                    let p = dom.project_to_boundary(&x).unwrap();
                    let dist = norm(&x.iter().zip(&p).map(|(a, b)| a - b).collect::<Vec<_>>());
                    prop_assert!((dist - rho).abs() < 1e-12);
                    prop_assert!(dom.signed_distance(&p).abs() < 1e-12);
                    // idempotence
                    let pp = dom.project_to_boundary(&p).unwrap();
                    for (a, b) in p.iter().zip(&pp) {
                        prop_assert!((a - b).abs() < 1e-12);
                    }
                }
            }
        }

        #[test]
        fn distance_is_one_lipschitz(seed in any::<u64>()) {
            let mut s = CounterStream::new(seed, 1, 0);
            for dom in builtins() {
                let x = dom.sample_interior(&mut s).unwrap();
                let y = dom.sample_interior(&mut s).unwrap();
                let dxy = norm(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
                let (rx, ry) = (dom.boundary_distance(&x).unwrap(), dom.boundary_distance(&y).unwrap());
                prop_assert!((rx - ry).abs() <= dxy + 1e-12);
                // monotone band
                if dom.in_band(&x).unwrap() && ry <= rx {
                    prop_assert!(dom.in_band(&y).unwrap());
                }
            }
        }
    }
}
