//! Reference values the acceptance suite compares against.

use std::f64::consts::PI;
use std::sync::Arc;

use minilp::{ComparisonOp, OptimizationDirection, Problem};

use kmv_core::geometry::Domain;
use kmv_core::SubProbMeasure;

/// Terms kept in the eigenfunction expansions on (0,1).
pub const SERIES_TERMS: usize = 50;

/// Transition density of Brownian motion killed on leaving (0,1), generator ½Δ.
pub fn heat_density(x0: f64, t: f64, y: f64) -> f64 {
    (1..=SERIES_TERMS)
        .map(|k| {
            let k = k as f64;
            2.0 * (k * PI * x0).sin() * (k * PI * y).sin() * (-k * k * PI * PI * t / 2.0).exp()
        })
        .sum()
}

/// P_x(τ > t) for the same process.
pub fn heat_survival(x0: f64, t: f64) -> f64 {
    (1..=SERIES_TERMS)
        .map(|k| {
            let k = k as f64;
            2.0 * (k * PI * x0).sin() * (1.0 - (k * PI).cos()) / (k * PI) * (-k * k * PI * PI * t / 2.0).exp()
        })
        .sum()
}

/// Midpoint discretization of the density into `cells` atoms.
pub fn heat_measure(dom: &Arc<Domain>, x0: f64, t: f64, cells: usize) -> SubProbMeasure {
    let h = 1.0 / cells as f64;
    let atoms: Vec<(Vec<f64>, f64)> = (0..cells)
        .map(|i| {
            let y = (i as f64 + 0.5) * h;
            (vec![y], heat_density(x0, t, y).max(0.0) * h)
        })
        .collect();
    SubProbMeasure::from_atoms(dom.clone(), &atoms).expect("atoms lie in (0,1)")
}

/// E_x[g(X_t); τ > t] on (0,1) for g = r₀ ∧ ρ_∂, by midpoint quadrature.
pub fn heat_boundary_mean(x0: f64, t: f64, r0: f64, cells: usize) -> f64 {
    let h = 1.0 / cells as f64;
    (0..cells)
        .map(|i| {
            let y = (i as f64 + 0.5) * h;
            heat_density(x0, t, y) * y.min(1.0 - y).min(r0) * h
        })
        .sum()
}

/// Ŵ₁ or W₁ as a dense LP: interior pairs plus one unlimited boundary
/// reservoir per side.
pub fn lp_distance(mu: &SubProbMeasure, nu: &SubProbMeasure, truncated: bool) -> f64 {
    let dom = mu.domain();
    let clip = |c: f64| if truncated { c.min(1.0) } else { c };
    let s: Vec<_> = mu.interior().collect();
    let t: Vec<_> = nu.interior().collect();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let mut rows: Vec<Vec<(minilp::Variable, f64)>> = vec![Vec::new(); s.len()];
    let mut cols: Vec<Vec<(minilp::Variable, f64)>> = vec![Vec::new(); t.len()];
    for (i, (_, x, _)) in s.iter().enumerate() {
        for (j, (_, y, _)) in t.iter().enumerate() {
            let d = x.iter().zip(y.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let v = lp.add_var(clip(d), (0.0, f64::INFINITY));
            rows[i].push((v, 1.0));
            cols[j].push((v, 1.0));
        }
        let v = lp.add_var(clip(dom.boundary_distance(x).unwrap_or(0.0)), (0.0, f64::INFINITY));
        rows[i].push((v, 1.0));
    }
    for (j, (_, y, _)) in t.iter().enumerate() {
        let v = lp.add_var(clip(dom.boundary_distance(y).unwrap_or(0.0)), (0.0, f64::INFINITY));
        cols[j].push((v, 1.0));
    }
    for (i, r) in rows.iter().enumerate() {
        lp.add_constraint(r.as_slice(), ComparisonOp::Eq, s[i].2);
    }
    for (j, c) in cols.iter().enumerate() {
        lp.add_constraint(c.as_slice(), ComparisonOp::Eq, t[j].2);
    }
    lp.solve().map(|sol| sol.objective()).unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_integrates_to_survival() {
        let dom = Arc::new(Domain::interval(0.0, 1.0).unwrap());
        for t in [0.025, 0.1] {
            let m = heat_measure(&dom, 0.5, t, 4000).mass();
            assert!((m - heat_survival(0.5, t)).abs() < 1e-6);
        }
    }

    #[test]
    fn boundary_mean_is_linear_near_the_wall() {
        // u(x)/x has a finite limit as x → 0.
        let a = heat_boundary_mean(0.01, 0.05, 0.25, 4000) / 0.01;
        let b = heat_boundary_mean(0.005, 0.05, 0.25, 4000) / 0.005;
        assert!((a - b).abs() < 1e-3 * a, "{a} {b}");
    }
}
