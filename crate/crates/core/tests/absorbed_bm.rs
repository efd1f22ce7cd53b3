use std::sync::Arc;

use kmv_core::coefficients::{CoefficientField, Hypothesis, Metadata};
use kmv_core::geometry::Domain;
use kmv_core::killed_sde::{simulate_flow, ParticleEnsemble, SimulationOptions};
use kmv_core::transport::w1_hat;
use kmv_core::{MeasureFlow, SubProbMeasure, TimeGrid};

/// Dirichlet heat kernel of ½Δ on (0,1) started at x0, 50 terms.
fn density(x0: f64, t: f64, y: f64) -> f64 {
    use std::f64::consts::PI;
    (1..=50)
        .map(|k| {
            let k = k as f64;
            2.0 * (k * PI * x0).sin() * (k * PI * y).sin() * (-k * k * PI * PI * t / 2.0).exp()
        })
        .sum()
}

fn survival(x0: f64, t: f64) -> f64 {
    use std::f64::consts::PI;
    (1..=50)
        .map(|k| {
            let k = k as f64;
            2.0 * (k * PI * x0).sin() * (1.0 - (k * PI).cos()) / (k * PI) * (-k * k * PI * PI * t / 2.0).exp()
        })
        .sum()
}

fn discretized(dom: &Arc<Domain>, x0: f64, t: f64, cells: usize) -> SubProbMeasure {
    let h = 1.0 / cells as f64;
    let atoms: Vec<(Vec<f64>, f64)> = (0..cells)
        .map(|i| {
            let y = (i as f64 + 0.5) * h;
            (vec![y], density(x0, t, y).max(0.0) * h)
        })
        .collect();
    SubProbMeasure::from_atoms(dom.clone(), &atoms).unwrap()
}

#[test]
fn series_oracle_is_self_consistent() {
    // Midpoint-rule mass of the density agrees with the closed-form mass.
    let dom = Arc::new(Domain::interval(0.0, 1.0).unwrap());
    for t in [0.025, 0.05, 0.1] {
        let m = discretized(&dom, 0.5, t, 4000).mass();
        assert!((m - survival(0.5, t)).abs() < 1e-6, "{t}: {m}");
    }
}

#[test]
fn survival_and_profile_match_heat_kernel() {
    let dom = Arc::new(Domain::interval(0.0, 1.0).unwrap());
    let n = 20_000;
    let field = CoefficientField::linear(1, 0.0, vec![0.0], 1.0, Metadata::new(Hypothesis::A, 0.0, 1.0, 0.0)).unwrap();
    let e = ParticleEnsemble::from_points(&dom, vec![0.5; n], 2026).unwrap();
    let grid = TimeGrid::new(0.1, 4).unwrap();
    let flow = MeasureFlow::constant(grid, &e.to_measure(&dom).unwrap());
    let out = simulate_flow(&field, &flow, &e, &SimulationOptions::new(1e-4)).unwrap();
    for k in [1, 2, 4] {
        let t = grid.time(k);
        let exact = survival(0.5, t);
        let got = out.flow.at(k).mass();
        // Statistical band at N = 2·10⁴ plus discretization.
        assert!((got - exact).abs() < 0.015, "t={t}: {got} vs {exact}");
        let d = w1_hat(out.flow.at(k), &discretized(&dom, 0.5, t, 2000)).unwrap();
        assert!(d < 0.015, "t={t}: Ŵ₁ = {d}");
    }
    assert!(out.flow.mass_is_nonincreasing(0.0));
}
