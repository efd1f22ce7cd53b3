use std::sync::Arc;

use kmv_core::geometry::Domain;
use kmv_core::rng::CounterStream;
use kmv_core::transport::{transport, w1, w1_hat, GroundCost, Method, TransportOptions};
use kmv_core::SubProbMeasure;
use minilp::{ComparisonOp, OptimizationDirection, Problem};

/// Dense LP over all plans: interior pairs plus one unlimited boundary
/// reservoir per side.
fn lp_oracle(mu: &SubProbMeasure, nu: &SubProbMeasure, truncated: bool) -> f64 {
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
        let v = lp.add_var(clip(dom.boundary_distance(x).unwrap()), (0.0, f64::INFINITY));
        rows[i].push((v, 1.0));
    }
    for (j, (_, y, _)) in t.iter().enumerate() {
        let v = lp.add_var(clip(dom.boundary_distance(y).unwrap()), (0.0, f64::INFINITY));
        cols[j].push((v, 1.0));
    }
    for (i, r) in rows.iter().enumerate() {
        lp.add_constraint(r.as_slice(), ComparisonOp::Eq, s[i].2);
    }
    for (j, c) in cols.iter().enumerate() {
        lp.add_constraint(c.as_slice(), ComparisonOp::Eq, t[j].2);
    }
    lp.solve().map(|sol| sol.objective()).unwrap_or(0.0)
}

fn random_measure(dom: &Arc<Domain>, rng: &mut CounterStream, max_atoms: usize) -> SubProbMeasure {
    let n = 1 + ((rng.uniform() * max_atoms as f64) as usize).min(max_atoms - 1);
    let raw: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
    let mass = if rng.uniform() < 0.2 { 1.0 } else { rng.uniform() };
    let total: f64 = raw.iter().sum();
    let atoms: Vec<(Vec<f64>, f64)> = raw
        .iter()
        .map(|w| (dom.sample_interior(rng).unwrap(), w / total * mass))
        .collect();
    SubProbMeasure::from_atoms(dom.clone(), &atoms).unwrap()
}

#[test]
fn solver_matches_dense_lp_on_small_instances() {
    let domains = [
        Arc::new(Domain::interval(0.0, 1.0).unwrap()),
        Arc::new(Domain::interval(-2.0, 3.0).unwrap()),
        Arc::new(Domain::ball(vec![0.0, 0.0], 1.5).unwrap()),
        Arc::new(Domain::half_space(vec![1.0], 0.0).unwrap()),
    ];
    let mut worst = 0.0f64;
    for k in 0..200u64 {
        let dom = &domains[(k % 4) as usize];
        let mut rng = CounterStream::new(2024, k, 0);
        let mu = random_measure(dom, &mut rng, 4);
        let nu = random_measure(dom, &mut rng, 4);
        for cost in [GroundCost::Truncated, GroundCost::Untruncated] {
            let oracle = lp_oracle(&mu, &nu, cost == GroundCost::Truncated);
            for method in [Method::Exact, Method::Auto] {
                let got = transport(
                    &mu,
                    &nu,
                    &TransportOptions {
                        cost,
                        method,
                        ..Default::default()
                    },
                )
                .unwrap()
                .distance;
                worst = worst.max((got - oracle).abs());
            }
        }
    }
    assert!(worst <= 1e-8, "worst deviation {worst:e}");
}

#[test]
fn solver_matches_dense_lp_on_medium_instances() {
    let dom = Arc::new(Domain::ball(vec![0.0, 0.0, 0.0], 2.0).unwrap());
    for k in 0..5u64 {
        let mut rng = CounterStream::new(77, k, 0);
        let mu = random_measure(&dom, &mut rng, 40);
        let nu = random_measure(&dom, &mut rng, 40);
        let oracle = lp_oracle(&mu, &nu, true);
        let got = w1_hat(&mu, &nu).unwrap();
        assert!((got - oracle).abs() < 1e-8, "{got} vs {oracle}");
    }
}

#[test]
fn closed_form_matches_exact_on_intervals() {
    for (k, (a, b)) in [(0.0, 1.0), (-1.0, 1.0), (0.0, 1.7), (-3.0, 4.0)].into_iter().enumerate() {
        let dom = Arc::new(Domain::interval(a, b).unwrap());
        for r in 0..20u64 {
            let mut rng = CounterStream::new(9, k as u64 * 100 + r, 0);
            let mu = random_measure(&dom, &mut rng, 60);
            let nu = random_measure(&dom, &mut rng, 60);
            let costs: &[GroundCost] = if b - a <= 2.0 {
                &[GroundCost::Truncated, GroundCost::Untruncated]
            } else {
                &[GroundCost::Untruncated]
            };
            for &cost in costs {
                let run = |method| {
                    transport(
                        &mu,
                        &nu,
                        &TransportOptions {
                            cost,
                            method,
                            ..Default::default()
                        },
                    )
                    .unwrap()
                    .distance
                };
                let (e, c) = (run(Method::Exact), run(Method::ClosedForm));
                assert!((e - c).abs() < 1e-9, "({a},{b}) {cost:?}: {e} vs {c}");
            }
        }
    }
}

#[test]
fn metric_axioms_on_random_triples() {
    let dom = Arc::new(Domain::interval(0.0, 1.0).unwrap());
    let ball = Arc::new(Domain::ball(vec![0.0, 0.0], 1.0).unwrap());
    let mut worst_sym = 0.0f64;
    let mut worst_tri = 0.0f64;
    for k in 0..500u64 {
        let d = if k % 2 == 0 { &dom } else { &ball };
        let mut rng = CounterStream::new(31, k, 0);
        let m: Vec<SubProbMeasure> = (0..3).map(|_| random_measure(d, &mut rng, 5)).collect();
        let opt = TransportOptions {
            method: Method::Exact,
            ..Default::default()
        };
        let dist = |a: &SubProbMeasure, b: &SubProbMeasure| transport(a, b, &opt).unwrap().distance;
        let (ab, ba) = (dist(&m[0], &m[1]), dist(&m[1], &m[0]));
        let (bc, ac) = (dist(&m[1], &m[2]), dist(&m[0], &m[2]));
        worst_sym = worst_sym.max((ab - ba).abs());
        worst_tri = worst_tri.max(ac - ab - bc);
        // Ŵ₁ ≤ W₁ and Ŵ₁ ≤ μ(O) + ν(O).
        assert!(ab <= w1(&m[0], &m[1]).unwrap() + 1e-9);
        assert!(ab <= m[0].mass() + m[1].mass() + 1e-9);
    }
    assert!(worst_sym <= 1e-8, "{worst_sym:e}");
    assert!(worst_tri <= 1e-8, "{worst_tri:e}");
}

#[test]
fn reservoir_consistency() {
    let dom = Arc::new(Domain::ball(vec![0.0, 0.0], 3.0).unwrap());
    for k in 0..50u64 {
        let mut rng = CounterStream::new(5, k, 0);
        let mu = random_measure(&dom, &mut rng, 5);
        let zero = SubProbMeasure::zero(dom.clone());
        let direct = mu
            .integrate(|x| dom.boundary_distance(x).unwrap().min(1.0))
            .unwrap();
        assert!((w1_hat(&mu, &zero).unwrap() - direct).abs() < 1e-10);
    }
}
