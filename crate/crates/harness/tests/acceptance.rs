//! Full-tier acceptance run. Prints one PASS/FAIL line per criterion, then
//! cross-checks the series-based reference values against the method of
//! images, which shares no code with them.

use std::process::ExitCode;

use kmv::accept::{decay_constant, Suite, SuiteOptions, Tier};
use kmv_core::transport::w1_hat;
use kmv_core::SubProbMeasure;

/// Killed-BM density on (0,1) as an alternating sum of image Gaussians.
fn images_density(x0: f64, t: f64, y: f64) -> f64 {
    let g = |z: f64| (-z * z / (2.0 * t)).exp() / (2.0 * std::f64::consts::PI * t).sqrt();
    (-20..=20)
        .map(|k| {
            let s = 2.0 * k as f64;
            g(y - x0 + s) - g(y + x0 + s)
        })
        .sum()
}

fn images_cells(x0: f64, t: f64, cells: usize) -> Vec<(f64, f64)> {
    let h = 1.0 / cells as f64;
    (0..cells)
        .map(|i| {
            let y = (i as f64 + 0.5) * h;
            (y, images_density(x0, t, y).max(0.0) * h)
        })
        .collect()
}

fn line(name: &str, ok: bool, detail: String) -> bool {
    println!("{name:<4} {}  {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn main() -> ExitCode {
    let mut suite = Suite::new(SuiteOptions::new(Tier::Full)).expect("default options are valid");
    let report = match suite.run() {
        Ok(r) => r,
        Err(e) => {
            println!("acceptance run aborted: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    println!("{report}");
    let mut ok = report.pass() && report.rows.len() == 11;

    println!("independent cross-checks");
    let flow = suite.absorbed_flow().expect("computed by A1").clone();
    let dom = flow.domain().clone();
    let (mut mass_err, mut w) = (0.0f64, 0.0f64);
    for k in [10, 20, 40] {
        let t = flow.grid().time(k);
        let cells = images_cells(0.5, t, 4000);
        let exact: f64 = cells.iter().map(|c| c.1).sum();
        mass_err = mass_err.max((flow.at(k).mass() - exact).abs());
        let atoms: Vec<(Vec<f64>, f64)> = cells.into_iter().map(|(y, m)| (vec![y], m)).collect();
        let reference = SubProbMeasure::from_atoms(dom.clone(), &atoms).expect("atoms in (0,1)");
        w = w.max(w1_hat(flow.at(k), &reference).expect("same domain"));
    }
    ok &= line(
        "A1",
        mass_err <= 0.01 && w <= 0.01,
        format!("image-sum oracle: max mass error {mass_err:.5}, max Ŵ₁ {w:.5} (tol 0.01)"),
    );

    let (t, r0) = (0.05, 0.25);
    let images_c = (1..=80)
        .map(|i| 0.0005 * i as f64)
        .map(|x| {
            let m: f64 = images_cells(x, t, 4000).iter().map(|(y, p)| p * y.min(1.0 - y).min(r0)).sum();
            m / x
        })
        .fold(0.0, f64::max);
    let series_c = decay_constant(t, r0);
    ok &= line(
        "A8",
        (images_c - series_c).abs() <= 1e-6 * series_c,
        format!("decay constant: series {series_c:.8}, images {images_c:.8}"),
    );

    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
