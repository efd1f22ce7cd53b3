use crate::error::{invalid, Error, Result};

/// Samples of f on a regular space-time grid. Values are stored time-major,
/// then space in row-major order over `counts`. Outside the declared box f
/// is taken to be zero.
#[derive(Clone, Debug)]
pub struct SpaceTimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub nt: usize,
    pub origin: Vec<f64>,
    pub spacing: f64,
    pub counts: Vec<usize>,
    pub values: Vec<f64>,
}

impl SpaceTimeGrid {
    /// Sample `f(t, x)` on the grid.
    pub fn sample(
        t0: f64,
        dt: f64,
        nt: usize,
        origin: Vec<f64>,
        spacing: f64,
        counts: Vec<usize>,
        f: impl Fn(f64, &[f64]) -> f64,
    ) -> Self {
        let d = origin.len();
        let ns: usize = counts.iter().product();
        let mut values = Vec::with_capacity(nt * ns);
        let mut x = vec![0.0; d];
        for k in 0..nt {
            let t = t0 + k as f64 * dt;
            for s in 0..ns {
                space_point(&origin, spacing, &counts, s, &mut x);
                values.push(f(t, &x));
            }
        }
        Self {
            t0,
            dt,
            nt,
            origin,
            spacing,
            counts,
            values,
        }
    }

    fn spatial_len(&self) -> usize {
        self.counts.iter().product()
    }
}

fn space_point(origin: &[f64], h: f64, counts: &[usize], mut s: usize, out: &mut [f64]) {
    for a in (0..counts.len()).rev() {
        out[a] = origin[a] + (s % counts[a]) as f64 * h;
        s /= counts[a];
    }
}

/// (p, q) ∈ 𝒦: p, q > 2 and d/p + 2/q < 1.
pub fn kato_admissible(d: usize, p: f64, q: f64) -> bool {
    p > 2.0 && q > 2.0 && (d as f64) / p + 2.0 / q < 1.0
}

/// Quadrature value of sup_z (∫ (∫_{B(z,1)} |f|^p dx)^{q/p} dt)^{1/q} with z
/// ranging over grid nodes. Space uses node weights h^d (halved on the
/// sphere |x − z| = 1, which is the trapezoid rule in d = 1) and time uses the
/// trapezoid rule. The result is a lower bound for the sup over all z.
pub fn lpq_norm(f: &SpaceTimeGrid, p: f64, q: f64) -> Result<f64> {
    if !(p > 1.0 && p.is_finite() && q > 1.0 && q.is_finite()) {
        return invalid("lpq_norm needs finite p, q > 1");
    }
    let d = f.origin.len();
    if d == 0 || f.counts.len() != d || f.counts.contains(&0) {
        return invalid("space grid must have at least one node per axis");
    }
    if !(f.spacing > 0.0) || f.spacing > 1.0 {
        return Err(Error::Resolution { spacing: f.spacing });
    }
    let ns = f.spatial_len();
    if f.nt == 0 || f.values.len() != f.nt * ns {
        return invalid("value array does not match grid shape");
    }
    let h = f.spacing;
    // I[k][z] = ∫_{B(z,1)} |f(t_k)|^p.
    let mut inner = vec![0.0; f.nt * ns];
    if d == 1 {
        let n = ns;
        let r = (1.0 / h + 1e-9).floor() as usize;
        let exact = ((r as f64) * h - 1.0).abs() < 1e-9;
        let mut prefix = vec![0.0; n + 1];
        for k in 0..f.nt {
            let row = &f.values[k * n..(k + 1) * n];
            for i in 0..n {
                prefix[i + 1] = prefix[i] + row[i].abs().powf(p);
            }
            for z in 0..n {
                let lo = z.saturating_sub(r);
                let hi = (z + r).min(n - 1);
                let mut s = prefix[hi + 1] - prefix[lo];
                if exact {
                    if z >= r {
                        s -= 0.5 * row[z - r].abs().powf(p);
                    }
                    if z + r < n {
                        s -= 0.5 * row[z + r].abs().powf(p);
                    }
                }
                inner[k * n + z] = s * h;
            }
        }
    } else {
        let r = (1.0 / h + 1e-9).floor() as isize;
        let hd = h.powi(d as i32);
        let mut offsets: Vec<(Vec<isize>, f64)> = Vec::new();
        let mut idx = vec![-r; d];
        loop {
            let dist = idx.iter().map(|&i| (i as f64 * h).powi(2)).sum::<f64>().sqrt();
            if dist <= 1.0 + 1e-9 {
                let w = if (dist - 1.0).abs() < 1e-9 { 0.5 } else { 1.0 };
                offsets.push((idx.clone(), w * hd));
            }
            let mut a = 0;
            loop {
                if a == d {
                    break;
                }
                idx[a] += 1;
                if idx[a] > r {
                    idx[a] = -r;
                    a += 1;
                } else {
                    break;
                }
            }
            if a == d {
                break;
            }
        }
        let mut zc = vec![0usize; d];
        for k in 0..f.nt {
            let row = &f.values[k * ns..(k + 1) * ns];
            for z in 0..ns {
                let mut s = z;
                for a in (0..d).rev() {
                    zc[a] = s % f.counts[a];
                    s /= f.counts[a];
                }
                let mut acc = 0.0;
                'off: for (off, w) in &offsets {
                    let mut lin = 0usize;
                    for a in 0..d {
                        let c = zc[a] as isize + off[a];
                        if c < 0 || c >= f.counts[a] as isize {
                            continue 'off;
                        }
                        lin = lin * f.counts[a] + c as usize;
                    }
                    acc += w * row[lin].abs().powf(p);
                }
                inner[k * ns + z] = acc;
            }
        }
    }
    let mut best = 0.0f64;
    for z in 0..ns {
        let mut acc = 0.0;
        for k in 0..f.nt {
            let w = if f.nt > 1 && (k == 0 || k == f.nt - 1) { 0.5 } else { 1.0 };
            acc += w * inner[k * ns + z].powf(q / p);
        }
        let val = if f.nt > 1 { acc * f.dt } else { acc };
        best = best.max(val.powf(1.0 / q));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_1d(h: f64, dt: f64, t_end: f64, f: impl Fn(f64, &[f64]) -> f64) -> SpaceTimeGrid {
        let nx = (4.0 / h).round() as usize + 1;
        let nt = (t_end / dt).round() as usize + 1;
        SpaceTimeGrid::sample(0.0, dt, nt, vec![-2.0], h, vec![nx], f)
    }

    #[test]
    fn constant_one_gives_ball_volume() {
        for p in [2.0, 3.0, 4.0] {
            let g = grid_1d(0.01, 0.01, 1.0, |_, _| 1.0);
            let v = lpq_norm(&g, p, p).unwrap();
            assert!((v - 2f64.powf(1.0 / p)).abs() < 1e-12, "{p}: {v}");
        }
    }

    #[test]
    fn zero_function() {
        let g = grid_1d(0.1, 0.1, 1.0, |_, _| 0.0);
        assert_eq!(lpq_norm(&g, 3.0, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn indicator_at_fine_refinement() {
        // Independent closed form: the best centre z = 0 sees exactly the
        // interval [-1, 1] for every t in [0, 1].
        let oracle = (2f64.powf(4.0 / 4.0) * 1.0).powf(1.0 / 4.0);
        let g = grid_1d(1e-3, 1e-3, 1.0, |t, x| {
            if (0.0..=1.0).contains(&t) && x[0].abs() <= 1.0 + 1e-12 {
                1.0
            } else {
                0.0
            }
        });
        let v = lpq_norm(&g, 4.0, 4.0).unwrap();
        assert!((v - oracle).abs() < 1e-6, "{v}");
    }

    #[test]
    fn coarse_grid_rejected() {
        let g = SpaceTimeGrid::sample(0.0, 0.5, 3, vec![0.0], 1.5, vec![4], |_, _| 1.0);
        assert!(matches!(lpq_norm(&g, 3.0, 3.0), Err(Error::Resolution { .. })));
    }

    #[test]
    fn monotone_in_pointwise_order() {
        let f = grid_1d(0.05, 0.05, 1.0, |t, x| (t * x[0]).sin().abs());
        let g = grid_1d(0.05, 0.05, 1.0, |t, x| (t * x[0]).sin().abs() + 0.1 * x[0].cos().abs());
        assert!(lpq_norm(&f, 3.0, 5.0).unwrap() <= lpq_norm(&g, 3.0, 5.0).unwrap());
    }

    #[test]
    fn two_dimensional_disc_area() {
        let h = 0.02;
        let n = (4.0 / h) as usize + 1;
        let g = SpaceTimeGrid::sample(0.0, 0.5, 3, vec![-2.0, -2.0], h, vec![n, n], |_, _| 1.0);
        let v = lpq_norm(&g, 2.0, 2.0).unwrap();
        // (π · 1)^{1/2} up to lattice-count error.
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 0.02, "{v}");
    }

    #[test]
    fn kato_class() {
        assert!(kato_admissible(1, 4.0, 4.0));
        assert!(!kato_admissible(2, 3.0, 3.0));
        assert!(!kato_admissible(1, 2.0, 100.0));
    }
}
