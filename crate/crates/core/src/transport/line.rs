//! Closed forms in one dimension.
//!
//! On an interval (a, b) with an unlimited boundary reservoir the effective
//! ground metric is min(|x − y|, ρ(x) + ρ(y)), which is the metric of the
//! circle obtained by gluing a to b. Transport on the circle reduces to
//! min_c ∫ |M(s) − c| ds with M the cumulative signed measure from a. On a
//! half-line the reservoir sits at the single boundary point and the
//! distance is ∫ |(μ − ν)((s, ∞))| ds.

/// `atoms` are (coordinate from the left endpoint, signed weight).
pub(crate) fn interval(atoms: &mut [(f64, f64)], length: f64) -> f64 {
    atoms.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut segments: Vec<(f64, f64)> = Vec::with_capacity(atoms.len() + 1);
    let mut prev = 0.0;
    let mut level = 0.0;
    for &(s, w) in atoms.iter() {
        let s = s.clamp(0.0, length);
        if s > prev {
            segments.push((level, s - prev));
            prev = s;
        }
        level += w;
    }
    if length > prev {
        segments.push((level, length - prev));
    }
    let total: f64 = segments.iter().map(|s| s.1).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut by_level = segments.clone();
    by_level.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut acc = 0.0;
    let mut median = by_level[0].0;
    for &(v, len) in &by_level {
        acc += len;
        median = v;
        if acc >= 0.5 * total {
            break;
        }
    }
    segments.iter().map(|&(v, len)| len * (v - median).abs()).sum()
}

/// `atoms` are (distance to the boundary point, signed weight).
pub(crate) fn half_line(atoms: &mut [(f64, f64)]) -> f64 {
    atoms.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut tail: f64 = atoms.iter().map(|a| a.1).sum();
    let mut prev = 0.0;
    let mut acc = 0.0;
    for &(s, w) in atoms.iter() {
        let s = s.max(0.0);
        acc += (s - prev) * tail.abs();
        prev = s;
        tail -= w;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_examples() {
        // δ0.2 vs δ0.5 on (0,1): direct 0.3.
        assert!((interval(&mut [(0.2, 1.0), (0.5, -1.0)], 1.0) - 0.3).abs() < 1e-15);
        // δ0.2 vs δ0.9: through the boundary 0.2 + 0.1.
        assert!((interval(&mut [(0.2, 1.0), (0.9, -1.0)], 1.0) - 0.3).abs() < 1e-15);
        // 0.5·δ0.1 vs zero: 0.05.
        assert!((interval(&mut [(0.1, 0.5)], 1.0) - 0.05).abs() < 1e-15);
        assert_eq!(interval(&mut [], 1.0), 0.0);
    }

    #[test]
    fn half_line_examples() {
        assert!((half_line(&mut [(0.5, 0.5)]) - 0.25).abs() < 1e-15);
        assert!((half_line(&mut [(1.0, 1.0), (3.0, -1.0)]) - 2.0).abs() < 1e-15);
        assert!((half_line(&mut [(1.0, 1.0), (3.0, -0.5)]) - 1.5).abs() < 1e-15);
    }
}
