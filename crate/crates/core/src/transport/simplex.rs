//! Primal network simplex for the balanced transportation problem with
//! integer supplies and costs. Arcs are implicit (`i * n2 + j`); one
//! artificial arc joins every node to an extra root. The spanning tree is kept
//! strongly feasible so degenerate pivots cannot cycle.

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

pub(crate) struct Solution {
    pub flow: Vec<i64>,
    pub pivots: usize,
}

struct Tree {
    parent: Vec<usize>,
    pred: Vec<usize>,
    up: Vec<bool>,
    depth: Vec<usize>,
    pi: Vec<i64>,
    first_child: Vec<usize>,
    next_sib: Vec<usize>,
    prev_sib: Vec<usize>,
}

impl Tree {
    fn remove_child(&mut self, p: usize, c: usize) {
        let (prev, next) = (self.prev_sib[c], self.next_sib[c]);
        if prev == NONE {
            self.first_child[p] = next;
        } else {
            self.next_sib[prev] = next;
        }
        if next != NONE {
            self.prev_sib[next] = prev;
        }
        self.prev_sib[c] = NONE;
        self.next_sib[c] = NONE;
    }

    fn add_child(&mut self, p: usize, c: usize) {
        let head = self.first_child[p];
        self.next_sib[c] = head;
        self.prev_sib[c] = NONE;
        if head != NONE {
            self.prev_sib[head] = c;
        }
        self.first_child[p] = c;
    }
}

/// Minimise Σ cost·flow subject to row sums `supply` and column sums
/// `demand`. `cost` is row-major `supply.len() × demand.len()`, with
/// non-negative entries; supplies and demands must balance.
pub(crate) fn solve(supply: &[i64], demand: &[i64], cost: &[i64]) -> Result<Solution> {
    let n1 = supply.len();
    let n2 = demand.len();
    let m = n1 * n2;
    if cost.len() != m {
        return Err(Error::Internal("cost matrix has the wrong shape".into()));
    }
    if supply.iter().sum::<i64>() != demand.iter().sum::<i64>() {
        return Err(Error::Internal("unbalanced transportation problem".into()));
    }
    let n = n1 + n2;
    let root = n;
    let cmax = cost.iter().copied().max().unwrap_or(0).max(1);
    let big_m = (n as i64 + 1).saturating_mul(cmax + 1);

    let node_supply = |u: usize| if u < n1 { supply[u] } else { -demand[u - n1] };

    let mut flow = vec![0i64; m + n];
    let mut in_tree = vec![false; m];
    let mut t = Tree {
        parent: vec![NONE; n + 1],
        pred: vec![NONE; n + 1],
        up: vec![false; n + 1],
        depth: vec![0; n + 1],
        pi: vec![0; n + 1],
        first_child: vec![NONE; n + 1],
        next_sib: vec![NONE; n + 1],
        prev_sib: vec![NONE; n + 1],
    };
    // Artificial arc of u points u → root when u has non-negative supply so
    // zero-flow tree arcs can always carry flow towards the root.
    let art_up: Vec<bool> = (0..n).map(|u| node_supply(u) >= 0).collect();
    for u in (0..n).rev() {
        let s = node_supply(u);
        t.parent[u] = root;
        t.pred[u] = m + u;
        t.up[u] = art_up[u];
        t.depth[u] = 1;
        t.pi[u] = if art_up[u] { -big_m } else { big_m };
        flow[m + u] = s.abs();
        t.add_child(root, u);
    }

    let arc_ends = |a: usize| -> (usize, usize) {
        if a < m {
            (a / n2, n1 + a % n2)
        } else {
            let u = a - m;
            if art_up[u] {
                (u, root)
            } else {
                (root, u)
            }
        }
    };

    let block = ((m as f64).sqrt() as usize).max(10).min(m.max(1));
    let mut cursor = 0usize;
    let mut pivots = 0usize;
    let mut path = Vec::new();
    let mut old_pred = Vec::new();
    let mut old_up = Vec::new();
    let mut stack = Vec::new();

    loop {
        // Block search pricing.
        let mut best = NONE;
        let mut best_rc = 0i64;
        let mut left = block;
        for _ in 0..m {
            let a = cursor;
            cursor += 1;
            if cursor == m {
                cursor = 0;
            }
            if !in_tree[a] {
                let rc = cost[a] + t.pi[a / n2] - t.pi[n1 + a % n2];
                if rc < best_rc {
                    best_rc = rc;
                    best = a;
                }
            }
            left -= 1;
            if left == 0 {
                if best != NONE {
                    break;
                }
                left = block;
            }
        }
        if best == NONE {
            break;
        }
        let a_in = best;
        let (s, tt) = arc_ends(a_in);

        // Join node of the cycle.
        let (mut u, mut v) = (s, tt);
        while u != v {
            if t.depth[u] > t.depth[v] {
                u = t.parent[u];
            } else if t.depth[v] > t.depth[u] {
                v = t.parent[v];
            } else {
                u = t.parent[u];
                v = t.parent[v];
            }
        }
        let join = u;

        // Leaving arc: flow runs join → … → s → tt → … → join.
        let mut delta = i64::MAX;
        let mut u_out = NONE;
        let mut side = 0;
        let mut u = s;
        while u != join {
            if t.up[u] && flow[t.pred[u]] < delta {
                delta = flow[t.pred[u]];
                u_out = u;
                side = 1;
            }
            u = t.parent[u];
        }
        let mut u = tt;
        while u != join {
            if !t.up[u] && flow[t.pred[u]] <= delta {
                delta = flow[t.pred[u]];
                u_out = u;
                side = 2;
            }
            u = t.parent[u];
        }
        if side == 0 {
            return Err(Error::Internal("unbounded transportation problem".into()));
        }

        if delta > 0 {
            flow[a_in] += delta;
            let mut u = s;
            while u != join {
                let e = t.pred[u];
                if t.up[u] {
                    flow[e] -= delta;
                } else {
                    flow[e] += delta;
                }
                u = t.parent[u];
            }
            let mut u = tt;
            while u != join {
                let e = t.pred[u];
                if t.up[u] {
                    flow[e] += delta;
                } else {
                    flow[e] -= delta;
                }
                u = t.parent[u];
            }
        }

        let (u_in, v_in) = if side == 1 { (s, tt) } else { (tt, s) };
        let a_out = t.pred[u_out];

        path.clear();
        old_pred.clear();
        old_up.clear();
        let mut u = u_in;
        loop {
            path.push(u);
            old_pred.push(t.pred[u]);
            old_up.push(t.up[u]);
            if u == u_out {
                break;
            }
            u = t.parent[u];
        }
        let out_parent = t.parent[u_out];
        t.remove_child(out_parent, u_out);
        for k in 0..path.len() - 1 {
            t.remove_child(path[k + 1], path[k]);
        }
        for k in (1..path.len()).rev() {
            let node = path[k];
            t.parent[node] = path[k - 1];
            t.pred[node] = old_pred[k - 1];
            t.up[node] = !old_up[k - 1];
            t.add_child(path[k - 1], node);
        }
        t.parent[u_in] = v_in;
        t.pred[u_in] = a_in;
        t.up[u_in] = u_in == s;
        t.add_child(v_in, u_in);

        in_tree[a_in] = true;
        if a_out < m {
            in_tree[a_out] = false;
        }

        let shift = if u_in == tt { best_rc } else { -best_rc };
        stack.clear();
        stack.push(u_in);
        while let Some(w) = stack.pop() {
            t.pi[w] += shift;
            t.depth[w] = t.depth[t.parent[w]] + 1;
            let mut c = t.first_child[w];
            while c != NONE {
                stack.push(c);
                c = t.next_sib[c];
            }
        }
        pivots += 1;
    }

    if flow[m..].iter().any(|&f| f != 0) {
        return Err(Error::Internal("artificial arcs carry flow at optimum".into()));
    }
    flow.truncate(m);
    Ok(Solution { flow, pivots })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn objective(sol: &Solution, cost: &[i64]) -> i64 {
        sol.flow.iter().zip(cost).map(|(f, c)| f * c).sum()
    }

    #[test]
    fn two_by_two() {
        let sol = solve(&[5, 5], &[5, 5], &[1, 10, 10, 1]).unwrap();
        assert_eq!(objective(&sol, &[1, 10, 10, 1]), 10);
    }

    #[test]
    fn degenerate_zero_supplies() {
        let cost = [3, 1, 4, 1, 5, 9, 2, 6, 5];
        let sol = solve(&[0, 7, 0], &[2, 0, 5], &cost).unwrap();
        assert_eq!(sol.flow.iter().sum::<i64>(), 7);
        assert_eq!(objective(&sol, &cost), 2 * 1 + 5 * 9);
    }

    #[test]
    fn matches_permutation_brute_force() {
        // Unit supplies make the optimum an assignment.
        let n = 5;
        let mut state = 12345u64;
        for _ in 0..50 {
            let cost: Vec<i64> = (0..n * n)
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    ((state >> 33) % 100) as i64
                })
                .collect();
            let sol = solve(&vec![1; n], &vec![1; n], &cost).unwrap();
            let mut perm: Vec<usize> = (0..n).collect();
            let mut best = i64::MAX;
            permute(&mut perm, 0, &mut |p| {
                best = best.min((0..n).map(|i| cost[i * n + p[i]]).sum());
            });
            assert_eq!(objective(&sol, &cost), best);
        }
    }

    fn permute(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == p.len() {
            f(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permute(p, k + 1, f);
            p.swap(k, i);
        }
    }
}
