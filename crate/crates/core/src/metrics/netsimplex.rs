//! Transportation network simplex for exact Wasserstein-2 between weighted
//! point clouds.
//!
//! The bipartite problem is solved on an uncapacitated network with an
//! artificial root providing the initial basis. Masses are scaled to
//! integer supplies so pivoting is exact; arc costs (squared distances)
//! stay in floating point and are evaluated on demand.

use super::MetricsError;

const MASS_SCALE: f64 = (1u64 << 40) as f64;

/// Spanning-tree basis. Every non-root node stores the arc that links it
/// to its parent: `pred_real` is the real-arc id (`usize::MAX` for the
/// artificial root arcs), `pred_up` is true when the arc points from the
/// node toward its parent, and `flow` is the arc flow.
struct Tree {
    parent: Vec<usize>,
    pred_real: Vec<usize>,
    pred_up: Vec<bool>,
    flow: Vec<u64>,
    depth: Vec<u32>,
    children: Vec<Vec<usize>>,
    potential: Vec<f64>,
}

/// Exact squared W2 between weighted supports (weights sum to one each).
pub fn transport_w2_squared(
    a_pts: &[[f64; 2]],
    a_w: &[f64],
    b_pts: &[[f64; 2]],
    b_w: &[f64],
) -> Result<f64, MetricsError> {
    let m = a_pts.len();
    let n = b_pts.len();
    if m == 0 || n == 0 {
        return Err(MetricsError::BadInput("empty support".into()));
    }

    let supply = scale_to_integers(a_w);
    let demand = scale_to_integers(b_w);

    let cost = |arc: usize| -> f64 {
        let i = arc / n;
        let j = arc % n;
        let dv = a_pts[i][0] - b_pts[j][0];
        let dw = a_pts[i][1] - b_pts[j][1];
        dv * dv + dw * dw
    };
    let mut cmax = 0.0f64;
    for i in 0..m {
        for j in 0..n {
            cmax = cmax.max(cost(i * n + j));
        }
    }
    let art_cost = (cmax + 1.0) * (m + n) as f64;
    let tol = 1e-11 * (cmax + 1.0);

    // Node layout: 0..m sources, m..m+n sinks, root = m + n.
    let root = m + n;
    let mut t = Tree {
        parent: vec![root; root + 1],
        pred_real: vec![usize::MAX; root + 1],
        pred_up: vec![false; root + 1],
        flow: vec![0; root + 1],
        depth: vec![1; root + 1],
        children: vec![Vec::new(); root + 1],
        potential: vec![0.0; root + 1],
    };
    t.parent[root] = usize::MAX;
    t.depth[root] = 0;
    t.children[root] = (0..root).collect();
    for (i, &s) in supply.iter().enumerate() {
        // Source -> root carries the supply; the potential keeps it tight.
        t.pred_up[i] = true;
        t.flow[i] = s;
        t.potential[i] = art_cost;
    }
    for (j, &d) in demand.iter().enumerate() {
        // Root -> sink carries the demand.
        t.pred_up[m + j] = false;
        t.flow[m + j] = d;
        t.potential[m + j] = -art_cost;
    }

    let n_arcs = m * n;
    let block = ((n_arcs as f64).sqrt() as usize).clamp(64, 4096);
    let mut next_start = 0usize;
    let max_pivots = 500 * (m + n) + 100_000;
    let mut pivots = 0usize;

    loop {
        let mut entering = usize::MAX;
        let mut best_rc = -tol;
        let mut scanned = 0usize;
        let mut arc = next_start;
        let mut i = arc / n;
        let mut j = arc % n;
        while scanned < n_arcs {
            let dv = a_pts[i][0] - b_pts[j][0];
            let dw = a_pts[i][1] - b_pts[j][1];
            let rc = dv * dv + dw * dw - t.potential[i] + t.potential[m + j];
            if rc < best_rc {
                best_rc = rc;
                entering = arc;
            }
            scanned += 1;
            arc += 1;
            j += 1;
            if j == n {
                j = 0;
                i += 1;
            }
            if arc == n_arcs {
                arc = 0;
                i = 0;
                j = 0;
            }
            if scanned % block == 0 && entering != usize::MAX {
                break;
            }
        }
        next_start = arc;
        if entering == usize::MAX {
            break;
        }
        pivots += 1;
        if pivots > max_pivots {
            return Err(MetricsError::BadInput("network simplex exceeded its pivot budget".into()));
        }
        pivot(&mut t, entering, entering / n, m + entering % n, best_rc);
    }

    // Artificial arcs must end up empty for balanced integer supplies.
    for k in 0..root {
        if t.pred_real[k] == usize::MAX && t.flow[k] > 0 {
            return Err(MetricsError::BadInput("transportation problem is infeasible".into()));
        }
    }

    let mut total = 0.0;
    for k in 0..root {
        if t.pred_real[k] != usize::MAX && t.flow[k] > 0 {
            total += t.flow[k] as f64 * cost(t.pred_real[k]);
        }
    }
    Ok(total / MASS_SCALE)
}

fn scale_to_integers(w: &[f64]) -> Vec<u64> {
    let mut out: Vec<u64> = w.iter().map(|&x| (x * MASS_SCALE).round() as u64).collect();
    let total: u64 = out.iter().sum();
    let target = MASS_SCALE as u64;
    // Push the rounding residual onto the heaviest atom.
    let imax = (0..out.len()).max_by_key(|&i| out[i]).unwrap();
    if total > target {
        out[imax] -= total - target;
    } else {
        out[imax] += target - total;
    }
    out
}

/// One pivot with entering real arc `u -> v` of reduced cost `rc < 0`.
///
/// The cycle is the entering arc plus the tree path from `v` back to `u`;
/// pushing flow along `u -> v` means flow decreases on path arcs pointing
/// up on the `u` side and on arcs pointing down on the `v` side.
fn pivot(t: &mut Tree, entering: usize, u: usize, v: usize, rc: f64) {
    let mut theta = u64::MAX;
    let mut leave = usize::MAX;
    let mut leave_on_u_side = false;

    let (mut x, mut y) = (u, v);
    let (mut dx, mut dy) = (t.depth[x], t.depth[y]);
    while x != y {
        if dx >= dy {
            if t.pred_up[x] && t.flow[x] < theta {
                theta = t.flow[x];
                leave = x;
                leave_on_u_side = true;
            }
            x = t.parent[x];
            dx -= 1;
        } else {
            if !t.pred_up[y] && t.flow[y] < theta {
                theta = t.flow[y];
                leave = y;
                leave_on_u_side = false;
            }
            y = t.parent[y];
            dy -= 1;
        }
    }
    debug_assert!(leave != usize::MAX, "unbounded pivot in a balanced problem");

    // Apply the flow change around the cycle.
    let (mut x, mut y) = (u, v);
    let (mut dx, mut dy) = (t.depth[x], t.depth[y]);
    while x != y {
        if dx >= dy {
            if t.pred_up[x] {
                t.flow[x] -= theta;
            } else {
                t.flow[x] += theta;
            }
            x = t.parent[x];
            dx -= 1;
        } else {
            if t.pred_up[y] {
                t.flow[y] += theta;
            } else {
                t.flow[y] -= theta;
            }
            y = t.parent[y];
            dy -= 1;
        }
    }

    // The removed arc detaches the subtree containing one entering-arc
    // endpoint. Re-root that subtree at the endpoint and graft it under
    // the other one; its potentials shift so the entering arc is tight.
    let (sub_end, other_end, delta) =
        if leave_on_u_side { (u, v, rc) } else { (v, u, -rc) };

    let mut chain = Vec::with_capacity(8);
    let mut node = sub_end;
    loop {
        chain.push(node);
        if node == leave {
            break;
        }
        node = t.parent[node];
    }
    let saved: Vec<(usize, bool, u64)> =
        chain.iter().map(|&k| (t.pred_real[k], t.pred_up[k], t.flow[k])).collect();
    for k in 0..chain.len() - 1 {
        let child = chain[k];
        let par = chain[k + 1];
        detach(t, par);
        t.parent[par] = child;
        t.pred_real[par] = saved[k].0;
        t.pred_up[par] = !saved[k].1;
        t.flow[par] = saved[k].2;
        t.children[child].push(par);
    }
    detach(t, sub_end);
    t.parent[sub_end] = other_end;
    t.pred_real[sub_end] = entering;
    t.pred_up[sub_end] = leave_on_u_side;
    t.flow[sub_end] = theta;
    t.children[other_end].push(sub_end);

    // Refresh depth and potential across the grafted subtree.
    let mut stack = vec![sub_end];
    while let Some(k) = stack.pop() {
        t.depth[k] = t.depth[t.parent[k]] + 1;
        t.potential[k] += delta;
        stack.extend_from_slice(&t.children[k]);
    }
}

fn detach(t: &mut Tree, node: usize) {
    let p = t.parent[node];
    if p != usize::MAX {
        if let Some(pos) = t.children[p].iter().position(|&c| c == node) {
            t.children[p].swap_remove(pos);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::assignment::assignment_w2_squared;
    use crate::util::rng::{self, Stream};

    fn random_points(n: usize, seed: u64, tag: u64) -> Vec<[f64; 2]> {
        (0..n)
            .map(|i| {
                [
                    4.0 * rng::uniform(seed, Stream::Bootstrap, i as u64, tag, 0) - 2.0,
                    4.0 * rng::uniform(seed, Stream::Bootstrap, i as u64, tag, 1) - 2.0,
                ]
            })
            .collect()
    }

    #[test]
    fn agrees_with_assignment_on_uniform_weights() {
        for seed in 0..25 {
            let n = 3 + (seed as usize % 40);
            let a = random_points(n, seed, 0);
            let b = random_points(n, seed, 1);
            let w = vec![1.0 / n as f64; n];
            let simplex = transport_w2_squared(&a, &w, &b, &w).unwrap();
            let assign = assignment_w2_squared(&a, &b);
            assert!(
                (simplex - assign).abs() < 1e-9 * (1.0 + assign),
                "seed {seed}: {simplex} vs {assign}"
            );
        }
    }

    #[test]
    fn rational_weights_match_expanded_assignment() {
        // Weights k/8 expand into uniform multisets solvable by brute force.
        for seed in 0..15 {
            let counts_a = [3usize, 1, 4];
            let counts_b = [2usize, 2, 2, 2];
            let a = random_points(3, seed, 0);
            let b = random_points(4, seed, 1);
            let wa: Vec<f64> = counts_a.iter().map(|&k| k as f64 / 8.0).collect();
            let wb: Vec<f64> = counts_b.iter().map(|&k| k as f64 / 8.0).collect();
            let simplex = transport_w2_squared(&a, &wa, &b, &wb).unwrap();

            let mut ea = Vec::new();
            for (p, &k) in a.iter().zip(&counts_a) {
                ea.extend(std::iter::repeat(*p).take(k));
            }
            let mut eb = Vec::new();
            for (p, &k) in b.iter().zip(&counts_b) {
                eb.extend(std::iter::repeat(*p).take(k));
            }
            let brute = crate::metrics::w2_2d_brute_force(&ea, &eb);
            assert!(
                (simplex.sqrt() - brute).abs() < 1e-9,
                "seed {seed}: {} vs {brute}",
                simplex.sqrt()
            );
        }
    }

    #[test]
    fn collinear_weighted_instances_match_quantile_formula() {
        use crate::metrics::{w2_1d, Dist1d};
        for seed in 0..10 {
            let n = 12;
            let xs_a: Vec<f64> =
                (0..n).map(|i| rng::uniform(seed, Stream::Bootstrap, i, 7, 0) * 3.0).collect();
            let xs_b: Vec<f64> = (0..n)
                .map(|i| rng::uniform(seed, Stream::Bootstrap, i, 8, 0) * 3.0 - 1.0)
                .collect();
            let mut wa: Vec<f64> =
                (0..n).map(|i| 0.1 + rng::uniform(seed, Stream::Bootstrap, i, 9, 0)).collect();
            let sa: f64 = wa.iter().sum();
            wa.iter_mut().for_each(|w| *w /= sa);
            let mut wb: Vec<f64> =
                (0..n).map(|i| 0.1 + rng::uniform(seed, Stream::Bootstrap, i, 10, 0)).collect();
            let sb: f64 = wb.iter().sum();
            wb.iter_mut().for_each(|w| *w /= sb);

            let pa: Vec<[f64; 2]> = xs_a.iter().map(|&x| [x, 2.0]).collect();
            let pb: Vec<[f64; 2]> = xs_b.iter().map(|&x| [x, 2.0]).collect();
            let simplex = transport_w2_squared(&pa, &wa, &pb, &wb).unwrap().sqrt();
            let quantile = w2_1d(Dist1d::Atoms(&xs_a, &wa), Dist1d::Atoms(&xs_b, &wb)).unwrap();
            assert!(
                (simplex - quantile).abs() < 1e-7,
                "seed {seed}: simplex {simplex} quantile {quantile}"
            );
        }
    }

    #[test]
    fn point_mass_translation() {
        let a = vec![[0.0, 0.0]];
        let b = vec![[3.0, 4.0]];
        let d2 = transport_w2_squared(&a, &[1.0], &b, &[1.0]).unwrap();
        assert!((d2 - 25.0).abs() < 1e-9);
    }

    #[test]
    fn unbalanced_supports_with_skewed_weights() {
        // One heavy atom against a spread-out cloud; optimum computed by
        // expanding to sixteenths and brute-forcing.
        let a = vec![[0.0, 0.0], [1.0, 0.0]];
        let wa = vec![0.25, 0.75];
        let b = vec![[0.0, 1.0], [1.0, 1.0], [2.0, 1.0], [3.0, 1.0]];
        let wb = vec![0.25; 4];
        let got = transport_w2_squared(&a, &wa, &b, &wb).unwrap();
        // Optimal plan: a0 (1/4) -> b0; a1 -> b1 (1/4), b2 (1/4), b3 (1/4).
        let expect = 0.25 * 1.0 + 0.25 * 1.0 + 0.25 * (1.0 + 1.0) + 0.25 * (4.0 + 1.0);
        assert!((got - expect).abs() < 1e-9, "{got} vs {expect}");
    }
}
