//! Mane potentials, the Peierls barrier, and Aubry classes.
//!
//! Everything here runs on adjusted edge costs c0 + c dt. At the critical
//! value every cycle has nonnegative adjusted cost up to first-order
//! discretization noise, so shortest paths are well defined once the costs
//! are floored at -tol_tight. The barrier uses the Aubry decomposition
//! h(y,x) = min over Aubry z of Phi(y,z) + Phi(z,x), which costs two
//! Bellman-Ford families instead of an unbounded liminf; `liminf_check`
//! keeps the direct finite-time definition around as a cross-check.

use crate::critical::{find_negative_cycle, tight_structure, TightStructure};
use crate::error::Error;
use crate::exec::map_indexed;
use crate::grid::CostGraph;
use crate::Result;

/// Adjusted costs c0 + c dt, floored at -tol_tight. The floor absorbs the
/// first-order error of a discrete critical value; genuinely negative cycles
/// (several floored edges) still surface in the detection pass.
fn adjusted_costs(g: &CostGraph, c: f64, tol_tight: f64) -> Vec<f64> {
    g.edges.iter().map(|e| (e.cost + c * g.dt).max(-tol_tight)).collect()
}

fn ensure_no_negative_cycle(g: &CostGraph, costs: &[f64]) -> Result<()> {
    let tol = 1e-9 * g.cost_scale();
    if let Some((nodes, edges)) = find_negative_cycle(g, costs, tol) {
        let total: f64 = edges.iter().map(|&id| costs[id as usize]).sum();
        return Err(Error::NegativeCycle(format!(
            "length-{} cycle through node {} keeps cost {:.3e} after flooring; \
             the supplied critical value is too large",
            edges.len(),
            nodes[0],
            total
        )));
    }
    Ok(())
}

/// Shortest adjusted cost from `src` to every node. Caller must have ruled
/// out negative cycles; unreachable nodes stay at +inf.
fn bf_from(g: &CostGraph, costs: &[f64], src: usize) -> Vec<f64> {
    let n = g.n_nodes();
    let mut dist = vec![f64::INFINITY; n];
    dist[src] = 0.0;
    for _ in 0..n {
        let mut improved = false;
        for (id, e) in g.edges.iter().enumerate() {
            let base = dist[e.src as usize];
            if base.is_finite() {
                let cand = base + costs[id];
                if cand < dist[e.dst as usize] {
                    dist[e.dst as usize] = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    dist
}

/// Reverse orientation: shortest adjusted cost from every node into `dst`.
fn bf_to(g: &CostGraph, costs: &[f64], dst: usize) -> Vec<f64> {
    let n = g.n_nodes();
    let mut dist = vec![f64::INFINITY; n];
    dist[dst] = 0.0;
    for _ in 0..n {
        let mut improved = false;
        for (id, e) in g.edges.iter().enumerate() {
            let base = dist[e.dst as usize];
            if base.is_finite() {
                let cand = base + costs[id];
                if cand < dist[e.src as usize] {
                    dist[e.src as usize] = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    dist
}

/// Mane potential row Phi(src, .) at level c.
pub fn potential_from(g: &CostGraph, c: f64, src: usize, tol_tight: f64) -> Result<Vec<f64>> {
    let costs = adjusted_costs(g, c, tol_tight);
    ensure_no_negative_cycle(g, &costs)?;
    Ok(bf_from(g, &costs, src))
}

/// Mane potential column Phi(., dst) at level c.
pub fn potential_to(g: &CostGraph, c: f64, dst: usize, tol_tight: f64) -> Result<Vec<f64>> {
    let costs = adjusted_costs(g, c, tol_tight);
    ensure_no_negative_cycle(g, &costs)?;
    Ok(bf_to(g, &costs, dst))
}

/// Full potential matrix, row-major: phi[y*n + x] = Phi(y, x). Rows are
/// independent single-source problems and run in parallel.
pub fn potential_matrix(g: &CostGraph, c: f64, tol_tight: f64) -> Result<Vec<f64>> {
    let costs = adjusted_costs(g, c, tol_tight);
    ensure_no_negative_cycle(g, &costs)?;
    let n = g.n_nodes();
    let rows = map_indexed(n, |y| bf_from(g, &costs, y));
    let mut phi = Vec::with_capacity(n * n);
    for row in rows {
        phi.extend_from_slice(&row);
    }
    Ok(phi)
}

/// k-step action: one min-plus DP round per step, costs c0 + c dt (no floor).
fn action_step(g: &CostGraph, costs: &[f64], row: &[f64], out: &mut [f64]) {
    for j in 0..g.n_nodes() {
        let mut best = f64::INFINITY;
        for id in g.in_edge_range(j) {
            let v = row[g.edges[id].src as usize] + costs[id];
            if v < best {
                best = v;
            }
        }
        out[j] = best;
    }
}

/// Minimal cost among exactly-k-step paths from y to x.
pub fn finite_action(g: &CostGraph, c: f64, k: usize, y: usize, x: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Config("finite_action needs at least one step".into()));
    }
    let costs: Vec<f64> = g.edges.iter().map(|e| e.cost + c * g.dt).collect();
    let n = g.n_nodes();
    let mut row = vec![f64::INFINITY; n];
    row[y] = 0.0;
    let mut next = vec![f64::INFINITY; n];
    for _ in 0..k {
        action_step(g, &costs, &row, &mut next);
        std::mem::swap(&mut row, &mut next);
    }
    if row[x].is_finite() {
        Ok(row[x])
    } else {
        Err(Error::Unreachable { from: y, to: x, steps: k })
    }
}

/// Direct liminf oracle: min over k in [N, k_max] of the k-step action from
/// y to x. Independent of the Bellman-Ford route to the barrier.
pub fn liminf_check(g: &CostGraph, c: f64, y: usize, x: usize, k_max: usize) -> Result<f64> {
    let n = g.n_nodes();
    if k_max < n {
        return Err(Error::Config(format!(
            "liminf window k_max = {k_max} is shorter than the node count {n}"
        )));
    }
    let costs: Vec<f64> = g.edges.iter().map(|e| e.cost + c * g.dt).collect();
    let mut row = vec![f64::INFINITY; n];
    row[y] = 0.0;
    let mut next = vec![f64::INFINITY; n];
    let mut best = f64::INFINITY;
    for k in 1..=k_max {
        action_step(g, &costs, &row, &mut next);
        std::mem::swap(&mut row, &mut next);
        if k >= n && row[x] < best {
            best = row[x];
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::Unreachable { from: y, to: x, steps: k_max })
    }
}

/// Dense Peierls barrier with its companion Mane potential. Rows of `h` are
/// discrete weak KAM solutions; h(y,x) + h(x,y) is the pseudometric d_c.
#[derive(Clone, Debug)]
pub struct BarrierMatrix {
    pub n: usize,
    /// Aubry nodes used in the decomposition, sorted.
    pub aubry: Vec<u32>,
    /// phi[y*n + x] = Phi(y, x), +inf where unreachable.
    pub phi: Vec<f64>,
    /// h[y*n + x] = min over aubry z of Phi(y,z) + Phi(z,x).
    pub h: Vec<f64>,
}

impl BarrierMatrix {
    pub fn phi(&self, y: usize, x: usize) -> f64 {
        self.phi[y * self.n + x]
    }

    pub fn h(&self, y: usize, x: usize) -> f64 {
        self.h[y * self.n + x]
    }

    /// Mather pseudometric d_c(y,x) = h(y,x) + h(x,y).
    pub fn d_c(&self, y: usize, x: usize) -> f64 {
        self.h(y, x) + self.h(x, y)
    }

    /// Weak KAM solution rooted at y: the row h(y, .).
    pub fn row(&self, y: usize) -> &[f64] {
        &self.h[y * self.n..(y + 1) * self.n]
    }
}

/// Peierls barrier over the given Aubry nodes.
pub fn peierls_matrix(
    g: &CostGraph,
    c: f64,
    aubry: &[u32],
    tol_tight: f64,
) -> Result<BarrierMatrix> {
    if aubry.is_empty() {
        return Err(Error::Config("Peierls barrier needs a nonempty Aubry set".into()));
    }
    let n = g.n_nodes();
    let phi = potential_matrix(g, c, tol_tight)?;
    let h_rows = map_indexed(n, |y| {
        let row = &phi[y * n..(y + 1) * n];
        let mut out = vec![f64::INFINITY; n];
        for &z in aubry {
            let z = z as usize;
            let through = row[z];
            if !through.is_finite() {
                continue;
            }
            let back = &phi[z * n..(z + 1) * n];
            for (o, b) in out.iter_mut().zip(back) {
                let v = through + b;
                if v < *o {
                    *o = v;
                }
            }
        }
        out
    });
    let mut h = Vec::with_capacity(n * n);
    for row in h_rows {
        h.extend_from_slice(&row);
    }
    Ok(BarrierMatrix { n, aubry: aubry.to_vec(), phi, h })
}

/// Single barrier value h(y,x) from one forward and one backward pass;
/// avoids the all-pairs matrix on large grids.
pub fn barrier_pair(
    g: &CostGraph,
    c: f64,
    aubry: &[u32],
    y: usize,
    x: usize,
    tol_tight: f64,
) -> Result<f64> {
    if aubry.is_empty() {
        return Err(Error::Config("Peierls barrier needs a nonempty Aubry set".into()));
    }
    let costs = adjusted_costs(g, c, tol_tight);
    ensure_no_negative_cycle(g, &costs)?;
    let fwd = bf_from(g, &costs, y);
    let bwd = bf_to(g, &costs, x);
    let mut best = f64::INFINITY;
    for &z in aubry {
        let v = fwd[z as usize] + bwd[z as usize];
        if v < best {
            best = v;
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::Unreachable { from: y, to: x, steps: g.n_nodes() })
    }
}

/// Partition of the Aubry nodes under d_c(x,y) <= tol_class, single linkage:
/// blobs of tolerance-tight nodes chain through their neighbors. Classes are
/// sorted by smallest member.
pub fn aubry_classes(bm: &BarrierMatrix, tol_class: f64) -> Vec<Vec<u32>> {
    let m = bm.aubry.len();
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        let mut root = i;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = i;
        while parent[cur] != root {
            let up = parent[cur];
            parent[cur] = root;
            cur = up;
        }
        root
    }
    for i in 0..m {
        for j in (i + 1)..m {
            let a = bm.aubry[i] as usize;
            let b = bm.aubry[j] as usize;
            if bm.d_c(a, b) <= tol_class {
                let ri = find(&mut parent, i);
                let rj = find(&mut parent, j);
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut buckets: std::collections::BTreeMap<usize, Vec<u32>> = std::collections::BTreeMap::new();
    for i in 0..m {
        let r = find(&mut parent, i);
        buckets.entry(r).or_default().push(bm.aubry[i]);
    }
    buckets.into_values().collect()
}

/// Full zero-discount pipeline: a subsolution from one Bellman-Ford pass,
/// its tight structure, and the barrier over the resulting Aubry set.
pub fn barrier_pipeline(
    g: &CostGraph,
    c: f64,
    tol_sub: f64,
    tol_tight: f64,
) -> Result<(TightStructure, BarrierMatrix)> {
    let u = potential_from(g, c, 0, tol_tight)?;
    if let Some(j) = u.iter().position(|v| !v.is_finite()) {
        return Err(Error::Unreachable { from: 0, to: j, steps: g.n_nodes() });
    }
    let ts = tight_structure(g, &u, c, tol_sub, tol_tight)?;
    if ts.aubry_nodes.is_empty() {
        return Err(Error::Config(
            "empty Aubry set; the supplied critical value is likely too small".into(),
        ));
    }
    let bm = peierls_matrix(g, c, &ts.aubry_nodes, tol_tight)?;
    Ok((ts, bm))
}
