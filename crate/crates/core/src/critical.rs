//! Critical value, tight subgraph, Aubry components and Mather measures on
//! the discrete cost graph.
//!
//! The map is: the effective critical value of the discretized Lagrangian is
//! c = -m*/dt where m* is the minimum mean cycle weight of the cost graph
//! (Karp). A potential u is a discrete subsolution when
//! u_dst - u_src <= c0 + c dt on every edge; the edges where this is tight
//! (within tol) form the tight subgraph, whose nontrivial strongly connected
//! components carry the discrete Aubry set. Probability measures supported on
//! tight cycles are the discrete Mather measures; two independent routes
//! compute them (Karp witness and Dinkelbach cycle canceling), plus a bounded
//! enumeration of extreme points used by the selection principle.
//!
//! Karp's table is O(V^2) memory; fine for the grid sizes used here.

use crate::error::Error;
use crate::exec::map_indexed;
use crate::grid::CostGraph;
use crate::Result;

/// A cycle with its mean edge weight. `nodes[k]` is the source of
/// `edges[k]`; the walk returns to `nodes[0]`.
#[derive(Clone, Debug)]
pub struct MinMeanCycle {
    pub mean: f64,
    pub nodes: Vec<u32>,
    pub edges: Vec<u32>,
}

/// Minimum mean cycle over the whole edge set (Karp, free start node).
pub fn karp_min_mean_cycle(g: &CostGraph) -> Result<MinMeanCycle> {
    let all: Vec<u32> = (0..g.n_edges() as u32).collect();
    karp_subset(g, &all).ok_or(Error::NoCycle)
}

/// Critical value c = -m*/dt together with the witness cycle.
pub fn critical_value(g: &CostGraph) -> Result<(f64, MinMeanCycle)> {
    let cycle = karp_min_mean_cycle(g)?;
    Ok((-cycle.mean / g.dt, cycle))
}

/// Karp on an edge subset (ids into `g.edges`, sorted by (dst, src)).
/// Returns None when the subset carries no cycle. Walks may start anywhere
/// (the D table is initialized to zero), which computes the same minimum
/// cycle mean as a universal super-source.
fn karp_subset(g: &CostGraph, ids: &[u32]) -> Option<MinMeanCycle> {
    let n = g.n_nodes();
    if ids.is_empty() {
        return None;
    }
    // Per-target slices of the subset; ids sorted by (dst, src) keeps each
    // slice's scan order deterministic.
    let mut in_start = vec![0u32; n + 1];
    for &id in ids {
        in_start[g.edges[id as usize].dst as usize + 1] += 1;
    }
    for j in 0..n {
        in_start[j + 1] += in_start[j];
    }

    let rows = n + 1;
    let mut dist = vec![f64::INFINITY; rows * n];
    let mut pred = vec![u32::MAX; rows * n];
    for v in 0..n {
        dist[v] = 0.0;
    }
    for k in 1..rows {
        let (lower, upper) = dist.split_at_mut(k * n);
        let prev = &lower[(k - 1) * n..];
        let row = map_indexed(n, |j| {
            let mut best = f64::INFINITY;
            let mut best_id = u32::MAX;
            for &id in &ids[in_start[j] as usize..in_start[j + 1] as usize] {
                let e = &g.edges[id as usize];
                let d = prev[e.src as usize];
                if d.is_finite() {
                    let cand = d + e.cost;
                    if cand < best {
                        best = cand;
                        best_id = id;
                    }
                }
            }
            (best, best_id)
        });
        for (j, (d, p)) in row.into_iter().enumerate() {
            upper[j] = d;
            pred[k * n + j] = p;
        }
    }

    // mu* = min_v max_k (D_n[v] - D_k[v]) / (n - k).
    let mut best_mu = f64::INFINITY;
    let mut best_v = usize::MAX;
    for v in 0..n {
        let dn = dist[n * n + v];
        if !dn.is_finite() {
            continue;
        }
        let mut worst = f64::NEG_INFINITY;
        for k in 0..n {
            let dk = dist[k * n + v];
            if dk.is_finite() {
                worst = worst.max((dn - dk) / (n - k) as f64);
            }
        }
        if worst > f64::NEG_INFINITY && worst < best_mu {
            best_mu = worst;
            best_v = v;
        }
    }
    if best_v == usize::MAX {
        return None;
    }

    // Backtrace n steps from the argmin; the walk contains a cycle of mean
    // mu*. Scan every subcycle and keep the best, re-measured from its own
    // edges so the reported mean is exact for the witness.
    let mut walk_nodes = vec![0u32; rows];
    let mut walk_edges = vec![u32::MAX; rows];
    walk_nodes[n] = best_v as u32;
    for k in (1..rows).rev() {
        let id = pred[k * n + walk_nodes[k] as usize];
        debug_assert_ne!(id, u32::MAX, "finite D_n entries have full backtraces");
        walk_edges[k] = id;
        walk_nodes[k - 1] = g.edges[id as usize].src;
    }
    let mut best: Option<MinMeanCycle> = None;
    for a in 0..rows {
        for b in (a + 1)..rows {
            if walk_nodes[a] != walk_nodes[b] {
                continue;
            }
            let sum: f64 = walk_edges[a + 1..=b].iter().map(|&id| g.edges[id as usize].cost).sum();
            let mean = sum / (b - a) as f64;
            if best.as_ref().map_or(true, |c| mean < c.mean) {
                best = Some(MinMeanCycle {
                    mean,
                    nodes: walk_nodes[a..b].to_vec(),
                    edges: walk_edges[a + 1..=b].to_vec(),
                });
            }
        }
    }
    best
}

/// Long-run average bracket for the critical value from plain min-plus value
/// iteration: after `iters` sweeps the per-sweep increments delta satisfy
/// -max(delta)/dt <= c <= -min(delta)/dt. Independent of Karp; used as a
/// cross-check.
pub fn critical_value_power(g: &CostGraph, iters: usize) -> (f64, f64) {
    let n = g.n_nodes();
    let mut v = vec![0.0f64; n];
    let mut delta = vec![0.0f64; n];
    for _ in 0..iters {
        let next = map_indexed(n, |j| {
            let mut best = f64::INFINITY;
            for id in g.in_edge_range(j) {
                let e = &g.edges[id];
                let cand = v[e.src as usize] + e.cost;
                if cand < best {
                    best = cand;
                }
            }
            best
        });
        for j in 0..n {
            delta[j] = next[j] - v[j];
        }
        v = next;
    }
    let lo = delta.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let hi = delta.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    (-lo / g.dt, -hi / g.dt)
}

/// Tight subgraph and its nontrivial strongly connected components.
#[derive(Clone, Debug)]
pub struct TightStructure {
    /// Edge ids with u_dst - u_src - c0 - c dt >= -tol_tight, sorted.
    pub tight_edges: Vec<u32>,
    /// Nontrivial SCCs of the tight subgraph (size >= 2 or a tight
    /// self-loop), each sorted, ordered by smallest member.
    pub components: Vec<Vec<u32>>,
    /// Union of the components, sorted: the discrete Aubry set.
    pub aubry_nodes: Vec<u32>,
}

/// Check that `u` is a discrete subsolution at level `c` (defect <= tol_sub)
/// and extract the tight structure at slack tolerance `tol_tight`.
pub fn tight_structure(
    g: &CostGraph,
    u: &[f64],
    c: f64,
    tol_sub: f64,
    tol_tight: f64,
) -> Result<TightStructure> {
    let mut defect = f64::NEG_INFINITY;
    for e in &g.edges {
        defect = defect.max(u[e.dst as usize] - u[e.src as usize] - e.cost - c * g.dt);
    }
    if defect > tol_sub {
        return Err(Error::NotSubsolution { defect, tol: tol_sub });
    }
    let mut tight = Vec::new();
    for (id, e) in g.edges.iter().enumerate() {
        let slack = u[e.dst as usize] - u[e.src as usize] - e.cost - c * g.dt;
        if slack >= -tol_tight {
            tight.push(id as u32);
        }
    }
    let components = nontrivial_sccs(g, &tight);
    let mut aubry: Vec<u32> = components.iter().flatten().copied().collect();
    aubry.sort_unstable();
    Ok(TightStructure { tight_edges: tight, components, aubry_nodes: aubry })
}

/// Kosaraju on the subgraph spanned by `ids`. Keeps components that carry a
/// cycle: size >= 2, or a single node with a self-loop in the subset.
fn nontrivial_sccs(g: &CostGraph, ids: &[u32]) -> Vec<Vec<u32>> {
    let n = g.n_nodes();
    let mut out_adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut in_adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut self_loop = vec![false; n];
    for &id in ids {
        let e = &g.edges[id as usize];
        out_adj[e.src as usize].push(e.dst);
        in_adj[e.dst as usize].push(e.src);
        if e.src == e.dst {
            self_loop[e.src as usize] = true;
        }
    }
    for l in out_adj.iter_mut().chain(in_adj.iter_mut()) {
        l.sort_unstable();
    }

    // First pass: finishing order on out-edges, iterative.
    let mut finish: Vec<u32> = Vec::with_capacity(n);
    let mut state = vec![0u8; n]; // 0 fresh, 1 on stack, 2 done
    for s in 0..n {
        if state[s] != 0 {
            continue;
        }
        let mut stack: Vec<(u32, usize)> = vec![(s as u32, 0)];
        state[s] = 1;
        while let Some(top) = stack.last_mut() {
            let v = top.0 as usize;
            let adj = &out_adj[v];
            if top.1 < adj.len() {
                let w = adj[top.1] as usize;
                top.1 += 1;
                if state[w] == 0 {
                    state[w] = 1;
                    stack.push((w as u32, 0));
                }
            } else {
                state[v] = 2;
                finish.push(v as u32);
                stack.pop();
            }
        }
    }

    // Second pass: reverse graph in reverse finishing order.
    let mut comp = vec![u32::MAX; n];
    let mut components: Vec<Vec<u32>> = Vec::new();
    for &root in finish.iter().rev() {
        if comp[root as usize] != u32::MAX {
            continue;
        }
        let cid = components.len() as u32;
        let mut members = Vec::new();
        let mut stack = vec![root];
        comp[root as usize] = cid;
        while let Some(v) = stack.pop() {
            members.push(v);
            for &w in &in_adj[v as usize] {
                if comp[w as usize] == u32::MAX {
                    comp[w as usize] = cid;
                    stack.push(w);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }

    let mut nontrivial: Vec<Vec<u32>> = components
        .into_iter()
        .filter(|m| m.len() >= 2 || self_loop[m[0] as usize])
        .collect();
    nontrivial.sort_by_key(|m| m[0]);
    nontrivial
}

/// Probability measure on the edge set; weights align with `g.edges`.
#[derive(Clone, Debug)]
pub struct DiscreteMeasure {
    pub weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn from_cycle(n_edges: usize, cycle_edges: &[u32]) -> Self {
        let mut weights = vec![0.0; n_edges];
        let w = 1.0 / cycle_edges.len() as f64;
        for &id in cycle_edges {
            weights[id as usize] += w;
        }
        DiscreteMeasure { weights }
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Marginal on target nodes.
    pub fn node_marginal(&self, g: &CostGraph) -> Vec<f64> {
        let mut m = vec![0.0; g.n_nodes()];
        for (id, e) in g.edges.iter().enumerate() {
            m[e.dst as usize] += self.weights[id];
        }
        m
    }

    /// Average edge cost sum w_e c0_e; the discrete action is this over dt.
    pub fn mean_cost(&self, g: &CostGraph) -> f64 {
        g.edges.iter().zip(&self.weights).map(|(e, w)| w * e.cost).sum()
    }

    /// Average velocity sum w_e d_e / dt.
    pub fn mean_velocity(&self, g: &CostGraph) -> [f64; 2] {
        let mut v = [0.0; 2];
        for (id, e) in g.edges.iter().enumerate() {
            v[0] += self.weights[id] * e.disp[0];
            v[1] += self.weights[id] * e.disp[1];
        }
        [v[0] / g.dt, v[1] / g.dt]
    }

    /// max_j |inflow - outflow|: zero for circulations.
    pub fn conservation_defect(&self, g: &CostGraph) -> f64 {
        let mut net = vec![0.0f64; g.n_nodes()];
        for (id, e) in g.edges.iter().enumerate() {
            net[e.dst as usize] += self.weights[id];
            net[e.src as usize] -= self.weights[id];
        }
        net.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
    }

    /// Largest |sum w (phi(x_dst) - phi(x_src))| over the test functions
    /// phi = cos(k x_d), sin(k x_d), k <= 3: a closed measure annihilates
    /// every exact form.
    pub fn closedness_defect(&self, g: &CostGraph) -> f64 {
        let mut worst = 0.0f64;
        for d in 0..g.dim {
            for k in 1..=3 {
                let kk = k as f64;
                let mut sc = 0.0;
                let mut ss = 0.0;
                for (id, e) in g.edges.iter().enumerate() {
                    let w = self.weights[id];
                    if w == 0.0 {
                        continue;
                    }
                    let a = kk * g.coords[e.dst as usize][d];
                    let b = kk * g.coords[e.src as usize][d];
                    sc += w * (a.cos() - b.cos());
                    ss += w * (a.sin() - b.sin());
                }
                worst = worst.max(sc.abs()).max(ss.abs());
            }
        }
        worst
    }

    /// Nodes with positive target marginal, sorted.
    pub fn support_nodes(&self, g: &CostGraph, tol: f64) -> Vec<u32> {
        self.node_marginal(g)
            .iter()
            .enumerate()
            .filter(|&(_, &m)| m > tol)
            .map(|(j, _)| j as u32)
            .collect()
    }

    /// Edge ids with positive weight, sorted.
    pub fn support_edges(&self, tol: f64) -> Vec<u32> {
        self.weights
            .iter()
            .enumerate()
            .filter(|&(_, &w)| w > tol)
            .map(|(id, _)| id as u32)
            .collect()
    }
}

/// Mather measure from the Karp witness cycle.
pub fn mather_measure_karp(g: &CostGraph) -> Result<(DiscreteMeasure, f64)> {
    let cycle = karp_min_mean_cycle(g)?;
    Ok((DiscreteMeasure::from_cycle(g.n_edges(), &cycle.edges), cycle.mean))
}

/// Bellman-Ford negative cycle detector over explicit per-edge costs
/// (aligned with `g.edges`, all nodes start at distance zero). Returns the
/// cycle as (nodes, edges) or None when every cycle has cost >= -tol per
/// relaxation. Deterministic: edges are scanned in id order and only strict
/// improvements beyond tol are taken.
pub fn find_negative_cycle(
    g: &CostGraph,
    costs: &[f64],
    tol: f64,
) -> Option<(Vec<u32>, Vec<u32>)> {
    let n = g.n_nodes();
    let mut dist = vec![0.0f64; n];
    let mut pred = vec![u32::MAX; n];
    let mut witness = usize::MAX;
    for round in 0..=n {
        let mut improved = false;
        for (id, e) in g.edges.iter().enumerate() {
            let cand = dist[e.src as usize] + costs[id];
            if cand < dist[e.dst as usize] - tol {
                dist[e.dst as usize] = cand;
                pred[e.dst as usize] = id as u32;
                improved = true;
                witness = e.dst as usize;
            }
        }
        if !improved {
            return None;
        }
        if round == n {
            break;
        }
    }
    // Still relaxing after n rounds: walk preds n times to land on the cycle.
    let mut cur = witness;
    for _ in 0..n {
        let id = pred[cur];
        if id == u32::MAX {
            return None;
        }
        cur = g.edges[id as usize].src as usize;
    }
    let start = cur;
    let mut rev_edges = Vec::new();
    loop {
        let id = pred[cur];
        if id == u32::MAX {
            return None;
        }
        rev_edges.push(id);
        cur = g.edges[id as usize].src as usize;
        if cur == start {
            break;
        }
        if rev_edges.len() > n {
            return None;
        }
    }
    rev_edges.reverse();
    let nodes = rev_edges.iter().map(|&id| g.edges[id as usize].src).collect();
    Some((nodes, rev_edges))
}

#[derive(Clone, Debug)]
pub struct CirculationResult {
    pub measure: DiscreteMeasure,
    /// Final mean edge cost of the supporting cycle.
    pub mean: f64,
    /// Cycle-canceling rounds performed (zero when the start was optimal).
    pub rounds: usize,
}

/// Mather measure by Dinkelbach cycle canceling: reduce all edge costs by
/// the current cycle mean, look for a negative cycle in the reduced costs,
/// and switch to it. At the optimum no negative cycle remains, which is an
/// optimality certificate independent of how the start cycle was found.
pub fn mather_measure_circulation(
    g: &CostGraph,
    start: Option<(Vec<u32>, Vec<u32>)>,
    tol: f64,
) -> Result<CirculationResult> {
    let (_, mut edges) = match start {
        Some(c) => c,
        None => {
            let w = karp_min_mean_cycle(g)?;
            (w.nodes, w.edges)
        }
    };
    if edges.is_empty() {
        return Err(Error::NoCycle);
    }
    let limit = 10 * g.n_edges();
    let mut reduced = vec![0.0f64; g.n_edges()];
    let mut rounds = 0usize;
    loop {
        let mean: f64 =
            edges.iter().map(|&id| g.edges[id as usize].cost).sum::<f64>() / edges.len() as f64;
        for (id, e) in g.edges.iter().enumerate() {
            reduced[id] = e.cost - mean;
        }
        match find_negative_cycle(g, &reduced, tol) {
            Some((_, ce)) => {
                edges = ce;
                rounds += 1;
                if rounds > limit {
                    return Err(Error::IterationLimit(rounds));
                }
            }
            None => {
                return Ok(CirculationResult {
                    measure: DiscreteMeasure::from_cycle(g.n_edges(), &edges),
                    mean,
                    rounds,
                });
            }
        }
    }
}

/// Enumerate extreme Mather measures: per tight component, the component's
/// Karp witness plus a bounded DFS over elementary cycles, filtered to
/// near-optimal mean (<= -c dt + 1e-9 scale; tolerance-tight edges admit
/// cycles that are not actually optimal) and deduplicated by edge support.
pub fn enumerate_extreme_measures(
    g: &CostGraph,
    tight: &TightStructure,
    c: f64,
) -> Result<Vec<DiscreteMeasure>> {
    const MAX_CYCLES: usize = 64;
    const MAX_STEPS: usize = 200_000;
    let target_mean = -c * g.dt;
    let gate = target_mean + 1e-9 * g.cost_scale();

    let mut found: Vec<(Vec<u32>, Vec<u32>)> = Vec::new(); // (sorted support, edges)
    let push_cycle = |edges: &[u32], found: &mut Vec<(Vec<u32>, Vec<u32>)>| {
        let mean: f64 =
            edges.iter().map(|&id| g.edges[id as usize].cost).sum::<f64>() / edges.len() as f64;
        if mean > gate {
            return;
        }
        let mut support = edges.to_vec();
        support.sort_unstable();
        support.dedup();
        if found.iter().any(|(s, _)| *s == support) {
            return;
        }
        found.push((support, edges.to_vec()));
    };

    let mut steps = 0usize;
    for comp in &tight.components {
        let in_comp = {
            let mut mask = vec![false; g.n_nodes()];
            for &v in comp {
                mask[v as usize] = true;
            }
            mask
        };
        let ids: Vec<u32> = tight
            .tight_edges
            .iter()
            .copied()
            .filter(|&id| {
                let e = &g.edges[id as usize];
                in_comp[e.src as usize] && in_comp[e.dst as usize]
            })
            .collect();
        if let Some(w) = karp_subset(g, &ids) {
            push_cycle(&w.edges, &mut found);
        }
        if found.len() >= MAX_CYCLES {
            break;
        }

        // Elementary cycles by DFS, only via nodes >= the start node.
        let mut out_adj: Vec<Vec<u32>> = vec![Vec::new(); g.n_nodes()];
        for &id in &ids {
            out_adj[g.edges[id as usize].src as usize].push(id);
        }
        for l in &mut out_adj {
            l.sort_by_key(|&id| g.edges[id as usize].dst);
        }
        let depth_cap = (2 * comp.len()).min(64);
        for &s in comp {
            if found.len() >= MAX_CYCLES || steps >= MAX_STEPS {
                break;
            }
            let s = s as usize;
            let mut on_path = vec![false; g.n_nodes()];
            let mut path: Vec<u32> = Vec::new(); // edge ids
            // Stack of (node, next adjacency index).
            let mut stack: Vec<(usize, usize)> = vec![(s, 0)];
            on_path[s] = true;
            while let Some(top) = stack.last_mut() {
                steps += 1;
                if steps >= MAX_STEPS || found.len() >= MAX_CYCLES {
                    break;
                }
                let v = top.0;
                let adj = &out_adj[v];
                if top.1 >= adj.len() {
                    on_path[v] = false;
                    stack.pop();
                    path.pop();
                    continue;
                }
                let id = adj[top.1];
                top.1 += 1;
                let depth = stack.len();
                let w = g.edges[id as usize].dst as usize;
                if w == s {
                    path.push(id);
                    push_cycle(&path, &mut found);
                    path.pop();
                } else if w > s && !on_path[w] && depth < depth_cap {
                    on_path[w] = true;
                    path.push(id);
                    stack.push((w, 0));
                }
            }
        }
    }

    if found.is_empty() {
        return Err(Error::NoCycle);
    }
    found.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(found
        .into_iter()
        .map(|(_, edges)| DiscreteMeasure::from_cycle(g.n_edges(), &edges))
        .collect())
}
