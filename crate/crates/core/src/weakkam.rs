//! Implicit Lax-Oleinik iteration for the discounted/contact equation.
//!
//! The discrete equation at coupling strength eps > 0 reads
//!
//!   u_j = min_i (u_i + c0_ij) + c dt + dt g_j(eps u_j)
//!
//! per node j, with g_j the coupling at the target node. The update is
//! implicit in u_j only: the min decouples from the scalar solve because the
//! coupling term depends on the target value alone, so each Jacobi sweep is
//! "min first, then solve the scalar equation". The scalar map is strictly
//! monotone (d/dw of w - dt g(eps w) is at least 1 + eps delta dt), so the
//! node value is unique; the sweep map contracts with factor
//! 1/(1 + eps delta dt), delta = min_j lambda_j, and the stopping rule
//! converts that into an actual sup-norm error bound: we stop once
//!
//!   max_j |u^{k+1}_j - u^k_j| <= tol_fix * eps * delta * dt
//!
//! which guarantees ||u - u*|| <= tol_fix (plus a machine-precision floor).
//!
//! Sweeps are Jacobi, never Gauss-Seidel, and every reduction runs in a fixed
//! order, so results are bitwise identical across thread counts.

use crate::error::Error;
use crate::exec::map_indexed;
use crate::grid::CostGraph;
use crate::Result;

#[derive(Clone, Debug)]
pub struct ValueField {
    pub values: Vec<f64>,
    pub eps: f64,
    pub iterations: usize,
    pub final_change: f64,
}

/// b_j = min over incoming edges of u_src + c0, with the argmin edge.
/// In-edges are scanned in (dst, src) order with strict improvement, so ties
/// go to the smallest source index.
pub fn lax_oleinik_min(g: &CostGraph, u: &[f64], j: usize) -> (f64, u32) {
    let mut best = f64::INFINITY;
    let mut best_id = u32::MAX;
    for id in g.in_edge_range(j) {
        let e = &g.edges[id];
        let cand = u[e.src as usize] + e.cost;
        if cand < best {
            best = cand;
            best_id = id as u32;
        }
    }
    (best, best_id)
}

/// Solve w = b + c dt + dt g_j(eps w) for the unique root. Linear couplings
/// solve in closed form; otherwise safeguarded Newton on the increasing
/// function F(w) = w - b - c dt - dt g_j(eps w).
pub fn solve_node_value(g: &CostGraph, j: usize, b: f64, c: f64, eps: f64) -> f64 {
    let rhs = b + c * g.dt;
    if g.kappa == 0.0 {
        // w (1 + dt lambda eps) = rhs.
        return rhs / (1.0 + g.dt * g.lambda[j] * eps);
    }
    let f = |w: f64| w - rhs - g.dt * g.coupling_g(j, eps * w);
    let fp = |w: f64| 1.0 - g.dt * eps * g.coupling_g_du(j, eps * w);

    // Bracket the root around the linear-coupling guess.
    let mut w = rhs / (1.0 + g.dt * g.lambda[j] * eps);
    let mut step = 1.0 + rhs.abs();
    let (mut lo, mut hi);
    if f(w) <= 0.0 {
        lo = w;
        hi = w + step;
        while f(hi) < 0.0 {
            lo = hi;
            step *= 2.0;
            hi += step;
        }
    } else {
        hi = w;
        lo = w - step;
        while f(lo) > 0.0 {
            hi = lo;
            step *= 2.0;
            lo -= step;
        }
    }
    for _ in 0..200 {
        let fw = f(w);
        if fw <= 0.0 {
            lo = lo.max(w);
        } else {
            hi = hi.min(w);
        }
        if hi - lo <= 1e-14 * (1.0 + w.abs()) {
            break;
        }
        let newton = w - fw / fp(w);
        w = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    0.5 * (lo + hi)
}

/// One Jacobi sweep of the implicit operator.
pub fn lax_oleinik_step(g: &CostGraph, u: &[f64], c: f64, eps: f64) -> Vec<f64> {
    map_indexed(g.n_nodes(), |j| {
        let (b, _) = lax_oleinik_min(g, u, j);
        solve_node_value(g, j, b, c, eps)
    })
}

/// Iterate from u = init until the contraction-certified error bound drops
/// below tol_fix. Fails with ContractionViolated when eps (Delta + 9k/8) dt
/// is not below 1, and NoConvergence past max_iter sweeps.
pub fn solve_contact_from(
    g: &CostGraph,
    c: f64,
    eps: f64,
    init: &[f64],
    tol_fix: f64,
    max_iter: usize,
) -> Result<ValueField> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!("coupling strength must be positive, got {eps}")));
    }
    let delta_lo = g.lambda.iter().copied().fold(f64::INFINITY, f64::min);
    let delta_hi = g.lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        + g.kappa * crate::model::MAX_CUBIC_SLOPE;
    if delta_lo <= 0.0 {
        return Err(Error::ModelViolation(format!(
            "coupling lower bound must be positive, got {delta_lo}"
        )));
    }
    let product = eps * delta_hi * g.dt;
    if product >= 1.0 {
        return Err(Error::ContractionViolated(product));
    }
    for j in 0..g.n_nodes() {
        if g.in_edge_range(j).is_empty() {
            return Err(Error::BadGrid(format!("node {j} has no incoming edges")));
        }
    }

    let mut u = init.to_vec();
    let mut change = f64::INFINITY;
    for k in 1..=max_iter {
        let next = lax_oleinik_step(g, &u, c, eps);
        change = 0.0;
        let mut umax = 0.0f64;
        for j in 0..u.len() {
            change = change.max((next[j] - u[j]).abs());
            umax = umax.max(next[j].abs());
        }
        u = next;
        if !change.is_finite() {
            return Err(Error::NonFiniteState { step: k });
        }
        let thresh = (tol_fix * eps * delta_lo * g.dt).max(1e-15 * (1.0 + umax));
        if change <= thresh {
            return Ok(ValueField { values: u, eps, iterations: k, final_change: change });
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, last_change: change })
}

/// [`solve_contact_from`] starting at u = 0.
pub fn solve_contact(
    g: &CostGraph,
    c: f64,
    eps: f64,
    tol_fix: f64,
    max_iter: usize,
) -> Result<ValueField> {
    let zero = vec![0.0; g.n_nodes()];
    solve_contact_from(g, c, eps, &zero, tol_fix, max_iter)
}

/// max_j |u_j - (b_j + c dt + dt g_j(eps u_j))|: how far u sits from being a
/// fixed point of the implicit operator.
pub fn fixed_point_residual(g: &CostGraph, u: &[f64], c: f64, eps: f64) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..g.n_nodes() {
        let (b, _) = lax_oleinik_min(g, u, j);
        let r = u[j] - (b + c * g.dt + g.dt * g.coupling_g(j, eps * u[j]));
        worst = worst.max(r.abs());
    }
    worst
}

/// max over edges of u_dst - u_src - c0 - c dt; nonpositive (up to tol) for
/// discrete subsolutions.
pub fn subsolution_defect(g: &CostGraph, u: &[f64], c: f64) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for e in &g.edges {
        worst = worst.max(u[e.dst as usize] - u[e.src as usize] - e.cost - c * g.dt);
    }
    worst
}

/// Discrete Lipschitz constant max |u_dst - u_src| / |disp| over moving
/// edges.
pub fn discrete_lipschitz(g: &CostGraph, u: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for e in &g.edges {
        let len = (e.disp[0] * e.disp[0] + e.disp[1] * e.disp[1]).sqrt();
        if len > 0.0 {
            worst = worst.max((u[e.dst as usize] - u[e.src as usize]).abs() / len);
        }
    }
    worst
}

/// Walk `steps` calibrated steps backward from `start`: each step moves to
/// the argmin of u_src + c0 over incoming edges. Returns (nodes, edges) with
/// nodes[0] = start and edges[k] running nodes[k+1] -> nodes[k].
pub fn backward_calibrated_path(
    g: &CostGraph,
    u: &[f64],
    start: usize,
    steps: usize,
) -> (Vec<u32>, Vec<u32>) {
    let mut nodes = Vec::with_capacity(steps + 1);
    let mut edges = Vec::with_capacity(steps);
    let mut cur = start;
    nodes.push(start as u32);
    for _ in 0..steps {
        let (_, id) = lax_oleinik_min(g, u, cur);
        debug_assert_ne!(id, u32::MAX);
        edges.push(id);
        cur = g.edges[id as usize].src as usize;
        nodes.push(cur as u32);
    }
    (nodes, edges)
}
