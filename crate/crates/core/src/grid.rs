//! Torus discretization and the periodic cost graph.
//!
//! Nodes are the points of a regular n^d lattice on [0, 2pi)^d, indexed
//! row-major (first coordinate is the major axis). An edge i -> j means the
//! one-step transition "move from x_i to x_j in time dt" and carries the cost
//!
//!   c0_ij = dt * L(x_j, d_ij / dt, 0)
//!
//! where d_ij is the minimal periodic displacement from x_i to x_j and the
//! running cost is evaluated at the target node. Displacements are the lattice
//! offsets o in (-n/2, n/2] per coordinate (each residue class exactly once;
//! at even n the antipodal offset is taken positive), kept when the Euclidean
//! length satisfies |d| <= vmax * dt. The offset o = 0 is always inside the
//! ball, so every node carries a self-loop: u <= v pointwise never breaks the
//! Lax-Oleinik minimum.

use crate::error::Error;
use crate::model::{coupling_g, coupling_g_du, LagrangianModel};
use crate::Result;
use std::f64::consts::TAU;

#[derive(Clone, Copy, Debug)]
pub struct TorusGrid {
    pub dim: usize,
    pub n: usize,
    pub dx: f64,
    pub dt: f64,
    pub vmax: f64,
}

pub fn build_grid(dim: usize, n: usize, dt: f64, vmax: f64) -> Result<TorusGrid> {
    if dim != 1 && dim != 2 {
        return Err(Error::BadGrid(format!("dimension must be 1 or 2, got {dim}")));
    }
    if n < 8 {
        return Err(Error::BadGrid(format!("need at least 8 points per axis, got {n}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::BadGrid(format!("time step must be positive, got {dt}")));
    }
    if !(vmax > 0.0 && vmax.is_finite()) {
        return Err(Error::BadGrid(format!("speed cap must be positive, got {vmax}")));
    }
    let dx = TAU / n as f64;
    if vmax * dt < dx {
        return Err(Error::BadGrid(format!(
            "vmax * dt = {:.6} < dx = {:.6}: the one-step ball holds only self-loops",
            vmax * dt,
            dx
        )));
    }
    Ok(TorusGrid { dim, n, dx, dt, vmax })
}

impl TorusGrid {
    pub fn n_nodes(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Row-major node index -> lattice coordinates (second entry 0 in 1D).
    pub fn coord(&self, idx: usize) -> [f64; 2] {
        match self.dim {
            1 => [idx as f64 * self.dx, 0.0],
            _ => [(idx / self.n) as f64 * self.dx, (idx % self.n) as f64 * self.dx],
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Edge {
    pub src: u32,
    pub dst: u32,
    /// Minimal periodic displacement x_dst - x_src (second entry 0 in 1D).
    pub disp: [f64; 2],
    pub cost: f64,
}

/// Dense periodic cost graph in CSR form, sorted by (dst, src) so that the
/// incoming edges of each target are contiguous. `out_order`/`out_start` give
/// the same edges regrouped by source. Coupling data (lambda per node plus a
/// shared kappa) rides along so solvers never need the continuous model.
#[derive(Clone, Debug)]
pub struct CostGraph {
    pub dim: usize,
    pub dt: f64,
    pub dx: f64,
    pub vmax: f64,
    pub coords: Vec<[f64; 2]>,
    pub edges: Vec<Edge>,
    in_start: Vec<u32>,
    out_order: Vec<u32>,
    out_start: Vec<u32>,
    pub lambda: Vec<f64>,
    pub kappa: f64,
}

pub fn build_cost_graph(grid: &TorusGrid, model: &LagrangianModel) -> Result<CostGraph> {
    if model.dim != grid.dim {
        return Err(Error::BadGrid(format!(
            "model dimension {} does not match grid dimension {}",
            model.dim, grid.dim
        )));
    }
    let n = grid.n;
    let n_nodes = grid.n_nodes();
    let radius = grid.vmax * grid.dt + 1e-12;

    // Offsets (-n/2, n/2] per axis: each residue exactly once, ties at the
    // antipode resolved to +pi.
    let lo = -((n as i64 - 1) / 2);
    let hi = n as i64 / 2;
    let offsets: Vec<i64> = (lo..=hi).collect();

    let coords: Vec<[f64; 2]> = (0..n_nodes).map(|j| grid.coord(j)).collect();
    let mut edges: Vec<Edge> = Vec::new();
    for j in 0..n_nodes {
        let xj = coords[j];
        let (j0, j1) = if grid.dim == 1 { (j, 0) } else { (j / n, j % n) };
        let mut push = |o0: i64, o1: i64| -> Result<()> {
            let d0 = o0 as f64 * grid.dx;
            let d1 = o1 as f64 * grid.dx;
            if (d0 * d0 + d1 * d1).sqrt() > radius {
                return Ok(());
            }
            let i0 = (j0 as i64 - o0).rem_euclid(n as i64) as usize;
            let i1 = (j1 as i64 - o1).rem_euclid(n as i64) as usize;
            let i = if grid.dim == 1 { i0 } else { i0 * n + i1 };
            let v = [d0 / grid.dt, d1 / grid.dt];
            let cost = grid.dt * model.eval_l(&xj[..grid.dim], &v[..grid.dim], 0.0);
            if !cost.is_finite() {
                return Err(Error::ModelViolation(format!(
                    "non-finite edge cost at target node {j}"
                )));
            }
            edges.push(Edge { src: i as u32, dst: j as u32, disp: [d0, d1], cost });
            Ok(())
        };
        if grid.dim == 1 {
            for &o0 in &offsets {
                push(o0, 0)?;
            }
        } else {
            for &o0 in &offsets {
                for &o1 in &offsets {
                    push(o0, o1)?;
                }
            }
        }
    }

    let lambda: Vec<f64> = (0..n_nodes).map(|j| model.lambda_at(&coords[j][..grid.dim])).collect();
    CostGraph::assemble(
        grid.dim,
        grid.dt,
        grid.dx,
        grid.vmax,
        coords,
        edges,
        lambda,
        model.kappa(),
    )
}

impl CostGraph {
    /// Build a graph from explicit edge data; used for synthetic models where
    /// the costs are hand-picked rather than sampled from a Lagrangian.
    /// Reported coordinates are equispaced on the circle, displacements zero.
    pub fn from_parts(
        n_nodes: usize,
        edge_list: &[(u32, u32, f64)],
        lambda: Vec<f64>,
        kappa: f64,
        dt: f64,
    ) -> Result<CostGraph> {
        if n_nodes == 0 {
            return Err(Error::BadGrid("synthetic graph needs at least one node".into()));
        }
        if lambda.len() != n_nodes {
            return Err(Error::BadGrid(format!(
                "coupling list has {} entries for {} nodes",
                lambda.len(),
                n_nodes
            )));
        }
        let dx = TAU / n_nodes as f64;
        let mut edges = Vec::with_capacity(edge_list.len());
        for &(src, dst, cost) in edge_list {
            if src as usize >= n_nodes || dst as usize >= n_nodes {
                return Err(Error::BadGrid(format!(
                    "edge {src} -> {dst} out of range for {n_nodes} nodes"
                )));
            }
            if !cost.is_finite() {
                return Err(Error::BadGrid(format!("non-finite cost on edge {src} -> {dst}")));
            }
            edges.push(Edge { src, dst, disp: [0.0, 0.0], cost });
        }
        let coords = (0..n_nodes).map(|j| [j as f64 * dx, 0.0]).collect();
        CostGraph::assemble(1, dt, dx, 0.0, coords, edges, lambda, kappa)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        dim: usize,
        dt: f64,
        dx: f64,
        vmax: f64,
        coords: Vec<[f64; 2]>,
        mut edges: Vec<Edge>,
        lambda: Vec<f64>,
        kappa: f64,
    ) -> Result<CostGraph> {
        let n_nodes = coords.len();
        edges.sort_by(|a, b| {
            (a.dst, a.src)
                .cmp(&(b.dst, b.src))
                .then(a.cost.partial_cmp(&b.cost).expect("finite costs"))
        });
        let mut in_start = vec![0u32; n_nodes + 1];
        for e in &edges {
            in_start[e.dst as usize + 1] += 1;
        }
        for j in 0..n_nodes {
            in_start[j + 1] += in_start[j];
        }
        let mut out_order: Vec<u32> = (0..edges.len() as u32).collect();
        out_order.sort_by_key(|&id| {
            let e = &edges[id as usize];
            (e.src, e.dst)
        });
        let mut out_start = vec![0u32; n_nodes + 1];
        for e in &edges {
            out_start[e.src as usize + 1] += 1;
        }
        for j in 0..n_nodes {
            out_start[j + 1] += out_start[j];
        }
        Ok(CostGraph {
            dim,
            dt,
            dx,
            vmax,
            coords,
            edges,
            in_start,
            out_order,
            out_start,
            lambda,
            kappa,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Indices into `edges` of the edges arriving at `j` (contiguous).
    pub fn in_edge_range(&self, j: usize) -> std::ops::Range<usize> {
        self.in_start[j] as usize..self.in_start[j + 1] as usize
    }

    /// Edge ids leaving node `i`, ordered by destination.
    pub fn out_edge_ids(&self, i: usize) -> &[u32] {
        &self.out_order[self.out_start[i] as usize..self.out_start[i + 1] as usize]
    }

    /// Coupling g at node j.
    pub fn coupling_g(&self, j: usize, u: f64) -> f64 {
        coupling_g(self.lambda[j], self.kappa, u)
    }

    /// dg/du at node j; the monotonicity handle of the implicit scheme.
    pub fn coupling_g_du(&self, j: usize, u: f64) -> f64 {
        coupling_g_du(self.lambda[j], self.kappa, u)
    }

    /// alpha(j, u) = g(j, u) / u extended continuously through u = 0.
    pub fn coupling_alpha(&self, j: usize, u: f64) -> f64 {
        if u.abs() < 1e-12 {
            coupling_g_du(self.lambda[j], self.kappa, 0.0)
        } else {
            coupling_g(self.lambda[j], self.kappa, u) / u
        }
    }

    /// Same costs and geometry, different coupling; for side-by-side runs of
    /// two couplings over one base Lagrangian.
    pub fn with_coupling(&self, lambda: Vec<f64>, kappa: f64) -> Result<CostGraph> {
        if lambda.len() != self.n_nodes() {
            return Err(Error::BadGrid(format!(
                "coupling list has {} entries for {} nodes",
                lambda.len(),
                self.n_nodes()
            )));
        }
        let mut g = self.clone();
        g.lambda = lambda;
        g.kappa = kappa;
        Ok(g)
    }

    /// Forward and backward reachability from node 0.
    pub fn is_strongly_connected(&self) -> bool {
        let n = self.n_nodes();
        if n == 0 {
            return false;
        }
        let forward = |start: usize, out: bool| {
            let mut seen = vec![false; n];
            let mut stack = vec![start];
            seen[start] = true;
            let mut count = 1usize;
            while let Some(v) = stack.pop() {
                if out {
                    for &id in self.out_edge_ids(v) {
                        let w = self.edges[id as usize].dst as usize;
                        if !seen[w] {
                            seen[w] = true;
                            count += 1;
                            stack.push(w);
                        }
                    }
                } else {
                    for id in self.in_edge_range(v) {
                        let w = self.edges[id].src as usize;
                        if !seen[w] {
                            seen[w] = true;
                            count += 1;
                            stack.push(w);
                        }
                    }
                }
            }
            count
        };
        forward(0, true) == n && forward(0, false) == n
    }

    /// Largest |cost| over the edge set; scale reference for tolerances.
    pub fn cost_scale(&self) -> f64 {
        self.edges.iter().fold(1.0f64, |a, e| a.max(e.cost.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BaseFamily, Coupling, LagrangianModel, TrigPoly};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn pendulum() -> LagrangianModel {
        LagrangianModel {
            dim: 1,
            base: BaseFamily::Mechanical { potential: TrigPoly::new_1d(1.0, vec![-1.0], vec![]) },
            coupling: Coupling::Linear { lambda: TrigPoly::constant(1, 1.0) },
            lambda_min: 1.0,
            lambda_max: 1.0,
        }
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(matches!(build_grid(3, 16, 0.1, 2.0), Err(Error::BadGrid(_))));
        assert!(matches!(build_grid(1, 4, 0.1, 2.0), Err(Error::BadGrid(_))));
        assert!(matches!(build_grid(1, 16, 0.0, 2.0), Err(Error::BadGrid(_))));
        assert!(matches!(build_grid(1, 16, -0.5, 2.0), Err(Error::BadGrid(_))));
        // vmax * dt = 0.2 < dx = pi/4: only self-loops would survive.
        assert!(matches!(build_grid(1, 8, 0.1, 2.0), Err(Error::BadGrid(_))));
    }

    #[test]
    fn out_degree_small_circle() {
        // n = 8, dt = 0.5, vmax = 2: |o| * pi/4 <= 1.0 keeps o in {-1, 0, 1}.
        let grid = build_grid(1, 8, 0.5, 2.0).unwrap();
        let g = build_cost_graph(&grid, &pendulum()).unwrap();
        assert_eq!(g.n_nodes(), 8);
        assert_eq!(g.n_edges(), 24, "3 out-edges per node");
        for i in 0..8 {
            assert_eq!(g.out_edge_ids(i).len(), 3, "node {i} out-degree");
            assert_eq!(g.in_edge_range(i).len(), 3, "node {i} in-degree");
        }
    }

    #[test]
    fn out_degree_production_circle() {
        // n = 200, dt = 0.05, vmax = 3: |o| * dx <= 0.15 keeps |o| <= 4.
        let grid = build_grid(1, 200, 0.05, 3.0).unwrap();
        let g = build_cost_graph(&grid, &pendulum()).unwrap();
        assert_eq!(g.n_edges(), 200 * 9);
    }

    #[test]
    fn out_degree_two_dimensional() {
        // Euclidean ball of radius 1.0 over the pi/4 lattice: the axis
        // neighbours fit (0.785), the diagonals do not (1.111).
        let grid = build_grid(2, 8, 0.5, 2.0).unwrap();
        let h = crate::model::Harmonics { cos: vec![-1.0], sin: vec![] };
        let w = TrigPoly { constant: 2.0, dims: vec![h.clone(), h] };
        let model = LagrangianModel {
            dim: 2,
            base: BaseFamily::Mechanical { potential: w },
            coupling: Coupling::Linear { lambda: TrigPoly::constant(2, 1.0) },
            lambda_min: 1.0,
            lambda_max: 1.0,
        };
        let g = build_cost_graph(&grid, &model).unwrap();
        assert_eq!(g.n_nodes(), 64);
        assert_eq!(g.n_edges(), 64 * 5, "self-loop plus 4 axis neighbours");
    }

    #[test]
    fn edge_costs_use_target_point() {
        let grid = build_grid(1, 8, 0.5, 2.0).unwrap();
        let g = build_cost_graph(&grid, &pendulum()).unwrap();
        // Edge into node 0 (x = 0, W = 0) with displacement pi/4:
        // cost = dt * ((d/dt)^2 / 2 + 0).
        let d = PI / 4.0;
        let expected = 0.5 * ((d / 0.5) * (d / 0.5) / 2.0);
        let e = g.edges[g.in_edge_range(0)]
            .iter()
            .find(|e| (e.disp[0] - d).abs() < 1e-12)
            .expect("edge with displacement pi/4 into node 0");
        assert!((e.cost - expected).abs() < 1e-14, "cost {} vs {expected}", e.cost);
        assert_eq!(e.src, 7, "source is one step behind the target");

        // Self-loop at node k sits at x = k pi/4 and costs dt * W(x).
        for k in 0..8 {
            let x = k as f64 * PI / 4.0;
            let loop_edge = g.edges[g.in_edge_range(k)]
                .iter()
                .find(|e| e.src == k as u32)
                .expect("self-loop");
            let expected = 0.5 * (1.0 - x.cos());
            assert!(
                (loop_edge.cost - expected).abs() < 1e-14,
                "self-loop cost at node {k}: {} vs {expected}",
                loop_edge.cost
            );
        }
    }

    #[test]
    fn antipodal_displacement_is_positive() {
        // vmax * dt = 4 > pi admits every offset; the antipode must enter
        // with d = +pi, never -pi.
        let grid = build_grid(1, 8, 1.0, 4.0).unwrap();
        let g = build_cost_graph(&grid, &pendulum()).unwrap();
        assert_eq!(g.n_edges(), 64);
        for j in 0..8 {
            let pis: Vec<f64> = g.edges[g.in_edge_range(j)]
                .iter()
                .filter(|e| (e.disp[0].abs() - PI).abs() < 1e-12)
                .map(|e| e.disp[0])
                .collect();
            assert_eq!(pis.len(), 1, "one antipodal edge into node {j}");
            assert!(pis[0] > 0.0, "antipodal displacement must be +pi, got {}", pis[0]);
        }
    }

    #[test]
    fn csr_views_agree() {
        let grid = build_grid(1, 32, 0.1, 2.0).unwrap();
        let g = build_cost_graph(&grid, &pendulum()).unwrap();
        let mut seen = vec![false; g.n_edges()];
        for i in 0..g.n_nodes() {
            for &id in g.out_edge_ids(i) {
                assert_eq!(g.edges[id as usize].src as usize, i);
                seen[id as usize] = true;
            }
        }
        assert!(seen.iter().all(|&s| s), "every edge appears in exactly one out-list");
        for j in 0..g.n_nodes() {
            for id in g.in_edge_range(j) {
                assert_eq!(g.edges[id].dst as usize, j);
            }
        }
    }

    #[test]
    fn builds_are_deterministic() {
        let grid = build_grid(1, 64, 0.1, 2.0).unwrap();
        let a = build_cost_graph(&grid, &pendulum()).unwrap();
        let b = build_cost_graph(&grid, &pendulum()).unwrap();
        assert_eq!(a.n_edges(), b.n_edges());
        for (ea, eb) in a.edges.iter().zip(&b.edges) {
            assert_eq!(ea.src, eb.src);
            assert_eq!(ea.dst, eb.dst);
            assert_eq!(ea.cost.to_bits(), eb.cost.to_bits(), "bitwise-equal costs");
        }
    }

    #[test]
    fn synthetic_graph_and_connectivity() {
        let one_way = CostGraph::from_parts(
            2,
            &[(0, 0, 0.1), (1, 1, 0.2), (0, 1, 0.0)],
            vec![1.0, 1.0],
            0.0,
            0.5,
        )
        .unwrap();
        assert!(!one_way.is_strongly_connected());

        let two_way = CostGraph::from_parts(
            2,
            &[(0, 0, 0.1), (1, 1, 0.2), (0, 1, 0.0), (1, 0, 0.0)],
            vec![1.0, 1.0],
            0.0,
            0.5,
        )
        .unwrap();
        assert!(two_way.is_strongly_connected());

        assert!(CostGraph::from_parts(2, &[(0, 3, 0.0)], vec![1.0, 1.0], 0.0, 0.5).is_err());
        assert!(CostGraph::from_parts(2, &[(0, 1, f64::NAN)], vec![1.0, 1.0], 0.0, 0.5).is_err());
    }

    #[test]
    fn grid_graph_is_strongly_connected() {
        let grid = build_grid(1, 16, 0.25, 2.0).unwrap();
        let g = build_cost_graph(&grid, &pendulum()).unwrap();
        assert!(g.is_strongly_connected());
    }

    #[test]
    fn coupling_alpha_is_continuous_at_zero() {
        let g = CostGraph::from_parts(1, &[(0, 0, 0.0)], vec![1.3], 0.7, 0.5).unwrap();
        let at_zero = g.coupling_alpha(0, 0.0);
        let nearby = g.coupling_alpha(0, 1e-9);
        assert!((at_zero - (-1.3)).abs() < 1e-12);
        assert!((at_zero - nearby).abs() < 1e-8);
    }

    proptest! {
        #[test]
        fn degrees_are_translation_invariant(
            n in 8usize..40,
            dt in 0.05f64..0.5,
            vmax in 1.0f64..4.0,
        ) {
            prop_assume!(vmax * dt >= TAU / n as f64);
            let grid = build_grid(1, n, dt, vmax).unwrap();
            let g = build_cost_graph(&grid, &pendulum()).unwrap();
            let d0 = g.out_edge_ids(0).len();
            for i in 0..n {
                prop_assert_eq!(g.out_edge_ids(i).len(), d0);
                prop_assert_eq!(g.in_edge_range(i).len(), d0);
                // Self-loop always present.
                prop_assert!(g.edges[g.in_edge_range(i)].iter().any(|e| e.src as usize == i));
            }
        }
    }
}
