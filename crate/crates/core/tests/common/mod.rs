//! Model builders shared by the integration suites. These mirror the shipped
//! configs so CSV-level and library-level runs exercise the same graphs.

use contact_kam::grid::{build_cost_graph, build_grid, CostGraph};
use contact_kam::model::{BaseFamily, Coupling, LagrangianModel, TrigPoly};

pub fn mechanical(
    n: usize,
    dt: f64,
    vmax: f64,
    potential: TrigPoly,
    lambda: TrigPoly,
    lambda_min: f64,
    lambda_max: f64,
) -> CostGraph {
    let model = LagrangianModel {
        dim: 1,
        base: BaseFamily::Mechanical { potential },
        coupling: Coupling::Linear { lambda },
        lambda_min,
        lambda_max,
    };
    let grid = build_grid(1, n, dt, vmax).expect("grid");
    build_cost_graph(&grid, &model).expect("graph")
}

/// W(x) = 1 - cos x, lambda = 1. Bottom at node 0, barrier h(0, pi) = 4.
pub fn pendulum(n: usize, dt: f64, vmax: f64) -> CostGraph {
    mechanical(
        n,
        dt,
        vmax,
        TrigPoly::new_1d(1.0, vec![-1.0], vec![]),
        TrigPoly::new_1d(1.0, vec![], vec![]),
        1.0,
        1.0,
    )
}

/// W(x) = (1 - cos 2x)/2, lambda = 1. Wells at 0 and pi, h(0, pi) = 2 sqrt 2.
pub fn double_well(n: usize, dt: f64, vmax: f64) -> CostGraph {
    mechanical(
        n,
        dt,
        vmax,
        TrigPoly::new_1d(0.5, vec![0.0, -0.5], vec![]),
        TrigPoly::new_1d(1.0, vec![], vec![]),
        1.0,
        1.0,
    )
}

/// Double well with the position-dependent coupling lambda = 1 + 0.5 cos x.
pub fn double_well_lambda(n: usize, dt: f64, vmax: f64) -> CostGraph {
    mechanical(
        n,
        dt,
        vmax,
        TrigPoly::new_1d(0.5, vec![0.0, -0.5], vec![]),
        TrigPoly::new_1d(1.0, vec![0.5], vec![]),
        0.5,
        1.5,
    )
}

/// W constant; c = -w exactly and every node is Aubry.
pub fn constant_potential(n: usize, dt: f64, vmax: f64, w: f64) -> CostGraph {
    mechanical(
        n,
        dt,
        vmax,
        TrigPoly::new_1d(w, vec![], vec![]),
        TrigPoly::new_1d(1.0, vec![], vec![]),
        1.0,
        1.0,
    )
}

/// L = |v - V|^2/2 with V(x) = 1.5 + 0.5 cos x and lambda = V. The rotation
/// v = V costs nothing, so c = 0 and the Aubry set is the whole circle.
pub fn drift_flow(n: usize, dt: f64, vmax: f64) -> CostGraph {
    let v = TrigPoly::new_1d(1.5, vec![0.5], vec![]);
    let model = LagrangianModel {
        dim: 1,
        base: BaseFamily::Drift { drift: vec![v.clone()] },
        coupling: Coupling::Linear { lambda: v },
        lambda_min: 1.0,
        lambda_max: 2.0,
    };
    let grid = build_grid(1, n, dt, vmax).expect("grid");
    build_cost_graph(&grid, &model).expect("graph")
}

/// Two-state chain with a closed-form sweep limit: u_eps = (0, min(0.2/eps,
/// 1/(1+eps))), so u0 = (0, 1) while the naive infimum of subsolution values
/// at B would be smaller.
pub fn two_node() -> CostGraph {
    CostGraph::from_parts(
        2,
        &[(0, 0, 0.0), (0, 1, 1.0), (1, 1, 0.2)],
        vec![1.0, 1.0],
        0.0,
        1.0,
    )
    .expect("synthetic graph")
}
