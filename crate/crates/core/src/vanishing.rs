//! The vanishing-coupling sweep and both characterizations of its limit:
//! the selection formula over Mather measures and the constraint-set
//! membership test, plus the occupation-measure diagnostic and the
//! discounted-vs-contact comparison.

use std::collections::BTreeMap;

use crate::barrier::{potential_to, BarrierMatrix};
use crate::critical::DiscreteMeasure;
use crate::error::Error;
use crate::grid::CostGraph;
use crate::weakkam::{
    backward_calibrated_path, discrete_lipschitz, solve_contact, ValueField,
};
use crate::Result;

/// Fixed-point solver knobs shared by every sweep.
#[derive(Clone, Copy, Debug)]
pub struct SolveParams {
    pub tol_fix: f64,
    pub max_iter: usize,
}

impl Default for SolveParams {
    fn default() -> Self {
        SolveParams { tol_fix: 1e-10, max_iter: 2_000_000 }
    }
}

/// Family of solutions u_eps along a descending eps list, with Cauchy gaps
/// and the extrapolated limit.
#[derive(Clone, Debug)]
pub struct SweepResult {
    pub eps: Vec<f64>,
    pub fields: Vec<ValueField>,
    /// gaps[k] = sup |u_{eps_k} - u_{eps_{k+1}}|.
    pub gaps: Vec<f64>,
    /// Discrete Lipschitz estimate per eps.
    pub lipschitz: Vec<f64>,
    /// The raw smallest-eps field.
    pub u0_raw: Vec<f64>,
    /// Linear-in-eps Richardson extrapolation over the last three entries
    /// (fewer entries degrade to a two-point line or the raw field).
    pub u0_direct: Vec<f64>,
}

/// Per-node intercept of the least-squares line u(eps) = a + b eps.
fn extrapolate_to_zero(eps: &[f64], fields: &[&[f64]]) -> Vec<f64> {
    let m = eps.len();
    let n = fields[0].len();
    if m == 1 {
        return fields[0].to_vec();
    }
    let mean_e = eps.iter().sum::<f64>() / m as f64;
    let var_e: f64 = eps.iter().map(|e| (e - mean_e) * (e - mean_e)).sum();
    let mut out = vec![0.0; n];
    for j in 0..n {
        let mean_u = fields.iter().map(|f| f[j]).sum::<f64>() / m as f64;
        let cov: f64 = eps
            .iter()
            .zip(fields)
            .map(|(e, f)| (e - mean_e) * (f[j] - mean_u))
            .sum();
        let slope = cov / var_e;
        out[j] = mean_u - slope * mean_e;
    }
    out
}

/// Solve the contact equation along a strictly decreasing eps list. Every
/// solve starts from u = 0 so the sweep output is independent of the list's
/// granularity.
pub fn sweep(g: &CostGraph, c: f64, eps_list: &[f64], params: &SolveParams) -> Result<SweepResult> {
    if eps_list.is_empty() {
        return Err(Error::Config("eps list is empty".into()));
    }
    for w in eps_list.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::Config(format!(
                "eps list must be strictly decreasing, got {} before {}",
                w[0], w[1]
            )));
        }
    }
    if *eps_list.last().unwrap() <= 0.0 {
        return Err(Error::Config("eps values must be positive".into()));
    }
    let mut fields = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        fields.push(solve_contact(g, c, eps, params.tol_fix, params.max_iter)?);
    }
    let gaps: Vec<f64> = fields
        .windows(2)
        .map(|w| {
            w[0].values
                .iter()
                .zip(&w[1].values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let lipschitz = fields.iter().map(|f| discrete_lipschitz(g, &f.values)).collect();
    let u0_raw = fields.last().unwrap().values.clone();
    let tail = eps_list.len().min(3);
    let eps_tail = &eps_list[eps_list.len() - tail..];
    let field_tail: Vec<&[f64]> =
        fields[fields.len() - tail..].iter().map(|f| f.values.as_slice()).collect();
    let u0_direct = extrapolate_to_zero(eps_tail, &field_tail);
    Ok(SweepResult { eps: eps_list.to_vec(), fields, gaps, lipschitz, u0_raw, u0_direct })
}

/// Which weight enters the measure average of barrier rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weighting {
    /// Plain measure average (the discounted corollary).
    Unweighted,
    /// Coupling-derivative weights w(y) = dL/du(y, v(y), 0).
    CouplingDerivative,
}

/// Weighted barrier averages and their pointwise infimum.
#[derive(Clone, Debug)]
pub struct SelectionReport {
    /// One averaged barrier field per measure.
    pub h_mu: Vec<Vec<f64>>,
    /// Pointwise minimum over the measures.
    pub u_hat: Vec<f64>,
    /// Mean edge velocity of each measure (the v(y) entering the weights).
    pub mean_velocities: Vec<[f64; 2]>,
    /// Largest weight seen on a supported node; must stay strictly negative.
    pub max_weight: f64,
}

/// Evaluate the selection formula over a list of Mather measures.
///
/// For each measure, h_mu(x) = [sum_y h(y,x) w(y) mu(y)] / [sum_y w(y) mu(y)]
/// where mu is the node marginal. Unweighted averaging sets w = -1, which
/// cancels in the ratio. Atomic measures make the weight invisible either
/// way.
pub fn selection_inf(
    g: &CostGraph,
    bm: &BarrierMatrix,
    measures: &[DiscreteMeasure],
    weighting: Weighting,
) -> Result<SelectionReport> {
    if measures.is_empty() {
        return Err(Error::EmptyMeasureList);
    }
    let n = g.n_nodes();
    let mut h_mu = Vec::with_capacity(measures.len());
    let mut mean_velocities = Vec::with_capacity(measures.len());
    let mut max_weight = f64::NEG_INFINITY;
    for (mi, mu) in measures.iter().enumerate() {
        if (mu.mass() - 1.0).abs() > 1e-9 {
            return Err(Error::BadMeasure(format!(
                "measure {mi} has mass {:.6}, expected 1",
                mu.mass()
            )));
        }
        let marginal = mu.node_marginal(g);
        for (y, &m) in marginal.iter().enumerate() {
            if m > 1e-12 && !bm.aubry.contains(&(y as u32)) {
                return Err(Error::BadMeasure(format!(
                    "measure {mi} puts weight {m:.3e} on node {y} off the Aubry set"
                )));
            }
        }
        mean_velocities.push(mu.mean_velocity(g));
        let mut num = vec![0.0; n];
        let mut den = 0.0;
        for (y, &m) in marginal.iter().enumerate() {
            if m <= 0.0 {
                continue;
            }
            let w = match weighting {
                Weighting::Unweighted => -1.0,
                Weighting::CouplingDerivative => g.coupling_g_du(y, 0.0),
            };
            if w > max_weight {
                max_weight = w;
            }
            den += w * m;
            let row = bm.row(y);
            for (acc, &hval) in num.iter_mut().zip(row) {
                *acc += hval * w * m;
            }
        }
        if !(den < 0.0) {
            return Err(Error::BadMeasure(format!(
                "degenerate weight normalization {den:.3e} for measure {mi}"
            )));
        }
        for v in num.iter_mut() {
            *v /= den;
        }
        h_mu.push(num);
    }
    let mut u_hat = h_mu[0].clone();
    for field in &h_mu[1..] {
        for (a, &b) in u_hat.iter_mut().zip(field) {
            if b < *a {
                *a = b;
            }
        }
    }
    Ok(SelectionReport { h_mu, u_hat, mean_velocities, max_weight })
}

/// Constraint-set integrals I_mu = sum_y u(y) dL/du(y, v(y), 0) mu(y).
/// Membership requires I_mu >= -tol_con for every measure.
pub fn constraint_check(g: &CostGraph, u: &[f64], measures: &[DiscreteMeasure]) -> Vec<f64> {
    measures
        .iter()
        .map(|mu| {
            mu.node_marginal(g)
                .iter()
                .enumerate()
                .map(|(y, &m)| u[y] * g.coupling_g_du(y, 0.0) * m)
                .sum()
        })
        .collect()
}

/// Constraint-set witness rooted at y: omega(x) = -Phi(x, y) + anchor.
/// A reverse potential is a subsolution in x, so omega is one too.
pub fn witness_field(
    g: &CostGraph,
    c: f64,
    y: usize,
    anchor: f64,
    tol_tight: f64,
) -> Result<Vec<f64>> {
    let col = potential_to(g, c, y, tol_tight)?;
    Ok(col.into_iter().map(|phi| anchor - phi).collect())
}

/// Discounted occupation measure of the backward calibrated path.
#[derive(Clone, Debug)]
pub struct OccupationReport {
    /// Normalized edge measure.
    pub measure: DiscreteMeasure,
    /// Mass before normalization; close to 1/lambda for constant couplings.
    pub raw_mass: f64,
    /// Closedness defect of the normalized measure (trig test functions).
    pub closedness: f64,
    /// Action gap: mean running cost of the normalized measure plus c.
    pub action_gap: f64,
    pub start: usize,
    pub horizon: usize,
}

/// Walk the calibrated path backward from `start` for `horizon` steps and
/// accumulate discounted edge weights eps dt exp(-eps int |dL/du|). The
/// trapezoidal average of dL/du over each step sets the local decay rate.
pub fn occupation_measure(
    g: &CostGraph,
    field: &ValueField,
    c: f64,
    start: usize,
    horizon: usize,
) -> Result<OccupationReport> {
    let eps = field.eps;
    let delta_lo = g.lambda.iter().copied().fold(f64::INFINITY, f64::min);
    let needed = (10.0 / (eps * delta_lo * g.dt)).ceil() as usize;
    if horizon < needed {
        return Err(Error::Config(format!(
            "horizon {horizon} too short for eps {eps}: need at least {needed} steps"
        )));
    }
    let u = &field.values;
    let (nodes, edges) = backward_calibrated_path(g, u, start, horizon);
    let mut weights = vec![0.0; g.n_edges()];
    let mut beta = 1.0f64;
    let mut raw_mass = 0.0;
    for (k, &id) in edges.iter().enumerate() {
        let w = eps * g.dt * beta;
        weights[id as usize] += w;
        raw_mass += w;
        let a = nodes[k] as usize;
        let b = nodes[k + 1] as usize;
        let rate = 0.5
            * (g.coupling_g_du(a, eps * u[a]) + g.coupling_g_du(b, eps * u[b]));
        // rate <= -delta < 0, so beta decays walking into the past.
        beta *= (eps * rate * g.dt).exp();
        if !beta.is_finite() {
            return Err(Error::NonFiniteState { step: k });
        }
    }
    if raw_mass <= 0.0 {
        return Err(Error::BadMeasure("occupation weights vanished".into()));
    }
    for w in weights.iter_mut() {
        *w /= raw_mass;
    }
    let measure = DiscreteMeasure { weights };
    let closedness = measure.closedness_defect(g);
    let action_gap = measure.mean_cost(g) / g.dt + c;
    Ok(OccupationReport { measure, raw_mass, closedness, action_gap, start, horizon })
}

/// Model-derived a-priori bounds for the whole sweep: a sup bound from the
/// potential's spread and the matching Lipschitz constant of the scheme.
#[derive(Clone, Copy, Debug)]
pub struct UniformBounds {
    pub sup_bound: f64,
    pub lip_bound: f64,
}

pub fn uniform_bounds(g: &CostGraph, bm: &BarrierMatrix, c: f64) -> UniformBounds {
    let max_phi = bm
        .phi
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(0.0f64, |a, b| a.max(b.abs()));
    let sup_bound = 2.0 * max_phi + 1.0;
    let delta_hi = g.lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        + g.kappa * crate::model::MAX_CUBIC_SLOPE;
    let max_cost = g.edges.iter().map(|e| e.cost).fold(f64::NEG_INFINITY, f64::max);
    let mut min_len = f64::INFINITY;
    for e in &g.edges {
        let len = (e.disp[0] * e.disp[0] + e.disp[1] * e.disp[1]).sqrt();
        if len > 0.0 && len < min_len {
            min_len = len;
        }
    }
    // u_j - u_i <= c0 + c dt + dt sup|g| over any edge; divide by its length.
    let lip_bound = if min_len.is_finite() {
        (max_cost + c.abs() * g.dt + g.dt * delta_hi * sup_bound) / min_len
    } else {
        f64::INFINITY
    };
    UniformBounds { sup_bound, lip_bound }
}

/// Side-by-side sweep of a discounted model (lambda = 1) and a general
/// contact model sharing the same running cost.
#[derive(Clone, Debug)]
pub struct CompareReport {
    pub u0_discounted: Vec<f64>,
    pub u0_contact: Vec<f64>,
    pub u_hat_unweighted: Vec<f64>,
    pub u_hat_weighted: Vec<f64>,
    /// All pairwise sup-norm distances between the four fields.
    pub norms: BTreeMap<String, f64>,
    /// True when the two direct limits differ beyond tol_gap.
    pub gap_detected: bool,
    pub tol_gap: f64,
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Run both sweeps and both selection formulas over the same Mather
/// measures. The graphs must share edges and costs; only the coupling
/// differs.
pub fn compare_discounted_contact(
    g_discounted: &CostGraph,
    g_contact: &CostGraph,
    c: f64,
    bm: &BarrierMatrix,
    measures: &[DiscreteMeasure],
    eps_list: &[f64],
    params: &SolveParams,
    tol_gap: f64,
) -> Result<CompareReport> {
    if g_discounted.n_edges() != g_contact.n_edges() {
        return Err(Error::Config("comparison graphs have different edge sets".into()));
    }
    let sweep_f = sweep(g_discounted, c, eps_list, params)?;
    let sweep_g = sweep(g_contact, c, eps_list, params)?;
    let unweighted = selection_inf(g_discounted, bm, measures, Weighting::Unweighted)?;
    let weighted = selection_inf(g_contact, bm, measures, Weighting::CouplingDerivative)?;
    let fields: [(&str, &[f64]); 4] = [
        ("u0_discounted", &sweep_f.u0_direct),
        ("u0_contact", &sweep_g.u0_direct),
        ("u_hat_unweighted", &unweighted.u_hat),
        ("u_hat_weighted", &weighted.u_hat),
    ];
    let mut norms = BTreeMap::new();
    for i in 0..4 {
        for j in (i + 1)..4 {
            norms.insert(
                format!("{}|{}", fields[i].0, fields[j].0),
                sup_dist(fields[i].1, fields[j].1),
            );
        }
    }
    let gap = sup_dist(&sweep_f.u0_direct, &sweep_g.u0_direct);
    Ok(CompareReport {
        u0_discounted: sweep_f.u0_direct,
        u0_contact: sweep_g.u0_direct,
        u_hat_unweighted: unweighted.u_hat,
        u_hat_weighted: weighted.u_hat,
        norms,
        gap_detected: gap > tol_gap,
        tol_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::barrier_pipeline;
    use crate::critical::critical_value;
    use crate::grid::{build_cost_graph, build_grid};
    use crate::model::{BaseFamily, Coupling, LagrangianModel, TrigPoly};
    use crate::weakkam::subsolution_defect;

    fn ab_graph() -> CostGraph {
        CostGraph::from_parts(
            2,
            &[(0, 0, 0.0), (0, 1, 1.0), (1, 1, 0.2)],
            vec![1.0, 1.0],
            0.0,
            1.0,
        )
        .unwrap()
    }

    fn pendulum_graph(n: usize, dt: f64, vmax: f64) -> CostGraph {
        let model = LagrangianModel {
            dim: 1,
            base: BaseFamily::Mechanical {
                potential: TrigPoly::new_1d(1.0, vec![-1.0], vec![]),
            },
            coupling: Coupling::Linear { lambda: TrigPoly::constant(1, 1.0) },
            lambda_min: 1.0,
            lambda_max: 1.0,
        };
        let grid = build_grid(1, n, dt, vmax).unwrap();
        build_cost_graph(&grid, &model).unwrap()
    }

    fn drift_graph(n: usize, dt: f64, vmax: f64) -> CostGraph {
        let v = TrigPoly::new_1d(1.5, vec![0.5], vec![]);
        let model = LagrangianModel {
            dim: 1,
            base: BaseFamily::Drift { drift: vec![v.clone()] },
            coupling: Coupling::Linear { lambda: v },
            lambda_min: 1.0,
            lambda_max: 2.0,
        };
        let grid = build_grid(1, n, dt, vmax).unwrap();
        build_cost_graph(&grid, &model).unwrap()
    }

    fn closed_form_b(eps: f64) -> f64 {
        (0.2 / eps).min(1.0 / (1.0 + eps))
    }

    #[test]
    fn sweep_matches_scalar_closed_form() {
        let g = ab_graph();
        let eps = [0.5, 0.4, 0.3, 0.2, 0.1];
        let res = sweep(&g, 0.0, &eps, &SolveParams::default()).unwrap();
        for (k, &e) in eps.iter().enumerate() {
            let u = &res.fields[k].values;
            assert!(u[0].abs() < 1e-12, "u(A) stays 0 at eps {e}, got {}", u[0]);
            let want = closed_form_b(e);
            assert!(
                (u[1] - want).abs() < 1e-9,
                "u(B) at eps {e}: {} vs closed form {want}",
                u[1]
            );
        }
        assert_eq!(res.gaps.len(), 4);
    }

    #[test]
    fn deep_sweep_extrapolates_to_potential() {
        let g = ab_graph();
        let eps = [0.05, 0.01, 1e-3, 5e-4, 2.5e-4];
        let res = sweep(&g, 0.0, &eps, &SolveParams::default()).unwrap();
        assert!(res.u0_direct[0].abs() < 1e-12, "limit at A is 0");
        assert!(
            (res.u0_direct[1] - 1.0).abs() < 1e-6,
            "limit at B is Phi(A,B) = 1, got {}",
            res.u0_direct[1]
        );
        // The raw field still carries an O(eps) error that extrapolation
        // removes.
        let raw_err = (res.u0_raw[1] - 1.0).abs();
        let fit_err = (res.u0_direct[1] - 1.0).abs();
        assert!(raw_err > 1e-4, "raw error should be visible, got {raw_err}");
        assert!(fit_err < raw_err / 50.0, "extrapolation should win: {fit_err} vs {raw_err}");
    }

    #[test]
    fn sweep_validates_eps_list() {
        let g = ab_graph();
        assert!(matches!(
            sweep(&g, 0.0, &[], &SolveParams::default()),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            sweep(&g, 0.0, &[0.1, 0.1], &SolveParams::default()),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            sweep(&g, 0.0, &[0.2, -0.1], &SolveParams::default()),
            Err(Error::Config(_))
        ));
        let single = sweep(&g, 0.0, &[0.1], &SolveParams::default()).unwrap();
        assert!(single.gaps.is_empty(), "degenerate sweep has no gaps");
        assert_eq!(single.u0_direct, single.fields[0].values);
    }

    #[test]
    fn pendulum_gaps_shrink_linearly() {
        let g = pendulum_graph(48, 0.1, 2.5);
        let eps = [0.2, 0.1, 0.05, 0.025, 0.0125];
        let res = sweep(&g, 0.0, &eps, &SolveParams::default()).unwrap();
        for w in res.gaps.windows(2) {
            assert!(w[1] < w[0], "gaps must decrease: {:?}", res.gaps);
            let ratio = w[1] / w[0];
            assert!(
                ratio > 0.3 && ratio < 0.75,
                "halving eps should roughly halve the gap, ratio {ratio}"
            );
        }
        let defect = subsolution_defect(&g, &res.u0_direct, 0.0);
        assert!(
            defect <= 10.0 * g.dx * g.dt,
            "extrapolated limit stays a subsolution, defect {defect}"
        );
    }

    #[test]
    fn selection_single_atom_reproduces_barrier_row() {
        let g = ab_graph();
        let (ts, bm) = barrier_pipeline(&g, 0.0, 1e-9, 0.05).unwrap();
        assert_eq!(ts.aubry_nodes, vec![0]);
        // Edge 0 is the self-loop at A in (dst, src) order.
        let mut weights = vec![0.0; g.n_edges()];
        weights[0] = 1.0;
        let mu = DiscreteMeasure { weights };
        for weighting in [Weighting::Unweighted, Weighting::CouplingDerivative] {
            let rep = selection_inf(&g, &bm, std::slice::from_ref(&mu), weighting).unwrap();
            assert_eq!(rep.u_hat, bm.row(0).to_vec(), "atomic measure: u_hat = h(0, .)");
            assert!(rep.max_weight < 0.0);
        }
    }

    #[test]
    fn selection_two_atoms_weighted_vs_unweighted() {
        // Both nodes carry free self-loops; crossing costs 1 either way.
        // lambda differs: w = (-1, -3).
        let g = CostGraph::from_parts(
            2,
            &[(0, 0, 0.0), (1, 1, 0.0), (0, 1, 1.0), (1, 0, 1.0)],
            vec![1.0, 3.0],
            0.0,
            1.0,
        )
        .unwrap();
        let (ts, bm) = barrier_pipeline(&g, 0.0, 1e-9, 0.05).unwrap();
        assert_eq!(ts.aubry_nodes, vec![0, 1]);
        let mut weights = vec![0.0; g.n_edges()];
        // Self-loops sorted by (dst, src): loop at 0 first, loop at 1 third.
        weights[0] = 0.5;
        let loop1 = g
            .edges
            .iter()
            .position(|e| e.src == 1 && e.dst == 1)
            .expect("self-loop at node 1");
        weights[loop1] = 0.5;
        let mu = DiscreteMeasure { weights };
        let plain = selection_inf(&g, &bm, std::slice::from_ref(&mu), Weighting::Unweighted)
            .unwrap();
        assert_eq!(plain.u_hat, vec![0.5, 0.5], "plain average of the two rows");
        let weighted =
            selection_inf(&g, &bm, std::slice::from_ref(&mu), Weighting::CouplingDerivative)
                .unwrap();
        // [h(0,x)(-1) + h(1,x)(-3)] / (-4): x=0 -> 3/4, x=1 -> 1/4.
        assert!((weighted.u_hat[0] - 0.75).abs() < 1e-14);
        assert!((weighted.u_hat[1] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn selection_equal_lambda_formulas_coincide() {
        let g = CostGraph::from_parts(
            2,
            &[(0, 0, 0.0), (1, 1, 0.0), (0, 1, 1.0), (1, 0, 1.0)],
            vec![1.0, 1.0],
            0.0,
            1.0,
        )
        .unwrap();
        let (_, bm) = barrier_pipeline(&g, 0.0, 1e-9, 0.05).unwrap();
        let mut weights = vec![0.0; g.n_edges()];
        weights[0] = 0.5;
        let loop1 =
            g.edges.iter().position(|e| e.src == 1 && e.dst == 1).unwrap();
        weights[loop1] = 0.5;
        let mu = DiscreteMeasure { weights };
        let a = selection_inf(&g, &bm, std::slice::from_ref(&mu), Weighting::Unweighted).unwrap();
        let b = selection_inf(&g, &bm, std::slice::from_ref(&mu), Weighting::CouplingDerivative)
            .unwrap();
        for (x, y) in a.u_hat.iter().zip(&b.u_hat) {
            assert!((x - y).abs() < 1e-12, "constant weights cancel exactly");
        }
    }

    #[test]
    fn selection_rejects_bad_measures() {
        let g = ab_graph();
        let (_, bm) = barrier_pipeline(&g, 0.0, 1e-9, 0.05).unwrap();
        assert!(matches!(
            selection_inf(&g, &bm, &[], Weighting::Unweighted),
            Err(Error::EmptyMeasureList)
        ));
        // Mass off unity.
        let mu = DiscreteMeasure { weights: vec![0.5, 0.0, 0.0] };
        assert!(matches!(
            selection_inf(&g, &bm, std::slice::from_ref(&mu), Weighting::Unweighted),
            Err(Error::BadMeasure(_))
        ));
        // Supported off the Aubry set (the loop at B).
        let mu = DiscreteMeasure { weights: vec![0.0, 0.0, 1.0] };
        assert!(matches!(
            selection_inf(&g, &bm, std::slice::from_ref(&mu), Weighting::Unweighted),
            Err(Error::BadMeasure(_))
        ));
    }

    #[test]
    fn constraint_values_on_simple_fields() {
        let g = ab_graph();
        let mut weights = vec![0.0; g.n_edges()];
        weights[0] = 1.0;
        let mu = DiscreteMeasure { weights };
        let zero = vec![0.0; 2];
        let i0 = constraint_check(&g, &zero, std::slice::from_ref(&mu));
        assert_eq!(i0, vec![0.0], "zero field has zero integral");
        let ones = vec![1.0; 2];
        let i1 = constraint_check(&g, &ones, std::slice::from_ref(&mu));
        assert!((i1[0] + 1.0).abs() < 1e-15, "unit field, unit coupling: I = -1");
    }

    #[test]
    fn witness_fields_are_subsolutions_below_u_hat() {
        let g = pendulum_graph(64, 0.1, 2.5);
        let (c, _) = critical_value(&g).unwrap();
        let tol_tight = 10.0 * g.dx * g.dt;
        let (ts, bm) = barrier_pipeline(&g, c, tol_tight, tol_tight).unwrap();
        let y = ts.aubry_nodes[0] as usize;
        let u_hat = bm.row(y).to_vec();
        let omega = witness_field(&g, c, y, u_hat[y], tol_tight).unwrap();
        let defect = subsolution_defect(&g, &omega, c);
        assert!(defect <= 1e-9, "witness is a subsolution, defect {defect}");
        for (j, (&w, &u)) in omega.iter().zip(&u_hat).enumerate() {
            assert!(w <= u + 1e-9, "witness exceeds u_hat at node {j}: {w} vs {u}");
        }
    }

    #[test]
    fn occupation_measure_normalizes_and_localizes() {
        let g = pendulum_graph(64, 0.1, 2.5);
        let eps = 0.05;
        let field = solve_contact(&g, 0.0, eps, 1e-10, 2_000_000).unwrap();
        let start = 16; // x = pi/2
        let horizon = 2_500;
        let rep = occupation_measure(&g, &field, 0.0, start, horizon).unwrap();
        assert!((rep.measure.mass() - 1.0).abs() < 1e-12, "normalized mass 1");
        // Constant coupling lambda = 1: raw mass approximates 1/lambda.
        assert!(
            (rep.raw_mass - 1.0).abs() < 0.1,
            "raw mass near 1, got {}",
            rep.raw_mass
        );
        assert!(rep.closedness < 0.2, "closedness defect {}", rep.closedness);
        assert!(rep.action_gap.abs() < 0.2, "action gap {}", rep.action_gap);
        // The mass concentrates near the bottom of the well.
        let marginal = rep.measure.node_marginal(&g);
        let near: f64 = marginal
            .iter()
            .enumerate()
            .filter(|(j, _)| {
                let k = *j as i64;
                let n = g.n_nodes() as i64;
                k.min(n - k) <= 4
            })
            .map(|(_, &m)| m)
            .sum();
        assert!(near > 0.9, "mass near the bottom: {near}");
    }

    #[test]
    fn occupation_rejects_short_horizon() {
        let g = pendulum_graph(32, 0.1, 2.5);
        let field = solve_contact(&g, 0.0, 0.05, 1e-10, 1_000_000).unwrap();
        assert!(matches!(
            occupation_measure(&g, &field, 0.0, 0, 100),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn occupation_defects_shrink_with_eps() {
        let g = pendulum_graph(48, 0.1, 2.5);
        let mut gaps = Vec::new();
        for &eps in &[0.2, 0.05] {
            let field = solve_contact(&g, 0.0, eps, 1e-10, 2_000_000).unwrap();
            let horizon = (10.0 / (eps * g.dt)).ceil() as usize + 64;
            let rep = occupation_measure(&g, &field, 0.0, 12, horizon).unwrap();
            gaps.push(rep.action_gap.abs());
        }
        assert!(
            gaps[1] <= gaps[0] + 1e-12,
            "action gap should not grow as eps shrinks: {gaps:?}"
        );
    }

    #[test]
    fn monotone_dependence_on_coupling() {
        let g1 = pendulum_graph(32, 0.1, 2.5);
        let g2 = g1.with_coupling(vec![2.0; 32], 0.0).unwrap();
        let eps = 0.1;
        let a = solve_contact(&g1, 0.0, eps, 1e-12, 2_000_000).unwrap();
        let b = solve_contact(&g2, 0.0, eps, 1e-12, 2_000_000).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!(y <= &(x + 1e-10), "larger coupling cannot increase u: {y} vs {x}");
        }
    }

    #[test]
    fn uniform_bounds_hold_across_sweep() {
        let g = pendulum_graph(48, 0.1, 2.5);
        let (c, _) = critical_value(&g).unwrap();
        let tol_tight = 10.0 * g.dx * g.dt;
        let (_, bm) = barrier_pipeline(&g, c, tol_tight, tol_tight).unwrap();
        let bounds = uniform_bounds(&g, &bm, c);
        let eps = [0.2, 0.1, 0.05, 0.025];
        let res = sweep(&g, c, &eps, &SolveParams::default()).unwrap();
        for (k, f) in res.fields.iter().enumerate() {
            let sup = f.values.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            assert!(
                sup <= bounds.sup_bound,
                "sup bound fails at eps {}: {sup} vs {}",
                eps[k],
                bounds.sup_bound
            );
            assert!(
                res.lipschitz[k] <= bounds.lip_bound,
                "lip bound fails at eps {}: {} vs {}",
                eps[k],
                res.lipschitz[k],
                bounds.lip_bound
            );
        }
    }

    #[test]
    fn compare_on_drift_reports_no_gap() {
        let g_contact = drift_graph(64, 0.1, 2.5);
        let g_disc = g_contact.with_coupling(vec![1.0; 64], 0.0).unwrap();
        let (c, _) = critical_value(&g_contact).unwrap();
        let tol_tight = 10.0 * g_contact.dx * g_contact.dt;
        let (ts, bm) = barrier_pipeline(&g_contact, c, tol_tight, tol_tight).unwrap();
        let measures =
            crate::critical::enumerate_extreme_measures(&g_contact, &ts, c).unwrap();
        let eps = [0.2, 0.1, 0.05, 0.025, 0.0125];
        let rep = compare_discounted_contact(
            &g_disc,
            &g_contact,
            c,
            &bm,
            &measures,
            &eps,
            &SolveParams::default(),
            2.0 * g_contact.dx,
        )
        .unwrap();
        assert!(!rep.gap_detected, "drift flow admits no selection gap");
        assert_eq!(rep.norms.len(), 6, "all pairwise norms reported");
        for (name, v) in &rep.norms {
            assert!(*v <= 4.0 * g_contact.dx, "field pair {name} differs by {v}");
        }
        for field in [
            &rep.u0_discounted,
            &rep.u0_contact,
            &rep.u_hat_unweighted,
            &rep.u_hat_weighted,
        ] {
            let sup = field.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            assert!(sup <= 2.0 * g_contact.dx, "drift limit should be flat, sup {sup}");
        }
    }
}
