//! Config-driven experiment runner: schema, orchestration, and bit-stable
//! CSV/JSON emission. Outputs are named <command>_<sha256-prefix>.csv/json
//! so identical configs land on identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::barrier::{barrier_pipeline, liminf_check, BarrierMatrix};
use crate::critical::{
    critical_value, critical_value_power, enumerate_extreme_measures, mather_measure_circulation,
    mather_measure_karp, DiscreteMeasure, TightStructure,
};
use crate::error::Error;
use crate::grid::{build_cost_graph, build_grid, CostGraph};
use crate::model::{BaseFamily, Coupling, Harmonics, LagrangianModel, TrigPoly};
use crate::vanishing::{
    compare_discounted_contact, constraint_check, occupation_measure, selection_inf, sweep,
    uniform_bounds, witness_field, SolveParams, Weighting,
};
use crate::weakkam::{
    discrete_lipschitz, fixed_point_residual, lax_oleinik_min, solve_contact, subsolution_defect,
};
use crate::Result;

const VERSION: &str = env!("CARGO_PKG_VERSION");
const OUT_ENV: &str = "CONTACT_KAM_OUT";

#[derive(Parser, Debug)]
#[command(name = "contact-kam", version, about = "Weak KAM experiments on periodic cost graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads for the parallel sections (whole process).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Also write the cost graph edge list as graph_<hash>.csv.
    #[arg(long, global = true)]
    pub dump_graph: bool,
}

#[derive(Subcommand, Debug)]
#[command(rename_all = "lowercase")]
pub enum Command {
    /// Check model bounds and report measured constants.
    Validate { config: PathBuf },
    /// Critical value and its minimizing cycle.
    Critical { config: PathBuf },
    /// Solve the contact equation at a single coupling strength.
    Solve { config: PathBuf },
    /// Mane potentials, Peierls barrier, Aubry classes.
    Barrier { config: PathBuf },
    /// Mather measures: Karp witness, cycle canceling, extreme points.
    Mather { config: PathBuf },
    /// Vanishing-coupling sweep with both limit characterizations.
    Vanish { config: PathBuf },
    /// Discounted-vs-contact comparison on a shared running cost.
    Compare { config: PathBuf },
}

impl Command {
    fn parts(&self) -> (&'static str, &Path) {
        match self {
            Command::Validate { config } => ("validate", config),
            Command::Critical { config } => ("critical", config),
            Command::Solve { config } => ("solve", config),
            Command::Barrier { config } => ("barrier", config),
            Command::Mather { config } => ("mather", config),
            Command::Vanish { config } => ("vanish", config),
            Command::Compare { config } => ("compare", config),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigSpec {
    #[serde(default)]
    pub constant: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cos: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sin: Vec<f64>,
    /// Per-dimension harmonics for 2D models; mutually exclusive with
    /// cos/sin above.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<HarmonicsSpec>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicsSpec {
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl TrigSpec {
    fn build(&self, dim: usize) -> Result<TrigPoly> {
        if let Some(dims) = &self.dims {
            if !self.cos.is_empty() || !self.sin.is_empty() {
                return Err(Error::Config(
                    "trig spec mixes 1D cos/sin with per-dimension dims".into(),
                ));
            }
            if dims.len() != dim {
                return Err(Error::Config(format!(
                    "trig spec has {} dimension blocks for a {dim}D model",
                    dims.len()
                )));
            }
            return Ok(TrigPoly {
                constant: self.constant,
                dims: dims
                    .iter()
                    .map(|h| Harmonics { cos: h.cos.clone(), sin: h.sin.clone() })
                    .collect(),
            });
        }
        if dim != 1 {
            return Err(Error::Config(
                "2D models need per-dimension trig blocks (dims: [...])".into(),
            ));
        }
        Ok(TrigPoly::new_1d(self.constant, self.cos.clone(), self.sin.clone()))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    /// "linear" or "saturating".
    #[serde(default = "default_coupling_kind")]
    pub kind: String,
    pub lambda: TrigSpec,
    #[serde(default)]
    pub kappa: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

fn default_coupling_kind() -> String {
    "linear".into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// "mechanical", "drift", "mechanical_drift", or "synthetic".
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<TrigSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<TrigSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<CouplingSpec>,
    // Synthetic graphs bypass the torus builders entirely.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(u32, u32, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vmax: Option<f64>,
}

fn default_dim() -> usize {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub tol_fix: f64,
    pub max_iter: usize,
    /// Subsolution tolerance; defaults to 10 dx dt.
    pub tol_sub: Option<f64>,
    /// Tight-slack tolerance and Bellman-Ford floor; defaults to 10 dx dt.
    pub tol_tight: Option<f64>,
    /// Aubry class pseudometric threshold; defaults to 20 dx.
    pub tol_class: Option<f64>,
    /// Liminf cross-check tolerance; defaults to 10 dx.
    pub tol_osc: Option<f64>,
    /// Constraint integral tolerance, relative to the scale of u.
    pub tol_con: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            tol_fix: 1e-10,
            max_iter: 2_000_000,
            tol_sub: None,
            tol_tight: None,
            tol_class: None,
            tol_osc: None,
            tol_con: 1e-3,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptionsSpec {
    /// Coupling strength for `solve`; defaults to the last eps_list entry.
    pub eps: Option<f64>,
    /// Occupation-measure start node; defaults to n/4.
    pub start_node: Option<usize>,
    /// Occupation-measure horizon; defaults to the contraction bound plus
    /// four turns.
    pub horizon: Option<usize>,
    /// Liminf window for the barrier cross-check; defaults to 4N.
    pub k_max: Option<usize>,
    /// Also bracket the critical value with the power method.
    pub cross_check: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default = "default_eps_list")]
    pub eps_list: Vec<f64>,
    #[serde(default)]
    pub options: OptionsSpec,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
}

fn default_eps_list() -> Vec<f64> {
    vec![0.2, 0.1, 0.05, 0.025, 0.0125]
}

fn default_output_dir() -> String {
    "out".into()
}

/// Tolerances after grid-dependent defaults are filled in.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ResolvedTols {
    pub tol_fix: f64,
    pub max_iter: usize,
    pub tol_sub: f64,
    pub tol_tight: f64,
    pub tol_class: f64,
    pub tol_osc: f64,
    pub tol_con: f64,
}

pub struct Setup {
    pub cfg: ExperimentConfig,
    pub hash: String,
    pub graph: CostGraph,
    pub model: Option<LagrangianModel>,
    pub tols: ResolvedTols,
    pub out_dir: PathBuf,
}

fn require<T: Copy>(v: Option<T>, key: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("missing required key: {key}")))
}

fn build_model(spec: &ModelSpec, dim: usize) -> Result<LagrangianModel> {
    let coupling_spec = spec
        .coupling
        .as_ref()
        .ok_or_else(|| Error::Config("missing required key: model.coupling".into()))?;
    let lambda = coupling_spec.lambda.build(dim)?;
    let coupling = match coupling_spec.kind.as_str() {
        "linear" => {
            if coupling_spec.kappa != 0.0 {
                return Err(Error::Config("linear coupling cannot carry kappa".into()));
            }
            Coupling::Linear { lambda }
        }
        "saturating" => Coupling::Saturating { lambda, kappa: coupling_spec.kappa },
        other => {
            return Err(Error::Config(format!(
                "unknown coupling kind '{other}' (expected linear or saturating)"
            )))
        }
    };
    let base = match spec.family.as_str() {
        "mechanical" => BaseFamily::Mechanical {
            potential: spec
                .potential
                .as_ref()
                .ok_or_else(|| Error::Config("missing required key: model.potential".into()))?
                .build(dim)?,
        },
        "drift" => {
            let drift = spec
                .drift
                .as_ref()
                .ok_or_else(|| Error::Config("missing required key: model.drift".into()))?;
            if drift.len() != dim {
                return Err(Error::Config(format!(
                    "drift has {} components for a {dim}D model",
                    drift.len()
                )));
            }
            BaseFamily::Drift {
                drift: drift.iter().map(|t| t.build(dim)).collect::<Result<_>>()?,
            }
        }
        "mechanical_drift" => {
            let drift = spec
                .drift
                .as_ref()
                .ok_or_else(|| Error::Config("missing required key: model.drift".into()))?;
            BaseFamily::MechanicalDrift {
                drift: drift.iter().map(|t| t.build(dim)).collect::<Result<_>>()?,
                potential: spec
                    .potential
                    .as_ref()
                    .ok_or_else(|| Error::Config("missing required key: model.potential".into()))?
                    .build(dim)?,
            }
        }
        other => {
            return Err(Error::Config(format!(
                "unknown model family '{other}' \
                 (expected mechanical, drift, mechanical_drift, or synthetic)"
            )))
        }
    };
    Ok(LagrangianModel {
        dim,
        base,
        coupling,
        lambda_min: coupling_spec.lambda_min,
        lambda_max: coupling_spec.lambda_max,
    })
}

impl Setup {
    pub fn load(path: &Path) -> Result<Setup> {
        let raw = std::fs::read(path)?;
        let mut hasher = Sha256::new();
        hasher.update(&raw);
        let hash = hex_prefix(&hasher.finalize(), 12);
        let cfg: ExperimentConfig = serde_json::from_slice(&raw)
            .map_err(|e| Error::Config(format!("cannot parse {}: {e}", path.display())))?;

        let grid_spec = cfg.grid.clone().unwrap_or(GridSpec {
            dim: 1,
            n: None,
            dt: None,
            vmax: None,
        });
        let dt = require(grid_spec.dt, "grid.dt")?;

        let (graph, model) = if cfg.model.family == "synthetic" {
            let nodes = require(cfg.model.nodes, "model.nodes")?;
            let edges = cfg
                .model
                .edges
                .as_ref()
                .ok_or_else(|| Error::Config("missing required key: model.edges".into()))?;
            let lambda = cfg
                .model
                .lambda
                .as_ref()
                .ok_or_else(|| Error::Config("missing required key: model.lambda".into()))?;
            let kappa = cfg.model.kappa.unwrap_or(0.0);
            let g = CostGraph::from_parts(nodes, edges, lambda.clone(), kappa, dt)?;
            (g, None)
        } else {
            let n = require(grid_spec.n, "grid.n")?;
            let vmax = require(grid_spec.vmax, "grid.vmax")?;
            let model = build_model(&cfg.model, grid_spec.dim)?;
            let grid = build_grid(grid_spec.dim, n, dt, vmax)?;
            let g = build_cost_graph(&grid, &model)?;
            (g, Some(model))
        };

        let s = &cfg.solver;
        for (name, v) in [
            ("solver.tol_fix", Some(s.tol_fix)),
            ("solver.tol_sub", s.tol_sub),
            ("solver.tol_tight", s.tol_tight),
            ("solver.tol_class", s.tol_class),
            ("solver.tol_osc", s.tol_osc),
            ("solver.tol_con", Some(s.tol_con)),
        ] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(Error::Config(format!("{name} must be positive, got {v}")));
                }
            }
        }
        let tols = ResolvedTols {
            tol_fix: s.tol_fix,
            max_iter: s.max_iter,
            tol_sub: s.tol_sub.unwrap_or(10.0 * graph.dx * graph.dt),
            tol_tight: s.tol_tight.unwrap_or(10.0 * graph.dx * graph.dt),
            tol_class: s.tol_class.unwrap_or(20.0 * graph.dx),
            tol_osc: s.tol_osc.unwrap_or(10.0 * graph.dx),
            tol_con: s.tol_con,
        };

        let out_dir = std::env::var(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|_| PathBuf::from(&cfg.output_dir));

        Ok(Setup { cfg, hash, graph, model, tols, out_dir })
    }

    fn artifact(&self, command: &str, ext: &str) -> PathBuf {
        self.out_dir.join(format!("{command}_{}.{ext}", self.hash))
    }

    fn write_text(&self, path: &Path, text: &str) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    fn write_csv(&self, command: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut buf = String::with_capacity(rows.len() * 32 + 64);
        buf.push_str(&header.join(","));
        buf.push('\n');
        for row in rows {
            buf.push_str(&row.join(","));
            buf.push('\n');
        }
        self.write_text(&self.artifact(command, "csv"), &buf)
    }

    fn write_json(&self, command: &str, body: serde_json::Value) -> Result<()> {
        let wrapped = json!({
            "command": command,
            "version": VERSION,
            "config_hash": self.hash,
            "config": self.cfg,
            "resolved_tolerances": self.tols,
            "result": body,
        });
        let mut text = serde_json::to_string_pretty(&wrapped)
            .map_err(|e| Error::Config(format!("serialization failed: {e}")))?;
        text.push('\n');
        self.write_text(&self.artifact(command, "json"), &text)
    }

    fn dump_graph(&self) -> Result<()> {
        let header = ["edge", "src", "dst", "disp0", "disp1", "cost"];
        let rows: Vec<Vec<String>> = self
            .graph
            .edges
            .iter()
            .enumerate()
            .map(|(id, e)| {
                vec![
                    id.to_string(),
                    e.src.to_string(),
                    e.dst.to_string(),
                    fmt(e.disp[0]),
                    fmt(e.disp[1]),
                    fmt(e.cost),
                ]
            })
            .collect();
        let mut buf = String::new();
        buf.push_str(&header.join(","));
        buf.push('\n');
        for row in &rows {
            buf.push_str(&row.join(","));
            buf.push('\n');
        }
        self.write_text(&self.out_dir.join(format!("graph_{}.csv", self.hash)), &buf)
    }
}

fn hex_prefix(digest: &[u8], chars: usize) -> String {
    let mut s = String::with_capacity(chars);
    for b in digest {
        let _ = write!(s, "{b:02x}");
        if s.len() >= chars {
            break;
        }
    }
    s.truncate(chars);
    s
}

/// 17 significant digits: byte-stable and round-trip exact.
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn measure_summaries(g: &CostGraph, measures: &[DiscreteMeasure]) -> Vec<serde_json::Value> {
    measures
        .iter()
        .map(|m| {
            json!({
                "mean_cost": m.mean_cost(g),
                "support_nodes": m.support_nodes(g, 1e-12),
                "conservation_defect": m.conservation_defect(g),
                "closedness_defect": m.closedness_defect(g),
                "mean_velocity": m.mean_velocity(g),
            })
        })
        .collect()
}

fn stencil_saturated(g: &CostGraph, u: &[f64]) -> bool {
    let max_len = g
        .edges
        .iter()
        .map(|e| (e.disp[0] * e.disp[0] + e.disp[1] * e.disp[1]).sqrt())
        .fold(0.0f64, f64::max);
    if max_len <= 0.0 {
        return false;
    }
    (0..g.n_nodes()).any(|j| {
        let (_, id) = lax_oleinik_min(g, u, j);
        let e = &g.edges[id as usize];
        let len = (e.disp[0] * e.disp[0] + e.disp[1] * e.disp[1]).sqrt();
        len >= max_len - 1e-12
    })
}

fn cmd_validate(s: &Setup) -> Result<serde_json::Value> {
    let g = &s.graph;
    let header = ["node", "x0", "x1", "lambda"];
    let rows: Vec<Vec<String>> = (0..g.n_nodes())
        .map(|j| {
            vec![
                j.to_string(),
                fmt(g.coords[j][0]),
                fmt(g.coords[j][1]),
                fmt(g.lambda[j]),
            ]
        })
        .collect();
    s.write_csv("validate", &header, &rows)?;
    let graph_stats = json!({
        "nodes": g.n_nodes(),
        "edges": g.n_edges(),
        "dt": g.dt,
        "dx": g.dx,
        "strongly_connected": g.is_strongly_connected(),
        "kappa": g.kappa,
    });
    match &s.model {
        Some(model) => {
            let report = model.validate()?;
            Ok(json!({"model": report, "graph": graph_stats}))
        }
        None => Ok(json!({"model": "synthetic", "graph": graph_stats})),
    }
}

fn cmd_critical(s: &Setup) -> Result<serde_json::Value> {
    let (c, cycle) = critical_value(&s.graph)?;
    let header = ["step", "src", "dst", "cost"];
    let rows: Vec<Vec<String>> = cycle
        .edges
        .iter()
        .enumerate()
        .map(|(k, &id)| {
            let e = &s.graph.edges[id as usize];
            vec![k.to_string(), e.src.to_string(), e.dst.to_string(), fmt(e.cost)]
        })
        .collect();
    s.write_csv("critical", &header, &rows)?;
    let mut body = json!({
        "c": c,
        "cycle_mean": cycle.mean,
        "cycle_nodes": cycle.nodes,
        "cycle_len": cycle.edges.len(),
    });
    if s.cfg.options.cross_check {
        let (lo, hi) = critical_value_power(&s.graph, 4 * s.graph.n_nodes());
        body["power_bracket"] = json!([-hi / s.graph.dt, -lo / s.graph.dt]);
    }
    Ok(body)
}

fn cmd_solve(s: &Setup) -> Result<serde_json::Value> {
    let eps = s
        .cfg
        .options
        .eps
        .or_else(|| s.cfg.eps_list.last().copied())
        .ok_or_else(|| Error::Config("solve needs options.eps or a nonempty eps_list".into()))?;
    let (c, _) = critical_value(&s.graph)?;
    let field = solve_contact(&s.graph, c, eps, s.tols.tol_fix, s.tols.max_iter)?;
    let header = ["node", "x0", "x1", "u"];
    let rows: Vec<Vec<String>> = (0..s.graph.n_nodes())
        .map(|j| {
            vec![
                j.to_string(),
                fmt(s.graph.coords[j][0]),
                fmt(s.graph.coords[j][1]),
                fmt(field.values[j]),
            ]
        })
        .collect();
    s.write_csv("solve", &header, &rows)?;
    Ok(json!({
        "c": c,
        "eps": eps,
        "iterations": field.iterations,
        "final_change": field.final_change,
        "residual": fixed_point_residual(&s.graph, &field.values, c, eps),
        "subsolution_defect": subsolution_defect(&s.graph, &field.values, c),
        "lipschitz": discrete_lipschitz(&s.graph, &field.values),
        "sup_norm": sup_abs(&field.values),
        "stencil_saturated": stencil_saturated(&s.graph, &field.values),
    }))
}

fn barrier_products(s: &Setup, c: f64) -> Result<(TightStructure, BarrierMatrix)> {
    barrier_pipeline(&s.graph, c, s.tols.tol_sub, s.tols.tol_tight)
}

fn cmd_barrier(s: &Setup) -> Result<serde_json::Value> {
    let g = &s.graph;
    let (c, _) = critical_value(g)?;
    let (ts, bm) = barrier_products(s, c)?;
    let classes = crate::barrier::aubry_classes(&bm, s.tols.tol_class);
    let n = g.n_nodes();
    let header = ["y", "x", "phi", "h"];
    let mut rows = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            rows.push(vec![
                y.to_string(),
                x.to_string(),
                fmt(bm.phi(y, x)),
                fmt(bm.h(y, x)),
            ]);
        }
    }
    s.write_csv("barrier", &header, &rows)?;

    let antipode = n / 2;
    let k_max = s.cfg.options.k_max.unwrap_or(4 * n);
    let lim = liminf_check(g, c, 0, antipode, k_max)?;
    let bounds = uniform_bounds(g, &bm, c);
    Ok(json!({
        "c": c,
        "aubry_nodes": ts.aubry_nodes,
        "aubry_count": ts.aubry_nodes.len(),
        "tight_edges": ts.tight_edges.len(),
        "classes": classes,
        "class_count": classes.len(),
        "h_origin_antipode": bm.h(0, antipode),
        "liminf_origin_antipode": lim,
        "liminf_gap": (lim - bm.h(0, antipode)).abs(),
        "tol_osc": s.tols.tol_osc,
        "sup_bound": bounds.sup_bound,
        "lip_bound": bounds.lip_bound,
    }))
}

fn cmd_mather(s: &Setup) -> Result<serde_json::Value> {
    let g = &s.graph;
    let (c, _) = critical_value(g)?;
    let (karp_measure, karp_mean) = mather_measure_karp(g)?;
    let circulation = mather_measure_circulation(g, None, 1e-12)?;
    let (ts, _) = barrier_products(s, c)?;
    let extremes = enumerate_extreme_measures(g, &ts, c)?;

    let header = ["measure", "edge", "src", "dst", "weight"];
    let mut rows = Vec::new();
    let mut all: Vec<&DiscreteMeasure> = vec![&karp_measure, &circulation.measure];
    all.extend(extremes.iter());
    for (mi, m) in all.iter().enumerate() {
        for (id, &w) in m.weights.iter().enumerate() {
            if w > 0.0 {
                let e = &g.edges[id];
                rows.push(vec![
                    mi.to_string(),
                    id.to_string(),
                    e.src.to_string(),
                    e.dst.to_string(),
                    fmt(w),
                ]);
            }
        }
    }
    s.write_csv("mather", &header, &rows)?;

    Ok(json!({
        "c": c,
        "karp_mean": karp_mean,
        "circulation_mean": circulation.mean,
        "circulation_rounds": circulation.rounds,
        "karp_vs_circulation": (karp_mean - circulation.mean).abs(),
        "extreme_count": extremes.len(),
        "extremes": measure_summaries(g, &extremes),
    }))
}

fn occupation_horizon(s: &Setup, eps: f64) -> usize {
    let delta_lo = s.graph.lambda.iter().copied().fold(f64::INFINITY, f64::min);
    let needed = (10.0 / (eps * delta_lo * s.graph.dt)).ceil() as usize;
    let base = needed + 4 * s.graph.n_nodes();
    s.cfg.options.horizon.unwrap_or(base).max(needed)
}

fn cmd_vanish(s: &Setup) -> Result<serde_json::Value> {
    let g = &s.graph;
    let (c, _) = critical_value(g)?;
    let params = SolveParams { tol_fix: s.tols.tol_fix, max_iter: s.tols.max_iter };
    let swp = sweep(g, c, &s.cfg.eps_list, &params)?;
    let (ts, bm) = barrier_products(s, c)?;
    let classes = crate::barrier::aubry_classes(&bm, s.tols.tol_class);
    let measures = enumerate_extreme_measures(g, &ts, c)?;
    let unweighted = selection_inf(g, &bm, &measures, Weighting::Unweighted)?;
    let weighted = selection_inf(g, &bm, &measures, Weighting::CouplingDerivative)?;
    let constraints = constraint_check(g, &swp.u0_direct, &measures);
    let scale = sup_abs(&swp.u0_direct).max(1e-12);
    let tol_con_abs = s.tols.tol_con * scale;

    // Witness subsolutions: one per supported Aubry node per measure.
    let mut witness_excess = f64::NEG_INFINITY;
    for m in &measures {
        for &y in &m.support_nodes(g, 1e-12) {
            let omega = witness_field(g, c, y as usize, weighted.u_hat[y as usize], s.tols.tol_tight)?;
            for (w, u) in omega.iter().zip(&swp.u0_direct) {
                let exc = w - u;
                if exc > witness_excess {
                    witness_excess = exc;
                }
            }
        }
    }

    // Occupation diagnostics along the sweep from a fixed start node.
    let start = s.cfg.options.start_node.unwrap_or(g.n_nodes() / 4);
    let mut occ_closedness = Vec::new();
    let mut occ_gap = Vec::new();
    for field in &swp.fields {
        let horizon = occupation_horizon(s, field.eps);
        let rep = occupation_measure(g, field, c, start, horizon)?;
        occ_closedness.push(rep.closedness);
        occ_gap.push(rep.action_gap);
    }

    let n = g.n_nodes();
    let mut header: Vec<String> = vec!["node".into(), "x0".into(), "x1".into()];
    for k in 0..swp.eps.len() {
        header.push(format!("u_eps{k}"));
    }
    header.extend(
        ["u0_raw", "u0_direct", "u_hat_unweighted", "u_hat_weighted"]
            .iter()
            .map(|s| s.to_string()),
    );
    let header_refs: Vec<&str> = header.iter().map(|h| h.as_str()).collect();
    let mut rows = Vec::with_capacity(n);
    for j in 0..n {
        let mut row = vec![j.to_string(), fmt(g.coords[j][0]), fmt(g.coords[j][1])];
        for f in &swp.fields {
            row.push(fmt(f.values[j]));
        }
        row.push(fmt(swp.u0_raw[j]));
        row.push(fmt(swp.u0_direct[j]));
        row.push(fmt(unweighted.u_hat[j]));
        row.push(fmt(weighted.u_hat[j]));
        rows.push(row);
    }
    s.write_csv("vanish", &header_refs, &rows)?;

    let bounds = uniform_bounds(g, &bm, c);
    Ok(json!({
        "c": c,
        "eps": swp.eps,
        "gaps": swp.gaps,
        "lipschitz": swp.lipschitz,
        "iterations": swp.fields.iter().map(|f| f.iterations).collect::<Vec<_>>(),
        "class_count": classes.len(),
        "measure_count": measures.len(),
        "norm_direct_vs_weighted": sup_dist(&swp.u0_direct, &weighted.u_hat),
        "norm_direct_vs_unweighted": sup_dist(&swp.u0_direct, &unweighted.u_hat),
        "norm_raw_vs_direct": sup_dist(&swp.u0_raw, &swp.u0_direct),
        "subsolution_defect": subsolution_defect(g, &swp.u0_direct, c),
        "constraint_values": constraints,
        "tol_con_absolute": tol_con_abs,
        "constraint_ok": constraints.iter().all(|v| *v >= -tol_con_abs),
        "witness_max_excess": witness_excess,
        "occupation_start": start,
        "occupation_closedness": occ_closedness,
        "occupation_action_gap": occ_gap,
        "sup_bound": bounds.sup_bound,
        "lip_bound": bounds.lip_bound,
        "max_weight": weighted.max_weight,
    }))
}

fn cmd_compare(s: &Setup) -> Result<serde_json::Value> {
    let g = &s.graph;
    let (c, _) = critical_value(g)?;
    let g_disc = g.with_coupling(vec![1.0; g.n_nodes()], 0.0)?;
    let (ts, bm) = barrier_products(s, c)?;
    let measures = enumerate_extreme_measures(g, &ts, c)?;
    let params = SolveParams { tol_fix: s.tols.tol_fix, max_iter: s.tols.max_iter };
    let tol_gap = 2.0 * g.dx;
    let rep = compare_discounted_contact(
        &g_disc,
        g,
        c,
        &bm,
        &measures,
        &s.cfg.eps_list,
        &params,
        tol_gap,
    )?;

    let header = ["node", "x0", "x1", "u0_discounted", "u0_contact", "u_hat_unweighted", "u_hat_weighted"];
    let rows: Vec<Vec<String>> = (0..g.n_nodes())
        .map(|j| {
            vec![
                j.to_string(),
                fmt(g.coords[j][0]),
                fmt(g.coords[j][1]),
                fmt(rep.u0_discounted[j]),
                fmt(rep.u0_contact[j]),
                fmt(rep.u_hat_unweighted[j]),
                fmt(rep.u_hat_weighted[j]),
            ]
        })
        .collect();
    s.write_csv("compare", &header, &rows)?;

    let norms: BTreeMap<String, f64> = rep.norms.clone();
    Ok(json!({
        "c": c,
        "norms": norms,
        "gap_detected": rep.gap_detected,
        "tol_gap": rep.tol_gap,
        "sup_u0_discounted": sup_abs(&rep.u0_discounted),
        "sup_u0_contact": sup_abs(&rep.u0_contact),
    }))
}

fn dispatch(name: &str, s: &Setup) -> Result<serde_json::Value> {
    match name {
        "validate" => cmd_validate(s),
        "critical" => cmd_critical(s),
        "solve" => cmd_solve(s),
        "barrier" => cmd_barrier(s),
        "mather" => cmd_mather(s),
        "vanish" => cmd_vanish(s),
        "compare" => cmd_compare(s),
        other => Err(Error::Config(format!("unknown command {other}"))),
    }
}

fn run_command(name: &str, config: &Path, dump: bool) -> Result<()> {
    let setup = Setup::load(config)?;
    if dump {
        setup.dump_graph()?;
    }
    match dispatch(name, &setup) {
        Ok(body) => setup.write_json(name, body),
        Err(e) if !e.is_config() => {
            // Numeric failures still leave a summary behind.
            let _ = setup.write_json(name, json!({ "error": e.to_string() }));
            Err(e)
        }
        Err(e) => Err(e),
    }
}

pub fn run() -> ExitCode {
    let cli = Cli::parse();
    #[cfg(feature = "parallel")]
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("config error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        // Ignore the error when a pool already exists (tests call run twice).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = cli.threads;

    let (name, config) = cli.command.parts();
    match run_command(name, config, cli.dump_graph) {
        Ok(()) => ExitCode::SUCCESS,
        // Error variants carry their own prefixes.
        Err(e) if e.is_config() => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(3)
        }
    }
}
