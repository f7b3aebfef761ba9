//! Contact Lagrangian families on flat tori.
//!
//! A model is L(x, v, u) = L0(x, v) + g(x, u) with quadratic kinetic part
//! L0(x, v) = |v - V(x)|^2 / 2 + W(x) and a coupling g(x, u) that is zero at
//! u = 0 and strictly decreasing in u:
//!
//!   linear:      g(x, u) = -lambda(x) u
//!   saturating:  g(x, u) = -lambda(x) u - kappa u^3 / (1 + u^2)
//!
//! with 0 < delta <= lambda(x) <= Delta. Under the Legendre transform the
//! coupling flips sign, so H(x, p, u) = |p|^2/2 + <p, V(x)> - W(x) - g(x, u)
//! and dH/du = -dL/du lies in [delta, Delta + 9 kappa / 8]: the Hamiltonian is
//! strictly increasing in u, which is what makes the implicit backward scheme
//! monotone.

use crate::error::Error;
use crate::Result;
use serde::Serialize;
use std::f64::consts::TAU;

/// Largest slope of u^3/(1+u^2) in u; attained at u^2 = 3.
pub const MAX_CUBIC_SLOPE: f64 = 9.0 / 8.0;

/// Per-dimension Fourier coefficients; `cos[k]`/`sin[k]` weight harmonic k+1.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Harmonics {
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

/// Real trigonometric polynomial on T^d, evaluated as
/// a0 + sum_d sum_k (a_{d,k} cos(k x_d) + b_{d,k} sin(k x_d)).
#[derive(Clone, Debug, PartialEq)]
pub struct TrigPoly {
    pub constant: f64,
    pub dims: Vec<Harmonics>,
}

impl TrigPoly {
    pub fn constant(dim: usize, c: f64) -> Self {
        TrigPoly { constant: c, dims: vec![Harmonics::default(); dim] }
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(dim, 0.0)
    }

    /// 1D polynomial from explicit cosine/sine coefficient lists.
    pub fn new_1d(constant: f64, cos: Vec<f64>, sin: Vec<f64>) -> Self {
        TrigPoly { constant, dims: vec![Harmonics { cos, sin }] }
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut s = self.constant;
        for (d, h) in self.dims.iter().enumerate() {
            let xd = x[d];
            for (k, a) in h.cos.iter().enumerate() {
                s += a * ((k + 1) as f64 * xd).cos();
            }
            for (k, b) in h.sin.iter().enumerate() {
                s += b * ((k + 1) as f64 * xd).sin();
            }
        }
        s
    }

    /// Partial derivative in coordinate `d`.
    pub fn partial(&self, d: usize, x: &[f64]) -> f64 {
        let h = &self.dims[d];
        let xd = x[d];
        let mut s = 0.0;
        for (k, a) in h.cos.iter().enumerate() {
            let kk = (k + 1) as f64;
            s -= a * kk * (kk * xd).sin();
        }
        for (k, b) in h.sin.iter().enumerate() {
            let kk = (k + 1) as f64;
            s += b * kk * (kk * xd).cos();
        }
        s
    }

    /// Crude sup bound |p|_inf <= |a0| + sum |coeffs|.
    pub fn sup_bound(&self) -> f64 {
        let mut s = self.constant.abs();
        for h in &self.dims {
            s += h.cos.iter().map(|a| a.abs()).sum::<f64>();
            s += h.sin.iter().map(|b| b.abs()).sum::<f64>();
        }
        s
    }
}

/// Kinetic/potential part of the Lagrangian.
#[derive(Clone, Debug)]
pub enum BaseFamily {
    /// L0 = |v|^2/2 + W(x)
    Mechanical { potential: TrigPoly },
    /// L0 = |v - V(x)|^2/2
    Drift { drift: Vec<TrigPoly> },
    /// L0 = |v - V(x)|^2/2 + W(x)
    MechanicalDrift { drift: Vec<TrigPoly>, potential: TrigPoly },
}

/// Monotone coupling g(x, u).
#[derive(Clone, Debug)]
pub enum Coupling {
    Linear { lambda: TrigPoly },
    Saturating { lambda: TrigPoly, kappa: f64 },
}

impl Coupling {
    pub fn lambda(&self) -> &TrigPoly {
        match self {
            Coupling::Linear { lambda } => lambda,
            Coupling::Saturating { lambda, .. } => lambda,
        }
    }

    pub fn kappa(&self) -> f64 {
        match self {
            Coupling::Linear { .. } => 0.0,
            Coupling::Saturating { kappa, .. } => *kappa,
        }
    }
}

/// Point on the contact phase space T^d x R^d x R.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhasePoint {
    pub x: [f64; 2],
    pub p: [f64; 2],
    pub u: f64,
}

impl PhasePoint {
    pub fn new_1d(x: f64, p: f64, u: f64) -> Self {
        PhasePoint { x: [x, 0.0], p: [p, 0.0], u }
    }
}

/// Complete contact Lagrangian model with declared coupling bounds
/// 0 < lambda_min <= lambda(x) <= lambda_max.
#[derive(Clone, Debug)]
pub struct LagrangianModel {
    pub dim: usize,
    pub base: BaseFamily,
    pub coupling: Coupling,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

/// Measured bounds and structural checks from [`LagrangianModel::validate`].
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    /// delta' = min over samples of -dL/du (must be positive).
    pub delta_measured: f64,
    /// Delta' = max over samples of -dL/du.
    pub delta_upper_measured: f64,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub hessian_identity_ok: bool,
    pub superlinear_ok: bool,
}

impl LagrangianModel {
    pub fn potential_at(&self, x: &[f64]) -> f64 {
        match &self.base {
            BaseFamily::Mechanical { potential } => potential.eval(x),
            BaseFamily::Drift { .. } => 0.0,
            BaseFamily::MechanicalDrift { potential, .. } => potential.eval(x),
        }
    }

    pub fn drift_at(&self, x: &[f64]) -> [f64; 2] {
        let mut v = [0.0; 2];
        match &self.base {
            BaseFamily::Mechanical { .. } => {}
            BaseFamily::Drift { drift } | BaseFamily::MechanicalDrift { drift, .. } => {
                for (d, poly) in drift.iter().enumerate() {
                    v[d] = poly.eval(x);
                }
            }
        }
        v
    }

    pub fn lambda_at(&self, x: &[f64]) -> f64 {
        self.coupling.lambda().eval(x)
    }

    pub fn kappa(&self) -> f64 {
        self.coupling.kappa()
    }

    /// Upper bound on dH/du valid on the whole phase space:
    /// lambda_max + 9 kappa / 8.
    pub fn effective_delta_upper(&self) -> f64 {
        self.lambda_max + self.kappa() * MAX_CUBIC_SLOPE
    }

    /// Coupling g(x, u); zero at u = 0, strictly decreasing in u.
    pub fn coupling_g(&self, x: &[f64], u: f64) -> f64 {
        coupling_g(self.lambda_at(x), self.kappa(), u)
    }

    /// dg/du = dL/du; velocity-independent for these families.
    pub fn coupling_g_du(&self, x: &[f64], u: f64) -> f64 {
        coupling_g_du(self.lambda_at(x), self.kappa(), u)
    }

    /// L(x, v, u).
    pub fn eval_l(&self, x: &[f64], v: &[f64], u: f64) -> f64 {
        let drift = self.drift_at(x);
        let mut kin = 0.0;
        for d in 0..self.dim {
            let w = v[d] - drift[d];
            kin += 0.5 * w * w;
        }
        kin + self.potential_at(x) + self.coupling_g(x, u)
    }

    /// dL/du(x, v, u). `v` is accepted for signature uniformity; the
    /// derivative does not depend on it for these couplings.
    pub fn eval_dldu(&self, x: &[f64], _v: &[f64], u: f64) -> f64 {
        self.coupling_g_du(x, u)
    }

    /// Closed-form Legendre transform
    /// H(x, p, u) = |p|^2/2 + <p, V(x)> - W(x) - g(x, u),
    /// the max over v of <p, v> - L(x, v, u) attained at v = p + V(x).
    pub fn legendre_h(&self, x: &[f64], p: &[f64], u: f64) -> f64 {
        let drift = self.drift_at(x);
        let mut s = 0.0;
        for d in 0..self.dim {
            s += 0.5 * p[d] * p[d] + p[d] * drift[d];
        }
        s - self.potential_at(x) - self.coupling_g(x, u)
    }

    /// Legendre transform by bracketed golden-section search in v, one
    /// coordinate at a time (the objective is separable and concave).
    /// Agrees with [`Self::legendre_h`] to high accuracy; kept as the
    /// independent route for cross-checks.
    pub fn legendre_h_bracketed(&self, x: &[f64], p: &[f64], u: f64) -> f64 {
        let drift = self.drift_at(x);
        let mut s = 0.0;
        for d in 0..self.dim {
            let radius = p[d].abs() + drift[d].abs() + 10.0;
            let f = |v: f64| p[d] * v - 0.5 * (v - drift[d]) * (v - drift[d]);
            s += golden_max(f, -radius, radius);
        }
        s - self.potential_at(x) - self.coupling_g(x, u)
    }

    /// dH/du = -dL/du > 0.
    pub fn h_u(&self, x: &[f64], u: f64) -> f64 {
        -self.coupling_g_du(x, u)
    }

    /// Spatial gradient of H. Component i is
    /// sum_j p_j dV_j/dx_i - dW/dx_i + dlambda/dx_i * u  (the saturating term
    /// carries no x-dependence beyond lambda).
    pub fn h_x(&self, x: &[f64], p: &[f64], u: f64) -> [f64; 2] {
        let mut out = [0.0; 2];
        for i in 0..self.dim {
            let mut s = 0.0;
            match &self.base {
                BaseFamily::Mechanical { potential } => {
                    s -= potential.partial(i, x);
                }
                BaseFamily::Drift { drift } => {
                    for (j, vj) in drift.iter().enumerate() {
                        s += p[j] * vj.partial(i, x);
                    }
                }
                BaseFamily::MechanicalDrift { drift, potential } => {
                    for (j, vj) in drift.iter().enumerate() {
                        s += p[j] * vj.partial(i, x);
                    }
                    s -= potential.partial(i, x);
                }
            }
            // -dg/dx_i with g = -lambda(x) u - kappa-term:
            s += self.coupling.lambda().partial(i, x) * u;
            out[i] = s;
        }
        out
    }

    /// Right-hand side of the contact characteristic system
    ///   x' = H_p,  p' = -H_x - p H_u,  u' = <p, H_p> - H.
    fn ode_rhs(&self, s: &PhasePoint) -> PhasePoint {
        let x = &s.x[..self.dim];
        let p = &s.p[..self.dim];
        let drift = self.drift_at(x);
        let mut xd = [0.0; 2];
        for d in 0..self.dim {
            xd[d] = p[d] + drift[d];
        }
        let hu = self.h_u(x, s.u);
        let hx = self.h_x(x, p, s.u);
        let mut pd = [0.0; 2];
        for d in 0..self.dim {
            pd[d] = -hx[d] - p[d] * hu;
        }
        let h = self.legendre_h(x, p, s.u);
        let mut ud = -h;
        for d in 0..self.dim {
            ud += p[d] * xd[d];
        }
        PhasePoint { x: xd, p: pd, u: ud }
    }

    /// Fixed-step RK4 integration of the contact characteristics. Positions
    /// in the output are reduced to [0, 2pi). Errors with NonFiniteState if
    /// the trajectory blows up.
    pub fn integrate_contact_ode(
        &self,
        start: PhasePoint,
        dt: f64,
        steps: usize,
    ) -> Result<Vec<PhasePoint>> {
        let mut out = Vec::with_capacity(steps + 1);
        let mut s = start;
        for d in 0..self.dim {
            s.x[d] = s.x[d].rem_euclid(TAU);
        }
        out.push(s);
        for step in 0..steps {
            let k1 = self.ode_rhs(&s);
            let k2 = self.ode_rhs(&advance(&s, &k1, dt / 2.0));
            let k3 = self.ode_rhs(&advance(&s, &k2, dt / 2.0));
            let k4 = self.ode_rhs(&advance(&s, &k3, dt));
            for d in 0..2 {
                s.x[d] += dt / 6.0 * (k1.x[d] + 2.0 * k2.x[d] + 2.0 * k3.x[d] + k4.x[d]);
                s.p[d] += dt / 6.0 * (k1.p[d] + 2.0 * k2.p[d] + 2.0 * k3.p[d] + k4.p[d]);
            }
            s.u += dt / 6.0 * (k1.u + 2.0 * k2.u + 2.0 * k3.u + k4.u);
            for d in 0..self.dim {
                s.x[d] = s.x[d].rem_euclid(TAU);
            }
            if !state_finite(&s) {
                return Err(Error::NonFiniteState { step });
            }
            out.push(s);
        }
        Ok(out)
    }

    /// Sample (x, u, v) on a 64 x 64 x 16 lattice and verify the structural
    /// bounds: positive coupling within the declared range, d2L/dv2 equal to
    /// the identity, superlinear growth in v, and the sign/band of dL/du.
    /// Returns the measured bounds delta' and Delta'.
    pub fn validate(&self) -> Result<ValidationReport> {
        let dim = self.dim;
        if dim == 0 || dim > 2 {
            return Err(Error::ModelViolation(format!("unsupported dimension {dim}")));
        }
        match &self.base {
            BaseFamily::Drift { drift } | BaseFamily::MechanicalDrift { drift, .. } => {
                if drift.len() != dim {
                    return Err(Error::ModelViolation(format!(
                        "drift has {} components for dimension {dim}",
                        drift.len()
                    )));
                }
            }
            BaseFamily::Mechanical { .. } => {}
        }
        if !(self.lambda_min > 0.0 && self.lambda_min <= self.lambda_max) {
            return Err(Error::ModelViolation(format!(
                "declared coupling bounds must satisfy 0 < delta <= Delta, got [{}, {}]",
                self.lambda_min, self.lambda_max
            )));
        }

        // x lattice: 64 points in 1D, 8 x 8 in 2D.
        let per_dim = if dim == 1 { 64 } else { 8 };
        let mut xs: Vec<[f64; 2]> = Vec::new();
        for i in 0..per_dim {
            let xi = TAU * i as f64 / per_dim as f64;
            if dim == 1 {
                xs.push([xi, 0.0]);
            } else {
                for j in 0..per_dim {
                    xs.push([xi, TAU * j as f64 / per_dim as f64]);
                }
            }
        }
        const U_BOX: f64 = 2.0;
        let us: Vec<f64> = (0..64).map(|i| -U_BOX + 2.0 * U_BOX * i as f64 / 63.0).collect();
        let vs: Vec<f64> = (0..16).map(|i| -4.0 + 8.0 * i as f64 / 15.0).collect();

        let tol = 1e-9;
        let mut lambda_lo = f64::INFINITY;
        let mut lambda_hi = f64::NEG_INFINITY;
        for x in &xs {
            let lam = self.lambda_at(&x[..dim]);
            if lam <= 0.0 {
                return Err(Error::ModelViolation(format!(
                    "lambda(x) = {lam:.6} <= 0 at x = ({:.4}, {:.4})",
                    x[0], x[1]
                )));
            }
            if lam < self.lambda_min - tol || lam > self.lambda_max + tol {
                return Err(Error::ModelViolation(format!(
                    "lambda(x) = {lam:.6} outside declared [{}, {}] at x = ({:.4}, {:.4})",
                    self.lambda_min, self.lambda_max, x[0], x[1]
                )));
            }
            lambda_lo = lambda_lo.min(lam);
            lambda_hi = lambda_hi.max(lam);
        }

        // Band of -dL/du over the (x, u) box.
        let mut delta_measured = f64::INFINITY;
        let mut delta_upper = f64::NEG_INFINITY;
        let v0 = [0.0, 0.0];
        for x in &xs {
            for &u in &us {
                let m = -self.eval_dldu(&x[..dim], &v0[..dim], u);
                delta_measured = delta_measured.min(m);
                delta_upper = delta_upper.max(m);
            }
        }
        if delta_measured <= 0.0 {
            return Err(Error::ModelViolation(format!(
                "dL/du fails to stay strictly negative: min of -dL/du = {delta_measured:.6}"
            )));
        }
        let upper_cap = self.effective_delta_upper() + tol;
        if delta_upper > upper_cap {
            return Err(Error::ModelViolation(format!(
                "-dL/du = {delta_upper:.6} exceeds lambda_max + 9 kappa / 8 = {upper_cap:.6}"
            )));
        }

        // d2L/dv2 = identity (finite differences at a few samples).
        let mut hessian_ok = true;
        let hstep = 1e-4;
        for x in xs.iter().step_by(7) {
            for d in 0..dim {
                let mut vp = [0.5, -0.25];
                let base = self.eval_l(&x[..dim], &vp[..dim], 0.3);
                vp[d] += hstep;
                let plus = self.eval_l(&x[..dim], &vp[..dim], 0.3);
                vp[d] -= 2.0 * hstep;
                let minus = self.eval_l(&x[..dim], &vp[..dim], 0.3);
                let second = (plus - 2.0 * base + minus) / (hstep * hstep);
                if (second - 1.0).abs() > 1e-4 {
                    hessian_ok = false;
                }
            }
        }
        if !hessian_ok {
            return Err(Error::ModelViolation(
                "kinetic Hessian deviates from the identity".into(),
            ));
        }

        // Superlinearity witness: quadratic growth along each axis at the
        // largest sampled speed.
        let mut superlinear_ok = true;
        let vbig = vs.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        for x in xs.iter().step_by(7) {
            for d in 0..dim {
                let mut v = [0.0, 0.0];
                v[d] = vbig;
                let l = self.eval_l(&x[..dim], &v[..dim], 0.0);
                if l < vbig * vbig / 4.0 - self.sup_scale() {
                    superlinear_ok = false;
                }
            }
        }
        if !superlinear_ok {
            return Err(Error::ModelViolation("superlinear growth check failed".into()));
        }

        Ok(ValidationReport {
            delta_measured,
            delta_upper_measured: delta_upper,
            lambda_lo,
            lambda_hi,
            hessian_identity_ok: hessian_ok,
            superlinear_ok,
        })
    }

    /// Rough magnitude of the model's coefficient data, used to scale loose
    /// sanity tolerances.
    fn sup_scale(&self) -> f64 {
        let mut s = 1.0f64;
        match &self.base {
            BaseFamily::Mechanical { potential } => s = s.max(potential.sup_bound()),
            BaseFamily::Drift { drift } => {
                for p in drift {
                    s = s.max(p.sup_bound() * p.sup_bound());
                }
            }
            BaseFamily::MechanicalDrift { drift, potential } => {
                s = s.max(potential.sup_bound());
                for p in drift {
                    s = s.max(p.sup_bound() * p.sup_bound());
                }
            }
        }
        s
    }
}

/// g(lambda, kappa; u) = -lambda u - kappa u^3 / (1 + u^2).
pub fn coupling_g(lambda: f64, kappa: f64, u: f64) -> f64 {
    -lambda * u - kappa * u * u * u / (1.0 + u * u)
}

/// dg/du = -lambda - kappa u^2 (3 + u^2) / (1 + u^2)^2.
pub fn coupling_g_du(lambda: f64, kappa: f64, u: f64) -> f64 {
    let u2 = u * u;
    let den = 1.0 + u2;
    -lambda - kappa * u2 * (3.0 + u2) / (den * den)
}

fn advance(s: &PhasePoint, k: &PhasePoint, h: f64) -> PhasePoint {
    PhasePoint {
        x: [s.x[0] + h * k.x[0], s.x[1] + h * k.x[1]],
        p: [s.p[0] + h * k.p[0], s.p[1] + h * k.p[1]],
        u: s.u + h * k.u,
    }
}

fn state_finite(s: &PhasePoint) -> bool {
    s.x.iter().all(|v| v.is_finite()) && s.p.iter().all(|v| v.is_finite()) && s.u.is_finite()
}

/// Golden-section maximization of a concave function on [lo, hi].
fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INVPHI * (hi - lo);
    let mut x2 = lo + INVPHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if hi - lo < 1e-12 {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INVPHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INVPHI * (hi - lo);
            f1 = f(x1);
        }
    }
    f(0.5 * (lo + hi))
}
