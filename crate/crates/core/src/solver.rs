//! Time stepping for `D_t^alpha u = f` (scalar) and
//! `D_t^alpha u - (a u_x)_x + c u = f` on `(0, X)` (lumped-mass linear elements on a
//! uniform grid, i.e. the three-point flux form).
//!
//! Step `m` solves for the increment `U^m - U^{m-1}`: the history part of
//! `delta U^m` is evaluated with `U^m` replaced by `U^{m-1}`, in divided-difference
//! form, so that its leading term is not a difference of two large sums.

use std::sync::Arc;

use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{check_alpha, Error, Result};
use crate::mesh::TemporalMesh;
use crate::operator::{L2Operator, Variant};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type FieldFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// `D_t^alpha u = f(t)`, `u(0) = u0`, on `(0, T]`.
#[derive(Clone)]
pub struct ScalarProblem {
    pub alpha: f64,
    pub final_time: f64,
    pub source: ScalarFn,
    pub initial: f64,
    pub exact: Option<ScalarFn>,
}

impl ScalarProblem {
    /// Manufactured `u = t^alpha`, `f = Gamma(1 + alpha)`.
    pub fn t_alpha(alpha: f64, final_time: f64) -> Self {
        let g = gamma(1.0 + alpha);
        Self {
            alpha,
            final_time,
            source: Arc::new(move |_| g),
            initial: 0.0,
            exact: Some(Arc::new(move |t: f64| t.powf(alpha))),
        }
    }

    /// Manufactured `u = t^2`, `f = 2 t^(2-alpha) / Gamma(3 - alpha)`.
    pub fn quadratic(alpha: f64, final_time: f64) -> Self {
        let g = gamma(3.0 - alpha);
        Self {
            alpha,
            final_time,
            source: Arc::new(move |t: f64| 2.0 * t.powf(2.0 - alpha) / g),
            initial: 0.0,
            exact: Some(Arc::new(|t: f64| t * t)),
        }
    }

    pub fn zero(alpha: f64, final_time: f64) -> Self {
        Self {
            alpha,
            final_time,
            source: Arc::new(|_| 0.0),
            initial: 0.0,
            exact: Some(Arc::new(|_| 0.0)),
        }
    }
}

/// 1D parabolic problem on `(0, length)` with Dirichlet data.
#[derive(Clone)]
pub struct Parabolic1DProblem {
    pub alpha: f64,
    pub final_time: f64,
    pub length: f64,
    pub diffusion: ScalarFn,
    pub reaction: ScalarFn,
    pub source: FieldFn,
    pub initial: ScalarFn,
    /// Boundary values `g(x, t)` at `x = 0` and `x = length`; `None` means homogeneous.
    pub boundary: Option<FieldFn>,
    pub exact: Option<FieldFn>,
    /// Number of interior grid nodes.
    pub interior_nodes: usize,
}

impl Parabolic1DProblem {
    /// Manufactured `u = t^alpha sin(pi x)` on `(0, 1)` with `a = 1`, `c = 1 + x^2`.
    pub fn sin_manufactured(alpha: f64, final_time: f64, interior_nodes: usize) -> Self {
        use std::f64::consts::PI;
        let g = gamma(1.0 + alpha);
        Self {
            alpha,
            final_time,
            length: 1.0,
            diffusion: Arc::new(|_| 1.0),
            reaction: Arc::new(|x: f64| 1.0 + x * x),
            source: Arc::new(move |x: f64, t: f64| {
                let s = (PI * x).sin();
                g * s + t.powf(alpha) * (PI * PI + 1.0 + x * x) * s
            }),
            initial: Arc::new(|_| 0.0),
            boundary: None,
            exact: Some(Arc::new(move |x: f64, t: f64| t.powf(alpha) * (PI * x).sin())),
            interior_nodes,
        }
    }

    /// Same exact solution, but with the source built from the discrete spatial
    /// operator, so the grid values of `t^alpha sin(pi x)` solve the semidiscrete
    /// problem exactly and all remaining error is temporal.
    pub fn sin_grid_exact(alpha: f64, final_time: f64, interior_nodes: usize) -> Self {
        use std::f64::consts::PI;
        let mut p = Self::sin_manufactured(alpha, final_time, interior_nodes);
        let h = 1.0 / (interior_nodes as f64 + 1.0);
        let lambda_h = (2.0 - 2.0 * (PI * h).cos()) / (h * h);
        let g = gamma(1.0 + alpha);
        p.source = Arc::new(move |x: f64, t: f64| {
            let s = (PI * x).sin();
            g * s + t.powf(alpha) * (lambda_h + 1.0 + x * x) * s
        });
        p
    }

    pub fn spacing(&self) -> f64 {
        self.length / (self.interior_nodes as f64 + 1.0)
    }

    /// Grid including both boundary nodes.
    pub fn grid(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.interior_nodes + 2).map(|i| i as f64 * h).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalarSolution {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `u(t_m) - U^m` when the exact solution is known.
    pub errors: Option<Vec<f64>>,
}

impl ScalarSolution {
    pub fn final_error(&self) -> Option<f64> {
        self.errors.as_ref().and_then(|e| e.last()).map(|e| e.abs())
    }

    /// `max_{m >= 1} |e^m|`.
    pub fn max_nodal_error(&self) -> Option<f64> {
        self.errors
            .as_ref()
            .map(|e| e.iter().skip(1).fold(0.0f64, |acc, v| acc.max(v.abs())))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(if self.errors.is_some() { "m,t_m,U,error\n" } else { "m,t_m,U\n" });
        for (m, (t, u)) in self.times.iter().zip(&self.values).enumerate() {
            match &self.errors {
                Some(e) => out.push_str(&format!("{m},{t},{u},{}\n", e[m])),
                None => out.push_str(&format!("{m},{t},{u}\n")),
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParabolicSolution {
    pub times: Vec<f64>,
    /// Grid including boundary nodes.
    pub grid: Vec<f64>,
    /// `fields[m]` holds the interior values at `t_m`.
    pub fields: Vec<Vec<f64>>,
    /// Max-norm residual of each tridiagonal solve (entry 0 unused).
    pub residuals: Vec<f64>,
    /// Discrete `L2(0, X)` error per step when the exact solution is known.
    pub l2_errors: Option<Vec<f64>>,
}

impl ParabolicSolution {
    pub fn final_l2_error(&self) -> Option<f64> {
        self.l2_errors.as_ref().and_then(|e| e.last().copied())
    }

    pub fn max_l2_error(&self) -> Option<f64> {
        self.l2_errors
            .as_ref()
            .map(|e| e.iter().skip(1).fold(0.0f64, |a, v| a.max(*v)))
    }

    /// CSV snapshot `x,U` (boundary values omitted) at step `m`.
    pub fn snapshot_csv(&self, m: usize) -> String {
        let mut out = String::from("x,U\n");
        for (x, u) in self.grid[1..].iter().zip(&self.fields[m]) {
            out.push_str(&format!("{x},{u}\n"));
        }
        out
    }
}

/// Divided differences of the computed history, `stride` components per time level.
struct History {
    stride: usize,
    /// `d1[i]`: first divided difference over `(t_{i-1}, t_i)`, `i >= 1`.
    d1: Vec<f64>,
    /// `d2[c]`: second divided difference over `(t_{c-1}, t_c, t_{c+1})`, `c >= 1`.
    d2: Vec<f64>,
    w0: Vec<f64>,
    wc: Vec<f64>,
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl History {
    fn new(steps: usize, stride: usize) -> Self {
        Self {
            stride,
            d1: vec![0.0; (steps + 1) * stride],
            d2: vec![0.0; (steps + 1) * stride],
            w0: Vec::with_capacity(steps + 1),
            wc: Vec::with_capacity(steps + 1),
            sum: vec![0.0; stride],
            comp: vec![0.0; stride],
        }
    }

    #[inline]
    fn add_scaled(&mut self, src_offset: usize, src_is_d1: bool, w: f64) {
        let n = self.stride;
        let src = if src_is_d1 { &self.d1 } else { &self.d2 };
        let row = &src[src_offset * n..(src_offset + 1) * n];
        for ((s, c), &d) in self.sum.iter_mut().zip(self.comp.iter_mut()).zip(row) {
            let x = d * w;
            let t = *s + x;
            if s.abs() >= x.abs() {
                *c += (*s - t) + x;
            } else {
                *c += (x - t) + *s;
            }
            *s = t;
        }
    }

    /// Returns `Gamma(1-alpha) kappa*_{m,m}` and leaves in `out` the value of
    /// `Gamma(1-alpha) delta U^m` with `U^m := U^{m-1}`.
    fn step(
        &mut self,
        op: &L2Operator,
        m: usize,
        prev2: Option<&[f64]>,
        prev: &[f64],
        out: &mut [f64],
    ) -> f64 {
        op.step_weights(m, &mut self.w0, &mut self.wc);
        self.sum.iter_mut().for_each(|v| *v = 0.0);
        self.comp.iter_mut().for_each(|v| *v = 0.0);
        for i in 1..m {
            let w = self.w0[i];
            self.add_scaled(i, true, w);
        }
        let t = op.mesh().nodes();
        let mut diag = self.w0[m] / (t[m] - t[m - 1]);
        if !op.is_linear_row(m) {
            for i in 1..m.saturating_sub(1) {
                let w = self.wc[i];
                self.add_scaled(i, false, w);
            }
            let d = op.triple_weights(m - 1);
            let wsum = self.wc[m - 1] + self.wc[m];
            let prev2 = prev2.expect("quadratic rows start at m = 2");
            for (k, (&a, &b)) in prev2.iter().zip(prev).enumerate() {
                let x = op.second_difference(m - 1, a, b, b) * wsum;
                let s = self.sum[k];
                let tt = s + x;
                if s.abs() >= x.abs() {
                    self.comp[k] += (s - tt) + x;
                } else {
                    self.comp[k] += (x - tt) + s;
                }
                self.sum[k] = tt;
            }
            diag += d[2] * wsum;
        }
        for ((o, s), c) in out.iter_mut().zip(&self.sum).zip(&self.comp) {
            *o = s + c;
        }
        diag
    }

    /// Records the divided differences that become available once `U^m` is known.
    fn record(&mut self, op: &L2Operator, m: usize, levels: [Option<&[f64]>; 3]) {
        let n = self.stride;
        let t = op.mesh().nodes();
        let [u_m2, u_m1, u_m] = levels;
        let (u_m1, u_m) = (u_m1.unwrap(), u_m.unwrap());
        let inv = 1.0 / (t[m] - t[m - 1]);
        for k in 0..n {
            self.d1[m * n + k] = (u_m[k] - u_m1[k]) * inv;
        }
        if let Some(u_m2) = u_m2 {
            for k in 0..n {
                self.d2[(m - 1) * n + k] = op.second_difference(m - 1, u_m2[k], u_m1[k], u_m[k]);
            }
        }
    }
}

fn check_mesh_end(mesh: &TemporalMesh, final_time: f64) -> Result<()> {
    let end = mesh.final_time();
    if (end - final_time).abs() > 1e-12 * final_time.abs().max(1.0) {
        return Err(Error::InvalidMesh(format!(
            "mesh ends at {end} but the problem is posed on (0, {final_time}]"
        )));
    }
    Ok(())
}

/// `delta U^m = f(t_m)`, `m = 1..=M`, `U^0 = u0`.
pub fn solve_scalar(
    problem: &ScalarProblem,
    mesh: &TemporalMesh,
    variant: Variant,
) -> Result<ScalarSolution> {
    check_alpha(problem.alpha)?;
    check_mesh_end(mesh, problem.final_time)?;
    let op = L2Operator::new(mesh.clone(), problem.alpha, variant)?;
    let steps = mesh.steps();
    let g = op.gamma_1ma();
    let mut values = Vec::with_capacity(steps + 1);
    values.push(problem.initial);
    let mut hist = History::new(steps, 1);
    let mut partial = [0.0];
    for m in 1..=steps {
        let prev = values[m - 1];
        let prev2 = (m >= 2).then(|| values[m - 2]);
        let diag = hist.step(&op, m, prev2.as_ref().map(std::slice::from_ref), &[prev], &mut partial);
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::SolverBreakdown {
                step: m,
                reason: format!("kappa*_(m,m) = {} is not positive", diag / g),
            });
        }
        let rhs = g * (problem.source)(mesh.t(m)) - partial[0];
        let next = prev + rhs / diag;
        values.push(next);
        let u_m2 = prev2.map(|v| [v]);
        hist.record(
            &op,
            m,
            [u_m2.as_ref().map(|v| &v[..]), Some(&[prev]), Some(&[next])],
        );
    }
    let errors = problem.exact.as_ref().map(|u| {
        mesh.nodes()
            .iter()
            .zip(&values)
            .map(|(&t, &v)| u(t) - v)
            .collect()
    });
    Ok(ScalarSolution {
        times: mesh.nodes().to_vec(),
        values,
        errors,
    })
}

/// Tridiagonal solve (Thomas algorithm) of `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]`.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if lower.len() != n || upper.len() != n || rhs.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: rhs.len().min(lower.len()).min(upper.len()),
        });
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 || !beta.is_finite() {
        return Err(Error::SingularDiagonal { row: 0 });
    }
    c[0] = upper[0] / beta;
    d[0] = rhs[0] / beta;
    for i in 1..n {
        beta = diag[i] - lower[i] * c[i - 1];
        if beta == 0.0 || !beta.is_finite() {
            return Err(Error::SingularDiagonal { row: i });
        }
        c[i] = upper[i] / beta;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Discrete spatial operator `L_h` on the interior nodes.
struct SpatialOperator {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl SpatialOperator {
    fn new(problem: &Parabolic1DProblem) -> Result<Self> {
        let n = problem.interior_nodes;
        let h = problem.spacing();
        let h2 = h * h;
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 0..n {
            let x = (i + 1) as f64 * h;
            let a_left = (problem.diffusion)(x - 0.5 * h);
            let a_right = (problem.diffusion)(x + 0.5 * h);
            let c = (problem.reaction)(x);
            if !(a_left > 0.0 && a_right > 0.0) {
                return Err(Error::param("a", format!("diffusion must be positive near x = {x}")));
            }
            if !(c >= 0.0) {
                return Err(Error::param("c", format!("reaction must be non-negative at x = {x}")));
            }
            lower[i] = -a_left / h2;
            upper[i] = -a_right / h2;
            diag[i] = (a_left + a_right) / h2 + c;
        }
        Ok(Self { lower, diag, upper })
    }

    /// `(L_h v)_i` for interior `v` with boundary values `left`, `right`.
    fn apply(&self, v: &[f64], left: f64, right: f64, out: &mut [f64]) {
        let n = v.len();
        for i in 0..n {
            let vl = if i == 0 { left } else { v[i - 1] };
            let vr = if i + 1 == n { right } else { v[i + 1] };
            out[i] = self.lower[i] * vl + self.diag[i] * v[i] + self.upper[i] * vr;
        }
    }
}

/// Fully discrete parabolic stepper: `(kappa*_{m,m} I + L_h) U^m = f^m - history`.
pub fn solve_parabolic_1d(
    problem: &Parabolic1DProblem,
    mesh: &TemporalMesh,
    variant: Variant,
) -> Result<ParabolicSolution> {
    check_alpha(problem.alpha)?;
    check_mesh_end(mesh, problem.final_time)?;
    let n = problem.interior_nodes;
    if n < 3 {
        return Err(Error::param("N", format!("need at least 3 interior nodes, got {n}")));
    }
    if !(problem.length > 0.0) {
        return Err(Error::param("X", "domain length must be positive"));
    }
    let op = L2Operator::new(mesh.clone(), problem.alpha, variant)?;
    let spatial = SpatialOperator::new(problem)?;
    let steps = mesh.steps();
    let g = op.gamma_1ma();
    let grid = problem.grid();
    let h = problem.spacing();
    let interior = &grid[1..=n];
    let boundary = |t: f64| match &problem.boundary {
        Some(b) => (b(0.0, t), b(problem.length, t)),
        None => (0.0, 0.0),
    };

    let mut fields: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    fields.push(interior.iter().map(|&x| (problem.initial)(x)).collect());
    let mut residuals = vec![0.0; steps + 1];
    let mut hist = History::new(steps, n);
    let mut partial = vec![0.0; n];
    let mut lu = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut diag = vec![0.0; n];
    for m in 1..=steps {
        let tm = mesh.t(m);
        let kappa = {
            let (prev2, prev) = if m >= 2 {
                (Some(fields[m - 2].as_slice()), fields[m - 1].as_slice())
            } else {
                (None, fields[0].as_slice())
            };
            hist.step(&op, m, prev2, prev, &mut partial) / g
        };
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::SolverBreakdown {
                step: m,
                reason: format!("kappa*_(m,m) = {kappa} is not positive"),
            });
        }
        let (left, right) = boundary(tm);
        spatial.apply(&fields[m - 1], left, right, &mut lu);
        for i in 0..n {
            rhs[i] = (problem.source)(interior[i], tm) - partial[i] / g - lu[i];
            diag[i] = spatial.diag[i] + kappa;
        }
        let delta = solve_tridiagonal(&spatial.lower, &diag, &spatial.upper, &rhs)
            .map_err(|e| Error::SolverBreakdown { step: m, reason: e.to_string() })?;
        let mut res = 0.0f64;
        for i in 0..n {
            let mut r = diag[i] * delta[i] - rhs[i];
            if i > 0 {
                r += spatial.lower[i] * delta[i - 1];
            }
            if i + 1 < n {
                r += spatial.upper[i] * delta[i + 1];
            }
            res = res.max(r.abs());
        }
        residuals[m] = res;
        let next: Vec<f64> = fields[m - 1].iter().zip(&delta).map(|(u, d)| u + d).collect();
        fields.push(next);
        let levels = [
            (m >= 2).then(|| fields[m - 2].as_slice()),
            Some(fields[m - 1].as_slice()),
            Some(fields[m].as_slice()),
        ];
        hist.record(&op, m, levels);
    }
    let l2_errors = problem.exact.as_ref().map(|u| {
        mesh.nodes()
            .iter()
            .zip(&fields)
            .map(|(&t, field)| {
                let s: f64 = interior
                    .iter()
                    .zip(field)
                    .map(|(&x, v)| (u(x, t) - v).powi(2))
                    .sum();
                (h * s).sqrt()
            })
            .collect()
    });
    Ok(ParabolicSolution {
        times: mesh.nodes().to_vec(),
        grid,
        fields,
        residuals,
        l2_errors,
    })
}
