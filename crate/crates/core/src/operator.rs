//! The L2-type discrete Caputo operator.
//!
//! `delta U^m` is the Caputo derivative at `t_m` of a piecewise Lagrange interpolant of
//! the nodal values: linear on `(0, t_1)` for `m = 1`, and for `m >= 2` quadratic on
//! every interval, using the nodes `{t_{i-1}, t_i, t_{i+1}}` on `(t_{i-1}, t_i)` for
//! `i < m` and `{t_{m-2}, t_{m-1}, t_m}` on the last interval.
//!
//! On an interval `(a, b)` every such interpolant has derivative
//! `p'(s) = D1 + D2 (2s - a - b)` where `D1` is the first divided difference over
//! `(a, b)` and `D2` the second divided difference of the interpolation triple. The
//! kernel therefore enters only through two weights per interval,
//!
//! ```text
//! w0 = int_a^b (t_m - s)^(-alpha) ds,   wc = int_a^b (t_m - s)^(-alpha) (2s - a - b) ds,
//! ```
//!
//! which are evaluated in closed form near `t_m` and by a convergent binomial series
//! in `eps = (b - a) / (2 (t_m - (a + b)/2))` elsewhere. The series avoids the
//! cancellation that plain power differences suffer on intervals far from `t_m`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{check_alpha, Error, Result};
use crate::mesh::TemporalMesh;

/// Intervals with `eps` at or below this use the series.
const SERIES_EPS: f64 = 0.5;
/// Enough terms for `SERIES_EPS^(2n) < 1e-17`.
const SERIES_TERMS: usize = 30;
/// Below this relative width the moments fall back to Gauss quadrature.
const GAUSS_FALLBACK_WIDTH: f64 = 1e-8;

/// Interpolation rule for the first steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Variant {
    #[default]
    Standard,
    /// Piecewise-linear (L1) interpolation on every interval for `m <= k`.
    L1Start { k: usize },
}

impl Variant {
    fn linear_row(self, m: usize) -> bool {
        m == 1 || matches!(self, Variant::L1Start { k } if m <= k)
    }

    /// Length of the L1 prefix (1 for the standard operator, whose first row is linear).
    pub fn prefix(self) -> usize {
        match self {
            Variant::Standard => 1,
            Variant::L1Start { k } => k.max(1),
        }
    }
}

/// Weighted kernel moments `int_a^b (t_m - s)^(-alpha) u^k ds` with `u = t_m - s`,
/// `k = 0, 1, 2`.
pub fn kernel_moments(a: f64, b: f64, t_m: f64, alpha: f64) -> Result<[f64; 3]> {
    check_alpha(alpha)?;
    if !(a >= 0.0 && a < b) {
        return Err(Error::param("interval", format!("need 0 <= a < b, got ({a}, {b})")));
    }
    if b > t_m {
        return Err(Error::param("interval", format!("b = {b} exceeds t_m = {t_m}")));
    }
    let ua = t_m - a;
    let ub = t_m - b;
    let h = b - a;
    let mut out = [0.0; 3];
    if ub > 0.0 && h / ub < GAUSS_FALLBACK_WIDTH {
        for (k, slot) in out.iter_mut().enumerate() {
            let p = k as f64 - alpha;
            *slot = gauss5(ub, ua, |u| u.powf(p));
        }
        return Ok(out);
    }
    for (k, slot) in out.iter_mut().enumerate() {
        let p = k as f64 + 1.0 - alpha;
        // ua^p - ub^p = -ua^p * expm1(p * ln(1 - h/ua))
        let diff = -ua.powf(p) * (p * (-h / ua).ln_1p()).exp_m1();
        *slot = diff / p;
    }
    Ok(out)
}

fn gauss5(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    const X: [f64; 5] = [
        -0.906_179_845_938_664,
        -0.538_469_310_105_683,
        0.0,
        0.538_469_310_105_683,
        0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.236_926_885_056_189_1,
        0.478_628_670_499_366_5,
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
    ];
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    half * X.iter().zip(W).map(|(x, w)| w * f(mid + half * x)).sum::<f64>()
}

/// Series coefficients of `(1 - eps x)^(-alpha)` integrated against `1` and `x` on `[-1, 1]`.
#[derive(Debug, Clone)]
struct KernelSeries {
    even: [f64; SERIES_TERMS],
    odd: [f64; SERIES_TERMS],
}

impl KernelSeries {
    fn new(alpha: f64) -> Self {
        let mut even = [0.0; SERIES_TERMS];
        let mut odd = [0.0; SERIES_TERMS];
        // c_n = (alpha)_n / n!
        let mut c = 1.0;
        for n in 0..2 * SERIES_TERMS {
            if n > 0 {
                c *= (alpha + n as f64 - 1.0) / n as f64;
            }
            let k = n / 2;
            if n % 2 == 0 {
                even[k] = c / (n as f64 + 1.0);
            } else {
                odd[k] = c / (n as f64 + 2.0);
            }
        }
        Self { even, odd }
    }

    /// Returns `(sum_k even_k e2^k, sum_k odd_k e2^k)` with `e2 = eps^2`.
    #[inline]
    fn eval(&self, e2: f64) -> (f64, f64) {
        let mut s0 = self.even[0];
        let mut s1 = self.odd[0];
        let mut p = 1.0;
        for k in 1..SERIES_TERMS {
            p *= e2;
            let t0 = self.even[k] * p;
            let t1 = self.odd[k] * p;
            s0 += t0;
            s1 += t1;
            if t0 <= 1e-17 * s0 && t1 <= 1e-17 * s1 {
                break;
            }
        }
        (s0, s1)
    }
}

/// Hat-basis coefficients `kappa*_{m,j}`, `j = 0..=m`, of one row of the operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRow {
    pub m: usize,
    pub coeffs: Vec<f64>,
    pub variant: Variant,
}

impl KernelRow {
    pub fn diagonal(&self) -> f64 {
        self.coeffs[self.m]
    }

    pub fn apply(&self, values: &[f64]) -> Result<f64> {
        if values.len() < self.m + 1 {
            return Err(Error::LengthMismatch {
                expected: self.m + 1,
                got: values.len(),
            });
        }
        Ok(compensated_dot(&self.coeffs, &values[..=self.m]))
    }
}

/// Assembles rows, applies the operator and evaluates per-interval kernel weights
/// for a fixed mesh, order and variant.
#[derive(Debug, Clone)]
pub struct L2Operator {
    mesh: TemporalMesh,
    alpha: f64,
    variant: Variant,
    series: KernelSeries,
    gamma_1ma: f64,
}

impl L2Operator {
    pub fn new(mesh: TemporalMesh, alpha: f64, variant: Variant) -> Result<Self> {
        check_alpha(alpha)?;
        if let Variant::L1Start { k } = variant {
            if k < 1 {
                return Err(Error::param("K", "L1 prefix length must be >= 1"));
            }
        }
        Ok(Self {
            mesh,
            alpha,
            variant,
            series: KernelSeries::new(alpha),
            gamma_1ma: gamma(1.0 - alpha),
        })
    }

    pub fn mesh(&self) -> &TemporalMesh {
        &self.mesh
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// `Gamma(1 - alpha)`; every weight below is unscaled by it.
    pub fn gamma_1ma(&self) -> f64 {
        self.gamma_1ma
    }

    /// `(w0, wc)` for `(a, b)` and target time `t_m >= b`.
    #[inline]
    pub fn interval_weights(&self, a: f64, b: f64, t_m: f64) -> (f64, f64) {
        let alpha = self.alpha;
        let h = b - a;
        let ua = t_m - a;
        let ub = t_m - b;
        let umid = 0.5 * (ua + ub);
        let eps = h / (2.0 * umid);
        if eps <= SERIES_EPS {
            let scale = umid.powf(-alpha);
            let (s0, s1) = self.series.eval(eps * eps);
            (h * scale * s0, h * h * scale * eps * s1)
        } else {
            let p0 = 1.0 - alpha;
            let pa = ua.powf(p0);
            let pb = if ub > 0.0 { ub.powf(p0) } else { 0.0 };
            let w0 = (pa - pb) / p0;
            let w1 = (pa * ua - pb * ub) / (2.0 - alpha);
            (w0, 2.0 * (umid * w0 - w1))
        }
    }

    /// Fills `w0[i], wc[i]` for the intervals `i = 1..=m` at target `t_m` (index 0 unused).
    pub fn step_weights(&self, m: usize, w0: &mut Vec<f64>, wc: &mut Vec<f64>) {
        w0.clear();
        wc.clear();
        w0.push(0.0);
        wc.push(0.0);
        let t = self.mesh.nodes();
        let tm = t[m];
        for i in 1..=m {
            let (a, b) = self.interval_weights(t[i - 1], t[i], tm);
            w0.push(a);
            wc.push(b);
        }
    }

    /// Whether row `m` uses linear interpolation throughout.
    pub fn is_linear_row(&self, m: usize) -> bool {
        self.variant.linear_row(m)
    }

    /// Centre of the interpolation triple used on interval `i` of row `m`, or `None`
    /// for linear interpolation.
    #[inline]
    pub fn triple_centre(&self, i: usize, m: usize) -> Option<usize> {
        if self.is_linear_row(m) {
            None
        } else {
            Some(i.min(m - 1))
        }
    }

    /// Second-divided-difference weights of the triple centred at `c`.
    #[inline]
    pub fn triple_weights(&self, c: usize) -> [f64; 3] {
        let t = self.mesh.nodes();
        let (x0, x1, x2) = (t[c - 1], t[c], t[c + 1]);
        [
            1.0 / ((x0 - x1) * (x0 - x2)),
            1.0 / ((x1 - x0) * (x1 - x2)),
            1.0 / ((x2 - x0) * (x2 - x1)),
        ]
    }

    /// Second divided difference of `(v0, v1, v2)` over the triple centred at `c`, in
    /// nested form (exactly zero for constant data).
    #[inline]
    pub fn second_difference(&self, c: usize, v0: f64, v1: f64, v2: f64) -> f64 {
        let t = self.mesh.nodes();
        let (x0, x1, x2) = (t[c - 1], t[c], t[c + 1]);
        ((v2 - v1) / (x2 - x1) - (v1 - v0) / (x1 - x0)) / (x2 - x0)
    }

    /// Adds the contributions of intervals `first..=m` to `coeffs` (hat basis, scaled
    /// by `Gamma(1-alpha)`). Coefficients of nodes `j >= first` are then complete.
    fn accumulate_row(&self, m: usize, first: usize, coeffs: &mut [f64]) {
        let t = self.mesh.nodes();
        let tm = t[m];
        for i in first.max(1)..=m {
            let (w0, wc) = self.interval_weights(t[i - 1], t[i], tm);
            let g = w0 / (t[i] - t[i - 1]);
            coeffs[i] += g;
            coeffs[i - 1] -= g;
            if let Some(c) = self.triple_centre(i, m) {
                let d = self.triple_weights(c);
                coeffs[c - 1] += d[0] * wc;
                coeffs[c] += d[1] * wc;
                coeffs[c + 1] += d[2] * wc;
            }
        }
    }

    /// Full row `kappa*_{m, 0..=m}`.
    pub fn row(&self, m: usize) -> KernelRow {
        assert!(m >= 1 && m <= self.mesh.steps(), "row index {m} out of range");
        let mut coeffs = vec![0.0; m + 1];
        self.accumulate_row(m, 1, &mut coeffs);
        let inv = 1.0 / self.gamma_1ma;
        coeffs.iter_mut().for_each(|c| *c *= inv);
        KernelRow {
            m,
            coeffs,
            variant: self.variant,
        }
    }

    /// `kappa*_{m,j}` for `j in m-2..=m` (clamped at 0), computed from the nearby
    /// intervals only. Returned as `[kappa_{m,m-2}, kappa_{m,m-1}, kappa_{m,m}]`.
    pub fn row_tail(&self, m: usize) -> [f64; 3] {
        let j0 = m.saturating_sub(2);
        let first = j0.saturating_sub(1).max(1);
        let mut coeffs = vec![0.0; m + 1];
        self.accumulate_row(m, first, &mut coeffs);
        let inv = 1.0 / self.gamma_1ma;
        let get = |j: Option<usize>| j.map_or(0.0, |j| coeffs[j] * inv);
        [get(m.checked_sub(2)), get(m.checked_sub(1)), get(Some(m))]
    }

    /// `delta U^m` evaluated in divided-difference form, which is free of the
    /// cancellation in the hat-basis sum.
    pub fn apply_nodes(&self, values: &[f64], m: usize) -> Result<f64> {
        if values.len() < m + 1 {
            return Err(Error::LengthMismatch {
                expected: m + 1,
                got: values.len(),
            });
        }
        let t = self.mesh.nodes();
        let tm = t[m];
        let mut acc = Neumaier::default();
        for i in 1..=m {
            let (w0, wc) = self.interval_weights(t[i - 1], t[i], tm);
            let d1 = (values[i] - values[i - 1]) / (t[i] - t[i - 1]);
            acc.add(d1 * w0);
            if let Some(c) = self.triple_centre(i, m) {
                let d2 = self.second_difference(c, values[c - 1], values[c], values[c + 1]);
                acc.add(d2 * wc);
            }
        }
        Ok(acc.sum() / self.gamma_1ma)
    }

    /// Materialises every row. Memory is `O(M^2)`; intended for verification paths.
    pub fn matrix(&self) -> OperatorMatrix {
        use rayon::prelude::*;
        let rows = (1..=self.mesh.steps())
            .into_par_iter()
            .map(|m| self.row(m))
            .collect();
        OperatorMatrix {
            alpha: self.alpha,
            variant: self.variant,
            mesh: self.mesh.clone(),
            rows,
        }
    }

    /// `B_m, A_m, A''_m, F_m` for `m = 1..=M` from the assembled row tails.
    pub fn stencil_diagnostics(&self) -> StencilDiagnostics {
        let steps = self.mesh.steps();
        let t = self.mesh.nodes();
        let mut out = StencilDiagnostics {
            b: vec![f64::NAN; steps + 1],
            a: vec![f64::NAN; steps + 1],
            a_far: vec![f64::NAN; steps + 1],
            f: vec![f64::NAN; steps + 1],
        };
        for m in 1..=steps {
            let scale = self.mesh.tau_avg(m).powf(self.alpha) * self.gamma_1ma * 2f64.powf(self.alpha);
            let [k2, k1, k0] = self.row_tail(m);
            out.b[m] = scale * k0;
            out.a[m] = -scale * k1;
            if m >= 2 {
                out.f[m] = scale * (k2 + k1 + k0);
            }
            // far contribution to kappa_{m,m-1}: interval m-2 through its triple
            let mut far = 0.0;
            if m >= 3 {
                if let Some(c) = self.triple_centre(m - 2, m) {
                    let (_, wc) = self.interval_weights(t[m - 3], t[m - 2], t[m]);
                    far = self.triple_weights(c)[2] * wc / self.gamma_1ma;
                }
            }
            out.a_far[m] = scale * far;
        }
        out
    }
}

/// All rows of the operator for one mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorMatrix {
    pub alpha: f64,
    pub variant: Variant,
    pub mesh: TemporalMesh,
    pub rows: Vec<KernelRow>,
}

impl OperatorMatrix {
    pub fn steps(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, m: usize) -> &KernelRow {
        &self.rows[m - 1]
    }

    /// `sum_j kappa*_{m,j} U^j`.
    pub fn apply(&self, values: &[f64], m: usize) -> Result<f64> {
        if m == 0 || m > self.steps() {
            return Err(Error::param("m", format!("{m} outside 1..={}", self.steps())));
        }
        self.row(m).apply(values)
    }

    /// Dense `(M+1) x (M+1)` matrix with the identity row `F^0 = U^0` prepended.
    pub fn augmented_dense(&self) -> Vec<Vec<f64>> {
        let n = self.steps() + 1;
        let mut out = vec![vec![0.0; n]; n];
        out[0][0] = 1.0;
        for row in &self.rows {
            out[row.m][..=row.m].copy_from_slice(&row.coeffs);
        }
        out
    }

    /// CSV with columns `m,j,kappa`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,j,kappa\n");
        for row in &self.rows {
            for (j, k) in row.coeffs.iter().enumerate() {
                let _ = writeln!(out, "{},{},{}", row.m, j, k);
            }
        }
        out
    }
}

/// Scaled stencil quantities, indexed by `m` (entry 0 unused; `f[1]` undefined).
///
/// With `s_m = tilde tau_m^alpha Gamma(1-alpha) 2^alpha`:
/// `b = s_m kappa*_{m,m}`, `a = -s_m kappa*_{m,m-1}`,
/// `f = s_m (kappa*_{m,m-2} + kappa*_{m,m-1} + kappa*_{m,m})`, and `a_far` is the
/// part of `-a` coming from intervals before `t_{m-2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StencilDiagnostics {
    pub b: Vec<f64>,
    pub a: Vec<f64>,
    pub a_far: Vec<f64>,
    pub f: Vec<f64>,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = Neumaier::default();
    for (x, y) in a.iter().zip(b) {
        acc.add(x * y);
    }
    acc.sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    const INV_GAMMA_15: f64 = 1.128_379_167_095_512_6; // 1 / Gamma(1.5)

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn moments_on_unit_interval() {
        let [i0, i1, i2] = kernel_moments(0.0, 1.0, 1.0, 0.5).unwrap();
        assert!(rel(i0, 2.0) < 1e-15);
        assert!(rel(i1, 2.0 / 3.0) < 1e-15);
        assert!(rel(i2, 0.4) < 1e-15);
    }

    #[test]
    fn moments_positive_and_fallback_consistent() {
        for &(a, b, tm) in &[(0.0, 0.3, 1.0), (0.5, 0.5 + 1e-10, 1.0), (0.2, 0.9, 0.9)] {
            let m = kernel_moments(a, b, tm, 0.3).unwrap();
            assert!(m.iter().all(|&v| v > 0.0), "{m:?}");
        }
        // across the fallback threshold the two evaluations agree
        let tm = 1.0;
        let b = 0.5;
        let h = 0.9e-8 * (tm - b);
        let gauss = kernel_moments(b - h, b, tm, 0.7).unwrap();
        let h2 = 1.1e-8 * (tm - b);
        let exact = kernel_moments(b - h2, b, tm, 0.7).unwrap();
        for k in 0..3 {
            assert!(rel(gauss[k] / h, exact[k] / h2) < 1e-7);
        }
    }

    #[test]
    fn moments_reject_bad_intervals() {
        assert!(kernel_moments(0.5, 0.5, 1.0, 0.5).is_err());
        assert!(kernel_moments(0.0, 1.5, 1.0, 0.5).is_err());
        assert!(kernel_moments(0.0, 0.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn interval_weights_match_moments() {
        let mesh = TemporalMesh::uniform(1.0, 4).unwrap();
        let op = L2Operator::new(mesh, 0.4, Variant::Standard).unwrap();
        for &(a, b, tm) in &[(0.0, 0.1, 1.0), (0.6, 0.9, 1.0), (0.7, 1.0, 1.0), (0.0, 1e-6, 1.0)] {
            let (w0, wc) = op.interval_weights(a, b, tm);
            let [i0, i1, _] = kernel_moments(a, b, tm, 0.4).unwrap();
            let umid = tm - 0.5 * (a + b);
            assert!(rel(w0, i0) < 1e-14, "w0 {w0} vs {i0}");
            // wc = 2 (umid I0 - I1); only compare where that difference is benign
            if (b - a) / umid > 0.1 {
                assert!(rel(wc, 2.0 * (umid * i0 - i1)) < 1e-12);
            }
            assert!(wc > 0.0);
        }
    }

    #[test]
    fn first_row_uniform() {
        let mesh = TemporalMesh::uniform(4.0, 4).unwrap();
        let op = L2Operator::new(mesh, 0.5, Variant::Standard).unwrap();
        let row = op.row(1);
        assert!(rel(row.coeffs[1], INV_GAMMA_15) < 1e-14);
        assert!(rel(row.coeffs[0], -INV_GAMMA_15) < 1e-14);
        let u: Vec<f64> = op.mesh().nodes().to_vec();
        assert!(rel(op.apply_nodes(&u, 1).unwrap(), INV_GAMMA_15) < 1e-14);
    }

    #[test]
    fn quadratic_exactness_on_unit_steps() {
        let mesh = TemporalMesh::uniform(4.0, 4).unwrap();
        let op = L2Operator::new(mesh, 0.5, Variant::Standard).unwrap();
        let sq: Vec<f64> = op.mesh().nodes().iter().map(|t| t * t).collect();
        let g25 = gamma(2.5);
        let want2 = 2.0 * 2f64.powf(1.5) / g25;
        assert!(rel(op.row(2).apply(&sq).unwrap(), want2) < 1e-12);
        assert!((want2 - 4.25539).abs() < 1e-5);
        let want3 = 2.0 * 3f64.powf(1.5) / g25;
        assert!(rel(op.apply_nodes(&sq, 3).unwrap(), want3) < 1e-13);
        assert!((want3 - 7.817640).abs() < 1e-6);
    }

    #[test]
    fn rows_annihilate_constants_and_tail_matches() {
        let mesh = TemporalMesh::graded(1.0, 20, 3.0).unwrap();
        for variant in [Variant::Standard, Variant::L1Start { k: 5 }] {
            let op = L2Operator::new(mesh.clone(), 0.6, variant).unwrap();
            for m in 1..=20 {
                let row = op.row(m);
                let s: f64 = row.coeffs.iter().sum();
                assert!(s.abs() <= 1e-12 * row.diagonal(), "m={m} sum={s}");
                assert!(row.diagonal() > 0.0);
                let tail = op.row_tail(m);
                for (off, &v) in tail.iter().enumerate() {
                    if let Some(j) = (m + off).checked_sub(2) {
                        assert!((v - row.coeffs[j]).abs() <= 1e-13 * row.diagonal());
                    }
                }
            }
        }
    }

    #[test]
    fn l1_prefix_rows_are_piecewise_linear() {
        let mesh = TemporalMesh::graded(1.0, 12, 2.0).unwrap();
        let op = L2Operator::new(mesh.clone(), 0.5, Variant::L1Start { k: 4 }).unwrap();
        let g = gamma(0.5);
        for m in 1..=4 {
            let row = op.row(m);
            // classical L1 weights: w0_i / tau_i on each interval
            let mut want = vec![0.0; m + 1];
            for i in 1..=m {
                let [i0, _, _] = kernel_moments(mesh.t(i - 1), mesh.t(i), mesh.t(m), 0.5).unwrap();
                want[i] += i0 / mesh.tau(i) / g;
                want[i - 1] -= i0 / mesh.tau(i) / g;
            }
            for j in 0..=m {
                assert!((row.coeffs[j] - want[j]).abs() <= 1e-12 * want[m]);
            }
        }
        let std = L2Operator::new(mesh, 0.5, Variant::Standard).unwrap();
        assert_eq!(op.row(7), KernelRow { variant: op.variant(), ..std.row(7) });
    }

    #[test]
    fn apply_checks_length() {
        let mesh = TemporalMesh::uniform(1.0, 4).unwrap();
        let op = L2Operator::new(mesh, 0.5, Variant::Standard).unwrap();
        assert!(op.apply_nodes(&[0.0, 1.0], 3).is_err());
        let mat = op.matrix();
        assert!(matches!(mat.apply(&[0.0, 1.0], 3), Err(Error::LengthMismatch { .. })));
        assert!(mat.apply(&[1.0; 5], 4).unwrap().abs() < 1e-14);
    }

    #[test]
    fn uniform_diagnostics() {
        let alpha = 0.5;
        let mesh = TemporalMesh::uniform(1.0, 40).unwrap();
        let op = L2Operator::new(mesh, alpha, Variant::Standard).unwrap();
        let d = op.stencil_diagnostics();
        let b_const = (alpha + 2.0) / ((1.0 - alpha) * (2.0 - alpha));
        let a_prime = 4.0 * alpha / ((1.0 - alpha) * (2.0 - alpha));
        assert!(rel(d.b[1], d.a[1]) < 1e-14 && d.b[1] > 0.0);
        assert!(rel(b_const, 10.0 / 3.0) < 1e-15);
        assert_eq!(d.a_far[2], 0.0);
        assert!(d.f[2].abs() < 1e-13);
        for m in 2..=40 {
            assert!(rel(d.b[m], b_const) < 1e-12, "m={m}: {}", d.b[m]);
            assert!(rel(d.a[m] + d.a_far[m], a_prime) < 1e-12);
            assert!(d.a_far[m] >= 0.0 && d.a_far[m] <= alpha / 24.0);
            assert!(d.f[m] <= 1.0 + d.a_far[m] + 1e-12);
        }
    }

    #[test]
    fn csv_dump_lists_every_coefficient() {
        let mesh = TemporalMesh::uniform(1.0, 3).unwrap();
        let csv = L2Operator::new(mesh, 0.5, Variant::Standard).unwrap().matrix().to_csv();
        assert_eq!(csv.lines().count(), 1 + 2 + 3 + 4);
        assert!(csv.starts_with("m,j,kappa\n1,0,-"));
    }
}
