//! Inverse-monotonicity of the operator: the representation `U -> V -> F` with
//! `V^j = (U^j - beta_j U^{j-1}) / (1 - beta_j)` and M-matrix factors, the admissible
//! mesh-skew threshold `sigma_bar`, the prefix length `K`, and numerical certification.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_alpha, Error, Result};
use crate::mesh::TemporalMesh;
use crate::operator::{L2Operator, OperatorMatrix, Variant};

const SIGMA_STEP_TOL: f64 = 1e-13;
const SIGMA_RESIDUAL_TOL: f64 = 1e-12;
const SIGMA_MAX_ITER: usize = 200;
/// Relative slack for the sign conditions, which are tight on uniform meshes.
const CONDITION_SLACK: f64 = 1e-12;
/// Relative slack when comparing the grading ratio against `rho_bar`.
const K_SLACK: f64 = 1e-12;
/// Default size limit for the dense inverse check.
pub const INVERSE_CAP: usize = 512;

/// Default `theta` for certifying the operator alone.
pub const THETA_ODE: f64 = 1.0;
/// Default `theta` for parabolic runs, which need `theta < 1`.
pub const THETA_PARABOLIC: f64 = 0.5;

fn check_theta(theta: f64) -> Result<()> {
    if (0.5..=1.0).contains(&theta) {
        Ok(())
    } else {
        Err(Error::param("theta", format!("{theta} is not in [1/2, 1]")))
    }
}

/// Limits of the stencil quantities on a uniform mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniformConstants {
    pub alpha: f64,
    pub b: f64,
    pub a_prime: f64,
    pub nu: f64,
}

impl UniformConstants {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let d = (1.0 - alpha) * (2.0 - alpha);
        Ok(Self {
            alpha,
            b: (alpha + 2.0) / d,
            a_prime: 4.0 * alpha / d,
            nu: 1.0 - (1.0 - alpha) / 48.0,
        })
    }

    /// `(2B - 1) / A'`.
    pub fn c(&self) -> f64 {
        (2.0 * self.b - 1.0) / self.a_prime
    }

    fn eta(&self, sigma: f64) -> f64 {
        (1.0 - sigma * sigma) * (self.b / self.a_prime - sigma / (2.0 * (1.0 + sigma)))
    }
}

pub fn uniform_constants(alpha: f64) -> Result<UniformConstants> {
    UniformConstants::new(alpha)
}

/// `eta(sigma) = (1 - sigma^2) [B/A' - sigma / (2 (1 + sigma))]` for `sigma in [0, 1)`.
pub fn eta(sigma: f64, alpha: f64) -> Result<f64> {
    let k = UniformConstants::new(alpha)?;
    if !(0.0..1.0).contains(&sigma) {
        return Err(Error::param("sigma", format!("{sigma} is not in [0, 1)")));
    }
    Ok(k.eta(sigma))
}

/// `beta_0..=beta_M` (`beta_0 = 0`): `beta_j = (theta/2) nu / eta(sigma_j)` for `j > K`
/// and `beta_j = beta_{K+1}` for `1 <= j <= K`. `K = 1` is the standard `beta_1 = beta_2`.
pub fn beta_schedule(mesh: &TemporalMesh, alpha: f64, theta: f64, k: usize) -> Result<Vec<f64>> {
    let consts = UniformConstants::new(alpha)?;
    check_theta(theta)?;
    let steps = mesh.steps();
    let k = k.max(1);
    let mut betas = vec![0.0; steps + 1];
    for (j, b) in betas.iter_mut().enumerate().skip(2) {
        *b = 0.5 * theta * consts.nu / consts.eta(mesh.sigma(j));
    }
    // with fewer than K + 1 steps the schedule is anchored at the last available sigma
    let anchor = if k + 1 <= steps {
        betas[k + 1]
    } else if steps >= 2 {
        betas[steps]
    } else {
        0.5 * theta * consts.nu / consts.eta(0.0)
    };
    for b in betas.iter_mut().take(k.min(steps) + 1).skip(1) {
        *b = anchor;
    }
    Ok(betas)
}

/// Solution of `g_L(sigma) = g_R(sigma)` together with the fixed-point iterates.
#[derive(Debug, Clone, Serialize)]
pub struct SigmaBar {
    pub value: f64,
    pub iterates: Vec<f64>,
    pub residual: f64,
}

impl SigmaBar {
    pub fn rho_bar(&self) -> f64 {
        2.0 / (1.0 - self.value) - 1.0
    }
}

/// `g_L(s) = (1 - s)[c (1 + s) - s]`.
pub fn g_left(sigma: f64, alpha: f64) -> Result<f64> {
    let c = UniformConstants::new(alpha)?.c();
    Ok((1.0 - sigma) * (c * (1.0 + sigma) - sigma))
}

/// `g_R(s) = 1 + sqrt((1 + (1 - s^2)/A')^2 - b)` with `b = nu^2 theta (2 - theta)`.
pub fn g_right(sigma: f64, alpha: f64, theta: f64) -> Result<f64> {
    let k = UniformConstants::new(alpha)?;
    check_theta(theta)?;
    Ok(g_right_with(&k, sigma, theta))
}

fn g_right_with(k: &UniformConstants, sigma: f64, theta: f64) -> f64 {
    let b = k.nu * k.nu * theta * (2.0 - theta);
    let p = 1.0 + (1.0 - sigma * sigma) / k.a_prime;
    1.0 + (p * p - b).sqrt()
}

/// Fixed-point iteration `g_L(s_{q+1}) = g_R(s_q)` from `s_0 = 0`.
pub fn sigma_bar(alpha: f64, theta: f64) -> Result<SigmaBar> {
    let k = UniformConstants::new(alpha)?;
    check_theta(theta)?;
    let c = k.c();
    let g_l = |s: f64| c - s - (c - 1.0) * s * s;
    // root in [0, 1) of (c - 1) s^2 + s - (c - y) = 0
    let invert = |y: f64| {
        let d = c - y;
        2.0 * d / (1.0 + (1.0 + 4.0 * (c - 1.0) * d).sqrt())
    };
    let mut iterates = vec![0.0];
    let mut s = 0.0;
    for _ in 0..SIGMA_MAX_ITER {
        let next = invert(g_right_with(&k, s, theta));
        iterates.push(next);
        let step = (next - s).abs();
        s = next;
        let residual = (g_l(s) - g_right_with(&k, s, theta)).abs();
        if step <= SIGMA_STEP_TOL && residual <= SIGMA_RESIDUAL_TOL {
            return Ok(SigmaBar {
                value: s,
                iterates,
                residual,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "sigma_bar fixed-point iteration",
        iterations: SIGMA_MAX_ITER,
    })
}

/// `rho_{K+1} = ((1 + 1/K)^r - 1) / (1 - (1 - 1/K)^r)` on the graded mesh of grading `r`.
pub fn graded_step_ratio(r: f64, k: usize) -> f64 {
    let x = 1.0 / k as f64;
    let num = (r * x.ln_1p()).exp_m1();
    let den = -(r * (-x).ln_1p()).exp_m1();
    num / den
}

/// Smallest `K >= 1` with `rho_{K+1} <= 2/(1 - sigma_bar) - 1`.
pub fn compute_k(r: f64, sigma_bar: f64) -> Result<usize> {
    if !(r >= 1.0) || !r.is_finite() {
        return Err(Error::param("r", format!("grading {r} must be >= 1")));
    }
    if !(sigma_bar > 0.0 && sigma_bar < 1.0) {
        return Err(Error::param("sigma_bar", format!("{sigma_bar} is not in (0, 1)")));
    }
    let rho_bar = 2.0 / (1.0 - sigma_bar) - 1.0;
    let limit = rho_bar * (1.0 + K_SLACK);
    if r == 1.0 {
        return Ok(1);
    }
    // ratio ~ 1 + (r - 1)/K, so this bound is never reached in practice
    let cap = ((r - 1.0) / (rho_bar - 1.0) * 4.0 + 16.0).min(1e9) as usize;
    (1..=cap)
        .find(|&k| graded_step_ratio(r, k) <= limit)
        .ok_or(Error::NonConvergence {
            what: "K search",
            iterations: cap,
        })
}

/// `min(sigma_bar, 1 - 2/(1 + rho*))`, `rho* = ((2 - theta)/theta)^(2/alpha)`, for the
/// parabolic stability bound; requires `theta in [1/2, 1)`.
pub fn sigma_star(alpha: f64, theta: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_theta(theta)?;
    if theta >= 1.0 {
        return Err(Error::param(
            "theta",
            "the parabolic threshold needs theta < 1 (theta = 1 gives rho* = 1)",
        ));
    }
    let sb = sigma_bar(alpha, theta)?.value;
    Ok(sb.min(1.0 - 2.0 / (1.0 + rho_star(alpha, theta))))
}

/// `((2 - theta)/theta)^(2/alpha)`.
pub fn rho_star(alpha: f64, theta: f64) -> f64 {
    ((2.0 - theta) / theta).powf(2.0 / alpha)
}

/// Per-step outcome of the sufficient conditions.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionRecord {
    pub m: usize,
    pub sigma: f64,
    pub beta: f64,
    pub b: f64,
    pub a: f64,
    pub f: f64,
    /// `A_m - beta_m B_m`, must be positive.
    pub key1: f64,
    pub key1_ok: bool,
    /// `(A_m - B_m + F_m) - beta_{m-1} (A_m - beta_m B_m)`, must be non-positive (`m >= 2`).
    pub key2: Option<f64>,
    pub key2_ok: bool,
    /// `beta_m B_m / (A_m - beta_m B_m)` (`m >= 3`).
    pub ratio: Option<f64>,
    pub ratio_ok: bool,
    /// `sigma_m <= sigma_bar` where required.
    pub sigma_ok: bool,
}

impl ConditionRecord {
    pub fn passed(&self) -> bool {
        self.key1_ok && self.key2_ok && self.ratio_ok && self.sigma_ok
    }

    fn first_failure(&self) -> Option<&'static str> {
        if !self.key1_ok {
            Some("key1: A_m - beta_m B_m > 0")
        } else if !self.key2_ok {
            Some("key2: (A_m - B_m + F_m) - beta_(m-1) (A_m - beta_m B_m) <= 0")
        } else if !self.ratio_ok {
            Some("ratio: beta_m B_m / (A_m - beta_m B_m) <= theta / (2 - theta)")
        } else if !self.sigma_ok {
            Some("sigma_m <= sigma_bar")
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BetaSummary {
    pub min: f64,
    pub max: f64,
    pub first: f64,
    pub last: f64,
    pub non_increasing: bool,
    pub all_in_unit_interval: bool,
}

impl BetaSummary {
    fn new(betas: &[f64]) -> Self {
        let b = &betas[1..];
        Self {
            min: b.iter().copied().fold(f64::INFINITY, f64::min),
            max: b.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            first: b[0],
            last: *b.last().unwrap(),
            non_increasing: b.windows(2).all(|w| w[1] <= w[0] * (1.0 + CONDITION_SLACK)),
            all_in_unit_interval: b.iter().all(|&x| x > 0.0 && x < 1.0),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub m: usize,
    pub condition: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotoneCertificate {
    pub alpha: f64,
    pub theta: f64,
    pub variant: Variant,
    pub steps: usize,
    pub sigma_bar: f64,
    pub rho_bar: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub betas_summary: BetaSummary,
    pub betas: Vec<f64>,
    /// `sigma_j` non-increasing and non-negative from `j = 2`.
    pub sigma_monotone: bool,
    pub conditions: Vec<ConditionRecord>,
    pub first_failure: Option<Failure>,
    pub passed: bool,
    pub inverse_min_entry: Option<f64>,
    pub verified_inverse_nonneg: Option<bool>,
}

impl MonotoneCertificate {
    /// Runs the dense inverse check and folds it into `passed`.
    pub fn verify_inverse(&mut self, op: &L2Operator, cap: usize, tol: f64) -> Result<bool> {
        let check = verify_inverse_nonneg(&op.matrix(), cap, tol)?;
        self.inverse_min_entry = Some(check.min_entry);
        self.verified_inverse_nonneg = Some(check.nonneg);
        if !check.nonneg {
            self.passed = false;
            if self.first_failure.is_none() {
                self.first_failure = Some(Failure {
                    m: check.min_row,
                    condition: format!("inverse entry {:e} < -{tol:e}", check.min_entry),
                });
            }
        }
        Ok(check.nonneg)
    }
}

/// Evaluates the sufficient inverse-monotonicity conditions on every step.
///
/// Failures are recorded, not returned as errors. The prefix length `K` is taken from the
/// variant (1 for the standard operator), and `sigma_m <= sigma_bar` is required for
/// `m >= max(2, K + 1)`.
pub fn certify(
    mesh: &TemporalMesh,
    alpha: f64,
    theta: f64,
    variant: Variant,
) -> Result<MonotoneCertificate> {
    check_theta(theta)?;
    let op = L2Operator::new(mesh.clone(), alpha, variant)?;
    let sb = sigma_bar(alpha, theta)?;
    let k = variant.prefix();
    let betas = beta_schedule(mesh, alpha, theta, k)?;
    let diag = op.stencil_diagnostics();
    let steps = mesh.steps();
    let ratio_bound = theta / (2.0 - theta);
    let conditions: Vec<ConditionRecord> = (1..=steps)
        .into_par_iter()
        .map(|m| {
            let (b, a, f) = (diag.b[m], diag.a[m], diag.f[m]);
            let beta = betas[m];
            let scale = a.abs().max(b.abs()).max(1.0);
            let key1 = a - beta * b;
            let key2 = (m >= 2).then(|| (a - b + f) - betas[m - 1] * key1);
            let ratio = (m >= 3).then(|| beta * b / key1);
            let sigma = if m >= 2 { mesh.sigma(m) } else { 0.0 };
            ConditionRecord {
                m,
                sigma,
                beta,
                b,
                a,
                f,
                key1,
                key1_ok: key1 > 0.0,
                key2,
                key2_ok: key2.map_or(true, |v| v <= CONDITION_SLACK * scale),
                ratio,
                ratio_ok: m < k + 2 || ratio.map_or(true, |r| r <= ratio_bound + CONDITION_SLACK),
                sigma_ok: m < (k + 1).max(2) || sigma <= sb.value,
            }
        })
        .collect();
    let sigma_monotone = (2..=steps).all(|j| {
        let s = mesh.sigma(j);
        s >= -crate::mesh::SKEW_TOLERANCE
            && (j == steps || mesh.sigma(j + 1) <= s + crate::mesh::SKEW_TOLERANCE)
    });
    let mut first_failure = conditions.iter().find_map(|c| {
        c.first_failure().map(|what| Failure {
            m: c.m,
            condition: what.to_string(),
        })
    });
    let betas_summary = BetaSummary::new(&betas);
    if first_failure.is_none() && !betas_summary.all_in_unit_interval {
        let m = (1..=steps).find(|&j| !(betas[j] > 0.0 && betas[j] < 1.0)).unwrap();
        first_failure = Some(Failure {
            m,
            condition: "beta_m in (0, 1)".into(),
        });
    }
    let passed = first_failure.is_none();
    Ok(MonotoneCertificate {
        alpha,
        theta,
        variant,
        steps,
        sigma_bar: sb.value,
        rho_bar: sb.rho_bar(),
        k,
        betas_summary,
        betas,
        sigma_monotone,
        conditions,
        first_failure,
        passed,
        inverse_min_entry: None,
        verified_inverse_nonneg: None,
    })
}

/// `A1` (rows `kappa_{m, 0..=m}`) and `A2` (bidiagonal map `U -> V`), both with an
/// identity row 0, such that `A1 A2` is the operator matrix augmented with `F^0 = U^0`.
#[derive(Debug, Clone, Serialize)]
pub struct FactorPair {
    pub betas: Vec<f64>,
    /// `a1[m][j] = kappa_{m,j}`; `a1[0] = [1]`.
    pub a1: Vec<Vec<f64>>,
    /// Diagonal of `A2`: `1/(1 - beta_j)` (1 at `j = 0`).
    pub a2_diag: Vec<f64>,
    /// Sub-diagonal of `A2`: `a2_sub[j] = -beta_j/(1 - beta_j)` at `(j, j-1)` (`a2_sub[0]` unused).
    pub a2_sub: Vec<f64>,
}

/// Sign-pattern audit of the factors.
#[derive(Debug, Clone, Serialize)]
pub struct SignReport {
    pub ok: bool,
    pub min_diagonal: f64,
    pub max_off_diagonal: f64,
    /// `max_m |sum_j kappa_{m,j}| / kappa_{m,m}`.
    pub max_row_sum: f64,
}

pub fn factorize(matrix: &OperatorMatrix, betas: &[f64]) -> Result<FactorPair> {
    let steps = matrix.steps();
    if betas.len() != steps + 1 {
        return Err(Error::LengthMismatch {
            expected: steps + 1,
            got: betas.len(),
        });
    }
    if let Some(j) = (1..=steps).find(|&j| !(betas[j] >= 0.0 && betas[j] < 1.0)) {
        return Err(Error::param("beta", format!("beta_{j} = {} is not in [0, 1)", betas[j])));
    }
    let mut betas = betas.to_vec();
    betas[0] = 0.0;
    let mut a1 = Vec::with_capacity(steps + 1);
    a1.push(vec![1.0]);
    let rows: Vec<Vec<f64>> = (1..=steps)
        .into_par_iter()
        .map(|m| {
            let star = &matrix.row(m).coeffs;
            let mut s = vec![0.0; m + 1];
            s[m] = star[m];
            for j in (0..m).rev() {
                s[j] = star[j] + betas[j + 1] * s[j + 1];
            }
            s.iter().zip(&betas).map(|(v, b)| (1.0 - b) * v).collect()
        })
        .collect();
    a1.extend(rows);
    let a2_diag = betas.iter().map(|b| 1.0 / (1.0 - b)).collect();
    let a2_sub = betas.iter().map(|b| -b / (1.0 - b)).collect();
    Ok(FactorPair {
        betas,
        a1,
        a2_diag,
        a2_sub,
    })
}

impl FactorPair {
    pub fn steps(&self) -> usize {
        self.a1.len() - 1
    }

    /// Entry `(m, k)` of `A1 A2`.
    pub fn product_entry(&self, m: usize, k: usize) -> f64 {
        let row = &self.a1[m];
        if k > m {
            return 0.0;
        }
        let mut v = row[k] * self.a2_diag[k];
        if k < m {
            v += row[k + 1] * self.a2_sub[k + 1];
        }
        v
    }

    /// `||A1 A2 - A||_inf / ||A||_inf` against the augmented operator matrix.
    pub fn product_error(&self, matrix: &OperatorMatrix) -> f64 {
        let dense = matrix.augmented_dense();
        let mut norm = 0.0f64;
        let mut err = 0.0f64;
        for (m, row) in dense.iter().enumerate() {
            norm = norm.max(row.iter().map(|v| v.abs()).sum());
            let e: f64 = (0..=m).map(|k| (self.product_entry(m, k) - row[k]).abs()).sum();
            err = err.max(e);
        }
        err / norm
    }

    /// Positive diagonals, non-positive off-diagonals (up to `tol` times the row
    /// diagonal) in both factors, and zero row sums of `A1`.
    pub fn sign_pattern(&self, tol: f64) -> SignReport {
        let mut ok = true;
        let mut min_diag = f64::INFINITY;
        let mut max_off = f64::NEG_INFINITY;
        let mut max_sum = 0.0f64;
        for (m, row) in self.a1.iter().enumerate().skip(1) {
            let d = row[m];
            min_diag = min_diag.min(d);
            ok &= d > 0.0;
            for &v in &row[..m] {
                max_off = max_off.max(v / d);
                ok &= v <= tol * d;
            }
            let s: f64 = row.iter().sum();
            max_sum = max_sum.max(s.abs() / d);
        }
        for j in 1..self.a2_diag.len() {
            ok &= self.a2_diag[j] > 0.0 && self.a2_sub[j] <= 0.0;
        }
        SignReport {
            ok,
            min_diagonal: min_diag,
            max_off_diagonal: max_off,
            max_row_sum: max_sum,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InverseCheck {
    pub nonneg: bool,
    pub min_entry: f64,
    pub min_row: usize,
    pub min_col: usize,
}

/// Minimum entry of the inverse of a lower-triangular matrix, by forward substitution
/// against every unit vector.
pub fn lower_triangular_inverse_min(rows: &[Vec<f64>]) -> Result<InverseCheck> {
    let n = rows.len();
    if let Some(r) = (0..n).find(|&i| rows[i][i] == 0.0 || !rows[i][i].is_finite()) {
        return Err(Error::SingularDiagonal { row: r });
    }
    let (min_entry, min_row, min_col) = (0..n)
        .into_par_iter()
        .map(|col| {
            let mut x = vec![0.0; n];
            x[col] = 1.0 / rows[col][col];
            let mut best = (x[col], col, col);
            for i in col + 1..n {
                let row = &rows[i];
                let s: f64 = row[col..i].iter().zip(&x[col..i]).map(|(a, b)| a * b).sum();
                x[i] = -s / row[i];
                if x[i] < best.0 {
                    best = (x[i], i, col);
                }
            }
            best
        })
        .reduce(
            || (f64::INFINITY, 0, 0),
            |a, b| if b.0 < a.0 { b } else { a },
        );
    Ok(InverseCheck {
        nonneg: true,
        min_entry,
        min_row,
        min_col,
    })
}

/// Brute-force check that the augmented operator matrix has a non-negative inverse.
pub fn verify_inverse_nonneg(matrix: &OperatorMatrix, cap: usize, tol: f64) -> Result<InverseCheck> {
    let steps = matrix.steps();
    if steps > cap {
        return Err(Error::param(
            "M",
            format!("dense inverse check limited to M <= {cap}, got {steps}"),
        ));
    }
    let mut check = lower_triangular_inverse_min(&matrix.augmented_dense())?;
    check.nonneg = check.min_entry >= -tol;
    Ok(check)
}

/// Outcome of the parabolic energy condition at one step.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyRecord {
    pub m: usize,
    /// `(|kappa_{m,m-1}|^{-1} beta_m/(1-beta_m))^2`.
    pub lhs: f64,
    /// `(kappa_{m,m}^{-1}/(1-beta_m)) (kappa_{m-1,m-1}^{-1}/(1-beta_{m-1}))`.
    pub rhs: f64,
    pub exact_ok: bool,
    /// `tilde tau_{m-1} / tilde tau_m`.
    pub step_ratio: f64,
    pub sufficient_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    pub theta: f64,
    /// `(theta/(2-theta))^(2/alpha)`.
    pub threshold: f64,
    pub records: Vec<EnergyRecord>,
    pub exact_ok: bool,
    pub sufficient_ok: bool,
}

/// The energy-stability condition for the parabolic case at every `m >= K + 2`, both
/// in exact form (from `kappa`) and in the sufficient step-ratio form.
pub fn check_energy_condition(
    mesh: &TemporalMesh,
    alpha: f64,
    theta: f64,
    variant: Variant,
    betas: &[f64],
) -> Result<EnergyReport> {
    check_theta(theta)?;
    let op = L2Operator::new(mesh.clone(), alpha, variant)?;
    let steps = mesh.steps();
    if betas.len() != steps + 1 {
        return Err(Error::LengthMismatch {
            expected: steps + 1,
            got: betas.len(),
        });
    }
    let k = variant.prefix();
    let threshold = (theta / (2.0 - theta)).powf(2.0 / alpha);
    let kappa_diag = |m: usize| (1.0 - betas[m]) * op.row_tail(m)[2];
    let records: Vec<EnergyRecord> = (k + 2..=steps)
        .into_par_iter()
        .map(|m| {
            let [_, s1, s0] = op.row_tail(m);
            let k_mm = (1.0 - betas[m]) * s0;
            let k_mm1 = (1.0 - betas[m - 1]) * (s1 + betas[m] * s0);
            let k_prev = kappa_diag(m - 1);
            let lhs = (betas[m] / (1.0 - betas[m]) / k_mm1.abs()).powi(2);
            let rhs = 1.0 / (k_mm * (1.0 - betas[m])) / (k_prev * (1.0 - betas[m - 1]));
            let step_ratio = mesh.tau_avg(m - 1) / mesh.tau_avg(m);
            EnergyRecord {
                m,
                lhs,
                rhs,
                exact_ok: lhs <= rhs * (1.0 + CONDITION_SLACK),
                step_ratio,
                sufficient_ok: threshold <= step_ratio * (1.0 + CONDITION_SLACK),
            }
        })
        .collect();
    Ok(EnergyReport {
        theta,
        threshold,
        exact_ok: records.iter().all(|r| r.exact_ok),
        sufficient_ok: records.iter().all(|r| r.sufficient_ok),
        records,
    })
}
