//! Truncation errors, theoretical envelopes, observed rates and convergence tables.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{check_alpha, Error, Result};
use crate::mesh::TemporalMesh;
use crate::operator::{L2Operator, Variant};
use crate::solver::{solve_parabolic_1d, solve_scalar, Parabolic1DProblem, ScalarProblem};

/// Samples per interval when estimating suprema of derivatives.
const SUP_SAMPLES: usize = 32;
/// Refinement of `[0, t_2]` for the oscillation and derivative terms of `psi^1`.
const PSI1_SAMPLES: usize = 1024;
/// `|r - (3 - alpha)|` below this selects the logarithmic envelope.
const LOG_CASE_TOL: f64 = 1e-12;

/// A function with closed-form Caputo derivative and classical derivatives.
pub trait ExactSolution: Sync {
    fn value(&self, t: f64) -> f64;
    fn derivative(&self, t: f64) -> f64;
    fn third_derivative(&self, t: f64) -> f64;
    /// `D_t^alpha u(t)`.
    fn caputo(&self, t: f64, alpha: f64) -> f64;
}

/// `u(t) = sum_k c_k t^{p_k}` with `p_k = 0` or `p_k > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSum {
    pub terms: Vec<(f64, f64)>,
}

impl PowerSum {
    pub fn power(p: f64) -> Self {
        Self { terms: vec![(1.0, p)] }
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: vec![(c, 0.0)] }
    }

    fn deriv(c: f64, p: f64, t: f64, order: i32) -> f64 {
        let mut f = c;
        for k in 0..order {
            f *= p - k as f64;
        }
        if f == 0.0 {
            0.0
        } else {
            f * t.powf(p - order as f64)
        }
    }
}

impl ExactSolution for PowerSum {
    fn value(&self, t: f64) -> f64 {
        self.terms.iter().map(|&(c, p)| if p == 0.0 { c } else { c * t.powf(p) }).sum()
    }

    fn derivative(&self, t: f64) -> f64 {
        self.terms.iter().map(|&(c, p)| Self::deriv(c, p, t, 1)).sum()
    }

    fn third_derivative(&self, t: f64) -> f64 {
        self.terms.iter().map(|&(c, p)| Self::deriv(c, p, t, 3)).sum()
    }

    fn caputo(&self, t: f64, alpha: f64) -> f64 {
        self.terms
            .iter()
            .filter(|&&(_, p)| p != 0.0)
            .map(|&(c, p)| c * gamma(p + 1.0) / gamma(p + 1.0 - alpha) * t.powf(p - alpha))
            .sum()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncationProfile {
    pub alpha: f64,
    /// `r^m = delta u(t_m) - D^alpha u(t_m)`, index 0 unused.
    pub residuals: Vec<f64>,
    /// `psi^j` for `j = 1..=M-1` (index 0 unused).
    pub psi: Vec<f64>,
}

impl TruncationProfile {
    /// `sup_m |r^m| (t_m / tau_1)^{min(alpha + 1, (3 - alpha)/r)}`.
    pub fn scaled_sup(&self, mesh: &TemporalMesh, grading: f64) -> f64 {
        let q = (self.alpha + 1.0).min((3.0 - self.alpha) / grading);
        let tau1 = mesh.tau(1);
        (1..self.residuals.len())
            .map(|m| self.residuals[m].abs() * (mesh.t(m) / tau1).powf(q))
            .fold(0.0, f64::max)
    }
}

fn sampled_sup(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    (0..=n)
        .map(|k| f(a + (b - a) * k as f64 / n as f64))
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max)
}

pub fn truncation_error(
    u: &dyn ExactSolution,
    mesh: &TemporalMesh,
    alpha: f64,
    variant: Variant,
) -> Result<TruncationProfile> {
    let op = L2Operator::new(mesh.clone(), alpha, variant)?;
    let steps = mesh.steps();
    let t = mesh.nodes();
    let nodal: Vec<f64> = t.iter().map(|&s| u.value(s)).collect();
    let mut residuals: Vec<f64> = (0..=steps)
        .into_par_iter()
        .map(|m| {
            if m == 0 {
                0.0
            } else {
                op.apply_nodes(&nodal, m).expect("nodal vector has M + 1 entries")
                    - u.caputo(t[m], alpha)
            }
        })
        .collect();
    residuals[0] = f64::NAN;
    let mut psi = vec![f64::NAN; steps.max(1)];
    if steps >= 2 {
        let t2 = t[2];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut dsup = 0.0f64;
        for k in 0..=PSI1_SAMPLES {
            let s = t2 * k as f64 / PSI1_SAMPLES as f64;
            let v = u.value(s);
            lo = lo.min(v);
            hi = hi.max(v);
            if k > 0 {
                let d = s.powf(1.0 - alpha) * u.derivative(s).abs();
                if d.is_finite() {
                    dsup = dsup.max(d);
                }
            }
        }
        psi[1] = dsup + t2.powf(-alpha) * (hi - lo);
        for j in 2..steps {
            let sup = sampled_sup(t[j - 1], t[j + 1], SUP_SAMPLES, |s| u.third_derivative(s).abs());
            psi[j] = t[j].powf(3.0 - alpha) * sup;
        }
    }
    Ok(TruncationProfile {
        alpha,
        residuals,
        psi,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityEnvelope {
    pub gamma: f64,
    pub tau1: f64,
    /// Index 0 unused.
    pub values: Vec<f64>,
}

/// `tau_1 t_j^{alpha-1} x {1, 1 + ln(t_j/tau_1), (tau_1/t_j)^gamma}` for `gamma > 0, = 0, < 0`.
pub fn envelope_u(mesh: &TemporalMesh, alpha: f64, gamma: f64) -> Result<StabilityEnvelope> {
    check_alpha(alpha)?;
    let tau1 = mesh.tau(1);
    let mut values = vec![f64::NAN; mesh.steps() + 1];
    for (j, v) in values.iter_mut().enumerate().skip(1) {
        let t = mesh.t(j);
        let base = tau1 * t.powf(alpha - 1.0);
        *v = base
            * if gamma > 0.0 {
                1.0
            } else if gamma == 0.0 {
                1.0 + (t / tau1).ln()
            } else {
                (tau1 / t).powf(gamma)
            };
    }
    Ok(StabilityEnvelope { gamma, tau1, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeCase {
    Mild,
    Logarithmic,
    Optimal,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorEnvelope {
    pub alpha: f64,
    pub grading: f64,
    pub steps: usize,
    pub case: EnvelopeCase,
    /// Index 0 unused.
    pub values: Vec<f64>,
}

/// The three-case nodal error bound `E^m` for grading `r` and `M` steps.
pub fn envelope_e(mesh: &TemporalMesh, alpha: f64, grading: f64) -> Result<ErrorEnvelope> {
    check_alpha(alpha)?;
    if !(grading >= 1.0) {
        return Err(Error::param("r", format!("grading {grading} must be >= 1")));
    }
    let steps = mesh.steps();
    let mf = steps as f64;
    let opt = 3.0 - alpha;
    let case = if (grading - opt).abs() <= LOG_CASE_TOL {
        EnvelopeCase::Logarithmic
    } else if grading < opt {
        EnvelopeCase::Mild
    } else {
        EnvelopeCase::Optimal
    };
    let t1 = mesh.t(1);
    let mut values = vec![f64::NAN; steps + 1];
    for (m, v) in values.iter_mut().enumerate().skip(1) {
        let t = mesh.t(m);
        *v = match case {
            EnvelopeCase::Mild => mf.powf(-grading) * t.powf(alpha - 1.0),
            EnvelopeCase::Logarithmic => {
                mf.powf(alpha - 3.0) * t.powf(alpha - 1.0) * (1.0 + (t / t1).ln())
            }
            EnvelopeCase::Optimal => mf.powf(alpha - 3.0) * t.powf(alpha - opt / grading),
        };
    }
    Ok(ErrorEnvelope {
        alpha,
        grading,
        steps,
        case,
        values,
    })
}

/// `log(e_i / e_{i+1}) / log(M_{i+1} / M_i)`.
pub fn observed_rates(errors: &[f64], steps: &[usize]) -> Result<Vec<f64>> {
    if errors.len() != steps.len() {
        return Err(Error::LengthMismatch {
            expected: steps.len(),
            got: errors.len(),
        });
    }
    if let Some(e) = errors.iter().find(|&&e| !(e > 0.0)) {
        return Err(Error::param("errors", format!("rates need positive errors, got {e}")));
    }
    Ok(errors
        .windows(2)
        .zip(steps.windows(2))
        .map(|(e, m)| (e[0] / e[1]).ln() / (m[1] as f64 / m[0] as f64).ln())
        .collect())
}

/// `(t_m, |e^m|, E^m, |e^m| / E^m)` for `m = 1..=M`.
#[derive(Debug, Clone, Serialize)]
pub struct PointwisePoint {
    pub m: usize,
    pub t: f64,
    pub error: f64,
    pub envelope: f64,
    pub ratio: f64,
}

pub fn pointwise_comparison(errors: &[f64], envelope: &ErrorEnvelope, mesh: &TemporalMesh) -> Result<Vec<PointwisePoint>> {
    if errors.len() != envelope.values.len() {
        return Err(Error::LengthMismatch {
            expected: envelope.values.len(),
            got: errors.len(),
        });
    }
    Ok((1..errors.len())
        .map(|m| {
            let e = errors[m].abs();
            let env = envelope.values[m];
            PointwisePoint {
                m,
                t: mesh.t(m),
                error: e,
                envelope: env,
                ratio: e / env,
            }
        })
        .collect())
}

pub fn pointwise_csv(points: &[PointwisePoint]) -> String {
    let mut out = String::from("m,t_m,abs_error,envelope,ratio\n");
    for p in points {
        let _ = writeln!(out, "{},{},{},{},{}", p.m, p.t, p.error, p.envelope, p.ratio);
    }
    out
}

/// Grading exponent, possibly depending on `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradingRule {
    Fixed(f64),
    ThreeMinusAlpha,
    ThreeMinusAlphaOver(f64),
    ThreeMinusAlphaOverAlpha,
}

impl GradingRule {
    pub fn value(&self, alpha: f64) -> f64 {
        match *self {
            GradingRule::Fixed(r) => r,
            GradingRule::ThreeMinusAlpha => 3.0 - alpha,
            GradingRule::ThreeMinusAlphaOver(d) => (3.0 - alpha) / d,
            GradingRule::ThreeMinusAlphaOverAlpha => (3.0 - alpha) / alpha,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            GradingRule::Fixed(r) => format!("{r}"),
            GradingRule::ThreeMinusAlpha => "3-a".into(),
            GradingRule::ThreeMinusAlphaOver(d) => format!("(3-a)/{d}"),
            GradingRule::ThreeMinusAlphaOverAlpha => "(3-a)/a".into(),
        }
    }

    /// Parses `1`, `3-a`, `(3-a)/0.95`, `(3-a)/a`.
    pub fn parse(s: &str) -> Result<Self> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let s = s.replace("alpha", "a");
        match s.as_str() {
            "3-a" => return Ok(GradingRule::ThreeMinusAlpha),
            "(3-a)/a" => return Ok(GradingRule::ThreeMinusAlphaOverAlpha),
            _ => {}
        }
        if let Some(d) = s.strip_prefix("(3-a)/") {
            return d
                .parse()
                .map(GradingRule::ThreeMinusAlphaOver)
                .map_err(|_| Error::Parse(format!("bad grading divisor in `{s}`")));
        }
        s.parse()
            .map(GradingRule::Fixed)
            .map_err(|_| Error::Parse(format!("unrecognised grading `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// `|u(T) - U^M|` (scalar) or the discrete L2 error at `T` (parabolic).
    AtFinal,
    /// `max_m |u(t_m) - U^m|` (scalar) or `max_m` of the L2 error (parabolic).
    MaxNodal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CampaignProblem {
    /// `u = t^alpha` with `f = Gamma(1 + alpha)`.
    TAlpha,
    /// `u = t^alpha sin(pi x)`; `grid_exact` uses the discrete-operator source.
    ParabolicSin { interior_nodes: usize, grid_exact: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub problem: CampaignProblem,
    pub alphas: Vec<f64>,
    pub gradings: Vec<GradingRule>,
    pub steps: Vec<usize>,
    pub metric: Metric,
    pub final_time: f64,
    pub variant: Variant,
}

impl Campaign {
    pub fn scalar(alphas: Vec<f64>, gradings: Vec<GradingRule>, steps: Vec<usize>, metric: Metric) -> Self {
        Self {
            problem: CampaignProblem::TAlpha,
            alphas,
            gradings,
            steps,
            metric,
            final_time: 1.0,
            variant: Variant::Standard,
        }
    }

    /// `M = 2^5, 2^7, ..., 2^15`.
    pub fn paper_steps() -> Vec<usize> {
        (5..=15).step_by(2).map(|k| 1usize << k).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Cell {
    pub steps: usize,
    pub final_error: Option<f64>,
    pub max_error: Option<f64>,
    pub status: String,
}

impl Cell {
    pub fn error(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::AtFinal => self.final_error,
            Metric::MaxNodal => self.max_error,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    pub alpha: f64,
    pub grading: GradingRule,
    pub r: f64,
    pub cells: Vec<Cell>,
    /// Rates between consecutive columns; `None` if either neighbour failed.
    pub rates: Vec<Option<f64>>,
}

impl TableRow {
    pub fn errors(&self, metric: Metric) -> Vec<Option<f64>> {
        self.cells.iter().map(|c| c.error(metric)).collect()
    }

    fn recompute_rates(&mut self, metric: Metric) {
        self.rates = self
            .cells
            .windows(2)
            .map(|w| match (w[0].error(metric), w[1].error(metric)) {
                (Some(a), Some(b)) if a > 0.0 && b > 0.0 => {
                    observed_rates(&[a, b], &[w[0].steps, w[1].steps]).ok().map(|r| r[0])
                }
                _ => None,
            })
            .collect();
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub campaign: Campaign,
    pub rows: Vec<TableRow>,
}

fn run_cell(c: &Campaign, alpha: f64, r: f64, steps: usize) -> Result<(f64, f64)> {
    let mesh = TemporalMesh::graded(c.final_time, steps, r)?;
    match c.problem {
        CampaignProblem::TAlpha => {
            let sol = solve_scalar(&ScalarProblem::t_alpha(alpha, c.final_time), &mesh, c.variant)?;
            Ok((sol.final_error().unwrap(), sol.max_nodal_error().unwrap()))
        }
        CampaignProblem::ParabolicSin {
            interior_nodes,
            grid_exact,
        } => {
            let p = if grid_exact {
                Parabolic1DProblem::sin_grid_exact(alpha, c.final_time, interior_nodes)
            } else {
                Parabolic1DProblem::sin_manufactured(alpha, c.final_time, interior_nodes)
            };
            let sol = solve_parabolic_1d(&p, &mesh, c.variant)?;
            Ok((sol.final_l2_error().unwrap(), sol.max_l2_error().unwrap()))
        }
    }
}

/// Runs every `(grading, alpha, M)` cell in parallel; failures are recorded per cell.
pub fn build_table(campaign: &Campaign) -> ConvergenceTable {
    let mut jobs = Vec::new();
    for (gi, g) in campaign.gradings.iter().enumerate() {
        for (ai, &alpha) in campaign.alphas.iter().enumerate() {
            for (mi, &m) in campaign.steps.iter().enumerate() {
                jobs.push((gi, ai, mi, g.value(alpha), alpha, m));
            }
        }
    }
    // largest cells first so the tail of the sweep is short
    jobs.sort_by(|a, b| b.5.cmp(&a.5));
    let mut results: Vec<((usize, usize, usize), Cell)> = jobs
        .par_iter()
        .map(|&(gi, ai, mi, r, alpha, m)| {
            let cell = match run_cell(campaign, alpha, r, m) {
                Ok((fe, me)) => Cell {
                    steps: m,
                    final_error: Some(fe),
                    max_error: Some(me),
                    status: "ok".into(),
                },
                Err(e) => Cell {
                    steps: m,
                    final_error: None,
                    max_error: None,
                    status: e.to_string(),
                },
            };
            ((gi, ai, mi), cell)
        })
        .collect();
    results.sort_by_key(|(k, _)| *k);
    let mut cells = results.into_iter().map(|(_, c)| c);
    let mut rows = Vec::new();
    for g in &campaign.gradings {
        for &alpha in &campaign.alphas {
            let mut row = TableRow {
                alpha,
                grading: *g,
                r: g.value(alpha),
                cells: cells.by_ref().take(campaign.steps.len()).collect(),
                rates: Vec::new(),
            };
            row.recompute_rates(campaign.metric);
            rows.push(row);
        }
    }
    ConvergenceTable {
        campaign: campaign.clone(),
        rows,
    }
}

pub const TABLE_FORMAT_VERSION: u32 = 1;

impl ConvergenceTable {
    /// One line per cell: `r_rule,r,alpha,M,error,rate_from_previous,status`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# l2frac-table v{TABLE_FORMAT_VERSION} metric={}\n", self.metric_name());
        out.push_str("grading,r,alpha,M,error,rate,status\n");
        for row in &self.rows {
            for (i, cell) in row.cells.iter().enumerate() {
                let err = cell.error(self.campaign.metric).map_or(String::new(), |e| e.to_string());
                let rate = if i == 0 {
                    String::new()
                } else {
                    row.rates[i - 1].map_or(String::new(), |r| r.to_string())
                };
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    row.grading.label(),
                    row.r,
                    row.alpha,
                    cell.steps,
                    err,
                    rate,
                    cell.status.replace(',', ";")
                );
            }
        }
        out
    }

    fn metric_name(&self) -> &'static str {
        match self.campaign.metric {
            Metric::AtFinal => "at-final",
            Metric::MaxNodal => "max-nodal",
        }
    }

    /// Error row followed by a rate row for every `(r, alpha)`.
    pub fn to_text(&self) -> String {
        let w = 11;
        let mut out = String::new();
        let _ = write!(out, "{:<12}{:<8}", "r", "alpha");
        for m in &self.campaign.steps {
            let _ = write!(out, "{:>w$}", format!("M={m}"));
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:<12}{:<8}", row.grading.label(), row.alpha);
            for cell in &row.cells {
                match cell.error(self.campaign.metric) {
                    Some(e) => {
                        let _ = write!(out, "{:>w$}", format!("{e:.3e}"));
                    }
                    None => {
                        let _ = write!(out, "{:>w$}", "failed");
                    }
                }
            }
            out.push('\n');
            let _ = write!(out, "{:<12}{:<8}", "", "rate");
            let _ = write!(out, "{:>w$}", "");
            for rate in &row.rates {
                match rate {
                    Some(r) => {
                        let _ = write!(out, "{:>w$}", format!("{r:.3}"));
                    }
                    None => {
                        let _ = write!(out, "{:>w$}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serialises")
    }

    pub fn row(&self, grading: GradingRule, alpha: f64) -> Option<&TableRow> {
        self.rows
            .iter()
            .find(|r| r.grading == grading && (r.alpha - alpha).abs() < 1e-12)
    }
}
