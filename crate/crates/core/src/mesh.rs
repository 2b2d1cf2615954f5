//! Temporal meshes `0 = t_0 < t_1 < ... < t_M = T` and their derived step sequences.
//!
//! Indexing follows the usual convention: steps `tau(j) = t_j - t_{j-1}` exist for
//! `j >= 1`, while ratios `rho(j)` and skews `sigma(j)` exist for `j >= 2`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used by the monotonicity comparisons in [`RegularityReport`].
pub const SKEW_TOLERANCE: f64 = 1e-14;

/// How the nodes of a mesh are generated from `(T, M, r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MeshVariant {
    Uniform,
    Graded,
    /// Graded mesh shifted by `K - 1` steps so that the first ratios are mild.
    ModifiedGraded { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub final_time: f64,
    pub steps: usize,
    pub grading: f64,
    pub variant: MeshVariant,
}

impl MeshSpec {
    pub fn graded(final_time: f64, steps: usize, grading: f64) -> Self {
        Self {
            final_time,
            steps,
            grading,
            variant: MeshVariant::Graded,
        }
    }

    pub fn uniform(final_time: f64, steps: usize) -> Self {
        Self {
            final_time,
            steps,
            grading: 1.0,
            variant: MeshVariant::Uniform,
        }
    }

    pub fn modified_graded(final_time: f64, steps: usize, grading: f64, k: usize) -> Self {
        Self {
            final_time,
            steps,
            grading,
            variant: MeshVariant::ModifiedGraded { k },
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.final_time > 0.0 && self.final_time.is_finite()) {
            return Err(Error::param("T", format!("{} must be positive", self.final_time)));
        }
        if self.steps < 2 {
            return Err(Error::param("M", format!("{} < 2", self.steps)));
        }
        if !(self.grading >= 1.0 && self.grading.is_finite()) {
            return Err(Error::param("r", format!("{} < 1", self.grading)));
        }
        if let MeshVariant::ModifiedGraded { k } = self.variant {
            if k < 1 {
                return Err(Error::param("K", "modified graded mesh needs K >= 1"));
            }
        }
        Ok(())
    }
}

/// Strictly increasing temporal nodes starting at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalMesh {
    nodes: Vec<f64>,
}

impl TemporalMesh {
    /// Validates and wraps user-supplied nodes.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidMesh(format!(
                "need at least 2 nodes, got {}",
                nodes.len()
            )));
        }
        if nodes[0] != 0.0 {
            return Err(Error::InvalidMesh(format!("t_0 = {} but must be 0", nodes[0])));
        }
        for (j, w) in nodes.windows(2).enumerate() {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::InvalidMesh(format!(
                    "nodes not strictly increasing at j = {}: {} -> {}",
                    j + 1,
                    w[0],
                    w[1]
                )));
            }
        }
        Ok(Self { nodes })
    }

    pub fn uniform(final_time: f64, steps: usize) -> Result<Self> {
        build_graded(&MeshSpec::uniform(final_time, steps))
    }

    pub fn graded(final_time: f64, steps: usize, grading: f64) -> Result<Self> {
        build_graded(&MeshSpec::graded(final_time, steps, grading))
    }

    pub fn modified_graded(final_time: f64, steps: usize, grading: f64, k: usize) -> Result<Self> {
        build_graded(&MeshSpec::modified_graded(final_time, steps, grading, k))
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of steps `M`.
    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn final_time(&self) -> f64 {
        self.nodes[self.steps()]
    }

    #[inline]
    pub fn t(&self, j: usize) -> f64 {
        self.nodes[j]
    }

    /// `tau_j = t_j - t_{j-1}`, `j >= 1`.
    #[inline]
    pub fn tau(&self, j: usize) -> f64 {
        debug_assert!(j >= 1);
        self.nodes[j] - self.nodes[j - 1]
    }

    /// `tilde tau_1 = tau_1`, `tilde tau_j = (tau_{j-1} + tau_j) / 2` for `j >= 2`.
    #[inline]
    pub fn tau_avg(&self, j: usize) -> f64 {
        if j == 1 {
            self.tau(1)
        } else {
            0.5 * (self.nodes[j] - self.nodes[j - 2])
        }
    }

    /// `rho_j = tau_j / tau_{j-1}`, `j >= 2`.
    #[inline]
    pub fn rho(&self, j: usize) -> f64 {
        debug_assert!(j >= 2);
        self.tau(j) / self.tau(j - 1)
    }

    /// `sigma_j = (tau_j - tau_{j-1}) / (tau_j + tau_{j-1})`, `j >= 2`.
    #[inline]
    pub fn sigma(&self, j: usize) -> f64 {
        debug_assert!(j >= 2);
        let (a, b) = (self.tau(j - 1), self.tau(j));
        (b - a) / (b + a)
    }

    pub fn quantities(&self) -> MeshQuantities {
        let m = self.steps();
        let mut q = MeshQuantities {
            tau: vec![f64::NAN; m + 1],
            tau_avg: vec![f64::NAN; m + 1],
            rho: vec![f64::NAN; m + 1],
            sigma: vec![f64::NAN; m + 1],
        };
        for j in 1..=m {
            q.tau[j] = self.tau(j);
            q.tau_avg[j] = self.tau_avg(j);
            if j >= 2 {
                q.rho[j] = self.rho(j);
                q.sigma[j] = self.sigma(j);
            }
        }
        q
    }

    /// Diagnostic report on the quasi-graded mesh hypotheses. Never fails.
    pub fn regularity(&self, grading: f64) -> RegularityReport {
        let m = self.steps();
        let mut sigma_ok = true;
        let mut rho_ok = true;
        for j in 2..=m {
            let s = self.sigma(j);
            if s < -SKEW_TOLERANCE {
                sigma_ok = false;
            }
            let p = self.rho(j);
            if p < 1.0 - SKEW_TOLERANCE {
                rho_ok = false;
            }
            if j < m {
                let s_next = self.sigma(j + 1);
                if s_next > s + SKEW_TOLERANCE * s.abs().max(1.0) {
                    sigma_ok = false;
                }
                let p_next = self.rho(j + 1);
                if p_next > p + SKEW_TOLERANCE * p.abs().max(1.0) {
                    rho_ok = false;
                }
            }
        }
        let tau1 = self.tau(1);
        let mf = m as f64;
        let first = tau1 * mf.powf(grading);
        let mut local = Range::empty();
        let mut power = Range::empty();
        for j in 1..=m {
            let jf = j as f64;
            local.push(self.tau(j) * jf / self.t(j));
            power.push(self.t(j) / (tau1 * jf.powf(grading)));
        }
        RegularityReport {
            sigma_monotone_nonneg: sigma_ok,
            rho_monotone_ge_one: rho_ok,
            first_step_scaled: first,
            local_step_ratio: local,
            power_law_ratio: power,
        }
    }

    /// Reads the plain-text node format: one node per line, `#` comments,
    /// optional header `# T=<val> M=<val>` checked against the data.
    pub fn parse(text: &str) -> Result<Self> {
        let mut header_t = None;
        let mut header_m = None;
        let mut nodes = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                for tok in comment.split_whitespace() {
                    if let Some(v) = tok.strip_prefix("T=") {
                        header_t = Some(v.parse::<f64>().map_err(|e| {
                            Error::Parse(format!("line {}: bad T: {e}", lineno + 1))
                        })?);
                    } else if let Some(v) = tok.strip_prefix("M=") {
                        header_m = Some(v.parse::<usize>().map_err(|e| {
                            Error::Parse(format!("line {}: bad M: {e}", lineno + 1))
                        })?);
                    }
                }
                continue;
            }
            let v = line
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e}: `{line}`", lineno + 1)))?;
            nodes.push(v);
        }
        let mesh = Self::from_nodes(nodes)?;
        if let Some(m) = header_m {
            if m != mesh.steps() {
                return Err(Error::InvalidMesh(format!(
                    "header says M={m} but file has {} steps",
                    mesh.steps()
                )));
            }
        }
        if let Some(t) = header_t {
            let end = mesh.final_time();
            if (end - t).abs() > 1e-12 * t.abs().max(1.0) {
                return Err(Error::InvalidMesh(format!(
                    "header says T={t} but last node is {end}"
                )));
            }
        }
        Ok(mesh)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# T={} M={}\n", self.final_time(), self.steps());
        for t in &self.nodes {
            let _ = writeln!(out, "{t}");
        }
        out
    }
}

/// Derived sequences indexed by `j`; entries where a quantity is undefined hold NaN
/// (`tau[0]`, `tau_avg[0]`, and `rho`, `sigma` at `j < 2`).
#[derive(Debug, Clone, PartialEq)]
pub struct MeshQuantities {
    pub tau: Vec<f64>,
    pub tau_avg: Vec<f64>,
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    fn empty() -> Self {
        Self {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    fn push(&mut self, v: f64) {
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }
}

/// Mesh audit. The similarity ratios are reported, not judged: the implied
/// constants of the quasi-graded class are not fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    /// `sigma_j >= sigma_{j+1} >= 0` for all `j >= 2`.
    pub sigma_monotone_nonneg: bool,
    /// `rho_j >= rho_{j+1} >= 1` for all `j >= 2`.
    pub rho_monotone_ge_one: bool,
    /// `tau_1 M^r`.
    pub first_step_scaled: f64,
    /// Range of `tau_j j / t_j`.
    pub local_step_ratio: Range,
    /// Range of `t_j / (tau_1 j^r)`.
    pub power_law_ratio: Range,
}

/// Builds a uniform, standard graded `t_j = T (j/M)^r` or modified graded mesh.
pub fn build_graded(spec: &MeshSpec) -> Result<TemporalMesh> {
    spec.validate()?;
    let m = spec.steps;
    let mf = m as f64;
    let t_end = spec.final_time;
    let mut nodes = Vec::with_capacity(m + 1);
    match spec.variant {
        MeshVariant::Uniform => {
            nodes.extend((0..=m).map(|j| t_end * j as f64 / mf));
        }
        MeshVariant::Graded => {
            let r = spec.grading;
            nodes.extend((0..=m).map(|j| t_end * (j as f64 / mf).powf(r)));
        }
        MeshVariant::ModifiedGraded { k } => {
            let r = spec.grading;
            let shift = (k - 1) as f64;
            let base = (shift / mf).powf(r);
            let hat = |j: usize| ((j as f64 + shift) / mf).powf(r) - base;
            let hat_end = hat(m);
            nodes.extend((0..=m).map(|j| t_end * hat(j) / hat_end));
        }
    }
    nodes[m] = t_end;
    TemporalMesh::from_nodes(nodes).map_err(|e| {
        Error::InvalidMesh(format!("generated nodes lost monotonicity (M={m}): {e}"))
    })
}
