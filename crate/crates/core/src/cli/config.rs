//! TOML run configuration. Every table rejects unknown keys.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::PathBuf;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toy: Option<ToySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<StepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sharpness: Option<SharpnessSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vecfield: Option<VecfieldSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collision: Option<CollisionSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<OperatorSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<LinearSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth: Option<GrowthSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub id: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Toy model and its 1D × 1D grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySection {
    pub s: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "d_toy_m")]
    pub m_max: usize,
    #[serde(default = "d_toy_nv")]
    pub n_v: usize,
    #[serde(default = "d_toy_v")]
    pub v_max: f64,
    /// Decay order of the initial data `(1 + |m| + |η|)^{-p}`.
    #[serde(default = "d_toy_p")]
    pub p: f64,
    #[serde(default = "d_toy_times")]
    pub times: Vec<f64>,
    #[serde(default = "d_toy_tol")]
    pub quad_tol: f64,
    /// Random points for the ψ closed-form check.
    #[serde(default = "d_toy_psi")]
    pub psi_samples: usize,
}

fn d_toy_m() -> usize {
    2
}
fn d_toy_nv() -> usize {
    1024
}
fn d_toy_v() -> f64 {
    4.0 * PI
}
fn d_toy_p() -> f64 {
    4.0
}
fn d_toy_times() -> Vec<f64> {
    vec![0.25, 0.5, 1.0]
}
fn d_toy_tol() -> f64 {
    1e-10
}
fn d_toy_psi() -> usize {
    200
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSection {
    #[serde(default = "d_step_t")]
    pub t_end: f64,
    /// Step sizes, coarsest first.
    #[serde(default = "d_step_dt")]
    pub dt: Vec<f64>,
}

fn d_step_t() -> f64 {
    0.5
}
fn d_step_dt() -> Vec<f64> {
    vec![0.004, 0.002, 0.001]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    #[serde(default = "d_fit_t")]
    pub t: f64,
    #[serde(default = "d_fit_lo")]
    pub shell_min: f64,
    #[serde(default = "d_fit_hi")]
    pub shell_max: f64,
    #[serde(default = "d_fit_tol")]
    pub tolerance: f64,
}

fn d_fit_t() -> f64 {
    1.0
}
fn d_fit_lo() -> f64 {
    20.0
}
fn d_fit_hi() -> f64 {
    4000.0
}
fn d_fit_tol() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharpnessSection {
    pub s: f64,
    pub r: f64,
    pub c: f64,
    #[serde(default = "d_fit_t")]
    pub t: f64,
    #[serde(default = "d_sh_nv")]
    pub n_v: usize,
    #[serde(default = "d_sh_v")]
    pub v_max: f64,
    #[serde(default = "d_sh_m")]
    pub m_max: usize,
    #[serde(default = "d_toy_p")]
    pub p: f64,
    #[serde(default = "d_sh_r0")]
    pub r0: f64,
    #[serde(default = "d_sh_tol")]
    pub quad_tol: f64,
}

fn d_sh_nv() -> usize {
    8192
}
fn d_sh_v() -> f64 {
    PI
}
fn d_sh_m() -> usize {
    8
}
fn d_sh_r0() -> f64 {
    500.0
}
fn d_sh_tol() -> f64 {
    1e-12
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VecfieldSection {
    pub s: f64,
    pub lambda: f64,
    #[serde(default = "d_vf_samples")]
    pub samples: usize,
    #[serde(default = "d_vf_eta")]
    pub eta_max: f64,
    #[serde(default = "d_sh_m")]
    pub m_max: usize,
    /// Time of the commutator check; the field is `H_λ` along axis 1.
    #[serde(default = "d_vf_t")]
    pub t_commutator: f64,
    #[serde(default = "d_vf_k")]
    pub k_max: u32,
    #[serde(default = "d_vf_h")]
    pub h_t: f64,
    /// `p ≤ gaussian_p_max` and `|v| ≤ gaussian_v_max` in the Gaussian bound.
    #[serde(default = "d_vf_p")]
    pub gaussian_p_max: usize,
    #[serde(default = "d_vf_gv")]
    pub gaussian_v_max: f64,
}

fn d_vf_samples() -> usize {
    1000
}
fn d_vf_eta() -> f64 {
    50.0
}
fn d_vf_t() -> f64 {
    2.0
}
fn d_vf_k() -> u32 {
    4
}
fn d_vf_h() -> f64 {
    1e-3
}
fn d_vf_p() -> usize {
    10
}
fn d_vf_gv() -> f64 {
    8.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "d_k_s")]
    pub s: f64,
    #[serde(default = "d_k_kb")]
    pub k_b: f64,
    #[serde(default = "d_k_tm")]
    pub theta_min: f64,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self {
            gamma: 0.0,
            s: d_k_s(),
            k_b: d_k_kb(),
            theta_min: d_k_tm(),
        }
    }
}

fn d_k_s() -> f64 {
    0.5
}
fn d_k_kb() -> f64 {
    1.0
}
fn d_k_tm() -> f64 {
    1e-3
}

/// Grid for the conservation check of `Q(f, f)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollisionSection {
    #[serde(default = "d_c_nv")]
    pub n_v: usize,
    #[serde(default = "d_c_v")]
    pub v_max: f64,
    /// Angular levels; level `n` uses `n_theta = n_phi = n`.
    #[serde(default = "d_c_levels")]
    pub levels: Vec<usize>,
    #[serde(default = "d_c_pairs")]
    pub gamma_pairs: usize,
    #[serde(default = "d_true")]
    pub null_space: bool,
    #[serde(default)]
    pub probe_samples: usize,
}

impl Default for CollisionSection {
    fn default() -> Self {
        Self {
            n_v: d_c_nv(),
            v_max: d_c_v(),
            levels: d_c_levels(),
            gamma_pairs: d_c_pairs(),
            null_space: true,
            probe_samples: 0,
        }
    }
}

fn d_c_nv() -> usize {
    16
}
fn d_c_v() -> f64 {
    6.0
}
fn d_c_levels() -> Vec<usize> {
    vec![4, 6, 8]
}
fn d_c_pairs() -> usize {
    20
}
fn d_true() -> bool {
    true
}

/// Quadrature of the linearized operator and its cached matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSection {
    #[serde(default = "d_o_nv")]
    pub n_v: usize,
    #[serde(default = "d_o_v")]
    pub v_max: f64,
    #[serde(default = "d_o_l")]
    pub n_theta: usize,
    #[serde(default = "d_o_l")]
    pub n_phi: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub save_matrix: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load_matrix: Option<PathBuf>,
}

impl Default for OperatorSection {
    fn default() -> Self {
        Self {
            n_v: d_o_nv(),
            v_max: d_o_v(),
            n_theta: d_o_l(),
            n_phi: d_o_l(),
            save_matrix: None,
            load_matrix: None,
        }
    }
}

fn d_o_nv() -> usize {
    8
}
fn d_o_v() -> f64 {
    5.0
}
fn d_o_l() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSection {
    #[serde(default = "d_toy_m")]
    pub m_max: usize,
    #[serde(default = "d_l_dt")]
    pub dt: f64,
    #[serde(default = "d_l_t")]
    pub t_end: f64,
    #[serde(default = "d_l_snap")]
    pub snapshot_every: f64,
    /// Also run at `dt/2` and `dt/4` and report the convergence ratio.
    #[serde(default = "d_true")]
    pub richardson: bool,
    /// Window on which the outer-shell energy must decrease.
    #[serde(default = "d_l_w0")]
    pub shell_t0: f64,
    #[serde(default = "d_l_t")]
    pub shell_t1: f64,
}

impl Default for LinearSection {
    fn default() -> Self {
        Self {
            m_max: d_toy_m(),
            dt: d_l_dt(),
            t_end: d_l_t(),
            snapshot_every: d_l_snap(),
            richardson: true,
            shell_t0: d_l_w0(),
            shell_t1: d_l_t(),
        }
    }
}

fn d_l_dt() -> f64 {
    0.125
}
fn d_l_t() -> f64 {
    2.0
}
fn d_l_snap() -> f64 {
    0.25
}
fn d_l_w0() -> f64 {
    0.5
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrowthSource {
    Toy,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthSection {
    pub source: GrowthSource,
    pub delta: f64,
    #[serde(default = "d_g_k")]
    pub k_max: usize,
    /// Exponents tried in the normalization; `max(1, 1/(2s))` is always added.
    #[serde(default)]
    pub taus: Vec<f64>,
}

fn d_g_k() -> usize {
    8
}

/// A config error naming the first offending key.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid config key `{}`: {}", self.key, self.message)
    }
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl Config {
    pub fn parse(src: &str) -> Result<Self, ConfigError> {
        toml::from_str(src).map_err(|e| ConfigError {
            key: offending_key(src, e.message(), e.span()),
            message: e.message().to_string(),
        })
    }

    pub fn emit(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T, ConfigError> {
        section
            .as_ref()
            .ok_or_else(|| ConfigError::new(name, format!("missing section [{name}]")))
    }
}

const SECTIONS: [&str; 11] = [
    "run", "toy", "step", "fit", "sharpness", "vecfield", "kernel", "collision", "operator", "linear", "growth",
];

fn backticked(msg: &str) -> Option<&str> {
    let a = msg.find('`')?;
    let b = msg[a + 1..].find('`')?;
    Some(&msg[a + 1..a + 1 + b])
}

/// `section.key` from the error message and the span of the offending item.
fn offending_key(src: &str, msg: &str, span: Option<std::ops::Range<usize>>) -> String {
    let mut section = None;
    let mut line_key = None;
    if let Some(sp) = span {
        let start = sp.start.min(src.len());
        for line in src[..start].lines() {
            let t = line.trim();
            if t.starts_with('[') {
                section = Some(t.trim_matches(|c| c == '[' || c == ']').trim().to_string());
            }
        }
        let line_start = src[..start].rfind('\n').map_or(0, |i| i + 1);
        let line = src[line_start..].lines().next().unwrap_or("").trim();
        if line.starts_with('[') {
            section = Some(line.trim_matches(|c| c == '[' || c == ']').trim().to_string());
        } else if let Some(eq) = line.find('=') {
            line_key = Some(line[..eq].trim().to_string());
        }
    }
    let named = backticked(msg)
        .filter(|_| msg.contains("field"))
        .map(str::to_string);
    if msg.starts_with("missing field") && named.as_deref().is_some_and(|n| SECTIONS.contains(&n)) {
        return named.unwrap();
    }
    let key = named.or(line_key);
    match (section, key) {
        (Some(s), Some(k)) if s != k => format!("{s}.{k}"),
        (Some(s), _) => s,
        (None, Some(k)) => k,
        (None, None) => "<root>".into(),
    }
}
