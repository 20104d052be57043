//! Run configuration: JSON schema, validation, and tolerance overrides.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use eqlab_core::fields::FieldConfig;
use eqlab_core::levelset::GridSpec;
use eqlab_core::mfs::{ConvexShape, FitOptions};
use eqlab_core::planar::{CurveSpec, PlanarField};

/// Everything a run needs; sections are optional and validated per command.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// 3D field model (identities | sweep | asymptotics | flow).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldConfig>,
    /// Declared problem kind for sign assertions; inferred from the field
    /// when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<ProblemKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<LevelsConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowConfig>,
    /// Boundary shape (mfs).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape: Option<ConvexShape>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mfs: Option<MfsConfig>,
    /// 2D field model (planar).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub planar_field: Option<PlanarField>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve: Option<CurveConfig>,
    /// Stencil settings of the identity suites (steps, flow hops).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub identity_options: Option<eqlab_core::functionals::IdentityOptions>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Exterior,
    Interior,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_theta: usize,
    pub n_phi: usize,
    #[serde(default)]
    pub center: [f64; 3],
    pub bracket: (f64, f64),
    /// Radial root defect tolerance (relative to `max(1, level)`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radial_tol: Option<f64>,
}

impl GridConfig {
    pub fn to_spec(&self) -> GridSpec {
        let mut spec = GridSpec::new(
            self.n_theta,
            self.n_phi,
            Vector3::from(self.center),
            self.bracket,
        );
        if let Some(tol) = self.radial_tol {
            spec.radial_tol = tol;
        }
        spec
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    pub n_nodes: usize,
    /// Star center; defaults to the field's own center (the source position
    /// of a log-monopole, the origin otherwise).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 2]>,
    pub bracket: (f64, f64),
}

impl CurveConfig {
    pub fn to_spec(&self, field: &PlanarField) -> CurveSpec {
        let center = self
            .center
            .map(Vector2::from)
            .unwrap_or_else(|| field.star_center());
        CurveSpec::new(self.n_nodes, center, self.bracket)
    }
}

/// Explicit level list or geometric range (endpoints included).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LevelsConfig {
    List { list: Vec<f64> },
    Geometric { geometric: GeometricLevels },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricLevels {
    pub first: f64,
    pub last: f64,
    pub count: usize,
}

impl LevelsConfig {
    pub fn resolve(&self) -> Result<Vec<f64>, String> {
        let mut levels = match self {
            LevelsConfig::List { list } => list.clone(),
            LevelsConfig::Geometric { geometric } => {
                if geometric.count < 2 {
                    return Err("levels.geometric.count must be at least 2".into());
                }
                if geometric.first <= 0.0 || geometric.last <= 0.0 {
                    return Err("levels.geometric endpoints must be positive".into());
                }
                let ratio = geometric.last / geometric.first;
                (0..geometric.count)
                    .map(|k| {
                        geometric.first * ratio.powf(k as f64 / (geometric.count as f64 - 1.0))
                    })
                    .collect()
            }
        };
        if levels.is_empty() {
            return Err("levels: list is empty".into());
        }
        if levels.iter().any(|l| !l.is_finite()) {
            return Err("levels: non-finite entry".into());
        }
        levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(levels)
    }

    /// Resolve and require strictly positive levels (3D potentials).
    pub fn resolve_positive(&self) -> Result<Vec<f64>, String> {
        let levels = self.resolve()?;
        if levels.iter().any(|&l| l <= 0.0) {
            return Err("levels: every level must be positive".into());
        }
        Ok(levels)
    }
}

/// Which problem an MFS run solves, plus fit parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MfsConfig {
    pub problem: MfsProblem,
    /// Total flux of the exterior field (ignored for cavities).
    #[serde(default = "default_flux")]
    pub flux: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_sources: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_collocation: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inflation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_check: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_cap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub condition_cap: Option<f64>,
}

fn default_flux() -> f64 {
    4.0 * std::f64::consts::PI
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MfsProblem {
    Exterior,
    Cavity,
}

impl MfsConfig {
    pub fn fit_options(&self, seed: u64) -> FitOptions {
        let mut options = match self.problem {
            MfsProblem::Exterior => FitOptions::exterior(),
            MfsProblem::Cavity => FitOptions::cavity(),
        };
        if let Some(n) = self.n_sources {
            options.n_sources = n;
            options.n_collocation = 4 * n;
        }
        if let Some(n) = self.n_collocation {
            options.n_collocation = n;
        }
        if let Some(v) = self.inflation {
            options.inflation = v;
        }
        if let Some(n) = self.n_check {
            options.n_check = n;
        }
        if let Some(v) = self.residual_cap {
            options.residual_cap = v;
        }
        if let Some(v) = self.condition_cap {
            options.condition_cap = v;
        }
        options.seed = seed;
        options
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub start: [f64; 3],
    pub target_level: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_steps() -> usize {
    200
}

/// All run tolerances; every key is overridable as `--tol-KEY=VALUE`
/// (dashes in KEY map to underscores here).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Closed-form `n·∇log E - 2H` residual.
    pub identity_a: f64,
    /// Closed-form `Δ log E + 2K` residual.
    pub identity_b: f64,
    /// Spatial finite-difference `Δn` identity.
    pub identity_c: f64,
    /// Surface-operator (Weatherburn) identity.
    pub identity_d: f64,
    /// Mean-curvature evolution identity.
    pub identity_e: f64,
    /// Spatial finite-difference `Δ(n/E)` identity.
    pub identity_f: f64,
    /// Slack for `W` monotonicity.
    pub monotone_slack: f64,
    /// Slack for the sign assertions on `F` and the β integral.
    pub sign: f64,
    /// Terminal flow defect.
    pub flow_defect: f64,
    /// Relative spread of the planar conserved integral.
    pub planar_conserved: f64,
    /// Relative mismatch of the planar variance identity.
    pub planar_variance: f64,
    /// Slack for the planar gradient-product sign.
    pub planar_grad_product: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identity_a: 1e-10,
            identity_b: 1e-10,
            identity_c: 1e-4,
            identity_d: 1e-4,
            identity_e: 1e-4,
            identity_f: 1e-4,
            monotone_slack: 1e-9,
            sign: 1e-10,
            flow_defect: 1e-10,
            planar_conserved: 1e-6,
            planar_variance: 1e-6,
            planar_grad_product: 1e-10,
        }
    }
}

impl Tolerances {
    pub fn set(&mut self, key: &str, value: f64) -> Result<(), String> {
        match key {
            "identity_a" => self.identity_a = value,
            "identity_b" => self.identity_b = value,
            "identity_c" => self.identity_c = value,
            "identity_d" => self.identity_d = value,
            "identity_e" => self.identity_e = value,
            "identity_f" => self.identity_f = value,
            "monotone_slack" => self.monotone_slack = value,
            "sign" => self.sign = value,
            "flow_defect" => self.flow_defect = value,
            "planar_conserved" => self.planar_conserved = value,
            "planar_variance" => self.planar_variance = value,
            "planar_grad_product" => self.planar_grad_product = value,
            other => return Err(format!("unknown tolerance key '{other}'")),
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
    }

    /// The declared kind, or the one inferred from the field model.
    pub fn problem_kind(&self) -> ProblemKind {
        if let Some(kind) = self.kind {
            return kind;
        }
        match &self.field {
            Some(config) if !config.is_exterior() => ProblemKind::Interior,
            _ => ProblemKind::Exterior,
        }
    }
}
