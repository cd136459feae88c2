//! Run configuration: TOML text with four sections, unknown keys rejected,
//! defaults filled in, and a content hash of the resolved form.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{Epsilon, HoleSpec, DIAM_Y};
use crate::limit::DiffusionScaling;
use crate::presets::{InitialPreset, ReactionPreset, SourcePreset, TensorPreset};
use crate::verify::TimeQuadrature;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub dim: usize,
    pub hole: HoleSpec,
    /// Micro cells per unit-cell edge.
    pub m: usize,
    /// Side lengths of `Ω` in unit lengths.
    pub lengths: [usize; 2],
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            hole: HoleSpec::cube(1.0 / 3.0, 2.0 / 3.0),
            m: 12,
            lengths: [1, 1],
        }
    }
}

/// How the mollifier scale condition `δ > 2ε diam(Y)` is applied to a sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaPolicy {
    /// Required for the finest ε; coarser violations become warnings.
    #[default]
    Finest,
    /// Required for every ε.
    Strict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsConfig {
    pub tau: f64,
    pub mu: f64,
    pub a: f64,
    pub b: f64,
    pub g: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Admissible eigenvalue range of `𝔻` and `𝕂`.
    pub elliptic_bounds: [f64; 2],
    pub reaction: ReactionPreset,
    pub diffusion: TensorPreset,
    pub conductivity: TensorPreset,
    pub source: SourcePreset,
    pub initial: InitialPreset,
    pub delta: f64,
    pub delta_policy: DeltaPolicy,
    pub limit_diffusion: DiffusionScaling,
    /// Sign of the boundary exchange in the limit `u`-equation.
    pub sign_limit_exchange: i8,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            mu: 1.0,
            a: 1.0,
            b: 0.5,
            g: 1.0,
            alpha: 1.0,
            beta: 1.0,
            elliptic_bounds: [0.1, 10.0],
            reaction: ReactionPreset::Logistic,
            diffusion: TensorPreset::Identity,
            conductivity: TensorPreset::Identity,
            source: SourcePreset::Default,
            initial: InitialPreset::Default,
            delta: 0.25,
            delta_policy: DeltaPolicy::Finest,
            limit_diffusion: DiffusionScaling::VolumeFraction,
            sign_limit_exchange: 1,
        }
    }
}

impl PhysicsConfig {
    pub fn coupling(&self) -> crate::micro::Coupling {
        crate::micro::Coupling {
            tau: self.tau,
            mu: self.mu,
            a: self.a,
            b: self.b,
            g: self.g,
            alpha: self.alpha,
            beta: self.beta,
        }
    }

    /// Switch off every coupling, exchange and the reaction.
    pub fn decoupled(&self) -> Self {
        Self {
            tau: 0.0,
            mu: 0.0,
            a: 0.0,
            b: 0.0,
            g: 0.0,
            reaction: ReactionPreset::None,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizationConfig {
    /// Time step; `min(1e-3, ε_min / m)` adjusted to the horizon when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub horizon: f64,
    /// Number of snapshot intervals over `[0, T]`.
    pub snapshots: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub tol_pos: f64,
    pub time_quadrature: TimeQuadrature,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        Self {
            dt: None,
            horizon: 0.1,
            snapshots: 20,
            tol: 1e-10,
            max_iter: 10_000,
            tol_pos: 1e-10,
            time_quadrature: TimeQuadrature::LeftEndpoint,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub epsilons: Vec<Epsilon>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            epsilons: [4, 8, 16, 32].map(|n| Epsilon::inverse(n).expect("valid")).to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlagsConfig {
    pub deterministic: bool,
    /// Run the limit problem under both exchange signs.
    pub ambiguity_sweep: bool,
    /// Also run the decoupled baseline study.
    pub coupling_off_baseline: bool,
    /// Include the operator rate suites in the report.
    pub lemma_suites: bool,
    pub fail_on_positivity: bool,
    pub output_dir: String,
    /// Lattice intervals per unit length for the mollifier sup check.
    pub lemma2_lattice: usize,
    pub seed: u64,
}

impl Default for FlagsConfig {
    fn default() -> Self {
        Self {
            deterministic: false,
            ambiguity_sweep: true,
            coupling_off_baseline: false,
            lemma_suites: true,
            fail_on_positivity: false,
            output_dir: "runs".into(),
            lemma2_lattice: 384,
            seed: 2024,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub physics: PhysicsConfig,
    pub discretization: DiscretizationConfig,
    pub sweep: SweepConfig,
    pub flags: FlagsConfig,
}

impl RunConfig {
    /// Parse and validate TOML text.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg = Self::parse_toml(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse only; unknown keys are still rejected.
    pub fn parse_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg = Self::read(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read and parse without validation.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_toml(&text)
    }

    /// Resolved configuration as TOML, with every default written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the resolved TOML, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Sorted, deduplicated sweep, coarsest first.
    pub fn epsilons(&self) -> Vec<Epsilon> {
        let mut e = self.sweep.epsilons.clone();
        e.sort_by_key(|e| e.n());
        e.dedup();
        e
    }

    pub fn finest(&self) -> Epsilon {
        *self.epsilons().last().expect("validated sweep is not empty")
    }

    /// Time step used by every run of the sweep: `min(1e-3, ε_min/m)` unless
    /// configured, shortened so that the horizon holds a whole number of
    /// snapshot intervals.
    pub fn time_step(&self) -> f64 {
        let d = &self.discretization;
        let target =
            d.dt.unwrap_or_else(|| 1e-3f64.min(self.finest().value() / self.geometry.m as f64));
        let per = ((d.horizon / d.snapshots as f64) / target - 1e-9).ceil().max(1.0) as usize;
        d.horizon / (per * d.snapshots) as f64
    }

    pub fn time_grid(&self) -> Result<crate::micro::TimeGrid> {
        let d = &self.discretization;
        crate::micro::TimeGrid::new(d.horizon, self.time_step(), d.snapshots)
    }

    /// The checks that do not involve time stepping or the mollifier: enough
    /// for cell solves and the operator suite.
    pub fn validate_data(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        let g = &self.geometry;
        if g.dim != 2 {
            return Err(Error::Config(format!("only dim = 2 is supported, got {}", g.dim)));
        }
        if g.m < 2 {
            return Err(Error::Config("geometry.m must be at least 2".into()));
        }
        if g.lengths.contains(&0) {
            return Err(Error::Config("geometry.lengths must be positive".into()));
        }
        let p = &self.physics;
        for (name, v) in [("tau", p.tau), ("mu", p.mu), ("a", p.a), ("b", p.b), ("g", p.g)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "physics.{name} = {v} violates the nonnegativity of the scalar data"
                )));
            }
        }
        if p.alpha < 1.0 {
            return Err(Error::Config(format!(
                "physics.alpha = {} < 1 is not meaningful, since the cross-diffusion term is unbounded",
                p.alpha
            )));
        }
        if !(p.beta >= 1.0 || p.beta == 0.0) {
            return Err(Error::Config(format!(
                "physics.beta = {} is not meaningful, since the cross-diffusion term is unbounded; use beta >= 1 or beta = 0",
                p.beta
            )));
        }
        if p.alpha != 1.0 || p.beta != 1.0 {
            warnings.push(format!(
                "alpha = {}, beta = {}: the limit system and the acceptance checks assume alpha = beta = 1",
                p.alpha, p.beta
            ));
        }
        if p.sign_limit_exchange != 1 && p.sign_limit_exchange != -1 {
            return Err(Error::Config("physics.sign_limit_exchange must be +1 or -1".into()));
        }
        let [lo, hi] = p.elliptic_bounds;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::Config(
                "physics.elliptic_bounds must satisfy 0 < lo <= hi".into(),
            ));
        }
        for (name, t) in [("diffusion", p.diffusion), ("conductivity", p.conductivity)] {
            let (l, h) = t.field(g.m).eigen_bounds();
            if l < lo || h > hi {
                return Err(Error::Config(format!(
                    "physics.{name} = {} has eigenvalues in [{l}, {h}], outside the ellipticity bounds [{lo}, {hi}]",
                    t.name()
                )));
            }
        }
        if !(p.delta > 0.0) {
            return Err(Error::Config("physics.delta must be positive".into()));
        }
        let d = &self.discretization;
        if !(d.horizon > 0.0) || d.snapshots == 0 {
            return Err(Error::Config(
                "discretization.horizon and snapshots must be positive".into(),
            ));
        }
        if let Some(dt) = d.dt {
            if !(dt > 0.0) {
                return Err(Error::Config("discretization.dt must be positive".into()));
            }
        }
        if !(d.tol > 0.0 && d.tol < 1.0) || d.max_iter == 0 {
            return Err(Error::Config(
                "discretization.tol must lie in (0, 1) and max_iter be positive".into(),
            ));
        }
        if self.sweep.epsilons.is_empty() {
            return Err(Error::Config("sweep.epsilons is empty".into()));
        }
        Ok(warnings)
    }

    /// Fails on the first violated constraint; returns the warnings otherwise.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = self.validate_data()?;
        let g = &self.geometry;
        let p = &self.physics;
        let eps = self.epsilons();
        let finest = *eps.last().expect("not empty");
        for e in &eps {
            let bound = 2.0 * e.value() * DIAM_Y;
            if p.delta <= bound {
                let msg = format!(
                    "delta = {} <= 2 eps diam(Y) = {bound:.4} at eps = {e}: the mollifier scale condition delta > 2 eps diam(Y) is violated",
                    p.delta
                );
                if p.delta_policy == DeltaPolicy::Strict || *e == finest {
                    return Err(Error::Config(msg));
                }
                warnings.push(msg);
            }
        }
        if self.flags.lemma_suites && !self.flags.lemma2_lattice.is_multiple_of(finest.n() * g.m) {
            return Err(Error::Config(format!(
                "flags.lemma2_lattice = {} must be a multiple of n m = {}",
                self.flags.lemma2_lattice,
                finest.n() * g.m
            )));
        }
        self.time_grid().map_err(|e| Error::Config(e.to_string()))?;
        Ok(warnings)
    }
}
