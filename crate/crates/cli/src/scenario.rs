//! Scenario files: what to simulate, on which grid, and what to check.

use std::path::{Path, PathBuf};

use adhesion_core::{
    discretize, fixtures, stieltjes_distribution_from, Affine, Atom, DensityPiece, MassDistribution,
    ParticleSystem, Process, PsiKind, VelocityProfile,
};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    pub model: ModelConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub distribution: DistributionConfig,
    pub velocity: VelocityConfig,
    /// Number of particles before atoms and splits at jumps.
    pub n: usize,
    /// Part of the distribution to discretize; the whole window by default.
    #[serde(default)]
    pub window: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionConfig {
    /// Unit density on `[lo, hi]`.
    Lebesgue { lo: f64, hi: f64 },
    /// Piecewise-constant density plus point masses.
    Piecewise {
        pieces: Vec<PieceConfig>,
        #[serde(default)]
        atoms: Vec<AtomConfig>,
        window: [f64; 2],
    },
    /// The measure `-du₀` of a non-increasing velocity profile.
    Stieltjes {
        #[serde(default)]
        window: Option<[f64; 2]>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PieceConfig {
    pub lo: f64,
    pub hi: f64,
    pub density: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub position: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocityConfig {
    Constant { value: f64 },
    /// `left` up to and including `at`, `right` after it.
    Step { at: f64, left: f64, right: f64 },
    /// Continuous interpolant through `[x, u]` pairs.
    Knots { knots: Vec<[f64; 2]> },
    /// `-arctan` interpolated on equally spaced knots of `[lo, hi]`.
    NegArctan { lo: f64, hi: f64, knots: usize },
    /// Affine pieces between breakpoints; outer pieces must be flat.
    Piecewise {
        breakpoints: Vec<f64>,
        segments: Vec<SegmentConfig>,
        #[serde(default)]
        point_values: Option<Vec<Option<f64>>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub horizon: f64,
    #[serde(default)]
    pub samples: Option<SamplesConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum GridConfig {
    Times(Vec<f64>),
    Uniform(UniformGrid),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct UniformGrid {
    pub start: f64,
    pub end: f64,
    /// Number of grid times including both ends.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum SamplesConfig {
    /// Initial positions; each is moved to the nearest particle.
    Positions { positions: Vec<f64> },
    /// Particles drawn from the initial mass.
    Random {
        count: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    #[serde(default)]
    pub velocity_conditional: bool,
    /// Tower property of `u(X_t, t)` between consecutive grid times.
    #[serde(default)]
    pub martingale_x: bool,
    #[serde(default)]
    pub semimartingale: Vec<ProcessName>,
    #[serde(default)]
    pub iff: Option<IffConfig>,
    #[serde(default)]
    pub dissipation: Vec<PsiConfig>,
    #[serde(default)]
    pub oracle_equivalence: bool,
    #[serde(default)]
    pub burgers: Option<BurgersConfig>,
    /// Tolerance of the exact identities.
    #[serde(default = "default_exact_tolerance")]
    pub exact_tolerance: f64,
}

fn default_exact_tolerance() -> f64 {
    adhesion_core::verify::EXACT_TOL
}

impl ChecksConfig {
    pub fn is_empty(&self) -> bool {
        !self.velocity_conditional
            && !self.martingale_x
            && self.semimartingale.is_empty()
            && self.iff.is_none()
            && self.dissipation.is_empty()
            && !self.oracle_equivalence
            && self.burgers.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub enum ProcessName {
    X,
    Z1,
    Z2,
    Z3,
    Z4,
    Y,
}

impl From<ProcessName> for Process {
    fn from(p: ProcessName) -> Self {
        match p {
            ProcessName::X => Process::X,
            ProcessName::Z1 => Process::Z1,
            ProcessName::Z2 => Process::Z2,
            ProcessName::Z3 => Process::Z3,
            ProcessName::Z4 => Process::Z4,
            ProcessName::Y => Process::Y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct IffConfig {
    pub processes: Vec<ProcessName>,
    pub tolerance: f64,
}

/// Convex test function: `"square"`, `"abs"`, `{"exp_scaled": k}` for
/// `exp(k u)`, or `{"hinge": c}` for `max(0, u - c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum PsiConfig {
    Square,
    Abs,
    ExpScaled(f64),
    Hinge(f64),
}

impl From<PsiConfig> for PsiKind {
    fn from(p: PsiConfig) -> Self {
        match p {
            PsiConfig::Square => PsiKind::Square,
            PsiConfig::Abs => PsiKind::Abs,
            PsiConfig::ExpScaled(k) => PsiKind::ExpScaled(k),
            PsiConfig::Hinge(c) => PsiKind::Hinge(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct BurgersConfig {
    pub times: Vec<f64>,
    /// The cumulative distance must stay below `constant / n`.
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum StateExport {
    #[default]
    All,
    /// Only blocks holding more than one particle.
    Nontrivial,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub states: StateExport,
}

impl Scenario {
    /// Parses JSON, naming the offending key and line on failure.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner();
            CliError::Config(format!(
                "at `{}` (line {}, column {}): {}",
                e.path(),
                inner.line(),
                inner.column(),
                inner
            ))
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let grid = self.grid()?;
        if !self.run.horizon.is_finite() || self.run.horizon < 0.0 {
            return Err(CliError::Config("run.horizon must be finite and non-negative".into()));
        }
        if let Some(&t) = grid.iter().find(|&&t| t > self.run.horizon) {
            return Err(CliError::Config(format!(
                "grid time {t} is past run.horizon {}",
                self.run.horizon
            )));
        }
        if self.model.n == 0 {
            return Err(CliError::Config("model.n must be at least 1".into()));
        }
        if let Some(iff) = &self.checks.iff {
            if iff.tolerance.is_nan() || iff.tolerance < 0.0 {
                return Err(CliError::Config("checks.iff.tolerance must be non-negative".into()));
            }
        }
        if self.checks.exact_tolerance.is_nan() || self.checks.exact_tolerance < 0.0 {
            return Err(CliError::Config("checks.exact_tolerance must be non-negative".into()));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.n.is_empty() || sweep.n.windows(2).any(|w| w[0] >= w[1]) || sweep.n[0] == 0 {
                return Err(CliError::Config("sweep.n must be a non-empty increasing list of positive sizes".into()));
            }
        }
        Ok(())
    }

    /// Grid times in increasing order.
    pub fn grid(&self) -> Result<Vec<f64>, CliError> {
        let times = match &self.run.grid {
            GridConfig::Times(t) => t.clone(),
            GridConfig::Uniform(g) => match g.count {
                0 => Vec::new(),
                1 => vec![g.start],
                c => {
                    let h = (g.end - g.start) / (c - 1) as f64;
                    (0..c)
                        .map(|k| if k + 1 == c { g.end } else { g.start + h * k as f64 })
                        .collect()
                }
            },
        };
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(CliError::Config("grid times must be finite and non-negative".into()));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Config("grid times must be strictly increasing".into()));
        }
        Ok(times)
    }

    pub fn profile(&self) -> Result<VelocityProfile, CliError> {
        let p = match &self.model.velocity {
            VelocityConfig::Constant { value } => VelocityProfile::constant(*value),
            VelocityConfig::Step { at, left, right } => VelocityProfile::step(*at, *left, *right),
            VelocityConfig::Knots { knots } => {
                let k: Vec<(f64, f64)> = knots.iter().map(|p| (p[0], p[1])).collect();
                VelocityProfile::from_knots(&k)?
            }
            VelocityConfig::NegArctan { lo, hi, knots } => fixtures::neg_arctan(*lo, *hi, *knots)?,
            VelocityConfig::Piecewise {
                breakpoints,
                segments,
                point_values,
            } => {
                let segs = segments
                    .iter()
                    .map(|s| Affine {
                        slope: s.slope,
                        intercept: s.intercept,
                    })
                    .collect();
                let pv = point_values.clone().unwrap_or_else(|| vec![None; breakpoints.len()]);
                VelocityProfile::with_point_values(breakpoints.clone(), segs, pv)?
            }
        };
        Ok(p)
    }

    pub fn distribution(&self, prof: &VelocityProfile) -> Result<MassDistribution, CliError> {
        let d = match &self.model.distribution {
            DistributionConfig::Lebesgue { lo, hi } => MassDistribution::lebesgue(*lo, *hi)?,
            DistributionConfig::Piecewise { pieces, atoms, window } => MassDistribution::new(
                pieces
                    .iter()
                    .map(|p| DensityPiece {
                        lo: p.lo,
                        hi: p.hi,
                        density: p.density,
                    })
                    .collect(),
                atoms
                    .iter()
                    .map(|a| Atom {
                        position: a.position,
                        mass: a.mass,
                    })
                    .collect(),
                (window[0], window[1]),
            )?,
            DistributionConfig::Stieltjes { window } => {
                stieltjes_distribution_from(prof, window.map(|w| (w[0], w[1])))?
            }
        };
        Ok(d)
    }

    /// The particle system with `n` particles in place of the configured count.
    pub fn system_with(&self, n: usize) -> Result<ParticleSystem, CliError> {
        let prof = self.profile()?;
        let dist = self.distribution(&prof)?;
        let window = self.model.window.map(|w| (w[0], w[1])).unwrap_or(dist.window());
        Ok(discretize(&dist, &prof, n, window)?)
    }

    pub fn system(&self) -> Result<ParticleSystem, CliError> {
        self.system_with(self.model.n)
    }
}
