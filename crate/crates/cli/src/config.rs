//! Run configuration.
//!
//! A run is described by one TOML file. Every table is optional at the parser
//! level; each command checks that the tables it needs are present. Unknown
//! keys are rejected so that a misspelt parameter never silently falls back to
//! its default.
//!
//! ```toml
//! seed = 7
//! output_dir = "out"
//! format = "csv"            # csv | json
//!
//! [driver]
//! kind = "bm"               # bm | smooth | pure-area | file
//! dim = 1
//! t0 = 0.0
//! t1 = 1.0
//! n_points = 257
//! gamma = 0.45
//! refinement = 16
//!
//! [operator]
//! preset = { order = 1, mu = 2.5, n_modes = 2 }   # or: eigenvalues = [...]
//! gap = [1.5, 1.0]
//!
//! [nonlinearity]
//! drift = [{ out = 0, input = 1, coeff = 0.5, map = "sat_square" }]
//! diffusion = [{ out = 0, col = 0, input = 0, coeff = 0.5, map = "sat_cubic" }]
//!
//! [solver]
//! xi = [0.1, 0.0]
//! horizon = 1.0
//!
//! [manifold]
//! k = 0.05
//! k_max = 12
//! n_per_axis = 9
//! ```
//!
//! See `configs/` in the repository for complete examples of each command.

use std::path::{Path, PathBuf};

use roughflow_core::manifold::LPConfig;
use roughflow_core::nonlinearity::{Nonlinearity, ScalarMap, Term};
use roughflow_core::rough_driver::{RoughPath, TimeGrid};
use roughflow_core::solver::{Equation, InitialGuess, SolveConfig};
use roughflow_core::spectral::SpectralOperator;
use serde::{Deserialize, Serialize};

use crate::formats;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("[{section}] {message}")]
    Invalid {
        section: &'static str,
        message: String,
    },
    #[error("missing [{0}] table")]
    Missing(&'static str),
}

fn invalid(section: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        section,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub format: Format,
    pub driver: Option<DriverConfig>,
    pub operator: Option<OperatorConfig>,
    pub nonlinearity: Option<NonlinearityConfig>,
    pub solver: Option<SolverSection>,
    pub manifold: Option<ManifoldSection>,
    pub verify: Option<VerifySection>,
    pub probe: Option<ProbeSection>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriverKind {
    Bm,
    Smooth,
    PureArea,
    File,
}

/// One component of a smooth driver: `Σ_i poly[i] tⁱ + Σ amp·sin(freq·t + phase)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothComponent {
    #[serde(default)]
    pub poly: Vec<f64>,
    /// `[amp, freq, phase]` triples.
    #[serde(default)]
    pub sin: Vec<[f64; 3]>,
}

impl SmoothComponent {
    pub fn eval(&self, t: f64) -> f64 {
        let p = self.poly.iter().rev().fold(0.0, |acc, c| acc * t + c);
        p + self
            .sin
            .iter()
            .map(|[a, f, ph]| a * (f * t + ph).sin())
            .sum::<f64>()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverConfig {
    pub kind: DriverKind,
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default)]
    pub t0: f64,
    #[serde(default = "one_f")]
    pub t1: f64,
    #[serde(default = "default_points")]
    pub n_points: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Fine samples per grid step for `bm` and `smooth`.
    #[serde(default = "default_refinement")]
    pub refinement: usize,
    /// `smooth`: one entry per component.
    #[serde(default)]
    pub components: Vec<SmoothComponent>,
    /// `pure-area`: antisymmetric `dim × dim` matrix, row-major.
    #[serde(default)]
    pub area: Vec<f64>,
    /// `file`: a driver JSON document, or the first-level CSV with its
    /// second-level companion next to it.
    pub path: Option<PathBuf>,
}

fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}
fn default_points() -> usize {
    257
}
fn default_gamma() -> f64 {
    0.45
}
fn default_refinement() -> usize {
    16
}

impl DriverConfig {
    pub fn grid(&self) -> Result<TimeGrid, ConfigError> {
        TimeGrid::new(self.t0, self.t1, self.n_points).map_err(|e| invalid("driver", e.to_string()))
    }

    /// Build the driver. `seed` is the driver sub-stream seed; `base` resolves
    /// relative file paths.
    pub fn build(&self, seed: u64, base: &Path) -> anyhow::Result<RoughPath> {
        let p = match self.kind {
            DriverKind::Bm => {
                RoughPath::build_bm_lift(seed, self.grid()?, self.dim, self.refinement, self.gamma)?
            }
            DriverKind::Smooth => {
                if self.components.len() != self.dim {
                    return Err(invalid(
                        "driver",
                        format!(
                            "smooth driver has {} components, dim = {}",
                            self.components.len(),
                            self.dim
                        ),
                    )
                    .into());
                }
                let grid = self.grid()?;
                smooth_lift(&self.components, grid, self.refinement, self.gamma)?
            }
            DriverKind::PureArea => {
                RoughPath::pure_area_path(&self.area, self.dim, self.grid()?, self.gamma)
                    .map_err(|e| invalid("driver", e.to_string()))?
            }
            DriverKind::File => {
                let path = self
                    .path
                    .as_ref()
                    .ok_or_else(|| invalid("driver", "kind = \"file\" needs `path`"))?;
                formats::read_driver(&base.join(path), Some(self.gamma))?
            }
        };
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dim == 0 {
            return Err(invalid("driver", "dim must be positive"));
        }
        if !(self.gamma > 1.0 / 3.0 && self.gamma <= 0.5) {
            return Err(invalid(
                "driver",
                format!("gamma must lie in (1/3, 1/2], got {}", self.gamma),
            ));
        }
        if self.kind != DriverKind::File {
            self.grid()?;
        }
        match self.kind {
            DriverKind::Bm if self.refinement < 4 => {
                Err(invalid("driver", "refinement must be at least 4"))
            }
            DriverKind::Smooth if self.refinement == 0 => {
                Err(invalid("driver", "refinement must be positive"))
            }
            DriverKind::PureArea if self.area.len() != self.dim * self.dim => Err(invalid(
                "driver",
                format!("area must have {} entries", self.dim * self.dim),
            )),
            _ => Ok(()),
        }
    }
}

/// Canonical lift of a smooth driver sampled `refinement` times per grid step.
pub fn smooth_lift(
    components: &[SmoothComponent],
    grid: TimeGrid,
    refinement: usize,
    gamma: f64,
) -> anyhow::Result<RoughPath> {
    let fine = TimeGrid::new(grid.t0(), grid.t1(), (grid.len() - 1) * refinement + 1)?;
    let samples: Vec<f64> = (0..fine.len())
        .flat_map(|i| components.iter().map(move |c| c.eval(fine.time(i))))
        .collect();
    Ok(RoughPath::build_smooth_lift(
        &samples,
        components.len(),
        grid,
        gamma,
    )?)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preset {
    #[serde(default = "one_u32")]
    pub order: u32,
    pub mu: f64,
    pub n_modes: usize,
}

fn one_u32() -> u32 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub eigenvalues: Option<Vec<f64>>,
    pub preset: Option<Preset>,
    /// Dichotomy rates `[alpha, beta]`.
    pub gap: Option<[f64; 2]>,
}

impl OperatorConfig {
    pub fn build(&self) -> Result<SpectralOperator, ConfigError> {
        let err = |e: roughflow_core::Error| invalid("operator", e.to_string());
        let op = match (&self.eigenvalues, &self.preset) {
            (Some(ev), None) => SpectralOperator::new(ev.clone()).map_err(err)?,
            (None, Some(p)) => {
                SpectralOperator::preset_parabolic(p.order, p.mu, p.n_modes).map_err(err)?
            }
            _ => {
                return Err(invalid(
                    "operator",
                    "give exactly one of `eigenvalues` and `preset`",
                ))
            }
        };
        match self.gap {
            Some([a, b]) => op.with_gap(a, b).map_err(err),
            None => Ok(op),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub out: usize,
    /// Driver column (diffusion only).
    #[serde(default)]
    pub col: usize,
    pub input: usize,
    pub coeff: f64,
    pub map: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityConfig {
    #[serde(default)]
    pub drift: Vec<TermConfig>,
    #[serde(default)]
    pub diffusion: Vec<TermConfig>,
}

fn build_terms(
    section: &'static str,
    terms: &[TermConfig],
    modes: usize,
    cols: usize,
    drift: bool,
) -> Result<Nonlinearity, ConfigError> {
    let mut out = Vec::with_capacity(terms.len());
    for (i, t) in terms.iter().enumerate() {
        let map = ScalarMap::parse(&t.map)
            .ok_or_else(|| invalid(section, format!("term {i}: unknown map `{}`", t.map)))?;
        if drift && t.col != 0 {
            return Err(invalid(
                section,
                format!("term {i}: drift terms have no `col`"),
            ));
        }
        out.push(Term {
            out_mode: t.out,
            out_col: t.col,
            in_mode: t.input,
            coeff: t.coeff,
            map,
        });
    }
    Nonlinearity::terms(modes, cols, out).map_err(|e| invalid(section, e.to_string()))
}

impl NonlinearityConfig {
    pub fn build(
        &self,
        modes: usize,
        dim: usize,
    ) -> Result<(Nonlinearity, Nonlinearity), ConfigError> {
        let f = build_terms("nonlinearity", &self.drift, modes, 1, true)?;
        let g = build_terms("nonlinearity", &self.diffusion, modes, dim, false)?;
        Ok((f, g))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuessKind {
    #[default]
    BallCenter,
    Frozen,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default)]
    pub xi: Vec<f64>,
    #[serde(default = "one_f")]
    pub horizon: f64,
    pub eta: Option<f64>,
    pub picard_tol: Option<f64>,
    pub max_picard: Option<usize>,
    pub step_shrink: Option<f64>,
    pub contraction_limit: Option<f64>,
    #[serde(default)]
    pub initial_guess: GuessKind,
    /// Also write every local segment as a controlled path (values and derivatives).
    #[serde(default)]
    pub write_segments: bool,
}

impl SolverSection {
    pub fn solve_config(&self, gamma: f64) -> Result<SolveConfig, ConfigError> {
        let mut c = SolveConfig::for_gamma(gamma);
        if let Some(v) = self.eta {
            c.eta = v;
        }
        if let Some(v) = self.picard_tol {
            c.picard_tol = v;
        }
        if let Some(v) = self.max_picard {
            c.max_picard = v;
        }
        if let Some(v) = self.step_shrink {
            c.step_shrink = v;
        }
        if let Some(v) = self.contraction_limit {
            c.contraction_limit = v;
        }
        c.initial_guess = match self.initial_guess {
            GuessKind::BallCenter => InitialGuess::BallCenter,
            GuessKind::Frozen => InitialGuess::Frozen,
        };
        c.validate(gamma)
            .map_err(|e| invalid("solver", e.to_string()))?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldSection {
    /// Contraction budget `K`.
    pub k: f64,
    pub k_max: Option<usize>,
    pub delta: Option<f64>,
    pub lp_tol: Option<f64>,
    pub max_lp_iters: Option<usize>,
    #[serde(default = "one_f")]
    pub ball_radius: f64,
    #[serde(default = "default_axis")]
    pub n_per_axis: usize,
    /// Extra sample points drawn uniformly from the ball (mesh sub-stream).
    #[serde(default)]
    pub random_points: usize,
    #[serde(default = "yes")]
    pub enforce_gap: bool,
    #[serde(default = "yes")]
    pub check_assumptions: bool,
    /// Forward time for the invariance check; 0 disables it.
    #[serde(default)]
    pub invariance_time: f64,
    /// Start points of the invariance check, as fractions of the sampling radius
    /// along the first unstable axis.
    #[serde(default)]
    pub invariance_fractions: Vec<f64>,
}

fn default_axis() -> usize {
    9
}
fn yes() -> bool {
    true
}

impl ManifoldSection {
    pub fn lp_config(&self, op: &SpectralOperator) -> Result<LPConfig, ConfigError> {
        let (alpha, beta) = op
            .gap()
            .ok_or_else(|| invalid("operator", "manifold runs need `gap = [alpha, beta]`"))?;
        let mut c = LPConfig::new(alpha, beta, self.k);
        if let Some(v) = self.k_max {
            c.k_max = v;
        }
        if let Some(v) = self.delta {
            c.delta = v;
        }
        if let Some(v) = self.lp_tol {
            c.lp_tol = v;
        }
        if let Some(v) = self.max_lp_iters {
            c.max_lp_iters = v;
        }
        c.enforce_gap = self.enforce_gap;
        c.check_assumptions = self.check_assumptions;
        c.validate()
            .map_err(|e| invalid("manifold", e.to_string()))?;
        if self.n_per_axis == 0 {
            return Err(invalid("manifold", "n_per_axis must be positive"));
        }
        if !(self.invariance_time >= 0.0) {
            return Err(invalid("manifold", "invariance_time must be nonnegative"));
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    /// Extra driver file whose Chen defect joins the Chen criterion.
    pub driver_file: Option<PathBuf>,
    /// Hölder exponent attached to a CSV driver file.
    pub driver_gamma: Option<f64>,
    #[serde(default = "default_chen_seeds")]
    pub chen_seeds: usize,
}

fn default_chen_seeds() -> usize {
    100
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            driver_file: None,
            driver_gamma: None,
            chen_seeds: default_chen_seeds(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    #[serde(default = "default_probe_gammas")]
    pub gammas: Vec<f64>,
    #[serde(default = "default_probe_drivers")]
    pub drivers: Vec<DriverKind>,
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "default_probe_points")]
    pub n_points: usize,
    #[serde(default = "default_probe_slack")]
    pub slack: f64,
}

fn default_probe_gammas() -> Vec<f64> {
    vec![0.4, 0.5]
}
fn default_probe_drivers() -> Vec<DriverKind> {
    vec![DriverKind::Smooth, DriverKind::Bm]
}
fn default_probe_points() -> usize {
    4097
}
fn default_probe_slack() -> f64 {
    0.15
}

impl Default for ProbeSection {
    fn default() -> Self {
        Self {
            gammas: default_probe_gammas(),
            drivers: default_probe_drivers(),
            beta: 0.0,
            n_points: default_probe_points(),
            slack: default_probe_slack(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path)
    }

    pub fn driver(&self) -> Result<&DriverConfig, ConfigError> {
        let d = self.driver.as_ref().ok_or(ConfigError::Missing("driver"))?;
        d.validate()?;
        Ok(d)
    }

    pub fn operator(&self) -> Result<SpectralOperator, ConfigError> {
        self.operator
            .as_ref()
            .ok_or(ConfigError::Missing("operator"))?
            .build()
    }

    pub fn equation(&self, dim: usize) -> Result<Equation, ConfigError> {
        let op = self.operator()?;
        let (f, g) = self
            .nonlinearity
            .clone()
            .unwrap_or_default()
            .build(op.n_modes(), dim)?;
        Equation::new(op, f, g).map_err(|e| invalid("nonlinearity", e.to_string()))
    }

    /// Canonical serialisation, used for the manifest hash.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("configuration serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let text = "seed = 1\n[driver]\nkind = \"bm\"\nnpoints = 5\n";
        let err = RunConfig::from_toml(text, Path::new("x.toml"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("npoints"), "{err}");
        assert!(err.contains("line 4"), "{err}");
    }

    #[test]
    fn smooth_component_evaluates_polynomial_and_sines() {
        let c = SmoothComponent {
            poly: vec![1.0, 0.0, 2.0],
            sin: vec![[0.5, 2.0, 0.0]],
        };
        let t = 0.3f64;
        assert!((c.eval(t) - (1.0 + 2.0 * t * t + 0.5 * (2.0 * t).sin())).abs() < 1e-15);
    }

    #[test]
    fn operator_needs_exactly_one_source() {
        let op = OperatorConfig {
            eigenvalues: None,
            preset: None,
            gap: None,
        };
        assert!(op.build().is_err());
        let op = OperatorConfig {
            eigenvalues: Some(vec![1.0, -2.0]),
            preset: None,
            gap: Some([1.0, 1.0]),
        };
        assert_eq!(op.build().unwrap().n_unstable(), 1);
    }
}
