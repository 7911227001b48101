//! Run configuration files.
//!
//! ```toml
//! t_end = 0.02
//! eps = 0.015625
//!
//! [grid]
//! d = 2
//! n = 256
//!
//! [anisotropy]
//! kind = "euclidean"
//!
//! [scenario]
//! kind = "wulff"
//! center = [0.5, 0.5]
//! r0 = 0.3
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::anisotropy::{Anisotropy, AnisotropySpec, Mobility};
use crate::error::{Error, Result};
use crate::field::{Grid, PeriodicField};
use crate::potential::{profile, well_by_name, DoubleWell};
use crate::solver::{initial_slab, initial_wulff, Model, SolverConfig};

pub const SAME_AS_SIGMA: &str = "same-as-sigma";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub anisotropy: AnisotropySpec,
    #[serde(default)]
    pub mobility: MobilitySpec,
    #[serde(default = "default_well")]
    pub well: String,
    pub scenario: Scenario,
    pub grid: GridSpec,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub eps_list: Option<Vec<f64>>,
    #[serde(default = "default_theta")]
    pub theta_h: f64,
    pub t_end: f64,
    #[serde(default)]
    pub snapshot_every: Option<usize>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub diagnostics: DiagnosticsToggles,
    #[serde(default)]
    pub calibration: CalibrationToggle,
    /// Directory of the file the config was read from; relative paths
    /// resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_well() -> String {
    "standard36".to_string()
}

fn default_theta() -> f64 {
    SolverConfig::DEFAULT_THETA
}

fn default_length() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

fn default_sample_n() -> usize {
    64
}

/// `"same-as-sigma"` or an anisotropy table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MobilitySpec {
    Named(String),
    Spec(AnisotropySpec),
}

impl Default for MobilitySpec {
    fn default() -> Self {
        MobilitySpec::Named(SAME_AS_SIGMA.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Scenario {
    /// `Θ((r0 − σ°(x − center))/ε)`.
    Wulff { center: Vec<f64>, r0: f64 },
    /// Periodic slab with integer lattice normal.
    Planar { normal: Vec<i32> },
    /// Initial data read from a snapshot.
    Snapshot { path: PathBuf },
    Constant { value: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub d: usize,
    pub n: usize,
    #[serde(rename = "L", alias = "length", default = "default_length")]
    pub length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsToggles {
    /// Evaluate diagnostics every this many steps (0 disables them).
    #[serde(default)]
    pub every: usize,
    #[serde(default = "default_true")]
    pub velocity: bool,
    #[serde(default = "default_true")]
    pub stress: bool,
    /// Write the extracted interface at each diagnostic step.
    #[serde(default)]
    pub interface_dumps: bool,
}

impl Default for DiagnosticsToggles {
    fn default() -> Self {
        Self {
            every: 0,
            velocity: true,
            stress: true,
            interface_dumps: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationToggle {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "default_sample_n")]
    pub sample_n: usize,
    #[serde(default)]
    pub times: Option<Vec<f64>>,
}

impl Default for CalibrationToggle {
    fn default() -> Self {
        Self {
            enabled: false,
            delta: None,
            sample_n: default_sample_n(),
            times: None,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Parses and validates; parse errors carry line, column and key.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_default()
    }

    fn validate(&self) -> Result<()> {
        let d = self.grid.d;
        if !(1..=3).contains(&d) {
            return Err(Error::config(format!("grid.d must be 1, 2 or 3, got {d}")));
        }
        if self.grid.n < 4 {
            return Err(Error::config("grid.n must be at least 4"));
        }
        if !(self.grid.length > 0.0) {
            return Err(Error::config("grid.L must be positive"));
        }
        match (&self.eps, &self.eps_list) {
            (Some(_), Some(_)) => return Err(Error::config("give either `eps` or `eps_list`, not both")),
            (None, None) => return Err(Error::config("missing `eps` or `eps_list`")),
            (_, Some(l)) if l.is_empty() => return Err(Error::config("`eps_list` is empty")),
            _ => {}
        }
        if self.eps_values().iter().any(|e| !(*e > 0.0)) {
            return Err(Error::config("epsilon values must be positive"));
        }
        if let MobilitySpec::Named(name) = &self.mobility {
            if name != SAME_AS_SIGMA {
                return Err(Error::config(format!("mobility: expected \"{SAME_AS_SIGMA}\" or a table, got `{name}`")));
            }
        }
        match &self.scenario {
            Scenario::Wulff { center, r0 } => {
                if center.len() != d {
                    return Err(Error::config(format!("scenario.center has {} entries, grid.d = {d}", center.len())));
                }
                if !(*r0 > 0.0) {
                    return Err(Error::config("scenario.r0 must be positive"));
                }
            }
            Scenario::Planar { normal } => {
                if normal.len() != d || normal.iter().all(|m| *m == 0) {
                    return Err(Error::config("scenario.normal must be a nonzero integer vector of length grid.d"));
                }
            }
            Scenario::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::config("scenario.value must be finite"));
                }
            }
            Scenario::Snapshot { .. } => {}
        }
        if self.calibration.sample_n < 4 {
            return Err(Error::config("calibration.sample_n must be at least 4"));
        }
        // Build once so dimension mismatches surface as config errors.
        self.model().map_err(as_config)?;
        Ok(())
    }

    /// `[eps]` or the sweep list.
    pub fn eps_values(&self) -> Vec<f64> {
        match (&self.eps, &self.eps_list) {
            (Some(e), _) => vec![*e],
            (_, Some(l)) => l.clone(),
            _ => Vec::new(),
        }
    }

    pub fn sigma(&self) -> Result<Anisotropy> {
        Anisotropy::from_spec(&self.anisotropy, self.grid.d)
    }

    pub fn mobility_is_sigma(&self) -> bool {
        match &self.mobility {
            MobilitySpec::Named(_) => true,
            MobilitySpec::Spec(s) => *s == self.anisotropy,
        }
    }

    pub fn well(&self) -> Result<DoubleWell> {
        well_by_name(&self.well)
    }

    pub fn model(&self) -> Result<Model> {
        let sigma = self.sigma()?;
        let mobility = match &self.mobility {
            MobilitySpec::Named(_) => Mobility::from_anisotropy(sigma.clone()),
            MobilitySpec::Spec(s) => Mobility::from_spec(s, self.grid.d)?,
        };
        Model::new(sigma, mobility, self.well()?)
    }

    pub fn grid_with(&self, n: usize) -> Result<Grid> {
        Grid::new(self.grid.d, n, self.grid.length)
    }

    pub fn output_dir(&self, cli_out: Option<&Path>) -> PathBuf {
        match (cli_out, &self.output_dir) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(p)) => self.resolve(p),
            (None, None) => PathBuf::from("out"),
        }
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Initial data for `eps` on `grid`.
    pub fn initial_data(&self, model: &Model, eps: f64, grid: &Grid) -> Result<PeriodicField> {
        let prof = profile(&model.well);
        match &self.scenario {
            Scenario::Wulff { center, r0 } => initial_wulff(&model.sigma, &prof, center, *r0, eps, grid),
            Scenario::Planar { normal } => initial_slab(&model.sigma, &prof, normal, eps, grid),
            Scenario::Constant { value } => Ok(PeriodicField::constant(*grid, *value)),
            Scenario::Snapshot { path } => {
                let (u, _) = PeriodicField::read_snapshot(&self.resolve(path))?;
                if u.grid() != grid {
                    return Err(Error::config(format!(
                        "snapshot grid {:?} differs from the configured grid {:?}",
                        u.grid(),
                        grid
                    )));
                }
                Ok(u)
            }
        }
    }

    /// Center used for radius extraction and the radial test field.
    pub fn center(&self) -> [f64; 3] {
        let mut c = [0.5 * self.grid.length; 3];
        if let Scenario::Wulff { center, .. } = &self.scenario {
            c[..center.len()].copy_from_slice(center);
        }
        for v in c.iter_mut().skip(self.grid.d) {
            *v = 0.0;
        }
        c
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Input(m) | Error::Domain(m) => Error::Config(m),
        Error::Invariant { message, .. } => Error::Config(message),
        other => other,
    }
}
