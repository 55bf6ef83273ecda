//! Scenario files: a TOML document describing the grid, the twist, the
//! initial metric, the flow and the analyses to run on it.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use twistflow::einstein::tke_reference;
use twistflow::flow::FlowMode;
use twistflow::geometry::{validate_class, MetricProfile, TwistProfile};
use twistflow::numerics::{Field, Grid};

/// Problems with a scenario that are detected before anything is run.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl From<twistflow::Error> for ConfigError {
    fn from(e: twistflow::Error) -> Self {
        match e {
            twistflow::Error::ClassMismatch { .. } => ConfigError(format!("ClassMismatch: {e}")),
            _ => ConfigError(e.to_string()),
        }
    }
}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Seeds every random choice made on behalf of the scenario.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub twist: TwistConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    pub flow: FlowConfig,
    #[serde(default)]
    pub analyses: AnalysesConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_max: f64,
    pub n_nodes: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { x_max: 10.0, n_nodes: 2001 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TwistKind {
    #[default]
    None,
    Sech2,
    CustomSamples,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwistConfig {
    #[serde(default)]
    pub kind: TwistKind,
    #[serde(default)]
    pub epsilon: f64,
    /// Density values at the grid nodes, for `custom-samples`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<f64>>,
    /// CSV file with an `a` column, for `custom-samples`; relative paths are
    /// resolved against the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    Tke,
    #[default]
    Fs,
    Perturbed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpConfig {
    pub amplitude: f64,
    #[serde(default)]
    pub center: f64,
    #[serde(default = "one")]
    pub width: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for BumpConfig {
    fn default() -> Self {
        Self { amplitude: 0.05, center: 0.0, width: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default)]
    pub kind: InitialKind,
    /// Multiplier `c` of the round profile `c sech² x`; defaults to the value
    /// `1 - A/2` that puts the metric in the class of the twist.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default)]
    pub bump: BumpConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeConfig {
    #[default]
    Normalized,
    Unnormalized,
}

impl From<ModeConfig> for FlowMode {
    fn from(m: ModeConfig) -> Self {
        match m {
            ModeConfig::Normalized => FlowMode::Normalized,
            ModeConfig::Unnormalized => FlowMode::Unnormalized,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    #[serde(default)]
    pub mode: ModeConfig,
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
}

fn default_dt() -> f64 {
    0.01
}

fn default_stride() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysesConfig {
    /// `μ(g, ½)` at every recorded sample.
    #[serde(default)]
    pub mu: bool,
    /// `μ(g(t_end), τ)` for each listed `τ`.
    #[serde(default)]
    pub entropy_taus: Vec<f64>,
    /// Path independence and flow-versus-path agreement of the Mabuchi energy.
    #[serde(default)]
    pub mabuchi_paths: bool,
    /// Bump amplitudes for the stability experiment around the soliton.
    #[serde(default)]
    pub stability_amplitudes: Vec<f64>,
    /// Pole-ball radii for the non-collapsing check.
    #[serde(default)]
    pub non_collapsing_radii: Vec<f64>,
    /// Gauge distance to the solved soliton at every sample, with rate fits.
    #[serde(default = "yes")]
    pub gauge_reference: bool,
    #[serde(default)]
    pub diameter_bound: bool,
}

fn yes() -> bool {
    true
}

impl Default for AnalysesConfig {
    fn default() -> Self {
        Self {
            mu: false,
            entropy_taus: Vec::new(),
            mabuchi_paths: false,
            stability_amplitudes: Vec::new(),
            non_collapsing_radii: Vec::new(),
            gauge_reference: true,
            diameter_bound: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    /// Write a snapshot every this many recorded samples (first and last
    /// samples are always written).
    #[serde(default = "default_snapshot_stride")]
    pub snapshot_stride: usize,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

fn default_snapshot_stride() -> usize {
    10
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: None, formats: default_formats(), snapshot_stride: default_snapshot_stride() }
    }
}

/// Scenarios shipped with the binary, addressable by name.
pub const BUNDLED: [(&str, &str); 2] = [
    ("fs_stationary", include_str!("../scenarios/fs_stationary.toml")),
    ("twisted_eps25_perturbed", include_str!("../scenarios/twisted_eps25_perturbed.toml")),
];

/// A parsed scenario plus the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub base_dir: PathBuf,
}

impl Scenario {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let config: ScenarioConfig = toml::from_str(text).map_err(|e| bad(format!("cannot parse scenario: {e}")))?;
        config.check_fields()?;
        Ok(Self { config, base_dir: base_dir.to_path_buf() })
    }

    /// Reads a scenario file, or a bundled scenario when `spec` names one
    /// and no such file exists.
    pub fn load(spec: &str) -> Result<Self, ConfigError> {
        let path = Path::new(spec);
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {spec}: {e}")))?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            return Self::parse(&text, &base);
        }
        match BUNDLED.iter().find(|(name, _)| *name == spec) {
            Some((_, text)) => Self::parse(text, Path::new(".")),
            None => Err(bad(format!("no scenario file or bundled scenario named {spec}"))),
        }
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        Ok(Grid::new(self.config.grid.x_max, self.config.grid.n_nodes)?)
    }

    pub fn twist(&self, grid: Grid) -> Result<TwistProfile, ConfigError> {
        let t = &self.config.twist;
        match t.kind {
            TwistKind::None => Ok(TwistProfile::zero(grid)),
            TwistKind::Sech2 => Ok(TwistProfile::sech2(grid, t.epsilon)?),
            TwistKind::CustomSamples => {
                let values = match (&t.samples, &t.samples_file) {
                    (Some(v), None) => v.clone(),
                    (None, Some(file)) => read_column(&self.base_dir.join(file), "a")?,
                    _ => return Err(bad("custom-samples twist needs exactly one of samples, samples_file")),
                };
                if values.len() != grid.n_nodes() {
                    return Err(bad(format!(
                        "custom twist has {} samples, grid has {} nodes",
                        values.len(),
                        grid.n_nodes()
                    )));
                }
                Ok(TwistProfile::new(Field::new(grid, values)?)?)
            }
        }
    }

    /// The initial metric, checked against the class of the twist.
    pub fn initial_metric(&self, twist: &TwistProfile) -> Result<MetricProfile, ConfigError> {
        let grid = *twist.a().grid();
        let init = &self.config.initial;
        let scale = init.scale.unwrap_or(1.0 - 0.5 * twist.mass());
        if !(scale > 0.0) {
            return Err(bad(format!("round profile scale {scale} is not positive (twist mass {})", twist.mass())));
        }
        let round = MetricProfile::scaled_fubini_study(grid, scale);
        let m = match init.kind {
            InitialKind::Fs => round,
            InitialKind::Tke => {
                validate_class(&round, twist)?;
                tke_reference(twist)?
            }
            InitialKind::Perturbed => {
                let b = init.bump;
                round.with_potential(&Field::from_fn(grid, |x| {
                    let s = (x - b.center) / b.width;
                    b.amplitude * (-s * s).exp()
                }))?
            }
        };
        validate_class(&m, twist)?;
        Ok(m)
    }

    /// Output directory: `$TWISTFLOW_OUT/<name>` when the variable is set,
    /// else the configured directory, else `twistflow-out/<name>`.
    pub fn output_dir(&self) -> PathBuf {
        if let Some(root) = std::env::var_os("TWISTFLOW_OUT") {
            return PathBuf::from(root).join(&self.config.name);
        }
        match &self.config.output.directory {
            Some(d) if d.is_absolute() => d.clone(),
            Some(d) => self.base_dir.join(d),
            None => PathBuf::from("twistflow-out").join(&self.config.name),
        }
    }
}

impl ScenarioConfig {
    fn check_fields(&self) -> Result<(), ConfigError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(bad(format!("{name} must be positive, got {v}")))
            }
        };
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(bad(format!("scenario name {:?} is not a plain directory name", self.name)));
        }
        positive("grid.x_max", self.grid.x_max)?;
        positive("flow.t_end", self.flow.t_end)?;
        positive("flow.dt", self.flow.dt)?;
        if self.flow.dt > 0.5 {
            return Err(bad(format!("flow.dt must not exceed 0.5, got {}", self.flow.dt)));
        }
        if self.flow.sample_stride == 0 || self.output.snapshot_stride == 0 {
            return Err(bad("sample_stride and snapshot_stride must be at least 1"));
        }
        if self.flow.mode == ModeConfig::Unnormalized && self.flow.t_end >= 0.5 {
            return Err(bad(format!("unnormalized flow becomes extinct at t = 1/2; t_end = {}", self.flow.t_end)));
        }
        if !(0.0..1.0).contains(&self.twist.epsilon) {
            return Err(bad(format!("twist.epsilon must lie in [0, 1), got {}", self.twist.epsilon)));
        }
        if self.twist.kind == TwistKind::Sech2 && self.twist.epsilon == 0.0 {
            return Err(bad("sech2 twist with epsilon = 0; use kind = \"none\""));
        }
        positive("initial.bump.width", self.initial.bump.width)?;
        if let Some(s) = self.initial.scale {
            positive("initial.scale", s)?;
        }
        for &tau in &self.analyses.entropy_taus {
            positive("analyses.entropy_taus", tau)?;
        }
        for &r in &self.analyses.non_collapsing_radii {
            positive("analyses.non_collapsing_radii", r)?;
        }
        for &a in &self.analyses.stability_amplitudes {
            positive("analyses.stability_amplitudes", a)?;
        }
        if self.flow.mode == ModeConfig::Unnormalized
            && (self.analyses.mu || self.analyses.mabuchi_paths || !self.analyses.stability_amplitudes.is_empty())
        {
            return Err(bad("mu, mabuchi_paths and stability analyses need the normalized flow"));
        }
        Ok(())
    }
}

/// One named column of a headed CSV file.
pub fn read_column(path: &Path, column: &str) -> Result<Vec<f64>, ConfigError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let idx = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| bad(format!("{} has no column {column}", path.display())))?;
    reader
        .records()
        .map(|r| {
            let r = r.map_err(|e| bad(e.to_string()))?;
            r[idx].trim().parse::<f64>().map_err(|e| bad(format!("{}: {e}", path.display())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(extra: &str) -> String {
        format!("name = \"t\"\n[flow]\nt_end = 1.0\n{extra}")
    }

    #[test]
    fn bundled_scenarios_parse_and_validate() {
        for (name, _) in BUNDLED {
            let s = Scenario::load(name).unwrap();
            let g = s.grid().unwrap();
            let t = s.twist(g).unwrap();
            s.initial_metric(&t).unwrap();
        }
    }

    #[test]
    fn defaults_fill_in() {
        let s = Scenario::parse(&minimal(""), Path::new(".")).unwrap();
        assert_eq!(s.config.grid, GridConfig::default());
        assert_eq!(s.config.flow.dt, 0.01);
        assert_eq!(s.config.output.formats, vec![Format::Csv, Format::Json]);
    }

    #[test]
    fn rejects_bad_fields() {
        for extra in ["dt = -0.1", "dt = 0.7", "sample_stride = 0", "mode = \"unnormalized\""] {
            let text = format!("name = \"t\"\n[flow]\nt_end = 1.0\n{extra}");
            assert!(Scenario::parse(&text, Path::new(".")).is_err(), "{extra}");
        }
        assert!(Scenario::parse("name = \"t\"\n[flow]\nt_end = 1.0\nbogus = 1", Path::new(".")).is_err());
    }

    #[test]
    fn class_mismatch_is_a_config_error() {
        let text = minimal("[twist]\nkind = \"sech2\"\nepsilon = 0.25\n[initial]\nkind = \"fs\"\nscale = 1.0\n");
        let s = Scenario::parse(&text, Path::new(".")).unwrap();
        let t = s.twist(s.grid().unwrap()).unwrap();
        let err = s.initial_metric(&t).unwrap_err();
        assert!(err.0.contains("class mismatch"), "{err}");
    }

    #[test]
    fn custom_samples_need_matching_length() {
        let text = minimal("[grid]\nx_max = 10.0\nn_nodes = 65\n[twist]\nkind = \"custom-samples\"\nsamples = [0.0, 0.1, 0.2]\n");
        let s = Scenario::parse(&text, Path::new(".")).unwrap();
        assert!(s.twist(s.grid().unwrap()).is_err());
    }
}
