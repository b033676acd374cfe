//! Versioned TOML run configuration and the built-in experiment presets.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::BoundModel;
use crate::beampattern::PatternMode;
use crate::detect::DetectorKind;
use crate::geometry::{ArrayConfig, GeometryError, LinkGeometry, RsLayout};
use crate::mapping::{Constellation, Family, MappingError, Scheme, SchemeConfig};
use crate::sim::{BoundConfig, OptimizerConfig, PointParams, SweepVar, TrialConfig};
use crate::snr_opt::OptMethod;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported schema_version {found} (expected {SCHEMA_VERSION})")]
    Schema { found: u32 },
    #[error("invalid value for `{field}`: {reason}")]
    Field { field: String, reason: String },
    #[error("unknown preset `{0}` (available: fig2..fig8)")]
    UnknownPreset(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, ConfigError>;

fn field(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.to_string(),
        reason: reason.into(),
    }
}

/// Rician factor in dB, or the string `"rayleigh"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KSetting {
    Db(f64),
    Named(String),
}

impl KSetting {
    fn resolve(&self, name: &str) -> Result<Option<f64>> {
        match self {
            KSetting::Db(v) if v.is_finite() => Ok(Some(*v)),
            KSetting::Db(v) => Err(field(name, format!("{v} is not finite"))),
            KSetting::Named(s) if s.eq_ignore_ascii_case("rayleigh") => Ok(None),
            KSetting::Named(s) => Err(field(name, format!("expected a number or \"rayleigh\", got \"{s}\""))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DetectorChoice {
    Ml,
    Cs,
    #[default]
    Both,
}

impl DetectorChoice {
    pub fn kinds(self) -> Vec<DetectorKind> {
        match self {
            DetectorChoice::Ml => vec![DetectorKind::Ml],
            DetectorChoice::Cs => vec![DetectorKind::Cs],
            DetectorChoice::Both => vec![DetectorKind::Ml, DetectorKind::Cs],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    /// IRS1 elements per side.
    pub irs1_side: usize,
    pub irs1_spacing_m: f64,
    pub carrier_hz: f64,
    /// Pitch between neighbouring IRS2 elements.
    pub irs2_spacing_m: f64,
    pub distance_m: f64,
    pub element_width_m: f64,
    /// Element pitch inside one Scheme-3 reflecting surface.
    pub rs_spacing_m: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            irs1_side: 100,
            irs1_spacing_m: 2.5e-3,
            carrier_hz: 60e9,
            irs2_spacing_m: 0.6,
            distance_m: 30.0,
            element_width_m: 0.4,
            rs_spacing_m: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModulationSection {
    pub scheme: Scheme,
    pub family: Family,
    pub order: usize,
    /// IRS2 elements (S1/S2) or reflecting surfaces (S3).
    pub n2: usize,
    pub n_t: usize,
    pub n3: usize,
    pub mode: PatternMode,
}

impl Default for ModulationSection {
    fn default() -> Self {
        Self {
            scheme: Scheme::S1,
            family: Family::Qam,
            order: 16,
            n2: 64,
            n_t: 2,
            n3: 4,
            mode: PatternMode::Physical,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub k_db: KSetting,
    pub n_r: usize,
    pub snr_db: f64,
    pub sigma2_sq: f64,
    pub los_seed: u64,
    pub estimation_error: bool,
    /// Error variance as a multiple of the receiver noise variance.
    pub estimation_error_scale: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            k_db: KSetting::Db(0.0),
            n_r: 16,
            snr_db: 10.0,
            sigma2_sq: 0.0,
            los_seed: 1,
            estimation_error: false,
            estimation_error_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    pub detector: DetectorChoice,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            detector: DetectorChoice::Both,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub trials: u64,
    pub seed: u64,
    pub sweep: SweepVar,
    pub grid: Vec<f64>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            trials: 10_000,
            seed: 1,
            sweep: SweepVar::SnrDb,
            grid: (0..=7).map(|i| f64::from(2 * i)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundSection {
    pub enabled: bool,
    pub model: BoundModel,
    pub pair_budget: u64,
    pub pair_samples: usize,
    pub n_samples: usize,
}

impl Default for BoundSection {
    fn default() -> Self {
        let d = BoundConfig::default();
        Self {
            enabled: false,
            model: d.model,
            pair_budget: d.pair_budget,
            pair_samples: d.pair_samples,
            n_samples: d.n_samples,
        }
    }
}

impl BoundSection {
    pub fn to_bound_config(&self) -> BoundConfig {
        BoundConfig {
            model: self.model,
            pair_budget: self.pair_budget,
            pair_samples: self.pair_samples,
            n_samples: self.n_samples,
        }
    }
}

/// Per-curve overrides of the base sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SeriesSection {
    pub label: String,
    pub scheme: Option<Scheme>,
    pub family: Option<Family>,
    pub order: Option<usize>,
    pub n2: Option<usize>,
    pub n_t: Option<usize>,
    pub n3: Option<usize>,
    pub mode: Option<PatternMode>,
    pub k_db: Option<KSetting>,
    pub n_r: Option<usize>,
    pub snr_db: Option<f64>,
    pub estimation_error: Option<bool>,
    pub method: Option<OptMethod>,
    pub detector: Option<DetectorChoice>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub geometry: GeometrySection,
    #[serde(default)]
    pub modulation: ModulationSection,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub detector: DetectorSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub bound: BoundSection,
    #[serde(default)]
    pub series: Vec<SeriesSection>,
}

fn default_name() -> String {
    "run".to_string()
}

/// One fully resolved curve of a run.
#[derive(Debug, Clone)]
pub struct ResolvedSeries {
    pub label: String,
    pub trial: TrialConfig,
}

fn perfect_square_side(n: usize, name: &str) -> Result<usize> {
    let side = (n as f64).sqrt().round() as usize;
    if side * side != n || side == 0 {
        return Err(field(name, format!("{n} is not a positive perfect square (square surfaces only)")));
    }
    Ok(side)
}

/// Square link for `n2` targets; Scheme 3 groups `n3` elements per target.
pub fn link_for(g: &GeometrySection, scheme: Scheme, n2: usize, n3: usize) -> Result<LinkGeometry> {
    let irs1 = ArrayConfig::new(g.irs1_side, g.irs1_side, g.irs1_spacing_m, g.carrier_hz);
    let groups = perfect_square_side(n2, "n2")?;
    let (rs, pitch) = if scheme == Scheme::S3 {
        let rs_side = perfect_square_side(n3, "n3")?;
        let rs = RsLayout {
            n_h: rs_side,
            n_w: rs_side,
            spacing: g.rs_spacing_m,
        };
        (rs, g.irs2_spacing_m * rs_side as f64)
    } else {
        (RsLayout::single(), g.irs2_spacing_m)
    };
    let irs2 = ArrayConfig::new(groups, groups, pitch, g.carrier_hz).with_center([0.0, g.distance_m, 0.0]);
    Ok(LinkGeometry::new(irs1, irs2, rs, g.element_width_m)?)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Schema {
                found: cfg.schema_version,
            });
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = preset_text(name).ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))?;
        Self::from_toml(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    fn check(&self) -> Result<()> {
        if self.sim.trials == 0 {
            return Err(field("sim.trials", "must be >= 1"));
        }
        if self.sim.grid.is_empty() {
            return Err(field("sim.grid", "must not be empty"));
        }
        if self.sim.grid.iter().any(|v| !v.is_finite()) {
            return Err(field("sim.grid", "values must be finite"));
        }
        if !(self.optimizer.tol > 0.0) || self.optimizer.max_iter == 0 {
            return Err(field("optimizer", "tol must be > 0 and max_iter >= 1"));
        }
        if !(self.channel.estimation_error_scale >= 0.0) {
            return Err(field("channel.estimation_error_scale", "must be >= 0"));
        }
        let labels: Vec<&str> = self.series.iter().map(|s| s.label.as_str()).collect();
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() {
                return Err(field(&format!("series[{i}].label"), "must not be empty"));
            }
            if labels[..i].contains(l) {
                return Err(field(&format!("series[{i}].label"), format!("duplicate label `{l}`")));
            }
        }
        self.resolve().map(|_| ())
    }

    /// Expands the base sections and the series overrides into trial
    /// configurations. A config without series yields one curve.
    pub fn resolve(&self) -> Result<Vec<ResolvedSeries>> {
        let base = SeriesSection {
            label: self.name.clone(),
            ..SeriesSection::default()
        };
        let series: Vec<&SeriesSection> = if self.series.is_empty() { vec![&base] } else { self.series.iter().collect() };
        series.into_iter().map(|s| self.resolve_one(s)).collect()
    }

    fn resolve_one(&self, s: &SeriesSection) -> Result<ResolvedSeries> {
        let m = &self.modulation;
        let scheme = s.scheme.unwrap_or(m.scheme);
        let family = s.family.unwrap_or(m.family);
        let order = s.order.unwrap_or(m.order);
        let n2 = s.n2.unwrap_or(m.n2);
        let constellation = Constellation::new(family, order)?;
        let scheme_cfg = match scheme {
            Scheme::S1 => SchemeConfig::s1(n2, constellation),
            Scheme::S2 => SchemeConfig::s2(n2, s.n_t.unwrap_or(m.n_t), constellation),
            Scheme::S3 => SchemeConfig::s3(n2, s.n3.unwrap_or(m.n3), constellation),
        };
        scheme_cfg.validate()?;
        let link = link_for(&self.geometry, scheme, n2, scheme_cfg.n3)?;
        let c = &self.channel;
        let k_db = s.k_db.as_ref().unwrap_or(&c.k_db).resolve("k_db")?;
        let n_r = s.n_r.unwrap_or(c.n_r);
        if n_r == 0 {
            return Err(field("n_r", "must be >= 1"));
        }
        let estimation = s.estimation_error.unwrap_or(c.estimation_error);
        let mut optimizer = self.optimizer;
        if let Some(method) = s.method {
            optimizer.method = method;
        }
        let trial = TrialConfig {
            scheme: scheme_cfg,
            link,
            mode: s.mode.unwrap_or(m.mode),
            point: PointParams {
                n_r,
                k_db,
                snr_db: s.snr_db.unwrap_or(c.snr_db),
                sigma2_sq: c.sigma2_sq,
                estimation_error: estimation.then_some(c.estimation_error_scale),
                los_seed: c.los_seed,
            },
            detectors: s.detector.unwrap_or(self.detector.detector).kinds(),
            optimizer,
            trials: self.sim.trials,
            master_seed: self.sim.seed,
        };
        trial.validate().map_err(|e| field("series", e.to_string()))?;
        Ok(ResolvedSeries {
            label: s.label.clone(),
            trial,
        })
    }
}

pub const PRESET_NAMES: [&str; 7] = ["fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8"];

pub fn preset_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig2" => FIG2,
        "fig3" => FIG3,
        "fig4" => FIG4,
        "fig5" => FIG5,
        "fig6" => FIG6,
        "fig7" => FIG7,
        "fig8" => FIG8,
        _ => return None,
    })
}

const FIG2: &str = r#"
schema_version = 1
name = "fig2"

[modulation]
scheme = "s1"
order = 16
n2 = 64

[detector]
detector = "both"

[sim]
trials = 10000
sweep = "snr_db"
grid = [0, 3, 6, 9, 12, 15, 18, 21, 24, 27, 30]

[[series]]
label = "rayleigh"
k_db = "rayleigh"

[[series]]
label = "k0db"
k_db = 0

[[series]]
label = "k10db"
k_db = 10
"#;

const FIG3: &str = r#"
schema_version = 1
name = "fig3"

[modulation]
scheme = "s1"
order = 16
n2 = 64

[sim]
trials = 10000
sweep = "k_db"
grid = [-10, -5, 0, 5, 10, 15, 20]

[[series]]
label = "snr10db"
snr_db = 10

[[series]]
label = "snr20db"
snr_db = 20
"#;

const FIG4: &str = r#"
schema_version = 1
name = "fig4"

[modulation]
scheme = "s1"
order = 16
n2 = 64

[detector]
detector = "ml"

[sim]
trials = 10000
sweep = "snr_db"
grid = [0, 2, 4, 6, 8, 10, 12, 14]

[bound]
enabled = true

[[series]]
label = "k0db"
k_db = 0

[[series]]
label = "k10db"
k_db = 10
"#;

const FIG5: &str = r#"
schema_version = 1
name = "fig5"

[modulation]
scheme = "s1"
order = 16

[channel]
k_db = "rayleigh"
snr_db = 20

[detector]
detector = "cs"

[sim]
trials = 10000
sweep = "n_r"
grid = [4, 8, 12, 16, 24, 32]

[[series]]
label = "n2_16"
n2 = 16

[[series]]
label = "n2_64"
n2 = 64
"#;

const FIG6: &str = r#"
schema_version = 1
name = "fig6"

[modulation]
order = 16
n2 = 64

[channel]
k_db = 0

[detector]
detector = "ml"

[sim]
trials = 10000
sweep = "snr_db"
grid = [0, 2, 4, 6, 8, 10, 12, 14]

[[series]]
label = "s1"
scheme = "s1"

[[series]]
label = "s2"
scheme = "s2"
n_t = 2

[[series]]
label = "s3_sol1"
scheme = "s3"
n2 = 16
n3 = 4
method = "sol1"

[[series]]
label = "s3_sol2"
scheme = "s3"
n2 = 16
n3 = 4
method = "sol2"

[[series]]
label = "s3_exact"
scheme = "s3"
n2 = 16
n3 = 4
method = "exact"
"#;

const FIG7: &str = r#"
schema_version = 1
name = "fig7"

[modulation]
scheme = "s2"
order = 16
n2 = 64

[channel]
k_db = 0

[detector]
detector = "ml"

[sim]
trials = 10000
sweep = "snr_db"
grid = [0, 2, 4, 6, 8, 10, 12, 14]

[[series]]
label = "nt1"
n_t = 1

[[series]]
label = "nt2"
n_t = 2

[[series]]
label = "nt3"
n_t = 3
"#;

const FIG8: &str = r#"
schema_version = 1
name = "fig8"

[modulation]
order = 16
n2 = 64

[channel]
k_db = 0
estimation_error_scale = 1.0

[detector]
detector = "ml"

[sim]
trials = 10000
sweep = "snr_db"
grid = [0, 2, 4, 6, 8, 10, 12, 14, 16, 18]

[[series]]
label = "s1_perfect"
scheme = "s1"

[[series]]
label = "s1_estimated"
scheme = "s1"
estimation_error = true

[[series]]
label = "s2_perfect"
scheme = "s2"

[[series]]
label = "s2_estimated"
scheme = "s2"
estimation_error = true

[[series]]
label = "s3_perfect"
scheme = "s3"
n2 = 16
n3 = 4

[[series]]
label = "s3_estimated"
scheme = "s3"
n2 = 16
n3 = 4
estimation_error = true
"#;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::validate_design;
    use crate::mapping::bpcu;

    #[test]
    fn presets_parse_and_resolve() {
        for name in PRESET_NAMES {
            let cfg = RunConfig::preset(name).unwrap();
            assert_eq!(cfg.name, name);
            assert!(!cfg.resolve().unwrap().is_empty());
        }
        assert!(matches!(RunConfig::preset("fig9"), Err(ConfigError::UnknownPreset(_))));
    }

    #[test]
    fn fig6_schemes_have_reference_rates() {
        let cfg = RunConfig::preset("fig6").unwrap();
        let rates: Vec<u32> = cfg.resolve().unwrap().iter().map(|s| bpcu(&s.trial.scheme)).collect();
        assert_eq!(rates, vec![10, 14, 8, 8, 8]);
    }

    #[test]
    fn default_geometry_passes_design_rules() {
        for scheme in [Scheme::S1, Scheme::S3] {
            let n3 = if scheme == Scheme::S3 { 4 } else { 1 };
            let n2 = if scheme == Scheme::S3 { 16 } else { 64 };
            let link = link_for(&GeometrySection::default(), scheme, n2, n3).unwrap();
            assert!(validate_design(&link).iter().all(|r| !r.is_failure()), "{scheme:?}");
        }
    }

    #[test]
    fn round_trip_and_hash() {
        let cfg = RunConfig::preset("fig4").unwrap();
        let again = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
        assert_ne!(cfg.hash(), RunConfig::preset("fig2").unwrap().hash());
    }

    #[test]
    fn errors_name_the_field() {
        let e = RunConfig::from_toml("schema_version = 1\n[channel]\nn_rr = 3\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("n_rr") && msg.contains("line 3"), "{msg}");
        let e = RunConfig::from_toml("schema_version = 2\n").unwrap_err();
        assert!(matches!(e, ConfigError::Schema { found: 2 }));
        let e = RunConfig::from_toml("schema_version = 1\n[channel]\nk_db = \"ricean\"\n").unwrap_err();
        assert!(e.to_string().contains("k_db"));
        let e = RunConfig::from_toml("schema_version = 1\n[sim]\ngrid = []\n").unwrap_err();
        assert!(e.to_string().contains("sim.grid"));
        let e = RunConfig::from_toml("schema_version = 1\n[modulation]\nn2 = 60\n").unwrap_err();
        assert!(e.to_string().contains("n2"));
    }

    #[test]
    fn rayleigh_and_overrides() {
        let text = r#"
schema_version = 1
[channel]
k_db = "rayleigh"
[[series]]
label = "a"
[[series]]
label = "b"
k_db = 7
n_r = 4
estimation_error = true
"#;
        let r = RunConfig::from_toml(text).unwrap().resolve().unwrap();
        assert_eq!(r[0].trial.point.k_db, None);
        assert_eq!(r[1].trial.point.k_db, Some(7.0));
        assert_eq!(r[1].trial.point.n_r, 4);
        assert_eq!(r[1].trial.point.estimation_error, Some(1.0));
        assert_eq!(r[0].trial.point.estimation_error, None);
    }
}
