//! The pipeline configuration file (TOML).

use std::fs;
use std::path::{Path, PathBuf};

use mmspot::eval::DEFAULT_SWEEP;
use mmspot::features::{Descriptor, FeatureConfig, PlaneSelection};
use mmspot::geometry::{AlignFill, RegionAtlas, DEFAULT_UPSAMPLING, REGION_COUNT};
use mmspot::spotting::SpotConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, Stage, StageExt};

/// On-disk layout the input folder follows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Adapter {
    /// The layout written by `mmspot synth`.
    #[default]
    Synth,
    SammLayout,
    Casme2Layout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignConfig {
    pub enabled: bool,
    /// Upsampling factor k; registration precision is 1/k px.
    pub upsampling: usize,
    pub fill: AlignFill,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            upsampling: DEFAULT_UPSAMPLING,
            fill: AlignFill::Edge,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub adapter: Adapter,
    /// Region atlas file; the built-in atlas when unset.
    pub atlas: Option<PathBuf>,
    /// Frame rate for layouts without manifests (200 when unset).
    pub fps: Option<f64>,
    /// Neutral frames kept around each annotated movement when cropping
    /// clips out of long recordings (200 for SAMM, 50 for CASME II when unset).
    pub neutral_pad: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// R values of the ROC sweep.
    pub rs: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            rs: DEFAULT_SWEEP.to_vec(),
        }
    }
}

/// Cartesian grid for `mmspot sweep`. `planes` may only be empty when every
/// descriptor is HOOF; an empty `rs` falls back to `[eval] rs`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub descriptors: Vec<Descriptor>,
    pub planes: Vec<PlaneSelection>,
    pub rs: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub spotting: SpotConfig,
    pub features: FeatureConfig,
    pub align: AlignConfig,
    pub dataset: DatasetConfig,
    pub eval: EvalConfig,
    pub sweep: SweepGrid,
}

fn check_rs(rs: &[usize], what: &str) -> CliResult<()> {
    if rs.is_empty() {
        return Err(CliError::Config(format!("{what} is empty")));
    }
    if let Some(r) = rs.iter().find(|r| !(1..=REGION_COUNT).contains(r)) {
        return Err(CliError::Config(format!(
            "{what} contains R={r}; R must be in 1..={REGION_COUNT}"
        )));
    }
    Ok(())
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        let as_config = |e: mmspot::Error| CliError::Config(e.to_string().replace("config error: ", ""));
        self.spotting.validate().map_err(as_config)?;
        self.features.validate().map_err(as_config)?;
        if self.align.upsampling < 1 {
            return Err(CliError::Config("align.upsampling must be >= 1".into()));
        }
        if let Some(fps) = self.dataset.fps {
            if !(fps > 0.0 && fps.is_finite()) {
                return Err(CliError::Config(format!("dataset.fps must be > 0, got {fps}")));
            }
        }
        check_rs(&self.eval.rs, "eval.rs")?;
        if !self.sweep.rs.is_empty() {
            check_rs(&self.sweep.rs, "sweep.rs")?;
        }
        Ok(())
    }

    pub fn atlas(&self) -> CliResult<RegionAtlas> {
        match &self.dataset.atlas {
            Some(path) => RegionAtlas::load(path).stage(Stage::Config, path.display()),
            None => Ok(RegionAtlas::builtin()),
        }
    }

    /// Key/value pairs echoed in report headers.
    pub fn summary(&self, atlas: &RegionAtlas) -> Vec<(String, String)> {
        let s = &self.spotting;
        let f = &self.features;
        let peaks = s.peak_params().ok();
        let mut out = vec![
            ("N".to_owned(), s.n.to_string()),
            ("R".to_owned(), s.r.to_string()),
            ("a".to_owned(), s.a.to_string()),
            ("micro_max_ms".to_owned(), s.micro_max_ms.to_string()),
            (
                "peaks".to_owned(),
                peaks.map_or_else(String::new, |p| {
                    format!(
                        "smooth_width={} slope_threshold={} min_separation={}",
                        p.smooth_width, p.slope_threshold, p.min_separation
                    )
                }),
            ),
            ("B".to_owned(), f.bins.to_string()),
            (
                "denoise".to_owned(),
                format!("{:?} sigma={}", f.denoise.method, f.denoise.sigma),
            ),
            (
                "align".to_owned(),
                if self.align.enabled {
                    format!("k={} fill={:?}", self.align.upsampling, self.align.fill)
                } else {
                    "off".to_owned()
                },
            ),
            ("adapter".to_owned(), format!("{:?}", self.dataset.adapter)),
            ("atlas".to_owned(), format!("{} v{}", atlas.name, atlas.version)),
        ];
        out.push((
            "R sweep".to_owned(),
            self.eval
                .rs
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(","),
        ));
        out
    }
}
