//! TOML scene and run configuration.
//!
//! Scene files give lengths in metres, powers in watts and wavelengths in
//! nanometres. Relative paths resolve against the directory of the file
//! that names them.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::atomic::{read_species, AtomSpecies};
use crate::constants::BOLTZMANN;
use crate::error::{Error, Result};
use crate::fit::EnvelopeFamily;
use crate::geometry::{CompensationBeam, GaussianBeam, MicrolensArray, Site, SiteIndex, TrapArrayScene, TrapBeam};
use crate::spectroscopy::HeatingModel;
use crate::trap::EnergyCutoff;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    /// Species file.
    pub species: PathBuf,
    pub trap_beam: TrapBeamConfig,
    pub compensation_beam: CompensationBeamConfig,
    pub array: ArrayConfig,
    pub sites: SitesConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapBeamConfig {
    pub power_w: f64,
    pub waist_m: f64,
    pub center_m: [f64; 2],
    pub wavelength_nm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompensationBeamConfig {
    #[serde(default)]
    pub power_w: f64,
    /// Defaults to the trap beam waist.
    pub waist_m: Option<f64>,
    /// Defaults to the trap beam centre.
    pub center_m: Option<[f64; 2]>,
    pub wavelength_nm: f64,
    #[serde(default)]
    pub displacement_m: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    pub pitch_m: f64,
    pub aperture_radius_m: f64,
    pub rows: usize,
    pub cols: usize,
    pub demagnification: f64,
    pub trap_waist_m: f64,
    #[serde(default = "unity")]
    pub transmission: f64,
}

fn unity() -> f64 {
    1.0
}

/// Occupied sites: explicit labels plus rectangular blocks.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SitesConfig {
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(default)]
    pub blocks: Vec<SiteBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteBlock {
    pub first: String,
    pub last: String,
}

impl SitesConfig {
    pub fn expand(&self) -> Result<Vec<SiteIndex>> {
        let mut out: Vec<SiteIndex> = Vec::new();
        for b in &self.blocks {
            let a: SiteIndex = b.first.parse()?;
            let z: SiteIndex = b.last.parse()?;
            for row in a.row.min(z.row)..=a.row.max(z.row) {
                for col in a.col.min(z.col)..=a.col.max(z.col) {
                    out.push(SiteIndex::new(row, col));
                }
            }
        }
        for l in &self.labels {
            out.push(l.parse()?);
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn parent(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

impl SceneConfig {
    pub fn build(&self, species: Arc<AtomSpecies>) -> Result<TrapArrayScene> {
        let t = &self.trap_beam;
        let c = &self.compensation_beam;
        let a = &self.array;
        let trap = TrapBeam {
            beam: GaussianBeam::new(t.power_w, t.waist_m, t.center_m)?,
            wavelength: t.wavelength_nm * 1e-9,
        };
        let compensation = CompensationBeam {
            beam: GaussianBeam::new(
                c.power_w,
                c.waist_m.unwrap_or(t.waist_m),
                c.center_m.unwrap_or(t.center_m),
            )?,
            wavelength: c.wavelength_nm * 1e-9,
            displacement: c.displacement_m,
        };
        let array = MicrolensArray {
            pitch: a.pitch_m,
            aperture_radius: a.aperture_radius_m,
            rows: a.rows,
            cols: a.cols,
            demagnification: a.demagnification,
            trap_waist: a.trap_waist_m,
            transmission: a.transmission,
        };
        let sites = self.sites.expand()?.into_iter().map(Site::new).collect();
        TrapArrayScene::new(species, trap, compensation, array, sites)
    }
}

/// A scene with the texts it was built from.
#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub scene: TrapArrayScene,
    pub config: SceneConfig,
    pub path: PathBuf,
    pub species_path: PathBuf,
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<LoadedScene> {
    let path = path.as_ref();
    let config: SceneConfig = toml::from_str(&read_text(path)?)?;
    let species_path = resolve(&parent(path), &config.species);
    let species = read_species(&species_path)?;
    let scene = config.build(Arc::new(species))?;
    Ok(LoadedScene {
        scene,
        config,
        path: path.to_path_buf(),
        species_path,
    })
}

/// Compensation power selection.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum CompensationMode {
    Off,
    /// Minimise the array spread.
    #[default]
    Optimized,
    /// Fixed power (W).
    Power(f64),
}

impl FromStr for CompensationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "off" => Ok(Self::Off),
            "on" => Ok(Self::Optimized),
            other => {
                let value = other
                    .strip_prefix("power=")
                    .ok_or_else(|| Error::Config(format!("compensation must be on, off or power=<W>, got `{other}`")))?;
                let p: f64 = value
                    .parse()
                    .map_err(|_| Error::Config(format!("bad compensation power `{value}`")))?;
                if !(p >= 0.0 && p.is_finite()) {
                    return Err(Error::Config(format!("compensation power must be >= 0, got {p}")));
                }
                Ok(Self::Power(p))
            }
        }
    }
}

impl fmt::Display for CompensationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Off => f.write_str("off"),
            Self::Optimized => f.write_str("on"),
            Self::Power(p) => write!(f, "power={p}"),
        }
    }
}

impl Serialize for CompensationMode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CompensationMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Evolution window of one sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub coupling_detuning_hz: f64,
    pub t_max_s: f64,
    pub points: usize,
}

impl WindowConfig {
    fn validate(&self, name: &str) -> Result<()> {
        if !(self.t_max_s > 0.0 && self.t_max_s.is_finite()) || self.points < 2 {
            return Err(Error::Config(format!("{name}: need t_max_s > 0 and at least 2 points")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub temperature_k: f64,
    pub atoms: usize,
    #[serde(default = "default_cutoff")]
    pub cutoff: EnergyCutoff,
}

fn default_cutoff() -> EnergyCutoff {
    EnergyCutoff::Truncated
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RamseyConfig {
    #[serde(default = "thermal_family")]
    pub envelope: EnvelopeFamily,
    pub uncompensated: WindowConfig,
    pub compensated: WindowConfig,
}

fn thermal_family() -> EnvelopeFamily {
    EnvelopeFamily::Thermal
}

fn stretched_family() -> EnvelopeFamily {
    EnvelopeFamily::StretchedExponential
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EchoConfig {
    #[serde(default = "stretched_family")]
    pub envelope: EnvelopeFamily,
    pub site: String,
    #[serde(default = "off")]
    pub compensation: CompensationMode,
    pub window: WindowConfig,
}

fn off() -> CompensationMode {
    CompensationMode::Off
}

/// Heating in temperature units: K/s and K.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatingConfig {
    #[serde(default)]
    pub drift_k_per_s: f64,
    #[serde(default)]
    pub jump_rate_per_s: f64,
    #[serde(default)]
    pub jump_energy_k: f64,
}

impl HeatingConfig {
    pub fn model(&self) -> HeatingModel {
        HeatingModel {
            drift_rate: self.drift_k_per_s * BOLTZMANN,
            jump_rate: self.jump_rate_per_s,
            jump_energy: self.jump_energy_k * BOLTZMANN,
        }
    }
}

/// Targets for `validate --calibrate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub site: String,
    pub ramsey_decay_s: f64,
    pub echo_decay_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scene: PathBuf,
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub magnetic_field_t: f64,
    #[serde(default)]
    pub compensation: CompensationMode,
    /// Sites for ramsey; empty means every occupied site.
    #[serde(default)]
    pub sites: Vec<String>,
    pub ensemble: EnsembleConfig,
    pub ramsey: RamseyConfig,
    pub echo: EchoConfig,
    #[serde(default)]
    pub heating: HeatingConfig,
    pub calibration: Option<CalibrationConfig>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ensemble.temperature_k > 0.0) || self.ensemble.atoms == 0 {
            return Err(Error::Config("ensemble needs temperature_k > 0 and atoms >= 1".into()));
        }
        self.ramsey.uncompensated.validate("ramsey.uncompensated")?;
        self.ramsey.compensated.validate("ramsey.compensated")?;
        self.echo.window.validate("echo.window")?;
        self.heating.model().validate()
    }
}

/// Everything a command needs, resolved from a run file.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub run: RunConfig,
    pub scene: LoadedScene,
    pub path: PathBuf,
    /// SHA-256 over run, scene and species texts.
    pub config_hash: String,
}

pub fn load_run(path: impl AsRef<Path>) -> Result<LoadedRun> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let run: RunConfig = toml::from_str(&text)?;
    run.validate()?;
    let scene_path = resolve(&parent(path), &run.scene);
    let scene = load_scene(&scene_path)?;
    let scene_text = read_text(&scene_path)?;
    let species_text = read_text(&scene.species_path)?;
    let config_hash = hash_texts(&[&text, &scene_text, &species_text]);
    Ok(LoadedRun {
        run,
        scene,
        path: path.to_path_buf(),
        config_hash,
    })
}

pub fn hash_texts(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}
