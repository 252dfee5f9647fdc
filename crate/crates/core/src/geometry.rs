//! Illumination beams, the microlens grid and per-site optical power.
//!
//! Positions are in the microlens plane. Lens (row, col) is centred at
//! `(col * pitch, row * pitch)`; beams carry their own centre.

use std::f64::consts::{PI, TAU};
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::atomic::AtomSpecies;
use crate::error::{ensure_positive, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBeam {
    /// Total power (W).
    pub power: f64,
    /// 1/e² intensity radius (m).
    pub waist: f64,
    /// Beam centre (m).
    pub center: [f64; 2],
}

impl GaussianBeam {
    pub fn new(power: f64, waist: f64, center: [f64; 2]) -> Result<Self> {
        if !(power >= 0.0 && power.is_finite()) {
            return Err(Error::Config(format!("beam power must be >= 0, got {power}")));
        }
        ensure_positive("beam waist", waist)?;
        Ok(Self { power, waist, center })
    }

    pub fn peak_intensity(&self) -> f64 {
        2.0 * self.power / (PI * self.waist * self.waist)
    }

    pub fn intensity(&self, r: [f64; 2]) -> f64 {
        let dx = r[0] - self.center[0];
        let dy = r[1] - self.center[1];
        self.peak_intensity() * (-2.0 * (dx * dx + dy * dy) / (self.waist * self.waist)).exp()
    }

    pub fn displaced(&self, d: [f64; 2]) -> Self {
        Self {
            center: [self.center[0] + d[0], self.center[1] + d[1]],
            ..*self
        }
    }

    pub fn with_power(&self, power: f64) -> Self {
        Self { power, ..*self }
    }
}

/// I(r) = (2P/πw²)·exp(−2|r − r₀|²/w²).
pub fn beam_intensity(beam: &GaussianBeam, r: [f64; 2]) -> f64 {
    beam.intensity(r)
}

/// Grid position of a lenslet. Labels are a row letter and a 1-based column
/// number, e.g. `e5` is row 4, column 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SiteIndex {
    pub row: usize,
    pub col: usize,
}

impl SiteIndex {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn label(&self) -> String {
        let letter = if self.row < 26 {
            char::from(b'a' + self.row as u8).to_string()
        } else {
            format!("r{}-", self.row)
        };
        format!("{letter}{}", self.col + 1)
    }
}

impl std::fmt::Display for SiteIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for SiteIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut chars = s.chars();
        let row = match chars.next() {
            Some(c) if c.is_ascii_lowercase() => (c as u8 - b'a') as usize,
            _ => return Err(Error::UnknownSite(s.to_string())),
        };
        let col: usize = chars
            .as_str()
            .parse()
            .map_err(|_| Error::UnknownSite(s.to_string()))?;
        if col == 0 {
            return Err(Error::UnknownSite(s.to_string()));
        }
        Ok(Self { row, col: col - 1 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicrolensArray {
    /// Lens spacing (m).
    pub pitch: f64,
    /// Lens aperture radius (m).
    pub aperture_radius: f64,
    pub rows: usize,
    pub cols: usize,
    /// Reimaging magnification from lens plane to the atoms.
    pub demagnification: f64,
    /// Focal-spot 1/e² radius at the atoms (m).
    pub trap_waist: f64,
    /// Global power transmission from the lens plane to the atoms.
    pub transmission: f64,
}

impl MicrolensArray {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("pitch", self.pitch)?;
        ensure_positive("aperture_radius", self.aperture_radius)?;
        ensure_positive("demagnification", self.demagnification)?;
        ensure_positive("trap_waist", self.trap_waist)?;
        ensure_positive("transmission", self.transmission)?;
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Config("lens grid must have at least one row and column".into()));
        }
        Ok(())
    }

    pub fn contains(&self, site: SiteIndex) -> bool {
        site.row < self.rows && site.col < self.cols
    }

    pub fn lens_center(&self, site: SiteIndex) -> [f64; 2] {
        [site.col as f64 * self.pitch, site.row as f64 * self.pitch]
    }

    /// Trap separation at the atoms.
    pub fn reimaged_pitch(&self) -> f64 {
        self.pitch * self.demagnification
    }
}

const RADIAL_NODES: usize = 64;
const ANGULAR_NODES: usize = 64;

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Unit-disc product rule: (dx, dy, weight) with Σ weight = π.
fn unit_disc_rule() -> &'static [(f64, f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let radial = gauss_legendre(RADIAL_NODES);
        let mut nodes = Vec::with_capacity(RADIAL_NODES * ANGULAR_NODES);
        for &(x, w) in &radial {
            let rho = 0.5 * (x + 1.0);
            let w_rho = 0.5 * w * rho;
            for k in 0..ANGULAR_NODES {
                let theta = TAU * (k as f64 + 0.5) / ANGULAR_NODES as f64;
                nodes.push((rho * theta.cos(), rho * theta.sin(), w_rho * TAU / ANGULAR_NODES as f64));
            }
        }
        nodes
    })
}

/// Power through the circular aperture of `site` (W).
pub fn site_power(beam: &GaussianBeam, array: &MicrolensArray, site: SiteIndex) -> Result<f64> {
    if !array.contains(site) {
        return Err(Error::SiteOutOfGrid(site.label()));
    }
    let c = array.lens_center(site);
    let a = array.aperture_radius;
    let sum: f64 = unit_disc_rule()
        .iter()
        .map(|&(dx, dy, w)| w * beam.intensity([c[0] + a * dx, c[1] + a * dy]))
        .sum();
    Ok(sum * a * a)
}

/// Peak intensity of the reimaged focal spot carrying `site_power`.
pub fn site_peak_intensity(site_power: f64, array: &MicrolensArray) -> f64 {
    array.transmission * 2.0 * site_power / (PI * array.trap_waist * array.trap_waist)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapBeam {
    pub beam: GaussianBeam,
    /// Vacuum wavelength (m).
    pub wavelength: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompensationBeam {
    pub beam: GaussianBeam,
    /// Vacuum wavelength (m).
    pub wavelength: f64,
    /// Lateral offset from the nominal centre in the lens plane (m).
    pub displacement: [f64; 2],
}

impl CompensationBeam {
    /// The beam as it lands on the lens array, displacement applied.
    pub fn effective_beam(&self) -> GaussianBeam {
        self.beam.displaced(self.displacement)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub index: SiteIndex,
    pub label: String,
}

impl Site {
    pub fn new(index: SiteIndex) -> Self {
        Self {
            label: index.label(),
            index,
        }
    }
}

/// Full geometric configuration of a trap array experiment.
#[derive(Debug, Clone)]
pub struct TrapArrayScene {
    pub species: Arc<AtomSpecies>,
    pub trap: TrapBeam,
    pub compensation: CompensationBeam,
    pub array: MicrolensArray,
    pub sites: Vec<Site>,
}

#[derive(Serialize)]
struct SceneFingerprint<'a> {
    species: &'a crate::atomic::SpeciesConfig,
    trap: &'a TrapBeam,
    compensation: &'a CompensationBeam,
    array: &'a MicrolensArray,
    sites: &'a [Site],
}

impl TrapArrayScene {
    pub fn new(
        species: Arc<AtomSpecies>,
        trap: TrapBeam,
        compensation: CompensationBeam,
        array: MicrolensArray,
        sites: Vec<Site>,
    ) -> Result<Self> {
        let scene = Self {
            species,
            trap,
            compensation,
            array,
            sites,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        self.array.validate()?;
        GaussianBeam::new(self.trap.beam.power, self.trap.beam.waist, self.trap.beam.center)?;
        GaussianBeam::new(
            self.compensation.beam.power,
            self.compensation.beam.waist,
            self.compensation.beam.center,
        )?;
        ensure_positive("trap wavelength", self.trap.wavelength)?;
        ensure_positive("compensation wavelength", self.compensation.wavelength)?;
        if self.sites.is_empty() {
            return Err(Error::Empty("occupied site list"));
        }
        let mut seen = std::collections::HashSet::new();
        for site in &self.sites {
            if !self.array.contains(site.index) {
                return Err(Error::SiteOutOfGrid(site.label.clone()));
            }
            if !seen.insert(site.index) {
                return Err(Error::Config(format!("site {} listed twice", site.label)));
            }
        }
        Ok(())
    }

    pub fn site(&self, label: &str) -> Result<&Site> {
        self.sites
            .iter()
            .find(|s| s.label == label)
            .ok_or_else(|| Error::UnknownSite(label.to_string()))
    }

    pub fn with_displacement(&self, displacement: [f64; 2]) -> Self {
        let mut s = self.clone();
        s.compensation.displacement = displacement;
        s
    }

    pub fn with_compensation_power(&self, power: f64) -> Self {
        let mut s = self.clone();
        s.compensation.beam.power = power;
        s
    }

    /// SHA-256 over the species record and every geometric parameter.
    pub fn hash(&self) -> String {
        let fp = SceneFingerprint {
            species: self.species.config(),
            trap: &self.trap,
            compensation: &self.compensation,
            array: &self.array,
            sites: &self.sites,
        };
        let bytes = serde_json::to_vec(&fp).expect("scene serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Per-site ratio of compensation to trap power (equal to the peak-intensity
/// ratio, both spots having the same focal waist).
pub fn compensation_intensity_ratio_map(scene: &TrapArrayScene) -> Result<Vec<f64>> {
    let comp = scene.compensation.effective_beam();
    scene
        .sites
        .iter()
        .map(|s| {
            let p = site_power(&scene.trap.beam, &scene.array, s.index)?;
            let pc = site_power(&comp, &scene.array, s.index)?;
            Ok(pc / p)
        })
        .collect()
}
