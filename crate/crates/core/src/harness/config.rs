//! Experiment configuration: TOML file plus named presets. Every field has
//! a default, so a file only needs the keys it changes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::GridSpec;
use crate::localization::{BinocularConfig, ThresholdPolicy};
use crate::optics::{CircularAperture, ThinLens};
use crate::power::{GainMediumParams, LossBudget, Reflectivity};
use crate::resonator::{CatsEye, ResonatorGeometry, SolverOptions};
use crate::sensor::SensorParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    /// Noisy exposures (or noise draws) per sweep point.
    pub trials: usize,
    pub out_dir: PathBuf,
    pub grid: GridConfig,
    pub geometry: GeometryConfig,
    pub solver: SolverConfig,
    pub power: PowerConfig,
    pub sensor: SensorParams,
    pub imaging: ImagingConfig,
    pub sweep: SweepSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub samples: usize,
    pub expansion: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub focal_length: f64,
    pub lens_radius: f64,
    pub mirror_radius: f64,
    pub gain_radius: f64,
    /// Lens to mirror distance inside each cat's eye.
    pub lens_mirror_gap: f64,
    /// Mirror to sensor distance.
    pub cmos_gap: f64,
    pub wavelength: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub krylov_dim: usize,
}

/// Either the product `R = R₁R₂` or both mirrors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ReflectivityConfig {
    Product { product: f64 },
    Mirrors { r1: f64, r2: f64 },
}

impl From<ReflectivityConfig> for Reflectivity {
    fn from(r: ReflectivityConfig) -> Self {
        match r {
            ReflectivityConfig::Product { product } => Reflectivity::Product(product),
            ReflectivityConfig::Mirrors { r1, r2 } => Reflectivity::Mirrors { r1, r2 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConfig {
    pub saturation_intensity: f64,
    pub medium_loss: f64,
    pub excitation_efficiency: f64,
    pub reflectivity: ReflectivityConfig,
    /// Mirror to sensor loss factor η_c.
    pub sensor_path: f64,
    /// Attenuator factor ρ.
    pub attenuation: f64,
    /// Pump powers (W). Spot and localization sweeps use the first.
    pub pump_powers: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImagingConfig {
    /// Side of the simulated pixel window around the predicted spot (m).
    pub window: f64,
    pub threshold: ThresholdPolicy,
    /// 1×1 exposures behind each Monte Carlo SNR estimate.
    pub snr_exposures: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// `(b/2 + p, 0, d)`: offsets from the baseline midpoint.
    X,
    /// `(b/2, p, d)`.
    Y,
    /// `(p cos α, p sin α, d)` with α = `azimuth_deg`, about TX1's axis.
    Radial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Closed-form baseline-triangle solution.
    Triangle,
    /// Midpoint of the common perpendicular of both rays.
    Midpoint,
}

/// One target plane `z = depth` with its baselines and monocular FoV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plane {
    pub depth: f64,
    pub baselines: Vec<f64>,
    pub fov_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub azimuth_deg: f64,
    /// Positions along `axis` (m).
    pub positions: Vec<f64>,
    pub planes: Vec<Plane>,
    /// RMS 2-D spot error injected on exact spot centers instead of
    /// simulating images, for localization sweeps.
    pub spot_noise: Option<f64>,
    pub estimator: Estimator,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 20240601,
            trials: 20,
            out_dir: PathBuf::from("out"),
            grid: GridConfig::default(),
            geometry: GeometryConfig::default(),
            solver: SolverConfig::default(),
            power: PowerConfig::default(),
            sensor: SensorParams::default(),
            imaging: ImagingConfig::default(),
            sweep: SweepSpec::default(),
        }
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            samples: 512,
            expansion: 3,
        }
    }
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            focal_length: 10e-3,
            lens_radius: 2.5e-3,
            mirror_radius: 2.5e-3,
            gain_radius: 2.5e-3,
            lens_mirror_gap: 10.01e-3,
            cmos_gap: 10e-3,
            wavelength: 1064e-9,
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolverOptions::default();
        Self {
            tol: o.tol,
            max_iter: o.max_iter,
            krylov_dim: o.krylov_dim,
        }
    }
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            saturation_intensity: 1.26e7,
            medium_loss: 0.99,
            excitation_efficiency: 0.72,
            reflectivity: ReflectivityConfig::Product { product: 0.999 },
            sensor_path: 0.99,
            attenuation: 1e-4,
            pump_powers: vec![200.0],
        }
    }
}

impl Default for ImagingConfig {
    fn default() -> Self {
        Self {
            window: 6e-3,
            threshold: ThresholdPolicy::default(),
            snr_exposures: 1000,
        }
    }
}

pub const NEAR_BASELINES: [f64; 4] = [0.0612, 0.0918, 0.1224, 0.1836];
pub const FAR_BASELINES: [f64; 4] = [0.1977, 0.2471, 0.2965, 0.3459];

pub fn near_plane() -> Plane {
    Plane {
        depth: 1.0,
        baselines: NEAR_BASELINES.to_vec(),
        fov_deg: 22.0,
    }
}

pub fn far_plane() -> Plane {
    Plane {
        depth: 2.0,
        baselines: FAR_BASELINES.to_vec(),
        fov_deg: 16.0,
    }
}

/// `n` evenly spaced values from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![start],
        _ => (0..n)
            .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            axis: SweepAxis::Radial,
            azimuth_deg: 0.0,
            positions: linspace(0.0, 0.2, 11),
            planes: vec![Plane {
                baselines: vec![0.1224],
                ..near_plane()
            }],
            spot_noise: None,
            estimator: Estimator::Triangle,
        }
    }
}

/// Named experiment presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Spot position and error versus radial offset.
    Fig6,
    /// SNR versus position for several pump powers.
    Fig7,
    /// Localization error versus position for several baselines.
    Fig9,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig6" => Ok(Preset::Fig6),
            "fig7" => Ok(Preset::Fig7),
            "fig9" => Ok(Preset::Fig9),
            other => Err(Error::Config(format!("unknown preset `{other}` (fig6, fig7, fig9)"))),
        }
    }
}

fn merge(into: &mut toml::Table, from: toml::Table) {
    for (k, v) in from {
        match (into.get_mut(&k), v) {
            (Some(toml::Value::Table(a)), toml::Value::Table(b)) if k != "reflectivity" && k != "threshold" => merge(a, b),
            (_, v) => {
                into.insert(k, v);
            }
        }
    }
}

impl ExperimentConfig {
    pub fn preset(p: Preset) -> Self {
        let mut c = Self::default();
        match p {
            Preset::Fig6 => {
                c.sweep.planes = vec![
                    Plane {
                        baselines: vec![0.1224],
                        ..near_plane()
                    },
                    Plane {
                        baselines: vec![0.2965],
                        ..far_plane()
                    },
                ];
                c.sweep.positions = linspace(0.0, 0.2, 11);
            }
            Preset::Fig7 => {
                c.power.pump_powers = vec![100.0, 150.0, 200.0, 300.0];
                c.sweep.positions = linspace(0.0, 0.2, 11);
            }
            Preset::Fig9 => {
                c.trials = 100;
                c.sweep.axis = SweepAxis::X;
                c.sweep.positions = linspace(-0.12, 0.12, 25);
                c.sweep.planes = vec![near_plane(), far_plane()];
                c.sweep.spot_noise = Some(2e-6);
            }
        }
        c
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// `base` with the keys present in `text` replaced, table by table.
    pub fn layered(base: &Self, text: &str) -> Result<Self> {
        let overlay: toml::Table = toml::from_str(text)?;
        let mut merged = toml::Table::try_from(base).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, overlay);
        let c: Self = merged.try_into()?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        let g = &self.geometry;
        for (name, v) in [
            ("focal_length", g.focal_length),
            ("lens_radius", g.lens_radius),
            ("mirror_radius", g.mirror_radius),
            ("gain_radius", g.gain_radius),
            ("wavelength", g.wavelength),
        ] {
            if !(v > 0.0) {
                return bad(format!("geometry.{name} must be > 0, got {v}"));
            }
        }
        if !(g.cmos_gap >= 0.0) {
            return bad(format!("geometry.cmos_gap must be >= 0, got {}", g.cmos_gap));
        }
        self.pupil_grid()?;
        self.tx_cats_eye()?;
        self.gain().validate()?;
        self.loss_budget(1.0).validate()?;
        self.sensor.validate()?;
        if self.power.pump_powers.is_empty() {
            return bad("power.pump_powers is empty".into());
        }
        if let Some(&p) = self.power.pump_powers.iter().find(|p| !(**p >= 0.0)) {
            return bad(format!("pump power must be >= 0, got {p}"));
        }
        if !(self.imaging.window > 0.0) {
            return bad("imaging.window must be > 0".into());
        }
        if self.imaging.snr_exposures < 2 {
            return bad("imaging.snr_exposures must be >= 2".into());
        }
        if self.sweep.planes.is_empty() {
            return bad("sweep.planes is empty".into());
        }
        for plane in &self.sweep.planes {
            if !(plane.depth > 0.0) {
                return bad(format!("plane depth must be > 0, got {}", plane.depth));
            }
            if !(plane.fov_deg > 0.0 && plane.fov_deg < 180.0) {
                return bad(format!("fov_deg must be in (0, 180), got {}", plane.fov_deg));
            }
            if plane.baselines.is_empty() {
                return bad(format!("plane at depth {} has no baselines", plane.depth));
            }
            if let Some(&b) = plane.baselines.iter().find(|b| !(**b > 0.0)) {
                return bad(format!("baseline must be > 0, got {b}"));
            }
        }
        if let Some(s) = self.sweep.spot_noise {
            if !(s >= 0.0) {
                return bad(format!("sweep.spot_noise must be >= 0, got {s}"));
            }
        }
        Ok(())
    }

    pub fn pupil_grid(&self) -> Result<GridSpec> {
        let g = &self.geometry;
        let r = g.lens_radius.max(g.gain_radius);
        GridSpec::for_aperture(self.grid.samples, r, self.grid.expansion)
    }

    fn mirror_reflectivities(&self) -> (f64, f64) {
        match self.power.reflectivity {
            ReflectivityConfig::Product { product } => (product, 1.0),
            ReflectivityConfig::Mirrors { r1, r2 } => (r1, r2),
        }
    }

    fn tx_cats_eye(&self) -> Result<CatsEye> {
        let g = &self.geometry;
        let lens = ThinLens::new(g.focal_length, g.lens_radius)?;
        CatsEye::new(lens, g.mirror_radius, self.mirror_reflectivities().0, g.lens_mirror_gap)
    }

    /// Cavity for a retroreflector whose pupil sits at `local_target` in
    /// the transmitter's frame.
    pub fn resonator(&self, local_target: [f64; 3]) -> Result<ResonatorGeometry> {
        let g = &self.geometry;
        let tx = self.tx_cats_eye()?;
        let rx = CatsEye {
            mirror_reflectivity: self.mirror_reflectivities().1,
            ..tx
        };
        let geom = ResonatorGeometry {
            tx,
            rx,
            gain_aperture: CircularAperture::new(g.gain_radius)?,
            target_position: local_target,
            wavelength: g.wavelength,
            cmos_gap: g.cmos_gap,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            krylov_dim: self.solver.krylov_dim,
            ..SolverOptions::default()
        }
    }

    pub fn gain(&self) -> GainMediumParams {
        let p = &self.power;
        GainMediumParams {
            saturation_intensity: p.saturation_intensity,
            medium_loss: p.medium_loss,
            excitation_efficiency: p.excitation_efficiency,
            radius: self.geometry.gain_radius,
        }
    }

    /// Loss budget for a cavity with round-trip transmission `eta`.
    pub fn loss_budget(&self, eta: f64) -> LossBudget {
        LossBudget::from_round_trip(
            self.power.reflectivity.into(),
            eta,
            self.power.sensor_path,
            self.power.attenuation,
        )
    }

    pub fn binocular(&self, plane: &Plane, baseline: f64) -> BinocularConfig {
        BinocularConfig {
            baseline,
            focal_length: self.geometry.focal_length,
            fov: plane.fov_deg.to_radians(),
            height: plane.depth,
        }
    }

    /// World position of sweep position `p` on `plane` for baseline `b`.
    pub fn target(&self, plane: &Plane, baseline: f64, p: f64) -> [f64; 3] {
        let d = plane.depth;
        match self.sweep.axis {
            SweepAxis::X => [baseline / 2.0 + p, 0.0, d],
            SweepAxis::Y => [baseline / 2.0, p, d],
            SweepAxis::Radial => {
                let a = self.sweep.azimuth_deg.to_radians();
                [p * a.cos(), p * a.sin(), d]
            }
        }
    }
}
