//! Steady-state output power from the cyclic power model, and the absolute
//! irradiance scale on the sensor.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::PLANCK;
use crate::error::{Error, Result};
use crate::field::{energy, SampledField};

/// Gain-medium constants. `saturation_intensity` is used as given; the
/// microscopic four-level parameters only matter through
/// [`saturation_intensity`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainMediumParams {
    /// I_s (W/m²).
    pub saturation_intensity: f64,
    /// Per-transit medium transmission η_s.
    pub medium_loss: f64,
    /// Pump excitation efficiency η_excit.
    pub excitation_efficiency: f64,
    /// Gain aperture radius (m); beam area A_b = π r².
    pub radius: f64,
}

impl GainMediumParams {
    pub fn validate(&self) -> Result<()> {
        let frac = |v: f64| v > 0.0 && v <= 1.0;
        if !(self.saturation_intensity > 0.0)
            || !frac(self.medium_loss)
            || !frac(self.excitation_efficiency)
            || !(self.radius > 0.0)
        {
            return Err(Error::Config(format!("invalid gain medium parameters: {self:?}")));
        }
        Ok(())
    }

    pub fn beam_area(&self) -> f64 {
        std::f64::consts::PI * self.radius * self.radius
    }
}

/// How the mirror reflectivity product R is specified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reflectivity {
    /// R given directly as the product R₁R₂.
    Product(f64),
    /// Individual mirrors; R = R₁·R₂.
    Mirrors { r1: f64, r2: f64 },
}

impl Reflectivity {
    pub fn product(&self) -> f64 {
        match *self {
            Reflectivity::Product(r) => r,
            Reflectivity::Mirrors { r1, r2 } => r1 * r2,
        }
    }
}

/// Diffraction loss factors η₁…η₄ of the four one-way legs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegFactors(pub [f64; 4]);

impl LegFactors {
    /// Even split of a round-trip factor, η^{1/4} per leg.
    pub fn even(round_trip: f64) -> Self {
        Self([round_trip.powf(0.25); 4])
    }

    pub fn product(&self) -> f64 {
        self.0.iter().product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBudget {
    pub reflectivity: Reflectivity,
    pub legs: LegFactors,
    /// Mirror-to-sensor transmission η_c.
    pub sensor_path: f64,
    /// Attenuator factor ρ.
    pub attenuation: f64,
}

impl LossBudget {
    /// Budget with η taken from a round-trip efficiency such as |ξ|².
    pub fn from_round_trip(reflectivity: Reflectivity, eta: f64, sensor_path: f64, attenuation: f64) -> Self {
        Self {
            reflectivity,
            legs: LegFactors::even(eta),
            sensor_path,
            attenuation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let frac = |v: f64| v > 0.0 && v <= 1.0;
        let r = self.reflectivity.product();
        let ok = frac(r)
            && self.legs.0.iter().all(|&v| frac(v))
            && frac(self.sensor_path)
            && frac(self.attenuation);
        if !ok {
            return Err(Error::InvalidLossBudget(format!("factors must lie in (0, 1]: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerResult {
    /// P_out (W).
    pub output: f64,
    /// P_C = ρ·η_c·P_out (W).
    pub on_sensor: f64,
    pub above_threshold: bool,
    /// g₀ℓ.
    pub gain_length: f64,
    /// |ln √(R η_s² η)|, the gain-length needed to oscillate.
    pub threshold_gain_length: f64,
}

/// Four-level saturation intensity h·ν/(σ·τ_f).
pub fn saturation_intensity(cross_section: f64, fluorescence_lifetime: f64, frequency: f64) -> Result<f64> {
    if !(cross_section > 0.0 && fluorescence_lifetime > 0.0 && frequency > 0.0) {
        return Err(Error::Domain("cross-section, lifetime and frequency must be > 0".into()));
    }
    Ok(PLANCK * frequency / (cross_section * fluorescence_lifetime))
}

/// Small-signal gain-length product η_excit·P_in/(I_s·A_b).
pub fn small_signal_gain_length(pump: f64, g: &GainMediumParams) -> f64 {
    g.excitation_efficiency * pump / (g.saturation_intensity * g.beam_area())
}

/// Threshold pump power below which the cavity does not oscillate.
pub fn threshold_pump(g: &GainMediumParams, lb: &LossBudget) -> f64 {
    let r = lb.reflectivity.product();
    let loss = (r * g.medium_loss * g.medium_loss * lb.legs.product()).sqrt().ln().abs();
    g.saturation_intensity * g.beam_area() * loss / g.excitation_efficiency
}

/// Cyclic power model output power, clamped at zero below threshold.
pub fn output_power(pump: f64, g: &GainMediumParams, lb: &LossBudget) -> Result<PowerResult> {
    g.validate()?;
    lb.validate()?;
    if !(pump >= 0.0) {
        return Err(Error::Domain(format!("pump power must be >= 0, got {pump}")));
    }
    let r = lb.reflectivity.product();
    let [e1, e2, e3, _e4] = lb.legs.0;
    let eta = lb.legs.product();
    let es = g.medium_loss;
    let denom = 1.0 - r * e2 * e3 + (r * eta).sqrt() * (1.0 / (e1 * e2 * es) - es);
    if !(denom > 0.0) {
        return Err(Error::InvalidLossBudget(format!("denominator {denom} <= 0")));
    }
    let gain_length = small_signal_gain_length(pump, g);
    let threshold = (r * es * es * eta).sqrt().ln().abs();
    let mut bracket = gain_length - threshold;
    // rounding at the analytic boundary must not flip the flag
    if bracket.abs() <= 4.0 * f64::EPSILON * threshold.max(gain_length) {
        bracket = 0.0;
    }
    let above = bracket > 0.0;
    let output = if above {
        g.beam_area() * g.saturation_intensity * (1.0 - r) * e2 / denom * bracket
    } else {
        0.0
    };
    Ok(PowerResult {
        output,
        on_sensor: lb.attenuation * lb.sensor_path * output,
        above_threshold: above,
        gain_length,
        threshold_gain_length: threshold,
    })
}

/// Scales a sensor-plane field so that `energy` equals `power`; |u|² is then
/// irradiance in W/m².
pub fn irradiance_scale(field: &SampledField, power: f64) -> Result<SampledField> {
    let e = energy(field);
    if !(e > 0.0) {
        return Err(Error::DegenerateMode);
    }
    if !(power >= 0.0) {
        return Err(Error::Domain(format!("power must be >= 0, got {power}")));
    }
    Ok(field.clone().scaled(Complex64::new((power / e).sqrt(), 0.0)))
}
