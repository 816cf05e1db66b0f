//! Image-sensor model: linear photon-to-DN response with photon shot, dark
//! shot and read-floor noise, plus the analytic SNR.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::constants::{photon_energy, ELEMENTARY_CHARGE};
use crate::error::{Error, Result};
use crate::exec;
use crate::field::SampledField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorParams {
    /// System gain K (DN per electron).
    pub gain: f64,
    pub quantum_efficiency: f64,
    /// Pixel pitch p_s (m).
    pub pixel_size: f64,
    /// Physical pixel count per axis.
    pub pixel_count: usize,
    /// Exposure time (s).
    pub exposure_time: f64,
    /// Dark current density (A/m²).
    pub dark_current_density: f64,
    /// Read/amplifier floor (electrons rms).
    pub noise_floor: f64,
    pub bit_depth: u32,
    /// Full-well capacity (electrons).
    pub full_well: f64,
    pub wavelength: f64,
}

impl Default for SensorParams {
    fn default() -> Self {
        let bit_depth = 12;
        let gain = 1.0;
        Self {
            gain,
            quantum_efficiency: 0.8,
            pixel_size: 1.8e-6,
            pixel_count: 8192,
            exposure_time: 50e-6,
            // 10 nA/cm²
            dark_current_density: 1e-4,
            noise_floor: 1.0,
            bit_depth,
            full_well: 0.9 * (1u64 << bit_depth) as f64 / gain,
            wavelength: 1064e-9,
        }
    }
}

impl SensorParams {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            self.gain,
            self.pixel_size,
            self.exposure_time,
            self.full_well,
            self.wavelength,
        ];
        if pos.iter().any(|v| !(*v > 0.0))
            || !(self.quantum_efficiency > 0.0 && self.quantum_efficiency <= 1.0)
            || !(self.dark_current_density >= 0.0)
            || !(self.noise_floor >= 0.0)
            || !(8..=16).contains(&self.bit_depth)
            || self.pixel_count == 0
        {
            return Err(Error::Config(format!("invalid sensor parameters: {self:?}")));
        }
        Ok(())
    }

    pub fn pixel_area(&self) -> f64 {
        self.pixel_size * self.pixel_size
    }

    pub fn max_dn(&self) -> u16 {
        ((1u32 << self.bit_depth) - 1) as u16
    }
}

/// Mean photons per pixel `A·I·t/(hc/λ)` for irradiance `I` (W/m²).
pub fn expected_photons(irradiance: f64, p: &SensorParams) -> f64 {
    p.pixel_area() * irradiance * p.exposure_time / photon_energy(p.wavelength)
}

/// Mean dark electrons per pixel `J·A·t/q`.
pub fn dark_electrons(p: &SensorParams) -> f64 {
    p.dark_current_density * p.pixel_area() * p.exposure_time / ELEMENTARY_CHARGE
}

/// Rectangular block of sensor pixels, in sensor coordinates whose origin is
/// the optical axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelWindow {
    pub width: usize,
    pub height: usize,
    pub pixel_size: f64,
    /// Sensor coordinates of the window's lower-left corner (m).
    pub corner: [f64; 2],
}

impl PixelWindow {
    /// Pixel-aligned window of about `extent` metres centred near `center`,
    /// clipped to the physical sensor.
    pub fn around(center: [f64; 2], extent: f64, p: &SensorParams) -> Result<Self> {
        let ps = p.pixel_size;
        let n = ((extent / ps).round() as usize).clamp(1, p.pixel_count);
        let half = p.pixel_count as f64 / 2.0;
        let first = |c: f64| -> f64 {
            let i0 = (c / ps).round() + half - (n / 2) as f64;
            i0.clamp(0.0, (p.pixel_count - n) as f64)
        };
        let corner = [(first(center[0]) - half) * ps, (first(center[1]) - half) * ps];
        Ok(Self {
            width: n,
            height: n,
            pixel_size: ps,
            corner,
        })
    }

    /// Sensor coordinate of the center of pixel `i` along x (or y).
    pub fn pixel_center(&self, axis: usize, i: usize) -> f64 {
        self.corner[axis] + (i as f64 + 0.5) * self.pixel_size
    }
}

/// Mean irradiance per pixel (W/m²), row-major `[y][x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IrradianceMap {
    pub window: PixelWindow,
    pub values: Vec<f64>,
}

impl IrradianceMap {
    pub fn uniform(window: PixelWindow, irradiance: f64) -> Self {
        Self {
            window,
            values: vec![irradiance; window.width * window.height],
        }
    }
}

/// Overlap lengths between pixel intervals and simulation cells on one axis.
fn overlaps(cells: &[f64], cell: f64, first_edge: f64, pixel: f64, count: usize) -> Vec<Vec<(usize, f64)>> {
    let n = cells.len();
    let start = cells[0] - cell / 2.0;
    (0..count)
        .map(|j| {
            let a = first_edge + j as f64 * pixel;
            let b = a + pixel;
            let lo = ((a - start) / cell).floor().max(0.0) as usize;
            let hi = (((b - start) / cell).ceil().max(0.0) as usize).min(n);
            (lo..hi)
                .filter_map(|i| {
                    let c0 = start + i as f64 * cell;
                    let w = (b.min(c0 + cell) - a.max(c0)).max(0.0);
                    (w > 0.0).then_some((i, w))
                })
                .collect()
        })
        .collect()
}

/// Area-weighted box integration of `|u|²` onto the pixel window. Each
/// simulation sample is treated as uniform over its cell.
pub fn resample_to_pixels(field: &SampledField, window: PixelWindow) -> IrradianceMap {
    let grid = field.grid;
    let n = grid.n();
    let d = grid.pitch();
    let xs: Vec<f64> = grid.coords().iter().map(|x| x + field.center[0]).collect();
    let ys: Vec<f64> = grid.coords().iter().map(|y| y + field.center[1]).collect();
    let wx = overlaps(&xs, d, window.corner[0], window.pixel_size, window.width);
    let wy = overlaps(&ys, d, window.corner[1], window.pixel_size, window.height);
    let intensity = field.intensity();
    // x pass on the rows that any pixel row touches
    let mut rows_needed = vec![false; n];
    wy.iter().flatten().for_each(|&(i, _)| rows_needed[i] = true);
    let mut partial = vec![0.0; n * window.width];
    exec::for_each_chunk(&mut partial, window.width, |iy, out| {
        if !rows_needed[iy] {
            return;
        }
        let row = &intensity[iy * n..(iy + 1) * n];
        for (o, ws) in out.iter_mut().zip(&wx) {
            *o = ws.iter().map(|&(i, w)| row[i] * w).sum();
        }
    });
    let area = window.pixel_size * window.pixel_size;
    let mut values = vec![0.0; window.width * window.height];
    exec::for_each_chunk(&mut values, window.width, |jy, out| {
        for &(iy, w) in &wy[jy] {
            let src = &partial[iy * window.width..(iy + 1) * window.width];
            out.iter_mut().zip(src).for_each(|(o, s)| *o += s * w);
        }
        out.iter_mut().for_each(|o| *o /= area);
    });
    IrradianceMap { window, values }
}

/// Quantized sensor output.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalImage {
    pub dn: Vec<u16>,
    pub width: usize,
    pub height: usize,
    pub saturated_count: usize,
    pub window: PixelWindow,
}

impl DigitalImage {
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.dn[y * self.width + x]
    }

    /// Binary portable greymap, 16-bit big-endian samples.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let max = self.dn.iter().copied().max().unwrap_or(0).max(1);
        write!(f, "P5\n{} {}\n{}\n", self.width, self.height, max.max(256))?;
        for &v in &self.dn {
            f.write_all(&v.to_be_bytes())?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Expected DN per pixel, `K(η µ_p + µ_d)`, without noise or clamping.
pub fn expose_noiseless(map: &IrradianceMap, p: &SensorParams) -> Vec<f64> {
    let dark = dark_electrons(p);
    map.values
        .iter()
        .map(|&i| p.gain * (p.quantum_efficiency * expected_photons(i, p) + dark))
        .collect()
}

/// Noisy exposure. Each image row draws from its own ChaCha stream of the
/// seed, so the result does not depend on scheduling.
pub fn expose(map: &IrradianceMap, p: &SensorParams, seed: u64) -> Result<DigitalImage> {
    p.validate()?;
    let w = map.window;
    if map.values.len() != w.width * w.height {
        return Err(Error::Shape(format!(
            "irradiance map has {} values for a {}x{} window",
            map.values.len(),
            w.width,
            w.height
        )));
    }
    let dark = dark_electrons(p);
    let per_photon = w.pixel_size * w.pixel_size * p.exposure_time / photon_energy(p.wavelength);
    let floor = Normal::new(0.0, p.noise_floor).map_err(|e| Error::Config(e.to_string()))?;
    let max_dn = p.max_dn() as f64;
    let mut dn = vec![0u16; w.width * w.height];
    exec::for_each_chunk_zip(&mut dn, &map.values, w.width, |row, out, irr| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(row as u64);
        for (o, &i) in out.iter_mut().zip(irr) {
            // photoelectron and dark shot noise drawn as one Poisson variable
            let mean = p.quantum_efficiency * per_photon * i + dark;
            let electrons = if mean - 8.0 * mean.sqrt() > p.full_well + 8.0 * p.noise_floor {
                // clamps with certainty at double precision
                p.full_well
            } else {
                let shot = if mean > 0.0 {
                    Poisson::new(mean).map(|d| d.sample(&mut rng)).unwrap_or(mean)
                } else {
                    0.0
                };
                (shot + floor.sample(&mut rng)).min(p.full_well)
            };
            *o = (p.gain * electrons).round().clamp(0.0, max_dn) as u16;
        }
    });
    let max = p.max_dn();
    let sat_dn = (p.gain * p.full_well).round().min(max_dn) as u16;
    let saturated_count = dn.iter().filter(|&&v| v >= sat_dn.min(max)).count();
    Ok(DigitalImage {
        dn,
        width: w.width,
        height: w.height,
        saturated_count,
        window: w,
    })
}

/// Analytic SNR in dB for irradiance `I` on one pixel; `-inf` when no
/// photons arrive.
pub fn snr_db(irradiance: f64, p: &SensorParams) -> f64 {
    let signal = p.quantum_efficiency * expected_photons(irradiance, p);
    if !(signal > 0.0) {
        return f64::NEG_INFINITY;
    }
    let noise = (signal + dark_electrons(p) + p.noise_floor * p.noise_floor).sqrt();
    20.0 * (signal / noise).log10()
}

/// SNR from repeated single-pixel exposures: `(mean − Kµ_d)/std` in dB.
/// Returns `None` when the pixel saturates.
pub fn monte_carlo_snr_db(irradiance: f64, p: &SensorParams, exposures: usize, seed: u64) -> Result<Option<f64>> {
    let window = PixelWindow {
        width: 1,
        height: 1,
        pixel_size: p.pixel_size,
        corner: [0.0, 0.0],
    };
    let map = IrradianceMap::uniform(window, irradiance);
    let samples: Vec<f64> = exec::map_indexed(exposures, |i| {
        expose(&map, p, crate::harness::seeds::mix(seed, i as u64, 0)).map(|img| img.dn[0] as f64)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let full = (p.gain * p.full_well).round().min(p.max_dn() as f64);
    if samples.iter().any(|&s| s >= full) {
        return Ok(None);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let signal = mean - p.gain * dark_electrons(p);
    Ok(Some(20.0 * (signal / var.sqrt()).log10()))
}
