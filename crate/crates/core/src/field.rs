//! Sampled complex fields on square grids.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec;

/// Square sampling grid. Sample `i` on either axis sits at `(i - n/2)·pitch`
/// from the grid center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    samples_per_axis: usize,
    pitch: f64,
    expansion_factor: usize,
}

impl GridSpec {
    pub fn new(samples_per_axis: usize, pitch: f64, expansion_factor: usize) -> Result<Self> {
        if samples_per_axis < 2 || !samples_per_axis.is_power_of_two() {
            return Err(Error::Config(format!(
                "samples per axis must be a power of two >= 2, got {samples_per_axis}"
            )));
        }
        if !(pitch > 0.0 && pitch.is_finite()) {
            return Err(Error::Config(format!("pitch must be positive, got {pitch}")));
        }
        if expansion_factor == 0 {
            return Err(Error::Config("expansion factor must be >= 1".into()));
        }
        Ok(Self {
            samples_per_axis,
            pitch,
            expansion_factor,
        })
    }

    /// Grid whose window is `expansion_factor` times the aperture diameter.
    pub fn for_aperture(samples_per_axis: usize, aperture_radius: f64, expansion_factor: usize) -> Result<Self> {
        let window = expansion_factor as f64 * 2.0 * aperture_radius;
        Self::new(samples_per_axis, window / samples_per_axis as f64, expansion_factor)
    }

    pub fn n(&self) -> usize {
        self.samples_per_axis
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn expansion_factor(&self) -> usize {
        self.expansion_factor
    }

    pub fn window(&self) -> f64 {
        self.samples_per_axis as f64 * self.pitch
    }

    pub fn with_pitch(&self, pitch: f64) -> Result<Self> {
        Self::new(self.samples_per_axis, pitch, self.expansion_factor)
    }

    /// Offset of sample `i` from the grid center.
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - (self.samples_per_axis / 2) as f64) * self.pitch
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.samples_per_axis).map(|i| self.coord(i)).collect()
    }

    /// Checks the window covers `expansion_factor` aperture diameters.
    pub fn check_covers(&self, radius: f64) -> Result<()> {
        let need = self.expansion_factor as f64 * 2.0 * radius;
        if self.window() < need * (1.0 - 1e-12) {
            return Err(Error::Config(format!(
                "window {:.4e} m smaller than {} x aperture diameter {:.4e} m",
                self.window(),
                self.expansion_factor,
                2.0 * radius
            )));
        }
        Ok(())
    }
}

/// Complex amplitude on a grid.
///
/// The full field at local-frame point `p` is
/// `amplitude(p - center) · exp(i2π carrier·(p - center))`. The carrier
/// holds the mean tilt of the beam so that steep beams stay resolvable; it is
/// zero for everything built by [`uniform_disk`] or [`SampledField::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    pub grid: GridSpec,
    pub amplitude: Array2<Complex64>,
    /// Grid center in the local element frame (m).
    pub center: [f64; 2],
    /// Transverse spatial frequency of the tilt carrier (1/m).
    pub carrier: [f64; 2],
}

impl SampledField {
    pub fn new(grid: GridSpec, amplitude: Array2<Complex64>) -> Result<Self> {
        let n = grid.n();
        if amplitude.dim() != (n, n) {
            return Err(Error::Shape(format!(
                "amplitude {:?} does not match grid {n}x{n}",
                amplitude.dim()
            )));
        }
        let amplitude = if amplitude.is_standard_layout() {
            amplitude
        } else {
            amplitude.as_standard_layout().to_owned()
        };
        Ok(Self {
            grid,
            amplitude,
            center: [0.0, 0.0],
            carrier: [0.0, 0.0],
        })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        let n = grid.n();
        Self {
            grid,
            amplitude: Array2::zeros((n, n)),
            center: [0.0, 0.0],
            carrier: [0.0, 0.0],
        }
    }

    /// Builds a field from `f(x, y)` evaluated at grid-local offsets.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let xs = grid.coords();
        let amplitude = Array2::from_shape_fn((grid.n(), grid.n()), |(iy, ix)| f(xs[ix], xs[iy]));
        Self {
            grid,
            amplitude,
            center: [0.0, 0.0],
            carrier: [0.0, 0.0],
        }
    }

    pub fn with_center(mut self, center: [f64; 2]) -> Self {
        self.center = center;
        self
    }

    pub fn with_carrier(mut self, carrier: [f64; 2]) -> Self {
        self.carrier = carrier;
        self
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        self.amplitude.as_slice().expect("standard layout")
    }

    pub fn as_slice_mut(&mut self) -> &mut [Complex64] {
        self.amplitude.as_slice_mut().expect("standard layout")
    }

    /// Intensity `|u|²` in row-major order.
    pub fn intensity(&self) -> Vec<f64> {
        self.as_slice().iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn scaled(mut self, factor: Complex64) -> Self {
        exec::for_each_chunk(self.as_slice_mut(), 1 << 14, |_, c| {
            c.iter_mut().for_each(|z| *z *= factor)
        });
        self
    }

    pub fn max_abs(&self) -> f64 {
        self.as_slice().iter().fold(0.0_f64, |m, z| m.max(z.norm()))
    }

    /// Power-weighted centroid in the local frame, or `None` for a zero field.
    pub fn centroid(&self) -> Option<[f64; 2]> {
        let xs = self.grid.coords();
        let n = self.n();
        let (mut w, mut sx, mut sy) = (0.0, 0.0, 0.0);
        for (iy, row) in self.as_slice().chunks(n).enumerate() {
            for (ix, z) in row.iter().enumerate() {
                let p = z.norm_sqr();
                w += p;
                sx += p * xs[ix];
                sy += p * xs[iy];
            }
        }
        (w > 0.0).then(|| [self.center[0] + sx / w, self.center[1] + sy / w])
    }

    /// `∑ conj(self)·other` over the grid (no pitch factor).
    pub fn inner(&self, other: &SampledField) -> Result<Complex64> {
        check_same_grid(self, other)?;
        Ok(self
            .as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| a.conj() * b)
            .sum())
    }
}

fn check_same_grid(a: &SampledField, b: &SampledField) -> Result<()> {
    if a.grid != b.grid {
        return Err(Error::Shape(format!(
            "grid mismatch: {:?} vs {:?}",
            a.grid, b.grid
        )));
    }
    Ok(())
}

/// Unit amplitude inside `radius` of the grid center, zero outside.
pub fn uniform_disk(grid: GridSpec, radius: f64) -> Result<SampledField> {
    let limit = grid.window() / 2.0 / grid.expansion_factor() as f64;
    if !(radius >= 0.0) || radius > limit * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "disk radius {radius:e} m exceeds window/(2G) = {limit:e} m"
        )));
    }
    if radius == 0.0 {
        return Ok(SampledField::zeros(grid));
    }
    let r2 = radius * radius;
    Ok(SampledField::from_fn(grid, |x, y| {
        if x * x + y * y <= r2 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::default()
        }
    }))
}

/// Discrete energy `∑|u|²·pitch²`.
pub fn energy(field: &SampledField) -> f64 {
    let data = field.as_slice();
    let sum = exec::sum_chunks(data.len(), 1 << 14, |r| {
        data[r].iter().map(|z| z.norm_sqr()).sum()
    });
    sum * field.grid.pitch() * field.grid.pitch()
}

/// Population standard deviation of `|a|/max|a| − |b|/max|b|` over all cells.
///
/// Magnitudes only, so the value ignores global phase. A zero field
/// normalizes to zero rather than dividing by zero.
pub fn l2_difference(a: &SampledField, b: &SampledField) -> Result<f64> {
    check_same_grid(a, b)?;
    let na = a.max_abs();
    let nb = b.max_abs();
    let sa = if na > 0.0 { 1.0 / na } else { 0.0 };
    let sb = if nb > 0.0 { 1.0 / nb } else { 0.0 };
    let (xa, xb) = (a.as_slice(), b.as_slice());
    let cells = xa.len() as f64;
    let diff = |i: usize| xa[i].norm() * sa - xb[i].norm() * sb;
    let mean = exec::sum_chunks(xa.len(), 1 << 14, |r| r.map(diff).sum()) / cells;
    let var = exec::sum_chunks(xa.len(), 1 << 14, |r| {
        r.map(|i| (diff(i) - mean).powi(2)).sum()
    }) / cells;
    Ok(var.sqrt())
}
