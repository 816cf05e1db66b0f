//! Elementary field transforms: angular-spectrum propagation with lateral
//! shift, thin lens, hard circular apertures, and the paraxial ABCD (Collins)
//! transform used to reach focal planes without resampling the coarse grid.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec;
use crate::fft;
use crate::field::{GridSpec, SampledField};

const CHUNK: usize = 1 << 14;

/// Straight free-space hop between two parallel planes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeSpaceSegment {
    /// Axial distance (m).
    pub distance: f64,
    /// Lateral offset of the destination plane center from the source center (m).
    pub shift: [f64; 2],
    pub wavelength: f64,
}

impl FreeSpaceSegment {
    pub fn new(distance: f64, shift: [f64; 2], wavelength: f64) -> Result<Self> {
        if !(distance > 0.0 && distance.is_finite()) {
            return Err(Error::Domain(format!("propagation distance must be > 0, got {distance}")));
        }
        if !(wavelength > 0.0) {
            return Err(Error::Domain(format!("wavelength must be > 0, got {wavelength}")));
        }
        Ok(Self {
            distance,
            shift,
            wavelength,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThinLens {
    pub focal_length: f64,
    pub radius: f64,
}

impl ThinLens {
    pub fn new(focal_length: f64, radius: f64) -> Result<Self> {
        if !(focal_length > 0.0 && radius > 0.0) {
            return Err(Error::Domain(format!(
                "lens needs f > 0 and radius > 0, got f={focal_length}, r={radius}"
            )));
        }
        Ok(Self {
            focal_length,
            radius,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircularAperture {
    pub radius: f64,
}

impl CircularAperture {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Domain(format!("aperture radius must be > 0, got {radius}")));
        }
        Ok(Self { radius })
    }
}

/// Transverse walk-off per unit distance (tan of the propagation angle) of a
/// plane wave with transverse frequency `k`; `None` if evanescent.
fn walkoff(k: [f64; 2], wavelength: f64) -> Option<[f64; 2]> {
    let radicand = 1.0 - wavelength * wavelength * (k[0] * k[0] + k[1] * k[1]);
    (radicand > 0.0).then(|| {
        let c = radicand.sqrt();
        [wavelength * k[0] / c, wavelength * k[1] / c]
    })
}

/// Precomputed angular-spectrum transfer for one grid, carrier and segment.
///
/// The spectrum is evaluated at `carrier + ν`, so a tilted beam propagates
/// exactly while its envelope stays slowly varying. Components that are
/// evanescent, or whose walk-off relative to the chief ray would carry them
/// past the window margin around the aperture, are zeroed.
#[derive(Debug, Clone)]
pub struct AsmKernel {
    grid: GridSpec,
    carrier: [f64; 2],
    shift: [f64; 2],
    transfer: Vec<Complex64>,
}

impl AsmKernel {
    pub fn new(grid: GridSpec, carrier: [f64; 2], seg: &FreeSpaceSegment) -> Result<Self> {
        let n = grid.n();
        let lambda = seg.wavelength;
        let d = seg.distance;
        let window = grid.window();
        let chief = walkoff(carrier, lambda).ok_or_else(|| {
            Error::Sampling("carrier frequency is evanescent".into())
        })?;
        for axis in 0..2 {
            let residual = seg.shift[axis] - d * chief[axis];
            if residual.abs() > window / 2.0 {
                return Err(Error::Sampling(format!(
                    "beam lands {residual:.4e} m from the shifted grid center, window half-width {:.4e} m",
                    window / 2.0
                )));
            }
        }
        let g = grid.expansion_factor() as f64;
        let margin = if g > 1.0 { window / 2.0 - window / (2.0 * g) } else { window / 2.0 };
        let freqs: Vec<f64> = (0..n).map(|k| fft::bin_frequency(k, n, grid.pitch())).collect();
        let phase_out = Complex64::from_polar(
            1.0 / (n * n) as f64,
            2.0 * PI * (carrier[0] * seg.shift[0] + carrier[1] * seg.shift[1]),
        );
        let mut transfer = vec![Complex64::default(); n * n];
        // transposed layout: row index is the x frequency
        exec::for_each_chunk(&mut transfer, n, |ix, row| {
            let nx = freqs[ix];
            for (iy, t) in row.iter_mut().enumerate() {
                let ny = freqs[iy];
                let k = [carrier[0] + nx, carrier[1] + ny];
                let kz2 = 1.0 / (lambda * lambda) - k[0] * k[0] - k[1] * k[1];
                if kz2 <= 0.0 {
                    continue;
                }
                let w = walkoff(k, lambda).expect("propagating");
                if (d * (w[0] - chief[0])).abs() > margin || (d * (w[1] - chief[1])).abs() > margin {
                    continue;
                }
                let phase = 2.0 * PI * (d * kz2.sqrt() + nx * seg.shift[0] + ny * seg.shift[1]);
                *t = phase_out * Complex64::from_polar(1.0, phase);
            }
        });
        Ok(Self {
            grid,
            carrier,
            shift: seg.shift,
            transfer,
        })
    }

    pub fn apply(&self, u: &mut SampledField) -> Result<()> {
        if u.grid != self.grid || u.carrier != self.carrier {
            return Err(Error::Shape("field does not match propagation kernel".into()));
        }
        let n = self.grid.n();
        let data = u.as_slice_mut();
        fft::forward_transposed(data, n);
        exec::for_each_chunk_zip(data, &self.transfer, CHUNK, |_, a, t| {
            a.iter_mut().zip(t).for_each(|(z, h)| *z *= h)
        });
        fft::inverse_from_transposed(data, n);
        u.center = [u.center[0] + self.shift[0], u.center[1] + self.shift[1]];
        Ok(())
    }
}

/// Angular-spectrum propagation of `u` over `seg`; the destination grid is
/// recentered by the segment shift.
pub fn propagate(u: &SampledField, seg: &FreeSpaceSegment) -> Result<SampledField> {
    let kernel = AsmKernel::new(u.grid, u.carrier, seg)?;
    let mut out = u.clone();
    kernel.apply(&mut out)?;
    Ok(out)
}

fn map_local(u: &mut SampledField, f: impl Fn(f64, f64) -> Complex64 + Sync + Send) {
    let n = u.n();
    let xs = u.grid.coords();
    let c = u.center;
    exec::for_each_chunk(u.as_slice_mut(), n, |iy, row| {
        let y = c[1] + xs[iy];
        for (ix, z) in row.iter_mut().enumerate() {
            *z *= f(c[0] + xs[ix], y);
        }
    });
}

/// Thin-lens quadratic phase `exp(−iπ(x²+y²)/(λf))` about the lens axis,
/// zero outside the lens radius.
pub fn apply_lens(u: &SampledField, lens: &ThinLens, wavelength: f64) -> SampledField {
    let mut out = u.clone();
    let r2 = lens.radius * lens.radius;
    let k = PI / (wavelength * lens.focal_length);
    map_local(&mut out, |x, y| {
        let q = x * x + y * y;
        if q <= r2 {
            Complex64::from_polar(1.0, -k * q)
        } else {
            Complex64::default()
        }
    });
    out
}

/// Zeroes the field outside `radius` of the local origin.
pub fn apply_aperture(u: &SampledField, ap: &CircularAperture) -> SampledField {
    let mut out = u.clone();
    let r2 = ap.radius * ap.radius;
    map_local(&mut out, |x, y| {
        if x * x + y * y <= r2 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::default()
        }
    });
    out
}

/// 0/1 transmission of a centered circular aperture on a field's grid.
pub fn aperture_mask(grid: &GridSpec, center: [f64; 2], radius: f64) -> Vec<f64> {
    let xs = grid.coords();
    let r2 = radius * radius;
    let mut mask = Vec::with_capacity(grid.n() * grid.n());
    for &y in &xs {
        for &x in &xs {
            let (px, py) = (center[0] + x, center[1] + y);
            mask.push(if px * px + py * py <= r2 { 1.0 } else { 0.0 });
        }
    }
    mask
}

/// Multiplies the field by a precomputed real mask.
pub fn apply_mask(u: &mut SampledField, mask: &[f64]) {
    exec::for_each_chunk_zip(u.as_slice_mut(), mask, CHUNK, |_, a, m| {
        a.iter_mut().zip(m).for_each(|(z, w)| *z *= *w)
    });
}

/// Paraxial ray-transfer matrix `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Abcd {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Abcd {
    pub fn free_space(distance: f64) -> Self {
        Self { a: 1.0, b: distance, c: 0.0, d: 1.0 }
    }

    pub fn lens(focal_length: f64) -> Self {
        Self { a: 1.0, b: 0.0, c: -1.0 / focal_length, d: 1.0 }
    }

    /// `self` applied after `first`.
    pub fn after(&self, first: &Abcd) -> Abcd {
        Abcd {
            a: self.a * first.a + self.b * first.c,
            b: self.a * first.b + self.b * first.d,
            c: self.c * first.a + self.d * first.c,
            d: self.c * first.b + self.d * first.d,
        }
    }
}

/// Collins diffraction integral over an ABCD system, evaluated about the grid
/// center with a single FFT. The output pitch is fixed by the transform,
/// `λB/(N·pitch_in)`, and the output grid keeps the input's center.
#[derive(Debug, Clone)]
pub struct CollinsKernel {
    grid_in: GridSpec,
    grid_out: GridSpec,
    pre: Vec<Complex64>,
    post: Vec<Complex64>,
}

impl CollinsKernel {
    pub fn new(grid_in: GridSpec, system: Abcd, wavelength: f64) -> Result<Self> {
        if !(system.b > 0.0) {
            return Err(Error::Domain(format!(
                "Collins transform needs B > 0, got {}",
                system.b
            )));
        }
        let n = grid_in.n();
        let lb = wavelength * system.b;
        let grid_out = grid_in.with_pitch(lb / (n as f64 * grid_in.pitch()))?;
        let xin = grid_in.coords();
        let xout = grid_out.coords();
        let sign = |i: usize| if i % 2 == 0 { 1.0 } else { -1.0 };
        let chirp = |coef: f64, xs: &[f64]| -> Vec<Complex64> {
            let mut v = Vec::with_capacity(n * n);
            for (iy, &y) in xs.iter().enumerate() {
                for (ix, &x) in xs.iter().enumerate() {
                    let s = sign(ix) * sign(iy);
                    v.push(Complex64::from_polar(s, PI * coef * (x * x + y * y) / lb));
                }
            }
            v
        };
        let pre = chirp(system.a, &xin);
        let mut post = chirp(system.d, &xout);
        let scale = Complex64::new(0.0, -grid_in.pitch().powi(2) / lb);
        post.iter_mut().for_each(|z| *z *= scale);
        // the (−1)^{N/2} per-axis constant of the centered DFT squares to 1
        Ok(Self {
            grid_in,
            grid_out,
            pre,
            post,
        })
    }

    pub fn grid_out(&self) -> GridSpec {
        self.grid_out
    }

    pub fn apply(&self, u: &mut SampledField) -> Result<()> {
        if u.grid != self.grid_in {
            return Err(Error::Shape("field does not match Collins kernel".into()));
        }
        if u.carrier != [0.0, 0.0] {
            return Err(Error::Sampling("Collins transform needs a zero carrier".into()));
        }
        let n = self.grid_in.n();
        let data = u.as_slice_mut();
        exec::for_each_chunk_zip(data, &self.pre, CHUNK, |_, a, p| {
            a.iter_mut().zip(p).for_each(|(z, w)| *z *= w)
        });
        fft::forward(data, n);
        exec::for_each_chunk_zip(data, &self.post, CHUNK, |_, a, p| {
            a.iter_mut().zip(p).for_each(|(z, w)| *z *= w)
        });
        u.grid = self.grid_out;
        Ok(())
    }
}

/// One-shot Collins transform.
pub fn collins(u: &SampledField, system: Abcd, wavelength: f64) -> Result<SampledField> {
    let kernel = CollinsKernel::new(u.grid, system, wavelength)?;
    let mut out = u.clone();
    kernel.apply(&mut out)?;
    Ok(out)
}

/// Replaces the tilt carrier without touching the envelope, i.e. applies the
/// linear phase that re-aims the chief ray, times a constant phase.
pub fn rebase_carrier(u: &mut SampledField, carrier: [f64; 2], phase: f64) {
    u.carrier = carrier;
    if phase != 0.0 {
        let p = Complex64::from_polar(1.0, phase);
        exec::for_each_chunk(u.as_slice_mut(), CHUNK, |_, c| c.iter_mut().for_each(|z| *z *= p));
    }
}
