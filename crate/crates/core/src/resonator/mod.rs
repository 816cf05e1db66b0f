//! Round-trip operator of one transmitter/receiver cavity and its
//! self-reproducing mode.
//!
//! Layout per side: pupil → (f) → lens → (l) → mirror, with the pupil in the
//! front focal plane of the lens. The gain medium sits at the transmitter
//! pupil and the air leg joins the two pupils. Chief rays cross each pupil at
//! its center, so the focal spot on a mirror lands at `±f·tanθ` whatever the
//! mirror-to-sensor gap.
//!
//! Two representation choices keep the desk-scale grid resolvable:
//! fields carry the chief-ray tilt as an explicit carrier (see
//! [`SampledField`]), and each lens-to-mirror leg is a single Collins
//! transform onto a fine focal-plane grid. Lenses are ideal: they bend the
//! chief ray exactly and apply the paraxial quadratic about it.
//!
//! Mirror-plane fields use sensor coordinates, which are the transmitter
//! frame point-reflected through the lens axis.

mod eig;

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec;
use crate::field::{l2_difference, uniform_disk, GridSpec, SampledField};
use crate::optics::{
    aperture_mask, apply_mask, rebase_carrier, Abcd, AsmKernel, CircularAperture, CollinsKernel, FreeSpaceSegment,
    ThinLens,
};

use eig::Dense;

/// Lens plus mirror retroreflector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatsEye {
    pub lens: ThinLens,
    pub mirror_radius: f64,
    pub mirror_reflectivity: f64,
    /// Lens-to-mirror distance (m).
    pub lens_mirror_gap: f64,
}

impl CatsEye {
    pub fn new(lens: ThinLens, mirror_radius: f64, mirror_reflectivity: f64, lens_mirror_gap: f64) -> Result<Self> {
        if !(lens_mirror_gap > lens.focal_length) {
            return Err(Error::Config(format!(
                "lens-mirror gap {lens_mirror_gap} m must exceed the focal length {} m",
                lens.focal_length
            )));
        }
        if !(mirror_radius > 0.0) || !(mirror_reflectivity > 0.0 && mirror_reflectivity <= 1.0) {
            return Err(Error::Config(
                "mirror radius must be > 0 and reflectivity in (0, 1]".into(),
            ));
        }
        Ok(Self {
            lens,
            mirror_radius,
            mirror_reflectivity,
            lens_mirror_gap,
        })
    }

    fn mirror_to_lens(&self) -> Abcd {
        Abcd::lens(self.lens.focal_length).after(&Abcd::free_space(self.lens_mirror_gap))
    }

    fn lens_to_mirror(&self) -> Abcd {
        Abcd::free_space(self.lens_mirror_gap).after(&Abcd::lens(self.lens.focal_length))
    }
}

/// One transmitter/receiver cavity. The target position is the receiver
/// pupil in the transmitter frame; both sides share axis orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonatorGeometry {
    pub tx: CatsEye,
    pub rx: CatsEye,
    pub gain_aperture: CircularAperture,
    pub target_position: [f64; 3],
    pub wavelength: f64,
    /// Mirror-to-sensor distance behind the transmitter mirror (m).
    pub cmos_gap: f64,
}

impl ResonatorGeometry {
    pub fn validate(&self) -> Result<()> {
        let [x, y, z] = self.target_position;
        if !(z > 0.0) || !x.is_finite() || !y.is_finite() {
            return Err(Error::Config(format!("target z must be > 0, got {z}")));
        }
        if !(self.wavelength > 0.0) || !(self.cmos_gap >= 0.0) {
            return Err(Error::Config("wavelength must be > 0 and cmos gap >= 0".into()));
        }
        Ok(())
    }

    /// Transverse direction tangents `(x/z, y/z)` of the line of sight.
    pub fn slope(&self) -> [f64; 2] {
        let [x, y, z] = self.target_position;
        [x / z, y / z]
    }

    /// Carrier of a beam travelling from the transmitter toward the receiver.
    fn outbound_carrier(&self) -> [f64; 2] {
        let [x, y, z] = self.target_position;
        let r = (x * x + y * y + z * z).sqrt();
        [x / (self.wavelength * r), y / (self.wavelength * r)]
    }

    /// Largest aperture radius, which sets the computation window.
    pub fn largest_aperture(&self) -> f64 {
        [
            self.gain_aperture.radius,
            self.tx.lens.radius,
            self.rx.lens.radius,
            self.tx.mirror_radius,
            self.rx.mirror_radius,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// Expected spot center on the sensor, `f·tanθ·(cosφ, sinφ)`.
    pub fn ideal_spot(&self) -> [f64; 2] {
        let t = self.slope();
        let f = self.tx.lens.focal_length;
        [f * t[0], f * t[1]]
    }
}

enum Stage {
    Asm(AsmKernel),
    Collins(CollinsKernel),
    Mask(Vec<f64>),
    Rebase { carrier: [f64; 2], phase: f64 },
    Relabel([f64; 2]),
    EscapeCheck(&'static str),
    PointReflect,
    Settle { grid: GridSpec, center: [f64; 2] },
}

/// Tracks grid, center and carrier while the stage list is assembled.
struct Builder {
    grid: GridSpec,
    center: [f64; 2],
    carrier: [f64; 2],
    wavelength: f64,
    stages: Vec<Stage>,
}

impl Builder {
    fn asm(&mut self, distance: f64, shift: [f64; 2]) -> Result<()> {
        let seg = FreeSpaceSegment::new(distance, shift, self.wavelength)?;
        self.stages.push(Stage::Asm(AsmKernel::new(self.grid, self.carrier, &seg)?));
        self.center = [self.center[0] + shift[0], self.center[1] + shift[1]];
        Ok(())
    }

    fn collins(&mut self, system: Abcd) -> Result<()> {
        let k = CollinsKernel::new(self.grid, system, self.wavelength)?;
        self.grid = k.grid_out();
        self.stages.push(Stage::Collins(k));
        Ok(())
    }

    fn mask(&mut self, radius: f64) {
        let m = aperture_mask(&self.grid, self.center, radius);
        if m.iter().any(|&w| w != 1.0) {
            self.stages.push(Stage::Mask(m));
        }
    }

    /// Ideal lens at the current plane: the chief ray leaves with `carrier`.
    fn rebase(&mut self, carrier: [f64; 2], focal_length: f64) {
        let c = self.center;
        let phase = -PI * (c[0] * c[0] + c[1] * c[1]) / (self.wavelength * focal_length);
        self.stages.push(Stage::Rebase { carrier, phase });
        self.carrier = carrier;
    }

    fn relabel(&mut self, offset: [f64; 2]) {
        self.stages.push(Stage::Relabel(offset));
        self.center = [self.center[0] + offset[0], self.center[1] + offset[1]];
    }

    fn reflect(&mut self) {
        self.stages.push(Stage::PointReflect);
        self.center = [-self.center[0], -self.center[1]];
        self.carrier = [-self.carrier[0], -self.carrier[1]];
    }
}

/// Precomputed round-trip operator starting and ending at the transmitter
/// mirror, in sensor coordinates.
pub struct RoundTrip {
    stages: Vec<Stage>,
    /// Index of the first stage of the return pass through the gain medium.
    seed_stage: usize,
    pupil_grid: GridSpec,
    mirror_grid: GridSpec,
    mirror_center: [f64; 2],
    geometry: ResonatorGeometry,
}

impl RoundTrip {
    pub fn new(g: &ResonatorGeometry, pupil_grid: GridSpec) -> Result<Self> {
        g.validate()?;
        pupil_grid.check_covers(g.largest_aperture())?;
        let lambda = g.wavelength;
        let [xt, yt, zt] = g.target_position;
        let t = g.slope();
        let (ftx, frx) = (g.tx.lens.focal_length, g.rx.lens.focal_length);
        let k_out = g.outbound_carrier();
        let k_back = [-k_out[0], -k_out[1]];

        // mirror grid: Collins image of the pupil grid through mirror→lens
        let fine = pupil_grid.with_pitch(lambda * g.tx.lens_mirror_gap / (pupil_grid.n() as f64 * pupil_grid.pitch()))?;
        let mirror_tx = [-ftx * t[0], -ftx * t[1]];
        let mut b = Builder {
            grid: fine,
            center: [-mirror_tx[0], -mirror_tx[1]],
            carrier: [0.0, 0.0],
            wavelength: lambda,
            stages: Vec::new(),
        };
        b.reflect();
        b.mask(g.tx.mirror_radius);
        b.collins(g.tx.mirror_to_lens())?;
        b.mask(g.tx.lens.radius);
        b.rebase(k_out, ftx);
        b.asm(ftx, [ftx * t[0], ftx * t[1]])?;
        b.stages.push(Stage::EscapeCheck("transmitter pupil"));
        b.mask(g.gain_aperture.radius);
        b.asm(zt, [xt, yt])?;
        b.relabel([-xt, -yt]);
        b.stages.push(Stage::EscapeCheck("receiver pupil"));
        b.asm(frx, [frx * t[0], frx * t[1]])?;
        b.mask(g.rx.lens.radius);
        b.rebase([0.0, 0.0], frx);
        b.collins(g.rx.lens_to_mirror())?;
        b.mask(g.rx.mirror_radius);
        b.collins(g.rx.mirror_to_lens())?;
        b.mask(g.rx.lens.radius);
        b.rebase(k_back, frx);
        b.asm(frx, [-frx * t[0], -frx * t[1]])?;
        b.stages.push(Stage::EscapeCheck("receiver pupil"));
        b.relabel([xt, yt]);
        b.asm(zt, [-xt, -yt])?;
        b.stages.push(Stage::EscapeCheck("transmitter pupil"));
        let seed_stage = b.stages.len();
        b.mask(g.gain_aperture.radius);
        b.asm(ftx, [-ftx * t[0], -ftx * t[1]])?;
        b.mask(g.tx.lens.radius);
        b.rebase([0.0, 0.0], ftx);
        b.collins(g.tx.lens_to_mirror())?;
        b.reflect();
        let drift = (b.grid.pitch() / fine.pitch() - 1.0).abs();
        if drift > 1e-9 {
            return Err(Error::Numerical(format!("mirror grid pitch drifted by {drift:e}")));
        }
        let mirror_center = [-mirror_tx[0], -mirror_tx[1]];
        b.stages.push(Stage::Settle {
            grid: fine,
            center: mirror_center,
        });
        Ok(Self {
            stages: b.stages,
            seed_stage,
            pupil_grid,
            mirror_grid: fine,
            mirror_center,
            geometry: *g,
        })
    }

    pub fn mirror_grid(&self) -> GridSpec {
        self.mirror_grid
    }

    pub fn mirror_center(&self) -> [f64; 2] {
        self.mirror_center
    }

    /// Number of stages in one round trip.
    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    fn run(&self, u: &mut SampledField, from: usize) -> Result<()> {
        for stage in &self.stages[from..] {
            match stage {
                Stage::Asm(k) => k.apply(u)?,
                Stage::Collins(k) => k.apply(u)?,
                Stage::Mask(m) => apply_mask(u, m),
                Stage::Rebase { carrier, phase } => rebase_carrier(u, *carrier, *phase),
                Stage::Relabel(o) => u.center = [u.center[0] + o[0], u.center[1] + o[1]],
                Stage::EscapeCheck(plane) => escape_check(u, plane)?,
                Stage::PointReflect => point_reflect(u),
                Stage::Settle { grid, center } => {
                    u.grid = *grid;
                    u.center = *center;
                }
            }
        }
        Ok(())
    }

    /// Applies one round trip in place.
    pub fn apply(&self, u: &mut SampledField) -> Result<()> {
        let g = self.mirror_grid;
        let tol = 1e-12 * g.window();
        let same_grid = u.grid.n() == g.n()
            && u.grid.expansion_factor() == g.expansion_factor()
            && (u.grid.pitch() / g.pitch() - 1.0).abs() < 1e-12;
        let same_center = (u.center[0] - self.mirror_center[0]).abs() < tol
            && (u.center[1] - self.mirror_center[1]).abs() < tol;
        if !same_grid || !same_center || u.carrier != [0.0, 0.0] {
            return Err(Error::Shape("field is not the mirror-plane field of this cavity".into()));
        }
        u.grid = g;
        u.center = self.mirror_center;
        self.run(u, 0)
    }

    /// Uniform disk filling the gain aperture, carried to the mirror.
    pub fn seed_field(&self) -> Result<SampledField> {
        let g = &self.geometry;
        let k = g.outbound_carrier();
        let mut u = uniform_disk(self.pupil_grid, g.gain_aperture.radius)?.with_carrier([-k[0], -k[1]]);
        self.run(&mut u, self.seed_stage)?;
        Ok(u)
    }
}

fn escape_check(u: &SampledField, plane: &'static str) -> Result<()> {
    let c = u.centroid().ok_or_else(|| {
        Error::UnstableConfiguration(format!("no energy reaches the {plane}"))
    })?;
    let limit = u.grid.window() / 4.0;
    if (c[0] - u.center[0]).abs() > limit || (c[1] - u.center[1]).abs() > limit {
        return Err(Error::FieldEscape { plane });
    }
    Ok(())
}

/// Maps the field at `p` to `−p` (index `i` → `N − i` modulo `N`).
fn point_reflect(u: &mut SampledField) {
    let n = u.n();
    let src = u.as_slice().to_vec();
    exec::for_each_chunk(u.as_slice_mut(), n, |iy, row| {
        let sy = (n - iy) % n;
        for (ix, z) in row.iter_mut().enumerate() {
            *z = src[sy * n + (n - ix) % n];
        }
    });
    u.center = [-u.center[0], -u.center[1]];
    u.carrier = [-u.carrier[0], -u.carrier[1]];
}

/// Pupil grid whose Collins image through the transmitter cat's eye is `mirror`.
pub fn pupil_grid_for(mirror: GridSpec, g: &ResonatorGeometry) -> Result<GridSpec> {
    mirror.with_pitch(g.wavelength * g.tx.lens_mirror_gap / (mirror.n() as f64 * mirror.pitch()))
}

/// Applies one round trip to a mirror-plane field, returning a new field.
pub fn round_trip(u: &SampledField, g: &ResonatorGeometry) -> Result<SampledField> {
    let rt = RoundTrip::new(g, pupil_grid_for(u.grid, g)?)?;
    let mut out = u.clone();
    rt.apply(&mut out)?;
    Ok(out)
}

/// Converged (or best-effort) self-reproducing mode.
#[derive(Debug, Clone)]
pub struct ModeSolution {
    /// Mode incident on the transmitter mirror, unit energy, sensor coordinates.
    pub mode_at_m1: SampledField,
    /// Rayleigh quotient of the round-trip operator on the mode.
    pub eigenvalue: Complex64,
    /// `|ξ|²`, the round-trip transmission efficiency.
    pub transmission_efficiency: f64,
    /// Round-trip evaluations spent.
    pub iterations: usize,
    pub converged: bool,
    /// Last value of the convergence metric.
    pub field_change: f64,
    /// `‖T u − ξ u‖ / (|ξ| ‖u‖)` for the returned mode.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Threshold on [`l2_difference`] between successive iterates.
    pub tol: f64,
    /// Budget of round-trip evaluations.
    pub max_iter: usize,
    /// Plain power iterations before the first Krylov cycle.
    pub warmup: usize,
    pub krylov_dim: usize,
    /// Required relative eigen-residual, on top of `tol`.
    pub residual_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iter: 400,
            warmup: 3,
            krylov_dim: 20,
            residual_tol: 1e-8,
        }
    }
}

fn norm(u: &SampledField) -> f64 {
    let s = u.as_slice();
    exec::sum_chunks(s.len(), 1 << 14, |r| s[r].iter().map(|z| z.norm_sqr()).sum()).sqrt()
}

fn check_finite(u: &SampledField) -> Result<()> {
    if u.as_slice().iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical("non-finite amplitude in round trip".into()))
    }
}

fn normalized(mut u: SampledField) -> Result<SampledField> {
    let n = norm(&u);
    if !(n > 0.0) {
        return Err(Error::UnstableConfiguration("round trip left no energy in the cavity".into()));
    }
    if !n.is_finite() {
        return Err(Error::Numerical("non-finite field norm".into()));
    }
    u = u.scaled(Complex64::new(1.0 / n, 0.0));
    Ok(u)
}

fn axpy(y: &mut SampledField, a: Complex64, x: &SampledField) {
    exec::for_each_chunk_zip(y.as_slice_mut(), x.as_slice(), 1 << 14, |_, ys, xs| {
        ys.iter_mut().zip(xs).for_each(|(p, q)| *p += a * q)
    });
}

fn step(rt: &RoundTrip, u: &SampledField) -> Result<SampledField> {
    let mut v = u.clone();
    rt.apply(&mut v).map_err(|e| match e {
        Error::FieldEscape { plane } => Error::UnstableConfiguration(format!("field escaped at the {plane}")),
        other => other,
    })?;
    check_finite(&v)?;
    Ok(v)
}

/// One Arnoldi cycle from unit vector `u`; returns the dominant Ritz vector
/// (unit norm) and the number of round trips used.
fn arnoldi_cycle(rt: &RoundTrip, u: &SampledField, dim: usize) -> Result<(SampledField, usize)> {
    let mut basis = vec![u.clone()];
    let mut h = Dense::zeros(dim + 1);
    let mut used = 0;
    let mut k = 0;
    while k < dim {
        let mut w = step(rt, &basis[k])?;
        used += 1;
        for _pass in 0..2 {
            for (i, v) in basis.iter().enumerate() {
                let c = v.inner(&w)?;
                h.set(i, k, h.at(i, k) + c);
                axpy(&mut w, -c, v);
            }
        }
        let beta = norm(&w);
        k += 1;
        h.set(k, k - 1, Complex64::new(beta, 0.0));
        if beta <= 1e-14 * h.at(k - 1, k - 1).norm().max(1e-300) {
            break;
        }
        basis.push(w.scaled(Complex64::new(1.0 / beta, 0.0)));
    }
    let mut hm = Dense::zeros(k);
    for i in 0..k {
        for j in 0..k {
            hm.set(i, j, h.at(i, j));
        }
    }
    let ritz = eig::hessenberg_eigenvalues(&hm)
        .ok_or_else(|| Error::Numerical("Hessenberg QR did not converge".into()))?;
    let best = ritz
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .expect("non-empty Krylov space");
    let s = eig::eigenvector(&hm, best);
    let mut y = SampledField::zeros(u.grid).with_center(u.center);
    for (coef, v) in s.iter().zip(&basis) {
        axpy(&mut y, *coef, v);
    }
    Ok((normalized(y)?, used))
}

/// Self-reproducing mode of `g` on the pupil grid `grid`.
pub fn solve_mode(g: &ResonatorGeometry, grid: GridSpec, tol: f64, max_iter: usize) -> Result<ModeSolution> {
    solve_mode_with(
        g,
        grid,
        &SolverOptions {
            tol,
            max_iter,
            ..SolverOptions::default()
        },
    )
}

/// Power iteration from the gain-aperture disk, accelerated by restarted
/// Arnoldi cycles. Convergence needs both the field-change metric below
/// `tol` and a small eigen-residual.
pub fn solve_mode_with(g: &ResonatorGeometry, grid: GridSpec, opts: &SolverOptions) -> Result<ModeSolution> {
    if opts.max_iter == 0 {
        return Err(Error::Config("max_iter must be >= 1".into()));
    }
    let rt = RoundTrip::new(g, grid)?;
    let mut u = normalized(rt.seed_field()?)?;
    let mut evals = 0;
    for _ in 0..opts.warmup.min(opts.max_iter.saturating_sub(1)) {
        u = normalized(step(&rt, &u)?)?;
        evals += 1;
    }
    loop {
        let next = step(&rt, &u)?;
        evals += 1;
        let xi = u.inner(&next)?;
        let mut r = next.clone();
        axpy(&mut r, -xi, &u);
        let residual = norm(&r) / xi.norm().max(1e-300);
        let change = l2_difference(&next, &u)?;
        let converged = change < opts.tol && residual < opts.residual_tol;
        if converged || evals >= opts.max_iter {
            let e = crate::field::energy(&u);
            let mode = u.scaled(Complex64::new(1.0 / e.sqrt(), 0.0));
            return Ok(ModeSolution {
                mode_at_m1: mode,
                eigenvalue: xi,
                transmission_efficiency: xi.norm_sqr(),
                iterations: evals,
                converged,
                field_change: change,
                residual,
            });
        }
        let budget = opts.max_iter - evals;
        if opts.krylov_dim >= 2 && budget > 1 {
            let (y, used) = arnoldi_cycle(&rt, &u, opts.krylov_dim.min(budget - 1))?;
            evals += used;
            u = y;
        } else {
            u = normalized(next)?;
        }
    }
}

/// Mode leaking through the transmitter mirror, propagated to the sensor.
/// Shape only; absolute scaling is applied by the power model.
pub fn field_on_cmos(m: &ModeSolution, g: &ResonatorGeometry) -> Result<SampledField> {
    if !m.converged {
        return Err(Error::Numerical("mode solve did not converge".into()));
    }
    let mut u = m.mode_at_m1.clone();
    let mask = aperture_mask(&u.grid, u.center, g.tx.mirror_radius);
    apply_mask(&mut u, &mask);
    if g.cmos_gap == 0.0 {
        return Ok(u);
    }
    let k = CollinsKernel::new(u.grid, Abcd::free_space(g.cmos_gap), g.wavelength)?;
    k.apply(&mut u)?;
    Ok(u)
}
