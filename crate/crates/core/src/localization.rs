//! Spot centroiding, incident angles and binocular triangulation.
//!
//! Frames: both transmitter frames are axis-aligned with the world frame,
//! TX1's pupil at the origin and TX2's at `(b, 0, 0)`; z points at the
//! target. Azimuths of both transmitters are measured in this shared
//! orientation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::sensor::DigitalImage;

/// How the centroid weight threshold `I_th` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ThresholdPolicy {
    /// Mean plus `k_sigma` standard deviations of a `ring`-pixel border.
    Border { ring: usize, k_sigma: f64 },
    /// Fixed DN level.
    Fixed { dn: f64 },
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy::Border { ring: 4, k_sigma: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpotEstimate {
    /// Spot center in sensor coordinates (m).
    pub center: [f64; 2],
    pub pixels_used: usize,
    pub threshold: f64,
}

/// Full-quadrant azimuth in (−π, π], zero on axis.
fn azimuth(x: f64, y: f64) -> f64 {
    if x == 0.0 && y == 0.0 {
        return 0.0;
    }
    let phi = y.atan2(x);
    if phi == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        phi
    }
}

fn border_threshold(img: &DigitalImage, ring: usize, k_sigma: f64) -> f64 {
    let (w, h) = (img.width, img.height);
    let ring = ring.min(w / 2).min(h / 2).max(1);
    let (mut n, mut s, mut s2) = (0.0, 0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            if x < ring || y < ring || x >= w - ring || y >= h - ring {
                let v = img.get(x, y) as f64;
                n += 1.0;
                s += v;
                s2 += v * v;
            }
        }
    }
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0);
    mean + k_sigma * var.sqrt()
}

/// Weighted mean of pixel centers with weight `DN − I_th` above threshold.
pub fn centroid(img: &DigitalImage, policy: ThresholdPolicy) -> Result<SpotEstimate> {
    let threshold = match policy {
        ThresholdPolicy::Border { ring, k_sigma } => border_threshold(img, ring, k_sigma),
        ThresholdPolicy::Fixed { dn } => dn,
    };
    let w = img.width;
    let rows = exec::map_indexed(img.height, |y| {
        let (mut sw, mut sx, mut count) = (0.0, 0.0, 0usize);
        for (x, &v) in img.dn[y * w..(y + 1) * w].iter().enumerate() {
            let weight = v as f64 - threshold;
            if weight > 0.0 {
                sw += weight;
                sx += weight * x as f64;
                count += 1;
            }
        }
        (sw, sx, sw * y as f64, count)
    });
    let (mut sw, mut sx, mut sy, mut count) = (0.0, 0.0, 0.0, 0);
    for (a, b, c, d) in rows {
        sw += a;
        sx += b;
        sy += c;
        count += d;
    }
    if count == 0 {
        return Err(Error::SpotNotFound { threshold });
    }
    let win = img.window;
    let ps = win.pixel_size;
    Ok(SpotEstimate {
        center: [
            win.corner[0] + (sx / sw + 0.5) * ps,
            win.corner[1] + (sy / sw + 0.5) * ps,
        ],
        pixels_used: count,
        threshold,
    })
}

/// Polar angle θ from the lens axis and azimuth φ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncidentAngles {
    pub theta: f64,
    pub phi: f64,
}

impl IncidentAngles {
    /// Angles of the direction from `pupil` to `target`.
    pub fn toward(pupil: [f64; 3], target: [f64; 3]) -> Self {
        let v = [target[0] - pupil[0], target[1] - pupil[1], target[2] - pupil[2]];
        Self {
            theta: v[0].hypot(v[1]).atan2(v[2]),
            phi: azimuth(v[0], v[1]),
        }
    }
}

/// θ = atan(|c|/f), φ = atan2(c_y, c_x), with φ = 0 on axis.
pub fn angles_from_center(c: [f64; 2], focal_length: f64) -> IncidentAngles {
    IncidentAngles {
        theta: (c[0].hypot(c[1]) / focal_length).atan(),
        phi: azimuth(c[0], c[1]),
    }
}

/// Spot center `f·tanθ·(cosφ, sinφ)`.
pub fn center_from_angles(a: IncidentAngles, focal_length: f64) -> Result<[f64; 2]> {
    if !(a.theta >= 0.0 && a.theta < std::f64::consts::FRAC_PI_2) {
        return Err(Error::Domain(format!("theta must be in [0, pi/2), got {}", a.theta)));
    }
    let r = focal_length * a.theta.tan();
    Ok([r * a.phi.cos(), r * a.phi.sin()])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinocularConfig {
    /// Pupil separation b (m).
    pub baseline: f64,
    pub focal_length: f64,
    /// Full monocular field of view ζ (rad).
    pub fov: f64,
    /// Mount height h (m).
    pub height: f64,
}

impl BinocularConfig {
    pub fn tx1(&self) -> [f64; 3] {
        [0.0, 0.0, 0.0]
    }

    pub fn tx2(&self) -> [f64; 3] {
        [self.baseline, 0.0, 0.0]
    }

    /// Exact angles seen by both transmitters.
    pub fn project(&self, target: [f64; 3]) -> (IncidentAngles, IncidentAngles) {
        (
            IncidentAngles::toward(self.tx1(), target),
            IncidentAngles::toward(self.tx2(), target),
        )
    }

    /// Inside both monocular cones of half-angle ζ/2.
    pub fn sees(&self, target: [f64; 3]) -> bool {
        let (a, b) = self.project(target);
        target[2] > 0.0 && a.theta <= self.fov / 2.0 && b.theta <= self.fov / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetEstimate {
    pub position: [f64; 3],
    pub range_to_p1: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

/// Default `|sin(γ₁+γ₂)|` below which the two rays count as parallel.
pub const PARALLEL_EPS: f64 = 1e-9;

/// Closed-form triangulation from the baseline triangle: γ₁, γ₂ are the
/// angles at P₁ and P₂, `|TP₁| = b·sinγ₂/sin(γ₁+γ₂)`.
pub fn triangulate(a1: IncidentAngles, a2: IncidentAngles, cfg: &BinocularConfig) -> Result<TargetEstimate> {
    let g1 = (a1.theta.sin() * a1.phi.cos()).clamp(-1.0, 1.0).acos();
    let g2 = (-a2.theta.sin() * a2.phi.cos()).clamp(-1.0, 1.0).acos();
    let s = (g1 + g2).sin();
    if s.abs() < PARALLEL_EPS {
        return Err(Error::DegenerateRays(s.abs()));
    }
    let range = g2.sin() * cfg.baseline / s;
    let position = [
        range * a1.theta.sin() * a1.phi.cos(),
        range * a1.theta.sin() * a1.phi.sin(),
        range * a1.theta.cos(),
    ];
    if !(position[2] > 0.0) {
        return Err(Error::InconsistentAngles(position[2]));
    }
    Ok(TargetEstimate {
        position,
        range_to_p1: range,
        gamma1: g1,
        gamma2: g2,
    })
}

fn direction(a: IncidentAngles) -> [f64; 3] {
    [
        a.theta.sin() * a.phi.cos(),
        a.theta.sin() * a.phi.sin(),
        a.theta.cos(),
    ]
}

/// Midpoint of the common perpendicular of both rays. Uses all four
/// angles; offered for comparison with [`triangulate`].
pub fn triangulate_midpoint(a1: IncidentAngles, a2: IncidentAngles, cfg: &BinocularConfig) -> Result<TargetEstimate> {
    let (d1, d2) = (direction(a1), direction(a2));
    let p2 = cfg.tx2();
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let c = dot(d1, d2);
    let denom = 1.0 - c * c;
    if denom.sqrt() < PARALLEL_EPS {
        return Err(Error::DegenerateRays(denom.sqrt()));
    }
    // P1 = 0, w = P1 - P2
    let w = [-p2[0], -p2[1], -p2[2]];
    let (dw1, dw2) = (dot(d1, w), dot(d2, w));
    let s1 = (c * dw2 - dw1) / denom;
    let s2 = (dw2 - c * dw1) / denom;
    let q1 = [s1 * d1[0], s1 * d1[1], s1 * d1[2]];
    let q2 = [p2[0] + s2 * d2[0], p2[1] + s2 * d2[1], p2[2] + s2 * d2[2]];
    let position = [(q1[0] + q2[0]) / 2.0, (q1[1] + q2[1]) / 2.0, (q1[2] + q2[2]) / 2.0];
    if !(position[2] > 0.0) {
        return Err(Error::InconsistentAngles(position[2]));
    }
    let g1 = d1[0].clamp(-1.0, 1.0).acos();
    let g2 = (-d2[0]).clamp(-1.0, 1.0).acos();
    Ok(TargetEstimate {
        position,
        range_to_p1: dot(position, position).sqrt(),
        gamma1: g1,
        gamma2: g2,
    })
}

/// Stereo coverage at mount height `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScopeBox {
    /// Single-transmitter coverage width `2h·tan(ζ/2)`.
    pub width: f64,
    /// `w − b`.
    pub stereo_width: f64,
    /// `√(4wh/cos(ζ/2) − w²)`.
    pub stereo_length: f64,
    /// `(w − b)h/w`.
    pub stereo_height: f64,
}

pub fn effective_scope(cfg: &BinocularConfig) -> Result<ScopeBox> {
    let half = cfg.fov / 2.0;
    let w = 2.0 * cfg.height * half.tan();
    if cfg.baseline >= w {
        return Err(Error::EmptyScope {
            baseline: cfg.baseline,
            width: w,
        });
    }
    Ok(ScopeBox {
        width: w,
        stereo_width: w - cfg.baseline,
        stereo_length: (4.0 * w * cfg.height / half.cos() - w * w).sqrt(),
        stereo_height: (w - cfg.baseline) * cfg.height / w,
    })
}

/// Euclidean spot error (m).
pub fn spot_rmse(est: &SpotEstimate, truth: [f64; 2]) -> f64 {
    (est.center[0] - truth[0]).hypot(est.center[1] - truth[1])
}

/// Euclidean target error (m).
pub fn target_rmse(est: &TargetEstimate, truth: [f64; 3]) -> f64 {
    let d: Vec<f64> = (0..3).map(|i| est.position[i] - truth[i]).collect();
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}
