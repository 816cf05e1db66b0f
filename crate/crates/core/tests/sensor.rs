use approx::assert_relative_eq;
use num_complex::Complex64;
use proptest::prelude::*;
use resbeam::field::{GridSpec, SampledField};
use resbeam::sensor::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

// Table-value arithmetic evaluated at 25 digits outside this crate.
const PHOTONS_AT_1W: f64 = 867.719_903_902_620_4;
const DARK_ELECTRONS: f64 = 0.101_112_447_006_264_35;
const SNR_AT_1W: f64 = 28.407_812_077_217_22;

fn patch(width: usize, irradiance: f64, p: &SensorParams) -> IrradianceMap {
    let window = PixelWindow {
        width,
        height: width,
        pixel_size: p.pixel_size,
        corner: [0.0, 0.0],
    };
    IrradianceMap::uniform(window, irradiance)
}

#[test]
fn photon_and_dark_counts() {
    let p = SensorParams::default();
    assert_eq!(expected_photons(0.0, &p), 0.0);
    assert_relative_eq!(expected_photons(1.0, &p), PHOTONS_AT_1W, max_relative = 1e-12);
    let mut long = p;
    long.exposure_time *= 2.0;
    assert_relative_eq!(expected_photons(1.0, &long), 2.0 * PHOTONS_AT_1W, max_relative = 1e-12);
    assert_relative_eq!(dark_electrons(&p), DARK_ELECTRONS, max_relative = 1e-12);
    long.exposure_time = p.exposure_time * 10.0;
    assert_relative_eq!(dark_electrons(&long), 10.0 * DARK_ELECTRONS, max_relative = 1e-12);
    let mut cold = p;
    cold.dark_current_density = 0.0;
    assert_eq!(dark_electrons(&cold), 0.0);
}

#[test]
fn analytic_snr() {
    let p = SensorParams::default();
    assert_relative_eq!(snr_db(1.0, &p), SNR_AT_1W, max_relative = 1e-12);
    assert_eq!(snr_db(0.0, &p), f64::NEG_INFINITY);
    let mut ideal = p;
    ideal.noise_floor = 0.0;
    ideal.dark_current_density = 0.0;
    let s = p.quantum_efficiency * expected_photons(3.0, &p);
    assert_relative_eq!(snr_db(3.0, &ideal), 10.0 * s.log10(), max_relative = 1e-12);
    for k in [0.5, 1.0, 4.0] {
        let mut q = p;
        q.gain = k;
        assert_eq!(snr_db(1.0, &q), snr_db(1.0, &p));
    }
}

#[test]
fn dark_silent_sensor_reads_zero() {
    let mut p = SensorParams::default();
    p.dark_current_density = 0.0;
    p.noise_floor = 0.0;
    let img = expose(&patch(16, 0.0, &p), &p, 3).unwrap();
    assert!(img.dn.iter().all(|&v| v == 0));
    assert_eq!(img.saturated_count, 0);
}

#[test]
fn exposure_is_deterministic_per_seed() {
    let p = SensorParams::default();
    let map = patch(64, 1.0, &p);
    let a = expose(&map, &p, 11).unwrap();
    assert_eq!(a, expose(&map, &p, 11).unwrap());
    assert_ne!(a, expose(&map, &p, 12).unwrap());
    resbeam::exec::set_parallel(false);
    let serial = expose(&map, &p, 11).unwrap();
    resbeam::exec::set_parallel(true);
    assert_eq!(a, serial);
}

#[test]
fn shape_mismatch_is_rejected() {
    let p = SensorParams::default();
    let mut map = patch(4, 1.0, &p);
    map.values.pop();
    assert!(matches!(expose(&map, &p, 0), Err(resbeam::Error::Shape(_))));
}

#[test]
fn noiseless_image_is_affine_in_irradiance() {
    let p = SensorParams::default();
    let dark = p.gain * dark_electrons(&p);
    let zero = expose_noiseless(&patch(2, 0.0, &p), &p);
    assert!(zero.iter().all(|&v| (v - dark).abs() < 1e-15));
    let one = expose_noiseless(&patch(2, 1.0, &p), &p);
    let two = expose_noiseless(&patch(2, 2.0, &p), &p);
    for (a, b) in one.iter().zip(&two) {
        assert_relative_eq!(b - dark, 2.0 * (a - dark), max_relative = 1e-12);
    }
}

fn pixel_stats(p: &SensorParams, irradiance: f64, exposures: usize, seed: u64) -> (f64, f64) {
    let map = patch(1, irradiance, p);
    let xs: Vec<f64> = (0..exposures)
        .map(|i| expose(&map, p, resbeam::harness::seeds::mix(seed, i as u64, 0)).unwrap().dn[0] as f64)
        .collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[test]
fn mean_and_variance_follow_noise_model() {
    for gain in [1.0, 2.0] {
        let mut p = SensorParams::default();
        p.gain = gain;
        p.full_well = 0.9 * 4096.0 / gain;
        let mu = p.quantum_efficiency * expected_photons(1.0, &p) + dark_electrons(&p);
        let n = 10_000;
        let (mean, var) = pixel_stats(&p, 1.0, n, 5);
        let expect_var = gain * gain * (mu + p.noise_floor.powi(2)) + 1.0 / 12.0;
        let se = (expect_var / n as f64).sqrt();
        assert!((mean - gain * mu).abs() < 4.0 * se, "K={gain}: mean {mean} vs {}", gain * mu);
        assert!((var / expect_var - 1.0).abs() < 0.05, "K={gain}: var {var} vs {expect_var}");
    }
}

#[test]
fn monte_carlo_snr_agrees_with_formula() {
    let p = SensorParams::default();
    for irradiance in [0.1, 1.0, 3.0] {
        let mc = monte_carlo_snr_db(irradiance, &p, 10_000, 9).unwrap().unwrap();
        assert!((mc - snr_db(irradiance, &p)).abs() < 0.5, "{irradiance}: {mc}");
    }
    assert_eq!(monte_carlo_snr_db(100.0, &p, 100, 9).unwrap(), None);
}

#[test]
fn saturation_stops_mean_growth() {
    let p = SensorParams::default();
    let bright = p.full_well / (p.quantum_efficiency * expected_photons(1.0, &p));
    let (m1, _) = pixel_stats(&p, 1.5 * bright, 200, 1);
    let (m2, v2) = pixel_stats(&p, 3.0 * bright, 200, 2);
    assert_eq!(m1, m2);
    assert_eq!(v2, 0.0);
    let img = expose(&patch(8, 3.0 * bright, &p), &p, 0).unwrap();
    assert_eq!(img.saturated_count, 64);
}

#[test]
fn different_seeds_are_independent() {
    // contingency table of paired pixel values from two seeds
    let p = SensorParams::default();
    let map = patch(100, 2.0 / (p.quantum_efficiency * expected_photons(1.0, &p)), &p);
    let a = expose(&map, &p, 100).unwrap();
    let b = expose(&map, &p, 101).unwrap();
    let bins = 5usize;
    let bin = |v: u16| (v as usize).min(bins - 1);
    let mut table = vec![vec![0.0; bins]; bins];
    for (x, y) in a.dn.iter().zip(&b.dn) {
        table[bin(*x)][bin(*y)] += 1.0;
    }
    let n: f64 = a.dn.len() as f64;
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..bins).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let mut chi2 = 0.0;
    for i in 0..bins {
        for j in 0..bins {
            let e = rows[i] * cols[j] / n;
            if e > 0.0 {
                chi2 += (table[i][j] - e).powi(2) / e;
            }
        }
    }
    let dof = ((bins - 1) * (bins - 1)) as f64;
    let p_value = 1.0 - ChiSquared::new(dof).unwrap().cdf(chi2);
    assert!(p_value > 0.01, "chi2 {chi2}, p {p_value}");
}

#[test]
fn window_is_pixel_aligned_on_the_sensor() {
    let p = SensorParams::default();
    let w = PixelWindow::around([1.0e-3, -0.4e-3], 6e-3, &p).unwrap();
    assert_eq!(w.width, 3333);
    for c in w.corner {
        let k = c / p.pixel_size;
        assert!((k - k.round()).abs() < 1e-9);
    }
    let mid = w.pixel_center(0, w.width / 2);
    assert!((mid - 1.0e-3).abs() < p.pixel_size);
    // clipped at the sensor edge
    let edge = PixelWindow::around([7.37e-3, 0.0], 6e-3, &p).unwrap();
    assert!(edge.corner[0] + edge.width as f64 * p.pixel_size <= 8192.0 / 2.0 * p.pixel_size + 1e-12);
}

#[test]
fn resampling_preserves_power_and_uniform_level() {
    let grid = GridSpec::new(64, 29e-6, 3).unwrap();
    let field = SampledField::from_fn(grid, |x, y| {
        Complex64::new((-(x * x + y * y) / (0.3e-3f64).powi(2)).exp(), 0.0)
    })
    .with_center([0.1e-3, 0.0]);
    let total: f64 = field.intensity().iter().sum::<f64>() * grid.pitch().powi(2);
    let p = SensorParams::default();
    let w = PixelWindow::around([0.1e-3, 0.0], 2.2e-3, &p).unwrap();
    let map = resample_to_pixels(&field, w);
    let got: f64 = map.values.iter().sum::<f64>() * p.pixel_area();
    assert_relative_eq!(got, total, max_relative = 1e-9);

    let flat = SampledField::from_fn(grid, |_, _| Complex64::new(2.0, 0.0));
    let inner = PixelWindow::around([0.0, 0.0], 0.5e-3, &p).unwrap();
    let m = resample_to_pixels(&flat, inner);
    assert!(m.values.iter().all(|&v| (v - 4.0).abs() < 1e-12));
}

#[test]
fn pgm_dump_round_trips_header() {
    let p = SensorParams::default();
    let img = expose(&patch(3, 1.0, &p), &p, 4).unwrap();
    let dir = std::env::temp_dir().join(format!("resbeam-pgm-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("x.pgm");
    img.write_pgm(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let header_end = bytes.len() - 2 * 9;
    assert!(std::str::from_utf8(&bytes[..header_end]).unwrap().starts_with("P5\n3 3\n"));
    assert_eq!(u16::from_be_bytes([bytes[header_end], bytes[header_end + 1]]), img.dn[0]);
    std::fs::remove_dir_all(&dir).ok();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn dn_stays_in_range(irr in 0.0f64..20.0, seed in any::<u64>(), bits in 8u32..=16) {
        let mut p = SensorParams::default();
        p.bit_depth = bits;
        p.full_well = 0.9 * (1u64 << bits) as f64;
        let img = expose(&patch(8, irr, &p), &p, seed).unwrap();
        prop_assert!(img.dn.iter().all(|&v| v <= p.max_dn()));
    }
}
