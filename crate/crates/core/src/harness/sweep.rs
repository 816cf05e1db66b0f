//! Sweep orchestration. Points run through `exec::map_indexed`, so rows
//! come back in sweep order whatever the worker count.

use std::collections::HashMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{Estimator, ExperimentConfig, Plane};
use super::record::{SweepRecord, TxColumns};
use super::seeds;
use crate::error::{Error, Result};
use crate::exec;
use crate::field::{energy, SampledField};
use crate::localization::{
    angles_from_center, center_from_angles, centroid, spot_rmse, target_rmse, triangulate,
    triangulate_midpoint, BinocularConfig,
};
use crate::power::{irradiance_scale, output_power, PowerResult};
use crate::resonator::{field_on_cmos, solve_mode_with};
use crate::sensor::{expose, monte_carlo_snr_db, resample_to_pixels, snr_db, IrradianceMap, PixelWindow};

/// Steady-state cavity seen from one transmitter.
#[derive(Debug, Clone)]
pub struct Cavity {
    /// Round-trip transmission |ξ|².
    pub eta: f64,
    /// Sensor-plane field with unit energy.
    pub cmos_field: SampledField,
    /// Chief-ray spot position `f·(x, y)/z`.
    pub ideal_spot: [f64; 2],
}

/// Short status tag for a failed solve or pipeline step.
pub fn status_tag(e: &Error) -> &'static str {
    match e {
        Error::UnstableConfiguration(_) => "unstable",
        Error::FieldEscape { .. } => "field_escape",
        Error::Sampling(_) => "sampling",
        Error::Numerical(_) => "not_converged",
        Error::DegenerateMode => "degenerate_mode",
        Error::InvalidLossBudget(_) => "invalid_loss_budget",
        Error::SpotNotFound { .. } => "spot_not_found",
        Error::DegenerateRays(_) => "degenerate_rays",
        Error::InconsistentAngles(_) => "inconsistent_angles",
        _ => "error",
    }
}

/// Solves the cavity for a retroreflector at `local_target` in a
/// transmitter frame.
pub fn solve_cavity(cfg: &ExperimentConfig, local_target: [f64; 3]) -> Result<Cavity> {
    let geom = cfg.resonator(local_target)?;
    let mode = solve_mode_with(&geom, cfg.pupil_grid()?, &cfg.solver_options())?;
    if !mode.converged {
        return Err(Error::Numerical(format!(
            "mode solve stopped after {} iterations at change {:.3e}",
            mode.iterations, mode.field_change
        )));
    }
    let field = field_on_cmos(&mode, &geom)?;
    let e = energy(&field);
    if !(e > 0.0) {
        return Err(Error::DegenerateMode);
    }
    Ok(Cavity {
        eta: mode.transmission_efficiency,
        cmos_field: field.scaled(num_complex::Complex64::new(e.sqrt().recip(), 0.0)),
        ideal_spot: geom.ideal_spot(),
    })
}

type Solved = std::result::Result<Arc<Cavity>, &'static str>;

fn key(t: [f64; 3]) -> [u64; 3] {
    t.map(f64::to_bits)
}

/// Solves every distinct local target once.
struct CavityCache(HashMap<[u64; 3], Solved>);

impl CavityCache {
    fn build(cfg: &ExperimentConfig, targets: impl IntoIterator<Item = [f64; 3]>) -> Self {
        let mut unique: Vec<[f64; 3]> = vec![];
        let mut seen = std::collections::HashSet::new();
        for t in targets {
            if seen.insert(key(t)) {
                unique.push(t);
            }
        }
        let solved = exec::map_indexed(unique.len(), |i| {
            solve_cavity(cfg, unique[i]).map(Arc::new).map_err(|e| status_tag(&e))
        });
        Self(unique.into_iter().map(key).zip(solved).collect())
    }

    fn get(&self, t: [f64; 3]) -> Solved {
        self.0.get(&key(t)).cloned().expect("target was registered")
    }
}

fn tx1_local(t: [f64; 3]) -> [f64; 3] {
    t
}

fn tx2_local(t: [f64; 3], baseline: f64) -> [f64; 3] {
    [t[0] - baseline, t[1], t[2]]
}

/// Sensor irradiance for one transmitter at pump `pump`, or `None` below
/// threshold.
pub fn illuminate(cfg: &ExperimentConfig, cav: &Cavity, pump: f64) -> Result<(PowerResult, Option<IrradianceMap>)> {
    let power = output_power(pump, &cfg.gain(), &cfg.loss_budget(cav.eta))?;
    if !power.above_threshold {
        return Ok((power, None));
    }
    let field = irradiance_scale(&cav.cmos_field, power.on_sensor)?;
    let window = PixelWindow::around(cav.ideal_spot, cfg.imaging.window, &cfg.sensor)?;
    Ok((power, Some(resample_to_pixels(&field, window))))
}

struct Lit {
    columns: TxColumns,
    map: Option<IrradianceMap>,
}

fn light_tx(cfg: &ExperimentConfig, solved: &Solved, pump: f64, tag: &str, rec: &mut SweepRecord) -> Lit {
    let mut columns = TxColumns::default();
    let cav = match solved {
        Ok(c) => c,
        Err(s) => {
            rec.flag(&format!("{tag}:{s}"));
            return Lit { columns, map: None };
        }
    };
    columns.spot_true_x_m = Some(cav.ideal_spot[0]);
    columns.spot_true_y_m = Some(cav.ideal_spot[1]);
    columns.xi2 = Some(cav.eta);
    match illuminate(cfg, cav, pump) {
        Ok((p, map)) => {
            columns.p_out_w = Some(p.output);
            columns.p_c_w = Some(p.on_sensor);
            if map.is_none() {
                rec.flag(&format!("{tag}:below_threshold"));
            }
            Lit { columns, map }
        }
        Err(e) => {
            rec.flag(&format!("{tag}:{}", status_tag(&e)));
            Lit { columns, map: None }
        }
    }
}

/// Exposes, centroids and fills the spot-estimate columns.
fn measure_spot(cfg: &ExperimentConfig, lit: &mut Lit, seed: u64, tag: &str, rec: &mut SweepRecord) -> Option<[f64; 2]> {
    let map = lit.map.as_ref()?;
    let est = expose(map, &cfg.sensor, seed).and_then(|img| centroid(&img, cfg.imaging.threshold));
    match est {
        Ok(e) => {
            let c = &mut lit.columns;
            c.spot_est_x_m = Some(e.center[0]);
            c.spot_est_y_m = Some(e.center[1]);
            let truth = [c.spot_true_x_m?, c.spot_true_y_m?];
            c.rmse_spot_m = Some(spot_rmse(&e, truth));
            Some(e.center)
        }
        Err(e) => {
            rec.flag(&format!("{tag}:{}", status_tag(&e)));
            None
        }
    }
}

fn estimate_target(
    cfg: &ExperimentConfig,
    bino: &BinocularConfig,
    c1: [f64; 2],
    c2: [f64; 2],
    rec: &mut SweepRecord,
) {
    let f = cfg.geometry.focal_length;
    let (a1, a2) = (angles_from_center(c1, f), angles_from_center(c2, f));
    let est = match cfg.sweep.estimator {
        Estimator::Triangle => triangulate(a1, a2, bino),
        Estimator::Midpoint => triangulate_midpoint(a1, a2, bino),
    };
    match est {
        Ok(e) => {
            rec.est_x_m = Some(e.position[0]);
            rec.est_y_m = Some(e.position[1]);
            rec.est_z_m = Some(e.position[2]);
            rec.rmse_tgt_m = Some(target_rmse(&e, rec.target()));
        }
        Err(e) => rec.flag(status_tag(&e)),
    }
}

#[derive(Debug, Clone, Copy)]
struct Point<'a> {
    index: u64,
    plane: &'a Plane,
    baseline: f64,
    pump: f64,
    target: [f64; 3],
}

fn base_record(cfg: &ExperimentConfig, p: &Point, trial: u64) -> SweepRecord {
    SweepRecord {
        sweep_index: p.index,
        trial,
        seed: seeds::mix(cfg.master_seed, p.index, trial),
        status: "ok".into(),
        depth_m: p.plane.depth,
        baseline_m: p.baseline,
        p_in_w: p.pump,
        x_t_m: p.target[0],
        y_t_m: p.target[1],
        z_t_m: p.target[2],
        ..SweepRecord::default()
    }
}

fn points_on_planes<'a>(cfg: &'a ExperimentConfig, all_baselines: bool, pumps: &[f64]) -> Vec<Point<'a>> {
    let mut out = vec![];
    for plane in &cfg.sweep.planes {
        let baselines = if all_baselines { &plane.baselines[..] } else { &plane.baselines[..1] };
        for &baseline in baselines {
            for &pump in pumps {
                for &pos in &cfg.sweep.positions {
                    out.push(Point {
                        index: out.len() as u64,
                        plane,
                        baseline,
                        pump,
                        target: cfg.target(plane, baseline, pos),
                    });
                }
            }
        }
    }
    out
}

fn cache_for(cfg: &ExperimentConfig, points: &[Point]) -> CavityCache {
    CavityCache::build(
        cfg,
        points
            .iter()
            .flat_map(|p| [tx1_local(p.target), tx2_local(p.target, p.baseline)]),
    )
}

/// Full imaging pipeline for one point, one row per trial.
fn pipeline_rows(cfg: &ExperimentConfig, cache: &CavityCache, p: &Point) -> Vec<SweepRecord> {
    let bino = cfg.binocular(p.plane, p.baseline);
    let mut template = base_record(cfg, p, 0);
    let mut lit1 = light_tx(cfg, &cache.get(tx1_local(p.target)), p.pump, "tx1", &mut template);
    let mut lit2 = light_tx(cfg, &cache.get(tx2_local(p.target, p.baseline)), p.pump, "tx2", &mut template);
    (0..cfg.trials as u64)
        .map(|trial| {
            let mut rec = base_record(cfg, p, trial);
            rec.status = template.status.clone();
            let c1 = measure_spot(cfg, &mut lit1, seeds::mix(rec.seed, 1, 0), "tx1", &mut rec);
            let c2 = measure_spot(cfg, &mut lit2, seeds::mix(rec.seed, 2, 0), "tx2", &mut rec);
            if let (Some(c1), Some(c2)) = (c1, c2) {
                estimate_target(cfg, &bino, c1, c2, &mut rec);
            }
            rec.tx1 = lit1.columns;
            rec.tx2 = lit2.columns;
            lit1.columns.clear_estimate();
            lit2.columns.clear_estimate();
            rec
        })
        .collect()
}

impl TxColumns {
    fn clear_estimate(&mut self) {
        self.spot_est_x_m = None;
        self.spot_est_y_m = None;
        self.rmse_spot_m = None;
    }
}

/// Spot positions and errors versus position, both transmitters imaged,
/// first baseline and first pump power of each plane.
pub fn run_spot_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    let points = points_on_planes(cfg, false, &cfg.power.pump_powers[..1]);
    let cache = cache_for(cfg, &points);
    Ok(exec::map_indexed(points.len(), |i| pipeline_rows(cfg, &cache, &points[i]))
        .into_iter()
        .flatten()
        .collect())
}

fn snr_columns(cfg: &ExperimentConfig, lit: &mut Lit, seed: u64, tag: &str, rec: &mut SweepRecord) -> Result<()> {
    let Some(map) = lit.map.take() else {
        return Ok(());
    };
    let peak = map.values.iter().copied().fold(0.0, f64::max);
    lit.columns.snr_db = Some(snr_db(peak, &cfg.sensor));
    match monte_carlo_snr_db(peak, &cfg.sensor, cfg.imaging.snr_exposures, seed)? {
        Some(v) => lit.columns.snr_mc_db = Some(v),
        None => rec.flag(&format!("{tag}:saturated")),
    }
    Ok(())
}

/// Peak-pixel SNR, analytic and Monte Carlo, for every pump power and
/// position. One row per point.
pub fn run_snr_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    let points = points_on_planes(cfg, false, &cfg.power.pump_powers);
    let cache = cache_for(cfg, &points);
    exec::map_indexed(points.len(), |i| {
        let p = &points[i];
        let mut rec = base_record(cfg, p, 0);
        let mut lit1 = light_tx(cfg, &cache.get(tx1_local(p.target)), p.pump, "tx1", &mut rec);
        snr_columns(cfg, &mut lit1, seeds::mix(rec.seed, 1, 1), "tx1", &mut rec)?;
        let mut lit2 = light_tx(cfg, &cache.get(tx2_local(p.target, p.baseline)), p.pump, "tx2", &mut rec);
        snr_columns(cfg, &mut lit2, seeds::mix(rec.seed, 2, 1), "tx2", &mut rec)?;
        rec.tx1 = lit1.columns;
        rec.tx2 = lit2.columns;
        Ok(rec)
    })
    .into_iter()
    .collect()
}

/// Exact spot centers seen by both transmitters.
fn exact_spots(cfg: &ExperimentConfig, bino: &BinocularConfig, t: [f64; 3]) -> Result<([f64; 2], [f64; 2])> {
    let (a1, a2) = bino.project(t);
    let f = cfg.geometry.focal_length;
    Ok((center_from_angles(a1, f)?, center_from_angles(a2, f)?))
}

fn injected_rows(cfg: &ExperimentConfig, p: &Point, spot_noise: f64) -> Result<Vec<SweepRecord>> {
    let bino = cfg.binocular(p.plane, p.baseline);
    let (s1, s2) = exact_spots(cfg, &bino, p.target)?;
    let sigma = spot_noise / std::f64::consts::SQRT_2;
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    let in_scope = bino.sees(p.target);
    Ok((0..cfg.trials as u64)
        .map(|trial| {
            let mut rec = base_record(cfg, p, trial);
            if !in_scope {
                rec.flag("out_of_scope");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(rec.seed);
            let mut jitter = |c: [f64; 2]| [c[0] + normal.sample(&mut rng), c[1] + normal.sample(&mut rng)];
            let (c1, c2) = (jitter(s1), jitter(s2));
            for (cols, truth, est) in [(&mut rec.tx1, s1, c1), (&mut rec.tx2, s2, c2)] {
                cols.spot_true_x_m = Some(truth[0]);
                cols.spot_true_y_m = Some(truth[1]);
                cols.spot_est_x_m = Some(est[0]);
                cols.spot_est_y_m = Some(est[1]);
                cols.rmse_spot_m = Some((est[0] - truth[0]).hypot(est[1] - truth[1]));
            }
            estimate_target(cfg, &bino, c1, c2, &mut rec);
            rec
        })
        .collect())
}

/// Localization error per position and baseline. With `sweep.spot_noise`
/// set, spot errors are injected on exact centers; otherwise every trial
/// runs the full imaging pipeline.
pub fn run_rmse_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    let points = points_on_planes(cfg, true, &cfg.power.pump_powers[..1]);
    if let Some(noise) = cfg.sweep.spot_noise {
        let rows: Result<Vec<Vec<SweepRecord>>> =
            exec::map_indexed(points.len(), |i| injected_rows(cfg, &points[i], noise)).into_iter().collect();
        return Ok(rows?.into_iter().flatten().collect());
    }
    let cache = cache_for(cfg, &points);
    Ok(exec::map_indexed(points.len(), |i| {
        let mut rows = pipeline_rows(cfg, &cache, &points[i]);
        let bino = cfg.binocular(points[i].plane, points[i].baseline);
        if !bino.sees(points[i].target) {
            rows.iter_mut().for_each(|r| r.flag("out_of_scope"));
        }
        rows
    })
    .into_iter()
    .flatten()
    .collect())
}

/// Per-point aggregate over trials with status `ok`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSummary {
    pub sweep_index: u64,
    pub depth_m: f64,
    pub baseline_m: f64,
    pub p_in_w: f64,
    pub target: [f64; 3],
    pub ok_trials: usize,
    pub status: String,
    pub tx1_spot_true: Option<[f64; 2]>,
    pub tx1_spot_mean: Option<[f64; 2]>,
    pub tx1_rmse_spot: Option<f64>,
    pub tx1_snr_db: Option<f64>,
    pub tx2_snr_db: Option<f64>,
    pub mean_rmse_tgt: Option<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Groups rows by `sweep_index`, in first-seen order.
pub fn summarize(records: &[SweepRecord]) -> Vec<PointSummary> {
    let mut order: Vec<u64> = vec![];
    let mut groups: HashMap<u64, Vec<&SweepRecord>> = HashMap::new();
    for r in records {
        groups.entry(r.sweep_index).or_insert_with(|| {
            order.push(r.sweep_index);
            vec![]
        }).push(r);
    }
    order
        .into_iter()
        .map(|idx| {
            let rows = &groups[&idx];
            let first = rows[0];
            let ok: Vec<&&SweepRecord> = rows.iter().filter(|r| r.is_ok()).collect();
            let collect = |f: &dyn Fn(&SweepRecord) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|r| f(r)).collect() };
            let est_x = collect(&|r| r.tx1.spot_est_x_m);
            let est_y = collect(&|r| r.tx1.spot_est_y_m);
            let rms = collect(&|r| r.tx1.rmse_spot_m.map(|e| e * e));
            PointSummary {
                sweep_index: idx,
                depth_m: first.depth_m,
                baseline_m: first.baseline_m,
                p_in_w: first.p_in_w,
                target: first.target(),
                ok_trials: ok.len(),
                status: rows.iter().find(|r| !r.is_ok()).map_or("ok".into(), |r| r.status.clone()),
                tx1_spot_true: first.tx1.spot_true_x_m.zip(first.tx1.spot_true_y_m).map(|(x, y)| [x, y]),
                tx1_spot_mean: mean(&est_x).zip(mean(&est_y)).map(|(x, y)| [x, y]),
                tx1_rmse_spot: mean(&rms).map(f64::sqrt),
                tx1_snr_db: first.tx1.snr_db,
                tx2_snr_db: first.tx2.snr_db,
                mean_rmse_tgt: mean(&collect(&|r| r.rmse_tgt_m)),
            }
        })
        .collect()
}
