//! One CSV row per sweep point and trial. Missing values are empty fields;
//! `status` says why.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-transmitter columns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TxColumns {
    pub spot_true_x_m: Option<f64>,
    pub spot_true_y_m: Option<f64>,
    pub spot_est_x_m: Option<f64>,
    pub spot_est_y_m: Option<f64>,
    pub rmse_spot_m: Option<f64>,
    pub snr_db: Option<f64>,
    pub snr_mc_db: Option<f64>,
    pub xi2: Option<f64>,
    pub p_out_w: Option<f64>,
    pub p_c_w: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepRecord {
    pub sweep_index: u64,
    pub trial: u64,
    pub seed: u64,
    pub status: String,
    pub depth_m: f64,
    pub baseline_m: f64,
    pub p_in_w: f64,
    pub x_t_m: f64,
    pub y_t_m: f64,
    pub z_t_m: f64,
    pub tx1: TxColumns,
    pub tx2: TxColumns,
    pub est_x_m: Option<f64>,
    pub est_y_m: Option<f64>,
    pub est_z_m: Option<f64>,
    pub rmse_tgt_m: Option<f64>,
}

/// Flat row, in the column order of the file.
#[derive(Debug, Serialize, Deserialize)]
struct Row {
    sweep_index: u64,
    trial: u64,
    seed: u64,
    status: String,
    depth_m: f64,
    baseline_m: f64,
    p_in_w: f64,
    #[serde(rename = "x_T_m")]
    x_t_m: f64,
    #[serde(rename = "y_T_m")]
    y_t_m: f64,
    #[serde(rename = "z_T_m")]
    z_t_m: f64,
    tx1_spot_true_x_m: Option<f64>,
    tx1_spot_true_y_m: Option<f64>,
    tx1_spot_est_x_m: Option<f64>,
    tx1_spot_est_y_m: Option<f64>,
    tx1_rmse_spot_m: Option<f64>,
    tx1_snr_db: Option<f64>,
    tx1_snr_mc_db: Option<f64>,
    tx1_xi2: Option<f64>,
    tx1_p_out_w: Option<f64>,
    tx1_p_c_w: Option<f64>,
    tx2_spot_true_x_m: Option<f64>,
    tx2_spot_true_y_m: Option<f64>,
    tx2_spot_est_x_m: Option<f64>,
    tx2_spot_est_y_m: Option<f64>,
    tx2_rmse_spot_m: Option<f64>,
    tx2_snr_db: Option<f64>,
    tx2_snr_mc_db: Option<f64>,
    tx2_xi2: Option<f64>,
    tx2_p_out_w: Option<f64>,
    tx2_p_c_w: Option<f64>,
    est_x_m: Option<f64>,
    est_y_m: Option<f64>,
    est_z_m: Option<f64>,
    rmse_tgt_m: Option<f64>,
}

impl From<&SweepRecord> for Row {
    fn from(r: &SweepRecord) -> Self {
        let (a, b) = (r.tx1, r.tx2);
        Row {
            sweep_index: r.sweep_index,
            trial: r.trial,
            seed: r.seed,
            status: r.status.clone(),
            depth_m: r.depth_m,
            baseline_m: r.baseline_m,
            p_in_w: r.p_in_w,
            x_t_m: r.x_t_m,
            y_t_m: r.y_t_m,
            z_t_m: r.z_t_m,
            tx1_spot_true_x_m: a.spot_true_x_m,
            tx1_spot_true_y_m: a.spot_true_y_m,
            tx1_spot_est_x_m: a.spot_est_x_m,
            tx1_spot_est_y_m: a.spot_est_y_m,
            tx1_rmse_spot_m: a.rmse_spot_m,
            tx1_snr_db: a.snr_db,
            tx1_snr_mc_db: a.snr_mc_db,
            tx1_xi2: a.xi2,
            tx1_p_out_w: a.p_out_w,
            tx1_p_c_w: a.p_c_w,
            tx2_spot_true_x_m: b.spot_true_x_m,
            tx2_spot_true_y_m: b.spot_true_y_m,
            tx2_spot_est_x_m: b.spot_est_x_m,
            tx2_spot_est_y_m: b.spot_est_y_m,
            tx2_rmse_spot_m: b.rmse_spot_m,
            tx2_snr_db: b.snr_db,
            tx2_snr_mc_db: b.snr_mc_db,
            tx2_xi2: b.xi2,
            tx2_p_out_w: b.p_out_w,
            tx2_p_c_w: b.p_c_w,
            est_x_m: r.est_x_m,
            est_y_m: r.est_y_m,
            est_z_m: r.est_z_m,
            rmse_tgt_m: r.rmse_tgt_m,
        }
    }
}

impl From<Row> for SweepRecord {
    fn from(r: Row) -> Self {
        SweepRecord {
            sweep_index: r.sweep_index,
            trial: r.trial,
            seed: r.seed,
            status: r.status,
            depth_m: r.depth_m,
            baseline_m: r.baseline_m,
            p_in_w: r.p_in_w,
            x_t_m: r.x_t_m,
            y_t_m: r.y_t_m,
            z_t_m: r.z_t_m,
            tx1: TxColumns {
                spot_true_x_m: r.tx1_spot_true_x_m,
                spot_true_y_m: r.tx1_spot_true_y_m,
                spot_est_x_m: r.tx1_spot_est_x_m,
                spot_est_y_m: r.tx1_spot_est_y_m,
                rmse_spot_m: r.tx1_rmse_spot_m,
                snr_db: r.tx1_snr_db,
                snr_mc_db: r.tx1_snr_mc_db,
                xi2: r.tx1_xi2,
                p_out_w: r.tx1_p_out_w,
                p_c_w: r.tx1_p_c_w,
            },
            tx2: TxColumns {
                spot_true_x_m: r.tx2_spot_true_x_m,
                spot_true_y_m: r.tx2_spot_true_y_m,
                spot_est_x_m: r.tx2_spot_est_x_m,
                spot_est_y_m: r.tx2_spot_est_y_m,
                rmse_spot_m: r.tx2_rmse_spot_m,
                snr_db: r.tx2_snr_db,
                snr_mc_db: r.tx2_snr_mc_db,
                xi2: r.tx2_xi2,
                p_out_w: r.tx2_p_out_w,
                p_c_w: r.tx2_p_c_w,
            },
            est_x_m: r.est_x_m,
            est_y_m: r.est_y_m,
            est_z_m: r.est_z_m,
            rmse_tgt_m: r.rmse_tgt_m,
        }
    }
}

impl SweepRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    /// Adds a `;`-separated reason, replacing `ok`.
    pub fn flag(&mut self, reason: &str) {
        if self.status.is_empty() || self.status == "ok" {
            self.status = reason.to_string();
        } else if !self.status.split(';').any(|s| s == reason) {
            self.status.push(';');
            self.status.push_str(reason);
        }
    }

    pub fn target(&self) -> [f64; 3] {
        [self.x_t_m, self.y_t_m, self.z_t_m]
    }

    pub fn estimate(&self) -> Option<[f64; 3]> {
        Some([self.est_x_m?, self.est_y_m?, self.est_z_m?])
    }

    /// Target error recomputed from this row's own truth and estimate.
    pub fn recomputed_rmse_tgt(&self) -> Option<f64> {
        let e = self.estimate()?;
        let t = self.target();
        Some(((e[0] - t[0]).powi(2) + (e[1] - t[1]).powi(2) + (e[2] - t[2]).powi(2)).sqrt())
    }
}

pub fn write_csv<W: Write>(out: W, records: &[SweepRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    for r in records {
        w.serialize(Row::from(r))?;
    }
    if records.is_empty() {
        // header only
        w.write_record(header())?;
    }
    w.flush()?;
    Ok(())
}

/// Column names, in file order.
pub fn header() -> Vec<String> {
    let mut w = csv::Writer::from_writer(vec![]);
    w.serialize(Row::from(&SweepRecord::default())).expect("in-memory write");
    let bytes = w.into_inner().expect("in-memory flush");
    let text = String::from_utf8(bytes).expect("utf8");
    text.lines().next().unwrap_or_default().split(',').map(str::to_string).collect()
}

pub fn write_csv_file(path: &Path, records: &[SweepRecord]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    write_csv(std::fs::File::create(path)?, records)
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<SweepRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = vec![];
    for (i, row) in r.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            row: e.position().map(|p| p.line() as usize).unwrap_or(i + 2),
            message: e.to_string(),
        })?;
        out.push(row.into());
    }
    Ok(out)
}

pub fn read_csv_file(path: &Path) -> Result<Vec<SweepRecord>> {
    read_csv(std::fs::File::open(path)?)
}
