use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use resbeam::harness::config::{ExperimentConfig, Preset};
use resbeam::harness::plot::{emit_plots, PlotKind};
use resbeam::harness::record::{read_csv_file, write_csv_file, SweepRecord};
use resbeam::harness::sweep::{run_rmse_sweep, run_snr_sweep, run_spot_sweep, solve_cavity, summarize};
use resbeam::localization::effective_scope;
use resbeam::resonator::solve_mode_with;
use resbeam::{exec, Error, Result};

#[derive(Parser)]
#[command(name = "resbeam", version, about = "Binocular resonant-beam localization simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file whose keys override the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    preset: Option<PresetArg>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 1 runs serially.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Fig6,
    Fig7,
    Fig9,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Fig6 => Preset::Fig6,
            PresetArg::Fig7 => Preset::Fig7,
            PresetArg::Fig9 => Preset::Fig9,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Spot,
    Snr,
    Rmse,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one transmitter cavity and print the mode summary.
    SolveMode {
        /// Retroreflector pupil in the transmitter frame (m).
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        x: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        y: f64,
        #[arg(long, default_value_t = 1.0)]
        z: f64,
    },
    /// Spot position and error versus target position.
    SpotSweep,
    /// Peak-pixel SNR versus position and pump power.
    SnrSweep,
    /// Localization error versus position and baseline.
    RmseSweep,
    /// Print the stereo scope box for every plane and baseline.
    Scope,
    /// Render SVG figures from a sweep CSV.
    Plot {
        csv: PathBuf,
        /// Figure type; defaults from the preset.
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
    },
}

fn resolve(common: &Common, default: Preset) -> Result<ExperimentConfig> {
    let base = ExperimentConfig::preset(common.preset.map(Preset::from).unwrap_or(default));
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::layered(&base, &std::fs::read_to_string(path)?)?,
        None => base,
    };
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn save(cfg: &ExperimentConfig, name: &str, rows: &[SweepRecord]) -> Result<PathBuf> {
    let path = cfg.out_dir.join(name);
    write_csv_file(&path, rows)?;
    let failed = rows.iter().filter(|r| !r.is_ok()).count();
    println!("wrote {} rows ({failed} flagged) to {}", rows.len(), path.display());
    Ok(path)
}

fn print_summary(rows: &[SweepRecord]) {
    for s in summarize(rows) {
        let fmt = |v: Option<f64>, scale: f64| v.map_or("-".to_string(), |v| format!("{:.3}", v * scale));
        println!(
            "#{:<3} z={} b={:.4} P={:<5} target=({:+.4}, {:+.4}) ok={:<3} rmse_spot={} um snr={} dB rmse_tgt={} cm  {}",
            s.sweep_index,
            s.depth_m,
            s.baseline_m,
            s.p_in_w,
            s.target[0],
            s.target[1],
            s.ok_trials,
            fmt(s.tx1_rmse_spot, 1e6),
            fmt(s.tx1_snr_db, 1.0),
            fmt(s.mean_rmse_tgt, 100.0),
            s.status
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.common.workers {
        if n == 0 {
            return Err(Error::Config("--workers must be >= 1".into()));
        }
        exec::configure_workers(n);
    }
    let common = &cli.common;
    match cli.command {
        Command::SolveMode { x, y, z } => {
            let cfg = resolve(common, Preset::Fig6)?;
            let geom = cfg.resonator([x, y, z])?;
            let mode = solve_mode_with(&geom, cfg.pupil_grid()?, &cfg.solver_options())?;
            println!("eigenvalue      {:.9} {:+.9}i", mode.eigenvalue.re, mode.eigenvalue.im);
            println!("|xi|^2          {:.9}", mode.transmission_efficiency);
            println!("iterations      {}", mode.iterations);
            println!("converged       {}", mode.converged);
            println!("field change    {:.3e}", mode.field_change);
            println!("residual        {:.3e}", mode.residual);
            if mode.converged {
                let cav = solve_cavity(&cfg, [x, y, z])?;
                println!("ideal spot      ({:.6e}, {:.6e}) m", cav.ideal_spot[0], cav.ideal_spot[1]);
                if let Some(c) = cav.cmos_field.centroid() {
                    println!("field centroid  ({:.6e}, {:.6e}) m", c[0], c[1]);
                }
            }
        }
        Command::SpotSweep => {
            let cfg = resolve(common, Preset::Fig6)?;
            let rows = run_spot_sweep(&cfg)?;
            print_summary(&rows);
            save(&cfg, "spot.csv", &rows)?;
        }
        Command::SnrSweep => {
            let cfg = resolve(common, Preset::Fig7)?;
            let rows = run_snr_sweep(&cfg)?;
            print_summary(&rows);
            save(&cfg, "snr.csv", &rows)?;
        }
        Command::RmseSweep => {
            let cfg = resolve(common, Preset::Fig9)?;
            let rows = run_rmse_sweep(&cfg)?;
            print_summary(&rows);
            save(&cfg, "rmse.csv", &rows)?;
        }
        Command::Scope => {
            let cfg = resolve(common, Preset::Fig9)?;
            let mut out = io::stdout().lock();
            writeln!(out, "{:>7} {:>8} {:>9} {:>9} {:>9} {:>9}", "z (m)", "b (m)", "w (m)", "w' (m)", "l' (m)", "h' (m)")?;
            for plane in &cfg.sweep.planes {
                for &b in &plane.baselines {
                    let s = effective_scope(&cfg.binocular(plane, b))?;
                    writeln!(
                        out,
                        "{:>7} {:>8.4} {:>9.5} {:>9.5} {:>9.5} {:>9.5}",
                        plane.depth, b, s.width, s.stereo_width, s.stereo_length, s.stereo_height
                    )?;
                }
            }
        }
        Command::Plot { csv, kind } => {
            let cfg = resolve(common, Preset::Fig6)?;
            let kind = match (kind, common.preset) {
                (Some(KindArg::Spot), _) => PlotKind::Spot,
                (Some(KindArg::Snr), _) => PlotKind::Snr,
                (Some(KindArg::Rmse), _) => PlotKind::Rmse,
                (None, Some(PresetArg::Fig7)) => PlotKind::Snr,
                (None, Some(PresetArg::Fig9)) => PlotKind::Rmse,
                (None, _) => guess_kind(&csv),
            };
            let rows = read_csv_file(&csv)?;
            for path in emit_plots(&rows, kind, &cfg.out_dir)? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

/// Figure type from the file name written by the sweep commands.
fn guess_kind(csv: &Path) -> PlotKind {
    match csv.file_stem().and_then(|s| s.to_str()) {
        Some(s) if s.contains("snr") => PlotKind::Snr,
        Some(s) if s.contains("rmse") => PlotKind::Rmse,
        _ => PlotKind::Spot,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        // Reader went away (e.g. piped into `head`).
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
