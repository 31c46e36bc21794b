//! Command-line driver: phantom -> scan -> reconstruct -> analyze, plus
//! calibration sweeps and the built-in self-checks.

use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::analysis::{
    kt1_signature, normality_score, rank, rmse_ct, sweep, Criterion, SweepResult,
};
use crate::config::RunConfig;
use crate::detector::{counts_to_projection, scan, CountSample};
use crate::error::{Error, Result};
use crate::formats::{self, SinogramFile};
use crate::phantom::rasterize;
use crate::recon::{fbp, reconstruct_all, ReconImage};
use crate::sinogram::SinogramKind;
use crate::verify::{self, VerifyOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "gammact",
    version,
    about = "Limited-detector gamma CT simulator and KT-1 noise audit"
)]
pub struct Cli {
    /// Config file of key=value lines.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Master seed for all stochastic stages.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Rasterize the phantom and echo its spec.
    Phantom,
    /// Simulate a counts sinogram and repeated open-beam readings.
    Scan,
    /// Rebin and reconstruct one image per filter.
    Reconstruct,
    /// KT-1 signature, fit summary and RMSE tables from the images.
    Analyze,
    /// Brute-force sweep over the electronics settings grid.
    Sweep,
    /// Run the built-in self-checks.
    Verify,
}

/// Exit status for a pipeline error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse { .. }
        | Error::Invalid { .. }
        | Error::UnknownFilter { .. }
        | Error::OutsideFan { .. } => EXIT_INPUT,
        _ => EXIT_CHECK,
    }
}

/// Parses arguments and runs one command; returns the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_INPUT;
            }
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
    };
    match run(&cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_text(&path.display().to_string(), &formats::read_text(path)?)?;
    }
    for pair in &cli.set {
        cfg.apply_override(pair)?;
    }
    if let Some(dir) = &cli.out {
        cfg.output_dir = dir.clone();
    }
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    Ok(cfg)
}

pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let cfg = load_config(cli)?;
    if cli.command == Command::Verify {
        return Ok(cmd_verify(&cfg, out));
    }
    let dir = Output::open(&cfg.output_dir)?;
    match cli.command {
        Command::Phantom => cmd_phantom(&cfg, &dir, err)?,
        Command::Scan => cmd_scan(&cfg, &dir, err)?,
        Command::Reconstruct => cmd_reconstruct(&cfg, &dir, err)?,
        Command::Analyze => cmd_analyze(&cfg, &dir, err)?,
        Command::Sweep => cmd_sweep(&cfg, &dir, err)?,
        Command::Verify => unreachable!(),
    }
    Ok(EXIT_OK)
}

/// Output directory held under a lock file for the life of a command.
struct Output {
    dir: PathBuf,
    lock: PathBuf,
}

impl Output {
    const LOCK: &'static str = ".gammact.lock";

    fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let lock = dir.join(Self::LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(Error::Io(std::io::Error::new(
                    e.kind(),
                    format!(
                        "{} is locked by another run (remove {} if stale)",
                        dir.display(),
                        lock.display()
                    ),
                )))
            }
            Err(e) => return Err(e.into()),
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            lock,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, bytes: impl AsRef<[u8]>, log: &mut dyn Write) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, bytes)?;
        let _ = writeln!(log, "wrote {}", path.display());
        Ok(())
    }
}

impl Drop for Output {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

fn cmd_phantom(cfg: &RunConfig, dir: &Output, log: &mut dyn Write) -> Result<()> {
    let phantom = cfg.phantom()?;
    let truth = rasterize(&phantom, cfg.grid()?, cfg.supersample)?;
    dir.write("truth.dimg", formats::write_image(&truth, None), log)?;
    if cfg.export_pgm {
        dir.write("truth.pgm", formats::write_pgm(&truth), log)?;
    }
    dir.write("phantom.txt", formats::write_phantom(&phantom), log)?;
    let _ = writeln!(log, "phantom: truth max {}", truth.max());
    Ok(())
}

fn cmd_scan(cfg: &RunConfig, dir: &Output, log: &mut dyn Write) -> Result<()> {
    let seed = cfg.require_seed()?;
    let output = scan(
        &cfg.phantom()?,
        &cfg.geometry()?,
        &cfg.model()?,
        cfg.repeats,
        seed,
    )?;
    dir.write(
        "counts.dsino",
        formats::write_fan_sinogram(&output.counts),
        log,
    )?;
    let rows: Vec<Vec<String>> = output
        .samples
        .iter()
        .enumerate()
        .flat_map(|(k, samples)| {
            samples
                .iter()
                .enumerate()
                .map(move |(r, s)| vec![k.to_string(), r.to_string(), s.counts.to_string()])
        })
        .collect();
    dir.write(
        "open_beam.csv",
        formats::write_csv(&["detector", "repeat", "counts"], &rows)?,
        log,
    )?;
    let _ = writeln!(
        log,
        "scan: {} views x {} detectors, {} open-beam readings per detector",
        output.counts.n_views(),
        output.counts.n_detectors(),
        cfg.repeats
    );
    Ok(())
}

fn cmd_reconstruct(cfg: &RunConfig, dir: &Output, log: &mut dyn Write) -> Result<()> {
    let input = cfg
        .input
        .clone()
        .unwrap_or_else(|| dir.path("counts.dsino"));
    let text = formats::read_text(&input)?;
    let images: Vec<ReconImage> =
        match formats::parse_sinogram(&input.display().to_string(), &text)? {
            SinogramFile::Fan(sino) => {
                let projection = match sino.kind {
                    SinogramKind::Counts => counts_to_projection(&sino)?,
                    SinogramKind::Attenuation => sino,
                };
                let (parallel, images) =
                    reconstruct_all(&projection, &cfg.filters, cfg.grid()?, &cfg.rebin)?;
                dir.write(
                    "parallel.dsino",
                    formats::write_parallel_sinogram(&parallel),
                    log,
                )?;
                images
            }
            SinogramFile::Parallel(parallel) => {
                let grid = cfg.grid()?;
                cfg.filters
                    .iter()
                    .map(|f| fbp(&parallel, f, grid))
                    .collect::<Result<_>>()?
            }
        };
    for img in &images {
        let code = &img.filter.code;
        dir.write(
            &format!("recon_{code}.dimg"),
            formats::write_recon(img),
            log,
        )?;
        if cfg.export_pgm {
            dir.write(
                &format!("recon_{code}.pgm"),
                formats::write_pgm(&img.image),
                log,
            )?;
        }
    }
    let _ = writeln!(log, "reconstruct: {} images", images.len());
    Ok(())
}

/// Reconstructions in the directory, ordered by file name.
fn read_recon_images(dir: &Path) -> Result<Vec<ReconImage>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("recon_") && n.ends_with(".dimg"))
        })
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| formats::parse_recon(&p.display().to_string(), &formats::read_text(p)?))
        .collect()
}

fn cmd_analyze(cfg: &RunConfig, dir: &Output, log: &mut dyn Write) -> Result<()> {
    let mut images = read_recon_images(&dir.dir)?;
    images.sort_by(|a, b| {
        a.filter
            .w2_0
            .total_cmp(&b.filter.w2_0)
            .then_with(|| a.filter.code.cmp(&b.filter.code))
    });
    let sig = kt1_signature(&images, cfg.nmax)?;

    let rows: Vec<Vec<String>> = sig
        .points
        .iter()
        .map(|p| {
            vec![
                p.code.clone(),
                p.w2_0.to_string(),
                p.nmax.to_string(),
                p.inv_nmax.to_string(),
            ]
        })
        .collect();
    dir.write(
        "kt1_signature.csv",
        formats::write_csv(&["filter_code", "w2_0", "nmax", "inv_nmax"], &rows)?,
        log,
    )?;
    let fit = vec![vec![
        sig.slope.to_string(),
        sig.intercept.to_string(),
        sig.rmse_fit.to_string(),
    ]];
    dir.write(
        "kt1_fit.csv",
        formats::write_csv(&["slope", "intercept", "rmse_kt1"], &fit)?,
        log,
    )?;

    let phantom = cfg.phantom()?;
    let mut metrics = Vec::new();
    for img in &images {
        let truth = rasterize(&phantom, img.grid(), cfg.supersample)?;
        metrics.push(vec![
            img.filter.code.clone(),
            img.nmax().to_string(),
            rmse_ct(&img.image, &truth)?.to_string(),
        ]);
    }
    dir.write(
        "metrics.csv",
        formats::write_csv(&["filter_code", "nmax", "rmse_ct"], &metrics)?,
        log,
    )?;

    let open_beam = dir.path("open_beam.csv");
    if open_beam.exists() {
        let samples = read_open_beam(&open_beam, cfg.detector.settings.tau)?;
        let score = normality_score(&samples, cfg.normality)?;
        let row = vec![vec![samples.len().to_string(), score.to_string()]];
        dir.write(
            "normality.csv",
            formats::write_csv(&["samples", "jarque_bera"], &row)?,
            log,
        )?;
    }
    let _ = writeln!(log, "analyze: rmse_kt1 {}", sig.rmse_fit);
    Ok(())
}

fn read_open_beam(path: &Path, tau: f64) -> Result<Vec<CountSample>> {
    let name = path.display().to_string();
    let (header, rows) = formats::parse_csv(&formats::read_text(path)?)?;
    let col = header
        .iter()
        .position(|h| h == "counts")
        .ok_or_else(|| Error::parse(&name, "counts", "missing column"))?;
    rows.iter()
        .map(|r| {
            r.get(col)
                .and_then(|c| c.parse::<u64>().ok())
                .map(|c| CountSample::new(c, tau))
                .ok_or_else(|| Error::parse(&name, "counts", "not a count"))
        })
        .collect()
}

fn settings_cells(r: &SweepResult) -> Vec<String> {
    let s = r.settings;
    vec![
        s.hv.to_string(),
        s.gain.to_string(),
        s.lld.to_string(),
        s.tau.to_string(),
    ]
}

fn cmd_sweep(cfg: &RunConfig, dir: &Output, log: &mut dyn Write) -> Result<()> {
    let seed = cfg.require_seed()?;
    let settings = cfg.settings()?;
    let setup = cfg.sweep_setup()?;
    let _ = writeln!(log, "sweep: {} settings", settings.len());
    let results = sweep(&setup, &settings, seed)?;
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            let mut row = settings_cells(r);
            row.extend([
                r.rmse_kt1.to_string(),
                r.rmse_ct.to_string(),
                r.normality.to_string(),
            ]);
            row
        })
        .collect();
    dir.write(
        "sweep.csv",
        formats::write_csv(
            &[
                "hv",
                "gain",
                "lld",
                "tau",
                "rmse_kt1",
                "rmse_ct",
                "normality",
            ],
            &rows,
        )?,
        log,
    )?;
    for criterion in Criterion::ALL {
        let ranked: Vec<Vec<String>> = rank(&results, criterion)
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut row = vec![(i + 1).to_string()];
                row.extend(settings_cells(r));
                row.push(criterion.of(r).to_string());
                row
            })
            .collect();
        dir.write(
            &format!("rank_{}.csv", criterion.name()),
            formats::write_csv(
                &["rank", "hv", "gain", "lld", "tau", criterion.name()],
                &ranked,
            )?,
            log,
        )?;
    }
    Ok(())
}

fn cmd_verify(cfg: &RunConfig, out: &mut dyn Write) -> i32 {
    let results = verify::run(&VerifyOptions {
        break_filter_table: cfg.break_filter_table,
    });
    for r in &results {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{tag} {} ({}) [{:.2} s]", r.name, r.detail, r.seconds);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    let _ = writeln!(out, "{} checks, {failed} failed", results.len());
    if failed == 0 {
        EXIT_OK
    } else {
        EXIT_CHECK
    }
}
