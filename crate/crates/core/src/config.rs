//! Run configuration: flat `key=value` text with dotted section prefixes.
//!
//! Every key has a default; files and `--set` overrides go through the same
//! [`RunConfig::set`] so unknown keys are rejected in both places.

use std::path::PathBuf;

use crate::analysis::{settings_grid, NmaxMode, NormalityMode, SweepSetup};
use crate::detector::{DetectorModel, ElectronicsSettings};
use crate::error::{Error, Result};
use crate::formats;
use crate::phantom::{paper_phantom_with, GridSpec, Phantom, PhantomLayout};
use crate::projector::FanGeometry;
use crate::recon::{hamming_filters, parse_filter_codes, FilterSpec, RebinParams};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Open-beam readings per detector in `scan`.
    pub repeats: usize,
    pub output_dir: PathBuf,

    pub phantom_file: Option<PathBuf>,
    pub layout: PhantomLayout,

    pub source_to_center: f64,
    pub source_to_detector: f64,
    pub fan_angle: f64,
    pub n_detectors: usize,
    /// Views spaced evenly over 360 degrees.
    pub n_views: usize,

    pub detector: DetectorModel,

    pub sweep_hv: Vec<f64>,
    pub sweep_gain: Vec<f64>,
    pub sweep_lld: Vec<f64>,
    pub sweep_tau: Vec<f64>,
    pub sweep_repeats: usize,
    pub sweep_grid_file: Option<PathBuf>,

    pub filters: Vec<FilterSpec>,
    pub rebin: RebinParams,
    /// Sinogram read by `reconstruct`; defaults to `counts.dsino` in the
    /// output directory.
    pub input: Option<PathBuf>,

    pub grid: GridSpec,
    pub supersample: usize,
    pub export_pgm: bool,

    pub nmax: NmaxMode,
    pub normality: NormalityMode,

    /// Test hook: corrupts one filter-table entry inside `verify`.
    pub break_filter_table: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            repeats: 100,
            output_dir: PathBuf::from("out"),
            phantom_file: None,
            layout: PhantomLayout::default(),
            source_to_center: 26.0,
            source_to_detector: 52.0,
            fan_angle: 13.25,
            n_detectors: 5,
            n_views: 36,
            detector: DetectorModel::default(),
            sweep_hv: vec![690.0, 720.0, 750.0],
            sweep_gain: vec![0.7, 0.85, 1.0],
            sweep_lld: vec![1.0, 1.2, 1.4],
            sweep_tau: vec![1.0],
            sweep_repeats: 10_000,
            sweep_grid_file: None,
            filters: hamming_filters(),
            rebin: RebinParams::default(),
            input: None,
            grid: GridSpec {
                n_pixels: 128,
                fov: 12.0,
            },
            supersample: 4,
            export_pgm: true,
            nmax: NmaxMode::Signed,
            normality: NormalityMode::Raw,
            break_filter_table: false,
        }
    }
}

/// Every accepted key, in documentation order.
pub const KEYS: &[&str] = &[
    "seed",
    "repeats",
    "output_dir",
    "phantom.file",
    "phantom.mu_perspex",
    "phantom.aluminium_center",
    "phantom.iron_center",
    "geometry.source_to_center",
    "geometry.source_to_detector",
    "geometry.fan_angle",
    "geometry.n_detectors",
    "geometry.n_views",
    "detector.i0_rate",
    "detector.hv",
    "detector.gain",
    "detector.lld",
    "detector.tau",
    "detector.nominal_hv",
    "detector.nominal_gain",
    "detector.nominal_lld",
    "detector.nominal_tau",
    "detector.hv_ref",
    "detector.pmt_exponent",
    "detector.sigma_h",
    "detector.nu0",
    "detector.lld0",
    "detector.h_sat",
    "sweep.hv",
    "sweep.gain",
    "sweep.lld",
    "sweep.tau",
    "sweep.repeats",
    "sweep.grid_file",
    "recon.filters",
    "recon.input",
    "recon.n_thetas",
    "recon.theta_span",
    "recon.n_s_bins",
    "recon.s_max",
    "grid.n_pixels",
    "grid.fov",
    "grid.supersample",
    "grid.export_pgm",
    "analysis.nmax",
    "analysis.normality",
    "verify.break_filter_table",
];

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::parse("config", key, format!("cannot parse `{value}`")))
}

fn list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| num(key, t))
        .collect()
}

fn point(key: &str, value: &str) -> Result<(f64, f64)> {
    match list(key, value)?.as_slice() {
        [x, y] => Ok((*x, *y)),
        _ => Err(Error::parse("config", key, "expected `x,y`")),
    }
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::parse(
            "config",
            key,
            format!("expected true/false, got `{value}`"),
        )),
    }
}

/// Splits `key=value` lines, skipping blanks and `#` comments.
pub fn parse_pairs(name: &str, text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(name, format!("line {}", i + 1), "expected key=value"))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    pub fn from_text(name: &str, text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(name, text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, name: &str, text: &str) -> Result<()> {
        for (k, v) in parse_pairs(name, text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    /// Applies one `key=value` override string.
    pub fn apply_override(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::parse("--set", pair, "expected key=value"))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let d = &mut self.detector;
        match key {
            "seed" => self.seed = Some(num(key, value)?),
            "repeats" => self.repeats = num(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "phantom.file" => self.phantom_file = Some(PathBuf::from(value)),
            "phantom.mu_perspex" => self.layout.mu_perspex = num(key, value)?,
            "phantom.aluminium_center" => self.layout.aluminium_center = point(key, value)?,
            "phantom.iron_center" => self.layout.iron_center = point(key, value)?,
            "geometry.source_to_center" => self.source_to_center = num(key, value)?,
            "geometry.source_to_detector" => self.source_to_detector = num(key, value)?,
            "geometry.fan_angle" => self.fan_angle = num(key, value)?,
            "geometry.n_detectors" => self.n_detectors = num(key, value)?,
            "geometry.n_views" => self.n_views = num(key, value)?,
            "detector.i0_rate" => d.i0_rate = num(key, value)?,
            "detector.hv" => d.settings.hv = num(key, value)?,
            "detector.gain" => d.settings.gain = num(key, value)?,
            "detector.lld" => d.settings.lld = num(key, value)?,
            "detector.tau" => d.settings.tau = num(key, value)?,
            "detector.nominal_hv" => d.nominal.hv = num(key, value)?,
            "detector.nominal_gain" => d.nominal.gain = num(key, value)?,
            "detector.nominal_lld" => d.nominal.lld = num(key, value)?,
            "detector.nominal_tau" => d.nominal.tau = num(key, value)?,
            "detector.hv_ref" => d.noise.hv_ref = num(key, value)?,
            "detector.pmt_exponent" => d.noise.pmt_exponent = num(key, value)?,
            "detector.sigma_h" => d.noise.sigma_h = num(key, value)?,
            "detector.nu0" => d.noise.nu0 = num(key, value)?,
            "detector.lld0" => d.noise.lld0 = num(key, value)?,
            "detector.h_sat" => d.noise.h_sat = num(key, value)?,
            "sweep.hv" => self.sweep_hv = list(key, value)?,
            "sweep.gain" => self.sweep_gain = list(key, value)?,
            "sweep.lld" => self.sweep_lld = list(key, value)?,
            "sweep.tau" => self.sweep_tau = list(key, value)?,
            "sweep.repeats" => self.sweep_repeats = num(key, value)?,
            "sweep.grid_file" => self.sweep_grid_file = Some(PathBuf::from(value)),
            "recon.filters" => self.filters = parse_filter_codes(value)?,
            "recon.input" => self.input = Some(PathBuf::from(value)),
            "recon.n_thetas" => self.rebin.n_thetas = num(key, value)?,
            "recon.theta_span" => self.rebin.theta_span = num(key, value)?,
            "recon.n_s_bins" => self.rebin.n_s_bins = num(key, value)?,
            "recon.s_max" => self.rebin.s_max = num(key, value)?,
            "grid.n_pixels" => self.grid.n_pixels = num(key, value)?,
            "grid.fov" => self.grid.fov = num(key, value)?,
            "grid.supersample" => self.supersample = num(key, value)?,
            "grid.export_pgm" => self.export_pgm = flag(key, value)?,
            "analysis.nmax" => {
                self.nmax = match value {
                    "signed" => NmaxMode::Signed,
                    "absolute" => NmaxMode::Absolute,
                    _ => return Err(Error::parse("config", key, "expected signed or absolute")),
                }
            }
            "analysis.normality" => {
                self.normality = match value.split_once(':') {
                    None if value == "raw" => NormalityMode::Raw,
                    Some(("batch", m)) => NormalityMode::BatchMeans(num(key, m)?),
                    _ => return Err(Error::parse("config", key, "expected raw or batch:<m>")),
                }
            }
            "verify.break_filter_table" => self.break_filter_table = flag(key, value)?,
            _ => {
                return Err(Error::parse(
                    "config",
                    key,
                    "unknown key (run `gammact --help` for the key list)",
                ))
            }
        }
        Ok(())
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| {
            Error::parse(
                "config",
                "seed",
                "missing; stochastic stages need a seed (use --seed)",
            )
        })
    }

    pub fn phantom(&self) -> Result<Phantom> {
        match &self.phantom_file {
            Some(path) => {
                let text = formats::read_text(path)?;
                formats::parse_phantom(&path.display().to_string(), &text)
            }
            None => paper_phantom_with(self.layout),
        }
    }

    pub fn geometry(&self) -> Result<FanGeometry> {
        FanGeometry::with_uniform_views(
            self.source_to_center,
            self.source_to_detector,
            self.fan_angle,
            self.n_detectors,
            self.n_views,
        )
    }

    pub fn model(&self) -> Result<DetectorModel> {
        self.detector.validate()?;
        Ok(self.detector)
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid.n_pixels, self.grid.fov)
    }

    /// Sweep settings from the grid file when given, else the axis keys.
    pub fn settings(&self) -> Result<Vec<ElectronicsSettings>> {
        let mut axes = self.clone();
        if let Some(path) = &self.sweep_grid_file {
            let name = path.display().to_string();
            for (k, v) in parse_pairs(&name, &formats::read_text(path)?)? {
                match k.as_str() {
                    "hv" | "gain" | "lld" | "tau" => axes.set(&format!("sweep.{k}"), &v)?,
                    _ => {
                        return Err(Error::parse(
                            name,
                            k,
                            "unknown axis (expected hv, gain, lld, tau)",
                        ))
                    }
                }
            }
        }
        let grid = settings_grid(
            &axes.sweep_hv,
            &axes.sweep_gain,
            &axes.sweep_lld,
            &axes.sweep_tau,
        )?;
        if grid.is_empty() {
            return Err(Error::parse("config", "sweep", "settings grid is empty"));
        }
        Ok(grid)
    }

    pub fn sweep_setup(&self) -> Result<SweepSetup> {
        Ok(SweepSetup {
            phantom: self.phantom()?,
            geometry: self.geometry()?,
            model: self.model()?,
            filters: self.filters.clone(),
            grid: self.grid()?,
            rebin: self.rebin,
            repeats: self.sweep_repeats,
            supersample: self.supersample,
            normality: self.normality,
            nmax: self.nmax,
        })
    }
}
