//! Noise audits: the KT-1 signature (linearity of `1/N_max` against the
//! filters' `W''(0)`), pixel RMSE against the cyber phantom, Jarque-Bera
//! normality of open-beam counts, and the brute-force settings sweep.

use std::cmp::Ordering;

use crate::detector::{
    counts_to_projection, scan, CountSample, DetectorModel, ElectronicsSettings,
};
use crate::error::{Error, Result};
use crate::par;
use crate::phantom::{rasterize, GridSpec, Image, Phantom};
use crate::projector::FanGeometry;
use crate::recon::{reconstruct_all, FilterSpec, RebinParams, ReconImage};

/// 99% point of the chi-square distribution with two degrees of freedom.
pub const CHI2_2DF_99: f64 = 9.21;
/// 95% point of the chi-square distribution with two degrees of freedom.
pub const CHI2_2DF_95: f64 = 5.99;

/// How `N_max` is read off a reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NmaxMode {
    /// Largest signed pixel value.
    #[default]
    Signed,
    /// Largest absolute pixel value.
    Absolute,
}

impl NmaxMode {
    pub fn of(&self, image: &Image) -> f64 {
        match self {
            NmaxMode::Signed => image.max(),
            NmaxMode::Absolute => image.max_abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kt1Point {
    pub code: String,
    pub w2_0: f64,
    pub nmax: f64,
    pub inv_nmax: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kt1Signature {
    pub points: Vec<Kt1Point>,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit (RMSE_KT1).
    pub rmse_fit: f64,
}

/// Ordinary least squares `y = slope * x + intercept`; returns
/// `(slope, intercept, rms_residual)`.
pub fn ols(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::TooFew {
            what: "points",
            needed: 2,
            got: xs.len(),
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::invalid("w2_0", "abscissas are all equal"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    Ok((slope, intercept, (sse / n).sqrt()))
}

/// Builds the KT-1 signature of a set of reconstructions of one dataset.
pub fn kt1_signature(images: &[ReconImage], mode: NmaxMode) -> Result<Kt1Signature> {
    if images.len() < 3 {
        return Err(Error::TooFew {
            what: "filters for a KT-1 fit",
            needed: 3,
            got: images.len(),
        });
    }
    for (i, a) in images.iter().enumerate() {
        if images[i + 1..]
            .iter()
            .any(|b| b.filter.code == a.filter.code)
        {
            return Err(Error::invalid(
                "filters",
                format!("duplicate filter {}", a.filter.code),
            ));
        }
    }
    let points = images
        .iter()
        .map(|img| {
            let nmax = mode.of(&img.image);
            if nmax.is_nan() || nmax <= 0.0 {
                return Err(Error::NonPositiveMax {
                    code: img.filter.code.clone(),
                    nmax,
                });
            }
            Ok(Kt1Point {
                code: img.filter.code.clone(),
                w2_0: img.filter.w2_0,
                nmax,
                inv_nmax: 1.0 / nmax,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = points.iter().map(|p| p.w2_0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.inv_nmax).collect();
    let (slope, intercept, rmse_fit) = ols(&xs, &ys)?;
    Ok(Kt1Signature {
        points,
        slope,
        intercept,
        rmse_fit,
    })
}

/// RMS pixel deviation inside the grid's inscribed circle.
pub fn rmse_ct(recon: &Image, truth: &Image) -> Result<f64> {
    if recon.grid.n_pixels != truth.grid.n_pixels {
        return Err(Error::DimensionMismatch {
            left: recon.grid.n_pixels,
            right: truth.grid.n_pixels,
        });
    }
    let grid = truth.grid;
    let n = grid.n_pixels;
    let (mut sse, mut count) = (0.0, 0usize);
    for row in 0..n {
        for col in 0..n {
            if grid.in_fov(row, col) {
                let d = recon.get(row, col) - truth.get(row, col);
                sse += d * d;
                count += 1;
            }
        }
    }
    Ok((sse / count as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalityMode {
    /// Score the readings themselves.
    #[default]
    Raw,
    /// Score means of consecutive batches of this many readings.
    BatchMeans(usize),
}

/// Jarque-Bera statistic `n/6 * (S^2 + K^2/4)` with population moments.
pub fn jarque_bera(xs: &[f64]) -> Result<f64> {
    if xs.len() < 3 {
        return Err(Error::TooFew {
            what: "samples",
            needed: 3,
            got: xs.len(),
        });
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if m2 == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let skew = m3 / m2.powf(1.5);
    let excess_kurtosis = m4 / (m2 * m2) - 3.0;
    Ok(n / 6.0 * (skew * skew + 0.25 * excess_kurtosis * excess_kurtosis))
}

/// Jarque-Bera score of count readings; lower is closer to normal.
pub fn normality_score(samples: &[CountSample], mode: NormalityMode) -> Result<f64> {
    if samples.len() < 20 {
        return Err(Error::TooFew {
            what: "samples",
            needed: 20,
            got: samples.len(),
        });
    }
    let counts: Vec<f64> = samples.iter().map(|s| s.counts as f64).collect();
    match mode {
        NormalityMode::Raw => jarque_bera(&counts),
        NormalityMode::BatchMeans(m) => {
            if m < 2 {
                return Err(Error::invalid("batch", "batch size must be >= 2"));
            }
            let batches = counts.len() / m;
            if batches < 20 {
                return Err(Error::TooFew {
                    what: "batches",
                    needed: 20,
                    got: batches,
                });
            }
            let means: Vec<f64> = counts
                .chunks_exact(m)
                .map(|c| c.iter().sum::<f64>() / m as f64)
                .collect();
            jarque_bera(&means)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepResult {
    pub settings: ElectronicsSettings,
    pub rmse_kt1: f64,
    pub rmse_ct: f64,
    pub normality: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    RmseKt1,
    RmseCt,
    Normality,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::RmseKt1, Criterion::RmseCt, Criterion::Normality];

    pub fn name(&self) -> &'static str {
        match self {
            Criterion::RmseKt1 => "rmse_kt1",
            Criterion::RmseCt => "rmse_ct",
            Criterion::Normality => "normality",
        }
    }

    pub fn of(&self, r: &SweepResult) -> f64 {
        match self {
            Criterion::RmseKt1 => r.rmse_kt1,
            Criterion::RmseCt => r.rmse_ct,
            Criterion::Normality => r.normality,
        }
    }
}

/// Ascending by criterion, ties broken by settings in (hv, gain, lld, tau) order.
pub fn rank(results: &[SweepResult], criterion: Criterion) -> Vec<SweepResult> {
    let mut out = results.to_vec();
    out.sort_by(|a, b| {
        criterion
            .of(a)
            .total_cmp(&criterion.of(b))
            .then_with(|| a.settings.lex_cmp(&b.settings))
    });
    out
}

/// Everything a sweep point needs besides its electronics settings.
#[derive(Debug, Clone)]
pub struct SweepSetup {
    pub phantom: Phantom,
    pub geometry: FanGeometry,
    /// Detector model; its `settings` field is replaced per sweep point.
    pub model: DetectorModel,
    pub filters: Vec<FilterSpec>,
    pub grid: GridSpec,
    pub rebin: RebinParams,
    /// Repeated open-beam readings per detector for normality scoring.
    pub repeats: usize,
    pub supersample: usize,
    pub normality: NormalityMode,
    pub nmax: NmaxMode,
}

/// Full metrics of one scan at one setting.
#[derive(Debug, Clone)]
pub struct PointReport {
    pub result: SweepResult,
    pub signature: Kt1Signature,
    pub images: Vec<ReconImage>,
}

/// Seed of sweep point `index` under `master`.
pub fn derive_seed(master: u64, index: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = master.wrapping_add(
        (index as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15),
    );
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulates, reconstructs and scores one setting.
pub fn evaluate_setting(
    setup: &SweepSetup,
    settings: ElectronicsSettings,
    truth: &Image,
    seed: u64,
) -> Result<PointReport> {
    let model = setup.model.with_settings(settings);
    let scanned = scan(&setup.phantom, &setup.geometry, &model, setup.repeats, seed)?;
    let projection = counts_to_projection(&scanned.counts)?;
    let (_, images) = reconstruct_all(&projection, &setup.filters, setup.grid, &setup.rebin)?;
    let signature = kt1_signature(&images, setup.nmax)?;
    let ct = images
        .iter()
        .map(|img| rmse_ct(&img.image, truth))
        .collect::<Result<Vec<_>>>()?;
    let rmse_ct = ct.iter().sum::<f64>() / ct.len() as f64;
    let normality = normality_score(&scanned.pooled_samples(), setup.normality)?;
    Ok(PointReport {
        result: SweepResult {
            settings,
            rmse_kt1: signature.rmse_fit,
            rmse_ct,
            normality,
        },
        signature,
        images,
    })
}

/// Brute-force sweep over electronics settings; point `i` is simulated with
/// `derive_seed(seed, i)`.
pub fn sweep(
    setup: &SweepSetup,
    settings: &[ElectronicsSettings],
    seed: u64,
) -> Result<Vec<SweepResult>> {
    if settings.is_empty() {
        return Err(Error::TooFew {
            what: "settings",
            needed: 1,
            got: 0,
        });
    }
    let truth = rasterize(&setup.phantom, setup.grid, setup.supersample)?;
    let indexed: Vec<(usize, ElectronicsSettings)> = settings.iter().copied().enumerate().collect();
    par::map_slice(&indexed, |&(i, s)| {
        evaluate_setting(setup, s, &truth, derive_seed(seed, i)).map(|r| r.result)
    })
    .into_iter()
    .collect()
}

/// Cartesian product of the four axes, in (hv, gain, lld, tau) order.
pub fn settings_grid(
    hv: &[f64],
    gain: &[f64],
    lld: &[f64],
    tau: &[f64],
) -> Result<Vec<ElectronicsSettings>> {
    let mut out = Vec::with_capacity(hv.len() * gain.len() * lld.len() * tau.len());
    for &h in hv {
        for &g in gain {
            for &l in lld {
                for &t in tau {
                    out.push(ElectronicsSettings::new(h, g, l, t)?);
                }
            }
        }
    }
    Ok(out)
}

/// Average ranks (1-based), ties sharing the mean rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap_or(Ordering::Equal));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
