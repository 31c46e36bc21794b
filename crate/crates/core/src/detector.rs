//! Scintillation counting model.
//!
//! The four electronics knobs map to three effective parameters:
//! a detection efficiency set by where the discriminator cuts a Gaussian
//! pulse-height spectrum, a spurious-pulse rate suppressed by the
//! discriminator, and an overdispersion factor that grows with the mean
//! pulse height. Counts are `Poisson(signal) + NegBin(spurious)`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::par;
use crate::phantom::Phantom;
use crate::projector::{fan_rays, line_integral, FanGeometry};
use crate::sinogram::{Sinogram, SinogramKind};

/// Counts below this floor are raised to it before taking logs.
pub const COUNT_FLOOR: f64 = 1.0;

const EPSILON_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElectronicsSettings {
    /// PMT high voltage (V).
    pub hv: f64,
    /// Amplifier gain multiplier.
    pub gain: f64,
    /// Lower-level discriminator threshold (pulse-height units).
    pub lld: f64,
    /// Counting time per reading (s).
    pub tau: f64,
}

impl ElectronicsSettings {
    pub fn new(hv: f64, gain: f64, lld: f64, tau: f64) -> Result<Self> {
        let s = Self { hv, gain, lld, tau };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("hv", self.hv),
            ("gain", self.gain),
            ("lld", self.lld),
            ("tau", self.tau),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(key, format!("must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Lexicographic order on (hv, gain, lld, tau).
    pub fn lex_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.hv
            .total_cmp(&other.hv)
            .then(self.gain.total_cmp(&other.gain))
            .then(self.lld.total_cmp(&other.lld))
            .then(self.tau.total_cmp(&other.tau))
    }
}

impl Default for ElectronicsSettings {
    /// The manufacturer reference point.
    fn default() -> Self {
        Self {
            hv: 750.0,
            gain: 1.0,
            lld: 1.0,
            tau: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConstants {
    /// Voltage at which the PMT gain factor is 1 (V).
    pub hv_ref: f64,
    /// PMT gain power-law exponent in `hv / hv_ref`.
    pub pmt_exponent: f64,
    /// Pulse-height spread.
    pub sigma_h: f64,
    /// Spurious pulse base rate (counts/s); zero disables spurious pulses.
    pub nu0: f64,
    /// Discriminator decay scale of the spurious rate.
    pub lld0: f64,
    /// Pulse height at which overdispersion doubles.
    pub h_sat: f64,
}

impl Default for NoiseConstants {
    fn default() -> Self {
        Self {
            hv_ref: 750.0,
            pmt_exponent: 7.0,
            sigma_h: 0.3,
            nu0: 200.0,
            lld0: 0.5,
            h_sat: 5.0,
        }
    }
}

impl NoiseConstants {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("hv_ref", self.hv_ref),
            ("pmt_exponent", self.pmt_exponent),
            ("sigma_h", self.sigma_h),
            ("lld0", self.lld0),
            ("h_sat", self.h_sat),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(key, format!("must be > 0, got {v}")));
            }
        }
        if !(self.nu0 >= 0.0 && self.nu0.is_finite()) {
            return Err(Error::invalid(
                "nu0",
                format!("must be >= 0, got {}", self.nu0),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorModel {
    /// Open-beam true-event rate at the detector face (counts/s).
    pub i0_rate: f64,
    pub settings: ElectronicsSettings,
    pub nominal: ElectronicsSettings,
    pub noise: NoiseConstants,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            i0_rate: DEFAULT_I0_RATE,
            settings: ElectronicsSettings::default(),
            nominal: ElectronicsSettings::default(),
            noise: NoiseConstants::default(),
        }
    }
}

/// Default open-beam rate: 2e4 counts/s, i.e. 1e4 detected counts per
/// one-second reading at the nominal 50% efficiency.
pub const DEFAULT_I0_RATE: f64 = 2.0e4;

impl DetectorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.i0_rate > 0.0 && self.i0_rate.is_finite()) {
            return Err(Error::invalid("i0_rate", "must be > 0"));
        }
        self.settings.validate()?;
        self.nominal.validate()?;
        self.noise.validate()
    }

    pub fn with_settings(&self, settings: ElectronicsSettings) -> Self {
        Self { settings, ..*self }
    }

    pub fn effective_params(&self) -> EffectiveParams {
        effective_params(self)
    }

    /// Expected true-signal counts per reading behind `path_attenuation`.
    pub fn signal_mean(&self, path_attenuation: f64) -> f64 {
        let eff = self.effective_params();
        eff.epsilon * self.i0_rate * (-path_attenuation).exp() * self.settings.tau
    }

    /// Returns a copy whose `i0_rate` gives `dose` expected detected
    /// open-beam counts per reading at the current settings.
    pub fn with_open_beam_dose(&self, dose: f64) -> Self {
        let eff = self.effective_params();
        Self {
            i0_rate: dose / (eff.epsilon * self.settings.tau),
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveParams {
    /// Detection efficiency in (0, 1).
    pub epsilon: f64,
    /// Spurious pulse rate (counts/s).
    pub nu: f64,
    /// Overdispersion of the spurious component (variance / mean, >= 1).
    pub d: f64,
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn effective_params(model: &DetectorModel) -> EffectiveParams {
    let s = &model.settings;
    let c = &model.noise;
    let h = s.gain * (s.hv / c.hv_ref).powf(c.pmt_exponent);
    let epsilon = normal_cdf((h - s.lld) / c.sigma_h).clamp(EPSILON_CLAMP, 1.0 - EPSILON_CLAMP);
    let nu = c.nu0 * (-s.lld / c.lld0).exp();
    let d = 1.0 + (h / c.h_sat).powi(2);
    EffectiveParams { epsilon, nu, d }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CountSample {
    pub counts: u64,
    /// Counting time (s), stored as raw bits so samples stay `Eq`.
    duration_bits: u64,
}

impl CountSample {
    pub fn new(counts: u64, duration: f64) -> Self {
        Self {
            counts,
            duration_bits: duration.to_bits(),
        }
    }

    pub fn duration(&self) -> f64 {
        f64::from_bits(self.duration_bits)
    }
}

/// RNG for substream `stream` of master `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean)
        .expect("finite positive mean")
        .sample(rng) as u64
}

/// Negative binomial with the given mean and `variance = dispersion * mean`,
/// drawn as a gamma-Poisson mixture. `dispersion == 1` is plain Poisson.
pub fn negative_binomial<R: Rng + ?Sized>(mean: f64, dispersion: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let excess = dispersion - 1.0;
    if excess <= 1e-12 {
        return poisson(mean, rng);
    }
    let rate = Gamma::new(mean / excess, excess)
        .expect("positive gamma parameters")
        .sample(rng);
    poisson(rate, rng)
}

fn draw<R: Rng + ?Sized>(
    model: &DetectorModel,
    eff: &EffectiveParams,
    path_attenuation: f64,
    rng: &mut R,
) -> CountSample {
    let tau = model.settings.tau;
    let lambda = eff.epsilon * model.i0_rate * (-path_attenuation).exp() * tau;
    let counts = poisson(lambda, rng) + negative_binomial(eff.nu * tau, eff.d, rng);
    CountSample::new(counts, tau)
}

/// One counting reading behind `path_attenuation`.
pub fn sample_counts<R: Rng + ?Sized>(
    model: &DetectorModel,
    path_attenuation: f64,
    rng: &mut R,
) -> CountSample {
    debug_assert!(path_attenuation >= 0.0);
    draw(model, &model.effective_params(), path_attenuation, rng)
}

/// `n` open-beam readings from a single stream.
pub fn sample_open_beam<R: Rng + ?Sized>(
    model: &DetectorModel,
    n: usize,
    rng: &mut R,
) -> Vec<CountSample> {
    let eff = model.effective_params();
    (0..n).map(|_| draw(model, &eff, 0.0, rng)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanOutput {
    /// Views x detectors counts sinogram, with `open_beam` attached.
    pub counts: Sinogram,
    /// One open-beam reference reading per detector.
    pub open_beam: Vec<CountSample>,
    /// `repeats` open-beam readings per detector: `samples[detector][repeat]`.
    pub samples: Vec<Vec<CountSample>>,
}

impl ScanOutput {
    /// All repeated open-beam readings, detector-major.
    pub fn pooled_samples(&self) -> Vec<CountSample> {
        self.samples.iter().flatten().copied().collect()
    }
}

/// Simulated scan. Substream ids: ray `(v, k)` uses `v * n_det + k`; the
/// open-beam reference of detector `k` uses `n_views * n_det + k`; the
/// repeated open-beam readings of detector `k` use `(n_views + 1) * n_det + k`.
pub fn scan(
    phantom: &Phantom,
    geom: &FanGeometry,
    model: &DetectorModel,
    repeats: usize,
    seed: u64,
) -> Result<ScanOutput> {
    if repeats == 0 {
        return Err(Error::TooFew {
            what: "repeats",
            needed: 1,
            got: 0,
        });
    }
    model.validate()?;
    let eff = model.effective_params();
    let n_det = geom.n_detectors;
    let n_views = geom.n_views();

    let rows = par::map_indices(n_views, |v| {
        let rays = fan_rays(geom, v).expect("view index in range");
        rays.iter()
            .enumerate()
            .map(|(k, ray)| {
                let mut rng = substream(seed, (v * n_det + k) as u64);
                let a = line_integral(phantom, ray);
                draw(model, &eff, a, &mut rng).counts as f64
            })
            .collect::<Vec<_>>()
    });
    let values: Vec<f64> = rows.into_iter().flatten().collect();

    let base = (n_views * n_det) as u64;
    let open_beam: Vec<CountSample> = (0..n_det)
        .map(|k| draw(model, &eff, 0.0, &mut substream(seed, base + k as u64)))
        .collect();
    let samples = par::map_indices(n_det, |k| {
        let mut rng = substream(seed, base + (n_det + k) as u64);
        (0..repeats)
            .map(|_| draw(model, &eff, 0.0, &mut rng))
            .collect()
    });

    Ok(ScanOutput {
        counts: Sinogram {
            kind: SinogramKind::Counts,
            geometry: geom.clone(),
            values,
            seed: Some(seed),
            open_beam: Some(open_beam.iter().map(|c| c.counts as f64).collect()),
        },
        open_beam,
        samples,
    })
}

/// Beer-Lambert inversion `p = ln(open / max(counts, 1))`, clamped at zero.
pub fn counts_to_projection(counts: &Sinogram) -> Result<Sinogram> {
    if counts.kind != SinogramKind::Counts {
        return Err(Error::invalid("kind", "expected a counts sinogram"));
    }
    counts.check_shape()?;
    let open = counts
        .open_beam
        .as_ref()
        .ok_or_else(|| Error::invalid("open_beam", "counts sinogram has no open-beam reference"))?;
    if let Some(k) = open.iter().position(|&c| c <= 0.0) {
        return Err(Error::ZeroOpenBeam { detector: k });
    }
    let n_det = counts.n_detectors();
    let values = counts
        .values
        .iter()
        .enumerate()
        .map(|(i, &c)| (open[i % n_det] / c.max(COUNT_FLOOR)).ln().max(0.0))
        .collect();
    Ok(Sinogram {
        kind: SinogramKind::Attenuation,
        geometry: counts.geometry.clone(),
        values,
        seed: counts.seed,
        open_beam: None,
    })
}

/// Counts sinogram holding the exact expected true-signal counts of an
/// attenuation sinogram (no sampling, no spurious pulses).
pub fn expected_counts(attenuation: &Sinogram, model: &DetectorModel) -> Sinogram {
    let values = attenuation
        .values
        .iter()
        .map(|&a| model.signal_mean(a))
        .collect();
    Sinogram {
        kind: SinogramKind::Counts,
        geometry: attenuation.geometry.clone(),
        values,
        seed: None,
        open_beam: Some(vec![model.signal_mean(0.0); attenuation.n_detectors()]),
    }
}
