use crate::error::{Error, Result};
use crate::projector::FanGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SinogramKind {
    /// Raw detector counts.
    Counts,
    /// Log-attenuation line integrals.
    Attenuation,
}

impl SinogramKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SinogramKind::Counts => "counts",
            SinogramKind::Attenuation => "attenuation",
        }
    }
}

/// Fan-beam sinogram, row-major as views x detectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub kind: SinogramKind,
    pub geometry: FanGeometry,
    pub values: Vec<f64>,
    /// Master seed of the scan that produced it, if stochastic.
    pub seed: Option<u64>,
    /// Per-detector open-beam reference counts (counts kind only).
    pub open_beam: Option<Vec<f64>>,
}

impl Sinogram {
    pub fn n_views(&self) -> usize {
        self.geometry.n_views()
    }

    pub fn n_detectors(&self) -> usize {
        self.geometry.n_detectors
    }

    #[inline]
    pub fn get(&self, view: usize, detector: usize) -> f64 {
        self.values[view * self.geometry.n_detectors + detector]
    }

    pub fn check_shape(&self) -> Result<()> {
        let expected = self.n_views() * self.n_detectors();
        if self.values.len() != expected {
            return Err(Error::DimensionMismatch {
                left: self.values.len(),
                right: expected,
            });
        }
        if let Some(ob) = &self.open_beam {
            if ob.len() != self.n_detectors() {
                return Err(Error::DimensionMismatch {
                    left: ob.len(),
                    right: self.n_detectors(),
                });
            }
        }
        Ok(())
    }
}

/// Parallel-beam sinogram (thetas x s_bins) with a coverage mask; `false`
/// marks samples that were outside the measured support and zero-filled.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelSinogram {
    /// Ray direction angles (degrees).
    pub thetas: Vec<f64>,
    /// Signed ray offsets (cm), uniform and symmetric about zero.
    pub s_bins: Vec<f64>,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl ParallelSinogram {
    pub fn zeros(thetas: Vec<f64>, s_bins: Vec<f64>) -> Self {
        let n = thetas.len() * s_bins.len();
        Self {
            thetas,
            s_bins,
            values: vec![0.0; n],
            mask: vec![true; n],
        }
    }

    pub fn n_thetas(&self) -> usize {
        self.thetas.len()
    }

    pub fn n_bins(&self) -> usize {
        self.s_bins.len()
    }

    #[inline]
    pub fn get(&self, theta: usize, bin: usize) -> f64 {
        self.values[theta * self.s_bins.len() + bin]
    }

    pub fn row(&self, theta: usize) -> &[f64] {
        let n = self.s_bins.len();
        &self.values[theta * n..(theta + 1) * n]
    }

    pub fn bin_width(&self) -> f64 {
        if self.s_bins.len() < 2 {
            return 0.0;
        }
        self.s_bins[1] - self.s_bins[0]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.thetas.len() * self.s_bins.len();
        if self.values.len() != n || self.mask.len() != n {
            return Err(Error::DimensionMismatch {
                left: self.values.len(),
                right: n,
            });
        }
        if self.s_bins.len() < 2 {
            return Err(Error::TooFew {
                what: "s bins",
                needed: 2,
                got: self.s_bins.len(),
            });
        }
        let ds = self.bin_width();
        if ds <= 0.0 {
            return Err(Error::invalid("s_bins", "must be increasing"));
        }
        let n_s = self.s_bins.len();
        for (j, s) in self.s_bins.iter().enumerate() {
            if (s + self.s_bins[n_s - 1 - j]).abs() > 1e-9 * ds.max(1.0) {
                return Err(Error::invalid("s_bins", "must be symmetric about 0"));
            }
            if j > 0 && ((s - self.s_bins[j - 1]) - ds).abs() > 1e-9 * ds {
                return Err(Error::invalid("s_bins", "must be uniformly spaced"));
            }
        }
        Ok(())
    }
}

/// `n` bin centers evenly covering `[-s_max, s_max]`.
pub fn uniform_s_bins(n: usize, s_max: f64) -> Vec<f64> {
    let ds = 2.0 * s_max / n as f64;
    (0..n)
        .map(|j| (j as f64 - 0.5 * (n as f64 - 1.0)) * ds)
        .collect()
}

/// `n` angles evenly covering `[0, span)` degrees.
pub fn uniform_thetas(n: usize, span: f64) -> Vec<f64> {
    (0..n).map(|i| i as f64 * span / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn s_bins_symmetric_uniform() {
        let s = uniform_s_bins(64, 6.0);
        assert_eq!(s.len(), 64);
        assert!((s[0] + s[63]).abs() < 1e-12);
        assert!((s[1] - s[0] - 0.1875).abs() < 1e-12);
        let odd = uniform_s_bins(5, 1.0);
        assert_eq!(odd[2], 0.0);
        let p = ParallelSinogram::zeros(uniform_thetas(4, 180.0), s);
        assert!(p.validate().is_ok());
    }
}
