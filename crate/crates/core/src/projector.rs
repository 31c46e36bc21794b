//! Analytic fan-beam forward model.
//!
//! Angles are in degrees. View angle `beta` is measured counter-clockwise
//! from +x; at `beta = 0` the source sits on the -x axis and the central ray
//! points along +x. A ray at in-fan angle `gamma` has direction angle
//! `beta + gamma`, which makes it the parallel ray at `theta = beta + gamma`
//! with signed offset `s = source_to_center * sin(gamma)`, where
//! `s = p . (-sin theta, cos theta)` for any point `p` on the ray.

use crate::error::{Error, Result};
use crate::par;
use crate::phantom::{DiscSpec, Phantom};
use crate::sinogram::{ParallelSinogram, Sinogram, SinogramKind};

#[derive(Debug, Clone, PartialEq)]
pub struct FanGeometry {
    /// Source to rotation center (cm).
    pub source_to_center: f64,
    /// Source to detector arc (cm); the arc is centered on the source.
    pub source_to_detector: f64,
    /// Full fan angle (degrees).
    pub fan_angle: f64,
    pub n_detectors: usize,
    /// Strictly increasing, each in [0, 360).
    pub view_angles: Vec<f64>,
}

impl FanGeometry {
    pub fn new(
        source_to_center: f64,
        source_to_detector: f64,
        fan_angle: f64,
        n_detectors: usize,
        view_angles: Vec<f64>,
    ) -> Result<Self> {
        let g = Self {
            source_to_center,
            source_to_detector,
            fan_angle,
            n_detectors,
            view_angles,
        };
        g.validate()?;
        Ok(g)
    }

    /// `n_views` views evenly spaced over a full turn starting at 0.
    pub fn with_uniform_views(
        source_to_center: f64,
        source_to_detector: f64,
        fan_angle: f64,
        n_detectors: usize,
        n_views: usize,
    ) -> Result<Self> {
        let step = 360.0 / n_views.max(1) as f64;
        let views = (0..n_views).map(|i| i as f64 * step).collect();
        Self::new(
            source_to_center,
            source_to_detector,
            fan_angle,
            n_detectors,
            views,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.source_to_center > 0.0 && self.source_to_center < self.source_to_detector) {
            return Err(Error::invalid(
                "source_to_center",
                "need 0 < source_to_center < source_to_detector",
            ));
        }
        if !(self.fan_angle > 0.0 && self.fan_angle < 180.0) {
            return Err(Error::invalid("fan_angle", "must lie in (0, 180) degrees"));
        }
        if self.n_detectors == 0 {
            return Err(Error::invalid("n_detectors", "must be >= 1"));
        }
        if self.view_angles.is_empty() {
            return Err(Error::invalid("view_angles", "must not be empty"));
        }
        if self.view_angles.iter().any(|a| !(0.0..360.0).contains(a)) {
            return Err(Error::invalid("view_angles", "each must lie in [0, 360)"));
        }
        if self.view_angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("view_angles", "must be strictly increasing"));
        }
        Ok(())
    }

    pub fn n_views(&self) -> usize {
        self.view_angles.len()
    }

    pub fn detector_pitch(&self) -> f64 {
        self.fan_angle / self.n_detectors as f64
    }

    /// In-fan angle of detector `k` (degrees), at the bin center.
    pub fn gamma(&self, k: usize) -> f64 {
        -0.5 * self.fan_angle + (k as f64 + 0.5) * self.detector_pitch()
    }

    /// Largest parallel offset reachable inside the fan (cm).
    pub fn s_limit(&self) -> f64 {
        self.source_to_center * (0.5 * self.fan_angle).to_radians().sin()
    }
}

/// Source-to-object 26 cm, source-to-detector 52 cm, 13.25 degree fan, five
/// detectors, 36 views at 10 degree steps.
pub fn paper_geometry() -> FanGeometry {
    FanGeometry::with_uniform_views(26.0, 52.0, 13.25, 5, 36).expect("default geometry is valid")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin_x: f64,
    pub origin_y: f64,
    pub direction_x: f64,
    pub direction_y: f64,
    /// In-fan angle (degrees); zero for parallel rays.
    pub gamma: f64,
    /// View angle (degrees).
    pub beta: f64,
}

impl Ray {
    /// Parallel-beam ray with direction angle `theta` (degrees) and signed
    /// offset `s`.
    pub fn parallel(theta: f64, s: f64) -> Self {
        let (sin, cos) = theta.to_radians().sin_cos();
        Self {
            origin_x: -s * sin - 100.0 * cos,
            origin_y: s * cos - 100.0 * sin,
            direction_x: cos,
            direction_y: sin,
            gamma: 0.0,
            beta: theta,
        }
    }

    pub fn reversed(&self) -> Self {
        Self {
            direction_x: -self.direction_x,
            direction_y: -self.direction_y,
            ..*self
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            origin_x: self.origin_x + dx,
            origin_y: self.origin_y + dy,
            ..*self
        }
    }

    /// Chord length of the (infinite) line through a disc.
    pub fn chord(&self, disc: &DiscSpec) -> f64 {
        let wx = disc.center_x - self.origin_x;
        let wy = disc.center_y - self.origin_y;
        let d = wx * self.direction_y - wy * self.direction_x;
        let h2 = disc.radius * disc.radius - d * d;
        if h2 > 0.0 {
            2.0 * h2.sqrt()
        } else {
            0.0
        }
    }
}

/// All rays of one view, one per detector.
pub fn fan_rays(geom: &FanGeometry, view_index: usize) -> Result<Vec<Ray>> {
    let beta = *geom.view_angles.get(view_index).ok_or(Error::OutOfRange {
        index: view_index,
        len: geom.n_views(),
    })?;
    let (sb, cb) = beta.to_radians().sin_cos();
    let sx = -geom.source_to_center * cb;
    let sy = -geom.source_to_center * sb;
    Ok((0..geom.n_detectors)
        .map(|k| {
            let gamma = geom.gamma(k);
            let (sd, cd) = (beta + gamma).to_radians().sin_cos();
            // detector on the arc of radius source_to_detector around the source
            let dx = sx + geom.source_to_detector * cd;
            let dy = sy + geom.source_to_detector * sd;
            let norm = (dx - sx).hypot(dy - sy);
            Ray {
                origin_x: sx,
                origin_y: sy,
                direction_x: (dx - sx) / norm,
                direction_y: (dy - sy) / norm,
                gamma,
                beta,
            }
        })
        .collect())
}

/// Closed-form path attenuation `mu_bg * L_bg + sum (mu_i - mu_bg) * L_i`.
pub fn line_integral(phantom: &Phantom, ray: &Ray) -> f64 {
    let bg = &phantom.background;
    let mut total = bg.mu * ray.chord(bg);
    for insert in &phantom.inserts {
        let chord = ray.chord(insert);
        if chord > 0.0 {
            total += (insert.mu - bg.mu) * chord;
        }
    }
    total
}

/// Noise-free fan sinogram of line integrals (views x detectors).
pub fn ideal_sinogram(phantom: &Phantom, geom: &FanGeometry) -> Sinogram {
    let n_det = geom.n_detectors;
    let rows = par::map_indices(geom.n_views(), |v| {
        fan_rays(geom, v)
            .expect("view index in range")
            .iter()
            .map(|ray| line_integral(phantom, ray))
            .collect::<Vec<_>>()
    });
    let values = rows.into_iter().flatten().collect::<Vec<_>>();
    debug_assert_eq!(values.len(), geom.n_views() * n_det);
    Sinogram {
        kind: SinogramKind::Attenuation,
        geometry: geom.clone(),
        values,
        seed: None,
        open_beam: None,
    }
}

/// Analytic parallel-beam projections of the phantom on the given samples.
pub fn parallel_sinogram(phantom: &Phantom, thetas: &[f64], s_bins: &[f64]) -> ParallelSinogram {
    let n_s = s_bins.len();
    let values = par::map_indices(thetas.len() * n_s, |idx| {
        line_integral(
            phantom,
            &Ray::parallel(thetas[idx / n_s], s_bins[idx % n_s]),
        )
    });
    ParallelSinogram {
        thetas: thetas.to_vec(),
        s_bins: s_bins.to_vec(),
        values,
        mask: vec![true; thetas.len() * n_s],
    }
}
