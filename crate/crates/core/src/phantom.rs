//! Cyber phantom: a background disc with non-overlapping disc inserts.
//!
//! Physical coordinates are right-handed with the origin at the rotation
//! center. Image arrays are row-major with pixel (0, 0) at the top-left:
//! column index grows with +x, row index grows with -y.

use crate::error::{Error, Result};
use crate::par;

/// Linear attenuation of PMMA at 662 keV (cm^-1): mass attenuation
/// 0.0806 cm^2/g times density 1.19 g/cm^3.
pub const MU_PERSPEX: f64 = 0.096;
pub const MU_ALUMINIUM: f64 = 0.211;
pub const MU_IRON: f64 = 0.544;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscSpec {
    pub center_x: f64,
    pub center_y: f64,
    pub radius: f64,
    pub mu: f64,
}

impl DiscSpec {
    pub fn new(center_x: f64, center_y: f64, radius: f64, mu: f64) -> Result<Self> {
        let disc = Self {
            center_x,
            center_y,
            radius,
            mu,
        };
        disc.validate()?;
        Ok(disc)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::invalid(
                "radius",
                format!("must be > 0, got {}", self.radius),
            ));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::invalid(
                "mu",
                format!("must be >= 0, got {}", self.mu),
            ));
        }
        if !(self.center_x.is_finite() && self.center_y.is_finite()) {
            return Err(Error::invalid("center", "must be finite"));
        }
        Ok(())
    }

    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.center_x;
        let dy = y - self.center_y;
        dx * dx + dy * dy <= self.radius * self.radius
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.radius * self.radius
    }

    fn center_distance(&self, other: &DiscSpec) -> f64 {
        (self.center_x - other.center_x).hypot(self.center_y - other.center_y)
    }
}

/// Background disc plus inserts. Insert attenuation replaces the background
/// value inside the insert.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub background: DiscSpec,
    pub inserts: Vec<DiscSpec>,
}

impl Phantom {
    pub fn new(background: DiscSpec, inserts: Vec<DiscSpec>) -> Result<Self> {
        let phantom = Self {
            background,
            inserts,
        };
        phantom.validate()?;
        Ok(phantom)
    }

    pub fn validate(&self) -> Result<()> {
        self.background.validate()?;
        for (i, disc) in self.inserts.iter().enumerate() {
            disc.validate()?;
            let reach = disc.center_distance(&self.background) + disc.radius;
            if reach > self.background.radius {
                return Err(Error::invalid(
                    format!("insert[{i}]"),
                    "extends outside the background disc",
                ));
            }
            for (j, other) in self.inserts.iter().enumerate().skip(i + 1) {
                if disc.center_distance(other) < disc.radius + other.radius {
                    return Err(Error::invalid(
                        format!("insert[{i}]"),
                        format!("overlaps insert[{j}]"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// A single uniform disc with no inserts.
    pub fn uniform_disc(center_x: f64, center_y: f64, radius: f64, mu: f64) -> Result<Self> {
        Self::new(DiscSpec::new(center_x, center_y, radius, mu)?, Vec::new())
    }

    pub fn max_mu(&self) -> f64 {
        self.inserts
            .iter()
            .map(|d| d.mu)
            .fold(self.background.mu, f64::max)
    }

    /// Attenuation at a point: insert value, else background, else vacuum.
    pub fn mu_at(&self, x: f64, y: f64) -> f64 {
        if let Some(insert) = self.inserts.iter().find(|d| d.contains(x, y)) {
            return insert.mu;
        }
        if self.background.contains(x, y) {
            self.background.mu
        } else {
            0.0
        }
    }

    /// Closed-form integral of mu over the plane.
    pub fn total_attenuation_area(&self) -> f64 {
        let mut total = self.background.mu * self.background.area();
        for d in &self.inserts {
            total += (d.mu - self.background.mu) * d.area();
        }
        total
    }

    /// Returns a copy with every disc scaled in attenuation by `factor`.
    pub fn scaled_mu(&self, factor: f64) -> Self {
        let scale = |d: &DiscSpec| DiscSpec {
            mu: d.mu * factor,
            ..*d
        };
        Self {
            background: scale(&self.background),
            inserts: self.inserts.iter().map(scale).collect(),
        }
    }
}

/// Knobs for [`paper_phantom_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhantomLayout {
    pub mu_perspex: f64,
    pub aluminium_center: (f64, f64),
    pub iron_center: (f64, f64),
}

impl Default for PhantomLayout {
    fn default() -> Self {
        Self {
            mu_perspex: MU_PERSPEX,
            aluminium_center: (-2.5, 0.0),
            iron_center: (3.0, 2.0),
        }
    }
}

/// 12 cm Perspex cylinder with a 3.8 cm aluminium and a 0.8 cm iron insert.
pub fn paper_phantom() -> Phantom {
    paper_phantom_with(PhantomLayout::default()).expect("default layout is valid")
}

pub fn paper_phantom_with(layout: PhantomLayout) -> Result<Phantom> {
    let (ax, ay) = layout.aluminium_center;
    let (fx, fy) = layout.iron_center;
    Phantom::new(
        DiscSpec::new(0.0, 0.0, 6.0, layout.mu_perspex)?,
        vec![
            DiscSpec::new(ax, ay, 1.9, MU_ALUMINIUM)?,
            DiscSpec::new(fx, fy, 0.4, MU_IRON)?,
        ],
    )
}

/// Square pixel grid centered on the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n_pixels: usize,
    pub fov: f64,
}

impl GridSpec {
    pub fn new(n_pixels: usize, fov: f64) -> Result<Self> {
        let grid = Self { n_pixels, fov };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pixels < 2 {
            return Err(Error::invalid(
                "n_pixels",
                format!("must be >= 2, got {}", self.n_pixels),
            ));
        }
        if !(self.fov > 0.0 && self.fov.is_finite()) {
            return Err(Error::invalid(
                "fov",
                format!("must be > 0, got {}", self.fov),
            ));
        }
        Ok(())
    }

    pub fn pixel_size(&self) -> f64 {
        self.fov / self.n_pixels as f64
    }

    pub fn len(&self) -> usize {
        self.n_pixels * self.n_pixels
    }

    pub fn is_empty(&self) -> bool {
        self.n_pixels == 0
    }

    /// Physical x of the center of column `col`.
    #[inline]
    pub fn x_of(&self, col: usize) -> f64 {
        -0.5 * self.fov + (col as f64 + 0.5) * self.pixel_size()
    }

    /// Physical y of the center of row `row`.
    #[inline]
    pub fn y_of(&self, row: usize) -> f64 {
        0.5 * self.fov - (row as f64 + 0.5) * self.pixel_size()
    }

    /// Whether the pixel center lies inside the inscribed circle.
    pub fn in_fov(&self, row: usize, col: usize) -> bool {
        let r = 0.5 * self.fov;
        self.x_of(col).hypot(self.y_of(row)) <= r
    }
}

/// Row-major square image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl Image {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                left: values.len(),
                right: grid.len(),
            });
        }
        Ok(Self { grid, values })
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.grid.n_pixels + col]
    }

    /// Signed maximum pixel value.
    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Rasterizes the phantom; each pixel is the mean of `mu_at` over a
/// `supersample` x `supersample` lattice of sub-pixel centers. Pixels
/// inside one region get its `mu` exactly.
pub fn rasterize(phantom: &Phantom, grid: GridSpec, supersample: usize) -> Result<Image> {
    grid.validate()?;
    if supersample == 0 {
        return Err(Error::invalid("supersample", "must be >= 1"));
    }
    let n = grid.n_pixels;
    let h = grid.pixel_size();
    let k = supersample;
    let kk = (k * k) as f64;
    let values = par::map_indices(grid.len(), |idx| {
        let (row, col) = (idx / n, idx % n);
        let x0 = grid.x_of(col) - 0.5 * h;
        let y0 = grid.y_of(row) + 0.5 * h;
        // hits per region: background, then inserts
        let mut hits = vec![0usize; phantom.inserts.len() + 1];
        for a in 0..k {
            let y = y0 - (a as f64 + 0.5) * h / k as f64;
            for b in 0..k {
                let x = x0 + (b as f64 + 0.5) * h / k as f64;
                if let Some(i) = phantom.inserts.iter().position(|d| d.contains(x, y)) {
                    hits[i + 1] += 1;
                } else if phantom.background.contains(x, y) {
                    hits[0] += 1;
                }
            }
        }
        std::iter::once(&phantom.background)
            .chain(&phantom.inserts)
            .zip(&hits)
            .map(|(d, &c)| d.mu * (c as f64 / kk))
            .sum::<f64>()
    });
    Image::from_values(grid, values)
}
