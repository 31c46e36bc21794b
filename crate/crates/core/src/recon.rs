//! Fan-to-parallel rebinning and convolution backprojection with the
//! Hamming window family.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::par;
use crate::phantom::{GridSpec, Image};
use crate::sinogram::{uniform_s_bins, uniform_thetas, ParallelSinogram, Sinogram, SinogramKind};

/// Reconstruction filter: Hamming window parameter plus the window's
/// second derivative at zero frequency, which is the KT-1 abscissa.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSpec {
    pub code: String,
    pub alpha: f64,
    pub w2_0: f64,
}

/// Code, alpha and W''(0) of the five named Hamming filters, sharpest first.
pub const HAMMING_TABLE: [(&str, f64, f64); 5] = [
    ("h99", 0.99, 0.001),
    ("h91", 0.91, 0.083),
    ("h75", 0.75, 0.250),
    ("h54", 0.54, 0.460),
    ("h50", 0.50, 0.500),
];

impl FilterSpec {
    pub fn custom(code: impl Into<String>, alpha: f64, w2_0: f64) -> Result<Self> {
        if !(0.5..=1.0).contains(&alpha) {
            return Err(Error::invalid(
                "alpha",
                format!("must lie in [0.5, 1], got {alpha}"),
            ));
        }
        if !w2_0.is_finite() {
            return Err(Error::invalid("w2_0", "must be finite"));
        }
        Ok(Self {
            code: code.into(),
            alpha,
            w2_0,
        })
    }

    /// Looks up a named filter.
    pub fn by_code(code: &str) -> Result<Self> {
        HAMMING_TABLE
            .iter()
            .find(|(c, _, _)| *c == code)
            .map(|&(c, alpha, w2_0)| Self {
                code: c.to_string(),
                alpha,
                w2_0,
            })
            .ok_or_else(|| Error::UnknownFilter {
                code: code.to_string(),
                valid: valid_codes(),
            })
    }

    /// Hamming window at normalized frequency `q` (1 = Nyquist).
    pub fn window(&self, q: f64) -> f64 {
        self.alpha + (1.0 - self.alpha) * (PI * q).cos()
    }
}

pub fn valid_codes() -> String {
    HAMMING_TABLE
        .iter()
        .map(|(c, _, _)| *c)
        .collect::<Vec<_>>()
        .join(", ")
}

/// The five named filters in table order.
pub fn hamming_filters() -> Vec<FilterSpec> {
    HAMMING_TABLE
        .iter()
        .map(|(c, _, _)| FilterSpec::by_code(c).expect("table code"))
        .collect()
}

/// Parses a comma-separated list of filter codes.
pub fn parse_filter_codes(list: &str) -> Result<Vec<FilterSpec>> {
    list.split(',')
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .map(FilterSpec::by_code)
        .collect()
}

/// Ramp-times-window filter realized on a zero-padded FFT grid.
#[derive(Debug, Clone)]
pub struct FilterKernel {
    pub n_bins: usize,
    pub bin_width: f64,
    /// Frequency response on the padded grid, in FFT order.
    pub response: Vec<f64>,
    /// Spatial taps (circular, length = padded size).
    pub taps: Vec<f64>,
}

impl FilterKernel {
    pub fn padded_len(&self) -> usize {
        self.response.len()
    }

    /// Filters one projection row; output has the row's length.
    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        let mut planner = FftPlanner::<f64>::new();
        self.apply_with(row, &mut planner)
    }

    fn apply_with(&self, row: &[f64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
        let n = self.padded_len();
        let mut buf: Vec<Complex<f64>> = row
            .iter()
            .map(|&v| Complex::new(v, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(n)
            .collect();
        planner.plan_fft_forward(n).process(&mut buf);
        for (b, h) in buf.iter_mut().zip(&self.response) {
            *b *= *h;
        }
        planner.plan_fft_inverse(n).process(&mut buf);
        let inv = 1.0 / n as f64;
        buf.iter().take(row.len()).map(|c| c.re * inv).collect()
    }
}

/// Builds the kernel `H(q) = |q| W(q) / (2 * bin_width)` on
/// `next_pow2(2 * n_bins)` frequencies.
pub fn filter_kernel(filter: &FilterSpec, n_bins: usize, bin_width: f64) -> Result<FilterKernel> {
    if n_bins < 2 {
        return Err(Error::TooFew {
            what: "bins",
            needed: 2,
            got: n_bins,
        });
    }
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::invalid("bin_width", "must be > 0"));
    }
    let n = (2 * n_bins).next_power_of_two();
    let half = (n / 2) as f64;
    let response: Vec<f64> = (0..n)
        .map(|k| {
            let m = if k <= n / 2 {
                k as f64
            } else {
                k as f64 - n as f64
            };
            let q = m / half;
            q.abs() * filter.window(q) / (2.0 * bin_width)
        })
        .collect();
    let mut buf: Vec<Complex<f64>> = response.iter().map(|&h| Complex::new(h, 0.0)).collect();
    FftPlanner::<f64>::new()
        .plan_fft_inverse(n)
        .process(&mut buf);
    let taps = buf.iter().map(|c| c.re / n as f64).collect();
    Ok(FilterKernel {
        n_bins,
        bin_width,
        response,
        taps,
    })
}

/// Parallel sampling used when rebinning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RebinParams {
    pub n_thetas: usize,
    /// Angular span of the thetas (degrees), 180 or 360.
    pub theta_span: f64,
    pub n_s_bins: usize,
    /// Half-width of the s range (cm).
    pub s_max: f64,
}

impl Default for RebinParams {
    fn default() -> Self {
        Self {
            n_thetas: 36,
            theta_span: 360.0,
            n_s_bins: 64,
            s_max: 6.0,
        }
    }
}

impl RebinParams {
    pub fn thetas(&self) -> Vec<f64> {
        uniform_thetas(self.n_thetas, self.theta_span)
    }

    pub fn s_bins(&self) -> Vec<f64> {
        uniform_s_bins(self.n_s_bins, self.s_max)
    }
}

/// Position of `beta` (degrees) between neighbouring views on the circle:
/// returns `(lower, upper, weight_of_upper)`.
fn bracket_view(views: &[f64], beta: f64) -> (usize, usize, f64) {
    let n = views.len();
    if n == 1 {
        return (0, 0, 0.0);
    }
    let i = views.partition_point(|&v| v <= beta);
    if i == 0 || i == n {
        // between the last view and the first one plus a full turn
        let lo = views[n - 1];
        let span = views[0] + 360.0 - lo;
        let b = if beta < views[0] { beta + 360.0 } else { beta };
        return (n - 1, 0, (b - lo) / span);
    }
    let (lo, hi) = (views[i - 1], views[i]);
    (i - 1, i, (beta - lo) / (hi - lo))
}

/// Resamples a fan attenuation sinogram onto parallel `(theta, s)` samples
/// by bilinear interpolation in `(beta, gamma)`. Offsets outside the fan are
/// zero-filled and cleared in the mask.
pub fn rebin_fan_to_parallel(
    fan: &Sinogram,
    thetas: &[f64],
    s_bins: &[f64],
) -> Result<ParallelSinogram> {
    if fan.kind != SinogramKind::Attenuation {
        return Err(Error::invalid(
            "kind",
            "rebinning needs an attenuation sinogram",
        ));
    }
    fan.check_shape()?;
    if thetas.len() < 2 {
        return Err(Error::TooFew {
            what: "thetas",
            needed: 2,
            got: thetas.len(),
        });
    }
    if s_bins.len() < 2 {
        return Err(Error::TooFew {
            what: "s bins",
            needed: 2,
            got: s_bins.len(),
        });
    }
    let geom = &fan.geometry;
    let d = geom.source_to_center;
    if let Some(&s) = s_bins.iter().find(|s| s.abs() >= d) {
        return Err(Error::OutsideFan { s, limit: d });
    }
    let s_limit = geom.s_limit();
    let n_det = geom.n_detectors;
    let pitch = geom.detector_pitch();
    let gamma0 = geom.gamma(0);
    let n_s = s_bins.len();

    let samples = par::map_indices(thetas.len() * n_s, |idx| {
        let theta = thetas[idx / n_s];
        let s = s_bins[idx % n_s];
        if s.abs() > s_limit {
            return (0.0, false);
        }
        let gamma = (s / d).asin().to_degrees();
        let beta = (theta - gamma).rem_euclid(360.0);
        let (v0, v1, wv) = bracket_view(&geom.view_angles, beta);

        let g = ((gamma - gamma0) / pitch).clamp(0.0, (n_det - 1) as f64);
        let k0 = (g.floor() as usize).min(n_det - 1);
        let k1 = (k0 + 1).min(n_det - 1);
        let wk = g - k0 as f64;

        let at = |v: usize| (1.0 - wk) * fan.get(v, k0) + wk * fan.get(v, k1);
        ((1.0 - wv) * at(v0) + wv * at(v1), true)
    });
    let (values, mask) = samples.into_iter().unzip();
    Ok(ParallelSinogram {
        thetas: thetas.to_vec(),
        s_bins: s_bins.to_vec(),
        values,
        mask,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconImage {
    pub image: Image,
    pub filter: FilterSpec,
}

impl ReconImage {
    pub fn grid(&self) -> GridSpec {
        self.image.grid
    }

    /// Signed maximum pixel value.
    pub fn nmax(&self) -> f64 {
        self.image.max()
    }
}

/// Ramp-filters every projection row.
pub fn filter_sinogram(
    parallel: &ParallelSinogram,
    filter: &FilterSpec,
) -> Result<ParallelSinogram> {
    let kernel = filter_kernel(filter, parallel.n_bins(), parallel.bin_width())?;
    let mut out = parallel.clone();
    par::for_each_row(&mut out.values, parallel.n_bins(), |_, row| {
        let filtered = kernel.apply(row);
        row.copy_from_slice(&filtered);
    });
    Ok(out)
}

/// Filtered backprojection onto `grid`.
pub fn fbp(parallel: &ParallelSinogram, filter: &FilterSpec, grid: GridSpec) -> Result<ReconImage> {
    if parallel.n_thetas() < 2 {
        return Err(Error::TooFew {
            what: "views",
            needed: 2,
            got: parallel.n_thetas(),
        });
    }
    parallel.validate()?;
    grid.validate()?;
    let filtered = filter_sinogram(parallel, filter)?;
    let image = backproject(&filtered, grid);
    Ok(ReconImage {
        image,
        filter: filter.clone(),
    })
}

/// Linear-interpolation backprojection scaled by `pi / n_thetas`.
pub fn backproject(filtered: &ParallelSinogram, grid: GridSpec) -> Image {
    let n_s = filtered.n_bins();
    let s0 = filtered.s_bins[0];
    let inv_ds = 1.0 / filtered.bin_width();
    let trig: Vec<(f64, f64)> = filtered
        .thetas
        .iter()
        .map(|t| t.to_radians().sin_cos())
        .collect();
    let scale = PI / filtered.n_thetas() as f64;
    let n = grid.n_pixels;
    let values = par::map_indices(grid.len(), |idx| {
        let x = grid.x_of(idx % n);
        let y = grid.y_of(idx / n);
        let mut acc = 0.0;
        for (t, &(sin, cos)) in trig.iter().enumerate() {
            let pos = (-x * sin + y * cos - s0) * inv_ds;
            if pos < 0.0 || pos > (n_s - 1) as f64 {
                continue;
            }
            let j = (pos.floor() as usize).min(n_s - 2);
            let w = pos - j as f64;
            let row = &filtered.values[t * n_s..(t + 1) * n_s];
            acc += (1.0 - w) * row[j] + w * row[j + 1];
        }
        acc * scale
    });
    Image { grid, values }
}

/// Rebins once, then reconstructs with every filter (order preserved).
pub fn reconstruct_all(
    fan: &Sinogram,
    filters: &[FilterSpec],
    grid: GridSpec,
    rebin: &RebinParams,
) -> Result<(ParallelSinogram, Vec<ReconImage>)> {
    if filters.is_empty() {
        return Err(Error::TooFew {
            what: "filters",
            needed: 1,
            got: 0,
        });
    }
    let parallel = rebin_fan_to_parallel(fan, &rebin.thetas(), &rebin.s_bins())?;
    let images = filters
        .iter()
        .map(|f| fbp(&parallel, f, grid))
        .collect::<Result<Vec<_>>>()?;
    Ok((parallel, images))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{paper_phantom, Phantom};
    use crate::projector::{ideal_sinogram, paper_geometry, parallel_sinogram, FanGeometry};

    #[test]
    fn table_constants() {
        let f = hamming_filters();
        let w: Vec<f64> = f.iter().map(|f| f.w2_0).collect();
        assert_eq!(w, vec![0.001, 0.083, 0.250, 0.460, 0.500]);
        assert_eq!(f[0].code, "h99");
        assert_eq!(f[4].alpha, 0.5);
        let err = FilterSpec::by_code("h42").unwrap_err().to_string();
        assert!(err.contains("h99") && err.contains("h50"));
    }

    #[test]
    fn window_endpoints() {
        for f in hamming_filters() {
            assert!((f.window(0.0) - 1.0).abs() < 1e-15);
            assert!((f.window(1.0) - (2.0 * f.alpha - 1.0)).abs() < 1e-15);
        }
        assert!(FilterSpec::by_code("h50").unwrap().window(1.0).abs() < 1e-15);
    }

    #[test]
    fn kernel_sums_to_zero() {
        for f in hamming_filters() {
            let k = filter_kernel(&f, 64, 0.1).unwrap();
            assert_eq!(k.padded_len(), 128);
            assert!(k.taps.iter().sum::<f64>().abs() < 1e-8);
            assert_eq!(k.response[0], 0.0);
        }
        assert!(filter_kernel(&hamming_filters()[0], 1, 0.1).is_err());
        assert_eq!(
            filter_kernel(&hamming_filters()[0], 100, 0.1)
                .unwrap()
                .padded_len(),
            256
        );
    }

    #[test]
    fn kernel_apply_matches_circular_taps() {
        let f = FilterSpec::by_code("h75").unwrap();
        let k = filter_kernel(&f, 8, 0.5).unwrap();
        let row: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin() + 1.0).collect();
        let fast = k.apply(&row);
        let n = k.padded_len();
        for (j, v) in fast.iter().enumerate() {
            let direct: f64 = (0..8).map(|i| k.taps[(j + n - i) % n] * row[i]).sum();
            assert!((v - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let g = paper_geometry();
        let fan = ideal_sinogram(&paper_phantom().scaled_mu(0.0), &g);
        let p = RebinParams::default();
        let par = rebin_fan_to_parallel(&fan, &p.thetas(), &p.s_bins()).unwrap();
        assert!(par.values.iter().all(|&v| v == 0.0));
        let img = fbp(
            &par,
            &hamming_filters()[0],
            GridSpec::new(16, 12.0).unwrap(),
        )
        .unwrap();
        assert!(img.image.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn central_samples_map_unchanged() {
        let g = FanGeometry::with_uniform_views(26.0, 52.0, 13.25, 5, 36).unwrap();
        let fan = ideal_sinogram(&paper_phantom(), &g);
        let thetas = uniform_thetas(36, 360.0);
        let par = rebin_fan_to_parallel(&fan, &thetas, &[-1.0, 0.0, 1.0]).unwrap();
        for v in 0..36 {
            assert!((par.get(v, 1) - fan.get(v, 2)).abs() < 1e-12);
        }
    }

    #[test]
    fn outside_fan_errors_and_masks() {
        let g = paper_geometry();
        let fan = ideal_sinogram(&paper_phantom(), &g);
        let thetas = uniform_thetas(4, 360.0);
        assert!(matches!(
            rebin_fan_to_parallel(&fan, &thetas, &[-26.0, 26.0]),
            Err(Error::OutsideFan { .. })
        ));
        let par = rebin_fan_to_parallel(&fan, &thetas, &uniform_s_bins(64, 6.0)).unwrap();
        let limit = g.s_limit();
        for (j, s) in par.s_bins.iter().enumerate() {
            assert_eq!(par.mask[j], s.abs() <= limit);
            if s.abs() > limit {
                assert_eq!(par.values[j], 0.0);
            }
        }
        assert!((limit - 3.0).abs() < 0.01);
    }

    #[test]
    fn view_bracketing_wraps() {
        let views = [0.0, 10.0, 20.0];
        assert_eq!(bracket_view(&views, 5.0), (0, 1, 0.5));
        let (a, b, w) = bracket_view(&views, 350.0);
        assert_eq!((a, b), (2, 0));
        assert!((w - 330.0 / 340.0).abs() < 1e-12);
    }

    #[test]
    fn fbp_needs_two_views() {
        let one = ParallelSinogram::zeros(vec![0.0], uniform_s_bins(8, 1.0));
        assert!(matches!(
            fbp(&one, &hamming_filters()[4], GridSpec::new(8, 2.0).unwrap()),
            Err(Error::TooFew { what: "views", .. })
        ));
    }

    #[test]
    fn uniform_disc_interior_accuracy() {
        let disc = Phantom::uniform_disc(0.0, 0.0, 6.0, 0.096).unwrap();
        let par = parallel_sinogram(
            &disc,
            &uniform_thetas(180, 180.0),
            &uniform_s_bins(128, 8.0),
        );
        let grid = GridSpec::new(128, 12.8).unwrap();
        let img = fbp(&par, &FilterSpec::by_code("h50").unwrap(), grid).unwrap();
        let (mut sum, mut n) = (0.0, 0);
        for r in 0..128 {
            for c in 0..128 {
                if grid.x_of(c).hypot(grid.y_of(r)) < 4.0 {
                    sum += img.image.get(r, c);
                    n += 1;
                }
            }
        }
        let mean = sum / n as f64;
        assert!((mean / 0.096 - 1.0).abs() < 0.09, "{mean}");
        assert!(img.nmax() > 0.0);
    }

    #[test]
    fn reconstruct_all_composes() {
        let g = paper_geometry();
        let fan = ideal_sinogram(&paper_phantom(), &g);
        let grid = GridSpec::new(32, 12.0).unwrap();
        let params = RebinParams::default();
        let h50 = FilterSpec::by_code("h50").unwrap();
        let (_, all) = reconstruct_all(&fan, std::slice::from_ref(&h50), grid, &params).unwrap();
        let par = rebin_fan_to_parallel(&fan, &params.thetas(), &params.s_bins()).unwrap();
        let direct = fbp(&par, &h50, grid).unwrap();
        assert_eq!(all[0], direct);
        let (_, five) = reconstruct_all(&fan, &hamming_filters(), grid, &params).unwrap();
        assert_eq!(five.len(), 5);
        assert!(five.iter().all(|r| r.image.values.len() == 32 * 32));
        assert!(reconstruct_all(&fan, &[], grid, &params).is_err());
    }
}
