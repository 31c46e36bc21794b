//! Built-in self-checks run by `gammact verify`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::analysis::{jarque_bera, kt1_signature, NmaxMode, CHI2_2DF_99};
use crate::detector::{counts_to_projection, expected_counts, scan, DetectorModel};
use crate::error::Result;
use crate::formats::{self, SinogramFile};
use crate::phantom::{paper_phantom, GridSpec, Phantom};
use crate::projector::{
    ideal_sinogram, line_integral, paper_geometry, parallel_sinogram, FanGeometry, Ray,
};
use crate::recon::{
    fbp, hamming_filters, rebin_fan_to_parallel, reconstruct_all, FilterSpec, RebinParams,
    HAMMING_TABLE,
};
use crate::sinogram::{uniform_s_bins, uniform_thetas};

/// Reference filter table, kept separate from the library constant.
const EXPECTED_FILTERS: [(&str, f64, f64); 5] = [
    ("h99", 0.99, 0.001),
    ("h91", 0.91, 0.083),
    ("h75", 0.75, 0.250),
    ("h54", 0.54, 0.460),
    ("h50", 0.50, 0.500),
];

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct VerifyOptions {
    /// Negative control: perturbs one filter-table entry before checking.
    pub break_filter_table: bool,
}

type Check = fn(&VerifyOptions) -> Result<(bool, String)>;

const CHECKS: [(&str, Check); 9] = [
    ("geometry_constants", check_geometry),
    ("filter_table", check_filter_table),
    ("projector_quadrature", check_projector),
    ("fbp_uniform_disc", check_fbp),
    ("rebin_equivalence", check_rebin),
    ("beer_lambert_inverse", check_beer_lambert),
    ("jarque_bera_sanity", check_jarque_bera),
    ("round_trip", check_round_trip),
    ("default_pipeline", check_pipeline),
];

pub fn run(options: &VerifyOptions) -> Vec<CheckResult> {
    CHECKS
        .iter()
        .map(|&(name, check)| {
            let start = Instant::now();
            let (passed, detail) = match check(options) {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            CheckResult {
                name,
                passed,
                detail,
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

/// Line integral by midpoint sampling of the attenuation map.
pub fn quadrature_line_integral(phantom: &Phantom, ray: &Ray, step: f64) -> f64 {
    // march across the bounding circle of the background disc
    let bg = &phantom.background;
    let (ox, oy) = (ray.origin_x - bg.center_x, ray.origin_y - bg.center_y);
    let along = -(ox * ray.direction_x + oy * ray.direction_y);
    let reach = bg.radius + step;
    let n = (2.0 * reach / step).ceil() as usize;
    let t0 = along - reach;
    (0..n)
        .map(|i| {
            let t = t0 + (i as f64 + 0.5) * step;
            phantom.mu_at(
                ray.origin_x + t * ray.direction_x,
                ray.origin_y + t * ray.direction_y,
            )
        })
        .sum::<f64>()
        * step
}

fn check_geometry(_: &VerifyOptions) -> Result<(bool, String)> {
    let g = paper_geometry();
    let views: Vec<f64> = (0..36).map(|i| 10.0 * i as f64).collect();
    let ok = g.fan_angle == 13.25
        && g.source_to_detector == 52.0
        && g.source_to_center == 26.0
        && g.n_detectors == 5
        && g.view_angles == views;
    Ok((
        ok,
        format!(
            "fan {} deg, SDD {} cm, {} x {}",
            g.fan_angle,
            g.source_to_detector,
            g.n_views(),
            g.n_detectors
        ),
    ))
}

fn check_filter_table(opts: &VerifyOptions) -> Result<(bool, String)> {
    let mut table = HAMMING_TABLE;
    if opts.break_filter_table {
        table[2].2 = 0.205;
    }
    let bad: Vec<&str> = table
        .iter()
        .zip(EXPECTED_FILTERS.iter())
        .filter(|(got, want)| got != want)
        .map(|(got, _)| got.0)
        .collect();
    let lookups_ok = EXPECTED_FILTERS
        .iter()
        .all(|&(c, a, w)| FilterSpec::by_code(c).is_ok_and(|f| f.alpha == a && f.w2_0 == w));
    if bad.is_empty() && lookups_ok {
        Ok((true, "5 entries match".into()))
    } else {
        Ok((false, format!("mismatched entries: {}", bad.join(","))))
    }
}

fn check_projector(_: &VerifyOptions) -> Result<(bool, String)> {
    let p = paper_phantom();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..40 {
        let ray = Ray::parallel(rng.random_range(0.0..360.0), rng.random_range(-5.9..5.9));
        worst =
            worst.max((line_integral(&p, &ray) - quadrature_line_integral(&p, &ray, 1e-4)).abs());
    }
    Ok((
        worst <= 1e-4,
        format!("max |closed - quadrature| = {worst:.2e} over 40 rays"),
    ))
}

fn check_fbp(_: &VerifyOptions) -> Result<(bool, String)> {
    let disc = Phantom::uniform_disc(0.0, 0.0, 6.0, 0.096)?;
    let sino = parallel_sinogram(
        &disc,
        &uniform_thetas(180, 180.0),
        &uniform_s_bins(128, 8.0),
    );
    let img = fbp(
        &sino,
        &FilterSpec::by_code("h50")?,
        GridSpec::new(128, 12.8)?,
    )?
    .image;
    let (mut sum, mut n) = (0.0, 0);
    for row in 0..128 {
        for col in 0..128 {
            let (x, y) = (img.grid.x_of(col), img.grid.y_of(row));
            if x.hypot(y) < 4.0 {
                sum += img.get(row, col);
                n += 1;
            }
        }
    }
    let rel = (sum / n as f64 - 0.096) / 0.096;
    Ok((
        rel.abs() <= 0.10,
        format!("interior mean off by {:+.2}%", 100.0 * rel),
    ))
}

/// Default 13.25 degree fan at 360 views x 64 detectors.
fn dense_fan() -> Result<FanGeometry> {
    FanGeometry::with_uniform_views(26.0, 52.0, 13.25, 64, 360)
}

fn check_rebin(_: &VerifyOptions) -> Result<(bool, String)> {
    let (r, mu) = (6.0, 0.096);
    let disc = Phantom::uniform_disc(0.0, 0.0, r, mu)?;
    let fan = ideal_sinogram(&disc, &dense_fan()?);
    let par = rebin_fan_to_parallel(&fan, &uniform_thetas(90, 180.0), &uniform_s_bins(64, 3.0))?;
    let peak = 2.0 * mu * r;
    let mut worst: f64 = 0.0;
    for t in 0..par.n_thetas() {
        for (j, &s) in par.s_bins.iter().enumerate() {
            if par.mask[t * par.n_bins() + j] {
                let exact = 2.0 * mu * (r * r - s * s).max(0.0).sqrt();
                worst = worst.max((par.get(t, j) - exact).abs());
            }
        }
    }
    Ok((
        worst <= 0.02 * peak,
        format!("max error {:.3}% of peak", 100.0 * worst / peak),
    ))
}

fn check_beer_lambert(_: &VerifyOptions) -> Result<(bool, String)> {
    let ideal = ideal_sinogram(&paper_phantom(), &paper_geometry());
    let mut model = DetectorModel::default();
    model.noise.nu0 = 0.0;
    let back = counts_to_projection(&expected_counts(&ideal, &model))?;
    let worst = ideal
        .values
        .iter()
        .zip(&back.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok((worst < 1e-9, format!("max |p - ln(I0/I)| = {worst:.1e}")))
}

fn check_jarque_bera(_: &VerifyOptions) -> Result<(bool, String)> {
    let (mut normal_ok, mut exp_ok) = (0, 0);
    let seeds = 20;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let expo: Vec<f64> = (0..10_000).map(|_| rng.sample(Exp1)).collect();
        normal_ok += usize::from(jarque_bera(&normal)? < CHI2_2DF_99);
        exp_ok += usize::from(jarque_bera(&expo)? > CHI2_2DF_99);
    }
    Ok((
        normal_ok >= 18 && exp_ok == seeds as usize,
        format!("normal below 9.21: {normal_ok}/{seeds}; exponential above: {exp_ok}/{seeds}"),
    ))
}

fn check_round_trip(_: &VerifyOptions) -> Result<(bool, String)> {
    let p = paper_phantom();
    let g = paper_geometry();
    let model = DetectorModel::default();
    let a = scan(&p, &g, &model, 20, 5)?;
    let b = scan(&p, &g, &model, 20, 5)?;
    let text = formats::write_fan_sinogram(&a.counts);
    let same_bytes = text == formats::write_fan_sinogram(&b.counts);
    let sino_ok = formats::parse_sinogram("counts", &text)? == SinogramFile::Fan(a.counts.clone());
    let projection = counts_to_projection(&a.counts)?;
    let (par, images) = reconstruct_all(
        &projection,
        &hamming_filters()[..1],
        GridSpec::new(32, 12.0)?,
        &RebinParams::default(),
    )?;
    let par_ok = formats::parse_sinogram("parallel", &formats::write_parallel_sinogram(&par))?
        == SinogramFile::Parallel(par);
    let img_ok = formats::parse_recon("image", &formats::write_recon(&images[0]))? == images[0];
    let phantom_ok = formats::parse_phantom("phantom", &formats::write_phantom(&p))? == p;
    let ok = same_bytes && sino_ok && par_ok && img_ok && phantom_ok;
    Ok((
        ok,
        format!("bytes {same_bytes}, sinogram {sino_ok}, parallel {par_ok}, image {img_ok}, phantom {phantom_ok}"),
    ))
}

fn check_pipeline(_: &VerifyOptions) -> Result<(bool, String)> {
    let p = paper_phantom();
    let g = paper_geometry();
    let out = scan(&p, &g, &DetectorModel::default(), 1, 2024)?;
    let projection = counts_to_projection(&out.counts)?;
    let (_, images) = reconstruct_all(
        &projection,
        &hamming_filters(),
        GridSpec::new(64, 12.0)?,
        &RebinParams::default(),
    )?;
    let sig = kt1_signature(&images, NmaxMode::Signed)?;
    Ok((
        sig.points.len() == 5 && sig.points.iter().all(|pt| pt.nmax > 0.0),
        format!("5-point signature, rmse_kt1 {:.4}", sig.rmse_fit),
    ))
}
