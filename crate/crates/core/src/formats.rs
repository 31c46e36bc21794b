//! Text file formats.
//!
//! Sinograms (`DSINO 1`) and images (`DIMG 1`) share one layout: a magic
//! line, `key=value` metadata lines, a blank line, then one row per line of
//! space-separated values printed with 17 significant digits so every `f64`
//! round-trips exactly. Phantom specs are `[background]` / `[insert]`
//! sections of `cx`, `cy`, `r`, `mu`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::phantom::{DiscSpec, GridSpec, Image, Phantom};
use crate::projector::FanGeometry;
use crate::recon::{FilterSpec, ReconImage};
use crate::sinogram::{ParallelSinogram, Sinogram, SinogramKind};

pub const SINOGRAM_MAGIC: &str = "DSINO 1";
pub const IMAGE_MAGIC: &str = "DIMG 1";

/// Full-precision float text.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_list(values: &[f64]) -> String {
    values
        .iter()
        .map(|&v| fmt_f64(v))
        .collect::<Vec<_>>()
        .join(",")
}

fn write_rows(out: &mut String, values: &[f64], width: usize) {
    for row in values.chunks(width) {
        let line = row
            .iter()
            .map(|&v| fmt_f64(v))
            .collect::<Vec<_>>()
            .join(" ");
        out.push_str(&line);
        out.push('\n');
    }
}

/// Parsed header plus body rows.
struct Document<'a> {
    name: &'a str,
    meta: BTreeMap<String, String>,
    rows: Vec<Vec<f64>>,
}

impl<'a> Document<'a> {
    fn parse(name: &'a str, text: &str, magic: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(l) if l.trim_end() == magic => {}
            _ => {
                return Err(Error::parse(
                    name,
                    "magic",
                    format!("expected `{magic}` on line 1"),
                ))
            }
        }
        let mut meta = BTreeMap::new();
        for line in lines.by_ref() {
            let line = line.trim();
            if line.is_empty() {
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(name, line, "expected key=value"))?;
            meta.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|_| {
                        Error::parse(name, format!("row {i}"), format!("bad number `{tok}`"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(Self { name, meta, rows })
    }

    fn get(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::parse(self.name, key, "missing required key"))
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .parse()
            .map_err(|_| Error::parse(self.name, key, "not a valid number"))
    }

    fn list(&self, key: &str) -> Result<Vec<f64>> {
        let raw = self.get(key)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|_| Error::parse(self.name, key, format!("bad number `{t}`")))
            })
            .collect()
    }

    fn values(&self, n_rows: usize, n_cols: usize) -> Result<Vec<f64>> {
        if self.rows.len() != n_rows {
            return Err(Error::parse(
                self.name,
                "rows",
                format!("expected {n_rows} rows, found {}", self.rows.len()),
            ));
        }
        if let Some((i, r)) = self
            .rows
            .iter()
            .enumerate()
            .find(|(_, r)| r.len() != n_cols)
        {
            return Err(Error::parse(
                self.name,
                format!("row {i}"),
                format!("expected {n_cols} values, found {}", r.len()),
            ));
        }
        Ok(self.rows.concat())
    }
}

/// Either flavour of sinogram file.
#[derive(Debug, Clone, PartialEq)]
pub enum SinogramFile {
    Fan(Sinogram),
    Parallel(ParallelSinogram),
}

pub fn write_fan_sinogram(sino: &Sinogram) -> String {
    let g = &sino.geometry;
    let mut out = String::new();
    out.push_str(SINOGRAM_MAGIC);
    out.push('\n');
    let _ = writeln!(out, "kind={}", sino.kind.as_str());
    let _ = writeln!(out, "views={}", g.n_views());
    let _ = writeln!(out, "detectors={}", g.n_detectors);
    let _ = writeln!(out, "source_to_center={}", fmt_f64(g.source_to_center));
    let _ = writeln!(out, "source_to_detector={}", fmt_f64(g.source_to_detector));
    let _ = writeln!(out, "fan_angle={}", fmt_f64(g.fan_angle));
    let _ = writeln!(out, "view_angles={}", fmt_list(&g.view_angles));
    if let Some(seed) = sino.seed {
        let _ = writeln!(out, "seed={seed}");
    }
    if let Some(ob) = &sino.open_beam {
        let _ = writeln!(out, "open_beam={}", fmt_list(ob));
    }
    out.push('\n');
    write_rows(&mut out, &sino.values, g.n_detectors);
    out
}

pub fn write_parallel_sinogram(sino: &ParallelSinogram) -> String {
    let mut out = String::new();
    out.push_str(SINOGRAM_MAGIC);
    out.push('\n');
    out.push_str("kind=parallel\n");
    let _ = writeln!(out, "thetas={}", fmt_list(&sino.thetas));
    let _ = writeln!(out, "s_bins={}", fmt_list(&sino.s_bins));
    let mask: String = sino
        .mask
        .iter()
        .map(|&m| if m { '1' } else { '0' })
        .collect();
    let _ = writeln!(out, "mask={mask}");
    out.push('\n');
    write_rows(&mut out, &sino.values, sino.s_bins.len());
    out
}

pub fn parse_sinogram(name: &str, text: &str) -> Result<SinogramFile> {
    let doc = Document::parse(name, text, SINOGRAM_MAGIC)?;
    let kind = doc.get("kind")?;
    match kind {
        "counts" | "attenuation" => {
            let n_views: usize = doc.num("views")?;
            let n_det: usize = doc.num("detectors")?;
            let view_angles = doc.list("view_angles")?;
            if view_angles.len() != n_views {
                return Err(Error::parse(
                    name,
                    "view_angles",
                    "length does not match views",
                ));
            }
            let geometry = FanGeometry::new(
                doc.num("source_to_center")?,
                doc.num("source_to_detector")?,
                doc.num("fan_angle")?,
                n_det,
                view_angles,
            )?;
            let seed = match doc.meta.get("seed") {
                Some(s) => Some(
                    s.parse()
                        .map_err(|_| Error::parse(name, "seed", "not a u64"))?,
                ),
                None => None,
            };
            let open_beam = match doc.meta.get("open_beam") {
                Some(_) => Some(doc.list("open_beam")?),
                None => None,
            };
            let sino = Sinogram {
                kind: if kind == "counts" {
                    SinogramKind::Counts
                } else {
                    SinogramKind::Attenuation
                },
                geometry,
                values: doc.values(n_views, n_det)?,
                seed,
                open_beam,
            };
            sino.check_shape()?;
            Ok(SinogramFile::Fan(sino))
        }
        "parallel" => {
            let thetas = doc.list("thetas")?;
            let s_bins = doc.list("s_bins")?;
            let mask_text = doc.get("mask")?;
            let mask = mask_text
                .chars()
                .map(|c| match c {
                    '1' => Ok(true),
                    '0' => Ok(false),
                    _ => Err(Error::parse(name, "mask", "expected 0/1 characters")),
                })
                .collect::<Result<Vec<_>>>()?;
            let values = doc.values(thetas.len(), s_bins.len())?;
            if mask.len() != values.len() {
                return Err(Error::parse(name, "mask", "length does not match the data"));
            }
            Ok(SinogramFile::Parallel(ParallelSinogram {
                thetas,
                s_bins,
                values,
                mask,
            }))
        }
        other => Err(Error::parse(
            name,
            "kind",
            format!("unknown kind `{other}`"),
        )),
    }
}

pub fn write_image(image: &Image, filter: Option<&FilterSpec>) -> String {
    let mut out = String::new();
    out.push_str(IMAGE_MAGIC);
    out.push('\n');
    let _ = writeln!(out, "n_pixels={}", image.grid.n_pixels);
    let _ = writeln!(out, "fov={}", fmt_f64(image.grid.fov));
    if let Some(f) = filter {
        let _ = writeln!(out, "filter={}", f.code);
        let _ = writeln!(out, "alpha={}", fmt_f64(f.alpha));
        let _ = writeln!(out, "w2_0={}", fmt_f64(f.w2_0));
    }
    out.push('\n');
    write_rows(&mut out, &image.values, image.grid.n_pixels);
    out
}

pub fn write_recon(recon: &ReconImage) -> String {
    write_image(&recon.image, Some(&recon.filter))
}

/// Parses an image and its filter metadata, when present.
pub fn parse_image(name: &str, text: &str) -> Result<(Image, Option<FilterSpec>)> {
    let doc = Document::parse(name, text, IMAGE_MAGIC)?;
    let n: usize = doc.num("n_pixels")?;
    let grid = GridSpec::new(n, doc.num("fov")?)?;
    let image = Image::from_values(grid, doc.values(n, n)?)?;
    let filter = match doc.meta.get("filter") {
        Some(code) => Some(FilterSpec {
            code: code.clone(),
            alpha: doc.num("alpha")?,
            w2_0: doc.num("w2_0")?,
        }),
        None => None,
    };
    Ok((image, filter))
}

pub fn parse_recon(name: &str, text: &str) -> Result<ReconImage> {
    let (image, filter) = parse_image(name, text)?;
    let filter = filter.ok_or_else(|| Error::parse(name, "filter", "missing required key"))?;
    Ok(ReconImage { image, filter })
}

/// Binary 8-bit graymap, min-max normalized. For viewing only.
pub fn write_pgm(image: &Image) -> Vec<u8> {
    let n = image.grid.n_pixels;
    let (lo, hi) = (image.min(), image.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
    out.extend(
        image
            .values
            .iter()
            .map(|v| (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    out
}

pub fn write_phantom(phantom: &Phantom) -> String {
    let mut out = String::new();
    let mut section = |title: &str, d: &DiscSpec| {
        let _ = writeln!(out, "[{title}]");
        let _ = writeln!(out, "cx={}", fmt_f64(d.center_x));
        let _ = writeln!(out, "cy={}", fmt_f64(d.center_y));
        let _ = writeln!(out, "r={}", fmt_f64(d.radius));
        let _ = writeln!(out, "mu={}", fmt_f64(d.mu));
        out.push('\n');
    };
    section("background", &phantom.background);
    for d in &phantom.inserts {
        section("insert", d);
    }
    out
}

pub fn parse_phantom(name: &str, text: &str) -> Result<Phantom> {
    let mut sections: Vec<(String, BTreeMap<String, String>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(title) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            sections.push((title.trim().to_string(), BTreeMap::new()));
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(name, format!("line {}", i + 1), "expected key=value"))?;
        let (_, entries) = sections
            .last_mut()
            .ok_or_else(|| Error::parse(name, k.trim(), "key outside of a section"))?;
        let key = k.trim();
        if !matches!(key, "cx" | "cy" | "r" | "mu") {
            return Err(Error::parse(
                name,
                key,
                "unknown key (expected cx, cy, r, mu)",
            ));
        }
        entries.insert(key.to_string(), v.trim().to_string());
    }
    let disc = |title: &str, e: &BTreeMap<String, String>| -> Result<DiscSpec> {
        let get = |k: &str| -> Result<f64> {
            e.get(k)
                .ok_or_else(|| Error::parse(name, format!("{title}.{k}"), "missing required key"))?
                .parse()
                .map_err(|_| Error::parse(name, format!("{title}.{k}"), "not a number"))
        };
        let d = DiscSpec {
            center_x: get("cx")?,
            center_y: get("cy")?,
            radius: get("r")?,
            mu: get("mu")?,
        };
        d.validate().map_err(|err| match err {
            Error::Invalid { key, reason } => Error::parse(name, format!("{title}.{key}"), reason),
            other => other,
        })?;
        Ok(d)
    };
    let mut background = None;
    let mut inserts = Vec::new();
    for (title, entries) in &sections {
        match title.as_str() {
            "background" => {
                if background.is_some() {
                    return Err(Error::parse(name, "background", "duplicate section"));
                }
                background = Some(disc("background", entries)?);
            }
            "insert" => inserts.push(disc("insert", entries)?),
            other => return Err(Error::parse(name, other, "unknown section")),
        }
    }
    let background =
        background.ok_or_else(|| Error::parse(name, "background", "missing section"))?;
    Phantom::new(background, inserts)
}

/// Writes rows of string cells as CSV.
pub fn write_csv(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Reads a CSV into its header and rows.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()
        .map_err(csv_err)?;
    Ok((header, rows))
}

fn csv_err(e: csv::Error) -> Error {
    Error::parse("csv", "record", e.to_string())
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::paper_phantom;
    use crate::projector::{ideal_sinogram, paper_geometry};
    use crate::recon::hamming_filters;
    use proptest::prelude::*;

    #[test]
    fn fan_sinogram_text_layout() {
        let s = ideal_sinogram(&paper_phantom(), &paper_geometry());
        let text = write_fan_sinogram(&s);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("DSINO 1"));
        assert_eq!(lines.next(), Some("kind=attenuation"));
        assert!(text.contains("\n\n"));
        let body: Vec<&str> = text.split("\n\n").nth(1).unwrap().lines().collect();
        assert_eq!(body.len(), 36);
        assert_eq!(body[0].split(' ').count(), 5);
        assert_eq!(parse_sinogram("t", &text).unwrap(), SinogramFile::Fan(s));
    }

    #[test]
    fn missing_key_is_named() {
        let s = ideal_sinogram(&paper_phantom(), &paper_geometry());
        let text = write_fan_sinogram(&s).replace("detectors=5\n", "");
        let err = parse_sinogram("t", &text).unwrap_err().to_string();
        assert!(err.contains("detectors"), "{err}");
        let err = parse_sinogram("t", "DSINO 2\n").unwrap_err().to_string();
        assert!(err.contains("magic"));
    }

    #[test]
    fn phantom_spec_round_trip_and_errors() {
        let p = paper_phantom();
        assert_eq!(parse_phantom("p", &write_phantom(&p)).unwrap(), p);
        let bad = "[background]\ncx=0\ncy=0\nr=-1\nmu=0.1\n";
        let err = parse_phantom("p", bad).unwrap_err().to_string();
        assert!(err.contains("radius"), "{err}");
        let missing = "[background]\ncx=0\ncy=0\nmu=0.1\n";
        assert!(parse_phantom("p", missing)
            .unwrap_err()
            .to_string()
            .contains("background.r"));
        let typo = "[background]\ncx=0\ncy=0\nr=1\nmu=0.1\nradius=2\n";
        assert!(parse_phantom("p", typo).is_err());
    }

    #[test]
    fn pgm_header() {
        let img =
            Image::from_values(GridSpec::new(2, 1.0).unwrap(), vec![0.0, 1.0, 0.5, 0.25]).unwrap();
        let pgm = write_pgm(&img);
        assert!(pgm.starts_with(b"P5\n2 2\n255\n"));
        assert_eq!(&pgm[pgm.len() - 4..], &[0, 255, 128, 64]);
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            vec!["h99".to_string(), fmt_f64(0.001)],
            vec!["h50".into(), fmt_f64(0.5)],
        ];
        let text = write_csv(&["filter_code", "w2_0"], &rows).unwrap();
        let (header, back) = parse_csv(&text).unwrap();
        assert_eq!(header, vec!["filter_code", "w2_0"]);
        assert_eq!(back, rows);
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![
            -1e6f64..1e6,
            any::<f64>().prop_filter("finite", |v| v.is_finite()),
        ]
    }

    proptest! {
        #[test]
        fn image_round_trip(n in 2usize..6, fov in 0.1f64..50.0, seed in any::<u64>(), pick in 0usize..5) {
            let vals: Vec<f64> = (0..n * n)
                .map(|i| f64::from_bits(seed.rotate_left(i as u32) ^ 0x3FF0_0000_0000_0000) * (i as f64 - 3.0))
                .map(|v| if v.is_finite() { v } else { 0.0 })
                .collect();
            let img = Image::from_values(GridSpec::new(n, fov).unwrap(), vals).unwrap();
            let filter = hamming_filters()[pick].clone();
            let text = write_image(&img, Some(&filter));
            let (back, f) = parse_image("p", &text).unwrap();
            prop_assert_eq!(back, img);
            prop_assert_eq!(f, Some(filter));
        }

        #[test]
        fn parallel_round_trip(values in prop::collection::vec(finite(), 12), mask in prop::collection::vec(any::<bool>(), 12)) {
            let s = ParallelSinogram {
                thetas: vec![0.0, 60.0, 120.0],
                s_bins: vec![-1.5, -0.5, 0.5, 1.5],
                values,
                mask,
            };
            let back = parse_sinogram("p", &write_parallel_sinogram(&s)).unwrap();
            prop_assert_eq!(back, SinogramFile::Parallel(s));
        }
    }
}
