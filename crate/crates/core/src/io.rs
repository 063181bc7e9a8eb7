//! File formats: 16-bit PGM and CSV images, sinogram CSV, parameter files,
//! convergence and weight-map CSVs.
//!
//! Every writer has a matching reader so outputs can be fed back in.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::image::{Image2D, Sinogram};
use crate::optimizer::{RunRecord, WeightMap};
use crate::param_space::ParameterSpace;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, IoError> {
    fs::read(path).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), IoError> {
    fs::write(path, contents).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn format_err(path: &Path, msg: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

/// Shortest of `{:.6}` with trailing zeros removed; integers print bare.
pub fn fmt_value(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// Nine significant digits in scientific notation.
fn fmt_sig9(v: f64) -> String {
    format!("{v:.8e}")
}

/// Binary 16-bit greyscale PGM, scaled so the image maximum maps to 65535.
/// Negative values are written as 0.
pub fn pgm_bytes(image: &Image2D) -> Vec<u8> {
    let max = image.max();
    let scale = if max > 0.0 { 65535.0 / max } else { 0.0 };
    let mut out = format!("P5\n{} {}\n65535\n", image.cols(), image.rows()).into_bytes();
    out.reserve(image.len() * 2);
    for &v in image.data() {
        let q = (v.max(0.0) * scale).round().min(65535.0) as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

pub fn write_pgm(path: &Path, image: &Image2D) -> Result<(), IoError> {
    write_file(path, pgm_bytes(image))
}

/// Reads an 8- or 16-bit binary PGM; pixel values are divided by the
/// header's maximum, so they land in `[0, 1]`.
pub fn read_pgm(path: &Path) -> Result<Image2D, IoError> {
    let bytes = read_bytes(path)?;
    parse_pgm(&bytes).map_err(|m| format_err(path, m))
}

fn parse_pgm(bytes: &[u8]) -> Result<Image2D, String> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PGM header".into());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(format!("expected magic P5, found {}", fields[0]));
    }
    let num = |s: &str, what: &str| s.parse::<usize>().map_err(|_| format!("bad {what} `{s}`"));
    let cols = num(&fields[1], "width")?;
    let rows = num(&fields[2], "height")?;
    let maxval = num(&fields[3], "maxval")?;
    if cols == 0 || rows == 0 || maxval == 0 || maxval > 65535 {
        return Err("PGM dimensions and maxval must be positive (maxval <= 65535)".into());
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let width = if maxval > 255 { 2 } else { 1 };
    let raster = bytes.get(pos..).unwrap_or_default();
    if raster.len() < rows * cols * width {
        return Err(format!(
            "raster holds {} bytes, expected {}",
            raster.len(),
            rows * cols * width
        ));
    }
    let data = (0..rows * cols)
        .map(|i| {
            let v = if width == 2 {
                u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as f64
            } else {
                raster[i] as f64
            };
            v / maxval as f64
        })
        .collect();
    Ok(Image2D::from_vec(rows, cols, data))
}

/// Row-major CSV, one image row per line, nine significant digits.
pub fn image_csv(image: &Image2D) -> String {
    let mut out = String::with_capacity(image.len() * 16);
    for r in 0..image.rows() {
        let row: Vec<String> = (0..image.cols()).map(|c| fmt_sig9(image.get(r, c))).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_image_csv(path: &Path, image: &Image2D) -> Result<(), IoError> {
    write_file(path, image_csv(image))
}

fn parse_rows(text: &str) -> Result<Vec<Vec<f64>>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            l.split(',')
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| format!("line {}: bad number `{}`", i + 1, f.trim()))
                })
                .collect()
        })
        .collect()
}

pub fn read_image_csv(path: &Path) -> Result<Image2D, IoError> {
    let text = read_text(path)?;
    let rows = parse_rows(&text).map_err(|m| format_err(path, m))?;
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 {
        return Err(format_err(path, "empty image"));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != cols) {
        return Err(format_err(path, format!("row {} has {} values, expected {cols}", i + 1, rows[i].len())));
    }
    let n = rows.len();
    Ok(Image2D::from_vec(n, cols, rows.into_iter().flatten().collect()))
}

/// Loads an image by extension: `.pgm` or `.csv`.
pub fn read_image(path: &Path) -> Result<Image2D, IoError> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("pgm") => read_pgm(path),
        Some("csv") => read_image_csv(path),
        _ => Err(format_err(path, "unknown image format (expected .pgm or .csv)")),
    }
}

/// Sinogram CSV: `n_angles,N` and `n_detectors,M` header lines, then one
/// view per line.
pub fn sinogram_csv(sino: &Sinogram) -> String {
    let mut out = format!("n_angles,{}\nn_detectors,{}\n", sino.n_angles(), sino.n_detectors());
    for a in 0..sino.n_angles() {
        let row: Vec<String> = sino.view(a).iter().map(|&v| fmt_sig9(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_sinogram_csv(path: &Path, sino: &Sinogram) -> Result<(), IoError> {
    write_file(path, sinogram_csv(sino))
}

pub fn read_sinogram_csv(path: &Path) -> Result<Sinogram, IoError> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    let mut header = |key: &str| -> Result<usize, IoError> {
        let line = lines.next().ok_or_else(|| format_err(path, format!("missing `{key}` header")))?;
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(','))
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| format_err(path, format!("expected `{key},<count>`, found `{line}`")))
    };
    let n_angles = header("n_angles")?;
    let n_detectors = header("n_detectors")?;
    let rest: String = lines.collect::<Vec<_>>().join("\n");
    let rows = parse_rows(&rest).map_err(|m| format_err(path, m))?;
    if rows.len() != n_angles || rows.iter().any(|r| r.len() != n_detectors) {
        return Err(format_err(path, format!("expected {n_angles} rows of {n_detectors} values")));
    }
    Ok(Sinogram::from_vec(n_angles, n_detectors, rows.into_iter().flatten().collect()))
}

/// `name = value` lines, in the given order.
pub fn params_text(pairs: &[(String, f64)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k} = {}\n", fmt_value(*v))).collect()
}

/// Parses `name = value` (or `name=value`) lines; `#` starts a comment.
/// Returns `(line, name, value)` triples in file order.
pub fn parse_params(text: &str) -> Result<Vec<(usize, String, f64)>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `name = value`", i + 1))?;
        let value = v
            .trim()
            .parse::<f64>()
            .map_err(|_| format!("line {}: `{}` is not a number", i + 1, v.trim()))?;
        out.push((i + 1, k.trim().to_string(), value));
    }
    Ok(out)
}

pub fn read_params(path: &Path) -> Result<Vec<(usize, String, f64)>, IoError> {
    let text = read_text(path)?;
    parse_params(&text).map_err(|m| format_err(path, m))
}

pub const CONVERGENCE_COLUMNS: &str = "iteration,best_fitness,mean_fitness,superior_size,explorations,memory_updates";

/// Convergence history: `#` header lines with the run settings, one row per
/// iteration (row 0 is the initial population), and a `final` row holding
/// the best fitness, final mean, last superior-set size and run totals of
/// explorations and memory updates.
pub fn convergence_csv(record: &RunRecord) -> String {
    let c = &record.config;
    let mut out = String::new();
    let _ = writeln!(out, "# algorithm = {}", record.algorithm);
    let _ = writeln!(out, "# init = {}", record.init);
    let _ = writeln!(out, "# population = {}", c.population);
    let _ = writeln!(out, "# iterations = {}", c.iterations);
    let _ = writeln!(out, "# flight_length = {}", fmt_value(c.flight_length));
    let _ = writeln!(out, "# ap0 = {}", fmt_value(c.ap0));
    let _ = writeln!(out, "# ap_inc = {:.9}", c.ap_inc());
    let _ = writeln!(out, "# kappa0 = {}", fmt_value(c.kappa0));
    let _ = writeln!(out, "# kappa_red = {:.9}", c.kappa_red());
    let _ = writeln!(out, "# omega_inc = {}", fmt_value(c.omega_inc));
    let _ = writeln!(out, "# k0 = {}", fmt_value(c.k0));
    let _ = writeln!(out, "# weight_floor = {}", fmt_value(c.weight_floor));
    let _ = writeln!(out, "# neighborhood = {}", fmt_value(c.neighborhood));
    let _ = writeln!(out, "# csa_ap = {}", fmt_value(c.csa_ap));
    let _ = writeln!(out, "# seed = {}", c.seed);
    let _ = writeln!(out, "# total_evaluations = {}", record.total_evaluations());
    out.push_str(CONVERGENCE_COLUMNS);
    out.push('\n');
    for h in &record.history {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{},{},{}",
            h.iteration, h.best_fitness, h.mean_fitness, h.superior_size, h.explorations, h.memory_updates
        );
    }
    let last = record.history.last().expect("history has the initial row");
    let explorations: usize = record.history.iter().map(|h| h.explorations).sum();
    let updates: usize = record.history.iter().map(|h| h.memory_updates).sum();
    let _ = writeln!(
        out,
        "final,{:.6},{:.6},{},{},{}",
        record.best_fitness(),
        last.mean_fitness,
        last.superior_size,
        explorations,
        updates
    );
    out
}

/// One parsed convergence row; `iteration` is `None` for the `final` row.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub iteration: Option<usize>,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub superior_size: usize,
    pub explorations: usize,
    pub memory_updates: usize,
}

pub fn parse_convergence(text: &str) -> Result<Vec<ConvergenceRow>, String> {
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen_header {
            if line != CONVERGENCE_COLUMNS {
                return Err(format!("line {}: expected column header", i + 1));
            }
            seen_header = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(format!("line {}: expected 6 fields, found {}", i + 1, f.len()));
        }
        let bad = |what: &str| format!("line {}: bad {what}", i + 1);
        rows.push(ConvergenceRow {
            iteration: if f[0] == "final" {
                None
            } else {
                Some(f[0].parse().map_err(|_| bad("iteration"))?)
            },
            best_fitness: f[1].parse().map_err(|_| bad("best_fitness"))?,
            mean_fitness: f[2].parse().map_err(|_| bad("mean_fitness"))?,
            superior_size: f[3].parse().map_err(|_| bad("superior_size"))?,
            explorations: f[4].parse().map_err(|_| bad("explorations"))?,
            memory_updates: f[5].parse().map_err(|_| bad("memory_updates"))?,
        });
    }
    if !seen_header {
        return Err("missing column header".into());
    }
    Ok(rows)
}

pub fn read_convergence(path: &Path) -> Result<Vec<ConvergenceRow>, IoError> {
    parse_convergence(&read_text(path)?).map_err(|m| format_err(path, m))
}

/// Every weight of every dimension: `parameter,index,value,weight`.
pub fn weight_map_csv(space: &ParameterSpace, map: &WeightMap) -> String {
    let mut out = String::from("parameter,index,value,weight\n");
    for (d, spec) in space.specs().iter().enumerate() {
        for (k, w) in map.dimension(d).iter().enumerate() {
            let _ = writeln!(out, "{},{k},{},{w:.6}", spec.name(), fmt_value(spec.value_at(k)));
        }
    }
    out
}

/// One dimension's weights: `value,weight`.
pub fn weight_dimension_csv(values: &[f64], weights: &[f64]) -> String {
    let mut out = String::from("value,weight\n");
    for (v, w) in values.iter().zip(weights) {
        let _ = writeln!(out, "{},{w:.6}", fmt_value(*v));
    }
    out
}

/// Rows of a combined weight-map CSV grouped by parameter, in file order:
/// `(name, values, weights)`.
pub type WeightTable = Vec<(String, Vec<f64>, Vec<f64>)>;

pub fn parse_weight_map(text: &str) -> Result<WeightTable, String> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "parameter,index,value,weight" => {}
        _ => return Err("missing `parameter,index,value,weight` header".into()),
    }
    let mut table: WeightTable = Vec::new();
    for (i, line) in lines {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 4 {
            return Err(format!("line {}: expected 4 fields", i + 1));
        }
        let value: f64 = f[2].parse().map_err(|_| format!("line {}: bad value", i + 1))?;
        let weight: f64 = f[3].parse().map_err(|_| format!("line {}: bad weight", i + 1))?;
        match table.last_mut() {
            Some((name, vs, ws)) if name == f[0] => {
                vs.push(value);
                ws.push(weight);
            }
            _ => table.push((f[0].to_string(), vec![value], vec![weight])),
        }
    }
    Ok(table)
}

pub fn read_weight_map(path: &Path) -> Result<WeightTable, IoError> {
    parse_weight_map(&read_text(path)?).map_err(|m| format_err(path, m))
}

/// Writes `text` to `path`.
pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    write_file(path, text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param_space::ParameterSpec;

    fn sample() -> Image2D {
        Image2D::from_fn(5, 7, |r, c| (r * 7 + c) as f64 * 0.37 + 0.001)
    }

    #[test]
    fn pgm_round_trip_is_max_normalized() {
        let img = sample();
        let back = parse_pgm(&pgm_bytes(&img)).unwrap();
        assert_eq!(back.shape(), (5, 7));
        let max = img.max();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a / max - b).abs() <= 0.5 / 65535.0 + 1e-12);
        }
        assert_eq!(back.max(), 1.0);
    }

    #[test]
    fn pgm_header_and_byte_order() {
        let img = Image2D::from_vec(1, 2, vec![0.0, 2.0]);
        let bytes = pgm_bytes(&img);
        assert!(bytes.starts_with(b"P5\n2 1\n65535\n"));
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 0, 0xff, 0xff]);
        assert!(parse_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(parse_pgm(b"P5\n2 2\n255\n\x01").is_err());
    }

    #[test]
    fn pgm_accepts_comments_and_8_bit() {
        let img = parse_pgm(b"P5\n# made by hand\n2 1\n255\n\x00\xff").unwrap();
        assert_eq!(img.data(), &[0.0, 1.0]);
    }

    #[test]
    fn csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let img = sample();
        let p = dir.path().join("img.csv");
        write_image_csv(&p, &img).unwrap();
        let back = read_image(&p).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 1e-8 * a.abs().max(1e-300));
        }
        let sino = Sinogram::from_vec(2, 3, vec![1.0, -2.5, 3.25, 0.0, 1e-7, 5.0]);
        let sp = dir.path().join("sino.csv");
        write_sinogram_csv(&sp, &sino).unwrap();
        assert_eq!(read_sinogram_csv(&sp).unwrap(), sino);
        assert!(sinogram_csv(&sino).starts_with("n_angles,2\nn_detectors,3\n"));
    }

    #[test]
    fn ragged_csv_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        fs::write(&p, "1,2\n3\n").unwrap();
        assert!(read_image_csv(&p).is_err());
    }

    #[test]
    fn params_round_trip() {
        let pairs = vec![("max_iter".to_string(), 49.0), ("alpha".to_string(), 0.0032)];
        let text = params_text(&pairs);
        assert_eq!(text, "max_iter = 49\nalpha = 0.0032\n");
        let parsed = parse_params(&format!("# comment\n{text}lambda=0.9 # trailing\n")).unwrap();
        assert_eq!(parsed[0], (2, "max_iter".to_string(), 49.0));
        assert_eq!(parsed[2], (4, "lambda".to_string(), 0.9));
        assert!(parse_params("alpha 0.1").is_err());
        assert!(parse_params("alpha = x").is_err());
    }

    #[test]
    fn value_formatting() {
        assert_eq!(fmt_value(0.1 + 0.2), "0.3");
        assert_eq!(fmt_value(50.0), "50");
        assert_eq!(fmt_value(-0.0000001), "0");
        assert_eq!(fmt_value(0.0001), "0.0001");
    }

    #[test]
    fn weight_map_round_trip() {
        let space = ParameterSpace::new(vec![
            ParameterSpec::new("a", 0.0, 0.3, 0.1).unwrap(),
            ParameterSpec::new("b", 5.0, 7.0, 1.0).unwrap(),
        ])
        .unwrap();
        let map = WeightMap::new(&space, 1.0, 1.0, 1.05, 0.1);
        let table = parse_weight_map(&weight_map_csv(&space, &map)).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table[0].0, "a");
        assert_eq!(table[0].1, vec![0.0, 0.1, 0.2, 0.3]);
        assert_eq!(table[1].2, vec![1.0; 3]);
        let dim = weight_dimension_csv(&table[1].1, &table[1].2);
        assert_eq!(dim, "value,weight\n5,1.000000\n6,1.000000\n7,1.000000\n");
    }

    #[test]
    fn convergence_round_trip() {
        use crate::fitness::{FitnessReport, ObjectiveVector};
        use crate::init::InitScheme;
        use crate::optimizer::{run, Algorithm, EvaluationError, OptimizerConfig};
        use crate::param_space::{Position, ReconAlgorithm};

        let space = ParameterSpace::preset(ReconAlgorithm::AwPcsd);
        let eval = |p: &Position| -> Result<FitnessReport, EvaluationError> {
            let f = p.indices().iter().map(|&k| k as f64).sum::<f64>() / 100.0;
            Ok(FitnessReport {
                snr: 1.0,
                hfer: 0.5,
                laplacian_var: None,
                fitness: f,
                objectives: ObjectiveVector {
                    inv_snr: f,
                    hfer_deficit: 0.5,
                },
            })
        };
        let config = OptimizerConfig {
            population: 5,
            iterations: 4,
            seed: 3,
            ..OptimizerConfig::default()
        };
        let rec = run(&space, &eval, &config, Algorithm::SsaCsa, InitScheme::Cdlu).unwrap();
        let text = convergence_csv(&rec);
        assert!(text.contains("# algorithm = ssa-csa\n"));
        let rows = parse_convergence(&text).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].iteration, Some(0));
        assert_eq!(rows[5].iteration, None);
        assert!((rows[5].best_fitness - rec.best_fitness()).abs() < 5e-7);
        assert!(rows.windows(2).take(4).all(|w| w[1].best_fitness <= w[0].best_fitness));
    }
}
