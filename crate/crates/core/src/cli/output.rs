use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::analysis::FringeSample;
use crate::error::{Error, Result};
use crate::scans::ScanResult;

use super::config::RunManifest;

const MANIFEST_PREFIX: &str = "# manifest ";

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| io_error(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_error(path, e))
}

fn cell(value: Option<f64>) -> String {
    value.map_or_else(String::new, |v| format!("{v:e}"))
}

fn finish_csv(writer: csv::Writer<Vec<u8>>) -> Vec<u8> {
    writer.into_inner().expect("in-memory csv writer")
}

fn csv_error(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

/// Scan table: manifest comment, then `param_m|param_rad, rate_norm,
/// rate_mc_err, counts, counts_corrected, counts_err`. Absent values are
/// empty cells.
pub fn scan_csv(result: &ScanResult, manifest: &RunManifest) -> Result<Vec<u8>> {
    let mut out = format!("{MANIFEST_PREFIX}{}\n", manifest.to_json_line()).into_bytes();
    let param = if result.spec.kind.is_spatial() {
        "param_m"
    } else {
        "param_rad"
    };
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record([
            param,
            "rate_norm",
            "rate_mc_err",
            "counts",
            "counts_corrected",
            "counts_err",
        ])
        .map_err(csv_error)?;
    for s in &result.samples {
        writer
            .write_record([
                format!("{:e}", s.parameter),
                format!("{:e}", s.ideal_rate),
                cell(s.mc_error),
                s.counts.map_or_else(String::new, |c| c.to_string()),
                cell(s.corrected),
                cell(s.count_error),
            ])
            .map_err(csv_error)?;
    }
    out.extend(finish_csv(writer));
    Ok(out)
}

/// `xi1, xi2, rate_norm` rows, xi1 varying slowest.
pub fn map_csv(xi: &[f64], rates: &[Vec<f64>], manifest: &RunManifest) -> Result<Vec<u8>> {
    let mut out = format!("{MANIFEST_PREFIX}{}\n", manifest.to_json_line()).into_bytes();
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["xi1", "xi2", "rate_norm"])
        .map_err(csv_error)?;
    for (i, row) in rates.iter().enumerate() {
        for (j, rate) in row.iter().enumerate() {
            writer
                .write_record([
                    format!("{:e}", xi[i]),
                    format!("{:e}", xi[j]),
                    format!("{rate:e}"),
                ])
                .map_err(csv_error)?;
        }
    }
    out.extend(finish_csv(writer));
    Ok(out)
}

/// Parsed scan CSV, ready for fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanTable {
    pub manifest: Option<RunManifest>,
    /// Parameter column is `param_rad`.
    pub angular: bool,
    /// Background-corrected counts with √counts errors when the file has
    /// counts, otherwise the noiseless normalized rate without errors.
    pub samples: Vec<FringeSample>,
}

fn parse_cell(text: &str, column: &str, row: usize) -> Result<Option<f64>> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(None);
    }
    text.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Config(format!("row {row}: cannot parse {column} value '{text}'")))
}

pub fn read_scan_csv(path: &Path) -> Result<ScanTable> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    parse_scan_csv(&text)
}

pub fn parse_scan_csv(text: &str) -> Result<ScanTable> {
    let manifest = text
        .lines()
        .find_map(|line| line.strip_prefix(MANIFEST_PREFIX))
        .map(|json| {
            serde_json::from_str::<RunManifest>(json)
                .map_err(|e| Error::Config(format!("manifest: {e}")))
        })
        .transpose()?;

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(csv_error)?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let (param, angular) = match (column("param_m"), column("param_rad")) {
        (Some(i), None) => (i, false),
        (None, Some(i)) => (i, true),
        _ => {
            return Err(Error::Config(
                "csv needs exactly one of param_m, param_rad".into(),
            ))
        }
    };
    let rate = column("rate_norm");
    let corrected = column("counts_corrected");
    let counts_err = column("counts_err");

    let mut rows = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let get = |i: Option<usize>, name: &str| -> Result<Option<f64>> {
            match i.and_then(|i| record.get(i)) {
                Some(v) => parse_cell(v, name, row + 1),
                None => Ok(None),
            }
        };
        let s = get(Some(param), "param")?
            .ok_or_else(|| Error::Config(format!("row {}: empty parameter", row + 1)))?;
        rows.push((
            s,
            get(rate, "rate_norm")?,
            get(corrected, "counts_corrected")?,
            get(counts_err, "counts_err")?,
        ));
    }

    let counted = !rows.is_empty() && rows.iter().all(|r| r.2.is_some() && r.3.is_some());
    let samples = if counted {
        rows.iter()
            .map(|&(s, _, c, e)| FringeSample::with_error(s, c.unwrap_or(0.0), e.unwrap_or(1.0)))
            .collect()
    } else {
        rows.iter()
            .map(|&(s, r, _, _)| {
                r.map(|v| FringeSample::new(s, v)).ok_or_else(|| {
                    Error::Config("csv rows need rate_norm or counts_corrected/counts_err".into())
                })
            })
            .collect::<Result<_>>()?
    };
    Ok(ScanTable {
        manifest,
        angular,
        samples,
    })
}

pub struct Series<'a> {
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

/// Minimal line plot: frame, axis labels and one polyline per series.
pub fn svg_plot(
    x_label: &str,
    y_label: &str,
    series: &[Series<'_>],
    manifest: &RunManifest,
) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 50.0;
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    y0 = y0.min(0.0);
    if x1.partial_cmp(&x0) != Some(std::cmp::Ordering::Greater) {
        x1 = x0 + 1.0;
    }
    if y1.partial_cmp(&y0) != Some(std::cmp::Ordering::Greater) {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let py = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(
        svg,
        "<!-- manifest {} -->",
        manifest.to_json_line().replace("--", "- -")
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{M} {M} V{} H{}" fill="none" stroke="black"/>"#,
        H - M,
        W - M
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{x_label} [{x0:.3e}, {x1:.3e}]</text>"#,
        W / 2.0,
        H - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{}" font-size="12" transform="rotate(-90 15 {})" text-anchor="middle">{y_label} [{y0:.3e}, {y1:.3e}]</text>"#,
        H / 2.0,
        H / 2.0
    );
    for s in series {
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            s.color,
            pts.join(" ")
        );
    }
    svg.push_str("</svg>\n");
    svg
}
