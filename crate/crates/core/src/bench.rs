//! End-to-end benchmark: corrupt, denoise with each method, score, report.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::filters::FilterSpec;
use crate::image::{load_image, save_image, GrayImage};
use crate::metrics::{MetricReport, Score, SsimConfig};
use crate::noise::{NoiseKind, NoiseSpec};
use crate::self2self::{denoise, PredictConfig, TrainConfig};

/// A denoising method in a benchmark run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    /// Passes the noisy image through unchanged.
    Identity,
    Filter(FilterSpec),
    /// Trained with the run's [`TrainConfig`] and [`PredictConfig`].
    Self2Self,
}

impl Method {
    /// Stem of the output image file, safe on every common filesystem.
    pub fn file_stem(&self) -> String {
        self.to_string()
            .chars()
            .map(|c| match c {
                ':' => '-',
                ',' => '_',
                c => c,
            })
            .collect()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Identity => f.write_str("identity"),
            Method::Filter(spec) => spec.fmt(f),
            Method::Self2Self => f.write_str("self2self"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "identity" | "none" | "noisy" => Ok(Method::Identity),
            "self2self" | "s2s" => Ok(Method::Self2Self),
            other => other.parse().map(Method::Filter),
        }
    }
}

/// Splits a comma separated methods list. A token that starts with a
/// letter opens a new method; any other token is another parameter of the
/// previous one, so `bilateral:2,2.0,0.1,median:3` is two methods.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let mut specs: Vec<String> = Vec::new();
    for token in list.split(',').map(str::trim) {
        let opens = token.starts_with(|c: char| c.is_ascii_alphabetic());
        match specs.last_mut() {
            Some(last) if !opens => {
                last.push(',');
                last.push_str(token);
            }
            _ if opens => specs.push(token.to_string()),
            _ => {
                return Err(Error::parse(
                    "methods",
                    list,
                    "empty method or leading parameter",
                ))
            }
        }
    }
    let methods = specs
        .iter()
        .map(|s| s.parse())
        .collect::<Result<Vec<Method>>>()?;
    check_methods(&methods)?;
    Ok(methods)
}

fn check_methods(methods: &[Method]) -> Result<()> {
    if methods.is_empty() {
        return Err(Error::param("at least one method is required"));
    }
    let mut seen = HashSet::new();
    for m in methods {
        if !seen.insert(m.to_string()) {
            return Err(Error::param(format!("method {m} listed twice")));
        }
    }
    Ok(())
}

/// Report layout.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TableFormat {
    #[default]
    Text,
    Csv,
}

impl TableFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            TableFormat::Text => "txt",
            TableFormat::Csv => "csv",
        }
    }
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "text" | "txt" => Ok(TableFormat::Text),
            "csv" => Ok(TableFormat::Csv),
            _ => Err(Error::parse("table format", s, "expected text or csv")),
        }
    }
}

impl fmt::Display for TableFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TableFormat::Text => "text",
            TableFormat::Csv => "csv",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub method: String,
    pub report: MetricReport,
}

const HEADER: [&str; 5] = ["Method", "PSNR", "SSIM", "FI", "EPI"];

fn cells(row: &TableRow) -> [String; 5] {
    let r = &row.report;
    [
        row.method.clone(),
        r.psnr.to_string(),
        r.ssim.to_string(),
        r.fi.to_string(),
        r.epi.to_string(),
    ]
}

/// Renders rows as an aligned text table or as CSV, values at 4 decimals.
pub fn render_table(rows: &[TableRow], format: TableFormat) -> String {
    match format {
        TableFormat::Text => render_text(rows),
        TableFormat::Csv => render_csv(rows),
    }
}

fn render_text(rows: &[TableRow]) -> String {
    let body: Vec<[String; 5]> = rows.iter().map(cells).collect();
    let mut widths = HEADER.map(str::len);
    for line in &body {
        for (w, c) in widths.iter_mut().zip(line) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let header = HEADER.map(String::from);
    for line in std::iter::once(&header).chain(&body) {
        let padded: Vec<String> = line
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| {
                if i == 0 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        out.push_str(padded.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn render_csv(rows: &[TableRow]) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(HEADER.map(|h| h.to_ascii_lowercase()))
        .expect("writing to memory");
    for row in rows {
        w.write_record(cells(row)).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("ascii table")
}

/// Inverse of [`render_table`] in CSV mode.
pub fn parse_csv_table(text: &str) -> Result<Vec<TableRow>> {
    let bad = |reason: String| Error::parse("csv table", text, reason);
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| bad(e.to_string()))?;
    if header
        .iter()
        .ne(HEADER.iter().map(|h| h.to_ascii_lowercase()))
    {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    reader
        .records()
        .map(|rec| {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let score = |i: usize| rec[i].parse::<Score>();
            Ok(TableRow {
                method: rec[0].to_string(),
                report: MetricReport {
                    psnr: score(1)?,
                    ssim: score(2)?,
                    fi: score(3)?,
                    epi: score(4)?,
                },
            })
        })
        .collect()
}

/// Everything one `bench` invocation needs.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkRun {
    /// The clean image when `noise` is set, otherwise the noisy input.
    pub source: PathBuf,
    /// Reference for PSNR and SSIM when `noise` is not set.
    pub clean_reference: Option<PathBuf>,
    pub noise: Option<NoiseKind>,
    pub methods: Vec<Method>,
    pub output_dir: PathBuf,
    /// Seeds the synthetic corruption and names the artifacts.
    pub seed: u64,
    pub train: TrainConfig,
    pub predict: PredictConfig,
    pub ssim: SsimConfig,
}

/// Rows in method order plus the files written.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkOutput {
    pub rows: Vec<TableRow>,
    pub noisy_image: Option<PathBuf>,
    pub method_images: Vec<PathBuf>,
    pub report_text: PathBuf,
    pub report_csv: PathBuf,
}

/// Runs every method on the (possibly synthetically corrupted) input and
/// writes the images plus `report.txt` and `report.csv` under
/// `run.output_dir`. `progress` receives `(iteration, loss)` from each
/// self-supervised training run.
pub fn run_benchmark(
    run: &BenchmarkRun,
    mut progress: impl FnMut(usize, f64),
) -> Result<BenchmarkOutput> {
    check_methods(&run.methods)?;
    run.ssim.validate()?;
    let source = load_image(&run.source)?;
    fs::create_dir_all(&run.output_dir).map_err(|e| Error::io(&run.output_dir, e))?;

    let (noisy, clean, noisy_image) = match run.noise {
        Some(kind) => {
            let noisy = NoiseSpec::new(kind, run.seed)?.apply(&source)?;
            let path = run.output_dir.join(format!("noisy_s{}.pgm", run.seed));
            save_image(&noisy, &path)?;
            (noisy, Some(source), Some(path))
        }
        None => {
            let clean = run.clean_reference.as_ref().map(load_image).transpose()?;
            (source, clean, None)
        }
    };

    let mut rows = Vec::with_capacity(run.methods.len());
    let mut method_images = Vec::with_capacity(run.methods.len());
    for method in &run.methods {
        let out = apply_method(method, &noisy, run, &mut progress)?;
        let path = run
            .output_dir
            .join(format!("{}_s{}.pgm", method.file_stem(), run.seed));
        save_image(&out, &path)?;
        method_images.push(path);
        rows.push(TableRow {
            method: method.to_string(),
            report: MetricReport::evaluate(&out, &noisy, clean.as_ref(), &run.ssim)?,
        });
    }

    let report_text = write_report(&run.output_dir, &rows, TableFormat::Text)?;
    let report_csv = write_report(&run.output_dir, &rows, TableFormat::Csv)?;
    Ok(BenchmarkOutput {
        rows,
        noisy_image,
        method_images,
        report_text,
        report_csv,
    })
}

fn apply_method(
    method: &Method,
    noisy: &GrayImage,
    run: &BenchmarkRun,
    progress: &mut impl FnMut(usize, f64),
) -> Result<GrayImage> {
    match method {
        Method::Identity => Ok(noisy.clone()),
        Method::Filter(spec) => spec.apply(noisy),
        Method::Self2Self => Ok(denoise(noisy, &run.train, &run.predict, progress)?.0),
    }
}

fn write_report(dir: &Path, rows: &[TableRow], format: TableFormat) -> Result<PathBuf> {
    let path = dir.join(format!("report.{}", format.extension()));
    fs::write(&path, render_table(rows, format)).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| match l.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() => {
                Ok((k.trim().to_string(), v.trim().to_string()))
            }
            _ => Err(Error::parse("config line", l, "expected key = value")),
        })
        .collect()
}
