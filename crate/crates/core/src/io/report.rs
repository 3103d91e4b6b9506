//! Agreement report output: JSON summary, per-sample CSV and an SVG plot.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{AgreementReport, SampleRecord};

pub fn write_report_json<W: Write>(report: &AgreementReport, w: W) -> Result<()> {
    serde_json::to_writer_pretty(w, report)?;
    Ok(())
}

pub fn read_report_json<R: Read>(r: R) -> Result<AgreementReport> {
    Ok(serde_json::from_reader(r)?)
}

pub fn write_records_csv<W: Write>(records: &[SampleRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(r: R) -> Result<Vec<SampleRecord>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn save_report(dir: &Path, report: &AgreementReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut json = BufWriter::new(File::create(dir.join("report.json"))?);
    write_report_json(report, &mut json)?;
    json.flush()?;
    write_records_csv(&report.records, BufWriter::new(File::create(dir.join("records.csv"))?))
}

pub fn load_report(path: &Path) -> Result<AgreementReport> {
    read_report_json(BufReader::new(File::open(path)?))
}

const PLOT_W: f64 = 640.0;
const PLOT_H: f64 = 400.0;
const MARGIN: f64 = 50.0;

/// Scatter of SAT error against TCI for truncated and completed images.
pub fn render_error_plot(report: &AgreementReport) -> String {
    let errors = report
        .records
        .iter()
        .flat_map(|r| [r.sat_truncated - r.sat_true, r.sat_completed - r.sat_true]);
    let span = errors.fold(1.0f64, |m, e| m.max(e.abs()));
    let x = |tci: f64| MARGIN + tci * (PLOT_W - 2.0 * MARGIN);
    let y = |err: f64| PLOT_H / 2.0 - err / span * (PLOT_H / 2.0 - MARGIN);

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PLOT_W}\" height=\"{PLOT_H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    s.push_str(&format!(
        "<line x1=\"{}\" y1=\"{y0:.2}\" x2=\"{}\" y2=\"{y0:.2}\" stroke=\"#888\"/>\n",
        x(0.0),
        x(1.0),
        y0 = y(0.0)
    ));
    s.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{}\" x2=\"{x0}\" y2=\"{}\" stroke=\"#888\"/>\n",
        MARGIN,
        PLOT_H - MARGIN,
        x0 = x(0.0)
    ));
    for edge in &report.bin_edges {
        s.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\">{edge}</text>\n",
            x(*edge),
            PLOT_H - MARGIN / 2.0
        ));
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">TCI</text>\n",
        PLOT_W / 2.0,
        PLOT_H - 8.0
    ));
    s.push_str(&format!(
        "<text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">SAT error (px, max {span})</text>\n",
        PLOT_H / 2.0,
        PLOT_H / 2.0
    ));
    for r in &report.records {
        s.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#d62728\"><title>{} truncated</title></circle>\n",
            x(r.tci),
            y(r.sat_truncated - r.sat_true),
            r.id
        ));
        s.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#1f77b4\"><title>{} completed</title></circle>\n",
            x(r.tci),
            y(r.sat_completed - r.sat_true),
            r.id
        ));
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"20\" fill=\"#d62728\">truncated</text>\n<text x=\"{}\" y=\"20\" fill=\"#1f77b4\">completed</text>\n",
        PLOT_W - 180.0,
        PLOT_W - 100.0
    ));
    s.push_str("</svg>\n");
    s
}
