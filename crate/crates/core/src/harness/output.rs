//! Sweep CSV and SVG plot output.
//!
//! CSV header: `config_id,split,ber,snr_db,accuracy,payload_bits,seed`.
//! Floats use the shortest representation that parses back to the same
//! value; an infinite SNR is written `inf`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use super::sweep::{mean_accuracy, SweepRow};
use crate::{Error, Result};

pub const SWEEP_HEADER: [&str; 7] = ["config_id", "split", "ber", "snr_db", "accuracy", "payload_bits", "seed"];

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.config_id.clone(),
            r.split.clone(),
            r.ber.to_string(),
            r.snr_db.to_string(),
            r.accuracy.to_string(),
            r.payload_bits.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_csv(rows, std::io::BufWriter::new(f))
}

pub fn parse_csv<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(input);
    if r.headers()?.iter().collect::<Vec<_>>() != SWEEP_HEADER {
        return Err(Error::Config(format!("sweep CSV header must be {}", SWEEP_HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| Error::Config(format!("bad number {:?} in column {}", &rec[i], SWEEP_HEADER[i])))
        };
        rows.push(SweepRow {
            config_id: rec[0].to_string(),
            split: rec[1].to_string(),
            ber: num(2)?,
            snr_db: num(3)?,
            accuracy: num(4)?,
            payload_bits: num(5)?,
            seed: rec[6].parse().map_err(|_| Error::Config(format!("bad seed {:?}", &rec[6])))?,
        });
    }
    Ok(rows)
}

pub fn read_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let f = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.display().to_string()),
        _ => Error::Io(e),
    })?;
    parse_csv(f)
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 140.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#000000"];

/// Seed-averaged accuracy against `log10(ber)`, one polyline per
/// configuration. Rows at `ber = 0` have no place on the log axis and are
/// left out.
pub fn render_svg(rows: &[SweepRow]) -> Result<String> {
    let means: Vec<(String, f64, f64)> = mean_accuracy(rows).into_iter().filter(|(_, b, _)| *b > 0.0).collect();
    if means.is_empty() {
        return Err(Error::InvalidParam("nothing to plot: no rows with ber > 0".into()));
    }
    let mut ids: Vec<String> = Vec::new();
    for (id, _, _) in &means {
        if !ids.contains(id) {
            ids.push(id.clone());
        }
    }
    let xs: Vec<f64> = means.iter().map(|(_, b, _)| b.log10()).collect();
    let x_lo = xs.iter().copied().fold(f64::INFINITY, f64::min).floor();
    let mut x_hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil();
    if x_hi <= x_lo {
        x_hi = x_lo + 1.0;
    }
    let px = |e: f64| LEFT + (e - x_lo) / (x_hi - x_lo) * (WIDTH - LEFT - RIGHT);
    let py = |a: f64| TOP + (1.0 - a) * (HEIGHT - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<g class="axes" stroke="black" fill="none"><line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}"/></g>"#,
        py(0.0),
        px(x_hi),
        py(0.0),
        py(0.0)
    );
    let mut e = x_lo;
    while e <= x_hi + 1e-9 {
        let _ = writeln!(s, r#"<text class="xtick" x="{:.2}" y="{:.2}" text-anchor="middle">1e{}</text>"#, px(e), py(0.0) + 16.0, e as i64);
        e += 1.0;
    }
    for k in 0..=5 {
        let a = k as f64 / 5.0;
        let _ = writeln!(s, r#"<text class="ytick" x="{:.2}" y="{:.2}" text-anchor="end">{a:.1}</text>"#, LEFT - 6.0, py(a) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">BER</text>"#, (LEFT + WIDTH - RIGHT) / 2.0, HEIGHT - 10.0);
    let _ = writeln!(s, r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">accuracy</text>"#, HEIGHT / 2.0, HEIGHT / 2.0);
    for (i, id) in ids.iter().enumerate() {
        let mut pts: Vec<(f64, f64)> = means.iter().filter(|(k, _, _)| k == id).map(|(_, b, a)| (b.log10(), *a)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let coords: Vec<String> = pts.iter().map(|&(x, a)| format!("{:.2},{:.2}", px(x), py(a))).collect();
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-config="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            escape(id),
            coords.join(" ")
        );
        let ly = TOP + 14.0 * i as f64 + 6.0;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="1.5"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 18.0,
            lx + 22.0,
            ly + 4.0,
            escape(id)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn emit_svg_plot(rows: &[SweepRow], path: &Path) -> Result<()> {
    std::fs::write(path, render_svg(rows)?)?;
    Ok(())
}

/// Distinct configuration ids in a result.
pub fn config_ids(rows: &[SweepRow]) -> BTreeSet<String> {
    rows.iter().map(|r| r.config_id.clone()).collect()
}
