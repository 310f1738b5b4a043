//! File formats: datasets, band tables with JSON headers, simulation tables,
//! ECDF tables, kernel constant reports and a static SVG band plot.
//!
//! Floats in CSV files are written with 17 significant digits so that
//! re-reading reproduces them exactly.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::bands::{BandHeader, BandResult, BandRow, PointFlags};
use crate::error::{Error, Result};
use crate::estimators::{Record, Sample};
use crate::kernel::{d_n, Kernel};
use crate::sim::{SimReport, Uniformity};

/// `v` with 17 significant digits (`inf`, `-inf`, `NaN` for non-finite values).
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

fn parse_f64(s: &str, row: usize, column: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Row {
        row,
        message: format!("cannot parse {column} `{s}` as a number"),
    })
}

/// Reads a `x,y,delta` dataset. `y` may be empty only when `delta` is 0.
pub fn read_dataset<R: Read>(reader: R) -> Result<Sample> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names != ["x", "y", "delta"] {
        return Err(Error::InvalidData(format!(
            "expected header `x,y,delta`, found `{}`",
            names.join(",")
        )));
    }
    let mut records = Vec::new();
    for (i, result) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = result.map_err(|e| Error::Row {
            row,
            message: e.to_string(),
        })?;
        let x = parse_f64(&rec[0], row, "x")?;
        if !x.is_finite() {
            return Err(Error::Row {
                row,
                message: "x must be finite".into(),
            });
        }
        let observed = match rec[2].trim() {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Row {
                    row,
                    message: format!("delta must be 0 or 1, got `{other}`"),
                })
            }
        };
        let y_text = rec[1].trim();
        let y = if y_text.is_empty() {
            if observed {
                return Err(Error::Row {
                    row,
                    message: "missing y with delta=1".into(),
                });
            }
            None
        } else {
            let y = parse_f64(y_text, row, "y")?;
            if observed && !y.is_finite() {
                return Err(Error::Row {
                    row,
                    message: "y must be finite when delta=1".into(),
                });
            }
            Some(y)
        };
        records.push(Record { x, y, observed });
    }
    if records.is_empty() {
        return Err(Error::InvalidData("dataset has no rows".into()));
    }
    if !records.iter().any(|r| r.observed) {
        return Err(Error::InvalidData("dataset needs at least one row with delta=1".into()));
    }
    Sample::new(records)
}

/// Writes a dataset; unobserved responses are left empty.
pub fn write_dataset<W: Write>(sample: &Sample, mut w: W) -> Result<()> {
    writeln!(w, "x,y,delta")?;
    for r in sample.records() {
        let y = if r.observed {
            fmt_f64(r.masked_y())
        } else {
            String::new()
        };
        writeln!(w, "{},{},{}", fmt_f64(r.x), y, u8::from(r.observed))?;
    }
    Ok(())
}

pub const BAND_COLUMNS: [&str; 7] = ["x", "mhat", "fhat", "sigma2", "lower", "upper", "flags"];

pub fn write_band_csv<W: Write>(band: &BandResult, mut w: W) -> Result<()> {
    writeln!(w, "{}", BAND_COLUMNS.join(","))?;
    for r in &band.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt_f64(r.x),
            fmt_f64(r.mhat),
            fmt_f64(r.fhat),
            fmt_f64(r.sigma2),
            fmt_f64(r.lower),
            fmt_f64(r.upper),
            r.flags.encode()
        )?;
    }
    Ok(())
}

pub fn band_header_json(band: &BandResult) -> Result<String> {
    Ok(serde_json::to_string_pretty(&band.header)?)
}

/// Rebuilds a band from its CSV table and JSON header.
pub fn read_band<R1: Read, R2: Read>(csv_reader: R1, header_reader: R2) -> Result<BandResult> {
    let header: BandHeader = serde_json::from_reader(header_reader)?;
    let mut rdr = csv::ReaderBuilder::new().from_reader(csv_reader);
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if names != BAND_COLUMNS {
        return Err(Error::InvalidData(format!(
            "unexpected band columns `{}`",
            names.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, result) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = result.map_err(|e| Error::Row {
            row,
            message: e.to_string(),
        })?;
        let num = |k: usize| parse_f64(&rec[k], row, BAND_COLUMNS[k]);
        rows.push(BandRow {
            x: num(0)?,
            mhat: num(1)?,
            fhat: num(2)?,
            sigma2: num(3)?,
            lower: num(4)?,
            upper: num(5)?,
            flags: PointFlags::decode(&rec[6])?,
        });
    }
    Ok(BandResult { header, rows })
}

/// Static SVG: shaded band polygon with the estimated curve on top.
/// Unbounded grid points are left out.
pub fn band_svg(band: &BandResult, width: f64, height: f64) -> String {
    let rows: Vec<&BandRow> = band
        .rows
        .iter()
        .filter(|r| r.lower.is_finite() && r.upper.is_finite())
        .collect();
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    );
    if rows.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let pad = 20.0;
    let (x0, x1) = (rows[0].x, rows[rows.len() - 1].x);
    let y0 = rows.iter().map(|r| r.lower).fold(f64::INFINITY, f64::min);
    let y1 = rows.iter().map(|r| r.upper).fold(f64::NEG_INFINITY, f64::max);
    let sx = |x: f64| pad + (x - x0) / (x1 - x0).max(f64::MIN_POSITIVE) * (width - 2.0 * pad);
    let sy = |y: f64| height - pad - (y - y0) / (y1 - y0).max(f64::MIN_POSITIVE) * (height - 2.0 * pad);
    let mut poly = Vec::with_capacity(2 * rows.len());
    for r in &rows {
        poly.push(format!("{:.2},{:.2}", sx(r.x), sy(r.upper)));
    }
    for r in rows.iter().rev() {
        poly.push(format!("{:.2},{:.2}", sx(r.x), sy(r.lower)));
    }
    svg.push_str(&format!(
        "  <polygon points=\"{}\" fill=\"#9ecae1\" fill-opacity=\"0.6\" stroke=\"none\"/>\n",
        poly.join(" ")
    ));
    let line: Vec<String> = rows
        .iter()
        .map(|r| format!("{:.2},{:.2}", sx(r.x), sy(r.mhat)))
        .collect();
    svg.push_str(&format!(
        "  <polyline points=\"{}\" fill=\"none\" stroke=\"#08519c\" stroke-width=\"1.5\"/>\n",
        line.join(" ")
    ));
    svg.push_str("</svg>\n");
    svg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnEntry {
    pub n: usize,
    pub delta: f64,
    pub d_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub kernel: Kernel,
    #[serde(rename = "A")]
    pub support: f64,
    #[serde(rename = "c_K")]
    pub c_k: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    pub d_n: Vec<DnEntry>,
}

/// Kernel constants plus `d_n` for n ∈ {200, 500, 1000} and δ = 0.21, …, 0.33.
pub fn constants_report(kernel: Kernel) -> Result<ConstantsReport> {
    let c = kernel.constants();
    let mut table = Vec::new();
    for n in [200usize, 500, 1000] {
        for k in 21..=33 {
            let delta = k as f64 / 100.0;
            table.push(DnEntry {
                n,
                delta,
                d_n: d_n(n, delta, &c)?,
            });
        }
    }
    Ok(ConstantsReport {
        kernel,
        support: c.support,
        c_k: c.c_k,
        c1: c.c1,
        c2: c.c2,
        d_n: table,
    })
}

/// Coverage/area table at one level: one row per method and perturbation
/// setting, two columns (coverage, area) per (n, model) cell in order of
/// first appearance.
pub fn write_table<W: Write>(reports: &[SimReport], alpha: f64, mut w: W) -> Result<()> {
    let mut cells: Vec<(usize, String)> = Vec::new();
    let mut eps_labels: Vec<String> = Vec::new();
    for r in reports {
        let cell = (r.config.n, r.config.model.name().to_string());
        if !cells.contains(&cell) {
            cells.push(cell);
        }
        let label = r.config.eps.label();
        if !eps_labels.contains(&label) {
            eps_labels.push(label);
        }
    }
    let mut header = vec!["method".to_string(), "eps".to_string()];
    for (n, model) in &cells {
        header.push(format!("n{n}_{model}_coverage"));
        header.push(format!("n{n}_{model}_area"));
    }
    writeln!(w, "{}", header.join(","))?;
    for method in [crate::bands::Method::Proposed, crate::bands::Method::CompleteCase] {
        for label in &eps_labels {
            let mut line = vec![method.name().to_string(), label.clone()];
            for (n, model) in &cells {
                let found = reports
                    .iter()
                    .find(|r| r.config.n == *n && r.config.model.name() == model && &r.config.eps.label() == label);
                match found.and_then(|r| r.level(alpha)) {
                    Some(level) => {
                        let m = level.method(method);
                        line.push(fmt_f64(m.coverage));
                        line.push(fmt_f64(m.mean_area));
                    }
                    None => {
                        line.push(String::new());
                        line.push(String::new());
                    }
                }
            }
            writeln!(w, "{}", line.join(","))?;
        }
    }
    Ok(())
}

/// Two-column-per-statistic ECDF table on the shared 101-point mesh.
pub fn write_ecdf<W: Write>(u: &Uniformity, v: &Uniformity, mut w: W) -> Result<()> {
    writeln!(w, "t,ecdf_u,ecdf_v")?;
    for ((t, fu), (_, fv)) in u.ecdf.iter().zip(&v.ecdf) {
        writeln!(w, "{},{},{}", fmt_f64(*t), fmt_f64(*fu), fmt_f64(*fv))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bands::{build_band, BandSettings};
    use crate::estimators::BandwidthSpec;
    use crate::exec::Execution;
    use proptest::prelude::*;

    #[test]
    fn dataset_parsing() {
        let text = "x,y,delta\n0.1,1.5,1\n0.2,,0\n0.3,2.5,0\n";
        let s = read_dataset(text.as_bytes()).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.observed_count(), 1);
        assert_eq!(s.records()[1].y, None);
        assert_eq!(s.records()[2].y, Some(2.5));
    }

    #[test]
    fn dataset_errors_name_the_row() {
        let err = read_dataset("x,y,delta\n0.1,1,1\n0.2,,1\n".as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "row 2: missing y with delta=1");
        let err = read_dataset("x,y,delta\n0.1,abc,1\n".as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("row 1:"));
        let err = read_dataset("x,y,delta\n0.1,1,2\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("delta must be 0 or 1"));
        let err = read_dataset("x,y,delta\n0.1,1,1\n0.3,2\n".as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("row 2:"));
        assert!(read_dataset("a,b,c\n1,2,1\n".as_bytes()).is_err());
        assert!(read_dataset("x,y,delta\n0.1,,0\n".as_bytes()).is_err());
        assert!(read_dataset("x,y,delta\n".as_bytes()).is_err());
        assert!(err.is_validation());
    }

    #[test]
    fn dataset_roundtrip() {
        let s = Sample::new(vec![
            Record::observed(0.1 + 0.2, 1.0 / 3.0),
            Record::missing(-2.5e-7),
            Record::observed(1e10, -0.0),
        ])
        .unwrap();
        let mut buf = Vec::new();
        write_dataset(&s, &mut buf).unwrap();
        assert_eq!(read_dataset(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn band_roundtrip_is_exact() {
        let xs: Vec<f64> = (0..150).map(|i| -0.3 + 1.6 * i as f64 / 149.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (5.0 * x).sin() + 0.1 * (37.0 * x).cos()).collect();
        let s = Sample::complete(&xs, &ys).unwrap();
        let bw = BandwidthSpec::new(0.3, 0.25).unwrap();
        let settings = BandSettings {
            execution: Execution::Sequential,
            ..BandSettings::default()
        };
        let band = build_band(&s, &bw, &[0.0; 150], 0.05, &settings).unwrap();
        let mut csv_buf = Vec::new();
        write_band_csv(&band, &mut csv_buf).unwrap();
        let json = band_header_json(&band).unwrap();
        let back = read_band(csv_buf.as_slice(), json.as_bytes()).unwrap();
        assert_eq!(back, band);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in [
            "n", "alpha", "delta", "beta", "kernel", "c_K", "C1", "C2", "d_n", "x_alpha",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn svg_has_polygon_and_line() {
        let header = BandHeader {
            method: crate::bands::Method::Proposed,
            n: 10,
            alpha: 0.1,
            delta: 0.3,
            beta: Some(0.25),
            h: 0.5,
            kernel: Kernel::Epanechnikov,
            c_k: 0.6,
            c1: 0.0,
            c2: 1.25,
            d_n: 1.0,
            x_alpha: 2.9,
        };
        let rows = (0..5)
            .map(|i| {
                let x = i as f64 / 4.0;
                BandRow {
                    x,
                    mhat: x,
                    fhat: 1.0,
                    sigma2: 1.0,
                    lower: x - 0.1,
                    upper: x + 0.1,
                    flags: PointFlags::default(),
                }
            })
            .collect();
        let svg = band_svg(&BandResult { header, rows }, 400.0, 300.0);
        assert!(svg.contains("<polygon") && svg.contains("<polyline"));
        assert_eq!(svg.matches(',').count(), 15);
    }

    #[test]
    fn constants_report_contents() {
        let r = constants_report(Kernel::Epanechnikov).unwrap();
        assert_eq!(r.c_k, 0.6);
        assert_eq!(r.c1, 0.0);
        assert_eq!(r.c2, 1.25);
        assert_eq!(r.d_n.len(), 39);
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["A"], 1.0);
        assert_eq!(json["kernel"], "epanechnikov");
    }

    proptest! {
        #[test]
        fn float_text_roundtrip(bits in any::<u64>()) {
            let v = f64::from_bits(bits);
            let back: f64 = fmt_f64(v).parse().unwrap();
            if v.is_nan() {
                prop_assert!(back.is_nan());
            } else {
                prop_assert_eq!(back.to_bits(), v.to_bits());
            }
        }
    }
}
