//! Deterministic CSV and SVG emission. Floats are printed with a fixed
//! format so identical runs produce byte-identical artifacts.

use crate::error::Result;
use std::fs;
use std::io::Write;
use std::path::Path;

/// Format a float the way every CSV column does.
pub fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.12e}")
    } else if v.is_nan() {
        "nan".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// Write a CSV file from a header line and preformatted rows.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut out = fs::File::create(path)?;
    writeln!(out, "{header}")?;
    for row in rows {
        writeln!(out, "{row}")?;
    }
    Ok(())
}

/// A minimal line chart: labelled polylines on a framed plot area.
pub struct SvgPlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<(String, Vec<(f64, f64)>)>,
    /// Plot y on a log10 scale.
    pub log_y: bool,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

impl SvgPlot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> SvgPlot {
        SvgPlot {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            series: Vec::new(),
            log_y: false,
        }
    }

    pub fn add_series(&mut self, name: &str, points: Vec<(f64, f64)>) {
        self.series.push((name.to_string(), points));
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let (width, height) = (640.0, 420.0);
        let (ml, mr, mt, mb) = (70.0, 20.0, 40.0, 55.0);
        let (pw, ph) = (width - ml - mr, height - mt - mb);

        let map_y = |y: f64| if self.log_y { y.max(1e-300).log10() } else { y };
        let points: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|(_, pts)| pts.iter().map(|&(x, y)| (x, map_y(y))))
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .collect();
        let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in &points {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 < 1e-300 {
            x1 = x0 + 1.0;
        }
        if y1 - y0 < 1e-300 {
            y1 = y0 + 1.0;
        }
        let sx = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| mt + ph - (map_y(y) - y0) / (y1 - y0) * ph;

        let mut svg = String::new();
        svg.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
        ));
        svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
        svg.push_str(&format!(
            "<rect x=\"{ml}\" y=\"{mt}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"#444\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">{}</text>\n",
            width / 2.0,
            xml_escape(&self.title)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            width / 2.0,
            height - 12.0,
            xml_escape(&self.x_label)
        ));
        svg.push_str(&format!(
            "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 {})\">{}</text>\n",
            mt + ph / 2.0,
            mt + ph / 2.0,
            xml_escape(&self.y_label)
        ));

        // axis ticks
        for i in 0..=4 {
            let fx = x0 + (x1 - x0) * i as f64 / 4.0;
            let fy = y0 + (y1 - y0) * i as f64 / 4.0;
            let px = sx(fx);
            let py = mt + ph - (fy - y0) / (y1 - y0) * ph;
            svg.push_str(&format!(
                "<line x1=\"{px}\" y1=\"{}\" x2=\"{px}\" y2=\"{}\" stroke=\"#444\"/>\n",
                mt + ph,
                mt + ph + 4.0
            ));
            svg.push_str(&format!(
                "<text x=\"{px}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n",
                mt + ph + 16.0,
                tick_label(fx)
            ));
            svg.push_str(&format!(
                "<line x1=\"{}\" y1=\"{py}\" x2=\"{ml}\" y2=\"{py}\" stroke=\"#444\"/>\n",
                ml - 4.0
            ));
            let label = if self.log_y {
                format!("1e{}", tick_label(fy))
            } else {
                tick_label(fy)
            };
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{label}</text>\n",
                ml - 8.0,
                py + 3.0
            ));
        }

        for (idx, (name, pts)) in self.series.iter().enumerate() {
            let color = PALETTE[idx % PALETTE.len()];
            let path_points: Vec<String> = pts
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            if path_points.is_empty() {
                continue;
            }
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                path_points.join(" ")
            ));
            for p in &path_points {
                let (px, py) = p.split_once(',').unwrap();
                svg.push_str(&format!("<circle cx=\"{px}\" cy=\"{py}\" r=\"2.2\" fill=\"{color}\"/>\n"));
            }
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{}</text>\n",
                ml + 8.0,
                mt + 16.0 + 14.0 * idx as f64,
                xml_escape(name)
            ));
        }
        svg.push_str("</svg>\n");
        fs::write(path, svg)?;
        Ok(())
    }
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 0.01 && v.abs() < 10000.0 {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_is_stable() {
        assert_eq!(fmt(0.125), "1.250000000000e-1");
        assert_eq!(fmt(f64::INFINITY), "inf");
        assert_eq!(fmt(f64::NAN), "nan");
    }

    #[test]
    fn svg_writes_valid_xmlish() {
        let dir = std::env::temp_dir().join("plaplab_svg_test");
        std::fs::create_dir_all(&dir).unwrap();
        let mut plot = SvgPlot::new("title", "x", "y");
        plot.add_series("a", vec![(0.0, 1.0), (1.0, 2.0), (2.0, 1.5)]);
        let path = dir.join("t.svg");
        plot.write(&path).unwrap();
        let content = std::fs::read_to_string(&path).unwrap();
        assert!(content.starts_with("<svg"));
        assert!(content.contains("polyline"));
        assert!(content.trim_end().ends_with("</svg>"));
    }
}
