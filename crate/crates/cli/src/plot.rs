//! SVG figures: reliability diagram, confidence histogram and PCA scatter.
//!
//! Every kind renders to a self-contained SVG string with coordinates
//! printed at two decimals, so the same report always yields the same bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use lpclip_core::metrics::{CalibrationReport, PcaProjection};

const WIDTH: f64 = 360.0;
const HEIGHT: f64 = 360.0;
const LEFT: f64 = 48.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 32.0;
const BOTTOM: f64 = 44.0;

const PALETTE: [&str; 10] = [
    "#4878d0", "#ee854a", "#6acc64", "#d65f5f", "#956cb4", "#8c613c", "#dc7ec0", "#797979",
    "#d5bb67", "#82c6e2",
];

/// Everything a figure may draw from. Each kind requires its own fields.
#[derive(Debug, Clone, Default)]
pub struct PlotReport {
    pub title: String,
    pub calibration: Option<CalibrationReport>,
    pub pca: Option<PcaProjection>,
    /// Point classes for the scatter; `None` draws all points alike.
    pub labels: Option<Vec<usize>>,
}

pub trait PlotKind {
    fn name(&self) -> &'static str;
    fn render(&self, report: &PlotReport) -> Result<String>;
}

pub struct PlotRegistry {
    kinds: Vec<Box<dyn PlotKind>>,
}

impl Default for PlotRegistry {
    fn default() -> Self {
        let mut r = PlotRegistry { kinds: Vec::new() };
        r.register(Box::new(Reliability));
        r.register(Box::new(Histogram));
        r.register(Box::new(PcaScatter));
        r
    }
}

impl PlotRegistry {
    /// Adds a kind, replacing any existing kind with the same name.
    pub fn register(&mut self, kind: Box<dyn PlotKind>) {
        self.kinds.retain(|k| k.name() != kind.name());
        self.kinds.push(kind);
    }

    pub fn get(&self, name: &str) -> Result<&dyn PlotKind> {
        self.kinds
            .iter()
            .find(|k| k.name() == name)
            .map(|k| k.as_ref())
            .ok_or_else(|| {
                anyhow!(
                    "unknown plot kind `{name}` (known: {})",
                    self.names().join(", ")
                )
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.kinds.iter().map(|k| k.name()).collect()
    }
}

/// Renders `kind` from the default registry.
pub fn render_plot(report: &PlotReport, kind: &str) -> Result<String> {
    PlotRegistry::default().get(kind)?.render(report)
}

/// Renders `kind` and writes it to `path`.
pub fn emit_plot(report: &PlotReport, kind: &str, path: &Path) -> Result<()> {
    let svg = render_plot(report, kind)?;
    fs::write(path, svg).with_context(|| format!("writing {}", path.display()))
}

fn px(v: f64) -> f64 {
    LEFT + v * (WIDTH - LEFT - RIGHT)
}

fn py(v: f64) -> f64 {
    TOP + (1.0 - v) * (HEIGHT - TOP - BOTTOM)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Canvas {
    svg: String,
}

impl Canvas {
    fn new(title: &str) -> Self {
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(
            svg,
            r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        );
        Canvas { svg }
    }

    fn frame(&mut self, xlabel: &str, ylabel: &str) {
        let _ = writeln!(
            self.svg,
            r#"<rect class="frame" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
            px(0.0),
            py(1.0),
            px(1.0) - px(0.0),
            py(0.0) - py(1.0)
        );
        let _ = writeln!(
            self.svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            (px(0.0) + px(1.0)) / 2.0,
            HEIGHT - 8.0,
            escape(xlabel)
        );
        let cy = (py(0.0) + py(1.0)) / 2.0;
        let _ = writeln!(
            self.svg,
            r#"<text x="14" y="{cy:.2}" text-anchor="middle" transform="rotate(-90 14 {cy:.2})">{}</text>"#,
            escape(ylabel)
        );
    }

    /// Ticks at fifths of the unit square, labelled in data units.
    fn ticks(&mut self, xmax: f64, ymax: f64) {
        for i in 0..=5 {
            let t = i as f64 / 5.0;
            let _ = writeln!(
                self.svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{:.2}</text>"#,
                px(t),
                py(0.0) + 14.0,
                t * xmax
            );
            let _ = writeln!(
                self.svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.2}</text>"#,
                px(0.0) - 4.0,
                py(t) + 4.0,
                t * ymax
            );
        }
    }

    fn legend(&mut self, entries: &[(&str, &str)]) {
        for (i, (name, colour)) in entries.iter().enumerate() {
            let y = TOP + 8.0 + 14.0 * i as f64;
            let x = px(0.0) + 8.0;
            let _ = writeln!(
                self.svg,
                r#"<rect x="{x:.2}" y="{:.2}" width="10" height="10" fill="{colour}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                y - 8.0,
                x + 14.0,
                y + 1.0,
                escape(name)
            );
        }
    }

    fn finish(mut self) -> String {
        self.svg.push_str("</svg>\n");
        self.svg
    }
}

fn calibration(report: &PlotReport) -> Result<&CalibrationReport> {
    match &report.calibration {
        Some(c) if c.num_samples() > 0 => Ok(c),
        _ => bail!("plot needs a non-empty calibration report"),
    }
}

/// Per-bin accuracy bars against the identity line, with a marker at each
/// bin's (mean confidence, accuracy).
pub struct Reliability;

impl PlotKind for Reliability {
    fn name(&self) -> &'static str {
        "reliability"
    }

    fn render(&self, report: &PlotReport) -> Result<String> {
        let cal = calibration(report)?;
        let mut c = Canvas::new(&report.title);
        for b in cal.bins.iter().filter(|b| b.count > 0) {
            let _ = writeln!(
                c.svg,
                r##"<rect class="bar" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#4878d0" fill-opacity="0.8" stroke="white"/>"##,
                px(b.lower),
                py(b.accuracy),
                px(b.upper) - px(b.lower),
                py(0.0) - py(b.accuracy)
            );
        }
        let _ = writeln!(
            c.svg,
            r##"<line class="diagonal" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#d65f5f" stroke-dasharray="4 3"/>"##,
            px(0.0),
            py(0.0),
            px(1.0),
            py(1.0)
        );
        for b in cal.bins.iter().filter(|b| b.count > 0) {
            let _ = writeln!(
                c.svg,
                r#"<circle class="bin-mean" cx="{:.2}" cy="{:.2}" r="2.5" fill="black"/>"#,
                px(b.mean_confidence),
                py(b.accuracy)
            );
        }
        c.frame("confidence", "accuracy");
        c.ticks(1.0, 1.0);
        let _ = writeln!(
            c.svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">ECE {:.4}</text>"#,
            px(1.0) - 6.0,
            py(0.0) - 8.0,
            cal.ece
        );
        Ok(c.finish())
    }
}

/// Confidence distributions of correct, incorrect and OOD samples, each
/// normalized to its own total. Empty populations are left out.
pub struct Histogram;

impl PlotKind for Histogram {
    fn name(&self) -> &'static str {
        "histogram"
    }

    fn render(&self, report: &PlotReport) -> Result<String> {
        let cal = calibration(report)?;
        let h = &cal.histograms;
        let series: Vec<(&str, &str, Vec<f64>)> = [
            ("correct", PALETTE[2], &h.correct),
            ("incorrect", PALETTE[3], &h.incorrect),
            ("ood", PALETTE[0], &h.ood),
        ]
        .into_iter()
        .filter_map(|(name, colour, counts)| {
            let total: usize = counts.iter().sum();
            (total > 0).then(|| {
                (
                    name,
                    colour,
                    counts.iter().map(|&k| k as f64 / total as f64).collect(),
                )
            })
        })
        .collect();
        let peak = series
            .iter()
            .flat_map(|s| s.2.iter().copied())
            .fold(0.0, f64::max);
        let ymax = (peak * 10.0).ceil() / 10.0;
        let mut c = Canvas::new(&report.title);
        for (name, colour, fracs) in &series {
            let mut d = format!("M {:.2} {:.2}", px(0.0), py(0.0));
            for (b, f) in cal.bins.iter().zip(fracs) {
                let y = py(f / ymax);
                let _ = write!(
                    d,
                    " L {:.2} {y:.2} L {:.2} {y:.2}",
                    px(b.lower),
                    px(b.upper)
                );
            }
            let _ = write!(d, " L {:.2} {:.2} Z", px(1.0), py(0.0));
            let _ = writeln!(
                c.svg,
                r#"<path class="series series-{name}" d="{d}" fill="{colour}" fill-opacity="0.35" stroke="{colour}"/>"#
            );
        }
        c.frame("confidence", "fraction of population");
        c.ticks(1.0, ymax);
        let legend: Vec<(&str, &str)> = series.iter().map(|s| (s.0, s.1)).collect();
        c.legend(&legend);
        Ok(c.finish())
    }
}

/// First two principal coordinates, coloured by label.
pub struct PcaScatter;

impl PlotKind for PcaScatter {
    fn name(&self) -> &'static str {
        "pca"
    }

    fn render(&self, report: &PlotReport) -> Result<String> {
        let pca = match &report.pca {
            Some(p) if p.coords.rows() > 0 && p.coords.cols() >= 2 => p,
            _ => bail!("pca plot needs a projection with at least one point and two components"),
        };
        let n = pca.coords.rows();
        if let Some(l) = &report.labels {
            if l.len() != n {
                bail!("pca plot has {} labels for {n} points", l.len());
            }
        }
        let range = |k: usize| {
            let (lo, hi) = (0..n)
                .map(|i| pca.coords.get(i, k))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
            let pad = if hi > lo { 0.05 * (hi - lo) } else { 1.0 };
            (lo - pad, hi + pad)
        };
        let (x0, x1) = range(0);
        let (y0, y1) = range(1);
        let mut c = Canvas::new(&report.title);
        for i in 0..n {
            let colour = report
                .labels
                .as_ref()
                .map_or(PALETTE[0], |l| PALETTE[l[i] % PALETTE.len()]);
            let _ = writeln!(
                c.svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="1.8" fill="{colour}" fill-opacity="0.7"/>"#,
                px((pca.coords.get(i, 0) - x0) / (x1 - x0)),
                py((pca.coords.get(i, 1) - y0) / (y1 - y0))
            );
        }
        let pct = |k: usize| 100.0 * pca.explained_variance_ratio.get(k).copied().unwrap_or(0.0);
        c.frame(
            &format!("PC1 ({:.1}%)", pct(0)),
            &format!("PC2 ({:.1}%)", pct(1)),
        );
        Ok(c.finish())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use lpclip_core::metrics::{calibration_report, pca_project, CalibrationBin, Histograms};
    use lpclip_core::Matrix;
    use sha2::{Digest, Sha256};

    fn fixture() -> PlotReport {
        let conf: Vec<f64> = (0..40).map(|i| 0.3 + 0.0175 * i as f64).collect();
        let correct: Vec<bool> = (0..40).map(|i| i % 3 != 0).collect();
        let ood = [0.35, 0.4, 0.42, 0.5, 0.61];
        PlotReport {
            title: "fixture".into(),
            calibration: Some(calibration_report(&conf, &correct, Some(&ood), 10).unwrap()),
            ..Default::default()
        }
    }

    fn attr(line: &str, name: &str) -> f64 {
        let start = line.find(&format!(" {name}=\"")).unwrap() + name.len() + 3;
        let end = start + line[start..].find('"').unwrap();
        line[start..end].parse().unwrap()
    }

    #[test]
    fn registry_lists_kinds_and_rejects_unknown() {
        let r = PlotRegistry::default();
        assert_eq!(r.names(), ["reliability", "histogram", "pca"]);
        assert!(r.get("tsne").err().unwrap().to_string().contains("tsne"));
    }

    #[test]
    fn empty_report_is_an_error() {
        for kind in ["reliability", "histogram", "pca"] {
            assert!(render_plot(&PlotReport::default(), kind).is_err(), "{kind}");
        }
    }

    #[test]
    fn calibrated_report_puts_markers_on_diagonal() {
        let bins = (0..5)
            .map(|i| {
                let m = 0.1 + 0.2 * i as f64;
                CalibrationBin {
                    lower: 0.2 * i as f64,
                    upper: 0.2 * (i + 1) as f64,
                    mean_confidence: m,
                    accuracy: m,
                    count: 10,
                }
            })
            .collect();
        let report = PlotReport {
            calibration: Some(CalibrationReport {
                bins,
                ece: 0.0,
                histograms: Histograms::default(),
            }),
            ..Default::default()
        };
        let svg = render_plot(&report, "reliability").unwrap();
        let markers: Vec<&str> = svg.lines().filter(|l| l.contains("bin-mean")).collect();
        assert_eq!(markers.len(), 5);
        for m in markers {
            let (cx, cy) = (attr(m, "cx"), attr(m, "cy"));
            let v = (cx - LEFT) / (WIDTH - LEFT - RIGHT);
            assert!((py(v) - cy).abs() < 0.02, "{m}");
        }
        for bar in svg.lines().filter(|l| l.contains(r#"class="bar""#)) {
            let mid = (attr(bar, "x") + attr(bar, "width") / 2.0 - LEFT) / (WIDTH - LEFT - RIGHT);
            assert!((py(mid) - attr(bar, "y")).abs() < 0.02, "{bar}");
        }
    }

    #[test]
    fn histogram_with_only_correct_samples_has_one_series() {
        let report = PlotReport {
            calibration: Some(calibration_report(&[0.9, 0.8, 0.95], &[true; 3], None, 15).unwrap()),
            ..Default::default()
        };
        let svg = render_plot(&report, "histogram").unwrap();
        assert_eq!(svg.matches(r#"class="series "#).count(), 1);
        assert!(svg.contains("series-correct"));
    }

    #[test]
    fn histogram_overlays_three_populations() {
        let svg = render_plot(&fixture(), "histogram").unwrap();
        for s in ["series-correct", "series-incorrect", "series-ood"] {
            assert!(svg.contains(s), "{s}");
        }
    }

    #[test]
    fn pca_scatter_draws_every_point() {
        let m = Matrix::from_rows(&[
            [0.0, 1.0, 2.0],
            [1.0, 0.0, 1.0],
            [2.0, 2.0, 0.0],
            [3.0, 1.0, 1.0],
        ])
        .unwrap();
        let report = PlotReport {
            pca: Some(pca_project(&m, 2).unwrap()),
            labels: Some(vec![0, 1, 0, 1]),
            ..Default::default()
        };
        let svg = render_plot(&report, "pca").unwrap();
        assert_eq!(svg.matches("<circle").count(), 4);
        let bad = PlotReport {
            labels: Some(vec![0]),
            ..report
        };
        assert!(render_plot(&bad, "pca").is_err());
    }

    #[test]
    fn title_is_escaped() {
        let mut r = fixture();
        r.title = "a<b & c".into();
        assert!(render_plot(&r, "reliability")
            .unwrap()
            .contains("a&lt;b &amp; c"));
    }

    #[test]
    fn golden_reliability_svg() {
        let a = render_plot(&fixture(), "reliability").unwrap();
        let b = render_plot(&fixture(), "reliability").unwrap();
        assert_eq!(a, b);
        let digest = hex::encode(Sha256::digest(a.as_bytes()));
        assert_eq!(digest, GOLDEN_RELIABILITY_SHA256, "{a}");
    }

    const GOLDEN_RELIABILITY_SHA256: &str =
        "d63ca1eadf15b0d9d769bb38876c79fe3e591376cbab7704620345c73024d4e0";
}
