//! Minimal self-contained SVG charts.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;
const PALETTE: [&str; 8] = ["#440154", "#3b528b", "#21918c", "#5ec962", "#fde725", "#e66101", "#b2182b", "#7f7f7f"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Style {
    /// Markers joined by lines.
    Line,
    /// Markers only.
    Points,
    /// Bars from zero.
    Bars,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Optional `(low, high)` error bar per point.
    pub errors: Option<Vec<(f64, f64)>>,
    pub style: Style,
    pub dashed: bool,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>, style: Style) -> Self {
        Self {
            name: name.into(),
            points,
            errors: None,
            style,
            dashed: false,
        }
    }

    pub fn with_errors(mut self, errors: Vec<(f64, f64)>) -> Self {
        self.errors = Some(errors);
        self
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log2_x: bool,
    /// Replaces numeric x ticks with labels at the given positions.
    pub x_ticks: Option<Vec<(f64, String)>>,
    pub y_range: Option<(f64, f64)>,
    /// Shaded horizontal band, e.g. a tolerance around a reference value.
    pub band: Option<(f64, f64)>,
    /// Dotted horizontal reference line.
    pub reference: Option<f64>,
    pub series: Vec<Series>,
}

impl Chart {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log2_x: false,
            x_ticks: None,
            y_range: None,
            band: None,
            reference: None,
            series: Vec::new(),
        }
    }

    fn x_value(&self, x: f64) -> f64 {
        if self.log2_x {
            x.max(f64::MIN_POSITIVE).log2()
        } else {
            x
        }
    }

    fn bounds(&self) -> ((f64, f64), (f64, f64)) {
        let mut xs: Vec<f64> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| self.x_value(p.0)))
            .collect();
        if let Some(ticks) = &self.x_ticks {
            xs.extend(ticks.iter().map(|t| self.x_value(t.0)));
        }
        let mut ys: Vec<f64> = self.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).collect();
        for s in &self.series {
            if let Some(e) = &s.errors {
                ys.extend(e.iter().flat_map(|&(lo, hi)| [lo, hi]));
            }
            if s.style == Style::Bars {
                ys.push(0.0);
            }
        }
        if let Some((lo, hi)) = self.band {
            ys.extend([lo, hi]);
        }
        ys.extend(self.reference);
        let finite = |v: &Vec<f64>| {
            let lo = v.iter().copied().filter(|x| x.is_finite()).fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().filter(|x| x.is_finite()).fold(f64::NEG_INFINITY, f64::max);
            if lo.is_finite() {
                (lo, hi)
            } else {
                (0.0, 1.0)
            }
        };
        let pad = |(lo, hi): (f64, f64), frac: f64| {
            let span = if hi > lo { hi - lo } else { lo.abs().max(1.0) };
            (lo - frac * span, hi + frac * span)
        };
        let x = pad(finite(&xs), 0.05);
        let y = self.y_range.unwrap_or_else(|| pad(finite(&ys), 0.08));
        (x, y)
    }

    pub fn to_svg(&self) -> String {
        let ((x0, x1), (y0, y1)) = self.bounds();
        let pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let sx = |x: f64| MARGIN_LEFT + (self.x_value(x) - x0) / (x1 - x0) * pw;
        let sy = |y: f64| MARGIN_TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            MARGIN_LEFT + pw / 2.0,
            escape(&self.title)
        );
        if let Some((lo, hi)) = self.band {
            let (top, bottom) = (sy(hi.min(y1)), sy(lo.max(y0)));
            let _ = writeln!(
                svg,
                r##"<rect x="{MARGIN_LEFT:.1}" y="{top:.1}" width="{pw:.1}" height="{:.1}" fill="#d9d9d9" opacity="0.6"/>"##,
                (bottom - top).max(0.0)
            );
        }
        if let Some(r) = self.reference {
            let y = sy(r);
            let _ = writeln!(
                svg,
                r##"<line x1="{MARGIN_LEFT:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#555" stroke-dasharray="2,3"/>"##,
                MARGIN_LEFT + pw
            );
        }
        let _ = writeln!(
            svg,
            r#"<rect x="{MARGIN_LEFT:.1}" y="{MARGIN_TOP:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="black"/>"#
        );

        for i in 0..=5 {
            let v = y0 + (y1 - y0) * i as f64 / 5.0;
            let y = sy(v);
            let _ = writeln!(
                svg,
                r#"<line x1="{:.1}" y1="{y:.1}" x2="{MARGIN_LEFT:.1}" y2="{y:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                MARGIN_LEFT - 4.0,
                MARGIN_LEFT - 7.0,
                y + 4.0,
                tick_label(v)
            );
        }
        let x_ticks: Vec<(f64, String)> = match &self.x_ticks {
            Some(t) => t.clone(),
            None if self.log2_x => {
                let mut v = Vec::new();
                let mut e = x0.ceil() as i32;
                while (e as f64) <= x1 {
                    v.push((2f64.powi(e), tick_label(2f64.powi(e))));
                    e += 1;
                }
                v
            }
            None => (0..=5)
                .map(|i| {
                    let v = x0 + (x1 - x0) * i as f64 / 5.0;
                    (v, tick_label(v))
                })
                .collect(),
        };
        for (v, label) in &x_ticks {
            let x = sx(*v);
            let base = MARGIN_TOP + ph;
            let _ = writeln!(
                svg,
                r#"<line x1="{x:.1}" y1="{base:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                base + 4.0,
                base + 18.0,
                escape(label)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + pw / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
            MARGIN_TOP + ph / 2.0,
            MARGIN_TOP + ph / 2.0,
            escape(&self.y_label)
        );

        let n_bar_series = self.series.iter().filter(|s| s.style == Style::Bars).count().max(1);
        let mut bar_slot = 0;
        for (si, s) in self.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            let dash = if s.dashed { r#" stroke-dasharray="6,4""# } else { "" };
            let pts: Vec<(f64, f64)> = s
                .points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .map(|&(x, y)| (sx(x), sy(y)))
                .collect();
            match s.style {
                Style::Line => {
                    let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
                    let _ = writeln!(
                        svg,
                        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                        path.join(" ")
                    );
                }
                Style::Points => {}
                Style::Bars => {
                    let slot_w = pw / (x_ticks.len().max(s.points.len()).max(1) as f64 * 1.5);
                    let w = slot_w / n_bar_series as f64;
                    let offset = (bar_slot as f64 - (n_bar_series as f64 - 1.0) / 2.0) * w;
                    for &(x, y) in &pts {
                        let zero = sy(0.0_f64.clamp(y0, y1));
                        let (top, h) = if y < zero { (y, zero - y) } else { (zero, y - zero) };
                        let _ = writeln!(
                            svg,
                            r#"<rect x="{:.1}" y="{top:.1}" width="{:.1}" height="{h:.1}" fill="{color}" opacity="0.8"/>"#,
                            x + offset - w / 2.0,
                            w * 0.9
                        );
                    }
                    bar_slot += 1;
                }
            }
            if s.style != Style::Bars {
                for (x, y) in &pts {
                    let _ = writeln!(svg, r#"<circle cx="{x:.1}" cy="{y:.1}" r="3" fill="{color}"/>"#);
                }
            }
            if let Some(errs) = &s.errors {
                for (&(x, _), &(lo, hi)) in s.points.iter().zip(errs) {
                    if !(x.is_finite() && lo.is_finite() && hi.is_finite()) {
                        continue;
                    }
                    let (px, a, b) = (sx(x), sy(lo), sy(hi));
                    let _ = writeln!(
                        svg,
                        r#"<line x1="{px:.1}" y1="{a:.1}" x2="{px:.1}" y2="{b:.1}" stroke="{color}"/><line x1="{:.1}" y1="{a:.1}" x2="{:.1}" y2="{a:.1}" stroke="{color}"/><line x1="{:.1}" y1="{b:.1}" x2="{:.1}" y2="{b:.1}" stroke="{color}"/>"#,
                        px - 3.0,
                        px + 3.0,
                        px - 3.0,
                        px + 3.0
                    );
                }
            }
            let ly = MARGIN_TOP + 10.0 + 18.0 * si as f64;
            let lx = MARGIN_LEFT + pw + 12.0;
            let _ = writeln!(
                svg,
                r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="3"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
                lx + 18.0,
                lx + 24.0,
                ly + 4.0,
                escape(&s.name)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

/// Scatter of 2D points; `groups` selects the color of each point.
pub fn scatter(title: &str, x_label: &str, y_label: &str, groups: &[(&str, Vec<(f64, f64)>)]) -> String {
    let mut chart = Chart::new(title, x_label, y_label);
    for (name, pts) in groups {
        chart.series.push(Series::new(*name, pts.clone(), Style::Points));
    }
    chart.to_svg()
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_all_styles() {
        let mut c = Chart::new("t <1>", "x", "y");
        c.log2_x = true;
        c.band = Some((0.99, 1.01));
        c.series.push(Series::new("a", vec![(2.0, 0.9), (4.0, 1.0)], Style::Line).with_errors(vec![(0.85, 0.95), (0.99, 1.0)]));
        c.series.push(Series::new("b", vec![(2.0, 0.5), (8.0, f64::NAN)], Style::Bars));
        let svg = c.to_svg();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("t &lt;1&gt;"));
        assert!(svg.contains("polyline"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn empty_chart_is_valid() {
        let svg = Chart::new("e", "x", "y").to_svg();
        assert!(svg.contains("</svg>"));
    }
}
