//! Minimal SVG 1.1 line/scatter plots. Output is a pure function of the
//! plotted records, so figures regenerate byte-identically from the CSVs.

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 62.0;
const MARGIN_RIGHT: f64 = 18.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 48.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Marker {
    Circle,
    Triangle,
}

#[derive(Clone, Debug)]
enum Series {
    Line { points: Vec<(f64, f64)>, colour: &'static str, label: String },
    Scatter { points: Vec<(f64, f64)>, marker: Marker, colour: &'static str, label: String },
}

/// A single-panel plot with fixed margins and linear axes.
#[derive(Clone, Debug)]
pub struct Plot {
    title: String,
    x_label: String,
    y_label: String,
    series: Vec<Series>,
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            series: Vec::new(),
        }
    }

    pub fn line(mut self, label: &str, colour: &'static str, points: Vec<(f64, f64)>) -> Self {
        self.series.push(Series::Line { points, colour, label: label.to_string() });
        self
    }

    pub fn scatter(
        mut self,
        label: &str,
        colour: &'static str,
        marker: Marker,
        points: Vec<(f64, f64)>,
    ) -> Self {
        self.series.push(Series::Scatter { points, marker, colour, label: label.to_string() });
        self
    }

    fn bounds(&self) -> ((f64, f64), (f64, f64)) {
        let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
        let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
        for series in &self.series {
            let points = match series {
                Series::Line { points, .. } | Series::Scatter { points, .. } => points,
            };
            for &(x, y) in points {
                xs = (xs.0.min(x), xs.1.max(x));
                ys = (ys.0.min(y), ys.1.max(y));
            }
        }
        if !xs.0.is_finite() {
            xs = (0.0, 1.0);
            ys = (0.0, 1.0);
        }
        if xs.0 == xs.1 {
            xs = (xs.0 - 0.5, xs.1 + 0.5);
        }
        if ys.0 == ys.1 {
            ys = (ys.0 - 0.5, ys.1 + 0.5);
        }
        // A little headroom on the value axis.
        let pad = 0.05 * (ys.1 - ys.0);
        (xs, (ys.0 - pad, ys.1 + pad))
    }

    pub fn render(&self) -> String {
        let ((x0, x1), (y0, y1)) = self.bounds();
        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let sx = move |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
        let sy = move |y: f64| MARGIN_TOP + (1.0 - (y - y0) / (y1 - y0)) * plot_h;

        let mut out = String::with_capacity(16 * 1024);
        out.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" \
             width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
        ));
        out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"14\">{}</text>\n",
            MARGIN_LEFT + plot_w / 2.0,
            escape(&self.title)
        ));

        // Frame and ticks.
        out.push_str(&format!(
            "<rect x=\"{MARGIN_LEFT:.1}\" y=\"{MARGIN_TOP:.1}\" width=\"{plot_w:.1}\" \
             height=\"{plot_h:.1}\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n"
        ));
        for k in 0..=5 {
            let fx = x0 + (x1 - x0) * k as f64 / 5.0;
            let px = sx(fx);
            out.push_str(&format!(
                "<line x1=\"{px:.2}\" y1=\"{:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
                MARGIN_TOP + plot_h,
                MARGIN_TOP + plot_h + 5.0
            ));
            out.push_str(&format!(
                "<text x=\"{px:.2}\" y=\"{:.2}\" text-anchor=\"middle\" \
                 font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
                MARGIN_TOP + plot_h + 18.0,
                tick_label(fx)
            ));
            let fy = y0 + (y1 - y0) * k as f64 / 5.0;
            let py = sy(fy);
            out.push_str(&format!(
                "<line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{MARGIN_LEFT:.1}\" y2=\"{py:.2}\" \
                 stroke=\"black\"/>\n",
                MARGIN_LEFT - 5.0
            ));
            out.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-family=\"sans-serif\" \
                 font-size=\"11\">{}</text>\n",
                MARGIN_LEFT - 8.0,
                py + 4.0,
                tick_label(fy)
            ));
        }
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"12\">{}</text>\n",
            MARGIN_LEFT + plot_w / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        ));
        out.push_str(&format!(
            "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"12\" transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
            MARGIN_TOP + plot_h / 2.0,
            MARGIN_TOP + plot_h / 2.0,
            escape(&self.y_label)
        ));

        // Series.
        for series in &self.series {
            match series {
                Series::Line { points, colour, .. } => {
                    let path: Vec<String> = points
                        .iter()
                        .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                        .collect();
                    out.push_str(&format!(
                        "<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"1.5\" \
                         points=\"{}\"/>\n",
                        path.join(" ")
                    ));
                }
                Series::Scatter { points, marker, colour, .. } => {
                    for &(x, y) in points {
                        let (px, py) = (sx(x), sy(y));
                        match marker {
                            Marker::Circle => out.push_str(&format!(
                                "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"3\" fill=\"none\" \
                                 stroke=\"{colour}\" stroke-width=\"1.2\"/>\n"
                            )),
                            Marker::Triangle => out.push_str(&format!(
                                "<path d=\"M {:.2} {:.2} L {:.2} {:.2} L {:.2} {:.2} Z\" \
                                 fill=\"none\" stroke=\"{colour}\" stroke-width=\"1.2\"/>\n",
                                px,
                                py - 3.6,
                                px - 3.2,
                                py + 2.6,
                                px + 3.2,
                                py + 2.6
                            )),
                        }
                    }
                }
            }
        }

        // Legend.
        let mut ly = MARGIN_TOP + 14.0;
        for series in &self.series {
            let (label, colour) = match series {
                Series::Line { label, colour, .. } => (label, colour),
                Series::Scatter { label, colour, .. } => (label, colour),
            };
            if label.is_empty() {
                continue;
            }
            out.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{ly:.1}\" font-family=\"sans-serif\" font-size=\"11\" \
                 fill=\"{colour}\">{}</text>\n",
                MARGIN_LEFT + plot_w - 150.0,
                escape(label)
            ));
            ly += 14.0;
        }

        out.push_str("</svg>\n");
        out
    }
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

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_is_deterministic_and_wellformed() {
        let plot = Plot::new("demo", "z", "occupancy")
            .line("limit", "black", vec![(0.0, 0.1), (5.0, 0.4), (10.0, 0.1)])
            .scatter("sim", "steelblue", Marker::Circle, vec![(2.0, 0.3)])
            .scatter("sim2", "firebrick", Marker::Triangle, vec![(4.0, 0.2)]);
        let a = plot.render();
        let b = plot.render();
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.ends_with("</svg>\n"));
        assert!(a.contains("polyline"));
        assert!(a.contains("circle"));
    }

    #[test]
    fn degenerate_ranges_do_not_divide_by_zero() {
        let plot = Plot::new("flat", "t", "s").line("", "black", vec![(1.0, 0.5), (2.0, 0.5)]);
        let svg = plot.render();
        assert!(svg.contains("polyline"));
        assert!(!svg.contains("NaN"));
    }
}
