//! SVG and ASCII renderings of a p-value plot.
//!
//! Both show the sorted p-values against rank, the dashed uniform reference
//! line from `(0, 0)` to `(n, n/(n+1))`, a horizontal rule at `alpha`, and
//! the classification label as caption. Output depends only on the inputs.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::pvalue_plot::{PValuePlot, PlotClassification};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotFormat {
    Svg,
    Ascii,
}

impl FromStr for PlotFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "svg" => Ok(PlotFormat::Svg),
            "ascii" | "text" => Ok(PlotFormat::Ascii),
            other => Err(Error::domain(format!("unknown plot format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RenderOptions {
    pub format: PlotFormat,
    pub alpha: f64,
    pub title: Option<String>,
    /// ANSI styling of ASCII markers.
    pub color: bool,
}

impl RenderOptions {
    pub fn new(format: PlotFormat, alpha: f64) -> Self {
        RenderOptions {
            format,
            alpha,
            title: None,
            color: false,
        }
    }
}

pub mod layout {
    pub const WIDTH: f64 = 640.0;
    pub const HEIGHT: f64 = 480.0;
    pub const LEFT: f64 = 70.0;
    pub const RIGHT: f64 = 30.0;
    pub const TOP: f64 = 50.0;
    pub const BOTTOM: f64 = 70.0;
    pub const MARKER_RADIUS: f64 = 4.0;

    pub const ASCII_ROWS: usize = 20;
    pub const ASCII_COLS: usize = 60;
}

pub fn render_plot(plot: &PValuePlot, class: &PlotClassification, opts: &RenderOptions) -> Result<Vec<u8>> {
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(Error::domain("alpha must lie in (0, 1)"));
    }
    let text = match opts.format {
        PlotFormat::Svg => svg(plot, class, opts),
        PlotFormat::Ascii => ascii(plot, class, opts),
    };
    Ok(text.into_bytes())
}

/// Pixel position of data point `(rank, p)` in the SVG.
pub fn svg_point(n: usize, rank: f64, p: f64) -> (f64, f64) {
    use layout::*;
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x = LEFT + rank / (n + 1) as f64 * plot_w;
    let y = HEIGHT - BOTTOM - p * plot_h;
    (x, y)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn x_tick_step(n: usize) -> usize {
    let raw = (n as f64 / 10.0).ceil().max(1.0) as usize;
    [1, 2, 5, 10, 20, 25, 50, 100, 200, 250, 500, 1000]
        .into_iter()
        .find(|&s| s >= raw)
        .unwrap_or(raw)
}

fn svg(plot: &PValuePlot, class: &PlotClassification, opts: &RenderOptions) -> String {
    use layout::*;
    let n = plot.n();
    let mut s = String::new();
    let (x0, y0) = svg_point(n, 0.0, 0.0);
    let (x1, y1) = svg_point(n, (n + 1) as f64, 1.0);

    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    if let Some(title) = &opts.title {
        let _ = writeln!(
            s,
            r#"<text class="title" x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        );
    }
    let _ = writeln!(
        s,
        r#"<g class="axes" stroke="black" stroke-width="1"><line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}"/><line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}"/></g>"#
    );

    let _ = write!(s, r#"<g class="ticks" text-anchor="middle">"#);
    for k in 0..=4 {
        let p = k as f64 / 4.0;
        let (_, y) = svg_point(n, 0.0, p);
        let _ = write!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{p:.2}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0
        );
    }
    let step = x_tick_step(n);
    let mut r = 0;
    while r <= n {
        let (x, _) = svg_point(n, r as f64, 0.0);
        let _ = write!(
            s,
            r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}">{r}</text>"#,
            y0 + 5.0,
            y0 + 18.0
        );
        r += step;
    }
    let _ = writeln!(s, "</g>");

    let (rx, ry) = svg_point(n, n as f64, n as f64 / (n + 1) as f64);
    let _ = writeln!(
        s,
        r#"<line class="reference" x1="{x0:.2}" y1="{y0:.2}" x2="{rx:.2}" y2="{ry:.2}" stroke="gray" stroke-width="1.5" stroke-dasharray="6 4"/>"#
    );
    let (_, ay) = svg_point(n, 0.0, opts.alpha);
    let _ = writeln!(
        s,
        r#"<line class="alpha-rule" x1="{x0:.2}" y1="{ay:.2}" x2="{x1:.2}" y2="{ay:.2}" stroke="firebrick" stroke-width="1"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text class="alpha-label" x="{:.2}" y="{:.2}" text-anchor="end" fill="firebrick">alpha = {}</text>"#,
        x1 - 4.0,
        ay - 4.0,
        opts.alpha
    );

    let _ = writeln!(
        s,
        r#"<g class="points" fill="steelblue" stroke="black" stroke-width="0.5">"#
    );
    for pt in plot.points() {
        let (cx, cy) = svg_point(n, pt.rank as f64, pt.p);
        let _ = writeln!(
            s,
            r#"<circle class="point" cx="{cx:.2}" cy="{cy:.2}" r="{MARKER_RADIUS}"/>"#
        );
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(
        s,
        r#"<text class="axis-label" x="{:.2}" y="{:.2}" text-anchor="middle">rank</text>"#,
        (x0 + x1) / 2.0,
        y0 + 40.0
    );
    let _ = writeln!(
        s,
        r#"<text class="axis-label" x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">p-value</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text class="caption" x="{:.2}" y="{:.2}" text-anchor="middle" font-weight="bold">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        class.label
    );
    s.push_str("</svg>\n");
    s
}

fn ascii(plot: &PValuePlot, class: &PlotClassification, opts: &RenderOptions) -> String {
    use layout::{ASCII_COLS as COLS, ASCII_ROWS as ROWS};
    let n = plot.n();
    let mut grid = vec![vec![' '; COLS]; ROWS];
    let row_of = |p: f64| ((1.0 - p) * (ROWS - 1) as f64).round() as usize;
    let col_of = |x: f64| (x / (n + 1) as f64 * (COLS - 1) as f64).round() as usize;

    let alpha_row = row_of(opts.alpha);
    for cell in grid[alpha_row].iter_mut() {
        *cell = '-';
    }
    for c in 0..COLS {
        let x = c as f64 / (COLS - 1) as f64 * (n + 1) as f64;
        if x <= n as f64 {
            grid[row_of(x / (n + 1) as f64)][c] = '.';
        }
    }
    for pt in plot.points() {
        grid[row_of(pt.p)][col_of(pt.rank as f64)] = 'o';
    }

    let mut s = String::new();
    if let Some(title) = &opts.title {
        let _ = writeln!(s, "{title}");
    }
    let _ = writeln!(s, "p-value");
    for (i, row) in grid.iter().enumerate() {
        let tick = if i == 0 {
            "1.00".to_string()
        } else if i == ROWS - 1 {
            "0.00".to_string()
        } else if i == alpha_row {
            format!("{:.2}", opts.alpha)
        } else {
            String::new()
        };
        let _ = write!(s, "{tick:>5} |");
        for &ch in row {
            if ch == 'o' && opts.color {
                s.push_str("\x1b[1;34mo\x1b[0m");
            } else {
                s.push(ch);
            }
        }
        s.push('\n');
    }
    let _ = writeln!(s, "{:>5} +{}", "", "-".repeat(COLS));
    let _ = writeln!(s, "{:>5}  0{:>width$}", "", n + 1, width = COLS - 1);
    let _ = writeln!(s, "{:>5}  {:^COLS$}", "", "rank");
    let _ = writeln!(s, "legend: o p-value   . uniform reference   - alpha = {}", opts.alpha);
    let _ = writeln!(s, "classification: {}", class.label);
    s
}
