//! CSV and SVG output builders.
//!
//! All emitters return strings; callers decide where bytes go. CSV files
//! carry `#`-prefixed metadata lines (version, seed, configuration) before
//! the header row so every artifact is self-describing. Numbers are
//! formatted with enough digits to round-trip doubles losslessly.

/// Formats with `sig` significant digits in scientific notation.
pub fn fmt_sig(x: f64, sig: usize) -> String {
    format!("{:.*e}", sig.saturating_sub(1), x)
}

/// Default significant digits for seconds/meters columns.
pub const SIG_DEFAULT: usize = 17;
/// Significant digits for raw timestamp logs.
pub const SIG_TIMESTAMP: usize = 18;

/// Comma-separated table with `#` metadata lines.
pub struct CsvBuilder {
    sig: usize,
    out: String,
    columns: usize,
}

impl CsvBuilder {
    pub fn new(sig: usize) -> Self {
        CsvBuilder { sig, out: String::new(), columns: 0 }
    }

    /// Adds one `# key: value` metadata line. Must precede the header.
    pub fn meta(&mut self, key: &str, value: &str) -> &mut Self {
        self.out.push_str("# ");
        self.out.push_str(key);
        self.out.push_str(": ");
        self.out.push_str(value);
        self.out.push('\n');
        self
    }

    pub fn header(&mut self, names: &[&str]) -> &mut Self {
        self.columns = names.len();
        self.out.push_str(&names.join(","));
        self.out.push('\n');
        self
    }

    /// Adds one row of already-formatted cells.
    pub fn row(&mut self, cells: &[String]) -> &mut Self {
        debug_assert_eq!(cells.len(), self.columns, "row width mismatch");
        self.out.push_str(&cells.join(","));
        self.out.push('\n');
        self
    }

    pub fn num(&self, x: f64) -> String {
        fmt_sig(x, self.sig)
    }

    pub fn finish(self) -> String {
        self.out
    }
}

/// Minimal self-contained SVG canvas: fixed pixel viewport, inline styles,
/// no external references.
pub struct SvgCanvas {
    width: f64,
    height: f64,
    body: String,
}

impl SvgCanvas {
    pub fn new(width: f64, height: f64) -> Self {
        let mut c = SvgCanvas { width, height, body: String::new() };
        c.rect(0.0, 0.0, width, height, "#ffffff", "none");
        c
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, stroke: &str) {
        self.body.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{fill}\" stroke=\"{stroke}\"/>\n"
        ));
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        self.body.push_str(&format!(
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"{stroke}\" stroke-width=\"{width}\"/>\n"
        ));
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, width: f64, dash: Option<&str>) {
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let dash = dash.map(|d| format!(" stroke-dasharray=\"{d}\"")).unwrap_or_default();
        self.body.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{width}\"{dash}/>\n",
            coords.join(" ")
        ));
    }

    pub fn circle(&mut self, cx: f64, cy: f64, r: f64, fill: &str) {
        self.body.push_str(&format!(
            "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{r:.2}\" fill=\"{fill}\"/>\n"
        ));
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, s: &str) {
        let s = s.replace('&', "&amp;").replace('<', "&lt;");
        self.body.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"{size}\" font-family=\"sans-serif\" text-anchor=\"{anchor}\">{s}</text>\n"
        ));
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n{body}</svg>\n",
            w = self.width,
            h = self.height,
            body = self.body
        )
    }
}

/// Maps data coordinates to pixel coordinates inside a margin box, with the
/// y axis flipped so larger values draw higher.
#[derive(Clone, Copy, Debug)]
pub struct PlotFrame {
    pub x0: f64,
    pub y0: f64,
    pub w: f64,
    pub h: f64,
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl PlotFrame {
    pub fn px(&self, x: f64) -> f64 {
        self.x0 + (x - self.xmin) / (self.xmax - self.xmin) * self.w
    }

    pub fn py(&self, y: f64) -> f64 {
        self.y0 + self.h - (y - self.ymin) / (self.ymax - self.ymin) * self.h
    }

    pub fn draw_axes(&self, canvas: &mut SvgCanvas, xlabel: &str, ylabel: &str) {
        canvas.line(self.x0, self.y0 + self.h, self.x0 + self.w, self.y0 + self.h, "#000000", 1.0);
        canvas.line(self.x0, self.y0, self.x0, self.y0 + self.h, "#000000", 1.0);
        canvas.text(self.x0 + self.w / 2.0, self.y0 + self.h + 32.0, 12.0, "middle", xlabel);
        canvas.text(self.x0 - 40.0, self.y0 - 8.0, 12.0, "start", ylabel);
    }
}
