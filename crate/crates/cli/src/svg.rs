//! Minimal deterministic SVG charts. Coordinates are printed with two
//! decimals so output bytes depend only on the data.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 70.0;
const PALETTE: [&str; 6] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#b07aa1"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Canvas {
    out: String,
}

impl Canvas {
    fn new(title: &str) -> Self {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="28" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        );
        Canvas { out }
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(self.out, r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}">{}</text>"#, escape(s));
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.out,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
            w.max(0.0),
            h.max(0.0)
        );
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.out,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}"/>"#
        );
    }

    fn axes(&mut self, lo: f64, hi: f64) {
        let (x0, y0, y1) = (LEFT, HEIGHT - BOTTOM, TOP);
        self.line(x0, y0, WIDTH - RIGHT, y0, "black");
        self.line(x0, y0, x0, y1, "black");
        for k in 0..=4 {
            let v = lo + (hi - lo) * k as f64 / 4.0;
            let y = y0 - (y0 - y1) * k as f64 / 4.0;
            self.line(x0 - 4.0, y, x0, y, "black");
            self.text(x0 - 8.0, y + 4.0, "end", &format!("{v:.2}"));
        }
    }

    fn legend(&mut self, names: &[String]) {
        for (i, n) in names.iter().enumerate() {
            let x = LEFT + 130.0 * i as f64;
            self.rect(x, HEIGHT - 22.0, 10.0, 10.0, PALETTE[i % PALETTE.len()]);
            self.text(x + 14.0, HEIGHT - 13.0, "start", n);
        }
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

fn y_of(v: f64, lo: f64, hi: f64) -> f64 {
    let span = if hi > lo { hi - lo } else { 1.0 };
    HEIGHT - BOTTOM - (HEIGHT - BOTTOM - TOP) * (v - lo) / span
}

fn slot(i: usize, n: usize) -> (f64, f64) {
    let w = (WIDTH - LEFT - RIGHT) / n.max(1) as f64;
    (LEFT + w * i as f64, w)
}

/// One line through `values`, labelled along the x axis.
pub fn line_chart(title: &str, labels: &[String], values: &[f64]) -> String {
    let mut c = Canvas::new(title);
    let hi = values.iter().cloned().fold(0.0, f64::max);
    c.axes(0.0, hi);
    let pts: Vec<String> = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let (x, w) = slot(i, values.len());
            format!("{:.2},{:.2}", x + w / 2.0, y_of(*v, 0.0, hi))
        })
        .collect();
    let _ = writeln!(
        c.out,
        r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
        PALETTE[0],
        pts.join(" ")
    );
    for (i, l) in labels.iter().enumerate() {
        let (x, w) = slot(i, labels.len());
        c.text(x + w / 2.0, HEIGHT - BOTTOM + 16.0, "middle", l);
    }
    c.finish()
}

/// A grid of cells shaded by value, annotated with the value.
pub fn heat_grid(title: &str, rows: &[String], cols: &[String], values: &[Vec<f64>], decimals: usize) -> String {
    let mut c = Canvas::new(title);
    let flat = values.iter().flatten().cloned();
    let (lo, hi) = flat.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let cw = (WIDTH - LEFT - RIGHT) / cols.len().max(1) as f64;
    let ch = (HEIGHT - TOP - BOTTOM) / rows.len().max(1) as f64;
    for (r, name) in rows.iter().enumerate() {
        let y = TOP + ch * r as f64;
        c.text(LEFT - 8.0, y + ch / 2.0 + 4.0, "end", name);
        for (k, v) in values[r].iter().enumerate() {
            let x = LEFT + cw * k as f64;
            let t = (v - lo) / span;
            let shade = (255.0 - 200.0 * t).round() as u8;
            c.rect(x, y, cw, ch, &format!("rgb({shade},{shade},255)"));
            if ch >= 12.0 && cw >= 24.0 {
                c.text(x + cw / 2.0, y + ch / 2.0 + 4.0, "middle", &format!("{v:.decimals$}"));
            }
        }
    }
    for (k, name) in cols.iter().enumerate() {
        c.text(LEFT + cw * (k as f64 + 0.5), HEIGHT - BOTTOM + 16.0, "middle", name);
    }
    c.finish()
}

/// Box summaries from `[min, q1, median, q3, max]` per group.
pub fn box_summary(title: &str, groups: &[(String, [f64; 5])]) -> String {
    let mut c = Canvas::new(title);
    let lo = groups.iter().map(|g| g.1[0]).fold(f64::INFINITY, f64::min).min(0.0);
    let hi = groups.iter().map(|g| g.1[4]).fold(0.0, f64::max);
    c.axes(lo, hi);
    for (i, (name, q)) in groups.iter().enumerate() {
        let (x, w) = slot(i, groups.len());
        let mid = x + w / 2.0;
        let bw = (w * 0.5).min(40.0);
        let color = PALETTE[i % PALETTE.len()];
        c.line(mid, y_of(q[0], lo, hi), mid, y_of(q[4], lo, hi), "black");
        c.rect(mid - bw / 2.0, y_of(q[3], lo, hi), bw, y_of(q[1], lo, hi) - y_of(q[3], lo, hi), color);
        c.line(mid - bw / 2.0, y_of(q[2], lo, hi), mid + bw / 2.0, y_of(q[2], lo, hi), "black");
        c.text(mid, HEIGHT - BOTTOM + 16.0 + 12.0 * (i % 2) as f64, "middle", name);
    }
    c.finish()
}

/// Bars per category stacked by series; `values[category][series]`.
pub fn stacked_bars(title: &str, categories: &[String], series: &[String], values: &[Vec<f64>]) -> String {
    let mut c = Canvas::new(title);
    let hi = values.iter().map(|v| v.iter().sum::<f64>()).fold(0.0, f64::max);
    c.axes(0.0, hi);
    for (i, cat) in categories.iter().enumerate() {
        let (x, w) = slot(i, categories.len());
        let bw = w * 0.6;
        let mut base = 0.0;
        for (s, v) in values[i].iter().enumerate() {
            let top = y_of(base + v, 0.0, hi);
            c.rect(x + (w - bw) / 2.0, top, bw, y_of(base, 0.0, hi) - top, PALETTE[s % PALETTE.len()]);
            base += v;
        }
        c.text(x + w / 2.0, HEIGHT - BOTTOM + 16.0, "middle", cat);
    }
    c.legend(series);
    c.finish()
}
