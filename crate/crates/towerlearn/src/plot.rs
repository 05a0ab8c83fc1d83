//! Minimal line and bar charts rendered straight to [`Image`]s.

use towerlearn_core::env::Theme;

use crate::image::{Image, Rgb, BLACK, WHITE};

const MARGIN_LEFT: i64 = 44;
const MARGIN_RIGHT: i64 = 12;
const MARGIN_TOP: i64 = 24;
const MARGIN_BOTTOM: i64 = 28;
const BAND_ALPHA: f64 = 0.2;

pub fn theme_color(theme: Theme) -> Rgb {
    match theme {
        Theme::Ancient => [200, 120, 40],
        Theme::Industrial => [110, 110, 110],
        Theme::Modern => [40, 120, 220],
        Theme::Moorish => [30, 160, 90],
        Theme::Future => [170, 40, 200],
    }
}

/// A curve with a band from `lower` to `upper` around each point.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub color: Rgb,
    /// `(x, y, lower, upper)`, sorted by `x`.
    pub points: Vec<(f64, f64, f64, f64)>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    width: i64,
    height: i64,
}

impl Frame {
    fn px(&self, x: f64) -> i64 {
        let t = if self.x1 > self.x0 { (x - self.x0) / (self.x1 - self.x0) } else { 0.5 };
        MARGIN_LEFT + (t * (self.width - MARGIN_LEFT - MARGIN_RIGHT - 1) as f64).round() as i64
    }

    fn py(&self, y: f64) -> i64 {
        let t = if self.y1 > self.y0 { (y - self.y0) / (self.y1 - self.y0) } else { 0.5 };
        self.height - MARGIN_BOTTOM - 1 - (t * (self.height - MARGIN_TOP - MARGIN_BOTTOM - 1) as f64).round() as i64
    }
}

fn label(v: f64) -> String {
    if v.abs() >= 100.0 || v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.1}")
    }
}

fn axes(img: &mut Image, f: &Frame, title: &str) {
    let (left, bottom) = (MARGIN_LEFT - 1, f.height - MARGIN_BOTTOM);
    img.line((left, MARGIN_TOP), (left, bottom), BLACK);
    img.line((left, bottom), (f.width - MARGIN_RIGHT, bottom), BLACK);
    for k in 0..=4 {
        let y = f.y0 + (f.y1 - f.y0) * f64::from(k) / 4.0;
        let py = f.py(y);
        img.line((left - 3, py), (left, py), BLACK);
        img.text(2, py - 2, &label(y), 1, BLACK);
        let x = f.x0 + (f.x1 - f.x0) * f64::from(k) / 4.0;
        let px = f.px(x);
        img.line((px, bottom), (px, bottom + 3), BLACK);
        img.text(px - 6, bottom + 6, &label(x), 1, BLACK);
    }
    img.text(MARGIN_LEFT, 6, title, 2, BLACK);
}

/// Curves with shaded bands; the y range always includes 0.
pub fn line_plot(series: &[Series], title: &str, width: usize, height: usize) -> Image {
    let mut img = Image::new(width, height, WHITE);
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
    for &(x, y, lo, hi) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(lo).min(y);
        y1 = y1.max(hi).max(y);
    }
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if !(y1 > y0) {
        y1 = y0 + 1.0;
    }
    let f = Frame { x0, x1, y0, y1, width: width as i64, height: height as i64 };
    for s in series {
        for w in s.points.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (pa, pb) = (f.px(a.0), f.px(b.0));
            for px in pa..=pb {
                let t = if pb > pa { (px - pa) as f64 / (pb - pa) as f64 } else { 0.0 };
                let lo = a.2 + t * (b.2 - a.2);
                let hi = a.3 + t * (b.3 - a.3);
                let (top, bot) = (f.py(hi), f.py(lo));
                img.blend_rect(px, top, 1, bot - top + 1, s.color, BAND_ALPHA);
            }
        }
        if let [p] = s.points.as_slice() {
            let (top, bot) = (f.py(p.3), f.py(p.2));
            img.blend_rect(f.px(p.0) - 2, top, 5, bot - top + 1, s.color, BAND_ALPHA);
        }
    }
    for s in series {
        for w in s.points.windows(2) {
            img.line((f.px(w[0].0), f.py(w[0].1)), (f.px(w[1].0), f.py(w[1].1)), s.color);
        }
        for p in &s.points {
            img.fill_rect(f.px(p.0) - 1, f.py(p.1) - 1, 3, 3, s.color);
        }
    }
    axes(&mut img, &f, title);
    legend(&mut img, series.iter().map(|s| (s.label.as_str(), s.color)));
    img
}

fn legend<'a>(img: &mut Image, entries: impl Iterator<Item = (&'a str, Rgb)>) {
    let mut y = MARGIN_TOP + 4;
    let x = img.width as i64 - MARGIN_RIGHT - 64;
    for (name, color) in entries {
        img.fill_rect(x, y, 6, 5, color);
        img.text(x + 9, y, name, 1, BLACK);
        y += 8;
    }
}

/// Grouped bars: one group per bin, one bar per series.
pub fn bar_chart(series: &[(&str, Rgb, &[usize])], title: &str, width: usize, height: usize) -> Image {
    let mut img = Image::new(width, height, WHITE);
    let bins = series.iter().map(|s| s.2.len()).max().unwrap_or(0);
    let max = series.iter().flat_map(|s| s.2.iter()).copied().max().unwrap_or(0).max(1) as f64;
    let f = Frame { x0: 0.0, x1: bins.max(1) as f64, y0: 0.0, y1: max, width: width as i64, height: height as i64 };
    let group = (f.px(1.0) - f.px(0.0)).max(1);
    let bar = (group / (series.len() as i64 + 1)).max(1);
    for (k, (_, color, counts)) in series.iter().enumerate() {
        for (bin, &c) in counts.iter().enumerate() {
            let x = f.px(bin as f64) + bar / 2 + k as i64 * bar;
            let top = f.py(c as f64);
            img.fill_rect(x, top, bar, f.py(0.0) - top + 1, *color);
        }
    }
    axes(&mut img, &f, title);
    legend(&mut img, series.iter().map(|s| (s.0, s.1)));
    img
}
