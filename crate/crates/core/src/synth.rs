//! Procedural figure generators.
//!
//! Renders the five singleton figure types, multi-panel montages with known
//! panel boxes, and labeled standalone/auxiliary fragments. Everything is a
//! pure function of the caller's RNG, so a seed reproduces a corpus exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::Rect;
use crate::labels::FigureLabel;
use crate::raster::LumaImage;

const WHITE: f64 = 1.0;
const INK: f64 = 0.0;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn stamp(img: &mut LumaImage, x: i64, y: i64, size: u32, v: f64) {
    let (x, y) = (x.max(0) as u32, y.max(0) as u32);
    img.fill_rect(&Rect::new(x, y, size, size), v);
}

fn line(img: &mut LumaImage, from: (i64, i64), to: (i64, i64), thick: u32, v: f64) {
    let (mut x, mut y) = from;
    let dx = (to.0 - x).abs();
    let dy = -(to.1 - y).abs();
    let sx = if x < to.0 { 1 } else { -1 };
    let sy = if y < to.1 { 1 } else { -1 };
    let mut err = dx + dy;
    let off = thick as i64 / 2;
    loop {
        stamp(img, x - off, y - off, thick, v);
        if x == to.0 && y == to.1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn outline(img: &mut LumaImage, r: Rect, thick: u32, v: f64) {
    if r.w == 0 || r.h == 0 {
        return;
    }
    let t = thick.min(r.w).min(r.h);
    img.fill_rect(&Rect::new(r.x, r.y, r.w, t), v);
    img.fill_rect(&Rect::new(r.x, r.bottom() - t, r.w, t), v);
    img.fill_rect(&Rect::new(r.x, r.y, t, r.h), v);
    img.fill_rect(&Rect::new(r.right() - t, r.y, t, r.h), v);
}

/// One letter-like mark made of two or three strokes inside `cell`.
fn glyph(img: &mut LumaImage, cell: Rect, rng: &mut impl Rng) {
    if cell.w < 2 || cell.h < 2 {
        img.fill_rect(&cell, INK);
        return;
    }
    let (x0, y0) = (cell.x as i64, cell.y as i64);
    let (x1, y1) = (cell.right() as i64 - 1, cell.bottom() as i64 - 1);
    let pick = |rng: &mut dyn rand::RngCore| -> (i64, i64) {
        let pts = [(x0, y0), (x1, y0), (x0, y1), (x1, y1), ((x0 + x1) / 2, y0), ((x0 + x1) / 2, y1), (x0, (y0 + y1) / 2), (x1, (y0 + y1) / 2)];
        pts[rng.gen_range(0..pts.len())]
    };
    let strokes = rng.gen_range(2..=3);
    for _ in 0..strokes {
        let a = pick(rng);
        let b = pick(rng);
        line(img, a, b, 1, INK);
    }
}

/// A horizontal run of glyphs filling `area`; returns the covered extent.
fn text_run(img: &mut LumaImage, area: Rect, rng: &mut impl Rng) -> Option<Rect> {
    let gh = area.h.min(9);
    if gh < 3 || area.w < 4 {
        return None;
    }
    let y = area.y + (area.h - gh) / 2;
    let mut x = area.x;
    let mut covered: Option<Rect> = None;
    while x + 3 <= area.right() {
        let word = rng.gen_range(1..=6);
        for _ in 0..word {
            let gw = rng.gen_range(3..=6).min(area.right() - x);
            if gw < 2 {
                break;
            }
            let cell = Rect::new(x, y, gw, gh);
            glyph(img, cell, rng);
            covered = Some(covered.map_or(cell, |c| c.union(&cell)));
            x += gw + 1;
            if x + 3 > area.right() {
                break;
            }
        }
        x += rng.gen_range(3..=6);
    }
    covered
}

/// Vertical glyph column, as used for rotated axis titles.
fn text_column(img: &mut LumaImage, area: Rect, rng: &mut impl Rng) {
    let gw = area.w.min(9);
    if gw < 3 || area.h < 4 {
        return;
    }
    let x = area.x + (area.w - gw) / 2;
    let mut y = area.y;
    while y + 3 <= area.bottom() {
        let gh = rng.gen_range(3..=6).min(area.bottom() - y);
        glyph(img, Rect::new(x, y, gw, gh), rng);
        y += gh + 1;
    }
}

fn render_equation(w: u32, h: u32, rng: &mut impl Rng) -> LumaImage {
    let mut img = LumaImage::new(w, h, WHITE);
    let lines = ((h.saturating_sub(6)) / 22).clamp(1, 3);
    let pitch = h / lines;
    for l in 0..lines {
        let top = l * pitch;
        let mid = top + pitch / 2;
        let margin = rng.gen_range(2..=(w / 8).max(2));
        let usable = Rect::new(margin, mid.saturating_sub(5), w.saturating_sub(2 * margin), 10.min(h));
        if rng.gen_bool(0.5) && pitch >= 20 && usable.w > 40 {
            // fraction: numerator over a bar over denominator, then the rest of the line
            let fw = rng.gen_range(20..=usable.w.min(80));
            let fx = usable.x + rng.gen_range(0..=(usable.w - fw) / 2);
            text_run(&mut img, Rect::new(fx + 2, mid.saturating_sub(10), fw - 4, 8), rng);
            img.fill_rect(&Rect::new(fx, mid, fw, 1), INK);
            text_run(&mut img, Rect::new(fx + 2, mid + 2, fw - 4, 8), rng);
            let eq_x = fx + fw + 4;
            if eq_x + 8 < usable.right() {
                img.fill_rect(&Rect::new(eq_x, mid - 2, 6, 1), INK);
                img.fill_rect(&Rect::new(eq_x, mid + 1, 6, 1), INK);
                text_run(&mut img, Rect::new(eq_x + 10, mid.saturating_sub(4), usable.right().saturating_sub(eq_x + 10), 8), rng);
            }
        } else {
            text_run(&mut img, usable, rng);
        }
    }
    img
}

fn render_diagram(w: u32, h: u32, rng: &mut impl Rng) -> LumaImage {
    let mut img = LumaImage::new(w, h, WHITE);
    let cols = (w / 70).clamp(1, 4);
    let rows = (h / 50).clamp(1, 3);
    let (cw, ch) = (w / cols, h / rows);
    let mut boxes = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if boxes.len() >= 2 && rng.gen_bool(0.25) {
                continue;
            }
            let bw = rng.gen_range((cw / 2).max(8)..=(cw * 3 / 4).max(9));
            let bh = rng.gen_range((ch / 3).max(8)..=(ch / 2).max(9));
            let bx = c * cw + (cw - bw.min(cw)) / 2;
            let by = r * ch + (ch - bh.min(ch)) / 2;
            let b = Rect::new(bx, by, bw.min(cw), bh.min(ch));
            outline(&mut img, b, rng.gen_range(1..=2), INK);
            if b.h > 10 && b.w > 10 {
                text_run(&mut img, Rect::new(b.x + 4, b.y + 3, b.w - 8, b.h - 6), rng);
            }
            boxes.push(b);
        }
    }
    for pair in boxes.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let from = ((a.x + a.w / 2) as i64, (a.y + a.h / 2) as i64);
        let to = ((b.x + b.w / 2) as i64, (b.y + b.h / 2) as i64);
        // connector from edge to edge
        let (sx, sy, ex, ey) = if a.bottom() <= b.y {
            (from.0, a.bottom() as i64, to.0, b.y as i64 - 1)
        } else if a.right() <= b.x {
            (a.right() as i64, from.1, b.x as i64 - 1, to.1)
        } else {
            (from.0, a.y as i64 - 1, to.0, b.bottom() as i64)
        };
        line(&mut img, (sx, sy), (ex, ey), 1, INK);
        stamp(&mut img, ex - 2, ey - 2, 4, INK);
    }
    img
}

fn render_photo(w: u32, h: u32, rng: &mut impl Rng) -> LumaImage {
    let gx = rng.gen_range(3..=8usize);
    let gy = rng.gen_range(3..=8usize);
    let lo = rng.gen_range(0.05..0.35);
    let hi = rng.gen_range(0.55..0.9);
    let grid: Vec<f64> = (0..(gx + 1) * (gy + 1)).map(|_| rng.gen_range(lo..hi)).collect();
    let grain = rng.gen_range(0.03..0.12);
    let mut data = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        let fy = y as f64 / h.max(2) as f64 * gy as f64;
        let (iy, ty) = ((fy.floor() as usize).min(gy - 1), fy - fy.floor().min((gy - 1) as f64));
        for x in 0..w {
            let fx = x as f64 / w.max(2) as f64 * gx as f64;
            let (ix, tx) = ((fx.floor() as usize).min(gx - 1), fx - fx.floor().min((gx - 1) as f64));
            let at = |i: usize, j: usize| grid[j * (gx + 1) + i];
            let top = at(ix, iy) * (1.0 - tx) + at(ix + 1, iy) * tx;
            let bot = at(ix, iy + 1) * (1.0 - tx) + at(ix + 1, iy + 1) * tx;
            let v = top * (1.0 - ty) + bot * ty + rng.gen_range(-grain..grain);
            data.push(v.clamp(0.0, 0.94));
        }
    }
    LumaImage::from_vec(w, h, data)
}

fn render_plot(w: u32, h: u32, rng: &mut impl Rng) -> LumaImage {
    let mut img = LumaImage::new(w, h, WHITE);
    let left = (w / 8).clamp(3, 22);
    let bottom = (h / 8).clamp(3, 18);
    let frame = Rect::new(left, 1, w.saturating_sub(left + 2).max(4), h.saturating_sub(bottom + 2).max(4));
    outline(&mut img, frame, rng.gen_range(2..=3), INK);
    let ticks = rng.gen_range(4..=8u32);
    for i in 1..ticks {
        let tx = frame.x + frame.w * i / ticks;
        img.fill_rect(&Rect::new(tx, frame.bottom(), 1, 3), INK);
        let ty = frame.y + frame.h * i / ticks;
        img.fill_rect(&Rect::new(frame.x.saturating_sub(3), ty, 3, 1), INK);
        if bottom >= 10 {
            text_run(&mut img, Rect::new(tx.saturating_sub(4), frame.bottom() + 4, 9, 6), rng);
        }
        if left >= 14 {
            text_run(&mut img, Rect::new(frame.x.saturating_sub(14), ty.saturating_sub(3), 9, 6), rng);
        }
    }
    let inner = Rect::new(frame.x + 4, frame.y + 4, frame.w.saturating_sub(8).max(1), frame.h.saturating_sub(8).max(1));
    match rng.gen_range(0..3) {
        0 => {
            // one or two smooth curves
            for _ in 0..rng.gen_range(1..=2) {
                let (a, f, p) = (rng.gen_range(0.2..0.45), rng.gen_range(0.5..3.0), rng.gen_range(0.0..6.28));
                let slope = rng.gen_range(-0.3..0.3);
                let mut prev = None;
                for x in 0..inner.w {
                    let t = x as f64 / inner.w as f64;
                    let v = 0.5 + a * (f * 6.28 * t + p).sin() + slope * (t - 0.5);
                    let y = inner.y as i64 + ((1.0 - v.clamp(0.0, 1.0)) * (inner.h - 1) as f64) as i64;
                    let pt = (inner.x as i64 + x as i64, y);
                    if let Some(q) = prev {
                        line(&mut img, q, pt, 2, INK);
                    }
                    prev = Some(pt);
                }
            }
        }
        1 => {
            let n = rng.gen_range(20..=80);
            let slope = rng.gen_range(-0.8..0.8);
            for _ in 0..n {
                let t: f64 = rng.gen_range(0.0..1.0);
                let v = (0.5 + slope * (t - 0.5) + rng.gen_range(-0.2..0.2)).clamp(0.0, 1.0);
                let x = inner.x as i64 + (t * (inner.w - 1) as f64) as i64;
                let y = inner.y as i64 + ((1.0 - v) * (inner.h - 1) as f64) as i64;
                stamp(&mut img, x - 1, y - 1, 3, INK);
            }
        }
        _ => {
            let bars = rng.gen_range(3..=10u32).min(inner.w / 3).max(1);
            let slot = inner.w / bars;
            let shade = rng.gen_range(0.2..0.6);
            for b in 0..bars {
                let bh = (rng.gen_range(0.15..1.0) * inner.h as f64) as u32;
                let bw = (slot * 2 / 3).max(1);
                img.fill_rect(&Rect::new(inner.x + b * slot + (slot - bw) / 2, inner.bottom() - bh, bw, bh), shade);
            }
        }
    }
    img
}

fn render_table(w: u32, h: u32, rng: &mut impl Rng) -> LumaImage {
    let mut img = LumaImage::new(w, h, WHITE);
    outline(&mut img, Rect::new(0, 0, w, h), 2, INK);
    let row_h = rng.gen_range(11..=16u32);
    let cols = (w / rng.gen_range(30..=60u32)).max(1);
    let col_w = w / cols;
    let vertical = rng.gen_bool(0.5);
    let mut y = 2;
    let mut r = 0;
    while y + row_h <= h.saturating_sub(2) {
        for c in 0..cols {
            let cell = Rect::new(c * col_w + 4, y + 2, col_w.saturating_sub(8), row_h.saturating_sub(4));
            let len = (cell.w as f64 * rng.gen_range(0.4..1.0)) as u32;
            text_run(&mut img, Rect::new(cell.x, cell.y, len, cell.h), rng);
        }
        y += row_h;
        if r == 0 || rng.gen_bool(0.6) {
            img.fill_rect(&Rect::new(2, y, w.saturating_sub(4), 1), INK);
        }
        r += 1;
    }
    if vertical {
        for c in 1..cols {
            img.fill_rect(&Rect::new(c * col_w, 2, 1, h.saturating_sub(4)), INK);
        }
    }
    img
}

/// Renders one figure of a singleton type at the given size.
///
/// # Panics
/// When `kind` is not one of the five singleton classes.
pub fn render(kind: FigureLabel, width: u32, height: u32, rng: &mut impl Rng) -> LumaImage {
    let (w, h) = (width.max(8), height.max(8));
    match kind {
        FigureLabel::Equation => render_equation(w, h, rng),
        FigureLabel::Diagram => render_diagram(w, h, rng),
        FigureLabel::Photo => render_photo(w, h, rng),
        FigureLabel::Plot => render_plot(w, h, rng),
        FigureLabel::Table => render_table(w, h, rng),
        other => panic!("no generator for {other}"),
    }
}

/// Renders with a kind-typical random size.
pub fn random_singleton(kind: FigureLabel, rng: &mut impl Rng) -> LumaImage {
    let (w, h) = match kind {
        FigureLabel::Equation => (rng.gen_range(180..=420), rng.gen_range(30..=90)),
        FigureLabel::Table => (rng.gen_range(180..=400), rng.gen_range(100..=320)),
        _ => (rng.gen_range(140..=380), rng.gen_range(110..=320)),
    };
    render(kind, w, h, rng)
}

/// `per_class` images of each singleton type, item `i` drawn from stream `i`.
pub fn labeled_corpus(per_class: usize, seed: u64) -> Vec<(LumaImage, FigureLabel)> {
    let kinds = FigureLabel::SINGLETON;
    crate::par::map_range(per_class * kinds.len(), |i| {
        let kind = kinds[i % kinds.len()];
        let mut rng = rng_for(seed, i as u64);
        (random_singleton(kind, &mut rng), kind)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MontageSpec {
    pub rows: u32,
    pub cols: u32,
    pub gutter: u32,
    pub margin: u32,
    /// Probability that a panel carries a detached title strip.
    pub title_prob: f64,
}

impl MontageSpec {
    pub fn new(rows: u32, cols: u32, gutter: u32) -> Self {
        MontageSpec { rows, cols, gutter, margin: 6, title_prob: 0.0 }
    }
}

/// A rendered multi-panel figure with the true box of every sub-figure.
#[derive(Debug, Clone)]
pub struct Montage {
    pub image: LumaImage,
    /// Tight content box of each panel, title strip included.
    pub panels: Vec<Rect>,
    pub kinds: Vec<FigureLabel>,
}

const PANEL_KINDS: [FigureLabel; 4] = [FigureLabel::Diagram, FigureLabel::Photo, FigureLabel::Plot, FigureLabel::Table];

/// A panel that survives gutter splitting in one piece: a framed render.
pub fn framed_panel(kind: FigureLabel, w: u32, h: u32, rng: &mut impl Rng) -> LumaImage {
    let mut img = render(kind, w, h, rng);
    if kind != FigureLabel::Photo {
        let b = img.bounds();
        outline(&mut img, b, 3, INK);
    }
    img
}

pub fn montage(spec: &MontageSpec, kinds: &[FigureLabel], rng: &mut impl Rng) -> Montage {
    let n = (spec.rows * spec.cols) as usize;
    assert!(!kinds.is_empty(), "need at least one panel kind");
    let col_w: Vec<u32> = (0..spec.cols).map(|_| rng.gen_range(90..=170)).collect();
    let row_h: Vec<u32> = (0..spec.rows).map(|_| rng.gen_range(80..=150)).collect();
    // titles need a gap of at least 8 px that stays clearly below the gutter
    let can_title = spec.gutter >= 14 && spec.title_prob > 0.0;
    let title_gap = if can_title { rng.gen_range(8..=spec.gutter - 5) } else { 0 };
    let titled: Vec<bool> = (0..n).map(|_| can_title && rng.gen_bool(spec.title_prob)).collect();
    let title_h = 8;
    let row_extra: Vec<u32> = (0..spec.rows)
        .map(|r| {
            let any = (0..spec.cols).any(|c| titled[(r * spec.cols + c) as usize]);
            if any { title_h + title_gap } else { 0 }
        })
        .collect();
    let width = 2 * spec.margin + col_w.iter().sum::<u32>() + spec.gutter * (spec.cols - 1);
    let height = 2 * spec.margin + row_h.iter().sum::<u32>() + row_extra.iter().sum::<u32>() + spec.gutter * (spec.rows - 1);
    let mut image = LumaImage::new(width, height, WHITE);
    let mut panels = Vec::with_capacity(n);
    let mut out_kinds = Vec::with_capacity(n);
    let mut y = spec.margin;
    for r in 0..spec.rows {
        let mut x = spec.margin;
        let body_y = y + row_extra[r as usize];
        for c in 0..spec.cols {
            let i = (r * spec.cols + c) as usize;
            let kind = kinds[rng.gen_range(0..kinds.len())];
            let pw = col_w[c as usize] - rng.gen_range(0..=10);
            let ph = row_h[r as usize] - rng.gen_range(0..=10);
            let panel = framed_panel(kind, pw, ph, rng);
            image.paste(&panel, x, body_y);
            let mut bbox = image
                .content_bbox(&Rect::new(x, body_y, pw, ph), 0.95)
                .unwrap_or(Rect::new(x, body_y, pw, ph));
            if titled[i] {
                let tw = (pw as f64 * rng.gen_range(0.3..0.7)) as u32;
                let area = Rect::new(x + (pw - tw) / 2, body_y - title_gap - title_h, tw, title_h);
                if let Some(t) = text_run(&mut image, area, rng) {
                    bbox = bbox.union(&t);
                }
            }
            panels.push(bbox);
            out_kinds.push(kind);
            x += col_w[c as usize] + spec.gutter;
        }
        y = body_y + row_h[r as usize] + spec.gutter;
    }
    Montage { image, panels, kinds: out_kinds }
}

/// Random grid between 1×2 and 3×3 with gutters in `[8, 24]`.
pub fn random_montage(rng: &mut impl Rng) -> Montage {
    let (rows, cols) = loop {
        let rc = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        if rc.0 * rc.1 > 1 {
            break rc;
        }
    };
    let mut spec = MontageSpec::new(rows, cols, rng.gen_range(8..=24));
    spec.margin = rng.gen_range(2..=12);
    spec.title_prob = 0.3;
    montage(&spec, &PANEL_KINDS, rng)
}

/// `n` montages, item `i` drawn from stream `i`.
pub fn montage_suite(n: usize, seed: u64) -> Vec<Montage> {
    crate::par::map_range(n, |i| random_montage(&mut rng_for(seed, i as u64)))
}

/// Gate training data: singletons of every type (label false) and montages (label true).
pub fn gate_corpus(per_class: usize, seed: u64) -> Vec<(LumaImage, bool)> {
    crate::par::map_range(2 * per_class, |i| {
        let mut rng = rng_for(seed, i as u64);
        if i % 2 == 0 {
            let kind = FigureLabel::SINGLETON[rng.gen_range(0..5)];
            (random_singleton(kind, &mut rng), false)
        } else {
            (random_montage(&mut rng).image, true)
        }
    })
}

/// Things that are not a chart on their own: tick-label rows, axis titles, legends.
pub fn auxiliary_fragment(rng: &mut impl Rng) -> LumaImage {
    match rng.gen_range(0..4) {
        0 => {
            let (w, h) = (rng.gen_range(40..=220), rng.gen_range(6..=12));
            let mut img = LumaImage::new(w, h, WHITE);
            let step = rng.gen_range(18..=40);
            let mut x = 0;
            while x + 8 <= w {
                text_run(&mut img, Rect::new(x, 0, rng.gen_range(6..=14).min(w - x), h), rng);
                x += step;
            }
            img
        }
        1 => {
            let (w, h) = (rng.gen_range(6..=12), rng.gen_range(40..=180));
            let mut img = LumaImage::new(w, h, WHITE);
            text_column(&mut img, Rect::new(0, 0, w, h), rng);
            img
        }
        2 => {
            let (w, h) = (rng.gen_range(30..=120), rng.gen_range(7..=14));
            let mut img = LumaImage::new(w, h, WHITE);
            text_run(&mut img, Rect::new(0, 0, w, h), rng);
            img
        }
        _ => {
            let entries = rng.gen_range(1..=2u32);
            let (w, h) = (rng.gen_range(30..=70), entries * 11);
            let mut img = LumaImage::new(w, h, WHITE);
            for e in 0..entries {
                img.fill_rect(&Rect::new(0, e * 11 + 3, 8, 4), rng.gen_range(0.0..0.6));
                text_run(&mut img, Rect::new(11, e * 11 + 1, w - 11, 9), rng);
            }
            img
        }
    }
}

/// A complete panel as it appears after splitting a montage.
pub fn standalone_fragment(rng: &mut impl Rng) -> LumaImage {
    let kind = PANEL_KINDS[rng.gen_range(0..PANEL_KINDS.len())];
    framed_panel(kind, rng.gen_range(60..=200), rng.gen_range(50..=180), rng)
}

/// Balanced fragment classifier data; `true` marks standalone.
pub fn fragment_corpus(per_class: usize, seed: u64) -> Vec<(LumaImage, bool)> {
    crate::par::map_range(2 * per_class, |i| {
        let mut rng = rng_for(seed, i as u64);
        if i % 2 == 0 {
            (standalone_fragment(&mut rng), true)
        } else {
            (auxiliary_fragment(&mut rng), false)
        }
    })
}

const WORDS: [&str; 40] = [
    "virus", "protein", "cell", "membrane", "phylogenetic", "tree", "gene", "expression", "network", "model",
    "signal", "pathway", "receptor", "binding", "structure", "dynamics", "population", "growth", "tumor", "imaging",
    "microscopy", "sequence", "alignment", "regulation", "neuron", "cortex", "climate", "ocean", "species", "diversity",
    "enzyme", "kinetics", "assay", "mutation", "variant", "cohort", "survival", "response", "dose", "infection",
];
const JOURNALS: [&str; 5] = ["PLoS One", "Nature", "Cell", "Science", "PNAS"];

fn words(rng: &mut impl Rng, n: usize) -> String {
    (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

/// A text-only manifest for search tests: `papers` papers with up to
/// `max_figures` figures each, random captions and scores. About a tenth of
/// the scores are zero and a tenth of the captions are missing.
pub fn catalog(papers: usize, max_figures: usize, seed: u64) -> crate::corpus::Manifest {
    use crate::corpus::{FigureRecord, Manifest, PaperRecord};
    let mut rng = rng_for(seed, 0);
    let mut m = Manifest::default();
    for p in 0..papers {
        let id = format!("paper{p:06}");
        let mut rec = PaperRecord::new(&id, JOURNALS[rng.gen_range(0..JOURNALS.len())], rng.gen_range(2000..=2015), rng.gen_range(4..=20));
        rec.title = words(&mut rng, 5);
        rec.abstract_text = words(&mut rng, 20);
        rec.authors = vec![format!("Author {}", rng.gen_range(0..500))];
        rec.alef_score = Some(if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.0..1.0f64).powi(3) });
        for k in 0..rng.gen_range(1..=max_figures.max(1)) {
            let figure_id = format!("{id}-f{k:02}");
            let label = if rng.gen_bool(0.05) { FigureLabel::Multichart } else { FigureLabel::SINGLETON[rng.gen_range(0..5)] };
            let n_words = rng.gen_range(8..=15);
            let caption = rng.gen_bool(0.9).then(|| words(&mut rng, n_words));
            m.figures.push(FigureRecord {
                image_key: format!("{figure_id}.png"),
                figure_id,
                paper_id: id.clone(),
                caption,
                width: rng.gen_range(100..=1280),
                height: rng.gen_range(100..=1280),
                label,
                class_probs: vec![],
                gate_prob: None,
                parent_figure_id: None,
                bbox_in_parent: None,
            });
        }
        m.papers.push(rec);
    }
    m.sort();
    m
}
