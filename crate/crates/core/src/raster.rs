//! Luminance rasters shared by the feature, gate and dismantling stages.

use image::{DynamicImage, GrayImage, Luma};

use crate::geometry::Rect;

/// Row-major grayscale image with luminance in `[0, 1]` (0 = black, 1 = white).
#[derive(Debug, Clone, PartialEq)]
pub struct LumaImage {
    width: u32,
    height: u32,
    data: Vec<f64>,
}

impl LumaImage {
    pub fn new(width: u32, height: u32, fill: f64) -> Self {
        LumaImage {
            width,
            height,
            data: vec![fill; width as usize * height as usize],
        }
    }

    pub fn from_vec(width: u32, height: u32, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width as usize * height as usize, "raster size mismatch");
        LumaImage { width, height, data }
    }

    pub fn from_gray(img: &GrayImage) -> Self {
        let data = img.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
        LumaImage::from_vec(img.width(), img.height(), data)
    }

    pub fn from_dynamic(img: &DynamicImage) -> Self {
        Self::from_gray(&img.to_luma8())
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            Luma([(self.get(x, y).clamp(0.0, 1.0) * 255.0).round() as u8])
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: f64) {
        let w = self.width as usize;
        self.data[y as usize * w + x as usize] = v;
    }

    pub fn row(&self, y: u32) -> &[f64] {
        let w = self.width as usize;
        &self.data[y as usize * w..(y as usize + 1) * w]
    }

    pub fn crop(&self, r: &Rect) -> LumaImage {
        let mut out = Vec::with_capacity(r.area() as usize);
        for y in r.y..r.bottom() {
            out.extend_from_slice(&self.row(y)[r.x as usize..r.right() as usize]);
        }
        LumaImage::from_vec(r.w, r.h, out)
    }

    /// Paints `r ∩ bounds` with `v`.
    pub fn fill_rect(&mut self, r: &Rect, v: f64) {
        let Some(r) = r.intersect(&self.bounds()) else { return };
        let w = self.width as usize;
        for y in r.y..r.bottom() {
            let start = y as usize * w + r.x as usize;
            self.data[start..start + r.w as usize].fill(v);
        }
    }

    /// Copies `src` with its top-left corner at `(x, y)`; pixels falling outside are clipped.
    pub fn paste(&mut self, src: &LumaImage, x: u32, y: u32) {
        let target = Rect::new(x, y, src.width, src.height);
        let Some(r) = target.intersect(&self.bounds()) else { return };
        let w = self.width as usize;
        for yy in r.y..r.bottom() {
            let s = &src.row(yy - y)[(r.x - x) as usize..(r.right() - x) as usize];
            let start = yy as usize * w + r.x as usize;
            self.data[start..start + r.w as usize].copy_from_slice(s);
        }
    }

    /// Minimal rectangle inside `region` holding every pixel darker than `threshold`.
    pub fn content_bbox(&self, region: &Rect, threshold: f64) -> Option<Rect> {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        for y in region.y..region.bottom() {
            let row = &self.row(y)[region.x as usize..region.right() as usize];
            let first = row.iter().position(|&v| v < threshold);
            if let Some(f) = first {
                let last = row.iter().rposition(|&v| v < threshold).unwrap_or(f);
                x0 = x0.min(region.x + f as u32);
                x1 = x1.max(region.x + last as u32 + 1);
                y0 = y0.min(y);
                y1 = y + 1;
            }
        }
        (x0 < x1).then(|| Rect::from_corners(x0, y0, x1, y1))
    }
}
