use image::imageops::{self, FilterType};
use image::{DynamicImage, GrayImage};
use log::debug;

use super::{FeatureError, Result, IMAGE_SIZE};
use crate::raster::LumaImage;

/// Luminance used for the letterbox bands around non-square content.
pub const PAD_LUMA: u8 = 255;

/// Scales the image so its longer edge is 128 px, keeps the aspect ratio and
/// centers it on a white 128×128 canvas.
pub fn normalize_image(img: &DynamicImage) -> Result<LumaImage> {
    normalize_gray(&img.to_luma8())
}

pub fn normalize_luma(img: &LumaImage) -> Result<LumaImage> {
    normalize_gray(&img.to_gray())
}

fn normalize_gray(gray: &GrayImage) -> Result<LumaImage> {
    let (w, h) = gray.dimensions();
    if w == 0 || h == 0 {
        return Err(FeatureError::InvalidImage(format!("zero-area image {w}x{h}")));
    }
    let long = w.max(h) as f64;
    let scale = IMAGE_SIZE as f64 / long;
    let nw = ((w as f64 * scale).round() as u32).clamp(1, IMAGE_SIZE);
    let nh = ((h as f64 * scale).round() as u32).clamp(1, IMAGE_SIZE);

    let content = if (nw, nh) == (w, h) {
        gray.clone()
    } else {
        imageops::resize(gray, nw, nh, FilterType::Triangle)
    };
    let mut canvas = GrayImage::from_pixel(IMAGE_SIZE, IMAGE_SIZE, image::Luma([PAD_LUMA]));
    let (ox, oy) = ((IMAGE_SIZE - nw) / 2, (IMAGE_SIZE - nh) / 2);
    if (nw, nh) != (IMAGE_SIZE, IMAGE_SIZE) {
        debug!("padding {w}x{h} content to {IMAGE_SIZE}x{IMAGE_SIZE} with luma {PAD_LUMA}");
    }
    imageops::replace(&mut canvas, &content, ox as i64, oy as i64);
    Ok(LumaImage::from_gray(&canvas))
}
