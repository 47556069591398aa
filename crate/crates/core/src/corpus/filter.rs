use image::imageops::FilterType;
use image::{DynamicImage, GenericImageView, ImageFormat};

use super::{CorpusError, DropReason, Result};

/// Longest edge kept after ingestion.
pub const MAX_EDGE: u32 = 1280;

const PRINT_ASPECT: (f64, f64) = (0.70, 0.80);
const PRINT_ROW_DARK: (f64, f64) = (0.05, 0.5);
const PRINT_TEXT_COVERAGE: f64 = 0.6;
const DARK_LUMA: u8 = 128;

#[derive(Debug, Clone)]
pub struct KeptImage {
    /// Canonical RGB pixels, longer edge ≤ `MAX_EDGE`.
    pub image: DynamicImage,
    pub source_format: ImageFormat,
    pub original_size: (u32, u32),
    pub resized: bool,
}

#[derive(Debug, Clone)]
pub enum FilterDecision {
    Drop(DropReason),
    Keep(KeptImage),
}

impl FilterDecision {
    pub fn is_keep(&self) -> bool {
        matches!(self, FilterDecision::Keep(_))
    }
}

fn extension_claims_image(name: &str) -> bool {
    let lower = name.to_ascii_lowercase();
    [".gif", ".jpg", ".jpeg", ".tif", ".tiff", ".png"].iter().any(|e| lower.ends_with(e))
}

/// Portrait page shape with most scanlines looking like lines of text.
pub fn is_full_page_print(img: &DynamicImage) -> bool {
    let (w, h) = img.dimensions();
    if w == 0 || h == 0 {
        return false;
    }
    let aspect = w as f64 / h as f64;
    if !(PRINT_ASPECT.0..=PRINT_ASPECT.1).contains(&aspect) {
        return false;
    }
    let gray = img.to_luma8();
    let texty = gray
        .rows()
        .filter(|row| {
            let dark = row.clone().filter(|p| p.0[0] < DARK_LUMA).count() as f64 / w as f64;
            (PRINT_ROW_DARK.0..=PRINT_ROW_DARK.1).contains(&dark)
        })
        .count();
    texty as f64 / h as f64 > PRINT_TEXT_COVERAGE
}

/// Applies the ingestion rules to one file: GIFs and full-page prints are
/// dropped, everything else is decoded to RGB and shrunk so the longer edge
/// is at most 1280 px. Smaller images are never upscaled.
pub fn filter_image(bytes: &[u8], name: &str) -> Result<FilterDecision> {
    let format = match image::guess_format(bytes) {
        Ok(f) => f,
        Err(_) if extension_claims_image(name) => {
            return Err(CorpusError::Decode { name: name.into(), message: "unrecognized image header".into() })
        }
        Err(_) => return Err(CorpusError::UnsupportedFormat(name.into())),
    };
    match format {
        ImageFormat::Gif => return Ok(FilterDecision::Drop(DropReason::Gif)),
        ImageFormat::Jpeg | ImageFormat::Png | ImageFormat::Tiff => {}
        _ => return Err(CorpusError::UnsupportedFormat(name.into())),
    }
    let decoded = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| CorpusError::Decode { name: name.into(), message: e.to_string() })?;
    let original_size = decoded.dimensions();
    if original_size.0 == 0 || original_size.1 == 0 {
        return Err(CorpusError::Decode { name: name.into(), message: "zero-area image".into() });
    }
    let rgb = DynamicImage::ImageRgb8(decoded.to_rgb8());
    if is_full_page_print(&rgb) {
        log::info!("dropping `{name}`: looks like a full-page print");
        return Ok(FilterDecision::Drop(DropReason::FullPagePrint));
    }
    let (w, h) = original_size;
    let long = w.max(h);
    let (image, resized) = if long > MAX_EDGE {
        let scale = MAX_EDGE as f64 / long as f64;
        let nw = ((w as f64 * scale).round() as u32).clamp(1, MAX_EDGE);
        let nh = ((h as f64 * scale).round() as u32).clamp(1, MAX_EDGE);
        (rgb.resize_exact(nw, nh, FilterType::Triangle), true)
    } else {
        (rgb, false)
    };
    Ok(FilterDecision::Keep(KeptImage { image, source_format: format, original_size, resized }))
}

/// Lossless canonical encoding of a kept image.
pub(crate) fn encode_png(img: &DynamicImage) -> Vec<u8> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).expect("PNG encoding into memory");
    out.into_inner()
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};
    use proptest::prelude::*;

    fn encoded(img: &RgbImage, format: ImageFormat) -> Vec<u8> {
        let mut out = std::io::Cursor::new(Vec::new());
        DynamicImage::ImageRgb8(img.clone()).write_to(&mut out, format).unwrap();
        out.into_inner()
    }

    fn gradient(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| Rgb([(x % 256) as u8, (y % 256) as u8, 200]))
    }

    #[test]
    fn gif_is_dropped() {
        let bytes = encoded(&gradient(20, 10), ImageFormat::Gif);
        assert!(matches!(filter_image(&bytes, "a.gif").unwrap(), FilterDecision::Drop(DropReason::Gif)));
    }

    #[test]
    fn large_jpeg_is_halved() {
        let bytes = encoded(&gradient(2560, 1000), ImageFormat::Jpeg);
        match filter_image(&bytes, "big.jpg").unwrap() {
            FilterDecision::Keep(k) => {
                assert_eq!(k.image.dimensions(), (1280, 500));
                assert!(k.resized);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn small_png_passes_unchanged() {
        let img = gradient(800, 600);
        match filter_image(&encoded(&img, ImageFormat::Png), "s.png").unwrap() {
            FilterDecision::Keep(k) => {
                assert!(!k.resized);
                assert_eq!(k.image.to_rgb8(), img);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tiff_is_reencoded() {
        let img = gradient(300, 200);
        match filter_image(&encoded(&img, ImageFormat::Tiff), "t.tif").unwrap() {
            FilterDecision::Keep(k) => {
                assert_eq!(k.source_format, ImageFormat::Tiff);
                assert_eq!(k.image.to_rgb8(), img);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(filter_image(b"garbage!", "x.jpg"), Err(CorpusError::Decode { .. })));
        assert!(matches!(filter_image(b"garbage!", "x.txt"), Err(CorpusError::UnsupportedFormat(_))));
        let mut bmp = b"BM".to_vec();
        bmp.resize(64, 0);
        assert!(matches!(filter_image(&bmp, "x.bmp"), Err(CorpusError::UnsupportedFormat(_))));
        let mut png = encoded(&gradient(40, 40), ImageFormat::Png);
        png.truncate(60);
        assert!(matches!(filter_image(&png, "x.png"), Err(CorpusError::Decode { .. })));
    }

    #[test]
    fn page_scan_is_dropped() {
        // 750×1000 white page with text lines: 10 px of text every 14 px
        let img = RgbImage::from_fn(750, 1000, |x, y| {
            let in_line = y % 14 < 10 && (60..690).contains(&x) && (x / 7) % 5 != 0 && x % 3 == 0;
            if in_line { Rgb([0, 0, 0]) } else { Rgb([255, 255, 255]) }
        });
        assert!(is_full_page_print(&DynamicImage::ImageRgb8(img.clone())));
        let bytes = encoded(&img, ImageFormat::Png);
        assert!(matches!(filter_image(&bytes, "page.png").unwrap(), FilterDecision::Drop(DropReason::FullPagePrint)));
        // same content in landscape is not a page
        let wide = image::imageops::rotate90(&img);
        assert!(!is_full_page_print(&DynamicImage::ImageRgb8(wide)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn filter_is_idempotent_and_keeps_aspect(w in 1u32..2700, h in 1u32..2700) {
            let img = RgbImage::from_fn(w.min(3000), h.min(3000), |x, y| Rgb([((x ^ y) & 255) as u8, 90, 30]));
            let first = match filter_image(&encoded(&img, ImageFormat::Png), "p.png").unwrap() {
                FilterDecision::Keep(k) => k,
                FilterDecision::Drop(_) => return Ok(()),
            };
            let (nw, nh) = first.image.dimensions();
            prop_assert!(nw.max(nh) <= MAX_EDGE);
            if w.max(h) > MAX_EDGE {
                prop_assert_eq!(nw.max(nh), MAX_EDGE);
                // cross-multiplied aspect error within one part in 1280 of the longer side
                let err = (nw as f64 * h as f64 - nh as f64 * w as f64).abs() / (w.max(h) as f64);
                prop_assert!(err <= 1.0, "aspect drift {err}");
            }
            let again = match filter_image(&encode_png(&first.image), "p.png").unwrap() {
                FilterDecision::Keep(k) => k,
                other => panic!("{other:?}"),
            };
            prop_assert!(!again.resized);
            prop_assert_eq!(again.image.to_rgb8(), first.image.to_rgb8());
        }
    }
}
