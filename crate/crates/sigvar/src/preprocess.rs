//! Signature normalization: Otsu segmentation, center-of-mass placement on a
//! dataset canvas, inversion, resize to 170x242 and center crop to 150x220.
//!
//! The pipeline is deterministic. Input is an ink-dark-on-light scan; output
//! has bright ink on a zero background.

use crate::error::{Error, Result};
use crate::raster::{Polarity, SignatureImage};

/// Width and height of the resize step preceding the final crop.
pub const RESIZE_WIDTH: u32 = 242;
pub const RESIZE_HEIGHT: u32 = 170;
/// Final normalized dimensions.
pub const CROP_WIDTH: u32 = 220;
pub const CROP_HEIGHT: u32 = 150;

/// Otsu threshold plus a degeneracy flag for constant images, whose
/// histogram admits no nonzero between-class variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtsuThreshold {
    pub value: u8,
    pub degenerate: bool,
}

/// Threshold maximizing between-class variance, computed from cumulative
/// histogram moments in one pass over the 256 bins. The foreground is
/// intensity < t for dark ink. Ties resolve to the lowest threshold.
pub fn otsu_threshold(img: &SignatureImage) -> OtsuThreshold {
    let mut hist = [0u64; 256];
    for &p in img.pixels() {
        hist[p as usize] += 1;
    }
    let total = img.pixels().len() as f64;
    let total_sum: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &c)| i as f64 * c as f64)
        .sum();

    let mut best_t = 0u8;
    let mut best_var = 0.0f64;
    let mut count_below = 0.0;
    let mut sum_below = 0.0;
    for t in 0..=255usize {
        // Classes {i < t} and {i >= t}.
        if t > 0 {
            count_below += hist[t - 1] as f64;
            sum_below += (t - 1) as f64 * hist[t - 1] as f64;
        }
        let w0 = count_below / total;
        let w1 = 1.0 - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let mu0 = sum_below / count_below;
        let mu1 = (total_sum - sum_below) / (total - count_below);
        let var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if var > best_var {
            best_var = var;
            best_t = t as u8;
        }
    }
    OtsuThreshold {
        value: best_t,
        degenerate: best_var == 0.0,
    }
}

/// Segments ink from background: ink pixels (intensity < t) keep their
/// grayscale value, background pixels become 255.
fn segment(img: &SignatureImage, threshold: u8) -> SignatureImage {
    let pixels = img
        .pixels()
        .iter()
        .map(|&p| if p < threshold { p } else { 255 })
        .collect();
    SignatureImage::new(img.width(), img.height(), pixels, img.polarity())
        .expect("dimensions unchanged")
}

/// Ink-weighted center of mass on inverted intensities (weight 255 - I);
/// returns None when there is no ink.
fn center_of_mass(img: &SignatureImage) -> Option<(f64, f64)> {
    let mut wsum = 0.0;
    let mut xsum = 0.0;
    let mut ysum = 0.0;
    for y in 0..img.height() {
        for x in 0..img.width() {
            let w = (255 - img.get(x, y)) as f64;
            wsum += w;
            xsum += w * x as f64;
            ysum += w * y as f64;
        }
    }
    if wsum == 0.0 {
        None
    } else {
        Some((xsum / wsum, ysum / wsum))
    }
}

/// Full normalization pipeline. `canvas` is the dataset window as
/// (height, width); content that does not fit is clipped with a warning.
pub fn normalize_signature(img: &SignatureImage, canvas: (u32, u32)) -> Result<SignatureImage> {
    if img.polarity() != Polarity::InkDarkOnLight {
        return Err(Error::WrongPolarity);
    }
    let (canvas_h, canvas_w) = canvas;
    if canvas_h == 0 || canvas_w == 0 {
        return Err(Error::ZeroAreaImage {
            width: canvas_w,
            height: canvas_h,
        });
    }

    let threshold = otsu_threshold(img);
    let segmented = segment(img, threshold.value);
    let (com_x, com_y) = center_of_mass(&segmented).ok_or(Error::EmptyForeground)?;

    // Place by center of mass at the canvas center, flooring odd offsets.
    let dx = ((canvas_w as f64 - 1.0) / 2.0 - com_x).floor() as i64;
    let dy = ((canvas_h as f64 - 1.0) / 2.0 - com_y).floor() as i64;
    let mut placed = SignatureImage::blank(canvas_w, canvas_h, Polarity::InkDarkOnLight)?;
    let mut clipped = false;
    for y in 0..segmented.height() {
        for x in 0..segmented.width() {
            let v = segmented.get(x, y);
            if v == 255 {
                continue;
            }
            let tx = x as i64 + dx;
            let ty = y as i64 + dy;
            if tx < 0 || ty < 0 || tx >= canvas_w as i64 || ty >= canvas_h as i64 {
                clipped = true;
                continue;
            }
            placed.set(tx as u32, ty as u32, v);
        }
    }
    if clipped {
        log::warn!(
            "signature ({}x{}) does not fit the {}x{} canvas; content clipped",
            segmented.width(),
            segmented.height(),
            canvas_h,
            canvas_w
        );
    }

    let inverted = placed.inverted();
    let resized = inverted.resize_bilinear(RESIZE_WIDTH, RESIZE_HEIGHT)?;
    resized.center_crop(CROP_WIDTH, CROP_HEIGHT)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn image_from_histogram(hist: &[(u8, u32)]) -> SignatureImage {
        let mut pixels = Vec::new();
        for &(value, count) in hist {
            pixels.extend(std::iter::repeat_n(value, count as usize));
        }
        let w = pixels.len() as u32;
        SignatureImage::new(w, 1, pixels, Polarity::InkDarkOnLight).unwrap()
    }

    /// Exhaustive 256-way oracle: recompute the between-class variance for
    /// every threshold directly from per-class sums.
    fn oracle_otsu(pixels: &[u8]) -> (u8, bool) {
        let n = pixels.len() as f64;
        let mut best = (0u8, 0.0f64);
        for t in 0..=255u16 {
            let below: Vec<f64> = pixels
                .iter()
                .filter(|&&p| (p as u16) < t)
                .map(|&p| p as f64)
                .collect();
            let above: Vec<f64> = pixels
                .iter()
                .filter(|&&p| (p as u16) >= t)
                .map(|&p| p as f64)
                .collect();
            if below.is_empty() || above.is_empty() {
                continue;
            }
            let w0 = below.len() as f64 / n;
            let w1 = above.len() as f64 / n;
            let mu0 = below.iter().sum::<f64>() / below.len() as f64;
            let mu1 = above.iter().sum::<f64>() / above.len() as f64;
            let var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
            if var > best.1 {
                best = (t as u8, var);
            }
        }
        (best.0, best.1 == 0.0)
    }

    #[test]
    fn bimodal_histogram_separates_modes() {
        let img = image_from_histogram(&[(20, 100), (220, 100)]);
        let t = otsu_threshold(&img);
        assert!(!t.degenerate);
        assert!(t.value > 20 && t.value <= 220);
        let (oracle_t, _) = oracle_otsu(img.pixels());
        assert_eq!(t.value, oracle_t);
    }

    #[test]
    fn constant_image_is_degenerate() {
        let img = image_from_histogram(&[(128, 64)]);
        let t = otsu_threshold(&img);
        assert!(t.degenerate);
        assert_eq!(t.value, 0);
    }

    #[test]
    fn otsu_matches_exhaustive_oracle_on_random_histograms() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let n = rng.gen_range(16..256);
            let pixels: Vec<u8> = (0..n).map(|_| rng.gen()).collect();
            let img = SignatureImage::new(
                pixels.len() as u32,
                1,
                pixels.clone(),
                Polarity::InkDarkOnLight,
            )
            .unwrap();
            let got = otsu_threshold(&img);
            let (want_t, want_deg) = oracle_otsu(&pixels);
            assert_eq!((got.value, got.degenerate), (want_t, want_deg));
        }
    }

    fn blob_image() -> SignatureImage {
        // 10x10 dark blob on a 60x80 white page, off-center.
        let mut img = SignatureImage::blank(80, 60, Polarity::InkDarkOnLight).unwrap();
        for y in 5..15 {
            for x in 7..17 {
                img.set(x, y, 30);
            }
        }
        img
    }

    #[test]
    fn output_is_always_150x220() {
        let out = normalize_signature(&blob_image(), (300, 400)).unwrap();
        assert_eq!((out.width(), out.height()), (CROP_WIDTH, CROP_HEIGHT));
        assert_eq!(out.polarity(), Polarity::InkLightOnDark);
    }

    #[test]
    fn blob_lands_at_canvas_center_before_resize() {
        // Run the pipeline on a canvas
        // equal to the resize target so the resize is near-identity, then
        // check the bright mass centroid sits near the crop center.
        let out = normalize_signature(&blob_image(), (170, 242)).unwrap();
        let mut wsum = 0.0;
        let mut xsum = 0.0;
        let mut ysum = 0.0;
        for y in 0..out.height() {
            for x in 0..out.width() {
                let w = out.get(x, y) as f64;
                wsum += w;
                xsum += w * x as f64;
                ysum += w * y as f64;
            }
        }
        let cx = xsum / wsum;
        let cy = ysum / wsum;
        assert!(
            (cx - (CROP_WIDTH as f64 - 1.0) / 2.0).abs() <= 1.5,
            "cx = {cx}"
        );
        assert!(
            (cy - (CROP_HEIGHT as f64 - 1.0) / 2.0).abs() <= 1.5,
            "cy = {cy}"
        );
    }

    #[test]
    fn empty_foreground_is_an_error() {
        let blank = SignatureImage::blank(50, 40, Polarity::InkDarkOnLight).unwrap();
        assert!(matches!(
            normalize_signature(&blank, (100, 100)),
            Err(Error::EmptyForeground)
        ));
    }

    #[test]
    fn light_on_dark_input_rejected() {
        let img = blob_image().inverted();
        assert!(matches!(
            normalize_signature(&img, (100, 100)),
            Err(Error::WrongPolarity)
        ));
    }

    #[test]
    fn background_is_zero_after_normalization() {
        let out = normalize_signature(&blob_image(), (952, 1360)).unwrap();
        // Corners are far from the centered blob.
        assert_eq!(out.get(0, 0), 0);
        assert_eq!(out.get(CROP_WIDTH - 1, CROP_HEIGHT - 1), 0);
        assert!(out.pixels().iter().any(|&p| p > 0));
    }
}
