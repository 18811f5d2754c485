//! 8-bit grayscale raster with an explicit ink-polarity convention, plus the
//! bilinear sampling shared by deformation and resizing.
//!
//! Scanned signatures arrive ink-dark-on-light; the normalization pipeline
//! inverts exactly once, so everything downstream of it sees bright ink on a
//! zero background. The polarity flag tracks which side of that inversion an
//! image is on.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    InkDarkOnLight,
    InkLightOnDark,
}

impl Polarity {
    /// Intensity used for pixels outside the image or without ink.
    pub fn background(self) -> u8 {
        match self {
            Polarity::InkDarkOnLight => 255,
            Polarity::InkLightOnDark => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignatureImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
    polarity: Polarity,
}

impl SignatureImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>, polarity: Polarity) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroAreaImage { width, height });
        }
        if pixels.len() != (width * height) as usize {
            return Err(Error::WrongImageSize {
                expected_width: width,
                expected_height: height,
                width: pixels.len() as u32,
                height: 1,
            });
        }
        Ok(SignatureImage {
            width,
            height,
            pixels,
            polarity,
        })
    }

    /// A blank (all-background) canvas.
    pub fn blank(width: u32, height: u32, polarity: Polarity) -> Result<Self> {
        Self::new(
            width,
            height,
            vec![polarity.background(); (width * height) as usize],
            polarity,
        )
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn polarity(&self) -> Polarity {
        self.polarity
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        self.pixels[(y * self.width + x) as usize] = value;
    }

    /// I(x, y) = 255 - I(x, y) on every pixel; flips the polarity flag.
    pub fn inverted(&self) -> SignatureImage {
        SignatureImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|p| 255 - p).collect(),
            polarity: match self.polarity {
                Polarity::InkDarkOnLight => Polarity::InkLightOnDark,
                Polarity::InkLightOnDark => Polarity::InkDarkOnLight,
            },
        }
    }

    /// Bilinear sample at a real coordinate; out-of-domain reads return the
    /// polarity's background.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let bg = self.polarity.background() as f64;
        if !x.is_finite() || !y.is_finite() {
            return bg;
        }
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let read = |xi: i64, yi: i64| -> f64 {
            if xi < 0 || yi < 0 || xi >= self.width as i64 || yi >= self.height as i64 {
                bg
            } else {
                self.pixels[(yi as u64 * self.width as u64 + xi as u64) as usize] as f64
            }
        };
        let (x0, y0) = (x0 as i64, y0 as i64);
        read(x0, y0) * (1.0 - fx) * (1.0 - fy)
            + read(x0 + 1, y0) * fx * (1.0 - fy)
            + read(x0, y0 + 1) * (1.0 - fx) * fy
            + read(x0 + 1, y0 + 1) * fx * fy
    }

    /// Bilinear resize with pixel-center alignment.
    pub fn resize_bilinear(&self, new_width: u32, new_height: u32) -> Result<SignatureImage> {
        if new_width == 0 || new_height == 0 {
            return Err(Error::ZeroAreaImage {
                width: new_width,
                height: new_height,
            });
        }
        let sx = self.width as f64 / new_width as f64;
        let sy = self.height as f64 / new_height as f64;
        let mut pixels = Vec::with_capacity((new_width * new_height) as usize);
        for y in 0..new_height {
            for x in 0..new_width {
                let src_x = (x as f64 + 0.5) * sx - 0.5;
                let src_y = (y as f64 + 0.5) * sy - 0.5;
                pixels.push(self.sample_bilinear(src_x, src_y).round().clamp(0.0, 255.0) as u8);
            }
        }
        SignatureImage::new(new_width, new_height, pixels, self.polarity)
    }

    /// Crops the central `width` x `height` window; offsets floor on odd
    /// margins. Cropping an image to its own size is the identity.
    pub fn center_crop(&self, width: u32, height: u32) -> Result<SignatureImage> {
        if width > self.width || height > self.height {
            return Err(Error::WrongImageSize {
                expected_width: width,
                expected_height: height,
                width: self.width,
                height: self.height,
            });
        }
        let x0 = (self.width - width) / 2;
        let y0 = (self.height - height) / 2;
        let mut pixels = Vec::with_capacity((width * height) as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(self.get(x0 + x, y0 + y));
            }
        }
        SignatureImage::new(width, height, pixels, self.polarity)
    }

    /// Reads an 8-bit grayscale PNG; other color types are converted to luma.
    /// Files are assumed to carry ink-dark-on-light scans.
    pub fn read_png(path: &Path) -> Result<SignatureImage> {
        let img = image::open(path)?.into_luma8();
        SignatureImage::new(
            img.width(),
            img.height(),
            img.into_raw(),
            Polarity::InkDarkOnLight,
        )
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let img = image::GrayImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("dimensions checked at construction");
        img.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }
}
