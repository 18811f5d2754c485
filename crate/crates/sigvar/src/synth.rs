//! Bundled synthetic dataset: writers rendered as stroke images.
//!
//! Each writer owns a template assembled from a shared pool of stroke
//! shapes; genuine samples redraw the template with per-writer anisotropic
//! control-point jitter (wider horizontally than vertically), a small global
//! shift and varying ink. Skilled forgeries redraw the same template with
//! much larger jitter. Sharing the shape pool across writers keeps writers
//! confusable enough that verification is not trivially error-free.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{mix_seed, stream_rng, Manifest, ManifestWriter};
use crate::raster::{Polarity, SignatureImage};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub writers: usize,
    pub genuine_per_writer: usize,
    pub skilled_per_writer: usize,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            writers: 20,
            genuine_per_writer: 15,
            skilled_per_writer: 10,
            width: 300,
            height: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthWriter {
    pub id: u32,
    pub genuine: Vec<SignatureImage>,
    pub skilled: Vec<SignatureImage>,
}

/// A stroke shape: control points in the unit box.
type Shape = Vec<(f64, f64)>;

const SHAPE_POOL: usize = 14;

fn shape_pool(seed: u64) -> Vec<Shape> {
    // Tag 0 is reserved for the pool; writer templates use their writer id.
    let mut rng = stream_rng(mix_seed(seed, 0u64), 0);
    (0..SHAPE_POOL)
        .map(|_| {
            let points = rng.gen_range(4..=7);
            let mut shape = Vec::with_capacity(points);
            let mut x: f64 = rng.gen_range(0.0..0.25);
            let mut y: f64 = rng.gen_range(0.2..0.8);
            for _ in 0..points {
                shape.push((x, y));
                x += rng.gen_range(0.08..0.3);
                y = (y + rng.gen_range(-0.45..0.45)).clamp(0.0, 1.0);
            }
            shape
        })
        .collect()
}

/// One placed stroke of a writer template.
struct PlacedStroke {
    shape: Shape,
    origin: (f64, f64),
    scale: (f64, f64),
}

struct WriterTemplate {
    strokes: Vec<PlacedStroke>,
    /// Per-writer anisotropic jitter (horizontal, vertical), pixels.
    jitter: (f64, f64),
    /// Per-writer slant: horizontal shear per vertical pixel. Survives
    /// center-of-mass normalization, unlike global placement.
    slant: f64,
}

fn writer_template(cfg: &SynthConfig, pool: &[Shape], writer: u32) -> WriterTemplate {
    let mut rng = stream_rng(mix_seed(cfg.seed, writer as u64), 0);
    let stroke_count = rng.gen_range(3..=5);
    let margin = cfg.width as f64 * 0.12;
    let usable = cfg.width as f64 - 2.0 * margin;
    let slot = usable / stroke_count as f64;
    let strokes = (0..stroke_count)
        .map(|i| {
            let shape = pool[rng.gen_range(0..pool.len())].clone();
            let width = slot * rng.gen_range(0.6..1.15);
            let height = cfg.height as f64 * rng.gen_range(0.2..0.55);
            let x = margin + i as f64 * slot + rng.gen_range(-0.15..0.15) * slot;
            let y = cfg.height as f64 * rng.gen_range(0.15..0.55);
            PlacedStroke {
                shape,
                origin: (x, y),
                scale: (width, height),
            }
        })
        .collect();
    WriterTemplate {
        strokes,
        jitter: (rng.gen_range(3.0..7.0), rng.gen_range(1.2..3.0)),
        slant: rng.gen_range(-0.45..0.45),
    }
}

fn stamp_disk(img: &mut SignatureImage, cx: f64, cy: f64, radius: f64, intensity: u8) {
    let r = radius.ceil() as i64;
    for dy in -r..=r {
        for dx in -r..=r {
            let x = cx.round() as i64 + dx;
            let y = cy.round() as i64 + dy;
            if x < 0 || y < 0 || x >= img.width() as i64 || y >= img.height() as i64 {
                continue;
            }
            if (dx * dx + dy * dy) as f64 <= radius * radius {
                let current = img.get(x as u32, y as u32);
                img.set(x as u32, y as u32, current.min(intensity));
            }
        }
    }
}

fn draw_polyline(img: &mut SignatureImage, points: &[(f64, f64)], thickness: f64, intensity: u8) {
    for pair in points.windows(2) {
        let (x0, y0) = pair[0];
        let (x1, y1) = pair[1];
        let length = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
        let steps = (length / 0.7).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            stamp_disk(
                img,
                x0 + t * (x1 - x0),
                y0 + t * (y1 - y0),
                thickness / 2.0,
                intensity,
            );
        }
    }
}

fn render_sample(
    cfg: &SynthConfig,
    template: &WriterTemplate,
    forgery: bool,
    rng: &mut ChaCha8Rng,
) -> SignatureImage {
    let mut img = SignatureImage::blank(cfg.width, cfg.height, Polarity::InkDarkOnLight)
        .expect("nonzero canvas");
    let jitter_scale = if forgery { 2.2 } else { 1.0 };
    let shift_range = if forgery { 10.0 } else { 6.0 };
    let jx = Normal::new(0.0, template.jitter.0 * jitter_scale).expect("positive sigma");
    let jy = Normal::new(0.0, template.jitter.1 * jitter_scale).expect("positive sigma");
    let shift_x: f64 = rng.gen_range(-shift_range..=shift_range);
    let shift_y: f64 = rng.gen_range(-shift_range..=shift_range);
    // A forger reproduces the shapes but misses the writer's slant and
    // proportions systematically.
    let slant = if forgery {
        template.slant + rng.gen_range(0.12..0.3) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }
    } else {
        template.slant
    };
    let mid_y = cfg.height as f64 / 2.0;
    for stroke in &template.strokes {
        let intensity = rng.gen_range(25..=85) as u8;
        let thickness = rng.gen_range(1.8..3.2);
        let (sx_err, sy_err) = if forgery {
            (rng.gen_range(0.8..1.25), rng.gen_range(0.8..1.25))
        } else {
            (1.0, 1.0)
        };
        let points: Vec<(f64, f64)> = stroke
            .shape
            .iter()
            .map(|&(sx, sy)| {
                let y = stroke.origin.1 + sy * stroke.scale.1 * sy_err + jy.sample(rng) + shift_y;
                let x = stroke.origin.0
                    + sx * stroke.scale.0 * sx_err
                    + slant * (y - mid_y)
                    + jx.sample(rng)
                    + shift_x;
                (x, y)
            })
            .collect();
        draw_polyline(&mut img, &points, thickness, intensity);
    }
    img
}

/// Generates the full dataset deterministically from the config seed.
pub fn generate(cfg: &SynthConfig) -> Vec<SynthWriter> {
    let pool = shape_pool(cfg.seed);
    (0..cfg.writers)
        .map(|w| {
            let id = w as u32 + 1;
            let template = writer_template(cfg, &pool, id);
            let wseed = mix_seed(cfg.seed, id as u64);
            let genuine = (0..cfg.genuine_per_writer)
                .map(|s| {
                    let mut rng = stream_rng(wseed, 1 + s as u64);
                    render_sample(cfg, &template, false, &mut rng)
                })
                .collect();
            let skilled = (0..cfg.skilled_per_writer)
                .map(|s| {
                    let mut rng = stream_rng(wseed, 10_001 + s as u64);
                    render_sample(cfg, &template, true, &mut rng)
                })
                .collect();
            SynthWriter {
                id,
                genuine,
                skilled,
            }
        })
        .collect()
}

/// Renders the dataset to `dir` as PNG files plus a `manifest.json`;
/// returns the manifest path. The manifest canvas leaves a margin around
/// the rendered image size.
pub fn write_dataset(cfg: &SynthConfig, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let writers = generate(cfg);
    let mut manifest = Manifest {
        name: "synthetic-strokes".into(),
        canvas: Some((cfg.height + cfg.height / 5, cfg.width + cfg.width / 5)),
        expected: None,
        writers: Vec::new(),
    };
    for writer in &writers {
        let sub = format!("w{:03}", writer.id);
        let subdir = dir.join(&sub);
        std::fs::create_dir_all(&subdir).map_err(|e| Error::io(&subdir, e))?;
        let mut entry = ManifestWriter {
            id: writer.id,
            genuine: Vec::new(),
            skilled: Vec::new(),
        };
        for (i, img) in writer.genuine.iter().enumerate() {
            let rel = PathBuf::from(format!("{sub}/g{i:02}.png"));
            img.write_png(&dir.join(&rel))?;
            entry.genuine.push(rel);
        }
        for (i, img) in writer.skilled.iter().enumerate() {
            let rel = PathBuf::from(format!("{sub}/s{i:02}.png"));
            img.write_png(&dir.join(&rel))?;
            entry.skilled.push(rel);
        }
        manifest.writers.push(entry);
    }
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)
        .map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureExtractor, GridDescriptor};
    use crate::preprocess::normalize_signature;

    fn small_config() -> SynthConfig {
        SynthConfig {
            writers: 4,
            genuine_per_writer: 5,
            skilled_per_writer: 3,
            width: 240,
            height: 160,
            seed: 9,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small_config();
        let a = generate(&cfg);
        let b = generate(&cfg);
        assert_eq!(a.len(), 4);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.genuine[0].pixels(), y.genuine[0].pixels());
            assert_eq!(x.skilled[2].pixels(), y.skilled[2].pixels());
        }
    }

    #[test]
    fn samples_have_ink_and_normalize_cleanly() {
        let cfg = small_config();
        for writer in generate(&cfg) {
            for img in writer.genuine.iter().chain(&writer.skilled) {
                assert!(img.pixels().iter().any(|&p| p < 200), "blank sample");
                let normalized = normalize_signature(img, (192, 288)).unwrap();
                let v = GridDescriptor.extract(&normalized).unwrap();
                assert!(v.values().iter().any(|&x| x != 0.0));
            }
        }
    }

    #[test]
    fn genuine_cluster_tighter_than_skilled_spread() {
        let cfg = small_config();
        let writers = generate(&cfg);
        for writer in &writers {
            let extract = |img: &SignatureImage| {
                GridDescriptor
                    .extract(&normalize_signature(img, (192, 288)).unwrap())
                    .unwrap()
            };
            let genuine: Vec<_> = writer.genuine.iter().map(extract).collect();
            let skilled: Vec<_> = writer.skilled.iter().map(extract).collect();
            let centroid = |vs: &[crate::metrics::FeatureVector]| -> Vec<f64> {
                let mut c = vec![0.0; vs[0].dim()];
                for v in vs {
                    for (ci, vi) in c.iter_mut().zip(v.values()) {
                        *ci += vi / vs.len() as f64;
                    }
                }
                c
            };
            let g_centroid = centroid(&genuine);
            let mean_dist = |vs: &[crate::metrics::FeatureVector]| -> f64 {
                vs.iter()
                    .map(|v| {
                        v.values()
                            .iter()
                            .zip(&g_centroid)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .sum::<f64>()
                    / vs.len() as f64
            };
            assert!(
                mean_dist(&skilled) > mean_dist(&genuine) * 1.05,
                "writer {}: forgeries are not more spread than genuine samples",
                writer.id
            );
        }
    }

    #[test]
    fn write_dataset_produces_loadable_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let manifest_path = write_dataset(&cfg, dir.path()).unwrap();
        let handle = crate::ingest::load_manifest(&manifest_path).unwrap();
        assert_eq!(handle.manifest.writers.len(), 4);
        let prepared = handle.prepare(&GridDescriptor, false).unwrap();
        assert_eq!(prepared.writers.len(), 4);
        assert_eq!(prepared.writers[0].genuine.len(), 5);
    }
}
