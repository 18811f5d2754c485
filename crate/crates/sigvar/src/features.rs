//! Feature-extraction boundary: a pluggable extractor contract, a
//! deterministic baseline grid descriptor, and a store for precomputed CNN
//! vectors.
//!
//! The grid descriptor exists so the whole pipeline runs with zero external
//! dependencies. It is a hand-crafted stand-in, not a learned representation;
//! published error rates obtained with CNN features are not expected from it.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::FeatureVector;
use crate::preprocess::{CROP_HEIGHT, CROP_WIDTH};
use crate::raster::SignatureImage;

pub trait FeatureExtractor: Sync {
    /// Output dimension, fixed per extractor.
    fn dim(&self) -> usize;

    /// Extracts a feature vector from a normalized 150x220 image.
    fn extract(&self, img: &SignatureImage) -> Result<FeatureVector>;
}

/// Baseline descriptor over a 10x11 grid of 15x20-pixel cells.
///
/// Per cell: mean intensity, intensity standard deviation, ink-pixel
/// fraction, and the ink-weighted centroid offsets from the cell center
/// (normalized by cell size). 110 cells x 5 features = 550 dimensions.
/// Expects normalized input: bright ink on a zero background.
#[derive(Debug, Clone, Copy, Default)]
pub struct GridDescriptor;

pub const GRID_ROWS: u32 = 10;
pub const GRID_COLS: u32 = 11;
const CELL_W: u32 = CROP_WIDTH / GRID_COLS;
const CELL_H: u32 = CROP_HEIGHT / GRID_ROWS;

impl FeatureExtractor for GridDescriptor {
    fn dim(&self) -> usize {
        (GRID_ROWS * GRID_COLS * 5) as usize
    }

    fn extract(&self, img: &SignatureImage) -> Result<FeatureVector> {
        if img.width() != CROP_WIDTH || img.height() != CROP_HEIGHT {
            return Err(Error::WrongImageSize {
                expected_width: CROP_WIDTH,
                expected_height: CROP_HEIGHT,
                width: img.width(),
                height: img.height(),
            });
        }
        let mut features = Vec::with_capacity(self.dim());
        for row in 0..GRID_ROWS {
            for col in 0..GRID_COLS {
                let (x0, y0) = (col * CELL_W, row * CELL_H);
                let area = (CELL_W * CELL_H) as f64;
                let mut sum = 0.0;
                let mut sum_sq = 0.0;
                let mut ink = 0u32;
                let mut wsum = 0.0;
                let mut wx = 0.0;
                let mut wy = 0.0;
                for y in y0..y0 + CELL_H {
                    for x in x0..x0 + CELL_W {
                        let v = img.get(x, y) as f64 / 255.0;
                        sum += v;
                        sum_sq += v * v;
                        if v > 0.0 {
                            ink += 1;
                        }
                        wsum += v;
                        wx += v * (x - x0) as f64;
                        wy += v * (y - y0) as f64;
                    }
                }
                let mean = sum / area;
                let var = (sum_sq / area - mean * mean).max(0.0);
                features.push(mean);
                features.push(var.sqrt());
                features.push(ink as f64 / area);
                if wsum > 0.0 {
                    features.push((wx / wsum - (CELL_W as f64 - 1.0) / 2.0) / CELL_W as f64);
                    features.push((wy / wsum - (CELL_H as f64 - 1.0) / 2.0) / CELL_H as f64);
                } else {
                    features.push(0.0);
                    features.push(0.0);
                }
            }
        }
        FeatureVector::new(features)
    }
}

/// Sample role within the verification protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleLabel {
    Genuine,
    ForgerySkilled,
    ForgeryRandom,
}

impl SampleLabel {
    fn as_str(self) -> &'static str {
        match self {
            SampleLabel::Genuine => "genuine",
            SampleLabel::ForgerySkilled => "forgery_skilled",
            SampleLabel::ForgeryRandom => "forgery_random",
        }
    }

    fn parse(s: &str) -> Option<SampleLabel> {
        match s {
            "genuine" => Some(SampleLabel::Genuine),
            "forgery_skilled" => Some(SampleLabel::ForgerySkilled),
            "forgery_random" => Some(SampleLabel::ForgeryRandom),
            _ => None,
        }
    }

    fn code(self) -> u32 {
        match self {
            SampleLabel::Genuine => 0,
            SampleLabel::ForgerySkilled => 1,
            SampleLabel::ForgeryRandom => 2,
        }
    }

    fn from_code(code: u32) -> Option<SampleLabel> {
        match code {
            0 => Some(SampleLabel::Genuine),
            1 => Some(SampleLabel::ForgerySkilled),
            2 => Some(SampleLabel::ForgeryRandom),
            _ => None,
        }
    }
}

impl fmt::Display for SampleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorRecord {
    pub writer_id: u32,
    pub sample_id: u32,
    pub label: SampleLabel,
    pub vector: FeatureVector,
}

/// A collection of feature vectors with one fixed dimension.
#[derive(Debug, Clone, Default)]
pub struct VectorStore {
    pub records: Vec<VectorRecord>,
}

const BINARY_MAGIC: &[u8; 4] = b"SVFV";

/// Loads a store and groups the vectors per writer, record order preserved.
pub fn load_precomputed(path: &Path) -> Result<BTreeMap<u32, Vec<FeatureVector>>> {
    let store = VectorStore::load(path)?;
    let mut map: BTreeMap<u32, Vec<FeatureVector>> = BTreeMap::new();
    for r in store.records {
        map.entry(r.writer_id).or_default().push(r.vector);
    }
    Ok(map)
}

impl VectorStore {
    pub fn dim(&self) -> Option<usize> {
        self.records.first().map(|r| r.vector.dim())
    }

    pub fn push(&mut self, record: VectorRecord) -> Result<()> {
        if let Some(dim) = self.dim() {
            if record.vector.dim() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: record.vector.dim(),
                });
            }
        }
        self.records.push(record);
        Ok(())
    }

    /// Groups records by writer, preserving record order within each writer.
    pub fn by_writer(&self) -> BTreeMap<u32, Vec<&VectorRecord>> {
        let mut map: BTreeMap<u32, Vec<&VectorRecord>> = BTreeMap::new();
        for r in &self.records {
            map.entry(r.writer_id).or_default().push(r);
        }
        map
    }

    /// Text format: header `dim=<D>`, then one record per line as
    /// `writer_id,sample_id,label,v1,...,vD`. Values use shortest
    /// round-trip decimal formatting, so save-then-load is lossless.
    pub fn save_text(&self, path: &Path) -> Result<()> {
        let dim = self.dim().unwrap_or(0);
        let mut out = String::new();
        out.push_str(&format!("dim={dim}\n"));
        for r in &self.records {
            out.push_str(&format!("{},{},{}", r.writer_id, r.sample_id, r.label));
            for v in r.vector.values() {
                out.push(',');
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let dim = self.dim().unwrap_or(0) as u32;
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io_err = |e| Error::io(path, e);
        w.write_all(BINARY_MAGIC).map_err(io_err)?;
        w.write_all(&dim.to_le_bytes()).map_err(io_err)?;
        w.write_all(&(self.records.len() as u32).to_le_bytes())
            .map_err(io_err)?;
        for r in &self.records {
            w.write_all(&r.writer_id.to_le_bytes()).map_err(io_err)?;
            w.write_all(&r.sample_id.to_le_bytes()).map_err(io_err)?;
            w.write_all(&r.label.code().to_le_bytes()).map_err(io_err)?;
            for v in r.vector.values() {
                w.write_all(&v.to_le_bytes()).map_err(io_err)?;
            }
        }
        w.flush().map_err(io_err)
    }

    /// Loads either format, sniffing the binary magic.
    pub fn load(path: &Path) -> Result<VectorStore> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = BufReader::new(file);
        let head = reader.fill_buf().map_err(|e| Error::io(path, e))?;
        if head.starts_with(BINARY_MAGIC) {
            Self::load_binary(reader, path)
        } else {
            Self::load_text(reader)
        }
    }

    fn load_text(reader: impl BufRead) -> Result<VectorStore> {
        let parse_err = |line: usize, reason: &str| Error::StoreParse {
            line,
            reason: reason.to_string(),
        };
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
        let header = header.map_err(|e| parse_err(1, &e.to_string()))?;
        let dim: usize = header
            .strip_prefix("dim=")
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| parse_err(1, "expected `dim=<D>` header"))?;

        let mut store = VectorStore::default();
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line.map_err(|e| parse_err(line_no, &e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let writer_id: u32 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(line_no, "bad writer id"))?;
            let sample_id: u32 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(line_no, "bad sample id"))?;
            let label = parts
                .next()
                .and_then(SampleLabel::parse)
                .ok_or_else(|| parse_err(line_no, "bad label"))?;
            let values: Vec<f64> = parts
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(line_no, &format!("bad value: {e}")))?;
            if values.len() != dim {
                return Err(parse_err(
                    line_no,
                    &format!(
                        "record {writer_id}/{sample_id}: expected {dim} values, got {}",
                        values.len()
                    ),
                ));
            }
            let vector = FeatureVector::new(values)
                .map_err(|e| parse_err(line_no, &format!("record {writer_id}/{sample_id}: {e}")))?;
            store.records.push(VectorRecord {
                writer_id,
                sample_id,
                label,
                vector,
            });
        }
        Ok(store)
    }

    fn load_binary(mut reader: impl Read, path: &Path) -> Result<VectorStore> {
        let parse_err = |record: usize, reason: &str| Error::StoreParse {
            line: record,
            reason: reason.to_string(),
        };
        let mut header = [0u8; 12];
        reader
            .read_exact(&mut header)
            .map_err(|e| Error::io(path, e))?;
        let dim = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let count = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let mut store = VectorStore::default();
        for record in 0..count {
            let mut ids = [0u8; 12];
            reader
                .read_exact(&mut ids)
                .map_err(|_| parse_err(record, "truncated record header"))?;
            let writer_id = u32::from_le_bytes(ids[0..4].try_into().unwrap());
            let sample_id = u32::from_le_bytes(ids[4..8].try_into().unwrap());
            let label_code = u32::from_le_bytes(ids[8..12].try_into().unwrap());
            let label = SampleLabel::from_code(label_code)
                .ok_or_else(|| parse_err(record, &format!("bad label code {label_code}")))?;
            let mut values = vec![0.0f64; dim];
            let mut buf = [0u8; 8];
            for v in values.iter_mut() {
                reader
                    .read_exact(&mut buf)
                    .map_err(|_| parse_err(record, "truncated vector data"))?;
                *v = f64::from_le_bytes(buf);
            }
            let vector = FeatureVector::new(values)
                .map_err(|e| parse_err(record, &format!("record {writer_id}/{sample_id}: {e}")))?;
            store.records.push(VectorRecord {
                writer_id,
                sample_id,
                label,
                vector,
            });
        }
        Ok(store)
    }
}
