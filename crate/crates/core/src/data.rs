//! Dataset construction: IDX-format image ingestion, random resized crops,
//! contrastive pairing, synthetic class blobs and the 1-D blow-up triplets.
//!
//! Everything is seeded and pure; the full experiment suite runs on the
//! synthetic generators with zero external downloads, and switches to
//! images when a directory with the standard IDX files is supplied.

use crate::error::{Error, Result};
use crate::numerics::{CounterRng, Matrix};
use crate::similarity::{ContrastiveDataset, Pair};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const IMAGE_SIDE: usize = 28;
const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const IMAGES_FILE: &str = "train-images-idx3-ubyte";
pub const LABELS_FILE: &str = "train-labels-idx1-ubyte";

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// A 28x28 grayscale image with pixels in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    pixels: Vec<f64>,
}

impl ImageGrid {
    pub fn new(pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != IMAGE_PIXELS {
            return Err(Error::invalid(format!(
                "image needs exactly {IMAGE_PIXELS} pixels, got {}",
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("pixels must lie in [0, 1]"));
        }
        Ok(ImageGrid { pixels })
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    fn at(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * IMAGE_SIDE + col]
    }
}

/// Points with contiguous integer labels starting at 0.
#[derive(Debug, Clone)]
pub struct LabeledPoints {
    pub points: Matrix,
    pub labels: Vec<usize>,
}

impl LabeledPoints {
    pub fn new(points: Matrix, labels: Vec<usize>) -> Result<Self> {
        if points.rows() != labels.len() {
            return Err(Error::invalid(format!(
                "{} points but {} labels",
                points.rows(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::invalid("need at least one labeled point"));
        }
        let max = *labels.iter().max().unwrap();
        for g in 0..=max {
            if !labels.contains(&g) {
                return Err(Error::invalid(format!(
                    "labels must be contiguous from 0; {g} is missing"
                )));
            }
        }
        Ok(LabeledPoints { points, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().unwrap() + 1
    }

    /// CSV export: one row per vector, label column last.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.len() {
            let row: Vec<String> = self
                .points
                .row(i)
                .iter()
                .map(|x| format!("{x:.16e}"))
                .collect();
            out.push_str(&row.join(","));
            out.push_str(&format!(",{}\n", self.labels[i]));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// IDX ingestion
// ---------------------------------------------------------------------------

fn read_u32_be<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|_| {
        Error::DataFormat("file truncated while reading a header word".to_string())
    })?;
    Ok(u32::from_be_bytes(buf))
}

fn read_idx_images(path: &Path) -> Result<Vec<Vec<u8>>> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let magic = read_u32_be(&mut r)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::DataFormat(format!(
            "bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}"
        )));
    }
    let count = read_u32_be(&mut r)? as usize;
    let rows = read_u32_be(&mut r)? as usize;
    let cols = read_u32_be(&mut r)? as usize;
    if rows != IMAGE_SIDE || cols != IMAGE_SIDE {
        return Err(Error::DataFormat(format!(
            "expected {IMAGE_SIDE}x{IMAGE_SIDE} images, file declares {rows}x{cols}"
        )));
    }
    let mut data = vec![0u8; count * rows * cols];
    r.read_exact(&mut data).map_err(|_| {
        Error::DataFormat(format!(
            "image file truncated: expected {} pixel bytes",
            count * rows * cols
        ))
    })?;
    Ok(data.chunks_exact(rows * cols).map(|c| c.to_vec()).collect())
}

fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let magic = read_u32_be(&mut r)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::DataFormat(format!(
            "bad label magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}"
        )));
    }
    let count = read_u32_be(&mut r)? as usize;
    let mut data = vec![0u8; count];
    r.read_exact(&mut data).map_err(|_| {
        Error::DataFormat(format!("label file truncated: expected {count} bytes"))
    })?;
    Ok(data)
}

/// Write images in IDX format (big-endian header, raw bytes).
pub fn write_idx_images(path: &Path, images: &[Vec<u8>]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(&IDX_IMAGES_MAGIC.to_be_bytes())?;
    w.write_all(&(images.len() as u32).to_be_bytes())?;
    w.write_all(&(IMAGE_SIDE as u32).to_be_bytes())?;
    w.write_all(&(IMAGE_SIDE as u32).to_be_bytes())?;
    for img in images {
        if img.len() != IMAGE_PIXELS {
            return Err(Error::invalid("every image needs 784 bytes"));
        }
        w.write_all(img)?;
    }
    Ok(())
}

/// Write labels in IDX format.
pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(&IDX_LABELS_MAGIC.to_be_bytes())?;
    w.write_all(&(labels.len() as u32).to_be_bytes())?;
    w.write_all(labels)?;
    Ok(())
}

/// Load `n` image/label pairs sampled without replacement from the IDX
/// files in `dir`, pixels scaled to [0, 1], flattened row-major to 784.
pub fn load_mnist(dir: &Path, n: usize, seed: u64) -> Result<LabeledPoints> {
    let images = read_idx_images(&dir.join(IMAGES_FILE))?;
    let labels = read_idx_labels(&dir.join(LABELS_FILE))?;
    if images.len() != labels.len() {
        return Err(Error::DataFormat(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    if n == 0 || n > images.len() {
        return Err(Error::invalid(format!(
            "requested {n} samples from a file with {}",
            images.len()
        )));
    }
    // Partial Fisher-Yates: the first n entries of a seeded shuffle.
    let mut rng = CounterRng::new(seed);
    let mut indices: Vec<usize> = (0..images.len()).collect();
    for i in 0..n {
        let j = i + rng.below(indices.len() - i);
        indices.swap(i, j);
    }
    let mut points = Matrix::zeros(n, IMAGE_PIXELS);
    let mut chosen_labels = Vec::with_capacity(n);
    for (row, &idx) in indices[..n].iter().enumerate() {
        for (col, &byte) in images[idx].iter().enumerate() {
            points[(row, col)] = byte as f64 / 255.0;
        }
        chosen_labels.push(labels[idx] as usize);
    }
    // Remap labels to a contiguous range in case the sample misses classes.
    let mut classes: Vec<usize> = chosen_labels.clone();
    classes.sort_unstable();
    classes.dedup();
    let remapped = chosen_labels
        .iter()
        .map(|l| classes.binary_search(l).unwrap())
        .collect();
    LabeledPoints::new(points, remapped)
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

/// Crop a uniformly placed square of side fraction ~ U(lo, hi), then
/// bilinearly resize back to 28x28 (half-pixel sample positions, clamped).
pub fn random_resized_crop(
    img: &ImageGrid,
    scale_range: (f64, f64),
    seed: u64,
) -> Result<ImageGrid> {
    let (lo, hi) = scale_range;
    if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
        return Err(Error::invalid(format!(
            "scale range must satisfy 0 < lo <= hi <= 1, got ({lo}, {hi})"
        )));
    }
    let mut rng = CounterRng::new(seed);
    let s = lo + (hi - lo) * rng.uniform();
    let crop = ((s * IMAGE_SIDE as f64).ceil() as usize).clamp(1, IMAGE_SIDE);
    let top = rng.below(IMAGE_SIDE - crop + 1);
    let left = rng.below(IMAGE_SIDE - crop + 1);

    let scale = crop as f64 / IMAGE_SIDE as f64;
    let mut out = vec![0.0; IMAGE_PIXELS];
    for r in 0..IMAGE_SIDE {
        let src_r = ((r as f64 + 0.5) * scale - 0.5).clamp(0.0, (crop - 1) as f64);
        let r0 = src_r.floor() as usize;
        let r1 = (r0 + 1).min(crop - 1);
        let fr = src_r - r0 as f64;
        for c in 0..IMAGE_SIDE {
            let src_c = ((c as f64 + 0.5) * scale - 0.5).clamp(0.0, (crop - 1) as f64);
            let c0 = src_c.floor() as usize;
            let c1 = (c0 + 1).min(crop - 1);
            let fc = src_c - c0 as f64;
            let v00 = img.at(top + r0, left + c0);
            let v01 = img.at(top + r0, left + c1);
            let v10 = img.at(top + r1, left + c0);
            let v11 = img.at(top + r1, left + c1);
            let v = v00 * (1.0 - fr) * (1.0 - fc)
                + v01 * (1.0 - fr) * fc
                + v10 * fr * (1.0 - fc)
                + v11 * fr * fc;
            out[r * IMAGE_SIDE + c] = v.clamp(0.0, 1.0);
        }
    }
    ImageGrid::new(out)
}

/// Positive-pair transform used when pairing anchors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Augmentation {
    /// Positive pairs are exact copies of the anchor.
    Identity,
    /// Random resized crop with the given side-fraction range; only valid
    /// for 784-dimensional image data.
    ResizedCrop { lo: f64, hi: f64 },
}

impl Augmentation {
    fn apply(&self, point: &[f64], seed: u64) -> Result<Vec<f64>> {
        match self {
            Augmentation::Identity => Ok(point.to_vec()),
            Augmentation::ResizedCrop { lo, hi } => {
                if point.len() != IMAGE_PIXELS {
                    return Err(Error::invalid(format!(
                        "resized crop needs 784-dimensional inputs, got {}",
                        point.len()
                    )));
                }
                let img = ImageGrid::new(point.to_vec())?;
                Ok(random_resized_crop(&img, (*lo, *hi), seed)?.pixels().to_vec())
            }
        }
    }
}

/// Build a paired dataset: per anchor, `q_pos` augmented positives and
/// `q_neg` uniform negatives drawn from the rest of the base set (never the
/// anchor itself; negatives are not augmented).
pub fn build_contrastive_dataset(
    base: &LabeledPoints,
    q_pos: usize,
    q_neg: usize,
    aug: Augmentation,
    seed: u64,
) -> Result<ContrastiveDataset> {
    if q_pos + q_neg == 0 {
        return Err(Error::invalid("need at least one pair per anchor"));
    }
    if q_neg > 0 && base.len() < 2 {
        return Err(Error::invalid(
            "negatives need a base set with at least two points",
        ));
    }
    let n = base.len();
    let mut rng = CounterRng::new(seed);
    let mut anchors = Vec::with_capacity(n);
    let mut pairs = Vec::with_capacity(n);
    for i in 0..n {
        let anchor = base.points.row(i).to_vec();
        let mut group = Vec::with_capacity(q_pos + q_neg);
        for q in 0..q_pos {
            let aug_seed = crate::numerics::derive_seed(seed, (i * q_pos + q) as u64 + 1);
            group.push(Pair {
                point: aug.apply(&anchor, aug_seed)?,
                alpha: 1.0,
            });
        }
        for _ in 0..q_neg {
            let other = loop {
                let j = rng.below(n);
                if j != i {
                    break j;
                }
            };
            group.push(Pair {
                point: base.points.row(other).to_vec(),
                alpha: -1.0,
            });
        }
        anchors.push(anchor);
        pairs.push(group);
    }
    ContrastiveDataset::new(anchors, pairs)
}

// ---------------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------------

/// Gaussian class blobs with means on the unit sphere, clipped to
/// [-2, 2] per coordinate so inputs stay uniformly bounded.
pub fn synth_blobs(
    classes: usize,
    dim: usize,
    n_per_class: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<LabeledPoints> {
    if classes < 2 {
        return Err(Error::invalid("need at least two classes"));
    }
    if dim == 0 || n_per_class == 0 {
        return Err(Error::invalid("dimension and class size must be positive"));
    }
    if noise_sd < 0.0 {
        return Err(Error::invalid("noise level must be nonnegative"));
    }
    let mut rng = CounterRng::new(seed);
    let mut means = Vec::with_capacity(classes);
    for _ in 0..classes {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
            let norm = crate::numerics::norm2(&v);
            if norm > 1e-6 {
                means.push(v.iter().map(|x| x / norm).collect::<Vec<f64>>());
                break;
            }
        }
    }
    let mut points = Matrix::zeros(classes * n_per_class, dim);
    let mut labels = Vec::with_capacity(classes * n_per_class);
    for (g, mean) in means.iter().enumerate() {
        for i in 0..n_per_class {
            let row = g * n_per_class + i;
            for (j, &mu) in mean.iter().enumerate() {
                points[(row, j)] = (mu + noise_sd * rng.normal()).clamp(-2.0, 2.0);
            }
            labels.push(g);
        }
    }
    let out = LabeledPoints::new(points, labels)?;
    assert!(out.points.max_abs() <= 2.0);
    Ok(out)
}

/// 1-D triplet dataset on which the dot-product flow provably blows up:
/// anchors `x ~ U(0.5, 1)`, positives `x + 0.5`, negatives `x - 0.5`.
/// Returns the dataset and the exactly computed constant
/// `C = (1/N) sum x_n (x_n^+ - x_n^-) > 0`.
pub fn divergence_dataset_1d(n: usize, seed: u64) -> Result<(ContrastiveDataset, f64)> {
    if n == 0 {
        return Err(Error::invalid("need at least one triplet"));
    }
    let mut rng = CounterRng::new(seed);
    let mut anchors = Vec::with_capacity(n);
    let mut pairs = Vec::with_capacity(n);
    let mut c = 0.0;
    for _ in 0..n {
        let x = 0.5 + 0.5 * rng.uniform();
        let pos = x + 0.5;
        let neg = x - 0.5;
        c += x * (pos - neg);
        anchors.push(vec![x]);
        pairs.push(vec![
            Pair {
                point: vec![pos],
                alpha: 1.0,
            },
            Pair {
                point: vec![neg],
                alpha: -1.0,
            },
        ]);
    }
    let dataset = ContrastiveDataset::new(anchors, pairs)?;
    assert!(dataset.c_in() <= 1.5);
    Ok((dataset, c / n as f64))
}
