//! Datasets and everything that produces or transforms them: IDX image
//! files, global normalization, pad/crop/flip augmentation, synthetic blob
//! and digit generators, and deterministic batch iteration.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Shape};

const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// Mixed into the shuffle seed per epoch so every epoch gets its own
/// permutation stream, decorrelated from other consumers of the same seed.
const EPOCH_SHUFFLE_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// A labelled sample collection: one row-major sample per matrix row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Matrix,
    labels: Vec<usize>,
    class_count: usize,
    shape: Shape,
    /// The (mean, std) that was subtracted/divided out, if any; carried so
    /// evaluation data can reuse training statistics.
    normalization: Option<(f64, f64)>,
}

impl Dataset {
    pub fn new(
        samples: Matrix,
        labels: Vec<usize>,
        class_count: usize,
        shape: Shape,
    ) -> Result<Dataset> {
        if samples.rows() != labels.len() {
            return Err(Error::shape(
                "dataset",
                format!("{} samples", samples.rows()),
                format!("{} labels", labels.len()),
            ));
        }
        if samples.cols() != shape.len() {
            return Err(Error::shape(
                "dataset",
                format!("{} values per sample", samples.cols()),
                format!("shape {shape}"),
            ));
        }
        if class_count == 0 {
            return Err(Error::InvalidArgument("class count must be positive".into()));
        }
        for &y in &labels {
            if y >= class_count {
                return Err(Error::LabelOutOfRange {
                    label: y,
                    classes: class_count,
                });
            }
        }
        Ok(Dataset {
            samples,
            labels,
            class_count,
            shape,
            normalization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn samples(&self) -> &Matrix {
        &self.samples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn normalization(&self) -> Option<(f64, f64)> {
        self.normalization
    }

    /// Copies the given rows into a batch.
    pub fn gather(&self, indices: &[usize]) -> (Matrix, Vec<usize>) {
        let mut data = Vec::with_capacity(indices.len() * self.samples.cols());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.samples.row(i));
            labels.push(self.labels[i]);
        }
        let batch = Matrix::new(indices.len(), self.samples.cols(), data)
            .expect("rows of a valid dataset");
        (batch, labels)
    }

    /// Subtracts the scalar global mean and divides by the scalar global
    /// standard deviation (population form), recording both for reuse.
    pub fn normalize_global(&self) -> Result<Dataset> {
        if self.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "normalization needs at least 2 samples, got {}",
                self.len()
            )));
        }
        let values = self.samples.data();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if std < 1e-12 {
            return Err(Error::DegenerateInput(format!(
                "global standard deviation is {std}; the data is constant"
            )));
        }
        let mut out = self.normalize_with(mean, std)?;
        out.normalization = Some((mean, std));
        Ok(out)
    }

    /// Applies externally supplied normalization statistics — the test-set
    /// path, which must reuse the training statistics.
    pub fn normalize_with(&self, mean: f64, std: f64) -> Result<Dataset> {
        if !(std > 0.0 && std.is_finite() && mean.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "bad normalization stats: mean {mean}, std {std}"
            )));
        }
        let data = self
            .samples
            .data()
            .iter()
            .map(|v| (v - mean) / std)
            .collect();
        Ok(Dataset {
            samples: Matrix::new(self.samples.rows(), self.samples.cols(), data)
                .expect("same size as source"),
            labels: self.labels.clone(),
            class_count: self.class_count,
            shape: self.shape,
            normalization: Some((mean, std)),
        })
    }

    /// Seed- and epoch-determined shuffle of all indices, cut into
    /// contiguous chunks of `batch_size` (the last may be smaller).
    pub fn batches(&self, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
        batch_indices(self.len(), batch_size, seed, epoch)
    }

    /// `label,dim_0,...` rows for flat datasets (the blob-export format).
    pub fn to_csv_string(&self) -> String {
        let d = self.samples.cols();
        let mut out = String::from("label");
        for k in 0..d {
            out.push_str(&format!(",dim_{k}"));
        }
        out.push('\n');
        for (i, &y) in self.labels.iter().enumerate() {
            out.push_str(&y.to_string());
            for v in self.samples.row(i) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn batch_indices(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch size must be at least 1");
    let mut perm: Vec<usize> = (0..n).collect();
    let salt = (epoch as u64).wrapping_add(1).wrapping_mul(EPOCH_SHUFFLE_SALT);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
    perm.shuffle(&mut rng);
    perm.chunks(batch_size).map(|c| c.to_vec()).collect()
}

struct IdxReader<'a> {
    bytes: &'a [u8],
    offset: usize,
    file: &'static str,
}

impl<'a> IdxReader<'a> {
    fn u32(&mut self, what: &str) -> Result<u32> {
        let Some(chunk) = self.bytes.get(self.offset..self.offset + 4) else {
            return Err(Error::Parse {
                offset: self.offset as u64,
                message: format!("{} file truncated reading {what}", self.file),
            });
        };
        self.offset += 4;
        Ok(u32::from_be_bytes(chunk.try_into().expect("4-byte slice")))
    }

    fn payload(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let Some(chunk) = self.bytes.get(self.offset..self.offset + len) else {
            return Err(Error::Parse {
                offset: self.bytes.len().max(self.offset) as u64,
                message: format!(
                    "{} file truncated: {what} needs {len} bytes from offset {}, file has {}",
                    self.file,
                    self.offset,
                    self.bytes.len()
                ),
            });
        };
        self.offset += len;
        Ok(chunk)
    }
}

/// Parses the big-endian IDX pair (image magic 0x00000803, label magic
/// 0x00000801). Pixel bytes map to reals in [0, 1] by division by 255; the
/// class count is the largest label plus one.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let image_bytes = fs::read(images_path)?;
    let label_bytes = fs::read(labels_path)?;
    parse_idx(&image_bytes, &label_bytes)
}

fn parse_idx(image_bytes: &[u8], label_bytes: &[u8]) -> Result<Dataset> {
    let mut images = IdxReader {
        bytes: image_bytes,
        offset: 0,
        file: "image",
    };
    let magic = images.u32("magic")?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: format!("image magic {magic:#010x}, expected {IDX_IMAGE_MAGIC:#010x}"),
        });
    }
    let count = images.u32("image count")? as usize;
    let rows = images.u32("row count")? as usize;
    let cols = images.u32("column count")? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::Parse {
            offset: 8,
            message: format!("degenerate image dimensions {rows}x{cols}"),
        });
    }
    let pixels = images.payload(count * rows * cols, "pixel data")?;

    let mut labels = IdxReader {
        bytes: label_bytes,
        offset: 0,
        file: "label",
    };
    let magic = labels.u32("magic")?;
    if magic != IDX_LABEL_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: format!("label magic {magic:#010x}, expected {IDX_LABEL_MAGIC:#010x}"),
        });
    }
    let label_count = labels.u32("label count")? as usize;
    if label_count != count {
        return Err(Error::Parse {
            offset: 4,
            message: format!("{count} images but {label_count} labels"),
        });
    }
    let label_payload = labels.payload(count, "label data")?;

    let data: Vec<f64> = pixels.iter().map(|&b| b as f64 / 255.0).collect();
    let labels: Vec<usize> = label_payload.iter().map(|&b| b as usize).collect();
    let class_count = labels.iter().copied().max().map_or(1, |m| m + 1);
    Dataset::new(
        Matrix::new(count, rows * cols, data).expect("sized from header"),
        labels,
        class_count,
        Shape::Image {
            channels: 1,
            height: rows,
            width: cols,
        },
    )
}

/// Writes the dataset as an IDX pair. Values are quantized to the nearest
/// of the 256 pixel levels; data already on the k/255 grid round-trips
/// exactly through `load_idx`.
pub fn write_idx(images_path: &Path, labels_path: &Path, d: &Dataset) -> Result<()> {
    let (rows, cols) = match d.shape() {
        Shape::Image {
            channels: 1,
            height,
            width,
        } => (height, width),
        other => {
            return Err(Error::InvalidArgument(format!(
                "IDX files hold single-channel images, got {other}"
            )))
        }
    };
    if d.class_count() > 256 {
        return Err(Error::InvalidArgument(format!(
            "IDX labels are bytes; {} classes do not fit",
            d.class_count()
        )));
    }
    let mut image_bytes = Vec::with_capacity(16 + d.len() * rows * cols);
    image_bytes.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
    image_bytes.extend_from_slice(&(d.len() as u32).to_be_bytes());
    image_bytes.extend_from_slice(&(rows as u32).to_be_bytes());
    image_bytes.extend_from_slice(&(cols as u32).to_be_bytes());
    for v in d.samples().data() {
        image_bytes.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
    }
    let mut label_bytes = Vec::with_capacity(8 + d.len());
    label_bytes.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
    label_bytes.extend_from_slice(&(d.len() as u32).to_be_bytes());
    label_bytes.extend(d.labels().iter().map(|&y| y as u8));
    fs::write(images_path, image_bytes)?;
    fs::write(labels_path, label_bytes)?;
    Ok(())
}

/// Mirrors every sample of an image batch horizontally.
pub fn flip_horizontal(batch: &Matrix, shape: Shape) -> Result<Matrix> {
    let Shape::Image {
        channels,
        height,
        width,
    } = shape
    else {
        return Err(Error::InvalidArgument(format!(
            "horizontal flip needs an image shape, got {shape}"
        )));
    };
    let mut out = batch.clone();
    for b in 0..batch.rows() {
        let row = out.row_mut(b);
        for c in 0..channels {
            for y in 0..height {
                let line = &mut row[(c * height + y) * width..(c * height + y + 1) * width];
                line.reverse();
            }
        }
    }
    Ok(out)
}

/// Zero-pads `pad` pixels on every side, takes a uniformly random
/// crop×crop window, and mirrors it horizontally with probability
/// `flip_prob` — all per sample, deterministic in the seed. The per-sample
/// draws are: y offset, x offset, flip.
pub fn augment_pad_crop_flip(
    batch: &Matrix,
    shape: Shape,
    pad: usize,
    crop: usize,
    flip_prob: f64,
    seed: u64,
) -> Result<Matrix> {
    let Shape::Image {
        channels,
        height,
        width,
    } = shape
    else {
        return Err(Error::InvalidArgument(format!(
            "augmentation needs an image shape, got {shape}"
        )));
    };
    if batch.cols() != shape.len() {
        return Err(Error::shape(
            "augment",
            format!("batch of {}-value samples", batch.cols()),
            format!("shape {shape}"),
        ));
    }
    if crop == 0 || crop > height + 2 * pad || crop > width + 2 * pad {
        return Err(Error::InvalidArgument(format!(
            "crop {crop} does not fit the padded {}x{} image",
            height + 2 * pad,
            width + 2 * pad
        )));
    }
    if !(0.0..=1.0).contains(&flip_prob) {
        return Err(Error::InvalidArgument(format!(
            "flip probability must be in [0, 1], got {flip_prob}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_oy = height + 2 * pad - crop;
    let max_ox = width + 2 * pad - crop;
    let mut out = Matrix::zeros(batch.rows(), channels * crop * crop);
    for b in 0..batch.rows() {
        let oy = rng.random_range(0..=max_oy);
        let ox = rng.random_range(0..=max_ox);
        let flip = rng.random::<f64>() < flip_prob;
        let src = batch.row(b);
        let dst = out.row_mut(b);
        for c in 0..channels {
            for y in 0..crop {
                // Source row in unpadded coordinates; rows in the padding
                // stay zero.
                let sy = (oy + y) as isize - pad as isize;
                if sy < 0 || sy >= height as isize {
                    continue;
                }
                for x in 0..crop {
                    let cx = if flip { crop - 1 - x } else { x };
                    let sx = (ox + cx) as isize - pad as isize;
                    if sx < 0 || sx >= width as isize {
                        continue;
                    }
                    dst[(c * crop + y) * crop + x] =
                        src[(c * height + sy as usize) * width + sx as usize];
                }
            }
        }
    }
    Ok(out)
}

/// Isotropic Gaussian clouds: `n_per_class` points of standard deviation
/// `spread` around each center row, in class-major order.
pub fn make_blobs(
    class_count: usize,
    dim: usize,
    n_per_class: usize,
    centers: &Matrix,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if centers.rows() != class_count || centers.cols() != dim {
        return Err(Error::shape(
            "make_blobs",
            format!("centers {}x{}", centers.rows(), centers.cols()),
            format!("{class_count} classes in {dim} dims"),
        ));
    }
    if class_count == 0 || n_per_class == 0 || dim == 0 {
        return Err(Error::InvalidArgument(
            "blobs need at least one class, one point, one dimension".into(),
        ));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "spread must be non-negative, got {spread}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = class_count * n_per_class;
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for c in 0..class_count {
        let center = centers.row(c);
        for _ in 0..n_per_class {
            for &mu in center {
                let g: f64 = rng.sample(StandardNormal);
                data.push(mu + spread * g);
            }
            labels.push(c);
        }
    }
    Dataset::new(
        Matrix::new(n, dim, data).expect("sized buffer"),
        labels,
        class_count,
        Shape::Flat(dim),
    )
}

/// 5×7 digit glyphs; each string row is one scanline, '#' marking ink.
const DIGIT_GLYPHS: [[&str; 7]; 10] = [
    [
        " ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### ",
    ],
    [
        "  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### ",
    ],
    [
        " ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####",
    ],
    [
        " ### ", "#   #", "    #", "  ## ", "    #", "#   #", " ### ",
    ],
    [
        "   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # ",
    ],
    [
        "#####", "#    ", "#### ", "    #", "    #", "#   #", " ### ",
    ],
    [
        " ### ", "#    ", "#    ", "#### ", "#   #", "#   #", " ### ",
    ],
    [
        "#####", "    #", "   # ", "  #  ", "  #  ", " #   ", " #   ",
    ],
    [
        " ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### ",
    ],
    [
        " ### ", "#   #", "#   #", " ####", "    #", "    #", " ### ",
    ],
];

const DIGIT_SIZE: usize = 28;
/// Pixels per glyph cell before the random scale jitter.
const DIGIT_PITCH: f64 = 2.8;

/// Bilinear sample of a glyph bitmap at fractional glyph coordinates; the
/// region outside the 5×7 box reads as blank.
fn glyph_sample(glyph: &[&str; 7], gx: f64, gy: f64) -> f64 {
    let x0 = gx.floor();
    let y0 = gy.floor();
    let fx = gx - x0;
    let fy = gy - y0;
    let at = |xi: f64, yi: f64| -> f64 {
        if !(0.0..5.0).contains(&xi) || !(0.0..7.0).contains(&yi) {
            return 0.0;
        }
        let row = glyph[yi as usize].as_bytes();
        if row[xi as usize] == b'#' {
            1.0
        } else {
            0.0
        }
    };
    let v00 = at(x0, y0);
    let v10 = at(x0 + 1.0, y0);
    let v01 = at(x0, y0 + 1.0);
    let v11 = at(x0 + 1.0, y0 + 1.0);
    (v00 * (1.0 - fx) + v10 * fx) * (1.0 - fy) + (v01 * (1.0 - fx) + v11 * fx) * fy
}

/// Synthetic handwritten-digit stand-in: 28×28 grayscale renderings of ten
/// fixed glyphs under random rotation (±0.2 rad), per-axis scale
/// (0.85–1.15), translation (±2.5 px), foreground level (0.7–1.0) and
/// additive noise (U[0, 0.08)). Labels cycle 0–9. Values are quantized to
/// the 256 pixel levels so an IDX round-trip is exact.
pub fn make_digits(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = DIGIT_SIZE;
    let mut data = Vec::with_capacity(n * size * size);
    let mut labels = Vec::with_capacity(n);
    let center = (size as f64 - 1.0) / 2.0;
    for i in 0..n {
        let digit = i % 10;
        let glyph = &DIGIT_GLYPHS[digit];
        let theta: f64 = rng.random_range(-0.2..0.2);
        let sx = rng.random_range(0.85..1.15);
        let sy = rng.random_range(0.85..1.15);
        let tx = rng.random_range(-2.5..2.5);
        let ty = rng.random_range(-2.5..2.5);
        let fg = rng.random_range(0.7..1.0);
        let (sin, cos) = theta.sin_cos();
        for y in 0..size {
            for x in 0..size {
                // Invert the glyph→image map: undo translation, rotation,
                // and scale, then convert pixels to glyph cells.
                let px = x as f64 - center - tx;
                let py = y as f64 - center - ty;
                let rx = (cos * px + sin * py) / (DIGIT_PITCH * sx);
                let ry = (-sin * px + cos * py) / (DIGIT_PITCH * sy);
                let gx = rx + 2.5;
                let gy = ry + 3.5;
                let ink = glyph_sample(glyph, gx, gy);
                let noise = rng.random_range(0.0..0.08);
                let v = (fg * ink + noise).clamp(0.0, 1.0);
                data.push((v * 255.0).round() / 255.0);
            }
        }
        labels.push(digit);
    }
    Dataset::new(
        Matrix::new(n, size * size, data).expect("sized buffer"),
        labels,
        10,
        Shape::Image {
            channels: 1,
            height: size,
            width: size,
        },
    )
    .expect("generated labels are in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn image_shape(h: usize, w: usize) -> Shape {
        Shape::Image {
            channels: 1,
            height: h,
            width: w,
        }
    }

    /// Hand-assembled IDX pair: 2 images of 2×2, labels [1, 0].
    fn fixture_bytes() -> (Vec<u8>, Vec<u8>) {
        let mut images = Vec::new();
        images.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        images.extend_from_slice(&[0, 128, 255, 64, 10, 20, 30, 40]);
        let mut labels = Vec::new();
        labels.extend_from_slice(&0x0000_0801u32.to_be_bytes());
        labels.extend_from_slice(&2u32.to_be_bytes());
        labels.extend_from_slice(&[1, 0]);
        (images, labels)
    }

    #[test]
    fn idx_fixture_parses_exactly() {
        let (images, labels) = fixture_bytes();
        let d = parse_idx(&images, &labels).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.shape(), image_shape(2, 2));
        assert_eq!(d.labels(), &[1, 0]);
        assert_eq!(d.class_count(), 2);
        let want = [0.0, 128.0 / 255.0, 1.0, 64.0 / 255.0];
        for (got, want) in d.samples().row(0).iter().zip(&want) {
            assert_eq!(got, want);
        }
    }

    #[test]
    fn idx_wrong_magic_is_an_error_at_offset_zero() {
        let (mut images, labels) = fixture_bytes();
        images[3] = 0x99;
        match parse_idx(&images, &labels).unwrap_err() {
            Error::Parse { offset: 0, message } => assert!(message.contains("magic"), "{message}"),
            other => panic!("unexpected error {other}"),
        }

        let (images, mut labels) = fixture_bytes();
        labels[3] = 0x99;
        match parse_idx(&images, &labels).unwrap_err() {
            Error::Parse { offset: 0, message } => {
                assert!(message.contains("label magic"), "{message}")
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn idx_truncation_errors_carry_offsets() {
        let (images, labels) = fixture_bytes();
        let cut = &images[..20];
        match parse_idx(cut, &labels).unwrap_err() {
            Error::Parse { offset, message } => {
                assert_eq!(offset, 20);
                assert!(message.contains("truncated"), "{message}");
            }
            other => panic!("unexpected error {other}"),
        }

        match parse_idx(&images[..2], &labels).unwrap_err() {
            Error::Parse { offset: 0, message } => {
                assert!(message.contains("truncated"), "{message}")
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn idx_count_mismatch_is_detected() {
        let (images, mut labels) = fixture_bytes();
        labels[7] = 3;
        labels.push(0);
        match parse_idx(&images, &labels).unwrap_err() {
            Error::Parse { offset: 4, message } => {
                assert!(message.contains("2 images but 3 labels"), "{message}")
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn idx_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("img.idx");
        let labels = dir.path().join("lbl.idx");
        let d = make_digits(30, 5);
        write_idx(&images, &labels, &d).unwrap();
        let back = load_idx(&images, &labels).unwrap();
        assert_eq!(d.samples(), back.samples());
        assert_eq!(d.labels(), back.labels());
        assert_eq!(d.shape(), back.shape());
    }

    #[test]
    fn normalize_zero_two_becomes_plus_minus_one() {
        let d = Dataset::new(
            Matrix::from_rows(&[vec![0.0], vec![2.0]]),
            vec![0, 0],
            1,
            Shape::Flat(1),
        )
        .unwrap();
        let n = d.normalize_global().unwrap();
        assert_eq!(n.samples().data(), &[-1.0, 1.0]);
        assert_eq!(n.normalization(), Some((1.0, 1.0)));
    }

    #[test]
    fn normalize_rejects_constant_data() {
        let d = Dataset::new(
            Matrix::from_rows(&[vec![3.0, 3.0], vec![3.0, 3.0]]),
            vec![0, 0],
            1,
            Shape::Flat(2),
        )
        .unwrap();
        assert!(matches!(
            d.normalize_global(),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn normalized_stats_recompute_to_zero_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<f64> = (0..400).map(|_| rng.random::<f64>() * 7.0 - 1.0).collect();
        let d = Dataset::new(
            Matrix::new(40, 10, data).unwrap(),
            vec![0; 40],
            1,
            Shape::Flat(10),
        )
        .unwrap();
        let n = d.normalize_global().unwrap();
        let values = n.samples().data();
        let count = values.len() as f64;
        let mean = values.iter().sum::<f64>() / count;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
        assert!(mean.abs() < 1e-9, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 1e-9, "std {}", var.sqrt());

        // Idempotence: renormalizing moves values by less than 1e-9.
        let again = n.normalize_global().unwrap();
        for (a, b) in n.samples().data().iter().zip(again.samples().data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn normalize_with_reuses_training_stats() {
        let test = Dataset::new(
            Matrix::from_rows(&[vec![4.0, 6.0]]),
            vec![0],
            1,
            Shape::Flat(2),
        )
        .unwrap();
        let n = test.normalize_with(4.0, 2.0).unwrap();
        assert_eq!(n.samples().data(), &[0.0, 1.0]);
        assert!(test.normalize_with(1.0, 0.0).is_err());
    }

    #[test]
    fn augment_without_pad_or_flip_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..2 * 16).map(|_| rng.random()).collect();
        let batch = Matrix::new(2, 16, data).unwrap();
        let out = augment_pad_crop_flip(&batch, image_shape(4, 4), 0, 4, 0.0, 9).unwrap();
        assert_eq!(batch, out);
    }

    #[test]
    fn augment_shifts_stay_within_pad_bounds() {
        // A single lit pixel at the center of a 9×9 image: after pad-2 /
        // crop-9 the pixel must land within ±2 of the center, and across
        // seeds more than one offset must occur.
        let size = 9;
        let mut img = vec![0.0; size * size];
        img[4 * size + 4] = 1.0;
        let batch = Matrix::new(1, size * size, img).unwrap();
        let mut seen = std::collections::HashSet::new();
        for seed in 0..50 {
            let out =
                augment_pad_crop_flip(&batch, image_shape(size, size), 2, size, 0.0, seed)
                    .unwrap();
            let pos = out
                .data()
                .iter()
                .position(|&v| v == 1.0)
                .expect("pixel survives in-bounds crops");
            let (y, x) = (pos / size, pos % size);
            assert!((y as isize - 4).abs() <= 2, "y {y}");
            assert!((x as isize - 4).abs() <= 2, "x {x}");
            seen.insert(pos);
        }
        assert!(seen.len() > 3, "only {} distinct offsets", seen.len());
    }

    #[test]
    fn augment_rejects_oversized_crop() {
        let batch = Matrix::zeros(1, 16);
        assert!(augment_pad_crop_flip(&batch, image_shape(4, 4), 1, 7, 0.0, 0).is_err());
    }

    #[test]
    fn flip_mirrors_rows_and_is_an_involution() {
        let batch = Matrix::from_rows(&[vec![1.0, 2.0, 3.0, 4.0]]);
        let flipped = flip_horizontal(&batch, image_shape(2, 2)).unwrap();
        assert_eq!(flipped, Matrix::from_rows(&[vec![2.0, 1.0, 4.0, 3.0]]));
        let back = flip_horizontal(&flipped, image_shape(2, 2)).unwrap();
        assert_eq!(batch, back);

        // Augmentation with flip_prob 1 equals flip of the plain crop.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data: Vec<f64> = (0..36).map(|_| rng.random()).collect();
        let batch = Matrix::new(1, 36, data).unwrap();
        let flipped =
            augment_pad_crop_flip(&batch, image_shape(6, 6), 0, 6, 1.0, 11).unwrap();
        assert_eq!(
            flip_horizontal(&flipped, image_shape(6, 6)).unwrap(),
            batch
        );
    }

    #[test]
    fn blobs_are_deterministic_and_centered() {
        let centers = Matrix::from_rows(&[vec![2.0, 0.0], vec![-2.0, 1.0], vec![0.0, -3.0]]);
        let a = make_blobs(3, 2, 1000, &centers, 0.5, 7).unwrap();
        let b = make_blobs(3, 2, 1000, &centers, 0.5, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3000);
        // Empirical class means within 3·spread/√n of the centers.
        let bound = 3.0 * 0.5 / (1000.0f64).sqrt();
        for c in 0..3 {
            for k in 0..2 {
                let mut mean = 0.0;
                for i in c * 1000..(c + 1) * 1000 {
                    assert_eq!(a.labels()[i], c);
                    mean += a.samples().get(i, k);
                }
                mean /= 1000.0;
                assert!(
                    (mean - centers.get(c, k)).abs() < bound,
                    "class {c} dim {k}: mean {mean}"
                );
            }
        }
    }

    #[test]
    fn blobs_with_zero_spread_sit_on_centers() {
        let centers = Matrix::from_rows(&[vec![1.0, -1.0]]);
        let d = make_blobs(1, 2, 5, &centers, 0.0, 0).unwrap();
        for i in 0..5 {
            assert_eq!(d.samples().row(i), &[1.0, -1.0]);
        }
    }

    #[test]
    fn batch_partition_property() {
        for n in [1usize, 2, 3, 7, 16] {
            for b in 1..=2 * n {
                let batches = batch_indices(n, b, 42, 3);
                let mut seen = vec![false; n];
                for batch in &batches {
                    assert!(batch.len() <= b);
                    for &i in batch {
                        assert!(!seen[i], "duplicate index {i} (n={n}, b={b})");
                        seen[i] = true;
                    }
                }
                assert!(seen.iter().all(|&s| s), "missing indices (n={n}, b={b})");
                // All batches except the last are full.
                for batch in &batches[..batches.len() - 1] {
                    assert_eq!(batch.len(), b);
                }
            }
        }
    }

    #[test]
    fn batches_differ_across_epochs_but_not_runs() {
        let e0 = batch_indices(64, 16, 5, 0);
        let e1 = batch_indices(64, 16, 5, 1);
        assert_ne!(e0, e1);
        assert_eq!(e0, batch_indices(64, 16, 5, 0));
        // One batch swallowing everything.
        let all = batch_indices(10, 32, 5, 0);
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].len(), 10);
    }

    #[test]
    fn digits_are_quantized_balanced_and_seeded() {
        let d = make_digits(40, 9);
        assert_eq!(d.shape(), image_shape(28, 28));
        assert_eq!(d.class_count(), 10);
        for (i, &y) in d.labels().iter().enumerate() {
            assert_eq!(y, i % 10);
        }
        for &v in d.samples().data() {
            assert!((0.0..=1.0).contains(&v));
            let q = (v * 255.0).round() / 255.0;
            assert_eq!(v, q, "value {v} is off the pixel grid");
        }
        assert_eq!(make_digits(40, 9), d);
        assert_ne!(make_digits(40, 10), d);
        // Same digit, different instances: the jitter actually varies.
        assert_ne!(d.samples().row(0), d.samples().row(10));
    }

    #[test]
    fn gather_picks_rows() {
        let d = Dataset::new(
            Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]),
            vec![0, 1, 2],
            3,
            Shape::Flat(1),
        )
        .unwrap();
        let (batch, labels) = d.gather(&[2, 0]);
        assert_eq!(batch, Matrix::from_rows(&[vec![3.0], vec![1.0]]));
        assert_eq!(labels, vec![2, 0]);
    }

    #[test]
    fn blob_csv_format() {
        let d = Dataset::new(
            Matrix::from_rows(&[vec![0.5, -1.0]]),
            vec![1],
            2,
            Shape::Flat(2),
        )
        .unwrap();
        assert_eq!(d.to_csv_string(), "label,dim_0,dim_1\n1,0.5,-1\n");
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(Matrix::zeros(2, 3), vec![0], 1, Shape::Flat(3)).is_err());
        assert!(Dataset::new(Matrix::zeros(2, 3), vec![0, 2], 2, Shape::Flat(3)).is_err());
        assert!(Dataset::new(Matrix::zeros(2, 3), vec![0, 0], 1, Shape::Flat(4)).is_err());
    }
}
