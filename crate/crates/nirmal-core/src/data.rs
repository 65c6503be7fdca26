//! Dataset ingestion and batching.
//!
//! Reads the big-endian IDX image/label format (plain or gzipped, sniffed
//! by magic bytes), writes it back for round-trip tests, normalizes by
//! training statistics, generates a synthetic Gaussian-blob dataset, and
//! iterates seeded permutation batches.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::buffer::Buffer;
use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// A labeled image set. `images` is N x C x H x W; `labels[i]` is in
/// [0, num_classes).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub images: Buffer,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    /// Validates the image/label pairing and label range.
    pub fn new(
        name: impl Into<String>,
        images: Buffer,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let shape = images.shape();
        if shape.len() != 4 {
            return Err(Error::Contract(format!(
                "images must be NxCxHxW, got {shape:?}"
            )));
        }
        if shape[0] != labels.len() {
            return Err(Error::Consistency(format!(
                "{} images but {} labels",
                shape[0],
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Contract(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            name: name.into(),
            images,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-sample shape [C, H, W].
    pub fn sample_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    /// Copies the selected samples into a fresh batch.
    pub fn gather(&self, indices: &[usize]) -> Result<(Buffer, Vec<usize>)> {
        let [c, h, w] = self.sample_shape();
        let stride = c * h * w;
        let mut data = Vec::with_capacity(indices.len() * stride);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Contract(format!(
                    "sample index {i} out of range for {}",
                    self.len()
                )));
            }
            data.extend_from_slice(&self.images.data()[i * stride..(i + 1) * stride]);
            labels.push(self.labels[i]);
        }
        Ok((Buffer::new(vec![indices.len(), c, h, w], data)?, labels))
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    // Transparent gzip, recognized by its two magic bytes.
    if raw.len() >= 2 && raw[0] == 0x1F && raw[1] == 0x8B {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        return Ok(out);
    }
    Ok(raw)
}

struct IdxReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> IdxReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                format!(
                    "{}: wanted {} bytes at offset {}, file has {}",
                    self.path.display(),
                    n,
                    self.pos,
                    self.bytes.len()
                ),
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32_be(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn expect_magic(&mut self, want: u32) -> Result<()> {
        let got = self.u32_be()?;
        if got != want {
            return Err(Error::Format(format!(
                "{}: magic {:#010x}, expected {:#010x}",
                self.path.display(),
                got,
                want
            )));
        }
        Ok(())
    }
}

/// Loads an IDX image/label file pair into a Dataset with C=1 and pixels
/// scaled to [0,1]. Class count is the largest label plus one.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let image_bytes = read_file(images_path)?;
    let mut r = IdxReader { bytes: &image_bytes, pos: 0, path: images_path };
    r.expect_magic(IMAGE_MAGIC)?;
    let n = r.u32_be()? as usize;
    let h = r.u32_be()? as usize;
    let w = r.u32_be()? as usize;
    if n == 0 || h == 0 || w == 0 {
        return Err(Error::Format(format!(
            "{}: empty extent in {n}x{h}x{w}",
            images_path.display()
        )));
    }
    let pixels = r.take(n * h * w)?;
    let images = Buffer::new(
        vec![n, 1, h, w],
        pixels.iter().map(|&p| p as f32 / 255.0).collect(),
    );

    let label_bytes = read_file(labels_path)?;
    let mut r = IdxReader { bytes: &label_bytes, pos: 0, path: labels_path };
    r.expect_magic(LABEL_MAGIC)?;
    let n_labels = r.u32_be()? as usize;
    if n_labels != n {
        return Err(Error::Consistency(format!(
            "{} images in {} but {} labels in {}",
            n,
            images_path.display(),
            n_labels,
            labels_path.display()
        )));
    }
    let labels: Vec<usize> = r.take(n_labels)?.iter().map(|&b| b as usize).collect();
    let num_classes = labels.iter().max().map_or(1, |&m| m + 1);
    Dataset::new("idx", images?, labels, num_classes)
}

/// Writes a Dataset (pixel values in [0,1]) as a plain IDX pair. Pixels are
/// quantized back to u8 by rounding, so data loaded by [`load_idx`] and
/// written again round-trips bit-exactly.
pub fn write_idx(ds: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let [c, h, w] = ds.sample_shape();
    if c != 1 {
        return Err(Error::Contract(format!("IDX images are single-channel, got C={c}")));
    }
    let n = ds.len();
    let mut img = Vec::with_capacity(16 + n * h * w);
    img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    img.extend_from_slice(&(n as u32).to_be_bytes());
    img.extend_from_slice(&(h as u32).to_be_bytes());
    img.extend_from_slice(&(w as u32).to_be_bytes());
    img.extend(
        ds.images
            .data()
            .iter()
            .map(|&x| (x * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    std::fs::write(images_path, img)?;

    let mut lab = Vec::with_capacity(8 + n);
    lab.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(n as u32).to_be_bytes());
    lab.extend(ds.labels.iter().map(|&l| l as u8));
    std::fs::write(labels_path, lab)?;
    Ok(())
}

/// Per-channel normalization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

/// Shifts and scales pixels to zero mean and unit variance per channel.
///
/// With `stats` absent the dataset is treated as a training set and its own
/// statistics are computed (and returned); with `stats` given (a test set)
/// they are applied verbatim and echoed back.
pub fn normalize(ds: &Dataset, stats: Option<&NormStats>) -> Result<(Dataset, NormStats)> {
    let [c, h, w] = ds.sample_shape();
    let stats = match stats {
        Some(s) => {
            if s.mean.len() != c || s.std.len() != c {
                return Err(Error::Contract(format!(
                    "stats cover {} channels, images have {c}",
                    s.mean.len()
                )));
            }
            s.clone()
        }
        None => {
            let per_channel = h * w;
            let count = (ds.len() * per_channel) as f64;
            let mut mean = vec![0.0f32; c];
            let mut std = vec![0.0f32; c];
            for ch in 0..c {
                let mut sum = 0.0f64;
                for i in 0..ds.len() {
                    let base = (i * c + ch) * per_channel;
                    for &x in &ds.images.data()[base..base + per_channel] {
                        sum += x as f64;
                    }
                }
                let m = sum / count;
                let mut var = 0.0f64;
                for i in 0..ds.len() {
                    let base = (i * c + ch) * per_channel;
                    for &x in &ds.images.data()[base..base + per_channel] {
                        let d = x as f64 - m;
                        var += d * d;
                    }
                }
                var /= count;
                if var.sqrt() < 1e-12 {
                    return Err(Error::Degenerate(format!(
                        "channel {ch} has zero variance"
                    )));
                }
                mean[ch] = m as f32;
                std[ch] = var.sqrt() as f32;
            }
            NormStats { mean, std }
        }
    };
    if stats.std.iter().any(|&s| s == 0.0) {
        return Err(Error::Degenerate("zero std in supplied stats".into()));
    }

    let per_channel = h * w;
    let mut data = ds.images.data().to_vec();
    for i in 0..ds.len() {
        for ch in 0..c {
            let base = (i * c + ch) * per_channel;
            let (m, s) = (stats.mean[ch], stats.std[ch]);
            for x in &mut data[base..base + per_channel] {
                *x = (*x - m) / s;
            }
        }
    }
    let images = Buffer::new(ds.images.shape().to_vec(), data)?;
    Ok((
        Dataset::new(ds.name.clone(), images, ds.labels.clone(), ds.num_classes)?,
        stats,
    ))
}

/// Synthetic K-class Gaussian blobs in `dim` dimensions.
///
/// Class centers sit on a scaled coordinate simplex with pairwise distance
/// 4.0; samples are center + 0.5 * standard normal per coordinate. Images
/// come out as C=1, H=1, W=dim, labels grouped by class.
pub fn synth_gaussian_blobs(
    k: usize,
    n_per_class: usize,
    dim: usize,
    seed: u64,
) -> Result<Dataset> {
    if k < 2 || dim < 2 {
        return Err(Error::Contract(format!(
            "blobs need K >= 2 and dim >= 2, got K={k}, dim={dim}"
        )));
    }
    if k > dim {
        return Err(Error::Contract(format!(
            "blobs place centers on coordinate axes, so K={k} needs dim >= K (got {dim})"
        )));
    }
    if n_per_class == 0 {
        return Err(Error::Contract("blobs need n_per_class >= 1".into()));
    }
    // Centers at c_k = (4/sqrt(2)) * e_k: pairwise distance exactly 4.0.
    let scale = 4.0 / f64::sqrt(2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(k * n_per_class * dim);
    let mut labels = Vec::with_capacity(k * n_per_class);
    for class in 0..k {
        for _ in 0..n_per_class {
            for d in 0..dim {
                let center = if d == class { scale } else { 0.0 };
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push((center + 0.5 * z) as f32);
            }
            labels.push(class);
        }
    }
    let images = Buffer::new(vec![k * n_per_class, 1, 1, dim], data)?;
    Dataset::new("synth", images, labels, k)
}

/// How to cut a dataset into batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub seed: u64,
    pub drop_last: bool,
}

impl Default for BatchPlan {
    fn default() -> Self {
        Self { batch_size: 64, seed: 0, drop_last: false }
    }
}

/// Iterates one epoch of batches in a seeded random order.
pub struct BatchIter<'a> {
    ds: &'a Dataset,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    drop_last: bool,
}

impl Iterator for BatchIter<'_> {
    type Item = Result<(Buffer, Vec<usize>)>;

    fn next(&mut self) -> Option<Self::Item> {
        let remaining = self.order.len() - self.pos;
        if remaining == 0 || (self.drop_last && remaining < self.batch_size) {
            return None;
        }
        let take = remaining.min(self.batch_size);
        let idx = &self.order[self.pos..self.pos + take];
        self.pos += take;
        Some(self.ds.gather(idx))
    }
}

fn mix64(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One epoch's batches under a permutation keyed by (plan.seed, epoch).
/// The final short batch is kept unless `drop_last` is set.
pub fn batches<'a>(ds: &'a Dataset, plan: &BatchPlan, epoch: usize) -> Result<BatchIter<'a>> {
    if plan.batch_size == 0 {
        return Err(Error::Contract("batch_size must be >= 1".into()));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(plan.seed, epoch as u64));
    order.shuffle(&mut rng);
    Ok(BatchIter {
        ds,
        order,
        pos: 0,
        batch_size: plan.batch_size,
        drop_last: plan.drop_last,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    /// Raw IDX bytes for the given images (each h*w u8 pixels) and labels.
    fn idx_fixture(images: &[Vec<u8>], labels: &[u8], h: usize, w: usize) -> (Vec<u8>, Vec<u8>) {
        let mut img = Vec::new();
        img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
        img.extend_from_slice(&(images.len() as u32).to_be_bytes());
        img.extend_from_slice(&(h as u32).to_be_bytes());
        img.extend_from_slice(&(w as u32).to_be_bytes());
        for im in images {
            assert_eq!(im.len(), h * w);
            img.extend_from_slice(im);
        }
        let mut lab = Vec::new();
        lab.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        lab.extend_from_slice(labels);
        (img, lab)
    }

    fn write_pair(dir: &Path, img: &[u8], lab: &[u8]) -> (std::path::PathBuf, std::path::PathBuf) {
        let ip = dir.join("images-idx3-ubyte");
        let lp = dir.join("labels-idx1-ubyte");
        std::fs::write(&ip, img).unwrap();
        std::fs::write(&lp, lab).unwrap();
        (ip, lp)
    }

    #[test]
    fn fixture_endpoints_scale_to_unit_range() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = idx_fixture(
            &[vec![0x00, 0xFF, 0x7F, 0x01], vec![0x80, 0x40, 0xC0, 0x20]],
            &[3, 1],
            2,
            2,
        );
        let (ip, lp) = write_pair(dir.path(), &img, &lab);
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.images.shape(), &[2, 1, 2, 2]);
        assert_eq!(ds.labels, vec![3, 1]);
        assert_eq!(ds.num_classes, 4);
        assert_eq!(ds.images.data()[0], 0.0);
        assert_eq!(ds.images.data()[1], 1.0);
        assert!((ds.images.data()[2] - 127.0 / 255.0).abs() < 1e-7);
    }

    #[test]
    fn gzipped_files_load_transparently() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = idx_fixture(&[vec![10, 20, 30, 40]], &[2], 2, 2);
        let gz = |bytes: &[u8]| {
            let mut enc =
                flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
            enc.write_all(bytes).unwrap();
            enc.finish().unwrap()
        };
        let ip = dir.path().join("images-idx3-ubyte.gz");
        let lp = dir.path().join("labels-idx1-ubyte.gz");
        std::fs::write(&ip, gz(&img)).unwrap();
        std::fs::write(&lp, gz(&lab)).unwrap();
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 1);
        assert!((ds.images.data()[3] - 40.0 / 255.0).abs() < 1e-7);
    }

    #[test]
    fn wrong_magic_is_a_format_error_naming_the_value() {
        let dir = tempfile::tempdir().unwrap();
        let (mut img, lab) = idx_fixture(&[vec![0; 4]], &[0], 2, 2);
        img[3] = 0x02; // magic becomes 0x00000802
        let (ip, lp) = write_pair(dir.path(), &img, &lab);
        match load_idx(&ip, &lp) {
            Err(Error::Format(msg)) => assert!(msg.contains("0x00000802"), "{msg}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_file_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = idx_fixture(&[vec![1, 2, 3, 4]], &[0], 2, 2);
        let (ip, lp) = write_pair(dir.path(), &img[..img.len() - 2], &lab);
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Io(_))));
    }

    #[test]
    fn count_mismatch_is_a_consistency_error() {
        let dir = tempfile::tempdir().unwrap();
        let (img, _) = idx_fixture(&[vec![1, 2, 3, 4]], &[0], 2, 2);
        let (_, lab) = idx_fixture(&[vec![1, 2, 3, 4]], &[0, 1], 2, 2);
        let (ip, lp) = write_pair(dir.path(), &img, &lab);
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Consistency(_))));
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = idx_fixture(
            &[vec![0, 255, 128, 7], vec![13, 99, 200, 31], vec![5; 4]],
            &[0, 2, 1],
            2,
            2,
        );
        let (ip, lp) = write_pair(dir.path(), &img, &lab);
        let ds = load_idx(&ip, &lp).unwrap();
        let ip2 = dir.path().join("rt-images");
        let lp2 = dir.path().join("rt-labels");
        write_idx(&ds, &ip2, &lp2).unwrap();
        let ds2 = load_idx(&ip2, &lp2).unwrap();
        assert_eq!(ds.images.data(), ds2.images.data());
        assert_eq!(ds.labels, ds2.labels);
    }

    #[test]
    fn normalize_centers_and_scales() {
        let ds = synth_gaussian_blobs(3, 200, 4, 9).unwrap();
        let (nds, stats) = normalize(&ds, None).unwrap();
        let n = nds.images.len() as f64;
        let mean: f64 = nds.images.data().iter().map(|&x| x as f64).sum::<f64>() / n;
        let var: f64 = nds.images.data().iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-3, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 1e-3, "std {}", var.sqrt());
        assert_eq!(stats.mean.len(), 1);

        // Test-set path echoes the training stats verbatim.
        let test = synth_gaussian_blobs(3, 50, 4, 10).unwrap();
        let (_, echoed) = normalize(&test, Some(&stats)).unwrap();
        assert_eq!(echoed, stats);
    }

    #[test]
    fn normalize_is_invertible() {
        let ds = synth_gaussian_blobs(2, 100, 3, 4).unwrap();
        let (nds, stats) = normalize(&ds, None).unwrap();
        for (i, (&x, &orig)) in nds.images.data().iter().zip(ds.images.data()).enumerate() {
            let restored = x * stats.std[0] + stats.mean[0];
            assert!((restored - orig).abs() < 1e-6, "sample {i}: {restored} vs {orig}");
        }
    }

    #[test]
    fn constant_images_are_degenerate() {
        let images = Buffer::new(vec![3, 1, 2, 2], vec![0.25; 12]).unwrap();
        let ds = Dataset::new("const", images, vec![0, 1, 0], 2).unwrap();
        assert!(matches!(normalize(&ds, None), Err(Error::Degenerate(_))));
    }

    #[test]
    fn blobs_are_deterministic_and_balanced() {
        let a = synth_gaussian_blobs(4, 25, 6, 77).unwrap();
        let b = synth_gaussian_blobs(4, 25, 6, 77).unwrap();
        assert_eq!(a.images.data(), b.images.data());
        assert_eq!(a.labels, b.labels);
        for class in 0..4 {
            assert_eq!(a.labels.iter().filter(|&&l| l == class).count(), 25);
        }
        let c = synth_gaussian_blobs(4, 25, 6, 78).unwrap();
        assert_ne!(a.images.data(), c.images.data());
    }

    #[test]
    fn blobs_nearest_center_oracle_is_accurate() {
        let k = 2;
        let dim = 4;
        let ds = synth_gaussian_blobs(k, 500, dim, 123).unwrap();
        let scale = 4.0 / f64::sqrt(2.0);
        let mut correct = 0usize;
        for i in 0..ds.len() {
            let x = &ds.images.data()[i * dim..(i + 1) * dim];
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for class in 0..k {
                let mut d = 0.0f64;
                for (j, &xv) in x.iter().enumerate() {
                    let c = if j == class { scale } else { 0.0 };
                    d += (xv as f64 - c).powi(2);
                }
                if d < best_d {
                    best_d = d;
                    best = class;
                }
            }
            if best == ds.labels[i] {
                correct += 1;
            }
        }
        let acc = correct as f64 / ds.len() as f64;
        assert!(acc >= 0.99, "nearest-center accuracy {acc}");
    }

    #[test]
    fn blob_preconditions() {
        assert!(synth_gaussian_blobs(1, 10, 4, 0).is_err());
        assert!(synth_gaussian_blobs(2, 10, 1, 0).is_err());
        assert!(synth_gaussian_blobs(5, 10, 4, 0).is_err());
        assert!(synth_gaussian_blobs(2, 0, 4, 0).is_err());
    }

    #[test]
    fn batch_sizes_partition_the_set() {
        let ds = synth_gaussian_blobs(2, 5, 2, 1).unwrap(); // N = 10
        let plan = BatchPlan { batch_size: 4, ..Default::default() };
        let sizes: Vec<usize> = batches(&ds, &plan, 0)
            .unwrap()
            .map(|b| b.unwrap().1.len())
            .collect();
        assert_eq!(sizes, vec![4, 4, 2]);

        let plan_drop = BatchPlan { drop_last: true, ..plan };
        let sizes: Vec<usize> = batches(&ds, &plan_drop, 0)
            .unwrap()
            .map(|b| b.unwrap().1.len())
            .collect();
        assert_eq!(sizes, vec![4, 4]);
    }

    #[test]
    fn epochs_are_permutations_and_seeded() {
        let ds = synth_gaussian_blobs(2, 16, 3, 5).unwrap();
        let plan = BatchPlan { batch_size: 7, seed: 42, ..Default::default() };
        let flat = |epoch: usize| -> Vec<f32> {
            batches(&ds, &plan, epoch)
                .unwrap()
                .flat_map(|b| b.unwrap().0.into_data())
                .collect()
        };
        assert_eq!(flat(0), flat(0));
        assert_ne!(flat(0), flat(1));

        // Each epoch visits every sample exactly once.
        let mut seen = vec![0usize; ds.len()];
        for batch in batches(&ds, &plan, 3).unwrap() {
            let (images, labels) = batch.unwrap();
            let dim = ds.sample_shape()[2];
            for (row, &label) in labels.iter().enumerate() {
                let x = &images.data()[row * dim..row * dim + dim];
                let idx = (0..ds.len())
                    .find(|&i| {
                        ds.labels[i] == label
                            && &ds.images.data()[i * dim..i * dim + dim] == x
                    })
                    .expect("batch row matches a source sample");
                seen[idx] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1), "{seen:?}");
    }
}
