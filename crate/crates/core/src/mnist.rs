//! MNIST IDX files and the MNIST-04 / MNIST-59 splits.
//!
//! IDX headers are big-endian: magic `0x00000803` (images, then count, rows,
//! cols) or `0x00000801` (labels, then count). Gzipped files are detected by
//! their `1f 8b` prefix and decompressed transparently.

use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use crate::dataset::{LabeledDataset, Split};
use crate::net::ByteCursor;
use crate::numerics::SeededRng;
use crate::{Error, Result};

pub const IMAGES_MAGIC: u32 = 2051;
pub const LABELS_MAGIC: u32 = 2049;
/// Train, validation and test sizes of both MNIST halves.
pub const DEFAULT_SIZES: (usize, usize, usize) = (20_000, 5_000, 5_000);
pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

const WHAT: &str = "IDX file";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// `count · rows · cols` bytes, image after image, row-major.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdxData {
    Images(IdxImages),
    Labels(Vec<u8>),
}

/// Parses an IDX image or label file, raw or gzipped.
pub fn read_idx(path: impl AsRef<Path>) -> Result<IdxData> {
    parse_idx(&std::fs::read(path)?)
}

pub fn read_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    match read_idx(path)? {
        IdxData::Images(i) => Ok(i),
        IdxData::Labels(_) => Err(Error::format(WHAT, 0, "expected images, found labels")),
    }
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    match read_idx(path)? {
        IdxData::Labels(l) => Ok(l),
        IdxData::Images(_) => Err(Error::format(WHAT, 0, "expected labels, found images")),
    }
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxData> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut raw = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut raw)
            .map_err(|e| Error::format(WHAT, 0, format!("gzip: {e}")))?;
        return parse_raw(&raw);
    }
    parse_raw(bytes)
}

fn parse_raw(bytes: &[u8]) -> Result<IdxData> {
    let mut cur = ByteCursor::new(bytes, WHAT);
    let magic = cur.u32_be()?;
    let data = match magic {
        IMAGES_MAGIC => {
            let count = cur.u32_be()? as usize;
            let rows = cur.u32_be()? as usize;
            let cols = cur.u32_be()? as usize;
            let pixels = payload(&mut cur, count * rows * cols)?;
            IdxData::Images(IdxImages {
                count,
                rows,
                cols,
                pixels,
            })
        }
        LABELS_MAGIC => {
            let count = cur.u32_be()? as usize;
            IdxData::Labels(payload(&mut cur, count)?)
        }
        other => return Err(Error::format(WHAT, 0, format!("bad magic {other:#010x}"))),
    };
    Ok(data)
}

fn payload(cur: &mut ByteCursor<'_>, n: usize) -> Result<Vec<u8>> {
    let at = cur.pos();
    if cur.remaining() != n {
        return Err(Error::format(
            WHAT,
            at,
            format!("header declares {n} payload bytes, found {}", cur.remaining()),
        ));
    }
    Ok(cur.take(n)?.to_vec())
}

/// Inclusive digit range, relabelled so that `lo` becomes class 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DigitRangeSpec {
    lo: u8,
    hi: u8,
}

pub const MNIST_04: DigitRangeSpec = DigitRangeSpec { lo: 0, hi: 4 };
pub const MNIST_59: DigitRangeSpec = DigitRangeSpec { lo: 5, hi: 9 };

impl DigitRangeSpec {
    pub fn new(lo: u8, hi: u8) -> Result<Self> {
        if lo > hi || hi > 9 {
            return Err(Error::InvalidArgument(format!("bad digit range {lo}..={hi}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> u8 {
        self.lo
    }

    pub fn hi(&self) -> u8 {
        self.hi
    }

    pub fn classes(&self) -> usize {
        (self.hi - self.lo) as usize + 1
    }

    pub fn contains(&self, digit: u8) -> bool {
        (self.lo..=self.hi).contains(&digit)
    }

    pub fn relabel(&self, digit: u8) -> Option<u8> {
        self.contains(digit).then(|| digit - self.lo)
    }

    pub fn digit(&self, label: u8) -> u8 {
        label + self.lo
    }

    /// Dataset name, e.g. `mnist04`.
    pub fn name(&self) -> String {
        format!("mnist{}{}", self.lo, self.hi)
    }
}

/// Indices of images whose digit falls in `spec`, in file order.
pub fn candidates(labels: &[u8], spec: DigitRangeSpec) -> Vec<usize> {
    (0..labels.len()).filter(|&i| spec.contains(labels[i])).collect()
}

/// Shuffled assignment of candidate indices to train, validation and test.
pub fn partition(
    labels: &[u8],
    spec: DigitRangeSpec,
    sizes: (usize, usize, usize),
    seed: u64,
) -> Result<[Vec<usize>; 3]> {
    let mut pool = candidates(labels, spec);
    let needed = sizes.0 + sizes.1 + sizes.2;
    if pool.len() < needed {
        return Err(Error::InsufficientData {
            needed,
            available: pool.len(),
        });
    }
    SeededRng::new(seed).shuffle(&mut pool);
    let valid_at = sizes.0;
    let test_at = valid_at + sizes.1;
    Ok([
        pool[..valid_at].to_vec(),
        pool[valid_at..test_at].to_vec(),
        pool[test_at..needed].to_vec(),
    ])
}

/// Filters to the digit range, relabels and partitions by seeded shuffle.
pub fn build_split(
    images: &IdxImages,
    labels: &[u8],
    spec: DigitRangeSpec,
    sizes: (usize, usize, usize),
    seed: u64,
) -> Result<LabeledDataset> {
    if images.count != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} images but {} labels",
            images.count,
            labels.len()
        )));
    }
    let parts = partition(labels, spec, sizes, seed)?;
    let pixels = images.rows * images.cols;
    let make = |idx: &[usize]| {
        let mut px = Vec::with_capacity(idx.len() * pixels);
        let mut ls = Vec::with_capacity(idx.len());
        for &i in idx {
            px.extend_from_slice(images.image(i));
            ls.push(spec.relabel(labels[i]).expect("candidate in range"));
        }
        Split::new(pixels, px, ls)
    };
    Ok(LabeledDataset {
        task: spec.name(),
        height: images.rows,
        width: images.cols,
        train: make(&parts[0])?,
        valid: make(&parts[1])?,
        test: make(&parts[2])?,
    })
}

/// `dir/name`, or `dir/name.gz` when only the compressed file exists.
pub fn locate(dir: impl AsRef<Path>, name: &str) -> Result<PathBuf> {
    let plain = dir.as_ref().join(name);
    if plain.exists() {
        return Ok(plain);
    }
    let gz = dir.as_ref().join(format!("{name}.gz"));
    if gz.exists() {
        return Ok(gz);
    }
    Err(Error::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("{} (or .gz) not found", plain.display()),
    )))
}

/// All 70000 official images (training file first, then t10k) with labels.
pub fn load_pool(dir: impl AsRef<Path>) -> Result<(IdxImages, Vec<u8>)> {
    let dir = dir.as_ref();
    let mut images = read_images(locate(dir, TRAIN_IMAGES)?)?;
    let mut labels = read_labels(locate(dir, TRAIN_LABELS)?)?;
    let test_images = read_images(locate(dir, TEST_IMAGES)?)?;
    let test_labels = read_labels(locate(dir, TEST_LABELS)?)?;
    if (test_images.rows, test_images.cols) != (images.rows, images.cols) {
        return Err(Error::InvalidArgument("train and t10k image sizes differ".into()));
    }
    images.count += test_images.count;
    images.pixels.extend_from_slice(&test_images.pixels);
    labels.extend_from_slice(&test_labels);
    Ok((images, labels))
}

/// MNIST-04 or MNIST-59 drawn from the pooled official files in `dir`.
pub fn load_split(
    dir: impl AsRef<Path>,
    spec: DigitRangeSpec,
    sizes: (usize, usize, usize),
    seed: u64,
) -> Result<LabeledDataset> {
    let (images, labels) = load_pool(dir)?;
    build_split(&images, &labels, spec, sizes, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn idx_images(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IMAGES_MAGIC, count, rows, cols] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(pixels);
        b
    }

    #[test]
    fn empty_image_file() {
        let IdxData::Images(i) = parse_idx(&idx_images(0, 28, 28, &[])).unwrap() else {
            panic!("expected images");
        };
        assert_eq!((i.count, i.rows, i.cols), (0, 28, 28));
        assert!(i.pixels.is_empty());
    }

    #[test]
    fn bad_magic_and_truncation() {
        let mut b = idx_images(1, 2, 2, &[1, 2, 3, 4]);
        b[..4].copy_from_slice(&0xDEADBEEFu32.to_be_bytes());
        let err = parse_idx(&b).unwrap_err().to_string();
        assert!(err.contains("0xdeadbeef") && err.contains("offset 0"), "{err}");

        let short = idx_images(1, 2, 2, &[1, 2, 3]);
        let err = parse_idx(&short).unwrap_err().to_string();
        assert!(err.contains("offset 16"), "{err}");
        assert!(parse_idx(&[0, 0, 8]).is_err());
    }

    #[test]
    fn gzip_is_transparent() {
        use flate2::write::GzEncoder;
        use std::io::Write;
        let mut labels = Vec::new();
        labels.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        labels.extend_from_slice(&3u32.to_be_bytes());
        labels.extend_from_slice(&[7, 0, 9]);
        let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&labels).unwrap();
        let gz = enc.finish().unwrap();
        assert_eq!(parse_idx(&gz).unwrap(), IdxData::Labels(vec![7, 0, 9]));
        assert_eq!(parse_idx(&labels).unwrap(), parse_idx(&gz).unwrap());
    }

    #[test]
    fn digit_ranges() {
        assert!(DigitRangeSpec::new(5, 4).is_err());
        assert!(DigitRangeSpec::new(0, 10).is_err());
        assert_eq!(MNIST_59.relabel(7), Some(2));
        assert_eq!(MNIST_59.relabel(3), None);
        assert_eq!(MNIST_59.digit(2), 7);
        assert_eq!(MNIST_04.classes(), 5);
        assert_eq!(MNIST_59.name(), "mnist59");
    }

    fn toy(n: usize) -> (IdxImages, Vec<u8>) {
        let labels: Vec<u8> = (0..n).map(|i| (i * 7 % 10) as u8).collect();
        let pixels = (0..n * 4).map(|i| (i % 256) as u8).collect();
        (
            IdxImages {
                count: n,
                rows: 2,
                cols: 2,
                pixels,
            },
            labels,
        )
    }

    #[test]
    fn split_sizes_and_insufficient_data() {
        let (img, lab) = toy(200);
        let ds = build_split(&img, &lab, MNIST_04, (50, 20, 20), 3).unwrap();
        assert_eq!((ds.train.len(), ds.valid.len(), ds.test.len()), (50, 20, 20));
        assert_eq!(ds.classes(), 5);
        let err = build_split(&img, &lab, MNIST_04, (80, 20, 20), 3).unwrap_err();
        assert!(matches!(err, Error::InsufficientData { needed: 120, available: 100 }));
    }

    proptest! {
        #[test]
        fn partitions_are_disjoint_and_relabelled(seed in any::<u64>(), hi_split in 0u8..2) {
            let (img, lab) = toy(300);
            let spec = if hi_split == 0 { MNIST_04 } else { MNIST_59 };
            let parts = partition(&lab, spec, (60, 30, 30), seed).unwrap();
            let mut all: Vec<usize> = parts.concat();
            all.sort_unstable();
            all.dedup();
            prop_assert_eq!(all.len(), 120);
            prop_assert!(all.iter().all(|&i| spec.contains(lab[i])));
            prop_assert_eq!(&parts, &partition(&lab, spec, (60, 30, 30), seed).unwrap());

            let ds = build_split(&img, &lab, spec, (60, 30, 30), seed).unwrap();
            for (k, &i) in parts[0].iter().enumerate() {
                prop_assert!(ds.train.label(k) < 5);
                prop_assert_eq!(spec.digit(ds.train.label(k) as u8), lab[i]);
                prop_assert_eq!(ds.train.image(k), img.image(i));
            }
        }
    }
}
