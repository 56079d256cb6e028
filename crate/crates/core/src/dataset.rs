//! Labeled image datasets and their on-disk container.
//!
//! Pixels are stored quantized as `u8`; the network sees `value / 255`.
//!
//! GTDS layout (integers little-endian):
//!
//! ```text
//! "GTDS" | u16 version | u16 name_len | name (UTF-8)
//!        | u32 n_train | u32 n_valid | u32 n_test | u16 height | u16 width
//!        | train pixels (n_train·h·w u8, row-major per image) | train labels (n_train u8)
//!        | valid pixels | valid labels | test pixels | test labels
//! ```

use std::io::Write;
use std::path::Path;

use crate::net::ByteCursor;
use crate::numerics::Matrix;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"GTDS";
const VERSION: u16 = 1;

/// One split: `len` images of `pixels_per_image` bytes each, plus labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pixels_per_image: usize,
    images: Vec<u8>,
    labels: Vec<u8>,
}

impl Split {
    pub fn new(pixels_per_image: usize, images: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        if pixels_per_image == 0 || images.len() != labels.len() * pixels_per_image {
            return Err(Error::InvalidArgument(format!(
                "{} labels need {} pixel bytes of {pixels_per_image} each, got {}",
                labels.len(),
                labels.len() * pixels_per_image,
                images.len()
            )));
        }
        Ok(Self {
            pixels_per_image,
            images,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pixels_per_image(&self) -> usize {
        self.pixels_per_image
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.images[i * self.pixels_per_image..(i + 1) * self.pixels_per_image]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn images(&self) -> &[u8] {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Dequantized batch (`value / 255`) of the given rows plus their labels.
    pub fn batch(&self, indices: &[usize]) -> Result<(Matrix, Vec<usize>)> {
        let mut data = Vec::with_capacity(indices.len() * self.pixels_per_image);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidArgument(format!(
                    "row {i} out of range for split of {}",
                    self.len()
                )));
            }
            data.extend(self.image(i).iter().map(|&p| p as f64 / 255.0));
            labels.push(self.label(i));
        }
        Ok((Matrix::from_vec(indices.len(), self.pixels_per_image, data)?, labels))
    }

    pub fn class_counts(&self, classes: usize) -> Vec<usize> {
        let mut counts = vec![0; classes];
        for &l in &self.labels {
            if (l as usize) < classes {
                counts[l as usize] += 1;
            }
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    Train,
    Valid,
    Test,
}

/// Train/validation/test splits for one task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    pub task: String,
    pub height: usize,
    pub width: usize,
    pub train: Split,
    pub valid: Split,
    pub test: Split,
}

impl LabeledDataset {
    pub fn input_dim(&self) -> usize {
        self.height * self.width
    }

    pub fn split(&self, kind: SplitKind) -> &Split {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Valid => &self.valid,
            SplitKind::Test => &self.test,
        }
    }

    /// Number of classes, taken as one more than the largest label present.
    pub fn classes(&self) -> usize {
        [&self.train, &self.valid, &self.test]
            .iter()
            .flat_map(|s| s.labels.iter())
            .map(|&l| l as usize + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let name = self.task.as_bytes();
        if name.len() > u16::MAX as usize || self.height > u16::MAX as usize || self.width > u16::MAX as usize {
            return Err(Error::InvalidArgument("dataset header field too large".into()));
        }
        let splits = [&self.train, &self.valid, &self.test];
        let mut out = Vec::with_capacity(
            32 + name.len() + splits.iter().map(|s| s.images.len() + s.labels.len()).sum::<usize>(),
        );
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        for s in splits {
            let n = u32::try_from(s.len()).map_err(|_| Error::InvalidArgument("split too large".into()))?;
            out.extend_from_slice(&n.to_le_bytes());
        }
        out.extend_from_slice(&(self.height as u16).to_le_bytes());
        out.extend_from_slice(&(self.width as u16).to_le_bytes());
        for s in splits {
            out.extend_from_slice(&s.images);
            out.extend_from_slice(&s.labels);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = ByteCursor::new(bytes, "GTDS dataset");
        if cur.take(4)? != MAGIC {
            return Err(Error::format("GTDS dataset", 0, "bad magic"));
        }
        let version = cur.u16()?;
        if version != VERSION {
            return Err(Error::format("GTDS dataset", 4, format!("unsupported version {version}")));
        }
        let name_len = cur.u16()? as usize;
        let name_at = cur.pos();
        let task = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|_| Error::format("GTDS dataset", name_at, "task name is not UTF-8"))?;
        let counts = [cur.u32()? as usize, cur.u32()? as usize, cur.u32()? as usize];
        let height = cur.u16()? as usize;
        let width = cur.u16()? as usize;
        let pixels = height * width;
        if pixels == 0 {
            return Err(Error::format("GTDS dataset", cur.pos() - 4, "zero image size"));
        }
        let needed: usize = counts.iter().map(|n| n * (pixels + 1)).sum();
        if cur.remaining() != needed {
            return Err(Error::format(
                "GTDS dataset",
                cur.pos(),
                format!("payload should be {needed} bytes, found {}", cur.remaining()),
            ));
        }
        let mut splits = Vec::with_capacity(3);
        for n in counts {
            let images = cur.take(n * pixels)?.to_vec();
            let labels = cur.take(n)?.to_vec();
            splits.push(Split::new(pixels, images, labels)?);
        }
        let test = splits.pop().unwrap();
        let valid = splits.pop().unwrap();
        let train = splits.pop().unwrap();
        Ok(Self {
            task,
            height,
            width,
            train,
            valid,
            test,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&self.to_bytes()?)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Binary PGM (P5, maxval 255) of one grayscale image.
pub fn write_pgm(path: impl AsRef<Path>, pixels: &[u8], width: usize, height: usize) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::InvalidArgument(format!(
            "{width}x{height} image needs {} pixels, got {}",
            width * height,
            pixels.len()
        )));
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "P5\n{width} {height}\n255\n")?;
    f.write_all(pixels)?;
    f.flush()?;
    Ok(())
}

/// Rounds a `[0, 1]` intensity to a byte.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
