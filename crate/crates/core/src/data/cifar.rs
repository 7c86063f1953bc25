//! CIFAR-10 binary batches: 10000 records of `label | 1024 R | 1024 G | 1024 B`.

use std::path::Path;

use super::{Dataset, LabeledImage, Splits};
use crate::error::{Error, Result};
use crate::image::ImageRgb;

pub const RECORD_LEN: usize = 1 + 3 * 1024;
pub const CIFAR_CLASSES: [&str; 10] =
    ["airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck"];

/// Decodes one batch file's bytes into labelled 32x32 images.
pub fn decode_cifar_batch(bytes: &[u8], name: &str) -> Result<Vec<LabeledImage>> {
    if !bytes.len().is_multiple_of(RECORD_LEN) {
        return Err(Error::format(
            name,
            (bytes.len() - bytes.len() % RECORD_LEN) as u64,
            format!("length {} is not a multiple of {RECORD_LEN}", bytes.len()),
        ));
    }
    let mut items = Vec::with_capacity(bytes.len() / RECORD_LEN);
    for (r, rec) in bytes.chunks_exact(RECORD_LEN).enumerate() {
        let label = rec[0] as usize;
        if label >= 10 {
            return Err(Error::format(name, (r * RECORD_LEN) as u64, format!("label {label} outside 0-9")));
        }
        let planes = &rec[1..];
        let mut data = Vec::with_capacity(3072);
        for p in 0..1024 {
            data.extend_from_slice(&[planes[p], planes[1024 + p], planes[2048 + p]]);
        }
        items.push(LabeledImage { image: ImageRgb::new(32, 32, data)?, class: label });
    }
    Ok(items)
}

/// Loads batch files; records from files whose name contains `test` form the
/// test split, everything else the training split.
pub fn load_cifar_bin(paths: &[impl AsRef<Path>]) -> Result<Dataset> {
    let mut items = Vec::new();
    let mut splits = Splits::default();
    for path in paths {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let batch = decode_cifar_batch(&bytes, &path.display().to_string())?;
        let is_test = path.file_name().map(|n| n.to_string_lossy().contains("test")).unwrap_or(false);
        let start = items.len();
        items.extend(batch);
        let target = if is_test { &mut splits.test } else { &mut splits.train };
        target.extend(start..items.len());
    }
    Dataset::new(items, CIFAR_CLASSES.iter().map(|s| s.to_string()).collect(), splits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(label: u8, fill: impl Fn(usize) -> u8) -> Vec<u8> {
        let mut r = vec![label];
        r.extend((0..3072).map(fill));
        r
    }

    #[test]
    fn planes_interleave() {
        // independent layout oracle: byte 1 is R(0,0), 1025 G(0,0), 2049 B(0,0)
        let rec = record(3, |i| (i % 251) as u8);
        let items = decode_cifar_batch(&rec, "t").unwrap();
        assert_eq!(items[0].class, 3);
        assert_eq!(items[0].image.pixel(0, 0), [rec[1], rec[1025], rec[2049]]);
        assert_eq!(items[0].image.pixel(5, 2), [rec[1 + 69], rec[1025 + 69], rec[2049 + 69]]);
    }

    #[test]
    fn full_batch_count() {
        let bytes: Vec<u8> = (0..10_000).flat_map(|i| record((i % 10) as u8, |_| 0)).collect();
        assert_eq!(decode_cifar_batch(&bytes, "t").unwrap().len(), 10_000);
    }

    #[test]
    fn bad_label_and_length() {
        let rec = record(10, |_| 0);
        assert!(matches!(decode_cifar_batch(&rec, "t"), Err(Error::Format { offset: 0, .. })));
        let mut two = record(1, |_| 0);
        two.extend(record(11, |_| 0));
        assert!(matches!(decode_cifar_batch(&two, "t"), Err(Error::Format { offset: 3073, .. })));
        assert!(decode_cifar_batch(&rec[..100], "t").is_err());
    }
}
