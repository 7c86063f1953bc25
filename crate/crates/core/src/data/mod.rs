//! Labelled image collections, their on-disk layout, and loaders.
//!
//! A dataset directory holds
//!
//! * `classes.txt`: one class name per line, line `i` naming class id `i`;
//! * `manifest.csv`: header `path,class,split`, one row per image, where
//!   `class` is a class name and `split` one of `train`, `validation`,
//!   `test` or `unused`;
//! * the images themselves as binary PPM files at the manifest paths,
//!   relative to the directory.

pub mod cifar;
pub mod ppm;
pub mod synth;

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{resize_nearest, ImageRgb};
use crate::rng;

pub use cifar::{decode_cifar_batch, load_cifar_bin, CIFAR_CLASSES};
pub use ppm::{decode_ppm, encode_ppm, load_ppm, save_ppm};
pub use synth::{gen_synthetic, Shape, SyntheticClass, SyntheticSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image: ImageRgb,
    pub class: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

/// Index sets into `Dataset::items`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn get(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    fn get_mut(&mut self, split: Split) -> &mut Vec<usize> {
        match split {
            Split::Train => &mut self.train,
            Split::Validation => &mut self.validation,
            Split::Test => &mut self.test,
        }
    }
}

/// Fractions of each class sent to the training and validation splits; the
/// remainder goes to test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { train: 0.6, validation: 0.2 }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let ok = |f: f64| (0.0..=1.0).contains(&f);
        if !ok(self.train) || !ok(self.validation) || self.train + self.validation > 1.0 {
            return Err(Error::argument(format!(
                "split fractions must be in [0, 1] and sum to at most 1, got train {} validation {}",
                self.train, self.validation
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    items: Vec<LabeledImage>,
    class_names: Vec<String>,
    splits: Splits,
}

impl Dataset {
    /// Checks that class ids index `class_names` and that the splits are
    /// disjoint, in range and free of duplicates.
    pub fn new(items: Vec<LabeledImage>, class_names: Vec<String>, splits: Splits) -> Result<Self> {
        if let Some(bad) = items.iter().position(|it| it.class >= class_names.len()) {
            return Err(Error::argument(format!(
                "item {bad} has class id {} but only {} classes are named",
                items[bad].class,
                class_names.len()
            )));
        }
        let mut owner: Vec<Option<Split>> = vec![None; items.len()];
        for split in Split::ALL {
            for &i in splits.get(split) {
                let slot = owner
                    .get_mut(i)
                    .ok_or_else(|| Error::argument(format!("{} split index {i} out of range", split.name())))?;
                if let Some(prev) = slot {
                    return Err(Error::argument(format!(
                        "item {i} appears in both {} and {} splits",
                        prev.name(),
                        split.name()
                    )));
                }
                *slot = Some(split);
            }
        }
        Ok(Dataset { items, class_names, splits })
    }

    /// Builds a dataset and assigns each class's items to splits by a seeded
    /// shuffle, so every class is represented in proportion.
    pub fn stratified(
        items: Vec<LabeledImage>,
        class_names: Vec<String>,
        fractions: SplitFractions,
        seed: u64,
    ) -> Result<Self> {
        fractions.validate()?;
        let mut splits = Splits::default();
        for class in 0..class_names.len() {
            let mut members: Vec<usize> = (0..items.len()).filter(|&i| items[i].class == class).collect();
            members.shuffle(&mut rng::seeded(rng::derive(seed, class as u64)));
            let n = members.len();
            let n_train = (fractions.train * n as f64).round() as usize;
            let n_val = ((fractions.validation * n as f64).round() as usize).min(n - n_train);
            splits.train.extend(&members[..n_train]);
            splits.validation.extend(&members[n_train..n_train + n_val]);
            splits.test.extend(&members[n_train + n_val..]);
        }
        for split in Split::ALL {
            splits.get_mut(split).sort_unstable();
        }
        Dataset::new(items, class_names, splits)
    }

    pub fn items(&self) -> &[LabeledImage] {
        &self.items
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &LabeledImage> + '_ {
        self.splits.get(split).iter().map(|&i| &self.items[i])
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|n| n == name)
    }

    /// Item counts per class within `split`.
    pub fn class_counts(&self, split: Split) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for it in self.split(split) {
            counts[it.class] += 1;
        }
        counts
    }

    /// Keeps only `classes`, renumbered in the given order. Split membership
    /// of surviving items is preserved.
    pub fn subset_classes(&self, classes: &[usize]) -> Result<Dataset> {
        let mut remap = vec![None; self.num_classes()];
        for (new, &old) in classes.iter().enumerate() {
            let slot = remap.get_mut(old).ok_or_else(|| Error::argument(format!("class id {old} out of range")))?;
            if slot.is_some() {
                return Err(Error::argument(format!("class id {old} listed twice")));
            }
            *slot = Some(new);
        }
        let mut index_map = vec![None; self.items.len()];
        let mut items = Vec::new();
        for (i, it) in self.items.iter().enumerate() {
            if let Some(class) = remap[it.class] {
                index_map[i] = Some(items.len());
                items.push(LabeledImage { image: it.image.clone(), class });
            }
        }
        let mut splits = Splits::default();
        for split in Split::ALL {
            *splits.get_mut(split) = self.splits.get(split).iter().filter_map(|&i| index_map[i]).collect();
        }
        let names = classes.iter().map(|&c| self.class_names[c].clone()).collect();
        Dataset::new(items, names, splits)
    }

    /// Concatenates datasets with disjoint class names; class ids of later
    /// datasets are shifted past earlier ones.
    pub fn concat(parts: &[&Dataset]) -> Result<Dataset> {
        let mut items = Vec::new();
        let mut names: Vec<String> = Vec::new();
        let mut splits = Splits::default();
        for part in parts {
            if let Some(dup) = part.class_names.iter().find(|n| names.contains(n)) {
                return Err(Error::argument(format!("class '{dup}' appears in more than one dataset")));
            }
            let (item_base, class_base) = (items.len(), names.len());
            items.extend(
                part.items.iter().map(|it| LabeledImage { image: it.image.clone(), class: it.class + class_base }),
            );
            names.extend(part.class_names.iter().cloned());
            for split in Split::ALL {
                splits.get_mut(split).extend(part.splits.get(split).iter().map(|&i| i + item_base));
            }
        }
        Dataset::new(items, names, splits)
    }

    /// Resamples every image to `w x h` with `resize_nearest`.
    pub fn resized(&self, w: usize, h: usize) -> Result<Dataset> {
        let items = self
            .items
            .iter()
            .map(|it| Ok(LabeledImage { image: resize_nearest(&it.image, w, h)?, class: it.class }))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(items, self.class_names.clone(), self.splits.clone())
    }

    /// Common image dimensions, or an error if the images differ.
    pub fn image_dims(&self) -> Result<(usize, usize)> {
        let first = self.items.first().ok_or_else(|| Error::argument("dataset is empty"))?.image.dims();
        if let Some(it) = self.items.iter().find(|it| it.image.dims() != first) {
            return Err(Error::argument(format!("images differ in size: {:?} and {:?}", first, it.image.dims())));
        }
        Ok(first)
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        let images = dir.join("images");
        std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
        let classes = dir.join("classes.txt");
        let mut text = self.class_names.join("\n");
        text.push('\n');
        std::fs::write(&classes, text).map_err(|e| Error::io(&classes, e))?;

        let mut split_of = vec!["unused"; self.items.len()];
        for split in Split::ALL {
            for &i in self.splits.get(split) {
                split_of[i] = split.name();
            }
        }
        let manifest = dir.join("manifest.csv");
        let mut w = csv::Writer::from_path(&manifest)?;
        w.write_record(["path", "class", "split"])?;
        for (i, it) in self.items.iter().enumerate() {
            let rel = format!("images/{i:05}.ppm");
            save_ppm(&it.image, &dir.join(&rel))?;
            w.write_record([rel.as_str(), self.class_names[it.class].as_str(), split_of[i]])?;
        }
        w.flush().map_err(|e| Error::io(&manifest, e))?;
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<Dataset> {
        let classes = dir.join("classes.txt");
        let text = std::fs::read_to_string(&classes).map_err(|e| Error::io(&classes, e))?;
        let class_names: Vec<String> =
            text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
        let lookup: HashMap<&str, usize> = class_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();

        let manifest = dir.join("manifest.csv");
        let name = manifest.display().to_string();
        let mut reader = csv::Reader::from_path(&manifest)?;
        let mut items = Vec::new();
        let mut splits = Splits::default();
        for (row, record) in reader.deserialize::<ManifestRow>().enumerate() {
            // header is line 1
            let line = row as u64 + 2;
            let record = record.map_err(|e| Error::format(&name, line, e.to_string()))?;
            let class = *lookup
                .get(record.class.as_str())
                .ok_or_else(|| Error::format(&name, line, format!("unknown class '{}'", record.class)))?;
            let split = match record.split.as_str() {
                "train" => Some(Split::Train),
                "validation" => Some(Split::Validation),
                "test" => Some(Split::Test),
                "unused" => None,
                other => return Err(Error::format(&name, line, format!("unknown split '{other}'"))),
            };
            if let Some(split) = split {
                splits.get_mut(split).push(items.len());
            }
            items.push(LabeledImage { image: load_ppm(&dir.join(&record.path))?, class });
        }
        Dataset::new(items, class_names, splits)
    }
}

#[derive(Deserialize)]
struct ManifestRow {
    path: String,
    class: String,
    split: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n_per_class: usize, classes: usize) -> Vec<LabeledImage> {
        (0..classes * n_per_class)
            .map(|i| LabeledImage { image: ImageRgb::filled(2, 2, [i as u8, 0, 0]), class: i % classes })
            .collect()
    }

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn rejects_bad_ids_and_overlapping_splits() {
        assert!(Dataset::new(toy(2, 2), names(1), Splits::default()).is_err());
        let splits = Splits { train: vec![0, 1], validation: vec![], test: vec![1] };
        assert!(Dataset::new(toy(2, 2), names(2), splits).is_err());
        let splits = Splits { train: vec![9], ..Splits::default() };
        assert!(Dataset::new(toy(2, 2), names(2), splits).is_err());
    }

    #[test]
    fn stratified_split_proportions() {
        let ds = Dataset::stratified(toy(10, 3), names(3), SplitFractions::default(), 4).unwrap();
        assert_eq!(ds.class_counts(Split::Train), vec![6, 6, 6]);
        assert_eq!(ds.class_counts(Split::Validation), vec![2, 2, 2]);
        assert_eq!(ds.class_counts(Split::Test), vec![2, 2, 2]);
    }

    #[test]
    fn subset_renumbers_in_given_order() {
        let ds = Dataset::stratified(toy(4, 3), names(3), SplitFractions::default(), 1).unwrap();
        let sub = ds.subset_classes(&[2, 0]).unwrap();
        assert_eq!(sub.class_names(), ["c2", "c0"]);
        assert_eq!(sub.len(), 8);
        assert_eq!(sub.class_counts(Split::Train), vec![2, 2]);
        assert!(ds.subset_classes(&[0, 0]).is_err());
    }

    #[test]
    fn concat_shifts_ids_and_rejects_duplicates() {
        let a = Dataset::stratified(toy(3, 2), names(2), SplitFractions::default(), 1).unwrap();
        let b = a.subset_classes(&[1]).unwrap();
        assert!(Dataset::concat(&[&a, &b]).is_err());
        let b = Dataset::new(toy(2, 1), vec!["z".into()], Splits { test: vec![0, 1], ..Splits::default() }).unwrap();
        let c = Dataset::concat(&[&a, &b]).unwrap();
        assert_eq!(c.num_classes(), 3);
        assert_eq!(c.class_counts(Split::Test)[2], 2);
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset::stratified(toy(3, 2), names(2), SplitFractions::default(), 9).unwrap();
        ds.save_dir(dir.path()).unwrap();
        assert_eq!(Dataset::load_dir(dir.path()).unwrap(), ds);
    }

    #[test]
    fn manifest_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset::stratified(toy(1, 2), names(2), SplitFractions::default(), 9).unwrap();
        ds.save_dir(dir.path()).unwrap();
        let manifest = dir.path().join("manifest.csv");
        let text = std::fs::read_to_string(&manifest).unwrap().replace(",c1,", ",nope,");
        std::fs::write(&manifest, text).unwrap();
        match Dataset::load_dir(dir.path()) {
            Err(Error::Format { offset, .. }) => assert!(offset >= 2),
            other => panic!("{other:?}"),
        }
    }
}
