//! Feature selection: per-feature probe networks, per-class affinity scoring
//! against a threshold, and grouping of classes by their selected feature.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabeledImage, Split};
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureParams};
use crate::nn::{init_mlp, train_sgd, MlpModel, Sample, Topology, TrainConfig, TrainStats};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct FeatureSelectConfig {
    /// Minimum mean probe confidence for a class to be assigned a feature.
    pub delta: f64,
    /// Hidden widths shared by every probe; input and output widths follow
    /// from the feature length and class count.
    pub probe_hidden: Vec<usize>,
    pub probe_train: TrainConfig,
    pub scoring_images_per_class: usize,
    /// Score each class from its first image only.
    pub single_image: bool,
}

impl Default for FeatureSelectConfig {
    fn default() -> Self {
        FeatureSelectConfig {
            delta: 0.7,
            probe_hidden: vec![16],
            probe_train: TrainConfig { epochs: 60, learning_rate: 2.0, ..TrainConfig::default() },
            scoring_images_per_class: 8,
            single_image: false,
        }
    }
}

impl FeatureSelectConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::argument(format!("selection threshold {} outside [0, 1]", self.delta)));
        }
        if self.scoring_images_per_class == 0 {
            return Err(Error::argument("scoring needs at least one image per class"));
        }
        self.probe_train.validate()
    }

    pub fn probe_topology(&self, input: usize, classes: usize) -> Result<Topology> {
        let mut sizes = vec![input];
        sizes.extend(&self.probe_hidden);
        sizes.push(classes);
        Topology::new(sizes)
    }
}

/// Feature vectors of `items` under `kind`, one per item.
pub fn feature_inputs<'a>(
    items: impl IntoIterator<Item = &'a LabeledImage>,
    kind: FeatureKind,
    params: &FeatureParams,
) -> Result<Vec<Vec<f64>>> {
    items.into_iter().map(|it| params.extract(&it.image, kind).map(|f| f.values)).collect()
}

#[derive(Debug, Clone)]
pub struct ProbeSet {
    pub models: BTreeMap<FeatureKind, MlpModel>,
    pub stats: BTreeMap<FeatureKind, TrainStats>,
}

impl ProbeSet {
    pub fn total_update_macs(&self) -> u64 {
        self.stats.values().map(|s| s.weight_update_macs).sum()
    }
}

/// Trains one probe per kind on the training split, all with the same hidden
/// layers and epoch budget.
pub fn train_probe_models(
    dataset: &Dataset,
    kinds: &[FeatureKind],
    cfg: &FeatureSelectConfig,
    params: &FeatureParams,
) -> Result<ProbeSet> {
    cfg.validate()?;
    if dataset.num_classes() < 2 {
        return Err(Error::argument("feature selection needs at least two classes"));
    }
    let train: Vec<&LabeledImage> = dataset.split(Split::Train).collect();
    if train.is_empty() {
        return Err(Error::argument("training split is empty"));
    }
    let mut probes = ProbeSet { models: BTreeMap::new(), stats: BTreeMap::new() };
    for &kind in kinds {
        let inputs = feature_inputs(train.iter().copied(), kind, params)?;
        let samples: Vec<Sample> =
            inputs.into_iter().zip(&train).map(|(x, it)| Sample::one_hot(x, it.class, dataset.num_classes())).collect();
        let topology = cfg.probe_topology(params.feature_len(kind), dataset.num_classes())?;
        let seed = rng::derive(cfg.probe_train.seed, kind.index() as u64);
        let train_cfg = TrainConfig { seed, ..cfg.probe_train.clone() };
        let (model, stats) = train_sgd(&init_mlp(&topology, seed), &samples, &train_cfg)?;
        log::debug!("probe {kind}: final loss {:.4}", stats.final_loss);
        probes.models.insert(kind, model);
        probes.stats.insert(kind, stats);
    }
    Ok(probes)
}

/// Mean probe confidence at each class's own output neuron, one row per
/// class and one column per kind.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceTable {
    pub class_names: Vec<String>,
    /// Column order; always sorted in the fixed kind order.
    pub kinds: Vec<FeatureKind>,
    pub values: Vec<Vec<f64>>,
}

impl ConfidenceTable {
    pub fn new(class_names: Vec<String>, kinds: Vec<FeatureKind>, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != class_names.len() || values.iter().any(|r| r.len() != kinds.len()) {
            return Err(Error::structural("confidence table shape does not match classes x kinds"));
        }
        let mut order: Vec<usize> = (0..kinds.len()).collect();
        order.sort_by_key(|&i| kinds[i]);
        if order.windows(2).any(|w| kinds[w[0]] == kinds[w[1]]) {
            return Err(Error::argument("duplicate kind in confidence table"));
        }
        let kinds = order.iter().map(|&i| kinds[i]).collect();
        let values = values.iter().map(|row| order.iter().map(|&i| row[i]).collect()).collect();
        Ok(ConfidenceTable { class_names, kinds, values })
    }
}

/// Scores every class on the scoring split (validation, or training when the
/// validation split is empty).
pub fn confidence_table(
    probes: &ProbeSet,
    dataset: &Dataset,
    cfg: &FeatureSelectConfig,
    params: &FeatureParams,
) -> Result<ConfidenceTable> {
    let split = if dataset.splits().validation.is_empty() { Split::Train } else { Split::Validation };
    let per_class = if cfg.single_image { 1 } else { cfg.scoring_images_per_class };
    let mut scoring: Vec<Vec<&LabeledImage>> = vec![Vec::new(); dataset.num_classes()];
    for it in dataset.split(split) {
        if scoring[it.class].len() < per_class {
            scoring[it.class].push(it);
        }
    }
    if let Some(c) = scoring.iter().position(Vec::is_empty) {
        return Err(Error::argument(format!(
            "class '{}' has no image in the {} split to score with",
            dataset.class_names()[c],
            split.name()
        )));
    }
    let kinds: Vec<FeatureKind> = probes.models.keys().copied().collect();
    let mut values = vec![vec![0.0; kinds.len()]; dataset.num_classes()];
    for (k, kind) in kinds.iter().enumerate() {
        let model = &probes.models[kind];
        for (class, images) in scoring.iter().enumerate() {
            let mut sum = 0.0;
            for x in feature_inputs(images.iter().copied(), *kind, params)? {
                sum += model.forward(&x)?[class];
            }
            values[class][k] = sum / images.len() as f64;
        }
    }
    ConfidenceTable::new(dataset.class_names().to_vec(), kinds, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assigned {
    pub kind: FeatureKind,
    pub confidence: f64,
}

/// Per class: its selected kind, or `None` when no kind reached the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureAssignment {
    pub class_names: Vec<String>,
    pub classes: Vec<Option<Assigned>>,
    /// Best confidence per class whether or not it was assigned.
    pub best: Vec<f64>,
}

/// Picks each class's highest-confidence kind, first in kind order on ties,
/// and keeps it if it reaches `delta`.
pub fn assign_from_confidences(table: &ConfidenceTable, delta: f64) -> Result<FeatureAssignment> {
    if table.kinds.is_empty() {
        return Err(Error::argument("no feature kinds to select from"));
    }
    let mut classes = Vec::with_capacity(table.values.len());
    let mut best = Vec::with_capacity(table.values.len());
    for row in &table.values {
        let mut k = 0;
        for (i, &v) in row.iter().enumerate() {
            if v > row[k] {
                k = i;
            }
        }
        best.push(row[k]);
        classes.push((row[k] >= delta).then_some(Assigned { kind: table.kinds[k], confidence: row[k] }));
    }
    Ok(FeatureAssignment { class_names: table.class_names.clone(), classes, best })
}

pub fn select_feature_per_class(
    probes: &ProbeSet,
    dataset: &Dataset,
    cfg: &FeatureSelectConfig,
    params: &FeatureParams,
) -> Result<FeatureAssignment> {
    cfg.validate()?;
    assign_from_confidences(&confidence_table(probes, dataset, cfg, params)?, cfg.delta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub kind: FeatureKind,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grouping {
    pub class_names: Vec<String>,
    /// Ordered by kind.
    pub groups: Vec<Group>,
    pub fallback: Vec<usize>,
}

impl Grouping {
    /// Group index and position within the group of `class`, if grouped.
    pub fn locate(&self, class: usize) -> Option<(usize, usize)> {
        self.groups.iter().enumerate().find_map(|(g, grp)| grp.members.iter().position(|&m| m == class).map(|p| (g, p)))
    }
}

pub fn group_classes(assignment: &FeatureAssignment) -> Result<Grouping> {
    let mut by_kind: BTreeMap<FeatureKind, Vec<usize>> = BTreeMap::new();
    let mut fallback = Vec::new();
    for (class, a) in assignment.classes.iter().enumerate() {
        match a {
            Some(a) => by_kind.entry(a.kind).or_default().push(class),
            None => fallback.push(class),
        }
    }
    if by_kind.is_empty() && fallback.is_empty() {
        return Err(Error::argument("nothing to group: the assignment has no classes"));
    }
    Ok(Grouping {
        class_names: assignment.class_names.clone(),
        groups: by_kind.into_iter().map(|(kind, members)| Group { kind, members }).collect(),
        fallback,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct AssignmentRow {
    class: String,
    kind: String,
    confidence: f64,
}

const UNASSIGNED: &str = "unassigned";

/// Writes `class,kind,confidence`; unassigned classes carry kind
/// `unassigned` and their best confidence.
pub fn write_assignment_csv(assignment: &FeatureAssignment, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (i, a) in assignment.classes.iter().enumerate() {
        w.serialize(AssignmentRow {
            class: assignment.class_names[i].clone(),
            kind: a.map_or(UNASSIGNED.to_string(), |a| a.kind.to_string()),
            confidence: a.map_or(assignment.best[i], |a| a.confidence),
        })?;
    }
    w.flush().map_err(|e| Error::io("<assignment csv>", e))?;
    Ok(())
}

pub fn read_assignment_csv(input: impl Read, source_name: &str) -> Result<FeatureAssignment> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = FeatureAssignment { class_names: Vec::new(), classes: Vec::new(), best: Vec::new() };
    for (i, row) in r.deserialize::<AssignmentRow>().enumerate() {
        let line = i as u64 + 2;
        let row = row.map_err(|e| Error::format(source_name, line, e.to_string()))?;
        let assigned = if row.kind == UNASSIGNED {
            None
        } else {
            let kind = row
                .kind
                .parse()
                .map_err(|_| Error::format(source_name, line, format!("unknown kind '{}'", row.kind)))?;
            Some(Assigned { kind, confidence: row.confidence })
        };
        out.class_names.push(row.class);
        out.classes.push(assigned);
        out.best.push(row.confidence);
    }
    Ok(out)
}
