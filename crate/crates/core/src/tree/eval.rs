use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Decision, FalconTree, InferenceTrace, NodeId, Outcome};
use crate::data::{Dataset, LabeledImage, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvalReport {
    pub instances: usize,
    pub accuracy: f64,
    /// Mean of node MACs plus feature operations per input.
    pub avg_ops: f64,
    pub avg_macs: f64,
    pub avg_feature_ops: f64,
    /// Fraction of inputs whose label came from each node.
    pub resolution_rates: BTreeMap<NodeId, f64>,
    pub baseline_rate: f64,
    pub not_found_rate: f64,
}

fn report<'a>(
    pairs: impl Iterator<Item = (&'a Outcome, &'a InferenceTrace, &'a str)>,
    baseline: Option<NodeId>,
) -> Result<EvalReport> {
    let mut n = 0usize;
    let (mut correct, mut ops, mut macs, mut fops, mut not_found, mut base) =
        (0usize, 0u64, 0u64, 0u64, 0usize, 0usize);
    let mut resolved: BTreeMap<NodeId, usize> = BTreeMap::new();
    for (outcome, trace, truth) in pairs {
        n += 1;
        if outcome.label() == Some(truth) {
            correct += 1;
        }
        ops += trace.total_ops();
        macs += trace.total_macs;
        fops += trace.feature_ops;
        match trace.resolved_by {
            Some(id) => {
                *resolved.entry(id).or_default() += 1;
                if Some(id) == baseline {
                    base += 1;
                }
            }
            None => not_found += 1,
        }
    }
    if n == 0 {
        return Err(Error::argument("cannot evaluate on an empty set"));
    }
    let nf = n as f64;
    Ok(EvalReport {
        instances: n,
        accuracy: correct as f64 / nf,
        avg_ops: ops as f64 / nf,
        avg_macs: macs as f64 / nf,
        avg_feature_ops: fops as f64 / nf,
        resolution_rates: resolved.into_iter().map(|(k, v)| (k, v as f64 / nf)).collect(),
        baseline_rate: base as f64 / nf,
        not_found_rate: not_found as f64 / nf,
    })
}

/// Classifies every item; `NotFound` counts as an error.
pub fn evaluate<'a>(
    tree: &FalconTree,
    items: impl IntoIterator<Item = &'a LabeledImage>,
    class_names: &[String],
) -> Result<(EvalReport, Vec<InferenceTrace>)> {
    let mut results = Vec::new();
    for it in items {
        let (outcome, trace) = tree.classify(&it.image)?;
        results.push((outcome, trace, class_names[it.class].as_str()));
    }
    let rep = report(results.iter().map(|(o, t, c)| (o, t, *c)), tree.baseline)?;
    Ok((rep, results.into_iter().map(|(_, t, _)| t).collect()))
}

/// One input under every possible resolution: routed through the final
/// nodes, handed to the baseline, or not found.
#[derive(Debug, Clone)]
pub struct CachedPath {
    pub item: usize,
    pub truth: String,
    pub confidences: Vec<Vec<f64>>,
    pub routed: (Outcome, InferenceTrace),
    pub baseline: Option<(Outcome, InferenceTrace)>,
    pub not_found: (Outcome, InferenceTrace),
}

/// Every input of a split classified once per resolution, so that any
/// divergence threshold can be applied without rerunning the networks.
#[derive(Debug, Clone)]
pub struct PathCache<'t> {
    tree: &'t FalconTree,
    pub paths: Vec<CachedPath>,
}

impl<'t> PathCache<'t> {
    pub fn build(tree: &'t FalconTree, dataset: &Dataset, split: Split) -> Result<Self> {
        let mut routed_tree = tree.clone();
        routed_tree.delta = 0.0;
        let baseline_tree = tree.baseline.map(|_| FalconTree { delta: f64::INFINITY, ..tree.clone() });
        let not_found_tree =
            FalconTree { delta: f64::INFINITY, baseline: None, strict_not_found: true, ..tree.clone() };
        let mut paths = Vec::new();
        for &i in dataset.splits().get(split) {
            let it = &dataset.items()[i];
            let routed = routed_tree.classify(&it.image)?;
            let baseline = match &baseline_tree {
                Some(t) => Some(t.classify(&it.image)?),
                None => None,
            };
            let not_found = not_found_tree.classify(&it.image)?;
            paths.push(CachedPath {
                item: i,
                truth: dataset.class_names()[it.class].clone(),
                confidences: routed.1.initial_confidences.clone(),
                routed,
                baseline,
                not_found,
            });
        }
        Ok(PathCache { tree, paths })
    }

    /// The outcome and trace `classify` would give each input at `delta`.
    pub fn at(&self, delta: f64) -> impl Iterator<Item = (&CachedPath, &Outcome, &InferenceTrace)> + '_ {
        self.paths.iter().map(move |p| {
            let (o, t) = match self.tree.decide_with(&p.confidences, delta) {
                Decision::Route { .. } => &p.routed,
                Decision::Baseline => p.baseline.as_ref().expect("baseline present"),
                Decision::NotFound => &p.not_found,
            };
            (p, o, t)
        })
    }

    pub fn report(&self, delta: f64) -> Result<EvalReport> {
        report(self.at(delta).map(|(p, o, t)| (o, t, p.truth.as_str())), self.tree.baseline)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepRow {
    pub delta: f64,
    pub accuracy: f64,
    pub avg_ops: f64,
    pub baseline_rate: f64,
}

/// One evaluation per threshold over a single pass of the networks.
pub fn sweep_delta(tree: &FalconTree, dataset: &Dataset, split: Split, deltas: &[f64]) -> Result<Vec<SweepRow>> {
    if tree.baseline.is_none() {
        return Err(Error::argument("a divergence sweep needs a tree with a baseline node"));
    }
    if let Some(d) = deltas.iter().find(|d| !(**d >= 0.0)) {
        return Err(Error::argument(format!("divergence threshold must be >= 0, got {d}")));
    }
    let cache = PathCache::build(tree, dataset, split)?;
    deltas
        .iter()
        .map(|&delta| {
            let r = cache.report(delta)?;
            Ok(SweepRow { delta, accuracy: r.accuracy, avg_ops: r.avg_ops, baseline_rate: r.baseline_rate })
        })
        .collect()
}
