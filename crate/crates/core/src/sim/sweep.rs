use serde::{Deserialize, Serialize};

use super::{engine::simulate_tree, FeatureProvider, NeuEConfig, SimResult};
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::tree::{Decision, FalconTree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EnergySweepRow {
    pub delta: f64,
    pub accuracy: f64,
    pub avg_energy: f64,
    pub avg_energy_exec: f64,
    pub avg_energy_memory: f64,
    pub avg_cycles: f64,
    pub baseline_rate: f64,
}

struct Simulated {
    truth: String,
    confidences: Vec<Vec<f64>>,
    routed: SimResult,
    baseline: SimResult,
}

/// Simulated energy and accuracy per divergence threshold. Each input is
/// simulated once down the routed path and once through the baseline.
pub fn energy_sweep(
    cfg: &NeuEConfig,
    tree: &FalconTree,
    dataset: &Dataset,
    split: Split,
    deltas: &[f64],
    features: &dyn FeatureProvider,
) -> Result<Vec<EnergySweepRow>> {
    if tree.baseline.is_none() {
        return Err(Error::argument("an energy sweep needs a tree with a baseline node"));
    }
    if let Some(d) = deltas.iter().find(|d| !(**d >= 0.0)) {
        return Err(Error::argument(format!("divergence threshold must be >= 0, got {d}")));
    }
    let routed_tree = FalconTree { delta: 0.0, ..tree.clone() };
    let baseline_tree = FalconTree { delta: f64::INFINITY, ..tree.clone() };
    let mut sims = Vec::new();
    for &i in dataset.splits().get(split) {
        let it = &dataset.items()[i];
        sims.push(Simulated {
            truth: dataset.class_names()[it.class].clone(),
            confidences: tree.initial_confidences(&it.image.normalized())?,
            routed: simulate_tree(cfg, &routed_tree, &it.image, features)?,
            baseline: simulate_tree(cfg, &baseline_tree, &it.image, features)?,
        });
    }
    if sims.is_empty() {
        return Err(Error::argument(format!("split '{}' is empty", split.name())));
    }
    let n = sims.len() as f64;
    Ok(deltas
        .iter()
        .map(|&delta| {
            let mut row = EnergySweepRow {
                delta,
                accuracy: 0.0,
                avg_energy: 0.0,
                avg_energy_exec: 0.0,
                avg_energy_memory: 0.0,
                avg_cycles: 0.0,
                baseline_rate: 0.0,
            };
            for s in &sims {
                let r = match tree.decide_with(&s.confidences, delta) {
                    Decision::Baseline => {
                        row.baseline_rate += 1.0;
                        &s.baseline
                    }
                    _ => &s.routed,
                };
                if r.label.as_deref() == Some(s.truth.as_str()) {
                    row.accuracy += 1.0;
                }
                row.avg_energy += r.energy_total();
                row.avg_energy_exec += r.energy_exec;
                row.avg_energy_memory += r.energy_memory;
                row.avg_cycles += r.cycles as f64;
            }
            row.accuracy /= n;
            row.avg_energy /= n;
            row.avg_energy_exec /= n;
            row.avg_energy_memory /= n;
            row.avg_cycles /= n;
            row.baseline_rate /= n;
            row
        })
        .collect())
}
