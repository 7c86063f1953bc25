//! Operation and training-cost accounting.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{BuildRecord, InferenceTrace, NodeId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OpsReport {
    pub traces: usize,
    /// Total MACs each node contributed over all traces.
    pub per_node_macs: BTreeMap<NodeId, u64>,
    pub feature_ops: u64,
    /// Sum over traces of node MACs plus feature operations.
    pub total_ops: u64,
    pub avg_per_input: f64,
}

pub fn ops_from_traces<'a>(traces: impl IntoIterator<Item = &'a InferenceTrace>) -> Result<OpsReport> {
    let mut report =
        OpsReport { traces: 0, per_node_macs: BTreeMap::new(), feature_ops: 0, total_ops: 0, avg_per_input: 0.0 };
    for t in traces {
        report.traces += 1;
        for a in &t.activated {
            *report.per_node_macs.entry(a.node).or_default() += a.macs;
        }
        report.feature_ops += t.feature_ops;
        report.total_ops += t.total_ops();
    }
    if report.traces == 0 {
        return Err(Error::argument("no traces to aggregate"));
    }
    report.avg_per_input = report.total_ops as f64 / report.traces as f64;
    Ok(report)
}

/// Averaged cost and quality of one classifier configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Measured {
    pub avg_ops: f64,
    /// Accuracy in [0, 1].
    pub accuracy: f64,
    /// Mean energy per input, when simulated.
    pub avg_energy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BenefitReport {
    /// Baseline OPS over FALCON OPS.
    pub normalized_ops: f64,
    /// Baseline energy over FALCON energy; `None` unless both were simulated.
    pub normalized_energy: Option<f64>,
    /// FALCON minus baseline accuracy, in percentage points.
    pub accuracy_delta: f64,
}

pub fn normalized_benefit(falcon: &Measured, baseline: &Measured) -> Result<BenefitReport> {
    if !(baseline.avg_ops > 0.0) || !(falcon.avg_ops > 0.0) {
        return Err(Error::argument("average OPS must be positive on both sides"));
    }
    let normalized_energy = match (falcon.avg_energy, baseline.avg_energy) {
        (Some(f), Some(b)) if f > 0.0 && b > 0.0 => Some(b / f),
        (Some(_), Some(_)) => return Err(Error::argument("energies must be positive")),
        _ => None,
    };
    let r = BenefitReport {
        normalized_ops: baseline.avg_ops / falcon.avg_ops,
        normalized_energy,
        accuracy_delta: 100.0 * (falcon.accuracy - baseline.accuracy),
    };
    if !r.normalized_ops.is_finite() || !r.accuracy_delta.is_finite() {
        return Err(Error::argument("benefit is not finite"));
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainingCostReport {
    pub per_node_update_macs: BTreeMap<NodeId, u64>,
    pub reused_node_ids: BTreeSet<NodeId>,
    pub probe_update_macs: u64,
    pub total_update_macs: u64,
    /// Total over the reference (usually the baseline network's) cost.
    pub normalized_vs_baseline: Option<f64>,
}

/// Sums training work; reused nodes count zero and probe training counts as
/// overhead.
pub fn training_cost(record: &BuildRecord, baseline_update_macs: Option<u64>) -> TrainingCostReport {
    let mut per_node = BTreeMap::new();
    let mut reused = BTreeSet::new();
    for r in &record.nodes {
        let macs = if r.reused {
            reused.insert(r.node);
            0
        } else {
            r.stats.as_ref().map_or(0, |s| s.weight_update_macs)
        };
        per_node.insert(r.node, macs);
    }
    let total = per_node.values().sum::<u64>() + record.probe_update_macs;
    TrainingCostReport {
        per_node_update_macs: per_node,
        reused_node_ids: reused,
        probe_update_macs: record.probe_update_macs,
        total_update_macs: total,
        normalized_vs_baseline: baseline_update_macs.filter(|&b| b > 0).map(|b| total as f64 / b as f64),
    }
}

/// One row of the benefit table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenefitRow {
    pub config: String,
    pub falcon_ops: f64,
    pub baseline_ops: f64,
    pub normalized_ops: f64,
    pub normalized_energy: Option<f64>,
    pub falcon_accuracy: f64,
    pub baseline_accuracy: f64,
    pub accuracy_delta_pp: f64,
}

impl BenefitRow {
    pub fn new(config: impl Into<String>, falcon: &Measured, baseline: &Measured) -> Result<Self> {
        let b = normalized_benefit(falcon, baseline)?;
        Ok(BenefitRow {
            config: config.into(),
            falcon_ops: falcon.avg_ops,
            baseline_ops: baseline.avg_ops,
            normalized_ops: b.normalized_ops,
            normalized_energy: b.normalized_energy,
            falcon_accuracy: falcon.accuracy,
            baseline_accuracy: baseline.accuracy,
            accuracy_delta_pp: b.accuracy_delta,
        })
    }
}

/// CSV with a header row taken from the field names of `T`.
pub fn write_csv<T: Serialize>(rows: &[T], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, mut out: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n").map_err(|e| Error::io("<json>", e))?;
    Ok(())
}

/// Whitespace-separated `x y` lines for plotting.
pub fn write_series(points: &[(f64, f64)], mut out: impl Write) -> Result<()> {
    for (x, y) in points {
        writeln!(out, "{x} {y}").map_err(|e| Error::io("<series>", e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::TrainStats;
    use crate::tree::{Activation, NodeRecord, Role, Routing};
    use proptest::prelude::*;

    fn trace(macs: &[(NodeId, u64)], feature_ops: u64) -> InferenceTrace {
        InferenceTrace {
            activated: macs.iter().map(|&(node, macs)| Activation { node, macs }).collect(),
            initial_confidences: vec![],
            routed_via: Routing::NotFound,
            resolved_by: None,
            features_computed: vec![],
            total_macs: macs.iter().map(|m| m.1).sum(),
            feature_ops,
        }
    }

    #[test]
    fn single_and_pair_averages() {
        let r = ops_from_traces(&[trace(&[(0, 20), (1, 12)], 0)]).unwrap();
        assert_eq!(r.total_ops, 32);
        assert_eq!(r.avg_per_input, 32.0);
        let r = ops_from_traces(&[trace(&[(0, 20), (1, 12)], 0), trace(&[(0, 20), (2, 20)], 8)]).unwrap();
        assert_eq!(r.avg_per_input, 40.0);
        assert_eq!(r.per_node_macs[&0], 40);
        assert!(ops_from_traces(&[]).is_err());
    }

    #[test]
    fn benefit_ratios() {
        let x = Measured { avg_ops: 100.0, accuracy: 0.9, avg_energy: Some(5.0) };
        let same = normalized_benefit(&x, &x).unwrap();
        assert_eq!(same.normalized_ops, 1.0);
        assert_eq!(same.normalized_energy, Some(1.0));
        assert_eq!(same.accuracy_delta, 0.0);
        let f = Measured { avg_ops: 25.0, accuracy: 0.88, avg_energy: None };
        let b = normalized_benefit(&f, &x).unwrap();
        assert_eq!(b.normalized_ops, 4.0);
        assert!((b.accuracy_delta + 2.0).abs() < 1e-9);
        let zero = Measured { avg_ops: 0.0, ..x };
        assert!(normalized_benefit(&f, &zero).is_err());
    }

    fn stats(macs: u64) -> Option<TrainStats> {
        Some(TrainStats { final_loss: 0.0, loss_trace: vec![0.0], weight_update_macs: macs })
    }

    #[test]
    fn reused_nodes_cost_nothing() {
        let rec = BuildRecord {
            nodes: vec![
                NodeRecord { node: 0, role: Role::Initial, stats: stats(100), reused: true },
                NodeRecord { node: 1, role: Role::Final, stats: None, reused: true },
            ],
            probe_update_macs: 0,
        };
        let r = training_cost(&rec, Some(50));
        assert_eq!(r.total_update_macs, 0);
        assert_eq!(r.reused_node_ids.len(), 2);
        let one = BuildRecord {
            nodes: vec![NodeRecord { node: 0, role: Role::Final, stats: stats(640), reused: false }],
            probe_update_macs: 0,
        };
        assert_eq!(training_cost(&one, None).total_update_macs, 640);
        let with_probes = BuildRecord { probe_update_macs: 60, ..one };
        assert_eq!(training_cost(&with_probes, Some(350)).normalized_vs_baseline, Some(2.0));
    }

    #[test]
    fn csv_header_from_fields() {
        let x = Measured { avg_ops: 10.0, accuracy: 1.0, avg_energy: None };
        let row = BenefitRow::new("c", &x, &x).unwrap();
        let mut buf = Vec::new();
        write_csv(&[row], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("config,falcon_ops,baseline_ops,normalized_ops,normalized_energy,"));
    }

    proptest! {
        #[test]
        fn order_does_not_matter(
            raw in prop::collection::vec((0usize..4, 0u64..1000, 0u64..1000), 1..20),
            rot in 0usize..20,
        ) {
            let traces: Vec<InferenceTrace> = raw.iter().map(|&(n, m, f)| trace(&[(n, m)], f)).collect();
            let mut rotated = traces.clone();
            let len = rotated.len();
            rotated.rotate_left(rot % len);
            prop_assert_eq!(ops_from_traces(&traces).unwrap(), ops_from_traces(&rotated).unwrap());
        }
    }
}
