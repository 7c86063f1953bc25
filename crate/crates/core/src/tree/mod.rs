//! Two-level selective classification trees.
//!
//! Initial nodes see normalised raw pixels and score feature groups. The
//! globally most confident initial output selects a route, and only the final
//! node(s) on that route run, each on one feature vector. An optional
//! baseline node takes over whenever the initial confidences are too close to
//! call: `|o_max - o_min| < delta`, taken over every output of every initial
//! node.

mod build;
mod eval;
mod manifest;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureParams};
use crate::image::ImageRgb;
use crate::nn::{argmax, MlpModel};

pub use build::{
    build_tree, extend_tree, merge_trees, plan_extension, train_baseline, BuildRecord, ExtendConfig, ExtensionPlan,
    MergeOptions, NodeRecord, Strategy, TreeConfig, WidthRule,
};
pub use eval::{evaluate, sweep_delta, EvalReport, PathCache, SweepRow};
pub use manifest::{load_tree, save_tree, MANIFEST_FILE};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Initial,
    Final,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeInput {
    RawPixels,
    Feature(FeatureKind),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FalconNode {
    pub role: Role,
    pub input: NodeInput,
    /// Feature labels for initial nodes, class names otherwise; one per output.
    pub labels: Vec<String>,
    pub model: MlpModel,
}

impl FalconNode {
    pub fn count_mac(&self) -> u64 {
        self.model.count_mac()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub initial: NodeId,
    pub output: usize,
    /// Final nodes run when this output wins; more than one after an
    /// add-node extension.
    pub targets: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FalconTree {
    pub nodes: Vec<FalconNode>,
    pub initial: Vec<NodeId>,
    pub routes: Vec<Route>,
    pub baseline: Option<NodeId>,
    pub delta: f64,
    pub strict_not_found: bool,
    pub input_dims: (usize, usize),
    pub features: FeatureParams,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Class(String),
    NotFound,
}

impl Outcome {
    pub fn label(&self) -> Option<&str> {
        match self {
            Outcome::Class(c) => Some(c),
            Outcome::NotFound => None,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Class(c) => f.write_str(c),
            Outcome::NotFound => f.write_str("NOT FOUND"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Routing {
    Final { initial: NodeId, output: usize },
    Baseline,
    NotFound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activation {
    pub node: NodeId,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InferenceTrace {
    /// In execution order: initial nodes, then the final node(s) or baseline.
    pub activated: Vec<Activation>,
    pub initial_confidences: Vec<Vec<f64>>,
    pub routed_via: Routing,
    /// Node that produced the label, if any.
    pub resolved_by: Option<NodeId>,
    pub features_computed: Vec<FeatureKind>,
    pub total_macs: u64,
    pub feature_ops: u64,
}

impl InferenceTrace {
    pub fn activated_ids(&self) -> Vec<NodeId> {
        self.activated.iter().map(|a| a.node).collect()
    }

    /// Node MACs plus feature extraction operations.
    pub fn total_ops(&self) -> u64 {
        self.total_macs + self.feature_ops
    }
}

/// What the divergence test decides for one set of initial confidences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Route { initial: NodeId, output: usize },
    Baseline,
    NotFound,
}

impl FalconTree {
    /// Checks wiring, roles, inputs and widths.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        let node = |id: NodeId| -> Result<&FalconNode> {
            self.nodes.get(id).ok_or_else(|| Error::structural(format!("node {id} does not exist ({n} nodes)")))
        };
        if self.initial.is_empty() {
            return Err(Error::structural("tree has no initial node"));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::argument(format!("divergence threshold must be >= 0, got {}", self.delta)));
        }
        let raw_width = self.input_dims.0 * self.input_dims.1 * 3;
        for (id, nd) in self.nodes.iter().enumerate() {
            if nd.model.output_width() != nd.labels.len() {
                return Err(Error::structural(format!(
                    "node {id} has {} outputs but {} labels",
                    nd.model.output_width(),
                    nd.labels.len()
                )));
            }
            let expected = match nd.input {
                NodeInput::RawPixels => raw_width,
                NodeInput::Feature(k) => self.features.feature_len(k),
            };
            if nd.model.input_width() != expected {
                return Err(Error::structural(format!(
                    "node {id} takes {} inputs but its input kind provides {expected}",
                    nd.model.input_width()
                )));
            }
            let ok = match nd.role {
                Role::Initial | Role::Baseline => nd.input == NodeInput::RawPixels,
                Role::Final => matches!(nd.input, NodeInput::Feature(_)),
            };
            if !ok {
                return Err(Error::structural(format!("node {id} has the wrong input kind for its role")));
            }
        }
        for &id in &self.initial {
            if node(id)?.role != Role::Initial {
                return Err(Error::structural(format!("node {id} is listed as initial but is not")));
            }
        }
        if let Some(b) = self.baseline {
            if node(b)?.role != Role::Baseline {
                return Err(Error::structural(format!("node {b} is listed as baseline but is not")));
            }
        }
        let mut seen = BTreeSet::new();
        let mut reached = BTreeSet::new();
        for r in &self.routes {
            if !self.initial.contains(&r.initial) {
                return Err(Error::structural(format!("route from non-initial node {}", r.initial)));
            }
            if r.output >= self.nodes[r.initial].labels.len() {
                return Err(Error::structural(format!("route from missing output {} of node {}", r.output, r.initial)));
            }
            if !seen.insert((r.initial, r.output)) {
                return Err(Error::structural(format!("output {} of node {} routed twice", r.output, r.initial)));
            }
            if r.targets.is_empty() {
                return Err(Error::structural("route without a target"));
            }
            for &t in &r.targets {
                if node(t)?.role != Role::Final {
                    return Err(Error::structural(format!("route target {t} is not a final node")));
                }
                reached.insert(t);
            }
        }
        for &id in &self.initial {
            for out in 0..self.nodes[id].labels.len() {
                if !seen.contains(&(id, out)) {
                    return Err(Error::structural(format!("output {out} of initial node {id} has no route")));
                }
            }
        }
        for (id, nd) in self.nodes.iter().enumerate() {
            if nd.role == Role::Final && !reached.contains(&id) {
                return Err(Error::structural(format!("final node {id} is unreachable")));
            }
        }
        Ok(())
    }

    /// Class labels the tree can emit: final-node labels in node order, then
    /// any baseline-only labels.
    pub fn class_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        let finals = self.nodes.iter().filter(|n| n.role == Role::Final);
        let baseline = self.baseline.map(|b| &self.nodes[b]).into_iter();
        for nd in finals.chain(baseline) {
            for l in &nd.labels {
                if !names.contains(l) {
                    names.push(l.clone());
                }
            }
        }
        names
    }

    pub fn route_targets(&self, initial: NodeId, output: usize) -> Option<&[NodeId]> {
        self.routes.iter().find(|r| r.initial == initial && r.output == output).map(|r| r.targets.as_slice())
    }

    pub fn final_nodes(&self) -> impl Iterator<Item = (NodeId, &FalconNode)> + '_ {
        self.nodes.iter().enumerate().filter(|(_, n)| n.role == Role::Final)
    }

    /// Divergence test and routing over the initial confidences, one vector
    /// per initial node in `self.initial` order.
    pub fn decide(&self, confidences: &[Vec<f64>]) -> Decision {
        self.decide_with(confidences, self.delta)
    }

    /// `decide` under a different divergence threshold.
    pub fn decide_with(&self, confidences: &[Vec<f64>], delta: f64) -> Decision {
        let mut best = (0, 0, f64::NEG_INFINITY);
        let (mut o_max, mut o_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for (i, conf) in confidences.iter().enumerate() {
            for (o, &c) in conf.iter().enumerate() {
                if c > best.2 {
                    best = (i, o, c);
                }
                o_max = o_max.max(c);
                o_min = o_min.min(c);
            }
        }
        let diverged = (o_max - o_min).abs() < delta;
        match (diverged, self.baseline.is_some(), self.strict_not_found) {
            (true, true, _) => Decision::Baseline,
            (true, false, true) => Decision::NotFound,
            _ => Decision::Route { initial: self.initial[best.0], output: best.1 },
        }
    }

    fn check_image(&self, image: &ImageRgb) -> Result<()> {
        if image.dims() != self.input_dims {
            return Err(Error::structural(format!(
                "tree expects {}x{} images, got {}x{}",
                self.input_dims.0,
                self.input_dims.1,
                image.width(),
                image.height()
            )));
        }
        Ok(())
    }

    /// Runs the initial nodes on normalised pixels.
    pub fn initial_confidences(&self, raw: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.initial.iter().map(|&id| self.nodes[id].model.forward(raw)).collect()
    }

    /// Runs the final node(s) of one route; the label is the most confident
    /// output across sibling nodes.
    fn run_route(&self, image: &ImageRgb, targets: &[NodeId], trace: &mut InferenceTrace) -> Result<Outcome> {
        let mut computed: Vec<(FeatureKind, Vec<f64>)> = Vec::new();
        let mut best: Option<(f64, NodeId, usize)> = None;
        for &t in targets {
            let node = &self.nodes[t];
            let NodeInput::Feature(kind) = node.input else {
                return Err(Error::structural(format!("final node {t} has raw-pixel input")));
            };
            if !computed.iter().any(|(k, _)| *k == kind) {
                let fv = self.features.extract(image, kind)?;
                trace.feature_ops += self.features.extraction_ops(kind, self.input_dims);
                trace.features_computed.push(kind);
                computed.push((kind, fv.values));
            }
            let x = &computed.iter().find(|(k, _)| *k == kind).unwrap().1;
            let out = node.model.forward(x)?;
            let k = argmax(&out);
            if best.map_or(true, |(c, _, _)| out[k] > c) {
                best = Some((out[k], t, k));
            }
            trace.activated.push(Activation { node: t, macs: node.count_mac() });
            trace.total_macs += node.count_mac();
        }
        let (_, node, k) = best.ok_or_else(|| Error::structural("route without a target"))?;
        trace.resolved_by = Some(node);
        Ok(Outcome::Class(self.nodes[node].labels[k].clone()))
    }

    pub fn classify(&self, image: &ImageRgb) -> Result<(Outcome, InferenceTrace)> {
        self.check_image(image)?;
        let raw = image.normalized();
        let confidences = self.initial_confidences(&raw)?;
        let mut trace = InferenceTrace {
            activated: self
                .initial
                .iter()
                .map(|&id| Activation { node: id, macs: self.nodes[id].count_mac() })
                .collect(),
            initial_confidences: Vec::new(),
            routed_via: Routing::NotFound,
            resolved_by: None,
            features_computed: Vec::new(),
            total_macs: self.initial.iter().map(|&id| self.nodes[id].count_mac()).sum(),
            feature_ops: 0,
        };
        let decision = self.decide(&confidences);
        trace.initial_confidences = confidences;
        let outcome = match decision {
            Decision::NotFound => Outcome::NotFound,
            Decision::Baseline => {
                let b = self.baseline.expect("baseline decision implies a baseline");
                let node = &self.nodes[b];
                let out = node.model.forward(&raw)?;
                trace.activated.push(Activation { node: b, macs: node.count_mac() });
                trace.total_macs += node.count_mac();
                trace.routed_via = Routing::Baseline;
                trace.resolved_by = Some(b);
                Outcome::Class(node.labels[argmax(&out)].clone())
            }
            Decision::Route { initial, output } => {
                trace.routed_via = Routing::Final { initial, output };
                let targets = self
                    .route_targets(initial, output)
                    .ok_or_else(|| Error::structural(format!("output {output} of node {initial} has no route")))?
                    .to_vec();
                self.run_route(image, &targets, &mut trace)?
            }
        };
        Ok((outcome, trace))
    }

    /// Total MACs of every node, i.e. the cost of running them all.
    pub fn total_macs(&self) -> u64 {
        self.nodes.iter().map(FalconNode::count_mac).sum()
    }
}

#[cfg(test)]
pub(crate) mod tests;
