use std::collections::{BTreeMap, HashSet, VecDeque};
use std::ops::Range;

use super::{EventCounters, LayerCounters, NeuEConfig, SimResult, TraceEvent};
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureParams};
use crate::image::ImageRgb;
use crate::nn::{argmax, MlpModel, Topology};
use crate::tree::{Decision, FalconTree, NodeId, NodeInput};

/// Where a neuron's accumulator comes from at the start of a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsumLoad {
    Bias,
    TBuffer,
    /// Refill of an evicted partial sum.
    Sram,
}

/// One (chunk, group) pass over the NU array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub chunk_index: usize,
    pub inputs: Range<usize>,
    pub neurons: Range<usize>,
    pub loads: Vec<PsumLoad>,
    /// Inputs are fetched into the FIFO on the first group of a chunk.
    pub loads_chunk: bool,
    pub last_chunk: bool,
    /// Neurons whose partial sums were pushed out of the T-Buffer while this
    /// step stored its own.
    pub evicted: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSchedule {
    pub inputs: usize,
    pub outputs: usize,
    pub steps: Vec<Step>,
    pub evictions: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub layers: Vec<LayerSchedule>,
}

impl Schedule {
    pub fn evictions(&self) -> u64 {
        self.layers.iter().map(|l| l.evictions).sum()
    }
}

fn ranges(len: usize, size: usize) -> Vec<Range<usize>> {
    (0..len.div_ceil(size)).map(|i| i * size..((i + 1) * size).min(len)).collect()
}

fn map_layer(inputs: usize, outputs: usize, cfg: &NeuEConfig) -> LayerSchedule {
    let chunks = ranges(inputs, cfg.input_fifo_depth);
    let groups = ranges(outputs, cfg.num_nus);
    let mut resident: VecDeque<usize> = VecDeque::new();
    let mut spilled: HashSet<usize> = HashSet::new();
    let mut steps = Vec::with_capacity(chunks.len() * groups.len());
    let mut evictions = 0;
    for (ci, chunk) in chunks.iter().enumerate() {
        let last_chunk = ci + 1 == chunks.len();
        for (gi, group) in groups.iter().enumerate() {
            let loads = group
                .clone()
                .map(|n| {
                    if ci == 0 {
                        PsumLoad::Bias
                    } else if let Some(pos) = resident.iter().position(|&r| r == n) {
                        resident.remove(pos);
                        PsumLoad::TBuffer
                    } else {
                        assert!(spilled.remove(&n), "partial sum of neuron {n} lost");
                        PsumLoad::Sram
                    }
                })
                .collect();
            let mut evicted = Vec::new();
            if !last_chunk {
                for n in group.clone() {
                    if resident.len() == cfg.t_buffer_capacity {
                        let v = resident.pop_front().expect("non-empty buffer");
                        spilled.insert(v);
                        evicted.push(v);
                    }
                    resident.push_back(n);
                }
            }
            evictions += evicted.len() as u64;
            steps.push(Step {
                chunk_index: ci,
                inputs: chunk.clone(),
                neurons: group.clone(),
                loads,
                loads_chunk: gi == 0,
                last_chunk,
                evicted,
            });
        }
    }
    LayerSchedule { inputs, outputs, steps, evictions }
}

/// Temporal schedule of every layer onto the NU array.
pub fn map_network(topology: &Topology, cfg: &NeuEConfig) -> Result<Schedule> {
    cfg.validate()?;
    let s = topology.sizes();
    Ok(Schedule { layers: s.windows(2).map(|w| map_layer(w[0], w[1], cfg)).collect() })
}

/// Feature extraction for tree simulation.
pub trait FeatureProvider {
    fn feature(&self, image: &ImageRgb, kind: FeatureKind) -> Result<Vec<f64>>;
    /// Operations charged for one extraction.
    fn ops(&self, kind: FeatureKind, dims: (usize, usize)) -> u64;
}

impl FeatureProvider for FeatureParams {
    fn feature(&self, image: &ImageRgb, kind: FeatureKind) -> Result<Vec<f64>> {
        Ok(self.extract(image, kind)?.values)
    }

    fn ops(&self, kind: FeatureKind, dims: (usize, usize)) -> u64 {
        self.extraction_ops(kind, dims)
    }
}

struct Engine<'c> {
    cfg: &'c NeuEConfig,
    cycle: u64,
    counters: EventCounters,
    per_node: BTreeMap<NodeId, EventCounters>,
    layers: BTreeMap<NodeId, Vec<LayerCounters>>,
    log: Option<Vec<TraceEvent>>,
}

impl<'c> Engine<'c> {
    fn new(cfg: &'c NeuEConfig, traced: bool) -> Result<Self> {
        cfg.validate()?;
        Ok(Engine {
            cfg,
            cycle: 0,
            counters: EventCounters::default(),
            per_node: BTreeMap::new(),
            layers: BTreeMap::new(),
            log: traced.then(Vec::new),
        })
    }

    fn emit(&mut self, event: &str, node: NodeId, detail: impl FnOnce() -> String) {
        if let Some(log) = &mut self.log {
            log.push(TraceEvent { cycle: self.cycle, event: event.into(), node, detail: detail() });
        }
    }

    fn run_network(&mut self, node: NodeId, model: &MlpModel, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != model.input_width() {
            return Err(Error::structural(format!(
                "node {node} expects {} inputs, got {}",
                model.input_width(),
                input.len()
            )));
        }
        let schedule = map_network(model.topology(), self.cfg)?;
        let act = model.activation();
        let mut c = EventCounters::default();
        let mut layer_counts = Vec::with_capacity(schedule.layers.len());
        let mut current = input.to_vec();
        for (li, (layer, plan)) in model.layers().iter().zip(&schedule.layers).enumerate() {
            let mut lc = LayerCounters {
                inputs: layer.inputs,
                outputs: layer.outputs,
                zero_inputs: current.iter().filter(|&&x| x == 0.0).count(),
                ..Default::default()
            };
            let mut acc = vec![0.0f64; layer.outputs];
            let mut next = vec![0.0f64; layer.outputs];
            for step in &plan.steps {
                let xs = &current[step.inputs.clone()];
                let live = xs.iter().filter(|&&x| x != 0.0).count() as u64;
                let gated = xs.len() as u64 - live;
                if step.loads_chunk {
                    c.sram_reads += xs.len() as u64;
                    c.fifo_accesses += xs.len() as u64;
                }
                c.fifo_accesses += live;
                for (n, load) in step.neurons.clone().zip(&step.loads) {
                    match load {
                        PsumLoad::Bias => {
                            acc[n] = layer.biases[n];
                            c.sram_reads += 1;
                        }
                        PsumLoad::TBuffer => c.tbuf_accesses += 1,
                        PsumLoad::Sram => {
                            c.sram_reads += 1;
                            c.t_buf_refills += 1;
                        }
                    }
                    let row = &layer.row(n)[step.inputs.clone()];
                    let mut a = acc[n];
                    for (w, &x) in row.iter().zip(xs) {
                        if x != 0.0 {
                            a += w * x;
                        }
                    }
                    acc[n] = a;
                    lc.weight_fetches += live;
                    lc.macs += live;
                    lc.gated_weight_fetches += gated;
                    lc.gated_macs += gated;
                }
                let g = step.neurons.len() as u64;
                c.sram_reads += live * g;
                c.fifo_accesses += live * g;
                if step.last_chunk {
                    for n in step.neurons.clone() {
                        next[n] = act.apply(acc[n]);
                    }
                    c.au_evals += g;
                    c.sram_writes += g;
                } else {
                    c.tbuf_accesses += g;
                    c.sram_writes += step.evicted.len() as u64;
                    c.t_buf_evictions += step.evicted.len() as u64;
                }
                let (chunk, neurons) = (step.chunk_index, step.neurons.clone());
                self.emit("step", node, || {
                    format!(
                        "layer={li} chunk={chunk} neurons={}..{} macs={} gated={}",
                        neurons.start,
                        neurons.end,
                        live * g,
                        gated * g
                    )
                });
                for &v in &step.evicted {
                    self.emit("evict", node, || format!("layer={li} neuron={v}"));
                }
                self.cycle += live.max(g);
            }
            self.emit("au", node, || format!("layer={li} outputs={}", layer.outputs));
            c.weight_fetches += lc.weight_fetches;
            c.macs += lc.macs;
            c.gated_weight_fetches += lc.gated_weight_fetches;
            c.gated_macs += lc.gated_macs;
            layer_counts.push(lc);
            current = next;
        }
        self.counters.add(&c);
        self.per_node.entry(node).or_default().add(&c);
        self.layers.insert(node, layer_counts);
        Ok(current)
    }

    fn charge_feature(&mut self, node: NodeId, kind: FeatureKind, ops: u64) {
        self.emit("feature", node, || format!("kind={kind} ops={ops}"));
        self.counters.feature_ops += ops;
        self.per_node.entry(node).or_default().feature_ops += ops;
        self.cycle += ops;
    }

    fn finish(self, outputs: Vec<f64>, label: Option<String>, activated: Vec<NodeId>) -> (SimResult, Vec<TraceEvent>) {
        let t = &self.cfg.cost_table;
        let r = SimResult {
            outputs,
            label,
            cycles: self.cycle,
            energy_exec: self.counters.exec_energy(t),
            energy_memory: self.counters.memory_energy(t),
            counters: self.counters,
            layers: self.layers,
            per_node: self.per_node,
            activated_node_ids: activated,
        };
        (r, self.log.unwrap_or_default())
    }
}

pub fn simulate_inference(cfg: &NeuEConfig, model: &MlpModel, input: &[f64]) -> Result<SimResult> {
    Ok(run_inference(cfg, model, input, false)?.0)
}

/// `simulate_inference` plus the event log.
pub fn simulate_inference_traced(
    cfg: &NeuEConfig,
    model: &MlpModel,
    input: &[f64],
) -> Result<(SimResult, Vec<TraceEvent>)> {
    run_inference(cfg, model, input, true)
}

fn run_inference(
    cfg: &NeuEConfig,
    model: &MlpModel,
    input: &[f64],
    traced: bool,
) -> Result<(SimResult, Vec<TraceEvent>)> {
    let mut e = Engine::new(cfg, traced)?;
    let out = e.run_network(0, model, input)?;
    Ok(e.finish(out, None, vec![0]))
}

/// Runs a tree with selective activation: the initial node(s), then only the
/// path the divergence test and routing pick.
pub fn simulate_tree(
    cfg: &NeuEConfig,
    tree: &FalconTree,
    image: &ImageRgb,
    features: &dyn FeatureProvider,
) -> Result<SimResult> {
    Ok(run_tree(cfg, tree, image, features, false)?.0)
}

pub fn simulate_tree_traced(
    cfg: &NeuEConfig,
    tree: &FalconTree,
    image: &ImageRgb,
    features: &dyn FeatureProvider,
) -> Result<(SimResult, Vec<TraceEvent>)> {
    run_tree(cfg, tree, image, features, true)
}

fn run_tree(
    cfg: &NeuEConfig,
    tree: &FalconTree,
    image: &ImageRgb,
    features: &dyn FeatureProvider,
    traced: bool,
) -> Result<(SimResult, Vec<TraceEvent>)> {
    if image.dims() != tree.input_dims {
        return Err(Error::structural(format!(
            "tree expects {}x{} images, got {}x{}",
            tree.input_dims.0,
            tree.input_dims.1,
            image.width(),
            image.height()
        )));
    }
    let mut e = Engine::new(cfg, traced)?;
    let raw = image.normalized();
    let mut activated = Vec::new();
    let mut confidences = Vec::with_capacity(tree.initial.len());
    for &id in &tree.initial {
        confidences.push(e.run_network(id, &tree.nodes[id].model, &raw)?);
        activated.push(id);
    }
    let decision = tree.decide(&confidences);
    match decision {
        Decision::NotFound => {
            e.emit("route", tree.initial[0], || "not-found".into());
            let out = confidences.pop().unwrap_or_default();
            Ok(e.finish(out, None, activated))
        }
        Decision::Baseline => {
            let b = tree.baseline.expect("baseline decision implies a baseline");
            e.emit("route", b, || "baseline".into());
            let out = e.run_network(b, &tree.nodes[b].model, &raw)?;
            activated.push(b);
            let label = tree.nodes[b].labels[argmax(&out)].clone();
            Ok(e.finish(out, Some(label), activated))
        }
        Decision::Route { initial, output } => {
            let targets = tree
                .route_targets(initial, output)
                .ok_or_else(|| Error::structural(format!("output {output} of node {initial} has no route")))?
                .to_vec();
            e.emit("route", initial, || format!("output={output} targets={}", targets.len()));
            let mut computed: Vec<(FeatureKind, Vec<f64>)> = Vec::new();
            let mut best: Option<(f64, NodeId, usize, Vec<f64>)> = None;
            for t in targets {
                let node = &tree.nodes[t];
                let NodeInput::Feature(kind) = node.input else {
                    return Err(Error::structural(format!("final node {t} has raw-pixel input")));
                };
                if !computed.iter().any(|(k, _)| *k == kind) {
                    let fv = features.feature(image, kind)?;
                    e.charge_feature(t, kind, features.ops(kind, tree.input_dims));
                    computed.push((kind, fv));
                }
                let x = &computed.iter().find(|(k, _)| *k == kind).expect("computed above").1;
                let out = e.run_network(t, &node.model, x)?;
                activated.push(t);
                let k = argmax(&out);
                if best.as_ref().is_none_or(|b| out[k] > b.0) {
                    best = Some((out[k], t, k, out));
                }
            }
            let (_, node, k, out) = best.ok_or_else(|| Error::structural("route without a target"))?;
            let label = tree.nodes[node].labels[k].clone();
            Ok(e.finish(out, Some(label), activated))
        }
    }
}
