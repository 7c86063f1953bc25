//! Event-level model of the NeuE engine: an array of MAC units fed from an
//! input FIFO and per-unit weight FIFOs, a T-Buffer holding partial sums
//! between input chunks, a piecewise-linear activation unit, zero-input data
//! gating and selective path activation for trees.
//!
//! # Schedule
//!
//! A layer with `I` inputs and `O` neurons is processed chunk-outer,
//! group-inner: inputs are loaded `fifo_depth` at a time, and for each chunk
//! the neurons are visited in groups of `num_nus`. A neuron's accumulator
//! starts from its bias (read from SRAM) on the first chunk and is otherwise
//! restored from the T-Buffer, or from SRAM when it had been evicted. After
//! every chunk but the last, accumulators go to the T-Buffer; when it is full
//! the oldest entry is evicted to SRAM. After the last chunk each accumulator
//! passes the AU and the output is written to SRAM.
//!
//! # Events
//!
//! * `sramRead`: every input loaded into the input FIFO, every non-gated
//!   weight, every bias and every refill of an evicted partial sum.
//! * `sramWrite`: every layer output and every eviction.
//! * `fifoAccess`: one per input loaded, one per non-zero input streamed to
//!   a neuron group, one per weight passing its weight FIFO.
//! * `tbufAccess`: one per partial sum stored or restored from the T-Buffer.
//! * `mac`: one per non-gated multiply-accumulate.
//! * `auEval`: one per neuron output.
//!
//! An input that is exactly zero skips its weight fetch and MAC for every
//! neuron of the layer. Feature extraction in tree mode is charged as `mac`
//! events on the host side.
//!
//! # Timing
//!
//! Each (chunk, group) step takes `max(s, g)` cycles where `s` is the number
//! of non-zero inputs streamed and `g` the number of neurons in the group;
//! feature extraction adds one cycle per operation.

mod calibrate;
mod engine;
mod sweep;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use calibrate::{calibrate_cost_table, exec_share};
pub use engine::{
    map_network, simulate_inference, simulate_inference_traced, simulate_tree, simulate_tree_traced, FeatureProvider,
    LayerSchedule, PsumLoad, Schedule, Step,
};
pub use sweep::{energy_sweep, EnergySweepRow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct CostTable {
    pub sram_read: f64,
    pub sram_write: f64,
    pub fifo_access: f64,
    pub tbuf_access: f64,
    pub mac: f64,
    pub au_eval: f64,
}

impl Default for CostTable {
    fn default() -> Self {
        CostTable { sram_read: 2.5, sram_write: 2.5, fifo_access: 0.1, tbuf_access: 0.2, mac: 1.0, au_eval: 0.5 }
    }
}

impl CostTable {
    pub fn scaled(&self, k: f64) -> CostTable {
        CostTable {
            sram_read: self.sram_read * k,
            sram_write: self.sram_write * k,
            fifo_access: self.fifo_access * k,
            tbuf_access: self.tbuf_access * k,
            mac: self.mac * k,
            au_eval: self.au_eval * k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct NeuEConfig {
    pub num_nus: usize,
    pub input_fifo_depth: usize,
    pub t_buffer_capacity: usize,
    pub cost_table: CostTable,
    pub clock_ghz: f64,
}

impl Default for NeuEConfig {
    fn default() -> Self {
        NeuEConfig {
            num_nus: 16,
            input_fifo_depth: 16,
            t_buffer_capacity: 256,
            cost_table: CostTable::default(),
            clock_ghz: 1.0,
        }
    }
}

impl NeuEConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_nus == 0 || self.input_fifo_depth == 0 || self.t_buffer_capacity == 0 {
            return Err(Error::argument("engine capacities must be at least 1"));
        }
        let c = &self.cost_table;
        let costs = [c.sram_read, c.sram_write, c.fifo_access, c.tbuf_access, c.mac, c.au_eval];
        if costs.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::argument("event costs must be finite and non-negative"));
        }
        if !(self.clock_ghz > 0.0) {
            return Err(Error::argument("clock must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EventCounters {
    pub sram_reads: u64,
    pub sram_writes: u64,
    pub fifo_accesses: u64,
    pub tbuf_accesses: u64,
    pub macs: u64,
    pub au_evals: u64,
    /// Feature-extraction operations charged as MACs.
    pub feature_ops: u64,
    pub weight_fetches: u64,
    pub gated_weight_fetches: u64,
    pub gated_macs: u64,
    pub t_buf_evictions: u64,
    pub t_buf_refills: u64,
}

impl EventCounters {
    pub fn add(&mut self, o: &EventCounters) {
        self.sram_reads += o.sram_reads;
        self.sram_writes += o.sram_writes;
        self.fifo_accesses += o.fifo_accesses;
        self.tbuf_accesses += o.tbuf_accesses;
        self.macs += o.macs;
        self.au_evals += o.au_evals;
        self.feature_ops += o.feature_ops;
        self.weight_fetches += o.weight_fetches;
        self.gated_weight_fetches += o.gated_weight_fetches;
        self.gated_macs += o.gated_macs;
        self.t_buf_evictions += o.t_buf_evictions;
        self.t_buf_refills += o.t_buf_refills;
    }

    /// Compute-side energy: MACs (including feature operations), AU, FIFO
    /// and T-Buffer traffic.
    pub fn exec_energy(&self, c: &CostTable) -> f64 {
        (self.macs + self.feature_ops) as f64 * c.mac
            + self.au_evals as f64 * c.au_eval
            + self.fifo_accesses as f64 * c.fifo_access
            + self.tbuf_accesses as f64 * c.tbuf_access
    }

    /// SRAM energy.
    pub fn memory_energy(&self, c: &CostTable) -> f64 {
        self.sram_reads as f64 * c.sram_read + self.sram_writes as f64 * c.sram_write
    }
}

/// Gating and traffic counts for one layer of one network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LayerCounters {
    pub inputs: usize,
    pub outputs: usize,
    pub zero_inputs: usize,
    pub weight_fetches: u64,
    pub gated_weight_fetches: u64,
    pub macs: u64,
    pub gated_macs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimResult {
    /// Output activations of the last network run (the resolving node in
    /// tree mode).
    pub outputs: Vec<f64>,
    pub label: Option<String>,
    pub cycles: u64,
    pub energy_exec: f64,
    pub energy_memory: f64,
    pub counters: EventCounters,
    /// Per network run, per layer.
    pub layers: BTreeMap<usize, Vec<LayerCounters>>,
    pub per_node: BTreeMap<usize, EventCounters>,
    pub activated_node_ids: Vec<usize>,
}

impl SimResult {
    pub fn energy_total(&self) -> f64 {
        self.energy_exec + self.energy_memory
    }

    pub fn exec_share(&self) -> f64 {
        self.energy_exec / self.energy_total()
    }

    pub fn latency_ns(&self, cfg: &NeuEConfig) -> f64 {
        self.cycles as f64 / cfg.clock_ghz
    }
}

/// One line of the optional event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub cycle: u64,
    pub event: String,
    pub node: usize,
    pub detail: String,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.cycle, self.event, self.node, self.detail)
    }
}

/// JSON-ready digest of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimSummary {
    pub cycles: u64,
    pub latency_ns: f64,
    pub energy_exec: f64,
    pub energy_memory: f64,
    pub energy_total: f64,
    pub exec_share: f64,
    pub counters: EventCounters,
    pub activated_node_ids: Vec<usize>,
    pub label: Option<String>,
}

impl SimSummary {
    pub fn new(r: &SimResult, cfg: &NeuEConfig) -> Self {
        SimSummary {
            cycles: r.cycles,
            latency_ns: r.latency_ns(cfg),
            energy_exec: r.energy_exec,
            energy_memory: r.energy_memory,
            energy_total: r.energy_total(),
            exec_share: r.exec_share(),
            counters: r.counters,
            activated_node_ids: r.activated_node_ids.clone(),
            label: r.label.clone(),
        }
    }
}

#[cfg(test)]
mod tests;
