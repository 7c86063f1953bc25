use super::{engine::simulate_inference, CostTable, EventCounters, NeuEConfig};
use crate::error::{Error, Result};
use crate::nn::MlpModel;

/// Execution-core share of total energy for the given event counts.
pub fn exec_share(counters: &EventCounters, costs: &CostTable) -> f64 {
    let e = counters.exec_energy(costs);
    e / (e + counters.memory_energy(costs))
}

fn workload(cfg: &NeuEConfig, model: &MlpModel, inputs: &[Vec<f64>]) -> Result<EventCounters> {
    if inputs.is_empty() {
        return Err(Error::argument("calibration needs at least one input"));
    }
    let mut total = EventCounters::default();
    for x in inputs {
        total.add(&simulate_inference(cfg, model, x)?.counters);
    }
    Ok(total)
}

/// Scales the SRAM read and write costs by one factor so the execution
/// share of `model` over `inputs` lands within `tolerance` of `target`.
pub fn calibrate_cost_table(
    cfg: &NeuEConfig,
    model: &MlpModel,
    inputs: &[Vec<f64>],
    target: f64,
    tolerance: f64,
) -> Result<NeuEConfig> {
    if !(0.0..=1.0).contains(&target) || !(tolerance >= 0.0) {
        return Err(Error::argument(format!("target share {target} or tolerance {tolerance} out of range")));
    }
    let counters = workload(cfg, model, inputs)?;
    let exec = counters.exec_energy(&cfg.cost_table);
    let mem = counters.memory_energy(&cfg.cost_table);
    let mut out = *cfg;
    if mem == 0.0 {
        if exec > 0.0 && (1.0 - target).abs() <= tolerance {
            return Ok(out);
        }
        return Err(Error::Calibration(format!(
            "memory energy is zero, share is fixed at {} but target is {target}",
            if exec > 0.0 { "1" } else { "undefined" }
        )));
    }
    if exec == 0.0 {
        return Err(Error::Calibration("execution energy is zero; no SRAM scale reaches a positive share".into()));
    }
    if target <= 0.0 || target >= 1.0 {
        return Err(Error::Calibration(format!(
            "share {target} is unreachable with nonzero execution and memory energy"
        )));
    }
    let scale = exec * (1.0 - target) / (target * mem);
    out.cost_table.sram_read *= scale;
    out.cost_table.sram_write *= scale;
    let check = workload(&out, model, inputs)?;
    let share = exec_share(&check, &out.cost_table);
    if (share - target).abs() > tolerance {
        return Err(Error::Calibration(format!("calibrated share {share} misses target {target}")));
    }
    log::info!("sram costs scaled by {scale:.4}, exec share {share:.4}");
    Ok(out)
}
