//! Run configuration: one JSON object, every field optional.
//!
//! ```json
//! {
//!   "data": { "synthetic": { "perClassCount": 100 }, "resize": [32, 32] },
//!   "features": { "colorGrid": { "gw": 8, "gh": 8 } },
//!   "select": { "delta": 0.7 },
//!   "tree": { "initialHidden": [4], "delta": 0.7 },
//!   "baseline": { "hidden": [16] },
//!   "extend": { "strategy": "add-new-node", "kind": "red" },
//!   "neue": { "numNus": 16 },
//!   "calibration": { "target": 0.7892 },
//!   "sweep": { "deltas": [0.0, 0.5, 1.01] }
//! }
//! ```
//!
//! Overrides use dotted paths into the same structure, e.g.
//! `tree.finalTrain.epochs=20` or `data.synthetic.seed=3`. Values are parsed
//! as JSON and fall back to plain strings.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::SyntheticSpec;
use crate::error::{Error, Result};
use crate::features::FeatureParams;
use crate::nn::TrainConfig;
use crate::select::FeatureSelectConfig;
use crate::sim::NeuEConfig;
use crate::tree::{ExtendConfig, TreeConfig};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct DataConfig {
    pub synthetic: SyntheticSpec,
    /// Nearest-neighbour resize target `[w, h]` applied on load.
    pub resize: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct BaselineConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig { hidden: vec![12], train: TrainConfig { epochs: 60, ..TrainConfig::default() } }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct CalibrationConfig {
    pub target: f64,
    pub tolerance: f64,
    /// Test-split images in the representative workload.
    pub inputs: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig { target: 0.7892, tolerance: 0.05, inputs: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct SweepConfig {
    pub deltas: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let mut deltas: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        deltas.push(1.01);
        SweepConfig { deltas }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "camelCase")]
pub struct RunConfig {
    pub data: DataConfig,
    /// Feature parameters shared by selection, tree building and simulation.
    pub features: FeatureParams,
    pub select: FeatureSelectConfig,
    pub tree: TreeConfig,
    pub baseline: BaselineConfig,
    pub extend: ExtendConfig,
    pub neue: NeuEConfig,
    pub calibration: CalibrationConfig,
    pub sweep: SweepConfig,
}

impl RunConfig {
    pub fn from_json(text: &str, source_name: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format(source_name, e.line() as u64, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Applies `key=value` overrides; every key must name an existing field.
    pub fn with_overrides<S: AsRef<str>>(self, sets: &[S]) -> Result<Self> {
        if sets.is_empty() {
            return Ok(self);
        }
        let mut root = serde_json::to_value(&self)?;
        for s in sets {
            let s = s.as_ref();
            let (key, raw) =
                s.split_once('=').ok_or_else(|| Error::argument(format!("override '{s}' is not key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut slot = &mut root;
            for part in key.split('.') {
                slot = match slot {
                    Value::Object(map) => {
                        map.get_mut(part).ok_or_else(|| Error::argument(format!("unknown config key '{key}'")))?
                    }
                    Value::Array(items) => part
                        .parse::<usize>()
                        .ok()
                        .and_then(|i| items.get_mut(i))
                        .ok_or_else(|| Error::argument(format!("unknown config key '{key}'")))?,
                    _ => return Err(Error::argument(format!("unknown config key '{key}'"))),
                };
            }
            *slot = value;
        }
        serde_json::from_value(root).map_err(|e| Error::argument(format!("invalid override: {e}")))
    }

    /// Tree configuration with the shared feature parameters installed.
    pub fn tree_config(&self) -> TreeConfig {
        TreeConfig { features: self.features, ..self.tree.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.data.synthetic.validate()?;
        self.select.validate()?;
        self.neue.validate()?;
        if let Some((w, h)) = self.data.resize {
            if w == 0 || h == 0 {
                return Err(Error::argument("resize target must be at least 1x1"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_all_defaults() {
        assert_eq!(RunConfig::from_json("{}", "t").unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let c = RunConfig::from_json(r#"{"tree": {"delta": 0.3}, "neue": {"numNus": 8}}"#, "t").unwrap();
        assert_eq!(c.tree.delta, 0.3);
        assert_eq!(c.tree.initial_hidden, TreeConfig::default().initial_hidden);
        assert_eq!(c.neue.num_nus, 8);
        assert_eq!(c.neue.input_fifo_depth, 16);
    }

    #[test]
    fn unknown_top_level_key_is_a_format_error() {
        let err = RunConfig::from_json("{\n\"bogus\": 1}", "cfg.json").unwrap_err();
        assert!(matches!(err, Error::Format { offset: 2, .. }), "{err}");
    }

    #[test]
    fn overrides_follow_dotted_paths() {
        let c = RunConfig::default()
            .with_overrides(&[
                "tree.finalTrain.epochs=7",
                "data.synthetic.seed=99",
                "data.resize=[16,16]",
                "extend.kind=tex45",
            ])
            .unwrap();
        assert_eq!(c.tree.final_train.epochs, 7);
        assert_eq!(c.data.synthetic.seed, 99);
        assert_eq!(c.data.resize, Some((16, 16)));
        assert_eq!(c.extend.kind.to_string(), "tex45");
        let c = c.with_overrides(&["tree.initialHidden.0=3"]).unwrap();
        assert_eq!(c.tree.initial_hidden, vec![3]);
        assert!(RunConfig::default().with_overrides(&["tree.nope=1"]).is_err());
        assert!(RunConfig::default().with_overrides(&["tree.delta"]).is_err());
        assert!(RunConfig::default().with_overrides(&["tree.delta=\"x\""]).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let c = RunConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json(&text, "t").unwrap(), c);
    }
}
