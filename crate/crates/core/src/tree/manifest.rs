//! Tree manifests: `tree.json` beside a `models/` directory of FALCMLP1
//! files, one per node.
//!
//! ```json
//! {
//!   "format": "falcon-tree/1",
//!   "inputDims": [32, 32],
//!   "features": { "colorGrid": {"gw": 8, "gh": 8}, ... },
//!   "delta": 0.7,
//!   "strictNotFound": false,
//!   "initial": [0],
//!   "baseline": 3,
//!   "routes": [{ "initial": 0, "output": 0, "targets": [1] }],
//!   "nodes": [{ "id": 0, "role": "initial", "input": "raw-pixels",
//!               "labels": ["red", "yellow"], "model": "models/node0.falcmlp" }]
//! }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FalconNode, FalconTree, NodeId, NodeInput, Role, Route};
use crate::error::{Error, Result};
use crate::features::FeatureParams;
use crate::nn::{load_model, save_model};

pub const MANIFEST_FILE: &str = "tree.json";
const FORMAT: &str = "falcon-tree/1";

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct ManifestNode {
    id: NodeId,
    role: Role,
    input: NodeInput,
    labels: Vec<String>,
    model: String,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Manifest {
    format: String,
    input_dims: (usize, usize),
    features: FeatureParams,
    delta: f64,
    strict_not_found: bool,
    initial: Vec<NodeId>,
    baseline: Option<NodeId>,
    routes: Vec<Route>,
    nodes: Vec<ManifestNode>,
}

/// Writes `dir/tree.json` and `dir/models/node<id>.falcmlp`.
pub fn save_tree(tree: &FalconTree, dir: &Path) -> Result<PathBuf> {
    let models = dir.join("models");
    std::fs::create_dir_all(&models).map_err(|e| Error::io(&models, e))?;
    let mut nodes = Vec::with_capacity(tree.nodes.len());
    for (id, nd) in tree.nodes.iter().enumerate() {
        let rel = format!("models/node{id}.falcmlp");
        save_model(&nd.model, &dir.join(&rel))?;
        nodes.push(ManifestNode { id, role: nd.role, input: nd.input, labels: nd.labels.clone(), model: rel });
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        input_dims: tree.input_dims,
        features: tree.features,
        delta: tree.delta,
        strict_not_found: tree.strict_not_found,
        initial: tree.initial.clone(),
        baseline: tree.baseline,
        routes: tree.routes.clone(),
        nodes,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Loads a tree from a manifest file or a directory containing `tree.json`.
pub fn load_tree(path: &Path) -> Result<FalconTree> {
    let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    let base = file.parent().unwrap_or(Path::new("."));
    let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    let name = file.display().to_string();
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::format(&name, e.line() as u64, e.to_string()))?;
    if m.format != FORMAT {
        return Err(Error::format(&name, 1, format!("unsupported manifest format '{}'", m.format)));
    }
    let mut nodes = Vec::with_capacity(m.nodes.len());
    for (i, nd) in m.nodes.into_iter().enumerate() {
        if nd.id != i {
            return Err(Error::format(&name, 1, format!("node ids must be 0..n in order, found {} at {i}", nd.id)));
        }
        nodes.push(FalconNode {
            role: nd.role,
            input: nd.input,
            labels: nd.labels,
            model: load_model(&base.join(&nd.model))?,
        });
    }
    let tree = FalconTree {
        nodes,
        initial: m.initial,
        routes: m.routes,
        baseline: m.baseline,
        delta: m.delta,
        strict_not_found: m.strict_not_found,
        input_dims: m.input_dims,
        features: m.features,
    };
    tree.validate()?;
    Ok(tree)
}
