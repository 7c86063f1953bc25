use serde::{Deserialize, Serialize};

use super::{FalconNode, FalconTree, NodeId, NodeInput, Role, Route};
use crate::data::{Dataset, LabeledImage, Split};
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureParams};
use crate::nn::{init_mlp, train_sgd, ActivationKind, MlpModel, Sample, Topology, TrainConfig, TrainStats};
use crate::rng;
use crate::select::{feature_inputs, Grouping};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct TreeConfig {
    pub initial_hidden: Vec<usize>,
    pub final_hidden: Vec<usize>,
    pub initial_train: TrainConfig,
    pub final_train: TrainConfig,
    pub delta: f64,
    pub strict_not_found: bool,
    pub features: FeatureParams,
    /// Activation installed in every trained node once training is done.
    pub deploy_activation: ActivationKind,
    pub seed: u64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            initial_hidden: vec![3],
            final_hidden: vec![8],
            initial_train: TrainConfig { epochs: 60, balanced_sampling: true, ..TrainConfig::default() },
            final_train: TrainConfig { epochs: 60, learning_rate: 2.0, ..TrainConfig::default() },
            delta: 0.7,
            strict_not_found: false,
            features: FeatureParams::default(),
            deploy_activation: ActivationKind::pwl_default(),
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NodeRecord {
    pub node: NodeId,
    pub role: Role,
    /// Present for nodes trained by this build.
    pub stats: Option<TrainStats>,
    /// Carried over from an earlier tree or supplied pre-trained.
    pub reused: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BuildRecord {
    pub nodes: Vec<NodeRecord>,
    /// Update MACs spent on feature-selection probes for this build.
    pub probe_update_macs: u64,
}

fn topology(input: usize, hidden: &[usize], output: usize) -> Result<Topology> {
    let mut sizes = vec![input];
    sizes.extend(hidden);
    sizes.push(output);
    Topology::new(sizes)
}

/// Trains from `start` with the exact sigmoid, then installs `deploy`.
fn train_node(
    start: MlpModel,
    samples: &[Sample],
    cfg: &TrainConfig,
    seed: u64,
    deploy: &ActivationKind,
) -> Result<(MlpModel, TrainStats)> {
    let cfg = TrainConfig { seed, ..cfg.clone() };
    let (model, stats) = train_sgd(&start.with_activation(ActivationKind::ExactSigmoid), samples, &cfg)?;
    Ok((model.with_activation(deploy.clone()), stats))
}

fn raw_samples<'a>(items: impl IntoIterator<Item = (&'a LabeledImage, usize)>, outputs: usize) -> Vec<Sample> {
    items.into_iter().map(|(it, target)| Sample::one_hot(it.image.normalized(), target, outputs)).collect()
}

fn feature_samples<'a>(
    items: &[(&'a LabeledImage, usize)],
    kind: FeatureKind,
    outputs: usize,
    params: &FeatureParams,
) -> Result<Vec<Sample>> {
    let inputs = feature_inputs(items.iter().map(|(it, _)| *it), kind, params)?;
    Ok(inputs.into_iter().zip(items).map(|(x, &(_, t))| Sample::one_hot(x, t, outputs)).collect())
}

/// A single raw-pixel network over every class of `dataset`.
pub fn train_baseline(
    dataset: &Dataset,
    hidden: &[usize],
    cfg: &TrainConfig,
    deploy: &ActivationKind,
) -> Result<(MlpModel, TrainStats)> {
    let (w, h) = dataset.image_dims()?;
    let k = dataset.num_classes();
    let samples = raw_samples(dataset.split(Split::Train).map(|it| (it, it.class)), k);
    let top = topology(w * h * 3, hidden, k)?;
    train_node(init_mlp(&top, cfg.seed), &samples, cfg, cfg.seed, deploy)
}

/// Builds a tree: one raw-pixel initial node scoring the groups, one final
/// node per group on that group's feature, and `baseline` appended last.
pub fn build_tree(
    dataset: &Dataset,
    grouping: &Grouping,
    cfg: &TreeConfig,
    baseline: Option<MlpModel>,
) -> Result<(FalconTree, BuildRecord)> {
    if grouping.groups.is_empty() {
        return Err(Error::argument("grouping has no feature groups to build from"));
    }
    if grouping.class_names != dataset.class_names() {
        return Err(Error::argument("grouping and dataset disagree on the class list"));
    }
    if !grouping.fallback.is_empty() && baseline.is_none() {
        return Err(Error::argument(format!(
            "{} class(es) have no feature group; provide a baseline classifier to handle them",
            grouping.fallback.len()
        )));
    }
    let (w, h) = dataset.image_dims()?;
    let groups = grouping.groups.len();
    let mut record = BuildRecord::default();
    let mut nodes = Vec::new();

    let initial_items: Vec<(&LabeledImage, usize)> =
        dataset.split(Split::Train).filter_map(|it| grouping.locate(it.class).map(|(g, _)| (it, g))).collect();
    let seed = rng::derive(cfg.seed, 0);
    let top = topology(w * h * 3, &cfg.initial_hidden, groups)?;
    let (model, stats) = train_node(
        init_mlp(&top, seed),
        &raw_samples(initial_items, groups),
        &cfg.initial_train,
        seed,
        &cfg.deploy_activation,
    )?;
    nodes.push(FalconNode {
        role: Role::Initial,
        input: NodeInput::RawPixels,
        labels: grouping.groups.iter().map(|g| g.kind.to_string()).collect(),
        model,
    });
    record.nodes.push(NodeRecord { node: 0, role: Role::Initial, stats: Some(stats), reused: false });

    let mut routes = Vec::new();
    for (g, group) in grouping.groups.iter().enumerate() {
        if group.members.len() == 1 {
            log::warn!("group {} holds a single class; its final node only checks confidence", group.kind);
        }
        let items: Vec<(&LabeledImage, usize)> = dataset
            .split(Split::Train)
            .filter_map(|it| group.members.iter().position(|&m| m == it.class).map(|p| (it, p)))
            .collect();
        let k = group.members.len();
        let samples = feature_samples(&items, group.kind, k, &cfg.features)?;
        let seed = rng::derive(cfg.seed, 1 + g as u64);
        let top = topology(cfg.features.feature_len(group.kind), &cfg.final_hidden, k)?;
        let (model, stats) =
            train_node(init_mlp(&top, seed), &samples, &cfg.final_train, seed, &cfg.deploy_activation)?;
        let id = nodes.len();
        nodes.push(FalconNode {
            role: Role::Final,
            input: NodeInput::Feature(group.kind),
            labels: group.members.iter().map(|&m| dataset.class_names()[m].clone()).collect(),
            model,
        });
        routes.push(Route { initial: 0, output: g, targets: vec![id] });
        record.nodes.push(NodeRecord { node: id, role: Role::Final, stats: Some(stats), reused: false });
    }

    let baseline_id = match baseline {
        Some(model) => {
            let id = nodes.len();
            nodes.push(FalconNode {
                role: Role::Baseline,
                input: NodeInput::RawPixels,
                labels: dataset.class_names().to_vec(),
                model,
            });
            record.nodes.push(NodeRecord { node: id, role: Role::Baseline, stats: None, reused: true });
            Some(id)
        }
        None => None,
    };

    let tree = FalconTree {
        nodes,
        initial: vec![0],
        routes,
        baseline: baseline_id,
        delta: cfg.delta,
        strict_not_found: cfg.strict_not_found,
        input_dims: (w, h),
        features: cfg.features,
    };
    tree.validate()?;
    Ok((tree, record))
}

#[derive(Debug, Clone, Default)]
pub struct MergeOptions {
    /// Baseline over the union of every tree's classes, in tree order.
    pub baseline: Option<MlpModel>,
    pub delta: f64,
    pub strict_not_found: bool,
}

/// Combines trees over disjoint classes. Initial and final nodes are copied
/// unchanged; each tree's initial node becomes one of the merged tree's
/// initial nodes. Old baselines are dropped.
pub fn merge_trees(trees: &[&FalconTree], opts: MergeOptions) -> Result<(FalconTree, BuildRecord)> {
    let first = trees.first().ok_or_else(|| Error::argument("nothing to merge"))?;
    let mut names: Vec<String> = Vec::new();
    for t in trees {
        if t.input_dims != first.input_dims || t.features != first.features {
            return Err(Error::argument("merged trees must share image size and feature parameters"));
        }
        for n in t.class_names() {
            if names.contains(&n) {
                return Err(Error::argument(format!("class '{n}' appears in more than one tree")));
            }
            names.push(n);
        }
    }
    let mut nodes = Vec::new();
    let mut initial = Vec::new();
    let mut routes = Vec::new();
    let mut record = BuildRecord::default();
    for t in trees {
        let mut map = vec![None; t.nodes.len()];
        for (id, nd) in t.nodes.iter().enumerate() {
            if nd.role == Role::Baseline {
                continue;
            }
            map[id] = Some(nodes.len());
            record.nodes.push(NodeRecord { node: nodes.len(), role: nd.role, stats: None, reused: true });
            nodes.push(nd.clone());
        }
        initial.extend(t.initial.iter().map(|&i| map[i].unwrap()));
        for r in &t.routes {
            routes.push(Route {
                initial: map[r.initial].unwrap(),
                output: r.output,
                targets: r.targets.iter().map(|&x| map[x].unwrap()).collect(),
            });
        }
    }
    let baseline = match opts.baseline {
        Some(model) => {
            let id = nodes.len();
            nodes.push(FalconNode { role: Role::Baseline, input: NodeInput::RawPixels, labels: names, model });
            record.nodes.push(NodeRecord { node: id, role: Role::Baseline, stats: None, reused: true });
            Some(id)
        }
        None => None,
    };
    let tree = FalconTree {
        nodes,
        initial,
        routes,
        baseline,
        delta: opts.delta,
        strict_not_found: opts.strict_not_found,
        input_dims: first.input_dims,
        features: first.features,
    };
    tree.validate()?;
    Ok((tree, record))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    RetrainFinal,
    AddNewNode,
}

/// Hidden width of an extension node for `c` output classes:
/// `round(base + per_class * c^exponent)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct WidthRule {
    pub base: f64,
    pub per_class: f64,
    pub exponent: f64,
}

impl Default for WidthRule {
    fn default() -> Self {
        WidthRule { base: 8.0, per_class: 2.0, exponent: 1.5 }
    }
}

impl WidthRule {
    pub fn hidden(&self, classes: usize) -> usize {
        ((self.base + self.per_class * (classes as f64).powf(self.exponent)).round() as usize).max(1)
    }

    pub fn topology(&self, input: usize, classes: usize) -> Result<Topology> {
        Topology::new(vec![input, self.hidden(classes), classes])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct ExtendConfig {
    pub strategy: Strategy,
    /// Feature shared by the new classes; selects the affected route.
    pub kind: FeatureKind,
    pub width_rule: WidthRule,
    pub initial_train: TrainConfig,
    pub final_train: TrainConfig,
    pub deploy_activation: ActivationKind,
    pub seed: u64,
}

impl Default for ExtendConfig {
    fn default() -> Self {
        let tc = TreeConfig::default();
        ExtendConfig {
            strategy: Strategy::AddNewNode,
            kind: FeatureKind::ALL[0],
            width_rule: WidthRule::default(),
            initial_train: tc.initial_train,
            final_train: tc.final_train,
            deploy_activation: tc.deploy_activation,
            seed: 2,
        }
    }
}

/// Route whose first final node of `kind` is affected by an extension.
fn affected(tree: &FalconTree, kind: FeatureKind) -> Result<(usize, NodeId)> {
    tree.routes
        .iter()
        .enumerate()
        .find_map(|(r, route)| {
            route.targets.iter().find(|&&t| tree.nodes[t].input == NodeInput::Feature(kind)).map(|&t| (r, t))
        })
        .ok_or_else(|| Error::argument(format!("no final node uses feature {kind}")))
}

/// Adds the classes of `new` under the route of `cfg.kind`. The owning
/// initial node is retrained (warm-started) so the new classes map to the
/// existing feature label; the final side is either retrained with old and
/// new classes or gets a sibling node trained on the new classes only.
pub fn extend_tree(
    tree: &FalconTree,
    old: &Dataset,
    new: &Dataset,
    cfg: &ExtendConfig,
) -> Result<(FalconTree, BuildRecord)> {
    if cfg.strategy == Strategy::AddNewNode && new.num_classes() == 0 {
        return Err(Error::argument("adding a node needs at least one new class"));
    }
    let existing = tree.class_names();
    if let Some(dup) = new.class_names().iter().find(|n| existing.contains(n)) {
        return Err(Error::argument(format!("class '{dup}' is already in the tree")));
    }
    let (route_idx, final_id) = affected(tree, cfg.kind)?;
    let route = tree.routes[route_idx].clone();
    let init_id = route.initial;
    let params = &tree.features;
    let mut out = tree.clone();
    let mut record = BuildRecord::default();

    // initial node: old classes keep their outputs, new classes join the affected one
    let output_of = |name: &str| {
        tree.routes
            .iter()
            .filter(|r| r.initial == init_id)
            .find_map(|r| r.targets.iter().any(|&t| tree.nodes[t].labels.iter().any(|l| l == name)).then_some(r.output))
    };
    let mut init_items: Vec<(&LabeledImage, usize)> =
        old.split(Split::Train).filter_map(|it| output_of(&old.class_names()[it.class]).map(|o| (it, o))).collect();
    init_items.extend(new.split(Split::Train).map(|it| (it, route.output)));
    let outputs = tree.nodes[init_id].labels.len();
    let seed = rng::derive(cfg.seed, 0);
    let (model, stats) = train_node(
        tree.nodes[init_id].model.clone(),
        &raw_samples(init_items, outputs),
        &cfg.initial_train,
        seed,
        &cfg.deploy_activation,
    )?;
    out.nodes[init_id].model = model;
    record.nodes.push(NodeRecord { node: init_id, role: Role::Initial, stats: Some(stats), reused: false });

    let new_names = new.class_names().to_vec();
    let input_len = params.feature_len(cfg.kind);
    let seed = rng::derive(cfg.seed, 1);
    let trained_final = match cfg.strategy {
        Strategy::RetrainFinal => {
            let old_labels = tree.nodes[final_id].labels.clone();
            let mut items: Vec<(&LabeledImage, usize)> = old
                .split(Split::Train)
                .filter_map(|it| {
                    let name = &old.class_names()[it.class];
                    old_labels.iter().position(|l| l == name).map(|p| (it, p))
                })
                .collect();
            items.extend(new.split(Split::Train).map(|it| (it, old_labels.len() + it.class)));
            let k = old_labels.len() + new_names.len();
            let samples = feature_samples(&items, cfg.kind, k, params)?;
            let top = cfg.width_rule.topology(input_len, k)?;
            let (model, stats) =
                train_node(init_mlp(&top, seed), &samples, &cfg.final_train, seed, &cfg.deploy_activation)?;
            let node = &mut out.nodes[final_id];
            node.model = model;
            node.labels = old_labels.into_iter().chain(new_names).collect();
            (final_id, stats)
        }
        Strategy::AddNewNode => {
            let items: Vec<(&LabeledImage, usize)> = new.split(Split::Train).map(|it| (it, it.class)).collect();
            let k = new_names.len();
            let samples = feature_samples(&items, cfg.kind, k, params)?;
            let top = cfg.width_rule.topology(input_len, k)?;
            let (model, stats) =
                train_node(init_mlp(&top, seed), &samples, &cfg.final_train, seed, &cfg.deploy_activation)?;
            let id = out.nodes.len();
            out.nodes.push(FalconNode {
                role: Role::Final,
                input: NodeInput::Feature(cfg.kind),
                labels: new_names,
                model,
            });
            out.routes[route_idx].targets.push(id);
            (id, stats)
        }
    };
    record.nodes.push(NodeRecord {
        node: trained_final.0,
        role: Role::Final,
        stats: Some(trained_final.1),
        reused: false,
    });
    for (id, nd) in out.nodes.iter().enumerate() {
        if id != init_id && id != trained_final.0 {
            record.nodes.push(NodeRecord { node: id, role: nd.role, stats: None, reused: true });
        }
    }
    record.nodes.sort_by_key(|r| r.node);
    out.validate()?;
    Ok((out, record))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExtensionPlan {
    pub new_classes: usize,
    /// Per-input operations on the affected path before extension.
    pub current_ops: u64,
    pub retrain_ops: u64,
    pub add_node_ops: u64,
    /// The cheaper strategy; retraining wins ties.
    pub recommendation: Strategy,
}

/// Closed-form per-input OPS of the affected path under each strategy, with
/// new or retrained nodes sized by `rule`.
pub fn plan_extension(
    tree: &FalconTree,
    kind: FeatureKind,
    new_classes: usize,
    rule: &WidthRule,
) -> Result<ExtensionPlan> {
    let (route_idx, final_id) = affected(tree, kind)?;
    let route = &tree.routes[route_idx];
    let input = tree.features.feature_len(kind);
    let mut kinds: Vec<FeatureKind> = Vec::new();
    for &t in &route.targets {
        if let NodeInput::Feature(k) = tree.nodes[t].input {
            if !kinds.contains(&k) {
                kinds.push(k);
            }
        }
    }
    let current = tree.initial.iter().map(|&i| tree.nodes[i].count_mac()).sum::<u64>()
        + kinds.iter().map(|&k| tree.features.extraction_ops(k, tree.input_dims)).sum::<u64>()
        + route.targets.iter().map(|&t| tree.nodes[t].count_mac()).sum::<u64>();
    let (retrain, add) = if new_classes == 0 {
        (current, current)
    } else {
        let old = tree.nodes[final_id].labels.len();
        let retrained = rule.topology(input, old + new_classes)?.count_mac();
        let added = rule.topology(input, new_classes)?.count_mac();
        (current - tree.nodes[final_id].count_mac() + retrained, current + added)
    };
    Ok(ExtensionPlan {
        new_classes,
        current_ops: current,
        retrain_ops: retrain,
        add_node_ops: add,
        recommendation: if retrain <= add { Strategy::RetrainFinal } else { Strategy::AddNewNode },
    })
}
