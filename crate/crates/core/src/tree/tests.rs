use super::*;
use crate::data::{gen_synthetic, Dataset, Split, SyntheticSpec};
use crate::features::{ColorBin, Grid};
use crate::nn::{count_mac, init_mlp, ActivationKind, Layer, Topology, TrainConfig};
use crate::select::{Group, Grouping};

const W: usize = 4;
const RAW: usize = W * W * 3;

fn params() -> FeatureParams {
    FeatureParams { color_grid: Grid::new(2, 2), ..FeatureParams::default() }
}

fn layer(inputs: usize, outputs: usize, f: impl Fn(usize, usize) -> f64, biases: Vec<f64>) -> Layer {
    let weights = (0..outputs).flat_map(|o| (0..inputs).map(move |i| (o, i))).map(|(o, i)| f(o, i)).collect();
    Layer { inputs, outputs, weights, biases }
}

/// Output 0 rises with red, output 1 with green.
fn initial_model() -> MlpModel {
    let l = layer(RAW, 2, |o, i| if i % 3 == o { 0.5 } else { 0.0 }, vec![-2.0, -2.0]);
    MlpModel::from_layers(vec![l], ActivationKind::ExactSigmoid).unwrap()
}

/// Output 0 prefers a left-heavy map, output 1 a right-heavy one.
fn final_model() -> MlpModel {
    let l = layer(4, 2, |o, i| if (i % 2 == 0) == (o == 0) { 4.0 } else { -4.0 }, vec![0.0, 0.0]);
    MlpModel::from_layers(vec![l], ActivationKind::ExactSigmoid).unwrap()
}

pub(crate) fn toy_tree(with_baseline: bool) -> FalconTree {
    let names = |a: &str, b: &str| vec![a.to_string(), b.to_string()];
    let mut nodes = vec![
        FalconNode {
            role: Role::Initial,
            input: NodeInput::RawPixels,
            labels: names("red", "yellow"),
            model: initial_model(),
        },
        FalconNode {
            role: Role::Final,
            input: NodeInput::Feature(FeatureKind::Color(ColorBin::Red)),
            labels: names("r-left", "r-right"),
            model: final_model(),
        },
        FalconNode {
            role: Role::Final,
            input: NodeInput::Feature(FeatureKind::Color(ColorBin::Yellow)),
            labels: names("y-left", "y-right"),
            model: final_model(),
        },
    ];
    if with_baseline {
        let top = Topology::new(vec![RAW, 4]).unwrap();
        nodes.push(FalconNode {
            role: Role::Baseline,
            input: NodeInput::RawPixels,
            labels: ["r-left", "r-right", "y-left", "y-right"].map(String::from).to_vec(),
            model: init_mlp(&top, 3),
        });
    }
    let tree = FalconTree {
        nodes,
        initial: vec![0],
        routes: vec![
            Route { initial: 0, output: 0, targets: vec![1] },
            Route { initial: 0, output: 1, targets: vec![2] },
        ],
        baseline: with_baseline.then_some(3),
        delta: 0.0,
        strict_not_found: false,
        input_dims: (W, W),
        features: params(),
    };
    tree.validate().unwrap();
    tree
}

pub(crate) fn left_red() -> ImageRgb {
    ImageRgb::from_fn(W, W, |x, _| if x < W / 2 { [255, 0, 0] } else { [128, 128, 128] })
}

#[test]
fn saturated_red_takes_the_red_path() {
    let tree = toy_tree(true);
    let (outcome, trace) = tree.classify(&left_red()).unwrap();
    assert_eq!(outcome, Outcome::Class("r-left".into()));
    assert_eq!(trace.activated_ids(), vec![0, 1]);
    assert_eq!(trace.total_macs, tree.nodes[0].count_mac() + tree.nodes[1].count_mac());
    assert_eq!(trace.features_computed, vec![FeatureKind::Color(ColorBin::Red)]);
    assert_eq!(trace.feature_ops, params().extraction_ops(FeatureKind::Color(ColorBin::Red), (W, W)));
    assert_eq!(trace.routed_via, Routing::Final { initial: 0, output: 0 });
}

#[test]
fn delta_extremes() {
    let mut tree = toy_tree(true);
    let imgs: Vec<ImageRgb> = (0..20u8)
        .map(|s| ImageRgb::from_fn(W, W, |x, y| [s.wrapping_mul(37).wrapping_add((x * 50) as u8), (y * 60) as u8, s]))
        .collect();
    for img in &imgs {
        assert_ne!(tree.classify(img).unwrap().1.routed_via, Routing::Baseline);
    }
    tree.delta = 1.01;
    let base = &tree.nodes[3];
    for img in &imgs {
        let (outcome, trace) = tree.classify(img).unwrap();
        let expected = &base.labels[argmax(&base.model.forward(&img.normalized()).unwrap())];
        assert_eq!(outcome.label(), Some(expected.as_str()));
        assert_eq!(trace.activated_ids(), vec![0, 3]);
        assert!(trace.features_computed.is_empty());
    }
}

#[test]
fn strict_not_found_only_without_baseline() {
    let mut tree = toy_tree(false);
    tree.delta = 1.01;
    let (outcome, trace) = tree.classify(&left_red()).unwrap();
    assert_eq!(outcome, Outcome::Class("r-left".into()), "default routes to the argmax");
    assert_eq!(trace.activated.len(), 2);
    tree.strict_not_found = true;
    let (outcome, trace) = tree.classify(&left_red()).unwrap();
    assert_eq!(outcome, Outcome::NotFound);
    assert_eq!(trace.activated_ids(), vec![0]);
    assert_eq!(trace.resolved_by, None);
}

#[test]
fn validation_catches_bad_wiring() {
    let mut t = toy_tree(false);
    t.routes.pop();
    assert!(matches!(t.validate(), Err(Error::Structural(_))));
    let mut t = toy_tree(false);
    t.routes[1].targets = vec![1];
    assert!(t.validate().is_err(), "node 2 unreachable");
    let mut t = toy_tree(false);
    t.routes[0].targets = vec![7];
    assert!(t.validate().is_err());
    let t = toy_tree(false);
    assert!(t.classify(&ImageRgb::filled(5, 5, [0, 0, 0])).is_err());
}

#[test]
fn sibling_nodes_take_the_most_confident_label() {
    let mut tree = toy_tree(false);
    let strong = layer(4, 1, |_, _| 0.0, vec![10.0]);
    tree.nodes.push(FalconNode {
        role: Role::Final,
        input: NodeInput::Feature(FeatureKind::Color(ColorBin::Red)),
        labels: vec!["r-new".into()],
        model: MlpModel::from_layers(vec![strong], ActivationKind::ExactSigmoid).unwrap(),
    });
    tree.routes[0].targets.push(3);
    tree.validate().unwrap();
    let (outcome, trace) = tree.classify(&left_red()).unwrap();
    assert_eq!(outcome.label(), Some("r-new"));
    assert_eq!(trace.activated_ids(), vec![0, 1, 3]);
    assert_eq!(trace.features_computed.len(), 1, "siblings share one feature vector");
    assert_eq!(trace.resolved_by, Some(3));
}

#[test]
fn manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let tree = toy_tree(true);
    save_tree(&tree, dir.path()).unwrap();
    assert_eq!(load_tree(dir.path()).unwrap(), tree);
    let json = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
    assert!(json.contains("\"raw-pixels\""));
    assert!(json.contains("\"feature\": \"red\""));
}

pub(crate) fn small_color4() -> Dataset {
    let spec = SyntheticSpec { width: 16, height: 16, per_class_count: 24, ..SyntheticSpec::color4() };
    gen_synthetic(&spec).unwrap()
}

pub(crate) fn red_yellow_grouping(ds: &Dataset) -> Grouping {
    Grouping {
        class_names: ds.class_names().to_vec(),
        groups: vec![
            Group { kind: FeatureKind::Color(ColorBin::Red), members: vec![0, 1] },
            Group { kind: FeatureKind::Color(ColorBin::Yellow), members: vec![2, 3] },
        ],
        fallback: vec![],
    }
}

pub(crate) fn quick_cfg() -> TreeConfig {
    TreeConfig {
        initial_train: TrainConfig { epochs: 10, balanced_sampling: true, ..TrainConfig::default() },
        final_train: TrainConfig { epochs: 10, ..TrainConfig::default() },
        ..TreeConfig::default()
    }
}

#[test]
fn build_matches_group_structure_and_is_deterministic() {
    let ds = small_color4();
    let g = red_yellow_grouping(&ds);
    let (tree, record) = build_tree(&ds, &g, &quick_cfg(), None).unwrap();
    assert_eq!(tree.nodes.len(), 3);
    assert_eq!(tree.nodes[0].model.output_width(), 2);
    assert_eq!(tree.nodes[1].labels, ["red-disk", "red-bar"]);
    assert_eq!(tree.nodes[2].model.output_width(), 2);
    assert!(matches!(tree.nodes[1].model.activation(), ActivationKind::PwlSigmoid(_)));
    assert_eq!(record.nodes.len(), 3);
    assert!(record.nodes.iter().all(|r| !r.reused && r.stats.is_some()));
    let (again, _) = build_tree(&ds, &g, &quick_cfg(), None).unwrap();
    assert_eq!(again, tree);
}

#[test]
fn fallback_without_baseline_is_rejected() {
    let ds = small_color4();
    let mut g = red_yellow_grouping(&ds);
    g.groups[1].members = vec![2];
    g.fallback = vec![3];
    let err = build_tree(&ds, &g, &quick_cfg(), None).unwrap_err();
    assert!(err.to_string().contains("baseline"), "{err}");
    let empty = Grouping { groups: vec![], ..red_yellow_grouping(&ds) };
    assert!(build_tree(&ds, &empty, &quick_cfg(), None).is_err());
}

#[test]
fn path_cache_agrees_with_classify() {
    let ds = small_color4();
    let (baseline, _) =
        train_baseline(&ds, &[4], &TrainConfig { epochs: 5, ..TrainConfig::default() }, &ActivationKind::pwl_default())
            .unwrap();
    let (tree, _) = build_tree(&ds, &red_yellow_grouping(&ds), &quick_cfg(), Some(baseline)).unwrap();
    let cache = PathCache::build(&tree, &ds, Split::Test).unwrap();
    for delta in [0.0, 0.1, 0.3, 0.6, 1.01] {
        let at = FalconTree { delta, ..tree.clone() };
        let (direct, _) = evaluate(&at, ds.split(Split::Test), ds.class_names()).unwrap();
        assert_eq!(cache.report(delta).unwrap(), direct, "delta {delta}");
    }
    let rows = sweep_delta(&tree, &ds, Split::Test, &[0.0, 0.5, 1.01]).unwrap();
    assert_eq!(rows[0].baseline_rate, 0.0);
    assert_eq!(rows[2].baseline_rate, 1.0);
    assert!(rows.windows(2).all(|w| w[0].baseline_rate <= w[1].baseline_rate));
}

#[test]
fn merge_copies_nodes_and_rejects_overlap() {
    let a = toy_tree(false);
    let mut b = toy_tree(false);
    for nd in b.nodes.iter_mut().filter(|n| n.role == Role::Final) {
        for l in nd.labels.iter_mut() {
            *l = format!("b-{l}");
        }
    }
    let (m, record) = merge_trees(&[&a, &b], MergeOptions::default()).unwrap();
    assert_eq!(m.initial, vec![0, 3]);
    assert_eq!(m.nodes.len(), 6);
    assert_eq!(m.nodes[4].model, b.nodes[1].model);
    assert!(record.nodes.iter().all(|r| r.reused && r.stats.is_none()));
    assert_eq!(m.class_names().len(), 8);
    assert!(merge_trees(&[&a, &a], MergeOptions::default()).is_err());
}

#[test]
fn extension_strategies() {
    let ds = small_color4();
    let old = ds.subset_classes(&[0, 2, 3]).unwrap();
    let new = ds.subset_classes(&[1]).unwrap();
    let grouping = Grouping {
        class_names: old.class_names().to_vec(),
        groups: vec![
            Group { kind: FeatureKind::Color(ColorBin::Red), members: vec![0] },
            Group { kind: FeatureKind::Color(ColorBin::Yellow), members: vec![1, 2] },
        ],
        fallback: vec![],
    };
    let (tree, _) = build_tree(&old, &grouping, &quick_cfg(), None).unwrap();
    let base = ExtendConfig {
        kind: FeatureKind::Color(ColorBin::Red),
        initial_train: quick_cfg().initial_train,
        final_train: quick_cfg().final_train,
        ..ExtendConfig::default()
    };

    let add = ExtendConfig { strategy: Strategy::AddNewNode, ..base.clone() };
    let (t_add, rec) = extend_tree(&tree, &old, &new, &add).unwrap();
    assert_eq!(t_add.nodes[1], tree.nodes[1], "old final node untouched");
    assert_eq!(t_add.routes[0].targets, vec![1, 3]);
    assert_eq!(rec.nodes.iter().filter(|r| !r.reused).count(), 2);
    let red_img = new.split(Split::Test).next().unwrap();
    let (_, trace) = t_add.classify(&red_img.image).unwrap();
    if trace.routed_via == (Routing::Final { initial: 0, output: 0 }) {
        let expect = [0, 1, 3].iter().map(|&i| t_add.nodes[i].count_mac()).sum::<u64>();
        assert_eq!(trace.total_macs, expect);
    }

    let retrain = ExtendConfig { strategy: Strategy::RetrainFinal, ..base.clone() };
    let (t_re, _) = extend_tree(&tree, &old, &new, &retrain).unwrap();
    assert_eq!(t_re.nodes[1].model.output_width(), 2);
    assert_eq!(t_re.nodes[1].labels, ["red-disk", "red-bar"]);

    let empty = new.subset_classes(&[]).unwrap();
    assert!(extend_tree(&tree, &old, &empty, &add).is_err());
    assert!(extend_tree(&tree, &old, &old, &add).is_err(), "duplicate classes");
    let wrong = ExtendConfig { kind: FeatureKind::Color(ColorBin::Blue), ..add };
    assert!(extend_tree(&tree, &old, &new, &wrong).is_err());
}

#[test]
fn extension_plan_closed_forms() {
    let tree = toy_tree(false);
    let red = FeatureKind::Color(ColorBin::Red);
    let rule = WidthRule::default();
    let p0 = plan_extension(&tree, red, 0, &rule).unwrap();
    let current = tree.nodes[0].count_mac() + params().extraction_ops(red, (W, W)) + tree.nodes[1].count_mac();
    assert_eq!(p0.retrain_ops, current);
    assert_eq!(p0.add_node_ops, current);
    let p2 = plan_extension(&tree, red, 2, &rule).unwrap();
    let input = params().feature_len(red);
    let retrained = count_mac(&Topology::new(vec![input, rule.hidden(4), 4]).unwrap());
    assert_eq!(p2.retrain_ops, current - tree.nodes[1].count_mac() + retrained);
    let added = count_mac(&Topology::new(vec![input, rule.hidden(2), 2]).unwrap());
    assert_eq!(p2.add_node_ops, current + added);
}
