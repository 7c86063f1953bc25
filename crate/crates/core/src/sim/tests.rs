use super::*;
use crate::data::Split;
use crate::nn::{init_mlp, ActivationKind, MlpModel, Topology, TrainConfig};
use crate::tree::tests::{left_red, quick_cfg, red_yellow_grouping, small_color4, toy_tree};
use crate::tree::{build_tree, train_baseline, FalconTree};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pwl_model(sizes: Vec<usize>, seed: u64) -> MlpModel {
    init_mlp(&Topology::new(sizes).unwrap(), seed).with_activation(ActivationKind::pwl_default())
}

fn small_cfg(cap: usize) -> NeuEConfig {
    NeuEConfig { t_buffer_capacity: cap, ..NeuEConfig::default() }
}

#[test]
fn single_chunk_layer_never_evicts() {
    let top = Topology::new(vec![16, 16, 5]).unwrap();
    let s = map_network(&top, &small_cfg(1)).unwrap();
    assert_eq!(s.evictions(), 0);
    assert_eq!(s.layers[0].steps.len(), 1);
}

#[test]
fn two_by_two_layer_spills_one_group() {
    // chunk 0 stores 16 partial sums for each of two groups into a 16-entry
    // buffer, so the whole first group is spilled and refilled in chunk 1
    let top = Topology::new(vec![32, 32]).unwrap();
    let s = map_network(&top, &small_cfg(16)).unwrap();
    let l = &s.layers[0];
    assert_eq!(l.steps.len(), 4);
    assert_eq!(l.evictions, 16);
    assert_eq!(l.steps[1].evicted, (0..16).collect::<Vec<_>>());
    assert!(l.steps[2].loads.iter().all(|&p| p == PsumLoad::Sram));
    assert!(l.steps[3].loads.iter().all(|&p| p == PsumLoad::TBuffer));
    assert_eq!(map_network(&top, &small_cfg(32)).unwrap().evictions(), 0);
    assert_eq!(map_network(&top, &small_cfg(16)).unwrap(), s);
}

#[test]
fn counters_for_a_hand_sized_layer() {
    let m = pwl_model(vec![4, 2], 1);
    let r = simulate_inference(&NeuEConfig::default(), &m, &[1.0, 0.0, 0.5, 0.0]).unwrap();
    let c = r.counters;
    assert_eq!(c.macs, 4);
    assert_eq!(c.gated_macs, 4);
    assert_eq!(c.weight_fetches, 4);
    // 4 inputs + 2 biases + 4 weights
    assert_eq!(c.sram_reads, 10);
    assert_eq!(c.sram_writes, 2);
    // 4 loads + 2 streamed + 4 weights
    assert_eq!(c.fifo_accesses, 10);
    assert_eq!(c.au_evals, 2);
    assert_eq!(c.tbuf_accesses, 0);
    assert_eq!(r.cycles, 2);
    assert_eq!(r.energy_exec, 4.0 * 1.0 + 2.0 * 0.5 + 10.0 * 0.1);
    assert_eq!(r.energy_memory, 12.0 * 2.5);
}

#[test]
fn all_zero_input_gates_the_first_layer() {
    let m = pwl_model(vec![20, 7, 3], 2);
    let r = simulate_inference(&NeuEConfig::default(), &m, &[0.0; 20]).unwrap();
    let l0 = r.layers[&0][0];
    assert_eq!(l0.macs, 0);
    assert_eq!(l0.weight_fetches, 0);
    assert_eq!(l0.gated_macs, 140);
    assert_eq!(r.outputs, m.forward(&[0.0; 20]).unwrap());
}

#[test]
fn zero_fraction_scales_weight_fetches() {
    let (n_in, n_out) = (40, 24);
    let m = pwl_model(vec![n_in, n_out, 4], 3);
    for zeros in [0, 10, 20, 40] {
        let x: Vec<f64> = (0..n_in).map(|i| if i % 4 < zeros / 10 { 0.0 } else { 0.3 + i as f64 / 100.0 }).collect();
        let l0 = simulate_inference(&NeuEConfig::default(), &m, &x).unwrap().layers[&0][0];
        assert_eq!(l0.zero_inputs, zeros);
        assert_eq!(l0.weight_fetches as usize, (n_in - zeros) * n_out);
        assert_eq!(l0.gated_weight_fetches as usize, zeros * n_out);
        assert_eq!(l0.gated_macs, l0.gated_weight_fetches);
    }
}

#[test]
fn dimension_mismatch_is_rejected() {
    let m = pwl_model(vec![3, 2], 0);
    assert!(simulate_inference(&NeuEConfig::default(), &m, &[1.0]).is_err());
    let bad = NeuEConfig { num_nus: 0, ..NeuEConfig::default() };
    assert!(simulate_inference(&bad, &m, &[1.0; 3]).is_err());
}

#[test]
fn trace_lines_are_csv() {
    let m = pwl_model(vec![32, 32], 4);
    let (r, log) = simulate_inference_traced(&small_cfg(16), &m, &[0.5; 32]).unwrap();
    assert!(log.iter().filter(|e| e.event == "evict").count() == 16);
    assert!(log.iter().all(|e| e.to_string().split(',').count() == 4));
    assert!(log.windows(2).all(|w| w[0].cycle <= w[1].cycle));
    assert_eq!(r.counters.t_buf_evictions, 16);
    let s = SimSummary::new(&r, &NeuEConfig::default());
    assert!(serde_json::to_string(&s).unwrap().contains("tBufEvictions"));
}

fn share_of(cfg: &NeuEConfig, m: &MlpModel, xs: &[Vec<f64>]) -> f64 {
    let mut c = EventCounters::default();
    for x in xs {
        c.add(&simulate_inference(cfg, m, x).unwrap().counters);
    }
    exec_share(&c, &cfg.cost_table)
}

#[test]
fn calibration_hits_target_and_is_scale_free() {
    let m = pwl_model(vec![48, 24, 4], 5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xs: Vec<Vec<f64>> = (0..8).map(|_| (0..48).map(|_| rng.gen::<f64>()).collect()).collect();
    let cfg = calibrate_cost_table(&NeuEConfig::default(), &m, &xs, 0.7892, 0.05).unwrap();
    assert!((share_of(&cfg, &m, &xs) - 0.7892).abs() < 1e-9);
    assert_eq!(cfg.cost_table.mac, 1.0);
    let doubled = NeuEConfig { cost_table: cfg.cost_table.scaled(2.0), ..cfg };
    assert!((share_of(&doubled, &m, &xs) - share_of(&cfg, &m, &xs)).abs() < 1e-12);
    let err = calibrate_cost_table(&NeuEConfig::default(), &m, &xs, 1.0, 0.01).unwrap_err();
    assert!(matches!(err, Error::Calibration(_)));
    let dead = NeuEConfig {
        cost_table: CostTable { mac: 0.0, au_eval: 0.0, fifo_access: 0.0, tbuf_access: 0.0, ..CostTable::default() },
        ..NeuEConfig::default()
    };
    assert!(matches!(calibrate_cost_table(&dead, &m, &xs, 0.7892, 0.05), Err(Error::Calibration(_))));
}

#[test]
fn tree_simulation_activates_the_classified_path() {
    let cfg = NeuEConfig::default();
    for with_baseline in [false, true] {
        for delta in [0.0, 2.0] {
            let tree = FalconTree { delta, ..toy_tree(with_baseline) };
            let img = left_red();
            let (outcome, trace) = tree.classify(&img).unwrap();
            let r = simulate_tree(&cfg, &tree, &img, &tree.features).unwrap();
            assert_eq!(r.activated_node_ids, trace.activated_ids());
            assert_eq!(r.label.as_deref(), outcome.label());
            assert_eq!(r.counters.feature_ops, trace.feature_ops);
            assert_eq!(r.counters.macs + r.counters.gated_macs, trace.total_macs);
            for id in 0..tree.nodes.len() {
                assert_eq!(r.per_node.contains_key(&id), trace.activated_ids().contains(&id));
            }
        }
    }
}

#[test]
fn large_delta_spends_only_on_initial_and_baseline() {
    let tree = FalconTree { delta: 2.0, ..toy_tree(true) };
    let r = simulate_tree(&NeuEConfig::default(), &tree, &left_red(), &tree.features).unwrap();
    assert_eq!(r.activated_node_ids, vec![0, 3]);
    assert_eq!(r.counters.feature_ops, 0);
    let only: f64 = r.per_node.values().map(|c| c.exec_energy(&NeuEConfig::default().cost_table)).sum();
    assert_eq!(only, r.energy_exec);
}

#[test]
fn energy_sweep_tracks_the_baseline_rate() {
    let ds = small_color4();
    let train = TrainConfig { epochs: 5, ..TrainConfig::default() };
    let (baseline, _) = train_baseline(&ds, &[16], &train, &ActivationKind::pwl_default()).unwrap();
    let (tree, _) = build_tree(&ds, &red_yellow_grouping(&ds), &quick_cfg(), Some(baseline)).unwrap();
    let rows =
        energy_sweep(&NeuEConfig::default(), &tree, &ds, Split::Test, &[0.0, 0.3, 1.01], &tree.features).unwrap();
    let plain = crate::tree::sweep_delta(&tree, &ds, Split::Test, &[0.0, 0.3, 1.01]).unwrap();
    for (e, p) in rows.iter().zip(&plain) {
        assert_eq!(e.baseline_rate, p.baseline_rate);
        assert_eq!(e.accuracy, p.accuracy);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn outputs_match_reference_forward(
        sizes in prop::collection::vec(1usize..40, 2..5),
        seed in any::<u64>(),
        zero_every in 0usize..5,
        nus in 1usize..20,
        depth in 1usize..20,
        cap in 1usize..40,
    ) {
        let m = pwl_model(sizes.clone(), seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let x: Vec<f64> = (0..sizes[0])
            .map(|i| if zero_every > 0 && i % zero_every == 0 { 0.0 } else { rng.gen_range(-2.0..2.0) })
            .collect();
        let cfg = NeuEConfig { num_nus: nus, input_fifo_depth: depth, t_buffer_capacity: cap, ..NeuEConfig::default() };
        let r = simulate_inference(&cfg, &m, &x).unwrap();
        let reference = m.forward(&x).unwrap();
        prop_assert_eq!(
            r.outputs.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            reference.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        prop_assert_eq!(r.counters.t_buf_refills, r.counters.t_buf_evictions);
        prop_assert_eq!(r.counters.macs + r.counters.gated_macs, m.count_mac());
        for l in &r.layers[&0] {
            prop_assert_eq!(l.gated_weight_fetches as usize, l.zero_inputs * l.outputs);
        }
        let t = &cfg.cost_table;
        let c = &r.counters;
        let by_kind = [
            c.sram_reads as f64 * t.sram_read,
            c.sram_writes as f64 * t.sram_write,
            c.fifo_accesses as f64 * t.fifo_access,
            c.tbuf_accesses as f64 * t.tbuf_access,
            (c.macs + c.feature_ops) as f64 * t.mac,
            c.au_evals as f64 * t.au_eval,
        ];
        let total: f64 = by_kind.iter().sum();
        prop_assert!((r.energy_total() - total).abs() <= 1e-9 * total.max(1.0));
    }
}
