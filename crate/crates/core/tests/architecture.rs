//! Graph construction and static cost accounting.

mod common;

use eegtcn_core::analyzer::{analyze, graph_receptive_field, layer_macs};
use eegtcn_core::archspec::{ArchError, Family, HyperParams, LayerKind};
use eegtcn_core::presets;
use eegtcn_core::runtime::{run_graph, FastBackend};
use eegtcn_core::{build, count_macs, count_params, peak_memory_bytes, receptive_field_size, Tensor, WeightStore};
use proptest::prelude::*;

fn hp_strategy() -> impl Strategy<Value = HyperParams> {
    (1usize..20, 1usize..70, 2usize..7, 1usize..5, 1usize..30, 1usize..24, 2usize..6, 0usize..3)
        .prop_map(|(f1, kernel_e, kernel_t, blocks, tcn_filters, channels, n_classes, f2_mult)| HyperParams {
            f1,
            f2: (f2_mult > 0).then_some(f1 * f2_mult),
            kernel_e,
            kernel_t,
            blocks,
            tcn_filters,
            channels,
            n_classes,
            // pooled length never exceeds the receptive field
            samples: 64 * (receptive_field_size(kernel_t, blocks as u32) as usize).min(20) + kernel_e % 64,
            ..HyperParams::fixed()
        })
}

/// Receptive field by tracking which input positions reach the last output
/// through the stack of dilated taps.
fn brute_force_rfs(kernel: usize, blocks: u32) -> u64 {
    let mut reach = vec![0i64];
    for block in (0..blocks).rev() {
        let d = 1i64 << block;
        for _ in 0..2 {
            let mut next: Vec<i64> = reach
                .iter()
                .flat_map(|&p| (0..kernel as i64).map(move |j| p - j * d))
                .collect();
            next.sort_unstable();
            next.dedup();
            reach = next;
        }
    }
    (reach.last().unwrap() - reach.first().unwrap() + 1) as u64
}

#[test]
fn fixed_network_parameters() {
    let start = std::time::Instant::now();
    let graph = build(&HyperParams::fixed(), Family::EegTcnet).unwrap();
    assert_eq!(count_params(&graph).unwrap(), 4272);
    assert!(start.elapsed().as_secs_f64() < 1.0);
    let store = WeightStore::from_fn(HyperParams::fixed(), Family::EegTcnet, |_, _| 0.0).unwrap();
    assert_eq!(store.numel(), 4272);
}

#[test]
fn variable_eeg_tcnet_parameters() {
    for preset in presets::variable_eeg_tcnet() {
        let subject = preset.subject.unwrap();
        let r = preset.reconcile().unwrap();
        if [5, 8, 9].contains(&subject) {
            assert!(!r.matches(), "subject {subject}");
            assert_eq!(r.computed - r.published, 512 * preset.hp.f1 as u64 / 16, "subject {subject}");
            assert_eq!(r.alternative, Some((32, r.published)), "subject {subject}");
            let as_32 = HyperParams { kernel_e: 32, ..preset.hp.clone() };
            assert_eq!(count_params(&build(&as_32, Family::EegTcnet).unwrap()).unwrap(), preset.published_params);
            assert!(r.describe().contains("K_E=32"));
        } else {
            assert!(r.matches(), "subject {subject}: {}", r.describe());
        }
    }
    let expected = [6144, 6793, 5815, 12_171, 20_526, 12_171, 8184, 16_526, 8176];
    let listed: Vec<u64> = presets::variable_eeg_tcnet().iter().map(|p| p.published_params).collect();
    assert_eq!(listed, expected);
}

#[test]
fn variable_eegnet_parameters() {
    for preset in presets::variable_eegnet() {
        let r = preset.reconcile().unwrap();
        assert!(r.matches(), "{}: {}", preset.label(), r.describe());
    }
    assert_eq!(presets::lookup("eegnet:1").unwrap().published_params, 15_620);
    assert_eq!(presets::lookup("eegnet:3").unwrap().published_params, 2628);
    assert!(presets::lookup("eegnet:10").is_none());
    assert!(presets::lookup("eeg_tcnet:0").is_none());
}

#[test]
fn mac_accounting() {
    let graph = build(&HyperParams::fixed(), Family::EegTcnet).unwrap();
    let macs = count_macs(&graph).unwrap();
    assert_eq!(macs, 6_849_424);
    assert!((macs as f64 - 6.8e6).abs() / 6.8e6 <= 0.015);
    let temporal = graph
        .layers
        .iter()
        .position(|l| matches!(l.kind, LayerKind::Conv2DSame { .. }))
        .unwrap();
    assert_eq!(layer_macs(&graph, temporal), 6_336_000);

    let eegnet = HyperParams { f1: 8, f2: None, kernel_e: 64, ..HyperParams::fixed() };
    let macs = count_macs(&build(&eegnet, Family::Eegnet).unwrap()).unwrap();
    assert!((macs as f64 - 13.1e6).abs() / 13.1e6 <= 0.01, "{macs}");
}

#[test]
fn memory_accounting() {
    let graph = build(&HyperParams::fixed(), Family::EegTcnet).unwrap();
    assert_eq!(peak_memory_bytes(&graph, 1).unwrap(), 396_000);
    let wide: Vec<_> = presets::variable_eeg_tcnet()
        .into_iter()
        .chain(presets::variable_eegnet())
        .filter(|p| p.hp.f1 == 16)
        .collect();
    assert!(wide.len() >= 5);
    for p in wide {
        let g = build(&p.hp, p.family).unwrap();
        assert_eq!(peak_memory_bytes(&g, 1).unwrap(), 792_000, "{}", p.label());
    }
}

#[test]
fn receptive_field() {
    assert_eq!(receptive_field_size(4, 2), 19);
    assert!(receptive_field_size(4, 2) >= 17);
    let graph = build(&HyperParams::fixed(), Family::EegTcnet).unwrap();
    assert_eq!(graph_receptive_field(&graph), Some(19));
    assert_eq!(graph_receptive_field(&build(&HyperParams::fixed(), Family::Eegnet).unwrap()), None);
    let short = HyperParams { kernel_t: 2, blocks: 1, ..HyperParams::fixed() };
    assert!(matches!(
        build(&short, Family::EegTcnet),
        Err(ArchError::ReceptiveFieldTooSmall { rfs: 3, required: 17 })
    ));
}

#[test]
fn report_renders_key_lines() {
    let report = analyze(&build(&HyperParams::fixed(), Family::EegTcnet).unwrap(), Family::EegTcnet, 1).unwrap();
    let text = report.to_text();
    for line in ["params=4272", "macs=6849424", "peak_memory_bytes=396000", "rfs=19"] {
        assert!(text.lines().any(|l| l.trim() == line), "{line} missing from\n{text}");
    }
    let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(json["params"], 4272);
    assert_eq!(json["per_layer"].as_array().unwrap().len(), report.per_layer.len());
    let sum: u64 = report.per_layer.iter().map(|l| l.params).sum();
    assert_eq!(sum, 4272);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn params_equal_enumerated_tensors(hp in hp_strategy(), eegnet: bool) {
        let family = if eegnet { Family::Eegnet } else { Family::EegTcnet };
        let graph = build(&hp, family).unwrap();
        prop_assert!(graph.validate().is_ok());
        let store = WeightStore::from_fn(hp.clone(), family, |_, _| 1.0).unwrap();
        prop_assert_eq!(count_params(&graph).unwrap(), store.numel() as u64);
        let per_layer: u64 = (0..graph.len()).map(|i| eegtcn_core::analyzer::layer_params(&graph, i)).sum();
        prop_assert_eq!(per_layer, store.numel() as u64);
    }

    #[test]
    fn costs_grow_with_every_size(hp in hp_strategy(), which in 0usize..5) {
        let base = build(&hp, Family::EegTcnet).unwrap();
        let mut bigger = hp.clone();
        match which {
            0 => { bigger.f1 += 1; bigger.f2 = bigger.f2.map(|f| f + f / hp.f1); }
            1 => bigger.kernel_e += 1,
            2 => bigger.kernel_t += 1,
            3 => bigger.blocks += 1,
            _ => bigger.tcn_filters += 1,
        }
        // dropping the skip projection is the one way a bigger size can shrink
        prop_assume!((hp.f2() == hp.tcn_filters) == (bigger.f2() == bigger.tcn_filters));
        let grown = build(&bigger, Family::EegTcnet).unwrap();
        prop_assert!(count_params(&grown).unwrap() >= count_params(&base).unwrap());
        prop_assert!(count_macs(&grown).unwrap() >= count_macs(&base).unwrap());
        prop_assert!(peak_memory_bytes(&grown, 1).unwrap() >= peak_memory_bytes(&base, 1).unwrap());
    }

    #[test]
    fn memory_scales_with_element_size(hp in hp_strategy(), bpe in 1u64..9, eegnet: bool) {
        let family = if eegnet { Family::Eegnet } else { Family::EegTcnet };
        let graph = build(&hp, family).unwrap();
        prop_assert_eq!(peak_memory_bytes(&graph, bpe).unwrap(), bpe * peak_memory_bytes(&graph, 1).unwrap());
    }

    #[test]
    fn rfs_matches_tap_tracking(kernel in 1usize..8, blocks in 0u32..7) {
        prop_assert_eq!(receptive_field_size(kernel, blocks), brute_force_rfs(kernel, blocks));
    }

    #[test]
    fn json_config_round_trip(hp in hp_strategy()) {
        prop_assert_eq!(HyperParams::from_json(&hp.to_json()).unwrap(), hp);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // every executed layer produces exactly the shape archspec declares
    #[test]
    fn executed_shapes_follow_the_graph(hp in hp_strategy(), eegnet: bool) {
        let hp = HyperParams { channels: hp.channels.min(6), ..hp };
        let family = if eegnet { Family::Eegnet } else { Family::EegTcnet };
        let store = WeightStore::from_fn(hp.clone(), family, |s, i| {
            if s.role == "var" { 1.0 } else { ((i * 7919) % 17) as f32 / 17.0 - 0.5 }
        }).unwrap();
        let graph = store.graph();
        let trial = Tensor::from_fn(vec![hp.channels, hp.samples], |i| ((i % 13) as f32 - 6.0) / 6.0);
        let mut shapes = Vec::new();
        run_graph(&FastBackend, &graph, &|n| store.get(n), &trial, &mut |_, _, out| shapes.push(out.dims().to_vec()))
            .unwrap();
        let declared: Vec<Vec<usize>> = graph.layers.iter().map(|l| l.output_shape.clone()).collect();
        let flat = |s: &Vec<usize>| s.iter().product::<usize>();
        prop_assert_eq!(shapes.len(), declared.len());
        for (got, want) in shapes.iter().zip(&declared) {
            prop_assert_eq!(flat(got), flat(want));
            prop_assert_eq!(got.last(), want.last());
        }
    }
}

#[test]
fn matching_tcn_width_removes_the_projection() {
    let hp = HyperParams { f1: 13, f2: None, kernel_t: 2, blocks: 1, tcn_filters: 25, samples: 192, ..HyperParams::fixed() };
    let wider = HyperParams { tcn_filters: 26, ..hp.clone() };
    let params = |h: &HyperParams| count_params(&build(h, Family::EegTcnet).unwrap()).unwrap();
    let has_projection = |h: &HyperParams| {
        build(h, Family::EegTcnet).unwrap().layers.iter().any(|l| matches!(l.kind, LayerKind::PointwiseConv1D { .. }))
    };
    assert!(has_projection(&hp) && !has_projection(&wider));
    assert_eq!(params(&hp) - params(&wider), 507);
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = HyperParams { f1: 0, dropout_t: 1.5, ..HyperParams::fixed() };
    let err = build(&bad, Family::EegTcnet).unwrap_err().to_string();
    assert!(err.contains("F1") && err.contains("p_t"), "{err}");
    let extra = r#"{"F1":8,"K_E":32,"K_T":4,"L":2,"F_T":12,"p_e":0.2,"p_t":0.3,"standardize":true,"C":22,"T":1125,"n_classes":4,"bogus":1}"#;
    assert!(matches!(HyperParams::from_json(extra), Err(ArchError::Config(_))));
    let ok = extra.replace(r#","bogus":1"#, "");
    assert_eq!(HyperParams::from_json(&ok).unwrap().f2(), 16);
}
