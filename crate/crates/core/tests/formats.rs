//! ETCW and ETRL containers: byte-stable round trips and malformed input.

mod common;

use std::collections::BTreeSet;

use common::{random_store, random_trials};
use eegtcn_core::archspec::{Family, HyperParams};
use eegtcn_core::runtime::{
    load_container, load_trials, load_weights, quantize_weights, save_trials, save_weights, EtcwContainer,
    FormatError, ManifestEntry, StoredTensor, WeightStore8,
};
use eegtcn_core::{Tensor, TrialSet};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_hp(f1: usize, kernel_t: usize, blocks: usize, tcn_filters: usize) -> HyperParams {
    HyperParams {
        f1,
        f2: None,
        kernel_t,
        blocks,
        tcn_filters,
        channels: 3,
        samples: 128,
        ..HyperParams::fixed()
    }
}

fn with_manifest(mut c: EtcwContainer) -> EtcwContainer {
    c.meta.tensors = c
        .tensors
        .iter()
        .map(|(name, t)| ManifestEntry { name: name.clone(), dims: t.dims().to_vec(), dtype: t.dtype() })
        .collect();
    c
}

fn fixed_bytes() -> Vec<u8> {
    save_weights(&random_store(&HyperParams::fixed(), Family::EegTcnet, 1)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn etcw_round_trip_is_byte_identical(seed: u64, f1 in 1usize..6, kt in 2usize..5, blocks in 1usize..4,
                                          ft in 1usize..12, eegnet: bool) {
        let family = if eegnet { Family::Eegnet } else { Family::EegTcnet };
        let store = random_store(&small_hp(f1, kt, blocks, ft), family, seed);
        let bytes = save_weights(&store).unwrap();
        let back = load_weights(&bytes).unwrap();
        prop_assert_eq!(&back, &store);
        prop_assert_eq!(save_weights(&back).unwrap(), bytes);
    }

    #[test]
    fn etrl_round_trip_is_byte_identical(seed: u64, n in 0usize..12, c in 1usize..6, t in 0usize..40,
                                          classes in 1usize..6, fs in 1f32..1000.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = random_trials(&mut rng, n, c, t.max(1), classes);
        let set = TrialSet::new(fs, classes, c, t.max(1), set.labels().to_vec(), set.data().to_vec()).unwrap();
        let bytes = save_trials(&set).unwrap();
        prop_assert_eq!(bytes.len(), 23 + n + 4 * n * c * t.max(1));
        let back = load_trials(&bytes).unwrap();
        prop_assert_eq!(&back, &set);
        prop_assert_eq!(save_trials(&back).unwrap(), bytes);
    }

    #[test]
    fn every_etrl_prefix_is_truncated(seed: u64, cut in 0usize..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bytes = save_trials(&random_trials(&mut rng, 3, 2, 20, 4)).unwrap();
        let cut = cut % bytes.len();
        let err = load_trials(&bytes[..cut]).unwrap_err();
        prop_assert!(matches!(err, FormatError::Truncated(_)), "{:?}", err);
    }

    #[test]
    fn every_etcw_prefix_is_truncated(seed: u64, cut in 0usize..100_000) {
        let store = random_store(&small_hp(2, 4, 2, 4), Family::EegTcnet, seed);
        let bytes = save_weights(&store).unwrap();
        let cut = cut % bytes.len();
        let err = load_weights(&bytes[..cut]).unwrap_err();
        // a cut inside the JSON metadata is reported by the reader as truncation too
        prop_assert!(matches!(err, FormatError::Truncated(_)), "{:?} at {}", err, cut);
    }
}

#[test]
fn quantized_container_round_trip() {
    let hp = small_hp(4, 4, 2, 6);
    let w = random_store(&hp, Family::EegTcnet, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let calib = random_trials(&mut rng, 10, 3, 128, 4);
    let (w8, params) = quantize_weights(&w, &calib, None).unwrap();
    let bytes = w8.to_bytes(&params).unwrap();
    let container = load_container(&bytes).unwrap();
    assert!(container.is_quantized());
    assert!(container.meta.tensors.iter().all(|e| e.dtype == 1));
    let (back, back_params) = WeightStore8::from_bytes(&bytes).unwrap();
    assert_eq!(back, w8);
    assert_eq!(back_params, params);
    assert_eq!(back.to_bytes(&back_params).unwrap(), bytes);
    assert_eq!(load_weights(&bytes), Err(FormatError::QuantizedContainer));
    assert_eq!(WeightStore8::from_bytes(&fixed_bytes()).unwrap_err(), FormatError::FloatContainer);
}

#[test]
fn malformed_inputs_have_distinct_diagnostics() {
    let good = fixed_bytes();
    let base = load_container(&good).unwrap();
    let mut errors: Vec<FormatError> = Vec::new();

    let mut bad = good.clone();
    bad[..4].copy_from_slice(b"ETRL");
    errors.push(load_weights(&bad).unwrap_err());

    let mut bad = good.clone();
    bad[4..8].copy_from_slice(&7u32.to_le_bytes());
    errors.push(load_weights(&bad).unwrap_err());

    errors.push(load_weights(&good[..good.len() - 3]).unwrap_err());

    let mut bad = good.clone();
    bad.extend_from_slice(&[0, 0]);
    errors.push(load_weights(&bad).unwrap_err());

    let mut c = base.clone();
    c.tensors.retain(|(n, _)| n != "L01.gamma");
    errors.push(load_weights(&with_manifest(c).to_bytes().unwrap()).unwrap_err());

    let mut c = base.clone();
    c.tensors.push(("L99.weight".into(), StoredTensor::F32(Tensor::zeros(vec![2]))));
    errors.push(load_weights(&with_manifest(c).to_bytes().unwrap()).unwrap_err());

    let mut c = base.clone();
    c.tensors[0].1 = StoredTensor::F32(Tensor::zeros(vec![8, 1, 1, 31]));
    errors.push(load_weights(&with_manifest(c).to_bytes().unwrap()).unwrap_err());

    let mut c = base.clone();
    c.meta.tensors[3].name = "L01.beta_".into();
    errors.push(load_weights(&c.to_bytes().unwrap()).unwrap_err());

    // dtype byte of the first tensor record
    let meta_len = u32::from_le_bytes(good[8..12].try_into().unwrap()) as usize;
    let first = 12 + meta_len + 4;
    let name_len = u16::from_le_bytes(good[first..first + 2].try_into().unwrap()) as usize;
    let mut bad = good.clone();
    bad[first + 2 + name_len] = 9;
    errors.push(load_weights(&bad).unwrap_err());

    let mut bad = good.clone();
    bad[12] = b'[';
    errors.push(load_weights(&bad).unwrap_err());

    let mut trials = save_trials(&TrialSet::new(250.0, 2, 1, 1, vec![0], vec![1.0]).unwrap()).unwrap();
    trials[22] = 0; // n_classes = 0 leaves label 0 out of range
    errors.push(load_trials(&trials).unwrap_err());

    let kinds: Vec<&str> = errors
        .iter()
        .map(|e| match e {
            FormatError::BadMagic { .. } => "magic",
            FormatError::VersionMismatch { .. } => "version",
            FormatError::Truncated(_) => "truncated",
            FormatError::TrailingBytes(_) => "trailing",
            FormatError::MissingParameter(n) => {
                assert_eq!(n, "L01.gamma");
                "missing"
            }
            FormatError::UnknownParameter(n) => {
                assert_eq!(n, "L99.weight");
                "unknown"
            }
            FormatError::DimsMismatch { name, .. } => {
                assert_eq!(name, "L00.weight");
                "dims"
            }
            FormatError::ManifestMismatch(_) => "manifest",
            FormatError::UnknownDtype(9) => "dtype",
            FormatError::BadMeta(_) => "meta",
            FormatError::InvalidTrials(_) => "trials",
            other => panic!("unexpected {other:?}"),
        })
        .collect();
    assert_eq!(kinds.len(), kinds.iter().collect::<BTreeSet<_>>().len(), "{kinds:?}");
    let messages: BTreeSet<String> = errors.iter().map(|e| e.to_string()).collect();
    assert_eq!(messages.len(), errors.len());
    assert!(errors[4].to_string().contains("missing parameter L01.gamma"));
}
