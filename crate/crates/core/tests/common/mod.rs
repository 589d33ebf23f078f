#![allow(dead_code)]

use eegtcn_core::archspec::{Family, HyperParams};
use eegtcn_core::{Tensor, TrialSet, WeightStore};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_tensor(rng: &mut ChaCha8Rng, dims: Vec<usize>) -> Tensor {
    Tensor::from_fn(dims, |_| rng.gen_range(-1.0f32..1.0))
}

/// Elementwise `|a − b| ≤ tol · max|b|` (relative to the reference's largest
/// magnitude, floored at 1e-30).
pub fn max_rel_error(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.dims(), b.dims(), "shape mismatch");
    let scale = b.data().iter().fold(1e-30f64, |m, &v| m.max(v.abs() as f64));
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64 - y as f64).abs() / scale)
        .fold(0.0, f64::max)
}

pub fn assert_close(a: &Tensor, b: &Tensor, tol: f64) {
    let err = max_rel_error(a, b);
    assert!(err <= tol, "relative error {err:e} exceeds {tol:e}\n{a:?}\n{b:?}");
}

/// He-uniform style random weights with sane BatchNorm statistics.
pub fn random_store(hp: &HyperParams, family: Family, seed: u64) -> WeightStore {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    WeightStore::from_fn(hp.clone(), family, |spec, _| {
        let fan_in: usize = spec.dims[1..].iter().product::<usize>().max(1);
        match spec.role {
            "gamma" => rng.gen_range(0.5..1.5),
            "beta" | "mean" => rng.gen_range(-0.2..0.2),
            "var" => rng.gen_range(0.5..1.5),
            "bias" => rng.gen_range(-0.1..0.1),
            _ => {
                let limit = (6.0 / fan_in as f32).sqrt();
                rng.gen_range(-limit..limit)
            }
        }
    })
    .unwrap()
}

pub fn random_trials(rng: &mut ChaCha8Rng, n: usize, c: usize, t: usize, n_classes: usize) -> TrialSet {
    let labels = (0..n).map(|_| rng.gen_range(0..n_classes)).collect();
    let data = (0..n * c * t).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    TrialSet::new(250.0, n_classes, c, t, labels, data).unwrap()
}
