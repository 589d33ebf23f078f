use serde::{Deserialize, Serialize};

use super::RuntimeError;
use crate::tensor::Tensor;

/// Floor applied to per-channel standard deviations before dividing.
pub const STD_FLOOR: f32 = 1e-8;
/// Window start relative to the cue, in seconds.
pub const WINDOW_PRE_CUE_S: f32 = 0.5;
/// Window end relative to the cue, in seconds.
pub const WINDOW_POST_CUE_S: f32 = 4.0;
/// Samples per extracted window at 250 Hz.
pub const WINDOW_SAMPLES: usize = 1125;
const SUPPORTED_FS: f32 = 250.0;

/// Labelled trials stored trial-major, then channel, then time.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSet {
    fs: f32,
    n_classes: usize,
    channels: usize,
    samples: usize,
    labels: Vec<usize>,
    data: Vec<f32>,
}

impl TrialSet {
    pub fn new(
        fs: f32,
        n_classes: usize,
        channels: usize,
        samples: usize,
        labels: Vec<usize>,
        data: Vec<f32>,
    ) -> Result<Self, RuntimeError> {
        let invalid = |m: String| Err(RuntimeError::InvalidTrials(m));
        if !(fs > 0.0 && fs.is_finite()) {
            return invalid(format!("sampling rate {fs} must be positive"));
        }
        if data.len() != labels.len() * channels * samples {
            return invalid(format!(
                "{} values for {} trials of {channels}x{samples}",
                data.len(),
                labels.len()
            ));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
            return invalid(format!("label {l} is not below n_classes = {n_classes}"));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return invalid(format!("non-finite sample at flat index {i}"));
        }
        Ok(Self {
            fs,
            n_classes,
            channels,
            samples,
            labels,
            data,
        })
    }

    /// Builds a set from `(C, T)` trial tensors.
    pub fn from_trials(fs: f32, n_classes: usize, trials: &[Tensor], labels: Vec<usize>) -> Result<Self, RuntimeError> {
        let (c, t) = match trials.first().map(|t| t.dims()) {
            Some(&[c, t]) => (c, t),
            Some(d) => return Err(RuntimeError::InvalidTrials(format!("trial dims {d:?} are not (C, T)"))),
            None => (0, 0),
        };
        if trials.len() != labels.len() {
            return Err(RuntimeError::InvalidTrials(format!(
                "{} trials but {} labels",
                trials.len(),
                labels.len()
            )));
        }
        let mut data = Vec::with_capacity(trials.len() * c * t);
        for tr in trials {
            if tr.dims() != [c, t] {
                return Err(RuntimeError::InvalidTrials(format!("trial dims {:?} differ", tr.dims())));
            }
            data.extend_from_slice(tr.data());
        }
        Self::new(fs, n_classes, c, t, labels, data)
    }

    pub fn n_trials(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn fs(&self) -> f32 {
        self.fs
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn trial_slice(&self, index: usize) -> &[f32] {
        let n = self.channels * self.samples;
        &self.data[index * n..(index + 1) * n]
    }

    /// One trial as a `(C, T)` tensor.
    pub fn trial(&self, index: usize) -> Tensor {
        Tensor::new(vec![self.channels, self.samples], self.trial_slice(index).to_vec())
            .expect("trial extents are consistent")
    }

    /// Same set with `stats` applied to every trial.
    pub fn standardized(&self, stats: &StandardizationStats) -> Result<Self, RuntimeError> {
        let mut out = self.clone();
        let n = self.channels * self.samples;
        for chunk in out.data.chunks_mut(n.max(1)) {
            stats.apply_in_place(chunk, self.channels, self.samples)?;
        }
        Ok(out)
    }
}

/// Per-channel mean and standard deviation fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl StandardizationStats {
    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    fn apply_in_place(&self, data: &mut [f32], channels: usize, samples: usize) -> Result<(), RuntimeError> {
        if channels != self.channels() || self.std.len() != channels || data.len() != channels * samples {
            return Err(RuntimeError::Geometry {
                expected_channels: self.channels(),
                expected_samples: samples,
                found_channels: channels,
                found_samples: data.len() / channels.max(1),
            });
        }
        for (c, row) in data.chunks_mut(samples.max(1)).enumerate() {
            let mean = self.mean[c] as f64;
            let std = (self.std[c].max(STD_FLOOR)) as f64;
            for v in row {
                *v = ((*v as f64 - mean) / std) as f32;
            }
        }
        Ok(())
    }
}

/// Mean and (population) standard deviation per channel over every trial and
/// time point of `train`.
pub fn fit_standardization(train: &TrialSet) -> Result<StandardizationStats, RuntimeError> {
    if train.is_empty() || train.samples == 0 {
        return Err(RuntimeError::EmptyTrialSet);
    }
    let (c, t) = (train.channels, train.samples);
    let count = (train.n_trials() * t) as f64;
    let mut sums = vec![0f64; c];
    for i in 0..train.n_trials() {
        for (ch, row) in train.trial_slice(i).chunks(t).enumerate() {
            sums[ch] += row.iter().map(|&v| v as f64).sum::<f64>();
        }
    }
    let means: Vec<f64> = sums.iter().map(|s| s / count).collect();
    let mut sq = vec![0f64; c];
    for i in 0..train.n_trials() {
        for (ch, row) in train.trial_slice(i).chunks(t).enumerate() {
            sq[ch] += row.iter().map(|&v| (v as f64 - means[ch]).powi(2)).sum::<f64>();
        }
    }
    Ok(StandardizationStats {
        mean: means.iter().map(|&m| m as f32).collect(),
        std: sq
            .iter()
            .map(|&s| ((s / count).sqrt() as f32).max(STD_FLOOR))
            .collect(),
    })
}

/// `(x − mean) / std` per channel of a `(C, T)` trial.
pub fn apply_standardization(x: &Tensor, stats: &StandardizationStats) -> Result<Tensor, RuntimeError> {
    let (c, t) = match *x.dims() {
        [c, t] => (c, t),
        [1, c, t] => (c, t),
        ref d => return Err(RuntimeError::InvalidTrials(format!("trial dims {d:?} are not (C, T)"))),
    };
    let mut out = x.clone();
    stats.apply_in_place(out.data_mut(), c, t)?;
    Ok(out)
}

/// Cuts `[cue − 0.5 s, cue + 4.0 s)` out of a continuous `(C, samples)`
/// recording sampled at 250 Hz.
pub fn extract_window(raw: &Tensor, cue_sample: usize, fs: f32) -> Result<Tensor, RuntimeError> {
    if fs != SUPPORTED_FS {
        return Err(RuntimeError::WrongSamplingRate(fs));
    }
    let [c, len] = *raw.dims() else {
        return Err(RuntimeError::InvalidTrials(format!(
            "recording dims {:?} are not (C, samples)",
            raw.dims()
        )));
    };
    let start = cue_sample as i64 - (WINDOW_PRE_CUE_S * fs).round() as i64;
    let end = cue_sample as i64 + (WINDOW_POST_CUE_S * fs).round() as i64;
    if start < 0 || end > len as i64 {
        return Err(RuntimeError::WindowOutOfRange { start, end, len });
    }
    let (start, end) = (start as usize, end as usize);
    let mut data = Vec::with_capacity(c * (end - start));
    for row in raw.data().chunks(len) {
        data.extend_from_slice(&row[start..end]);
    }
    Ok(Tensor::new(vec![c, end - start], data).expect("window extents"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(data: Vec<f32>, c: usize, t: usize) -> TrialSet {
        let n = data.len() / (c * t);
        TrialSet::new(250.0, 4, c, t, vec![0; n], data).unwrap()
    }

    #[test]
    fn rejects_bad_sets() {
        assert!(TrialSet::new(0.0, 4, 1, 1, vec![0], vec![0.0]).is_err());
        assert!(TrialSet::new(250.0, 4, 1, 1, vec![4], vec![0.0]).is_err());
        assert!(TrialSet::new(250.0, 4, 1, 1, vec![0], vec![f32::NAN]).is_err());
        assert!(TrialSet::new(250.0, 4, 1, 2, vec![0], vec![0.0]).is_err());
    }

    #[test]
    fn constant_channel_standardizes_to_zero() {
        let s = set(vec![3.0, 3.0, 3.0, 1.0, 2.0, 3.0], 2, 3);
        let stats = fit_standardization(&s).unwrap();
        assert_eq!(stats.std[0], STD_FLOOR);
        let out = s.standardized(&stats).unwrap();
        assert!(out.data()[..3].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fitted_stats_normalize_training_data() {
        let data: Vec<f32> = (0..2 * 3 * 50).map(|i| ((i * 37 % 101) as f32) * 0.3 - 7.0).collect();
        let s = set(data, 3, 50);
        let stats = fit_standardization(&s).unwrap();
        let refit = fit_standardization(&s.standardized(&stats).unwrap()).unwrap();
        for c in 0..3 {
            assert!(refit.mean[c].abs() < 1e-6, "{}", refit.mean[c]);
            assert!((refit.std[c] - 1.0).abs() < 1e-4, "{}", refit.std[c]);
        }
    }

    #[test]
    fn test_set_keeps_its_offset() {
        let train = set(vec![0.0, 1.0, 2.0, 3.0], 1, 4);
        let test = set(vec![10.0, 11.0, 12.0, 13.0], 1, 4);
        let stats = fit_standardization(&train).unwrap();
        let out = test.standardized(&stats).unwrap();
        let mean: f32 = out.data().iter().sum::<f32>() / 4.0;
        assert!(mean > 1.0);
    }

    #[test]
    fn empty_set_cannot_be_fitted() {
        let empty = TrialSet::new(250.0, 4, 2, 3, vec![], vec![]).unwrap();
        assert_eq!(fit_standardization(&empty), Err(RuntimeError::EmptyTrialSet));
    }

    #[test]
    fn window_extraction() {
        let raw = Tensor::from_fn(vec![2, 2000], |i| (i % 2000) as f32);
        let w = extract_window(&raw, 500, 250.0).unwrap();
        assert_eq!(w.dims(), &[2, WINDOW_SAMPLES]);
        assert_eq!(w.data()[0], 375.0);
        assert_eq!(w.data()[WINDOW_SAMPLES - 1], 1499.0);
        assert_eq!(w.data()[WINDOW_SAMPLES], 375.0);
        assert!(matches!(
            extract_window(&raw, 100, 250.0),
            Err(RuntimeError::WindowOutOfRange { start: -25, .. })
        ));
        assert!(matches!(extract_window(&raw, 1500, 250.0), Err(RuntimeError::WindowOutOfRange { .. })));
        assert_eq!(extract_window(&raw, 500, 128.0), Err(RuntimeError::WrongSamplingRate(128.0)));
    }
}
