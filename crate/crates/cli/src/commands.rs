use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use eegtcn_core::analyzer::{analyze as analyze_graph, CostReport};
use eegtcn_core::metrics::{evaluate, SubjectPredictions};
use eegtcn_core::presets::{self, Preset};
use eegtcn_core::runtime::{
    load_container, load_trials, load_weights, predict_batch_quantized, quantize_weights, StoredTensor,
    WeightStore8, ETCW_MAGIC, ETRL_MAGIC,
};
use eegtcn_core::{build, predict_batch, receptive_field_size, Family, HyperParams, Prediction, StandardizationStats, TrialSet};
use serde_json::{json, Value};

use crate::error::CliError;
use crate::OutputFormat;

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::input(path, e))
}

fn read_trials(path: &Path) -> Result<TrialSet, CliError> {
    load_trials(&read(path)?).map_err(|e| CliError::format(path, e))
}

fn read_stats(path: Option<&Path>) -> Result<Option<StandardizationStats>, CliError> {
    let Some(path) = path else { return Ok(None) };
    let text = fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
    let stats: StandardizationStats = serde_json::from_str(&text).map_err(|e| CliError::input(path, e))?;
    if stats.mean.len() != stats.std.len() {
        return Err(CliError::input(
            path,
            format!("{} means but {} standard deviations", stats.mean.len(), stats.std.len()),
        ));
    }
    Ok(Some(stats))
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

pub fn analyze(
    config: Option<&Path>,
    preset: Option<&str>,
    family: Family,
    format: OutputFormat,
    bytes_per_element: u64,
) -> Result<String, CliError> {
    if bytes_per_element == 0 {
        return Err(CliError::Invalid("--bytes-per-element must be at least 1".into()));
    }
    let (hp, family, preset): (HyperParams, Family, Option<Preset>) = match (config, preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
            let hp = HyperParams::from_json(&text).map_err(|e| CliError::input(path, e))?;
            (hp, family, None)
        }
        (None, Some(name)) => {
            let p = presets::lookup(name).ok_or_else(|| {
                CliError::Invalid(format!("unknown preset {name:?} (use fixed, eeg_tcnet:1..9 or eegnet:1..9)"))
            })?;
            (p.hp.clone(), p.family, Some(p))
        }
        (None, None) => return Err(CliError::MissingCompanion("analyze needs --config or --preset".into())),
    };
    let graph = build(&hp, family).map_err(|e| CliError::Invalid(e.to_string()))?;
    let report: CostReport =
        analyze_graph(&graph, family, bytes_per_element).map_err(|e| CliError::Internal(e.to_string()))?;
    let reconciliation = preset
        .as_ref()
        .map(|p| p.reconcile().map_err(|e| CliError::Internal(e.to_string())))
        .transpose()?;

    match format {
        OutputFormat::Text => {
            let mut out = report.to_text();
            if let (Some(p), Some(r)) = (&preset, &reconciliation) {
                let mut head = format!("preset={}\npublished_params={}\n", p.label(), r.published);
                if !r.matches() {
                    writeln!(head, "note: {}", r.describe()).unwrap();
                }
                out.insert_str(0, &head);
            }
            Ok(out)
        }
        OutputFormat::Machine => {
            let mut v: Value = serde_json::from_str(&report.to_json()).expect("report json");
            if let (Some(p), Some(r)) = (&preset, &reconciliation) {
                v["preset"] = json!({
                    "name": p.label(),
                    "published_params": r.published,
                    "computed_params": r.computed,
                    "matches": r.matches(),
                    "alternative": r.alternative.map(|(k, n)| json!({"K_E": k, "params": n})),
                });
            }
            Ok(pretty(&v))
        }
    }
}

pub fn rfs(kt: usize, layers: u32, min: Option<u64>) -> Result<String, CliError> {
    if kt == 0 {
        return Err(CliError::Invalid("--kt must be at least 1".into()));
    }
    if layers >= 63 {
        return Err(CliError::Invalid("--layers must be below 63".into()));
    }
    let r = receptive_field_size(kt, layers);
    Ok(match min {
        Some(m) if r >= m => format!("{r} (ok)\n"),
        Some(m) => format!("{r} (below {m})\n"),
        None => format!("{r}\n"),
    })
}

pub struct InferArgs<'a> {
    pub weights: &'a Path,
    pub trials: &'a Path,
    pub stats: Option<&'a Path>,
    pub quantized: bool,
    pub calibration: Option<&'a Path>,
    pub format: OutputFormat,
}

/// A loaded model, float or 8-bit.
enum Model {
    Float(eegtcn_core::WeightStore),
    Quantized(WeightStore8, eegtcn_core::QuantParams),
}

impl Model {
    fn hp(&self) -> &HyperParams {
        match self {
            Model::Float(w) => w.hp(),
            Model::Quantized(w, _) => w.hp(),
        }
    }
}

fn load_model(path: &Path, quantized: bool, calibration: Option<&Path>, stats: Option<&StandardizationStats>) -> Result<Model, CliError> {
    let bytes = read(path)?;
    let container = load_container(&bytes).map_err(|e| CliError::format(path, e))?;
    if container.is_quantized() {
        let (w8, params) = WeightStore8::from_bytes(&bytes).map_err(|e| CliError::format(path, e))?;
        return Ok(Model::Quantized(w8, params));
    }
    let float = load_weights(&bytes).map_err(|e| CliError::format(path, e))?;
    if !quantized {
        return Ok(Model::Float(float));
    }
    let calibration = calibration.ok_or_else(|| {
        CliError::MissingCompanion(format!(
            "{} holds float weights; --quantized needs --calibration trials to quantize on the fly",
            path.display()
        ))
    })?;
    let calib = read_trials(calibration)?;
    let (w8, params) = quantize_weights(&float, &calib, stats)?;
    Ok(Model::Quantized(w8, params))
}

fn run_model(model: &Model, trials: &TrialSet, stats: Option<&StandardizationStats>) -> Result<Vec<Prediction>, CliError> {
    if model.hp().standardize && stats.is_none() {
        eprintln!("warning: the model was trained on standardized trials but no --standardize-stats was given");
    }
    Ok(match model {
        Model::Float(w) => predict_batch(&w.graph(), w, trials, stats)?,
        Model::Quantized(w8, params) => predict_batch_quantized(&w8.graph(), w8, params, trials, stats)?,
    })
}

pub fn infer(args: &InferArgs) -> Result<String, CliError> {
    let stats = read_stats(args.stats)?;
    let trials = read_trials(args.trials)?;
    let model = load_model(args.weights, args.quantized, args.calibration, stats.as_ref())?;
    let predictions = run_model(&model, &trials, stats.as_ref())?;
    Ok(match args.format {
        OutputFormat::Text => {
            let mut out = String::new();
            for (i, p) in predictions.iter().enumerate() {
                write!(out, "{i} {}", p.class).unwrap();
                for v in &p.probabilities {
                    write!(out, " {v:.6}").unwrap();
                }
                out.push('\n');
            }
            out
        }
        OutputFormat::Machine => pretty(&json!({
            "quantized": matches!(model, Model::Quantized(..)),
            "predictions": predictions
                .iter()
                .enumerate()
                .map(|(i, p)| json!({"index": i, "class": p.class, "probabilities": p.probabilities}))
                .collect::<Vec<_>>(),
        })),
    })
}

/// Reads `infer` text output or one class index per line.
fn read_predictions(path: &Path) -> Result<Vec<usize>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let fields: Vec<&str> = line.split_whitespace().collect();
            let class = if fields.len() >= 2 { fields[1] } else { fields[0] };
            class
                .parse()
                .map_err(|_| CliError::input(path, format!("line {}: {class:?} is not a class index", n + 1)))
        })
        .collect()
}

fn subject_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn eval(
    pred: &[std::path::PathBuf],
    truth: &[std::path::PathBuf],
    weights: &[std::path::PathBuf],
    trials: &[std::path::PathBuf],
    stats: Option<&Path>,
    format: OutputFormat,
) -> Result<String, CliError> {
    let mut subjects = Vec::new();
    let mut n_classes = None;
    let mut note_classes = |n: usize| -> Result<(), CliError> {
        match n_classes {
            Some(m) if m != n => Err(CliError::Invalid(format!("subjects disagree on n_classes ({m} vs {n})"))),
            _ => {
                n_classes = Some(n);
                Ok(())
            }
        }
    };

    if pred.len() != truth.len() {
        return Err(CliError::MissingCompanion(format!(
            "{} --pred but {} --truth files; they pair up in order",
            pred.len(),
            truth.len()
        )));
    }
    for (p, t) in pred.iter().zip(truth) {
        let labels = read_trials(t)?;
        let predicted = read_predictions(p)?;
        if predicted.len() != labels.n_trials() {
            return Err(CliError::Invalid(format!(
                "{} has {} predictions but {} holds {} trials",
                p.display(),
                predicted.len(),
                t.display(),
                labels.n_trials()
            )));
        }
        note_classes(labels.n_classes())?;
        subjects.push(SubjectPredictions {
            subject: subject_name(p),
            predicted,
            truth: labels.labels().to_vec(),
        });
    }

    if weights.is_empty() != trials.is_empty() || (weights.len() > 1 && weights.len() != trials.len()) {
        return Err(CliError::MissingCompanion(format!(
            "{} --weights for {} --trials; give one container for all trial files or one per file",
            weights.len(),
            trials.len()
        )));
    }
    let stats = read_stats(stats)?;
    let models = weights
        .iter()
        .map(|w| load_model(w, false, None, stats.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;
    for (i, t) in trials.iter().enumerate() {
        let set = read_trials(t)?;
        let model = &models[if models.len() == 1 { 0 } else { i }];
        let predicted = run_model(model, &set, stats.as_ref())?;
        note_classes(set.n_classes())?;
        subjects.push(SubjectPredictions {
            subject: subject_name(t),
            predicted: predicted.iter().map(|p| p.class).collect(),
            truth: set.labels().to_vec(),
        });
    }

    if subjects.is_empty() {
        return Err(CliError::MissingCompanion(
            "eval needs --pred/--truth pairs or --weights with --trials".into(),
        ));
    }
    let report = evaluate(&subjects, n_classes.unwrap_or(0)).map_err(|e| CliError::Invalid(e.to_string()))?;
    Ok(match format {
        OutputFormat::Text => report.to_text(),
        OutputFormat::Machine => {
            let mut s = report.to_json();
            s.push('\n');
            s
        }
    })
}

pub fn quantize(weights: &Path, calibration: &Path, out: &Path, stats: Option<&Path>) -> Result<String, CliError> {
    let bytes = read(weights)?;
    let float = load_weights(&bytes).map_err(|e| CliError::format(weights, e))?;
    let stats = read_stats(stats)?;
    let calib = read_trials(calibration)?;
    let (w8, params) = quantize_weights(&float, &calib, stats.as_ref())?;
    let encoded = w8.to_bytes(&params).map_err(|e| CliError::Internal(e.to_string()))?;
    fs::write(out, &encoded).map_err(|e| CliError::input(out, e))?;
    Ok(format!(
        "wrote {} ({} tensors, {} bytes, calibrated on {} trials)\n",
        out.display(),
        w8.entries().len(),
        encoded.len(),
        calib.n_trials()
    ))
}

pub fn inspect(path: &Path, format: OutputFormat) -> Result<String, CliError> {
    let bytes = read(path)?;
    if bytes.starts_with(&ETRL_MAGIC) {
        let set = load_trials(&bytes).map_err(|e| CliError::format(path, e))?;
        let mut counts = vec![0usize; set.n_classes()];
        for &l in set.labels() {
            counts[l] += 1;
        }
        let v = json!({
            "format": "ETRL",
            "version": 1,
            "n_trials": set.n_trials(),
            "C": set.channels(),
            "T": set.samples(),
            "fs": set.fs(),
            "n_classes": set.n_classes(),
            "label_counts": counts,
        });
        return Ok(match format {
            OutputFormat::Machine => pretty(&v),
            OutputFormat::Text => format!(
                "format=ETRL\nversion=1\nn_trials={}\nC={}\nT={}\nfs={}\nn_classes={}\nlabel_counts={:?}\n",
                set.n_trials(),
                set.channels(),
                set.samples(),
                set.fs(),
                set.n_classes(),
                counts
            ),
        });
    }
    if !bytes.starts_with(&ETCW_MAGIC) {
        return Err(CliError::input(path, "neither an ETCW nor an ETRL file"));
    }
    let c = load_container(&bytes).map_err(|e| CliError::format(path, e))?;
    let tensors: Vec<Value> = c
        .tensors
        .iter()
        .map(|(name, t)| {
            let mut v = json!({"name": name, "dtype": t.dtype(), "dims": t.dims()});
            if let StoredTensor::I8(q) = t {
                v["scale"] = json!(q.scale);
                v["zero_point"] = json!(q.zero_point);
            }
            v
        })
        .collect();
    let numel: usize = c.tensors.iter().map(|(_, t)| t.dims().iter().product::<usize>()).sum();
    match format {
        OutputFormat::Machine => Ok(pretty(&json!({
            "format": "ETCW",
            "version": 1,
            "family": c.meta.family,
            "hyperparams": c.meta.hyperparams,
            "quantized": c.is_quantized(),
            "tensor_count": c.tensors.len(),
            "numel": numel,
            "tensors": tensors,
        }))),
        OutputFormat::Text => {
            let mut out = format!(
                "format=ETCW\nversion=1\nfamily={}\nquantized={}\ntensor_count={}\nnumel={numel}\nhyperparams={}\n\n",
                c.meta.family,
                c.is_quantized(),
                c.tensors.len(),
                serde_json::to_string(&c.meta.hyperparams).expect("hyperparameters serialize")
            );
            writeln!(out, "{:<14} {:>5} {:<18} {:>7}", "name", "dtype", "dims", "numel").unwrap();
            for (name, t) in &c.tensors {
                let dims = format!("{:?}", t.dims());
                write!(out, "{name:<14} {:>5} {dims:<18} {:>7}", t.dtype(), t.dims().iter().product::<usize>()).unwrap();
                if let StoredTensor::I8(q) = t {
                    write!(out, "  scale={:e} zero_point={}", q.scale, q.zero_point).unwrap();
                }
                out.push('\n');
            }
            Ok(out)
        }
    }
}
