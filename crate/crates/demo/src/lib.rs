//! Browser playground for the selection machinery.
//!
//! Three operations are exported through wasm-bindgen, each returning a
//! JSON string so the page can stay framework-free JavaScript:
//!
//! * [`uncertainty_trace`] feeds a prediction sequence through the
//!   sliding-window uncertainty measure and reports entropy, fluctuation,
//!   and their mix per step;
//! * [`sampling_preview`] turns a weight vector into the quantized
//!   selection distribution at a chosen point of the pressure schedule;
//! * [`training_duel`] trains two small networks on the same synthetic
//!   dataset, one batching uniformly and one selectively, and reports the
//!   validation curves plus the final label-correlation matrix.
//!
//! Errors come back as `{"error": "..."}` objects instead of exceptions.
//! Build with `wasm-pack build crates/demo --target web --out-dir www/pkg`
//! and serve the `www/` directory.

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use wasm_bindgen::prelude::wasm_bindgen;

use ubatch_core::data::MinMaxScaler;
use ubatch_core::metrics::evaluate;
use ubatch_core::model::{bce_loss, AdamState, MlpParams};
use ubatch_core::sampler::{quantize, selection_probabilities, PressureSchedule};
use ubatch_core::selectors::{BatchSelector, OursConfig, OursSelector, RandomSelector};
use ubatch_core::synthetic::{self, SyntheticSpec};
use ubatch_core::uncertainty::{combined_uncertainty, current_entropy, PredictionHistory};
use ubatch_core::{Error, Result};

fn parse_csv_floats(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Config(format!("not a number: '{t}'")))
        })
        .collect()
}

fn reply(result: Result<Value>) -> String {
    match result {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

fn trace_impl(preds: &[f64], window: usize, lambda1: f64) -> Result<Value> {
    if preds.is_empty() {
        return Err(Error::Precondition("no predictions given".into()));
    }
    let mut hist = PredictionHistory::new(window);
    let mut entropy = Vec::with_capacity(preds.len());
    let mut fluctuation = Vec::with_capacity(preds.len());
    let mut combined = Vec::with_capacity(preds.len());
    for &p in preds {
        hist.push(p)?;
        let e = current_entropy(p)?;
        entropy.push(e);
        if hist.is_full() {
            let d = hist.window_abs_diff()?;
            fluctuation.push(Some(d));
            combined.push(Some(combined_uncertainty(d, e, lambda1)?));
        } else {
            fluctuation.push(None);
            combined.push(None);
        }
    }
    Ok(json!({
        "window": window,
        "lambda1": lambda1,
        "preds": preds,
        "entropy": entropy,
        "fluctuation": fluctuation,
        "combined": combined,
    }))
}

/// Runs a comma-separated prediction sequence through the per-label
/// uncertainty measure with the given window length and mixing weight.
#[wasm_bindgen]
pub fn uncertainty_trace(preds_csv: &str, window: usize, lambda1: f64) -> String {
    reply(parse_csv_floats(preds_csv).and_then(|p| trace_impl(&p, window, lambda1)))
}

fn preview_impl(weights: &[f64], s0: f64, epoch: usize, horizon: usize) -> Result<Value> {
    let n = weights.len();
    if n == 0 {
        return Err(Error::Precondition("no weights given".into()));
    }
    let schedule = PressureSchedule::new(s0, 1, horizon)?;
    if !(1..=horizon).contains(&epoch) {
        return Err(Error::Domain {
            name: "epoch",
            value: epoch as f64,
            expected: "within the schedule",
        });
    }
    let w = ndarray::Array1::from(weights.to_vec());
    let pressure = schedule.pressure_at(epoch);
    let dist = selection_probabilities(w.view(), pressure)?;
    let quantized: Vec<usize> = weights
        .iter()
        .map(|&v| quantize(v, n))
        .collect::<Result<_>>()?;
    let probs = dist.probabilities();
    let spread = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        / probs.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(json!({
        "pressure": pressure,
        "quantized": quantized,
        "probs": probs.to_vec(),
        "spread": spread,
    }))
}

/// Quantizes a comma-separated weight vector and returns the selection
/// distribution at epoch `epoch` of a schedule decaying from `s0` over
/// `horizon` epochs, plus the resulting max/min probability ratio.
#[wasm_bindgen]
pub fn sampling_preview(weights_csv: &str, s0: f64, epoch: usize, horizon: usize) -> String {
    reply(parse_csv_floats(weights_csv).and_then(|w| preview_impl(&w, s0, epoch, horizon)))
}

const DUEL_BATCH: usize = 24;
const DUEL_WARMUP: usize = 3;
const DUEL_WINDOW: usize = 3;
const DUEL_VAL: usize = 60;

fn duel_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n: 300,
        d: 16,
        q: 5,
        latent: 6,
        feature_noise: 0.7,
        label_noise: 0.02,
        prevalence: 0.25,
        clusters: 8,
        cluster_spread: 0.25,
        edge_fraction: 0.3,
        seed,
    }
}

struct DuelRun {
    auc: Vec<f64>,
    pressure: Vec<f64>,
    correlation: Option<Array2<f64>>,
}

fn run_duel_side(
    selective: bool,
    seed: u64,
    epochs: usize,
    features: &Array2<f64>,
    labels_f: &Array2<f64>,
    labels_u: &Array2<u8>,
) -> Result<DuelRun> {
    let n_train = features.nrows() - DUEL_VAL;
    let q = labels_f.ncols();
    let train_x = features.slice(ndarray::s![..n_train, ..]);
    let val_x = features.slice(ndarray::s![n_train.., ..]);
    let val_y = labels_u.slice(ndarray::s![n_train.., ..]);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let widths = [features.ncols(), 16, q];
    let mut model = MlpParams::init(&widths, &mut rng)?;
    let mut adam = AdamState::new(&model, 1e-3, 0.9, 0.999, 1e-4)?;
    let mut selector: Box<dyn BatchSelector> = if selective {
        Box::new(OursSelector::new(
            n_train,
            q,
            OursConfig {
                batch: DUEL_BATCH,
                warmup: DUEL_WARMUP,
                window: DUEL_WINDOW,
                tau: 10,
                lambda1: 0.5,
                schedule: PressureSchedule::new(40.0, DUEL_WARMUP + 1, epochs)?,
                identity_correlation: false,
            },
        )?)
    } else {
        Box::new(RandomSelector::new(n_train, DUEL_BATCH)?)
    };

    let batches = n_train / DUEL_BATCH;
    let mut run = DuelRun {
        auc: Vec::with_capacity(epochs),
        pressure: Vec::with_capacity(epochs),
        correlation: None,
    };
    for epoch in 1..=epochs {
        selector.on_epoch_start(epoch, &mut rng)?;
        for _ in 0..batches {
            let idx = selector.next_batch(&mut rng)?;
            let x = train_x.select(Axis(0), &idx);
            let y = labels_f.select(Axis(0), &idx);
            let p = model.forward(x.view())?;
            selector.on_batch_forward(&idx, p.view())?;
            bce_loss(p.view(), y.view())?;
            let grads = model.backward(x.view(), y.view(), 1e-4)?;
            adam.step(&mut model, &grads)?;
        }
        let fill = selector.warmup_fill_indices();
        if !fill.is_empty() {
            let x = train_x.select(Axis(0), &fill);
            let p = model.forward(x.view())?;
            selector.on_batch_forward(&fill, p.view())?;
        }
        let scores = model.forward(val_x)?;
        run.auc.push(evaluate(scores.view(), val_y)?.macro_auc);
        run.pressure.push(selector.pressure());
    }
    run.correlation = selector.correlation().map(|c| c.to_owned());
    Ok(run)
}

fn duel_impl(seed: u64, epochs: usize) -> Result<Value> {
    if !(DUEL_WARMUP + 2..=200).contains(&epochs) {
        return Err(Error::Domain {
            name: "epochs",
            value: epochs as f64,
            expected: "between 5 and 200",
        });
    }
    let dataset = synthetic::generate(&duel_spec(seed))?;
    let n_train = dataset.n() - DUEL_VAL;
    let train_rows: Vec<usize> = (0..n_train).collect();
    let scaler = MinMaxScaler::fit(dataset.features.view(), &train_rows)?;
    let features = scaler.transform(dataset.features.view());
    let labels_f = dataset.labels.mapv(f64::from);

    let ours = run_duel_side(true, seed, epochs, &features, &labels_f, &dataset.labels)?;
    let random = run_duel_side(false, seed, epochs, &features, &labels_f, &dataset.labels)?;
    let correlation: Vec<Vec<f64>> = ours
        .correlation
        .map(|c| c.rows().into_iter().map(|r| r.to_vec()).collect())
        .unwrap_or_default();
    Ok(json!({
        "epochs": epochs,
        "warmup": DUEL_WARMUP,
        "ours": ours.auc,
        "random": random.auc,
        "pressure": ours.pressure,
        "correlation": correlation,
    }))
}

/// Trains the same network twice on a clustered synthetic dataset, once
/// with uniform batches and once with uncertainty-guided selection, and
/// returns both validation Macro-AUC curves, the pressure trajectory, and
/// the final correlation matrix.
#[wasm_bindgen]
pub fn training_duel(seed: u32, epochs: usize) -> String {
    reply(duel_impl(u64::from(seed), epochs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parsed(s: &str) -> Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn trace_reports_unit_entropy_at_half() {
        let v = parsed(&uncertainty_trace("0.5, 0.5, 0.5", 2, 0.5));
        assert_eq!(v["entropy"], json!([1.0, 1.0, 1.0]));
        assert_eq!(v["fluctuation"][0], Value::Null, "window not yet full");
        assert_eq!(v["fluctuation"][1], json!(0.0));
        assert_eq!(v["combined"][2], json!(0.5));
    }

    #[test]
    fn trace_scores_oscillation_above_steady_confidence() {
        let osc = parsed(&uncertainty_trace("0.9,0.1,0.9,0.1,0.9", 5, 0.5));
        let steady = parsed(&uncertainty_trace("0.9,0.9,0.9,0.9,0.9", 5, 0.5));
        let last = |v: &Value| v["combined"][4].as_f64().unwrap();
        assert!(last(&osc) > last(&steady));
    }

    #[test]
    fn trace_rejects_malformed_input() {
        let v = parsed(&uncertainty_trace("0.5,huh", 3, 0.5));
        assert!(v["error"].as_str().unwrap().contains("huh"));
        let v = parsed(&uncertainty_trace("", 3, 0.5));
        assert!(v.get("error").is_some());
    }

    #[test]
    fn preview_flattens_as_pressure_decays() {
        let w = "0.1,0.9,0.4,0.7,0.2,0.55";
        let early = parsed(&sampling_preview(w, 50.0, 1, 20));
        let late = parsed(&sampling_preview(w, 50.0, 20, 20));
        assert!(early["spread"].as_f64().unwrap() > 1.0);
        assert!((late["spread"].as_f64().unwrap() - 1.0).abs() < 1e-12);
        assert!((late["pressure"].as_f64().unwrap() - 1.0).abs() < 1e-12);
        let total: f64 = early["probs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|p| p.as_f64().unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn preview_rejects_out_of_schedule_epoch() {
        let v = parsed(&sampling_preview("0.2,0.8", 50.0, 30, 20));
        assert!(v.get("error").is_some());
    }

    #[test]
    fn duel_is_deterministic_and_well_shaped() {
        let a = training_duel(7, 8);
        let b = training_duel(7, 8);
        assert_eq!(a, b);
        let v = parsed(&a);
        assert_eq!(v["ours"].as_array().unwrap().len(), 8);
        assert_eq!(v["random"].as_array().unwrap().len(), 8);
        let corr = v["correlation"].as_array().unwrap();
        assert_eq!(corr.len(), 5);
        assert_eq!(corr[0].as_array().unwrap().len(), 5);
        assert_eq!(corr[0][0], json!(1.0));
        let p = v["pressure"].as_array().unwrap();
        assert_eq!(p[0], json!(1.0), "warm-up epoch is uniform");
        assert!(
            p[4].as_f64().unwrap() > 1.0,
            "selective phase applies pressure"
        );
    }

    #[test]
    fn duel_rejects_tiny_epoch_budget() {
        let v = parsed(&training_duel(1, 2));
        assert!(v.get("error").is_some());
    }
}
