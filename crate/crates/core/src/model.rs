//! Fully-connected multi-label network trained with Adam.
//!
//! All math is f64.  Hidden layers use ReLU, the output layer a numerically
//! stable sigmoid, and the loss is mean binary cross-entropy over every
//! (instance, label) cell.  The backward pass returns exact analytic
//! gradients (plus an optional L2 weight-decay term on the weight matrices)
//! so it can be validated against central finite differences.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

/// Loss-side clamp keeping probabilities away from the log singularities.
const LOSS_EPS: f64 = 1e-12;

/// Largest f64 strictly below 1; forward outputs are clamped into
/// `[f64::MIN_POSITIVE, ONE_BELOW]` so histories never see exact 0 or 1.
const ONE_BELOW: f64 = 1.0 - f64::EPSILON / 2.0;

fn sigmoid(z: f64) -> f64 {
    let s = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, ONE_BELOW)
}

/// Weights and biases of the network.  `widths` runs input to output, so a
/// network with one hidden layer has three entries.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    widths: Vec<usize>,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Gradient of the loss with respect to every parameter, in the same
/// layout as [`MlpParams`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl MlpParams {
    /// Glorot-uniform weights, zero biases.  Fill order is layer by layer,
    /// row-major, so a given RNG stream always produces the same network.
    pub fn init<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!(
                "layer widths must list input and output with no zeros, got {widths:?}"
            )));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-bound..bound));
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        Ok(MlpParams {
            widths: widths.to_vec(),
            weights,
            biases,
        })
    }

    pub fn zeros(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!(
                "layer widths must list input and output with no zeros, got {widths:?}"
            )));
        }
        let weights = widths
            .windows(2)
            .map(|p| Array2::zeros((p[0], p[1])))
            .collect();
        let biases = widths.windows(2).map(|p| Array1::zeros(p[1])).collect();
        Ok(MlpParams {
            widths: widths.to_vec(),
            weights,
            biases,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    fn check_input(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                context: "forward",
                expected: format!("{} feature columns", self.input_dim()),
                actual: format!("{}", x.ncols()),
            });
        }
        Ok(())
    }

    /// Probabilities for a batch, every entry strictly inside (0, 1).
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut a = x.to_owned();
        let last = self.num_layers() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = a.dot(w);
            z += b;
            a = if l == last {
                z.mapv_into(sigmoid)
            } else {
                z.mapv_into(|v| v.max(0.0))
            };
        }
        Ok(a)
    }

    /// Forward pass keeping every layer's activation for backprop.
    fn forward_cached(&self, x: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
        let mut acts = vec![x.to_owned()];
        let last = self.num_layers() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = acts.last().unwrap().dot(w);
            z += b;
            let a = if l == last {
                z.mapv_into(sigmoid)
            } else {
                z.mapv_into(|v| v.max(0.0))
            };
            acts.push(a);
        }
        acts
    }

    /// Analytic gradient of [`bce_loss`] for a batch, plus
    /// `weight_decay * W` on each weight matrix (biases are not decayed).
    ///
    /// With zero parameters and zero inputs the output-layer bias gradient
    /// is `(0.5 - y) / (b * q)` summed over the batch and everything else
    /// is zero, which pins down the normalization.
    pub fn backward(
        &self,
        x: ArrayView2<'_, f64>,
        y: ArrayView2<'_, f64>,
        weight_decay: f64,
    ) -> Result<Gradients> {
        self.check_input(&x)?;
        if y.dim() != (x.nrows(), self.output_dim()) {
            return Err(Error::ShapeMismatch {
                context: "backward",
                expected: format!("{} x {} labels", x.nrows(), self.output_dim()),
                actual: format!("{} x {}", y.nrows(), y.ncols()),
            });
        }
        let acts = self.forward_cached(x);
        let batch = x.nrows() as f64;
        let cells = batch * self.output_dim() as f64;

        // sigmoid + BCE collapse to (p - y) / (b * q) at the output
        let mut delta = (&acts[self.num_layers()] - &y) / cells;

        let mut grads = Gradients {
            weights: Vec::with_capacity(self.num_layers()),
            biases: Vec::with_capacity(self.num_layers()),
        };
        for l in (0..self.num_layers()).rev() {
            let mut gw = acts[l].t().dot(&delta);
            if weight_decay != 0.0 {
                gw.scaled_add(weight_decay, &self.weights[l]);
            }
            let gb = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.weights[l].t());
                // ReLU gate: activation is positive iff the pre-activation
                // was, and z = 0 passes zero gradient
                back.zip_mut_with(&acts[l], |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
            grads.weights.push(gw);
            grads.biases.push(gb);
        }
        grads.weights.reverse();
        grads.biases.reverse();
        Ok(grads)
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Text snapshot: a header with the layer widths followed by row-major
    /// values.  f64s are printed with Rust's shortest round-trip formatting,
    /// so save/load is bit-exact.
    pub fn save<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "mlp 1")?;
        writeln!(
            out,
            "widths {}",
            self.widths
                .iter()
                .map(|w| w.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        )?;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            writeln!(out, "layer {l} {} {}", w.nrows(), w.ncols())?;
            for row in w.rows() {
                let line = row
                    .iter()
                    .map(|v| format!("{v}"))
                    .collect::<Vec<_>>()
                    .join(" ");
                writeln!(out, "{line}")?;
            }
            let line = b
                .iter()
                .map(|v| format!("{v}"))
                .collect::<Vec<_>>()
                .join(" ");
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn load<R: std::io::BufRead>(input: R) -> Result<Self> {
        let parse_err = |line: usize, message: &str| Error::Parse {
            path: "<params>".into(),
            line,
            message: message.into(),
        };
        let mut lines = input.lines().enumerate();
        let mut next = |expect: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, Ok(l))) => Ok((i + 1, l)),
                Some((i, Err(e))) => Err(parse_err(i + 1, &e.to_string())),
                None => Err(parse_err(0, &format!("missing {expect}"))),
            }
        };
        let (ln, magic) = next("header")?;
        if magic.trim() != "mlp 1" {
            return Err(parse_err(ln, "expected header 'mlp 1'"));
        }
        let (ln, widths_line) = next("widths")?;
        let widths: Vec<usize> = widths_line
            .strip_prefix("widths ")
            .ok_or_else(|| parse_err(ln, "expected 'widths ...'"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| parse_err(ln, "bad width")))
            .collect::<Result<_>>()?;
        if widths.len() < 2 {
            return Err(parse_err(ln, "need at least input and output widths"));
        }
        let parse_row = |ln: usize, line: &str, want: usize| -> Result<Vec<f64>> {
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| parse_err(ln, "bad float")))
                .collect::<Result<_>>()?;
            if vals.len() != want {
                return Err(parse_err(
                    ln,
                    &format!("expected {want} values, got {}", vals.len()),
                ));
            }
            Ok(vals)
        };
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, pair) in widths.windows(2).enumerate() {
            let (rows, cols) = (pair[0], pair[1]);
            let (ln, header) = next("layer header")?;
            if header.trim() != format!("layer {l} {rows} {cols}") {
                return Err(parse_err(
                    ln,
                    &format!("expected 'layer {l} {rows} {cols}'"),
                ));
            }
            let mut flat = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (ln, line) = next("weight row")?;
                flat.extend(parse_row(ln, &line, cols)?);
            }
            weights.push(Array2::from_shape_vec((rows, cols), flat).expect("checked shape"));
            let (ln, line) = next("bias row")?;
            biases.push(Array1::from_vec(parse_row(ln, &line, cols)?));
        }
        Ok(MlpParams {
            widths,
            weights,
            biases,
        })
    }
}

/// Mean binary cross-entropy with natural logs over all batch cells.
/// Probabilities are clamped to `[1e-12, 1 - 1e-12]` before the logs.
pub fn bce_loss(probs: ArrayView2<'_, f64>, labels: ArrayView2<'_, f64>) -> Result<f64> {
    if probs.dim() != labels.dim() {
        return Err(Error::ShapeMismatch {
            context: "bce_loss",
            expected: format!("{} x {}", probs.nrows(), probs.ncols()),
            actual: format!("{} x {}", labels.nrows(), labels.ncols()),
        });
    }
    if probs.is_empty() {
        return Err(Error::Precondition("bce_loss of an empty batch".into()));
    }
    let mut sum = 0.0;
    for (&p, &y) in probs.iter().zip(labels.iter()) {
        let p = p.clamp(LOSS_EPS, 1.0 - LOSS_EPS);
        sum -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    let loss = sum / probs.len() as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite("bce_loss".into()));
    }
    Ok(loss)
}

/// Adam optimizer state.  Moment buffers mirror the parameter layout; the
/// step counter starts at 0 and is incremented before each bias
/// correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
    pub t: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(
        params: &MlpParams,
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        weight_decay: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("learning_rate", learning_rate),
            ("weight_decay", weight_decay),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Domain {
                    name: if name == "learning_rate" {
                        "learning_rate"
                    } else {
                        "weight_decay"
                    },
                    value: v,
                    expected: "[0, inf)",
                });
            }
        }
        for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Domain {
                    name: if name == "beta1" { "beta1" } else { "beta2" },
                    value: b,
                    expected: "[0, 1)",
                });
            }
        }
        Ok(AdamState {
            m_w: params
                .weights
                .iter()
                .map(|w| Array2::zeros(w.dim()))
                .collect(),
            v_w: params
                .weights
                .iter()
                .map(|w| Array2::zeros(w.dim()))
                .collect(),
            m_b: params
                .biases
                .iter()
                .map(|b| Array1::zeros(b.len()))
                .collect(),
            v_b: params
                .biases
                .iter()
                .map(|b| Array1::zeros(b.len()))
                .collect(),
            t: 0,
            learning_rate,
            beta1,
            beta2,
            weight_decay,
            epsilon: 1e-8,
        })
    }

    /// One Adam update.  Non-finite gradients abort with a diagnostic
    /// naming the offending tensor; parameters are left untouched in that
    /// case.
    pub fn step(&mut self, params: &mut MlpParams, grads: &Gradients) -> Result<()> {
        for (l, g) in grads.weights.iter().enumerate() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("weight gradient of layer {l}")));
            }
        }
        for (l, g) in grads.biases.iter().enumerate() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("bias gradient of layer {l}")));
            }
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for l in 0..params.weights.len() {
            let g = &grads.weights[l];
            let m = &mut self.m_w[l];
            let v = &mut self.v_w[l];
            for ((pi, &gi), (mi, vi)) in params.weights[l]
                .iter_mut()
                .zip(g.iter())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                update(pi, gi, mi, vi);
            }
            let g = &grads.biases[l];
            let m = &mut self.m_b[l];
            let v = &mut self.v_b[l];
            for ((pi, &gi), (mi, vi)) in params.biases[l]
                .iter_mut()
                .zip(g.iter())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                update(pi, gi, mi, vi);
            }
        }
        Ok(())
    }
}
