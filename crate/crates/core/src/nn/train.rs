use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{argmax, MlpModel};
use crate::error::{Error, Result};
use crate::rng;

/// One training example: an input vector and a one-hot (or soft) target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

impl Sample {
    pub fn new(input: Vec<f64>, target: Vec<f64>) -> Self {
        Sample { input, target }
    }

    pub fn one_hot(input: Vec<f64>, class: usize, classes: usize) -> Self {
        let mut target = vec![0.0; classes];
        target[class] = 1.0;
        Sample { input, target }
    }

    fn class(&self) -> usize {
        argmax(&self.target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    #[default]
    MeanSquaredError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub seed: u64,
    /// Draw each minibatch slot from a uniformly chosen class.
    pub balanced_sampling: bool,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.5,
            epochs: 30,
            minibatch_size: 8,
            seed: 1,
            balanced_sampling: false,
            loss: LossKind::MeanSquaredError,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::argument("learning rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::argument("epochs must be at least 1"));
        }
        if self.minibatch_size == 0 {
            return Err(Error::argument("minibatch size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainStats {
    pub final_loss: f64,
    pub loss_trace: Vec<f64>,
    /// Three passes (forward, delta, gradient) of `count_mac` per presented sample.
    pub weight_update_macs: u64,
}

/// Mean squared error over the output neurons.
pub fn sample_loss(output: &[f64], target: &[f64]) -> f64 {
    let k = output.len() as f64;
    output.iter().zip(target).map(|(y, t)| (y - t) * (y - t)).sum::<f64>() / k
}

/// Per-layer weight and bias gradients, same layout as the model.
pub(crate) struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros(model: &MlpModel) -> Self {
        Gradients {
            weights: model.layers().iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: model.layers().iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }
}

/// Accumulates d(loss)/d(param) for one sample into `grads`; returns the sample loss.
fn accumulate_gradients(model: &MlpModel, sample: &Sample, grads: &mut Gradients) -> f64 {
    let (pre, acts) = model.forward_cache(&sample.input);
    let act = model.activation();
    let output = acts.last().unwrap();
    let k = output.len() as f64;
    let loss = sample_loss(output, &sample.target);

    let last = model.layers().len() - 1;
    let mut delta: Vec<f64> = output
        .iter()
        .zip(&sample.target)
        .zip(&pre[last])
        .map(|((&y, &t), &z)| 2.0 * (y - t) / k * act.derivative(z, y))
        .collect();

    for li in (0..=last).rev() {
        let layer = &model.layers()[li];
        let input = &acts[li];
        let gw = &mut grads.weights[li];
        for (n, &d) in delta.iter().enumerate() {
            grads.biases[li][n] += d;
            let row = &mut gw[n * layer.inputs..(n + 1) * layer.inputs];
            for (g, &x) in row.iter_mut().zip(input) {
                *g += d * x;
            }
        }
        if li > 0 {
            let mut prev = vec![0.0; layer.inputs];
            for (n, &d) in delta.iter().enumerate() {
                for (p, &w) in prev.iter_mut().zip(layer.row(n)) {
                    *p += w * d;
                }
            }
            for (i, p) in prev.iter_mut().enumerate() {
                *p *= act.derivative(pre[li - 1][i], acts[li][i]);
            }
            delta = prev;
        }
    }
    loss
}

fn validate_data(model: &MlpModel, data: &[Sample]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::argument("training data is empty"));
    }
    for (i, s) in data.iter().enumerate() {
        if s.input.len() != model.input_width() || s.target.len() != model.output_width() {
            return Err(Error::structural(format!(
                "sample {i} has shape {}→{}, model expects {}→{}",
                s.input.len(),
                s.target.len(),
                model.input_width(),
                model.output_width()
            )));
        }
    }
    Ok(())
}

/// Minibatch SGD with backpropagation on the mean squared error.
pub fn train_sgd(model: &MlpModel, data: &[Sample], cfg: &TrainConfig) -> Result<(MlpModel, TrainStats)> {
    cfg.validate()?;
    validate_data(model, data)?;

    let mut model = model.clone();
    let mut rng = rng::seeded(cfg.seed);
    let n = data.len();

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); model.output_width()];
    for (i, s) in data.iter().enumerate() {
        by_class[s.class()].push(i);
    }
    let populated: Vec<usize> = (0..by_class.len()).filter(|&c| !by_class[c].is_empty()).collect();

    let mut order: Vec<usize> = (0..n).collect();
    let mut loss_trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        if cfg.balanced_sampling {
            for slot in order.iter_mut() {
                let class = populated[rng.gen_range(0..populated.len())];
                let members = &by_class[class];
                *slot = members[rng.gen_range(0..members.len())];
            }
        } else {
            order.shuffle(&mut rng);
        }

        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.minibatch_size) {
            let mut grads = Gradients::zeros(&model);
            for &i in batch {
                epoch_loss += accumulate_gradients(&model, &data[i], &mut grads);
            }
            let scale = cfg.learning_rate / batch.len() as f64;
            for (layer, (gw, gb)) in model.layers_mut().iter_mut().zip(grads.weights.iter().zip(&grads.biases)) {
                for (w, g) in layer.weights.iter_mut().zip(gw) {
                    *w -= scale * g;
                }
                for (b, g) in layer.biases.iter_mut().zip(gb) {
                    *b -= scale * g;
                }
            }
        }
        let mean = epoch_loss / n as f64;
        if !mean.is_finite() || !model.is_finite() {
            return Err(Error::Divergence { epoch: epoch + 1, loss: mean });
        }
        loss_trace.push(mean);
    }

    let stats = TrainStats {
        final_loss: *loss_trace.last().unwrap(),
        weight_update_macs: 3 * model.count_mac() * (n as u64) * (cfg.epochs as u64),
        loss_trace,
    };
    Ok((model, stats))
}

/// Mean loss of `model` over `data`.
pub fn dataset_loss(model: &MlpModel, data: &[Sample]) -> Result<f64> {
    validate_data(model, data)?;
    let mut total = 0.0;
    for s in data {
        total += sample_loss(&model.forward(&s.input)?, &s.target);
    }
    Ok(total / data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientEntry {
    pub layer: usize,
    pub kind: ParamKind,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradientEntry {
    pub fn relative_error(&self) -> f64 {
        let scale = self.analytic.abs().max(self.numeric.abs()).max(1e-10);
        (self.analytic - self.numeric).abs() / scale
    }
}

fn param_mut(model: &mut MlpModel, layer: usize, kind: ParamKind, index: usize) -> &mut f64 {
    let l = &mut model.layers_mut()[layer];
    match kind {
        ParamKind::Weight => &mut l.weights[index],
        ParamKind::Bias => &mut l.biases[index],
    }
}

/// Analytic and central-difference gradient for every parameter.
pub fn gradient_check_entries(model: &MlpModel, sample: &Sample, epsilon: f64) -> Result<Vec<GradientEntry>> {
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(Error::argument("epsilon must lie in (0, 1e-2]"));
    }
    validate_data(model, std::slice::from_ref(sample))?;
    let mut grads = Gradients::zeros(model);
    accumulate_gradients(model, sample, &mut grads);

    let loss_at = |m: &MlpModel| sample_loss(&m.forward(&sample.input).unwrap(), &sample.target);
    let mut probe = model.clone();
    let mut out = Vec::new();
    for li in 0..model.layers().len() {
        for kind in [ParamKind::Weight, ParamKind::Bias] {
            let count = match kind {
                ParamKind::Weight => model.layers()[li].weights.len(),
                ParamKind::Bias => model.layers()[li].biases.len(),
            };
            for idx in 0..count {
                let original = *param_mut(&mut probe, li, kind, idx);
                *param_mut(&mut probe, li, kind, idx) = original + epsilon;
                let plus = loss_at(&probe);
                *param_mut(&mut probe, li, kind, idx) = original - epsilon;
                let minus = loss_at(&probe);
                *param_mut(&mut probe, li, kind, idx) = original;
                let analytic = match kind {
                    ParamKind::Weight => grads.weights[li][idx],
                    ParamKind::Bias => grads.biases[li][idx],
                };
                out.push(GradientEntry {
                    layer: li,
                    kind,
                    index: idx,
                    analytic,
                    numeric: (plus - minus) / (2.0 * epsilon),
                });
            }
        }
    }
    Ok(out)
}

/// Largest relative error between backprop and central finite differences.
pub fn gradient_check(model: &MlpModel, sample: &Sample, epsilon: f64) -> Result<f64> {
    Ok(gradient_check_entries(model, sample, epsilon)?.iter().map(GradientEntry::relative_error).fold(0.0, f64::max))
}
