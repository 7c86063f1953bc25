use rand::distributions::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::rng;

/// Layer widths from input to output.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Topology(Vec<usize>);

impl Topology {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::structural(format!(
                "topology needs at least an input and an output width, got {sizes:?}"
            )));
        }
        if sizes.contains(&0) {
            return Err(Error::structural(format!("zero-width layer in {sizes:?}")));
        }
        Ok(Topology(sizes))
    }

    pub fn sizes(&self) -> &[usize] {
        &self.0
    }

    pub fn input_width(&self) -> usize {
        self.0[0]
    }

    pub fn output_width(&self) -> usize {
        self.0[self.0.len() - 1]
    }

    pub fn num_layers(&self) -> usize {
        self.0.len() - 1
    }

    /// Multiply-accumulates for one forward pass: sum of `in * out` over layers.
    pub fn count_mac(&self) -> u64 {
        self.0.windows(2).map(|w| (w[0] * w[1]) as u64).sum()
    }

    pub fn num_parameters(&self) -> u64 {
        self.0.windows(2).map(|w| (w[0] * w[1] + w[1]) as u64).sum()
    }
}

impl TryFrom<Vec<usize>> for Topology {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Topology::new(v)
    }
}

impl From<Topology> for Vec<usize> {
    fn from(t: Topology) -> Self {
        t.0
    }
}

pub fn count_mac(topology: &Topology) -> u64 {
    topology.count_mac()
}

/// Dense layer with row-major `(out, in)` weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    #[inline]
    pub fn row(&self, neuron: usize) -> &[f64] {
        &self.weights[neuron * self.inputs..(neuron + 1) * self.inputs]
    }

    /// Pre-activation of one neuron. The bias is the initial accumulator and
    /// products are added in input order; the engine simulator reproduces this
    /// order exactly.
    #[inline]
    pub fn pre_activation(&self, neuron: usize, input: &[f64]) -> f64 {
        let mut acc = self.biases[neuron];
        for (w, x) in self.row(neuron).iter().zip(input) {
            acc += w * x;
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    topology: Topology,
    layers: Vec<Layer>,
    activation: ActivationKind,
}

impl MlpModel {
    /// Glorot-uniform weights, zero biases, exact sigmoid.
    pub fn init(topology: &Topology, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let layers = topology
            .sizes()
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit);
                Layer {
                    inputs: fan_in,
                    outputs: fan_out,
                    weights: (0..fan_in * fan_out).map(|_| dist.sample(&mut rng)).collect(),
                    biases: vec![0.0; fan_out],
                }
            })
            .collect();
        MlpModel { topology: topology.clone(), layers, activation: ActivationKind::ExactSigmoid }
    }

    pub fn from_layers(layers: Vec<Layer>, activation: ActivationKind) -> Result<Self> {
        let first = layers.first().ok_or_else(|| Error::structural("model needs at least one layer"))?;
        let mut sizes = vec![first.inputs];
        for (i, l) in layers.iter().enumerate() {
            if l.inputs != *sizes.last().unwrap() {
                return Err(Error::structural(format!(
                    "layer {i} expects {} inputs but previous layer produces {}",
                    l.inputs,
                    sizes.last().unwrap()
                )));
            }
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(Error::structural(format!("layer {i} parameter shape mismatch")));
            }
            if l.weights.iter().chain(&l.biases).any(|v| !v.is_finite()) {
                return Err(Error::structural(format!("layer {i} has non-finite parameters")));
            }
            sizes.push(l.outputs);
        }
        Ok(MlpModel { topology: Topology::new(sizes)?, layers, activation })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn activation(&self) -> &ActivationKind {
        &self.activation
    }

    pub fn with_activation(mut self, activation: ActivationKind) -> Self {
        self.activation = activation;
        self
    }

    pub fn input_width(&self) -> usize {
        self.topology.input_width()
    }

    pub fn output_width(&self) -> usize {
        self.topology.output_width()
    }

    pub fn count_mac(&self) -> u64 {
        self.topology.count_mac()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_width() {
            return Err(Error::structural(format!("model expects {} inputs, got {}", self.input_width(), input.len())));
        }
        Ok(())
    }

    /// Output-layer confidences.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut current = input.to_vec();
        for layer in &self.layers {
            current = (0..layer.outputs).map(|n| self.activation.apply(layer.pre_activation(n, &current))).collect();
        }
        Ok(current)
    }

    /// Forward pass that also counts every multiply it performs.
    pub fn forward_instrumented(&self, input: &[f64]) -> Result<(Vec<f64>, u64)> {
        self.check_input(input)?;
        let mut multiplies = 0u64;
        let mut current = input.to_vec();
        for layer in &self.layers {
            let mut next = Vec::with_capacity(layer.outputs);
            for n in 0..layer.outputs {
                let mut acc = layer.biases[n];
                for (w, x) in layer.row(n).iter().zip(&current) {
                    acc += w * x;
                    multiplies += 1;
                }
                next.push(self.activation.apply(acc));
            }
            current = next;
        }
        Ok((current, multiplies))
    }

    /// Pre-activations and activations of every layer (index 0 of `acts` is the input).
    pub(crate) fn forward_cache(&self, input: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        for layer in &self.layers {
            let prev = acts.last().unwrap();
            let z: Vec<f64> = (0..layer.outputs).map(|n| layer.pre_activation(n, prev)).collect();
            let a = z.iter().map(|&v| self.activation.apply(v)).collect();
            pre.push(z);
            acts.push(a);
        }
        (pre, acts)
    }

    pub fn predict(&self, input: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(input)?))
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }
}

pub fn init_mlp(topology: &Topology, seed: u64) -> MlpModel {
    MlpModel::init(topology, seed)
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::activation::sigmoid;

    #[test]
    fn init_shapes_and_zero_bias() {
        let m = MlpModel::init(&Topology::new(vec![3, 4, 2]).unwrap(), 1);
        let weights: usize = m.layers().iter().map(|l| l.weights.len()).sum();
        let biases: Vec<f64> = m.layers().iter().flat_map(|l| l.biases.clone()).collect();
        assert_eq!(weights, 20);
        assert_eq!(biases.len(), 6);
        assert!(biases.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn init_respects_glorot_limit() {
        let m = MlpModel::init(&Topology::new(vec![10, 6]).unwrap(), 9);
        let limit = (6.0f64 / 16.0).sqrt();
        assert!(m.layers()[0].weights.iter().all(|w| w.abs() <= limit));
    }

    #[test]
    fn init_is_deterministic() {
        let t = Topology::new(vec![3, 4, 2]).unwrap();
        assert_eq!(MlpModel::init(&t, 1), MlpModel::init(&t, 1));
        assert_ne!(MlpModel::init(&t, 1), MlpModel::init(&t, 2));
    }

    #[test]
    fn topology_validation() {
        assert!(matches!(Topology::new(vec![3]), Err(Error::Structural(_))));
        assert!(Topology::new(vec![3, 0, 2]).is_err());
    }

    #[test]
    fn zero_model_outputs_half() {
        let layers = vec![
            Layer { inputs: 3, outputs: 2, weights: vec![0.0; 6], biases: vec![0.0; 2] },
            Layer { inputs: 2, outputs: 2, weights: vec![0.0; 4], biases: vec![0.0; 2] },
        ];
        let m = MlpModel::from_layers(layers, ActivationKind::ExactSigmoid).unwrap();
        assert_eq!(m.forward(&[0.3, -7.0, 2.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn saturated_bias() {
        let layers = vec![Layer { inputs: 1, outputs: 1, weights: vec![0.0], biases: vec![100.0] }];
        let m = MlpModel::from_layers(layers, ActivationKind::ExactSigmoid).unwrap();
        assert!((m.forward(&[0.7]).unwrap()[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn forward_matches_naive_loops() {
        let m = MlpModel::init(&Topology::new(vec![4, 3, 2]).unwrap(), 17);
        let x = [0.2, -0.4, 0.9, 0.05];
        // independent oracle: explicit double loops over the weight matrices
        let mut h = [0.0; 3];
        for (j, hj) in h.iter_mut().enumerate() {
            let mut s = 0.0;
            for i in 0..4 {
                s += m.layers()[0].weights[j * 4 + i] * x[i];
            }
            *hj = sigmoid(s + m.layers()[0].biases[j]);
        }
        let mut o = [0.0; 2];
        for (k, ok) in o.iter_mut().enumerate() {
            let mut s = 0.0;
            for j in 0..3 {
                s += m.layers()[1].weights[k * 3 + j] * h[j];
            }
            *ok = sigmoid(s + m.layers()[1].biases[k]);
        }
        let y = m.forward(&x).unwrap();
        for k in 0..2 {
            assert!((y[k] - o[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let m = MlpModel::init(&Topology::new(vec![4, 2]).unwrap(), 1);
        assert!(matches!(m.forward(&[1.0]), Err(Error::Structural(_))));
    }

    #[test]
    fn count_mac_closed_form() {
        assert_eq!(Topology::new(vec![3, 4, 2]).unwrap().count_mac(), 20);
        assert_eq!(Topology::new(vec![7, 1]).unwrap().count_mac(), 7);
    }

    proptest::proptest! {
        #[test]
        fn count_mac_matches_instrumented(sizes in proptest::collection::vec(1usize..12, 2..5), seed in 0u64..1000) {
            let t = Topology::new(sizes).unwrap();
            let m = MlpModel::init(&t, seed);
            let x = vec![0.5; t.input_width()];
            let (_, muls) = m.forward_instrumented(&x).unwrap();
            proptest::prop_assert_eq!(muls, t.count_mac());
        }

        #[test]
        fn exact_outputs_in_open_unit_interval(seed in 0u64..500, x in proptest::collection::vec(-5.0f64..5.0, 5)) {
            let m = MlpModel::init(&Topology::new(vec![5, 7, 3]).unwrap(), seed);
            for y in m.forward(&x).unwrap() {
                proptest::prop_assert!(y > 0.0 && y < 1.0);
            }
        }

        #[test]
        fn pwl_outputs_in_closed_unit_interval(seed in 0u64..500, x in proptest::collection::vec(-50.0f64..50.0, 5)) {
            let m = MlpModel::init(&Topology::new(vec![5, 7, 3]).unwrap(), seed)
                .with_activation(ActivationKind::pwl_default());
            for y in m.forward(&x).unwrap() {
                proptest::prop_assert!((0.0..=1.0).contains(&y));
            }
        }
    }
}
