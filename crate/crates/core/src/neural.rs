//! Small dense networks with hand-written reverse mode, Adam and Polyak
//! averaging. Sized for the meta-sampler and its critics; nothing here is
//! batched or vectorized.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::Rng;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation.
    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    inputs: usize,
    outputs: usize,
    /// `outputs x inputs`, row-major.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Per-layer inputs and pre-activations recorded by [`Mlp::forward`].
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre
    }
}

/// Parameter-shaped buffer: gradients, Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().flatten().chain(self.biases.iter().flatten())
    }

    fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .flatten()
            .chain(self.biases.iter_mut().flatten())
    }

    pub fn scale(&mut self, factor: f64) {
        self.iter_mut().for_each(|g| *g *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|g| g.is_finite())
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

impl Mlp {
    /// `sizes` lists every layer width including input and output;
    /// `activations[i]` applies to layer `i + 1`.
    pub fn zeros(sizes: &[usize], activations: &[Activation]) -> Result<Self> {
        if sizes.len() < 2 || activations.len() != sizes.len() - 1 {
            return Err(Error::invalid(
                "need at least two layer sizes and one activation per non-input layer",
            ));
        }
        if sizes.contains(&0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| Layer {
                inputs: w[0],
                outputs: w[1],
                weights: vec![0.0; w[0] * w[1]],
                biases: vec![0.0; w[1]],
                activation,
            })
            .collect();
        Ok(Self { layers })
    }

    /// Weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn new(sizes: &[usize], activations: &[Activation], rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeros(sizes, activations)?;
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for p in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *p = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    /// Hidden layers use ReLU, the output layer is linear.
    pub fn relu_network(sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        let mut acts = vec![Activation::Relu; sizes.len().saturating_sub(2)];
        acts.push(Activation::Linear);
        Self::new(sizes, &acts, rng)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_size(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_size())
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Weights of every layer, then biases of every layer.
    pub fn parameters(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter())
            .chain(self.layers.iter().flat_map(|l| l.biases.iter()))
    }

    /// Same order as [`parameters`](Self::parameters) and [`Gradients::iter`].
    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        let (w, b): (Vec<_>, Vec<_>) = self
            .layers
            .iter_mut()
            .map(|l| (&mut l.weights, &mut l.biases))
            .unzip();
        w.into_iter()
            .flat_map(|v| v.iter_mut())
            .chain(b.into_iter().flat_map(|v| v.iter_mut()))
    }

    fn same_shape(&self, other: &Mlp) -> bool {
        self.layer_sizes() == other.layer_sizes() && self.activations() == other.activations()
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        check_len(self.input_size(), input.len())?;
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
        };
        let mut x = input.to_vec();
        for layer in &self.layers {
            let pre: Vec<f64> = layer
                .weights
                .chunks_exact(layer.inputs)
                .zip(&layer.biases)
                .map(|(w, b)| w.iter().zip(&x).map(|(w, x)| w * x).sum::<f64>() + b)
                .collect();
            let out = pre.iter().map(|&z| layer.activation.apply(z)).collect();
            cache.inputs.push(std::mem::replace(&mut x, out));
            cache.pre.push(pre);
        }
        Ok((x, cache))
    }

    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.0)
    }

    /// Adds the gradient of `output · output_grad` into `grads` and returns
    /// its gradient with respect to the input.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        output_grad: &[f64],
        grads: &mut Gradients,
    ) -> Result<Vec<f64>> {
        check_len(self.output_size(), output_grad.len())?;
        check_len(self.layers.len(), cache.pre.len())?;
        check_len(self.layers.len(), grads.weights.len())?;
        let mut delta = output_grad.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let pre = &cache.pre[l];
            let input = &cache.inputs[l];
            check_len(layer.outputs, pre.len())?;
            for (d, &z) in delta.iter_mut().zip(pre) {
                *d *= layer.activation.derivative(z);
            }
            let gw = &mut grads.weights[l];
            let gb = &mut grads.biases[l];
            let mut next = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                let grow = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                for ((g, x), (n, w)) in grow.iter_mut().zip(input).zip(next.iter_mut().zip(row)) {
                    *g += d * x;
                    *n += d * w;
                }
            }
            delta = next;
        }
        Ok(delta)
    }

    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        let mut grads = Gradients::zeros_like(self);
        let input_grad = self.backward_into(cache, output_grad, &mut grads)?;
        Ok((grads, input_grad))
    }

    pub fn to_document(&self) -> MlpDocument {
        MlpDocument {
            format_version: FORMAT_VERSION,
            layer_sizes: self.layer_sizes(),
            activations: self.activations(),
            weights: self.layers.iter().map(|l| l.weights.clone()).collect(),
            biases: self.layers.iter().map(|l| l.biases.clone()).collect(),
        }
    }

    pub fn from_document(doc: &MlpDocument) -> Result<Self> {
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported network format version {}",
                doc.format_version
            )));
        }
        let mut net = Self::zeros(&doc.layer_sizes, &doc.activations)
            .map_err(|e| Error::Format(e.to_string()))?;
        if doc.weights.len() != net.layers.len() || doc.biases.len() != net.layers.len() {
            return Err(Error::Format("layer count does not match layer_sizes".into()));
        }
        for (l, layer) in net.layers.iter_mut().enumerate() {
            if doc.weights[l].len() != layer.weights.len() || doc.biases[l].len() != layer.biases.len() {
                return Err(Error::Format(format!("layer {l} has the wrong parameter count")));
            }
            layer.weights.copy_from_slice(&doc.weights[l]);
            layer.biases.copy_from_slice(&doc.biases[l]);
        }
        if net.parameters().any(|p| !p.is_finite()) {
            return Err(Error::Format("non-finite parameter".into()));
        }
        Ok(net)
    }
}

/// Serialized network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpDocument {
    pub format_version: u32,
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Gradients,
    v: Gradients,
}

impl AdamState {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }
}

/// One bias-corrected Adam update. Fails without touching `net` if any
/// gradient is non-finite.
pub fn adam_step(net: &mut Mlp, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    if grads.weights.len() != state.m.weights.len()
        || grads.iter().count() != net.parameter_count()
    {
        return Err(Error::DimensionMismatch {
            expected: net.parameter_count(),
            got: grads.iter().count(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.eps);
    let moments = state.m.iter_mut().zip(state.v.iter_mut());
    for ((p, g), (m, v)) in net.parameters_mut().zip(grads.iter()).zip(moments) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Multiplies the learning rate by `ratio` once every `every` ticks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDecay {
    pub every: u64,
    pub ratio: f64,
    ticks: u64,
}

impl StepDecay {
    pub fn new(every: u64, ratio: f64) -> Self {
        Self {
            every,
            ratio,
            ticks: 0,
        }
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn tick(&mut self, state: &mut AdamState) {
        self.ticks += 1;
        if self.every > 0 && self.ticks.is_multiple_of(self.every) {
            state.lr *= self.ratio;
        }
    }
}

pub fn decay_learning_rate(schedule: &mut StepDecay, state: &mut AdamState) {
    schedule.tick(state);
}

/// `target <- tau * source + (1 - tau) * target`, parameter-wise.
pub fn soft_update(target: &mut Mlp, source: &Mlp, tau: f64) -> Result<()> {
    if !target.same_shape(source) {
        return Err(Error::invalid("soft update between different architectures"));
    }
    for (t, s) in target.parameters_mut().zip(source.parameters()) {
        *t = tau * s + (1.0 - tau) * *t;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 4, 2], &[Activation::Relu, Activation::Linear]).unwrap();
        assert_eq!(net.predict(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_and_linear_gradient() {
        let mut net = Mlp::zeros(&[1, 1], &[Activation::Linear]).unwrap();
        net.layers_mut()[0].weights[0] = 1.0;
        assert_eq!(net.predict(&[0.7]).unwrap(), vec![0.7]);
        net.layers_mut()[0].weights[0] = 2.5;
        let (_, cache) = net.forward(&[0.7]).unwrap();
        let (g, dx) = net.backward(&cache, &[1.0]).unwrap();
        assert_eq!(g.weights[0][0], 0.7);
        assert_eq!(g.biases[0][0], 1.0);
        assert_eq!(dx, vec![2.5]);
    }

    #[test]
    fn dead_relu_blocks_gradient() {
        let mut net = Mlp::zeros(&[1, 1, 1], &[Activation::Relu, Activation::Linear]).unwrap();
        net.layers_mut()[0].weights[0] = 1.0;
        net.layers_mut()[0].biases[0] = -5.0;
        net.layers_mut()[1].weights[0] = 3.0;
        let (_, cache) = net.forward(&[1.0]).unwrap();
        let (g, dx) = net.backward(&cache, &[1.0]).unwrap();
        assert_eq!(g.weights[0][0], 0.0);
        assert_eq!(g.biases[0][0], 0.0);
        assert_eq!(dx, vec![0.0]);
    }

    #[test]
    fn forward_is_deterministic_and_checks_shape() {
        let net = Mlp::relu_network(&[10, 50, 2], &mut seeding::rng(1)).unwrap();
        let x: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        assert_eq!(net.predict(&x).unwrap(), net.predict(&x).unwrap());
        assert!(matches!(
            net.predict(&x[..9]),
            Err(Error::DimensionMismatch { expected: 10, got: 9 })
        ));
        assert!(Mlp::zeros(&[3], &[]).is_err());
        assert!(Mlp::zeros(&[3, 2], &[Activation::Relu, Activation::Linear]).is_err());
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let net = Mlp::relu_network(&[16, 8, 1], &mut seeding::rng(3)).unwrap();
        assert!(net.layers()[0].weights.iter().all(|w| w.abs() <= 0.25));
        assert!(net.layers()[1].weights.iter().all(|w| w.abs() <= 1.0 / 8f64.sqrt()));
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut net = Mlp::relu_network(&[3, 4, 1], &mut seeding::rng(2)).unwrap();
        let before = net.clone();
        let mut st = AdamState::new(&net, 1e-3);
        adam_step(&mut net, &Gradients::zeros_like(&before), &mut st).unwrap();
        assert_eq!(net, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut net = Mlp::relu_network(&[3, 4, 1], &mut seeding::rng(2)).unwrap();
        let before = net.clone();
        let mut g = Gradients::zeros_like(&net);
        let signs: Vec<f64> = (0..net.parameter_count())
            .map(|i| if i % 3 == 0 { -0.7 } else { 2.0 })
            .collect();
        for (slot, s) in g.iter_mut().zip(&signs) {
            *slot = *s;
        }
        let mut st = AdamState::new(&net, 1e-3);
        adam_step(&mut net, &g, &mut st).unwrap();
        for ((a, b), s) in net.parameters().zip(before.parameters()).zip(&signs) {
            let step = b - a;
            assert!((step - 1e-3 * s.signum()).abs() < 1e-9, "{step}");
        }
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut net = Mlp::relu_network(&[2, 1], &mut seeding::rng(2)).unwrap();
        let before = net.clone();
        let mut g = Gradients::zeros_like(&net);
        g.weights[0][1] = f64::NAN;
        let mut st = AdamState::new(&net, 1e-3);
        assert!(matches!(adam_step(&mut net, &g, &mut st), Err(Error::NonFinite(_))));
        assert_eq!(net, before);
    }

    #[test]
    fn adam_descends_quadratic_bowl() {
        // f(p) = sum (p_i - c_i)^2 over every parameter; minimum at c.
        let mut net = Mlp::relu_network(&[2, 3, 1], &mut seeding::rng(8)).unwrap();
        let target: Vec<f64> = (0..net.parameter_count()).map(|i| (i as f64 * 0.37).sin()).collect();
        let loss = |n: &Mlp| n.parameters().zip(&target).map(|(p, c)| (p - c).powi(2)).sum::<f64>();
        let mut st = AdamState::new(&net, 1e-3);
        let mut history = vec![loss(&net)];
        for _ in 0..500 {
            let mut g = Gradients::zeros_like(&net);
            for ((slot, p), c) in g.iter_mut().zip(net.parameters()).zip(&target) {
                *slot = 2.0 * (p - c);
            }
            adam_step(&mut net, &g, &mut st).unwrap();
            history.push(loss(&net));
        }
        for w in history[10..].windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(history[500] < history[0]);
    }

    #[test]
    fn decay_schedule() {
        let net = Mlp::zeros(&[1, 1], &[Activation::Linear]).unwrap();
        let mut st = AdamState::new(&net, 1e-3);
        let mut sched = StepDecay::new(10, 0.99);
        assert_eq!(st.lr, 1e-3);
        for _ in 0..10 {
            decay_learning_rate(&mut sched, &mut st);
        }
        assert_eq!(st.lr, 1e-3 * 0.99);
        for _ in 0..90 {
            sched.tick(&mut st);
        }
        assert!((st.lr - 1e-3 * 0.99f64.powi(10)).abs() < 1e-18);
    }

    #[test]
    fn soft_update_cases() {
        let mut rng = seeding::rng(4);
        let src = Mlp::relu_network(&[3, 5, 1], &mut rng).unwrap();
        let orig = Mlp::relu_network(&[3, 5, 1], &mut rng).unwrap();

        let mut t = orig.clone();
        soft_update(&mut t, &src, 1.0).unwrap();
        assert_eq!(t, src);
        let mut t = orig.clone();
        soft_update(&mut t, &src, 0.0).unwrap();
        assert_eq!(t, orig);

        let mut t = Mlp::zeros(&[1, 1], &[Activation::Linear]).unwrap();
        let mut s = t.clone();
        s.layers_mut()[0].weights[0] = 1.0;
        soft_update(&mut t, &s, 0.01).unwrap();
        assert_eq!(t.layers()[0].weights[0], 0.01);

        let other = Mlp::relu_network(&[3, 4, 1], &mut rng).unwrap();
        assert!(soft_update(&mut t, &other, 0.5).is_err());
    }

    #[test]
    fn document_round_trip_is_bit_exact() {
        let net = Mlp::new(
            &[4, 7, 3],
            &[Activation::Tanh, Activation::Linear],
            &mut seeding::rng(12),
        )
        .unwrap();
        let json = serde_json::to_string(&net.to_document()).unwrap();
        let back = Mlp::from_document(&serde_json::from_str(&json).unwrap()).unwrap();
        assert!(net.parameters().zip(back.parameters()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(back, net);

        let mut doc = net.to_document();
        doc.format_version = 99;
        assert!(Mlp::from_document(&doc).is_err());
        let mut doc = net.to_document();
        doc.weights[1].pop();
        assert!(Mlp::from_document(&doc).is_err());
    }
}
