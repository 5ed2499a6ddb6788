//! Finite-difference gradient checking shared by the gradient suite and the
//! acceptance run.
#![allow(dead_code)]

use mesa_core::metasampling::MetaState;
use mesa_core::neural::{Activation, Gradients, Mlp};
use mesa_core::sac::{policy_loss, q_loss, squash, v_loss, MetaSampler, Transition};
use mesa_core::seeding::{self, Rng};
use rand::seq::index;
use rand::Rng as _;

const H: f64 = 1e-5;
/// Pre-activations closer than this to the ReLU kink would let a step of
/// size `H` cross it, so such cases are redrawn.
const KINK_MARGIN: f64 = 1e-3;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn near_kink(net: &Mlp, input: &[f64]) -> bool {
    let (_, cache) = net.forward(input).unwrap();
    net.layers()
        .iter()
        .zip(cache.pre_activations())
        .any(|(l, pre)| l.activation == Activation::Relu && pre.iter().any(|z| z.abs() < KINK_MARGIN))
}

fn perturbed(net: &Mlp, index: usize, delta: f64) -> Mlp {
    let mut out = net.clone();
    *out.parameters_mut().nth(index).unwrap() += delta;
    out
}

fn central_difference(net: &Mlp, index: usize, f: impl Fn(&Mlp) -> f64) -> f64 {
    (f(&perturbed(net, index, H)) - f(&perturbed(net, index, -H))) / (2.0 * H)
}

/// Coordinates to check: all of them for small networks, otherwise a random
/// subset that always includes every layer's first weight and last bias.
fn coordinates(net: &Mlp, rng: &mut Rng, budget: usize) -> Vec<usize> {
    let n = net.parameter_count();
    if n <= budget {
        return (0..n).collect();
    }
    let mut picked: Vec<usize> = index::sample(rng, n, budget).into_vec();
    let mut offset = 0;
    for l in net.layers() {
        picked.push(offset);
        offset += l.weights.len();
    }
    for l in net.layers() {
        offset += l.biases.len();
        picked.push(offset - 1);
    }
    picked.sort_unstable();
    picked.dedup();
    picked
}

pub const TABLE_8: [&[usize]; 9] = [
    &[10, 50, 1],
    &[10, 100, 1],
    &[10, 200, 1],
    &[10, 25, 25, 1],
    &[10, 50, 50, 1],
    &[10, 100, 100, 1],
    &[10, 10, 10, 10, 1],
    &[10, 25, 25, 25, 1],
    &[10, 50, 50, 50, 1],
];

pub fn check_network(sizes: &[usize], cases: usize, seed: u64) -> f64 {
    let mut rng = seeding::rng(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < cases {
        let net = Mlp::relu_network(sizes, &mut rng).unwrap();
        let input: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        if near_kink(&net, &input) {
            continue;
        }
        let out_grad: Vec<f64> = (0..net.output_size()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let objective = |n: &Mlp| -> f64 {
            n.predict(&input).unwrap().iter().zip(&out_grad).map(|(o, c)| o * c).sum()
        };
        let (_, cache) = net.forward(&input).unwrap();
        let (grads, input_grad) = net.backward(&cache, &out_grad).unwrap();
        let analytic: Vec<f64> = grads.iter().copied().collect();
        let budget = if done == 0 { usize::MAX } else { 40 };
        for i in coordinates(&net, &mut rng, budget) {
            let numeric = central_difference(&net, i, objective);
            worst = worst.max(relative_error(analytic[i], numeric));
        }
        for j in 0..input.len() {
            let mut up = input.clone();
            let mut down = input.clone();
            up[j] += H;
            down[j] -= H;
            let f = |x: &[f64]| -> f64 { net.predict(x).unwrap().iter().zip(&out_grad).map(|(o, c)| o * c).sum() };
            let numeric = (f(&up) - f(&down)) / (2.0 * H);
            worst = worst.max(relative_error(input_grad[j], numeric));
        }
        done += 1;
    }
    worst
}

pub fn random_state(rng: &mut Rng, bins: usize) -> MetaState {
    let half = |rng: &mut Rng| {
        let raw: Vec<f64> = (0..bins).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / total).collect::<Vec<_>>()
    };
    let train = half(rng);
    let valid = half(rng);
    MetaState::from_histograms(&train, &valid).unwrap()
}

pub fn random_batch(rng: &mut Rng, n: usize) -> Vec<Transition> {
    (0..n)
        .map(|_| Transition {
            state: random_state(rng, 5),
            action: rng.random(),
            reward: rng.random_range(-0.2..0.2),
            next_state: random_state(rng, 5),
            terminal: rng.random_bool(0.25),
        })
        .collect()
}

pub struct LossCase {
    pub sampler: MetaSampler,
    pub q: Mlp,
    pub v: Mlp,
    pub v_target: Mlp,
    pub batch: Vec<Transition>,
    pub noise: Vec<f64>,
}

impl LossCase {
    /// Every ReLU pre-activation that any loss evaluates stays away from the kink.
    fn smooth(&self) -> bool {
        let policy = self.sampler.network();
        for (t, &eps) in self.batch.iter().zip(&self.noise) {
            if near_kink(policy, t.state.values()) || near_kink(&self.v, t.state.values()) {
                return false;
            }
            if near_kink(&self.v_target, t.next_state.values()) {
                return false;
            }
            let mut sa = t.state.values().to_vec();
            sa.push(t.action);
            if near_kink(&self.q, &sa) {
                return false;
            }
            let (m, l) = self.sampler.heads(&t.state).unwrap();
            let mut s_new = t.state.values().to_vec();
            s_new.push(squash(m + l.exp() * eps));
            if near_kink(&self.q, &s_new) {
                return false;
            }
        }
        true
    }
}

pub fn loss_case(rng: &mut Rng) -> LossCase {
    loop {
        let seed = rng.random();
        let case = LossCase {
            sampler: MetaSampler::new(5, 0.2, 50, seed).unwrap(),
            q: Mlp::relu_network(&[11, 50, 50, 1], rng).unwrap(),
            v: Mlp::relu_network(&[10, 50, 50, 1], rng).unwrap(),
            v_target: Mlp::relu_network(&[10, 50, 50, 1], rng).unwrap(),
            batch: random_batch(rng, 4),
            noise: (0..4).map(|_| rng.random_range(-2.0..2.0)).collect(),
        };
        if case.smooth() {
            return case;
        }
    }
}

pub fn check_loss(
    net: &Mlp,
    analytic: &Gradients,
    rng: &mut Rng,
    budget: usize,
    f: impl Fn(&Mlp) -> f64,
) -> f64 {
    let analytic: Vec<f64> = analytic.iter().copied().collect();
    coordinates(net, rng, budget)
        .into_iter()
        .map(|i| relative_error(analytic[i], central_difference(net, i, &f)))
        .fold(0.0, f64::max)
}

/// Worst relative error of the Q, V and policy loss gradients over `cases`
/// random batches of four transitions.
pub fn sac_loss_worst(cases: usize, seed: u64) -> [f64; 3] {
    let mut rng = seeding::rng(seed);
    let (gamma, alpha) = (0.99, 0.1);
    let mut worst = [0.0f64; 3];
    for case_no in 0..cases {
        let c = loss_case(&mut rng);
        let batch: Vec<&Transition> = c.batch.iter().collect();
        let budget = if case_no == 0 { usize::MAX } else { 30 };

        let (_, g) = q_loss(&c.q, &c.v_target, &batch, gamma).unwrap();
        let e = check_loss(&c.q, &g, &mut rng, budget, |q| q_loss(q, &c.v_target, &batch, gamma).unwrap().0);
        worst[0] = worst[0].max(e);

        let (_, g) = v_loss(&c.v, &c.q, &c.sampler, &batch, &c.noise, alpha).unwrap();
        let e = check_loss(&c.v, &g, &mut rng, budget, |v| {
            v_loss(v, &c.q, &c.sampler, &batch, &c.noise, alpha).unwrap().0
        });
        worst[1] = worst[1].max(e);

        let (_, g) = policy_loss(&c.sampler, &c.q, &batch, &c.noise, alpha).unwrap();
        let e = check_loss(c.sampler.network(), &g, &mut rng, budget, |p| {
            let s = MetaSampler::from_network(p.clone(), 5, 0.2).unwrap();
            policy_loss(&s, &c.q, &batch, &c.noise, alpha).unwrap().0
        });
        worst[2] = worst[2].max(e);
    }
    worst
}
