//! Branching dueling Q-network with hand-written backpropagation.
//!
//! A shared ReLU trunk feeds one state-value head and K advantage heads.
//! Branch k combines them as
//! `Q_k(s, a) = V(s) + A_k(s, a) - mean_a' A_k(s, a')`.
//! All parameters live in one flat `Vec<f64>` so optimizers and target
//! updates are plain elementwise loops.

mod adam;
mod checkpoint;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("input has dimension {got}, network expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parameter shapes differ ({left} vs {right} values)")]
    ShapeMismatch { left: usize, right: usize },
    #[error("sample {0} has no activated branch")]
    AllIdle(usize),
    #[error("sample {sample}: {what}")]
    BadSample { sample: usize, what: String },
    #[error("invalid network shape: {0}")]
    InvalidShape(String),
    #[error("tau must lie in [0, 1], got {0}")]
    InvalidTau(f64),
    #[error("cannot access checkpoint {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt checkpoint {path}: {reason}")]
    Corrupt { path: String, reason: String },
}

/// Layer widths. Every hidden layer uses ReLU; the value output and the
/// advantage outputs are linear.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub input: usize,
    pub trunk: Vec<usize>,
    pub value_hidden: usize,
    pub advantage_hidden: usize,
    pub branches: usize,
    pub actions: usize,
}

impl NetShape {
    /// Default widths: trunk 512-256, heads 128, five branches of four actions.
    pub fn new(input: usize) -> Self {
        Self::with_hidden(input, &[512, 256], 128, 128)
    }

    pub fn with_hidden(input: usize, trunk: &[usize], value_hidden: usize, advantage_hidden: usize) -> Self {
        Self {
            input,
            trunk: trunk.to_vec(),
            value_hidden,
            advantage_hidden,
            branches: 5,
            actions: 4,
        }
    }

    fn validate(&self) -> Result<(), NeuralError> {
        let widths = [self.input, self.value_hidden, self.advantage_hidden, self.branches, self.actions];
        if widths.contains(&0) || self.trunk.is_empty() || self.trunk.contains(&0) {
            return Err(NeuralError::InvalidShape(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    input: usize,
    output: usize,
    /// Offset of the row-major `output x input` weight block; biases follow.
    offset: usize,
}

impl Dense {
    fn len(&self) -> usize {
        self.output * (self.input + 1)
    }

    fn bias(&self) -> usize {
        self.offset + self.output * self.input
    }

    fn apply(&self, p: &[f64], x: &[f64], out: &mut Vec<f64>, relu: bool) {
        out.clear();
        let b = self.bias();
        for o in 0..self.output {
            let row = &p[self.offset + o * self.input..self.offset + (o + 1) * self.input];
            let mut z = p[b + o];
            for (w, xi) in row.iter().zip(x) {
                z += w * xi;
            }
            out.push(if relu { z.max(0.0) } else { z });
        }
    }

    /// Accumulate parameter gradients for upstream gradient `dy` and, when
    /// `dx` is given, add the input gradient to it.
    fn backward(&self, p: &[f64], x: &[f64], dy: &[f64], grad: &mut [f64], dx: Option<&mut [f64]>) {
        let b = self.bias();
        for (o, &d) in dy.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grad[b + o] += d;
            let row = &mut grad[self.offset + o * self.input..self.offset + (o + 1) * self.input];
            for (g, xi) in row.iter_mut().zip(x) {
                *g += d * xi;
            }
        }
        if let Some(dx) = dx {
            for (o, &d) in dy.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &p[self.offset + o * self.input..self.offset + (o + 1) * self.input];
                for (g, w) in dx.iter_mut().zip(row) {
                    *g += d * w;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    trunk: Vec<Dense>,
    value: [Dense; 2],
    heads: Vec<[Dense; 2]>,
    len: usize,
}

impl Layout {
    fn new(shape: &NetShape) -> Self {
        let mut offset = 0;
        let mut dense = |input, output| {
            let d = Dense { input, output, offset };
            offset += d.len();
            d
        };
        let mut trunk = Vec::new();
        let mut width = shape.input;
        for &h in &shape.trunk {
            trunk.push(dense(width, h));
            width = h;
        }
        let value = [dense(width, shape.value_hidden), dense(shape.value_hidden, 1)];
        let heads = (0..shape.branches)
            .map(|_| [dense(width, shape.advantage_hidden), dense(shape.advantage_hidden, shape.actions)])
            .collect();
        Self {
            trunk,
            value,
            heads,
            len: offset,
        }
    }
}

/// V, A and Q for one input. `a` and `q` are branch-major, `actions` wide.
#[derive(Debug, Clone, PartialEq)]
pub struct QOutput {
    pub v: f64,
    pub a: Vec<f64>,
    pub q: Vec<f64>,
    pub branches: usize,
    pub actions: usize,
}

impl QOutput {
    pub fn q_branch(&self, k: usize) -> &[f64] {
        &self.q[k * self.actions..(k + 1) * self.actions]
    }

    pub fn a_branch(&self, k: usize) -> &[f64] {
        &self.a[k * self.actions..(k + 1) * self.actions]
    }

    /// First maximizing action of branch k.
    pub fn argmax(&self, k: usize) -> usize {
        argmax(self.q_branch(k))
    }
}

/// Index of the first maximal element.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

struct Cache {
    trunk: Vec<Vec<f64>>,
    value_hidden: Vec<f64>,
    head_hidden: Vec<Vec<f64>>,
    out: QOutput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchingNet {
    shape: NetShape,
    layout: Layout,
    params: Vec<f64>,
}

/// One training example: taken action and target per branch, and which
/// branches are activated.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub obs: &'a [f64],
    pub actions: &'a [usize],
    pub targets: &'a [f64],
    pub mask: &'a [bool],
}

impl BranchingNet {
    /// He-style uniform initialization, U(-sqrt(6/fan_in), sqrt(6/fan_in))
    /// for weights, zero biases.
    pub fn new(shape: NetShape, seed: u64) -> Result<Self, NeuralError> {
        shape.validate()?;
        let layout = Layout::new(&shape);
        let mut params = vec![0.0; layout.len];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let all = layout
            .trunk
            .iter()
            .chain(&layout.value)
            .chain(layout.heads.iter().flatten());
        for d in all {
            let bound = (6.0 / d.input as f64).sqrt();
            for w in &mut params[d.offset..d.bias()] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(Self { shape, layout, params })
    }

    pub fn from_params(shape: NetShape, params: Vec<f64>) -> Result<Self, NeuralError> {
        shape.validate()?;
        let layout = Layout::new(&shape);
        if params.len() != layout.len {
            return Err(NeuralError::ShapeMismatch {
                left: layout.len,
                right: params.len(),
            });
        }
        Ok(Self { shape, layout, params })
    }

    pub fn shape(&self) -> &NetShape {
        &self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Parameter index range of advantage head k (both of its layers).
    pub fn head_range(&self, k: usize) -> std::ops::Range<usize> {
        let [h, o] = self.layout.heads[k];
        h.offset..o.offset + o.len()
    }

    pub fn forward(&self, obs: &[f64]) -> Result<QOutput, NeuralError> {
        self.check_input(obs)?;
        Ok(self.forward_cached(obs).out)
    }

    fn check_input(&self, obs: &[f64]) -> Result<(), NeuralError> {
        if obs.len() != self.shape.input {
            return Err(NeuralError::DimensionMismatch {
                expected: self.shape.input,
                got: obs.len(),
            });
        }
        Ok(())
    }

    fn forward_cached(&self, obs: &[f64]) -> Cache {
        let p = &self.params;
        let mut trunk: Vec<Vec<f64>> = Vec::with_capacity(self.layout.trunk.len());
        for (i, d) in self.layout.trunk.iter().enumerate() {
            let mut out = Vec::with_capacity(d.output);
            let x = if i == 0 { obs } else { &trunk[i - 1] };
            d.apply(p, x, &mut out, true);
            trunk.push(out);
        }
        let h = trunk.last().expect("trunk has at least one layer");
        let mut value_hidden = Vec::new();
        self.layout.value[0].apply(p, h, &mut value_hidden, true);
        let mut v = Vec::with_capacity(1);
        self.layout.value[1].apply(p, &value_hidden, &mut v, false);
        let v = v[0];
        let actions = self.shape.actions;
        let mut a = Vec::with_capacity(self.shape.branches * actions);
        let mut q = Vec::with_capacity(self.shape.branches * actions);
        let mut head_hidden = Vec::with_capacity(self.shape.branches);
        let mut adv = Vec::with_capacity(actions);
        for head in &self.layout.heads {
            let mut hidden = Vec::new();
            head[0].apply(p, h, &mut hidden, true);
            head[1].apply(p, &hidden, &mut adv, false);
            let mean = adv.iter().sum::<f64>() / actions as f64;
            q.extend(adv.iter().map(|x| v + (x - mean)));
            a.extend_from_slice(&adv);
            head_hidden.push(hidden);
        }
        Cache {
            trunk,
            value_hidden,
            head_hidden,
            out: QOutput {
                v,
                a,
                q,
                branches: self.shape.branches,
                actions,
            },
        }
    }

    fn check_sample(&self, i: usize, s: &Sample) -> Result<usize, NeuralError> {
        self.check_input(s.obs)?;
        let k = self.shape.branches;
        if s.actions.len() != k || s.targets.len() != k || s.mask.len() != k {
            return Err(NeuralError::BadSample {
                sample: i,
                what: format!("actions, targets and mask need {k} entries"),
            });
        }
        if let Some(b) = (0..k).find(|&b| s.mask[b] && s.actions[b] >= self.shape.actions) {
            return Err(NeuralError::BadSample {
                sample: i,
                what: format!("action {} out of range on branch {b}", s.actions[b]),
            });
        }
        let active = s.mask.iter().filter(|m| **m).count();
        if active == 0 {
            return Err(NeuralError::AllIdle(i));
        }
        Ok(active)
    }

    /// Batch mean of `(1/N) * sum_k (y_k - Q_k(s, a_k))^2` over the N
    /// activated branches of each sample.
    pub fn loss(&self, batch: &[Sample]) -> Result<f64, NeuralError> {
        let mut total = 0.0;
        for (i, s) in batch.iter().enumerate() {
            let active = self.check_sample(i, s)?;
            let out = self.forward_cached(s.obs).out;
            total += sample_loss(&out, s) / active as f64;
        }
        Ok(total / batch.len().max(1) as f64)
    }

    /// Loss and its analytic gradient with respect to every parameter.
    pub fn loss_and_gradients(&self, batch: &[Sample]) -> Result<(f64, Vec<f64>), NeuralError> {
        let mut grad = vec![0.0; self.params.len()];
        let mut total = 0.0;
        let scale = 1.0 / batch.len().max(1) as f64;
        let actions = self.shape.actions;
        let p = &self.params;
        for (i, s) in batch.iter().enumerate() {
            let active = self.check_sample(i, s)?;
            let cache = self.forward_cached(s.obs);
            let out = &cache.out;
            total += sample_loss(out, s) / active as f64;
            let h = cache.trunk.last().expect("trunk has at least one layer");
            let mut dh = vec![0.0; h.len()];
            let mut dv = 0.0;
            for k in 0..self.shape.branches {
                if !s.mask[k] {
                    continue;
                }
                let ak = s.actions[k];
                let dq = -2.0 * (s.targets[k] - out.q[k * actions + ak]) / active as f64 * scale;
                dv += dq;
                let da: Vec<f64> = (0..actions)
                    .map(|a| dq * (f64::from(u8::from(a == ak)) - 1.0 / actions as f64))
                    .collect();
                let [hidden, output] = self.layout.heads[k];
                let hk = &cache.head_hidden[k];
                let mut dhk = vec![0.0; hk.len()];
                output.backward(p, hk, &da, &mut grad, Some(&mut dhk));
                relu_mask(&mut dhk, hk);
                hidden.backward(p, h, &dhk, &mut grad, Some(&mut dh));
            }
            let [vh, vo] = self.layout.value;
            let mut dvh = vec![0.0; cache.value_hidden.len()];
            vo.backward(p, &cache.value_hidden, &[dv], &mut grad, Some(&mut dvh));
            relu_mask(&mut dvh, &cache.value_hidden);
            vh.backward(p, h, &dvh, &mut grad, Some(&mut dh));
            let mut dy = dh;
            for (li, d) in self.layout.trunk.iter().enumerate().rev() {
                relu_mask(&mut dy, &cache.trunk[li]);
                let x = if li == 0 { s.obs } else { &cache.trunk[li - 1] };
                if li == 0 {
                    d.backward(p, x, &dy, &mut grad, None);
                } else {
                    let mut dx = vec![0.0; x.len()];
                    d.backward(p, x, &dy, &mut grad, Some(&mut dx));
                    dy = dx;
                }
            }
        }
        Ok((total * scale, grad))
    }
}

fn sample_loss(out: &QOutput, s: &Sample) -> f64 {
    (0..out.branches)
        .filter(|&k| s.mask[k])
        .map(|k| {
            let e = s.targets[k] - out.q[k * out.actions + s.actions[k]];
            e * e
        })
        .sum()
}

/// Zero the gradient where the ReLU output was clamped.
fn relu_mask(grad: &mut [f64], activation: &[f64]) {
    for (g, &y) in grad.iter_mut().zip(activation) {
        if y <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Central-difference estimate of the loss gradient.
pub fn finite_difference_gradient(net: &BranchingNet, batch: &[Sample], epsilon: f64) -> Result<Vec<f64>, NeuralError> {
    let mut probe = net.clone();
    let mut grad = vec![0.0; net.len()];
    for (i, g) in grad.iter_mut().enumerate() {
        let theta = net.params[i];
        probe.params[i] = theta + epsilon;
        let up = probe.loss(batch)?;
        probe.params[i] = theta - epsilon;
        let down = probe.loss(batch)?;
        probe.params[i] = theta;
        *g = (up - down) / (2.0 * epsilon);
    }
    Ok(grad)
}

/// Central difference of an arbitrary scalar function, for checking the
/// oracle itself.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], epsilon: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + epsilon;
            let up = f(&probe);
            probe[i] = x[i] - epsilon;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * epsilon)
        })
        .collect()
}

/// `target <- (1 - tau) * target + tau * online`, elementwise.
pub fn soft_update(target: &mut BranchingNet, online: &BranchingNet, tau: f64) -> Result<(), NeuralError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(NeuralError::InvalidTau(tau));
    }
    if target.shape != online.shape {
        return Err(NeuralError::ShapeMismatch {
            left: target.len(),
            right: online.len(),
        });
    }
    for (t, o) in target.params.iter_mut().zip(&online.params) {
        *t = (1.0 - tau) * *t + tau * o;
    }
    Ok(())
}

/// Largest `|a - b| / max(|a|, |b|, floor)` over paired entries.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn small(input: usize, seed: u64) -> BranchingNet {
        BranchingNet::new(NetShape::with_hidden(input, &[16, 12], 8, 6), seed).unwrap()
    }

    fn randomize_biases(net: &mut BranchingNet, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = net.layout.clone();
        let all = layout.trunk.iter().chain(&layout.value).chain(layout.heads.iter().flatten());
        for d in all {
            for b in &mut net.params[d.bias()..d.bias() + d.output] {
                *b = rng.random_range(-0.3..0.3);
            }
        }
    }

    /// Overwrite the network so that V(s) = `v` and branch k has advantages
    /// `adv[k]` for every input: zero all weights, keep only output biases.
    fn constant_net(v: f64, adv: &[[f64; 4]]) -> BranchingNet {
        let mut net = small(3, 0);
        net.params.iter_mut().for_each(|p| *p = 0.0);
        let vo = net.layout.value[1];
        net.params[vo.bias()] = v;
        for (k, a) in adv.iter().enumerate() {
            let o = net.layout.heads[k][1];
            net.params[o.bias()..o.bias() + 4].copy_from_slice(a);
        }
        net
    }

    #[test]
    fn dueling_aggregation_example() {
        let net = constant_net(1.0, &[[1.0, 2.0, 3.0, 4.0], [7.0; 4], [0.0; 4], [0.0; 4], [0.0; 4]]);
        let out = net.forward(&[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(out.q_branch(0), &[-0.5, 0.5, 1.5, 2.5]);
        // Equal advantages collapse to V.
        assert_eq!(out.q_branch(1), &[1.0; 4]);
    }

    #[test]
    fn dimension_mismatch() {
        let net = small(3, 1);
        assert!(matches!(
            net.forward(&[1.0, 2.0]),
            Err(NeuralError::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn parameter_count() {
        let shape = NetShape::with_hidden(10, &[8, 6], 4, 3);
        let net = BranchingNet::new(shape, 0).unwrap();
        let trunk = 8 * 11 + 6 * 9;
        let value = 4 * 7 + 5;
        let heads = 5 * (3 * 7 + 4 * 4);
        assert_eq!(net.len(), trunk + value + heads);
        assert!(BranchingNet::new(NetShape::with_hidden(0, &[8], 4, 3), 0).is_err());
    }

    #[test]
    fn single_branch_loss() {
        let net = constant_net(1.0, &[[1.0, 2.0, 3.0, 4.0], [0.0; 4], [0.0; 4], [0.0; 4], [0.0; 4]]);
        let obs = [0.0; 3];
        // Q_0(., 2) = 1.5, so a target of 3.5 leaves an error of 2.
        let s = Sample {
            obs: &obs,
            actions: &[2, 0, 0, 0, 0],
            targets: &[3.5, 0.0, 0.0, 0.0, 0.0],
            mask: &[true, false, false, false, false],
        };
        assert_eq!(net.loss(&[s]).unwrap(), 4.0);
    }

    #[test]
    fn zero_error_gives_zero_gradient() {
        let net = small(4, 3);
        let obs = [0.5, -0.2, 1.0, 0.1];
        let out = net.forward(&obs).unwrap();
        let actions = [1, 3, 0, 2, 1];
        let targets: Vec<f64> = (0..5).map(|k| out.q_branch(k)[actions[k]]).collect();
        let s = Sample {
            obs: &obs,
            actions: &actions,
            targets: &targets,
            mask: &[true, true, false, true, true],
        };
        let (loss, grad) = net.loss_and_gradients(&[s]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| *g == 0.0));
        let fd = finite_difference_gradient(&net, &[s], 1e-5).unwrap();
        assert!(fd.iter().all(|g| g.abs() < 1e-9));
    }

    #[test]
    fn all_idle_mask_is_an_error() {
        let net = small(2, 0);
        let s = Sample {
            obs: &[0.0, 0.0],
            actions: &[0; 5],
            targets: &[0.0; 5],
            mask: &[false; 5],
        };
        assert!(matches!(net.loss_and_gradients(&[s]), Err(NeuralError::AllIdle(0))));
    }

    #[test]
    fn central_difference_on_quadratic() {
        let f = |x: &[f64]| 3.0 * x[0] * x[0] + x[0] * x[1] - 2.0 * x[1];
        let x = [0.7, -1.3];
        let g = central_difference(f, &x, 1e-4);
        // Exact for a quadratic up to rounding.
        assert!((g[0] - (6.0 * 0.7 - 1.3)).abs() < 1e-8);
        assert!((g[1] - (0.7 - 2.0)).abs() < 1e-8);
    }

    #[test]
    fn soft_update_endpoints() {
        let online = small(3, 1);
        let mut target = small(3, 2);
        let before = target.clone();
        soft_update(&mut target, &online, 0.0).unwrap();
        assert_eq!(target, before);
        soft_update(&mut target, &online, 1.0).unwrap();
        assert_eq!(target.params(), online.params());
        assert!(soft_update(&mut target, &online, 1.5).is_err());

        let mut t = constant_net(0.0, &[[0.0; 4]; 5]);
        let o = constant_net(1.0, &[[0.0; 4]; 5]);
        soft_update(&mut t, &o, 0.001).unwrap();
        assert_eq!(t.forward(&[0.0; 3]).unwrap().v, 0.001);
    }

    fn random_batch(rng: &mut ChaCha8Rng, input: usize, n: usize) -> Vec<(Vec<f64>, Vec<usize>, Vec<f64>, Vec<bool>)> {
        (0..n)
            .map(|_| {
                let obs: Vec<f64> = (0..input).map(|_| rng.random_range(-1.0..1.0)).collect();
                let actions: Vec<usize> = (0..5).map(|_| rng.random_range(0..4)).collect();
                let targets: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mut mask: Vec<bool> = (0..5).map(|_| rng.random_bool(0.6)).collect();
                if !mask.contains(&true) {
                    mask[rng.random_range(0..5)] = true;
                }
                (obs, actions, targets, mask)
            })
            .collect()
    }

    fn as_samples(data: &[(Vec<f64>, Vec<usize>, Vec<f64>, Vec<bool>)]) -> Vec<Sample<'_>> {
        data.iter()
            .map(|(o, a, t, m)| Sample {
                obs: o,
                actions: a,
                targets: t,
                mask: m,
            })
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (seed, n) in [(1u64, 1usize), (2, 32), (3, 7)] {
            let mut net = small(6, seed);
            randomize_biases(&mut net, seed + 100);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = random_batch(&mut rng, 6, n);
            let batch = as_samples(&data);
            let (_, analytic) = net.loss_and_gradients(&batch).unwrap();
            let numeric = finite_difference_gradient(&net, &batch, 1e-5).unwrap();
            let err = max_relative_error(&analytic, &numeric, 1e-6);
            assert!(err < 1e-4, "batch {n}: max relative error {err}");
        }
    }

    #[test]
    fn idle_heads_get_exactly_zero_gradient() {
        let net = small(5, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut data = random_batch(&mut rng, 5, 8);
        for d in &mut data {
            d.3[2] = false;
            d.3[0] = true;
        }
        let (_, grad) = net.loss_and_gradients(&as_samples(&data)).unwrap();
        assert!(grad[net.head_range(2)].iter().all(|g| *g == 0.0));
        assert!(grad[net.head_range(0)].iter().any(|g| *g != 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn aggregation_identity_and_shift_invariance(seed in any::<u64>(), shift in -5.0f64..5.0, k in 0usize..5) {
            let net = small(4, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let obs: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let out = net.forward(&obs).unwrap();
            for b in 0..5 {
                let a = out.a_branch(b);
                let mean = a.iter().sum::<f64>() / 4.0;
                for i in 0..4 {
                    prop_assert!((out.q_branch(b)[i] - (out.v + a[i] - mean)).abs() <= 1e-12);
                }
            }
            let mut shifted = net.clone();
            let o = shifted.layout.heads[k][1];
            for bias in &mut shifted.params[o.bias()..o.bias() + 4] {
                *bias += shift;
            }
            let out2 = shifted.forward(&obs).unwrap();
            for (x, y) in out.q.iter().zip(&out2.q) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
            prop_assert_eq!(out.argmax(k), out2.argmax(k));
        }
    }
}
