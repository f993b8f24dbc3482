//! Dense feed-forward networks with sigmoid/linear layers, backpropagation,
//! Adam and a step learning-rate schedule.
//!
//! Batches are row-major: one sample per row. Layer weights are stored as
//! `out x in` matrices so a layer computes `act(x Wᵀ + b)`.
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{write_atomic, ByteReader};

pub const KNET_MAGIC: &[u8; 5] = b"KNET1";
pub const KNET_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Sigmoid,
    Linear,
}

impl Activation {
    fn code(self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::Sigmoid => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Activation::Linear),
            1 => Ok(Activation::Sigmoid),
            other => Err(Error::Format(format!("unknown activation code {other}"))),
        }
    }

    fn apply(self, z: &mut Array2<f64>) {
        if self == Activation::Sigmoid {
            z.mapv_inplace(sigmoid);
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `out x in`
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet {
    pub layers: Vec<Layer>,
}

/// Parameter-shaped container used for gradients and optimizer moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Gradients {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect(),
            biases: net.layers.iter().map(|l| Array1::zeros(l.biases.len())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    /// All entries flattened, layer by layer (weights then biases).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.flatten().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Intermediate values of a batched forward pass, kept for backprop.
pub struct Tape {
    /// `values[0]` is the input, `values[l + 1]` the output of layer `l`.
    pub values: Vec<Array2<f64>>,
}

impl Tape {
    pub fn output(&self) -> &Array2<f64> {
        self.values.last().expect("tape has at least the input")
    }
}

impl DenseNet {
    /// Random network with weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], activations: &[Activation], rng: &mut R) -> Result<Self> {
        let mut net = DenseNet::zeros(dims, activations)?;
        for layer in net.layers.iter_mut() {
            let bound = 1.0 / (layer.weights.ncols() as f64).sqrt();
            layer.weights.mapv_inplace(|_| rng.random_range(-bound..=bound));
            layer.biases.mapv_inplace(|_| rng.random_range(-bound..=bound));
        }
        Ok(net)
    }

    pub fn seeded(dims: &[usize], activations: &[Activation], seed: u64) -> Result<Self> {
        DenseNet::new(dims, activations, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn zeros(dims: &[usize], activations: &[Activation]) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::ShapeMismatch(format!(
                "{} layer dims need {} activations, got {}",
                dims.len(),
                dims.len().saturating_sub(1),
                activations.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::ShapeMismatch("layer dimensions must be positive".into()));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| Layer {
                weights: Array2::zeros((w[1], w[0])),
                biases: Array1::zeros(w[1]),
                activation,
            })
            .collect();
        Ok(DenseNet { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weights.nrows()
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.weights.nrows()));
        dims
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "network expects {} inputs, got {cols}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let batch = ArrayView2::from_shape((1, x.len()), x).expect("1-row view");
        Ok(self.forward_batch(batch)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let mut cur = x.to_owned();
        for layer in &self.layers {
            let mut z = cur.dot(&layer.weights.t());
            z += &layer.biases;
            layer.activation.apply(&mut z);
            cur = z;
        }
        Ok(cur)
    }

    pub fn forward_tape(&self, x: ArrayView2<f64>) -> Result<Tape> {
        self.check_input(x.ncols())?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x.to_owned());
        for layer in &self.layers {
            let mut z = values.last().unwrap().dot(&layer.weights.t());
            z += &layer.biases;
            layer.activation.apply(&mut z);
            values.push(z);
        }
        Ok(Tape { values })
    }

    /// Backpropagate `d_out = ∂L/∂output` through a recorded pass. Returns the
    /// parameter gradients and `∂L/∂input`.
    pub fn backward(&self, tape: &Tape, d_out: &Array2<f64>) -> Result<(Gradients, Array2<f64>)> {
        if d_out.raw_dim() != tape.output().raw_dim() {
            return Err(Error::ShapeMismatch("output gradient shape differs from tape output".into()));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut delta = d_out.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            if layer.activation == Activation::Sigmoid {
                Zip::from(&mut delta)
                    .and(&tape.values[l + 1])
                    .for_each(|d, &s| *d *= s * (1.0 - s));
            }
            grads.weights[l] = delta.t().dot(&tape.values[l]);
            grads.biases[l] = delta.sum_axis(Axis(0));
            delta = delta.dot(&layer.weights);
        }
        Ok((grads, delta))
    }

    /// Parameters flattened in the same order as [`Gradients::flatten`].
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.biases.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::ShapeMismatch("parameter vector length".into()));
        }
        let mut it = params.iter();
        for l in self.layers.iter_mut() {
            l.weights.iter_mut().for_each(|w| *w = *it.next().unwrap());
            l.biases.iter_mut().for_each(|b| *b = *it.next().unwrap());
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.biases.iter()).all(|v| v.is_finite()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.param_count());
        out.extend_from_slice(KNET_MAGIC);
        out.extend_from_slice(&KNET_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            out.extend_from_slice(&(l.weights.ncols() as u32).to_le_bytes());
            out.extend_from_slice(&(l.weights.nrows() as u32).to_le_bytes());
            out.push(l.activation.code());
        }
        for l in &self.layers {
            for w in l.weights.iter() {
                out.extend_from_slice(&w.to_le_bytes());
            }
            for b in l.biases.iter() {
                out.extend_from_slice(&b.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(5)? != KNET_MAGIC {
            return Err(Error::Format("missing KNET1 magic".into()));
        }
        let version = r.u32()?;
        if version != KNET_VERSION {
            return Err(Error::Version {
                what: "KNET1 weight file",
                found: version,
                expected: KNET_VERSION,
            });
        }
        let count = r.u32()? as usize;
        if count == 0 {
            return Err(Error::Format("network without layers".into()));
        }
        let mut dims = Vec::with_capacity(count + 1);
        let mut acts = Vec::with_capacity(count);
        for l in 0..count {
            let input = r.u32()? as usize;
            let output = r.u32()? as usize;
            if l == 0 {
                dims.push(input);
            } else if dims[l] != input {
                return Err(Error::Format(format!("layer {l} input does not chain")));
            }
            dims.push(output);
            acts.push(Activation::from_code(r.u8()?)?);
        }
        let mut net = DenseNet::zeros(&dims, &acts)?;
        if r.remaining() != 8 * net.param_count() {
            return Err(Error::Format("weight payload has the wrong length".into()));
        }
        for l in net.layers.iter_mut() {
            for w in l.weights.iter_mut() {
                *w = r.f64()?;
            }
            for b in l.biases.iter_mut() {
                *b = r.f64()?;
            }
        }
        Ok(net)
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        DenseNet::from_bytes(&fs::read(path)?)
    }
}

/// A loss on network outputs: returns the batch loss and `∂L/∂output`.
pub trait Loss {
    fn value_and_grad(&self, output: &Array2<f64>, target: ArrayView2<f64>) -> (f64, Array2<f64>);
}

/// Batch mean of the squared Euclidean error, `1/B Σ ||ŷ - y||²`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Mse;

impl Loss for Mse {
    fn value_and_grad(&self, output: &Array2<f64>, target: ArrayView2<f64>) -> (f64, Array2<f64>) {
        let b = output.nrows().max(1) as f64;
        let diff = output - &target;
        let value = diff.iter().map(|d| d * d).sum::<f64>() / b;
        (value, diff * (2.0 / b))
    }
}

/// A base loss plus `weight * penalty(output)`.
pub struct Penalized<L, P> {
    pub base: L,
    pub weight: f64,
    pub penalty: P,
}

impl<L, P> Loss for Penalized<L, P>
where
    L: Loss,
    P: Fn(&Array2<f64>) -> (f64, Array2<f64>),
{
    fn value_and_grad(&self, output: &Array2<f64>, target: ArrayView2<f64>) -> (f64, Array2<f64>) {
        let (v, mut g) = self.base.value_and_grad(output, target);
        if self.weight == 0.0 {
            return (v, g);
        }
        let (pv, pg) = (self.penalty)(output);
        g.scaled_add(self.weight, &pg);
        (v + self.weight * pv, g)
    }
}

/// Loss value and exact parameter gradients on one batch.
pub fn grad(
    net: &DenseNet,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    loss: &dyn Loss,
) -> Result<(f64, Gradients)> {
    if x.nrows() != y.nrows() || y.ncols() != net.output_dim() {
        return Err(Error::ShapeMismatch(format!(
            "batch of {} inputs / {} targets of width {} for a net with {} outputs",
            x.nrows(),
            y.nrows(),
            y.ncols(),
            net.output_dim()
        )));
    }
    let tape = net.forward_tape(x)?;
    let (value, d_out) = loss.value_and_grad(tape.output(), y);
    let (grads, _) = net.backward(&tape, &d_out)?;
    Ok((value, grads))
}

/// Adam optimizer state for one network.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(net: &DenseNet) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients, lr: f64) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (l, layer) in net.layers.iter_mut().enumerate() {
            Zip::from(&mut layer.weights)
                .and(&grads.weights[l])
                .and(&mut self.m.weights[l])
                .and(&mut self.v.weights[l])
                .for_each(|p, &g, m, v| update(p, g, m, v));
            Zip::from(&mut layer.biases)
                .and(&grads.biases[l])
                .and(&mut self.m.biases[l])
                .and(&mut self.v.biases[l])
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_drop_epoch: Option<usize>,
    pub lr_drop_factor: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 64,
            lr: 1e-3,
            lr_drop_epoch: None,
            lr_drop_factor: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter("epochs and batch size must be positive".into()));
        }
        if !(self.lr_drop_factor > 0.0 && self.lr_drop_factor <= 1.0) {
            return Err(Error::InvalidParameter("lr_drop_factor must be in (0, 1]".into()));
        }
        if !(self.lr >= 0.0) {
            return Err(Error::InvalidParameter("lr must be non-negative".into()));
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_drop_epoch {
            Some(drop) if epoch >= drop => self.lr * self.lr_drop_factor,
            _ => self.lr,
        }
    }
}

/// Per-epoch train and test losses.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub train: Vec<f64>,
    pub test: Vec<f64>,
}

impl LossHistory {
    pub fn final_test(&self) -> f64 {
        self.test.last().copied().unwrap_or(f64::NAN)
    }

    /// CSV with header `epoch,train_loss,test_loss` (1-based epochs).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,test_loss\n");
        for (e, (tr, te)) in self.train.iter().zip(&self.test).enumerate() {
            out.push_str(&format!("{},{:.17e},{:.17e}\n", e + 1, tr, te));
        }
        out
    }
}

/// Seeded mini-batch loop shared by every trainer.
///
/// `step(batch_indices, lr)` updates the model on one batch; `evaluate()`
/// returns `(train_loss, test_loss)` after each epoch.
pub fn run_epochs<S, E>(cfg: &TrainConfig, n_train: usize, mut step: S, mut evaluate: E) -> Result<LossHistory>
where
    S: FnMut(&[usize], f64) -> Result<()>,
    E: FnMut() -> Result<(f64, f64)>,
{
    cfg.validate()?;
    if n_train == 0 {
        return Err(Error::EmptyData("no training samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut history = LossHistory::default();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            step(batch, lr)?;
        }
        let (train, test) = evaluate()?;
        if !train.is_finite() || !test.is_finite() {
            return Err(Error::NonFinite(format!("loss diverged at epoch {}", epoch + 1)));
        }
        history.train.push(train);
        history.test.push(test);
    }
    Ok(history)
}

/// Supervised regression data split into train and test sets.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub x_train: Array2<f64>,
    pub y_train: Array2<f64>,
    pub x_test: Array2<f64>,
    pub y_test: Array2<f64>,
}

pub(crate) fn gather(a: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    a.select(Axis(0), rows)
}

/// Batch loss of a net over a whole data matrix.
pub fn evaluate_loss(net: &DenseNet, x: &Array2<f64>, y: &Array2<f64>, loss: &dyn Loss) -> Result<f64> {
    if x.nrows() == 0 {
        return Ok(0.0);
    }
    let out = net.forward_batch(x.view())?;
    Ok(loss.value_and_grad(&out, y.view()).0)
}

/// Train with Adam on `loss`. The network is initialized from `cfg.seed` by
/// the caller; `train` only consumes the seed for shuffling.
pub fn train_with_loss(
    mut net: DenseNet,
    data: &Dataset,
    cfg: &TrainConfig,
    loss: &dyn Loss,
) -> Result<(DenseNet, LossHistory)> {
    if data.x_train.nrows() != data.y_train.nrows() || data.x_test.nrows() != data.y_test.nrows() {
        return Err(Error::ShapeMismatch("inputs and targets have different lengths".into()));
    }
    let mut adam = Adam::new(&net);
    let history = {
        let net_cell = std::cell::RefCell::new(&mut net);
        run_epochs(
            cfg,
            data.x_train.nrows(),
            |batch, lr| {
                let mut net = net_cell.borrow_mut();
                let x = gather(&data.x_train, batch);
                let y = gather(&data.y_train, batch);
                let (_, g) = grad(&net, x.view(), y.view(), loss)?;
                adam.step(&mut net, &g, lr);
                Ok(())
            },
            || {
                let net = net_cell.borrow();
                Ok((
                    evaluate_loss(&net, &data.x_train, &data.y_train, loss)?,
                    evaluate_loss(&net, &data.x_test, &data.y_test, loss)?,
                ))
            },
        )?
    };
    Ok((net, history))
}

/// Plain mean-squared-error training.
pub fn train(net: DenseNet, data: &Dataset, cfg: &TrainConfig) -> Result<(DenseNet, LossHistory)> {
    train_with_loss(net, data, cfg, &Mse)
}

/// Index of the member with the smallest finite score.
pub fn select_best(scores: &[f64]) -> Option<usize> {
    scores
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny_net(seed: u64) -> DenseNet {
        DenseNet::seeded(
            &[3, 5, 4, 2],
            &[Activation::Sigmoid, Activation::Sigmoid, Activation::Linear],
            seed,
        )
        .unwrap()
    }

    fn random_batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    /// Independent reimplementation: explicit loops, no ndarray products.
    fn oracle_forward(net: &DenseNet, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for l in &net.layers {
            let mut next = vec![0.0; l.weights.nrows()];
            for (o, out) in next.iter_mut().enumerate() {
                let mut z = l.biases[o];
                for (i, xi) in cur.iter().enumerate() {
                    z += l.weights[[o, i]] * xi;
                }
                *out = match l.activation {
                    Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
                    Activation::Linear => z,
                };
            }
            cur = next;
        }
        cur
    }

    #[test]
    fn zero_net_with_sigmoid_output_is_half() {
        let net = DenseNet::zeros(&[4, 3, 2], &[Activation::Sigmoid, Activation::Sigmoid]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn identity_linear_layer() {
        let mut net = DenseNet::zeros(&[3, 3], &[Activation::Linear]).unwrap();
        net.layers[0].weights = Array2::eye(3);
        assert_eq!(net.forward(&[1.5, -2.0, 0.25]).unwrap(), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn forward_matches_loop_oracle() {
        let net = tiny_net(4);
        let x = [0.3, -0.7, 1.1];
        let got = net.forward(&x).unwrap();
        let want = oracle_forward(&net, &x);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let net = tiny_net(0);
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(Error::ShapeMismatch(_))));
        assert!(DenseNet::zeros(&[3, 2], &[]).is_err());
    }

    fn fd_check(net: &DenseNet, x: &Array2<f64>, y: &Array2<f64>, loss: &dyn Loss) -> f64 {
        let (_, g) = grad(net, x.view(), y.view(), loss).unwrap();
        let analytic = g.flatten();
        let params = net.params_flat();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for k in 0..params.len() {
            let mut p = params.clone();
            p[k] += h;
            let mut plus = net.clone();
            plus.set_params_flat(&p).unwrap();
            p[k] -= 2.0 * h;
            let mut minus = net.clone();
            minus.set_params_flat(&p).unwrap();
            let fp = evaluate_loss(&plus, x, y, loss).unwrap();
            let fm = evaluate_loss(&minus, x, y, loss).unwrap();
            let numeric = (fp - fm) / (2.0 * h);
            let rel = (numeric - analytic[k]).abs() / numeric.abs().max(analytic[k].abs()).max(1e-3);
            worst = worst.max(rel);
        }
        worst
    }

    #[test]
    fn mse_gradient_matches_finite_differences() {
        let net = tiny_net(9);
        let x = random_batch(6, 3, 1);
        let y = random_batch(6, 2, 2);
        assert!(fd_check(&net, &x, &y, &Mse) < 1e-6);
    }

    #[test]
    fn penalized_gradient_matches_finite_differences() {
        let net = tiny_net(10);
        let x = random_batch(5, 3, 3);
        let y = random_batch(5, 2, 4);
        let loss = Penalized {
            base: Mse,
            weight: 0.7,
            penalty: |out: &Array2<f64>| {
                let b = out.nrows() as f64;
                (out.iter().map(|v| v.powi(4)).sum::<f64>() / b, out.mapv(|v| 4.0 * v.powi(3) / b))
            },
        };
        assert!(fd_check(&net, &x, &y, &loss) < 1e-6);
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let net = tiny_net(11);
        let x = random_batch(4, 3, 5);
        let y = net.forward_batch(x.view()).unwrap();
        let (v, g) = grad(&net, x.view(), y.view(), &Mse).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn zero_penalty_weight_equals_plain_mse() {
        let net = tiny_net(12);
        let x = random_batch(4, 3, 6);
        let y = random_batch(4, 2, 7);
        let loss = Penalized {
            base: Mse,
            weight: 0.0,
            penalty: |out: &Array2<f64>| (1.0, out.mapv(|_| 1.0)),
        };
        assert_eq!(
            grad(&net, x.view(), y.view(), &loss).unwrap(),
            grad(&net, x.view(), y.view(), &Mse).unwrap()
        );
    }

    #[test]
    fn adam_with_zero_lr_is_noop() {
        let mut net = tiny_net(13);
        let before = net.clone();
        let x = random_batch(4, 3, 8);
        let y = random_batch(4, 2, 9);
        let (_, g) = grad(&net, x.view(), y.view(), &Mse).unwrap();
        let mut adam = Adam::new(&net);
        for _ in 0..3 {
            adam.step(&mut net, &g, 0.0);
        }
        assert_eq!(net, before);
    }

    fn dataset(x: Array2<f64>, y: Array2<f64>, xt: Array2<f64>, yt: Array2<f64>) -> Dataset {
        Dataset {
            x_train: x,
            y_train: y,
            x_test: xt,
            y_test: yt,
        }
    }

    #[test]
    fn learns_constant_half() {
        let x = random_batch(64, 2, 10);
        let y = Array2::from_elem((64, 1), 0.5);
        let data = dataset(x.clone(), y.clone(), x, y);
        let net = DenseNet::seeded(&[2, 8, 1], &[Activation::Sigmoid, Activation::Sigmoid], 1).unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 16,
            lr: 1e-2,
            ..TrainConfig::default()
        };
        let (_, hist) = train(net, &data, &cfg).unwrap();
        assert!(hist.train.last().unwrap() < &1e-4, "{:?}", hist.train.last());
    }

    #[test]
    fn convex_problem_loss_is_non_increasing() {
        // linear net, quadratic loss, small lr
        let x = random_batch(32, 3, 20);
        let w = array![[1.0, -2.0, 0.5]];
        let y = x.dot(&w.t()) + 0.3;
        let data = dataset(x.clone(), y.clone(), x, y);
        let net = DenseNet::seeded(&[3, 1], &[Activation::Linear], 3).unwrap();
        let cfg = TrainConfig {
            epochs: 60,
            batch_size: 32,
            lr: 1e-3,
            ..TrainConfig::default()
        };
        let (_, hist) = train(net, &data, &cfg).unwrap();
        for pair in hist.train.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "{pair:?}");
        }
    }

    #[test]
    fn identical_seeds_are_bit_identical() {
        let x = random_batch(50, 2, 30);
        let y = x.map_axis(Axis(1), |r| (r[0] * r[1]).sin()).insert_axis(Axis(1));
        let data = dataset(x.clone(), y.clone(), x, y);
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 8,
            seed: 42,
            ..TrainConfig::default()
        };
        let mk = || DenseNet::seeded(&[2, 6, 1], &[Activation::Sigmoid, Activation::Linear], 42).unwrap();
        let (n1, h1) = train(mk(), &data, &cfg).unwrap();
        let (n2, h2) = train(mk(), &data, &cfg).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(n1, n2);
    }

    #[test]
    fn lr_schedule_drops_once() {
        let cfg = TrainConfig {
            lr: 1e-3,
            lr_drop_epoch: Some(300),
            lr_drop_factor: 0.1,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.lr_at(299), 1e-3);
        assert!((cfg.lr_at(300) - 1e-4).abs() < 1e-18);
        let bad = TrainConfig {
            lr_drop_factor: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn knet_roundtrip_and_version_check() {
        let net = tiny_net(14);
        let bytes = net.to_bytes();
        assert_eq!(&bytes[..5], b"KNET1");
        assert_eq!(DenseNet::from_bytes(&bytes).unwrap(), net);
        let mut bad = bytes.clone();
        bad[5] = 9;
        assert!(matches!(DenseNet::from_bytes(&bad), Err(Error::Version { .. })));
    }

    #[test]
    fn select_best_skips_nan() {
        assert_eq!(select_best(&[0.3, f64::NAN, 0.1, 0.2]), Some(2));
        assert_eq!(select_best(&[]), None);
    }
}
