//! Discrete-time latent dynamics: the time map `h(t+τ) = F(h(t))`, the phase
//! map `Δφ_x(t+τ) = G(h(t))`, closed-loop rollout and decoding.
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::{self, Activation, Dataset, DenseNet, LossHistory, TrainConfig};
use crate::reduction::Autoencoder;
use crate::series::{write_atomic, SnapshotSeries};
use crate::spectral::{FlowParams, Grid, SpectralField};
use crate::symmetry::{phase_shift, wrap_angle};

/// Latent trajectory sampled every `tau` time units.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSeries {
    /// One latent vector per row.
    pub h: Array2<f64>,
    /// Unwrapped x-phase in radians.
    pub phi_x: Vec<f64>,
    pub tau: f64,
}

impl LatentSeries {
    pub fn new(h: Array2<f64>, phi_x: Vec<f64>, tau: f64) -> Result<Self> {
        if h.nrows() != phi_x.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} latent rows but {} phases",
                h.nrows(),
                phi_x.len()
            )));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter("tau must be positive".into()));
        }
        Ok(LatentSeries { h, phi_x, tau })
    }

    pub fn len(&self) -> usize {
        self.h.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.h.nrows() == 0
    }

    pub fn d_h(&self) -> usize {
        self.h.ncols()
    }

    pub fn slice(&self, start: usize, end: usize) -> LatentSeries {
        LatentSeries {
            h: self.h.slice(s![start..end, ..]).to_owned(),
            phi_x: self.phi_x[start..end].to_vec(),
            tau: self.tau,
        }
    }

    /// Phase increments `wrap(φ(t+τ) - φ(t))`, one per consecutive pair.
    pub fn phase_increments(&self) -> Vec<f64> {
        self.phi_x.windows(2).map(|w| wrap_angle(w[1] - w[0])).collect()
    }

    /// Chronological split into train and test parts.
    pub fn split(&self, train_fraction: f64) -> (LatentSeries, LatentSeries) {
        let cut = ((self.len() as f64) * train_fraction).round() as usize;
        let cut = cut.clamp(0, self.len());
        (self.slice(0, cut), self.slice(cut, self.len()))
    }

    /// CSV with header `t,h_1,...,h_dh,phi_x`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for k in 1..=self.d_h() {
            write!(out, ",h_{k}").unwrap();
        }
        out.push_str(",phi_x\n");
        for (i, row) in self.h.rows().into_iter().enumerate() {
            write!(out, "{}", i as f64 * self.tau).unwrap();
            for v in row {
                write!(out, ",{v:e}").unwrap();
            }
            writeln!(out, ",{:e}", self.phi_x[i]).unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader.headers().map_err(csv_err)?.clone();
        let d_h = headers.len().checked_sub(2).filter(|&d| d > 0).ok_or_else(|| {
            Error::Format("latent CSV needs t, at least one h column and phi_x".into())
        })?;
        let mut t = Vec::new();
        let mut h = Vec::new();
        let mut phi = Vec::new();
        for record in reader.records() {
            let record = record.map_err(csv_err)?;
            let vals: Vec<f64> = record
                .iter()
                .map(|f| f.trim().parse::<f64>().map_err(|e| Error::Format(e.to_string())))
                .collect::<Result<_>>()?;
            t.push(vals[0]);
            h.extend_from_slice(&vals[1..=d_h]);
            phi.push(vals[d_h + 1]);
        }
        let tau = if t.len() > 1 { t[1] - t[0] } else { 1.0 };
        let h = Array2::from_shape_vec((phi.len(), d_h), h).map_err(|e| Error::Format(e.to_string()))?;
        LatentSeries::new(h, phi, tau)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Per-component affine standardization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Fit to the columns of `x`; components with zero spread keep unit scale.
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let mean = x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()));
        let std = x.std_axis(Axis(0), 0.0);
        Standardizer {
            mean: mean.to_vec(),
            std: std.iter().map(|&s| if s > 1e-12 { s } else { 1.0 }).collect(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let m = Array1::from(self.mean.clone());
        let s = Array1::from(self.std.clone());
        (&x - &m) / &s
    }

    pub fn invert(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let m = Array1::from(self.mean.clone());
        let s = Array1::from(self.std.clone());
        &x * &s + &m
    }
}

/// A net wrapped with input and output standardization.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledNet {
    pub net: DenseNet,
    pub input: Standardizer,
    pub output: Standardizer,
}

impl ScaledNet {
    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let y = self.net.forward_batch(self.input.apply(x).view())?;
        Ok(self.output.invert(y.view()))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Ok(self.predict_batch(view)?.into_raw_vec_and_offset().0)
    }

    /// Mean over rows of `||pred - y||²` in unscaled units.
    pub fn mse(&self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<f64> {
        if x.nrows() == 0 {
            return Ok(0.0);
        }
        let pred = self.predict_batch(x)?;
        Ok(pred.iter().zip(y.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.nrows() as f64)
    }

    /// Loss `mean ||pred - y||²` and its gradient with respect to the net
    /// parameters, in unscaled units.
    pub fn loss_and_grad(&self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<(f64, nnet::Gradients)> {
        let tape = self.net.forward_tape(self.input.apply(x).view())?;
        let pred = self.output.invert(tape.output().view());
        let b = x.nrows().max(1) as f64;
        let diff = &pred - &y;
        let value = diff.iter().map(|v| v * v).sum::<f64>() / b;
        let s = Array1::from(self.output.std.clone());
        let d_out = &diff * &s * (2.0 / b);
        let (g, _) = self.net.backward(&tape, &d_out)?;
        Ok((value, g))
    }
}

/// Hidden-layer widths of the two maps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapArch {
    pub f_hidden: Vec<usize>,
    pub g_hidden: Vec<usize>,
}

impl MapArch {
    /// `F: d_h:500:500:d_h`, `G: d_h:500:500:500:1`.
    pub fn full_scale() -> Self {
        MapArch {
            f_hidden: vec![500, 500],
            g_hidden: vec![500, 500, 500],
        }
    }

    pub fn desk_scale() -> Self {
        MapArch {
            f_hidden: vec![128, 128],
            g_hidden: vec![64, 64, 64],
        }
    }
}

fn sigmoid_then_linear(dims: &[usize]) -> Vec<Activation> {
    let mut acts = vec![Activation::Sigmoid; dims.len() - 1];
    *acts.last_mut().unwrap() = Activation::Linear;
    acts
}

fn dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut d = vec![input];
    d.extend_from_slice(hidden);
    d.push(output);
    d
}

/// Consecutive pairs `(h(t), h(t+τ))`.
pub fn map_pairs(series: &LatentSeries) -> (Array2<f64>, Array2<f64>) {
    let n = series.len().saturating_sub(1);
    (
        series.h.slice(s![..n, ..]).to_owned(),
        series.h.slice(s![1..n + 1, ..]).to_owned(),
    )
}

/// Pairs `(h(t), Δφ_x(t+τ))`.
pub fn phase_pairs(series: &LatentSeries) -> (Array2<f64>, Array2<f64>) {
    let n = series.len().saturating_sub(1);
    let dphi = Array2::from_shape_vec((n, 1), series.phase_increments()).expect("n increments");
    (series.h.slice(s![..n, ..]).to_owned(), dphi)
}

/// Result of an ensemble fit of a map.
#[derive(Clone, Debug)]
pub struct MapFit {
    pub best: ScaledNet,
    pub best_index: usize,
    pub seeds: Vec<u64>,
    pub test_mse: Vec<f64>,
    pub histories: Vec<LossHistory>,
}

fn fit_scaled(
    x_train: Array2<f64>,
    y_train: Array2<f64>,
    x_test: Array2<f64>,
    y_test: Array2<f64>,
    hidden: &[usize],
    cfg: &TrainConfig,
    n_models: usize,
) -> Result<MapFit> {
    if n_models == 0 {
        return Err(Error::InvalidParameter("n_models must be >= 1".into()));
    }
    if x_train.nrows() < 2 {
        return Err(Error::TooShort {
            needed: 3,
            got: x_train.nrows() + 1,
        });
    }
    let input = Standardizer::fit(x_train.view());
    let output = Standardizer::fit(y_train.view());
    let data = Dataset {
        x_train: input.apply(x_train.view()),
        y_train: output.apply(y_train.view()),
        x_test: input.apply(x_test.view()),
        y_test: output.apply(y_test.view()),
    };
    let layer_dims = dims(x_train.ncols(), hidden, y_train.ncols());
    let acts = sigmoid_then_linear(&layer_dims);
    let seeds: Vec<u64> = (0..n_models as u64).map(|k| cfg.seed + k).collect();
    let fits: Vec<Result<(DenseNet, LossHistory)>> = seeds
        .par_iter()
        .map(|&seed| {
            let net = DenseNet::seeded(&layer_dims, &acts, seed)?;
            nnet::train(
                net,
                &data,
                &TrainConfig {
                    seed,
                    ..cfg.clone()
                },
            )
        })
        .collect();
    let mut nets = Vec::new();
    let mut histories = Vec::new();
    let mut test_mse = Vec::new();
    for fit in fits {
        let (net, history) = fit?;
        let scaled = ScaledNet {
            net,
            input: input.clone(),
            output: output.clone(),
        };
        test_mse.push(scaled.mse(x_test.view(), y_test.view())?);
        nets.push(scaled);
        histories.push(history);
    }
    let best_index = nnet::select_best(&test_mse)
        .ok_or_else(|| Error::NonFinite("every ensemble member diverged".into()))?;
    Ok(MapFit {
        best: nets.swap_remove(best_index),
        best_index,
        seeds,
        test_mse,
        histories,
    })
}

/// Train `n_models` time maps and keep the one with the lowest one-step test MSE.
pub fn train_map(
    train: &LatentSeries,
    test: &LatentSeries,
    hidden: &[usize],
    cfg: &TrainConfig,
    n_models: usize,
) -> Result<MapFit> {
    let (xt, yt) = map_pairs(train);
    let (xv, yv) = map_pairs(test);
    fit_scaled(xt, yt, xv, yv, hidden, cfg, n_models)
}

/// Train `n_models` phase maps and keep the best by test MSE.
pub fn train_phase_map(
    train: &LatentSeries,
    test: &LatentSeries,
    hidden: &[usize],
    cfg: &TrainConfig,
    n_models: usize,
) -> Result<MapFit> {
    let (xt, yt) = phase_pairs(train);
    let (xv, yv) = phase_pairs(test);
    fit_scaled(xt, yt, xv, yv, hidden, cfg, n_models)
}

/// Iterate the maps from `(h0, phi0)`; `steps + 1` states are returned.
pub fn rollout(f: &ScaledNet, g: Option<&ScaledNet>, h0: &[f64], phi0: f64, steps: usize, tau: f64) -> Result<LatentSeries> {
    let d_h = h0.len();
    if f.net.input_dim() != d_h || f.net.output_dim() != d_h {
        return Err(Error::ShapeMismatch(format!(
            "time map is {}->{}, initial state has {d_h} components",
            f.net.input_dim(),
            f.net.output_dim()
        )));
    }
    let mut h = Array2::zeros((steps + 1, d_h));
    let mut phi = Vec::with_capacity(steps + 1);
    h.row_mut(0).assign(&ndarray::aview1(h0));
    phi.push(phi0);
    let mut current = h0.to_vec();
    for k in 1..=steps {
        let dphi = match g {
            Some(g) => g.predict(&current)?[0],
            None => 0.0,
        };
        current = f.predict(&current)?;
        let next_phi = phi[k - 1] + dphi;
        if !next_phi.is_finite() || current.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("latent state diverged at step {k}")));
        }
        h.row_mut(k).assign(&ndarray::aview1(&current));
        phi.push(next_phi);
    }
    LatentSeries::new(h, phi, tau)
}

/// Decode every latent state. With `apply_phase`, each snapshot is shifted
/// back to the lab frame by `e^{+i kx φ_x}`; otherwise it stays in the
/// aligned frame.
pub fn decode_rollout(
    ae: &Autoencoder,
    series: &LatentSeries,
    grid: Grid,
    params: FlowParams,
    apply_phase: bool,
) -> Result<SnapshotSeries> {
    if series.d_h() != ae.d_h {
        return Err(Error::ShapeMismatch(format!(
            "autoencoder has d_h = {}, series has {}",
            ae.d_h,
            series.d_h()
        )));
    }
    let mut data = ae.decode_batch(series.h.view())?;
    if apply_phase {
        for (i, mut row) in data.rows_mut().into_iter().enumerate() {
            let w = SpectralField::from_real(grid, row.as_slice().expect("contiguous"))?;
            let shifted = phase_shift(&w, -series.phi_x[i]).to_real();
            row.assign(&ndarray::aview1(&shifted));
        }
    }
    SnapshotSeries::from_array(grid, params, series.tau, data)
}

/// Everything needed to run the learned model, stored alongside the
/// autoencoder bundle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapMeta {
    pub tau: f64,
    pub d_h: usize,
    pub input: Standardizer,
    pub output: Standardizer,
    pub seeds: Vec<u64>,
    pub selected_seed: u64,
    pub test_mse: Vec<f64>,
}

impl MapFit {
    pub fn write(&self, dir: &Path, stem: &str, tau: f64) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.best.net.write_to(&dir.join(format!("{stem}.knet1")))?;
        let meta = MapMeta {
            tau,
            d_h: self.best.net.input_dim(),
            input: self.best.input.clone(),
            output: self.best.output.clone(),
            seeds: self.seeds.clone(),
            selected_seed: self.seeds[self.best_index],
            test_mse: self.test_mse.clone(),
        };
        write_atomic(
            &dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&meta)?.as_bytes(),
        )
    }
}

/// Load a map written by [`MapFit::write`].
pub fn read_map(dir: &Path, stem: &str) -> Result<(ScaledNet, MapMeta)> {
    let net = DenseNet::read_from(&dir.join(format!("{stem}.knet1")))?;
    let meta: MapMeta = serde_json::from_slice(&fs::read(dir.join(format!("{stem}.json")))?)?;
    if meta.input.mean.len() != net.input_dim() || meta.output.mean.len() != net.output_dim() {
        return Err(Error::Format(format!("{stem}.json does not match {stem}.knet1")));
    }
    Ok((
        ScaledNet {
            net,
            input: meta.input.clone(),
            output: meta.output.clone(),
        },
        meta,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduction::{fit_pca, AeArch};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear_system(steps: usize) -> LatentSeries {
        // rotation with decay, driven back out by restarting every 40 steps
        let a = [[0.9 * 0.6f64.cos(), -0.9 * 0.6f64.sin()], [0.9 * 0.6f64.sin(), 0.9 * 0.6f64.cos()]];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut h = Array2::zeros((steps, 2));
        let mut x = [1.0, 0.0];
        for i in 0..steps {
            if i % 40 == 0 {
                x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            }
            h[[i, 0]] = x[0];
            h[[i, 1]] = x[1];
            x = [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]];
        }
        LatentSeries::new(h, vec![0.0; steps], 5.0).unwrap()
    }

    fn tiny_net(d_in: usize, d_out: usize, seed: u64) -> ScaledNet {
        let d = dims(d_in, &[6, 5], d_out);
        ScaledNet {
            net: DenseNet::seeded(&d, &sigmoid_then_linear(&d), seed).unwrap(),
            input: Standardizer {
                mean: vec![0.3; d_in],
                std: vec![1.7; d_in],
            },
            output: Standardizer {
                mean: vec![-0.2; d_out],
                std: vec![0.4; d_out],
            },
        }
    }

    fn fd_error(net: &ScaledNet, x: ArrayView2<f64>, y: ArrayView2<f64>) -> f64 {
        let (_, g) = net.loss_and_grad(x, y).unwrap();
        let analytic = g.flatten();
        let params = net.net.params_flat();
        let mut worst = 0.0f64;
        for idx in 0..params.len() {
            let at = |delta: f64| {
                let mut probe = net.clone();
                let mut p = params.clone();
                p[idx] += delta;
                probe.net.set_params_flat(&p).unwrap();
                probe.loss_and_grad(x, y).unwrap().0
            };
            let fd = (at(1e-6) - at(-1e-6)) / 2e-6;
            worst = worst.max((fd - analytic[idx]).abs() / fd.abs().max(analytic[idx].abs()).max(1.0));
        }
        worst
    }

    #[test]
    fn map_and_phase_gradients_match_finite_differences() {
        let series = linear_system(12);
        let (x, y) = map_pairs(&series);
        assert!(fd_error(&tiny_net(2, 2, 1), x.view(), y.view()) < 1e-5);
        let mut s = series.clone();
        s.phi_x = (0..12).map(|i| 0.3 * i as f64 + (i as f64).sin()).collect();
        let (x, y) = phase_pairs(&s);
        assert!(fd_error(&tiny_net(2, 1, 2), x.view(), y.view()) < 1e-5);
    }

    #[test]
    fn scaled_loss_equals_unscaled_mse() {
        let series = linear_system(20);
        let (x, y) = map_pairs(&series);
        let net = tiny_net(2, 2, 4);
        let (value, _) = net.loss_and_grad(x.view(), y.view()).unwrap();
        assert!((value - net.mse(x.view(), y.view()).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn learns_a_stable_linear_system() {
        let series = linear_system(1600);
        let (train, test) = series.split(0.8);
        let cfg = TrainConfig {
            epochs: 150,
            batch_size: 32,
            lr: 3e-3,
            lr_drop_epoch: Some(100),
            lr_drop_factor: 0.1,
            seed: 0,
        };
        let fit = train_map(&train, &test, &[16, 16], &cfg, 1).unwrap();
        // pairs spanning a restart are unpredictable; score the others
        let (x, y) = map_pairs(&test);
        let keep: Vec<usize> = (0..x.nrows()).filter(|i| (i + train.len() + 1) % 40 != 0).collect();
        let mse = fit
            .best
            .mse(x.select(Axis(0), &keep).view(), y.select(Axis(0), &keep).view())
            .unwrap();
        assert!(mse < 1e-3, "one-step test MSE {mse}");
    }

    #[test]
    fn constant_phase_drift_is_learned() {
        let mut series = linear_system(400);
        series.phi_x = (0..400).map(|i| 0.25 * i as f64).collect();
        let (train, test) = series.split(0.8);
        let cfg = TrainConfig {
            epochs: 600,
            batch_size: 32,
            lr: 3e-3,
            lr_drop_epoch: Some(400),
            lr_drop_factor: 0.01,
            seed: 0,
        };
        let fit = train_phase_map(&train, &test, &[8, 8, 8], &cfg, 2).unwrap();
        for i in [0, 30, 60] {
            let out = fit.best.predict(test.h.row(i).as_slice().unwrap()).unwrap()[0];
            assert!((out - 0.25).abs() < 1e-4, "{out}");
        }
    }

    #[test]
    fn phase_increments_are_wrapped() {
        let s = LatentSeries::new(Array2::zeros((3, 1)), vec![3.0, -3.0, -2.5], 5.0).unwrap();
        let inc = s.phase_increments();
        assert!((inc[0] - (2.0 * std::f64::consts::PI - 6.0)).abs() < 1e-12);
        assert!((inc[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_step_rollout_is_the_initial_state() {
        let f = tiny_net(3, 3, 5);
        let out = rollout(&f, None, &[0.1, 0.2, 0.3], 1.5, 0, 5.0).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.phi_x, vec![1.5]);
        assert_eq!(out.h.row(0).to_vec(), vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn rollout_is_markov() {
        let f = tiny_net(3, 3, 6);
        let g = tiny_net(3, 1, 7);
        let full = rollout(&f, Some(&g), &[0.5, -0.1, 0.2], 0.0, 20, 5.0).unwrap();
        let mid = full.h.row(8).to_vec();
        let rest = rollout(&f, Some(&g), &mid, full.phi_x[8], 12, 5.0).unwrap();
        assert_eq!(rest.h, full.h.slice(s![8.., ..]).to_owned());
        assert_eq!(rest.phi_x, full.phi_x[8..].to_vec());
    }

    #[test]
    fn identity_map_gives_constant_series() {
        // linear 2-layer net with identity weights
        let mut net = DenseNet::zeros(&[2, 2], &[Activation::Linear]).unwrap();
        net.set_params_flat(&[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let f = ScaledNet {
            net,
            input: Standardizer::identity(2),
            output: Standardizer::identity(2),
        };
        let out = rollout(&f, None, &[0.7, -0.4], 0.2, 5, 5.0).unwrap();
        for row in out.h.rows() {
            assert_eq!(row.to_vec(), vec![0.7, -0.4]);
        }
        assert!(out.phi_x.iter().all(|&p| p == 0.2));
    }

    #[test]
    fn rollout_rejects_mismatched_state() {
        let f = tiny_net(3, 3, 8);
        assert!(matches!(rollout(&f, None, &[0.0; 2], 0.0, 3, 5.0), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn csv_roundtrip() {
        let mut s = linear_system(5);
        s.phi_x = vec![0.0, 0.1, -0.3, 7.0, 1e-9];
        let back = LatentSeries::from_csv(&s.to_csv()).unwrap();
        assert_eq!(back, s);
        assert!(s.to_csv().starts_with("t,h_1,h_2,phi_x\n0,"));
    }

    #[test]
    fn phase_applied_decode_keeps_diagnostics() {
        let grid = Grid::new(8, 8, 1.0).unwrap();
        let params = FlowParams::new(10.0, 2, 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut data = Array2::zeros((30, 64));
        for mut row in data.rows_mut() {
            row.assign(&ndarray::aview1(&SpectralField::random(grid, &mut rng).to_real()));
        }
        let pca = fit_pca(data.view(), true).unwrap();
        let arch = AeArch {
            enc_hidden: vec![6],
            dec_hidden: vec![6],
            pca_start: false,
        };
        let mut ae = Autoencoder::new(pca, 2, 1.0, &arch, 1).unwrap();
        // an untrained decoder puts energy on the unshiftable x-Nyquist column
        ae.bypass_decoder = true;
        let h = ae.encode_batch(data.slice(s![..4, ..])).unwrap();
        let series = LatentSeries::new(h, vec![0.0, 0.4, -1.3, 2.9], 5.0).unwrap();
        let aligned = decode_rollout(&ae, &series, grid, params, false).unwrap();
        let lab = decode_rollout(&ae, &series, grid, params, true).unwrap();
        for (a, b) in aligned.diagnostics().iter().zip(lab.diagnostics()) {
            assert!((a.ke - b.ke).abs() < 1e-10 && (a.d - b.d).abs() < 1e-10 && (a.i - b.i).abs() < 1e-10);
        }
        let single = decode_rollout(&ae, &series.slice(0, 1), grid, params, false).unwrap();
        assert_eq!(single.data.row(0).to_vec(), ae.decode(series.h.row(0).as_slice().unwrap()).unwrap());
    }

    #[test]
    fn map_bundle_roundtrip() {
        let series = linear_system(60);
        let (train, test) = series.split(0.8);
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let fit = train_map(&train, &test, &[4], &cfg, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        fit.write(dir.path(), "map", 5.0).unwrap();
        let (net, meta) = read_map(dir.path(), "map").unwrap();
        assert_eq!(net, fit.best);
        assert_eq!(meta.test_mse, fit.test_mse);
    }
}
