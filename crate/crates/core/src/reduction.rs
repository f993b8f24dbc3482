//! PCA basis and the hybrid PCA-residual autoencoder.
//!
//! With `z = Uᵀ(ω - m)` the full set of PCA coefficients, the encoder learns a
//! correction to the leading projection and the decoder learns the residual
//! of the reconstruction:
//!
//! ```text
//! h  = z[..d_h] + E(z)
//! ω̃  = U([h; 0] + D(h)) + m
//! L  = ||ω - ω̃||² + α_L ||E(z) + D(h)[..d_h]||²
//! ```
//!
//! Both nets see inputs divided by a global scale `s` and their outputs are
//! multiplied by `s`, so `E(z) = s Ê(z/s)` and `D(h) = s D̂(h/s)`.
use std::fs;
use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::{gather, run_epochs, Activation, Adam, DenseNet, Gradients, LossHistory, TrainConfig};
use crate::series::{write_atomic, ByteReader};

pub const PCA_MAGIC: &[u8; 5] = b"KPCA1";
pub const PCA_VERSION: u32 = 1;

/// Orthonormal PCA basis of a snapshot matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaBasis {
    /// `N x N`, columns ordered by decreasing singular value.
    pub u: Array2<f64>,
    pub singular_values: Array1<f64>,
    /// Training mean (all zeros when `centered` is false).
    pub mean: Array1<f64>,
    pub centered: bool,
}

/// PCA of `data` (one snapshot per row).
///
/// The basis comes from the symmetric eigendecomposition of the `N x N`
/// scatter matrix; singular values are then recomputed as `||X u_i||`, which
/// keeps the null-space values at round-off relative to the largest one.
pub fn fit_pca(data: ArrayView2<f64>, center: bool) -> Result<PcaBasis> {
    let (samples, dim) = data.dim();
    if samples == 0 {
        return Err(Error::DegenerateData("no snapshots".into()));
    }
    if samples < dim {
        warn!("fitting a {dim}-dimensional PCA basis from only {samples} snapshots");
    }
    let mean = if center {
        data.mean_axis(Axis(0)).expect("non-empty")
    } else {
        Array1::zeros(dim)
    };
    let x = &data - &mean;
    let scatter = x.t().dot(&x);
    let eig = SymmetricEigen::new(DMatrix::from_fn(dim, dim, |i, j| scatter[[i, j]]));
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut u = Array2::from_shape_fn((dim, dim), |(i, k)| eig.eigenvectors[(i, order[k])]);
    let projected = x.dot(&u);
    let mut sv: Vec<(f64, usize)> = (0..dim)
        .map(|k| (projected.column(k).dot(&projected.column(k)).sqrt(), k))
        .collect();
    sv.sort_by(|a, b| b.0.total_cmp(&a.0));
    if sv[0].0 <= f64::MIN_POSITIVE || !sv[0].0.is_finite() {
        return Err(Error::DegenerateData("data matrix has rank 0".into()));
    }
    u = Array2::from_shape_fn((dim, dim), |(i, k)| u[[i, sv[k].1]]);
    Ok(PcaBasis {
        u,
        singular_values: sv.iter().map(|p| p.0).collect(),
        mean,
        centered: center,
    })
}

impl PcaBasis {
    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    /// `Uᵀ(ω - m)` for every row.
    pub fn project(&self, data: ArrayView2<f64>) -> Array2<f64> {
        (&data - &self.mean).dot(&self.u)
    }

    /// `U z + m` for every row of (full-length) coefficients.
    pub fn lift(&self, coeffs: ArrayView2<f64>) -> Array2<f64> {
        coeffs.dot(&self.u.t()) + &self.mean
    }

    /// Rank-`d` reconstruction `U_d U_dᵀ (ω - m) + m`.
    pub fn reconstruct(&self, data: ArrayView2<f64>, d: usize) -> Array2<f64> {
        let ud = self.u.slice(s![.., ..d]);
        (&data - &self.mean).dot(&ud).dot(&ud.t()) + &self.mean
    }

    /// Mean squared reconstruction error per element at rank `d`.
    pub fn mse(&self, data: ArrayView2<f64>, d: usize) -> f64 {
        let rec = self.reconstruct(data, d);
        mean_sq_diff(data, rec.view())
    }

    pub fn max_orthogonality_defect(&self) -> f64 {
        let g = self.u.t().dot(&self.u);
        g.indexed_iter()
            .map(|((i, j), v)| (v - if i == j { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn mean_sq_diff(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    let n = a.len().max(1) as f64;
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n
}

/// Hidden widths of the encoder and decoder nets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AeArch {
    pub enc_hidden: Vec<usize>,
    pub dec_hidden: Vec<usize>,
    /// Initialize the output layers so training starts from the PCA model.
    #[serde(default = "yes")]
    pub pca_start: bool,
}

fn yes() -> bool {
    true
}

impl AeArch {
    /// Encoder `1024:5000:1000:d_h`, decoder `d_h:1000:5000:1024`.
    pub fn full_scale() -> Self {
        AeArch {
            enc_hidden: vec![5000, 1000],
            dec_hidden: vec![1000, 5000],
            pca_start: true,
        }
    }

    /// Same topology with narrower hidden layers, for single-core runs.
    pub fn desk_scale() -> Self {
        AeArch {
            enc_hidden: vec![256, 64],
            dec_hidden: vec![64, 256],
            pca_start: true,
        }
    }
}

/// PCA-residual autoencoder.
#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder {
    pub d_h: usize,
    pub pca: PcaBasis,
    /// Global input/output scale of both nets.
    pub scale: f64,
    pub enc: DenseNet,
    pub dec: DenseNet,
    pub alpha_l: f64,
    /// Treat `E ≡ 0` (pure PCA encoder).
    pub bypass_encoder: bool,
    /// Treat `D ≡ 0` (pure PCA decoder).
    pub bypass_decoder: bool,
}

/// Activations of every intermediate quantity for one batch.
struct AePass {
    enc_tape: Option<crate::nnet::Tape>,
    dec_tape: Option<crate::nnet::Tape>,
    /// `E(z)`, unscaled (`B x d_h`).
    e: Array2<f64>,
    h: Array2<f64>,
    /// `D(h)`, unscaled (`B x N`).
    d: Array2<f64>,
}

impl Autoencoder {
    pub fn new(pca: PcaBasis, d_h: usize, scale: f64, arch: &AeArch, seed: u64) -> Result<Self> {
        let n = pca.dim();
        if d_h == 0 || d_h > n {
            return Err(Error::InvalidParameter(format!("d_h must be in 1..={n}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter("scale must be positive".into()));
        }
        let mut enc_dims = vec![n];
        enc_dims.extend(&arch.enc_hidden);
        enc_dims.push(d_h);
        let mut dec_dims = vec![d_h];
        dec_dims.extend(&arch.dec_hidden);
        dec_dims.push(n);
        let enc_act = vec![Activation::Sigmoid; enc_dims.len() - 1];
        let mut dec_act = vec![Activation::Sigmoid; dec_dims.len() - 1];
        *dec_act.last_mut().unwrap() = Activation::Linear;
        let mut ae = Autoencoder {
            d_h,
            enc: DenseNet::seeded(&enc_dims, &enc_act, seed)?,
            dec: DenseNet::seeded(&dec_dims, &dec_act, seed.wrapping_add(0x9e37_79b9))?,
            pca,
            scale,
            alpha_l: 1.0,
            bypass_encoder: false,
            bypass_decoder: false,
        };
        if arch.pca_start {
            ae.start_at_pca();
        }
        Ok(ae)
    }

    /// Zero the output layers so that `E` is the constant `s/2` and the
    /// decoder cancels it: the untrained model reproduces plain PCA exactly.
    pub fn start_at_pca(&mut self) {
        let last = self.enc.layers.last_mut().expect("encoder has layers");
        last.weights.fill(0.0);
        last.biases.fill(0.0);
        let last = self.dec.layers.last_mut().expect("decoder has layers");
        last.weights.fill(0.0);
        last.biases.fill(0.0);
        last.biases.slice_mut(s![..self.d_h]).fill(-0.5);
    }

    pub fn dim(&self) -> usize {
        self.pca.dim()
    }

    fn check_width(&self, cols: usize, want: usize, what: &str) -> Result<()> {
        if cols != want {
            return Err(Error::ShapeMismatch(format!("{what}: expected width {want}, got {cols}")));
        }
        Ok(())
    }

    fn pass(&self, z: ArrayView2<f64>, tape: bool) -> Result<AePass> {
        let s = self.scale;
        let b = z.nrows();
        let (e, enc_tape) = if self.bypass_encoder {
            (Array2::zeros((b, self.d_h)), None)
        } else {
            let input = &z / s;
            if tape {
                let t = self.enc.forward_tape(input.view())?;
                (t.output() * s, Some(t))
            } else {
                (self.enc.forward_batch(input.view())? * s, None)
            }
        };
        let h = &z.slice(s![.., ..self.d_h]) + &e;
        let (d, dec_tape) = self.decoder_correction(h.view(), tape)?;
        Ok(AePass {
            enc_tape,
            dec_tape,
            e,
            h,
            d,
        })
    }

    fn decoder_correction(
        &self,
        h: ArrayView2<f64>,
        tape: bool,
    ) -> Result<(Array2<f64>, Option<crate::nnet::Tape>)> {
        let s = self.scale;
        if self.bypass_decoder {
            return Ok((Array2::zeros((h.nrows(), self.dim())), None));
        }
        let input = &h / s;
        if tape {
            let t = self.dec.forward_tape(input.view())?;
            Ok((t.output() * s, Some(t)))
        } else {
            Ok((self.dec.forward_batch(input.view())? * s, None))
        }
    }

    /// Latent coordinates of a batch of snapshots (rows).
    pub fn encode_batch(&self, w: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_width(w.ncols(), self.dim(), "encode")?;
        let z = self.pca.project(w);
        Ok(self.pass(z.view(), false)?.h)
    }

    pub fn encode(&self, w: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, w.len()), w).expect("row view");
        Ok(self.encode_batch(view)?.into_raw_vec_and_offset().0)
    }

    /// PCA coefficients of the reconstruction, `[h; 0] + D(h)`.
    fn decode_coeffs(&self, h: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_width(h.ncols(), self.d_h, "decode")?;
        let (mut coeffs, _) = self.decoder_correction(h, false)?;
        coeffs.slice_mut(s![.., ..self.d_h]).zip_mut_with(&h, |c, v| *c += v);
        Ok(coeffs)
    }

    pub fn decode_batch(&self, h: ArrayView2<f64>) -> Result<Array2<f64>> {
        let coeffs = self.decode_coeffs(h)?;
        Ok(self.pca.lift(coeffs.view()))
    }

    pub fn decode(&self, h: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, h.len()), h).expect("row view");
        Ok(self.decode_batch(view)?.into_raw_vec_and_offset().0)
    }

    /// Reconstruction loss plus the consistency penalty for one snapshot,
    /// computed in physical space.
    pub fn loss(&self, w: &[f64]) -> Result<f64> {
        let view = ArrayView2::from_shape((1, w.len()), w).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        self.check_width(w.len(), self.dim(), "loss")?;
        let z = self.pca.project(view);
        let pass = self.pass(z.view(), false)?;
        let recon = self.decode_batch(pass.h.view())?;
        let rec_err: f64 = w.iter().zip(recon.iter()).map(|(a, b)| (a - b).powi(2)).sum();
        let penalty: f64 = (0..self.d_h).map(|k| (pass.e[[0, k]] + pass.d[[0, k]]).powi(2)).sum();
        Ok(rec_err + self.alpha_l * penalty)
    }

    /// Batch-mean loss and gradients with respect to encoder and decoder
    /// parameters, given precomputed PCA coefficients `z`.
    pub fn loss_and_grad(&self, z: ArrayView2<f64>) -> Result<(f64, Gradients, Gradients)> {
        self.check_width(z.ncols(), self.dim(), "coefficients")?;
        let s = self.scale;
        let dh = self.d_h;
        let bsz = z.nrows().max(1) as f64;
        let pass = self.pass(z, true)?;
        // residual r = z - [h; 0] - D(h), penalty p = E + D[..dh]
        let mut r = &z - &pass.d;
        r.slice_mut(s![.., ..dh]).zip_mut_with(&pass.h, |a, h| *a -= h);
        let p = &pass.e + &pass.d.slice(s![.., ..dh]);
        let value = (r.iter().map(|v| v * v).sum::<f64>()
            + self.alpha_l * p.iter().map(|v| v * v).sum::<f64>())
            / bsz;

        let mut g_d = &r * (-2.0 / bsz);
        g_d.slice_mut(s![.., ..dh])
            .zip_mut_with(&p, |g, pv| *g += 2.0 * self.alpha_l * pv / bsz);
        let mut g_h = r.slice(s![.., ..dh]).to_owned() * (-2.0 / bsz);
        let dec_grads = match &pass.dec_tape {
            Some(tape) => {
                let (grads, g_in) = self.dec.backward(tape, &(&g_d * s))?;
                g_h.scaled_add(1.0 / s, &g_in);
                grads
            }
            None => Gradients::zeros_like(&self.dec),
        };
        let enc_grads = match &pass.enc_tape {
            Some(tape) => {
                let g_e = (&g_h + &(&p * (2.0 * self.alpha_l / bsz))) * s;
                self.enc.backward(tape, &g_e)?.0
            }
            None => Gradients::zeros_like(&self.enc),
        };
        Ok((value, enc_grads, dec_grads))
    }

    /// Mean squared reconstruction error per element.
    pub fn mse(&self, w: ArrayView2<f64>) -> Result<f64> {
        let h = self.encode_batch(w)?;
        let rec = self.decode_batch(h.view())?;
        Ok(mean_sq_diff(w, rec.view()))
    }

    /// Same as [`Autoencoder::mse`] but from precomputed coefficients; valid
    /// because `U` is orthogonal.
    fn mse_from_coeffs(&self, z: ArrayView2<f64>) -> Result<f64> {
        let pass = self.pass(z, false)?;
        let coeffs = self.decode_coeffs(pass.h.view())?;
        Ok(mean_sq_diff(z, coeffs.view()))
    }

    pub fn write_bundle(&self, dir: &Path, meta: &AeMeta) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_atomic(&dir.join("pca.bin"), &pca_to_bytes(&self.pca, self.scale))?;
        self.enc.write_to(&dir.join("enc.knet1"))?;
        self.dec.write_to(&dir.join("dec.knet1"))?;
        write_atomic(&dir.join("meta.json"), serde_json::to_string_pretty(meta)?.as_bytes())?;
        Ok(())
    }

    pub fn read_bundle(dir: &Path) -> Result<(Self, AeMeta)> {
        let (pca, scale) = pca_from_bytes(&fs::read(dir.join("pca.bin"))?)?;
        let enc = DenseNet::read_from(&dir.join("enc.knet1"))?;
        let dec = DenseNet::read_from(&dir.join("dec.knet1"))?;
        let meta: AeMeta = serde_json::from_slice(&fs::read(dir.join("meta.json"))?)?;
        if enc.output_dim() != meta.d_h || dec.input_dim() != meta.d_h {
            return Err(Error::Format("encoder/decoder widths disagree with meta.json d_h".into()));
        }
        Ok((
            Autoencoder {
                d_h: meta.d_h,
                pca,
                scale,
                enc,
                dec,
                alpha_l: meta.alpha_l,
                bypass_encoder: meta.bypass_encoder,
                bypass_decoder: meta.bypass_decoder,
            },
            meta,
        ))
    }
}

/// Contents of `meta.json` in a model bundle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AeMeta {
    pub d_h: usize,
    pub alpha_l: f64,
    pub seeds: Vec<u64>,
    pub selected_seed: u64,
    pub test_mse: Vec<f64>,
    pub pca_test_mse: f64,
    #[serde(default)]
    pub bypass_encoder: bool,
    #[serde(default)]
    pub bypass_decoder: bool,
    /// Real-space template used for rotation collapse, when one was applied.
    #[serde(default)]
    pub template: Option<Vec<f64>>,
}

/// `pca.bin`: magic `KPCA1`, u32 version, u32 N, u8 centered, f64 scale,
/// then `U` (row-major `N x N`), `Σ` (N) and the mean (N).
pub fn pca_to_bytes(pca: &PcaBasis, scale: f64) -> Vec<u8> {
    let n = pca.dim();
    let mut out = Vec::with_capacity(32 + 8 * n * (n + 2));
    out.extend_from_slice(PCA_MAGIC);
    out.extend_from_slice(&PCA_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.push(pca.centered as u8);
    out.extend_from_slice(&scale.to_le_bytes());
    for v in pca.u.iter().chain(pca.singular_values.iter()).chain(pca.mean.iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn pca_from_bytes(bytes: &[u8]) -> Result<(PcaBasis, f64)> {
    let mut r = ByteReader::new(bytes);
    if r.take(5)? != PCA_MAGIC {
        return Err(Error::Format("missing KPCA1 magic".into()));
    }
    let version = r.u32()?;
    if version != PCA_VERSION {
        return Err(Error::Version {
            what: "PCA basis",
            found: version,
            expected: PCA_VERSION,
        });
    }
    let n = r.u32()? as usize;
    let centered = r.u8()? != 0;
    let scale = r.f64()?;
    if r.remaining() != 8 * n * (n + 2) {
        return Err(Error::Format("PCA payload has the wrong length".into()));
    }
    let mut read = |len: usize| -> Result<Vec<f64>> { (0..len).map(|_| r.f64()).collect() };
    let u = Array2::from_shape_vec((n, n), read(n * n)?).expect("sized");
    let singular_values = Array1::from(read(n)?);
    let mean = Array1::from(read(n)?);
    Ok((
        PcaBasis {
            u,
            singular_values,
            mean,
            centered,
        },
        scale,
    ))
}

/// Train one autoencoder on precomputed coefficients.
pub fn train_one(
    mut ae: Autoencoder,
    z_train: &Array2<f64>,
    z_test: &Array2<f64>,
    cfg: &TrainConfig,
) -> Result<(Autoencoder, LossHistory)> {
    let mut enc_opt = Adam::new(&ae.enc);
    let mut dec_opt = Adam::new(&ae.dec);
    let cell = std::cell::RefCell::new(&mut ae);
    let history = run_epochs(
        cfg,
        z_train.nrows(),
        |batch, lr| {
            let mut ae = cell.borrow_mut();
            let zb = gather(z_train, batch);
            let (_, ge, gd) = ae.loss_and_grad(zb.view())?;
            if !ae.bypass_encoder {
                enc_opt.step(&mut ae.enc, &ge, lr);
            }
            if !ae.bypass_decoder {
                dec_opt.step(&mut ae.dec, &gd, lr);
            }
            Ok(())
        },
        || {
            let ae = cell.borrow();
            Ok((ae.mse_from_coeffs(z_train.view())?, ae.mse_from_coeffs(z_test.view())?))
        },
    )?;
    Ok((ae, history))
}

/// Outcome of an ensemble fit at one latent dimension.
#[derive(Clone, Debug)]
pub struct AeFit {
    pub best: Autoencoder,
    pub best_index: usize,
    pub seeds: Vec<u64>,
    pub histories: Vec<LossHistory>,
    pub test_mse: Vec<f64>,
    /// Rank-`d_h` PCA test MSE of the same basis, for comparison.
    pub pca_test_mse: f64,
}

impl AeFit {
    pub fn meta(&self) -> AeMeta {
        AeMeta {
            d_h: self.best.d_h,
            alpha_l: self.best.alpha_l,
            seeds: self.seeds.clone(),
            selected_seed: self.seeds[self.best_index],
            test_mse: self.test_mse.clone(),
            pca_test_mse: self.pca_test_mse,
            bypass_encoder: self.best.bypass_encoder,
            bypass_decoder: self.best.bypass_decoder,
            template: None,
        }
    }
}

/// Chronological split: the first `train_fraction` of rows train, the rest test.
pub fn split_rows(data: &Array2<f64>, train_fraction: f64) -> (Array2<f64>, Array2<f64>) {
    let n_train = ((data.nrows() as f64) * train_fraction).round() as usize;
    let n_train = n_train.clamp(1, data.nrows());
    (
        data.slice(s![..n_train, ..]).to_owned(),
        data.slice(s![n_train.., ..]).to_owned(),
    )
}

/// Options for an autoencoder ensemble fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AeTrainOptions {
    pub d_h: usize,
    pub arch: AeArch,
    pub train: TrainConfig,
    pub n_models: usize,
    pub center: bool,
    pub alpha_l: f64,
}

/// Fit PCA on `train`, then train `n_models` autoencoders (seeds
/// `train.seed..train.seed + n_models`) in parallel and keep the one with the
/// lowest test MSE.
pub fn train_autoencoder(
    train: ArrayView2<f64>,
    test: ArrayView2<f64>,
    opts: &AeTrainOptions,
) -> Result<AeFit> {
    let pca = fit_pca(train, opts.center)?;
    train_autoencoder_with_basis(pca, train, test, opts)
}

/// As [`train_autoencoder`] with a precomputed basis (shared across `d_h`).
pub fn train_autoencoder_with_basis(
    pca: PcaBasis,
    train: ArrayView2<f64>,
    test: ArrayView2<f64>,
    opts: &AeTrainOptions,
) -> Result<AeFit> {
    if opts.n_models == 0 {
        return Err(Error::InvalidParameter("n_models must be >= 1".into()));
    }
    let scale = train.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let z_train = pca.project(train);
    let z_test = pca.project(test);
    let pca_test_mse = pca.mse(test, opts.d_h);
    let seeds: Vec<u64> = (0..opts.n_models as u64).map(|k| opts.train.seed + k).collect();
    let results: Vec<Result<(Autoencoder, LossHistory)>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut ae = Autoencoder::new(pca.clone(), opts.d_h, scale, &opts.arch, seed)?;
            ae.alpha_l = opts.alpha_l;
            let cfg = TrainConfig {
                seed,
                ..opts.train.clone()
            };
            train_one(ae, &z_train, &z_test, &cfg)
        })
        .collect();
    let mut models = Vec::with_capacity(results.len());
    for r in results {
        models.push(r?);
    }
    let test_mse: Vec<f64> = models.iter().map(|(_, h)| h.final_test()).collect();
    let best_index = crate::nnet::select_best(&test_mse)
        .ok_or_else(|| Error::NonFinite("every ensemble member diverged".into()))?;
    let histories = models.iter().map(|(_, h)| h.clone()).collect();
    let best = models.swap_remove(best_index).0;
    Ok(AeFit {
        best,
        best_index,
        seeds,
        histories,
        test_mse,
        pca_test_mse,
    })
}

/// Latent trajectories for an entire series (rows).
pub fn encode_series(ae: &Autoencoder, data: ArrayView2<f64>) -> Result<Array2<f64>> {
    ae.encode_batch(data)
}

pub fn row_vec(a: ArrayView1<f64>) -> Vec<f64> {
    a.iter().copied().collect()
}
