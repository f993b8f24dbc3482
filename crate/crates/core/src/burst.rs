//! Predicting future bursting from present indicators with an RBF-kernel
//! support vector machine trained by sequential minimal optimization.
use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::LabelSeries;
use crate::reduction::{Autoencoder, PcaBasis};
use crate::spectral::{Grid, SpectralField};
use crate::symmetry::wrap_angle;

/// What is fed to the classifier at time `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Indicator {
    /// Autoencoder latent coordinates `h`.
    Latent,
    /// Leading PCA coefficients.
    Pca,
    /// `|a_{1,0}|`.
    Mode10,
    /// `|a_{0,2}|`.
    Mode02,
    /// Phase increment over the previous sample.
    Dphi,
}

impl Indicator {
    pub fn name(self) -> &'static str {
        match self {
            Indicator::Latent => "latent",
            Indicator::Pca => "pca",
            Indicator::Mode10 => "mode10",
            Indicator::Mode02 => "mode02",
            Indicator::Dphi => "dphi",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "latent" => Indicator::Latent,
            "pca" => Indicator::Pca,
            "mode10" => Indicator::Mode10,
            "mode02" => Indicator::Mode02,
            "dphi" => Indicator::Dphi,
            other => return Err(Error::InvalidParameter(format!("unknown indicator {other:?}"))),
        })
    }
}

/// Per-snapshot indicator values. Row `k` belongs to snapshot
/// `first_valid + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct IndicatorSet {
    pub kind: Indicator,
    pub features: Array2<f64>,
    pub first_valid: usize,
}

/// Sources the indicators can be computed from.
pub struct IndicatorInputs<'a> {
    /// Phase-aligned snapshots, one per row.
    pub snapshots: ArrayView2<'a, f64>,
    pub grid: Grid,
    /// Unwrapped x-phase of each snapshot.
    pub phi_x: &'a [f64],
    pub autoencoder: Option<&'a Autoencoder>,
    pub pca: Option<&'a PcaBasis>,
    pub d_h: usize,
}

pub fn indicator_set(kind: Indicator, src: &IndicatorInputs) -> Result<IndicatorSet> {
    let n = src.snapshots.nrows();
    let mode_amp = |kx: i64, ky: i64| -> Result<Array2<f64>> {
        let mut out = Array2::zeros((n, 1));
        for (i, row) in src.snapshots.rows().into_iter().enumerate() {
            let w = SpectralField::from_real(src.grid, row.as_slice().expect("contiguous rows"))?;
            out[[i, 0]] = w.mode(kx, ky).norm();
        }
        Ok(out)
    };
    let (features, first_valid) = match kind {
        Indicator::Latent => {
            let ae = src
                .autoencoder
                .ok_or_else(|| Error::InvalidParameter("latent indicator needs an autoencoder".into()))?;
            (ae.encode_batch(src.snapshots)?, 0)
        }
        Indicator::Pca => {
            let pca = src
                .pca
                .ok_or_else(|| Error::InvalidParameter("pca indicator needs a basis".into()))?;
            if src.d_h == 0 || src.d_h > pca.dim() {
                return Err(Error::InvalidParameter(format!("d_h must be in 1..={}", pca.dim())));
            }
            let z = pca.project(src.snapshots);
            (z.slice(ndarray::s![.., ..src.d_h]).to_owned(), 0)
        }
        Indicator::Mode10 => (mode_amp(1, 0)?, 0),
        Indicator::Mode02 => (mode_amp(0, 2)?, 0),
        Indicator::Dphi => {
            if src.phi_x.len() != n {
                return Err(Error::ShapeMismatch("one phase per snapshot is required".into()));
            }
            let d: Vec<f64> = src.phi_x.windows(2).map(|w| wrap_angle(w[1] - w[0])).collect();
            (Array2::from_shape_vec((d.len(), 1), d).expect("sized"), 1)
        }
    };
    Ok(IndicatorSet {
        kind,
        features,
        first_valid,
    })
}

/// Feature rows at `t` paired with the label at `t + steps`.
pub fn build_dataset(set: &IndicatorSet, labels: &LabelSeries, steps: usize) -> Result<(Array2<f64>, Vec<u8>)> {
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for k in 0..set.features.nrows() {
        let t = set.first_valid + k;
        if let Some(l) = labels.at(t + steps) {
            rows.push(k);
            targets.push(l);
        }
    }
    if rows.is_empty() {
        return Err(Error::HorizonOutOfRange(format!(
            "no snapshot has a label {steps} samples ahead"
        )));
    }
    Ok((set.features.select(Axis(0), &rows), targets))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    /// RBF width; `None` uses `1 / (dim * var)` of the training features.
    pub gamma: Option<f64>,
    pub max_train: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            gamma: None,
            max_train: 5000,
            tol: 1e-3,
            max_iter: 1_000_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel {
    pub support_vectors: Array2<f64>,
    /// `α_i y_i` for each support vector.
    pub dual_coeffs: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    /// Final maximal KKT violation.
    pub kkt_residual: f64,
}

fn rbf(a: ArrayView1<f64>, b: ArrayView1<f64>, gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum();
    (-gamma * d2).exp()
}

impl SvmModel {
    pub fn decision(&self, x: ArrayView1<f64>) -> f64 {
        self.support_vectors
            .rows()
            .into_iter()
            .zip(&self.dual_coeffs)
            .map(|(sv, c)| c * rbf(sv, x, self.gamma))
            .sum::<f64>()
            + self.bias
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<u8> {
        x.rows().into_iter().map(|r| u8::from(self.decision(r) > 0.0)).collect()
    }
}

/// Stratified subsample of at most `max` indices, keeping class proportions.
fn stratified(targets: &[u8], max: usize, seed: u64) -> Vec<usize> {
    if targets.len() <= max {
        return (0..targets.len()).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(max);
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..targets.len()).filter(|&i| targets[i] == class).collect();
        let keep = ((idx.len() as f64) * max as f64 / targets.len() as f64).round() as usize;
        idx.shuffle(&mut rng);
        out.extend_from_slice(&idx[..keep.clamp(1, idx.len())]);
    }
    out.sort_unstable();
    out
}

/// Train a soft-margin RBF SVM on 0/1 targets.
pub fn train_svm(features: ArrayView2<f64>, targets: &[u8], cfg: &SvmConfig) -> Result<SvmModel> {
    if features.nrows() != targets.len() {
        return Err(Error::ShapeMismatch("one target per feature row".into()));
    }
    if !targets.contains(&0) || !targets.contains(&1) {
        return Err(Error::SingleClass);
    }
    if !(cfg.c > 0.0) {
        return Err(Error::InvalidParameter("C must be positive".into()));
    }
    let keep = stratified(targets, cfg.max_train, cfg.seed);
    let x = features.select(Axis(0), &keep);
    let y: Vec<f64> = keep.iter().map(|&i| if targets[i] == 1 { 1.0 } else { -1.0 }).collect();
    let gamma = match cfg.gamma {
        Some(g) => g,
        None => {
            let var = x.var(0.0);
            1.0 / (x.ncols() as f64 * if var > 0.0 { var } else { 1.0 })
        }
    };
    let n = y.len();
    let k = Array2::from_shape_fn((n, n), |(i, j)| rbf(x.row(i), x.row(j), gamma));
    let c = cfg.c;
    let mut alpha = vec![0.0; n];
    // gradient of ½αᵀQα - eᵀα
    let mut grad = vec![-1.0; n];
    let up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);
    let mut residual = f64::INFINITY;
    for _ in 0..cfg.max_iter {
        // first index: maximal violation
        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        for t in 0..n {
            if up(alpha[t], y[t]) && -y[t] * grad[t] > gmax {
                gmax = -y[t] * grad[t];
                i = t;
            }
        }
        // second index: largest guaranteed decrease
        let mut j = usize::MAX;
        let mut gmin = f64::INFINITY;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            if i != usize::MAX && v < gmax {
                let b = gmax - v;
                let a = (k[[i, i]] + k[[t, t]] - 2.0 * k[[i, t]]).max(1e-12);
                if -b * b / a < best {
                    best = -b * b / a;
                    j = t;
                }
            }
        }
        residual = gmax - gmin;
        if residual < cfg.tol || i == usize::MAX || j == usize::MAX {
            break;
        }
        let (ai, aj) = (alpha[i], alpha[j]);
        let quad = (k[[i, i]] + k[[j, j]] - 2.0 * k[[i, j]]).max(1e-12);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k[[t, i]] * di + y[j] * k[[t, j]] * dj);
        }
    }
    // offset from free vectors, else the midpoint of the feasible interval
    let mut sum = 0.0;
    let mut free = 0usize;
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            sum += yg;
            free += 1;
        } else if (alpha[t] == 0.0) == (y[t] > 0.0) {
            ub = ub.min(yg);
        } else {
            lb = lb.max(yg);
        }
    }
    let rho = if free > 0 { sum / free as f64 } else { 0.5 * (ub + lb) };
    let sv: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    Ok(SvmModel {
        support_vectors: x.select(Axis(0), &sv),
        dual_coeffs: sv.iter().map(|&t| alpha[t] * y[t]).collect(),
        bias: -rho,
        gamma,
        c,
        kkt_residual: residual,
    })
}

pub fn accuracy(pred: &[u8], truth: &[u8]) -> f64 {
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len().max(1) as f64
}

/// Fraction of true bursting targets predicted as bursting.
pub fn recall(pred: &[u8], truth: &[u8]) -> f64 {
    let positives = truth.iter().filter(|&&t| t == 1).count();
    if positives == 0 {
        return f64::NAN;
    }
    pred.iter().zip(truth).filter(|(&p, &t)| p == 1 && t == 1).count() as f64 / positives as f64
}

/// One row of the horizon table.
#[derive(Clone, Debug, PartialEq)]
pub struct HorizonRow {
    pub indicator: String,
    pub tau_b: f64,
    pub accuracy: f64,
    pub recall: f64,
    pub n_test: usize,
}

/// Train and score one classifier per `(indicator, horizon)`, splitting each
/// dataset chronologically in half. A `majority` row (always predicting the
/// more common training class) accompanies every horizon.
pub fn evaluate_horizon_sweep(
    sets: &[IndicatorSet],
    labels: &LabelSeries,
    horizons: &[usize],
    tau: f64,
    cfg: &SvmConfig,
) -> Result<Vec<HorizonRow>> {
    let cells: Vec<(Option<&IndicatorSet>, usize)> = horizons
        .iter()
        .flat_map(|&h| std::iter::once((None, h)).chain(sets.iter().map(move |s| (Some(s), h))))
        .collect();
    let reference = sets
        .first()
        .ok_or_else(|| Error::InvalidParameter("at least one indicator is required".into()))?;
    cells
        .par_iter()
        .map(|&(set, steps)| {
            let (x, y) = build_dataset(set.unwrap_or(reference), labels, steps)?;
            let half = y.len() / 2;
            let (x_train, x_test) = x.view().split_at(Axis(0), half);
            let (y_train, y_test) = y.split_at(half);
            let pred = match set {
                Some(_) => train_svm(x_train, y_train, cfg)?.predict(x_test),
                None => {
                    let ones = y_train.iter().filter(|&&v| v == 1).count();
                    vec![u8::from(2 * ones > y_train.len()); y_test.len()]
                }
            };
            Ok(HorizonRow {
                indicator: set.map_or("majority", |s| s.kind.name()).to_string(),
                tau_b: steps as f64 * tau,
                accuracy: accuracy(&pred, y_test),
                recall: recall(&pred, y_test),
                n_test: y_test.len(),
            })
        })
        .collect()
}

pub fn horizon_csv(rows: &[HorizonRow]) -> String {
    let mut out = String::from("indicator,tau_b,accuracy,bursting_recall,n_test\n");
    for r in rows {
        writeln!(out, "{},{},{:.6},{:.6},{}", r.indicator, r.tau_b, r.accuracy, r.recall, r.n_test).unwrap();
    }
    out
}

/// Maximum KKT violation of a dual solution, recomputed from scratch.
pub fn kkt_violation(model: &SvmModel, x: ArrayView2<f64>, targets: &[u8]) -> f64 {
    // support vectors are a subset of x; non-support points have α = 0
    let y: Array1<f64> = targets.iter().map(|&t| if t == 1 { 1.0 } else { -1.0 }).collect();
    let mut worst: f64 = 0.0;
    for (i, row) in x.rows().into_iter().enumerate() {
        let margin = y[i] * model.decision(row);
        let alpha = model
            .support_vectors
            .rows()
            .into_iter()
            .zip(&model.dual_coeffs)
            .find(|(sv, _)| *sv == row)
            .map_or(0.0, |(_, c)| c.abs());
        let v = if alpha <= 0.0 {
            (1.0 - margin).max(0.0)
        } else if alpha >= model.c {
            (margin - 1.0).max(0.0)
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn xor(n: usize, seed: u64) -> (Array2<f64>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::new();
        for i in 0..n {
            let (a, b): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            x[[i, 0]] = a;
            x[[i, 1]] = b;
            y.push(u8::from(a * b > 0.0));
        }
        (x, y)
    }

    fn annuli(n: usize, seed: u64) -> (Array2<f64>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::new();
        for i in 0..n {
            let class = rng.random::<bool>();
            let r = if class { rng.random_range(1.5..2.0) } else { rng.random_range(0.0..1.0) };
            let th = rng.random_range(0.0..std::f64::consts::TAU);
            x[[i, 0]] = r * th.cos();
            x[[i, 1]] = r * th.sin();
            y.push(u8::from(class));
        }
        (x, y)
    }

    fn check_dual(m: &SvmModel) {
        assert!(m.dual_coeffs.iter().all(|c| c.abs() <= m.c + 1e-12));
        assert!(m.dual_coeffs.iter().sum::<f64>().abs() < 1e-8);
        assert!(m.kkt_residual < 1e-3);
    }

    #[test]
    fn separated_blobs() {
        let mut x = Array2::zeros((40, 2));
        let mut y = Vec::new();
        for i in 0..40 {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            x[[i, 0]] = s * (1.0 + 0.01 * i as f64);
            x[[i, 1]] = 0.02 * i as f64;
            y.push(u8::from(s > 0.0));
        }
        let m = train_svm(x.view(), &y, &SvmConfig::default()).unwrap();
        check_dual(&m);
        assert_eq!(accuracy(&m.predict(x.view()), &y), 1.0);
    }

    #[test]
    fn xor_and_annuli() {
        let cfg = SvmConfig {
            c: 10.0,
            ..SvmConfig::default()
        };
        for (train, test) in [(xor(400, 1), xor(400, 2)), (annuli(400, 3), annuli(400, 4))] {
            let m = train_svm(train.0.view(), &train.1, &cfg).unwrap();
            check_dual(&m);
            let acc = accuracy(&m.predict(test.0.view()), &test.1);
            assert!(acc > 0.95, "accuracy {acc}");
            assert!(kkt_violation(&m, train.0.view(), &train.1) < 1e-2);
        }
    }

    #[test]
    fn single_class_is_an_error() {
        let x = Array2::zeros((3, 1));
        assert!(matches!(train_svm(x.view(), &[1, 1, 1], &SvmConfig::default()), Err(Error::SingleClass)));
    }

    #[test]
    fn duplicated_point_does_not_change_predictions() {
        let (x, y) = xor(120, 5);
        let cfg = SvmConfig {
            tol: 1e-8,
            ..SvmConfig::default()
        };
        let m1 = train_svm(x.view(), &y, &cfg).unwrap();
        let mut x2 = x.clone();
        x2.push_row(x.row(7)).unwrap();
        let mut y2 = y.clone();
        y2.push(y[7]);
        let m2 = train_svm(x2.view(), &y2, &SvmConfig { gamma: Some(m1.gamma), ..cfg }).unwrap();
        let (xt, _) = xor(200, 6);
        for row in xt.rows() {
            assert!((m1.decision(row) - m2.decision(row)).abs() < 1e-6);
        }
    }

    #[test]
    fn stratified_keeps_proportions_and_is_seeded() {
        let targets: Vec<u8> = (0..1000).map(|i| u8::from(i % 4 == 0)).collect();
        let a = stratified(&targets, 100, 3);
        assert_eq!(a, stratified(&targets, 100, 3));
        assert_eq!(a.iter().filter(|&&i| targets[i] == 1).count(), 25);
        assert_eq!(a.len(), 100);
    }

    fn labels_of(l: Vec<u8>, first: usize) -> LabelSeries {
        let n = l.len() + 2 * first;
        LabelSeries {
            labels: l,
            first_labeled: first,
            norms: vec![0.0; n],
        }
    }

    #[test]
    fn dataset_alignment() {
        let set = IndicatorSet {
            kind: Indicator::Mode02,
            features: Array2::from_shape_fn((30, 1), |(i, _)| i as f64),
            first_valid: 0,
        };
        let labels = labels_of((0..10).map(|i| (i % 3 == 0) as u8).collect(), 10);
        let (x, y) = build_dataset(&set, &labels, 0).unwrap();
        assert_eq!(y, labels.labels);
        assert_eq!(x.ncols(), 1);
        for steps in [1, 4, 9] {
            let (x, y) = build_dataset(&set, &labels, steps).unwrap();
            for (row, &target) in x.rows().into_iter().zip(&y) {
                let t = row[0] as usize;
                assert_eq!(Some(target), labels.at(t + steps));
            }
        }
        assert!(matches!(build_dataset(&set, &labels, 40), Err(Error::HorizonOutOfRange(_))));
        let shifted = IndicatorSet { first_valid: 1, ..set };
        let (x, _) = build_dataset(&shifted, &labels, 0).unwrap();
        assert_eq!(x[[0, 0]], 9.0);
    }

    #[test]
    fn sweep_reports_majority_rows() {
        let n = 200;
        let labels = labels_of((0..n).map(|i| u8::from((i / 10) % 3 == 0)).collect(), 0);
        let set = IndicatorSet {
            kind: Indicator::Mode10,
            features: Array2::from_shape_fn((n, 1), |(i, _)| ((i / 10) % 3) as f64),
            first_valid: 0,
        };
        let rows = evaluate_horizon_sweep(&[set], &labels, &[0, 1], 5.0, &SvmConfig::default()).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows.iter().filter(|r| r.indicator == "majority").count(), 2);
        let now = rows.iter().find(|r| r.indicator == "mode10" && r.tau_b == 0.0).unwrap();
        assert_eq!(now.accuracy, 1.0);
        assert!(horizon_csv(&rows).starts_with("indicator,tau_b,accuracy,bursting_recall,n_test\n"));
    }

    #[test]
    fn dphi_feature_starts_at_one() {
        let grid = Grid::new(8, 8, 1.0).unwrap();
        let snaps = Array2::zeros((3, 64));
        let phi = [0.0, 0.5, 7.0];
        let src = IndicatorInputs {
            snapshots: snaps.view(),
            grid,
            phi_x: &phi,
            autoencoder: None,
            pca: None,
            d_h: 1,
        };
        let set = indicator_set(Indicator::Dphi, &src).unwrap();
        assert_eq!(set.first_valid, 1);
        assert!((set.features[[1, 0]] - wrap_angle(6.5)).abs() < 1e-12);
        assert_eq!(indicator_set(Indicator::Mode02, &src).unwrap().features.ncols(), 1);
        assert!(indicator_set(Indicator::Latent, &src).is_err());
    }
}
