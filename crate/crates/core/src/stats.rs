//! Long-time statistics: joint PDFs and their KL divergence, duration
//! histograms, phase mean squared displacement and ensemble tracking errors.
use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::labeling::LabelSeries;
use crate::latent::{rollout, ScaledNet};
use crate::reduction::Autoencoder;

/// Normalized 2D histogram. `mass` sums to one; `density` is mass per unit
/// area.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram2D {
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    pub counts: Array2<u64>,
    pub mass: Array2<f64>,
}

/// Axis-aligned box `[x0, x1] x [y0, y1]`.
pub type Range2 = ((f64, f64), (f64, f64));

fn edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    (0..=bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64).collect()
}

fn bin_of(v: f64, lo: f64, hi: f64, bins: usize) -> Option<usize> {
    if !(v >= lo && v <= hi) {
        return None;
    }
    Some((((v - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1))
}

/// Smallest box holding every point of every `(a, b)` pair of series.
pub fn pooled_range(sets: &[(&[f64], &[f64])]) -> Result<Range2> {
    let mut r = ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY));
    for (a, b) in sets {
        for &v in a.iter() {
            r.0 = (r.0 .0.min(v), r.0 .1.max(v));
        }
        for &v in b.iter() {
            r.1 = (r.1 .0.min(v), r.1 .1.max(v));
        }
    }
    if !(r.0 .0.is_finite() && r.1 .0.is_finite()) {
        return Err(Error::EmptyData("no finite samples".into()));
    }
    let widen = |(lo, hi): (f64, f64)| {
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    };
    Ok((widen(r.0), widen(r.1)))
}

/// Histogram of the points `(a[i], b[i])` inside `range`; points outside are
/// ignored.
pub fn joint_pdf(a: &[f64], b: &[f64], bins: (usize, usize), range: Range2) -> Result<Histogram2D> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} samples", a.len(), b.len())));
    }
    let ((x0, x1), (y0, y1)) = range;
    if bins.0 == 0 || bins.1 == 0 || !(x1 > x0) || !(y1 > y0) {
        return Err(Error::InvalidParameter("bins must be positive and ranges non-empty".into()));
    }
    let mut counts = Array2::<u64>::zeros(bins);
    let mut total = 0u64;
    for (&x, &y) in a.iter().zip(b) {
        if let (Some(i), Some(j)) = (bin_of(x, x0, x1, bins.0), bin_of(y, y0, y1, bins.1)) {
            counts[[i, j]] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyData("no samples inside the histogram range".into()));
    }
    let mass = counts.mapv(|c| c as f64 / total as f64);
    Ok(Histogram2D {
        x_edges: edges(x0, x1, bins.0),
        y_edges: edges(y0, y1, bins.1),
        counts,
        mass,
    })
}

impl Histogram2D {
    pub fn cell_area(&self) -> f64 {
        (self.x_edges[1] - self.x_edges[0]) * (self.y_edges[1] - self.y_edges[0])
    }

    pub fn density(&self) -> Array2<f64> {
        &self.mass / self.cell_area()
    }

    /// Number of strict local maxima of the mass over the 8-neighbourhood.
    pub fn local_maxima(&self, min_mass: f64) -> usize {
        let (nx, ny) = self.mass.dim();
        let mut count = 0;
        for i in 0..nx {
            for j in 0..ny {
                let m = self.mass[[i, j]];
                if m < min_mass {
                    continue;
                }
                let mut is_max = true;
                for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        let (a, b) = (i as i64 + di, j as i64 + dj);
                        if (di, dj) != (0, 0) && a >= 0 && b >= 0 && (a as usize) < nx && (b as usize) < ny {
                            is_max &= self.mass[[a as usize, b as usize]] < m;
                        }
                    }
                }
                count += is_max as usize;
            }
        }
        count
    }

    /// Gnuplot matrix format: `x y density` per cell centre, blank line
    /// between x blocks.
    pub fn to_gnuplot(&self) -> String {
        let density = self.density();
        let mut out = String::from("# x y density\n");
        for i in 0..density.nrows() {
            let x = 0.5 * (self.x_edges[i] + self.x_edges[i + 1]);
            for j in 0..density.ncols() {
                let y = 0.5 * (self.y_edges[j] + self.y_edges[j + 1]);
                writeln!(out, "{x:e} {y:e} {:e}", density[[i, j]]).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        self.to_gnuplot()
            .lines()
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .fold(String::from("x,y,density\n"), |mut acc, l| {
                acc.push_str(&l.replace(' ', ","));
                acc.push('\n');
                acc
            })
    }
}

/// `Σ p̃ ln(p̃/p)` over cells where both histograms are non-zero.
pub fn kl_divergence(pred: &Histogram2D, truth: &Histogram2D) -> Result<f64> {
    if pred.x_edges != truth.x_edges || pred.y_edges != truth.y_edges {
        return Err(Error::BinMismatch);
    }
    Ok(pred
        .mass
        .iter()
        .zip(truth.mass.iter())
        .filter(|(&q, &p)| q > 0.0 && p > 0.0)
        .map(|(&q, &p)| q * (q / p).ln())
        .sum())
}

/// KL divergence between the first and second halves of one true series:
/// the noise floor of the estimator at this sample size.
pub fn split_half_kl(a: &[f64], b: &[f64], bins: (usize, usize), range: Range2) -> Result<f64> {
    let half = a.len() / 2;
    let first = joint_pdf(&a[..half], &b[..half], bins, range)?;
    let second = joint_pdf(&a[half..2 * half], &b[half..2 * half], bins, range)?;
    kl_divergence(&second, &first)
}

/// 1D histogram as `(bin centre, density)` pairs normalized to unit area.
pub fn histogram_1d(values: &[f64], bins: usize, range: (f64, f64)) -> Result<Vec<(f64, f64)>> {
    let (lo, hi) = range;
    if bins == 0 || !(hi > lo) {
        return Err(Error::InvalidParameter("bins must be positive and the range non-empty".into()));
    }
    let mut counts = vec![0usize; bins];
    let mut total = 0;
    for &v in values {
        if let Some(k) = bin_of(v, lo, hi, bins) {
            counts[k] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyData("no values inside the histogram range".into()));
    }
    let width = (hi - lo) / bins as f64;
    Ok(counts
        .iter()
        .enumerate()
        .map(|(k, &c)| (lo + (k as f64 + 0.5) * width, c as f64 / (total as f64 * width)))
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MsdCurve {
    /// Lags in time units.
    pub lags: Vec<f64>,
    pub msd: Vec<f64>,
}

impl MsdCurve {
    /// Least-squares slope of `log msd` against `log lag` for lags in
    /// `[lo, hi]` (time units); lag zero is skipped.
    pub fn loglog_slope(&self, lo: f64, hi: f64) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .lags
            .iter()
            .zip(&self.msd)
            .filter(|(&t, &m)| t > 0.0 && t >= lo && t <= hi && m > 0.0)
            .map(|(&t, &m)| (t.ln(), m.ln()))
            .collect();
        let n = pts.len() as f64;
        if pts.len() < 2 {
            return f64::NAN;
        }
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lag,msd\n");
        for (t, m) in self.lags.iter().zip(&self.msd) {
            writeln!(out, "{t},{m:e}").unwrap();
        }
        out
    }
}

/// Mean squared displacement over all origins of one or more independent
/// runs sampled every `dt`; displacements never span two runs.
pub fn msd_runs(runs: &[&[f64]], max_lag: usize, dt: f64) -> Result<MsdCurve> {
    let longest = runs.iter().map(|r| r.len()).max().unwrap_or(0);
    if longest <= max_lag {
        return Err(Error::TooShort {
            needed: max_lag + 1,
            got: longest,
        });
    }
    let msd: Vec<f64> = (0..=max_lag)
        .into_par_iter()
        .map(|lag| {
            let mut sum = 0.0;
            let mut n = 0usize;
            for run in runs {
                for t0 in 0..run.len().saturating_sub(lag) {
                    sum += (run[t0 + lag] - run[t0]).powi(2);
                    n += 1;
                }
            }
            sum / n as f64
        })
        .collect();
    Ok(MsdCurve {
        lags: (0..=max_lag).map(|k| k as f64 * dt).collect(),
        msd,
    })
}

pub fn msd(phi: &[f64], max_lag: usize, dt: f64) -> Result<MsdCurve> {
    msd_runs(&[phi], max_lag, dt)
}

/// Uniformly sampled initial-condition indices in `0..n` (with replacement).
pub fn sample_ics(n: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random_range(0..n)).collect()
}

/// Ensemble-averaged relative tracking error `||ω - ω̃|| / <||ω||>`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleError {
    /// Lead times in time units.
    pub lead_times: Vec<f64>,
    pub pooled: Vec<f64>,
    pub quiescent: Vec<f64>,
    pub bursting: Vec<f64>,
    pub n_quiescent: usize,
    pub n_bursting: usize,
}

impl EnsembleError {
    /// Pooled error at the lead time closest to `t`.
    pub fn pooled_at(&self, t: f64) -> f64 {
        let k = self
            .lead_times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(k, _)| k)
            .unwrap_or(0);
        self.pooled[k]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,pooled,quiescent,bursting\n");
        for k in 0..self.lead_times.len() {
            writeln!(
                out,
                "{},{:e},{:e},{:e}",
                self.lead_times[k], self.pooled[k], self.quiescent[k], self.bursting[k]
            )
            .unwrap();
        }
        out
    }
}

/// Roll the model forward from each snapshot in `ics` and compare the decoded
/// states with the true snapshots (rows of `truth`, sampled every `tau`).
/// ICs without a label or without `horizon` future snapshots are skipped.
pub fn ensemble_error(
    truth: ArrayView2<f64>,
    labels: &LabelSeries,
    ae: &Autoencoder,
    f: &ScaledNet,
    ics: &[usize],
    horizon: usize,
    tau: f64,
) -> Result<EnsembleError> {
    let n = truth.nrows();
    let mean_norm = truth.rows().into_iter().map(|r| r.dot(&r).sqrt()).sum::<f64>() / n.max(1) as f64;
    let usable: Vec<(usize, u8)> = ics
        .iter()
        .filter(|&&i| i + horizon < n)
        .filter_map(|&i| labels.at(i).map(|l| (i, l)))
        .collect();
    if usable.is_empty() {
        return Err(Error::EmptyData("no initial condition has a label and a full horizon".into()));
    }
    let curves: Vec<Result<(u8, Vec<f64>)>> = usable
        .par_iter()
        .map(|&(i, class)| {
            let h0 = ae.encode(truth.row(i).as_slice().expect("contiguous rows"))?;
            let path = rollout(f, None, &h0, 0.0, horizon, tau)?;
            let decoded = ae.decode_batch(path.h.view())?;
            let errs = (0..=horizon)
                .map(|k| {
                    let diff = &truth.row(i + k) - &decoded.row(k);
                    diff.dot(&diff).sqrt() / mean_norm
                })
                .collect();
            Ok((class, errs))
        })
        .collect();
    let mut sums = [vec![0.0; horizon + 1], vec![0.0; horizon + 1]];
    let mut counts = [0usize; 2];
    for c in curves {
        let (class, errs) = c?;
        counts[class as usize] += 1;
        for (s, e) in sums[class as usize].iter_mut().zip(errs) {
            *s += e;
        }
    }
    let total = (counts[0] + counts[1]) as f64;
    let avg = |k: usize| -> Vec<f64> {
        sums[k]
            .iter()
            .map(|s| if counts[k] > 0 { s / counts[k] as f64 } else { f64::NAN })
            .collect()
    };
    let pooled = (0..=horizon).map(|t| (sums[0][t] + sums[1][t]) / total).collect();
    Ok(EnsembleError {
        lead_times: (0..=horizon).map(|k| k as f64 * tau).collect(),
        pooled,
        quiescent: avg(0),
        bursting: avg(1),
        n_quiescent: counts[0],
        n_bursting: counts[1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest};

    fn hist_from_mass(mass: &[f64], nx: usize, ny: usize) -> Histogram2D {
        Histogram2D {
            x_edges: edges(0.0, 1.0, nx),
            y_edges: edges(0.0, 1.0, ny),
            counts: Array2::zeros((nx, ny)),
            mass: Array2::from_shape_vec((nx, ny), mass.to_vec()).unwrap(),
        }
    }

    #[test]
    fn single_cell() {
        let h = joint_pdf(&[0.3; 7], &[0.6; 7], (4, 4), ((0.0, 1.0), (0.0, 1.0))).unwrap();
        assert_eq!(h.mass[[1, 2]], 1.0);
        assert_eq!(h.mass.sum(), 1.0);
        assert!((h.density().sum() * h.cell_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn upper_edge_lands_in_last_bin() {
        let h = joint_pdf(&[1.0, 0.0], &[1.0, 0.0], (2, 2), ((0.0, 1.0), (0.0, 1.0))).unwrap();
        assert_eq!(h.counts[[1, 1]], 1);
        assert_eq!(h.counts[[0, 0]], 1);
    }

    #[test]
    fn empty_data_is_an_error() {
        assert!(matches!(
            joint_pdf(&[], &[], (2, 2), ((0.0, 1.0), (0.0, 1.0))),
            Err(Error::EmptyData(_))
        ));
    }

    #[test]
    fn uniform_samples_fill_cells_evenly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 1_000_000;
        let a: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let h = joint_pdf(&a, &b, (10, 10), ((0.0, 1.0), (0.0, 1.0))).unwrap();
        let sigma = (0.01 * 0.99 / n as f64).sqrt();
        for &m in h.mass.iter() {
            assert!((m - 0.01).abs() < 3.0 * sigma * 1.5, "{m}");
        }
    }

    #[test]
    fn kl_hand_example() {
        let q = hist_from_mass(&[0.5, 0.5, 0.0, 0.0], 2, 2);
        let p = hist_from_mass(&[0.25, 0.75, 0.0, 0.0], 2, 2);
        let want = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((kl_divergence(&q, &p).unwrap() - want).abs() < 1e-12);
        assert!((want - 0.1438).abs() < 1e-4);
    }

    #[test]
    fn kl_identical_and_disjoint() {
        let q = hist_from_mass(&[0.2, 0.3, 0.1, 0.4], 2, 2);
        assert_eq!(kl_divergence(&q, &q).unwrap(), 0.0);
        let a = hist_from_mass(&[1.0, 0.0, 0.0, 0.0], 2, 2);
        let b = hist_from_mass(&[0.0, 0.0, 0.0, 1.0], 2, 2);
        assert_eq!(kl_divergence(&a, &b).unwrap(), 0.0);
        let other = hist_from_mass(&[1.0; 3], 3, 1);
        assert!(matches!(kl_divergence(&a, &other), Err(Error::BinMismatch)));
    }

    #[test]
    fn ballistic_msd() {
        let phi: Vec<f64> = (0..200).map(|i| 0.3 * i as f64).collect();
        let curve = msd(&phi, 50, 1.0).unwrap();
        assert_eq!(curve.msd[0], 0.0);
        for (t, m) in curve.lags.iter().zip(&curve.msd) {
            assert!((m - 0.09 * t * t).abs() < 1e-9 * (1.0 + m));
        }
        assert!((curve.loglog_slope(1.0, 50.0) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn random_walk_msd_is_diffusive() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut phi = vec![0.0];
        for _ in 0..1_000_000 {
            let step = if rng.random::<bool>() { 1.0 } else { -1.0 };
            phi.push(phi.last().unwrap() + step);
        }
        let curve = msd(&phi, 100, 1.0).unwrap();
        let slope = curve.loglog_slope(10.0, 100.0);
        assert!((slope - 1.0).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn msd_does_not_mix_runs() {
        let a: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let b: Vec<f64> = vec![1000.0; 20];
        let curve = msd_runs(&[&a, &b], 5, 1.0).unwrap();
        // run b contributes zeros, run a contributes lag²; equal origin counts
        for (lag, m) in curve.msd.iter().enumerate() {
            assert!((m - (lag * lag) as f64 / 2.0).abs() < 1e-12);
        }
        assert!(matches!(msd(&a, 20, 1.0), Err(Error::TooShort { .. })));
    }

    #[test]
    fn gnuplot_rows() {
        let h = joint_pdf(&[0.1, 0.9], &[0.1, 0.1], (2, 1), ((0.0, 1.0), (0.0, 1.0))).unwrap();
        assert_eq!(h.to_gnuplot(), "# x y density\n2.5e-1 5e-1 1e0\n\n7.5e-1 5e-1 1e0\n\n");
        assert_eq!(h.to_csv(), "x,y,density\n2.5e-1,5e-1,1e0\n7.5e-1,5e-1,1e0\n");
    }

    #[test]
    fn two_bumps_have_two_maxima() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20000 {
            let c = if rng.random::<bool>() { 0.25 } else { 0.75 };
            a.push(c + 0.03 * (rng.random::<f64>() - 0.5));
            b.push(c + 0.03 * (rng.random::<f64>() - 0.5));
        }
        let h = joint_pdf(&a, &b, (8, 8), ((0.0, 1.0), (0.0, 1.0))).unwrap();
        assert_eq!(h.local_maxima(0.01), 2);
    }

    #[test]
    fn duration_histogram_has_unit_area() {
        let h = histogram_1d(&[5.0, 10.0, 10.0, 35.0], 4, (0.0, 40.0)).unwrap();
        let area: f64 = h.iter().map(|(_, d)| d * 10.0).sum();
        assert!((area - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn kl_matches_double_loop(raw_q in prop::collection::vec(0.0f64..1.0, 12), raw_p in prop::collection::vec(0.0f64..1.0, 12)) {
            let norm = |v: &[f64]| -> Vec<f64> {
                let s: f64 = v.iter().sum();
                v.iter().map(|x| if *x < 0.2 { 0.0 } else { x / s }).collect()
            };
            let q = hist_from_mass(&norm(&raw_q), 3, 4);
            let p = hist_from_mass(&norm(&raw_p), 3, 4);
            let mut want = 0.0;
            for i in 0..3 {
                for j in 0..4 {
                    let (a, b) = (q.mass[[i, j]], p.mass[[i, j]]);
                    if a != 0.0 && b != 0.0 {
                        want += a * (a / b).ln();
                    }
                }
            }
            prop_assert!((kl_divergence(&q, &p).unwrap() - want).abs() < 1e-12);
        }

        #[test]
        fn msd_is_sign_symmetric(phi in prop::collection::vec(-10.0f64..10.0, 12..40)) {
            let neg: Vec<f64> = phi.iter().map(|v| -v).collect();
            prop_assert_eq!(msd(&phi, 8, 5.0).unwrap(), msd(&neg, 8, 5.0).unwrap());
        }

        #[test]
        fn mass_is_conserved(a in prop::collection::vec(-3.0f64..3.0, 1..200), seed in 0u64..100) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b: Vec<f64> = a.iter().map(|_| rng.random_range(-3.0..3.0)).collect();
            let range = pooled_range(&[(&a, &b)]).unwrap();
            let h = joint_pdf(&a, &b, (7, 5), range).unwrap();
            prop_assert!((h.density().sum() * h.cell_area() - 1.0).abs() < 1e-12);
            prop_assert_eq!(h.counts.sum() as usize, a.len());
        }
    }
}
