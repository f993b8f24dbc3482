//! Quiescent/bursting labeling of snapshot norms.
//!
//! A snapshot whose norm reaches `norm_threshold` is bursting outright.
//! Otherwise it is bursting only when both the `past` preceding and the
//! `future` following norms contain at least one value that differs from it
//! by more than `diff_threshold`.
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelParams {
    pub norm_threshold: f64,
    pub diff_threshold: f64,
    pub past: usize,
    pub future: usize,
}

impl Default for LabelParams {
    fn default() -> Self {
        LabelParams {
            norm_threshold: 60.0,
            diff_threshold: 5.0,
            past: 10,
            future: 10,
        }
    }
}

/// Labels for snapshots `first_labeled..first_labeled + labels.len()`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelSeries {
    pub labels: Vec<u8>,
    pub first_labeled: usize,
    /// Norms of every snapshot, labeled or not.
    pub norms: Vec<f64>,
}

impl LabelSeries {
    /// Label of snapshot `index`, if it was labeled.
    pub fn at(&self, index: usize) -> Option<u8> {
        index
            .checked_sub(self.first_labeled)
            .and_then(|k| self.labels.get(k).copied())
    }

    pub fn bursting_fraction(&self) -> f64 {
        self.labels.iter().map(|&l| l as f64).sum::<f64>() / self.labels.len().max(1) as f64
    }

    /// CSV `index,norm,label` over the labeled snapshots.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,norm,label\n");
        for (k, &l) in self.labels.iter().enumerate() {
            let i = k + self.first_labeled;
            writeln!(out, "{i},{:e},{l}", self.norms[i]).unwrap();
        }
        out
    }
}

/// Label a sequence of snapshot norms.
pub fn label_norms(norms: &[f64], p: &LabelParams) -> Result<LabelSeries> {
    let ns = norms.len();
    if ns <= p.past + p.future {
        return Err(Error::TooShort {
            needed: p.past + p.future + 1,
            got: ns,
        });
    }
    let exceeds = |window: &[f64], centre: f64| window.iter().filter(|&&v| (v - centre).abs() > p.diff_threshold).count();
    let labels = (p.past..ns - p.future)
        .map(|i| {
            let w = norms[i];
            if w >= p.norm_threshold {
                return 1;
            }
            let before = exceeds(&norms[i - p.past..i], w);
            let after = exceeds(&norms[i..i + p.future], w);
            u8::from(before != 0 && after != 0)
        })
        .collect();
    Ok(LabelSeries {
        labels,
        first_labeled: p.past,
        norms: norms.to_vec(),
    })
}

/// Label snapshots (rows) by their flattened Euclidean norm.
pub fn label(series: &crate::series::SnapshotSeries, p: &LabelParams) -> Result<LabelSeries> {
    label_norms(&series.norms(), p)
}

/// Lengths (times `tau`) of the interior quiescent and bursting runs.
/// Runs touching either end of the series are censored and dropped.
pub fn durations(labels: &[u8], tau: f64) -> (Vec<f64>, Vec<f64>) {
    let mut runs: Vec<(u8, usize)> = Vec::new();
    for &l in labels {
        match runs.last_mut() {
            Some((v, len)) if *v == l => *len += 1,
            _ => runs.push((l, 1)),
        }
    }
    let mut quiescent = Vec::new();
    let mut bursting = Vec::new();
    if runs.len() > 2 {
        for &(v, len) in &runs[1..runs.len() - 1] {
            let t = len as f64 * tau;
            if v == 0 {
                quiescent.push(t);
            } else {
                bursting.push(t);
            }
        }
    }
    (quiescent, bursting)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Literal index-by-index transcription of the pseudocode.
    fn oracle(w: &[f64], t1: f64, t2: f64, b: usize, f: usize) -> Vec<u8> {
        let ns = w.len();
        let mut s = vec![0u8; ns - b - f];
        let mut i = b;
        while i < ns - f {
            if w[i] >= t1 {
                s[i - b] = 1;
            } else {
                let mut bp = 0;
                let mut j = i - b;
                while j < i {
                    if (w[j] - w[i]).abs() > t2 {
                        bp += 1;
                    }
                    j += 1;
                }
                let mut bf = 0;
                let mut j = i;
                while j < i + f {
                    if (w[j] - w[i]).abs() > t2 {
                        bf += 1;
                    }
                    j += 1;
                }
                s[i - b] = if bp == 0 || bf == 0 { 0 } else { 1 };
            }
            i += 1;
        }
        s
    }

    #[test]
    fn constant_norms() {
        let p = LabelParams::default();
        assert!(label_norms(&[40.0; 50], &p).unwrap().labels.iter().all(|&l| l == 0));
        assert!(label_norms(&[70.0; 50], &p).unwrap().labels.iter().all(|&l| l == 1));
    }

    #[test]
    fn step_signal_matches_oracle() {
        let w: Vec<f64> = (0..100).map(|i| if i < 50 { 40.0 } else { 80.0 }).collect();
        let p = LabelParams::default();
        let got = label_norms(&w, &p).unwrap();
        assert_eq!(got.labels, oracle(&w, 60.0, 5.0, 10, 10));
        assert_eq!(got.labels.len(), 80);
        assert_eq!(got.first_labeled, 10);
        assert_eq!(got.at(10), Some(got.labels[0]));
        assert_eq!(got.at(9), None);
    }

    #[test]
    fn too_short_is_an_error() {
        let p = LabelParams::default();
        assert!(matches!(label_norms(&[1.0; 20], &p), Err(Error::TooShort { .. })));
        assert!(label_norms(&[1.0; 21], &p).is_ok());
    }

    #[test]
    fn duration_runs() {
        let (q, b) = durations(&[0, 0, 0, 1, 1, 0, 0], 5.0);
        assert_eq!(b, vec![10.0]);
        assert!(q.is_empty());
        let (q, b) = durations(&[1, 0, 0, 1, 1, 1, 0], 5.0);
        assert_eq!(q, vec![10.0]);
        assert_eq!(b, vec![15.0]);
        assert_eq!(durations(&[0; 9], 5.0), (vec![], vec![]));
    }

    #[test]
    fn csv_layout() {
        let csv = label_norms(&[1.0, 2.0, 3.0], &LabelParams { past: 1, future: 1, ..LabelParams::default() })
            .unwrap()
            .to_csv();
        assert_eq!(csv, "index,norm,label\n1,2e0,0\n");
    }

    proptest! {
        #[test]
        fn agrees_with_oracle(
            w in prop::collection::vec(30.0f64..80.0, 25..120),
            b in 1usize..12,
            f in 1usize..12,
            t2 in 0.5f64..10.0,
        ) {
            prop_assume!(w.len() > b + f);
            let p = LabelParams { norm_threshold: 60.0, diff_threshold: t2, past: b, future: f };
            prop_assert_eq!(label_norms(&w, &p).unwrap().labels, oracle(&w, 60.0, t2, b, f));
        }

        #[test]
        fn raising_threshold_never_adds_threshold_labels(w in prop::collection::vec(30.0f64..80.0, 30..60), bump in 0.0f64..15.0) {
            let lo = LabelParams::default();
            let hi = LabelParams { norm_threshold: 60.0 + bump, ..lo };
            let a = label_norms(&w, &lo).unwrap();
            let c = label_norms(&w, &hi).unwrap();
            for k in 0..a.labels.len() {
                let norm = w[k + lo.past];
                if norm >= hi.norm_threshold {
                    prop_assert_eq!(c.labels[k], 1);
                }
                if a.labels[k] == 0 && norm < lo.norm_threshold {
                    // decided by the window branch, which ignores the threshold
                    prop_assert_eq!(c.labels[k], 0);
                }
            }
        }
    }
}
