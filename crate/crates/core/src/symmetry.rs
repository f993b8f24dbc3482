//! Symmetry operations of Kolmogorov flow and their reduction.
//!
//! The continuous translation in x is removed with a first-Fourier-mode slice
//! (the `(1,0)` mode is rotated to a pure cosine). The discrete shift-reflect
//! and rotation symmetries are collapsed with two sign indicators and a
//! template match respectively.
use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::SnapshotSeries;
use crate::spectral::{Grid, SpectralField};

/// Below this magnitude a phase or indicator sign is considered undefined.
pub const DEGENERACY_TOL: f64 = 1e-12;

/// One element of the symmetry group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SymmetryOp {
    /// `ω(x, y) -> ω(x - l, y)`, applied as `a(k) e^{-i kx l}`.
    Translate(f64),
    /// `S^p` with `S: ω(x, y) -> -ω(-x, y + π/n)`.
    ShiftReflect(u32),
    /// `R: ω(x, y) -> ω(-x, -y)`.
    Rotate,
}

/// Spatial phases of the `(1,0)` and `(0,1)` modes per snapshot.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PhaseTrace {
    pub phi_x: Vec<f64>,
    pub phi_y: Vec<f64>,
}

/// Symmetry-reduced snapshots with the bookkeeping needed to undo them.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedSeries {
    pub series: SnapshotSeries,
    /// Phases of the input snapshots, before any reduction.
    pub phase: PhaseTrace,
    pub ops_applied: Vec<Vec<SymmetryOp>>,
}

impl AlignedSeries {
    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    /// Net shift-reflect power applied to each snapshot (mod 2n).
    pub fn sr_powers(&self) -> Vec<u32> {
        let period = 2 * self.series.params.n;
        self.ops_applied
            .iter()
            .map(|ops| {
                ops.iter()
                    .map(|op| match op {
                        SymmetryOp::ShiftReflect(p) => *p,
                        _ => 0,
                    })
                    .sum::<u32>()
                    % period
            })
            .collect()
    }

    pub fn rotated(&self) -> Vec<bool> {
        self.ops_applied
            .iter()
            .map(|ops| ops.iter().filter(|op| **op == SymmetryOp::Rotate).count() % 2 == 1)
            .collect()
    }

    /// Sidecar CSV: `t,phi_x,phi_y,sr_power,rotated`.
    pub fn sidecar_csv(&self) -> String {
        let mut out = String::from("t,phi_x,phi_y,sr_power,rotated\n");
        let sr = self.sr_powers();
        let rot = self.rotated();
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{:.17e},{:.17e},{},{}\n",
                i as f64 * self.series.save_every,
                self.phase.phi_x[i],
                self.phase.phi_y[i],
                sr[i],
                rot[i] as u8
            ));
        }
        out
    }
}

/// `atan2` mapped into `(-π, π]`.
pub fn mode_phase(a: Complex64) -> f64 {
    let p = a.im.atan2(a.re);
    if p <= -PI {
        PI
    } else {
        p
    }
}

/// Wrap an angle into `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Multiply every mode by `e^{-i kx θ}` (integer `kx`), i.e. shift the field by
/// `θ/α` in x. The x-Nyquist column cannot be shifted on the grid and is
/// scaled by `cos(kx θ)` instead, which keeps the field real.
pub fn phase_shift(w: &SpectralField, theta: f64) -> SpectralField {
    let grid = w.grid;
    let ny = grid.ny;
    let mut out = w.clone();
    for i in 0..grid.nx {
        let k = grid.kx_int(i) as f64;
        let factor = if i == grid.nx / 2 {
            Complex64::new((k * theta).cos(), 0.0)
        } else {
            Complex64::from_polar(1.0, -k * theta)
        };
        for j in 0..ny {
            out.coeffs[i * ny + j] *= factor;
        }
    }
    out
}

fn shift_rows(grid: &Grid, n: u32) -> Result<usize> {
    let two_n = 2 * n as usize;
    if n == 0 || grid.ny % two_n != 0 {
        return Err(Error::GridIncompatible(format!(
            "a y-shift of π/{n} is not an integer number of rows for ny = {}",
            grid.ny
        )));
    }
    Ok(grid.ny / two_n)
}

fn shift_reflect_once(grid: &Grid, shift: usize, w: &[f64]) -> Vec<f64> {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut out = vec![0.0; w.len()];
    for ix in 0..nx {
        let src_x = (nx - ix) % nx;
        for iy in 0..ny {
            out[ix * ny + iy] = -w[src_x * ny + (iy + shift) % ny];
        }
    }
    out
}

fn rotate(grid: &Grid, w: &[f64]) -> Vec<f64> {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut out = vec![0.0; w.len()];
    for ix in 0..nx {
        for iy in 0..ny {
            out[ix * ny + iy] = w[((nx - ix) % nx) * ny + (ny - iy) % ny];
        }
    }
    out
}

/// Apply a symmetry operation to a real-space vorticity snapshot.
///
/// Shift-reflect and rotation are exact grid permutations; translation is a
/// spectral phase multiplication. `n` is the forcing wavenumber.
pub fn apply(op: SymmetryOp, grid: &Grid, n: u32, w: &[f64]) -> Result<Vec<f64>> {
    if w.len() != grid.len() {
        return Err(Error::ShapeMismatch(format!(
            "expected {} values, got {}",
            grid.len(),
            w.len()
        )));
    }
    match op {
        SymmetryOp::Translate(l) => {
            let field = SpectralField::from_real(*grid, w)?;
            Ok(phase_shift(&field, grid.alpha * l).to_real())
        }
        SymmetryOp::ShiftReflect(p) => {
            let shift = shift_rows(grid, n)?;
            let mut out = w.to_vec();
            for _ in 0..p % (2 * n) {
                out = shift_reflect_once(grid, shift, &out);
            }
            Ok(out)
        }
        SymmetryOp::Rotate => Ok(rotate(grid, w)),
    }
}

/// Phase of the `(1,0)` mode, erroring when the mode vanishes.
fn phase_x(w: &SpectralField, index: usize) -> Result<f64> {
    let a10 = w.mode(1, 0);
    if a10.norm() < DEGENERACY_TOL {
        return Err(Error::DegeneratePhase {
            index,
            magnitude: a10.norm(),
        });
    }
    Ok(mode_phase(a10))
}

/// Slice a single field: returns the aligned field and its `φ_x`.
pub fn align_field(w: &SpectralField, index: usize) -> Result<(SpectralField, f64)> {
    let phi = phase_x(w, index)?;
    Ok((phase_shift(w, phi), phi))
}

fn translate_op(grid: &Grid, theta: f64) -> SymmetryOp {
    SymmetryOp::Translate((theta / grid.alpha).rem_euclid(grid.lx()))
}

/// Method-of-slices alignment of every snapshot.
pub fn phase_align(series: &SnapshotSeries) -> Result<AlignedSeries> {
    let grid = series.grid;
    let mut data = Array2::zeros((series.len(), grid.len()));
    let mut phase = PhaseTrace::default();
    let mut ops = Vec::with_capacity(series.len());
    for i in 0..series.len() {
        let field = series.spectral(i);
        let (aligned, phi) = align_field(&field, i)?;
        phase.phi_x.push(phi);
        phase.phi_y.push(mode_phase(field.mode(0, 1)));
        ops.push(vec![translate_op(&grid, phi)]);
        data.row_mut(i).assign(&ndarray::ArrayView1::from(&aligned.to_real()));
    }
    Ok(AlignedSeries {
        series: SnapshotSeries::from_array(grid, series.params, series.save_every, data)?,
        phase,
        ops_applied: ops,
    })
}

/// Signs of the shift-reflect indicators `(sgn φ_y, sgn Re a(2,0))`.
fn indicators(w: &SpectralField, index: usize) -> Result<(bool, bool)> {
    let a01 = w.mode(0, 1);
    let phi_y = mode_phase(a01);
    let re20 = w.mode(2, 0).re;
    if a01.norm() < DEGENERACY_TOL
        || phi_y.abs() < DEGENERACY_TOL
        || (PI - phi_y.abs()) < DEGENERACY_TOL
    {
        return Err(Error::IndicatorDegenerate {
            index,
            detail: format!("φ_y = {phi_y:e}"),
        });
    }
    if re20.abs() < DEGENERACY_TOL {
        return Err(Error::IndicatorDegenerate {
            index,
            detail: format!("Re a(2,0) = {re20:e}"),
        });
    }
    Ok((phi_y > 0.0, re20 > 0.0))
}

/// Collapse one aligned snapshot onto the shift-reflect fundamental domain.
///
/// Returns the collapsed real-space field and the ops applied.
fn collapse_sr_single(
    grid: &Grid,
    n: u32,
    w: &[f64],
    index: usize,
) -> Result<(Vec<f64>, Vec<SymmetryOp>)> {
    let mut hits = Vec::new();
    for p in 0..2 * n {
        let shifted = apply(SymmetryOp::ShiftReflect(p), grid, n, w)?;
        let field = SpectralField::from_real(*grid, &shifted)?;
        let (aligned, theta) = align_field(&field, index)?;
        let (even, odd) = indicators(&aligned, index)?;
        if even && odd {
            hits.push((p, theta, aligned));
        }
    }
    if hits.len() != 1 {
        return Err(Error::IndicatorDegenerate {
            index,
            detail: format!(
                "{} of {} shift-reflect powers satisfy both indicators",
                hits.len(),
                2 * n
            ),
        });
    }
    let (p, theta, aligned) = hits.pop().unwrap();
    if p == 0 {
        return Ok((w.to_vec(), Vec::new()));
    }
    Ok((
        aligned.to_real(),
        vec![SymmetryOp::ShiftReflect(p), translate_op(grid, theta)],
    ))
}

/// Map every phase-aligned snapshot to the unique shift-reflect copy with
/// `φ_y > 0` and `Re a(2,0) > 0`.
pub fn collapse_shift_reflect(aligned: &AlignedSeries) -> Result<AlignedSeries> {
    let grid = aligned.series.grid;
    let n = aligned.series.params.n;
    let mut out = aligned.clone();
    for i in 0..aligned.len() {
        let row = aligned.series.snapshot(i).to_vec();
        let (collapsed, ops) = collapse_sr_single(&grid, n, &row, i)?;
        out.series
            .data
            .row_mut(i)
            .assign(&ndarray::ArrayView1::from(&collapsed));
        out.ops_applied[i].extend(ops);
    }
    Ok(out)
}

fn sq_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Choose between each shift-reflect-collapsed snapshot and its rotated (and
/// re-collapsed) copy, whichever is closer to `template` in l² norm. Ties keep
/// the unrotated snapshot.
pub fn collapse_rotation(aligned: &AlignedSeries, template: &[f64]) -> Result<AlignedSeries> {
    let grid = aligned.series.grid;
    let n = aligned.series.params.n;
    if template.len() != grid.len() {
        return Err(Error::ShapeMismatch("template does not match grid".into()));
    }
    let mut out = aligned.clone();
    for i in 0..aligned.len() {
        let row = aligned.series.snapshot(i).to_vec();
        let rotated = apply(SymmetryOp::Rotate, &grid, n, &row)?;
        let (realigned, theta) = align_field(&SpectralField::from_real(grid, &rotated)?, i)?;
        let (candidate, sr_ops) = collapse_sr_single(&grid, n, &realigned.to_real(), i)?;
        if sq_distance(&candidate, template) < sq_distance(&row, template) {
            out.series
                .data
                .row_mut(i)
                .assign(&ndarray::ArrayView1::from(&candidate));
            let ops = &mut out.ops_applied[i];
            ops.push(SymmetryOp::Rotate);
            ops.push(translate_op(&grid, theta));
            ops.extend(sr_ops);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{diagnostics, FlowParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Grid, FlowParams) {
        (Grid::default(), FlowParams::new(14.4, 2, 0.01).unwrap())
    }

    fn random_field(seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SpectralField::random(Grid::default(), &mut rng).to_real()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn series_of(rows: &[Vec<f64>]) -> SnapshotSeries {
        let (g, p) = setup();
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        SnapshotSeries::new(g, p, 5.0, rows.len(), data).unwrap()
    }

    #[test]
    fn shift_reflect_has_order_2n() {
        let (g, _) = setup();
        let w = random_field(1);
        let mut cur = w.clone();
        for _ in 0..4 {
            cur = apply(SymmetryOp::ShiftReflect(1), &g, 2, &cur).unwrap();
        }
        assert_eq!(cur, w);
        // S² is a pure y-translation by 2π/n
        let s2 = apply(SymmetryOp::ShiftReflect(2), &g, 2, &w).unwrap();
        assert_eq!(s2[0 * g.ny + 0], w[0 * g.ny + 16]);
    }

    #[test]
    fn rotation_is_involution_and_rsrs_is_identity() {
        let (g, _) = setup();
        let w = random_field(2);
        let rr = apply(
            SymmetryOp::Rotate,
            &g,
            2,
            &apply(SymmetryOp::Rotate, &g, 2, &w).unwrap(),
        )
        .unwrap();
        assert_eq!(rr, w);
        let mut cur = w.clone();
        for op in [
            SymmetryOp::ShiftReflect(1),
            SymmetryOp::Rotate,
            SymmetryOp::ShiftReflect(1),
            SymmetryOp::Rotate,
        ] {
            cur = apply(op, &g, 2, &cur).unwrap();
        }
        assert!(max_diff(&cur, &w) < 1e-12);
    }

    #[test]
    fn translation_inverse() {
        let (g, _) = setup();
        let w = random_field(3);
        let l = 1.234;
        let t = apply(SymmetryOp::Translate(l), &g, 2, &w).unwrap();
        let back = apply(SymmetryOp::Translate(g.lx() - l), &g, 2, &t).unwrap();
        assert!(max_diff(&back, &w) < 1e-12);
    }

    #[test]
    fn grid_shift_translation_is_a_permutation() {
        let (g, _) = setup();
        let w = random_field(4);
        let h = g.lx() / g.nx as f64;
        let t = apply(SymmetryOp::Translate(3.0 * h), &g, 2, &w).unwrap();
        for ix in 0..g.nx {
            for iy in 0..g.ny {
                let src = ((ix + g.nx - 3) % g.nx) * g.ny + iy;
                assert!((t[ix * g.ny + iy] - w[src]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn incompatible_grid_for_shift_reflect() {
        let g = Grid::new(32, 36, 1.0).unwrap();
        let w = vec![0.0; g.len()];
        assert!(matches!(
            apply(SymmetryOp::ShiftReflect(1), &g, 4, &w),
            Err(Error::GridIncompatible(_))
        ));
    }

    #[test]
    fn diagnostics_are_invariant() {
        let (g, p) = setup();
        let w = random_field(5);
        let base = diagnostics(&SpectralField::from_real(g, &w).unwrap(), p.re, p.n);
        for op in [
            SymmetryOp::Translate(0.77),
            SymmetryOp::ShiftReflect(1),
            SymmetryOp::ShiftReflect(3),
            SymmetryOp::Rotate,
        ] {
            let t = apply(op, &g, 2, &w).unwrap();
            let d = diagnostics(&SpectralField::from_real(g, &t).unwrap(), p.re, p.n);
            assert!((d.ke - base.ke).abs() < 1e-12);
            assert!((d.d - base.d).abs() < 1e-12);
            assert!((d.i - base.i).abs() < 1e-12);
        }
    }

    #[test]
    fn alignment_retracts_translations() {
        let (g, _) = setup();
        let w = random_field(6);
        let shifted = apply(SymmetryOp::Translate(2.5), &g, 2, &w).unwrap();
        let a = phase_align(&series_of(&[w.clone(), shifted])).unwrap();
        assert!(max_diff(&a.series.snapshot(0).to_vec(), &a.series.snapshot(1).to_vec()) < 1e-10);
        for i in 0..2 {
            let f = a.series.spectral(i);
            assert!(mode_phase(f.mode(1, 0)).abs() < 1e-8);
        }
        let again = phase_align(&a.series).unwrap();
        assert!(max_diff(
            again.series.data.as_slice().unwrap(),
            a.series.data.as_slice().unwrap()
        ) < 1e-12);
        assert!(a.phase.phi_x.iter().all(|p| *p > -PI && *p <= PI));
    }

    #[test]
    fn degenerate_phase_is_reported() {
        let (g, p) = setup();
        let lam = SpectralField::laminar(g, &p).to_real();
        let err = phase_align(&series_of(&[random_field(7), lam])).unwrap_err();
        assert!(matches!(err, Error::DegeneratePhase { index: 1, .. }));
    }

    /// All 2n shift-reflect images (re-aligned) of an aligned field.
    fn orbit(w: &[f64]) -> Vec<(u32, SpectralField)> {
        let (g, _) = setup();
        (0..4)
            .map(|p| {
                let s = apply(SymmetryOp::ShiftReflect(p), &g, 2, w).unwrap();
                let f = SpectralField::from_real(g, &s).unwrap();
                (p, align_field(&f, 0).unwrap().0)
            })
            .collect()
    }

    #[test]
    fn shift_reflect_collapse_matches_brute_force() {
        let (g, _) = setup();
        for seed in 10..30 {
            let a = phase_align(&series_of(&[random_field(seed)])).unwrap();
            let row = a.series.snapshot(0).to_vec();
            let valid: Vec<_> = orbit(&row)
                .into_iter()
                .filter(|(_, f)| mode_phase(f.mode(0, 1)) > 0.0 && f.mode(2, 0).re > 0.0)
                .collect();
            assert_eq!(valid.len(), 1);
            let c = collapse_shift_reflect(&a).unwrap();
            let got = c.series.snapshot(0).to_vec();
            assert!(max_diff(&got, &valid[0].1.to_real()) < 1e-10);
            assert_eq!(c.sr_powers()[0], valid[0].0);
            let f = SpectralField::from_real(g, &got).unwrap();
            assert!(mode_phase(f.mode(0, 1)) > 0.0 && f.mode(2, 0).re > 0.0);
            // idempotent
            let twice = collapse_shift_reflect(&c).unwrap();
            assert_eq!(twice.series, c.series);
        }
    }

    #[test]
    fn rotation_collapse_recovers_template() {
        let (g, _) = setup();
        let a = phase_align(&series_of(&[random_field(40)])).unwrap();
        let template = collapse_shift_reflect(&a).unwrap().series.snapshot(0).to_vec();
        let rotated = apply(SymmetryOp::Rotate, &g, 2, &template).unwrap();
        let input = series_of(&[template.clone(), rotated]);
        let reduced = collapse_shift_reflect(&phase_align(&input).unwrap()).unwrap();
        let out = collapse_rotation(&reduced, &template).unwrap();
        assert_eq!(out.rotated(), vec![false, true]);
        assert!(max_diff(&out.series.snapshot(0).to_vec(), &template) < 1e-12);
        assert!(max_diff(&out.series.snapshot(1).to_vec(), &template) < 1e-10);
    }

    #[test]
    fn rotation_collapse_is_exhaustive_minimizer() {
        let (g, _) = setup();
        let template = {
            let a = phase_align(&series_of(&[random_field(50)])).unwrap();
            collapse_shift_reflect(&a).unwrap().series.snapshot(0).to_vec()
        };
        let rows: Vec<Vec<f64>> = (51..61).map(random_field).collect();
        let reduced = collapse_shift_reflect(&phase_align(&series_of(&rows)).unwrap()).unwrap();
        let out = collapse_rotation(&reduced, &template).unwrap();
        for i in 0..rows.len() {
            // every group element {S^p R^r}, re-aligned, restricted to the
            // indicator-positive subspace
            let aligned = reduced.series.snapshot(i).to_vec();
            let mut best: Option<(f64, Vec<f64>)> = None;
            for r in 0..2 {
                let base = if r == 0 {
                    aligned.clone()
                } else {
                    apply(SymmetryOp::Rotate, &g, 2, &aligned).unwrap()
                };
                for (_, f) in orbit(&base) {
                    if mode_phase(f.mode(0, 1)) > 0.0 && f.mode(2, 0).re > 0.0 {
                        let v = f.to_real();
                        let d = sq_distance(&v, &template);
                        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                            best = Some((d, v));
                        }
                    }
                }
            }
            let (_, expected) = best.unwrap();
            assert!(max_diff(&out.series.snapshot(i).to_vec(), &expected) < 1e-10);
        }
    }

    #[test]
    fn sidecar_has_header_and_rows() {
        let a = phase_align(&series_of(&[random_field(70), random_field(71)])).unwrap();
        let csv = a.sidecar_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "t,phi_x,phi_y,sr_power,rotated");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("5,"));
    }
}
