//! End-to-end helpers shared by the command line tool and the acceptance
//! tests: generating a post-transient run and reducing it by symmetry.
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::series::SnapshotSeries;
use crate::spectral::{FlowParams, Grid, Solver, SpectralField};
use crate::symmetry::{collapse_rotation, collapse_shift_reflect, phase_align, wrap_angle, AlignedSeries};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub re: f64,
    pub n: u32,
    pub nx: usize,
    pub ny: usize,
    pub dt: f64,
    pub t_total: f64,
    pub save_every: f64,
    /// Time integrated and thrown away before the first saved snapshot.
    pub discard: f64,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            re: 14.4,
            n: 2,
            nx: 32,
            ny: 32,
            dt: 0.01,
            t_total: 1000.0,
            save_every: 5.0,
            discard: 1000.0,
            seed: 0,
        }
    }
}

/// Integrate from a seeded random initial condition, drop `discard` time
/// units of transient, then record `t_total` time units.
pub fn generate(cfg: &SimulateConfig) -> Result<SnapshotSeries> {
    let grid = Grid::new(cfg.nx, cfg.ny, 1.0)?;
    let params = FlowParams::new(cfg.re, cfg.n, cfg.dt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ic = SpectralField::random(grid, &mut rng);
    let mut solver = Solver::new(grid, params);
    let start = solver.advance(&ic, (cfg.discard / cfg.dt).round() as usize)?;
    solver.simulate(&start, cfg.t_total, cfg.save_every)
}

/// Phase alignment always happens. The discrete collapses are off by default
/// since they scramble the direction of phase drift the dynamics need.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReduceConfig {
    pub shift_reflect: bool,
    pub rotation: bool,
}

impl Default for ReduceConfig {
    fn default() -> Self {
        ReduceConfig {
            shift_reflect: false,
            rotation: false,
        }
    }
}

/// Phase-align, then optionally collapse the shift-reflect and rotation
/// symmetries. The rotation template is `template` when given, else the first
/// collapsed snapshot; the template actually used is returned.
pub fn reduce(
    series: &SnapshotSeries,
    cfg: &ReduceConfig,
    template: Option<&[f64]>,
) -> Result<(AlignedSeries, Option<Vec<f64>>)> {
    let mut aligned = phase_align(series)?;
    if cfg.shift_reflect {
        aligned = collapse_shift_reflect(&aligned)?;
    }
    let mut used = None;
    if cfg.rotation && !aligned.is_empty() {
        let t = match template {
            Some(t) => t.to_vec(),
            None => aligned.series.snapshot(0).to_vec(),
        };
        aligned = collapse_rotation(&aligned, &t)?;
        used = Some(t);
    }
    Ok((aligned, used))
}

/// Undo the modulo-2π jumps of a phase trace.
pub fn unwrap_phase(phi: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phi.len());
    for (k, &p) in phi.iter().enumerate() {
        if k == 0 {
            out.push(p);
        } else {
            let prev = out[k - 1];
            out.push(prev + wrap_angle(p - phi[k - 1]));
        }
    }
    out
}
