//! Pseudo-spectral integration of two-dimensional Kolmogorov flow in the
//! vorticity formulation
//!
//! ```text
//! dω/dt = -u·∇ω + (1/Re) ∇²ω - n cos(n y)
//! ```
//!
//! on the doubly periodic box `[0, 2π/α) × [0, 2π)`.
//!
//! Fourier coefficients are normalized so that `a(0,0)` is the domain mean,
//! i.e. `a(k) = 1/(nx ny) Σ ω(x, y) exp(-i k·x)`. Real-space arrays are stored
//! row-major with `x` as the slow index: value `(ix, iy)` lives at
//! `ix * ny + iy`.
use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::rc::Rc;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::SnapshotSeries;

/// Doubly periodic collocation grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    /// Aspect parameter; the domain length in x is `2π/alpha`.
    pub alpha: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            nx: 32,
            ny: 32,
            alpha: 1.0,
        }
    }
}

impl Grid {
    pub fn new(nx: usize, ny: usize, alpha: f64) -> Result<Self> {
        if nx < 8 || ny < 8 || nx % 2 != 0 || ny % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "nx and ny must be even and >= 8 (got {nx}x{ny})"
            )));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidGrid(format!("alpha must be positive (got {alpha})")));
        }
        Ok(Grid { nx, ny, alpha })
    }

    pub fn lx(&self) -> f64 {
        2.0 * PI / self.alpha
    }

    pub fn ly(&self) -> f64 {
        2.0 * PI
    }

    /// Number of collocation points.
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Integer wavenumber of FFT index `i` along x.
    pub fn kx_int(&self, i: usize) -> i64 {
        signed_index(i, self.nx)
    }

    /// Integer wavenumber of FFT index `j` along y.
    pub fn ky_int(&self, j: usize) -> i64 {
        signed_index(j, self.ny)
    }

    /// Physical wavenumber along x (`alpha * kx`).
    pub fn kx(&self, i: usize) -> f64 {
        self.alpha * self.kx_int(i) as f64
    }

    pub fn ky(&self, j: usize) -> f64 {
        self.ky_int(j) as f64
    }

    /// FFT storage index of integer wavenumber pair `(kx, ky)`.
    pub fn mode_index(&self, kx: i64, ky: i64) -> usize {
        let i = kx.rem_euclid(self.nx as i64) as usize;
        let j = ky.rem_euclid(self.ny as i64) as usize;
        i * self.ny + j
    }

    pub fn x(&self, ix: usize) -> f64 {
        ix as f64 * self.lx() / self.nx as f64
    }

    pub fn y(&self, iy: usize) -> f64 {
        iy as f64 * self.ly() / self.ny as f64
    }

    pub fn is_nyquist(&self, i: usize, j: usize) -> bool {
        i == self.nx / 2 || j == self.ny / 2
    }

    /// Two-thirds rule: keep modes with `|kx| <= nx/3` and `|ky| <= ny/3`.
    pub fn dealias_keep(&self, i: usize, j: usize) -> bool {
        let kx = self.kx_int(i).unsigned_abs() as f64;
        let ky = self.ky_int(j).unsigned_abs() as f64;
        kx <= self.nx as f64 / 3.0 && ky <= self.ny as f64 / 3.0
    }
}

fn signed_index(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Cached 2D complex FFT plans for one grid size.
pub(crate) struct Fft2 {
    nx: usize,
    ny: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

thread_local! {
    static PLANS: RefCell<HashMap<(usize, usize), Rc<Fft2>>> = RefCell::new(HashMap::new());
}

impl Fft2 {
    fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            nx,
            ny,
            fwd_x: planner.plan_fft_forward(nx),
            inv_x: planner.plan_fft_inverse(nx),
            fwd_y: planner.plan_fft_forward(ny),
            inv_y: planner.plan_fft_inverse(ny),
        }
    }

    pub(crate) fn for_grid(grid: &Grid) -> Rc<Fft2> {
        PLANS.with(|plans| {
            plans
                .borrow_mut()
                .entry((grid.nx, grid.ny))
                .or_insert_with(|| Rc::new(Fft2::new(grid.nx, grid.ny)))
                .clone()
        })
    }

    fn along_x(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>, plan: &dyn Fft<f64>) {
        let (nx, ny) = (self.nx, self.ny);
        scratch.resize(nx * ny, Complex64::default());
        for i in 0..nx {
            for j in 0..ny {
                scratch[j * nx + i] = buf[i * ny + j];
            }
        }
        plan.process(scratch);
        for i in 0..nx {
            for j in 0..ny {
                buf[i * ny + j] = scratch[j * nx + i];
            }
        }
    }

    /// Normalized forward transform in place.
    pub(crate) fn forward(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        self.fwd_y.process(buf);
        self.along_x(buf, scratch, self.fwd_x.as_ref());
        let scale = 1.0 / (self.nx * self.ny) as f64;
        for c in buf.iter_mut() {
            *c *= scale;
        }
    }

    /// Unnormalized inverse transform in place (inverse of [`Fft2::forward`]).
    pub(crate) fn inverse(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        self.inv_y.process(buf);
        self.along_x(buf, scratch, self.inv_x.as_ref());
    }
}

/// Fourier coefficients of a real scalar field.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    pub grid: Grid,
    /// Coefficient for FFT indices `(i, j)` at `i * ny + j`.
    pub coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: Grid) -> Self {
        SpectralField {
            grid,
            coeffs: vec![Complex64::default(); grid.len()],
        }
    }

    pub fn from_real(grid: Grid, values: &[f64]) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} grid values, got {}",
                grid.len(),
                values.len()
            )));
        }
        let mut coeffs: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let fft = Fft2::for_grid(&grid);
        let mut scratch = Vec::new();
        fft.forward(&mut coeffs, &mut scratch);
        let mut field = SpectralField { grid, coeffs };
        field.enforce_hermitian();
        Ok(field)
    }

    pub fn to_real(&self) -> Vec<f64> {
        let mut buf = self.coeffs.clone();
        let fft = Fft2::for_grid(&self.grid);
        let mut scratch = Vec::new();
        fft.inverse(&mut buf, &mut scratch);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Coefficient of integer wavenumber `(kx, ky)`.
    pub fn mode(&self, kx: i64, ky: i64) -> Complex64 {
        self.coeffs[self.grid.mode_index(kx, ky)]
    }

    pub fn set_mode(&mut self, kx: i64, ky: i64, value: Complex64) {
        let idx = self.grid.mode_index(kx, ky);
        self.coeffs[idx] = value;
    }

    /// Largest violation of `a(-k) = conj(a(k))`.
    pub fn hermitian_defect(&self) -> f64 {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut worst: f64 = 0.0;
        for i in 0..nx {
            for j in 0..ny {
                let a = self.coeffs[i * ny + j];
                let b = self.coeffs[((nx - i) % nx) * ny + (ny - j) % ny];
                worst = worst.max((a - b.conj()).norm());
            }
        }
        worst
    }

    /// Project onto the subspace of real-valued fields.
    pub fn enforce_hermitian(&mut self) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let src = self.coeffs.clone();
        for i in 0..nx {
            for j in 0..ny {
                let b = src[((nx - i) % nx) * ny + (ny - j) % ny];
                self.coeffs[i * ny + j] = 0.5 * (src[i * ny + j] + b.conj());
            }
        }
    }

    /// Domain average of the squared field (Parseval).
    pub fn mean_square(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Analytic laminar vorticity `-(Re/n) cos(n y)`.
    pub fn laminar(grid: Grid, params: &FlowParams) -> Self {
        let mut field = SpectralField::zeros(grid);
        let amp = -params.re / params.n as f64;
        let n = params.n as i64;
        field.set_mode(0, n, Complex64::new(0.5 * amp, 0.0));
        field.set_mode(0, -n, Complex64::new(0.5 * amp, 0.0));
        field
    }

    /// Random dealiased vorticity with coefficient amplitudes `∝ exp(-|k|²/4)`,
    /// scaled to unit kinetic energy.
    pub fn random<R: Rng + ?Sized>(grid: Grid, rng: &mut R) -> Self {
        let mut field = SpectralField::zeros(grid);
        let ny = grid.ny;
        for i in 0..grid.nx {
            for j in 0..ny {
                if (i == 0 && j == 0) || grid.is_nyquist(i, j) || !grid.dealias_keep(i, j) {
                    continue;
                }
                let k2 = grid.kx(i).powi(2) + grid.ky(j).powi(2);
                let amp = (-k2 / 4.0).exp();
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                field.coeffs[i * ny + j] = Complex64::new(re, im) * amp;
            }
        }
        field.enforce_hermitian();
        let ke = kinetic_energy(&field);
        if ke > 0.0 {
            let s = ke.sqrt().recip();
            for c in field.coeffs.iter_mut() {
                *c *= s;
            }
        }
        field
    }
}

/// Physical parameters and time step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    /// Reynolds number.
    pub re: f64,
    /// Forcing wavenumber.
    pub n: u32,
    pub dt: f64,
}

impl FlowParams {
    pub fn new(re: f64, n: u32, dt: f64) -> Result<Self> {
        if !(re > 0.0 && re.is_finite()) {
            return Err(Error::InvalidParameter(format!("Re must be positive (got {re})")));
        }
        if n < 1 {
            return Err(Error::InvalidParameter("forcing wavenumber must be >= 1".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive (got {dt})")));
        }
        Ok(FlowParams { re, n, dt })
    }

    /// Linear stability threshold of the laminar state, `n^{3/2} 2^{1/4}`.
    pub fn critical_re(n: u32) -> f64 {
        (n as f64).powf(1.5) * 2f64.powf(0.25)
    }

    pub fn laminar_ke(&self) -> f64 {
        self.re.powi(2) / (4.0 * (self.n as f64).powi(4))
    }

    pub fn laminar_dissipation(&self) -> f64 {
        self.re / (2.0 * (self.n as f64).powi(2))
    }
}

/// Kinetic energy, dissipation rate and power input at one instant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub ke: f64,
    pub d: f64,
    pub i: f64,
    pub t: f64,
}

/// Velocity `(u, v) = (∂ψ/∂y, -∂ψ/∂x)` with `∇²ψ = -ω` and zero-mean `ψ`.
pub fn velocity_from_vorticity(w: &SpectralField) -> (SpectralField, SpectralField) {
    let grid = w.grid;
    let mut u = SpectralField::zeros(grid);
    let mut v = SpectralField::zeros(grid);
    let ny = grid.ny;
    for i in 0..grid.nx {
        let kx = grid.kx(i);
        for j in 0..ny {
            let ky = grid.ky(j);
            let k2 = kx * kx + ky * ky;
            if k2 == 0.0 {
                continue;
            }
            let psi = w.coeffs[i * ny + j] / k2;
            u.coeffs[i * ny + j] = Complex64::new(0.0, ky) * psi;
            v.coeffs[i * ny + j] = Complex64::new(0.0, -kx) * psi;
        }
    }
    (u, v)
}

fn kinetic_energy(w: &SpectralField) -> f64 {
    let grid = &w.grid;
    let ny = grid.ny;
    let mut sum = 0.0;
    for i in 0..grid.nx {
        for j in 0..ny {
            let k2 = grid.kx(i).powi(2) + grid.ky(j).powi(2);
            if k2 > 0.0 {
                sum += w.coeffs[i * ny + j].norm_sqr() / k2;
            }
        }
    }
    0.5 * sum
}

/// KE, D and I from Parseval sums over the coefficients.
///
/// `D = (1/Re) <|∇u|²> = (1/Re) <ω²>` for a periodic solenoidal field, and
/// `I = <u sin(n y)> = -Im û(0, n)`.
pub fn diagnostics(w: &SpectralField, re: f64, n: u32) -> Diagnostics {
    let ke = kinetic_energy(w);
    let d = w.mean_square() / re;
    let n = n as i64;
    // û(0, n) = i n ψ̂(0, n) = i ω̂(0, n) / n
    let i = if (n as usize) < w.grid.ny / 2 {
        let u0n = Complex64::new(0.0, 1.0) * w.mode(0, n) / n as f64;
        -u0n.im
    } else {
        0.0
    };
    Diagnostics { ke, d, i, t: 0.0 }
}

/// Time integrator: Crank–Nicolson for viscosity, Heun for advection and
/// forcing, 2/3-rule dealiasing of the nonlinear term.
pub struct Solver {
    grid: Grid,
    params: FlowParams,
    fft: Rc<Fft2>,
    /// `-|k|²/Re`
    lin: Vec<f64>,
    forcing: Vec<Complex64>,
    keep: Vec<bool>,
    ikx: Vec<f64>,
    iky: Vec<f64>,
    inv_k2: Vec<f64>,
    bufs: [Vec<Complex64>; 5],
    scratch: Vec<Complex64>,
}

impl Solver {
    pub fn new(grid: Grid, params: FlowParams) -> Self {
        let len = grid.len();
        let ny = grid.ny;
        let mut lin = vec![0.0; len];
        let mut keep = vec![false; len];
        let mut ikx = vec![0.0; len];
        let mut iky = vec![0.0; len];
        let mut inv_k2 = vec![0.0; len];
        for i in 0..grid.nx {
            for j in 0..ny {
                let idx = i * ny + j;
                let (kx, ky) = (grid.kx(i), grid.ky(j));
                let k2 = kx * kx + ky * ky;
                lin[idx] = -k2 / params.re;
                keep[idx] = grid.dealias_keep(i, j) && !grid.is_nyquist(i, j);
                ikx[idx] = kx;
                iky[idx] = ky;
                inv_k2[idx] = if k2 > 0.0 { 1.0 / k2 } else { 0.0 };
            }
        }
        let mut forcing = SpectralField::zeros(grid);
        let n = params.n as i64;
        let amp = -(params.n as f64) * 0.5;
        forcing.set_mode(0, n, Complex64::new(amp, 0.0));
        forcing.set_mode(0, -n, Complex64::new(amp, 0.0));
        Solver {
            grid,
            params,
            fft: Fft2::for_grid(&grid),
            lin,
            forcing: forcing.coeffs,
            keep,
            ikx,
            iky,
            inv_k2,
            bufs: std::array::from_fn(|_| vec![Complex64::default(); len]),
            scratch: Vec::with_capacity(len),
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn params(&self) -> FlowParams {
        self.params
    }

    /// Dealiased `-∇·(u ω)` into `out`.
    fn nonlinear(&mut self, w: &[Complex64], out: &mut [Complex64]) {
        let [u, v, wr, fu, fv] = &mut self.bufs;
        for idx in 0..w.len() {
            let psi = w[idx] * self.inv_k2[idx];
            u[idx] = Complex64::new(0.0, self.iky[idx]) * psi;
            v[idx] = Complex64::new(0.0, -self.ikx[idx]) * psi;
            wr[idx] = w[idx];
        }
        self.fft.inverse(u, &mut self.scratch);
        self.fft.inverse(v, &mut self.scratch);
        self.fft.inverse(wr, &mut self.scratch);
        for idx in 0..w.len() {
            let omega = wr[idx].re;
            fu[idx] = Complex64::new(u[idx].re * omega, 0.0);
            fv[idx] = Complex64::new(v[idx].re * omega, 0.0);
        }
        self.fft.forward(fu, &mut self.scratch);
        self.fft.forward(fv, &mut self.scratch);
        for idx in 0..w.len() {
            out[idx] = if self.keep[idx] {
                -Complex64::new(0.0, 1.0) * (self.ikx[idx] * fu[idx] + self.iky[idx] * fv[idx])
            } else {
                Complex64::default()
            };
        }
    }

    /// Advance one time step.
    pub fn step(&mut self, w: &SpectralField) -> Result<SpectralField> {
        if w.grid != self.grid {
            return Err(Error::ShapeMismatch("field grid differs from solver grid".into()));
        }
        let dt = self.params.dt;
        let len = self.grid.len();
        let mut n0 = vec![Complex64::default(); len];
        self.nonlinear(&w.coeffs, &mut n0);

        let mut pred = vec![Complex64::default(); len];
        for idx in 0..len {
            let l = self.lin[idx];
            pred[idx] = ((1.0 + 0.5 * dt * l) * w.coeffs[idx] + dt * (n0[idx] + self.forcing[idx]))
                / (1.0 - 0.5 * dt * l);
        }
        let mut n1 = vec![Complex64::default(); len];
        self.nonlinear(&pred, &mut n1);

        let mut next = SpectralField::zeros(self.grid);
        for idx in 0..len {
            let l = self.lin[idx];
            next.coeffs[idx] = ((1.0 + 0.5 * dt * l) * w.coeffs[idx]
                + 0.5 * dt * (n0[idx] + n1[idx])
                + dt * self.forcing[idx])
                / (1.0 - 0.5 * dt * l);
        }
        next.coeffs[0] = Complex64::default();
        next.enforce_hermitian();
        if !next.is_finite() {
            return Err(Error::NonFinite("vorticity diverged; reduce dt".into()));
        }
        Ok(next)
    }

    /// Advance `steps` time steps.
    pub fn advance(&mut self, w: &SpectralField, steps: usize) -> Result<SpectralField> {
        let mut state = w.clone();
        for _ in 0..steps {
            state = self.step(&state)?;
        }
        Ok(state)
    }

    /// Integrate for `t_total`, saving every `save_every` time units.
    ///
    /// The first snapshot is the initial condition.
    pub fn simulate(
        &mut self,
        ic: &SpectralField,
        t_total: f64,
        save_every: f64,
    ) -> Result<SnapshotSeries> {
        let dt = self.params.dt;
        let stride = steps_per(save_every, dt)?;
        if !(t_total >= 0.0) {
            return Err(Error::InvalidParameter(format!("t_total must be >= 0 (got {t_total})")));
        }
        let count = (t_total / save_every + 1e-9).floor() as usize + 1;
        let mut data = Vec::with_capacity(count * self.grid.len());
        let mut state = ic.clone();
        data.extend(state.to_real());
        for _ in 1..count {
            state = self.advance(&state, stride)?;
            data.extend(state.to_real());
        }
        SnapshotSeries::new(self.grid, self.params, save_every, count, data)
    }
}

/// Number of solver steps in an interval; errors unless it is an integer
/// multiple of `dt`.
pub fn steps_per(interval: f64, dt: f64) -> Result<usize> {
    let ratio = interval / dt;
    let steps = ratio.round();
    if !(interval > 0.0) || steps < 1.0 || (ratio - steps).abs() > 1e-6 * ratio.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "interval {interval} is not a positive integer multiple of dt = {dt}"
        )));
    }
    Ok(steps as usize)
}

/// One time step of the solver (convenience wrapper).
pub fn step(w: &SpectralField, params: &FlowParams) -> Result<SpectralField> {
    Solver::new(w.grid, *params).step(w)
}

/// Convenience wrapper around [`Solver::simulate`].
pub fn simulate(
    ic: &SpectralField,
    params: &FlowParams,
    t_total: f64,
    save_every: f64,
) -> Result<SnapshotSeries> {
    Solver::new(ic.grid, *params).simulate(ic, t_total, save_every)
}

/// Spectral divergence of a velocity pair, max over modes.
pub fn max_divergence(u: &SpectralField, v: &SpectralField) -> f64 {
    let grid = u.grid;
    let ny = grid.ny;
    let mut worst: f64 = 0.0;
    for i in 0..grid.nx {
        for j in 0..ny {
            let idx = i * ny + j;
            let div = Complex64::new(0.0, grid.kx(i)) * u.coeffs[idx]
                + Complex64::new(0.0, grid.ky(j)) * v.coeffs[idx];
            worst = worst.max(div.norm());
        }
    }
    worst
}
