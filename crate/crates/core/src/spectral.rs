//! Periodic-box discretization of R^3.
//!
//! A [`Grid`] owns the FFT plans, the wavenumber arrays and the cached dipolar
//! multiplier for one box. Fields carry an `Arc<Grid>` so plans are shared.
//!
//! Conventions: node `j` on axis `a` sits at `x = -L_a/2 + j h_a`, flat index
//! `i1 + n1 (i2 + n2 i3)` (x-fastest). The forward transform is the plain DFT
//! `F_k = sum_x u(x) e^{-i k.x}`; the continuous Fourier transform is
//! approximated by `h^3 F_k`, so `(2 pi)^{-3} int |u^|^2 dxi` becomes
//! `(h^3 / N) sum_k |F_k|^2`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry of the periodic box: points per axis and edge lengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: [usize; 3],
    #[serde(rename = "L")]
    pub len: [f64; 3],
}

impl GridSpec {
    pub fn new(n: [usize; 3], len: [f64; 3]) -> Result<Self> {
        for a in 0..3 {
            if n[a] < 8 || !n[a].is_power_of_two() {
                return Err(Error::Grid(format!(
                    "axis {} has {} points; need a power of two >= 8",
                    a + 1,
                    n[a]
                )));
            }
            if !(len[a].is_finite() && len[a] > 0.0) {
                return Err(Error::Grid(format!("axis {} has length {}", a + 1, len[a])));
            }
        }
        Ok(Self { n, len })
    }

    pub fn cubic(n: usize, len: f64) -> Result<Self> {
        Self::new([n; 3], [len; 3])
    }

    pub fn num_points(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn spacing(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.len[a] / self.n[a] as f64)
    }

    /// Quadrature weight of one node.
    pub fn cell_volume(&self) -> f64 {
        let h = self.spacing();
        h[0] * h[1] * h[2]
    }

    pub fn volume(&self) -> f64 {
        self.len[0] * self.len[1] * self.len[2]
    }

    pub fn coords(&self, axis: usize) -> Vec<f64> {
        let h = self.len[axis] / self.n[axis] as f64;
        (0..self.n[axis])
            .map(|j| -0.5 * self.len[axis] + j as f64 * h)
            .collect()
    }

    /// Wavenumbers in FFT order: `(2 pi / L) {0, 1, .., n/2-1, -n/2, .., -1}`.
    pub fn wavenumbers(&self, axis: usize) -> Vec<f64> {
        let n = self.n[axis];
        let dk = 2.0 * PI / self.len[axis];
        (0..n)
            .map(|j| {
                let m = if j < n / 2 { j as i64 } else { j as i64 - n as i64 };
                dk * m as f64
            })
            .collect()
    }

    /// Same points, box edges multiplied by `factors`.
    pub fn stretched(&self, factors: [f64; 3]) -> Result<Self> {
        Self::new(self.n, [0, 1, 2].map(|a| self.len[a] * factors[a]))
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{}x{} on [{}, {}, {}]",
            self.n[0], self.n[1], self.n[2], self.len[0], self.len[1], self.len[2]
        )
    }
}

#[derive(Clone)]
struct Plans {
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl Plans {
    fn new(n: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: n.map(|m| planner.plan_fft_forward(m)),
            inverse: n.map(|m| planner.plan_fft_inverse(m)),
        }
    }
}

/// A box together with its transform plans and spectral tables.
///
/// Immutable after construction; share it through `Arc`.
pub struct Grid {
    spec: GridSpec,
    plans: Plans,
    k: [Vec<f64>; 3],
    // Odd-derivative wavenumbers: the Nyquist entry is zeroed so derivatives
    // of real fields stay real.
    kd: [Vec<f64>; 3],
    dipolar: OnceLock<Arc<[f64]>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("spec", &self.spec).finish()
    }
}

impl Grid {
    pub fn new(spec: GridSpec) -> Arc<Self> {
        Arc::new(Self::build(spec, Plans::new(spec.n), OnceLock::new()))
    }

    fn build(spec: GridSpec, plans: Plans, dipolar: OnceLock<Arc<[f64]>>) -> Self {
        let k = [0, 1, 2].map(|a| spec.wavenumbers(a));
        let kd = [0, 1, 2].map(|a| {
            let mut v = k[a].clone();
            v[spec.n[a] / 2] = 0.0;
            v
        });
        Self {
            spec,
            plans,
            k,
            kd,
            dipolar,
        }
    }

    /// The same points on a box stretched by `factors`; plans are reused and
    /// the dipolar multiplier is carried over when the stretch is isotropic
    /// (the symbol is homogeneous of degree zero).
    pub fn stretched(&self, factors: [f64; 3]) -> Result<Arc<Self>> {
        let spec = self.spec.stretched(factors)?;
        let dipolar = OnceLock::new();
        if factors[0] == factors[1] && factors[1] == factors[2] {
            if let Some(m) = self.dipolar.get() {
                let _ = dipolar.set(m.clone());
            }
        }
        Ok(Arc::new(Self::build(spec, self.plans.clone(), dipolar)))
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn n(&self) -> [usize; 3] {
        self.spec.n
    }

    pub fn len(&self) -> usize {
        self.spec.num_points()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.spec.cell_volume()
    }

    pub fn wavenumbers(&self, axis: usize) -> &[f64] {
        &self.k[axis]
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.spec == other.spec
    }

    /// Calls `f(flat_index, [k1, k2, k3])` for every mode in storage order.
    pub fn for_each_mode(&self, mut f: impl FnMut(usize, [f64; 3])) {
        let [n1, n2, n3] = self.spec.n;
        let mut idx = 0;
        for i3 in 0..n3 {
            for i2 in 0..n2 {
                for i1 in 0..n1 {
                    f(idx, [self.k[0][i1], self.k[1][i2], self.k[2][i3]]);
                    idx += 1;
                }
            }
        }
    }

    /// Like [`Grid::for_each_mode`] with Nyquist-zeroed derivative wavenumbers.
    pub fn for_each_mode_deriv(&self, mut f: impl FnMut(usize, [f64; 3])) {
        let [n1, n2, n3] = self.spec.n;
        let mut idx = 0;
        for i3 in 0..n3 {
            for i2 in 0..n2 {
                for i1 in 0..n1 {
                    f(idx, [self.kd[0][i1], self.kd[1][i2], self.kd[2][i3]]);
                    idx += 1;
                }
            }
        }
    }

    /// Calls `f(flat_index, [x1, x2, x3])` for every node.
    pub fn for_each_node(&self, mut f: impl FnMut(usize, [f64; 3])) {
        let x = [0, 1, 2].map(|a| self.spec.coords(a));
        let [n1, n2, n3] = self.spec.n;
        let mut idx = 0;
        for i3 in 0..n3 {
            for i2 in 0..n2 {
                for i1 in 0..n1 {
                    f(idx, [x[0][i1], x[1][i2], x[2][i3]]);
                    idx += 1;
                }
            }
        }
    }

    /// `|xi|^2` per mode.
    pub fn ksq(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.for_each_mode(|i, k| out[i] = k[0] * k[0] + k[1] * k[1] + k[2] * k[2]);
        out
    }

    /// K^(xi) = (4 pi / 3)(2 xi3^2 - xi1^2 - xi2^2) / |xi|^2, zero at xi = 0.
    pub fn dipolar_multiplier(&self) -> Arc<[f64]> {
        self.dipolar
            .get_or_init(|| {
                let mut out = vec![0.0; self.len()];
                self.for_each_mode(|i, k| out[i] = dipolar_symbol(k));
                out.into()
            })
            .clone()
    }

    pub fn forward_in_place(&self, data: &mut [Complex64]) {
        self.fft3(data, false);
    }

    /// Inverse DFT including the `1/N` factor.
    pub fn inverse_in_place(&self, data: &mut [Complex64]) {
        self.fft3(data, true);
        let s = 1.0 / data.len() as f64;
        for z in data.iter_mut() {
            *z *= s;
        }
    }

    fn fft3(&self, data: &mut [Complex64], inverse: bool) {
        let [n1, n2, n3] = self.spec.n;
        assert_eq!(data.len(), n1 * n2 * n3, "buffer does not match grid");
        let plans = if inverse {
            &self.plans.inverse
        } else {
            &self.plans.forward
        };
        let scratch_len = plans
            .iter()
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        let mut scratch = vec![Complex64::new(0.0, 0.0); scratch_len];

        plans[0].process_with_scratch(data, &mut scratch);

        let mut cols = vec![Complex64::new(0.0, 0.0); STRIPE * n2.max(n3)];
        for plane in data.chunks_exact_mut(n1 * n2) {
            strided_pass(plane, n1, n2, &*plans[1], &mut cols, &mut scratch);
        }
        strided_pass(data, n1 * n2, n3, &*plans[2], &mut cols, &mut scratch);
    }
}

const STRIPE: usize = 16;

/// Transforms every line of length `len` with element stride `stride`,
/// gathering a stripe of adjacent lines at a time.
fn strided_pass(
    data: &mut [Complex64],
    stride: usize,
    len: usize,
    plan: &dyn Fft<f64>,
    cols: &mut [Complex64],
    scratch: &mut [Complex64],
) {
    for c0 in (0..stride).step_by(STRIPE) {
        let w = STRIPE.min(stride - c0);
        for i in 0..len {
            let row = &data[i * stride + c0..i * stride + c0 + w];
            for (b, z) in row.iter().enumerate() {
                cols[b * len + i] = *z;
            }
        }
        plan.process_with_scratch(&mut cols[..w * len], scratch);
        for i in 0..len {
            let row = &mut data[i * stride + c0..i * stride + c0 + w];
            for (b, z) in row.iter_mut().enumerate() {
                *z = cols[b * len + i];
            }
        }
    }
}

/// The dipolar symbol at one wavevector; zero at the origin.
pub fn dipolar_symbol(k: [f64; 3]) -> f64 {
    let perp = k[0] * k[0] + k[1] * k[1];
    let par = k[2] * k[2];
    let k2 = perp + par;
    if k2 == 0.0 {
        0.0
    } else {
        (4.0 * PI / 3.0) * (2.0 * par - perp) / k2
    }
}

/// Complex samples on a grid, one per node.
#[derive(Clone)]
pub struct ComplexField {
    grid: Arc<Grid>,
    values: Vec<Complex64>,
}

impl fmt::Debug for ComplexField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ComplexField")
            .field("grid", &self.grid.spec)
            .field("l2", &self.mass().sqrt())
            .finish()
    }
}

/// Spectral coefficients (unnormalized forward DFT) of a field.
#[derive(Clone)]
pub struct SpectralField {
    grid: Arc<Grid>,
    coeffs: Vec<Complex64>,
}

impl ComplexField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Grid(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn from_fn(grid: &Arc<Grid>, mut f: impl FnMut([f64; 3]) -> Complex64) -> Self {
        let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
        grid.for_each_node(|i, x| values[i] = f(x));
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn from_real_fn(grid: &Arc<Grid>, mut f: impl FnMut([f64; 3]) -> f64) -> Self {
        Self::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// Same samples reinterpreted on another box with the same point counts.
    pub fn with_grid(self, grid: &Arc<Grid>) -> Result<Self> {
        if grid.n() != self.grid.n() {
            return Err(Error::Grid("point counts differ".into()));
        }
        Ok(Self {
            grid: grid.clone(),
            values: self.values,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn transform(&self) -> SpectralField {
        let mut coeffs = self.values.clone();
        self.grid.forward_in_place(&mut coeffs);
        SpectralField {
            grid: self.grid.clone(),
            coeffs,
        }
    }

    pub fn integrate(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() * self.grid.cell_volume()
    }

    /// `int |u|^2`.
    pub fn mass(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    /// `int |u|^4`.
    pub fn l4_pow4(&self) -> f64 {
        self.values
            .iter()
            .map(|z| {
                let a = z.norm_sqr();
                a * a
            })
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).sum::<f64>() * self.grid.cell_volume()
    }

    /// `|u|^2` as a (real-valued) field.
    pub fn density(&self) -> ComplexField {
        ComplexField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .map(|z| Complex64::new(z.norm_sqr(), 0.0))
                .collect(),
        }
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    pub fn scaled(mut self, a: f64) -> Self {
        for z in &mut self.values {
            *z *= a;
        }
        self
    }

    /// Pointwise `u * v`.
    pub fn mul(&self, other: &ComplexField) -> ComplexField {
        ComplexField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }

    pub fn axpy(&mut self, a: Complex64, x: &ComplexField) {
        for (y, xv) in self.values.iter_mut().zip(&x.values) {
            *y += a * xv;
        }
    }

    /// `h^3 sum conj(u) v`.
    pub fn inner(&self, other: &ComplexField) -> Complex64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            * self.grid.cell_volume()
    }

    /// Lattice translation `(tau_s u)(x) = u(x - s h)`; exact on the grid.
    pub fn shifted(&self, steps: [i64; 3]) -> ComplexField {
        let [n1, n2, n3] = self.grid.n();
        let s = [0, 1, 2].map(|a| steps[a].rem_euclid(self.grid.n()[a] as i64) as usize);
        let mut out = vec![Complex64::new(0.0, 0.0); self.values.len()];
        for i3 in 0..n3 {
            let j3 = (i3 + s[2]) % n3;
            for i2 in 0..n2 {
                let j2 = (i2 + s[1]) % n2;
                for i1 in 0..n1 {
                    let j1 = (i1 + s[0]) % n1;
                    out[j1 + n1 * (j2 + n2 * j3)] = self.values[i1 + n1 * (i2 + n2 * i3)];
                }
            }
        }
        ComplexField {
            grid: self.grid.clone(),
            values: out,
        }
    }

    /// Multiplies the spectrum by `symbol(xi)`.
    pub fn apply_symbol(&self, symbol: impl Fn([f64; 3]) -> Complex64) -> ComplexField {
        let mut s = self.transform();
        self.grid
            .for_each_mode(|i, k| s.coeffs[i] *= symbol(k));
        s.inverse()
    }

    pub fn gradient(&self) -> [ComplexField; 3] {
        let s = self.transform();
        [0, 1, 2].map(|a| {
            let mut c = s.coeffs.clone();
            self.grid
                .for_each_mode_deriv(|i, k| c[i] *= Complex64::new(0.0, k[a]));
            SpectralField {
                grid: self.grid.clone(),
                coeffs: c,
            }
            .inverse()
        })
    }

    pub fn laplacian(&self) -> ComplexField {
        self.apply_symbol(|k| Complex64::new(-(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]), 0.0))
    }

    /// `int |grad u|^2`, evaluated spectrally with the full |xi|^2 symbol.
    pub fn kinetic(&self) -> f64 {
        self.transform().kinetic()
    }

    /// Free Schroedinger evolution `U(t) = exp(i t Laplacian / 2)`.
    pub fn free_evolve(&self, t: f64) -> ComplexField {
        let mut s = self.transform();
        s.free_evolve(t);
        s.inverse()
    }

    /// Trigonometric interpolant evaluated at the nodes of `grid`, with zero
    /// at nodes outside this box, for localized fields. Nyquist modes are
    /// dropped; sampling onto coarser spacing aliases modes beyond the new band.
    pub fn interpolated(&self, grid: &Arc<Grid>) -> Result<ComplexField> {
        let (src, dst) = (*self.grid.spec(), *grid.spec());
        // evaluation matrix per axis, rows = destination nodes, columns = source modes
        let mats: Vec<Vec<Complex64>> = (0..3)
            .map(|a| {
                let (ns, ks) = (src.n[a], src.wavenumbers(a));
                let x0 = src.coords(a)[0];
                let mut m = Vec::with_capacity(dst.n[a] * ns);
                let half = 0.5 * src.len[a] * (1.0 + 1e-12);
                for y in dst.coords(a) {
                    for (j, k) in ks.iter().enumerate() {
                        let skip = (ns % 2 == 0 && j == ns / 2) || y.abs() > half;
                        m.push(if skip { Complex64::new(0.0, 0.0) } else { Complex64::from_polar(1.0 / ns as f64, k * (y - x0)) });
                    }
                }
                m
            })
            .collect();
        let mut data = self.transform().coeffs;
        let mut shape = src.n;
        for a in 0..3 {
            let (ns, nd) = (shape[a], dst.n[a]);
            let mut next_shape = shape;
            next_shape[a] = nd;
            let stride: usize = shape[..a].iter().product();
            let outer: usize = shape[a + 1..].iter().product();
            let mut out = vec![Complex64::new(0.0, 0.0); stride * nd * outer];
            let mat = &mats[a];
            for o in 0..outer {
                for r in 0..nd {
                    let row = &mat[r * ns..(r + 1) * ns];
                    let dst_base = o * nd * stride + r * stride;
                    for (j, w) in row.iter().enumerate() {
                        if w.re == 0.0 && w.im == 0.0 {
                            continue;
                        }
                        let src_base = o * ns * stride + j * stride;
                        for i in 0..stride {
                            out[dst_base + i] += w * data[src_base + i];
                        }
                    }
                }
            }
            data = out;
            shape = next_shape;
        }
        ComplexField::from_values(grid, data)
    }

    /// Trigonometric interpolant sampled on another grid over the same box.
    /// Modes beyond the coarser band (including its Nyquist plane) are dropped.
    pub fn resampled(&self, grid: &Arc<Grid>) -> Result<ComplexField> {
        let (src, dst) = (self.grid.spec(), grid.spec());
        if (0..3).any(|a| (src.len[a] - dst.len[a]).abs() > 1e-12 * src.len[a]) {
            return Err(Error::Grid("resampling needs identical box lengths".into()));
        }
        let s = self.transform();
        let (ns, nd) = (src.n, dst.n);
        let half = [0, 1, 2].map(|a| ns[a].min(nd[a]) / 2);
        let signed = |j: usize, n: usize| if j < n / 2 { j as i64 } else { j as i64 - n as i64 };
        let scale = grid.len() as f64 / self.grid.len() as f64;
        let mut out = SpectralField::zeros(grid);
        for i3 in 0..ns[2] {
            let m3 = signed(i3, ns[2]);
            if m3.unsigned_abs() as usize >= half[2] {
                continue;
            }
            let d3 = m3.rem_euclid(nd[2] as i64) as usize;
            for i2 in 0..ns[1] {
                let m2 = signed(i2, ns[1]);
                if m2.unsigned_abs() as usize >= half[1] {
                    continue;
                }
                let d2 = m2.rem_euclid(nd[1] as i64) as usize;
                for i1 in 0..ns[0] {
                    let m1 = signed(i1, ns[0]);
                    if m1.unsigned_abs() as usize >= half[0] {
                        continue;
                    }
                    let d1 = m1.rem_euclid(nd[0] as i64) as usize;
                    out.coeffs[d1 + nd[0] * (d2 + nd[1] * d3)] =
                        s.coeffs[i1 + ns[0] * (i2 + ns[1] * i3)] * scale;
                }
            }
        }
        Ok(out.inverse())
    }
}

impl SpectralField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self {
            grid: Arc::clone(grid),
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn inverse(mut self) -> ComplexField {
        self.grid.inverse_in_place(&mut self.coeffs);
        ComplexField {
            grid: self.grid,
            values: self.coeffs,
        }
    }

    /// Spectral-side `int |u|^2` via discrete Parseval.
    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
            / self.coeffs.len() as f64
    }

    pub fn kinetic(&self) -> f64 {
        let mut acc = 0.0;
        self.grid.for_each_mode(|i, k| {
            acc += (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) * self.coeffs[i].norm_sqr()
        });
        acc * self.grid.cell_volume() / self.coeffs.len() as f64
    }

    pub fn free_evolve(&mut self, t: f64) {
        let coeffs = &mut self.coeffs;
        self.grid.for_each_mode(|i, k| {
            let ph = -0.5 * t * (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]);
            coeffs[i] *= Complex64::from_polar(1.0, ph);
        });
    }

    /// Fraction of spectral energy on modes with `|m_a| >= 7 n_a / 16` on some axis.
    pub fn tail_fraction(&self) -> f64 {
        let [n1, n2, n3] = self.grid.n();
        let cut = |j: usize, n: usize| {
            let m = if j < n / 2 { j } else { n - j };
            16 * m >= 7 * n
        };
        let (mut tail, mut total) = (0.0, 0.0);
        let mut idx = 0;
        for i3 in 0..n3 {
            for i2 in 0..n2 {
                for i1 in 0..n1 {
                    let e = self.coeffs[idx].norm_sqr();
                    total += e;
                    if cut(i1, n1) || cut(i2, n2) || cut(i3, n3) {
                        tail += e;
                    }
                    idx += 1;
                }
            }
        }
        if total == 0.0 {
            0.0
        } else {
            tail / total
        }
    }
}

/// `K * w` for a real density `w`.
///
/// Rejects fields with a non-negligible imaginary part: passing `u` instead of
/// `|u|^2` is the usual mistake.
pub fn dipolar_convolve(w: &ComplexField) -> Result<ComplexField> {
    let scale = w.sup_norm();
    if w.max_imag() > 1e-12 * scale {
        return Err(Error::Domain(
            "dipolar_convolve expects a real density such as |u|^2".into(),
        ));
    }
    Ok(dipolar_convolve_unchecked(w))
}

pub(crate) fn dipolar_convolve_unchecked(w: &ComplexField) -> ComplexField {
    let grid = w.grid().clone();
    let mult = grid.dipolar_multiplier();
    let mut s = w.transform();
    for (c, m) in s.coeffs.iter_mut().zip(mult.iter()) {
        *c *= m;
    }
    let mut out = s.inverse();
    for z in out.values_mut() {
        z.im = 0.0;
    }
    out
}

/// Riesz transform along `axis` (0-based): symbol `-i xi_j / |xi|`.
pub fn riesz_apply(f: &ComplexField, axis: usize) -> ComplexField {
    f.apply_symbol(|k| {
        let norm = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
        if norm == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, -k[axis] / norm)
        }
    })
}

/// `K * f` assembled from squared Riesz transforms:
/// `-(8 pi/3) R3^2 f + (4 pi/3)(R1^2 + R2^2) f`.
pub fn dipolar_via_riesz(f: &ComplexField) -> ComplexField {
    let sq = |axis: usize| riesz_apply(&riesz_apply(f, axis), axis);
    let mut out = sq(2).scaled(-8.0 * PI / 3.0);
    out.axpy(Complex64::new(4.0 * PI / 3.0, 0.0), &sq(1));
    out.axpy(Complex64::new(4.0 * PI / 3.0, 0.0), &sq(0));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, l: f64) -> Arc<Grid> {
        Grid::new(GridSpec::cubic(n, l).unwrap())
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::cubic(6, 1.0).is_err());
        assert!(GridSpec::cubic(12, 1.0).is_err());
        assert!(GridSpec::cubic(16, 0.0).is_err());
        assert!(GridSpec::new([16, 16, 32], [1.0, 2.0, 3.0]).is_ok());
    }

    #[test]
    fn multiplier_axis_values() {
        let k = 2.0 * PI / 16.0;
        assert_eq!(dipolar_symbol([0.0, 0.0, k]), 8.0 * PI / 3.0);
        assert_eq!(dipolar_symbol([k, 0.0, 0.0]), -4.0 * PI / 3.0);
        assert_eq!(dipolar_symbol([k, k, k]), 0.0);
        assert_eq!(dipolar_symbol([0.0; 3]), 0.0);
    }

    #[test]
    fn round_trip_anisotropic_grid() {
        let g = Grid::new(GridSpec::new([8, 16, 32], [3.0, 5.0, 7.0]).unwrap());
        let u = ComplexField::from_fn(&g, |x| {
            Complex64::new((x[0] * 1.3).sin() + x[2], (x[1] - x[2]).cos())
        });
        let back = u.transform().inverse();
        let err: f64 = u
            .values()
            .iter()
            .zip(back.values())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12 * u.sup_norm(), "{err}");
    }

    #[test]
    fn gradient_of_single_mode() {
        let g = grid(16, 2.0 * PI);
        let kv = [1.0, -3.0, 2.0];
        let u = ComplexField::from_fn(&g, |x| {
            Complex64::from_polar(1.0, kv[0] * x[0] + kv[1] * x[1] + kv[2] * x[2])
        });
        let grad = u.gradient();
        for a in 0..3 {
            for (d, v) in grad[a].values().iter().zip(u.values()) {
                assert!((d - Complex64::new(0.0, kv[a]) * v).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let g = grid(8, 3.0);
        let u = ComplexField::from_fn(&g, |_| Complex64::new(2.5, -1.0));
        assert!(u.laplacian().sup_norm() < 1e-13);
    }

    #[test]
    fn gaussian_integral() {
        let g = grid(64, 16.0);
        let u = ComplexField::from_real_fn(&g, |x| {
            PI.powf(-0.75) * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 2.0).exp()
        });
        assert!((u.density().integrate().re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn riesz_single_mode() {
        let g = grid(16, 2.0 * PI);
        for kz in [2.0, -3.0] {
            let u = ComplexField::from_fn(&g, |x| Complex64::from_polar(1.0, kz * x[2]));
            let r = riesz_apply(&u, 2);
            let factor = Complex64::new(0.0, -f64::signum(kz));
            for (a, b) in r.values().iter().zip(u.values()) {
                assert!((a - factor * b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn shift_matches_index_roll() {
        let g = grid(8, 8.0);
        let u = ComplexField::from_real_fn(&g, |x| x[0] + 10.0 * x[1] + 100.0 * x[2]);
        let s = u.shifted([1, -2, 3]);
        // (tau u)(x) = u(x - s h)
        let v = s.values()[2 + 8 * (3 + 8 * 4)];
        let w = u.values()[1 + 8 * (5 + 8 * 1)];
        assert_eq!(v, w);
    }

    #[test]
    fn resampling_keeps_band_limited_fields() {
        let fine = grid(32, 8.0);
        let coarse = grid(16, 8.0);
        let f = |x: [f64; 3]| {
            let k = 2.0 * std::f64::consts::PI / 8.0;
            Complex64::new((k * x[0]).cos() + (3.0 * k * x[2]).sin(), (2.0 * k * x[1]).cos())
        };
        let u = ComplexField::from_fn(&fine, f);
        let down = u.resampled(&coarse).unwrap();
        let expect = ComplexField::from_fn(&coarse, f);
        let up = down.resampled(&fine).unwrap();
        for (a, b) in down.values().iter().zip(expect.values()) {
            assert!((a - b).norm() < 1e-13);
        }
        for (a, b) in up.values().iter().zip(u.values()) {
            assert!((a - b).norm() < 1e-13);
        }
        assert!(u.resampled(&grid(16, 9.0)).is_err());
    }

    #[test]
    fn interpolation_onto_a_smaller_box() {
        let src = grid(32, 10.0);
        let dst = Grid::new(GridSpec::new([16, 32, 16], [8.0, 9.0, 10.0]).unwrap());
        let k = 2.0 * std::f64::consts::PI / 10.0;
        let f = |x: [f64; 3]| Complex64::new((k * x[0]).cos() * (2.0 * k * x[1]).sin(), (3.0 * k * x[2]).cos());
        let u = ComplexField::from_fn(&src, f).interpolated(&dst).unwrap();
        let expect = ComplexField::from_fn(&dst, f);
        for (a, b) in u.values().iter().zip(expect.values()) {
            assert!((a - b).norm() < 1e-12);
        }
        let q = |x: [f64; 3]| Complex64::new((-2.0 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp(), 0.0);
        let wide = ComplexField::from_fn(&grid(32, 8.0), q).interpolated(&grid(64, 16.0)).unwrap();
        let expect = ComplexField::from_fn(&grid(64, 16.0), q);
        for (a, b) in wide.values().iter().zip(expect.values()) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn convolve_rejects_complex_input() {
        let g = grid(8, 4.0);
        let u = ComplexField::from_fn(&g, |x| Complex64::new(1.0, x[0]));
        assert!(matches!(dipolar_convolve(&u), Err(Error::Domain(_))));
        let zero = ComplexField::zeros(&g);
        assert_eq!(dipolar_convolve(&zero).unwrap().sup_norm(), 0.0);
    }
}
