//! Periodic computational box, complex fields on it, and the spectral
//! operators (derivatives, Fourier multipliers, angular momentum) that act
//! on those fields.
//!
//! Samples are stored row-major with the third axis fastest:
//! `index = (i * n + j) * n + k` addresses the point `(x[i], x[j], x[k])`.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Fraction of the mass allowed outside `|x| > 0.9 L` before coordinate
/// multiplications are flagged as boundary-contaminated.
pub const BOUNDARY_MASS_TOLERANCE: f64 = 0.01;
const BOUNDARY_SHELL: f64 = 0.9;

struct GridInner {
    n: usize,
    half_length: f64,
    offset: bool,
    spacing: f64,
    coords: Vec<f64>,
    /// Wavenumber of every FFT output slot, in storage order.
    wavenumbers: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// The periodic cube `[-L, L)^3` sampled with `n` points per axis.
///
/// Cloning is cheap; clones share the coordinate tables and FFT plans.
#[derive(Clone)]
pub struct GridSpec {
    inner: Arc<GridInner>,
}

impl fmt::Debug for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridSpec")
            .field("n_per_axis", &self.inner.n)
            .field("half_length", &self.inner.half_length)
            .field("offset", &self.inner.offset)
            .field("spacing", &self.inner.spacing)
            .finish()
    }
}

impl PartialEq for GridSpec {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.n == other.inner.n
                && self.inner.half_length == other.inner.half_length
                && self.inner.offset == other.inner.offset)
    }
}

/// Build a grid. `n_per_axis` must be even and at least 4.
pub fn make_grid(n_per_axis: usize, half_length: f64, offset: bool) -> Result<GridSpec> {
    if n_per_axis < 4 || n_per_axis % 2 != 0 {
        return Err(Error::Config(format!(
            "n_per_axis must be even and >= 4, got {n_per_axis}"
        )));
    }
    if !(half_length > 0.0 && half_length.is_finite()) {
        return Err(Error::Config(format!(
            "half_length must be positive and finite, got {half_length}"
        )));
    }
    let n = n_per_axis;
    let spacing = 2.0 * half_length / n as f64;
    let shift = if offset { 0.5 } else { 0.0 };
    let coords = (0..n)
        .map(|i| -half_length + (i as f64 + shift) * spacing)
        .collect();
    let dk = std::f64::consts::PI / half_length;
    let wavenumbers = (0..n)
        .map(|i| {
            let m = if i < n / 2 { i as i64 } else { i as i64 - n as i64 };
            m as f64 * dk
        })
        .collect();
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    Ok(GridSpec {
        inner: Arc::new(GridInner {
            n,
            half_length,
            offset,
            spacing,
            coords,
            wavenumbers,
            forward,
            inverse,
        }),
    })
}

impl GridSpec {
    pub fn n_per_axis(&self) -> usize {
        self.inner.n
    }

    pub fn half_length(&self) -> f64 {
        self.inner.half_length
    }

    pub fn offset(&self) -> bool {
        self.inner.offset
    }

    pub fn spacing(&self) -> f64 {
        self.inner.spacing
    }

    /// Total number of samples, `n^3`.
    pub fn len(&self) -> usize {
        self.inner.n * self.inner.n * self.inner.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight of one sample (`h^3`).
    pub fn cell_volume(&self) -> f64 {
        self.inner.spacing.powi(3)
    }

    /// Sample coordinates along one axis.
    pub fn coords(&self) -> &[f64] {
        &self.inner.coords
    }

    /// Wavenumbers in FFT storage order: `0, dk, .., (n/2-1) dk, -n/2 dk, .., -dk`.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.inner.wavenumbers
    }

    /// The wavenumber lattice in increasing order, `(pi/L) * {-n/2, .., n/2-1}`.
    pub fn lattice(&self) -> Vec<f64> {
        let mut k = self.inner.wavenumbers.clone();
        k.sort_by(f64::total_cmp);
        k
    }

    pub(crate) fn nyquist_slot(&self) -> usize {
        self.inner.n / 2
    }

    #[inline]
    pub fn split_index(&self, idx: usize) -> [usize; 3] {
        let n = self.inner.n;
        [idx / (n * n), (idx / n) % n, idx % n]
    }

    #[inline]
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let [i, j, k] = self.split_index(idx);
        let c = &self.inner.coords;
        [c[i], c[j], c[k]]
    }

    /// `|x|` at every sample.
    pub fn radii(&self) -> Vec<f64> {
        (0..self.len())
            .map(|idx| {
                let [x, y, z] = self.point(idx);
                (x * x + y * y + z * z).sqrt()
            })
            .collect()
    }

    /// Smallest `|x|` over all samples.
    pub fn min_radius(&self) -> f64 {
        let m = self
            .inner
            .coords
            .iter()
            .map(|c| c.abs())
            .fold(f64::INFINITY, f64::min);
        m * 3f64.sqrt()
    }

    /// In-place forward DFT over all three axes (unnormalized).
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inner.forward);
    }

    /// In-place inverse DFT over all three axes, normalized so that
    /// `inverse(forward(f)) == f`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inner.inverse);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }

    /// Inverse DFT without the `1/n^3` factor; callers fold it into a multiplier.
    fn inverse_unscaled(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inner.inverse);
    }

    fn transform(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.inner.n;
        assert_eq!(data.len(), n * n * n, "field length does not match grid");
        let mut scratch = vec![ZERO; fft.get_inplace_scratch_len()];
        // third axis: contiguous rows
        fft.process_with_scratch(data, &mut scratch);

        let mut plane = vec![ZERO; n * n];
        // second axis: transpose each (j, k) slab
        for slab in data.chunks_exact_mut(n * n) {
            for j in 0..n {
                for k in 0..n {
                    plane[k * n + j] = slab[j * n + k];
                }
            }
            fft.process_with_scratch(&mut plane, &mut scratch);
            for j in 0..n {
                for k in 0..n {
                    slab[j * n + k] = plane[k * n + j];
                }
            }
        }
        // first axis: gather (i, k) planes at fixed j
        for j in 0..n {
            for i in 0..n {
                let base = (i * n + j) * n;
                for k in 0..n {
                    plane[k * n + i] = data[base + k];
                }
            }
            fft.process_with_scratch(&mut plane, &mut scratch);
            for i in 0..n {
                let base = (i * n + j) * n;
                for k in 0..n {
                    data[base + k] = plane[k * n + i];
                }
            }
        }
    }

    /// Run `f(idx, kx, ky, kz)` over every spectral slot.
    #[inline]
    pub(crate) fn for_each_mode(&self, mut f: impl FnMut(usize, f64, f64, f64)) {
        let n = self.inner.n;
        let k = &self.inner.wavenumbers;
        let mut idx = 0;
        for &kx in k.iter().take(n) {
            for &ky in k.iter().take(n) {
                for &kz in k.iter().take(n) {
                    f(idx, kx, ky, kz);
                    idx += 1;
                }
            }
        }
    }

    /// Odd-derivative wavenumber: the Nyquist slot is mapped to zero.
    pub(crate) fn odd_wavenumbers(&self) -> Vec<f64> {
        let mut k = self.inner.wavenumbers.clone();
        k[self.nyquist_slot()] = 0.0;
        k
    }
}

/// A complex scalar field sampled on a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    grid: GridSpec,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: &GridSpec, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Config(format!(
                "field has {} samples, grid expects {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![ZERO; grid.len()],
        }
    }

    /// Sample `f(x)` at every grid point.
    pub fn from_fn(grid: &GridSpec, f: impl Fn([f64; 3]) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|idx| f(grid.point(idx))).collect();
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &GridSpec {
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

    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn ensure_finite(&self, context: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(context))
        }
    }

    pub fn ensure_same_grid(&self, other: &ComplexField) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid, other.grid
            )))
        }
    }

    /// Pointwise map preserving the grid.
    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise map with access to the sample coordinates.
    pub fn map_with_point(&self, f: impl Fn([f64; 3], Complex64) -> Complex64) -> Self {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(idx, &v)| f(self.grid.point(idx), v))
            .collect();
        Self {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn scale(&self, a: Complex64) -> Self {
        self.map(|v| v * a)
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: Complex64, other: &ComplexField) -> Result<Self> {
        self.ensure_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&x, &y)| x + a * y)
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            values,
        })
    }

    pub fn sub(&self, other: &ComplexField) -> Result<Self> {
        self.axpy(Complex64::new(-1.0, 0.0), other)
    }

    /// Discrete `sum |f|^2 h^3`.
    pub fn norm2_sq(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    /// Forward transform into a fresh spectral buffer.
    pub fn to_spectral(&self) -> Vec<Complex64> {
        let mut s = self.values.clone();
        self.grid.forward(&mut s);
        s
    }

    /// Inverse of [`ComplexField::to_spectral`].
    pub fn from_spectral(grid: &GridSpec, mut spectral: Vec<Complex64>) -> Self {
        grid.inverse(&mut spectral);
        Self {
            grid: grid.clone(),
            values: spectral,
        }
    }

    /// L2 norm squared computed from spectral coefficients (Parseval).
    pub fn spectral_norm2_sq(&self) -> f64 {
        let s = self.to_spectral();
        s.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
            / self.grid.len() as f64
    }

    /// Apply the Fourier multiplier `m(kx, ky, kz)`.
    pub fn apply_multiplier(&self, m: impl Fn(f64, f64, f64) -> Complex64) -> Self {
        let spectral = self.to_spectral();
        apply_to_spectral(&self.grid, &spectral, m)
    }

    /// Value of the band-limited interpolant at an arbitrary point. The
    /// Nyquist mode enters as a cosine so that real fields interpolate to
    /// real values.
    pub fn interpolate(&self, point: [f64; 3]) -> Complex64 {
        let grid = &self.grid;
        let n = grid.n_per_axis();
        let x0 = grid.coords()[0];
        let ny = grid.nyquist_slot();
        let phases: Vec<Vec<Complex64>> = point
            .iter()
            .map(|&x| {
                grid.wavenumbers()
                    .iter()
                    .enumerate()
                    .map(|(m, &k)| {
                        if m == ny {
                            Complex64::new((k * (x - x0)).cos(), 0.0)
                        } else {
                            Complex64::from_polar(1.0, k * (x - x0))
                        }
                    })
                    .collect()
            })
            .collect();
        let spectral = self.to_spectral();
        let mut acc = ZERO;
        for i in 0..n {
            for j in 0..n {
                let pij = phases[0][i] * phases[1][j];
                let row = &spectral[(i * n + j) * n..(i * n + j + 1) * n];
                let s: Complex64 = row.iter().zip(&phases[2]).map(|(a, b)| a * b).sum();
                acc += pij * s;
            }
        }
        acc / grid.len() as f64
    }

    /// Fraction of the mass lying in the shell `|x| > 0.9 L`.
    pub fn boundary_fraction(&self) -> f64 {
        let r_cut = BOUNDARY_SHELL * self.grid.half_length();
        let mut outer = 0.0;
        let mut total = 0.0;
        for (idx, v) in self.values.iter().enumerate() {
            let [x, y, z] = self.grid.point(idx);
            let w = v.norm_sqr();
            total += w;
            if x * x + y * y + z * z > r_cut * r_cut {
                outer += w;
            }
        }
        if total > 0.0 {
            outer / total
        } else {
            0.0
        }
    }
}

/// Multiply a spectral buffer by `m` and return the physical-space result.
pub(crate) fn apply_to_spectral(
    grid: &GridSpec,
    spectral: &[Complex64],
    m: impl Fn(f64, f64, f64) -> Complex64,
) -> ComplexField {
    let scale = 1.0 / grid.len() as f64;
    let mut out = vec![ZERO; spectral.len()];
    grid.for_each_mode(|idx, kx, ky, kz| out[idx] = spectral[idx] * m(kx, ky, kz) * scale);
    grid.inverse_unscaled(&mut out);
    ComplexField {
        grid: grid.clone(),
        values: out,
    }
}

/// Raised when a coordinate-weighted operation sees too much mass near the
/// box boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryWarning {
    pub outer_mass_fraction: f64,
}

impl fmt::Display for BoundaryWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.3}% of the mass lies in the outer shell |x| > {BOUNDARY_SHELL} L; coordinate weights are unreliable",
            100.0 * self.outer_mass_fraction
        )
    }
}

/// A value computed with coordinate weights, plus any boundary warning.
#[derive(Clone, Debug)]
pub struct Warned<T> {
    pub value: T,
    pub warning: Option<BoundaryWarning>,
}

impl<T> Warned<T> {
    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> Warned<U> {
        Warned {
            value: f(self.value),
            warning: self.warning,
        }
    }

    pub fn into_value(self) -> T {
        self.value
    }

    pub fn is_clean(&self) -> bool {
        self.warning.is_none()
    }
}

pub(crate) fn boundary_check(f: &ComplexField) -> Option<BoundaryWarning> {
    let frac = f.boundary_fraction();
    if frac > BOUNDARY_MASS_TOLERANCE {
        log::debug!("boundary contamination: {frac:.3e} of mass in outer shell");
        Some(BoundaryWarning {
            outer_mass_fraction: frac,
        })
    } else {
        None
    }
}

/// Worst boundary warning of a set.
pub(crate) fn merge_warnings(
    warnings: impl IntoIterator<Item = Option<BoundaryWarning>>,
) -> Option<BoundaryWarning> {
    warnings.into_iter().flatten().fold(None, |acc, w| match acc {
        Some(a) if a.outer_mass_fraction >= w.outer_mass_fraction => Some(a),
        _ => Some(w),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X1 = 0,
    X2 = 1,
    X3 = 2,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X1, Axis::X2, Axis::X3];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Scalar Fourier multipliers. The gradient is [`gradient`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DerivativeSpec {
    /// `d/dx_j`, multiplier `i k_j`.
    Partial(Axis),
    /// Laplacian, multiplier `-|k|^2`.
    Laplacian,
    /// `D^s = (-Laplacian)^{s/2}`, multiplier `|k|^s` (zero mode maps to zero for s > 0).
    Fractional(f64),
    /// `Lambda^s`, multiplier `(1 + |k|^2)^{s/2}`.
    Bessel(f64),
}

impl DerivativeSpec {
    fn validate(self) -> Result<()> {
        match self {
            DerivativeSpec::Fractional(s) | DerivativeSpec::Bessel(s) if !(s >= 0.0) => Err(
                Error::Parameter(format!("derivative order must be >= 0, got {s}")),
            ),
            _ => Ok(()),
        }
    }
}

pub(crate) fn fractional_symbol(k2: f64, s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else if k2 == 0.0 {
        0.0
    } else {
        k2.powf(0.5 * s)
    }
}

pub(crate) fn bessel_symbol(k2: f64, s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else {
        (1.0 + k2).powf(0.5 * s)
    }
}

/// Exact multiplier action on the band-limited interpolant of `f`.
pub fn spectral_derivative(f: &ComplexField, spec: DerivativeSpec) -> Result<ComplexField> {
    spec.validate()?;
    let spectral = f.to_spectral();
    Ok(derivative_from_spectral(f.grid(), &spectral, spec))
}

pub(crate) fn derivative_from_spectral(
    grid: &GridSpec,
    spectral: &[Complex64],
    spec: DerivativeSpec,
) -> ComplexField {
    match spec {
        DerivativeSpec::Partial(axis) => {
            let kodd = grid.odd_wavenumbers();
            let n = grid.n_per_axis();
            let scale = 1.0 / grid.len() as f64;
            let mut out = vec![ZERO; spectral.len()];
            for (idx, v) in out.iter_mut().enumerate() {
                let slots = grid.split_index(idx);
                let k = kodd[slots[axis.index()]];
                *v = spectral[idx] * Complex64::new(0.0, k * scale);
            }
            debug_assert_eq!(out.len(), n * n * n);
            grid.inverse_unscaled(&mut out);
            ComplexField {
                grid: grid.clone(),
                values: out,
            }
        }
        DerivativeSpec::Laplacian => apply_to_spectral(grid, spectral, |kx, ky, kz| {
            Complex64::new(-(kx * kx + ky * ky + kz * kz), 0.0)
        }),
        DerivativeSpec::Fractional(s) => apply_to_spectral(grid, spectral, |kx, ky, kz| {
            Complex64::new(fractional_symbol(kx * kx + ky * ky + kz * kz, s), 0.0)
        }),
        DerivativeSpec::Bessel(s) => apply_to_spectral(grid, spectral, |kx, ky, kz| {
            Complex64::new(bessel_symbol(kx * kx + ky * ky + kz * kz, s), 0.0)
        }),
    }
}

/// `(d1 f, d2 f, d3 f)` with one forward and three inverse transforms.
pub fn gradient(f: &ComplexField) -> [ComplexField; 3] {
    let spectral = f.to_spectral();
    gradient_from_spectral(f.grid(), &spectral)
}

pub(crate) fn gradient_from_spectral(grid: &GridSpec, spectral: &[Complex64]) -> [ComplexField; 3] {
    Axis::ALL.map(|axis| derivative_from_spectral(grid, spectral, DerivativeSpec::Partial(axis)))
}

/// `||grad f||_2^2` evaluated on the spectral side, one forward transform.
pub fn grad_norm2_sq(f: &ComplexField) -> f64 {
    let grid = f.grid();
    let spectral = f.to_spectral();
    let kodd = grid.odd_wavenumbers();
    let n = grid.n_per_axis();
    let mut acc = 0.0;
    let mut idx = 0;
    for &kx in &kodd {
        for &ky in &kodd {
            let kxy = kx * kx + ky * ky;
            for &kz in &kodd {
                acc += spectral[idx].norm_sqr() * (kxy + kz * kz);
                idx += 1;
            }
        }
    }
    debug_assert_eq!(idx, n * n * n);
    acc * grid.cell_volume() / grid.len() as f64
}

/// `-i (x x grad)` from a precomputed gradient.
pub(crate) fn angular_from_gradient(f: &ComplexField, grad: &[ComplexField; 3]) -> [ComplexField; 3] {
    let grid = f.grid();
    let len = grid.len();
    let mut out = [
        vec![ZERO; len],
        vec![ZERO; len],
        vec![ZERO; len],
    ];
    let (g1, g2, g3) = (grad[0].values(), grad[1].values(), grad[2].values());
    let mi = Complex64::new(0.0, -1.0);
    for idx in 0..len {
        let [x1, x2, x3] = grid.point(idx);
        out[0][idx] = mi * (g3[idx] * x2 - g2[idx] * x3);
        out[1][idx] = mi * (g1[idx] * x3 - g3[idx] * x1);
        out[2][idx] = mi * (g2[idx] * x1 - g1[idx] * x2);
    }
    out.map(|values| ComplexField {
        grid: grid.clone(),
        values,
    })
}

fn angular_unchecked(f: &ComplexField) -> [ComplexField; 3] {
    let grad = gradient(f);
    angular_from_gradient(f, &grad)
}

/// The three components `L_j f` of `L = x x (-i grad)`.
pub fn angular_momentum(f: &ComplexField) -> Warned<[ComplexField; 3]> {
    Warned {
        value: angular_unchecked(f),
        warning: boundary_check(f),
    }
}

/// `|L|^2 f = sum_j L_j (L_j f)`.
pub fn angular_momentum_squared(f: &ComplexField) -> Warned<ComplexField> {
    let warning = boundary_check(f);
    let first = angular_unchecked(f);
    let mut acc = vec![ZERO; f.grid().len()];
    for (axis, lj) in first.iter().enumerate() {
        let second = angular_unchecked(lj);
        for (a, v) in acc.iter_mut().zip(second[axis].values()) {
            *a += v;
        }
    }
    Warned {
        value: ComplexField {
            grid: f.grid().clone(),
            values: acc,
        },
        warning,
    }
}

/// `L_j L_k f`.
pub fn angular_pair(f: &ComplexField, j: Axis, k: Axis) -> Warned<ComplexField> {
    let warning = boundary_check(f);
    let [a, b, c] = angular_unchecked(f);
    let lk = [a, b, c].into_iter().nth(k.index()).expect("axis in range");
    let [a, b, c] = angular_unchecked(&lk);
    let ljk = [a, b, c].into_iter().nth(j.index()).expect("axis in range");
    Warned {
        value: ljk,
        warning,
    }
}

/// All nine `L_j L_k f`, indexed `[j][k]`.
pub fn angular_pairs(f: &ComplexField) -> Warned<[[ComplexField; 3]; 3]> {
    let warning = boundary_check(f);
    let first = angular_unchecked(f);
    // second[k][j] = L_j (L_k f)
    let second = first.map(|lk| angular_unchecked(&lk));
    let pairs = std::array::from_fn(|j| std::array::from_fn(|k| second[k][j].clone()));
    Warned {
        value: pairs,
        warning,
    }
}

/// `|x|^b` at every sample. Negative `b` requires an offset grid.
pub fn radial_weight(grid: &GridSpec, b: f64) -> Result<Vec<f64>> {
    if !b.is_finite() {
        return Err(Error::Parameter(format!("weight exponent must be finite, got {b}")));
    }
    if b < 0.0 && !grid.offset() {
        return Err(Error::Config(format!(
            "weight |x|^{b} is singular at the origin; use an offset grid"
        )));
    }
    if b == 0.0 {
        return Ok(vec![1.0; grid.len()]);
    }
    Ok(grid.radii().into_iter().map(|r| r.powf(b)).collect())
}
