//! Periodic collocation grid, Fourier transforms and the constant-coefficient
//! operators built on them.
//!
//! Spectra are stored in a half-plane layout: `nx/2 + 1` columns (non-negative
//! `kx`) of `ny` contiguous entries each, so `data[i * ny + j]` holds the mode
//! `(kx[i], ky[j])`. Real fields are row-major with `y` outer.

use std::fmt;
use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{NarError, Result};
use crate::real::Real;

/// Uniform periodic grid on `[-lx/2, lx/2) x [-ly/2, ly/2)`.
pub struct Grid2D<T: Real> {
    nx: usize,
    ny: usize,
    lx: T,
    ly: T,
    dx: T,
    dy: T,
    kx: Vec<T>,
    ky: Vec<T>,
    /// `|k|^2` in half-plane spectral layout.
    k2: Vec<T>,
    /// Two-thirds-rule mask in half-plane layout.
    keep: Vec<bool>,
    r2c: Arc<dyn RealToComplex<T>>,
    c2r: Arc<dyn ComplexToReal<T>>,
    col_fwd: Arc<dyn Fft<T>>,
    col_inv: Arc<dyn Fft<T>>,
}

impl<T: Real> fmt::Debug for Grid2D<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid2D")
            .field("nx", &self.nx)
            .field("ny", &self.ny)
            .field("lx", &self.lx)
            .field("ly", &self.ly)
            .finish()
    }
}

impl<T: Real> PartialEq for Grid2D<T> {
    fn eq(&self, other: &Self) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.lx == other.lx && self.ly == other.ly
    }
}

fn wavenumbers<T: Real>(n: usize, length: T) -> Vec<T> {
    let scale = T::lit(2.0) * T::PI() / length;
    (0..n)
        .map(|i| {
            let signed = if i < n / 2 { i as f64 } else { i as f64 - n as f64 };
            T::lit(signed) * scale
        })
        .collect()
}

impl<T: Real> Grid2D<T> {
    /// Grid on the default domain `[-pi, pi)^2`.
    pub fn square(n: usize) -> Result<Arc<Self>> {
        let two_pi = T::lit(2.0) * T::PI();
        Self::new(n, n, two_pi, two_pi)
    }

    pub fn new(nx: usize, ny: usize, lx: T, ly: T) -> Result<Arc<Self>> {
        for (name, n) in [("nx", nx), ("ny", ny)] {
            if n < 8 || n % 2 != 0 {
                return Err(NarError::Parameter(format!(
                    "{name} must be even and >= 8, got {n}"
                )));
            }
        }
        if !(lx > T::zero() && ly > T::zero() && lx.is_finite() && ly.is_finite()) {
            return Err(NarError::Parameter(
                "domain lengths must be positive".into(),
            ));
        }
        let kx = wavenumbers(nx, lx);
        let ky = wavenumbers(ny, ly);
        let nxh = nx / 2 + 1;
        let mut k2 = Vec::with_capacity(nxh * ny);
        let mut keep = Vec::with_capacity(nxh * ny);
        for (i, &kxi) in kx.iter().enumerate().take(nxh) {
            for (j, &kyj) in ky.iter().enumerate() {
                k2.push(kxi * kxi + kyj * kyj);
                let jm = if j <= ny / 2 { j } else { ny - j };
                keep.push(3 * i < nx && 3 * jm < ny);
            }
        }
        let mut rplanner = RealFftPlanner::<T>::new();
        let mut cplanner = FftPlanner::<T>::new();
        Ok(Arc::new(Self {
            nx,
            ny,
            lx,
            ly,
            dx: lx / T::from_usize_lossy(nx),
            dy: ly / T::from_usize_lossy(ny),
            kx,
            ky,
            k2,
            keep,
            r2c: rplanner.plan_fft_forward(nx),
            c2r: rplanner.plan_fft_inverse(nx),
            col_fwd: cplanner.plan_fft_forward(ny),
            col_inv: cplanner.plan_fft_inverse(ny),
        }))
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lx(&self) -> T {
        self.lx
    }

    pub fn ly(&self) -> T {
        self.ly
    }

    pub fn dx(&self) -> T {
        self.dx
    }

    pub fn dy(&self) -> T {
        self.dy
    }

    /// Area of the periodic cell.
    pub fn area(&self) -> T {
        self.lx * self.ly
    }

    /// Wavenumbers along x in standard FFT ordering.
    pub fn kx(&self) -> &[T] {
        &self.kx
    }

    pub fn ky(&self) -> &[T] {
        &self.ky
    }

    pub fn x(&self, i: usize) -> T {
        -self.lx / T::lit(2.0) + T::from_usize_lossy(i) * self.dx
    }

    pub fn y(&self, j: usize) -> T {
        -self.ly / T::lit(2.0) + T::from_usize_lossy(j) * self.dy
    }

    /// Number of stored spectral coefficients.
    pub fn spectral_len(&self) -> usize {
        (self.nx / 2 + 1) * self.ny
    }

    pub(crate) fn k2(&self) -> &[T] {
        &self.k2
    }
}

/// One real field sampled on a [`Grid2D`].
#[derive(Clone, Debug)]
pub struct ScalarField2D<T: Real> {
    grid: Arc<Grid2D<T>>,
    values: Vec<T>,
}

impl<T: Real> PartialEq for ScalarField2D<T> {
    fn eq(&self, other: &Self) -> bool {
        *self.grid == *other.grid && self.values == other.values
    }
}

impl<T: Real> ScalarField2D<T> {
    pub fn from_values(grid: &Arc<Grid2D<T>>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(NarError::Structure(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            values,
        })
    }

    pub fn zeros(grid: &Arc<Grid2D<T>>) -> Self {
        Self::constant(grid, T::zero())
    }

    pub fn constant(grid: &Arc<Grid2D<T>>, c: T) -> Self {
        Self {
            grid: Arc::clone(grid),
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f(x, y)` at every collocation point.
    pub fn from_fn(grid: &Arc<Grid2D<T>>, f: impl Fn(T, T) -> T) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny() {
            let y = grid.y(j);
            for i in 0..grid.nx() {
                values.push(f(grid.x(i), y));
            }
        }
        Self {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn grid(&self) -> &Arc<Grid2D<T>> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn ensure_same_grid(&self, other: &Self) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(NarError::GridMismatch)
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(NarError::Corrupted("field contains non-finite values".into()))
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination. Grids are assumed equal; callers validate.
    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert!(self.same_grid(other));
        Self {
            grid: Arc::clone(&self.grid),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: T, other: &Self) {
        debug_assert!(self.same_grid(other));
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a = *a + alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: T) {
        for v in &mut self.values {
            *v = *v * alpha;
        }
    }

    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |m, &v| if v.abs() > m { v.abs() } else { m })
    }

    /// `max |self - other|`
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |m, (&a, &b)| {
                let d = (a - b).abs();
                if d > m {
                    d
                } else {
                    m
                }
            })
    }
}

/// Fourier coefficients of a real field, half-plane layout.
#[derive(Clone, Debug)]
pub struct Spectrum<T: Real> {
    grid: Arc<Grid2D<T>>,
    data: Vec<Complex<T>>,
}

impl<T: Real> Spectrum<T> {
    pub fn grid(&self) -> &Arc<Grid2D<T>> {
        &self.grid
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    /// Multiplies every coefficient by `symbol(|k|^2)`.
    pub fn apply_symbol(&mut self, symbol: impl Fn(T) -> T) {
        for (c, &k2) in self.data.iter_mut().zip(self.grid.k2()) {
            *c = *c * symbol(k2);
        }
    }

    /// `self = symbol_self(|k|^2) * self + symbol_other(|k|^2) * other`
    pub fn combine(&mut self, other: &Self, coeffs: impl Fn(T) -> (T, T)) {
        for ((c, o), &k2) in self.data.iter_mut().zip(&other.data).zip(self.grid.k2()) {
            let (a, b) = coeffs(k2);
            *c = *c * a + *o * b;
        }
    }

    /// Zeroes modes outside the two-thirds band.
    pub fn dealias(&mut self) {
        for (c, &keep) in self.data.iter_mut().zip(&self.grid.keep) {
            if !keep {
                *c = Complex::new(T::zero(), T::zero());
            }
        }
    }
}

/// Forward transform (unnormalized).
pub fn forward<T: Real>(f: &ScalarField2D<T>) -> Spectrum<T> {
    let grid = f.grid();
    let (nx, ny) = (grid.nx, grid.ny);
    let nxh = nx / 2 + 1;
    let zero = Complex::new(T::zero(), T::zero());
    let mut data = vec![zero; nxh * ny];
    let mut row_in = grid.r2c.make_input_vec();
    let mut row_out = grid.r2c.make_output_vec();
    let mut scratch = grid.r2c.make_scratch_vec();
    for j in 0..ny {
        row_in.copy_from_slice(&f.values[j * nx..(j + 1) * nx]);
        grid.r2c
            .process_with_scratch(&mut row_in, &mut row_out, &mut scratch)
            .expect("buffer sizes come from the plan");
        for (i, &c) in row_out.iter().enumerate() {
            data[i * ny + j] = c;
        }
    }
    let mut col_scratch = vec![zero; grid.col_fwd.get_inplace_scratch_len()];
    grid.col_fwd.process_with_scratch(&mut data, &mut col_scratch);
    Spectrum {
        grid: Arc::clone(grid),
        data,
    }
}

/// Inverse transform including the `1/(nx*ny)` normalization.
pub fn inverse<T: Real>(s: &Spectrum<T>) -> ScalarField2D<T> {
    let mut data = s.data.clone();
    inverse_in_place(&s.grid, &mut data)
}

fn inverse_in_place<T: Real>(grid: &Arc<Grid2D<T>>, data: &mut [Complex<T>]) -> ScalarField2D<T> {
    let (nx, ny) = (grid.nx, grid.ny);
    let nxh = nx / 2 + 1;
    let zero = Complex::new(T::zero(), T::zero());
    let mut col_scratch = vec![zero; grid.col_inv.get_inplace_scratch_len()];
    grid.col_inv.process_with_scratch(data, &mut col_scratch);
    let norm = T::one() / T::from_usize_lossy(nx * ny);
    let mut values = vec![T::zero(); nx * ny];
    let mut row_in = grid.c2r.make_input_vec();
    let mut row_out = grid.c2r.make_output_vec();
    let mut scratch = grid.c2r.make_scratch_vec();
    for j in 0..ny {
        for (i, c) in row_in.iter_mut().enumerate().take(nxh) {
            *c = data[i * ny + j];
        }
        // DC and Nyquist columns are real after the column pass.
        row_in[0].im = T::zero();
        row_in[nxh - 1].im = T::zero();
        grid.c2r
            .process_with_scratch(&mut row_in, &mut row_out, &mut scratch)
            .expect("buffer sizes come from the plan");
        for (v, &r) in values[j * nx..(j + 1) * nx].iter_mut().zip(&row_out) {
            *v = r * norm;
        }
    }
    ScalarField2D {
        grid: Arc::clone(grid),
        values,
    }
}

/// Consumes the spectrum to avoid a copy.
pub fn into_field<T: Real>(mut s: Spectrum<T>) -> ScalarField2D<T> {
    let grid = Arc::clone(&s.grid);
    inverse_in_place(&grid, &mut s.data)
}

/// Trigonometric interpolation of `f` onto `target`, which must cover the
/// same domain. Modes present on both grids are kept, Nyquist modes dropped.
pub fn resample<T: Real>(f: &ScalarField2D<T>, target: &Arc<Grid2D<T>>) -> Result<ScalarField2D<T>> {
    let src = f.grid();
    if src.lx != target.lx || src.ly != target.ly {
        return Err(NarError::GridMismatch);
    }
    if **src == **target {
        return Ok(f.clone());
    }
    let s = forward(f);
    let (snx, sny, tnx, tny) = (src.nx, src.ny, target.nx, target.ny);
    let zero = Complex::new(T::zero(), T::zero());
    let mut data = vec![zero; (tnx / 2 + 1) * tny];
    let scale = T::from_usize_lossy(tnx * tny) / T::from_usize_lossy(snx * sny);
    let signed = |j: usize, n: usize| if j <= n / 2 { j as i64 } else { j as i64 - n as i64 };
    let kx_max = (snx.min(tnx) / 2) as i64;
    let ky_max = (sny.min(tny) / 2) as i64;
    for i in 0..(kx_max as usize) {
        for jt in 0..tny {
            let k = signed(jt, tny);
            if k.abs() >= ky_max {
                continue;
            }
            let js = if k >= 0 { k as usize } else { (k + sny as i64) as usize };
            data[i * tny + jt] = s.data[i * sny + js] * scale;
        }
    }
    Ok(inverse_in_place(target, &mut data))
}

/// Spectral Laplacian.
pub fn laplacian<T: Real>(f: &ScalarField2D<T>) -> Result<ScalarField2D<T>> {
    f.ensure_finite()?;
    let mut s = forward(f);
    s.apply_symbol(|k2| -k2);
    Ok(into_field(s))
}

/// Solves `(a - b * Laplacian) u = rhs` mode by mode.
pub fn solve_modified_helmholtz<T: Real>(
    a: T,
    b: T,
    rhs: &ScalarField2D<T>,
) -> Result<ScalarField2D<T>> {
    check_helmholtz(a, b)?;
    let mut s = forward(rhs);
    s.apply_symbol(|k2| T::one() / (a + b * k2));
    Ok(into_field(s))
}

pub(crate) fn check_helmholtz<T: Real>(a: T, b: T) -> Result<()> {
    if !(a > T::zero() && a.is_finite()) {
        return Err(NarError::Parameter(format!(
            "helmholtz coefficient a must be positive, got {a}"
        )));
    }
    if !(b >= T::zero() && b.is_finite()) {
        return Err(NarError::Parameter(format!(
            "helmholtz coefficient b must be nonnegative, got {b}"
        )));
    }
    Ok(())
}

/// Rectangle rule over the periodic cell.
pub fn integrate<T: Real>(f: &ScalarField2D<T>) -> T {
    let g = f.grid();
    g.dx * g.dy * f.values.iter().copied().sum::<T>()
}

/// L2 inner product.
pub fn inner_product<T: Real>(f: &ScalarField2D<T>, g: &ScalarField2D<T>) -> Result<T> {
    f.ensure_same_grid(g)?;
    Ok(dot(f.values(), g.values()) * f.grid.dx * f.grid.dy)
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn rejects_odd_or_small_grids() {
        assert!(Grid2D::<f64>::new(7, 8, 1.0, 1.0).is_err());
        assert!(Grid2D::<f64>::new(6, 6, 1.0, 1.0).is_err());
        assert!(Grid2D::<f64>::new(8, 8, 0.0, 1.0).is_err());
    }

    #[test]
    fn wavenumber_ordering() {
        let g = Grid2D::<f64>::square(8).unwrap();
        let k: Vec<f64> = g.kx().to_vec();
        assert_eq!(k, vec![0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0]);
        let g = Grid2D::<f64>::new(8, 10, 4.0 * std::f64::consts::PI, 1.0).unwrap();
        assert!(close(g.kx()[1], 0.5, 1e-15));
        assert!(close(g.ky()[9], -2.0 * std::f64::consts::PI, 1e-12));
    }

    #[test]
    fn resample_is_exact_for_band_limited_fields() {
        let f = |x: f64, y: f64| 0.3 + (2.0 * x).sin() * (5.0 * y).cos() - 0.7 * (3.0 * x - y).cos();
        let coarse = Grid2D::<f64>::square(16).unwrap();
        let fine = Grid2D::<f64>::square(64).unwrap();
        let up = resample(&ScalarField2D::from_fn(&coarse, f), &fine).unwrap();
        assert!(up.max_abs_diff(&ScalarField2D::from_fn(&fine, f)) <= 1e-12);
        let down = resample(&up, &coarse).unwrap();
        assert!(down.max_abs_diff(&ScalarField2D::from_fn(&coarse, f)) <= 1e-12);
        let other = Grid2D::<f64>::new(16, 16, 1.0, 1.0).unwrap();
        assert!(resample(&down, &other).is_err());
    }

    #[test]
    fn laplacian_of_plane_waves() {
        let g = Grid2D::<f64>::square(64).unwrap();
        let f = ScalarField2D::from_fn(&g, |x, _| (3.0 * x).cos());
        let lap = laplacian(&f).unwrap();
        let want = f.map(|v| -9.0 * v);
        assert!(lap.max_abs_diff(&want) <= 1e-10);

        let f = ScalarField2D::from_fn(&g, |x, y| (2.0 * x).sin() * (5.0 * y).cos());
        let lap = laplacian(&f).unwrap();
        assert!(lap.max_abs_diff(&f.map(|v| -29.0 * v)) <= 1e-10);

        let one = ScalarField2D::constant(&g, 1.0);
        assert!(laplacian(&one).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn laplacian_rejects_nan() {
        let g = Grid2D::<f64>::square(8).unwrap();
        let mut f = ScalarField2D::zeros(&g);
        f.values_mut()[3] = f64::NAN;
        assert!(matches!(laplacian(&f), Err(NarError::Corrupted(_))));
    }

    #[test]
    fn helmholtz_manufactured_solutions() {
        let g = Grid2D::<f64>::square(64).unwrap();
        let u = ScalarField2D::from_fn(&g, |x, _| (3.0 * x).cos());
        let rhs = u.map(|v| (1.0 + 0.5 * 9.0) * v);
        let got = solve_modified_helmholtz(1.0, 0.5, &rhs).unwrap();
        assert!(got.max_abs_diff(&u) <= 1e-10);

        let f = ScalarField2D::from_fn(&g, |x, y| (x + 0.3).sin() + (2.0 * y).cos() * 0.25);
        let got = solve_modified_helmholtz(2.0, 0.0, &f).unwrap();
        assert!(got.max_abs_diff(&f.map(|v| v / 2.0)) <= 1e-14);

        assert!(solve_modified_helmholtz(0.0, 1.0, &f).is_err());
        assert!(solve_modified_helmholtz(-1.0, 1.0, &f).is_err());
    }

    #[test]
    fn quadrature_values() {
        let g = Grid2D::<f64>::square(32).unwrap();
        let four_pi2 = 4.0 * std::f64::consts::PI.powi(2);
        let one = ScalarField2D::constant(&g, 1.0);
        assert!(close(integrate(&one), four_pi2, 1e-12));
        assert!(close(integrate(&one), 39.4784176, 1e-7));
        let s = ScalarField2D::from_fn(&g, |x, _| x.sin());
        assert!(integrate(&s).abs() <= 1e-12);
        let c2 = ScalarField2D::from_fn(&g, |x, _| x.cos().powi(2));
        assert!(close(integrate(&c2), 2.0 * std::f64::consts::PI.powi(2), 1e-10));

        let c = ScalarField2D::from_fn(&g, |x, _| x.cos());
        assert!(close(inner_product(&one, &one).unwrap(), four_pi2, 1e-12));
        assert!(inner_product(&s, &c).unwrap().abs() <= 1e-12);
        assert!(close(
            inner_product(&s, &s).unwrap(),
            2.0 * std::f64::consts::PI.powi(2),
            1e-10
        ));
    }

    #[test]
    fn inner_product_grid_mismatch() {
        let a = ScalarField2D::zeros(&Grid2D::<f64>::square(8).unwrap());
        let b = ScalarField2D::zeros(&Grid2D::<f64>::square(16).unwrap());
        assert!(matches!(inner_product(&a, &b), Err(NarError::GridMismatch)));
    }

    #[test]
    fn works_in_single_precision() {
        let g = Grid2D::<f32>::square(32).unwrap();
        let f = ScalarField2D::from_fn(&g, |x, _| (2.0 * x).cos());
        let lap = laplacian(&f).unwrap();
        assert!(lap.max_abs_diff(&f.map(|v| -4.0 * v)) <= 1e-4);
    }

    #[test]
    fn dealias_keeps_low_modes() {
        let g = Grid2D::<f64>::square(32).unwrap();
        let low = ScalarField2D::from_fn(&g, |x, y| (3.0 * x).cos() * (2.0 * y).sin());
        let high = ScalarField2D::from_fn(&g, |x, _| (14.0 * x).cos());
        let mut s = forward(&low);
        s.dealias();
        assert!(into_field(s).max_abs_diff(&low) <= 1e-12);
        let mut s = forward(&high);
        s.dealias();
        assert!(into_field(s).max_abs() <= 1e-12);
    }
}
