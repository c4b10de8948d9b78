//! Small dense linear algebra for the multiplier systems: LU with partial
//! pivoting and a damped Newton iteration.

use crate::error::{NarError, Result};
use crate::real::Real;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect()
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting. A pivot
/// below `pivot_tol` times the largest entry of `a` reports the original row
/// index that failed.
pub fn lu_solve<T: Real>(a: &DenseMatrix<T>, b: &[T]) -> std::result::Result<Vec<T>, usize> {
    let n = a.rows;
    assert_eq!(a.cols, n, "square system expected");
    assert_eq!(b.len(), n);
    let scale = a.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    let pivot_tol = scale * T::epsilon() * T::from_usize_lossy(n.max(1)) * T::lit(16.0);
    let mut m = a.data.clone();
    let mut rhs = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (p, best) = (k..n)
            .map(|r| (r, m[r * n + k].abs()))
            .fold((k, -T::one()), |acc, x| if x.1 > acc.1 { x } else { acc });
        if !(best > pivot_tol) {
            return Err(perm[k]);
        }
        if p != k {
            for c in 0..n {
                m.swap(k * n + c, p * n + c);
            }
            rhs.swap(k, p);
            perm.swap(k, p);
        }
        let piv = m[k * n + k];
        for r in k + 1..n {
            let f = m[r * n + k] / piv;
            if f == T::zero() {
                continue;
            }
            for c in k..n {
                m[r * n + c] = m[r * n + c] - f * m[k * n + c];
            }
            rhs[r] = rhs[r] - f * rhs[k];
        }
    }
    let mut x = vec![T::zero(); n];
    for k in (0..n).rev() {
        let mut s = rhs[k];
        for c in k + 1..n {
            s = s - m[k * n + c] * x[c];
        }
        x[k] = s / m[k * n + k];
    }
    Ok(x)
}

pub fn max_abs<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

/// A square nonlinear system `r(x) = 0`.
pub trait NonlinearSystem<T: Real> {
    fn dim(&self) -> usize;

    fn residual(&mut self, x: &[T]) -> Vec<T>;

    /// Analytic Jacobian, if available. Finite differences are used otherwise.
    fn jacobian(&mut self, _x: &[T]) -> Option<DenseMatrix<T>> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions<T> {
    /// Stop once `max |r| <= tol`.
    pub tol: T,
    pub max_iters: usize,
    pub max_backtracks: usize,
    /// Relative step for finite-difference Jacobians.
    pub fd_step: T,
}

impl<T: Real> NewtonOptions<T> {
    pub fn new(tol: T, max_iters: usize) -> Self {
        Self {
            tol,
            max_iters,
            max_backtracks: 30,
            fd_step: T::epsilon().sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonReport<T> {
    pub x: Vec<T>,
    pub residual: T,
    pub iterations: usize,
}

/// Forward-difference Jacobian.
pub fn fd_jacobian<T: Real, S: NonlinearSystem<T> + ?Sized>(
    sys: &mut S,
    x: &[T],
    r0: &[T],
    step: T,
) -> DenseMatrix<T> {
    let n = sys.dim();
    let mut jac = DenseMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for c in 0..n {
        let hc = step * (T::one() + x[c].abs());
        xp[c] = x[c] + hc;
        let rp = sys.residual(&xp);
        for r in 0..n {
            jac.set(r, c, (rp[r] - r0[r]) / hc);
        }
        xp[c] = x[c];
    }
    jac
}

/// Newton's method with step halving whenever the residual norm fails to
/// decrease.
pub fn damped_newton<T: Real, S: NonlinearSystem<T> + ?Sized>(
    sys: &mut S,
    x0: &[T],
    opts: &NewtonOptions<T>,
) -> Result<NewtonReport<T>> {
    let mut x = x0.to_vec();
    let mut r = sys.residual(&x);
    let mut norm = max_abs(&r);
    for it in 0..opts.max_iters {
        if !norm.is_finite() {
            break;
        }
        if norm <= opts.tol {
            return Ok(NewtonReport {
                x,
                residual: norm,
                iterations: it,
            });
        }
        let jac = match sys.jacobian(&x) {
            Some(j) => j,
            None => fd_jacobian(sys, &x, &r, opts.fd_step),
        };
        let neg: Vec<T> = r.iter().map(|&v| -v).collect();
        let step = lu_solve(&jac, &neg).map_err(|row| NarError::Singular {
            row: format!("newton row {row}"),
        })?;
        let mut alpha = T::one();
        let mut accepted = false;
        for _ in 0..=opts.max_backtracks {
            let trial: Vec<T> = x.iter().zip(&step).map(|(&a, &s)| a + alpha * s).collect();
            let rt = sys.residual(&trial);
            let nt = max_abs(&rt);
            if nt.is_finite() && nt < norm {
                x = trial;
                r = rt;
                norm = nt;
                accepted = true;
                break;
            }
            alpha = alpha * T::lit(0.5);
        }
        if !accepted {
            break;
        }
    }
    if norm <= opts.tol {
        return Ok(NewtonReport {
            x,
            residual: norm,
            iterations: opts.max_iters,
        });
    }
    Err(NarError::NotConverged {
        solver: "newton",
        iterations: opts.max_iters,
        residual: norm.as_f64(),
    })
}
