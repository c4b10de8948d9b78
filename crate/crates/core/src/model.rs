//! Physical parameters, the interpolation and double-well polynomials, the
//! free energy and the variational derivatives of its non-quadratic part.
//!
//! The nucleus label `phi0` is 0 inside the nucleus and 1 outside, so the
//! `beta0` term penalizes chromosome mass outside the envelope and the
//! affinity term pulls heterochromatin toward the inner side of the envelope.

use std::sync::Arc;

use crate::error::{NarError, Result};
use crate::real::Real;
use crate::spectral::{self, Grid2D, ScalarField2D};

/// Interpolation polynomial `h(x) = x^3 (10 - 15 x + 6 x^2)`.
#[inline]
pub fn h<T: Real>(x: T) -> T {
    x * x * x * (T::lit(10.0) + x * (T::lit(-15.0) + T::lit(6.0) * x))
}

/// `h'(x) = 30 x^2 (1 - x)^2`
#[inline]
pub fn h_prime<T: Real>(x: T) -> T {
    let y = x * (T::one() - x);
    T::lit(30.0) * y * y
}

/// Double well `g(x) = x^2 (1 - x)^2 / 4`.
#[inline]
pub fn g<T: Real>(x: T) -> T {
    let y = x * (T::one() - x);
    T::lit(0.25) * y * y
}

/// `g'(x) = x (1 - x) (1 - 2x) / 2`
#[inline]
pub fn g_prime<T: Real>(x: T) -> T {
    T::lit(0.5) * x * (T::one() - x) * (T::one() - T::lit(2.0) * x)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T: Real> {
    /// Squared interface width of the chromosome fields.
    pub eps2_phi: T,
    /// Squared interface width of the heterochromatin field.
    pub eps2_psi: T,
    /// Confinement of chromosomes to the nucleus.
    pub beta0: T,
    /// Mutual exclusion between chromosomes.
    pub beta_phi: T,
    /// Confinement of heterochromatin to chromosomes.
    pub beta_psi: T,
    /// Heterochromatin/envelope affinity.
    pub gamma: T,
    pub mobility: T,
    pub n_chromosomes: usize,
}

impl<T: Real> ModelParams<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eps2_phi", self.eps2_phi),
            ("eps2_psi", self.eps2_psi),
            ("mobility", self.mobility),
        ];
        for (name, v) in positive {
            if !(v > T::zero() && v.is_finite()) {
                return Err(NarError::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        let nonneg = [
            ("beta0", self.beta0),
            ("beta_phi", self.beta_phi),
            ("beta_psi", self.beta_psi),
            ("gamma", self.gamma),
        ];
        for (name, v) in nonneg {
            if !(v >= T::zero() && v.is_finite()) {
                return Err(NarError::Parameter(format!(
                    "{name} must be nonnegative, got {v}"
                )));
            }
        }
        if self.n_chromosomes == 0 {
            return Err(NarError::Parameter("n_chromosomes must be >= 1".into()));
        }
        Ok(())
    }
}

/// Simulation state at one time level.
#[derive(Clone, Debug, PartialEq)]
pub struct NuclearState<T: Real> {
    pub t: T,
    /// Nucleus label, prescribed from the radius schedules.
    pub phi0: ScalarField2D<T>,
    /// Chromosome fields, index `m` in `0..N`.
    pub phi: Vec<ScalarField2D<T>>,
    pub psi: ScalarField2D<T>,
}

impl<T: Real> NuclearState<T> {
    pub fn grid(&self) -> &Arc<Grid2D<T>> {
        self.phi0.grid()
    }

    pub fn n_chromosomes(&self) -> usize {
        self.phi.len()
    }

    pub fn validate(&self) -> Result<()> {
        for f in self.phi.iter().chain(std::iter::once(&self.psi)) {
            self.phi0.ensure_same_grid(f)?;
        }
        Ok(())
    }

    pub fn ensure_finite(&self) -> Result<()> {
        self.phi0.ensure_finite()?;
        self.psi.ensure_finite()?;
        for f in &self.phi {
            f.ensure_finite()?;
        }
        Ok(())
    }

    /// Largest excursion outside `[lo, hi]` over the evolved fields.
    pub fn band_violation(&self, lo: T, hi: T) -> T {
        self.phi
            .iter()
            .chain(std::iter::once(&self.psi))
            .flat_map(|f| f.values().iter())
            .fold(T::zero(), |m, &v| m.max(lo - v).max(v - hi))
    }
}

/// `h(phi0)` and its spectral Laplacian, shared by every evaluation at a
/// fixed nucleus shape.
#[derive(Clone, Debug)]
pub struct Envelope<T: Real> {
    pub phi0: ScalarField2D<T>,
    pub h: Vec<T>,
    pub lap_h: Vec<T>,
}

impl<T: Real> Envelope<T> {
    pub fn new(phi0: ScalarField2D<T>) -> Result<Self> {
        let hf = phi0.map(h);
        let lap_h = spectral::laplacian(&hf)?.into_values();
        Ok(Self {
            h: hf.into_values(),
            phi0,
            lap_h,
        })
    }
}

/// Energy broken down by contribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyParts<T> {
    /// Gradient and double-well terms.
    pub e0: T,
    /// Territory terms (confinement, heterochromatin, exclusion).
    pub e1: T,
    /// Envelope affinity.
    pub e2: T,
    /// Quadratic gradient part only.
    pub gradient: T,
    /// Everything except the gradient part.
    pub e_tilde: T,
    pub total: T,
}

/// `sum_m h(phi_m)` pointwise.
pub fn sum_h<T: Real>(phi: &[ScalarField2D<T>], len: usize) -> Vec<T> {
    let mut s = vec![T::zero(); len];
    for f in phi {
        for (acc, &v) in s.iter_mut().zip(f.values()) {
            *acc = *acc + h(v);
        }
    }
    s
}

/// Non-quadratic energy split into (double wells, territory terms, affinity).
pub(crate) fn nonquadratic_parts<T: Real>(
    phi: &[ScalarField2D<T>],
    psi: &ScalarField2D<T>,
    params: &ModelParams<T>,
    env: &Envelope<T>,
) -> (T, T, T) {
    let grid = psi.grid();
    let cell = grid.dx() * grid.dy();
    let n = grid.len();
    let mut s = vec![T::zero(); n];
    let mut s2 = vec![T::zero(); n];
    let mut wells = T::zero();
    for f in phi {
        for ((a, b), &v) in s.iter_mut().zip(s2.iter_mut()).zip(f.values()) {
            let hv = h(v);
            *a = *a + hv;
            *b = *b + hv * hv;
            wells = wells + g(v);
        }
    }
    let mut confine = T::zero();
    let mut hetero = T::zero();
    let mut exclusion = T::zero();
    let mut affinity = T::zero();
    for k in 0..n {
        let p = psi.values()[k];
        let hp = h(p);
        wells = wells + g(p);
        confine = confine + env.h[k] * s[k];
        hetero = hetero + (T::one() - s[k]) * hp;
        exclusion = exclusion + (s[k] * s[k] - s2[k]);
        affinity = affinity + hp * env.lap_h[k];
    }
    let e1 = params.beta0 * confine + params.beta_psi * hetero + params.beta_phi * exclusion;
    (wells * cell, e1 * cell, -params.gamma * affinity * cell)
}

/// Non-quadratic energy for arbitrary fields at a given nucleus shape.
pub fn e_tilde_of<T: Real>(
    phi: &[ScalarField2D<T>],
    psi: &ScalarField2D<T>,
    params: &ModelParams<T>,
    env: &Envelope<T>,
) -> T {
    let (w, e1, e2) = nonquadratic_parts(phi, psi, params, env);
    w + e1 + e2
}

/// `eps2/2 * ||grad f||^2`, computed as `-eps2/2 (f, Lap f)`.
pub fn gradient_energy<T: Real>(eps2: T, f: &ScalarField2D<T>) -> Result<T> {
    let lap = spectral::laplacian(f)?;
    Ok(-T::lit(0.5) * eps2 * spectral::inner_product(f, &lap)?)
}

pub fn energy_with<T: Real>(
    state: &NuclearState<T>,
    params: &ModelParams<T>,
    env: &Envelope<T>,
) -> Result<EnergyParts<T>> {
    state.validate()?;
    let mut gradient = gradient_energy(params.eps2_psi, &state.psi)?;
    for f in &state.phi {
        gradient = gradient + gradient_energy(params.eps2_phi, f)?;
    }
    let (wells, e1, e2) = nonquadratic_parts(&state.phi, &state.psi, params, env);
    let e0 = gradient + wells;
    Ok(EnergyParts {
        e0,
        e1,
        e2,
        gradient,
        e_tilde: wells + e1 + e2,
        total: e0 + e1 + e2,
    })
}

/// Total free energy and its parts.
pub fn energy_total<T: Real>(
    state: &NuclearState<T>,
    params: &ModelParams<T>,
) -> Result<EnergyParts<T>> {
    let env = Envelope::new(state.phi0.clone())?;
    energy_with(state, params, &env)
}

/// Pointwise `dE~/dphi_m` given `h(psi)` and `sum_n h(phi_n)`.
#[inline]
pub(crate) fn dphi_point<T: Real>(
    params: &ModelParams<T>,
    phi_m: T,
    h_env: T,
    h_psi: T,
    sum_h: T,
) -> T {
    let others = sum_h - h(phi_m);
    g_prime(phi_m)
        + (params.beta0 * h_env - params.beta_psi * h_psi
            + T::lit(2.0) * params.beta_phi * others)
            * h_prime(phi_m)
}

/// Pointwise `dE~/dpsi`.
#[inline]
pub(crate) fn dpsi_point<T: Real>(
    params: &ModelParams<T>,
    psi: T,
    lap_h_env: T,
    sum_h: T,
) -> T {
    let hp = h_prime(psi);
    g_prime(psi) + params.beta_psi * (T::one() - sum_h) * hp - params.gamma * hp * lap_h_env
}

pub(crate) fn d_etilde_dphi_fields<T: Real>(
    m: usize,
    phi: &[ScalarField2D<T>],
    psi: &ScalarField2D<T>,
    params: &ModelParams<T>,
    env: &Envelope<T>,
    sum_h: &[T],
) -> ScalarField2D<T> {
    let f = &phi[m];
    let mut out = f.clone();
    for (k, o) in out.values_mut().iter_mut().enumerate() {
        *o = dphi_point(
            params,
            f.values()[k],
            env.h[k],
            h(psi.values()[k]),
            sum_h[k],
        );
    }
    out
}

pub(crate) fn d_etilde_dpsi_fields<T: Real>(
    psi: &ScalarField2D<T>,
    params: &ModelParams<T>,
    env: &Envelope<T>,
    sum_h: &[T],
) -> ScalarField2D<T> {
    let mut out = psi.clone();
    for (k, o) in out.values_mut().iter_mut().enumerate() {
        *o = dpsi_point(params, psi.values()[k], env.lap_h[k], sum_h[k]);
    }
    out
}

fn check_index(m: usize, n: usize) -> Result<()> {
    if m >= n {
        Err(NarError::IndexOutOfRange { index: m, n })
    } else {
        Ok(())
    }
}

/// Variational derivative of the non-quadratic energy with respect to the
/// chromosome field `m` (zero-based).
pub fn d_etilde_dphi<T: Real>(
    m: usize,
    state: &NuclearState<T>,
    params: &ModelParams<T>,
) -> Result<ScalarField2D<T>> {
    check_index(m, state.phi.len())?;
    state.validate()?;
    let env = Envelope::new(state.phi0.clone())?;
    let s = sum_h(&state.phi, state.grid().len());
    Ok(d_etilde_dphi_fields(m, &state.phi, &state.psi, params, &env, &s))
}

/// Variational derivative of the non-quadratic energy with respect to `psi`.
pub fn d_etilde_dpsi<T: Real>(
    state: &NuclearState<T>,
    params: &ModelParams<T>,
) -> Result<ScalarField2D<T>> {
    state.validate()?;
    let env = Envelope::new(state.phi0.clone())?;
    let s = sum_h(&state.phi, state.grid().len());
    Ok(d_etilde_dpsi_fields(&state.psi, params, &env, &s))
}

/// Chromosome volume `int h(phi_m)`.
pub fn volume<T: Real>(m: usize, state: &NuclearState<T>) -> Result<T> {
    check_index(m, state.phi.len())?;
    Ok(spectral::integrate(&state.phi[m].map(h)))
}

/// Heterochromatin volume inside chromosome `m`, `int h(phi_m) h(psi)`.
pub fn hetero_volume<T: Real>(m: usize, state: &NuclearState<T>) -> Result<T> {
    check_index(m, state.phi.len())?;
    state.validate()?;
    let prod = state.phi[m].zip_map(&state.psi, |a, b| h(a) * h(b));
    Ok(spectral::integrate(&prod))
}

/// Nucleus volume `int (1 - h(phi0))`.
pub fn nucleus_volume<T: Real>(phi0: &ScalarField2D<T>) -> T {
    spectral::integrate(&phi0.map(|v| T::one() - h(v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Grid2D;

    fn params() -> ModelParams<f64> {
        ModelParams {
            eps2_phi: 0.01,
            eps2_psi: 0.05,
            beta0: 5.0 / 3.0,
            beta_phi: 8.0 / 3.0,
            beta_psi: 8.0 / 3.0,
            gamma: 0.02,
            mobility: 1.0,
            n_chromosomes: 2,
        }
    }

    fn constant_state(n: usize, phi0: f64, phi: f64, psi: f64) -> NuclearState<f64> {
        let g = Grid2D::square(16).unwrap();
        NuclearState {
            t: 0.0,
            phi0: ScalarField2D::constant(&g, phi0),
            phi: (0..n).map(|_| ScalarField2D::constant(&g, phi)).collect(),
            psi: ScalarField2D::constant(&g, psi),
        }
    }

    #[test]
    fn polynomial_values() {
        assert_eq!(h(0.0), 0.0);
        assert_eq!(h(1.0), 1.0);
        assert_eq!(h(0.5), 0.5);
        // 0.027 * (10 - 4.5 + 0.54)
        assert!((h(0.3f64) - 0.16308).abs() < 1e-15);
        assert_eq!(h_prime(0.0), 0.0);
        assert_eq!(h_prime(1.0), 0.0);
        assert_eq!(g(0.0), 0.0);
        assert_eq!(g(1.0), 0.0);
        assert_eq!(g(0.5), 1.0 / 64.0);
        assert_eq!(g_prime(0.5), 0.0);
    }

    #[test]
    fn params_validation() {
        let mut p = params();
        assert!(p.validate().is_ok());
        p.mobility = 0.0;
        assert!(p.validate().is_err());
        let mut p = params();
        p.gamma = -1.0;
        assert!(p.validate().is_err());
        let mut p = params();
        p.n_chromosomes = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn zero_state_has_zero_energy() {
        let e = energy_total(&constant_state(2, 0.0, 0.0, 0.0), &params()).unwrap();
        assert_eq!(e.total, 0.0);
        let e = energy_total(&constant_state(2, 0.7, 0.0, 0.0), &params()).unwrap();
        assert_eq!(e.total, 0.0);
    }

    #[test]
    fn derivatives_vanish_at_pure_phases() {
        let p = params();
        let s = constant_state(2, 0.3, 0.0, 0.0);
        assert_eq!(d_etilde_dphi(0, &s, &p).unwrap().max_abs(), 0.0);
        assert_eq!(d_etilde_dpsi(&s, &p).unwrap().max_abs(), 0.0);

        let mut s = constant_state(2, 0.0, 0.0, 0.0);
        s.phi[1] = s.phi[1].map(|_| 1.0);
        assert_eq!(d_etilde_dphi(1, &s, &p).unwrap().max_abs(), 0.0);

        let mut p0 = p.clone();
        p0.gamma = 0.0;
        let s = constant_state(1, 0.2, 1.0, 1.0);
        assert_eq!(d_etilde_dpsi(&s, &p0).unwrap().max_abs(), 0.0);
        assert!(matches!(
            d_etilde_dphi(1, &s, &p0),
            Err(NarError::IndexOutOfRange { index: 1, n: 1 })
        ));
    }

    #[test]
    fn constant_volumes() {
        let four_pi2 = 4.0 * std::f64::consts::PI.powi(2);
        let s = constant_state(1, 0.0, 1.0, 1.0);
        assert!((volume(0, &s).unwrap() - four_pi2).abs() < 1e-12);
        assert!((hetero_volume(0, &s).unwrap() - four_pi2).abs() < 1e-12);
        let s = constant_state(1, 0.0, 1.0, 0.5);
        assert!((hetero_volume(0, &s).unwrap() - four_pi2 / 2.0).abs() < 1e-12);
        assert!(volume(3, &s).is_err());
    }
}
