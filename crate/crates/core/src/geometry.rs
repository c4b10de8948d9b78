//! Initial conditions and the prescribed nucleus field, built from analytic
//! ellipse profiles.

use std::sync::{Arc, Mutex};

use log::warn;

use crate::error::{NarError, Result};
use crate::model::{Envelope, NuclearState};
use crate::real::Real;
use crate::schedules::RampSchedule;
use crate::spectral::{Grid2D, ScalarField2D};

/// Axis-aligned ellipse; all sizes are semi-axes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EllipseSpec<T> {
    pub cx: T,
    pub cy: T,
    pub rx: T,
    pub ry: T,
}

impl<T: Real> EllipseSpec<T> {
    pub fn new(cx: T, cy: T, rx: T, ry: T) -> Result<Self> {
        let e = Self { cx, cy, rx, ry };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rx > T::zero() && self.ry > T::zero()) {
            return Err(NarError::Parameter(format!(
                "ellipse semi-axes must be positive, got ({}, {})",
                self.rx, self.ry
            )));
        }
        if ![self.cx, self.cy, self.rx, self.ry].iter().all(|v| v.is_finite()) {
            return Err(NarError::Parameter("ellipse values must be finite".into()));
        }
        Ok(())
    }

    /// `sqrt(((x - cx)/rx)^2 + ((y - cy)/ry)^2)`; equals 1 on the ellipse.
    pub fn scaled_radius(&self, x: T, y: T) -> T {
        let u = (x - self.cx) / self.rx;
        let v = (y - self.cy) / self.ry;
        (u * u + v * v).sqrt()
    }

    pub fn contains_point(&self, x: T, y: T) -> bool {
        self.scaled_radius(x, y) < T::one()
    }

    pub fn fits_in(&self, grid: &Grid2D<T>) -> bool {
        let hx = grid.lx() / T::lit(2.0);
        let hy = grid.ly() / T::lit(2.0);
        self.cx - self.rx >= -hx
            && self.cx + self.rx <= hx
            && self.cy - self.ry >= -hy
            && self.cy + self.ry <= hy
    }

    pub fn area(&self) -> T {
        T::PI() * self.rx * self.ry
    }
}

/// `(1 - tanh(z)) / 2` written as a logistic so the tails keep precision.
fn tanh_step<T: Real>(z: T) -> T {
    T::one() / (T::one() + (T::lit(2.0) * z).exp())
}

/// `(1 - tanh((s - 1) / (sqrt(2) eps))) / 2` with `s` the scaled elliptical
/// radius: close to 1 inside the ellipse, 0 outside.
pub fn ellipse_tanh_field<T: Real>(
    spec: &EllipseSpec<T>,
    eps: T,
    grid: &Arc<Grid2D<T>>,
) -> Result<ScalarField2D<T>> {
    if !(eps > T::zero()) {
        return Err(NarError::Parameter(format!("interface width must be positive, got {eps}")));
    }
    spec.validate()?;
    let w = T::SQRT_2() * eps;
    Ok(ScalarField2D::from_fn(grid, |x, y| {
        tanh_step((spec.scaled_radius(x, y) - T::one()) / w)
    }))
}

/// Nucleus label: 0 inside, 1 outside.
pub fn nucleus_label<T: Real>(
    spec: &EllipseSpec<T>,
    eps: T,
    grid: &Arc<Grid2D<T>>,
) -> Result<ScalarField2D<T>> {
    if !(eps > T::zero()) {
        return Err(NarError::Parameter(format!("interface width must be positive, got {eps}")));
    }
    spec.validate()?;
    let w = T::SQRT_2() * eps;
    Ok(ScalarField2D::from_fn(grid, |x, y| {
        tanh_step((T::one() - spec.scaled_radius(x, y)) / w)
    }))
}

/// Time-dependent nucleus geometry.
#[derive(Clone, Debug, PartialEq)]
pub enum NucleusShape<T> {
    Ellipse {
        cx: T,
        cy: T,
        rx: RampSchedule<T>,
        ry: RampSchedule<T>,
        eps: T,
    },
    /// Spatially constant label; used by ODE-style tests.
    Uniform(T),
}

impl<T: Real> NucleusShape<T> {
    pub fn fixed(spec: EllipseSpec<T>, eps: T) -> Self {
        Self::Ellipse {
            cx: spec.cx,
            cy: spec.cy,
            rx: RampSchedule::constant(spec.rx),
            ry: RampSchedule::constant(spec.ry),
            eps,
        }
    }

    pub fn ellipse_at(&self, t: T) -> Option<EllipseSpec<T>> {
        match self {
            Self::Ellipse { cx, cy, rx, ry, .. } => Some(EllipseSpec {
                cx: *cx,
                cy: *cy,
                rx: rx.value(t),
                ry: ry.value(t),
            }),
            Self::Uniform(_) => None,
        }
    }

    pub fn constant_from(&self, t: T) -> bool {
        match self {
            Self::Ellipse { rx, ry, .. } => rx.constant_from(t) && ry.constant_from(t),
            Self::Uniform(_) => true,
        }
    }

    pub fn field(&self, t: T, grid: &Arc<Grid2D<T>>) -> Result<ScalarField2D<T>> {
        match self {
            Self::Ellipse { eps, .. } => {
                let e = self.ellipse_at(t).expect("ellipse variant");
                nucleus_label(&e, *eps, grid)
            }
            Self::Uniform(v) => Ok(ScalarField2D::constant(grid, *v)),
        }
    }
}

/// Nucleus field at time `t` from the radius schedules, centered at the origin.
pub fn nucleus_field<T: Real>(
    t: T,
    radius_schedules: (&RampSchedule<T>, &RampSchedule<T>),
    eps: T,
    grid: &Arc<Grid2D<T>>,
) -> Result<ScalarField2D<T>> {
    let spec = EllipseSpec::new(
        T::zero(),
        T::zero(),
        radius_schedules.0.value(t),
        radius_schedules.1.value(t),
    )?;
    nucleus_label(&spec, eps, grid)
}

/// Caches the envelope terms of the prescribed nucleus; recomputes only when
/// the radii change.
#[derive(Debug)]
pub struct Nucleus<T: Real> {
    shape: NucleusShape<T>,
    grid: Arc<Grid2D<T>>,
    cache: Mutex<Option<((T, T), Arc<Envelope<T>>)>>,
}

impl<T: Real> Clone for Nucleus<T> {
    fn clone(&self) -> Self {
        Self::new(self.shape.clone(), &self.grid)
    }
}

impl<T: Real> Nucleus<T> {
    pub fn new(shape: NucleusShape<T>, grid: &Arc<Grid2D<T>>) -> Self {
        Self {
            shape,
            grid: Arc::clone(grid),
            cache: Mutex::new(None),
        }
    }

    pub fn shape(&self) -> &NucleusShape<T> {
        &self.shape
    }

    pub fn grid(&self) -> &Arc<Grid2D<T>> {
        &self.grid
    }

    fn key(&self, t: T) -> (T, T) {
        match &self.shape {
            NucleusShape::Ellipse { rx, ry, .. } => (rx.value(t), ry.value(t)),
            NucleusShape::Uniform(v) => (*v, *v),
        }
    }

    pub fn envelope_at(&self, t: T) -> Result<Arc<Envelope<T>>> {
        let key = self.key(t);
        let mut cache = self.cache.lock().expect("nucleus cache poisoned");
        if let Some((k, env)) = cache.as_ref() {
            if *k == key {
                return Ok(Arc::clone(env));
            }
        }
        let env = Arc::new(Envelope::new(self.shape.field(t, &self.grid)?)?);
        *cache = Some((key, Arc::clone(&env)));
        Ok(env)
    }

    pub fn field_at(&self, t: T) -> Result<ScalarField2D<T>> {
        Ok(self.envelope_at(t)?.phi0.clone())
    }
}

/// Initial placement of nucleus, chromosomes and heterochromatin seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioLayout<T> {
    pub nucleus: EllipseSpec<T>,
    pub chromosomes: Vec<EllipseSpec<T>>,
    /// One seed per chromosome.
    pub heterochromatin: Vec<EllipseSpec<T>>,
    pub eps_phi: T,
    pub eps_psi: T,
    pub eps_nucleus: T,
}

impl<T: Real> ScenarioLayout<T> {
    pub fn validate(&self, grid: &Grid2D<T>) -> Result<()> {
        if self.chromosomes.len() != self.heterochromatin.len() {
            return Err(NarError::Structure(format!(
                "{} chromosomes but {} heterochromatin seeds",
                self.chromosomes.len(),
                self.heterochromatin.len()
            )));
        }
        for (name, e) in [
            ("eps_phi", self.eps_phi),
            ("eps_psi", self.eps_psi),
            ("eps_nucleus", self.eps_nucleus),
        ] {
            if !(e > T::zero()) {
                return Err(NarError::Parameter(format!("{name} must be positive")));
            }
        }
        self.nucleus.validate()?;
        for (m, (c, s)) in self.chromosomes.iter().zip(&self.heterochromatin).enumerate() {
            c.validate()?;
            s.validate()?;
            if !c.contains_point(s.cx, s.cy) {
                return Err(NarError::Structure(format!(
                    "heterochromatin seed {m} is centered outside its chromosome"
                )));
            }
            if !c.fits_in(grid) {
                warn!("chromosome {m} extends past the domain boundary");
            }
        }
        if !self.nucleus.fits_in(grid) {
            warn!("nucleus extends past the domain boundary");
        }
        Ok(())
    }
}

/// Builds the state at `t = 0`.
pub fn build_initial_state<T: Real>(
    layout: &ScenarioLayout<T>,
    grid: &Arc<Grid2D<T>>,
) -> Result<NuclearState<T>> {
    layout.validate(grid)?;
    let phi = layout
        .chromosomes
        .iter()
        .map(|c| ellipse_tanh_field(c, layout.eps_phi, grid))
        .collect::<Result<Vec<_>>>()?;
    let mut psi = ScalarField2D::zeros(grid);
    for seed in &layout.heterochromatin {
        psi.axpy(T::one(), &ellipse_tanh_field(seed, layout.eps_psi, grid)?);
    }
    if psi.values().iter().any(|&v| v > T::one() + T::lit(1e-3)) {
        warn!("heterochromatin seeds overlap; clamping the combined field to 1");
    }
    let psi = psi.map(|v| v.min(T::one()));
    Ok(NuclearState {
        t: T::zero(),
        phi0: nucleus_label(&layout.nucleus, layout.eps_nucleus, grid)?,
        phi,
        psi,
    })
}

/// The eight-chromosome layout used for the fly nucleus experiments.
pub fn drosophila_layout<T: Real>(eps_phi: T, eps_psi: T) -> ScenarioLayout<T> {
    let centers = [
        (0.0, 2.5),
        (-1.0, 1.4),
        (-0.3, -0.5),
        (1.0, -1.0),
        (0.0, 0.6),
        (1.0, 1.3),
        (0.0, -2.5),
        (-1.0, -0.8),
    ];
    let ell = |cx: f64, cy: f64, rx: f64, ry: f64| EllipseSpec {
        cx: T::lit(cx),
        cy: T::lit(cy),
        rx: T::lit(rx),
        ry: T::lit(ry),
    };
    ScenarioLayout {
        nucleus: ell(0.0, 0.0, 2.0, 2.9),
        chromosomes: centers.iter().map(|&(x, y)| ell(x, y, 0.2, 0.4)).collect(),
        heterochromatin: centers.iter().map(|&(x, y)| ell(x, y, 0.05, 0.1)).collect(),
        eps_phi,
        eps_psi,
        eps_nucleus: eps_phi,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{h, nucleus_volume, volume};
    use crate::spectral::integrate;

    #[test]
    fn center_and_rim_values() {
        let g = Grid2D::<f64>::square(64).unwrap();
        let spec = EllipseSpec::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let eps = 0.05;
        let f = ellipse_tanh_field(&spec, eps, &g).unwrap();
        // (0, 0) is the grid point (32, 32).
        let c = f.values()[32 * 64 + 32];
        let want = 0.5 * (1.0 - (-1.0 / (2f64.sqrt() * eps)).tanh());
        assert!((c - want).abs() < 1e-12);
        assert!((c - 1.0).abs() < 1e-6);

        // Point exactly on the rim: ellipse through (x_40, 0).
        let x40 = g.x(40);
        let rim = EllipseSpec::new(0.0, 0.0, x40, 2.0).unwrap();
        let f = ellipse_tanh_field(&rim, eps, &g).unwrap();
        assert_eq!(f.values()[32 * 64 + 40], 0.5);
    }

    #[test]
    fn bad_width_rejected() {
        let g = Grid2D::<f64>::square(16).unwrap();
        let spec = EllipseSpec::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert!(ellipse_tanh_field(&spec, 0.0, &g).is_err());
        assert!(EllipseSpec::new(0.0, 0.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn nucleus_is_zero_inside() {
        let g = Grid2D::<f64>::square(128).unwrap();
        let rx = RampSchedule::constant(2.0);
        let ry = RampSchedule::constant(2.9);
        let f = nucleus_field(0.0, (&rx, &ry), 0.1, &g).unwrap();
        assert!(f.values()[64 * 128 + 64] < 1e-6);
        assert!(f.values()[0] > 1.0 - 1e-5);
        let area = std::f64::consts::PI * 2.0 * 2.9;
        assert!((nucleus_volume(&f) - area).abs() / area < 0.02);
    }

    #[test]
    fn nucleus_freezes_after_clamp() {
        let g = Grid2D::<f64>::square(32).unwrap();
        let rx = RampSchedule::new(2.0, 1.5, 1.0, 0.01, 3.0).unwrap();
        let ry = RampSchedule::new(2.9, 1.5, 1.0, 0.01, 3.0).unwrap();
        let a = nucleus_field(3.0, (&rx, &ry), 0.1, &g).unwrap();
        let b = nucleus_field(11.0, (&rx, &ry), 0.1, &g).unwrap();
        assert_eq!(a, b);
        let c = nucleus_field(1.0, (&rx, &ry), 0.1, &g).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn nucleus_cache_reuses_envelope() {
        let g = Grid2D::<f64>::square(16).unwrap();
        let spec = EllipseSpec::new(0.0, 0.0, 2.0, 2.5).unwrap();
        let n = Nucleus::new(NucleusShape::fixed(spec, 0.1), &g);
        let a = n.envelope_at(0.0).unwrap();
        let b = n.envelope_at(5.0).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }

    #[test]
    fn drosophila_initial_state() {
        let g = Grid2D::<f64>::square(256).unwrap();
        let layout = drosophila_layout(0.1, 0.05f64.sqrt());
        let s = build_initial_state(&layout, &g).unwrap();
        assert_eq!(s.phi.len(), 8);
        let area = std::f64::consts::PI * 0.2 * 0.4;
        for m in 0..8 {
            let v = volume(m, &s).unwrap();
            assert!((v - area).abs() / area < 0.05, "V_{m} = {v}");
        }
        let again = build_initial_state(&layout, &g).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn empty_layout() {
        let g = Grid2D::<f64>::square(16).unwrap();
        let mut layout = drosophila_layout(0.1, 0.2);
        layout.chromosomes.clear();
        layout.heterochromatin.clear();
        let s = build_initial_state(&layout, &g).unwrap();
        assert!(s.phi.is_empty());
        assert_eq!(s.psi.max_abs(), 0.0);
    }

    #[test]
    fn seed_outside_chromosome_rejected() {
        let g = Grid2D::<f64>::square(16).unwrap();
        let mut layout = drosophila_layout(0.1, 0.2);
        layout.heterochromatin[0].cx = 2.0;
        assert!(build_initial_state(&layout, &g).is_err());
    }

    #[test]
    fn disk_area_from_h() {
        // Radial quadrature of the same profile as an independent check.
        let eps = 0.05f64;
        let profile = |r: f64| 0.5 * (1.0 - ((r - 1.0) / (2f64.sqrt() * eps)).tanh());
        let n = 200_000;
        let rmax = 3.0;
        let dr = rmax / n as f64;
        let radial: f64 = (0..n)
            .map(|k| {
                let r = (k as f64 + 0.5) * dr;
                h(profile(r)) * 2.0 * std::f64::consts::PI * r * dr
            })
            .sum();
        let g = Grid2D::<f64>::square(256).unwrap();
        let spec = EllipseSpec::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let f = ellipse_tanh_field(&spec, eps, &g).unwrap();
        let grid_value = integrate(&f.map(h));
        assert!((grid_value - radial).abs() / radial < 1e-3);
        assert!((grid_value - std::f64::consts::PI).abs() / std::f64::consts::PI < 0.02);
    }
}
