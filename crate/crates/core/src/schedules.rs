//! Sigmoid target schedules for chromosome volumes, heterochromatin volumes,
//! conversion rates and nucleus radii.

use crate::error::{NarError, Result};
use crate::real::Real;

/// `t / (t + alpha1 exp(-alpha2 t))`, defined as 0 at `t = 0`.
pub fn sigmoid<T: Real>(t: T, alpha1: T, alpha2: T) -> T {
    if t <= T::zero() {
        return T::zero();
    }
    t / (t + alpha1 * (-alpha2 * t).exp())
}

/// Correction that makes the ramp land on `target` at `t0`.
pub fn solve_delta<T: Real>(f0: T, target: T, alpha1: T, alpha2: T, t0: T) -> Result<T> {
    if !(t0 > T::zero()) {
        return Err(NarError::Parameter(format!("ramp clamp time must be positive, got {t0}")));
    }
    // Same as rise * (t0 + alpha1 e^(-alpha2 t0)) / t0 - rise, without the
    // cancellation.
    Ok((target - f0) * alpha1 * (-alpha2 * t0).exp() / t0)
}

/// Sigmoid ramp from `f0` to `target`, clamped at `t0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RampSchedule<T> {
    pub f0: T,
    pub target: T,
    pub alpha1: T,
    pub alpha2: T,
    pub t0: T,
    pub delta: T,
}

impl<T: Real> RampSchedule<T> {
    pub fn new(f0: T, target: T, alpha1: T, alpha2: T, t0: T) -> Result<Self> {
        if !(alpha1 >= T::zero() && alpha2 >= T::zero()) {
            return Err(NarError::Parameter("ramp shape constants must be >= 0".into()));
        }
        let delta = solve_delta(f0, target, alpha1, alpha2, t0)?;
        Ok(Self {
            f0,
            target,
            alpha1,
            alpha2,
            t0,
            delta,
        })
    }

    /// A schedule that is already at its target.
    pub fn constant(value: T) -> Self {
        Self {
            f0: value,
            target: value,
            alpha1: T::zero(),
            alpha2: T::zero(),
            t0: T::zero(),
            delta: T::zero(),
        }
    }

    pub fn value(&self, t: T) -> T {
        if t >= self.t0 {
            return self.target;
        }
        if t <= T::zero() {
            return self.f0;
        }
        self.f0 + (self.target - self.f0 + self.delta) * sigmoid(t, self.alpha1, self.alpha2)
    }

    /// True once the schedule sits at its target for good.
    pub fn constant_from(&self, t: T) -> bool {
        t >= self.t0 || self.f0 == self.target && self.delta == T::zero()
    }

    /// Sampled monotonicity check on `[0, t0]`.
    pub fn is_monotone(&self, samples: usize) -> bool {
        if self.t0 <= T::zero() {
            return true;
        }
        let increasing = self.target >= self.f0;
        let n = samples.max(2);
        let mut prev = self.value(T::zero());
        for k in 1..=n {
            let t = self.t0 * T::from_usize_lossy(k) / T::from_usize_lossy(n);
            let v = self.value(t);
            let ok = if increasing { v >= prev } else { v <= prev };
            if !ok {
                return false;
            }
            prev = v;
        }
        true
    }
}

/// Free function form of [`RampSchedule::value`].
pub fn ramp_value<T: Real>(s: &RampSchedule<T>, t: T) -> T {
    s.value(t)
}

/// `rho(t) = rho0 + rho_bar * t / (t + alpha1 exp(-alpha2 t))`
pub fn conversion_rate_schedule<T: Real>(rho0: T, rho_bar: T, alpha1: T, alpha2: T, t: T) -> T {
    rho0 + rho_bar * sigmoid(t, alpha1, alpha2)
}

/// Target heterochromatin volume of one chromosome.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HeteroSchedule<T> {
    /// Direct volume ramp.
    Ramp(RampSchedule<T>),
    /// Base ramp plus a conversion-rate increase on top of the chromosome
    /// volume: `v(t) = base(t) + rho_bar * sigmoid(t) * V(t)`. With a base
    /// ramp ending at `rho0 * V_target` this equals `rho(t) V(t)` after `t0`.
    Rate {
        base: RampSchedule<T>,
        rho_bar: T,
        alpha1: T,
        alpha2: T,
    },
}

impl<T: Real> HeteroSchedule<T> {
    pub fn value(&self, t: T, chromosome_volume: T) -> T {
        match *self {
            Self::Ramp(r) => r.value(t),
            Self::Rate {
                base,
                rho_bar,
                alpha1,
                alpha2,
            } => base.value(t) + rho_bar * sigmoid(t, alpha1, alpha2) * chromosome_volume,
        }
    }

    pub fn constant_from(&self, t: T) -> bool {
        match *self {
            Self::Ramp(r) => r.constant_from(t),
            Self::Rate { base, rho_bar, .. } => base.constant_from(t) && rho_bar == T::zero(),
        }
    }
}

/// Per-chromosome volume targets.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeSchedules<T> {
    pub volume: Vec<RampSchedule<T>>,
    pub hetero: Vec<HeteroSchedule<T>>,
}

impl<T: Real> VolumeSchedules<T> {
    pub fn new(volume: Vec<RampSchedule<T>>, hetero: Vec<HeteroSchedule<T>>) -> Result<Self> {
        if volume.len() != hetero.len() {
            return Err(NarError::Structure(format!(
                "{} volume schedules but {} heterochromatin schedules",
                volume.len(),
                hetero.len()
            )));
        }
        Ok(Self { volume, hetero })
    }

    /// Holds every volume where it is.
    pub fn frozen(volumes: &[T], hetero_volumes: &[T]) -> Self {
        Self {
            volume: volumes.iter().map(|&v| RampSchedule::constant(v)).collect(),
            hetero: hetero_volumes
                .iter()
                .map(|&v| HeteroSchedule::Ramp(RampSchedule::constant(v)))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.volume.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volume.is_empty()
    }

    pub fn volume_target(&self, m: usize, t: T) -> T {
        self.volume[m].value(t)
    }

    pub fn hetero_target(&self, m: usize, t: T) -> T {
        self.hetero[m].value(t, self.volume[m].value(t))
    }

    pub fn constant_from(&self, t: T) -> bool {
        self.volume.iter().all(|s| s.constant_from(t))
            && self.hetero.iter().all(|s| s.constant_from(t))
    }

    /// Schedules whose ramp is not monotone (warning-level check).
    pub fn non_monotone(&self) -> Vec<usize> {
        self.volume
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.is_monotone(1000))
            .map(|(m, _)| m)
            .collect()
    }
}
