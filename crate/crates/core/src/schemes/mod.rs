//! The three time integrators and the multiplier solvers they share.
//!
//! Every scheme is Crank–Nicolson in the gradient term with the remaining
//! nonlinearities evaluated at the extrapolated state
//! `f* = 3/2 f^n - 1/2 f^(n-1)`. The new fields are affine in the Lagrange
//! multipliers,
//!
//! ```text
//! phi_m = phi1_m + lambda_m phi2_m + eta_m phi3_m (+ R phi4_m)
//! psi   = psi1 + sum_m eta_m psi2_m (+ R psi3)
//! ```
//!
//! so a step is a handful of Helmholtz solves followed by a small algebraic
//! system for the multipliers.

mod energy_stable;
mod linear;
mod substeps;
mod volume_preserving;

use crate::error::{NarError, Result};
use crate::geometry::Nucleus;
use crate::model::{ModelParams, NuclearState};
use crate::real::Real;
use crate::schedules::VolumeSchedules;
use crate::spectral::Grid2D;

pub use energy_stable::{step_energy_stable, EnergySystem};
pub use linear::{linear_system, step_linear};
pub use substeps::{
    extrapolate, prepare, solve_all, solve_substeps_phi, solve_substeps_psi, PhiSubsteps, PsiSubsteps,
    StepContext,
};
pub use volume_preserving::step_volume_preserving;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    /// Weakly nonlinear, enforces the volume constraints exactly.
    VolumePreserving,
    /// Linear, enforces the time-differentiated constraints.
    Linear,
    /// Weakly nonlinear with the extra energy multiplier `R`; needs constant
    /// targets.
    EnergyStable,
}

impl SchemeKind {
    pub fn letter(self) -> char {
        match self {
            Self::VolumePreserving => 'A',
            Self::Linear => 'B',
            Self::EnergyStable => 'C',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'A' => Some(Self::VolumePreserving),
            'B' => Some(Self::Linear),
            'C' => Some(Self::EnergyStable),
            _ => None,
        }
    }
}

/// How the heterochromatin multipliers of different chromosomes are coupled
/// through `psi`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MultiplierCoupling {
    /// Solve the coupled system (Gauss–Seidel to tolerance for A, full
    /// matrix for B).
    #[default]
    Full,
    /// Independent 2x2 blocks per chromosome; the cross terms through `psi`
    /// are dropped (B) or visited once (A).
    PerM,
}

/// Which multiplier terms enter the discrete energy equation of scheme C.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EnergyBalance {
    /// Weights the constraint terms by the multipliers, which makes the
    /// discrete dissipation law an identity.
    #[default]
    Exact,
    /// Unit weights on the constraint terms.
    Literal,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SchemeOptions {
    pub coupling: MultiplierCoupling,
    pub energy_balance: EnergyBalance,
    /// Apply the two-thirds rule to nonlinear right-hand sides.
    pub dealias: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances<T> {
    /// Absolute bound on constraint residuals.
    pub constraint: T,
    /// Absolute bound on the residual of each Newton solve.
    pub newton: T,
    pub max_newton_iters: usize,
    pub max_sweeps: usize,
}

impl<T: Real> Tolerances<T> {
    /// Default tolerances scaled by the domain area.
    pub fn for_grid(grid: &Grid2D<T>) -> Self {
        let tol = T::default_rel_tolerance() * grid.area();
        Self {
            constraint: tol,
            newton: tol,
            max_newton_iters: 50,
            max_sweeps: 25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.constraint > T::zero() && self.newton > T::zero()) {
            return Err(NarError::Parameter("tolerances must be positive".into()));
        }
        if self.max_newton_iters == 0 || self.max_sweeps == 0 {
            return Err(NarError::Parameter("iteration limits must be >= 1".into()));
        }
        Ok(())
    }
}

/// Multiplier values, used as the initial guess of the next step.
#[derive(Clone, Debug, PartialEq)]
pub struct Multipliers<T> {
    pub lambda: Vec<T>,
    pub eta: Vec<T>,
    pub r: Option<T>,
}

impl<T: Real> Multipliers<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            lambda: vec![T::zero(); n],
            eta: vec![T::zero(); n],
            r: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiplierRecord<T> {
    pub lambda: Vec<T>,
    pub eta: Vec<T>,
    /// Energy multiplier, scheme C only.
    pub r: Option<T>,
    pub residual_inf: T,
    pub newton_iters: usize,
    pub sweeps: usize,
}

impl<T: Real> MultiplierRecord<T> {
    pub fn multipliers(&self) -> Multipliers<T> {
        Multipliers {
            lambda: self.lambda.clone(),
            eta: self.eta.clone(),
            r: self.r,
        }
    }

    fn unchanged(n: usize, kind: SchemeKind) -> Self {
        Self {
            lambda: vec![T::zero(); n],
            eta: vec![T::zero(); n],
            r: (kind == SchemeKind::EnergyStable).then(T::one),
            residual_inf: T::zero(),
            newton_iters: 0,
            sweeps: 0,
        }
    }
}

/// Everything about a scenario that stays fixed over a run.
#[derive(Clone, Debug)]
pub struct Problem<T: Real> {
    pub params: ModelParams<T>,
    pub volumes: VolumeSchedules<T>,
    pub nucleus: Nucleus<T>,
}

impl<T: Real> Problem<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.params.mobility == T::zero()) {
            self.params.validate()?;
        }
        if self.volumes.len() != self.params.n_chromosomes {
            return Err(NarError::Structure(format!(
                "{} volume schedules for {} chromosomes",
                self.volumes.len(),
                self.params.n_chromosomes
            )));
        }
        Ok(())
    }
}

/// Input of a single time step.
#[derive(Clone, Copy, Debug)]
pub struct StepInputs<'a, T: Real> {
    pub state_n: &'a NuclearState<T>,
    /// Previous level; pass `state_n` again on the first step.
    pub state_nm1: &'a NuclearState<T>,
    pub dt: T,
    pub problem: &'a Problem<T>,
    pub tolerances: &'a Tolerances<T>,
    pub options: &'a SchemeOptions,
    pub guess: Option<&'a Multipliers<T>>,
}

impl<'a, T: Real> StepInputs<'a, T> {
    pub fn new(
        state_n: &'a NuclearState<T>,
        dt: T,
        problem: &'a Problem<T>,
        tolerances: &'a Tolerances<T>,
        options: &'a SchemeOptions,
    ) -> Self {
        Self {
            state_n,
            state_nm1: state_n,
            dt,
            problem,
            tolerances,
            options,
            guess: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero() && self.dt.is_finite()) {
            return Err(NarError::Parameter(format!("dt must be positive, got {}", self.dt)));
        }
        self.problem.validate()?;
        self.tolerances.validate()?;
        self.state_n.validate()?;
        self.state_nm1.validate()?;
        if !self.state_n.phi0.same_grid(&self.state_nm1.phi0)
            || **self.state_n.grid() != **self.problem.nucleus.grid()
        {
            return Err(NarError::GridMismatch);
        }
        let n = self.problem.params.n_chromosomes;
        if self.state_n.n_chromosomes() != n || self.state_nm1.n_chromosomes() != n {
            return Err(NarError::Structure(format!(
                "state carries {} chromosome fields, parameters say {n}",
                self.state_n.n_chromosomes()
            )));
        }
        if let Some(g) = self.guess {
            if g.lambda.len() != n || g.eta.len() != n {
                return Err(NarError::Structure("multiplier guess has the wrong length".into()));
            }
        }
        Ok(())
    }
}

/// With zero mobility nothing moves; returns the state at the new time.
fn frozen_step<T: Real>(
    inputs: &StepInputs<'_, T>,
    kind: SchemeKind,
) -> Result<Option<(NuclearState<T>, MultiplierRecord<T>)>> {
    if inputs.problem.params.mobility != T::zero() {
        return Ok(None);
    }
    let mut next = inputs.state_n.clone();
    next.t = inputs.state_n.t + inputs.dt;
    Ok(Some((next, MultiplierRecord::unchanged(inputs.state_n.n_chromosomes(), kind))))
}

/// Advances one step with the chosen scheme.
pub fn step<T: Real>(
    kind: SchemeKind,
    inputs: &StepInputs<'_, T>,
) -> Result<(NuclearState<T>, MultiplierRecord<T>)> {
    match kind {
        SchemeKind::VolumePreserving => step_volume_preserving(inputs),
        SchemeKind::Linear => step_linear(inputs),
        SchemeKind::EnergyStable => step_energy_stable(inputs),
    }
}

fn finish<T: Real>(
    state: NuclearState<T>,
    record: MultiplierRecord<T>,
) -> Result<(NuclearState<T>, MultiplierRecord<T>)> {
    if state.ensure_finite().is_err() {
        return Err(NarError::Corrupted(format!(
            "non-finite field values after the step to t = {}",
            state.t
        )));
    }
    Ok((state, record))
}
