use log::warn;

use super::substeps::{prepare, solve_all, PhiSubsteps, PsiSubsteps};
use super::{finish, frozen_step, MultiplierCoupling, MultiplierRecord, SchemeKind, StepInputs};
use crate::error::{NarError, Result};
use crate::linalg::{damped_newton, DenseMatrix, NewtonOptions, NonlinearSystem};
use crate::model::{h, h_prime, NuclearState};
use crate::real::Real;
use crate::spectral::ScalarField2D;

/// The two constraints of one chromosome with every other `eta` frozen.
struct Block<'s, T> {
    phi1: &'s [T],
    phi2: &'s [T],
    phi3: &'s [T],
    psi_rest: &'s [T],
    psi2: &'s [T],
    volume: T,
    hetero: T,
    cell: T,
}

impl<T: Real> NonlinearSystem<T> for Block<'_, T> {
    fn dim(&self) -> usize {
        2
    }

    fn residual(&mut self, x: &[T]) -> Vec<T> {
        let (l, e) = (x[0], x[1]);
        let mut sv = T::zero();
        let mut sh = T::zero();
        for k in 0..self.phi1.len() {
            let hf = h(self.phi1[k] + l * self.phi2[k] + e * self.phi3[k]);
            sv = sv + hf;
            sh = sh + hf * h(self.psi_rest[k] + e * self.psi2[k]);
        }
        vec![sv * self.cell - self.volume, sh * self.cell - self.hetero]
    }

    fn jacobian(&mut self, x: &[T]) -> Option<DenseMatrix<T>> {
        let (l, e) = (x[0], x[1]);
        let mut j = [T::zero(); 4];
        for k in 0..self.phi1.len() {
            let f = self.phi1[k] + l * self.phi2[k] + e * self.phi3[k];
            let p = self.psi_rest[k] + e * self.psi2[k];
            let (hf, dhf, hp) = (h(f), h_prime(f), h(p));
            j[0] = j[0] + dhf * self.phi2[k];
            j[1] = j[1] + dhf * self.phi3[k];
            j[2] = j[2] + dhf * self.phi2[k] * hp;
            j[3] = j[3] + dhf * self.phi3[k] * hp + hf * h_prime(p) * self.psi2[k];
        }
        let mut m = DenseMatrix::zeros(2, 2);
        for (i, v) in j.into_iter().enumerate() {
            m.set(i / 2, i % 2, v * self.cell);
        }
        Some(m)
    }
}

/// Largest violation of the volume constraints for given multipliers.
pub(crate) fn constraint_residual<T: Real>(
    phis: &[PhiSubsteps<T>],
    psi: &ScalarField2D<T>,
    lambda: &[T],
    eta: &[T],
    volumes: &[T],
    heteros: &[T],
) -> T {
    let cell = psi.grid().dx() * psi.grid().dy();
    let mut worst = T::zero();
    for (m, sub) in phis.iter().enumerate() {
        let f = sub.assemble(lambda[m], eta[m], T::zero());
        let mut sv = T::zero();
        let mut sh = T::zero();
        for (&a, &b) in f.values().iter().zip(psi.values()) {
            let hf = h(a);
            sv = sv + hf;
            sh = sh + hf * h(b);
        }
        worst = worst
            .max((sv * cell - volumes[m]).abs())
            .max((sh * cell - heteros[m]).abs());
    }
    worst
}

/// Scheme A: exact volume constraints at `t^(n+1)`.
///
/// Gauss–Seidel over chromosomes; each visit solves the 2x2 system for
/// `(lambda_m, eta_m)` by damped Newton with the other `eta` held at their
/// latest values inside `psi`.
pub fn step_volume_preserving<T: Real>(
    inputs: &StepInputs<'_, T>,
) -> Result<(NuclearState<T>, MultiplierRecord<T>)> {
    inputs.validate()?;
    if let Some(done) = frozen_step(inputs, SchemeKind::VolumePreserving)? {
        return Ok(done);
    }
    let ctx = prepare(inputs, SchemeKind::VolumePreserving)?;
    let (phis, psis) = solve_all(&ctx)?;
    let n = ctx.n();
    let problem = inputs.problem;
    let volumes: Vec<T> = (0..n).map(|m| problem.volumes.volume_target(m, ctx.t_np1)).collect();
    let heteros: Vec<T> = (0..n).map(|m| problem.volumes.hetero_target(m, ctx.t_np1)).collect();
    let tol = inputs.tolerances;
    let (mut lambda, mut eta) = match inputs.guess {
        Some(g) => (g.lambda.clone(), g.eta.clone()),
        None => (vec![T::zero(); n], vec![T::zero(); n]),
    };
    let grid = ctx.ext.grid();
    let cell = grid.dx() * grid.dy();
    let newton = NewtonOptions::new(tol.newton, tol.max_newton_iters);
    let max_sweeps = match inputs.options.coupling {
        MultiplierCoupling::Full => tol.max_sweeps,
        MultiplierCoupling::PerM => 1,
    };
    let mut psi = psis.assemble(&eta, T::zero()).into_values();
    let mut residual = T::infinity();
    let mut iters = 0;
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        for m in 0..n {
            let psi2 = psis.psi2[m].values();
            for (v, &d) in psi.iter_mut().zip(psi2) {
                *v = *v - eta[m] * d;
            }
            let mut block = Block {
                phi1: phis[m].phi1.values(),
                phi2: phis[m].phi2.values(),
                phi3: phis[m].phi3.values(),
                psi_rest: &psi,
                psi2,
                volume: volumes[m],
                hetero: heteros[m],
                cell,
            };
            let rep = damped_newton(&mut block, &[lambda[m], eta[m]], &newton)?;
            iters += rep.iterations;
            lambda[m] = rep.x[0];
            eta[m] = rep.x[1];
            for (v, &d) in psi.iter_mut().zip(psi2) {
                *v = *v + eta[m] * d;
            }
        }
        let fresh = psis.assemble(&eta, T::zero());
        residual = constraint_residual(&phis, &fresh, &lambda, &eta, &volumes, &heteros);
        psi = fresh.into_values();
        if residual <= tol.constraint {
            break;
        }
    }
    if residual > tol.constraint {
        if inputs.options.coupling == MultiplierCoupling::Full {
            return Err(NarError::NotConverged {
                solver: "gauss-seidel",
                iterations: sweeps,
                residual: residual.as_f64(),
            });
        }
        warn!(
            "uncoupled multiplier blocks leave a constraint residual of {:e} at t = {}",
            residual.as_f64(),
            ctx.t_np1
        );
    }
    assemble_state(&ctx.inputs, ctx.t_np1, &phis, &psis, &lambda, &eta, T::zero()).and_then(
        |state| {
            finish(
                state,
                MultiplierRecord {
                    lambda,
                    eta,
                    r: None,
                    residual_inf: residual,
                    newton_iters: iters,
                    sweeps,
                },
            )
        },
    )
}

pub(crate) fn assemble_state<T: Real>(
    inputs: &StepInputs<'_, T>,
    t_np1: T,
    phis: &[PhiSubsteps<T>],
    psis: &PsiSubsteps<T>,
    lambda: &[T],
    eta: &[T],
    r: T,
) -> Result<NuclearState<T>> {
    Ok(NuclearState {
        t: t_np1,
        phi0: inputs.problem.nucleus.field_at(t_np1)?,
        phi: phis
            .iter()
            .enumerate()
            .map(|(m, s)| s.assemble(lambda[m], eta[m], r))
            .collect(),
        psi: psis.assemble(eta, r),
    })
}
