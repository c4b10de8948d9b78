use super::substeps::{prepare, solve_all, PhiSubsteps, PsiSubsteps, StepContext};
use super::volume_preserving::assemble_state;
use super::{finish, frozen_step, MultiplierCoupling, MultiplierRecord, SchemeKind, StepInputs};
use crate::error::{NarError, Result};
use crate::linalg::{lu_solve, max_abs, DenseMatrix};
use crate::real::Real;
use crate::spectral::dot;

/// The `2N x 2N` system of the linearized constraints. Unknowns are ordered
/// `[lambda_0 .. lambda_(N-1), eta_0 .. eta_(N-1)]`; rows `0..N` are the
/// chromosome volumes, rows `N..2N` the heterochromatin volumes.
pub fn linear_system<T: Real>(
    ctx: &StepContext<'_, T>,
    phis: &[PhiSubsteps<T>],
    psis: &PsiSubsteps<T>,
) -> (DenseMatrix<T>, Vec<T>) {
    let n = ctx.n();
    let grid = ctx.ext.grid();
    let cell = grid.dx() * grid.dy();
    let ip = |a: &[T], b: &[T]| dot(a, b) * cell;
    let state_n = ctx.inputs.state_n;
    let vols = &ctx.inputs.problem.volumes;
    let full = ctx.inputs.options.coupling == MultiplierCoupling::Full;
    let dpsi1 = psis.psi1.zip_map(&state_n.psi, |a, b| a - b);
    let mut a = DenseMatrix::zeros(2 * n, 2 * n);
    let mut rhs = vec![T::zero(); 2 * n];
    for m in 0..n {
        let (p, q, w) = (ctx.p[m].values(), ctx.q[m].values(), ctx.w[m].values());
        let sub = &phis[m];
        let dphi1 = sub.phi1.zip_map(&state_n.phi[m], |a, b| a - b);
        a.set(m, m, ip(p, sub.phi2.values()));
        a.set(m, n + m, ip(p, sub.phi3.values()));
        rhs[m] = vols.volume_target(m, ctx.t_np1) - vols.volume_target(m, ctx.t_n)
            - ip(p, dphi1.values());
        a.set(n + m, m, ip(q, sub.phi2.values()));
        for k in 0..n {
            if k == m || full {
                let mut v = ip(w, psis.psi2[k].values());
                if k == m {
                    v = v + ip(q, sub.phi3.values());
                }
                a.set(n + m, n + k, v);
            }
        }
        rhs[n + m] = vols.hetero_target(m, ctx.t_np1) - vols.hetero_target(m, ctx.t_n)
            - ip(q, dphi1.values())
            - ip(w, dpsi1.values());
    }
    (a, rhs)
}

pub(crate) fn row_name(row: usize, n: usize) -> String {
    if row < n {
        format!("chromosome volume {row}")
    } else {
        format!("heterochromatin volume {}", row - n)
    }
}

/// Scheme B: one linear solve per step for all multipliers.
pub fn step_linear<T: Real>(
    inputs: &StepInputs<'_, T>,
) -> Result<(super::NuclearState<T>, MultiplierRecord<T>)> {
    inputs.validate()?;
    if let Some(done) = frozen_step(inputs, SchemeKind::Linear)? {
        return Ok(done);
    }
    let ctx = prepare(inputs, SchemeKind::Linear)?;
    let (phis, psis) = solve_all(&ctx)?;
    let n = ctx.n();
    let (a, rhs) = linear_system(&ctx, &phis, &psis);
    let x = lu_solve(&a, &rhs).map_err(|row| NarError::Singular {
        row: row_name(row, n),
    })?;
    let ax = a.mul_vec(&x);
    let res: Vec<T> = ax.iter().zip(&rhs).map(|(&u, &v)| u - v).collect();
    let (lambda, eta) = (x[..n].to_vec(), x[n..].to_vec());
    let state = assemble_state(&ctx.inputs, ctx.t_np1, &phis, &psis, &lambda, &eta, T::zero())?;
    finish(
        state,
        MultiplierRecord {
            lambda,
            eta,
            r: None,
            residual_inf: max_abs(&res),
            newton_iters: 0,
            sweeps: 0,
        },
    )
}
