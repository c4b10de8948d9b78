use std::sync::Arc;

use super::substeps::{prepare, solve_all, PhiSubsteps, PsiSubsteps, StepContext};
use super::volume_preserving::assemble_state;
use super::{finish, frozen_step, EnergyBalance, MultiplierRecord, SchemeKind, StepInputs};
use crate::error::{NarError, Result};
use crate::linalg::{damped_newton, DenseMatrix, NewtonOptions, NonlinearSystem};
use crate::model::{self, h, h_prime, Envelope, NuclearState};
use crate::real::Real;
use crate::spectral::{dot, ScalarField2D};

/// The `2N + 1` equations of scheme C in the unknowns
/// `[lambda_0 .. lambda_(N-1), eta_0 .. eta_(N-1), R]`.
pub struct EnergySystem<'s, 'a, T: Real> {
    ctx: &'s StepContext<'a, T>,
    phis: &'s [PhiSubsteps<T>],
    psis: &'s PsiSubsteps<T>,
    env: Arc<Envelope<T>>,
    volumes: Vec<T>,
    heteros: Vec<T>,
    e_tilde_n: T,
    balance: EnergyBalance,
}

struct Trial<T: Real> {
    phi: Vec<ScalarField2D<T>>,
    psi: ScalarField2D<T>,
    dphi: Vec<ScalarField2D<T>>,
    dpsi: ScalarField2D<T>,
}

impl<'s, 'a, T: Real> EnergySystem<'s, 'a, T> {
    pub fn new(
        ctx: &'s StepContext<'a, T>,
        phis: &'s [PhiSubsteps<T>],
        psis: &'s PsiSubsteps<T>,
    ) -> Result<Self> {
        let inputs = &ctx.inputs;
        let problem = inputs.problem;
        let n = ctx.n();
        let env = problem.nucleus.envelope_at(ctx.t_np1)?;
        let env_n = problem.nucleus.envelope_at(ctx.t_n)?;
        let state_n = inputs.state_n;
        let e_tilde_n = model::e_tilde_of(&state_n.phi, &state_n.psi, &problem.params, &env_n);
        Ok(Self {
            ctx,
            phis,
            psis,
            env,
            volumes: (0..n).map(|m| problem.volumes.volume_target(m, ctx.t_n)).collect(),
            heteros: (0..n).map(|m| problem.volumes.hetero_target(m, ctx.t_n)).collect(),
            e_tilde_n,
            balance: inputs.options.energy_balance,
        })
    }

    fn n(&self) -> usize {
        self.phis.len()
    }

    fn cell(&self) -> T {
        let g = self.ctx.ext.grid();
        g.dx() * g.dy()
    }

    fn split<'x>(&self, x: &'x [T]) -> (&'x [T], &'x [T], T) {
        let n = self.n();
        (&x[..n], &x[n..2 * n], x[2 * n])
    }

    /// Weights of the constraint terms in the energy equation.
    fn weights(&self, lambda: T, eta: T) -> (T, T) {
        match self.balance {
            EnergyBalance::Exact => (lambda, eta),
            EnergyBalance::Literal => (-T::one(), -T::one()),
        }
    }

    fn trial(&self, x: &[T]) -> Trial<T> {
        let (lambda, eta, r) = self.split(x);
        let state_n = self.ctx.inputs.state_n;
        let phi: Vec<_> = self
            .phis
            .iter()
            .enumerate()
            .map(|(m, s)| s.assemble(lambda[m], eta[m], r))
            .collect();
        let psi = self.psis.assemble(eta, r);
        let dphi = phi
            .iter()
            .zip(&state_n.phi)
            .map(|(a, b)| a.zip_map(b, |u, v| u - v))
            .collect();
        let dpsi = psi.zip_map(&state_n.psi, |u, v| u - v);
        Trial {
            phi,
            psi,
            dphi,
            dpsi,
        }
    }

    /// `sum_m (F_m, D_m) + (G, D_psi)` with the explicit forces.
    fn linear_work(&self, t: &Trial<T>) -> T {
        let ctx = self.ctx;
        let mut s = dot(ctx.force_psi.values(), t.dpsi.values());
        for (f, d) in ctx.force_phi.iter().zip(&t.dphi) {
            s = s + dot(f.values(), d.values());
        }
        s * self.cell()
    }

    /// `(P_m, D_m)` and `(Q_m, D_m) + (W_m, D_psi)`.
    fn constraint_work(&self, m: usize, t: &Trial<T>) -> (T, T) {
        let ctx = self.ctx;
        let cell = self.cell();
        let d = t.dphi[m].values();
        (
            dot(ctx.p[m].values(), d) * cell,
            (dot(ctx.q[m].values(), d) + dot(ctx.w[m].values(), t.dpsi.values())) * cell,
        )
    }
}

impl<T: Real> NonlinearSystem<T> for EnergySystem<'_, '_, T> {
    fn dim(&self) -> usize {
        2 * self.n() + 1
    }

    fn residual(&mut self, x: &[T]) -> Vec<T> {
        let n = self.n();
        let (lambda, eta, r) = self.split(x);
        let t = self.trial(x);
        let cell = self.cell();
        let mut out = vec![T::zero(); 2 * n + 1];
        let h_psi: Vec<T> = t.psi.values().iter().map(|&v| h(v)).collect();
        for m in 0..n {
            let mut sv = T::zero();
            let mut sh = T::zero();
            for (&f, &hp) in t.phi[m].values().iter().zip(&h_psi) {
                let hf = h(f);
                sv = sv + hf;
                sh = sh + hf * hp;
            }
            out[m] = sv * cell - self.volumes[m];
            out[n + m] = sh * cell - self.heteros[m];
        }
        let params = &self.ctx.inputs.problem.params;
        let e_new = model::e_tilde_of(&t.phi, &t.psi, params, &self.env);
        let mut e = e_new - self.e_tilde_n - r * self.linear_work(&t);
        for m in 0..n {
            let (cl, ce) = self.weights(lambda[m], eta[m]);
            let (wp, wq) = self.constraint_work(m, &t);
            e = e + cl * wp + ce * wq;
        }
        out[2 * n] = e;
        out
    }

    fn jacobian(&mut self, x: &[T]) -> Option<DenseMatrix<T>> {
        let n = self.n();
        let (lambda, eta, r) = self.split(x);
        let t = self.trial(x);
        let ctx = self.ctx;
        let params = &ctx.inputs.problem.params;
        let cell = self.cell();
        let ip = |a: &ScalarField2D<T>, b: &ScalarField2D<T>| dot(a.values(), b.values()) * cell;
        let len = t.psi.values().len();
        let s = model::sum_h(&t.phi, len);
        let h_psi: Vec<T> = t.psi.values().iter().map(|&v| h(v)).collect();
        let hp_psi: Vec<T> = t.psi.values().iter().map(|&v| h_prime(v)).collect();
        let psi3 = self.psis.psi3.as_ref().expect("scheme C substeps");
        let mut jac = DenseMatrix::zeros(2 * n + 1, 2 * n + 1);

        // Constraint rows.
        for m in 0..n {
            let sub = &self.phis[m];
            let phi4 = sub.phi4.as_ref().expect("scheme C substeps");
            let f = t.phi[m].values();
            let (mut v_l, mut v_e, mut v_r) = (T::zero(), T::zero(), T::zero());
            let (mut h_l, mut h_e, mut h_r) = (T::zero(), T::zero(), T::zero());
            let mut hf_hp = vec![T::zero(); len];
            for k in 0..len {
                let dh = h_prime(f[k]);
                let (a2, a3, a4) = (sub.phi2.values()[k], sub.phi3.values()[k], phi4.values()[k]);
                v_l = v_l + dh * a2;
                v_e = v_e + dh * a3;
                v_r = v_r + dh * a4;
                h_l = h_l + dh * a2 * h_psi[k];
                h_e = h_e + dh * a3 * h_psi[k];
                h_r = h_r + dh * a4 * h_psi[k];
                hf_hp[k] = h(f[k]) * hp_psi[k];
            }
            jac.set(m, m, v_l * cell);
            jac.set(m, n + m, v_e * cell);
            jac.set(m, 2 * n, v_r * cell);
            jac.set(n + m, m, h_l * cell);
            for k in 0..n {
                let mut v = dot(&hf_hp, self.psis.psi2[k].values()) * cell;
                if k == m {
                    v = v + h_e * cell;
                }
                jac.set(n + m, n + k, v);
            }
            jac.set(n + m, 2 * n, (h_r + dot(&hf_hp, psi3.values())) * cell);
        }

        // Energy row.
        let mut big_psi = model::d_etilde_dpsi_fields(&t.psi, params, &self.env, &s);
        big_psi.axpy(-r, &ctx.force_psi);
        let mut d_r = -self.linear_work(&t);
        for m in 0..n {
            let (cl, ce) = self.weights(lambda[m], eta[m]);
            big_psi.axpy(ce, &ctx.w[m]);
            let mut big_phi =
                model::d_etilde_dphi_fields(m, &t.phi, &t.psi, params, &self.env, &s);
            big_phi.axpy(-r, &ctx.force_phi[m]);
            big_phi.axpy(cl, &ctx.p[m]);
            big_phi.axpy(ce, &ctx.q[m]);
            let sub = &self.phis[m];
            let mut d_l = ip(&big_phi, &sub.phi2);
            let mut d_e = ip(&big_phi, &sub.phi3);
            if self.balance == EnergyBalance::Exact {
                let (wp, wq) = self.constraint_work(m, &t);
                d_l = d_l + wp;
                d_e = d_e + wq;
            }
            jac.set(2 * n, m, d_l);
            jac.set(2 * n, n + m, d_e);
            d_r = d_r + ip(&big_phi, sub.phi4.as_ref().expect("scheme C substeps"));
        }
        for m in 0..n {
            let cur = jac.get(2 * n, n + m);
            jac.set(2 * n, n + m, cur + ip(&big_psi, &self.psis.psi2[m]));
        }
        jac.set(2 * n, 2 * n, d_r + ip(&big_psi, psi3));
        Some(jac)
    }
}

/// The constraint rows of [`EnergySystem`] with `R` held fixed; supplies
/// the starting point of the full solve.
struct FixedR<'q, 's, 'a, T: Real> {
    inner: &'q mut EnergySystem<'s, 'a, T>,
    r: T,
}

impl<T: Real> FixedR<'_, '_, '_, T> {
    fn full(&self, x: &[T]) -> Vec<T> {
        let mut v = x.to_vec();
        v.push(self.r);
        v
    }
}

impl<T: Real> NonlinearSystem<T> for FixedR<'_, '_, '_, T> {
    fn dim(&self) -> usize {
        2 * self.inner.n()
    }

    fn residual(&mut self, x: &[T]) -> Vec<T> {
        let full = self.full(x);
        let mut r = self.inner.residual(&full);
        r.pop();
        r
    }

    fn jacobian(&mut self, x: &[T]) -> Option<DenseMatrix<T>> {
        let full = self.full(x);
        let j = self.inner.jacobian(&full)?;
        let d = self.dim();
        let mut out = DenseMatrix::zeros(d, d);
        for r in 0..d {
            for c in 0..d {
                out.set(r, c, j.get(r, c));
            }
        }
        Some(out)
    }
}

/// Scheme C: volume constraints plus the discrete energy equation through
/// the extra multiplier `R`. Valid once every target is constant.
pub fn step_energy_stable<T: Real>(
    inputs: &StepInputs<'_, T>,
) -> Result<(NuclearState<T>, MultiplierRecord<T>)> {
    inputs.validate()?;
    let t_n = inputs.state_n.t;
    let problem = inputs.problem;
    if !(problem.volumes.constant_from(t_n) && problem.nucleus.shape().constant_from(t_n)) {
        return Err(NarError::Precondition(format!(
            "the energy-stable scheme needs constant targets, which do not hold at t = {t_n}"
        )));
    }
    if let Some(done) = frozen_step(inputs, SchemeKind::EnergyStable)? {
        return Ok(done);
    }
    let ctx = prepare(inputs, SchemeKind::EnergyStable)?;
    let (phis, psis) = solve_all(&ctx)?;
    let n = ctx.n();
    let mut x0 = Vec::with_capacity(2 * n + 1);
    match inputs.guess {
        Some(g) => {
            x0.extend_from_slice(&g.lambda);
            x0.extend_from_slice(&g.eta);
            x0.push(g.r.unwrap_or_else(T::one));
        }
        None => {
            x0.resize(2 * n, T::zero());
            x0.push(T::one());
        }
    }
    let tol = inputs.tolerances;
    let opts = NewtonOptions::new(tol.newton, tol.max_newton_iters);
    let mut sys = EnergySystem::new(&ctx, &phis, &psis)?;
    // The energy row depends only weakly on R, so Newton from a poor guess
    // for the volume multipliers overshoots. Fit those first at the guessed R.
    let r_guess = x0[2 * n];
    let pre = damped_newton(
        &mut FixedR {
            inner: &mut sys,
            r: r_guess,
        },
        &x0[..2 * n],
        &opts,
    )?;
    x0[..2 * n].copy_from_slice(&pre.x);
    let mut rep = damped_newton(&mut sys, &x0, &opts)?;
    rep.iterations += pre.iterations;
    let residual = rep.residual;
    let (lambda, eta, r) = (rep.x[..n].to_vec(), rep.x[n..2 * n].to_vec(), rep.x[2 * n]);
    let state = assemble_state(&ctx.inputs, ctx.t_np1, &phis, &psis, &lambda, &eta, r)?;
    finish(
        state,
        MultiplierRecord {
            lambda,
            eta,
            r: Some(r),
            residual_inf: residual,
            newton_iters: rep.iterations,
            sweeps: 0,
        },
    )
}
