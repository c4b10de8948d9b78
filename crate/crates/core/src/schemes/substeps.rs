use std::sync::Arc;

use rayon::prelude::*;

use super::{SchemeKind, StepInputs};
use crate::error::{NarError, Result};
use crate::geometry::Nucleus;
use crate::model::{self, h, h_prime, Envelope, NuclearState};
use crate::real::Real;
use crate::spectral::{self, ScalarField2D};

/// `3/2 f^n - 1/2 f^(n-1)` for every evolved field; `phi0` is the prescribed
/// nucleus at `t_half`.
pub fn extrapolate<T: Real>(
    state_n: &NuclearState<T>,
    state_nm1: &NuclearState<T>,
    nucleus: &Nucleus<T>,
    t_half: T,
) -> Result<NuclearState<T>> {
    state_n.validate()?;
    state_n.phi0.ensure_same_grid(&state_nm1.phi0)?;
    if state_n.n_chromosomes() != state_nm1.n_chromosomes() {
        return Err(NarError::Structure("time levels carry different chromosome counts".into()));
    }
    let (c1, c0) = (T::lit(1.5), T::lit(-0.5));
    let ext = |a: &ScalarField2D<T>, b: &ScalarField2D<T>| a.zip_map(b, |x, y| c1 * x + c0 * y);
    Ok(NuclearState {
        t: t_half,
        phi0: nucleus.field_at(t_half)?,
        phi: state_n
            .phi
            .iter()
            .zip(&state_nm1.phi)
            .map(|(a, b)| ext(a, b))
            .collect(),
        psi: ext(&state_n.psi, &state_nm1.psi),
    })
}

/// Pieces of `phi_m^(n+1)`: `phi1 + lambda phi2 + eta phi3 (+ R phi4)`.
#[derive(Clone, Debug)]
pub struct PhiSubsteps<T: Real> {
    pub phi1: ScalarField2D<T>,
    pub phi2: ScalarField2D<T>,
    pub phi3: ScalarField2D<T>,
    pub phi4: Option<ScalarField2D<T>>,
}

impl<T: Real> PhiSubsteps<T> {
    pub fn assemble(&self, lambda: T, eta: T, r: T) -> ScalarField2D<T> {
        let mut out = self.phi1.clone();
        out.axpy(lambda, &self.phi2);
        out.axpy(eta, &self.phi3);
        if let Some(p4) = &self.phi4 {
            out.axpy(r, p4);
        }
        out
    }
}

/// Pieces of `psi^(n+1)`: `psi1 + sum_m eta_m psi2_m (+ R psi3)`.
#[derive(Clone, Debug)]
pub struct PsiSubsteps<T: Real> {
    pub psi1: ScalarField2D<T>,
    pub psi2: Vec<ScalarField2D<T>>,
    pub psi3: Option<ScalarField2D<T>>,
}

impl<T: Real> PsiSubsteps<T> {
    pub fn assemble(&self, eta: &[T], r: T) -> ScalarField2D<T> {
        let mut out = self.psi1.clone();
        for (e, p) in eta.iter().zip(&self.psi2) {
            out.axpy(*e, p);
        }
        if let Some(p3) = &self.psi3 {
            out.axpy(r, p3);
        }
        out
    }
}

/// Per-step data shared by the substep solves and the multiplier systems.
#[derive(Debug)]
pub struct StepContext<'a, T: Real> {
    pub inputs: StepInputs<'a, T>,
    pub kind: SchemeKind,
    pub t_n: T,
    pub t_np1: T,
    /// `1 / (M dt)`
    pub a: T,
    pub ext: NuclearState<T>,
    pub env_half: Arc<Envelope<T>>,
    /// `dE~/dphi_m` at the extrapolated state.
    pub force_phi: Vec<ScalarField2D<T>>,
    /// `dE~/dpsi` at the extrapolated state.
    pub force_psi: ScalarField2D<T>,
    /// `h'(phi_m*)`, multiplies `lambda_m`.
    pub p: Vec<ScalarField2D<T>>,
    /// `h'(phi_m*) h(psi*)`, multiplies `eta_m` in the `phi_m` equation.
    pub q: Vec<ScalarField2D<T>>,
    /// `h(phi_m*) h'(psi*)`, multiplies `eta_m` in the `psi` equation.
    pub w: Vec<ScalarField2D<T>>,
}

impl<T: Real> StepContext<'_, T> {
    pub fn n(&self) -> usize {
        self.ext.n_chromosomes()
    }

    /// Scheme C moves the explicit energy force into its own substep.
    pub fn split_force(&self) -> bool {
        self.kind == SchemeKind::EnergyStable
    }
}

/// Extrapolates and evaluates every explicit term of the step.
pub fn prepare<'a, T: Real>(
    inputs: &StepInputs<'a, T>,
    kind: SchemeKind,
) -> Result<StepContext<'a, T>> {
    inputs.validate()?;
    let params = &inputs.problem.params;
    if !(params.mobility > T::zero()) {
        return Err(NarError::Parameter("substeps need a positive mobility".into()));
    }
    let t_n = inputs.state_n.t;
    let t_half = t_n + T::lit(0.5) * inputs.dt;
    let ext = extrapolate(inputs.state_n, inputs.state_nm1, &inputs.problem.nucleus, t_half)?;
    let env_half = inputs.problem.nucleus.envelope_at(t_half)?;
    let len = ext.grid().len();
    let s = model::sum_h(&ext.phi, len);
    let n = ext.n_chromosomes();
    let force_phi = (0..n)
        .into_par_iter()
        .map(|m| model::d_etilde_dphi_fields(m, &ext.phi, &ext.psi, params, &env_half, &s))
        .collect();
    let force_psi = model::d_etilde_dpsi_fields(&ext.psi, params, &env_half, &s);
    let h_psi = ext.psi.map(h);
    let hp_psi = ext.psi.map(h_prime);
    let p: Vec<_> = ext.phi.iter().map(|f| f.map(h_prime)).collect();
    let q = p.iter().map(|pm| pm.zip_map(&h_psi, |a, b| a * b)).collect();
    let w = ext
        .phi
        .iter()
        .map(|f| f.zip_map(&hp_psi, |a, b| h(a) * b))
        .collect();
    Ok(StepContext {
        inputs: *inputs,
        kind,
        t_n,
        t_np1: t_n + inputs.dt,
        a: T::one() / (params.mobility * inputs.dt),
        ext,
        env_half,
        force_phi,
        force_psi,
        p,
        q,
        w,
    })
}

/// `(a - b Lap)^(-1) rhs`, dealiasing the right-hand side if requested.
fn helmholtz<T: Real>(a: T, b: T, rhs: &ScalarField2D<T>, dealias: bool) -> ScalarField2D<T> {
    let mut s = spectral::forward(rhs);
    if dealias {
        s.dealias();
    }
    s.apply_symbol(|k2| T::one() / (a + b * k2));
    spectral::into_field(s)
}

/// `(a - b Lap)^(-1) [(a + b Lap) f - force]`; the force is omitted when
/// `None`.
fn crank_nicolson<T: Real>(
    a: T,
    b: T,
    f: &ScalarField2D<T>,
    force: Option<&ScalarField2D<T>>,
    dealias: bool,
) -> ScalarField2D<T> {
    let mut s = spectral::forward(f);
    match force {
        Some(force) => {
            let mut fs = spectral::forward(force);
            if dealias {
                fs.dealias();
            }
            s.combine(&fs, |k2| {
                let d = T::one() / (a + b * k2);
                ((a - b * k2) * d, -d)
            });
        }
        None => s.apply_symbol(|k2| (a - b * k2) / (a + b * k2)),
    }
    spectral::into_field(s)
}

/// Substeps of chromosome `m` (zero-based).
pub fn solve_substeps_phi<T: Real>(m: usize, ctx: &StepContext<'_, T>) -> Result<PhiSubsteps<T>> {
    let n = ctx.n();
    if m >= n {
        return Err(NarError::IndexOutOfRange { index: m, n });
    }
    let a = ctx.a;
    let b = T::lit(0.5) * ctx.inputs.problem.params.eps2_phi;
    spectral::check_helmholtz(a, b)?;
    let dealias = ctx.inputs.options.dealias;
    let phi_n = &ctx.inputs.state_n.phi[m];
    let force = &ctx.force_phi[m];
    let split = ctx.split_force();
    Ok(PhiSubsteps {
        phi1: crank_nicolson(a, b, phi_n, (!split).then_some(force), dealias),
        phi2: helmholtz(a, b, &ctx.p[m], dealias),
        phi3: helmholtz(a, b, &ctx.q[m], dealias),
        phi4: split.then(|| helmholtz(a, b, &force.map(|v| -v), dealias)),
    })
}

/// Substeps of the heterochromatin field.
pub fn solve_substeps_psi<T: Real>(ctx: &StepContext<'_, T>) -> Result<PsiSubsteps<T>> {
    let a = ctx.a;
    let b = T::lit(0.5) * ctx.inputs.problem.params.eps2_psi;
    spectral::check_helmholtz(a, b)?;
    let dealias = ctx.inputs.options.dealias;
    let split = ctx.split_force();
    let force = &ctx.force_psi;
    Ok(PsiSubsteps {
        psi1: crank_nicolson(a, b, &ctx.inputs.state_n.psi, (!split).then_some(force), dealias),
        psi2: ctx
            .w
            .par_iter()
            .map(|w| helmholtz(a, b, w, dealias))
            .collect(),
        psi3: split.then(|| helmholtz(a, b, &force.map(|v| -v), dealias)),
    })
}

/// All substeps of a step, chromosomes in parallel.
pub fn solve_all<T: Real>(
    ctx: &StepContext<'_, T>,
) -> Result<(Vec<PhiSubsteps<T>>, PsiSubsteps<T>)> {
    let phis = (0..ctx.n())
        .into_par_iter()
        .map(|m| solve_substeps_phi(m, ctx))
        .collect::<Result<Vec<_>>>()?;
    Ok((phis, solve_substeps_psi(ctx)?))
}
