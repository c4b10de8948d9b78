//! Per-step measurements and the temporal convergence harness.

use log::warn;
use rayon::prelude::*;

use crate::driver::{run_from, NoObserver, RunConfig, SchemePlan};
use crate::error::{NarError, Result};
use crate::geometry::EllipseSpec;
use crate::model::{self, h, Envelope, ModelParams, NuclearState};
use crate::real::Real;
use crate::schedules::VolumeSchedules;
use crate::schemes::{MultiplierRecord, Problem, SchemeKind, SchemeOptions, Tolerances};
use crate::spectral;

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsRow<T> {
    pub t: T,
    pub e_total: T,
    pub e0: T,
    pub e1: T,
    pub e2: T,
    pub volumes: Vec<T>,
    pub hetero_volumes: Vec<T>,
    /// `v_m / V_m`, 0 where `V_m = 0`.
    pub rho: Vec<T>,
    pub mean_volume: T,
    pub mean_hetero: T,
    pub lambda: Vec<T>,
    pub eta: Vec<T>,
    /// 1 for schemes without the energy multiplier.
    pub r: T,
    /// Largest deviation of a measured volume from its schedule.
    pub constraint_residual_inf: T,
    /// `E^prev - E`, 0 without a previous energy.
    pub energy_decrement: T,
    pub nucleus_volume: T,
    pub sum_volumes_minus_nucleus: T,
}

/// Computes every diagnostic of `state`. Pure: the previous energy is an
/// input rather than remembered.
pub fn measure<T: Real>(
    state: &NuclearState<T>,
    record: Option<&MultiplierRecord<T>>,
    params: &ModelParams<T>,
    schedules: &VolumeSchedules<T>,
    prev_energy: Option<T>,
) -> Result<DiagnosticsRow<T>> {
    let env = Envelope::new(state.phi0.clone())?;
    let energy = model::energy_with(state, params, &env)?;
    let n = state.n_chromosomes();
    let h_psi = state.psi.map(h);
    let mut volumes = Vec::with_capacity(n);
    let mut hetero = Vec::with_capacity(n);
    for f in &state.phi {
        let hf = f.map(h);
        volumes.push(spectral::integrate(&hf));
        hetero.push(spectral::inner_product(&hf, &h_psi)?);
    }
    let rho = volumes
        .iter()
        .zip(&hetero)
        .map(|(&v, &w)| if v == T::zero() { T::zero() } else { w / v })
        .collect();
    let mut residual = T::zero();
    if schedules.len() == n {
        for m in 0..n {
            residual = residual
                .max((volumes[m] - schedules.volume_target(m, state.t)).abs())
                .max((hetero[m] - schedules.hetero_target(m, state.t)).abs());
        }
    }
    let mean = |v: &[T]| {
        if v.is_empty() {
            T::zero()
        } else {
            v.iter().copied().sum::<T>() / T::from_usize_lossy(v.len())
        }
    };
    let nucleus = model::nucleus_volume(&state.phi0);
    let total_v: T = volumes.iter().copied().sum();
    let zeros = vec![T::zero(); n];
    Ok(DiagnosticsRow {
        t: state.t,
        e_total: energy.total,
        e0: energy.e0,
        e1: energy.e1,
        e2: energy.e2,
        mean_volume: mean(&volumes),
        mean_hetero: mean(&hetero),
        rho,
        lambda: record.map_or_else(|| zeros.clone(), |r| r.lambda.clone()),
        eta: record.map_or_else(|| zeros.clone(), |r| r.eta.clone()),
        r: record.and_then(|r| r.r).unwrap_or_else(T::one),
        constraint_residual_inf: residual,
        energy_decrement: prev_energy.map_or(T::zero(), |e| e - energy.total),
        nucleus_volume: nucleus,
        sum_volumes_minus_nucleus: total_v - nucleus,
        volumes,
        hetero_volumes: hetero,
    })
}

/// Fraction of heterochromatin mass `int h(psi)` within `band_width` of the
/// envelope, measured in the scaled elliptical radius.
pub fn envelope_localization<T: Real>(
    state: &NuclearState<T>,
    nucleus: &EllipseSpec<T>,
    band_width: T,
) -> Result<T> {
    if !(band_width > T::zero()) {
        return Err(NarError::Parameter(format!("band width must be positive, got {band_width}")));
    }
    let grid = state.grid();
    let (nx, ny) = (grid.nx(), grid.ny());
    let vals = state.psi.values();
    let mut total = T::zero();
    let mut inside = T::zero();
    for j in 0..ny {
        let y = grid.y(j);
        for i in 0..nx {
            let w = h(vals[j * nx + i]);
            total = total + w;
            if (nucleus.scaled_radius(grid.x(i), y) - T::one()).abs() < band_width {
                inside = inside + w;
            }
        }
    }
    if !(total.abs() > T::epsilon()) {
        return Err(NarError::EmptyHeterochromatin);
    }
    Ok(inside / total)
}

/// Number of 4-connected components of `{h(psi) > threshold}` with at least
/// `MIN_CLUSTER_CELLS` cells. Connectivity wraps around the periodic cell.
pub fn cluster_count<T: Real>(state: &NuclearState<T>, threshold: T) -> usize {
    cluster_sizes(state, threshold)
        .into_iter()
        .filter(|&s| s >= MIN_CLUSTER_CELLS)
        .count()
}

pub const MIN_CLUSTER_CELLS: usize = 4;

/// Sizes of all components, largest first.
pub fn cluster_sizes<T: Real>(state: &NuclearState<T>, threshold: T) -> Vec<usize> {
    let grid = state.grid();
    let (nx, ny) = (grid.nx(), grid.ny());
    let mask: Vec<bool> = state.psi.values().iter().map(|&v| h(v) > threshold).collect();
    let mut seen = vec![false; mask.len()];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut size = 0;
        while let Some(k) = stack.pop() {
            size += 1;
            let (i, j) = (k % nx, k / nx);
            let neighbours = [
                j * nx + (i + 1) % nx,
                j * nx + (i + nx - 1) % nx,
                ((j + 1) % ny) * nx + i,
                ((j + ny - 1) % ny) * nx + i,
            ];
            for nb in neighbours {
                if mask[nb] && !seen[nb] {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
        sizes.push(size);
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

/// `max_m ||phi_m - phi_m'||_inf` and `||psi - psi'||_inf` on collocation
/// values.
pub fn field_errors<T: Real>(a: &NuclearState<T>, b: &NuclearState<T>) -> Result<(T, T)> {
    a.phi0.ensure_same_grid(&b.phi0)?;
    if a.n_chromosomes() != b.n_chromosomes() {
        return Err(NarError::Structure("states carry different chromosome counts".into()));
    }
    let e_phi = a
        .phi
        .iter()
        .zip(&b.phi)
        .fold(T::zero(), |m, (x, y)| m.max(x.max_abs_diff(y)));
    Ok((e_phi, a.psi.max_abs_diff(&b.psi)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRow<T> {
    pub dt: T,
    pub error_phi: T,
    pub error_psi: T,
    /// Observed orders against the previous (larger) `dt`; `None` on the
    /// first row.
    pub order_phi: Option<T>,
    pub order_psi: Option<T>,
}

/// Orders `log(e_i / e_(i+1)) / log(dt_i / dt_(i+1))` between consecutive
/// rows.
pub fn convergence_table<T: Real>(dts: &[T], errors: &[(T, T)]) -> Vec<ConvergenceRow<T>> {
    let mut rows: Vec<ConvergenceRow<T>> = Vec::with_capacity(dts.len());
    for (i, (&dt, &(ep, es))) in dts.iter().zip(errors).enumerate() {
        let order = |cur: T, prev: T| (prev / cur).ln() / (dts[i - 1] / dt).ln();
        let (op, os) = if i == 0 {
            (None, None)
        } else {
            let prev = &rows[i - 1];
            (Some(order(ep, prev.error_phi)), Some(order(es, prev.error_psi)))
        };
        rows.push(ConvergenceRow {
            dt,
            error_phi: ep,
            error_psi: es,
            order_phi: op,
            order_psi: os,
        });
    }
    rows
}

/// Settings of a temporal convergence study.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceSpec<T> {
    pub kind: SchemeKind,
    pub reference_kind: SchemeKind,
    pub dts: Vec<T>,
    pub reference_dt: T,
    pub t_end: T,
    /// Step halvings allowed on solver failure in every run.
    pub max_halvings: usize,
    pub tolerances: Tolerances<T>,
    pub options: SchemeOptions,
}

/// Runs `initial` to `t_end` with a single scheme.
pub fn run_to<T: Real>(
    problem: &Problem<T>,
    initial: &NuclearState<T>,
    kind: SchemeKind,
    dt: T,
    t_end: T,
    max_halvings: usize,
    tolerances: Tolerances<T>,
    options: SchemeOptions,
) -> Result<NuclearState<T>> {
    let config = RunConfig {
        dt,
        t_max: t_end,
        cadence: usize::MAX,
        max_halvings,
        plan: SchemePlan::Single(kind),
        tolerances,
        options,
    };
    let steps = config.steps();
    if (T::from_usize_lossy(steps) * dt - t_end).abs() > T::lit(1e-9) * t_end.max(T::one()) {
        return Err(NarError::Parameter(format!("dt = {dt} does not divide T = {t_end}")));
    }
    run_from(problem, initial.clone(), None, None, &config, &mut NoObserver)
        .map(|o| o.state)
        .map_err(|f| f.error)
}

/// Errors at `t_end` against a reference run with a much smaller step, with
/// observed orders. Cases run in parallel.
pub fn convergence_study<T: Real>(
    problem: &Problem<T>,
    initial: &NuclearState<T>,
    spec: &ConvergenceSpec<T>,
) -> Result<(NuclearState<T>, Vec<ConvergenceRow<T>>)> {
    if spec.dts.is_empty() {
        return Err(NarError::Parameter("no time steps to study".into()));
    }
    let smallest = spec.dts.iter().copied().fold(T::infinity(), T::min);
    if !(spec.reference_dt < smallest / T::lit(4.0)) {
        warn!(
            "reference dt {} is not below a quarter of the smallest dt {smallest}",
            spec.reference_dt
        );
    }
    let mut cases: Vec<(T, SchemeKind)> = spec.dts.iter().map(|&dt| (dt, spec.kind)).collect();
    cases.push((spec.reference_dt, spec.reference_kind));
    let mut finals = cases
        .par_iter()
        .map(|&(dt, kind)| {
            run_to(
                problem,
                initial,
                kind,
                dt,
                spec.t_end,
                spec.max_halvings,
                spec.tolerances,
                spec.options,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let reference = finals.pop().expect("reference case");
    let errors = finals
        .iter()
        .map(|s| field_errors(s, &reference))
        .collect::<Result<Vec<_>>>()?;
    Ok((reference, convergence_table(&spec.dts, &errors)))
}
