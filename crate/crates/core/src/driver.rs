//! Time loop: scheme switching, output cadence and step halving on failure.

use log::{info, warn};

use crate::error::{NarError, Result};
use crate::model::NuclearState;
use crate::real::Real;
use crate::schemes::{
    step, MultiplierRecord, Multipliers, Problem, SchemeKind, SchemeOptions, StepInputs,
    Tolerances,
};

/// Which scheme advances each step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SchemePlan<T> {
    Single(SchemeKind),
    /// `before` for steps starting at `t < at`, `after` from then on.
    Switch {
        before: SchemeKind,
        after: SchemeKind,
        at: T,
    },
}

impl<T: Real> SchemePlan<T> {
    pub fn kind_at(&self, t: T, dt: T) -> SchemeKind {
        match *self {
            Self::Single(k) => k,
            // A step starting within rounding distance of the switch time
            // already belongs to the second phase.
            Self::Switch { before, after, at } => {
                if t >= at - T::lit(1e-9) * dt {
                    after
                } else {
                    before
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig<T> {
    pub dt: T,
    pub t_max: T,
    /// Observe every `cadence` steps (and always the first and last state).
    pub cadence: usize,
    /// How many times a failing step may be split in half.
    pub max_halvings: usize,
    pub plan: SchemePlan<T>,
    pub tolerances: Tolerances<T>,
    pub options: SchemeOptions,
}

impl<T: Real> RunConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero() && self.dt.is_finite()) {
            return Err(NarError::Parameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_max >= T::zero() && self.t_max.is_finite()) {
            return Err(NarError::Parameter(format!(
                "t_max must be nonnegative, got {}",
                self.t_max
            )));
        }
        if self.cadence == 0 {
            return Err(NarError::Parameter("output cadence must be >= 1".into()));
        }
        self.tolerances.validate()
    }

    /// Number of steps of size `dt` that reach `t_max`.
    pub fn steps(&self) -> usize {
        (self.t_max / self.dt).round().to_usize().unwrap_or(0)
    }
}

/// Receives the state at every cadence tick.
pub trait Observer<T: Real> {
    fn observe(
        &mut self,
        step: usize,
        state: &NuclearState<T>,
        record: Option<&MultiplierRecord<T>>,
    ) -> Result<()>;
}

/// Ignores everything.
pub struct NoObserver;

impl<T: Real> Observer<T> for NoObserver {
    fn observe(&mut self, _: usize, _: &NuclearState<T>, _: Option<&MultiplierRecord<T>>) -> Result<()> {
        Ok(())
    }
}

/// Keeps every observed state and multiplier record.
#[derive(Clone, Debug, Default)]
pub struct Trajectory<T: Real> {
    pub steps: Vec<usize>,
    pub states: Vec<NuclearState<T>>,
    pub records: Vec<Option<MultiplierRecord<T>>>,
}

impl<T: Real> Observer<T> for Trajectory<T> {
    fn observe(
        &mut self,
        step: usize,
        state: &NuclearState<T>,
        record: Option<&MultiplierRecord<T>>,
    ) -> Result<()> {
        self.steps.push(step);
        self.states.push(state.clone());
        self.records.push(record.cloned());
        Ok(())
    }
}

impl<F, T: Real> Observer<T> for F
where
    F: FnMut(usize, &NuclearState<T>, Option<&MultiplierRecord<T>>) -> Result<()>,
{
    fn observe(
        &mut self,
        step: usize,
        state: &NuclearState<T>,
        record: Option<&MultiplierRecord<T>>,
    ) -> Result<()> {
        self(step, state, record)
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome<T: Real> {
    pub state: NuclearState<T>,
    /// Previous time level, for restarting second-order extrapolation.
    pub previous: NuclearState<T>,
    pub steps: usize,
    pub halvings: usize,
    pub last_record: Option<MultiplierRecord<T>>,
}

/// A run that stopped early; keeps the last good state for inspection.
#[derive(Debug)]
pub struct RunFailure<T: Real> {
    pub error: NarError,
    pub step: usize,
    pub t: T,
    pub last_state: Box<NuclearState<T>>,
}

impl<T: Real> std::fmt::Display for RunFailure<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "step {} at t = {} failed: {}", self.step, self.t, self.error)
    }
}

impl<T: Real> std::error::Error for RunFailure<T> {}

struct Stepper<'p, T: Real> {
    problem: &'p Problem<T>,
    config: &'p RunConfig<T>,
    halvings: usize,
}

impl<T: Real> Stepper<'_, T> {
    /// Advances from `state` over one interval of length `dt`, splitting it
    /// in half on solver failure. Halved intervals restart the extrapolation
    /// at first order.
    fn advance(
        &mut self,
        kind: SchemeKind,
        state: &NuclearState<T>,
        previous: Option<&NuclearState<T>>,
        dt: T,
        guess: Option<&Multipliers<T>>,
        depth: usize,
    ) -> Result<(NuclearState<T>, MultiplierRecord<T>)> {
        let inputs = StepInputs {
            state_n: state,
            state_nm1: previous.unwrap_or(state),
            dt,
            problem: self.problem,
            tolerances: &self.config.tolerances,
            options: &self.config.options,
            guess,
        };
        match step(kind, &inputs) {
            Ok(out) => Ok(out),
            Err(e @ (NarError::NotConverged { .. } | NarError::Singular { .. }))
                if depth < self.config.max_halvings =>
            {
                warn!("step at t = {} with dt = {dt} failed ({e}); halving", state.t);
                self.halvings += 1;
                let half = dt * T::lit(0.5);
                let (mid, rec) = self.advance(kind, state, None, half, guess, depth + 1)?;
                let guess = rec.multipliers();
                self.advance(kind, &mid, Some(state), half, Some(&guess), depth + 1)
            }
            Err(e) => Err(e),
        }
    }
}

/// Advances `initial` to `t_max`.
///
/// The observer sees the initial state as step 0, every `cadence`-th step,
/// and the final state. Step `n` starts at `t = n dt` exactly.
pub fn run<T: Real>(
    problem: &Problem<T>,
    initial: NuclearState<T>,
    config: &RunConfig<T>,
    observer: &mut dyn Observer<T>,
) -> std::result::Result<RunOutcome<T>, RunFailure<T>> {
    run_from(problem, initial, None, None, config, observer)
}

/// Like [`run`], continuing from a previous time level and multiplier guess
/// when available.
pub fn run_from<T: Real>(
    problem: &Problem<T>,
    initial: NuclearState<T>,
    previous: Option<NuclearState<T>>,
    guess: Option<Multipliers<T>>,
    config: &RunConfig<T>,
    observer: &mut dyn Observer<T>,
) -> std::result::Result<RunOutcome<T>, RunFailure<T>> {
    let fail = |error: NarError, step: usize, state: &NuclearState<T>| RunFailure {
        error,
        step,
        t: state.t,
        last_state: Box::new(state.clone()),
    };
    if let Err(e) = config.validate().and_then(|_| problem.validate()) {
        return Err(fail(e, 0, &initial));
    }
    if let Err(e) = observer.observe(0, &initial, None) {
        return Err(fail(e, 0, &initial));
    }
    let t_start = initial.t;
    let n_steps = config.steps();
    let mut stepper = Stepper {
        problem,
        config,
        halvings: 0,
    };
    let mut state = initial;
    let mut prev: Option<NuclearState<T>> = previous;
    let mut guess = guess;
    let mut last_kind = None;
    let mut last_record = None;
    for n in 0..n_steps {
        let kind = config.plan.kind_at(state.t, config.dt);
        if last_kind.is_some_and(|k| k != kind) {
            info!("switching to scheme {} at t = {}", kind.letter(), state.t);
        }
        last_kind = Some(kind);
        let (mut next, record) = match stepper.advance(
            kind,
            &state,
            prev.as_ref(),
            config.dt,
            guess.as_ref(),
            0,
        ) {
            Ok(out) => out,
            Err(e) => return Err(fail(e, n + 1, &state)),
        };
        next.t = t_start + T::from_usize_lossy(n + 1) * config.dt;
        guess = Some(record.multipliers());
        prev = Some(std::mem::replace(&mut state, next));
        let step_no = n + 1;
        if step_no % config.cadence == 0 || step_no == n_steps {
            if let Err(e) = observer.observe(step_no, &state, Some(&record)) {
                return Err(fail(e, step_no, &state));
            }
        }
        last_record = Some(record);
    }
    Ok(RunOutcome {
        previous: prev.unwrap_or_else(|| state.clone()),
        state,
        steps: n_steps,
        halvings: stepper.halvings,
        last_record,
    })
}
