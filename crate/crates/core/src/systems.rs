//! Benchmark dynamical systems: Lorenz, Rössler, the double-scroll circuit and
//! the Mackey-Glass delay equation.
//!
//! Everything here integrates with the classical four-stage Runge-Kutta scheme at
//! a fine internal step and is subsampled onto the coarser sampling grid. The
//! delay system keeps a ring buffer of past states at the internal resolution;
//! the delay is required to be a whole number of internal steps so the delayed
//! argument is on-grid at the start and end of every step and linearly
//! interpolated at the half step.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Lorenz,
    Rossler,
    DoubleScroll,
    MackeyGlass,
}

impl SystemKind {
    pub const ALL: [SystemKind; 4] = [
        SystemKind::Lorenz,
        SystemKind::Rossler,
        SystemKind::DoubleScroll,
        SystemKind::MackeyGlass,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Lorenz => "lorenz",
            SystemKind::Rossler => "rossler",
            SystemKind::DoubleScroll => "double_scroll",
            SystemKind::MackeyGlass => "mackey_glass",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            SystemKind::MackeyGlass => 1,
            _ => 3,
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "lorenz" => Ok(SystemKind::Lorenz),
            "rossler" | "rössler" => Ok(SystemKind::Rossler),
            "double_scroll" | "doublescroll" => Ok(SystemKind::DoubleScroll),
            "mackey_glass" | "mackeyglass" => Ok(SystemKind::MackeyGlass),
            other => Err(Error::Config(format!("unknown system `{other}`"))),
        }
    }
}

/// A benchmark system together with its parameter values.
#[derive(Clone, Debug, PartialEq)]
pub enum SystemSpec<T> {
    /// `x' = sigma (y - x)`, `y' = x (rho - z) - y`, `z' = x y - beta z`.
    Lorenz { sigma: T, rho: T, beta: T },
    /// `x' = -y - z`, `y' = x + a y`, `z' = b + z (x - c)`.
    Rossler { a: T, b: T, c: T },
    /// Double-scroll circuit with `dV = V1 - V2`:
    /// `V1' = V1/r1 - dV/r2 - 2 ir sinh(beta dV)`,
    /// `V2' = dV/r2 + 2 ir sinh(beta dV) - I`, `I' = V2 - r4 I`.
    DoubleScroll { r1: T, r2: T, r4: T, beta: T, ir: T },
    /// `x' = a x(t - delay) / (1 + x(t - delay)^c) - b x`.
    MackeyGlass { a: T, b: T, c: T, delay: T },
}

impl<T: Real> SystemSpec<T> {
    pub fn lorenz() -> Self {
        SystemSpec::Lorenz { sigma: T::lit(10.0), rho: T::lit(28.0), beta: T::lit(8.0 / 3.0) }
    }

    pub fn rossler() -> Self {
        SystemSpec::Rossler { a: T::lit(0.2), b: T::lit(0.2), c: T::lit(5.7) }
    }

    pub fn double_scroll() -> Self {
        SystemSpec::DoubleScroll {
            r1: T::lit(1.2),
            r2: T::lit(3.44),
            r4: T::lit(0.193),
            beta: T::lit(11.6),
            ir: T::lit(2.25e-5),
        }
    }

    /// Mackey-Glass in the rescaled form with delay 2 (chaotic at these values).
    pub fn mackey_glass() -> Self {
        SystemSpec::MackeyGlass { a: T::lit(2.0), b: T::lit(1.0), c: T::lit(9.65), delay: T::lit(2.0) }
    }

    pub fn standard(kind: SystemKind) -> Self {
        match kind {
            SystemKind::Lorenz => Self::lorenz(),
            SystemKind::Rossler => Self::rossler(),
            SystemKind::DoubleScroll => Self::double_scroll(),
            SystemKind::MackeyGlass => Self::mackey_glass(),
        }
    }

    /// Standard parameters for `kind` with the named values replaced.
    pub fn with_params(kind: SystemKind, overrides: &BTreeMap<String, T>) -> Result<Self> {
        let mut spec = Self::standard(kind);
        for (name, &value) in overrides {
            let slot = spec.param_mut(name).ok_or_else(|| {
                Error::InvalidParameter(format!("system {kind} has no parameter `{name}`"))
            })?;
            *slot = value;
        }
        if let SystemSpec::MackeyGlass { delay, .. } = &spec {
            if *delay <= T::zero() {
                return Err(Error::InvalidParameter("Mackey-Glass delay must be positive".into()));
            }
        }
        Ok(spec)
    }

    fn param_mut(&mut self, name: &str) -> Option<&mut T> {
        match (self, name) {
            (SystemSpec::Lorenz { sigma, .. }, "sigma") => Some(sigma),
            (SystemSpec::Lorenz { rho, .. }, "rho") => Some(rho),
            (SystemSpec::Lorenz { beta, .. }, "beta") => Some(beta),
            (SystemSpec::Rossler { a, .. }, "a") => Some(a),
            (SystemSpec::Rossler { b, .. }, "b") => Some(b),
            (SystemSpec::Rossler { c, .. }, "c") => Some(c),
            (SystemSpec::DoubleScroll { r1, .. }, "r1") => Some(r1),
            (SystemSpec::DoubleScroll { r2, .. }, "r2") => Some(r2),
            (SystemSpec::DoubleScroll { r4, .. }, "r4") => Some(r4),
            (SystemSpec::DoubleScroll { beta, .. }, "beta") => Some(beta),
            (SystemSpec::DoubleScroll { ir, .. }, "ir") => Some(ir),
            (SystemSpec::MackeyGlass { a, .. }, "a") => Some(a),
            (SystemSpec::MackeyGlass { b, .. }, "b") => Some(b),
            (SystemSpec::MackeyGlass { c, .. }, "c") => Some(c),
            (SystemSpec::MackeyGlass { delay, .. }, "delay") => Some(delay),
            _ => None,
        }
    }

    pub fn params(&self) -> BTreeMap<&'static str, T> {
        match *self {
            SystemSpec::Lorenz { sigma, rho, beta } => {
                BTreeMap::from([("sigma", sigma), ("rho", rho), ("beta", beta)])
            }
            SystemSpec::Rossler { a, b, c } => BTreeMap::from([("a", a), ("b", b), ("c", c)]),
            SystemSpec::DoubleScroll { r1, r2, r4, beta, ir } => {
                BTreeMap::from([("r1", r1), ("r2", r2), ("r4", r4), ("beta", beta), ("ir", ir)])
            }
            SystemSpec::MackeyGlass { a, b, c, delay } => {
                BTreeMap::from([("a", a), ("b", b), ("c", c), ("delay", delay)])
            }
        }
    }

    pub fn kind(&self) -> SystemKind {
        match self {
            SystemSpec::Lorenz { .. } => SystemKind::Lorenz,
            SystemSpec::Rossler { .. } => SystemKind::Rossler,
            SystemSpec::DoubleScroll { .. } => SystemKind::DoubleScroll,
            SystemSpec::MackeyGlass { .. } => SystemKind::MackeyGlass,
        }
    }

    pub fn dim(&self) -> usize {
        self.kind().dim()
    }

    /// Delay of the governing equation; zero for ordinary differential equations.
    pub fn delay(&self) -> T {
        match *self {
            SystemSpec::MackeyGlass { delay, .. } => delay,
            _ => T::zero(),
        }
    }

    pub fn has_delay(&self) -> bool {
        self.delay() > T::zero()
    }

    /// Time derivative of `state`. `delayed` must be given exactly when the system has a delay.
    pub fn flow(&self, state: &[T], delayed: Option<&[T]>) -> Result<Vec<T>> {
        if state.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: state.len() });
        }
        let delayed = match (self.has_delay(), delayed) {
            (true, Some(d)) => {
                if d.len() != self.dim() {
                    return Err(Error::DimensionMismatch { expected: self.dim(), got: d.len() });
                }
                d
            }
            (false, None) => &[][..],
            _ => return Err(Error::DelayedStateMismatch),
        };
        let mut out = vec![T::zero(); self.dim()];
        self.eval(state, delayed, &mut out);
        Ok(out)
    }

    /// Axis-aligned box random initial conditions are drawn from before the transient is discarded.
    pub fn initial_box(&self) -> Vec<(T, T)> {
        let b = |lo: f64, hi: f64| (T::lit(lo), T::lit(hi));
        match self {
            SystemSpec::Lorenz { .. } => vec![b(-15.0, 15.0), b(-20.0, 20.0), b(5.0, 40.0)],
            SystemSpec::Rossler { .. } => vec![b(-9.0, 9.0), b(-9.0, 9.0), b(0.0, 0.5)],
            // a small box around an attractor point; nearby phase space holds unbounded orbits
            SystemSpec::DoubleScroll { .. } => vec![b(0.33, 0.43), b(-0.11, -0.01), b(-0.13, -0.03)],
            SystemSpec::MackeyGlass { .. } => vec![b(0.5, 1.5)],
        }
    }

    pub fn random_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        self.initial_box()
            .into_iter()
            .map(|(lo, hi)| lo + (hi - lo) * T::lit(rng.random::<f64>()))
            .collect()
    }
}

/// Right-hand side of an ordinary or delay differential equation.
pub trait Dynamics<T: Real> {
    fn dim(&self) -> usize;

    /// Delay of the equation, zero when there is none.
    fn delay(&self) -> T {
        T::zero()
    }

    /// Writes the derivative at `state` into `out`. `delayed` is empty for ODEs.
    fn eval(&self, state: &[T], delayed: &[T], out: &mut [T]);
}

impl<T: Real> Dynamics<T> for SystemSpec<T> {
    fn dim(&self) -> usize {
        SystemSpec::dim(self)
    }

    fn delay(&self) -> T {
        SystemSpec::delay(self)
    }

    #[inline]
    fn eval(&self, s: &[T], delayed: &[T], out: &mut [T]) {
        match *self {
            SystemSpec::Lorenz { sigma, rho, beta } => {
                out[0] = sigma * (s[1] - s[0]);
                out[1] = s[0] * (rho - s[2]) - s[1];
                out[2] = s[0] * s[1] - beta * s[2];
            }
            SystemSpec::Rossler { a, b, c } => {
                out[0] = -s[1] - s[2];
                out[1] = s[0] + a * s[1];
                out[2] = b + s[2] * (s[0] - c);
            }
            SystemSpec::DoubleScroll { r1, r2, r4, beta, ir } => {
                let dv = s[0] - s[1];
                let g = T::lit(2.0) * ir * (beta * dv).sinh();
                out[0] = s[0] / r1 - dv / r2 - g;
                out[1] = dv / r2 + g - s[2];
                out[2] = s[1] - r4 * s[2];
            }
            SystemSpec::MackeyGlass { a, b, c, .. } => {
                let xd = delayed[0];
                out[0] = a * xd / (T::one() + xd.powf(c)) - b * s[0];
            }
        }
    }
}

/// Adapts a closure `f(state, out)` into an ordinary differential equation.
pub struct FnFlow<F> {
    dim: usize,
    f: F,
}

impl<F> FnFlow<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnFlow { dim, f }
    }
}

impl<T: Real, F: Fn(&[T], &mut [T])> Dynamics<T> for FnFlow<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, state: &[T], _delayed: &[T], out: &mut [T]) {
        (self.f)(state, out)
    }
}

/// Which point of an RK4 step a stage is evaluated at.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Start,
    Mid,
    End,
}

/// Scratch space for classical fourth-order Runge-Kutta steps.
#[derive(Clone, Debug)]
pub struct Rk4<T> {
    k1: Vec<T>,
    k2: Vec<T>,
    k3: Vec<T>,
    k4: Vec<T>,
    tmp: Vec<T>,
}

impl<T: Real> Rk4<T> {
    pub fn new(dim: usize) -> Self {
        Rk4 {
            k1: vec![T::zero(); dim],
            k2: vec![T::zero(); dim],
            k3: vec![T::zero(); dim],
            k4: vec![T::zero(); dim],
            tmp: vec![T::zero(); dim],
        }
    }

    /// Advances `state` by `dt` in place. `f(stage, x, out)` evaluates the derivative.
    /// Returns `false` if any stage or the result is not finite (state is then unspecified).
    pub fn step_staged<F>(&mut self, mut f: F, state: &mut [T], dt: T) -> bool
    where
        F: FnMut(Stage, &[T], &mut [T]),
    {
        let half = dt * T::lit(0.5);
        let n = state.len();

        f(Stage::Start, state, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = state[i] + half * self.k1[i];
        }
        f(Stage::Mid, &self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = state[i] + half * self.k2[i];
        }
        f(Stage::Mid, &self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = state[i] + dt * self.k3[i];
        }
        f(Stage::End, &self.tmp, &mut self.k4);

        let sixth = dt / T::lit(6.0);
        let two = T::lit(2.0);
        let mut finite = true;
        for i in 0..n {
            let incr = self.k1[i] + two * (self.k2[i] + self.k3[i]) + self.k4[i];
            state[i] += sixth * incr;
            finite &= incr.is_finite() && state[i].is_finite();
        }
        finite
    }

    pub fn step<F: FnMut(&[T], &mut [T])>(&mut self, mut f: F, state: &mut [T], dt: T) -> bool {
        self.step_staged(|_, x, out| f(x, out), state, dt)
    }
}

/// One RK4 step of `f` from `state`.
pub fn rk4_step<T: Real, F: FnMut(&[T], &mut [T])>(f: F, state: &[T], dt: T) -> Result<Vec<T>> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidParameter("RK4 step size must be positive".into()));
    }
    let mut out = state.to_vec();
    if Rk4::new(state.len()).step(f, &mut out, dt) {
        Ok(out)
    } else {
        Err(Error::NonFinite { context: "rk4 step", step: 0 })
    }
}

/// Past states of a delay system sampled at the internal integration step.
///
/// Holds `lag + 1` rows covering `[t - delay, t]`, oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct DdeHistory<T> {
    dim: usize,
    dt: T,
    lag: usize,
    data: Vec<T>,
    head: usize,
}

impl<T: Real> DdeHistory<T> {
    fn lag_steps(delay: T, dt: T) -> Result<usize> {
        if !(dt > T::zero()) || !(delay > T::zero()) {
            return Err(Error::InvalidParameter("delay and step must be positive".into()));
        }
        let ratio = (delay / dt).as_f64();
        let lag = ratio.round();
        if lag < 1.0 || (ratio - lag).abs() > 1e-6 * ratio.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "delay {} is not a whole number of integration steps {}",
                delay.as_f64(),
                dt.as_f64()
            )));
        }
        Ok(lag as usize)
    }

    /// History that has been constant at `state` for the whole delay window.
    pub fn constant(state: &[T], delay: T, dt: T) -> Result<Self> {
        let lag = Self::lag_steps(delay, dt)?;
        let data = state.iter().copied().cycle().take(state.len() * (lag + 1)).collect();
        Ok(DdeHistory { dim: state.len(), dt, lag, data, head: 0 })
    }

    /// History from explicit samples (oldest first), which must span exactly the delay.
    pub fn from_rows(rows: &[Vec<T>], delay: T, dt: T) -> Result<Self> {
        let lag = Self::lag_steps(delay, dt)?;
        if rows.len() != lag + 1 {
            return Err(Error::DimensionMismatch { expected: lag + 1, got: rows.len() });
        }
        let dim = rows[0].len();
        let mut data = Vec::with_capacity(dim * (lag + 1));
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(DdeHistory { dim, dt, lag, data, head: 0 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    /// Time covered by the buffer.
    pub fn span(&self) -> T {
        self.dt * T::from_usize_lossy(self.lag)
    }

    /// Row `i` of the buffer, `0` being the oldest (at `t - delay`).
    pub fn row(&self, i: usize) -> &[T] {
        assert!(i <= self.lag, "history lookup beyond the buffer");
        let slot = (self.head + i) % (self.lag + 1);
        &self.data[slot * self.dim..(slot + 1) * self.dim]
    }

    pub fn current(&self) -> &[T] {
        self.row(self.lag)
    }

    /// Appends the newest state and drops the oldest.
    pub fn push(&mut self, state: &[T]) {
        let slot = self.head;
        self.data[slot * self.dim..(slot + 1) * self.dim].copy_from_slice(state);
        self.head = (self.head + 1) % (self.lag + 1);
    }

    /// The whole buffer, oldest row first.
    pub fn flatten(&self) -> Vec<T> {
        (0..=self.lag).flat_map(|i| self.row(i).iter().copied()).collect()
    }

    fn overwrite(&mut self, flat: &[T]) {
        self.data.copy_from_slice(flat);
        self.head = 0;
    }
}

/// Initial condition for [`integrate_and_sample`].
#[derive(Clone, Debug)]
pub enum InitialCondition<T> {
    /// Uniform draw from the system's initial box (constant history for delay systems).
    Random,
    /// A state; delay systems treat it as a constant history.
    State(Vec<T>),
    History(DdeHistory<T>),
}

#[derive(Clone, Debug)]
enum EngineState<T> {
    Ode(Vec<T>),
    Dde { history: DdeHistory<T>, next: Vec<T>, mid: Vec<T> },
}

/// Steps a [`Dynamics`] forward at a fixed internal step.
pub struct Integrator<'a, T, D: ?Sized> {
    dynamics: &'a D,
    dt: T,
    state: EngineState<T>,
    rk: Rk4<T>,
    steps: usize,
}

impl<T: Real, D: ?Sized> Clone for Integrator<'_, T, D> {
    fn clone(&self) -> Self {
        Integrator {
            dynamics: self.dynamics,
            dt: self.dt,
            state: self.state.clone(),
            rk: self.rk.clone(),
            steps: self.steps,
        }
    }
}

impl<'a, T: Real, D: Dynamics<T> + ?Sized> Integrator<'a, T, D> {
    pub fn new(dynamics: &'a D, initial: InitialCondition<T>, dt: T) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(Error::InvalidParameter("integration step must be positive".into()));
        }
        let dim = dynamics.dim();
        let delay = dynamics.delay();
        let state = match initial {
            InitialCondition::Random => {
                return Err(Error::InvalidParameter("random initial conditions must be drawn first".into()))
            }
            InitialCondition::State(s) => {
                if s.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: s.len() });
                }
                if delay > T::zero() {
                    EngineState::Dde {
                        history: DdeHistory::constant(&s, delay, dt)?,
                        next: vec![T::zero(); dim],
                        mid: vec![T::zero(); dim],
                    }
                } else {
                    EngineState::Ode(s)
                }
            }
            InitialCondition::History(h) => {
                if !(delay > T::zero()) {
                    return Err(Error::DelayedStateMismatch);
                }
                if h.dim() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: h.dim() });
                }
                if h.lag() != DdeHistory::<T>::lag_steps(delay, dt)? || h.dt() != dt {
                    return Err(Error::InvalidParameter("history resolution does not match the integration step".into()));
                }
                EngineState::Dde { history: h, next: vec![T::zero(); dim], mid: vec![T::zero(); dim] }
            }
        };
        Ok(Integrator { dynamics, dt, state, rk: Rk4::new(dim), steps: 0 })
    }

    pub fn current(&self) -> &[T] {
        match &self.state {
            EngineState::Ode(s) => s,
            EngineState::Dde { history, .. } => history.current(),
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    /// Advances `n` internal steps.
    pub fn advance(&mut self, n: usize) -> Result<()> {
        let dyn_ = self.dynamics;
        let dt = self.dt;
        for _ in 0..n {
            let ok = match &mut self.state {
                EngineState::Ode(s) => self.rk.step(|x, out| dyn_.eval(x, &[], out), s, dt),
                EngineState::Dde { history, next, mid } => {
                    let half = T::lit(0.5);
                    for ((m, a), b) in mid.iter_mut().zip(history.row(0)).zip(history.row(1)) {
                        *m = half * (*a + *b);
                    }
                    next.copy_from_slice(history.current());
                    let (start, end) = (history.row(0), history.row(1));
                    let mid_ref: &[T] = mid;
                    let ok = self.rk.step_staged(
                        |stage, x, out| {
                            let d = match stage {
                                Stage::Start => start,
                                Stage::Mid => mid_ref,
                                Stage::End => end,
                            };
                            dyn_.eval(x, d, out)
                        },
                        next,
                        dt,
                    );
                    history.push(next);
                    ok
                }
            };
            self.steps += 1;
            if !ok {
                return Err(Error::NonFinite { context: "integration", step: self.steps });
            }
        }
        Ok(())
    }

    /// Full dynamical state: the current point for ODEs, the whole history for delay systems.
    pub fn state_vector(&self) -> Vec<T> {
        match &self.state {
            EngineState::Ode(s) => s.clone(),
            EngineState::Dde { history, .. } => history.flatten(),
        }
    }

    pub fn set_state_vector(&mut self, v: &[T]) {
        match &mut self.state {
            EngineState::Ode(s) => s.copy_from_slice(v),
            EngineState::Dde { history, .. } => history.overwrite(v),
        }
    }
}

/// Number of internal steps per sample; `tau` must be a whole multiple of `tau_int`.
pub fn steps_per_sample<T: Real>(tau: T, tau_int: T) -> Result<usize> {
    if !(tau > T::zero()) || !(tau_int > T::zero()) {
        return Err(Error::InvalidParameter("time steps must be positive".into()));
    }
    let ratio = (tau / tau_int).as_f64();
    let steps = ratio.round();
    if steps < 1.0 || (ratio - steps).abs() > 1e-6 * ratio.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "sampling step {} is not a multiple of the integration step {}",
            tau.as_f64(),
            tau_int.as_f64()
        )));
    }
    Ok(steps as usize)
}

/// Integrates `spec`, discards `settle_time` of transient and returns `n` samples spaced `tau`.
pub fn integrate_and_sample<T: Real, R: Rng + ?Sized>(
    spec: &SystemSpec<T>,
    initial: InitialCondition<T>,
    tau_int: T,
    tau: T,
    n: usize,
    settle_time: T,
    rng: &mut R,
) -> Result<Trajectory<T>> {
    if n == 0 {
        return Err(Error::InvalidParameter("at least one sample is required".into()));
    }
    if settle_time < T::zero() {
        return Err(Error::InvalidParameter("settle time must be nonnegative".into()));
    }
    let per_sample = steps_per_sample(tau, tau_int)?;
    let initial = match initial {
        InitialCondition::Random => InitialCondition::State(spec.random_initial(rng)),
        other => other,
    };
    let mut integ = Integrator::new(spec, initial, tau_int)?;
    let settle_steps = (settle_time / tau_int).as_f64().round() as usize;
    integ.advance(settle_steps)?;

    let dim = spec.dim();
    let mut data = Vec::with_capacity(n * dim);
    data.extend_from_slice(integ.current());
    for _ in 1..n {
        integ.advance(per_sample)?;
        data.extend_from_slice(integ.current());
    }
    let t0 = tau_int * T::from_usize_lossy(settle_steps);
    Trajectory::new(data, dim, tau, t0)
}

/// Uniformly sampled multivariate time series, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    data: Vec<T>,
    dim: usize,
    dt: T,
    t0: T,
}

impl<T: Real> Trajectory<T> {
    pub fn new(data: Vec<T>, dim: usize, dt: T, t0: T) -> Result<Self> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(Error::InvalidParameter(format!(
                "trajectory needs at least one full row (dim {dim}, {} values)",
                data.len()
            )));
        }
        if !(dt > T::zero()) {
            return Err(Error::InvalidParameter("trajectory step must be positive".into()));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: "trajectory", step: pos / dim });
        }
        Ok(Trajectory { data, dim, dt, t0 })
    }

    pub fn from_rows<V: AsRef<[T]>>(rows: &[V], dt: T, t0: T) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::new(data, dim, dt, t0)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn t0(&self) -> T {
        self.t0
    }

    pub fn time(&self, i: usize) -> T {
        self.t0 + self.dt * T::from_usize_lossy(i)
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, T> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn component(&self, j: usize) -> Vec<T> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Rows `start..end` as a new trajectory with shifted start time.
    pub fn segment(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::InsufficientData { needed: end, available: self.len() });
        }
        Ok(Trajectory {
            data: self.data[start * self.dim..end * self.dim].to_vec(),
            dim: self.dim,
            dt: self.dt,
            t0: self.time(start),
        })
    }

    /// Keeps only the listed components, in the given order.
    pub fn select_components(&self, components: &[usize]) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter("no components selected".into()));
        }
        if let Some(&bad) = components.iter().find(|&&c| c >= self.dim) {
            return Err(Error::DimensionMismatch { expected: self.dim, got: bad + 1 });
        }
        let data = self.rows().flat_map(|r| components.iter().map(move |&c| r[c])).collect();
        Ok(Trajectory { data, dim: components.len(), dt: self.dt, t0: self.t0 })
    }

    /// Writes `t,u0,...,u{d-1}` with 17 significant digits per value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((0..self.dim).map(|j| format!("u{j}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (i, row) in self.rows().enumerate() {
            write!(w, "{:.16e}", self.time(i).as_f64())?;
            for x in row {
                write!(w, ",{:.16e}", x.as_f64())?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Config("empty trajectory CSV".into()))??;
        let dim = header.split(',').count().saturating_sub(1);
        let mut times = Vec::new();
        let mut data = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',').map(|f| {
                f.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad CSV value `{f}`: {e}")))
            });
            times.push(fields.next().transpose()?.unwrap_or(0.0));
            let before = data.len();
            for f in fields {
                data.push(T::lit(f?));
            }
            if data.len() - before != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: data.len() - before });
            }
        }
        let t0 = times.first().copied().unwrap_or(0.0);
        let dt = if times.len() > 1 { times[1] - times[0] } else { 1.0 };
        Self::new(data, dim, T::lit(dt), T::lit(t0))
    }
}

/// Per-component affine normalization fitted on the training segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

/// Mean and population standard deviation of each component over the first `n_train` samples.
pub fn compute_stats<T: Real>(traj: &Trajectory<T>, n_train: usize) -> Result<NormalizationStats<T>> {
    if n_train == 0 || n_train > traj.len() {
        return Err(Error::InsufficientData { needed: n_train.max(1), available: traj.len() });
    }
    let d = traj.dim();
    let n = T::from_usize_lossy(n_train);
    let mut mean = vec![T::zero(); d];
    for row in traj.rows().take(n_train) {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![T::zero(); d];
    for row in traj.rows().take(n_train) {
        for ((v, &m), &x) in var.iter_mut().zip(&mean).zip(row) {
            *v += (x - m) * (x - m);
        }
    }
    let std: Vec<T> = var.into_iter().map(|v| (v / n).sqrt()).collect();
    for (j, (&s, &m)) in std.iter().zip(&mean).enumerate() {
        // A constant column still leaves rounding residue in the two-pass variance.
        let floor = T::lit(64.0) * T::default_epsilon() * m.abs().max(T::one());
        if !(s > floor) {
            return Err(Error::ZeroVariance { component: j });
        }
    }
    Ok(NormalizationStats { mean, std })
}

impl<T: Real> NormalizationStats<T> {
    fn check(&self, dim: usize) -> Result<()> {
        if self.mean.len() != dim || self.std.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: self.mean.len() });
        }
        if let Some(j) = self.std.iter().position(|s| !(*s > T::zero())) {
            return Err(Error::ZeroVariance { component: j });
        }
        Ok(())
    }

    pub fn normalize_row(&self, row: &[T], out: &mut [T]) {
        for j in 0..row.len() {
            out[j] = (row[j] - self.mean[j]) / self.std[j];
        }
    }

    pub fn denormalize_row(&self, row: &[T], out: &mut [T]) {
        for j in 0..row.len() {
            out[j] = row[j] * self.std[j] + self.mean[j];
        }
    }

    /// Restricts the statistics to a subset of components.
    pub fn select(&self, components: &[usize]) -> Self {
        NormalizationStats {
            mean: components.iter().map(|&c| self.mean[c]).collect(),
            std: components.iter().map(|&c| self.std[c]).collect(),
        }
    }
}

fn map_rows<T: Real>(traj: &Trajectory<T>, f: impl Fn(&[T], &mut [T])) -> Result<Trajectory<T>> {
    let mut data = vec![T::zero(); traj.as_slice().len()];
    for (src, dst) in traj.rows().zip(data.chunks_exact_mut(traj.dim())) {
        f(src, dst);
    }
    Trajectory::new(data, traj.dim(), traj.dt(), traj.t0())
}

pub fn normalize<T: Real>(traj: &Trajectory<T>, stats: &NormalizationStats<T>) -> Result<Trajectory<T>> {
    stats.check(traj.dim())?;
    map_rows(traj, |r, o| stats.normalize_row(r, o))
}

pub fn denormalize<T: Real>(traj: &Trajectory<T>, stats: &NormalizationStats<T>) -> Result<Trajectory<T>> {
    stats.check(traj.dim())?;
    map_rows(traj, |r, o| stats.denormalize_row(r, o))
}

fn benettin<T: Real, D: Dynamics<T> + ?Sized>(
    reference: &mut Integrator<'_, T, D>,
    perturbed: &mut Integrator<'_, T, D>,
    intervals: usize,
    steps_per_interval: usize,
    interval: T,
    d0: T,
) -> Result<T> {
    let norm = |a: &[T], b: &[T]| {
        a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + (*x - *y) * (*x - *y)).sqrt()
    };
    let mut sum = T::zero();
    for _ in 0..intervals {
        reference.advance(steps_per_interval)?;
        perturbed.advance(steps_per_interval)?;
        let x = reference.state_vector();
        let y = perturbed.state_vector();
        let dist = norm(&x, &y);
        if !(dist > T::zero()) {
            // Separation fell below resolution: contraction faster than we can measure.
            return Ok(T::min_value().unwrap_or(-T::one() / T::default_epsilon()));
        }
        sum += (dist / d0).ln();
        let scale = d0 / dist;
        let renorm: Vec<T> = x.iter().zip(&y).map(|(a, b)| *a + (*b - *a) * scale).collect();
        perturbed.set_state_vector(&renorm);
    }
    Ok(sum / (interval * T::from_usize_lossy(intervals)))
}

fn benettin_setup<T: Real>(duration: T, renorm_interval: T, dt: T) -> Result<(usize, usize, T)> {
    let per = steps_per_sample(renorm_interval, dt)?;
    let interval = dt * T::from_usize_lossy(per);
    let intervals = (duration / interval).as_f64().floor() as usize;
    if intervals < 100 {
        return Err(Error::InvalidParameter(format!(
            "duration covers {intervals} renormalization intervals; at least 100 are required"
        )));
    }
    Ok((intervals, per, interval))
}

/// Two-trajectory (Benettin) estimate of the largest Lyapunov exponent of `dynamics`
/// starting from `x0`. The sign is not checked.
pub fn benettin_exponent<T: Real, D: Dynamics<T> + ?Sized>(
    dynamics: &D,
    x0: &[T],
    duration: T,
    renorm_interval: T,
    dt: T,
) -> Result<T> {
    let (intervals, per, interval) = benettin_setup(duration, renorm_interval, dt)?;
    let d0 = T::lit(1e-8);
    let mut reference = Integrator::new(dynamics, InitialCondition::State(x0.to_vec()), dt)?;
    let mut perturbed = reference.clone();
    let x = reference.state_vector();
    let offset = d0 / T::from_usize_lossy(x.len()).sqrt();
    perturbed.set_state_vector(&x.iter().map(|v| *v + offset).collect::<Vec<_>>());
    benettin(&mut reference, &mut perturbed, intervals, per, interval, d0)
}

/// Largest Lyapunov exponent of a benchmark system from a random point on its attractor.
/// Errors if the estimate is not positive.
pub fn estimate_max_lyapunov<T: Real, R: Rng + ?Sized>(
    spec: &SystemSpec<T>,
    duration: T,
    renorm_interval: T,
    tau_int: T,
    rng: &mut R,
) -> Result<T> {
    let (intervals, per, interval) = benettin_setup(duration, renorm_interval, tau_int)?;
    let mut reference = Integrator::new(spec, InitialCondition::State(spec.random_initial(rng)), tau_int)?;
    reference.advance((T::lit(20.0) / tau_int).as_f64().round() as usize)?;
    let d0 = T::lit(1e-8);
    let mut perturbed = reference.clone();
    let x = reference.state_vector();
    let offset = d0 / T::from_usize_lossy(x.len()).sqrt();
    perturbed.set_state_vector(&x.iter().map(|v| *v + offset).collect::<Vec<_>>());
    let lambda = benettin(&mut reference, &mut perturbed, intervals, per, interval, d0)?;
    if lambda > T::zero() {
        Ok(lambda)
    } else {
        Err(Error::NonPositiveLyapunov(lambda.as_f64()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lorenz_flow_values() {
        let lorenz = SystemSpec::<f64>::lorenz();
        let v = lorenz.flow(&[1.0, 1.0, 1.0], None).unwrap();
        assert_eq!(v[0], 0.0);
        assert_eq!(v[1], 26.0);
        assert_relative_eq!(v[2], -5.0 / 3.0, epsilon = 1e-15);

        let r = 72f64.sqrt();
        let v = lorenz.flow(&[r, r, 27.0], None).unwrap();
        for x in v {
            assert!(x.abs() < 1e-12);
        }
    }

    #[test]
    fn rossler_at_origin() {
        let v = SystemSpec::<f64>::rossler().flow(&[0.0, 0.0, 0.0], None).unwrap();
        assert_eq!(v, vec![0.0, 0.0, 0.2]);
    }

    #[test]
    fn delayed_state_is_enforced() {
        let mg = SystemSpec::<f64>::mackey_glass();
        assert!(matches!(mg.flow(&[1.0], None), Err(Error::DelayedStateMismatch)));
        assert_eq!(mg.flow(&[1.0], Some(&[1.0])).unwrap()[0], 0.0);
        let lorenz = SystemSpec::<f64>::lorenz();
        assert!(lorenz.flow(&[1.0, 1.0, 1.0], Some(&[1.0, 1.0, 1.0])).is_err());
    }

    #[test]
    fn param_overrides() {
        let over = BTreeMap::from([("rho".to_string(), 14.0)]);
        let spec = SystemSpec::<f64>::with_params(SystemKind::Lorenz, &over).unwrap();
        assert_eq!(spec.params()["rho"], 14.0);
        let bad = BTreeMap::from([("zeta".to_string(), 1.0)]);
        assert!(SystemSpec::<f64>::with_params(SystemKind::Lorenz, &bad).is_err());
        let neg = BTreeMap::from([("delay".to_string(), -1.0)]);
        assert!(SystemSpec::<f64>::with_params(SystemKind::MackeyGlass, &neg).is_err());
    }

    #[test]
    fn rk4_polynomial_and_identity() {
        let x = rk4_step(|s: &[f64], o: &mut [f64]| o[0] = s[0], &[1.0], 0.1).unwrap();
        let h: f64 = 0.1;
        let expected = 1.0 + h + h * h / 2.0 + h.powi(3) / 6.0 + h.powi(4) / 24.0;
        assert_relative_eq!(x[0], expected, epsilon = 1e-15);
        assert_relative_eq!(x[0], 1.105_170_833_333_333, epsilon = 1e-14);

        let s = [3.0, -2.0];
        let y = rk4_step(|_: &[f64], o: &mut [f64]| o.fill(0.0), &s, 0.37).unwrap();
        assert_eq!(y, s.to_vec());
        assert!(rk4_step(|_: &[f64], o: &mut [f64]| o.fill(0.0), &s, 0.0).is_err());
        assert!(rk4_step(|_: &[f64], o: &mut [f64]| o.fill(f64::NAN), &s, 0.1).is_err());
    }

    #[test]
    fn rk4_conserves_oscillator_energy() {
        let mut s = vec![1.0f64, 0.0];
        let mut rk = Rk4::new(2);
        for _ in 0..1000 {
            rk.step(|x, o| {
                o[0] = x[1];
                o[1] = -x[0];
            }, &mut s, 0.001);
        }
        assert!((s[0] * s[0] + s[1] * s[1] - 1.0).abs() < 1e-10);
    }

    /// Error at t = 1 for x' = x integrated with step h.
    fn global_error(h: f64) -> f64 {
        let steps = (1.0 / h).round() as usize;
        let mut x = [1.0f64];
        let mut rk = Rk4::new(1);
        for _ in 0..steps {
            rk.step(|s, o| o[0] = s[0], &mut x, h);
        }
        (x[0] - 1f64.exp()).abs()
    }

    #[test]
    fn rk4_fourth_order() {
        for h in [1e-2, 5e-3] {
            let ratio = global_error(h) / global_error(h / 2.0);
            assert!((14.0..=18.0).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn sampling_grid() {
        assert_eq!(steps_per_sample(0.06, 0.001).unwrap(), 60);
        assert!(steps_per_sample(0.0605, 0.001).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = SystemSpec::<f64>::lorenz();
        let one = integrate_and_sample(&spec, InitialCondition::State(vec![1.0, 1.0, 1.0]), 0.001, 0.06, 1, 0.0, &mut rng)
            .unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.row(0), &[1.0, 1.0, 1.0]);

        // sampling at tau is the same as dense integration read every 60 steps
        let coarse = integrate_and_sample(&spec, InitialCondition::State(vec![1.0, 1.0, 1.0]), 0.001, 0.06, 5, 0.0, &mut rng)
            .unwrap();
        let dense = integrate_and_sample(&spec, InitialCondition::State(vec![1.0, 1.0, 1.0]), 0.001, 0.001, 241, 0.0, &mut rng)
            .unwrap();
        for i in 0..5 {
            assert_eq!(coarse.row(i), dense.row(60 * i));
        }
    }

    #[test]
    fn lorenz_samples_on_attractor() {
        let spec = SystemSpec::<f64>::lorenz();
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = integrate_and_sample(&spec, InitialCondition::Random, 0.001, 0.06, 2000, 20.0, &mut rng).unwrap();
            assert!(t.rows().all(|r| r[2] > 0.0 && r[2] < 50.0));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = SystemSpec::<f64>::double_scroll();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            integrate_and_sample(&spec, InitialCondition::Random, 0.001, 0.1, 200, 5.0, &mut rng).unwrap()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn mackey_glass_fixed_point_history() {
        let spec = SystemSpec::<f64>::mackey_glass();
        let hist = DdeHistory::constant(&[1.0], 2.0, 0.001).unwrap();
        assert!(hist.span() >= 2.0);
        let mut integ = Integrator::new(&spec, InitialCondition::History(hist), 0.001).unwrap();
        for _ in 0..1000 {
            integ.advance(1).unwrap();
            assert!((integ.current()[0] - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn mackey_glass_is_aperiodic_and_bounded() {
        let spec = SystemSpec::<f64>::mackey_glass();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = integrate_and_sample(&spec, InitialCondition::Random, 0.001, 0.05, 4000, 50.0, &mut rng).unwrap();
        let x = t.component(0);
        assert!(x.iter().all(|v| *v > 0.0 && *v < 2.0));
        let stats = compute_stats(&t, 4000).unwrap();
        assert!(stats.std[0] > 0.1);
    }

    #[test]
    fn dde_history_misaligned_delay() {
        assert!(DdeHistory::constant(&[1.0], 2.0005, 0.001).is_err());
        let rows: Vec<Vec<f64>> = (0..=4).map(|i| vec![i as f64]).collect();
        let mut h = DdeHistory::from_rows(&rows, 0.4, 0.1).unwrap();
        assert_eq!(h.row(0), &[0.0]);
        assert_eq!(h.current(), &[4.0]);
        h.push(&[5.0]);
        assert_eq!(h.row(0), &[1.0]);
        assert_eq!(h.current(), &[5.0]);
        assert_eq!(h.flatten(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn stats_and_normalization() {
        let t = Trajectory::new(vec![0.0, 2.0], 1, 1.0, 0.0).unwrap();
        let s = compute_stats(&t, 2).unwrap();
        assert_eq!(s.mean, vec![1.0]);
        assert_eq!(s.std, vec![1.0]);

        let c = Trajectory::new(vec![0.1; 9], 3, 1.0, 0.0).unwrap();
        assert!(matches!(compute_stats(&c, 3), Err(Error::ZeroVariance { .. })));
        assert!(compute_stats(&t, 3).is_err());

        let stats = NormalizationStats { mean: vec![1.0; 3], std: vec![2.0; 3] };
        let one = Trajectory::new(vec![3.0; 3], 3, 1.0, 0.0).unwrap();
        assert_eq!(normalize(&one, &stats).unwrap().row(0), &[1.0, 1.0, 1.0]);
        let bad = NormalizationStats { mean: vec![0.0; 3], std: vec![1.0, 0.0, 1.0] };
        assert!(normalize(&one, &bad).is_err());
    }

    #[test]
    fn self_normalization_identity() {
        let spec = SystemSpec::<f64>::lorenz();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = integrate_and_sample(&spec, InitialCondition::Random, 0.001, 0.06, 3000, 20.0, &mut rng).unwrap();
        let stats = compute_stats(&t, 2000).unwrap();
        let n = normalize(&t, &stats).unwrap();
        let again = compute_stats(&n, 2000).unwrap();
        for j in 0..3 {
            assert!(again.mean[j].abs() < 1e-12);
            assert!((again.std[j] - 1.0).abs() < 1e-12);
        }
        let back = denormalize(&n, &stats).unwrap();
        for (a, b) in back.as_slice().iter().zip(t.as_slice()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let t = Trajectory::new(vec![0.1, 1.0 / 3.0, -2.5e-7, 1e10], 2, 0.06, 1.5).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,u0,u1\n"));
        let back = Trajectory::<f64>::read_csv(&buf[..]).unwrap();
        assert_eq!(back.as_slice(), t.as_slice());
        assert_eq!(back.dim(), 2);
    }

    #[test]
    fn lyapunov_signs_for_linear_flows() {
        let stable = FnFlow::new(1, |x: &[f64], o: &mut [f64]| o[0] = -x[0]);
        let l = benettin_exponent(&stable, &[1.0], 10.0, 0.1, 0.01).unwrap();
        assert!(l <= 0.0);
        assert_relative_eq!(l, -1.0, epsilon = 1e-6);

        let unstable = FnFlow::new(1, |x: &[f64], o: &mut [f64]| o[0] = x[0]);
        let l = benettin_exponent(&unstable, &[1e-3], 10.0, 0.1, 0.01).unwrap();
        assert!(l > 0.0);
        assert_relative_eq!(l, 1.0, epsilon = 1e-6);

        assert!(benettin_exponent(&unstable, &[1e-3], 5.0, 0.1, 0.01).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let v = SystemSpec::<f32>::lorenz().flow(&[1.0, 1.0, 1.0], None).unwrap();
        assert_eq!(v[1], 26.0f32);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = integrate_and_sample(&SystemSpec::<f32>::lorenz(), InitialCondition::Random, 0.001f32, 0.02f32, 100, 5.0, &mut rng)
            .unwrap();
        assert_eq!(t.len(), 100);
    }
}
