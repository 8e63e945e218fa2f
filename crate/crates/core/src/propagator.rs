//! Two-parameter propagator of the Galerkin system by ordered products of
//! matrix exponentials.
//!
//! On the piecewise-constant-plus-atoms control class the flow is exact up
//! to matrix-exponential accuracy: each density piece contributes
//! `exp(dt (A + u B))` and each atom of mass `α` contributes `exp(α B)`,
//! applied after the density evolution up to the atom time. All generators
//! are skew-Hermitian, so every factor is unitary and the propagator
//! preserves the Euclidean norm.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::control::Control;
use crate::error::{Error, Result};
use crate::expm::expm_scaled;
use crate::linalg::identity;
use crate::spectral::{SpectralModel, StateVector};

/// Sampling grid for trajectory recording, always augmented with the
/// control breakpoints and atom times inside the propagation window.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeGrid {
    /// Record only at window endpoints, breakpoints, and atom times.
    EventsOnly,
    /// `points` evenly spaced sample times across the window (≥ 2).
    Uniform(usize),
    /// Explicit sample times; entries outside the window are ignored.
    Explicit(Vec<f64>),
}

/// What to record along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSpec {
    pub grid: TimeGrid,
    /// Sobolev orders `k` for which `‖ψ(t)‖_{k/2}` is logged.
    pub sobolev_orders: Vec<f64>,
}

impl RecordSpec {
    pub fn events_only() -> Self {
        RecordSpec {
            grid: TimeGrid::EventsOnly,
            sobolev_orders: Vec::new(),
        }
    }

    pub fn uniform(points: usize) -> Self {
        RecordSpec {
            grid: TimeGrid::Uniform(points),
            sobolev_orders: Vec::new(),
        }
    }

    pub fn with_sobolev(mut self, orders: &[f64]) -> Self {
        self.sobolev_orders = orders.to_vec();
        self
    }
}

/// A propagated trajectory: states on the recorded grid plus norm logs.
#[derive(Debug, Clone)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<StateVector>,
    norms: Vec<f64>,
    sobolev_orders: Vec<f64>,
    sobolev_norms: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn state_at(&self, idx: usize) -> &StateVector {
        &self.states[idx]
    }

    pub fn final_state(&self) -> &StateVector {
        self.states
            .last()
            .expect("a trajectory records at least one time")
    }

    /// Plain Euclidean norms, one per recorded time.
    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn sobolev_orders(&self) -> &[f64] {
        &self.sobolev_orders
    }

    /// Sobolev norm log for recorded time `idx`, aligned with
    /// [`Trajectory::sobolev_orders`].
    pub fn sobolev_norms(&self, idx: usize) -> &[f64] {
        &self.sobolev_norms[idx]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV export: `time,re_1,im_1,…,re_n,im_n,norm[,sobolev_k…]`, one row
    /// per recorded time, shortest-round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let dim = self.states.first().map_or(0, |s| s.dim());
        let mut out = String::from("time");
        for j in 1..=dim {
            out.push_str(&format!(",re_{j},im_{j}"));
        }
        out.push_str(",norm");
        for k in &self.sobolev_orders {
            out.push_str(&format!(",sobolev_{k}"));
        }
        out.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            out.push_str(&format!("{t}"));
            for z in self.states[i].coefficients().iter() {
                out.push_str(&format!(",{},{}", z.re, z.im));
            }
            out.push_str(&format!(",{}", self.norms[i]));
            for v in &self.sobolev_norms[i] {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// `exp(dt A)` for the diagonal drift: entrywise phases, exact.
fn phase_factor(model: &SpectralModel, dt: f64) -> DMatrix<C64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_vec(
        model
            .eigenvalues()
            .iter()
            .map(|&l| C64::new(0.0, l * dt).exp())
            .collect::<Vec<_>>(),
    ))
}

/// Exact flow of one constant-control piece: `exp(dt (A + u B)) ψ`.
///
/// The drift is diagonal, so the zero-control factor is computed as
/// entrywise phases; everything else goes through the Padé exponential.
pub fn step(
    model: &SpectralModel,
    u_value: f64,
    dt: f64,
    state: &StateVector,
) -> Result<StateVector> {
    if !(u_value.is_finite() && dt.is_finite() && dt >= 0.0) {
        return Err(Error::invalid("step needs finite u and dt >= 0"));
    }
    if state.dim() != model.dim() {
        return Err(Error::invalid("state dimension does not match the model"));
    }
    if dt == 0.0 {
        return Ok(state.clone());
    }
    let factor = if u_value == 0.0 {
        phase_factor(model, dt)
    } else {
        expm_scaled(&model.generator(u_value), dt)
    };
    StateVector::new(&factor * state.coefficients())
}

/// Instantaneous kick of a measure atom: `exp(mass B) ψ`.
pub fn jump(model: &SpectralModel, mass: f64, state: &StateVector) -> Result<StateVector> {
    if !mass.is_finite() {
        return Err(Error::invalid("atom mass must be finite"));
    }
    if state.dim() != model.dim() {
        return Err(Error::invalid("state dimension does not match the model"));
    }
    if mass == 0.0 {
        return Ok(state.clone());
    }
    let factor = expm_scaled(model.b_matrix(), mass);
    StateVector::new(&factor * state.coefficients())
}

/// One recorded sub-interval: evolve with density value `u` for `dt`
/// ending at `t_end`, then optionally apply an atom kick.
struct Segment {
    t_end: f64,
    dt: f64,
    u: f64,
    atom_mass: Option<f64>,
}

/// Splits `[s, t]` at breakpoints, atom times, and requested grid times.
fn build_segments(c: &Control, s: f64, t: f64, grid: &TimeGrid) -> Result<Vec<Segment>> {
    let mut times: Vec<f64> = vec![s, t];
    times.extend(c.breakpoints().iter().copied().filter(|&b| b > s && b < t));
    times.extend(
        c.atoms()
            .iter()
            .map(|&(tau, _)| tau)
            .filter(|&tau| tau > s && tau <= t),
    );
    match grid {
        TimeGrid::EventsOnly => {}
        TimeGrid::Uniform(points) => {
            if *points < 2 {
                return Err(Error::invalid("a uniform grid needs at least 2 points"));
            }
            let n = points - 1;
            times.extend((1..n).map(|i| s + (t - s) * i as f64 / n as f64));
        }
        TimeGrid::Explicit(list) => {
            times.extend(list.iter().copied().filter(|&x| x > s && x < t));
        }
    }
    times.sort_by(f64::total_cmp);
    times.dedup();

    let mut segments = Vec::with_capacity(times.len().saturating_sub(1));
    for w in times.windows(2) {
        let atom_mass = c
            .atoms()
            .iter()
            .find(|&&(tau, _)| tau == w[1])
            .map(|&(_, mass)| mass);
        segments.push(Segment {
            t_end: w[1],
            dt: w[1] - w[0],
            u: c.value_at(w[0]),
            atom_mass,
        });
    }
    Ok(segments)
}

fn check_window(c: &Control, s: f64, t: f64) -> Result<()> {
    if !(s.is_finite() && t.is_finite()) {
        return Err(Error::invalid("propagation window must be finite"));
    }
    if s > t {
        return Err(Error::invalid(format!("window start {s} exceeds end {t}")));
    }
    if s < 0.0 || t > c.horizon() {
        return Err(Error::invalid(format!(
            "window [{s}, {t}] exits the control horizon [0, {}]",
            c.horizon()
        )));
    }
    Ok(())
}

/// Caches exponential factors keyed by the bits of `(u, dt)`; uniform
/// recording grids re-use one factor per density piece.
struct FactorCache<'m> {
    model: &'m SpectralModel,
    steps: HashMap<(u64, u64), DMatrix<C64>>,
    jumps: HashMap<u64, DMatrix<C64>>,
}

impl<'m> FactorCache<'m> {
    fn new(model: &'m SpectralModel) -> Self {
        FactorCache {
            model,
            steps: HashMap::new(),
            jumps: HashMap::new(),
        }
    }

    fn step_factor(&mut self, u: f64, dt: f64) -> &DMatrix<C64> {
        let model = self.model;
        self.steps
            .entry((u.to_bits(), dt.to_bits()))
            .or_insert_with(|| {
                if u == 0.0 {
                    phase_factor(model, dt)
                } else {
                    expm_scaled(&model.generator(u), dt)
                }
            })
    }

    fn jump_factor(&mut self, mass: f64) -> &DMatrix<C64> {
        self.jumps
            .entry(mass.to_bits())
            .or_insert_with(|| expm_scaled(self.model.b_matrix(), mass))
    }
}

/// Propagates `state` from `s` to `t` under `c`, recording states on the
/// union of the requested grid, the control breakpoints, and the atom
/// times. The state recorded at an atom time is the post-kick one.
pub fn propagate(
    model: &SpectralModel,
    c: &Control,
    s: f64,
    t: f64,
    state: &StateVector,
    record: &RecordSpec,
) -> Result<Trajectory> {
    check_window(c, s, t)?;
    if state.dim() != model.dim() {
        return Err(Error::invalid("state dimension does not match the model"));
    }
    for &k in &record.sobolev_orders {
        if !(k.is_finite() && k >= 0.0) {
            return Err(Error::invalid("Sobolev orders must be non-negative reals"));
        }
    }

    let segments = build_segments(c, s, t, &record.grid)?;
    let mut cache = FactorCache::new(model);

    let mut times = Vec::with_capacity(segments.len() + 1);
    let mut states = Vec::with_capacity(segments.len() + 1);
    times.push(s);
    states.push(state.clone());

    let mut current = state.coefficients().clone();
    for seg in &segments {
        if seg.dt > 0.0 {
            current = cache.step_factor(seg.u, seg.dt) * current;
        }
        if let Some(mass) = seg.atom_mass {
            if mass != 0.0 {
                current = cache.jump_factor(mass) * current;
            }
        }
        times.push(seg.t_end);
        states.push(StateVector::new(current.clone())?);
    }

    let norms: Vec<f64> = states.iter().map(|st| st.norm()).collect();
    let sobolev_norms: Vec<Vec<f64>> = states
        .iter()
        .map(|st| {
            record
                .sobolev_orders
                .iter()
                .map(|&k| model.sobolev_norm(st, k))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Trajectory {
        times,
        states,
        norms,
        sobolev_orders: record.sobolev_orders.clone(),
        sobolev_norms,
    })
}

/// The full propagator matrix `X(t, s)` as an ordered product of step and
/// jump factors. `X(t, t)` is the identity exactly.
pub fn propagator_matrix(
    model: &SpectralModel,
    c: &Control,
    s: f64,
    t: f64,
) -> Result<DMatrix<C64>> {
    check_window(c, s, t)?;
    let segments = build_segments(c, s, t, &TimeGrid::EventsOnly)?;
    let mut cache = FactorCache::new(model);
    let mut x = identity(model.dim());
    for seg in &segments {
        if seg.dt > 0.0 {
            x = cache.step_factor(seg.u, seg.dt) * x;
        }
        if let Some(mass) = seg.atom_mass {
            if mass != 0.0 {
                x = cache.jump_factor(mass) * x;
            }
        }
    }
    Ok(x)
}

/// Classical fourth-order Runge-Kutta on `dψ/dt = (A + u(t)B) ψ`, for
/// desk-scale validation of the exponential products. Restricted to
/// atom-free controls and models of dimension at most 16; `h` must divide
/// every density piece.
pub fn ode_oracle(
    model: &SpectralModel,
    c: &Control,
    state: &StateVector,
    h: f64,
) -> Result<StateVector> {
    if model.dim() > 16 {
        return Err(Error::invalid("the ODE oracle is limited to dimension 16"));
    }
    if c.has_atoms() {
        return Err(Error::invalid(
            "the ODE oracle handles density controls only",
        ));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid("oracle step must be positive"));
    }
    if state.dim() != model.dim() {
        return Err(Error::invalid("state dimension does not match the model"));
    }

    let mut y = state.coefficients().clone();
    for (i, &u) in c.values().iter().enumerate() {
        let len = c.breakpoints()[i + 1] - c.breakpoints()[i];
        let steps_f = len / h;
        let steps = steps_f.round();
        if steps < 1.0 || (steps_f - steps).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::invalid(format!(
                "step {h} does not divide the density piece of length {len}"
            )));
        }
        let steps = steps as usize;
        let dt = len / steps as f64;
        let gen = model.generator(u);
        let half = C64::new(0.5 * dt, 0.0);
        let sixth = C64::new(dt / 6.0, 0.0);
        let two = C64::new(2.0, 0.0);
        for _ in 0..steps {
            let k1 = &gen * &y;
            let k2 = &gen * (&y + &k1 * half);
            let k3 = &gen * (&y + &k2 * half);
            let k4 = &gen * (&y + &k3 * C64::new(dt, 0.0));
            y += (k1 + k2 * two + k3 * two + k4) * sixth;
        }
    }
    StateVector::new(y)
}
