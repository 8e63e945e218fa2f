//! Truncation-order selection: Galerkin error measured uniformly over time
//! and over seeded control families with a bounded total mass.
//!
//! A large reference truncation stands in for the full flow; its adequacy
//! is quantified by recomputing the whole error table at a doubled
//! reference and bounding the drift. Uniformity over the control class is
//! sampled: a seeded random family, optional measure members carrying an
//! atom, optional adversarial members (maximal-mass constant, bang-bang,
//! single large atom), and a held-out family drawn from a fresh seed after
//! selection.

use serde::{Deserialize, Serialize};

use crate::control::Control;
use crate::error::{Error, Result};
use crate::propagator::{propagate, RecordSpec, TimeGrid, Trajectory};
use crate::spectral::{SpectralModel, StateVector};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Safety factor keeping generated members strictly inside the mass budget.
const BUDGET_SAFETY: f64 = 0.95;

/// Seeded description of a control family for the harness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub seed: u64,
    /// Number of random density members.
    pub count: usize,
    pub pieces: usize,
    /// Add the extremal members: maximal-mass constant, bang-bang, and a
    /// single large atom.
    #[serde(default)]
    pub include_adversarial: bool,
    /// Add members that carry an atom alongside a reduced density budget.
    #[serde(default)]
    pub include_atoms: bool,
}

/// Scalar parameters of a truncation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessParams {
    /// Target error `ε` in the `‖·‖_{s/2}` norm.
    pub eps: f64,
    /// Mass budget `L`; every family member satisfies `|u|([0,T]) < L`.
    pub mass_budget: f64,
    /// Control horizon `T`.
    pub horizon: f64,
    /// Error norm order `s`.
    pub sobolev_order: f64,
    /// Coupling order `k`; the study requires `s < k`.
    pub coupling_order: f64,
    /// Uniform recording points per trajectory (breakpoints and atom times
    /// are always added).
    pub grid_points: usize,
}

impl HarnessParams {
    fn validate(&self) -> Result<()> {
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::invalid("eps must be a positive real"));
        }
        if !(self.mass_budget.is_finite() && self.mass_budget >= 0.0) {
            return Err(Error::invalid("mass budget must be non-negative"));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::invalid("horizon must be a positive real"));
        }
        if !(self.sobolev_order.is_finite() && self.sobolev_order >= 0.0) {
            return Err(Error::invalid("sobolev order must be non-negative"));
        }
        if !self.coupling_order.is_finite() || self.sobolev_order >= self.coupling_order {
            return Err(Error::invalid(format!(
                "the error order s = {} must stay below the coupling order k = {}",
                self.sobolev_order, self.coupling_order
            )));
        }
        if self.grid_points < 2 {
            return Err(Error::invalid("grid needs at least 2 points"));
        }
        Ok(())
    }
}

/// One cell of the error table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub dim: usize,
    pub control_id: usize,
    pub state_id: usize,
    pub sup_error: f64,
}

/// Worst error over the family and states at one truncation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimSummary {
    pub dim: usize,
    pub worst_error: f64,
}

/// Full outcome of a truncation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub reference_dim: usize,
    pub tested_dims: Vec<usize>,
    pub state_count: usize,
    pub control_count: usize,
    pub rows: Vec<ErrorRow>,
    pub worst_errors: Vec<DimSummary>,
    /// Smallest tested dimension whose worst error is below `eps`, when one
    /// exists.
    pub selected_n: Option<usize>,
    pub params: HarnessParams,
    pub family: FamilySpec,
}

impl ConvergenceReport {
    /// Flat table `dim,control_id,state_id,sup_error`, one row per cell,
    /// shortest-round-trip floats.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dim,control_id,state_id,sup_error\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.dim, r.control_id, r.state_id, r.sup_error
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn worst_at(&self, dim: usize) -> Option<f64> {
        self.worst_errors
            .iter()
            .find(|d| d.dim == dim)
            .map(|d| d.worst_error)
    }
}

/// Outcome of held-out validation at the selected truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldoutSummary {
    pub selected_n: usize,
    pub worst_error: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Generates the harness family for the given budget: random density
/// members, then atom-carrying members when requested, then the
/// adversarial trio. Every member keeps `total_mass < mass_budget`.
pub fn harness_family(spec: &FamilySpec, mass_budget: f64, horizon: f64) -> Result<Vec<Control>> {
    if spec.count == 0 || spec.pieces == 0 {
        return Err(Error::invalid("family needs count >= 1 and pieces >= 1"));
    }
    if !(mass_budget.is_finite() && mass_budget >= 0.0) {
        return Err(Error::invalid("mass budget must be non-negative"));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::invalid("horizon must be a positive real"));
    }
    let amp = BUDGET_SAFETY * mass_budget / horizon;
    let mut family = Control::random_family(spec.seed, amp, horizon, spec.pieces, spec.count)?;

    if spec.include_atoms && mass_budget > 0.0 {
        let atom_members = spec.count.div_ceil(3);
        let atom_bases = Control::random_family(
            spec.seed ^ 0x9e37_79b9_7f4a_7c15,
            0.5 * amp,
            horizon,
            spec.pieces,
            atom_members,
        )?;
        for (i, base) in atom_bases.into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream((1 << 20) + i as u64);
            let tau = horizon * rng.random_range(0.25..0.95);
            let magnitude = 0.45 * mass_budget * rng.random_range(0.2..1.0);
            let mass = if rng.random_range(0.0..1.0) < 0.5 {
                magnitude
            } else {
                -magnitude
            };
            family.push(Control::with_atoms(
                base.breakpoints().to_vec(),
                base.values().to_vec(),
                vec![(tau, mass)],
            )?);
        }
    }

    if spec.include_adversarial && mass_budget > 0.0 {
        family.push(Control::constant(amp, horizon)?);

        let pieces = spec.pieces.max(2);
        let breakpoints: Vec<f64> = (0..=pieces)
            .map(|i| horizon * i as f64 / pieces as f64)
            .collect();
        let values: Vec<f64> = (0..pieces)
            .map(|i| if i % 2 == 0 { amp } else { -amp })
            .collect();
        family.push(Control::piecewise_constant(breakpoints, values)?);

        family.push(Control::atoms_only(
            horizon,
            vec![(0.5 * horizon, BUDGET_SAFETY * mass_budget)],
        )?);
    }

    for c in &family {
        if c.total_mass() >= mass_budget && mass_budget > 0.0 {
            return Err(Error::invalid(format!(
                "family member mass {} exceeds the budget {mass_budget}",
                c.total_mass()
            )));
        }
    }
    Ok(family)
}

fn record_spec(params: &HarnessParams) -> RecordSpec {
    RecordSpec {
        grid: TimeGrid::Uniform(params.grid_points),
        sobolev_orders: Vec::new(),
    }
}

/// Sup over the recorded grid of the `‖·‖_{s/2}` gap between the reference
/// flow and the compressed flow started from the projected state.
pub fn galerkin_error(
    reference: &SpectralModel,
    n: usize,
    c: &Control,
    state: &StateVector,
    s: f64,
    grid: &TimeGrid,
) -> Result<f64> {
    if n >= reference.dim() {
        return Err(Error::invalid(format!(
            "truncation order {n} leaves no headroom below the reference dimension {}",
            reference.dim()
        )));
    }
    let record = RecordSpec {
        grid: grid.clone(),
        sobolev_orders: Vec::new(),
    };
    let reference_traj = propagate(reference, c, 0.0, c.horizon(), state, &record)?;
    sup_error_against(reference, n, c, state, s, &record, &reference_traj)
}

/// The same sup as [`galerkin_error`], reusing an already computed
/// reference trajectory.
fn sup_error_against(
    reference: &SpectralModel,
    n: usize,
    c: &Control,
    state: &StateVector,
    s: f64,
    record: &RecordSpec,
    reference_traj: &Trajectory,
) -> Result<f64> {
    let compressed = reference.compress(n)?;
    let start = state.project(n)?;
    let truncated_traj = propagate(&compressed, c, 0.0, c.horizon(), &start, record)?;
    debug_assert_eq!(reference_traj.times(), truncated_traj.times());

    let mut worst = 0.0f64;
    for i in 0..reference_traj.len() {
        let lifted = truncated_traj.state_at(i).lift(reference.dim())?;
        let diff =
            StateVector::new(reference_traj.state_at(i).coefficients() - lifted.coefficients());
        let err = match diff {
            Ok(d) => reference.sobolev_norm(&d, s)?,
            // An exactly zero difference is not a valid state vector but is
            // a perfectly valid error of zero.
            Err(_) => 0.0,
        };
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Evaluates the full `dims × family × states` error table and selects the
/// smallest truncation meeting `eps`. Deterministic given the family seed.
pub fn find_truncation(
    reference: &SpectralModel,
    params: &HarnessParams,
    family_spec: &FamilySpec,
    states: &[StateVector],
    dims: &[usize],
) -> Result<ConvergenceReport> {
    params.validate()?;
    if states.is_empty() {
        return Err(Error::invalid("at least one probe state is required"));
    }
    if dims.is_empty() {
        return Err(Error::invalid("at least one truncation order is required"));
    }
    if dims.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(
            "truncation orders must be strictly increasing",
        ));
    }
    if *dims.last().unwrap() >= reference.dim() {
        return Err(Error::invalid(format!(
            "largest tested order {} must stay below the reference dimension {}",
            dims.last().unwrap(),
            reference.dim()
        )));
    }
    for st in states {
        if st.dim() != reference.dim() {
            return Err(Error::invalid(
                "probe states must live at the reference dimension",
            ));
        }
        // Finite scale norm at the coupling order.
        reference.sobolev_norm(st, params.coupling_order)?;
    }

    let family = harness_family(family_spec, params.mass_budget, params.horizon)?;
    for c in &family {
        if params.mass_budget > 0.0 && c.total_mass() >= params.mass_budget {
            return Err(Error::invalid("family member violates the mass budget"));
        }
    }

    let record = record_spec(params);

    // Reference trajectories are dimension-independent; compute them once.
    let mut reference_trajs = Vec::with_capacity(family.len() * states.len());
    for c in &family {
        for st in states {
            reference_trajs.push(propagate(reference, c, 0.0, params.horizon, st, &record)?);
        }
    }

    let mut rows = Vec::with_capacity(dims.len() * family.len() * states.len());
    let mut worst_errors = Vec::with_capacity(dims.len());
    for &dim in dims {
        let mut worst = 0.0f64;
        for (ci, c) in family.iter().enumerate() {
            for (si, st) in states.iter().enumerate() {
                let reference_traj = &reference_trajs[ci * states.len() + si];
                let err = sup_error_against(
                    reference,
                    dim,
                    c,
                    st,
                    params.sobolev_order,
                    &record,
                    reference_traj,
                )?;
                worst = worst.max(err);
                rows.push(ErrorRow {
                    dim,
                    control_id: ci,
                    state_id: si,
                    sup_error: err,
                });
            }
        }
        worst_errors.push(DimSummary {
            dim,
            worst_error: worst,
        });
    }

    let selected_n = worst_errors
        .iter()
        .find(|d| d.worst_error < params.eps)
        .map(|d| d.dim);

    Ok(ConvergenceReport {
        reference_dim: reference.dim(),
        tested_dims: dims.to_vec(),
        state_count: states.len(),
        control_count: family.len(),
        rows,
        worst_errors,
        selected_n,
        params: params.clone(),
        family: family_spec.clone(),
    })
}

/// Draws a fresh family under the report's budget and re-measures the
/// worst error at the selected truncation. Passes when the worst error
/// stays below `1.5 · eps` (slack for sampling a quantifier over an
/// infinite class).
pub fn heldout_validation(
    reference: &SpectralModel,
    report: &ConvergenceReport,
    states: &[StateVector],
    fresh_seed: u64,
    count: usize,
) -> Result<HeldoutSummary> {
    let selected_n = report
        .selected_n
        .ok_or_else(|| Error::invalid("held-out validation needs a selected truncation order"))?;
    if reference.dim() != report.reference_dim {
        return Err(Error::invalid("reference model does not match the report"));
    }
    if states.len() != report.state_count {
        return Err(Error::invalid("probe states do not match the report"));
    }

    let fresh_spec = FamilySpec {
        seed: fresh_seed,
        count,
        ..report.family.clone()
    };
    let family = harness_family(
        &fresh_spec,
        report.params.mass_budget,
        report.params.horizon,
    )?;
    for c in &family {
        if report.params.mass_budget > 0.0 && c.total_mass() >= report.params.mass_budget {
            return Err(Error::invalid("held-out member violates the mass budget"));
        }
    }

    let record = record_spec(&report.params);
    let mut worst = 0.0f64;
    for c in &family {
        for st in states {
            let reference_traj = propagate(reference, c, 0.0, report.params.horizon, st, &record)?;
            let err = sup_error_against(
                reference,
                selected_n,
                c,
                st,
                report.params.sobolev_order,
                &record,
                &reference_traj,
            )?;
            worst = worst.max(err);
        }
    }

    let threshold = 1.5 * report.params.eps;
    Ok(HeldoutSummary {
        selected_n,
        worst_error: worst,
        threshold,
        passed: worst < threshold,
    })
}

/// Recomputes the report's error table against a larger reference and
/// returns the largest entrywise drift. A drift below `0.1 · eps`
/// certifies the original reference as converged; callers reject the run
/// otherwise.
pub fn reference_drift(
    doubled: &SpectralModel,
    report: &ConvergenceReport,
    states: &[StateVector],
) -> Result<f64> {
    if doubled.dim() <= report.reference_dim {
        return Err(Error::invalid(
            "the self-check reference must be strictly larger than the report's",
        ));
    }
    if states.len() != report.state_count {
        return Err(Error::invalid("probe states do not match the report"));
    }
    let lifted: Vec<StateVector> = states
        .iter()
        .map(|st| st.lift(doubled.dim()))
        .collect::<Result<_>>()?;
    let again = find_truncation(
        doubled,
        &report.params,
        &report.family,
        &lifted,
        &report.tested_dims,
    )?;
    if again.rows.len() != report.rows.len() {
        return Err(Error::accuracy("self-check table shape mismatch"));
    }
    Ok(report
        .rows
        .iter()
        .zip(&again.rows)
        .map(|(a, b)| (a.sup_error - b.sup_error).abs())
        .fold(0.0, f64::max))
}
