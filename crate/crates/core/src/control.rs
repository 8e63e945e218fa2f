//! Control signals: piecewise-constant densities plus finitely many atoms.
//!
//! A [`Control`] represents the signed measure `u(t) dt + Σ_j α_j δ_{τ_j}`
//! on `[0, T]`. The density is càdlàg: piece `i` holds its value on
//! `[t_{i-1}, t_i)`, and an atom acts at its exact time after the density
//! evolution up to that time. Atoms at `t = 0` are disallowed; an initial
//! kick belongs in the initial state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A piecewise-constant density on `[0, T]` with optional atoms in `(0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ControlDoc", into = "ControlDoc")]
pub struct Control {
    horizon: f64,
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    atoms: Vec<(f64, f64)>,
}

impl Control {
    /// Density-only control with the given breakpoints (`0 = t_0 < … < t_m`)
    /// and per-piece values.
    pub fn piecewise_constant(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::with_atoms(breakpoints, values, Vec::new())
    }

    /// Full constructor: density plus atoms `(time, mass)` at strictly
    /// increasing times in `(0, T]`.
    pub fn with_atoms(
        breakpoints: Vec<f64>,
        values: Vec<f64>,
        atoms: Vec<(f64, f64)>,
    ) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::invalid("a control needs at least two breakpoints"));
        }
        if !breakpoints.iter().all(|t| t.is_finite()) || !values.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("control data must be finite"));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::invalid("the first breakpoint must be 0"));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("breakpoints must be strictly increasing"));
        }
        if values.len() != breakpoints.len() - 1 {
            return Err(Error::invalid(format!(
                "{} breakpoints require {} piece values, got {}",
                breakpoints.len(),
                breakpoints.len() - 1,
                values.len()
            )));
        }
        let horizon = *breakpoints.last().unwrap();
        for &(tau, mass) in &atoms {
            if !(tau.is_finite() && mass.is_finite()) {
                return Err(Error::invalid("atom data must be finite"));
            }
            if tau <= 0.0 || tau > horizon {
                return Err(Error::invalid(format!(
                    "atom time {tau} must lie in (0, {horizon}]"
                )));
            }
        }
        if atoms.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::invalid("atom times must be strictly increasing"));
        }
        Ok(Control {
            horizon,
            breakpoints,
            values,
            atoms,
        })
    }

    /// Constant density `value` on `[0, horizon]`.
    pub fn constant(value: f64, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid("horizon must be a positive real"));
        }
        Self::piecewise_constant(vec![0.0, horizon], vec![value])
    }

    /// The zero control on `[0, horizon]`.
    pub fn zero(horizon: f64) -> Result<Self> {
        Self::constant(0.0, horizon)
    }

    /// Zero density with the given atoms.
    pub fn atoms_only(horizon: f64, atoms: Vec<(f64, f64)>) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid("horizon must be a positive real"));
        }
        Self::with_atoms(vec![0.0, horizon], vec![0.0], atoms)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn has_atoms(&self) -> bool {
        !self.atoms.is_empty()
    }

    /// Largest density magnitude.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Density value at `t` under the càdlàg convention; the final piece
    /// also covers `t = T`.
    pub fn value_at(&self, t: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        self.values[idx.clamp(1, self.values.len()) - 1]
    }

    /// Total variation `Σ |u_i - u_{i-1}|` of the density.
    ///
    /// Rejects controls with atoms: the atomic part is reported by
    /// [`Control::total_mass`], and a caller holding a measure control must
    /// split it first.
    pub fn total_variation(&self) -> Result<f64> {
        if self.has_atoms() {
            return Err(Error::invalid(
                "total variation is defined for the density part only; split the atoms off first",
            ));
        }
        Ok(self.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum())
    }

    /// `∫_0^t u + Σ_{τ_j ≤ t} α_j`.
    pub fn signed_integral(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(Error::invalid(format!(
                "time {t} outside the horizon [0, {}]",
                self.horizon
            )));
        }
        let mut acc = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            let a = self.breakpoints[i];
            let b = self.breakpoints[i + 1].min(t);
            if b <= a {
                break;
            }
            acc += v * (b - a);
        }
        acc += self
            .atoms
            .iter()
            .take_while(|&&(tau, _)| tau <= t)
            .map(|&(_, mass)| mass)
            .sum::<f64>();
        Ok(acc)
    }

    /// Total-variation mass of the measure: `∫_0^T |u| + Σ |α_j|`.
    pub fn total_mass(&self) -> f64 {
        let density: f64 = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| v.abs() * (self.breakpoints[i + 1] - self.breakpoints[i]))
            .sum();
        density + self.atoms.iter().map(|&(_, m)| m.abs()).sum::<f64>()
    }

    /// Mass accumulated on `[0, t]`: `∫_0^t |u| + Σ_{τ_j ≤ t} |α_j|`.
    pub fn mass_up_to(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(Error::invalid(format!(
                "time {t} outside the horizon [0, {}]",
                self.horizon
            )));
        }
        let mut acc = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            let a = self.breakpoints[i];
            let b = self.breakpoints[i + 1].min(t);
            if b <= a {
                break;
            }
            acc += v.abs() * (b - a);
        }
        acc += self
            .atoms
            .iter()
            .take_while(|&&(tau, _)| tau <= t)
            .map(|&(_, mass)| mass.abs())
            .sum::<f64>();
        Ok(acc)
    }

    /// Piecewise-constant sampling of an arbitrary function: value
    /// `u(t_{i-1})` on `[t_{i-1}, t_i)`.
    ///
    /// For a function of bounded variation the sampled total variation
    /// never exceeds the analytic one and grows toward it under
    /// refinement.
    pub fn sample_bv(u: impl Fn(f64) -> f64, partition: &[f64]) -> Result<Self> {
        if partition.len() < 2 {
            return Err(Error::invalid("partition needs at least two points"));
        }
        if partition.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("partition must be strictly increasing"));
        }
        if partition[0] != 0.0 {
            return Err(Error::invalid("partition must start at 0"));
        }
        let values: Vec<f64> = partition[..partition.len() - 1]
            .iter()
            .map(|&t| u(t))
            .collect();
        Self::piecewise_constant(partition.to_vec(), values)
    }

    /// Tall-narrow pulse of height `mass / width` on `[τ - width, τ)`,
    /// zero elsewhere on `[0, horizon]`. Approximates the atom `(τ, mass)`
    /// with the same total mass for every width.
    pub fn mollify_atom(atom: (f64, f64), width: f64, horizon: f64) -> Result<Self> {
        let (tau, mass) = atom;
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::invalid("pulse width must be positive"));
        }
        if tau - width < 0.0 || tau > horizon {
            return Err(Error::invalid(format!(
                "pulse [{}, {tau}] exits the horizon [0, {horizon}]",
                tau - width
            )));
        }
        let start = tau - width;
        let mut breakpoints = vec![0.0];
        let mut values = Vec::new();
        if start > 0.0 {
            breakpoints.push(start);
            values.push(0.0);
        }
        breakpoints.push(tau);
        values.push(mass / width);
        if tau < horizon {
            breakpoints.push(horizon);
            values.push(0.0);
        }
        Self::piecewise_constant(breakpoints, values)
    }

    /// Deterministic-in-seed family of piecewise-constant controls on
    /// `[0, horizon]`, each with total variation at most `tv_budget` and
    /// total mass at most `tv_budget * horizon`.
    ///
    /// Each member accumulates `pieces` increments from zero; if their
    /// absolute sum exceeds the budget they are rescaled onto it. Member
    /// `i` draws from stream `i` of a counter-split generator, so the
    /// family is stable under reordering or parallel evaluation.
    pub fn random_family(
        seed: u64,
        tv_budget: f64,
        horizon: f64,
        pieces: usize,
        count: usize,
    ) -> Result<Vec<Control>> {
        if pieces == 0 || count == 0 {
            return Err(Error::invalid("pieces and count must be at least 1"));
        }
        if !(tv_budget.is_finite() && tv_budget >= 0.0) {
            return Err(Error::invalid("variation budget must be non-negative"));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid("horizon must be a positive real"));
        }
        let mut family = Vec::with_capacity(count);
        for member in 0..count {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(member as u64);
            let scale = 2.0 * tv_budget / pieces as f64;
            let mut increments: Vec<f64> = (0..pieces)
                .map(|_| {
                    let x: f64 = rng.random_range(-1.0..1.0);
                    scale * x
                })
                .collect();
            let total: f64 = increments.iter().map(|d| d.abs()).sum();
            if total > tv_budget && total > 0.0 {
                let shrink = tv_budget / total;
                increments.iter_mut().for_each(|d| *d *= shrink);
            }
            let mut values = Vec::with_capacity(pieces);
            let mut level = 0.0;
            for d in increments {
                level += d;
                values.push(level);
            }
            let breakpoints: Vec<f64> = (0..=pieces)
                .map(|i| horizon * i as f64 / pieces as f64)
                .collect();
            family.push(Self::piecewise_constant(breakpoints, values)?);
        }
        Ok(family)
    }

    /// Places `other` after `self` in time, shifting its breakpoints and
    /// atom times by this control's horizon.
    pub fn concat(&self, other: &Control) -> Result<Self> {
        let mut breakpoints = self.breakpoints.clone();
        breakpoints.extend(other.breakpoints[1..].iter().map(|t| t + self.horizon));
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().map(|&(t, m)| (t + self.horizon, m)));
        Self::with_atoms(breakpoints, values, atoms)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Wire format for control files.
#[derive(Serialize, Deserialize, Clone)]
struct ControlDoc {
    horizon: f64,
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    #[serde(default)]
    atoms: Vec<(f64, f64)>,
}

impl From<Control> for ControlDoc {
    fn from(c: Control) -> Self {
        ControlDoc {
            horizon: c.horizon,
            breakpoints: c.breakpoints,
            values: c.values,
            atoms: c.atoms,
        }
    }
}

impl TryFrom<ControlDoc> for Control {
    type Error = Error;

    fn try_from(doc: ControlDoc) -> Result<Self> {
        let c = Control::with_atoms(doc.breakpoints, doc.values, doc.atoms)?;
        if doc.horizon != c.horizon {
            return Err(Error::invalid(format!(
                "document horizon {} does not equal the last breakpoint {}",
                doc.horizon, c.horizon
            )));
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn total_variation_sums_jumps() {
        let c = Control::constant(3.0, 1.0).unwrap();
        assert_eq!(c.total_variation().unwrap(), 0.0);

        let step = Control::piecewise_constant(vec![0.0, 0.5, 1.0], vec![0.0, 1.0]).unwrap();
        assert_eq!(step.total_variation().unwrap(), 1.0);

        let c =
            Control::piecewise_constant(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 2.0, -1.0]).unwrap();
        assert_eq!(c.total_variation().unwrap(), 5.0);

        let with_atom = Control::atoms_only(1.0, vec![(0.5, 1.0)]).unwrap();
        assert!(matches!(
            with_atom.total_variation(),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn signed_integral_accumulates_density_and_atoms() {
        let c = Control::constant(1.0, 2.0).unwrap();
        assert_abs_diff_eq!(c.signed_integral(2.0).unwrap(), 2.0, epsilon = 1e-15);

        let atom = Control::atoms_only(1.0, vec![(0.5, -2.0)]).unwrap();
        assert_eq!(atom.signed_integral(1.0).unwrap(), -2.0);
        assert_eq!(atom.signed_integral(0.25).unwrap(), 0.0);

        let cancel = Control::piecewise_constant(vec![0.0, 0.5, 1.0], vec![1.0, -1.0]).unwrap();
        assert_abs_diff_eq!(cancel.signed_integral(1.0).unwrap(), 0.0, epsilon = 1e-15);

        assert!(cancel.signed_integral(1.5).is_err());
        assert!(cancel.signed_integral(-0.1).is_err());
    }

    #[test]
    fn total_mass_counts_absolute_density_and_atoms() {
        let c = Control::constant(-2.0, 3.0).unwrap();
        assert_abs_diff_eq!(c.total_mass(), 6.0, epsilon = 1e-15);

        let atoms = Control::atoms_only(1.0, vec![(0.2, 1.0), (0.7, -1.0)]).unwrap();
        assert_eq!(atoms.total_mass(), 2.0);

        let mixed =
            Control::with_atoms(vec![0.0, 0.5, 1.0], vec![1.0, -1.0], vec![(0.9, 0.5)]).unwrap();
        assert_abs_diff_eq!(mixed.total_mass(), 1.5, epsilon = 1e-15);
    }

    #[test]
    fn value_at_uses_left_closed_pieces() {
        let c = Control::piecewise_constant(vec![0.0, 0.5, 1.0], vec![1.0, -1.0]).unwrap();
        assert_eq!(c.value_at(0.0), 1.0);
        assert_eq!(c.value_at(0.49), 1.0);
        assert_eq!(c.value_at(0.5), -1.0);
        assert_eq!(c.value_at(1.0), -1.0);
    }

    #[test]
    fn sampling_reproduces_constants_and_monotone_ramps() {
        let c = Control::sample_bv(|_| 2.5, &[0.0, 0.3, 1.0]).unwrap();
        assert_eq!(c.values(), &[2.5, 2.5]);
        assert_eq!(c.total_variation().unwrap(), 0.0);

        let ramp = Control::sample_bv(|t| t, &[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        assert_eq!(ramp.values(), &[0.0, 0.25, 0.5, 0.75]);
        assert_abs_diff_eq!(ramp.total_variation().unwrap(), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn sampled_sine_variation_refines_toward_four() {
        use std::f64::consts::TAU;
        let tv_at = |pieces: usize| {
            let partition: Vec<f64> = (0..=pieces).map(|i| i as f64 / pieces as f64).collect();
            Control::sample_bv(|t| (TAU * t).sin(), &partition)
                .unwrap()
                .total_variation()
                .unwrap()
        };
        let mut last = 0.0;
        for pieces in [4, 8, 16, 32, 64, 256] {
            let tv = tv_at(pieces);
            assert!(tv + 1e-12 >= last, "variation dropped under refinement");
            assert!(tv <= 4.0 + 1e-12);
            last = tv;
        }
        assert!(last > 3.9);
    }

    #[test]
    fn mollified_atom_is_a_unit_mass_pulse() {
        let p = Control::mollify_atom((0.5, 1.0), 0.1, 1.0).unwrap();
        assert_eq!(p.breakpoints(), &[0.0, 0.4, 0.5, 1.0]);
        assert_abs_diff_eq!(p.values()[1], 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.total_mass(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p.signed_integral(1.0).unwrap(), 1.0, epsilon = 1e-14);

        let zero = Control::mollify_atom((0.5, 0.0), 0.1, 1.0).unwrap();
        assert_eq!(zero.total_mass(), 0.0);

        // Pulse flush against t = 0 and against the horizon.
        let edge = Control::mollify_atom((0.1, -2.0), 0.1, 1.0).unwrap();
        assert_abs_diff_eq!(edge.total_mass(), 2.0, epsilon = 1e-14);
        let tail = Control::mollify_atom((1.0, 0.5), 0.25, 1.0).unwrap();
        assert_abs_diff_eq!(tail.signed_integral(1.0).unwrap(), 0.5, epsilon = 1e-14);

        assert!(Control::mollify_atom((0.05, 1.0), 0.1, 1.0).is_err());
        assert!(Control::mollify_atom((1.2, 1.0), 0.1, 1.0).is_err());
    }

    #[test]
    fn random_family_is_deterministic_and_budgeted() {
        let a = Control::random_family(7, 2.0, 1.5, 6, 10).unwrap();
        let b = Control::random_family(7, 2.0, 1.5, 6, 10).unwrap();
        assert_eq!(a, b);
        for c in &a {
            assert!(c.total_variation().unwrap() <= 2.0 + 1e-12);
            assert!(c.total_mass() <= 2.0 * 1.5 + 1e-12);
            assert!(c.sup_norm() <= 2.0 + 1e-12);
        }
        let other = Control::random_family(8, 2.0, 1.5, 6, 10).unwrap();
        assert_ne!(a, other);

        let frozen = Control::random_family(3, 0.0, 1.0, 4, 3).unwrap();
        for c in &frozen {
            assert_eq!(c.total_variation().unwrap(), 0.0);
            assert!(c.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn concatenation_adds_signed_integrals() {
        let a = Control::piecewise_constant(vec![0.0, 1.0], vec![2.0]).unwrap();
        let b =
            Control::with_atoms(vec![0.0, 0.5, 1.0], vec![-1.0, 0.5], vec![(0.25, 0.3)]).unwrap();
        let joined = a.concat(&b).unwrap();
        assert_eq!(joined.horizon(), 2.0);
        let want =
            a.signed_integral(a.horizon()).unwrap() + b.signed_integral(b.horizon()).unwrap();
        assert_abs_diff_eq!(joined.signed_integral(2.0).unwrap(), want, epsilon = 1e-14);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let c = Control::with_atoms(
            vec![0.0, 0.3, 1.0],
            vec![0.1, -0.7],
            vec![(0.5, 2.0), (1.0, -0.25)],
        )
        .unwrap();
        let text = c.to_json().unwrap();
        let back = Control::from_json(&text).unwrap();
        assert_eq!(back, c);

        // Atom at t = 0 is rejected.
        let r = Control::with_atoms(vec![0.0, 1.0], vec![0.0], vec![(0.0, 1.0)]);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
        // Horizon must match the last breakpoint.
        let bad = r#"{"horizon": 2.0, "breakpoints": [0.0, 1.0], "values": [0.5]}"#;
        assert!(Control::from_json(bad).is_err());
        // Non-monotone breakpoints are rejected.
        let r = Control::piecewise_constant(vec![0.0, 0.5, 0.5], vec![1.0, 2.0]);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    proptest! {
        #[test]
        fn signed_integral_is_dominated_by_mass(
            seed in 0u64..1000,
            t_frac in 0.0f64..=1.0,
        ) {
            let c = &Control::random_family(seed, 3.0, 1.0, 5, 1).unwrap()[0];
            let t = t_frac * c.horizon();
            let si = c.signed_integral(t).unwrap().abs();
            prop_assert!(si <= c.total_mass() + 1e-12);
        }

        #[test]
        fn sampled_variation_grows_under_refinement(seed in 0u64..500) {
            // A fixed BV function; coarse partition then its dyadic refinement.
            let f = |t: f64| (3.0 * t).sin() + 0.5 * (7.0 * t).cos();
            let coarse: Vec<f64> = (0..=8).map(|i| i as f64 / 8.0).collect();
            let mut fine = Vec::new();
            for w in coarse.windows(2) {
                fine.push(w[0]);
                fine.push(0.5 * (w[0] + w[1]));
            }
            fine.push(1.0);
            let tv_coarse = Control::sample_bv(f, &coarse).unwrap().total_variation().unwrap();
            let tv_fine = Control::sample_bv(f, &fine).unwrap().total_variation().unwrap();
            prop_assert!(tv_fine + 1e-12 >= tv_coarse);
            // Deterministic in everything; the seed only exercises the runner.
            let _ = seed;
        }

        #[test]
        fn control_json_round_trips_exactly(
            seed in 0u64..1000,
            tv in 0.0f64..4.0,
        ) {
            let c = &Control::random_family(seed, tv, 1.0, 4, 1).unwrap()[0];
            let back = Control::from_json(&c.to_json().unwrap()).unwrap();
            prop_assert_eq!(&back, c);
        }

        #[test]
        fn mollified_mass_matches_atom_mass(
            mass in -3.0f64..3.0,
            width_exp in 1u32..8,
        ) {
            let width = 0.5f64.powi(width_exp as i32);
            let p = Control::mollify_atom((0.5, mass), width, 1.0).unwrap();
            let err = (p.total_mass() - mass.abs()).abs();
            prop_assert!(err <= 1e-14 * mass.abs().max(1.0));
        }
    }
}
