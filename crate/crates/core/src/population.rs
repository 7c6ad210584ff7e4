//! Finite populations: two-way cluster geometry plus both potential outcomes
//! for every unit.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One member of the finite population.
#[derive(Debug, Clone, PartialEq)]
pub struct Unit<T> {
    pub id: usize,
    pub g: u32,
    pub h: u32,
    pub y1: T,
    pub y0: T,
}

/// Fixed finite population. Immutable once built; the stochastic parts of
/// the design live in the sampling and assignment mechanisms.
#[derive(Debug, Clone, PartialEq)]
pub struct Population<T> {
    units: Vec<Unit<T>>,
    n_g: usize,
    n_h: usize,
    /// Dense intersection id per unit.
    cell: Vec<u32>,
    n_cells: usize,
    g_counts: Vec<usize>,
    h_counts: Vec<usize>,
    cell_counts: Vec<usize>,
    tau: T,
    alpha: T,
}

impl<T: Scalar> Population<T> {
    /// Builds a population from explicit units. Labels must lie in
    /// `0..n_g` and `0..n_h`.
    pub fn from_units(units: Vec<Unit<T>>, n_g: usize, n_h: usize) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::DegeneratePopulation("no units".into()));
        }
        if units.len() > u32::MAX as usize {
            return Err(Error::Size(format!("{} units", units.len())));
        }
        let mut g_counts = vec![0usize; n_g];
        let mut h_counts = vec![0usize; n_h];
        let mut ids: HashMap<(u32, u32), u32> = HashMap::new();
        let mut cell = Vec::with_capacity(units.len());
        let mut cell_counts = Vec::new();
        for u in &units {
            if u.g as usize >= n_g || u.h as usize >= n_h {
                return Err(Error::Geometry(format!(
                    "unit {} has labels ({}, {}) outside {}x{}",
                    u.id, u.g, u.h, n_g, n_h
                )));
            }
            g_counts[u.g as usize] += 1;
            h_counts[u.h as usize] += 1;
            let next = ids.len() as u32;
            let id = *ids.entry((u.g, u.h)).or_insert(next);
            if id == next {
                cell_counts.push(0);
            }
            cell_counts[id as usize] += 1;
            cell.push(id);
        }
        let mut pop = Population {
            units,
            n_g,
            n_h,
            cell,
            n_cells: cell_counts.len(),
            g_counts,
            h_counts,
            cell_counts,
            tau: T::zero(),
            alpha: T::zero(),
        };
        pop.recompute_moments();
        Ok(pop)
    }

    fn recompute_moments(&mut self) {
        let n = T::from_count(self.units.len());
        let mut effect = T::zero();
        let mut base = T::zero();
        for u in &self.units {
            effect = effect + (u.y1.clone() - u.y0.clone());
            base = base + u.y0.clone();
        }
        self.tau = effect / n.clone();
        self.alpha = base / n;
    }

    pub fn n(&self) -> usize {
        self.units.len()
    }

    pub fn units(&self) -> &[Unit<T>] {
        &self.units
    }

    pub fn n_g(&self) -> usize {
        self.n_g
    }

    pub fn n_h(&self) -> usize {
        self.n_h
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Dense intersection id of every unit, in unit order.
    pub fn cells(&self) -> &[u32] {
        &self.cell
    }

    pub fn g_counts(&self) -> &[usize] {
        &self.g_counts
    }

    pub fn h_counts(&self) -> &[usize] {
        &self.h_counts
    }

    pub fn cell_counts(&self) -> &[usize] {
        &self.cell_counts
    }

    /// Population average treatment effect.
    pub fn tau(&self) -> T {
        self.tau.clone()
    }

    /// Mean control outcome.
    pub fn alpha(&self) -> T {
        self.alpha.clone()
    }

    /// Potential residuals `(u(1), u(0))`; each sums to zero over the population.
    pub fn potential_residuals(&self) -> (Vec<T>, Vec<T>) {
        let shift1 = self.alpha.clone() + self.tau.clone();
        self.units
            .iter()
            .map(|u| {
                (
                    u.y1.clone() - shift1.clone(),
                    u.y0.clone() - self.alpha.clone(),
                )
            })
            .unzip()
    }

    /// Per-unit effect deviations `τ_i − τ`.
    pub fn effect_deviations(&self) -> Vec<T> {
        self.units
            .iter()
            .map(|u| u.y1.clone() - u.y0.clone() - self.tau.clone())
            .collect()
    }

    /// Replaces every unit's outcomes, keeping the geometry.
    pub fn with_outcomes<F>(mut self, mut f: F) -> Self
    where
        F: FnMut(usize, &Unit<T>) -> (T, T),
    {
        for (i, u) in self.units.iter_mut().enumerate() {
            let (y1, y0) = f(i, u);
            u.y1 = y1;
            u.y0 = y0;
        }
        self.recompute_moments();
        self
    }

    /// Converts outcomes to another scalar type, keeping the geometry.
    pub fn map_scalar<S: Scalar>(&self, f: impl Fn(&T) -> S) -> Population<S> {
        Population {
            units: self
                .units
                .iter()
                .map(|u| Unit {
                    id: u.id,
                    g: u.g,
                    h: u.h,
                    y1: f(&u.y1),
                    y0: f(&u.y0),
                })
                .collect(),
            n_g: self.n_g,
            n_h: self.n_h,
            cell: self.cell.clone(),
            n_cells: self.n_cells,
            g_counts: self.g_counts.clone(),
            h_counts: self.h_counts.clone(),
            cell_counts: self.cell_counts.clone(),
            tau: f(&self.tau),
            alpha: f(&self.alpha),
        }
        .remeasured()
    }

    fn remeasured(mut self) -> Self {
        self.recompute_moments();
        self
    }
}

/// Every `(g, h)` intersection holds `per_cell` units; outcomes start at zero.
pub fn build_balanced<T: Scalar>(n_g: usize, n_h: usize, per_cell: usize) -> Result<Population<T>> {
    if n_g == 0 || n_h == 0 || per_cell == 0 {
        return Err(Error::Geometry(format!(
            "balanced geometry needs positive sizes, got ({n_g}, {n_h}, {per_cell})"
        )));
    }
    let n = n_g
        .checked_mul(n_h)
        .and_then(|x| x.checked_mul(per_cell))
        .filter(|&n| n <= u32::MAX as usize)
        .ok_or_else(|| Error::Size(format!("{n_g} x {n_h} x {per_cell}")))?;
    let mut units = Vec::with_capacity(n);
    for g in 0..n_g {
        for h in 0..n_h {
            for _ in 0..per_cell {
                units.push(Unit {
                    id: units.len(),
                    g: g as u32,
                    h: h as u32,
                    y1: T::zero(),
                    y0: T::zero(),
                });
            }
        }
    }
    Population::from_units(units, n_g, n_h)
}

/// Staircase geometry with `m` clusters per dimension: for every odd `k`,
/// `4·m0` units in `(k, k)` and `m0` units in each of `(k, k±1)` and `(k±1, k)`.
/// Labels wrap modulo `m`.
pub fn build_staircase<T: Scalar>(m: usize, m0: usize) -> Result<Population<T>> {
    if m < 4 || !m.is_multiple_of(2) {
        return Err(Error::Geometry(format!(
            "staircase needs an even cluster count of at least 4, got {m}"
        )));
    }
    if m0 == 0 {
        return Err(Error::Geometry(
            "staircase base mass must be positive".into(),
        ));
    }
    let n = 4usize
        .checked_mul(m0)
        .and_then(|x| x.checked_mul(m))
        .filter(|&n| n <= u32::MAX as usize)
        .ok_or_else(|| Error::Size(format!("4 x {m0} x {m}")))?;
    let mut units = Vec::with_capacity(n);
    let push = |g: usize, h: usize, count: usize, units: &mut Vec<Unit<T>>| {
        for _ in 0..count {
            units.push(Unit {
                id: units.len(),
                g: g as u32,
                h: h as u32,
                y1: T::zero(),
                y0: T::zero(),
            });
        }
    };
    for k in (1..m).step_by(2) {
        let below = (k + m - 1) % m;
        let above = (k + 1) % m;
        push(k, k, 4 * m0, &mut units);
        push(k, below, m0, &mut units);
        push(k, above, m0, &mut units);
        push(below, k, m0, &mut units);
        push(above, k, m0, &mut units);
    }
    Population::from_units(units, m, m)
}

/// How treatment effects vary across the population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectVariant {
    /// `τ_g ∈ {±2}`, `τ_h ∈ {±1/2}`.
    Gvar,
    /// `τ_g ∈ {±1/2}`, `τ_h ∈ {±2}`.
    Hvar,
    /// `τ_g, τ_h ∈ {±1}`.
    Same,
    Constant,
    /// `+1` when both labels are odd, `−1` otherwise.
    Oddeven,
}

impl EffectVariant {
    pub const ALL: [EffectVariant; 5] = [
        EffectVariant::Gvar,
        EffectVariant::Hvar,
        EffectVariant::Same,
        EffectVariant::Constant,
        EffectVariant::Oddeven,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EffectVariant::Gvar => "Gvar",
            EffectVariant::Hvar => "Hvar",
            EffectVariant::Same => "same",
            EffectVariant::Constant => "constant",
            EffectVariant::Oddeven => "oddeven",
        }
    }

    /// Magnitudes of the two-point cluster components `(|τ_g|, |τ_h|)`.
    fn cluster_magnitudes(self) -> Option<(f64, f64)> {
        match self {
            EffectVariant::Gvar => Some((2.0, 0.5)),
            EffectVariant::Hvar => Some((0.5, 2.0)),
            EffectVariant::Same => Some((1.0, 1.0)),
            EffectVariant::Constant | EffectVariant::Oddeven => None,
        }
    }
}

/// Whether the configured noise level is a variance or a standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseScale {
    #[default]
    Variance,
    Sd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectScheme {
    pub variant: EffectVariant,
    pub noise: f64,
    pub noise_scale: NoiseScale,
}

impl EffectScheme {
    pub const DEFAULT_NOISE_VARIANCE: f64 = 0.1;

    pub fn new(variant: EffectVariant) -> Self {
        EffectScheme {
            variant,
            noise: Self::DEFAULT_NOISE_VARIANCE,
            noise_scale: NoiseScale::Variance,
        }
    }

    pub fn with_noise(mut self, noise: f64, scale: NoiseScale) -> Self {
        self.noise = noise;
        self.noise_scale = scale;
        self
    }

    pub fn noise_sd(&self) -> f64 {
        match self.noise_scale {
            NoiseScale::Variance => self.noise.sqrt(),
            NoiseScale::Sd => self.noise,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise level must be finite and non-negative, got {}",
                self.noise
            )));
        }
        Ok(())
    }
}

/// Realized random components of an effect scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectDraws {
    pub tau_g: Vec<f64>,
    pub tau_h: Vec<f64>,
    pub noise: Vec<f64>,
}

impl EffectDraws {
    pub fn draw<T>(pop: &Population<T>, scheme: &EffectScheme, seed: u64) -> Result<Self> {
        scheme.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (tau_g, tau_h) = match scheme.variant.cluster_magnitudes() {
            Some((mg, mh)) => {
                let tau_g = (0..pop.n_g)
                    .map(|_| if rng.random::<bool>() { mg } else { -mg })
                    .collect();
                let tau_h = (0..pop.n_h)
                    .map(|_| if rng.random::<bool>() { mh } else { -mh })
                    .collect();
                (tau_g, tau_h)
            }
            None => (vec![0.0; pop.n_g], vec![0.0; pop.n_h]),
        };
        let sd = scheme.noise_sd();
        let noise = if sd > 0.0 {
            let normal = Normal::new(0.0, sd)
                .map_err(|e| Error::InvalidParameter(format!("noise distribution: {e}")))?;
            (0..pop.units.len())
                .map(|_| normal.sample(&mut rng))
                .collect()
        } else {
            vec![0.0; pop.units.len()]
        };
        Ok(EffectDraws {
            tau_g,
            tau_h,
            noise,
        })
    }
}

/// Unit effect `τ_i` implied by a variant and realized cluster components.
pub fn unit_effect(variant: EffectVariant, g: u32, h: u32, draws: &EffectDraws) -> f64 {
    match variant {
        EffectVariant::Gvar | EffectVariant::Hvar | EffectVariant::Same => {
            draws.tau_g[g as usize] + draws.tau_h[h as usize]
        }
        EffectVariant::Constant => 1.0,
        EffectVariant::Oddeven => {
            if g % 2 == 1 && h % 2 == 1 {
                1.0
            } else {
                -1.0
            }
        }
    }
}

/// Sets `y0 = u_i` and `y1 = τ_i + u_i` from realized draws.
pub fn apply_effects<T: Scalar>(
    pop: Population<T>,
    variant: EffectVariant,
    draws: &EffectDraws,
) -> Result<Population<T>> {
    if draws.tau_g.len() != pop.n_g
        || draws.tau_h.len() != pop.n_h
        || draws.noise.len() != pop.units.len()
    {
        return Err(Error::InvalidParameter(
            "effect draws do not match population geometry".into(),
        ));
    }
    Ok(pop.with_outcomes(|i, u| {
        let noise = T::from_real(draws.noise[i]);
        let effect = T::from_real(unit_effect(variant, u.g, u.h, draws));
        (effect + noise.clone(), noise)
    }))
}

/// Draws per-cluster effect components and unit noise from `seed`, then
/// fills in the potential outcomes.
pub fn assign_effects<T: Scalar>(
    pop: Population<T>,
    scheme: &EffectScheme,
    seed: u64,
) -> Result<Population<T>> {
    let draws = EffectDraws::draw(&pop, scheme, seed)?;
    apply_effects(pop, scheme.variant, &draws)
}

/// Keeps each unit independently with probability `fraction`; the result is a
/// new fixed population whose `τ` and `α` refer to the retained units.
pub fn thin_population<T: Scalar>(
    pop: &Population<T>,
    fraction: f64,
    seed: u64,
) -> Result<Population<T>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::DegeneratePopulation(format!(
            "thinning fraction must lie in (0, 1], got {fraction}"
        )));
    }
    if fraction == 1.0 {
        return Ok(pop.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kept: Vec<Unit<T>> = pop
        .units
        .iter()
        .filter(|_| rng.random_bool(fraction))
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(Error::DegeneratePopulation(
            "thinning retained no units".into(),
        ));
    }
    let kept = kept
        .into_iter()
        .enumerate()
        .map(|(i, u)| Unit { id: i, ..u })
        .collect();
    Population::from_units(kept, pop.n_g, pop.n_h)
}

pub fn population_ate<T: Scalar>(pop: &Population<T>) -> T {
    pop.tau()
}

#[derive(Debug, Serialize, Deserialize)]
struct UnitRecord {
    id: usize,
    g: u32,
    h: u32,
    y1: f64,
    y0: f64,
}

impl Population<f64> {
    /// Writes `id,g,h,y1,y0` rows with a header.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for u in &self.units {
            out.serialize(UnitRecord {
                id: u.id,
                g: u.g,
                h: u.h,
                y1: u.y1,
                y0: u.y0,
            })?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the format produced by [`Population::write_csv`]. Cluster
    /// ranges are taken as one past the largest label seen.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut units = Vec::new();
        let (mut n_g, mut n_h) = (0usize, 0usize);
        for rec in rdr.deserialize() {
            let rec: UnitRecord = rec?;
            n_g = n_g.max(rec.g as usize + 1);
            n_h = n_h.max(rec.h as usize + 1);
            units.push(Unit {
                id: rec.id,
                g: rec.g,
                h: rec.h,
                y1: rec.y1,
                y0: rec.y0,
            });
        }
        Population::from_units(units, n_g, n_h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use std::collections::BTreeMap;

    fn cell_tally<T: Scalar>(pop: &Population<T>) -> BTreeMap<(u32, u32), usize> {
        let mut t = BTreeMap::new();
        for u in pop.units() {
            *t.entry((u.g, u.h)).or_insert(0) += 1;
        }
        t
    }

    #[test]
    fn balanced_counts() {
        let pop = build_balanced::<f64>(2, 3, 2).unwrap();
        assert_eq!(pop.n(), 12);
        let mut g = vec![0; 2];
        let mut h = vec![0; 3];
        for u in pop.units() {
            g[u.g as usize] += 1;
            h[u.h as usize] += 1;
        }
        assert_eq!(g, vec![6, 6]);
        assert_eq!(h, vec![4, 4, 4]);
        assert_eq!(pop.g_counts(), &g[..]);
        assert_eq!(pop.h_counts(), &h[..]);
        assert_eq!(pop.n_cells(), 6);
    }

    #[test]
    fn balanced_single_cell() {
        let pop = build_balanced::<f64>(1, 1, 5).unwrap();
        assert_eq!(pop.n(), 5);
        assert!(pop.units().iter().all(|u| u.g == 0 && u.h == 0));
    }

    #[test]
    fn balanced_full_scale() {
        let pop = build_balanced::<f64>(1000, 1000, 1).unwrap();
        assert_eq!(pop.n(), 1_000_000);
        assert_eq!(pop.n_cells(), 1_000_000);
    }

    #[test]
    fn balanced_rejects_zero_and_overflow() {
        assert!(matches!(
            build_balanced::<f64>(0, 3, 1),
            Err(Error::Geometry(_))
        ));
        assert!(matches!(
            build_balanced::<f64>(usize::MAX, 2, 1),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn staircase_small_enumeration() {
        let pop = build_staircase::<f64>(4, 1).unwrap();
        assert_eq!(pop.n(), 16);
        let expected: BTreeMap<(u32, u32), usize> = [
            ((1, 1), 4),
            ((3, 3), 4),
            ((1, 0), 1),
            ((1, 2), 1),
            ((0, 1), 1),
            ((2, 1), 1),
            ((3, 2), 1),
            ((3, 0), 1),
            ((2, 3), 1),
            ((0, 3), 1),
        ]
        .into_iter()
        .collect();
        assert_eq!(cell_tally(&pop), expected);
    }

    #[test]
    fn staircase_sizes_and_mass_ratio() {
        let pop = build_staircase::<f64>(1000, 250).unwrap();
        assert_eq!(pop.n(), 1_000_000);
        for ((g, h), c) in cell_tally(&pop) {
            if g == h {
                assert_eq!(c, 1000);
            } else {
                assert_eq!(c, 250);
            }
        }
    }

    #[test]
    fn staircase_rejects_odd() {
        assert!(matches!(
            build_staircase::<f64>(3, 1),
            Err(Error::Geometry(_))
        ));
        assert!(matches!(
            build_staircase::<f64>(2, 1),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn constant_scheme_ate_is_one() {
        for seed in [1, 2, 99] {
            let pop = build_balanced::<f64>(5, 4, 3).unwrap();
            let pop =
                assign_effects(pop, &EffectScheme::new(EffectVariant::Constant), seed).unwrap();
            assert!((population_ate(&pop) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn oddeven_staircase_deviations() {
        let pop = build_staircase::<f64>(4, 1).unwrap();
        let pop = assign_effects(pop, &EffectScheme::new(EffectVariant::Oddeven), 3).unwrap();
        assert!(population_ate(&pop).abs() < 1e-12);
        let dev = pop.effect_deviations();
        let mut total = 0.0;
        for (u, d) in pop.units().iter().zip(&dev) {
            let expected = if u.g == u.h { 1.0 } else { -1.0 };
            assert!((d - expected).abs() < 1e-12);
            total += d;
        }
        assert!(total.abs() < 1e-12);
    }

    #[test]
    fn same_scheme_with_positive_draws() {
        let pop = build_balanced::<f64>(2, 2, 1).unwrap();
        let draws = EffectDraws {
            tau_g: vec![1.0, 1.0],
            tau_h: vec![1.0, 1.0],
            noise: vec![0.0; 4],
        };
        let pop = apply_effects(pop, EffectVariant::Same, &draws).unwrap();
        assert!(pop.units().iter().all(|u| u.y1 - u.y0 == 2.0));
    }

    #[test]
    fn gvar_components_have_stated_support() {
        let pop = build_balanced::<f64>(50, 40, 1).unwrap();
        let d = EffectDraws::draw(&pop, &EffectScheme::new(EffectVariant::Gvar), 5).unwrap();
        assert!(d.tau_g.iter().all(|&t| t == 2.0 || t == -2.0));
        assert!(d.tau_h.iter().all(|&t| t == 0.5 || t == -0.5));
        let d = EffectDraws::draw(&pop, &EffectScheme::new(EffectVariant::Hvar), 5).unwrap();
        assert!(d.tau_g.iter().all(|&t| t == 0.5 || t == -0.5));
        assert!(d.tau_h.iter().all(|&t| t == 2.0 || t == -2.0));
    }

    #[test]
    fn ate_by_hand() {
        let units = vec![
            Unit {
                id: 0,
                g: 0,
                h: 0,
                y1: 3.0,
                y0: 1.0,
            },
            Unit {
                id: 1,
                g: 0,
                h: 1,
                y1: 1.0,
                y0: 1.0,
            },
        ];
        let pop = Population::from_units(units, 1, 2).unwrap();
        assert_eq!(population_ate(&pop), 1.0);
    }

    #[test]
    fn residuals_sum_to_zero() {
        let pop = build_balanced::<f64>(30, 20, 2).unwrap();
        let pop = assign_effects(pop, &EffectScheme::new(EffectVariant::Same), 17).unwrap();
        let (u1, u0) = pop.potential_residuals();
        let tol = 1e-9 * pop.n() as f64;
        assert!(u1.iter().sum::<f64>().abs() < tol);
        assert!(u0.iter().sum::<f64>().abs() < tol);
        let thin = thin_population(&pop, 0.3, 4).unwrap();
        let (u1, u0) = thin.potential_residuals();
        assert!(u1.iter().sum::<f64>().abs() < tol);
        assert!(u0.iter().sum::<f64>().abs() < tol);
    }

    #[test]
    fn rational_residuals_sum_exactly_to_zero() {
        let pop = build_balanced::<f64>(4, 3, 2).unwrap();
        let pop = assign_effects(pop, &EffectScheme::new(EffectVariant::Gvar), 8).unwrap();
        let exact = pop.map_scalar(|&x| BigRational::from_real(x));
        let (u1, u0) = exact.potential_residuals();
        let zero = BigRational::from_count(0);
        assert_eq!(u1.into_iter().fold(zero.clone(), |a, b| a + b), zero);
        assert_eq!(u0.into_iter().fold(zero.clone(), |a, b| a + b), zero);
    }

    #[test]
    fn determinism() {
        let a = assign_effects(
            build_balanced::<f64>(10, 10, 2).unwrap(),
            &EffectScheme::new(EffectVariant::Hvar),
            42,
        )
        .unwrap();
        let b = assign_effects(
            build_balanced::<f64>(10, 10, 2).unwrap(),
            &EffectScheme::new(EffectVariant::Hvar),
            42,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn thinning_identity_and_errors() {
        let pop = assign_effects(
            build_balanced::<f64>(10, 10, 1).unwrap(),
            &EffectScheme::new(EffectVariant::Same),
            1,
        )
        .unwrap();
        let same = thin_population(&pop, 1.0, 9).unwrap();
        assert_eq!(same.tau(), pop.tau());
        assert_eq!(same.n(), pop.n());
        assert!(matches!(
            thin_population(&pop, 0.0, 9),
            Err(Error::DegeneratePopulation(_))
        ));
    }

    #[test]
    fn thinning_one_percent_concentrates() {
        let pop = build_balanced::<f64>(1000, 1000, 1).unwrap();
        for seed in 0..3 {
            let thin = thin_population(&pop, 0.01, seed).unwrap();
            assert!((9_500..=10_500).contains(&thin.n()), "n = {}", thin.n());
            let total: usize = thin.g_counts().iter().sum();
            assert_eq!(total, thin.n());
            assert_eq!(thin.h_counts().iter().sum::<usize>(), thin.n());
            assert_eq!(thin.cell_counts().iter().sum::<usize>(), thin.n());
        }
    }

    #[test]
    fn csv_round_trip() {
        let pop = assign_effects(
            build_staircase::<f64>(4, 2).unwrap(),
            &EffectScheme::new(EffectVariant::Oddeven),
            6,
        )
        .unwrap();
        let mut buf = Vec::new();
        pop.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("id,g,h,y1,y0\n"));
        let back = Population::read_csv(&buf[..]).unwrap();
        assert_eq!(back.units(), pop.units());
    }
}
