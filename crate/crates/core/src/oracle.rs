//! Brute-force verifiers kept independent of the cluster-sum engine:
//! quadratic pair loops, Monte Carlo moment checks and replication-based
//! variance checks. None of these sit on the simulation hot path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::fit;
use crate::mechanisms::{
    draw, draw_assignment, draw_sampling, Arm, AssignmentSpec, ClusterProbability, PairRelation,
    SamplingSpec,
};
use crate::population::{Population, Unit};
use crate::scalar::Scalar;
use crate::variance::true_variance;

/// Largest population the quadratic oracles accept.
pub const PAIRWISE_LIMIT: usize = 5000;

fn guard(n: usize) -> Result<()> {
    if n > PAIRWISE_LIMIT {
        return Err(Error::SizeGuard {
            n,
            limit: PAIRWISE_LIMIT,
        });
    }
    Ok(())
}

/// `E[ξ_i ξ_j]` from its four-term expansion.
fn xi_cross<T: Scalar>(
    sampling: &SamplingSpec<T>,
    assignment: &AssignmentSpec<T>,
    rel: PairRelation,
    diagonal: bool,
    ui: (&T, &T),
    uj: (&T, &T),
) -> T {
    let one = T::one();
    let b1 = sampling.mean() * assignment.mean();
    let b0 = sampling.mean() * (one.clone() - assignment.mean());
    let rr = sampling.cross_moment(rel, diagonal);
    let ew = |a, b| assignment.cross_moment(rel, diagonal, (a, b));
    let (a_i, c_i) = ui;
    let (a_j, c_j) = uj;
    let t11 = (rr.clone() * ew(Arm::Treated, Arm::Treated) / (b1.clone() * b1.clone())
        - one.clone())
        * a_i.clone()
        * a_j.clone();
    let t00 = (rr.clone() * ew(Arm::Untreated, Arm::Untreated) / (b0.clone() * b0.clone())
        - one.clone())
        * c_i.clone()
        * c_j.clone();
    let t10 = (rr.clone() * ew(Arm::Treated, Arm::Untreated) / (b1.clone() * b0.clone())
        - one.clone())
        * a_i.clone()
        * c_j.clone();
    let t01 = (rr * ew(Arm::Untreated, Arm::Treated) / (b1 * b0) - one) * c_i.clone() * a_j.clone();
    t11 + t00 - t10 - t01
}

/// Asymptotic variance by explicit enumeration of every neighbor pair.
pub fn pairwise_variance<T: Scalar>(
    pop: &Population<T>,
    sampling: &SamplingSpec<T>,
    assignment: &AssignmentSpec<T>,
) -> Result<T> {
    guard(pop.n())?;
    sampling.validate()?;
    assignment.validate()?;
    let one = T::one();
    let r = sampling.mean();
    let w = assignment.mean();
    if r.clone() * w.clone() <= T::zero() || r.clone() * (one - w) <= T::zero() {
        return Err(Error::InvalidMechanism("zero observation rate".into()));
    }
    let (u1, u0) = pop.potential_residuals();
    let units = pop.units();
    let mut total = T::zero();
    for (i, ui) in units.iter().enumerate() {
        for (j, uj) in units.iter().enumerate() {
            let rel = PairRelation::classify(ui.g, ui.h, uj.g, uj.h);
            if rel == PairRelation::Unrelated {
                continue;
            }
            total = total
                + xi_cross(
                    sampling,
                    assignment,
                    rel,
                    i == j,
                    (&u1[i], &u0[i]),
                    (&u1[j], &u0[j]),
                );
        }
    }
    let n = T::from_count(pop.n());
    Ok(n.clone() * sampling.mean() / (n.clone() * n) * total)
}

/// `Σ_i Σ_{j ∈ N_i} x_i x_j` by enumerating pairs.
pub fn pairwise_neighbor_sum<T: Scalar>(pop: &Population<T>, x: &[T]) -> Result<T> {
    guard(pop.n())?;
    let units = pop.units();
    let mut total = T::zero();
    for (i, ui) in units.iter().enumerate() {
        for (j, uj) in units.iter().enumerate() {
            if ui.g == uj.g || ui.h == uj.h {
                total = total + x[i].clone() * x[j].clone();
            }
        }
    }
    Ok(total)
}

/// Average neighbor correlation of effect deviations,
/// `(1/n) Σ_i Σ_{j ∈ N_i} (τ_i − τ)(τ_j − τ)`, in units of the smallest
/// intersection mass (the off-diagonal cell size for a staircase population).
///
/// Neighbor sums are accumulated per unit from its G, H and intersection
/// totals, so the check scales to a million units.
pub fn staircase_constant<T: Scalar>(pop: &Population<T>) -> T {
    let dev = pop.effect_deviations();
    let mut by_g = vec![T::zero(); pop.n_g()];
    let mut by_h = vec![T::zero(); pop.n_h()];
    let mut by_cell = vec![T::zero(); pop.n_cells()];
    for ((u, d), &c) in pop.units().iter().zip(&dev).zip(pop.cells()) {
        by_g[u.g as usize] = by_g[u.g as usize].clone() + d.clone();
        by_h[u.h as usize] = by_h[u.h as usize].clone() + d.clone();
        by_cell[c as usize] = by_cell[c as usize].clone() + d.clone();
    }
    let mut total = T::zero();
    for ((u, d), &c) in pop.units().iter().zip(&dev).zip(pop.cells()) {
        let neighbors =
            by_g[u.g as usize].clone() + by_h[u.h as usize].clone() - by_cell[c as usize].clone();
        total = total + d.clone() * neighbors;
    }
    let base_mass = pop.cell_counts().iter().copied().min().unwrap_or(1);
    total / (T::from_count(pop.n()) * T::from_count(base_mass))
}

/// Mechanism under test in a moment check.
#[derive(Debug, Clone)]
pub enum MechanismSpec {
    Sampling(SamplingSpec<f64>),
    Assignment(AssignmentSpec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentEntry {
    pub label: String,
    pub expected: f64,
    pub empirical: f64,
    pub std_error: f64,
    /// Deviation in standard-error units; zero when both sides agree exactly.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub relation: PairRelation,
    pub diagonal: bool,
    pub reps: usize,
    pub entries: Vec<MomentEntry>,
}

impl MomentReport {
    pub fn max_abs_z(&self) -> f64 {
        self.entries.iter().map(|e| e.z.abs()).fold(0.0, f64::max)
    }
}

/// Two-unit population realizing `rel`; the diagonal case uses one unit.
fn miniature(rel: PairRelation, diagonal: bool) -> Population<f64> {
    let cells: &[(u32, u32)] = if diagonal {
        &[(0, 0)]
    } else {
        match rel {
            PairRelation::SameIntersection => &[(0, 0), (0, 0)],
            PairRelation::SameGOnly => &[(0, 0), (0, 1)],
            PairRelation::SameHOnly => &[(0, 0), (1, 0)],
            PairRelation::Unrelated => &[(0, 0), (1, 1)],
        }
    };
    let units = cells
        .iter()
        .enumerate()
        .map(|(id, &(g, h))| Unit {
            id,
            g,
            h,
            y1: 0.0,
            y0: 0.0,
        })
        .collect();
    Population::from_units(units, 2, 2).expect("static miniature geometry")
}

fn entry(label: String, expected: f64, hits: usize, reps: usize) -> MomentEntry {
    let empirical = hits as f64 / reps as f64;
    let std_error = (expected * (1.0 - expected) / reps as f64).max(0.0).sqrt();
    let diff = empirical - expected;
    let z = if diff.abs() < 1e-15 {
        0.0
    } else if std_error == 0.0 {
        f64::INFINITY
    } else {
        diff / std_error
    };
    MomentEntry {
        label,
        expected,
        empirical,
        std_error,
        z,
    }
}

/// Simulates a mechanism on a miniature population and compares indicator
/// product frequencies with the closed-form cross moments.
pub fn mc_moment_check(
    spec: &MechanismSpec,
    rel: PairRelation,
    diagonal: bool,
    reps: usize,
    rng: &mut ChaCha8Rng,
) -> MomentReport {
    let pop = miniature(rel, diagonal);
    let last = pop.n() - 1;
    let entries = match spec {
        MechanismSpec::Sampling(s) => {
            let mut hits = 0usize;
            for _ in 0..reps {
                let r = draw_sampling(&pop, s, rng);
                hits += (r[0] && r[last]) as usize;
            }
            vec![entry(
                "E[R_i R_j]".into(),
                s.cross_moment(rel, diagonal),
                hits,
                reps,
            )]
        }
        MechanismSpec::Assignment(a) => {
            let arms = [
                (Arm::Treated, Arm::Treated),
                (Arm::Treated, Arm::Untreated),
                (Arm::Untreated, Arm::Treated),
                (Arm::Untreated, Arm::Untreated),
            ];
            let mut hits = [0usize; 4];
            for _ in 0..reps {
                let w = draw_assignment(&pop, a, rng);
                for (k, &(x, y)) in arms.iter().enumerate() {
                    let lhs = if x == Arm::Treated { w[0] } else { !w[0] };
                    let rhs = if y == Arm::Treated { w[last] } else { !w[last] };
                    hits[k] += (lhs && rhs) as usize;
                }
            }
            arms.iter()
                .zip(hits)
                .map(|(&(x, y), h)| {
                    let name = |arm| if arm == Arm::Treated { "W" } else { "(1-W)" };
                    entry(
                        format!("E[{}_i {}_j]", name(x), name(y)),
                        a.cross_moment(rel, diagonal, (x, y)),
                        h,
                        reps,
                    )
                })
                .collect()
        }
    };
    MomentReport {
        relation: rel,
        diagonal,
        reps,
        entries,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorVarianceReport {
    pub reps: usize,
    pub used: usize,
    pub degenerate: usize,
    /// Sample variance of `√N (τ̂ − τ)`.
    pub empirical: f64,
    pub theoretical: f64,
    pub ratio: f64,
    /// Mean of `τ̂ − τ`.
    pub bias: f64,
    /// Skewness and excess kurtosis of `√N (τ̂ − τ) / √v`.
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

/// Replicates draws and compares the spread of `√N (τ̂ − τ)` with the
/// closed-form asymptotic variance. Replication `s` uses stream `s` of `seed`.
pub fn mc_estimator_variance(
    pop: &Population<f64>,
    sampling: &SamplingSpec<f64>,
    assignment: &AssignmentSpec<f64>,
    reps: usize,
    seed: u64,
) -> Result<EstimatorVarianceReport> {
    let tau = pop.tau();
    let stats: Vec<Option<(f64, f64)>> = (0..reps as u64)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s);
            let d = draw(pop, sampling, assignment, &mut rng);
            fit(pop, &d)
                .ok()
                .map(|f| ((f.n_obs as f64).sqrt() * (f.tau_hat - tau), f.tau_hat - tau))
        })
        .collect();
    let scaled: Vec<f64> = stats.iter().flatten().map(|x| x.0).collect();
    let used = scaled.len();
    if used < 2 {
        return Err(Error::OracleFailure(format!(
            "{} of {reps} draws were degenerate",
            reps - used
        )));
    }
    let theoretical = match true_variance(pop, sampling, assignment) {
        Ok(v) => v,
        Err(e) => return Err(Error::OracleFailure(e.to_string())),
    };
    let mean = scaled.iter().sum::<f64>() / used as f64;
    let empirical = scaled.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (used - 1) as f64;
    let bias = stats.iter().flatten().map(|x| x.1).sum::<f64>() / used as f64;
    let sd = theoretical.sqrt();
    let z: Vec<f64> = scaled.iter().map(|x| x / sd).collect();
    let zm = z.iter().sum::<f64>() / used as f64;
    let m2 = z.iter().map(|x| (x - zm).powi(2)).sum::<f64>() / used as f64;
    let m3 = z.iter().map(|x| (x - zm).powi(3)).sum::<f64>() / used as f64;
    let m4 = z.iter().map(|x| (x - zm).powi(4)).sum::<f64>() / used as f64;
    Ok(EstimatorVarianceReport {
        reps,
        used,
        degenerate: reps - used,
        empirical,
        theoretical,
        ratio: empirical / theoretical,
        bias,
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
    })
}

/// A random small population with a mechanism pair. Instance `index` cycles
/// through every sampling and assignment variant.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub population: Population<f64>,
    pub sampling: SamplingSpec<f64>,
    pub assignment: AssignmentSpec<f64>,
}

impl RandomInstance {
    pub fn generate<R: Rng + ?Sized>(index: usize, max_n: usize, rng: &mut R) -> Self {
        let n = rng.random_range(1..=max_n.max(1));
        let n_g = rng.random_range(1..=n.min(8)) as u32;
        let n_h = rng.random_range(1..=n.min(8)) as u32;
        let units = (0..n)
            .map(|id| Unit {
                id,
                g: rng.random_range(0..n_g),
                h: rng.random_range(0..n_h),
                y1: rng.random_range(-3.0..3.0),
                y0: rng.random_range(-3.0..3.0),
            })
            .collect();
        let population =
            Population::from_units(units, n_g as usize, n_h as usize).expect("labels in range");
        let mut prob = || rng.random_range(0.1..0.95);
        let sampling = match index % 4 {
            0 => SamplingSpec::Full,
            1 => SamplingSpec::Iid { p: prob() },
            2 => SamplingSpec::OneWayG {
                q: prob(),
                p: prob(),
            },
            _ => SamplingSpec::MultiwayAnd {
                a: prob(),
                b: prob(),
                p: prob(),
            },
        };
        let assignment = match (index / 4) % 4 {
            0 => AssignmentSpec::Iid { mu: prob() },
            1 => AssignmentSpec::OneWayH(ClusterProbability::Uniform),
            2 => {
                let w = prob();
                AssignmentSpec::OneWayH(ClusterProbability::TwoPoint {
                    values: [prob() * 0.5, 0.5 + prob() * 0.5],
                    probabilities: [w, 1.0 - w],
                })
            }
            _ => AssignmentSpec::MultiwayAnd {
                pa: prob(),
                pb: prob(),
            },
        };
        RandomInstance {
            population,
            sampling,
            assignment,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::{
        assign_effects, build_balanced, build_staircase, EffectScheme, EffectVariant,
    };
    use crate::variance::limit_variances;
    use num_rational::BigRational;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn six_unit_population_matches_engine() {
        let pop = assign_effects(
            build_balanced::<f64>(2, 3, 1).unwrap(),
            &EffectScheme::new(EffectVariant::Same),
            12,
        )
        .unwrap();
        let s = SamplingSpec::OneWayG { q: 0.5, p: 1.0 };
        let a = AssignmentSpec::Iid { mu: 0.5 };
        let engine = true_variance(&pop, &s, &a).unwrap();
        let oracle = pairwise_variance(&pop, &s, &a).unwrap();
        assert!((engine - oracle).abs() <= 1e-12 * engine.abs().max(1.0));
    }

    #[test]
    fn exact_agreement_in_rationals() {
        let pop = assign_effects(
            build_staircase::<f64>(4, 1).unwrap(),
            &EffectScheme::new(EffectVariant::Oddeven),
            2,
        )
        .unwrap()
        .map_scalar(|&x| BigRational::from_real(x));
        let s = SamplingSpec::MultiwayAnd {
            a: BigRational::ratio(1, 4),
            b: BigRational::ratio(1, 3),
            p: BigRational::ratio(1, 2),
        };
        let a = AssignmentSpec::OneWayH(ClusterProbability::Uniform);
        assert_eq!(
            true_variance(&pop, &s, &a).unwrap(),
            pairwise_variance(&pop, &s, &a).unwrap()
        );
    }

    #[test]
    fn two_unit_hand_expansion() {
        // Two units sharing a cell, y1 = (1, 3), y0 = (0, 0): τ = 2, α = 0,
        // u(1) = (−1, 1), u(0) = (0, 0). Full sampling, iid μ = 1/2:
        // diagonal coefficient on u(1)² is 1/b1 − 1 = 1; off-diagonal is 0.
        let units = vec![
            Unit {
                id: 0,
                g: 0,
                h: 0,
                y1: BigRational::from_count(1),
                y0: BigRational::from_count(0),
            },
            Unit {
                id: 1,
                g: 0,
                h: 0,
                y1: BigRational::from_count(3),
                y0: BigRational::from_count(0),
            },
        ];
        let pop = Population::from_units(units, 1, 1).unwrap();
        let v = pairwise_variance(
            &pop,
            &SamplingSpec::Full,
            &AssignmentSpec::Iid {
                mu: BigRational::ratio(1, 2),
            },
        )
        .unwrap();
        // (E[N]/n²)·(1 + 1) = (2/4)·2
        assert_eq!(v, BigRational::from_count(1));
    }

    #[test]
    fn unrelated_units_reduce_to_diagonal() {
        let units: Vec<Unit<f64>> = (0..5)
            .map(|i| Unit {
                id: i,
                g: i as u32,
                h: i as u32,
                y1: i as f64 * 0.7,
                y0: (i as f64).sin(),
            })
            .collect();
        let pop = Population::from_units(units, 5, 5).unwrap();
        let s = SamplingSpec::OneWayG { q: 0.4, p: 0.8 };
        let a = AssignmentSpec::OneWayH(ClusterProbability::Uniform);
        let full = pairwise_variance(&pop, &s, &a).unwrap();
        let (u1, u0) = pop.potential_residuals();
        let diag: f64 = (0..5)
            .map(|i| {
                xi_cross(
                    &s,
                    &a,
                    PairRelation::SameIntersection,
                    true,
                    (&u1[i], &u0[i]),
                    (&u1[i], &u0[i]),
                )
            })
            .sum();
        let expected = 5.0 * s.mean() / 25.0 * diag;
        assert!((full - expected).abs() < 1e-12);
    }

    #[test]
    fn random_instances_agree() {
        let mut r = rng(99);
        for k in 0..32 {
            let inst = RandomInstance::generate(k, 30, &mut r);
            let e = true_variance(&inst.population, &inst.sampling, &inst.assignment).unwrap();
            let o = pairwise_variance(&inst.population, &inst.sampling, &inst.assignment).unwrap();
            assert!((e - o).abs() <= 1e-10 * e.abs().max(1.0), "{k}: {e} vs {o}");
        }
    }

    #[test]
    fn size_guard() {
        let pop = build_balanced::<f64>(80, 80, 1).unwrap();
        assert_eq!(
            pairwise_variance(&pop, &SamplingSpec::Full, &AssignmentSpec::Iid { mu: 0.5 }),
            Err(Error::SizeGuard {
                n: 6400,
                limit: PAIRWISE_LIMIT
            })
        );
    }

    #[test]
    fn staircase_constant_small_by_enumeration() {
        let pop = assign_effects(
            build_staircase::<f64>(4, 1).unwrap(),
            &EffectScheme::new(EffectVariant::Oddeven),
            0,
        )
        .unwrap();
        let dev = pop.effect_deviations();
        let brute = pairwise_neighbor_sum(&pop, &dev).unwrap() / pop.n() as f64;
        assert_eq!(brute, -0.5);
        assert_eq!(staircase_constant(&pop), -0.5);
    }

    #[test]
    fn staircase_constant_exact_for_several_masses() {
        for m in [4, 6, 10] {
            for m0 in [1, 3, 25] {
                let pop = build_staircase::<BigRational>(m, m0).unwrap();
                let pop = pop.with_outcomes(|_, u| {
                    let t = if u.g % 2 == 1 && u.h % 2 == 1 { 1 } else { -1 };
                    (
                        BigRational::from_integer(t.into()),
                        BigRational::from_count(0),
                    )
                });
                assert_eq!(
                    staircase_constant(&pop),
                    BigRational::ratio(-1, 2),
                    "m={m} m0={m0}"
                );
            }
        }
    }

    #[test]
    fn staircase_constant_zero_for_constant_effects() {
        let pop = assign_effects(
            build_balanced::<f64>(6, 7, 2).unwrap(),
            &EffectScheme::new(EffectVariant::Constant),
            3,
        )
        .unwrap();
        assert!(staircase_constant(&pop).abs() < 1e-12);
    }

    #[test]
    fn gap_identity_by_enumeration() {
        let pop = assign_effects(
            build_balanced::<f64>(5, 6, 2).unwrap(),
            &EffectScheme::new(EffectVariant::Gvar),
            21,
        )
        .unwrap();
        let s = SamplingSpec::MultiwayAnd {
            a: 0.5,
            b: 0.5,
            p: 0.8,
        };
        let a = AssignmentSpec::MultiwayAnd {
            pa: FRAC_1_SQRT_2,
            pb: FRAC_1_SQRT_2,
        };
        let t = limit_variances(&pop, &s, &a).unwrap();
        let dev = pop.effect_deviations();
        let n = pop.n() as f64;
        let direct = n * s.mean() / (n * n) * pairwise_neighbor_sum(&pop, &dev).unwrap();
        assert!((direct - t.gaps.cgm).abs() <= 1e-8 * direct.abs().max(1e-12));
    }

    #[test]
    fn moment_checks() {
        let mut r = rng(7);
        let uniform =
            MechanismSpec::Assignment(AssignmentSpec::OneWayH(ClusterProbability::Uniform));
        let rep = mc_moment_check(&uniform, PairRelation::SameHOnly, false, 200_000, &mut r);
        assert!((rep.entries[0].expected - 1.0 / 3.0).abs() < 1e-15);
        assert!(rep.max_abs_z() < 4.0, "{rep:?}");

        let and = MechanismSpec::Assignment(AssignmentSpec::MultiwayAnd {
            pa: FRAC_1_SQRT_2,
            pb: FRAC_1_SQRT_2,
        });
        let rep = mc_moment_check(&and, PairRelation::SameIntersection, false, 200_000, &mut r);
        assert!((rep.entries[0].expected - 0.5).abs() < 1e-15);
        assert!(rep.max_abs_z() < 4.0, "{rep:?}");

        let full = MechanismSpec::Sampling(SamplingSpec::Full);
        for rel in PairRelation::ALL {
            let rep = mc_moment_check(&full, rel, false, 1000, &mut r);
            assert_eq!(rep.entries[0].empirical, 1.0);
            assert_eq!(rep.entries[0].z, 0.0);
        }
    }

    #[test]
    fn estimator_variance_all_degenerate() {
        let pop = assign_effects(
            build_balanced::<f64>(5, 5, 1).unwrap(),
            &EffectScheme::new(EffectVariant::Same),
            1,
        )
        .unwrap();
        let err = mc_estimator_variance(
            &pop,
            &SamplingSpec::Full,
            &AssignmentSpec::Iid { mu: 1.0 },
            50,
            3,
        )
        .unwrap_err();
        assert!(matches!(err, Error::OracleFailure(_)));
    }

    #[test]
    fn estimator_variance_constant_effects() {
        let scheme = EffectScheme::new(EffectVariant::Constant);
        let pop = assign_effects(build_balanced::<f64>(40, 40, 1).unwrap(), &scheme, 5).unwrap();
        let rep = mc_estimator_variance(
            &pop,
            &SamplingSpec::Full,
            &AssignmentSpec::Iid { mu: 0.5 },
            3000,
            11,
        )
        .unwrap();
        assert!((0.9..=1.1).contains(&rep.ratio), "{rep:?}");
    }
}
