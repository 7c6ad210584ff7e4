//! Sampling (`R`) and assignment (`W`) mechanisms, their random draws and
//! the exact pairwise cross moments the variance engine consumes.

use rand::distr::{Bernoulli, Distribution};
use rand::Rng;

use crate::error::{Error, Result};
use crate::population::Population;
use crate::scalar::Scalar;

/// How units enter the sample.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplingSpec<T> {
    /// Every unit observed.
    Full,
    /// Independent unit-level Bernoulli(p).
    Iid { p: T },
    /// G clusters sampled with probability `q`, then units with probability `p`.
    OneWayG { q: T, p: T },
    /// Intersection open when both the G gate (prob. `a`) and H gate (prob. `b`)
    /// are open; units inside an open intersection kept with probability `p`.
    MultiwayAnd { a: T, b: T, p: T },
}

/// Distribution of the H-cluster assignment probability `B_h`.
#[derive(Debug, Clone, PartialEq)]
pub enum ClusterProbability<T> {
    Uniform,
    TwoPoint {
        values: [T; 2],
        probabilities: [T; 2],
    },
}

/// How treatment is assigned.
#[derive(Debug, Clone, PartialEq)]
pub enum AssignmentSpec<T> {
    Iid {
        mu: T,
    },
    OneWayH(ClusterProbability<T>),
    /// `W = A_g · B_h` with binary `A_g ~ Be(pa)`, `B_h ~ Be(pb)`.
    MultiwayAnd {
        pa: T,
        pb: T,
    },
}

/// Cluster relation between two units. The `i = j` case is
/// [`PairRelation::SameIntersection`] with the diagonal flag set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairRelation {
    SameIntersection,
    SameGOnly,
    SameHOnly,
    Unrelated,
}

impl PairRelation {
    pub const ALL: [PairRelation; 4] = [
        PairRelation::SameIntersection,
        PairRelation::SameGOnly,
        PairRelation::SameHOnly,
        PairRelation::Unrelated,
    ];

    pub fn classify(gi: u32, hi: u32, gj: u32, hj: u32) -> Self {
        match (gi == gj, hi == hj) {
            (true, true) => PairRelation::SameIntersection,
            (true, false) => PairRelation::SameGOnly,
            (false, true) => PairRelation::SameHOnly,
            (false, false) => PairRelation::Unrelated,
        }
    }

    pub fn same_g(self) -> bool {
        matches!(
            self,
            PairRelation::SameIntersection | PairRelation::SameGOnly
        )
    }

    pub fn same_h(self) -> bool {
        matches!(
            self,
            PairRelation::SameIntersection | PairRelation::SameHOnly
        )
    }
}

/// Treatment arm selector for `W̃ = W` or `W̃ = 1 − W`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arm {
    Treated,
    Untreated,
}

/// One realization of the sampling and assignment indicators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Draw {
    pub r: Vec<bool>,
    pub w: Vec<bool>,
}

fn check_probability<T: Scalar>(name: &str, x: &T) -> Result<()> {
    if *x < T::zero() || *x > T::one() {
        return Err(Error::InvalidParameter(format!(
            "{name} must lie in [0, 1], got {x:?}"
        )));
    }
    Ok(())
}

fn bernoulli(p: f64) -> Bernoulli {
    Bernoulli::new(p.clamp(0.0, 1.0)).expect("probability clamped to [0, 1]")
}

impl<T: Scalar> SamplingSpec<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            SamplingSpec::Full => Ok(()),
            SamplingSpec::Iid { p } => check_probability("sampling.p", p),
            SamplingSpec::OneWayG { q, p } => {
                check_probability("sampling.q", q)?;
                check_probability("sampling.p", p)
            }
            SamplingSpec::MultiwayAnd { a, b, p } => {
                check_probability("sampling.a", a)?;
                check_probability("sampling.b", b)?;
                check_probability("sampling.p", p)
            }
        }
    }

    /// Marginal `E[R]`.
    pub fn mean(&self) -> T {
        match self {
            SamplingSpec::Full => T::one(),
            SamplingSpec::Iid { p } => p.clone(),
            SamplingSpec::OneWayG { q, p } => q.clone() * p.clone(),
            SamplingSpec::MultiwayAnd { a, b, p } => a.clone() * b.clone() * p.clone(),
        }
    }

    /// `E[R_i R_j]` for a pair with relation `rel` (or `E[R_i²]` on the diagonal).
    pub fn cross_moment(&self, rel: PairRelation, diagonal: bool) -> T {
        if diagonal {
            return self.mean();
        }
        match self {
            SamplingSpec::Full => T::one(),
            SamplingSpec::Iid { p } => p.square(),
            SamplingSpec::OneWayG { q, p } => {
                if rel.same_g() {
                    q.clone() * p.square()
                } else {
                    q.square() * p.square()
                }
            }
            SamplingSpec::MultiwayAnd { a, b, p } => {
                let ga = if rel.same_g() { a.clone() } else { a.square() };
                let gb = if rel.same_h() { b.clone() } else { b.square() };
                ga * gb * p.square()
            }
        }
    }

    pub fn map<S>(&self, f: impl Fn(&T) -> S) -> SamplingSpec<S> {
        match self {
            SamplingSpec::Full => SamplingSpec::Full,
            SamplingSpec::Iid { p } => SamplingSpec::Iid { p: f(p) },
            SamplingSpec::OneWayG { q, p } => SamplingSpec::OneWayG { q: f(q), p: f(p) },
            SamplingSpec::MultiwayAnd { a, b, p } => SamplingSpec::MultiwayAnd {
                a: f(a),
                b: f(b),
                p: f(p),
            },
        }
    }
}

impl<T: Scalar> ClusterProbability<T> {
    pub fn validate(&self) -> Result<()> {
        if let ClusterProbability::TwoPoint {
            values,
            probabilities,
        } = self
        {
            for v in values {
                check_probability("assignment.values", v)?;
            }
            for p in probabilities {
                check_probability("assignment.probabilities", p)?;
            }
            let total = probabilities[0].clone() + probabilities[1].clone();
            if (total.to_real() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "two-point probabilities must sum to 1, got {total:?}"
                )));
            }
        }
        Ok(())
    }

    /// `(E[B], E[B²])`.
    pub fn moments(&self) -> (T, T) {
        match self {
            ClusterProbability::Uniform => (T::ratio(1, 2), T::ratio(1, 3)),
            ClusterProbability::TwoPoint {
                values,
                probabilities,
            } => {
                let m1 = probabilities[0].clone() * values[0].clone()
                    + probabilities[1].clone() * values[1].clone();
                let m2 = probabilities[0].clone() * values[0].square()
                    + probabilities[1].clone() * values[1].square();
                (m1, m2)
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ClusterProbability::Uniform => rng.random::<f64>(),
            ClusterProbability::TwoPoint {
                values,
                probabilities,
            } => {
                if rng.random::<f64>() < probabilities[0].to_real() {
                    values[0].to_real()
                } else {
                    values[1].to_real()
                }
            }
        }
    }
}

impl<T: Scalar> AssignmentSpec<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            AssignmentSpec::Iid { mu } => check_probability("assignment.mu", mu),
            AssignmentSpec::OneWayH(d) => d.validate(),
            AssignmentSpec::MultiwayAnd { pa, pb } => {
                check_probability("assignment.pa", pa)?;
                check_probability("assignment.pb", pb)
            }
        }
    }

    /// Marginal `E[W]`.
    pub fn mean(&self) -> T {
        match self {
            AssignmentSpec::Iid { mu } => mu.clone(),
            AssignmentSpec::OneWayH(d) => d.moments().0,
            AssignmentSpec::MultiwayAnd { pa, pb } => pa.clone() * pb.clone(),
        }
    }

    /// `E[W_i W_j]` for distinct units with relation `rel`.
    fn joint_treated(&self, rel: PairRelation) -> T {
        match self {
            AssignmentSpec::Iid { mu } => mu.square(),
            AssignmentSpec::OneWayH(d) => {
                let (m1, m2) = d.moments();
                if rel.same_h() {
                    m2
                } else {
                    m1.square()
                }
            }
            AssignmentSpec::MultiwayAnd { pa, pb } => {
                let ga = if rel.same_g() {
                    pa.clone()
                } else {
                    pa.square()
                };
                let gb = if rel.same_h() {
                    pb.clone()
                } else {
                    pb.square()
                };
                ga * gb
            }
        }
    }

    /// `E[W̃_i W̃_j]` where each `W̃` is `W` or `1 − W` according to `arms`.
    pub fn cross_moment(&self, rel: PairRelation, diagonal: bool, arms: (Arm, Arm)) -> T {
        let mu = self.mean();
        let both = if diagonal {
            mu.clone()
        } else {
            self.joint_treated(rel)
        };
        match arms {
            (Arm::Treated, Arm::Treated) => both,
            (Arm::Treated, Arm::Untreated) | (Arm::Untreated, Arm::Treated) => mu - both,
            (Arm::Untreated, Arm::Untreated) => T::one() - mu.clone() - mu + both,
        }
    }

    pub fn map<S>(&self, f: impl Fn(&T) -> S) -> AssignmentSpec<S> {
        match self {
            AssignmentSpec::Iid { mu } => AssignmentSpec::Iid { mu: f(mu) },
            AssignmentSpec::OneWayH(ClusterProbability::Uniform) => {
                AssignmentSpec::OneWayH(ClusterProbability::Uniform)
            }
            AssignmentSpec::OneWayH(ClusterProbability::TwoPoint {
                values,
                probabilities,
            }) => AssignmentSpec::OneWayH(ClusterProbability::TwoPoint {
                values: [f(&values[0]), f(&values[1])],
                probabilities: [f(&probabilities[0]), f(&probabilities[1])],
            }),
            AssignmentSpec::MultiwayAnd { pa, pb } => AssignmentSpec::MultiwayAnd {
                pa: f(pa),
                pb: f(pb),
            },
        }
    }
}

pub fn cross_moment_r<T: Scalar>(spec: &SamplingSpec<T>, rel: PairRelation, diagonal: bool) -> T {
    spec.cross_moment(rel, diagonal)
}

pub fn cross_moment_w<T: Scalar>(
    spec: &AssignmentSpec<T>,
    rel: PairRelation,
    diagonal: bool,
    arms: (Arm, Arm),
) -> T {
    spec.cross_moment(rel, diagonal, arms)
}

/// Draws the sampling indicator for every unit.
pub fn draw_sampling<T: Scalar, S: Scalar, R: Rng + ?Sized>(
    pop: &Population<T>,
    spec: &SamplingSpec<S>,
    rng: &mut R,
) -> Vec<bool> {
    let units = pop.units();
    match spec {
        SamplingSpec::Full => vec![true; units.len()],
        SamplingSpec::Iid { p } => {
            let unit = bernoulli(p.to_real());
            units.iter().map(|_| unit.sample(rng)).collect()
        }
        SamplingSpec::OneWayG { q, p } => {
            let gate = bernoulli(q.to_real());
            let open: Vec<bool> = (0..pop.n_g()).map(|_| gate.sample(rng)).collect();
            let unit = bernoulli(p.to_real());
            units
                .iter()
                .map(|u| open[u.g as usize] && unit.sample(rng))
                .collect()
        }
        SamplingSpec::MultiwayAnd { a, b, p } => {
            let gate_g = bernoulli(a.to_real());
            let gate_h = bernoulli(b.to_real());
            let open_g: Vec<bool> = (0..pop.n_g()).map(|_| gate_g.sample(rng)).collect();
            let open_h: Vec<bool> = (0..pop.n_h()).map(|_| gate_h.sample(rng)).collect();
            let unit = bernoulli(p.to_real());
            units
                .iter()
                .map(|u| open_g[u.g as usize] && open_h[u.h as usize] && unit.sample(rng))
                .collect()
        }
    }
}

/// Draws the treatment indicator for every unit, sampled or not.
pub fn draw_assignment<T: Scalar, S: Scalar, R: Rng + ?Sized>(
    pop: &Population<T>,
    spec: &AssignmentSpec<S>,
    rng: &mut R,
) -> Vec<bool> {
    let units = pop.units();
    match spec {
        AssignmentSpec::Iid { mu } => {
            let unit = bernoulli(mu.to_real());
            units.iter().map(|_| unit.sample(rng)).collect()
        }
        AssignmentSpec::OneWayH(dist) => {
            let prob: Vec<f64> = (0..pop.n_h()).map(|_| dist.sample(rng)).collect();
            units
                .iter()
                .map(|u| rng.random::<f64>() < prob[u.h as usize])
                .collect()
        }
        AssignmentSpec::MultiwayAnd { pa, pb } => {
            let ga = bernoulli(pa.to_real());
            let gb = bernoulli(pb.to_real());
            let a: Vec<bool> = (0..pop.n_g()).map(|_| ga.sample(rng)).collect();
            let b: Vec<bool> = (0..pop.n_h()).map(|_| gb.sample(rng)).collect();
            units
                .iter()
                .map(|u| a[u.g as usize] && b[u.h as usize])
                .collect()
        }
    }
}

/// Sampling first, then assignment, from the same stream.
pub fn draw<T: Scalar, S: Scalar, R: Rng + ?Sized>(
    pop: &Population<T>,
    sampling: &SamplingSpec<S>,
    assignment: &AssignmentSpec<S>,
    rng: &mut R,
) -> Draw {
    let r = draw_sampling(pop, sampling, rng);
    let w = draw_assignment(pop, assignment, rng);
    Draw { r, w }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::build_balanced;
    use num_rational::BigRational;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_1_SQRT_2;

    const ALL_ARMS: [(Arm, Arm); 4] = [
        (Arm::Treated, Arm::Treated),
        (Arm::Treated, Arm::Untreated),
        (Arm::Untreated, Arm::Treated),
        (Arm::Untreated, Arm::Untreated),
    ];

    #[test]
    fn classify_is_exhaustive() {
        assert_eq!(
            PairRelation::classify(1, 2, 1, 2),
            PairRelation::SameIntersection
        );
        assert_eq!(PairRelation::classify(1, 2, 1, 3), PairRelation::SameGOnly);
        assert_eq!(PairRelation::classify(1, 2, 0, 2), PairRelation::SameHOnly);
        assert_eq!(PairRelation::classify(1, 2, 0, 3), PairRelation::Unrelated);
    }

    #[test]
    fn full_sampling_draws_everyone() {
        let pop = build_balanced::<f64>(3, 3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = draw_sampling(&pop, &SamplingSpec::<f64>::Full, &mut rng);
        assert!(r.iter().all(|&x| x));
    }

    #[test]
    fn one_way_g_moments() {
        let s = SamplingSpec::<f64>::OneWayG { q: 0.05, p: 1.0 };
        assert_eq!(s.mean(), 0.05);
        assert!((cross_moment_r(&s, PairRelation::SameGOnly, false) - 0.05).abs() < 1e-15);
        assert!((cross_moment_r(&s, PairRelation::Unrelated, false) - 0.0025).abs() < 1e-15);
        assert!((cross_moment_r(&s, PairRelation::SameHOnly, false) - 0.0025).abs() < 1e-15);
    }

    #[test]
    fn one_way_g_sampled_clusters_fully_observed() {
        let pop = build_balanced::<f64>(200, 5, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r = draw_sampling(&pop, &SamplingSpec::OneWayG { q: 0.3, p: 1.0 }, &mut rng);
        for g in 0..200u32 {
            let flags: Vec<bool> = pop
                .units()
                .iter()
                .zip(&r)
                .filter(|(u, _)| u.g == g)
                .map(|(_, &x)| x)
                .collect();
            assert!(flags.iter().all(|&x| x) || flags.iter().all(|&x| !x));
        }
    }

    #[test]
    fn multiway_sampling_moments() {
        let s = SamplingSpec::MultiwayAnd {
            a: 0.25,
            b: 0.25,
            p: 0.25,
        };
        assert_eq!(s.mean(), 0.015625);
        assert_eq!(
            cross_moment_r(&s, PairRelation::SameGOnly, false),
            0.0009765625
        );
        assert_eq!(
            cross_moment_r(&s, PairRelation::SameIntersection, true),
            0.015625
        );
    }

    #[test]
    fn full_moments_are_one() {
        for rel in PairRelation::ALL {
            for diag in [false, true] {
                assert_eq!(cross_moment_r(&SamplingSpec::<f64>::Full, rel, diag), 1.0);
            }
        }
    }

    #[test]
    fn uniform_hway_moments_exact() {
        let a: AssignmentSpec<BigRational> = AssignmentSpec::OneWayH(ClusterProbability::Uniform);
        let same = PairRelation::SameHOnly;
        assert_eq!(
            cross_moment_w(&a, same, false, (Arm::Treated, Arm::Treated)),
            BigRational::ratio(1, 3)
        );
        assert_eq!(
            cross_moment_w(&a, same, false, (Arm::Treated, Arm::Untreated)),
            BigRational::ratio(1, 6)
        );
        assert_eq!(
            cross_moment_w(&a, same, false, (Arm::Untreated, Arm::Untreated)),
            BigRational::ratio(1, 3)
        );
        assert_eq!(
            cross_moment_w(
                &a,
                PairRelation::SameGOnly,
                false,
                (Arm::Treated, Arm::Treated)
            ),
            BigRational::ratio(1, 4)
        );
    }

    #[test]
    fn and_assignment_moments() {
        let a = AssignmentSpec::MultiwayAnd {
            pa: FRAC_1_SQRT_2,
            pb: FRAC_1_SQRT_2,
        };
        assert!((a.mean() - 0.5).abs() < 1e-15);
        let v = cross_moment_w(
            &a,
            PairRelation::SameGOnly,
            false,
            (Arm::Treated, Arm::Treated),
        );
        assert!((v - 0.353_553_390_593_273_8).abs() < 1e-12);
        let v = cross_moment_w(
            &a,
            PairRelation::SameIntersection,
            false,
            (Arm::Treated, Arm::Treated),
        );
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn iid_diagonal_mixed_is_zero() {
        let a = AssignmentSpec::Iid { mu: 0.5 };
        assert_eq!(
            cross_moment_w(
                &a,
                PairRelation::SameIntersection,
                true,
                (Arm::Treated, Arm::Untreated)
            ),
            0.0
        );
    }

    #[test]
    fn decomposition_holds_exactly() {
        let specs: Vec<AssignmentSpec<BigRational>> = vec![
            AssignmentSpec::Iid {
                mu: BigRational::ratio(2, 5),
            },
            AssignmentSpec::OneWayH(ClusterProbability::Uniform),
            AssignmentSpec::OneWayH(ClusterProbability::TwoPoint {
                values: [BigRational::ratio(1, 5), BigRational::ratio(9, 10)],
                probabilities: [BigRational::ratio(1, 3), BigRational::ratio(2, 3)],
            }),
            AssignmentSpec::MultiwayAnd {
                pa: BigRational::ratio(3, 4),
                pb: BigRational::ratio(2, 3),
            },
        ];
        for s in &specs {
            for rel in PairRelation::ALL {
                for diag in [false, true] {
                    let tt = cross_moment_w(s, rel, diag, (Arm::Treated, Arm::Treated));
                    let tu = cross_moment_w(s, rel, diag, (Arm::Treated, Arm::Untreated));
                    assert_eq!(tt + tu, s.mean());
                    let total: BigRational = ALL_ARMS
                        .iter()
                        .map(|&arms| cross_moment_w(s, rel, diag, arms))
                        .fold(BigRational::from_count(0), |a, b| a + b);
                    assert_eq!(total, BigRational::from_count(1));
                }
            }
        }
    }

    #[test]
    fn validation_rejects_out_of_range() {
        assert!(SamplingSpec::OneWayG { q: 1.5, p: 1.0 }.validate().is_err());
        assert!(AssignmentSpec::Iid { mu: -0.1 }.validate().is_err());
        assert!(AssignmentSpec::OneWayH(ClusterProbability::TwoPoint {
            values: [0.1, 0.9],
            probabilities: [0.5, 0.6],
        })
        .validate()
        .is_err());
        assert!(SamplingSpec::MultiwayAnd {
            a: 0.25,
            b: 0.25,
            p: 0.25
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn marginal_frequencies_match() {
        let pop = build_balanced::<f64>(100, 100, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = SamplingSpec::MultiwayAnd {
            a: 0.25,
            b: 0.25,
            p: 0.25,
        };
        let a = AssignmentSpec::MultiwayAnd {
            pa: FRAC_1_SQRT_2,
            pb: FRAC_1_SQRT_2,
        };
        let reps = 400;
        let (mut nr, mut nw) = (0usize, 0usize);
        for _ in 0..reps {
            let d = draw(&pop, &s, &a, &mut rng);
            nr += d.r.iter().filter(|&&x| x).count();
            nw += d.w.iter().filter(|&&x| x).count();
        }
        let total = (reps * pop.n()) as f64;
        // cluster gates make unit draws dependent, hence the wide bounds
        assert!((nr as f64 / total - 0.015625).abs() < 0.003);
        assert!((nw as f64 / total - 0.5).abs() < 0.02);
    }
}
