//! Coverage experiments: a population is built once per design, then every
//! replication draws `(R, W)`, fits, estimates the five variances and checks
//! whether each confidence interval covers the population `τ`.

use std::f64::consts::FRAC_1_SQRT_2;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimator::fit;
use crate::mechanisms::{draw, AssignmentSpec, ClusterProbability, Draw, SamplingSpec};
use crate::population::{
    assign_effects, build_balanced, build_staircase, thin_population, EffectScheme, EffectVariant,
    Population,
};
use crate::scalar::CompensatedSum;
use crate::variance::{estimate_variances, observation_rates, VarianceSet};

/// Stream reserved for the effect draws of a design population.
const EFFECT_STREAM: u64 = u64::MAX;
/// Stream reserved for the thinning draw of a design population.
const THINNING_STREAM: u64 = u64::MAX - 1;

pub const DEFAULT_NSIM: usize = 5000;
pub const DEFAULT_LEVEL: f64 = 0.95;
/// Fraction kept when a design observes every unit.
pub const REGISTRY_THINNING: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    Balanced {
        n_g: usize,
        n_h: usize,
        per_cell: usize,
    },
    Staircase {
        m: usize,
        m0: usize,
    },
}

impl Geometry {
    pub fn build(&self) -> Result<Population<f64>> {
        match *self {
            Geometry::Balanced { n_g, n_h, per_cell } => build_balanced(n_g, n_h, per_cell),
            Geometry::Staircase { m, m0 } => build_staircase(m, m0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub name: String,
    pub geometry: Geometry,
    pub effects: EffectScheme,
    pub sampling: SamplingSpec<f64>,
    pub assignment: AssignmentSpec<f64>,
    /// Fraction of the generated population kept as the design population.
    pub thinning: Option<f64>,
    pub nsim: usize,
    pub level: f64,
}

impl Design {
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::InvalidParameter("design name is empty".into()));
        }
        self.effects.validate()?;
        self.sampling.validate()?;
        self.assignment.validate()?;
        observation_rates(&self.sampling, &self.assignment)?;
        if let Some(f) = self.thinning {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "thinning fraction must lie in (0, 1], got {f}"
                )));
            }
        }
        if self.nsim == 0 {
            return Err(Error::InvalidParameter("nsim must be positive".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "confidence level must lie in (0, 1), got {}",
                self.level
            )));
        }
        match self.geometry {
            Geometry::Balanced { n_g, n_h, per_cell } if n_g == 0 || n_h == 0 || per_cell == 0 => {
                Err(Error::Geometry(
                    "balanced dimensions must be positive".into(),
                ))
            }
            Geometry::Staircase { m, m0 } if m < 4 || m % 2 == 1 || m0 == 0 => Err(
                Error::Geometry("staircase needs even m >= 4 and m0 >= 1".into()),
            ),
            _ => Ok(()),
        }
    }

    /// One-line parameter summary.
    pub fn describe(&self) -> String {
        let geometry = match self.geometry {
            Geometry::Balanced { n_g, n_h, per_cell } => {
                format!("balanced({n_g}x{n_h}x{per_cell})")
            }
            Geometry::Staircase { m, m0 } => format!("staircase(m={m}, m0={m0})"),
        };
        let sampling = match &self.sampling {
            SamplingSpec::Full => "q=1 p=1".to_string(),
            SamplingSpec::Iid { p } => format!("iid p={p}"),
            SamplingSpec::OneWayG { q, p } => format!("q={q} p={p}"),
            SamplingSpec::MultiwayAnd { a, b, p } => format!("multiway a={a} b={b} p={p}"),
        };
        let assignment = match &self.assignment {
            AssignmentSpec::Iid { mu } if *mu == 0.5 => "none".to_string(),
            AssignmentSpec::Iid { mu } => format!("iid mu={mu}"),
            AssignmentSpec::OneWayH(ClusterProbability::Uniform) => "Hway".to_string(),
            AssignmentSpec::OneWayH(ClusterProbability::TwoPoint {
                values,
                probabilities,
            }) => {
                format!("Hway two-point {values:?} w.p. {probabilities:?}")
            }
            AssignmentSpec::MultiwayAnd { pa, pb } => format!("AND pa={pa:.4} pb={pb:.4}"),
        };
        let thinning = match self.thinning {
            Some(f) => format!(" thin={f}"),
            None => String::new(),
        };
        format!(
            "{} {geometry} {} {sampling} {assignment}{thinning}",
            self.name,
            self.effects.variant.name()
        )
    }
}

/// The five variance estimators compared in a design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    Ehw,
    Lzg,
    Lzh,
    Cgm,
    Cgm2,
}

impl Estimator {
    pub const ALL: [Estimator; 5] = [
        Estimator::Ehw,
        Estimator::Lzg,
        Estimator::Lzh,
        Estimator::Cgm,
        Estimator::Cgm2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Ehw => "EHW",
            Estimator::Lzg => "LZG",
            Estimator::Lzh => "LZH",
            Estimator::Cgm => "CGM",
            Estimator::Cgm2 => "CGM2",
        }
    }

    pub fn pick(self, v: &VarianceSet<f64>) -> f64 {
        match self {
            Estimator::Ehw => v.ehw,
            Estimator::Lzg => v.lzg,
            Estimator::Lzh => v.lzh,
            Estimator::Cgm => v.cgm,
            Estimator::Cgm2 => v.cgm2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignResult {
    pub design: String,
    /// Coverage frequency per estimator, in [`Estimator::ALL`] order.
    pub coverage: [f64; 5],
    /// Mean of `V̂ / N`, the implied variance of `τ̂`, per estimator.
    pub mean_variance: [f64; 5],
    pub degenerate: usize,
    pub clamped: usize,
    pub used: usize,
    pub nsim: usize,
    pub seed: u64,
    pub tau: f64,
    pub n: usize,
}

impl DesignResult {
    pub fn coverage_of(&self, e: Estimator) -> f64 {
        self.coverage[e as usize]
    }

    pub fn mean_variance_of(&self, e: Estimator) -> f64 {
        self.mean_variance[e as usize]
    }
}

/// `z_{(1 + level) / 2}`.
pub fn z_value(level: f64) -> f64 {
    Normal::standard().inverse_cdf((1.0 + level) / 2.0)
}

/// `τ̂ ± z √(v̂ / N)`.
pub fn confidence_interval(tau_hat: f64, v_hat: f64, n_obs: usize, level: f64) -> (f64, f64) {
    let half = z_value(level) * (v_hat.max(0.0) / n_obs as f64).sqrt();
    (tau_hat - half, tau_hat + half)
}

/// Seed for an auxiliary generator carved from a reserved stream of `master`.
pub fn derived_seed(master: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Generator for replication `s`: stream `s` of the master seed.
pub fn replication_rng(master: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(s);
    rng
}

/// Source of `(R, W)` realizations, one per replication index.
pub trait DrawSource: Sync {
    fn draw(&self, pop: &Population<f64>, replication: u64) -> Draw;
}

/// Draws from a design's mechanisms on per-replication streams.
#[derive(Debug, Clone)]
pub struct MechanismDraws<'a> {
    pub sampling: &'a SamplingSpec<f64>,
    pub assignment: &'a AssignmentSpec<f64>,
    pub master_seed: u64,
}

impl DrawSource for MechanismDraws<'_> {
    fn draw(&self, pop: &Population<f64>, replication: u64) -> Draw {
        let mut rng = replication_rng(self.master_seed, replication);
        draw(pop, self.sampling, self.assignment, &mut rng)
    }
}

/// Builds the fixed design population: geometry, effects, then thinning.
pub fn build_design_population(design: &Design, master_seed: u64) -> Result<Population<f64>> {
    let pop = design.geometry.build()?;
    let pop = assign_effects(
        pop,
        &design.effects,
        derived_seed(master_seed, EFFECT_STREAM),
    )?;
    match design.thinning {
        Some(f) if f < 1.0 => thin_population(&pop, f, derived_seed(master_seed, THINNING_STREAM)),
        _ => Ok(pop),
    }
}

struct Replication {
    covered: [bool; 5],
    variance: [f64; 5],
    clamped: bool,
}

fn replicate(
    pop: &Population<f64>,
    source: &dyn DrawSource,
    s: u64,
    tau: f64,
    z: f64,
) -> Option<Replication> {
    let d = source.draw(pop, s);
    let f = fit(pop, &d).ok()?;
    let v = estimate_variances(&f, pop);
    let n_obs = f.n_obs as f64;
    let mut covered = [false; 5];
    let mut variance = [0.0; 5];
    for e in Estimator::ALL {
        let v_hat = e.pick(&v).max(0.0);
        let half = z * (v_hat / n_obs).sqrt();
        covered[e as usize] = f.tau_hat - half <= tau && tau <= f.tau_hat + half;
        variance[e as usize] = v_hat / n_obs;
    }
    Some(Replication {
        covered,
        variance,
        clamped: v.cgm_clamped,
    })
}

/// Runs `nsim` replications against a fixed population. Results are
/// collected in replication order and reduced sequentially, so the output is
/// independent of `workers`.
pub fn run_replications(
    name: &str,
    pop: &Population<f64>,
    source: &dyn DrawSource,
    nsim: usize,
    level: f64,
    workers: usize,
    seed: u64,
) -> Result<DesignResult> {
    let tau = pop.tau();
    let z = z_value(level);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    let reps: Vec<Option<Replication>> = pool.install(|| {
        (0..nsim as u64)
            .into_par_iter()
            .map(|s| replicate(pop, source, s, tau, z))
            .collect()
    });

    let mut hits = [0usize; 5];
    let mut sums: [CompensatedSum; 5] = Default::default();
    let (mut used, mut clamped) = (0usize, 0usize);
    for r in reps.iter().flatten() {
        used += 1;
        clamped += r.clamped as usize;
        for k in 0..5 {
            hits[k] += r.covered[k] as usize;
            sums[k].add(r.variance[k]);
        }
    }
    let degenerate = nsim - used;
    if 2 * degenerate > nsim || used == 0 {
        return Err(Error::DesignFailure {
            design: name.to_string(),
            degenerate,
            nsim,
        });
    }
    Ok(DesignResult {
        design: name.to_string(),
        coverage: hits.map(|h| h as f64 / used as f64),
        mean_variance: sums.map(|s| s.value() / used as f64),
        degenerate,
        clamped,
        used,
        nsim,
        seed,
        tau,
        n: pop.n(),
    })
}

pub fn run_design(design: &Design, master_seed: u64, workers: usize) -> Result<DesignResult> {
    design.validate()?;
    let pop = build_design_population(design, master_seed)?;
    let source = MechanismDraws {
        sampling: &design.sampling,
        assignment: &design.assignment,
        master_seed,
    };
    run_replications(
        &design.name,
        &pop,
        &source,
        design.nsim,
        design.level,
        workers,
        master_seed,
    )
}

/// The eight designs of the coverage study.
pub fn design_registry() -> Vec<Design> {
    let balanced = Geometry::Balanced {
        n_g: 1000,
        n_h: 1000,
        per_cell: 1,
    };
    let and = AssignmentSpec::MultiwayAnd {
        pa: FRAC_1_SQRT_2,
        pb: FRAC_1_SQRT_2,
    };
    let none = AssignmentSpec::Iid { mu: 0.5 };
    let hway = AssignmentSpec::OneWayH(ClusterProbability::Uniform);
    let multiway = SamplingSpec::MultiwayAnd {
        a: 0.25,
        b: 0.25,
        p: 0.25,
    };
    let row = |name: &str,
               geometry,
               variant,
               sampling: SamplingSpec<f64>,
               assignment: &AssignmentSpec<f64>| {
        let thinning = (sampling == SamplingSpec::Full).then_some(REGISTRY_THINNING);
        Design {
            name: name.to_string(),
            geometry,
            effects: EffectScheme::new(variant),
            sampling,
            assignment: assignment.clone(),
            thinning,
            nsim: DEFAULT_NSIM,
            level: DEFAULT_LEVEL,
        }
    };
    vec![
        row(
            "D1",
            balanced,
            EffectVariant::Same,
            SamplingSpec::Full,
            &and,
        ),
        row(
            "D2",
            balanced,
            EffectVariant::Hvar,
            SamplingSpec::Full,
            &and,
        ),
        row("D3", balanced, EffectVariant::Same, multiway.clone(), &none),
        row(
            "D4",
            balanced,
            EffectVariant::Hvar,
            SamplingSpec::OneWayG { q: 0.05, p: 1.0 },
            &hway,
        ),
        row(
            "D5",
            balanced,
            EffectVariant::Constant,
            SamplingSpec::Full,
            &and,
        ),
        row(
            "D6",
            balanced,
            EffectVariant::Hvar,
            SamplingSpec::OneWayG { q: 0.1, p: 1.0 },
            &none,
        ),
        row(
            "D7",
            balanced,
            EffectVariant::Gvar,
            SamplingSpec::Full,
            &hway,
        ),
        row(
            "D8",
            Geometry::Staircase { m: 1000, m0: 250 },
            EffectVariant::Oddeven,
            multiway,
            &none,
        ),
    ]
}

pub fn lookup_design(name: &str) -> Result<Design> {
    design_registry()
        .into_iter()
        .find(|d| d.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::UnknownDesign(name.to_string()))
}
