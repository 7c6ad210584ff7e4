//! Feasible cluster-robust variance estimators, the exact asymptotic
//! variance of the estimator, and the probability limits of each feasible
//! estimator together with their gaps to the truth.
//!
//! All quantities are on the `√N` scale: a confidence interval for `τ` uses
//! `V / N`. Every estimator is a quadratic form over unit pairs sharing a
//! cluster, evaluated as sums of squared cluster totals:
//!
//! ```text
//! EHW  = s · Σ_i η̂_i²
//! LZ_C = s · Σ_c (Σ_{i∈c} η̂_i)²          C ∈ {G, H, M}
//! CGM  = LZ_G + LZ_H − LZ_M
//! CGM2 = LZ_G + LZ_H
//! ```
//!
//! with `s = N / n²` and `b̂1 = N1 / n`, `b̂0 = N0 / n` inside `η̂`.

use crate::error::{Error, Result};
use crate::estimator::Fit;
use crate::kernels::{grouped_cross, sum_of_squares, GroupedCross, Layout};
use crate::mechanisms::{Arm, AssignmentSpec, PairRelation, SamplingSpec};
use crate::population::Population;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceSet<T> {
    pub ehw: T,
    pub lzg: T,
    pub lzh: T,
    pub lzm: T,
    /// Clamped at zero; see [`VarianceSet::cgm_unclamped`].
    pub cgm: T,
    pub cgm2: T,
    pub cgm_clamped: bool,
}

impl<T: Scalar> VarianceSet<T> {
    pub fn cgm_unclamped(&self) -> T {
        self.lzg.clone() + self.lzh.clone() - self.lzm.clone()
    }
}

/// Gap between each estimator's limit and the true variance.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceGaps<T> {
    pub ehw: T,
    pub lzg: T,
    pub lzh: T,
    pub cgm: T,
    pub cgm2: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoreticalVariances<T> {
    /// Asymptotic variance of `√N (τ̂ − τ)`.
    pub v: T,
    pub v_ehw: T,
    pub v_lzg: T,
    pub v_lzh: T,
    pub v_cgm: T,
    pub v_cgm2: T,
    pub gaps: VarianceGaps<T>,
    /// `E[N]`.
    pub expected_n: T,
}

/// Evaluates the five feasible estimators from one fit.
pub fn estimate_variances<T: Scalar>(fit: &Fit<T>, pop: &Population<T>) -> VarianceSet<T> {
    let units = pop.units();
    let cells = pop.cells();
    let g: Vec<u32> = fit.observed.iter().map(|&i| units[i as usize].g).collect();
    let h: Vec<u32> = fit.observed.iter().map(|&i| units[i as usize].h).collect();
    let cell: Vec<u32> = fit.observed.iter().map(|&i| cells[i as usize]).collect();
    let layout = Layout {
        g: &g,
        h: &h,
        cell: &cell,
        n_g: pop.n_g(),
        n_h: pop.n_h(),
        n_cells: pop.n_cells(),
    };
    let sums = layout.sums(&fit.eta_hat);
    let n = T::from_count(fit.n);
    let scale = T::from_count(fit.n_obs) / (n.clone() * n);

    let ehw = scale.clone() * sum_of_squares(&fit.eta_hat);
    let lzg = scale.clone() * sum_of_squares(&sums.g);
    let lzh = scale.clone() * sum_of_squares(&sums.h);
    let lzm = scale * sum_of_squares(&sums.cell);
    let raw = lzg.clone() + lzh.clone() - lzm.clone();
    let cgm_clamped = raw < T::zero();
    let cgm = if cgm_clamped { T::zero() } else { raw };
    let cgm2 = lzg.clone() + lzh.clone();
    VarianceSet {
        ehw,
        lzg,
        lzh,
        lzm,
        cgm,
        cgm2,
        cgm_clamped,
    }
}

/// `(b1, b0) = (E[RW], E[R(1 − W)])`.
pub fn observation_rates<T: Scalar>(
    sampling: &SamplingSpec<T>,
    assignment: &AssignmentSpec<T>,
) -> Result<(T, T)> {
    sampling.validate()?;
    assignment.validate()?;
    let r = sampling.mean();
    let w = assignment.mean();
    let b1 = r.clone() * w.clone();
    let b0 = r * (T::one() - w);
    if b1 <= T::zero() || b0 <= T::zero() {
        return Err(Error::InvalidMechanism(format!(
            "observed-and-treated rate {b1:?} and observed-and-control rate {b0:?} must both be positive"
        )));
    }
    Ok((b1, b0))
}

/// Coefficients of `u_i(1)u_j(1)`, `u_i(0)u_j(0)`, `u_i(1)u_j(0)` and
/// `u_i(0)u_j(1)` in `E[ξ_i ξ_j]`, signs folded in.
#[derive(Debug, Clone)]
struct XiCoefficients<T> {
    k11: T,
    k00: T,
    k10: T,
    k01: T,
}

fn xi_coefficients<T: Scalar>(
    sampling: &SamplingSpec<T>,
    assignment: &AssignmentSpec<T>,
    b1: &T,
    b0: &T,
    rel: PairRelation,
    diagonal: bool,
) -> XiCoefficients<T> {
    let rr = sampling.cross_moment(rel, diagonal);
    let w = |arms| assignment.cross_moment(rel, diagonal, arms);
    let one = T::one();
    let b10 = b1.clone() * b0.clone();
    XiCoefficients {
        k11: rr.clone() * w((Arm::Treated, Arm::Treated)) / b1.square() - one.clone(),
        k00: rr.clone() * w((Arm::Untreated, Arm::Untreated)) / b0.square() - one.clone(),
        k10: -(rr.clone() * w((Arm::Treated, Arm::Untreated)) / b10.clone() - one.clone()),
        k01: -(rr * w((Arm::Untreated, Arm::Treated)) / b10 - one),
    }
}

/// `Σ E[ξ_i ξ_j]` restricted to each disjoint relation class.
#[derive(Debug, Clone)]
struct XiClassSums<T> {
    diag: T,
    cell_off: T,
    g_only: T,
    h_only: T,
}

impl<T: Scalar> XiClassSums<T> {
    fn same_cell(&self) -> T {
        self.diag.clone() + self.cell_off.clone()
    }
    fn same_g(&self) -> T {
        self.same_cell() + self.g_only.clone()
    }
    fn same_h(&self) -> T {
        self.same_cell() + self.h_only.clone()
    }
    fn neighbors(&self) -> T {
        self.same_cell() + self.g_only.clone() + self.h_only.clone()
    }
}

/// Splits a grouped cross sum into the four disjoint classes, intersection
/// subtracted last.
fn classes<T: Scalar>(c: &GroupedCross<T>) -> [T; 4] {
    [
        c.diag.clone(),
        c.same_cell.clone() - c.diag.clone(),
        c.same_g.clone() - c.same_cell.clone(),
        c.same_h.clone() - c.same_cell.clone(),
    ]
}

struct PopulationKernel<T> {
    u1: Vec<T>,
    u0: Vec<T>,
    dev: Vec<T>,
    g: Vec<u32>,
    h: Vec<u32>,
}

impl<T: Scalar> PopulationKernel<T> {
    fn new(pop: &Population<T>) -> Self {
        let (u1, u0) = pop.potential_residuals();
        let dev = u1
            .iter()
            .zip(&u0)
            .map(|(a, c)| a.clone() - c.clone())
            .collect();
        PopulationKernel {
            u1,
            u0,
            dev,
            g: pop.units().iter().map(|u| u.g).collect(),
            h: pop.units().iter().map(|u| u.h).collect(),
        }
    }

    fn layout<'a>(&'a self, pop: &'a Population<T>) -> Layout<'a> {
        Layout {
            g: &self.g,
            h: &self.h,
            cell: pop.cells(),
            n_g: pop.n_g(),
            n_h: pop.n_h(),
            n_cells: pop.n_cells(),
        }
    }
}

fn xi_class_sums<T: Scalar>(
    pop: &Population<T>,
    kernel: &PopulationKernel<T>,
    sampling: &SamplingSpec<T>,
    assignment: &AssignmentSpec<T>,
    b1: &T,
    b0: &T,
) -> XiClassSums<T> {
    let layout = kernel.layout(pop);
    let s1 = layout.sums(&kernel.u1);
    let s0 = layout.sums(&kernel.u0);
    let aa = classes(&grouped_cross(&kernel.u1, &kernel.u1, &s1, &s1));
    let cc = classes(&grouped_cross(&kernel.u0, &kernel.u0, &s0, &s0));
    let ac = classes(&grouped_cross(&kernel.u1, &kernel.u0, &s1, &s0));
    let ca = classes(&grouped_cross(&kernel.u0, &kernel.u1, &s0, &s1));

    let cases = [
        (PairRelation::SameIntersection, true),
        (PairRelation::SameIntersection, false),
        (PairRelation::SameGOnly, false),
        (PairRelation::SameHOnly, false),
    ];
    let mut out: Vec<T> = Vec::with_capacity(4);
    for (k, &(rel, diagonal)) in cases.iter().enumerate() {
        let c = xi_coefficients(sampling, assignment, b1, b0, rel, diagonal);
        out.push(
            c.k11 * aa[k].clone()
                + c.k00 * cc[k].clone()
                + c.k10 * ac[k].clone()
                + c.k01 * ca[k].clone(),
        );
    }
    let mut it = out.into_iter();
    XiClassSums {
        diag: it.next().unwrap(),
        cell_off: it.next().unwrap(),
        g_only: it.next().unwrap(),
        h_only: it.next().unwrap(),
    }
}

/// `E[N] / n²`.
fn limit_scale<T: Scalar>(pop: &Population<T>, sampling: &SamplingSpec<T>) -> (T, T) {
    let n = T::from_count(pop.n());
    let expected_n = n.clone() * sampling.mean();
    (expected_n.clone() / (n.clone() * n), expected_n)
}

/// Asymptotic variance `v = (E[N]/n²) Σ_i Σ_{j ∈ N_i} E[ξ_i ξ_j]` in
/// `O(n + #clusters)`.
pub fn true_variance<T: Scalar>(
    pop: &Population<T>,
    sampling: &SamplingSpec<T>,
    assignment: &AssignmentSpec<T>,
) -> Result<T> {
    let (b1, b0) = observation_rates(sampling, assignment)?;
    let kernel = PopulationKernel::new(pop);
    let xi = xi_class_sums(pop, &kernel, sampling, assignment, &b1, &b0);
    let (scale, _) = limit_scale(pop, sampling);
    Ok(scale * xi.neighbors())
}

/// Probability limits of the five feasible estimators and their gaps to `v`.
pub fn limit_variances<T: Scalar>(
    pop: &Population<T>,
    sampling: &SamplingSpec<T>,
    assignment: &AssignmentSpec<T>,
) -> Result<TheoreticalVariances<T>> {
    let (b1, b0) = observation_rates(sampling, assignment)?;
    let kernel = PopulationKernel::new(pop);
    let xi = xi_class_sums(pop, &kernel, sampling, assignment, &b1, &b0);
    let layout = kernel.layout(pop);
    let ds = layout.sums(&kernel.dev);
    let d_diag = sum_of_squares(&kernel.dev);
    let d_g = sum_of_squares(&ds.g);
    let d_h = sum_of_squares(&ds.h);
    let d_m = sum_of_squares(&ds.cell);
    let d_nbr = d_g.clone() + d_h.clone() - d_m;

    let (s, expected_n) = limit_scale(pop, sampling);
    let v = s.clone() * xi.neighbors();
    let v_ehw = s.clone() * (xi.diag.clone() + d_diag.clone());
    let v_lzg = s.clone() * (xi.same_g() + d_g.clone());
    let v_lzh = s.clone() * (xi.same_h() + d_h.clone());
    let v_cgm = s.clone() * (xi.neighbors() + d_nbr.clone());
    let v_cgm2 = v_lzg.clone() + v_lzh.clone();

    let gaps = VarianceGaps {
        cgm: s.clone() * d_nbr,
        ehw: s.clone() * (d_diag - (xi.neighbors() - xi.diag.clone())),
        lzg: s.clone() * (d_g.clone() - (xi.neighbors() - xi.same_g())),
        lzh: s.clone() * (d_h.clone() - (xi.neighbors() - xi.same_h())),
        cgm2: s * (xi.same_cell() + d_h + d_g),
    };
    Ok(TheoreticalVariances {
        v,
        v_ehw,
        v_lzg,
        v_lzh,
        v_cgm,
        v_cgm2,
        gaps,
        expected_n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionRegularity {
    pub clusters: usize,
    pub max_size: usize,
    pub max_size_sq: u128,
    pub sum_size_sq: u128,
    pub max_sq_over_n: f64,
    pub sum_sq_over_n: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport {
    pub n: usize,
    pub g: DimensionRegularity,
    pub h: DimensionRegularity,
}

fn dimension_regularity(counts: &[usize], n: usize) -> DimensionRegularity {
    let max_size = counts.iter().copied().max().unwrap_or(0);
    let max_size_sq = (max_size as u128).pow(2);
    let sum_size_sq = counts.iter().map(|&c| (c as u128).pow(2)).sum::<u128>();
    DimensionRegularity {
        clusters: counts.iter().filter(|&&c| c > 0).count(),
        max_size,
        max_size_sq,
        sum_size_sq,
        max_sq_over_n: max_size_sq as f64 / n as f64,
        sum_sq_over_n: sum_size_sq as f64 / n as f64,
    }
}

/// Cluster-size diagnostics for judging whether asymptotics are plausible.
/// Descriptive only.
pub fn regularity_report<T: Scalar>(pop: &Population<T>) -> RegularityReport {
    RegularityReport {
        n: pop.n(),
        g: dimension_regularity(pop.g_counts(), pop.n()),
        h: dimension_regularity(pop.h_counts(), pop.n()),
    }
}

impl std::fmt::Display for RegularityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "n = {}", self.n)?;
        for (name, d) in [("G", &self.g), ("H", &self.h)] {
            writeln!(
                f,
                "  {name}: clusters={} max={} max^2={} sum^2={} max^2/n={:.4} sum^2/n={:.4}",
                d.clusters,
                d.max_size,
                d.max_size_sq,
                d.sum_size_sq,
                d.max_sq_over_n,
                d.sum_sq_over_n
            )?;
        }
        Ok(())
    }
}
