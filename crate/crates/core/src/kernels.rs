//! Grouped-sum kernels. Every cluster-level quadratic form in the crate is
//! `Σ_c X_c Y_c` with `X_c = Σ_{i ∈ c} x_i`, evaluated in one pass over the
//! units plus one pass over the groups.

use crate::scalar::Scalar;

/// Per-group sums of `values`, `labels[k]` being the group of `values[k]`.
pub fn group_sums<T: Scalar>(
    labels: impl IntoIterator<Item = usize>,
    values: &[T],
    n_groups: usize,
) -> Vec<T> {
    let mut sums = vec![T::zero(); n_groups];
    for (label, x) in labels.into_iter().zip(values) {
        sums[label] = sums[label].clone() + x.clone();
    }
    sums
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (x, y)| acc + x.clone() * y.clone())
}

pub fn sum_of_squares<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |acc, x| acc + x.square())
}

/// Bilinear pair sums of two unit-level vectors over every relation class:
/// `Σ x_i y_j` over all pairs sharing the named cluster (diagonal included).
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedCross<T> {
    pub diag: T,
    pub same_cell: T,
    pub same_g: T,
    pub same_h: T,
}

/// Cluster layout of a set of units: G, H and intersection label per unit.
#[derive(Debug, Clone, Copy)]
pub struct Layout<'a> {
    pub g: &'a [u32],
    pub h: &'a [u32],
    pub cell: &'a [u32],
    pub n_g: usize,
    pub n_h: usize,
    pub n_cells: usize,
}

impl Layout<'_> {
    pub fn sums<T: Scalar>(&self, x: &[T]) -> ClusterSums<T> {
        ClusterSums {
            g: group_sums(self.g.iter().map(|&l| l as usize), x, self.n_g),
            h: group_sums(self.h.iter().map(|&l| l as usize), x, self.n_h),
            cell: group_sums(self.cell.iter().map(|&l| l as usize), x, self.n_cells),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClusterSums<T> {
    pub g: Vec<T>,
    pub h: Vec<T>,
    pub cell: Vec<T>,
}

pub fn grouped_cross<T: Scalar>(
    x: &[T],
    y: &[T],
    xs: &ClusterSums<T>,
    ys: &ClusterSums<T>,
) -> GroupedCross<T> {
    GroupedCross {
        diag: dot(x, y),
        same_cell: dot(&xs.cell, &ys.cell),
        same_g: dot(&xs.g, &ys.g),
        same_h: dot(&xs.h, &ys.h),
    }
}
