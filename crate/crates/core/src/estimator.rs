//! Difference-in-means estimator, its residuals and the feasible influence
//! terms `η̂` that every variance estimator is built from.

use crate::error::{Error, Result};
use crate::mechanisms::Draw;
use crate::population::Population;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Fit<T> {
    pub tau_hat: T,
    pub alpha_hat: T,
    /// Population size.
    pub n: usize,
    pub n_obs: usize,
    pub n1: usize,
    pub n0: usize,
    /// `N1 / n`.
    pub b1_hat: T,
    /// `N0 / n`.
    pub b0_hat: T,
    /// Population index of each observed unit, ascending.
    pub observed: Vec<u32>,
    /// Treatment status of each observed unit.
    pub treated: Vec<bool>,
    /// `Û = Y − α̂ − τ̂ W` per observed unit.
    pub residuals: Vec<T>,
    /// `η̂ = (W / b̂1 − (1 − W) / b̂0) Û` per observed unit.
    pub eta_hat: Vec<T>,
}

/// Fits the OLS regression of `Y` on an intercept and `W` over the observed units.
pub fn fit<T: Scalar>(pop: &Population<T>, draw: &Draw) -> Result<Fit<T>> {
    let n = pop.n();
    if draw.r.len() != n || draw.w.len() != n {
        return Err(Error::InvalidParameter(format!(
            "draw has lengths ({}, {}) for a population of {n}",
            draw.r.len(),
            draw.w.len()
        )));
    }
    let units = pop.units();
    let mut observed = Vec::new();
    let mut treated = Vec::new();
    let (mut sum1, mut sum0) = (T::zero(), T::zero());
    let (mut n1, mut n0) = (0usize, 0usize);
    for (i, u) in units.iter().enumerate() {
        if !draw.r[i] {
            continue;
        }
        observed.push(i as u32);
        treated.push(draw.w[i]);
        if draw.w[i] {
            n1 += 1;
            sum1 = sum1 + u.y1.clone();
        } else {
            n0 += 1;
            sum0 = sum0 + u.y0.clone();
        }
    }
    if n1 == 0 || n0 == 0 {
        return Err(Error::DegenerateDraw {
            treated: n1,
            control: n0,
        });
    }
    let alpha_hat = sum0 / T::from_count(n0);
    let tau_hat = sum1 / T::from_count(n1) - alpha_hat.clone();
    let pop_n = T::from_count(n);
    let b1_hat = T::from_count(n1) / pop_n.clone();
    let b0_hat = T::from_count(n0) / pop_n;

    let mut residuals = Vec::with_capacity(observed.len());
    let mut eta_hat = Vec::with_capacity(observed.len());
    for (&i, &w) in observed.iter().zip(&treated) {
        let u = &units[i as usize];
        let (resid, eta) = if w {
            let r = u.y1.clone() - alpha_hat.clone() - tau_hat.clone();
            (r.clone(), r / b1_hat.clone())
        } else {
            let r = u.y0.clone() - alpha_hat.clone();
            (r.clone(), -(r / b0_hat.clone()))
        };
        residuals.push(resid);
        eta_hat.push(eta);
    }

    Ok(Fit {
        tau_hat,
        alpha_hat,
        n,
        n_obs: observed.len(),
        n1,
        n0,
        b1_hat,
        b0_hat,
        observed,
        treated,
        residuals,
        eta_hat,
    })
}

/// `E[η_i] = u_i(1) − u_i(0) = τ_i − τ` for every unit.
pub fn eta_moments_population<T: Scalar>(pop: &Population<T>) -> Vec<T> {
    pop.effect_deviations()
}
