//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! The estimator, the cluster-sum kernels and the closed-form variance engine
//! only need field arithmetic and an ordering, so they are written against
//! [`Scalar`]. That lets the same code run on `f64` for simulation and on
//! [`BigRational`](num_rational::BigRational) when an exact answer is wanted,
//! e.g. to compare the pairwise oracle with the engine without any tolerance.

use std::fmt::Debug;

use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// Field-like number type usable by the estimators and the variance engine.
pub trait Scalar:
    Num + Signed + Clone + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
    /// Exact conversion from a count.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    /// Conversion from a double. Rational types convert the binary value exactly.
    fn from_real(x: f64) -> Self {
        Self::from_f64(x).expect("finite value representable in scalar type")
    }

    fn to_real(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn square(&self) -> Self {
        self.clone() * self.clone()
    }

    /// `num / den` for small integer literals.
    fn ratio(num: i64, den: i64) -> Self {
        Self::from_i64(num).expect("small integer") / Self::from_i64(den).expect("small integer")
    }
}

impl<T> Scalar for T where
    T: Num
        + Signed
        + Clone
        + PartialOrd
        + FromPrimitive
        + ToPrimitive
        + Debug
        + Send
        + Sync
        + 'static
{
}

/// Neumaier-compensated running sum for long `f64` accumulations.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}
