//! Scalar abstraction for the evaluation kernels.
//!
//! The trace and merit code is written once, generic over [`Scalar`], and
//! instantiated at `f64` (or `f32`) for plain evaluation and at [`Dual`] for
//! exact forward-mode differentiation. [`Dual`] carries a single directional
//! derivative; a full gradient is assembled from one forward pass per
//! parameter, seeding `d = 1` on that parameter and `d = 0` elsewhere.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::{One, Zero};

/// Numeric type the optical kernels are generic over.
///
/// Built from `num-traits` arithmetic bounds plus the handful of special
/// functions the kernels need. Ordering comparisons act on the primal value
/// only, so branch decisions (aperture checks, root selection, hinge
/// activation) agree between `f64` and [`Dual`] evaluations of the same point.
pub trait Scalar:
    Copy
    + fmt::Debug
    + PartialEq
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Zero
    + One
{
    fn from_f64(v: f64) -> Self;

    /// Primal (value) part.
    fn value(self) -> f64;

    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tan(self) -> Self;
    fn powi(self, n: i32) -> Self;

    /// Larger of the two by primal value.
    fn smax(self, other: Self) -> Self;

    /// Smaller of the two by primal value.
    fn smin(self, other: Self) -> Self;

    fn is_finite_value(self) -> bool {
        self.value().is_finite()
    }
}

macro_rules! impl_scalar_float {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn value(self) -> f64 {
                self as f64
            }
            #[inline]
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            #[inline]
            fn abs(self) -> Self {
                <$t>::abs(self)
            }
            #[inline]
            fn sin(self) -> Self {
                <$t>::sin(self)
            }
            #[inline]
            fn cos(self) -> Self {
                <$t>::cos(self)
            }
            #[inline]
            fn tan(self) -> Self {
                <$t>::tan(self)
            }
            #[inline]
            fn powi(self, n: i32) -> Self {
                <$t>::powi(self, n)
            }
            #[inline]
            fn smax(self, other: Self) -> Self {
                if self >= other {
                    self
                } else {
                    other
                }
            }
            #[inline]
            fn smin(self, other: Self) -> Self {
                if self <= other {
                    self
                } else {
                    other
                }
            }
        }
    };
}

impl_scalar_float!(f32);
impl_scalar_float!(f64);

/// First-order dual number: value `v` and derivative `d` along one direction.
///
/// Arithmetic propagates derivatives by the usual rules (product, quotient,
/// chain). Comparisons look at `v` alone, so `Dual` follows exactly the same
/// control-flow path as the `f64` evaluation at the same point; derivatives of
/// branchy functions are one-sided at the branch point itself.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    #[inline]
    pub fn new(v: f64, d: f64) -> Self {
        Dual { v, d }
    }

    /// Constant: derivative zero.
    #[inline]
    pub fn constant(v: f64) -> Self {
        Dual { v, d: 0.0 }
    }

    /// Seed variable: derivative one.
    #[inline]
    pub fn variable(v: f64) -> Self {
        Dual { v, d: 1.0 }
    }
}

impl PartialOrd for Dual {
    #[inline]
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.v.partial_cmp(&other.v)
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, rhs: Dual) -> Dual {
        Dual::new(self.v + rhs.v, self.d + rhs.d)
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, rhs: Dual) -> Dual {
        Dual::new(self.v - rhs.v, self.d - rhs.d)
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, rhs: Dual) -> Dual {
        Dual::new(self.v * rhs.v, self.d * rhs.v + self.v * rhs.d)
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, rhs: Dual) -> Dual {
        // (u/w)' = (u'w - uw') / w^2
        Dual::new(
            self.v / rhs.v,
            (self.d * rhs.v - self.v * rhs.d) / (rhs.v * rhs.v),
        )
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        Dual::new(-self.v, -self.d)
    }
}

impl Zero for Dual {
    #[inline]
    fn zero() -> Self {
        Dual::constant(0.0)
    }
    #[inline]
    fn is_zero(&self) -> bool {
        self.v == 0.0 && self.d == 0.0
    }
}

impl One for Dual {
    #[inline]
    fn one() -> Self {
        Dual::constant(1.0)
    }
}

impl Scalar for Dual {
    #[inline]
    fn from_f64(v: f64) -> Self {
        Dual::constant(v)
    }

    #[inline]
    fn value(self) -> f64 {
        self.v
    }

    #[inline]
    fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        Dual::new(r, self.d / (2.0 * r))
    }

    #[inline]
    fn abs(self) -> Self {
        if self.v < 0.0 {
            -self
        } else {
            self
        }
    }

    #[inline]
    fn sin(self) -> Self {
        Dual::new(self.v.sin(), self.d * self.v.cos())
    }

    #[inline]
    fn cos(self) -> Self {
        Dual::new(self.v.cos(), -self.d * self.v.sin())
    }

    #[inline]
    fn tan(self) -> Self {
        let c = self.v.cos();
        Dual::new(self.v.tan(), self.d / (c * c))
    }

    #[inline]
    fn powi(self, n: i32) -> Self {
        Dual::new(
            self.v.powi(n),
            f64::from(n) * self.v.powi(n - 1) * self.d,
        )
    }

    #[inline]
    fn smax(self, other: Self) -> Self {
        if self.v >= other.v {
            self
        } else {
            other
        }
    }

    #[inline]
    fn smin(self, other: Self) -> Self {
        if self.v <= other.v {
            self
        } else {
            other
        }
    }
}
