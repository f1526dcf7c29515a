//! Small numeric helpers shared across modules.

use crate::Real;

/// ln(sinh(y)/y), extended evenly to all of R with value 0 at y = 0.
///
/// Three branches keep the evaluation stable: a Taylor series near zero,
/// the direct formula in the middle, and an expansion that avoids
/// overflowing sinh for large arguments.
pub fn lnsinhc<T: Real>(y: T) -> T {
    let y = y.abs();
    if y == T::zero() {
        return T::zero();
    }
    if y < T::c(1e-3) {
        let y2 = y * y;
        return y2 / T::c(6.0) - y2 * y2 / T::c(180.0);
    }
    if y > T::c(30.0) {
        // ln(sinh y / y) = y - ln(2y) + ln(1 - e^{-2y})
        return y - (T::c(2.0) * y).ln() + (-(T::c(2.0) * y)).exp().neg().ln_1p();
    }
    (y.sinh() / y).ln()
}

/// d/dy ln(sinh(y)/y) = coth(y) - 1/y, odd in y, 0 at y = 0.
pub fn d_lnsinhc<T: Real>(y: T) -> T {
    let s = sign0(y);
    let y = y.abs();
    if y < T::c(0.1) {
        let y2 = y * y;
        return s * (y / T::c(3.0) - y * y2 / T::c(45.0) + T::c(2.0) * y * y2 * y2 / T::c(945.0));
    }
    if y > T::c(350.0) {
        return s * (T::one() - y.recip());
    }
    // coth(y) = 1 + 2/(e^{2y} - 1)
    s * (T::one() + T::c(2.0) / (T::c(2.0) * y).exp_m1() - y.recip())
}

/// Sign with the subgradient convention sign(0) = 0.
pub fn sign0<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Smallest power of two >= n.
pub fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}
