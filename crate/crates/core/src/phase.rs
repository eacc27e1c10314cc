//! Phase arithmetic for large rotation angles.
//!
//! Nonlinear phases `Ω·t` reach 1e8 rad for N ≈ 1e4. The product is formed
//! exactly as a double-double with a fused multiply-add and reduced against a
//! three-part split of 2π, so the reduced angle keeps full double precision.

use num_complex::Complex64;

// 2π = TAU_A + TAU_B + TAU_C to ~160 bits.
const TAU_A: f64 = std::f64::consts::TAU;
const TAU_B: f64 = 2.449_293_598_294_706_4e-16;
const TAU_C: f64 = -5.989_539_619_436_679e-33;

/// `factor * t` reduced into `(-π, π]`.
pub fn reduced_product(factor: f64, t: f64) -> f64 {
    let hi = factor * t;
    if !hi.is_finite() {
        return f64::NAN;
    }
    let lo = factor.mul_add(t, -hi);
    let k = (hi / TAU_A).round();
    if k == 0.0 {
        return hi + lo;
    }
    let ka = k * TAU_A;
    let ka_err = k.mul_add(TAU_A, -ka);
    // hi and ka agree to within a couple of TAU_A, so this subtraction is exact
    let head = hi - ka;
    let r = head + (lo - ka_err - k * TAU_B - k * TAU_C);
    wrap(r)
}

fn wrap(mut r: f64) -> f64 {
    use std::f64::consts::PI;
    while r > PI {
        r -= TAU_A;
    }
    while r <= -PI {
        r += TAU_A;
    }
    r
}

/// `exp(i * factor * t)` with compensated argument reduction.
pub fn cis(factor: f64, t: f64) -> Complex64 {
    let (s, c) = reduced_product(factor, t).sin_cos();
    Complex64::new(c, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn tau_split_sums_to_two_pi() {
        assert_eq!(TAU_A, TAU);
        assert!(TAU_B.abs() < 1e-15);
    }

    #[test]
    fn small_arguments_pass_through() {
        assert_eq!(reduced_product(2.0, 0.25), 0.5);
        assert_eq!(reduced_product(0.0, 123.0), 0.0);
    }

    #[test]
    fn integer_multiples_of_tau_reduce_to_near_zero() {
        // Ω integer, t = 2π: Ω·t is an exact multiple of the true 2π only up to
        // the representation error of TAU itself, which is Ω·(TAU - 2π).
        for omega in [1.0, 7.0, 1.0e4, 1.0e8] {
            let r = reduced_product(omega, TAU);
            let expected = -omega * TAU_B;
            assert!(
                (r - expected).abs() < 1e-15 * omega.max(1.0),
                "{omega}: {r}"
            );
        }
    }

    #[test]
    fn matches_naive_for_moderate_arguments() {
        for &(f, t) in &[(3.0f64, 0.7f64), (1234.0, 0.1), (-57.0, 2.2)] {
            let naive = (f * t).sin_cos();
            let (s, c) = reduced_product(f, t).sin_cos();
            assert!((s - naive.0).abs() < 1e-12);
            assert!((c - naive.1).abs() < 1e-12);
        }
    }

    #[test]
    fn large_argument_keeps_precision() {
        // references from 60-digit arithmetic; 1e8 * 0.1 uses the binary value of 0.1
        let r = reduced_product(1.0e8, 0.125);
        assert!((r - -1.327_959_434_981_894_8).abs() < 1e-15);
        let r = reduced_product(1.0e8, 0.1);
        assert!((r - 2.707_543_636_877_347_6).abs() < 1e-15);
    }
}
