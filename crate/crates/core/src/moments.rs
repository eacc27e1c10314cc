//! Spin and bosonic moments of a two-mode state.
//!
//! Every moment is a single pass over the amplitudes using the adjacent
//! products `G_k = conj(ψ_k) ψ_{k+1} sqrt((N-k)(k+1))`, which is `⟨a†b⟩`
//! restricted to one ladder step. A dense-matrix path is kept as an oracle.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::TwoModeState;

/// Mixed quartic moments entering `F`, each as a plain expectation value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedMoments {
    /// ⟨a†² a b⟩
    pub adag2_a_b: Complex64,
    /// ⟨a b†⟩
    pub a_bdag: Complex64,
    /// ⟨a† a² b†⟩
    pub adag_a2_bdag: Complex64,
    /// ⟨b†b a b†⟩
    pub nb_a_bdag: Complex64,
    /// ⟨b†b a† b⟩
    pub nb_adag_b: Complex64,
}

impl MixedMoments {
    /// `F = ⟨a†²ab − ab† − a†a²b† + b†b(ab† − a†b)⟩`
    pub fn f_value(&self) -> Complex64 {
        self.adag2_a_b - self.a_bdag - self.adag_a2_bdag + self.nb_a_bdag - self.nb_adag_b
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinMoments {
    pub n_total: u32,
    pub mean_sx: f64,
    pub mean_sy: f64,
    pub mean_sz: f64,
    pub second_xx: f64,
    pub second_yy: f64,
    pub second_zz: f64,
    /// ⟨{S_y, S_z}⟩ / 2
    pub anti_yz: f64,
    /// ⟨{S_x, S_y}⟩ / 2
    pub anti_xy: f64,
    /// ⟨{S_x, S_z}⟩ / 2
    pub anti_xz: f64,
    pub f_value: Complex64,
    /// ⟨S_z²⟩ − ⟨S_y²⟩
    pub c_value: f64,
    pub mean_ab: Complex64,
    pub mean_na: f64,
    pub mean_nb: f64,
    pub mean_nanb: f64,
    pub mixed: MixedMoments,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl SpinMoments {
    pub fn spin(&self) -> f64 {
        f64::from(self.n_total) / 2.0
    }

    pub fn mean(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.mean_sx,
            Axis::Y => self.mean_sy,
            Axis::Z => self.mean_sz,
        }
    }

    pub fn second(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.second_xx,
            Axis::Y => self.second_yy,
            Axis::Z => self.second_zz,
        }
    }

    /// Symmetrized covariance `⟨{S_i, S_j}⟩/2 − ⟨S_i⟩⟨S_j⟩`.
    pub fn covariance(&self, i: Axis, j: Axis) -> f64 {
        use Axis::*;
        let anti = match (i, j) {
            (X, X) | (Y, Y) | (Z, Z) => self.second(i),
            (X, Y) | (Y, X) => self.anti_xy,
            (X, Z) | (Z, X) => self.anti_xz,
            (Y, Z) | (Z, Y) => self.anti_yz,
        };
        anti - self.mean(i) * self.mean(j)
    }

    /// Natural magnitude of second moments, `S(S+1)`.
    pub(crate) fn second_scale(&self) -> f64 {
        let s = self.spin();
        s * (s + 1.0)
    }
}

/// `(ΔS_i)²`, clamped at zero. Values below `-1e-9·max(1, S(S+1))` indicate
/// broken moments and are reported as a consistency failure.
pub fn variance(moments: &SpinMoments, axis: Axis) -> Result<f64> {
    let mean = moments.mean(axis);
    let v = moments.second(axis) - mean * mean;
    if v < 0.0 {
        let tol = 1e-9 * moments.second_scale().max(1.0);
        if v < -tol {
            return Err(Error::Consistency(format!(
                "variance along {axis:?} is {v}, below -{tol}"
            )));
        }
        return Ok(0.0);
    }
    Ok(v)
}

pub fn moments_from_state(state: &TwoModeState) -> SpinMoments {
    let n = state.n_total();
    let nf = f64::from(n);
    let psi = state.amplitudes();

    let mut mean_nb = 0.0;
    let mut mean_nanb = 0.0;
    let mut z2 = 0.0;
    let mut na_nb1 = 0.0; // ⟨n_a (n_b + 1)⟩
    let mut na1_nb = 0.0; // ⟨(n_a + 1) n_b⟩
    for (r, amp) in psi.iter().enumerate() {
        let p = amp.norm_sqr();
        let nb = r as f64;
        let na = nf - nb;
        let m = 0.5 * (na - nb);
        mean_nb += p * nb;
        mean_nanb += p * na * nb;
        z2 += p * m * m;
        na_nb1 += p * na * (nb + 1.0);
        na1_nb += p * (na + 1.0) * nb;
    }

    let mut ab = Complex64::new(0.0, 0.0);
    let mut adag2_a_b = Complex64::new(0.0, 0.0);
    let mut nb_adag_b = Complex64::new(0.0, 0.0);
    let mut g_conj_nb1 = Complex64::new(0.0, 0.0);
    let mut g_conj_na1 = Complex64::new(0.0, 0.0);
    let mut x_sum = Complex64::new(0.0, 0.0);
    for k in 0..n as usize {
        let kf = k as f64;
        let g = psi[k].conj() * psi[k + 1] * ((nf - kf) * (kf + 1.0)).sqrt();
        ab += g;
        // n_a on the |N-k-1, k+1⟩ side of the ladder step
        adag2_a_b += g * (nf - kf - 1.0);
        nb_adag_b += g * kf;
        g_conj_na1 += g.conj() * (nf - kf - 1.0);
        g_conj_nb1 += g.conj() * (kf + 1.0);
        x_sum += g * (nf - 2.0 * kf - 1.0);
    }

    let mut h = Complex64::new(0.0, 0.0); // ⟨(a†b)²⟩
    for k in 0..(n as usize).saturating_sub(1) {
        let kf = k as f64;
        let w = ((nf - kf) * (nf - kf - 1.0) * (kf + 1.0) * (kf + 2.0)).sqrt();
        h += psi[k].conj() * psi[k + 2] * w;
    }

    let mixed = MixedMoments {
        adag2_a_b,
        a_bdag: ab.conj(),
        adag_a2_bdag: g_conj_na1,
        nb_a_bdag: g_conj_nb1,
        nb_adag_b,
    };

    let second_xx = 0.25 * (2.0 * h.re + na_nb1 + na1_nb);
    let second_yy = 0.25 * (-2.0 * h.re + na_nb1 + na1_nb);
    SpinMoments {
        n_total: n,
        mean_sx: ab.re,
        mean_sy: ab.im,
        mean_sz: 0.5 * (nf - 2.0 * mean_nb),
        second_xx,
        second_yy,
        second_zz: z2,
        anti_yz: 0.5 * x_sum.im,
        anti_xy: 0.5 * h.im,
        anti_xz: 0.5 * x_sum.re,
        f_value: mixed.f_value(),
        c_value: z2 - second_yy,
        mean_ab: ab,
        mean_na: nf - mean_nb,
        mean_nb,
        mean_nanb,
        mixed,
    }
}

/// Largest N accepted by [`dense_oracle_moments`].
pub const DENSE_ORACLE_MAX_N: u32 = 50;

/// Reference moments from explicit spin matrices in the `|S, m⟩` basis.
///
/// Independent of the ladder sums above; intended for testing.
pub fn dense_oracle_moments(state: &TwoModeState) -> Result<SpinMoments> {
    let n = state.n_total();
    if n > DENSE_ORACLE_MAX_N {
        return Err(Error::invalid(format!(
            "dense oracle supports N <= {DENSE_ORACLE_MAX_N}, got {n}"
        )));
    }
    let dim = n as usize + 1;
    let s = f64::from(n) / 2.0;
    let m_of = |r: usize| s - r as f64;
    let zero = Complex64::new(0.0, 0.0);
    let i = Complex64::new(0.0, 1.0);

    // S+ raises m, i.e. moves index r -> r - 1
    let mut s_plus = DMatrix::<Complex64>::from_element(dim, dim, zero);
    for r in 1..dim {
        let m = m_of(r);
        s_plus[(r - 1, r)] = Complex64::new((s * (s + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
    }
    let s_minus = s_plus.adjoint();
    let sx = (&s_plus + &s_minus) * Complex64::new(0.5, 0.0);
    let sy = (&s_plus - &s_minus) * (-0.5 * i);
    let sz = DMatrix::from_fn(dim, dim, |a, b| {
        if a == b {
            Complex64::new(m_of(a), 0.0)
        } else {
            zero
        }
    });
    let ident = DMatrix::<Complex64>::identity(dim, dim);
    let na = &ident * Complex64::new(s, 0.0) + &sz;
    let nb = &ident * Complex64::new(s, 0.0) - &sz;

    let psi = DVector::from_column_slice(state.amplitudes());
    let ev = |op: &DMatrix<Complex64>| -> Complex64 { psi.dotc(&(op * &psi)) };
    let anti =
        |a: &DMatrix<Complex64>, b: &DMatrix<Complex64>| -> f64 { (ev(&(a * b + b * a)) * 0.5).re };

    let second_yy = ev(&(&sy * &sy)).re;
    let second_zz = ev(&(&sz * &sz)).re;
    let mixed = MixedMoments {
        adag2_a_b: ev(&(&s_plus * &na)),
        a_bdag: ev(&s_minus),
        adag_a2_bdag: ev(&(&na * &s_minus)),
        nb_a_bdag: ev(&(&nb * &s_minus)),
        nb_adag_b: ev(&(&nb * &s_plus)),
    };
    let anti_yz = anti(&sy, &sz);
    let mean_nb = ev(&nb).re;
    Ok(SpinMoments {
        n_total: n,
        mean_sx: ev(&sx).re,
        mean_sy: ev(&sy).re,
        mean_sz: ev(&sz).re,
        second_xx: ev(&(&sx * &sx)).re,
        second_yy,
        second_zz,
        anti_yz,
        anti_xy: anti(&sx, &sy),
        anti_xz: anti(&sx, &sz),
        // F equals 2i⟨{S_y,S_z}⟩; computed from the commutator form, not from `mixed`
        f_value: ev(&(&sy * &sz + &sz * &sy)) * (2.0 * i),
        c_value: second_zz - second_yy,
        mean_ab: ev(&s_plus),
        mean_na: ev(&na).re,
        mean_nb,
        mean_nanb: ev(&(&na * &nb)).re,
        mixed,
    })
}


#[cfg(test)]
mod tests {
    use super::testing::worst_deviation;
    use super::*;
    use crate::fock::{beam_splitter_state, prepare, ModelParams};

    fn evolved(n: u32, k: f64, t: f64) -> TwoModeState {
        prepare(&ModelParams::new(n, 1.0, k, t).unwrap()).unwrap()
    }

    #[test]
    fn coherent_state_moments() {
        for n in 1..=10u32 {
            let nf = f64::from(n);
            let m = moments_from_state(&beam_splitter_state(n).unwrap());
            assert!((m.mean_sx - nf / 2.0).abs() < 1e-13);
            assert!(m.mean_sy.abs() < 1e-15 && m.mean_sz.abs() < 1e-13);
            assert!((m.mean_nanb - nf * (nf - 1.0) / 4.0).abs() < 1e-12);
            assert!(variance(&m, Axis::X).unwrap() < 1e-12);
            assert!((variance(&m, Axis::Y).unwrap() - nf / 4.0).abs() < 1e-12);
            assert!((variance(&m, Axis::Z).unwrap() - nf / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_bosons_at_point_one() {
        let m = moments_from_state(&evolved(2, -1.0, 0.1));
        assert!((m.mean_sx - 0.4f64.cos()).abs() < 1e-15);
        assert!((m.second_yy - 0.5).abs() < 1e-15);
        assert!((m.second_zz - 0.5).abs() < 1e-15);
        assert!(m.c_value.abs() < 1e-15);
        assert!(m.f_value.re.abs() < 1e-15);
        assert!((m.f_value.im - 2.0 * 0.4f64.sin()).abs() < 1e-15);
        assert!((m.f_value.im - 0.77884).abs() < 1e-5);
    }

    #[test]
    fn f_is_two_i_anticommutator() {
        for &(n, k, t) in &[(7u32, -1.0, 0.13), (30, 0.0, 0.41), (15, 0.3, 1.1)] {
            let m = moments_from_state(&evolved(n, k, t));
            let expected = Complex64::new(0.0, 4.0 * m.anti_yz);
            assert!((m.f_value - expected).norm() < 1e-10 * m.second_scale());
        }
    }

    #[test]
    fn matches_dense_oracle() {
        for n in 1..=30u32 {
            for k in [-1.0, 0.0] {
                for t in [0.0, 0.05, 0.1, 0.5, 1.0] {
                    let state = evolved(n, k, t);
                    let a = moments_from_state(&state);
                    let b = dense_oracle_moments(&state).unwrap();
                    let d = worst_deviation(&a, &b);
                    assert!(d < 1e-10, "N={n} K={k} t={t}: {d}");
                }
            }
        }
    }

    #[test]
    fn dense_oracle_examples() {
        let m = dense_oracle_moments(&beam_splitter_state(1).unwrap()).unwrap();
        assert!((m.mean_sx - 0.5).abs() < 1e-15);
        let m = dense_oracle_moments(&beam_splitter_state(2).unwrap()).unwrap();
        assert!((m.second_xx - 1.0).abs() < 1e-14);
        assert!(dense_oracle_moments(&beam_splitter_state(51).unwrap()).is_err());
    }

    #[test]
    fn sz_variance_is_constant() {
        for k in [-1.0, 0.0] {
            for t in [0.0, 0.02, 0.3, 2.0, 5.5] {
                let m = moments_from_state(&evolved(100, k, t));
                assert!((variance(&m, Axis::Z).unwrap() - 25.0).abs() < 1e-10);
                assert!(m.mean_sy.abs() < 1e-10 && m.mean_sz.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn negative_variance_flagged() {
        let mut m = moments_from_state(&beam_splitter_state(4).unwrap());
        m.second_xx -= 1e-3;
        assert!(matches!(variance(&m, Axis::X), Err(Error::Consistency(_))));
        m.second_xx += 1e-3 - 1e-14;
        assert_eq!(variance(&m, Axis::X).unwrap(), 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn total_spin_fixed(
                n in 1u32..300,
                k in prop_oneof![Just(-1.0), Just(0.0), -1.5..1.5f64],
                t in 0.0..7.0f64,
            ) {
                let m = moments_from_state(&evolved(n, k, t));
                let s = m.spin();
                let total = m.second_xx + m.second_yy + m.second_zz;
                prop_assert!((total - s * (s + 1.0)).abs() < 1e-9 * s * (s + 1.0));
                prop_assert_eq!(m.mean_sx, m.mean_ab.re);
                prop_assert_eq!(m.mean_sy, m.mean_ab.im);
                prop_assert_eq!(m.c_value, m.second_zz - m.second_yy);
            }

            #[test]
            fn f_purely_imaginary_for_one_axis_twist(n in 2u32..200, t in 0.0..3.2f64) {
                let m = moments_from_state(&evolved(n, -1.0, t));
                prop_assert!(m.f_value.re.abs() < 1e-10 * m.second_scale());
            }
        }
    }
}
