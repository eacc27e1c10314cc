//! N-boson two-mode states in the Fock basis.
//!
//! Amplitude index `r` counts the bosons in mode b; mode a holds `N - r`.
//! In spin language `r` labels the S_z eigenvalue `m = N/2 - r`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase;

const NORM_TOL: f64 = 1e-12;

/// Interferometer parameters for the nonlinear Hamiltonian
/// `χ(a†²a² + b†²b² + 2K a†a b†b + a†a + b†b)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_total: u32,
    pub chi: f64,
    pub k_const: f64,
    pub time: f64,
}

impl ModelParams {
    pub fn new(n_total: u32, chi: f64, k_const: f64, time: f64) -> Result<Self> {
        let params = Self {
            n_total,
            chi,
            k_const,
            time,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_total == 0 {
            return Err(Error::invalid("n_total must be at least 1"));
        }
        if !self.chi.is_finite() {
            return Err(Error::invalid("chi must be finite"));
        }
        if !self.k_const.is_finite() {
            return Err(Error::invalid("K must be finite"));
        }
        if !self.time.is_finite() {
            return Err(Error::invalid("time must be finite"));
        }
        Ok(())
    }

    pub fn at_time(self, time: f64) -> Self {
        Self { time, ..self }
    }

    /// Rate of the effective one-axis twist, `2(1-K)χ`: the Hamiltonian equals
    /// this times `S_z²` up to a constant.
    pub fn twist_rate(&self) -> f64 {
        2.0 * (1.0 - self.k_const) * self.chi
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoModeState {
    n_total: u32,
    amplitudes: Vec<Complex64>,
}

impl TwoModeState {
    /// Wraps raw amplitudes, checking length and normalization.
    pub fn from_amplitudes(n_total: u32, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != n_total as usize + 1 {
            return Err(Error::invalid(format!(
                "expected {} amplitudes for N = {n_total}, got {}",
                n_total + 1,
                amplitudes.len()
            )));
        }
        let norm = norm_sqr(&amplitudes);
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::invalid(format!("state norm {norm} differs from 1")));
        }
        Ok(Self {
            n_total,
            amplitudes,
        })
    }

    pub fn n_total(&self) -> u32 {
        self.n_total
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amplitudes)
    }
}

fn norm_sqr(amps: &[Complex64]) -> f64 {
    // Neumaier summation; tails are many orders below the centre for large N
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for a in amps {
        let x = a.norm_sqr();
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `ln sqrt(N! / (2^N r! (N-r)!))`
fn ln_binomial_amplitude(n: u32, r: u32) -> f64 {
    let n_f = f64::from(n);
    let ln_num = libm::lgamma(n_f + 1.0);
    let ln_den = libm::lgamma(f64::from(r) + 1.0) + libm::lgamma(f64::from(n - r) + 1.0);
    0.5 * (ln_num - ln_den - n_f * std::f64::consts::LN_2)
}

/// State after a 50/50 beam splitter acting on `|N⟩_a |0⟩_b`.
pub fn beam_splitter_state(n_total: u32) -> Result<TwoModeState> {
    if n_total == 0 {
        return Err(Error::invalid("beam splitter state needs N >= 1"));
    }
    let mut amplitudes: Vec<Complex64> = (0..=n_total)
        .map(|r| Complex64::new(ln_binomial_amplitude(n_total, r).exp(), 0.0))
        .collect();
    let scale = norm_sqr(&amplitudes).sqrt().recip();
    for a in &mut amplitudes {
        *a *= scale;
    }
    Ok(TwoModeState {
        n_total,
        amplitudes,
    })
}

/// Integer-valued for integer K, so the bracket is formed exactly when possible.
fn omega_bracket(n: u32, r: u32, k_const: f64) -> f64 {
    let n = i128::from(n);
    let r = i128::from(r);
    let quadratic = (n - r) * (n - r) + r * r;
    let cross = r * (n - r);
    if k_const.fract() == 0.0 && k_const.abs() < 1e15 {
        let k = k_const as i128;
        (quadratic + 2 * k * cross) as f64
    } else {
        quadratic as f64 + 2.0 * k_const * cross as f64
    }
}

/// Nonlinear phase rate `Ω(r) = χ[(N-r)² + r² + 2K r (N-r)]`.
pub fn phase_exponent(params: &ModelParams, r: u32) -> Result<f64> {
    if r > params.n_total {
        return Err(Error::invalid(format!(
            "occupation index {r} exceeds N = {}",
            params.n_total
        )));
    }
    let bracket = omega_bracket(params.n_total, r, params.k_const);
    if params.chi.fract() == 0.0
        && params.chi.abs() < 1e6
        && bracket.fract() == 0.0
        && bracket.abs() < 1e12
    {
        let exact = (params.chi as i128) * (bracket as i128);
        Ok(exact as f64)
    } else {
        Ok(params.chi * bracket)
    }
}

/// Applies `exp(-i Ω(r) t)` to each amplitude.
pub fn evolve(state: &TwoModeState, params: &ModelParams) -> Result<TwoModeState> {
    params.validate()?;
    if state.n_total != params.n_total {
        return Err(Error::invalid(format!(
            "state has N = {} but params have N = {}",
            state.n_total, params.n_total
        )));
    }
    let mut amplitudes = Vec::with_capacity(state.amplitudes.len());
    for (r, amp) in state.amplitudes.iter().enumerate() {
        let omega = phase_exponent(params, r as u32)?;
        amplitudes.push(amp * phase::cis(-omega, params.time));
    }
    Ok(TwoModeState {
        n_total: state.n_total,
        amplitudes,
    })
}

/// Beam-splitter preparation followed by nonlinear evolution for `params.time`.
pub fn prepare(params: &ModelParams) -> Result<TwoModeState> {
    params.validate()?;
    evolve(&beam_splitter_state(params.n_total)?, params)
}
