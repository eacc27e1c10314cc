//! Entanglement, steering and squeezing criteria from spin moments.
//!
//! Angles: `S_θ = S_y cosθ + S_z sinθ`, measured from the y axis in the yz
//! plane, so `S_θ` is the rotated `S_y^θ` and θ lies in `(−π/2, π/2]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{variance, Axis, SpinMoments};

/// Relative anisotropy of the (S_y, S_z) covariance below which θ is set to 0.
const ISOTROPIC_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ThetaChoice {
    Optimal,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub e_hz: f64,
    pub e_hz_t: f64,
    /// At `theta`
    pub e_hz_theta: f64,
    /// Angle the θ-dependent fields were evaluated at.
    pub theta: f64,
    pub theta_opt: f64,
    pub var_theta_min: f64,
    pub var_sx: f64,
    pub var_sy: f64,
    pub var_sz: f64,
    /// `(ΔS_θ)²` at `theta`
    pub var_theta: f64,
    pub mean_sx: f64,
    /// `⟨S_z^θ⟩` at `theta`
    pub mean_sz_theta: f64,
    pub xi2: f64,
    pub xi2_bar: f64,
    pub e_ratio: f64,
    pub bloch_r: f64,
    pub r_parallel: f64,
    pub steer_b_by_a: bool,
    pub steer_a_by_b: bool,
    pub entangled: bool,
}

/// Minimum of `(ΔS_θ)²` over θ, from the (S_y, S_z) covariance block.
///
/// Returns `(θ, variance)`; an isotropic block gives θ = 0.
pub fn optimal_angle(moments: &SpinMoments) -> Result<(f64, f64)> {
    let cyy = variance(moments, Axis::Y)?;
    let czz = variance(moments, Axis::Z)?;
    let cyz = moments.covariance(Axis::Y, Axis::Z);
    let half_diff = 0.5 * (cyy - czz);
    let radius = half_diff.hypot(cyz);
    let mid = 0.5 * (cyy + czz);
    let var_min = (mid - radius).max(0.0);
    if radius <= ISOTROPIC_TOL * mid.max(f64::MIN_POSITIVE) {
        return Ok((0.0, var_min));
    }
    // var(θ) = mid + half_diff·cos2θ + cyz·sin2θ
    let theta = 0.5 * (-cyz).atan2(-half_diff);
    Ok((normalize_angle(theta), var_min))
}

/// `⟨S_θ²⟩_min = ½(⟨S_y²⟩+⟨S_z²⟩) − √(4C²+|F|²)/4`, valid for `⟨S_y⟩ = ⟨S_z⟩ = 0`.
pub fn min_second_moment_closed(moments: &SpinMoments) -> f64 {
    let c = moments.c_value;
    let f = moments.f_value.norm();
    0.5 * (moments.second_yy + moments.second_zz) - (4.0 * c * c + f * f).sqrt() / 4.0
}

/// Into `(−π/2, π/2]`.
fn normalize_angle(theta: f64) -> f64 {
    use std::f64::consts::{FRAC_PI_2, PI};
    let mut t = theta.rem_euclid(PI);
    if t > FRAC_PI_2 {
        t -= PI;
    }
    t
}

fn var_theta(moments: &SpinMoments, theta: f64) -> Result<f64> {
    let (s, c) = theta.sin_cos();
    let cyy = variance(moments, Axis::Y)?;
    let czz = variance(moments, Axis::Z)?;
    let cyz = moments.covariance(Axis::Y, Axis::Z);
    Ok((cyy * c * c + czz * s * s + 2.0 * cyz * s * c).max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotatedSpins {
    pub mean_x: f64,
    pub mean_y: f64,
    pub mean_z: f64,
    pub var_x: f64,
    pub var_y: f64,
    pub var_z: f64,
}

/// Spins of the rotated modes: `S_x^θ = S_x`, `S_y^θ = S_z sinθ + S_y cosθ`,
/// `S_z^θ = S_z cosθ − S_y sinθ`.
pub fn rotated_spins(moments: &SpinMoments, theta: f64) -> Result<RotatedSpins> {
    let (s, c) = theta.sin_cos();
    let cyy = variance(moments, Axis::Y)?;
    let czz = variance(moments, Axis::Z)?;
    let cyz = moments.covariance(Axis::Y, Axis::Z);
    Ok(RotatedSpins {
        mean_x: moments.mean_sx,
        mean_y: moments.mean_sz * s + moments.mean_sy * c,
        mean_z: moments.mean_sz * c - moments.mean_sy * s,
        var_x: variance(moments, Axis::X)?,
        var_y: (cyy * c * c + czz * s * s + 2.0 * cyz * s * c).max(0.0),
        var_z: (czz * c * c + cyy * s * s - 2.0 * cyz * s * c).max(0.0),
    })
}

/// Mean and variance of `M = 2S_x cosφ + 2S_y sinφ`.
pub fn interferometer_output(moments: &SpinMoments, phi: f64) -> Result<(f64, f64)> {
    let (s, c) = phi.sin_cos();
    let cxx = variance(moments, Axis::X)?;
    let cyy = variance(moments, Axis::Y)?;
    let cxy = moments.covariance(Axis::X, Axis::Y);
    let mean = 2.0 * (moments.mean_sx * c + moments.mean_sy * s);
    let var = 4.0 * (cxx * c * c + cyy * s * s + 2.0 * cxy * s * c);
    Ok((mean, var.max(0.0)))
}

pub fn evaluate_criteria(moments: &SpinMoments, theta: ThetaChoice) -> Result<CriteriaReport> {
    if moments.n_total == 0 {
        return Err(Error::invalid("criteria need N >= 1"));
    }
    let nf = f64::from(moments.n_total);
    let half_n = nf / 2.0;
    let var_sx = variance(moments, Axis::X)?;
    let var_sy = variance(moments, Axis::Y)?;
    let var_sz = variance(moments, Axis::Z)?;
    let (theta_opt, var_theta_min) = optimal_angle(moments)?;
    let (theta, var_th) = match theta {
        ThetaChoice::Optimal => (theta_opt, var_theta_min),
        ThetaChoice::Fixed(t) => (t, var_theta(moments, t)?),
    };

    let e_hz = (var_sx + var_sy) / half_n;
    let e_hz_t = (var_sx + var_sz) / half_n;
    let e_hz_theta = (var_sx + var_th) / half_n;

    let sx_abs = moments.mean_sx.abs();
    let xi2 = var_th / (sx_abs / 2.0);
    let xi2_bar = nf * var_th / (sx_abs * sx_abs);

    let (sx, sy, sz) = (moments.mean_sx, moments.mean_sy, moments.mean_sz);
    let bloch_r = (sx * sx + sy * sy + sz * sz).sqrt() / half_n;
    let r_parallel = sx.hypot(sy) / half_n;

    let (s, c) = theta.sin_cos();
    let mean_sz_theta = sz * c - sy * s;

    Ok(CriteriaReport {
        e_hz,
        e_hz_t,
        e_hz_theta,
        theta,
        theta_opt,
        var_theta_min,
        var_sx,
        var_sy,
        var_sz,
        var_theta: var_th,
        mean_sx: sx,
        mean_sz_theta,
        xi2,
        xi2_bar,
        e_ratio: moments.mean_ab.norm_sqr() / moments.mean_nanb,
        bloch_r,
        r_parallel,
        steer_b_by_a: e_hz_theta < 0.5 + mean_sz_theta / nf,
        steer_a_by_b: e_hz_theta < 0.5 - mean_sz_theta / nf,
        entangled: e_hz.min(e_hz_t).min(e_hz_theta) < 1.0,
    })
}
