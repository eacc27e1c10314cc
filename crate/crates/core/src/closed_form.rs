//! Closed-form moments of the evolved beam-splitter state.
//!
//! The general-K expressions are ratios of complex exponentials. Every factor
//! `1 + e^{iβ}` is evaluated as `2cos(β/2)e^{iβ/2}` so that large powers keep
//! their relative accuracy, and all phases go through compensated reduction.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{prepare, ModelParams};
use crate::moments::moments_from_state;
use crate::phase::{cis, reduced_product};

/// Largest residual imaginary (or real, for F) part tolerated before the
/// expressions are considered inconsistent, relative to the field scale.
const DISCARD_TOL: f64 = 1e-8;
/// `|cos(β/2)|` below which a denominator is treated as a removable zero.
const SINGULAR_TOL: f64 = 1e-13;
const SINGULAR_SHIFT: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormMoments {
    pub mean_sx: f64,
    pub second_yy: f64,
    pub second_zz: f64,
    pub f_value: Complex64,
    pub c_value: f64,
    pub valid_for: ModelParams,
    pub warnings: Vec<String>,
}

/// Evaluates the closed forms, using the real one-axis-twisting form for
/// `K = -1, χ = 1` and the complex-exponential form otherwise.
pub fn closed_form_moments(params: &ModelParams) -> Result<ClosedFormMoments> {
    params.validate()?;
    if params.k_const == -1.0 && params.chi == 1.0 {
        Ok(one_axis_twisting(params))
    } else {
        general_k(params)
    }
}

/// `sign(c)^n |c|^n`, exact zero at `c = 0`. Repeated squaring keeps the
/// relative error near `log2(n)` ulps, where `exp(n ln|c|)` would lose `n` ulps.
fn signed_pow(c: f64, n: u32) -> f64 {
    if n == 0 {
        return 1.0;
    }
    if c == 0.0 {
        return 0.0;
    }
    let mag = c.abs().powi(n as i32);
    if c < 0.0 && n % 2 == 1 {
        -mag
    } else {
        mag
    }
}

fn one_axis_twisting(params: &ModelParams) -> ClosedFormMoments {
    let n = params.n_total;
    let nf = f64::from(n);
    let t = params.time;
    let (s4, c4) = reduced_product(4.0, t).sin_cos();
    let c8 = reduced_product(8.0, t).cos();
    let pow_n2_8 = signed_pow(c8, n.saturating_sub(2));
    let second_yy = (nf * nf + nf - (nf - 1.0) * nf * pow_n2_8) / 8.0;
    let f_im = if n >= 2 {
        nf * (nf - 1.0) * signed_pow(c4, n - 2) * s4
    } else {
        0.0
    };
    ClosedFormMoments {
        mean_sx: 0.5 * nf * signed_pow(c4, n - 1),
        second_yy,
        second_zz: nf / 4.0,
        f_value: Complex64::new(0.0, f_im),
        c_value: -(nf * nf - nf - (nf - 1.0) * nf * pow_n2_8) / 8.0,
        valid_for: *params,
        warnings: Vec::new(),
    }
}

/// `1 + e^{i·factor·τ}`
fn one_plus_cis(factor: f64, tau: f64) -> Complex64 {
    let h = reduced_product(0.5 * factor, tau);
    cis(1.0, h) * (2.0 * h.cos())
}

/// `((1 + e^{i·factor·τ}) / 2)^n`
fn half_pow(factor: f64, tau: f64, n: u32) -> Complex64 {
    let h = reduced_product(0.5 * factor, tau);
    cis(f64::from(n), h) * signed_pow(h.cos(), n)
}

fn near_singular(k: f64, tau: f64) -> bool {
    let c4 = reduced_product(2.0 * (1.0 - k), tau).cos();
    let c8 = reduced_product(4.0 * (1.0 - k), tau).cos();
    c4.abs() < SINGULAR_TOL || c8.abs() < SINGULAR_TOL
}

fn general_k(params: &ModelParams) -> Result<ClosedFormMoments> {
    let n = params.n_total;
    let nf = f64::from(n);
    let k = params.k_const;
    let mut warnings = Vec::new();
    let mut time = params.time;
    if near_singular(k, params.chi * time) {
        time += SINGULAR_SHIFT;
        warnings.push(format!(
            "removable singularity at t = {}; evaluated at t + {SINGULAR_SHIFT:e}",
            params.time
        ));
    }
    let tau = params.chi * time;

    // e^{4iKτ} + e^{4iτ}
    let d4 = cis(4.0 * k, tau) * one_plus_cis(4.0 * (1.0 - k), tau);
    // e^{8iKτ} + e^{8iτ}
    let d8 = cis(8.0 * k, tau) * one_plus_cis(8.0 * (1.0 - k), tau);

    let sx =
        cis(-2.0 * (k * (nf - 1.0) - nf - 1.0), tau) * half_pow(4.0 * (k - 1.0), tau, n) * nf / d4;

    // shared by ⟨S_y²⟩ and C
    let t8 = cis(4.0 * (-k * (nf - 2.0) + nf + 2.0), tau)
        * half_pow(8.0 * (k - 1.0), tau, n)
        * ((nf - 1.0) * nf * 4.0)
        / (d8 * d8);
    let syy = (Complex64::new(nf * nf + nf, 0.0) - t8) / 8.0;
    let c = (Complex64::new(-nf * nf + nf, 0.0) + t8) / 8.0;

    // e^{4iτ} − e^{4iKτ}
    let h = reduced_product(2.0 * (1.0 - k), tau);
    let diff = cis(4.0 * k, tau) * cis(1.0, h) * Complex64::new(0.0, 2.0 * h.sin());
    let bracket = cis(4.0 * k * nf, tau) * half_pow(4.0 * (1.0 - k), tau, n)
        + cis(4.0 * nf, tau) * half_pow(4.0 * (k - 1.0), tau, n);
    let f =
        diff * cis(-2.0 * (k + 1.0) * (nf - 1.0), tau) * bracket * ((nf - 1.0) * nf) / (d4 * d4);

    let sx_scale = nf / 2.0;
    let second_scale = nf * (nf + 1.0) / 8.0;
    let f_scale = (nf * (nf - 1.0) / 2.0).max(1.0);
    for (label, residual, scale) in [
        ("Im<S_x>", sx.im, sx_scale),
        ("Im<S_y^2>", syy.im, second_scale),
        ("Im C", c.im, second_scale),
        ("Re F", f.re, f_scale),
    ] {
        if !residual.is_finite() || residual.abs() > DISCARD_TOL * scale {
            return Err(Error::Consistency(format!(
                "closed form {label} = {residual:e} should vanish (N = {n}, K = {k}, t = {time})"
            )));
        }
    }

    Ok(ClosedFormMoments {
        mean_sx: sx.re,
        second_yy: syy.re,
        second_zz: nf / 4.0,
        f_value: Complex64::new(0.0, f.im),
        c_value: c.re,
        valid_for: *params,
        warnings,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckReport {
    pub points: usize,
    pub worst_deviation: f64,
    pub worst_field: String,
    pub worst_time: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub warnings: Vec<String>,
}

/// `|a − b| / max(|a|, |b|, scale)`: relative where the values are sizeable,
/// absolute-on-scale where powers have underflowed.
fn scaled_deviation(a: f64, b: f64, scale: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        return 0.0;
    }
    d / a.abs().max(b.abs()).max(scale)
}

/// Per-field deviations plus closed-form warnings.
type Comparison = (Vec<(&'static str, f64)>, Vec<String>);

fn compare(params: &ModelParams) -> Result<Comparison> {
    let closed = closed_form_moments(params)?;
    let sums = moments_from_state(&prepare(params)?);
    let nf = f64::from(params.n_total);
    let second_scale = nf * (nf + 1.0) / 8.0;
    let fields = vec![
        (
            "mean_sx",
            scaled_deviation(closed.mean_sx, sums.mean_sx, nf / 2.0),
        ),
        (
            "second_yy",
            scaled_deviation(closed.second_yy, sums.second_yy, second_scale),
        ),
        (
            "second_zz",
            scaled_deviation(closed.second_zz, sums.second_zz, second_scale),
        ),
        (
            "c_value",
            scaled_deviation(closed.c_value, sums.c_value, second_scale),
        ),
        (
            "abs_f",
            scaled_deviation(
                closed.f_value.norm(),
                sums.f_value.norm(),
                (nf * (nf - 1.0) / 2.0).max(1.0),
            ),
        ),
    ];
    Ok((fields, closed.warnings))
}

/// Compares closed forms against the Fock sums at `params.time`.
pub fn crosscheck(params: &ModelParams, tolerance: f64) -> Result<CrosscheckReport> {
    crosscheck_times(params, &[params.time], tolerance)
}

/// Compares closed forms against the Fock sums at each of `times`.
pub fn crosscheck_times(
    params: &ModelParams,
    times: &[f64],
    tolerance: f64,
) -> Result<CrosscheckReport> {
    if !(tolerance > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let mut report = CrosscheckReport {
        points: times.len(),
        worst_deviation: 0.0,
        worst_field: String::new(),
        worst_time: f64::NAN,
        tolerance,
        passed: true,
        warnings: Vec::new(),
    };
    for &t in times {
        let (fields, warnings) = compare(&params.at_time(t))?;
        report.warnings.extend(warnings);
        for (name, dev) in fields {
            if dev > report.worst_deviation || report.worst_field.is_empty() {
                report.worst_deviation = dev;
                report.worst_field = name.to_string();
                report.worst_time = t;
            }
        }
    }
    report.passed = report.worst_deviation <= tolerance;
    Ok(report)
}
