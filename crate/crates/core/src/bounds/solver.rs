//! Variational planar-variance bounds at fixed spin S.
//!
//! `min_ψ ⟨A⟩ − ⟨S_x⟩²` with `A = S_x² + S_y² = S(S+1) − S_z²` equals
//! `min_μ g(μ)`, `g(μ) = λ_min(A − 2μS_x) + μ²`, and `g'(μ) = 0` is the
//! self-consistency condition `μ = ⟨S_x⟩` in the ground state of `A − 2μS_x`.
//! The ζ² ratio is handled by Dinkelbach iteration on top of the same family.

use serde::{Deserialize, Serialize};

use super::tridiag::{GroundState, SymTridiagonal};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSettings {
    /// Points of the coarse μ scan over `[0, S]`.
    pub mu_grid_points: usize,
    /// Root tolerance on μ, relative to `max(1, S)`.
    pub root_tol: f64,
    pub max_iterations: usize,
    pub dinkelbach_tol: f64,
    pub dinkelbach_max_iterations: usize,
}

impl Default for BoundSettings {
    fn default() -> Self {
        Self {
            mu_grid_points: 21,
            root_tol: 1e-13,
            max_iterations: 200,
            dinkelbach_tol: 1e-12,
            dinkelbach_max_iterations: 100,
        }
    }
}

impl BoundSettings {
    pub fn validate(&self) -> Result<()> {
        if self.mu_grid_points < 3 {
            return Err(Error::invalid("mu grid needs at least 3 points"));
        }
        if !(self.root_tol > 0.0 && self.dinkelbach_tol > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        if self.max_iterations == 0 || self.dinkelbach_max_iterations == 0 {
            return Err(Error::invalid("iteration caps must be positive"));
        }
        Ok(())
    }
}

/// Spin-S operators in the `|S, m⟩` basis, `m_j = S − j`.
#[derive(Clone, Debug)]
pub struct SpinOperators {
    pub two_s: u32,
    /// Diagonal of `A = S(S+1) − S_z²`.
    a_diag: Vec<f64>,
    /// Off-diagonal of `S_x`.
    sx_off: Vec<f64>,
}

impl SpinOperators {
    pub fn new(two_s: u32) -> Result<Self> {
        if two_s == 0 {
            return Err(Error::invalid("spin must be at least 1/2"));
        }
        let s = f64::from(two_s) / 2.0;
        let dim = two_s as usize + 1;
        let m = |j: usize| s - j as f64;
        let a_diag = (0..dim).map(|j| s * (s + 1.0) - m(j) * m(j)).collect();
        let sx_off = (0..dim - 1)
            .map(|j| {
                // ⟨m−1|S_−|m⟩ / 2, written as (S+m)(S−m+1) to avoid cancellation
                let mj = m(j);
                0.5 * ((s + mj) * (s - mj + 1.0)).sqrt()
            })
            .collect();
        Ok(Self {
            two_s,
            a_diag,
            sx_off,
        })
    }

    pub fn spin(&self) -> f64 {
        f64::from(self.two_s) / 2.0
    }

    /// `A − ν S_x`
    pub fn hamiltonian(&self, nu: f64) -> SymTridiagonal {
        SymTridiagonal {
            diag: self.a_diag.clone(),
            off: self.sx_off.iter().map(|e| -nu * e).collect(),
        }
    }

    pub fn mean_a(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.a_diag).map(|(v, a)| v * v * a).sum()
    }

    pub fn mean_sx(&self, x: &[f64]) -> f64 {
        2.0 * x
            .windows(2)
            .zip(&self.sx_off)
            .map(|(w, e)| w[0] * w[1] * e)
            .sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsSolution {
    pub two_s: u32,
    /// `⟨A⟩ − ⟨S_x⟩²` of the returned state.
    pub c_s: f64,
    pub mu: f64,
    pub mean_sx: f64,
    /// `|μ − ⟨S_x⟩|` at the returned state.
    pub self_consistency: f64,
    pub eigen_residual: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub state: Vec<f64>,
}

impl CsSolution {
    pub fn c_tilde(&self) -> f64 {
        self.c_s / (f64::from(self.two_s) / 2.0)
    }
}

/// Ground state of `A − (2μ + η) S_x` together with `⟨S_x⟩` and `⟨A⟩`.
struct Probe {
    ground: GroundState,
    mean_sx: f64,
    mean_a: f64,
}

struct Family<'a> {
    ops: &'a SpinOperators,
    eta: f64,
}

impl Family<'_> {
    fn nu(&self, mu: f64) -> f64 {
        2.0 * mu + self.eta
    }

    fn g(&self, mu: f64) -> Result<f64> {
        let nu = self.nu(mu);
        if nu == 0.0 {
            // A alone: ground states are m = ±S with eigenvalue S
            return Ok(self.ops.spin() + mu * mu);
        }
        Ok(self.ops.hamiltonian(nu).lowest_eigenvalue()? + mu * mu)
    }

    fn probe(&self, mu: f64) -> Result<Probe> {
        let ground = self.ops.hamiltonian(self.nu(mu)).ground_state()?;
        let mean_sx = self.ops.mean_sx(&ground.vector);
        let mean_a = self.ops.mean_a(&ground.vector);
        Ok(Probe {
            ground,
            mean_sx,
            mean_a,
        })
    }

    /// `μ − ⟨S_x⟩`, proportional to `g'(μ)`.
    fn h(&self, mu: f64) -> Result<f64> {
        Ok(mu - self.probe(mu)?.mean_sx)
    }
}

/// Brent's method for a sign-changing bracket `[a, b]`.
fn brent_root(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, usize)> {
    if fa == 0.0 {
        return Ok((a, 0));
    }
    if fb == 0.0 {
        return Ok((b, 0));
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for iter in 1..=max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok((b, iter));
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b)?;
    }
    Err(Error::NonConvergence {
        what: "self-consistent mu root",
        iterations: max_iter,
        best: b,
    })
}

/// Golden-section minimum of `f` on `[a, b]`.
fn golden_min(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, usize)> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for iter in 1..=max_iter {
        if (b - a).abs() <= tol {
            return Ok((0.5 * (a + b), iter));
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok((0.5 * (a + b), max_iter))
}

/// Minimizes `λ_min(A − (2μ+η)S_x) + μ²` over `μ ∈ [0, S]`; returns the
/// stationary μ and the ground state there.
fn minimize_family(family: &Family, settings: &BoundSettings) -> Result<(f64, Probe, usize)> {
    let s = family.ops.spin();
    let pts = settings.mu_grid_points;
    let grid: Vec<f64> = (0..pts).map(|i| s * i as f64 / (pts - 1) as f64).collect();
    let values = grid
        .iter()
        .map(|&mu| family.g(mu))
        .collect::<Result<Vec<_>>>()?;
    let best = values
        .iter()
        .enumerate()
        .fold(0, |bi, (i, v)| if *v < values[bi] { i } else { bi });

    // at ν = 0 the ground state is degenerate; probe just inside instead
    let inner = 1e-9 * s.max(1.0);
    let lo = if best == 0 { 0.0 } else { grid[best - 1] };
    let hi = grid[(best + 1).min(pts - 1)];
    let lo_probe = if family.nu(lo) == 0.0 { lo + inner } else { lo };
    let tol = settings.root_tol * s.max(1.0);

    let h_lo = family.h(lo_probe)?;
    let h_hi = family.h(hi)?;
    let (mu, iterations) = if h_lo < 0.0 && h_hi > 0.0 {
        brent_root(
            |m| family.h(m),
            lo_probe,
            hi,
            h_lo,
            h_hi,
            tol,
            settings.max_iterations,
        )?
    } else if h_lo >= 0.0 && best == 0 && family.nu(lo) != 0.0 {
        (lo, 0)
    } else {
        golden_min(|m| family.g(m), lo_probe, hi, tol, settings.max_iterations)?
    };
    let probe = family.probe(mu)?;
    Ok((mu, probe, iterations))
}

/// Tight minimum of `(ΔS_x)² + (ΔS_y)²` over pure spin-S states.
pub fn solve_c_s(two_s: u32, settings: &BoundSettings) -> Result<CsSolution> {
    settings.validate()?;
    let ops = SpinOperators::new(two_s)?;
    solve_c_s_with(&ops, settings)
}

fn solve_c_s_with(ops: &SpinOperators, settings: &BoundSettings) -> Result<CsSolution> {
    let family = Family { ops, eta: 0.0 };
    let (mu, probe, iterations) = minimize_family(&family, settings)?;
    let c_s = probe.mean_a - probe.mean_sx * probe.mean_sx;
    if !c_s.is_finite() {
        return Err(Error::Consistency(format!(
            "non-finite C_S at 2S = {}",
            ops.two_s
        )));
    }
    Ok(CsSolution {
        two_s: ops.two_s,
        c_s,
        mu,
        mean_sx: probe.mean_sx,
        self_consistency: (mu - probe.mean_sx).abs(),
        eigen_residual: probe.ground.residual,
        iterations,
        state: probe.ground.vector,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZetaSolution {
    pub two_s: u32,
    pub zeta2: f64,
    pub mean_sx: f64,
    pub outer_iterations: usize,
    pub last_step: f64,
}

/// Minimum of `[(ΔS_x)² + (ΔS_y)²] / ⟨S_x⟩` over pure spin-S states.
pub fn solve_zeta2(two_s: u32, settings: &BoundSettings) -> Result<ZetaSolution> {
    settings.validate()?;
    let ops = SpinOperators::new(two_s)?;
    let c = solve_c_s_with(&ops, settings)?;
    zeta2_from_start(&ops, settings, c.c_tilde())
}

pub(crate) fn solve_both(
    two_s: u32,
    settings: &BoundSettings,
    zeta: bool,
) -> Result<(CsSolution, Option<ZetaSolution>)> {
    settings.validate()?;
    let ops = SpinOperators::new(two_s)?;
    let c = solve_c_s_with(&ops, settings)?;
    let z = if zeta {
        Some(zeta2_from_start(&ops, settings, c.c_tilde())?)
    } else {
        None
    };
    Ok((c, z))
}

fn zeta2_from_start(
    ops: &SpinOperators,
    settings: &BoundSettings,
    start: f64,
) -> Result<ZetaSolution> {
    // C̃_S ≤ ζ² always, so the first Dinkelbach step lands on a feasible ratio
    let mut eta = start.clamp(f64::MIN_POSITIVE, 0.5);
    for iter in 1..=settings.dinkelbach_max_iterations {
        let family = Family { ops, eta };
        let (_, probe, _) = minimize_family(&family, settings)?;
        if !(probe.mean_sx > 0.0) {
            return Err(Error::Consistency(format!(
                "Dinkelbach subproblem returned <S_x> = {} at 2S = {}",
                probe.mean_sx, ops.two_s
            )));
        }
        let ratio = (probe.mean_a - probe.mean_sx * probe.mean_sx) / probe.mean_sx;
        let last_step = (ratio - eta).abs();
        eta = ratio;
        if last_step < settings.dinkelbach_tol {
            return Ok(ZetaSolution {
                two_s: ops.two_s,
                zeta2: eta,
                mean_sx: probe.mean_sx,
                outer_iterations: iter,
                last_step,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "Dinkelbach iteration for zeta^2",
        iterations: settings.dinkelbach_max_iterations,
        best: eta,
    })
}
