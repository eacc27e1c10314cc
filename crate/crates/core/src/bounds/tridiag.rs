//! Lowest eigenpair of a real symmetric tridiagonal matrix.
//!
//! Sturm-sequence bisection brackets the smallest eigenvalue from below; a
//! shift just under the bracket makes `T − σI` positive definite, so inverse
//! iteration by plain LDLᵀ elimination is stable.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    /// `off[i]` couples rows `i` and `i + 1`.
    pub off: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct GroundState {
    pub eigenvalue: f64,
    pub vector: Vec<f64>,
    /// `‖Tx − λx‖ / max(1, ‖T‖∞)`
    pub residual: f64,
}

const BISECTION_CAP: usize = 200;

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::invalid(format!(
                "tridiagonal shape mismatch: {} diagonal, {} off-diagonal",
                diag.len(),
                off.len()
            )));
        }
        Ok(Self { diag, off })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.dim())
            .map(|i| {
                let left = if i > 0 { self.off[i - 1].abs() } else { 0.0 };
                let right = self.off.get(i).map_or(0.0, |e| e.abs());
                self.diag[i].abs() + left + right
            })
            .fold(0.0, f64::max)
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        let tiny = f64::MIN_POSITIVE.sqrt() * self.norm_hint();
        let mut count = 0;
        let mut q = self.diag[0] - x;
        for i in 0..self.dim() {
            if i > 0 {
                let e = self.off[i - 1];
                q = self.diag[i] - x - e * e / q;
            }
            if q == 0.0 {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn norm_hint(&self) -> f64 {
        self.diag[0].abs().max(1.0)
    }

    fn gershgorin_lower(&self) -> f64 {
        (0..self.dim())
            .map(|i| {
                let left = if i > 0 { self.off[i - 1].abs() } else { 0.0 };
                let right = self.off.get(i).map_or(0.0, |e| e.abs());
                self.diag[i] - left - right
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Interval `[lo, hi]` around the smallest eigenvalue with `lo` a strict
    /// lower bound, as narrow as double precision allows.
    pub fn lowest_eigenvalue_bracket(&self) -> Result<(f64, f64)> {
        let scale = self.norm_inf().max(f64::MIN_POSITIVE);
        let mut lo = self.gershgorin_lower() - 1e-12 * scale;
        let mut hi = self.diag.iter().copied().fold(f64::INFINITY, f64::min);
        // hi is a Rayleigh quotient of a unit vector, so λ_min ≤ hi
        if self.count_below(hi) == 0 {
            hi += 1e-15 * scale;
        }
        for _ in 0..BISECTION_CAP {
            let mid = 0.5 * (lo + hi);
            let width = 4.0 * f64::EPSILON * lo.abs().max(hi.abs()) + 1e-3 * f64::EPSILON * scale;
            if mid <= lo || mid >= hi || hi - lo <= width {
                return Ok((lo, hi));
            }
            if self.count_below(mid) == 0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Err(Error::NonConvergence {
            what: "Sturm bisection",
            iterations: BISECTION_CAP,
            best: 0.5 * (lo + hi),
        })
    }

    pub fn lowest_eigenvalue(&self) -> Result<f64> {
        let (lo, hi) = self.lowest_eigenvalue_bracket()?;
        Ok(0.5 * (lo + hi))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut y = self.diag[i] * x[i];
                if i > 0 {
                    y += self.off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    y += self.off[i] * x[i + 1];
                }
                y
            })
            .collect()
    }

    /// Solves `(T − σI) y = b` for `σ` below the spectrum.
    fn solve_shifted(&self, sigma: f64, b: &[f64]) -> Option<Vec<f64>> {
        let n = self.dim();
        let mut pivot = vec![0.0; n];
        let mut y = vec![0.0; n];
        pivot[0] = self.diag[0] - sigma;
        y[0] = b[0];
        for i in 1..n {
            if !(pivot[i - 1] > 0.0) {
                return None;
            }
            let l = self.off[i - 1] / pivot[i - 1];
            pivot[i] = self.diag[i] - sigma - l * self.off[i - 1];
            y[i] = b[i] - l * y[i - 1];
        }
        if !(pivot[n - 1] > 0.0) {
            return None;
        }
        y[n - 1] /= pivot[n - 1];
        for i in (0..n - 1).rev() {
            y[i] = (y[i] - self.off[i] * y[i + 1]) / pivot[i];
        }
        Some(y)
    }

    /// Smallest eigenvalue and a unit eigenvector.
    pub fn ground_state(&self) -> Result<GroundState> {
        let n = self.dim();
        let scale = self.norm_inf().max(1.0);
        if n == 1 {
            return Ok(GroundState {
                eigenvalue: self.diag[0],
                vector: vec![1.0],
                residual: 0.0,
            });
        }
        let (lo, _) = self.lowest_eigenvalue_bracket()?;
        let mut gap = 4.0 * f64::EPSILON * lo.abs().max(1.0);
        let mut x = vec![1.0 / (n as f64).sqrt(); n];
        let mut best: Option<GroundState> = None;
        for _ in 0..8 {
            let sigma = lo - gap;
            let Some(y) = self.solve_shifted(sigma, &x) else {
                gap *= 16.0;
                continue;
            };
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !norm.is_finite() || norm == 0.0 {
                gap *= 16.0;
                continue;
            }
            x = y.iter().map(|v| v / norm).collect();
            let tx = self.mul_vec(&x);
            let lambda: f64 = x.iter().zip(&tx).map(|(a, b)| a * b).sum();
            let res = x
                .iter()
                .zip(&tx)
                .map(|(a, b)| (b - lambda * a).powi(2))
                .sum::<f64>()
                .sqrt()
                / scale;
            let done = res < 1e-14;
            if best.as_ref().is_none_or(|b| res < b.residual) {
                best = Some(GroundState {
                    eigenvalue: lambda,
                    vector: x.clone(),
                    residual: res,
                });
            }
            if done {
                break;
            }
        }
        best.ok_or(Error::NonConvergence {
            what: "inverse iteration",
            iterations: 8,
            best: lo,
        })
    }
}
