//! Depth of two-mode entanglement and EPR steering from measured E_HZ and
//! Bloch length, by lookup in a monotone bound table.
//!
//! The certified spin s₀ is the largest tabulated or interpolated half-integer
//! with `bound(s₀) > E_HZ / r`; interpolation never rounds s₀ up.

use serde::{Deserialize, Serialize};

use crate::bounds::BoundTable;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthKind {
    Entanglement,
    Steering,
    SteeringPqs,
}

impl DepthKind {
    /// Threshold the measured quantity must beat before any depth is certified.
    pub fn gate(self) -> f64 {
        match self {
            DepthKind::Entanglement => 1.0,
            DepthKind::Steering | DepthKind::SteeringPqs => 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthInputs {
    pub e_hz: f64,
    /// `r` for entanglement/steering, `r_∥` for the planar criterion.
    pub r: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthResult {
    pub kind: DepthKind,
    pub s0: f64,
    pub n_lower_bound: u32,
    /// `bound(s₀) − E_HZ/r`, or `gate − E_HZ` when only the head of the table applies.
    pub margin: f64,
    pub ratio: f64,
    /// C̃ (or ζ²) at s₀
    pub bound_at_s0: f64,
    /// s₀ = 1/2 from the gate alone, the ratio exceeding every tabulated bound.
    pub head_of_table: bool,
    /// The ratio is below the bound at the last row, so a larger table may certify more.
    pub table_limited: bool,
    pub inputs: DepthInputs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DepthOutcome {
    Certified(DepthResult),
    NotCertified {
        kind: DepthKind,
        reason: String,
        inputs: DepthInputs,
    },
}

impl DepthOutcome {
    pub fn certified(&self) -> Option<&DepthResult> {
        match self {
            DepthOutcome::Certified(r) => Some(r),
            DepthOutcome::NotCertified { .. } => None,
        }
    }

    pub fn n_lower_bound(&self) -> Option<u32> {
        self.certified().map(|r| r.n_lower_bound)
    }
}

enum Search {
    /// Ratio at or above the first node.
    Head,
    Found {
        two_s: u32,
        bound: f64,
        table_limited: bool,
    },
}

fn loglog_between(a: (u32, f64), b: (u32, f64), two_s: u32) -> f64 {
    let w =
        (f64::from(two_s).ln() - f64::from(a.0).ln()) / (f64::from(b.0).ln() - f64::from(a.0).ln());
    (a.1.ln() + w * (b.1.ln() - a.1.ln())).exp()
}

/// Largest integer 2S whose (interpolated) bound exceeds `x`.
fn search(nodes: &[(u32, f64)], x: f64) -> Search {
    let above = nodes.partition_point(|(_, v)| *v > x);
    if above == 0 {
        return Search::Head;
    }
    let a = nodes[above - 1];
    if above == nodes.len() {
        return Search::Found {
            two_s: a.0,
            bound: a.1,
            table_limited: true,
        };
    }
    let b = nodes[above];
    // integers in (a.0, b.0) whose chord value still exceeds x
    let span: Vec<u32> = (a.0 + 1..b.0).collect();
    let k = span.partition_point(|&t| loglog_between(a, b, t) > x);
    if k == 0 {
        Search::Found {
            two_s: a.0,
            bound: a.1,
            table_limited: false,
        }
    } else {
        let t = span[k - 1];
        Search::Found {
            two_s: t,
            bound: loglog_between(a, b, t),
            table_limited: false,
        }
    }
}

fn check_inputs(e_hz: f64, r: f64, label: &str) -> Result<()> {
    if !(e_hz >= 0.0) || !e_hz.is_finite() {
        return Err(Error::invalid(format!(
            "E_HZ must be finite and >= 0, got {e_hz}"
        )));
    }
    if !(r > 0.0) || r > 1.0 + 1e-12 {
        return Err(Error::invalid(format!(
            "{label} must lie in (0, 1], got {r}"
        )));
    }
    Ok(())
}

fn infer(kind: DepthKind, e_hz: f64, r: f64, nodes: &[(u32, f64)]) -> DepthOutcome {
    let inputs = DepthInputs { e_hz, r };
    let ratio = e_hz / r;
    let gated = match kind {
        DepthKind::SteeringPqs => ratio,
        _ => e_hz,
    };
    if gated >= kind.gate() {
        return DepthOutcome::NotCertified {
            kind,
            reason: format!(
                "{} = {gated} does not beat the threshold {}",
                if kind == DepthKind::SteeringPqs {
                    "E_HZ/r_par"
                } else {
                    "E_HZ"
                },
                kind.gate()
            ),
            inputs,
        };
    }
    match search(nodes, ratio) {
        Search::Head => DepthOutcome::Certified(DepthResult {
            kind,
            s0: 0.5,
            n_lower_bound: 1,
            margin: kind.gate() - gated,
            ratio,
            bound_at_s0: 0.5,
            head_of_table: true,
            table_limited: false,
            inputs,
        }),
        Search::Found {
            two_s,
            bound,
            table_limited,
        } => {
            if kind == DepthKind::Steering && r * bound > 0.5 {
                return DepthOutcome::NotCertified {
                    kind,
                    reason: format!("r * C~ = {} exceeds 0.5", r * bound),
                    inputs,
                };
            }
            DepthOutcome::Certified(DepthResult {
                kind,
                s0: f64::from(two_s) / 2.0,
                n_lower_bound: two_s,
                margin: bound - ratio,
                ratio,
                bound_at_s0: bound,
                head_of_table: false,
                table_limited,
                inputs,
            })
        }
    }
}

fn c_tilde_nodes(table: &BoundTable) -> Vec<(u32, f64)> {
    table.entries.iter().map(|e| (e.two_s, e.c_tilde)).collect()
}

/// Entanglement depth: largest s₀ with `E_HZ / r < C̃_{s₀}`, gated by `E_HZ < 1`.
pub fn infer_depth_entanglement(e_hz: f64, r: f64, table: &BoundTable) -> Result<DepthOutcome> {
    check_inputs(e_hz, r, "r")?;
    Ok(infer(
        DepthKind::Entanglement,
        e_hz,
        r,
        &c_tilde_nodes(table),
    ))
}

/// Steering depth: as for entanglement, gated by `E_HZ < 0.5` and `rC̃_{s₀} ≤ 0.5`.
pub fn infer_depth_steering(e_hz: f64, r: f64, table: &BoundTable) -> Result<DepthOutcome> {
    check_inputs(e_hz, r, "r")?;
    Ok(infer(DepthKind::Steering, e_hz, r, &c_tilde_nodes(table)))
}

/// Planar-squeezing steering depth: largest s₀ with `E / r_∥ < ζ²_{s₀}`.
pub fn infer_depth_pqs(e_hz: f64, r_parallel: f64, table: &BoundTable) -> Result<DepthOutcome> {
    check_inputs(e_hz, r_parallel, "r_parallel")?;
    let nodes: Vec<(u32, f64)> = table
        .entries
        .iter()
        .filter_map(|e| e.zeta2.map(|z| (e.two_s, z)))
        .collect();
    if nodes.is_empty() {
        return Err(Error::InsufficientData(
            "bound table has no zeta2 column".into(),
        ));
    }
    Ok(infer(DepthKind::SteeringPqs, e_hz, r_parallel, &nodes))
}

pub fn infer_depth(kind: DepthKind, e_hz: f64, r: f64, table: &BoundTable) -> Result<DepthOutcome> {
    match kind {
        DepthKind::Entanglement => infer_depth_entanglement(e_hz, r, table),
        DepthKind::Steering => infer_depth_steering(e_hz, r, table),
        DepthKind::SteeringPqs => infer_depth_pqs(e_hz, r, table),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{build_table, BoundSettings, SpinGrid};
    use std::sync::OnceLock;

    fn table() -> &'static BoundTable {
        static T: OnceLock<BoundTable> = OnceLock::new();
        T.get_or_init(|| build_table(&SpinGrid::new(40), &BoundSettings::default(), true).unwrap())
    }

    fn calibration() -> BoundTable {
        BoundTable::from_c_tilde(
            &[
                (21, 0.1952),
                (42, 0.1581),
                (87, 0.1262),
                (223, 0.0938),
                (456, 0.07459),
                (4772, 0.034776),
            ],
            "calibration",
        )
        .unwrap()
    }

    #[test]
    fn calibration_rows_round_trip() {
        let t = calibration();
        let cases = [
            (0.1951, 21),
            (0.1572, 42),
            (0.1261, 87),
            (0.0936, 223),
            (0.07457, 456),
            (0.034775, 4772),
        ];
        for (i, (x, n)) in cases.into_iter().enumerate() {
            let got = infer_depth_steering(x, 1.0, &t)
                .unwrap()
                .n_lower_bound()
                .unwrap();
            // between nodes the log-log chord may still certify a little more
            let next = cases.get(i + 1).map_or(u32::MAX, |c| c.1);
            assert!(got >= n && got < next, "x={x}: {got}");
        }
        for (x, n) in [(0.1572, 42), (0.1261, 87), (0.034775, 4772)] {
            assert_eq!(
                infer_depth_steering(x, 1.0, &t).unwrap().n_lower_bound(),
                Some(n)
            );
        }
    }

    #[test]
    fn head_of_table_cases() {
        let out = infer_depth_entanglement(0.99, 1.0, table()).unwrap();
        let r = out.certified().unwrap();
        assert_eq!((r.n_lower_bound, r.head_of_table), (1, true));
        assert!((r.margin - 0.01).abs() < 1e-12);

        let out = infer_depth_steering(0.45, 1.0, table()).unwrap();
        let r = out.certified().unwrap();
        assert_eq!(r.n_lower_bound, 1);
        assert!(!r.head_of_table);
        assert!((r.bound_at_s0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gates() {
        assert!(infer_depth_steering(0.6, 1.0, table())
            .unwrap()
            .certified()
            .is_none());
        assert!(infer_depth_entanglement(1.0, 1.0, table())
            .unwrap()
            .certified()
            .is_none());
        assert!(infer_depth_entanglement(0.3, 0.0, table()).is_err());
        assert!(infer_depth_entanglement(-0.1, 0.5, table()).is_err());
        assert!(infer_depth_pqs(0.5, 1.0, table())
            .unwrap()
            .certified()
            .is_none());
        let no_zeta = calibration();
        assert!(matches!(
            infer_depth_pqs(0.1, 1.0, &no_zeta),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn pqs_boundaries() {
        let z1 = table().entries[1].zeta2.unwrap();
        let out = infer_depth_pqs(z1 - 1e-9, 1.0, table()).unwrap();
        assert_eq!(out.n_lower_bound(), Some(2));
        let out = infer_depth_pqs(0.5 - 1e-9, 1.0, table()).unwrap();
        assert_eq!(out.n_lower_bound(), Some(1));
    }

    #[test]
    fn table_limit_flagged() {
        let out = infer_depth_steering(0.01, 1.0, table()).unwrap();
        let r = out.certified().unwrap();
        assert!(r.table_limited);
        assert_eq!(r.n_lower_bound, 40);
    }

    #[test]
    fn interpolation_never_over_certifies() {
        let dense = table();
        let rows: Vec<(u32, f64)> = dense
            .entries
            .iter()
            .filter(|e| e.two_s == 1 || e.two_s % 5 == 0)
            .map(|e| (e.two_s, e.c_tilde))
            .collect();
        let sparse = BoundTable::from_c_tilde(&rows, "sparse").unwrap();
        for i in 0..400 {
            let x = 0.2 + 0.3 * f64::from(i) / 400.0;
            let a = infer_depth_entanglement(x, 1.0, dense)
                .unwrap()
                .n_lower_bound();
            let b = infer_depth_entanglement(x, 1.0, &sparse)
                .unwrap()
                .n_lower_bound();
            assert!(b <= a, "x={x}: sparse {b:?} > dense {a:?}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn monotone_in_e_hz(e1 in 0.0..1.2f64, e2 in 0.0..1.2f64, r in 0.05..1.0f64) {
                let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
                for kind in [DepthKind::Entanglement, DepthKind::Steering, DepthKind::SteeringPqs] {
                    let a = infer_depth(kind, lo, r, table()).unwrap().n_lower_bound().unwrap_or(0);
                    let b = infer_depth(kind, hi, r, table()).unwrap().n_lower_bound().unwrap_or(0);
                    prop_assert!(a >= b);
                }
            }

            #[test]
            fn steering_implies_entanglement(e in 0.0..0.6f64, r in 0.05..1.0f64) {
                let st = infer_depth_steering(e, r, table()).unwrap();
                if let Some(s) = st.certified() {
                    let en = infer_depth_entanglement(e, r, table()).unwrap();
                    let en = en.certified().expect("steering implies entanglement");
                    prop_assert!(en.n_lower_bound >= s.n_lower_bound);
                    prop_assert_eq!(s.n_lower_bound as f64, 2.0 * s.s0);
                    prop_assert!(s.margin > 0.0);
                }
            }
        }
    }
}
