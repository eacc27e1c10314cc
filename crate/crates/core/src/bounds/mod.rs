//! Planar-variance bounds `C_S`, `C̃_S = C_S/S` and `ζ_S²` over pure spin-S states.

mod solver;
mod table;
mod tridiag;

pub use solver::{solve_c_s, solve_zeta2, BoundSettings, CsSolution, SpinOperators, ZetaSolution};
pub use table::{
    asymptotic_check, build_table, cache_key, interpolate_c_tilde, interpolate_zeta2,
    load_or_build, BoundEntry, BoundTable, SpinGrid, TableProvenance,
};
pub use tridiag::{GroundState, SymTridiagonal};
