//! Benchmark systems with known spectral data.

pub mod circle;
pub mod vdp;

pub use circle::{
    circle_alpha, circle_lipschitz, circle_reference, circle_step, circle_variance, generate_circle_batched,
    generate_circle_iid, CircleMapConfig,
};
pub use vdp::{
    lattice_points, nearest_lattice, vdp_batched_from_trajectory, vdp_drift, vdp_em_trajectory, vdp_lattice,
    LatticePoint, VdpConfig,
};
