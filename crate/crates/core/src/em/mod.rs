//! Multiport network model of a surface of loaded thin-wire dipoles.

pub mod dipole;
pub mod network;
pub mod touchstone;

pub use dipole::{mutual_impedance, self_impedance, DipoleSpec, ETA0};
pub use network::{
    build_impedance_matrix, condition_number, realistic_channel, s_to_z, z_to_s, z_to_s_partition,
    CMatrix, CVector, ImpedanceMatrix, MultiportNetwork, NetworkBuilder, PairConfiguration,
    PairGeometry,
};
pub use touchstone::{
    read_matrix_csv, read_touchstone, write_matrix_csv, write_touchstone, FrequencyPoint,
};
