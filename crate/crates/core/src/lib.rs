//! Density-matrix simulator for a cavity-assisted nonlocal CNOT gate between
//! two remote atoms sharing one entangled photon pair.

pub mod cavity;
pub mod harness;
pub mod noise;
pub mod protocol;
pub mod qstate;
pub mod quad;
