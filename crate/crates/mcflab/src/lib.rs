//! Planar multiphase mean curvature flow: front tracking of curve networks,
//! gradient-flow calibrations, threshold dynamics and relative-entropy diagnostics.

pub mod curve;
pub mod entropy;
pub mod experiments;
pub mod geom;
pub mod localfields;
pub mod netcalib;
pub mod network;
mod par;
pub mod scenes;
pub mod strongflow;
pub mod svg;
pub mod smooth;
pub mod tensions;
pub mod triodfields;
pub mod weakmbo;
