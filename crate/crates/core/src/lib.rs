//! Stress-aligned continuous-fibre toolpath planning on tetrahedral meshes.

pub mod boundary;
pub mod config;
pub mod export;
pub mod field2d;
pub mod geometry;
pub mod isopath;
pub mod layer;
pub mod mesh;
pub mod pipeline;
pub mod slicer;
pub mod sparse;
pub mod stress;
pub mod synthetic;
