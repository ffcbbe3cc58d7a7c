//! Catalog generation engine.
//!
//! Takes a CSV of sky observations, partitions the sphere into equal-area
//! task cells with overlap rings, clusters every task independently, merges
//! duplicate clusters across task borders and writes a catalog of object
//! identifiers plus the observation-to-object assignments.

pub mod chunk;
pub mod cluster;
pub mod config;
pub mod healpix;
pub mod io;
pub mod merge;
pub mod pipeline;
pub mod quality;
pub mod sphere;
