//! Multispectral face presentation attack detection built on normalized SWIR band differences.

pub mod bandselect;
pub mod cli;
pub mod dataset;
pub mod evalkit;
pub mod models;
pub mod pipeline;
pub mod swirdiff;
pub mod synthgen;
