//! Synthetic mixture experiments for the private k-means library: dataset
//! generation, the SimHash tree variant, baseline arms and parameter sweeps.

pub mod baselines;
pub mod lsh;
pub mod mixture;
pub mod sweep;
