//! Differentially private k-means in the local and shuffle models.
//!
//! Users map their point down a hierarchy of nets, a private generalized
//! histogram estimates how many users sit under each net point, and a tree
//! grown from those estimates yields a small weighted coreset. Any
//! non-private clusterer run on that coreset gives a partition, and private
//! vector sums per part give the final centers.

pub mod error;
pub mod io;
pub mod net_tree;
pub mod nets;
pub mod oracles;
pub mod pipeline;
pub mod points;
pub mod rng;
pub mod transport;

pub use error::{Error, Result};
pub use points::{CenterSet, Partition, Point, WeightedPointSet};
