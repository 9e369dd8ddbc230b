//! Training harness: losses, Adam, the alternating generator/discriminator
//! loop, and the flat key=value config format.

pub mod adam;
pub mod config;
pub mod loss;
pub mod trainer;
