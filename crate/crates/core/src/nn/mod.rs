//! Standard neural-network operators, each with an explicit backward.

pub mod bilinear;
pub mod conv;
pub mod fc;
pub mod norm;
pub mod pool;
