//! Input-adaptive operators: deformable convolution driven by learned offset
//! fields, and region-wise convolution with dynamically generated filters.

pub mod adaptive_conv;
pub mod capm;
pub mod deform;
pub mod offset;
pub mod region;
pub mod wgen;
