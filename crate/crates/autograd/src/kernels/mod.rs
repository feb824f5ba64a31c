//! Hand-written forward/backward pairs for the fused operations.
//!
//! Each kernel works on raw tensors and knows nothing about the tape; the
//! graph stores whatever cache the backward half needs.

pub mod attention;
pub mod gat;
pub mod gru;
pub mod norm;
