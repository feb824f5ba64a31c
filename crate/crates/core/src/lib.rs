pub mod geo;
pub mod io;
pub mod synth;
pub mod util;
pub mod views;
pub mod model;
pub mod objectives;
pub mod pipeline;
pub mod eval;
