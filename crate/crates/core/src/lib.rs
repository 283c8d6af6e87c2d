pub mod dapo;
pub mod eval;
pub mod logic;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod synth;
pub mod verifier;
