pub mod discover;
pub mod eval;
pub mod fetch;
pub mod mitigate;
pub mod report;
pub mod synth;
