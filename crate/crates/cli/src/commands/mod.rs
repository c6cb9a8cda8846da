pub mod experiments;
pub mod register;
pub mod sample;
pub mod sweep;
pub mod synth;
pub mod train;
