#![allow(dead_code)]

pub mod encoder_oracles;
pub mod env_checks;
pub mod metric_oracles;
pub mod properties;
pub mod gradients;
pub mod study;
