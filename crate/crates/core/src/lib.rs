pub mod classifiers;
pub mod corpus;
pub mod encoders;
pub mod evalkit;
pub mod navsim;
pub mod nnkit;
pub mod policies;
pub mod raster;
pub mod service;
