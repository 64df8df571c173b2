pub mod encoder;
pub mod graph;
pub mod lpe;
pub mod model;
pub mod numerics;
pub mod pe_init;
pub mod config;
pub mod training;
pub mod synthetic;
pub mod checks;
