pub mod engine;
pub mod formula;
pub mod model;
pub mod circuit;
pub mod game;
pub mod metafold;
pub mod suite;
