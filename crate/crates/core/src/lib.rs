pub mod cli;
pub mod eval;
pub mod field;
pub mod geom;
pub mod georef;
pub mod gv;
pub mod imageio;
pub mod program;
pub mod providers;
pub mod registry;
pub mod render;
pub mod scene;
pub mod segment;
