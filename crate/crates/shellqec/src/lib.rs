pub use shellqec_core as core;

pub mod fusion;
pub mod io;
pub mod lab;
