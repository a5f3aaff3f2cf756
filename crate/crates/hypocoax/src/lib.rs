pub mod analysis;
pub mod cli;
pub mod error;
pub mod field;
pub mod linalg;
pub mod lp;
pub mod lyapunov;
pub mod oracle;
pub mod sampling;
pub mod simulate;
pub mod stability;
pub mod system;
pub mod threads;
