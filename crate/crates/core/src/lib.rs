//! Homogenization and dimension reduction of thin fiber-reinforced poroelastic plates.
//!
//! The crate covers the full chain from the ε-scale coupled elasticity/pressure
//! problem on a periodic plate, through the reference-cell corrector problems and
//! the homogenized plate tensor, to the macroscopic plate model and the unfolding
//! machinery that compares the two.

pub mod cell;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod io;
pub mod material;
pub mod micro;
pub mod twoscale;
pub mod verify;

pub use error::{Error, Result};
