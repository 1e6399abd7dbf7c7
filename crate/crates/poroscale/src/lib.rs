//! Two-scale upscaling simulator for reactive transport in a porous medium
//! whose solid grains grow and shrink by surface reactions.
//!
//! The crate computes effective coefficients (porosity, diffusivity,
//! permeability) from periodic cell problems on a radius-parameterized
//! perforated unit cell and evolves the coupled macroscopic system
//! (Darcy flow + advection-reaction-diffusion + radius ODE), together with a
//! verification suite for the algebraic identities the construction obeys.

pub mod cell;
pub mod config;
pub mod error;
pub mod geometry;
pub mod fem;
pub mod macrosim;
pub mod mesh;
pub mod mms;
pub mod output;
pub mod physics;
pub mod la;
pub mod sparse;
pub mod table;

pub mod verify;

pub use error::{Error, Result};
