//! Simulation and sampling toolkit for two-type hard-sphere / particle
//! mixtures with depletion interaction.

pub mod depletion;
pub mod diagnostics;
pub mod dynamics;
pub mod geometry;
pub mod par;
pub mod gibbs;
pub mod io;
pub mod penalisation;
pub mod report;
pub mod stats;
