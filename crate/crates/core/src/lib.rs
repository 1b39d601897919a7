//! Clustering and repair of introductory programming attempts.

pub mod cli;
pub mod cluster;
pub mod feedback;
pub mod frontend;
pub mod ilp;
pub mod interp;
pub mod matching;
pub mod model;
pub mod problem;
pub mod repair;
pub mod service;
pub mod treedist;
