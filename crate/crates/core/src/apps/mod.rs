//! Application drivers.

pub mod collision;
pub mod manipulator;
pub mod moments;
