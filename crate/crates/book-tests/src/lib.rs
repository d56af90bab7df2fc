//! mdbook cannot run a book's code blocks against a crate dependency, so
//! this crate includes each chapter as module documentation and lets
//! `cargo test --doc` execute every Rust snippet. A chapter edit that
//! breaks a snippet fails the build here.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/energy-model.md")]
pub mod energy_model {}

#[doc = include_str!("../../../book/src/trip-data.md")]
pub mod trip_data {}

#[doc = include_str!("../../../book/src/uncertainty-models.md")]
pub mod uncertainty_models {}

#[doc = include_str!("../../../book/src/predicting-consumption.md")]
pub mod predicting_consumption {}

#[doc = include_str!("../../../book/src/detection.md")]
pub mod detection {}

#[doc = include_str!("../../../book/src/simulation-study.md")]
pub mod simulation_study {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
