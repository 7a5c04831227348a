//! Toolkit for football tracking data: a canonical match schema, ingestion,
//! a synthetic match generator, event and stint extraction, an expected-goals
//! model, pitch control, and raster rendering.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod events;
pub mod fsutil;
pub mod ingest;
pub mod keyvalue;
pub mod lattice;
pub mod pitchcontrol;
pub mod render;
pub mod schema;
pub mod stints;
pub mod syngen;
pub mod xg;
