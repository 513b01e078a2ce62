//! Next-slot prediction of 5G NR physical-layer control messages.
//!
//! The pipeline runs log ingestion ([`phylog`]) or simulated traffic
//! ([`trafficgen`]) through the slot vocabulary ([`slottok`]) into a tiny
//! decoder-only Transformer ([`nanoformer`]). Predictions are decoded under the
//! slot grammar ([`synchk`]) and scored with edit-distance and channel
//! precision metrics ([`evalkit`]). [`cli`] wires the stages together.

pub mod cli;
pub mod evalkit;
pub mod nanoformer;
pub mod phylog;
pub mod slottok;
pub mod synchk;
pub mod trafficgen;
