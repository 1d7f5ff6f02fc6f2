//! Event-camera toolkit: event streams, codecs, synthesis, filters, frequency
//! maps, a complex steerable pyramid and phase-based motion magnification.

pub mod cli;
pub mod error;
pub mod event_codec;
pub mod event_filters;
pub mod event_model;
pub mod event_synth;
pub mod fft2;
pub mod frame;
pub mod freqmap;
pub mod image_io;
pub mod magnify;
pub mod steerable;

pub use error::{Error, Result};
