//! Scalable EEG preprocessing for machine-learning corpora.
//!
//! The crate turns raw EDF/EDF+ recordings into uniform, artifact-cleaned
//! channels-by-samples windows plus a structured decision log. The stages,
//! wired together by [`pipeline`], are:
//!
//! 1. [`edf`] — parse EDF/EDF+ into calibrated microvolt recordings
//! 2. [`channels`] — standardize names, drop non-EEG, attach montage positions
//! 3. [`segment`] — fixed-duration windows (pretrain) or event-span crop (downstream)
//! 4. [`quality`] — cheap keep/drop gate on amplitude/variance/bad-channel ratios
//! 5. [`zapline`] — iterative line-noise removal via spectral split + DSS
//! 6. [`badchan`] — flat/deviation/noisiness/correlation/RANSAC channel tests
//! 7. [`filter`], [`detrend`], [`reference`] — zero-phase FIR, robust detrend, average reference
//! 8. [`ica`] — extended Infomax decomposition with rule-based component labelling
//! 9. [`interp`] — spherical-spline interpolation onto the target montage
//! 10. [`resample`] — polyphase rational resampling to the output rate
//!
//! All numeric code is generic over the sample scalar (see [`Scalar`]); the
//! shipped pipeline instantiates `f64` and emits little-endian `f32` windows.

pub mod badchan;
pub mod channels;
pub mod detrend;
pub mod edf;
pub mod filter;
pub mod ica;
pub mod interp;
pub mod linalg;
pub mod pipeline;
pub mod psd;
pub mod quality;
pub mod reference;
pub mod resample;
pub mod segment;
pub mod stats;
pub mod synth;
pub mod zapline;

mod fftutil;

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use ndarray::ScalarOperand;
use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Sample scalar: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + ScalarOperand
    + Sum<Self>
    + rustfft::FftNum
    + Default
    + Display
    + Debug
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from `f64` for constants and geometry.
    fn from_f64_c(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant converts to scalar")
    }

    /// Widen to `f64` for logging and metrics.
    fn to_f64_c(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Scalar used by the shipped CLI pipeline.
pub type PipelineScalar = f64;
/// Recording carrying `f64` samples, as produced by the CLI ingest path.
pub type Recording64 = edf::RawRecording<f64>;
/// Window carrying `f64` samples.
pub type Window64 = segment::Window<f64>;

pub use channels::{ChannelInfo, ChannelType, Montage};
pub use edf::{Annotation, RawRecording};
pub use pipeline::{PipelineConfig, PipelineMode, RunSummary};
pub use segment::Window;
