//! Weakly-supervised patch-label distillation for pavement disease detection.
//!
//! A pavement image carries only an image-level label. It is equalized, cut
//! into non-overlapping square patches, and a patch scorer is trained by
//! alternating between fitting the current patch labels (M-step) and
//! re-deriving the labels of diseased images from the scorer's confidences
//! (E-step). An image is diseased when its most confident patch is.
//!
//! The crate is `no_std` (it needs `alloc`). Enabling the `std` feature turns
//! on runtime SIMD dispatch in the matrix kernels and `std::error::Error`
//! integration; it does not change any numerical result.
#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_op_in_unsafe_fn)]

extern crate alloc;

pub mod corpus;
pub mod detect;
pub mod emipld;
pub mod error;
pub mod metrics;
pub mod plin;
pub mod preprocess;
pub mod raster;
pub mod seed;

pub use error::{Error, Result};
pub use raster::Raster;
