//! Implicit neural feature fusion of low-resolution hyperspectral and
//! high-resolution multispectral images.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: a small `f64` tensor with reverse-mode differentiation,
//!   Adam, and a checkpoint container.
//! - [`grid`]: normalised pixel-centre coordinates and four-neighbour queries.
//! - [`kernels`]: area and cosine-similarity interpolation weights.
//! - [`fusion`]: the dual high-frequency feature assembly and fused feature map.
//! - [`network`]: encoders, decoder, resamplers and the end-to-end model.
//! - [`simdata`]: degradation simulation and the cube file format.
//! - [`metrics`]: PSNR, SAM, ERGAS, SSIM and reports.
//! - [`train`]: the training loop and ablation driver.
//!
//! A narrative guide lives in the `book/` directory of the repository; its
//! code listings are compiled as doctests of this crate.

mod binio;
pub mod error;
pub mod fusion;
pub mod grid;
pub mod kernels;
pub mod layers;
pub mod metrics;
pub mod network;
pub mod simdata;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/coordinates.md")]
    mod coordinates {}
    #[doc = include_str!("../../../book/src/weights.md")]
    mod weights {}
    #[doc = include_str!("../../../book/src/fusion.md")]
    mod fusion {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
