//! The end-to-end fusion network.
//!
//! ```text
//! X_up = bicubic(X)
//! S_pe = spectral_encoder(X)              [h, w, D1]
//! S_pa = spatial_encoder([X_up, Y])       [H, W, D2]
//! E    = fuse_map(S_pe, S_pa)             [H, W, C]
//! out  = decoder(E) + X_up                [H, W, S]
//! ```
//!
//! All public entry points take and return channels-last `[H, W, C]`
//! tensors. The fusion stage can be swapped for a plain upsampler to
//! reproduce the upsampler ablation; see [`Upsampler`].

mod arch;
pub mod resample;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use arch::{Architecture, Upsampler};
pub use resample::{bicubic_upsample, bilinear_upsample};

use crate::error::{Error, Result};
use crate::fusion::fuse_map;
use crate::grid::{all_queries, normalized_grid};
use crate::layers::{Conv, ConvStack, Mlp};
use crate::tensor::{checkpoint, ops, Parameter, Tensor};

/// All learnable state of one model, plus the descriptor it was built from.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub arch: Architecture,
    pub spectral: ConvStack,
    pub spatial: ConvStack,
    /// Fusion MLP for the INF³ stage, or the affine merge for the plain
    /// upsamplers.
    pub fusion: Mlp,
    /// Sub-pixel convolution, present only for [`Upsampler::PixelShuffle`].
    pub shuffle: Option<Conv>,
    pub decoder: ConvStack,
}

impl ModelParams {
    /// Seeded uniform initialization.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = &arch.fusion;
        let mut spectral_ch = vec![arch.bands];
        spectral_ch.extend(std::iter::repeat_n(f.d1, arch.spectral_depth));
        let mut spatial_ch = vec![arch.bands + arch.msi_bands];
        spatial_ch.extend(std::iter::repeat_n(f.d2, arch.spatial_depth));
        let k = arch.kernel_size;

        let spectral = ConvStack::new("spectral", &spectral_ch, k, true, &mut rng)?;
        let spatial = ConvStack::new("spatial", &spatial_ch, k, true, &mut rng)?;
        let fusion = Mlp::new("fusion", &arch.fusion_widths(), &mut rng)?;
        let shuffle = match arch.upsampler {
            Upsampler::PixelShuffle => Some(Conv::new("shuffle", f.d1, f.r * f.r * f.c, k, &mut rng)?),
            _ => None,
        };
        let decoder = ConvStack::new("decoder", &[f.c, arch.decoder_hidden, arch.bands], k, arch.decoder_relu, &mut rng)?;
        Ok(ModelParams { arch: arch.clone(), spectral, spatial, fusion, shuffle, decoder })
    }

    /// Every parameter set to zero.
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        let mut p = Self::init(arch, 0)?;
        for q in p.params_mut() {
            q.set_data(vec![0.0; q.data().len()])?;
        }
        Ok(p)
    }

    /// Parameters in canonical (checkpoint) order.
    pub fn params(&self) -> impl Iterator<Item = &Parameter> {
        self.spectral
            .params()
            .chain(self.spatial.params())
            .chain(self.fusion.params())
            .chain(self.shuffle.iter().flat_map(|c| [&c.weight, &c.bias]))
            .chain(self.decoder.params())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.spectral
            .params_mut()
            .chain(self.spatial.params_mut())
            .chain(self.fusion.params_mut())
            .chain(self.shuffle.iter_mut().flat_map(|c| [&mut c.weight, &mut c.bias]))
            .chain(self.decoder.params_mut())
    }

    /// Number of learnable scalars.
    pub fn param_count(&self) -> usize {
        self.params().map(|p| p.data().len()).sum()
    }

    /// Current parameter values as graph leaves, in canonical order.
    pub fn tensors(&self) -> Vec<Tensor> {
        self.params().map(|p| p.tensor().clone()).collect()
    }

    /// A copy computing with the given tensors (canonical order), so that
    /// gradients land in them.
    pub fn with_tensors(&self, tensors: &[Tensor]) -> Result<Self> {
        let n = self.params().count();
        if tensors.len() != n {
            return Err(Error::shape("ModelParams::with_tensors", "tensor count", n, tensors.len()));
        }
        let mut out = self.clone();
        for (p, t) in out.params_mut().zip(tensors) {
            *p = p.with_tensor(t.clone())?;
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let params: Vec<Parameter> = self.params().cloned().collect();
        checkpoint::encode(&self.arch.to_header(), &params)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, loaded) = checkpoint::decode(bytes)?;
        let arch = Architecture::from_header(&header)?;
        let mut model = Self::zeros(&arch)?;
        let expected = model.params().count();
        if loaded.len() != expected {
            return Err(Error::ArchitectureMismatch(format!(
                "descriptor implies {expected} parameters, checkpoint holds {}",
                loaded.len()
            )));
        }
        for (slot, p) in model.params_mut().zip(loaded) {
            if slot.name != p.name || slot.shape() != p.shape() {
                return Err(Error::ArchitectureMismatch(format!(
                    "expected {} {:?}, checkpoint has {} {:?}",
                    slot.name,
                    slot.shape(),
                    p.name,
                    p.shape()
                )));
            }
            *slot = p;
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

fn to_nchw(x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    ops::reshape(&ops::permute(x, &[2, 0, 1])?, &[1, s[2], s[0], s[1]])
}

fn to_hwc(x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    ops::permute(&ops::reshape(x, &[s[1], s[2], s[3]])?, &[1, 2, 0])
}

fn expect_image(op: &'static str, x: &Tensor, channels: usize, what: &str) -> Result<(usize, usize)> {
    if x.ndim() != 3 {
        return Err(Error::invalid_shape(op, format!("{what} must be [H, W, C], got {:?}", x.shape())));
    }
    if x.shape()[2] != channels {
        return Err(Error::ShapeMismatch { op, axis: format!("{what} bands"), expected: channels, got: x.shape()[2] });
    }
    Ok((x.shape()[0], x.shape()[1]))
}

/// Spectral feature map `S_pe: [h, w, D1]`.
pub fn encode_spectral(x: &Tensor, params: &ModelParams) -> Result<Tensor> {
    expect_image("encode_spectral", x, params.arch.bands, "LR-HSI")?;
    to_hwc(&params.spectral.forward(&to_nchw(x)?)?)
}

/// Spatial feature map `S_pa: [H, W, D2]` from the upsampled HSI and the MSI.
pub fn encode_spatial(x_up: &Tensor, y: &Tensor, params: &ModelParams) -> Result<Tensor> {
    let (h, w) = expect_image("encode_spatial", x_up, params.arch.bands, "upsampled HSI")?;
    let (hy, wy) = expect_image("encode_spatial", y, params.arch.msi_bands, "HR-MSI")?;
    if (h, w) != (hy, wy) {
        return Err(Error::invalid_shape("encode_spatial", format!("upsampled HSI is {h}x{w} but HR-MSI is {hy}x{wy}")));
    }
    let input = ops::concat_channels(&[to_nchw(x_up)?, to_nchw(y)?])?;
    to_hwc(&params.spatial.forward(&input)?)
}

/// Two-layer convolutional decoder `[H, W, C] → [H, W, S]`.
pub fn decode(e: &Tensor, params: &ModelParams) -> Result<Tensor> {
    expect_image("decode", e, params.arch.fusion.c, "fused features")?;
    to_hwc(&params.decoder.forward(&to_nchw(e)?)?)
}

/// The configured model: `decode(E) + bicubic(X)`.
pub fn forward(x: &Tensor, y: &Tensor, params: &ModelParams) -> Result<Tensor> {
    let arch = &params.arch;
    let r = arch.fusion.r;
    let (h, w) = expect_image("forward", x, arch.bands, "LR-HSI")?;
    let (hh, ww) = expect_image("forward", y, arch.msi_bands, "HR-MSI")?;
    if hh != r * h || ww != r * w {
        return Err(Error::invalid_shape(
            "forward",
            format!("HR-MSI is {hh}x{ww}, expected {}x{} for scale {r} over a {h}x{w} LR-HSI", r * h, r * w),
        ));
    }
    let x_up = bicubic_upsample(x, r)?;
    let s_pe = encode_spectral(x, params)?;
    let s_pa = encode_spatial(&x_up, y, params)?;
    let e = match arch.upsampler {
        Upsampler::Inf3 => {
            let queries = all_queries(&normalized_grid(hh, ww)?, h, w);
            fuse_map(&s_pe, &s_pa, &queries, &arch.fusion, &params.fusion)?
        }
        Upsampler::Bilinear | Upsampler::Bicubic => {
            let up =
                if arch.upsampler == Upsampler::Bilinear { bilinear_upsample(&s_pe, r)? } else { bicubic_upsample(&s_pe, r)? };
            merge(&up, &s_pa, params)?
        }
        Upsampler::PixelShuffle => {
            let conv = params
                .shuffle
                .as_ref()
                .ok_or_else(|| Error::ArchitectureMismatch("pixel shuffle model has no sub-pixel convolution".into()))?;
            let up = to_hwc(&ops::pixel_shuffle(&conv.forward(&to_nchw(&s_pe)?)?, r)?)?;
            merge(&up, &s_pa, params)?
        }
    };
    ops::add(&decode(&e, params)?, &x_up)
}

/// Per-pixel affine merge of upsampled spectral features with `S_pa`.
fn merge(up: &Tensor, s_pa: &Tensor, params: &ModelParams) -> Result<Tensor> {
    let (h, w) = (s_pa.shape()[0], s_pa.shape()[1]);
    let joined = ops::concat_last(&[up.clone(), s_pa.clone()])?;
    let width = joined.shape()[2];
    let rows = params.fusion.forward(&ops::reshape(&joined, &[h * w, width])?)?;
    ops::reshape(&rows, &[h, w, params.arch.fusion.c])
}

/// Runs the model with the fusion stage replaced by `mode`. The parameters
/// must have been built for that mode.
pub fn upsample_ablation(x: &Tensor, y: &Tensor, mode: Upsampler, params: &ModelParams) -> Result<Tensor> {
    if params.arch.upsampler != mode {
        return Err(Error::ArchitectureMismatch(format!(
            "parameters were built for the {} upsampler, not {}",
            params.arch.upsampler.name(),
            mode.name()
        )));
    }
    forward(x, y, params)
}
