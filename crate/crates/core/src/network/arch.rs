use crate::error::{Error, Result};
use crate::fusion::{FusionConfig, WeightMode};
use crate::kernels::LogitMode;

/// What sits between the encoders and the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Upsampler {
    Bilinear,
    Bicubic,
    PixelShuffle,
    #[default]
    Inf3,
}

impl Upsampler {
    pub const ALL: [Upsampler; 4] = [Upsampler::Bilinear, Upsampler::Bicubic, Upsampler::PixelShuffle, Upsampler::Inf3];

    pub fn name(self) -> &'static str {
        match self {
            Upsampler::Bilinear => "bilinear",
            Upsampler::Bicubic => "bicubic",
            Upsampler::PixelShuffle => "pixel_shuffle",
            Upsampler::Inf3 => "inf3",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|u| u.name() == s)
    }
}

/// Everything needed to rebuild a model's parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    /// Hyperspectral band count `S`.
    pub bands: usize,
    /// Multispectral band count `s`.
    pub msi_bands: usize,
    pub fusion: FusionConfig,
    /// Convolutions in the spectral encoder.
    pub spectral_depth: usize,
    /// Convolutions in the spatial encoder.
    pub spatial_depth: usize,
    pub kernel_size: usize,
    pub decoder_hidden: usize,
    pub decoder_relu: bool,
    pub upsampler: Upsampler,
}

impl Architecture {
    /// Default depths and kernel sizes around the given band counts and
    /// fusion settings.
    pub fn new(bands: usize, msi_bands: usize, fusion: FusionConfig) -> Self {
        Architecture {
            bands,
            msi_bands,
            fusion,
            spectral_depth: 2,
            spatial_depth: 2,
            kernel_size: 3,
            decoder_hidden: fusion.c,
            decoder_relu: true,
            upsampler: Upsampler::Inf3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.fusion.validate()?;
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.bands == 0 || self.msi_bands == 0 {
            return bad(format!("band counts must be positive (S={}, s={})", self.bands, self.msi_bands));
        }
        if self.spectral_depth == 0 || self.spatial_depth == 0 {
            return bad("encoder depths must be at least 1".into());
        }
        if self.kernel_size.is_multiple_of(2) {
            return bad(format!("kernel size must be odd, got {}", self.kernel_size));
        }
        if self.decoder_hidden == 0 {
            return bad("decoder hidden width must be positive".into());
        }
        Ok(())
    }

    /// Layer widths of the fusion-stage MLP for the configured upsampler.
    pub fn fusion_widths(&self) -> Vec<usize> {
        let f = &self.fusion;
        let d_in = match self.upsampler {
            Upsampler::Inf3 => return f.mlp_widths(),
            Upsampler::Bilinear | Upsampler::Bicubic => f.d1 + f.d2,
            Upsampler::PixelShuffle => f.c + f.d2,
        };
        match f.mlp_hidden {
            None => vec![d_in, f.c],
            Some(h) => vec![d_in, h, f.c],
        }
    }

    /// `key=value` lines, one per field, in a fixed order.
    pub fn to_header(&self) -> String {
        let f = &self.fusion;
        let fields: [(&str, String); 18] = [
            ("bands", self.bands.to_string()),
            ("msi_bands", self.msi_bands.to_string()),
            ("d1", f.d1.to_string()),
            ("d2", f.d2.to_string()),
            ("c", f.c.to_string()),
            ("scale", f.r.to_string()),
            ("lr_injection", f.use_lr_injection.to_string()),
            ("hr_injection", f.use_hr_injection.to_string()),
            ("rel_coord", f.use_rel_coord.to_string()),
            ("weight_mode", f.weight_mode.name().to_string()),
            ("logit_mode", f.logit_mode.name().to_string()),
            ("mlp_hidden", f.mlp_hidden.map_or("none".into(), |h| h.to_string())),
            ("spectral_depth", self.spectral_depth.to_string()),
            ("spatial_depth", self.spatial_depth.to_string()),
            ("kernel_size", self.kernel_size.to_string()),
            ("decoder_hidden", self.decoder_hidden.to_string()),
            ("decoder_relu", self.decoder_relu.to_string()),
            ("upsampler", self.upsampler.name().to_string()),
        ];
        fields.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn from_header(text: &str) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) =
                line.split_once('=').ok_or_else(|| Error::ArchitectureMismatch(format!("malformed descriptor line {line:?}")))?;
            map.insert(k.trim(), v.trim());
        }
        let get = |k: &str| map.get(k).copied().ok_or_else(|| Error::ArchitectureMismatch(format!("descriptor lacks {k:?}")));
        let bad = |k: &str, v: &str| Error::ArchitectureMismatch(format!("descriptor field {k} has invalid value {v:?}"));
        let num = |k: &str| get(k).and_then(|v| v.parse::<usize>().map_err(|_| bad(k, v)));
        let flag = |k: &str| get(k).and_then(|v| v.parse::<bool>().map_err(|_| bad(k, v)));

        let weight_mode = get("weight_mode").and_then(|v| WeightMode::parse(v).ok_or_else(|| bad("weight_mode", v)))?;
        let logit_mode = get("logit_mode").and_then(|v| LogitMode::parse(v).ok_or_else(|| bad("logit_mode", v)))?;
        let mlp_hidden = match get("mlp_hidden")? {
            "none" => None,
            v => Some(v.parse().map_err(|_| bad("mlp_hidden", v))?),
        };
        let upsampler = get("upsampler").and_then(|v| Upsampler::parse(v).ok_or_else(|| bad("upsampler", v)))?;
        let arch = Architecture {
            bands: num("bands")?,
            msi_bands: num("msi_bands")?,
            fusion: FusionConfig {
                d1: num("d1")?,
                d2: num("d2")?,
                c: num("c")?,
                r: num("scale")?,
                use_lr_injection: flag("lr_injection")?,
                use_hr_injection: flag("hr_injection")?,
                use_rel_coord: flag("rel_coord")?,
                weight_mode,
                logit_mode,
                mlp_hidden,
            },
            spectral_depth: num("spectral_depth")?,
            spatial_depth: num("spatial_depth")?,
            kernel_size: num("kernel_size")?,
            decoder_hidden: num("decoder_hidden")?,
            decoder_relu: flag("decoder_relu")?,
            upsampler,
        };
        arch.validate().map_err(|e| Error::ArchitectureMismatch(e.to_string()))?;
        Ok(arch)
    }
}
