use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A hyperspectral cube stored band-interleaved by pixel:
/// sample `(i, j, b)` lives at `(i·width + j)·bands + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    height: usize,
    width: usize,
    bands: usize,
    data: Vec<f64>,
    wavelengths: Option<Vec<f64>>,
}

impl HsiCube {
    pub fn new(height: usize, width: usize, bands: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || bands == 0 {
            return Err(Error::InvalidArgument(format!("cube extents must be positive, got {height}x{width}x{bands}")));
        }
        if data.len() != height * width * bands {
            return Err(Error::shape("HsiCube::new", "data length", height * width * bands, data.len()));
        }
        Ok(HsiCube { height, width, bands, data, wavelengths: None })
    }

    pub fn from_fn(height: usize, width: usize, bands: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * bands);
        for i in 0..height {
            for j in 0..width {
                for b in 0..bands {
                    data.push(f(i, j, b));
                }
            }
        }
        Self::new(height, width, bands, data)
    }

    pub fn filled(height: usize, width: usize, bands: usize, value: f64) -> Result<Self> {
        Self::new(height, width, bands, vec![value; height * width * bands])
    }

    /// Attaches per-band wavelengths in nanometres.
    pub fn with_wavelengths(mut self, wavelengths: Vec<f64>) -> Result<Self> {
        if wavelengths.len() != self.bands {
            return Err(Error::shape("HsiCube::with_wavelengths", "wavelength count", self.bands, wavelengths.len()));
        }
        self.wavelengths = Some(wavelengths);
        Ok(self)
    }

    /// Same extents and wavelengths, new samples.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        let out = Self::new(self.height, self.width, self.bands, data)?;
        Ok(HsiCube { wavelengths: self.wavelengths.clone(), ..out })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    /// `(height, width, bands)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.bands)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn wavelengths(&self) -> Option<&[f64]> {
        self.wavelengths.as_deref()
    }

    pub fn get(&self, i: usize, j: usize, b: usize) -> f64 {
        self.data[(i * self.width + j) * self.bands + b]
    }

    /// The spectrum at pixel `(i, j)`.
    pub fn pixel(&self, i: usize, j: usize) -> &[f64] {
        let k = (i * self.width + j) * self.bands;
        &self.data[k..k + self.bands]
    }

    /// One band as a row-major `height × width` plane.
    pub fn band(&self, b: usize) -> Vec<f64> {
        self.data.iter().skip(b).step_by(self.bands).copied().collect()
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::InvalidArgument(format!(
                "crop {height}x{width} at ({top}, {left}) exceeds a {}x{} cube",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(height * width * self.bands);
        for i in top..top + height {
            let k = (i * self.width + left) * self.bands;
            data.extend_from_slice(&self.data[k..k + width * self.bands]);
        }
        let out = Self::new(height, width, self.bands, data)?;
        Ok(HsiCube { wavelengths: self.wavelengths.clone(), ..out })
    }

    /// Largest distance of any sample outside `[0, 1]`.
    pub fn range_violation(&self) -> f64 {
        self.data.iter().map(|&v| (-v).max(v - 1.0).max(0.0)).fold(0.0, f64::max)
    }

    /// `[height, width, bands]` tensor sharing the sample order.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[self.height, self.width, self.bands], self.data.clone()).expect("extents match data")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match *t.shape() {
            [h, w, b] => Self::new(h, w, b, t.data().to_vec()),
            _ => Err(Error::invalid_shape("HsiCube::from_tensor", format!("expected [H, W, B], got {:?}", t.shape()))),
        }
    }
}
