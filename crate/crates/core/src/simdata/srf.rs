use std::path::Path;

use crate::error::{Error, Result};

/// Column-normalized `bands_in × bands_out` projection from hyperspectral to
/// multispectral bands.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResponse {
    bands_in: usize,
    bands_out: usize,
    /// Row-major, `matrix[b·bands_out + o]`.
    matrix: Vec<f64>,
    names: Vec<String>,
}

const COLUMN_TOL: f64 = 1e-9;

impl SpectralResponse {
    /// Validates an already-normalized matrix.
    pub fn new(bands_in: usize, bands_out: usize, matrix: Vec<f64>) -> Result<Self> {
        let srf = Self::unchecked(bands_in, bands_out, matrix, default_names(bands_out))?;
        for o in 0..bands_out {
            let s = srf.column_sum(o);
            if (s - 1.0).abs() > COLUMN_TOL {
                return Err(Error::BadSrf(format!("column {o} sums to {s}, expected 1")));
            }
        }
        Ok(srf)
    }

    /// Scales each column of a raw non-negative response to unit sum.
    pub fn normalized(bands_in: usize, bands_out: usize, raw: Vec<f64>, names: Vec<String>) -> Result<Self> {
        let mut srf = Self::unchecked(bands_in, bands_out, raw, names)?;
        for o in 0..bands_out {
            let s = srf.column_sum(o);
            if s <= 0.0 {
                return Err(Error::BadSrf(format!("column {:?} is all zero", srf.names[o])));
            }
            for b in 0..bands_in {
                srf.matrix[b * bands_out + o] /= s;
            }
        }
        Ok(srf)
    }

    fn unchecked(bands_in: usize, bands_out: usize, matrix: Vec<f64>, names: Vec<String>) -> Result<Self> {
        if bands_in == 0 || bands_out == 0 {
            return Err(Error::BadSrf(format!("empty response {bands_in}x{bands_out}")));
        }
        if matrix.len() != bands_in * bands_out {
            return Err(Error::BadSrf(format!("expected {} entries, got {}", bands_in * bands_out, matrix.len())));
        }
        if names.len() != bands_out {
            return Err(Error::BadSrf(format!("{} names for {bands_out} output bands", names.len())));
        }
        if let Some(v) = matrix.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::BadSrf(format!("responses must be finite and non-negative, found {v}")));
        }
        Ok(SpectralResponse { bands_in, bands_out, matrix, names })
    }

    fn column_sum(&self, o: usize) -> f64 {
        (0..self.bands_in).map(|b| self.matrix[b * self.bands_out + o]).sum()
    }

    /// Three triangular responses centred at 450, 550 and 650 nm with a
    /// 100 nm half-width, sampled at the given wavelengths. A column that
    /// samples to zero (very coarse sampling) falls back to uniform.
    pub fn synthetic_rgb(wavelengths: &[f64]) -> Result<Self> {
        let centres = [450.0, 550.0, 650.0];
        let n = wavelengths.len();
        let mut raw = Vec::with_capacity(n * 3);
        for &l in wavelengths {
            for c in centres {
                raw.push((1.0 - (l - c).abs() / 100.0).max(0.0));
            }
        }
        for o in 0..3 {
            if (0..n).all(|b| raw[b * 3 + o] == 0.0) {
                (0..n).for_each(|b| raw[b * 3 + o] = 1.0);
            }
        }
        let names = ["blue", "green", "red"].map(String::from).to_vec();
        Self::normalized(n, 3, raw, names)
    }

    /// [`Self::synthetic_rgb`] over bands spaced evenly across 400–700 nm.
    pub fn synthetic_rgb_even(bands: usize) -> Result<Self> {
        Self::synthetic_rgb(&even_wavelengths(bands))
    }

    /// Output band `o` copies input band `picks[o]`.
    pub fn one_hot(bands_in: usize, picks: &[usize]) -> Result<Self> {
        let mut m = vec![0.0; bands_in * picks.len()];
        for (o, &b) in picks.iter().enumerate() {
            if b >= bands_in {
                return Err(Error::BadSrf(format!("picked band {b} of {bands_in}")));
            }
            m[b * picks.len() + o] = 1.0;
        }
        Self::new(bands_in, picks.len(), m)
    }

    pub fn bands_in(&self) -> usize {
        self.bands_in
    }

    pub fn bands_out(&self) -> usize {
        self.bands_out
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, band_in: usize, band_out: usize) -> f64 {
        self.matrix[band_in * self.bands_out + band_out]
    }
}

fn default_names(n: usize) -> Vec<String> {
    (0..n).map(|o| format!("band{o}")).collect()
}

/// `n` wavelengths spaced evenly over 400–700 nm (550 nm when `n = 1`).
pub(crate) fn even_wavelengths(n: usize) -> Vec<f64> {
    match n {
        1 => vec![550.0],
        _ => (0..n).map(|b| 400.0 + 300.0 * b as f64 / (n - 1) as f64).collect(),
    }
}

/// Parses a response table: a header of output-band names, then one row of
/// non-negative responses per input band. Fields are separated by commas or
/// whitespace; blank lines and `#` comments are ignored. Columns are
/// normalized on load.
pub fn parse_srf(text: &str) -> Result<SpectralResponse> {
    let mut lines =
        text.lines().enumerate().map(|(n, l)| (n + 1, l.split('#').next().unwrap_or("").trim())).filter(|(_, l)| !l.is_empty());
    let fields = |l: &str| {
        l.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty()).map(String::from).collect::<Vec<_>>()
    };
    let (_, header) = lines.next().ok_or_else(|| Error::BadSrf("table is empty".into()))?;
    let names = fields(header);
    let mut raw = Vec::new();
    let mut rows = 0;
    for (n, line) in lines {
        let row = fields(line);
        if row.len() != names.len() {
            return Err(Error::BadSrf(format!("line {n}: {} values for {} output bands", row.len(), names.len())));
        }
        for f in row {
            let v: f64 = f.parse().map_err(|_| Error::BadSrf(format!("line {n}: {f:?} is not a number")))?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::BadSrf(format!("line {n}: response {v} is negative or not finite")));
            }
            raw.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::BadSrf("table has a header but no rows".into()));
    }
    SpectralResponse::normalized(rows, names.len(), raw, names)
}

pub fn load_srf(path: &Path) -> Result<SpectralResponse> {
    parse_srf(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}
