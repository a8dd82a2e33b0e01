use std::collections::BTreeMap;

use super::DatasetError;

/// Wavelength in nanometres.
pub type Wavelength = u32;

/// One single-band image with reflectance-like values in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BandImage {
    width: usize,
    height: usize,
    wavelength: Wavelength,
    values: Vec<f32>,
}

impl BandImage {
    pub fn new(
        width: usize,
        height: usize,
        wavelength: Wavelength,
        values: Vec<f32>,
    ) -> Result<Self, DatasetError> {
        if width == 0 || height == 0 {
            return Err(DatasetError::Domain(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if wavelength == 0 {
            return Err(DatasetError::Domain("wavelength must be positive".into()));
        }
        if values.len() != width * height {
            return Err(DatasetError::Domain(format!(
                "expected {} values for a {width}x{height} image, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(DatasetError::Domain(format!(
                "band value {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            wavelength,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, wavelength: Wavelength, value: f32) -> Result<Self, DatasetError> {
        Self::new(width, height, wavelength, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn wavelength(&self) -> Wavelength {
        self.wavelength
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().map(|&v| f64::from(v)).sum::<f64>() / self.values.len() as f64
    }
}

/// The co-registered band images of one frame, keyed by wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralStack {
    frame_index: usize,
    bands: BTreeMap<Wavelength, BandImage>,
}

impl SpectralStack {
    pub fn new(frame_index: usize, bands: Vec<BandImage>) -> Result<Self, DatasetError> {
        let mut map = BTreeMap::new();
        let mut shape = None;
        for band in bands {
            let dims = (band.width(), band.height());
            match shape {
                None => shape = Some(dims),
                Some(s) if s != dims => {
                    return Err(DatasetError::Domain(format!(
                        "band {} nm is {}x{}, expected {}x{}",
                        band.wavelength(),
                        dims.0,
                        dims.1,
                        s.0,
                        s.1
                    )))
                }
                _ => {}
            }
            let wl = band.wavelength();
            if map.insert(wl, band).is_some() {
                return Err(DatasetError::Domain(format!("duplicate band {wl} nm")));
            }
        }
        Ok(Self {
            frame_index,
            bands: map,
        })
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn band(&self, wavelength: Wavelength) -> Option<&BandImage> {
        self.bands.get(&wavelength)
    }

    pub fn wavelengths(&self) -> impl Iterator<Item = Wavelength> + '_ {
        self.bands.keys().copied()
    }

    pub fn bands(&self) -> impl Iterator<Item = &BandImage> {
        self.bands.values()
    }

    /// `(width, height)` shared by all bands, `None` for an empty stack.
    pub fn shape(&self) -> Option<(usize, usize)> {
        self.bands.values().next().map(|b| (b.width(), b.height()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_values() {
        assert!(BandImage::new(1, 2, 940, vec![0.0, 1.5]).is_err());
        assert!(BandImage::new(1, 1, 940, vec![f32::NAN]).is_err());
        assert!(BandImage::new(0, 1, 940, vec![]).is_err());
        assert!(BandImage::new(1, 1, 0, vec![0.5]).is_err());
    }

    #[test]
    fn stack_requires_same_shape_and_unique_bands() {
        let a = BandImage::filled(2, 2, 940, 0.1).unwrap();
        let b = BandImage::filled(2, 3, 1050, 0.1).unwrap();
        assert!(SpectralStack::new(0, vec![a.clone(), b]).is_err());
        assert!(SpectralStack::new(0, vec![a.clone(), a.clone()]).is_err());
        let c = BandImage::filled(2, 2, 1050, 0.2).unwrap();
        let s = SpectralStack::new(3, vec![c, a]).unwrap();
        assert_eq!(s.wavelengths().collect::<Vec<_>>(), vec![940, 1050]);
        assert_eq!(s.shape(), Some((2, 2)));
    }
}
