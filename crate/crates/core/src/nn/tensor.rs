use crate::error::{Error, Result};

/// Dense (batch, channels, length) array of f64, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    shape: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(batch: usize, channels: usize, length: usize) -> Self {
        Self { shape: [batch, channels, length], data: vec![0.0; batch * channels * length] }
    }

    pub fn from_vec(shape: [usize; 3], data: Vec<f64>) -> Result<Self> {
        let n = shape.iter().product::<usize>();
        if n != data.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{n} values for shape {shape:?}"),
                actual: format!("{} values", data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn length(&self) -> usize {
        self.shape[2]
    }

    /// Values per batch element.
    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn sample(&self, b: usize) -> &[f64] {
        let n = self.sample_len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn sample_mut(&mut self, b: usize) -> &mut [f64] {
        let n = self.sample_len();
        &mut self.data[b * n..(b + 1) * n]
    }

    /// Same data viewed with another shape of equal size.
    pub fn reshaped(self, shape: [usize; 3]) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rows of a (batch, n, 1) tensor.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.batch()).map(|b| self.sample(b).to_vec()).collect()
    }
}
