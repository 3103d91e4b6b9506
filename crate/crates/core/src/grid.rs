//! Dense real-valued arrays used for every sample, image, mask and label map.

use crate::error::{Error, Result};

/// Logical shape of a [`Grid`]: a vector or a row-major image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Shape {
    Vector(usize),
    Image { height: usize, width: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Vector(n) => n,
            Shape::Image { height, width } => height * width,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> Vec<usize> {
        match *self {
            Shape::Vector(n) => vec![n],
            Shape::Image { height, width } => vec![height, width],
        }
    }

    pub fn image(height: usize, width: usize) -> Self {
        Shape::Image { height, width }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    shape: Shape,
    data: Vec<f64>,
}

impl Grid {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::shape(shape.len(), data.len()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Self {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self {
            shape: Shape::Vector(data.len()),
            data,
        }
    }

    pub fn from_fn(shape: Shape, f: impl FnMut(usize) -> f64) -> Self {
        Self {
            shape,
            data: (0..shape.len()).map(f).collect(),
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// (height, width) for images, (1, n) for vectors.
    pub fn hw(&self) -> (usize, usize) {
        match self.shape {
            Shape::Vector(n) => (1, n),
            Shape::Image { height, width } => (height, width),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let (_, w) = self.hw();
        self.data[row * w + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let (_, w) = self.hw();
        self.data[row * w + col] = value;
    }

    pub fn ensure_same_shape(&self, other: &Grid) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(self.shape, other.shape));
        }
        Ok(())
    }

    /// Elementwise `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &Grid, b: f64) -> Result<Grid> {
        self.ensure_same_shape(other)?;
        Ok(Grid {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            shape: self.shape,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Grid) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn bitwise_eq(&self, other: &Grid) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_wrong_length() {
        assert!(Grid::new(Shape::image(2, 3), vec![0.0; 5]).is_err());
        assert!(Grid::new(Shape::image(2, 3), vec![0.0; 6]).is_ok());
    }

    #[test]
    fn lin_comb_checks_shape() {
        let a = Grid::zeros(Shape::Vector(4));
        let b = Grid::zeros(Shape::image(2, 2));
        assert!(matches!(a.lin_comb(1.0, &b, 1.0), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn image_indexing_is_row_major() {
        let mut g = Grid::zeros(Shape::image(2, 3));
        g.set(1, 2, 7.0);
        assert_eq!(g.as_slice()[5], 7.0);
        assert_eq!(g.get(1, 2), 7.0);
    }
}
