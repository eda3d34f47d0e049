use serde::{Deserialize, Serialize};

use super::{NumericsError, Result};

/// One named parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl ParamArray {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            name: name.into(),
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Flat list of parameter arrays. Gradients and optimizer moments use the
/// same container so that shapes can be checked pairwise.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub arrays: Vec<ParamArray>,
}

impl ParamSet {
    pub fn zeros_like(other: &ParamSet) -> Self {
        Self {
            arrays: other
                .arrays
                .iter()
                .map(|a| ParamArray::zeros(a.name.clone(), a.shape.clone()))
                .collect(),
        }
    }

    /// Total number of scalars.
    pub fn count(&self) -> usize {
        self.arrays.iter().map(ParamArray::len).sum()
    }

    pub fn check_same_shape(&self, other: &ParamSet) -> Result<()> {
        if self.arrays.len() != other.arrays.len() {
            return Err(NumericsError::ParamCount {
                got: other.arrays.len(),
                expected: self.arrays.len(),
            });
        }
        for (a, b) in self.arrays.iter().zip(&other.arrays) {
            if a.shape != b.shape {
                return Err(NumericsError::ArrayShape {
                    name: b.name.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.arrays
            .iter()
            .all(|a| a.data.iter().all(|v| v.is_finite()))
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &ParamSet, scale: f64) {
        for (a, b) in self.arrays.iter_mut().zip(&other.arrays) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += scale * y;
            }
        }
    }

    /// Polyak averaging: `self = (1 - tau) * self + tau * source`.
    pub fn polyak_from(&mut self, source: &ParamSet, tau: f64) {
        for (a, b) in self.arrays.iter_mut().zip(&source.arrays) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x = (1.0 - tau) * *x + tau * y;
            }
        }
    }

    pub fn iter_scalars(&self) -> impl Iterator<Item = f64> + '_ {
        self.arrays.iter().flat_map(|a| a.data.iter().copied())
    }

    /// Bitwise equality, distinguishing `-0.0` from `0.0`.
    pub fn bit_eq(&self, other: &ParamSet) -> bool {
        self.arrays.len() == other.arrays.len()
            && self.arrays.iter().zip(&other.arrays).all(|(a, b)| {
                a.shape == b.shape
                    && a.data.len() == b.data.len()
                    && a.data
                        .iter()
                        .zip(&b.data)
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}
