use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, Shape};

/// Binary tensor marking the allowed (or present) nonzero positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Support {
    shape: Shape,
    bits: Vec<bool>,
}

impl Support {
    pub fn empty(shape: Shape) -> Self {
        let bits = vec![false; shape.len()];
        Support { shape, bits }
    }

    pub fn full(shape: Shape) -> Self {
        let bits = vec![true; shape.len()];
        Support { shape, bits }
    }

    pub fn from_bits(shape: Shape, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != shape.len() {
            return Err(Error::shape(format!(
                "{} bits cannot fill shape {shape}",
                bits.len()
            )));
        }
        Ok(Support { shape, bits })
    }

    pub fn of(t: &DenseTensor) -> Self {
        Support {
            shape: t.shape().clone(),
            bits: t.data().iter().map(|&x| x != 0.0).collect(),
        }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, linear: usize) -> bool {
        self.bits[linear]
    }

    pub fn set(&mut self, linear: usize, value: bool) {
        self.bits[linear] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Linear offsets of the set positions, ascending.
    pub fn positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn union_with(&mut self, other: &Support) -> Result<()> {
        self.require_same_shape(other)?;
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
        Ok(())
    }

    /// True when every set position of `other` is also set here.
    pub fn contains(&self, other: &Support) -> Result<bool> {
        self.require_same_shape(other)?;
        Ok(self.bits.iter().zip(&other.bits).all(|(&a, &b)| a || !b))
    }

    fn require_same_shape(&self, other: &Support) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "supports of shape {} and {} differ",
                self.shape, other.shape
            )));
        }
        Ok(())
    }
}
