use nalgebra::SVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Componentwise input bounds `lower <= u <= upper`. Convex by construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputBox<const M: usize> {
    lower: SVector<f64, M>,
    upper: SVector<f64, M>,
}

impl<const M: usize> InputBox<M> {
    pub fn new(lower: SVector<f64, M>, upper: SVector<f64, M>) -> Result<Self> {
        for i in 0..M {
            if !(lower[i].is_finite() && upper[i].is_finite()) {
                return Err(Error::InvalidBox(format!("channel {i} has a non-finite bound")));
            }
            if lower[i] >= upper[i] {
                return Err(Error::InvalidBox(format!(
                    "channel {i}: lower bound {} is not below upper bound {}",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The box `|u_i| <= bound_i`.
    pub fn symmetric(bound: SVector<f64, M>) -> Result<Self> {
        Self::new(-bound, bound)
    }

    pub fn lower(&self) -> &SVector<f64, M> {
        &self.lower
    }

    pub fn upper(&self) -> &SVector<f64, M> {
        &self.upper
    }

    pub fn is_symmetric(&self) -> bool {
        (0..M).all(|i| self.lower[i] == -self.upper[i])
    }

    /// Inclusive membership test.
    pub fn contains(&self, u: &SVector<f64, M>) -> bool {
        (0..M).all(|i| u[i] >= self.lower[i] && u[i] <= self.upper[i])
    }

    pub fn clamp(&self, u: &SVector<f64, M>) -> SVector<f64, M> {
        SVector::from_fn(|i, _| u[i].clamp(self.lower[i], self.upper[i]))
    }

    /// Whether `u` lies strictly inside the box.
    pub fn contains_interior(&self, u: &SVector<f64, M>) -> bool {
        (0..M).all(|i| u[i] > self.lower[i] && u[i] < self.upper[i])
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.lower * factor, self.upper * factor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector2;

    #[test]
    fn rejects_inverted_bounds() {
        assert!(InputBox::new(Vector2::new(1.0, -1.0), Vector2::new(-1.0, 1.0)).is_err());
        assert!(InputBox::new(Vector2::new(0.0, 0.0), Vector2::new(0.0, 1.0)).is_err());
    }

    #[test]
    fn clamp_and_contains() {
        let b = InputBox::symmetric(Vector2::new(2.0, 2.0)).unwrap();
        assert!(b.is_symmetric());
        assert!(b.contains(&Vector2::new(2.0, -2.0)));
        assert!(!b.contains_interior(&Vector2::new(2.0, 0.0)));
        assert_eq!(b.clamp(&Vector2::new(5.0, -0.5)), Vector2::new(2.0, -0.5));
    }
}
