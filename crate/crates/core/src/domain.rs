use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};

/// Axis-aligned box `lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let domain = Self { lower, upper };
        domain.validate()?;
        Ok(domain)
    }

    /// `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    /// Same bounds on every axis.
    pub fn cube(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() {
            return input_err("box domain must have at least one dimension");
        }
        if self.lower.len() != self.upper.len() {
            return input_err(format!(
                "box bounds disagree in dimension ({} vs {})",
                self.lower.len(),
                self.upper.len()
            ));
        }
        for (i, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return input_err(format!("box axis {i} needs finite lower < upper, got [{lo}, {hi}]"));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    /// Membership with an absolute slack of `tol` per axis.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= lo - tol && *v <= hi + tol)
    }

    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
            .collect()
    }

    /// Affine map onto the unit box.
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| (v - self.lower[i]) / self.width(i))
            .collect()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(i, v)| self.lower[i] + v * self.width(i))
            .collect()
    }

    /// Distance (in unit-box coordinates) to the nearest face.
    pub fn boundary_proximity(&self, x: &[f64]) -> f64 {
        self.to_unit(x)
            .iter()
            .map(|u| u.min(1.0 - u))
            .fold(f64::INFINITY, f64::min)
    }

    /// Regular grid with `per_axis` points per dimension, first axis varying slowest.
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        crate::optim::unit_grid(self.dim(), per_axis)
            .into_iter()
            .map(|u| self.from_unit(&u))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_axes() {
        assert!(BoxDomain::new(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(BoxDomain::new(vec![0.0], vec![1.0, 2.0]).is_err());
        assert!(BoxDomain::new(vec![], vec![]).is_err());
        assert!(BoxDomain::new(vec![f64::NAN], vec![1.0]).is_err());
    }

    #[test]
    fn unit_mapping_round_trips() {
        let d = BoxDomain::new(vec![-2.0, 10.0], vec![2.0, 20.0]).unwrap();
        let x = vec![0.5, 12.5];
        let u = d.to_unit(&x);
        assert_eq!(u, vec![0.625, 0.25]);
        assert_eq!(d.from_unit(&u), x);
        assert_eq!(d.center(), vec![0.0, 15.0]);
        assert!((d.boundary_proximity(&x) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn grid_corners_are_exact() {
        let d = BoxDomain::cube(2, -2.0, 2.0).unwrap();
        let g = d.grid(2);
        assert_eq!(
            g,
            vec![vec![-2.0, -2.0], vec![-2.0, 2.0], vec![2.0, -2.0], vec![2.0, 2.0]]
        );
    }
}
