//! Input point sets.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Sphere-mode norms must be within this distance of 1.
pub const SPHERE_NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Every point lies on the unit sphere.
    Sphere,
    /// Every point lies in the unit ball; norms are stored alongside the sketch.
    Ball,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Sphere => "sphere",
            Mode::Ball => "ball",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = PointSetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sphere" => Ok(Mode::Sphere),
            "ball" => Ok(Mode::Ball),
            other => Err(PointSetError::UnknownMode(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PointSetError {
    #[error("unknown mode {0:?} (expected sphere or ball)")]
    UnknownMode(String),
    #[error("point set needs at least one dimension")]
    ZeroDimension,
    #[error("point {index} has {actual} coordinates, expected {expected}")]
    Ragged { index: usize, expected: usize, actual: usize },
    #[error("point {index} has a non-finite coordinate")]
    NonFinite { index: usize },
    #[error("point {index} has norm {norm}, not on the unit sphere")]
    OffSphere { index: usize, norm: f64 },
    #[error("point {index} has norm {norm}, outside (0, 1]")]
    OutsideBall { index: usize, norm: f64 },
}

/// `n` points in `R^d` tagged with the geometry they satisfy.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    mode: Mode,
    dim: usize,
    points: Vec<Vec<f64>>,
    provenance: Option<String>,
}

pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

impl PointSet {
    pub fn new(mode: Mode, dim: usize, points: Vec<Vec<f64>>) -> Result<Self, PointSetError> {
        if dim == 0 {
            return Err(PointSetError::ZeroDimension);
        }
        for (index, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(PointSetError::Ragged { index, expected: dim, actual: p.len() });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(PointSetError::NonFinite { index });
            }
            let nrm = norm(p);
            match mode {
                Mode::Sphere if (nrm - 1.0).abs() > SPHERE_NORM_TOLERANCE => {
                    return Err(PointSetError::OffSphere { index, norm: nrm });
                }
                Mode::Ball if !(nrm > 0.0 && nrm <= 1.0) => {
                    return Err(PointSetError::OutsideBall { index, norm: nrm });
                }
                _ => {}
            }
        }
        Ok(Self { mode, dim, points, provenance: None })
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = Some(provenance.into());
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn provenance(&self) -> Option<&str> {
        self.provenance.as_deref()
    }

    /// The point scaled to unit norm.
    pub fn normalized(&self, i: usize) -> Vec<f64> {
        let p = &self.points[i];
        let nrm = norm(p);
        p.iter().map(|v| v / nrm).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_geometry() {
        assert!(PointSet::new(Mode::Sphere, 2, vec![vec![1.0, 0.0], vec![0.0, 1.0]]).is_ok());
        assert!(matches!(
            PointSet::new(Mode::Sphere, 2, vec![vec![0.5, 0.0]]),
            Err(PointSetError::OffSphere { index: 0, .. })
        ));
        assert!(matches!(
            PointSet::new(Mode::Ball, 2, vec![vec![0.5, 0.0], vec![0.0, 0.0]]),
            Err(PointSetError::OutsideBall { index: 1, .. })
        ));
        assert!(matches!(
            PointSet::new(Mode::Ball, 2, vec![vec![0.5]]),
            Err(PointSetError::Ragged { index: 0, .. })
        ));
        assert!(PointSet::new(Mode::Ball, 1, vec![vec![f64::NAN]]).is_err());
        assert_eq!("ball".parse::<Mode>().unwrap(), Mode::Ball);
        assert!("cube".parse::<Mode>().is_err());
    }
}
