//! Dislocation densities used as limit data and their regularizations.

use std::f64::consts::PI;

use crate::elastic::Vec2;
use crate::error::{Error, Result};

/// Axis-aligned rectangle `A_l` carrying the constant density `ξ_l dx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub min: Vec2,
    pub max: Vec2,
    pub density: Vec2,
}

impl Region {
    pub fn new(min: Vec2, max: Vec2, density: Vec2) -> Result<Self> {
        if !(max.x > min.x && max.y > min.y) {
            return Err(Error::InvalidInput(format!("region needs max > min, got {min:?} {max:?}")));
        }
        Ok(Region { min, max, density })
    }

    pub fn area(&self) -> f64 {
        (self.max.x - self.min.x) * (self.max.y - self.min.y)
    }

    pub fn contains(&self, x: &Vec2) -> bool {
        x.x >= self.min.x && x.x < self.max.x && x.y >= self.min.y && x.y < self.max.y
    }

    /// Splits along `x = x_cut` when the cut crosses the region.
    pub fn split_x(&self, x_cut: f64) -> Vec<Region> {
        if x_cut <= self.min.x || x_cut >= self.max.x {
            return vec![*self];
        }
        vec![
            Region { max: Vec2::new(x_cut, self.max.y), ..*self },
            Region { min: Vec2::new(x_cut, self.min.y), ..*self },
        ]
    }
}

/// A point charge `ξ δ_x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointCharge {
    pub position: Vec2,
    pub charge: Vec2,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LimitMeasure {
    /// `Σ_l χ_{A_l} ξ_l dx` with disjoint rectangles.
    PiecewiseConstant(Vec<Region>),
    /// `Σ_i ξ_i δ_{x_i}`.
    Diracs(Vec<PointCharge>),
    /// Each charge spread uniformly on the disc `B_r(x_i)`.
    DiffuseDiscs { charges: Vec<PointCharge>, radius: f64 },
    /// Each charge spread uniformly on the circle `∂B_r(x_i)`.
    Circles { charges: Vec<PointCharge>, radius: f64 },
}

impl LimitMeasure {
    pub fn zero() -> Self {
        LimitMeasure::Diracs(Vec::new())
    }

    pub fn piecewise_constant(regions: Vec<Region>) -> Result<Self> {
        for (i, a) in regions.iter().enumerate() {
            for b in &regions[i + 1..] {
                let w = a.max.x.min(b.max.x) - a.min.x.max(b.min.x);
                let h = a.max.y.min(b.max.y) - a.min.y.max(b.min.y);
                if w > 0.0 && h > 0.0 {
                    return Err(Error::InvalidInput("regions overlap".into()));
                }
            }
        }
        Ok(LimitMeasure::PiecewiseConstant(regions))
    }

    /// `|μ|(Ω)`.
    pub fn total_variation(&self) -> f64 {
        match self {
            LimitMeasure::PiecewiseConstant(r) => r.iter().map(|r| r.density.norm() * r.area()).sum(),
            LimitMeasure::Diracs(c) | LimitMeasure::DiffuseDiscs { charges: c, .. } | LimitMeasure::Circles { charges: c, .. } => {
                c.iter().map(|p| p.charge.norm()).sum()
            }
        }
    }

    /// `μ(Ω)` as a vector.
    pub fn total_charge(&self) -> Vec2 {
        match self {
            LimitMeasure::PiecewiseConstant(r) => r.iter().map(|r| r.density * r.area()).sum(),
            LimitMeasure::Diracs(c) | LimitMeasure::DiffuseDiscs { charges: c, .. } | LimitMeasure::Circles { charges: c, .. } => {
                c.iter().map(|p| p.charge).sum()
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.total_variation() == 0.0
    }

    /// Density `dμ/dx` at `x` for absolutely continuous measures.
    pub fn density_at(&self, x: &Vec2) -> Option<Vec2> {
        match self {
            LimitMeasure::PiecewiseConstant(r) => Some(r.iter().filter(|r| r.contains(x)).map(|r| r.density).sum()),
            LimitMeasure::DiffuseDiscs { charges, radius } => Some(
                charges
                    .iter()
                    .filter(|p| (x - p.position).norm() < *radius)
                    .map(|p| p.charge / (PI * radius * radius))
                    .sum(),
            ),
            _ => None,
        }
    }
}
