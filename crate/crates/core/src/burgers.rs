//! Burgers vector systems and enumeration of their integer span.

use std::collections::{HashMap, VecDeque};

use crate::elastic::Vec2;
use crate::error::{Error, Result};

/// Default cap on the number of lattice nodes visited by [`BurgersSystem::lattice_ball`].
pub const DEFAULT_ENUMERATION_CAP: usize = 200_000;

/// A finite set of Burgers vectors `S` spanning the plane.
#[derive(Debug, Clone, PartialEq)]
pub struct BurgersSystem {
    vectors: Vec<Vec2>,
}

/// An element of the integer span of `S` with one witness combination.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeVector {
    pub vector: Vec2,
    /// Integer coefficients `z` with `Σ z_i b_i = vector`.
    pub coeffs: Vec<i64>,
}

impl LatticeVector {
    pub fn l1(&self) -> i64 {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }
}

fn key(v: &Vec2) -> (i64, i64) {
    ((v.x * 1e9).round() as i64, (v.y * 1e9).round() as i64)
}

impl BurgersSystem {
    pub fn new(vectors: Vec<Vec2>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::InvalidInput("Burgers system is empty".into()));
        }
        if let Some(b) = vectors.iter().find(|b| !(b.norm() > 1e-12)) {
            return Err(Error::InvalidInput(format!("zero Burgers vector ({}, {})", b.x, b.y)));
        }
        let scale = vectors.iter().map(|b| b.norm()).fold(0.0, f64::max);
        let spans = vectors.iter().enumerate().any(|(i, a)| {
            vectors[i + 1..].iter().any(|b| (a.x * b.y - a.y * b.x).abs() > 1e-9 * scale * scale)
        });
        if !spans {
            return Err(Error::InvalidInput("Burgers vectors do not span the plane".into()));
        }
        Ok(BurgersSystem { vectors })
    }

    /// `{±e1, ±e2}`.
    pub fn square() -> Self {
        Self::new(vec![
            Vec2::new(1.0, 0.0),
            Vec2::new(-1.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(0.0, -1.0),
        ])
        .expect("square system is valid")
    }

    /// The six shortest vectors of the triangular lattice, given by two
    /// generators and their negatives.
    pub fn hexagonal() -> Self {
        let h = Vec2::new(0.5, 0.5 * 3f64.sqrt());
        Self::new(vec![Vec2::new(1.0, 0.0), Vec2::new(-1.0, 0.0), h, -h]).expect("hexagonal system is valid")
    }

    pub fn vectors(&self) -> &[Vec2] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn max_norm(&self) -> f64 {
        self.vectors.iter().map(|b| b.norm()).fold(0.0, f64::max)
    }

    pub fn min_norm(&self) -> f64 {
        self.vectors.iter().map(|b| b.norm()).fold(f64::INFINITY, f64::min)
    }

    /// All `ξ ∈ Span_ℤ S` with `0 < |ξ| ≤ radius`, sorted lexicographically by
    /// coordinates, each with the witness of smallest ℓ¹ coefficient sum found
    /// by a breadth-first walk on the lattice graph.
    pub fn lattice_ball(&self, radius: f64) -> Result<Vec<LatticeVector>> {
        self.lattice_ball_capped(radius, DEFAULT_ENUMERATION_CAP)
    }

    pub fn lattice_ball_capped(&self, radius: f64, cap: usize) -> Result<Vec<LatticeVector>> {
        let bmax = self.max_norm();
        if !(radius >= bmax * (1.0 - 1e-12)) {
            return Err(Error::InvalidInput(format!(
                "enumeration radius {radius} is below the longest Burgers vector {bmax}"
            )));
        }
        let walk = radius + bmax;
        let s = self.vectors.len();
        let origin = LatticeVector { vector: Vec2::zeros(), coeffs: vec![0; s] };
        let mut seen: HashMap<(i64, i64), usize> = HashMap::new();
        let mut nodes = vec![origin];
        seen.insert((0, 0), 0);
        let mut queue = VecDeque::from([0usize]);
        while let Some(idx) = queue.pop_front() {
            for i in 0..s {
                for sign in [1i64, -1] {
                    let v = nodes[idx].vector + self.vectors[i] * sign as f64;
                    if v.norm() > walk + 1e-12 {
                        continue;
                    }
                    let k = key(&v);
                    if seen.contains_key(&k) {
                        continue;
                    }
                    let mut coeffs = nodes[idx].coeffs.clone();
                    coeffs[i] += sign;
                    seen.insert(k, nodes.len());
                    queue.push_back(nodes.len());
                    nodes.push(LatticeVector { vector: v, coeffs });
                    if nodes.len() > cap {
                        return Err(Error::EnumerationCap { cap });
                    }
                }
            }
        }
        let tol = 1e-12 * radius.max(1.0);
        let mut out: Vec<LatticeVector> = nodes
            .into_iter()
            .filter(|n| n.vector.norm() > tol && n.vector.norm() <= radius + tol)
            .collect();
        out.sort_by(|a, b| {
            a.vector.x.partial_cmp(&b.vector.x).unwrap().then(a.vector.y.partial_cmp(&b.vector.y).unwrap())
        });
        Ok(out)
    }
}
