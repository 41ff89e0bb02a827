//! Bilinear quadrilateral meshes with point location and stiffness assembly.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::elastic::{ElasticTensor, Mat2, Vec2};
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, TripletBuilder};
use crate::quadrature::gauss_legendre;

/// Reference corners, counterclockwise.
pub const CORNERS: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];

/// Q1 shape values and reference derivatives at `(a, b)`.
pub fn shape(a: f64, b: f64) -> ([f64; 4], [[f64; 2]; 4]) {
    let mut n = [0.0; 4];
    let mut d = [[0.0; 2]; 4];
    for (k, (ca, cb)) in CORNERS.iter().enumerate() {
        n[k] = 0.25 * (1.0 + ca * a) * (1.0 + cb * b);
        d[k] = [0.25 * ca * (1.0 + cb * b), 0.25 * cb * (1.0 + ca * a)];
    }
    (n, d)
}

/// Physical data of a point inside an element.
#[derive(Debug, Clone, Copy)]
pub struct ElementPoint {
    pub x: Vec2,
    pub shape: [f64; 4],
    pub grad: [Vec2; 4],
    pub det: f64,
}

#[derive(Debug, Clone)]
struct Locator {
    origin: Vec2,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct QuadMesh {
    pub nodes: Vec<Vec2>,
    pub elements: Vec<[usize; 4]>,
    /// Boundary edges oriented so the domain lies to the left.
    pub boundary_edges: Vec<[usize; 2]>,
    locator: Locator,
}

impl QuadMesh {
    /// Builds a mesh from nodes and elements, fixing orientation and
    /// extracting the boundary.
    pub fn from_parts(nodes: Vec<Vec2>, mut elements: Vec<[usize; 4]>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidInput("mesh has no elements".into()));
        }
        for el in elements.iter_mut() {
            let area = polygon_area(&el.map(|i| nodes[i]));
            if area.abs() < 1e-300 {
                return Err(Error::InvalidInput("degenerate element".into()));
            }
            if area < 0.0 {
                el.swap(1, 3);
            }
        }
        let mut count: HashMap<(usize, usize), (usize, [usize; 2])> = HashMap::new();
        for el in &elements {
            for k in 0..4 {
                let (a, b) = (el[k], el[(k + 1) % 4]);
                let e = count.entry((a.min(b), a.max(b))).or_insert((0, [a, b]));
                e.0 += 1;
            }
        }
        let mut boundary_edges: Vec<[usize; 2]> = count.into_values().filter(|(c, _)| *c == 1).map(|(_, e)| e).collect();
        boundary_edges.sort();
        let locator = build_locator(&nodes, &elements);
        Ok(QuadMesh { nodes, elements, boundary_edges, locator })
    }

    /// `nx × ny` elements on `[min, max]`.
    pub fn rectangle(min: Vec2, max: Vec2, nx: usize, ny: usize) -> Result<Self> {
        if !(max.x > min.x && max.y > min.y) || nx == 0 || ny == 0 {
            return Err(Error::InvalidInput("rectangle mesh needs max > min and positive counts".into()));
        }
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                let t = Vec2::new(i as f64 / nx as f64, j as f64 / ny as f64);
                nodes.push(Vec2::new(min.x + t.x * (max.x - min.x), min.y + t.y * (max.y - min.y)));
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut elements = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                elements.push([id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        Self::from_parts(nodes, elements)
    }

    /// O-grid of a disk: an `m × m` central square surrounded by four
    /// transfinite blocks with `k` layers reaching the circle.
    pub fn disk(center: Vec2, radius: f64, m: usize, k: usize) -> Result<Self> {
        if !(radius > 0.0) || m == 0 || k == 0 {
            return Err(Error::InvalidInput("disk mesh needs positive radius and counts".into()));
        }
        let half = 0.35 * radius;
        let mut nodes: Vec<Vec2> = Vec::new();
        let mut index: HashMap<(i64, i64), usize> = HashMap::new();
        let mut node = |p: Vec2| -> usize {
            let key = ((p.x * 1e9).round() as i64, (p.y * 1e9).round() as i64);
            *index.entry(key).or_insert_with(|| {
                nodes.push(center + p);
                nodes.len() - 1
            })
        };
        let mut elements = Vec::new();
        let square = |i: usize, j: usize| Vec2::new(-half + 2.0 * half * i as f64 / m as f64, -half + 2.0 * half * j as f64 / m as f64);
        for j in 0..m {
            for i in 0..m {
                elements.push([node(square(i, j)), node(square(i + 1, j)), node(square(i + 1, j + 1)), node(square(i, j + 1))]);
            }
        }
        for side in 0..4 {
            let rot = Mat2::new((side as f64 * PI / 2.0).cos(), -(side as f64 * PI / 2.0).sin(), (side as f64 * PI / 2.0).sin(), (side as f64 * PI / 2.0).cos());
            let point = |i: usize, l: usize| -> Vec2 {
                let s = i as f64 / m as f64;
                let inner = Vec2::new(half, -half + 2.0 * half * s);
                let th = -PI / 4.0 + PI / 2.0 * s;
                let outer = Vec2::new(radius * th.cos(), radius * th.sin());
                let t = l as f64 / k as f64;
                rot * (inner * (1.0 - t) + outer * t)
            };
            for l in 0..k {
                for i in 0..m {
                    elements.push([node(point(i, l)), node(point(i, l + 1)), node(point(i + 1, l + 1)), node(point(i + 1, l))]);
                }
            }
        }
        Self::from_parts(nodes, elements)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Longest element edge.
    pub fn max_edge(&self) -> f64 {
        self.elements
            .iter()
            .flat_map(|el| (0..4).map(move |k| (el[k], el[(k + 1) % 4])))
            .map(|(a, b)| (self.nodes[a] - self.nodes[b]).norm())
            .fold(0.0, f64::max)
    }

    pub fn area(&self) -> f64 {
        self.elements.iter().map(|el| polygon_area(&el.map(|i| self.nodes[i]))).sum()
    }

    pub fn is_boundary_node(&self) -> Vec<bool> {
        let mut flags = vec![false; self.nodes.len()];
        for e in &self.boundary_edges {
            flags[e[0]] = true;
            flags[e[1]] = true;
        }
        flags
    }

    /// Physical point, shape values and gradients at reference `(a, b)`.
    pub fn point(&self, e: usize, a: f64, b: f64) -> ElementPoint {
        let el = self.elements[e];
        let (n, d) = shape(a, b);
        let mut x = Vec2::zeros();
        let mut jac = Mat2::zeros();
        for k in 0..4 {
            let p = self.nodes[el[k]];
            x += p * n[k];
            jac[(0, 0)] += p.x * d[k][0];
            jac[(0, 1)] += p.x * d[k][1];
            jac[(1, 0)] += p.y * d[k][0];
            jac[(1, 1)] += p.y * d[k][1];
        }
        let det = jac.determinant();
        let inv_t = jac.try_inverse().unwrap_or_else(Mat2::zeros).transpose();
        let grad = d.map(|dk| inv_t * Vec2::new(dk[0], dk[1]));
        ElementPoint { x, shape: n, grad, det }
    }

    /// Gradient of a vector field with nodal values `(u_x, u_y)` interleaved.
    pub fn vector_gradient(&self, e: usize, p: &ElementPoint, u: &[f64]) -> Mat2 {
        let el = self.elements[e];
        let mut g = Mat2::zeros();
        for k in 0..4 {
            for c in 0..2 {
                let v = u[2 * el[k] + c];
                g[(c, 0)] += v * p.grad[k].x;
                g[(c, 1)] += v * p.grad[k].y;
            }
        }
        g
    }

    /// Element and reference coordinates of `x`, if inside the mesh.
    pub fn locate(&self, x: &Vec2) -> Option<(usize, f64, f64)> {
        let l = &self.locator;
        let fx = ((x.x - l.origin.x) / l.cell).floor();
        let fy = ((x.y - l.origin.y) / l.cell).floor();
        if fx < 0.0 || fy < 0.0 || fx >= l.nx as f64 || fy >= l.ny as f64 {
            return None;
        }
        for &e in &l.buckets[fy as usize * l.nx + fx as usize] {
            if let Some((a, b)) = self.inverse_map(e, x) {
                return Some((e, a, b));
            }
        }
        None
    }

    fn inverse_map(&self, e: usize, x: &Vec2) -> Option<(f64, f64)> {
        let (mut a, mut b) = (0.0, 0.0);
        for _ in 0..30 {
            let el = self.elements[e];
            let (n, d) = shape(a, b);
            let mut f = -x;
            let mut jac = Mat2::zeros();
            for k in 0..4 {
                let p = self.nodes[el[k]];
                f += p * n[k];
                jac[(0, 0)] += p.x * d[k][0];
                jac[(0, 1)] += p.x * d[k][1];
                jac[(1, 0)] += p.y * d[k][0];
                jac[(1, 1)] += p.y * d[k][1];
            }
            let step = jac.try_inverse()? * f;
            a -= step.x;
            b -= step.y;
            if step.norm() < 1e-14 {
                break;
            }
        }
        let tol = 1.0 + 1e-10;
        if !(a.abs() <= tol && b.abs() <= tol) {
            return None;
        }
        let (a, b) = (a.clamp(-1.0, 1.0), b.clamp(-1.0, 1.0));
        let scale = (self.nodes[self.elements[e][2]] - self.nodes[self.elements[e][0]]).norm();
        ((self.point(e, a, b).x - x).norm() <= 1e-10 * scale).then_some((a, b))
    }

    /// `∫ ℂ∇φ_a : ∇φ_b` for vector Q1 functions, dofs `2 node + component`.
    pub fn assemble_elasticity(&self, c: &ElasticTensor, gauss: usize) -> CsrMatrix {
        let cc = c.components();
        let (gx, gw) = gauss_legendre(gauss);
        let mut k = TripletBuilder::new(2 * self.n_nodes());
        for (e, el) in self.elements.iter().enumerate() {
            let mut ke = [[0.0; 8]; 8];
            for (qa, wa) in gx.iter().zip(&gw) {
                for (qb, wb) in gx.iter().zip(&gw) {
                    let p = self.point(e, *qa, *qb);
                    let wt = wa * wb * p.det;
                    for a in 0..4 {
                        let ga = [p.grad[a].x, p.grad[a].y];
                        for b in 0..4 {
                            let gb = [p.grad[b].x, p.grad[b].y];
                            for ci in 0..2 {
                                for di in 0..2 {
                                    let mut acc = 0.0;
                                    for j in 0..2 {
                                        for l in 0..2 {
                                            acc += cc[2 * ci + j][2 * di + l] * ga[j] * gb[l];
                                        }
                                    }
                                    ke[2 * a + ci][2 * b + di] += wt * acc;
                                }
                            }
                        }
                    }
                }
            }
            for a in 0..4 {
                for b in 0..4 {
                    for ci in 0..2 {
                        for di in 0..2 {
                            k.add(2 * el[a] + ci, 2 * el[b] + di, ke[2 * a + ci][2 * b + di]);
                        }
                    }
                }
            }
        }
        k.build()
    }

    /// `∫ ∇φ_a · ∇φ_b` for scalar Q1 functions.
    pub fn assemble_laplace(&self, gauss: usize) -> CsrMatrix {
        let (gx, gw) = gauss_legendre(gauss);
        let mut k = TripletBuilder::new(self.n_nodes());
        for (e, el) in self.elements.iter().enumerate() {
            let mut ke = [[0.0; 4]; 4];
            for (qa, wa) in gx.iter().zip(&gw) {
                for (qb, wb) in gx.iter().zip(&gw) {
                    let p = self.point(e, *qa, *qb);
                    for a in 0..4 {
                        for b in 0..4 {
                            ke[a][b] += wa * wb * p.det * p.grad[a].dot(&p.grad[b]);
                        }
                    }
                }
            }
            for a in 0..4 {
                for b in 0..4 {
                    k.add(el[a], el[b], ke[a][b]);
                }
            }
        }
        k.build()
    }
}

fn polygon_area(p: &[Vec2; 4]) -> f64 {
    0.5 * (0..4).map(|k| p[k].x * p[(k + 1) % 4].y - p[(k + 1) % 4].x * p[k].y).sum::<f64>()
}

fn build_locator(nodes: &[Vec2], elements: &[[usize; 4]]) -> Locator {
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in nodes {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let span = (hi - lo).max().max(1e-300);
    let side = (elements.len() as f64).sqrt().ceil().max(1.0) as usize;
    let cell = span / side as f64 * (1.0 + 1e-9);
    let origin = lo - Vec2::new(1e-12 * span, 1e-12 * span);
    let nx = (((hi.x - origin.x) / cell).floor() as usize + 1).max(1);
    let ny = (((hi.y - origin.y) / cell).floor() as usize + 1).max(1);
    let mut buckets = vec![Vec::new(); nx * ny];
    for (e, el) in elements.iter().enumerate() {
        let mut a = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut b = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &i in el {
            a = a.inf(&nodes[i]);
            b = b.sup(&nodes[i]);
        }
        let i0 = (((a.x - origin.x) / cell).floor().max(0.0) as usize).min(nx - 1);
        let i1 = (((b.x - origin.x) / cell).floor().max(0.0) as usize).min(nx - 1);
        let j0 = (((a.y - origin.y) / cell).floor().max(0.0) as usize).min(ny - 1);
        let j1 = (((b.y - origin.y) / cell).floor().max(0.0) as usize).min(ny - 1);
        for j in j0..=j1 {
            for i in i0..=i1 {
                buckets[j * nx + i].push(e);
            }
        }
    }
    Locator { origin, cell, nx, ny, buckets }
}
