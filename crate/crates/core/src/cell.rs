//! Annulus cell problems for the dislocation self-energy.
//!
//! The admissible strains on `B_R ∖ B_ε` with circulation `ξ` are written as
//! `K̂(ξ, 0) + ∇u` with `u` single-valued; the difference of two admissible
//! strains is curl free with zero circulation, hence a gradient. The minimum
//! over `u` is an unconstrained linear elasticity problem, discretized with
//! bilinear elements in `(log r, θ)` on a geometrically graded polar grid.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::elastic::{ElasticTensor, Mat2, Vec2};
use crate::error::{Error, Result};
use crate::fields::{beta_r2_isotropic, k_hat, psi_from_profile, MatrixField, DEFAULT_PROFILE_ANGLES};
use crate::linalg::{pcg, TripletBuilder};
use crate::quadrature::gauss_legendre;

#[derive(Debug, Clone, PartialEq)]
pub struct CellMeshParams {
    /// Angular elements.
    pub n_theta: usize,
    /// Ratio `Δ(log r) / Δθ`; 1 gives square elements.
    pub aspect: f64,
    /// Largest admissible element aspect ratio (either orientation).
    pub max_aspect: f64,
    /// Gauss points per direction.
    pub gauss_points: usize,
    /// Relative residual of the linear solve.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// When set, the solve is repeated with half the angular resolution and
    /// rejected if the estimated relative discretization error exceeds this.
    pub error_tolerance: Option<f64>,
}

impl Default for CellMeshParams {
    fn default() -> Self {
        CellMeshParams {
            n_theta: 64,
            aspect: 1.0,
            max_aspect: 8.0,
            gauss_points: 3,
            tolerance: 1e-10,
            max_iterations: 20_000,
            error_tolerance: None,
        }
    }
}

/// Polar grid on `B_outer ∖ B_inner`, uniform in `s = log r` and `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnulusMesh {
    pub inner: f64,
    pub outer: f64,
    pub n_r: usize,
    pub n_theta: usize,
}

impl AnnulusMesh {
    pub fn new(inner: f64, outer: f64, params: &CellMeshParams) -> Result<Self> {
        if !(inner > 0.0 && inner < outer) {
            return Err(Error::InvalidInput(format!("annulus needs 0 < inner < outer, got ({inner}, {outer})")));
        }
        if params.n_theta < 8 {
            return Err(Error::InvalidInput(format!("n_theta must be at least 8, got {}", params.n_theta)));
        }
        let dtheta = 2.0 * PI / params.n_theta as f64;
        let n_r = ((outer / inner).ln() / (params.aspect * dtheta)).ceil().max(1.0) as usize;
        let mesh = AnnulusMesh { inner, outer, n_r, n_theta: params.n_theta };
        let ratio = mesh.ds() / mesh.dtheta();
        if ratio > params.max_aspect || ratio < 1.0 / params.max_aspect {
            return Err(Error::MeshTooCoarse(format!(
                "element aspect ratio {ratio:.3} outside the cap {}",
                params.max_aspect
            )));
        }
        Ok(mesh)
    }

    pub fn ds(&self) -> f64 {
        (self.outer / self.inner).ln() / self.n_r as f64
    }

    pub fn dtheta(&self) -> f64 {
        2.0 * PI / self.n_theta as f64
    }

    /// Ratio between consecutive radial node positions.
    pub fn grading_ratio(&self) -> f64 {
        self.ds().exp()
    }

    pub fn n_nodes(&self) -> usize {
        (self.n_r + 1) * self.n_theta
    }

    fn node(&self, i: usize, j: usize) -> usize {
        i * self.n_theta + (j % self.n_theta)
    }

    fn element_nodes(&self, i: usize, j: usize) -> [usize; 4] {
        [self.node(i, j), self.node(i + 1, j), self.node(i + 1, j + 1), self.node(i, j + 1)]
    }
}

const CORNERS: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];

// Shape functions and their (s, θ) derivatives at reference point (a, b).
fn shape(a: f64, b: f64, ds: f64, dth: f64) -> ([f64; 4], [[f64; 2]; 4]) {
    let mut n = [0.0; 4];
    let mut d = [[0.0; 2]; 4];
    for (k, (ca, cb)) in CORNERS.iter().enumerate() {
        n[k] = 0.25 * (1.0 + ca * a) * (1.0 + cb * b);
        d[k][0] = 0.25 * ca * (1.0 + cb * b) * 2.0 / ds;
        d[k][1] = 0.25 * cb * (1.0 + ca * a) * 2.0 / dth;
    }
    (n, d)
}

fn physical_gradient(d: [f64; 2], r: f64, th: f64) -> [f64; 2] {
    let (c, s) = (th.cos(), th.sin());
    let dr = d[0] / r;
    [c * dr - s / r * d[1], s * dr + c / r * d[1]]
}

/// Minimizer of a cell problem together with its discretization data.
#[derive(Debug, Clone)]
pub struct CellSolution {
    /// Minimum energy divided by `|log ε|`.
    pub value: f64,
    /// Minimum energy `∫ W(β)`.
    pub energy: f64,
    pub xi: Vec2,
    pub eps: f64,
    pub mesh: AnnulusMesh,
    /// Corrector nodal values `(u_x, u_y)` per node.
    pub displacement: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    /// Relative discretization error estimated from a coarser solve, when requested.
    pub error_estimate: Option<f64>,
}

impl CellSolution {
    /// `β = K̂(ξ, 0) + ∇u` at `x`; zero outside the annulus.
    pub fn strain(&self, x: &Vec2) -> Mat2 {
        let r = x.norm();
        let m = &self.mesh;
        if r < m.inner || r > m.outer || self.xi.norm() == 0.0 {
            return Mat2::zeros();
        }
        let th = x.y.atan2(x.x).rem_euclid(2.0 * PI);
        let s = (r / m.inner).ln();
        let i = ((s / m.ds()) as usize).min(m.n_r - 1);
        let j = ((th / m.dtheta()) as usize).min(m.n_theta - 1);
        let a = 2.0 * (s - i as f64 * m.ds()) / m.ds() - 1.0;
        let b = 2.0 * (th - j as f64 * m.dtheta()) / m.dtheta() - 1.0;
        let (_, d) = shape(a, b, m.ds(), m.dtheta());
        let nodes = m.element_nodes(i, j);
        let mut grad = Mat2::zeros();
        for k in 0..4 {
            let g = physical_gradient(d[k], r, th);
            for c in 0..2 {
                let u = self.displacement[2 * nodes[k] + c];
                grad[(c, 0)] += u * g[0];
                grad[(c, 1)] += u * g[1];
            }
        }
        let singular = k_hat(self.xi, Vec2::zeros()).expect("nonzero charge").value(x);
        singular + grad
    }
}

impl MatrixField for CellSolution {
    fn value(&self, x: &Vec2) -> Mat2 {
        self.strain(x)
    }

    fn singular_points(&self) -> Vec<Vec2> {
        vec![Vec2::zeros()]
    }
}

/// `ψ_ε(ξ)`: minimum over admissible strains on `B_1 ∖ B_ε`, divided by `|log ε|`.
pub fn solve_cell(c: &ElasticTensor, xi: Vec2, eps: f64, params: &CellMeshParams) -> Result<CellSolution> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput(format!("cell problem needs 0 < eps < 1, got {eps}")));
    }
    solve_annulus(c, xi, eps, 1.0, params)
}

/// `ψ̄_ε(ξ)`: the same problem on the hard-core annulus `B_ρ ∖ B_ε`, still
/// normalized by `|log ε|`.
pub fn solve_cell_hardcore(
    c: &ElasticTensor,
    xi: Vec2,
    eps: f64,
    rho_eps: f64,
    params: &CellMeshParams,
) -> Result<CellSolution> {
    if !(eps > 0.0 && eps < 1.0 && eps < rho_eps && rho_eps <= 1.0) {
        return Err(Error::InvalidInput(format!("hard-core problem needs 0 < eps < rho <= 1, got ({eps}, {rho_eps})")));
    }
    let ratio = rho_eps.ln() / eps.ln();
    if !(ratio > -1.0 && ratio < 1.0) {
        return Err(Error::InvalidInput(format!("log rho / log eps = {ratio} outside (-1, 1)")));
    }
    solve_annulus(c, xi, eps, rho_eps, params)
}

fn solve_annulus(c: &ElasticTensor, xi: Vec2, eps: f64, outer: f64, params: &CellMeshParams) -> Result<CellSolution> {
    let fine = solve_annulus_once(c, xi, eps, outer, params)?;
    let Some(tol) = params.error_tolerance else {
        return Ok(fine);
    };
    let coarse_params = CellMeshParams { n_theta: params.n_theta / 2, error_tolerance: None, ..params.clone() };
    let coarse = solve_annulus_once(c, xi, eps, outer, &coarse_params)?;
    // energy error is second order in the mesh size
    let estimate = if fine.energy > 0.0 { (coarse.energy - fine.energy).abs() / 3.0 / fine.energy } else { 0.0 };
    if estimate > tol {
        return Err(Error::MeshTooCoarse(format!(
            "estimated relative discretization error {estimate:.3e} exceeds {tol:.3e}"
        )));
    }
    Ok(CellSolution { error_estimate: Some(estimate), ..fine })
}

fn solve_annulus_once(c: &ElasticTensor, xi: Vec2, eps: f64, outer: f64, params: &CellMeshParams) -> Result<CellSolution> {
    let mesh = AnnulusMesh::new(eps, outer, params)?;
    let log_eps = eps.ln().abs();
    let n_dof = 2 * mesh.n_nodes();
    if xi.norm() == 0.0 {
        return Ok(CellSolution {
            value: 0.0,
            energy: 0.0,
            xi,
            eps,
            mesh,
            displacement: vec![0.0; n_dof],
            residual: 0.0,
            iterations: 0,
            error_estimate: None,
        });
    }
    let singular = k_hat(xi, Vec2::zeros())?;
    let cc = c.components();
    let (gx, gw) = gauss_legendre(params.gauss_points);
    let (ds, dth) = (mesh.ds(), mesh.dtheta());
    let s0 = eps.ln();

    let mut k = TripletBuilder::new(n_dof);
    let mut f = vec![0.0; n_dof];
    let mut e0 = 0.0;
    for i in 0..mesh.n_r {
        for j in 0..mesh.n_theta {
            let nodes = mesh.element_nodes(i, j);
            let mut ke = [[0.0; 8]; 8];
            let mut fe = [0.0; 8];
            for (qa, wa) in gx.iter().zip(&gw) {
                for (qb, wb) in gx.iter().zip(&gw) {
                    let s = s0 + (i as f64 + 0.5 * (1.0 + qa)) * ds;
                    let th = (j as f64 + 0.5 * (1.0 + qb)) * dth;
                    let r = s.exp();
                    let wt = wa * wb * 0.25 * ds * dth * r * r;
                    let (_, d) = shape(*qa, *qb, ds, dth);
                    let g: Vec<[f64; 2]> = d.iter().map(|dk| physical_gradient(*dk, r, th)).collect();
                    let kh = singular.value(&Vec2::new(r * th.cos(), r * th.sin()));
                    let stress = c.apply(&kh);
                    e0 += wt * c.energy_density(&kh);
                    for a in 0..4 {
                        for ci in 0..2 {
                            let row = 2 * a + ci;
                            fe[row] += wt * (stress[(ci, 0)] * g[a][0] + stress[(ci, 1)] * g[a][1]);
                            for b in 0..4 {
                                for di in 0..2 {
                                    let mut acc = 0.0;
                                    for jj in 0..2 {
                                        for ll in 0..2 {
                                            acc += cc[2 * ci + jj][2 * di + ll] * g[a][jj] * g[b][ll];
                                        }
                                    }
                                    ke[row][2 * b + di] += wt * acc;
                                }
                            }
                        }
                    }
                }
            }
            for a in 0..4 {
                for ci in 0..2 {
                    let ga = 2 * nodes[a] + ci;
                    f[ga] += fe[2 * a + ci];
                    for b in 0..4 {
                        for di in 0..2 {
                            k.add(ga, 2 * nodes[b] + di, ke[2 * a + ci][2 * b + di]);
                        }
                    }
                }
            }
        }
    }
    let k = k.build();
    // the kernel consists of constant displacements; keep the load orthogonal to it
    project_out_constants(&mut f);
    let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
    let out = pcg(&k, &rhs, params.tolerance, params.max_iterations)?;
    let mut u = out.solution;
    project_out_constants(&mut u);
    let energy = e0 + 0.5 * f.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
    Ok(CellSolution {
        value: energy / log_eps,
        energy,
        xi,
        eps,
        mesh,
        displacement: u,
        residual: out.relative_residual,
        iterations: out.iterations,
        error_estimate: None,
    })
}

fn project_out_constants(v: &mut [f64]) {
    let n = v.len() / 2;
    for c in 0..2 {
        let mean = (0..n).map(|i| v[2 * i + c]).sum::<f64>() / n as f64;
        for i in 0..n {
            v[2 * i + c] -= mean;
        }
    }
}

/// Extrapolated limit `ψ(ξ)` with the data it was computed from.
#[derive(Debug, Clone)]
pub struct PsiLimit {
    pub value: f64,
    pub eps: Vec<f64>,
    pub psi_eps: Vec<f64>,
    /// Successive two-point extrapolations in the variable `1/|log ε|`.
    pub estimates: Vec<f64>,
    /// `max_k |ψ_εk − ψ| |log εk| / |ξ|²`.
    pub rate_constant: f64,
    /// Closed-form value `∫ W(Γ_ξ)` when the tensor is isotropic.
    pub profile_value: Option<f64>,
}

/// Default extrapolation ladder `ε = 10^{-k}`, `k = 2..5`.
pub fn default_eps_ladder() -> Vec<f64> {
    (2..=5).map(|k| 10f64.powi(-k)).collect()
}

/// Relative tolerance for non-monotone successive estimates.
pub const EXTRAPOLATION_TOLERANCE: f64 = 1e-3;

pub fn psi_limit(c: &ElasticTensor, xi: Vec2, params: &CellMeshParams) -> Result<PsiLimit> {
    psi_limit_on(c, xi, &default_eps_ladder(), params)
}

/// Richardson extrapolation of `ψ_ε` against the `1/|log ε|` rate.
pub fn psi_limit_on(c: &ElasticTensor, xi: Vec2, eps_list: &[f64], params: &CellMeshParams) -> Result<PsiLimit> {
    if xi.norm() == 0.0 {
        return Err(Error::InvalidInput("psi_limit needs a nonzero charge".into()));
    }
    if eps_list.len() < 2 {
        return Err(Error::InvalidInput("extrapolation needs at least two values of eps".into()));
    }
    let psi_eps: Vec<f64> = eps_list
        .par_iter()
        .map(|&e| solve_cell(c, xi, e, params).map(|s| s.value))
        .collect::<Result<Vec<_>>>()?;
    let t: Vec<f64> = eps_list.iter().map(|e| 1.0 / e.ln().abs()).collect();
    let estimates: Vec<f64> = (0..eps_list.len() - 1)
        .map(|k| (psi_eps[k] * t[k + 1] - psi_eps[k + 1] * t[k]) / (t[k + 1] - t[k]))
        .collect();
    let value = *estimates.last().expect("at least one estimate");
    if estimates.len() >= 3 {
        let diffs: Vec<f64> = estimates.windows(2).map(|w| w[1] - w[0]).collect();
        let scale = value.abs() * EXTRAPOLATION_TOLERANCE;
        let up = diffs.iter().any(|d| *d > scale);
        let down = diffs.iter().any(|d| *d < -scale);
        if up && down {
            return Err(Error::Extrapolation(format!("successive estimates {estimates:?} are not monotone")));
        }
    }
    let rate_constant = psi_eps
        .iter()
        .zip(&t)
        .map(|(p, tk)| (p - value).abs() / tk / xi.norm_squared())
        .fold(0.0, f64::max);
    let profile_value = match beta_r2_isotropic(c, xi) {
        Ok(f) => Some(psi_from_profile(c, &f.angular_profile(DEFAULT_PROFILE_ANGLES))?),
        Err(_) => None,
    };
    Ok(PsiLimit { value, eps: eps_list.to_vec(), psi_eps, estimates, rate_constant, profile_value })
}
