//! Minimum elastic energy of finitely many dislocations in a bounded domain,
//! its self/interaction split, recovery configurations and scaling sweeps.
//!
//! The strain is written as `β = S + ∇u` where `S` is the sum of the
//! whole-plane singular fields of the dislocations. `S` is curl free away from
//! the cores with the right circulation around each of them, and it is in
//! equilibrium, so the corrector `u` only has to cancel the tractions `ℂSν`
//! on the outer boundary. The corrector is a bilinear finite-element function
//! on a mesh of the whole domain; the energy is integrated on the perforated
//! domain by polar quadrature inside the hard cores and adaptive element
//! quadrature outside.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use crate::elastic::{skew, ElasticTensor, Mat2, TensorMode, Vec2};
use crate::error::{Error, Result};
use crate::fields::{beta_r2_isotropic_at, k_hat, MatrixField, SingularField};
use crate::linalg::{dot, pcg};
use crate::measure::LimitMeasure;
use crate::mesh::QuadMesh;
use crate::phi::PhiCertificate;
use crate::quadrature::gauss_legendre;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Disk { center: Vec2, radius: f64 },
    Rectangle { min: Vec2, max: Vec2 },
}

/// Domain and its finite-element mesh.
#[derive(Debug, Clone)]
pub struct Domain2D {
    pub shape: Shape,
    pub mesh: Arc<QuadMesh>,
}

impl Domain2D {
    /// Disk meshed with element size about `h`.
    pub fn disk(center: Vec2, radius: f64, h: f64) -> Result<Self> {
        if !(h > 0.0 && h < radius) {
            return Err(Error::InvalidInput(format!("disk mesh size {h} must lie in (0, radius)")));
        }
        let m = (PI * radius / (2.0 * h)).ceil() as usize;
        let k = (0.65 * radius / h).ceil() as usize;
        Ok(Domain2D { shape: Shape::Disk { center, radius }, mesh: Arc::new(QuadMesh::disk(center, radius, m, k)?) })
    }

    pub fn unit_disk(h: f64) -> Result<Self> {
        Self::disk(Vec2::zeros(), 1.0, h)
    }

    /// Rectangle meshed with square-ish elements of size about `h`.
    pub fn rectangle(min: Vec2, max: Vec2, h: f64) -> Result<Self> {
        let d = max - min;
        if !(h > 0.0 && d.x > 0.0 && d.y > 0.0) {
            return Err(Error::InvalidInput("rectangle needs max > min and h > 0".into()));
        }
        let nx = (d.x / h).ceil().max(1.0) as usize;
        let ny = (d.y / h).ceil().max(1.0) as usize;
        Ok(Domain2D { shape: Shape::Rectangle { min, max }, mesh: Arc::new(QuadMesh::rectangle(min, max, nx, ny)?) })
    }

    pub fn unit_square(h: f64) -> Result<Self> {
        Self::rectangle(Vec2::zeros(), Vec2::new(1.0, 1.0), h)
    }

    /// Signed distance to the boundary, positive inside.
    pub fn distance_to_boundary(&self, x: &Vec2) -> f64 {
        match self.shape {
            Shape::Disk { center, radius } => radius - (x - center).norm(),
            Shape::Rectangle { min, max } => (x.x - min.x).min(max.x - x.x).min(x.y - min.y).min(max.y - x.y),
        }
    }

    pub fn area(&self) -> f64 {
        match self.shape {
            Shape::Disk { radius, .. } => PI * radius * radius,
            Shape::Rectangle { min, max } => (max.x - min.x) * (max.y - min.y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dislocation {
    pub position: Vec2,
    pub burgers: Vec2,
}

/// Finite dislocation configuration with core radius `eps` and hard-core
/// radius `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct DislocationConfig {
    pub dislocations: Vec<Dislocation>,
    pub eps: f64,
    pub rho: f64,
}

impl DislocationConfig {
    pub fn new(dislocations: Vec<Dislocation>, eps: f64, rho: f64) -> Self {
        DislocationConfig { dislocations, eps, rho }
    }

    pub fn count(&self) -> usize {
        self.dislocations.len()
    }

    /// `Σ |ξ_i|`.
    pub fn total_variation(&self) -> f64 {
        self.dislocations.iter().map(|d| d.burgers.norm()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Radii { eps: f64, rho: f64 },
    ZeroCharge { index: usize },
    Containment { index: usize, distance: f64 },
    Separation { first: usize, second: usize, distance: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::Radii { eps, rho } => write!(f, "radii must satisfy 0 < eps < rho, got eps={eps} rho={rho}"),
            Violation::ZeroCharge { index } => write!(f, "dislocation {index} has zero Burgers vector"),
            Violation::Containment { index, distance } => {
                write!(f, "hard core of dislocation {index} leaves the domain (boundary distance {distance})")
            }
            Violation::Separation { first, second, distance } => {
                write!(f, "dislocations {first} and {second} are {distance} apart, closer than 2 rho")
            }
        }
    }
}

/// Every violation of the admissibility conditions, in index order.
pub fn validate_config(domain: &Domain2D, cfg: &DislocationConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    if !(cfg.eps > 0.0 && cfg.eps < cfg.rho) {
        out.push(Violation::Radii { eps: cfg.eps, rho: cfg.rho });
    }
    let tol = 1e-12 * cfg.rho.max(1e-300);
    for (i, d) in cfg.dislocations.iter().enumerate() {
        if d.burgers.norm() == 0.0 {
            out.push(Violation::ZeroCharge { index: i });
        }
        let dist = domain.distance_to_boundary(&d.position);
        if dist < cfg.rho - tol {
            out.push(Violation::Containment { index: i, distance: dist });
        }
    }
    let index = CoreIndex::new(&cfg.dislocations.iter().map(|d| d.position).collect::<Vec<_>>(), 2.0 * cfg.rho);
    for (i, d) in cfg.dislocations.iter().enumerate() {
        for j in index.within(&d.position, 2.0 * cfg.rho) {
            if j > i {
                let dist = (d.position - cfg.dislocations[j].position).norm();
                if dist < 2.0 * cfg.rho - tol {
                    out.push(Violation::Separation { first: i, second: j, distance: dist });
                }
            }
        }
    }
    out.sort_by_key(|v| match v {
        Violation::Radii { .. } => (0, 0, 0),
        Violation::ZeroCharge { index } => (1, *index, 0),
        Violation::Containment { index, .. } => (2, *index, 0),
        Violation::Separation { first, second, .. } => (3, *first, *second),
    });
    out
}

// Bucket grid over the dislocation positions for range queries.
struct CoreIndex {
    points: Vec<Vec2>,
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl CoreIndex {
    fn new(points: &[Vec2], cell: f64) -> Self {
        let cell = if cell > 0.0 { cell } else { 1.0 };
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key(p, cell)).or_default().push(i);
        }
        CoreIndex { points: points.to_vec(), cell, buckets }
    }

    fn key(p: &Vec2, cell: f64) -> (i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
    }

    fn within(&self, x: &Vec2, r: f64) -> Vec<usize> {
        let span = (r / self.cell).ceil() as i64;
        let (cx, cy) = Self::key(x, self.cell);
        let mut out = Vec::new();
        if span > 64 {
            out.extend((0..self.points.len()).filter(|&i| (self.points[i] - x).norm() <= r));
            return out;
        }
        for dx in -span..=span {
            for dy in -span..=span {
                if let Some(b) = self.buckets.get(&(cx + dx, cy + dy)) {
                    out.extend(b.iter().copied().filter(|&i| (self.points[i] - x).norm() <= r));
                }
            }
        }
        out.sort_unstable();
        out
    }

    fn any_within(&self, x: &Vec2, r: f64) -> bool {
        !self.within(x, r).is_empty()
    }
}

/// Discretization controls for [`minimize_energy`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub gauss_points: usize,
    /// Angular quadrature points in each hard core.
    pub core_angles: usize,
    /// Width in `log r` of the radial panels inside hard cores.
    pub core_panel_width: f64,
    /// Cells cut by a hard-core circle are refined down to `rho / core_refinement`.
    pub core_refinement: f64,
    pub max_depth: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            gauss_points: 3,
            core_angles: 64,
            core_panel_width: 0.5,
            core_refinement: 16.0,
            max_depth: 10,
            tolerance: 1e-10,
            max_iterations: 50_000,
        }
    }
}

/// `β = S + ∇u − ω A`, `A` the unit skew matrix, set to zero inside the cores.
#[derive(Debug, Clone)]
pub struct StrainField {
    pub tensor: ElasticTensor,
    pub singular: Vec<SingularField>,
    pub displacement: Vec<f64>,
    pub mesh: Arc<QuadMesh>,
    pub eps: f64,
    /// Constant infinitesimal rotation removed to make the skew average vanish.
    pub skew_shift: f64,
}

fn unit_skew() -> Mat2 {
    Mat2::new(0.0, 1.0, -1.0, 0.0)
}

impl StrainField {
    pub fn singular_part(&self, x: &Vec2) -> Mat2 {
        self.singular.iter().map(|f| MatrixField::value(f, x)).sum()
    }

    /// `∇u(x)`, zero outside the mesh.
    pub fn corrector_gradient(&self, x: &Vec2) -> Mat2 {
        match self.mesh.locate(x) {
            Some((e, a, b)) => {
                let p = self.mesh.point(e, a, b);
                self.mesh.vector_gradient(e, &p, &self.displacement)
            }
            None => Mat2::zeros(),
        }
    }

    fn in_core(&self, x: &Vec2) -> bool {
        self.singular.iter().any(|f| (x - f.center).norm() < self.eps)
    }

    // Value without the core mask, for quadrature points known to be outside.
    fn raw(&self, x: &Vec2) -> Mat2 {
        self.singular_part(x) + self.corrector_gradient(x) - unit_skew() * self.skew_shift
    }

    /// Rows `(x, y, u_x, u_y)` of the corrector.
    pub fn nodal_table(&self) -> Vec<[f64; 4]> {
        self.mesh
            .nodes
            .iter()
            .enumerate()
            .map(|(i, p)| [p.x, p.y, self.displacement[2 * i], self.displacement[2 * i + 1]])
            .collect()
    }
}

impl MatrixField for StrainField {
    fn value(&self, x: &Vec2) -> Mat2 {
        if self.in_core(x) || self.mesh.locate(x).is_none() {
            return Mat2::zeros();
        }
        self.raw(x)
    }

    fn singular_points(&self) -> Vec<Vec2> {
        self.singular.iter().map(|f| f.center).collect()
    }
}

/// Energies of a finalized strain.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub total: f64,
    /// `∫` over the union of `B_ρ(x_i) ∖ B_ε(x_i)`.
    pub self_energy: f64,
    /// `∫` over `Ω ∖ ∪ B_ρ(x_i)`.
    pub interaction: f64,
    pub per_dislocation: Vec<f64>,
    pub count: usize,
    pub eps: f64,
    pub rho: f64,
    /// `∫ skew β` over the perforated domain, off-diagonal entry.
    pub skew_integral: f64,
    /// Area of the perforated domain under the same quadrature.
    pub area: f64,
}

impl EnergyReport {
    pub fn zero(eps: f64, rho: f64) -> Self {
        EnergyReport {
            total: 0.0,
            self_energy: 0.0,
            interaction: 0.0,
            per_dislocation: Vec::new(),
            count: 0,
            eps,
            rho,
            skew_integral: 0.0,
            area: 0.0,
        }
    }
}

fn singular_fields(c: &ElasticTensor, cfg: &DislocationConfig) -> Result<Vec<SingularField>> {
    cfg.dislocations
        .iter()
        .map(|d| match c.mode() {
            TensorMode::Isotropic { .. } => beta_r2_isotropic_at(c, d.burgers, d.position),
            TensorMode::ToyFullNorm => k_hat(d.burgers, d.position),
            TensorMode::General => Err(Error::UnsupportedTensor {
                mode: "general",
                what: "no closed-form equilibrium field for the singular part",
            }),
        })
        .collect()
}

/// Minimizes `∫_{Ω_ε} W(β)` over admissible strains of the configuration.
pub fn minimize_energy(
    domain: &Domain2D,
    cfg: &DislocationConfig,
    c: &ElasticTensor,
    params: &SimParams,
) -> Result<(StrainField, EnergyReport)> {
    let violations = validate_config(domain, cfg);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(Error::Inadmissible(list.join("; ")));
    }
    let mesh = domain.mesh.clone();
    let n_dof = 2 * mesh.n_nodes();
    let singular = singular_fields(c, cfg)?;
    if singular.is_empty() {
        let field = StrainField { tensor: c.clone(), singular, displacement: vec![0.0; n_dof], mesh, eps: cfg.eps, skew_shift: 0.0 };
        return Ok((field, EnergyReport::zero(cfg.eps, cfg.rho)));
    }
    let h = mesh.max_edge();
    for (i, d) in cfg.dislocations.iter().enumerate() {
        let dist = domain.distance_to_boundary(&d.position);
        if dist < h {
            return Err(Error::MeshTooCoarse(format!(
                "dislocation {i} lies {dist:.3e} from the boundary, closer than the mesh size {h:.3e}"
            )));
        }
    }
    let k = mesh.assemble_elasticity(c, params.gauss_points);
    let mut f = boundary_load(&mesh, c, &singular);
    let kernel = rigid_modes(&mesh, c.is_coercive_mode());
    project_out(&mut f, &kernel);
    let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
    let mut u = pcg(&k, &rhs, params.tolerance, params.max_iterations)?.solution;
    project_out(&mut u, &kernel);
    let mut field = StrainField { tensor: c.clone(), singular, displacement: u, mesh, eps: cfg.eps, skew_shift: 0.0 };
    let report = split_energy(&field, cfg, params);
    if c.is_coercive_mode() {
        // removing a constant rotation leaves W unchanged in the coercive modes
        field.skew_shift = report.skew_integral / report.area;
        let report = EnergyReport { skew_integral: 0.0, ..report };
        return Ok((field, report));
    }
    Ok((field, report))
}

// `f_a = ∫_{∂Ω} ℂSν · φ_a` with edges subdivided near singularities.
fn boundary_load(mesh: &QuadMesh, c: &ElasticTensor, singular: &[SingularField]) -> Vec<f64> {
    let (gx, gw) = gauss_legendre(4);
    let centers: Vec<Vec2> = singular.iter().map(|f| f.center).collect();
    let contributions: Vec<[f64; 4]> = mesh
        .boundary_edges
        .par_iter()
        .map(|e| {
            let (p0, p1) = (mesh.nodes[e[0]], mesh.nodes[e[1]]);
            let t = p1 - p0;
            let len = t.norm();
            let nu = Vec2::new(t.y, -t.x) / len;
            let mut acc = [0.0; 4];
            let mut stack = vec![(0.0f64, 1.0f64, 0usize)];
            while let Some((s0, s1, depth)) = stack.pop() {
                let mid = p0 + t * (0.5 * (s0 + s1));
                let seg = (s1 - s0) * len;
                let near = centers.iter().map(|x| (x - mid).norm()).fold(f64::INFINITY, f64::min);
                if seg > 0.25 * near && depth < 30 {
                    let sm = 0.5 * (s0 + s1);
                    stack.push((s0, sm, depth + 1));
                    stack.push((sm, s1, depth + 1));
                    continue;
                }
                for (q, w) in gx.iter().zip(&gw) {
                    let s = s0 + 0.5 * (1.0 + q) * (s1 - s0);
                    let x = p0 + t * s;
                    let sv: Mat2 = singular.iter().map(|f| MatrixField::value(f, &x)).sum();
                    let traction = c.apply(&sv) * nu;
                    let wt = w * 0.5 * seg;
                    for comp in 0..2 {
                        acc[comp] += wt * traction[comp] * (1.0 - s);
                        acc[2 + comp] += wt * traction[comp] * s;
                    }
                }
            }
            acc
        })
        .collect();
    let mut f = vec![0.0; 2 * mesh.n_nodes()];
    for (e, acc) in mesh.boundary_edges.iter().zip(contributions) {
        for comp in 0..2 {
            f[2 * e[0] + comp] += acc[comp];
            f[2 * e[1] + comp] += acc[2 + comp];
        }
    }
    f
}

// Orthonormal basis of the discrete rigid motions.
fn rigid_modes(mesh: &QuadMesh, with_rotation: bool) -> Vec<Vec<f64>> {
    let n = mesh.n_nodes();
    let mut modes = vec![
        (0..n).flat_map(|_| [1.0, 0.0]).collect::<Vec<f64>>(),
        (0..n).flat_map(|_| [0.0, 1.0]).collect::<Vec<f64>>(),
    ];
    if with_rotation {
        modes.push(mesh.nodes.iter().flat_map(|p| [-p.y, p.x]).collect());
    }
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for mut m in modes {
        for b in &basis {
            let d = dot(&m, b);
            m.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let norm = dot(&m, &m).sqrt();
        m.iter_mut().for_each(|x| *x /= norm);
        basis.push(m);
    }
    basis
}

fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let d = dot(v, b);
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
    }
}

fn add<const K: usize>(acc: &mut [f64; K], wt: f64, v: [f64; K]) {
    acc.iter_mut().zip(v).for_each(|(a, x)| *a += wt * x);
}

/// Integrals of `g(β)` over each hard-core annulus `B_ρ(x_i) ∖ B_ε(x_i)` and
/// over the rest of the domain.
pub fn integrate_split<const K: usize>(
    field: &StrainField,
    cfg: &DislocationConfig,
    params: &SimParams,
    g: impl Fn(&Mat2) -> [f64; K] + Sync,
) -> (Vec<[f64; K]>, [f64; K]) {
    let centers: Vec<Vec2> = cfg.dislocations.iter().map(|d| d.position).collect();
    let index = CoreIndex::new(&centers, 2.0 * cfg.rho);

    let (gs, gws) = gauss_legendre(4);
    let n_panels = ((cfg.rho / cfg.eps).ln() / params.core_panel_width).ceil().max(1.0) as usize;
    let ds = (cfg.rho / cfg.eps).ln() / n_panels as f64;
    let na = params.core_angles;
    let core: Vec<[f64; K]> = centers
        .par_iter()
        .map(|x0| {
            let mut acc = [0.0; K];
            for p in 0..n_panels {
                for (q, wq) in gs.iter().zip(&gws) {
                    let s = cfg.eps.ln() + (p as f64 + 0.5 * (1.0 + q)) * ds;
                    let r = s.exp();
                    for m in 0..na {
                        let th = 2.0 * PI * (m as f64 + 0.5) / na as f64;
                        let x = x0 + Vec2::new(r * th.cos(), r * th.sin());
                        let wt = wq * 0.5 * ds * (2.0 * PI / na as f64) * r * r;
                        add(&mut acc, wt, g(&field.raw(&x)));
                    }
                }
            }
            acc
        })
        .collect();

    let mesh = &field.mesh;
    let (gx, gw) = gauss_legendre(params.gauss_points.max(4));
    let rho = cfg.rho;
    let leaf = rho / params.core_refinement;
    let outside: Vec<[f64; K]> = (0..mesh.elements.len())
        .into_par_iter()
        .map(|e| {
            let mut acc = [0.0; K];
            let mut stack = vec![(-1.0f64, 1.0f64, -1.0f64, 1.0f64, 0usize)];
            while let Some((a0, a1, b0, b1, depth)) = stack.pop() {
                let center = mesh.point(e, 0.5 * (a0 + a1), 0.5 * (b0 + b1)).x;
                let size = [(a0, b0), (a1, b0), (a1, b1), (a0, b1)]
                    .iter()
                    .map(|(a, b)| (mesh.point(e, *a, *b).x - center).norm())
                    .fold(0.0, f64::max);
                let near = index.within(&center, rho + size);
                if near.iter().any(|&i| (center - centers[i]).norm() + size <= rho) {
                    continue;
                }
                let cut = !near.is_empty();
                // keep the cell small compared with the distance to the nearest singularity
                let rough = index.any_within(&center, size / 0.3);
                let refine = (cut && size > leaf) || rough;
                if refine && depth < params.max_depth {
                    let (am, bm) = (0.5 * (a0 + a1), 0.5 * (b0 + b1));
                    stack.push((a0, am, b0, bm, depth + 1));
                    stack.push((am, a1, b0, bm, depth + 1));
                    stack.push((am, a1, bm, b1, depth + 1));
                    stack.push((a0, am, bm, b1, depth + 1));
                    continue;
                }
                let jac = 0.25 * (a1 - a0) * (b1 - b0);
                for (qa, wa) in gx.iter().zip(&gw) {
                    for (qb, wb) in gx.iter().zip(&gw) {
                        let a = a0 + 0.5 * (1.0 + qa) * (a1 - a0);
                        let b = b0 + 0.5 * (1.0 + qb) * (b1 - b0);
                        let p = mesh.point(e, a, b);
                        if cut && near.iter().any(|&i| (p.x - centers[i]).norm() < rho) {
                            continue;
                        }
                        let beta = field.singular_part(&p.x) + mesh.vector_gradient(e, &p, &field.displacement)
                            - unit_skew() * field.skew_shift;
                        add(&mut acc, wa * wb * jac * p.det, g(&beta));
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = [0.0; K];
    for o in &outside {
        add(&mut total, 1.0, *o);
    }
    (core, total)
}

/// Integrates `W(β)` over the hard-core annuli and their complement.
pub fn split_energy(field: &StrainField, cfg: &DislocationConfig, params: &SimParams) -> EnergyReport {
    if field.singular.is_empty() {
        return EnergyReport::zero(cfg.eps, cfg.rho);
    }
    let (core, outside) = integrate_split(field, cfg, params, |b| [field.tensor.energy_density(b), skew(b)[(0, 1)], 1.0]);
    let per_dislocation: Vec<f64> = core.iter().map(|c| c[0]).collect();
    let self_energy: f64 = per_dislocation.iter().sum();
    let interaction = outside[0];
    EnergyReport {
        total: self_energy + interaction,
        self_energy,
        interaction,
        per_dislocation,
        count: cfg.count(),
        eps: cfg.eps,
        rho: cfg.rho,
        skew_integral: core.iter().map(|c| c[1]).sum::<f64>() + outside[1],
        area: core.iter().map(|c| c[2]).sum::<f64>() + outside[2],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// Squares of side `2r_ε`, `r_ε = 1/(2√(ΛN_ε))`, masses at the centers of
    /// the squares contained in each region.
    Lattice,
    /// `round(ΛN_ε|A_l|)` masses spread over evenly filled rows; keeps the
    /// total mass exact when few squares would fit.
    Balanced,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoPreset {
    /// `ρ_ε = ε^γ`.
    Power(f64),
    /// `ρ_ε` equal to the placement half-spacing.
    Recovery,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryParams {
    pub eps: f64,
    pub rho: RhoPreset,
    pub placement: Placement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recovery {
    pub config: DislocationConfig,
    /// Half of the smallest spacing between masses.
    pub spacing_radius: f64,
    /// Value requested by the preset before clipping to the admissible one.
    pub rho_requested: f64,
    pub rho_clipped: bool,
}

/// Discrete configuration whose rescaled measure approximates `target`.
pub fn recovery_sequence(
    target: &LimitMeasure,
    decompositions: &[PhiCertificate],
    n_eps: f64,
    domain: &Domain2D,
    params: &RecoveryParams,
) -> Result<Recovery> {
    let LimitMeasure::PiecewiseConstant(regions) = target else {
        return Err(Error::InvalidInput("recovery needs a piecewise-constant target".into()));
    };
    if regions.len() != decompositions.len() {
        return Err(Error::InvalidInput(format!(
            "{} regions but {} decompositions",
            regions.len(),
            decompositions.len()
        )));
    }
    if !(n_eps >= 1.0) {
        return Err(Error::InvalidInput(format!("N_eps must be at least 1, got {n_eps}")));
    }
    let mut dislocations = Vec::new();
    let mut spacing = f64::INFINITY;
    for (region, cert) in regions.iter().zip(decompositions) {
        if (cert.xi - region.density).norm() > 1e-9 * region.density.norm().max(1.0) {
            return Err(Error::InvalidInput("decomposition does not match the region density".into()));
        }
        for corner in [region.min, region.max] {
            if domain.distance_to_boundary(&corner) < -1e-12 {
                return Err(Error::InvalidInput("region leaves the domain".into()));
            }
        }
        let lambda: f64 = cert.terms.iter().map(|(l, _)| l).sum();
        if lambda == 0.0 {
            continue;
        }
        let (points, r) = match params.placement {
            Placement::Lattice => lattice_points(region.min, region.max, 1.0 / (2.0 * (lambda * n_eps).sqrt())),
            Placement::Balanced => balanced_points(region.min, region.max, (lambda * n_eps * region.area()).round() as usize),
        };
        if points.is_empty() {
            continue;
        }
        spacing = spacing.min(r);
        let mut assigned = vec![0usize; cert.terms.len()];
        for (m, x) in points.into_iter().enumerate() {
            // largest deficit against the target fractions λ_k/Λ
            let k = (0..cert.terms.len())
                .max_by(|&a, &b| {
                    let da = cert.terms[a].0 / lambda * (m + 1) as f64 - assigned[a] as f64;
                    let db = cert.terms[b].0 / lambda * (m + 1) as f64 - assigned[b] as f64;
                    da.partial_cmp(&db).unwrap().then(b.cmp(&a))
                })
                .expect("nonempty decomposition");
            assigned[k] += 1;
            dislocations.push(Dislocation { position: x, burgers: cert.terms[k].1 });
        }
    }
    if dislocations.is_empty() {
        return Err(Error::InvalidInput(format!("N_eps = {n_eps} is too small for any square to fit")));
    }
    let admissible = spacing * (1.0 - 1e-9);
    let requested = match params.rho {
        RhoPreset::Power(g) => params.eps.powf(g),
        RhoPreset::Recovery => admissible,
    };
    let rho = requested.min(admissible);
    if !(rho > params.eps) {
        return Err(Error::Inadmissible(format!("hard-core radius {rho} does not exceed eps = {}", params.eps)));
    }
    Ok(Recovery {
        config: DislocationConfig::new(dislocations, params.eps, rho),
        spacing_radius: spacing,
        rho_requested: requested,
        rho_clipped: requested > admissible,
    })
}

fn lattice_points(min: Vec2, max: Vec2, r: f64) -> (Vec<Vec2>, f64) {
    let side = 2.0 * r;
    let nx = ((max.x - min.x) / side + 1e-9).floor() as usize;
    let ny = ((max.y - min.y) / side + 1e-9).floor() as usize;
    let mut pts = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            pts.push(Vec2::new(min.x + side * (i as f64 + 0.5), min.y + side * (j as f64 + 0.5)));
        }
    }
    (pts, r)
}

fn balanced_points(min: Vec2, max: Vec2, n: usize) -> (Vec<Vec2>, f64) {
    if n == 0 {
        return (Vec::new(), f64::INFINITY);
    }
    let (w, h) = (max.x - min.x, max.y - min.y);
    let rows = ((n as f64 * h / w).sqrt().round() as usize).clamp(1, n);
    let mut pts = Vec::with_capacity(n);
    let mut widest = 0;
    for j in 0..rows {
        let in_row = n / rows + usize::from(j < n % rows);
        widest = widest.max(in_row);
        for i in 0..in_row {
            pts.push(Vec2::new(
                min.x + w * (i as f64 + 0.5) / in_row as f64,
                min.y + h * (j as f64 + 0.5) / rows as f64,
            ));
        }
    }
    (pts, 0.5 * (h / rows as f64).min(w / widest as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Dilute,
    Critical,
    Super,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Dilute => "dilute",
            Regime::Critical => "critical",
            Regime::Super => "super",
        }
    }

    /// Number of dislocations per unit mass: `|log ε|^{1/2}`, `|log ε|`, `|log ε|²`.
    pub fn n_eps(&self, eps: f64) -> f64 {
        let l = eps.ln().abs();
        match self {
            Regime::Dilute => l.sqrt(),
            Regime::Critical => l,
            Regime::Super => l * l,
        }
    }

    /// Energy divided by `N_ε|log ε|`, `|log ε|²` or `N_ε²`.
    pub fn rescale(&self, energy: f64, n_eps: f64, eps: f64) -> f64 {
        let l = eps.ln().abs();
        match self {
            Regime::Dilute => energy / (n_eps * l),
            Regime::Critical => energy / (l * l),
            Regime::Super => energy / (n_eps * n_eps),
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dilute" => Ok(Regime::Dilute),
            "critical" => Ok(Regime::Critical),
            "super" => Ok(Regime::Super),
            _ => Err(Error::InvalidInput(format!("unknown regime {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub placement: Placement,
    pub rho: RhoPreset,
    pub sim: SimParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    pub n_eps: f64,
    pub count: usize,
    pub rho: f64,
    pub rho_clipped: bool,
    pub e_self: f64,
    pub e_inter: f64,
    pub e_total: f64,
    pub rescaled: f64,
}

impl SweepRow {
    /// `E_self / (count |log ε|)`.
    pub fn self_per_dislocation_per_log(&self) -> f64 {
        self.e_self / (self.count as f64 * self.eps.ln().abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub regime: Regime,
    pub rows: Vec<SweepRow>,
    /// Slope of `log E_inter` against `log N_ε`.
    pub inter_exponent: Option<f64>,
    /// Slope of `log E_self` against `log(N_ε |log ε|)`.
    pub self_exponent: Option<f64>,
}

/// Least-squares slope in log-log coordinates; `None` without two distinct
/// positive abscissae.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx < 1e-300 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

/// Recovery configuration, minimization and split for every ε.
pub fn scaling_sweep(
    regime: Regime,
    c: &ElasticTensor,
    domain: &Domain2D,
    eps_list: &[f64],
    target: &LimitMeasure,
    decompositions: &[PhiCertificate],
    opts: &SweepOptions,
) -> Result<SweepTable> {
    let rows: Vec<SweepRow> = eps_list
        .par_iter()
        .map(|&eps| {
            let n_eps = regime.n_eps(eps);
            let params = RecoveryParams { eps, rho: opts.rho, placement: opts.placement };
            let rec = recovery_sequence(target, decompositions, n_eps, domain, &params)?;
            let (_, report) = minimize_energy(domain, &rec.config, c, &opts.sim)?;
            Ok(SweepRow {
                eps,
                n_eps,
                count: rec.config.count(),
                rho: rec.config.rho,
                rho_clipped: rec.rho_clipped,
                e_self: report.self_energy,
                e_inter: report.interaction,
                e_total: report.total,
                rescaled: regime.rescale(report.total, n_eps, eps),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n: Vec<f64> = rows.iter().map(|r| r.n_eps).collect();
    let nl: Vec<f64> = rows.iter().map(|r| r.n_eps * r.eps.ln().abs()).collect();
    let inter: Vec<f64> = rows.iter().map(|r| r.e_inter).collect();
    let selfs: Vec<f64> = rows.iter().map(|r| r.e_self).collect();
    Ok(SweepTable { regime, inter_exponent: loglog_slope(&n, &inter), self_exponent: loglog_slope(&nl, &selfs), rows })
}
