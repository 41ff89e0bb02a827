//! Limit functionals, the weak compatibility constraint `Curl β = μ` and the
//! gap between rescaled discrete energies and their limit.

use std::sync::Arc;

use rayon::prelude::*;

use crate::elastic::{ElasticTensor, Mat2, Vec2};
use crate::error::{Error, Result};
use crate::fields::MatrixField;
use crate::linalg::pcg;
use crate::measure::{LimitMeasure, Region};
use crate::mesh::QuadMesh;
use crate::phi::PhiCertificate;
use crate::quadrature::gauss_legendre;
use crate::sim::{minimize_energy, recovery_sequence, Domain2D, EnergyReport, Placement, RecoveryParams, Regime, RhoPreset, SimParams};

pub use crate::measure::PointCharge;

/// Part of a limit strain that is not a finite-element gradient.
#[derive(Clone)]
pub enum BaseField {
    Zero,
    /// Row `i` is `(0, ∫_{x_0}^{x} μ_i(s, y) ds)`, whose curl is `μ`.
    Primitive(Vec<Region>),
    Field(Arc<dyn MatrixField + Send>),
}

impl std::fmt::Debug for BaseField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BaseField::Zero => write!(f, "Zero"),
            BaseField::Primitive(r) => write!(f, "Primitive({r:?})"),
            BaseField::Field(_) => write!(f, "Field(..)"),
        }
    }
}

impl BaseField {
    fn value(&self, x: &Vec2) -> Mat2 {
        match self {
            BaseField::Zero => Mat2::zeros(),
            BaseField::Primitive(regions) => {
                let mut p = Vec2::zeros();
                for r in regions {
                    if x.y >= r.min.y && x.y < r.max.y {
                        let len = (x.x.min(r.max.x) - r.min.x).max(0.0);
                        p += r.density * len;
                    }
                }
                Mat2::new(0.0, p.x, 0.0, p.y)
            }
            BaseField::Field(f) => f.value(x),
        }
    }

    fn singular_points(&self) -> Vec<Vec2> {
        match self {
            BaseField::Field(f) => f.singular_points(),
            _ => Vec::new(),
        }
    }
}

/// `β = base + ∇v` with `v` bilinear on `mesh`.
#[derive(Debug, Clone)]
pub struct LimitStrain {
    pub mesh: Arc<QuadMesh>,
    pub base: BaseField,
    pub displacement: Vec<f64>,
}

impl LimitStrain {
    pub fn zero(mesh: Arc<QuadMesh>) -> Self {
        let n = 2 * mesh.n_nodes();
        LimitStrain { mesh, base: BaseField::Zero, displacement: vec![0.0; n] }
    }

    pub fn from_field(mesh: Arc<QuadMesh>, f: Arc<dyn MatrixField + Send>) -> Self {
        let n = 2 * mesh.n_nodes();
        LimitStrain { mesh, base: BaseField::Field(f), displacement: vec![0.0; n] }
    }

    /// Gradient of the bilinear interpolant of `u`.
    pub fn gradient_of(mesh: Arc<QuadMesh>, u: impl Fn(&Vec2) -> Vec2) -> Self {
        let displacement = mesh.nodes.iter().flat_map(|p| { let v = u(p); [v.x, v.y] }).collect();
        LimitStrain { mesh, base: BaseField::Zero, displacement }
    }

    pub fn scaled(&self, t: f64) -> Self {
        let base = match &self.base {
            BaseField::Zero => BaseField::Zero,
            BaseField::Primitive(r) => BaseField::Primitive(r.iter().map(|r| Region { density: r.density * t, ..*r }).collect()),
            BaseField::Field(f) => {
                let f = f.clone();
                BaseField::Field(Arc::new(move |x: &Vec2| f.value(x) * t))
            }
        };
        LimitStrain { mesh: self.mesh.clone(), base, displacement: self.displacement.iter().map(|v| v * t).collect() }
    }

    fn at(&self, e: usize, a: f64, b: f64) -> (Vec2, Mat2, f64) {
        let p = self.mesh.point(e, a, b);
        let g = self.mesh.vector_gradient(e, &p, &self.displacement);
        (p.x, self.base.value(&p.x) + g, p.det)
    }

    /// `∫_Ω g(β)` by Gauss quadrature, refined near singular points of the base.
    pub fn integrate(&self, g: impl Fn(&Vec2, &Mat2) -> f64 + Sync) -> f64 {
        let sing = self.base.singular_points();
        let (gx, gw) = gauss_legendre(4);
        let parts: Vec<f64> = (0..self.mesh.elements.len())
            .into_par_iter()
            .map(|e| {
                let mut acc = 0.0;
                let mut stack = vec![(-1.0f64, 1.0f64, -1.0f64, 1.0f64, 0usize)];
                while let Some((a0, a1, b0, b1, depth)) = stack.pop() {
                    let c = self.mesh.point(e, 0.5 * (a0 + a1), 0.5 * (b0 + b1)).x;
                    let size = (self.mesh.point(e, a1, b1).x - self.mesh.point(e, a0, b0).x).norm();
                    if depth < 12 && sing.iter().any(|s| (s - c).norm() < size) {
                        let (am, bm) = (0.5 * (a0 + a1), 0.5 * (b0 + b1));
                        stack.extend([(a0, am, b0, bm, depth + 1), (am, a1, b0, bm, depth + 1), (am, a1, bm, b1, depth + 1), (a0, am, bm, b1, depth + 1)]);
                        continue;
                    }
                    let jac = 0.25 * (a1 - a0) * (b1 - b0);
                    for (qa, wa) in gx.iter().zip(&gw) {
                        for (qb, wb) in gx.iter().zip(&gw) {
                            let (x, beta, det) = self.at(e, a0 + 0.5 * (1.0 + qa) * (a1 - a0), b0 + 0.5 * (1.0 + qb) * (b1 - b0));
                            acc += wa * wb * jac * det * g(&x, &beta);
                        }
                    }
                }
                acc
            })
            .collect();
        parts.iter().sum()
    }

    pub fn elastic_energy(&self, c: &ElasticTensor) -> f64 {
        self.integrate(|_, b| c.energy_density(b))
    }
}

impl MatrixField for LimitStrain {
    fn value(&self, x: &Vec2) -> Mat2 {
        match self.mesh.locate(x) {
            Some((e, a, b)) => self.at(e, a, b).1,
            None => Mat2::zeros(),
        }
    }

    fn singular_points(&self) -> Vec<Vec2> {
        self.base.singular_points()
    }
}

fn interior_map(mesh: &QuadMesh) -> Vec<Option<usize>> {
    let bnd = mesh.is_boundary_node();
    let mut c = 0;
    bnd.iter()
        .map(|b| {
            if *b {
                None
            } else {
                c += 1;
                Some(c - 1)
            }
        })
        .collect()
}

fn add_point(mesh: &QuadMesh, x: &Vec2, q: Vec2, load: &mut [[f64; 2]]) {
    if let Some((e, a, b)) = mesh.locate(x) {
        let p = mesh.point(e, a, b);
        for k in 0..4 {
            let n = mesh.elements[e][k];
            load[n][0] += p.shape[k] * q.x;
            load[n][1] += p.shape[k] * q.y;
        }
    }
}

fn add_measure_load(mesh: &QuadMesh, mu: &LimitMeasure, scale: f64, load: &mut [[f64; 2]]) {
    match mu {
        LimitMeasure::Diracs(c) => {
            for p in c {
                add_point(mesh, &p.position, p.charge * scale, load);
            }
        }
        LimitMeasure::Circles { charges, radius } => {
            let n = 4096;
            for p in charges {
                for m in 0..n {
                    let th = 2.0 * std::f64::consts::PI * (m as f64 + 0.5) / n as f64;
                    let x = p.position + Vec2::new(th.cos(), th.sin()) * *radius;
                    add_point(mesh, &x, p.charge * (scale / n as f64), load);
                }
            }
        }
        LimitMeasure::PiecewiseConstant(_) | LimitMeasure::DiffuseDiscs { .. } => {
            // densities are discontinuous across region or disc boundaries: refine cut cells
            let (gx, gw) = gauss_legendre(4);
            for (e, el) in mesh.elements.iter().enumerate() {
                let mut stack = vec![(-1.0f64, 1.0f64, -1.0f64, 1.0f64, 0usize)];
                while let Some((a0, a1, b0, b1, depth)) = stack.pop() {
                    let corners = [(a0, b0), (a1, b0), (a1, b1), (a0, b1), (0.5 * (a0 + a1), 0.5 * (b0 + b1))];
                    let vals: Vec<Vec2> = corners.iter().map(|(a, b)| mu.density_at(&mesh.point(e, *a, *b).x).unwrap()).collect();
                    let uniform = vals.iter().all(|v| (v - vals[0]).norm() == 0.0);
                    if !uniform && depth < 8 {
                        let (am, bm) = (0.5 * (a0 + a1), 0.5 * (b0 + b1));
                        stack.extend([(a0, am, b0, bm, depth + 1), (am, a1, b0, bm, depth + 1), (am, a1, bm, b1, depth + 1), (a0, am, bm, b1, depth + 1)]);
                        continue;
                    }
                    let jac = 0.25 * (a1 - a0) * (b1 - b0);
                    for (qa, wa) in gx.iter().zip(&gw) {
                        for (qb, wb) in gx.iter().zip(&gw) {
                            let p = mesh.point(e, a0 + 0.5 * (1.0 + qa) * (a1 - a0), b0 + 0.5 * (1.0 + qb) * (b1 - b0));
                            let d = mu.density_at(&p.x).unwrap() * (scale * wa * wb * jac * p.det);
                            for k in 0..4 {
                                load[el[k]][0] += p.shape[k] * d.x;
                                load[el[k]][1] += p.shape[k] * d.y;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Discrete `H^{-1}` norm of `Curl β − μ`.
///
/// For every interior node `a` and row `i` the residual is
/// `∫⟨β_(i), J∇φ_a⟩ − ∫φ_a dμ_i` with `J(a, b) = (b, −a)`; its norm is
/// `(Σ_i r_iᵀ A⁻¹ r_i)^{1/2}` with `A` the Dirichlet Laplacian.
pub fn weak_curl_residual(beta: &LimitStrain, mu: &LimitMeasure) -> Result<f64> {
    weak_curl_residual_combined(beta, &[(1.0, mu)])
}

/// As [`weak_curl_residual`] against the signed combination `Σ c_k μ_k`.
pub fn weak_curl_residual_combined(beta: &LimitStrain, mu: &[(f64, &LimitMeasure)]) -> Result<f64> {
    let mesh = &beta.mesh;
    let sing = beta.base.singular_points();
    let (gx, gw) = gauss_legendre(4);
    let parts: Vec<Vec<(usize, [f64; 2])>> = (0..mesh.elements.len())
        .into_par_iter()
        .map(|e| {
            let el = mesh.elements[e];
            let mut acc = [[0.0; 2]; 4];
            let mut stack = vec![(-1.0f64, 1.0f64, -1.0f64, 1.0f64, 0usize)];
            while let Some((a0, a1, b0, b1, depth)) = stack.pop() {
                let c = mesh.point(e, 0.5 * (a0 + a1), 0.5 * (b0 + b1)).x;
                let size = (mesh.point(e, a1, b1).x - mesh.point(e, a0, b0).x).norm();
                if depth < 14 && sing.iter().any(|s| (s - c).norm() < 1.5 * size) {
                    let (am, bm) = (0.5 * (a0 + a1), 0.5 * (b0 + b1));
                    stack.extend([(a0, am, b0, bm, depth + 1), (am, a1, b0, bm, depth + 1), (am, a1, bm, b1, depth + 1), (a0, am, bm, b1, depth + 1)]);
                    continue;
                }
                let jac = 0.25 * (a1 - a0) * (b1 - b0);
                for (qa, wa) in gx.iter().zip(&gw) {
                    for (qb, wb) in gx.iter().zip(&gw) {
                        let p = mesh.point(e, a0 + 0.5 * (1.0 + qa) * (a1 - a0), b0 + 0.5 * (1.0 + qb) * (b1 - b0));
                        let b = beta.base.value(&p.x) + mesh.vector_gradient(e, &p, &beta.displacement);
                        let wt = wa * wb * jac * p.det;
                        for k in 0..4 {
                            let jg = Vec2::new(p.grad[k].y, -p.grad[k].x);
                            for i in 0..2 {
                                acc[k][i] += wt * (b[(i, 0)] * jg.x + b[(i, 1)] * jg.y);
                            }
                        }
                    }
                }
            }
            (0..4).map(|k| (el[k], acc[k])).collect()
        })
        .collect();
    let mut r = vec![[0.0; 2]; mesh.n_nodes()];
    for part in parts {
        for (n, v) in part {
            r[n][0] += v[0];
            r[n][1] += v[1];
        }
    }
    let mut load = vec![[0.0; 2]; mesh.n_nodes()];
    for (c, m) in mu {
        add_measure_load(mesh, m, *c, &mut load);
    }
    let map = interior_map(mesh);
    let a = mesh.assemble_laplace(2).restrict(&map);
    let mut total = 0.0;
    for i in 0..2 {
        let ri: Vec<f64> = (0..mesh.n_nodes()).filter(|n| map[*n].is_some()).map(|n| r[n][i] - load[n][i]).collect();
        if ri.iter().all(|v| *v == 0.0) {
            continue;
        }
        let z = pcg(&a, &ri, 1e-12, 100_000)?.solution;
        total += ri.iter().zip(&z).map(|(x, y)| x * y).sum::<f64>();
    }
    Ok(total.max(0.0).sqrt())
}

/// Value of a limit functional; `Infinite` when a constraint fails.
#[derive(Debug, Clone, PartialEq)]
pub enum FValue {
    Finite(f64),
    Infinite { constraint: &'static str, residual: f64 },
}

impl FValue {
    pub fn finite(&self) -> Option<f64> {
        match self {
            FValue::Finite(v) => Some(*v),
            FValue::Infinite { .. } => None,
        }
    }
}

/// Compatibility tolerance: ten times the residual of a smooth gradient on
/// the same mesh, scaled by the size of the data, with an absolute floor.
pub fn compatibility_tolerance(mesh: &Arc<QuadMesh>, scale: f64) -> Result<f64> {
    let probe = LimitStrain::from_field(
        mesh.clone(),
        Arc::new(|x: &Vec2| {
            // gradient of (sin x cos y, x y²)
            Mat2::new(x.x.cos() * x.y.cos(), -x.x.sin() * x.y.sin(), x.y * x.y, 2.0 * x.x * x.y)
        }),
    );
    let consistency = weak_curl_residual(&probe, &LimitMeasure::zero())?;
    Ok((10.0 * consistency).max(1e-9) * scale.max(1.0))
}

/// `Σ_l φ(ξ_l)|A_l|` or `Σ_i φ(ξ_i)`, using 1-homogeneity of φ.
pub fn plastic_term(mu: &LimitMeasure, phi_fn: &dyn Fn(Vec2) -> Result<f64>) -> Result<f64> {
    match mu {
        LimitMeasure::PiecewiseConstant(r) => r.iter().map(|r| Ok(phi_fn(r.density)? * r.area())).sum(),
        LimitMeasure::Diracs(c) => c.iter().map(|p| phi_fn(p.charge)).sum(),
        _ => Err(Error::InvalidInput("plastic term needs a piecewise-constant or atomic measure".into())),
    }
}

fn data_scale(beta: &LimitStrain, mu: &LimitMeasure) -> f64 {
    beta.integrate(|_, b| b.norm_squared()).sqrt() + mu.total_variation()
}

/// `∫ W(β) + ∫ φ(dμ/d|μ|) d|μ|` when `Curl β = μ`, otherwise `+∞`.
pub fn evaluate_f(mu: &LimitMeasure, beta: &LimitStrain, c: &ElasticTensor, phi_fn: &dyn Fn(Vec2) -> Result<f64>) -> Result<FValue> {
    let residual = weak_curl_residual(beta, mu)?;
    if residual > compatibility_tolerance(&beta.mesh, data_scale(beta, mu))? {
        return Ok(FValue::Infinite { constraint: "Curl beta = mu", residual });
    }
    Ok(FValue::Finite(beta.elastic_energy(c) + plastic_term(mu, phi_fn)?))
}

/// Same value as [`evaluate_f`] with the constraint `Curl β = 0`.
pub fn evaluate_f_dilute(mu: &LimitMeasure, beta: &LimitStrain, c: &ElasticTensor, phi_fn: &dyn Fn(Vec2) -> Result<f64>) -> Result<FValue> {
    let residual = weak_curl_residual(beta, &LimitMeasure::zero())?;
    if residual > compatibility_tolerance(&beta.mesh, data_scale(beta, &LimitMeasure::zero()))? {
        return Ok(FValue::Infinite { constraint: "Curl beta = 0", residual });
    }
    Ok(FValue::Finite(beta.elastic_energy(c) + plastic_term(mu, phi_fn)?))
}

/// `∫ W(β^sym)`; rejects fields with a skew part.
pub fn evaluate_f_super(beta_sym: &LimitStrain, c: &ElasticTensor) -> Result<f64> {
    let skew = beta_sym.integrate(|_, b| (b - b.transpose()).norm_squared());
    let size = beta_sym.integrate(|_, b| b.norm_squared());
    if skew > 1e-20 * size.max(1e-300) {
        return Err(Error::InvalidInput(format!("field is not symmetric (skew mass {skew:.3e})")));
    }
    Ok(beta_sym.elastic_energy(c))
}

pub fn rescaled_energy(report: &EnergyReport, regime: Regime, n_eps: f64, eps: f64) -> f64 {
    regime.rescale(report.total, n_eps, eps)
}

/// Minimizer of `∫ W(β)` among fields with `Curl β = μ`, as the primitive of
/// `μ` plus a finite-element gradient. Uses the domain mesh, which should
/// align with the region boundaries.
pub fn minimal_compatible_strain(mesh: Arc<QuadMesh>, mu: &LimitMeasure, c: &ElasticTensor) -> Result<LimitStrain> {
    let base = match mu {
        LimitMeasure::PiecewiseConstant(r) => BaseField::Primitive(r.clone()),
        _ if mu.is_zero() => BaseField::Zero,
        _ => return Err(Error::InvalidInput("minimal compatible strain needs a piecewise-constant measure".into())),
    };
    let mut strain = LimitStrain { mesh: mesh.clone(), base, displacement: vec![0.0; 2 * mesh.n_nodes()] };
    if matches!(strain.base, BaseField::Zero) {
        return Ok(strain);
    }
    let k = mesh.assemble_elasticity(c, 2);
    let (gx, gw) = gauss_legendre(4);
    let mut f = vec![0.0; 2 * mesh.n_nodes()];
    for (e, el) in mesh.elements.iter().enumerate() {
        for (qa, wa) in gx.iter().zip(&gw) {
            for (qb, wb) in gx.iter().zip(&gw) {
                let p = mesh.point(e, *qa, *qb);
                let s = c.apply(&strain.base.value(&p.x));
                let wt = wa * wb * p.det;
                for a in 0..4 {
                    for i in 0..2 {
                        f[2 * el[a] + i] += wt * (s[(i, 0)] * p.grad[a].x + s[(i, 1)] * p.grad[a].y);
                    }
                }
            }
        }
    }
    let n = mesh.n_nodes();
    let mut modes: Vec<Vec<f64>> = vec![(0..n).flat_map(|_| [1.0, 0.0]).collect(), (0..n).flat_map(|_| [0.0, 1.0]).collect()];
    if c.is_coercive_mode() {
        modes.push(mesh.nodes.iter().flat_map(|p| [-p.y, p.x]).collect());
    }
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for mut m in modes {
        for b in &basis {
            let d: f64 = m.iter().zip(b).map(|(x, y)| x * y).sum();
            m.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let norm = m.iter().map(|x| x * x).sum::<f64>().sqrt();
        m.iter_mut().for_each(|x| *x /= norm);
        basis.push(m);
    }
    for b in &basis {
        let d: f64 = f.iter().zip(b).map(|(x, y)| x * y).sum();
        f.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
    }
    let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
    strain.displacement = pcg(&k, &rhs, 1e-11, 100_000)?.solution;
    Ok(strain)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub eps: f64,
    pub n_eps: f64,
    pub count: usize,
    pub discrete: f64,
    pub limit: f64,
    pub gap: f64,
    pub gap_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapOptions {
    pub placement: Placement,
    pub rho: RhoPreset,
    pub sim: SimParams,
}

impl Default for GapOptions {
    fn default() -> Self {
        GapOptions { placement: Placement::Balanced, rho: RhoPreset::Power(0.5), sim: SimParams::default() }
    }
}

/// Rescaled minimal discrete energies of recovery configurations against the
/// limit functional of the regime.
///
/// The discrete field for a target `β` is the minimizer for the recovery
/// configuration plus the rescaled compatible difference `β − β_min`; by
/// optimality of both minimizers the cross terms vanish, so the discrete
/// value is the rescaled minimal energy plus `∫ W(β − β_min)`.
#[allow(clippy::too_many_arguments)]
pub fn gamma_gap(
    mu: &LimitMeasure,
    beta: &LimitStrain,
    c: &ElasticTensor,
    regime: Regime,
    eps_list: &[f64],
    decompositions: &[PhiCertificate],
    domain: &Domain2D,
    phi_fn: &(dyn Fn(Vec2) -> Result<f64> + Sync),
    opts: &GapOptions,
) -> Result<Vec<GapRow>> {
    let beta_min = minimal_compatible_strain(beta.mesh.clone(), mu, c)?;
    let residual = weak_curl_residual(beta, mu)?;
    if residual > compatibility_tolerance(&beta.mesh, data_scale(beta, mu))? {
        return Err(Error::Inconsistent(format!("target strain is not compatible with the measure (residual {residual:.3e})")));
    }
    let diff = LimitStrain {
        mesh: beta.mesh.clone(),
        base: BaseField::Field(Arc::new({
            let (b, m) = (beta.clone(), beta_min.clone());
            move |x: &Vec2| b.value(x) - m.value(x)
        })),
        displacement: vec![0.0; beta.displacement.len()],
    };
    let extra = diff.elastic_energy(c);
    let limit = match regime {
        Regime::Super => {
            let sym = LimitStrain {
                mesh: beta.mesh.clone(),
                base: BaseField::Field(Arc::new({
                    let b = beta.clone();
                    move |x: &Vec2| crate::elastic::sym(&b.value(x))
                })),
                displacement: vec![0.0; beta.displacement.len()],
            };
            sym.elastic_energy(c)
        }
        _ => beta.elastic_energy(c) + plastic_term(mu, phi_fn)?,
    };
    eps_list
        .par_iter()
        .map(|&eps| {
            let n_eps = regime.n_eps(eps);
            let (count, discrete) = if mu.is_zero() {
                (0, extra)
            } else {
                let params = RecoveryParams { eps, rho: opts.rho, placement: opts.placement };
                let rec = recovery_sequence(mu, decompositions, n_eps, domain, &params)?;
                let (_, report) = minimize_energy(domain, &rec.config, c, &opts.sim)?;
                (rec.config.count(), rescaled_energy(&report, regime, n_eps, eps) + extra)
            };
            let gap = discrete - limit;
            Ok(GapRow { eps, n_eps, count, discrete, limit, gap, gap_pct: 100.0 * gap / limit.abs().max(1e-300) })
        })
        .collect()
}
