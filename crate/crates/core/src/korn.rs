//! Empirical constants for the Korn-type inequality
//! `∫|β^skew|² ≤ C (∫|β^sym|² + |μ|(Ω)²)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::elastic::{sym, ElasticTensor, Mat2, Vec2};
use crate::error::{Error, Result};
use crate::mesh::QuadMesh;
use crate::quadrature::gauss_legendre;
use crate::sim::{integrate_split, minimize_energy, Dislocation, DislocationConfig, Domain2D, SimParams, StrainField};

/// Moments of a field on Ω. The skew part of `β` is `w A` with `A` the unit
/// skew matrix, so `|β^skew|² = 2w²`.
#[derive(Debug, Clone, PartialEq)]
pub struct KornSample {
    pub descriptor: String,
    /// `|μ|(Ω)`, zero for curl-free fields.
    pub mass: f64,
    pub area: f64,
    /// `∫|β^skew|²` after removing the skew average.
    pub skew_sq: f64,
    pub sym_sq: f64,
    /// Skew average `(1/|Ω|)∫w` before normalization.
    pub skew_average: f64,
}

impl KornSample {
    /// From `∫w`, `∫w²`, `∫|β^sym|²` and `|Ω|`.
    pub fn from_moments(descriptor: String, mass: f64, area: f64, w: f64, w2: f64, sym_sq: f64) -> Self {
        let mean = w / area;
        KornSample { descriptor, mass, area, skew_sq: (2.0 * (w2 - mean * w)).max(0.0), sym_sq, skew_average: mean }
    }

    pub fn from_rule(descriptor: String, rule: &QuadratureRule, mass: f64, beta: impl Fn(&Vec2) -> Mat2) -> Self {
        let (mut w, mut w2, mut s2, mut area) = (0.0, 0.0, 0.0, 0.0);
        for (x, wt) in &rule.points {
            let b = beta(x);
            let k = 0.5 * (b[(0, 1)] - b[(1, 0)]);
            w += wt * k;
            w2 += wt * k * k;
            s2 += wt * sym(&b).norm_squared();
            area += wt;
        }
        Self::from_moments(descriptor, mass, area, w, w2, s2)
    }

    /// Minimizer of a dislocation configuration, integrated outside the cores,
    /// with `|μ|(Ω) = Σ|ξ_i|`.
    pub fn from_strain_field(descriptor: String, field: &StrainField, cfg: &DislocationConfig, params: &SimParams) -> Self {
        let (core, rest) = integrate_split(field, cfg, params, |b| {
            let k = 0.5 * (b[(0, 1)] - b[(1, 0)]);
            [k, k * k, sym(b).norm_squared(), 1.0]
        });
        let mut t = rest;
        for c in &core {
            t.iter_mut().zip(c).for_each(|(a, b)| *a += b);
        }
        Self::from_moments(descriptor, cfg.total_variation(), t[3], t[0], t[1], t[2])
    }
}

/// `∫|β^skew|² / (∫|β^sym|² + |μ|(Ω)²)`, zero when the denominator vanishes.
pub fn korn_ratio(sample: &KornSample) -> f64 {
    let den = sample.sym_sq + sample.mass * sample.mass;
    if den == 0.0 {
        0.0
    } else {
        sample.skew_sq / den
    }
}

/// Gauss points and weights over a mesh.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<(Vec2, f64)>,
}

impl QuadratureRule {
    pub fn on_mesh(mesh: &QuadMesh, n: usize) -> Self {
        let (gx, gw) = gauss_legendre(n);
        let mut points = Vec::with_capacity(mesh.elements.len() * n * n);
        for e in 0..mesh.elements.len() {
            for (a, wa) in gx.iter().zip(&gw) {
                for (b, wb) in gx.iter().zip(&gw) {
                    let p = mesh.point(e, *a, *b);
                    points.push((p.x, wa * wb * p.det));
                }
            }
        }
        QuadratureRule { points }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KornFamily {
    Symmetric,
    GradientPolynomials,
    DislocationFields,
    /// Union of the other three families with the same seeds.
    Mixed,
}

impl KornFamily {
    pub fn name(&self) -> &'static str {
        match self {
            KornFamily::Symmetric => "symmetric",
            KornFamily::GradientPolynomials => "gradient-polynomials",
            KornFamily::DislocationFields => "dislocation-fields",
            KornFamily::Mixed => "mixed",
        }
    }
}

impl fmt::Display for KornFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KornFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [KornFamily::Symmetric, KornFamily::GradientPolynomials, KornFamily::DislocationFields, KornFamily::Mixed]
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown Korn family '{s}'")))
    }
}

/// Sweep settings. Fields live on the unit disk.
#[derive(Debug, Clone, PartialEq)]
pub struct KornOptions {
    pub mesh_size: f64,
    pub degree: usize,
    pub dislocations: usize,
    pub eps: f64,
    pub rho: f64,
    /// Power steps applied to each random polynomial, pushing it toward the
    /// worst direction of the degree-limited space. Zero keeps raw samples.
    pub power_steps: usize,
    pub sim: SimParams,
}

impl Default for KornOptions {
    fn default() -> Self {
        KornOptions { mesh_size: 1.0 / 12.0, degree: 4, dislocations: 10, eps: 1e-3, rho: 0.04, power_steps: 4, sim: SimParams::default() }
    }
}

/// Gram matrices of `∫|β^skew|²` (skew average removed) and `∫|β^sym|²` on
/// the gradients of the monomial basis.
#[derive(Debug, Clone)]
pub struct PolynomialPencil {
    pub degree: usize,
    pub skew: DMatrix<f64>,
    pub sym: DMatrix<f64>,
    /// `Y^{-1/2}` on the range of the sym Gram matrix.
    whitening: DMatrix<f64>,
}

fn monomials(degree: usize) -> Vec<(usize, usize)> {
    (1..=degree).flat_map(|t| (0..=t).map(move |i| (i, t - i))).collect()
}

fn basis_gradient(m: (usize, usize), comp: usize, x: &Vec2) -> Mat2 {
    let (i, j) = m;
    let dx = if i > 0 { i as f64 * x.x.powi(i as i32 - 1) * x.y.powi(j as i32) } else { 0.0 };
    let dy = if j > 0 { j as f64 * x.x.powi(i as i32) * x.y.powi(j as i32 - 1) } else { 0.0 };
    if comp == 0 {
        Mat2::new(dx, dy, 0.0, 0.0)
    } else {
        Mat2::new(0.0, 0.0, dx, dy)
    }
}

impl PolynomialPencil {
    pub fn new(rule: &QuadratureRule, degree: usize) -> Self {
        let mons = monomials(degree);
        let n = 2 * mons.len();
        let mut skew: DMatrix<f64> = DMatrix::zeros(n, n);
        let mut sym_g: DMatrix<f64> = DMatrix::zeros(n, n);
        let mut wsum: DVector<f64> = DVector::zeros(n);
        let mut area = 0.0;
        for (x, wt) in &rule.points {
            let g: Vec<Mat2> = mons.iter().flat_map(|m| [basis_gradient(*m, 0, x), basis_gradient(*m, 1, x)]).collect();
            let w: Vec<f64> = g.iter().map(|b| 0.5 * (b[(0, 1)] - b[(1, 0)])).collect();
            let sg: Vec<Mat2> = g.iter().map(sym).collect();
            for k in 0..n {
                wsum[k] += wt * w[k];
                for l in 0..n {
                    skew[(k, l)] += 2.0 * wt * w[k] * w[l];
                    sym_g[(k, l)] += wt * sg[k].dot(&sg[l]);
                }
            }
            area += wt;
        }
        skew -= &wsum * wsum.transpose() * (2.0 / area);
        let eig = sym_g.clone().symmetric_eigen();
        let top = eig.eigenvalues.max();
        let mut whitening: DMatrix<f64> = DMatrix::zeros(n, n);
        for (k, lam) in eig.eigenvalues.iter().enumerate() {
            if *lam > 1e-12 * top {
                let q = eig.eigenvectors.column(k);
                whitening += q * q.transpose() / lam.sqrt();
            }
        }
        PolynomialPencil { degree, skew, sym: sym_g, whitening }
    }

    /// Supremum of the ratio over the whole polynomial space.
    pub fn supremum(&self) -> f64 {
        let m = &self.whitening * &self.skew * &self.whitening;
        m.symmetric_eigen().eigenvalues.max()
    }

    fn power_step(&self, c: &DVector<f64>) -> DVector<f64> {
        let y = &self.whitening * &self.whitening * (&self.skew * c);
        let n = y.norm();
        if n > 0.0 {
            y / n
        } else {
            c.clone()
        }
    }
}

/// Mesh, quadrature and polynomial pencil shared by the samples of a sweep.
#[derive(Debug, Clone)]
pub struct KornContext {
    pub domain: Domain2D,
    pub rule: QuadratureRule,
    pub pencil: PolynomialPencil,
    pub opts: KornOptions,
}

impl KornContext {
    pub fn new(opts: &KornOptions) -> Result<Self> {
        let domain = Domain2D::unit_disk(opts.mesh_size)?;
        let rule = QuadratureRule::on_mesh(&domain.mesh, 5);
        let pencil = PolynomialPencil::new(&rule, opts.degree);
        Ok(KornContext { domain, rule, pencil, opts: opts.clone() })
    }
}

/// Largest ratio of a sweep and the sample that attains it.
#[derive(Debug, Clone, PartialEq)]
pub struct KornSweep {
    pub family: KornFamily,
    pub seed: u64,
    pub constant: f64,
    pub worst: String,
    pub ratios: Vec<(String, f64)>,
}

fn sample_rng(seed: u64, family: KornFamily, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tag = match family {
        KornFamily::Symmetric => 1u64,
        KornFamily::GradientPolynomials => 2,
        KornFamily::DislocationFields => 3,
        KornFamily::Mixed => 4,
    };
    rng.set_stream((tag << 40) | index as u64);
    rng
}

/// Coefficients of `u = Σ (a_k, b_k) x^i y^j` over `1 ≤ i + j ≤ degree`,
/// interleaved as `a_0, b_0, a_1, ...`.
fn random_polynomial(rng: &mut ChaCha8Rng, degree: usize) -> DVector<f64> {
    DVector::from_iterator(2 * monomials(degree).len(), (0..2 * monomials(degree).len()).map(|_| rng.gen_range(-1.0..1.0)))
}

fn polynomial_gradient(degree: usize, c: &DVector<f64>, x: &Vec2) -> Mat2 {
    let mut g = Mat2::zeros();
    for (k, m) in monomials(degree).into_iter().enumerate() {
        g += basis_gradient(m, 0, x) * c[2 * k] + basis_gradient(m, 1, x) * c[2 * k + 1];
    }
    g
}

fn dislocation_config(rng: &mut ChaCha8Rng, domain: &Domain2D, opts: &KornOptions) -> DislocationConfig {
    let burgers = [Vec2::new(1.0, 0.0), Vec2::new(-1.0, 0.0), Vec2::new(0.0, 1.0), Vec2::new(0.0, -1.0)];
    let margin = opts.rho.max(domain.mesh.max_edge()) * 1.5;
    let mut dislocations: Vec<Dislocation> = Vec::new();
    while dislocations.len() < opts.dislocations {
        let x = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if domain.distance_to_boundary(&x) < margin || dislocations.iter().any(|d| (d.position - x).norm() < 2.5 * opts.rho) {
            continue;
        }
        dislocations.push(Dislocation { position: x, burgers: burgers[rng.gen_range(0..4)] });
    }
    DislocationConfig::new(dislocations, opts.eps, opts.rho)
}

/// One sample of a family, reproducible from `(family, seed, index)`.
pub fn korn_sample(family: KornFamily, seed: u64, index: usize, ctx: &KornContext) -> Result<KornSample> {
    let descriptor = format!("family={family} seed={seed} index={index}");
    let mut rng = sample_rng(seed, family, index);
    let (opts, rule, deg) = (&ctx.opts, &ctx.rule, ctx.opts.degree);
    match family {
        KornFamily::Symmetric => {
            let c = random_polynomial(&mut rng, deg);
            Ok(KornSample::from_rule(descriptor, rule, 0.0, |x| sym(&polynomial_gradient(deg, &c, x))))
        }
        KornFamily::GradientPolynomials => {
            let mut c = random_polynomial(&mut rng, deg);
            for _ in 0..opts.power_steps {
                c = ctx.pencil.power_step(&c);
            }
            Ok(KornSample::from_rule(descriptor, rule, 0.0, |x| polynomial_gradient(deg, &c, x)))
        }
        KornFamily::DislocationFields => {
            let cfg = dislocation_config(&mut rng, &ctx.domain, opts);
            let c = ElasticTensor::isotropic(1.0, 1.0)?;
            let (field, _) = minimize_energy(&ctx.domain, &cfg, &c, &opts.sim)?;
            Ok(KornSample::from_strain_field(descriptor, &field, &cfg, &opts.sim))
        }
        KornFamily::Mixed => Err(Error::InvalidInput("mixed is a union of families; sample a member family".into())),
    }
}

/// Number of dislocation-field samples drawn per `n_samples` in a mixed sweep.
pub fn mixed_dislocation_samples(n_samples: usize) -> usize {
    n_samples.div_ceil(25)
}

/// Deterministic seeded sweep; samples are independent of evaluation order.
pub fn korn_sweep(family: KornFamily, n_samples: usize, seed: u64, opts: &KornOptions) -> Result<KornSweep> {
    if n_samples == 0 {
        return Err(Error::InvalidInput("korn sweep needs at least one sample".into()));
    }
    let ctx = KornContext::new(opts)?;
    let jobs: Vec<(KornFamily, usize)> = match family {
        KornFamily::Mixed => (0..n_samples)
            .map(|i| (KornFamily::GradientPolynomials, i))
            .chain((0..n_samples).map(|i| (KornFamily::Symmetric, i)))
            .chain((0..mixed_dislocation_samples(n_samples)).map(|i| (KornFamily::DislocationFields, i)))
            .collect(),
        f => (0..n_samples).map(|i| (f, i)).collect(),
    };
    let ratios: Vec<(String, f64)> = jobs
        .par_iter()
        .map(|&(f, i)| {
            let s = korn_sample(f, seed, i, &ctx)?;
            Ok((s.descriptor.clone(), korn_ratio(&s)))
        })
        .collect::<Result<_>>()?;
    let (worst, constant) = ratios.iter().fold((String::new(), f64::NEG_INFINITY), |acc, (d, r)| if *r > acc.1 { (d.clone(), *r) } else { acc });
    Ok(KornSweep { family, seed, constant, worst, ratios })
}

/// Reference constants on the unit disk with the default options; a sweep
/// exceeding them signals a regression.
pub mod baseline {
    /// Gradient polynomials of degree ≤ 4, 500 samples. Equals `K − 1` for the
    /// classical disk constant `K = 4` of `∫|∇u|² ≤ K∫|e(u)|²`.
    pub const UNIT_DISK_GRADIENT: f64 = 3.0;
    /// Safety factor applied to [`UNIT_DISK_GRADIENT`] for dislocation fields.
    pub const SAFETY: f64 = 2.0;
}
