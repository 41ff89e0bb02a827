//! Closed-form singular strain fields with prescribed circulation and
//! line-integral utilities.
//!
//! Orientation: circles are traversed counterclockwise and the circulation of
//! a matrix field is taken row-wise, `∮ β t ds`. With `J⊥(a, b) = (−b, a)`
//! every field below carrying charge `ξ` has circulation `+ξ`.

use std::f64::consts::PI;

use crate::elastic::{outer, ElasticTensor, Mat2, Vec2};
use crate::error::{Error, Result};

/// A matrix-valued field on the plane.
pub trait MatrixField: Sync {
    /// Field value at `x`. Implementations may return anything finite at
    /// their singular points; callers avoid them.
    fn value(&self, x: &Vec2) -> Mat2;

    /// Points where the field blows up, used to refine quadrature.
    fn singular_points(&self) -> Vec<Vec2> {
        Vec::new()
    }
}

impl<F: Fn(&Vec2) -> Mat2 + Sync> MatrixField for F {
    fn value(&self, x: &Vec2) -> Mat2 {
        self(x)
    }
}

fn perp(v: &Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldKind {
    /// `(1/(2π r)) b ⊗ t`.
    Toy,
    /// `(1/2π) ξ ⊗ J⊥(x−x0)/|x−x0|²`.
    KHat,
    /// `(1/(2π r_ε²)) ξ ⊗ J⊥(x−x0)` on `B_{r_ε}(x0)`, zero outside.
    KTilde { radius: f64 },
    /// Whole-plane equilibrium edge-dislocation distortion, plane strain,
    /// Poisson ratio `nu`.
    BetaR2Isotropic { nu: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularField {
    pub kind: FieldKind,
    pub center: Vec2,
    pub charge: Vec2,
}

pub fn toy_field(b: Vec2, x0: Vec2) -> Result<SingularField> {
    nonzero(&b)?;
    Ok(SingularField { kind: FieldKind::Toy, center: x0, charge: b })
}

pub fn k_hat(xi: Vec2, x0: Vec2) -> Result<SingularField> {
    nonzero(&xi)?;
    Ok(SingularField { kind: FieldKind::KHat, center: x0, charge: xi })
}

pub fn k_tilde(xi: Vec2, x0: Vec2, r_eps: f64) -> Result<SingularField> {
    nonzero(&xi)?;
    if !(r_eps > 0.0) {
        return Err(Error::InvalidInput(format!("k_tilde radius must be positive, got {r_eps}")));
    }
    Ok(SingularField { kind: FieldKind::KTilde { radius: r_eps }, center: x0, charge: xi })
}

/// Classical plane-strain edge dislocation field with Burgers vector `ξ`.
pub fn beta_r2_isotropic(c: &ElasticTensor, xi: Vec2) -> Result<SingularField> {
    beta_r2_isotropic_at(c, xi, Vec2::zeros())
}

pub fn beta_r2_isotropic_at(c: &ElasticTensor, xi: Vec2, x0: Vec2) -> Result<SingularField> {
    let (lambda, mu) = c.lame().ok_or(Error::UnsupportedTensor {
        mode: c.mode().name(),
        what: "no closed-form whole-plane field",
    })?;
    let nu = lambda / (2.0 * (lambda + mu));
    Ok(SingularField { kind: FieldKind::BetaR2Isotropic { nu }, center: x0, charge: xi })
}

fn nonzero(v: &Vec2) -> Result<()> {
    if v.norm() > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput("charge must be nonzero".into()))
    }
}

// Edge dislocation with unit Burgers vector e1 at the origin; gradient of
// u1 = (θ + a xy/r²)/2π, u2 = −((1−2ν) a ln r + (a/2)(x²−y²)/r²)/2π,
// a = 1/(2(1−ν)).
fn edge_e1(p: &Vec2, nu: f64) -> Mat2 {
    let (x, y) = (p.x, p.y);
    let r2 = x * x + y * y;
    let r4 = r2 * r2;
    let c = 1.0 / (2.0 * PI);
    let a = 1.0 / (2.0 * (1.0 - nu));
    let b11 = c * (-y / r2 + a * y * (y * y - x * x) / r4);
    let b12 = c * (x / r2 + a * x * (x * x - y * y) / r4);
    let b21 = -c * ((1.0 - 2.0 * nu) * a * x / r2 + 2.0 * a * x * y * y / r4);
    let b22 = -c * ((1.0 - 2.0 * nu) * a * y / r2 - 2.0 * a * x * x * y / r4);
    Mat2::new(b11, b12, b21, b22)
}

impl SingularField {
    /// Field value, rejecting the singular center.
    pub fn evaluate(&self, x: &Vec2) -> Result<Mat2> {
        let d = x - self.center;
        if d.norm() <= 1e-300 && !matches!(self.kind, FieldKind::KTilde { .. }) {
            return Err(Error::Singular { x: x.x, y: x.y });
        }
        Ok(self.value_unchecked(&d))
    }

    fn value_unchecked(&self, d: &Vec2) -> Mat2 {
        match self.kind {
            FieldKind::Toy | FieldKind::KHat => {
                let r2 = d.norm_squared();
                outer(&self.charge, &perp(d)) / (2.0 * PI * r2)
            }
            FieldKind::KTilde { radius } => {
                if d.norm() < radius {
                    outer(&self.charge, &perp(d)) / (2.0 * PI * radius * radius)
                } else {
                    Mat2::zeros()
                }
            }
            FieldKind::BetaR2Isotropic { nu } => {
                let e1 = edge_e1(d, nu);
                // rotate the e1 solution by 90° to obtain the e2 one
                let q = Mat2::new(0.0, -1.0, 1.0, 0.0);
                let e2 = q * edge_e1(&(q.transpose() * d), nu) * q.transpose();
                e1 * self.charge.x + e2 * self.charge.y
            }
        }
    }

    /// `r β(x0 + r(cos θ, sin θ))`, independent of `r` for the homogeneous kinds.
    pub fn angular_profile(&self, n_angles: usize) -> AngularProfile {
        let samples = (0..n_angles)
            .map(|m| {
                let th = 2.0 * PI * m as f64 / n_angles as f64;
                self.value_unchecked(&Vec2::new(th.cos(), th.sin()))
            })
            .collect();
        AngularProfile { samples }
    }
}

impl MatrixField for SingularField {
    fn value(&self, x: &Vec2) -> Mat2 {
        let d = x - self.center;
        if d.norm_squared() == 0.0 {
            return Mat2::zeros();
        }
        self.value_unchecked(&d)
    }

    fn singular_points(&self) -> Vec<Vec2> {
        match self.kind {
            FieldKind::KTilde { .. } => Vec::new(),
            _ => vec![self.center],
        }
    }
}

/// Superposition of singular fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FieldSum(pub Vec<SingularField>);

impl MatrixField for FieldSum {
    fn value(&self, x: &Vec2) -> Mat2 {
        self.0.iter().map(|f| MatrixField::value(f, x)).sum()
    }

    fn singular_points(&self) -> Vec<Vec2> {
        self.0.iter().flat_map(|f| f.singular_points()).collect()
    }
}

/// Samples `θ ↦ Γ(θ)` at equispaced angles `θ_m = 2π m / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularProfile {
    pub samples: Vec<Mat2>,
}

/// Default number of angles used when sampling profiles.
pub const DEFAULT_PROFILE_ANGLES: usize = 256;

impl AngularProfile {
    pub fn angle(&self, m: usize) -> f64 {
        2.0 * PI * m as f64 / self.samples.len() as f64
    }

    /// Rows `(θ, Γ11, Γ12, Γ21, Γ22)`.
    pub fn rows(&self) -> Vec<[f64; 5]> {
        self.samples
            .iter()
            .enumerate()
            .map(|(m, g)| [self.angle(m), g[(0, 0)], g[(0, 1)], g[(1, 0)], g[(1, 1)]])
            .collect()
    }
}

/// `ψ(ξ) = ∫_0^{2π} W(Γ_ξ(θ)) dθ` by the trapezoidal rule.
pub fn psi_from_profile(c: &ElasticTensor, g: &AngularProfile) -> Result<f64> {
    let n = g.samples.len();
    if n < 64 {
        return Err(Error::InvalidInput(format!("profile needs at least 64 angles, got {n}")));
    }
    Ok(g.samples.iter().map(|s| c.energy_density(s)).sum::<f64>() * 2.0 * PI / n as f64)
}

/// Row-wise circulation `∮_{∂B_r(center)} β t ds` by the periodic trapezoidal
/// rule on nodes `θ_m = 2π(m + ½)/n`.
pub fn circulation(f: &dyn MatrixField, center: Vec2, radius: f64, n_quad: usize) -> Result<Vec2> {
    if n_quad < 16 {
        return Err(Error::InvalidInput(format!("circulation needs n_quad >= 16, got {n_quad}")));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidInput(format!("circle radius must be positive, got {radius}")));
    }
    let h = 2.0 * PI * radius / n_quad as f64;
    for p in f.singular_points() {
        if ((p - center).norm() - radius).abs() < 2.0 * h {
            return Err(Error::Singular { x: p.x, y: p.y });
        }
    }
    let mut acc = Vec2::zeros();
    for m in 0..n_quad {
        let th = 2.0 * PI * (m as f64 + 0.5) / n_quad as f64;
        let t = Vec2::new(-th.sin(), th.cos());
        let x = center + Vec2::new(th.cos(), th.sin()) * radius;
        acc += f.value(&x) * t;
    }
    Ok(acc * h)
}

/// Lower bound `|ξ|² log(r2/r1)/(2π)` on `∫_{B_{r2}∖B_{r1}} |β − A|²` for any
/// curl-free field with circulation `ξ` and any constant skew `A`.
pub fn annulus_lower_bound(xi: &Vec2, r1: f64, r2: f64) -> f64 {
    xi.norm_squared() * (r2 / r1).ln() / (2.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elastic::ddot;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn e1() -> Vec2 {
        Vec2::new(1.0, 0.0)
    }
    fn e2() -> Vec2 {
        Vec2::new(0.0, 1.0)
    }

    #[test]
    fn toy_field_point_values() {
        let f = toy_field(e1(), Vec2::zeros()).unwrap();
        let v = f.evaluate(&Vec2::new(1.0, 0.0)).unwrap();
        // b ⊗ t with t = e2 at (1, 0)
        assert!((v - outer(&e1(), &e2()) / (2.0 * PI)).norm() < 1e-15);
        let v = f.evaluate(&Vec2::new(0.0, 1.0)).unwrap();
        assert!((v + outer(&e1(), &e1()) / (2.0 * PI)).norm() < 1e-15);
        assert!(f.evaluate(&Vec2::zeros()).is_err());
    }

    #[test]
    fn toy_and_khat_circulations() {
        let f = toy_field(e1(), Vec2::zeros()).unwrap();
        for r in [0.01, 0.3, 2.0] {
            assert!((circulation(&f, Vec2::zeros(), r, 64).unwrap() - e1()).norm() < 1e-12);
        }
        let xi = Vec2::new(0.3, -1.7);
        let k = k_hat(xi, Vec2::zeros()).unwrap();
        assert!((circulation(&k, Vec2::zeros(), 0.5, 256).unwrap() - xi).norm() < 1e-10);
    }

    #[test]
    fn khat_point_value() {
        let k = k_hat(e2(), Vec2::zeros()).unwrap();
        let v = k.evaluate(&Vec2::new(1.0, 0.0)).unwrap();
        assert!((v - outer(&e2(), &e2()) / (2.0 * PI)).norm() < 1e-15);
    }

    #[test]
    fn khat_circulation_independent_of_radius() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xi = Vec2::new(0.8, 0.25);
        let x0 = Vec2::new(0.2, -0.1);
        let k = k_hat(xi, x0).unwrap();
        for _ in 0..1000 {
            let r = 10f64.powf(rng.gen_range(-4.0..1.0));
            let c = circulation(&k, x0, r, 32).unwrap();
            assert!((c - xi).norm() < 1e-9);
        }
    }

    #[test]
    fn gradient_fields_have_zero_circulation() {
        // u = (sin x cos 2y, x³ y − y²)
        let grad = |p: &Vec2| {
            Mat2::new(
                p.x.cos() * (2.0 * p.y).cos(),
                -2.0 * p.x.sin() * (2.0 * p.y).sin(),
                3.0 * p.x * p.x * p.y,
                p.x.powi(3) - 2.0 * p.y,
            )
        };
        let c = circulation(&grad, Vec2::new(0.3, 0.1), 0.7, 64).unwrap();
        assert!(c.norm() < 1e-12);
    }

    #[test]
    fn circulation_is_additive() {
        let a = k_hat(Vec2::new(1.0, 0.0), Vec2::new(-0.2, 0.0)).unwrap();
        let b = k_hat(Vec2::new(0.5, -2.0), Vec2::new(0.25, 0.1)).unwrap();
        let sum = FieldSum(vec![a, b]);
        let direct = circulation(&sum, Vec2::zeros(), 1.0, 512).unwrap();
        let separate = circulation(&a, Vec2::zeros(), 1.0, 512).unwrap() + circulation(&b, Vec2::zeros(), 1.0, 512).unwrap();
        assert!((direct - Vec2::new(1.5, -2.0)).norm() < 1e-10);
        assert!((direct - separate).norm() < 1e-12);
        // a circle enclosing only one center
        let only_a = circulation(&sum, Vec2::new(-0.2, 0.0), 0.2, 512).unwrap();
        assert!((only_a - Vec2::new(1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn circulation_rejects_circle_through_singularity() {
        let k = k_hat(e1(), Vec2::new(1.0, 0.0)).unwrap();
        assert!(circulation(&k, Vec2::zeros(), 1.0, 64).is_err());
        assert!(circulation(&k, Vec2::zeros(), 0.5, 8).is_err());
    }

    #[test]
    fn ktilde_is_bounded_and_vanishes_outside() {
        let k = k_tilde(e1(), Vec2::zeros(), 0.1).unwrap();
        assert_eq!(k.evaluate(&Vec2::new(0.2, 0.0)).unwrap(), Mat2::zeros());
        let inside = k.evaluate(&Vec2::new(0.0999, 0.0)).unwrap().norm();
        assert!(inside <= 1.0 / (2.0 * PI * 0.1) + 1e-12);
        // circulation inside: enclosed mass fraction (r/r_eps)^2
        let c = circulation(&k, Vec2::zeros(), 0.05, 64).unwrap();
        assert!((c - e1() * 0.25).norm() < 1e-12);
    }

    #[test]
    fn beta_r2_circulation_and_homogeneity() {
        let c = ElasticTensor::isotropic(1.0, 1.0).unwrap();
        for xi in [e1(), e2(), Vec2::new(0.6, -1.1)] {
            let f = beta_r2_isotropic(&c, xi).unwrap();
            for r in [0.01, 1.0, 7.0] {
                let circ = circulation(&f, Vec2::zeros(), r, 256).unwrap();
                assert!((circ - xi).norm() < 1e-10, "{circ:?} vs {xi:?}");
            }
            let p = Vec2::new(0.3, -0.4);
            for t in [0.1, 3.0] {
                let lhs = f.evaluate(&(p * t)).unwrap() * t;
                assert!((lhs - f.evaluate(&p).unwrap()).norm() < 1e-12);
            }
        }
        assert!(beta_r2_isotropic(&ElasticTensor::toy_full_norm(), e1()).is_err());
    }

    // Divergence of ℂβ by centered differences on an annulus of sample points.
    fn max_divergence(c: &ElasticTensor, f: &SingularField, h: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..24 {
            let th = 2.0 * PI * (k as f64 + 0.3) / 24.0;
            for r in [0.5, 1.0, 1.5] {
                let x = Vec2::new(r * th.cos(), r * th.sin());
                let s = |p: Vec2| c.apply(&f.evaluate(&p).unwrap());
                let dx = (s(x + Vec2::new(h, 0.0)) - s(x - Vec2::new(h, 0.0))) / (2.0 * h);
                let dy = (s(x + Vec2::new(0.0, h)) - s(x - Vec2::new(0.0, h))) / (2.0 * h);
                let div = Vec2::new(dx[(0, 0)] + dy[(0, 1)], dx[(1, 0)] + dy[(1, 1)]);
                worst = worst.max(div.norm());
            }
        }
        worst
    }

    #[test]
    fn beta_r2_is_in_equilibrium() {
        for (l, m) in [(1.0, 1.0), (0.0, 1.0), (3.0, 0.5)] {
            let c = ElasticTensor::isotropic(l, m).unwrap();
            let f = beta_r2_isotropic(&c, Vec2::new(0.7, 0.4)).unwrap();
            let hs = [0.04, 0.02, 0.01];
            let errs: Vec<f64> = hs.iter().map(|&h| max_divergence(&c, &f, h)).collect();
            // second-order consistency of the difference quotient: error drops ~4x per halving
            assert!(errs[2] < 5e-3, "{errs:?}");
            let order = (errs[0] / errs[2]).log2() / 2.0;
            assert!(order >= 1.0, "observed order {order}, errors {errs:?}");
            // a non-equilibrium field of the same type fails the check
            let k = k_hat(Vec2::new(0.7, 0.4), Vec2::zeros()).unwrap();
            assert!(max_divergence(&c, &k, 0.01) > 1e-2);
        }
    }

    #[test]
    fn profile_reproduces_field() {
        let c = ElasticTensor::isotropic(1.0, 1.0).unwrap();
        let f = beta_r2_isotropic(&c, Vec2::new(1.0, 0.5)).unwrap();
        let g = f.angular_profile(64);
        for (m, s) in g.samples.iter().enumerate() {
            let th = g.angle(m);
            let r = 0.37;
            let v = f.evaluate(&Vec2::new(r * th.cos(), r * th.sin())).unwrap() * r;
            assert!((v - s).norm() < 1e-13);
        }
    }

    #[test]
    fn psi_from_profile_values() {
        let toy = ElasticTensor::toy_full_norm();
        let g = toy_field(e1(), Vec2::zeros()).unwrap().angular_profile(DEFAULT_PROFILE_ANGLES);
        assert!((psi_from_profile(&toy, &g).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-14);
        let zero = AngularProfile { samples: vec![Mat2::zeros(); 64] };
        assert_eq!(psi_from_profile(&toy, &zero).unwrap(), 0.0);
        let short = AngularProfile { samples: vec![Mat2::zeros(); 10] };
        assert!(psi_from_profile(&toy, &short).is_err());
    }

    #[test]
    fn psi_is_quadratic_in_charge() {
        let c = ElasticTensor::isotropic(1.0, 1.0).unwrap();
        let xi = Vec2::new(0.4, 0.9);
        let p1 = psi_from_profile(&c, &beta_r2_isotropic(&c, xi).unwrap().angular_profile(256)).unwrap();
        for t in [-2.0, 0.5, 3.0] {
            let pt = psi_from_profile(&c, &beta_r2_isotropic(&c, xi * t).unwrap().angular_profile(256)).unwrap();
            assert!((pt - t * t * p1).abs() < 1e-12 * pt.abs().max(1.0));
        }
    }

    #[test]
    fn toy_annulus_energy_quadrature() {
        // (1/|log ε|) ∫_{B1∖Bε} |β|² = 1/(2π) for the toy field, by polar Gauss quadrature
        let f = toy_field(e1(), Vec2::zeros()).unwrap();
        let eps: f64 = 1e-3;
        let n_th = 64;
        let (gx, gw) = crate::quadrature::gauss_legendre(4);
        let panels = 40;
        let (s0, s1) = (eps.ln(), 0.0);
        let mut total = 0.0;
        for p in 0..panels {
            let a = s0 + (s1 - s0) * p as f64 / panels as f64;
            let b = s0 + (s1 - s0) * (p + 1) as f64 / panels as f64;
            for (x, w) in gx.iter().zip(&gw) {
                let s = 0.5 * (a + b) + 0.5 * (b - a) * x;
                let r = s.exp();
                for m in 0..n_th {
                    let th = 2.0 * PI * m as f64 / n_th as f64;
                    let v = f.evaluate(&Vec2::new(r * th.cos(), r * th.sin())).unwrap();
                    total += ddot(&v, &v) * r * r * w * 0.5 * (b - a) * 2.0 * PI / n_th as f64;
                }
            }
        }
        assert!((total / eps.ln().abs() - 1.0 / (2.0 * PI)).abs() < 1e-6);
    }

    #[test]
    fn annulus_lower_bound_holds_for_admissible_fields() {
        // β = K̂ + ∇u with u smooth single-valued; any skew A
        let xi = Vec2::new(1.0, -0.5);
        let k = k_hat(xi, Vec2::zeros()).unwrap();
        let fields: Vec<Box<dyn Fn(&Vec2) -> Mat2 + Sync>> = vec![
            Box::new(move |p: &Vec2| k.value(p)),
            Box::new(move |p: &Vec2| k.value(p) + Mat2::new(0.3, p.y, 0.1 * p.x, -0.2)),
            Box::new(move |p: &Vec2| k.value(p) * 1.0 + Mat2::new(2.0 * p.x, 0.0, 0.0, 1.0)),
        ];
        let (r1, r2) = (0.1, 1.0);
        for f in &fields {
            for a in [0.0, 0.7] {
                let skew = Mat2::new(0.0, a, -a, 0.0);
                let mut total = 0.0;
                let (gx, gw) = crate::quadrature::gauss_legendre(6);
                let n_th = 128;
                for i in 0..20 {
                    let lo = r1 + (r2 - r1) * i as f64 / 20.0;
                    let hi = r1 + (r2 - r1) * (i + 1) as f64 / 20.0;
                    for (x, w) in gx.iter().zip(&gw) {
                        let r = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x;
                        for m in 0..n_th {
                            let th = 2.0 * PI * m as f64 / n_th as f64;
                            let v = f(&Vec2::new(r * th.cos(), r * th.sin())) - skew;
                            total += ddot(&v, &v) * r * w * 0.5 * (hi - lo) * 2.0 * PI / n_th as f64;
                        }
                    }
                }
                assert!(total >= annulus_lower_bound(&xi, r1, r2) * (1.0 - 1e-9));
            }
        }
    }
}
