//! Elastic tensors, the strain energy density and symmetric/skew algebra
//! on 2×2 matrices.
//!
//! Tensors act on matrices through their row-major vectorization
//! `(β11, β12, β21, β22)`, so a tensor is stored as a 4×4 matrix.

use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector2};

use crate::error::{Error, Result};

/// 2×2 real matrix (strains, distortions, stresses).
pub type Mat2 = Matrix2<f64>;
/// 2D vector (points, Burgers vectors).
pub type Vec2 = Vector2<f64>;

/// Symmetric part `(ξ + ξᵀ)/2`.
pub fn sym(m: &Mat2) -> Mat2 {
    (m + m.transpose()) * 0.5
}

/// Skew part `(ξ − ξᵀ)/2`.
pub fn skew(m: &Mat2) -> Mat2 {
    (m - m.transpose()) * 0.5
}

/// Frobenius product `a : b`.
pub fn ddot(a: &Mat2, b: &Mat2) -> f64 {
    a.component_mul(b).sum()
}

/// Tensor product `a ⊗ b` (the matrix `a bᵀ`).
pub fn outer(a: &Vec2, b: &Vec2) -> Mat2 {
    a * b.transpose()
}

fn vectorize(m: &Mat2) -> [f64; 4] {
    [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]]
}

fn devectorize(v: [f64; 4]) -> Mat2 {
    Mat2::new(v[0], v[1], v[2], v[3])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TensorMode {
    /// `ℂξ = 2μ ξ^sym + λ tr(ξ) I`.
    Isotropic { lambda: f64, mu: f64 },
    /// Arbitrary tensor with minor symmetries.
    General,
    /// `W(ξ) = |ξ|²` on the full matrix. Not coercive in the sym-only sense;
    /// only meant for closed-form oracles.
    ToyFullNorm,
}

impl TensorMode {
    pub fn name(&self) -> &'static str {
        match self {
            TensorMode::Isotropic { .. } => "isotropic",
            TensorMode::General => "general",
            TensorMode::ToyFullNorm => "toy-full-norm",
        }
    }
}

/// Elasticity tensor ℂ with the strain energy density `W(ξ) = ½ ℂξ:ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticTensor {
    mode: TensorMode,
    c: [[f64; 4]; 4],
    coercivity: Option<(f64, f64)>,
    major_symmetric: bool,
}

impl ElasticTensor {
    pub fn isotropic(lambda: f64, mu: f64) -> Result<Self> {
        if !(mu > 0.0) || !(lambda + mu > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidInput(format!(
                "isotropic Lamé pair ({lambda}, {mu}) must satisfy mu > 0 and lambda + mu > 0"
            )));
        }
        let mut c = [[0.0; 4]; 4];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
                        c[2 * i + j][2 * k + l] =
                            lambda * d(i, j) * d(k, l) + mu * (d(i, k) * d(j, l) + d(i, l) * d(j, k));
                    }
                }
            }
        }
        Self::finish(TensorMode::Isotropic { lambda, mu }, c, true)
    }

    /// Builds a general tensor from `entries[i][j][k][l] = C_ijkl`.
    ///
    /// Minor symmetries are enforced by averaging. A missing major symmetry is
    /// recorded (see [`ElasticTensor::is_major_symmetric`]) and the quadratic
    /// form keeps only its symmetric part.
    pub fn general(entries: [[[[f64; 2]; 2]; 2]; 2]) -> Result<Self> {
        let mut c = [[0.0; 4]; 4];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        c[2 * i + j][2 * k + l] = 0.25
                            * (entries[i][j][k][l]
                                + entries[j][i][k][l]
                                + entries[i][j][l][k]
                                + entries[j][i][l][k]);
                    }
                }
            }
        }
        let mut major = true;
        let scale = c.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        for a in 0..4 {
            for b in 0..4 {
                if (c[a][b] - c[b][a]).abs() > 1e-12 * scale {
                    major = false;
                }
            }
        }
        let mut sym_c = c;
        for a in 0..4 {
            for b in 0..4 {
                sym_c[a][b] = 0.5 * (c[a][b] + c[b][a]);
            }
        }
        Self::finish(TensorMode::General, sym_c, major)
    }

    pub fn toy_full_norm() -> Self {
        let mut c = [[0.0; 4]; 4];
        for (a, row) in c.iter_mut().enumerate() {
            row[a] = 2.0;
        }
        ElasticTensor { mode: TensorMode::ToyFullNorm, c, coercivity: None, major_symmetric: true }
    }

    fn finish(mode: TensorMode, c: [[f64; 4]; 4], major_symmetric: bool) -> Result<Self> {
        let mut t = ElasticTensor { mode, c, coercivity: None, major_symmetric };
        let (c1, c2) = t.sym_form_extremes();
        if !(c1 > 0.0) {
            return Err(Error::InvalidInput(format!(
                "tensor is not coercive on symmetric matrices (smallest eigenvalue {c1:e})"
            )));
        }
        t.coercivity = Some((c1, c2));
        Ok(t)
    }

    // Eigenvalues of ξ ↦ ℂξ:ξ on an orthonormal basis of symmetric matrices.
    fn sym_form_extremes(&self) -> (f64, f64) {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let basis = [
            Mat2::new(1.0, 0.0, 0.0, 0.0),
            Mat2::new(0.0, 0.0, 0.0, 1.0),
            Mat2::new(0.0, r, r, 0.0),
        ];
        let mut g = Matrix3::zeros();
        for a in 0..3 {
            for b in 0..3 {
                g[(a, b)] = self.contract(&basis[a], &basis[b]);
            }
        }
        let eig = SymmetricEigen::new(g);
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    }

    pub fn mode(&self) -> TensorMode {
        self.mode
    }

    /// True for isotropic and general tensors, whose energy depends on `ξ^sym` only.
    pub fn is_coercive_mode(&self) -> bool {
        !matches!(self.mode, TensorMode::ToyFullNorm)
    }

    pub fn is_major_symmetric(&self) -> bool {
        self.major_symmetric
    }

    /// Matrix of the tensor acting on row-major vectorized matrices.
    pub fn components(&self) -> &[[f64; 4]; 4] {
        &self.c
    }

    /// `ℂξ`.
    pub fn apply(&self, xi: &Mat2) -> Mat2 {
        let v = vectorize(xi);
        let mut out = [0.0; 4];
        for (a, o) in out.iter_mut().enumerate() {
            *o = (0..4).map(|b| self.c[a][b] * v[b]).sum();
        }
        devectorize(out)
    }

    /// `ℂa : b`.
    pub fn contract(&self, a: &Mat2, b: &Mat2) -> f64 {
        ddot(&self.apply(a), b)
    }

    /// `W(ξ) = ½ ℂξ:ξ`.
    pub fn energy_density(&self, xi: &Mat2) -> f64 {
        0.5 * self.contract(xi, xi)
    }

    /// Extreme constants `(c1, c2)` with `c1|ξ^sym|² ≤ ℂξ:ξ ≤ c2|ξ^sym|²`.
    pub fn coercivity_constants(&self) -> Result<(f64, f64)> {
        self.coercivity.ok_or(Error::UnsupportedTensor {
            mode: self.mode.name(),
            what: "coercivity constants are only defined for sym-only energies",
        })
    }

    /// Lamé pair when the tensor is isotropic.
    pub fn lame(&self) -> Option<(f64, f64)> {
        match self.mode {
            TensorMode::Isotropic { lambda, mu } => Some((lambda, mu)),
            _ => None,
        }
    }

    /// The same tensor rotated by `q`: `(ℂ_q ξ) = q ℂ(qᵀ ξ q) qᵀ`.
    pub fn rotated(&self, q: &Mat2) -> ElasticTensor {
        let mut c = [[0.0; 4]; 4];
        for b in 0..4 {
            let mut e = [0.0; 4];
            e[b] = 1.0;
            let col = q * self.apply(&(q.transpose() * devectorize(e) * q)) * q.transpose();
            let v = vectorize(&col);
            for a in 0..4 {
                c[a][b] = v[a];
            }
        }
        ElasticTensor { mode: self.mode, c, coercivity: self.coercivity, major_symmetric: self.major_symmetric }
    }
}
