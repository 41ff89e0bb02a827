//! Relaxed self-energy density φ obtained by splitting a dislocation into
//! lattice dislocations, computed as a small linear program over `𝕊 ∩ B_R`.

use std::f64::consts::PI;

use crate::burgers::{BurgersSystem, LatticeVector};
use crate::cell::{psi_limit, CellMeshParams};
use crate::elastic::{ElasticTensor, TensorMode, Vec2};
use crate::error::{Error, Result};
use crate::fields::{beta_r2_isotropic, psi_from_profile, DEFAULT_PROFILE_ANGLES};

/// Where the values of ψ come from.
#[derive(Debug, Clone, PartialEq)]
pub enum PsiSource {
    /// `|ξ|²/2π`, exact for the full-norm toy energy.
    ToyAnalytic,
    /// Angular quadrature of the closed-form whole-plane field (isotropic only).
    ProfileQuadrature,
    /// Extrapolated annulus cell problems.
    CellExtrapolated(CellMeshParams),
}

impl PsiSource {
    pub fn tag(&self) -> &'static str {
        match self {
            PsiSource::ToyAnalytic => "toy-analytic",
            PsiSource::ProfileQuadrature => "profile-quadrature",
            PsiSource::CellExtrapolated(_) => "cell-extrapolated",
        }
    }

    /// Profile quadrature when a closed form exists, cell problems otherwise.
    pub fn default_for(c: &ElasticTensor) -> PsiSource {
        match c.mode() {
            TensorMode::Isotropic { .. } => PsiSource::ProfileQuadrature,
            TensorMode::ToyFullNorm => PsiSource::ToyAnalytic,
            TensorMode::General => PsiSource::CellExtrapolated(CellMeshParams::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsiEntry {
    pub lattice: LatticeVector,
    pub psi: f64,
}

/// ψ tabulated on the lattice ball `𝕊 ∩ B_R`.
///
/// ψ is a quadratic form in ξ, so the table also keeps its symmetric matrix
/// and can evaluate ψ off the ball.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiTable {
    pub entries: Vec<PsiEntry>,
    pub radius: f64,
    pub source: &'static str,
    pub burgers: BurgersSystem,
    form: [[f64; 2]; 2],
}

impl PsiTable {
    pub fn psi(&self, xi: &Vec2) -> f64 {
        let a = &self.form;
        a[0][0] * xi.x * xi.x + 2.0 * a[0][1] * xi.x * xi.y + a[1][1] * xi.y * xi.y
    }

    pub fn quadratic_form(&self) -> [[f64; 2]; 2] {
        self.form
    }

    /// `min_k ψ(ξ_k)/|ξ_k|` over the table.
    pub fn efficiency_floor(&self) -> f64 {
        self.entries.iter().map(|e| e.psi / e.lattice.vector.norm()).fold(f64::INFINITY, f64::min)
    }

    fn burgers_efficiency(&self) -> f64 {
        self.burgers.vectors().iter().map(|b| self.psi(b) / b.norm()).fold(0.0, f64::max)
    }
}

fn quadratic_form(c: &ElasticTensor, source: &PsiSource) -> Result<[[f64; 2]; 2]> {
    let eval = |xi: Vec2| -> Result<f64> {
        match source {
            PsiSource::ToyAnalytic => {
                if c.mode() != TensorMode::ToyFullNorm {
                    return Err(Error::UnsupportedTensor { mode: c.mode().name(), what: "toy-analytic ψ" });
                }
                Ok(xi.norm_squared() / (2.0 * PI))
            }
            PsiSource::ProfileQuadrature => {
                let f = beta_r2_isotropic(c, xi)?;
                psi_from_profile(c, &f.angular_profile(DEFAULT_PROFILE_ANGLES))
            }
            PsiSource::CellExtrapolated(p) => Ok(psi_limit(c, xi, p)?.value),
        }
    };
    let q1 = eval(Vec2::new(1.0, 0.0))?;
    let q2 = eval(Vec2::new(0.0, 1.0))?;
    let q12 = eval(Vec2::new(1.0, 1.0))?;
    let off = 0.5 * (q12 - q1 - q2);
    Ok([[q1, off], [off, q2]])
}

/// Tabulate ψ on `lattice_ball(R)` and verify that `R` is large enough.
///
/// A lattice vector whose efficiency `ψ(ξ)/|ξ|` exceeds that of every Burgers
/// vector is never used by an optimal decomposition, because splitting it into
/// Burgers vectors is cheaper. The radius is accepted when every vector of the
/// outer shell `R − max|b| < |ξ| ≤ R` is at least twice as inefficient; since
/// ψ grows quadratically, vectors further out are worse still.
pub fn build_psi_table(c: &ElasticTensor, b: &BurgersSystem, radius: f64, source: &PsiSource) -> Result<PsiTable> {
    let form = quadratic_form(c, source)?;
    build_psi_table_from_form(form, b, radius, source.tag())
}

pub fn build_psi_table_from_form(form: [[f64; 2]; 2], b: &BurgersSystem, radius: f64, source: &'static str) -> Result<PsiTable> {
    let det = form[0][0] * form[1][1] - form[0][1] * form[1][0];
    if !(form[0][0] > 0.0 && det > 0.0) {
        return Err(Error::InvalidInput(format!("ψ quadratic form {form:?} is not positive definite")));
    }
    let ball = b.lattice_ball(radius)?;
    let mut table = PsiTable { entries: Vec::with_capacity(ball.len()), radius, source, burgers: b.clone(), form };
    for lattice in ball {
        let psi = table.psi(&lattice.vector);
        table.entries.push(PsiEntry { lattice, psi });
    }
    let best = table.burgers_efficiency();
    let shell = radius - b.max_norm();
    for e in &table.entries {
        let n = e.lattice.vector.norm();
        if n > shell + 1e-12 && e.psi / n < 2.0 * best {
            return Err(Error::RadiusInsufficient { radius, x: e.lattice.vector.x, y: e.lattice.vector.y });
        }
    }
    Ok(table)
}

/// Optimal decomposition `ξ = Σ λ_k ξ_k` with its residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiCertificate {
    pub xi: Vec2,
    pub value: f64,
    /// Active columns `(λ_k, ξ_k)` with `λ_k > 0`; at most two.
    pub terms: Vec<(f64, Vec2)>,
    /// `|Σ λ_k ξ_k − ξ|`.
    pub feasibility_residual: f64,
    /// Largest violation of the dual constraints `⟨y, ξ_k⟩ ≤ ψ(ξ_k)`.
    pub optimality_residual: f64,
}

struct Column {
    v: Vec2,
    cost: f64,
}

const LP_TOL: f64 = 1e-12;

// Enumerates all bases of at most two columns. A pair whose determinant
// vanishes is skipped; parallel single-column solutions appear as pairs with
// one zero weight.
fn solve_lp(xi: Vec2, cols: &[Column]) -> Result<PhiCertificate> {
    if xi.norm() == 0.0 {
        return Ok(PhiCertificate { xi, value: 0.0, terms: vec![], feasibility_residual: 0.0, optimality_residual: 0.0 });
    }
    let scale = xi.norm();
    let mut best: Option<(f64, usize, usize, f64, f64)> = None;
    let mut ties: Vec<(usize, usize)> = Vec::new();
    for i in 0..cols.len() {
        for j in i + 1..cols.len() {
            let (a, b) = (cols[i].v, cols[j].v);
            let det = a.x * b.y - a.y * b.x;
            if det.abs() < 1e-12 * a.norm() * b.norm() {
                continue;
            }
            let li = (xi.x * b.y - xi.y * b.x) / det;
            let lj = (a.x * xi.y - a.y * xi.x) / det;
            if li < -LP_TOL * scale || lj < -LP_TOL * scale {
                continue;
            }
            let (li, lj) = (li.max(0.0), lj.max(0.0));
            let value = li * cols[i].cost + lj * cols[j].cost;
            match best {
                Some((bv, ..)) if value > bv + 1e-12 * bv.abs() => {}
                Some((bv, ..)) if value >= bv - 1e-12 * bv.abs() => ties.push((i, j)),
                _ => {
                    best = Some((value, i, j, li, lj));
                    ties.clear();
                    ties.push((i, j));
                }
            }
        }
    }
    let Some((value, i, j, li, lj)) = best else {
        return Err(Error::Infeasible(format!("no nonnegative combination of the table reaches ({}, {})", xi.x, xi.y)));
    };
    // dual certificate: among tied bases take the one with the smallest dual violation
    let mut optimality_residual = f64::INFINITY;
    for (p, q) in ties {
        let (a, b) = (cols[p].v, cols[q].v);
        let det = a.x * b.y - a.y * b.x;
        let y = Vec2::new((cols[p].cost * b.y - cols[q].cost * a.y) / det, (a.x * cols[q].cost - b.x * cols[p].cost) / det);
        let viol = cols.iter().map(|c| (y.dot(&c.v) - c.cost).max(0.0)).fold(0.0, f64::max);
        optimality_residual = optimality_residual.min(viol);
    }
    let mut terms = Vec::new();
    for (l, k) in [(li, i), (lj, j)] {
        if l > LP_TOL * scale {
            terms.push((l, cols[k].v));
        }
    }
    let recon = terms.iter().fold(Vec2::zeros(), |acc, (l, v)| acc + v * *l);
    Ok(PhiCertificate { xi, value, terms, feasibility_residual: (recon - xi).norm(), optimality_residual })
}

/// `φ(ξ)`: cheapest nonnegative combination of table vectors summing to ξ.
///
/// Columns are visited in the table's lexicographic order and only strictly
/// better bases replace the incumbent, so certificates are reproducible.
pub fn phi(xi: Vec2, t: &PsiTable) -> Result<PhiCertificate> {
    let cols: Vec<Column> = t.entries.iter().map(|e| Column { v: e.lattice.vector, cost: e.psi }).collect();
    solve_lp(xi, &cols)
}

pub const DEFAULT_Z_MAX: i64 = 3;

/// Outcome of the Burgers condition check.
#[derive(Debug, Clone, PartialEq)]
pub struct BurgersCheck {
    pub holds: bool,
    /// Integer coefficients on the sign representatives and the two sides
    /// `ψ(Σ z_i b_i)` and `Σ |z_i| ψ(b_i)` of the first violation.
    pub witness: Option<(Vec<i64>, f64, f64)>,
    pub representatives: Vec<Vec2>,
    pub z_max: i64,
}

/// One vector from each `{b, −b}` pair of the Burgers system, in input order.
pub fn sign_representatives(b: &BurgersSystem) -> Vec<Vec2> {
    let mut reps: Vec<Vec2> = Vec::new();
    for v in b.vectors() {
        if !reps.iter().any(|r| (r - v).norm() < 1e-12 || (r + v).norm() < 1e-12) {
            reps.push(*v);
        }
    }
    reps
}

/// Tests `ψ(Σ z_i b_i) ≥ Σ |z_i| ψ(b_i)` for all `|z_i| ≤ z_max`, where the
/// `b_i` are sign representatives of the Burgers vectors. This is the form
/// under which splitting into Burgers vectors with signed weights is optimal.
pub fn check_burgers_condition(t: &PsiTable, z_max: i64) -> BurgersCheck {
    let reps = sign_representatives(&t.burgers);
    let s = reps.len();
    let mut z = vec![-z_max; s];
    let tol = 1e-10;
    loop {
        let sum = reps.iter().zip(&z).fold(Vec2::zeros(), |acc, (b, zi)| acc + b * *zi as f64);
        let lhs = t.psi(&sum);
        let rhs: f64 = reps.iter().zip(&z).map(|(b, zi)| zi.unsigned_abs() as f64 * t.psi(b)).sum();
        if lhs < rhs - tol * rhs.max(1.0) {
            return BurgersCheck { holds: false, witness: Some((z, lhs, rhs)), representatives: reps, z_max };
        }
        let mut k = 0;
        while k < s && z[k] == z_max {
            z[k] = -z_max;
            k += 1;
        }
        if k == s {
            break;
        }
        z[k] += 1;
    }
    BurgersCheck { holds: true, witness: None, representatives: reps, z_max }
}

/// `min Σ |λ_i| ψ(b_i)` over signed decompositions on the Burgers vectors,
/// cross-checked against [`phi`].
pub fn phi_reduced(xi: Vec2, t: &PsiTable) -> Result<PhiCertificate> {
    let check = check_burgers_condition(t, DEFAULT_Z_MAX);
    if !check.holds {
        return Err(Error::Inconsistent(format!("Burgers condition fails at {:?}", check.witness)));
    }
    let cols: Vec<Column> = check
        .representatives
        .iter()
        .flat_map(|b| [*b, -b])
        .map(|v| Column { v, cost: t.psi(&v) })
        .collect();
    let reduced = solve_lp(xi, &cols)?;
    let full = phi(xi, t)?;
    if (reduced.value - full.value).abs() > 1e-9 * full.value.abs().max(1e-300) {
        return Err(Error::Inconsistent(format!(
            "reduced relaxation {} disagrees with full relaxation {} at ({}, {})",
            reduced.value, full.value, xi.x, xi.y
        )));
    }
    Ok(reduced)
}

/// `(θ, φ(cos θ, sin θ))` at `n` equally spaced angles.
pub fn phi_polar(t: &PsiTable, n: usize) -> Result<Vec<(f64, f64)>> {
    (0..n)
        .map(|m| {
            let th = 2.0 * PI * m as f64 / n as f64;
            phi(Vec2::new(th.cos(), th.sin()), t).map(|c| (th, c.value))
        })
        .collect()
}

/// Table vectors with `ψ(b) = φ(b)`: the lattice vectors that are not worth
/// splitting. Diagnostic only.
pub fn intrinsic_burgers_set(t: &PsiTable) -> Result<Vec<Vec2>> {
    let mut out = Vec::new();
    for e in &t.entries {
        let p = phi(e.lattice.vector, t)?.value;
        if e.psi <= p * (1.0 + 1e-10) {
            out.push(e.lattice.vector);
        }
    }
    Ok(out)
}
