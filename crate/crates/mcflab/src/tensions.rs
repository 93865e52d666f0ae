//! Surface tension matrices: admissibility, Euclidean embedding, and
//! force-balanced junction frames.

use crate::geom::{M2, V2};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensionError {
    #[error("malformed tension matrix: {0}")]
    Malformed(String),
    #[error("tension matrix not admissible: {0}")]
    NotAdmissible(Violation),
    #[error("embedding failed: Gram matrix is not positive definite")]
    Embedding,
    #[error("degenerate reference triangle for phases ({0}, {1}, {2})")]
    Degenerate(usize, usize, usize),
    #[error("phases must be pairwise distinct and < {0}")]
    BadTriple(usize),
}

/// A single failed admissibility condition. Indices are 0-based; `Display` prints them 1-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Asymmetric { i: usize, j: usize },
    NonzeroDiagonal { i: usize },
    NonPositive { i: usize, j: usize, value: f64 },
    Triangle { i: usize, j: usize, k: usize, equality: bool },
    QIndefinite { eigenvalue: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::Asymmetric { i, j } => write!(f, "asymmetric at ({}, {})", i + 1, j + 1),
            Violation::NonzeroDiagonal { i } => write!(f, "nonzero diagonal at {}", i + 1),
            Violation::NonPositive { i, j, value } => {
                write!(f, "positivity violated at ({}, {}): {}", i + 1, j + 1, value)
            }
            Violation::Triangle { i, j, k, equality } => write!(
                f,
                "triangle {} at ({},{},{})",
                if equality { "equality" } else { "inequality violated" },
                i + 1,
                j + 1,
                k + 1
            ),
            Violation::QIndefinite { eigenvalue } => {
                write!(f, "Q not positive definite (eigenvalue {eigenvalue:e})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub pass: bool,
    #[serde(serialize_with = "ser_violations")]
    pub violations: Vec<Violation>,
    pub q_eigenvalues: Vec<f64>,
}

fn ser_violations<S: serde::Serializer>(v: &[Violation], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|x| x.to_string()))
}

impl AdmissibilityReport {
    pub fn first(&self) -> Option<&Violation> {
        self.violations.first()
    }
}

/// Square matrix of pairwise surface tensions. Construction does not check
/// admissibility; use [`validate_admissible`] or [`SurfaceTensions::admissible`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SurfaceTensions {
    p: usize,
    s: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for SurfaceTensions {
    type Error = TensionError;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, TensionError> {
        SurfaceTensions::from_rows(&rows)
    }
}

impl From<SurfaceTensions> for Vec<Vec<f64>> {
    fn from(s: SurfaceTensions) -> Self {
        s.rows()
    }
}

impl SurfaceTensions {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TensionError> {
        let p = rows.len();
        if p < 2 {
            return Err(TensionError::Malformed(format!("need at least 2 phases, got {p}")));
        }
        let mut s = Vec::with_capacity(p * p);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(TensionError::Malformed(format!("row {} has length {}, expected {p}", i + 1, r.len())));
            }
            for (j, &v) in r.iter().enumerate() {
                if !v.is_finite() {
                    return Err(TensionError::Malformed(format!("non-finite entry at ({}, {})", i + 1, j + 1)));
                }
            }
            s.extend_from_slice(r);
        }
        Ok(SurfaceTensions { p, s })
    }

    pub fn equal(p: usize) -> Self {
        let mut s = vec![1.0; p * p];
        for i in 0..p {
            s[i * p + i] = 0.0;
        }
        SurfaceTensions { p, s }
    }

    /// Parses and validates in one go.
    pub fn admissible(rows: &[Vec<f64>]) -> Result<Self, TensionError> {
        let s = Self::from_rows(rows)?;
        let rep = validate_admissible(&s);
        match rep.violations.into_iter().next() {
            Some(v) => Err(TensionError::NotAdmissible(v)),
            None => Ok(s),
        }
    }

    pub fn phases(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.s[i * self.p + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.s.chunks(self.p).map(|c| c.to_vec()).collect()
    }

    pub fn min_offdiag(&self) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..self.p {
            for j in 0..self.p {
                if i != j {
                    m = m.min(self.get(i, j));
                }
            }
        }
        m
    }

    /// `Q[i][j] = σ_{P,i}² + σ_{P,j}² − σ_{i,j}²` for `i, j < P−1`.
    pub fn q_matrix(&self) -> DMatrix<f64> {
        let n = self.p - 1;
        let last = n;
        DMatrix::from_fn(n, n, |i, j| {
            self.get(last, i).powi(2) + self.get(last, j).powi(2) - self.get(i, j).powi(2)
        })
    }

    /// Same matrix with phases relabelled: entry `(i, j)` becomes `(perm[i], perm[j])`.
    pub fn permuted(&self, perm: &[usize]) -> SurfaceTensions {
        let p = self.p;
        let mut s = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..p {
                s[i * p + j] = self.get(perm[i], perm[j]);
            }
        }
        SurfaceTensions { p, s }
    }
}

pub fn validate_admissible(sigma: &SurfaceTensions) -> AdmissibilityReport {
    let p = sigma.p;
    let mut v = Vec::new();
    let scale = sigma.s.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    for i in 0..p {
        if sigma.get(i, i) != 0.0 {
            v.push(Violation::NonzeroDiagonal { i });
        }
        for j in (i + 1)..p {
            if (sigma.get(i, j) - sigma.get(j, i)).abs() > 1e-14 * scale {
                v.push(Violation::Asymmetric { i, j });
            }
        }
    }
    for i in 0..p {
        for j in (i + 1)..p {
            if sigma.get(i, j) <= 0.0 {
                v.push(Violation::NonPositive { i, j, value: sigma.get(i, j) });
            }
        }
    }
    for i in 0..p {
        for j in 0..p {
            for k in 0..p {
                if i == j || j == k || i == k || i > j {
                    continue;
                }
                let lhs = sigma.get(i, j);
                let rhs = sigma.get(i, k) + sigma.get(k, j);
                if lhs >= rhs {
                    let equality = (lhs - rhs).abs() <= 1e-14 * scale;
                    v.push(Violation::Triangle { i, j, k, equality });
                }
            }
        }
    }
    let q = sigma.q_matrix();
    let eig = SymmetricEigen::new(q.clone()).eigenvalues;
    let mut evs: Vec<f64> = eig.iter().copied().collect();
    evs.sort_by(|a, b| a.total_cmp(b));
    let qnorm = q.norm();
    if let Some(&lo) = evs.first() {
        if lo <= 1e-12 * qnorm {
            v.push(Violation::QIndefinite { eigenvalue: lo });
        }
    }
    AdmissibilityReport { pass: v.is_empty(), violations: v, q_eigenvalues: evs }
}

/// Points `q_1..q_P` in `R^{P−1}` whose pairwise distances are the tensions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Embedding {
    pub points: Vec<Vec<f64>>,
}

impl Embedding {
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.points[i].iter().zip(&self.points[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("phase");
        let d = self.points.first().map_or(0, |p| p.len());
        for c in 0..d {
            out.push_str(&format!(",q{c}"));
        }
        out.push('\n');
        for (i, p) in self.points.iter().enumerate() {
            out.push_str(&(i + 1).to_string());
            for x in p {
                out.push_str(&format!(",{x:e}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn embed_l2(sigma: &SurfaceTensions) -> Result<Embedding, TensionError> {
    let n = sigma.p - 1;
    let g = sigma.q_matrix() * 0.5;
    let chol = g.cholesky().ok_or(TensionError::Embedding)?;
    let l = chol.l();
    let mut points: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|c| l[(i, c)]).collect()).collect();
    points.push(vec![0.0; n]);
    Ok(Embedding { points })
}

/// Affine coefficients of the orthogonal projection of `q_i` onto the plane
/// through `q_l, q_m, q_n`, in that order.
pub fn project_absent(emb: &Embedding, present: [usize; 3], i: usize) -> Result<[f64; 3], TensionError> {
    let [l, m, n] = present;
    if let Some(pos) = present.iter().position(|&a| a == i) {
        let mut c = [0.0; 3];
        c[pos] = 1.0;
        return Ok(c);
    }
    let sub = |a: usize, b: usize| -> Vec<f64> {
        emb.points[a].iter().zip(&emb.points[b]).map(|(x, y)| x - y).collect()
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let e1 = sub(m, l);
    let e2 = sub(n, l);
    let r = sub(i, l);
    let (a11, a12, a22) = (dot(&e1, &e1), dot(&e1, &e2), dot(&e2, &e2));
    let det = a11 * a22 - a12 * a12;
    if det <= 1e-14 * a11 * a22 {
        return Err(TensionError::Degenerate(l, m, n));
    }
    let (b1, b2) = (dot(&e1, &r), dot(&e2, &r));
    let a = (a22 * b1 - a12 * b2) / det;
    let b = (a11 * b2 - a12 * b1) / det;
    Ok([1.0 - a - b, a, b])
}

/// Evaluates an affine combination of embedding points.
pub fn combine(emb: &Embedding, idx: [usize; 3], c: [f64; 3]) -> Vec<f64> {
    let d = emb.points[0].len();
    (0..d).map(|k| (0..3).map(|q| c[q] * emb.points[idx[q]][k]).sum()).collect()
}

/// Force-balanced frame at a triple junction. Slot `q` holds phase `phases[q]`;
/// phases are in counter-clockwise order and the interface between slots `q`
/// and `q+1` leaves the junction along `tangents[q]`, which has `phases[q]`
/// on its right.
#[derive(Debug, Clone, PartialEq)]
pub struct JunctionFrame {
    pub phases: [usize; 3],
    /// `σ` of interface `q`, i.e. between slots `q` and `q+1`.
    pub sigma: [f64; 3],
    /// Polar angle of `tangents[q]`.
    pub angles: [f64; 3],
    pub tangents: [V2; 3],
    /// `normals[q] = J tangents[q]`, pointing from `phases[q]` into `phases[q+1]`.
    pub normals: [V2; 3],
    /// Opening angle of the sector occupied by `phases[q]`.
    pub sectors: [f64; 3],
}

/// Opening angle of phase `i` at a junction with `j`, `k`.
pub fn sector_angle(sigma: &SurfaceTensions, i: usize, j: usize, k: usize) -> f64 {
    let (sij, sjk, ski) = (sigma.get(i, j), sigma.get(j, k), sigma.get(k, i));
    let c = (sjk * sjk - sij * sij - ski * ski) / (2.0 * sij * ski);
    c.clamp(-1.0, 1.0).acos()
}

/// Frame for phases `(i, j, k)` in counter-clockwise order with the `(i, j)`
/// interface leaving along `reference`.
pub fn junction_frame(
    sigma: &SurfaceTensions,
    triple: [usize; 3],
    reference: V2,
) -> Result<JunctionFrame, TensionError> {
    let p = sigma.phases();
    let [i, j, k] = triple;
    if i == j || j == k || i == k || i >= p || j >= p || k >= p {
        return Err(TensionError::BadTriple(p));
    }
    let ph = triple;
    let sig = [sigma.get(ph[0], ph[1]), sigma.get(ph[1], ph[2]), sigma.get(ph[2], ph[0])];
    let sectors = [
        sector_angle(sigma, ph[0], ph[1], ph[2]),
        sector_angle(sigma, ph[1], ph[2], ph[0]),
        sector_angle(sigma, ph[2], ph[0], ph[1]),
    ];
    let a0 = reference.angle();
    let angles = [a0, a0 + sectors[1], a0 + sectors[1] + sectors[2]];
    let tangents = angles.map(|a| V2::polar(1.0, a));
    let normals = tangents.map(|t| t.perp());
    Ok(JunctionFrame { phases: ph, sigma: sig, angles, tangents, normals, sectors })
}

impl JunctionFrame {
    /// Rotation carrying interface slot `from` onto slot `to`.
    pub fn rotation(&self, from: usize, to: usize) -> M2 {
        M2::rotation(self.angles[to] - self.angles[from])
    }

    pub fn herring_residual(&self) -> f64 {
        let mut s = V2::ZERO;
        for q in 0..3 {
            s += self.sigma[q] * self.normals[q];
        }
        s.norm()
    }

    pub fn slot_of(&self, phase: usize) -> Option<usize> {
        self.phases.iter().position(|&a| a == phase)
    }

    /// Interface slot for the ordered pair `(a, b)` and the sign relating
    /// `n_{a,b}` to `normals[slot]`.
    pub fn pair_slot(&self, a: usize, b: usize) -> Option<(usize, f64)> {
        let qa = self.slot_of(a)?;
        let qb = self.slot_of(b)?;
        if (qa + 1) % 3 == qb {
            Some((qa, 1.0))
        } else if (qb + 1) % 3 == qa {
            Some((qb, -1.0))
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_three_phase_q() {
        let s = SurfaceTensions::equal(3);
        let r = validate_admissible(&s);
        assert!(r.pass);
        assert!((r.q_eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!((r.q_eigenvalues[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn triangle_equality_reported() {
        let s = SurfaceTensions::from_rows(&[vec![0.0, 2.0, 1.0], vec![2.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]]).unwrap();
        let r = validate_admissible(&s);
        assert!(!r.pass);
        assert_eq!(r.first().unwrap().to_string(), "triangle equality at (1,2,3)");
    }

    #[test]
    fn zero_tension_fails_positivity() {
        let s = SurfaceTensions::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let r = validate_admissible(&s);
        assert!(matches!(r.first(), Some(Violation::NonPositive { .. })));
    }

    #[test]
    fn malformed_rejected() {
        assert!(SurfaceTensions::from_rows(&[vec![0.0, 1.0], vec![1.0]]).is_err());
        assert!(SurfaceTensions::from_rows(&[vec![0.0, f64::NAN], vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn frame_rotations_compose() {
        let s = SurfaceTensions::equal(3);
        let f = junction_frame(&s, [0, 1, 2], V2::new(1.0, 0.0)).unwrap();
        let id = M2::identity();
        assert!(f.rotation(0, 1).mul(&f.rotation(1, 0)).max_abs_diff(&id) < 1e-14);
        let cyc = f.rotation(2, 0).mul(&f.rotation(1, 2)).mul(&f.rotation(0, 1));
        assert!(cyc.max_abs_diff(&id) < 1e-14);
    }
}
