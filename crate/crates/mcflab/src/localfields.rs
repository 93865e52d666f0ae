//! Two-phase calibration fields around a single curve, the local frame fields
//! of the phases, and finite-difference residuals of the calibration identities.

use crate::curve::{CurveGeom, Foot};
use crate::geom::V2;
use crate::tensions::SurfaceTensions;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("point ({0}, {1}) lies outside the tubular neighborhood")]
    OutsideTube(f64, f64),
    #[error("finite-difference steps must be positive")]
    BadStep,
}

/// Unit normal extension `ξ = n̄(Px)` and velocity `B = H n̄ + α τ̄` of one
/// curve, with `n̄` pointing from the left phase into the right phase.
#[derive(Clone, Debug)]
pub struct TwoPhaseField {
    pub geom: CurveGeom,
    pub left: usize,
    pub right: usize,
    /// Tangential coefficient w.r.t. `τ̄ = J⁻¹ n̄`, one value per node.
    pub alpha: Vec<f64>,
    pub tube: f64,
    /// How far the curve is continued past its start and end.
    pub extend: [f64; 2],
}

#[derive(Clone, Copy, Debug)]
pub struct TwoPhaseSample {
    pub foot: Foot,
    pub xi: V2,
    pub b: V2,
    /// Signed distance, positive in the right phase.
    pub s: f64,
    pub curvature: f64,
    pub alpha: f64,
}

impl TwoPhaseField {
    pub fn new(geom: CurveGeom, left: usize, right: usize, tube: f64) -> TwoPhaseField {
        let n = geom.nodes.len();
        TwoPhaseField { geom, left, right, alpha: vec![0.0; n], tube, extend: [0.0; 2] }
    }

    pub fn with_alpha(mut self, alpha: Vec<f64>) -> TwoPhaseField {
        assert_eq!(alpha.len(), self.geom.nodes.len());
        self.alpha = alpha;
        self
    }

    pub fn with_extension(mut self, extend: [f64; 2]) -> TwoPhaseField {
        self.extend = extend;
        self
    }

    pub fn foot(&self, x: V2) -> Foot {
        self.geom.project_extended_at(x, self.extend)
    }

    /// Field data at `x` without the tube check.
    pub fn sample_unchecked(&self, x: V2) -> TwoPhaseSample {
        self.sample_at_foot(self.foot(x))
    }

    pub fn sample_at_foot(&self, f: Foot) -> TwoPhaseSample {
        let n = -f.normal;
        let tau = n.perp_cw();
        let s = f.s.clamp(0.0, self.geom.length);
        let h = -self.geom.interp_nodal(&self.geom.kappa, s);
        let alpha = self.geom.interp_nodal(&self.alpha, s);
        TwoPhaseSample { foot: f, xi: n, b: n * h + tau * alpha, s: -f.offset, curvature: h, alpha }
    }

    pub fn sample(&self, x: V2) -> Result<TwoPhaseSample, FieldError> {
        let f = self.foot(x);
        if f.dist >= self.tube {
            return Err(FieldError::OutsideTube(x.x, x.y));
        }
        Ok(self.sample_at_foot(f))
    }
}

pub fn xi_twophase(field: &TwoPhaseField, x: V2) -> Result<V2, FieldError> {
    field.sample(x).map(|s| s.xi)
}

pub fn b_twophase(field: &TwoPhaseField, x: V2) -> Result<V2, FieldError> {
    field.sample(x).map(|s| s.b)
}

/// Phase fields at a two-phase feature with normal `n = n̄_{left,right}`:
/// `ξ_left − ξ_right = σ n` and absent phases sit on the segment's axis.
pub fn twophase_phase_fields(sigma: &SurfaceTensions, left: usize, right: usize, n: V2) -> Vec<V2> {
    (0..sigma.phases())
        .map(|i| {
            if i == left {
                n * (0.5 * sigma.get(left, right))
            } else if i == right {
                n * (-0.5 * sigma.get(left, right))
            } else {
                n * (0.5 * (sigma.get(right, i) - sigma.get(left, i)))
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Residuals {
    /// `|∂_t ξ + (B·∇)ξ + (∇B)ᵀξ|`
    pub transport: f64,
    /// `|∂_t |ξ|² + (B·∇)|ξ|²|`
    pub length: f64,
    /// `|B·ξ + ∇·ξ|`
    pub dissipation: f64,
}

/// Residuals at `x` by central differences. `xi(k, y)` is the field at time
/// offset `k ∈ {-1, 0, 1}` (in units of `dt`) and `b(y)` the velocity at offset 0.
pub fn fd_residuals<F, G>(xi: F, b: G, x: V2, dt: f64, h: f64) -> Result<Residuals, FieldError>
where
    F: Fn(i32, V2) -> Result<V2, FieldError>,
    G: Fn(V2) -> Result<V2, FieldError>,
{
    if !(dt > 0.0 && h > 0.0) {
        return Err(FieldError::BadStep);
    }
    let ex = V2::new(h, 0.0);
    let ey = V2::new(0.0, h);
    let x0 = xi(0, x)?;
    let dtx = (xi(1, x)? - xi(-1, x)?) / (2.0 * dt);
    let dxx = (xi(0, x + ex)? - xi(0, x - ex)?) / (2.0 * h);
    let dyx = (xi(0, x + ey)? - xi(0, x - ey)?) / (2.0 * h);
    let bx = b(x)?;
    let dxb = (b(x + ex)? - b(x - ex)?) / (2.0 * h);
    let dyb = (b(x + ey)? - b(x - ey)?) / (2.0 * h);
    let adv = dxx * bx.x + dyx * bx.y;
    let grad_bt = V2::new(x0.dot(dxb), x0.dot(dyb));
    let transport = (dtx + adv + grad_bt).norm();
    let length = (2.0 * x0.dot(dtx) + 2.0 * x0.dot(adv)).abs();
    let dissipation = (bx.dot(x0) + dxx.x + dyx.y).abs();
    Ok(Residuals { transport, length, dissipation })
}

/// Residuals of one curve's field using neighbouring snapshots `prev`, `next`
/// a time `dt` away.
pub fn field_residuals(
    prev: &TwoPhaseField,
    cur: &TwoPhaseField,
    next: &TwoPhaseField,
    samples: &[V2],
    dt: f64,
    h_fd: f64,
) -> Result<Vec<Residuals>, FieldError> {
    let fields = [prev, cur, next];
    samples
        .iter()
        .map(|&x| fd_residuals(|k, y| xi_twophase(fields[(k + 1) as usize], y), |y| b_twophase(cur, y), x, dt, h_fd))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(tube: f64) -> TwoPhaseField {
        let nodes: Vec<V2> = (0..21).map(|k| V2::new(-1.0 + 0.1 * k as f64, 0.0)).collect();
        TwoPhaseField::new(CurveGeom::new(&nodes, false), 1, 0, tube)
    }

    #[test]
    fn line_field_points_up() {
        let f = line(0.5);
        let s = f.sample(V2::new(0.3, 0.2)).unwrap();
        assert!((s.xi - V2::new(0.0, -1.0)).norm() < 1e-14);
        assert!((s.s + 0.2).abs() < 1e-14);
        assert!(f.sample(V2::new(0.0, 0.6)).is_err());
    }

    #[test]
    fn constant_alpha_is_pure_tangential_velocity() {
        let f = line(0.5).with_alpha(vec![0.3; 21]);
        let b = b_twophase(&f, V2::new(0.1, -0.2)).unwrap();
        assert!((b - V2::new(0.3, 0.0) * -1.0).norm() < 1e-14);
    }

    #[test]
    fn phase_fields_satisfy_frame_identity() {
        let s = SurfaceTensions::from_rows(&[
            vec![0.0, 1.0, 1.2, 0.9],
            vec![1.0, 0.0, 0.8, 1.1],
            vec![1.2, 0.8, 0.0, 1.0],
            vec![0.9, 1.1, 1.0, 0.0],
        ])
        .unwrap();
        let n = V2::new(0.6, 0.8);
        let xi = twophase_phase_fields(&s, 2, 0, n);
        assert!(((xi[2] - xi[0]) - n * 1.2).norm() < 1e-15);
        for i in [1, 3] {
            for j in 0..4 {
                if i != j {
                    assert!((xi[i] - xi[j]).norm() / s.get(i, j) < 1.0);
                }
            }
        }
    }
}
