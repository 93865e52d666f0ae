//! Calibration fields near a triple junction: wedge decomposition, tangential
//! coefficient profiles along the arms, half-space ansatz fields, and their
//! rotation-based gluing.

use crate::curve::CurveGeom;
use crate::geom::{wrap_angle, M2, V2};
use crate::network::{Arm, CurveEnd, Network};
use crate::smooth::plateau_step;
use crate::tensions::{junction_frame, JunctionFrame, SurfaceTensions, TensionError};
use std::f64::consts::{FRAC_PI_2, TAU};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wedge {
    /// Wedge containing interface slot `q`.
    Pair(usize),
    /// Interpolation wedge inside the sector of phase slot `q`.
    Interp(usize),
}

/// Six-wedge decomposition at a junction. Counter-clockwise the rays are
/// `τ_{q-1}, w_q, v_q, τ_q`; `Interp(q)` spans `w_q..v_q` and `Pair(q)`
/// spans `v_q..w_{q+1}`.
#[derive(Clone, Debug)]
pub struct Wedges {
    pub w: [V2; 3],
    pub v: [V2; 3],
    /// Opening angle of `Interp(q)`.
    pub omega: [f64; 3],
    /// Polar angles of `w_0, v_0, w_1, v_1, w_2, v_2` relative to `w_0`.
    rel: [f64; 6],
    base: f64,
}

pub fn build_wedges(frame: &JunctionFrame) -> Wedges {
    let mut aw = [0.0; 3];
    let mut av = [0.0; 3];
    for q in 0..3 {
        let prev = frame.angles[(q + 2) % 3];
        let theta = frame.sectors[q];
        if theta > FRAC_PI_2 {
            aw[q] = prev + theta - FRAC_PI_2;
            av[q] = prev + FRAC_PI_2;
        } else {
            aw[q] = prev + theta / 3.0;
            av[q] = prev + 2.0 * theta / 3.0;
        }
    }
    let base = aw[0];
    let mut rel = [0.0; 6];
    for q in 0..3 {
        rel[2 * q] = wrap_angle(aw[q] - base);
        rel[2 * q + 1] = wrap_angle(av[q] - base);
    }
    rel[0] = 0.0;
    Wedges {
        w: aw.map(|a| V2::polar(1.0, a)),
        v: av.map(|a| V2::polar(1.0, a)),
        omega: [0, 1, 2].map(|q| wrap_angle(av[q] - aw[q])),
        rel,
        base,
    }
}

impl Wedges {
    /// Wedge containing direction `d`; boundary rays belong to the wedge that starts there.
    pub fn classify(&self, d: V2) -> Wedge {
        let a = wrap_angle(d.angle() - self.base);
        let mut k = 5;
        for (i, &r) in self.rel.iter().enumerate() {
            if a >= r {
                k = i;
            }
        }
        if k % 2 == 0 {
            Wedge::Interp(k / 2)
        } else {
            Wedge::Pair(k / 2)
        }
    }

    /// Interpolation parameter on `Interp(q)`: 0 on `v_q`, 1 on `w_q`.
    pub fn lambda(&self, q: usize, d: V2) -> f64 {
        let u = d.unit();
        let arg = (1.0 - self.v[q].dot(u)) / (1.0 - self.omega[q].cos());
        plateau_step(arg)
    }

    /// Signed distances (negative inside) of `d` to the two half-planes whose
    /// intersection is the cone `Interp(q) ∪ Pair(q) ∪ Interp(q+1)`.
    pub fn cone_distances(&self, q: usize, d: V2) -> (f64, f64) {
        (-self.w[q].cross(d), self.v[(q + 1) % 3].cross(d))
    }

    pub fn is_in_cone(&self, q: usize, d: V2) -> bool {
        let (a, b) = self.cone_distances(q, d);
        a <= 0.0 && b <= 0.0
    }
}

/// Trapezoidal integration of `α' = H²` from `alpha0` at `s[0]`.
pub fn solve_alpha(s: &[f64], h: &[f64], alpha0: f64) -> Vec<f64> {
    let mut a = vec![alpha0; s.len()];
    for k in 1..s.len() {
        a[k] = a[k - 1] + 0.5 * (s[k] - s[k - 1]) * (h[k - 1] * h[k - 1] + h[k] * h[k]);
    }
    a
}

/// Second-order first derivative on a nonuniform grid, one-sided at the ends.
pub fn derivative(s: &[f64], f: &[f64]) -> Vec<f64> {
    let n = s.len();
    let mut d = vec![0.0; n];
    if n < 3 {
        if n == 2 {
            let g = (f[1] - f[0]) / (s[1] - s[0]);
            d = vec![g, g];
        }
        return d;
    }
    for k in 0..n {
        let (i0, i1, i2) = if k == 0 {
            (0, 1, 2)
        } else if k == n - 1 {
            (n - 3, n - 2, n - 1)
        } else {
            (k - 1, k, k + 1)
        };
        // Derivative of the quadratic through three points, evaluated at s[k].
        let (x0, x1, x2) = (s[i0], s[i1], s[i2]);
        let x = s[k];
        let l0 = ((x - x1) + (x - x2)) / ((x0 - x1) * (x0 - x2));
        let l1 = ((x - x0) + (x - x2)) / ((x1 - x0) * (x1 - x2));
        let l2 = ((x - x0) + (x - x1)) / ((x2 - x0) * (x2 - x1));
        d[k] = l0 * f[i0] + l1 * f[i1] + l2 * f[i2];
    }
    d
}

/// `β = −αH − ∂H`.
pub fn beta(s: &[f64], h: &[f64], alpha: &[f64]) -> Vec<f64> {
    let dh = derivative(s, h);
    (0..s.len()).map(|k| -alpha[k] * h[k] - dh[k]).collect()
}

/// Coefficients along one arm in the outgoing parametrization: arclength from
/// the junction, curvature w.r.t. the outgoing left normal, α and β.
#[derive(Clone, Debug)]
pub struct ArmProfile {
    pub curve: usize,
    pub end: CurveEnd,
    pub s: Vec<f64>,
    pub h: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

fn lin(s: &[f64], f: &[f64], x: f64) -> f64 {
    let n = s.len();
    if x <= s[0] {
        let g = (f[1] - f[0]) / (s[1] - s[0]);
        return f[0] + g * (x - s[0]);
    }
    if x >= s[n - 1] {
        return f[n - 1];
    }
    let k = match s.binary_search_by(|v| v.total_cmp(&x)) {
        Ok(i) => i.min(n - 2),
        Err(i) => i - 1,
    };
    let w = (x - s[k]) / (s[k + 1] - s[k]);
    (1.0 - w) * f[k] + w * f[k + 1]
}

impl ArmProfile {
    /// Profile for `arm`, with the junction-node curvature replaced by `h0`
    /// and `α(0) = alpha0`.
    pub fn new(geom: &CurveGeom, arm: &Arm, h0: f64, alpha0: f64) -> ArmProfile {
        let n = geom.nodes.len();
        let (s, h): (Vec<f64>, Vec<f64>) = match arm.end {
            CurveEnd::Start => (geom.s[..n].to_vec(), geom.kappa.clone()),
            CurveEnd::End => (
                (0..n).rev().map(|k| geom.length - geom.s[k]).collect(),
                (0..n).rev().map(|k| -geom.kappa[k]).collect(),
            ),
        };
        let mut h = h;
        h[0] = h0;
        let alpha = solve_alpha(&s, &h, alpha0);
        let beta = beta(&s, &h, &alpha);
        ArmProfile { curve: arm.curve, end: arm.end, s, h, alpha, beta }
    }

    /// `(H, α, β)` at outgoing arclength `x`, extended linearly behind the junction.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        (lin(&self.s, &self.h, x), lin(&self.s, &self.alpha, x), lin(&self.s, &self.beta, x))
    }

    pub fn outgoing(&self, arclength: f64, length: f64) -> f64 {
        match self.end {
            CurveEnd::Start => arclength,
            CurveEnd::End => length - arclength,
        }
    }
}

/// `ξ̃ = n + αsτ − ½α²s²n + ½βs²τ` and `B̃ = Hn + ατ + βsτ` for unit normal `n`, `τ = J⁻¹n`.
pub fn ansatz(n: V2, s: f64, h: f64, alpha: f64, beta: f64) -> (V2, V2) {
    let tau = n.perp_cw();
    let xi = n * (1.0 - 0.5 * alpha * alpha * s * s) + tau * (alpha * s + 0.5 * beta * s * s);
    let b = n * h + tau * (alpha + beta * s);
    (xi, b)
}

/// Half-space field data for one arm at a point.
#[derive(Clone, Copy, Debug)]
pub struct ArmSample {
    pub xi: V2,
    pub b: V2,
    /// Signed distance, positive towards the counter-clockwise phase.
    pub s: f64,
    pub normal: V2,
    pub outgoing: f64,
}

#[derive(Clone, Debug)]
pub struct TriodSample {
    pub wedge: Wedge,
    pub lambda: f64,
    /// Unnormalized glued fields for interface slots 0..3.
    pub xibar: [V2; 3],
    pub norm: f64,
    pub xi: [V2; 3],
    pub b: V2,
}

#[derive(Clone, Debug)]
pub struct Triod {
    pub junction: usize,
    pub p: V2,
    pub frame: JunctionFrame,
    pub wedges: Wedges,
    pub arms: [Arm; 3],
    pub profiles: [ArmProfile; 3],
    pub velocity: V2,
    /// Extension length past the junction used for projections.
    pub reach: f64,
}

impl Triod {
    /// `velocity` is the junction velocity; the arm curvatures at the junction are
    /// replaced by its normal components so that all three `B̃` agree there.
    pub fn new(
        net: &Network,
        geoms: &[CurveGeom],
        sigma: &SurfaceTensions,
        j: usize,
        velocity: V2,
        reach: f64,
    ) -> Result<Triod, TensionError> {
        let arms = net.arms(geoms, j);
        let triple = [arms[0].cw_phase, arms[1].cw_phase, arms[2].cw_phase];
        let frame = junction_frame(sigma, triple, arms[0].out)?;
        let wedges = build_wedges(&frame);
        let profiles = [0, 1, 2].map(|q| {
            let a = &arms[q];
            let n = a.out.perp();
            ArmProfile::new(&geoms[a.curve], a, velocity.dot(n), velocity.dot(a.out))
        });
        Ok(Triod {
            junction: j,
            p: net.junctions[j].position,
            frame,
            wedges,
            arms: [arms[0], arms[1], arms[2]],
            profiles,
            velocity,
            reach,
        })
    }

    pub fn rotation(&self, from: usize, to: usize) -> M2 {
        self.frame.rotation(from, to)
    }

    pub fn arm_sample(&self, geoms: &[CurveGeom], q: usize, x: V2) -> ArmSample {
        let a = &self.arms[q];
        let g = &geoms[a.curve];
        let f = g.project_extended(x, self.reach);
        let (n, out) = match a.end {
            CurveEnd::Start => (f.normal, f.s),
            CurveEnd::End => (-f.normal, g.length - f.s),
        };
        let s = (x - f.point).dot(n);
        let (h, al, be) = self.profiles[q].eval(out);
        let (xi, b) = ansatz(n, s, h, al, be);
        ArmSample { xi, b, s, normal: n, outgoing: out }
    }

    pub fn glue(&self, geoms: &[CurveGeom], x: V2) -> TriodSample {
        let d = x - self.p;
        let wedge = self.wedges.classify(d);
        let (xibar, b, lambda) = match wedge {
            Wedge::Pair(q) => {
                let a = self.arm_sample(geoms, q, x);
                ([0, 1, 2].map(|m| self.rotation(q, m).apply(a.xi)), a.b, 0.0)
            }
            Wedge::Interp(q) => {
                let qm = (q + 2) % 3;
                let lam = self.wedges.lambda(q, d);
                let a = self.arm_sample(geoms, q, x);
                let c = self.arm_sample(geoms, qm, x);
                let u = a.xi * (1.0 - lam) + self.rotation(qm, q).apply(c.xi) * lam;
                ([0, 1, 2].map(|m| self.rotation(q, m).apply(u)), a.b * (1.0 - lam) + c.b * lam, lam)
            }
        };
        let norm = xibar[0].norm();
        let xi = xibar.map(|v| if norm > 0.0 { v / norm } else { v });
        TriodSample { wedge, lambda, xibar, norm, xi, b }
    }

    /// Largest radius `r ≤ r_max` from the sequence `r_max / 2^k` with
    /// `min |ξ̄| > threshold` on a polar probe grid of `B_r(p)`.
    pub fn estimate_radius(&self, geoms: &[CurveGeom], r_max: f64, threshold: f64) -> f64 {
        let mut r = r_max;
        for _ in 0..30 {
            let mut ok = true;
            'probe: for i in 1..=12 {
                let rho = r * i as f64 / 12.0;
                for k in 0..72 {
                    let x = self.p + V2::polar(rho, TAU * (k as f64 + 0.5) / 72.0);
                    if self.glue(geoms, x).norm <= threshold {
                        ok = false;
                        break 'probe;
                    }
                }
            }
            if ok {
                return r;
            }
            r *= 0.5;
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensions::SurfaceTensions;

    #[test]
    fn equal_tension_wedges_are_sixty_degrees() {
        let s = SurfaceTensions::equal(3);
        let f = junction_frame(&s, [0, 1, 2], V2::new(1.0, 0.0)).unwrap();
        let w = build_wedges(&f);
        for q in 0..3 {
            assert!((w.omega[q] - TAU / 6.0).abs() < 1e-12);
        }
        for k in 1..6 {
            assert!((w.rel[k] - w.rel[k - 1] - TAU / 6.0).abs() < 1e-12);
        }
        for q in 0..3 {
            assert_eq!(w.classify(f.tangents[q]), Wedge::Pair(q));
        }
    }

    #[test]
    fn alpha_on_constant_curvature() {
        let s: Vec<f64> = (0..11).map(|k| 0.1 * k as f64).collect();
        let h = vec![0.7; 11];
        let a = solve_alpha(&s, &h, 0.2);
        let b = beta(&s, &h, &a);
        for k in 0..11 {
            assert!((a[k] - (0.2 + 0.49 * s[k])).abs() < 1e-14);
            assert!((b[k] + a[k] * 0.7).abs() < 1e-13);
        }
    }

    #[test]
    fn ansatz_length_identity() {
        let (a, b, s) = (0.5, 0.2, 0.1);
        let (xi, _) = ansatz(V2::new(0.0, 1.0), s, 0.0, a, b);
        let expect = 1.0 + a * b * s.powi(3) + 0.25 * (a.powi(4) + b * b) * s.powi(4);
        assert!((xi.norm2() - expect).abs() < 1e-14);
    }
}
