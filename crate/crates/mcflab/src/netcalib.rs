//! Global calibration of a network: partition of unity over curves and
//! junctions, local fields including absent phases, glued `ξ_{i,j}`, `ξ_i`, `B`,
//! blended tangential velocities and the volume weights `ϑ_i`.

use crate::curve::CurveGeom;
use crate::geom::{Aabb, V2};
use crate::localfields::{twophase_phase_fields, TwoPhaseField};
use crate::network::{min_separation, phase_at, CurveEnd, EndSpec, Network, PhaseAt};
use crate::smooth::{cutoff, truncated_identity, zeta_2ph, zeta_3j};
use crate::strongflow::junction_ls_velocity;
use crate::tensions::{embed_l2, project_absent, TensionError};
use crate::triodfields::{Triod, Wedge};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CalibError {
    #[error(transparent)]
    Tension(#[from] TensionError),
    #[error("localization radius infeasible: {0}")]
    Radius(String),
}

/// Localization radius and cutoff shape parameters, kept fixed along a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibParams {
    pub r_loc: f64,
    pub c1: f64,
    pub c2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Feature {
    Curve(usize),
    Junction(usize),
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub phases: usize,
    pub eta: Vec<(Feature, f64)>,
    pub xi_phase: Vec<V2>,
    /// `ξ_{i,j}` at index `i * phases + j`.
    pub xi_pair: Vec<V2>,
    pub b: V2,
}

impl Sample {
    pub fn pair(&self, i: usize, j: usize) -> V2 {
        self.xi_pair[i * self.phases + j]
    }

    pub fn eta_sum(&self) -> f64 {
        self.eta.iter().map(|e| e.1).sum()
    }

    pub fn eta_of(&self, f: Feature) -> f64 {
        self.eta.iter().filter(|e| e.0 == f).map(|e| e.1).sum()
    }
}

#[derive(Clone, Debug)]
pub struct Calibration {
    pub net: Network,
    pub geoms: Vec<CurveGeom>,
    pub params: CalibParams,
    pub triods: Vec<Triod>,
    pub fields: Vec<TwoPhaseField>,
    /// For each curve end: `(junction, slot)` if it ends at a junction.
    ends: Vec<[Option<(usize, usize)>; 2]>,
    /// Affine coefficients of each phase absent at a junction.
    absent: Vec<Vec<Option<[f64; 3]>>>,
    boxes: Vec<Aabb>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionCheck {
    pub max_junction_eta_on_boundary: f64,
    pub max_jump: f64,
    pub max_sum: f64,
    pub pass: bool,
}

struct CurveHit {
    curve: usize,
    s: f64,
    sample: crate::localfields::TwoPhaseSample,
}

impl Calibration {
    /// Builds the calibration of a snapshot. Junction velocities default to the
    /// stored ones, then to a least-squares fit from the arm curvatures; `params`
    /// is estimated when not supplied.
    pub fn build(net: &Network, params: Option<CalibParams>, velocities: Option<&[V2]>) -> Result<Calibration, CalibError> {
        let geoms = net.geometry();
        let vel: Vec<V2> = (0..net.junctions.len())
            .map(|j| {
                velocities
                    .map(|v| v[j])
                    .or(net.junctions[j].velocity)
                    .unwrap_or_else(|| junction_ls_velocity(net, &geoms, j).0)
            })
            .collect();
        let r0 = match params {
            Some(p) => p.r_loc,
            None => {
                let sep = min_separation(net, &geoms);
                (0.5 * net.r_c).min(sep / 3.0)
            }
        };
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(CalibError::Radius(format!("radius {r0}")));
        }
        let reach = 2.0 * r0;
        let triods = (0..net.junctions.len())
            .map(|j| Triod::new(net, &geoms, &net.sigma, j, vel[j], reach))
            .collect::<Result<Vec<_>, _>>()?;
        let r_loc = match params {
            Some(p) => p.r_loc,
            None => triods.iter().map(|t| t.estimate_radius(&geoms, r0, 0.6)).fold(r0, f64::min),
        };
        let mut ends = vec![[None, None]; net.curves.len()];
        for (k, t) in triods.iter().enumerate() {
            for (q, a) in t.arms.iter().enumerate() {
                ends[a.curve][a.end.index()] = Some((k, q));
            }
        }
        let emb = embed_l2(&net.sigma)?;
        let absent = triods
            .iter()
            .map(|t| {
                (0..net.phases)
                    .map(|i| {
                        if t.frame.slot_of(i).is_some() {
                            Ok(None)
                        } else {
                            project_absent(&emb, t.frame.phases, i).map(Some)
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut cal = Calibration {
            net: net.clone(),
            geoms: geoms.clone(),
            params: params.unwrap_or(CalibParams { r_loc, c1: 0.5, c2: 0.5 }),
            triods,
            fields: Vec::new(),
            ends,
            absent,
            boxes: geoms.iter().map(|g| g.bbox()).collect(),
        };
        cal.fields = cal.make_fields();
        if params.is_none() {
            for _ in 0..8 {
                if cal.check_partition().pass {
                    break;
                }
                cal.params.c1 *= 0.5;
                cal.params.c2 *= 0.5;
                cal.fields = cal.make_fields();
            }
            if !cal.check_partition().pass {
                return Err(CalibError::Radius("cutoff parameters could not be made consistent".into()));
            }
        }
        Ok(cal)
    }

    fn make_fields(&self) -> Vec<TwoPhaseField> {
        let tube = self.params.c1 * self.params.r_loc;
        (0..self.net.curves.len())
            .map(|m| {
                let c = &self.net.curves[m];
                let ext = c.ends.map(|e| if e == EndSpec::Free { f64::INFINITY } else { 0.0 });
                TwoPhaseField::new(self.geoms[m].clone(), c.left, c.right, tube)
                    .with_alpha(self.blended_alpha(m))
                    .with_extension(ext)
            })
            .collect()
    }

    /// Nodal tangential coefficient of curve `m` (w.r.t. `τ̄ = J⁻¹ n̄_{left,right}`),
    /// following the junction profiles near junction ends and vanishing in the bulk.
    pub fn blended_alpha(&self, m: usize) -> Vec<f64> {
        let g = &self.geoms[m];
        let r = self.params.r_loc;
        let mut a = vec![0.0; g.nodes.len()];
        for e in 0..2 {
            let Some((k, q)) = self.ends[m][e] else { continue };
            let prof = &self.triods[k].profiles[q];
            let sign = if e == 0 { -1.0 } else { 1.0 };
            for (i, v) in a.iter_mut().enumerate() {
                let out = prof.outgoing(g.s[i], g.length);
                let w = cutoff(out / (2.0 * r));
                if w > 0.0 {
                    *v += sign * w * prof.eval(out).1;
                }
            }
        }
        a
    }

    fn junction_near(&self, x: V2, radius: f64) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (k, t) in self.triods.iter().enumerate() {
            let d = (x - t.p).norm();
            if d < radius && best.is_none_or(|b| d < b.1) {
                best = Some((k, d));
            }
        }
        best.map(|b| b.0)
    }

    fn curve_hits(&self, x: V2, tube: f64) -> Vec<CurveHit> {
        let mut hits = Vec::new();
        for (m, f) in self.fields.iter().enumerate() {
            if self.boxes[m].dist(x) >= tube && self.net.curves[m].ends.iter().all(|e| *e != EndSpec::Free) {
                continue;
            }
            let sample = f.sample_unchecked(x);
            if sample.foot.dist < tube {
                hits.push(CurveHit { curve: m, s: sample.s, sample });
            }
        }
        hits
    }

    fn cone_cutoff(&self, k: usize, q: usize, d: V2) -> f64 {
        let c2r = self.params.c2 * self.params.r_loc;
        let (a, b) = self.triods[k].wedges.cone_distances(q, d);
        zeta_3j(a / c2r) * zeta_3j(b / c2r)
    }

    /// Partition weights at `x` together with the curve samples they used.
    fn partition(&self, x: V2) -> (Vec<(Feature, f64)>, Vec<CurveHit>, Option<usize>) {
        let r = self.params.r_loc;
        let c1r = self.params.c1 * r;
        let hits = self.curve_hits(x, c1r);
        let jk = self.junction_near(x, r);
        let z2 = |m: usize| hits.iter().find(|h| h.curve == m).map_or(0.0, |h| zeta_2ph(h.s / c1r));
        let mut eta = Vec::new();
        let ctx = jk.map(|k| {
            let t = &self.triods[k];
            let d = x - t.p;
            (k, d, t.wedges.classify(d))
        });
        if let Some((k, d, wedge)) = ctx {
            let t = &self.triods[k];
            let term = |q: usize| self.cone_cutoff(k, q, d) * z2(t.arms[q].curve);
            let e = match wedge {
                Wedge::Pair(q) => term(q),
                Wedge::Interp(q) => {
                    let lam = t.wedges.lambda(q, d);
                    (1.0 - lam) * term(q) + lam * term((q + 2) % 3)
                }
            };
            if e > 0.0 {
                eta.push((Feature::Junction(k), e));
            }
        }
        for h in &hits {
            let base = zeta_2ph(h.s / c1r);
            let slot = ctx.and_then(|(k, d, w)| {
                self.ends[h.curve].iter().flatten().find(|(kk, _)| *kk == k).map(|&(_, q)| (k, d, w, q))
            });
            let e = match slot {
                None => base,
                Some((k, d, w, q)) => {
                    let t = &self.triods[k];
                    let z3 = self.cone_cutoff(k, q, d);
                    match w {
                        Wedge::Pair(p) if p == q => (1.0 - z3) * base,
                        Wedge::Interp(p) if p == q => (1.0 - t.wedges.lambda(p, d)) * (1.0 - z3) * base,
                        Wedge::Interp(p) if p == (q + 1) % 3 => t.wedges.lambda(p, d) * (1.0 - z3) * base,
                        _ => 0.0,
                    }
                }
            };
            if e > 0.0 {
                eta.push((Feature::Curve(h.curve), e));
            }
        }
        (eta, hits, jk)
    }

    pub fn eta(&self, x: V2) -> Vec<(Feature, f64)> {
        self.partition(x).0
    }

    /// Local phase fields, present-pair fields and velocity of junction `k` at `x`.
    pub fn junction_local(&self, k: usize, x: V2) -> (Vec<V2>, [V2; 3], V2) {
        let t = &self.triods[k];
        let ts = t.glue(&self.geoms, x);
        let p = self.net.phases;
        let mut xi = vec![V2::ZERO; p];
        for q in 0..3 {
            let qm = (q + 2) % 3;
            xi[t.frame.phases[q]] = (ts.xi[q] * t.frame.sigma[q] - ts.xi[qm] * t.frame.sigma[qm]) / 3.0;
        }
        for i in 0..p {
            if let Some(c) = self.absent[k][i] {
                xi[i] = (0..3).fold(V2::ZERO, |acc, q| acc + xi[t.frame.phases[q]] * c[q]);
            }
        }
        (xi, ts.xi, ts.b)
    }

    pub fn eval(&self, x: V2) -> Sample {
        let p = self.net.phases;
        let (eta, hits, _) = self.partition(x);
        let mut xi_phase = vec![V2::ZERO; p];
        let mut xi_pair = vec![V2::ZERO; p * p];
        let mut b = V2::ZERO;
        for &(f, e) in &eta {
            let (loc, present): (Vec<V2>, Vec<(usize, usize, V2)>) = match f {
                Feature::Curve(m) => {
                    let h = hits.iter().find(|h| h.curve == m).unwrap();
                    let c = &self.net.curves[m];
                    b += h.sample.b * e;
                    (twophase_phase_fields(&self.net.sigma, c.left, c.right, h.sample.xi), vec![(c.left, c.right, h.sample.xi)])
                }
                Feature::Junction(k) => {
                    let (loc, pairs, bk) = self.junction_local(k, x);
                    b += bk * e;
                    let ph = self.triods[k].frame.phases;
                    (loc, (0..3).map(|q| (ph[q], ph[(q + 1) % 3], pairs[q])).collect())
                }
            };
            for i in 0..p {
                xi_phase[i] += loc[i] * e;
                for j in 0..p {
                    if i == j {
                        continue;
                    }
                    let v = match present.iter().find(|&&(a, c, _)| (a, c) == (i, j) || (a, c) == (j, i)) {
                        Some(&(a, _, v)) => {
                            if a == i {
                                v
                            } else {
                                -v
                            }
                        }
                        None => (loc[i] - loc[j]) / self.net.sigma.get(i, j),
                    };
                    xi_pair[i * p + j] += v * e;
                }
            }
        }
        Sample { phases: p, eta, xi_phase, xi_pair, b }
    }

    pub fn xi(&self, x: V2, i: usize, j: usize) -> V2 {
        self.eval(x).pair(i, j)
    }

    pub fn velocity(&self, x: V2) -> V2 {
        self.eval(x).b
    }

    /// Distance from `x` to the interface between phases `i` and `j`; infinite if there is none.
    pub fn pair_distance(&self, x: V2, i: usize, j: usize) -> f64 {
        let mut d = f64::INFINITY;
        for (m, c) in self.net.curves.iter().enumerate() {
            if (c.left, c.right) == (i, j) || (c.left, c.right) == (j, i) {
                if self.boxes[m].dist(x) < d {
                    d = d.min(self.geoms[m].project(x).dist);
                }
            }
        }
        d
    }

    /// Signed distance to the boundary of phase `i` (negative inside), or
    /// `None` when it exceeds `limit`.
    fn phase_boundary_distance(&self, x: V2, i: usize, limit: f64) -> Option<f64> {
        let mut best: Option<(f64, f64)> = None;
        for (m, c) in self.net.curves.iter().enumerate() {
            if c.left != i && c.right != i {
                continue;
            }
            let free = c.ends.contains(&EndSpec::Free);
            if !free && self.boxes[m].dist(x) >= limit {
                continue;
            }
            let f = self.fields[m].foot(x);
            if f.dist < limit && best.is_none_or(|b| f.dist < b.0) {
                let inside = if c.left == i { f.offset > 0.0 } else { f.offset < 0.0 };
                best = Some((f.dist, if inside { -f.dist } else { f.dist }));
            }
        }
        best.map(|b| b.1)
    }

    fn arm_signed(&self, k: usize, q: usize, x: V2) -> f64 {
        self.fields[self.triods[k].arms[q].curve].sample_unchecked(x).s * self.arm_sign(k, q)
    }

    /// Converts a curve's signed distance (positive on its right) to one positive
    /// towards `phases[q+1]` of the junction frame.
    fn arm_sign(&self, k: usize, q: usize) -> f64 {
        match self.triods[k].arms[q].end {
            CurveEnd::Start => -1.0,
            CurveEnd::End => 1.0,
        }
    }

    /// Volume weights `ϑ_i(x)` for every phase.
    pub fn weights(&self, x: V2) -> Vec<f64> {
        let r = self.params.r_loc;
        let th = |v: f64| truncated_identity(v / r);
        let jk = self.junction_near(x, 2.0 * r);
        let mut out = vec![0.0; self.net.phases];
        let mut member: Option<Option<usize>> = None;
        for (i, w) in out.iter_mut().enumerate() {
            if let Some(k) = jk {
                let t = &self.triods[k];
                if let Some(qi) = t.frame.slot_of(i) {
                    let d = x - t.p;
                    let qn = (qi + 1) % 3;
                    let qp = (qi + 2) % 3;
                    let sd_next = || th(self.arm_signed(k, qi, x));
                    let sd_prev = || th(-self.arm_signed(k, qp, x));
                    let far = th(d.norm());
                    *w = match t.wedges.classify(d) {
                        Wedge::Pair(q) if q == qi => sd_next(),
                        Wedge::Pair(q) if q == qp => sd_prev(),
                        Wedge::Pair(_) => far,
                        Wedge::Interp(q) if q == qi => {
                            let l = t.wedges.lambda(q, d);
                            (1.0 - l) * sd_next() + l * sd_prev()
                        }
                        Wedge::Interp(q) if q == qn => {
                            let l = t.wedges.lambda(q, d);
                            (1.0 - l) * far + l * sd_next()
                        }
                        Wedge::Interp(q) => {
                            let l = t.wedges.lambda(q, d);
                            (1.0 - l) * sd_prev() + l * far
                        }
                    };
                    continue;
                }
            }
            *w = match self.phase_boundary_distance(x, i, r) {
                Some(s) => th(s),
                None => {
                    let m = *member.get_or_insert_with(|| match phase_at(&self.net, &self.geoms, x) {
                        Ok(PhaseAt::Phase(p)) => Some(p),
                        _ => None,
                    });
                    if m == Some(i) {
                        -1.0
                    } else {
                        1.0
                    }
                }
            };
        }
        out
    }

    /// Probe checks on junction rings: junction weights vanish at the
    /// localization radius, curve weights are continuous across it, and the
    /// weights never sum above one.
    pub fn check_partition(&self) -> PartitionCheck {
        let r = self.params.r_loc;
        let mut eta_b: f64 = 0.0;
        let mut jump: f64 = 0.0;
        let mut sum: f64 = 0.0;
        for t in &self.triods {
            for a in 0..360 {
                let u = V2::polar(1.0, TAU * (a as f64 + 0.25) / 360.0);
                let inner = self.eta(t.p + u * (r * (1.0 - 1e-9)));
                let outer = self.eta(t.p + u * (r * (1.0 + 1e-9)));
                let ej: f64 = inner.iter().filter(|e| matches!(e.0, Feature::Junction(_))).map(|e| e.1).sum();
                eta_b = eta_b.max(ej);
                for m in 0..self.net.curves.len() {
                    let f = Feature::Curve(m);
                    let g = |v: &[(Feature, f64)]| v.iter().filter(|e| e.0 == f).map(|e| e.1).sum::<f64>();
                    jump = jump.max((g(&inner) - g(&outer)).abs());
                }
                for k in 1..=20 {
                    let e = self.eta(t.p + u * (2.0 * r * k as f64 / 20.0));
                    sum = sum.max(e.iter().map(|e| e.1).sum());
                }
            }
        }
        PartitionCheck {
            max_junction_eta_on_boundary: eta_b,
            max_jump: jump,
            max_sum: sum,
            pass: eta_b < 1e-6 && jump < 1e-6 && sum <= 1.0 + 1e-12,
        }
    }

    /// Smallest `(1 − |ξ_{i,j}|) / min(dist², 1)` over probes with positive distance.
    pub fn coercivity(&self, probes: &[V2]) -> f64 {
        let p = self.net.phases;
        let mut c = f64::INFINITY;
        for &x in probes {
            let s = self.eval(x);
            for i in 0..p {
                for j in 0..p {
                    if i == j {
                        continue;
                    }
                    let d = self.pair_distance(x, i, j);
                    if d > 0.0 {
                        c = c.min((1.0 - s.pair(i, j).norm()) / (d * d).min(1.0));
                    }
                }
            }
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenes;

    #[test]
    fn circle_partition_is_one_on_curve() {
        let net = scenes::circle(1.0, 128, V2::ZERO);
        let cal = Calibration::build(&net, None, None).unwrap();
        for k in 0..50 {
            let x = V2::polar(1.0, 0.1 * k as f64);
            let f = cal.geoms[0].project(x);
            let s = cal.eval(f.point);
            assert!((s.eta_sum() - 1.0).abs() < 1e-12);
            assert!((s.pair(0, 1) - f.normal * -1.0).norm() < 1e-10 || (s.pair(1, 0) - f.normal * -1.0).norm() < 1e-10);
        }
    }
}
