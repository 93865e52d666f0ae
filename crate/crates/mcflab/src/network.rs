//! Curve networks: data model, JSON form, geometric queries and regularity checks.

use crate::curve::{CurveGeom, Foot};
use crate::geom::{wrap_angle, Aabb, V2};
use crate::tensions::{junction_frame, SurfaceTensions};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid network: {0}")]
    Structure(String),
    #[error("inconsistent phase labels: {0}")]
    Topology(String),
    #[error("point at distance {dist} is outside the tube of radius {radius}")]
    OutsideTube { dist: f64, radius: f64 },
    #[error("nearest point is not unique (distance {0})")]
    Ambiguous(f64),
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndSpec {
    Free,
    Closed,
    Junction(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveEnd {
    Start,
    End,
}

impl CurveEnd {
    pub fn index(self) -> usize {
        match self {
            CurveEnd::Start => 0,
            CurveEnd::End => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub nodes: Vec<V2>,
    pub left: usize,
    pub right: usize,
    pub ends: [EndSpec; 2],
}

impl Curve {
    pub fn is_closed(&self) -> bool {
        self.ends[0] == EndSpec::Closed
    }

    pub fn end_node(&self, e: CurveEnd) -> V2 {
        match e {
            CurveEnd::Start => self.nodes[0],
            CurveEnd::End => *self.nodes.last().unwrap(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Junction {
    pub position: V2,
    pub incident: Vec<(usize, CurveEnd)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<V2>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub phases: usize,
    pub sigma: SurfaceTensions,
    pub curves: Vec<Curve>,
    #[serde(default)]
    pub junctions: Vec<Junction>,
    pub r_c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Aabb>,
    #[serde(default)]
    pub t: f64,
}

/// One arm of a junction seen from the junction.
#[derive(Clone, Copy, Debug)]
pub struct Arm {
    pub curve: usize,
    pub end: CurveEnd,
    /// Unit direction in which the arm leaves the junction.
    pub out: V2,
    /// Phase on the counter-clockwise side of `out`.
    pub ccw_phase: usize,
    /// Phase on the clockwise side of `out`.
    pub cw_phase: usize,
}

impl Network {
    pub fn from_json(text: &str) -> Result<Network, NetworkError> {
        let n: Network = serde_json::from_str(text)?;
        n.validate()?;
        Ok(n)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn geometry(&self) -> Vec<CurveGeom> {
        self.curves.iter().map(|c| CurveGeom::new(&c.nodes, c.is_closed())).collect()
    }

    /// Total interface energy counted over ordered phase pairs, so each interface contributes twice.
    pub fn energy(&self, geoms: &[CurveGeom]) -> f64 {
        self.curves.iter().zip(geoms).map(|(c, g)| 2.0 * self.sigma.get(c.left, c.right) * g.length).sum()
    }

    pub fn min_spacing(&self) -> f64 {
        let mut h = f64::INFINITY;
        for c in &self.curves {
            let n = c.nodes.len();
            let m = if c.is_closed() { n } else { n - 1 };
            for k in 0..m {
                h = h.min((c.nodes[(k + 1) % n] - c.nodes[k]).norm());
            }
        }
        h
    }

    pub fn max_spacing(&self) -> f64 {
        let mut h: f64 = 0.0;
        for c in &self.curves {
            let n = c.nodes.len();
            let m = if c.is_closed() { n } else { n - 1 };
            for k in 0..m {
                h = h.max((c.nodes[(k + 1) % n] - c.nodes[k]).norm());
            }
        }
        h
    }

    pub fn bbox(&self) -> Aabb {
        let mut b = Aabb::empty();
        for c in &self.curves {
            for &p in &c.nodes {
                b.grow(p);
            }
        }
        if let Some(d) = self.domain {
            b.grow(d.min);
            b.grow(d.max);
        }
        b
    }

    /// Arms of junction `k` sorted counter-clockwise by outgoing angle.
    pub fn arms(&self, geoms: &[CurveGeom], k: usize) -> Vec<Arm> {
        let mut arms: Vec<Arm> = self.junctions[k]
            .incident
            .iter()
            .map(|&(ci, e)| {
                let c = &self.curves[ci];
                match e {
                    CurveEnd::Start => Arm { curve: ci, end: e, out: geoms[ci].end_tangent(false), ccw_phase: c.left, cw_phase: c.right },
                    CurveEnd::End => Arm { curve: ci, end: e, out: -geoms[ci].end_tangent(true), ccw_phase: c.right, cw_phase: c.left },
                }
            })
            .collect();
        arms.sort_by(|a, b| wrap_angle(a.out.angle()).total_cmp(&wrap_angle(b.out.angle())));
        arms
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        let p = self.phases;
        let bad = |s: String| Err(NetworkError::Structure(s));
        if self.sigma.phases() != p {
            return bad(format!("sigma is {}x{} but phases = {p}", self.sigma.phases(), self.sigma.phases()));
        }
        if !(self.r_c > 0.0 && self.r_c.is_finite()) {
            return bad("r_c must be positive".into());
        }
        for (ci, c) in self.curves.iter().enumerate() {
            let closed = c.is_closed();
            if closed != (c.ends[1] == EndSpec::Closed) {
                return bad(format!("curve {ci}: closed on one end only"));
            }
            let need = if closed { 8 } else { 3 };
            if c.nodes.len() < need {
                return bad(format!("curve {ci}: {} nodes, need at least {need}", c.nodes.len()));
            }
            if c.left == c.right || c.left >= p || c.right >= p {
                return bad(format!("curve {ci}: bad phase labels ({}, {})", c.left, c.right));
            }
            if c.nodes.iter().any(|v| !v.is_finite()) {
                return bad(format!("curve {ci}: non-finite node"));
            }
            let n = c.nodes.len();
            let m = if closed { n } else { n - 1 };
            for k in 0..m {
                if c.nodes[k] == c.nodes[(k + 1) % n] {
                    return bad(format!("curve {ci}: repeated node {k}"));
                }
            }
            for (e, end) in c.ends.iter().enumerate() {
                if let EndSpec::Junction(j) = *end {
                    let ce = if e == 0 { CurveEnd::Start } else { CurveEnd::End };
                    let Some(jn) = self.junctions.get(j) else {
                        return bad(format!("curve {ci}: unknown junction {j}"));
                    };
                    if !jn.incident.contains(&(ci, ce)) {
                        return bad(format!("curve {ci}: junction {j} does not list it"));
                    }
                }
            }
            if let Some((a, b)) = self_intersection(&c.nodes, closed) {
                return bad(format!("curve {ci}: segments {a} and {b} intersect"));
            }
        }
        for (ji, j) in self.junctions.iter().enumerate() {
            if j.incident.len() != 3 {
                return bad(format!("junction {ji}: {} incident ends, need 3", j.incident.len()));
            }
            for &(ci, e) in &j.incident {
                let Some(c) = self.curves.get(ci) else {
                    return bad(format!("junction {ji}: unknown curve {ci}"));
                };
                if c.ends[e.index()] != EndSpec::Junction(ji) {
                    return bad(format!("junction {ji}: curve {ci} end does not point back"));
                }
                let d = (c.end_node(e) - j.position).norm();
                if d > 1e-9 * (1.0 + j.position.norm()) {
                    return bad(format!("junction {ji}: curve {ci} end is {d} away"));
                }
            }
        }
        let geoms = self.geometry();
        for ji in 0..self.junctions.len() {
            let arms = self.arms(&geoms, ji);
            for q in 0..3 {
                let a = arms[q];
                let b = arms[(q + 1) % 3];
                if a.ccw_phase != b.cw_phase {
                    return Err(NetworkError::Topology(format!(
                        "junction {ji}: sector between curves {} and {} has phases {} and {}",
                        a.curve, b.curve, a.ccw_phase, b.cw_phase
                    )));
                }
            }
            let ph: std::collections::BTreeSet<usize> = arms.iter().map(|a| a.ccw_phase).collect();
            if ph.len() != 3 {
                return Err(NetworkError::Topology(format!("junction {ji}: phases not distinct")));
            }
        }
        Ok(())
    }
}

fn seg_intersect(a0: V2, a1: V2, b0: V2, b1: V2) -> bool {
    let d1 = (a1 - a0).cross(b0 - a0);
    let d2 = (a1 - a0).cross(b1 - a0);
    let d3 = (b1 - b0).cross(a0 - b0);
    let d4 = (b1 - b0).cross(a1 - b0);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

fn self_intersection(nodes: &[V2], closed: bool) -> Option<(usize, usize)> {
    let n = nodes.len();
    let m = if closed { n } else { n - 1 };
    let bb: Vec<Aabb> = (0..m)
        .map(|k| {
            let mut b = Aabb::empty();
            b.grow(nodes[k]);
            b.grow(nodes[(k + 1) % n]);
            b
        })
        .collect();
    for a in 0..m {
        for b in (a + 2)..m {
            if closed && a == 0 && b == m - 1 {
                continue;
            }
            let (ba, bb_) = (bb[a], bb[b]);
            if ba.max.x < bb_.min.x || bb_.max.x < ba.min.x || ba.max.y < bb_.min.y || bb_.max.y < ba.min.y {
                continue;
            }
            if seg_intersect(nodes[a], nodes[(a + 1) % n], nodes[b], nodes[(b + 1) % n]) {
                return Some((a, b));
            }
        }
    }
    None
}

/// Projection result in the interface convention: `normal` points from the
/// left phase to the right phase, `signed_distance > 0` on the right side and
/// `curvature` is the mean curvature w.r.t. `normal`.
#[derive(Clone, Copy, Debug)]
pub struct NearestPoint {
    pub point: V2,
    pub arclength: f64,
    pub tangent: V2,
    pub normal: V2,
    pub curvature: f64,
    pub signed_distance: f64,
}

impl From<Foot> for NearestPoint {
    fn from(f: Foot) -> Self {
        NearestPoint {
            point: f.point,
            arclength: f.s,
            tangent: f.tangent,
            normal: -f.normal,
            curvature: -f.kappa,
            signed_distance: -f.offset,
        }
    }
}

fn check_unique(geom: &CurveGeom, x: V2, f: &Foot) -> Result<(), NetworkError> {
    if f.dist == 0.0 {
        return Ok(());
    }
    // A second nearest point must lie well away along the curve.
    let width = 2.0 * f.dist;
    let n = 64.max(geom.num_segments());
    for k in 0..n {
        let s = geom.length * (k as f64 + 0.5) / n as f64;
        let mut ds = (s - f.s).abs();
        if geom.closed {
            ds = ds.min(geom.length - ds);
        }
        if ds <= width {
            continue;
        }
        let q = geom.at(s);
        if ((q.point - x).norm() - f.dist).abs() <= 1e-12 * (1.0 + f.dist) {
            return Err(NetworkError::Ambiguous(f.dist));
        }
    }
    Ok(())
}

pub fn nearest_point(geom: &CurveGeom, x: V2, tube: f64) -> Result<NearestPoint, NetworkError> {
    let f = geom.project(x);
    if f.dist > tube {
        return Err(NetworkError::OutsideTube { dist: f.dist, radius: tube });
    }
    check_unique(geom, x, &f)?;
    Ok(f.into())
}

pub fn signed_distance(geom: &CurveGeom, x: V2, tube: f64) -> Result<f64, NetworkError> {
    nearest_point(geom, x, tube).map(|p| p.signed_distance)
}

/// Mean curvature per node w.r.t. the left-to-right normal.
pub fn curvature_profile(curve: &Curve) -> Result<Vec<f64>, NetworkError> {
    let n = curve.nodes.len();
    let m = if curve.is_closed() { n } else { n - 1 };
    for k in 0..m {
        if (curve.nodes[(k + 1) % n] - curve.nodes[k]).norm() == 0.0 {
            return Err(NetworkError::Degenerate(format!("coincident nodes {k} and {}", (k + 1) % n)));
        }
    }
    let g = CurveGeom::new(&curve.nodes, curve.is_closed());
    Ok(g.kappa.iter().map(|k| -k).collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularityReport {
    /// Largest `|g'|` of the local graph over any window of radius `2 r_c`.
    pub max_slope: f64,
    /// Largest `|g''|·r_c`.
    pub curvature_ratio: f64,
    /// Largest `|g'''|·r_c²`, from differences of nodal curvature.
    pub third_derivative_ratio: f64,
    pub herring_residual: f64,
    pub angle_residual: f64,
    pub min_separation: f64,
    pub graph_ok: bool,
    pub angles_ok: bool,
    pub separation_ok: bool,
    pub pass: bool,
}

pub fn regularity_check(net: &Network, angle_tol: f64) -> RegularityReport {
    let geoms = net.geometry();
    let rc = net.r_c;
    let (mut max_slope, mut kr, mut k3): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for g in &geoms {
        let nn = g.nodes.len();
        let tangents: Vec<V2> = (0..nn).map(|k| g.at(g.s[k]).tangent).collect();
        for k in 0..nn {
            let x0 = g.nodes[k];
            let t0 = tangents[k];
            let mut worst: f64 = 0.0;
            let mut walk = |j: usize| -> bool {
                if (g.nodes[j] - x0).norm() > 2.0 * rc {
                    return false;
                }
                let c = tangents[j].dot(t0);
                if c <= 0.0 {
                    worst = f64::INFINITY;
                    return false;
                }
                let sl = t0.cross(tangents[j]).abs() / c;
                worst = worst.max(sl);
                kr = kr.max(g.kappa[j].abs() * rc / c.powi(3));
                true
            };
            for step in 1..nn {
                let j = if g.closed { (k + step) % nn } else { k + step };
                if j >= nn || !walk(j) {
                    break;
                }
            }
            for step in 1..nn {
                if !g.closed && step > k {
                    break;
                }
                let j = (k + nn - step) % nn;
                if !walk(j) {
                    break;
                }
            }
            max_slope = max_slope.max(worst);
            kr = kr.max(g.kappa[k].abs() * rc);
        }
        let m = if g.closed { nn } else { nn - 1 };
        for k in 0..m {
            let ds = g.s[k + 1] - g.s[k];
            k3 = k3.max((g.kappa[(k + 1) % nn] - g.kappa[k]).abs() / ds * rc * rc);
        }
    }
    let (mut herring, mut ang): (f64, f64) = (0.0, 0.0);
    for ji in 0..net.junctions.len() {
        let arms = net.arms(&geoms, ji);
        let triple = [arms[0].cw_phase, arms[1].cw_phase, arms[2].cw_phase];
        let mut s = V2::ZERO;
        for a in &arms {
            s += net.sigma.get(a.cw_phase, a.ccw_phase) * a.out;
        }
        herring = herring.max(s.norm());
        if let Ok(fr) = junction_frame(&net.sigma, triple, arms[0].out) {
            for q in 0..3 {
                let d = (fr.tangents[q].cross(arms[q].out)).atan2(fr.tangents[q].dot(arms[q].out));
                ang = ang.max(d.abs());
            }
        }
    }
    let min_sep = min_separation(net, &geoms);
    let graph_ok = max_slope <= 1.0 && kr <= 1.0 && k3 <= 1.0;
    let angles_ok = ang <= angle_tol;
    let separation_ok = min_sep >= 2.0 * rc;
    RegularityReport {
        max_slope,
        curvature_ratio: kr,
        third_derivative_ratio: k3,
        herring_residual: herring,
        angle_residual: ang,
        min_separation: min_sep,
        graph_ok,
        angles_ok,
        separation_ok,
        pass: graph_ok && angles_ok && separation_ok,
    }
}

fn adjacent(net: &Network, a: usize, b: usize) -> bool {
    net.curves[a].ends.iter().any(|e| matches!(e, EndSpec::Junction(j) if net.curves[b].ends.contains(&EndSpec::Junction(*j))))
}

/// Smallest distance between non-adjacent curves and between distinct junctions.
pub fn min_separation(net: &Network, geoms: &[CurveGeom]) -> f64 {
    let mut d = f64::INFINITY;
    for a in 0..net.curves.len() {
        for b in (a + 1)..net.curves.len() {
            if adjacent(net, a, b) {
                continue;
            }
            for &x in &net.curves[a].nodes {
                if geoms[b].bbox().dist(x) < d {
                    d = d.min(geoms[b].project(x).dist);
                }
            }
        }
    }
    for (i, ja) in net.junctions.iter().enumerate() {
        for jb in &net.junctions[i + 1..] {
            d = d.min((ja.position - jb.position).norm());
        }
    }
    d
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhaseAt {
    Phase(usize),
    Boundary,
}

/// Nearest curve and foot over all curves.
pub fn nearest_curve(geoms: &[CurveGeom], x: V2) -> Option<(usize, Foot)> {
    let mut order: Vec<(f64, usize)> = geoms.iter().enumerate().map(|(i, g)| (g.bbox().dist(x), i)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best: Option<(usize, Foot)> = None;
    for (lb, ci) in order {
        if let Some((_, f)) = &best {
            if lb > f.dist {
                break;
            }
        }
        let f = geoms[ci].project(x);
        if best.as_ref().is_none_or(|(_, b)| f.dist < b.dist) {
            best = Some((ci, f));
        }
    }
    best
}

pub fn phase_at(net: &Network, geoms: &[CurveGeom], x: V2) -> Result<PhaseAt, NetworkError> {
    let Some((ci, f)) = nearest_curve(geoms, x) else {
        return if net.phases == 1 { Ok(PhaseAt::Phase(0)) } else { Err(NetworkError::Structure("no curves".into())) };
    };
    if f.dist < 1e-12 {
        return Ok(PhaseAt::Boundary);
    }
    let c = &net.curves[ci];
    let g = &geoms[ci];
    let tol = 1e-12 * (1.0 + g.length);
    let end = if !c.is_closed() && f.s <= tol {
        Some(0)
    } else if !c.is_closed() && f.s >= g.length - tol {
        Some(1)
    } else {
        None
    };
    if let Some(e) = end {
        if let EndSpec::Junction(j) = c.ends[e] {
            let arms = net.arms(geoms, j);
            let p = net.junctions[j].position;
            let phi = wrap_angle((x - p).angle());
            for q in 0..3 {
                let a0 = wrap_angle(arms[q].out.angle());
                let span = wrap_angle(arms[(q + 1) % 3].out.angle() - a0);
                if wrap_angle(phi - a0) < span {
                    return Ok(PhaseAt::Phase(arms[q].ccw_phase));
                }
            }
            return Ok(PhaseAt::Phase(arms[0].ccw_phase));
        }
    }
    Ok(PhaseAt::Phase(if f.offset > 0.0 { c.left } else { c.right }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn circle_net(r: f64, n: usize) -> Network {
        let nodes = (0..n).map(|i| V2::polar(r, TAU * i as f64 / n as f64)).collect();
        Network {
            phases: 2,
            sigma: SurfaceTensions::equal(2),
            curves: vec![Curve { nodes, left: 0, right: 1, ends: [EndSpec::Closed; 2] }],
            junctions: vec![],
            r_c: r / 4.0,
            domain: None,
            t: 0.0,
        }
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let mut n = circle_net(1.0, 16);
        n.curves[0].nodes[3].x = 0.1 + 0.2;
        let back = Network::from_json(&n.to_json()).unwrap();
        assert_eq!(n, back);
    }

    #[test]
    fn circle_queries() {
        let n = circle_net(1.0, 64);
        let g = n.geometry();
        let s = signed_distance(&g[0], V2::new(1.5, 0.0), 1.0).unwrap();
        assert!((s - 0.5).abs() < 1e-12);
        assert_eq!(phase_at(&n, &g, V2::ZERO).unwrap(), PhaseAt::Phase(0));
        assert_eq!(phase_at(&n, &g, V2::new(5.0, 3.0)).unwrap(), PhaseAt::Phase(1));
        assert!(matches!(signed_distance(&g[0], V2::new(0.0, 0.0), 2.0), Err(NetworkError::Ambiguous(_))));
        assert!(regularity_check(&n, 1e-6).pass);
    }
}
