//! Built-in initial configurations.

use crate::geom::{Aabb, V2};
use crate::network::{Curve, CurveEnd, EndSpec, Junction, Network};
use crate::tensions::SurfaceTensions;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{PI, TAU};

/// Circle of radius `r` with `n` nodes; phase 0 inside, phase 1 outside.
pub fn circle(r: f64, n: usize, center: V2) -> Network {
    let nodes = (0..n).map(|i| center + V2::polar(r, TAU * i as f64 / n as f64)).collect();
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

fn ray_to_box(d: V2, half: f64) -> f64 {
    let tx = if d.x.abs() > 1e-15 { half / d.x.abs() } else { f64::INFINITY };
    let ty = if d.y.abs() > 1e-15 { half / d.y.abs() } else { f64::INFINITY };
    tx.min(ty)
}

fn segment_nodes(a: V2, b: V2, h: f64) -> Vec<V2> {
    let n = ((b - a).norm() / h).round().max(2.0) as usize;
    (0..=n).map(|k| a + (b - a) * (k as f64 / n as f64)).collect()
}

/// Junction at the origin with three straight rays to the box `[-half, half]²`.
/// Phase `q` occupies the sector between arms `q` and `q+1`.
pub fn triod(h: f64, half: f64, sigma: Option<SurfaceTensions>) -> Network {
    let sigma = sigma.unwrap_or_else(|| SurfaceTensions::equal(3));
    let fr = crate::tensions::junction_frame(&sigma, [2, 0, 1], V2::new(0.0, 1.0)).expect("3-phase tensions");
    let mut curves = Vec::new();
    for q in 0..3 {
        // Arm q separates phase (q+2)%3 (clockwise side) from phase q.
        let d = fr.tangents[q];
        let len = ray_to_box(d, half);
        curves.push(Curve {
            nodes: segment_nodes(V2::ZERO, d * len, h),
            left: q,
            right: (q + 2) % 3,
            ends: [EndSpec::Junction(0), EndSpec::Free],
        });
    }
    Network {
        phases: 3,
        sigma,
        curves,
        junctions: vec![Junction {
            position: V2::ZERO,
            incident: (0..3).map(|q| (q, CurveEnd::Start)).collect(),
            velocity: None,
        }],
        r_c: 0.25 * half,
        domain: Some(Aabb { min: V2::new(-half, -half), max: V2::new(half, half) }),
        t: 0.0,
    }
}

fn arc_nodes(p0: V2, t0: V2, kappa: f64, len: f64, h: f64) -> Vec<V2> {
    let n = (len / h).round().max(2.0) as usize;
    (0..=n)
        .map(|k| {
            let s = len * k as f64 / n as f64;
            let phi = kappa * s;
            let (a, b) = if kappa.abs() < 1e-12 { (s, 0.0) } else { (phi.sin() / kappa, (1.0 - phi.cos()) / kappa) };
            p0 + a * t0 + b * t0.perp()
        })
        .collect()
}

/// Triod whose arms are circular arcs of the given curvatures (w.r.t. the
/// left normal of the outgoing direction) and length, ends pinned.
pub fn curved_triod(h: f64, arm_length: f64, curvatures: [f64; 3]) -> Network {
    let mut net = triod(h, 1.0, None);
    let fr = crate::tensions::junction_frame(&net.sigma, [2, 0, 1], V2::new(0.0, 1.0)).unwrap();
    for q in 0..3 {
        net.curves[q].nodes = arc_nodes(V2::ZERO, fr.tangents[q], curvatures[q], arm_length, h);
    }
    net.domain = None;
    net.r_c = 0.25 * arm_length;
    net
}

/// Symmetric lens of phase 2 on the straight interface between phase 0
/// (above) and phase 1 (below); junctions at `(±a, 0)`, straight arms out to `±half`.
pub fn lens(a: f64, half: f64, h: f64) -> Network {
    let r = a / (PI / 3.0).sin();
    let kappa = 1.0 / r;
    let sweep = 2.0 * PI / 3.0;
    let len = r * sweep;
    // Upper arc from the right junction to the left junction, turning left.
    let upper = arc_nodes(V2::new(a, 0.0), V2::polar(1.0, 2.0 * PI / 3.0), kappa, len, h);
    let lower = arc_nodes(V2::new(-a, 0.0), V2::polar(1.0, -PI / 3.0), kappa, len, h);
    let left_line = segment_nodes(V2::new(-half, 0.0), V2::new(-a, 0.0), h);
    let right_line = segment_nodes(V2::new(a, 0.0), V2::new(half, 0.0), h);
    let mut upper = upper;
    let mut lower = lower;
    *upper.last_mut().unwrap() = V2::new(-a, 0.0);
    *lower.last_mut().unwrap() = V2::new(a, 0.0);
    Network {
        phases: 3,
        sigma: SurfaceTensions::equal(3),
        curves: vec![
            Curve { nodes: upper, left: 2, right: 0, ends: [EndSpec::Junction(1), EndSpec::Junction(0)] },
            Curve { nodes: lower, left: 2, right: 1, ends: [EndSpec::Junction(0), EndSpec::Junction(1)] },
            Curve { nodes: left_line, left: 0, right: 1, ends: [EndSpec::Free, EndSpec::Junction(0)] },
            Curve { nodes: right_line, left: 0, right: 1, ends: [EndSpec::Junction(1), EndSpec::Free] },
        ],
        junctions: vec![
            Junction {
                position: V2::new(-a, 0.0),
                incident: vec![(0, CurveEnd::End), (1, CurveEnd::Start), (2, CurveEnd::End)],
                velocity: None,
            },
            Junction {
                position: V2::new(a, 0.0),
                incident: vec![(0, CurveEnd::Start), (1, CurveEnd::End), (3, CurveEnd::Start)],
                velocity: None,
            },
        ],
        r_c: 0.25 * a,
        domain: Some(Aabb { min: V2::new(-half, -half), max: V2::new(half, half) }),
        t: 0.0,
    }
}

/// Area enclosed by a closed polygon (positive for counter-clockwise order).
pub fn polygon_area(pts: &[V2]) -> f64 {
    let n = pts.len();
    0.5 * (0..n).map(|k| pts[k].cross(pts[(k + 1) % n])).sum::<f64>()
}

/// Area of the lens region of [`lens`], from the polygon of its two arcs.
pub fn lens_area(net: &Network) -> f64 {
    let mut pts: Vec<V2> = net.curves[1].nodes.clone();
    pts.pop();
    pts.extend(net.curves[0].nodes.iter().take(net.curves[0].nodes.len() - 1));
    polygon_area(&pts)
}

/// Voronoi tessellation of `n` random seeds in a box.
#[derive(Clone, Debug)]
pub struct Voronoi {
    pub seeds: Vec<V2>,
    pub domain: Aabb,
    pub cells: Vec<Vec<V2>>,
}

fn clip(poly: &[V2], n: V2, c: f64) -> Vec<V2> {
    // Keep {x : x·n ≤ c}.
    let mut out = Vec::new();
    let m = poly.len();
    for k in 0..m {
        let p = poly[k];
        let q = poly[(k + 1) % m];
        let fp = p.dot(n) - c;
        let fq = q.dot(n) - c;
        if fp <= 0.0 {
            out.push(p);
        }
        if (fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0) {
            out.push(p + (q - p) * (fp / (fp - fq)));
        }
    }
    out
}

impl Voronoi {
    pub fn random(n: usize, domain: Aabb, seed: u64) -> Voronoi {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seeds: Vec<V2> = (0..n)
            .map(|_| {
                V2::new(
                    rng.random_range(domain.min.x..domain.max.x),
                    rng.random_range(domain.min.y..domain.max.y),
                )
            })
            .collect();
        Self::from_seeds(seeds, domain)
    }

    pub fn from_seeds(seeds: Vec<V2>, domain: Aabb) -> Voronoi {
        let boxp = vec![domain.min, V2::new(domain.max.x, domain.min.y), domain.max, V2::new(domain.min.x, domain.max.y)];
        let cells = (0..seeds.len())
            .map(|i| {
                let mut poly = boxp.clone();
                for j in 0..seeds.len() {
                    if i == j {
                        continue;
                    }
                    let n = seeds[j] - seeds[i];
                    let mid = (seeds[i] + seeds[j]) * 0.5;
                    poly = clip(&poly, n, mid.dot(n));
                }
                poly
            })
            .collect();
        Voronoi { seeds, domain, cells }
    }

    pub fn nearest(&self, x: V2) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, s) in self.seeds.iter().enumerate() {
            let d = (*s - x).norm2();
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    /// The tessellation as a curve network with equal tensions; edges meeting
    /// the box boundary end freely.
    pub fn network(&self, h: f64) -> Network {
        let tol = 1e-9 * self.domain.diameter();
        let mut verts: Vec<V2> = Vec::new();
        let vid = |p: V2, verts: &mut Vec<V2>| -> usize {
            if let Some(i) = verts.iter().position(|v| (*v - p).norm() < tol) {
                i
            } else {
                verts.push(p);
                verts.len() - 1
            }
        };
        let mut edges: std::collections::BTreeMap<(usize, usize), (usize, usize)> = Default::default();
        for (i, cell) in self.cells.iter().enumerate() {
            let m = cell.len();
            for k in 0..m {
                let a = cell[k];
                let b = cell[(k + 1) % m];
                if (a - b).norm() < tol {
                    continue;
                }
                let mid = (a + b) * 0.5;
                // Shared edge: the neighbour is the other nearest seed at the midpoint.
                let di = (self.seeds[i] - mid).norm();
                let mut nb = None;
                for (j, s) in self.seeds.iter().enumerate() {
                    if j != i && ((*s - mid).norm() - di).abs() < 1e-7 * self.domain.diameter() {
                        nb = Some(j);
                    }
                }
                let Some(j) = nb else { continue };
                if i < j {
                    let va = vid(a, &mut verts);
                    let vb = vid(b, &mut verts);
                    edges.insert((i, j), (va, vb));
                }
            }
        }
        let on_box = |p: V2| {
            let d = self.domain;
            (p.x - d.min.x).abs() < tol || (p.x - d.max.x).abs() < tol || (p.y - d.min.y).abs() < tol || (p.y - d.max.y).abs() < tol
        };
        let mut jid: Vec<Option<usize>> = vec![None; verts.len()];
        let mut junctions: Vec<Junction> = Vec::new();
        for (v, p) in verts.iter().enumerate() {
            if !on_box(*p) {
                jid[v] = Some(junctions.len());
                junctions.push(Junction { position: *p, incident: vec![], velocity: None });
            }
        }
        let mut curves = Vec::new();
        for (&(i, j), &(va, vb)) in &edges {
            let (a, b) = (verts[va], verts[vb]);
            let nodes = segment_nodes(a, b, h);
            let t = b - a;
            let left = if t.cross(self.seeds[i] - a) > 0.0 { i } else { j };
            let right = if left == i { j } else { i };
            let ci = curves.len();
            let mut ends = [EndSpec::Free; 2];
            if let Some(k) = jid[va] {
                ends[0] = EndSpec::Junction(k);
                junctions[k].incident.push((ci, CurveEnd::Start));
            }
            if let Some(k) = jid[vb] {
                ends[1] = EndSpec::Junction(k);
                junctions[k].incident.push((ci, CurveEnd::End));
            }
            curves.push(Curve { nodes, left, right, ends });
        }
        Network {
            phases: self.seeds.len(),
            sigma: SurfaceTensions::equal(self.seeds.len()),
            curves,
            junctions,
            r_c: h,
            domain: Some(self.domain),
            t: 0.0,
        }
    }
}

/// Four square grains meeting at the origin (quadrant index).
pub fn fourgrains_phase(x: V2) -> usize {
    match (x.x >= 0.0, x.y >= 0.0) {
        (true, true) => 0,
        (false, true) => 1,
        (false, false) => 2,
        (true, false) => 3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_validate() {
        circle(1.0, 64, V2::ZERO).validate().unwrap();
        triod(0.05, 1.0, None).validate().unwrap();
        curved_triod(0.02, 0.8, [0.6, -0.4, 0.3]).validate().unwrap();
        let l = lens(0.5, 1.5, 0.02);
        l.validate().unwrap();
        let r = a_lens_r(0.5);
        let expect = r * r * (2.0 * PI / 3.0 - (2.0 * PI / 3.0).sin());
        assert!((lens_area(&l) - expect).abs() < 1e-3 * expect);
    }

    fn a_lens_r(a: f64) -> f64 {
        a / (PI / 3.0).sin()
    }

    #[test]
    fn voronoi_network_is_consistent() {
        let d = Aabb { min: V2::new(-1.0, -1.0), max: V2::new(1.0, 1.0) };
        let v = Voronoi::random(30, d, 7);
        let area: f64 = v.cells.iter().map(|c| polygon_area(c)).sum();
        assert!((area - 4.0).abs() < 1e-9);
        let n = v.network(0.01);
        n.validate().unwrap();
    }
}
