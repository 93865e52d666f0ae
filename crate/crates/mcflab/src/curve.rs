//! Smooth geometry on top of a polyline: each segment is blended between the
//! circumcircles of its two end nodes, giving a C² curve that reproduces
//! circles exactly. Open curves may be continued past either end along the
//! end circle.

use crate::geom::{circumcurvature, Aabb, V2};

const GL_X: [f64; 5] = [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
const GL_W: [f64; 5] = [0.236_926_885_056_189, 0.478_628_670_499_366, 0.568_888_888_888_889, 0.478_628_670_499_366, 0.236_926_885_056_189];
const CHUNK: usize = 16;

#[derive(Clone, Debug)]
struct Seg {
    mid: V2,
    t: V2,
    m: V2,
    a: f64,
    ka: f64,
    kb: f64,
}

/// Circular arc profile over a chord of half-length `a` and its first two derivatives.
fn arc_profile(x: f64, a: f64, k: f64) -> (f64, f64, f64) {
    let sx = (1.0 - k * k * x * x).max(1e-300).sqrt();
    let sa = (1.0 - k * k * a * a).max(1e-300).sqrt();
    let f = -k * (a * a - x * x) / (sx + sa);
    (f, k * x / sx, k / (sx * sx * sx))
}

impl Seg {
    /// Offset `d(X)` along `m` and its derivatives.
    fn offset(&self, x: f64) -> (f64, f64, f64) {
        let a = self.a;
        let u = ((x + a) / (2.0 * a)).clamp(0.0, 1.0);
        let w = u * u * (3.0 - 2.0 * u);
        let dw = 6.0 * u * (1.0 - u) / (2.0 * a);
        let ddw = (6.0 - 12.0 * u) / (4.0 * a * a);
        let (fa, fa1, fa2) = arc_profile(x, a, self.ka);
        let (fb, fb1, fb2) = arc_profile(x, a, self.kb);
        let d = (1.0 - w) * fa + w * fb;
        let d1 = (1.0 - w) * fa1 + w * fb1 + dw * (fb - fa);
        let d2 = (1.0 - w) * fa2 + w * fb2 + 2.0 * dw * (fb1 - fa1) + ddw * (fb - fa);
        (d, d1, d2)
    }

    fn eval(&self, x: f64) -> (V2, V2, V2) {
        let (d, d1, d2) = self.offset(x);
        (self.mid + x * self.t + d * self.m, self.t + d1 * self.m, d2 * self.m)
    }

    fn speed(&self, x: f64) -> f64 {
        let (_, d1, _) = self.offset(x);
        (1.0 + d1 * d1).sqrt()
    }

    fn arclen(&self, x0: f64, x1: f64) -> f64 {
        let (c, r) = (0.5 * (x0 + x1), 0.5 * (x1 - x0));
        GL_X.iter().zip(GL_W.iter()).map(|(&g, &w)| w * self.speed(c + r * g)).sum::<f64>() * r
    }

    fn max_bulge(&self) -> f64 {
        let f = |k: f64| arc_profile(0.0, self.a, k).0.abs();
        f(self.ka).max(f(self.kb))
    }
}

/// Which part of the (possibly extended) curve a foot lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Before,
    On,
    After,
}

/// Nearest-point data. `offset = (x − point)·normal` where `normal` is the
/// left normal of the traversal direction.
#[derive(Clone, Copy, Debug)]
pub struct Foot {
    pub point: V2,
    pub s: f64,
    pub tangent: V2,
    pub normal: V2,
    pub kappa: f64,
    pub offset: f64,
    pub dist: f64,
    pub region: Region,
}

#[derive(Clone, Debug)]
pub struct CurveGeom {
    pub closed: bool,
    pub nodes: Vec<V2>,
    /// Curvature at nodes w.r.t. the left normal.
    pub kappa: Vec<f64>,
    /// Arclength at nodes; for closed curves one extra entry for the wrap.
    pub s: Vec<f64>,
    pub length: f64,
    segs: Vec<Seg>,
    chunks: Vec<(usize, usize, Aabb)>,
}

impl CurveGeom {
    pub fn new(nodes: &[V2], closed: bool) -> CurveGeom {
        let n = nodes.len();
        let nseg = if closed { n } else { n - 1 };
        let mut kappa = vec![0.0; n];
        for (k, kap) in kappa.iter_mut().enumerate() {
            let (a, b, c) = if closed {
                (nodes[(k + n - 1) % n], nodes[k], nodes[(k + 1) % n])
            } else if n < 3 {
                (nodes[0], nodes[0], nodes[n - 1])
            } else if k == 0 {
                (nodes[0], nodes[1], nodes[2])
            } else if k == n - 1 {
                (nodes[n - 3], nodes[n - 2], nodes[n - 1])
            } else {
                (nodes[k - 1], nodes[k], nodes[k + 1])
            };
            *kap = if n < 3 { 0.0 } else { circumcurvature(a, b, c) };
        }
        let mut segs = Vec::with_capacity(nseg);
        for k in 0..nseg {
            let p0 = nodes[k];
            let p1 = nodes[(k + 1) % n];
            let c = p1 - p0;
            let a = 0.5 * c.norm();
            let t = c.unit();
            let lim = 0.95 / a.max(1e-300);
            segs.push(Seg {
                mid: (p0 + p1) * 0.5,
                t,
                m: t.perp(),
                a,
                ka: kappa[k].clamp(-lim, lim),
                kb: kappa[(k + 1) % n].clamp(-lim, lim),
            });
        }
        let mut s = vec![0.0; nseg + 1];
        for k in 0..nseg {
            s[k + 1] = s[k] + segs[k].arclen(-segs[k].a, segs[k].a);
        }
        let length = s[nseg];
        let mut chunks = Vec::new();
        let mut k0 = 0;
        while k0 < nseg {
            let k1 = (k0 + CHUNK).min(nseg);
            let mut bb = Aabb::empty();
            let mut pad: f64 = 0.0;
            for seg in &segs[k0..k1] {
                bb.grow(seg.mid - seg.a * seg.t);
                bb.grow(seg.mid + seg.a * seg.t);
                pad = pad.max(seg.max_bulge());
            }
            chunks.push((k0, k1, bb.pad(pad * 1.01 + 1e-14)));
            k0 = k1;
        }
        CurveGeom { closed, nodes: nodes.to_vec(), kappa, s, length, segs, chunks }
    }

    pub fn num_segments(&self) -> usize {
        self.segs.len()
    }

    pub fn bbox(&self) -> Aabb {
        let mut b = Aabb::empty();
        for c in &self.chunks {
            b.grow(c.2.min);
            b.grow(c.2.max);
        }
        b
    }

    fn local(&self, seg: usize, x: f64) -> Foot {
        let sg = &self.segs[seg];
        let (p, d1, d2) = sg.eval(x);
        let sp = d1.norm();
        let tangent = d1 / sp;
        let kappa = d1.cross(d2) / (sp * sp * sp);
        Foot {
            point: p,
            s: self.s[seg] + sg.arclen(-sg.a, x),
            tangent,
            normal: tangent.perp(),
            kappa,
            offset: 0.0,
            dist: 0.0,
            region: Region::On,
        }
    }

    fn seg_project(&self, seg: usize, x: V2) -> (f64, f64) {
        let sg = &self.segs[seg];
        let mut xi = (x - sg.mid).dot(sg.t).clamp(-sg.a, sg.a);
        for _ in 0..20 {
            let (c, c1, c2) = sg.eval(xi);
            let r = c - x;
            let g = r.dot(c1);
            let gp = c1.norm2() + r.dot(c2);
            let step = if gp > 0.0 { g / gp } else { g / c1.norm2() };
            let nx = (xi - step).clamp(-sg.a, sg.a);
            let done = (nx - xi).abs() <= 1e-15 * sg.a.max(1e-300);
            xi = nx;
            if done {
                break;
            }
        }
        let d2 = (sg.eval(xi).0 - x).norm2();
        (xi, d2)
    }

    /// Nearest point on the curve itself.
    pub fn project(&self, x: V2) -> Foot {
        let mut order: Vec<(f64, usize)> = self.chunks.iter().enumerate().map(|(i, c)| (c.2.dist(x), i)).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut best = (f64::INFINITY, 0usize, 0.0f64);
        for (lb, ci) in order {
            if lb * lb > best.0 {
                break;
            }
            let (k0, k1, _) = self.chunks[ci];
            for k in k0..k1 {
                let (xi, d2) = self.seg_project(k, x);
                if d2 < best.0 {
                    best = (d2, k, xi);
                }
            }
        }
        let mut f = self.local(best.1, best.2);
        f.offset = (x - f.point).dot(f.normal);
        f.dist = best.0.sqrt();
        f
    }

    /// Position, unit tangent and curvature of the end circle continued a signed
    /// arclength `ds` beyond the start (`ds ≤ 0`) or the end (`ds ≥ 0`).
    fn extension(&self, at_end: bool, ds: f64) -> (V2, V2, f64) {
        let f = if at_end {
            self.local(self.segs.len() - 1, self.segs.last().unwrap().a)
        } else {
            self.local(0, -self.segs[0].a)
        };
        let k = f.kappa;
        let (t0, m0) = (f.tangent, f.normal);
        let phi = k * ds;
        let (sn, cs) = phi.sin_cos();
        let (a, b) = if k.abs() < 1e-12 {
            (ds, 0.5 * k * ds * ds)
        } else {
            (sn / k, (1.0 - cs) / k)
        };
        (f.point + a * t0 + b * m0, t0 * cs + m0 * sn, k)
    }

    /// Nearest point on the curve continued by up to `ext` past each open end.
    pub fn project_extended(&self, x: V2, ext: f64) -> Foot {
        self.project_extended_at(x, [ext, ext])
    }

    /// As [`CurveGeom::project_extended`] with separate lengths for the start and end.
    pub fn project_extended_at(&self, x: V2, ext_by_end: [f64; 2]) -> Foot {
        let mut best = self.project(x);
        if self.closed {
            return best;
        }
        for at_end in [false, true] {
            let ext = ext_by_end[at_end as usize];
            if ext <= 0.0 {
                continue;
            }
            let (p0, t0, _) = self.extension(at_end, 0.0);
            let sign = if at_end { 1.0 } else { -1.0 };
            let mut ds = ((x - p0).dot(t0)).clamp(-ext, ext);
            if ds * sign <= 0.0 {
                continue;
            }
            for _ in 0..30 {
                let (p, t, k) = self.extension(at_end, ds);
                let r = p - x;
                let g = r.dot(t);
                let gp = 1.0 + k * r.dot(t.perp());
                let step = if gp > 0.1 { g / gp } else { g };
                let nd = ds - step;
                let nd = if sign > 0.0 { nd.clamp(0.0, ext) } else { nd.clamp(-ext, 0.0) };
                let done = (nd - ds).abs() < 1e-15 * ext;
                ds = nd;
                if done {
                    break;
                }
            }
            let (p, t, k) = self.extension(at_end, ds);
            let d = (x - p).norm();
            if d < best.dist - 1e-15 && ds.abs() > 0.0 {
                let n = t.perp();
                best = Foot {
                    point: p,
                    s: if at_end { self.length + ds } else { ds },
                    tangent: t,
                    normal: n,
                    kappa: k,
                    offset: (x - p).dot(n),
                    dist: d,
                    region: if at_end { Region::After } else { Region::Before },
                };
            }
        }
        best
    }

    /// Locate arclength `s` (clamped to the curve) as (segment, local coordinate).
    fn locate(&self, s: f64) -> (usize, f64) {
        let s = s.clamp(0.0, self.length);
        let k = match self.s.binary_search_by(|v| v.total_cmp(&s)) {
            Ok(i) => i.min(self.segs.len() - 1),
            Err(i) => (i.max(1) - 1).min(self.segs.len() - 1),
        };
        let sg = &self.segs[k];
        let target = s - self.s[k];
        let seglen = self.s[k + 1] - self.s[k];
        let mut x = -sg.a + 2.0 * sg.a * (target / seglen.max(1e-300));
        for _ in 0..20 {
            let g = sg.arclen(-sg.a, x) - target;
            let nx = (x - g / sg.speed(x)).clamp(-sg.a, sg.a);
            if (nx - x).abs() < 1e-15 * sg.a {
                x = nx;
                break;
            }
            x = nx;
        }
        (k, x)
    }

    /// Point, tangent and curvature at arclength `s`; continues along the end
    /// circles outside `[0, length]` for open curves.
    pub fn at(&self, s: f64) -> Foot {
        if !self.closed && s < 0.0 {
            let (p, t, k) = self.extension(false, s);
            return Foot { point: p, s, tangent: t, normal: t.perp(), kappa: k, offset: 0.0, dist: 0.0, region: Region::Before };
        }
        if !self.closed && s > self.length {
            let (p, t, k) = self.extension(true, s - self.length);
            return Foot { point: p, s, tangent: t, normal: t.perp(), kappa: k, offset: 0.0, dist: 0.0, region: Region::After };
        }
        let s = if self.closed { s.rem_euclid(self.length) } else { s };
        let (k, x) = self.locate(s);
        self.local(k, x)
    }

    /// Unit tangent (traversal direction) at the start or end node.
    pub fn end_tangent(&self, at_end: bool) -> V2 {
        if at_end {
            self.local(self.segs.len() - 1, self.segs.last().unwrap().a).tangent
        } else {
            self.local(0, -self.segs[0].a).tangent
        }
    }

    /// Interpolated curvature at an arclength in `[0, length]`.
    pub fn kappa_at(&self, s: f64) -> f64 {
        self.at(s).kappa
    }

    /// Linear interpolation in arclength of a nodal quantity.
    pub fn interp_nodal(&self, vals: &[f64], s: f64) -> f64 {
        let n = self.nodes.len();
        if self.closed {
            let s = s.rem_euclid(self.length);
            let k = match self.s.binary_search_by(|v| v.total_cmp(&s)) {
                Ok(i) => i.min(n - 1),
                Err(i) => (i.max(1) - 1).min(n - 1),
            };
            let w = (s - self.s[k]) / (self.s[k + 1] - self.s[k]);
            return (1.0 - w) * vals[k] + w * vals[(k + 1) % n];
        }
        let s = s.clamp(0.0, self.length);
        let k = match self.s.binary_search_by(|v| v.total_cmp(&s)) {
            Ok(i) => i.min(n - 2),
            Err(i) => (i.max(1) - 1).min(n - 2),
        };
        let w = (s - self.s[k]) / (self.s[k + 1] - self.s[k]);
        (1.0 - w) * vals[k] + w * vals[k + 1]
    }

    /// `n` points at uniform arclength; for closed curves the first is node 0.
    pub fn resample(&self, n: usize) -> Vec<V2> {
        if self.closed {
            (0..n).map(|i| self.at(self.length * i as f64 / n as f64).point).collect()
        } else {
            let mut v: Vec<V2> = (0..n).map(|i| self.at(self.length * i as f64 / (n - 1) as f64).point).collect();
            v[0] = self.nodes[0];
            v[n - 1] = *self.nodes.last().unwrap();
            v
        }
    }

    /// Dense point samples along the curve (`per_seg` per segment).
    pub fn samples(&self, per_seg: usize) -> Vec<Foot> {
        let mut out = Vec::new();
        for (k, sg) in self.segs.iter().enumerate() {
            for j in 0..per_seg {
                let x = -sg.a + 2.0 * sg.a * (j as f64 + 0.5) / per_seg as f64;
                out.push(self.local(k, x));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn circle(n: usize, r: f64) -> Vec<V2> {
        (0..n).map(|i| V2::polar(r, TAU * i as f64 / n as f64)).collect()
    }

    #[test]
    fn circle_is_reproduced() {
        let g = CurveGeom::new(&circle(32, 2.0), true);
        assert!((g.length - TAU * 2.0).abs() < 1e-9);
        for k in 0..50 {
            let f = g.at(k as f64 * 0.2731);
            assert!((f.point.norm() - 2.0).abs() < 1e-12);
            assert!((f.kappa - 0.5).abs() < 1e-9);
        }
        let f = g.project(V2::new(3.0, 0.5));
        assert!((f.dist - (V2::new(3.0, 0.5).norm() - 2.0)).abs() < 1e-12);
        assert!(f.offset < 0.0);
    }

    #[test]
    fn extension_continues_circle() {
        let pts: Vec<V2> = (0..10).map(|i| V2::polar(1.0, 0.1 * i as f64)).collect();
        let g = CurveGeom::new(&pts, false);
        let f = g.at(-0.3);
        assert!((f.point.norm() - 1.0).abs() < 1e-12);
        let x = V2::polar(1.4, -0.2);
        let f = g.project_extended(x, 0.5);
        assert_eq!(f.region, Region::Before);
        assert!((f.dist - 0.4).abs() < 1e-10);
        assert!((f.s + 0.2).abs() < 1e-10);
    }
}
