//! Multiphase threshold dynamics on a uniform grid, interface extraction with
//! normals and normal velocities, and perturbations of initial data.

use crate::geom::{Aabb, V2};
use crate::network::{phase_at, CurveEnd, EndSpec, Network, PhaseAt};
use crate::par::map_range;
use crate::tensions::SurfaceTensions;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid does not leave a pad of {pad} around the interfaces")]
    Pad { pad: f64 },
    #[error("time step {dt} is below the resolvable limit {min}")]
    Unresolved { dt: f64, min: f64 },
    #[error("too many phases for a byte grid: {0}")]
    TooManyPhases(usize),
    #[error("grid file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: V2,
}

impl GridSpec {
    /// Smallest grid with spacing `h` containing `bbox` padded by `pad`.
    pub fn covering(bbox: Aabb, h: f64, pad: f64) -> GridSpec {
        let b = bbox.pad(pad);
        let nx = ((b.max.x - b.min.x) / h).ceil() as usize;
        let ny = ((b.max.y - b.min.y) / h).ceil() as usize;
        let c = (b.min + b.max) * 0.5;
        GridSpec { nx, ny, h, origin: c - V2::new(nx as f64, ny as f64) * (0.5 * h) }
    }

    pub fn bounds(&self) -> Aabb {
        Aabb { min: self.origin, max: self.origin + V2::new(self.nx as f64, self.ny as f64) * self.h }
    }
}

/// Phase label per cell, row-major with `x` fastest. Labels are 0-based.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGrid {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: V2,
    pub phases: usize,
    pub cells: Vec<u8>,
    pub t: f64,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    origin: V2,
    h: f64,
    t: f64,
    phases: usize,
}

const MAGIC: &[u8; 4] = b"MCFG";

impl PhaseGrid {
    pub fn uniform(spec: GridSpec, phases: usize, phase: u8) -> PhaseGrid {
        PhaseGrid { nx: spec.nx, ny: spec.ny, h: spec.h, origin: spec.origin, phases, cells: vec![phase; spec.nx * spec.ny], t: 0.0 }
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec { nx: self.nx, ny: self.ny, h: self.h, origin: self.origin }
    }

    pub fn center(&self, i: usize, j: usize) -> V2 {
        self.origin + V2::new((i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h)
    }

    pub fn get(&self, i: usize, j: usize) -> usize {
        self.cells[j * self.nx + i] as usize
    }

    /// Cell containing `x`, if any.
    pub fn cell_of(&self, x: V2) -> Option<(usize, usize)> {
        let u = (x - self.origin) / self.h;
        if u.x < 0.0 || u.y < 0.0 {
            return None;
        }
        let (i, j) = (u.x as usize, u.y as usize);
        (i < self.nx && j < self.ny).then_some((i, j))
    }

    pub fn areas(&self) -> Vec<f64> {
        let mut a = vec![0.0; self.phases];
        for &c in &self.cells {
            a[c as usize] += self.h * self.h;
        }
        a
    }

    /// Writes the binary cell file and a `.json` sidecar next to it. Cells hold
    /// the 1-based phase index.
    pub fn save(&self, path: &Path) -> Result<(), GridError> {
        let mut f = std::fs::File::create(path)?;
        let mut head = [0u8; 16];
        head[..4].copy_from_slice(MAGIC);
        head[4..8].copy_from_slice(&(self.nx as u32).to_le_bytes());
        head[8..12].copy_from_slice(&(self.ny as u32).to_le_bytes());
        f.write_all(&head)?;
        let body: Vec<u8> = self.cells.iter().map(|&c| c + 1).collect();
        f.write_all(&body)?;
        let side = Sidecar { origin: self.origin, h: self.h, t: self.t, phases: self.phases };
        std::fs::write(path.with_extension("json"), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<PhaseGrid, GridError> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        if buf.len() < 16 || &buf[..4] != MAGIC {
            return Err(GridError::Format("bad magic".into()));
        }
        let nx = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
        let ny = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
        if buf.len() != 16 + nx * ny {
            return Err(GridError::Format(format!("expected {} cells, found {}", nx * ny, buf.len() - 16)));
        }
        let side: Sidecar = serde_json::from_str(&std::fs::read_to_string(path.with_extension("json"))?)?;
        let mut cells = Vec::with_capacity(nx * ny);
        for &c in &buf[16..] {
            if c == 0 || c as usize > side.phases {
                return Err(GridError::Format(format!("phase label {c} out of range")));
            }
            cells.push(c - 1);
        }
        Ok(PhaseGrid { nx, ny, h: side.h, origin: side.origin, phases: side.phases, cells, t: side.t })
    }
}

/// Samples the phase of every cell centre. Interfaces away from free curve
/// ends must stay `pad` away from the grid boundary.
pub fn rasterize(net: &Network, spec: GridSpec, pad: f64) -> Result<PhaseGrid, GridError> {
    if net.phases > 255 {
        return Err(GridError::TooManyPhases(net.phases));
    }
    let inner = spec.bounds().pad(-pad);
    for c in &net.curves {
        let free_ends: Vec<V2> = [CurveEnd::Start, CurveEnd::End]
            .into_iter()
            .filter(|e| c.ends[e.index()] == EndSpec::Free)
            .map(|e| c.end_node(e))
            .collect();
        for &x in &c.nodes {
            let free = free_ends.iter().any(|e| (x - *e).norm() <= 2.0 * pad);
            if !free && !inner.contains(x) {
                return Err(GridError::Pad { pad });
            }
        }
    }
    let geoms = net.geometry();
    let rows = map_range(spec.ny, |j| {
        (0..spec.nx)
            .map(|i| {
                let x = spec.origin + V2::new((i as f64 + 0.5) * spec.h, (j as f64 + 0.5) * spec.h);
                match phase_at(net, &geoms, x) {
                    Ok(PhaseAt::Phase(p)) => p as u8,
                    Ok(PhaseAt::Boundary) => match phase_at(net, &geoms, x + V2::new(1e-9 * spec.h, 3e-9 * spec.h)) {
                        Ok(PhaseAt::Phase(p)) => p as u8,
                        _ => 0,
                    },
                    Err(_) => 0,
                }
            })
            .collect::<Vec<u8>>()
    });
    Ok(PhaseGrid { nx: spec.nx, ny: spec.ny, h: spec.h, origin: spec.origin, phases: net.phases, cells: rows.concat(), t: net.t })
}

/// Normalized samples of a Gaussian of variance `2 dt`, truncated at five standard deviations.
pub fn kernel(dt: f64, h: f64) -> Vec<f64> {
    let sd = (2.0 * dt).sqrt();
    let r = (5.0 * sd / h).ceil() as i64;
    let w: Vec<f64> = (-r..=r).map(|k| (-((k as f64 * h).powi(2)) / (4.0 * dt)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Convolution of one phase indicator restricted to a window.
struct Smoothed {
    x0: usize,
    y0: usize,
    w: usize,
    hgt: usize,
    vals: Vec<f64>,
}

impl Smoothed {
    fn at(&self, i: usize, j: usize) -> f64 {
        if i < self.x0 || j < self.y0 || i >= self.x0 + self.w || j >= self.y0 + self.hgt {
            0.0
        } else {
            self.vals[(j - self.y0) * self.w + (i - self.x0)]
        }
    }
}

fn smooth_phase(g: &PhaseGrid, p: u8, ker: &[f64]) -> Option<Smoothed> {
    let r = ker.len() / 2;
    let (mut xmin, mut ymin, mut xmax, mut ymax) = (usize::MAX, usize::MAX, 0, 0);
    for j in 0..g.ny {
        for i in 0..g.nx {
            if g.cells[j * g.nx + i] == p {
                xmin = xmin.min(i);
                xmax = xmax.max(i);
                ymin = ymin.min(j);
                ymax = ymax.max(j);
            }
        }
    }
    if xmin == usize::MAX {
        return None;
    }
    let x0 = xmin.saturating_sub(r);
    let y0 = ymin.saturating_sub(r);
    let x1 = (xmax + r + 1).min(g.nx);
    let y1 = (ymax + r + 1).min(g.ny);
    let (w, hgt) = (x1 - x0, y1 - y0);
    let rows = map_range(ymax + 1 - ymin, |jj| {
        let j = ymin + jj;
        (0..w)
            .map(|ii| {
                let i = x0 + ii;
                let mut s = 0.0;
                for (k, &kv) in ker.iter().enumerate() {
                    let src = i as i64 + k as i64 - r as i64;
                    if src >= 0 && (src as usize) < g.nx && g.cells[j * g.nx + src as usize] == p {
                        s += kv;
                    }
                }
                s
            })
            .collect::<Vec<f64>>()
    });
    let cols = map_range(hgt, |jj| {
        let j = y0 + jj;
        (0..w)
            .map(|ii| {
                let mut s = 0.0;
                for (k, &kv) in ker.iter().enumerate() {
                    let src = j as i64 + k as i64 - r as i64;
                    if src >= ymin as i64 && src <= ymax as i64 {
                        s += kv * rows[(src as usize) - ymin][ii];
                    }
                }
                s
            })
            .collect::<Vec<f64>>()
    });
    Some(Smoothed { x0, y0, w, hgt, vals: cols.concat() })
}

/// One thresholding step: convolve each phase with the heat kernel at time
/// `dt`, then assign every cell the phase minimizing `Σ_j σ_ij u_j` among
/// the phases present within the kernel's reach (lowest index wins ties).
pub fn mbo_step(g: &PhaseGrid, dt: f64, sigma: &SurfaceTensions) -> Result<PhaseGrid, GridError> {
    let min = g.h * g.h;
    if !(dt >= min * (1.0 - 1e-12)) {
        return Err(GridError::Unresolved { dt, min });
    }
    let ker = kernel(dt, g.h);
    let conv: Vec<Option<Smoothed>> = (0..g.phases).map(|p| smooth_phase(g, p as u8, &ker)).collect();
    let present: Vec<usize> = (0..g.phases).filter(|&p| conv[p].is_some()).collect();
    let rows = map_range(g.ny, |j| {
        let mut out = Vec::with_capacity(g.nx);
        let mut u: Vec<(usize, f64)> = Vec::with_capacity(8);
        for i in 0..g.nx {
            u.clear();
            for &p in &present {
                let v = conv[p].as_ref().unwrap().at(i, j);
                if v > 0.0 {
                    u.push((p, v));
                }
            }
            let mut best = (f64::INFINITY, g.cells[j * g.nx + i]);
            for &(a, _) in &u {
                let phi: f64 = u.iter().filter(|e| e.0 != a).map(|&(b, v)| sigma.get(a, b) * v).sum();
                if phi < best.0 {
                    best = (phi, a as u8);
                }
            }
            out.push(best.1);
        }
        out
    });
    Ok(PhaseGrid { cells: rows.concat(), t: g.t + dt, ..g.clone() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Segment {
    pub a: V2,
    pub b: V2,
    /// Phases `(i, j)` with `i < j`.
    pub pair: (usize, usize),
    /// Unit normal pointing from `i` into `j`.
    pub normal: V2,
    pub mid: V2,
    pub len: f64,
    /// Normal velocity along `normal`.
    pub velocity: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct InterfaceSoup {
    pub segments: Vec<Segment>,
    pub t: f64,
    pub phases: usize,
}

impl InterfaceSoup {
    pub fn length(&self, pair: (usize, usize)) -> f64 {
        self.segments.iter().filter(|s| s.pair == pair).map(|s| s.len).sum()
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| s.len).sum()
    }

    /// Interface energy `Σ_{i≠j} σ_ij |I_ij|`, counting each interface from both sides.
    pub fn energy(&self, sigma: &SurfaceTensions) -> f64 {
        2.0 * self.segments.iter().map(|s| sigma.get(s.pair.0, s.pair.1) * s.len).sum::<f64>()
    }

    /// Fraction of segments carrying a velocity, by length.
    pub fn velocity_coverage(&self) -> f64 {
        let tot = self.total_length();
        if tot == 0.0 {
            return 1.0;
        }
        self.segments.iter().filter(|s| s.velocity.is_some()).map(|s| s.len).sum::<f64>() / tot
    }
}

/// Width (in cells) of the Gaussian used to smooth indicators before extraction.
const SMOOTHING: f64 = 2.0;
const SMOOTHING_REACH: i64 = 6;

fn smoothing_weights() -> &'static [f64] {
    static W: OnceLock<Vec<f64>> = OnceLock::new();
    W.get_or_init(|| {
        let r = SMOOTHING_REACH;
        (-r..=r)
            .flat_map(|dj| (-r..=r).map(move |di| (-((di * di + dj * dj) as f64) / (2.0 * SMOOTHING * SMOOTHING)).exp()))
            .collect()
    })
}

/// Gaussian-weighted average of the indicator of phase `p` around cell
/// `(i, j)`, renormalized over the cells inside the grid.
fn smoothed_indicator(g: &PhaseGrid, p: usize, i: usize, j: usize) -> f64 {
    let r = SMOOTHING_REACH;
    let w = smoothing_weights();
    let mut s = 0.0;
    let mut n = 0.0;
    for dj in -r..=r {
        let b = j as i64 + dj;
        if b < 0 || b as usize >= g.ny {
            continue;
        }
        for di in -r..=r {
            let a = i as i64 + di;
            if a < 0 || a as usize >= g.nx {
                continue;
            }
            let wk = w[((dj + r) * (2 * r + 1) + di + r) as usize];
            n += wk;
            if g.get(a as usize, b as usize) == p {
                s += wk;
            }
        }
    }
    s / n
}

/// Marching squares on the dual grid of cell centres. Squares with exactly two
/// phases yield segments; crossings are placed on the zero level of the
/// smoothed indicator difference and saddles are resolved by its centre
/// average. Squares touching three or more phases are skipped.
pub fn extract_interfaces(g: &PhaseGrid) -> InterfaceSoup {
    let rows = map_range(g.ny.saturating_sub(1), |b| {
        let mut segs = Vec::new();
        for a in 0..g.nx.saturating_sub(1) {
            let corners = [(a, b), (a + 1, b), (a + 1, b + 1), (a, b + 1)];
            let ph = corners.map(|(i, j)| g.get(i, j));
            let i = *ph.iter().min().unwrap();
            let j = *ph.iter().max().unwrap();
            if i == j || ph.iter().any(|&p| p != i && p != j) {
                continue;
            }
            let f = corners.map(|(x, y)| smoothed_indicator(g, j, x, y) - smoothed_indicator(g, i, x, y));
            let pos = corners.map(|(x, y)| g.center(x, y));
            // Edge k joins corner k and k+1.
            let cross = |k: usize| -> Option<V2> {
                let (c0, c1) = (k, (k + 1) % 4);
                if ph[c0] == ph[c1] {
                    return None;
                }
                let (f0, f1) = (f[c0], f[c1]);
                let consistent = (ph[c0] == i) == (f0 < f1) && f0 * f1 < 0.0;
                let t = if consistent { f0 / (f0 - f1) } else { 0.5 };
                Some(pos[c0] + (pos[c1] - pos[c0]) * t)
            };
            let e: Vec<(usize, V2)> = (0..4).filter_map(|k| cross(k).map(|p| (k, p))).collect();
            let pairs: Vec<(V2, V2)> = if e.len() == 2 {
                vec![(e[0].1, e[1].1)]
            } else if e.len() == 4 {
                let centre = f.iter().sum::<f64>() / 4.0;
                let centre_phase = if centre > 0.0 { j } else { i };
                if centre_phase == ph[0] {
                    // Corners 0 and 2 connected: cut off corners 1 and 3.
                    vec![(e[0].1, e[1].1), (e[2].1, e[3].1)]
                } else {
                    vec![(e[3].1, e[0].1), (e[1].1, e[2].1)]
                }
            } else {
                Vec::new()
            };
            for (p, q) in pairs {
                let len = (q - p).norm();
                if len <= 0.0 {
                    continue;
                }
                let mid = (p + q) * 0.5;
                let normal = smoothed_normal(g, i, j, mid).unwrap_or_else(|| {
                    let n = (q - p).perp().unit();
                    let toward_j = pos.iter().zip(ph.iter()).filter(|(_, &k)| k == j).map(|(x, _)| *x - mid).fold(V2::ZERO, |s, v| s + v);
                    if n.dot(toward_j) >= 0.0 {
                        n
                    } else {
                        -n
                    }
                });
                segs.push(Segment { a: p, b: q, pair: (i, j), normal, mid, len, velocity: None });
            }
        }
        segs
    });
    InterfaceSoup { segments: rows.concat(), t: g.t, phases: g.phases }
}

/// Normalized gradient of the smoothed `χ_j − χ_i`, bilinearly interpolated.
fn smoothed_normal(g: &PhaseGrid, i: usize, j: usize, x: V2) -> Option<V2> {
    let u = (x - g.origin) / g.h - V2::new(0.5, 0.5);
    let (a, b) = (u.x.floor() as i64, u.y.floor() as i64);
    let (fx, fy) = (u.x - a as f64, u.y - b as f64);
    let val = |p: i64, q: i64| -> f64 {
        let p = p.clamp(0, g.nx as i64 - 1) as usize;
        let q = q.clamp(0, g.ny as i64 - 1) as usize;
        smoothed_indicator(g, j, p, q) - smoothed_indicator(g, i, p, q)
    };
    let grad = |p: i64, q: i64| V2::new(val(p + 1, q) - val(p - 1, q), val(p, q + 1) - val(p, q - 1));
    let v = grad(a, b) * ((1.0 - fx) * (1.0 - fy)) + grad(a + 1, b) * (fx * (1.0 - fy)) + grad(a, b + 1) * ((1.0 - fx) * fy) + grad(a + 1, b + 1) * (fx * fy);
    let n = v.norm();
    (n > 1e-12).then(|| v / n)
}

/// Bucketed segment lookup for nearest-segment queries.
struct SegIndex<'a> {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<&'a Segment>>,
}

impl<'a> SegIndex<'a> {
    fn new(segs: impl Iterator<Item = &'a Segment>, cell: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<&Segment>> = HashMap::new();
        for s in segs {
            let mut b = Aabb::empty();
            b.grow(s.a);
            b.grow(s.b);
            let (i0, j0) = ((b.min.x / cell).floor() as i64, (b.min.y / cell).floor() as i64);
            let (i1, j1) = ((b.max.x / cell).floor() as i64, (b.max.y / cell).floor() as i64);
            for i in i0..=i1 {
                for j in j0..=j1 {
                    buckets.entry((i, j)).or_default().push(s);
                }
            }
        }
        SegIndex { cell, buckets }
    }

    fn nearest(&self, x: V2, radius: f64) -> Option<V2> {
        let r = (radius / self.cell).ceil() as i64;
        let (ci, cj) = ((x.x / self.cell).floor() as i64, (x.y / self.cell).floor() as i64);
        let mut best: Option<(f64, V2)> = None;
        for i in ci - r..=ci + r {
            for j in cj - r..=cj + r {
                if let Some(v) = self.buckets.get(&(i, j)) {
                    for s in v {
                        let q = closest_on_segment(s.a, s.b, x);
                        let d = (q - x).norm();
                        if d <= radius && best.is_none_or(|b| d < b.0) {
                            best = Some((d, q));
                        }
                    }
                }
            }
        }
        best.map(|b| b.1)
    }
}

pub fn closest_on_segment(a: V2, b: V2, x: V2) -> V2 {
    let d = b - a;
    let l2 = d.norm2();
    if l2 == 0.0 {
        return a;
    }
    a + d * ((x - a).dot(d) / l2).clamp(0.0, 1.0)
}

/// Fills normal velocities: displacement along the normal to the nearest
/// interface of the same pair at the later time, divided by `dt`. Segments with
/// no such interface within `radius` keep `None`.
pub fn estimate_velocity(now: &InterfaceSoup, next: &InterfaceSoup, dt: f64, radius: f64) -> InterfaceSoup {
    let mut by_pair: HashMap<(usize, usize), Vec<&Segment>> = HashMap::new();
    for s in &next.segments {
        by_pair.entry(s.pair).or_default().push(s);
    }
    let index: HashMap<(usize, usize), SegIndex> =
        by_pair.into_iter().map(|(k, v)| (k, SegIndex::new(v.into_iter(), radius.max(1e-12)))).collect();
    let segments = map_range(now.segments.len(), |k| {
        let s = now.segments[k];
        let v = index.get(&s.pair).and_then(|ix| ix.nearest(s.mid, radius)).map(|q| (q - s.mid).dot(s.normal) / dt);
        Segment { velocity: v, ..s }
    });
    InterfaceSoup { segments, t: now.t, phases: now.phases }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Perturbation {
    /// Rigid translation of the network before rasterization.
    Shift(V2),
    /// Each cell within `band` of a phase boundary takes a random neighbouring
    /// phase with probability `p`.
    Noise { band: f64, p: f64 },
    /// Disk of the given phase.
    Seed { center: V2, radius: f64, phase: usize },
}

pub fn shift_network(net: &Network, d: V2) -> Network {
    let mut n = net.clone();
    for c in &mut n.curves {
        for x in &mut c.nodes {
            *x += d;
        }
    }
    for j in &mut n.junctions {
        j.position += d;
    }
    if let Some(b) = &mut n.domain {
        b.min += d;
        b.max += d;
    }
    n
}

/// Perturbed initial grid for `net`. Shifts re-rasterize; the other modes act
/// on the rasterized grid.
pub fn perturb(net: &Network, spec: GridSpec, pad: f64, mode: &Perturbation, seed: u64) -> Result<PhaseGrid, GridError> {
    match mode {
        Perturbation::Shift(d) => rasterize(&shift_network(net, *d), spec, pad),
        _ => Ok(perturb_grid(&rasterize(net, spec, pad)?, mode, seed)),
    }
}

pub fn perturb_grid(g: &PhaseGrid, mode: &Perturbation, seed: u64) -> PhaseGrid {
    let mut out = g.clone();
    match *mode {
        Perturbation::Shift(d) => {
            let (di, dj) = ((d.x / g.h).round() as i64, (d.y / g.h).round() as i64);
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let (a, b) = ((i as i64 - di).clamp(0, g.nx as i64 - 1), (j as i64 - dj).clamp(0, g.ny as i64 - 1));
                    out.cells[j * g.nx + i] = g.cells[b as usize * g.nx + a as usize];
                }
            }
        }
        Perturbation::Noise { band, p } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = (band / g.h).ceil().max(1.0) as i64;
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let here = g.get(i, j);
                    let mut others = Vec::new();
                    for dj in -r..=r {
                        for di in -r..=r {
                            let (a, b) = (i as i64 + di, j as i64 + dj);
                            if a < 0 || b < 0 || a >= g.nx as i64 || b >= g.ny as i64 {
                                continue;
                            }
                            let q = g.get(a as usize, b as usize);
                            if q != here && !others.contains(&q) {
                                others.push(q);
                            }
                        }
                    }
                    let u: f64 = rng.random();
                    if !others.is_empty() && u < p {
                        out.cells[j * g.nx + i] = others[rng.random_range(0..others.len())] as u8;
                    }
                }
            }
        }
        Perturbation::Seed { center, radius, phase } => {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    if (g.center(i, j) - center).norm() < radius {
                        out.cells[j * g.nx + i] = phase as u8;
                    }
                }
            }
        }
    }
    out
}

/// Area of the symmetric difference of two grids on the same lattice.
pub fn symmetric_difference(a: &PhaseGrid, b: &PhaseGrid) -> f64 {
    a.cells.iter().zip(&b.cells).filter(|(x, y)| x != y).count() as f64 * a.h * a.h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = kernel(4e-4, 0.01);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let n = k.len();
        for i in 0..n {
            assert_eq!(k[i], k[n - 1 - i]);
        }
    }

    #[test]
    fn half_plane_extracts_straight_line() {
        let spec = GridSpec { nx: 20, ny: 20, h: 0.1, origin: V2::ZERO };
        let mut g = PhaseGrid::uniform(spec, 2, 0);
        for j in 10..20 {
            for i in 0..20 {
                g.cells[j * 20 + i] = 1;
            }
        }
        let s = extract_interfaces(&g);
        assert!((s.total_length() - 1.9).abs() < 1e-12);
        for seg in &s.segments {
            assert!((seg.mid.y - 1.0).abs() < 1e-12);
            assert!((seg.normal - V2::new(0.0, 1.0)).norm() < 1e-12);
        }
    }
}
