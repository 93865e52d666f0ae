//! Front tracking for curve networks moving by curvature with force-balanced
//! triple junctions.

use crate::curve::CurveGeom;
use crate::geom::{circle_tangent_at_first, V2};
use crate::network::{Curve, CurveEnd, EndSpec, Network};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("time step {dt} exceeds stability bound {bound}")]
    StepSize { dt: f64, bound: f64 },
    #[error("junction solve failed after {iters} iterations (residual {residual:e})")]
    Junction { iters: usize, residual: f64 },
    #[error("non-finite state")]
    NonFinite,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowParams {
    /// Stability constant `c` in `dt ≤ c·h_min²`.
    pub stability: f64,
    /// Redistribute every this many steps (0 disables).
    pub redistribute_every: usize,
    /// Target node spacing kept by redistribution; `None` keeps node counts.
    pub target_spacing: Option<f64>,
    pub snapshot_stride: usize,
    pub floors: Floors,
}

#[derive(Clone, Debug, Serialize)]
pub struct Floors {
    pub length: f64,
    pub separation: f64,
    /// Bound on `|curvature|·h`.
    pub curvature_h: f64,
}

impl FlowParams {
    pub fn for_spacing(h: f64, r_c_target: f64) -> FlowParams {
        FlowParams {
            stability: 0.25,
            redistribute_every: 10,
            target_spacing: Some(h),
            snapshot_stride: 1,
            floors: Floors { length: 10.0 * h, separation: 4.0 * r_c_target, curvature_h: 0.5 },
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct StepReport {
    pub herring_residual: f64,
    /// Misfit of the least-squares junction velocity against the normal
    /// speeds `H` of the incident curves.
    pub junction_ls_residual: f64,
    pub newton_iterations: usize,
    pub max_displacement: f64,
}

/// Solves `(a_k, b_k, c_k)` tridiagonal systems for several right-hand sides.
fn thomas(lo: &[f64], di: &[f64], up: &[f64], rhs: &mut [Vec<f64>]) {
    let n = di.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    dp[0] = di[0];
    for k in 1..n {
        let w = lo[k] / dp[k - 1];
        cp[k] = w;
        dp[k] = di[k] - w * up[k - 1];
    }
    for r in rhs.iter_mut() {
        for k in 1..n {
            r[k] -= cp[k] * r[k - 1];
        }
        r[n - 1] /= dp[n - 1];
        for k in (0..n - 1).rev() {
            r[k] = (r[k] - up[k] * r[k + 1]) / dp[k];
        }
    }
}

/// Cyclic tridiagonal solve (Sherman–Morrison); `lo[0]` couples to the last
/// unknown and `up[n-1]` to the first.
fn cyclic(lo: &[f64], di: &[f64], up: &[f64], rhs: &mut [Vec<f64>]) {
    let n = di.len();
    let gamma = -di[0];
    let mut d = di.to_vec();
    d[0] -= gamma;
    d[n - 1] -= lo[0] * up[n - 1] / gamma;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = up[n - 1];
    let mut all: Vec<Vec<f64>> = rhs.to_vec();
    all.push(u);
    let mut lo2 = lo.to_vec();
    lo2[0] = 0.0;
    let mut up2 = up.to_vec();
    up2[n - 1] = 0.0;
    thomas(&lo2, &d, &up2, &mut all);
    let z = all.pop().unwrap();
    let vz = z[0] + lo[0] / gamma * z[n - 1];
    for (r, y) in rhs.iter_mut().zip(all) {
        let vy = y[0] + lo[0] / gamma * y[n - 1];
        let f = vy / (1.0 + vz);
        for k in 0..n {
            r[k] = y[k] - f * z[k];
        }
    }
}

/// Interior solution of one open curve as an affine function of its two end positions.
struct Affine {
    base: Vec<V2>,
    e_start: Vec<f64>,
    e_end: Vec<f64>,
}

impl Affine {
    fn eval(&self, k: usize, ps: V2, pe: V2) -> V2 {
        self.base[k] + self.e_start[k] * ps + self.e_end[k] * pe
    }
}

fn lengths(nodes: &[V2], closed: bool) -> Vec<f64> {
    let n = nodes.len();
    let m = if closed { n } else { n - 1 };
    (0..m).map(|k| (nodes[(k + 1) % n] - nodes[k]).norm()).collect()
}

fn open_affine(nodes: &[V2], dt: f64) -> Affine {
    let n = nodes.len();
    let l = lengths(nodes, false);
    let m = n - 2;
    let (mut lo, mut di, mut up) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut rx = vec![0.0; m];
    let mut ry = vec![0.0; m];
    let mut es = vec![0.0; m];
    let mut ee = vec![0.0; m];
    for i in 0..m {
        let k = i + 1;
        let c = 2.0 / (l[k - 1] + l[k]);
        let a = dt * c / l[k - 1];
        let b = dt * c / l[k];
        lo[i] = -a;
        up[i] = -b;
        di[i] = 1.0 + a + b;
        rx[i] = nodes[k].x;
        ry[i] = nodes[k].y;
        if i == 0 {
            es[i] = a;
        }
        if i == m - 1 {
            ee[i] = b;
        }
    }
    let mut rhs = vec![rx, ry, es, ee];
    thomas(&lo, &di, &up, &mut rhs);
    let base = (0..m).map(|i| V2::new(rhs[0][i], rhs[1][i])).collect();
    Affine { base, e_start: rhs[2].clone(), e_end: rhs[3].clone() }
}

fn closed_step(nodes: &[V2], dt: f64) -> Vec<V2> {
    let n = nodes.len();
    let l = lengths(nodes, true);
    let (mut lo, mut di, mut up) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for k in 0..n {
        let lp = l[(k + n - 1) % n];
        let ln = l[k];
        let c = 2.0 / (lp + ln);
        let a = dt * c / lp;
        let b = dt * c / ln;
        lo[k] = -a;
        up[k] = -b;
        di[k] = 1.0 + a + b;
    }
    let mut rhs = vec![nodes.iter().map(|p| p.x).collect(), nodes.iter().map(|p| p.y).collect::<Vec<_>>()];
    cyclic(&lo, &di, &up, &mut rhs);
    (0..n).map(|k| V2::new(rhs[0][k], rhs[1][k])).collect()
}

/// Least-squares junction velocity from the normal speeds of the arms, and its misfit.
pub fn junction_ls_velocity(net: &Network, geoms: &[CurveGeom], j: usize) -> (V2, f64) {
    let arms = net.arms(geoms, j);
    let mut rows = Vec::new();
    for a in &arms {
        let g = &geoms[a.curve];
        let at_end = a.end == CurveEnd::End;
        let kappa = if at_end { g.kappa[g.nodes.len() - 1] } else { g.kappa[0] };
        // Interface normal n̄ = −(left normal of traversal); H = −κ.
        let m = if at_end { g.end_tangent(true).perp() } else { g.end_tangent(false).perp() };
        rows.push((-m, -kappa));
    }
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (n, h) in &rows {
        a11 += n.x * n.x;
        a12 += n.x * n.y;
        a22 += n.y * n.y;
        b1 += n.x * h;
        b2 += n.y * h;
    }
    let det = a11 * a22 - a12 * a12;
    let v = V2::new((a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det);
    let res = rows.iter().map(|(n, h)| (v.dot(*n) - h).powi(2)).sum::<f64>().sqrt();
    (v, res)
}

fn herring(net: &Network, junction: usize, tangents: &[(usize, V2)]) -> V2 {
    let _ = junction;
    let mut s = V2::ZERO;
    for &(ci, t) in tangents {
        let c = &net.curves[ci];
        s += net.sigma.get(c.left, c.right) * t;
    }
    s
}

/// Largest `|Σ σ τ_out|` over junctions using the interpolant end tangents.
pub fn herring_residual(net: &Network, geoms: &[CurveGeom]) -> f64 {
    let mut r: f64 = 0.0;
    for j in 0..net.junctions.len() {
        let t: Vec<(usize, V2)> = net.arms(geoms, j).iter().map(|a| (a.curve, a.out)).collect();
        r = r.max(herring(net, j, &t).norm());
    }
    r
}

/// One semi-implicit step of length `dt`. Node counts are preserved.
pub fn step(net: &Network, dt: f64, params: &FlowParams) -> Result<(Network, StepReport), FlowError> {
    let h_min = net.min_spacing();
    let bound = params.stability * h_min * h_min;
    if dt > bound * (1.0 + 1e-12) {
        return Err(FlowError::StepSize { dt, bound });
    }
    let mut out = net.clone();
    let mut rep = StepReport::default();
    let mut aff: Vec<Option<Affine>> = Vec::with_capacity(net.curves.len());
    for c in &net.curves {
        if c.is_closed() {
            aff.push(None);
        } else {
            aff.push(Some(open_affine(&c.nodes, dt)));
        }
    }
    let nj = net.junctions.len();
    let mut p: Vec<V2> = net.junctions.iter().map(|j| j.position).collect();
    let end_pos = |c: &Curve, e: usize, p: &[V2]| -> V2 {
        match c.ends[e] {
            EndSpec::Junction(j) => p[j],
            _ => {
                if e == 0 {
                    c.nodes[0]
                } else {
                    *c.nodes.last().unwrap()
                }
            }
        }
    };
    let residual = |p: &[V2]| -> Vec<V2> {
        let mut f = vec![V2::ZERO; nj];
        for (ci, c) in net.curves.iter().enumerate() {
            let Some(a) = &aff[ci] else { continue };
            let ps = end_pos(c, 0, p);
            let pe = end_pos(c, 1, p);
            let m = a.base.len();
            let sig = net.sigma.get(c.left, c.right);
            if let EndSpec::Junction(j) = c.ends[0] {
                let x1 = a.eval(0, ps, pe);
                let x2 = if m > 1 { a.eval(1, ps, pe) } else { pe };
                f[j] += sig * circle_tangent_at_first(ps, x1, x2);
            }
            if let EndSpec::Junction(j) = c.ends[1] {
                let x1 = a.eval(m - 1, ps, pe);
                let x2 = if m > 1 { a.eval(m - 2, ps, pe) } else { ps };
                f[j] += sig * circle_tangent_at_first(pe, x1, x2);
            }
        }
        f
    };
    if nj > 0 {
        let scale = net.max_spacing();
        let mut f = residual(&p);
        let norm = |f: &[V2]| f.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let mut iters = 0;
        while norm(&f) > 1e-13 {
            if iters >= 50 {
                return Err(FlowError::Junction { iters, residual: norm(&f) });
            }
            iters += 1;
            let n = 2 * nj;
            let eps = 1e-7 * scale;
            let mut jac = DMatrix::<f64>::zeros(n, n);
            for col in 0..n {
                let mut pp = p.clone();
                if col % 2 == 0 {
                    pp[col / 2].x += eps;
                } else {
                    pp[col / 2].y += eps;
                }
                let fp = residual(&pp);
                let mut pm = p.clone();
                if col % 2 == 0 {
                    pm[col / 2].x -= eps;
                } else {
                    pm[col / 2].y -= eps;
                }
                let fm = residual(&pm);
                for r in 0..nj {
                    jac[(2 * r, col)] = (fp[r].x - fm[r].x) / (2.0 * eps);
                    jac[(2 * r + 1, col)] = (fp[r].y - fm[r].y) / (2.0 * eps);
                }
            }
            let rhs = DVector::from_iterator(n, f.iter().flat_map(|v| [-v.x, -v.y]));
            let Some(dx) = jac.lu().solve(&rhs) else {
                return Err(FlowError::Junction { iters, residual: norm(&f) });
            };
            // Damped update: limit the move to a fraction of the spacing.
            let mx = (0..nj).map(|j| V2::new(dx[2 * j], dx[2 * j + 1]).norm()).fold(0.0, f64::max);
            let damp = if mx > 0.5 * scale { 0.5 * scale / mx } else { 1.0 };
            for j in 0..nj {
                p[j] += damp * V2::new(dx[2 * j], dx[2 * j + 1]);
            }
            let fnew = residual(&p);
            let small_step = mx * damp < 1e-15 * scale;
            f = fnew;
            if small_step {
                break;
            }
        }
        rep.newton_iterations = iters;
        rep.herring_residual = norm(&f);
        if rep.herring_residual > 1e-8 {
            return Err(FlowError::Junction { iters, residual: rep.herring_residual });
        }
    }
    let mut disp: f64 = 0.0;
    for (ci, c) in net.curves.iter().enumerate() {
        let new_nodes: Vec<V2> = match &aff[ci] {
            None => closed_step(&c.nodes, dt),
            Some(a) => {
                let ps = end_pos(c, 0, &p);
                let pe = end_pos(c, 1, &p);
                let mut v = Vec::with_capacity(c.nodes.len());
                v.push(ps);
                for k in 0..a.base.len() {
                    v.push(a.eval(k, ps, pe));
                }
                v.push(pe);
                v
            }
        };
        for (a, b) in new_nodes.iter().zip(&c.nodes) {
            disp = disp.max((*a - *b).norm());
        }
        if new_nodes.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::NonFinite);
        }
        out.curves[ci].nodes = new_nodes;
    }
    for j in 0..nj {
        out.junctions[j].velocity = Some((p[j] - net.junctions[j].position) / dt);
        out.junctions[j].position = p[j];
    }
    out.t = net.t + dt;
    rep.max_displacement = disp;
    let geoms = out.geometry();
    for j in 0..nj {
        rep.junction_ls_residual = rep.junction_ls_residual.max(junction_ls_velocity(&out, &geoms, j).1);
    }
    Ok((out, rep))
}

/// Resamples a curve uniformly in arclength on its smooth interpolant,
/// keeping end nodes. `n_nodes = None` keeps the node count.
pub fn redistribute(curve: &Curve, n_nodes: Option<usize>) -> Curve {
    let g = CurveGeom::new(&curve.nodes, curve.is_closed());
    let n = n_nodes.unwrap_or(curve.nodes.len()).max(if curve.is_closed() { 8 } else { 3 });
    Curve { nodes: g.resample(n), ..curve.clone() }
}

fn redistribute_network(net: &Network, target: Option<f64>) -> Network {
    let mut out = net.clone();
    for c in out.curves.iter_mut() {
        let n = target.map(|h| {
            let g = CurveGeom::new(&c.nodes, c.is_closed());
            let segs = (g.length / h).round() as usize;
            if c.is_closed() {
                segs
            } else {
                segs + 1
            }
        });
        *c = redistribute(c, n);
    }
    out
}

pub fn detect_singularity(net: &Network, floors: &Floors) -> Option<String> {
    let geoms = net.geometry();
    for (ci, g) in geoms.iter().enumerate() {
        if g.length < floors.length {
            return Some(format!("curve {ci} length {:.3e} below floor {:.3e}", g.length, floors.length));
        }
        let h = g.length / g.num_segments() as f64;
        let kmax = g.kappa.iter().fold(0.0f64, |m, k| m.max(k.abs()));
        if kmax * h > floors.curvature_h {
            return Some(format!("curve {ci} curvature·h = {:.3e} above floor {:.3e}", kmax * h, floors.curvature_h));
        }
    }
    for (i, a) in net.junctions.iter().enumerate() {
        for (k, b) in net.junctions.iter().enumerate().skip(i + 1) {
            let d = (a.position - b.position).norm();
            if d < floors.separation {
                return Some(format!("junctions {i} and {k} at distance {d:.3e} below floor {:.3e}", floors.separation));
            }
        }
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Running,
    StoppedSingular,
    Finished,
}

#[derive(Clone, Debug, Serialize)]
pub struct IndexRow {
    pub t: f64,
    pub energy: f64,
    pub min_length: f64,
    pub max_residual: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub snapshots: Vec<Network>,
    pub dt: f64,
    pub status: Status,
    pub reason: Option<String>,
    pub index: Vec<IndexRow>,
    /// Energy after every step (not only recorded snapshots).
    pub energies: Vec<(f64, f64)>,
}

impl Trajectory {
    pub fn index_csv(&self) -> String {
        let mut s = String::from("t,energy,min_length,max_residual\n");
        for r in &self.index {
            s.push_str(&format!("{:e},{:e},{:e},{:e}\n", r.t, r.energy, r.min_length, r.max_residual));
        }
        s
    }
}

fn index_row(net: &Network, residual: f64) -> IndexRow {
    let g = net.geometry();
    IndexRow {
        t: net.t,
        energy: net.energy(&g),
        min_length: g.iter().map(|c| c.length).fold(f64::INFINITY, f64::min),
        max_residual: residual,
    }
}

/// Integrates up to time `t_end` (relative to `net.t`).
pub fn run(net: &Network, t_end: f64, dt: f64, params: &FlowParams) -> Result<Trajectory, FlowError> {
    let steps = (t_end / dt).round() as usize;
    let mut cur = net.clone();
    let g0 = cur.geometry();
    let mut traj = Trajectory {
        snapshots: vec![cur.clone()],
        dt,
        status: Status::Running,
        reason: None,
        index: vec![index_row(&cur, herring_residual(&cur, &g0))],
        energies: vec![(cur.t, cur.energy(&g0))],
    };
    for n in 0..steps {
        if let Some(r) = detect_singularity(&cur, &params.floors) {
            traj.status = Status::StoppedSingular;
            traj.reason = Some(r);
            return Ok(traj);
        }
        let (mut next, rep) = step(&cur, dt, params)?;
        if params.redistribute_every > 0 && (n + 1) % params.redistribute_every == 0 {
            next = redistribute_network(&next, params.target_spacing);
        }
        let g = next.geometry();
        traj.energies.push((next.t, next.energy(&g)));
        if (n + 1) % params.snapshot_stride.max(1) == 0 || n + 1 == steps {
            traj.index.push(index_row(&next, rep.herring_residual));
            traj.snapshots.push(next.clone());
        }
        cur = next;
    }
    traj.status = Status::Finished;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cyclic_solver_matches_dense() {
        let n = 7;
        let lo: Vec<f64> = (0..n).map(|k| -0.3 - 0.01 * k as f64).collect();
        let up: Vec<f64> = (0..n).map(|k| -0.2 - 0.02 * k as f64).collect();
        let di: Vec<f64> = (0..n).map(|k| 2.0 + 0.1 * k as f64).collect();
        let b: Vec<f64> = (0..n).map(|k| (k as f64).sin()).collect();
        let mut m = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            m[(k, k)] = di[k];
            m[(k, (k + n - 1) % n)] = lo[k];
            m[(k, (k + 1) % n)] = up[k];
        }
        let x = m.lu().solve(&DVector::from_vec(b.clone())).unwrap();
        let mut r = vec![b];
        cyclic(&lo, &di, &up, &mut r);
        for k in 0..n {
            assert!((r[0][k] - x[k]).abs() < 1e-13);
        }
    }
}
