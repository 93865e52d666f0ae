//! Browser bindings: threshold dynamics on grain microstructures, front
//! tracking of small networks and probing of their calibration fields.

use mcflab::geom::{Aabb, V2};
use mcflab::netcalib::Calibration;
use mcflab::network::Network;
use mcflab::scenes;
use mcflab::strongflow::{run, FlowParams, Status};
use mcflab::tensions::SurfaceTensions;
use mcflab::weakmbo::{extract_interfaces, mbo_step, perturb_grid, GridSpec, Perturbation, PhaseGrid};
use wasm_bindgen::prelude::*;

fn fill(spec: GridSpec, phases: usize, f: impl Fn(V2) -> usize) -> PhaseGrid {
    let mut g = PhaseGrid::uniform(spec, phases, 0);
    for j in 0..g.ny {
        for i in 0..g.nx {
            g.cells[j * g.nx + i] = f(g.center(i, j)) as u8;
        }
    }
    g
}

/// Flattens curves into `x, y` pairs with a `NaN, NaN` pair after each curve.
fn polylines(net: &Network) -> Vec<f64> {
    let mut out = Vec::new();
    for c in &net.curves {
        for p in &c.nodes {
            out.extend([p.x, p.y]);
        }
        if c.is_closed() {
            out.extend([c.nodes[0].x, c.nodes[0].y]);
        }
        out.extend([f64::NAN, f64::NAN]);
    }
    out
}

fn bounds_of(b: Aabb) -> Vec<f64> {
    vec![b.min.x, b.min.y, b.max.x, b.max.y]
}

fn network_scene(name: &str) -> Result<Network, String> {
    Ok(match name {
        "circle" => scenes::circle(0.8, 128, V2::ZERO),
        "lens" => scenes::lens(0.5, 1.5, 0.02),
        "triod" => scenes::triod(0.02, 1.0, None),
        "curved-triod" => scenes::curved_triod(0.02, 1.0, [0.5, -0.3, -0.2]),
        other => return Err(format!("unknown scene `{other}`")),
    })
}

/// Multiphase threshold dynamics on a square grid.
#[wasm_bindgen]
pub struct ThresholdDemo {
    grid: PhaseGrid,
    sigma: SurfaceTensions,
    dt: f64,
}

#[wasm_bindgen]
impl ThresholdDemo {
    /// `scene` is `voronoi` (`grains` random grains) or `fourgrains`.
    #[wasm_bindgen(constructor)]
    pub fn new(scene: &str, cells: usize, grains: usize, seed: u64) -> Result<ThresholdDemo, String> {
        if !(16..=1024).contains(&cells) {
            return Err("grid size must be between 16 and 1024".into());
        }
        let unit = Aabb { min: V2::ZERO, max: V2::new(1.0, 1.0) };
        let h = 1.0 / cells as f64;
        let spec = GridSpec { nx: cells, ny: cells, h, origin: unit.min };
        let grid = match scene {
            "voronoi" => {
                if !(2..=255).contains(&grains) {
                    return Err("grain count must be between 2 and 255".into());
                }
                let vor = scenes::Voronoi::random(grains, unit, seed);
                fill(spec, grains, |x| vor.nearest(x))
            }
            "fourgrains" => {
                let g = fill(spec, 4, |x| scenes::fourgrains_phase(x - V2::new(0.5, 0.5)));
                perturb_grid(&g, &Perturbation::Seed { center: V2::new(0.5, 0.5), radius: 0.06, phase: 0 }, seed)
            }
            other => return Err(format!("unknown scene `{other}`")),
        };
        let sigma = SurfaceTensions::equal(grid.phases);
        Ok(ThresholdDemo { grid, sigma, dt: 32.0 * h * h })
    }

    pub fn step(&mut self, steps: usize) -> Result<(), String> {
        for _ in 0..steps {
            self.grid = mbo_step(&self.grid, self.dt, &self.sigma).map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.grid.nx
    }

    pub fn time(&self) -> f64 {
        self.grid.t
    }

    pub fn energy(&self) -> f64 {
        extract_interfaces(&self.grid).energy(&self.sigma)
    }

    /// Number of phases that still occupy at least one cell.
    pub fn surviving(&self) -> usize {
        self.grid.areas().iter().filter(|&&a| a > 0.0).count()
    }

    /// Phase labels, top row first, ready for an RGBA lookup in the page.
    pub fn labels(&self) -> Vec<u8> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        (0..ny).rev().flat_map(|j| self.grid.cells[j * nx..(j + 1) * nx].to_vec()).collect()
    }
}

/// Front tracking of a small network.
#[wasm_bindgen]
pub struct FlowDemo {
    net: Network,
    params: FlowParams,
    dt: f64,
    stopped: Option<String>,
}

#[wasm_bindgen]
impl FlowDemo {
    /// `scene` is `circle`, `lens`, `triod` or `curved-triod`.
    #[wasm_bindgen(constructor)]
    pub fn new(scene: &str) -> Result<FlowDemo, String> {
        let net = network_scene(scene)?;
        let h = net.max_spacing();
        let params = FlowParams::for_spacing(h, 0.01);
        let dt = 0.1 * net.min_spacing().powi(2);
        Ok(FlowDemo { net, params, dt, stopped: None })
    }

    /// Advances by `steps` steps; returns false once the flow has stopped.
    pub fn advance(&mut self, steps: usize) -> bool {
        if self.stopped.is_some() {
            return false;
        }
        let dt = self.dt.min(0.8 * self.params.stability * self.net.min_spacing().powi(2));
        match run(&self.net, steps as f64 * dt, dt, &self.params) {
            Ok(tr) => {
                if let Some(last) = tr.snapshots.last() {
                    self.net = last.clone();
                }
                if tr.status != Status::Finished {
                    self.stopped = Some(tr.reason.unwrap_or_else(|| "stopped".into()));
                }
            }
            Err(e) => self.stopped = Some(e.to_string()),
        }
        self.stopped.is_none()
    }

    pub fn time(&self) -> f64 {
        self.net.t
    }

    pub fn energy(&self) -> f64 {
        self.net.energy(&self.net.geometry())
    }

    /// Area enclosed by the lens or circle; zero for other scenes.
    pub fn area(&self) -> f64 {
        match self.net.curves.len() {
            1 => scenes::polygon_area(&self.net.curves[0].nodes).abs(),
            4 => scenes::lens_area(&self.net),
            _ => 0.0,
        }
    }

    pub fn reason(&self) -> Option<String> {
        self.stopped.clone()
    }

    pub fn curves(&self) -> Vec<f64> {
        polylines(&self.net)
    }

    pub fn bounds(&self) -> Vec<f64> {
        bounds_of(self.net.domain.unwrap_or_else(|| self.net.bbox()).pad(0.1))
    }
}

/// Calibration fields of a static network.
#[wasm_bindgen]
pub struct FieldDemo {
    cal: Calibration,
}

#[wasm_bindgen]
impl FieldDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(scene: &str) -> Result<FieldDemo, String> {
        let net = network_scene(scene)?;
        let cal = Calibration::build(&net, None, None).map_err(|e| e.to_string())?;
        Ok(FieldDemo { cal })
    }

    pub fn phases(&self) -> usize {
        self.cal.net.phases
    }

    pub fn localization_radius(&self) -> f64 {
        self.cal.params.r_loc
    }

    pub fn curves(&self) -> Vec<f64> {
        polylines(&self.cal.net)
    }

    pub fn bounds(&self) -> Vec<f64> {
        bounds_of(self.cal.net.domain.unwrap_or_else(|| self.cal.net.bbox()).pad(0.3))
    }

    /// `[Ση, |ξ_ij|, ξ_ij.x, ξ_ij.y, B.x, B.y]` at `(x, y)`.
    pub fn probe(&self, x: f64, y: f64, i: usize, j: usize) -> Result<Vec<f64>, String> {
        let p = self.cal.net.phases;
        if i >= p || j >= p || i == j {
            return Err(format!("phases must be distinct and below {p}"));
        }
        let s = self.cal.eval(V2::new(x, y));
        let xi = s.pair(i, j);
        Ok(vec![s.eta_sum(), xi.norm(), xi.x, xi.y, s.b.x, s.b.y])
    }

    /// `ξ_ij` on an `n × n` lattice over the bounds, as `x, y, ξx, ξy` rows.
    pub fn lattice(&self, n: usize, i: usize, j: usize) -> Result<Vec<f64>, String> {
        let b = self.bounds();
        let n = n.clamp(2, 80);
        let mut out = Vec::with_capacity(4 * n * n);
        for r in 0..n {
            for c in 0..n {
                let x = b[0] + (b[2] - b[0]) * (c as f64 + 0.5) / n as f64;
                let y = b[1] + (b[3] - b[1]) * (r as f64 + 0.5) / n as f64;
                let v = self.probe(x, y, i, j)?;
                out.extend([x, y, v[2], v[3]]);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_demo_steps_and_keeps_label_count() {
        let mut d = ThresholdDemo::new("voronoi", 64, 8, 3).unwrap();
        let e0 = d.energy();
        d.step(5).unwrap();
        assert_eq!(d.labels().len(), 64 * 64);
        assert!(d.energy() <= e0);
        assert!(d.time() > 0.0);
    }

    #[test]
    fn unknown_scene_is_rejected() {
        assert!(ThresholdDemo::new("hexagons", 64, 8, 3).is_err());
        assert!(FlowDemo::new("hexagons").is_err());
    }

    #[test]
    fn circle_area_shrinks_at_two_pi() {
        let mut d = FlowDemo::new("circle").unwrap();
        let (a0, t0) = (d.area(), d.time());
        assert!(d.advance(50));
        let rate = (d.area() - a0) / (d.time() - t0);
        assert!((rate + 2.0 * std::f64::consts::PI).abs() < 0.05, "rate {rate}");
    }

    #[test]
    fn circle_fields_are_unit_on_the_curve() {
        let d = FieldDemo::new("circle").unwrap();
        let v = d.probe(0.8, 0.0, 0, 1).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-12);
        assert!((v[1] - 1.0).abs() < 1e-9);
        assert_eq!(d.lattice(5, 0, 1).unwrap().len(), 100);
        assert!(d.probe(0.0, 0.0, 1, 1).is_err());
    }
}
