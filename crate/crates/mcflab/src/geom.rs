use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

/// Plane vector. Serialized as `[x, y]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct V2 {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for V2 {
    fn from(a: [f64; 2]) -> Self {
        V2 { x: a[0], y: a[1] }
    }
}

impl From<V2> for [f64; 2] {
    fn from(v: V2) -> Self {
        [v.x, v.y]
    }
}

impl V2 {
    pub const ZERO: V2 = V2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        V2 { x, y }
    }

    pub fn polar(r: f64, phi: f64) -> Self {
        V2::new(r * phi.cos(), r * phi.sin())
    }

    pub fn dot(self, o: V2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: V2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn unit(self) -> V2 {
        let n = self.norm();
        if n > 0.0 {
            self / n
        } else {
            self
        }
    }

    /// Counter-clockwise quarter turn `J v`.
    pub fn perp(self) -> V2 {
        V2::new(-self.y, self.x)
    }

    /// Clockwise quarter turn `J^{-1} v`.
    pub fn perp_cw(self) -> V2 {
        V2::new(self.y, -self.x)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn rotate(self, phi: f64) -> V2 {
        let (s, c) = phi.sin_cos();
        V2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for V2 {
    type Output = V2;
    fn add(self, o: V2) -> V2 {
        V2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for V2 {
    fn add_assign(&mut self, o: V2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for V2 {
    type Output = V2;
    fn sub(self, o: V2) -> V2 {
        V2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for V2 {
    fn sub_assign(&mut self, o: V2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for V2 {
    type Output = V2;
    fn mul(self, s: f64) -> V2 {
        V2::new(self.x * s, self.y * s)
    }
}

impl Mul<V2> for f64 {
    type Output = V2;
    fn mul(self, v: V2) -> V2 {
        v * self
    }
}

impl Div<f64> for V2 {
    type Output = V2;
    fn div(self, s: f64) -> V2 {
        V2::new(self.x / s, self.y / s)
    }
}

impl Neg for V2 {
    type Output = V2;
    fn neg(self) -> V2 {
        V2::new(-self.x, -self.y)
    }
}

/// 2x2 matrix, row-major.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct M2 {
    pub a: [[f64; 2]; 2],
}

impl M2 {
    pub fn identity() -> M2 {
        M2 { a: [[1.0, 0.0], [0.0, 1.0]] }
    }

    pub fn rotation(phi: f64) -> M2 {
        let (s, c) = phi.sin_cos();
        M2 { a: [[c, -s], [s, c]] }
    }

    /// Matrix with columns `c0`, `c1`.
    pub fn from_cols(c0: V2, c1: V2) -> M2 {
        M2 { a: [[c0.x, c1.x], [c0.y, c1.y]] }
    }

    pub fn apply(&self, v: V2) -> V2 {
        V2::new(
            self.a[0][0] * v.x + self.a[0][1] * v.y,
            self.a[1][0] * v.x + self.a[1][1] * v.y,
        )
    }

    pub fn mul(&self, o: &M2) -> M2 {
        let mut r = [[0.0; 2]; 2];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = self.a[i][0] * o.a[0][j] + self.a[i][1] * o.a[1][j];
            }
        }
        M2 { a: r }
    }

    pub fn transpose(&self) -> M2 {
        M2 { a: [[self.a[0][0], self.a[1][0]], [self.a[0][1], self.a[1][1]]] }
    }

    pub fn trace(&self) -> f64 {
        self.a[0][0] + self.a[1][1]
    }

    /// Frobenius inner product `A : B`.
    pub fn ddot(&self, o: &M2) -> f64 {
        (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| self.a[i][j] * o.a[i][j]).sum()
    }

    pub fn max_abs_diff(&self, o: &M2) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                m = m.max((self.a[i][j] - o.a[i][j]).abs());
            }
        }
        m
    }

    /// `u ⊗ v`.
    pub fn outer(u: V2, v: V2) -> M2 {
        M2 { a: [[u.x * v.x, u.x * v.y], [u.y * v.x, u.y * v.y]] }
    }
}

/// Angle in `[0, 2π)`.
pub fn wrap_angle(phi: f64) -> f64 {
    let t = std::f64::consts::TAU;
    let r = phi.rem_euclid(t);
    if r >= t {
        0.0
    } else {
        r
    }
}

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: V2,
    pub max: V2,
}

impl Aabb {
    pub fn empty() -> Aabb {
        Aabb { min: V2::new(f64::INFINITY, f64::INFINITY), max: V2::new(f64::NEG_INFINITY, f64::NEG_INFINITY) }
    }

    pub fn grow(&mut self, p: V2) {
        self.min.x = self.min.x.min(p.x);
        self.min.y = self.min.y.min(p.y);
        self.max.x = self.max.x.max(p.x);
        self.max.y = self.max.y.max(p.y);
    }

    pub fn pad(&self, r: f64) -> Aabb {
        Aabb { min: self.min - V2::new(r, r), max: self.max + V2::new(r, r) }
    }

    pub fn contains(&self, p: V2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn dist(&self, p: V2) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        dx.hypot(dy)
    }

    pub fn diameter(&self) -> f64 {
        (self.max - self.min).norm()
    }
}

/// Signed curvature of the circle through three points (positive for a left turn).
pub fn circumcurvature(a: V2, b: V2, c: V2) -> f64 {
    let d = (b - a).norm() * (c - b).norm() * (c - a).norm();
    if d == 0.0 {
        return 0.0;
    }
    2.0 * (b - a).cross(c - b) / d
}

/// Unit tangent at `p0` of the circle through `p0, p1, p2`, oriented towards `p1`.
pub fn circle_tangent_at_first(p0: V2, p1: V2, p2: V2) -> V2 {
    let u = p1 - p0;
    let v = p2 - p0;
    let t = u * v.norm2() - v * u.norm2();
    let t = if t.norm2() == 0.0 { u } else { t };
    let t = t.unit();
    if t.dot(u) < 0.0 {
        -t
    } else {
        t
    }
}
