//! Minimal SVG figures of interfaces.

use crate::geom::{Aabb, V2};
use crate::network::Network;
use crate::weakmbo::InterfaceSoup;
use std::fmt::Write;

const WIDTH: f64 = 600.0;

struct Frame {
    b: Aabb,
    scale: f64,
}

impl Frame {
    fn new(b: Aabb) -> Frame {
        let w = (b.max.x - b.min.x).max(b.max.y - b.min.y).max(f64::MIN_POSITIVE);
        Frame { b, scale: WIDTH / w }
    }

    fn map(&self, p: V2) -> (f64, f64) {
        ((p.x - self.b.min.x) * self.scale, (self.b.max.y - p.y) * self.scale)
    }
}

/// Weak interfaces in black, strong curves in red, both over `bounds`.
pub fn overlay(bounds: Aabb, soup: Option<&InterfaceSoup>, net: Option<&Network>) -> String {
    let f = Frame::new(bounds);
    let (w, h) = ((bounds.max.x - bounds.min.x) * f.scale, (bounds.max.y - bounds.min.y) * f.scale);
    let mut s = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.1} {h:.1}\">\n");
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    if let Some(soup) = soup {
        let mut d = String::new();
        for seg in &soup.segments {
            let (a, b) = (f.map(seg.a), f.map(seg.b));
            let _ = write!(d, "M{:.2} {:.2}L{:.2} {:.2}", a.0, a.1, b.0, b.1);
        }
        let _ = writeln!(s, "<path d=\"{d}\" stroke=\"black\" stroke-width=\"1\" fill=\"none\"/>");
    }
    if let Some(net) = net {
        for c in &net.curves {
            let mut pts: Vec<String> = c.nodes.iter().map(|p| f.map(*p)).map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            if c.is_closed() {
                pts.push(pts[0].clone());
            }
            let _ = writeln!(s, "<polyline points=\"{}\" stroke=\"#c0392b\" stroke-width=\"1.5\" fill=\"none\"/>", pts.join(" "));
        }
        for j in &net.junctions {
            let (x, y) = f.map(j.position);
            let _ = writeln!(s, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"#c0392b\"/>");
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenes;

    #[test]
    fn circle_overlay_is_well_formed() {
        let net = scenes::circle(1.0, 16, V2::ZERO);
        let s = overlay(net.bbox().pad(0.1), None, Some(&net));
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("<polyline").count(), 1);
    }
}
