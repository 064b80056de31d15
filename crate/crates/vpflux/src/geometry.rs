//! Signed distance functions for the embedded geometries, discrete normals,
//! closest-point projection, and interface-cell detection.
//!
//! Sign convention: `phi > 0` in the fluid, `phi < 0` in the solid, and the
//! interface normal `n = -grad phi` points out of the fluid into the solid.

use crate::error::VpError;
use crate::grid::CellField;
use std::sync::Arc;

/// Exact signed distance to a simple closed polygon in the `z = 0` plane.
/// The solid is the polygon interior; the fluid is outside.
#[derive(Debug, Clone)]
pub struct PolygonSdf {
    pub vertices: Vec<[f64; 2]>,
}

impl PolygonSdf {
    /// Builds a polygon SDF. Vertices must describe a simple (non
    /// self-intersecting) closed loop; orientation does not matter for
    /// evaluation.
    pub fn new(vertices: Vec<[f64; 2]>) -> Result<Self, VpError> {
        if vertices.len() < 3 {
            return Err(VpError::Geometry("polygon needs at least 3 vertices".into()));
        }
        let p = Self { vertices };
        if p.self_intersects() {
            return Err(VpError::Geometry("polygon is self-intersecting".into()));
        }
        Ok(p)
    }

    fn self_intersects(&self) -> bool {
        let n = self.vertices.len();
        let seg = |i: usize| (self.vertices[i], self.vertices[(i + 1) % n]);
        for i in 0..n {
            let (a, b) = seg(i);
            for j in (i + 2)..n {
                // Skip the shared-endpoint neighbor pairs (including the
                // wrap-around pair first/last).
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (c, d) = seg(j);
                if segments_cross(a, b, c, d) {
                    return true;
                }
            }
        }
        false
    }

    /// Unsigned distance to the polyline and a crossing-parity inside test.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let n = self.vertices.len();
        let mut d2 = f64::INFINITY;
        let mut inside = false;
        for i in 0..n {
            let [ax, ay] = self.vertices[i];
            let [bx, by] = self.vertices[(i + 1) % n];
            let (ex, ey) = (bx - ax, by - ay);
            let (wx, wy) = (x - ax, y - ay);
            let t = ((wx * ex + wy * ey) / (ex * ex + ey * ey)).clamp(0.0, 1.0);
            let (dx, dy) = (wx - t * ex, wy - t * ey);
            d2 = d2.min(dx * dx + dy * dy);
            if (ay > y) != (by > y) && x < ax + (y - ay) * ex / ey {
                inside = !inside;
            }
        }
        let d = d2.sqrt();
        if inside { -d } else { d }
    }

    /// Offsets every edge inward by `rho` (toward the interior of a
    /// counterclockwise polygon) and reconnects consecutive edge lines at
    /// their intersections.
    pub fn offset_inward(&self, rho: f64) -> Result<Self, VpError> {
        let n = self.vertices.len();
        let mut lines = Vec::with_capacity(n);
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let mut t = [b[0] - a[0], b[1] - a[1]];
            let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
            t[0] /= len;
            t[1] /= len;
            // Left normal of a CCW edge points into the interior.
            let nin = [-t[1], t[0]];
            lines.push(([a[0] + rho * nin[0], a[1] + rho * nin[1]], t));
        }
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let (a1, t1) = lines[(i + n - 1) % n];
            let (a2, t2) = lines[i];
            let det = t1[0] * (-t2[1]) - (-t2[0]) * t1[1];
            if det.abs() < 1e-12 {
                out.push(a2);
            } else {
                let rhs = [a2[0] - a1[0], a2[1] - a1[1]];
                let s = (rhs[0] * (-t2[1]) - (-t2[0]) * rhs[1]) / det;
                out.push([a1[0] + s * t1[0], a1[1] + s * t1[1]]);
            }
        }
        Self::new(out)
    }
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let orient = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| {
        (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    };
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// Evaluable signed distance field for one embedded interface.
#[derive(Clone)]
pub enum Sdf {
    /// Circle in 2D or sphere in 3D; `fluid_inside` selects orientation.
    Sphere { center: [f64; 3], radius: f64, fluid_inside: bool },
    /// Solid torus, axis along z. Fluid outside.
    Torus { center: [f64; 3], r_major: f64, r_minor: f64 },
    /// Solid polygon in 2D. Fluid outside.
    Polygon(Arc<PolygonSdf>),
    /// Polygon with convex corners rounded by tangent arcs of radius `rho`:
    /// the stored polygon is the inward offset, and the zero level set is
    /// pushed back outward by `rho`.
    RoundedPolygon { offset: Arc<PolygonSdf>, rho: f64 },
}

impl Sdf {
    pub fn eval(&self, x: [f64; 3]) -> f64 {
        match self {
            Sdf::Sphere { center, radius, fluid_inside } => {
                let r = dist3(x, *center);
                if *fluid_inside { radius - r } else { r - radius }
            }
            Sdf::Torus { center, r_major, r_minor } => {
                let rho = ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2)).sqrt();
                (((rho - r_major).powi(2) + (x[2] - center[2]).powi(2)).sqrt()) - r_minor
            }
            Sdf::Polygon(p) => p.eval(x[0], x[1]),
            Sdf::RoundedPolygon { offset, rho } => offset.eval(x[0], x[1]) - rho,
        }
    }

    /// Unit normal `n = -grad phi` by central differences of the closure with
    /// a small step. Returns `None` when the gradient is degenerate.
    pub fn normal(&self, x: [f64; 3], dim: usize) -> Option<[f64; 3]> {
        const STEP: f64 = 1e-6;
        let mut grad = [0.0; 3];
        for a in 0..dim {
            let mut xp = x;
            let mut xm = x;
            xp[a] += STEP;
            xm[a] -= STEP;
            grad[a] = (self.eval(xp) - self.eval(xm)) / (2.0 * STEP);
        }
        let mag = (grad[0] * grad[0] + grad[1] * grad[1] + grad[2] * grad[2]).sqrt();
        if mag < 1e-12 {
            return None;
        }
        Some([-grad[0] / mag, -grad[1] / mag, -grad[2] / mag])
    }

    /// Closest interface point of `x`: `x + phi(x) * n(x)`.
    pub fn closest_point(&self, x: [f64; 3], dim: usize) -> Option<[f64; 3]> {
        let n = self.normal(x, dim)?;
        let phi = self.eval(x);
        Some([x[0] + phi * n[0], x[1] + phi * n[1], x[2] + phi * n[2]])
    }
}

/// Annulus between two circles: fluid in the gap. Returned as its combined
/// signed distance; the two bounding circles are separate `Sdf::Sphere`
/// interfaces for forcing purposes.
pub fn sdf_annulus(center: [f64; 3], r_i: f64, r_o: f64, x: [f64; 3]) -> f64 {
    let r = dist3(x, center);
    (r - r_i).min(r_o - r)
}

fn dist3(x: [f64; 3], c: [f64; 3]) -> f64 {
    ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) + (x[2] - c[2]).powi(2)).sqrt()
}

/// Star-of-David hexagram: union of two equilateral triangles with the given
/// circumradius, realized as a 12-vertex star polygon. Outer tips sit at
/// angles 30 + 60k degrees, inner (reflex) vertices at 0 + 60k degrees with
/// radius `circumradius / sqrt(3)`.
pub fn hexagram_polygon(center: [f64; 2], circumradius: f64) -> PolygonSdf {
    let ri = circumradius / 3f64.sqrt();
    let mut verts = Vec::with_capacity(12);
    for k in 0..6 {
        let ao = (30.0 + 60.0 * k as f64).to_radians();
        let ai = (60.0 + 60.0 * k as f64).to_radians();
        verts.push([center[0] + circumradius * ao.cos(), center[1] + circumradius * ao.sin()]);
        verts.push([center[0] + ri * ai.cos(), center[1] + ri * ai.sin()]);
    }
    PolygonSdf::new(verts).expect("hexagram polygon is simple")
}

/// Plus-sign polygon rotated by 45 degrees: arm half-width `w`, arm
/// half-length `l`.
pub fn xcross_polygon(center: [f64; 2], w: f64, l: f64) -> PolygonSdf {
    // Plus-sign outline (12 vertices, CCW), then rotate by 45 degrees.
    let raw = [
        [l, -w], [l, w], [w, w], [w, l], [-w, l], [-w, w],
        [-l, w], [-l, -w], [-w, -w], [-w, -l], [w, -l], [w, -w],
    ];
    let c = std::f64::consts::FRAC_PI_4.cos();
    let s = std::f64::consts::FRAC_PI_4.sin();
    let verts = raw
        .iter()
        .map(|[x, y]| [center[0] + c * x - s * y, center[1] + s * x + c * y])
        .collect();
    PolygonSdf::new(verts).expect("x-cross polygon is simple")
}

/// Classical two-radii egg: a bottom semicircle of radius `r_major`, side
/// arcs of radius `2 r_major` centered at the semicircle's endpoints, and a
/// top cap of radius `r_minor` tangent to the side arcs. Realized as a dense
/// polyline whose chord error is far below 1e-6.
pub fn egg_polygon(center: [f64; 2], r_major: f64, r_minor: f64) -> PolygonSdf {
    let big_r = r_major;
    let r = r_minor;
    // Top-cap center height from internal tangency of the 2R side arcs.
    let yc = ((2.0 * big_r - r).powi(2) - big_r * big_r).sqrt();
    // Tangency direction from the side-arc center (-R, 0) toward (0, yc).
    let alpha = yc.atan2(big_r);

    // Center the bounding box [-R, R] x [-R, yc + r] on `center`.
    let y_mid = (yc + r - big_r) / 2.0;
    let (cx, cy) = (center[0], center[1] - y_mid);

    let mut verts: Vec<[f64; 2]> = Vec::new();
    let step = 2.0 * std::f64::consts::PI / 4096.0;
    let mut arc = |ccx: f64, ccy: f64, rad: f64, a0: f64, a1: f64| {
        let n = (((a1 - a0).abs() * rad / (step * big_r)).ceil() as usize).max(2);
        for i in 0..n {
            let a = a0 + (a1 - a0) * i as f64 / n as f64;
            verts.push([cx + ccx + rad * a.cos(), cy + ccy + rad * a.sin()]);
        }
    };
    // Counterclockwise: right side, top cap, left side, bottom semicircle.
    arc(-big_r, 0.0, 2.0 * big_r, 0.0, alpha);
    let beta = std::f64::consts::PI - alpha;
    arc(0.0, yc, r, alpha, beta);
    arc(big_r, 0.0, 2.0 * big_r, beta, std::f64::consts::PI);
    arc(0.0, 0.0, big_r, std::f64::consts::PI, 2.0 * std::f64::consts::PI);
    PolygonSdf::new(verts).expect("egg polyline is simple")
}

/// One flagged interface cell: grid index, unit normal, closest interface
/// point, and the signed distance at the cell center.
#[derive(Debug, Clone)]
pub struct InterfaceCell {
    pub idx: [usize; 3],
    pub normal: [f64; 3],
    pub closest: [f64; 3],
    pub phi: f64,
}

/// All interface cells of one SDF on a grid, plus the count of cells skipped
/// for degenerate normals.
#[derive(Debug, Clone)]
pub struct InterfaceCellSet {
    pub cells: Vec<InterfaceCell>,
    pub skipped_degenerate: usize,
}

/// Flags the grid cells the interface passes through: any face-neighbor sign
/// change, or `|phi| <= h/2` at the cell center. Normals and closest points
/// come from the analytic SDF closure.
pub fn find_interface_cells(phi: &CellField, sdf: &Sdf) -> InterfaceCellSet {
    let g = phi.grid;
    let mut cells = Vec::new();
    let mut skipped = 0;
    let sign = |v: f64| if v < 0.0 { -1.0 } else { 1.0 };
    for i in 0..g.n {
        for j in 0..g.n {
            for k in 0..g.nk() {
                let p = phi.at(i, j, k);
                let mut flagged = p.abs() <= 0.5 * g.h;
                if !flagged {
                    let here = sign(p);
                    let idx = [i, j, k];
                    'axes: for a in 0..g.dim {
                        for s in [-1isize, 1] {
                            let q = idx[a] as isize + s;
                            if q < 0 || q as usize >= g.n {
                                continue;
                            }
                            let mut nb = idx;
                            nb[a] = q as usize;
                            if sign(phi.at(nb[0], nb[1], nb[2])) != here {
                                flagged = true;
                                break 'axes;
                            }
                        }
                    }
                }
                if !flagged {
                    continue;
                }
                let x = g.cell_center(i, j, k);
                match sdf.normal(x, g.dim) {
                    Some(n) => {
                        let closest = [x[0] + p * n[0], x[1] + p * n[1], x[2] + p * n[2]];
                        cells.push(InterfaceCell { idx: [i, j, k], normal: n, closest, phi: p });
                    }
                    None => skipped += 1,
                }
            }
        }
    }
    InterfaceCellSet { cells, skipped_degenerate: skipped }
}
