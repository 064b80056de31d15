//! Manufactured verification problems: exact solutions, source terms,
//! geometry bindings, and boundary data in the operator's sign convention
//! (`-kappa n . grad q = g` with n pointing out of the fluid).

use crate::error::VpError;
use crate::forcing::Marker;
use crate::geometry::{egg_polygon, hexagram_polygon, xcross_polygon, Sdf};
use std::f64::consts::PI;
use std::sync::Arc;

const TAU: f64 = 2.0 * PI;

pub type ScalarFn = Arc<dyn Fn([f64; 3]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn([f64; 3]) -> [f64; 3] + Send + Sync>;

/// Boundary condition kind on one embedded interface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BcKind {
    Neumann,
    Robin { zeta: f64 },
}

/// One embedded interface of a case.
#[derive(Clone)]
pub struct Interface {
    pub sdf: Sdf,
    pub bc: BcKind,
    /// A point exactly on the interface, used to freeze the constant g for
    /// Approach B.
    pub probe: [f64; 3],
}

/// A complete manufactured problem.
#[derive(Clone)]
pub struct VerificationCase {
    pub name: String,
    pub dim: usize,
    pub lower: [f64; 3],
    pub upper: [f64; 3],
    pub interfaces: Vec<Interface>,
    pub q_exact: ScalarFn,
    pub grad_q_exact: VectorFn,
    pub f: ScalarFn,
    /// Exterior Dirichlet data from q_exact; false means homogeneous.
    pub exterior_from_exact: bool,
    pub zero_mean: bool,
    pub default_grids: Vec<usize>,
    /// Analytic face flux for Approach A, where the paper provides one.
    pub approach_a_grad: Option<VectorFn>,
}

impl VerificationCase {
    /// Boundary data g at an interface point, derived from the exact
    /// solution: `g = -zeta q_exact - kappa n . grad q_exact` (zeta = 0 for
    /// Neumann), with the normal from the interface SDF.
    pub fn g_at(&self, iface: usize, x: [f64; 3]) -> f64 {
        let ifc = &self.interfaces[iface];
        let n = ifc.sdf.normal(x, self.dim).unwrap_or([0.0; 3]);
        let gq = (self.grad_q_exact)(x);
        let ndot = n[0] * gq[0] + n[1] * gq[1] + n[2] * gq[2];
        match ifc.bc {
            BcKind::Neumann => -ndot,
            BcKind::Robin { zeta } => -zeta * (self.q_exact)(x) - ndot,
        }
    }

    /// Frozen constant g for Approach B, evaluated at the interface probe.
    pub fn g_const(&self, iface: usize) -> f64 {
        self.g_at(iface, self.interfaces[iface].probe)
    }

    /// Lagrangian interface markers for Approach D (2D single-interface
    /// circular geometry): marker spacing approximately h, `beta = -g n`.
    /// Returns the markers and the segment length ds.
    pub fn markers(&self, h: f64) -> Result<(Vec<Marker>, f64), VpError> {
        if self.dim != 2 || self.interfaces.len() != 1 {
            return Err(VpError::Config(format!(
                "case {} does not support marker-based forcing",
                self.name
            )));
        }
        let (center, radius) = match self.interfaces[0].sdf {
            Sdf::Sphere { center, radius, fluid_inside: false } => (center, radius),
            _ => {
                return Err(VpError::Config(format!(
                    "case {} does not support marker-based forcing",
                    self.name
                )))
            }
        };
        let m = (TAU * radius / h).round() as usize;
        let ds = TAU * radius / m as f64;
        let mut out = Vec::with_capacity(m);
        for k in 0..m {
            let th = (k as f64 + 0.5) * TAU / m as f64;
            let x = [center[0] + radius * th.cos(), center[1] + radius * th.sin(), 0.0];
            let n = [-th.cos(), -th.sin(), 0.0];
            let g = self.g_at(0, x);
            out.push(Marker { x, beta: [-g * n[0], -g * n[1], 0.0] });
        }
        Ok((out, ds))
    }
}

/// Annulus exact solution at radius r (m = 1 slope scale).
fn annulus_q(m: f64, r: f64) -> f64 {
    let c = (3.0 / 32.0) * PI * (9.0 * (3.0 * PI / 4.0).ln() - (PI / 4.0).ln() - 4.0);
    (4.0 * r).cos() + 0.75 * PI * m * r.ln() - c
}

fn annulus_dq(m: f64, r: f64) -> f64 {
    -4.0 * (4.0 * r).sin() + 3.0 * PI * m / (4.0 * r)
}

fn annulus_base(m: f64) -> VerificationCase {
    let center = [PI, PI, 0.0];
    let (ri, ro) = (PI / 4.0, 3.0 * PI / 4.0);
    let q_exact: ScalarFn = Arc::new(move |x| {
        let r = ((x[0] - PI).powi(2) + (x[1] - PI).powi(2)).sqrt().max(1e-12);
        annulus_q(m, r)
    });
    let grad: VectorFn = Arc::new(move |x| {
        let (dx, dy) = (x[0] - PI, x[1] - PI);
        let r = (dx * dx + dy * dy).sqrt();
        if r < 1e-12 {
            return [0.0; 3];
        }
        let dq = annulus_dq(m, r);
        [dq * dx / r, dq * dy / r, 0.0]
    });
    let f: ScalarFn = Arc::new(|x| {
        let r = ((x[0] - PI).powi(2) + (x[1] - PI).powi(2)).sqrt().max(1e-12);
        16.0 * (4.0 * r).cos() + 4.0 * (4.0 * r).sin() / r
    });
    // Radial profile of the analytic Approach A forcing: 3m at r_i, m at
    // r_o, 0 beyond pi.
    let a_grad: VectorFn = Arc::new(move |x| {
        let (dx, dy) = (x[0] - PI, x[1] - PI);
        let r = (dx * dx + dy * dy).sqrt();
        if !(1e-12..=PI).contains(&r) {
            return [0.0; 3];
        }
        let prof = m * (4.0 * r / (3.0 * PI)).powi(2) * (4.0 * (1.0 - r / PI)).powi(3);
        [prof * dx / r, prof * dy / r, 0.0]
    });
    VerificationCase {
        name: String::new(),
        dim: 2,
        lower: [0.0; 3],
        upper: [TAU; 3],
        interfaces: vec![
            Interface {
                sdf: Sdf::Sphere { center, radius: ri, fluid_inside: false },
                bc: BcKind::Neumann,
                probe: [PI + ri, PI, 0.0],
            },
            Interface {
                sdf: Sdf::Sphere { center, radius: ro, fluid_inside: true },
                bc: BcKind::Neumann,
                probe: [PI + ro, PI, 0.0],
            },
        ],
        q_exact,
        grad_q_exact: grad,
        f,
        exterior_from_exact: false,
        zero_mean: true,
        default_grids: vec![32, 64, 128, 256],
        approach_a_grad: Some(a_grad),
    }
}

/// Annulus with Neumann data on both circles (slope scale m).
pub fn case_annulus_neumann(m: f64) -> VerificationCase {
    let mut c = annulus_base(m);
    c.name = "annulus-neumann".into();
    c
}

/// Annulus with Robin data (zeta = 1) on both circles.
pub fn case_annulus_robin() -> VerificationCase {
    let mut c = annulus_base(1.0);
    c.name = "annulus-robin".into();
    for i in c.interfaces.iter_mut() {
        i.bc = BcKind::Robin { zeta: 1.0 };
    }
    c.zero_mean = false;
    c
}

/// 2D geometry selector for the sin-sin manufactured family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SinSinGeometry {
    Hexagram,
    RoundedHexagram,
    Egg,
    Xcross,
    Circle,
}

/// Hexagram circumradius used throughout the 2D complex-geometry cases.
pub const HEXAGRAM_RADIUS: f64 = 1.7;
/// Corner rounding radius of the rounded hexagram.
pub const HEXAGRAM_ROUNDING: f64 = 0.15;

/// 2D case with q = sin x sin y and an embedded solid of the given shape.
pub fn case_sinsin(geometry: SinSinGeometry, bc: BcKind) -> VerificationCase {
    let center = [PI, PI];
    let (sdf, probe, geom_name) = match geometry {
        SinSinGeometry::Hexagram => {
            let p = hexagram_polygon(center, HEXAGRAM_RADIUS);
            let probe = [p.vertices[0][0], p.vertices[0][1], 0.0];
            (Sdf::Polygon(Arc::new(p)), probe, "hexagram")
        }
        SinSinGeometry::RoundedHexagram => {
            let p = hexagram_polygon(center, HEXAGRAM_RADIUS);
            let off = p.offset_inward(HEXAGRAM_ROUNDING).expect("hexagram offset is simple");
            // Edge midpoints of the offset polygon lie rho inside the rounded
            // boundary; project one outward along +x from the center line.
            let v0 = off.vertices[0];
            let v1 = off.vertices[1];
            let mid = [0.5 * (v0[0] + v1[0]), 0.5 * (v0[1] + v1[1]), 0.0];
            let sdf = Sdf::RoundedPolygon { offset: Arc::new(off), rho: HEXAGRAM_ROUNDING };
            let probe = sdf.closest_point(mid, 2).expect("rounded hexagram normal");
            (sdf, probe, "rounded-hexagram")
        }
        SinSinGeometry::Egg => {
            let p = egg_polygon(center, 1.2, 0.8);
            let probe = [p.vertices[0][0], p.vertices[0][1], 0.0];
            (Sdf::Polygon(Arc::new(p)), probe, "egg")
        }
        SinSinGeometry::Xcross => {
            let p = xcross_polygon(center, 0.4, 1.5);
            let probe = [p.vertices[0][0], p.vertices[0][1], 0.0];
            (Sdf::Polygon(Arc::new(p)), probe, "xcross")
        }
        SinSinGeometry::Circle => (
            Sdf::Sphere { center: [PI, PI, 0.0], radius: 1.5, fluid_inside: false },
            [PI + 1.5, PI, 0.0],
            "circle",
        ),
    };
    let bc_name = match bc {
        BcKind::Neumann => "neumann",
        BcKind::Robin { .. } => "robin",
    };
    VerificationCase {
        name: format!("{geom_name}-{bc_name}"),
        dim: 2,
        lower: [0.0; 3],
        upper: [TAU; 3],
        interfaces: vec![Interface { sdf, bc, probe }],
        q_exact: Arc::new(|x| x[0].sin() * x[1].sin()),
        grad_q_exact: Arc::new(|x| [x[0].cos() * x[1].sin(), x[0].sin() * x[1].cos(), 0.0]),
        f: Arc::new(|x| 2.0 * x[0].sin() * x[1].sin()),
        exterior_from_exact: true,
        zero_mean: false,
        default_grids: vec![32, 64, 128, 256],
        approach_a_grad: None,
    }
}

/// Sphere orientation: fluid inside or outside R = 3/2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SphereOrientation {
    FluidInside,
    FluidOutside,
}

/// 3D sphere case with q = r^2 + c and f = -6.
pub fn case_sphere(orientation: SphereOrientation) -> VerificationCase {
    let r0 = 1.5;
    let inside = orientation == SphereOrientation::FluidInside;
    let c = if inside { -3.0 * r0 * r0 / 5.0 } else { 0.0 };
    let q_exact: ScalarFn = Arc::new(move |x| {
        (x[0] - PI).powi(2) + (x[1] - PI).powi(2) + (x[2] - PI).powi(2) + c
    });
    VerificationCase {
        name: if inside { "sphere-in".into() } else { "sphere-out".into() },
        dim: 3,
        lower: [0.0; 3],
        upper: [TAU; 3],
        interfaces: vec![Interface {
            sdf: Sdf::Sphere { center: [PI; 3], radius: r0, fluid_inside: inside },
            bc: BcKind::Neumann,
            probe: [PI + r0, PI, PI],
        }],
        q_exact,
        grad_q_exact: Arc::new(|x| {
            [2.0 * (x[0] - PI), 2.0 * (x[1] - PI), 2.0 * (x[2] - PI)]
        }),
        f: Arc::new(|_| -6.0),
        exterior_from_exact: !inside,
        zero_mean: inside,
        default_grids: vec![16, 32, 64, 128],
        approach_a_grad: None,
    }
}

/// 3D torus case with q = -cos x cos y cos z, fluid outside.
pub fn case_torus() -> VerificationCase {
    VerificationCase {
        name: "torus".into(),
        dim: 3,
        lower: [0.0; 3],
        upper: [TAU; 3],
        interfaces: vec![Interface {
            sdf: Sdf::Torus { center: [PI; 3], r_major: 1.0, r_minor: 0.5 },
            bc: BcKind::Neumann,
            probe: [PI + 1.5, PI, PI],
        }],
        q_exact: Arc::new(|x| -x[0].cos() * x[1].cos() * x[2].cos()),
        grad_q_exact: Arc::new(|x| {
            [
                x[0].sin() * x[1].cos() * x[2].cos(),
                x[0].cos() * x[1].sin() * x[2].cos(),
                x[0].cos() * x[1].cos() * x[2].sin(),
            ]
        }),
        f: Arc::new(|x| -3.0 * x[0].cos() * x[1].cos() * x[2].cos()),
        exterior_from_exact: true,
        zero_mean: false,
        default_grids: vec![16, 32, 64],
        approach_a_grad: None,
    }
}

/// Full case catalog in CLI order.
pub fn all_cases() -> Vec<VerificationCase> {
    vec![
        case_annulus_neumann(1.0),
        case_annulus_robin(),
        case_sinsin(SinSinGeometry::Hexagram, BcKind::Neumann),
        case_sinsin(SinSinGeometry::Hexagram, BcKind::Robin { zeta: 1.0 }),
        case_sinsin(SinSinGeometry::RoundedHexagram, BcKind::Neumann),
        case_sinsin(SinSinGeometry::RoundedHexagram, BcKind::Robin { zeta: 1.0 }),
        case_sinsin(SinSinGeometry::Egg, BcKind::Neumann),
        case_sinsin(SinSinGeometry::Xcross, BcKind::Neumann),
        case_sinsin(SinSinGeometry::Circle, BcKind::Neumann),
        case_sphere(SphereOrientation::FluidInside),
        case_sphere(SphereOrientation::FluidOutside),
        case_torus(),
    ]
}

/// Looks a case up by its CLI name.
pub fn case_by_name(name: &str) -> Result<VerificationCase, VpError> {
    all_cases()
        .into_iter()
        .find(|c| c.name == name)
        .ok_or_else(|| VpError::Config(format!("unknown case: {name}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(state: &mut u64) -> f64 {
        *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*state >> 11) as f64 / (1u64 << 53) as f64
    }

    /// 4th-order central Laplacian of q_exact by finite differences.
    fn fd_laplacian(case: &VerificationCase, x: [f64; 3], e: f64) -> f64 {
        let q = &case.q_exact;
        let mut lap = 0.0;
        for a in 0..case.dim {
            let mut xs = [x; 4];
            xs[0][a] -= 2.0 * e;
            xs[1][a] -= e;
            xs[2][a] += e;
            xs[3][a] += 2.0 * e;
            lap += (-q(xs[0]) + 16.0 * q(xs[1]) - 30.0 * q(x) + 16.0 * q(xs[2]) - q(xs[3]))
                / (12.0 * e * e);
        }
        lap
    }

    #[test]
    fn manufactured_identity_all_cases() {
        // f = -laplacian(q_exact) at random fluid points, 1e-4 relative.
        let mut state = 7u64;
        for case in all_cases() {
            let mut checked = 0;
            let mut scale: f64 = 1.0;
            while checked < 100 {
                let x = [
                    0.3 + lcg(&mut state) * (TAU - 0.6),
                    0.3 + lcg(&mut state) * (TAU - 0.6),
                    if case.dim == 3 { 0.3 + lcg(&mut state) * (TAU - 0.6) } else { 0.0 },
                ];
                let fluid = case
                    .interfaces
                    .iter()
                    .map(|i| i.sdf.eval(x))
                    .fold(f64::INFINITY, f64::min)
                    > 0.1;
                if !fluid {
                    continue;
                }
                let f_fd = -fd_laplacian(&case, x, 1e-3);
                let f_cl = (case.f)(x);
                scale = scale.max(f_cl.abs());
                assert!(
                    (f_fd - f_cl).abs() <= 1e-4 * scale,
                    "{}: at {:?} fd {} vs closure {}",
                    case.name,
                    x,
                    f_fd,
                    f_cl
                );
                checked += 1;
            }
        }
    }

    #[test]
    fn g_matches_fd_directional_derivative() {
        let mut state = 99u64;
        for case in all_cases() {
            for (k, ifc) in case.interfaces.iter().enumerate() {
                let mut checked = 0;
                while checked < 100 {
                    // Random point projected onto the interface.
                    let x0 = [
                        0.5 + lcg(&mut state) * (TAU - 1.0),
                        0.5 + lcg(&mut state) * (TAU - 1.0),
                        if case.dim == 3 { 0.5 + lcg(&mut state) * (TAU - 1.0) } else { 0.0 },
                    ];
                    let Some(p) = ifc.sdf.closest_point(x0, case.dim) else { continue };
                    if ifc.sdf.eval(p).abs() > 1e-5 {
                        continue;
                    }
                    let n = ifc.sdf.normal(p, case.dim).unwrap();
                    let e = 1e-5;
                    let q = &case.q_exact;
                    let mut xp = p;
                    let mut xm = p;
                    for a in 0..case.dim {
                        xp[a] += e * n[a];
                        xm[a] -= e * n[a];
                    }
                    let ddn = (q(xp) - q(xm)) / (2.0 * e);
                    let zeta = match ifc.bc {
                        BcKind::Neumann => 0.0,
                        BcKind::Robin { zeta } => zeta,
                    };
                    let expected = -zeta * q(p) - ddn;
                    let got = case.g_at(k, p);
                    assert!(
                        (got - expected).abs() < 1e-5,
                        "{} interface {}: {} vs {}",
                        case.name,
                        k,
                        got,
                        expected
                    );
                    checked += 1;
                }
            }
        }
    }

    #[test]
    fn annulus_values() {
        let c = case_annulus_neumann(1.0);
        // q_exact at r = pi/2.
        let expect = (2.0 * PI).cos() + 0.75 * PI * (PI / 2.0).ln()
            - (3.0 / 32.0) * PI * (9.0 * (3.0 * PI / 4.0).ln() - (PI / 4.0).ln() - 4.0);
        assert!(((case_annulus_neumann(1.0).q_exact)([PI + PI / 2.0, PI, 0.0]) - expect).abs() < 1e-12);
        // f(pi/4) = 16 cos(pi) + (16/pi) sin(pi) = -16.
        assert!(((c.f)([PI + PI / 4.0, PI, 0.0]) + 16.0).abs() < 1e-10);
        // Approach A radial magnitude: 3m at r_i, m at r_o, 0 beyond pi.
        let a = c.approach_a_grad.as_ref().unwrap();
        let at = |r: f64| {
            let v = a([PI + r, PI, 0.0]);
            (v[0] * v[0] + v[1] * v[1]).sqrt()
        };
        assert!((at(PI / 4.0) - 3.0).abs() < 1e-12);
        assert!((at(3.0 * PI / 4.0) - 1.0).abs() < 1e-12);
        assert_eq!(at(PI + 0.1), 0.0);
        // Frozen Approach B constants: inner 3m, outer -m.
        assert!((c.g_const(0) - 3.0).abs() < 1e-6);
        assert!((c.g_const(1) + 1.0).abs() < 1e-6);
    }

    #[test]
    fn annulus_robin_constants() {
        let c = case_annulus_robin();
        assert!(!c.zero_mean);
        let q = |r: f64| annulus_q(1.0, r);
        assert!((c.g_const(0) - (3.0 - q(PI / 4.0))).abs() < 1e-6);
        assert!((c.g_const(1) - (-(q(3.0 * PI / 4.0) + 1.0))).abs() < 1e-6);
    }

    #[test]
    fn sphere_values() {
        let cin = case_sphere(SphereOrientation::FluidInside);
        assert!(((cin.q_exact)([PI; 3]) + 1.35).abs() < 1e-12);
        assert_eq!((cin.f)([1.0, 2.0, 3.0]), -6.0);
        // n = +e_r out of the interior fluid: g = -2R.
        assert!((cin.g_const(0) + 3.0).abs() < 1e-6);
        // Fluid outside: n = -e_r, so g flips to +2R.
        let cout = case_sphere(SphereOrientation::FluidOutside);
        assert!((cout.g_const(0) - 3.0).abs() < 1e-6);
        assert!(cin.zero_mean && !cout.zero_mean);
    }

    #[test]
    fn torus_values() {
        let c = case_torus();
        assert!(((c.f)([0.0; 3]) + 3.0).abs() < 1e-12);
        assert!(((c.q_exact)([PI; 3]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sinsin_values() {
        let c = case_sinsin(SinSinGeometry::Circle, BcKind::Neumann);
        assert!(((c.f)([PI / 2.0, PI / 2.0, 0.0]) - 2.0).abs() < 1e-12);
        // At the +x probe the normal is (-1, 0): g = cos x sin y.
        let p = [PI + 1.5, PI, 0.0];
        assert!((c.g_at(0, p) - p[0].cos() * p[1].sin()).abs() < 1e-6);
        let r = case_sinsin(SinSinGeometry::Circle, BcKind::Robin { zeta: 1.0 });
        let qe = p[0].sin() * p[1].sin();
        assert!((r.g_at(0, p) - (-qe + p[0].cos() * p[1].sin())).abs() < 1e-6);
    }

    #[test]
    fn catalog_names() {
        let names: Vec<String> = all_cases().into_iter().map(|c| c.name).collect();
        assert_eq!(names.len(), 12);
        for n in [
            "annulus-neumann",
            "annulus-robin",
            "hexagram-neumann",
            "hexagram-robin",
            "rounded-hexagram-neumann",
            "rounded-hexagram-robin",
            "egg-neumann",
            "xcross-neumann",
            "circle-neumann",
            "sphere-in",
            "sphere-out",
            "torus",
        ] {
            assert!(names.iter().any(|x| x == n), "missing {n}");
        }
        assert!(case_by_name("nonesuch").is_err());
    }

    #[test]
    fn circle_markers_spacing_and_flux() {
        let c = case_sinsin(SinSinGeometry::Circle, BcKind::Neumann);
        let h = TAU / 128.0;
        let (markers, ds) = c.markers(h).unwrap();
        assert!((ds - h).abs() < 0.5 * h);
        assert_eq!(markers.len(), (TAU * 1.5 / h).round() as usize);
        for m in markers.iter().step_by(13) {
            // beta . n = -g at the marker.
            let n = c.interfaces[0].sdf.normal(m.x, 2).unwrap();
            let g = c.g_at(0, m.x);
            let dot = m.beta[0] * n[0] + m.beta[1] * n[1];
            assert!((dot + g).abs() < 1e-10);
        }
        assert!(case_sphere(SphereOrientation::FluidInside).markers(h).is_err());
        assert!(case_annulus_neumann(1.0).markers(h).is_err());
    }
}
