//! Construction of the flux-forcing field `beta` with `beta . n = -g` on the
//! interface, by four approaches: analytic (A), constant-g times the signed
//! distance gradient (B), normal propagation of interfacial g values (C), and
//! kernel spreading from Lagrangian markers (D, negative control).

use crate::geometry::{find_interface_cells, Sdf};
use crate::grid::{CartesianGrid, CellField, FaceField};

/// Which construction produced a forcing field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApproachTag {
    A,
    B,
    C,
    D,
}

/// Face-centered flux forcing.
#[derive(Debug, Clone)]
pub struct FluxForcing {
    pub beta: FaceField,
    pub tag: ApproachTag,
}

/// Propagated interfacial g values for Approach C: the extended cell field and
/// the visited mask.
#[derive(Debug, Clone)]
pub struct GExtension {
    pub g: CellField,
    pub visited: Vec<bool>,
    pub skipped_degenerate: usize,
}

/// Approach A: `beta = kappa * grad q_tilde` sampled analytically at face
/// centers.
pub fn approach_a(
    grad_q_tilde: impl Fn([f64; 3]) -> [f64; 3],
    kappa: f64,
    grid: &CartesianGrid,
) -> FluxForcing {
    let mut beta = FaceField::sample(grid, grad_q_tilde);
    for comp in beta.comps.iter_mut() {
        for v in comp.iter_mut() {
            *v *= kappa;
        }
    }
    FluxForcing { beta, tag: ApproachTag::A }
}

/// Approach B: `beta_face = g * (phi_hi - phi_lo) / h` on interior faces,
/// zero on domain-boundary faces. Valid for spatially constant g.
pub fn approach_b(g_const: f64, phi: &CellField) -> FluxForcing {
    let g = phi.grid;
    let mut beta = FaceField::zeros(&g);
    for a in 0..g.dim {
        let d = g.face_dims(a);
        for i in 0..d[0] {
            for j in 0..d[1] {
                for k in 0..d[2] {
                    let f = [i, j, k];
                    if f[a] == 0 || f[a] == g.n {
                        continue;
                    }
                    let mut lo = f;
                    lo[a] -= 1;
                    let dphi = phi.at(f[0], f[1], f[2]) - phi.at(lo[0], lo[1], lo[2]);
                    *beta.at_mut(a, i, j, k) = g_const * dphi / g.h;
                }
            }
        }
    }
    FluxForcing { beta, tag: ApproachTag::B }
}

/// Approach C: evaluates g at the closest interface point of every interface
/// cell, propagates those values `n_prop` cells along the normal in both
/// directions (max-modulus merge on conflicts; interface cells keep their own
/// value), then forms `beta_face` from the face-averaged g and the face
/// difference of phi.
pub fn approach_c(
    g_fn: &dyn Fn([f64; 3]) -> f64,
    phi: &CellField,
    sdf: &Sdf,
    n_prop: usize,
) -> (FluxForcing, GExtension) {
    let g = phi.grid;
    let set = find_interface_cells(phi, sdf);
    let mut gc = CellField::zeros(&g);
    let mut visited = vec![false; g.num_cells()];
    let mut own = vec![false; g.num_cells()];
    for c in &set.cells {
        let idx = g.cell_index(c.idx[0], c.idx[1], c.idx[2]);
        gc.values[idx] = g_fn(c.closest);
        visited[idx] = true;
        own[idx] = true;
    }
    for c in &set.cells {
        let src = g.cell_index(c.idx[0], c.idx[1], c.idx[2]);
        let val = gc.values[src];
        let x = g.cell_center(c.idx[0], c.idx[1], c.idx[2]);
        for s in [1.0f64, -1.0] {
            for k in 1..=n_prop {
                let step = s * k as f64 * g.h;
                let target = [
                    x[0] + step * c.normal[0],
                    x[1] + step * c.normal[1],
                    x[2] + step * c.normal[2],
                ];
                if let Some(t) = g.cell_containing(target) {
                    let ti = g.cell_index(t[0], t[1], t[2]);
                    if own[ti] {
                        continue;
                    }
                    if !visited[ti] || val.abs() > gc.values[ti].abs() {
                        gc.values[ti] = val;
                    }
                    visited[ti] = true;
                }
            }
        }
    }
    let mut beta = FaceField::zeros(&g);
    for a in 0..g.dim {
        let d = g.face_dims(a);
        for i in 0..d[0] {
            for j in 0..d[1] {
                for k in 0..d[2] {
                    let f = [i, j, k];
                    if f[a] == 0 || f[a] == g.n {
                        continue;
                    }
                    let mut lo = f;
                    lo[a] -= 1;
                    let gl = gc.at(lo[0], lo[1], lo[2]);
                    let gr = gc.at(f[0], f[1], f[2]);
                    let dphi = phi.at(f[0], f[1], f[2]) - phi.at(lo[0], lo[1], lo[2]);
                    *beta.at_mut(a, i, j, k) = 0.5 * (gl + gr) * dphi / g.h;
                }
            }
        }
    }
    (
        FluxForcing { beta, tag: ApproachTag::C },
        GExtension { g: gc, visited, skipped_degenerate: set.skipped_degenerate },
    )
}

/// Interface marker carrying the pointwise forcing vector `beta = -g n`.
#[derive(Debug, Clone, Copy)]
pub struct Marker {
    pub x: [f64; 3],
    pub beta: [f64; 3],
}

/// Spreading kernel for Approach D.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    TopHat,
    Spline6,
}

/// One-point top-hat weight: 1 inside half a cell, 1/2 exactly on the edge.
pub fn w_top_hat(r: f64) -> f64 {
    let r = r.abs();
    if r < 0.5 {
        1.0
    } else if r == 0.5 {
        0.5
    } else {
        0.0
    }
}

/// Six-point quintic spline weight with support `|r| < 3`.
pub fn w_spline6(r: f64) -> f64 {
    let r = r.abs();
    let s = r + 3.0;
    if r < 1.0 {
        (-5.0 * s.powi(5) + 90.0 * s.powi(4) - 630.0 * s.powi(3) + 2130.0 * s * s
            - 3465.0 * s
            + 2193.0)
            / 60.0
    } else if r < 2.0 {
        (5.0 * s.powi(5) - 120.0 * s.powi(4) + 1140.0 * s.powi(3) - 5340.0 * s * s
            + 12270.0 * s
            - 10974.0)
            / 120.0
    } else if r < 3.0 {
        (-s.powi(5) + 30.0 * s.powi(4) - 360.0 * s.powi(3) + 2160.0 * s * s - 6480.0 * s
            + 7776.0)
            / 120.0
    } else {
        0.0
    }
}

fn kernel_weight(kernel: Kernel, r: f64) -> f64 {
    match kernel {
        Kernel::TopHat => w_top_hat(r),
        Kernel::Spline6 => w_spline6(r),
    }
}

/// Approach D: spreads marker forcing vectors to faces with a tensor-product
/// kernel, scaled by the marker segment length over h.
pub fn approach_d(markers: &[Marker], ds: f64, kernel: Kernel, grid: &CartesianGrid) -> FluxForcing {
    let g = *grid;
    let mut beta = FaceField::zeros(&g);
    let support = match kernel {
        Kernel::TopHat => 0.5,
        Kernel::Spline6 => 3.0,
    };
    // Index range on a 1D coordinate line `lower + (i + off) h` whose points
    // fall within the kernel support of xm.
    let range = |xm: f64, off: f64, count: usize, lower: f64| {
        let lo = ((xm - support * g.h - lower) / g.h - off).floor().max(0.0) as usize;
        let hi = (((xm + support * g.h - lower) / g.h - off).ceil() as isize + 1)
            .clamp(0, count as isize) as usize;
        lo..hi
    };
    for m in markers {
        for a in 0..g.dim {
            let scale = m.beta[a] * ds / g.h;
            if scale == 0.0 {
                continue;
            }
            let d = g.face_dims(a);
            // Per axis the face coordinate is on the face line for `a` and on
            // cell-center lines otherwise.
            let offs = |ax: usize| if ax == a { 0.0 } else { 0.5 };
            let ri = range(m.x[0], offs(0), d[0], g.lower[0]);
            let rj = range(m.x[1], offs(1), d[1], g.lower[1]);
            let rk = if g.dim == 3 { range(m.x[2], offs(2), d[2], g.lower[2]) } else { 0..1 };
            for i in ri {
                let wi = kernel_weight(kernel, (g.lower[0] + (i as f64 + offs(0)) * g.h - m.x[0]) / g.h);
                if wi == 0.0 {
                    continue;
                }
                for j in rj.clone() {
                    let wj =
                        kernel_weight(kernel, (g.lower[1] + (j as f64 + offs(1)) * g.h - m.x[1]) / g.h);
                    if wj == 0.0 {
                        continue;
                    }
                    for k in rk.clone() {
                        let wk = if g.dim == 3 {
                            kernel_weight(
                                kernel,
                                (g.lower[2] + (k as f64 + offs(2)) * g.h - m.x[2]) / g.h,
                            )
                        } else {
                            1.0
                        };
                        *beta.at_mut(a, i, j, k) += scale * wi * wj * wk;
                    }
                }
            }
        }
    }
    FluxForcing { beta, tag: ApproachTag::D }
}

/// The per-interface source contribution `div(chi beta) - chi div(beta)`, both
/// divergences by the two-point face stencil.
pub fn forcing_divergence_term(
    chi_cell: &CellField,
    chi_face: &FaceField,
    beta: &FaceField,
) -> CellField {
    let g = chi_cell.grid;
    let mut out = CellField::zeros(&g);
    for i in 0..g.n {
        for j in 0..g.n {
            for k in 0..g.nk() {
                let chi = chi_cell.at(i, j, k);
                let mut acc = 0.0;
                for a in 0..g.dim {
                    let mut hi = [i, j, k];
                    hi[a] += 1;
                    let (bl, bh) = (beta.at(a, i, j, k), beta.at(a, hi[0], hi[1], hi[2]));
                    let (cl, ch) = (chi_face.at(a, i, j, k), chi_face.at(a, hi[0], hi[1], hi[2]));
                    acc += (ch * bh - cl * bl) / g.h - chi * (bh - bl) / g.h;
                }
                *out.at_mut(i, j, k) = acc;
            }
        }
    }
    out
}

/// Full right-hand side for a single interface:
/// `S = (1 - chi) f + div(chi beta) - chi div(beta)`.
pub fn vp_rhs(f: &CellField, chi_cell: &CellField, chi_face: &FaceField, beta: &FluxForcing) -> CellField {
    let mut s = forcing_divergence_term(chi_cell, chi_face, &beta.beta);
    for (sv, (&fv, &cv)) in s.values.iter_mut().zip(f.values.iter().zip(chi_cell.values.iter())) {
        *sv += (1.0 - cv) * fv;
    }
    s
}
