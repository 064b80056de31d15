//! Indicator functions marking the solid region: a sine-smoothed continuous
//! ramp and a sharp discontinuous step, both driven by the signed distance.

use crate::grid::{cell_to_face, CartesianGrid, CellField, FaceField};

/// Which indicator to use and, for the continuous kind, the smearing width in
/// cells on either side of the interface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IndicatorKind {
    Continuous,
    Discontinuous,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndicatorConfig {
    pub kind: IndicatorKind,
    /// Smearing width in cells; ignored for the discontinuous kind.
    pub n_smear: f64,
}

impl Default for IndicatorConfig {
    fn default() -> Self {
        Self { kind: IndicatorKind::Continuous, n_smear: 1.0 }
    }
}

/// Continuous indicator: 1 deep in the solid, a sine-smoothed ramp across the
/// band `|phi| <= n_smear * h`, 0 in the fluid.
pub fn chi_continuous(phi: f64, n_smear: f64, h: f64) -> f64 {
    let w = n_smear * h;
    if phi < -w {
        1.0
    } else if phi.abs() <= w {
        let t = phi / w;
        1.0 - 0.5 * (1.0 + t + (std::f64::consts::PI * t).sin() / std::f64::consts::PI)
    } else {
        0.0
    }
}

/// Discontinuous indicator: 1 in the solid, 1/2 exactly on the zero level
/// set, 0 in the fluid.
pub fn chi_discontinuous(phi: f64) -> f64 {
    if phi < 0.0 {
        1.0
    } else if phi == 0.0 {
        0.5
    } else {
        0.0
    }
}

fn chi_value(phi: f64, config: &IndicatorConfig, h: f64) -> f64 {
    match config.kind {
        IndicatorKind::Continuous => chi_continuous(phi, config.n_smear, h),
        IndicatorKind::Discontinuous => chi_discontinuous(phi),
    }
}

/// Evaluates the indicator at every cell from a sampled signed distance and
/// interpolates it to faces. Also returns the face diffusion blend
/// `kappa (1 - chi) + eta chi`.
pub fn chi_fields(
    phi: &CellField,
    config: &IndicatorConfig,
    kappa_face: &FaceField,
    eta: f64,
) -> (CellField, FaceField, FaceField) {
    let g = phi.grid;
    let chi_cell = CellField {
        grid: g,
        values: phi.values.iter().map(|&p| chi_value(p, config, g.h)).collect(),
    };
    let chi_face = cell_to_face(&chi_cell);
    let mut blend = FaceField::zeros(&g);
    for a in 0..g.dim {
        for (idx, b) in blend.comps[a].iter_mut().enumerate() {
            let c = chi_face.comps[a][idx];
            let k = kappa_face.comps[a][idx];
            *b = k * (1.0 - c) + eta * c;
        }
    }
    (chi_cell, chi_face, blend)
}

/// Convenience for constant kappa.
pub fn kappa_face_constant(grid: &CartesianGrid, kappa: f64) -> FaceField {
    let mut f = FaceField::zeros(grid);
    for a in 0..grid.dim {
        for v in f.comps[a].iter_mut() {
            *v = kappa;
        }
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn continuous_branches() {
        let h = 0.1;
        assert_eq!(chi_continuous(-2.0 * h, 1.0, h), 1.0);
        assert!((chi_continuous(0.0, 1.0, h) - 0.5).abs() < 1e-15);
        // phi = -n_smear h / 2: ramp value 1 - (1/2)(1/2 - 1/pi).
        let expected = 1.0 - 0.5 * (0.5 - 1.0 / PI);
        assert!((chi_continuous(-0.5 * h, 1.0, h) - expected).abs() < 1e-15);
        assert!((expected - 0.9092).abs() < 5e-4);
        assert_eq!(chi_continuous(1.5 * h, 1.0, h), 0.0);
    }

    #[test]
    fn discontinuous_branches() {
        assert_eq!(chi_discontinuous(-0.3), 1.0);
        assert_eq!(chi_discontinuous(0.0), 0.5);
        assert_eq!(chi_discontinuous(1e-300), 0.0);
    }

    #[test]
    fn continuous_limits_to_discontinuous() {
        for &phi in &[-0.31, -0.07, 0.02, 0.4] {
            let target = chi_discontinuous(phi);
            let mut prev_gap = f64::INFINITY;
            for &ns in &[1.0, 0.1, 0.01] {
                let gap = (chi_continuous(phi, ns, 1.0) - target).abs();
                assert!(gap <= prev_gap + 1e-15);
                prev_gap = gap;
            }
            assert!(prev_gap < 1e-6, "phi={phi}, gap={prev_gap}");
        }
    }

    #[test]
    fn monotone_in_phi() {
        let h = 0.05;
        let mut prev = f64::INFINITY;
        let mut t = -3.0 * h;
        while t <= 3.0 * h {
            let c = chi_continuous(t, 1.0, h);
            assert!(c <= prev + 1e-15);
            assert!((0.0..=1.0).contains(&c));
            prev = c;
            t += h / 64.0;
        }
    }

    #[test]
    fn blend_limits() {
        use crate::grid::{CartesianGrid, CellField};
        let g = CartesianGrid::build([0.0; 3], [1.0; 3], 4, 2).unwrap();
        let kf = kappa_face_constant(&g, 2.0);
        let cfg = IndicatorConfig::default();

        let all_fluid = CellField::sample(&g, |_| 10.0);
        let (chi, _, blend) = chi_fields(&all_fluid, &cfg, &kf, 1e-8);
        assert!(chi.values.iter().all(|&c| c == 0.0));
        assert!(blend.comps.iter().flatten().all(|&b| (b - 2.0).abs() < 1e-15));

        let all_solid = CellField::sample(&g, |_| -10.0);
        let (chi, _, blend) = chi_fields(&all_solid, &cfg, &kf, 1e-8);
        assert!(chi.values.iter().all(|&c| c == 1.0));
        assert!(blend.comps.iter().flatten().all(|&b| (b - 1e-8).abs() < 1e-22));
    }

    #[test]
    fn discontinuous_face_straddle() {
        // A planar interface between two cell columns: the face between a
        // solid cell (chi 1) and a fluid cell (chi 0) interpolates to 1/2.
        use crate::grid::{cell_to_face, CartesianGrid, CellField};
        let g = CartesianGrid::build([0.0; 3], [4.0; 3], 4, 2).unwrap();
        let phi = CellField::sample(&g, |x| x[0] - 2.0);
        let chi = CellField {
            grid: g,
            values: phi.values.iter().map(|&p| chi_discontinuous(p)).collect(),
        };
        let cf = cell_to_face(&chi);
        assert_eq!(cf.at(0, 2, 1, 0), 0.5);
        assert_eq!(cf.at(0, 1, 1, 0), 1.0);
        assert_eq!(cf.at(0, 3, 1, 0), 0.0);
    }
}
