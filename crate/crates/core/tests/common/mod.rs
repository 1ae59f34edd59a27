#![allow(dead_code)]

use wavesrc::source::*;

pub fn bump(start: f64, end: f64) -> TemporalProfile {
    TemporalProfile::Bump { start, end }
}

pub fn ball(shape: RadialShape) -> SpatialProfile {
    SpatialProfile::Ball {
        shape,
        center: [0.0; 3],
        amplitude: 1.0,
    }
}

pub fn gaussian(sigma: f64, radius: f64) -> RadialShape {
    RadialShape::TruncatedGaussian { sigma, radius }
}

/// Truncated Gaussian (σ = 0.2, radius 1) times a bump on (0, 1).
pub fn gaussian_source() -> SourceSpec {
    separable(gaussian(0.2, 1.0), bump(0.0, 1.0))
}

pub fn separable(shape: RadialShape, time: TemporalProfile) -> SourceSpec {
    let radius = shape.radius();
    let t0 = time.support().1;
    SourceSpec {
        kind: SourceKind::SeparableXt,
        terms: vec![SourceTerm {
            space: ball(shape),
            time,
        }],
        support_radius: radius,
        support_time: t0,
    }
}

/// Smooth polynomial bump `(1 − r²/9)⁶` times a bump on (0, 1), as a
/// general source.
pub fn bump_general() -> SourceSpec {
    let mut s = separable(RadialShape::PolynomialBump { radius: 3.0, power: 6 }, bump(0.0, 1.0));
    s.kind = SourceKind::General;
    s
}

/// In-plane and vertical truncated Gaussians (σ = 0.2, radius 1) times a
/// bump on (0, 1).
pub fn planar_source() -> SourceSpec {
    SourceSpec {
        kind: SourceKind::Planar,
        terms: vec![SourceTerm {
            space: SpatialProfile::Cylinder {
                inplane: gaussian(0.2, 1.0),
                inplane_center: [0.0, 0.0],
                vertical: gaussian(0.2, 1.0),
                vertical_center: 0.0,
                amplitude: 1.0,
            },
            time: bump(0.0, 1.0),
        }],
        support_radius: 2f64.sqrt(),
        support_time: 1.0,
    }
}

pub fn corpus_config(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
}
