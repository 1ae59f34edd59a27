mod common;

use common::*;
use ndarray::Array3;
use std::sync::OnceLock;
use wavesrc::forward::*;
use wavesrc::planar::*;
use wavesrc::probe::{relative_l2, SampledSignal};
use wavesrc::spectral::{Axis, SimulationGrid};
use wavesrc::Complex64;

const B: f64 = 3.0;

fn axes() -> (Axis, Axis) {
    (Axis::centered(5.0, 64).unwrap(), Axis::new(0.5, 4.0, 32).unwrap())
}

fn recovered() -> &'static PlanarSamples {
    static S: OnceLock<PlanarSamples> = OnceLock::new();
    S.get_or_init(|| {
        let src = planar_source();
        let grid = SimulationGrid::with_time_step(6.0, 116, 4.5, 0.025, 1.0, 1.5).unwrap();
        let field = solve(&src, &grid).unwrap();
        let ds = extract_boundary(&field, 1.5, SphereResolution { n_theta: 24, n_phi: 48 }).unwrap();
        let vert = gaussian(0.2, 1.0);
        let g = SampledSignal::from_fn(-1.0, 1.0, 401, |z| vert.value(z.abs())).unwrap();
        let (inplane, time) = axes();
        extract_fhat_planar(&ds, &g, B, 1e-6, &inplane, &time).unwrap()
    })
}

#[test]
fn recovered_transform_matches_the_product_closed_form() {
    let src = planar_source();
    let s = recovered();
    assert!(s.n_valid() > 200);
    let (mut num, mut den) = (0.0, 0.0);
    for e in s.entries.iter().filter(|e| e.valid) {
        let want = src.planar_transform(e.xi1, e.xi2, e.omega);
        num += (e.value - want).norm_sqr();
        den += want.norm_sqr();
        assert!(e.xi1.hypot(e.xi2) <= e.omega.abs() * (1.0 + 1e-12));
        assert!(e.xi3.abs() <= B);
    }
    let err = (num / den).sqrt();
    assert!(err <= 3e-2, "relative error {err:e}");
    assert!(s.conjugate_residual() <= 1e-8);
}

#[test]
fn degree_eight_fill_recovers_the_gap() {
    let src = planar_source();
    let filled = continuation_fill(recovered(), B, 8).unwrap();
    let (mut num, mut den, mut n) = (0.0, 0.0, 0);
    for e in filled.entries.iter().filter(|e| e.extrapolated) {
        let want = src.planar_transform(e.xi1, e.xi2, e.omega);
        num += (e.value - want).norm_sqr();
        den += want.norm_sqr();
        n += 1;
        assert!(e.xi1.hypot(e.xi2) >= e.omega.abs());
    }
    assert!(n > 0);
    let err = (num / den).sqrt();
    assert!(err <= 1e-1, "gap error {err:e}");
}

#[test]
fn closed_form_source_is_reconstructed_from_the_kept_region() {
    // f = e^{−|x̃|²/2} e^{−t²/18} cos(2.5t), whose transform is
    // e^{−|ξ̃|²/2} · 1.5(e^{−4.5(ω−2.5)²} + e^{−4.5(ω+2.5)²}).
    let inplane = Axis::centered(9.0, 32).unwrap();
    let time = Axis::centered(18.0, 64).unwrap();
    let b = 4.0;
    let fhat = |a: f64, c: f64, w: f64| {
        let t = 1.5 * ((-4.5 * (w - 2.5).powi(2)).exp() + (-4.5 * (w + 2.5).powi(2)).exp());
        Complex64::new((-0.5 * (a * a + c * c)).exp() * t, 0.0)
    };
    // The fill only creates the gap entries; they then get exact values so
    // that the inversion alone is tested.
    let mut filled = continuation_fill(&PlanarSamples::from_fn(inplane, time, b, fhat), b, 0).unwrap();
    for e in filled.entries.iter_mut().filter(|e| e.extrapolated) {
        e.value = fhat(e.xi1, e.xi2, e.omega);
    }
    let (rec, report) = invert_planar(&filled, b).unwrap();
    let (xs, ts) = (inplane.nodes(), time.nodes());
    let truth = Array3::from_shape_fn((32, 32, 64), |(i, j, q)| {
        (-0.5 * (xs[i] * xs[i] + xs[j] * xs[j])).exp() * (-ts[q] * ts[q] / 18.0).exp() * (2.5 * ts[q]).cos()
    });
    let err = relative_l2(rec.iter(), truth.iter());
    assert!(err <= 5e-2, "relative L2 error {err:e}");
    assert!(report.kept_fill > 0.0);
    let sum = report.kept + report.kept_fill + report.discarded();
    assert!((sum - report.total).abs() <= 1e-10 * report.total);
}
