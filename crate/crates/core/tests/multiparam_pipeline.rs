mod common;

use common::*;
use ndarray::Array4;
use std::sync::OnceLock;
use wavesrc::forward::*;
use wavesrc::multiparam::*;
use wavesrc::probe::*;
use wavesrc::spectral::{Axis, SimulationGrid};
use wavesrc::Complex64;

const BIG_LAMBDA: f64 = 3.0;

fn space_axis() -> Axis {
    Axis::centered(3.5, 32).unwrap()
}

/// Noise-free traces of the σ = 0.2 Gaussian source on a 16-level ladder
/// for Λ = 3. Every other level is the 8-level ladder.
fn sweep16() -> &'static LambdaSweep {
    static SWEEP: OnceLock<LambdaSweep> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let src = gaussian_source();
        let template = SimulationGrid::with_time_step(7.0, 128, 2.0, 0.025, 9.0, 1.0).unwrap();
        let quad = SphereQuadrature::new(1.0, 16, 32).unwrap();
        let lambdas = lambda_ladder(BIG_LAMBDA, 16).unwrap();
        sweep_forward(&src, &template, &lambdas, &quad).unwrap()
    })
}

fn cones_with(levels: usize) -> ConeSamples4D {
    let full = sweep16();
    let step = 16 / levels;
    let pick: Vec<usize> = (1..=levels).map(|j| j * step - 1).collect();
    let sweep = LambdaSweep::new(
        pick.iter().map(|&i| full.lambdas[i]).collect(),
        pick.iter().map(|&i| full.datasets[i].clone()).collect(),
    )
    .unwrap();
    assert_eq!(sweep.lambdas, lambda_ladder(BIG_LAMBDA, levels).unwrap());
    extract_fhat_cones(&sweep, &space_axis()).unwrap()
}

fn cones() -> &'static ConeSamples4D {
    static CONES: OnceLock<ConeSamples4D> = OnceLock::new();
    CONES.get_or_init(|| cones_with(8))
}

fn resampling_error(cones: &ConeSamples4D) -> f64 {
    let src = gaussian_source();
    let time = Axis::new(0.5, 2.0, 32).unwrap();
    let g4 = resample_to_grid4(cones, &time).unwrap();
    assert!(g4.n_covered() > 0);
    let (mut num, mut den) = (0.0, 0.0);
    for ((idx, v), c) in g4.values.indexed_iter().zip(g4.covered.iter()) {
        if !*c {
            assert_eq!(*v, Complex64::new(0.0, 0.0));
            continue;
        }
        let (a, b, d, q) = idx;
        let s = g4.space;
        let want = src.transform([s.freq(a), s.freq(b), s.freq(d)], time.freq(q));
        num += (v - want).norm_sqr();
        den += want.norm_sqr();
    }
    (num / den).sqrt()
}

#[test]
fn cone_values_match_the_product_transform() {
    let src = gaussian_source();
    let c = cones();
    let peak = src.transform([0.0; 3], 0.0).norm();
    let mut worst = 0.0f64;
    for e in &c.entries {
        let want = src.transform(e.xi, e.omega);
        worst = worst.max((e.value - want).norm() / peak);
        let w2 = c.lambdas[e.lambda_index] * e.xi.iter().map(|v| v * v).sum::<f64>();
        assert!((e.omega * e.omega - w2).abs() <= 1e-12 * w2.max(1.0));
    }
    assert!(worst <= 1e-2, "max relative error {worst:e}");
    assert!(c.conjugate_residual() <= 1e-8);
}

// The monotone interpolant cannot rise above the conjugate pair ±√λ₁|ξ|
// bracketing ω = 0, where |F̂| peaks; that band dominates the error and
// shrinks with the first level.
#[test]
fn resampled_transform_matches_closed_form_on_the_covered_region() {
    let e8 = resampling_error(cones());
    let e16 = resampling_error(&cones_with(16));
    assert!(e8 <= 6e-2, "8 levels: relative L2 error {e8:e}");
    assert!(e16 <= 3e-2, "16 levels: relative L2 error {e16:e}");
    assert!(e16 < 0.5 * e8);
}

#[test]
fn cone_values_decay_fast_in_frequency() {
    let c = cones();
    let r_max = c
        .entries
        .iter()
        .map(|e| e.xi.iter().map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max);
    // Every frequency on the outermost shell, upper half of the cone range.
    let mut pts: Vec<(f64, f64)> = c
        .entries
        .iter()
        .filter(|e| {
            let r2 = e.xi.iter().map(|v| v * v).sum::<f64>();
            (r2 - r_max).abs() < 1e-9 && e.omega > 0.0 && e.lambda_index >= 3
        })
        .map(|e| (e.omega.ln(), e.value.norm().ln()))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert!(pts.len() >= 5);
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0 / n, b + p.1 / n));
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    assert!(slope <= -2.5, "log-log slope {slope}");
}

#[test]
fn single_level_cones_are_the_separable_identity() {
    let src = gaussian_source();
    let grid = SimulationGrid::with_time_step(4.5, 80, 3.5, 0.025, 1.0, 1.0).unwrap();
    let quad = SphereQuadrature::new(1.0, 12, 24).unwrap();
    let sweep = sweep_forward(&src, &grid, &[1.0], &quad).unwrap();
    let axis = Axis::centered(7.0, 64).unwrap();
    let cones = extract_fhat_cones(&sweep, &axis).unwrap();

    let g = bump(0.0, 1.0);
    let g = SampledSignal::from_fn(0.0, 1.0, 401, |t| g.value(t)).unwrap();
    let ip1 = extract_fhat(&sweep.datasets[0], &g, 1.0, 1e-6, &axis).unwrap();
    let mut matched = 0;
    for e in &ip1.entries {
        let cone = cones
            .entries
            .iter()
            .find(|c| c.index == e.index && (c.omega - e.omega).abs() <= 1e-12 * (1.0 + e.omega.abs()))
            .expect("same frequency set");
        let via_ip1 = e.value * ghat(&g, e.omega).unwrap();
        assert!((cone.value - via_ip1).norm() <= 1e-10 * via_ip1.norm().max(1e-3));
        matched += 1;
    }
    assert!(matched > 20);
    // Each ξ also appears as −ξ on the ω < 0 half.
    assert_eq!(cones.entries.len(), 2 * matched - 1);
}

#[test]
fn closed_form_source_is_reconstructed_from_the_cone_region() {
    // F = e^{−|x|²/2} e^{−t²/200}, whose transform is e^{−|ξ|²/2}·10e^{−50ω²}.
    let space = Axis::centered(12.0, 48).unwrap();
    let time = Axis::centered(60.0, 32).unwrap();
    let big = 4.0;
    let g4 = Grid4Samples::from_fn(space, time, big, |xi, w| {
        let r2 = xi.iter().map(|v| v * v).sum::<f64>();
        Complex64::new((-0.5 * r2).exp() * 10.0 * (-50.0 * w * w).exp(), 0.0)
    });
    let (rec, report) = invert4(&g4, big).unwrap();
    let (xs, ts) = (space.nodes(), time.nodes());
    let truth = Array4::from_shape_fn((48, 48, 48, 32), |(a, b, c, q)| {
        (-0.5 * (xs[a] * xs[a] + xs[b] * xs[b] + xs[c] * xs[c])).exp() * (-ts[q] * ts[q] / 200.0).exp()
    });
    let err = relative_l2(rec.iter(), truth.iter());
    assert!(err <= 5e-2, "relative L2 error {err:e}");
    assert!((report.kept + report.discarded_e1 + report.discarded_e2 - report.total).abs() <= 1e-10 * report.total);
}
