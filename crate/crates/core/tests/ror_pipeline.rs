use powermap::ror::*;
use powermap::scoring::ScoringRule;
use powermap::testcases::TestCaseId;
use powermap::{make_case, Seed};
use powermap::power::{estimate_delta_with, EstimateOptions};
use rand_distr::{Distribution as _, StudentT};

fn synthetic_grid() -> SweepGrid {
    SweepGrid::new((4..=12).map(|e| 1 << e).collect(), (4..=14).map(|e| 1 << e).collect(), 30, 0.05).unwrap()
}

fn wave(x: f64, y: f64) -> f64 {
    0.5 + 0.3 * (x / 2.5).sin() * (y / 3.0).cos() + 0.02 * y
}

fn wave_surface() -> PowerSurface {
    PowerSurface::from_fn(synthetic_grid(), TestCaseId::NormalSingleMeanUp, ScoringRule::Nll, |d, m| {
        Some(wave((d as f64).log2(), (m as f64).log2()))
    })
}

#[test]
fn spline_midpoints_stay_near_surrounding_nodes() {
    let smooth = smooth_surface(&wave_surface(), 0.0).unwrap();
    let mut worst = 0.0f64;
    for i in 4..12 {
        for j in 4..14 {
            let (x, y) = (i as f64, j as f64);
            let corners = [wave(x, y), wave(x + 1.0, y), wave(x, y + 1.0), wave(x + 1.0, y + 1.0)];
            let lo = corners.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = corners.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let v = smooth.eval(x + 0.5, y + 0.5);
            worst = worst.max(lo - v).max(v - hi);
            // Dense-resample oracle: the analytic surface itself.
            assert!((v - wave(x + 0.5, y + 0.5)).abs() < 0.05, "({x}, {y})");
        }
    }
    assert!(worst <= 0.1, "{worst}");
}

#[test]
fn contours_separate_inside_from_outside() {
    let smooth = smooth_surface(&wave_surface(), 0.0).unwrap();
    let res = DEFAULT_RESOLUTION;
    let set = surface_contours(&smooth, &DEFAULT_LEVELS, res).unwrap();
    let [x0, x1, y0, y1] = smooth.bounds();
    let (nx, ny) = smooth.grid_shape();
    let (hx, hy) = ((x1 - x0) / ((nx - 1) * res) as f64, (y1 - y0) / ((ny - 1) * res) as f64);
    let cell = hx.hypot(hy);
    for level in DEFAULT_LEVELS {
        let lines = &set.get(level).unwrap().polylines;
        let vertices: Vec<[f64; 2]> = lines.iter().flatten().copied().collect();
        for p in &vertices {
            assert!(p[0] >= x0 - 1e-9 && p[0] <= x1 + 1e-9 && p[1] >= y0 - 1e-9 && p[1] <= y1 + 1e-9);
        }
        let near_line = |x: f64, y: f64| vertices.iter().any(|v| (v[0] - x).hypot(v[1] - y) <= cell);
        let (ni, nj) = ((nx - 1) * res, (ny - 1) * res);
        let at = |i: usize, j: usize| (x0 + i as f64 * hx, y0 + j as f64 * hy);
        let edges = (0..=ni)
            .flat_map(|i| (0..=nj).map(move |j| (i, j)))
            .flat_map(|(i, j)| [(i < ni).then_some(((i, j), (i + 1, j))), (j < nj).then_some(((i, j), (i, j + 1)))])
            .flatten();
        for (a, b) in edges {
            let (pa, pb) = (at(a.0, a.1), at(b.0, b.1));
            if (smooth.eval(pa.0, pa.1) >= level) != (smooth.eval(pb.0, pb.1) >= level) {
                let mid = ((pa.0 + pb.0) / 2.0, (pa.1 + pb.1) / 2.0);
                assert!(near_line(mid.0, mid.1), "level {level}: crossing at {mid:?} has no contour");
            }
        }
    }
}

#[test]
fn log_ramp_contour_is_horizontal() {
    let grid = synthetic_grid();
    let surface = PowerSurface::from_fn(grid, TestCaseId::NormalSingleMeanUp, ScoringRule::Nll, |_, m| {
        Some((m as f64).log2() / 14.0)
    });
    let smooth = smooth_surface(&surface, 0.0).unwrap();
    let set = surface_contours(&smooth, &[0.5], DEFAULT_RESOLUTION).unwrap();
    let cell = 1.0 / DEFAULT_RESOLUTION as f64;
    let lines = &set.get(0.5).unwrap().polylines;
    assert!(!lines.is_empty());
    for p in lines.iter().flatten() {
        assert!((p[1] - 7.0).abs() <= cell, "{p:?}");
    }
    let xs: Vec<f64> = lines.iter().flatten().map(|p| p[0]).collect();
    assert!(xs.iter().cloned().fold(f64::INFINITY, f64::min) <= 4.0 + 1e-9);
    assert!(xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) >= 12.0 - 1e-9);
}

fn small_grid(m: &[usize]) -> SweepGrid {
    SweepGrid::new(vec![16, 64], m.to_vec(), 30, 0.05).unwrap()
}

#[test]
fn nll_cells_sit_at_target_power() {
    // K well above the default so the band reflects tuning, not MC noise.
    let grid = small_grid(&[16, 64]);
    for id in [TestCaseId::NormalAllStdUp, TestCaseId::FullCovExtra, TestCaseId::ExpSingleMeanUp, TestCaseId::MixtureMissing] {
        let s = sweep(id, &ScoringRule::Nll, &grid, 20_000, Seed(2023)).unwrap();
        for c in &s.cells {
            let p = c.power.unwrap();
            assert!((p - 0.8).abs() <= 0.05, "{id:?} d={} m={}: {p}", c.d, c.m);
        }
        let summary = summary_max_mean(std::slice::from_ref(&s));
        assert!((summary[0].value.unwrap() - 0.8).abs() <= 0.05);
    }
}

#[test]
fn crps_q_is_blind_to_missing_correlation() {
    let s = sweep(TestCaseId::FullCovMissing, &ScoringRule::crps_q(), &small_grid(&[16, 64, 256]), 1000, Seed(2023)).unwrap();
    for c in &s.cells {
        assert!(c.power.unwrap() <= 0.15, "d={} m={}: {:?}", c.d, c.m, c.power);
    }
}

#[test]
fn variogram_has_no_reliable_region_for_a_single_mean_shift() {
    let grid = small_grid(&[16, 64, 256]);
    let s = sweep(TestCaseId::NormalSingleMeanUp, &ScoringRule::Variogram { p: 1.0 }, &grid, 1000, Seed(2023)).unwrap();
    let smooth = smooth_surface(&s, 0.0).unwrap();
    let set = surface_contours(&smooth, &[0.5, 0.8], DEFAULT_RESOLUTION).unwrap();
    // No contour and every node below the level means the region is empty.
    for level in [0.5, 0.8] {
        assert!(set.get(level).unwrap().polylines.is_empty(), "level {level}");
        assert!(s.cells.iter().all(|c| c.power.unwrap() < level));
    }
}

#[test]
fn identity_case_summary_is_near_alpha() {
    let grid = small_grid(&[16, 64]);
    let opts = SweepOptions { k: 1000, seed: Seed(7), ..Default::default() };
    let id = TestCaseId::NormalAllStdUp;
    let eps: Vec<_> = grid.d_values.iter().map(|_| Ok(id.identity_eps())).collect();
    for rule in [ScoringRule::crps_q(), ScoringRule::EsPartial { p: 1.0 }, ScoringRule::Nll] {
        let s = sweep_with(id, &rule, &grid, &opts, &eps).unwrap();
        let v = summary_max_mean(std::slice::from_ref(&s))[0].value.unwrap();
        assert!((v - 0.05).abs() < 0.06, "{rule}: {v}");
    }
}

#[test]
fn sweeps_are_bitwise_reproducible() {
    let grid = small_grid(&[16, 32]);
    let run = || sweep(TestCaseId::BlockCovMissing, &ScoringRule::EsPartial { p: 1.0 }, &grid, 200, Seed(5)).unwrap();
    let (a, b) = (run(), run());
    for (x, y) in a.cells.iter().zip(&b.cells) {
        assert_eq!(x.power.map(f64::to_bits), y.power.map(f64::to_bits));
        assert_eq!(x.mean.map(f64::to_bits), y.mean.map(f64::to_bits));
    }
}

#[test]
fn gaussian_gap_passes_the_qq_check() {
    let eps = 0.9079;
    let case = make_case(TestCaseId::NormalSingleMeanUp, 16, eps).unwrap();
    let opts = EstimateOptions { retain_deltas: true, ..Default::default() };
    let s = estimate_delta_with(&case, &ScoringRule::Nll, 1, 1000, Seed(2023), opts).unwrap();
    let r = qq_diagnostic(s.deltas.as_ref().unwrap(), &QqOptions::default()).unwrap();
    assert!(r.max_gap_sigma < 0.05, "{}", r.max_gap_sigma);
    assert!(!r.tail_deviation);
}

#[test]
fn student_t_gap_is_flagged_at_unit_n() {
    let mut rng = Seed(31).rng();
    let t3 = StudentT::new(3.0).unwrap();
    let deltas: Vec<f64> = (0..5000).map(|_| t3.sample(&mut rng)).collect();
    let r = qq_diagnostic(&deltas, &QqOptions { n: 1, ..Default::default() }).unwrap();
    assert!(r.tail_deviation, "{}", r.tail_ratio);
}
