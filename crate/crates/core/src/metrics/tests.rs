use super::*;
use crate::util::rng::{self, Stream};

fn gaussian_samples_1d(n: usize, mean: f64, sigma: f64, seed: u64) -> Vec<f64> {
    (0..n).map(|i| mean + sigma * rng::normal(seed, Stream::Bootstrap, i as u64, 0, 0)).collect()
}

fn gaussian_samples_2d(
    n: usize,
    mean: [f64; 2],
    sigma: [f64; 2],
    seed: u64,
) -> Vec<[f64; 2]> {
    (0..n)
        .map(|i| {
            [
                mean[0] + sigma[0] * rng::normal(seed, Stream::Bootstrap, i as u64, 1, 0),
                mean[1] + sigma[1] * rng::normal(seed, Stream::Bootstrap, i as u64, 2, 0),
            ]
        })
        .collect()
}

fn grid_gaussian(nv: usize, nw: usize, l: f64, mean: [f64; 2], sigma: [f64; 2]) -> GridDensity {
    let dv = 2.0 * l / nv as f64;
    let dw = 2.0 * l / nw as f64;
    let mut values = vec![0.0; nv * nw];
    for j in 0..nw {
        let w = -l + (j as f64 + 0.5) * dw;
        for i in 0..nv {
            let v = -l + (i as f64 + 0.5) * dv;
            values[j * nv + i] = (-0.5 * ((v - mean[0]) / sigma[0]).powi(2)
                - 0.5 * ((w - mean[1]) / sigma[1]).powi(2))
            .exp();
        }
    }
    GridDensity::from_values_renormalized(-l, dv, nv, -l, dw, nw, values).unwrap()
}

fn random_density(nv: usize, nw: usize, seed: u64) -> GridDensity {
    let values: Vec<f64> = (0..nv * nw)
        .map(|i| 0.05 + rng::uniform(seed, Stream::Bootstrap, i as u64, 11, 0))
        .collect();
    GridDensity::from_values_renormalized(-1.0, 2.0 / nv as f64, nv, -1.0, 2.0 / nw as f64, nw, values)
        .unwrap()
}

#[test]
fn w2_1d_identical_sets_vanish() {
    let s = SampleSet::from_scalars(vec![0.3, -1.0, 2.0]).unwrap();
    let d = w2_1d(Dist1d::Samples(&s), Dist1d::Samples(&s)).unwrap();
    assert_eq!(d, 0.0);
}

#[test]
fn w2_1d_point_masses() {
    let a = SampleSet::from_scalars(vec![0.0]).unwrap();
    let b = SampleSet::from_scalars(vec![1.0]).unwrap();
    let d = w2_1d(Dist1d::Samples(&a), Dist1d::Samples(&b)).unwrap();
    assert!((d - 1.0).abs() < 1e-15);
}

#[test]
fn w2_1d_gaussians_match_closed_form() {
    let n = 10_000;
    let (m1, s1, m2, s2) = (0.0, 1.0, 1.5, 0.5);
    let a = SampleSet::from_scalars(gaussian_samples_1d(n, m1, s1, 1)).unwrap();
    let b = SampleSet::from_scalars(gaussian_samples_1d(n, m2, s2, 2)).unwrap();
    let d = w2_1d(Dist1d::Samples(&a), Dist1d::Samples(&b)).unwrap();
    let closed = ((m1 - m2).powi(2) + (s1 - s2).powi(2)).sqrt();
    assert!((d - closed).abs() / closed < 0.05, "d {d} closed {closed}");
}

#[test]
fn w2_1d_rejects_2d_samples() {
    let a = SampleSet::from_pairs(vec![[0.0, 0.0]]).unwrap();
    let b = SampleSet::from_scalars(vec![0.0]).unwrap();
    let err = w2_1d(Dist1d::Samples(&a), Dist1d::Samples(&b)).unwrap_err();
    assert!(matches!(err, MetricsError::DimensionMismatch(_)));
}

#[test]
fn w2_1d_weighted_quantile_table_against_samples() {
    // A quantile table with midpoint probabilities is the same law as its
    // atom list with uniform weights.
    let values = vec![-1.0, -0.2, 0.1, 0.4, 2.0];
    let table = QuantileTable::from_sorted_values(values.clone());
    let samples = SampleSet::from_scalars(values).unwrap();
    let d = w2_1d(Dist1d::Quantiles(&table), Dist1d::Samples(&samples)).unwrap();
    // Breakpoint rounding enters under a square root, so ~1e-8 is the floor.
    assert!(d < 1e-7, "{d}");
}

#[test]
fn w2_2d_matches_brute_force_on_small_sets() {
    for seed in 0..40 {
        let n = 2 + (seed as usize % 7);
        let a = gaussian_samples_2d(n, [0.0, 0.0], [1.0, 1.0], 100 + seed);
        let b = gaussian_samples_2d(n, [0.5, -0.3], [0.7, 1.2], 200 + seed);
        let sa = SampleSet::from_pairs(a.clone()).unwrap();
        let sb = SampleSet::from_pairs(b.clone()).unwrap();
        let fast = w2_2d(&sa, &sb).unwrap();
        let brute = w2_2d_brute_force(&a, &b);
        assert!((fast - brute).abs() < 1e-10, "seed {seed}: {fast} vs {brute}");
    }
}

#[test]
fn w2_2d_translation_is_exact() {
    let a = gaussian_samples_2d(128, [0.0, 0.0], [1.0, 1.0], 5);
    let b: Vec<[f64; 2]> = a.iter().map(|p| [p[0] + 0.3, p[1] - 0.7]).collect();
    let d = w2_2d(&SampleSet::from_pairs(a).unwrap(), &SampleSet::from_pairs(b).unwrap()).unwrap();
    let expect = (0.3f64 * 0.3 + 0.7 * 0.7).sqrt();
    assert!((d - expect).abs() < 1e-12);
}

#[test]
fn w2_2d_too_large_is_rejected() {
    let a = vec![[0.0, 0.0]; OT_SUPPORT_CAP + 1];
    let sa = SampleSet::from_pairs(a).unwrap();
    assert!(matches!(w2_2d(&sa, &sa), Err(MetricsError::TooLarge(_))));
}

#[test]
fn w2_2d_reduces_to_w2_1d_on_shared_coordinate() {
    for seed in 0..10 {
        let xs: Vec<f64> = gaussian_samples_1d(40, 0.0, 1.0, 300 + seed);
        let ys: Vec<f64> = gaussian_samples_1d(40, 0.4, 0.8, 400 + seed);
        let a2 = SampleSet::from_pairs(xs.iter().map(|&x| [x, 1.5]).collect()).unwrap();
        let b2 = SampleSet::from_pairs(ys.iter().map(|&y| [y, 1.5]).collect()).unwrap();
        let a1 = SampleSet::from_scalars(xs).unwrap();
        let b1 = SampleSet::from_scalars(ys).unwrap();
        let d2 = w2_2d(&a2, &b2).unwrap();
        let d1 = w2_1d(Dist1d::Samples(&a1), Dist1d::Samples(&b1)).unwrap();
        assert!((d1 - d2).abs() < 1e-12, "{d1} vs {d2}");
    }
}

#[test]
fn w2_2d_metric_axioms_on_random_sets() {
    for seed in 0..12 {
        let n = 3 + (seed as usize % 5);
        let a = SampleSet::from_pairs(gaussian_samples_2d(n, [0.0, 0.0], [1.0, 1.0], 500 + seed))
            .unwrap();
        let b = SampleSet::from_pairs(gaussian_samples_2d(n, [0.3, 0.1], [1.0, 0.5], 600 + seed))
            .unwrap();
        let c = SampleSet::from_pairs(gaussian_samples_2d(n, [-0.2, 0.4], [0.8, 1.1], 700 + seed))
            .unwrap();
        let dab = w2_2d(&a, &b).unwrap();
        let dba = w2_2d(&b, &a).unwrap();
        let dac = w2_2d(&a, &c).unwrap();
        let dcb = w2_2d(&c, &b).unwrap();
        assert_eq!(dab.to_bits(), dba.to_bits(), "symmetry");
        assert!(dab <= dac + dcb + 1e-9, "triangle: {dab} > {dac} + {dcb}");
        assert_eq!(w2_2d(&a, &a).unwrap(), 0.0, "identity");
        assert!(dab > 0.0, "distinct multisets must have positive distance");
    }
}

#[test]
fn dirac_tensor_distance_examples() {
    let s = SampleSet::from_pairs(vec![[2.0, 0.5], [2.0, -1.0]]).unwrap();
    assert_eq!(w2_to_dirac_tensor(&s, 2.0).unwrap(), 0.0);

    let s = SampleSet::from_pairs(vec![[-1.0, 0.0], [1.0, 5.0]]).unwrap();
    assert!((w2_to_dirac_tensor(&s, 0.0).unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn dirac_tensor_distance_agrees_with_assignment() {
    for seed in 0..20 {
        let n = 2 + (seed as usize % 7);
        let pts = gaussian_samples_2d(n, [0.4, -0.1], [0.8, 1.3], 800 + seed);
        let big_v = 0.25;
        let closed = w2_to_dirac_tensor(&SampleSet::from_pairs(pts.clone()).unwrap(), big_v).unwrap();
        let target: Vec<[f64; 2]> = pts.iter().map(|p| [big_v, p[1]]).collect();
        let brute = w2_2d_brute_force(&pts, &target);
        assert!((closed - brute).abs() < 1e-12, "{closed} vs {brute}");
    }
}

#[test]
fn dirac_tensor_squared_equals_d2() {
    let pts = gaussian_samples_2d(200, [0.4, -0.1], [0.8, 1.3], 900);
    let s = SampleSet::from_pairs(pts).unwrap();
    let d = w2_to_dirac_tensor(&s, 0.1).unwrap();
    let d2 = relative_energy_dq(MeasureRef::Samples(&s), 2.0, 0.1).unwrap();
    assert!((d * d - d2).abs() < 1e-13);
}

#[test]
fn moment_examples() {
    let point = SampleSet::from_pairs(vec![[3.0, 4.0]]).unwrap();
    assert_eq!(moment_mq(MeasureRef::Samples(&point), 2.0).unwrap(), 25.0);

    let n = 10_000;
    let pts = gaussian_samples_2d(n, [0.0, 0.0], [1.0, 1.0], 7);
    let s = SampleSet::from_pairs(pts).unwrap();
    let d2 = relative_energy_dq(MeasureRef::Samples(&s), 2.0, 0.0).unwrap();
    assert!((d2 - 1.0).abs() < 0.02 * 3.0, "D2 {d2}");

    let sigma = 0.7;
    let pts = gaussian_samples_2d(n, [1.0, 0.0], [sigma, 1.0], 8);
    let s = SampleSet::from_pairs(pts).unwrap();
    let d4 = relative_energy_dq(MeasureRef::Samples(&s), 4.0, 1.0).unwrap();
    let expect = 3.0 * sigma.powi(4);
    assert!((d4 - expect).abs() / expect < 0.05, "D4 {d4} vs {expect}");
}

#[test]
fn q_out_of_range_is_rejected() {
    let s = SampleSet::from_pairs(vec![[0.0, 0.0]]).unwrap();
    assert!(matches!(
        moment_mq(MeasureRef::Samples(&s), 1.5),
        Err(MetricsError::QOutOfRange(_))
    ));
    assert!(matches!(
        relative_energy_dq(MeasureRef::Samples(&s), f64::NAN, 0.0),
        Err(MetricsError::QOutOfRange(_))
    ));
}

#[test]
fn fractional_q_moments_work_on_grids() {
    let g = grid_gaussian(64, 64, 6.0, [0.0, 0.0], [1.0, 1.0]);
    let m25 = moment_mq(MeasureRef::Grid(&g), 2.5).unwrap();
    assert!(m25 > 0.0 && m25.is_finite());
    let d3 = relative_energy_dq(MeasureRef::Grid(&g), 3.0, 0.0).unwrap();
    // E|v|^3 for a standard Gaussian marginal.
    let expect = 2.0 * (2.0 / std::f64::consts::PI).sqrt();
    assert!((d3 - expect).abs() / expect < 0.01, "{d3} vs {expect}");
}

#[test]
fn modified_entropy_examples() {
    let mu = grid_gaussian(48, 48, 4.0, [0.0, 0.0], [0.8, 0.8]);
    assert_eq!(modified_relative_entropy(&mu, &mu, 0.5).unwrap(), 0.0);

    // Disjoint supports: integrand is ln(1/alpha) on supp(mu).
    let nv = 32;
    let mut a = vec![0.0; nv * nv];
    let mut b = vec![0.0; nv * nv];
    for j in 0..nv {
        for i in 0..nv / 2 {
            a[j * nv + i] = 1.0;
            b[j * nv + nv / 2 + i] = 1.0;
        }
    }
    let d = 2.0 / nv as f64;
    let mu = GridDensity::from_values_renormalized(-1.0, d, nv, -1.0, d, nv, a).unwrap();
    let nu = GridDensity::from_values_renormalized(-1.0, d, nv, -1.0, d, nv, b).unwrap();
    let h = modified_relative_entropy(&mu, &nu, 0.5).unwrap();
    assert!((h - std::f64::consts::LN_2).abs() < 1e-12, "{h}");
}

#[test]
fn modified_entropy_bounds_and_sandwich() {
    for seed in 0..30 {
        let mu = random_density(24, 24, 2 * seed);
        let nu = random_density(24, 24, 2 * seed + 1);
        let l1: f64 = mu
            .values
            .iter()
            .zip(&nu.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * mu.cell_area();
        for &alpha in &[0.1, 0.5, 0.9] {
            let h = modified_relative_entropy(&mu, &nu, alpha).unwrap();
            assert!(h >= 0.0);
            assert!(h <= -alpha.ln() + 1e-12, "upper ln bound: {h} vs {}", -alpha.ln());
            let lower = (1.0 - alpha) * (1.0 - alpha) / 2.0 * l1 * l1;
            let upper = (1.0 - alpha) / alpha * l1;
            assert!(lower <= h + 1e-12, "lower sandwich {lower} vs {h}");
            assert!(h <= upper + 1e-12, "upper sandwich {h} vs {upper}");
        }
    }
}

#[test]
fn entropy_grid_mismatch_is_rejected() {
    let mu = grid_gaussian(32, 32, 4.0, [0.0, 0.0], [1.0, 1.0]);
    let nu = grid_gaussian(32, 32, 5.0, [0.0, 0.0], [1.0, 1.0]);
    assert!(matches!(
        modified_relative_entropy(&mu, &nu, 0.5),
        Err(MetricsError::GridMismatch(_))
    ));
    assert!(matches!(fisher_i_half(&mu, &nu), Err(MetricsError::GridMismatch(_))));
}

#[test]
fn fisher_information_vanishes_on_equal_inputs() {
    let mu = grid_gaussian(48, 48, 4.0, [0.1, -0.2], [0.8, 1.1]);
    assert_eq!(fisher_i_half(&mu, &mu).unwrap(), 0.0);
}

#[test]
fn fisher_information_ignores_w_only_shifts() {
    // nu differs from mu by a w-independent-in-v factor: the ratio is
    // constant in v, so the v-derivative of its log vanishes.
    let nv = 40;
    let nw = 40;
    let l = 4.0;
    let d = 2.0 * l / nv as f64;
    let mut a = vec![0.0; nv * nw];
    let mut b = vec![0.0; nv * nw];
    for j in 0..nw {
        let w = -l + (j as f64 + 0.5) * d;
        let gw = (-0.5 * w * w).exp();
        let gw_shift = (-0.5 * (w - d) * (w - d)).exp();
        for i in 0..nv {
            let v = -l + (i as f64 + 0.5) * d;
            let gv = (-0.5 * v * v).exp();
            a[j * nv + i] = gv * gw;
            b[j * nv + i] = gv * gw_shift;
        }
    }
    let mu = GridDensity::from_values_renormalized(-l, d, nv, -l, d, nw, a).unwrap();
    let nu = GridDensity::from_values_renormalized(-l, d, nv, -l, d, nw, b).unwrap();
    let i = fisher_i_half(&mu, &nu).unwrap();
    assert!(i < 1e-10, "{i}");
}

#[test]
fn fisher_information_matches_fine_quadrature_oracle() {
    // Two Gaussians in v shifted by delta; the w-factor integrates out.
    let delta = 0.6;
    let (nv, nw, l) = (256, 64, 6.0);
    let dv = 2.0 * l / nv as f64;
    let dw = 2.0 * l / nw as f64;
    let build = |mv: f64| -> GridDensity {
        let mut vals = vec![0.0; nv * nw];
        for j in 0..nw {
            let w = -l + (j as f64 + 0.5) * dw;
            let gw = (-0.5 * w * w).exp();
            for i in 0..nv {
                let v = -l + (i as f64 + 0.5) * dv;
                vals[j * nv + i] = (-0.5 * (v - mv) * (v - mv)).exp() * gw;
            }
        }
        GridDensity::from_values_renormalized(-l, dv, nv, -l, dw, nw, vals).unwrap()
    };
    let mu = build(0.0);
    let nu = build(delta);
    let got = fisher_i_half(&mu, &nu).unwrap();

    // Independent high-resolution quadrature with analytic densities.
    let fine = 100 * nv;
    let h = 2.0 * l / fine as f64;
    let g = |v: f64, m: f64| (-0.5 * (v - m) * (v - m)).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let logr = |v: f64| (2.0 * g(v, 0.0) / (g(v, 0.0) + g(v, delta))).ln();
    let mut oracle = 0.0;
    for k in 0..fine {
        let v = -l + (k as f64 + 0.5) * h;
        let d = (logr(v + h) - logr(v - h)) / (2.0 * h);
        oracle += d * d * g(v, 0.0) * h;
    }
    assert!((got - oracle).abs() / oracle < 0.02, "got {got} oracle {oracle}");
}

#[test]
fn exp_moment_and_entropy_examples() {
    // Point-mass cell at the origin: J integrates exp(0) over one cell.
    let nv = 32;
    let d = 2.0 / nv as f64;
    let mut vals = vec![0.0; nv * nv];
    let center = (nv / 2) * nv + nv / 2;
    vals[center] = 1.0;
    let g = GridDensity::from_values_renormalized(-1.0, d, nv, -1.0, d, nv, vals).unwrap();
    let j = exp_moment_j(&g);
    assert!((j - 1.0).abs() < 0.01, "{j}");

    // Uniform density on a unit-area region has zero entropy.
    let nv = 16;
    let d = 2.0 / nv as f64; // 0.125; an 8x8 block has area exactly 1
    let mut vals = vec![0.0; nv * nv];
    for j in 4..12 {
        for i in 4..12 {
            vals[j * nv + i] = 1.0;
        }
    }
    let g = GridDensity::new(-1.0, d, nv, -1.0, d, nv, vals).unwrap();
    assert!(entropy_h(&g).abs() < 1e-12);

    // Standard 2D Gaussian: H = -ln(2 pi) - 1.
    let g = grid_gaussian(128, 128, 8.0, [0.0, 0.0], [1.0, 1.0]);
    let h = entropy_h(&g);
    let expect = -(2.0 * std::f64::consts::PI).ln() - 1.0;
    assert!((h - expect).abs() / expect.abs() < 0.01, "{h} vs {expect}");
}

#[test]
fn grid_support_truncation_tracks_mass() {
    let g = grid_gaussian(64, 64, 6.0, [0.3, -0.4], [0.5, 0.9]);
    let (support, dropped) = g.to_weighted_support(1024).unwrap();
    assert!(dropped < 1e-4, "{dropped}");
    let total: f64 = (0..support.len()).map(|i| support.weight(i)).sum();
    assert!((total - 1.0).abs() < 1e-12);
    // Moments survive the truncation.
    let [mv, mw] = g.mean();
    let mut tv = 0.0;
    let mut tw = 0.0;
    if let Coords::Two(pts) = &support.coords {
        for (i, p) in pts.iter().enumerate() {
            tv += support.weight(i) * p[0];
            tw += support.weight(i) * p[1];
        }
    }
    assert!((tv - mv).abs() < 1e-3 && (tw - mw).abs() < 1e-3);
}

#[test]
fn grid_sampling_is_deterministic_and_unbiased() {
    let g = grid_gaussian(64, 64, 6.0, [0.5, -0.2], [0.8, 0.6]);
    let a = g.sample_points(4000, 9);
    let b = g.sample_points(4000, 9);
    assert_eq!(a, b);
    let mv: f64 = a.iter().map(|p| p[0]).sum::<f64>() / a.len() as f64;
    let mw: f64 = a.iter().map(|p| p[1]).sum::<f64>() / a.len() as f64;
    assert!((mv - 0.5).abs() < 0.06, "{mv}");
    assert!((mw + 0.2).abs() < 0.06, "{mw}");
}
