use super::*;
use crate::harness::default_config;
use crate::macroscopic::MacroPath;
use crate::model::{validate_config, DriftSpec, GaussianProduct, InitialSpec, KernelSpec};

fn small_config(n_nodes: usize) -> crate::model::ModelConfig {
    let mut cfg = crate::harness::default_config_with_nodes(n_nodes);
    cfg.initial = InitialSpec::GaussianProduct(GaussianProduct {
        mean_v: 0.0.into(),
        mean_w: 0.0.into(),
        var_v: 1.0.into(),
        var_w: 1.0.into(),
    });
    cfg
}

/// Zeroes the adaptation coordinate exactly; with `a = c = 0` it then
/// stays zero, removing the `-w` feedback from the voltage drift.
fn zero_w(ens: &mut ParticleEnsemble) {
    for wn in &mut ens.w {
        wn.iter_mut().for_each(|x| *x = 0.0);
    }
}

fn free_config(n_nodes: usize) -> crate::model::ModelConfig {
    let mut cfg = small_config(n_nodes);
    cfg.drift = DriftSpec::polynomial(vec![0.0], 3);
    cfg.test_mode = true;
    cfg.kernel = KernelSpec::zero();
    cfg.adaptation.a = 0.0;
    cfg.adaptation.c = 0.0;
    cfg
}

fn constant_path(n_nodes: usize, v: f64) -> MacroPath {
    let mut p = MacroPath::default();
    p.push(0.0, vec![v; n_nodes]);
    p.push(1e9, vec![v; n_nodes]);
    p
}

#[test]
fn init_is_deterministic_and_centered() {
    let model = validate_config(&small_config(4)).unwrap();
    let a = init_particles(&model, 100_000, 7).unwrap();
    let b = init_particles(&model, 100_000, 7).unwrap();
    assert_eq!(a, b);
    for node in 0..4 {
        let mean: f64 = a.v[node].iter().sum::<f64>() / a.v[node].len() as f64;
        assert!(mean.abs() < 4.0 / (100_000f64).sqrt(), "node {node}: {mean}");
    }
    let c = init_particles(&model, 100_000, 8).unwrap();
    assert_ne!(a.v[0][0].to_bits(), c.v[0][0].to_bits());
}

#[test]
fn tabulated_initial_law_has_no_sampler() {
    let mut cfg = small_config(1);
    let dv = 2.0 * cfg.l_v / cfg.n_v as f64;
    let dw = 2.0 * cfg.l_w / cfg.n_w as f64;
    let mut values = vec![vec![0.0; cfg.n_v]; cfg.n_w];
    values[10][10] = 1.0 / (dv * dw);
    cfg.initial = InitialSpec::Tabulated { values };
    let model = validate_config(&cfg).unwrap();
    let err = init_particles(&model, 10, 0).unwrap_err();
    assert!(matches!(err, ParticleError::UnsupportedInitial(_)));
}

#[test]
fn single_particle_local_term_is_inert() {
    // With one particle the node mean equals the particle, so the stiff
    // exchange does nothing; a noise-free step is exactly the two Heun
    // drift half-steps.
    let mut cfg = free_config(1);
    cfg.drift = DriftSpec::cubic_default();
    cfg.test_mode = false;
    cfg.adaptation = crate::model::AdaptationParams::new(1.0, 1.0, 0.0);
    let model = validate_config(&cfg).unwrap();
    let ens = init_particles(&model, 1, 3).unwrap();
    let next = step_particles_with(
        &ens,
        &model,
        cfg.dt,
        StepOptions { noise_scale: 0.0, ..Default::default() },
    )
    .unwrap();

    let h = 0.5 * cfg.dt;
    let (mut v, mut w) = (ens.v[0][0], ens.w[0][0]);
    for _ in 0..2 {
        let k1v = cfg.drift.eval(v) - w;
        let k1w = cfg.adaptation.eval(v, w);
        let k2v = cfg.drift.eval(v + h * k1v) - (w + h * k1w);
        let k2w = cfg.adaptation.eval(v + h * k1v, w + h * k1w);
        v += 0.5 * h * (k1v + k2v);
        w += 0.5 * h * (k1w + k2w);
    }
    assert_eq!(next.v[0][0].to_bits(), v.to_bits());
    assert_eq!(next.w[0][0].to_bits(), w.to_bits());
}

#[test]
fn trajectories_are_deterministic_and_exchangeable() {
    let model = validate_config(&small_config(2)).unwrap();
    let mut a = init_particles(&model, 64, 11).unwrap();
    let mut b = a.clone();
    // Permute initial particles together with their noise ids.
    let perm: Vec<usize> = (0..64).map(|i| (i * 37 + 5) % 64).collect();
    for node in 0..2 {
        b.v[node] = perm.iter().map(|&k| a.v[node][k]).collect();
        b.w[node] = perm.iter().map(|&k| a.w[node][k]).collect();
        b.ids[node] = perm.iter().map(|&k| a.ids[node][k]).collect();
    }
    for _ in 0..20 {
        a = step_particles(&a, &model, 2e-3).unwrap();
        b = step_particles(&b, &model, 2e-3).unwrap();
    }
    for node in 0..2 {
        for (slot, &k) in perm.iter().enumerate() {
            assert_eq!(b.v[node][slot].to_bits(), a.v[node][k].to_bits());
            assert_eq!(b.w[node][slot].to_bits(), a.w[node][k].to_bits());
        }
    }
}

#[test]
fn pairwise_sum_matches_mean_field_closure() {
    let model = validate_config(&small_config(4)).unwrap();
    let ens = init_particles(&model, 50, 21).unwrap();
    let mf = step_particles(&ens, &model, 2e-3).unwrap();
    let pw = step_particles_with(
        &ens,
        &model,
        2e-3,
        StepOptions { pairwise: true, ..Default::default() },
    )
    .unwrap();
    for node in 0..4 {
        for k in 0..50 {
            assert!(
                (mf.v[node][k] - pw.v[node][k]).abs() < 1e-12,
                "node {node} particle {k}"
            );
        }
    }
}

#[test]
fn ou_substep_preserves_the_node_mean_in_expectation() {
    // 200 repetitions of the stiff exchange in the drift-free setting;
    // the mean shift is pure noise with standard error sig / sqrt(n reps).
    let mut cfg = free_config(1);
    cfg.epsilon = 0.01;
    let model = validate_config(&cfg).unwrap();
    let n = 1000;
    let mut ens = init_particles(&model, n, 5).unwrap();
    let theta = 1.0 / cfg.epsilon;
    let sig = (2.0 * cfg.dt * crate::util::expm1_ratio(2.0 * theta * cfg.dt)).sqrt();
    let mut shifts = Vec::new();
    for _ in 0..200 {
        let before: f64 = ens.v[0].iter().sum::<f64>() / n as f64;
        ens = step_particles(&ens, &model, cfg.dt).unwrap();
        let after: f64 = ens.v[0].iter().sum::<f64>() / n as f64;
        shifts.push(after - before);
    }
    let mean_shift: f64 = shifts.iter().sum::<f64>() / shifts.len() as f64;
    let se = sig / ((n * 200) as f64).sqrt();
    assert!(mean_shift.abs() < 4.0 * se, "mean shift {mean_shift} vs 4 SE {}", 4.0 * se);
}

#[test]
fn identical_companions_with_frozen_target_stay_glued() {
    // Free dynamics, no noise, companion target fixed at the realized
    // initial mean: primary and companion see identical affine maps.
    let cfg = free_config(2);
    let model = validate_config(&cfg).unwrap();
    let mut ens = init_particles(&model, 32, 9).unwrap();
    zero_w(&mut ens);
    let v0: Vec<f64> =
        (0..2).map(|n| ens.v[n].iter().sum::<f64>() / ens.v[n].len() as f64).collect();
    ens.companions = Some(Companions { v: ens.v.clone(), w: ens.w.clone() });
    // Target path fixed at the realized means, which the noise-free free
    // dynamics preserve; both processes then see the same affine maps.
    let mut path = MacroPath::default();
    path.push(0.0, v0.clone());
    path.push(1e9, v0.clone());
    let mut cur = ens;
    for _ in 0..50 {
        cur = step_particles_with(
            &cur,
            &model,
            2e-3,
            StepOptions { noise_scale: 0.0, pairwise: false, macro_path: Some(&path) },
        )
        .unwrap();
    }
    let comp = cur.companions.as_ref().unwrap();
    for node in 0..2 {
        for k in 0..32 {
            let gap = (cur.v[node][k] - comp.v[node][k]).abs();
            assert!(gap < 1e-13, "node {node} particle {k}: gap {gap}");
            assert_eq!(cur.w[node][k].to_bits(), comp.w[node][k].to_bits());
        }
    }
}

#[test]
fn noise_free_gap_contracts_at_the_stiff_rate() {
    let mut cfg = free_config(1);
    cfg.epsilon = 0.05;
    let model = validate_config(&cfg).unwrap();
    let mut ens = init_particles(&model, 4, 13).unwrap();
    zero_w(&mut ens);
    let v0: f64 = ens.v[0].iter().sum::<f64>() / 4.0;
    let path = constant_path(1, v0);
    // Companions sit exactly at the target mean.
    ens.companions =
        Some(Companions { v: vec![vec![v0; 4]], w: vec![ens.w[0].clone()] });
    let gaps0: Vec<f64> = ens.v[0].iter().map(|&v| v - v0).collect();
    let steps = 100;
    let mut cur = ens;
    for _ in 0..steps {
        cur = step_particles_with(
            &cur,
            &model,
            2e-3,
            StepOptions { noise_scale: 0.0, pairwise: false, macro_path: Some(&path) },
        )
        .unwrap();
    }
    let t = steps as f64 * 2e-3;
    let factor = (-t / cfg.epsilon).exp();
    let comp = cur.companions.as_ref().unwrap();
    for k in 0..4 {
        let gap = cur.v[0][k] - comp.v[0][k];
        assert!(
            (gap - gaps0[k] * factor).abs() < 1e-10 * (1.0 + gaps0[k].abs()),
            "gap {gap} vs {}",
            gaps0[k] * factor
        );
    }
}

#[test]
fn coupling_energy_definitions() {
    let cfg = free_config(1);
    let model = validate_config(&cfg).unwrap();
    let eps = cfg.epsilon;
    let mut ens = init_particles(&model, 8, 17).unwrap();
    let path = constant_path(1, 0.0);

    // Identical arrays: all energies vanish.
    ens.companions = Some(Companions { v: ens.v.clone(), w: ens.w.clone() });
    let e = coupling_energies(&ens, &model, &path).unwrap();
    assert_eq!(e.a_energy[0], 0.0);
    assert_eq!(e.b_energy[0], 0.0);
    assert_eq!(e.b2_cross[0], 0.0);

    // Constant voltage gap delta: A = delta^2 / eps.
    let delta = 0.3;
    let comp_v: Vec<f64> = ens.v[0].iter().map(|&v| v - delta).collect();
    ens.companions = Some(Companions { v: vec![comp_v], w: vec![ens.w[0].clone()] });
    let e = coupling_energies(&ens, &model, &path).unwrap();
    assert!((e.a_energy[0] - delta * delta / eps).abs() < 1e-12);

    // Unit adaptation gap: B = 1.
    let comp_w: Vec<f64> = ens.w[0].iter().map(|&w| w + 1.0).collect();
    ens.companions = Some(Companions { v: vec![ens.v[0].clone()], w: vec![comp_w] });
    let e = coupling_energies(&ens, &model, &path).unwrap();
    assert!((e.b_energy[0] - 1.0).abs() < 1e-12);

    // Missing companions are an error.
    ens.companions = None;
    assert!(matches!(
        coupling_energies(&ens, &model, &path),
        Err(ParticleError::MissingCompanions)
    ));
    assert!(matches!(step_coupled(&ens, &model, 1e-3, &path), Err(ParticleError::MissingCompanions)));
}

#[test]
fn empirical_samples_are_stable_copies() {
    let model = validate_config(&small_config(2)).unwrap();
    let ens = init_particles(&model, 3, 2).unwrap();
    let a = empirical_samples(&ens, 1);
    let b = empirical_samples(&ens, 1);
    assert_eq!(a, b);
    assert_eq!(a.len(), 3);
    for (k, p) in a.iter().enumerate() {
        assert_eq!(p[0], ens.v[1][k]);
        assert_eq!(p[1], ens.w[1][k]);
    }
    let regen = init_particles(&model, 3, 2).unwrap();
    assert_eq!(empirical_samples(&regen, 1), a);
}

#[test]
fn strang_splitting_is_second_order_without_noise()
{
    // Deterministic mode isolates the splitting error; with noise the
    // Monte Carlo fluctuation would mask the O(dt^2) weak defect.
    let mut cfg = crate::harness::default_config_with_nodes(2);
    cfg.epsilon = 0.2;
    let model = validate_config(&cfg).unwrap();
    let base = init_particles(&model, 16, 1).unwrap();
    let solve = |dt: f64| -> f64 {
        let mut ens = base.clone();
        let n = (0.5 / dt).round() as usize;
        for _ in 0..n {
            ens = step_particles_with(
                &ens,
                &model,
                dt,
                StepOptions { noise_scale: 0.0, ..Default::default() },
            )
            .unwrap();
        }
        ens.v[0][3]
    };
    let a = solve(4e-3);
    let b = solve(2e-3);
    let c = solve(1e-3);
    let rate = ((a - b).abs() / (b - c).abs()).log2();
    assert!(rate > 1.6 && rate < 2.6, "splitting order {rate}");
}

#[test]
fn coupled_energy_shrinks_with_epsilon() {
    // Monotonicity smoke test of the combined coupling energy at t = 1.
    let mut values = Vec::new();
    for &eps in &[0.1, 0.025] {
        let mut cfg = small_config(2);
        cfg.epsilon = eps;
        let model = validate_config(&cfg).unwrap();
        let mut ens = init_particles(&model, 2000, 33).unwrap();
        let v0: Vec<f64> =
            (0..2).map(|n| ens.v[n].iter().sum::<f64>() / ens.v[n].len() as f64).collect();
        let w0: Vec<f64> =
            (0..2).map(|n| ens.w[n].iter().sum::<f64>() / ens.w[n].len() as f64).collect();
        let (_, macro_final) = crate::harness::solve_macro_path(
            &model,
            &[1.0],
            Some(&v0),
            Some(&w0),
            0.0,
            None,
        )
        .unwrap();
        let path = macro_final.v_path.clone();
        attach_matched_companions(&mut ens, &model, &v0).unwrap();
        for _ in 0..500 {
            ens = step_coupled(&ens, &model, 2e-3, &path).unwrap();
        }
        let e = coupling_energies(&ens, &model, &path).unwrap();
        let combined = eps * e.a_energy[0] + e.b_energy[0];
        values.push(combined);
    }
    assert!(
        values[1] < values[0],
        "combined energy must decrease with eps: {values:?}"
    );
}
