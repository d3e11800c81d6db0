use super::*;
use crate::harness::default_config;
use crate::model::{
    validate_config, DriftSpec, GaussianProduct, InitialSpec, KernelSpec, PerNode,
};

fn ou_only_config(eps: f64, var_v: f64) -> crate::model::ModelConfig {
    // Pure relaxation setting: no reaction, no long-range coupling, no
    // adaptation feedback, adaptation marginal concentrated near zero.
    let mut cfg = default_config();
    cfg.drift = DriftSpec::polynomial(vec![0.0], 3);
    cfg.test_mode = true;
    cfg.kernel = KernelSpec::zero();
    cfg.adaptation.a = 0.0;
    cfg.adaptation.c = 0.0;
    cfg.epsilon = eps;
    cfg.grid = crate::model::SpatialGrid::uniform(2, 1.0);
    cfg.initial = InitialSpec::GaussianProduct(GaussianProduct {
        mean_v: 0.3.into(),
        mean_w: 0.0.into(),
        var_v: var_v.into(),
        var_w: 0.0025.into(),
    });
    cfg
}

#[test]
fn ou_variance_follows_closed_form() {
    let eps = 0.05;
    let sigma0_sq = 0.25;
    let cfg = ou_only_config(eps, sigma0_sq);
    let model = validate_config(&cfg).unwrap();
    let mut state = initial_kinetic_state(&model).unwrap();
    let dt = cfg.dt;
    for &t_check in &[0.02, 0.05, 0.1, 0.3] {
        let steps_done = (state.t / dt).round() as usize;
        let steps_to = (t_check / dt).round() as usize;
        for _ in steps_done..steps_to {
            state = step_kinetic(&state, &model, dt).unwrap();
        }
        let expect = eps + (sigma0_sq - eps) * (-2.0 * t_check / eps).exp();
        let cov = state.node_covariance(&model, 0);
        assert!(
            (cov[0] - expect).abs() / expect < 0.02,
            "t = {t_check}: var {} vs {expect}",
            cov[0]
        );
    }
}

#[test]
fn zero_dt_is_identity() {
    let cfg = ou_only_config(0.1, 1.0);
    let model = validate_config(&cfg).unwrap();
    let state = initial_kinetic_state(&model).unwrap();
    let next = step_kinetic(&state, &model, 0.0).unwrap();
    assert_eq!(state.densities, next.densities);
    assert_eq!(state.t, next.t);
}

#[test]
fn mass_is_conserved_and_density_stays_nonnegative() {
    let mut cfg = crate::harness::default_config_with_nodes(4);
    cfg.epsilon = 0.1;
    let model = validate_config(&cfg).unwrap();
    let mut state = initial_kinetic_state(&model).unwrap();
    let m0: Vec<f64> =
        (0..4).map(|n| state.node_mass(&model, n) + state.boundary_loss[n]).collect();
    for _ in 0..100 {
        state = step_kinetic(&state, &model, cfg.dt).unwrap();
    }
    for node in 0..4 {
        let m = state.node_mass(&model, node) + state.boundary_loss[node];
        assert!((m - m0[node]).abs() < 1e-10, "node {node}: {m} vs {}", m0[node]);
        assert!(state.densities[node].iter().all(|&x| x >= 0.0));
        assert!(state.boundary_loss[node] <= 1e-6);
    }
}

#[test]
fn cached_macros_are_coherent() {
    let cfg = crate::harness::default_config_with_nodes(3);
    let model = validate_config(&cfg).unwrap();
    let mut state = initial_kinetic_state(&model).unwrap();
    for _ in 0..25 {
        state = step_kinetic(&state, &model, cfg.dt).unwrap();
    }
    let cached: Vec<f64> = state.cached_v.clone();
    let recomputed = compute_macros(&mut state, &model).unwrap();
    for (c, (v, _)) in cached.iter().zip(&recomputed) {
        assert!((c - v).abs() < 1e-12);
    }
}

#[test]
fn compute_macros_examples() {
    // Symmetric-in-v density: V = 0 to rounding.
    let mut cfg = default_config();
    cfg.grid = crate::model::SpatialGrid::uniform(2, 1.0);
    cfg.initial = InitialSpec::GaussianProduct(GaussianProduct {
        mean_v: 0.0.into(),
        mean_w: (-0.2).into(),
        var_v: 1.0.into(),
        var_w: 0.5.into(),
    });
    let model = validate_config(&cfg).unwrap();
    let state = initial_kinetic_state(&model).unwrap();
    assert!(state.cached_v[0].abs() < 1e-12);
    assert!((state.cached_w[0] + 0.2).abs() < model.dw());

    // Gaussian product means are recovered within a cell width.
    let mut cfg = default_config();
    cfg.grid = crate::model::SpatialGrid::uniform(2, 1.0);
    cfg.initial = InitialSpec::GaussianProduct(GaussianProduct {
        mean_v: 1.5.into(),
        mean_w: (-0.2).into(),
        var_v: 1.0.into(),
        var_w: 1.0.into(),
    });
    let model = validate_config(&cfg).unwrap();
    let state = initial_kinetic_state(&model).unwrap();
    assert!((state.cached_v[0] - 1.5).abs() < model.dv());
    assert!((state.cached_w[0] + 0.2).abs() < model.dw());

    // A point-mass cell is read back exactly.
    let mut cfg = default_config();
    cfg.grid = crate::model::SpatialGrid::uniform(1, 1.0);
    let (nv, nw) = (cfg.n_v, cfg.n_w);
    let mut values = vec![vec![0.0; nv]; nw];
    let (iv, jw) = (100, 70);
    let dv = 2.0 * cfg.l_v / nv as f64;
    let dw = 2.0 * cfg.l_w / nw as f64;
    values[jw][iv] = 1.0 / (dv * dw);
    cfg.initial = InitialSpec::Tabulated { values };
    let model = validate_config(&cfg).unwrap();
    let state = initial_kinetic_state(&model).unwrap();
    assert_eq!(state.cached_v[0], model.v_centers()[iv]);
    assert_eq!(state.cached_w[0], model.w_centers()[jw]);
}

#[test]
fn empty_node_is_reported() {
    let cfg = ou_only_config(0.1, 1.0);
    let model = validate_config(&cfg).unwrap();
    let mut state = initial_kinetic_state(&model).unwrap();
    state.densities[1].iter_mut().for_each(|x| *x = 0.0);
    let err = compute_macros(&mut state, &model).unwrap_err();
    assert!(matches!(err, KineticError::EmptyNode { node: 1, .. }));
}

#[test]
fn cfl_violation_is_reported() {
    let cfg = default_config();
    let model = validate_config(&cfg).unwrap();
    let state = initial_kinetic_state(&model).unwrap();
    let limit = dt_max(&state, &model);
    assert!(limit > cfg.dt, "default step {} must satisfy the bound {limit}", cfg.dt);
    let err = step_kinetic(&state, &model, 10.0 * limit).unwrap_err();
    assert!(matches!(err, KineticError::CflViolation { .. }));
}

#[test]
fn error_functional_examples() {
    // Linear drift: the functional vanishes identically.
    let mut cfg = crate::harness::default_config_with_nodes(2);
    cfg.drift = DriftSpec::polynomial(vec![0.0, -1.0], 3);
    cfg.test_mode = true;
    let model = validate_config(&cfg).unwrap();
    let state = initial_kinetic_state(&model).unwrap();
    for &e in &error_functional(&state, &model) {
        assert!(e.abs() < 1e-12, "{e}");
    }

    // Cubic drift with a Gaussian voltage marginal centered at V:
    // E = -3 V sigma^2 (plus grid error).
    let mut cfg = default_config();
    cfg.grid = crate::model::SpatialGrid::uniform(2, 1.0);
    let (big_v, var) = (0.7, 0.25);
    cfg.initial = InitialSpec::GaussianProduct(GaussianProduct {
        mean_v: big_v.into(),
        mean_w: 0.0.into(),
        var_v: var.into(),
        var_w: 1.0.into(),
    });
    let model = validate_config(&cfg).unwrap();
    let state = initial_kinetic_state(&model).unwrap();
    let e = error_functional(&state, &model)[0];
    let expect = -3.0 * big_v * var;
    assert!((e - expect).abs() < 2e-3, "E = {e} vs {expect}");

    // Centered Gaussian: the functional vanishes by symmetry.
    let mut cfg = default_config();
    cfg.grid = crate::model::SpatialGrid::uniform(2, 1.0);
    cfg.initial = InitialSpec::GaussianProduct(GaussianProduct {
        mean_v: 0.0.into(),
        mean_w: 0.0.into(),
        var_v: var.into(),
        var_w: 1.0.into(),
    });
    let model = validate_config(&cfg).unwrap();
    let state = initial_kinetic_state(&model).unwrap();
    assert!(error_functional(&state, &model)[0].abs() < 1e-10);
}

#[test]
fn rescale_identity_at_unit_eps() {
    // Centered state with eps = 1: the rescaling is the identity.
    let mut cfg = ou_only_config(1.0, 0.5);
    cfg.initial = InitialSpec::GaussianProduct(GaussianProduct {
        mean_v: 0.0.into(),
        mean_w: 0.0.into(),
        var_v: 0.5.into(),
        var_w: 0.25.into(),
    });
    let model = validate_config(&cfg).unwrap();
    let state = initial_kinetic_state(&model).unwrap();
    let nu = rescale_to_nu(&state, &model, 0).unwrap();
    for (a, b) in state.densities[0].iter().zip(&nu.values) {
        assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()), "{a} vs {b}");
    }
}

#[test]
fn rescale_moment_identity() {
    // Second rescaled-voltage moment equals D2 / eps.
    let eps = 0.05;
    let cfg = ou_only_config(eps, 0.4);
    let model = validate_config(&cfg).unwrap();
    let mut state = initial_kinetic_state(&model).unwrap();
    for _ in 0..50 {
        state = step_kinetic(&state, &model, cfg.dt).unwrap();
    }
    let grid = state.to_grid_density(&model, 0).unwrap();
    let d2 = crate::metrics::relative_energy_dq(
        crate::metrics::MeasureRef::Grid(&grid),
        2.0,
        state.cached_v[0],
    )
    .unwrap();
    let nu = rescale_to_nu(&state, &model, 0).unwrap();
    let m2_nu = {
        let a = nu.cell_area();
        let mut acc = 0.0;
        for jw in 0..nu.nw {
            for iv in 0..nu.nv {
                let v = nu.v_center(iv);
                acc += v * v * nu.values[jw * nu.nv + iv] * a;
            }
        }
        acc
    };
    assert!((m2_nu - d2 / eps).abs() / (d2 / eps) < 0.01, "{m2_nu} vs {}", d2 / eps);
}

#[test]
fn rescale_recovers_concentration_profile() {
    // After relaxation the rescaled voltage marginal matches the unit
    // concentration profile (variance 1 / rho0).
    let eps = 0.05;
    let cfg = ou_only_config(eps, 0.3);
    let model = validate_config(&cfg).unwrap();
    let mut state = initial_kinetic_state(&model).unwrap();
    for _ in 0..250 {
        state = step_kinetic(&state, &model, cfg.dt).unwrap();
    }
    let nu = rescale_to_nu(&state, &model, 0).unwrap();
    let a = nu.cell_area();
    let mut mean = 0.0;
    let mut var = 0.0;
    for jw in 0..nu.nw {
        for iv in 0..nu.nv {
            mean += nu.v_center(iv) * nu.values[jw * nu.nv + iv] * a;
        }
    }
    for jw in 0..nu.nw {
        for iv in 0..nu.nv {
            let d = nu.v_center(iv) - mean;
            var += d * d * nu.values[jw * nu.nv + iv] * a;
        }
    }
    assert!(mean.abs() < 0.02, "rescaled mean {mean}");
    assert!((var - 1.0).abs() < 0.03, "rescaled variance {var}");
}

#[test]
fn snapshot_csv_is_voltage_major() {
    let mut cfg = ou_only_config(0.1, 1.0);
    cfg.n_v = 16;
    cfg.n_w = 16;
    let model = validate_config(&cfg).unwrap();
    let state = initial_kinetic_state(&model).unwrap();
    let csv = snapshot_csv(&state, &model, 0);
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "v,w,density");
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    let second: Vec<&str> = lines.next().unwrap().split(',').collect();
    // Voltage-major: v constant while w advances.
    assert_eq!(first[0], second[0]);
    assert_ne!(first[1], second[1]);
    assert_eq!(csv.lines().count(), 1 + 16 * 16);
}
