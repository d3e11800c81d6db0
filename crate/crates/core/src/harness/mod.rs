//! Experiment orchestration: the default benchmark configuration, epsilon
//! sweeps with slope fits, the coupling study, and report emission.

mod report;
mod runners;

pub use report::{config_to_json, emit_report, MetricsReport, ReportRow, SlopeFit};
pub use runners::{
    run_convergence_study, run_coupling_study, sampling_noise_floor,
    solve_kinetic_with_snapshots, solve_macro_path, KineticRun, SolverMode,
};

use crate::model::{
    AdaptationParams, DriftSpec, GaussianProduct, InitialSpec, KernelSpec, ModelConfig, PerNode,
    SpatialGrid,
};
use std::collections::BTreeSet;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("FitDegenerate: {0}")]
    FitDegenerate(String),
    #[error("validation failed: {0:?}")]
    Validation(Vec<crate::model::ValidationError>),
    #[error("kinetic solver failed: {0}")]
    Kinetic(#[from] crate::kinetic::KineticError),
    #[error("particle solver failed: {0}")]
    Particles(#[from] crate::particles::ParticleError),
    #[error("macroscopic solver failed: {0}")]
    Macroscopic(#[from] crate::macroscopic::MacroError),
    #[error("metrics failed: {0}")]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error("bad experiment plan: {0}")]
    BadPlan(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// The benchmark configuration: 16 midpoint nodes with unit density, a
/// half-amplitude cosine kernel, the cubic drift, unit-rate adaptation,
/// Gaussian product initial data with a sinusoidal voltage-mean profile,
/// and a 256 x 128 phase-space grid on `[-8, 8]^2`.
pub fn default_config() -> ModelConfig {
    default_config_with_nodes(16)
}

/// [`default_config`] with a different spatial resolution (the sinusoidal
/// voltage-mean profile is re-sampled on the node grid).
pub fn default_config_with_nodes(n_nodes: usize) -> ModelConfig {
    ModelConfig {
        drift: DriftSpec::cubic_default(),
        adaptation: AdaptationParams::new(1.0, 1.0, 0.0),
        kernel: KernelSpec::separable_cosine(0.5, 1),
        grid: SpatialGrid::uniform(n_nodes, 1.0),
        epsilon: 0.1,
        l_v: 8.0,
        l_w: 8.0,
        n_v: 256,
        n_w: 128,
        dt: 2e-3,
        t_end: 2.0,
        initial: InitialSpec::GaussianProduct(GaussianProduct {
            mean_v: PerNode::Values(
                (0..n_nodes)
                    .map(|i| {
                        0.5 * (std::f64::consts::TAU * (i as f64 + 0.5) / n_nodes as f64).sin()
                    })
                    .collect(),
            ),
            mean_w: 0.0.into(),
            var_v: 1.0.into(),
            var_w: 1.0.into(),
        }),
        m_star: 0.1,
        test_mode: false,
    }
}

/// Metrics a convergence study can emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MetricKind {
    /// Distance to the Gaussian-profile tensor product (first-order target).
    Order1W2,
    /// Distance to the Dirac tensor product (zeroth-order target).
    Order0W2,
    /// Voltage concentration energy around the averaged voltage.
    D2,
    /// Second moment.
    M2,
    /// Fourth-order concentration energy (clamped to `2p`).
    Dq,
    /// Nonlinearity commutator error of the averaged voltage equation.
    ErrorE,
    /// Entropy of the phase-space density.
    Entropy,
    /// Companion coupling energies.
    Coupling,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Order1W2 => "order1_w2",
            MetricKind::Order0W2 => "order0_w2",
            MetricKind::D2 => "D2",
            MetricKind::M2 => "M2",
            MetricKind::Dq => "Dq",
            MetricKind::ErrorE => "error_E",
            MetricKind::Entropy => "entropy",
            MetricKind::Coupling => "coupling",
        }
    }
}

/// A sweep over decreasing interaction strengths.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub base_config: ModelConfig,
    pub epsilons: Vec<f64>,
    pub times: Vec<f64>,
    pub n_particles: usize,
    pub metrics: BTreeSet<MetricKind>,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Offsets injected into the limit system's initial data to exercise
    /// non-matched starts: a voltage shift and an adaptation-marginal
    /// translation.
    pub initial_offset_mac: f64,
    pub initial_offset_mes: f64,
}

impl ExperimentPlan {
    pub fn new(base_config: ModelConfig, epsilons: Vec<f64>) -> Self {
        ExperimentPlan {
            base_config,
            epsilons,
            times: vec![0.5, 1.0],
            n_particles: 10_000,
            metrics: [MetricKind::Order1W2, MetricKind::Order0W2, MetricKind::D2]
                .into_iter()
                .collect(),
            seed: 0,
            output_dir: PathBuf::from("out"),
            initial_offset_mac: 0.0,
            initial_offset_mes: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.epsilons.is_empty() {
            return Err(HarnessError::BadPlan("no epsilon values".into()));
        }
        if !self.epsilons.windows(2).all(|p| p[1] < p[0]) {
            return Err(HarnessError::BadPlan("epsilons must be strictly decreasing".into()));
        }
        if self.epsilons.iter().any(|&e| !(e > 0.0)) {
            return Err(HarnessError::BadPlan("epsilons must be positive".into()));
        }
        let t_end = self.base_config.t_end;
        if self.times.iter().any(|&t| !(0.0..=t_end).contains(&t)) {
            return Err(HarnessError::BadPlan(format!("sample times must lie in [0, {t_end}]")));
        }
        Ok(())
    }
}

/// Least squares on `(ln x, ln y)`; returns `(slope, intercept, r2)`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<(f64, f64, f64), HarnessError> {
    if points.len() < 3 {
        return Err(HarnessError::FitDegenerate(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0) || !(y > 0.0)) {
        return Err(HarnessError::FitDegenerate("log-log fit requires positive data".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    Ok(crate::util::linear_fit(&xs, &ys))
}

/// Excludes near-equal consecutive pairs (under 2% relative difference)
/// before fitting; returns the surviving points and whether any pair was
/// saturated. Points are taken in decreasing-x order.
pub fn saturation_filter(points: &[(f64, f64)]) -> (Vec<(f64, f64)>, bool) {
    let mut sorted: Vec<(f64, f64)> = points.to_vec();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut drop = vec![false; sorted.len()];
    let mut saturated = false;
    for i in 0..sorted.len().saturating_sub(1) {
        let (y0, y1) = (sorted[i].1, sorted[i + 1].1);
        let scale = y0.abs().max(y1.abs());
        if scale > 0.0 && (y0 - y1).abs() / scale < 0.02 {
            drop[i] = true;
            drop[i + 1] = true;
            saturated = true;
        }
    }
    let kept: Vec<(f64, f64)> =
        sorted.iter().zip(&drop).filter(|(_, &d)| !d).map(|(p, _)| *p).collect();
    (kept, saturated)
}

/// Initializes the global worker pool from `FHN_THREADS` (defaults to the
/// hardware parallelism). Safe to call more than once.
pub fn init_thread_pool_from_env() {
    if let Ok(v) = std::env::var("FHN_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
    }
}
