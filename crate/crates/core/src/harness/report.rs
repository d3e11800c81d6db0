//! Report assembly and emission: `metrics.csv`, `slopes.json` and
//! `run_manifest.json`, all byte-deterministic for a given run.

use super::HarnessError;
use crate::model::{DriftKind, InitialSpec, KernelKind, ModelConfig, PerNode};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub epsilon: f64,
    pub t: f64,
    pub node: usize,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n_points: usize,
    pub saturated: bool,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub exploratory: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<ReportRow>,
    pub fitted_slopes: BTreeMap<String, SlopeFit>,
}

impl MetricsReport {
    pub fn metrics_csv(&self) -> String {
        let mut s = String::from("epsilon,t,node,metric,value\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{:.16e},{:.16e},{},{},{:.16e}\n",
                r.epsilon, r.t, r.node, r.metric, r.value
            ));
        }
        s
    }

    /// All rows matching a metric at a time, as `(epsilon, node, value)`.
    pub fn select(&self, metric: &str, t: f64) -> Vec<(f64, usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.metric == metric && (r.t - t).abs() < 1e-12)
            .map(|r| (r.epsilon, r.node, r.value))
            .collect()
    }

    /// Node-max of a metric per epsilon at a time, descending epsilon.
    pub fn node_max_series(&self, metric: &str, t: f64) -> Vec<(f64, f64)> {
        let mut by_eps: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
        for (eps, _, value) in self.select(metric, t) {
            let key = eps.to_bits();
            let e = by_eps.entry(key).or_insert((eps, f64::NEG_INFINITY));
            e.1 = e.1.max(value);
        }
        let mut out: Vec<(f64, f64)> = by_eps.into_values().collect();
        out.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        out
    }
}

fn per_node_json(p: &PerNode) -> serde_json::Value {
    match p {
        PerNode::Uniform(x) => serde_json::json!(x),
        PerNode::Values(v) => serde_json::json!(v),
    }
}

/// Full resolved configuration as JSON for the run manifest.
pub fn config_to_json(cfg: &ModelConfig) -> serde_json::Value {
    let drift = match &cfg.drift.kind {
        DriftKind::CubicDefault => serde_json::json!({"kind": "cubic_default", "p": cfg.drift.p}),
        DriftKind::Polynomial(c) => {
            serde_json::json!({"kind": "polynomial", "coefficients": c, "p": cfg.drift.p})
        }
    };
    let kernel = match &cfg.kernel.kind {
        KernelKind::Zero => serde_json::json!({"kind": "zero", "r": cfg.kernel.r}),
        KernelKind::Constant { kappa } => {
            serde_json::json!({"kind": "constant", "kappa": kappa, "r": cfg.kernel.r})
        }
        KernelKind::SeparableCosine { amplitude, frequency } => serde_json::json!({
            "kind": "separable_cosine", "amplitude": amplitude,
            "frequency": frequency, "r": cfg.kernel.r
        }),
        KernelKind::Tabulated { .. } => {
            serde_json::json!({"kind": "tabulated", "r": cfg.kernel.r})
        }
    };
    let initial = match &cfg.initial {
        InitialSpec::GaussianProduct(g) => serde_json::json!({
            "kind": "gaussian_product",
            "mean_v": per_node_json(&g.mean_v),
            "mean_w": per_node_json(&g.mean_w),
            "var_v": per_node_json(&g.var_v),
            "var_w": per_node_json(&g.var_w),
        }),
        InitialSpec::Mixture(comps) => serde_json::json!({
            "kind": "mixture",
            "components": comps.iter().map(|c| serde_json::json!({
                "weight": c.weight, "mean_v": c.mean_v, "mean_w": c.mean_w,
                "var_v": c.var_v, "var_w": c.var_w,
            })).collect::<Vec<_>>(),
        }),
        InitialSpec::Tabulated { .. } => serde_json::json!({"kind": "tabulated"}),
    };
    serde_json::json!({
        "drift": drift,
        "adaptation": {"a": cfg.adaptation.a, "b": cfg.adaptation.b, "c": cfg.adaptation.c},
        "kernel": kernel,
        "grid": {
            "n_nodes": cfg.grid.n_nodes(),
            "nodes": cfg.grid.nodes,
            "weights": cfg.grid.weights,
            "rho0": cfg.grid.rho0,
            "m_star": cfg.m_star,
        },
        "numerics": {
            "epsilon": cfg.epsilon,
            "l_v": cfg.l_v, "l_w": cfg.l_w,
            "n_v": cfg.n_v, "n_w": cfg.n_w,
            "dt": cfg.dt, "t_end": cfg.t_end,
            "test_mode": cfg.test_mode,
        },
        "initial": initial,
    })
}

/// Writes `metrics.csv`, `slopes.json` and `run_manifest.json` into
/// `output_dir` (idempotent overwrite).
pub fn emit_report(
    report: &MetricsReport,
    output_dir: &Path,
    manifest_extra: serde_json::Value,
) -> Result<(), HarnessError> {
    let io_err = |path: &Path, source: std::io::Error| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(output_dir).map_err(|e| io_err(output_dir, e))?;

    let csv_path = output_dir.join("metrics.csv");
    std::fs::write(&csv_path, report.metrics_csv()).map_err(|e| io_err(&csv_path, e))?;

    let slopes_path = output_dir.join("slopes.json");
    let slopes = serde_json::to_string_pretty(&report.fitted_slopes).expect("slopes serialize");
    std::fs::write(&slopes_path, slopes).map_err(|e| io_err(&slopes_path, e))?;

    let manifest_path = output_dir.join("run_manifest.json");
    let mut manifest = serde_json::Map::new();
    manifest.insert(
        "versions".into(),
        serde_json::json!({
            "fhn-meso": env!("CARGO_PKG_VERSION"),
            "report_format": 1,
        }),
    );
    if let serde_json::Value::Object(extra) = manifest_extra {
        for (k, v) in extra {
            manifest.insert(k, v);
        }
    }
    let manifest = serde_json::to_string_pretty(&serde_json::Value::Object(manifest))
        .expect("manifest serialize");
    std::fs::write(&manifest_path, manifest).map_err(|e| io_err(&manifest_path, e))?;
    Ok(())
}
