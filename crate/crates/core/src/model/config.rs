//! TOML configuration ingestion. Unknown keys are a hard error.

use super::*;
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    drift: DriftSection,
    adaptation: AdaptationSection,
    kernel: KernelSection,
    grid: GridSection,
    numerics: NumericsSection,
    initial: InitialSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DriftSection {
    kind: String,
    #[serde(default)]
    coefficients: Option<Vec<f64>>,
    #[serde(default)]
    p: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdaptationSection {
    a: f64,
    b: f64,
    c: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelSection {
    kind: String,
    #[serde(default)]
    kappa: Option<f64>,
    #[serde(default)]
    amplitude: Option<f64>,
    #[serde(default)]
    frequency: Option<i32>,
    #[serde(default)]
    values: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    r: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    n_nodes: usize,
    rho0: ScalarOrVec,
    #[serde(default)]
    m_star: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NumericsSection {
    epsilon: f64,
    l_v: f64,
    l_w: f64,
    n_v: usize,
    n_w: usize,
    dt: f64,
    t_end: f64,
    #[serde(default)]
    test_mode: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialSection {
    kind: String,
    #[serde(default)]
    mean_v: Option<ScalarOrVec>,
    #[serde(default)]
    mean_w: Option<ScalarOrVec>,
    #[serde(default)]
    var_v: Option<ScalarOrVec>,
    #[serde(default)]
    var_w: Option<ScalarOrVec>,
    #[serde(default)]
    components: Option<Vec<MixtureSection>>,
    #[serde(default)]
    values: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MixtureSection {
    weight: f64,
    mean_v: f64,
    mean_w: f64,
    var_v: f64,
    var_w: f64,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ScalarOrVec {
    Scalar(f64),
    Vec(Vec<f64>),
}

impl From<ScalarOrVec> for PerNode {
    fn from(sv: ScalarOrVec) -> Self {
        match sv {
            ScalarOrVec::Scalar(x) => PerNode::Uniform(x),
            ScalarOrVec::Vec(v) => PerNode::Values(v),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn required<T>(opt: Option<T>, section: &str, key: &str) -> Result<T, ConfigError> {
    opt.ok_or_else(|| ConfigError::Invalid(format!("[{section}] requires key `{key}`")))
}

/// Parses a TOML configuration string into a [`ModelConfig`].
pub fn config_from_toml_str(text: &str) -> Result<ModelConfig, ConfigError> {
    let file: FileConfig = toml::from_str(text)?;

    let drift = match file.drift.kind.as_str() {
        "cubic_default" => {
            let mut d = DriftSpec::cubic_default();
            if let Some(p) = file.drift.p {
                d.p = p;
            }
            d
        }
        "polynomial" => DriftSpec::polynomial(
            required(file.drift.coefficients, "drift", "coefficients")?,
            required(file.drift.p, "drift", "p")?,
        ),
        other => {
            return Err(ConfigError::Invalid(format!(
                "[drift] kind must be cubic_default or polynomial, got `{other}`"
            )))
        }
    };

    let r = file.kernel.r.unwrap_or(f64::INFINITY);
    let kernel = match file.kernel.kind.as_str() {
        "zero" => KernelSpec { kind: KernelKind::Zero, r },
        "constant" => KernelSpec {
            kind: KernelKind::Constant { kappa: required(file.kernel.kappa, "kernel", "kappa")? },
            r,
        },
        "separable_cosine" => KernelSpec {
            kind: KernelKind::SeparableCosine {
                amplitude: required(file.kernel.amplitude, "kernel", "amplitude")?,
                frequency: required(file.kernel.frequency, "kernel", "frequency")?,
            },
            r,
        },
        "tabulated" => KernelSpec {
            kind: KernelKind::Tabulated { values: required(file.kernel.values, "kernel", "values")? },
            r,
        },
        other => {
            return Err(ConfigError::Invalid(format!(
                "[kernel] kind must be zero, constant, separable_cosine or tabulated, got `{other}`"
            )))
        }
    };

    let grid = match file.grid.rho0 {
        ScalarOrVec::Scalar(r0) => SpatialGrid::uniform(file.grid.n_nodes, r0),
        ScalarOrVec::Vec(values) => {
            if values.len() != file.grid.n_nodes {
                return Err(ConfigError::Invalid(format!(
                    "[grid] rho0 has {} entries for n_nodes = {}",
                    values.len(),
                    file.grid.n_nodes
                )));
            }
            let mut g = SpatialGrid::uniform(file.grid.n_nodes, 1.0);
            g.rho0 = values;
            g
        }
    };

    let initial = match file.initial.kind.as_str() {
        "gaussian_product" => InitialSpec::GaussianProduct(GaussianProduct {
            mean_v: required(file.initial.mean_v, "initial", "mean_v")?.into(),
            mean_w: required(file.initial.mean_w, "initial", "mean_w")?.into(),
            var_v: required(file.initial.var_v, "initial", "var_v")?.into(),
            var_w: required(file.initial.var_w, "initial", "var_w")?.into(),
        }),
        "mixture" => InitialSpec::Mixture(
            required(file.initial.components, "initial", "components")?
                .into_iter()
                .map(|c| MixtureComponent {
                    weight: c.weight,
                    mean_v: c.mean_v,
                    mean_w: c.mean_w,
                    var_v: c.var_v,
                    var_w: c.var_w,
                })
                .collect(),
        ),
        "tabulated" => {
            InitialSpec::Tabulated { values: required(file.initial.values, "initial", "values")? }
        }
        other => {
            return Err(ConfigError::Invalid(format!(
                "[initial] kind must be gaussian_product, mixture or tabulated, got `{other}`"
            )))
        }
    };

    Ok(ModelConfig {
        drift,
        adaptation: AdaptationParams::new(
            file.adaptation.a,
            file.adaptation.b,
            file.adaptation.c,
        ),
        kernel,
        grid,
        epsilon: file.numerics.epsilon,
        l_v: file.numerics.l_v,
        l_w: file.numerics.l_w,
        n_v: file.numerics.n_v,
        n_w: file.numerics.n_w,
        dt: file.numerics.dt,
        t_end: file.numerics.t_end,
        initial,
        m_star: file.grid.m_star.unwrap_or(0.1),
        test_mode: file.numerics.test_mode,
    })
}
