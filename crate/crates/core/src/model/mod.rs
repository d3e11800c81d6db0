//! Problem definition: drift nonlinearity, adaptation map, connectivity
//! kernel, spatial discretization and validation of the structural
//! assumptions the solvers rely on.

mod config;

pub use config::config_from_toml_str;

use thiserror::Error;

/// Voltage drift nonlinearity. Restricted to polynomials so the confining
/// conditions can be checked from the coefficients alone.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftSpec {
    pub kind: DriftKind,
    /// Polynomial control exponent: moment diagnostics are meaningful for
    /// orders up to `2p`.
    pub p: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DriftKind {
    /// `N(v) = v - v^3`.
    CubicDefault,
    /// Coefficients in ascending degree order.
    Polynomial(Vec<f64>),
}

impl DriftSpec {
    pub fn cubic_default() -> Self {
        DriftSpec { kind: DriftKind::CubicDefault, p: 3 }
    }

    pub fn polynomial(coefficients: Vec<f64>, p: u32) -> Self {
        DriftSpec { kind: DriftKind::Polynomial(coefficients), p }
    }

    /// Degree and leading coefficient after stripping trailing zeros.
    fn leading(&self) -> (usize, f64) {
        match &self.kind {
            DriftKind::CubicDefault => (3, -1.0),
            DriftKind::Polynomial(c) => {
                let mut d = c.len();
                while d > 0 && c[d - 1] == 0.0 {
                    d -= 1;
                }
                if d == 0 {
                    (0, 0.0)
                } else {
                    (d - 1, c[d - 1])
                }
            }
        }
    }

    /// `N(v)`.
    pub fn eval(&self, v: f64) -> f64 {
        match &self.kind {
            DriftKind::CubicDefault => v - v * v * v,
            DriftKind::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * v + ck),
        }
    }

    /// `N'(v)`.
    pub fn eval_deriv(&self, v: f64) -> f64 {
        match &self.kind {
            DriftKind::CubicDefault => 1.0 - 3.0 * v * v,
            DriftKind::Polynomial(c) => {
                let mut acc = 0.0;
                for k in (1..c.len()).rev() {
                    acc = acc * v + k as f64 * c[k];
                }
                acc
            }
        }
    }

    /// `N''(v)`.
    pub fn eval_second_deriv(&self, v: f64) -> f64 {
        match &self.kind {
            DriftKind::CubicDefault => -6.0 * v,
            DriftKind::Polynomial(c) => {
                let mut acc = 0.0;
                for k in (2..c.len()).rev() {
                    acc = acc * v + (k * (k - 1)) as f64 * c[k];
                }
                acc
            }
        }
    }
}

/// `N(v)`.
pub fn eval_drift(drift: &DriftSpec, v: f64) -> f64 {
    drift.eval(v)
}

/// `omega(v) = N(v) / v` for `v != 0`.
pub fn eval_omega(drift: &DriftSpec, v: f64) -> f64 {
    assert!(v != 0.0, "omega is undefined at v = 0");
    drift.eval(v) / v
}

/// Affine adaptation map `A(v, w) = a v - b w + c` with `b > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptationParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl AdaptationParams {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        AdaptationParams { a, b, c }
    }

    /// `A(v, w)`.
    pub fn eval(&self, v: f64, w: f64) -> f64 {
        self.a * v - self.b * w + self.c
    }

    /// Linear part `A0(v, w) = A(v, w) - A(0, 0)`.
    pub fn eval_linear(&self, v: f64, w: f64) -> f64 {
        self.a * v - self.b * w
    }
}

/// Long-range connectivity kernel over `K x K`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Integrability exponent in `(1, inf]`; `r = inf` gives `r' = 1`.
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelKind {
    Zero,
    Constant { kappa: f64 },
    /// `amplitude * cos(2 pi frequency (x - x'))`.
    SeparableCosine { amplitude: f64, frequency: i32 },
    /// Values tabulated on the node grid, `values[i][j] = Psi(x_i, x_j)`.
    Tabulated { values: Vec<Vec<f64>> },
}

impl KernelSpec {
    pub fn zero() -> Self {
        KernelSpec { kind: KernelKind::Zero, r: f64::INFINITY }
    }

    pub fn constant(kappa: f64) -> Self {
        KernelSpec { kind: KernelKind::Constant { kappa }, r: f64::INFINITY }
    }

    pub fn separable_cosine(amplitude: f64, frequency: i32) -> Self {
        KernelSpec {
            kind: KernelKind::SeparableCosine { amplitude, frequency },
            r: f64::INFINITY,
        }
    }

    /// Conjugate exponent `r'` defined by `1/r + 1/r' = 1`.
    pub fn r_conjugate(&self) -> f64 {
        if self.r.is_infinite() {
            1.0
        } else {
            self.r / (self.r - 1.0)
        }
    }

    /// Evaluates the kernel at a pair of node positions (`i`, `j` are node
    /// indices, used by the tabulated variant).
    pub fn eval(&self, x: f64, xp: f64, i: usize, j: usize) -> f64 {
        match &self.kind {
            KernelKind::Zero => 0.0,
            KernelKind::Constant { kappa } => *kappa,
            KernelKind::SeparableCosine { amplitude, frequency } => {
                amplitude * (std::f64::consts::TAU * *frequency as f64 * (x - xp)).cos()
            }
            KernelKind::Tabulated { values } => values[i][j],
        }
    }
}

/// Midpoint discretization of the spatial domain `K = [0, 1]` together with
/// the neuron spatial density `rho0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub rho0: Vec<f64>,
}

impl SpatialGrid {
    /// Uniform midpoint nodes with a constant density.
    pub fn uniform(n_nodes: usize, rho0: f64) -> Self {
        Self::uniform_with_density(n_nodes, |_| rho0)
    }

    /// Uniform midpoint nodes with a position-dependent density.
    pub fn uniform_with_density(n_nodes: usize, rho0: impl Fn(f64) -> f64) -> Self {
        let nodes: Vec<f64> = (0..n_nodes).map(|i| (i as f64 + 0.5) / n_nodes as f64).collect();
        let weights = vec![1.0 / n_nodes as f64; n_nodes];
        let rho0 = nodes.iter().map(|&x| rho0(x)).collect();
        SpatialGrid { nodes, weights, rho0 }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
}

/// Per-node value that may be given once (broadcast) or per node.
#[derive(Debug, Clone, PartialEq)]
pub enum PerNode {
    Uniform(f64),
    Values(Vec<f64>),
}

impl PerNode {
    pub fn at(&self, node: usize) -> f64 {
        match self {
            PerNode::Uniform(v) => *v,
            PerNode::Values(v) => v[node],
        }
    }

    fn len_ok(&self, n: usize) -> bool {
        match self {
            PerNode::Uniform(_) => true,
            PerNode::Values(v) => v.len() == n,
        }
    }
}

impl From<f64> for PerNode {
    fn from(v: f64) -> Self {
        PerNode::Uniform(v)
    }
}

/// One Gaussian factor of a product initial law.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianProduct {
    pub mean_v: PerNode,
    pub mean_w: PerNode,
    pub var_v: PerNode,
    pub var_w: PerNode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean_v: f64,
    pub mean_w: f64,
    pub var_v: f64,
    pub var_w: f64,
}

/// Per-node initial distribution over `(v, w)`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    GaussianProduct(GaussianProduct),
    Mixture(Vec<MixtureComponent>),
    /// One density matrix shared by every node, laid out `[i_w][i_v]` on the
    /// model grid.
    Tabulated { values: Vec<Vec<f64>> },
}

/// Full problem description.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub drift: DriftSpec,
    pub adaptation: AdaptationParams,
    pub kernel: KernelSpec,
    pub grid: SpatialGrid,
    pub epsilon: f64,
    /// Voltage domain `[-l_v, l_v]`.
    pub l_v: f64,
    /// Adaptation domain `[-l_w, l_w]`.
    pub l_w: f64,
    pub n_v: usize,
    pub n_w: usize,
    pub dt: f64,
    pub t_end: f64,
    pub initial: InitialSpec,
    /// Lower bound parameter for `rho0` (`m_* <= rho0 <= 1/m_*`).
    pub m_star: f64,
    /// Permits non-confining drifts for solver verification runs.
    pub test_mode: bool,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ValidationError {
    #[error("DriftNotConfining: {0}")]
    DriftNotConfining(String),
    #[error("Rho0OutOfBounds: node {node} has rho0 = {value}, outside [{lo}, {hi}]")]
    Rho0OutOfBounds { node: usize, value: f64, lo: f64, hi: f64 },
    #[error("MassNotNormalized: node {node} initial mass {mass} differs from 1 by more than 1e-10")]
    MassNotNormalized { node: usize, mass: f64 },
    #[error("GridTooCoarse: {0}")]
    GridTooCoarse(String),
    #[error("KernelNotEvaluable: {0}")]
    KernelNotEvaluable(String),
    #[error("BadParameter: {0}")]
    BadParameter(String),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("GridTooNarrow: {0}")]
    GridTooNarrow(String),
}

/// A configuration that passed [`validate_config`], with derived
/// discretization data. Immutable after construction and safe to share
/// across threads.
#[derive(Debug, Clone)]
pub struct ValidatedModel {
    cfg: ModelConfig,
    v_centers: Vec<f64>,
    w_centers: Vec<f64>,
    dv: f64,
    dw: f64,
    /// `Psi(x_i, x_j)` on the node grid.
    psi: Vec<f64>,
    /// `(Psi *_r rho0)(x_i)`, constant in time.
    psi_conv_rho0: Vec<f64>,
}

impl ValidatedModel {
    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn n_nodes(&self) -> usize {
        self.cfg.grid.n_nodes()
    }

    pub fn v_centers(&self) -> &[f64] {
        &self.v_centers
    }

    pub fn w_centers(&self) -> &[f64] {
        &self.w_centers
    }

    pub fn dv(&self) -> f64 {
        self.dv
    }

    pub fn dw(&self) -> f64 {
        self.dw
    }

    pub fn cell_area(&self) -> f64 {
        self.dv * self.dw
    }

    pub fn psi_at(&self, i: usize, j: usize) -> f64 {
        self.psi[i * self.n_nodes() + j]
    }

    pub fn psi_conv_rho0(&self) -> &[f64] {
        &self.psi_conv_rho0
    }

    /// `(Psi *_r g)(x_i)` for a per-node vector `g`.
    pub fn conv_right(&self, g: &[f64]) -> Vec<f64> {
        conv_right(&self.cfg.kernel, &self.cfg.grid, g)
    }

    /// `Psi *_r (rho0 * g)` for a per-node vector `g`.
    pub fn conv_right_rho0(&self, g: &[f64]) -> Vec<f64> {
        let weighted: Vec<f64> =
            g.iter().zip(&self.cfg.grid.rho0).map(|(&gi, &ri)| gi * ri).collect();
        self.conv_right(&weighted)
    }
}

/// Checks the structural assumptions and returns a validated model, or the
/// full list of violations.
pub fn validate_config(cfg: &ModelConfig) -> Result<ValidatedModel, Vec<ValidationError>> {
    let mut errors = Vec::new();
    let n_nodes = cfg.grid.n_nodes();

    // Drift: odd leading degree >= 3 with a negative coefficient is a
    // sufficient condition for super-linear confinement.
    if !cfg.test_mode {
        let (d, cd) = cfg.drift.leading();
        if d < 3 || d % 2 == 0 || cd >= 0.0 {
            errors.push(ValidationError::DriftNotConfining(format!(
                "leading term degree {d} with coefficient {cd}; need odd degree >= 3 and a negative coefficient"
            )));
        }
        if d > cfg.drift.p as usize {
            errors.push(ValidationError::DriftNotConfining(format!(
                "degree {d} exceeds the control exponent p = {}",
                cfg.drift.p
            )));
        }
    }

    if !(cfg.adaptation.b > 0.0) {
        errors.push(ValidationError::BadParameter(format!(
            "adaptation rate b must be positive, got {}",
            cfg.adaptation.b
        )));
    }
    if !(cfg.epsilon > 0.0) {
        errors.push(ValidationError::BadParameter(format!(
            "epsilon must be positive, got {}",
            cfg.epsilon
        )));
    }
    if !(cfg.dt > 0.0) {
        errors.push(ValidationError::BadParameter(format!("dt must be positive, got {}", cfg.dt)));
    }
    if cfg.t_end < cfg.dt {
        errors.push(ValidationError::BadParameter(format!(
            "t_end = {} is below one step dt = {}",
            cfg.t_end, cfg.dt
        )));
    }
    if cfg.n_v < 16 || cfg.n_w < 16 {
        errors.push(ValidationError::GridTooCoarse(format!(
            "phase-space grid {}x{} is below the 16x16 minimum",
            cfg.n_v, cfg.n_w
        )));
    }
    if !(cfg.m_star > 0.0) {
        errors.push(ValidationError::BadParameter(format!(
            "m_star must be positive, got {}",
            cfg.m_star
        )));
    }
    if !(cfg.kernel.r > 1.0) {
        errors.push(ValidationError::BadParameter(format!(
            "kernel integrability exponent r must lie in (1, inf], got {}",
            cfg.kernel.r
        )));
    }

    let wsum: f64 = cfg.grid.weights.iter().sum();
    if (wsum - 1.0).abs() > 1e-12 {
        errors.push(ValidationError::GridTooCoarse(format!(
            "quadrature weights sum to {wsum}, expected |K| = 1"
        )));
    }
    if cfg.grid.rho0.len() != n_nodes || cfg.grid.weights.len() != n_nodes {
        errors.push(ValidationError::BadParameter(
            "grid vectors nodes/weights/rho0 must have equal length".into(),
        ));
    } else if cfg.m_star > 0.0 {
        for (node, &r) in cfg.grid.rho0.iter().enumerate() {
            if !(r >= cfg.m_star && r <= 1.0 / cfg.m_star) {
                errors.push(ValidationError::Rho0OutOfBounds {
                    node,
                    value: r,
                    lo: cfg.m_star,
                    hi: 1.0 / cfg.m_star,
                });
            }
        }
    }

    // Kernel must be evaluable and finite at every node pair.
    if let KernelKind::Tabulated { values } = &cfg.kernel.kind {
        if values.len() != n_nodes || values.iter().any(|row| row.len() != n_nodes) {
            errors.push(ValidationError::KernelNotEvaluable(format!(
                "tabulated kernel must be {n_nodes}x{n_nodes}"
            )));
        }
    }
    'kernel: for i in 0..n_nodes {
        for j in 0..n_nodes {
            if let KernelKind::Tabulated { values } = &cfg.kernel.kind {
                if values.len() != n_nodes || values[i].len() != n_nodes {
                    break 'kernel;
                }
            }
            let v = cfg.kernel.eval(cfg.grid.nodes[i], cfg.grid.nodes[j], i, j);
            if !v.is_finite() {
                errors.push(ValidationError::KernelNotEvaluable(format!(
                    "Psi(x_{i}, x_{j}) = {v}"
                )));
                break 'kernel;
            }
        }
    }

    // Initial data sanity per node.
    match &cfg.initial {
        InitialSpec::GaussianProduct(g) => {
            for f in [&g.mean_v, &g.mean_w, &g.var_v, &g.var_w] {
                if !f.len_ok(n_nodes) {
                    errors.push(ValidationError::BadParameter(
                        "per-node initial field has the wrong length".into(),
                    ));
                }
            }
            for node in 0..n_nodes {
                if g.var_v.len_ok(n_nodes)
                    && g.var_w.len_ok(n_nodes)
                    && (g.var_v.at(node) <= 0.0 || g.var_w.at(node) <= 0.0)
                {
                    errors.push(ValidationError::BadParameter(format!(
                        "initial variances must be positive at node {node}"
                    )));
                    break;
                }
            }
        }
        InitialSpec::Mixture(comps) => {
            if comps.is_empty() {
                errors.push(ValidationError::BadParameter("empty mixture".into()));
            }
            let total: f64 = comps.iter().map(|c| c.weight).sum();
            if (total - 1.0).abs() > 1e-10 {
                errors.push(ValidationError::MassNotNormalized { node: 0, mass: total });
            }
            if comps.iter().any(|c| c.weight < 0.0 || c.var_v <= 0.0 || c.var_w <= 0.0) {
                errors.push(ValidationError::BadParameter(
                    "mixture weights must be nonnegative and variances positive".into(),
                ));
            }
        }
        InitialSpec::Tabulated { values } => {
            if values.len() != cfg.n_w || values.iter().any(|row| row.len() != cfg.n_v) {
                errors.push(ValidationError::BadParameter(format!(
                    "tabulated initial data must be {}x{} ([i_w][i_v])",
                    cfg.n_w, cfg.n_v
                )));
            } else {
                let dv = 2.0 * cfg.l_v / cfg.n_v as f64;
                let dw = 2.0 * cfg.l_w / cfg.n_w as f64;
                let mass: f64 = values.iter().flatten().sum::<f64>() * dv * dw;
                if (mass - 1.0).abs() > 1e-10 {
                    errors.push(ValidationError::MassNotNormalized { node: 0, mass });
                }
                if values.iter().flatten().any(|&x| x < 0.0) {
                    errors.push(ValidationError::BadParameter(
                        "tabulated initial density has negative entries".into(),
                    ));
                }
            }
        }
    }

    if !errors.is_empty() {
        return Err(errors);
    }

    let dv = 2.0 * cfg.l_v / cfg.n_v as f64;
    let dw = 2.0 * cfg.l_w / cfg.n_w as f64;
    let v_centers = (0..cfg.n_v).map(|i| -cfg.l_v + (i as f64 + 0.5) * dv).collect();
    let w_centers = (0..cfg.n_w).map(|i| -cfg.l_w + (i as f64 + 0.5) * dw).collect();
    let mut psi = vec![0.0; n_nodes * n_nodes];
    for i in 0..n_nodes {
        for j in 0..n_nodes {
            psi[i * n_nodes + j] = cfg.kernel.eval(cfg.grid.nodes[i], cfg.grid.nodes[j], i, j);
        }
    }
    let psi_conv_rho0 = conv_right(&cfg.kernel, &cfg.grid, &cfg.grid.rho0);
    Ok(ValidatedModel { cfg: cfg.clone(), v_centers, w_centers, dv, dw, psi, psi_conv_rho0 })
}

/// Midpoint quadrature of `(Psi *_r g)(x_i) = int_K Psi(x_i, x') g(x') dx'`.
///
/// The summation order is fixed (ascending `j`), so the result is linear in
/// `g` up to a deterministic rounding pattern.
pub fn conv_right(kernel: &KernelSpec, grid: &SpatialGrid, g: &[f64]) -> Vec<f64> {
    assert_eq!(g.len(), grid.n_nodes(), "conv_right needs one value per node");
    let n = grid.n_nodes();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += kernel.eval(grid.nodes[i], grid.nodes[j], i, j) * g[j] * grid.weights[j];
        }
        out[i] = acc;
    }
    out
}

/// Nonlocal operator `L_rho0[V] = V * (Psi *_r rho0) - Psi *_r (rho0 V)`.
pub fn nonlocal_l(kernel: &KernelSpec, grid: &SpatialGrid, v: &[f64]) -> Vec<f64> {
    assert_eq!(v.len(), grid.n_nodes(), "nonlocal_l needs one value per node");
    let conv_rho = conv_right(kernel, grid, &grid.rho0);
    let weighted: Vec<f64> = v.iter().zip(&grid.rho0).map(|(&vi, &ri)| vi * ri).collect();
    let conv_rho_v = conv_right(kernel, grid, &weighted);
    v.iter()
        .zip(conv_rho.iter().zip(&conv_rho_v))
        .map(|(&vi, (&cr, &crv))| vi * cr - crv)
        .collect()
}

/// Samples the Gaussian profile with mean `big_v` and variance `eps / rho`
/// on `v_grid` cell centers, renormalized to unit mass.
///
/// Errors with `GridTooNarrow` when the grid cannot hold six standard
/// deviations on both sides of the mean.
pub fn maxwellian_profile(
    rho: f64,
    eps: f64,
    big_v: f64,
    v_grid: &[f64],
) -> Result<Vec<f64>, ModelError> {
    assert!(rho > 0.0 && eps > 0.0);
    let sigma = (eps / rho).sqrt();
    let lo = *v_grid.first().expect("empty v grid");
    let hi = *v_grid.last().unwrap();
    if big_v - 6.0 * sigma < lo || big_v + 6.0 * sigma > hi {
        return Err(ModelError::GridTooNarrow(format!(
            "need [{:.3}, {:.3}] around V = {big_v} for sigma = {sigma:.4}, grid covers [{lo}, {hi}]",
            big_v - 6.0 * sigma,
            big_v + 6.0 * sigma
        )));
    }
    let dv = v_grid[1] - v_grid[0];
    let mut vals: Vec<f64> =
        v_grid.iter().map(|&v| (-0.5 * ((v - big_v) / sigma).powi(2)).exp()).collect();
    let mass: f64 = vals.iter().sum::<f64>() * dv;
    for x in &mut vals {
        *x /= mass;
    }
    Ok(vals)
}
