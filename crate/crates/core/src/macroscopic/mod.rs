//! Solvers for the limiting macroscopic system: the averaged voltage obeys
//! a nonlocal reaction equation, the adaptation marginal is transported by
//! an affine flow. The marginal is represented by quantiles, which the
//! affine characteristics push forward exactly, so the transport adds no
//! numerical diffusion and 1D Wasserstein distances are direct formulas.

use crate::metrics::QuantileTable;
use crate::model::{nonlocal_l, InitialSpec, ValidatedModel};
use crate::util::{self, inv_norm_cdf};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MacroError {
    #[error("NonFinite: {0}")]
    NonFinite(String),
    #[error("DegenerateQuantiles: {0}")]
    DegenerateQuantiles(String),
}

/// State of the limiting system: per-node averaged voltage and adaptation,
/// per-node quantile table of the adaptation marginal, and the recorded
/// voltage path used by coupling companions.
#[derive(Debug, Clone)]
pub struct MacroState {
    pub t: f64,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub mubar: Vec<QuantileTable>,
    pub v_path: MacroPath,
}

/// Time series of the per-node averaged voltage.
#[derive(Debug, Clone, Default)]
pub struct MacroPath {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl MacroPath {
    pub fn push(&mut self, t: f64, v: Vec<f64>) {
        self.times.push(t);
        self.values.push(v);
    }

    /// Linear interpolation of the recorded voltage at time `t`.
    pub fn v_at(&self, t: f64, node: usize) -> f64 {
        let n = self.times.len();
        assert!(n > 0, "empty macro path");
        if t <= self.times[0] {
            return self.values[0][node];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1][node];
        }
        let k = self.times.partition_point(|&s| s <= t).min(n - 1);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let s = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        (1.0 - s) * self.values[k - 1][node] + s * self.values[k][node]
    }
}

/// Default number of quantiles representing the adaptation marginal.
pub const DEFAULT_QUANTILES: usize = 512;

/// Initial macroscopic state derived from the model's initial law:
/// per-node means for `(V, W)` and the quantile table of the adaptation
/// marginal.
pub fn initial_macro_state(model: &ValidatedModel) -> MacroState {
    initial_macro_state_with(model, DEFAULT_QUANTILES)
}

pub fn initial_macro_state_with(model: &ValidatedModel, m_quantiles: usize) -> MacroState {
    let cfg = model.config();
    let n = model.n_nodes();
    let probs: Vec<f64> =
        (0..m_quantiles).map(|k| (k as f64 + 0.5) / m_quantiles as f64).collect();
    let mut v = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    let mut mubar = Vec::with_capacity(n);
    for node in 0..n {
        let (mv, mw, values) = match &cfg.initial {
            InitialSpec::GaussianProduct(g) => {
                let mw = g.mean_w.at(node);
                let sw = g.var_w.at(node).sqrt();
                let values = probs.iter().map(|&p| mw + sw * inv_norm_cdf(p)).collect();
                (g.mean_v.at(node), mw, values)
            }
            InitialSpec::Mixture(comps) => {
                let mv: f64 = comps.iter().map(|c| c.weight * c.mean_v).sum();
                let mw: f64 = comps.iter().map(|c| c.weight * c.mean_w).sum();
                let cdf = |x: f64| -> f64 {
                    comps
                        .iter()
                        .map(|c| c.weight * util::norm_cdf((x - c.mean_w) / c.var_w.sqrt()))
                        .sum()
                };
                let lo = comps
                    .iter()
                    .map(|c| c.mean_w - 10.0 * c.var_w.sqrt())
                    .fold(f64::INFINITY, f64::min);
                let hi = comps
                    .iter()
                    .map(|c| c.mean_w + 10.0 * c.var_w.sqrt())
                    .fold(f64::NEG_INFINITY, f64::max);
                let values = probs.iter().map(|&p| invert_cdf(&cdf, p, lo, hi)).collect();
                (mv, mw, values)
            }
            InitialSpec::Tabulated { values } => tabulated_marginal(model, values, &probs),
        };
        v.push(mv);
        w.push(mw);
        mubar.push(QuantileTable { probs: probs.clone(), values });
    }
    let mut path = MacroPath::default();
    path.push(0.0, v.clone());
    MacroState { t: 0.0, v, w, mubar, v_path: path }
}

fn invert_cdf(cdf: &dyn Fn(f64) -> f64, p: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn tabulated_marginal(
    model: &ValidatedModel,
    values: &[Vec<f64>],
    probs: &[f64],
) -> (f64, f64, Vec<f64>) {
    let wc = model.w_centers();
    let vc = model.v_centers();
    let mut mv = 0.0;
    let mut mw = 0.0;
    let mut mass = 0.0;
    let mut marg = vec![0.0; wc.len()];
    for (j, row) in values.iter().enumerate() {
        for (i, &x) in row.iter().enumerate() {
            mv += vc[i] * x;
            mw += wc[j] * x;
            mass += x;
            marg[j] += x;
        }
    }
    mv /= mass;
    mw /= mass;
    let total: f64 = marg.iter().sum();
    let mut cdf = Vec::with_capacity(marg.len());
    let mut acc = 0.0;
    for &x in &marg {
        acc += x / total;
        cdf.push(acc);
    }
    let dw = wc[1] - wc[0];
    let q = probs
        .iter()
        .map(|&p| {
            let j = cdf.partition_point(|&c| c < p).min(marg.len() - 1);
            let prev = if j == 0 { 0.0 } else { cdf[j - 1] };
            let frac = if cdf[j] > prev { (p - prev) / (cdf[j] - prev) } else { 0.5 };
            wc[j] + (frac - 0.5) * dw
        })
        .collect();
    (mv, mw, q)
}

/// Weighted integrals `I_k = int_0^h exp(-b (h - s)) s^k ds` for `k <= 3`.
fn exp_weighted_powers(b: f64, h: f64) -> [f64; 4] {
    let x = b * h;
    let mut out = [0.0; 4];
    if x < 0.5 {
        // Series: I_k = h^{k+1} sum_m (-x)^m k! / (k + m + 1)!.
        for (k, slot) in out.iter_mut().enumerate() {
            let mut term = 1.0 / (k as f64 + 1.0);
            let mut sum = term;
            for m in 1..=16 {
                term *= -x / (k as f64 + m as f64 + 1.0);
                sum += term;
                if term.abs() < 1e-18 {
                    break;
                }
            }
            *slot = h.powi(k as i32 + 1) * sum;
        }
    } else {
        out[0] = (1.0 - (-x).exp()) / b;
        for k in 1..4 {
            out[k] = (h.powi(k as i32) - k as f64 * out[k - 1]) / b;
        }
    }
    out
}

fn rhs(
    model: &ValidatedModel,
    v: &[f64],
    w: &[f64],
    correction: Option<f64>,
) -> (Vec<f64>, Vec<f64>) {
    let cfg = model.config();
    let l = nonlocal_l(&cfg.kernel, &cfg.grid, v);
    let dv = (0..v.len())
        .map(|i| {
            let mut f = cfg.drift.eval(v[i]) - w[i] - l[i];
            if let Some(eps) = correction {
                f += 0.5 * eps * cfg.grid.rho0[i] * cfg.drift.eval_second_deriv(v[i]);
            }
            f
        })
        .collect();
    let dw = (0..w.len()).map(|i| cfg.adaptation.eval(v[i], w[i])).collect();
    (dv, dw)
}

fn step_impl(
    state: &MacroState,
    model: &ValidatedModel,
    dt: f64,
    correction: Option<f64>,
) -> Result<MacroState, MacroError> {
    let n = state.v.len();
    let h = dt;
    let ad = model.config().adaptation;

    // Classical RK4 on the coupled (V, W) system; the nonlocal term is
    // refreshed at every stage.
    let add =
        |x: &[f64], k: &[f64], s: f64| -> Vec<f64> { x.iter().zip(k).map(|(&a, &b)| a + s * b).collect() };
    let (k1v, k1w) = rhs(model, &state.v, &state.w, correction);
    let (k2v, k2w) =
        rhs(model, &add(&state.v, &k1v, 0.5 * h), &add(&state.w, &k1w, 0.5 * h), correction);
    let (k3v, k3w) =
        rhs(model, &add(&state.v, &k2v, 0.5 * h), &add(&state.w, &k2w, 0.5 * h), correction);
    let (k4v, k4w) = rhs(model, &add(&state.v, &k3v, h), &add(&state.w, &k3w, h), correction);

    let v1: Vec<f64> = (0..n)
        .map(|i| state.v[i] + h / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]))
        .collect();
    let w1_rk: Vec<f64> = (0..n)
        .map(|i| state.w[i] + h / 6.0 * (k1w[i] + 2.0 * k2w[i] + 2.0 * k3w[i] + k4w[i]))
        .collect();
    if v1.iter().chain(&w1_rk).any(|x| !x.is_finite()) {
        return Err(MacroError::NonFinite(format!("macro state at t = {}", state.t + h)));
    }

    // The adaptation marginal and its mean advance by the same exact
    // affine flow `w -> lambda w + shift`, with the voltage interpolated
    // by a cubic Hermite polynomial between the step endpoints. Using one
    // map for both keeps the committed W equal to the quantile mean to
    // rounding.
    let (dv1, _) = rhs(model, &v1, &w1_rk, correction);
    let lambda = (-ad.b * h).exp();
    let ik = exp_weighted_powers(ad.b, h);
    let shift: Vec<f64> = (0..n)
        .map(|i| {
            let a0 = state.v[i];
            let a1 = k1v[i];
            let a2 = (3.0 * (v1[i] - state.v[i]) - h * (2.0 * k1v[i] + dv1[i])) / (h * h);
            let a3 = (2.0 * (state.v[i] - v1[i]) + h * (k1v[i] + dv1[i])) / (h * h * h);
            let v_int = a0 * ik[0] + a1 * ik[1] + a2 * ik[2] + a3 * ik[3];
            ad.a * v_int + ad.c * ik[0]
        })
        .collect();

    let w1: Vec<f64> = (0..n).map(|i| lambda * state.w[i] + shift[i]).collect();
    let mubar: Vec<QuantileTable> = state
        .mubar
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let values: Vec<f64> = q.values.iter().map(|&x| lambda * x + shift[i]).collect();
            QuantileTable { probs: q.probs.clone(), values }
        })
        .collect();
    for q in &mubar {
        assert!(
            q.values.windows(2).all(|p| p[1] >= p[0]),
            "quantile monotonicity broken by the affine flow"
        );
    }

    let mut v_path = state.v_path.clone();
    v_path.push(state.t + h, v1.clone());
    Ok(MacroState { t: state.t + h, v: v1, w: w1, mubar, v_path })
}

/// Advances the limiting system by one step.
pub fn step_macro(
    state: &MacroState,
    model: &ValidatedModel,
    dt: f64,
) -> Result<MacroState, MacroError> {
    step_impl(state, model, dt, None)
}

/// Advances the corrected system whose voltage equation carries the extra
/// `(eps / 2) rho0 N''(V)` reaction term. `eps = 0` reproduces
/// [`step_macro`] bit for bit.
pub fn step_corrected_macro(
    state: &MacroState,
    model: &ValidatedModel,
    dt: f64,
    eps: f64,
) -> Result<MacroState, MacroError> {
    if eps == 0.0 {
        return step_macro(state, model, dt);
    }
    step_impl(state, model, dt, Some(eps))
}

/// Reconstructs a grid density (values per cell, unit mass) from a
/// quantile table by differentiating the piecewise-linear quantile
/// interpolant. Collapsed tables (width under a tenth of a cell) come
/// back as a single-cell spike.
pub fn mubar_pushforward_density(
    state: &MacroState,
    node: usize,
    w_centers: &[f64],
) -> Result<Vec<f64>, MacroError> {
    let q = &state.mubar[node];
    if q.is_empty()
        || !q.probs.windows(2).all(|p| p[1] > p[0])
        || q.values.iter().any(|x| !x.is_finite())
        || q.values.windows(2).any(|v| v[1] < v[0])
    {
        return Err(MacroError::DegenerateQuantiles(format!(
            "node {node}: quantile table is not a valid monotone law"
        )));
    }
    let dw = w_centers[1] - w_centers[0];
    let w_lo = w_centers[0] - 0.5 * dw;
    let nw = w_centers.len();
    let mut mass = vec![0.0; nw];
    let cell_of = |x: f64| -> usize {
        (((x - w_lo) / dw).floor() as isize).clamp(0, nw as isize - 1) as usize
    };

    let width = q.values.last().unwrap() - q.values.first().unwrap();
    if width < dw / 10.0 {
        mass[cell_of(q.mean())] = 1.0;
        return Ok(mass.iter().map(|m| m / dw).collect());
    }

    // End atoms carry the probability outside the first/last quantile.
    mass[cell_of(q.values[0])] += q.probs[0];
    mass[cell_of(*q.values.last().unwrap())] += 1.0 - q.probs.last().unwrap();
    for k in 0..q.len() - 1 {
        let (x0, x1) = (q.values[k], q.values[k + 1]);
        let dm = q.probs[k + 1] - q.probs[k];
        if x1 - x0 < 1e-300 {
            mass[cell_of(x0)] += dm;
            continue;
        }
        // Uniform density dm / (x1 - x0) split over the covered cells.
        let j0 = cell_of(x0);
        let j1 = cell_of(x1);
        for (j, m) in mass.iter_mut().enumerate().take(j1 + 1).skip(j0) {
            let cell_lo = w_lo + j as f64 * dw;
            let lo = x0.max(cell_lo);
            let hi = x1.min(cell_lo + dw);
            if hi > lo {
                *m += dm * (hi - lo) / (x1 - x0);
            }
        }
    }
    let total: f64 = mass.iter().sum();
    Ok(mass.iter().map(|m| m / total / dw).collect())
}

/// Trajectory dump `t,node,V,W` for a sequence of states.
pub fn trajectory_csv(states: &[MacroState]) -> String {
    let mut out = String::from("t,node,V,W\n");
    for s in states {
        for node in 0..s.v.len() {
            out.push_str(&format!(
                "{:.16e},{},{:.16e},{:.16e}\n",
                s.t, node, s.v[node], s.w[node]
            ));
        }
    }
    out
}

/// Quantile dump `t,node,prob,w` for one state.
pub fn quantile_csv(state: &MacroState) -> String {
    let mut out = String::from("t,node,prob,w\n");
    for (node, q) in state.mubar.iter().enumerate() {
        for (p, w) in q.probs.iter().zip(&q.values) {
            out.push_str(&format!("{:.16e},{},{:.16e},{:.16e}\n", state.t, node, p, w));
        }
    }
    out
}
