//! Stochastic solver for the n-neuron network, with an optional companion
//! process driven by the same Gaussian increments (the common-noise
//! coupling) for Wasserstein upper-bound diagnostics.
//!
//! Every random draw is keyed by `(seed, step, node, particle)` through a
//! counter-based generator, so trajectories are pure functions of the
//! configuration and seed, independent of scheduling.

use crate::macroscopic::MacroPath;
use crate::model::{InitialSpec, ModelConfig, ValidatedModel};
use crate::util::expm1_ratio;
use crate::util::rng::{self, Stream};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ParticleError {
    #[error("UnsupportedInitial: {0}")]
    UnsupportedInitial(String),
    #[error("NonFinite: particle {particle} at node {node} during {substep}")]
    NonFinite { node: usize, particle: usize, substep: &'static str },
    #[error("MissingCompanions")]
    MissingCompanions,
    #[error("MissingMacroPath")]
    MissingMacroPath,
}

/// Per-node particle arrays, optional companion arrays sharing the noise,
/// and the RNG bookkeeping. `ids` key the per-particle noise streams, so
/// relabeling particles relabels their trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub t: f64,
    pub step_index: u64,
    pub seed: u64,
    pub n_per_node: usize,
    /// `v[node][particle]`.
    pub v: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub ids: Vec<Vec<u64>>,
    pub companions: Option<Companions>,
}

/// Companion states advanced under the limit dynamics with the same noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Companions {
    pub v: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
}

/// Coupling energies in the concentration-frame convention: the voltage
/// gap is measured relative to `sqrt(eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingEnergies {
    pub t: f64,
    /// Mean squared voltage gap / eps, per node.
    pub a_energy: Vec<f64>,
    /// Mean squared adaptation gap, per node.
    pub b_energy: Vec<f64>,
    /// Mean `(v' - V)(w - w') / sqrt(eps)`, per node.
    pub b2_cross: Vec<f64>,
}

/// Draws i.i.d. initial states from the configured per-node law.
/// Deterministic in the seed.
pub fn init_particles(
    model: &ValidatedModel,
    n_per_node: usize,
    seed: u64,
) -> Result<ParticleEnsemble, ParticleError> {
    assert!(n_per_node >= 1);
    let cfg = model.config();
    let n_nodes = model.n_nodes();
    let mut v = Vec::with_capacity(n_nodes);
    let mut w = Vec::with_capacity(n_nodes);
    let mut ids = Vec::with_capacity(n_nodes);
    for node in 0..n_nodes {
        let mut vn = Vec::with_capacity(n_per_node);
        let mut wn = Vec::with_capacity(n_per_node);
        for i in 0..n_per_node {
            let (vi, wi) = sample_initial(cfg, node, i as u64, seed)?;
            vn.push(vi);
            wn.push(wi);
        }
        v.push(vn);
        w.push(wn);
        ids.push((0..n_per_node as u64).collect());
    }
    Ok(ParticleEnsemble { t: 0.0, step_index: 0, seed, n_per_node, v, w, ids, companions: None })
}

fn sample_initial(
    cfg: &ModelConfig,
    node: usize,
    i: u64,
    seed: u64,
) -> Result<(f64, f64), ParticleError> {
    match &cfg.initial {
        InitialSpec::GaussianProduct(g) => {
            let zv = rng::normal(seed, Stream::InitV, node as u64, i, 0);
            let zw = rng::normal(seed, Stream::InitW, node as u64, i, 0);
            Ok((
                g.mean_v.at(node) + g.var_v.at(node).sqrt() * zv,
                g.mean_w.at(node) + g.var_w.at(node).sqrt() * zw,
            ))
        }
        InitialSpec::Mixture(comps) => {
            let u = rng::uniform(seed, Stream::InitMix, node as u64, i, 0);
            let mut acc = 0.0;
            let mut pick = comps.len() - 1;
            for (k, c) in comps.iter().enumerate() {
                acc += c.weight;
                if u <= acc {
                    pick = k;
                    break;
                }
            }
            let c = &comps[pick];
            let zv = rng::normal(seed, Stream::InitV, node as u64, i, 0);
            let zw = rng::normal(seed, Stream::InitW, node as u64, i, 0);
            Ok((c.mean_v + c.var_v.sqrt() * zv, c.mean_w + c.var_w.sqrt() * zw))
        }
        InitialSpec::Tabulated { .. } => Err(ParticleError::UnsupportedInitial(
            "tabulated initial laws have no particle sampler".into(),
        )),
    }
}

/// Attaches companion arrays coupled comonotonically to the primaries:
/// the companion voltage is the concentration-profile Gaussian evaluated
/// at the primary's standardized deviation, the companion adaptation
/// starts at the primary value.
pub fn attach_matched_companions(
    ens: &mut ParticleEnsemble,
    model: &ValidatedModel,
    macro_v0: &[f64],
) -> Result<(), ParticleError> {
    let cfg = model.config();
    let g = match &cfg.initial {
        InitialSpec::GaussianProduct(g) => g,
        _ => {
            return Err(ParticleError::UnsupportedInitial(
                "matched companions require Gaussian product initial data".into(),
            ))
        }
    };
    let mut cv = Vec::with_capacity(ens.v.len());
    for (node, vn) in ens.v.iter().enumerate() {
        let sigma = (cfg.epsilon / cfg.grid.rho0[node]).sqrt();
        let mv = g.mean_v.at(node);
        let sv = g.var_v.at(node).sqrt();
        cv.push(vn.iter().map(|&v| macro_v0[node] + sigma * (v - mv) / sv).collect::<Vec<f64>>());
    }
    ens.companions = Some(Companions { v: cv, w: ens.w.clone() });
    Ok(())
}

/// Options driving one particle step; tests can disable the noise and
/// cross-check the mean-field closure against the pairwise sum.
#[derive(Debug, Clone, Copy)]
pub struct StepOptions<'a> {
    /// Scales the shared Gaussian increments (1 = physical noise).
    pub noise_scale: f64,
    /// Evaluate the long-range interaction by the O(n^2) pairwise sum
    /// instead of the node-mean closure (cross-check for small ensembles;
    /// identical up to rounding when per-node counts realize the spatial
    /// density times the quadrature weights).
    pub pairwise: bool,
    /// Companion target voltage path; required when companions are present.
    pub macro_path: Option<&'a MacroPath>,
}

impl Default for StepOptions<'_> {
    fn default() -> Self {
        StepOptions { noise_scale: 1.0, pairwise: false, macro_path: None }
    }
}

/// Advances primaries (and companions if present) by one Strang step:
/// half slow drift, exact stiff OU exchange with one shared Gaussian draw
/// per particle, half slow drift.
pub fn step_particles(
    ens: &ParticleEnsemble,
    model: &ValidatedModel,
    dt: f64,
) -> Result<ParticleEnsemble, ParticleError> {
    step_particles_with(ens, model, dt, StepOptions::default())
}

/// [`step_particles`] for ensembles carrying companions; `path` supplies
/// the frozen target voltage of the limit dynamics.
pub fn step_coupled(
    ens: &ParticleEnsemble,
    model: &ValidatedModel,
    dt: f64,
    path: &MacroPath,
) -> Result<ParticleEnsemble, ParticleError> {
    if ens.companions.is_none() {
        return Err(ParticleError::MissingCompanions);
    }
    step_particles_with(ens, model, dt, StepOptions { macro_path: Some(path), ..Default::default() })
}

pub fn step_particles_with(
    ens: &ParticleEnsemble,
    model: &ValidatedModel,
    dt: f64,
    opts: StepOptions,
) -> Result<ParticleEnsemble, ParticleError> {
    assert!(dt > 0.0, "step_particles requires dt > 0");
    let cfg = model.config();
    if ens.companions.is_some() && opts.macro_path.is_none() {
        return Err(ParticleError::MissingMacroPath);
    }

    let mut next = ens.clone();
    next.t = ens.t + dt;
    next.step_index = ens.step_index + 1;
    let step = ens.step_index;
    let half = 0.5 * dt;

    // (i) half-step slow drift, mean field refreshed before the substep.
    drift_half(&mut next, model, half, opts.pairwise, ens.t, opts.macro_path)?;

    // (ii) exact stiff OU exchange toward the node mean; exactly one
    // standard Gaussian draw per particle, shared with the companion.
    let means = node_means(&next.v);
    let seed = next.seed;
    let t_mid = ens.t + half;
    {
        let ParticleEnsemble { v, ids, companions, .. } = &mut next;
        let comp_v: Vec<Option<&mut Vec<f64>>> = match companions.as_mut() {
            Some(c) => c.v.iter_mut().map(Some).collect(),
            None => v.iter().map(|_| None).collect(),
        };
        v.par_iter_mut().zip(comp_v).zip(ids.par_iter()).enumerate().for_each(
            |(node, ((vn, cn), ids_n))| {
                let rho0 = cfg.grid.rho0[node];
                let theta = rho0 / cfg.epsilon;
                let gamma = (-theta * dt).exp();
                let sig =
                    (2.0 * dt * expm1_ratio(2.0 * theta * dt)).max(0.0).sqrt() * opts.noise_scale;
                let vbar = means[node];
                let target = opts.macro_path.map(|p| p.v_at(t_mid, node));
                match cn {
                    Some(cvn) => {
                        let big_v = target.expect("companions require a macro path");
                        for k in 0..vn.len() {
                            let xi = rng::normal(seed, Stream::OuNoise, step, node as u64, ids_n[k]);
                            vn[k] = vbar + (vn[k] - vbar) * gamma + sig * xi;
                            cvn[k] = big_v + (cvn[k] - big_v) * gamma + sig * xi;
                        }
                    }
                    None => {
                        for k in 0..vn.len() {
                            let xi = rng::normal(seed, Stream::OuNoise, step, node as u64, ids_n[k]);
                            vn[k] = vbar + (vn[k] - vbar) * gamma + sig * xi;
                        }
                    }
                }
            },
        );
    }

    // (iii) half-step slow drift again.
    drift_half(&mut next, model, half, opts.pairwise, ens.t + dt, opts.macro_path)?;

    check_finite(&next)?;
    Ok(next)
}

/// Node means by exact fixed-point accumulation, so the result does not
/// depend on particle order (scaling by a power of two is exact for the
/// state magnitudes that occur here).
fn node_means(v: &[Vec<f64>]) -> Vec<f64> {
    const SCALE: f64 = (1u64 << 60) as f64;
    v.iter()
        .map(|vn| {
            let total: i128 = vn.iter().map(|&x| (x * SCALE) as i128).sum();
            total as f64 / SCALE / vn.len() as f64
        })
        .collect()
}

fn drift_half(
    ens: &mut ParticleEnsemble,
    model: &ValidatedModel,
    half: f64,
    pairwise: bool,
    t_eval: f64,
    path: Option<&MacroPath>,
) -> Result<(), ParticleError> {
    let cfg = model.config();

    // Heun on the coupled system: the empirical mean field is refreshed at
    // the predictor stage as well. Freezing it at the substep entry (or
    // taking plain Euler increments) would cap the splitting at first
    // order.
    let stage = |v_all: &[Vec<f64>], w_all: &[Vec<f64>]| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let conv_rho = model.psi_conv_rho0();
        let conv_rho_v = model.conv_right_rho0(&node_means(v_all));
        let mut kv = Vec::with_capacity(v_all.len());
        let mut kw = Vec::with_capacity(v_all.len());
        for node in 0..v_all.len() {
            let mut kvn = Vec::with_capacity(v_all[node].len());
            let mut kwn = Vec::with_capacity(v_all[node].len());
            for k in 0..v_all[node].len() {
                let (v, w) = (v_all[node][k], w_all[node][k]);
                let coupling = if pairwise {
                    pairwise_coupling(model, v_all, node, v)
                } else {
                    conv_rho[node] * v - conv_rho_v[node]
                };
                kvn.push(cfg.drift.eval(v) - w - coupling);
                kwn.push(cfg.adaptation.eval(v, w));
            }
            kv.push(kvn);
            kw.push(kwn);
        }
        (kv, kw)
    };

    let (k1v, k1w) = stage(&ens.v, &ens.w);
    let pred_v: Vec<Vec<f64>> = ens
        .v
        .iter()
        .zip(&k1v)
        .map(|(vn, kn)| vn.iter().zip(kn).map(|(&v, &k)| v + half * k).collect())
        .collect();
    let pred_w: Vec<Vec<f64>> = ens
        .w
        .iter()
        .zip(&k1w)
        .map(|(wn, kn)| wn.iter().zip(kn).map(|(&w, &k)| w + half * k).collect())
        .collect();
    let (k2v, k2w) = stage(&pred_v, &pred_w);
    for node in 0..ens.v.len() {
        for k in 0..ens.v[node].len() {
            ens.v[node][k] += 0.5 * half * (k1v[node][k] + k2v[node][k]);
            ens.w[node][k] += 0.5 * half * (k1w[node][k] + k2w[node][k]);
        }
    }

    if let Some(c) = ens.companions.as_mut() {
        let path = path.ok_or(ParticleError::MissingMacroPath)?;
        let b = cfg.adaptation.b;
        let lambda = (-b * half).exp();
        for (node, wn) in c.w.iter_mut().enumerate() {
            // Exact affine flow with the target voltage at the interval
            // midpoint.
            let big_v = path.v_at(t_eval + 0.5 * half, node);
            let w_star = (cfg.adaptation.a * big_v + cfg.adaptation.c) / b;
            for wk in wn.iter_mut() {
                *wk = w_star + (*wk - w_star) * lambda;
            }
        }
    }
    Ok(())
}

/// Long-range pairwise sum `sum_m Psi(x_node, x_m) rho0_m weight_m
/// mean_j (v - v_j)` evaluated particle by particle.
fn pairwise_coupling(model: &ValidatedModel, all_v: &[Vec<f64>], node: usize, v: f64) -> f64 {
    let grid = &model.config().grid;
    let mut acc = 0.0;
    for (m, vm) in all_v.iter().enumerate() {
        let scale = model.psi_at(node, m) * grid.rho0[m] * grid.weights[m] / vm.len() as f64;
        let mut s = 0.0;
        for &vj in vm {
            s += v - vj;
        }
        acc += scale * s;
    }
    acc
}

fn check_finite(ens: &ParticleEnsemble) -> Result<(), ParticleError> {
    for (node, (vn, wn)) in ens.v.iter().zip(&ens.w).enumerate() {
        for (k, (&v, &w)) in vn.iter().zip(wn).enumerate() {
            if !v.is_finite() || !w.is_finite() {
                return Err(ParticleError::NonFinite { node, particle: k, substep: "state" });
            }
        }
    }
    Ok(())
}

/// Coupling energies of the companion pair in the concentration frame.
pub fn coupling_energies(
    ens: &ParticleEnsemble,
    model: &ValidatedModel,
    path: &MacroPath,
) -> Result<CouplingEnergies, ParticleError> {
    let comp = ens.companions.as_ref().ok_or(ParticleError::MissingCompanions)?;
    let eps = model.config().epsilon;
    let sqrt_eps = eps.sqrt();
    let mut a_energy = Vec::with_capacity(ens.v.len());
    let mut b_energy = Vec::with_capacity(ens.v.len());
    let mut b2_cross = Vec::with_capacity(ens.v.len());
    for node in 0..ens.v.len() {
        let n = ens.v[node].len() as f64;
        let big_v = path.v_at(ens.t, node);
        let mut a = 0.0;
        let mut b = 0.0;
        let mut b2 = 0.0;
        for k in 0..ens.v[node].len() {
            let dv = ens.v[node][k] - comp.v[node][k];
            let dw = ens.w[node][k] - comp.w[node][k];
            a += dv * dv;
            b += dw * dw;
            b2 += (comp.v[node][k] - big_v) * dw;
        }
        a_energy.push(a / n / eps);
        b_energy.push(b / n);
        b2_cross.push(b2 / n / sqrt_eps);
    }
    Ok(CouplingEnergies { t: ens.t, a_energy, b_energy, b2_cross })
}

/// Immutable copy of one node's samples as `(v, w)` pairs.
pub fn empirical_samples(ens: &ParticleEnsemble, node: usize) -> Vec<[f64; 2]> {
    ens.v[node].iter().zip(&ens.w[node]).map(|(&v, &w)| [v, w]).collect()
}

/// Sample dump per node: CSV `v,w[,v_prime,w_prime]`.
pub fn samples_csv(ens: &ParticleEnsemble, node: usize) -> String {
    let mut s = String::new();
    match &ens.companions {
        Some(c) => {
            s.push_str("v,w,v_prime,w_prime\n");
            for k in 0..ens.v[node].len() {
                s.push_str(&format!(
                    "{:.16e},{:.16e},{:.16e},{:.16e}\n",
                    ens.v[node][k], ens.w[node][k], c.v[node][k], c.w[node][k]
                ));
            }
        }
        None => {
            s.push_str("v,w\n");
            for k in 0..ens.v[node].len() {
                s.push_str(&format!("{:.16e},{:.16e}\n", ens.v[node][k], ens.w[node][k]));
            }
        }
    }
    s
}

#[cfg(test)]
mod tests;
