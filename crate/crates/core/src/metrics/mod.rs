//! Exact discrete optimal-transport distances and diagnostic functionals:
//! Wasserstein-2 in one and two dimensions, moments, relative energies,
//! modified relative entropy, relative Fisher information, exponential
//! moments and entropy.

mod assignment;
mod netsimplex;
#[cfg(test)]
mod tests;

use crate::util::rng::{self, Stream};
use thiserror::Error;

/// Hard cap on optimal-transport support sizes; keeps the exact solvers
/// within interactive runtimes.
pub const OT_SUPPORT_CAP: usize = 4096;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricsError {
    #[error("DimensionMismatch: {0}")]
    DimensionMismatch(String),
    #[error("TooLarge: {0}")]
    TooLarge(String),
    #[error("QOutOfRange: q = {0} must satisfy q >= 2")]
    QOutOfRange(f64),
    #[error("GridMismatch: {0}")]
    GridMismatch(String),
    #[error("BadInput: {0}")]
    BadInput(String),
}

/// Weighted point cloud in one or two dimensions. Weights default to
/// uniform and must sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub coords: Coords,
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Coords {
    One(Vec<f64>),
    Two(Vec<[f64; 2]>),
}

impl SampleSet {
    pub fn from_pairs(points: Vec<[f64; 2]>) -> Result<Self, MetricsError> {
        Self::new(Coords::Two(points), None)
    }

    pub fn from_scalars(points: Vec<f64>) -> Result<Self, MetricsError> {
        Self::new(Coords::One(points), None)
    }

    pub fn new(coords: Coords, weights: Option<Vec<f64>>) -> Result<Self, MetricsError> {
        let n = match &coords {
            Coords::One(v) => {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(MetricsError::BadInput("non-finite sample point".into()));
                }
                v.len()
            }
            Coords::Two(v) => {
                if v.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
                    return Err(MetricsError::BadInput("non-finite sample point".into()));
                }
                v.len()
            }
        };
        if n == 0 {
            return Err(MetricsError::BadInput("empty sample set".into()));
        }
        if let Some(w) = &weights {
            if w.len() != n {
                return Err(MetricsError::BadInput("weights length mismatch".into()));
            }
            if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(MetricsError::BadInput("weights must be nonnegative".into()));
            }
            let total: f64 = w.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(MetricsError::BadInput(format!("weights sum to {total}, expected 1")));
            }
        }
        Ok(SampleSet { coords, weights })
    }

    pub fn len(&self) -> usize {
        match &self.coords {
            Coords::One(v) => v.len(),
            Coords::Two(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weight(&self, i: usize) -> f64 {
        match &self.weights {
            Some(w) => w[i],
            None => 1.0 / self.len() as f64,
        }
    }

    fn pairs(&self) -> Result<&[[f64; 2]], MetricsError> {
        match &self.coords {
            Coords::Two(v) => Ok(v),
            Coords::One(_) => {
                Err(MetricsError::DimensionMismatch("expected 2D samples, got 1D".into()))
            }
        }
    }
}

/// A one-dimensional law given by quantiles: strictly increasing
/// probabilities paired with values. The midpoint layout
/// `p_k = (k + 1/2) / m` is the canonical form.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileTable {
    pub probs: Vec<f64>,
    pub values: Vec<f64>,
}

impl QuantileTable {
    /// Midpoint-probability table from already sorted values.
    pub fn from_sorted_values(values: Vec<f64>) -> Self {
        let m = values.len();
        let probs = (0..m).map(|k| (k as f64 + 0.5) / m as f64).collect();
        QuantileTable { probs, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        let (atoms, weights) = self.atoms();
        atoms.iter().zip(&weights).map(|(&x, &w)| x * w).sum()
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.probs.windows(2).all(|p| p[1] > p[0])
    }

    /// Atom representation: value `k` carries the probability gap around
    /// `p_k`. For midpoint tables every atom has mass `1/m`.
    pub fn atoms(&self) -> (&[f64], Vec<f64>) {
        let m = self.probs.len();
        if m == 1 {
            return (&self.values, vec![1.0]);
        }
        let mut w = Vec::with_capacity(m);
        for k in 0..m {
            let lo = if k == 0 { 0.0 } else { 0.5 * (self.probs[k - 1] + self.probs[k]) };
            let hi =
                if k == m - 1 { 1.0 } else { 0.5 * (self.probs[k] + self.probs[k + 1]) };
            w.push(hi - lo);
        }
        (&self.values, w)
    }
}

/// Density on a uniform phase-space grid, cell centers at
/// `(v0 + (i + 1/2) dv, w0 + (j + 1/2) dw)`, values laid out `[j][i]`
/// (voltage contiguous).
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub v0: f64,
    pub dv: f64,
    pub nv: usize,
    pub w0: f64,
    pub dw: f64,
    pub nw: usize,
    pub values: Vec<f64>,
}

impl GridDensity {
    pub fn new(
        v0: f64,
        dv: f64,
        nv: usize,
        w0: f64,
        dw: f64,
        nw: usize,
        values: Vec<f64>,
    ) -> Result<Self, MetricsError> {
        if values.len() != nv * nw {
            return Err(MetricsError::BadInput("grid values length mismatch".into()));
        }
        if values.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(MetricsError::BadInput("grid density must be finite and nonnegative".into()));
        }
        let g = GridDensity { v0, dv, nv, w0, dw, nw, values };
        let mass = g.mass();
        if (mass - 1.0).abs() > 1e-10 {
            return Err(MetricsError::BadInput(format!("grid mass {mass} differs from 1")));
        }
        Ok(g)
    }

    /// Builds a grid density, rescaling the values to unit mass.
    pub fn from_values_renormalized(
        v0: f64,
        dv: f64,
        nv: usize,
        w0: f64,
        dw: f64,
        nw: usize,
        mut values: Vec<f64>,
    ) -> Result<Self, MetricsError> {
        let mass: f64 = values.iter().sum::<f64>() * dv * dw;
        if !(mass > 0.0) {
            return Err(MetricsError::BadInput("cannot renormalize a massless grid".into()));
        }
        for x in &mut values {
            *x /= mass;
        }
        GridDensity::new(v0, dv, nv, w0, dw, nw, values)
    }

    pub fn cell_area(&self) -> f64 {
        self.dv * self.dw
    }

    pub fn v_center(&self, i: usize) -> f64 {
        self.v0 + (i as f64 + 0.5) * self.dv
    }

    pub fn w_center(&self, j: usize) -> f64 {
        self.w0 + (j as f64 + 0.5) * self.dw
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_area()
    }

    pub fn same_grid(&self, other: &GridDensity) -> bool {
        self.v0 == other.v0
            && self.dv == other.dv
            && self.nv == other.nv
            && self.w0 == other.w0
            && self.dw == other.dw
            && self.nw == other.nw
    }

    /// Mean vector `(E v, E w)`.
    pub fn mean(&self) -> [f64; 2] {
        let a = self.cell_area();
        let mut mv = 0.0;
        let mut mw = 0.0;
        for j in 0..self.nw {
            let w = self.w_center(j);
            for i in 0..self.nv {
                let d = self.values[j * self.nv + i] * a;
                mv += self.v_center(i) * d;
                mw += w * d;
            }
        }
        let m = self.mass();
        [mv / m, mw / m]
    }

    /// Covariance matrix entries `(C_vv, C_vw, C_ww)`.
    pub fn covariance(&self) -> [f64; 3] {
        let [mv, mw] = self.mean();
        let a = self.cell_area();
        let mut cvv = 0.0;
        let mut cvw = 0.0;
        let mut cww = 0.0;
        for j in 0..self.nw {
            let w = self.w_center(j) - mw;
            for i in 0..self.nv {
                let d = self.values[j * self.nv + i] * a;
                let v = self.v_center(i) - mv;
                cvv += v * v * d;
                cvw += v * w * d;
                cww += w * w * d;
            }
        }
        let m = self.mass();
        [cvv / m, cvw / m, cww / m]
    }

    /// Marginal in `w` as atom masses per cell row.
    pub fn w_marginal_atoms(&self) -> (Vec<f64>, Vec<f64>) {
        let mut vals = Vec::with_capacity(self.nw);
        let mut masses = Vec::with_capacity(self.nw);
        let total = self.mass();
        for j in 0..self.nw {
            let m: f64 =
                self.values[j * self.nv..(j + 1) * self.nv].iter().sum::<f64>() * self.cell_area();
            vals.push(self.w_center(j));
            masses.push(m / total);
        }
        (vals, masses)
    }

    /// Truncates to the heaviest cells (at most `cap`), renormalizes, and
    /// returns the weighted support together with the dropped mass.
    pub fn to_weighted_support(&self, cap: usize) -> Result<(SampleSet, f64), MetricsError> {
        let a = self.cell_area();
        let mut order: Vec<u32> = (0..self.values.len() as u32).collect();
        order.sort_by(|&x, &y| {
            self.values[y as usize]
                .partial_cmp(&self.values[x as usize])
                .unwrap()
                .then(x.cmp(&y))
        });
        let keep = order
            .iter()
            .take(cap)
            .filter(|&&idx| self.values[idx as usize] > 0.0)
            .collect::<Vec<_>>();
        if keep.is_empty() {
            return Err(MetricsError::BadInput("grid density has no positive cells".into()));
        }
        let kept_mass: f64 = keep.iter().map(|&&idx| self.values[idx as usize] * a).sum();
        let mut pts = Vec::with_capacity(keep.len());
        let mut wts = Vec::with_capacity(keep.len());
        for &&idx in &keep {
            let i = idx as usize % self.nv;
            let j = idx as usize / self.nv;
            pts.push([self.v_center(i), self.w_center(j)]);
            wts.push(self.values[idx as usize] * a / kept_mass);
        }
        // Largest-remainder style fixup keeps the weight sum at exactly 1.
        let total: f64 = wts.iter().sum();
        if let Some(w0) = wts.first_mut() {
            *w0 += 1.0 - total;
        }
        let dropped = (self.mass() - kept_mass).max(0.0);
        Ok((SampleSet::new(Coords::Two(pts), Some(wts))?, dropped))
    }

    /// Draws `n` points by inverse CDF over cells with uniform in-cell
    /// jitter. Deterministic in `(seed, index)`. The sampling noise floor
    /// for distances is of order `diameter / sqrt(n)`.
    pub fn sample_points(&self, n: usize, seed: u64) -> Vec<[f64; 2]> {
        let mut cdf = Vec::with_capacity(self.values.len());
        let mut acc = 0.0;
        for &x in &self.values {
            acc += x;
            cdf.push(acc);
        }
        let total = acc;
        (0..n)
            .map(|k| {
                let u = rng::uniform(seed, Stream::GridSample, k as u64, 0, 0) * total;
                let idx = cdf.partition_point(|&c| c < u).min(self.values.len() - 1);
                let i = idx % self.nv;
                let j = idx / self.nv;
                let jv = rng::uniform(seed, Stream::GridSample, k as u64, 1, 0) - 0.5;
                let jw = rng::uniform(seed, Stream::GridSample, k as u64, 2, 0) - 0.5;
                [self.v_center(i) + jv * self.dv, self.w_center(j) + jw * self.dw]
            })
            .collect()
    }
}

/// One-dimensional distributions accepted by [`w2_1d`].
#[derive(Debug, Clone, Copy)]
pub enum Dist1d<'a> {
    Samples(&'a SampleSet),
    Quantiles(&'a QuantileTable),
    /// Explicit atoms `(positions, masses)`.
    Atoms(&'a [f64], &'a [f64]),
}

fn atoms_of(d: &Dist1d) -> Result<(Vec<f64>, Vec<f64>), MetricsError> {
    match d {
        Dist1d::Samples(s) => {
            let xs = match &s.coords {
                Coords::One(v) => v.clone(),
                Coords::Two(_) => {
                    return Err(MetricsError::DimensionMismatch(
                        "w2_1d requires one-dimensional samples".into(),
                    ))
                }
            };
            let ws = (0..xs.len()).map(|i| s.weight(i)).collect();
            Ok((xs, ws))
        }
        Dist1d::Quantiles(q) => {
            let (xs, ws) = q.atoms();
            Ok((xs.to_vec(), ws))
        }
        Dist1d::Atoms(xs, ws) => {
            if xs.len() != ws.len() {
                return Err(MetricsError::BadInput("atom arrays length mismatch".into()));
            }
            Ok((xs.to_vec(), ws.to_vec()))
        }
    }
}

/// Exact 1D Wasserstein-2 distance via monotone rearrangement: the L2
/// distance of quantile functions, computed by a merged sweep over the
/// atoms of both laws.
pub fn w2_1d(a: Dist1d, b: Dist1d) -> Result<f64, MetricsError> {
    let (xa, wa) = atoms_of(&a)?;
    let (xb, wb) = atoms_of(&b)?;
    let sort = |xs: Vec<f64>, ws: Vec<f64>| -> (Vec<f64>, Vec<f64>) {
        let mut idx: Vec<usize> = (0..xs.len()).collect();
        idx.sort_by(|&i, &j| xs[i].partial_cmp(&xs[j]).unwrap().then(i.cmp(&j)));
        (idx.iter().map(|&i| xs[i]).collect(), idx.iter().map(|&i| ws[i]).collect())
    };
    let (xa, wa) = sort(xa, wa);
    let (xb, wb) = sort(xb, wb);

    let norm_a: f64 = wa.iter().sum();
    let norm_b: f64 = wb.iter().sum();
    let mut i = 0;
    let mut j = 0;
    let mut pa = 0.0;
    let mut pb = 0.0;
    let mut level = 0.0;
    let mut cost = 0.0;
    while i < xa.len() && j < xb.len() {
        let next_a = pa + wa[i] / norm_a;
        let next_b = pb + wb[j] / norm_b;
        let next = next_a.min(next_b).min(1.0);
        let d = xa[i] - xb[j];
        cost += (next - level).max(0.0) * d * d;
        level = next;
        if next_a <= next_b {
            pa = next_a;
            i += 1;
        }
        if next_b <= next_a {
            pb = next_b;
            j += 1;
        }
    }
    Ok(cost.max(0.0).sqrt())
}

/// Exact 2D Wasserstein-2 distance between weighted point clouds.
///
/// Uniform equal-size inputs go through a shortest-augmenting-path
/// assignment solve; anything else through the transportation network
/// simplex. Support sizes are capped at [`OT_SUPPORT_CAP`] (per side for
/// the assignment route, combined for the simplex).
pub fn w2_2d(a: &SampleSet, b: &SampleSet) -> Result<f64, MetricsError> {
    // Canonical argument order makes the distance exactly symmetric (the
    // solvers sum costs in input order, so rounding would otherwise differ
    // between the two call directions).
    if canonical_order(b, a) {
        return w2_2d(b, a);
    }
    let pa = a.pairs()?;
    let pb = b.pairs()?;
    if a.weights.is_none() && b.weights.is_none() && pa.len() == pb.len() {
        if pa.len() > OT_SUPPORT_CAP {
            return Err(MetricsError::TooLarge(format!(
                "{} uniform samples exceed the cap {OT_SUPPORT_CAP}",
                pa.len()
            )));
        }
        let c2 = assignment::assignment_w2_squared(pa, pb);
        return Ok(c2.max(0.0).sqrt());
    }
    if pa.len() + pb.len() > OT_SUPPORT_CAP {
        return Err(MetricsError::TooLarge(format!(
            "combined support {} exceeds the cap {OT_SUPPORT_CAP}",
            pa.len() + pb.len()
        )));
    }
    let wa: Vec<f64> = (0..pa.len()).map(|i| a.weight(i)).collect();
    let wb: Vec<f64> = (0..pb.len()).map(|i| b.weight(i)).collect();
    let c2 = netsimplex::transport_w2_squared(pa, &wa, pb, &wb)?;
    Ok(c2.max(0.0).sqrt())
}

/// True when `a` strictly precedes `b` under a deterministic total order
/// on (length, points, weights).
fn canonical_order(a: &SampleSet, b: &SampleSet) -> bool {
    use std::cmp::Ordering;
    let key = |s: &SampleSet| -> (usize, bool) { (s.len(), s.weights.is_some()) };
    match key(a).cmp(&key(b)) {
        Ordering::Less => return true,
        Ordering::Greater => return false,
        Ordering::Equal => {}
    }
    let cmp_f = |x: f64, y: f64| x.total_cmp(&y);
    if let (Coords::Two(pa), Coords::Two(pb)) = (&a.coords, &b.coords) {
        for (p, q) in pa.iter().zip(pb) {
            match cmp_f(p[0], q[0]).then(cmp_f(p[1], q[1])) {
                Ordering::Less => return true,
                Ordering::Greater => return false,
                Ordering::Equal => {}
            }
        }
    }
    if let (Some(wa), Some(wb)) = (&a.weights, &b.weights) {
        for (x, y) in wa.iter().zip(wb) {
            match cmp_f(*x, *y) {
                Ordering::Less => return true,
                Ordering::Greater => return false,
                Ordering::Equal => {}
            }
        }
    }
    false
}

/// Closed-form distance to the Dirac-in-voltage tensor with matching
/// adaptation marginal: `sqrt(sum_i weight_i (v_i - V)^2)`.
pub fn w2_to_dirac_tensor(samples: &SampleSet, big_v: f64) -> Result<f64, MetricsError> {
    let pts = samples.pairs()?;
    let mut acc = 0.0;
    for (i, p) in pts.iter().enumerate() {
        let d = p[0] - big_v;
        acc += samples.weight(i) * d * d;
    }
    Ok(acc.sqrt())
}

/// Measures accepted by the moment functionals.
#[derive(Debug, Clone, Copy)]
pub enum MeasureRef<'a> {
    Grid(&'a GridDensity),
    Samples(&'a SampleSet),
}

impl<'a> From<&'a GridDensity> for MeasureRef<'a> {
    fn from(g: &'a GridDensity) -> Self {
        MeasureRef::Grid(g)
    }
}

impl<'a> From<&'a SampleSet> for MeasureRef<'a> {
    fn from(s: &'a SampleSet) -> Self {
        MeasureRef::Samples(s)
    }
}

fn integrate(m: MeasureRef, mut f: impl FnMut(f64, f64) -> f64) -> Result<f64, MetricsError> {
    match m {
        MeasureRef::Grid(g) => {
            let a = g.cell_area();
            let mut acc = 0.0;
            for j in 0..g.nw {
                let w = g.w_center(j);
                for i in 0..g.nv {
                    let d = g.values[j * g.nv + i];
                    if d > 0.0 {
                        acc += f(g.v_center(i), w) * d * a;
                    }
                }
            }
            Ok(acc)
        }
        MeasureRef::Samples(s) => {
            let pts = s.pairs()?;
            let mut acc = 0.0;
            for (i, p) in pts.iter().enumerate() {
                acc += f(p[0], p[1]) * s.weight(i);
            }
            Ok(acc)
        }
    }
}

#[inline]
fn abs_pow(x: f64, q: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if q == 2.0 {
        x * x
    } else {
        (q * x.abs().ln()).exp()
    }
}

/// Moment functional `M_q = E |(v, w)|^q`. `q` may be fractional but must
/// be at least 2; the problem-level bound `q <= 2p` is enforced by callers
/// that know the drift exponent.
pub fn moment_mq(m: MeasureRef, q: f64) -> Result<f64, MetricsError> {
    if !(q >= 2.0) || !q.is_finite() {
        return Err(MetricsError::QOutOfRange(q));
    }
    integrate(m, |v, w| abs_pow((v * v + w * w).sqrt(), q))
}

/// Relative energy `D_q = E |v - V|^q`, the `q`-th voltage concentration
/// moment around `V`.
pub fn relative_energy_dq(m: MeasureRef, q: f64, big_v: f64) -> Result<f64, MetricsError> {
    if !(q >= 2.0) || !q.is_finite() {
        return Err(MetricsError::QOutOfRange(q));
    }
    integrate(m, |v, _| abs_pow(v - big_v, q))
}

/// Modified relative entropy
/// `H_alpha[mu | nu] = int mu ln(mu / (alpha mu + (1 - alpha) nu))`,
/// finite for arbitrary density pairs and bounded by `-ln(alpha)`.
pub fn modified_relative_entropy(
    mu: &GridDensity,
    nu: &GridDensity,
    alpha: f64,
) -> Result<f64, MetricsError> {
    if !mu.same_grid(nu) {
        return Err(MetricsError::GridMismatch("entropy inputs live on different grids".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MetricsError::BadInput(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    let a = mu.cell_area();
    let mut acc = 0.0;
    for (m, n) in mu.values.iter().zip(&nu.values) {
        if *m > 0.0 {
            acc += m * (m / (alpha * m + (1.0 - alpha) * n)).ln() * a;
        }
    }
    Ok(acc.max(0.0))
}

/// Relative Fisher information at `alpha = 1/2`:
/// `I[mu | nu] = int |d_v ln(2 mu / (mu + nu))|^2 mu`, with centered
/// differences in `v` (one-sided at the boundary). Cells with `mu` below
/// 1e-14 contribute zero.
pub fn fisher_i_half(mu: &GridDensity, nu: &GridDensity) -> Result<f64, MetricsError> {
    if !mu.same_grid(nu) {
        return Err(MetricsError::GridMismatch("fisher inputs live on different grids".into()));
    }
    let a = mu.cell_area();
    let nv = mu.nv;
    let log_ratio = |idx: usize| -> Option<f64> {
        let m = mu.values[idx];
        let n = nu.values[idx];
        if m > 1e-14 {
            Some((2.0 * m / (m + n)).ln())
        } else {
            None
        }
    };
    let mut acc = 0.0;
    for j in 0..mu.nw {
        for i in 0..nv {
            let idx = j * nv + i;
            if mu.values[idx] <= 1e-14 {
                continue;
            }
            let here = log_ratio(idx).unwrap();
            let left = if i > 0 { log_ratio(idx - 1) } else { None };
            let right = if i + 1 < nv { log_ratio(idx + 1) } else { None };
            let deriv = match (left, right) {
                (Some(l), Some(r)) => (r - l) / (2.0 * mu.dv),
                (None, Some(r)) => (r - here) / mu.dv,
                (Some(l), None) => (here - l) / mu.dv,
                (None, None) => 0.0,
            };
            acc += deriv * deriv * mu.values[idx] * a;
        }
    }
    Ok(acc)
}

/// Exponential moment `J = int exp(|(v, w)|^2 / 2) mu`, finite on the
/// truncated grid.
pub fn exp_moment_j(density: &GridDensity) -> f64 {
    integrate(MeasureRef::Grid(density), |v, w| (0.5 * (v * v + w * w)).exp()).unwrap()
}

/// Entropy `H = int mu ln mu` with the convention `0 ln 0 = 0`.
pub fn entropy_h(density: &GridDensity) -> f64 {
    let a = density.cell_area();
    density.values.iter().filter(|&&m| m > 0.0).map(|&m| m * m.ln() * a).sum()
}

/// Brute-force minimum of the assignment cost over all permutations.
/// Exposed for oracle tests; feasible only for tiny inputs.
pub fn w2_2d_brute_force(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    assert_eq!(a.len(), b.len());
    assert!(a.len() <= 9, "brute force is factorial");
    let n = a.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let mut c = 0.0;
        for (i, &j) in p.iter().enumerate() {
            let dv = a[i][0] - b[j][0];
            let dw = a[i][1] - b[j][1];
            c += dv * dv + dw * dw;
        }
        if c < best {
            best = c;
        }
    });
    (best / n as f64).sqrt()
}

fn permute(p: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        visit(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, visit);
        p.swap(k, i);
    }
}
