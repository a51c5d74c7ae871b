//! Full-covariance Gaussian mixtures fitted by expectation-maximization.
//!
//! Covariances are kept together with their lower Cholesky factors so that
//! log-densities are evaluated by forward substitution; no inverse is ever
//! formed. All arithmetic is `f64`.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::ByteReader;
use crate::error::{Error, Result};

pub const MODEL_MAGIC: [u8; 4] = *b"WGMM";
pub const MODEL_VERSION: u32 = 1;

/// Fitting parameters.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GmmConfig {
    pub components: usize,
    pub seed: u64,
    /// Diagonal loading added to every covariance after each M-step.
    pub reg: f64,
    pub max_iter: usize,
    /// Relative change of the mean log-likelihood that counts as converged.
    pub tol: f64,
}

impl GmmConfig {
    pub fn new(components: usize, seed: u64) -> Self {
        GmmConfig {
            components,
            seed,
            reg: 1e-6,
            max_iter: 200,
            tol: 1e-4,
        }
    }
}

/// A fitted C-component mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmModel {
    weights: Vec<f64>,
    means: Array2<f64>,
    covariances: Vec<Array2<f64>>,
    cholesky: Vec<Array2<f64>>,
    log_dets: Vec<f64>,
    seed: u64,
    converged: bool,
    final_log_likelihood: f64,
    log_likelihood_trace: Vec<f64>,
    reseeds: Vec<Reseed>,
}

/// A component that lost all responsibility mass and was moved onto the
/// least-explained data point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Reseed {
    pub iteration: usize,
    pub component: usize,
    pub point: usize,
}

impl GmmModel {
    /// Builds a model from explicit parameters. Weights must be positive and
    /// sum to one; covariances must be symmetric positive definite.
    pub fn from_parts(weights: Vec<f64>, means: Array2<f64>, covariances: Vec<Array2<f64>>) -> Result<Self> {
        let (c, e) = means.dim();
        if c == 0 || weights.len() != c || covariances.len() != c {
            return Err(Error::Shape(format!(
                "{} weights, {c} means and {} covariances",
                weights.len(),
                covariances.len()
            )));
        }
        if weights.iter().any(|&w| !(w > 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Data("mixture weights must be positive and sum to 1".into()));
        }
        let mut cholesky = Vec::with_capacity(c);
        let mut log_dets = Vec::with_capacity(c);
        for (k, cov) in covariances.iter().enumerate() {
            if cov.dim() != (e, e) {
                return Err(Error::Shape(format!("covariance {k} is {:?}, expected {e}x{e}", cov.dim())));
            }
            let l = cholesky_lower(cov.view())
                .ok_or_else(|| Error::Numerical(format!("covariance {k} is not positive definite")))?;
            log_dets.push(log_det_from_cholesky(l.view()));
            cholesky.push(l);
        }
        Ok(GmmModel {
            weights,
            means,
            covariances,
            cholesky,
            log_dets,
            seed: 0,
            converged: true,
            final_log_likelihood: f64::NAN,
            log_likelihood_trace: Vec::new(),
            reseeds: Vec::new(),
        })
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> ArrayView2<'_, f64> {
        self.means.view()
    }

    pub fn covariance(&self, c: usize) -> ArrayView2<'_, f64> {
        self.covariances[c].view()
    }

    pub fn cholesky(&self, c: usize) -> ArrayView2<'_, f64> {
        self.cholesky[c].view()
    }

    pub fn log_det(&self, c: usize) -> f64 {
        self.log_dets[c]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn final_log_likelihood(&self) -> f64 {
        self.final_log_likelihood
    }

    /// Mean log-likelihood after initialisation and after every M-step.
    pub fn log_likelihood_trace(&self) -> &[f64] {
        &self.log_likelihood_trace
    }

    pub fn reseeds(&self) -> &[Reseed] {
        &self.reseeds
    }

    /// Log-density of `x` under component `c` (without the mixture weight).
    pub fn component_log_pdf(&self, x: ArrayView1<'_, f64>, c: usize) -> Result<f64> {
        log_pdf(x, self.means.row(c), self.cholesky[c].view(), self.log_dets[c])
    }

    /// Serialises to the `WGMM` blob: header, weights, means, packed lower
    /// Cholesky factors, then seed / converged / final log-likelihood.
    pub fn encode(&self) -> Vec<u8> {
        let (c, e) = self.means.dim();
        let mut out = Vec::new();
        out.extend_from_slice(&MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(c as u32).to_le_bytes());
        out.extend_from_slice(&(e as u32).to_le_bytes());
        let mut put = |v: f64| out.extend_from_slice(&v.to_le_bytes());
        self.weights.iter().for_each(|&w| put(w));
        self.means.iter().for_each(|&m| put(m));
        for l in &self.cholesky {
            for i in 0..e {
                for j in 0..=i {
                    put(l[[i, j]]);
                }
            }
        }
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.push(u8::from(self.converged));
        out.extend_from_slice(&self.final_log_likelihood.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let truncated = || Error::Format("truncated WGMM blob".into());
        let mut r = ByteReader::new(bytes);
        if r.take(4).ok_or_else(truncated)? != MODEL_MAGIC {
            return Err(Error::Format("bad magic, expected WGMM".into()));
        }
        let version = r.u32().ok_or_else(truncated)?;
        if version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported WGMM version {version}")));
        }
        let c = r.u32().ok_or_else(truncated)? as usize;
        let e = r.u32().ok_or_else(truncated)? as usize;
        let mut floats = |n: usize| (0..n).map(|_| r.f64().ok_or_else(truncated)).collect::<Result<Vec<f64>>>();
        let weights = floats(c)?;
        let means = Array2::from_shape_vec((c, e), floats(c * e)?).map_err(|err| Error::Shape(err.to_string()))?;
        let mut cholesky = Vec::with_capacity(c);
        for _ in 0..c {
            let packed = floats(e * (e + 1) / 2)?;
            let mut l = Array2::zeros((e, e));
            let mut it = packed.into_iter();
            for i in 0..e {
                for j in 0..=i {
                    l[[i, j]] = it.next().unwrap();
                }
            }
            cholesky.push(l);
        }
        let seed = r.u64().ok_or_else(truncated)?;
        let converged = r.u8().ok_or_else(truncated)? != 0;
        let final_log_likelihood = r.f64().ok_or_else(truncated)?;
        if r.remaining() != 0 {
            return Err(Error::Format(format!("{} trailing bytes in WGMM blob", r.remaining())));
        }
        let covariances = cholesky.iter().map(|l| l.dot(&l.t())).collect();
        let log_dets = cholesky.iter().map(|l| log_det_from_cholesky(l.view())).collect();
        Ok(GmmModel {
            weights,
            means,
            covariances,
            cholesky,
            log_dets,
            seed,
            converged,
            final_log_likelihood,
            log_likelihood_trace: Vec::new(),
            reseeds: Vec::new(),
        })
    }
}

/// Hard cluster labels plus the per-component log-densities behind them.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterAssignment {
    pub cluster_ids: Vec<usize>,
    /// T x C component log-densities, excluding mixture weights.
    pub log_densities: Array2<f64>,
    /// T x C posterior responsibilities.
    pub responsibilities: Option<Array2<f64>>,
}

impl ClusterAssignment {
    pub fn num_components(&self) -> usize {
        self.log_densities.ncols()
    }

    pub fn len(&self) -> usize {
        self.cluster_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cluster_ids.is_empty()
    }

    /// Number of clips assigned to each component.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_components()];
        for &c in &self.cluster_ids {
            sizes[c] += 1;
        }
        sizes
    }

    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.cluster_ids
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == cluster)
            .map(|(t, _)| t)
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix, or `None`.
pub fn cholesky_lower(a: ArrayView2<'_, f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return None;
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return None;
                }
                l[[i, i]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Some(l)
}

/// `ln det(L Lᵀ) = 2 Σ ln L_ii`.
pub fn log_det_from_cholesky(l: ArrayView2<'_, f64>) -> f64 {
    2.0 * l.diag().iter().map(|d| d.ln()).sum::<f64>()
}

/// Multivariate normal log-density given the Cholesky factor of the covariance.
pub fn log_pdf(
    x: ArrayView1<'_, f64>,
    mean: ArrayView1<'_, f64>,
    chol: ArrayView2<'_, f64>,
    log_det: f64,
) -> Result<f64> {
    let e = x.len();
    if mean.len() != e || chol.dim() != (e, e) {
        return Err(Error::Shape(format!(
            "point of dim {e}, mean of dim {}, factor {:?}",
            mean.len(),
            chol.dim()
        )));
    }
    let mut diff: Vec<f64> = x.iter().zip(mean.iter()).map(|(a, b)| a - b).collect();
    let chol = chol.as_standard_layout();
    let maha = mahalanobis_in_place(chol.as_slice().unwrap(), e, &mut diff);
    Ok(log_pdf_from_parts(e, log_det, maha))
}

#[inline]
fn log_pdf_from_parts(e: usize, log_det: f64, maha: f64) -> f64 {
    -0.5 * (e as f64 * (2.0 * PI).ln() + log_det + maha)
}

/// Solves `L z = diff` in place and returns `‖z‖²`.
#[inline]
fn mahalanobis_in_place(l: &[f64], e: usize, diff: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..e {
        let row = &l[i * e..i * e + i];
        let mut s = diff[i];
        for (lk, zk) in row.iter().zip(&diff[..i]) {
            s -= lk * zk;
        }
        let z = s / l[i * e + i];
        diff[i] = z;
        total += z * z;
    }
    total
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Mixture parameters during EM.
struct Params {
    weights: Vec<f64>,
    means: Array2<f64>,
    covariances: Vec<Array2<f64>>,
    cholesky: Vec<Array2<f64>>,
    log_dets: Vec<f64>,
}

struct EStep {
    mean_log_likelihood: f64,
    /// T x C responsibilities.
    resp: Array2<f64>,
    /// Per-point log mixture density.
    point_log_density: Vec<f64>,
}

/// Fits a C-component full-covariance mixture to the rows of `data`.
pub fn fit(data: ArrayView2<'_, f64>, cfg: &GmmConfig) -> Result<GmmModel> {
    let (t, e) = data.dim();
    let c = cfg.components;
    if c == 0 {
        return Err(Error::Config("need at least one component".into()));
    }
    if c > t {
        return Err(Error::Config(format!("{c} components for only {t} points")));
    }
    if e == 0 {
        return Err(Error::EmptyInput("zero-dimensional data".into()));
    }
    if !(cfg.reg > 0.0) {
        return Err(Error::Config(format!("covariance regularisation must be positive, got {}", cfg.reg)));
    }
    if let Some(((row, col), _)) = data.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite value at row {row}, column {col}")));
    }
    let data = data.as_standard_layout();
    let rows = data.as_slice().unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init_cov = diagonal_variance(data.view(), cfg.reg);
    let means = kmeans_plus_plus(data.view(), c, &mut rng);
    let mut params = Params {
        weights: vec![1.0 / c as f64; c],
        means,
        covariances: vec![init_cov.clone(); c],
        cholesky: Vec::new(),
        log_dets: Vec::new(),
    };
    refactor(&mut params, cfg.reg)?;

    let mut trace = Vec::new();
    let mut reseeds = Vec::new();
    let mut converged = false;
    let mut reseeded_last = false;
    let mut iteration = 0;
    loop {
        let estep = e_step(rows, t, e, &params);
        if !estep.mean_log_likelihood.is_finite() {
            return Err(Error::Numerical(format!(
                "mean log-likelihood became {} at iteration {iteration}",
                estep.mean_log_likelihood
            )));
        }
        if let (Some(&prev), false) = (trace.last(), reseeded_last) {
            let prev: f64 = prev;
            let change = (estep.mean_log_likelihood - prev).abs();
            if change <= cfg.tol * prev.abs().max(f64::MIN_POSITIVE) {
                converged = true;
            }
        }
        trace.push(estep.mean_log_likelihood);
        if converged || iteration >= cfg.max_iter {
            break;
        }
        let moved = m_step(rows, t, e, &estep, &mut params, &init_cov, cfg.reg)?;
        reseeded_last = !moved.is_empty();
        reseeds.extend(moved.into_iter().map(|(component, point)| Reseed {
            iteration,
            component,
            point,
        }));
        iteration += 1;
    }

    let final_log_likelihood = *trace.last().unwrap();
    Ok(GmmModel {
        weights: params.weights,
        means: params.means,
        covariances: params.covariances,
        cholesky: params.cholesky,
        log_dets: params.log_dets,
        seed: cfg.seed,
        converged,
        final_log_likelihood,
        log_likelihood_trace: trace,
        reseeds,
    })
}

/// Biased per-dimension variance of the data plus `reg`, as a diagonal matrix.
fn diagonal_variance(data: ArrayView2<'_, f64>, reg: f64) -> Array2<f64> {
    let (t, e) = data.dim();
    let mut cov = Array2::zeros((e, e));
    for (j, col) in data.columns().into_iter().enumerate() {
        let mean = col.sum() / t as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64;
        cov[[j, j]] = var + reg;
    }
    cov
}

/// k-means++ seeding: first centre uniform, the rest drawn proportionally to
/// the squared distance to the nearest chosen centre.
pub fn kmeans_plus_plus<R: Rng>(data: ArrayView2<'_, f64>, k: usize, rng: &mut R) -> Array2<f64> {
    let (t, e) = data.dim();
    let mut centres = Array2::zeros((k, e));
    let mut nearest = vec![f64::INFINITY; t];
    let mut pick = rng.random_range(0..t);
    for j in 0..k {
        centres.row_mut(j).assign(&data.row(pick));
        if j + 1 == k {
            break;
        }
        let centre = data.row(pick);
        for (d2, row) in nearest.iter_mut().zip(data.rows()) {
            let dist: f64 = row.iter().zip(centre.iter()).map(|(a, b)| (a - b).powi(2)).sum();
            if dist < *d2 {
                *d2 = dist;
            }
        }
        pick = match WeightedIndex::new(&nearest) {
            Ok(dist) => dist.sample(rng),
            // every point coincides with a chosen centre
            Err(_) => rng.random_range(0..t),
        };
    }
    centres
}

fn refactor(params: &mut Params, reg: f64) -> Result<()> {
    params.cholesky.clear();
    params.log_dets.clear();
    for c in 0..params.covariances.len() {
        let l = factor_with_jitter(&mut params.covariances[c], reg)
            .map_err(|msg| Error::Numerical(format!("component {c}: {msg}")))?;
        params.log_dets.push(log_det_from_cholesky(l.view()));
        params.cholesky.push(l);
    }
    Ok(())
}

/// Cholesky factorisation; on failure, adds diagonal jitter growing tenfold
/// from `10·reg` up to `1e6·reg`. The stored covariance includes any jitter used.
fn factor_with_jitter(cov: &mut Array2<f64>, reg: f64) -> std::result::Result<Array2<f64>, String> {
    if let Some(l) = cholesky_lower(cov.view()) {
        return Ok(l);
    }
    let mut jitter = reg * 10.0;
    while jitter <= reg * 1e6 * (1.0 + 1e-12) {
        let mut trial = cov.clone();
        trial.diag_mut().mapv_inplace(|d| d + jitter);
        if let Some(l) = cholesky_lower(trial.view()) {
            *cov = trial;
            return Ok(l);
        }
        jitter *= 10.0;
    }
    Err(format!("covariance singular even with {:e} diagonal jitter", reg * 1e6))
}

fn e_step(rows: &[f64], t: usize, e: usize, params: &Params) -> EStep {
    let c = params.weights.len();
    let mut resp = Array2::<f64>::zeros((t, c));
    let mut point_log_density = Vec::with_capacity(t);
    let log_weights: Vec<f64> = params.weights.iter().map(|w| w.ln()).collect();
    let chol: Vec<&[f64]> = params.cholesky.iter().map(|l| l.as_slice().unwrap()).collect();
    let means = params.means.as_slice().unwrap();
    let mut diff = vec![0.0; e];
    let mut total = 0.0;
    for i in 0..t {
        let x = &rows[i * e..(i + 1) * e];
        let mut row = resp.row_mut(i);
        let row = row.as_slice_mut().unwrap();
        for k in 0..c {
            let mu = &means[k * e..(k + 1) * e];
            for ((d, a), b) in diff.iter_mut().zip(x).zip(mu) {
                *d = a - b;
            }
            let maha = mahalanobis_in_place(chol[k], e, &mut diff);
            row[k] = log_weights[k] + log_pdf_from_parts(e, params.log_dets[k], maha);
        }
        let lse = log_sum_exp(row);
        for v in row.iter_mut() {
            *v = (*v - lse).exp();
        }
        total += lse;
        point_log_density.push(lse);
    }
    EStep {
        mean_log_likelihood: total / t as f64,
        resp,
        point_log_density,
    }
}

/// Closed-form M-step. Returns `(component, point)` pairs for components
/// that were reseeded because their responsibility mass vanished.
fn m_step(
    rows: &[f64],
    t: usize,
    e: usize,
    estep: &EStep,
    params: &mut Params,
    init_cov: &Array2<f64>,
    reg: f64,
) -> Result<Vec<(usize, usize)>> {
    let c = params.weights.len();
    let resp = &estep.resp;
    let mass: Vec<f64> = (0..c).map(|k| resp.column(k).sum()).collect();
    let floor = 1e-10 * t as f64;

    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| {
        estep.point_log_density[a]
            .total_cmp(&estep.point_log_density[b])
            .then(a.cmp(&b))
    });
    let mut next_sparse = order.into_iter();
    let mut moved = Vec::new();

    let mut centred = vec![0.0; e];
    for k in 0..c {
        if mass[k] < floor {
            let point = next_sparse.next().expect("t >= c");
            params
                .means
                .row_mut(k)
                .as_slice_mut()
                .unwrap()
                .copy_from_slice(&rows[point * e..(point + 1) * e]);
            params.covariances[k] = init_cov.clone();
            params.weights[k] = 1.0 / t as f64;
            moved.push((k, point));
            continue;
        }
        params.weights[k] = mass[k] / t as f64;
        let mut mean = vec![0.0; e];
        for i in 0..t {
            let r = resp[[i, k]];
            if r == 0.0 {
                continue;
            }
            for (m, x) in mean.iter_mut().zip(&rows[i * e..(i + 1) * e]) {
                *m += r * x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= mass[k]);
        let mut cov = vec![0.0; e * e];
        for i in 0..t {
            let r = resp[[i, k]];
            if r == 0.0 {
                continue;
            }
            for ((d, x), m) in centred.iter_mut().zip(&rows[i * e..(i + 1) * e]).zip(&mean) {
                *d = x - m;
            }
            for a in 0..e {
                let ra = r * centred[a];
                let out = &mut cov[a * e..a * e + a + 1];
                for (o, cb) in out.iter_mut().zip(&centred[..=a]) {
                    *o += ra * cb;
                }
            }
        }
        let mut sigma = Array2::zeros((e, e));
        for a in 0..e {
            for b in 0..=a {
                let v = cov[a * e + b] / mass[k];
                sigma[[a, b]] = v;
                sigma[[b, a]] = v;
            }
            sigma[[a, a]] += reg;
        }
        params.means.row_mut(k).as_slice_mut().unwrap().copy_from_slice(&mean);
        params.covariances[k] = sigma;
    }
    if !moved.is_empty() {
        let total: f64 = params.weights.iter().sum();
        params.weights.iter_mut().for_each(|w| *w /= total);
    }
    refactor(params, reg)?;
    Ok(moved)
}

/// Hard-assigns every row to its MAP component (ties to the smaller index).
pub fn assign(model: &GmmModel, data: ArrayView2<'_, f64>) -> Result<ClusterAssignment> {
    let (t, e) = data.dim();
    if e != model.dim() {
        return Err(Error::Shape(format!("data has dimension {e}, model has {}", model.dim())));
    }
    let c = model.num_components();
    let data = data.as_standard_layout();
    let rows = data.as_slice().unwrap();
    let means = model.means.as_standard_layout();
    let means = means.as_slice().unwrap();
    let mut log_densities = Array2::zeros((t, c));
    let mut responsibilities = Array2::zeros((t, c));
    let mut cluster_ids = Vec::with_capacity(t);
    let log_weights: Vec<f64> = model.weights.iter().map(|w| w.ln()).collect();
    let mut diff = vec![0.0; e];
    let mut scores = vec![0.0; c];
    for i in 0..t {
        let x = &rows[i * e..(i + 1) * e];
        for k in 0..c {
            for ((d, a), b) in diff.iter_mut().zip(x).zip(&means[k * e..(k + 1) * e]) {
                *d = a - b;
            }
            let maha = mahalanobis_in_place(model.cholesky[k].as_slice().unwrap(), e, &mut diff);
            let density = log_pdf_from_parts(e, model.log_dets[k], maha);
            log_densities[[i, k]] = density;
            scores[k] = log_weights[k] + density;
        }
        let mut best = 0;
        for k in 1..c {
            if scores[k] > scores[best] {
                best = k;
            }
        }
        cluster_ids.push(best);
        let lse = log_sum_exp(&scores);
        for k in 0..c {
            responsibilities[[i, k]] = (scores[k] - lse).exp();
        }
    }
    Ok(ClusterAssignment {
        cluster_ids,
        log_densities,
        responsibilities: Some(responsibilities),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use rand_distr::StandardNormal;

    fn dense_log_pdf(x: &[f64], mean: &[f64], cov: &Array2<f64>) -> f64 {
        let e = x.len();
        let m = nalgebra::DMatrix::from_fn(e, e, |i, j| cov[[i, j]]);
        let inv = m.clone().try_inverse().unwrap();
        let d = nalgebra::DVector::from_fn(e, |i, _| x[i] - mean[i]);
        let quad = (d.transpose() * inv * &d)[(0, 0)];
        -0.5 * (e as f64 * (2.0 * PI).ln() + m.determinant().ln() + quad)
    }

    fn chol_parts(cov: &Array2<f64>) -> (Array2<f64>, f64) {
        let l = cholesky_lower(cov.view()).unwrap();
        let ld = log_det_from_cholesky(l.view());
        (l, ld)
    }

    #[test]
    fn standard_normal_at_mode() {
        let (l, ld) = chol_parts(&Array2::eye(2));
        let v = log_pdf(array![0.0, 0.0].view(), array![0.0, 0.0].view(), l.view(), ld).unwrap();
        assert!((v + (2.0 * PI).ln()).abs() < 1e-12);
        assert!((v + 1.837877).abs() < 1e-6);

        let (l, ld) = chol_parts(&Array2::eye(1));
        let v = log_pdf(array![3.7].view(), array![3.7].view(), l.view(), ld).unwrap();
        assert!((v + 0.918939).abs() < 1e-6);
    }

    #[test]
    fn diagonal_covariance_matches_dense() {
        let cov = array![[4.0, 0.0], [0.0, 1.0]];
        let (l, ld) = chol_parts(&cov);
        let v = log_pdf(array![1.0, 0.0].view(), array![0.0, 0.0].view(), l.view(), ld).unwrap();
        let oracle = dense_log_pdf(&[1.0, 0.0], &[0.0, 0.0], &cov);
        assert!((v - oracle).abs() < 1e-12, "{v} vs {oracle}");
    }

    #[test]
    fn log_pdf_shape_error() {
        let (l, ld) = chol_parts(&Array2::eye(2));
        assert!(matches!(
            log_pdf(array![0.0].view(), array![0.0, 0.0].view(), l.view(), ld),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = array![[4.0, 2.0, 0.4], [2.0, 5.0, 1.0], [0.4, 1.0, 3.0]];
        let l = cholesky_lower(a.view()).unwrap();
        let back = l.dot(&l.t());
        assert!((&back - &a).iter().all(|d| d.abs() < 1e-12));
        assert!(cholesky_lower(array![[1.0, 2.0], [2.0, 1.0]].view()).is_none());
    }

    #[test]
    fn single_component_is_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = Array2::from_shape_fn((50, 3), |_| rng.sample::<f64, _>(StandardNormal));
        let cfg = GmmConfig::new(1, 7);
        let model = fit(data.view(), &cfg).unwrap();
        let mean = data.mean_axis(ndarray::Axis(0)).unwrap();
        let centred = &data - &mean;
        let mut cov = centred.t().dot(&centred) / 50.0;
        cov.diag_mut().mapv_inplace(|d| d + cfg.reg);
        assert!((&model.means().row(0) - &mean).iter().all(|d| d.abs() < 1e-10));
        assert!((&model.covariance(0) - &cov).iter().all(|d| d.abs() < 1e-10));
        assert!((model.weights()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_two_point_pairs() {
        let data = array![[-5.1], [-4.9], [4.9], [5.1]];
        let model = fit(data.view(), &GmmConfig::new(2, 1)).unwrap();
        let mut means: Vec<f64> = model.means().column(0).to_vec();
        means.sort_by(f64::total_cmp);
        assert!((means[0] + 5.0).abs() < 0.05 && (means[1] - 5.0).abs() < 0.05, "{means:?}");
        assert!(model.weights().iter().all(|w| (w - 0.5).abs() < 0.01));
    }

    #[test]
    fn too_many_components() {
        let data = Array2::<f64>::zeros((3, 2));
        assert!(matches!(fit(data.view(), &GmmConfig::new(4, 0)), Err(Error::Config(_))));
    }

    #[test]
    fn duplicate_points_survive_via_jitter() {
        // every point identical: sample covariance is exactly zero, reg keeps it factorable
        let data = Array2::<f64>::from_elem((10, 3), 2.5);
        let model = fit(data.view(), &GmmConfig::new(2, 0)).unwrap();
        for c in 0..2 {
            assert!(model.covariance(c).diag().iter().all(|&d| d > 0.0));
        }
    }

    #[test]
    fn invariants_after_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data = Array2::from_shape_fn((120, 4), |(i, _)| {
            rng.sample::<f64, _>(StandardNormal) + if i % 2 == 0 { 6.0 } else { -6.0 }
        });
        let model = fit(data.view(), &GmmConfig::new(3, 5)).unwrap();
        assert!((model.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for c in 0..3 {
            let l = model.cholesky(c);
            let back = l.dot(&l.t());
            let cov = model.covariance(c);
            let err = (&back - &cov).mapv(|d| d * d).sum().sqrt() / cov.mapv(|d| d * d).sum().sqrt();
            assert!(err < 1e-8);
            let ld: f64 = 2.0 * l.diag().iter().map(|d| d.ln()).sum::<f64>();
            assert!((ld - model.log_det(c)).abs() < 1e-10);
        }
    }

    #[test]
    fn assign_ties_and_separation() {
        let model = GmmModel::from_parts(
            vec![0.5, 0.5],
            array![[-1.0, 0.0], [1.0, 0.0]],
            vec![Array2::eye(2), Array2::eye(2)],
        )
        .unwrap();
        let pts = array![[0.0, 0.0], [1.0, 0.0]];
        let a = assign(&model, pts.view()).unwrap();
        assert_eq!(a.cluster_ids, vec![0, 1]);
        let r = a.responsibilities.as_ref().unwrap();
        assert!((r[[0, 0]] - 0.5).abs() < 1e-12 && (r[[0, 1]] - 0.5).abs() < 1e-12);
        assert!(matches!(assign(&model, Array2::<f64>::zeros((1, 3)).view()), Err(Error::Shape(_))));
    }

    #[test]
    fn model_blob_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = Array2::from_shape_fn((60, 2), |_| rng.sample::<f64, _>(StandardNormal));
        let model = fit(data.view(), &GmmConfig::new(2, 9)).unwrap();
        let back = GmmModel::decode(&model.encode()).unwrap();
        assert_eq!(back.weights(), model.weights());
        assert_eq!(back.means(), model.means());
        for c in 0..2 {
            assert_eq!(back.cholesky(c), model.cholesky(c));
            assert_eq!(back.log_det(c), model.log_det(c));
        }
        assert_eq!(back.seed(), 9);
        let x: Array1<f64> = array![0.3, -0.2];
        assert_eq!(
            back.component_log_pdf(x.view(), 1).unwrap(),
            model.component_log_pdf(x.view(), 1).unwrap()
        );
        let mut bad = model.encode();
        bad.truncate(bad.len() - 3);
        assert!(matches!(GmmModel::decode(&bad), Err(Error::Format(_))));
    }
}
