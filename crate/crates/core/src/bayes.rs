//! Random-walk Metropolis under uniform priors, posterior summaries, DIC and the
//! Laplace-Metropolis log marginal likelihood.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::calibrate::{Model, Objective, BETA, DELTA, N_PARAMS};
use crate::error::{Error, Result};
use crate::poisson::{CacheMap, Experiment, PoissonParams, SpecimenCache};
use crate::sn::SNParams;

/// Sampled parameters, in order.
pub const SAMPLED_NAMES: [&str; 6] = ["A1", "A2", "A3", "q", "tau", "beta"];

/// Prior draws tried before giving up on a finite starting point.
pub const INIT_DRAWS: usize = 100;

const TARGET_ACCEPT: f64 = 0.23;
/// Iterations between covariance refreshes during burn-in.
const ADAPT_EVERY: usize = 100;

/// Independent uniform priors on `[A1, A2, A3, q, tau, beta]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorBox {
    pub lower: [f64; 6],
    pub upper: [f64; 6],
}

impl Default for PriorBox {
    fn default() -> Self {
        PriorBox {
            lower: [2.0, -7.0, 20.0, 0.1, 0.01, 0.01],
            upper: [13.0, 0.0, 40.0, 1.0, 1.5, 5.0],
        }
    }
}

impl PriorBox {
    pub fn validate(&self) -> Result<()> {
        for k in 0..6 {
            let (lo, hi) = (self.lower[k], self.upper[k]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!(
                    "prior bounds for {} must satisfy lower < upper, got ({lo}, {hi})",
                    SAMPLED_NAMES[k]
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        contains(&self.lower, &self.upper, x)
    }

    pub fn log_density(&self) -> f64 {
        log_uniform(&self.lower, &self.upper)
    }
}

fn contains(lower: &[f64], upper: &[f64], x: &[f64]) -> bool {
    x.iter().zip(lower.iter().zip(upper)).all(|(v, (lo, hi))| v > lo && v < hi)
}

fn log_uniform(lower: &[f64], upper: &[f64]) -> f64 {
    -lower.iter().zip(upper).map(|(lo, hi)| (hi - lo).ln()).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcOptions {
    pub n_iter: usize,
    pub seed: u64,
    /// Leading share of iterations used for adaptation and then discarded.
    pub burn_in_fraction: f64,
    /// Starting point; prior draws are used when absent or infeasible.
    pub init: Option<Vec<f64>>,
}

impl Default for McmcOptions {
    fn default() -> Self {
        McmcOptions {
            n_iter: 20_000,
            seed: 1,
            burn_in_fraction: 0.2,
            init: None,
        }
    }
}

/// A Metropolis chain. Rows before `burn_in` were produced while adapting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub names: Vec<String>,
    pub samples: Vec<Vec<f64>>,
    pub log_lik: Vec<f64>,
    pub log_post: Vec<f64>,
    /// Acceptance rate after burn-in.
    pub acceptance_rate: f64,
    pub seed: u64,
    pub burn_in: usize,
}

impl Chain {
    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn retained(&self) -> &[Vec<f64>] {
        &self.samples[self.burn_in..]
    }

    pub fn retained_log_lik(&self) -> &[f64] {
        &self.log_lik[self.burn_in..]
    }

    pub fn retained_log_post(&self) -> &[f64] {
        &self.log_post[self.burn_in..]
    }
}

/// Adaptive Gaussian random-walk Metropolis on `exp(log_lik)` times a uniform box prior.
///
/// During burn-in the proposal scale follows a Robbins-Monro recursion towards 23%
/// acceptance; the shape is diagonal for the first half of burn-in and the full
/// empirical covariance for the second half. Everything is frozen afterwards.
pub fn metropolis<F: FnMut(&[f64]) -> f64>(
    mut log_lik: F,
    names: &[&str],
    lower: &[f64],
    upper: &[f64],
    opts: &McmcOptions,
) -> Result<Chain> {
    let d = names.len();
    if lower.len() != d || upper.len() != d {
        return Err(Error::Params("prior bounds do not match the parameter count".into()));
    }
    if !(opts.burn_in_fraction >= 0.0 && opts.burn_in_fraction < 1.0) {
        return Err(Error::Config("burn-in fraction must lie in [0, 1)".into()));
    }
    if opts.n_iter < 2 {
        return Err(Error::Config("at least two iterations are required".into()));
    }
    let log_prior = log_uniform(lower, upper);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut eval = |x: &[f64]| {
        let l = log_lik(x);
        if l.is_nan() {
            f64::NEG_INFINITY
        } else {
            l
        }
    };

    let mut start = None;
    if let Some(x) = &opts.init {
        if x.len() == d && contains(lower, upper, x) {
            let l = eval(x);
            if l > f64::NEG_INFINITY {
                start = Some((x.clone(), l));
            }
        }
    }
    if start.is_none() {
        for _ in 0..INIT_DRAWS {
            let x: Vec<f64> = (0..d)
                .map(|k| lower[k] + (upper[k] - lower[k]) * rng.random::<f64>())
                .collect();
            let l = eval(&x);
            if l > f64::NEG_INFINITY {
                start = Some((x, l));
                break;
            }
        }
    }
    let (mut x, mut ll) = start.ok_or(Error::McmcInit(INIT_DRAWS))?;

    let burn_in = (opts.burn_in_fraction * opts.n_iter as f64).floor() as usize;
    let mut chol = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            (upper[i] - lower[i]) / 10.0
        } else {
            0.0
        }
    });
    let mut log_scale = 0.0f64;
    let mut stats = RunningMoments::new(d);

    let mut chain = Chain {
        names: names.iter().map(|s| s.to_string()).collect(),
        samples: Vec::with_capacity(opts.n_iter),
        log_lik: Vec::with_capacity(opts.n_iter),
        log_post: Vec::with_capacity(opts.n_iter),
        acceptance_rate: 0.0,
        seed: opts.seed,
        burn_in,
    };
    let mut accepted = 0usize;
    for i in 0..opts.n_iter {
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let step = &chol * z * log_scale.exp();
        let y: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        let (alpha, ly) = if contains(lower, upper, &y) {
            let ly = eval(&y);
            ((ly - ll).min(0.0).exp(), ly)
        } else {
            (0.0, f64::NEG_INFINITY)
        };
        let u: f64 = rng.random();
        let accept = u < alpha;
        if accept {
            x = y;
            ll = ly;
        }
        if i < burn_in {
            log_scale += (alpha - TARGET_ACCEPT) / ((i + 1) as f64).powf(0.6);
            stats.push(&x);
            if (i + 1) % ADAPT_EVERY == 0 && stats.n > 2 * d {
                let cov = stats.covariance();
                let shape = if 2 * (i + 1) <= burn_in {
                    DMatrix::from_diagonal(&cov.diagonal())
                } else {
                    cov
                };
                if let Some(l) = proposal_factor(shape, lower, upper) {
                    chol = l;
                    log_scale = 0.0;
                }
            }
        } else if accept {
            accepted += 1;
        }
        chain.samples.push(x.clone());
        chain.log_lik.push(ll);
        chain.log_post.push(ll + log_prior);
    }
    chain.acceptance_rate = accepted as f64 / (opts.n_iter - burn_in) as f64;
    Ok(chain)
}

/// Cholesky factor of `2.38^2 / d * shape`, regularised by a tiny share of the box.
fn proposal_factor(shape: DMatrix<f64>, lower: &[f64], upper: &[f64]) -> Option<DMatrix<f64>> {
    let d = shape.nrows();
    let mut m = shape * (2.38f64.powi(2) / d as f64);
    for k in 0..d {
        m[(k, k)] += (1e-6 * (upper[k] - lower[k])).powi(2);
    }
    m.cholesky().map(|c| c.l())
}

struct RunningMoments {
    n: usize,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
}

impl RunningMoments {
    fn new(d: usize) -> Self {
        RunningMoments {
            n: 0,
            mean: DVector::zeros(d),
            m2: DMatrix::zeros(d, d),
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let x = DVector::from_column_slice(x);
        let before = &x - &self.mean;
        self.mean += &before / self.n as f64;
        let after = &x - &self.mean;
        self.m2 += &before * after.transpose();
    }

    fn covariance(&self) -> DMatrix<f64> {
        &self.m2 / (self.n as f64 - 1.0)
    }
}

/// Posterior of the spatial Poisson model at fixed `delta`.
pub fn mcmc(
    data: &[Experiment],
    caches: &CacheMap,
    prior: &PriorBox,
    delta: f64,
    opts: &McmcOptions,
) -> Result<Chain> {
    prior.validate()?;
    if opts.n_iter < 1000 {
        return Err(Error::Config(format!("n_iter must be at least 1000, got {}", opts.n_iter)));
    }
    let objective = Objective::new(data, caches, Model::Poisson, Some(delta))?;
    let log_lik = |x: &[f64]| {
        let mut theta = [0.0; N_PARAMS];
        theta[..6].copy_from_slice(x);
        theta[DELTA] = delta;
        objective.loglik(&theta)
    };
    metropolis(log_lik, &SAMPLED_NAMES, &prior.lower, &prior.upper, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub q025: Vec<f64>,
    pub q50: Vec<f64>,
    pub q975: Vec<f64>,
    /// Pearson correlations; entries involving a constant parameter are 0.
    pub correlation: Vec<Vec<f64>>,
    /// Parameters with zero posterior spread.
    pub degenerate: Vec<bool>,
    pub histograms: Vec<Histogram>,
}

pub const HISTOGRAM_BINS: usize = 40;

pub fn posterior_summary(chain: &Chain) -> PosteriorSummary {
    let rows = chain.retained();
    let d = chain.dim();
    let n = rows.len() as f64;
    let column = |k: usize| -> Vec<f64> { rows.iter().map(|r| r[k]).collect() };
    let mean: Vec<f64> = (0..d).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    let denom = (n - 1.0).max(1.0);
    let sd: Vec<f64> = (0..d).map(|k| (cov[k][k] / denom).sqrt()).collect();
    let degenerate: Vec<bool> = (0..d).map(|k| cov[k][k] <= 0.0).collect();
    let correlation = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    if i == j {
                        1.0
                    } else if degenerate[i] || degenerate[j] {
                        0.0
                    } else {
                        (cov[i][j] / (cov[i][i] * cov[j][j]).sqrt()).clamp(-1.0, 1.0)
                    }
                })
                .collect()
        })
        .collect();

    let mut q025 = Vec::with_capacity(d);
    let mut q50 = Vec::with_capacity(d);
    let mut q975 = Vec::with_capacity(d);
    let mut histograms = Vec::with_capacity(d);
    for k in 0..d {
        let mut v = column(k);
        v.sort_by(f64::total_cmp);
        q025.push(quantile_sorted(&v, 0.025));
        q50.push(quantile_sorted(&v, 0.5));
        q975.push(quantile_sorted(&v, 0.975));
        histograms.push(histogram(&v, HISTOGRAM_BINS));
    }
    PosteriorSummary {
        names: chain.names.clone(),
        mean,
        sd,
        q025,
        q50,
        q975,
        correlation,
        degenerate,
        histograms,
    }
}

/// Linear interpolation between order statistics.
pub fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let h = p * (v.len() - 1) as f64;
    let i = h.floor() as usize;
    let j = (i + 1).min(v.len() - 1);
    v[i] + (h - i as f64) * (v[j] - v[i])
}

fn histogram(sorted: &[f64], bins: usize) -> Histogram {
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if hi <= lo {
        return Histogram {
            edges: vec![lo, hi],
            counts: vec![sorted.len()],
        };
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0; bins];
    for &v in sorted {
        counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
    }
    Histogram {
        edges: (0..=bins).map(|k| lo + width * k as f64).collect(),
        counts,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dic {
    pub dic: f64,
    /// Effective number of parameters.
    pub p_d: f64,
    pub mean_deviance: f64,
    pub deviance_at_estimate: f64,
    /// The posterior mean had zero likelihood and the best sample was used instead.
    pub map_fallback: bool,
}

/// `2 mean(D) - D(posterior mean)` with `D = -2 log_lik`.
pub fn dic<F: Fn(&[f64]) -> f64>(chain: &Chain, log_lik: F) -> Dic {
    let rows = chain.retained();
    let lls = chain.retained_log_lik();
    let n = rows.len() as f64;
    let mean_deviance = lls.iter().map(|l| -2.0 * l).sum::<f64>() / n;
    let mean: Vec<f64> = (0..chain.dim())
        .map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n)
        .collect();
    let at_mean = log_lik(&mean);
    let (ll_hat, map_fallback) = if at_mean.is_finite() {
        (at_mean, false)
    } else {
        let best = chain
            .retained_log_post()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        (lls[best], true)
    };
    let deviance_at_estimate = -2.0 * ll_hat;
    Dic {
        dic: 2.0 * mean_deviance - deviance_at_estimate,
        p_d: mean_deviance - deviance_at_estimate,
        mean_deviance,
        deviance_at_estimate,
        map_fallback,
    }
}

/// `(d/2) log 2 pi + (1/2) log det(Sigma) + max(log_lik + log prior)` over retained samples.
pub fn laplace_metropolis_logml(chain: &Chain) -> Result<f64> {
    let rows = chain.retained();
    let d = chain.dim();
    if rows.len() <= d {
        return Err(Error::SingularCovariance);
    }
    let mut stats = RunningMoments::new(d);
    for r in rows {
        stats.push(r);
    }
    let cov = stats.covariance();
    let scale = cov.diagonal().iter().fold(0.0f64, |m, v| m.max(*v));
    if !(scale > 0.0) {
        return Err(Error::SingularCovariance);
    }
    let chol = cov.cholesky().ok_or(Error::SingularCovariance)?;
    let l = chol.l_dirty();
    let log_det: f64 = (0..d).map(|k| 2.0 * l[(k, k)].ln()).sum();
    if !log_det.is_finite() || log_det < d as f64 * scale.ln() - 30.0 * d as f64 {
        return Err(Error::SingularCovariance);
    }
    let best = chain
        .retained_log_post()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln() + 0.5 * log_det + best)
}

/// Survival curves of one load case, one per thinned sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalBand {
    pub n_grid: Vec<f64>,
    pub curves: Vec<Vec<f64>>,
}

/// Survival over `n_grid` for one load case.
pub fn survival_curve(
    cache: &SpecimenCache,
    p: &PoissonParams,
    s_max: f64,
    ratio: f64,
    n_grid: &[f64],
) -> Result<Vec<f64>> {
    p.validate()?;
    let t = crate::fem::traction_for(s_max, ratio, p.sn.q, cache.geometry.width_ratio())?;
    let prepared = cache.prepare(p.beta, p.delta)?;
    Ok(n_grid.iter().map(|&n| prepared.survival(n, t, &p.sn)).collect())
}

/// Band from every `stride`-th retained sample at fixed `delta`.
pub fn posterior_survival_band(
    chain: &Chain,
    cache: &SpecimenCache,
    delta: f64,
    s_max: f64,
    ratio: f64,
    n_grid: &[f64],
    stride: usize,
) -> Result<SurvivalBand> {
    if chain.dim() != 6 {
        return Err(Error::Params("survival bands need a six-parameter Poisson chain".into()));
    }
    let stride = stride.max(1);
    let mut curves = Vec::new();
    for r in chain.retained().iter().step_by(stride) {
        let p = PoissonParams {
            sn: SNParams {
                a1: r[0],
                a2: r[1],
                a3: r[2],
                q: r[3],
                tau: r[4],
            },
            beta: r[BETA],
            delta,
        };
        curves.push(survival_curve(cache, &p, s_max, ratio, n_grid)?);
    }
    Ok(SurvivalBand {
        n_grid: n_grid.to_vec(),
        curves,
    })
}
