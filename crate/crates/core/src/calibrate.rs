//! Maximum-likelihood fitting, profile likelihood in the averaging length, and AIC.
//!
//! Parameters are handled as a vector in the fixed order `[A1, A2, A3, q, tau, beta,
//! delta]` with a mask selecting the free ones.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::MaterialParams;
use crate::geometry::SpecimenGeometry;
use crate::optim::{nelder_mead, Logistic, NelderMeadOptions};
use crate::poisson::{
    experiment_site_sums, max_stress_log_likelihood_with, poisson_log_likelihood_prepared, CacheMap, Experiment,
    PoissonParams, PreparedSpecimen, SpecimenCache,
};
use crate::sn::SNParams;
use crate::stress::averaged_profile;
use crate::stress::SUBGRID;

pub const N_PARAMS: usize = 7;
pub const PARAM_NAMES: [&str; N_PARAMS] = ["A1", "A2", "A3", "q", "tau", "beta", "delta"];
pub const A3: usize = 2;
pub const BETA: usize = 5;
pub const DELTA: usize = 6;

/// Half-width of the chi-square(1) 95% drop used for profile intervals.
pub const PROFILE_DROP: f64 = 1.92;

/// Scouted starts that are refined to full tolerance.
const POLISHED: usize = 3;
/// Offsets in `beta` tried around the profiled optimum, and the number of rounds.
const BETA_WALK_STEPS: [f64; 6] = [-0.3, -0.15, -0.05, 0.05, 0.15, 0.3];
const BETA_WALK_ROUNDS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    /// Lognormal S-N model at the peak averaged stress of the specimen.
    MaxStress,
    /// Spatial Poisson model over the whole surface.
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: [f64; N_PARAMS],
    pub upper: [f64; N_PARAMS],
}

impl Default for Bounds {
    /// The uniform prior box, with the averaging length over the default grid.
    fn default() -> Self {
        Bounds {
            lower: [2.0, -7.0, 20.0, 0.1, 0.01, 0.01, 0.0],
            upper: [13.0, 0.0, 40.0, 1.0, 1.5, 5.0, 0.05],
        }
    }
}

impl Bounds {
    pub fn validate(&self) -> Result<()> {
        for k in 0..N_PARAMS {
            let (lo, hi) = (self.lower[k], self.upper[k]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Params(format!(
                    "bounds for {} must be finite with lower < upper, got ({lo}, {hi})",
                    PARAM_NAMES[k]
                )));
            }
        }
        Ok(())
    }

    fn logistic(&self, k: usize) -> Logistic {
        Logistic {
            lo: self.lower[k],
            hi: self.upper[k],
        }
    }
}

/// What to fit: model, free mask, bounds and values for the fixed parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    pub model: Model,
    pub free: [bool; N_PARAMS],
    pub bounds: Bounds,
    /// Values of fixed parameters; also the first starting point for free ones.
    pub initial: [f64; N_PARAMS],
}

impl FitSpec {
    /// All S-N parameters and `beta` free, `delta` fixed.
    pub fn new(model: Model, delta: f64) -> Self {
        let bounds = Bounds::default();
        let mut initial = [0.0; N_PARAMS];
        for k in 0..N_PARAMS {
            initial[k] = 0.5 * (bounds.lower[k] + bounds.upper[k]);
        }
        initial[DELTA] = delta;
        let mut free = [true; N_PARAMS];
        free[DELTA] = false;
        if model == Model::MaxStress {
            free[BETA] = false;
        }
        FitSpec {
            model,
            free,
            bounds,
            initial,
        }
    }

    /// Lets `delta` vary within its bounds.
    pub fn with_free_delta(mut self) -> Self {
        self.free[DELTA] = true;
        self
    }

    pub fn n_free(&self) -> usize {
        self.free.iter().filter(|&&f| f).count()
    }

    fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if self.n_free() == 0 {
            return Err(Error::Params("no free parameters to fit".into()));
        }
        if self.model == Model::MaxStress && self.free[BETA] {
            return Err(Error::Params("beta does not enter the max-stress model".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub starts: usize,
    pub seed: u64,
    /// Extra Nelder-Mead runs restarted from the best point of each start.
    pub restarts: usize,
    pub max_evals: usize,
    pub ftol: f64,
    pub xtol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            starts: 8,
            seed: 1,
            restarts: 4,
            max_evals: 3000,
            ftol: 1e-9,
            xtol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: Model,
    pub estimates: [f64; N_PARAMS],
    pub free: [bool; N_PARAMS],
    pub max_loglik: f64,
    pub aic: f64,
    pub converged: bool,
    pub n_evals: usize,
    pub bounds: Bounds,
    pub seed: u64,
}

impl FitResult {
    pub fn sn_params(&self) -> SNParams {
        let e = &self.estimates;
        SNParams {
            a1: e[0],
            a2: e[1],
            a3: e[2],
            q: e[3],
            tau: e[4],
        }
    }

    pub fn poisson_params(&self) -> PoissonParams {
        PoissonParams {
            sn: self.sn_params(),
            beta: self.estimates[BETA],
            delta: self.estimates[DELTA],
        }
    }

    /// Estimates keyed by parameter name.
    pub fn named(&self) -> BTreeMap<&'static str, f64> {
        PARAM_NAMES.iter().copied().zip(self.estimates).collect()
    }

    pub fn n_free(&self) -> usize {
        self.free.iter().filter(|&&f| f).count()
    }
}

/// `2 (p - loglik)`.
pub fn aic(p: usize, loglik: f64) -> f64 {
    2.0 * (p as f64 - loglik)
}

/// Likelihood of a full parameter vector; `-inf` outside the model's support.
pub struct Objective<'a> {
    data: &'a [Experiment],
    caches: &'a CacheMap,
    model: Model,
    /// Sorted sites per specimen when `delta` is fixed.
    fixed_sites: Option<BTreeMap<String, PreparedSpecimen>>,
    fixed_peaks: Option<BTreeMap<String, f64>>,
    beta_levels: Option<BetaLevels>,
}

/// The distinct values `gamma(beta)` takes per specimen as `beta` sweeps its bounds.
///
/// `gamma` is a step function of `beta`, so maximising over `beta` for fixed S-N
/// parameters is a finite search over its plateaus.
struct BetaLevels {
    ids: Vec<String>,
    /// Plateau midpoints.
    betas: Vec<f64>,
    /// `1 / gamma` and `log gamma`, plateau-major.
    inv_gamma: Vec<f64>,
    log_gamma: Vec<f64>,
}

impl BetaLevels {
    fn new(caches: &CacheMap, ids: Vec<String>, lo: f64, hi: f64) -> Self {
        let ceiling = ids
            .iter()
            .map(|id| caches[id].max_pointwise())
            .fold(f64::INFINITY, f64::min);
        let hi = hi.min(ceiling);
        let mut cuts = vec![lo];
        if hi > lo {
            for id in &ids {
                cuts.extend(caches[id].pointwise.values.iter().copied().filter(|&v| v > lo && v < hi));
            }
            cuts.push(hi);
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut levels = BetaLevels {
            ids,
            betas: Vec::new(),
            inv_gamma: Vec::new(),
            log_gamma: Vec::new(),
        };
        for w in cuts.windows(2) {
            let beta = 0.5 * (w[0] + w[1]);
            let gammas: Option<Vec<f64>> = levels.ids.iter().map(|id| caches[id].gamma(beta).ok()).collect();
            if let Some(g) = gammas {
                levels.betas.push(beta);
                levels.inv_gamma.extend(g.iter().map(|x| 1.0 / x));
                levels.log_gamma.extend(g.iter().map(|x| x.ln()));
            }
        }
        levels
    }

    /// Best plateau for per-specimen totals `(sum log survival, failures, sum log hazard)`.
    fn maximise(&self, totals: &[(f64, f64, f64)]) -> (f64, f64) {
        let s = self.ids.len();
        let mut best = (f64::NEG_INFINITY, f64::NAN);
        for (k, &beta) in self.betas.iter().enumerate() {
            let mut ll = 0.0;
            for (j, &(surv, fails, haz)) in totals.iter().enumerate() {
                ll += surv * self.inv_gamma[k * s + j] - fails * self.log_gamma[k * s + j] + haz;
            }
            if ll > best.0 {
                best = (ll, beta);
            }
        }
        best
    }
}

impl<'a> Objective<'a> {
    /// `fixed_delta` precomputes the site profiles once (exactly, even off the grid).
    pub fn new(
        data: &'a [Experiment],
        caches: &'a CacheMap,
        model: Model,
        fixed_delta: Option<f64>,
    ) -> Result<Self> {
        let mut obj = Objective {
            data,
            caches,
            model,
            fixed_sites: None,
            fixed_peaks: None,
            beta_levels: None,
        };
        for e in data {
            e.validate()?;
            if !caches.contains_key(&e.specimen_id) {
                return Err(Error::Dataset(format!(
                    "no specimen geometry for id '{}'",
                    e.specimen_id
                )));
            }
        }
        if let Some(delta) = fixed_delta {
            let profiles = obj.exact_profiles(delta)?;
            let mut sites = BTreeMap::new();
            let mut peaks = BTreeMap::new();
            for (id, values) in profiles {
                let c = &caches[&id];
                peaks.insert(id.clone(), values.iter().copied().fold(f64::NEG_INFINITY, f64::max));
                sites.insert(id, PreparedSpecimen::new(&values, &c.quad.weights, 1.0));
            }
            obj.fixed_sites = Some(sites);
            obj.fixed_peaks = Some(peaks);
        }
        Ok(obj)
    }

    fn used_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.data.iter().map(|e| e.specimen_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    fn exact_profiles(&self, delta: f64) -> Result<BTreeMap<String, Vec<f64>>> {
        let mut out = BTreeMap::new();
        for id in self.used_ids() {
            let c = &self.caches[&id];
            let values = if c.deltas().contains(&delta) {
                c.profile_values(delta)?.into_owned()
            } else {
                averaged_profile(&c.mesh, &c.field, &c.quad, delta, SUBGRID)?.values
            };
            out.insert(id, values);
        }
        Ok(out)
    }

    /// Maximise over `beta` in `[lo, hi]` inside every evaluation instead of reading it
    /// from the parameter vector (Poisson model only).
    pub fn with_beta_profile(mut self, lo: f64, hi: f64) -> Self {
        if self.model == Model::Poisson {
            self.beta_levels = Some(BetaLevels::new(self.caches, self.used_ids(), lo, hi));
        }
        self
    }

    pub fn loglik(&self, theta: &[f64; N_PARAMS]) -> f64 {
        self.loglik_beta(theta).0
    }

    /// Log-likelihood and the `beta` it was evaluated at.
    pub fn loglik_beta(&self, theta: &[f64; N_PARAMS]) -> (f64, f64) {
        match &self.beta_levels {
            None => (self.try_loglik(theta).unwrap_or(f64::NEG_INFINITY), theta[BETA]),
            Some(levels) => self
                .try_profile(theta, levels)
                .unwrap_or((f64::NEG_INFINITY, theta[BETA])),
        }
    }

    fn sites_at(&self, id: &str, delta: f64) -> Result<PreparedSpecimen> {
        Ok(match &self.fixed_sites {
            Some(s) => s[id].clone(),
            None => {
                let c = &self.caches[id];
                PreparedSpecimen::new(&c.profile_values(delta)?, &c.quad.weights, 1.0)
            }
        })
    }

    fn try_profile(&self, theta: &[f64; N_PARAMS], levels: &BetaLevels) -> Result<(f64, f64)> {
        let sn = SNParams::new(theta[0], theta[1], theta[2], theta[3], theta[4])?;
        let mut prepared = BTreeMap::new();
        for id in &levels.ids {
            prepared.insert(id.clone(), self.sites_at(id, theta[DELTA])?);
        }
        let sums = experiment_site_sums(self.data, self.caches, &prepared, &sn)?;
        let mut totals = vec![(0.0, 0.0, 0.0); levels.ids.len()];
        for (e, s) in self.data.iter().zip(&sums) {
            let j = levels.ids.binary_search(&e.specimen_id).expect("used id");
            totals[j].0 += s.log_survival;
            if e.failed {
                totals[j].1 += 1.0;
                totals[j].2 += s.log_hazard;
            }
        }
        Ok(levels.maximise(&totals))
    }

    fn try_loglik(&self, theta: &[f64; N_PARAMS]) -> Result<f64> {
        let sn = SNParams::new(theta[0], theta[1], theta[2], theta[3], theta[4])?;
        let delta = theta[DELTA];
        match self.model {
            Model::MaxStress => {
                let peaks = match &self.fixed_peaks {
                    Some(p) => p.clone(),
                    None => {
                        let mut p = BTreeMap::new();
                        for id in self.used_ids() {
                            let v = self.caches[&id].profile_values(delta)?;
                            p.insert(id, v.iter().copied().fold(f64::NEG_INFINITY, f64::max));
                        }
                        p
                    }
                };
                max_stress_log_likelihood_with(self.data, self.caches, &peaks, &sn)
            }
            Model::Poisson => {
                let beta = theta[BETA];
                let mut prepared = BTreeMap::new();
                for id in self.used_ids() {
                    let c = &self.caches[&id];
                    let mut sites = self.sites_at(&id, delta)?;
                    sites.gamma = c.gamma(beta)?;
                    prepared.insert(id, sites);
                }
                poisson_log_likelihood_prepared(self.data, self.caches, &prepared, &sn)
            }
        }
    }
}

/// Maximum-likelihood fit with seeded multi-start Nelder-Mead in logistic coordinates.
///
/// In the Poisson model a free `beta` is profiled out exactly inside each evaluation.
pub fn mle(
    data: &[Experiment],
    caches: &CacheMap,
    spec: &FitSpec,
    opts: &FitOptions,
) -> Result<FitResult> {
    mle_warm(data, caches, spec, opts, &[])
}

/// As [`mle`], additionally starting from each of `warm` (e.g. a neighbouring fit).
pub fn mle_warm(
    data: &[Experiment],
    caches: &CacheMap,
    spec: &FitSpec,
    opts: &FitOptions,
    warm: &[[f64; N_PARAMS]],
) -> Result<FitResult> {
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::Dataset("dataset is empty".into()));
    }
    let fixed_delta = (!spec.free[DELTA]).then_some(spec.initial[DELTA]);
    if spec.free[DELTA] {
        check_delta_range(data, caches, &spec.bounds)?;
    }
    let mut objective = Objective::new(data, caches, spec.model, fixed_delta)?;
    let mut search_spec = spec.clone();
    let profile_beta = spec.model == Model::Poisson && spec.free[BETA];
    if profile_beta {
        objective = objective.with_beta_profile(spec.bounds.lower[BETA], spec.bounds.upper[BETA]);
        search_spec.free[BETA] = false;
    }
    let search = if search_spec.n_free() == 0 {
        let (ll, _) = objective.loglik_beta(&spec.initial);
        Search {
            best: spec.initial,
            loglik: ll,
            evals: 1,
            converged: ll.is_finite(),
        }
    } else {
        run_search(&objective, &search_spec, opts, warm)?
    };

    let mut estimates = search.best;
    let mut search_ll = search.loglik;
    let mut evals = search.evals;
    if profile_beta {
        estimates[BETA] = objective.loglik_beta(&estimates).1;
        if search_ll.is_finite() && search_spec.n_free() > 0 {
            // The profiled surface has kinks where the optimal beta plateau switches, and
            // beta trades off against the S-N parameters along a ridge the simplex cannot
            // follow. Walk the ridge: smooth fits at nearby fixed beta, then re-profile.
            let plain = Objective::new(data, caches, spec.model, fixed_delta)?;
            let free: Vec<usize> = (0..N_PARAMS).filter(|&k| search_spec.free[k]).collect();
            let nm = NelderMeadOptions {
                max_evals: opts.max_evals,
                ftol: opts.ftol,
                xtol: opts.xtol,
            };
            let (lo, hi) = (spec.bounds.lower[BETA], spec.bounds.upper[BETA]);
            let margin = 1e-6 * (hi - lo);
            for _ in 0..BETA_WALK_ROUNDS {
                let trials: Vec<([f64; N_PARAMS], f64, f64, usize)> = BETA_WALK_STEPS
                    .par_iter()
                    .map(|&step| {
                        let mut start = estimates;
                        start[BETA] = (estimates[BETA] + step).clamp(lo + margin, hi - margin);
                        let (t, _, n, _) = simplex_fit(&plain, &spec.bounds, &free, &start, 0.1, &nm);
                        let (ll, beta) = objective.loglik_beta(&t);
                        (t, ll, beta, n)
                    })
                    .collect();
                evals += trials.iter().map(|t| t.3).sum::<usize>();
                let best = trials
                    .into_iter()
                    .filter(|t| t.1.is_finite())
                    .max_by(|a, b| a.1.total_cmp(&b.1));
                match best {
                    Some((t, ll, beta, _)) if ll > search_ll + opts.ftol.max(1e-10) => {
                        estimates = t;
                        estimates[BETA] = beta;
                        search_ll = ll;
                    }
                    _ => break,
                }
            }
        }
    }
    let mut loglik = search_ll;
    if loglik.is_finite() {
        // final value from the plain likelihood, exactly at the reported delta
        let exact = Objective::new(data, caches, spec.model, Some(estimates[DELTA]))?;
        loglik = exact.loglik(&estimates);
    }
    Ok(FitResult {
        model: spec.model,
        estimates,
        free: spec.free,
        max_loglik: loglik,
        aic: aic(spec.n_free(), loglik),
        converged: search.converged && loglik.is_finite(),
        n_evals: evals,
        bounds: spec.bounds.clone(),
        seed: opts.seed,
    })
}

fn check_delta_range(data: &[Experiment], caches: &CacheMap, bounds: &Bounds) -> Result<()> {
    for e in data {
        let c = &caches[&e.specimen_id];
        let grid = c.deltas();
        let lo = grid.first().copied().unwrap_or(0.0);
        let hi = grid.last().copied().unwrap_or(0.0);
        if bounds.lower[DELTA] < lo || bounds.upper[DELTA] > hi {
            return Err(Error::Params(format!(
                "delta bounds ({}, {}) exceed the precomputed grid [{lo}, {hi}] of specimen '{}'",
                bounds.lower[DELTA], bounds.upper[DELTA], e.specimen_id
            )));
        }
    }
    Ok(())
}

struct Search {
    best: [f64; N_PARAMS],
    loglik: f64,
    evals: usize,
    converged: bool,
}

/// Nelder-Mead over the parameters in `free`, in logistic coordinates, from `start`.
fn simplex_fit(
    objective: &Objective<'_>,
    bounds: &Bounds,
    free: &[usize],
    start: &[f64; N_PARAMS],
    step: f64,
    nm: &NelderMeadOptions,
) -> ([f64; N_PARAMS], f64, usize, bool) {
    let maps: Vec<Logistic> = free.iter().map(|&k| bounds.logistic(k)).collect();
    let expand = |y: &[f64]| {
        let mut theta = *start;
        for (i, &k) in free.iter().enumerate() {
            theta[k] = maps[i].from_real(y[i]);
        }
        theta
    };
    let y0: Vec<f64> = free
        .iter()
        .enumerate()
        .map(|(i, &k)| maps[i].to_real(start[k]))
        .collect();
    let m = nelder_mead(
        |y| -objective.loglik(&expand(y)),
        &y0,
        &vec![step; free.len()],
        nm,
    );
    (expand(&m.x), -m.f, m.evals, m.converged)
}

fn run_search(
    objective: &Objective<'_>,
    spec: &FitSpec,
    opts: &FitOptions,
    warm: &[[f64; N_PARAMS]],
) -> Result<Search> {
    let free: Vec<usize> = (0..N_PARAMS).filter(|&k| spec.free[k]).collect();
    let bounds = &spec.bounds;
    let mut evals = 0usize;
    let eval = |t: &[f64; N_PARAMS], evals: &mut usize| {
        *evals += 1;
        objective.loglik(t)
    };

    // Candidate starts: the supplied initial point, warm starts, then the best of a
    // batch of uniform draws from the box.
    let mut candidates: Vec<([f64; N_PARAMS], f64)> = Vec::new();
    for theta in std::iter::once(&spec.initial).chain(warm) {
        let mut t = *theta;
        for &k in &free {
            let (lo, hi) = (bounds.lower[k], bounds.upper[k]);
            let margin = 1e-6 * (hi - lo);
            t[k] = t[k].clamp(lo + margin, hi - margin);
        }
        let ll = eval(&t, &mut evals);
        candidates.push((t, ll));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let draws: Vec<[f64; N_PARAMS]> = (0..opts.starts.max(1) * 8)
        .map(|_| {
            let mut t = spec.initial;
            for &k in &free {
                let u: f64 = rng.random();
                t[k] = bounds.lower[k] + (bounds.upper[k] - bounds.lower[k]) * (0.02 + 0.96 * u);
            }
            t
        })
        .collect();
    let mut random: Vec<([f64; N_PARAMS], f64)> =
        draws.iter().map(|t| (*t, eval(t, &mut evals))).collect();
    random.sort_by(|a, b| b.1.total_cmp(&a.1));
    let n_random = opts.starts.max(1).saturating_sub(candidates.len()).max(1);
    candidates.extend(random.into_iter().take(n_random));

    // Phase 1: a loose simplex run from every start.
    let scout = NelderMeadOptions {
        max_evals: (opts.max_evals / 4).max(50),
        ftol: 1e-4,
        xtol: 1e-3,
    };
    let mut scouted: Vec<([f64; N_PARAMS], f64)> = Vec::new();
    for (start, ll0) in &candidates {
        if ll0.is_finite() {
            let (t, ll, n, _) = simplex_fit(objective, bounds, &free, start, 0.5, &scout);
            evals += n;
            scouted.push(if ll >= *ll0 { (t, ll) } else { (*start, *ll0) });
        }
    }
    scouted.sort_by(|a, b| b.1.total_cmp(&a.1));

    let mut best = candidates[0].0;
    let mut best_ll = f64::NEG_INFINITY;
    for (t, ll) in candidates.iter().chain(&scouted) {
        if *ll > best_ll {
            best = *t;
            best_ll = *ll;
        }
    }

    // Phase 2: polish the most promising points to the requested tolerance.
    let nm = NelderMeadOptions {
        max_evals: opts.max_evals,
        ftol: opts.ftol,
        xtol: opts.xtol,
    };
    let mut converged = false;
    for (t0, ll0) in scouted.into_iter().take(POLISHED) {
        let mut theta = t0;
        let mut current = ll0;
        let mut start_converged = false;
        for round in 0..=opts.restarts {
            let step = if round % 2 == 0 { 0.3 } else { 0.1 };
            let (t, ll, n, conv) = simplex_fit(objective, bounds, &free, &theta, step, &nm);
            evals += n;
            let improvement = ll - current;
            if ll >= current {
                theta = t;
                current = ll;
            }
            start_converged = conv;
            if round > 0 && improvement.abs() <= opts.ftol.max(1e-10) {
                break;
            }
        }
        if current > best_ll {
            best = theta;
            best_ll = current;
            converged = start_converged;
        } else if (current - best_ll).abs() <= 1e-9 {
            converged |= start_converged;
        }
    }
    Ok(Search {
        best,
        loglik: best_ll,
        evals,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub delta: f64,
    pub loglik: f64,
    pub estimates: [f64; N_PARAMS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileLikelihood {
    pub points: Vec<ProfilePoint>,
    /// Grid length with the highest profile log-likelihood.
    pub best_delta: f64,
    pub max_loglik: f64,
    /// Range where the profile is within [`PROFILE_DROP`] of its maximum, with linear
    /// interpolation of the crossings between grid points.
    pub interval: (f64, f64),
}

impl ProfileLikelihood {
    pub fn contains(&self, delta: f64) -> bool {
        self.interval.0 <= delta && delta <= self.interval.1
    }
}

/// Fits with `delta` fixed at each grid value; later points warm-start from earlier ones.
pub fn profile_likelihood_delta(
    data: &[Experiment],
    caches: &CacheMap,
    spec: &FitSpec,
    grid: &[f64],
    opts: &FitOptions,
) -> Result<ProfileLikelihood> {
    if grid.is_empty() {
        return Err(Error::Params("delta grid is empty".into()));
    }
    if grid.iter().any(|&d| !(d >= 0.0 && d.is_finite())) {
        return Err(Error::Params("delta grid values must be non-negative".into()));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut points: Vec<ProfilePoint> = Vec::with_capacity(sorted.len());
    for &delta in &sorted {
        let mut s = spec.clone();
        s.free[DELTA] = false;
        s.initial[DELTA] = delta;
        let warm: Vec<[f64; N_PARAMS]> = points
            .iter()
            .map(|p| {
                let mut t = p.estimates;
                t[DELTA] = delta;
                t
            })
            .collect();
        let fit = mle_warm(data, caches, &s, opts, &warm)?;
        points.push(ProfilePoint {
            delta,
            loglik: fit.max_loglik,
            estimates: fit.estimates,
        });
    }
    Ok(summarise_profile(points))
}

fn summarise_profile(points: Vec<ProfilePoint>) -> ProfileLikelihood {
    let (ib, best) = points
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.loglik.total_cmp(&b.1.loglik))
        .map(|(i, p)| (i, p.clone()))
        .expect("non-empty profile");
    let cut = best.loglik - PROFILE_DROP;
    let crossing = |inside: &ProfilePoint, outside: &ProfilePoint| {
        if !outside.loglik.is_finite() {
            return inside.delta;
        }
        let w = (inside.loglik - cut) / (inside.loglik - outside.loglik);
        inside.delta + w * (outside.delta - inside.delta)
    };
    let mut lo_i = ib;
    while lo_i > 0 && points[lo_i - 1].loglik >= cut {
        lo_i -= 1;
    }
    let lo = if lo_i == 0 {
        points[0].delta
    } else {
        crossing(&points[lo_i], &points[lo_i - 1])
    };
    let mut hi_i = ib;
    while hi_i + 1 < points.len() && points[hi_i + 1].loglik >= cut {
        hi_i += 1;
    }
    let hi = if hi_i + 1 == points.len() {
        points[hi_i].delta
    } else {
        crossing(&points[hi_i], &points[hi_i + 1])
    };
    ProfileLikelihood {
        best_delta: best.delta,
        max_loglik: best.loglik,
        interval: (lo, hi),
        points,
    }
}

/// One refinement level of a mesh-convergence study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub level: usize,
    /// Triangles summed over the specimens in use.
    pub n_triangles: usize,
    pub estimates: [f64; N_PARAMS],
    pub loglik: f64,
}

/// Refits on caches rebuilt at each of `levels`, warm-starting from the previous level.
pub fn convergence_study(
    data: &[Experiment],
    geometries: &BTreeMap<String, SpecimenGeometry>,
    material: &MaterialParams,
    levels: &[usize],
    spec: &FitSpec,
    opts: &FitOptions,
) -> Result<Vec<ConvergenceRow>> {
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels.len());
    let mut ids: Vec<&String> = data.iter().map(|e| &e.specimen_id).collect();
    ids.sort();
    ids.dedup();
    for &level in levels {
        let mut caches = CacheMap::new();
        for id in &ids {
            let g = geometries
                .get(*id)
                .ok_or_else(|| Error::Dataset(format!("no specimen geometry for id '{id}'")))?;
            let deltas = if spec.initial[DELTA] > 0.0 { vec![spec.initial[DELTA]] } else { vec![] };
            caches.insert((*id).clone(), SpecimenCache::build(g, material, level, &deltas)?);
        }
        let warm: Vec<[f64; N_PARAMS]> = rows.last().map(|r| r.estimates).into_iter().collect();
        let fit = mle_warm(data, &caches, spec, opts, &warm)?;
        rows.push(ConvergenceRow {
            level,
            n_triangles: caches.values().map(|c| c.mesh.num_triangles()).sum(),
            estimates: fit.estimates,
            loglik: fit.max_loglik,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aic_examples() {
        assert!((aic(5, -950.16) - 1910.32).abs() < 1e-9);
        assert!((aic(6, -1650.05) - 3312.10).abs() < 1e-9);
        assert!((aic(6, -1648.16) - 3308.32).abs() < 1e-9);
        assert_eq!(aic(1, 0.0), 2.0);
    }

    #[test]
    fn default_spec_counts_free_parameters() {
        assert_eq!(FitSpec::new(Model::MaxStress, 0.0).n_free(), 5);
        assert_eq!(FitSpec::new(Model::Poisson, 0.0).n_free(), 6);
        assert_eq!(FitSpec::new(Model::Poisson, 0.0).with_free_delta().n_free(), 7);
    }

    #[test]
    fn profile_interval_interpolates_crossings() {
        let mk = |delta: f64, loglik: f64| ProfilePoint {
            delta,
            loglik,
            estimates: [0.0; N_PARAMS],
        };
        let p = summarise_profile(vec![mk(0.0, -10.0), mk(1.0, -5.0), mk(2.0, -6.0), mk(3.0, -20.0)]);
        assert_eq!(p.best_delta, 1.0);
        // crossing at -6.92
        assert!((p.interval.0 - (1.0 - 1.92 / 5.0)).abs() < 1e-12);
        assert!((p.interval.1 - (2.0 + 0.92 / 14.0)).abs() < 1e-12);
        assert!(p.contains(1.5) && !p.contains(0.0));
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let caches = CacheMap::new();
        let r = mle(&[], &caches, &FitSpec::new(Model::Poisson, 0.0), &FitOptions::default());
        assert!(matches!(r, Err(Error::Dataset(_))));
    }
}
