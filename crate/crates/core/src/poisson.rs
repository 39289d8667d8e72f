//! Spatial Poisson model of crack initiation on the specimen surface.
//!
//! Cracks form as a Poisson process with intensity `h_SN(n; sigma(x)) / gamma(beta)`, so
//! the first-crack survival is `exp((1/gamma) * int log(1 - F_SN) dS)`. Everything is
//! evaluated by site quadrature of a unit-traction stress profile scaled by the end
//! traction of each experiment.

use std::borrow::Cow;
use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{traction_for, unit_stress_field, MaterialParams, UnitStressField};
use crate::geometry::SpecimenGeometry;
use crate::mesh::{mesh_at_level, TriMesh};
use crate::sn::{self, norm_log_sf, SNParams};
use crate::stress::{
    averaged_profile, build_surface_quadrature, pointwise_profile, AveragedStressProfile,
    SurfaceQuadrature, VolumeTable, SUBGRID,
};

/// Default run-out censoring for simulated experiments, cycles.
pub const DEFAULT_CENSOR: f64 = 1e7;

/// Default grid of averaging lengths precomputed per specimen, inches.
pub const DEFAULT_DELTA_GRID: [f64; 5] = [0.0, 0.00625, 0.0125, 0.025, 0.05];

/// Sites whose standardised log life trails the leading site by more than this many
/// standard deviations contribute below double precision and are skipped.
const TAIL_CUTOFF: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonParams {
    pub sn: SNParams,
    /// Unit-stress threshold defining the highly stressed volume.
    pub beta: f64,
    /// Averaging length, inches.
    pub delta: f64,
}

impl PoissonParams {
    pub fn validate(&self) -> Result<()> {
        self.sn.validate()?;
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Params(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::Params(format!("delta must be non-negative, got {}", self.delta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub specimen_id: String,
    /// Maximum nominal stress, ksi.
    pub s_max: f64,
    /// Stress ratio `R`.
    pub ratio: f64,
    pub cycles: f64,
    pub failed: bool,
}

impl Experiment {
    pub fn validate(&self) -> Result<()> {
        if !(self.cycles > 0.0 && self.cycles.is_finite()) {
            return Err(Error::Dataset(format!(
                "{}: cycles must be positive, got {}",
                self.specimen_id, self.cycles
            )));
        }
        if !(self.ratio < 1.0) {
            return Err(Error::Dataset(format!(
                "{}: stress ratio must be below 1, got {}",
                self.specimen_id, self.ratio
            )));
        }
        if !(self.s_max > 0.0 && self.s_max.is_finite()) {
            return Err(Error::Dataset(format!(
                "{}: S_max must be positive, got {}",
                self.specimen_id, self.s_max
            )));
        }
        Ok(())
    }
}

/// Everything about one specimen geometry the likelihood needs: mesh, unit stress field,
/// quadrature, pointwise profile and averaged profiles on a grid of lengths.
#[derive(Debug, Clone)]
pub struct SpecimenCache {
    pub geometry: SpecimenGeometry,
    pub mesh: TriMesh,
    pub field: UnitStressField,
    pub quad: SurfaceQuadrature,
    pub pointwise: AveragedStressProfile,
    volume: VolumeTable,
    /// Averaged profiles sorted by length.
    grid: Vec<AveragedStressProfile>,
}

impl SpecimenCache {
    /// Meshes at `level`, solves for unit traction and averages on `deltas`.
    pub fn build(
        geometry: &SpecimenGeometry,
        material: &MaterialParams,
        level: usize,
        deltas: &[f64],
    ) -> Result<Self> {
        let mesh = mesh_at_level(geometry, level)?;
        let field = unit_stress_field(&mesh, material)?;
        Self::from_parts(geometry.clone(), mesh, field, deltas)
    }

    pub fn from_parts(
        geometry: SpecimenGeometry,
        mesh: TriMesh,
        field: UnitStressField,
        deltas: &[f64],
    ) -> Result<Self> {
        if field.len() != mesh.num_nodes() {
            return Err(Error::Mesh("stress field does not match the mesh".into()));
        }
        let quad = build_surface_quadrature(&mesh, geometry.thickness);
        let pointwise = pointwise_profile(&field, &quad);
        let volume = VolumeTable::new(&pointwise, &quad);
        let mut cache = SpecimenCache {
            geometry,
            mesh,
            field,
            quad,
            pointwise,
            volume,
            grid: Vec::new(),
        };
        cache.add_delta(0.0)?;
        for &d in deltas {
            cache.add_delta(d)?;
        }
        Ok(cache)
    }

    /// Precomputes the averaged profile at `delta` (no-op if present).
    pub fn add_delta(&mut self, delta: f64) -> Result<()> {
        if self.grid.iter().any(|p| p.delta == delta) {
            return Ok(());
        }
        let prof = averaged_profile(&self.mesh, &self.field, &self.quad, delta, SUBGRID)?;
        let at = self.grid.partition_point(|p| p.delta < delta);
        self.grid.insert(at, prof);
        Ok(())
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.grid.iter().map(|p| p.delta).collect()
    }

    /// Site values at `delta`: exact on the grid, linear between grid lengths.
    pub fn profile_values(&self, delta: f64) -> Result<Cow<'_, [f64]>> {
        if let Some(p) = self.grid.iter().find(|p| p.delta == delta) {
            return Ok(Cow::Borrowed(&p.values));
        }
        let k = self.grid.partition_point(|p| p.delta < delta);
        if k == 0 || k == self.grid.len() {
            return Err(Error::Params(format!(
                "delta {delta} lies outside the precomputed range {:?}",
                self.deltas()
            )));
        }
        let (a, b) = (&self.grid[k - 1], &self.grid[k]);
        let w = (delta - a.delta) / (b.delta - a.delta);
        Ok(Cow::Owned(
            a.values
                .iter()
                .zip(&b.values)
                .map(|(x, y)| (1.0 - w) * x + w * y)
                .collect(),
        ))
    }

    /// `gamma(beta)` from the pointwise profile.
    pub fn gamma(&self, beta: f64) -> Result<f64> {
        self.volume.gamma(beta)
    }

    pub fn max_pointwise(&self) -> f64 {
        self.volume.max_stress()
    }

    /// End traction of an experiment.
    pub fn traction(&self, e: &Experiment, q: f64) -> Result<f64> {
        traction_for(e.s_max, e.ratio, q, self.geometry.width_ratio())
    }

    /// Sorted sites ready for repeated evaluation at fixed `(beta, delta)`.
    pub fn prepare(&self, beta: f64, delta: f64) -> Result<PreparedSpecimen> {
        let values = self.profile_values(delta)?;
        let gamma = self.gamma(beta)?;
        Ok(PreparedSpecimen::new(&values, &self.quad.weights, gamma))
    }
}

/// Site stresses in descending order with their weights, plus `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSpecimen {
    stress: Vec<f64>,
    weight: Vec<f64>,
    pub gamma: f64,
}

/// Quadrature sums of one experiment: `int log(1 - F) dS` and `log int h dS`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteSums {
    pub log_survival: f64,
    /// Log of the integrated hazard; kept in logs because `h` underflows deep in the
    /// lower tail.
    pub log_hazard: f64,
}

impl PreparedSpecimen {
    pub fn new(values: &[f64], weights: &[f64], gamma: f64) -> Self {
        let mut pairs: Vec<(f64, f64)> = values
            .iter()
            .copied()
            .zip(weights.iter().copied())
            .filter(|&(s, w)| s > 0.0 && w > 0.0)
            .collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        PreparedSpecimen {
            stress: pairs.iter().map(|p| p.0).collect(),
            weight: pairs.iter().map(|p| p.1).collect(),
            gamma,
        }
    }

    pub fn max_stress(&self) -> f64 {
        self.stress.first().copied().unwrap_or(0.0)
    }

    /// Unnormalised quadrature sums at `n` cycles and end traction `t`.
    pub fn sums(&self, n: f64, t: f64, p: &SNParams) -> SiteSums {
        let lg = n.log10();
        let log_norm = -0.5 * (2.0 * std::f64::consts::PI).ln() - (p.tau * n * std::f64::consts::LN_10).ln();
        let mut log_survival = 0.0;
        // running log-sum-exp of the hazard terms
        let mut h_max = f64::NEG_INFINITY;
        let mut h_scaled = 0.0;
        let mut z_stop = f64::NEG_INFINITY;
        for (k, (&s, &w)) in self.stress.iter().zip(&self.weight).enumerate() {
            let excess = t * s - p.a3;
            if excess <= 0.0 {
                break;
            }
            let z = (lg - p.a1 - p.a2 * excess.log10()) / p.tau;
            if k == 0 {
                z_stop = z.min(0.0) - TAIL_CUTOFF;
            } else if z < z_stop {
                break;
            }
            let lsf = norm_log_sf(z);
            log_survival += w * lsf;
            let lh = w.ln() + log_norm - 0.5 * z * z - lsf;
            if lh > h_max {
                h_scaled = h_scaled * (h_max - lh).exp() + 1.0;
                h_max = lh;
            } else {
                h_scaled += (lh - h_max).exp();
            }
        }
        SiteSums {
            log_survival,
            log_hazard: if h_scaled > 0.0 { h_max + h_scaled.ln() } else { f64::NEG_INFINITY },
        }
    }

    pub fn log_survival(&self, n: f64, t: f64, p: &SNParams) -> f64 {
        self.sums(n, t, p).log_survival / self.gamma
    }

    pub fn survival(&self, n: f64, t: f64, p: &SNParams) -> f64 {
        self.log_survival(n, t, p).exp()
    }

    /// First-crack density `survival * (1/gamma) int h dS`.
    pub fn first_crack_density(&self, n: f64, t: f64, p: &SNParams) -> f64 {
        let s = self.sums(n, t, p);
        (s.log_survival / self.gamma + s.log_hazard).exp() / self.gamma
    }

    /// Log-likelihood contribution of one observation.
    pub fn log_likelihood_term(&self, n: f64, t: f64, failed: bool, p: &SNParams) -> f64 {
        let s = self.sums(n, t, p);
        let mut l = s.log_survival / self.gamma;
        if failed {
            l += s.log_hazard - self.gamma.ln();
        }
        l
    }

    /// Inverse-survival draw with run-out at `n_censor`.
    pub fn sample_life<R: Rng + ?Sized>(
        &self,
        t: f64,
        p: &SNParams,
        rng: &mut R,
        n_censor: f64,
    ) -> (f64, bool) {
        let u: f64 = rng.random();
        let log_u = u.ln();
        if self.log_survival(n_censor, t, p) >= log_u {
            return (n_censor, false);
        }
        let mut hi = n_censor.ln();
        let mut lo = hi;
        // widen downward until survival exceeds u
        loop {
            lo -= 2.0;
            if self.log_survival(lo.exp(), t, p) >= log_u || lo < -700.0 {
                break;
            }
        }
        while hi - lo > 1e-12 * hi.abs().max(1.0) {
            let mid = 0.5 * (lo + hi);
            if self.log_survival(mid.exp(), t, p) >= log_u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        ((0.5 * (lo + hi)).exp(), true)
    }
}

/// Survival probability of the first crack.
pub fn survival(n: f64, t: f64, cache: &SpecimenCache, p: &PoissonParams) -> Result<f64> {
    check_inputs(n, t)?;
    Ok(cache.prepare(p.beta, p.delta)?.survival(n, t, &p.sn))
}

/// Density of the first-crack life.
pub fn first_crack_density(n: f64, t: f64, cache: &SpecimenCache, p: &PoissonParams) -> Result<f64> {
    check_inputs(n, t)?;
    Ok(cache.prepare(p.beta, p.delta)?.first_crack_density(n, t, &p.sn))
}

fn check_inputs(n: f64, t: f64) -> Result<()> {
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::Domain(format!("cycle count must be positive, got {n}")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("traction must be positive, got {t}")));
    }
    Ok(())
}

pub type CacheMap = BTreeMap<String, SpecimenCache>;

fn cache_for<'a>(caches: &'a CacheMap, e: &Experiment) -> Result<&'a SpecimenCache> {
    caches
        .get(&e.specimen_id)
        .ok_or_else(|| Error::Dataset(format!("no specimen geometry for id '{}'", e.specimen_id)))
}

/// Prepared sites per specimen id at fixed `(beta, delta)`.
pub fn prepare_all(
    caches: &CacheMap,
    beta: f64,
    delta: f64,
) -> Result<BTreeMap<String, PreparedSpecimen>> {
    caches
        .iter()
        .map(|(id, c)| Ok((id.clone(), c.prepare(beta, delta)?)))
        .collect()
}

/// Spatial Poisson log-likelihood with per-specimen `gamma(beta)`.
pub fn poisson_log_likelihood(data: &[Experiment], caches: &CacheMap, p: &PoissonParams) -> Result<f64> {
    p.validate()?;
    let used: BTreeMap<&str, ()> = data.iter().map(|e| (e.specimen_id.as_str(), ())).collect();
    let mut prepared = BTreeMap::new();
    for id in used.keys() {
        let c = caches
            .get(*id)
            .ok_or_else(|| Error::Dataset(format!("no specimen geometry for id '{id}'")))?;
        prepared.insert(id.to_string(), c.prepare(p.beta, p.delta)?);
    }
    poisson_log_likelihood_prepared(data, caches, &prepared, &p.sn)
}

/// As [`poisson_log_likelihood`] with sites already prepared.
pub fn poisson_log_likelihood_prepared(
    data: &[Experiment],
    caches: &CacheMap,
    prepared: &BTreeMap<String, PreparedSpecimen>,
    sn: &SNParams,
) -> Result<f64> {
    let terms = data
        .par_iter()
        .map(|e| {
            e.validate()?;
            let t = cache_for(caches, e)?.traction(e, sn.q)?;
            let prep = prepared
                .get(&e.specimen_id)
                .ok_or_else(|| Error::Dataset(format!("no specimen geometry for id '{}'", e.specimen_id)))?;
            Ok(prep.log_likelihood_term(e.cycles, t, e.failed, sn))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(terms.iter().sum())
}

/// Per-experiment quadrature sums (independent of `gamma`), in data order.
pub fn experiment_site_sums(
    data: &[Experiment],
    caches: &CacheMap,
    prepared: &BTreeMap<String, PreparedSpecimen>,
    sn: &SNParams,
) -> Result<Vec<SiteSums>> {
    data.par_iter()
        .map(|e| {
            e.validate()?;
            let t = cache_for(caches, e)?.traction(e, sn.q)?;
            let prep = prepared
                .get(&e.specimen_id)
                .ok_or_else(|| Error::Dataset(format!("no specimen geometry for id '{}'", e.specimen_id)))?;
            Ok(prep.sums(e.cycles, t, sn))
        })
        .collect()
}

/// Censored lognormal log-likelihood at the maximum averaged stress of each specimen.
pub fn max_stress_log_likelihood(
    data: &[Experiment],
    caches: &CacheMap,
    sn: &SNParams,
    delta: f64,
) -> Result<f64> {
    sn.validate()?;
    let mut peak = BTreeMap::new();
    for e in data {
        if !peak.contains_key(&e.specimen_id) {
            let c = cache_for(caches, e)?;
            let max = c.profile_values(delta)?.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            peak.insert(e.specimen_id.clone(), max);
        }
    }
    max_stress_log_likelihood_with(data, caches, &peak, sn)
}

/// As [`max_stress_log_likelihood`] with the peak unit stress per specimen supplied.
pub fn max_stress_log_likelihood_with(
    data: &[Experiment],
    caches: &CacheMap,
    peak: &BTreeMap<String, f64>,
    sn: &SNParams,
) -> Result<f64> {
    let mut total = 0.0;
    for e in data {
        e.validate()?;
        let t = cache_for(caches, e)?.traction(e, sn.q)?;
        let s = t * peak[&e.specimen_id];
        total += if e.failed {
            sn::log_pdf(e.cycles, s, sn)?
        } else {
            sn::log_sf(e.cycles, s, sn)?
        };
    }
    Ok(total)
}

/// Simulated experiment for traction `t` drawn from a seeded generator.
pub fn sample_life(
    t: f64,
    cache: &SpecimenCache,
    p: &PoissonParams,
    seed: u64,
    n_censor: f64,
) -> Result<Experiment> {
    check_inputs(1.0, t)?;
    let prep = cache.prepare(p.beta, p.delta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, failed) = prep.sample_life(t, &p.sn, &mut rng, n_censor);
    // report in terms of S_max at R = 0
    Ok(Experiment {
        specimen_id: String::new(),
        s_max: t / cache.geometry.width_ratio(),
        ratio: 0.0,
        cycles: n,
        failed,
    })
}

/// One load level of a simulated test programme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadLevel {
    pub specimen_id: String,
    pub s_max: f64,
    pub ratio: f64,
    pub count: usize,
}

/// Simulates a dataset; deterministic given `seed`.
pub fn simulate_dataset(
    design: &[LoadLevel],
    caches: &CacheMap,
    p: &PoissonParams,
    seed: u64,
    n_censor: f64,
) -> Result<Vec<Experiment>> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prepared = BTreeMap::new();
    let mut out = Vec::new();
    for level in design {
        let cache = caches.get(&level.specimen_id).ok_or_else(|| {
            Error::Dataset(format!("no specimen geometry for id '{}'", level.specimen_id))
        })?;
        if !prepared.contains_key(&level.specimen_id) {
            prepared.insert(level.specimen_id.clone(), cache.prepare(p.beta, p.delta)?);
        }
        let prep = &prepared[&level.specimen_id];
        let t = traction_for(level.s_max, level.ratio, p.sn.q, cache.geometry.width_ratio())?;
        for _ in 0..level.count {
            let (n, failed) = prep.sample_life(t, &p.sn, &mut rng, n_censor);
            out.push(Experiment {
                specimen_id: level.specimen_id.clone(),
                s_max: level.s_max,
                ratio: level.ratio,
                cycles: n,
                failed,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strip_cache() -> SpecimenCache {
        let g = SpecimenGeometry::rectangle(1.0, 2.0, 0.09).unwrap();
        SpecimenCache::build(&g, &MaterialParams::default(), 0, &[0.0125]).unwrap()
    }

    fn params() -> PoissonParams {
        PoissonParams {
            sn: SNParams::new(6.0, -1.2, 40.0, 0.6, 0.23).unwrap(),
            beta: 0.5,
            delta: 0.0,
        }
    }

    #[test]
    fn uniform_strip_reduces_to_the_sn_model() {
        let c = strip_cache();
        let p = params();
        for &t in &[38.0, 41.0, 55.0, 90.0] {
            for &n in &[1e3, 1e4, 1e5, 1e6, 1e7] {
                let s = survival(n, t, &c, &p).unwrap();
                let f = sn::cdf(n, t, &p.sn).unwrap();
                assert!((s - (1.0 - f)).abs() < 1e-10, "t={t} n={n}");
                let rho = first_crack_density(n, t, &c, &p).unwrap();
                let pdf = sn::pdf(n, t, &p.sn).unwrap();
                assert!((rho - pdf).abs() <= 1e-10 * pdf.max(1e-300), "{rho} {pdf}");
            }
        }
    }

    #[test]
    fn below_the_fatigue_limit_nothing_happens() {
        let c = strip_cache();
        let p = params();
        assert_eq!(survival(1e9, 39.0, &c, &p).unwrap(), 1.0);
        assert_eq!(first_crack_density(1e5, 39.0, &c, &p).unwrap(), 0.0);
        let mut caches = CacheMap::new();
        caches.insert("strip".into(), c);
        let runout = Experiment {
            specimen_id: "strip".into(),
            s_max: 39.0,
            ratio: 0.0,
            cycles: 1e7,
            failed: false,
        };
        assert_eq!(poisson_log_likelihood(&[runout.clone()], &caches, &p).unwrap(), 0.0);
        assert_eq!(max_stress_log_likelihood(&[runout.clone()], &caches, &p.sn, 0.0).unwrap(), 0.0);
        let impossible = Experiment { failed: true, ..runout };
        assert_eq!(
            poisson_log_likelihood(&[impossible.clone()], &caches, &p).unwrap(),
            f64::NEG_INFINITY
        );
        assert_eq!(
            max_stress_log_likelihood(&[impossible], &caches, &p.sn, 0.0).unwrap(),
            f64::NEG_INFINITY
        );
        assert_eq!(poisson_log_likelihood(&[], &caches, &p).unwrap(), 0.0);
        let sampled = sample_life(39.0, &caches["strip"], &p, 3, DEFAULT_CENSOR).unwrap();
        assert!(!sampled.failed);
    }

    #[test]
    fn interpolated_profiles_lie_between_grid_values() {
        let g = SpecimenGeometry::specimen2();
        let c = SpecimenCache::build(&g, &MaterialParams::default(), 1, &[0.0125, 0.025]).unwrap();
        let a = c.profile_values(0.0125).unwrap();
        let b = c.profile_values(0.025).unwrap();
        let m = c.profile_values(0.01875).unwrap();
        for k in 0..a.len() {
            assert!((m[k] - 0.5 * (a[k] + b[k])).abs() < 1e-12);
        }
        assert!(c.profile_values(0.1).is_err());
        assert!(c.gamma(c.max_pointwise()).is_err());
    }

    #[test]
    fn sampled_failures_hit_the_drawn_survival() {
        let c = strip_cache();
        let p = params();
        let prep = c.prepare(p.beta, p.delta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut failures = 0;
        for _ in 0..200 {
            let mut probe = rng.clone();
            let u: f64 = probe.random();
            let (n, failed) = prep.sample_life(45.0, &p.sn, &mut rng, DEFAULT_CENSOR);
            if failed {
                failures += 1;
                assert!((prep.survival(n, 45.0, &p.sn) - u).abs() < 1e-8);
            }
        }
        assert!(failures > 100);
    }
}
