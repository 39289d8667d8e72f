//! Lognormal fatigue-limit S-N model and the Walker equivalent stress.
//!
//! `log10 N ~ Normal(mu(s), tau)` with `mu(s) = A1 + A2 log10(s - A3)` above the fatigue
//! limit `A3` and no crack initiation below it.

use std::f64::consts::{LN_10, PI, SQRT_2};

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SNParams {
    pub a1: f64,
    pub a2: f64,
    /// Fatigue limit, ksi.
    pub a3: f64,
    /// Walker exponent.
    pub q: f64,
    /// Standard deviation of log10 life.
    pub tau: f64,
}

impl SNParams {
    pub fn new(a1: f64, a2: f64, a3: f64, q: f64, tau: f64) -> Result<Self> {
        let p = SNParams { a1, a2, a3, q, tau };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.a1, self.a2, self.a3, self.q, self.tau]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Params("S-N parameters must be finite".into()));
        }
        if self.tau <= 0.0 {
            return Err(Error::Params(format!("tau must be positive, got {}", self.tau)));
        }
        if self.a3 < 0.0 {
            return Err(Error::Params(format!("A3 must be non-negative, got {}", self.a3)));
        }
        if self.a2 >= 0.0 {
            return Err(Error::Params(format!("A2 must be negative, got {}", self.a2)));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::Params(format!("q must lie in (0, 1], got {}", self.q)));
        }
        Ok(())
    }
}

/// Mean log10 life; `Infinite` below the fatigue limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mu {
    Finite(f64),
    Infinite,
}

impl Mu {
    pub fn finite(self) -> Option<f64> {
        match self {
            Mu::Finite(m) => Some(m),
            Mu::Infinite => None,
        }
    }
}

/// `S_max (1 - R)^q`.
pub fn equivalent_stress(s_max: f64, ratio: f64, q: f64) -> Result<f64> {
    if !(ratio < 1.0) {
        return Err(Error::Domain(format!("stress ratio R must be below 1, got {ratio}")));
    }
    if !(s_max > 0.0) {
        return Err(Error::Domain(format!("S_max must be positive, got {s_max}")));
    }
    Ok(s_max * (1.0 - ratio).powf(q))
}

pub fn mu(s: f64, p: &SNParams) -> Mu {
    if s > p.a3 {
        Mu::Finite(p.a1 + p.a2 * (s - p.a3).log10())
    } else {
        Mu::Infinite
    }
}

/// Standard normal CDF.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// `log(1 - Phi(z))` without cancellation.
pub fn norm_log_sf(z: f64) -> f64 {
    if z < 0.0 {
        (-norm_cdf(z)).ln_1p()
    } else if z < 35.0 {
        (0.5 * erfc(z / SQRT_2)).ln()
    } else {
        // Mills ratio expansion
        let z2 = z * z;
        let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
        -0.5 * z2 - 0.5 * (2.0 * PI).ln() - z.ln() + series.ln()
    }
}

/// Standard normal quantile, polished with one Newton step.
pub fn norm_quantile(u: f64) -> f64 {
    let z = -SQRT_2 * erfc_inv(2.0 * u);
    let d = norm_pdf(z);
    if d > 0.0 {
        z - (norm_cdf(z) - u) / d
    } else {
        z
    }
}

fn check_cycles(n: f64) -> Result<f64> {
    if n > 0.0 && n.is_finite() {
        Ok(n.log10())
    } else {
        Err(Error::Domain(format!("cycle count must be positive and finite, got {n}")))
    }
}

/// Standardised log life `(log10 n - mu) / tau`, `None` below the fatigue limit.
fn z_score(n: f64, s: f64, p: &SNParams) -> Result<Option<f64>> {
    let lg = check_cycles(n)?;
    Ok(mu(s, p).finite().map(|m| (lg - m) / p.tau))
}

pub fn cdf(n: f64, s: f64, p: &SNParams) -> Result<f64> {
    Ok(z_score(n, s, p)?.map_or(0.0, norm_cdf))
}

pub fn pdf(n: f64, s: f64, p: &SNParams) -> Result<f64> {
    Ok(z_score(n, s, p)?.map_or(0.0, |z| norm_pdf(z) / (p.tau * n * LN_10)))
}

/// `log(1 - cdf)`; zero below the fatigue limit.
pub fn log_sf(n: f64, s: f64, p: &SNParams) -> Result<f64> {
    Ok(z_score(n, s, p)?.map_or(0.0, norm_log_sf))
}

/// `log pdf`; `-inf` below the fatigue limit.
pub fn log_pdf(n: f64, s: f64, p: &SNParams) -> Result<f64> {
    Ok(z_score(n, s, p)?.map_or(f64::NEG_INFINITY, |z| {
        -0.5 * z * z - 0.5 * (2.0 * PI).ln() - (p.tau * n * LN_10).ln()
    }))
}

/// `pdf / (1 - cdf)`, evaluated in log space.
pub fn hazard(n: f64, s: f64, p: &SNParams) -> Result<f64> {
    Ok(z_score(n, s, p)?.map_or(0.0, |z| {
        let log_pdf = -0.5 * z * z - 0.5 * (2.0 * PI).ln() - (p.tau * n * LN_10).ln();
        (log_pdf - norm_log_sf(z)).exp()
    }))
}

/// Cycles at which the failure probability reaches `u`.
pub fn quantile(u: f64, s: f64, p: &SNParams) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!("probability must lie in (0, 1), got {u}")));
    }
    match mu(s, p) {
        Mu::Finite(m) => Ok(10f64.powf(m + p.tau * norm_quantile(u))),
        Mu::Infinite => Err(Error::InfiniteLife {
            stress: s,
            limit: p.a3,
        }),
    }
}

/// Censored log-likelihood of single-stress observations `(s, n, failed)`.
pub fn censored_log_likelihood(obs: &[(f64, f64, bool)], p: &SNParams) -> Result<f64> {
    let mut total = 0.0;
    for &(s, n, failed) in obs {
        total += if failed { log_pdf(n, s, p)? } else { log_sf(n, s, p)? };
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_row1() -> SNParams {
        SNParams::new(7.40, -2.01, 35.91, 0.5627, 0.5274).unwrap()
    }

    #[test]
    fn equivalent_stress_examples() {
        assert_eq!(equivalent_stress(40.0, 0.0, 0.4).unwrap(), 40.0);
        assert_eq!(equivalent_stress(40.0, -1.0, 1.0).unwrap(), 80.0);
        assert!((equivalent_stress(45.0, 0.1, 0.5627).unwrap() - 42.41).abs() < 0.005);
        assert!(equivalent_stress(45.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn mu_examples() {
        let p = table_row1();
        assert_eq!(mu(35.0, &p), Mu::Infinite);
        assert_eq!(mu(35.91, &p), Mu::Infinite);
        assert!((mu(36.91, &p).finite().unwrap() - 7.40).abs() < 1e-12);
        assert!((mu(45.91, &p).finite().unwrap() - 5.39).abs() < 1e-12);
    }

    #[test]
    fn cdf_examples() {
        let p = table_row1();
        let n = 1e6;
        let c = cdf(n, 45.91, &p).unwrap();
        // Phi(1.1566) from a normal table
        assert!((c - 0.8763).abs() < 1e-4, "{c}");
        assert!((cdf(10f64.powf(5.39), 45.91, &p).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(cdf(1e9, 30.0, &p).unwrap(), 0.0);
        assert_eq!(hazard(1e9, 30.0, &p).unwrap(), 0.0);
        assert!(cdf(0.0, 40.0, &p).is_err());
    }

    #[test]
    fn log_sf_is_stable_in_the_tail() {
        for z in [-5.0, -1.0, 0.0, 0.5, 3.0, 10.0, 30.0] {
            let direct = (1.0 - norm_cdf(z)).ln();
            let stable = norm_log_sf(z);
            if z < 5.0 {
                assert!((direct - stable).abs() < 1e-10, "{z}");
            }
            assert!(stable.is_finite());
        }
        // continuity across the asymptotic switch
        let a = norm_log_sf(34.999_999);
        let b = norm_log_sf(35.000_001);
        assert!((a - b).abs() < 1e-4);
        assert!(norm_log_sf(60.0).is_finite());
    }

    #[test]
    fn quantile_round_trips() {
        let p = table_row1();
        let m = mu(45.91, &p).finite().unwrap();
        assert!((quantile(0.5, 45.91, &p).unwrap() / 10f64.powf(m) - 1.0).abs() < 1e-12);
        let q1 = quantile(norm_cdf(1.0), 45.91, &p).unwrap();
        assert!((q1 / 10f64.powf(m + p.tau) - 1.0).abs() < 1e-10);
        for u in [0.001, 0.1, 0.5, 0.9, 0.999] {
            let n = quantile(u, 45.91, &p).unwrap();
            assert!((cdf(n, 45.91, &p).unwrap() - u).abs() < 1e-10 * u.max(1e-3) / 1e-3);
        }
        assert!((cdf(quantile(0.9, 45.91, &p).unwrap(), 45.91, &p).unwrap() - 0.9).abs() < 1e-10);
        assert!(matches!(quantile(0.5, 30.0, &p), Err(Error::InfiniteLife { .. })));
    }

    #[test]
    fn hazard_matches_finite_difference_of_log_survival() {
        let p = table_row1();
        for &s in &[37.0, 45.0, 60.0] {
            for &lg in &[4.0, 5.0, 6.0, 7.0] {
                let n = 10f64.powf(lg);
                let h = n * 1e-5;
                let fd = -(log_sf(n + h, s, &p).unwrap() - log_sf(n - h, s, &p).unwrap()) / (2.0 * h);
                let an = hazard(n, s, &p).unwrap();
                assert!(((fd - an) / an).abs() < 1e-5, "s={s} n={n}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn pdf_integrates_to_cdf() {
        let p = table_row1();
        let s = 45.0;
        let n: f64 = 3e5;
        // integrate in log10 n by Simpson's rule
        let (lo, hi) = (-1.0f64, n.log10());
        let m = 20_000;
        let step = (hi - lo) / m as f64;
        let mut acc = 0.0;
        for i in 0..=m {
            let x = lo + step * i as f64;
            let nn = 10f64.powf(x);
            let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * pdf(nn, s, &p).unwrap() * nn * LN_10;
        }
        acc *= step / 3.0;
        assert!((acc - cdf(n, s, &p).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(SNParams::new(7.0, -2.0, 30.0, 0.5, 0.0).is_err());
        assert!(SNParams::new(7.0, 0.5, 30.0, 0.5, 0.5).is_err());
        assert!(SNParams::new(7.0, -2.0, -1.0, 0.5, 0.5).is_err());
        assert!(SNParams::new(7.0, -2.0, 30.0, 1.5, 0.5).is_err());
    }
}
