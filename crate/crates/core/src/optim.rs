//! Nelder-Mead simplex minimisation and the logistic map between a box and the real line.

/// Stopping rules for [`nelder_mead`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Spread of function values across the simplex.
    pub ftol: f64,
    /// Largest vertex distance from the best vertex (max norm).
    pub xtol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_evals: 4000,
            ftol: 1e-9,
            xtol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Minimises `f` from `x0` with initial simplex offsets `step` along each axis.
///
/// Non-finite values (e.g. `+inf` for impossible points) are treated as worse than any
/// finite value. Coefficients follow the dimension-adaptive scheme of Gao and Han.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    step: &[f64],
    opts: &NelderMeadOptions,
) -> Minimum {
    let d = x0.len();
    let dim = d.max(2) as f64;
    let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / dim, 0.75 - 0.5 / dim, 1.0 - 1.0 / dim);
    let clean = |v: f64| if v.is_nan() { f64::INFINITY } else { v };

    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        clean(f(x))
    };
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..d {
        let mut v = x0.to_vec();
        v[i] += step[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();
    let mut converged = false;

    while evals < opts.max_evals {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[d] - values[0];
        let size = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if values[0].is_finite() && spread <= opts.ftol && size <= opts.xtol {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..d)
            .map(|k| simplex[..d].iter().map(|v| v[k]).sum::<f64>() / d as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[d])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(alpha);
        let fr = eval(&xr, &mut evals);
        if fr < values[0] {
            let xe = along(alpha * gamma);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[d] = xe;
                values[d] = fe;
            } else {
                simplex[d] = xr;
                values[d] = fr;
            }
            continue;
        }
        if fr < values[d - 1] {
            simplex[d] = xr;
            values[d] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[d] {
            let xc = along(alpha * rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < values[d].min(fr) {
            simplex[d] = xc;
            values[d] = fc;
            continue;
        }
        // shrink toward the best vertex
        for i in 1..=d {
            let v: Vec<f64> = simplex[i]
                .iter()
                .zip(&simplex[0])
                .map(|(x, b)| b + sigma * (x - b))
                .collect();
            values[i] = eval(&v, &mut evals);
            simplex[i] = v;
        }
    }
    let best = (0..=d)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap();
    Minimum {
        x: simplex[best].clone(),
        f: values[best],
        evals,
        converged,
    }
}

/// Logistic bijection between the open interval `(lo, hi)` and the real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Logistic {
    pub lo: f64,
    pub hi: f64,
}

impl Logistic {
    pub fn to_real(&self, x: f64) -> f64 {
        let u = ((x - self.lo) / (self.hi - self.lo)).clamp(1e-12, 1.0 - 1e-12);
        (u / (1.0 - u)).ln()
    }

    pub fn from_real(&self, y: f64) -> f64 {
        let u = if y >= 0.0 {
            1.0 / (1.0 + (-y).exp())
        } else {
            let e = y.exp();
            e / (1.0 + e)
        };
        self.lo + (self.hi - self.lo) * u
    }
}
