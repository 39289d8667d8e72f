//! Command-line front end. Each command loads the configuration, calls into the library
//! and writes its products under the output directory.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bayes::{self, Dic, McmcOptions, PosteriorSummary};
use crate::calibrate::{self, FitResult, FitSpec, Model, DELTA};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io;
use crate::mesh::{mesh_at_level, surface_measure};
use crate::poisson::{simulate_dataset, Experiment, LoadLevel, PoissonParams};
use crate::stress::{averaged_profile, notch_root_site, profile_rows, SUBGRID};

#[derive(Debug, Parser)]
#[command(name = "fatigue-poisson", version, about = "Spatial Poisson model of fatigue crack initiation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Run configuration (JSON); defaults are used when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for fitting, sampling and simulation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub mesh_level: Option<usize>,
    /// Averaging length in inches, or `free` to estimate it.
    #[arg(long, global = true)]
    pub delta: Option<DeltaArg>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaArg {
    Fixed(f64),
    Free,
}

impl FromStr for DeltaArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("free") {
            return Ok(DeltaArg::Free);
        }
        match s.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.is_finite() => Ok(DeltaArg::Fixed(v)),
            _ => Err(format!("expected a non-negative length or 'free', got '{s}'")),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mesh a specimen and export nodes and triangles.
    Mesh {
        #[arg(long, default_value = "s2")]
        specimen: String,
    },
    /// Solve for unit traction and export the stress field and surface sites.
    Solve {
        #[arg(long, default_value = "s2")]
        specimen: String,
    },
    /// Maximum-likelihood fit.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "poisson")]
        model: ModelArg,
    },
    /// Profile likelihood over the averaging-length grid.
    Profile {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "poisson")]
        model: ModelArg,
    },
    /// Posterior sampling of the Poisson model at fixed averaging length.
    Mcmc {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        n_iter: Option<usize>,
        /// Fit report to start the chain from.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Survival over a grid of S_max and cycles, optionally with a posterior band.
    Survival {
        #[arg(long, default_value = "s2")]
        specimen: String,
        /// Fit report or parameter JSON.
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        ratio: f64,
        /// `min:max:count` in ksi.
        #[arg(long, default_value = "30:60:31")]
        s_range: Range,
        /// `min:max:count` in cycles, log-spaced.
        #[arg(long, default_value = "1e3:1e7:41")]
        n_range: Range,
        /// Chain CSV for a posterior band at `--band-s-max`.
        #[arg(long, requires = "band_s_max")]
        chain: Option<PathBuf>,
        #[arg(long)]
        band_s_max: Option<f64>,
    },
    /// Simulate a dataset from given parameters.
    Simulate {
        /// Fit report or parameter JSON.
        #[arg(long)]
        params: PathBuf,
        /// Load levels as `specimen:s_max:ratio:count`, comma separated.
        #[arg(long)]
        design: String,
    },
    /// Refit at several mesh levels.
    Converge {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "poisson")]
        model: ModelArg,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        levels: Vec<usize>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Dataset CSV files, pooled.
    #[arg(long = "data", required = true, num_args = 1..)]
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelArg {
    MaxStress,
    Poisson,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::MaxStress => Model::MaxStress,
            ModelArg::Poisson => Model::Poisson,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || format!("expected min:max:count, got '{s}'");
        if parts.len() != 3 {
            return Err(bad());
        }
        let min: f64 = parts[0].parse().map_err(|_| bad())?;
        let max: f64 = parts[1].parse().map_err(|_| bad())?;
        let count: usize = parts[2].parse().map_err(|_| bad())?;
        if !(min > 0.0 && max >= min && count >= 1) {
            return Err(bad());
        }
        Ok(Range { min, max, count })
    }
}

impl Range {
    pub fn linear(&self) -> Vec<f64> {
        self.points(|a, b, t| a + t * (b - a))
    }

    pub fn logarithmic(&self) -> Vec<f64> {
        self.points(|a, b, t| (a.ln() + t * (b.ln() - a.ln())).exp())
    }

    fn points(&self, f: impl Fn(f64, f64, f64) -> f64) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        (0..self.count)
            .map(|k| f(self.min, self.max, k as f64 / (self.count - 1) as f64))
            .collect()
    }
}

/// Parameters from a fit report or a bare parameter file.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ParamsFile {
    Report(FitReport),
    Params(PoissonParams),
}

fn read_params(path: &Path) -> Result<PoissonParams> {
    let p = match io::read_json::<ParamsFile>(path)? {
        ParamsFile::Report(r) => r.fit.poisson_params(),
        ParamsFile::Params(p) => p,
    };
    p.validate()?;
    Ok(p)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    #[serde(flatten)]
    pub fit: FitResult,
    pub mesh_level: usize,
    pub n_experiments: usize,
}

#[derive(Debug, Clone, Serialize)]
struct McmcReport {
    summary: PosteriorSummary,
    dic: Dic,
    log_marginal_likelihood: Option<f64>,
    acceptance_rate: f64,
    delta: f64,
    seed: u64,
    n_iter: usize,
    burn_in: usize,
}

#[derive(Debug, Clone, Serialize)]
struct FieldSummary {
    specimen: String,
    mesh_level: usize,
    n_nodes: usize,
    n_triangles: usize,
    surface_measure_in2: f64,
    max_sigma_eff: f64,
    max_site: [f64; 2],
    notch_root_sigma_eff: f64,
    notch_root: [f64; 2],
}

struct Context {
    cfg: RunConfig,
    level: usize,
    seed: u64,
    out: PathBuf,
    delta: Option<DeltaArg>,
}

impl Context {
    fn new(g: &GlobalArgs) -> Result<Self> {
        let cfg = match &g.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        Ok(Context {
            level: g.mesh_level.unwrap_or(cfg.mesh_level),
            seed: g.seed.unwrap_or(cfg.fit.seed),
            out: g.out.clone().unwrap_or_else(|| cfg.output_dir.clone()),
            delta: g.delta,
            cfg,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn fixed_delta(&self) -> f64 {
        match self.delta {
            Some(DeltaArg::Fixed(d)) => d,
            _ => 0.0,
        }
    }

    fn load_data(&self, args: &DataArgs) -> Result<Vec<Experiment>> {
        let mut data = Vec::new();
        for f in &args.files {
            data.extend(io::read_dataset(f)?);
        }
        if data.is_empty() {
            return Err(Error::Dataset("no experiments in the supplied files".into()));
        }
        Ok(data)
    }

    fn caches(&self, data: &[Experiment], level: usize) -> Result<crate::poisson::CacheMap> {
        let mut cfg = self.cfg.clone();
        if let Some(DeltaArg::Fixed(d)) = self.delta {
            if !cfg.delta_grid.contains(&d) {
                cfg.delta_grid.push(d);
            }
        }
        cfg.caches_for(data.iter().map(|e| e.specimen_id.as_str()), level)
    }

    fn fit_spec(&self, model: Model) -> FitSpec {
        let mut spec = FitSpec::new(model, self.fixed_delta());
        spec.bounds = self.cfg.bounds.clone();
        if self.delta == Some(DeltaArg::Free) {
            spec = spec.with_free_delta();
        }
        spec
    }

    fn fit_options(&self) -> calibrate::FitOptions {
        calibrate::FitOptions {
            seed: self.seed,
            ..self.cfg.fit.clone()
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let ctx = Context::new(&cli.global)?;
    match &cli.command {
        Command::Mesh { specimen } => cmd_mesh(&ctx, specimen),
        Command::Solve { specimen } => cmd_solve(&ctx, specimen),
        Command::Fit { data, model } => cmd_fit(&ctx, data, (*model).into()),
        Command::Profile { data, model } => cmd_profile(&ctx, data, (*model).into()),
        Command::Mcmc { data, n_iter, init } => cmd_mcmc(&ctx, data, *n_iter, init.as_deref()),
        Command::Survival {
            specimen,
            params,
            ratio,
            s_range,
            n_range,
            chain,
            band_s_max,
        } => cmd_survival(&ctx, specimen, params, *ratio, s_range, n_range, chain.as_deref(), *band_s_max),
        Command::Simulate { params, design } => cmd_simulate(&ctx, params, design),
        Command::Converge { data, model, levels } => cmd_converge(&ctx, data, (*model).into(), levels),
    }
}

fn cmd_mesh(ctx: &Context, id: &str) -> Result<()> {
    let g = ctx.cfg.geometry(id)?;
    let mesh = mesh_at_level(&g, ctx.level)?;
    io::write_mesh(
        &ctx.path(&format!("mesh_{id}_nodes.csv")),
        &ctx.path(&format!("mesh_{id}_triangles.csv")),
        &mesh,
    )?;
    eprintln!(
        "{id}: {} nodes, {} triangles, surface measure {:.6} in^2",
        mesh.num_nodes(),
        mesh.num_triangles(),
        surface_measure(&mesh, g.thickness)
    );
    Ok(())
}

fn cmd_solve(ctx: &Context, id: &str) -> Result<()> {
    let g = ctx.cfg.geometry(id)?;
    let delta = ctx.fixed_delta();
    let cache = crate::poisson::SpecimenCache::build(&g, &ctx.cfg.material, ctx.level, &[])?;
    io::write_field_csv(&ctx.path(&format!("field_{id}.csv")), &cache.mesh, &cache.field)?;
    let averaged = averaged_profile(&cache.mesh, &cache.field, &cache.quad, delta, SUBGRID)?;
    let rows = profile_rows(&cache.mesh, &cache.quad, &cache.pointwise, &averaged);
    io::write_sites_csv(&ctx.path(&format!("sites_{id}.csv")), &rows)?;

    let (imax, smax) = cache
        .pointwise
        .values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, v)| (k, *v))
        .ok_or_else(|| Error::Mesh("no surface sites".into()))?;
    let root = notch_root_site(&cache.mesh, g.w_min);
    let s = cache.field.stress[root];
    let summary = FieldSummary {
        specimen: id.to_string(),
        mesh_level: ctx.level,
        n_nodes: cache.mesh.num_nodes(),
        n_triangles: cache.mesh.num_triangles(),
        surface_measure_in2: cache.quad.total(),
        max_sigma_eff: smax,
        max_site: cache.mesh.nodes[cache.quad.sites[imax]],
        notch_root_sigma_eff: crate::stress::effective_stress(s[0], s[1], s[2]),
        notch_root: cache.mesh.nodes[root],
    };
    io::write_json(&ctx.path(&format!("field_{id}.json")), &summary)?;
    eprintln!("{id}: max unit effective stress {smax:.4}");
    Ok(())
}

fn cmd_fit(ctx: &Context, args: &DataArgs, model: Model) -> Result<()> {
    let data = ctx.load_data(args)?;
    let caches = ctx.caches(&data, ctx.level)?;
    let fit = calibrate::mle(&data, &caches, &ctx.fit_spec(model), &ctx.fit_options())?;
    eprintln!("log-likelihood {:.4}, AIC {:.4}", fit.max_loglik, fit.aic);
    let report = FitReport {
        fit,
        mesh_level: ctx.level,
        n_experiments: data.len(),
    };
    io::write_json(&ctx.path("fit.json"), &report)
}

fn cmd_profile(ctx: &Context, args: &DataArgs, model: Model) -> Result<()> {
    let data = ctx.load_data(args)?;
    let caches = ctx.caches(&data, ctx.level)?;
    let profile = calibrate::profile_likelihood_delta(
        &data,
        &caches,
        &ctx.fit_spec(model),
        &ctx.cfg.delta_grid,
        &ctx.fit_options(),
    )?;
    io::write_profile_csv(&ctx.path("profile.csv"), &profile)?;
    io::write_json(&ctx.path("profile.json"), &profile)?;
    eprintln!(
        "best delta {} in, interval [{:.5}, {:.5}]",
        profile.best_delta, profile.interval.0, profile.interval.1
    );
    Ok(())
}

fn cmd_mcmc(ctx: &Context, args: &DataArgs, n_iter: Option<usize>, init: Option<&Path>) -> Result<()> {
    let data = ctx.load_data(args)?;
    let delta = ctx.fixed_delta();
    let caches = ctx.caches(&data, ctx.level)?;
    let init = match init {
        Some(p) => {
            let r: FitReport = io::read_json(p)?;
            Some(r.fit.estimates[..6].to_vec())
        }
        None => None,
    };
    let opts = McmcOptions {
        n_iter: n_iter.unwrap_or(ctx.cfg.mcmc.n_iter),
        seed: ctx.seed,
        burn_in_fraction: ctx.cfg.mcmc.burn_in_fraction,
        init,
    };
    let chain = bayes::mcmc(&data, &caches, &ctx.cfg.prior, delta, &opts)?;
    let objective = calibrate::Objective::new(&data, &caches, Model::Poisson, Some(delta))?;
    let dic = bayes::dic(&chain, |x| {
        let mut t = [0.0; calibrate::N_PARAMS];
        t[..6].copy_from_slice(x);
        t[DELTA] = delta;
        objective.loglik(&t)
    });
    let report = McmcReport {
        summary: bayes::posterior_summary(&chain),
        dic,
        log_marginal_likelihood: bayes::laplace_metropolis_logml(&chain).ok(),
        acceptance_rate: chain.acceptance_rate,
        delta,
        seed: chain.seed,
        n_iter: opts.n_iter,
        burn_in: chain.burn_in,
    };
    io::write_chain_csv(&ctx.path("chain.csv"), &chain)?;
    io::write_json(&ctx.path("mcmc.json"), &report)?;
    eprintln!("acceptance {:.3}, DIC {:.3}", chain.acceptance_rate, dic.dic);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_survival(
    ctx: &Context,
    id: &str,
    params: &Path,
    ratio: f64,
    s_range: &Range,
    n_range: &Range,
    chain: Option<&Path>,
    band_s_max: Option<f64>,
) -> Result<()> {
    let mut p = read_params(params)?;
    if let Some(DeltaArg::Fixed(d)) = ctx.delta {
        p.delta = d;
    }
    let g = ctx.cfg.geometry(id)?;
    let cache = crate::poisson::SpecimenCache::build(&g, &ctx.cfg.material, ctx.level, &[p.delta])?;
    let n_grid = n_range.logarithmic();
    let mut rows = Vec::new();
    for s in s_range.linear() {
        let curve = bayes::survival_curve(&cache, &p, s, ratio, &n_grid)?;
        rows.extend(n_grid.iter().zip(curve).map(|(&n, v)| [s, n, v]));
    }
    io::write_survival_grid_csv(&ctx.path(&format!("survival_{id}.csv")), &rows)?;
    if let (Some(chain_path), Some(s_max)) = (chain, band_s_max) {
        let (names, rows) = io::read_chain_csv(chain_path)?;
        let chain = bayes::Chain {
            samples: rows.iter().map(|r| r[..r.len() - 1].to_vec()).collect(),
            log_lik: vec![f64::NAN; rows.len()],
            log_post: rows.iter().map(|r| r[r.len() - 1]).collect(),
            names,
            acceptance_rate: f64::NAN,
            seed: 0,
            burn_in: 0,
        };
        let band = bayes::posterior_survival_band(&chain, &cache, p.delta, s_max, ratio, &n_grid, ctx.cfg.mcmc.thin)?;
        let reference = bayes::survival_curve(&cache, &p, s_max, ratio, &n_grid)?;
        io::write_band_csv(&ctx.path(&format!("band_{id}.csv")), &band, Some(&reference))?;
    }
    Ok(())
}

/// Parses `specimen:s_max:ratio:count` levels separated by commas.
pub fn parse_design(s: &str) -> Result<Vec<LoadLevel>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let parts: Vec<&str> = t.trim().split(':').collect();
            let bad = || Error::Config(format!("design entry '{t}' is not specimen:s_max:ratio:count"));
            if parts.len() != 4 {
                return Err(bad());
            }
            Ok(LoadLevel {
                specimen_id: parts[0].to_string(),
                s_max: parts[1].parse().map_err(|_| bad())?,
                ratio: parts[2].parse().map_err(|_| bad())?,
                count: parts[3].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

fn cmd_simulate(ctx: &Context, params: &Path, design: &str) -> Result<()> {
    let mut p = read_params(params)?;
    if let Some(DeltaArg::Fixed(d)) = ctx.delta {
        p.delta = d;
    }
    let design = parse_design(design)?;
    if design.is_empty() {
        return Err(Error::Config("empty design".into()));
    }
    let mut cfg = ctx.cfg.clone();
    cfg.delta_grid = vec![p.delta];
    let caches = cfg.caches_for(design.iter().map(|l| l.specimen_id.as_str()), ctx.level)?;
    let data = simulate_dataset(&design, &caches, &p, ctx.seed, ctx.cfg.censor_cycles)?;
    io::write_dataset(&ctx.path("simulated.csv"), &data)?;
    eprintln!("{} experiments, {} run-outs", data.len(), data.iter().filter(|e| !e.failed).count());
    Ok(())
}

fn cmd_converge(ctx: &Context, args: &DataArgs, model: Model, levels: &[usize]) -> Result<()> {
    let data = ctx.load_data(args)?;
    let rows = calibrate::convergence_study(
        &data,
        &ctx.cfg.geometries()?,
        &ctx.cfg.material,
        levels,
        &ctx.fit_spec(model),
        &ctx.fit_options(),
    )?;
    io::write_convergence_csv(&ctx.path("convergence.csv"), &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_ranges_and_delta() {
        let r: Range = "1e3:1e7:5".parse().unwrap();
        let g = r.logarithmic();
        assert!((g[2] - 1e5).abs() < 1e-6 && g.len() == 5);
        assert_eq!("free".parse::<DeltaArg>().unwrap(), DeltaArg::Free);
        assert_eq!("0.0125".parse::<DeltaArg>().unwrap(), DeltaArg::Fixed(0.0125));
        assert!("-1".parse::<DeltaArg>().is_err());
    }

    #[test]
    fn parses_design() {
        let d = parse_design("s2:45:-1:10, s1:30:0.5:3").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].ratio, -1.0);
        assert!(parse_design("s2:45:10").is_err());
    }
}
