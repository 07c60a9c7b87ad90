//! The experiment suites behind each CLI subcommand.
//!
//! Each function takes a validated [`Context`] and returns [`Artifacts`]:
//! tables whose contents depend only on the configuration and seeds.

use std::path::{Path, PathBuf};

use scoregen_core::field::{NetworkField, ScoreField, TrueScore};
use scoregen_core::kde::{weighted_mse, KdeScoreEstimator};
use scoregen_core::math::{logspace, normal_cdf};
use scoregen_core::metrics::{
    fit_rate, integrate_in_time, score_matching_loss, smoothed_empirical_kl, truncation_l1, tv_histogram,
    tv_histogram_vs_cdf, Binning, Grid, RateFit, TvEstimate,
};
use scoregen_core::mlp::train_erm;
use scoregen_core::relu::{
    build_exp, build_kde_net_capped, build_monomial, build_point_fit_certified, build_polynomial, build_product,
    build_reciprocal, build_root, build_score_net_capped, build_square, build_step_certified, ErrorCertificate,
    ReluNetwork,
};
use scoregen_core::sampler::{forward_sample, perturb, reverse_sample, ReverseRunSpec, Start};
use scoregen_core::schedule::{noise_scale, time_for_sigma};
use scoregen_core::targets::{triangle_density, Target};
use scoregen_core::DiffusionSchedule;

use crate::audit::BoundAudit;
use crate::config::{Builder, Command, Estimator, ExperimentConfig, NetSpec, ScoreSource, TruncationDensity};
use crate::error::{HarnessError, Result};
use crate::netfile::{self, NetworkFile};
use crate::output::{read_samples, samples_table, Artifacts};
use crate::table::{num, opt, Table};

/// A validated configuration plus the command-line overrides.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: ExperimentConfig,
    pub target: Target,
    pub seed_offset: u64,
    pub threads: usize,
    pub param_cap: usize,
    /// Relative paths inside the configuration resolve against this directory.
    pub base_dir: PathBuf,
}

impl Context {
    /// Validates `config` for `command` and resolves its defaults.
    pub fn new(config: &ExperimentConfig, command: Command) -> Result<Self> {
        let target = config.validate(command)?;
        let config = config.resolved()?;
        Ok(Self {
            threads: config.threads,
            param_cap: config.param_cap,
            config,
            target,
            seed_offset: 0,
            base_dir: PathBuf::from("."),
        })
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.config.seeds.iter().map(|s| s.wrapping_add(self.seed_offset)).collect()
    }

    pub fn first_seed(&self) -> u64 {
        self.seeds()[0]
    }

    fn path(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn dim(&self) -> usize {
        self.target.dim()
    }
}

/// Maps `f` over `items` on up to `threads` workers; results keep input order.
pub fn par_map<T: Sync, R: Send>(threads: usize, items: &[T], f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let f = &f;
    let parts: Vec<Result<Vec<R>>> = std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(f).collect::<Result<Vec<R>>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Log-log fit of the per-x means, x sorted ascending; `None` below three points.
fn fit_means(points: &[(f64, Vec<f64>)]) -> Result<Option<RateFit>> {
    if points.len() < 3 {
        return Ok(None);
    }
    let mut sorted: Vec<(f64, f64)> = points.iter().map(|(x, ys)| (*x, mean(ys))).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (xs, ys): (Vec<f64>, Vec<f64>) = sorted.into_iter().unzip();
    Ok(Some(fit_rate(&xs, &ys)?))
}

fn estimator_field<'a>(kde: &'a KdeScoreEstimator, which: Estimator) -> Box<dyn ScoreField + 'a> {
    match which {
        Estimator::Regularized => Box::new(kde.regularized()),
        Estimator::Truncated => Box::new(kde.truncated()),
    }
}

const RATE_HEADER: &[&str] = &[
    "kind",
    "n",
    "t",
    "sigma",
    "horizon",
    "seed",
    "value",
    "std_err",
    "evaluations",
    "violations",
    "worst_bound_ratio",
    "slope",
    "intercept",
    "residual",
];

struct RateCell {
    value: f64,
    std_err: f64,
    evaluations: usize,
    violations: usize,
    worst: f64,
}

/// Weighted score errors of the kernel estimator against the true score.
///
/// Pointwise cells (`kind = cell`) for every `(n, t, seed)` with a
/// `summary` slope over `n` per time; time-integrated cells
/// (`kind = integrated`) for every `(n, t0, seed)` with an
/// `integrated_summary` slope over `t0` per `n`. Every evaluation of the
/// estimator is checked against the uniform score bound.
pub fn rates(ctx: &Context) -> Result<Artifacts> {
    let c = &ctx.config.rates;
    let d = ctx.dim();
    let mut times: Vec<(f64, Option<f64>)> = c.t.iter().map(|&t| (t, None)).collect();
    for &s in &c.sigma {
        times.push((time_for_sigma(s)?, Some(s)));
    }
    let seeds = ctx.seeds();
    let mut t0s = c.t0.clone();
    t0s.sort_by(f64::total_cmp);

    let jobs: Vec<(usize, u64)> = c.n.iter().flat_map(|&n| seeds.iter().map(move |&s| (n, s))).collect();
    let results = par_map(ctx.threads, &jobs, |&(n, seed)| {
        let samples = ctx.target.sample(n, seed);
        let horizon = ctx.config.schedule.horizon_for(n);
        let t_min = times.iter().map(|t| t.0).chain(t0s.iter().cloned()).fold(f64::INFINITY, f64::min);
        let schedule = DiffusionSchedule::new(t_min.min(horizon * 0.5), horizon.max(t_min * 2.0), d, ctx.config.schedule.alpha)?;
        let kde = KdeScoreEstimator::new(&samples, schedule)?;
        let truth = TrueScore(&ctx.target);
        let cell = |t: f64| -> Result<RateCell> {
            let audit = BoundAudit::new(estimator_field(&kde, c.estimator), n);
            let e = weighted_mse(&audit, &truth, t, &ctx.target, c.quadrature)?;
            Ok(RateCell {
                value: e.value,
                std_err: e.std_err,
                evaluations: audit.visited(),
                violations: audit.violations(),
                worst: audit.worst_ratio(),
            })
        };
        let pointwise = times.iter().map(|&(t, _)| cell(t)).collect::<Result<Vec<_>>>()?;
        let mut integrated = Vec::new();
        if !t0s.is_empty() {
            let grid = shared_time_grid(&t0s, horizon, c.segment_nodes, c.tail_nodes);
            let per_t = grid.iter().map(|&t| cell(t)).collect::<Result<Vec<_>>>()?;
            let estimates: Vec<_> = per_t
                .iter()
                .map(|r| scoregen_core::kde::Estimate { value: r.value, std_err: r.std_err })
                .collect();
            for &t0 in &t0s {
                let i = grid.iter().position(|&g| g == t0).expect("the grid contains every t0");
                let e = integrate_in_time(&grid[i..], &estimates[i..]);
                let tail = &per_t[i..];
                integrated.push(RateCell {
                    value: e.value,
                    std_err: e.std_err,
                    evaluations: tail.iter().map(|r| r.evaluations).sum(),
                    violations: tail.iter().map(|r| r.violations).sum(),
                    worst: tail.iter().map(|r| r.worst).fold(0.0, f64::max),
                });
            }
        }
        Ok((pointwise, integrated, horizon))
    })?;

    let mut table = Table::new("rates", RATE_HEADER);
    let mut arts = Artifacts::default();
    let row = |kind: &str, n: &str, t: f64, sigma: Option<f64>, horizon: Option<f64>, seed: u64, r: &RateCell| {
        vec![
            kind.to_string(),
            n.to_string(),
            num(t),
            opt(sigma),
            opt(horizon),
            seed.to_string(),
            num(r.value),
            num(r.std_err),
            r.evaluations.to_string(),
            r.violations.to_string(),
            num(r.worst),
            String::new(),
            String::new(),
            String::new(),
        ]
    };
    let summary = |kind: &str, n: String, t: Option<f64>, sigma: Option<f64>, fit: &RateFit| {
        vec![
            kind.to_string(),
            n,
            opt(t),
            opt(sigma),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            num(fit.slope),
            num(fit.intercept),
            num(fit.residual),
        ]
    };
    let at = |n_idx: usize, s_idx: usize| &results[n_idx * seeds.len() + s_idx];
    let mut total_violations = 0usize;
    for (ni, &n) in c.n.iter().enumerate() {
        for (ti, &(t, sigma)) in times.iter().enumerate() {
            for (si, &seed) in seeds.iter().enumerate() {
                let r = &at(ni, si).0[ti];
                total_violations += r.violations;
                table.push(row("cell", &n.to_string(), t, sigma, None, seed, r));
            }
        }
    }
    for (ti, &(t, sigma)) in times.iter().enumerate() {
        let points: Vec<(f64, Vec<f64>)> = c
            .n
            .iter()
            .enumerate()
            .map(|(ni, &n)| (n as f64, (0..seeds.len()).map(|si| at(ni, si).0[ti].value).collect()))
            .collect();
        if let Some(fit) = fit_means(&points)? {
            arts.measurements.push((format!("slope_over_n_at_t={}", num(t)), fit.slope));
            table.push(summary("summary", String::new(), Some(t), sigma, &fit));
        }
    }
    for (ni, &n) in c.n.iter().enumerate() {
        for (ki, &t0) in t0s.iter().enumerate() {
            for (si, &seed) in seeds.iter().enumerate() {
                let (_, integrated, horizon) = at(ni, si);
                let r = &integrated[ki];
                total_violations += r.violations;
                table.push(row("integrated", &n.to_string(), t0, None, Some(*horizon), seed, r));
            }
        }
        let points: Vec<(f64, Vec<f64>)> = t0s
            .iter()
            .enumerate()
            .map(|(ki, &t0)| (t0, (0..seeds.len()).map(|si| at(ni, si).1[ki].value).collect()))
            .collect();
        if let Some(fit) = fit_means(&points)? {
            arts.measurements.push((format!("slope_over_t0_at_n={n}"), fit.slope));
            table.push(summary("integrated_summary", n.to_string(), None, None, &fit));
        }
    }
    arts.measurements.push(("bound_violations".into(), total_violations as f64));
    arts.tables.push(table);
    Ok(arts)
}

/// Log-spaced nodes through every `t0` (ascending) up to `horizon`; each
/// `t0` appears exactly.
pub fn shared_time_grid(t0s: &[f64], horizon: f64, segment_nodes: usize, tail_nodes: usize) -> Vec<f64> {
    let mut knots = t0s.to_vec();
    knots.push(horizon);
    let mut grid = vec![knots[0]];
    for (i, w) in knots.windows(2).enumerate() {
        let nodes = if i + 2 == knots.len() { tail_nodes } else { segment_nodes };
        let seg = logspace(w[0], w[1], nodes.max(2));
        grid.extend_from_slice(&seg[1..]);
    }
    grid
}

/// Distribution function of the one-dimensional OU marginal at `t`, when closed-form.
pub fn marginal_cdf(target: &Target, t: f64) -> Option<Box<dyn Fn(f64) -> f64 + '_>> {
    if target.dim() != 1 {
        return None;
    }
    let m = (-t).exp();
    let s2 = noise_scale(t).powi(2);
    match target {
        Target::Mixture(g) => {
            let comps: Vec<(f64, f64, f64)> = g
                .weights()
                .iter()
                .zip(g.means())
                .zip(g.variances())
                .map(|((w, mu), v)| (*w, m * mu[0], (m * m * v[0] + s2).sqrt()))
                .collect();
            Some(Box::new(move |x| comps.iter().map(|(w, mu, sd)| w * normal_cdf((x - mu) / sd)).sum()))
        }
        Target::Cube(_) => None,
    }
}

/// Histogram TV between `points` and the target's marginal at `t`: exact
/// distribution function in one dimension when available, otherwise fresh
/// forward draws with the same count.
fn tv_to_marginal(target: &Target, t: f64, points: &[Vec<f64>], bins: usize, lo: f64, hi: f64, seed: u64) -> Result<TvEstimate> {
    let d = target.dim();
    if let Some(cdf) = marginal_cdf(target, t) {
        let binning = Binning::uniform_1d(bins, lo, hi)?;
        return Ok(tv_histogram_vs_cdf(points, &binning, &*cdf)?);
    }
    let binning = Binning::new(bins, vec![lo; d], vec![hi; d])?;
    let reference = forward_sample(target, t, points.len(), seed ^ 0x5eed_0f7e57)?;
    Ok(tv_histogram(points, &reference, &binning)?)
}

const SUMMARY_HEADER: &[&str] = &["seed", "coordinate", "mean", "target_mean", "variance", "target_variance", "tv", "tv_std_err", "t0", "horizon"];

/// Reverse-SDE samples from the configured score, one CSV row per point,
/// plus per-seed moments and histogram TV against the target marginal at `t0`.
pub fn sample(ctx: &Context) -> Result<Artifacts> {
    let c = &ctx.config.sample;
    let d = ctx.dim();
    let schedule = ctx.config.schedule.resolve(c.n_samples, d)?;
    let network = match c.score {
        ScoreSource::Network => {
            let net = netfile::load(&ctx.path(c.network.as_deref().expect("validated")))?;
            if net.input_dim() != d + 1 || net.output_dim() != d {
                return Err(HarnessError::config(format!(
                    "sample.network maps {} inputs to {} outputs; a score network here needs {} -> {d}",
                    net.input_dim(),
                    net.output_dim(),
                    d + 1
                )));
            }
            Some(net)
        }
        _ => None,
    };
    let seeds = ctx.seeds();
    let runs = par_map(ctx.threads, &seeds, |&seed| {
        let data;
        let kde;
        let field: Box<dyn ScoreField + '_> = match c.score {
            ScoreSource::True => Box::new(TrueScore(&ctx.target)),
            ScoreSource::KdeRegularized | ScoreSource::KdeTruncated => {
                data = ctx.target.sample(c.n_samples, seed);
                kde = KdeScoreEstimator::new(&data, schedule)?;
                let which = if c.score == ScoreSource::KdeRegularized { Estimator::Regularized } else { Estimator::Truncated };
                estimator_field(&kde, which)
            }
            ScoreSource::Network => Box::new(NetworkField(network.as_ref().expect("loaded above"))),
        };
        let spec = ReverseRunSpec { steps: c.steps, n_paths: c.n_paths, seed, start: c.start };
        let points = reverse_sample(&*field, &spec, &schedule, Some(&ctx.target))?;
        let tv = tv_to_marginal(&ctx.target, schedule.t0, &points, c.bins, c.hist_lo, c.hist_hi, seed)?;
        Ok((points, tv))
    })?;

    let mut summary = Table::new("sample_summary", SUMMARY_HEADER);
    let target_mean = ctx.target.marginal_mean(schedule.t0);
    let target_var = marginal_variance(&ctx.target, schedule.t0);
    let mut arts = Artifacts::default();
    for (&seed, (points, tv)) in seeds.iter().zip(&runs) {
        arts.tables.push(samples_table(&format!("samples_seed{seed}"), points));
        for j in 0..d {
            let xs: Vec<f64> = points.iter().map(|p| p[j]).collect();
            let m = mean(&xs);
            let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len().max(2) - 1) as f64;
            summary.push(vec![
                seed.to_string(),
                j.to_string(),
                num(m),
                num(target_mean[j]),
                num(v),
                num(target_var[j]),
                num(tv.value),
                num(tv.std_err),
                num(schedule.t0),
                num(schedule.horizon),
            ]);
        }
        arts.measurements.push((format!("tv_seed_{seed}"), tv.value));
    }
    arts.tables.push(summary);
    Ok(arts)
}

/// Per-axis variance of the OU marginal at `t`.
pub fn marginal_variance(target: &Target, t: f64) -> Vec<f64> {
    let m = (-t).exp();
    let s2 = noise_scale(t).powi(2);
    let d = target.dim();
    match target {
        Target::Mixture(g) => {
            let mean = g.mean();
            (0..d)
                .map(|j| {
                    let second: f64 = g
                        .weights()
                        .iter()
                        .zip(g.means())
                        .zip(g.variances())
                        .map(|((w, mu), v)| w * (v[j] + mu[j] * mu[j]))
                        .sum();
                    m * m * (second - mean[j] * mean[j]) + s2
                })
                .collect()
        }
        Target::Cube(_) => vec![m * m / 12.0 + s2; d],
    }
}

const CERT_HEADER: &[&str] = &[
    "builder",
    "params",
    "claimed",
    "measured",
    "width",
    "depth",
    "param_count",
    "budget_width",
    "budget_depth",
    "fitted",
    "constant",
    "grid_points",
    "formula",
];

pub fn certificate_row(cert: &ErrorCertificate) -> Vec<String> {
    vec![
        cert.builder.clone(),
        cert.params.clone(),
        num(cert.claimed),
        num(cert.measured),
        cert.width.to_string(),
        cert.depth.to_string(),
        cert.param_count.to_string(),
        cert.budget.map(|b| b.width.to_string()).unwrap_or_default(),
        cert.budget.map(|b| b.depth.to_string()).unwrap_or_default(),
        cert.fitted.to_string(),
        opt(cert.constant),
        cert.grid_points.to_string(),
        cert.formula.clone(),
    ]
}

/// Samples for the kernel builders: the configured file, or fresh target draws.
fn net_samples(ctx: &Context, spec: &NetSpec) -> Result<Vec<Vec<f64>>> {
    let samples = match &spec.samples_file {
        Some(f) => read_samples(&ctx.path(f))?,
        None => ctx.target.sample(spec.n_samples, ctx.first_seed()),
    };
    if samples[0].len() != ctx.dim() {
        return Err(HarnessError::config(format!(
            "samples have dimension {} but the target has dimension {}",
            samples[0].len(),
            ctx.dim()
        )));
    }
    Ok(samples)
}

/// Builds the network described by `spec` and its certificate.
pub fn construct(ctx: &Context, spec: &NetSpec) -> Result<(ReluNetwork, ErrorCertificate)> {
    let p = spec.params()?;
    let (net, cert) = match spec.builder {
        Builder::Square => build_square(spec.lo, spec.hi, &p)?,
        Builder::Product => build_product(spec.lo, spec.hi, spec.lo, spec.hi, &p)?,
        Builder::Monomial => build_monomial(spec.k, spec.radius, &p)?,
        Builder::Polynomial => build_polynomial(&spec.nu, spec.radius, &p)?,
        Builder::Step => {
            let delta = spec.delta.unwrap_or(step_delta(spec));
            build_step_certified(spec.lo, spec.hi, spec.intervals, delta, &p)?
        }
        Builder::PointFit => build_point_fit_certified(&spec.values, &p)?,
        Builder::Exp => build_exp(spec.radius, &p)?,
        Builder::Root => build_root(spec.k, spec.radius, &p)?,
        Builder::Reciprocal => build_reciprocal(p.eps, p.s)?,
        Builder::Kde | Builder::Score => {
            let samples = net_samples(ctx, spec)?;
            let schedule = ctx.config.schedule.resolve(samples.len(), ctx.dim())?;
            if spec.builder == Builder::Kde {
                build_kde_net_capped(&samples, &p, &schedule, ctx.param_cap)?
            } else {
                build_score_net_capped(&samples, &p, &schedule, ctx.param_cap)?
            }
        }
    };
    net.check_cap(ctx.param_cap)?;
    Ok((net, cert))
}

/// Ramp width used when none is configured: a tenth of an interval.
fn step_delta(spec: &NetSpec) -> f64 {
    (spec.hi - spec.lo) / spec.intervals as f64 / 10.0
}

/// `network.json` and `certificates.csv` for the configured builder.
pub fn build_net(ctx: &Context) -> Result<Artifacts> {
    let (net, cert) = construct(ctx, &ctx.config.build_net)?;
    let mut table = Table::new("certificates", CERT_HEADER);
    table.push(certificate_row(&cert));
    let mut arts = Artifacts::default();
    arts.measurements.push(("measured".into(), cert.measured));
    arts.measurements.push(("claimed".into(), cert.claimed));
    for (k, v) in &cert.notes {
        arts.measurements.push((k.clone(), *v));
    }
    arts.tables.push(table);
    arts.files.push(("network.json".into(), NetworkFile::from_network(&net).to_json().into_bytes()));
    Ok(arts)
}

/// The function a builder approximates, with the grid it is checked on.
type RefFn = Box<dyn Fn(&[f64], &mut [f64])>;

struct Reference {
    points: Vec<Vec<f64>>,
    eval: RefFn,
}

fn tensor(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for axis in axes {
        out = out.into_iter().flat_map(|p: Vec<f64>| axis.iter().map(move |&x| [p.as_slice(), &[x]].concat())).collect();
    }
    out
}

fn lin(a: f64, b: f64, k: usize) -> Vec<f64> {
    scoregen_core::math::linspace(a, b, k)
}

fn reference(ctx: &Context, spec: &NetSpec, points: usize) -> Result<Reference> {
    let r = spec.radius;
    let (lo, hi) = (spec.lo, spec.hi);
    let reference = match spec.builder {
        Builder::Square => Reference { points: tensor(&[lin(lo, hi, points)]), eval: Box::new(|x, o| o[0] = x[0] * x[0]) },
        Builder::Product => Reference {
            points: tensor(&[lin(lo, hi, points), lin(lo, hi, points)]),
            eval: Box::new(|x, o| o[0] = x[0] * x[1]),
        },
        Builder::Monomial => Reference {
            points: tensor(&vec![lin(-r, r, points); spec.k]),
            eval: Box::new(|x, o| o[0] = x.iter().product()),
        },
        Builder::Polynomial => {
            let nu = spec.nu.clone();
            Reference {
                points: tensor(&vec![lin(-r, r, points); nu.len()]),
                eval: Box::new(move |x, o| o[0] = x.iter().zip(&nu).map(|(v, &k)| v.powi(k as i32)).product()),
            }
        }
        Builder::Step => {
            let k = spec.intervals;
            let h = (hi - lo) / k as f64;
            let delta = spec.delta.unwrap_or(step_delta(spec));
            let per = points.div_ceil(k).max(2);
            let mut pts = Vec::new();
            for j in 0..k {
                let end = if j + 1 == k { hi } else { lo + (j + 1) as f64 * h - delta };
                pts.extend(lin(lo + j as f64 * h, end, per).into_iter().map(|x| vec![x]));
            }
            Reference {
                points: pts,
                eval: Box::new(move |x, o| o[0] = (((x[0] - lo) / h).floor()).clamp(0.0, (k - 1) as f64)),
            }
        }
        Builder::PointFit => {
            let values = spec.values.clone();
            Reference {
                points: (0..values.len()).map(|i| vec![i as f64]).collect(),
                eval: Box::new(move |x, o| o[0] = values[x[0] as usize]),
            }
        }
        Builder::Exp => Reference { points: tensor(&[lin(0.0, r, points)]), eval: Box::new(|x, o| o[0] = (-x[0]).exp()) },
        Builder::Root => {
            let k = spec.k as f64;
            Reference { points: tensor(&[lin(0.0, r, points)]), eval: Box::new(move |x, o| o[0] = x[0].powf(1.0 / k)) }
        }
        Builder::Reciprocal => {
            let eps = spec.params()?.eps;
            Reference { points: tensor(&[logspace(eps, 1.0 / eps, points)]), eval: Box::new(|x, o| o[0] = 1.0 / x[0]) }
        }
        Builder::Kde | Builder::Score => {
            let samples = net_samples(ctx, spec)?;
            let d = ctx.dim();
            let schedule = ctx.config.schedule.resolve(samples.len(), d)?;
            let ts = logspace(schedule.t0, schedule.horizon, 9);
            let mut axes = vec![lin(lo, hi, points); d];
            axes.push(ts);
            let kde = KdeScoreEstimator::new(&samples, schedule)?;
            let kernel = spec.builder == Builder::Kde;
            Reference {
                points: tensor(&axes),
                eval: Box::new(move |x, o| {
                    let (y, t) = x.split_at(d);
                    if kernel {
                        o[0] = kde.kernel_mean(t[0], y).unwrap_or(f64::NAN);
                    } else {
                        match kde.regularized_score(t[0], y) {
                            Ok(s) => o.copy_from_slice(&s),
                            Err(_) => o.fill(f64::NAN),
                        }
                    }
                }),
            }
        }
    };
    Ok(reference)
}

const VERIFY_HEADER: &[&str] = &["builder", "claimed", "measured", "width", "depth", "param_count", "grid_points", "holds"];

/// Re-measures a network file against the exact function of its reference
/// builder. A measured error above the tolerance is reported through
/// [`Artifacts::violation`] after the table is complete.
pub fn verify_net(ctx: &Context) -> Result<Artifacts> {
    let c = &ctx.config.verify_net;
    let path = ctx.path(c.network.as_deref().expect("validated"));
    let net = netfile::load(&path)?;
    let reference = reference(ctx, &c.reference, c.points)?;
    let in_dim = reference.points[0].len();
    if net.input_dim() != in_dim {
        return Err(HarnessError::input(&path, format!("network takes {} inputs; the reference takes {in_dim}", net.input_dim())));
    }
    let mut want = vec![0.0; net.output_dim()];
    let mut sup: f64 = 0.0;
    for x in &reference.points {
        (reference.eval)(x, &mut want);
        let got = net.eval(x);
        for (g, w) in got.iter().zip(&want) {
            let e = (g - w).abs();
            if !(e <= sup) {
                sup = e;
            }
        }
    }
    let claimed = c.tolerance.expect("validated");
    let holds = sup <= claimed;
    let mut table = Table::new("certificates", VERIFY_HEADER);
    table.push(vec![
        c.reference.builder.name().to_string(),
        num(claimed),
        num(sup),
        net.width().to_string(),
        net.depth().to_string(),
        net.param_count().to_string(),
        reference.points.len().to_string(),
        holds.to_string(),
    ]);
    let mut arts = Artifacts::default();
    arts.measurements.push(("measured".into(), sup));
    arts.tables.push(table);
    if !holds {
        arts.violation = Some(format!("measured error {} exceeds the tolerance {claimed}", num(sup)));
    }
    Ok(arts)
}

const TRAIN_HEADER: &[&str] = &["seed", "step", "batch_loss", "eval_loss"];
const TRAIN_EVAL_HEADER: &[&str] = &["seed", "n", "t0", "horizon", "initial_loss", "trained_loss", "kde_loss", "ratio_to_kde", "best_step"];

/// One training run per seed: curve rows, the integrated score error of the
/// initial and trained nets and of the kernel estimator on the same data,
/// and a network file per seed.
pub fn train(ctx: &Context) -> Result<Artifacts> {
    let c = &ctx.config.train;
    let d = ctx.dim();
    let schedule = ctx.config.schedule.resolve(c.n_samples, d)?;
    let grid = logspace(schedule.t0, schedule.horizon, c.time_nodes);
    let seeds = ctx.seeds();
    let runs = par_map(ctx.threads, &seeds, |&seed| {
        let samples = ctx.target.sample(c.n_samples, seed);
        let out = train_erm(&samples, &c.trainer(seed), &schedule)?;
        let truth = TrueScore(&ctx.target);
        let loss = |f: &dyn ScoreField| score_matching_loss(f, &truth, &ctx.target, &grid, c.quadrature).map(|e| e.value);
        let kde = KdeScoreEstimator::new(&samples, schedule)?;
        let losses = [loss(&out.initial)?, loss(&out.net)?, loss(&kde.regularized())?];
        Ok((out, losses))
    })?;
    let mut curve = Table::new("training_curve", TRAIN_HEADER);
    let mut eval = Table::new("training_eval", TRAIN_EVAL_HEADER);
    let mut arts = Artifacts::default();
    let mut ratios = Vec::new();
    for (&seed, (out, [initial, trained, kde])) in seeds.iter().zip(&runs) {
        for p in &out.curve {
            curve.push(vec![seed.to_string(), p.step.to_string(), num(p.batch_loss), num(p.eval_loss)]);
        }
        eval.push(vec![
            seed.to_string(),
            c.n_samples.to_string(),
            num(schedule.t0),
            num(schedule.horizon),
            num(*initial),
            num(*trained),
            num(*kde),
            num(trained / kde),
            out.best_step.to_string(),
        ]);
        ratios.push(trained / kde);
        let net = out.net.to_relu_network();
        arts.files.push((format!("network_seed{seed}.json"), NetworkFile::from_network(&net).to_json().into_bytes()));
    }
    ratios.sort_by(f64::total_cmp);
    arts.measurements.push(("median_ratio_to_kde".into(), ratios[ratios.len() / 2]));
    arts.tables.push(curve);
    arts.tables.push(eval);
    Ok(arts)
}

const KL_HEADER: &[&str] = &["kind", "n", "seed", "kl", "slope", "intercept", "residual"];

/// KL between the Gaussian-smoothed empirical measure and the smoothed target, over `n`.
pub fn sweep_kl(ctx: &Context) -> Result<Artifacts> {
    let c = &ctx.config.sweep_kl;
    let grid = match ctx.dim() {
        1 => Grid::uniform_1d(c.lo, c.hi, c.points)?,
        _ => Grid::tensor_2d([c.lo; 2], [c.hi; 2], c.points)?,
    };
    let seeds = ctx.seeds();
    let jobs: Vec<(usize, u64)> = c.n.iter().flat_map(|&n| seeds.iter().map(move |&s| (n, s))).collect();
    let kls = par_map(ctx.threads, &jobs, |&(n, seed)| Ok(smoothed_empirical_kl(&ctx.target, n, c.sigma, seed, &grid)?))?;
    let mut table = Table::new("sweep_kl", KL_HEADER);
    for (&(n, seed), kl) in jobs.iter().zip(&kls) {
        table.push(vec!["cell".into(), n.to_string(), seed.to_string(), num(*kl), String::new(), String::new(), String::new()]);
    }
    let points: Vec<(f64, Vec<f64>)> = c
        .n
        .iter()
        .enumerate()
        .map(|(i, &n)| (n as f64, kls[i * seeds.len()..(i + 1) * seeds.len()].to_vec()))
        .collect();
    let mut arts = Artifacts::default();
    if let Some(fit) = fit_means(&points)? {
        table.push(vec!["summary".into(), String::new(), String::new(), String::new(), num(fit.slope), num(fit.intercept), num(fit.residual)]);
        arts.measurements.push(("slope".into(), fit.slope));
    }
    arts.tables.push(table);
    Ok(arts)
}

const TRUNC_HEADER: &[&str] = &["kind", "sigma", "l1", "slope", "intercept", "residual"];

/// `|p - p * phi_sigma|_1` over the configured noise levels, with a slope fit.
pub fn sweep_truncation(ctx: &Context) -> Result<Artifacts> {
    let c = &ctx.config.sweep_truncation;
    let grid = Grid::uniform_1d(c.lo, c.hi, c.points)?;
    let target = &ctx.target;
    let density: Box<dyn Fn(f64) -> f64 + Sync> = match c.density {
        TruncationDensity::Target => Box::new(move |x| target.base_density(&[x])),
        TruncationDensity::Triangle => Box::new(triangle_density),
    };
    let l1s = par_map(ctx.threads, &c.sigma, |&s| Ok(truncation_l1(&*density, s, &grid)?))?;
    let mut table = Table::new("sweep_truncation", TRUNC_HEADER);
    for (s, l1) in c.sigma.iter().zip(&l1s) {
        table.push(vec!["cell".into(), num(*s), num(*l1), String::new(), String::new(), String::new()]);
    }
    let points: Vec<(f64, Vec<f64>)> = c.sigma.iter().zip(&l1s).map(|(s, l)| (*s, vec![*l])).collect();
    let mut arts = Artifacts::default();
    if let Some(fit) = fit_means(&points)? {
        table.push(vec!["summary".into(), String::new(), String::new(), num(fit.slope), num(fit.intercept), num(fit.residual)]);
        arts.measurements.push(("slope".into(), fit.slope));
    }
    arts.tables.push(table);
    Ok(arts)
}

const GIRSANOV_HEADER: &[&str] = &["seed", "bias", "injected_loss", "pinsker_bound", "tv", "tv_std_err", "t0", "horizon"];

/// Reverse sampling with the true score plus a constant bias, started from
/// the exact law at `T`; the terminal histogram TV against the exact
/// marginal is reported next to `sqrt(|b|^2 (T - t0) / 2)`.
pub fn girsanov_check(ctx: &Context) -> Result<Artifacts> {
    let c = &ctx.config.girsanov;
    let d = ctx.dim();
    let schedule = DiffusionSchedule::new(c.t0, c.t0 + c.span, d, ctx.config.schedule.alpha)?;
    let seeds = ctx.seeds();
    let jobs: Vec<(u64, f64)> = seeds.iter().flat_map(|&s| c.bias.iter().map(move |&b| (s, b))).collect();
    let cells = par_map(ctx.threads, &jobs, |&(seed, b)| {
        let bias = vec![b; d];
        let injected = scoregen_core::sampler::injected_loss(&bias, &schedule);
        let field = perturb(TrueScore(&ctx.target), bias);
        let spec = ReverseRunSpec { steps: c.steps, n_paths: c.n_paths, seed, start: Start::Exact };
        let points = reverse_sample(&field, &spec, &schedule, Some(&ctx.target))?;
        let tv = tv_to_marginal(&ctx.target, schedule.t0, &points, c.bins, c.lo, c.hi, seed)?;
        Ok((injected, tv))
    })?;
    let mut table = Table::new("girsanov", GIRSANOV_HEADER);
    let mut arts = Artifacts::default();
    for (&(seed, b), (injected, tv)) in jobs.iter().zip(&cells) {
        let bound = (0.5 * injected).sqrt();
        table.push(vec![
            seed.to_string(),
            num(b),
            num(*injected),
            num(bound),
            num(tv.value),
            num(tv.std_err),
            num(schedule.t0),
            num(schedule.horizon),
        ]);
        arts.measurements.push((format!("tv_minus_bound_seed{seed}_bias{}", num(b)), tv.value - bound));
    }
    arts.tables.push(table);
    Ok(arts)
}

/// Runs `command` and returns its artifacts.
pub fn run(ctx: &Context, command: Command) -> Result<Artifacts> {
    match command {
        Command::Rates => rates(ctx),
        Command::Sample => sample(ctx),
        Command::BuildNet => build_net(ctx),
        Command::VerifyNet => verify_net(ctx),
        Command::Train => train(ctx),
        Command::SweepKl => sweep_kl(ctx),
        Command::SweepTruncation => sweep_truncation(ctx),
        Command::Girsanov => girsanov_check(ctx),
    }
}

