//! Experiment configuration: one TOML file per experiment.
//!
//! Every field has a default, so a missing section means "use the
//! defaults". [`ExperimentConfig::validate`] reports all problems at once,
//! before any computation starts, and the resolved configuration (defaults
//! filled in) is what gets echoed next to the outputs.

use std::path::Path;

use scoregen_core::kde::Quadrature;
use scoregen_core::mlp::TrainConfig;
use scoregen_core::relu::{ApproxParams, DEFAULT_PARAM_CAP};
use scoregen_core::sampler::Start;
use scoregen_core::schedule::{early_stop_time, noise_scale};
use scoregen_core::targets::{GaussianMixture, Target, UniformCube};
use scoregen_core::DiffusionSchedule;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub target: TargetSpec,
    /// Must match the target when given; filled in on resolution.
    #[serde(default)]
    pub dimension: Option<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Output directory; `--out` overrides it.
    #[serde(default = "default_output")]
    pub output: String,
    #[serde(default = "default_cap")]
    pub param_cap: usize,
    /// Worker threads for independent cells; output order never depends on it.
    #[serde(default = "one")]
    pub threads: usize,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub rates: RatesSpec,
    #[serde(default)]
    pub sample: SampleSpec,
    #[serde(default)]
    pub build_net: NetSpec,
    #[serde(default)]
    pub verify_net: VerifySpec,
    #[serde(default)]
    pub train: TrainSpec,
    #[serde(default)]
    pub sweep_kl: KlSpec,
    #[serde(default)]
    pub sweep_truncation: TruncationSpec,
    #[serde(default)]
    pub girsanov: GirsanovSpec,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_output() -> String {
    "out".into()
}
fn default_cap() -> usize {
    DEFAULT_PARAM_CAP
}
fn one() -> usize {
    1
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("an empty document takes every default")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    /// `N(0, variance I)`.
    Gaussian { dim: usize, variance: f64 },
    /// Equal-weight pair at `+-center` with common variance, in one dimension.
    SymmetricPair { center: f64, variance: f64 },
    /// Diagonal Gaussian mixture.
    Mixture { weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>> },
    /// Uniform on `[0, 1]^dim`.
    Cube { dim: usize },
}

impl Default for TargetSpec {
    fn default() -> Self {
        TargetSpec::SymmetricPair { center: 2.0, variance: 0.25 }
    }
}

impl TargetSpec {
    pub fn build(&self) -> Result<Target> {
        let t = match self {
            TargetSpec::Gaussian { dim, variance } => Target::Mixture(GaussianMixture::isotropic(*dim, *variance)?),
            TargetSpec::SymmetricPair { center, variance } => {
                Target::Mixture(GaussianMixture::symmetric_pair(*center, *variance)?)
            }
            TargetSpec::Mixture { weights, means, variances } => {
                Target::Mixture(GaussianMixture::new(weights.clone(), means.clone(), variances.clone())?)
            }
            TargetSpec::Cube { dim } => Target::Cube(UniformCube::new(*dim)?),
        };
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    /// Early-stopping time; `n^{-2/(d+2s)}` when absent.
    #[serde(default)]
    pub t0: Option<f64>,
    /// Horizon; `horizon_factor * log n` when absent.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default = "unit")]
    pub horizon_factor: f64,
    /// Smoothness used by the default early-stopping time.
    #[serde(default = "two")]
    pub smoothness: f64,
    /// Sub-Gaussian parameter, recorded only.
    #[serde(default = "unit")]
    pub alpha: f64,
}

fn unit() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self { t0: None, horizon: None, horizon_factor: 1.0, smoothness: 2.0, alpha: 1.0 }
    }
}

impl ScheduleSpec {
    pub fn horizon_for(&self, n: usize) -> f64 {
        self.horizon.unwrap_or(self.horizon_factor * (n.max(2) as f64).ln())
    }

    pub fn resolve(&self, n: usize, d: usize) -> Result<DiffusionSchedule> {
        let t0 = match self.t0 {
            Some(t) => t,
            None => early_stop_time(n.max(2), self.smoothness, d)?,
        };
        Ok(DiffusionSchedule::new(t0, self.horizon_for(n), d, self.alpha)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Regularized,
    Truncated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSpec {
    /// Sample sizes.
    #[serde(default = "default_rate_ns")]
    pub n: Vec<usize>,
    /// Diffusion times for the pointwise sweep.
    #[serde(default)]
    pub t: Vec<f64>,
    /// Noise levels for the pointwise sweep, converted to times.
    #[serde(default = "default_sigmas")]
    pub sigma: Vec<f64>,
    /// Early-stopping times for the time-integrated sweep.
    #[serde(default)]
    pub t0: Vec<f64>,
    #[serde(default = "default_estimator")]
    pub estimator: Estimator,
    #[serde(default = "default_quadrature")]
    pub quadrature: Quadrature,
    /// Log-spaced time nodes between consecutive early-stopping times, ends included.
    #[serde(default = "six")]
    pub segment_nodes: usize,
    /// Log-spaced time nodes from the largest early-stopping time to the horizon.
    #[serde(default = "sixteen")]
    pub tail_nodes: usize,
}

fn default_rate_ns() -> Vec<usize> {
    (7..=13).map(|k| 1usize << k).collect()
}
fn default_sigmas() -> Vec<f64> {
    vec![0.5]
}
fn default_estimator() -> Estimator {
    Estimator::Regularized
}
fn default_quadrature() -> Quadrature {
    Quadrature::Grid { points: 801, half_widths: 8.0 }
}
fn six() -> usize {
    6
}
fn sixteen() -> usize {
    16
}

impl Default for RatesSpec {
    fn default() -> Self {
        Self {
            n: default_rate_ns(),
            t: Vec::new(),
            sigma: default_sigmas(),
            t0: Vec::new(),
            estimator: Estimator::Regularized,
            quadrature: default_quadrature(),
            segment_nodes: 6,
            tail_nodes: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    True,
    KdeRegularized,
    KdeTruncated,
    /// A network file with input `(y, t)`.
    Network,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    #[serde(default = "ten_thousand")]
    pub n_paths: usize,
    #[serde(default = "four_hundred")]
    pub steps: usize,
    #[serde(default = "default_source")]
    pub score: ScoreSource,
    /// Training samples behind a kernel score; also sizes the default schedule.
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub network: Option<String>,
    #[serde(default = "default_start")]
    pub start: Start,
    /// Histogram bins per axis for the TV summary.
    #[serde(default = "sixty_four")]
    pub bins: usize,
    #[serde(default = "default_hist_lo")]
    pub hist_lo: f64,
    #[serde(default = "default_hist_hi")]
    pub hist_hi: f64,
}

fn ten_thousand() -> usize {
    10_000
}
fn four_hundred() -> usize {
    400
}
fn default_source() -> ScoreSource {
    ScoreSource::True
}
fn default_n_samples() -> usize {
    1024
}
fn default_start() -> Start {
    Start::Gaussian
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            steps: 400,
            score: ScoreSource::True,
            n_samples: 1024,
            network: None,
            start: Start::Gaussian,
            bins: 64,
            hist_lo: -5.0,
            hist_hi: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builder {
    Square,
    Product,
    Monomial,
    Polynomial,
    Step,
    PointFit,
    Exp,
    Root,
    Reciprocal,
    Kde,
    Score,
}

impl Builder {
    pub fn name(self) -> &'static str {
        match self {
            Builder::Square => "square",
            Builder::Product => "product",
            Builder::Monomial => "monomial",
            Builder::Polynomial => "polynomial",
            Builder::Step => "step",
            Builder::PointFit => "point_fit",
            Builder::Exp => "exp",
            Builder::Root => "root",
            Builder::Reciprocal => "reciprocal",
            Builder::Kde => "kde",
            Builder::Score => "score",
        }
    }

    pub fn uses_samples(self) -> bool {
        matches!(self, Builder::Kde | Builder::Score)
    }
}

/// A constructive network: which builder and with what parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSpec {
    #[serde(default = "default_builder")]
    pub builder: Builder,
    /// Width parameter `N`.
    #[serde(default = "four")]
    pub width: usize,
    /// Depth parameter `L`.
    #[serde(default = "two_usize")]
    pub depth: usize,
    /// Smoothness / Taylor order `s`.
    #[serde(default = "two_usize")]
    pub s: usize,
    /// Accuracy scale; `N^-2 L^-2` when absent.
    #[serde(default)]
    pub eps: Option<f64>,
    /// Interval for square, product and step.
    #[serde(default)]
    pub lo: f64,
    #[serde(default = "unit")]
    pub hi: f64,
    /// Radius for monomial, polynomial, exp and root.
    #[serde(default = "unit")]
    pub radius: f64,
    /// Number of factors (monomial) or root order.
    #[serde(default = "two_usize")]
    pub k: usize,
    /// Exponents of a polynomial.
    #[serde(default = "default_nu")]
    pub nu: Vec<usize>,
    /// Number of step intervals.
    #[serde(default = "four")]
    pub intervals: usize,
    /// Width of the step ramps; the largest admissible value when absent.
    #[serde(default)]
    pub delta: Option<f64>,
    /// Values to fit at `0, 1, ..., K-1`.
    #[serde(default = "default_values")]
    pub values: Vec<f64>,
    /// CSV of samples for kde/score; drawn from the target when absent.
    #[serde(default)]
    pub samples_file: Option<String>,
    /// Number of samples drawn from the target when there is no file.
    #[serde(default = "sixteen")]
    pub n_samples: usize,
}

fn default_builder() -> Builder {
    Builder::Square
}
fn four() -> usize {
    4
}
fn two_usize() -> usize {
    2
}
fn default_nu() -> Vec<usize> {
    vec![1, 1]
}
fn default_values() -> Vec<f64> {
    vec![0.0, 0.5, 1.0, 0.25]
}

impl Default for NetSpec {
    fn default() -> Self {
        toml::from_str("").expect("an empty document takes every default")
    }
}

impl NetSpec {
    pub fn params(&self) -> Result<ApproxParams> {
        let eps = self.eps.unwrap_or(1.0 / ((self.width * self.width * self.depth * self.depth) as f64));
        Ok(ApproxParams::new(self.width, self.depth, self.s, eps)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    /// Network file to check.
    #[serde(default)]
    pub network: Option<String>,
    /// The function it should compute.
    #[serde(default)]
    pub reference: NetSpec,
    /// Claimed sup-norm error.
    #[serde(default)]
    pub tolerance: Option<f64>,
    /// Grid points per input axis.
    #[serde(default = "two_hundred_one")]
    pub points: usize,
}

fn two_hundred_one() -> usize {
    201
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self { network: None, reference: NetSpec::default(), tolerance: None, points: 201 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    #[serde(default = "default_train_n")]
    pub n_samples: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_step_size")]
    pub step_size: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_eval_batch")]
    pub eval_batch: usize,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default = "default_c_clip")]
    pub c_clip: f64,
    /// Log-spaced times on `[t0, T]` for the final score-error comparison.
    #[serde(default = "sixteen")]
    pub time_nodes: usize,
    #[serde(default = "default_quadrature")]
    pub quadrature: Quadrature,
}

fn default_train_n() -> usize {
    512
}
fn default_hidden() -> Vec<usize> {
    vec![32, 32]
}
fn default_step_size() -> f64 {
    1e-3
}
fn default_momentum() -> f64 {
    0.9
}
fn default_iterations() -> usize {
    3000
}
fn default_batch() -> usize {
    64
}
fn default_eval_batch() -> usize {
    512
}
fn default_eval_every() -> usize {
    100
}
fn default_c_clip() -> f64 {
    3.0
}

impl Default for TrainSpec {
    fn default() -> Self {
        toml::from_str("").expect("an empty document takes every default")
    }
}

impl TrainSpec {
    pub fn trainer(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            hidden: self.hidden.clone(),
            step_size: self.step_size,
            momentum: self.momentum,
            iterations: self.iterations,
            batch_size: self.batch_size,
            eval_batch: self.eval_batch,
            eval_every: self.eval_every,
            seed,
            c_clip: self.c_clip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KlSpec {
    #[serde(default = "default_kl_ns")]
    pub n: Vec<usize>,
    #[serde(default = "half")]
    pub sigma: f64,
    /// Integration grid: `points` on `[lo, hi]` per axis.
    #[serde(default = "default_lo")]
    pub lo: f64,
    #[serde(default = "default_hi")]
    pub hi: f64,
    #[serde(default = "default_kl_points")]
    pub points: usize,
}

fn default_kl_ns() -> Vec<usize> {
    (7..=12).map(|k| 1usize << k).collect()
}
fn half() -> f64 {
    0.5
}
fn default_lo() -> f64 {
    -8.0
}
fn default_hi() -> f64 {
    8.0
}
fn default_kl_points() -> usize {
    2001
}

impl Default for KlSpec {
    fn default() -> Self {
        Self { n: default_kl_ns(), sigma: 0.5, lo: -8.0, hi: 8.0, points: 2001 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationDensity {
    /// The configured target's base density (one-dimensional).
    Target,
    /// Tent on `[0, 1]`.
    Triangle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSpec {
    #[serde(default = "default_trunc_sigmas")]
    pub sigma: Vec<f64>,
    #[serde(default = "default_density")]
    pub density: TruncationDensity,
    #[serde(default = "default_lo")]
    pub lo: f64,
    #[serde(default = "default_hi")]
    pub hi: f64,
    #[serde(default = "default_trunc_points")]
    pub points: usize,
}

fn default_trunc_sigmas() -> Vec<f64> {
    vec![0.05, 0.1, 0.2, 0.4]
}
fn default_density() -> TruncationDensity {
    TruncationDensity::Target
}
fn default_trunc_points() -> usize {
    4001
}

impl Default for TruncationSpec {
    fn default() -> Self {
        Self { sigma: default_trunc_sigmas(), density: TruncationDensity::Target, lo: -8.0, hi: 8.0, points: 4001 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GirsanovSpec {
    /// Constant bias added to every score coordinate.
    #[serde(default = "default_biases")]
    pub bias: Vec<f64>,
    /// `T - t0`.
    #[serde(default = "five")]
    pub span: f64,
    #[serde(default = "default_girsanov_t0")]
    pub t0: f64,
    #[serde(default = "default_girsanov_paths")]
    pub n_paths: usize,
    #[serde(default = "four_hundred")]
    pub steps: usize,
    #[serde(default = "sixty_four")]
    pub bins: usize,
    /// Histogram range; the target's bulk is assumed inside.
    #[serde(default = "default_hist_lo")]
    pub lo: f64,
    #[serde(default = "default_hist_hi")]
    pub hi: f64,
}

fn default_biases() -> Vec<f64> {
    vec![0.05, 0.1, 0.2]
}
fn five() -> f64 {
    5.0
}
fn default_girsanov_t0() -> f64 {
    1e-3
}
fn default_girsanov_paths() -> usize {
    100_000
}
fn sixty_four() -> usize {
    64
}
fn default_hist_lo() -> f64 {
    -5.0
}
fn default_hist_hi() -> f64 {
    5.0
}

impl Default for GirsanovSpec {
    fn default() -> Self {
        toml::from_str("").expect("an empty document takes every default")
    }
}

/// Collects validation messages.
#[derive(Default)]
struct Problems(Vec<String>);

impl Problems {
    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.0.push(msg());
        }
    }
}

fn distinct<T: PartialEq>(xs: &[T]) -> bool {
    xs.iter().enumerate().all(|(i, a)| xs[..i].iter().all(|b| b != a))
}

fn all_positive(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite() && *x > 0.0)
}

/// Which command is about to run; validation only looks at the relevant section.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Rates,
    Sample,
    BuildNet,
    VerifyNet,
    Train,
    SweepKl,
    SweepTruncation,
    Girsanov,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// The configuration with every derivable default filled in.
    pub fn resolved(&self) -> Result<Self> {
        let mut out = self.clone();
        out.dimension = Some(self.target.build()?.dim());
        if out.build_net.eps.is_none() {
            out.build_net.eps = Some(self.build_net.params()?.eps);
        }
        Ok(out)
    }

    /// Every problem relevant to `command`, or the built target.
    pub fn validate(&self, command: Command) -> Result<Target> {
        let mut p = Problems::default();
        let target = match self.target.build() {
            Ok(t) => Some(t),
            Err(e) => {
                p.0.push(format!("target: {e}"));
                None
            }
        };
        let d = target.as_ref().map(|t| t.dim());
        if let (Some(want), Some(d)) = (self.dimension, d) {
            p.check(want == d, || format!("dimension = {want} but the target has dimension {d}"));
        }
        p.check(!self.seeds.is_empty(), || "seeds must be nonempty".into());
        p.check(distinct(&self.seeds), || "seeds must be distinct".into());
        p.check(self.threads >= 1, || "threads must be at least 1".into());
        p.check(self.param_cap >= 1, || "param_cap must be positive".into());
        let s = &self.schedule;
        p.check(s.t0.is_none_or(|t| t.is_finite() && t > 0.0), || "schedule.t0 must be positive".into());
        p.check(s.horizon.is_none_or(|t| t.is_finite() && t > 0.0), || "schedule.horizon must be positive".into());
        p.check(s.horizon_factor.is_finite() && s.horizon_factor > 0.0, || "schedule.horizon_factor must be positive".into());
        p.check(s.smoothness.is_finite() && s.smoothness > 0.0, || "schedule.smoothness must be positive".into());
        p.check(s.alpha.is_finite() && s.alpha >= 0.0, || "schedule.alpha must be nonnegative".into());
        if let (Some(t0), Some(h)) = (s.t0, s.horizon) {
            p.check(t0 < h, || format!("schedule.t0 = {t0} must be below schedule.horizon = {h}"));
        }
        match command {
            Command::Rates => self.validate_rates(d, &mut p),
            Command::Sample => {
                let c = &self.sample;
                p.check(c.n_paths > 0, || "sample.n_paths must be positive".into());
                p.check(c.steps > 0, || "sample.steps must be positive".into());
                p.check(c.n_samples > 0, || "sample.n_samples must be positive".into());
                p.check(c.bins > 0, || "sample.bins must be positive".into());
                p.check(c.hist_lo < c.hist_hi, || "sample.hist_lo must be below sample.hist_hi".into());
                p.check(c.score != ScoreSource::Network || c.network.is_some(), || {
                    "sample.score = \"network\" needs sample.network".into()
                });
            }
            Command::BuildNet => validate_net("build_net", &self.build_net, d, &mut p),
            Command::VerifyNet => {
                let c = &self.verify_net;
                p.check(c.network.is_some(), || "verify_net.network is required".into());
                p.check(c.tolerance.is_some_and(|t| t >= 0.0), || "verify_net.tolerance must be given and nonnegative".into());
                p.check(c.points >= 2, || "verify_net.points must be at least 2".into());
                validate_net("verify_net.reference", &c.reference, d, &mut p);
            }
            Command::Train => {
                let c = &self.train;
                p.check(c.n_samples >= 2, || "train.n_samples must be at least 2".into());
                p.check(!c.hidden.is_empty() && c.hidden.iter().all(|&h| h > 0), || {
                    "train.hidden must list positive layer widths".into()
                });
                p.check(c.step_size.is_finite() && c.step_size > 0.0, || "train.step_size must be positive".into());
                p.check((0.0..1.0).contains(&c.momentum), || "train.momentum must lie in [0, 1)".into());
                p.check(c.batch_size > 0 && c.eval_batch > 0 && c.eval_every > 0, || {
                    "train batch sizes and eval_every must be positive".into()
                });
                p.check(c.c_clip.is_finite() && c.c_clip > 0.0, || "train.c_clip must be positive".into());
                p.check(c.time_nodes >= 2, || "train.time_nodes must be at least 2".into());
                validate_quadrature("train.quadrature", &c.quadrature, &mut p);
            }
            Command::SweepKl => {
                let c = &self.sweep_kl;
                p.check(!c.n.is_empty() && c.n.iter().all(|&n| n > 0), || "sweep_kl.n must list positive sizes".into());
                p.check(distinct(&c.n), || "sweep_kl.n must be distinct".into());
                p.check(c.sigma.is_finite() && c.sigma > 0.0, || "sweep_kl.sigma must be positive".into());
                p.check(c.lo < c.hi, || "sweep_kl.lo must be below sweep_kl.hi".into());
                p.check(c.points >= 2, || "sweep_kl.points must be at least 2".into());
                p.check(d.is_none_or(|d| d <= 2), || "sweep_kl supports dimension 1 or 2".into());
            }
            Command::SweepTruncation => {
                let c = &self.sweep_truncation;
                p.check(!c.sigma.is_empty() && all_positive(&c.sigma), || "sweep_truncation.sigma must list positive values".into());
                p.check(distinct(&c.sigma), || "sweep_truncation.sigma must be distinct".into());
                p.check(c.lo < c.hi, || "sweep_truncation.lo must be below sweep_truncation.hi".into());
                p.check(c.points >= 2, || "sweep_truncation.points must be at least 2".into());
                p.check(c.density != TruncationDensity::Target || d == Some(1), || {
                    "sweep_truncation with density = \"target\" needs a one-dimensional target".into()
                });
            }
            Command::Girsanov => {
                let c = &self.girsanov;
                p.check(!c.bias.is_empty() && c.bias.iter().all(|b| b.is_finite()), || "girsanov.bias must list finite values".into());
                p.check(c.span.is_finite() && c.span > 0.0, || "girsanov.span must be positive".into());
                p.check(c.t0.is_finite() && c.t0 > 0.0, || "girsanov.t0 must be positive".into());
                p.check(c.n_paths > 0 && c.steps > 0 && c.bins > 0, || "girsanov.n_paths, steps and bins must be positive".into());
                p.check(c.lo < c.hi, || "girsanov.lo must be below girsanov.hi".into());
            }
        }
        if p.0.is_empty() {
            Ok(target.expect("no problems means the target built"))
        } else {
            Err(HarnessError::Config(p.0))
        }
    }

    fn validate_rates(&self, d: Option<usize>, p: &mut Problems) {
        let c = &self.rates;
        if let Some(d) = d {
            // The kernel estimate is only trusted where the noise level resolves the sample spacing.
            let levels = c.sigma.iter().copied().chain(c.t.iter().chain(&c.t0).map(|&t| noise_scale(t)));
            let smallest = levels.fold(f64::INFINITY, f64::min);
            for &n in &c.n {
                let floor = resolvable_noise(n, d, self.schedule.alpha);
                p.check(!(smallest < floor), || {
                    format!("noise level {smallest} is below 2 alpha n^(-1/d) sqrt(log n) = {floor} at n = {n}")
                });
            }
        }
        p.check(!c.n.is_empty() && c.n.iter().all(|&n| n > 0), || "rates.n must list positive sample sizes".into());
        p.check(distinct(&c.n), || "rates.n must be distinct".into());
        p.check(all_positive(&c.t), || "rates.t must be positive".into());
        p.check(c.sigma.iter().all(|s| *s > 0.0 && *s < 1.0), || "rates.sigma must lie in (0, 1)".into());
        p.check(all_positive(&c.t0), || "rates.t0 must be positive".into());
        p.check(distinct(&c.t0), || "rates.t0 must be distinct".into());
        p.check(!(c.t.is_empty() && c.sigma.is_empty() && c.t0.is_empty()), || {
            "rates needs at least one of t, sigma or t0".into()
        });
        if !c.t0.is_empty() {
            p.check(c.segment_nodes >= 2 && c.tail_nodes >= 2, || "rates.segment_nodes and rates.tail_nodes must be at least 2".into());
            let largest = c.t0.iter().cloned().fold(0.0, f64::max);
            for &n in &c.n {
                let h = self.schedule.horizon_for(n);
                p.check(largest < h, || format!("rates.t0 = {largest} must be below the horizon {h} at n = {n}"));
            }
        }
        validate_quadrature("rates.quadrature", &c.quadrature, p);
    }
}

/// Smallest noise level the rate sweep evaluates at sample size `n`.
pub fn resolvable_noise(n: usize, d: usize, alpha: f64) -> f64 {
    let n = n.max(2) as f64;
    2.0 * alpha * n.powf(-1.0 / d as f64) * n.ln().sqrt()
}

fn validate_quadrature(name: &str, q: &Quadrature, p: &mut Problems) {
    match q {
        Quadrature::Grid { points, half_widths } => {
            p.check(*points >= 2, || format!("{name}.points must be at least 2"));
            p.check(half_widths.is_finite() && *half_widths > 0.0, || format!("{name}.half_widths must be positive"));
        }
        Quadrature::MonteCarlo { draws, .. } => p.check(*draws > 0, || format!("{name}.draws must be positive")),
    }
}

fn validate_net(name: &str, c: &NetSpec, d: Option<usize>, p: &mut Problems) {
    p.check(c.width > 0 && c.depth > 0 && c.s > 0, || format!("{name}: width, depth and s must be positive"));
    if c.width > 0 && c.depth > 0 && c.s > 0 {
        if let Err(e) = c.params() {
            p.0.push(format!("{name}: {e}"));
        }
    }
    p.check(c.lo.is_finite() && c.hi.is_finite() && c.lo < c.hi, || format!("{name}: lo must be below hi"));
    p.check(c.radius.is_finite() && c.radius > 0.0, || format!("{name}: radius must be positive"));
    p.check(c.delta.is_none_or(|x| x.is_finite() && x > 0.0), || format!("{name}: delta must be positive"));
    match c.builder {
        Builder::Monomial | Builder::Root => p.check(c.k >= 1, || format!("{name}: k must be positive")),
        Builder::Polynomial => p.check(!c.nu.is_empty(), || format!("{name}: nu must be nonempty")),
        Builder::Step => p.check(c.intervals >= 1, || format!("{name}: intervals must be positive")),
        Builder::PointFit => p.check(!c.values.is_empty(), || format!("{name}: values must be nonempty")),
        Builder::Kde | Builder::Score => {
            p.check(c.samples_file.is_some() || c.n_samples > 0, || format!("{name}: n_samples must be positive"));
            p.check(d.is_none_or(|d| d <= 2), || format!("{name}: kernel networks support dimension 1 or 2"));
        }
        _ => {}
    }
}

