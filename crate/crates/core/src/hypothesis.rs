//! Goodness-of-fit tests: KSD with parametric or wild bootstrap, and MMD and
//! likelihood-ratio baselines.
//!
//! Every test returns a [`TestOutcome`]. Bootstrap replicate `b` draws from
//! the child stream `rng.child(b)`, so outcomes are a pure function of the
//! inputs and the stream path, whatever the thread count.

use std::time::Instant;

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{FeatureKey, KernelConfig, SparseVector};
use crate::models::{fit_markov_mle, markov_log_likelihood, sample_n, MarkovOrder, ModelError, ScoredModel};
use crate::neighborhoods::{LocationBudget, NeighborhoodError, NeighborhoodSpec};
use crate::seqspace::{PathLabel, RngStream, Sequence};
use crate::stein::{BalancingKind, FeatureBank, GramRoute, SteinError, SteinSetup};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    KsdParam,
    KsdWild,
    MmdParam {
        #[serde(default = "default_n_model")]
        n_model: usize,
    },
    MmdWildSame,
    LrOracle,
    LrMarkov {
        order: MarkovOrder,
    },
}

fn default_n_model() -> usize {
    100
}

impl Method {
    pub fn short_label(&self) -> String {
        match self {
            Method::KsdParam => "KSD-Param".into(),
            Method::KsdWild => "KSD-Wild".into(),
            Method::MmdParam { n_model } => format!("MMD-Param(n_model={n_model})"),
            Method::MmdWildSame => "MMD-Wild(n=same)".into(),
            Method::LrOracle => "LR-Oracle".into(),
            Method::LrMarkov { order } => format!("LR-Markov{}", u8::from(*order)),
        }
    }

    fn uses_kernel(&self) -> bool {
        !matches!(self, Method::LrOracle | Method::LrMarkov { .. })
    }

    fn uses_stein(&self) -> bool {
        matches!(self, Method::KsdParam | Method::KsdWild)
    }
}

fn default_alpha() -> f64 {
    0.05
}

fn default_b() -> usize {
    500
}

fn default_kernel() -> KernelConfig {
    KernelConfig::Csk { t: 2 }
}

fn default_neighborhood() -> NeighborhoodSpec {
    NeighborhoodSpec::zs(LocationBudget::Infinite)
}

fn default_balancing() -> BalancingKind {
    BalancingKind::Barker
}

/// One configured test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestConfig {
    /// Identifier used in result tables; derived from the settings if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub method: Method,
    #[serde(default = "default_kernel")]
    pub kernel: KernelConfig,
    #[serde(default = "default_neighborhood")]
    pub neighborhood: NeighborhoodSpec,
    #[serde(default = "default_balancing")]
    pub balancing: BalancingKind,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(rename = "B", default = "default_b")]
    pub b: usize,
    /// MMD parametric bootstrap: keep the first model sample fixed across
    /// replicates instead of redrawing it.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub freeze_model_sample: bool,
    #[serde(default, skip_serializing_if = "is_auto")]
    pub gram_route: GramRoute,
}

fn is_auto(r: &GramRoute) -> bool {
    *r == GramRoute::Auto
}

impl TestConfig {
    pub fn new(method: Method) -> Self {
        Self {
            id: None,
            method,
            kernel: default_kernel(),
            neighborhood: default_neighborhood(),
            balancing: default_balancing(),
            alpha: default_alpha(),
            b: default_b(),
            freeze_model_sample: false,
            gram_route: GramRoute::Auto,
        }
    }

    pub fn with_kernel(mut self, kernel: KernelConfig) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_neighborhood(mut self, spec: NeighborhoodSpec) -> Self {
        self.neighborhood = spec;
        self
    }

    pub fn with_balancing(mut self, balancing: BalancingKind) -> Self {
        self.balancing = balancing;
        self
    }

    pub fn with_b(mut self, b: usize) -> Self {
        self.b = b;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    /// Table identifier, e.g. `KSD-Wild(k=CSK(t=2), op=ZS(J=inf), g=barker)`.
    pub fn method_id(&self) -> String {
        if let Some(id) = &self.id {
            return id.clone();
        }
        let m = self.method.short_label();
        if self.method.uses_stein() {
            format!(
                "{m}(k={}, op={}, g={})",
                self.kernel.short_label(),
                self.neighborhood.short_label(),
                self.balancing.short_label()
            )
        } else if self.method.uses_kernel() {
            format!("{m}(k={})", self.kernel.short_label())
        } else {
            m
        }
    }

    pub fn kernel_label(&self) -> String {
        if self.method.uses_kernel() {
            self.kernel.short_label()
        } else {
            String::new()
        }
    }

    pub fn neighborhood_label(&self) -> String {
        if self.method.uses_stein() {
            self.neighborhood.short_label()
        } else {
            String::new()
        }
    }

    pub fn balancing_label(&self) -> String {
        if self.method.uses_stein() {
            self.balancing.short_label().to_owned()
        } else {
            String::new()
        }
    }

    pub fn validate(&self) -> Result<(), TestError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(TestError::InvalidConfig(format!("alpha = {} must lie in (0, 1)", self.alpha)));
        }
        if self.b == 0 {
            return Err(TestError::InvalidConfig("B must be at least 1".into()));
        }
        if let Method::MmdParam { n_model } = self.method {
            if n_model < 2 {
                return Err(TestError::InvalidConfig("n_model must be at least 2".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum TestError {
    #[error("model lacks a capability required by {method}: {what}")]
    Capability { method: String, what: String },
    #[error("need at least 2 data points, got {0}")]
    TooFewPoints(usize),
    #[error("invalid test configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Stein(#[from] SteinError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Neighborhood(#[from] NeighborhoodError),
}

/// Result of one test run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub method: String,
    pub statistic: f64,
    pub threshold: f64,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    #[serde(rename = "B")]
    pub b: usize,
    /// Set when a data point has zero model mass.
    pub immediate_reject: bool,
    pub seed: u64,
    pub seed_path: Vec<PathLabel>,
    pub wall_time_s: f64,
}

impl TestOutcome {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("outcome serializes")
    }
}

/// Threshold `Delta_(ceil((1 - alpha) B))` and p-value
/// `(1 + #{Delta_b >= T}) / (B + 1)`.
pub fn bootstrap_decision(statistic: f64, replicates: &[f64], alpha: f64) -> (f64, f64, bool) {
    let b = replicates.len();
    let mut sorted = replicates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (((1.0 - alpha) * b as f64).ceil() as usize).clamp(1, b);
    let threshold = sorted[rank - 1];
    let exceed = replicates.iter().filter(|&&d| d >= statistic).count();
    let p = (1 + exceed) as f64 / (b + 1) as f64;
    (threshold, p, statistic > threshold)
}

fn finish(config: &TestConfig, rng: &RngStream, statistic: f64, replicates: &[f64], start: Instant) -> TestOutcome {
    let (threshold, p_value, reject) = bootstrap_decision(statistic, replicates, config.alpha);
    TestOutcome {
        method: config.method_id(),
        statistic,
        threshold,
        p_value,
        reject,
        alpha: config.alpha,
        b: replicates.len(),
        immediate_reject: false,
        seed: rng.master(),
        seed_path: rng.path().to_vec(),
        wall_time_s: start.elapsed().as_secs_f64(),
    }
}

fn immediate(config: &TestConfig, rng: &RngStream, start: Instant) -> TestOutcome {
    TestOutcome {
        method: config.method_id(),
        statistic: f64::INFINITY,
        threshold: 0.0,
        p_value: 0.0,
        reject: true,
        alpha: config.alpha,
        b: 0,
        immediate_reject: true,
        seed: rng.master(),
        seed_path: rng.path().to_vec(),
        wall_time_s: start.elapsed().as_secs_f64(),
    }
}

fn has_zero_mass(model: &dyn ScoredModel, data: &[Sequence]) -> Result<bool, TestError> {
    for x in data {
        match model.log_mass(x) {
            Ok(_) => {}
            Err(ModelError::ZeroMass) => return Ok(true),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(false)
}

fn require_sampling(model: &dyn ScoredModel, config: &TestConfig) -> Result<(), TestError> {
    if model.can_sample() {
        Ok(())
    } else {
        Err(TestError::Capability { method: config.method_id(), what: "sampling".into() })
    }
}

fn replicates<F>(rng: &RngStream, b: usize, f: F) -> Result<Vec<f64>, TestError>
where
    F: Fn(&mut RngStream) -> Result<f64, TestError> + Sync,
{
    (0..b).into_par_iter().map(|i| f(&mut rng.child(i as u64))).collect()
}

/// Runs `config` against `model` on `data`. `alternative` is the fixed
/// alternative for `lr_oracle` and ignored otherwise.
pub fn run_test(
    model: &dyn ScoredModel,
    alternative: Option<&dyn ScoredModel>,
    data: &[Sequence],
    config: &TestConfig,
    rng: &RngStream,
) -> Result<TestOutcome, TestError> {
    config.validate()?;
    match &config.method {
        Method::KsdParam => parametric_bootstrap_test(model, data, config, rng),
        Method::KsdWild => wild_bootstrap_test(model, data, config, rng),
        Method::MmdParam { .. } | Method::MmdWildSame => mmd_test(model, data, config, rng),
        Method::LrOracle => {
            let alt = alternative.ok_or_else(|| TestError::InvalidConfig("lr_oracle needs an alternative model".into()))?;
            lr_test(model, LrAlternative::Oracle(alt), data, config, rng)
        }
        Method::LrMarkov { order } => lr_test(model, LrAlternative::Markov(*order), data, config, rng),
    }
}

fn ksd_prelude<'a>(
    model: &'a dyn ScoredModel,
    data: &[Sequence],
    config: &TestConfig,
) -> Result<crate::neighborhoods::BoundNeighborhood<'a>, TestError> {
    if data.len() < 2 {
        return Err(TestError::TooFewPoints(data.len()));
    }
    Ok(config.neighborhood.build(model)?)
}

/// KSD test with a parametric bootstrap: each replicate is the U-statistic
/// of a fresh model sample of size `n`.
pub fn parametric_bootstrap_test(
    model: &dyn ScoredModel,
    data: &[Sequence],
    config: &TestConfig,
    rng: &RngStream,
) -> Result<TestOutcome, TestError> {
    let start = Instant::now();
    require_sampling(model, config)?;
    let nb = ksd_prelude(model, data, config)?;
    if has_zero_mass(model, data)? {
        return Ok(immediate(config, rng, start));
    }
    let setup = SteinSetup::new(model, &nb, config.kernel, config.balancing);
    let stat = ustat_with_route(&setup, data, config.gram_route)?;
    let reps = replicates(rng, config.b, |r| {
        let sample = sample_n(model, data.len(), r)?;
        ustat_with_route(&setup, &sample, config.gram_route)
    })?;
    Ok(finish(config, rng, stat, &reps, start))
}

fn ustat_with_route(setup: &SteinSetup<'_>, data: &[Sequence], route: GramRoute) -> Result<f64, TestError> {
    Ok(match route {
        GramRoute::Auto => setup.ksd_ustat_fast(data)?,
        r => setup.stein_gram::<f64>(data, r)?.ksd_ustat()?,
    })
}

/// `Multinomial(n; 1/n, .., 1/n)` counts.
pub fn multinomial_weights(n: usize, rng: &mut dyn RngCore) -> Vec<f64> {
    let mut w = vec![0.0; n];
    for _ in 0..n {
        w[rng.random_range(0..n)] += 1.0;
    }
    w
}

/// KSD test with the multinomial wild bootstrap; never samples the model.
pub fn wild_bootstrap_test(
    model: &dyn ScoredModel,
    data: &[Sequence],
    config: &TestConfig,
    rng: &RngStream,
) -> Result<TestOutcome, TestError> {
    let start = Instant::now();
    let nb = ksd_prelude(model, data, config)?;
    if has_zero_mass(model, data)? {
        return Ok(immediate(config, rng, start));
    }
    let setup = SteinSetup::new(model, &nb, config.kernel, config.balancing);
    let h = setup.stein_gram::<f64>(data, config.gram_route)?;
    let stat = h.ksd_ustat()?;
    let n = data.len();
    let reps = replicates(rng, config.b, |r| Ok(crate::stein::wild_stat(&h, &multinomial_weights(n, r))?))?;
    Ok(finish(config, rng, stat, &reps, start))
}

/// Kernel evaluations on two samples, through the feature map when the
/// kernel has one.
enum KernelData {
    Features { bank: FeatureBank<f64> },
    Direct { points: Vec<Sequence> },
}

fn feature_bank(kernel: &KernelConfig, points: &[Sequence]) -> FeatureBank<f64> {
    let feats: Vec<SparseVector<f64>> = points.iter().map(|x| kernel.feature_map(x).expect("feature map")).collect();
    FeatureBank::new(&feats)
}

/// Unbiased two-sample `MMD^2` U-statistic.
pub fn mmd_ustat(xs: &[Sequence], ys: &[Sequence], kernel: &KernelConfig) -> Result<f64, TestError> {
    let (n, m) = (xs.len(), ys.len());
    if n < 2 || m < 2 {
        return Err(TestError::TooFewPoints(n.min(m)));
    }
    let (nf, mf) = (n as f64, m as f64);
    if kernel.has_feature_map() {
        let mut all = xs.to_vec();
        all.extend_from_slice(ys);
        let bank = feature_bank(kernel, &all);
        let mut cx = vec![1.0; n];
        cx.extend(std::iter::repeat_n(0.0, m));
        let cy: Vec<f64> = cx.iter().map(|c| 1.0 - c).collect();
        let xx = bank.weighted_offdiag_sum(&cx);
        let yy = bank.weighted_offdiag_sum(&cy);
        // Off-diagonal sum of (x + y)-weights splits as xx + yy + 2 xy.
        let both = bank.weighted_offdiag_sum(&vec![1.0; n + m]);
        let xy = 0.5 * (both - xx - yy);
        return Ok(xx / (nf * (nf - 1.0)) + yy / (mf * (mf - 1.0)) - 2.0 * xy / (nf * mf));
    }
    let k = |a: &Sequence, b: &Sequence| kernel.eval::<f64>(a, b);
    let within = |s: &[Sequence]| -> f64 {
        let mut t = 0.0;
        for i in 0..s.len() {
            for j in 0..i {
                t += 2.0 * k(&s[i], &s[j]);
            }
        }
        t
    };
    let xy: f64 = xs.par_iter().map(|x| ys.iter().map(|y| k(x, y)).sum::<f64>()).sum();
    Ok(within(xs) / (nf * (nf - 1.0)) + within(ys) / (mf * (mf - 1.0)) - 2.0 * xy / (nf * mf))
}

/// Paired statistic `(1/(n(n-1))) sum_{i != j} c_i c_j h((x_i, y_i), (x_j, y_j))`.
fn paired_stat(kd: &KernelData, kernel: &KernelConfig, c: &[f64]) -> f64 {
    let n = c.len() as f64;
    match kd {
        KernelData::Features { bank } => bank.weighted_offdiag_sum(c) / (n * (n - 1.0)),
        KernelData::Direct { points } => {
            let half = points.len() / 2;
            let (xs, ys) = points.split_at(half);
            let k = |a: &Sequence, b: &Sequence| kernel.eval::<f64>(a, b);
            let mut t = 0.0;
            for i in 0..half {
                for j in 0..half {
                    if i != j && c[i] != 0.0 && c[j] != 0.0 {
                        t += c[i] * c[j] * (k(&xs[i], &xs[j]) + k(&ys[i], &ys[j]) - k(&xs[i], &ys[j]) - k(&xs[j], &ys[i]));
                    }
                }
            }
            t / (n * (n - 1.0))
        }
    }
}

/// Paired differences `phi(x_i) - phi(y_i)` as a feature bank.
fn paired_bank(kernel: &KernelConfig, xs: &[Sequence], ys: &[Sequence]) -> FeatureBank<f64> {
    let feats: Vec<SparseVector<f64>> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let fx = kernel.feature_map::<f64>(x).expect("feature map");
            let fy = kernel.feature_map::<f64>(y).expect("feature map");
            SparseVector::from_entries(
                fx.entries().iter().cloned().chain(fy.entries().iter().map(|(k, v): &(FeatureKey, f64)| (k.clone(), -v))),
            )
        })
        .collect();
    FeatureBank::new(&feats)
}

/// MMD baselines: `mmd_param` (parametric bootstrap on fresh model
/// samples) and `mmd_wild_same` (paired wild bootstrap with `|data|` model
/// samples).
pub fn mmd_test(model: &dyn ScoredModel, data: &[Sequence], config: &TestConfig, rng: &RngStream) -> Result<TestOutcome, TestError> {
    let start = Instant::now();
    require_sampling(model, config)?;
    let n = data.len();
    if n < 2 {
        return Err(TestError::TooFewPoints(n));
    }
    let kernel = config.kernel;
    match config.method {
        Method::MmdParam { n_model } => {
            let ys = sample_n(model, n_model, &mut rng.child("model-sample"))?;
            let stat = mmd_ustat(data, &ys, &kernel)?;
            let reps = replicates(rng, config.b, |r| {
                let xs = sample_n(model, n, r)?;
                if config.freeze_model_sample {
                    mmd_ustat(&xs, &ys, &kernel)
                } else {
                    mmd_ustat(&xs, &sample_n(model, n_model, r)?, &kernel)
                }
            })?;
            Ok(finish(config, rng, stat, &reps, start))
        }
        Method::MmdWildSame => {
            let ys = sample_n(model, n, &mut rng.child("model-sample"))?;
            let kd = if kernel.has_feature_map() {
                KernelData::Features { bank: paired_bank(&kernel, data, &ys) }
            } else {
                let mut points = data.to_vec();
                points.extend(ys);
                KernelData::Direct { points }
            };
            let stat = paired_stat(&kd, &kernel, &vec![1.0; n]);
            let reps = replicates(rng, config.b, |r| {
                let c: Vec<f64> = multinomial_weights(n, r).into_iter().map(|w| w - 1.0).collect();
                Ok(paired_stat(&kd, &kernel, &c))
            })?;
            Ok(finish(config, rng, stat, &reps, start))
        }
        _ => Err(TestError::InvalidConfig("mmd_test called with a non-MMD method".into())),
    }
}

/// Alternative hypothesis for the likelihood-ratio baseline.
#[derive(Clone, Copy)]
pub enum LrAlternative<'a> {
    Oracle(&'a dyn ScoredModel),
    Markov(MarkovOrder),
}

fn data_log_likelihood(model: &dyn ScoredModel, data: &[Sequence]) -> Result<f64, TestError> {
    let mut ll = 0.0;
    for x in data {
        match model.log_mass_normalized(x) {
            Ok(v) => ll += v,
            Err(ModelError::ZeroMass) => return Ok(f64::NEG_INFINITY),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(ll)
}

/// `T = 2 (max(logL1, logL0) - logL0)`.
pub fn lr_statistic(data: &[Sequence], null: &dyn ScoredModel, alt: LrAlternative<'_>) -> Result<f64, TestError> {
    if !null.is_normalized() {
        return Err(TestError::Capability { method: "lr".into(), what: "normalised null mass".into() });
    }
    let l0 = data_log_likelihood(null, data)?;
    let l1 = match alt {
        LrAlternative::Oracle(q) => {
            if !q.is_normalized() {
                return Err(TestError::Capability { method: "lr_oracle".into(), what: "normalised alternative".into() });
            }
            data_log_likelihood(q, data)?
        }
        LrAlternative::Markov(order) => markov_log_likelihood(data, order, null.alphabet()),
    };
    if l0 == f64::NEG_INFINITY {
        return Ok(f64::INFINITY);
    }
    Ok(2.0 * (l1.max(l0) - l0))
}

/// Likelihood-ratio test with a parametric bootstrap under the null; the
/// composite alternative is refit on every bootstrap sample.
pub fn lr_test(
    null: &dyn ScoredModel,
    alt: LrAlternative<'_>,
    data: &[Sequence],
    config: &TestConfig,
    rng: &RngStream,
) -> Result<TestOutcome, TestError> {
    let start = Instant::now();
    require_sampling(null, config)?;
    if data.is_empty() {
        return Err(TestError::TooFewPoints(0));
    }
    let stat = lr_statistic(data, null, alt)?;
    if stat == f64::INFINITY {
        return Ok(immediate(config, rng, start));
    }
    let reps = replicates(rng, config.b, |r| {
        let sample = sample_n(null, data.len(), r)?;
        lr_statistic(&sample, null, alt)
    })?;
    Ok(finish(config, rng, stat, &reps, start))
}

/// Maximum-likelihood chain used by [`LrAlternative::Markov`], exposed for
/// inspection.
pub fn fitted_alternative(data: &[Sequence], order: MarkovOrder, null: &dyn ScoredModel) -> Result<crate::models::MarkovChainModel, TestError> {
    Ok(fit_markov_mle(data, order, null.alphabet())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{random_markov_chain, IidModel, LengthLaw};
    use crate::seq;
    use crate::seqspace::{derive_stream, Alphabet};

    #[test]
    fn decision_conventions() {
        let (thr, p, rej) = bootstrap_decision(2.0, &[1.0], 0.05);
        assert_eq!((thr, rej), (1.0, true));
        assert_eq!(p, 0.5);
        let reps: Vec<f64> = (1..=20).map(|v| v as f64).collect();
        let (thr, p, rej) = bootstrap_decision(19.0, &reps, 0.05);
        assert_eq!(thr, 19.0);
        assert!(!rej, "ties do not reject");
        assert!((p - 3.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn mmd_examples() {
        let xs = vec![seq![0, 1], seq![1, 1, 0], seq![0, 0, 0, 1], seq![1]];
        let ys = vec![seq![1, 0], seq![1, 1, 1], seq![0, 1, 1, 1]];
        for k in [KernelConfig::csk(2), KernelConfig::csk(3), KernelConfig::hamming(), KernelConfig::Dirac] {
            let kv = |a: &Sequence, b: &Sequence| k.eval::<f64>(a, b);
            let (n, m) = (xs.len() as f64, ys.len() as f64);
            let (mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0);
            for (i, a) in xs.iter().enumerate() {
                for (j, b) in xs.iter().enumerate() {
                    if i != j {
                        xx += kv(a, b);
                    }
                }
                for b in &ys {
                    xy += kv(a, b);
                }
            }
            for (i, a) in ys.iter().enumerate() {
                for (j, b) in ys.iter().enumerate() {
                    if i != j {
                        yy += kv(a, b);
                    }
                }
            }
            let direct = xx / (n * (n - 1.0)) + yy / (m * (m - 1.0)) - 2.0 * xy / (n * m);
            assert!((mmd_ustat(&xs, &ys, &k).unwrap() - direct).abs() < 1e-12, "{k:?}");
        }
        // Disjoint supports under Dirac: 0 + 0 - 0.
        let a = vec![seq![0], seq![0, 0]];
        let b = vec![seq![1], seq![1, 1]];
        assert_eq!(mmd_ustat(&a, &b, &KernelConfig::Dirac).unwrap(), 0.0);
        let c = vec![seq![0], seq![0]];
        assert!((mmd_ustat(&c, &b, &KernelConfig::Dirac).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lr_statistic_properties() {
        let law = LengthLaw::Geometric { mean: 3.0 };
        let p = IidModel::bernoulli(0.5, law, 0.0, 40).unwrap();
        let q = IidModel::bernoulli(0.7, law, 0.0, 40).unwrap();
        let mut rng = derive_stream(1, &["lr".into()]);
        let data = sample_n(&q, 20, &mut rng).unwrap();
        assert_eq!(lr_statistic(&data, &p, LrAlternative::Oracle(&p)).unwrap(), 0.0);
        assert!(lr_statistic(&data, &p, LrAlternative::Oracle(&q)).unwrap() >= 0.0);
        let a = Alphabet::new(3).unwrap();
        for s in 0..100u64 {
            let mut r = derive_stream(s, &["lrfix".into()]);
            let null = random_markov_chain(a, MarkovOrder::First, 1.0, 4.0, 1e-3, None, &mut r).unwrap();
            let truth = random_markov_chain(a, MarkovOrder::First, 1.0, 4.0, 1e-3, None, &mut r).unwrap();
            let d = sample_n(&truth, 15, &mut r).unwrap();
            assert!(lr_statistic(&d, &null, LrAlternative::Markov(MarkovOrder::First)).unwrap() > 0.0);
        }
    }

    #[test]
    fn config_json_defaults() {
        let c: TestConfig = serde_json::from_str(r#"{"method":"ksd_wild"}"#).unwrap();
        assert_eq!(c.b, 500);
        assert_eq!(c.alpha, 0.05);
        assert_eq!(c.method_id(), "KSD-Wild(k=CSK(t=2), op=ZS(J=inf), g=barker)");
        let m: TestConfig = serde_json::from_str(r#"{"method":{"mmd_param":{}},"B":50}"#).unwrap();
        assert_eq!(m.method, Method::MmdParam { n_model: 100 });
        let l: TestConfig = serde_json::from_str(r#"{"method":{"lr_markov":{"order":2}}}"#).unwrap();
        assert_eq!(l.method_id(), "LR-Markov2");
        assert!(serde_json::from_str::<TestConfig>(r#"{"method":"ksd_wild","bogus":1}"#).is_err());
    }
}
