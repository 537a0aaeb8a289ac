//! Synthetic benchmark problems: model/truth pairs with sample sizes and
//! default tests, plus Monte Carlo power estimation.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hypothesis::{run_test, Method, TestConfig, TestError};
use crate::kernels::KernelConfig;
use crate::models::{
    geometric_lmax, mrf_model, random_markov_chain, sample_n, topk_ar_model, AnyModel, IidModel, LengthLaw,
    MarkovChainModel, MarkovOrder, MixtureModel, ModelError, ScoredModel, TopKARModel,
};
use crate::neighborhoods::{LocationBudget, NeighborhoodKind, NeighborhoodSpec};
use crate::seqspace::{derive_stream, Alphabet, PathLabel, RngStream};
use crate::stein::BalancingKind;

/// Restart probability shared by every chain.
pub const RESTART_EPS: f64 = 1e-3;
/// Truncated mass allowed when choosing `lmax`.
pub const LENGTH_TAIL: f64 = 1e-9;
/// Seeds for "a different random chain" pairs.
pub const SEED_PAIR: (u64, u64) = (7, 13);
/// z-quantile for the 95 % Wilson interval.
pub const WILSON_Z: f64 = 1.959963984540054;

/// The fixed-parameter benchmark suite.
pub const SUITE: [&str; 12] = [
    "binary_iid",
    "misspecified_order",
    "random_walk_1",
    "random_walk_2",
    "random_walk_3",
    "random_walk_4",
    "random_mc2_1",
    "random_mc2_2",
    "random_mc2_3",
    "varied_init_1",
    "varied_init_2",
    "varied_length",
];

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ScenarioError {
    #[error("unknown scenario {0:?}")]
    Unknown(String),
    #[error("parameter {name} = {value} outside [{min}, {max}]")]
    OutOfRange { name: &'static str, value: f64, min: f64, max: f64 },
    #[error("scenario {0:?} takes no parameter")]
    NoParameter(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("need at least one trial")]
    NoTrials,
    #[error(transparent)]
    Test(#[from] TestError),
}

/// A model/truth pair with its sample size and default tests.
#[derive(Clone, Debug, Serialize)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub param: Option<f64>,
    pub model: AnyModel,
    pub truth: AnyModel,
    pub n: usize,
    pub lmax: Option<usize>,
    pub tests: Vec<TestConfig>,
}

impl ScenarioSpec {
    /// Stream label distinguishing parameter values of one family.
    pub fn key(&self) -> String {
        match self.param {
            None => self.name.clone(),
            Some(p) => format!("{}@{p:?}", self.name),
        }
    }

    /// Alternative handed to `lr_oracle`.
    pub fn oracle(&self) -> Option<&dyn ScoredModel> {
        self.truth.is_normalized().then_some(&self.truth as &dyn ScoredModel)
    }
}

/// Swept parameter of a scenario family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ParamRange {
    pub name: &'static str,
    pub min: f64,
    pub max: f64,
    pub default: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioInfo {
    pub name: &'static str,
    pub description: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub param: Option<ParamRange>,
}

/// Every buildable scenario.
pub fn catalog() -> Vec<ScenarioInfo> {
    let fixed = |name, description| ScenarioInfo { name, description, param: None };
    let swept = |name, description, p: ParamRange| ScenarioInfo { name, description, param: Some(p) };
    vec![
        fixed("binary_iid", "i.i.d. Bernoulli 0.6 vs 0.4, Poisson(20) lengths, n=10"),
        fixed("misspecified_order", "i.i.d. Bernoulli 0.6 with geometric(20) lengths vs an alternating chain, n=30"),
        fixed("random_walk_1", "cyclic walk m=8, lambda=8 vs walk holding with p=0.2, n=30"),
        fixed("random_walk_2", "cyclic walk m=30, lambda=30 vs holding only in states <= 8, n=8"),
        fixed("random_walk_3", "second-order walk m=10, lambda=8, step correlation 0.95 vs 0.05, n=30"),
        fixed("random_walk_4", "second-order walk m=10, lambda=30, step correlation 0.95 vs 0.05, n=8"),
        fixed("random_mc2_1", "random Dirichlet(1) second-order chains m=10, lambda=8, n=30"),
        fixed("random_mc2_2", "random Dirichlet(1) second-order chains m=10, lambda=20, n=8"),
        fixed("random_mc2_3", "random Dirichlet(1) second-order chains m=10, lambda=8, n=8"),
        fixed("varied_init_1", "random chain m=10, lambda=8, uniform init vs mixed init, n=30"),
        fixed("varied_init_2", "random chain m=10, lambda=20, uniform init vs mixed init, n=8"),
        swept(
            "varied_length",
            "random chain m=10, lambda=8 vs lambda=8+12*perturbation, n=30",
            ParamRange { name: "perturbation", min: 0.0, max: 1.0, default: 1.0 },
        ),
        swept(
            "perturbed_random_walk",
            "cyclic walk m=8, stop 1/20, truth holds at state 0 with p_hold, n=30",
            ParamRange { name: "p_hold", min: 0.0, max: 0.25, default: 0.25 },
        ),
        swept(
            "second_order_mixture",
            "random second-order chain m=8 vs even per-step mixture with a second chain, n=8",
            ParamRange { name: "lambda", min: 2.0, max: 20.0, default: 20.0 },
        ),
        swept(
            "mrf",
            "repeat-potential MRF m=3, M=20, mean length 10, model theta=1 vs theta_data, n=200",
            ParamRange { name: "theta", min: 0.75, max: 1.25, default: 1.25 },
        ),
        swept(
            "mrf_power",
            "repeat-potential MRF, model theta=1 vs theta=0.9, varying n",
            ParamRange { name: "n", min: 200.0, max: 700.0, default: 200.0 },
        ),
        swept(
            "toy_lm",
            "top-k order-2 token model (m=12, k=4, <=5 content tokens) vs pi-mixture with a second table, n=50",
            ParamRange { name: "pi", min: 0.0, max: 0.5, default: 0.5 },
        ),
    ]
}

pub fn scenario_info(name: &str) -> Option<ScenarioInfo> {
    catalog().into_iter().find(|s| s.name == name)
}

/// Builds a fixed scenario, or a swept family at its default parameter.
pub fn build_scenario(name: &str) -> Result<ScenarioSpec, ScenarioError> {
    build_scenario_with(name, None)
}

/// Builds `name` at parameter `param` (families only).
pub fn build_scenario_with(name: &str, param: Option<f64>) -> Result<ScenarioSpec, ScenarioError> {
    let info = scenario_info(name).ok_or_else(|| ScenarioError::Unknown(name.to_owned()))?;
    let value = match (info.param, param) {
        (None, Some(_)) => return Err(ScenarioError::NoParameter(name.to_owned())),
        (None, None) => None,
        (Some(r), p) => {
            let v = p.unwrap_or(r.default);
            if !(v >= r.min && v <= r.max) {
                return Err(ScenarioError::OutOfRange { name: r.name, value: v, min: r.min, max: r.max });
            }
            Some(v)
        }
    };
    let mut spec = match name {
        "binary_iid" => binary_iid()?,
        "misspecified_order" => misspecified_order()?,
        "random_walk_1" => random_walk_i(8, 8.0, 0.2, usize::MAX, 30)?,
        "random_walk_2" => random_walk_i(30, 30.0, 0.2, 8, 8)?,
        "random_walk_3" => random_walk_iii(8.0, 30)?,
        "random_walk_4" => random_walk_iii(30.0, 8)?,
        "random_mc2_1" => random_mc2(name, 8.0, 30)?,
        "random_mc2_2" => random_mc2(name, 20.0, 8)?,
        "random_mc2_3" => random_mc2(name, 8.0, 8)?,
        "varied_init_1" => varied_init(8.0, 30)?,
        "varied_init_2" => varied_init(20.0, 8)?,
        "varied_length" => varied_length(value.expect("ranged"))?,
        "perturbed_random_walk" => perturbed_random_walk_scenario(value.expect("ranged"))?,
        "second_order_mixture" => second_order_mixture_scenario(value.expect("ranged"))?,
        "mrf" => mrf_scenario(value.expect("ranged"))?,
        "mrf_power" => mrf_power_scenario(value.expect("ranged").round() as usize)?,
        "toy_lm" => toy_lm_scenario(value.expect("ranged"))?,
        _ => unreachable!("catalog and builder agree"),
    };
    spec.name = name.to_owned();
    spec.param = value;
    Ok(spec)
}

fn ksd_param(t: usize) -> TestConfig {
    TestConfig::new(Method::KsdParam).with_kernel(KernelConfig::csk(t))
}

fn spec(
    name: &str,
    model: impl Into<AnyModel>,
    truth: impl Into<AnyModel>,
    n: usize,
    lmax: Option<usize>,
    tests: Vec<TestConfig>,
) -> ScenarioSpec {
    ScenarioSpec { name: name.to_owned(), param: None, model: model.into(), truth: truth.into(), n, lmax, tests }
}

fn binary_alphabet() -> Alphabet {
    Alphabet::new(2).expect("size 2")
}

fn binary_iid() -> Result<ScenarioSpec, ScenarioError> {
    let law = LengthLaw::Poisson { mean: 20.0 };
    let lmax = law.lmax_for_tail(LENGTH_TAIL);
    let model = IidModel::bernoulli(0.6, law, RESTART_EPS, lmax)?;
    let truth = IidModel::bernoulli(0.4, law, RESTART_EPS, lmax)?;
    Ok(spec("binary_iid", model, truth, 10, Some(lmax), vec![ksd_param(2)]))
}

fn misspecified_order() -> Result<ScenarioSpec, ScenarioError> {
    let law = LengthLaw::Geometric { mean: 20.0 };
    let lmax = law.lmax_for_tail(LENGTH_TAIL).max(geometric_lmax(20.0, RESTART_EPS, LENGTH_TAIL));
    let model = IidModel::bernoulli(0.6, law, RESTART_EPS, lmax)?;
    let s = 1.0 / 20.0;
    let kernel = vec![vec![0.0, 1.0 - s, s], vec![1.0 - s, 0.0, s]];
    let truth =
        MarkovChainModel::new(binary_alphabet(), MarkovOrder::First, vec![0.5, 0.5], None, kernel, RESTART_EPS, Some(lmax))?;
    Ok(spec("misspecified_order", model, truth, 30, Some(lmax), vec![ksd_param(2)]))
}

/// First-order cyclic walk rows: hold with `hold(x)`, otherwise +-1.
fn walk_rows(m: usize, stop: f64, hold: impl Fn(usize) -> f64) -> Vec<Vec<f64>> {
    (0..m)
        .map(|x| {
            let mut row = vec![0.0; m + 1];
            let h = hold(x);
            row[x] += h * (1.0 - stop);
            row[(x + 1) % m] += 0.5 * (1.0 - h) * (1.0 - stop);
            row[(x + m - 1) % m] += 0.5 * (1.0 - h) * (1.0 - stop);
            row[m] = stop;
            row
        })
        .collect()
}

fn walk_chain(m: usize, lambda: f64, lmax: usize, hold: impl Fn(usize) -> f64) -> Result<MarkovChainModel, ModelError> {
    let alphabet = Alphabet::cyclic(m).expect("m >= 2");
    let init = vec![1.0 / m as f64; m];
    MarkovChainModel::new(alphabet, MarkovOrder::First, init, None, walk_rows(m, 1.0 / lambda, hold), RESTART_EPS, Some(lmax))
}

/// Holding walk; the truth holds with probability `p` in states `< i_max`
/// (0-indexed, i.e. states `1..=i_max` one-indexed).
fn random_walk_i(m: usize, lambda: f64, p: f64, i_max: usize, n: usize) -> Result<ScenarioSpec, ScenarioError> {
    let lmax = geometric_lmax(lambda, RESTART_EPS, LENGTH_TAIL);
    let model = walk_chain(m, lambda, lmax, |_| 0.0)?;
    let truth = walk_chain(m, lambda, lmax, |x| if x < i_max { p } else { 0.0 })?;
    Ok(spec("", model, truth, n, Some(lmax), vec![ksd_param(2)]))
}

/// Second-order cyclic walk with step correlation `delta`.
///
/// A previous increment of `+-1` is repeated with probability `delta` and
/// reversed otherwise; any other previous increment (0 or a restart jump)
/// gives `+-1` with probability 1/2 each. The first step is uniform on
/// `+-1`.
pub fn correlated_walk(m: usize, delta: f64, lambda: f64, lmax: Option<usize>) -> Result<MarkovChainModel, ModelError> {
    let stop = 1.0 / lambda;
    let go = 1.0 - stop;
    let alphabet = Alphabet::cyclic(m).expect("m >= 2");
    let first_step = walk_rows(m, stop, |_| 0.0);
    let mut kernel = Vec::with_capacity(m * m);
    for prev in 0..m {
        for cur in 0..m {
            let mut row = vec![0.0; m + 1];
            let up = (cur + 1) % m;
            let down = (cur + m - 1) % m;
            let diff = (cur + m - prev) % m;
            let (p_up, p_down) = if diff == 1 {
                (delta, 1.0 - delta)
            } else if diff == m - 1 {
                (1.0 - delta, delta)
            } else {
                (0.5, 0.5)
            };
            row[up] += p_up * go;
            row[down] += p_down * go;
            row[m] = stop;
            kernel.push(row);
        }
    }
    let init = vec![1.0 / m as f64; m];
    MarkovChainModel::new(alphabet, MarkovOrder::Second, init, Some(first_step), kernel, RESTART_EPS, lmax)
}

fn random_walk_iii(lambda: f64, n: usize) -> Result<ScenarioSpec, ScenarioError> {
    let lmax = geometric_lmax(lambda, RESTART_EPS, LENGTH_TAIL);
    let model = correlated_walk(10, 0.95, lambda, Some(lmax))?;
    let truth = correlated_walk(10, 0.05, lambda, Some(lmax))?;
    Ok(spec("", model, truth, n, Some(lmax), vec![ksd_param(2)]))
}

fn seeded(seed: u64, name: &str) -> RngStream {
    derive_stream(seed, &["scenario".into(), name.into()])
}

fn random_mc2(name: &str, lambda: f64, n: usize) -> Result<ScenarioSpec, ScenarioError> {
    let a = Alphabet::new(10).expect("size 10");
    let lmax = geometric_lmax(lambda, RESTART_EPS, LENGTH_TAIL);
    let draw = |seed| random_markov_chain(a, MarkovOrder::Second, 1.0, lambda, RESTART_EPS, Some(lmax), &mut seeded(seed, name));
    let model = draw(SEED_PAIR.0)?;
    let truth = draw(SEED_PAIR.1)?;
    Ok(spec("", model, truth, n, Some(lmax), vec![ksd_param(2)]))
}

/// Dirichlet(1) first-order rows with the content rescaled to stop
/// probability `1 / lambda`.
fn content_rows(seed_label: &str, m: usize, lambda: f64) -> Result<Vec<Vec<f64>>, ModelError> {
    let a = Alphabet::new(m).expect("m >= 2");
    let base = random_markov_chain(a, MarkovOrder::First, 1.0, 2.0, 0.0, None, &mut seeded(SEED_PAIR.0, seed_label))?;
    let stop = 1.0 / lambda;
    Ok(base
        .kernel()
        .iter()
        .map(|row| {
            let content: f64 = row[..m].iter().sum();
            let mut r: Vec<f64> = row[..m].iter().map(|p| p / content * (1.0 - stop)).collect();
            r.push(stop);
            r
        })
        .collect())
}

fn varied_init(lambda: f64, n: usize) -> Result<ScenarioSpec, ScenarioError> {
    let m = 10;
    let a = Alphabet::new(m).expect("size 10");
    let lmax = geometric_lmax(lambda, RESTART_EPS, LENGTH_TAIL);
    let rows = content_rows("varied_init", m, lambda)?;
    let uniform = vec![1.0 / m as f64; m];
    let mixed: Vec<f64> = (0..m).map(|s| 0.5 / m as f64 + if s < 2 { 0.25 } else { 0.0 }).collect();
    let model = MarkovChainModel::new(a, MarkovOrder::First, uniform, None, rows.clone(), RESTART_EPS, Some(lmax))?;
    let truth = MarkovChainModel::new(a, MarkovOrder::First, mixed, None, rows, RESTART_EPS, Some(lmax))?;
    Ok(spec("", model, truth, n, Some(lmax), vec![ksd_param(2)]))
}

/// Model stops with probability 1/8; the truth with `1 / (8 + 12 perturbation)`.
fn varied_length(perturbation: f64) -> Result<ScenarioSpec, ScenarioError> {
    let m = 10;
    let a = Alphabet::new(m).expect("size 10");
    let lambda_truth = 8.0 + 12.0 * perturbation;
    let lmax = geometric_lmax(lambda_truth.max(8.0), RESTART_EPS, LENGTH_TAIL);
    let uniform = vec![1.0 / m as f64; m];
    let model =
        MarkovChainModel::new(a, MarkovOrder::First, uniform.clone(), None, content_rows("varied_length", m, 8.0)?, RESTART_EPS, Some(lmax))?;
    let truth = MarkovChainModel::new(
        a,
        MarkovOrder::First,
        uniform,
        None,
        content_rows("varied_length", m, lambda_truth)?,
        RESTART_EPS,
        Some(lmax),
    )?;
    let tests = vec![
        ksd_param(2),
        TestConfig::new(Method::MmdParam { n_model: 100 }).with_kernel(KernelConfig::csk(2)),
        TestConfig::new(Method::LrOracle),
        TestConfig::new(Method::LrMarkov { order: MarkovOrder::First }),
    ];
    Ok(spec("", model, truth, 30, Some(lmax), tests))
}

/// Cyclic walk (m=8, stop 1/20); the truth holds at state 0 with `p_hold`.
pub fn perturbed_random_walk_scenario(p_hold: f64) -> Result<ScenarioSpec, ScenarioError> {
    check_range("p_hold", p_hold, 0.0, 0.25)?;
    let lambda = 20.0;
    let lmax = geometric_lmax(lambda, RESTART_EPS, LENGTH_TAIL);
    let model = walk_chain(8, lambda, lmax, |_| 0.0)?;
    let truth = walk_chain(8, lambda, lmax, |x| if x == 0 { p_hold } else { 0.0 })?;
    let tests = vec![
        ksd_param(2),
        TestConfig::new(Method::MmdParam { n_model: 100 }).with_kernel(KernelConfig::csk(2)),
        TestConfig::new(Method::LrOracle),
        TestConfig::new(Method::LrMarkov { order: MarkovOrder::First }),
    ];
    let mut s = spec("perturbed_random_walk", model, truth, 30, Some(lmax), tests);
    s.param = Some(p_hold);
    Ok(s)
}

/// Random second-order chain vs the per-step even mixture of its kernel
/// with a second random kernel. Both share the initial distribution.
pub fn second_order_mixture_scenario(lambda: f64) -> Result<ScenarioSpec, ScenarioError> {
    check_range("lambda", lambda, 2.0, 20.0)?;
    let a = Alphabet::new(8).expect("size 8");
    let lmax = geometric_lmax(lambda, RESTART_EPS, LENGTH_TAIL);
    let draw = |seed| {
        random_markov_chain(a, MarkovOrder::Second, 1.0, lambda, RESTART_EPS, Some(lmax), &mut seeded(seed, "second_order_mixture"))
    };
    let model = draw(SEED_PAIR.0)?;
    let other = draw(SEED_PAIR.1)?;
    let truth = mix_kernels(&model, &other)?;
    let tests = vec![
        ksd_param(3),
        TestConfig::new(Method::MmdParam { n_model: 100 }).with_kernel(KernelConfig::csk(3)),
        TestConfig::new(Method::LrOracle),
        TestConfig::new(Method::LrMarkov { order: MarkovOrder::Second }),
    ];
    let mut s = spec("second_order_mixture", model, truth, 8, Some(lmax), tests);
    s.param = Some(lambda);
    Ok(s)
}

/// Chain picking the kernel of `a` or `b` with probability 1/2 at every
/// step; the initial distribution is that of `a`.
pub fn mix_kernels(a: &MarkovChainModel, b: &MarkovChainModel) -> Result<MarkovChainModel, ModelError> {
    let avg = |x: &[Vec<f64>], y: &[Vec<f64>]| -> Vec<Vec<f64>> {
        x.iter().zip(y).map(|(r, s)| r.iter().zip(s).map(|(p, q)| 0.5 * (p + q)).collect()).collect()
    };
    let first = match (a.first_step(), b.first_step()) {
        (Some(x), Some(y)) => Some(avg(x, y)),
        _ => None,
    };
    let doc = a.doc();
    MarkovChainModel::new(doc.alphabet, doc.order, doc.init.clone(), first, avg(a.kernel(), b.kernel()), doc.restart_eps, doc.lmax)
}

fn mrf_tests() -> Vec<TestConfig> {
    vec![
        TestConfig::new(Method::KsdWild).with_kernel(KernelConfig::csk(2)),
        TestConfig::new(Method::MmdWildSame).with_kernel(KernelConfig::csk(2)),
        TestConfig::new(Method::LrOracle),
        TestConfig::new(Method::LrMarkov { order: MarkovOrder::First }),
    ]
}

/// MRF model at theta=1 against data at `theta_data`, n=200.
pub fn mrf_scenario(theta_data: f64) -> Result<ScenarioSpec, ScenarioError> {
    check_range("theta", theta_data, 0.75, 1.25)?;
    let model = mrf_model(1.0, 20, 10.0, 3)?;
    let truth = mrf_model(theta_data, 20, 10.0, 3)?;
    let mut s = spec("mrf", model, truth, 200, Some(20), mrf_tests());
    s.param = Some(theta_data);
    Ok(s)
}

/// MRF model at theta=1 against data at theta=0.9 with `n` samples.
pub fn mrf_power_scenario(n: usize) -> Result<ScenarioSpec, ScenarioError> {
    check_range("n", n as f64, 200.0, 700.0)?;
    let model = mrf_model(1.0, 20, 10.0, 3)?;
    let truth = mrf_model(0.9, 20, 10.0, 3)?;
    let mut s = spec("mrf_power", model, truth, n, Some(20), mrf_tests());
    s.param = Some(n as f64);
    Ok(s)
}

/// Size and filtering constants of the toy token model.
pub const TOY_LM_ALPHABET: usize = 12;
pub const TOY_LM_END: u16 = 11;
pub const TOY_LM_K: usize = 4;
pub const TOY_LM_MAX_CONTENT: usize = 5;

/// Random order-2 top-k token model; `seed` picks the "prompt".
pub fn toy_lm_model(seed: u64) -> Result<TopKARModel, ModelError> {
    TopKARModel::random(
        TOY_LM_ALPHABET,
        TOY_LM_END,
        TOY_LM_K,
        TOY_LM_MAX_CONTENT,
        0.5,
        0.3,
        0.0,
        &mut seeded(seed, "toy_lm"),
    )
}

/// Model: table A. Truth: draw from table B with probability `pi`, else A.
pub fn toy_lm_scenario(pi: f64) -> Result<ScenarioSpec, ScenarioError> {
    check_range("pi", pi, 0.0, 0.5)?;
    let a = toy_lm_model(SEED_PAIR.0)?;
    let b = toy_lm_model(SEED_PAIR.1)?;
    let truth = MixtureModel::new(vec![a.clone().into(), b.into()], vec![1.0 - pi, pi])?;
    let topk = |subs: bool| {
        let mut n = NeighborhoodSpec::new(NeighborhoodKind::TopkPoint, LocationBudget::Finite(1));
        n.substitutions_only = subs;
        n
    };
    let tests = vec![
        TestConfig::new(Method::KsdWild).with_kernel(KernelConfig::csk(2)).with_neighborhood(topk(false)),
        TestConfig::new(Method::KsdWild).with_kernel(KernelConfig::csk(2)).with_neighborhood(topk(true)),
        TestConfig::new(Method::MmdWildSame).with_kernel(KernelConfig::csk(2)),
    ];
    let mut s = spec("toy_lm", a, truth, 50, Some(TOY_LM_MAX_CONTENT + 1), tests);
    s.param = Some(pi);
    Ok(s)
}

/// Top-k model whose support splits under `topk_point` moves.
///
/// Tokens 0..=2 are content and 3 is the end token; k=2, at most two
/// content tokens, context of one token. The support is
/// `{(0,E), (0,0,E), (1,2,E)}` and `(1,2,E)` has no positive-mass
/// neighbour: `(1,E)` and `(1,1,E)` are filtered out and inserting would
/// exceed the content limit.
pub fn pinched_support_topk() -> TopKARModel {
    let base = vec![
        vec![0.3, 0.1, 0.1, 0.5],   // after 0: {E, 0}
        vec![0.05, 0.35, 0.5, 0.1], // after 1: {2, 1}
        vec![0.1, 0.1, 0.3, 0.5],   // after 2: {E, 2}
        vec![0.25, 0.25, 0.25, 0.25],
        vec![0.5, 0.3, 0.1, 0.1], // BOS: {0, 1}
    ];
    topk_ar_model(base, 4, 1, 2, 3, 2).expect("valid fixture")
}

fn check_range(name: &'static str, value: f64, min: f64, max: f64) -> Result<(), ScenarioError> {
    if value >= min && value <= max {
        Ok(())
    } else {
        Err(ScenarioError::OutOfRange { name, value, min, max })
    }
}

/// Count `k` out of `n` with its Wilson 95 % interval.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = WILSON_Z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let low = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let high = if k == n { 1.0 } else { (centre + half).min(1.0) };
    (low, high)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub scenario: String,
    pub param: Option<f64>,
    pub method_id: String,
    pub n: usize,
    pub trials: usize,
    pub rejections: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
    pub wall_time_s: f64,
}

/// Stream for trial `t`'s data set. Shared by every method, so methods are
/// compared on identical data.
pub fn data_stream(master: u64, scenario: &ScenarioSpec, trial: usize) -> RngStream {
    derive_stream(master, &[scenario.key().into(), "data".into(), trial.into()])
}

/// Stream for running `method_id` on trial `t`.
pub fn test_stream(master: u64, scenario: &ScenarioSpec, method_id: &str, trial: usize) -> RngStream {
    let path: [PathLabel; 3] = [scenario.key().into(), method_id.into(), trial.into()];
    derive_stream(master, &path)
}

/// Runs one trial: draws `n` points from the truth and tests them.
pub fn run_trial(scenario: &ScenarioSpec, config: &TestConfig, master: u64, trial: usize) -> Result<bool, ScenarioError> {
    let data = sample_n(&scenario.truth, scenario.n, &mut data_stream(master, scenario, trial))?;
    let rng = test_stream(master, scenario, &config.method_id(), trial);
    Ok(run_test(&scenario.model, scenario.oracle(), &data, config, &rng)?.reject)
}

/// Monte Carlo rejection rate over `trials` independent data sets.
pub fn estimate_rejection_rate(
    scenario: &ScenarioSpec,
    config: &TestConfig,
    trials: usize,
    master_seed: u64,
) -> Result<PowerEstimate, ScenarioError> {
    if trials == 0 {
        return Err(ScenarioError::NoTrials);
    }
    let start = Instant::now();
    let rejections = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(scenario, config, master_seed, t).map(usize::from))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .sum();
    Ok(power_estimate(scenario, config, trials, rejections, master_seed, start.elapsed().as_secs_f64()))
}

/// Null trial: data are drawn from the model itself. The truth still serves
/// as the LR oracle's alternative, so `T` is not trivially zero.
pub fn run_null_trial(scenario: &ScenarioSpec, config: &TestConfig, master: u64, trial: usize) -> Result<bool, ScenarioError> {
    let path: [PathLabel; 3] = [scenario.key().into(), "null-data".into(), trial.into()];
    let data = sample_n(&scenario.model, scenario.n, &mut derive_stream(master, &path))?;
    let path: [PathLabel; 4] = [scenario.key().into(), "null".into(), config.method_id().into(), trial.into()];
    Ok(run_test(&scenario.model, scenario.oracle(), &data, config, &derive_stream(master, &path))?.reject)
}

/// Monte Carlo level: rejection rate when the data follow the model.
pub fn estimate_level(
    scenario: &ScenarioSpec,
    config: &TestConfig,
    trials: usize,
    master_seed: u64,
) -> Result<PowerEstimate, ScenarioError> {
    if trials == 0 {
        return Err(ScenarioError::NoTrials);
    }
    let start = Instant::now();
    let rejections = (0..trials)
        .into_par_iter()
        .map(|t| run_null_trial(scenario, config, master_seed, t).map(usize::from))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .sum();
    Ok(power_estimate(scenario, config, trials, rejections, master_seed, start.elapsed().as_secs_f64()))
}

pub fn power_estimate(
    scenario: &ScenarioSpec,
    config: &TestConfig,
    trials: usize,
    rejections: usize,
    seed: u64,
    wall_time_s: f64,
) -> PowerEstimate {
    let (ci_low, ci_high) = wilson_interval(rejections, trials);
    PowerEstimate {
        scenario: scenario.name.clone(),
        param: scenario.param,
        method_id: config.method_id(),
        n: scenario.n,
        trials,
        rejections,
        rate: rejections as f64 / trials as f64,
        ci_low,
        ci_high,
        seed,
        wall_time_s,
    }
}

/// Default-balanced KSD config used by the suite runs.
pub fn suite_ksd(j: LocationBudget, balancing: BalancingKind, b: usize) -> TestConfig {
    TestConfig::new(Method::KsdParam)
        .with_kernel(KernelConfig::csk(2))
        .with_neighborhood(NeighborhoodSpec::zs(j))
        .with_balancing(balancing)
        .with_b(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neighborhoods::{validate_graph, TopKPointNeighborhood};
    use crate::seq;
    use crate::seqspace::Sequence;

    #[test]
    fn every_catalog_entry_builds() {
        for info in catalog() {
            let s = build_scenario(info.name).unwrap();
            assert_eq!(s.name, info.name);
            assert!(s.truth.can_sample());
            assert!(!s.tests.is_empty());
        }
        assert!(matches!(build_scenario("nope"), Err(ScenarioError::Unknown(_))));
        assert!(matches!(build_scenario_with("mrf", Some(2.0)), Err(ScenarioError::OutOfRange { .. })));
        assert!(matches!(build_scenario_with("binary_iid", Some(1.0)), Err(ScenarioError::NoParameter(_))));
    }

    #[test]
    fn default_parameters() {
        let s = build_scenario("binary_iid").unwrap();
        assert_eq!(s.n, 10);
        let x = seq![1];
        let q = seq![0];
        // Bernoulli 0.6 model: p(1)/p(0) = (0.6 + eps/2 - 0.6 eps) / (0.4 + ..).
        let r = s.model.log_mass_ratio(&x, &q).unwrap().exp();
        let e = RESTART_EPS;
        assert!((r - ((1.0 - e) * 0.6 + e / 2.0) / ((1.0 - e) * 0.4 + e / 2.0)).abs() < 1e-12);
        let rw2 = build_scenario("random_walk_2").unwrap();
        assert_eq!((rw2.model.alphabet().size, rw2.n), (30, 8));
        let AnyModel::MarkovChain(t) = &rw2.truth else { panic!() };
        assert!(t.kernel()[7][7] > 0.0);
        assert_eq!(t.kernel()[8][8], 0.0);
        let vl = build_scenario("varied_length").unwrap();
        let (AnyModel::MarkovChain(m), AnyModel::MarkovChain(t)) = (&vl.model, &vl.truth) else { panic!() };
        assert!((m.kernel()[0][10] - 1.0 / 8.0).abs() < 1e-15);
        assert!((t.kernel()[0][10] - 1.0 / 20.0).abs() < 1e-15);
        for s in 0..10 {
            let rm: Vec<f64> = m.kernel()[s][..10].iter().map(|p| p / (1.0 - 1.0 / 8.0)).collect();
            let rt: Vec<f64> = t.kernel()[s][..10].iter().map(|p| p / (1.0 - 1.0 / 20.0)).collect();
            for (a, b) in rm.iter().zip(&rt) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn truncation_mass_is_small() {
        for name in SUITE {
            let s = build_scenario(name).unwrap();
            if let AnyModel::MarkovChain(c) = &s.model {
                let lmax = c.lmax().unwrap();
                let full = c.with_lmax(None).unwrap();
                assert!(1.0 - full.length_cdf(lmax) < 1e-9, "{name}");
            }
        }
    }

    #[test]
    fn null_parameters_give_equal_models() {
        for (name, p) in [("perturbed_random_walk", 0.0), ("mrf", 1.0), ("toy_lm", 0.0), ("varied_length", 0.0)] {
            let s = build_scenario_with(name, Some(p)).unwrap();
            let mut rng = derive_stream(1, &["null".into()]);
            for x in sample_n(&s.truth, 30, &mut rng).unwrap() {
                let a = s.model.log_mass(&x).unwrap();
                let b = s.truth.log_mass(&x).unwrap();
                // Unnormalised truth (mixture of top-k) may differ by a constant only.
                assert!((a - b).abs() < 1e-9, "{name}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn mixture_of_identical_kernels_is_the_model() {
        let s = build_scenario_with("second_order_mixture", Some(5.0)).unwrap();
        let AnyModel::MarkovChain(m) = &s.model else { panic!() };
        let same = mix_kernels(m, m).unwrap();
        assert_eq!(same.kernel(), m.kernel());
    }

    #[test]
    fn perturbed_walk_hold_frequency() {
        // Under the uniform law the hold rate is p_hold / m = 1/32. Holding
        // itself raises the occupancy of state 0 to (4/3) / (7 + 4/3), so the
        // stationary rate is 0.04; short chains started uniformly sit between.
        let s = perturbed_random_walk_scenario(0.25).unwrap();
        let mut rng = derive_stream(2, &["hold".into()]);
        let (mut holds, mut steps) = (0usize, 0usize);
        for x in sample_n(&s.truth, 4000, &mut rng).unwrap() {
            for w in x.symbols().windows(2) {
                steps += 1;
                holds += usize::from(w[0] == w[1]);
            }
        }
        let f = holds as f64 / steps as f64;
        assert!(f > 1.0 / 32.0 - 0.003 && f < 0.04 + 0.003, "{f}");
    }

    #[test]
    fn correlated_walk_rules() {
        let c = correlated_walk(10, 0.95, 8.0, None).unwrap();
        let go = 1.0 - 1.0 / 8.0;
        assert!((c.kernel()[3 * 10 + 4][5] - 0.95 * go).abs() < 1e-15);
        assert!((c.kernel()[3 * 10 + 4][3] - 0.05 * go).abs() < 1e-15);
        assert!((c.kernel()[4 * 10 + 4][5] - 0.5 * go).abs() < 1e-15);
        assert!((c.kernel()[0 * 10 + 5][6] - 0.5 * go).abs() < 1e-15);
        // Wrap-around counts as a +1 step.
        assert!((c.kernel()[9 * 10 + 0][1] - 0.95 * go).abs() < 1e-15);
    }

    #[test]
    fn toy_lm_samples_respect_constraint() {
        let s = toy_lm_scenario(0.5).unwrap();
        let mut rng = derive_stream(3, &["lm".into()]);
        for x in sample_n(&s.truth, 300, &mut rng).unwrap() {
            assert_eq!(x.last(), TOY_LM_END);
            assert!(x.len() <= TOY_LM_MAX_CONTENT + 1);
        }
    }

    #[test]
    fn pinched_fixture_support_and_disconnection() {
        let m = pinched_support_topk();
        let support = m.enumerate_support();
        let expect: Vec<Sequence> = vec![seq![0, 0, 3], seq![0, 3], seq![1, 2, 3]];
        assert_eq!(support, expect);
        let nb = TopKPointNeighborhood { model: &m, substitutions_only: false };
        let report = validate_graph(&nb, &support, 1000).unwrap();
        assert!(report.symmetric);
        assert!(!report.strongly_connected);
    }

    #[test]
    fn wilson_reference_values() {
        // 10/20: centre 0.5, half-width z*sqrt(0.25/20 + z^2/1600)/(1 + z^2/20).
        let (lo, hi) = wilson_interval(10, 20);
        assert!((lo - 0.29929801).abs() < 1e-6 && (hi - 0.70070199).abs() < 1e-6, "{lo} {hi}");
        let (lo, hi) = wilson_interval(0, 10);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.27753279).abs() < 1e-6);
    }
}
