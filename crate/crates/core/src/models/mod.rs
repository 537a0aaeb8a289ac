//! Scored sequence distributions.
//!
//! Every model exposes an unnormalised log-mass; Stein computations only
//! ever look at differences `log p(y) - log p(x)`. Sampling and normalised
//! evaluation are optional capabilities.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seqspace::{Alphabet, SeqError, Sequence, Symbol};

mod fit;
mod iid;
mod markov;
mod mixture;
mod mrf;
mod topk;

pub use fit::{fit_markov_mle, markov_log_likelihood};
pub use iid::{IidModel, LengthLaw};
pub use markov::{geometric_lmax, random_markov_chain, MarkovChainModel, MarkovOrder};
pub use mixture::MixtureModel;
pub use mrf::{mrf_model, MrfModel};
pub use topk::{topk_ar_model, TopKARModel};

/// Default cap on whole-sequence rejection-sampling attempts.
pub const REJECTION_CAP: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ModelError {
    #[error("sequence of length {len} lies outside the model space (max length {lmax})")]
    OutsideSpace { len: usize, lmax: usize },
    #[error(transparent)]
    Sequence(#[from] SeqError),
    #[error("sequence has zero mass under the model")]
    ZeroMass,
    #[error("model does not support sampling")]
    CannotSample,
    #[error("model does not provide a normalised mass")]
    NotNormalized,
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error("rejection sampler gave up after {0} attempts")]
    RejectionCapExceeded(usize),
}

/// A distribution on sequences known up to a normalising constant.
pub trait ScoredModel: Send + Sync {
    fn alphabet(&self) -> Alphabet;

    /// Largest sequence length in the model space, if bounded.
    fn max_len(&self) -> Option<usize>;

    /// Unnormalised `log p(x)`.
    fn log_mass(&self, x: &Sequence) -> Result<f64, ModelError>;

    /// `log p(y) - log p(x)`.
    fn log_mass_ratio(&self, y: &Sequence, x: &Sequence) -> Result<f64, ModelError> {
        Ok(self.log_mass(y)? - self.log_mass(x)?)
    }

    fn can_sample(&self) -> bool {
        false
    }

    fn sample(&self, _rng: &mut dyn RngCore) -> Result<Sequence, ModelError> {
        Err(ModelError::CannotSample)
    }

    fn is_normalized(&self) -> bool {
        false
    }

    fn log_mass_normalized(&self, x: &Sequence) -> Result<f64, ModelError> {
        if self.is_normalized() {
            self.log_mass(x)
        } else {
            Err(ModelError::NotNormalized)
        }
    }

    /// Short human-readable identifier used in reports.
    fn label(&self) -> String {
        "model".to_owned()
    }

    /// The underlying top-k model, for point-dependent neighbourhoods.
    fn as_topk(&self) -> Option<&TopKARModel> {
        None
    }
}

impl<M: ScoredModel + ?Sized> ScoredModel for &M {
    fn alphabet(&self) -> Alphabet {
        (**self).alphabet()
    }
    fn max_len(&self) -> Option<usize> {
        (**self).max_len()
    }
    fn log_mass(&self, x: &Sequence) -> Result<f64, ModelError> {
        (**self).log_mass(x)
    }
    fn log_mass_ratio(&self, y: &Sequence, x: &Sequence) -> Result<f64, ModelError> {
        (**self).log_mass_ratio(y, x)
    }
    fn can_sample(&self) -> bool {
        (**self).can_sample()
    }
    fn sample(&self, rng: &mut dyn RngCore) -> Result<Sequence, ModelError> {
        (**self).sample(rng)
    }
    fn is_normalized(&self) -> bool {
        (**self).is_normalized()
    }
    fn log_mass_normalized(&self, x: &Sequence) -> Result<f64, ModelError> {
        (**self).log_mass_normalized(x)
    }
    fn label(&self) -> String {
        (**self).label()
    }
    fn as_topk(&self) -> Option<&TopKARModel> {
        (**self).as_topk()
    }
}

/// Draws `n` independent samples.
pub fn sample_n<M: ScoredModel + ?Sized>(
    model: &M,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<Sequence>, ModelError> {
    (0..n).map(|_| model.sample(rng)).collect()
}

/// Checks length and symbol range against the model space.
pub(crate) fn check_in_space(x: &Sequence, alphabet: &Alphabet, lmax: Option<usize>) -> Result<(), ModelError> {
    if let Some(lmax) = lmax {
        if x.len() > lmax {
            return Err(ModelError::OutsideSpace { len: x.len(), lmax });
        }
    }
    x.check(alphabet)?;
    Ok(())
}

/// Lengths of the longest common prefix and suffix of `x` and `y`, chosen
/// so the two never overlap in the shorter sequence.
pub(crate) fn common_ends(x: &[Symbol], y: &[Symbol]) -> (usize, usize) {
    let short = x.len().min(y.len());
    let pre = x.iter().zip(y).take_while(|(a, b)| a == b).count();
    let suf = x.iter().rev().zip(y.iter().rev()).take(short - pre).take_while(|(a, b)| a == b).count();
    (pre, suf)
}

/// Scoring hook for models living outside this crate (for example a
/// pretrained language model behind an RPC boundary).
///
/// Implementations return the unnormalised log-mass of a token sequence, or
/// `None` for zero mass. No client is provided here.
pub trait ExternalScorer: Send + Sync {
    fn alphabet(&self) -> Alphabet;
    fn max_len(&self) -> Option<usize>;
    fn score(&self, tokens: &[Symbol]) -> Option<f64>;
}

/// Adapts an [`ExternalScorer`] to [`ScoredModel`].
pub struct ExternalModel<S>(pub S);

impl<S: ExternalScorer> ScoredModel for ExternalModel<S> {
    fn alphabet(&self) -> Alphabet {
        self.0.alphabet()
    }
    fn max_len(&self) -> Option<usize> {
        self.0.max_len()
    }
    fn log_mass(&self, x: &Sequence) -> Result<f64, ModelError> {
        check_in_space(x, &self.0.alphabet(), self.0.max_len())?;
        self.0.score(x.symbols()).ok_or(ModelError::ZeroMass)
    }
    fn label(&self) -> String {
        "external".to_owned()
    }
}

/// Serializable model document: `{"kind": "...", ...parameters}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnyModel {
    MarkovChain(MarkovChainModel),
    Iid(IidModel),
    Mrf(MrfModel),
    TopkAr(TopKARModel),
    Mixture(MixtureModel),
}

macro_rules! dispatch {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            AnyModel::MarkovChain($m) => $e,
            AnyModel::Iid($m) => $e,
            AnyModel::Mrf($m) => $e,
            AnyModel::TopkAr($m) => $e,
            AnyModel::Mixture($m) => $e,
        }
    };
}

impl ScoredModel for AnyModel {
    fn alphabet(&self) -> Alphabet {
        dispatch!(self, m => m.alphabet())
    }
    fn max_len(&self) -> Option<usize> {
        dispatch!(self, m => m.max_len())
    }
    fn log_mass(&self, x: &Sequence) -> Result<f64, ModelError> {
        dispatch!(self, m => m.log_mass(x))
    }
    fn log_mass_ratio(&self, y: &Sequence, x: &Sequence) -> Result<f64, ModelError> {
        dispatch!(self, m => m.log_mass_ratio(y, x))
    }
    fn can_sample(&self) -> bool {
        dispatch!(self, m => m.can_sample())
    }
    fn sample(&self, rng: &mut dyn RngCore) -> Result<Sequence, ModelError> {
        dispatch!(self, m => m.sample(rng))
    }
    fn is_normalized(&self) -> bool {
        dispatch!(self, m => m.is_normalized())
    }
    fn log_mass_normalized(&self, x: &Sequence) -> Result<f64, ModelError> {
        dispatch!(self, m => m.log_mass_normalized(x))
    }
    fn label(&self) -> String {
        dispatch!(self, m => m.label())
    }
    fn as_topk(&self) -> Option<&TopKARModel> {
        dispatch!(self, m => m.as_topk())
    }
}

impl From<MarkovChainModel> for AnyModel {
    fn from(m: MarkovChainModel) -> Self {
        AnyModel::MarkovChain(m)
    }
}
impl From<IidModel> for AnyModel {
    fn from(m: IidModel) -> Self {
        AnyModel::Iid(m)
    }
}
impl From<MrfModel> for AnyModel {
    fn from(m: MrfModel) -> Self {
        AnyModel::Mrf(m)
    }
}
impl From<TopKARModel> for AnyModel {
    fn from(m: TopKARModel) -> Self {
        AnyModel::TopkAr(m)
    }
}
impl From<MixtureModel> for AnyModel {
    fn from(m: MixtureModel) -> Self {
        AnyModel::Mixture(m)
    }
}

/// Index drawn from the (not necessarily normalised) weights in `probs`.
pub(crate) fn draw_categorical(probs: &[f64], rng: &mut dyn RngCore) -> usize {
    use rand::Rng;
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &p) in probs.iter().enumerate() {
        if u < p {
            return i;
        }
        u -= p;
    }
    // Rounding can leave u marginally above the last cumulative bound.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Dirichlet(alpha, .., alpha) draw of dimension `dim`, via normalised gammas.
pub(crate) fn draw_dirichlet(alpha: f64, dim: usize, rng: &mut dyn RngCore) -> Vec<f64> {
    use rand_distr::{Distribution, Gamma};
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated by caller");
    loop {
        let v: Vec<f64> = (0..dim).map(|_| gamma.sample(rng)).collect();
        let total: f64 = v.iter().sum();
        if total > 0.0 && total.is_finite() {
            return v.into_iter().map(|g| g / total).collect();
        }
    }
}

pub(crate) fn validate_distribution(name: &str, probs: &[f64]) -> Result<(), ModelError> {
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(ModelError::InvalidParameter(format!("{name} has a negative or non-finite entry")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(ModelError::InvalidParameter(format!("{name} sums to {total}, expected 1")));
    }
    Ok(())
}
