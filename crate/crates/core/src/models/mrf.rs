use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{check_in_space, draw_categorical, ModelError, ScoredModel};
use crate::scalar::log_sum_exp;
use crate::seqspace::{Alphabet, Sequence, Symbol};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MrfDoc {
    pub theta: f64,
    /// Length coefficient `C` of the potential.
    pub length_coef: f64,
    pub max_len: usize,
    pub alphabet_size: usize,
}

/// Markov random field with potential
/// `h(x) = C * l + theta * #{i : x_i = x_(i+1)}` for `l <= M`.
///
/// The per-length partition function has the closed form
/// `Z_l = m * (e^theta + m - 1)^(l - 1)`, so both normalisation and exact
/// sampling are available.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MrfDoc", into = "MrfDoc")]
pub struct MrfModel {
    doc: MrfDoc,
    log_partition: f64,
    length_probs: Vec<f64>,
}

impl TryFrom<MrfDoc> for MrfModel {
    type Error = ModelError;
    fn try_from(doc: MrfDoc) -> Result<Self, ModelError> {
        MrfModel::with_length_coef(doc.theta, doc.length_coef, doc.max_len, doc.alphabet_size)
    }
}

impl From<MrfModel> for MrfDoc {
    fn from(m: MrfModel) -> Self {
        m.doc
    }
}

/// `log(e^theta + m - 1)`.
fn log_repeat_base(theta: f64, m: usize) -> f64 {
    (theta.exp() + m as f64 - 1.0).ln()
}

/// Mean of `P(l) ∝ r^(l-1)` on `{1..max_len}` given `log r`.
fn truncated_geometric_mean(log_r: f64, max_len: usize) -> f64 {
    let logs: Vec<f64> = (0..max_len).map(|k| k as f64 * log_r).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (k, lw) in logs.iter().enumerate() {
        let w = (lw - top).exp();
        num += (k + 1) as f64 * w;
        den += w;
    }
    num / den
}

impl MrfModel {
    pub fn with_length_coef(theta: f64, length_coef: f64, max_len: usize, alphabet_size: usize) -> Result<Self, ModelError> {
        if max_len == 0 || alphabet_size == 0 || !theta.is_finite() || !length_coef.is_finite() {
            return Err(ModelError::InvalidParameter("MRF needs M >= 1, m >= 1 and finite theta, C".into()));
        }
        let doc = MrfDoc { theta, length_coef, max_len, alphabet_size };
        let log_z: Vec<f64> = (1..=max_len).map(|l| doc.log_length_weight(l)).collect();
        let log_partition = log_sum_exp(&log_z);
        let length_probs = log_z.iter().map(|v| (v - log_partition).exp()).collect();
        Ok(Self { doc, log_partition, length_probs })
    }

    pub fn theta(&self) -> f64 {
        self.doc.theta
    }

    pub fn length_coef(&self) -> f64 {
        self.doc.length_coef
    }

    pub fn length_marginal(&self) -> &[f64] {
        &self.length_probs
    }

    pub fn mean_length(&self) -> f64 {
        self.length_probs.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum()
    }

    /// `log Z` over the whole truncated space.
    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    /// Probability that the next symbol repeats the previous one.
    pub fn repeat_probability(&self) -> f64 {
        (self.doc.theta - log_repeat_base(self.doc.theta, self.doc.alphabet_size)).exp()
    }

    fn potential(&self, x: &Sequence) -> f64 {
        let repeats = x.symbols().windows(2).filter(|w| w[0] == w[1]).count();
        self.doc.length_coef * x.len() as f64 + self.doc.theta * repeats as f64
    }
}

impl MrfDoc {
    /// `log(e^(C l) Z_l)`.
    fn log_length_weight(&self, l: usize) -> f64 {
        self.length_coef * l as f64
            + (self.alphabet_size as f64).ln()
            + (l as f64 - 1.0) * log_repeat_base(self.theta, self.alphabet_size)
    }
}

/// MRF whose length coefficient is calibrated so the mean length equals
/// `target_mean_len`; the resulting length marginal does not depend on theta.
pub fn mrf_model(theta: f64, max_len: usize, target_mean_len: f64, alphabet_size: usize) -> Result<MrfModel, ModelError> {
    if !(target_mean_len > 1.0 && target_mean_len < max_len as f64) {
        return Err(ModelError::InvalidParameter(format!(
            "target mean length {target_mean_len} not bracketed by (1, {max_len})"
        )));
    }
    let (mut lo, mut hi) = (-60.0f64, 60.0f64);
    if !(truncated_geometric_mean(lo, max_len) < target_mean_len && truncated_geometric_mean(hi, max_len) > target_mean_len) {
        return Err(ModelError::InvalidParameter("calibration root not bracketed".into()));
    }
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if truncated_geometric_mean(mid, max_len) < target_mean_len {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let log_r = 0.5 * (lo + hi);
    MrfModel::with_length_coef(theta, log_r - log_repeat_base(theta, alphabet_size), max_len, alphabet_size)
}

impl ScoredModel for MrfModel {
    fn alphabet(&self) -> Alphabet {
        Alphabet::new(self.doc.alphabet_size).expect("validated")
    }

    fn max_len(&self) -> Option<usize> {
        Some(self.doc.max_len)
    }

    fn log_mass(&self, x: &Sequence) -> Result<f64, ModelError> {
        check_in_space(x, &self.alphabet(), Some(self.doc.max_len))?;
        Ok(self.potential(x))
    }

    fn can_sample(&self) -> bool {
        true
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Result<Sequence, ModelError> {
        let m = self.doc.alphabet_size;
        let len = draw_categorical(&self.length_probs, rng) + 1;
        let repeat = self.repeat_probability();
        let mut out: Vec<Symbol> = Vec::with_capacity(len);
        out.push(rng.random_range(0..m) as Symbol);
        while out.len() < len {
            let prev = out[out.len() - 1];
            if m == 1 || rng.random::<f64>() < repeat {
                out.push(prev);
            } else {
                // Uniform over the m - 1 other symbols.
                let k = rng.random_range(0..m - 1) as Symbol;
                out.push(if k >= prev { k + 1 } else { k });
            }
        }
        Ok(Sequence::new(out)?)
    }

    fn is_normalized(&self) -> bool {
        true
    }

    fn log_mass_normalized(&self, x: &Sequence) -> Result<f64, ModelError> {
        Ok(self.log_mass(x)? - self.log_partition)
    }

    fn label(&self) -> String {
        format!("mrf(theta={}, m={}, M={})", self.doc.theta, self.doc.alphabet_size, self.doc.max_len)
    }
}
