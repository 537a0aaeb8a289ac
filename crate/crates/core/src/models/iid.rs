use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{check_in_space, common_ends, draw_categorical, validate_distribution, ModelError, ScoredModel};
use crate::scalar::log_sum_exp;
use crate::seqspace::{Alphabet, Sequence, Symbol};

/// Length distribution, always conditioned on `1 <= l <= lmax`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum LengthLaw {
    Poisson { mean: f64 },
    /// Support `{1, 2, ..}` with success probability `1 / mean`.
    Geometric { mean: f64 },
}

impl LengthLaw {
    fn untruncated_log_pmf(&self, len: usize) -> f64 {
        match *self {
            LengthLaw::Poisson { mean } => {
                let log_fact: f64 = (2..=len).map(|k| (k as f64).ln()).sum();
                -mean + len as f64 * mean.ln() - log_fact
            }
            LengthLaw::Geometric { mean } => {
                let p = 1.0 / mean;
                (len as f64 - 1.0) * (1.0 - p).ln() + p.ln()
            }
        }
    }

    /// Smallest `L` such that the mass above `L` is at most `tail`.
    pub fn lmax_for_tail(&self, tail: f64) -> usize {
        let mut cdf_tail = 1.0;
        let mut len = 0;
        // Poisson has mass at 0 which is conditioned away; using the raw tail is conservative.
        while cdf_tail > tail && len < 100_000 {
            len += 1;
            cdf_tail -= self.untruncated_log_pmf(len).exp();
            if let LengthLaw::Poisson { mean } = self {
                if len == 1 {
                    cdf_tail -= (-mean).exp();
                }
            }
        }
        len.max(1)
    }

    fn validate(&self) -> Result<(), ModelError> {
        match *self {
            LengthLaw::Poisson { mean } if mean > 0.0 && mean.is_finite() => Ok(()),
            LengthLaw::Geometric { mean } if mean >= 1.0 && mean.is_finite() => Ok(()),
            other => Err(ModelError::InvalidParameter(format!("invalid length law {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IidModelDoc {
    pub alphabet: Alphabet,
    /// Per-symbol content probabilities.
    pub content: Vec<f64>,
    pub length: LengthLaw,
    #[serde(default)]
    pub restart_eps: f64,
    pub lmax: usize,
}

/// Independent symbols with an arbitrary length law.
///
/// Each symbol is drawn from `(1 - eps) * content + eps * uniform`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IidModelDoc", into = "IidModelDoc")]
pub struct IidModel {
    doc: IidModelDoc,
    symbol_probs: Vec<f64>,
    log_symbol: Vec<f64>,
    length_probs: Vec<f64>,
    /// Index `l - 1`.
    log_length: Vec<f64>,
}

impl TryFrom<IidModelDoc> for IidModel {
    type Error = ModelError;
    fn try_from(doc: IidModelDoc) -> Result<Self, ModelError> {
        IidModel::from_doc(doc)
    }
}

impl From<IidModel> for IidModelDoc {
    fn from(m: IidModel) -> Self {
        m.doc
    }
}

impl IidModel {
    pub fn new(
        alphabet: Alphabet,
        content: Vec<f64>,
        length: LengthLaw,
        restart_eps: f64,
        lmax: usize,
    ) -> Result<Self, ModelError> {
        Self::from_doc(IidModelDoc { alphabet, content, length, restart_eps, lmax })
    }

    /// Binary alphabet with `P(symbol = 1) = p`.
    pub fn bernoulli(p: f64, length: LengthLaw, restart_eps: f64, lmax: usize) -> Result<Self, ModelError> {
        Self::new(Alphabet::new(2).expect("size 2"), vec![1.0 - p, p], length, restart_eps, lmax)
    }

    fn from_doc(doc: IidModelDoc) -> Result<Self, ModelError> {
        let m = doc.alphabet.size;
        if doc.content.len() != m {
            return Err(ModelError::InvalidParameter("content must have one entry per symbol".into()));
        }
        validate_distribution("content", &doc.content)?;
        doc.length.validate()?;
        if !(0.0..=0.01).contains(&doc.restart_eps) {
            return Err(ModelError::InvalidParameter("restart_eps outside [0, 0.01]".into()));
        }
        if doc.lmax == 0 {
            return Err(ModelError::InvalidParameter("lmax must be at least 1".into()));
        }
        let symbol_probs: Vec<f64> =
            doc.content.iter().map(|p| (1.0 - doc.restart_eps) * p + doc.restart_eps / m as f64).collect();
        let raw: Vec<f64> = (1..=doc.lmax).map(|l| doc.length.untruncated_log_pmf(l)).collect();
        let norm = log_sum_exp(&raw);
        let log_length: Vec<f64> = raw.iter().map(|v| v - norm).collect();
        Ok(Self {
            log_symbol: symbol_probs.iter().map(|p| p.ln()).collect(),
            symbol_probs,
            length_probs: log_length.iter().map(|v| v.exp()).collect(),
            log_length,
            doc,
        })
    }

    pub fn length_law(&self) -> LengthLaw {
        self.doc.length
    }

    pub fn content(&self) -> &[f64] {
        &self.doc.content
    }
}

impl ScoredModel for IidModel {
    fn alphabet(&self) -> Alphabet {
        self.doc.alphabet
    }

    fn max_len(&self) -> Option<usize> {
        Some(self.doc.lmax)
    }

    fn log_mass(&self, x: &Sequence) -> Result<f64, ModelError> {
        check_in_space(x, &self.doc.alphabet, Some(self.doc.lmax))?;
        let lp = self.log_length[x.len() - 1] + x.symbols().iter().map(|&s| self.log_symbol[s as usize]).sum::<f64>();
        if lp == f64::NEG_INFINITY {
            return Err(ModelError::ZeroMass);
        }
        Ok(lp)
    }

    fn log_mass_ratio(&self, y: &Sequence, x: &Sequence) -> Result<f64, ModelError> {
        check_in_space(y, &self.doc.alphabet, Some(self.doc.lmax))?;
        check_in_space(x, &self.doc.alphabet, Some(self.doc.lmax))?;
        let (xs, ys) = (x.symbols(), y.symbols());
        let (pre, suf) = common_ends(xs, ys);
        let sum = |s: &[Symbol]| s.iter().map(|&c| self.log_symbol[c as usize]).sum::<f64>();
        let d = self.log_length[ys.len() - 1] - self.log_length[xs.len() - 1] + sum(&ys[pre..ys.len() - suf])
            - sum(&xs[pre..xs.len() - suf]);
        if d.is_finite() {
            Ok(d)
        } else {
            Ok(self.log_mass(y)? - self.log_mass(x)?)
        }
    }

    fn can_sample(&self) -> bool {
        true
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Result<Sequence, ModelError> {
        let len = draw_categorical(&self.length_probs, rng) + 1;
        let m = self.doc.alphabet.size;
        let eps = self.doc.restart_eps;
        let symbols: Vec<Symbol> = (0..len)
            .map(|_| {
                if eps > 0.0 && rng.random::<f64>() < eps {
                    rng.random_range(0..m) as Symbol
                } else {
                    draw_categorical(&self.doc.content, rng) as Symbol
                }
            })
            .collect();
        Ok(Sequence::new(symbols)?)
    }

    fn is_normalized(&self) -> bool {
        true
    }

    fn label(&self) -> String {
        format!("iid(m={})", self.doc.alphabet.size)
    }
}
