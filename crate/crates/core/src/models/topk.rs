use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{draw_categorical, draw_dirichlet, validate_distribution, ModelError, ScoredModel, REJECTION_CAP};
use crate::seqspace::{Alphabet, Sequence, Symbol};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopKDoc {
    /// Number of tokens, end token included.
    pub alphabet_size: usize,
    pub end_token: Symbol,
    pub k: usize,
    /// Maximum number of content tokens before the end token.
    pub max_content: usize,
    /// Number of previous tokens the base conditionals look at (1 or 2).
    pub context_order: usize,
    /// Base next-token distributions, one row per context id (see
    /// [`TopKARModel::context_id`]).
    pub base: Vec<Vec<f64>>,
}

/// Autoregressive model with top-k filtering, restricted to sequences that
/// end with the end token within `max_content + 1` steps.
///
/// Every sequence in the support has the form `(x_1, .., x_n, end)` with
/// `n <= max_content` and each token among the `k` most likely continuations
/// of its prefix (ties broken by lower symbol index). The mass is the
/// product of renormalised filtered conditionals; the acceptance constant of
/// the end-token constraint is unknown, so the model is unnormalised.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TopKDoc", into = "TopKDoc")]
pub struct TopKARModel {
    doc: TopKDoc,
    topk: Vec<Vec<Symbol>>,
    filtered: Vec<Vec<f64>>,
    log_filtered: Vec<Vec<f64>>,
}

impl TryFrom<TopKDoc> for TopKARModel {
    type Error = ModelError;
    fn try_from(doc: TopKDoc) -> Result<Self, ModelError> {
        TopKARModel::from_doc(doc)
    }
}

impl From<TopKARModel> for TopKDoc {
    fn from(m: TopKARModel) -> Self {
        m.doc
    }
}

/// Builds a top-k model over `base`.
pub fn topk_ar_model(
    base: Vec<Vec<f64>>,
    alphabet_size: usize,
    context_order: usize,
    k: usize,
    end_token: Symbol,
    max_content: usize,
) -> Result<TopKARModel, ModelError> {
    TopKARModel::from_doc(TopKDoc { alphabet_size, end_token, k, max_content, context_order, base })
}

impl TopKARModel {
    fn from_doc(doc: TopKDoc) -> Result<Self, ModelError> {
        let m = doc.alphabet_size;
        if m < 2 || (doc.end_token as usize) >= m {
            return Err(ModelError::InvalidParameter("need at least one content token and a valid end token".into()));
        }
        if doc.k == 0 || doc.k > m {
            return Err(ModelError::InvalidParameter(format!("k = {} must lie in 1..={m}", doc.k)));
        }
        if !(1..=2).contains(&doc.context_order) {
            return Err(ModelError::InvalidParameter("context order must be 1 or 2".into()));
        }
        let rows = (m + 1).pow(doc.context_order as u32);
        if doc.base.len() != rows {
            return Err(ModelError::InvalidParameter(format!("base needs {rows} rows, got {}", doc.base.len())));
        }
        let mut topk = Vec::with_capacity(rows);
        let mut filtered = Vec::with_capacity(rows);
        for (i, row) in doc.base.iter().enumerate() {
            if row.len() != m {
                return Err(ModelError::InvalidParameter(format!("base row {i} has {} entries", row.len())));
            }
            validate_distribution(&format!("base row {i}"), row)?;
            let mut order: Vec<Symbol> = (0..m as Symbol).collect();
            order.sort_by(|&a, &b| row[b as usize].total_cmp(&row[a as usize]).then(a.cmp(&b)));
            order.truncate(doc.k);
            let mass: f64 = order.iter().map(|&s| row[s as usize]).sum();
            let mut f = vec![0.0; m];
            for &s in &order {
                f[s as usize] = if mass > 0.0 { row[s as usize] / mass } else { 1.0 / doc.k as f64 };
            }
            topk.push(order);
            filtered.push(f);
        }
        let log_filtered = filtered.iter().map(|r| r.iter().map(|p: &f64| p.ln()).collect()).collect();
        Ok(Self { doc, topk, filtered, log_filtered })
    }

    /// Random base conditionals: content tokens Dirichlet(alpha), with the
    /// end token receiving `end_prob` once at least one content token exists
    /// and `start_end_prob` on the empty prefix.
    #[allow(clippy::too_many_arguments)]
    pub fn random(
        alphabet_size: usize,
        end_token: Symbol,
        k: usize,
        max_content: usize,
        alpha: f64,
        end_prob: f64,
        start_end_prob: f64,
        rng: &mut dyn RngCore,
    ) -> Result<Self, ModelError> {
        let m = alphabet_size;
        let rows = (m + 1) * (m + 1);
        let bos = m;
        let base = (0..rows)
            .map(|id| {
                let (_, last) = (id / (m + 1), id % (m + 1));
                let pe = if last == bos { start_end_prob } else { end_prob };
                let content = draw_dirichlet(alpha, m - 1, rng);
                let mut row = Vec::with_capacity(m);
                let mut it = content.into_iter();
                for s in 0..m {
                    if s == end_token as usize {
                        row.push(pe);
                    } else {
                        row.push(it.next().expect("m - 1 content draws") * (1.0 - pe));
                    }
                }
                row
            })
            .collect();
        topk_ar_model(base, m, 2, k, end_token, max_content)
    }

    pub fn doc(&self) -> &TopKDoc {
        &self.doc
    }

    pub fn end_token(&self) -> Symbol {
        self.doc.end_token
    }

    pub fn k(&self) -> usize {
        self.doc.k
    }

    pub fn max_content(&self) -> usize {
        self.doc.max_content
    }

    /// Row index of the base table for the given prefix (BOS-padded).
    pub fn context_id(&self, prefix: &[Symbol]) -> usize {
        let bos = self.doc.alphabet_size;
        let at = |back: usize| -> usize {
            if prefix.len() >= back {
                prefix[prefix.len() - back] as usize
            } else {
                bos
            }
        };
        match self.doc.context_order {
            1 => at(1),
            _ => at(2) * (bos + 1) + at(1),
        }
    }

    /// The k most likely next tokens after `prefix`, most likely first.
    pub fn topk_set(&self, prefix: &[Symbol]) -> &[Symbol] {
        &self.topk[self.context_id(prefix)]
    }

    /// Filtered, renormalised next-token distribution after `prefix`.
    pub fn filtered_conditional(&self, prefix: &[Symbol]) -> &[f64] {
        &self.filtered[self.context_id(prefix)]
    }

    pub fn base_conditional(&self, prefix: &[Symbol]) -> &[f64] {
        &self.doc.base[self.context_id(prefix)]
    }

    /// Whether `x` has positive mass.
    pub fn in_support(&self, x: &Sequence) -> bool {
        self.log_mass(x).is_ok()
    }

    /// Every positive-mass sequence, by depth-first search over top-k tokens.
    pub fn enumerate_support(&self) -> Vec<Sequence> {
        let mut out = Vec::new();
        let mut prefix = Vec::new();
        self.extend_support(&mut prefix, &mut out);
        out.sort();
        out
    }

    fn extend_support(&self, prefix: &mut Vec<Symbol>, out: &mut Vec<Sequence>) {
        let end = self.doc.end_token;
        for &s in self.topk_set(prefix) {
            if s == end {
                let mut full = prefix.clone();
                full.push(end);
                out.push(Sequence::new(full).expect("non-empty"));
            } else if prefix.len() < self.doc.max_content {
                prefix.push(s);
                self.extend_support(prefix, out);
                prefix.pop();
            }
        }
    }
}

impl ScoredModel for TopKARModel {
    fn alphabet(&self) -> Alphabet {
        Alphabet::new(self.doc.alphabet_size).expect("validated")
    }

    fn max_len(&self) -> Option<usize> {
        Some(self.doc.max_content + 1)
    }

    fn log_mass(&self, x: &Sequence) -> Result<f64, ModelError> {
        x.check(&self.alphabet())?;
        let s = x.symbols();
        let n = s.len() - 1;
        if n > self.doc.max_content {
            return Err(ModelError::OutsideSpace { len: s.len(), lmax: self.doc.max_content + 1 });
        }
        if s[n] != self.doc.end_token || s[..n].contains(&self.doc.end_token) {
            return Err(ModelError::ZeroMass);
        }
        let mut lp = 0.0;
        for i in 0..=n {
            let v = self.log_filtered[self.context_id(&s[..i])][s[i] as usize];
            if v == f64::NEG_INFINITY {
                return Err(ModelError::ZeroMass);
            }
            lp += v;
        }
        Ok(lp)
    }

    fn can_sample(&self) -> bool {
        true
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Result<Sequence, ModelError> {
        let end = self.doc.end_token;
        'attempt: for _ in 0..REJECTION_CAP {
            let mut out: Vec<Symbol> = Vec::with_capacity(self.doc.max_content + 1);
            loop {
                let s = draw_categorical(self.filtered_conditional(&out), rng) as Symbol;
                out.push(s);
                if s == end {
                    return Ok(Sequence::new(out)?);
                }
                if out.len() > self.doc.max_content {
                    continue 'attempt;
                }
            }
        }
        Err(ModelError::RejectionCapExceeded(REJECTION_CAP))
    }

    fn label(&self) -> String {
        format!("topk_ar(m={}, k={})", self.doc.alphabet_size, self.doc.k)
    }

    fn as_topk(&self) -> Option<&TopKARModel> {
        Some(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqspace::derive_stream;

    fn toy(k: usize, seed: u64) -> TopKARModel {
        let mut rng = derive_stream(seed, &["topk".into()]);
        TopKARModel::random(8, 7, k, 5, 0.5, 0.3, 0.02, &mut rng).unwrap()
    }

    #[test]
    fn topk_set_matches_brute_force_sort() {
        let model = toy(3, 1);
        let m = 8usize;
        for a in 0..=m {
            for b in 0..=m {
                let row = &model.doc.base[a * (m + 1) + b];
                let mut brute: Vec<(f64, usize)> = row.iter().copied().zip(0..).collect();
                brute.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then(x.1.cmp(&y.1)));
                let expect: Vec<Symbol> = brute.iter().take(3).map(|&(_, s)| s as Symbol).collect();
                assert_eq!(model.topk[a * (m + 1) + b], expect);
            }
        }
    }

    #[test]
    fn ties_broken_by_index() {
        let m = 3;
        let row = vec![0.25, 0.5, 0.25];
        let model = topk_ar_model(vec![row; m + 1], m, 1, 2, 2, 3).unwrap();
        assert_eq!(model.topk_set(&[]), &[1, 0]);
    }

    #[test]
    fn full_k_equals_base() {
        let model = toy(8, 2);
        let mut rng = derive_stream(3, &["x".into()]);
        for _ in 0..50 {
            let x = model.sample(&mut rng).unwrap();
            let s = x.symbols();
            let base: f64 = (0..s.len()).map(|i| model.base_conditional(&s[..i])[s[i] as usize].ln()).sum();
            assert!((model.log_mass(&x).unwrap() - base).abs() < 1e-12);
        }
    }

    #[test]
    fn k_one_is_deterministic() {
        let model = toy(1, 3);
        let mut rng = derive_stream(4, &["x".into()]);
        let support = model.enumerate_support();
        assert!(support.len() <= 1);
        if let Some(only) = support.first() {
            for _ in 0..20 {
                assert_eq!(&model.sample(&mut rng).unwrap(), only);
            }
        }
    }

    #[test]
    fn samples_end_with_end_token() {
        let model = toy(3, 5);
        let mut rng = derive_stream(6, &["x".into()]);
        for _ in 0..500 {
            let x = model.sample(&mut rng).unwrap();
            assert_eq!(x.last(), 7);
            assert!(x.len() - 1 <= 5);
            assert!(model.log_mass(&x).is_ok());
        }
    }

    #[test]
    fn out_of_support_is_flagged() {
        let model = toy(3, 7);
        let prefix: Vec<Symbol> = vec![];
        let outside = (0..7).find(|s| !model.topk_set(&prefix).contains(s)).unwrap();
        let x = Sequence::new(vec![outside, 7]).unwrap();
        assert_eq!(model.log_mass(&x), Err(ModelError::ZeroMass));
        assert_eq!(model.log_mass(&Sequence::new(vec![0, 1]).unwrap()), Err(ModelError::ZeroMass));
    }

    #[test]
    fn support_enumeration_is_exactly_positive_mass() {
        let model = toy(2, 9);
        let support = model.enumerate_support();
        assert!(!support.is_empty());
        assert!(support.iter().all(|x| model.in_support(x)));
    }
}
