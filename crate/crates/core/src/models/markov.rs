use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{check_in_space, common_ends, draw_categorical, draw_dirichlet, validate_distribution, ModelError, ScoredModel, REJECTION_CAP};
use crate::seqspace::{Alphabet, Sequence, Symbol};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum MarkovOrder {
    First,
    Second,
}

impl TryFrom<u8> for MarkovOrder {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(MarkovOrder::First),
            2 => Ok(MarkovOrder::Second),
            other => Err(format!("unsupported Markov order {other}")),
        }
    }
}

impl From<MarkovOrder> for u8 {
    fn from(o: MarkovOrder) -> u8 {
        match o {
            MarkovOrder::First => 1,
            MarkovOrder::Second => 2,
        }
    }
}

/// Serialized parameters of a [`MarkovChainModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovChainDoc {
    pub alphabet: Alphabet,
    pub order: MarkovOrder,
    pub init: Vec<f64>,
    /// Order 2 only: rows indexed by the first symbol, over `S ∪ {stop}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_step: Option<Vec<Vec<f64>>>,
    /// Rows over `S ∪ {stop}` (stop last). Order 1: one row per symbol.
    /// Order 2: row `prev * m + cur`.
    pub kernel: Vec<Vec<f64>>,
    #[serde(default)]
    pub restart_eps: f64,
    #[serde(default)]
    pub lmax: Option<usize>,
}

/// Markov chain of order 1 or 2 over `S ∪ {stop}` with restart events.
///
/// Each step restarts with probability `eps`, drawing the next symbol
/// uniformly from `S` with no chance of stopping; otherwise the declared
/// row (stop mass included) is used. The first symbol is drawn the same way
/// from `init`. When `lmax` is set the law is conditioned on `l <= lmax`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MarkovChainDoc", into = "MarkovChainDoc")]
pub struct MarkovChainModel {
    doc: MarkovChainDoc,
    // Effective per-step probabilities after the restart mixture.
    init_eff: Vec<f64>,
    first_eff: Vec<Vec<f64>>,
    kernel_eff: Vec<Vec<f64>>,
    log_init: Vec<f64>,
    log_first: Vec<Vec<f64>>,
    log_kernel: Vec<Vec<f64>>,
    /// `log P(l <= lmax)` of the untruncated chain (0 when unbounded).
    log_norm: f64,
}

impl TryFrom<MarkovChainDoc> for MarkovChainModel {
    type Error = ModelError;
    fn try_from(doc: MarkovChainDoc) -> Result<Self, ModelError> {
        MarkovChainModel::from_doc(doc)
    }
}

impl From<MarkovChainModel> for MarkovChainDoc {
    fn from(m: MarkovChainModel) -> Self {
        m.doc
    }
}

fn mix_row(row: &[f64], eps: f64, m: usize, with_stop: bool) -> Vec<f64> {
    let mut out: Vec<f64> = row.iter().map(|p| (1.0 - eps) * p).collect();
    for p in out.iter_mut().take(m) {
        *p += eps / m as f64;
    }
    debug_assert!(with_stop || out.len() == m);
    out
}

impl MarkovChainModel {
    pub fn new(
        alphabet: Alphabet,
        order: MarkovOrder,
        init: Vec<f64>,
        first_step: Option<Vec<Vec<f64>>>,
        kernel: Vec<Vec<f64>>,
        restart_eps: f64,
        lmax: Option<usize>,
    ) -> Result<Self, ModelError> {
        Self::from_doc(MarkovChainDoc { alphabet, order, init, first_step, kernel, restart_eps, lmax })
    }

    fn from_doc(doc: MarkovChainDoc) -> Result<Self, ModelError> {
        let m = doc.alphabet.size;
        if !(0.0..=0.01).contains(&doc.restart_eps) {
            return Err(ModelError::InvalidParameter(format!("restart_eps {} outside [0, 0.01]", doc.restart_eps)));
        }
        if doc.lmax == Some(0) {
            return Err(ModelError::InvalidParameter("lmax must be at least 1".into()));
        }
        if doc.init.len() != m {
            return Err(ModelError::InvalidParameter(format!("init has {} entries, expected {m}", doc.init.len())));
        }
        validate_distribution("init", &doc.init)?;
        let rows_expected = match doc.order {
            MarkovOrder::First => m,
            MarkovOrder::Second => m * m,
        };
        if doc.kernel.len() != rows_expected {
            return Err(ModelError::InvalidParameter(format!(
                "kernel has {} rows, expected {rows_expected}",
                doc.kernel.len()
            )));
        }
        let check_rows = |name: &str, rows: &[Vec<f64>]| -> Result<(), ModelError> {
            for (i, row) in rows.iter().enumerate() {
                if row.len() != m + 1 {
                    return Err(ModelError::InvalidParameter(format!("{name} row {i} has {} entries", row.len())));
                }
                validate_distribution(&format!("{name} row {i}"), row)?;
            }
            Ok(())
        };
        check_rows("kernel", &doc.kernel)?;
        match (doc.order, &doc.first_step) {
            (MarkovOrder::Second, Some(first)) => {
                if first.len() != m {
                    return Err(ModelError::InvalidParameter("first_step needs one row per symbol".into()));
                }
                check_rows("first_step", first)?;
            }
            (MarkovOrder::Second, None) => {
                return Err(ModelError::InvalidParameter("order-2 chains need a first_step kernel".into()))
            }
            (MarkovOrder::First, Some(_)) => {
                return Err(ModelError::InvalidParameter("first_step is only used by order-2 chains".into()))
            }
            (MarkovOrder::First, None) => {}
        }

        let eps = doc.restart_eps;
        let init_eff = mix_row(&doc.init, eps, m, false);
        let first_eff: Vec<Vec<f64>> =
            doc.first_step.iter().flatten().map(|r| mix_row(r, eps, m, true)).collect();
        let kernel_eff: Vec<Vec<f64>> = doc.kernel.iter().map(|r| mix_row(r, eps, m, true)).collect();
        let ln = |v: &Vec<f64>| v.iter().map(|p| p.ln()).collect::<Vec<f64>>();
        let mut model = Self {
            log_init: ln(&init_eff),
            log_first: first_eff.iter().map(ln).collect(),
            log_kernel: kernel_eff.iter().map(ln).collect(),
            init_eff,
            first_eff,
            kernel_eff,
            doc,
            log_norm: 0.0,
        };
        if let Some(lmax) = model.doc.lmax {
            let p = model.length_cdf(lmax);
            if p <= 0.0 {
                return Err(ModelError::InvalidParameter("no mass on lengths <= lmax".into()));
            }
            model.log_norm = p.ln();
        }
        Ok(model)
    }

    pub fn order(&self) -> MarkovOrder {
        self.doc.order
    }

    pub fn restart_eps(&self) -> f64 {
        self.doc.restart_eps
    }

    pub fn init(&self) -> &[f64] {
        &self.doc.init
    }

    pub fn kernel(&self) -> &[Vec<f64>] {
        &self.doc.kernel
    }

    pub fn first_step(&self) -> Option<&[Vec<f64>]> {
        self.doc.first_step.as_deref()
    }

    pub fn lmax(&self) -> Option<usize> {
        self.doc.lmax
    }

    pub fn doc(&self) -> &MarkovChainDoc {
        &self.doc
    }

    /// Same chain with a different length bound.
    pub fn with_lmax(&self, lmax: Option<usize>) -> Result<Self, ModelError> {
        Self::from_doc(MarkovChainDoc { lmax, ..self.doc.clone() })
    }

    /// Untruncated log-probability of `x` (no conditioning on `lmax`).
    fn raw_log_prob(&self, x: &Sequence) -> f64 {
        let s = x.symbols();
        let m = self.doc.alphabet.size;
        let mut lp = self.log_init[s[0] as usize];
        match self.doc.order {
            MarkovOrder::First => {
                for w in s.windows(2) {
                    lp += self.log_kernel[w[0] as usize][w[1] as usize];
                }
                lp += self.log_kernel[x.last() as usize][m];
            }
            MarkovOrder::Second => {
                if s.len() == 1 {
                    return lp + self.log_first[s[0] as usize][m];
                }
                lp += self.log_first[s[0] as usize][s[1] as usize];
                for w in s.windows(3) {
                    lp += self.log_kernel[w[0] as usize * m + w[1] as usize][w[2] as usize];
                }
                let l = s.len();
                lp += self.log_kernel[s[l - 2] as usize * m + s[l - 1] as usize][m];
            }
        }
        lp
    }

    /// Log-factor emitted at position `i` of `s`; `i == s.len()` is the stop.
    fn term(&self, s: &[Symbol], i: usize) -> f64 {
        let m = self.doc.alphabet.size;
        let c = if i < s.len() { s[i] as usize } else { m };
        match (self.doc.order, i) {
            (_, 0) => self.log_init[c],
            (MarkovOrder::First, _) => self.log_kernel[s[i - 1] as usize][c],
            (MarkovOrder::Second, 1) => self.log_first[s[0] as usize][c],
            (MarkovOrder::Second, _) => self.log_kernel[s[i - 2] as usize * m + s[i - 1] as usize][c],
        }
    }

    /// `P(l <= len)` for the untruncated chain, by forward recursion on the
    /// state distribution.
    pub fn length_cdf(&self, len: usize) -> f64 {
        self.length_pmf(len).iter().sum()
    }

    /// Untruncated `P(l = 1), .., P(l = len)`.
    pub fn length_pmf(&self, len: usize) -> Vec<f64> {
        let m = self.doc.alphabet.size;
        let mut pmf = Vec::with_capacity(len);
        match self.doc.order {
            MarkovOrder::First => {
                let mut alive = self.init_eff.clone();
                for step in 0..len {
                    pmf.push(alive.iter().zip(&self.kernel_eff).map(|(a, row)| a * row[m]).sum());
                    if step + 1 == len {
                        break;
                    }
                    let mut next = vec![0.0; m];
                    for (a, row) in alive.iter().zip(&self.kernel_eff) {
                        if *a == 0.0 {
                            continue;
                        }
                        for (n, p) in next.iter_mut().zip(row) {
                            *n += a * p;
                        }
                    }
                    alive = next;
                }
            }
            MarkovOrder::Second => {
                pmf.push(self.init_eff.iter().zip(&self.first_eff).map(|(a, row)| a * row[m]).sum());
                let mut alive = vec![0.0; m * m];
                for (a, (p0, row)) in self.init_eff.iter().zip(&self.first_eff).enumerate() {
                    for b in 0..m {
                        alive[a * m + b] = p0 * row[b];
                    }
                }
                for step in 1..len {
                    pmf.push(alive.iter().zip(&self.kernel_eff).map(|(a, row)| a * row[m]).sum());
                    if step + 1 == len {
                        break;
                    }
                    let mut next = vec![0.0; m * m];
                    for (state, (a, row)) in alive.iter().zip(&self.kernel_eff).enumerate() {
                        if *a == 0.0 {
                            continue;
                        }
                        let cur = state % m;
                        for (c, p) in row.iter().take(m).enumerate() {
                            next[cur * m + c] += a * p;
                        }
                    }
                    alive = next;
                }
            }
        }
        pmf.truncate(len);
        pmf
    }

    fn sample_once(&self, rng: &mut dyn RngCore) -> Option<Sequence> {
        let m = self.doc.alphabet.size;
        let eps = self.doc.restart_eps;
        let cap = self.doc.lmax.unwrap_or(usize::MAX);
        let draw_from = |row: &[f64], rng: &mut dyn RngCore| -> usize {
            if eps > 0.0 && rng.random::<f64>() < eps {
                rng.random_range(0..m)
            } else {
                draw_categorical(row, rng)
            }
        };
        let mut out: Vec<Symbol> = vec![draw_from(&self.doc.init, rng) as Symbol];
        loop {
            let row = match (self.doc.order, out.len()) {
                (MarkovOrder::First, _) => &self.doc.kernel[out[out.len() - 1] as usize],
                (MarkovOrder::Second, 1) => &self.doc.first_step.as_ref().expect("validated")[out[0] as usize],
                (MarkovOrder::Second, l) => &self.doc.kernel[out[l - 2] as usize * m + out[l - 1] as usize],
            };
            let next = draw_from(row, rng);
            if next == m {
                return Some(Sequence::new(out).expect("non-empty"));
            }
            if out.len() == cap {
                return None;
            }
            out.push(next as Symbol);
        }
    }
}

impl ScoredModel for MarkovChainModel {
    fn alphabet(&self) -> Alphabet {
        self.doc.alphabet
    }

    fn max_len(&self) -> Option<usize> {
        self.doc.lmax
    }

    fn log_mass(&self, x: &Sequence) -> Result<f64, ModelError> {
        check_in_space(x, &self.doc.alphabet, self.doc.lmax)?;
        let lp = self.raw_log_prob(x);
        if lp == f64::NEG_INFINITY {
            return Err(ModelError::ZeroMass);
        }
        Ok(lp - self.log_norm)
    }

    fn log_mass_ratio(&self, y: &Sequence, x: &Sequence) -> Result<f64, ModelError> {
        check_in_space(y, &self.doc.alphabet, self.doc.lmax)?;
        check_in_space(x, &self.doc.alphabet, self.doc.lmax)?;
        let (xs, ys) = (x.symbols(), y.symbols());
        let (pre, suf) = common_ends(xs, ys);
        // Factors whose window lies inside the shared prefix or suffix cancel.
        let r = usize::from(u8::from(self.doc.order));
        let span = |s: &[Symbol]| pre..(s.len() + r - suf).min(s.len() + 1);
        let d = span(ys).map(|i| self.term(ys, i)).sum::<f64>() - span(xs).map(|i| self.term(xs, i)).sum::<f64>();
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
        for _ in 0..REJECTION_CAP {
            if let Some(x) = self.sample_once(rng) {
                return Ok(x);
            }
        }
        Err(ModelError::RejectionCapExceeded(REJECTION_CAP))
    }

    fn is_normalized(&self) -> bool {
        true
    }

    fn label(&self) -> String {
        format!("markov{}(m={})", u8::from(self.doc.order), self.doc.alphabet.size)
    }
}

/// Smallest `L` with `(1 - (1 - eps) / mean)^L <= tail`: the length bound
/// making the truncated mass of a constant-stop chain at most `tail`.
pub fn geometric_lmax(mean: f64, eps: f64, tail: f64) -> usize {
    let stop = (1.0 - eps) / mean;
    if stop >= 1.0 {
        return 1;
    }
    (tail.ln() / (1.0 - stop).ln()).ceil().max(1.0) as usize
}

/// Random chain with Dirichlet(alpha) rows and constant stop probability
/// `1 / mean_len`.
pub fn random_markov_chain(
    alphabet: Alphabet,
    order: MarkovOrder,
    alpha: f64,
    mean_len: f64,
    restart_eps: f64,
    lmax: Option<usize>,
    rng: &mut dyn RngCore,
) -> Result<MarkovChainModel, ModelError> {
    if !(alpha > 0.0) || !(mean_len > 1.0) {
        return Err(ModelError::InvalidParameter(format!("need alpha > 0 and mean_len > 1, got {alpha}, {mean_len}")));
    }
    let m = alphabet.size;
    let stop = 1.0 / mean_len;
    let row = |rng: &mut dyn RngCore| -> Vec<f64> {
        let mut r: Vec<f64> = draw_dirichlet(alpha, m, rng).into_iter().map(|p| p * (1.0 - stop)).collect();
        r.push(stop);
        r
    };
    let init = draw_dirichlet(alpha, m, rng);
    let (first_step, rows) = match order {
        MarkovOrder::First => (None, m),
        MarkovOrder::Second => (Some((0..m).map(|_| row(rng)).collect()), m * m),
    };
    let kernel = (0..rows).map(|_| row(rng)).collect();
    MarkovChainModel::new(alphabet, order, init, first_step, kernel, restart_eps, lmax)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqspace::{derive_stream, enumerate_space};
    use crate::seq;

    fn alternating(eps: f64, lmax: Option<usize>) -> MarkovChainModel {
        let lambda = 20.0;
        let kernel = vec![vec![0.0, 1.0 - 1.0 / lambda, 1.0 / lambda], vec![1.0 - 1.0 / lambda, 0.0, 1.0 / lambda]];
        MarkovChainModel::new(Alphabet::new(2).unwrap(), MarkovOrder::First, vec![0.5, 0.5], None, kernel, eps, lmax)
            .unwrap()
    }

    #[test]
    fn alternating_chain_samples_alternate() {
        let model = alternating(0.0, None);
        let mut rng = derive_stream(5, &["alt".into()]);
        for _ in 0..500 {
            let x = model.sample(&mut rng).unwrap();
            assert!(x.symbols().windows(2).all(|w| w[0] != w[1]), "{x:?}");
        }
    }

    #[test]
    fn zero_mass_without_restart_and_finite_with() {
        let x = seq![0, 0];
        assert_eq!(alternating(0.0, None).log_mass(&x), Err(ModelError::ZeroMass));
        assert!(alternating(1e-3, Some(50)).log_mass(&x).unwrap().is_finite());
    }

    #[test]
    fn normalized_over_truncated_space() {
        let mut rng = derive_stream(9, &["norm".into()]);
        for (m, order, lmax) in [(2, MarkovOrder::First, 4), (3, MarkovOrder::Second, 4), (2, MarkovOrder::Second, 5)] {
            let alphabet = Alphabet::new(m).unwrap();
            let chain = random_markov_chain(alphabet, order, 1.0, 2.5, 1e-3, Some(lmax), &mut rng).unwrap();
            let total: f64 = enumerate_space(&alphabet, lmax).iter().map(|x| chain.log_mass(x).unwrap().exp()).sum();
            assert!((total - 1.0).abs() < 1e-10, "{total}");
        }
    }

    #[test]
    fn local_ratio_matches_full_difference() {
        let mut rng = derive_stream(11, &["ratio".into()]);
        for order in [MarkovOrder::First, MarkovOrder::Second] {
            let alphabet = Alphabet::new(3).unwrap();
            let chain = random_markov_chain(alphabet, order, 0.8, 3.0, 1e-3, Some(4), &mut rng).unwrap();
            let space = enumerate_space(&alphabet, 4);
            for x in &space {
                for y in &space {
                    let full = chain.log_mass(y).unwrap() - chain.log_mass(x).unwrap();
                    assert!((chain.log_mass_ratio(y, x).unwrap() - full).abs() < 1e-10, "{x:?} {y:?}");
                }
            }
        }
    }

    #[test]
    fn length_pmf_matches_enumeration() {
        let mut rng = derive_stream(10, &["pmf".into()]);
        let alphabet = Alphabet::new(2).unwrap();
        let chain = random_markov_chain(alphabet, MarkovOrder::Second, 0.7, 3.0, 2e-3, None, &mut rng).unwrap();
        let pmf = chain.length_pmf(4);
        for (l, p) in pmf.iter().enumerate() {
            let brute: f64 = enumerate_space(&alphabet, 4)
                .iter()
                .filter(|x| x.len() == l + 1)
                .map(|x| chain.log_mass(x).unwrap().exp())
                .sum();
            assert!((brute - p).abs() < 1e-13);
        }
    }

    #[test]
    fn random_chain_is_seed_deterministic_and_rows_sum_to_one() {
        let alphabet = Alphabet::new(4).unwrap();
        let mk = || {
            let mut rng = derive_stream(77, &["chain".into()]);
            random_markov_chain(alphabet, MarkovOrder::Second, 1.0, 8.0, 1e-3, Some(200), &mut rng).unwrap()
        };
        let (a, b) = (mk(), mk());
        assert_eq!(a, b);
        for row in a.kernel().iter().chain(a.first_step().unwrap()) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((row[4] - 1.0 / 8.0).abs() < 1e-15);
        }
    }

    #[test]
    fn geometric_mean_length() {
        let alphabet = Alphabet::new(3).unwrap();
        let mut rng = derive_stream(12, &["len".into()]);
        let chain = random_markov_chain(alphabet, MarkovOrder::First, 1.0, 8.0, 0.0, Some(geometric_lmax(8.0, 0.0, 1e-9)), &mut rng)
            .unwrap();
        let n = 100_000;
        let mean = (0..n).map(|_| chain.sample(&mut rng).unwrap().len()).sum::<usize>() as f64 / n as f64;
        // sd of a geometric(1/8) length is sqrt(56) ~ 7.5, so the Monte-Carlo sd is ~0.024.
        assert!((mean - 8.0).abs() < 0.1, "{mean}");
    }

    #[test]
    fn rejects_bad_parameters() {
        let a = Alphabet::new(2).unwrap();
        let row = vec![0.5, 0.25, 0.25];
        assert!(MarkovChainModel::new(a, MarkovOrder::First, vec![0.5, 0.5], None, vec![row.clone(); 2], 0.02, None).is_err());
        assert!(MarkovChainModel::new(a, MarkovOrder::First, vec![0.6, 0.5], None, vec![row.clone(); 2], 0.0, None).is_err());
        assert!(MarkovChainModel::new(a, MarkovOrder::Second, vec![0.5, 0.5], None, vec![row; 4], 0.0, None).is_err());
        let mut rng = derive_stream(1, &[]);
        assert!(random_markov_chain(a, MarkovOrder::First, 0.0, 5.0, 0.0, None, &mut rng).is_err());
        assert!(random_markov_chain(a, MarkovOrder::First, 1.0, 1.0, 0.0, None, &mut rng).is_err());
    }

    #[test]
    fn geometric_lmax_bounds_tail() {
        let l = geometric_lmax(30.0, 1e-3, 1e-9);
        let stop: f64 = (1.0 - 1e-3) / 30.0;
        assert!((1.0 - stop).powi(l as i32) <= 1e-9);
        assert!((1.0 - stop).powi(l as i32 - 1) > 1e-9);
    }
}
