use super::{MarkovChainModel, MarkovOrder, ModelError};
use crate::seqspace::{Alphabet, Sequence};

/// Transition counts of `data` for a chain of the given order.
struct Counts {
    init: Vec<f64>,
    first: Vec<Vec<f64>>,
    kernel: Vec<Vec<f64>>,
}

fn count(data: &[Sequence], order: MarkovOrder, m: usize) -> Counts {
    let rows = match order {
        MarkovOrder::First => m,
        MarkovOrder::Second => m * m,
    };
    let mut c = Counts { init: vec![0.0; m], first: vec![vec![0.0; m + 1]; m], kernel: vec![vec![0.0; m + 1]; rows] };
    for x in data {
        let s: Vec<usize> = x.symbols().iter().map(|&v| v as usize).collect();
        let l = s.len();
        c.init[s[0]] += 1.0;
        match order {
            MarkovOrder::First => {
                for w in s.windows(2) {
                    c.kernel[w[0]][w[1]] += 1.0;
                }
                c.kernel[s[l - 1]][m] += 1.0;
            }
            MarkovOrder::Second => {
                if l == 1 {
                    c.first[s[0]][m] += 1.0;
                    continue;
                }
                c.first[s[0]][s[1]] += 1.0;
                for w in s.windows(3) {
                    c.kernel[w[0] * m + w[1]][w[2]] += 1.0;
                }
                c.kernel[s[l - 2] * m + s[l - 1]][m] += 1.0;
            }
        }
    }
    c
}

/// Empirical frequencies; rows with no observations become uniform.
fn normalize(row: &[f64]) -> Vec<f64> {
    let total: f64 = row.iter().sum();
    if total == 0.0 {
        vec![1.0 / row.len() as f64; row.len()]
    } else {
        row.iter().map(|c| c / total).collect()
    }
}

/// `sum c log(c / total)` with `0 log 0 = 0`.
fn row_log_likelihood(row: &[f64]) -> f64 {
    let total: f64 = row.iter().sum();
    row.iter().filter(|&&c| c > 0.0).map(|c| c * (c / total).ln()).sum()
}

/// Maximum-likelihood chain of the given order, without restarts or a
/// length bound.
pub fn fit_markov_mle(data: &[Sequence], order: MarkovOrder, alphabet: Alphabet) -> Result<MarkovChainModel, ModelError> {
    if data.is_empty() {
        return Err(ModelError::InvalidParameter("cannot fit a chain to an empty data set".into()));
    }
    for x in data {
        x.check(&alphabet)?;
    }
    let c = count(data, order, alphabet.size);
    let first_step = match order {
        MarkovOrder::First => None,
        MarkovOrder::Second => Some(c.first.iter().map(|r| normalize(r)).collect()),
    };
    MarkovChainModel::new(
        alphabet,
        order,
        normalize(&c.init),
        first_step,
        c.kernel.iter().map(|r| normalize(r)).collect(),
        0.0,
        None,
    )
}

/// Log-likelihood of `data` under its own maximum-likelihood chain.
pub fn markov_log_likelihood(data: &[Sequence], order: MarkovOrder, alphabet: Alphabet) -> f64 {
    let c = count(data, order, alphabet.size);
    let mut ll = row_log_likelihood(&c.init);
    if order == MarkovOrder::Second {
        ll += c.first.iter().map(|r| row_log_likelihood(r)).sum::<f64>();
    }
    ll + c.kernel.iter().map(|r| row_log_likelihood(r)).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{random_markov_chain, sample_n, ScoredModel};
    use crate::seq;
    use crate::seqspace::derive_stream;

    #[test]
    fn hand_computed_fit() {
        let data = vec![seq![0], seq![0], seq![1]];
        let a = Alphabet::new(2).unwrap();
        let fit = fit_markov_mle(&data, MarkovOrder::First, a).unwrap();
        assert!((fit.init()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(fit.kernel()[0][2], 1.0);
        assert_eq!(fit.kernel()[1][2], 1.0);
        let ll = markov_log_likelihood(&data, MarkovOrder::First, a);
        assert!((ll - (2.0 * (2.0f64 / 3.0).ln() + (1.0f64 / 3.0).ln())).abs() < 1e-12);
        assert!((ll + 1.90954).abs() < 1e-5);
        let direct: f64 = data.iter().map(|x| fit.log_mass(x).unwrap()).sum();
        assert!((direct - ll).abs() < 1e-12);
    }

    #[test]
    fn single_sequence_fit() {
        let a = Alphabet::new(2).unwrap();
        let fit = fit_markov_mle(&[seq![0, 1]], MarkovOrder::First, a).unwrap();
        assert_eq!(fit.init(), &[1.0, 0.0]);
        assert_eq!(fit.kernel()[0], vec![0.0, 1.0, 0.0]);
        assert_eq!(fit.kernel()[1], vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn mle_dominates_random_models() {
        let a = Alphabet::new(3).unwrap();
        let mut rng = derive_stream(21, &["mle".into()]);
        for order in [MarkovOrder::First, MarkovOrder::Second] {
            let truth = random_markov_chain(a, order, 1.0, 4.0, 1e-3, None, &mut rng).unwrap();
            let data = sample_n(&truth, 40, &mut rng).unwrap();
            let best = markov_log_likelihood(&data, order, a);
            let fit = fit_markov_mle(&data, order, a).unwrap();
            let direct: f64 = data.iter().map(|x| fit.log_mass(x).unwrap()).sum();
            assert!((direct - best).abs() < 1e-9);
            for _ in 0..100 {
                let other = random_markov_chain(a, order, 1.0, 4.0, 1e-3, None, &mut rng).unwrap();
                let ll: f64 = data.iter().map(|x| other.log_mass(x).unwrap()).sum();
                assert!(ll <= best + 1e-9);
            }
        }
    }
}
