use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{draw_categorical, AnyModel, ModelError, ScoredModel};
use crate::scalar::log_sum_exp;
use crate::seqspace::{Alphabet, Sequence};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureDoc {
    pub components: Vec<AnyModel>,
    pub weights: Vec<f64>,
}

/// Sequence-level mixture: pick a component, then draw a whole sequence.
///
/// When every component is normalised the mass is the exact mixture mass.
/// Otherwise the components' unnormalised masses are mixed as given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureDoc", into = "MixtureDoc")]
pub struct MixtureModel {
    doc: MixtureDoc,
    log_weights: Vec<f64>,
}

impl TryFrom<MixtureDoc> for MixtureModel {
    type Error = ModelError;
    fn try_from(doc: MixtureDoc) -> Result<Self, ModelError> {
        MixtureModel::new(doc.components, doc.weights)
    }
}

impl From<MixtureModel> for MixtureDoc {
    fn from(m: MixtureModel) -> Self {
        m.doc
    }
}

impl MixtureModel {
    pub fn new(components: Vec<AnyModel>, weights: Vec<f64>) -> Result<Self, ModelError> {
        if components.is_empty() || components.len() != weights.len() {
            return Err(ModelError::InvalidParameter("mixture needs one weight per component".into()));
        }
        super::validate_distribution("mixture weights", &weights)?;
        let alphabet = components[0].alphabet();
        if components.iter().any(|c| c.alphabet().size != alphabet.size) {
            return Err(ModelError::InvalidParameter("mixture components must share an alphabet".into()));
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self { doc: MixtureDoc { components, weights }, log_weights })
    }

    pub fn components(&self) -> &[AnyModel] {
        &self.doc.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.doc.weights
    }
}

impl ScoredModel for MixtureModel {
    fn alphabet(&self) -> Alphabet {
        self.doc.components[0].alphabet()
    }

    fn max_len(&self) -> Option<usize> {
        self.doc.components.iter().map(|c| c.max_len()).try_fold(0, |acc, l| l.map(|l| acc.max(l)))
    }

    fn log_mass(&self, x: &Sequence) -> Result<f64, ModelError> {
        let normalized = self.is_normalized();
        let mut terms = Vec::with_capacity(self.doc.components.len());
        for (c, lw) in self.doc.components.iter().zip(&self.log_weights) {
            if *lw == f64::NEG_INFINITY {
                continue;
            }
            let v = if normalized { c.log_mass_normalized(x) } else { c.log_mass(x) };
            match v {
                Ok(v) => terms.push(lw + v),
                Err(ModelError::ZeroMass) | Err(ModelError::OutsideSpace { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        if terms.is_empty() {
            return Err(ModelError::ZeroMass);
        }
        Ok(log_sum_exp(&terms))
    }

    fn can_sample(&self) -> bool {
        self.doc.components.iter().zip(&self.doc.weights).all(|(c, &w)| w == 0.0 || c.can_sample())
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Result<Sequence, ModelError> {
        let i = draw_categorical(&self.doc.weights, rng);
        self.doc.components[i].sample(rng)
    }

    fn is_normalized(&self) -> bool {
        self.doc.components.iter().all(|c| c.is_normalized())
    }

    fn label(&self) -> String {
        format!("mixture({})", self.doc.components.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{IidModel, LengthLaw};
    use crate::seqspace::enumerate_space;

    #[test]
    fn mixture_of_normalized_models_is_normalized() {
        let law = LengthLaw::Geometric { mean: 2.0 };
        let a = IidModel::bernoulli(0.3, law, 0.0, 4).unwrap();
        let b = IidModel::bernoulli(0.8, law, 0.0, 4).unwrap();
        let mix = MixtureModel::new(vec![a.clone().into(), b.into()], vec![0.25, 0.75]).unwrap();
        let space = enumerate_space(&Alphabet::new(2).unwrap(), 4);
        let total: f64 = space.iter().map(|x| mix.log_mass(x).unwrap().exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let only_a = MixtureModel::new(vec![a.clone().into()], vec![1.0]).unwrap();
        for x in &space {
            assert!((only_a.log_mass(x).unwrap() - a.log_mass(x).unwrap()).abs() < 1e-15);
        }
    }
}
