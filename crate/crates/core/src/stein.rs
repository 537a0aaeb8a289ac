//! Balancing functions, the Zanella-Stein operator, Stein kernels and KSD
//! estimators.
//!
//! For a model `p`, neighbourhood `N` and balancing function `g`, the
//! operator is `(A f)(x) = sum_{y in N(x)} g(p(y)/p(x)) (f(y) - f(x))` and the
//! Stein kernel is `h(x, y) = <A_x A_y k>`. When the base kernel has a finite
//! feature map `phi`, `h(x, y) = <xi(x), xi(y)>` with
//! `xi(x) = sum_nu g_nu (phi(nu x) - phi(x))`, which is the fast path used
//! for large samples.

use std::collections::HashMap;
use std::io::{self, Write};
use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use crate::kernels::SparseVector;
use crate::kernels::{gram_counts, pack_window, fingerprint_points, FeatureKey, GramMatrix, KernelConfig};
use crate::models::{ModelError, ScoredModel};
use crate::neighborhoods::{Neighborhood, NeighborhoodError};
use crate::scalar::Real;
use crate::seqspace::Sequence;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalancingKind {
    /// `g(t) = t / (1 + t)`.
    Barker,
    /// `g(t) = sqrt(t)` (minimum probability flow).
    Mpf,
}

impl BalancingKind {
    pub fn short_label(&self) -> &'static str {
        match self {
            BalancingKind::Barker => "barker",
            BalancingKind::Mpf => "mpf",
        }
    }
}

static MPF_SATURATION_WARNED: AtomicBool = AtomicBool::new(false);

/// `g(e^delta)` for `delta = log p(y) - log p(x)`, evaluated without forming
/// either mass. MPF weights that overflow saturate at the largest finite
/// value of `T` (a warning is logged once).
pub fn balancing_weight<T: Real>(kind: BalancingKind, delta: f64) -> T {
    match kind {
        BalancingKind::Barker => {
            let w = if delta >= 0.0 {
                1.0 / (1.0 + (-delta).exp())
            } else {
                let e = delta.exp();
                e / (1.0 + e)
            };
            T::of(w)
        }
        BalancingKind::Mpf => {
            let w = T::of((0.5 * delta).exp());
            if w.is_finite() {
                w
            } else {
                if !MPF_SATURATION_WARNED.swap(true, Ordering::Relaxed) {
                    log::warn!("MPF balancing weight overflowed at log-ratio {delta}; saturating");
                }
                T::max_value()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum SteinError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Neighborhood(#[from] NeighborhoodError),
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("weight vector has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

/// The pieces defining a Stein operator and kernel.
#[derive(Clone, Copy)]
pub struct SteinSetup<'a> {
    pub model: &'a dyn ScoredModel,
    pub neighborhood: &'a dyn Neighborhood,
    pub kernel: KernelConfig,
    pub balancing: BalancingKind,
}

/// Neighbours of a point with their (multiplicity-scaled) balancing weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Stencil<T> {
    pub x: Sequence,
    pub neighbors: Vec<(Sequence, T)>,
}

impl<T: Real> Stencil<T> {
    pub fn total_weight(&self) -> T {
        self.neighbors.iter().map(|(_, g)| *g).sum()
    }
}

impl<'a> SteinSetup<'a> {
    pub fn new(
        model: &'a dyn ScoredModel,
        neighborhood: &'a dyn Neighborhood,
        kernel: KernelConfig,
        balancing: BalancingKind,
    ) -> Self {
        Self { model, neighborhood, kernel, balancing }
    }

    pub fn stencil<T: Real>(&self, x: &Sequence) -> Result<Stencil<T>, SteinError> {
        // Validates x against the model space as a side effect.
        self.model.log_mass(x)?;
        let neighbors = self
            .neighborhood
            .neighbors(x)?
            .into_iter()
            .map(|nb| {
                let delta = self.model.log_mass_ratio(&nb.seq, x)?;
                let g: T = balancing_weight(self.balancing, delta);
                Ok((nb.seq, g * T::of(nb.multiplicity as f64)))
            })
            .collect::<Result<Vec<_>, SteinError>>()?;
        Ok(Stencil { x: x.clone(), neighbors })
    }

    /// `(A f)(x)`.
    pub fn apply_operator(&self, f: &dyn Fn(&Sequence) -> f64, x: &Sequence) -> Result<f64, SteinError> {
        let st: Stencil<f64> = self.stencil(x)?;
        let fx = f(x);
        Ok(st.neighbors.iter().map(|(y, g)| g * (f(y) - fx)).sum())
    }

    /// `h(x, y)` by direct summation over both neighbourhoods.
    pub fn stein_kernel<T: Real>(&self, x: &Sequence, y: &Sequence) -> Result<T, SteinError> {
        Ok(stencil_kernel(&self.kernel, &self.stencil(x)?, &self.stencil(y)?))
    }

    /// `xi(x)`, or `None` when the kernel has no finite feature map.
    pub fn stein_features<T: Real>(&self, x: &Sequence) -> Result<Option<SparseVector<T>>, SteinError> {
        if !self.kernel.has_feature_map() {
            return Ok(None);
        }
        Ok(Some(stencil_features(&self.kernel, &self.stencil(x)?)))
    }

    fn metadata(&self) -> SteinGramMeta {
        SteinGramMeta {
            model: self.model.label(),
            kernel: self.kernel,
            neighborhood: self.neighborhood.label(),
            balancing: self.balancing,
            data_sha256: String::new(),
        }
    }

    /// Stein Gram matrix of `data`.
    pub fn stein_gram<T: Real>(&self, data: &[Sequence], route: GramRoute) -> Result<SteinGram<T>, SteinError> {
        if data.is_empty() {
            return Err(SteinError::TooFewPoints { need: 1, got: 0 });
        }
        let stencils: Vec<Stencil<T>> = data.par_iter().map(|x| self.stencil(x)).collect::<Result<_, _>>()?;
        let mut meta = self.metadata();
        meta.data_sha256 = fingerprint_points(data);
        let use_features = match route {
            GramRoute::Direct => false,
            GramRoute::Features => {
                assert!(self.kernel.has_feature_map(), "feature route requested for a kernel without a feature map");
                true
            }
            GramRoute::Auto => self.kernel.has_feature_map(),
        };
        let fp = meta.data_sha256.clone();
        let (matrix, bank) = if use_features {
            let feats: Vec<SparseVector<T>> = stencils.par_iter().map(|s| stencil_features(&self.kernel, s)).collect();
            let m = GramMatrix::from_fn(data.len(), fp, |i, j| feats[i].dot(&feats[j]));
            (m, Some(FeatureBank::new(&feats)))
        } else {
            let m = GramMatrix::from_fn(data.len(), fp, |i, j| stencil_kernel(&self.kernel, &stencils[i], &stencils[j]));
            (m, None)
        };
        Ok(SteinGram { matrix, meta, bank })
    }

    /// U-statistic of `data` without materialising the Gram matrix when a
    /// feature map is available.
    pub fn ksd_ustat_fast(&self, data: &[Sequence]) -> Result<f64, SteinError> {
        if data.len() < 2 {
            return Err(SteinError::TooFewPoints { need: 2, got: data.len() });
        }
        if self.kernel.has_feature_map() {
            let feats: Vec<SparseVector<f64>> = data
                .par_iter()
                .map(|x| Ok(stencil_features(&self.kernel, &self.stencil(x)?)))
                .collect::<Result<_, SteinError>>()?;
            Ok(FeatureBank::new(&feats).ustat())
        } else {
            Ok(self.stein_gram::<f64>(data, GramRoute::Direct)?.ksd_ustat()?)
        }
    }
}

/// `h` from two precomputed stencils:
/// `sum g g' k(nu x, nu' y) + G G' k(x, y) - G sum g' k(x, nu' y) - G' sum g k(nu x, y)`.
pub fn stencil_kernel<T: Real>(kernel: &KernelConfig, a: &Stencil<T>, b: &Stencil<T>) -> T {
    let (ga, gb) = (a.total_weight(), b.total_weight());
    let mut cross = T::zero();
    for (u, gu) in &a.neighbors {
        let mut inner = T::zero();
        for (v, gv) in &b.neighbors {
            inner += *gv * kernel.eval::<T>(u, v);
        }
        cross += *gu * inner;
    }
    let left: T = b.neighbors.iter().map(|(v, gv)| *gv * kernel.eval::<T>(&a.x, v)).sum();
    let right: T = a.neighbors.iter().map(|(u, gu)| *gu * kernel.eval::<T>(u, &b.x)).sum();
    cross + ga * gb * kernel.eval::<T>(&a.x, &b.x) - ga * left - gb * right
}

/// `xi(x) = sum_nu g_nu phi(nu x) - G phi(x)`.
pub fn stencil_features<T: Real>(kernel: &KernelConfig, s: &Stencil<T>) -> SparseVector<T> {
    assert!(kernel.has_feature_map(), "kernel has a feature map");
    if let KernelConfig::Csk { t } = *kernel {
        if t <= 8 && s.x.len() >= t {
            return csk_stencil_features(t, s);
        }
    }
    let mut entries: Vec<(FeatureKey, T)> = Vec::new();
    for (y, g) in &s.neighbors {
        kernel.accumulate_features(y, *g, &mut entries);
    }
    kernel.accumulate_features(&s.x, -s.total_weight(), &mut entries);
    SparseVector::from_entries(entries)
}

/// CSK stencil features from count differences.
///
/// A neighbour `y` shares with `x` every window inside their common prefix
/// or common suffix, so `c(y) = c(x) + d_y` with `d_y` supported on the few
/// windows crossing the edit. Then
/// `xi = c(x) (sum_y g_y / |c(y)| - G / |c(x)|) + sum_y (g_y / |c(y)|) d_y`.
fn csk_stencil_features<T: Real>(t: usize, s: &Stencil<T>) -> SparseVector<T> {
    let x = s.x.symbols();
    let cx = gram_counts(x, t);
    let nx2: f64 = cx.iter().map(|(_, c)| (c * c) as f64).sum();
    let count_in_x = |k: u128| -> i64 { cx.binary_search_by_key(&k, |e| e.0).map_or(0, |i| cx[i].1 as i64) };
    let mut coef_x = -s.total_weight() / T::of(nx2.sqrt());
    let mut grams: Vec<(FeatureKey, T)> = Vec::new();
    let mut other: Vec<(FeatureKey, T)> = Vec::new();
    let mut diff: Vec<(u128, i64)> = Vec::new();
    for (y, g) in &s.neighbors {
        let ys = y.symbols();
        if ys.len() < t {
            other.push((FeatureKey::Whole(y.clone()), *g));
            continue;
        }
        let shorter = x.len().min(ys.len());
        let a = x.iter().zip(ys).take_while(|(p, q)| p == q).count().min(shorter);
        let b = x.iter().rev().zip(ys.iter().rev()).take_while(|(p, q)| p == q).count().min(shorter - a);
        let lo = (a + 1).saturating_sub(t);
        diff.clear();
        for i in lo..(ys.len() - b).min(ys.len() - t + 1) {
            diff.push((pack_window(&ys[i..i + t]), 1));
        }
        for i in lo..(x.len() - b).min(x.len() - t + 1) {
            diff.push((pack_window(&x[i..i + t]), -1));
        }
        diff.sort_unstable_by_key(|e| e.0);
        let mut norm2 = nx2;
        let mut i = 0;
        let start = grams.len();
        while i < diff.len() {
            let key = diff[i].0;
            let mut d = 0i64;
            while i < diff.len() && diff[i].0 == key {
                d += diff[i].1;
                i += 1;
            }
            if d != 0 {
                norm2 += (2 * count_in_x(key) * d + d * d) as f64;
                grams.push((FeatureKey::Gram(key), T::of(d as f64)));
            }
        }
        let w = *g / T::of(norm2.sqrt());
        coef_x += w;
        for e in &mut grams[start..] {
            e.1 *= w;
        }
    }
    grams.extend(cx.iter().map(|&(k, c)| (FeatureKey::Gram(k), T::of(c as f64) * coef_x)));
    grams.extend(other);
    SparseVector::from_entries(grams)
}

/// Which evaluation strategy [`SteinSetup::stein_gram`] uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramRoute {
    /// Feature map when available, direct summation otherwise.
    #[default]
    Auto,
    Direct,
    Features,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SteinGramMeta {
    pub model: String,
    pub kernel: KernelConfig,
    pub neighborhood: String,
    pub balancing: BalancingKind,
    pub data_sha256: String,
}

impl SteinGramMeta {
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("metadata serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Compact index of Stein feature vectors over a shared coordinate set, for
/// `O(n * nnz)` U- and wild statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBank<T> {
    dim: usize,
    rows: Vec<Vec<(usize, T)>>,
    norms: Vec<T>,
}

impl<T: Real> FeatureBank<T> {
    pub fn new(features: &[SparseVector<T>]) -> Self {
        let mut index: HashMap<&FeatureKey, usize> = HashMap::new();
        let mut rows = Vec::with_capacity(features.len());
        for f in features {
            let row = f
                .entries()
                .iter()
                .map(|(k, v)| {
                    let next = index.len();
                    (*index.entry(k).or_insert(next), *v)
                })
                .collect();
            rows.push(row);
        }
        let norms = features.iter().map(|f| f.norm_sq()).collect();
        Self { dim: index.len(), rows, norms }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `sum_{i != j} c_i c_j <xi_i, xi_j> = |sum c_i xi_i|^2 - sum c_i^2 |xi_i|^2`.
    pub fn weighted_offdiag_sum(&self, c: &[f64]) -> f64 {
        let mut acc = vec![0.0f64; self.dim];
        let mut diag = 0.0;
        for ((row, norm), &ci) in self.rows.iter().zip(&self.norms).zip(c) {
            if ci == 0.0 {
                continue;
            }
            for (k, v) in row {
                acc[*k] += ci * v.to_f64_lossy();
            }
            diag += ci * ci * norm.to_f64_lossy();
        }
        acc.iter().map(|v| v * v).sum::<f64>() - diag
    }

    pub fn ustat(&self) -> f64 {
        let n = self.len() as f64;
        self.weighted_offdiag_sum(&vec![1.0; self.len()]) / (n * (n - 1.0))
    }

    pub fn wild_stat(&self, w: &[f64]) -> f64 {
        let n = self.len() as f64;
        let c: Vec<f64> = w.iter().map(|wi| wi - 1.0).collect();
        self.weighted_offdiag_sum(&c) / (n * (n - 1.0))
    }
}

/// Symmetric matrix `H[i][j] = h(X_i, X_j)` plus the route that built it.
#[derive(Clone, Debug, PartialEq)]
pub struct SteinGram<T> {
    matrix: GramMatrix<T>,
    meta: SteinGramMeta,
    bank: Option<FeatureBank<T>>,
}

impl<T: Real> SteinGram<T> {
    /// Wraps an explicit matrix (no feature bank).
    pub fn from_matrix(matrix: GramMatrix<T>, meta: SteinGramMeta) -> Self {
        Self { matrix, meta, bank: None }
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.matrix.get(i, j)
    }

    pub fn matrix(&self) -> &GramMatrix<T> {
        &self.matrix
    }

    pub fn meta(&self) -> &SteinGramMeta {
        &self.meta
    }

    pub fn feature_bank(&self) -> Option<&FeatureBank<T>> {
        self.bank.as_ref()
    }

    pub fn max_abs(&self) -> T {
        self.matrix.as_slice().iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn ksd_ustat(&self) -> Result<f64, SteinError> {
        ksd_ustat(self)
    }

    /// V-statistic `sum_ij q_i q_j H_ij` for weights `q`.
    pub fn weighted_vstat(&self, q: &[f64]) -> Result<f64, SteinError> {
        let n = self.n();
        if q.len() != n {
            return Err(SteinError::LengthMismatch { expected: n, got: q.len() });
        }
        Ok((0..n).map(|i| q[i] * (0..n).map(|j| q[j] * self.get(i, j).to_f64_lossy()).sum::<f64>()).sum())
    }

    /// Row-major CSV. The first line is a comment carrying the metadata hash.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "# steinseq-gram n={} meta_sha256={} model={} kernel={} neighborhood={} balancing={}",
            self.n(),
            self.meta.hash(),
            self.meta.model,
            self.meta.kernel.short_label(),
            self.meta.neighborhood,
            self.meta.balancing.short_label()
        )?;
        for i in 0..self.n() {
            let row: Vec<String> = self.matrix.row(i).iter().map(|v| format!("{:.16e}", v.to_f64_lossy())).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// `(1 / (n (n - 1))) sum_{i != j} H_ij`.
pub fn ksd_ustat<T: Real>(h: &SteinGram<T>) -> Result<f64, SteinError> {
    let n = h.n();
    if n < 2 {
        return Err(SteinError::TooFewPoints { need: 2, got: n });
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                total += h.get(i, j).to_f64_lossy();
            }
        }
    }
    Ok(total / (n as f64 * (n as f64 - 1.0)))
}

/// `(1 / (n (n - 1))) sum_{i != j} (W_i - 1)(W_j - 1) H_ij`.
pub fn wild_stat<T: Real>(h: &SteinGram<T>, w: &[f64]) -> Result<f64, SteinError> {
    let n = h.n();
    if w.len() != n {
        return Err(SteinError::LengthMismatch { expected: n, got: w.len() });
    }
    if n < 2 {
        return Err(SteinError::TooFewPoints { need: 2, got: n });
    }
    if let Some(bank) = &h.bank {
        return Ok(bank.wild_stat(w));
    }
    let c: Vec<f64> = w.iter().map(|v| v - 1.0).collect();
    let mut total = 0.0;
    for i in 0..n {
        if c[i] == 0.0 {
            continue;
        }
        let row = h.matrix.row(i);
        let mut s = 0.0;
        for j in 0..n {
            if j != i {
                s += c[j] * row[j].to_f64_lossy();
            }
        }
        total += c[i] * s;
    }
    Ok(total / (n as f64 * (n as f64 - 1.0)))
}

/// Exact `KSD^2(Q || P) = sum_{x, y} q(x) q(y) h(x, y)` on an enumerated
/// space, given `q` aligned with `space`.
pub fn exact_ksd_squared(setup: &SteinSetup<'_>, space: &[Sequence], q: &[f64]) -> Result<f64, SteinError> {
    if q.len() != space.len() {
        return Err(SteinError::LengthMismatch { expected: space.len(), got: q.len() });
    }
    let stencils: Vec<Stencil<f64>> = space.par_iter().map(|x| setup.stencil(x)).collect::<Result<_, _>>()?;
    let rows: Vec<f64> = (0..space.len())
        .into_par_iter()
        .map(|i| {
            if q[i] == 0.0 {
                return 0.0;
            }
            q[i] * (0..space.len())
                .filter(|&j| q[j] != 0.0)
                .map(|j| q[j] * stencil_kernel(&setup.kernel, &stencils[i], &stencils[j]))
                .sum::<f64>()
        })
        .collect();
    Ok(rows.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{random_markov_chain, MarkovOrder};
    use crate::neighborhoods::{EditNeighborhood, LocationBudget, NeighborhoodKind, NeighborhoodSpec};
    use crate::seq;
    use crate::seqspace::{derive_stream, enumerate_space, Alphabet};
    use rand::Rng;

    #[test]
    fn balancing_examples() {
        assert_eq!(balancing_weight::<f64>(BalancingKind::Barker, 0.0), 0.5);
        assert!((balancing_weight::<f64>(BalancingKind::Barker, 3f64.ln()) - 0.75).abs() < 1e-15);
        assert!((balancing_weight::<f64>(BalancingKind::Mpf, 4f64.ln()) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn balance_identity() {
        for kind in [BalancingKind::Barker, BalancingKind::Mpf] {
            for d in -50..=50 {
                let d = d as f64;
                let lhs: f64 = balancing_weight(kind, d);
                let rhs = d.exp() * balancing_weight::<f64>(kind, -d);
                assert!(((lhs - rhs) / lhs).abs() < 1e-12, "{kind:?} {d}");
            }
        }
    }

    #[test]
    fn barker_is_stable_and_mpf_saturates() {
        for d in [-700.0, -300.0, 0.0, 300.0, 700.0] {
            let w: f64 = balancing_weight(BalancingKind::Barker, d);
            assert!(w.is_finite() && w > 0.0 && w <= 1.0);
        }
        assert_eq!(balancing_weight::<f64>(BalancingKind::Mpf, 1500.0), f64::MAX);
        assert_eq!(balancing_weight::<f32>(BalancingKind::Mpf, 200.0), f32::MAX);
    }

    fn fixture(seed: u64) -> (crate::models::MarkovChainModel, Alphabet) {
        let a = Alphabet::new(2).unwrap();
        let mut rng = derive_stream(seed, &["stein".into()]);
        (random_markov_chain(a, MarkovOrder::First, 1.0, 2.0, 1e-3, Some(3), &mut rng).unwrap(), a)
    }

    #[test]
    fn operator_examples() {
        let (model, a) = fixture(1);
        let nb = EditNeighborhood::new(NeighborhoodSpec::zs(LocationBudget::Infinite).with_lmax(Some(3)), a).unwrap();
        let setup = SteinSetup::new(&model, &nb, KernelConfig::Dirac, BalancingKind::Barker);
        let space = enumerate_space(&a, 3);
        for x in &space {
            assert_eq!(setup.apply_operator(&|_| 3.0, x).unwrap(), 0.0);
        }
        let f = |y: &Sequence| (y.len() * 7 + y.symbols().iter().map(|&s| s as usize).sum::<usize>()) as f64;
        let total: f64 = space.iter().map(|x| model.log_mass(x).unwrap().exp() * setup.apply_operator(&f, x).unwrap()).sum();
        assert!(total.abs() < 1e-12, "{total}");
    }

    #[test]
    fn feature_route_equals_direct_route() {
        let (model, a) = fixture(2);
        let mut rng = derive_stream(5, &["pts".into()]);
        let space = enumerate_space(&a, 3);
        let data: Vec<Sequence> = (0..12).map(|_| space[rng.random_range(0..space.len())].clone()).collect();
        for kind in [NeighborhoodKind::Zs, NeighborhoodKind::ZsDoublesub] {
            let nb = EditNeighborhood::new(NeighborhoodSpec::new(kind, LocationBudget::Infinite).with_lmax(Some(3)), a).unwrap();
            for kernel in [KernelConfig::csk(2), KernelConfig::Dirac] {
                for bal in [BalancingKind::Barker, BalancingKind::Mpf] {
                    let setup = SteinSetup::new(&model, &nb, kernel, bal);
                    let d: SteinGram<f64> = setup.stein_gram(&data, GramRoute::Direct).unwrap();
                    let f: SteinGram<f64> = setup.stein_gram(&data, GramRoute::Features).unwrap();
                    let scale = d.max_abs().max(1.0);
                    for i in 0..data.len() {
                        for j in 0..data.len() {
                            assert!((d.get(i, j) - f.get(i, j)).abs() < 1e-12 * scale);
                        }
                    }
                    let u = d.ksd_ustat().unwrap();
                    assert!((u - setup.ksd_ustat_fast(&data).unwrap()).abs() < 1e-12 * scale);
                    let w: Vec<f64> = (0..data.len()).map(|i| (i % 3) as f64).collect();
                    let wd = wild_stat(&d, &w).unwrap();
                    assert!((wd - wild_stat(&f, &w).unwrap()).abs() < 1e-12 * scale);
                }
            }
        }
    }

    #[test]
    fn incremental_csk_features_match_full_recount() {
        let a = Alphabet::new(3).unwrap();
        let mut rng = derive_stream(8, &["csk-inc".into()]);
        let model = random_markov_chain(a, MarkovOrder::Second, 1.0, 6.0, 1e-3, Some(14), &mut rng).unwrap();
        for kind in [NeighborhoodKind::Tail, NeighborhoodKind::Zs, NeighborhoodKind::ZsSub, NeighborhoodKind::ZsDoublesub] {
            let nb = EditNeighborhood::new(NeighborhoodSpec::new(kind, LocationBudget::Infinite).with_lmax(Some(14)), a).unwrap();
            for t in 1..=4 {
                let kernel = KernelConfig::csk(t);
                let setup = SteinSetup::new(&model, &nb, kernel, BalancingKind::Barker);
                for len in 1..=12 {
                    let x = Sequence::new((0..len).map(|_| rng.random_range(0..3u16)).collect()).unwrap();
                    let st: Stencil<f64> = setup.stencil(&x).unwrap();
                    let fast = stencil_features(&kernel, &st);
                    let mut full = Vec::new();
                    for (y, g) in &st.neighbors {
                        kernel.accumulate_features(y, *g, &mut full);
                    }
                    kernel.accumulate_features(&x, -st.total_weight(), &mut full);
                    let full = SparseVector::from_entries(full);
                    let diff = fast.norm_sq() + full.norm_sq() - 2.0 * fast.dot(&full);
                    assert!(diff.abs() < 1e-20 + 1e-12 * full.norm_sq(), "{kind:?} t={t} {x:?}: {diff}");
                }
            }
        }
    }

    #[test]
    fn dirac_diagonal_closed_form() {
        let (model, a) = fixture(3);
        let nb = EditNeighborhood::new(NeighborhoodSpec::zs(LocationBudget::Infinite).with_lmax(Some(3)), a).unwrap();
        let setup = SteinSetup::new(&model, &nb, KernelConfig::Dirac, BalancingKind::Mpf);
        for x in enumerate_space(&a, 3) {
            let st: Stencil<f64> = setup.stencil(&x).unwrap();
            let sq: f64 = st.neighbors.iter().map(|(_, g)| g * g).sum();
            let g = st.total_weight();
            let h: f64 = setup.stein_kernel(&x, &x).unwrap();
            assert!((h - (sq + g * g)).abs() < 1e-12);
        }
    }

    #[test]
    fn ustat_and_wild_examples() {
        let meta = SteinGramMeta {
            model: "m".into(),
            kernel: KernelConfig::Dirac,
            neighborhood: "n".into(),
            balancing: BalancingKind::Barker,
            data_sha256: String::new(),
        };
        let two = SteinGram::from_matrix(GramMatrix::from_fn(2, String::new(), |i, j| if i == j { 5.0 } else { 1.5 }), meta.clone());
        assert_eq!(ksd_ustat(&two).unwrap(), 1.5);
        assert_eq!(wild_stat(&two, &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(wild_stat(&two, &[2.0, 0.0]).unwrap(), -1.5);
        assert!(wild_stat(&two, &[2.0]).is_err());
        let c = SteinGram::from_matrix(GramMatrix::from_fn(5, String::new(), |i, j| if i == j { 9.0 } else { -0.25 }), meta);
        assert!((ksd_ustat(&c).unwrap() + 0.25).abs() < 1e-15);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# steinseq-gram n=5 meta_sha256="));
        assert_eq!(text.lines().count(), 6);
    }

    #[test]
    fn single_point_gram() {
        let (model, a) = fixture(4);
        let nb = EditNeighborhood::new(NeighborhoodSpec::tail().with_lmax(Some(3)), a).unwrap();
        let setup = SteinSetup::new(&model, &nb, KernelConfig::hamming(), BalancingKind::Barker);
        let g: SteinGram<f64> = setup.stein_gram(&[seq![0, 1]], GramRoute::Auto).unwrap();
        assert_eq!(g.n(), 1);
        assert!(g.get(0, 0) >= -1e-10);
        assert!(g.ksd_ustat().is_err());
    }
}
