//! Positive-definite kernels on sequences and Gram-matrix assembly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::scalar::Real;
use crate::seqspace::Sequence;

/// Kernel selection, serialized as `{"kind": .., "t": ..}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelConfig {
    /// `exp(-d/l)` on equal lengths, 0 otherwise. With `literal_delta` the
    /// exponent counts matching rather than mismatching positions.
    Hamming {
        #[serde(default)]
        literal_delta: bool,
    },
    /// Normalised contiguous-subsequence kernel with window length `t`.
    Csk { t: usize },
    Dirac,
}

impl KernelConfig {
    pub fn hamming() -> Self {
        KernelConfig::Hamming { literal_delta: false }
    }

    pub fn csk(t: usize) -> Self {
        assert!(t >= 1, "CSK window must be positive");
        KernelConfig::Csk { t }
    }

    pub fn eval<T: Real>(&self, x: &Sequence, y: &Sequence) -> T {
        match *self {
            KernelConfig::Hamming { literal_delta } => hamming_kernel_with(x, y, literal_delta),
            KernelConfig::Csk { t } => csk_kernel(x, y, t),
            KernelConfig::Dirac => dirac_kernel(x, y),
        }
    }

    /// Explicit finite feature map with `k(x, y) = <phi(x), phi(y)>`, when one
    /// of manageable size exists (CSK and Dirac).
    pub fn feature_map<T: Real>(&self, x: &Sequence) -> Option<SparseVector<T>> {
        if !self.has_feature_map() {
            return None;
        }
        let mut out = Vec::new();
        self.accumulate_features(x, T::one(), &mut out);
        Some(SparseVector::from_entries(out))
    }

    /// Appends the entries of `weight * phi(x)` to `out` (unsorted; keys may
    /// repeat across calls). No-op for kernels without a feature map.
    pub fn accumulate_features<T: Real>(&self, x: &Sequence, weight: T, out: &mut Vec<(FeatureKey, T)>) {
        match *self {
            KernelConfig::Hamming { .. } => {}
            KernelConfig::Csk { t } => csk_accumulate(x, t, weight, out),
            KernelConfig::Dirac => out.push((FeatureKey::Whole(x.clone()), weight)),
        }
    }

    pub fn has_feature_map(&self) -> bool {
        !matches!(self, KernelConfig::Hamming { .. })
    }

    pub fn short_label(&self) -> String {
        match *self {
            KernelConfig::Hamming { literal_delta: false } => "Hamming".to_owned(),
            KernelConfig::Hamming { literal_delta: true } => "Hamming(literal)".to_owned(),
            KernelConfig::Csk { t } => format!("CSK(t={t})"),
            KernelConfig::Dirac => "Dirac".to_owned(),
        }
    }
}

/// Exponentiated Hamming kernel, counting mismatches.
pub fn hamming_kernel<T: Real>(x: &Sequence, y: &Sequence) -> T {
    hamming_kernel_with(x, y, false)
}

fn hamming_kernel_with<T: Real>(x: &Sequence, y: &Sequence, literal_delta: bool) -> T {
    let Some(mismatches) = x.hamming_distance(y) else {
        return T::zero();
    };
    let l = x.len();
    let count = if literal_delta { l - mismatches } else { mismatches };
    (-T::of(count as f64) / T::of(l as f64)).exp()
}

pub fn dirac_kernel<T: Real>(x: &Sequence, y: &Sequence) -> T {
    if x == y {
        T::one()
    } else {
        T::zero()
    }
}

/// Number of index pairs `(i, j)` with equal length-`t` windows, via the
/// common-suffix-length grid in `O(l l')`.
pub fn csk_unnormalized(x: &Sequence, y: &Sequence, t: usize) -> u64 {
    let (a, b) = (x.symbols(), y.symbols());
    if a.len() < t || b.len() < t {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    let mut count = 0u64;
    for &ai in a {
        for (j, &bj) in b.iter().enumerate() {
            cur[j + 1] = if ai == bj { prev[j] + 1 } else { 0 };
            if cur[j + 1] >= t {
                count += 1;
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    count
}

/// Direct double loop over all window pairs; reference for [`csk_unnormalized`].
pub fn csk_unnormalized_naive(x: &Sequence, y: &Sequence, t: usize) -> u64 {
    let (a, b) = (x.symbols(), y.symbols());
    if a.len() < t || b.len() < t {
        return 0;
    }
    let mut count = 0;
    for i in 0..=a.len() - t {
        for j in 0..=b.len() - t {
            if a[i..i + t] == b[j..j + t] {
                count += 1;
            }
        }
    }
    count
}

/// Normalised CSK. When either sequence is shorter than `t` the value is
/// 1 for `x == y` and 0 otherwise.
pub fn csk_kernel<T: Real>(x: &Sequence, y: &Sequence, t: usize) -> T {
    if x.len() < t || y.len() < t {
        return dirac_kernel(x, y);
    }
    let xy = csk_unnormalized(x, y, t);
    if xy == 0 {
        return T::zero();
    }
    let xx = csk_unnormalized(x, x, t);
    let yy = csk_unnormalized(y, y, t);
    T::of(xy as f64) / (T::of(xx as f64) * T::of(yy as f64)).sqrt()
}

/// Coordinate of a sparse feature vector.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKey {
    /// A window of at most 8 symbols, packed 16 bits per symbol.
    Gram(u128),
    /// A longer window.
    LongGram(Vec<u16>),
    /// Indicator of a whole sequence (Dirac features, degenerate CSK).
    Whole(Sequence),
}

impl FeatureKey {
    pub fn gram(window: &[u16]) -> Self {
        if window.len() <= 8 {
            // Symbols are shifted by one so that windows of different
            // lengths never collide.
            FeatureKey::Gram(pack_window(window))
        } else {
            FeatureKey::LongGram(window.to_vec())
        }
    }
}

pub(crate) fn pack_window(window: &[u16]) -> u128 {
    window.iter().fold(0u128, |acc, &s| (acc << 16) | (s as u128 + 1))
}

/// Sparse vector with sorted, unique keys.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SparseVector<T> {
    entries: Vec<(FeatureKey, T)>,
}

impl<T: Real> SparseVector<T> {
    pub fn unit(key: FeatureKey) -> Self {
        Self { entries: vec![(key, T::one())] }
    }

    /// Builds from unsorted, possibly repeated entries (values are summed in
    /// input order; exact zeros are dropped).
    pub fn from_entries(entries: impl IntoIterator<Item = (FeatureKey, T)>) -> Self {
        // Packed grams sort as plain integers; they precede the other
        // variants in the key order.
        let mut grams: Vec<(u128, T)> = Vec::new();
        let mut other: Vec<(FeatureKey, T)> = Vec::new();
        for (k, v) in entries {
            match k {
                FeatureKey::Gram(g) => grams.push((g, v)),
                k => other.push((k, v)),
            }
        }
        grams.sort_by_key(|e| e.0);
        other.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out: Vec<(FeatureKey, T)> = Vec::with_capacity(grams.len() + other.len());
        let mut last_gram: Option<u128> = None;
        for (g, val) in grams {
            if last_gram == Some(g) {
                out.last_mut().expect("previous gram").1 += val;
            } else {
                out.push((FeatureKey::Gram(g), val));
                last_gram = Some(g);
            }
        }
        let split = out.len();
        for (k, val) in other {
            match out[split..].last_mut() {
                Some((lk, lv)) if *lk == k => *lv += val,
                _ => out.push((k, val)),
            }
        }
        out.retain(|(_, v)| *v != T::zero());
        Self { entries: out }
    }

    pub fn entries(&self) -> &[(FeatureKey, T)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn dot(&self, other: &Self) -> T {
        let (mut i, mut j) = (0, 0);
        let mut acc = T::zero();
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn norm_sq(&self) -> T {
        self.entries.iter().map(|(_, v)| *v * *v).sum()
    }
}

/// Normalised t-gram count vector, so that `<phi(x), phi(y)>` is the
/// normalised CSK.
pub fn csk_features<T: Real>(x: &Sequence, t: usize) -> SparseVector<T> {
    let mut out = Vec::new();
    csk_accumulate(x, t, T::one(), &mut out);
    SparseVector::from_entries(out)
}

fn csk_accumulate<T: Real>(x: &Sequence, t: usize, weight: T, out: &mut Vec<(FeatureKey, T)>) {
    if x.len() < t {
        out.push((FeatureKey::Whole(x.clone()), weight));
        return;
    }
    if t > 8 {
        let mut runs: Vec<(&[u16], u64)> = Vec::new();
        let mut windows: Vec<&[u16]> = x.symbols().windows(t).collect();
        windows.sort_unstable();
        for w in windows {
            match runs.last_mut() {
                Some((lw, c)) if *lw == w => *c += 1,
                _ => runs.push((w, 1)),
            }
        }
        let scale = weight / T::of(runs.iter().map(|(_, c)| (c * c) as f64).sum::<f64>().sqrt());
        out.extend(runs.into_iter().map(|(w, c)| (FeatureKey::LongGram(w.to_vec()), T::of(c as f64) * scale)));
        return;
    }
    let runs = gram_counts(x.symbols(), t);
    let scale = weight / T::of(runs.iter().map(|(_, c)| (c * c) as f64).sum::<f64>().sqrt());
    out.extend(runs.into_iter().map(|(k, c)| (FeatureKey::Gram(k), T::of(c as f64) * scale)));
}

/// Sorted `(packed window, count)` runs of the length-`t` windows, `t <= 8`.
pub(crate) fn gram_counts(x: &[u16], t: usize) -> Vec<(u128, u64)> {
    let mut keys: Vec<u128> = x.windows(t).map(pack_window).collect();
    keys.sort_unstable();
    let mut runs: Vec<(u128, u64)> = Vec::with_capacity(keys.len());
    for k in keys {
        match runs.last_mut() {
            Some((lk, c)) if *lk == k => *c += 1,
            _ => runs.push((k, 1)),
        }
    }
    runs
}

/// Dense symmetric kernel matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix<T> {
    n: usize,
    data: Vec<T>,
    fingerprint: String,
}

impl<T: Real> GramMatrix<T> {
    pub fn from_fn(n: usize, fingerprint: String, f: impl Fn(usize, usize) -> T + Sync) -> Self {
        // Upper triangle computed once per unordered pair, then mirrored.
        let rows: Vec<Vec<T>> = (0..n).into_par_iter().map(|i| (i..n).map(|j| f(i, j)).collect()).collect();
        let mut data = vec![T::zero(); n * n];
        for (i, row) in rows.into_iter().enumerate() {
            for (off, v) in row.into_iter().enumerate() {
                let j = i + off;
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Self { n, data, fingerprint }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// SHA-256 of the points the matrix was built from (hex).
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// Hex SHA-256 over the symbols of `points`.
pub fn fingerprint_points(points: &[Sequence]) -> String {
    let mut h = Sha256::new();
    for x in points {
        h.update((x.len() as u64).to_le_bytes());
        for &s in x.symbols() {
            h.update(s.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn gram<T: Real>(kernel: &KernelConfig, points: &[Sequence]) -> GramMatrix<T> {
    GramMatrix::from_fn(points.len(), fingerprint_points(points), |i, j| kernel.eval(&points[i], &points[j]))
}

/// Kernel values between two samples, `out[i][j] = k(x_i, y_j)`.
pub fn cross_gram<T: Real>(kernel: &KernelConfig, xs: &[Sequence], ys: &[Sequence]) -> Vec<Vec<T>> {
    xs.par_iter().map(|x| ys.iter().map(|y| kernel.eval(x, y)).collect()).collect()
}
