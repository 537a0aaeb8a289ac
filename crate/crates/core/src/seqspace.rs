//! Sequences over a finite alphabet, back-offset edit actions and
//! deterministic random streams.

use std::fmt;

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Symbol index in `[0, alphabet.size)`.
pub type Symbol = u16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Alphabet {
    pub size: usize,
    /// Whether the cyclic order `0, 1, .., size-1, 0` is declared.
    #[serde(default)]
    pub cyclic: bool,
}

impl Alphabet {
    pub fn new(size: usize) -> Result<Self, SeqError> {
        if size == 0 || size > Symbol::MAX as usize + 1 {
            return Err(SeqError::InvalidAlphabet(size));
        }
        Ok(Self { size, cyclic: false })
    }

    pub fn cyclic(size: usize) -> Result<Self, SeqError> {
        Ok(Self { cyclic: true, ..Self::new(size)? })
    }

    pub fn symbols(&self) -> impl Iterator<Item = Symbol> {
        (0..self.size).map(|s| s as Symbol)
    }

    pub fn contains(&self, s: Symbol) -> bool {
        (s as usize) < self.size
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SeqError {
    #[error("sequences must contain at least one symbol")]
    Empty,
    #[error("symbol {symbol} at position {position} is outside an alphabet of size {size}")]
    SymbolOutOfRange { symbol: Symbol, position: usize, size: usize },
    #[error("invalid alphabet size {0}")]
    InvalidAlphabet(usize),
}

/// A non-empty word `x_1 .. x_l`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<Symbol>", into = "Vec<Symbol>")]
pub struct Sequence(Vec<Symbol>);

impl Sequence {
    pub fn new(symbols: Vec<Symbol>) -> Result<Self, SeqError> {
        if symbols.is_empty() {
            return Err(SeqError::Empty);
        }
        Ok(Self(symbols))
    }

    /// Builds a sequence and checks every symbol against `alphabet`.
    pub fn over(symbols: Vec<Symbol>, alphabet: &Alphabet) -> Result<Self, SeqError> {
        let seq = Self::new(symbols)?;
        seq.check(alphabet)?;
        Ok(seq)
    }

    pub fn check(&self, alphabet: &Alphabet) -> Result<(), SeqError> {
        match self.0.iter().position(|&s| !alphabet.contains(s)) {
            Some(position) => Err(SeqError::SymbolOutOfRange {
                symbol: self.0[position],
                position,
                size: alphabet.size,
            }),
            None => Ok(()),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Always false; kept so `len` has its usual companion.
    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn symbols(&self) -> &[Symbol] {
        &self.0
    }

    pub fn last(&self) -> Symbol {
        self.0[self.0.len() - 1]
    }

    pub fn into_vec(self) -> Vec<Symbol> {
        self.0
    }

    /// Number of positions at which two equal-length sequences differ.
    pub fn hamming_distance(&self, other: &Sequence) -> Option<usize> {
        (self.len() == other.len())
            .then(|| self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count())
    }
}

impl TryFrom<Vec<Symbol>> for Sequence {
    type Error = SeqError;
    fn try_from(v: Vec<Symbol>) -> Result<Self, Self::Error> {
        Sequence::new(v)
    }
}

impl From<Sequence> for Vec<Symbol> {
    fn from(s: Sequence) -> Self {
        s.0
    }
}

impl fmt::Debug for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, ")")
    }
}

/// Constructs a [`Sequence`] from literal symbols, panicking on an empty list.
#[macro_export]
macro_rules! seq {
    ($($s:expr),+ $(,)?) => {
        $crate::seqspace::Sequence::new(vec![$($s as $crate::seqspace::Symbol),+]).unwrap()
    };
}

/// Edit at back-offset `j`, where `j = 1` acts at the end of the sequence.
///
/// On a sequence of length `l`, `Insert` places the new symbol at position
/// `l - j + 2` of the result, `Delete` removes position `l - j + 1` and
/// `Substitute` overwrites position `l - j + 1` (positions 1-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EditAction {
    Insert { j: usize, symbol: Symbol },
    Delete { j: usize },
    Substitute { j: usize, symbol: Symbol },
}

impl EditAction {
    pub fn offset(&self) -> usize {
        match *self {
            EditAction::Insert { j, .. } | EditAction::Delete { j } | EditAction::Substitute { j, .. } => j,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EditError {
    #[error("back-offset {j} is out of range for a sequence of length {len}")]
    OffsetOutOfRange { j: usize, len: usize },
    #[error("deleting from a length-1 sequence would leave it empty")]
    DeleteToEmpty,
    #[error("insertion would exceed the maximum length {lmax}")]
    ExceedsMaxLength { lmax: usize },
}

/// Applies `action` to `x`, returning a new sequence.
pub fn apply_edit(x: &Sequence, action: EditAction, lmax: Option<usize>) -> Result<Sequence, EditError> {
    let len = x.len();
    let mut out = x.0.clone();
    match action {
        EditAction::Insert { j, symbol } => {
            if j == 0 || j > len + 1 {
                return Err(EditError::OffsetOutOfRange { j, len });
            }
            if let Some(lmax) = lmax {
                if len + 1 > lmax {
                    return Err(EditError::ExceedsMaxLength { lmax });
                }
            }
            out.insert(len + 1 - j, symbol);
        }
        EditAction::Delete { j } => {
            if j == 0 || j > len {
                return Err(EditError::OffsetOutOfRange { j, len });
            }
            if len == 1 {
                return Err(EditError::DeleteToEmpty);
            }
            out.remove(len - j);
        }
        EditAction::Substitute { j, symbol } => {
            if j == 0 || j > len {
                return Err(EditError::OffsetOutOfRange { j, len });
            }
            out[len - j] = symbol;
        }
    }
    Ok(Sequence(out))
}

/// The action that undoes `action` when applied to `apply_edit(x, action)`.
pub fn edit_inverse(x: &Sequence, action: EditAction) -> Result<EditAction, EditError> {
    apply_edit(x, action, None)?;
    let len = x.len();
    Ok(match action {
        EditAction::Insert { j, .. } => EditAction::Delete { j },
        EditAction::Delete { j } => EditAction::Insert { j, symbol: x.0[len - j] },
        EditAction::Substitute { j, .. } => EditAction::Substitute { j, symbol: x.0[len - j] },
    })
}

/// One component of a stream derivation path.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PathLabel {
    Index(u64),
    Name(String),
}

impl From<&str> for PathLabel {
    fn from(s: &str) -> Self {
        PathLabel::Name(s.to_owned())
    }
}

impl From<String> for PathLabel {
    fn from(s: String) -> Self {
        PathLabel::Name(s)
    }
}

impl From<u64> for PathLabel {
    fn from(i: u64) -> Self {
        PathLabel::Index(i)
    }
}

impl From<usize> for PathLabel {
    fn from(i: usize) -> Self {
        PathLabel::Index(i as u64)
    }
}

impl From<i32> for PathLabel {
    fn from(i: i32) -> Self {
        PathLabel::Index(i as u64)
    }
}

/// A random stream keyed by `(master seed, path)`.
///
/// The ChaCha key is the SHA-256 digest of the seed and the encoded path, so
/// a stream depends only on its key and never on scheduling. Use
/// [`RngStream::child`] to hand independent streams to workers.
#[derive(Clone, Debug)]
pub struct RngStream {
    master: u64,
    path: Vec<PathLabel>,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn derive(master: u64, path: &[PathLabel]) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"steinseq/stream/v1");
        hasher.update(master.to_le_bytes());
        for label in path {
            match label {
                PathLabel::Index(i) => {
                    hasher.update([0u8]);
                    hasher.update(i.to_le_bytes());
                }
                PathLabel::Name(s) => {
                    hasher.update([1u8]);
                    hasher.update((s.len() as u64).to_le_bytes());
                    hasher.update(s.as_bytes());
                }
            }
        }
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        Self { master, path: path.to_vec(), rng: ChaCha12Rng::from_seed(seed) }
    }

    /// Stream at `path + [label]`; unaffected by draws already taken from `self`.
    pub fn child(&self, label: impl Into<PathLabel>) -> Self {
        let mut path = self.path.clone();
        path.push(label.into());
        Self::derive(self.master, &path)
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn path(&self) -> &[PathLabel] {
        &self.path
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

pub fn derive_stream(master: u64, path: &[PathLabel]) -> RngStream {
    RngStream::derive(master, path)
}

/// Every sequence over `alphabet` with length in `1..=lmax`, ordered by
/// length and then lexicographically.
pub fn enumerate_space(alphabet: &Alphabet, lmax: usize) -> Vec<Sequence> {
    let mut out = Vec::new();
    let mut layer: Vec<Vec<Symbol>> = vec![Vec::new()];
    for _ in 0..lmax {
        let mut next = Vec::with_capacity(layer.len() * alphabet.size);
        for prefix in &layer {
            for s in alphabet.symbols() {
                let mut v = prefix.clone();
                v.push(s);
                next.push(v);
            }
        }
        out.extend(next.iter().cloned().map(Sequence));
        layer = next;
    }
    out
}

/// `m + m^2 + .. + m^lmax`, or `None` on overflow.
pub fn space_size(m: usize, lmax: usize) -> Option<usize> {
    let mut total: usize = 0;
    let mut layer: usize = 1;
    for _ in 0..lmax {
        layer = layer.checked_mul(m)?;
        total = total.checked_add(layer)?;
    }
    Some(total)
}
