//! Edit neighbourhoods `x -> N(x)` and validation of the graph they induce.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::models::{ScoredModel, TopKARModel};
use crate::seqspace::{apply_edit, enumerate_space, space_size, Alphabet, EditAction, Sequence, Symbol};

/// Default cap on the number of states [`validate_graph`] will enumerate.
pub const DEFAULT_STATE_CAP: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborhoodKind {
    /// Append, delete-last and replace-last.
    Tail,
    /// Insertions, deletions and substitutions within the last `J` positions.
    Zs,
    /// Substitutions only.
    ZsSub,
    /// Insertions and deletions only.
    ZsInsdel,
    /// `Zs` plus substitutions at two positions at once.
    ZsDoublesub,
    /// Prefix-dependent edits for top-k autoregressive models.
    TopkPoint,
}

/// How many trailing positions may be edited.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LocationBudget {
    Finite(usize),
    Infinite,
}

impl LocationBudget {
    fn allows(&self, j: usize) -> bool {
        match *self {
            LocationBudget::Finite(budget) => j <= budget,
            LocationBudget::Infinite => true,
        }
    }
}

impl Default for LocationBudget {
    fn default() -> Self {
        LocationBudget::Finite(1)
    }
}

impl fmt::Display for LocationBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LocationBudget::Finite(j) => write!(f, "{j}"),
            LocationBudget::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for LocationBudget {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match *self {
            LocationBudget::Finite(j) => s.serialize_u64(j as u64),
            LocationBudget::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for LocationBudget {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(0) => Err(serde::de::Error::custom("J must be at least 1")),
            Raw::Int(j) => Ok(LocationBudget::Finite(j as usize)),
            Raw::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "∞") => Ok(LocationBudget::Infinite),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("J must be a positive integer or \"inf\", got {t:?}"))),
        }
    }
}

/// Insertion symbol set.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub enum SymbolSet {
    #[default]
    Full,
    Only(Vec<Symbol>),
}

impl SymbolSet {
    fn contains(&self, s: Symbol) -> bool {
        match self {
            SymbolSet::Full => true,
            SymbolSet::Only(v) => v.contains(&s),
        }
    }

    fn members(&self, alphabet: &Alphabet) -> Vec<Symbol> {
        match self {
            SymbolSet::Full => alphabet.symbols().collect(),
            SymbolSet::Only(v) => v.clone(),
        }
    }
}

impl Serialize for SymbolSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            SymbolSet::Full => s.serialize_str("full"),
            SymbolSet::Only(v) => v.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for SymbolSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            List(Vec<Symbol>),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::List(mut v) => {
                v.sort_unstable();
                v.dedup();
                Ok(SymbolSet::Only(v))
            }
            Raw::Text(t) if t == "full" => Ok(SymbolSet::Full),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("n_ins must be \"full\" or a symbol list, got {t:?}"))),
        }
    }
}

/// Substitution rule `s -> N_rep(s)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplacementRule {
    /// Every other symbol.
    #[default]
    Full,
    /// Symbols within cyclic distance `d`.
    Cyclic(usize),
}

/// Which symbol the substitution rule is anchored at for an edit at offset `j`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplacementAnchor {
    /// The symbol being replaced.
    #[default]
    Positional,
    /// The last symbol of the sequence, whatever the offset.
    LastSymbol,
}

/// `N_rep(s)` for the cyclic rule: `{s +- 1, .., s +- d} mod m`, without `s`.
pub fn cyclic_symbol_neighborhood(m: usize, d: usize, s: Symbol) -> Result<Vec<Symbol>, NeighborhoodError> {
    if d == 0 || d > m / 2 {
        return Err(NeighborhoodError::InvalidSpec(format!("cyclic distance {d} must lie in 1..={}", m / 2)));
    }
    let s = s as usize;
    let mut out: Vec<Symbol> = (1..=d).flat_map(|k| [(s + k) % m, (s + m - k % m) % m]).map(|v| v as Symbol).collect();
    out.sort_unstable();
    out.dedup();
    out.retain(|&v| v as usize != s);
    Ok(out)
}

impl ReplacementRule {
    pub fn validate(&self, m: usize) -> Result<(), NeighborhoodError> {
        match *self {
            ReplacementRule::Full => Ok(()),
            ReplacementRule::Cyclic(d) => cyclic_symbol_neighborhood(m, d, 0).map(|_| ()),
        }
    }

    /// Replacement candidates for `s`, excluding `s` itself.
    pub fn candidates(&self, m: usize, s: Symbol) -> Vec<Symbol> {
        match *self {
            ReplacementRule::Full => (0..m as Symbol).filter(|&v| v != s).collect(),
            ReplacementRule::Cyclic(d) => cyclic_symbol_neighborhood(m, d, s).expect("validated"),
        }
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Serializable neighbourhood description.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeighborhoodSpec {
    pub kind: NeighborhoodKind,
    #[serde(rename = "J", default)]
    pub j: LocationBudget,
    #[serde(default)]
    pub n_ins: SymbolSet,
    #[serde(default)]
    pub n_rep: ReplacementRule,
    /// Length bound; `None` defers to the model's space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lmax: Option<usize>,
    #[serde(default)]
    pub anchor: ReplacementAnchor,
    /// Count how many actions reach each neighbour instead of treating
    /// `N(x)` as a set.
    #[serde(default, skip_serializing_if = "is_false")]
    pub multiset: bool,
    /// `topk_point` only: keep substitutions and drop insertions/deletions.
    #[serde(default, skip_serializing_if = "is_false")]
    pub substitutions_only: bool,
}

impl NeighborhoodSpec {
    pub fn new(kind: NeighborhoodKind, j: LocationBudget) -> Self {
        Self {
            kind,
            j,
            n_ins: SymbolSet::Full,
            n_rep: ReplacementRule::Full,
            lmax: None,
            anchor: ReplacementAnchor::Positional,
            multiset: false,
            substitutions_only: false,
        }
    }

    pub fn tail() -> Self {
        Self::new(NeighborhoodKind::Tail, LocationBudget::Finite(1))
    }

    pub fn zs(j: LocationBudget) -> Self {
        Self::new(NeighborhoodKind::Zs, j)
    }

    pub fn with_lmax(mut self, lmax: Option<usize>) -> Self {
        self.lmax = lmax;
        self
    }

    pub fn with_n_rep(mut self, rule: ReplacementRule) -> Self {
        self.n_rep = rule;
        self
    }

    /// Compact identifier such as `ZS(J=inf)`, used in result tables.
    pub fn short_label(&self) -> String {
        let base = match self.kind {
            NeighborhoodKind::Tail => "tail".to_owned(),
            NeighborhoodKind::Zs => format!("ZS(J={})", self.j),
            NeighborhoodKind::ZsSub => format!("ZS'(J={})", self.j),
            NeighborhoodKind::ZsInsdel => format!("ZS''(J={})", self.j),
            NeighborhoodKind::ZsDoublesub => format!("ZS+2sub(J={})", self.j),
            NeighborhoodKind::TopkPoint if self.substitutions_only => "topk'".to_owned(),
            NeighborhoodKind::TopkPoint => "topk".to_owned(),
        };
        match self.n_rep {
            ReplacementRule::Full => base,
            ReplacementRule::Cyclic(d) => format!("{base}[rep=cyc{d}]"),
        }
    }

    /// Binds the spec to a model's alphabet, length bound and (for
    /// `topk_point`) its top-k structure.
    pub fn build<'a, M: ScoredModel + ?Sized>(&self, model: &'a M) -> Result<BoundNeighborhood<'a>, NeighborhoodError> {
        if self.kind == NeighborhoodKind::TopkPoint {
            let topk = model
                .as_topk()
                .ok_or_else(|| NeighborhoodError::InvalidSpec("topk_point requires a top-k autoregressive model".into()))?;
            return Ok(BoundNeighborhood::TopK(TopKPointNeighborhood { model: topk, substitutions_only: self.substitutions_only }));
        }
        let lmax = match (self.lmax, model.max_len()) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        Ok(BoundNeighborhood::Edit(EditNeighborhood::new(self.clone().with_lmax(lmax), model.alphabet())?))
    }
}

/// How a neighbour was reached from the base point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Move {
    Single(EditAction),
    Double(EditAction, EditAction),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Neighbor {
    pub seq: Sequence,
    /// First action (in enumeration order) producing `seq`.
    pub action: Move,
    /// 1 under set semantics, otherwise the number of producing actions.
    pub multiplicity: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum NeighborhoodError {
    #[error("invalid neighbourhood spec: {0}")]
    InvalidSpec(String),
    #[error("point has zero mass under the model")]
    ZeroMass,
    #[error("enumerated space would hold more than {cap} states")]
    StateCapExceeded { cap: usize },
}

/// A rule `x -> N(x)`.
pub trait Neighborhood: Send + Sync {
    fn neighbors(&self, x: &Sequence) -> Result<Vec<Neighbor>, NeighborhoodError>;
    fn label(&self) -> String;
}

/// Deduplicates candidate moves by resulting sequence, keeping first-seen order.
struct Collector {
    multiset: bool,
    out: Vec<Neighbor>,
}

impl Collector {
    fn new(multiset: bool) -> Self {
        Self { multiset, out: Vec::new() }
    }

    fn push(&mut self, x: &Sequence, seq: Sequence, action: Move) {
        if &seq != x {
            self.out.push(Neighbor { seq, action, multiplicity: 1 });
        }
    }

    fn finish(mut self) -> Vec<Neighbor> {
        // Group by a cheap hash first; sequences are only compared within a run.
        let mut order: Vec<(u64, usize)> = self.out.iter().enumerate().map(|(i, nb)| (seq_hash(&nb.seq), i)).collect();
        order.sort_unstable();
        let mut keep = vec![true; self.out.len()];
        let mut start = 0;
        while start < order.len() {
            let end = start + order[start..].iter().take_while(|(h, _)| *h == order[start].0).count();
            for a in start..end {
                let i = order[a].1;
                if !keep[i] {
                    continue;
                }
                for &(_, j) in &order[a + 1..end] {
                    if keep[j] && self.out[i].seq == self.out[j].seq {
                        keep[j] = false;
                        if self.multiset {
                            self.out[i].multiplicity += 1;
                        }
                    }
                }
            }
            start = end;
        }
        let mut k = keep.into_iter();
        self.out.retain(|_| k.next().expect("one flag per entry"));
        self.out
    }
}

fn seq_hash(x: &Sequence) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ x.len() as u64;
    for &s in x.symbols() {
        h = (h ^ u64::from(s)).wrapping_mul(0x0000_0100_0000_01b3).rotate_left(5);
    }
    h
}

/// Edit-based neighbourhoods (`tail` and the `zs*` family) over a fixed alphabet.
#[derive(Clone, Debug, PartialEq)]
pub struct EditNeighborhood {
    spec: NeighborhoodSpec,
    alphabet: Alphabet,
}

impl EditNeighborhood {
    pub fn new(spec: NeighborhoodSpec, alphabet: Alphabet) -> Result<Self, NeighborhoodError> {
        if spec.kind == NeighborhoodKind::TopkPoint {
            return Err(NeighborhoodError::InvalidSpec("topk_point needs a model; use NeighborhoodSpec::build".into()));
        }
        spec.n_rep.validate(alphabet.size)?;
        if let SymbolSet::Only(v) = &spec.n_ins {
            if let Some(&s) = v.iter().find(|&&s| !alphabet.contains(s)) {
                return Err(NeighborhoodError::InvalidSpec(format!("insertion symbol {s} outside the alphabet")));
            }
        }
        if spec.lmax == Some(0) {
            return Err(NeighborhoodError::InvalidSpec("lmax must be at least 1".into()));
        }
        Ok(Self { spec, alphabet })
    }

    pub fn spec(&self) -> &NeighborhoodSpec {
        &self.spec
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    fn budget(&self) -> LocationBudget {
        match self.spec.kind {
            NeighborhoodKind::Tail => LocationBudget::Finite(1),
            _ => self.spec.j,
        }
    }

    fn n_ins(&self) -> SymbolSet {
        match self.spec.kind {
            NeighborhoodKind::Tail => SymbolSet::Full,
            _ => self.spec.n_ins.clone(),
        }
    }

    fn replacement_candidates(&self, x: &Sequence, j: usize) -> Vec<Symbol> {
        let s = x.symbols();
        let anchor = match self.spec.anchor {
            ReplacementAnchor::Positional => s[s.len() - j],
            ReplacementAnchor::LastSymbol => x.last(),
        };
        let current = s[s.len() - j];
        let mut c = self.spec.n_rep.candidates(self.alphabet.size, anchor);
        c.retain(|&v| v != current);
        c
    }

    fn add_insdel(&self, x: &Sequence, col: &mut Collector) {
        let len = x.len();
        let budget = self.budget();
        let n_ins = self.n_ins();
        if self.spec.lmax.is_none_or(|l| len < l) {
            let symbols = n_ins.members(&self.alphabet);
            for j in (1..=len + 1).filter(|&j| budget.allows(j)) {
                for &symbol in &symbols {
                    let a = EditAction::Insert { j, symbol };
                    col.push(x, apply_edit(x, a, self.spec.lmax).expect("checked bounds"), Move::Single(a));
                }
            }
        }
        if len >= 2 {
            for j in (1..=len).filter(|&j| budget.allows(j)) {
                if n_ins.contains(x.symbols()[len - j]) {
                    let a = EditAction::Delete { j };
                    col.push(x, apply_edit(x, a, None).expect("checked bounds"), Move::Single(a));
                }
            }
        }
    }

    fn add_substitutions(&self, x: &Sequence, col: &mut Collector) {
        let budget = self.budget();
        for j in (1..=x.len()).filter(|&j| budget.allows(j)) {
            for symbol in self.replacement_candidates(x, j) {
                let a = EditAction::Substitute { j, symbol };
                col.push(x, apply_edit(x, a, None).expect("checked bounds"), Move::Single(a));
            }
        }
    }

    fn add_double_substitutions(&self, x: &Sequence, col: &mut Collector) {
        let budget = self.budget();
        let len = x.len();
        for j1 in (1..=len).filter(|&j| budget.allows(j)) {
            for j2 in (j1 + 1..=len).filter(|&j| budget.allows(j)) {
                for s1 in self.replacement_candidates(x, j1) {
                    let a1 = EditAction::Substitute { j: j1, symbol: s1 };
                    let y = apply_edit(x, a1, None).expect("checked bounds");
                    for s2 in self.replacement_candidates(x, j2) {
                        let a2 = EditAction::Substitute { j: j2, symbol: s2 };
                        col.push(x, apply_edit(&y, a2, None).expect("checked bounds"), Move::Double(a1, a2));
                    }
                }
            }
        }
    }
}

impl Neighborhood for EditNeighborhood {
    fn neighbors(&self, x: &Sequence) -> Result<Vec<Neighbor>, NeighborhoodError> {
        let mut col = Collector::new(self.spec.multiset);
        match self.spec.kind {
            NeighborhoodKind::Tail | NeighborhoodKind::Zs => {
                self.add_insdel(x, &mut col);
                self.add_substitutions(x, &mut col);
            }
            NeighborhoodKind::ZsSub => self.add_substitutions(x, &mut col),
            NeighborhoodKind::ZsInsdel => self.add_insdel(x, &mut col),
            NeighborhoodKind::ZsDoublesub => {
                self.add_insdel(x, &mut col);
                self.add_substitutions(x, &mut col);
                self.add_double_substitutions(x, &mut col);
            }
            NeighborhoodKind::TopkPoint => unreachable!("rejected in EditNeighborhood::new"),
        }
        Ok(col.finish())
    }

    fn label(&self) -> String {
        self.spec.short_label()
    }
}

/// Prefix-dependent neighbourhood on the support of a [`TopKARModel`].
///
/// For `x = (x_1, .., x_n, end)`: substitute `x_n` by another top-k token
/// after `x_(1:n-1)`, insert a top-k token after `x_(1:n)`, or delete `x_n`.
/// Neighbours with zero mass are dropped.
#[derive(Clone, Copy, Debug)]
pub struct TopKPointNeighborhood<'a> {
    pub model: &'a TopKARModel,
    pub substitutions_only: bool,
}

impl Neighborhood for TopKPointNeighborhood<'_> {
    fn neighbors(&self, x: &Sequence) -> Result<Vec<Neighbor>, NeighborhoodError> {
        if !self.model.in_support(x) {
            return Err(NeighborhoodError::ZeroMass);
        }
        let end = self.model.end_token();
        let s = x.symbols();
        let n = s.len() - 1;
        let content = &s[..n];
        let mut col = Collector::new(false);
        let push = |y: Vec<Symbol>, a: EditAction, col: &mut Collector| {
            let y = Sequence::new(y).expect("non-empty");
            if self.model.in_support(&y) {
                col.push(x, y, Move::Single(a));
            }
        };
        if n >= 1 {
            for &t in self.model.topk_set(&content[..n - 1]) {
                if t != end && t != content[n - 1] {
                    let mut y = s.to_vec();
                    y[n - 1] = t;
                    push(y, EditAction::Substitute { j: 2, symbol: t }, &mut col);
                }
            }
        }
        if !self.substitutions_only {
            if n < self.model.max_content() {
                for &t in self.model.topk_set(content) {
                    if t != end {
                        let mut y = content.to_vec();
                        y.push(t);
                        y.push(end);
                        push(y, EditAction::Insert { j: 2, symbol: t }, &mut col);
                    }
                }
            }
            if n >= 1 {
                let mut y = content[..n - 1].to_vec();
                y.push(end);
                push(y, EditAction::Delete { j: 2 }, &mut col);
            }
        }
        Ok(col.finish())
    }

    fn label(&self) -> String {
        if self.substitutions_only { "topk'" } else { "topk" }.to_owned()
    }
}

/// A spec bound to a concrete model.
#[derive(Clone, Debug)]
pub enum BoundNeighborhood<'a> {
    Edit(EditNeighborhood),
    TopK(TopKPointNeighborhood<'a>),
}

impl Neighborhood for BoundNeighborhood<'_> {
    fn neighbors(&self, x: &Sequence) -> Result<Vec<Neighbor>, NeighborhoodError> {
        match self {
            BoundNeighborhood::Edit(n) => n.neighbors(x),
            BoundNeighborhood::TopK(n) => n.neighbors(x),
        }
    }

    fn label(&self) -> String {
        match self {
            BoundNeighborhood::Edit(n) => n.label(),
            BoundNeighborhood::TopK(n) => n.label(),
        }
    }
}

/// Convenience for the minimal neighbourhood: `(neighbour, action)` pairs.
pub fn tail_neighborhood(x: &Sequence, alphabet: Alphabet, n_rep: ReplacementRule, lmax: Option<usize>) -> Vec<(Sequence, EditAction)> {
    let spec = NeighborhoodSpec::tail().with_n_rep(n_rep).with_lmax(lmax);
    single_actions(&EditNeighborhood::new(spec, alphabet).expect("valid tail spec"), x)
}

/// `(neighbour, action)` pairs of a J-location (`zs*`) neighbourhood.
pub fn j_location_neighborhood(x: &Sequence, spec: &NeighborhoodSpec, alphabet: Alphabet) -> Result<Vec<(Sequence, EditAction)>, NeighborhoodError> {
    Ok(single_actions(&EditNeighborhood::new(spec.clone(), alphabet)?, x))
}

fn single_actions(n: &EditNeighborhood, x: &Sequence) -> Vec<(Sequence, EditAction)> {
    n.neighbors(x)
        .expect("edit neighbourhoods are total")
        .into_iter()
        .filter_map(|nb| match nb.action {
            Move::Single(a) => Some((nb.seq, a)),
            Move::Double(..) => None,
        })
        .collect()
}

/// Symmetry and strong-connectivity report for a neighbourhood graph on an
/// explicitly enumerated space.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphReport {
    pub states: usize,
    pub edges: usize,
    pub symmetric: bool,
    /// An edge `x -> y` whose reverse is missing.
    pub asymmetric_edge: Option<(Sequence, Sequence)>,
    pub strongly_connected: bool,
    /// A pair `(from, to)` with `to` unreachable from `from`.
    pub unreachable: Option<(Sequence, Sequence)>,
    /// Edges pointing outside the enumerated space (excluded from the graph).
    pub edges_leaving_space: usize,
}

impl fmt::Display for GraphReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "states: {}", self.states)?;
        writeln!(f, "edges: {}", self.edges)?;
        writeln!(f, "symmetric: {}", self.symmetric)?;
        if let Some((x, y)) = &self.asymmetric_edge {
            writeln!(f, "asymmetric_edge: {x:?} -> {y:?}")?;
        }
        writeln!(f, "strongly_connected: {}", self.strongly_connected)?;
        if let Some((x, y)) = &self.unreachable {
            writeln!(f, "unreachable: {x:?} -> {y:?}")?;
        }
        write!(f, "edges_leaving_space: {}", self.edges_leaving_space)
    }
}

/// Checks the graph of `neighborhood` restricted to `space`.
pub fn validate_graph<N: Neighborhood + ?Sized>(
    neighborhood: &N,
    space: &[Sequence],
    cap: usize,
) -> Result<GraphReport, NeighborhoodError> {
    if space.len() > cap {
        return Err(NeighborhoodError::StateCapExceeded { cap });
    }
    let index: HashMap<&Sequence, usize> = space.iter().enumerate().map(|(i, x)| (x, i)).collect();
    let mut adj: Vec<Vec<usize>> = Vec::with_capacity(space.len());
    let mut leaving = 0;
    for x in space {
        let mut row = Vec::new();
        for nb in neighborhood.neighbors(x)? {
            match index.get(&nb.seq) {
                Some(&i) => row.push(i),
                None => leaving += 1,
            }
        }
        row.sort_unstable();
        adj.push(row);
    }
    let edges = adj.iter().map(Vec::len).sum();
    let mut asymmetric_edge = None;
    'outer: for (i, row) in adj.iter().enumerate() {
        for &k in row {
            if adj[k].binary_search(&i).is_err() {
                asymmetric_edge = Some((space[i].clone(), space[k].clone()));
                break 'outer;
            }
        }
    }
    let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); space.len()];
    for (i, row) in adj.iter().enumerate() {
        for &k in row {
            reverse[k].push(i);
        }
    }
    let mut unreachable = None;
    if !space.is_empty() {
        if let Some(k) = first_unreached(&adj, 0) {
            unreachable = Some((space[0].clone(), space[k].clone()));
        } else if let Some(k) = first_unreached(&reverse, 0) {
            unreachable = Some((space[k].clone(), space[0].clone()));
        }
    }
    Ok(GraphReport {
        states: space.len(),
        edges,
        symmetric: asymmetric_edge.is_none(),
        asymmetric_edge,
        strongly_connected: unreachable.is_none(),
        unreachable,
        edges_leaving_space: leaving,
    })
}

fn first_unreached(adj: &[Vec<usize>], start: usize) -> Option<usize> {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(i) = queue.pop_front() {
        for &k in &adj[i] {
            if !seen[k] {
                seen[k] = true;
                queue.push_back(k);
            }
        }
    }
    seen.iter().position(|s| !s)
}

/// Validates an edit spec on the full space `S^1 ∪ .. ∪ S^lmax`.
pub fn validate_edit_graph(spec: &NeighborhoodSpec, alphabet: Alphabet, lmax: usize, cap: usize) -> Result<GraphReport, NeighborhoodError> {
    if space_size(alphabet.size, lmax).is_none_or(|n| n > cap) {
        return Err(NeighborhoodError::StateCapExceeded { cap });
    }
    let spec = spec.clone().with_lmax(Some(spec.lmax.map_or(lmax, |l| l.min(lmax))));
    let n = EditNeighborhood::new(spec, alphabet)?;
    validate_graph(&n, &enumerate_space(&alphabet, lmax), cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq;
    use std::collections::BTreeSet;

    fn a2() -> Alphabet {
        Alphabet::new(2).unwrap()
    }

    fn set(v: &[(Sequence, EditAction)]) -> BTreeSet<Sequence> {
        v.iter().map(|(s, _)| s.clone()).collect()
    }

    #[test]
    fn tail_example() {
        let n = tail_neighborhood(&seq![0, 1], a2(), ReplacementRule::Full, None);
        let expect: BTreeSet<Sequence> = [seq![0, 1, 0], seq![0, 1, 1], seq![0], seq![0, 0]].into_iter().collect();
        assert_eq!(n.len(), 4);
        assert_eq!(set(&n), expect);
    }

    #[test]
    fn tail_clipped_at_lmax_one() {
        let n = tail_neighborhood(&seq![0], a2(), ReplacementRule::Full, Some(1));
        assert_eq!(set(&n), [seq![1]].into_iter().collect());
    }

    #[test]
    fn j_one_equals_tail() {
        for m in 2..=3 {
            let a = Alphabet::new(m).unwrap();
            for x in enumerate_space(&a, 3) {
                let spec = NeighborhoodSpec::zs(LocationBudget::Finite(1)).with_lmax(Some(4));
                let zs = j_location_neighborhood(&x, &spec, a).unwrap();
                assert_eq!(set(&zs), set(&tail_neighborhood(&x, a, ReplacementRule::Full, Some(4))));
            }
        }
    }

    #[test]
    fn j_infinite_distinct_insertions() {
        let spec = NeighborhoodSpec::new(NeighborhoodKind::ZsInsdel, LocationBudget::Infinite);
        let n = j_location_neighborhood(&seq![0, 1], &spec, a2()).unwrap();
        let ins: Vec<_> = n.iter().filter(|(_, a)| matches!(a, EditAction::Insert { .. })).collect();
        // Brute force: every slot, every symbol, distinct results.
        let mut brute = BTreeSet::new();
        for pos in 0..=2 {
            for s in 0..2 {
                let mut v = vec![0, 1];
                v.insert(pos, s);
                brute.insert(v);
            }
        }
        assert_eq!(ins.len(), brute.len());
        assert_eq!(brute.len(), 4);
    }

    #[test]
    fn multiset_flag_counts_duplicate_actions() {
        let mut spec = NeighborhoodSpec::new(NeighborhoodKind::ZsInsdel, LocationBudget::Infinite);
        spec.multiset = true;
        let n = EditNeighborhood::new(spec, a2()).unwrap().neighbors(&seq![0, 1]).unwrap();
        let total: usize = n.iter().filter(|nb| nb.seq.len() == 3).map(|nb| nb.multiplicity).sum();
        assert_eq!(total, 6);
        let y = n.iter().find(|nb| nb.seq == seq![0, 0, 1]).unwrap();
        assert_eq!(y.multiplicity, 2);
    }

    #[test]
    fn zs_sub_preserves_length() {
        let spec = NeighborhoodSpec::new(NeighborhoodKind::ZsSub, LocationBudget::Infinite);
        let n = j_location_neighborhood(&seq![0, 1], &spec, a2()).unwrap();
        assert_eq!(set(&n), [seq![1, 1], seq![0, 0]].into_iter().collect());
    }

    #[test]
    fn double_substitution_adds_hamming_two() {
        let spec = NeighborhoodSpec::new(NeighborhoodKind::ZsDoublesub, LocationBudget::Infinite);
        let n = EditNeighborhood::new(spec, a2()).unwrap().neighbors(&seq![0, 1]).unwrap();
        let doubles: Vec<_> = n.iter().filter(|nb| matches!(nb.action, Move::Double(..))).collect();
        assert_eq!(doubles.len(), 1);
        assert_eq!(doubles[0].seq, seq![1, 0]);
        let x = seq![0, 1, 1, 0];
        for nb in EditNeighborhood::new(NeighborhoodSpec::new(NeighborhoodKind::ZsDoublesub, LocationBudget::Infinite), Alphabet::new(3).unwrap())
            .unwrap()
            .neighbors(&x)
            .unwrap()
        {
            if let Move::Double(..) = nb.action {
                assert_eq!(x.hamming_distance(&nb.seq), Some(2));
            }
        }
    }

    #[test]
    fn cyclic_rule() {
        assert_eq!(cyclic_symbol_neighborhood(8, 1, 0).unwrap(), vec![1, 7]);
        assert_eq!(cyclic_symbol_neighborhood(8, 2, 3).unwrap(), vec![1, 2, 4, 5]);
        assert_eq!(cyclic_symbol_neighborhood(4, 2, 0).unwrap(), vec![1, 2, 3]);
        assert!(cyclic_symbol_neighborhood(8, 5, 0).is_err());
        assert!(cyclic_symbol_neighborhood(8, 0, 0).is_err());
        assert_eq!(ReplacementRule::Full.candidates(5, 2).len(), 4);
    }

    #[test]
    fn cyclic_symbol_graph_connected() {
        for m in 2..=12usize {
            for d in 1..=m / 2 {
                let mut seen = vec![false; m];
                let mut stack = vec![0 as Symbol];
                seen[0] = true;
                while let Some(s) = stack.pop() {
                    for t in cyclic_symbol_neighborhood(m, d, s).unwrap() {
                        if !seen[t as usize] {
                            seen[t as usize] = true;
                            stack.push(t);
                        }
                    }
                }
                assert!(seen.iter().all(|&v| v), "m={m} d={d}");
            }
        }
    }

    #[test]
    fn symmetry_of_all_edit_kinds() {
        use NeighborhoodKind::*;
        for kind in [Tail, Zs, ZsSub, ZsInsdel, ZsDoublesub] {
            for j in [LocationBudget::Finite(1), LocationBudget::Finite(2), LocationBudget::Infinite] {
                for (m, rule) in [(2, ReplacementRule::Full), (3, ReplacementRule::Full), (5, ReplacementRule::Cyclic(1))] {
                    let mut spec = NeighborhoodSpec::new(kind, j).with_n_rep(rule);
                    spec.n_ins = if m == 5 { SymbolSet::Only(vec![0, 2]) } else { SymbolSet::Full };
                    let lmax = if m == 5 { 3 } else { 4 };
                    let r = validate_edit_graph(&spec, Alphabet::new(m).unwrap(), lmax, DEFAULT_STATE_CAP).unwrap();
                    assert!(r.symmetric, "{kind:?} {j} m={m}: {:?}", r.asymmetric_edge);
                }
            }
        }
    }

    #[test]
    fn graph_reports() {
        let r = validate_edit_graph(&NeighborhoodSpec::zs(LocationBudget::Finite(1)), a2(), 4, DEFAULT_STATE_CAP).unwrap();
        assert!(r.symmetric && r.strongly_connected);
        assert_eq!(r.states, 30);
        assert_eq!(r.edges_leaving_space, 0);
        let sub = NeighborhoodSpec::new(NeighborhoodKind::ZsSub, LocationBudget::Infinite);
        let r = validate_edit_graph(&sub, a2(), 4, DEFAULT_STATE_CAP).unwrap();
        assert!(r.symmetric && !r.strongly_connected);
        assert!(matches!(
            validate_edit_graph(&sub, a2(), 30, DEFAULT_STATE_CAP),
            Err(NeighborhoodError::StateCapExceeded { .. })
        ));
    }

    #[test]
    fn literal_anchor_differs_from_positional() {
        let mut spec = NeighborhoodSpec::new(NeighborhoodKind::ZsSub, LocationBudget::Infinite).with_n_rep(ReplacementRule::Cyclic(1));
        let a = Alphabet::new(6).unwrap();
        let x = seq![0, 3];
        let pos = set(&j_location_neighborhood(&x, &spec, a).unwrap());
        spec.anchor = ReplacementAnchor::LastSymbol;
        let lit = set(&j_location_neighborhood(&x, &spec, a).unwrap());
        assert!(pos.contains(&seq![1, 3]) && pos.contains(&seq![5, 3]));
        assert!(lit.contains(&seq![2, 3]) && lit.contains(&seq![4, 3]));
        assert_ne!(pos, lit);
    }

    #[test]
    fn spec_json() {
        let s: NeighborhoodSpec =
            serde_json::from_str(r#"{"kind":"zs","J":"inf","n_ins":"full","n_rep":{"cyclic":2},"lmax":9}"#).unwrap();
        assert_eq!(s.j, LocationBudget::Infinite);
        assert_eq!(s.n_rep, ReplacementRule::Cyclic(2));
        assert_eq!(s.lmax, Some(9));
        let back: NeighborhoodSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        let t: NeighborhoodSpec = serde_json::from_str(r#"{"kind":"zs_sub","J":3,"n_ins":[1,0],"n_rep":"full"}"#).unwrap();
        assert_eq!(t.n_ins, SymbolSet::Only(vec![0, 1]));
        assert!(serde_json::from_str::<NeighborhoodSpec>(r#"{"kind":"zs","J":0}"#).is_err());
    }
}
