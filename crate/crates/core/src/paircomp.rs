//! Pair compression driven by a greedy left/right partition of the alphabet.
//!
//! Letters are split into a left class and a right class. Every occurrence of
//! a pair `ab` with `a` left and `b` right is replaced simultaneously; such
//! occurrences cannot overlap because the classes are disjoint. The greedy
//! partition covers at least `(|T| - 1) / 4` of the pair occurrences.

use thiserror::Error;

use crate::alphabet::{radix_sort_triples, AlphabetMap, SymbolId};
use crate::grammar::Slp;
use crate::text::{Position, TextError, WorkingText};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PairError {
    #[error("equal neighbors {symbol} {symbol} at cell {index}; blocks must be compressed first")]
    EqualNeighbors { index: usize, symbol: SymbolId },
    #[error("adjacency built in epoch {built}, text is in epoch {current}")]
    StaleAdjacency { built: u32, current: u32 },
    #[error(transparent)]
    Text(#[from] TextError),
}

/// One side of the adjacency: for each letter, its neighbors and the
/// occurrence positions of each pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct NeighborLists {
    /// `letter_start[a]..letter_start[a + 1]` indexes `neighbors` for letter offset `a`.
    letter_start: Vec<usize>,
    /// `(neighbor offset, start in occurrences)`, with a trailing sentinel.
    neighbors: Vec<(u32, usize)>,
    occurrences: Vec<usize>,
}

impl NeighborLists {
    /// Groups triples sorted by `(r[first], r[1 - first])`, payload in `r[2]`.
    fn from_sorted(records: &[[u32; 3]], first: usize, span: usize) -> Self {
        let second = 1 - first;
        let mut letter_start = vec![0usize; span + 1];
        let mut neighbors = Vec::new();
        let mut occurrences = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            let prev = i.checked_sub(1).map(|p| &records[p]);
            if prev.is_none_or(|p| p[first] != r[first] || p[second] != r[second]) {
                letter_start[r[first] as usize + 1] += 1;
                neighbors.push((r[second], occurrences.len()));
            }
            occurrences.push(r[2] as usize);
        }
        for a in 1..=span {
            letter_start[a] += letter_start[a - 1];
        }
        neighbors.push((u32::MAX, occurrences.len()));
        NeighborLists {
            letter_start,
            neighbors,
            occurrences,
        }
    }

    fn of(&self, offset: usize) -> impl Iterator<Item = (usize, &[usize])> + '_ {
        let (lo, hi) = (self.letter_start[offset], self.letter_start[offset + 1]);
        (lo..hi).map(move |g| {
            let (b, start) = self.neighbors[g];
            let end = self.neighbors[g + 1].1;
            (b as usize, &self.occurrences[start..end])
        })
    }

    fn is_empty_for(&self, offset: usize) -> bool {
        self.letter_start[offset] == self.letter_start[offset + 1]
    }
}

/// Right and left lists for every letter of the working interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    base: SymbolId,
    span: usize,
    epoch: u32,
    right: NeighborLists,
    left: NeighborLists,
}

impl Adjacency {
    pub fn base(&self) -> SymbolId {
        self.base
    }

    pub fn span(&self) -> usize {
        self.span
    }

    fn in_range(&self, a: SymbolId) -> Option<usize> {
        let off = a.checked_sub(self.base)? as usize;
        (off < self.span).then_some(off)
    }

    /// `(b, positions of a)` for every pair `ab` in the text.
    pub fn right(&self, a: SymbolId) -> impl Iterator<Item = (SymbolId, &[usize])> + '_ {
        let base = self.base;
        self.in_range(a)
            .into_iter()
            .flat_map(move |off| self.right.of(off))
            .map(move |(b, occ)| (base + b as SymbolId, occ))
    }

    /// `(b, positions of b)` for every pair `ba` in the text.
    pub fn left(&self, a: SymbolId) -> impl Iterator<Item = (SymbolId, &[usize])> + '_ {
        let base = self.base;
        self.in_range(a)
            .into_iter()
            .flat_map(move |off| self.left.of(off))
            .map(move |(b, occ)| (base + b as SymbolId, occ))
    }

    /// Total number of listed pair occurrences, `|T| - 1` for a non-empty text.
    pub fn total_occurrences(&self) -> usize {
        self.right.occurrences.len()
    }
}

/// Lists all pairs of the text with their occurrences.
///
/// The `(a, b, position)` records are radix sorted by `(a, b)` for the right
/// lists; a further stable sort by `b` gives the `(b, a)` order of the left lists.
pub fn build_adjacency(text: &WorkingText, alphabet: &AlphabetMap) -> Result<Adjacency, PairError> {
    let span = alphabet.span();
    let mut records = Vec::with_capacity(text.len().saturating_sub(1));
    for (index, a, b) in text.live_pairs() {
        if a == b {
            return Err(PairError::EqualNeighbors { index, symbol: a });
        }
        let (oa, ob) = (alphabet.offset(a) as u32, alphabet.offset(b) as u32);
        records.push([oa, ob, index as u32]);
    }
    let by_first = radix_sort_triples(records, &[0, 1], span as u32);
    let right = NeighborLists::from_sorted(&by_first, 0, span);
    let by_second = radix_sort_triples(by_first, &[1], span as u32);
    let left = NeighborLists::from_sorted(&by_second, 1, span);
    Ok(Adjacency {
        base: alphabet.base(),
        span,
        epoch: text.epoch(),
        right,
        left,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct BitSet {
    words: Vec<u64>,
}

impl BitSet {
    fn new(n: usize) -> Self {
        BitSet {
            words: vec![0; n.div_ceil(64)],
        }
    }

    fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    fn contains(&self, i: usize) -> bool {
        self.words
            .get(i / 64)
            .is_some_and(|w| w >> (i % 64) & 1 == 1)
    }
}

/// A split of the working interval into left and right letters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    base: SymbolId,
    span: usize,
    left: BitSet,
    right: BitSet,
    count_l: Vec<u64>,
    count_r: Vec<u64>,
    cross_coverage: usize,
    coverage: usize,
    swapped: bool,
}

impl Partition {
    /// The side of a working id, or `None` for ids outside the partitioned interval.
    pub fn side(&self, a: SymbolId) -> Option<Side> {
        let off = a.checked_sub(self.base)? as usize;
        if off >= self.span {
            None
        } else if self.left.contains(off) {
            Some(Side::Left)
        } else if self.right.contains(off) {
            Some(Side::Right)
        } else {
            None
        }
    }

    pub fn is_left(&self, a: SymbolId) -> bool {
        self.side(a) == Some(Side::Left)
    }

    pub fn is_right(&self, a: SymbolId) -> bool {
        self.side(a) == Some(Side::Right)
    }

    /// Occurrences of left-right pairs, the ones that will be compressed.
    pub fn coverage(&self) -> usize {
        self.coverage
    }

    /// Occurrences covered by left-right or right-left pairs, before the final swap.
    pub fn cross_coverage(&self) -> usize {
        self.cross_coverage
    }

    pub fn swapped(&self) -> bool {
        self.swapped
    }

    /// Greedy counters `(count_l, count_r)` at the time `a` was assigned.
    pub fn counters(&self, a: SymbolId) -> Option<(u64, u64)> {
        let off = a.checked_sub(self.base)? as usize;
        Some((*self.count_l.get(off)?, *self.count_r.get(off)?))
    }

    pub fn letters(&self, side: Side) -> impl Iterator<Item = SymbolId> + '_ {
        let set = match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        };
        (0..self.span)
            .filter(move |&o| set.contains(o))
            .map(move |o| self.base + o as SymbolId)
    }
}

/// Greedy left/right assignment in ascending id order, followed by the swap
/// that keeps the larger of the two directed coverages.
pub fn greedy_partition(adjacency: &Adjacency, text: &WorkingText) -> Partition {
    let span = adjacency.span;
    let mut count_l = vec![0u64; span];
    let mut count_r = vec![0u64; span];
    let mut side: Vec<Option<Side>> = vec![None; span];
    for a in 0..span {
        if adjacency.right.is_empty_for(a) && adjacency.left.is_empty_for(a) {
            continue;
        }
        let choice = if count_r[a] >= count_l[a] {
            Side::Left
        } else {
            Side::Right
        };
        side[a] = Some(choice);
        let counter = match choice {
            Side::Left => &mut count_l,
            Side::Right => &mut count_r,
        };
        for (b, occ) in adjacency.right.of(a).chain(adjacency.left.of(a)) {
            if side[b].is_none() {
                counter[b] += occ.len() as u64;
            }
        }
    }

    let mut lr = 0;
    let mut rl = 0;
    for (_, a, b) in text.live_pairs() {
        let sa = side[(a - adjacency.base) as usize];
        let sb = side[(b - adjacency.base) as usize];
        match (sa, sb) {
            (Some(Side::Left), Some(Side::Right)) => lr += 1,
            (Some(Side::Right), Some(Side::Left)) => rl += 1,
            _ => {}
        }
    }
    let swapped = rl > lr;
    let mut left = BitSet::new(span);
    let mut right = BitSet::new(span);
    for (a, s) in side.iter().enumerate() {
        let s = match (s, swapped) {
            (None, _) => Side::Left,
            (Some(Side::Left), false) | (Some(Side::Right), true) => Side::Left,
            _ => Side::Right,
        };
        match s {
            Side::Left => left.insert(a),
            Side::Right => right.insert(a),
        }
    }
    Partition {
        base: adjacency.base,
        span,
        left,
        right,
        count_l,
        count_r,
        cross_coverage: lr + rl,
        coverage: lr.max(rl),
        swapped,
    }
}

/// One `ab -> c` replacement in canonical ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairReplacement {
    pub left: SymbolId,
    pub right: SymbolId,
    pub symbol: SymbolId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairStage {
    pub occurrences: usize,
    pub replacements: Vec<PairReplacement>,
}

/// Replaces every occurrence of every left-right pair by a fresh letter.
pub fn compress_pairs(
    text: &mut WorkingText,
    partition: &Partition,
    adjacency: &Adjacency,
    alphabet: &mut AlphabetMap,
    slp: &mut Slp,
) -> Result<PairStage, PairError> {
    if adjacency.epoch != text.epoch() {
        return Err(PairError::StaleAdjacency {
            built: adjacency.epoch,
            current: text.epoch(),
        });
    }
    let mut stage = PairStage::default();
    for a in partition.letters(Side::Left) {
        for (b, occ) in adjacency.right(a) {
            if !partition.is_right(b) {
                continue;
            }
            let (ca, cb) = (alphabet.canonical(a), alphabet.canonical(b));
            let c = slp.push_rule(&[ca, cb]);
            let fresh = alphabet.allocate(c);
            for &p in occ {
                text.replace_pair(Position::new(p, adjacency.epoch), fresh)?;
            }
            stage.occurrences += occ.len();
            stage.replacements.push(PairReplacement {
                left: ca,
                right: cb,
                symbol: c,
            });
        }
    }
    Ok(stage)
}
