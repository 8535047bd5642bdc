//! Dense integer alphabets.
//!
//! Every stage of a phase sorts records keyed by symbols, so the symbols that
//! occur in the working text must form a contiguous interval of integers. This
//! module owns that interval, the mapping from working ids back to the stable
//! canonical ids recorded in the grammar, and the LSD radix sorter every other
//! module uses.
//!
//! Two id spaces exist side by side:
//!
//! * **canonical ids** are the ids written into grammar rules. Terminals are
//!   `0..σ`, and the rule with index `k` has id `σ + k`. They never change.
//! * **working ids** are what the [`WorkingText`] stores. At the start of each
//!   phase they are renamed to a fresh interval in first-occurrence order, and
//!   symbols created during the phase are appended to the end of the interval.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::WorkingText;

/// Integer identity of a letter. Terminals and introduced letters share one space.
pub type SymbolId = u32;

/// Width of one radix digit.
pub const DIGIT_BITS: u32 = 16;

/// Widest allowed key component, in bits.
pub const MAX_KEY_BITS: u32 = 48;

/// Largest allowed radix bound for one key component.
pub const MAX_RADIX_BOUND: u64 = 1 << MAX_KEY_BITS;

/// Default ceiling for token values.
pub const DEFAULT_TOKEN_CEILING: u64 = u32::MAX as u64;

const NO_ID: SymbolId = SymbolId::MAX;

/// What the raw terminal values denote.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    #[default]
    Bytes,
    Tokens,
}

impl InputKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InputKind::Bytes => "bytes",
            InputKind::Tokens => "tokens",
        }
    }
}

impl fmt::Display for InputKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InputKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bytes" => Ok(InputKind::Bytes),
            "tokens" => Ok(InputKind::Tokens),
            other => Err(format!(
                "unknown input kind {other:?} (expected bytes or tokens)"
            )),
        }
    }
}

/// A borrowed raw input.
#[derive(Debug, Clone, Copy)]
pub enum RawInput<'a> {
    Bytes(&'a [u8]),
    Tokens(&'a [u64]),
}

impl RawInput<'_> {
    pub fn len(&self) -> usize {
        match self {
            RawInput::Bytes(b) => b.len(),
            RawInput::Tokens(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> InputKind {
        match self {
            RawInput::Bytes(_) => InputKind::Bytes,
            RawInput::Tokens(_) => InputKind::Tokens,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlphabetError {
    #[error("token {value} at index {index} exceeds the ceiling {ceiling}")]
    TokenAboveCeiling {
        index: usize,
        value: u64,
        ceiling: u64,
    },
    #[error("token ceiling {0} is wider than {MAX_KEY_BITS} bits")]
    CeilingTooWide(u64),
    #[error("malformed token {token:?} at index {index}")]
    MalformedToken { index: usize, token: String },
    #[error("input of {0} symbols does not fit 32-bit symbol ids")]
    InputTooLong(usize),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SortError {
    #[error("keys must have between 1 and 3 components, got {0}")]
    Arity(usize),
    #[error("radix bound {0} is wider than {MAX_KEY_BITS} bits")]
    BoundTooWide(u64),
    #[error("record {record}: component {component} is {value}, not below its bound {bound}")]
    OutOfBound {
        record: usize,
        component: usize,
        value: u64,
        bound: u64,
    },
}

/// A record for [`radix_sort`]: a key of up to three components and an opaque payload.
///
/// Components beyond the arity given by the bounds slice are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SortRecord {
    pub key: [u64; 3],
    pub payload: usize,
}

impl SortRecord {
    pub fn new(key: &[u64], payload: usize) -> Self {
        let mut padded = [0; 3];
        padded[..key.len()].copy_from_slice(key);
        SortRecord {
            key: padded,
            payload,
        }
    }
}

/// Stable lexicographic LSD radix sort.
///
/// `bounds[c]` is an exclusive upper bound for key component `c`; the number of
/// bounds is the key arity. Each component is sorted by 16-bit digits, so the
/// cost is `O(n + bound)` per component for bounds up to `2^16` and
/// `O(n + 2^16)` per digit beyond that.
pub fn radix_sort(records: Vec<SortRecord>, bounds: &[u64]) -> Result<Vec<SortRecord>, SortError> {
    if bounds.is_empty() || bounds.len() > 3 {
        return Err(SortError::Arity(bounds.len()));
    }
    if let Some(&b) = bounds.iter().find(|&&b| b > MAX_RADIX_BOUND) {
        return Err(SortError::BoundTooWide(b));
    }
    for (i, r) in records.iter().enumerate() {
        for (c, &bound) in bounds.iter().enumerate() {
            if r.key[c] >= bound {
                return Err(SortError::OutOfBound {
                    record: i,
                    component: c,
                    value: r.key[c],
                    bound,
                });
            }
        }
    }
    Ok(radix_sort_unchecked(records, bounds))
}

/// [`radix_sort`] without validation; keys must already respect `bounds`.
pub(crate) fn radix_sort_unchecked(
    mut records: Vec<SortRecord>,
    bounds: &[u64],
) -> Vec<SortRecord> {
    if records.len() < 2 {
        return records;
    }
    let mut scratch = vec![
        SortRecord {
            key: [0; 3],
            payload: 0
        };
        records.len()
    ];
    let mut counts = Vec::new();
    for component in (0..bounds.len()).rev() {
        let bound = bounds[component];
        if bound <= 1 {
            continue;
        }
        let mut shift = 0;
        while shift < MAX_KEY_BITS && (bound - 1) >> shift > 0 {
            let remaining = ((bound - 1) >> shift) + 1;
            let buckets = remaining.min(1 << DIGIT_BITS) as usize;
            let mask = (1u64 << DIGIT_BITS) - 1;
            counts.clear();
            counts.resize(buckets + 1, 0usize);
            for r in &records {
                counts[((r.key[component] >> shift) & mask) as usize + 1] += 1;
            }
            for i in 1..counts.len() {
                counts[i] += counts[i - 1];
            }
            for r in &records {
                let digit = ((r.key[component] >> shift) & mask) as usize;
                scratch[counts[digit]] = *r;
                counts[digit] += 1;
            }
            std::mem::swap(&mut records, &mut scratch);
            shift += DIGIT_BITS;
        }
    }
    records
}

/// Stable LSD radix sort of compact `u32` triples by the listed components,
/// most significant first. Every sorted component must be below `bound`.
pub(crate) fn radix_sort_triples(
    mut records: Vec<[u32; 3]>,
    components: &[usize],
    bound: u32,
) -> Vec<[u32; 3]> {
    if records.len() < 2 || bound <= 1 {
        return records;
    }
    let mut scratch = vec![[0u32; 3]; records.len()];
    let mut counts = vec![0usize; (1 << DIGIT_BITS) + 1];
    let mask = (1u32 << DIGIT_BITS) - 1;
    for &c in components.iter().rev() {
        let mut shift = 0;
        while shift < 32 && (bound - 1) >> shift > 0 {
            let buckets = ((((bound - 1) >> shift) as usize) + 1).min(1 << DIGIT_BITS);
            counts[..=buckets].fill(0);
            for r in &records {
                counts[((r[c] >> shift) & mask) as usize + 1] += 1;
            }
            for i in 1..=buckets {
                counts[i] += counts[i - 1];
            }
            for r in &records {
                let digit = ((r[c] >> shift) & mask) as usize;
                scratch[counts[digit]] = *r;
                counts[digit] += 1;
            }
            std::mem::swap(&mut records, &mut scratch);
            shift += DIGIT_BITS;
        }
    }
    records
}

/// Mapping between raw terminals, canonical ids and the current working interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlphabetMap {
    kind: InputKind,
    terminals: Vec<u64>,
    base: SymbolId,
    alias: Vec<SymbolId>,
}

impl AlphabetMap {
    fn with_terminals(kind: InputKind, terminals: Vec<u64>) -> Self {
        let alias = (0..terminals.len() as SymbolId).collect();
        AlphabetMap {
            kind,
            terminals,
            base: 0,
            alias,
        }
    }

    pub fn kind(&self) -> InputKind {
        self.kind
    }

    /// σ, the number of distinct terminals.
    pub fn terminal_count(&self) -> usize {
        self.terminals.len()
    }

    /// Raw terminal values indexed by terminal id.
    pub fn terminals(&self) -> &[u64] {
        &self.terminals
    }

    pub fn terminal_value(&self, id: SymbolId) -> Option<u64> {
        self.terminals.get(id as usize).copied()
    }

    /// The current working interval `[base, base + span)`.
    pub fn interval(&self) -> Range<SymbolId> {
        self.base..self.base + self.alias.len() as SymbolId
    }

    pub fn base(&self) -> SymbolId {
        self.base
    }

    /// Number of working ids in the current interval.
    pub fn span(&self) -> usize {
        self.alias.len()
    }

    /// Canonical id of a working id in the current interval.
    ///
    /// Panics if `working` lies outside the interval.
    pub fn canonical(&self, working: SymbolId) -> SymbolId {
        self.alias[(working - self.base) as usize]
    }

    /// Dense offset of a working id inside the interval.
    pub(crate) fn offset(&self, working: SymbolId) -> usize {
        (working - self.base) as usize
    }

    /// Allocates the next working id for a newly created canonical symbol.
    pub fn allocate(&mut self, canonical: SymbolId) -> SymbolId {
        let id = self.base as u64 + self.alias.len() as u64;
        assert!(id < NO_ID as u64, "working id space exhausted");
        self.alias.push(canonical);
        id as SymbolId
    }

    /// Renames the symbols of `text` to a fresh interval in first-occurrence order.
    ///
    /// The new interval starts right after the current one. Ids that no longer
    /// occur in the text are dropped from the interval.
    pub fn rename_dense(&mut self, text: &mut WorkingText) {
        if text.is_empty() {
            return;
        }
        let span = self.alias.len();
        let mut next = self.base as u64 + span as u64;
        let new_base = next as SymbolId;
        let mut renamed = vec![NO_ID; span];
        let mut new_alias = Vec::new();
        text.map_live(|sym| {
            let off = (sym - self.base) as usize;
            if renamed[off] == NO_ID {
                assert!(next < NO_ID as u64, "working id space exhausted");
                renamed[off] = next as SymbolId;
                new_alias.push(self.alias[off]);
                next += 1;
            }
            renamed[off]
        });
        self.base = new_base;
        self.alias = new_alias;
    }
}

/// Builds the working text and alphabet for a raw input.
pub fn ingest(
    raw: RawInput<'_>,
    token_ceiling: u64,
) -> Result<(WorkingText, AlphabetMap), AlphabetError> {
    match raw {
        RawInput::Bytes(b) => ingest_bytes(b),
        RawInput::Tokens(t) => ingest_tokens(t, token_ceiling),
    }
}

/// Numbers the distinct bytes of `input` in first-occurrence order.
pub fn ingest_bytes(input: &[u8]) -> Result<(WorkingText, AlphabetMap), AlphabetError> {
    check_length(input.len())?;
    let mut id_of = [NO_ID; 256];
    let mut terminals = Vec::new();
    let cells = input
        .iter()
        .map(|&b| {
            if id_of[b as usize] == NO_ID {
                id_of[b as usize] = terminals.len() as SymbolId;
                terminals.push(b as u64);
            }
            id_of[b as usize]
        })
        .collect();
    Ok((
        WorkingText::new(cells),
        AlphabetMap::with_terminals(InputKind::Bytes, terminals),
    ))
}

/// Numbers the distinct tokens of `input` in first-occurrence order.
///
/// Uses two radix sorts: one groups equal values, the second orders the
/// groups by their first position.
pub fn ingest_tokens(
    input: &[u64],
    ceiling: u64,
) -> Result<(WorkingText, AlphabetMap), AlphabetError> {
    if ceiling >= MAX_RADIX_BOUND {
        return Err(AlphabetError::CeilingTooWide(ceiling));
    }
    check_length(input.len())?;
    if let Some((index, &value)) = input.iter().enumerate().find(|(_, &v)| v > ceiling) {
        return Err(AlphabetError::TokenAboveCeiling {
            index,
            value,
            ceiling,
        });
    }
    let n = input.len();
    let by_value = radix_sort_unchecked(
        input
            .iter()
            .enumerate()
            .map(|(p, &v)| SortRecord::new(&[v], p))
            .collect(),
        &[ceiling + 1],
    );
    // group id per position, and the first position of each group
    let mut group_of = vec![0usize; n];
    let mut firsts = Vec::new();
    for (i, r) in by_value.iter().enumerate() {
        if i == 0 || by_value[i - 1].key[0] != r.key[0] {
            firsts.push(SortRecord::new(&[r.payload as u64], firsts.len()));
        }
        group_of[r.payload] = firsts.len() - 1;
    }
    let ordered = radix_sort_unchecked(firsts, &[n as u64]);
    let mut id_of_group = vec![0 as SymbolId; ordered.len()];
    let mut terminals = Vec::with_capacity(ordered.len());
    for (id, r) in ordered.iter().enumerate() {
        id_of_group[r.payload] = id as SymbolId;
        terminals.push(input[r.key[0] as usize]);
    }
    let cells = group_of.iter().map(|&g| id_of_group[g]).collect();
    Ok((
        WorkingText::new(cells),
        AlphabetMap::with_terminals(InputKind::Tokens, terminals),
    ))
}

fn check_length(n: usize) -> Result<(), AlphabetError> {
    // leave headroom for the introduced symbols and the tombstone marker
    if n as u64 >= (NO_ID as u64) / 4 {
        Err(AlphabetError::InputTooLong(n))
    } else {
        Ok(())
    }
}

/// Parses a whitespace-separated list of unsigned decimal tokens.
pub fn parse_tokens(text: &str) -> Result<Vec<u64>, AlphabetError> {
    text.split_ascii_whitespace()
        .enumerate()
        .map(|(index, tok)| {
            if !tok.bytes().all(|b| b.is_ascii_digit()) {
                return Err(AlphabetError::MalformedToken {
                    index,
                    token: tok.to_string(),
                });
            }
            tok.parse::<u64>()
                .map_err(|_| AlphabetError::MalformedToken {
                    index,
                    token: tok.to_string(),
                })
        })
        .collect()
}
