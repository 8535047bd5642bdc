//! Maximal block compression.
//!
//! Every maximal run `a^ℓ` with `ℓ ≥ 2` is replaced by one letter `a_ℓ`. For
//! each letter the distinct lengths `ℓ1 < … < ℓk` are represented together:
//!
//! * power letters `a_{2^i} -> a_{2^{i-1}} a_{2^{i-1}}` up to the largest gap,
//! * one difference letter per distinct gap `ℓi - ℓ(i-1)`, spelled out by the
//!   binary expansion of the gap over the power letters,
//! * chain rules `a_{ℓi} -> a_{ℓi - ℓ(i-1)} a_{ℓ(i-1)}`.
//!
//! The total cost is at most `4 · Σ (1 + log2(ℓi - ℓ(i-1)))`.

use std::collections::HashMap;

use thiserror::Error;

use crate::alphabet::{radix_sort_unchecked, AlphabetMap, SortRecord, SymbolId};
use crate::grammar::Slp;
use crate::text::{Position, TextError, WorkingText};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BlockError {
    #[error("block lengths must be at least 2, got {0}")]
    TooShort(u64),
    #[error("block lengths must be strictly increasing ({prev} then {next})")]
    NotIncreasing { prev: u64, next: u64 },
    #[error("letter {0} is not defined in the grammar")]
    UnknownLetter(SymbolId),
    #[error(transparent)]
    Text(#[from] TextError),
}

/// A maximal block `letter^length` starting at `pos`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockRecord {
    pub letter: SymbolId,
    pub length: u64,
    pub pos: Position,
}

/// The representation emitted for one letter's block lengths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockRepPlan {
    pub letter: SymbolId,
    pub lengths: Vec<u64>,
    /// `symbols[i]` derives `letter^lengths[i]`.
    pub symbols: Vec<SymbolId>,
    /// `powers[i]` derives `letter^(2^i)`; `powers[0]` is the letter itself.
    pub powers: Vec<SymbolId>,
    /// Total body length of the emitted rules.
    pub cost: usize,
}

/// Cost ceiling of the representation for a list of lengths: `4 · Σ (1 + log2 gap)`.
pub fn representation_bound(lengths: &[u64]) -> f64 {
    let mut prev = 0;
    let mut total = 0.0;
    for &l in lengths {
        total += 1.0 + ((l - prev) as f64).log2();
        prev = l;
    }
    4.0 * total
}

/// Emits rules deriving `letter^ℓ` for each `ℓ` in the strictly increasing `lengths`.
///
/// `letter` is a canonical id already defined in `slp`.
pub fn build_block_representation(
    letter: SymbolId,
    lengths: &[u64],
    slp: &mut Slp,
) -> Result<BlockRepPlan, BlockError> {
    if letter >= slp.symbol_bound() {
        return Err(BlockError::UnknownLetter(letter));
    }
    let mut prev = 0;
    let mut max_gap = 0;
    for &l in lengths {
        if l < 2 {
            return Err(BlockError::TooShort(l));
        }
        if l <= prev {
            return Err(BlockError::NotIncreasing { prev, next: l });
        }
        max_gap = max_gap.max(l - prev);
        prev = l;
    }
    Ok(build_unchecked(letter, lengths, max_gap, slp))
}

fn build_unchecked(letter: SymbolId, lengths: &[u64], max_gap: u64, slp: &mut Slp) -> BlockRepPlan {
    let size_before = slp.size();
    let mut powers = vec![letter];
    if max_gap > 0 {
        let top = 63 - max_gap.leading_zeros() as usize;
        for i in 1..=top {
            let half = powers[i - 1];
            powers.push(slp.push_rule(&[half, half]));
        }
    }

    let mut differences: HashMap<u64, SymbolId> = HashMap::new();
    let mut body = Vec::with_capacity(64);
    let mut difference = |gap: u64, slp: &mut Slp| -> SymbolId {
        if gap.is_power_of_two() {
            return powers[gap.trailing_zeros() as usize];
        }
        *differences.entry(gap).or_insert_with(|| {
            body.clear();
            body.extend(
                (0..64)
                    .rev()
                    .filter(|bit| gap >> bit & 1 == 1)
                    .map(|bit| powers[bit as usize]),
            );
            slp.push_rule(&body)
        })
    };

    let mut symbols = Vec::with_capacity(lengths.len());
    let mut prev_len = 0;
    for &l in lengths {
        let d = difference(l - prev_len, slp);
        let s = match symbols.last() {
            None => d,
            Some(&prev_sym) => slp.push_rule(&[d, prev_sym]),
        };
        symbols.push(s);
        prev_len = l;
    }
    BlockRepPlan {
        letter,
        lengths: lengths.to_vec(),
        symbols,
        powers,
        cost: slp.size() - size_before,
    }
}

/// Lists the maximal blocks of length at least 2, sorted by `(letter, length)`.
pub fn scan_blocks(text: &WorkingText, alphabet: &AlphabetMap) -> Vec<BlockRecord> {
    let epoch = text.epoch();
    let mut records = Vec::new();
    let mut current: Option<(usize, SymbolId, u64)> = None;
    let flush = |run: Option<(usize, SymbolId, u64)>, records: &mut Vec<SortRecord>| {
        if let Some((start, sym, len)) = run {
            if len >= 2 {
                records.push(SortRecord::new(&[alphabet.offset(sym) as u64, len], start));
            }
        }
    };
    for (i, sym) in text.live_cells() {
        match &mut current {
            Some((_, s, len)) if *s == sym => *len += 1,
            _ => {
                flush(current.take(), &mut records);
                current = Some((i, sym, 1));
            }
        }
    }
    flush(current, &mut records);
    let bounds = [alphabet.span() as u64, text.len() as u64 + 1];
    radix_sort_unchecked(records, &bounds)
        .into_iter()
        .map(|r| BlockRecord {
            letter: alphabet.base() + r.key[0] as SymbolId,
            length: r.key[1],
            pos: Position::new(r.payload, epoch),
        })
        .collect()
}

/// One `(letter, length) -> symbol` replacement, in canonical ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockReplacement {
    pub letter: SymbolId,
    pub length: u64,
    pub symbol: SymbolId,
}

/// What a block compression stage did.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlockStage {
    /// Blocks replaced in the text.
    pub occurrences: usize,
    /// Distinct `(letter, length)` pairs, in canonical ids.
    pub replacements: Vec<BlockReplacement>,
    /// Total body length of the emitted rules.
    pub cost: usize,
}

/// Replaces every listed block and emits the representation rules.
///
/// `records` must come from [`scan_blocks`] on this text in the current epoch.
pub fn compress_blocks(
    text: &mut WorkingText,
    records: &[BlockRecord],
    alphabet: &mut AlphabetMap,
    slp: &mut Slp,
) -> Result<BlockStage, BlockError> {
    let mut stage = BlockStage::default();
    let mut lengths = Vec::new();
    let mut start = 0;
    while start < records.len() {
        let letter = records[start].letter;
        let end = start
            + records[start..]
                .iter()
                .position(|r| r.letter != letter)
                .unwrap_or(records.len() - start);
        let group = &records[start..end];
        lengths.clear();
        for r in group {
            if lengths.last() != Some(&r.length) {
                lengths.push(r.length);
            }
        }
        let canonical = alphabet.canonical(letter);
        let plan = build_block_representation(canonical, &lengths, slp)?;
        stage.cost += plan.cost;
        let mut working = Vec::with_capacity(lengths.len());
        for (&length, &symbol) in plan.lengths.iter().zip(&plan.symbols) {
            working.push(alphabet.allocate(symbol));
            stage.replacements.push(BlockReplacement {
                letter: canonical,
                length,
                symbol,
            });
        }
        let mut k = 0;
        for r in group {
            while plan.lengths[k] != r.length {
                k += 1;
            }
            text.replace_run(r.pos, r.length as usize, working[k])?;
            stage.occurrences += 1;
        }
        start = end;
    }
    Ok(stage)
}

/// First live position whose successor holds the same symbol, if any.
pub fn find_equal_neighbors(text: &WorkingText) -> Option<usize> {
    text.live_pairs()
        .find(|&(_, a, b)| a == b)
        .map(|(i, _, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::ingest_bytes;
    use crate::alphabet::InputKind;
    use proptest::prelude::*;

    fn expand_symbol(slp: &Slp, s: SymbolId) -> Vec<SymbolId> {
        slp.expand(s).unwrap().collect()
    }

    #[test]
    fn scan_hand_case() {
        let (text, map) = ingest_bytes(b"aabbbab").unwrap();
        let blocks: Vec<_> = scan_blocks(&text, &map)
            .iter()
            .map(|b| (b.letter, b.length, b.pos.index()))
            .collect();
        assert_eq!(blocks, vec![(0, 2, 0), (1, 3, 2)]);
    }

    #[test]
    fn scan_no_blocks_and_full_block() {
        let (text, map) = ingest_bytes(b"abab").unwrap();
        assert!(scan_blocks(&text, &map).is_empty());
        let (text, map) = ingest_bytes(b"aaaa").unwrap();
        let blocks = scan_blocks(&text, &map);
        assert_eq!(blocks.len(), 1);
        assert_eq!((blocks[0].letter, blocks[0].length), (0, 4));
    }

    #[test]
    fn scan_sorts_by_letter_then_length() {
        let (text, map) = ingest_bytes(b"bbbaaabbaaaab").unwrap();
        let blocks: Vec<_> = scan_blocks(&text, &map)
            .iter()
            .map(|b| (b.letter, b.length))
            .collect();
        assert_eq!(blocks, vec![(0, 2), (0, 3), (1, 3), (1, 4)]);
    }

    #[test]
    fn compress_hand_trace() {
        let (mut text, mut map) = ingest_bytes(b"aabbbab").unwrap();
        let mut slp = Slp::new(map.kind(), map.terminals().to_vec());
        let records = scan_blocks(&text, &map);
        let stage = compress_blocks(&mut text, &records, &mut map, &mut slp).unwrap();
        let live = text.to_vec();
        assert_eq!(live.len(), 4);
        assert_eq!(&live[2..], &[0, 1]);
        let z1 = map.canonical(live[0]);
        let z2 = map.canonical(live[1]);
        assert_eq!(expand_symbol(&slp, z1), vec![0, 0]);
        assert_eq!(expand_symbol(&slp, z2), vec![1, 1, 1]);
        assert_eq!(stage.occurrences, 2);
        assert!(find_equal_neighbors(&text).is_none());
    }

    #[test]
    fn compress_without_blocks_is_noop() {
        let (mut text, mut map) = ingest_bytes(b"abcab").unwrap();
        let mut slp = Slp::new(map.kind(), map.terminals().to_vec());
        let records = scan_blocks(&text, &map);
        let stage = compress_blocks(&mut text, &records, &mut map, &mut slp).unwrap();
        assert_eq!(stage, BlockStage::default());
        assert_eq!(text.to_vec(), vec![0, 1, 2, 0, 1]);
        assert_eq!(slp.rule_count(), 0);
    }

    #[test]
    fn unary_two_to_the_twenty() {
        let input = vec![b'a'; 1 << 20];
        let (mut text, mut map) = ingest_bytes(&input).unwrap();
        let mut slp = Slp::new(map.kind(), map.terminals().to_vec());
        let records = scan_blocks(&text, &map);
        let stage = compress_blocks(&mut text, &records, &mut map, &mut slp).unwrap();
        assert_eq!(text.len(), 1);
        assert!(stage.cost <= 4 * 20 + 4);
        assert_eq!(stage.cost, 40);
        let s = map.canonical(text.to_vec()[0]);
        assert_eq!(slp.expansion_len(s).unwrap(), 1 << 20);
    }

    #[test]
    fn twelve_costs_eight() {
        let mut slp = Slp::new(InputKind::Bytes, vec![97]);
        let plan = build_block_representation(0, &[12], &mut slp).unwrap();
        assert_eq!(plan.cost, 8);
        assert_eq!(slp.size(), 8);
        // a2 -> a a, a4 -> a2 a2, a8 -> a4 a4, a12 -> a8 a4
        let bodies: Vec<Vec<SymbolId>> = slp.rules().map(|(_, b)| b.to_vec()).collect();
        assert_eq!(bodies, vec![vec![0, 0], vec![1, 1], vec![2, 2], vec![3, 2]]);
        assert_eq!(expand_symbol(&slp, plan.symbols[0]), vec![0; 12]);
    }

    #[test]
    fn length_two_is_one_rule() {
        let mut slp = Slp::new(InputKind::Bytes, vec![97]);
        let plan = build_block_representation(0, &[2], &mut slp).unwrap();
        assert_eq!(plan.cost, 2);
        assert_eq!(slp.rule_count(), 1);
        assert_eq!(plan.symbols, vec![1]);
    }

    #[test]
    fn mixed_lengths_expand_correctly() {
        let mut slp = Slp::new(InputKind::Bytes, vec![97]);
        let plan = build_block_representation(0, &[2, 3, 7], &mut slp).unwrap();
        for (&l, &s) in plan.lengths.iter().zip(&plan.symbols) {
            assert_eq!(expand_symbol(&slp, s), vec![0; l as usize]);
        }
        for (rule, body) in slp.rules() {
            let want = slp.expansion_len(rule).unwrap();
            assert_eq!(expand_symbol(&slp, rule).len() as u64, want);
            assert!(!body.is_empty());
        }
    }

    #[test]
    fn bad_length_lists_are_rejected() {
        let mut slp = Slp::new(InputKind::Bytes, vec![97]);
        assert_eq!(
            build_block_representation(0, &[1, 4], &mut slp),
            Err(BlockError::TooShort(1))
        );
        assert_eq!(
            build_block_representation(0, &[4, 4], &mut slp),
            Err(BlockError::NotIncreasing { prev: 4, next: 4 })
        );
        assert_eq!(
            build_block_representation(9, &[4], &mut slp),
            Err(BlockError::UnknownLetter(9))
        );
        assert_eq!(slp.rule_count(), 0);
    }

    proptest! {
        #[test]
        fn representation_expands_and_respects_the_cost_bound(
            raw in proptest::collection::btree_set(2u64..5000, 1..12)
        ) {
            let lengths: Vec<u64> = raw.into_iter().collect();
            let mut slp = Slp::new(InputKind::Bytes, vec![97]);
            let plan = build_block_representation(0, &lengths, &mut slp).unwrap();
            prop_assert!(plan.cost as f64 <= representation_bound(&lengths));
            for (&l, &s) in plan.lengths.iter().zip(&plan.symbols) {
                prop_assert_eq!(expand_symbol(&slp, s), vec![0; l as usize]);
            }
            for (i, &p) in plan.powers.iter().enumerate() {
                prop_assert_eq!(slp.expansion_len(p).unwrap(), 1 << i);
            }
        }

        #[test]
        fn no_equal_neighbors_after_block_stage(input in proptest::collection::vec(0u8..3, 0..300)) {
            let (mut text, mut map) = ingest_bytes(&input).unwrap();
            let mut slp = Slp::new(map.kind(), map.terminals().to_vec());
            let records = scan_blocks(&text, &map);
            compress_blocks(&mut text, &records, &mut map, &mut slp).unwrap();
            prop_assert_eq!(find_equal_neighbors(&text), None);
            let expanded: Vec<SymbolId> = text
                .live_symbols()
                .flat_map(|w| expand_symbol(&slp, map.canonical(w)))
                .collect();
            let original: Vec<SymbolId> = ingest_bytes(&input).unwrap().0.to_vec();
            prop_assert_eq!(expanded, original);
        }
    }
}
