//! Phase loop of the recompression compressor, in plain and improved mode.
//!
//! Each phase renames the text densely, compresses every maximal block,
//! computes a greedy left/right partition and compresses the left-right pairs.
//! The live length drops to at most `3/4 |T| + 1/4` per phase, so the whole run
//! is linear in the input length.
//!
//! The improved mode records `size = |T| + rules so far` at the top of every
//! phase and outputs the grammar of the best phase: the rules emitted before it
//! plus one start rule spelling out the text of that phase.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::alphabet::{
    ingest, AlphabetError, AlphabetMap, RawInput, SymbolId, DEFAULT_TOKEN_CEILING,
};
use crate::blockcomp::{compress_blocks, find_equal_neighbors, scan_blocks, BlockReplacement};
use crate::grammar::{GrammarStats, PhaseSize, Slp};
use crate::paircomp::{build_adjacency, compress_pairs, greedy_partition, PairReplacement, Side};
use crate::text::WorkingText;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Plain,
    #[default]
    Improved,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Plain => "plain",
            Mode::Improved => "improved",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain" => Ok(Mode::Plain),
            "improved" => Ok(Mode::Improved),
            other => Err(format!(
                "unknown mode {other:?}, expected plain or improved"
            )),
        }
    }
}

/// Counters of one phase.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseTrace {
    pub phase: usize,
    pub live_before: usize,
    pub live_after_blocks: usize,
    pub live_after: usize,
    /// Distinct `(letter, length)` blocks compressed.
    pub block_symbols: usize,
    pub block_occurrences: usize,
    /// Distinct pairs compressed.
    pub pairs_compressed: usize,
    pub pair_occurrences: usize,
    pub live_at_pair_stage: usize,
    /// Occurrences covered by left-right or right-left pairs before the swap.
    pub cross_coverage: usize,
    /// Adjacent equal live symbols left after the block stage.
    pub equal_neighbors_after_blocks: usize,
    /// Rules in the grammar at the end of the phase.
    pub rules_watermark: usize,
    /// Total body length of all rules at the end of the phase.
    pub representation_cost: usize,
}

impl PhaseTrace {
    /// `live_after ≤ 3/4 · live_before + 1/4`.
    pub fn satisfies_shrink_bound(&self) -> bool {
        self.live_before < 2 || 4 * self.live_after <= 3 * self.live_before + 1
    }

    /// Compressed occurrences `≥ ⌈(live − 1)/4⌉` and cross coverage `≥ (live − 1)/2`.
    pub fn satisfies_coverage_bound(&self) -> bool {
        let pairs = self.live_at_pair_stage.saturating_sub(1);
        self.pair_occurrences >= pairs.div_ceil(4) && 2 * self.cross_coverage >= pairs
    }
}

/// What a phase replaced, in canonical ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PhaseDetail {
    pub blocks: Vec<BlockReplacement>,
    pub left: Vec<SymbolId>,
    pub right: Vec<SymbolId>,
    pub pairs: Vec<PairReplacement>,
}

/// Text and grammar between phases.
#[derive(Debug, Clone)]
pub struct Recompressor {
    text: WorkingText,
    alphabet: AlphabetMap,
    slp: Slp,
    phases: usize,
}

impl Recompressor {
    pub fn new(text: WorkingText, alphabet: AlphabetMap) -> Self {
        let slp = Slp::new(alphabet.kind(), alphabet.terminals().to_vec());
        Recompressor {
            text,
            alphabet,
            slp,
            phases: 0,
        }
    }

    pub fn from_raw(raw: RawInput<'_>) -> Result<Self, AlphabetError> {
        let (text, alphabet) = ingest(raw, DEFAULT_TOKEN_CEILING)?;
        Ok(Recompressor::new(text, alphabet))
    }

    pub fn live_len(&self) -> usize {
        self.text.len()
    }

    pub fn phases(&self) -> usize {
        self.phases
    }

    pub fn slp(&self) -> &Slp {
        &self.slp
    }

    pub fn alphabet(&self) -> &AlphabetMap {
        &self.alphabet
    }

    /// The live text in canonical ids.
    pub fn canonical_text(&self) -> Vec<SymbolId> {
        self.text
            .live_symbols()
            .map(|s| self.alphabet.canonical(s))
            .collect()
    }

    pub fn into_slp(self) -> Slp {
        self.slp
    }

    /// Runs one phase. Panics if the text has fewer than two symbols.
    pub fn phase(&mut self) -> PhaseTrace {
        self.run_phase(false).0
    }

    /// Runs one phase and also reports the replacements it made.
    pub fn phase_detailed(&mut self) -> (PhaseTrace, PhaseDetail) {
        self.run_phase(true)
    }

    fn run_phase(&mut self, detailed: bool) -> (PhaseTrace, PhaseDetail) {
        assert!(self.text.len() >= 2, "a phase needs at least two symbols");
        let mut trace = PhaseTrace {
            phase: self.phases,
            live_before: self.text.len(),
            ..PhaseTrace::default()
        };
        let mut detail = PhaseDetail::default();

        self.alphabet.rename_dense(&mut self.text);
        let blocks = scan_blocks(&self.text, &self.alphabet);
        let block_stage =
            compress_blocks(&mut self.text, &blocks, &mut self.alphabet, &mut self.slp)
                .expect("blocks come from a scan of the current text");
        self.text.compact();
        trace.block_symbols = block_stage.replacements.len();
        trace.block_occurrences = block_stage.occurrences;
        trace.live_after_blocks = self.text.len();
        trace.equal_neighbors_after_blocks =
            self.text.live_pairs().filter(|&(_, a, b)| a == b).count();

        if self.text.len() >= 2 {
            self.alphabet.rename_dense(&mut self.text);
            debug_assert!(find_equal_neighbors(&self.text).is_none());
            let adjacency = build_adjacency(&self.text, &self.alphabet)
                .expect("block compression leaves no equal neighbors");
            let partition = greedy_partition(&adjacency, &self.text);
            trace.live_at_pair_stage = self.text.len();
            trace.cross_coverage = partition.cross_coverage();
            if detailed {
                let canon = |s| self.alphabet.canonical(s);
                detail.left = partition.letters(Side::Left).map(canon).collect();
                detail.right = partition.letters(Side::Right).map(canon).collect();
            }
            let pair_stage = compress_pairs(
                &mut self.text,
                &partition,
                &adjacency,
                &mut self.alphabet,
                &mut self.slp,
            )
            .expect("adjacency is built in the current epoch");
            self.text.compact();
            trace.pairs_compressed = pair_stage.replacements.len();
            trace.pair_occurrences = pair_stage.occurrences;
            if detailed {
                detail.pairs = pair_stage.replacements;
            }
        } else {
            trace.live_at_pair_stage = self.text.len();
        }
        if detailed {
            detail.blocks = block_stage.replacements;
        }

        trace.live_after = self.text.len();
        trace.rules_watermark = self.slp.rule_count();
        trace.representation_cost = self.slp.size();
        self.phases += 1;
        (trace, detail)
    }
}

/// Output of [`compress`].
#[derive(Debug, Clone)]
pub struct Compressed {
    pub slp: Slp,
    pub stats: GrammarStats,
    pub traces: Vec<PhaseTrace>,
    /// Symbols copied into best-phase snapshots during an improved run.
    pub snapshot_copied: usize,
}

struct BestSnapshot {
    size: usize,
    phase: usize,
    text: Vec<SymbolId>,
    watermark: usize,
}

/// Compresses `raw` into a grammar deriving exactly `raw`.
pub fn compress(raw: RawInput<'_>, mode: Mode) -> Result<Compressed, AlphabetError> {
    let input_len = raw.len();
    let mut rc = Recompressor::from_raw(raw)?;
    let mut traces = Vec::new();
    let mut phase_sizes = Vec::new();
    let mut best: Option<BestSnapshot> = None;
    let mut snapshot_copied = 0;

    loop {
        if input_len > 0 {
            let size = PhaseSize {
                phase: rc.phases(),
                live_count: rc.live_len(),
                representation_cost: rc.slp().size(),
            };
            if mode == Mode::Improved && best.as_ref().is_none_or(|b| size.size() < b.size) {
                let text = rc.canonical_text();
                snapshot_copied += text.len();
                best = Some(BestSnapshot {
                    size: size.size(),
                    phase: size.phase,
                    text,
                    watermark: rc.slp().rule_count(),
                });
            }
            phase_sizes.push(size);
        }
        if rc.live_len() < 2 {
            break;
        }
        traces.push(rc.phase());
    }

    let phases = rc.phases();
    let final_text = rc.canonical_text();
    let mut slp = rc.into_slp();
    let chosen_phase;
    match best {
        Some(b) => {
            slp.truncate_rules(b.watermark);
            let start = slp.push_rule(&b.text);
            slp.set_start(Some(start)).expect("start rule exists");
            slp = slp.prune_unreachable();
            chosen_phase = b.phase;
        }
        None => {
            if let Some(&last) = final_text.first() {
                let start = slp.push_rule(&[last]);
                slp.set_start(Some(start)).expect("start rule exists");
            }
            chosen_phase = phases;
        }
    }

    let stats = GrammarStats {
        input_len,
        terminal_count: slp.terminal_count(),
        rule_count: slp.rule_count(),
        size: slp.size(),
        phases,
        chosen_phase,
        phase_sizes,
    };
    Ok(Compressed {
        slp,
        stats,
        traces,
        snapshot_copied,
    })
}

pub fn compress_bytes(input: &[u8], mode: Mode) -> Compressed {
    compress(RawInput::Bytes(input), mode).expect("byte input always ingests")
}

pub fn compress_tokens(input: &[u64], mode: Mode) -> Result<Compressed, AlphabetError> {
    compress(RawInput::Tokens(input), mode)
}
