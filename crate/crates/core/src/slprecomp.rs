//! Recompression applied to an arbitrary grammar, as an executable check.
//!
//! A [`RunSlp`] has nonterminals `X1 … Xm` (indices `0 … m-1` here), each with
//! a body of letter runs `a^k` and at most two references to earlier
//! nonterminals. The start is the last nonterminal. The operations mirror the
//! analysis of recompression on a grammar instead of a text:
//!
//! * [`RunSlp::pop`] uncrosses all pairs of `Σℓ Σr` by popping letters out of
//!   nonterminals,
//! * [`RunSlp::pair_comp_nc`] replaces a non-crossing pair in the bodies,
//! * [`RunSlp::rem_cr_blocks`] pops whole letter prefixes and suffixes so that
//!   no block crosses a nonterminal boundary,
//! * [`RunSlp::block_comp_nc`] replaces the explicit maximal blocks of a letter.
//!
//! Every operation keeps the nonterminal indices stable. A nonterminal whose
//! derived string becomes empty is flagged removed and disappears from the
//! bodies. A [`CreditMeter`] counts the letters and run items each operation
//! inserts per rule.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::alphabet::InputKind;
use crate::grammar::{parse_document, write_start, write_terminals, GrammarError};

/// A letter of the lab alphabet. Raw values, unrelated to compressor ids.
pub type Letter = u64;

/// Most nonterminals a lab grammar may have.
pub const MAX_LAB_RULES: usize = 10_000;
/// Longest derived string a lab grammar may describe.
pub const MAX_LAB_LEN: u64 = 1_000_000_000;
/// Longest derived string [`RunSlp::expand`] will materialize.
pub const MAX_LAB_EXPANSION: u64 = 1_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LabError {
    #[error("{0} nonterminals exceed the limit of {MAX_LAB_RULES}")]
    TooManyRules(usize),
    #[error("rule {rule} references X{target}, which is not earlier")]
    ForwardReference { rule: usize, target: usize },
    #[error("rule {rule} has more than two nonterminal references")]
    TooManyReferences { rule: usize },
    #[error("rule {rule} has a run of multiplicity 0")]
    ZeroMultiplicity { rule: usize },
    #[error("derived length exceeds {MAX_LAB_LEN}")]
    TooLong,
    #[error("derived length {0} is too long to expand")]
    ExpansionTooLarge(u64),
    #[error("letter {0} is on both sides of the split")]
    SidesOverlap(Letter),
    #[error("pair {0} {0} has equal letters")]
    EqualPair(Letter),
    #[error("pair is crossing: {0}")]
    CrossingPair(CrossingWitness),
    #[error("letter has a crossing block: {0}")]
    CrossingBlock(BlockWitness),
    #[error("rule {rule}: {message}")]
    LemmaViolation { rule: usize, message: String },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Grammar(#[from] GrammarError),
}

/// One body item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Item {
    /// `letter^mult`, `mult ≥ 1`.
    Run { letter: Letter, mult: u64 },
    /// A reference to an earlier nonterminal.
    Ref(usize),
}

impl Item {
    pub fn run(letter: Letter, mult: u64) -> Item {
        Item::Run { letter, mult }
    }
}

/// Appends a run, merging it into a trailing run of the same letter.
fn push_run(body: &mut Vec<Item>, letter: Letter, mult: u64) {
    if mult == 0 {
        return;
    }
    if let Some(Item::Run { letter: l, mult: m }) = body.last_mut() {
        if *l == letter {
            *m += mult;
            return;
        }
    }
    body.push(Item::Run { letter, mult });
}

fn push_item(body: &mut Vec<Item>, item: Item) {
    match item {
        Item::Run { letter, mult } => push_run(body, letter, mult),
        r => body.push(r),
    }
}

/// Disjoint left and right letter sets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Split {
    left: BTreeSet<Letter>,
    right: BTreeSet<Letter>,
}

impl Split {
    pub fn new(
        left: impl IntoIterator<Item = Letter>,
        right: impl IntoIterator<Item = Letter>,
    ) -> Result<Split, LabError> {
        let left: BTreeSet<Letter> = left.into_iter().collect();
        let right: BTreeSet<Letter> = right.into_iter().collect();
        if let Some(&a) = left.intersection(&right).next() {
            return Err(LabError::SidesOverlap(a));
        }
        Ok(Split { left, right })
    }

    pub fn is_left(&self, a: Letter) -> bool {
        self.left.contains(&a)
    }

    pub fn is_right(&self, a: Letter) -> bool {
        self.right.contains(&a)
    }

    pub fn left(&self) -> &BTreeSet<Letter> {
        &self.left
    }

    pub fn right(&self) -> &BTreeSet<Letter> {
        &self.right
    }
}

/// Credit issued and released, plus what the last operation inserted per rule.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CreditMeter {
    issued: u64,
    released: u64,
    per_rule_new: Vec<u64>,
}

impl CreditMeter {
    pub fn new() -> Self {
        CreditMeter::default()
    }

    pub fn issued(&self) -> u64 {
        self.issued
    }

    pub fn released(&self) -> u64 {
        self.released
    }

    /// Letters (for pop) or run items (for block removal) inserted into each
    /// rule by the last operation.
    pub fn per_rule_new(&self) -> &[u64] {
        &self.per_rule_new
    }

    pub fn max_per_rule_new(&self) -> u64 {
        self.per_rule_new.iter().copied().max().unwrap_or(0)
    }

    fn begin(&mut self, rules: usize) {
        self.per_rule_new.clear();
        self.per_rule_new.resize(rules, 0);
    }

    /// Two units of credit per inserted symbol.
    fn insert(&mut self, rule: usize, count: u64) {
        self.per_rule_new[rule] += count;
        self.issued += 2 * count;
    }

    fn release(&mut self, units: u64) {
        self.released += units;
    }
}

/// `(first letter, last letter)` of a nonterminal, `None` when empty.
pub type Ends = Option<(Letter, Letter)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CrossingKind {
    /// `a X` in a body with `X` deriving `b…`.
    LetterRule,
    /// `X b` in a body with `X` deriving `…a`.
    RuleLetter,
    /// `X Y` in a body with `X` deriving `…a` and `Y` deriving `b…`.
    RuleRule,
}

/// A crossing occurrence of the pair `left right` at items `item, item + 1` of `rule`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CrossingWitness {
    pub kind: CrossingKind,
    pub rule: usize,
    pub item: usize,
    pub left: Letter,
    pub right: Letter,
}

impl fmt::Display for CrossingWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "pair {} {} crosses items {} and {} of X{} ({:?})",
            self.left,
            self.right,
            self.item,
            self.item + 1,
            self.rule,
            self.kind
        )
    }
}

/// A block of `letter` crossing items `item, item + 1` of `rule`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockWitness {
    pub rule: usize,
    pub item: usize,
    pub letter: Letter,
}

impl fmt::Display for BlockWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} crosses items {} and {} of X{}",
            self.letter,
            self.item,
            self.item + 1,
            self.rule
        )
    }
}

/// A straight-line program with run-length letter items.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSlp {
    rules: Vec<Vec<Item>>,
    removed: Vec<bool>,
}

impl RunSlp {
    /// Builds a grammar from bodies in index order; the last body is the start.
    ///
    /// Runs are merged, and references to nonterminals deriving the empty
    /// string are dropped.
    pub fn new(bodies: Vec<Vec<Item>>) -> Result<RunSlp, LabError> {
        if bodies.len() > MAX_LAB_RULES {
            return Err(LabError::TooManyRules(bodies.len()));
        }
        let m = bodies.len();
        let mut rules = Vec::with_capacity(m);
        let mut removed = vec![false; m];
        let mut lens: Vec<u64> = Vec::with_capacity(m);
        for (i, body) in bodies.into_iter().enumerate() {
            let mut out = Vec::with_capacity(body.len());
            let mut refs = 0;
            let mut len = 0u64;
            for item in body {
                match item {
                    Item::Run { mult: 0, .. } => {
                        return Err(LabError::ZeroMultiplicity { rule: i })
                    }
                    Item::Run { mult, .. } => len = len.saturating_add(mult),
                    Item::Ref(j) if j >= i => {
                        return Err(LabError::ForwardReference { rule: i, target: j })
                    }
                    Item::Ref(j) => {
                        refs += 1;
                        if lens[j] == 0 {
                            continue;
                        }
                        len = len.saturating_add(lens[j]);
                    }
                }
                push_item(&mut out, item);
            }
            if refs > 2 {
                return Err(LabError::TooManyReferences { rule: i });
            }
            if len > MAX_LAB_LEN {
                return Err(LabError::TooLong);
            }
            removed[i] = len == 0 && i + 1 < m;
            lens.push(len);
            rules.push(out);
        }
        Ok(RunSlp { rules, removed })
    }

    /// Number of nonterminals `m`, removed ones included.
    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }

    pub fn body(&self, i: usize) -> &[Item] {
        &self.rules[i]
    }

    pub fn is_removed(&self, i: usize) -> bool {
        self.removed[i]
    }

    /// Index of the start nonterminal `Xm`.
    pub fn start(&self) -> Option<usize> {
        self.rules.len().checked_sub(1)
    }

    /// Nonterminals that are not removed.
    pub fn live_rules(&self) -> impl Iterator<Item = (usize, &[Item])> + '_ {
        self.rules
            .iter()
            .enumerate()
            .filter(|&(i, _)| !self.removed[i])
            .map(|(i, b)| (i, b.as_slice()))
    }

    /// Total number of body items over live rules.
    pub fn size(&self) -> usize {
        self.live_rules().map(|(_, b)| b.len()).sum()
    }

    /// Every letter occurring in a live body, sorted.
    pub fn letters(&self) -> BTreeSet<Letter> {
        self.live_rules()
            .flat_map(|(_, b)| b.iter())
            .filter_map(|item| match item {
                Item::Run { letter, .. } => Some(*letter),
                Item::Ref(_) => None,
            })
            .collect()
    }

    /// Derived length of each nonterminal.
    pub fn lengths(&self) -> Vec<u64> {
        let mut lens = Vec::with_capacity(self.rules.len());
        for body in &self.rules {
            let len = body.iter().fold(0u64, |acc, item| match *item {
                Item::Run { mult, .. } => acc.saturating_add(mult),
                Item::Ref(j) => acc.saturating_add(lens[j]),
            });
            lens.push(len);
        }
        lens
    }

    /// Derived length of the start, 0 for the empty grammar.
    pub fn len(&self) -> u64 {
        self.lengths().last().copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The string derived by nonterminal `i`.
    pub fn expand_rule(&self, i: usize) -> Result<Vec<Letter>, LabError> {
        let len = self.lengths()[i];
        if len > MAX_LAB_EXPANSION {
            return Err(LabError::ExpansionTooLarge(len));
        }
        let mut out = Vec::with_capacity(len as usize);
        let mut stack = vec![(i, 0usize)];
        while let Some((r, k)) = stack.pop() {
            let Some(&item) = self.rules[r].get(k) else {
                continue;
            };
            stack.push((r, k + 1));
            match item {
                Item::Run { letter, mult } => {
                    out.extend(std::iter::repeat_n(letter, mult as usize))
                }
                Item::Ref(j) => stack.push((j, 0)),
            }
        }
        Ok(out)
    }

    /// The string derived by the start.
    pub fn expand(&self) -> Result<Vec<Letter>, LabError> {
        match self.start() {
            None => Ok(Vec::new()),
            Some(m) => self.expand_rule(m),
        }
    }

    /// First and last letter of every nonterminal, bottom-up.
    pub fn first_last_letters(&self) -> Vec<Ends> {
        let mut ends: Vec<Ends> = Vec::with_capacity(self.rules.len());
        for body in &self.rules {
            let end_of = |item: Option<&Item>, ends: &[Ends], first: bool| match item {
                None => None,
                Some(&Item::Run { letter, .. }) => Some(letter),
                Some(&Item::Ref(j)) => ends[j].map(|(f, l)| if first { f } else { l }),
            };
            let f = end_of(body.first(), &ends, true);
            let l = end_of(body.last(), &ends, false);
            ends.push(f.zip(l));
        }
        ends
    }

    /// Every crossing occurrence of a pair from `Σℓ Σr`.
    pub fn crossing_report(&self, split: &Split) -> Vec<CrossingWitness> {
        let ends = self.first_last_letters();
        let mut out = Vec::new();
        for (rule, body) in self.live_rules() {
            for (item, w) in body.windows(2).enumerate() {
                let (kind, left, right) = match (w[0], w[1]) {
                    (Item::Run { letter, .. }, Item::Ref(j)) => match ends[j] {
                        Some((f, _)) => (CrossingKind::LetterRule, letter, f),
                        None => continue,
                    },
                    (Item::Ref(j), Item::Run { letter, .. }) => match ends[j] {
                        Some((_, l)) => (CrossingKind::RuleLetter, l, letter),
                        None => continue,
                    },
                    (Item::Ref(i), Item::Ref(j)) => match (ends[i], ends[j]) {
                        (Some((_, l)), Some((f, _))) => (CrossingKind::RuleRule, l, f),
                        _ => continue,
                    },
                    _ => continue,
                };
                if split.is_left(left) && split.is_right(right) {
                    out.push(CrossingWitness {
                        kind,
                        rule,
                        item,
                        left,
                        right,
                    });
                }
            }
        }
        out
    }

    /// Every block crossing a nonterminal boundary.
    pub fn crossing_blocks_report(&self) -> Vec<BlockWitness> {
        let ends = self.first_last_letters();
        let mut out = Vec::new();
        for (rule, body) in self.live_rules() {
            for (item, w) in body.windows(2).enumerate() {
                let (left, right) = match (w[0], w[1]) {
                    (Item::Run { letter: a, .. }, Item::Run { letter: b, .. }) => {
                        (Some(a), Some(b))
                    }
                    (Item::Run { letter, .. }, Item::Ref(j)) => {
                        (Some(letter), ends[j].map(|e| e.0))
                    }
                    (Item::Ref(j), Item::Run { letter, .. }) => {
                        (ends[j].map(|e| e.1), Some(letter))
                    }
                    (Item::Ref(i), Item::Ref(j)) => (ends[i].map(|e| e.1), ends[j].map(|e| e.0)),
                };
                if let (Some(a), Some(b)) = (left, right) {
                    if a == b {
                        out.push(BlockWitness {
                            rule,
                            item,
                            letter: a,
                        });
                    }
                }
            }
        }
        out
    }

    /// Rewrites every live body through `f`, which receives the rule index, an
    /// item and the output body.
    fn rewrite(&mut self, mut f: impl FnMut(usize, Item, &mut Vec<Item>, &[bool])) {
        for i in 0..self.rules.len() {
            if self.removed[i] {
                continue;
            }
            let body = std::mem::take(&mut self.rules[i]);
            let mut out = Vec::with_capacity(body.len() + 2);
            for item in body {
                f(i, item, &mut out, &self.removed);
            }
            self.rules[i] = out;
        }
    }

    /// Pops letters of `Σr` from the front and letters of `Σℓ` from the back
    /// of `X1 … X(m-1)` so that no pair of `Σℓ Σr` is crossing.
    pub fn pop(&mut self, split: &Split, meter: &mut CreditMeter) {
        let m = self.rules.len();
        meter.begin(m);
        for front in [true, false] {
            let mut popped: Vec<Option<Letter>> = vec![None; m];
            for i in 0..m {
                if self.removed[i] {
                    continue;
                }
                let body = std::mem::take(&mut self.rules[i]);
                let mut out = Vec::with_capacity(body.len() + 2);
                for item in body {
                    match item {
                        Item::Ref(j) => {
                            if front {
                                if let Some(b) = popped[j] {
                                    push_run(&mut out, b, 1);
                                    meter.insert(i, 1);
                                }
                            }
                            if !self.removed[j] {
                                out.push(item);
                            }
                            if !front {
                                if let Some(a) = popped[j] {
                                    push_run(&mut out, a, 1);
                                    meter.insert(i, 1);
                                }
                            }
                        }
                        run => push_item(&mut out, run),
                    }
                }
                if i + 1 < m {
                    let end = if front {
                        out.first_mut()
                    } else {
                        out.last_mut()
                    };
                    if let Some(Item::Run { letter, mult }) = end {
                        let hit = if front {
                            split.is_right(*letter)
                        } else {
                            split.is_left(*letter)
                        };
                        if hit {
                            popped[i] = Some(*letter);
                            *mult -= 1;
                            if *mult == 0 {
                                if front {
                                    out.remove(0);
                                } else {
                                    out.pop();
                                }
                            }
                        }
                    }
                    self.removed[i] = out.is_empty();
                }
                self.rules[i] = out;
            }
        }
    }

    /// Replaces every explicit `ab` by `c`. Returns the number of replacements.
    pub fn pair_comp_nc(
        &mut self,
        a: Letter,
        b: Letter,
        c: Letter,
        meter: &mut CreditMeter,
    ) -> Result<usize, LabError> {
        if a == b {
            return Err(LabError::EqualPair(a));
        }
        let split = Split::new([a], [b])?;
        if let Some(&w) = self.crossing_report(&split).first() {
            return Err(LabError::CrossingPair(w));
        }
        meter.begin(self.rules.len());
        let mut replaced = 0;
        self.rewrite(|_, item, out, _| {
            if let Item::Run { letter, mult } = item {
                if letter == b {
                    if let Some(&Item::Run {
                        letter: prev,
                        mult: pm,
                    }) = out.last()
                    {
                        if prev == a {
                            out.pop();
                            push_run(out, a, pm - 1);
                            push_run(out, c, 1);
                            push_run(out, b, mult - 1);
                            replaced += 1;
                            return;
                        }
                    }
                }
            }
            push_item(out, item);
        });
        meter.release(4 * replaced as u64);
        Ok(replaced)
    }

    /// Pops the first-letter prefix and last-letter suffix of `X1 … X(m-1)`
    /// as single run items so that no letter has a crossing block.
    pub fn rem_cr_blocks(&mut self, meter: &mut CreditMeter) -> Result<(), LabError> {
        let m = self.rules.len();
        meter.begin(m);
        let lens = self.lengths();
        let ends = self.first_last_letters();
        let (prefix, suffix) = self.end_runs(&ends, &lens);
        // (a, ℓ, b, r) popped from each nonterminal
        let mut popped: Vec<Option<(Letter, u64, Letter, u64)>> = vec![None; m];
        for i in 0..m {
            if self.removed[i] {
                continue;
            }
            let body = std::mem::take(&mut self.rules[i]);
            let mut out = Vec::with_capacity(body.len() + 4);
            for item in body {
                match item {
                    Item::Ref(j) => match popped[j] {
                        Some((a, l, b, r)) => {
                            push_run(&mut out, a, l);
                            if !self.removed[j] {
                                out.push(item);
                            }
                            push_run(&mut out, b, r);
                            meter.insert(i, 1 + u64::from(r > 0));
                        }
                        None => out.push(item),
                    },
                    run => push_item(&mut out, run),
                }
            }
            if i + 1 < m {
                let Some((a, b)) = ends[i] else {
                    return Err(violation(i, "live nonterminal derives the empty string"));
                };
                let (l, r) = (prefix[i], if prefix[i] == lens[i] { 0 } else { suffix[i] });
                match out.first() {
                    Some(&Item::Run { letter, mult }) if letter == a && mult == l => {
                        out.remove(0);
                    }
                    _ => return Err(violation(i, format!("body does not begin with {a}^{l}"))),
                }
                if r > 0 {
                    match out.last() {
                        Some(&Item::Run { letter, mult }) if letter == b && mult == r => {
                            out.pop();
                        }
                        _ => return Err(violation(i, format!("body does not end with {b}^{r}"))),
                    }
                }
                popped[i] = Some((a, l, b, r));
                self.removed[i] = out.is_empty();
            }
            self.rules[i] = out;
        }
        Ok(())
    }

    /// Length of the first-letter prefix and last-letter suffix of each nonterminal.
    fn end_runs(&self, ends: &[Ends], lens: &[u64]) -> (Vec<u64>, Vec<u64>) {
        let m = self.rules.len();
        let mut prefix = vec![0u64; m];
        let mut suffix = vec![0u64; m];
        for i in 0..m {
            let Some((a, b)) = ends[i] else { continue };
            prefix[i] = end_run(self.rules[i].iter(), a, true, ends, lens, &prefix);
            suffix[i] = end_run(self.rules[i].iter().rev(), b, false, ends, lens, &suffix);
        }
        (prefix, suffix)
    }

    /// Replaces every explicit block `letter^ℓ` with `ℓ ≥ 2` by `fresh(ℓ)`.
    ///
    /// `fresh` is called once per distinct length. Returns the number of
    /// replaced blocks.
    pub fn block_comp_nc(
        &mut self,
        letter: Letter,
        mut fresh: impl FnMut(u64) -> Letter,
        meter: &mut CreditMeter,
    ) -> Result<usize, LabError> {
        if let Some(&w) = self
            .crossing_blocks_report()
            .iter()
            .find(|w| w.letter == letter)
        {
            return Err(LabError::CrossingBlock(w));
        }
        meter.begin(self.rules.len());
        let mut names: BTreeMap<u64, Letter> = BTreeMap::new();
        let mut replaced = 0;
        self.rewrite(|_, item, out, _| match item {
            Item::Run { letter: l, mult } if l == letter && mult >= 2 => {
                let name = *names.entry(mult).or_insert_with(|| fresh(mult));
                push_run(out, name, 1);
                replaced += 1;
            }
            other => push_item(out, other),
        });
        Ok(replaced)
    }

    /// Parses the grammar text format with `sym^mult` run items.
    ///
    /// Terminal ids become their raw values as letters. Rules after the start
    /// are dropped; a terminal start becomes a one-rule grammar.
    pub fn parse(text: &str) -> Result<RunSlp, LabError> {
        let doc = parse_document(text, true)?;
        let sigma = doc.terminals.len();
        let Some(start) = doc.start.map(|s| s as usize) else {
            return Ok(RunSlp::default());
        };
        let format = |line, message: String| LabError::Format { line, message };
        if start < sigma {
            return RunSlp::new(vec![vec![Item::run(doc.terminals[start], 1)]]);
        }
        let keep = start - sigma + 1;
        if keep > doc.rules.len() {
            return Err(format(
                doc.start_line,
                format!("start {start} is not defined"),
            ));
        }
        let mut bodies = Vec::with_capacity(keep);
        for (k, rule) in doc.rules.iter().take(keep).enumerate() {
            let line = doc.rule_lines[k];
            let mut body = Vec::with_capacity(rule.len());
            for raw in rule {
                let s = raw.symbol as usize;
                if s < sigma {
                    if raw.mult == 0 {
                        return Err(format(line, "run of multiplicity 0".into()));
                    }
                    body.push(Item::run(doc.terminals[s], raw.mult));
                } else if raw.mult != 1 {
                    return Err(format(line, format!("nonterminal {s} with a multiplicity")));
                } else {
                    body.push(Item::Ref(s - sigma));
                }
            }
            bodies.push(body);
        }
        RunSlp::new(bodies).map_err(|e| match e {
            LabError::ForwardReference { rule, .. }
            | LabError::TooManyReferences { rule }
            | LabError::ZeroMultiplicity { rule } => format(doc.rule_lines[rule], e.to_string()),
            other => other,
        })
    }

    /// Renders the live rules in the text format, renumbered.
    pub fn to_text(&self) -> String {
        let letters: Vec<Letter> = self.letters().into_iter().collect();
        let id_of: BTreeMap<Letter, usize> =
            letters.iter().enumerate().map(|(i, &l)| (l, i)).collect();
        let sigma = letters.len();
        let mut new_index = vec![usize::MAX; self.rules.len()];
        let mut lines = Vec::new();
        for (i, body) in self.live_rules() {
            if body.is_empty() {
                continue;
            }
            new_index[i] = lines.len();
            let mut line = body.len().to_string();
            for item in body {
                match *item {
                    Item::Run { letter, mult: 1 } => {
                        let _ = write!(line, " {}", id_of[&letter]);
                    }
                    Item::Run { letter, mult } => {
                        let _ = write!(line, " {}^{}", id_of[&letter], mult);
                    }
                    Item::Ref(j) => {
                        let _ = write!(line, " {}", sigma + new_index[j]);
                    }
                }
            }
            lines.push(line);
        }
        let start = self
            .start()
            .filter(|&m| !self.rules[m].is_empty())
            .map(|m| (sigma + new_index[m]) as u32);
        let mut out = String::from("SLP 1\n");
        write_terminals(&mut out, InputKind::Tokens, &letters);
        let _ = writeln!(out, "rules {}", lines.len());
        for l in lines {
            out.push_str(&l);
            out.push('\n');
        }
        write_start(&mut out, start);
        out
    }
}

/// Length of the `x` run at one end of a body, given the end runs of earlier rules.
fn end_run<'a>(
    items: impl Iterator<Item = &'a Item>,
    x: Letter,
    front: bool,
    ends: &[Ends],
    lens: &[u64],
    table: &[u64],
) -> u64 {
    let mut total = 0;
    for item in items {
        match *item {
            Item::Run { letter, mult } if letter == x => total += mult,
            Item::Run { .. } => break,
            Item::Ref(j) => {
                let Some((f, l)) = ends[j] else { continue };
                if (if front { f } else { l }) != x {
                    break;
                }
                total += table[j];
                if table[j] != lens[j] {
                    break;
                }
            }
        }
    }
    total
}

fn violation(rule: usize, message: impl Into<String>) -> LabError {
    LabError::LemmaViolation {
        rule,
        message: message.into(),
    }
}

/// Random grammars for the lab.
pub mod gen {
    use super::{Item, Letter, RunSlp};
    use rand::Rng;

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub struct GenParams {
        /// Nonterminals, at least 1.
        pub max_rules: usize,
        /// Letters are drawn from `0 .. alphabet`.
        pub alphabet: u64,
        /// Largest multiplicity of a generated run.
        pub max_mult: u64,
        /// Bound on every derived length.
        pub max_len: u64,
    }

    impl Default for GenParams {
        fn default() -> Self {
            GenParams {
                max_rules: 30,
                alphabet: 4,
                max_mult: 6,
                max_len: 1_000_000,
            }
        }
    }

    /// A random grammar whose start derives a non-empty string of length at most `max_len`.
    pub fn random_run_slp<R: Rng>(rng: &mut R, params: GenParams) -> RunSlp {
        let m = rng.random_range(1..=params.max_rules.max(1));
        let mut bodies: Vec<Vec<Item>> = Vec::with_capacity(m);
        let mut lens: Vec<u64> = Vec::with_capacity(m);
        for i in 0..m {
            let mut body = Vec::new();
            let mut len = 0u64;
            let refs = if i == 0 { 0 } else { rng.random_range(0..=2) };
            let mut slots = rng.random_range(0..4usize) + refs;
            let mut refs_left = refs;
            while slots > 0 {
                let take_ref = refs_left > 0 && rng.random_range(0..slots) < refs_left;
                if take_ref {
                    refs_left -= 1;
                    // favor recent rules so derived lengths grow
                    let lo = i.saturating_sub(4);
                    let j = if rng.random_bool(0.7) {
                        rng.random_range(lo..i)
                    } else {
                        rng.random_range(0..i)
                    };
                    if len + lens[j] <= params.max_len {
                        len += lens[j];
                        body.push(Item::Ref(j));
                    }
                } else {
                    let letter: Letter = rng.random_range(0..params.alphabet.max(1));
                    let mult = if rng.random_bool(0.75) {
                        1
                    } else {
                        rng.random_range(1..=params.max_mult.max(1))
                    };
                    if len + mult <= params.max_len {
                        len += mult;
                        body.push(Item::run(letter, mult));
                    }
                }
                slots -= 1;
            }
            if len == 0 {
                body.push(Item::run(rng.random_range(0..params.alphabet.max(1)), 1));
                len = 1;
            }
            lens.push(len);
            bodies.push(body);
        }
        RunSlp::new(bodies).expect("generator respects the grammar limits")
    }
}

#[cfg(test)]
mod tests {
    use super::gen::{random_run_slp, GenParams};
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn run(letter: Letter, mult: u64) -> Item {
        Item::run(letter, mult)
    }

    const A: Letter = 'a' as Letter;
    const B: Letter = 'b' as Letter;
    const C: Letter = 'c' as Letter;

    fn pc_oracle(s: &[Letter], a: Letter, b: Letter, c: Letter) -> Vec<Letter> {
        let mut out = Vec::with_capacity(s.len());
        let mut i = 0;
        while i < s.len() {
            if i + 1 < s.len() && s[i] == a && s[i + 1] == b {
                out.push(c);
                i += 2;
            } else {
                out.push(s[i]);
                i += 1;
            }
        }
        out
    }

    fn bc_oracle(s: &[Letter], a: Letter, fresh: impl Fn(u64) -> Letter) -> Vec<Letter> {
        let mut out = Vec::with_capacity(s.len());
        let mut i = 0;
        while i < s.len() {
            let mut j = i;
            while j < s.len() && s[j] == s[i] {
                j += 1;
            }
            let l = (j - i) as u64;
            if s[i] == a && l >= 2 {
                out.push(fresh(l));
            } else {
                out.extend(&s[i..j]);
            }
            i = j;
        }
        out
    }

    fn random_split(rng: &mut StdRng, letters: &BTreeSet<Letter>) -> Split {
        let mut left = Vec::new();
        let mut right = Vec::new();
        for &l in letters {
            match rng.random_range(0..3) {
                0 => left.push(l),
                1 => right.push(l),
                _ => {}
            }
        }
        Split::new(left, right).unwrap()
    }

    #[test]
    fn first_last_hand_cases() {
        let g = RunSlp::new(vec![
            vec![run(A, 1), run(B, 1)],
            vec![Item::Ref(0), Item::Ref(0)],
        ])
        .unwrap();
        assert_eq!(g.first_last_letters(), vec![Some((A, B)), Some((A, B))]);
    }

    #[test]
    fn constructor_normalizes() {
        let g = RunSlp::new(vec![
            vec![],
            vec![run(A, 1), Item::Ref(0), run(A, 2), run(B, 1)],
        ])
        .unwrap();
        assert!(g.is_removed(0));
        assert_eq!(g.body(1), &[run(A, 3), run(B, 1)]);
        assert_eq!(
            RunSlp::new(vec![vec![Item::Ref(0)]]),
            Err(LabError::ForwardReference { rule: 0, target: 0 })
        );
        assert_eq!(
            RunSlp::new(vec![vec![run(A, 1)], vec![Item::Ref(0); 3]]),
            Err(LabError::TooManyReferences { rule: 1 })
        );
        assert_eq!(
            RunSlp::new(vec![vec![run(A, 0)]]),
            Err(LabError::ZeroMultiplicity { rule: 0 })
        );
    }

    #[test]
    fn crossing_example_rule_letter() {
        // X1 -> a, X2 -> X1 b
        let g = RunSlp::new(vec![vec![run(A, 1)], vec![Item::Ref(0), run(B, 1)]]).unwrap();
        let split = Split::new([A], [B]).unwrap();
        assert_eq!(
            g.crossing_report(&split),
            vec![CrossingWitness {
                kind: CrossingKind::RuleLetter,
                rule: 1,
                item: 0,
                left: A,
                right: B,
            }]
        );
        assert!(RunSlp::default().crossing_report(&split).is_empty());
    }

    #[test]
    fn pop_hand_trace() {
        // X1 -> b, X2 -> a X1
        let mut g = RunSlp::new(vec![vec![run(B, 1)], vec![run(A, 1), Item::Ref(0)]]).unwrap();
        let split = Split::new([A], [B]).unwrap();
        assert_eq!(g.crossing_report(&split).len(), 1);
        let mut meter = CreditMeter::new();
        g.pop(&split, &mut meter);
        assert!(g.is_removed(0));
        assert_eq!(g.body(1), &[run(A, 1), run(B, 1)]);
        assert_eq!(g.expand().unwrap(), vec![A, B]);
        assert_eq!(meter.issued(), 2);
        assert!(g.crossing_report(&split).is_empty());
    }

    #[test]
    fn pop_with_empty_split_is_identity() {
        let mut rng = StdRng::seed_from_u64(5);
        let g = random_run_slp(&mut rng, GenParams::default());
        let mut h = g.clone();
        h.pop(&Split::default(), &mut CreditMeter::new());
        assert_eq!(g, h);
    }

    #[test]
    fn pair_comp_hand_cases() {
        let mut g = RunSlp::new(vec![vec![run(A, 1), run(B, 1)]]).unwrap();
        let mut meter = CreditMeter::new();
        assert_eq!(g.pair_comp_nc(A, B, C, &mut meter), Ok(1));
        assert_eq!(g.expand().unwrap(), vec![C]);
        assert_eq!(meter.released(), 4);
        assert_eq!(g.pair_comp_nc(A, B, C, &mut meter), Ok(0));
        assert_eq!(
            g.pair_comp_nc(A, A, C, &mut meter),
            Err(LabError::EqualPair(A))
        );

        let mut crossing =
            RunSlp::new(vec![vec![run(A, 1)], vec![Item::Ref(0), run(B, 1)]]).unwrap();
        assert!(matches!(
            crossing.pair_comp_nc(A, B, C, &mut meter),
            Err(LabError::CrossingPair(_))
        ));
    }

    #[test]
    fn rem_cr_blocks_hand_trace() {
        // X1 -> a a, X2 -> a X1 b
        let mut g = RunSlp::new(vec![
            vec![run(A, 2)],
            vec![run(A, 1), Item::Ref(0), run(B, 1)],
        ])
        .unwrap();
        let mut meter = CreditMeter::new();
        g.rem_cr_blocks(&mut meter).unwrap();
        assert!(g.is_removed(0));
        assert_eq!(g.body(1), &[run(A, 3), run(B, 1)]);
        assert_eq!(meter.per_rule_new(), &[0, 1]);
    }

    #[test]
    fn rem_cr_blocks_without_crossing_blocks_keeps_bodies() {
        let mut g = RunSlp::new(vec![
            vec![run(A, 1)],
            vec![run(B, 1), run(A, 2)],
            vec![Item::Ref(0), run(C, 1)],
        ])
        .unwrap();
        let before = g.expand().unwrap();
        g.rem_cr_blocks(&mut CreditMeter::new()).unwrap();
        assert_eq!(g.expand().unwrap(), before);
        assert!(g.crossing_blocks_report().is_empty());
    }

    #[test]
    fn block_comp_hand_cases() {
        let mut g = RunSlp::new(vec![vec![run(A, 3), run(B, 1)]]).unwrap();
        let mut meter = CreditMeter::new();
        assert_eq!(g.block_comp_nc(A, |l| 100 + l, &mut meter), Ok(1));
        assert_eq!(g.body(0), &[run(103, 1), run(B, 1)]);
        assert_eq!(g.block_comp_nc(C, |l| 100 + l, &mut meter), Ok(0));

        let mut crossing =
            RunSlp::new(vec![vec![run(A, 1)], vec![Item::Ref(0), run(A, 1)]]).unwrap();
        assert!(matches!(
            crossing.block_comp_nc(A, |l| l, &mut meter),
            Err(LabError::CrossingBlock(_))
        ));
    }

    #[test]
    fn text_format_round_trip() {
        let g = RunSlp::new(vec![
            vec![run(7, 3), run(9, 1)],
            vec![Item::Ref(0), run(300, 2), Item::Ref(0)],
        ])
        .unwrap();
        let text = g.to_text();
        assert_eq!(
            text,
            "SLP 1\nterminals 3 tokens\n7 9 300\nrules 2\n2 0^3 1\n3 3 2^2 3\nstart 4\n"
        );
        let back = RunSlp::parse(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(
            RunSlp::parse("SLP 1\nterminals 0 bytes\nrules 0\nstart empty\n").unwrap(),
            RunSlp::default()
        );
        let t = RunSlp::parse("SLP 1\nterminals 1 bytes\n97\nrules 0\nstart 0\n").unwrap();
        assert_eq!(t.expand().unwrap(), vec![97]);
        assert!(RunSlp::parse("SLP 1\nterminals 1 bytes\n97\nrules 1\n1 1^2\nstart 1\n").is_err());
        assert!(RunSlp::parse("SLP 1\nterminals 1 bytes\n97\nrules 1\n1 0^0\nstart 1\n").is_err());
    }

    #[test]
    fn random_operations_preserve_semantics() {
        let mut rng = StdRng::seed_from_u64(0x5eed);
        for _ in 0..150 {
            let params = GenParams {
                alphabet: rng.random_range(1..5),
                ..GenParams::default()
            };
            let g = random_run_slp(&mut rng, params);
            let s = g.expand().unwrap();
            assert!(!s.is_empty() && s.len() as u64 <= params.max_len);

            let ends = g.first_last_letters();
            for (i, _) in g.live_rules() {
                let e = g.expand_rule(i).unwrap();
                assert_eq!(ends[i], Some((e[0], *e.last().unwrap())));
            }

            let mut blocks = g.clone();
            let mut meter = CreditMeter::new();
            blocks.rem_cr_blocks(&mut meter).unwrap();
            assert_eq!(blocks.expand().unwrap(), s);
            assert!(blocks.crossing_blocks_report().is_empty());
            assert!(meter.max_per_rule_new() <= 4);
            assert!(meter.issued() <= 8 * g.rule_count() as u64);
            for a in blocks.letters() {
                let fresh = |l: u64| 1_000_000 + 1000 * a + l;
                let expected = bc_oracle(&blocks.expand().unwrap(), a, fresh);
                blocks.block_comp_nc(a, fresh, &mut meter).unwrap();
                assert_eq!(blocks.expand().unwrap(), expected);
            }

            let split = random_split(&mut rng, &g.letters());
            let mut popped = g.clone();
            popped.pop(&split, &mut meter);
            assert_eq!(popped.expand().unwrap(), s);
            assert!(popped.crossing_report(&split).is_empty());
            assert!(meter.max_per_rule_new() <= 4);
            let mut next = 2_000_000;
            let mut expected = s.clone();
            for &a in split.left() {
                for &b in split.right() {
                    expected = pc_oracle(&expected, a, b, next);
                    popped.pair_comp_nc(a, b, next, &mut meter).unwrap();
                    assert_eq!(popped.expand().unwrap(), expected);
                    next += 1;
                }
            }

            assert_eq!(RunSlp::parse(&g.to_text()).unwrap().expand().unwrap(), s);
        }
    }
}
