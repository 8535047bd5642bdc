//! Straight-line programs: storage, size accounting, expansion and the text format.
//!
//! Symbol ids below `σ` are terminals. The rule with index `k` has id `σ + k`
//! and its body may only mention smaller ids, so the rule list is always in
//! topological order and generates exactly one string.
//!
//! The text format is line oriented, UTF-8 with LF endings:
//!
//! ```text
//! SLP 1
//! terminals <σ> <bytes|tokens>
//! <raw terminal values, omitted when σ = 0>
//! rules <r>
//! <len> <sym> <sym> ...      one line per rule, ids σ, σ+1, ...
//! start <id> | start empty
//! ```

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alphabet::{InputKind, SymbolId};

/// Largest representable expansion length.
pub const MAX_EXPANSION: u64 = (1 << 63) - 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GrammarError {
    #[error("rule bodies must be non-empty")]
    EmptyBody,
    #[error("rule {rule} refers to symbol {symbol}, which is not defined before it")]
    ForwardReference { rule: SymbolId, symbol: SymbolId },
    #[error("start symbol {0} is not defined")]
    StartOutOfRange(SymbolId),
    #[error("symbol {0} is not defined")]
    UnknownSymbol(SymbolId),
    #[error("expansion of symbol {0} is at least 2^63 long")]
    LengthOverflow(SymbolId),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn parse_error(line: usize, message: impl Into<String>) -> GrammarError {
    GrammarError::Parse {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slp {
    kind: InputKind,
    terminals: Vec<u64>,
    symbols: Vec<SymbolId>,
    offsets: Vec<usize>,
    start: Option<SymbolId>,
}

impl Slp {
    /// A grammar with the given terminals, no rules and the empty start.
    pub fn new(kind: InputKind, terminals: Vec<u64>) -> Self {
        Slp {
            kind,
            terminals,
            symbols: Vec::new(),
            offsets: vec![0],
            start: None,
        }
    }

    pub fn kind(&self) -> InputKind {
        self.kind
    }

    pub fn terminal_count(&self) -> usize {
        self.terminals.len()
    }

    pub fn terminals(&self) -> &[u64] {
        &self.terminals
    }

    pub fn rule_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Total length of all rule bodies.
    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    /// One past the largest defined id.
    pub fn symbol_bound(&self) -> SymbolId {
        (self.terminal_count() + self.rule_count()) as SymbolId
    }

    pub fn is_terminal(&self, id: SymbolId) -> bool {
        (id as usize) < self.terminal_count()
    }

    /// Id of the rule with the given index.
    pub fn rule_id(&self, index: usize) -> SymbolId {
        (self.terminal_count() + index) as SymbolId
    }

    /// Body of rule `id`. Panics if `id` is not a rule.
    pub fn body(&self, id: SymbolId) -> &[SymbolId] {
        let k = id as usize - self.terminal_count();
        &self.symbols[self.offsets[k]..self.offsets[k + 1]]
    }

    /// Iterator over `(id, body)` for all rules.
    pub fn rules(&self) -> impl Iterator<Item = (SymbolId, &[SymbolId])> + '_ {
        (0..self.rule_count()).map(move |k| {
            (
                self.rule_id(k),
                &self.symbols[self.offsets[k]..self.offsets[k + 1]],
            )
        })
    }

    pub fn start(&self) -> Option<SymbolId> {
        self.start
    }

    pub fn set_start(&mut self, start: Option<SymbolId>) -> Result<(), GrammarError> {
        if let Some(s) = start {
            if s >= self.symbol_bound() {
                return Err(GrammarError::StartOutOfRange(s));
            }
        }
        self.start = start;
        Ok(())
    }

    /// Appends a rule and returns its id.
    pub fn emit_rule(&mut self, body: &[SymbolId]) -> Result<SymbolId, GrammarError> {
        if body.is_empty() {
            return Err(GrammarError::EmptyBody);
        }
        let id = self.symbol_bound();
        if let Some(&symbol) = body.iter().find(|&&s| s >= id) {
            return Err(GrammarError::ForwardReference { rule: id, symbol });
        }
        Ok(self.push_rule(body))
    }

    pub(crate) fn push_rule(&mut self, body: &[SymbolId]) -> SymbolId {
        debug_assert!(!body.is_empty());
        debug_assert!(body.iter().all(|&s| s < self.symbol_bound()));
        let id = self.symbol_bound();
        self.symbols.extend_from_slice(body);
        self.offsets.push(self.symbols.len());
        id
    }

    /// Drops every rule with index `>= rule_count`. Clears the start if it was dropped.
    pub fn truncate_rules(&mut self, rule_count: usize) {
        if rule_count >= self.rule_count() {
            return;
        }
        self.offsets.truncate(rule_count + 1);
        self.symbols.truncate(self.offsets[rule_count]);
        if self.start.is_some_and(|s| s >= self.symbol_bound()) {
            self.start = None;
        }
    }

    /// Expansion length of every rule, indexed by rule index.
    pub fn rule_lengths(&self) -> Result<Vec<u64>, GrammarError> {
        let sigma = self.terminal_count();
        let mut lens: Vec<u64> = Vec::with_capacity(self.rule_count());
        for (id, body) in self.rules() {
            let mut total: u64 = 0;
            for &s in body {
                let l = if (s as usize) < sigma {
                    1
                } else {
                    lens[s as usize - sigma]
                };
                total = total
                    .checked_add(l)
                    .filter(|&t| t <= MAX_EXPANSION)
                    .ok_or(GrammarError::LengthOverflow(id))?;
            }
            lens.push(total);
        }
        Ok(lens)
    }

    /// Like [`Slp::rule_lengths`], but saturates at `None` instead of failing.
    pub fn saturating_rule_lengths(&self) -> Vec<Option<u64>> {
        let sigma = self.terminal_count();
        let mut lens: Vec<Option<u64>> = Vec::with_capacity(self.rule_count());
        for (_, body) in self.rules() {
            let total = body.iter().try_fold(0u64, |acc, &s| {
                let l = if (s as usize) < sigma {
                    Some(1)
                } else {
                    lens[s as usize - sigma]
                };
                acc.checked_add(l?).filter(|&t| t <= MAX_EXPANSION)
            });
            lens.push(total);
        }
        lens
    }

    /// Length of the string derived by `symbol`.
    pub fn expansion_len(&self, symbol: SymbolId) -> Result<u64, GrammarError> {
        if symbol >= self.symbol_bound() {
            return Err(GrammarError::UnknownSymbol(symbol));
        }
        if self.is_terminal(symbol) {
            return Ok(1);
        }
        let lens = self.rule_lengths()?;
        Ok(lens[symbol as usize - self.terminal_count()])
    }

    /// Length of the whole derived string.
    pub fn len(&self) -> Result<u64, GrammarError> {
        match self.start {
            None => Ok(0),
            Some(s) => self.expansion_len(s),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.start.is_none()
    }

    /// Height of the derivation tree: terminals have depth 0.
    pub fn depth(&self) -> usize {
        let sigma = self.terminal_count();
        let mut depth: Vec<usize> = Vec::with_capacity(self.rule_count());
        for (_, body) in self.rules() {
            let d = body
                .iter()
                .map(|&s| {
                    if (s as usize) < sigma {
                        0
                    } else {
                        depth[s as usize - sigma]
                    }
                })
                .max()
                .unwrap_or(0);
            depth.push(d + 1);
        }
        match self.start {
            None => 0,
            Some(s) if (s as usize) < sigma => 0,
            Some(s) => depth[s as usize - sigma],
        }
    }

    /// Streams the terminal ids derived by `symbol`.
    ///
    /// Fails before producing anything if the expansion would be 2^63 or longer.
    pub fn expand(&self, symbol: SymbolId) -> Result<Expansion<'_>, GrammarError> {
        self.expansion_len(symbol)?;
        Ok(Expansion::new(self, Some(symbol)))
    }

    /// Streams the terminal ids of the whole derived string.
    pub fn expand_start(&self) -> Result<Expansion<'_>, GrammarError> {
        match self.start {
            None => Ok(Expansion::new(self, None)),
            Some(s) => self.expand(s),
        }
    }

    /// The derived string as raw terminal values.
    pub fn expand_raw(&self) -> Result<Vec<u64>, GrammarError> {
        Ok(self
            .expand_start()?
            .map(|t| self.terminals[t as usize])
            .collect())
    }

    /// Writes the derived string: raw bytes, or tokens separated by single spaces
    /// with a final newline.
    pub fn write_expansion<W: io::Write>(&self, out: &mut W) -> io::Result<()> {
        let expansion = self
            .expand_start()
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let mut buf = Vec::with_capacity(1 << 16);
        let mut first = true;
        for t in expansion {
            let v = self.terminals[t as usize];
            match self.kind {
                InputKind::Bytes => buf.push(v as u8),
                InputKind::Tokens => {
                    if !first {
                        buf.push(b' ');
                    }
                    buf.extend_from_slice(v.to_string().as_bytes());
                }
            }
            first = false;
            if buf.len() >= 1 << 16 {
                out.write_all(&buf)?;
                buf.clear();
            }
        }
        if self.kind == InputKind::Tokens && !first {
            buf.push(b'\n');
        }
        out.write_all(&buf)
    }

    /// Checks topological order, non-empty bodies, the start and the length table.
    pub fn validate(&self) -> Result<(), GrammarError> {
        for (id, body) in self.rules() {
            if body.is_empty() {
                return Err(GrammarError::EmptyBody);
            }
            if let Some(&symbol) = body.iter().find(|&&s| s >= id) {
                return Err(GrammarError::ForwardReference { rule: id, symbol });
            }
        }
        if let Some(s) = self.start {
            if s >= self.symbol_bound() {
                return Err(GrammarError::StartOutOfRange(s));
            }
        }
        self.rule_lengths().map(|_| ())
    }

    /// Keeps exactly the rules reachable from the start, renumbered in order.
    pub fn prune_unreachable(&self) -> Slp {
        let sigma = self.terminal_count();
        let r = self.rule_count();
        let mut reachable = vec![false; r];
        if let Some(s) = self.start {
            if s as usize >= sigma {
                reachable[s as usize - sigma] = true;
            }
        }
        for k in (0..r).rev() {
            if !reachable[k] {
                continue;
            }
            for &s in self.body(self.rule_id(k)) {
                if s as usize >= sigma {
                    reachable[s as usize - sigma] = true;
                }
            }
        }
        let mut new_id = vec![SymbolId::MAX; r];
        let mut out = Slp::new(self.kind, self.terminals.clone());
        let mut body = Vec::new();
        for k in (0..r).filter(|&k| reachable[k]) {
            body.clear();
            body.extend(self.body(self.rule_id(k)).iter().map(|&s| {
                if (s as usize) < sigma {
                    s
                } else {
                    new_id[s as usize - sigma]
                }
            }));
            new_id[k] = out.push_rule(&body);
        }
        out.start = self.start.map(|s| {
            if (s as usize) < sigma {
                s
            } else {
                new_id[s as usize - sigma]
            }
        });
        out
    }

    /// Renders the grammar in the text format.
    pub fn serialize(&self) -> String {
        let mut out = String::with_capacity(16 + 4 * self.size());
        let _ = writeln!(out, "SLP 1");
        write_terminals(&mut out, self.kind, &self.terminals);
        let _ = writeln!(out, "rules {}", self.rule_count());
        for (_, body) in self.rules() {
            let _ = write!(out, "{}", body.len());
            for s in body {
                let _ = write!(out, " {s}");
            }
            out.push('\n');
        }
        write_start(&mut out, self.start);
        out
    }

    /// Parses the text format. Run items (`sym^mult`) are rejected.
    pub fn deserialize(text: &str) -> Result<Slp, GrammarError> {
        let doc = parse_document(text, false)?;
        let mut slp = Slp::new(doc.kind, doc.terminals);
        for (k, rule) in doc.rules.iter().enumerate() {
            let line = doc.rule_lines[k];
            let body: Vec<SymbolId> = rule.iter().map(|item| item.symbol).collect();
            slp.emit_rule(&body)
                .map_err(|e| parse_error(line, e.to_string()))?;
        }
        slp.set_start(doc.start)
            .map_err(|e| parse_error(doc.start_line, e.to_string()))?;
        Ok(slp)
    }
}

pub(crate) fn write_terminals(out: &mut String, kind: InputKind, terminals: &[u64]) {
    let _ = writeln!(out, "terminals {} {}", terminals.len(), kind);
    if !terminals.is_empty() {
        let mut first = true;
        for v in terminals {
            if !first {
                out.push(' ');
            }
            let _ = write!(out, "{v}");
            first = false;
        }
        out.push('\n');
    }
}

pub(crate) fn write_start(out: &mut String, start: Option<SymbolId>) {
    match start {
        None => out.push_str("start empty\n"),
        Some(s) => {
            let _ = writeln!(out, "start {s}");
        }
    }
}

/// Streaming expansion with an explicit stack.
pub struct Expansion<'a> {
    slp: &'a Slp,
    pending_terminal: Option<SymbolId>,
    stack: Vec<(SymbolId, usize)>,
}

impl<'a> Expansion<'a> {
    fn new(slp: &'a Slp, symbol: Option<SymbolId>) -> Self {
        let mut e = Expansion {
            slp,
            pending_terminal: None,
            stack: Vec::new(),
        };
        match symbol {
            Some(s) if slp.is_terminal(s) => e.pending_terminal = Some(s),
            Some(s) => e.stack.push((s, 0)),
            None => {}
        }
        e
    }
}

impl Iterator for Expansion<'_> {
    type Item = SymbolId;

    fn next(&mut self) -> Option<SymbolId> {
        if let Some(t) = self.pending_terminal.take() {
            return Some(t);
        }
        loop {
            let (rule, pos) = self.stack.last_mut()?;
            let body = self.slp.body(*rule);
            if *pos == body.len() {
                self.stack.pop();
                continue;
            }
            let s = body[*pos];
            *pos += 1;
            if self.slp.is_terminal(s) {
                return Some(s);
            }
            self.stack.push((s, 0));
        }
    }
}

/// Size accounting for one compression run.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GrammarStats {
    pub input_len: usize,
    pub terminal_count: usize,
    pub rule_count: usize,
    pub size: usize,
    pub phases: usize,
    /// The phase chosen by the improved variant (0 is the whole input as one rule).
    pub chosen_phase: usize,
    pub phase_sizes: Vec<PhaseSize>,
}

/// `|T_i|` and the representation cost paid before phase `i` starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseSize {
    pub phase: usize,
    pub live_count: usize,
    pub representation_cost: usize,
}

impl PhaseSize {
    /// Size of the grammar `X -> T_i` plus everything emitted so far.
    pub fn size(&self) -> usize {
        self.live_count + self.representation_cost
    }
}

// --- text format parsing, shared with the run-length lab ---

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct RawItem {
    pub symbol: SymbolId,
    pub mult: u64,
}

#[derive(Debug)]
pub(crate) struct RawDocument {
    pub kind: InputKind,
    pub terminals: Vec<u64>,
    pub rules: Vec<Vec<RawItem>>,
    pub rule_lines: Vec<usize>,
    pub start: Option<SymbolId>,
    pub start_line: usize,
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Split<'a, char>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.split('\n').enumerate(),
        }
    }

    fn next_line(&mut self, what: &str) -> Result<(usize, &'a str), GrammarError> {
        match self.inner.next() {
            Some((i, l)) if !(l.is_empty() && self.is_at_end()) => Ok((i + 1, l)),
            Some((i, _)) => Err(parse_error(
                i + 1,
                format!("unexpected end of file, expected {what}"),
            )),
            None => Err(parse_error(
                0,
                format!("unexpected end of file, expected {what}"),
            )),
        }
    }

    fn is_at_end(&self) -> bool {
        self.inner.clone().next().is_none()
    }
}

fn parse_number<T: std::str::FromStr>(
    tok: &str,
    line: usize,
    what: &str,
) -> Result<T, GrammarError> {
    if tok.is_empty() || !tok.bytes().all(|b| b.is_ascii_digit()) {
        return Err(parse_error(line, format!("expected {what}, found {tok:?}")));
    }
    tok.parse()
        .map_err(|_| parse_error(line, format!("{what} {tok:?} is out of range")))
}

fn split_fields(l: &str) -> Vec<&str> {
    l.split(' ').collect()
}

pub(crate) fn parse_document(text: &str, allow_runs: bool) -> Result<RawDocument, GrammarError> {
    let mut lines = Lines::new(text);

    let (n, l) = lines.next_line("header")?;
    if l != "SLP 1" {
        return Err(parse_error(
            n,
            format!("expected header \"SLP 1\", found {l:?}"),
        ));
    }

    let (n, l) = lines.next_line("terminals line")?;
    let f = split_fields(l);
    if f.len() != 3 || f[0] != "terminals" {
        return Err(parse_error(
            n,
            "expected \"terminals <count> <bytes|tokens>\"",
        ));
    }
    let sigma: usize = parse_number(f[1], n, "terminal count")?;
    let kind: InputKind = f[2].parse().map_err(|e: String| parse_error(n, e))?;
    let mut terminals = Vec::with_capacity(sigma.min(1 << 20));
    if sigma > 0 {
        let (n, l) = lines.next_line("terminal values")?;
        for tok in split_fields(l) {
            let v: u64 = parse_number(tok, n, "terminal value")?;
            if kind == InputKind::Bytes && v > 255 {
                return Err(parse_error(n, format!("byte terminal {v} exceeds 255")));
            }
            terminals.push(v);
        }
        if terminals.len() != sigma {
            return Err(parse_error(
                n,
                format!(
                    "expected {sigma} terminal values, found {}",
                    terminals.len()
                ),
            ));
        }
    }
    if sigma as u64 >= SymbolId::MAX as u64 {
        return Err(parse_error(n, "too many terminals"));
    }

    let (n, l) = lines.next_line("rules line")?;
    let f = split_fields(l);
    if f.len() != 2 || f[0] != "rules" {
        return Err(parse_error(n, "expected \"rules <count>\""));
    }
    let r: usize = parse_number(f[1], n, "rule count")?;
    if (sigma as u64 + r as u64) >= SymbolId::MAX as u64 {
        return Err(parse_error(n, "too many rules"));
    }
    let mut rules = Vec::with_capacity(r.min(1 << 20));
    let mut rule_lines = Vec::with_capacity(r.min(1 << 20));
    for _ in 0..r {
        let (n, l) = lines.next_line("rule")?;
        let f = split_fields(l);
        let len: usize = parse_number(f[0], n, "body length")?;
        if f.len() - 1 != len {
            return Err(parse_error(
                n,
                format!("body length {len} does not match {} symbols", f.len() - 1),
            ));
        }
        let mut body = Vec::with_capacity(len);
        for tok in &f[1..] {
            let item = match tok.split_once('^') {
                Some((sym, mult)) if allow_runs => RawItem {
                    symbol: parse_number(sym, n, "symbol")?,
                    mult: parse_number(mult, n, "multiplicity")?,
                },
                Some(_) => {
                    return Err(parse_error(
                        n,
                        format!("run item {tok:?} in a plain grammar"),
                    ))
                }
                None => RawItem {
                    symbol: parse_number(tok, n, "symbol")?,
                    mult: 1,
                },
            };
            body.push(item);
        }
        rules.push(body);
        rule_lines.push(n);
    }

    let (start_line, l) = lines.next_line("start line")?;
    let start = match l.strip_prefix("start ") {
        Some("empty") => None,
        Some(id) => Some(parse_number(id, start_line, "start symbol")?),
        None => {
            return Err(parse_error(
                start_line,
                "expected \"start <id>\" or \"start empty\"",
            ))
        }
    };
    match lines.inner.next() {
        Some((_, "")) if lines.is_at_end() => {}
        Some((i, _)) => return Err(parse_error(i + 1, "trailing content after start line")),
        None => return Err(parse_error(start_line, "missing final newline")),
    }
    Ok(RawDocument {
        kind,
        terminals,
        rules,
        rule_lines,
        start,
        start_line,
    })
}
