//! The working string: an array of cells with tombstone deletion.
//!
//! Replacements overwrite the first cell of a pair or run and tombstone the
//! rest, so each replacement is O(1) plus the tombstones it skips. Positions
//! are tagged with the compaction epoch they were taken in and are rejected
//! once the text has been compacted again.

use thiserror::Error;

use crate::alphabet::SymbolId;

/// Cell marker for deleted symbols.
pub const TOMBSTONE: SymbolId = SymbolId::MAX;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TextError {
    #[error("position taken in epoch {taken} used in epoch {current}")]
    StalePosition { taken: u32, current: u32 },
    #[error("cell {0} is out of range")]
    OutOfRange(usize),
    #[error("cell {0} is a tombstone")]
    DeadCell(usize),
    #[error("cell {0} has no live successor")]
    NoSuccessor(usize),
    #[error("runs shorter than 2 are never replaced (got {0})")]
    RunTooShort(usize),
    #[error("run starting at cell {start} is not {len} copies of one symbol")]
    NonUniformRun { start: usize, len: usize },
}

/// A cell index valid until the next [`WorkingText::compact`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Position {
    index: usize,
    epoch: u32,
}

impl Position {
    pub(crate) fn new(index: usize, epoch: u32) -> Self {
        Position { index, epoch }
    }

    pub fn index(self) -> usize {
        self.index
    }

    pub fn epoch(self) -> u32 {
        self.epoch
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkingText {
    cells: Vec<SymbolId>,
    live: usize,
    epoch: u32,
}

impl WorkingText {
    /// Wraps a sequence of live symbols. Panics if `symbols` contains [`TOMBSTONE`].
    pub fn new(symbols: Vec<SymbolId>) -> Self {
        assert!(
            !symbols.contains(&TOMBSTONE),
            "the tombstone id cannot be a symbol"
        );
        WorkingText {
            live: symbols.len(),
            cells: symbols,
            epoch: 0,
        }
    }

    /// Number of live cells.
    pub fn len(&self) -> usize {
        self.live
    }

    pub fn is_empty(&self) -> bool {
        self.live == 0
    }

    /// Number of cells including tombstones.
    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    /// Raw cells, tombstones included.
    pub fn cells(&self) -> &[SymbolId] {
        &self.cells
    }

    /// A position for a live cell in the current epoch.
    pub fn position(&self, index: usize) -> Result<Position, TextError> {
        match self.cells.get(index) {
            None => Err(TextError::OutOfRange(index)),
            Some(&TOMBSTONE) => Err(TextError::DeadCell(index)),
            Some(_) => Ok(Position::new(index, self.epoch)),
        }
    }

    pub fn get(&self, at: Position) -> Result<SymbolId, TextError> {
        let index = self.check(at)?;
        Ok(self.cells[index])
    }

    /// The next live position after `at`, if any.
    pub fn next_live(&self, at: Position) -> Result<Option<Position>, TextError> {
        let index = self.check(at)?;
        Ok(self
            .next_live_index(index)
            .map(|i| Position::new(i, self.epoch)))
    }

    /// Iterator over the live symbols in order.
    pub fn live_symbols(&self) -> impl Iterator<Item = SymbolId> + '_ {
        self.cells.iter().copied().filter(|&c| c != TOMBSTONE)
    }

    /// Iterator over `(cell index, symbol)` for live cells.
    pub fn live_cells(&self) -> impl Iterator<Item = (usize, SymbolId)> + '_ {
        self.cells
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, c)| c != TOMBSTONE)
    }

    /// Iterator over adjacent live pairs as `(index of first, first, second)`.
    pub fn live_pairs(&self) -> impl Iterator<Item = (usize, SymbolId, SymbolId)> + '_ {
        let mut cells = self.live_cells();
        let mut prev = cells.next();
        std::iter::from_fn(move || {
            let (i, a) = prev?;
            let (j, b) = cells.next()?;
            prev = Some((j, b));
            Some((i, a, b))
        })
    }

    /// The live sequence as a vector.
    pub fn to_vec(&self) -> Vec<SymbolId> {
        self.live_symbols().collect()
    }

    /// Rewrites every live symbol in place.
    pub fn map_live(&mut self, mut f: impl FnMut(SymbolId) -> SymbolId) {
        for c in self.cells.iter_mut().filter(|c| **c != TOMBSTONE) {
            *c = f(*c);
            debug_assert_ne!(*c, TOMBSTONE);
        }
    }

    /// Replaces the live pair starting at `at` by `fresh`.
    pub fn replace_pair(&mut self, at: Position, fresh: SymbolId) -> Result<(), TextError> {
        let index = self.check(at)?;
        let next = self
            .next_live_index(index)
            .ok_or(TextError::NoSuccessor(index))?;
        self.cells[index] = fresh;
        self.cells[next] = TOMBSTONE;
        self.live -= 1;
        Ok(())
    }

    /// Replaces the run of `len` equal live symbols starting at `at` by `fresh`.
    pub fn replace_run(
        &mut self,
        at: Position,
        len: usize,
        fresh: SymbolId,
    ) -> Result<(), TextError> {
        if len < 2 {
            return Err(TextError::RunTooShort(len));
        }
        let start = self.check(at)?;
        let letter = self.cells[start];
        let mut cells = Vec::with_capacity(len);
        let mut i = start;
        cells.push(i);
        while cells.len() < len {
            match self.next_live_index(i) {
                Some(j) if self.cells[j] == letter => {
                    cells.push(j);
                    i = j;
                }
                _ => return Err(TextError::NonUniformRun { start, len }),
            }
        }
        self.cells[start] = fresh;
        for &j in &cells[1..] {
            self.cells[j] = TOMBSTONE;
        }
        self.live -= len - 1;
        Ok(())
    }

    /// Drops tombstones, preserving order. Invalidates all outstanding positions.
    pub fn compact(&mut self) {
        self.cells.retain(|&c| c != TOMBSTONE);
        debug_assert_eq!(self.cells.len(), self.live);
        self.epoch = self.epoch.wrapping_add(1);
    }

    fn check(&self, at: Position) -> Result<usize, TextError> {
        if at.epoch != self.epoch {
            return Err(TextError::StalePosition {
                taken: at.epoch,
                current: self.epoch,
            });
        }
        match self.cells.get(at.index) {
            None => Err(TextError::OutOfRange(at.index)),
            Some(&TOMBSTONE) => Err(TextError::DeadCell(at.index)),
            Some(_) => Ok(at.index),
        }
    }

    fn next_live_index(&self, index: usize) -> Option<usize> {
        self.cells[index + 1..]
            .iter()
            .position(|&c| c != TOMBSTONE)
            .map(|off| index + 1 + off)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn replace_pair_basic() {
        let mut t = WorkingText::new(vec![0, 1, 2]);
        let p = t.position(0).unwrap();
        t.replace_pair(p, 9).unwrap();
        assert_eq!(t.to_vec(), vec![9, 2]);
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn replace_pair_skips_tombstones() {
        // [0, †, 1, 2]
        let mut t = WorkingText::new(vec![0, 5, 1, 2]);
        let p = t.position(0).unwrap();
        t.replace_pair(p, 0).unwrap();
        assert_eq!(t.cells(), &[0, TOMBSTONE, 1, 2]);
        let p = t.position(2).unwrap();
        t.replace_pair(p, 9).unwrap();
        assert_eq!(t.to_vec(), vec![0, 9]);
    }

    #[test]
    fn disjoint_pair_replacements_commute() {
        let mut a = WorkingText::new(vec![1, 2, 3, 4, 5]);
        let mut b = a.clone();
        let (p0, p3) = (a.position(0).unwrap(), a.position(3).unwrap());
        a.replace_pair(p0, 7).unwrap();
        a.replace_pair(p3, 8).unwrap();
        b.replace_pair(p3, 8).unwrap();
        b.replace_pair(p0, 7).unwrap();
        assert_eq!(a.to_vec(), b.to_vec());
        assert_eq!(a.to_vec(), vec![7, 3, 8]);
    }

    #[test]
    fn replace_pair_errors() {
        let mut t = WorkingText::new(vec![0, 1]);
        let last = t.position(1).unwrap();
        assert_eq!(t.replace_pair(last, 4), Err(TextError::NoSuccessor(1)));
        let first = t.position(0).unwrap();
        t.replace_pair(first, 4).unwrap();
        assert_eq!(t.replace_pair(last, 4), Err(TextError::DeadCell(1)));
        assert_eq!(t.position(7), Err(TextError::OutOfRange(7)));
    }

    #[test]
    fn replace_run_cases() {
        let mut t = WorkingText::new(vec![3, 3, 3, 5]);
        let p = t.position(0).unwrap();
        t.replace_run(p, 3, 8).unwrap();
        assert_eq!(t.to_vec(), vec![8, 5]);

        let mut t = WorkingText::new(vec![4, 4]);
        let p = t.position(0).unwrap();
        t.replace_run(p, 2, 8).unwrap();
        assert_eq!(t.to_vec(), vec![8]);

        let mut t = WorkingText::new(vec![4, 4, 5]);
        let p = t.position(0).unwrap();
        assert_eq!(t.replace_run(p, 1, 8), Err(TextError::RunTooShort(1)));
        assert_eq!(
            t.replace_run(p, 3, 8),
            Err(TextError::NonUniformRun { start: 0, len: 3 })
        );
        assert_eq!(t.to_vec(), vec![4, 4, 5]);
    }

    #[test]
    fn compact_preserves_order_and_invalidates_positions() {
        let mut t = WorkingText::new(vec![0, 1, 2, 3, 4]);
        let p0 = t.position(0).unwrap();
        let p2 = t.position(2).unwrap();
        t.replace_pair(p0, 9).unwrap();
        t.replace_pair(p2, 8).unwrap();
        let p4 = t.position(4).unwrap();
        t.compact();
        assert_eq!(t.cells(), &[9, 8, 4]);
        assert_eq!(t.len(), 3);
        assert!(matches!(t.get(p4), Err(TextError::StalePosition { .. })));
        assert!(matches!(
            t.replace_pair(p4, 1),
            Err(TextError::StalePosition { .. })
        ));
    }

    #[derive(Debug, Clone)]
    enum Op {
        Pair(usize, SymbolId),
        Run(usize, usize, SymbolId),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0usize..64, 10u32..20).prop_map(|(i, f)| Op::Pair(i, f)),
            (0usize..64, 2usize..5, 10u32..20).prop_map(|(i, l, f)| Op::Run(i, l, f)),
        ]
    }

    proptest! {
        // Random scripts of legal replacements agree with a plain Vec oracle.
        #[test]
        fn matches_list_oracle(
            init in proptest::collection::vec(0u32..3, 1..64),
            script in proptest::collection::vec(op(), 0..40),
            compact_every in 1usize..6,
        ) {
            let mut text = WorkingText::new(init.clone());
            let mut oracle = init;
            for (step, op) in script.into_iter().enumerate() {
                match op {
                    Op::Pair(i, fresh) => {
                        if i + 1 >= oracle.len() { continue; }
                        let idx = text.live_cells().nth(i).unwrap().0;
                        text.replace_pair(text.position(idx).unwrap(), fresh).unwrap();
                        oracle.splice(i..i + 2, [fresh]);
                    }
                    Op::Run(i, len, fresh) => {
                        if i + len > oracle.len() || oracle[i..i + len].iter().any(|&c| c != oracle[i]) {
                            continue;
                        }
                        let idx = text.live_cells().nth(i).unwrap().0;
                        text.replace_run(text.position(idx).unwrap(), len, fresh).unwrap();
                        oracle.splice(i..i + len, [fresh]);
                    }
                }
                if step % compact_every == 0 {
                    text.compact();
                }
                prop_assert_eq!(text.len(), oracle.len());
            }
            prop_assert_eq!(text.to_vec(), oracle);
        }
    }
}
