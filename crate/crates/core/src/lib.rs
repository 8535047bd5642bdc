//! Grammar compression by recompression.
//!
//! The compressor turns a byte or token string into a straight-line program
//! (SLP): a context-free grammar in which every nonterminal has exactly one
//! rule and the start symbol derives exactly the input. It works in phases of
//! block compression and pair compression over a single working text and runs
//! in linear time.
//!
//! ```
//! use recompress::{compress_bytes, Mode, Slp};
//!
//! let input = b"abababababababab";
//! let out = compress_bytes(input, Mode::Improved);
//! let text = out.slp.serialize();
//! let back = Slp::deserialize(&text).unwrap();
//! let bytes: Vec<u8> = back.expand_raw().unwrap().into_iter().map(|b| b as u8).collect();
//! assert_eq!(bytes, input);
//! ```

pub mod alphabet;
pub mod blockcomp;
pub mod driver;
pub mod grammar;
pub mod paircomp;
pub mod slprecomp;
pub mod text;

pub use alphabet::{
    ingest, parse_tokens, AlphabetError, AlphabetMap, InputKind, RawInput, SymbolId,
};
pub use driver::{
    compress, compress_bytes, compress_tokens, Compressed, Mode, PhaseTrace, Recompressor,
};
pub use grammar::{GrammarError, GrammarStats, PhaseSize, Slp, MAX_EXPANSION};
pub use slprecomp::{CreditMeter, Item, LabError, Letter, RunSlp, Split};
pub use text::WorkingText;

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
mod readme {}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/phases.md")]
    mod phases {}
    #[doc = include_str!("../../../book/src/blocks.md")]
    mod blocks {}
    #[doc = include_str!("../../../book/src/pairs.md")]
    mod pairs {}
    #[doc = include_str!("../../../book/src/improved.md")]
    mod improved {}
    #[doc = include_str!("../../../book/src/grammar-format.md")]
    mod grammar_format {}
    #[doc = include_str!("../../../book/src/verification-lab.md")]
    mod verification_lab {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
