//! One recompression phase on a grammar agrees with the same phase on its text.

use std::collections::HashMap;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use recompress::slprecomp::gen::{random_run_slp, GenParams};
use recompress::{CreditMeter, Letter, RawInput, Recompressor, RunSlp, Split, SymbolId};

const FRESH: Letter = 1_000_000;

struct Naming {
    terminals: Vec<u64>,
}

impl Naming {
    fn letter(&self, canonical: SymbolId) -> Letter {
        match self.terminals.get(canonical as usize) {
            Some(&v) => v,
            None => FRESH + canonical as Letter,
        }
    }
}

fn simulate(g: &RunSlp) -> (Vec<Letter>, Vec<Letter>) {
    let s = g.expand().unwrap();
    let mut rc = Recompressor::from_raw(RawInput::Tokens(&s)).unwrap();
    let naming = Naming {
        terminals: rc.alphabet().terminals().to_vec(),
    };
    let (_, detail) = rc.phase_detailed();
    let text: Vec<Letter> = rc
        .canonical_text()
        .into_iter()
        .map(|c| naming.letter(c))
        .collect();

    let mut lab = g.clone();
    let mut meter = CreditMeter::new();
    lab.rem_cr_blocks(&mut meter).unwrap();
    let mut blocks: HashMap<(Letter, u64), Letter> = HashMap::new();
    for r in &detail.blocks {
        blocks.insert((naming.letter(r.letter), r.length), naming.letter(r.symbol));
    }
    let mut unused = u64::MAX;
    for a in lab.letters() {
        lab.block_comp_nc(
            a,
            |l| {
                blocks.get(&(a, l)).copied().unwrap_or_else(|| {
                    unused -= 1;
                    unused
                })
            },
            &mut meter,
        )
        .unwrap();
    }
    let split = Split::new(
        detail.left.iter().map(|&c| naming.letter(c)),
        detail.right.iter().map(|&c| naming.letter(c)),
    )
    .unwrap();
    lab.pop(&split, &mut meter);
    assert!(lab.crossing_report(&split).is_empty());
    for p in &detail.pairs {
        lab.pair_comp_nc(
            naming.letter(p.left),
            naming.letter(p.right),
            naming.letter(p.symbol),
            &mut meter,
        )
        .unwrap();
    }
    (lab.expand().unwrap(), text)
}

#[test]
fn grammar_phase_matches_text_phase() {
    let mut rng = StdRng::seed_from_u64(2024);
    let mut checked = 0;
    for _ in 0..300 {
        let params = GenParams {
            alphabet: rng.random_range(1..6),
            ..GenParams::default()
        };
        let g = random_run_slp(&mut rng, params);
        if g.len() < 2 {
            continue;
        }
        let (lab, text) = simulate(&g);
        assert_eq!(lab, text, "grammar:\n{}", g.to_text());
        checked += 1;
    }
    assert!(checked >= 200);
}

#[test]
fn unary_grammar_phase() {
    // X1 -> a^5, X2 -> X1 X1 derives a^10, one block
    let g =
        RunSlp::parse("SLP 1\nterminals 1 bytes\n97\nrules 2\n1 0^5\n2 1 1\nstart 2\n").unwrap();
    let (lab, text) = simulate(&g);
    assert_eq!(lab, text);
    assert_eq!(lab.len(), 1);
}
