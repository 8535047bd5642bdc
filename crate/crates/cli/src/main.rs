//! `recompress`: grammar compression of files.
//!
//! Exit codes: 0 success, 1 verify mismatch, 2 unreadable input or malformed
//! grammar, 3 write failure, 4 expansion overflow.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use recompress::{
    compress, parse_tokens, GrammarError, InputKind, Mode, PhaseTrace, RawInput, Slp,
};

#[derive(Debug, Parser)]
#[command(
    name = "recompress",
    version,
    about = "Grammar-based compression by recompression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compress a file into a grammar file.
    Compress {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = Mode::Improved)]
        mode: Mode,
        /// Read the input as raw bytes or as whitespace-separated decimal tokens.
        #[arg(long = "input", value_name = "KIND", default_value_t = InputKind::Bytes)]
        kind: InputKind,
        /// Write one JSON line per phase to this file.
        #[arg(long, value_name = "PATH")]
        trace: Option<PathBuf>,
    },
    /// Expand a grammar file back into the original data.
    Decompress { input: PathBuf, output: PathBuf },
    /// Print rule count, size, depth and expansion length of a grammar file.
    Stats {
        input: PathBuf,
        /// Also print the per-phase size table from a trace file.
        #[arg(long, value_name = "PATH")]
        trace: Option<PathBuf>,
    },
    /// Check that a grammar file expands to the given original file.
    Verify { grammar: PathBuf, original: PathBuf },
}

#[derive(Debug)]
enum Failure {
    Mismatch(String),
    Input(String),
    Write(String),
    Overflow(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Mismatch(_) => 1,
            Failure::Input(_) => 2,
            Failure::Write(_) => 3,
            Failure::Overflow(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Mismatch(m) | Failure::Input(m) | Failure::Write(m) | Failure::Overflow(m) => {
                m
            }
        }
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))
}

fn load_grammar(path: &Path) -> Result<Slp, Failure> {
    let bytes = read_input(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| Failure::Input(format!("{}: grammar file is not UTF-8", path.display())))?;
    let slp =
        Slp::deserialize(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    match slp.validate() {
        Ok(()) => Ok(slp),
        Err(e @ GrammarError::LengthOverflow(_)) => {
            Err(Failure::Overflow(format!("{}: {e}", path.display())))
        }
        Err(e) => Err(Failure::Input(format!("{}: {e}", path.display()))),
    }
}

fn write_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Write(format!("cannot write {}: {e}", path.display()))
}

fn cmd_compress(
    input: &Path,
    output: &Path,
    mode: Mode,
    kind: InputKind,
    trace: Option<&Path>,
) -> Result<(), Failure> {
    let bytes = read_input(input)?;
    let tokens;
    let raw = match kind {
        InputKind::Bytes => RawInput::Bytes(&bytes),
        InputKind::Tokens => {
            let text = std::str::from_utf8(&bytes).map_err(|_| {
                Failure::Input(format!("{}: token file is not UTF-8", input.display()))
            })?;
            tokens = parse_tokens(text)
                .map_err(|e| Failure::Input(format!("{}: {e}", input.display())))?;
            RawInput::Tokens(&tokens)
        }
    };
    let out =
        compress(raw, mode).map_err(|e| Failure::Input(format!("{}: {e}", input.display())))?;
    fs::write(output, out.slp.serialize()).map_err(|e| write_failure(output, e))?;
    if let Some(path) = trace {
        write_trace(path, &out.traces).map_err(|e| write_failure(path, e))?;
    }
    let s = &out.stats;
    let ratio = if s.input_len == 0 {
        "-".to_string()
    } else {
        format!("{:.4}", s.size as f64 / s.input_len as f64)
    };
    eprintln!(
        "N={} sigma={} phases={} size={} ratio={}",
        s.input_len, s.terminal_count, s.phases, s.size, ratio
    );
    Ok(())
}

fn write_trace(path: &Path, traces: &[PhaseTrace]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for t in traces {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

fn cmd_decompress(input: &Path, output: &Path) -> Result<(), Failure> {
    let slp = load_grammar(input)?;
    let file = File::create(output).map_err(|e| write_failure(output, e))?;
    let mut w = BufWriter::new(file);
    slp.write_expansion(&mut w)
        .and_then(|()| w.flush())
        .map_err(|e| write_failure(output, e))
}

fn cmd_stats(input: &Path, trace: Option<&Path>) -> Result<(), Failure> {
    let slp = load_grammar(input).or_else(|f| match f {
        Failure::Overflow(_) => {
            let text = String::from_utf8_lossy(&read_input(input)?).into_owned();
            Slp::deserialize(&text).map_err(|e| Failure::Input(e.to_string()))
        }
        other => Err(other),
    })?;
    let length = match slp.len() {
        Ok(n) => n.to_string(),
        Err(_) => "≥2^63".to_string(),
    };
    println!("rules {}", slp.rule_count());
    println!("size {}", slp.size());
    println!("depth {}", slp.depth());
    println!("length {length}");
    if let Some(path) = trace {
        let file = File::open(path)
            .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
        println!("phase live cost size");
        let mut cost = 0;
        let mut last = None;
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            let t: PhaseTrace = serde_json::from_str(&line)
                .map_err(|e| Failure::Input(format!("{}:{}: {e}", path.display(), n + 1)))?;
            println!(
                "{} {} {} {}",
                t.phase,
                t.live_before,
                cost,
                t.live_before + cost
            );
            cost = t.representation_cost;
            last = Some(t);
        }
        if let Some(t) = last {
            println!(
                "{} {} {} {}",
                t.phase + 1,
                t.live_after,
                cost,
                t.live_after + cost
            );
        }
    }
    Ok(())
}

/// Compares everything written against a reader.
struct Compare<R> {
    expected: R,
    offset: u64,
    mismatch: Option<u64>,
    buf: Vec<u8>,
}

impl<R: Read> Write for Compare<R> {
    fn write(&mut self, data: &[u8]) -> io::Result<usize> {
        if self.mismatch.is_none() {
            self.buf.resize(data.len(), 0);
            let n = read_full(&mut self.expected, &mut self.buf)?;
            if let Some(i) = (0..data.len()).find(|&i| i >= n || self.buf[i] != data[i]) {
                self.mismatch = Some(self.offset + i as u64);
            }
            self.offset += data.len() as u64;
        }
        Ok(data.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

fn read_full(r: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..])? {
            0 => break,
            k => n += k,
        }
    }
    Ok(n)
}

fn cmd_verify(grammar: &Path, original: &Path) -> Result<(), Failure> {
    let slp = load_grammar(grammar)?;
    let file = File::open(original)
        .map_err(|e| Failure::Input(format!("cannot read {}: {e}", original.display())))?;
    let read_failure =
        |e: io::Error| Failure::Input(format!("cannot read {}: {e}", original.display()));
    match slp.kind() {
        InputKind::Bytes => {
            let mut cmp = Compare {
                expected: BufReader::new(file),
                offset: 0,
                mismatch: None,
                buf: Vec::new(),
            };
            slp.write_expansion(&mut cmp).map_err(read_failure)?;
            let mut rest = [0u8; 1];
            let extra = cmp.mismatch.is_none()
                && read_full(&mut cmp.expected, &mut rest).map_err(read_failure)? > 0;
            if let Some(at) = cmp.mismatch {
                return Err(Failure::Mismatch(format!("contents differ at byte {at}")));
            }
            if extra {
                return Err(Failure::Mismatch(format!(
                    "original is longer than {} bytes",
                    cmp.offset
                )));
            }
        }
        InputKind::Tokens => {
            let mut text = String::new();
            BufReader::new(file)
                .read_to_string(&mut text)
                .map_err(read_failure)?;
            let expected = parse_tokens(&text)
                .map_err(|e| Failure::Input(format!("{}: {e}", original.display())))?;
            let terminals = slp.terminals();
            let mut produced = slp
                .expand_start()
                .map_err(|e| Failure::Overflow(e.to_string()))?
                .map(|t| terminals[t as usize]);
            for (i, &want) in expected.iter().enumerate() {
                if produced.next() != Some(want) {
                    return Err(Failure::Mismatch(format!("tokens differ at index {i}")));
                }
            }
            if produced.next().is_some() {
                return Err(Failure::Mismatch(format!(
                    "original is shorter than the expansion ({} tokens)",
                    expected.len()
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Compress {
            input,
            output,
            mode,
            kind,
            trace,
        } => cmd_compress(input, output, *mode, *kind, trace.as_deref()),
        Command::Decompress { input, output } => cmd_decompress(input, output),
        Command::Stats { input, trace } => cmd_stats(input, trace.as_deref()),
        Command::Verify { grammar, original } => cmd_verify(grammar, original),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("recompress: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
