//! Architecture strings such as `24-C3+MP2+32-C3+MP2+FC256+Softmax`.
//!
//! ```text
//! arch   := item (sep item)*
//! sep    := "+" | "-"
//! item   := INT "-C" INT          convolution: filters, kernel size
//!         | INT "-FC"             dense layer written units-first
//!         | "FC" INT              dense layer
//!         | "MP" INT              max pooling window
//!         | "Softmax"             classifier head, must be last
//!         | INT ("x" | "×") "(" arch ")"   repetition, expanded in place
//! ```
//!
//! A `-` directly after an integer binds to a following `C`/`FC`
//! (longest match); everywhere else it is a separator. Whitespace is
//! ignored. [`render`] emits the canonical `+`-separated form.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv { filters: usize, kernel: usize },
    MaxPool { window: usize },
    Dense { units: usize },
    Softmax,
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Conv { filters, kernel } => write!(f, "{filters}-C{kernel}"),
            LayerSpec::MaxPool { window } => write!(f, "MP{window}"),
            LayerSpec::Dense { units } => write!(f, "FC{units}"),
            LayerSpec::Softmax => f.write_str("Softmax"),
        }
    }
}

pub fn render(layers: &[LayerSpec]) -> String {
    layers.iter().map(|l| l.to_string()).collect::<Vec<_>>().join("+")
}

/// Parses and expands an architecture string. The result must end in
/// exactly one `Softmax`.
pub fn parse_architecture(text: &str) -> Result<Vec<LayerSpec>> {
    let mut p = Parser {
        chars: text.char_indices().filter(|(_, c)| !c.is_whitespace()).collect(),
        pos: 0,
        end: text.len(),
        softmax_offsets: Vec::new(),
    };
    if p.chars.is_empty() {
        return Err(p.error_at(0, "empty architecture string"));
    }
    let layers = p.sequence(0)?;
    if let Some(off) = p.peek_offset() {
        return Err(p.error_at(off, "unexpected character"));
    }
    match layers.iter().position(|l| *l == LayerSpec::Softmax) {
        None => Err(p.error_at(p.end, "missing Softmax head")),
        Some(i) if i + 1 != layers.len() => Err(p.error_at(p.softmax_offsets[0], "Softmax must be the last layer")),
        Some(_) => Ok(layers),
    }
}

struct Parser {
    /// Non-whitespace characters with their byte offsets.
    chars: Vec<(usize, char)>,
    pos: usize,
    end: usize,
    softmax_offsets: Vec<usize>,
}

impl Parser {
    fn error_at(&self, offset: usize, message: &str) -> Error {
        Error::Parse {
            offset,
            message: message.to_string(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn peek_at(&self, k: usize) -> Option<char> {
        self.chars.get(self.pos + k).map(|&(_, c)| c)
    }

    fn peek_offset(&self) -> Option<usize> {
        self.chars.get(self.pos).map(|&(o, _)| o)
    }

    fn offset(&self) -> usize {
        self.peek_offset().unwrap_or(self.end)
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        let n = kw.chars().count();
        let matches = kw
            .chars()
            .enumerate()
            .all(|(i, k)| self.peek_at(i).is_some_and(|c| c.eq_ignore_ascii_case(&k)));
        if matches {
            self.pos += n;
        }
        matches
    }

    /// Positive integer; returns the value and its offset.
    fn number(&mut self, what: &str) -> Result<(usize, usize)> {
        let off = self.offset();
        let mut v: usize = 0;
        let mut digits = 0;
        while let Some(c) = self.peek().filter(char::is_ascii_digit) {
            v = v
                .checked_mul(10)
                .and_then(|v| v.checked_add(c.to_digit(10).unwrap() as usize))
                .ok_or_else(|| self.error_at(off, "number too large"))?;
            digits += 1;
            self.pos += 1;
        }
        if digits == 0 {
            return Err(self.error_at(off, &format!("expected {what}")));
        }
        if v == 0 {
            return Err(self.error_at(off, &format!("{what} must be positive")));
        }
        Ok((v, off))
    }

    fn sequence(&mut self, depth: usize) -> Result<Vec<LayerSpec>> {
        let mut out = Vec::new();
        loop {
            out.extend(self.item(depth)?);
            match self.peek() {
                Some('+') | Some('-') => {
                    self.pos += 1;
                }
                _ => return Ok(out),
            }
        }
    }

    fn item(&mut self, depth: usize) -> Result<Vec<LayerSpec>> {
        let off = self.offset();
        match self.peek() {
            None => Err(self.error_at(off, "expected a layer")),
            Some(c) if c.is_ascii_digit() => self.numbered_item(depth),
            Some(_) => {
                if self.eat_keyword("Softmax") {
                    self.softmax_offsets.push(off);
                    Ok(vec![LayerSpec::Softmax])
                } else if self.eat_keyword("MP") {
                    let (window, _) = self.number("pool window")?;
                    Ok(vec![LayerSpec::MaxPool { window }])
                } else if self.eat_keyword("FC") {
                    let (units, _) = self.number("unit count")?;
                    Ok(vec![LayerSpec::Dense { units }])
                } else {
                    Err(self.error_at(off, "unknown layer token"))
                }
            }
        }
    }

    fn numbered_item(&mut self, depth: usize) -> Result<Vec<LayerSpec>> {
        let off = self.offset();
        let digits_start = self.pos;
        // read raw digits first so that a zero count gets the right message
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        let after = self.pos;
        self.pos = digits_start;
        match (self.chars.get(after).map(|c| c.1), self.chars.get(after + 1).map(|c| c.1)) {
            (Some('-'), Some('C' | 'c')) => {
                let (filters, _) = self.number("filter count")?;
                self.pos += 2;
                let (kernel, _) = self.number("kernel size")?;
                Ok(vec![LayerSpec::Conv { filters, kernel }])
            }
            (Some('-'), Some('F' | 'f')) if matches!(self.chars.get(after + 2).map(|c| c.1), Some('C' | 'c')) => {
                let (units, _) = self.number("unit count")?;
                self.pos += 3;
                Ok(vec![LayerSpec::Dense { units }])
            }
            (Some('x' | 'X' | '×'), Some('(')) => {
                let (count, _) = self.number("repetition count")?;
                self.pos += 2;
                let body = self.sequence(depth + 1)?;
                if self.peek() != Some(')') {
                    return Err(self.error_at(self.offset(), "expected ')'"));
                }
                self.pos += 1;
                let mut out = Vec::with_capacity(body.len() * count);
                for _ in 0..count {
                    out.extend_from_slice(&body);
                }
                Ok(out)
            }
            _ => Err(self.error_at(off, "a number must start a conv (N-Ck), dense (N-FC) or repetition (Nx(...))")),
        }
    }
}
