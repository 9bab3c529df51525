use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::breakpoints::{breakpoints, MAX_CARDINALITY};
use super::paa::PaaVector;
use crate::error::{Error, Result};

pub const DEFAULT_EDGE_MARGIN: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Symbol {
    pub value: u32,
    pub cardinality: u32,
}

impl Symbol {
    /// The symbol's value when viewed at the coarser `cardinality`.
    fn at(self, cardinality: u32) -> u32 {
        debug_assert!(cardinality <= self.cardinality);
        self.value >> (self.cardinality / cardinality).trailing_zeros()
    }
}

/// One symbol per PAA segment, each with its own power-of-two cardinality.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct IsaxWord {
    symbols: Vec<Symbol>,
}

impl IsaxWord {
    pub fn new(symbols: Vec<Symbol>) -> Result<Self> {
        for s in &symbols {
            breakpoints(s.cardinality)?;
            if s.value >= s.cardinality {
                return Err(Error::invalid(format!(
                    "symbol {} out of range for cardinality {}",
                    s.value, s.cardinality
                )));
            }
        }
        Ok(Self { symbols })
    }

    /// Discretizes each coefficient at its own cardinality.
    pub fn from_paa(paa: &PaaVector, cardinalities: &[u32]) -> Result<Self> {
        if cardinalities.len() != paa.word_size() {
            return Err(Error::invalid("cardinality list does not match word size"));
        }
        let symbols = paa
            .coefficients
            .iter()
            .zip(cardinalities)
            .map(|(c, card)| {
                Ok(Symbol {
                    value: breakpoints(*card)?.symbol(*c),
                    cardinality: *card,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { symbols })
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn word_size(&self) -> usize {
        self.symbols.len()
    }

    pub fn values(&self) -> Vec<u32> {
        self.symbols.iter().map(|s| s.value).collect()
    }

    pub fn cardinalities(&self) -> Vec<u32> {
        self.symbols.iter().map(|s| s.cardinality).collect()
    }

    /// Doubles the cardinality at `position`, taking the refined symbol from
    /// the PAA coefficient it was derived from.
    pub fn promote(&self, position: usize, coefficient: f64) -> Result<Self> {
        let (lower, upper) = self.promote_both(position)?;
        let card = lower.symbols[position].cardinality;
        let value = breakpoints(card)?.symbol(coefficient);
        if value == lower.symbols[position].value {
            Ok(lower)
        } else if value == upper.symbols[position].value {
            Ok(upper)
        } else {
            Err(Error::invalid(format!(
                "coefficient {coefficient} lies outside symbol {} at position {position}",
                self.symbols[position].value
            )))
        }
    }

    /// The two refinements of `position` at double cardinality.
    pub fn promote_both(&self, position: usize) -> Result<(Self, Self)> {
        let sym = *self
            .symbols
            .get(position)
            .ok_or_else(|| Error::invalid(format!("position {position} out of range")))?;
        if sym.cardinality >= MAX_CARDINALITY {
            return Err(Error::invalid(format!(
                "position {position} already at maximum cardinality"
            )));
        }
        let mut lower = self.clone();
        lower.symbols[position] = Symbol {
            value: sym.value << 1,
            cardinality: sym.cardinality << 1,
        };
        let mut upper = lower.clone();
        upper.symbols[position].value |= 1;
        Ok((lower, upper))
    }

    /// True when `fine` lies inside the region described by `self`.
    pub fn contains(&self, fine: &IsaxWord) -> bool {
        self.word_size() == fine.word_size()
            && self
                .symbols
                .iter()
                .zip(&fine.symbols)
                .all(|(c, f)| f.cardinality >= c.cardinality && f.at(c.cardinality) == c.value)
    }
}

impl fmt::Display for IsaxWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.symbols.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{}/{}", s.value, s.cardinality)?;
        }
        Ok(())
    }
}

impl FromStr for IsaxWord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() {
            return Self::new(Vec::new());
        }
        let symbols = s
            .split('.')
            .map(|part| {
                let (v, c) = part
                    .split_once('/')
                    .ok_or_else(|| Error::invalid(format!("bad symbol {part:?}")))?;
                let parse = |x: &str| {
                    x.parse::<u32>()
                        .map_err(|_| Error::invalid(format!("bad symbol {part:?}")))
                };
                Ok(Symbol {
                    value: parse(v)?,
                    cardinality: parse(c)?,
                })
            })
            .collect::<Result<_>>()?;
        Self::new(symbols)
    }
}

impl TryFrom<String> for IsaxWord {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<IsaxWord> for String {
    fn from(w: IsaxWord) -> String {
        w.to_string()
    }
}

/// SAX word with every position at `cardinality`.
pub fn sax(paa: &PaaVector, cardinality: u32) -> Result<IsaxWord> {
    IsaxWord::from_paa(paa, &vec![cardinality; paa.word_size()])
}

/// Lower bound on the Euclidean distance between the z-normalized series
/// behind two words. Each position is compared at the coarser of the two
/// cardinalities; cells that touch or coincide contribute nothing.
pub fn mindist(a: &IsaxWord, b: &IsaxWord, original_length: usize) -> Result<f64> {
    if a.word_size() != b.word_size() {
        return Err(Error::invalid(format!(
            "word sizes differ: {} vs {}",
            a.word_size(),
            b.word_size()
        )));
    }
    if original_length == 0 || a.word_size() == 0 {
        return Err(Error::invalid(
            "mindist needs a positive length and word size",
        ));
    }
    let mut total = 0.0;
    for (sa, sb) in a.symbols.iter().zip(&b.symbols) {
        let card = sa.cardinality.min(sb.cardinality);
        let (va, vb) = (sa.at(card), sb.at(card));
        let (lo, hi) = (va.min(vb), va.max(vb));
        if hi - lo > 1 {
            let t = &breakpoints(card)?.thresholds;
            let gap = t[hi as usize - 1] - t[lo as usize];
            total += gap * gap;
        }
    }
    Ok((original_length as f64 / a.word_size() as f64).sqrt() * total.sqrt())
}

/// Numeric embedding of a word: the centre of each symbol's cell. Outer
/// cells have no finite centre, so they sit `edge_margin` beyond their inner
/// edge.
pub fn word_midpoints(word: &IsaxWord, edge_margin: f64) -> Vec<f64> {
    word.symbols
        .iter()
        .map(|s| {
            let bp = breakpoints(s.cardinality).expect("validated on construction");
            match bp.cell(s.value) {
                (lo, hi) if lo.is_infinite() => hi - edge_margin,
                (lo, hi) if hi.is_infinite() => lo + edge_margin,
                (lo, hi) => 0.5 * (lo + hi),
            }
        })
        .collect()
}
