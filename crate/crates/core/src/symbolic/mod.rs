//! Symbolic compression of windows: PAA, SAX with Gaussian breakpoints,
//! variable-cardinality iSAX words and the index tree built over them.

mod breakpoints;
mod index;
mod paa;
mod word;

pub use breakpoints::{breakpoints, Breakpoints, MAX_CARDINALITY};
pub use index::{Entry, IndexParams, IsaxIndex, LeafView, INDEX_FORMAT_VERSION};
pub use paa::{paa, PaaVector};
pub use word::{mindist, sax, word_midpoints, IsaxWord, Symbol, DEFAULT_EDGE_MARGIN};
