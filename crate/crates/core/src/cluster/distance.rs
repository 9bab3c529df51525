use crate::symbolic::{mindist, IsaxWord};

/// A symmetric dissimilarity over `len()` items, evaluated on demand.
pub trait Distances {
    fn len(&self) -> usize;
    fn distance(&self, i: usize, j: usize) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Euclidean distance between numeric embeddings.
pub struct Euclidean<'a>(pub &'a [Vec<f64>]);

impl Distances for Euclidean<'_> {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn distance(&self, i: usize, j: usize) -> f64 {
        euclidean(&self.0[i], &self.0[j])
    }
}

/// Symbolic lower-bound distance between words of one word size.
pub struct WordMindist<'a> {
    pub words: &'a [IsaxWord],
    pub original_length: usize,
}

impl Distances for WordMindist<'_> {
    fn len(&self) -> usize {
        self.words.len()
    }

    fn distance(&self, i: usize, j: usize) -> f64 {
        mindist(&self.words[i], &self.words[j], self.original_length)
            .expect("words share a word size")
    }
}

/// The items of `inner` selected by `indices`, renumbered from zero.
pub struct Subset<'a, D: ?Sized> {
    pub inner: &'a D,
    pub indices: &'a [usize],
}

impl<D: Distances + ?Sized> Distances for Subset<'_, D> {
    fn len(&self) -> usize {
        self.indices.len()
    }

    fn distance(&self, i: usize, j: usize) -> f64 {
        self.inner.distance(self.indices[i], self.indices[j])
    }
}

/// Per-channel symbolic lower bounds combined as the root of their summed
/// squares, which still lower-bounds the Euclidean distance between the
/// concatenated channels. `channels[c][i]` is item `i`'s word on channel `c`.
pub struct MultiWordMindist<'a> {
    pub channels: &'a [Vec<IsaxWord>],
    pub original_length: usize,
}

impl Distances for MultiWordMindist<'_> {
    fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    fn distance(&self, i: usize, j: usize) -> f64 {
        self.channels
            .iter()
            .map(|words| {
                let d = mindist(&words[i], &words[j], self.original_length)
                    .expect("words share a word size");
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}
