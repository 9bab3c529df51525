//! iSAX tree. The root dispatches on the base-cardinality word; below it
//! every overflowing leaf splits by doubling the cardinality of one position,
//! chosen round-robin across positions that can still be promoted.
//!
//! Node "level" counts promotions above the base cardinality, so the
//! root's children and the root itself are level 0.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::breakpoints::breakpoints;
use super::paa::PaaVector;
use super::word::{IsaxWord, Symbol};
use crate::error::{Error, Result};
use crate::ingest::WindowId;

pub const INDEX_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"CIPHIDX\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IndexParams {
    pub word_size: usize,
    pub base_cardinality: u32,
    pub max_cardinality: u32,
    pub leaf_capacity: usize,
}

impl Default for IndexParams {
    fn default() -> Self {
        Self {
            word_size: 8,
            base_cardinality: 4,
            max_cardinality: 64,
            leaf_capacity: 128,
        }
    }
}

impl IndexParams {
    pub fn validate(&self) -> Result<()> {
        if self.word_size == 0 {
            return Err(Error::config("symbolic.word_size must be >= 1"));
        }
        breakpoints(self.base_cardinality)?;
        breakpoints(self.max_cardinality)?;
        if self.max_cardinality < self.base_cardinality {
            return Err(Error::config(
                "symbolic.max_cardinality must be >= base_cardinality",
            ));
        }
        if self.leaf_capacity == 0 {
            return Err(Error::config("symbolic.leaf_capacity must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub id: WindowId,
    pub paa: PaaVector,
}

#[derive(Debug, Clone)]
enum Kind {
    Leaf(Vec<Entry>),
    Internal {
        /// `None` at the root, which splits on the whole base word.
        split_position: Option<usize>,
        children: BTreeMap<Vec<u32>, usize>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    prefix: Option<IsaxWord>,
    /// Position to try first when this node splits.
    cursor: usize,
    kind: Kind,
}

/// Read-only view of a leaf, for inspection and tests.
pub struct LeafView<'a> {
    pub prefix: Option<&'a IsaxWord>,
    pub entries: &'a [Entry],
    /// Ancestors' prefixes from the top of the tree down, this leaf's last.
    pub path: Vec<&'a IsaxWord>,
}

#[derive(Debug, Clone)]
pub struct IsaxIndex {
    params: IndexParams,
    nodes: Vec<Node>,
    ids: HashSet<WindowId>,
}

impl IsaxIndex {
    pub fn new(params: IndexParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            nodes: vec![Node {
                prefix: None,
                cursor: 0,
                kind: Kind::Leaf(Vec::new()),
            }],
            ids: HashSet::new(),
        })
    }

    pub fn params(&self) -> &IndexParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// True when the root is still a single leaf.
    pub fn root_is_leaf(&self) -> bool {
        matches!(self.nodes[0].kind, Kind::Leaf(_))
    }

    pub fn root_children(&self) -> usize {
        match &self.nodes[0].kind {
            Kind::Leaf(_) => 0,
            Kind::Internal { children, .. } => children.len(),
        }
    }

    pub fn base_word(&self, paa: &PaaVector) -> Result<IsaxWord> {
        IsaxWord::from_paa(
            paa,
            &vec![self.params.base_cardinality; self.params.word_size],
        )
    }

    fn child_key(&self, node: &Node, paa: &PaaVector) -> Result<Vec<u32>> {
        match (&node.prefix, &node.kind) {
            (
                _,
                Kind::Internal {
                    split_position: Some(p),
                    ..
                },
            ) => {
                let prefix = node.prefix.as_ref().expect("non-root internal has prefix");
                let mut key = prefix.values();
                let card = prefix.symbols()[*p].cardinality * 2;
                key[*p] = breakpoints(card)?.symbol(paa.coefficients[*p]);
                Ok(key)
            }
            _ => Ok(self.base_word(paa)?.values()),
        }
    }

    fn child_prefix(&self, node: &Node, key: &[u32]) -> Result<IsaxWord> {
        let cards = match (&node.prefix, &node.kind) {
            (
                Some(prefix),
                Kind::Internal {
                    split_position: Some(p),
                    ..
                },
            ) => {
                let mut c = prefix.cardinalities();
                c[*p] *= 2;
                c
            }
            _ => vec![self.params.base_cardinality; self.params.word_size],
        };
        IsaxWord::new(
            key.iter()
                .zip(cards)
                .map(|(&value, cardinality)| Symbol { value, cardinality })
                .collect(),
        )
    }

    pub fn insert(&mut self, id: WindowId, paa: PaaVector) -> Result<()> {
        if paa.word_size() != self.params.word_size {
            return Err(Error::invalid(format!(
                "PAA has {} coefficients, index word size is {}",
                paa.word_size(),
                self.params.word_size
            )));
        }
        if paa.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("PAA coefficients must be finite"));
        }
        if self.ids.contains(&id) {
            return Err(Error::DuplicateId(id.0));
        }
        let mut at = 0;
        loop {
            if let Kind::Leaf(entries) = &mut self.nodes[at].kind {
                entries.push(Entry { id, paa });
                let over = entries.len() > self.params.leaf_capacity;
                self.ids.insert(id);
                if over {
                    self.split(at)?;
                }
                return Ok(());
            }
            let key = self.child_key(&self.nodes[at], &paa)?;
            let Kind::Internal { children, .. } = &self.nodes[at].kind else {
                unreachable!()
            };
            at = match children.get(&key) {
                Some(&child) => child,
                None => self.add_child(at, key)?,
            };
        }
    }

    fn add_child(&mut self, parent: usize, key: Vec<u32>) -> Result<usize> {
        let prefix = self.child_prefix(&self.nodes[parent], &key)?;
        let cursor = match &self.nodes[parent].kind {
            Kind::Internal {
                split_position: Some(p),
                ..
            } => (p + 1) % self.params.word_size,
            _ => 0,
        };
        let id = self.nodes.len();
        self.nodes.push(Node {
            prefix: Some(prefix),
            cursor,
            kind: Kind::Leaf(Vec::new()),
        });
        if let Kind::Internal { children, .. } = &mut self.nodes[parent].kind {
            children.insert(key, id);
        }
        Ok(id)
    }

    fn choose_split(&self, node: &Node) -> Option<usize> {
        let prefix = node.prefix.as_ref()?;
        let w = self.params.word_size;
        (0..w)
            .map(|k| (node.cursor + k) % w)
            .find(|&p| prefix.symbols()[p].cardinality < self.params.max_cardinality)
    }

    fn split(&mut self, start: usize) -> Result<()> {
        let mut pending = vec![start];
        while let Some(at) = pending.pop() {
            let split_position = if at == 0 {
                None
            } else {
                match self.choose_split(&self.nodes[at]) {
                    Some(p) => Some(p),
                    // every position at max cardinality: the leaf stays oversized
                    None => continue,
                }
            };
            let kind = std::mem::replace(
                &mut self.nodes[at].kind,
                Kind::Internal {
                    split_position,
                    children: BTreeMap::new(),
                },
            );
            let Kind::Leaf(entries) = kind else {
                unreachable!("only leaves split")
            };
            if let Some(p) = split_position {
                // both halves exist even if one stays empty
                let prefix = self.nodes[at].prefix.clone().expect("prefix");
                let (lo, hi) = prefix.promote_both(p)?;
                self.add_child(at, lo.values())?;
                self.add_child(at, hi.values())?;
            }
            for entry in entries {
                let key = self.child_key(&self.nodes[at], &entry.paa)?;
                let existing = match &self.nodes[at].kind {
                    Kind::Internal { children, .. } => children.get(&key).copied(),
                    Kind::Leaf(_) => unreachable!(),
                };
                let child = match existing {
                    Some(c) => c,
                    None => self.add_child(at, key)?,
                };
                if let Kind::Leaf(v) = &mut self.nodes[child].kind {
                    v.push(entry);
                }
            }
            if let Kind::Internal { children, .. } = &self.nodes[at].kind {
                for &child in children.values().rev() {
                    if let Kind::Leaf(v) = &self.nodes[child].kind {
                        if v.len() > self.params.leaf_capacity {
                            pending.push(child);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// All leaves in pre-order, with the prefixes along their path.
    pub fn leaves(&self) -> Vec<LeafView<'_>> {
        let mut out = Vec::new();
        let mut stack: Vec<(usize, Vec<&IsaxWord>)> = vec![(0, Vec::new())];
        while let Some((at, path)) = stack.pop() {
            let node = &self.nodes[at];
            let mut path = path;
            if let Some(p) = &node.prefix {
                path.push(p);
            }
            match &node.kind {
                Kind::Leaf(entries) => out.push(LeafView {
                    prefix: node.prefix.as_ref(),
                    entries,
                    path,
                }),
                Kind::Internal { children, .. } => {
                    for &child in children.values().rev() {
                        stack.push((child, path.clone()));
                    }
                }
            }
        }
        out
    }

    /// Promotions a word carries beyond the base cardinality.
    pub fn level_of(&self, word: &IsaxWord) -> usize {
        let base = self.params.base_cardinality.trailing_zeros();
        word.symbols()
            .iter()
            .map(|s| (s.cardinality.trailing_zeros() - base) as usize)
            .sum()
    }

    /// Every entry's word as seen by the node at `level` on its root path;
    /// entries whose leaf is shallower take the leaf's word. Sorted by id.
    pub fn level_words(&self, level: usize) -> Result<Vec<(WindowId, IsaxWord)>> {
        let mut out = Vec::with_capacity(self.len());
        for leaf in self.leaves() {
            let chosen = leaf
                .path
                .iter()
                .rev()
                .find(|w| self.level_of(w) <= level)
                .copied();
            for e in leaf.entries {
                let word = match chosen {
                    Some(w) => w.clone(),
                    None => self.base_word(&e.paa)?,
                };
                out.push((e.id, word));
            }
        }
        out.sort_by_key(|(id, _)| *id);
        Ok(out)
    }

    pub fn entries(&self) -> Vec<&Entry> {
        let mut out: Vec<&Entry> = self.leaves().into_iter().flat_map(|l| l.entries).collect();
        out.sort_by_key(|e| e.id);
        out
    }

    /// Writes the versioned flat-file form (see `docs/formats/index.md`).
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(INDEX_FORMAT_VERSION)?;
        w.write_u32::<LittleEndian>(self.params.word_size as u32)?;
        w.write_u32::<LittleEndian>(self.params.base_cardinality)?;
        w.write_u32::<LittleEndian>(self.params.max_cardinality)?;
        w.write_u32::<LittleEndian>(self.params.leaf_capacity as u32)?;
        w.write_u64::<LittleEndian>(self.nodes.len() as u64)?;
        self.write_node(&mut w, 0)?;
        Ok(())
    }

    fn write_node<W: Write>(&self, w: &mut W, at: usize) -> Result<()> {
        let node = &self.nodes[at];
        let tag = match node.kind {
            Kind::Leaf(_) => 0u8,
            Kind::Internal { .. } => 1u8,
        };
        w.write_u8(tag)?;
        match &node.prefix {
            None => w.write_u8(0)?,
            Some(p) => {
                w.write_u8(1)?;
                for s in p.symbols() {
                    w.write_u32::<LittleEndian>(s.value)?;
                    w.write_u32::<LittleEndian>(s.cardinality)?;
                }
            }
        }
        w.write_u32::<LittleEndian>(node.cursor as u32)?;
        match &node.kind {
            Kind::Leaf(entries) => {
                w.write_u32::<LittleEndian>(entries.len() as u32)?;
                for e in entries {
                    w.write_u64::<LittleEndian>(e.id.0)?;
                    w.write_u64::<LittleEndian>(e.paa.source_length as u64)?;
                    for c in &e.paa.coefficients {
                        w.write_f64::<LittleEndian>(*c)?;
                    }
                }
            }
            Kind::Internal {
                split_position,
                children,
            } => {
                w.write_u32::<LittleEndian>(split_position.map_or(u32::MAX, |p| p as u32))?;
                w.write_u32::<LittleEndian>(children.len() as u32)?;
                for &child in children.values() {
                    self.write_node(w, child)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let bad = |m: &str| Error::invalid(format!("index file: {m}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != INDEX_FORMAT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let params = IndexParams {
            word_size: r.read_u32::<LittleEndian>()? as usize,
            base_cardinality: r.read_u32::<LittleEndian>()?,
            max_cardinality: r.read_u32::<LittleEndian>()?,
            leaf_capacity: r.read_u32::<LittleEndian>()? as usize,
        };
        params.validate()?;
        let count = r.read_u64::<LittleEndian>()? as usize;
        let mut index = Self {
            params,
            nodes: Vec::with_capacity(count.min(1 << 20)),
            ids: HashSet::new(),
        };
        index.read_node(&mut r)?;
        if index.nodes.len() != count {
            return Err(bad("node count mismatch"));
        }
        Ok(index)
    }

    fn read_node<R: Read>(&mut self, r: &mut R) -> Result<usize> {
        let bad = |m: &str| Error::invalid(format!("index file: {m}"));
        let w = self.params.word_size;
        let tag = r.read_u8()?;
        let prefix = match r.read_u8()? {
            0 => None,
            1 => {
                let mut symbols = Vec::with_capacity(w);
                for _ in 0..w {
                    symbols.push(Symbol {
                        value: r.read_u32::<LittleEndian>()?,
                        cardinality: r.read_u32::<LittleEndian>()?,
                    });
                }
                Some(IsaxWord::new(symbols)?)
            }
            _ => return Err(bad("bad prefix flag")),
        };
        let cursor = r.read_u32::<LittleEndian>()? as usize;
        let at = self.nodes.len();
        self.nodes.push(Node {
            prefix,
            cursor,
            kind: Kind::Leaf(Vec::new()),
        });
        match tag {
            0 => {
                let n = r.read_u32::<LittleEndian>()? as usize;
                let mut entries = Vec::with_capacity(n.min(1 << 16));
                for _ in 0..n {
                    let id = WindowId(r.read_u64::<LittleEndian>()?);
                    let source_length = r.read_u64::<LittleEndian>()? as usize;
                    let mut coefficients = Vec::with_capacity(w);
                    for _ in 0..w {
                        coefficients.push(r.read_f64::<LittleEndian>()?);
                    }
                    if !self.ids.insert(id) {
                        return Err(Error::DuplicateId(id.0));
                    }
                    entries.push(Entry {
                        id,
                        paa: PaaVector {
                            coefficients,
                            source_length,
                        },
                    });
                }
                self.nodes[at].kind = Kind::Leaf(entries);
            }
            1 => {
                let sp = r.read_u32::<LittleEndian>()?;
                let split_position = (sp != u32::MAX).then_some(sp as usize);
                let n = r.read_u32::<LittleEndian>()?;
                let mut children = BTreeMap::new();
                for _ in 0..n {
                    let child = self.read_node(r)?;
                    let key = self.nodes[child]
                        .prefix
                        .as_ref()
                        .ok_or_else(|| bad("child without prefix"))?
                        .values();
                    children.insert(key, child);
                }
                self.nodes[at].kind = Kind::Internal {
                    split_position,
                    children,
                };
            }
            _ => return Err(bad("bad node tag")),
        }
        Ok(at)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(cap: usize) -> IndexParams {
        IndexParams {
            word_size: 2,
            base_cardinality: 2,
            max_cardinality: 8,
            leaf_capacity: cap,
        }
    }

    fn pv(c: &[f64]) -> PaaVector {
        PaaVector {
            coefficients: c.to_vec(),
            source_length: 16,
        }
    }

    /// Reachability by containment: every entry's word at the leaf's
    /// cardinalities sits inside every prefix on its path.
    fn assert_reachable(index: &IsaxIndex) {
        for leaf in index.leaves() {
            for e in leaf.entries {
                for p in &leaf.path {
                    let w = IsaxWord::from_paa(&e.paa, &p.cardinalities()).unwrap();
                    assert!(p.contains(&w), "{} not under {p}", e.id);
                }
            }
        }
    }

    #[test]
    fn first_insert_is_a_root_leaf() {
        let mut idx = IsaxIndex::new(params(2)).unwrap();
        idx.insert(WindowId(1), pv(&[0.1, 0.2])).unwrap();
        assert!(idx.root_is_leaf());
        assert_eq!(idx.len(), 1);
        assert!(matches!(
            idx.insert(WindowId(1), pv(&[0.1, 0.2])),
            Err(Error::DuplicateId(1))
        ));
        assert!(idx.insert(WindowId(2), pv(&[0.1])).is_err());
    }

    #[test]
    fn overflow_splits_root_on_base_words() {
        let mut idx = IsaxIndex::new(params(2)).unwrap();
        idx.insert(WindowId(0), pv(&[-1.0, 0.5])).unwrap();
        idx.insert(WindowId(1), pv(&[1.0, 0.5])).unwrap();
        idx.insert(WindowId(2), pv(&[-0.5, 0.5])).unwrap();
        assert!(!idx.root_is_leaf());
        assert!(idx.root_children() >= 2);
        assert_reachable(&idx);
    }

    /// Hand simulation with leaf_capacity 2, word size 2, base cardinality 2,
    /// max cardinality 8. Thresholds: card 4 ≈ [-0.674, 0, 0.674], card 8 ≈
    /// [-1.150, -0.674, -0.319, 0, 0.319, 0.674, 1.150].
    ///
    /// Entries 0..=3 and 5 share base word 1/2.1/2; entry 4 is 0/2.0/2.
    /// - inserting 2 overflows the root, which splits on base words; the
    ///   1/2.1/2 child (3 entries) promotes position 0: 0.3 -> 2/4, 0.9 and
    ///   1.2 -> 3/4.
    /// - inserting 3 overflows 3/4.1/2, which promotes position 1: 0.2 ->
    ///   2/4, 0.8 and 1.1 -> 3/4.
    /// - inserting 5 overflows 3/4.3/4; position 0 goes to 7/8 for 1.2, 1.5
    ///   and 1.3, that child overflows and promotes position 1 to 6/8 for all
    ///   three, and the result is at max cardinality everywhere.
    #[test]
    fn hand_simulated_levels() {
        let mut idx = IsaxIndex::new(params(2)).unwrap();
        let pts = [
            (0, [0.3, 0.5]),
            (1, [0.9, 0.2]),
            (2, [1.2, 0.8]),
            (3, [1.5, 1.1]),
            (4, [-0.5, -0.5]),
            (5, [1.3, 0.9]),
        ];
        for (id, c) in pts {
            idx.insert(WindowId(id), pv(&c)).unwrap();
        }
        let words = |level| -> Vec<String> {
            idx.level_words(level)
                .unwrap()
                .iter()
                .map(|(_, w)| w.to_string())
                .collect()
        };
        let base = "1/2.1/2";
        assert_eq!(words(0), vec![base, base, base, base, "0/2.0/2", base]);
        assert_eq!(
            words(1),
            vec!["2/4.1/2", "3/4.1/2", "3/4.1/2", "3/4.1/2", "0/2.0/2", "3/4.1/2"]
        );
        assert_eq!(
            words(2),
            vec!["2/4.1/2", "3/4.2/4", "3/4.3/4", "3/4.3/4", "0/2.0/2", "3/4.3/4"]
        );
        assert_eq!(
            words(3),
            vec!["2/4.1/2", "3/4.2/4", "7/8.3/4", "7/8.3/4", "0/2.0/2", "7/8.3/4"]
        );
        assert_eq!(
            words(4),
            vec!["2/4.1/2", "3/4.2/4", "7/8.6/8", "7/8.6/8", "0/2.0/2", "7/8.6/8"]
        );
        assert_eq!(words(4), words(9));
        assert_reachable(&idx);
        for leaf in idx.leaves() {
            let full = leaf
                .prefix
                .is_some_and(|p| p.cardinalities().iter().all(|&c| c == 8));
            assert!(leaf.entries.len() <= 2 || full);
        }
    }

    #[test]
    fn unsplittable_leaf_may_overflow() {
        let mut idx = IsaxIndex::new(IndexParams {
            word_size: 1,
            base_cardinality: 2,
            max_cardinality: 4,
            leaf_capacity: 1,
        })
        .unwrap();
        for i in 0..5 {
            idx.insert(WindowId(i), pv(&[1.0])).unwrap();
        }
        assert_eq!(idx.len(), 5);
        let big = idx
            .leaves()
            .into_iter()
            .find(|l| l.entries.len() == 5)
            .unwrap();
        assert_eq!(big.prefix.unwrap().to_string(), "3/4");
    }

    #[test]
    fn unsplit_index_levels_match_base() {
        let mut idx = IsaxIndex::new(params(100)).unwrap();
        for i in 0..10 {
            idx.insert(WindowId(i), pv(&[i as f64 / 5.0 - 1.0, 0.3]))
                .unwrap();
        }
        assert_eq!(idx.level_words(0).unwrap(), idx.level_words(5).unwrap());
    }

    #[test]
    fn persistence_round_trip() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut idx = IsaxIndex::new(IndexParams {
            word_size: 4,
            leaf_capacity: 3,
            ..IndexParams::default()
        })
        .unwrap();
        for i in 0..200 {
            let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            idx.insert(WindowId(i), pv(&c)).unwrap();
        }
        let mut buf = Vec::new();
        idx.write_to(&mut buf).unwrap();
        let back = IsaxIndex::read_from(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 200);
        assert_eq!(back.node_count(), idx.node_count());
        for level in 0..4 {
            assert_eq!(
                back.level_words(level).unwrap(),
                idx.level_words(level).unwrap()
            );
        }
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(buf, again);
        assert!(IsaxIndex::read_from(&buf[..10]).is_err());
        let mut corrupt = buf.clone();
        corrupt[0] = b'X';
        assert!(IsaxIndex::read_from(corrupt.as_slice()).is_err());
    }
}
