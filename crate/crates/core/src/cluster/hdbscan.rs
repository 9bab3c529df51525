//! HDBSCAN over an arbitrary [`Distances`]: core distances, a Prim minimum
//! spanning tree of the mutual-reachability graph, the condensed tree and
//! excess-of-mass cluster selection.
//!
//! Edges of equal weight are merged together, so a level where several
//! components join at one distance becomes a single n-way split. The
//! hierarchy is then independent of which spanning tree ties produce.

use serde::{Deserialize, Serialize};

use super::distance::Distances;
use crate::error::{Error, Result};

/// Distances below this are treated as this value when converted to
/// lambda = 1 / distance, keeping stabilities finite for coincident points.
pub const DISTANCE_FLOOR: f64 = 1e-12;

pub fn lambda_of(distance: f64) -> f64 {
    1.0 / distance.max(DISTANCE_FLOOR)
}

/// Distance from each item to its `min_samples`-th nearest neighbour, the
/// item itself being the first.
pub fn core_distances<D: Distances + ?Sized>(points: &D, min_samples: usize) -> Result<Vec<f64>> {
    let n = points.len();
    if min_samples == 0 {
        return Err(Error::config("min_samples must be >= 1"));
    }
    if n < min_samples {
        return Err(Error::invalid(format!(
            "{n} points is fewer than min_samples = {min_samples}"
        )));
    }
    let mut row = vec![0.0; n];
    Ok((0..n)
        .map(|i| {
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = if i == j { 0.0 } else { points.distance(i, j) };
            }
            let (_, kth, _) = row.select_nth_unstable_by(min_samples - 1, f64::total_cmp);
            *kth
        })
        .collect())
}

pub fn mutual_reachability(distance: f64, core_a: f64, core_b: f64) -> f64 {
    distance.max(core_a).max(core_b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Minimum spanning tree of the complete mutual-reachability graph, built
/// with an O(n²) Prim pass from item 0. Ties go to the lowest index.
pub fn mst<D: Distances + ?Sized>(points: &D, core: &[f64]) -> Vec<Edge> {
    let n = points.len();
    if n < 2 {
        return Vec::new();
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        let mut next_w = f64::INFINITY;
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let w = mutual_reachability(points.distance(current, j), core[current], core[j]);
            if w < best[j] {
                best[j] = w;
                from[j] = current;
            }
            if best[j] < next_w || next == usize::MAX {
                next_w = best[j];
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push(Edge {
            a: from[next],
            b: next,
            weight: next_w,
        });
        current = next;
    }
    edges
}

/// One row of the condensed tree. Ids below `n_points` are points; the rest
/// are clusters, the root being `n_points`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondensedRecord {
    pub parent: usize,
    pub child: usize,
    pub lambda: f64,
    pub child_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensedTree {
    pub n_points: usize,
    pub min_cluster_size: usize,
    pub records: Vec<CondensedRecord>,
}

impl CondensedTree {
    pub fn root(&self) -> usize {
        self.n_points
    }

    pub fn cluster_count(&self) -> usize {
        1 + self
            .records
            .iter()
            .filter(|r| r.child >= self.n_points)
            .count()
    }

    pub fn is_cluster(&self, id: usize) -> bool {
        id >= self.n_points
    }
}

/// Single-linkage hierarchy node: either a point or a merge of several
/// children at one distance.
struct Merge {
    distance: f64,
    children: Vec<usize>,
    size: usize,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

/// Builds the tie-merged single-linkage hierarchy. Node ids below `n` are
/// points; returns the merge nodes (id `n + k`) and the root id.
fn linkage(edges: &[Edge], n: usize) -> (Vec<Merge>, usize) {
    let mut sorted: Vec<Edge> = edges.to_vec();
    sorted.sort_by(|x, y| {
        x.weight
            .total_cmp(&y.weight)
            .then(x.a.min(x.b).cmp(&y.a.min(y.b)))
            .then(x.a.max(x.b).cmp(&y.a.max(y.b)))
    });
    let mut uf = UnionFind::new(n);
    // hierarchy node currently representing each union-find root
    let mut node_of: Vec<usize> = (0..n).collect();
    let mut size_of = vec![1usize; n];
    let mut merges: Vec<Merge> = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let w = sorted[i].weight;
        let mut j = i;
        while j < sorted.len() && sorted[j].weight == w {
            j += 1;
        }
        // components touched by this weight level, keyed by their pre-level roots
        let mut before: Vec<(usize, usize)> = Vec::new();
        for e in &sorted[i..j] {
            for v in [e.a, e.b] {
                let r = uf.find(v);
                if !before.iter().any(|(root, _)| *root == r) {
                    before.push((r, node_of[r]));
                }
            }
        }
        let sizes: Vec<(usize, usize)> = before.iter().map(|(r, _)| (*r, size_of[*r])).collect();
        for e in &sorted[i..j] {
            let (ra, rb) = (uf.find(e.a), uf.find(e.b));
            if ra != rb {
                let (keep, drop) = if ra < rb { (ra, rb) } else { (rb, ra) };
                uf.parent[drop] = keep;
            }
        }
        // group pre-level components by their new root
        let mut groups: Vec<(usize, Vec<usize>, usize)> = Vec::new();
        for ((root, node), (_, size)) in before.iter().zip(&sizes) {
            let new_root = uf.find(*root);
            match groups.iter_mut().find(|(r, _, _)| *r == new_root) {
                Some(g) => {
                    g.1.push(*node);
                    g.2 += size;
                }
                None => groups.push((new_root, vec![*node], *size)),
            }
        }
        for (root, children, size) in groups {
            if children.len() < 2 {
                continue;
            }
            let mut children = children;
            children.sort_unstable();
            merges.push(Merge {
                distance: w,
                children,
                size,
            });
            node_of[root] = n + merges.len() - 1;
            size_of[root] = size;
        }
        i = j;
    }
    let root = if merges.is_empty() {
        0
    } else {
        n + merges.len() - 1
    };
    (merges, root)
}

/// Condensed cluster tree from a spanning tree over `n` points.
pub fn condense(edges: &[Edge], n: usize, min_cluster_size: usize) -> CondensedTree {
    let mut tree = CondensedTree {
        n_points: n,
        min_cluster_size,
        records: Vec::new(),
    };
    if n == 0 {
        return tree;
    }
    let (merges, root) = linkage(edges, n);
    if n == 1 {
        tree.records.push(CondensedRecord {
            parent: n,
            child: 0,
            lambda: 0.0,
            child_size: 1,
        });
        return tree;
    }
    let size = |node: usize| if node < n { 1 } else { merges[node - n].size };
    let mut next_cluster = n + 1;
    let mut stack = vec![(root, n)];
    let fall_out = |tree: &mut CondensedTree, node: usize, cluster: usize, lambda: f64| {
        let mut pending = vec![node];
        while let Some(x) = pending.pop() {
            if x < n {
                tree.records.push(CondensedRecord {
                    parent: cluster,
                    child: x,
                    lambda,
                    child_size: 1,
                });
            } else {
                pending.extend(merges[x - n].children.iter().rev());
            }
        }
    };
    while let Some((node, cluster)) = stack.pop() {
        let merge = &merges[node - n];
        let lambda = lambda_of(merge.distance);
        let big: Vec<usize> = merge
            .children
            .iter()
            .copied()
            .filter(|&c| size(c) >= min_cluster_size)
            .collect();
        if big.len() >= 2 {
            let mut spawned = Vec::new();
            for &child in &merge.children {
                if size(child) >= min_cluster_size {
                    let id = next_cluster;
                    next_cluster += 1;
                    tree.records.push(CondensedRecord {
                        parent: cluster,
                        child: id,
                        lambda,
                        child_size: size(child),
                    });
                    spawned.push((child, id));
                } else {
                    fall_out(&mut tree, child, cluster, lambda);
                }
            }
            stack.extend(spawned.into_iter().rev());
        } else {
            for &child in &merge.children {
                if big.first() == Some(&child) {
                    continue;
                }
                fall_out(&mut tree, child, cluster, lambda);
            }
            if let Some(&child) = big.first() {
                if child >= n {
                    stack.push((child, cluster));
                } else {
                    fall_out(&mut tree, child, cluster, lambda);
                }
            }
        }
    }
    tree
}

/// Flat clustering chosen from a condensed tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    /// Dense cluster id per point, `None` for noise. Ids follow the lowest
    /// point index of each cluster.
    pub labels: Vec<Option<u32>>,
    pub strengths: Vec<f64>,
    /// Condensed-tree id of each flat cluster.
    pub selected: Vec<usize>,
}

/// Excess-of-mass selection: a cluster is kept when its stability is at
/// least the summed stability of the best selection beneath it (ties keep
/// the shallower cluster). The root is only a candidate when it has no
/// child clusters, so a single cohesive group comes out as one cluster
/// rather than noise, while any real split is always reported.
pub fn extract(tree: &CondensedTree) -> Extraction {
    let n = tree.n_points;
    let mut out = Extraction {
        labels: vec![None; n],
        strengths: vec![0.0; n],
        selected: Vec::new(),
    };
    if n == 0 || n < tree.min_cluster_size {
        return out;
    }
    let clusters = tree.cluster_count();
    let idx = |id: usize| id - n;
    let mut parent = vec![usize::MAX; clusters];
    let mut birth = vec![0.0f64; clusters];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); clusters];
    let mut point_parent = vec![usize::MAX; n];
    let mut point_lambda = vec![0.0f64; n];
    for r in &tree.records {
        if tree.is_cluster(r.child) {
            parent[idx(r.child)] = idx(r.parent);
            birth[idx(r.child)] = r.lambda;
            children[idx(r.parent)].push(idx(r.child));
        } else {
            point_parent[r.child] = idx(r.parent);
            point_lambda[r.child] = r.lambda;
        }
    }
    let mut stability = vec![0.0f64; clusters];
    for r in &tree.records {
        let p = idx(r.parent);
        stability[p] += (r.lambda - birth[p]) * r.child_size as f64;
    }

    // children always have larger ids than their parent
    let mut best = vec![0.0f64; clusters];
    let mut is_selected = vec![false; clusters];
    for c in (0..clusters).rev() {
        let below: f64 = children[c].iter().map(|&k| best[k]).sum();
        let eligible = c != 0 || children[c].is_empty();
        if eligible && (children[c].is_empty() || stability[c] >= below) {
            is_selected[c] = true;
            best[c] = stability[c];
            let mut stack = children[c].clone();
            while let Some(k) = stack.pop() {
                is_selected[k] = false;
                stack.extend(&children[k]);
            }
        } else {
            best[c] = below;
        }
    }

    let mut owner = vec![None; n];
    for (p, slot) in owner.iter_mut().enumerate() {
        let mut c = point_parent[p];
        while c != usize::MAX {
            if is_selected[c] {
                *slot = Some(c);
                break;
            }
            c = parent[c];
        }
    }
    let mut max_lambda = vec![0.0f64; clusters];
    for p in 0..n {
        if let Some(c) = owner[p] {
            max_lambda[c] = max_lambda[c].max(point_lambda[p]);
        }
    }
    let mut dense = vec![None; clusters];
    for p in 0..n {
        let Some(c) = owner[p] else { continue };
        let id = *dense[c].get_or_insert_with(|| {
            out.selected.push(c + n);
            (out.selected.len() - 1) as u32
        });
        out.labels[p] = Some(id);
        out.strengths[p] = if max_lambda[c] > 0.0 {
            point_lambda[p] / max_lambda[c]
        } else {
            1.0
        };
    }
    out
}
