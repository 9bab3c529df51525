//! Independent reference computations for the integration tests. Nothing
//! here calls into the library under test; each oracle takes the slowest,
//! most literal route to its answer.
#![allow(dead_code)]

use std::collections::BTreeMap;

/// PAA by handing each sample's unit mass to the segments it overlaps, with
/// segment boundaries at `i * n / w` in floating point.
pub fn paa_oracle(values: &[f64], word_size: usize) -> Vec<f64> {
    let n = values.len() as f64;
    let seg = n / word_size as f64;
    (0..word_size)
        .map(|i| {
            let (lo, hi) = (i as f64 * seg, (i + 1) as f64 * seg);
            let mut acc = 0.0;
            for (j, v) in values.iter().enumerate() {
                let overlap = (hi.min(j as f64 + 1.0) - lo.max(j as f64)).max(0.0);
                acc += overlap * v;
            }
            acc / seg
        })
        .collect()
}

/// erf by its Maclaurin series, summed until the terms vanish. Good to
/// ~1e-14 for |x| < 3, which covers every quantile the tests need.
pub fn erf_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    let mut n = 0u32;
    loop {
        n += 1;
        term *= -x * x / n as f64;
        let contribution = term / (2 * n + 1) as f64;
        sum += contribution;
        if contribution.abs() < 1e-17 * sum.abs().max(1e-300) || n > 400 {
            break;
        }
    }
    sum * 2.0 / std::f64::consts::PI.sqrt()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf_series(x / std::f64::consts::SQRT_2))
}

/// Standard-normal quantile by bisection on the series CDF.
pub fn normal_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (-6.0f64, 6.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The `c - 1` equiprobable thresholds of cardinality `c`.
pub fn breakpoints_oracle(cardinality: u32) -> Vec<f64> {
    (1..cardinality)
        .map(|i| normal_quantile(i as f64 / cardinality as f64))
        .collect()
}

/// Population z-normalization.
pub fn znorm(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    values.iter().map(|v| (v - mean) / std).collect()
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Percentile `q` (0–100) with linear interpolation between closest ranks,
/// computed from a freshly sorted copy.
pub fn percentile_oracle(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = q / 100.0 * (sorted.len() - 1) as f64;
    let below = rank.floor() as usize;
    let above = rank.ceil() as usize;
    let frac = rank - below as f64;
    sorted[below] * (1.0 - frac) + sorted[above] * frac
}

/// Adjusted Rand index by counting agreeing pairs directly.
pub fn ari_pairs<A: PartialEq, B: PartialEq>(a: &[A], b: &[B]) -> f64 {
    let n = a.len();
    let (mut both, mut only_a, mut only_b, mut total) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            total += 1.0;
            if sa && sb {
                both += 1.0;
            }
            if sa {
                only_a += 1.0;
            }
            if sb {
                only_b += 1.0;
            }
        }
    }
    let expected = only_a * only_b / total;
    let max = 0.5 * (only_a + only_b);
    if max == expected {
        return 1.0;
    }
    (both - expected) / (max - expected)
}

/// Relabels a partition by order of first appearance, noise kept as `None`.
pub fn canonical(labels: &[Option<u32>]) -> Vec<Option<usize>> {
    let mut seen: BTreeMap<u32, usize> = BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            l.map(|c| {
                let next = seen.len();
                *seen.entry(c).or_insert(next)
            })
        })
        .collect()
}

/// Brute-force HDBSCAN.
///
/// Works from the full mutual-reachability matrix rather than a spanning
/// tree: a cluster's point set is split at its bottleneck `t` (the smallest
/// threshold at which the set is connected), into the components joined by
/// edges strictly below `t`. Children with at least `min_cluster_size`
/// points become new clusters when two or more qualify; a lone qualifying
/// child carries on as the same cluster; everything else falls out at
/// `1 / t`. Selection is excess of mass with ties kept at the shallower
/// cluster and the root eligible only when it has no child clusters.
pub struct ReferenceHdbscan {
    /// Flat label per point, canonical (first appearance) numbering.
    pub labels: Vec<Option<usize>>,
    /// Child clusters of the root in the condensed tree.
    pub root_children: usize,
}

struct RefCluster {
    birth: f64,
    children: Vec<usize>,
    fallouts: Vec<(usize, f64)>,
    size: usize,
}

fn lambda(distance: f64) -> f64 {
    1.0 / distance.max(1e-12)
}

pub fn reference_hdbscan(
    points: &[Vec<f64>],
    min_cluster_size: usize,
    min_samples: usize,
) -> ReferenceHdbscan {
    let n = points.len();
    if n < min_cluster_size || n < min_samples {
        return ReferenceHdbscan {
            labels: vec![None; n],
            root_children: 0,
        };
    }
    let d: Vec<Vec<f64>> = points
        .iter()
        .map(|p| points.iter().map(|q| euclidean(p, q)).collect())
        .collect();
    // Each point is its own nearest neighbour.
    let core: Vec<f64> = d
        .iter()
        .map(|row| {
            let mut r = row.clone();
            r.sort_by(|a, b| a.partial_cmp(b).unwrap());
            r[min_samples - 1]
        })
        .collect();
    let mr = |i: usize, j: usize| d[i][j].max(core[i]).max(core[j]);

    let components = |set: &[usize], below: f64| -> Vec<Vec<usize>> {
        let mut seen = vec![false; set.len()];
        let mut out = Vec::new();
        for start in 0..set.len() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut k = 0;
            while k < comp.len() {
                let a = comp[k];
                for b in 0..set.len() {
                    if !seen[b] && mr(set[a], set[b]) < below {
                        seen[b] = true;
                        comp.push(b);
                    }
                }
                k += 1;
            }
            let mut members: Vec<usize> = comp.into_iter().map(|i| set[i]).collect();
            members.sort_unstable();
            out.push(members);
        }
        out
    };
    let bottleneck = |set: &[usize]| -> f64 {
        let mut weights: Vec<f64> = set
            .iter()
            .flat_map(|&a| set.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
            .map(|(a, b)| mr(a, b))
            .collect();
        weights.sort_by(|a, b| a.partial_cmp(b).unwrap());
        weights.dedup();
        // Smallest weight w with the set connected under edges <= w, i.e.
        // a single component under edges < next representable value.
        *weights
            .iter()
            .find(|&&w| components(set, next_up(w)).len() == 1)
            .expect("a complete graph is connected at its largest weight")
    };

    let mut clusters = vec![RefCluster {
        birth: 0.0,
        children: Vec::new(),
        fallouts: Vec::new(),
        size: n,
    }];
    let mut work: Vec<(usize, Vec<usize>)> = vec![(0, (0..n).collect())];
    while let Some((cluster, mut set)) = work.pop() {
        loop {
            let t = bottleneck(&set);
            let l = lambda(t);
            let parts = components(&set, t);
            let big: Vec<&Vec<usize>> = parts
                .iter()
                .filter(|p| p.len() >= min_cluster_size)
                .collect();
            if big.len() >= 2 {
                for part in &parts {
                    if part.len() >= min_cluster_size {
                        let id = clusters.len();
                        clusters.push(RefCluster {
                            birth: l,
                            children: Vec::new(),
                            fallouts: Vec::new(),
                            size: part.len(),
                        });
                        clusters[cluster].children.push(id);
                        work.push((id, part.clone()));
                    } else {
                        clusters[cluster]
                            .fallouts
                            .extend(part.iter().map(|&p| (p, l)));
                    }
                }
                break;
            }
            if big.len() == 1 {
                let keep = big[0].clone();
                for part in &parts {
                    if part.len() < min_cluster_size {
                        clusters[cluster]
                            .fallouts
                            .extend(part.iter().map(|&p| (p, l)));
                    }
                }
                set = keep;
                continue;
            }
            clusters[cluster]
                .fallouts
                .extend(set.iter().map(|&p| (p, l)));
            break;
        }
    }

    let stability: Vec<f64> = clusters
        .iter()
        .map(|c| {
            let points: f64 = c.fallouts.iter().map(|(_, l)| l - c.birth).sum();
            let kids: f64 = c
                .children
                .iter()
                .map(|&k| (clusters[k].birth - c.birth) * clusters[k].size as f64)
                .sum();
            points + kids
        })
        .collect();

    fn best(c: usize, clusters: &[RefCluster], stability: &[f64]) -> (f64, Vec<usize>) {
        if clusters[c].children.is_empty() {
            return (stability[c], vec![c]);
        }
        let mut below = 0.0;
        let mut chosen = Vec::new();
        for &k in &clusters[c].children {
            let (s, sel) = best(k, clusters, stability);
            below += s;
            chosen.extend(sel);
        }
        if c != 0 && stability[c] >= below {
            (stability[c], vec![c])
        } else {
            (below, chosen)
        }
    }
    let (_, selected) = best(0, &clusters, &stability);

    fn subtree(c: usize, clusters: &[RefCluster], out: &mut Vec<usize>) {
        out.extend(clusters[c].fallouts.iter().map(|(p, _)| *p));
        for &k in &clusters[c].children {
            subtree(k, clusters, out);
        }
    }
    let mut raw = vec![None; n];
    for (label, &c) in selected.iter().enumerate() {
        let mut members = Vec::new();
        subtree(c, &clusters, &mut members);
        for p in members {
            assert!(raw[p].is_none(), "selected clusters overlap");
            raw[p] = Some(label as u32);
        }
    }
    ReferenceHdbscan {
        labels: canonical(&raw),
        root_children: clusters[0].children.len(),
    }
}

/// Smallest double strictly greater than `x` (for non-negative finite `x`).
fn next_up(x: f64) -> f64 {
    if x == 0.0 {
        f64::from_bits(1)
    } else {
        f64::from_bits(x.to_bits() + 1)
    }
}
