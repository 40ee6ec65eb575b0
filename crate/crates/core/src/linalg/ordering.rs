//! Fill-reducing ordering for symmetric sparsity patterns.
//!
//! Plain minimum degree on the explicit elimination graph. Ties are broken by
//! the lower vertex index so the permutation is a deterministic function of the
//! pattern. Adequate for the KKT systems produced here (a few thousand rows with
//! small cone blocks); it is not an AMD replacement for very large systems.

use std::collections::BTreeSet;

/// Returns `perm` where `perm[k]` is the original index eliminated at step `k`.
///
/// `adjacency[i]` lists the neighbours of vertex `i`; self loops and duplicate
/// entries are ignored.
pub fn minimum_degree(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let mut adj: Vec<Vec<usize>> = adjacency
        .iter()
        .enumerate()
        .map(|(i, nb)| {
            let mut v: Vec<usize> = nb.iter().copied().filter(|&j| j != i).collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();
    // make the graph symmetric in case only one triangle was supplied
    let mut extra: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, nb) in adj.iter().enumerate() {
        for &j in nb {
            if adj[j].binary_search(&i).is_err() {
                extra[j].push(i);
            }
        }
    }
    for (i, e) in extra.into_iter().enumerate() {
        if !e.is_empty() {
            adj[i].extend(e);
            adj[i].sort_unstable();
            adj[i].dedup();
        }
    }

    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|i| (adj[i].len(), i)).collect();
    let mut degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut perm = Vec::with_capacity(n);
    let mut merged = Vec::new();

    while let Some((_, v)) = queue.pop_first() {
        perm.push(v);
        let clique = std::mem::take(&mut adj[v]);
        for &u in &clique {
            // adj[u] <- (adj[u] \ {v}) ∪ (clique \ {u})
            merged.clear();
            let a = &adj[u];
            let (mut i, mut j) = (0, 0);
            while i < a.len() || j < clique.len() {
                let next = match (a.get(i), clique.get(j)) {
                    (Some(&x), Some(&y)) if x == y => {
                        i += 1;
                        j += 1;
                        x
                    }
                    (Some(&x), Some(&y)) if x < y => {
                        i += 1;
                        x
                    }
                    (Some(_), Some(&y)) => {
                        j += 1;
                        y
                    }
                    (Some(&x), None) => {
                        i += 1;
                        x
                    }
                    (None, Some(&y)) => {
                        j += 1;
                        y
                    }
                    (None, None) => unreachable!(),
                };
                if next != u && next != v {
                    merged.push(next);
                }
            }
            std::mem::swap(&mut adj[u], &mut merged);
            queue.remove(&(degree[u], u));
            degree[u] = adj[u].len();
            queue.insert((degree[u], u));
        }
    }
    perm
}

pub fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (k, &p) in perm.iter().enumerate() {
        inv[p] = k;
    }
    inv
}
