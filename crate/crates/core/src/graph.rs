//! Reachability helpers over small directed graphs given as edge lists.

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};

fn build(n: usize, arcs: &[(usize, usize)]) -> DiGraph<(), ()> {
    let mut g = DiGraph::with_capacity(n, arcs.len());
    for _ in 0..n {
        g.add_node(());
    }
    for &(a, b) in arcs {
        g.add_edge(NodeIndex::new(a), NodeIndex::new(b), ());
    }
    g
}

/// Strongly connected components with no arc leaving them, i.e. the minimal
/// non-empty sets closed under taking successors. Each class is sorted and
/// classes are ordered by their smallest member.
pub fn closed_classes(n: usize, arcs: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let g = build(n, arcs);
    let sccs = tarjan_scc(&g);
    let mut comp = vec![0usize; n];
    for (k, scc) in sccs.iter().enumerate() {
        for v in scc {
            comp[v.index()] = k;
        }
    }
    let mut leaks = vec![false; sccs.len()];
    for &(a, b) in arcs {
        if comp[a] != comp[b] {
            leaks[comp[a]] = true;
        }
    }
    let mut out: Vec<Vec<usize>> = sccs
        .iter()
        .enumerate()
        .filter(|(k, _)| !leaks[*k])
        .map(|(_, scc)| {
            let mut c: Vec<usize> = scc.iter().map(|v| v.index()).collect();
            c.sort_unstable();
            c
        })
        .collect();
    out.sort();
    out
}

/// Whether every vertex reaches every other.
pub fn is_strongly_connected(n: usize, arcs: &[(usize, usize)]) -> bool {
    n > 0 && tarjan_scc(&build(n, arcs)).len() == 1
}

/// Vertices reachable from `start` (including it), sorted.
pub fn reachable(n: usize, arcs: &[(usize, usize)], start: usize) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in arcs {
        adj[a].push(b);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    (0..n).filter(|&v| seen[v]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bottom_components() {
        // 0 -> 1 <-> 2, 0 -> 3 (sink), 4 isolated
        let arcs = [(0, 1), (1, 2), (2, 1), (0, 3), (3, 3)];
        assert_eq!(closed_classes(5, &arcs), vec![vec![1, 2], vec![3], vec![4]]);
        assert!(!is_strongly_connected(5, &arcs));
        assert!(is_strongly_connected(2, &[(0, 1), (1, 0)]));
        assert_eq!(reachable(5, &arcs, 0), vec![0, 1, 2, 3]);
    }
}
