use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::TripleTree;

/// Internal edges must be at least this long.
pub const MIN_INTERNAL_EDGE: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub length: f64,
}

/// An unrooted tree with labelled leaves and edge lengths in expected
/// substitutions per site.
///
/// Vertices `0..n_leaves` are the leaves, in label order; the rest are
/// internal.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTree {
    labels: Vec<String>,
    n_vertices: usize,
    edges: Vec<Edge>,
}

impl LabeledTree {
    pub fn new(labels: Vec<String>, n_internal: usize, edges: Vec<Edge>) -> Result<Self> {
        let n_leaves = labels.len();
        let n_vertices = n_leaves + n_internal;
        if n_leaves < 2 {
            return Err(Error::validation("a tree needs at least two leaves"));
        }
        let mut sorted = labels.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::validation("leaf labels must be unique"));
        }
        if edges.len() + 1 != n_vertices {
            return Err(Error::validation(format!(
                "{} edges cannot connect {n_vertices} vertices as a tree",
                edges.len()
            )));
        }
        let mut degree = vec![0usize; n_vertices];
        for e in &edges {
            if e.u >= n_vertices || e.v >= n_vertices || e.u == e.v {
                return Err(Error::validation(format!("bad edge {}-{}", e.u, e.v)));
            }
            if !(e.length.is_finite() && e.length >= 0.0) {
                return Err(Error::validation(format!("edge length {} must be nonnegative", e.length)));
            }
            if e.u >= n_leaves && e.v >= n_leaves && e.length <= MIN_INTERNAL_EDGE {
                return Err(Error::validation("internal edges must have positive length"));
            }
            degree[e.u] += 1;
            degree[e.v] += 1;
        }
        for (v, d) in degree.iter().enumerate() {
            if v < n_leaves && *d != 1 && n_vertices > 1 {
                return Err(Error::validation(format!("leaf {} has degree {d}", labels[v])));
            }
            if v >= n_leaves && *d < 3 {
                return Err(Error::validation(format!("internal vertex {v} has valence {d} < 3")));
            }
        }
        let tree = Self { labels, n_vertices, edges };
        // connectivity: edge count is right, so reaching every vertex means acyclic too
        let mut seen = vec![false; n_vertices];
        let mut stack = vec![0];
        let adj = tree.adjacency();
        while let Some(v) = stack.pop() {
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            stack.extend(adj[v].iter().map(|&(w, _)| w));
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::validation("edges do not form a connected tree"));
        }
        let d = tree.leaf_distances();
        for i in 0..n_leaves {
            for j in (i + 1)..n_leaves {
                if d[(i, j)] <= 0.0 {
                    return Err(Error::validation(format!(
                        "taxa {} and {} are at total distance 0",
                        tree.labels[i], tree.labels[j]
                    )));
                }
            }
        }
        Ok(tree)
    }

    /// The three-taxon star with leaves `a`, `b`, `c` around one internal
    /// vertex.
    pub fn star3(t: &TripleTree) -> Result<Self> {
        let t = TripleTree::new(t.t_a, t.t_b, t.t_c)?;
        let edges = t.lengths().iter().enumerate().map(|(i, &length)| Edge { u: 3, v: i, length }).collect();
        Self::new(vec!["a".into(), "b".into(), "c".into()], 1, edges)
    }

    pub fn n_leaves(&self) -> usize {
        self.labels.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        v < self.labels.len()
    }

    /// Neighbour lists as `(vertex, edge index)`.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.n_vertices];
        for (i, e) in self.edges.iter().enumerate() {
            adj[e.u].push((e.v, i));
            adj[e.v].push((e.u, i));
        }
        adj
    }

    /// Path-length distances between leaves.
    pub fn leaf_distances(&self) -> DMatrix<f64> {
        let n = self.n_leaves();
        let adj = self.adjacency();
        let mut d = DMatrix::zeros(n, n);
        for s in 0..n {
            let mut dist = vec![f64::NAN; self.n_vertices];
            dist[s] = 0.0;
            let mut stack = vec![s];
            while let Some(v) = stack.pop() {
                for &(w, e) in &adj[v] {
                    if dist[w].is_nan() {
                        dist[w] = dist[v] + self.edges[e].length;
                        stack.push(w);
                    }
                }
            }
            for t in 0..n {
                d[(s, t)] = dist[t];
            }
        }
        d
    }

    /// Every edge as the leaf bipartition it induces, keyed by the side that
    /// excludes the lexicographically smallest label. Two trees on the same
    /// labels have the same topology iff their key sets agree.
    pub fn splits(&self) -> BTreeMap<Vec<String>, f64> {
        let anchor = (0..self.n_leaves()).min_by_key(|&i| &self.labels[i]).unwrap_or(0);
        let adj = self.adjacency();
        let mut out = BTreeMap::new();
        for (ei, e) in self.edges.iter().enumerate() {
            // leaves reachable from e.v without crossing e
            let mut side = Vec::new();
            let mut seen = vec![false; self.n_vertices];
            seen[e.u] = true;
            let mut stack = vec![e.v];
            while let Some(v) = stack.pop() {
                if std::mem::replace(&mut seen[v], true) {
                    continue;
                }
                if self.is_leaf(v) {
                    side.push(v);
                }
                for &(w, f) in &adj[v] {
                    if f != ei {
                        stack.push(w);
                    }
                }
            }
            let side: Vec<usize> = if side.contains(&anchor) {
                (0..self.n_leaves()).filter(|l| !side.contains(l)).collect()
            } else {
                side
            };
            let mut names: Vec<String> = side.iter().map(|&l| self.labels[l].clone()).collect();
            names.sort();
            *out.entry(names).or_insert(0.0) += e.length;
        }
        out
    }

    /// Newick string rooted at the internal vertex next to the first leaf,
    /// or as a two-leaf cherry when there is no internal vertex.
    pub fn to_newick(&self) -> String {
        let adj = self.adjacency();
        if self.n_vertices == 2 {
            let len = self.edges[0].length;
            return format!("({}:{len},{}:0);", self.labels[0], self.labels[1]);
        }
        let root = adj[0][0].0;
        let mut s = String::new();
        self.write_subtree(root, usize::MAX, &adj, &mut s);
        s.push(';');
        s
    }

    fn write_subtree(&self, v: usize, parent: usize, adj: &[Vec<(usize, usize)>], out: &mut String) {
        if self.is_leaf(v) {
            out.push_str(&self.labels[v]);
            return;
        }
        out.push('(');
        let mut first = true;
        for &(w, e) in &adj[v] {
            if w == parent {
                continue;
            }
            if !first {
                out.push(',');
            }
            first = false;
            self.write_subtree(w, v, adj, out);
            out.push_str(&format!(":{}", self.edges[e].length));
        }
        out.push(')');
    }

    /// Parses a Newick string with branch lengths on every non-root node.
    /// Unnamed degree-two vertices (including a bifurcating root) are
    /// suppressed by merging their two edges.
    pub fn from_newick(s: &str) -> Result<Self> {
        let mut p = NewickParser { src: s.as_bytes(), pos: 0, nodes: Vec::new(), edges: Vec::new() };
        p.skip_ws();
        let root = p.subtree()?;
        p.skip_ws();
        if p.peek() == Some(b':') {
            p.pos += 1;
            p.number()?;
            p.skip_ws();
        }
        p.expect(b';')?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("trailing characters after ';'"));
        }
        let _ = root;
        build_from_graph(p.nodes, p.edges)
    }
}

struct NewickParser<'a> {
    src: &'a [u8],
    pos: usize,
    nodes: Vec<Option<String>>,
    edges: Vec<(usize, usize, f64)>,
}

impl NewickParser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Newick { pos: self.pos, msg: msg.to_string() }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|c| c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected '{}'", c as char)))
        }
    }

    fn label(&mut self) -> Option<String> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if b"(),:;".contains(&c) || c.is_ascii_whitespace() {
                break;
            }
            self.pos += 1;
        }
        (self.pos > start).then(|| String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit() || b"+-.eE".contains(&c)) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .ok()
            .and_then(|t| t.parse::<f64>().ok())
            .ok_or_else(|| Error::Newick { pos: start, msg: "bad branch length".into() })
    }

    fn subtree(&mut self) -> Result<usize> {
        self.skip_ws();
        let id = self.nodes.len();
        self.nodes.push(None);
        if self.peek() == Some(b'(') {
            self.pos += 1;
            loop {
                let child = self.subtree()?;
                self.skip_ws();
                self.expect(b':').map_err(|_| self.err("every non-root node needs a branch length"))?;
                let len = self.number()?;
                self.edges.push((id, child, len));
                self.skip_ws();
                match self.peek() {
                    Some(b',') => self.pos += 1,
                    Some(b')') => {
                        self.pos += 1;
                        break;
                    }
                    _ => return Err(self.err("expected ',' or ')'")),
                }
            }
            self.skip_ws();
            // internal labels carry no meaning here
            let _ = self.label();
        } else {
            let name = self.label().ok_or_else(|| self.err("expected a leaf label"))?;
            self.nodes[id] = Some(name);
        }
        Ok(id)
    }
}

fn build_from_graph(nodes: Vec<Option<String>>, edges: Vec<(usize, usize, f64)>) -> Result<LabeledTree> {
    let n = nodes.len();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(a, b, l) in &edges {
        adj[a].push((b, l));
        adj[b].push((a, l));
    }
    // suppress unnamed degree-2 vertices
    let mut alive = vec![true; n];
    while let Some(v) = (0..n).find(|&v| alive[v] && nodes[v].is_none() && adj[v].len() == 2) {
        let (a, la) = adj[v][0];
        let (b, lb) = adj[v][1];
        adj[a].retain(|&(w, _)| w != v);
        adj[b].retain(|&(w, _)| w != v);
        adj[a].push((b, la + lb));
        adj[b].push((a, la + lb));
        adj[v].clear();
        alive[v] = false;
    }
    let leaves: Vec<usize> = (0..n).filter(|&v| alive[v] && nodes[v].is_some()).collect();
    let internal: Vec<usize> = (0..n).filter(|&v| alive[v] && nodes[v].is_none()).collect();
    let mut index = vec![usize::MAX; n];
    for (i, &v) in leaves.iter().chain(&internal).enumerate() {
        index[v] = i;
    }
    let mut out_edges = Vec::new();
    for v in 0..n {
        for &(w, length) in &adj[v] {
            if v < w {
                out_edges.push(Edge { u: index[v], v: index[w], length });
            }
        }
    }
    let labels = leaves.iter().map(|&v| nodes[v].clone().unwrap_or_default()).collect();
    LabeledTree::new(labels, internal.len(), out_edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newick_round_trip() {
        let s = "((a:0.1,b:0.2):0.05,c:0.3,d:0.4);";
        let t = LabeledTree::from_newick(s).unwrap();
        assert_eq!(t.n_leaves(), 4);
        let back = LabeledTree::from_newick(&t.to_newick()).unwrap();
        assert_eq!(t.splits(), back.splits());
        let d = t.leaf_distances();
        assert!((d[(0, 1)] - 0.3).abs() < 1e-15);
        assert!((d[(0, 2)] - 0.45).abs() < 1e-15);
    }

    #[test]
    fn rooted_binary_input_is_unrooted() {
        let t = LabeledTree::from_newick("((a:1,b:1):0.5,(c:1,d:1):0.25);").unwrap();
        assert_eq!(t.n_vertices(), 6);
        let splits = t.splits();
        let ab = vec!["c".to_string(), "d".to_string()];
        assert!((splits[&ab] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn newick_errors() {
        assert!(LabeledTree::from_newick("((a:1,b:1),c:1);").is_err());
        assert!(LabeledTree::from_newick("(a:1,b:1,c:1)").is_err());
        assert!(LabeledTree::from_newick("(a:1,b:x,c:1);").is_err());
    }

    #[test]
    fn rejects_zero_internal_and_zero_distance() {
        assert!(LabeledTree::from_newick("((a:1,b:1):0,c:1,d:1);").is_err());
        assert!(LabeledTree::from_newick("(a:0,b:0,c:1);").is_err());
        assert!(LabeledTree::from_newick("(a:0,b:0.1,c:1);").is_ok());
    }

    #[test]
    fn two_leaf_tree() {
        let t = LabeledTree::from_newick("(a:0.3,b:0.2);").unwrap();
        assert_eq!(t.edges().len(), 1);
        assert!((t.leaf_distances()[(0, 1)] - 0.5).abs() < 1e-15);
        assert_eq!(LabeledTree::from_newick(&t.to_newick()).unwrap().leaf_distances(), t.leaf_distances());
    }
}
