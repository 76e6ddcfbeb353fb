//! Undirected simple graphs with O(1) dyad queries and in-place dyad toggles.
//!
//! The adjacency matrix is stored as a dense upper-triangular bitset: graphs
//! of a couple thousand nodes fit comfortably in memory and toggles are O(1)
//! on the bitset (plus O(degree) bookkeeping for the neighbour lists that
//! triangle and shared-partner statistics rely on). The structure also keeps
//! an indexed edge list so a uniformly random existing edge can be drawn in
//! O(1), which the tie/no-tie sampler does on every step.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{ErgmError, Result};

/// A canonical unordered node pair with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Dyad {
    i: u32,
    j: u32,
}

impl Dyad {
    /// Builds a canonical dyad, rejecting `i == j`.
    pub fn new(a: usize, b: usize) -> Result<Self> {
        if a == b {
            return Err(ErgmError::NonCanonicalDyad { i: a, j: b });
        }
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        Ok(Dyad {
            i: i as u32,
            j: j as u32,
        })
    }

    pub fn i(&self) -> usize {
        self.i as usize
    }

    pub fn j(&self) -> usize {
        self.j as usize
    }
}

impl fmt::Display for Dyad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.i, self.j)
    }
}

/// A categorical node attribute: one small-integer level per node plus the
/// dictionary mapping level codes back to their labels.
#[derive(Debug, Clone)]
pub struct Attribute {
    values: Vec<u16>,
    levels: Vec<String>,
}

impl Attribute {
    /// Encodes raw labels into level codes. The dictionary keeps levels in
    /// sorted label order so the encoding does not depend on input order.
    pub fn from_labels(labels: &[String]) -> Self {
        let mut levels: Vec<String> = labels.to_vec();
        levels.sort();
        levels.dedup();
        let values = labels
            .iter()
            .map(|l| levels.binary_search(l).expect("level present") as u16)
            .collect();
        Attribute { values, levels }
    }

    /// Level code for a label, if the label occurs in the dictionary.
    pub fn code_of(&self, label: &str) -> Option<u16> {
        self.levels.binary_search_by(|l| l.as_str().cmp(label)).ok().map(|k| k as u16)
    }

    pub fn code(&self, node: usize) -> u16 {
        self.values[node]
    }

    pub fn label(&self, node: usize) -> &str {
        &self.levels[self.values[node] as usize]
    }

    pub fn levels(&self) -> &[String] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// An undirected simple graph with optional categorical node attributes.
#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    bits: Vec<u64>,
    degrees: Vec<u32>,
    neighbors: Vec<Vec<u32>>,
    edges: Vec<Dyad>,
    /// Position of each dyad in `edges`, indexed by dyad index; `u32::MAX`
    /// marks a non-edge.
    edge_pos: Vec<u32>,
    attributes: BTreeMap<String, Attribute>,
}

const NO_EDGE: u32 = u32::MAX;

impl Graph {
    /// An edgeless graph on `n` nodes.
    pub fn empty(n: usize) -> Self {
        assert!(n >= 1, "graph needs at least one node");
        let dyads = n * (n - 1) / 2;
        Graph {
            n,
            bits: vec![0u64; dyads.div_ceil(64)],
            degrees: vec![0; n],
            neighbors: vec![Vec::new(); n],
            edges: Vec::new(),
            edge_pos: vec![NO_EDGE; dyads],
            attributes: BTreeMap::new(),
        }
    }

    /// A graph on `n` nodes with every dyad connected.
    pub fn complete(n: usize) -> Self {
        let mut g = Graph::empty(n);
        let dyads: Vec<Dyad> = g.dyads().collect();
        for d in dyads {
            g.toggle(d).expect("in range");
        }
        g
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of dyads `D = n(n-1)/2`.
    pub fn dyad_count(&self) -> usize {
        self.n * (self.n - 1) / 2
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn density(&self) -> f64 {
        self.edge_count() as f64 / self.dyad_count() as f64
    }

    /// Row-major index of a canonical dyad: `i` ascending, then `j`.
    pub fn dyad_index(&self, d: Dyad) -> usize {
        let (i, j) = (d.i as usize, d.j as usize);
        i * (self.n - 1) - i * (i + 1) / 2 + (j - 1)
    }

    /// Inverse of [`dyad_index`](Self::dyad_index).
    pub fn dyad_at(&self, mut idx: usize) -> Dyad {
        debug_assert!(idx < self.dyad_count());
        let mut i = 0usize;
        loop {
            let row = self.n - 1 - i;
            if idx < row {
                return Dyad {
                    i: i as u32,
                    j: (i + 1 + idx) as u32,
                };
            }
            idx -= row;
            i += 1;
        }
    }

    /// Ordered, deterministic enumeration of all `n(n-1)/2` canonical dyads.
    pub fn dyads(&self) -> impl Iterator<Item = Dyad> + '_ {
        let n = self.n as u32;
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| Dyad { i, j }))
    }

    fn check(&self, d: Dyad) -> Result<()> {
        if (d.j as usize) >= self.n {
            return Err(ErgmError::IndexOutOfRange {
                index: d.j as usize,
                n: self.n,
            });
        }
        Ok(())
    }

    pub fn has_edge(&self, d: Dyad) -> bool {
        let idx = self.dyad_index(d);
        self.bits[idx >> 6] >> (idx & 63) & 1 == 1
    }

    pub fn degree(&self, node: usize) -> usize {
        self.degrees[node] as usize
    }

    pub fn neighbors(&self, node: usize) -> &[u32] {
        &self.neighbors[node]
    }

    pub fn edges(&self) -> &[Dyad] {
        &self.edges
    }

    /// The `k`-th edge in insertion order; used for uniform edge proposals.
    pub fn edge_at(&self, k: usize) -> Dyad {
        self.edges[k]
    }

    /// Flips the state of one dyad in place, returning the new state.
    /// Symmetry is structural (only `i < j` is stored) and the edge list,
    /// degree and neighbour bookkeeping stay consistent.
    pub fn toggle(&mut self, d: Dyad) -> Result<bool> {
        self.check(d)?;
        let idx = self.dyad_index(d);
        let (i, j) = (d.i as usize, d.j as usize);
        let now = self.bits[idx >> 6] >> (idx & 63) & 1 == 1;
        self.bits[idx >> 6] ^= 1u64 << (idx & 63);
        if now {
            self.degrees[i] -= 1;
            self.degrees[j] -= 1;
            let pi = self.neighbors[i].iter().position(|&x| x == d.j).expect("adjacent");
            self.neighbors[i].swap_remove(pi);
            let pj = self.neighbors[j].iter().position(|&x| x == d.i).expect("adjacent");
            self.neighbors[j].swap_remove(pj);
            let pos = self.edge_pos[idx] as usize;
            let last = self.edges.len() - 1;
            self.edges.swap_remove(pos);
            if pos != last {
                let moved = self.edges[pos];
                let midx = self.dyad_index(moved);
                self.edge_pos[midx] = pos as u32;
            }
            self.edge_pos[idx] = NO_EDGE;
        } else {
            self.degrees[i] += 1;
            self.degrees[j] += 1;
            self.neighbors[i].push(d.j);
            self.neighbors[j].push(d.i);
            self.edge_pos[idx] = self.edges.len() as u32;
            self.edges.push(d);
        }
        Ok(!now)
    }

    /// Number of common neighbours of the endpoints of `d`. The state of the
    /// dyad itself does not enter.
    pub fn common_neighbors(&self, d: Dyad) -> usize {
        let (i, j) = (d.i as usize, d.j as usize);
        let (a, b) = if self.degrees[i] <= self.degrees[j] { (i, j) } else { (j, i) };
        let bu = b as u32;
        self.neighbors[a]
            .iter()
            .filter(|&&k| k != bu && self.has_edge(Dyad { i: (k).min(bu), j: (k).max(bu) }))
            .count()
    }

    /// As [`common_neighbors`](Self::common_neighbors) but collecting the
    /// common neighbours into `out`.
    pub fn common_neighbors_into(&self, d: Dyad, out: &mut Vec<u32>) {
        out.clear();
        let (i, j) = (d.i as usize, d.j as usize);
        let (a, b) = if self.degrees[i] <= self.degrees[j] { (i, j) } else { (j, i) };
        let bu = b as u32;
        for &k in &self.neighbors[a] {
            if k != bu && self.has_edge(Dyad { i: k.min(bu), j: k.max(bu) }) {
                out.push(k);
            }
        }
    }

    /// Registers a categorical attribute. The label vector must have one
    /// entry per node.
    pub fn set_attribute(&mut self, name: &str, labels: Vec<String>) -> Result<()> {
        if labels.len() != self.n {
            return Err(ErgmError::ModelMismatch(format!(
                "attribute `{name}` has {} values for {} nodes",
                labels.len(),
                self.n
            )));
        }
        self.attributes.insert(name.to_string(), Attribute::from_labels(&labels));
        Ok(())
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.get(name)
    }

    pub fn attribute_names(&self) -> impl Iterator<Item = &str> {
        self.attributes.keys().map(|s| s.as_str())
    }

    /// Builds a graph from `(a, b)` node index pairs (0-indexed). Duplicate
    /// pairs and self-loops are rejected.
    pub fn from_edges(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut g = Graph::empty(n);
        for &(a, b) in pairs {
            let d = Dyad::new(a, b)?;
            g.check(d)?;
            if g.has_edge(d) {
                return Err(ErgmError::Parse(format!("duplicate edge ({a}, {b})")));
            }
            g.toggle(d)?;
        }
        Ok(g)
    }

    /// Reads a plain-text edge list: one edge per line, two whitespace
    /// separated integers, `#` comment lines ignored. `index_base` is the
    /// node numbering of the file (0 or 1); `declared_n` can extend the node
    /// set past the largest index seen (for graphs with isolated nodes).
    pub fn read_edge_list<P: AsRef<Path>>(
        path: P,
        index_base: usize,
        declared_n: Option<usize>,
    ) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        let mut pairs = Vec::new();
        let mut max_idx = 0usize;
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let mut it = t.split_whitespace();
            let a: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| ErgmError::Parse(format!("line {}: expected two integers", lineno + 1)))?;
            let b: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| ErgmError::Parse(format!("line {}: expected two integers", lineno + 1)))?;
            if a < index_base || b < index_base {
                return Err(ErgmError::Parse(format!(
                    "line {}: index below declared base {index_base}",
                    lineno + 1
                )));
            }
            let (a, b) = (a - index_base, b - index_base);
            max_idx = max_idx.max(a).max(b);
            pairs.push((a, b));
        }
        let n = match declared_n {
            Some(n) if n > max_idx => n,
            Some(n) => {
                return Err(ErgmError::Parse(format!(
                    "declared node count {n} but saw index {max_idx}"
                )))
            }
            None => max_idx + 1,
        };
        Graph::from_edges(n, &pairs)
    }

    /// Reads a node attribute file: header `node,<attrname>`, then one
    /// `index,level` row per node. Returns the attribute name read.
    pub fn read_attribute<P: AsRef<Path>>(&mut self, path: P, index_base: usize) -> Result<String> {
        let file = std::fs::File::open(path.as_ref())?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| ErgmError::Parse("empty attribute file".into()))??;
        let mut hp = header.trim().split(',');
        let first = hp.next().unwrap_or("");
        let name = hp
            .next()
            .filter(|_| first == "node")
            .ok_or_else(|| ErgmError::Parse("attribute header must be `node,<attrname>`".into()))?
            .trim()
            .to_string();
        let mut labels = vec![None::<String>; self.n];
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let mut it = t.split(',');
            let idx: usize = it
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| ErgmError::Parse(format!("attribute line {}: bad index", lineno + 2)))?;
            let level = it
                .next()
                .ok_or_else(|| ErgmError::Parse(format!("attribute line {}: missing level", lineno + 2)))?
                .trim()
                .to_string();
            if idx < index_base || idx - index_base >= self.n {
                return Err(ErgmError::Parse(format!(
                    "attribute line {}: node {idx} out of range",
                    lineno + 2
                )));
            }
            labels[idx - index_base] = Some(level);
        }
        let labels: Vec<String> = labels
            .into_iter()
            .enumerate()
            .map(|(i, l)| l.ok_or_else(|| ErgmError::Parse(format!("node {i} missing from attribute file"))))
            .collect::<Result<_>>()?;
        self.set_attribute(&name, labels)?;
        Ok(name)
    }

    /// Writes the edge list in the same plain-text format that
    /// [`read_edge_list`](Self::read_edge_list) accepts (0-indexed).
    pub fn write_edge_list<P: AsRef<Path>>(&self, path: P, header: &str) -> Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        if !header.is_empty() {
            for line in header.lines() {
                writeln!(out, "# {line}")?;
            }
        }
        let mut sorted: Vec<Dyad> = self.edges.to_vec();
        sorted.sort();
        for d in sorted {
            writeln!(out, "{} {}", d.i, d.j)?;
        }
        Ok(())
    }
}
