//! Heavy-hex device graphs.
//!
//! A heavy-hex lattice is a set of horizontal rows of degree-≤3 qubits joined
//! by degree-2 *connector* qubits. Rows alternate which columns carry a
//! connector (offsets `0, 4, 8, …` below even rows, `2, 6, 10, …` below odd
//! rows), which produces the hexagonal cells with a qubit on every edge.
//!
//! The hammer protocol drives the six qubits around an idle connector: the two
//! row qubits it touches (*direct*) and the row neighbours of each of those
//! (*flanks*).

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a physical qubit on a [`CouplingMap`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QubitId(pub usize);

impl QubitId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for QubitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q{}", self.0)
    }
}

impl From<usize> for QubitId {
    fn from(i: usize) -> Self {
        QubitId(i)
    }
}

/// Returned by [`CouplingMap::hop_distance`] for disconnected pairs.
pub const UNREACHABLE: usize = usize::MAX;

/// Undirected, connected device graph with every qubit of degree 1..=3.
#[derive(Debug)]
pub struct CouplingMap {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    /// Vertical connector qubits, when the map came from a known layout.
    connectors: Option<Vec<usize>>,
    distances: OnceLock<Vec<u32>>,
}

impl Clone for CouplingMap {
    fn clone(&self) -> Self {
        Self {
            n: self.n,
            edges: self.edges.clone(),
            adjacency: self.adjacency.clone(),
            connectors: self.connectors.clone(),
            distances: OnceLock::new(),
        }
    }
}

impl PartialEq for CouplingMap {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.edges == other.edges && self.connectors == other.connectors
    }
}

impl Eq for CouplingMap {}

#[derive(Serialize, Deserialize)]
struct CouplingMapFile {
    n: usize,
    edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    connectors: Option<Vec<usize>>,
}

impl CouplingMap {
    /// Builds and validates a map. Edges are normalised to `(low, high)` and sorted.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::EdgeOutOfRange { a, b, n });
            }
            if a == b {
                return Err(Error::SelfLoop(a));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(Error::DuplicateEdge(e.0, e.1));
            }
        }
        let edges: Vec<_> = seen.into_iter().collect();
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        for (q, nbrs) in adjacency.iter().enumerate() {
            if !(1..=3).contains(&nbrs.len()) {
                return Err(Error::BadDegree {
                    qubit: q,
                    degree: nbrs.len(),
                });
            }
        }
        let map = Self {
            n,
            edges,
            adjacency,
            connectors: None,
            distances: OnceLock::new(),
        };
        if n > 0 {
            let d = map.bfs(0);
            if let Some(q) = d.iter().position(|&x| x == UNREACHABLE) {
                return Err(Error::Disconnected(q));
            }
        }
        Ok(map)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Sorted `(low, high)` edge list.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, q: QubitId) -> &[usize] {
        &self.adjacency[q.0]
    }

    pub fn degree(&self, q: QubitId) -> usize {
        self.adjacency[q.0].len()
    }

    pub fn is_adjacent(&self, a: QubitId, b: QubitId) -> bool {
        self.adjacency[a.0].binary_search(&b.0).is_ok()
    }

    pub fn check_qubit(&self, q: QubitId) -> Result<()> {
        if q.0 < self.n {
            Ok(())
        } else {
            Err(Error::QubitOutOfRange {
                qubit: q.0,
                n: self.n,
            })
        }
    }

    fn bfs(&self, src: usize) -> Vec<usize> {
        let mut dist = vec![UNREACHABLE; self.n];
        let mut queue = VecDeque::new();
        dist[src] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if dist[v] == UNREACHABLE {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    fn distance_table(&self) -> &[u32] {
        self.distances.get_or_init(|| {
            let mut table = Vec::with_capacity(self.n * self.n);
            for s in 0..self.n {
                table.extend(
                    self.bfs(s)
                        .into_iter()
                        .map(|d| if d == UNREACHABLE { u32::MAX } else { d as u32 }),
                );
            }
            table
        })
    }

    /// Shortest-path length between two qubits, or [`UNREACHABLE`].
    ///
    /// The all-pairs table is computed on first use and cached.
    pub fn hop_distance(&self, a: QubitId, b: QubitId) -> usize {
        match self.distance_table()[a.0 * self.n + b.0] {
            u32::MAX => UNREACHABLE,
            d => d as usize,
        }
    }

    /// Qubits at hop distance `1..=radius` from `q`, paired with their distance.
    pub fn ball(&self, q: QubitId, radius: usize) -> Vec<(QubitId, usize)> {
        let row = &self.distance_table()[q.0 * self.n..(q.0 + 1) * self.n];
        row.iter()
            .enumerate()
            .filter(|&(_, &d)| d >= 1 && (d as usize) <= radius)
            .map(|(i, &d)| (QubitId(i), d as usize))
            .collect()
    }

    pub fn to_json(&self) -> String {
        let file = CouplingMapFile {
            n: self.n,
            edges: self.edges.iter().map(|&(a, b)| [a, b]).collect(),
            connectors: self.connectors.clone(),
        };
        serde_json::to_string(&file).expect("coupling map serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CouplingMapFile = serde_json::from_str(text)?;
        let map = Self::new(file.n, file.edges.into_iter().map(|[a, b]| (a, b)))?;
        match file.connectors {
            Some(c) => map.with_connectors(c),
            None => Ok(map),
        }
    }

    /// Marks which qubits are vertical connectors. Each must have degree 2.
    pub fn with_connectors(mut self, mut connectors: Vec<usize>) -> Result<Self> {
        connectors.sort_unstable();
        connectors.dedup();
        for &q in &connectors {
            self.check_qubit(QubitId(q))?;
            if self.degree(QubitId(q)) != 2 {
                return Err(Error::NotAConnector {
                    center: QubitId(q),
                    degree: self.degree(QubitId(q)),
                });
            }
        }
        self.connectors = Some(connectors);
        Ok(self)
    }

    /// Vertical connectors if labelled, otherwise every degree-2 qubit.
    pub fn connectors(&self) -> Vec<QubitId> {
        match &self.connectors {
            Some(c) => c.iter().copied().map(QubitId).collect(),
            None => (0..self.n)
                .map(QubitId)
                .filter(|&q| self.degree(q) == 2)
                .collect(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Reads and validates a coupling map from a JSON file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Connectors whose neighbourhood is complete (six driven qubits).
    pub fn interior_connectors(&self) -> Vec<QubitId> {
        self.connectors()
            .into_iter()
            .filter(|&q| hammer_neighborhood(self, q).is_ok())
            .collect()
    }
}

/// Loads a coupling map from a JSON file. See [`CouplingMap::load`].
pub fn load_coupling_map(path: impl AsRef<Path>) -> Result<CouplingMap> {
    CouplingMap::load(path)
}

/// Shape of a generated heavy-hex lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeavyHexLayout {
    /// Number of horizontal qubit rows.
    pub rows: usize,
    /// Columns spanned by a full row. Must be `3 (mod 4)`.
    pub width: usize,
}

impl HeavyHexLayout {
    /// The 127-qubit, 7-row layout of Eagle-class processors.
    pub const EAGLE: HeavyHexLayout = HeavyHexLayout { rows: 7, width: 15 };
    /// A 13-row, 27-column lattice (433 qubits), roomy enough for twelve
    /// mutually isolated hammer neighbourhoods.
    pub const OSPREY: HeavyHexLayout = HeavyHexLayout {
        rows: 13,
        width: 27,
    };

    fn connector_columns(&self, gap: usize) -> Vec<usize> {
        let start = if gap % 2 == 0 { 0 } else { 2 };
        (start..self.width).step_by(4).collect()
    }

    fn row_columns(&self, row: usize) -> std::ops::Range<usize> {
        if row == 0 {
            0..self.width - 1
        } else if row + 1 == self.rows {
            // The last row drops whichever end has no connector above it.
            if self.connector_columns(row - 1)[0] == 0 {
                0..self.width - 1
            } else {
                1..self.width
            }
        } else {
            0..self.width
        }
    }
}

/// Generates a heavy-hex lattice.
///
/// Qubits are numbered row-major; the connectors below a row are numbered
/// right after that row's qubits, left to right.
pub fn generate_heavy_hex(layout: HeavyHexLayout) -> Result<CouplingMap> {
    let HeavyHexLayout { rows, width } = layout;
    if rows < 2 || width < 3 || width % 4 != 3 {
        return Err(Error::InvalidSpec(format!(
            "heavy-hex layout needs rows >= 2 and width = 3 (mod 4), got {rows}x{width}"
        )));
    }
    // index of (row, column) row qubits
    let mut row_index: Vec<Vec<Option<usize>>> = vec![vec![None; width]; rows];
    let mut edges = Vec::new();
    let mut next = 0usize;
    let mut pending: Vec<(usize, usize)> = Vec::new(); // (connector, column) awaiting the next row
    let mut connectors = Vec::new();
    for row in 0..rows {
        let cols = layout.row_columns(row);
        let mut prev: Option<usize> = None;
        for c in cols {
            let q = next;
            next += 1;
            row_index[row][c] = Some(q);
            if let Some(p) = prev {
                edges.push((p, q));
            }
            prev = Some(q);
        }
        for (conn, c) in pending.drain(..) {
            let below = row_index[row][c].expect("connector lands on a row qubit");
            edges.push((conn, below));
        }
        if row + 1 < rows {
            for c in layout.connector_columns(row) {
                let conn = next;
                next += 1;
                connectors.push(conn);
                let above = row_index[row][c].expect("connector hangs from a row qubit");
                edges.push((above, conn));
                pending.push((conn, c));
            }
        }
    }
    CouplingMap::new(next, edges)?.with_connectors(connectors)
}

/// The built-in 127-qubit heavy-hex device.
pub fn generate_heavy_hex_127() -> CouplingMap {
    generate_heavy_hex(HeavyHexLayout::EAGLE).expect("Eagle layout is valid")
}

/// The six qubits driven around an idle connector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Neighborhood {
    pub center: QubitId,
    /// The two row qubits adjacent to the center, ascending.
    pub direct: [QubitId; 2],
    /// `flanks[i]` are the neighbours of `direct[i]` other than the center,
    /// ascending. Complete neighbourhoods have two per side.
    pub flanks: [Vec<QubitId>; 2],
}

impl Neighborhood {
    pub fn is_complete(&self) -> bool {
        self.flanks.iter().all(|f| f.len() == 2)
    }

    /// Driven qubits: directs then flanks.
    pub fn driven(&self) -> Vec<QubitId> {
        let mut v = self.direct.to_vec();
        v.extend(self.flanks.iter().flatten().copied());
        v
    }

    /// Center followed by every driven qubit.
    pub fn members(&self) -> Vec<QubitId> {
        let mut v = vec![self.center];
        v.extend(self.driven());
        v
    }
}

/// Strict neighbourhood lookup: rejects non-connectors and boundary connectors.
pub fn hammer_neighborhood(map: &CouplingMap, center: QubitId) -> Result<Neighborhood> {
    let nb = hammer_neighborhood_permissive(map, center)?;
    for (i, f) in nb.flanks.iter().enumerate() {
        if f.len() != 2 {
            return Err(Error::Boundary {
                center,
                direct: nb.direct[i],
                found: f.len(),
            });
        }
    }
    Ok(nb)
}

/// Like [`hammer_neighborhood`] but returns partial flanks on the boundary.
pub fn hammer_neighborhood_permissive(map: &CouplingMap, center: QubitId) -> Result<Neighborhood> {
    map.check_qubit(center)?;
    let nbrs = map.neighbors(center);
    if nbrs.len() != 2 {
        return Err(Error::NotAConnector {
            center,
            degree: nbrs.len(),
        });
    }
    let direct = [QubitId(nbrs[0]), QubitId(nbrs[1])];
    let flanks = direct.map(|d| {
        map.neighbors(d)
            .iter()
            .copied()
            .filter(|&q| q != center.0)
            .map(QubitId)
            .collect::<Vec<_>>()
    });
    Ok(Neighborhood {
        center,
        direct,
        flanks,
    })
}

/// Greedy lowest-index-first partition of the interior connectors into
/// groups whose members are pairwise more than `min_separation_hops` apart.
pub fn select_center_groups(
    map: &CouplingMap,
    group_size: usize,
    min_separation_hops: usize,
) -> Result<Vec<Vec<QubitId>>> {
    if group_size < 1 {
        return Err(Error::BadGroupSize);
    }
    if min_separation_hops < 1 {
        return Err(Error::BadSeparation);
    }
    let mut groups: Vec<Vec<QubitId>> = Vec::new();
    for c in map.interior_connectors() {
        let slot = groups.iter_mut().find(|g| {
            g.len() < group_size
                && g
                    .iter()
                    .all(|&o| map.hop_distance(o, c) > min_separation_hops)
        });
        match slot {
            Some(g) => g.push(c),
            None => groups.push(vec![c]),
        }
    }
    Ok(groups)
}
