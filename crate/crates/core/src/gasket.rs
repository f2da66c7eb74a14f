//! Level-m graph approximation of the Sierpinski gasket.
//!
//! The gasket is the attractor of the three maps `F_i(x) = (x + q_i) / 2`.
//! At level `m` it is approximated by the `3^m` cells `F_w(T)` for words `w`
//! of length `m`, where `T` is the triangle spanned by the corners `q_1, q_2,
//! q_3`. Vertices are identified exactly through integer barycentric
//! coordinates with denominator `2^m`, so a vertex shared by two cells is
//! stored once.
//!
//! Vertex ids follow the shortlex order of their generating words: a vertex
//! `F_w(q_i)` is named by the shortest string `w i`, ties broken
//! lexicographically. The three corners therefore get ids `0, 1, 2` and the
//! vertices of any coarser level `k <= m` occupy the id prefix
//! `0..vertex_count(k)`, which makes restriction and extension between levels
//! a matter of slicing.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Upper bound on the level; `3^level` must fit the cell index space and
/// `2^level` the barycentric denominators.
pub const MAX_LEVEL: usize = 39;

/// Number of vertices of the level-`level` graph, `3 (3^m + 1) / 2`.
pub fn vertex_count(level: usize) -> usize {
    3 * (3usize.pow(level as u32) + 1) / 2
}

/// Number of cells of the level-`level` graph, `3^m`.
pub fn cell_count(level: usize) -> usize {
    3usize.pow(level as u32)
}

/// Word over `{1, 2, 3}` addressing a cell `F_w(T)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellAddress(Vec<u8>);

impl CellAddress {
    pub fn new(symbols: Vec<u8>) -> Result<Self> {
        if let Some(&bad) = symbols.iter().find(|&&s| !(1..=3).contains(&s)) {
            return Err(Error::AddressSymbol(char::from(b'0' + bad.min(9))));
        }
        Ok(Self(symbols))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn symbols(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Lexicographic rank among words of the same length.
    pub fn rank(&self) -> usize {
        self.0
            .iter()
            .fold(0usize, |acc, &s| acc * 3 + (s as usize - 1))
    }

    /// Inverse of [`CellAddress::rank`].
    pub fn from_rank(rank: usize, len: usize) -> Self {
        let mut symbols = vec![0u8; len];
        let mut r = rank;
        for slot in symbols.iter_mut().rev() {
            *slot = (r % 3) as u8 + 1;
            r /= 3;
        }
        Self(symbols)
    }
}

impl fmt::Display for CellAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &s in &self.0 {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

impl FromStr for CellAddress {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let symbols = s
            .chars()
            .map(|c| match c {
                '1' => Ok(1),
                '2' => Ok(2),
                '3' => Ok(3),
                other => Err(Error::AddressSymbol(other)),
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(Self(symbols))
    }
}

/// Immutable level-m vertex/cell complex with boundary marking and
/// quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GasketGraph {
    level: usize,
    corners: [[f64; 2]; 3],
    vertices: Vec<[f64; 2]>,
    words: Vec<String>,
    cells: Vec<[usize; 3]>,
    boundary_ids: [usize; 3],
    vertex_weight: Vec<f64>,
    edges: Vec<[usize; 2]>,
}

/// Applies `F_w` to the corner `q_corner` in barycentric coordinates scaled
/// by `2^level`. Maps compose right to left, `F_w = F_{w_1} o ... o F_{w_k}`.
fn map_corner(word: &[u8], corner: u8, level: usize) -> [u64; 3] {
    let denom = 1u64 << level;
    let mut x = [0u64; 3];
    x[corner as usize - 1] = denom;
    for &s in word.iter().rev() {
        x[s as usize - 1] += denom;
        for c in &mut x {
            *c /= 2;
        }
    }
    x
}

/// Build the level-`level` gasket over the given corners.
pub fn build_gasket(level: usize, corners: [[f64; 2]; 3]) -> Result<GasketGraph> {
    if level > MAX_LEVEL || 3usize.checked_pow(level as u32 + 1).is_none() {
        return Err(Error::LevelTooLarge(level));
    }
    for i in 0..3 {
        for j in (i + 1)..3 {
            if corners[i] == corners[j] {
                return Err(Error::DegenerateCorners);
            }
        }
    }

    let n_vertices = vertex_count(level);
    let mut index: HashMap<[u64; 3], usize> = HashMap::with_capacity(n_vertices);
    let mut bary: Vec<[u64; 3]> = Vec::with_capacity(n_vertices);
    let mut words: Vec<String> = Vec::with_capacity(n_vertices);

    // Shortlex enumeration of the strings `w i`; first sighting wins.
    for len in 1..=level + 1 {
        for rank in 0..3usize.pow(len as u32) {
            let word = CellAddress::from_rank(rank, len);
            let (prefix, last) = word.0.split_at(len - 1);
            let point = map_corner(prefix, last[0], level);
            index.entry(point).or_insert_with(|| {
                bary.push(point);
                words.push(word.to_string());
                bary.len() - 1
            });
        }
    }
    debug_assert_eq!(bary.len(), n_vertices);

    let n_cells = cell_count(level);
    let cells: Vec<[usize; 3]> = (0..n_cells)
        .map(|rank| {
            let word = CellAddress::from_rank(rank, level);
            let mut ids = [0usize; 3];
            for (i, id) in ids.iter_mut().enumerate() {
                *id = index[&map_corner(&word.0, i as u8 + 1, level)];
            }
            ids
        })
        .collect();

    let cell_measure = 1.0 / n_cells as f64;
    let mut vertex_weight = vec![0.0; n_vertices];
    for cell in &cells {
        for &id in cell {
            vertex_weight[id] += cell_measure / 3.0;
        }
    }

    let denom = (1u64 << level) as f64;
    let vertices = bary
        .iter()
        .map(|b| {
            let mut xy = [0.0; 2];
            for (k, &c) in b.iter().enumerate() {
                let s = c as f64 / denom;
                xy[0] += s * corners[k][0];
                xy[1] += s * corners[k][1];
            }
            xy
        })
        .collect();

    let edges = cells
        .iter()
        .flat_map(|&[a, b, c]| [[a, b], [b, c], [a, c]])
        .collect();

    Ok(GasketGraph {
        level,
        corners,
        vertices,
        words,
        cells,
        boundary_ids: [0, 1, 2],
        vertex_weight,
        edges,
    })
}

/// Unit-side equilateral corners `q_1 = (0,0)`, `q_2 = (1,0)`, `q_3 = (1/2, sqrt(3)/2)`.
pub fn equilateral_corners() -> [[f64; 2]; 3] {
    [[0.0, 0.0], [1.0, 0.0], [0.5, 3f64.sqrt() / 2.0]]
}

impl GasketGraph {
    /// Level-`level` gasket on the unit equilateral triangle.
    pub fn standard(level: usize) -> Result<Self> {
        build_gasket(level, equilateral_corners())
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn corners(&self) -> &[[f64; 2]; 3] {
        &self.corners
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    /// Each cell contributes its three sides; cells share at most a vertex,
    /// so no side is listed twice.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn boundary_ids(&self) -> [usize; 3] {
        self.boundary_ids
    }

    pub fn is_boundary(&self, id: usize) -> bool {
        self.boundary_ids.contains(&id)
    }

    /// Ids of the non-boundary vertices, in id order.
    pub fn interior_ids(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_vertices()).filter(|&id| !self.is_boundary(id))
    }

    pub fn vertex_weight(&self) -> &[f64] {
        &self.vertex_weight
    }

    /// Generating word of a vertex: the shortlex-minimal string `w i` with
    /// `F_w(q_i)` equal to the vertex.
    pub fn generating_word(&self, id: usize) -> &str {
        &self.words[id]
    }

    /// Ids of `(F_w q_1, F_w q_2, F_w q_3)` for the level-m cell `w`.
    pub fn cell_vertex_ids(&self, addr: &CellAddress) -> Result<[usize; 3]> {
        if addr.len() != self.level {
            return Err(Error::AddressLength {
                expected: self.level,
                got: addr.len(),
            });
        }
        Ok(self.cells[addr.rank()])
    }

    /// Ids of the corners `F_w q_i` of a cell of order `addr.len() <= level`.
    pub fn order_cell_corners(&self, addr: &CellAddress) -> Result<[usize; 3]> {
        if addr.len() > self.level {
            return Err(Error::AddressLength {
                expected: self.level,
                got: addr.len(),
            });
        }
        let depth = self.level - addr.len();
        let mut ids = [0usize; 3];
        for (i, id) in ids.iter_mut().enumerate() {
            // F_w q_i = F_{w i i ... i} q_i
            let mut symbols = addr.0.clone();
            symbols.extend(std::iter::repeat_n(i as u8 + 1, depth));
            *id = self.cells[CellAddress(symbols).rank()][i];
        }
        Ok(ids)
    }

    /// Sorted vertex ids of every order-`order` cell, indexed by the rank of
    /// the cell's address.
    pub fn order_cell_vertex_sets(&self, order: usize) -> Result<Vec<Vec<usize>>> {
        if order > self.level {
            return Err(Error::InvalidArgument(format!(
                "order {order} exceeds graph level {}",
                self.level
            )));
        }
        let per_cell = cell_count(self.level - order);
        let sets = self
            .cells
            .chunks(per_cell)
            .map(|chunk| {
                let mut ids: Vec<usize> = chunk.iter().flatten().copied().collect();
                ids.sort_unstable();
                ids.dedup();
                ids
            })
            .collect();
        Ok(sets)
    }

    /// Vertex groups whose pairs are "in the same or adjacent order-`order`
    /// cells": every order-`order` cell, and the union of every two such
    /// cells that share a corner.
    pub fn same_or_adjacent_groups(&self, order: usize) -> Result<Vec<Vec<usize>>> {
        let sets = self.order_cell_vertex_sets(order)?;
        let corners: Vec<[usize; 3]> = (0..sets.len())
            .map(|rank| self.order_cell_corners(&CellAddress::from_rank(rank, order)))
            .collect::<Result<_>>()?;

        let mut groups = sets.clone();
        for i in 0..sets.len() {
            for j in (i + 1)..sets.len() {
                if corners[i].iter().any(|c| corners[j].contains(c)) {
                    let mut union: Vec<usize> =
                        sets[i].iter().chain(sets[j].iter()).copied().collect();
                    union.sort_unstable();
                    union.dedup();
                    groups.push(union);
                }
            }
        }
        Ok(groups)
    }

    /// All unordered vertex pairs `(x, y)`, `x < y`, lying in one order-`order`
    /// cell or in two order-`order` cells sharing a vertex. Sorted, no repeats.
    pub fn same_or_adjacent_cell_pairs(&self, order: usize) -> Result<Vec<(usize, usize)>> {
        let groups = self.same_or_adjacent_groups(order)?;
        let mut pairs = Vec::new();
        for group in &groups {
            for (k, &x) in group.iter().enumerate() {
                for &y in &group[k + 1..] {
                    pairs.push((x, y));
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        Ok(pairs)
    }

    /// Maps a 2-D point through `F_w` (used for geometric checks).
    pub fn apply_word(&self, addr: &CellAddress, point: [f64; 2]) -> [f64; 2] {
        let mut x = point;
        for &s in addr.0.iter().rev() {
            let q = self.corners[s as usize - 1];
            x = [0.5 * (x[0] + q[0]), 0.5 * (x[1] + q[1])];
        }
        x
    }
}
