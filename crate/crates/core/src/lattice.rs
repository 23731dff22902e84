//! Regular lattices with four- or eight-nearest neighborhoods, optionally
//! wrapped on a torus. Sites are indexed row-major: `site = row * cols + col`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SgflmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborhoodKind {
    FourNearest,
    EightNearest,
}

impl std::str::FromStr for NeighborhoodKind {
    type Err = SgflmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "four_nearest" | "4" => Ok(NeighborhoodKind::FourNearest),
            "eight_nearest" | "8" => Ok(NeighborhoodKind::EightNearest),
            other => Err(SgflmError::InvalidArgument(format!(
                "unknown neighborhood kind {other:?}"
            ))),
        }
    }
}

/// The serializable part of a lattice; neighbor lists are rebuilt from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub rows: usize,
    pub cols: usize,
    pub wrap: bool,
    pub neighborhood_kind: NeighborhoodKind,
}

impl Default for LatticeSpec {
    fn default() -> Self {
        LatticeSpec {
            rows: 20,
            cols: 20,
            wrap: true,
            neighborhood_kind: NeighborhoodKind::FourNearest,
        }
    }
}

impl LatticeSpec {
    pub fn build(&self) -> Result<Lattice> {
        build_lattice(self.rows, self.cols, self.wrap, self.neighborhood_kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    spec: LatticeSpec,
    neighbors: Vec<Vec<usize>>,
}

pub fn build_lattice(
    rows: usize,
    cols: usize,
    wrap: bool,
    neighborhood_kind: NeighborhoodKind,
) -> Result<Lattice> {
    if rows == 0 || cols == 0 {
        return Err(SgflmError::InvalidArgument(format!(
            "lattice dimensions must be positive, got {rows}x{cols}"
        )));
    }
    if wrap && (rows < 3 || cols < 3) {
        return Err(SgflmError::InvalidArgument(format!(
            "a torus needs at least 3 rows and 3 columns, got {rows}x{cols}"
        )));
    }
    let offsets: &[(isize, isize)] = match neighborhood_kind {
        NeighborhoodKind::FourNearest => &[(-1, 0), (0, -1), (0, 1), (1, 0)],
        NeighborhoodKind::EightNearest => &[
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ],
    };
    let (r, c) = (rows as isize, cols as isize);
    let mut neighbors = Vec::with_capacity(rows * cols);
    for u in 0..r {
        for v in 0..c {
            let mut list = Vec::with_capacity(offsets.len());
            for &(du, dv) in offsets {
                let (mut nu, mut nv) = (u + du, v + dv);
                if wrap {
                    nu = nu.rem_euclid(r);
                    nv = nv.rem_euclid(c);
                } else if nu < 0 || nu >= r || nv < 0 || nv >= c {
                    continue;
                }
                list.push((nu * c + nv) as usize);
            }
            list.sort_unstable();
            list.dedup();
            neighbors.push(list);
        }
    }
    Ok(Lattice {
        spec: LatticeSpec {
            rows,
            cols,
            wrap,
            neighborhood_kind,
        },
        neighbors,
    })
}

impl Lattice {
    pub fn spec(&self) -> LatticeSpec {
        self.spec
    }

    pub fn rows(&self) -> usize {
        self.spec.rows
    }

    pub fn cols(&self) -> usize {
        self.spec.cols
    }

    pub fn num_sites(&self) -> usize {
        self.neighbors.len()
    }

    pub fn site(&self, row: usize, col: usize) -> usize {
        row * self.spec.cols + col
    }

    /// Neighbor indices of site `i`, sorted ascending.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Each unordered neighbor pair `{i, j}` once, with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn neighbor_sum(&self, values: &[f64], i: usize) -> Result<f64> {
        if values.len() != self.num_sites() {
            return Err(SgflmError::InvalidArgument(format!(
                "{} values for a lattice of {} sites",
                values.len(),
                self.num_sites()
            )));
        }
        if i >= self.num_sites() {
            return Err(SgflmError::InvalidArgument(format!(
                "site {i} out of range for {} sites",
                self.num_sites()
            )));
        }
        Ok(self.neighbors[i].iter().map(|&j| values[j]).sum())
    }
}
