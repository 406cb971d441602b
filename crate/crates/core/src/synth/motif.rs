use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotifKind {
    Cycle { len: usize },
    Grid { rows: usize, cols: usize },
    /// Positions: 0 roof, 1-2 upper corners, 3-4 bottom corners.
    House,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotifLabeling {
    Uniform(usize),
    /// Class of each motif position.
    RoleBased(Vec<usize>),
}

impl MotifLabeling {
    pub fn class_at(&self, position: usize) -> usize {
        match self {
            MotifLabeling::Uniform(c) => *c,
            MotifLabeling::RoleBased(map) => map[position],
        }
    }

    pub fn max_class(&self) -> usize {
        match self {
            MotifLabeling::Uniform(c) => *c,
            MotifLabeling::RoleBased(map) => map.iter().copied().max().unwrap_or(0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotifSpec {
    pub kind: MotifKind,
    pub labeling: MotifLabeling,
}

impl MotifSpec {
    pub fn cycle(len: usize, labeling: MotifLabeling) -> Self {
        MotifSpec {
            kind: MotifKind::Cycle { len },
            labeling,
        }
    }

    pub fn grid(rows: usize, cols: usize, labeling: MotifLabeling) -> Self {
        MotifSpec {
            kind: MotifKind::Grid { rows, cols },
            labeling,
        }
    }

    /// House with roof, upper and bottom corners labelled 1, 2 and 3.
    pub fn house() -> Self {
        MotifSpec {
            kind: MotifKind::House,
            labeling: MotifLabeling::RoleBased(vec![1, 2, 2, 3, 3]),
        }
    }

    pub fn size(&self) -> usize {
        match self.kind {
            MotifKind::Cycle { len } => len,
            MotifKind::Grid { rows, cols } => rows * cols,
            MotifKind::House => 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            MotifKind::Cycle { len } if len < 3 => {
                return Err(Error::InvalidConfig(format!("cycle length {len} is below 3")))
            }
            MotifKind::Grid { rows, cols } if rows == 0 || cols == 0 || rows * cols < 2 => {
                return Err(Error::InvalidConfig(format!("degenerate {rows}x{cols} grid")))
            }
            _ => {}
        }
        if let MotifLabeling::RoleBased(map) = &self.labeling {
            if map.len() != self.size() {
                return Err(Error::InvalidConfig(format!(
                    "role map has {} entries for a motif of {} positions",
                    map.len(),
                    self.size()
                )));
            }
        }
        Ok(())
    }

    /// Internal edges over local positions `0..size()`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        match self.kind {
            MotifKind::Cycle { len } => (0..len).map(|i| (i, (i + 1) % len)).collect(),
            MotifKind::Grid { rows, cols } => {
                let id = |r: usize, c: usize| r * cols + c;
                let mut e = Vec::new();
                for r in 0..rows {
                    for c in 0..cols {
                        if c + 1 < cols {
                            e.push((id(r, c), id(r, c + 1)));
                        }
                        if r + 1 < rows {
                            e.push((id(r, c), id(r + 1, c)));
                        }
                    }
                }
                e
            }
            MotifKind::House => vec![(0, 1), (0, 2), (1, 2), (1, 3), (2, 4), (3, 4)],
        }
    }
}
