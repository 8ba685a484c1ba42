//! Hierarchical nets of the unit ball built from nested cube grids.
//!
//! Level `i >= 1` consists of the centers of the cubes of side
//! `s_i = 2 rho_i / sqrt(d)` (with `rho_i = 2^-i`) whose interior meets the
//! open unit ball. Cube half-diagonals are `rho_i`, so every point of the
//! ball is within `rho_i` of its level-`i` point, and distinct level-`i`
//! points are at least `s_i` apart, a packing radius of `rho_i / sqrt(d)`.
//! Each level-`i` cube splits into `2^d` level-`(i+1)` cubes, so the parent
//! of a point is its nearest point one level up, found by halving integer
//! coordinates. Half-integer placement keeps every level disjoint from every
//! other. Level 0 is the origin alone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::{norm, sq_dist};

/// Deepest level supported; keeps integer arithmetic exact.
pub const MAX_LEVEL: usize = 40;

/// A net point, identified by its level and integer cube index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NetPoint {
    pub level: u32,
    pub grid: Vec<i64>,
}

impl NetPoint {
    pub fn root(dim: usize) -> Self {
        NetPoint {
            level: 0,
            grid: vec![0; dim],
        }
    }

    pub fn level(&self) -> usize {
        self.level as usize
    }

    /// Injective byte encoding: level then each index, little-endian.
    pub fn bucket_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 8 * self.grid.len());
        out.extend_from_slice(&self.level.to_le_bytes());
        for g in &self.grid {
            out.extend_from_slice(&g.to_le_bytes());
        }
        out
    }
}

/// The family `L_0, ..., L_T` of nets in dimension `dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetFamily {
    dim: usize,
    depth: usize,
}

fn floor_div2(a: i64) -> i64 {
    a.div_euclid(2)
}

impl NetFamily {
    pub fn new(dim: usize, depth: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if depth > MAX_LEVEL {
            return Err(Error::LevelOutOfRange {
                level: depth,
                max: MAX_LEVEL,
            });
        }
        Ok(NetFamily { dim, depth })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Deepest level `T`.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Covering radius `2^-i`.
    pub fn rho(&self, level: usize) -> f64 {
        0.5f64.powi(level as i32)
    }

    /// Packing constant: distinct level-`i` points are at least
    /// `2 gamma rho_i` apart.
    pub fn gamma(&self) -> f64 {
        1.0 / (self.dim as f64).sqrt()
    }

    /// Cube side at `level >= 1`.
    pub fn cell(&self, level: usize) -> f64 {
        2.0 * self.rho(level) / (self.dim as f64).sqrt()
    }

    /// `floor((1 + 2/gamma)^d)`, the branching bound.
    pub fn branching_bound(&self) -> u64 {
        let b = (1.0 + 2.0 / self.gamma()).powi(self.dim as i32);
        if b >= u64::MAX as f64 {
            u64::MAX
        } else {
            b.floor() as u64
        }
    }

    fn check_level(&self, level: usize) -> Result<()> {
        if level > self.depth {
            return Err(Error::LevelOutOfRange {
                level,
                max: self.depth,
            });
        }
        Ok(())
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    pub fn root(&self) -> NetPoint {
        NetPoint::root(self.dim)
    }

    pub fn coords(&self, z: &NetPoint) -> Vec<f64> {
        if z.level == 0 {
            return vec![0.0; self.dim];
        }
        let s = self.cell(z.level());
        z.grid.iter().map(|&g| (g as f64 + 0.5) * s).collect()
    }

    /// Whether `z` belongs to `L_level(z)`.
    pub fn contains(&self, z: &NetPoint) -> bool {
        if z.grid.len() != self.dim || z.level() > self.depth {
            return false;
        }
        if z.level == 0 {
            return z.grid.iter().all(|&g| g == 0);
        }
        // The cube's nearest point to the origin has squared norm
        // s^2 * sum a_j^2; it meets the open ball iff 4 rho^2 sum a_j^2 < d.
        let sum: u128 = z
            .grid
            .iter()
            .map(|&g| {
                let a = if g >= 0 { g as i128 } else { -(g as i128) - 1 };
                (a * a) as u128
            })
            .sum();
        sum < (self.dim as u128) << (2 * (z.level() - 1))
    }

    fn round_cell(&self, level: usize, x: &[f64]) -> NetPoint {
        let scale = (self.dim as f64).sqrt() * 2f64.powi(level as i32 - 1);
        let grid = x
            .iter()
            .map(|&v| {
                let u = v * scale;
                let f = u.floor();
                // On a cube boundary take the cube nearer the origin.
                if u == f && u >= 0.0 {
                    f as i64 - 1
                } else {
                    f as i64
                }
            })
            .collect();
        NetPoint {
            level: level as u32,
            grid,
        }
    }

    /// Closest point of `L_level` to `x`.
    pub fn decode(&self, level: usize, x: &[f64]) -> Result<NetPoint> {
        self.check_level(level)?;
        self.check_dim(x)?;
        if level == 0 {
            return Ok(self.root());
        }
        let z = self.round_cell(level, x);
        if self.contains(&z) {
            return Ok(z);
        }
        // Only reachable for points outside the ball.
        let mut r = 2.0 * self.rho(level);
        loop {
            let cands = self.enumerate_ball(level, x, r)?;
            if let Some(best) = cands
                .into_iter()
                .map(|c| (sq_dist(&self.coords(&c), x), c))
                .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)))
            {
                return Ok(best.1);
            }
            r *= 2.0;
        }
    }

    /// Nearest point one level up.
    pub fn parent(&self, z: &NetPoint) -> Result<NetPoint> {
        if z.level == 0 {
            return Err(Error::LevelOutOfRange { level: 0, max: 0 });
        }
        if z.level == 1 {
            return Ok(self.root());
        }
        Ok(NetPoint {
            level: z.level - 1,
            grid: z.grid.iter().map(|&g| floor_div2(g)).collect(),
        })
    }

    /// Representative chain of `x`: element `i` is `Psi_i(...Psi_T(x))`.
    pub fn chain(&self, x: &[f64]) -> Result<Vec<NetPoint>> {
        self.check_dim(x)?;
        let nx = norm(x);
        if nx > 1.0 + 1e-9 {
            return Err(Error::OutsideBall(nx));
        }
        let mut chain = vec![self.decode(self.depth, x)?];
        while chain.last().unwrap().level > 0 {
            let p = self.parent(chain.last().unwrap())?;
            chain.push(p);
        }
        chain.reverse();
        Ok(chain)
    }

    /// All level-`level` points within distance `r` of `x`, in lexicographic order.
    pub fn enumerate_ball(&self, level: usize, x: &[f64], r: f64) -> Result<Vec<NetPoint>> {
        self.check_level(level)?;
        self.check_dim(x)?;
        if level == 0 {
            return Ok(if norm(x) <= r {
                vec![self.root()]
            } else {
                Vec::new()
            });
        }
        let s = self.cell(level);
        let r2 = r * r * (1.0 + 1e-12);
        let lo: Vec<i64> = x.iter().map(|&v| ((v - r) / s - 0.5).ceil() as i64).collect();
        let hi: Vec<i64> = x.iter().map(|&v| ((v + r) / s - 0.5).floor() as i64).collect();
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        let mut idx = lo.clone();
        loop {
            let z = NetPoint {
                level: level as u32,
                grid: idx.clone(),
            };
            if self.contains(&z) && sq_dist(&self.coords(&z), x) <= r2 {
                out.push(z);
            }
            let mut j = self.dim;
            loop {
                if j == 0 {
                    return Ok(out);
                }
                j -= 1;
                idx[j] += 1;
                if idx[j] <= hi[j] {
                    break;
                }
                idx[j] = lo[j];
            }
        }
    }

    /// Every point of `L_level`.
    pub fn level_points(&self, level: usize) -> Result<Vec<NetPoint>> {
        let r = 1.0 + self.rho(level);
        self.enumerate_ball(level, &vec![0.0; self.dim], r)
    }

    /// Points of `L_{level+1}` whose parent is `z`, in lexicographic order.
    pub fn children(&self, z: &NetPoint) -> Result<Vec<NetPoint>> {
        if !self.contains(z) {
            return Err(Error::InvalidParameter(format!("{z:?} is not a net point")));
        }
        let level = z.level();
        if level >= self.depth {
            return Err(Error::LevelOutOfRange {
                level: level + 1,
                max: self.depth,
            });
        }
        if level == 0 {
            return self.level_points(1);
        }
        let mut out = Vec::with_capacity(1 << self.dim.min(16));
        let mut bits = vec![0i64; self.dim];
        loop {
            let c = NetPoint {
                level: z.level + 1,
                grid: z.grid.iter().zip(&bits).map(|(g, b)| 2 * g + b).collect(),
            };
            if self.contains(&c) {
                out.push(c);
            }
            let mut j = self.dim;
            loop {
                if j == 0 {
                    return Ok(out);
                }
                j -= 1;
                if bits[j] == 0 {
                    bits[j] = 1;
                    break;
                }
                bits[j] = 0;
            }
        }
    }

    /// Upper bound on `|L_level|`: the number of cubes in the bounding box.
    pub fn level_size_bound(&self, level: usize) -> u64 {
        if level == 0 {
            return 1;
        }
        let per_axis = (2.0 * (1.0 + self.rho(level)) / self.cell(level)).ceil() + 1.0;
        let b = per_axis.powi(self.dim as i32);
        if b >= u64::MAX as f64 {
            u64::MAX
        } else {
            b as u64
        }
    }
}
