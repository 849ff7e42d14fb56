//! Ising Markov random field on a finite 2-D lattice, plus brute-force
//! oracles for the partition function and the exact likelihood.
//!
//! The unnormalised density is `gamma(y|theta) = exp(theta * sum_{(i,j) in
//! edges} y_i y_j)`; only `gamma` is computable at scale, the normaliser
//! `Z(theta)` is enumerable here solely because lattices are capped at
//! [`ENUMERATION_MAX_SITES`] sites.
//!
//! Site indexing is row-major throughout: site `(r, c)` has index
//! `r * cols + c`. Enumeration maps config index `s` to spins by bit `k` of
//! `s`: set bit means spin `+1` at site `k`. Fixtures depend on both
//! conventions.

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Hard cap on brute-force enumeration (2^20 configurations).
pub const ENUMERATION_MAX_SITES: usize = 20;

/// Boundary rule for the nearest-neighbour edge set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Free,
    Periodic,
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Boundary::Free => write!(f, "free"),
            Boundary::Periodic => write!(f, "periodic"),
        }
    }
}

impl std::str::FromStr for Boundary {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "free" => Ok(Boundary::Free),
            "periodic" => Ok(Boundary::Periodic),
            other => Err(format!("unknown boundary `{other}` (free|periodic)")),
        }
    }
}

/// Interaction parameter `theta` and the reference `theta_ref` anchoring the
/// base density of the bridging ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaParam {
    pub theta: f64,
    pub theta_ref: f64,
}

impl ThetaParam {
    pub fn new(theta: f64, theta_ref: f64) -> Result<Self> {
        if !theta.is_finite() {
            return Err(Error::NonFinite {
                name: "theta",
                value: theta,
            });
        }
        if !theta_ref.is_finite() {
            return Err(Error::NonFinite {
                name: "theta_ref",
                value: theta_ref,
            });
        }
        Ok(Self { theta, theta_ref })
    }
}

/// A spin configuration on a finite 2-D lattice. Doubles as observed data `y`
/// and as auxiliary chain states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeConfig {
    rows: usize,
    cols: usize,
    spins: Vec<i8>,
}

impl LatticeConfig {
    pub fn new(rows: usize, cols: usize, spins: Vec<i8>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyLattice { rows, cols });
        }
        if spins.len() != rows * cols {
            return Err(Error::SpinLength {
                len: spins.len(),
                rows,
                cols,
                expected: rows * cols,
            });
        }
        for (site, &s) in spins.iter().enumerate() {
            if s != -1 && s != 1 {
                return Err(Error::InvalidSpin { site, value: s });
            }
        }
        Ok(Self { rows, cols, spins })
    }

    /// All-(+1) configuration.
    pub fn all_plus(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            spins: vec![1; rows * cols],
        }
    }

    /// Uniform random configuration; consumes one bool per site in row-major
    /// order.
    pub fn random_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let spins = (0..rows * cols)
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect();
        Self { rows, cols, spins }
    }

    /// Configuration from an enumeration index: bit `k` set means spin `+1`
    /// at site `k`.
    pub fn from_index(rows: usize, cols: usize, index: u32) -> Self {
        let spins = (0..rows * cols)
            .map(|k| if index >> k & 1 == 1 { 1 } else { -1 })
            .collect();
        Self { rows, cols, spins }
    }

    /// Inverse of [`from_index`](Self::from_index).
    pub fn index(&self) -> u32 {
        self.spins
            .iter()
            .enumerate()
            .fold(0u32, |acc, (k, &s)| acc | (u32::from(s == 1) << k))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn sites(&self) -> usize {
        self.spins.len()
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn spin(&self, site: usize) -> i8 {
        self.spins[site]
    }

    pub(crate) fn set_spin(&mut self, site: usize, value: i8) {
        debug_assert!(value == 1 || value == -1);
        self.spins[site] = value;
    }

    /// Global spin flip (tests the gamma symmetry).
    pub fn flipped(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            spins: self.spins.iter().map(|s| -s).collect(),
        }
    }

    /// Number of sites at which `self` and `other` disagree.
    pub fn hamming_distance(&self, other: &Self) -> usize {
        self.spins
            .iter()
            .zip(&other.spins)
            .filter(|(a, b)| a != b)
            .count()
    }

    /// Compact row-major rendering, `+` for spin up, `-` for spin down.
    pub fn render(&self) -> String {
        self.spins
            .iter()
            .map(|&s| if s == 1 { '+' } else { '-' })
            .collect()
    }

    /// Parse the [`render`](Self::render) format.
    pub fn parse(rows: usize, cols: usize, text: &str) -> Result<Self> {
        let spins: Vec<i8> = text
            .chars()
            .map(|c| match c {
                '+' => Ok(1),
                '-' => Ok(-1),
                other => Err(Error::InvalidConfig {
                    field: "data",
                    reason: format!("unexpected character `{other}` (want + or -)"),
                }),
            })
            .collect::<Result<_>>()?;
        Self::new(rows, cols, spins)
    }
}

/// Lattice Ising model: dimensions, boundary rule, and the derived
/// nearest-neighbour edge list (each undirected pair exactly once).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MrfModel {
    rows: usize,
    cols: usize,
    boundary: Boundary,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl MrfModel {
    pub fn new(rows: usize, cols: usize, boundary: Boundary) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyLattice { rows, cols });
        }
        let mut edges = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let idx = |r: usize, c: usize| r * cols + c;
        for r in 0..rows {
            for c in 0..cols {
                let i = idx(r, c);
                let mut push = |j: usize| {
                    if i == j {
                        return; // wrap onto itself (1-wide periodic direction)
                    }
                    let key = (i.min(j), i.max(j));
                    if seen.insert(key) {
                        edges.push(key);
                    }
                };
                match boundary {
                    Boundary::Free => {
                        if c + 1 < cols {
                            push(idx(r, c + 1));
                        }
                        if r + 1 < rows {
                            push(idx(r + 1, c));
                        }
                    }
                    Boundary::Periodic => {
                        push(idx(r, (c + 1) % cols));
                        push(idx((r + 1) % rows, c));
                    }
                }
            }
        }
        let mut neighbors = vec![Vec::new(); rows * cols];
        for &(i, j) in &edges {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        Ok(Self {
            rows,
            cols,
            boundary,
            edges,
            neighbors,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn sites(&self) -> usize {
        self.rows * self.cols
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, site: usize) -> &[usize] {
        &self.neighbors[site]
    }

    pub fn max_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn check_dims(&self, config: &LatticeConfig) -> Result<()> {
        if config.rows() != self.rows || config.cols() != self.cols {
            return Err(Error::DimensionMismatch {
                rows: self.rows,
                cols: self.cols,
                got_rows: config.rows(),
                got_cols: config.cols(),
            });
        }
        Ok(())
    }

    pub fn check_enumerable(&self) -> Result<()> {
        if self.sites() > ENUMERATION_MAX_SITES {
            return Err(Error::LatticeTooLarge {
                sites: self.sites(),
                max: ENUMERATION_MAX_SITES,
            });
        }
        Ok(())
    }

    /// Sum of spin products over the edge list.
    pub fn edge_sum(&self, config: &LatticeConfig) -> i64 {
        self.edges
            .iter()
            .map(|&(i, j)| i64::from(config.spin(i)) * i64::from(config.spin(j)))
            .sum()
    }

    /// Edge sum for an enumeration index, without materialising the config.
    fn edge_sum_of_index(&self, s: u32) -> i64 {
        let mut diff = 0i64;
        for &(i, j) in &self.edges {
            diff += i64::from((s >> i ^ s >> j) & 1);
        }
        self.edges.len() as i64 - 2 * diff
    }

    /// Sum of neighbour spins around `site`.
    pub fn neighbor_sum(&self, config: &LatticeConfig, site: usize) -> i64 {
        self.neighbors[site]
            .iter()
            .map(|&j| i64::from(config.spin(j)))
            .sum()
    }
}

/// Log of the unnormalised density: `theta * edge_sum(config)`.
pub fn log_gamma(model: &MrfModel, config: &LatticeConfig, theta: f64) -> Result<f64> {
    model.check_dims(config)?;
    Ok(theta * model.edge_sum(config) as f64)
}

/// Exact `log Z(theta)` by enumerating all `2^sites` configurations in
/// log-sum-exp form. Only the edge-sum multiplicities matter, so the sum is
/// reduced over the (few) distinct edge sums.
pub fn exact_log_partition(model: &MrfModel, theta: f64) -> Result<f64> {
    model.check_enumerable()?;
    let n = model.sites();
    // multiplicity of each edge sum; sums lie in -E..=E
    let e = model.edges.len() as i64;
    let mut counts = vec![0u64; (2 * e + 1) as usize];
    for s in 0..1u64 << n {
        let sum = model.edge_sum_of_index(s as u32);
        counts[(sum + e) as usize] += 1;
    }
    let max_exponent = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(k, _)| theta * (k as i64 - e) as f64)
        .fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(k, &c)| c as f64 * (theta * (k as i64 - e) as f64 - max_exponent).exp())
        .sum();
    Ok(max_exponent + total.ln())
}

/// Exact likelihood `f(y|theta) = gamma(y|theta) / Z(theta)`.
pub fn exact_likelihood(model: &MrfModel, config: &LatticeConfig, theta: f64) -> Result<f64> {
    let lg = log_gamma(model, config, theta)?;
    let lz = exact_log_partition(model, theta)?;
    Ok((lg - lz).exp())
}
