//! Hypercubic lattices (k = 1 or 2 at desk scale) with Manhattan distance.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A set of site indices, sorted and deduplicated.
pub type Region = BTreeSet<usize>;

pub fn region<I: IntoIterator<Item = usize>>(sites: I) -> Region {
    sites.into_iter().collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Open,
    Periodic,
}

/// `k`-dimensional lattice of linear size `l`; site `x + l*y` has coordinates `(x, y)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    pub k: usize,
    pub l: usize,
    pub n: usize,
    pub boundary: Boundary,
}

impl Lattice {
    pub fn new(k: usize, l: usize, boundary: Boundary) -> Result<Self> {
        if k == 0 || l == 0 {
            return Err(Error::InvalidArgument(format!("lattice needs k >= 1 and L >= 1, got k={k}, L={l}")));
        }
        let n = l
            .checked_pow(k as u32)
            .ok_or_else(|| Error::InvalidArgument("lattice too large".into()))?;
        Ok(Self { k, l, n, boundary })
    }

    pub fn chain(l: usize) -> Self {
        Self::new(1, l, Boundary::Open).expect("valid chain")
    }

    pub fn square(l: usize) -> Self {
        Self::new(2, l, Boundary::Open).expect("valid square lattice")
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn coords(&self, site: usize) -> Vec<usize> {
        let mut rest = site;
        (0..self.k)
            .map(|_| {
                let c = rest % self.l;
                rest /= self.l;
                c
            })
            .collect()
    }

    pub fn site(&self, coords: &[usize]) -> usize {
        coords.iter().rev().fold(0, |acc, &c| acc * self.l + c)
    }

    fn axis_distance(&self, a: usize, b: usize) -> usize {
        let d = a.abs_diff(b);
        match self.boundary {
            Boundary::Open => d,
            Boundary::Periodic => d.min(self.l - d),
        }
    }

    /// Manhattan distance between two sites.
    pub fn distance(&self, a: usize, b: usize) -> usize {
        let ca = self.coords(a);
        let cb = self.coords(b);
        ca.iter().zip(&cb).map(|(&x, &y)| self.axis_distance(x, y)).sum()
    }

    pub fn neighbors(&self, site: usize) -> Vec<usize> {
        let c = self.coords(site);
        let mut out = Vec::with_capacity(2 * self.k);
        for axis in 0..self.k {
            for step in [-1i64, 1] {
                let v = c[axis] as i64 + step;
                let v = if v < 0 || v >= self.l as i64 {
                    match self.boundary {
                        Boundary::Open => continue,
                        Boundary::Periodic => v.rem_euclid(self.l as i64),
                    }
                } else {
                    v
                };
                let mut nc = c.clone();
                nc[axis] = v as usize;
                let s = self.site(&nc);
                if s != site && !out.contains(&s) {
                    out.push(s);
                }
            }
        }
        out
    }

    pub fn all(&self) -> Region {
        (0..self.n).collect()
    }

    pub fn complement(&self, r: &Region) -> Region {
        (0..self.n).filter(|s| !r.contains(s)).collect()
    }

    pub fn check(&self, r: &Region) -> Result<()> {
        match r.iter().next_back() {
            Some(&s) if s >= self.n => Err(Error::LatticeMismatch),
            _ => Ok(()),
        }
    }

    /// All sites of `r` or within distance `radius` of it.
    pub fn dilate(&self, r: &Region, radius: usize) -> Region {
        let mut out = r.clone();
        let mut frontier: Vec<usize> = r.iter().copied().collect();
        for _ in 0..radius {
            let mut next = Vec::new();
            for &s in &frontier {
                for nb in self.neighbors(s) {
                    if out.insert(nb) {
                        next.push(nb);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        out
    }

    /// Minimum site distance between two regions; `None` means infinite
    /// (one of the regions is empty).
    pub fn region_distance(&self, r1: &Region, r2: &Region) -> Result<Option<usize>> {
        self.check(r1)?;
        self.check(r2)?;
        if r1.is_empty() || r2.is_empty() {
            return Ok(None);
        }
        let mut dist = vec![usize::MAX; self.n];
        let mut queue = VecDeque::new();
        for &s in r1 {
            dist[s] = 0;
            queue.push_back(s);
        }
        while let Some(s) = queue.pop_front() {
            if r2.contains(&s) {
                return Ok(Some(dist[s]));
            }
            for nb in self.neighbors(s) {
                if dist[nb] == usize::MAX {
                    dist[nb] = dist[s] + 1;
                    queue.push_back(nb);
                }
            }
        }
        Ok(None)
    }

    /// Whether `region_distance(r1, r2) >= min` (infinite distance passes).
    pub fn separated(&self, r1: &Region, r2: &Region, min: usize) -> bool {
        matches!(self.region_distance(r1, r2), Ok(None)) || matches!(self.region_distance(r1, r2), Ok(Some(d)) if d >= min)
    }

    /// Connected components of `r` under nearest-neighbor adjacency.
    pub fn components(&self, r: &Region) -> Vec<Region> {
        let mut seen = Region::new();
        let mut out = Vec::new();
        for &start in r {
            if seen.contains(&start) {
                continue;
            }
            let mut comp = Region::new();
            let mut queue = VecDeque::from([start]);
            seen.insert(start);
            while let Some(s) = queue.pop_front() {
                comp.insert(s);
                for nb in self.neighbors(s) {
                    if r.contains(&nb) && seen.insert(nb) {
                        queue.push_back(nb);
                    }
                }
            }
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self, r: &Region) -> bool {
        self.components(r).len() <= 1
    }

    /// Connected and, for open 2D lattices, without enclosed holes.
    pub fn is_simply_connected(&self, r: &Region) -> bool {
        if !self.is_connected(r) {
            return false;
        }
        if self.k < 2 || self.boundary == Boundary::Periodic {
            return true;
        }
        let rest = self.complement(r);
        self.components(&rest).iter().all(|comp| {
            comp.iter().any(|&s| self.coords(s).iter().any(|&c| c == 0 || c + 1 == self.l))
        })
    }

    /// Side length of the smallest axis-aligned box (arc, when periodic) holding `r`.
    pub fn extent(&self, r: &Region) -> usize {
        if r.is_empty() {
            return 0;
        }
        (0..self.k)
            .map(|axis| {
                let mut present = vec![false; self.l];
                for &s in r {
                    present[self.coords(s)[axis]] = true;
                }
                match self.boundary {
                    Boundary::Open => {
                        let lo = present.iter().position(|&p| p).unwrap_or(0);
                        let hi = present.iter().rposition(|&p| p).unwrap_or(0);
                        hi - lo + 1
                    }
                    Boundary::Periodic => {
                        // the longest circular run of empty coordinates is excluded
                        let mut best_gap = 0;
                        let mut run = 0;
                        for i in 0..2 * self.l {
                            if present[i % self.l] {
                                run = 0;
                            } else {
                                run += 1;
                                best_gap = best_gap.max(run.min(self.l));
                            }
                        }
                        self.l - best_gap
                    }
                }
            })
            .max()
            .unwrap_or(0)
    }
}
