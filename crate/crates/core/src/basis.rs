//! Constrained computational basis of the PXP chain.
//!
//! A configuration is an `N`-bit mask where bit `j` set means site `j` is
//! excited (`•`, σ^z up). Sites are numbered from 0. No two neighbouring sites
//! may both be excited; with periodic boundaries sites `N-1` and `0` are
//! neighbours too. The allowed masks form the Fibonacci cube (open chain) or
//! the Lucas cube (ring), of dimension `F(N+2)` and `L(N)` respectively.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};

/// Largest chain length accepted by [`Basis::new`].
pub const MAX_SITES: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Obc,
    Pbc,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Boundary::Obc => "obc",
            Boundary::Pbc => "pbc",
        })
    }
}

impl std::str::FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "obc" => Ok(Boundary::Obc),
            "pbc" => Ok(Boundary::Pbc),
            other => arg(format!("unknown boundary condition `{other}` (expected obc or pbc)")),
        }
    }
}

/// A bitmask over the chain; bit `j` is site `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpinConfig(pub u64);

impl SpinConfig {
    #[inline]
    pub fn bit(self, site: usize) -> bool {
        (self.0 >> site) & 1 == 1
    }

    #[inline]
    pub fn flipped(self, site: usize) -> SpinConfig {
        SpinConfig(self.0 ^ (1 << site))
    }

    /// Whether the mask respects the blockade constraint for `n` sites.
    pub fn is_allowed(self, n: usize, boundary: Boundary) -> bool {
        if n < 64 && self.0 >> n != 0 {
            return false;
        }
        if self.0 & (self.0 >> 1) != 0 {
            return false;
        }
        match boundary {
            Boundary::Obc => true,
            Boundary::Pbc => !(n > 1 && self.bit(0) && self.bit(n - 1)),
        }
    }

    /// Binary string with site 0 leftmost.
    pub fn to_bitstring(self, n: usize) -> String {
        (0..n).map(|j| if self.bit(j) { '1' } else { '0' }).collect()
    }
}

/// Ordered list of allowed configurations, ascending by mask value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    n: usize,
    boundary: Boundary,
    configs: Vec<u64>,
}

impl Basis {
    pub fn new(n: usize, boundary: Boundary) -> Result<Self> {
        if n == 0 {
            return arg("number of sites must be at least 1");
        }
        if boundary == Boundary::Pbc && n < 3 {
            return arg(format!("periodic chains need at least 3 sites, got {n}"));
        }
        if n > MAX_SITES {
            return arg(format!("number of sites {n} exceeds the supported maximum {MAX_SITES}"));
        }
        let mut configs = Vec::with_capacity(fibonacci(n + 2) as usize);
        // Depth-first from the most significant site, trying 0 before 1, emits
        // masks in ascending order.
        fn descend(remaining: usize, mask: u64, above_set: bool, out: &mut Vec<u64>) {
            if remaining == 0 {
                out.push(mask);
                return;
            }
            let j = remaining - 1;
            descend(j, mask, false, out);
            if !above_set {
                descend(j, mask | (1 << j), true, out);
            }
        }
        descend(n, 0, false, &mut configs);
        if boundary == Boundary::Pbc {
            let wrap = 1u64 | (1u64 << (n - 1));
            configs.retain(|&c| c & wrap != wrap);
        }
        Ok(Basis { n, boundary, configs })
    }

    #[inline]
    pub fn n_sites(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.configs.len()
    }

    #[inline]
    pub fn config(&self, index: usize) -> SpinConfig {
        SpinConfig(self.configs[index])
    }

    pub fn configs(&self) -> impl ExactSizeIterator<Item = SpinConfig> + '_ {
        self.configs.iter().map(|&c| SpinConfig(c))
    }

    pub fn rank(&self, config: SpinConfig) -> Result<usize> {
        self.configs
            .binary_search(&config.0)
            .map_err(|_| Error::Lookup { config: config.0 })
    }

    /// Same as [`Basis::rank`] but returns `None` for masks outside the basis.
    #[inline]
    pub fn find(&self, config: SpinConfig) -> Option<usize> {
        self.configs.binary_search(&config.0).ok()
    }

    /// Whether two bases describe the same constrained space.
    #[inline]
    pub fn same_space(&self, other: &Basis) -> bool {
        self.n == other.n && self.boundary == other.boundary
    }

    /// Sites adjacent to `site` under this basis' boundary rule.
    pub fn neighbours(&self, site: usize) -> impl Iterator<Item = usize> {
        let n = self.n;
        let left = if site > 0 {
            Some(site - 1)
        } else if self.boundary == Boundary::Pbc {
            Some(n - 1)
        } else {
            None
        };
        let right = if site + 1 < n {
            Some(site + 1)
        } else if self.boundary == Boundary::Pbc {
            Some(0)
        } else {
            None
        };
        left.into_iter().chain(right)
    }

    /// The state with excitations on even 0-based sites, `•∘•∘…`. Requires even `n`.
    pub fn neel_config(&self) -> Result<SpinConfig> {
        if self.n % 2 != 0 {
            return arg(format!("neel requires even N, got N = {}", self.n));
        }
        Ok(SpinConfig((0..self.n).step_by(2).fold(0u64, |m, j| m | (1 << j))))
    }

    pub fn bipartition(&self, cut: usize) -> Result<BipartitionMap> {
        BipartitionMap::new(self, cut)
    }
}

/// Fibonacci numbers with `F(1) = F(2) = 1`.
pub fn fibonacci(k: usize) -> u64 {
    let (mut a, mut b) = (0u64, 1u64);
    for _ in 0..k {
        (a, b) = (b, a + b);
    }
    a
}

/// Lucas numbers with `L(1) = 1`, `L(2) = 3`.
pub fn lucas(k: usize) -> u64 {
    let (mut a, mut b) = (2u64, 1u64);
    for _ in 0..k {
        (a, b) = (b, a + b);
    }
    a
}

/// Split of the chain into sites `0..cut` and `cut..N`, each described by an
/// open-chain basis.
#[derive(Debug, Clone)]
pub struct BipartitionMap {
    cut: usize,
    left: Basis,
    right: Basis,
    pairs: Vec<(u32, u32)>,
}

impl BipartitionMap {
    pub fn new(parent: &Basis, cut: usize) -> Result<Self> {
        let n = parent.n_sites();
        if cut == 0 || cut >= n {
            return arg(format!("cut must satisfy 1 <= cut <= N-1 = {}, got {cut}", n - 1));
        }
        let left = Basis::new(cut, Boundary::Obc)?;
        let right = Basis::new(n - cut, Boundary::Obc)?;
        let low_mask = (1u64 << cut) - 1;
        let pairs = parent
            .configs()
            .map(|c| {
                let l = left.rank(SpinConfig(c.0 & low_mask))?;
                let r = right.rank(SpinConfig(c.0 >> cut))?;
                Ok((l as u32, r as u32))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BipartitionMap { cut, left, right, pairs })
    }

    #[inline]
    pub fn cut(&self) -> usize {
        self.cut
    }

    #[inline]
    pub fn left(&self) -> &Basis {
        &self.left
    }

    #[inline]
    pub fn right(&self) -> &Basis {
        &self.right
    }

    /// `(left index, right index)` for every parent basis index.
    #[inline]
    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    /// Reassemble the parent configuration of a pair.
    pub fn join(&self, left: usize, right: usize) -> SpinConfig {
        SpinConfig(self.left.config(left).0 | (self.right.config(right).0 << self.cut))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(n: usize, boundary: Boundary) -> Vec<u64> {
        (0..1u64 << n)
            .filter(|&c| SpinConfig(c).is_allowed(n, boundary))
            .collect()
    }

    fn strings(b: &Basis) -> Vec<String> {
        b.configs().map(|c| c.to_bitstring(b.n_sites())).collect()
    }

    #[test]
    fn four_site_open_chain() {
        let b = Basis::new(4, Boundary::Obc).unwrap();
        assert_eq!(b.dim(), 8);
        // masks 0,1,2,4,5,8,9,10 printed with site 0 leftmost
        let expected: Vec<u64> = vec![0b0000, 0b0001, 0b0010, 0b0100, 0b0101, 0b1000, 0b1001, 0b1010];
        assert_eq!(b.configs().map(|c| c.0).collect::<Vec<_>>(), expected);
        assert_eq!(strings(&b)[4], "1010");
    }

    #[test]
    fn four_site_ring_drops_wrapped_pair() {
        let b = Basis::new(4, Boundary::Pbc).unwrap();
        assert_eq!(b.dim(), 7);
        assert!(b.find(SpinConfig(0b1001)).is_none());
    }

    #[test]
    fn single_site() {
        let b = Basis::new(1, Boundary::Obc).unwrap();
        assert_eq!(b.configs().map(|c| c.0).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn invalid_sizes() {
        assert!(matches!(Basis::new(0, Boundary::Obc), Err(Error::Argument(_))));
        assert!(matches!(Basis::new(2, Boundary::Pbc), Err(Error::Argument(_))));
        assert!(Basis::new(3, Boundary::Pbc).is_ok());
    }

    #[test]
    fn rank_examples() {
        let b = Basis::new(4, Boundary::Obc).unwrap();
        assert_eq!(b.rank(SpinConfig(0)).unwrap(), 0);
        assert_eq!(b.rank(SpinConfig(0b1010)).unwrap(), 7);
        assert_eq!(b.rank(SpinConfig(0b0011)), Err(Error::Lookup { config: 0b0011 }));
    }

    #[test]
    fn enumeration_matches_brute_force() {
        for n in 1..=16 {
            for bc in [Boundary::Obc, Boundary::Pbc] {
                if bc == Boundary::Pbc && n < 3 {
                    continue;
                }
                let b = Basis::new(n, bc).unwrap();
                assert_eq!(b.configs().map(|c| c.0).collect::<Vec<_>>(), brute_force(n, bc), "N={n} {bc}");
            }
        }
    }

    #[test]
    fn dimension_sequences() {
        for n in 1..=28 {
            assert_eq!(Basis::new(n, Boundary::Obc).unwrap().dim() as u64, fibonacci(n + 2));
            if n >= 3 {
                assert_eq!(Basis::new(n, Boundary::Pbc).unwrap().dim() as u64, lucas(n));
            }
        }
        assert_eq!(lucas(1), 1);
        assert_eq!(lucas(2), 3);
        assert_eq!(fibonacci(1), 1);
        assert_eq!(fibonacci(2), 1);
    }

    #[test]
    fn rank_unrank_identity() {
        let b = Basis::new(13, Boundary::Pbc).unwrap();
        for i in 0..b.dim() {
            assert_eq!(b.rank(b.config(i)).unwrap(), i);
        }
    }

    #[test]
    fn bipartition_examples() {
        let b = Basis::new(4, Boundary::Obc).unwrap();
        let m = b.bipartition(2).unwrap();
        assert_eq!((m.left().dim(), m.right().dim()), (3, 3));
        assert_eq!(m.pairs().len(), 8);
        // left `01` (site 1 set) next to right `10` (site 2 set) is the missing pair
        let l = m.left().rank(SpinConfig(0b10)).unwrap() as u32;
        let r = m.right().rank(SpinConfig(0b01)).unwrap() as u32;
        assert!(!m.pairs().contains(&(l, r)));

        let b2 = Basis::new(2, Boundary::Obc).unwrap();
        let m2 = b2.bipartition(1).unwrap();
        let mut pairs = m2.pairs().to_vec();
        pairs.sort();
        assert_eq!(pairs, vec![(0, 0), (0, 1), (1, 0)]);

        let ring = Basis::new(4, Boundary::Pbc).unwrap();
        assert_eq!(ring.bipartition(2).unwrap().pairs().len(), 7);
    }

    #[test]
    fn bipartition_reassembles_and_is_exhaustive() {
        for n in 2..=14 {
            for bc in [Boundary::Obc, Boundary::Pbc] {
                if bc == Boundary::Pbc && n < 3 {
                    continue;
                }
                let b = Basis::new(n, bc).unwrap();
                for cut in 1..n {
                    let m = b.bipartition(cut).unwrap();
                    for (i, &(l, r)) in m.pairs().iter().enumerate() {
                        assert_eq!(m.join(l as usize, r as usize), b.config(i));
                    }
                    // brute-force count of admissible (left, right) pairs
                    let count = m
                        .left()
                        .configs()
                        .flat_map(|l| m.right().configs().map(move |r| (l, r)))
                        .filter(|&(l, r)| {
                            let seam = l.bit(cut - 1) && r.bit(0);
                            let wrap = bc == Boundary::Pbc && l.bit(0) && r.bit(n - cut - 1);
                            !seam && !wrap
                        })
                        .count();
                    assert_eq!(count, b.dim());
                    assert_eq!(m.pairs().len(), b.dim());
                }
            }
        }
        assert!(Basis::new(4, Boundary::Obc).unwrap().bipartition(4).is_err());
        assert!(Basis::new(4, Boundary::Obc).unwrap().bipartition(0).is_err());
    }
}
