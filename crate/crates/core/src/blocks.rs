//! Integer codes for fixed-length blocks over a finite alphabet.
//!
//! A block `(s_0, ..., s_{n-1})` over an alphabet of size `q` is stored as the
//! base-`q` integer with `s_0` as the most significant digit, so code order is
//! lexicographic block order.

use crate::error::{Error, Result};

/// Default cap on the number of blocks an exact enumeration may touch.
pub const DEFAULT_ENUM_CAP: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BlockSpace {
    pub q: usize,
    pub n: usize,
}

impl BlockSpace {
    pub fn new(q: usize, n: usize) -> Self {
        BlockSpace { q, n }
    }

    /// Number of blocks as an exact integer (may exceed `usize`).
    pub fn count(&self) -> u128 {
        let mut c: u128 = 1;
        for _ in 0..self.n {
            c = c.saturating_mul(self.q as u128);
        }
        c
    }

    /// Number of blocks, failing when it exceeds `cap`.
    pub fn size_capped(&self, cap: usize) -> Result<usize> {
        let c = self.count();
        if c > cap as u128 {
            return Err(Error::EnumerationLimit { requested: c, cap });
        }
        Ok(c as usize)
    }

    /// Number of blocks, failing only if the codes do not fit in `usize`.
    pub fn size(&self) -> Result<usize> {
        self.size_capped(usize::MAX)
    }

    pub fn encode(&self, block: &[usize]) -> usize {
        debug_assert_eq!(block.len(), self.n);
        block.iter().fold(0usize, |acc, &s| acc * self.q + s)
    }

    pub fn decode(&self, mut code: usize) -> Vec<usize> {
        let mut out = vec![0; self.n];
        for slot in out.iter_mut().rev() {
            *slot = code % self.q;
            code /= self.q;
        }
        out
    }

    /// Checks that a block has the right length and in-range symbols.
    pub fn check(&self, block: &[usize]) -> Result<()> {
        if block.len() != self.n {
            return Err(Error::LengthMismatch { expected: self.n, got: block.len() });
        }
        if let Some(&s) = block.iter().find(|&&s| s >= self.q) {
            return Err(Error::OutOfRange { index: s, size: self.q });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_order() {
        let sp = BlockSpace::new(3, 4);
        assert_eq!(sp.count(), 81);
        for c in 0..81 {
            assert_eq!(sp.encode(&sp.decode(c)), c);
        }
        assert!(sp.decode(5) < sp.decode(6));
        assert_eq!(sp.decode(1), vec![0, 0, 0, 1]);
    }

    #[test]
    fn cap_is_enforced() {
        let sp = BlockSpace::new(2, 21);
        assert!(matches!(sp.size_capped(DEFAULT_ENUM_CAP), Err(Error::EnumerationLimit { .. })));
        assert_eq!(BlockSpace::new(2, 20).size_capped(DEFAULT_ENUM_CAP).unwrap(), 1 << 20);
    }
}
