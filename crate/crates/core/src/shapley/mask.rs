use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// A coalition `S` of `n` players stored as a bitset (bit `i` set when
/// feature `i` is present).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CoalitionMask {
    n: usize,
    words: Vec<u64>,
    cardinality: usize,
}

impl CoalitionMask {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            words: vec![0; n.div_ceil(64)],
            cardinality: 0,
        }
    }

    pub fn full(n: usize) -> Self {
        let mut m = Self::empty(n);
        for i in 0..n {
            m.insert(i);
        }
        m
    }

    pub fn from_indices(n: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut m = Self::empty(n);
        for i in indices {
            if i >= n {
                return Err(Error::invalid(alloc::format!("player {i} out of range for {n} players")));
            }
            m.insert(i);
        }
        Ok(m)
    }

    /// Coalition from the low `n` bits of an integer (`n <= 64`).
    pub fn from_bits(n: usize, bits: u64) -> Self {
        debug_assert!(n <= 64);
        let bits = if n == 64 { bits } else { bits & ((1u64 << n) - 1) };
        let mut words = vec![0; n.div_ceil(64)];
        if let Some(w) = words.first_mut() {
            *w = bits;
        }
        Self {
            n,
            words,
            cardinality: bits.count_ones() as usize,
        }
    }

    pub fn players(&self) -> usize {
        self.n
    }

    pub fn cardinality(&self) -> usize {
        self.cardinality
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.n && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn insert(&mut self, i: usize) {
        assert!(i < self.n, "player {i} out of range");
        let (w, b) = (i / 64, 1u64 << (i % 64));
        if self.words[i / 64] & b == 0 {
            self.words[w] |= b;
            self.cardinality += 1;
        }
    }

    pub fn remove(&mut self, i: usize) {
        assert!(i < self.n, "player {i} out of range");
        let (w, b) = (i / 64, 1u64 << (i % 64));
        if self.words[w] & b != 0 {
            self.words[w] &= !b;
            self.cardinality -= 1;
        }
    }

    /// `N \ S`.
    pub fn complement(&self) -> Self {
        let mut words: Vec<u64> = self.words.iter().map(|w| !w).collect();
        let spare = words.len() * 64 - self.n;
        if spare > 0 {
            if let Some(last) = words.last_mut() {
                *last &= u64::MAX >> spare;
            }
        }
        Self {
            n: self.n,
            words,
            cardinality: self.n - self.cardinality,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&i| self.contains(i))
    }

    /// Indicator vector `1_S` as floats.
    pub fn indicator(&self) -> Vec<f64> {
        (0..self.n).map(|i| if self.contains(i) { 1.0 } else { 0.0 }).collect()
    }
}

impl fmt::Debug for CoalitionMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, i) in self.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{i}")?;
        }
        f.write_str("}")
    }
}
