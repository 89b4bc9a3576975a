//! Fixed-length bit sets and bit-packed row matrices.

use serde::{Deserialize, Serialize};

const WORD: usize = 64;

#[inline]
fn words_for(len: usize) -> usize {
    len.div_ceil(WORD)
}

/// A fixed-length set of bits backed by `u64` words.
///
/// Bits past `len` in the last word are always zero, so word-wise popcounts
/// never need masking.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitSet {
    len: usize,
    words: Vec<u64>,
}

impl std::fmt::Debug for BitSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BitSet[")?;
        for i in 0..self.len {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        write!(f, "]")
    }
}

impl BitSet {
    pub fn zeros(len: usize) -> Self {
        BitSet {
            len,
            words: vec![0; words_for(len)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut s = BitSet {
            len,
            words: vec![u64::MAX; words_for(len)],
        };
        s.trim();
        s
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut s = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                s.set(i, true);
            }
        }
        s
    }

    pub fn from_indices(len: usize, idx: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::zeros(len);
        for i in idx {
            s.set(i, true);
        }
        s
    }

    fn trim(&mut self) {
        let rem = self.len % WORD;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / WORD] >> (i % WORD)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let m = 1u64 << (i % WORD);
        if v {
            self.words[i / WORD] |= m;
        } else {
            self.words[i / WORD] &= !m;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn none(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn all(&self) -> bool {
        self.count_ones() == self.len
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// `|self ∩ other|`
    pub fn and_count(&self, other: &BitSet) -> usize {
        debug_assert_eq!(self.len, other.len);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    /// `|self ∩ a ∩ b|`
    pub fn and3_count(&self, a: &BitSet, b: &BitSet) -> usize {
        self.words
            .iter()
            .zip(&a.words)
            .zip(&b.words)
            .map(|((x, y), z)| (x & y & z).count_ones() as usize)
            .sum()
    }

    pub fn and(&self, other: &BitSet) -> BitSet {
        debug_assert_eq!(self.len, other.len);
        BitSet {
            len: self.len,
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect(),
        }
    }

    /// `self ∖ other`
    pub fn and_not(&self, other: &BitSet) -> BitSet {
        debug_assert_eq!(self.len, other.len);
        BitSet {
            len: self.len,
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & !b).collect(),
        }
    }

    pub fn is_subset(&self, other: &BitSet) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// Indices of set bits in increasing order.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let tz = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * WORD + tz)
                }
            })
        })
    }

    /// Packs into bytes, least-significant bit first (bit `i` lives in byte
    /// `i / 8` at position `i % 8`).
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.len.div_ceil(8);
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            out.push((self.words[i / 8] >> ((i % 8) * 8)) as u8);
        }
        out
    }

    /// Inverse of [`BitSet::to_bytes`]. Returns `None` if the slice has the
    /// wrong length or any padding bit is set.
    pub fn from_bytes(len: usize, bytes: &[u8]) -> Option<Self> {
        if bytes.len() != len.div_ceil(8) {
            return None;
        }
        let mut s = Self::zeros(len);
        for (i, &b) in bytes.iter().enumerate() {
            s.words[i / 8] |= (b as u64) << ((i % 8) * 8);
        }
        let before = s.words.clone();
        s.trim();
        (before == s.words).then_some(s)
    }
}

/// Row-major bit matrix; each row is a [`BitSet`] of `cols` bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitMatrix {
    cols: usize,
    rows: Vec<BitSet>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        BitMatrix {
            cols,
            rows: vec![BitSet::zeros(cols); rows],
        }
    }

    pub fn from_rows(cols: usize, rows: Vec<BitSet>) -> Self {
        assert!(rows.iter().all(|r| r.len() == cols), "row length mismatch");
        BitMatrix { cols, rows }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.rows[r].get(c)
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.rows[r].set(c, v)
    }

    pub fn row(&self, r: usize) -> &BitSet {
        &self.rows[r]
    }

    pub fn rows(&self) -> &[BitSet] {
        &self.rows
    }

    /// Column `c` as a bit set over rows.
    pub fn column(&self, c: usize) -> BitSet {
        let mut s = BitSet::zeros(self.rows.len());
        for (r, row) in self.rows.iter().enumerate() {
            if row.get(c) {
                s.set(r, true);
            }
        }
        s
    }

    /// All columns, each as a bit set over rows.
    pub fn columns(&self) -> Vec<BitSet> {
        (0..self.cols).map(|c| self.column(c)).collect()
    }

    /// Rows concatenated, each packed to `ceil(cols / 8)` bytes.
    pub fn to_packed(&self) -> Vec<u8> {
        self.rows.iter().flat_map(|r| r.to_bytes()).collect()
    }

    pub fn from_packed(rows: usize, cols: usize, bytes: &[u8]) -> Option<Self> {
        let rb = cols.div_ceil(8);
        if bytes.len() != rows * rb {
            return None;
        }
        let mut out = Vec::with_capacity(rows);
        if rb == 0 {
            out.resize(rows, BitSet::zeros(cols));
        } else {
            for chunk in bytes.chunks(rb) {
                out.push(BitSet::from_bytes(cols, chunk)?);
            }
        }
        Some(BitMatrix { cols, rows: out })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ones_trims_tail() {
        let s = BitSet::ones(70);
        assert_eq!(s.count_ones(), 70);
        assert!(s.all());
        assert_eq!(s.words()[1], (1u64 << 6) - 1);
    }

    #[test]
    fn byte_order_is_lsb_first() {
        let s = BitSet::from_indices(10, [0, 9]);
        assert_eq!(s.to_bytes(), vec![0b0000_0001, 0b0000_0010]);
        assert_eq!(BitSet::from_bytes(10, &[1, 2]).unwrap(), s);
        // padding bit set
        assert!(BitSet::from_bytes(10, &[1, 0b0000_0100]).is_none());
        assert!(BitSet::from_bytes(10, &[1]).is_none());
    }

    #[test]
    fn iter_ones_crosses_words() {
        let idx = [0usize, 5, 63, 64, 127, 128, 200];
        let s = BitSet::from_indices(201, idx);
        assert_eq!(s.iter_ones().collect::<Vec<_>>(), idx);
    }

    #[test]
    fn matrix_packed_roundtrip() {
        let mut m = BitMatrix::zeros(3, 13);
        m.set(0, 0, true);
        m.set(1, 12, true);
        m.set(2, 7, true);
        let p = m.to_packed();
        assert_eq!(p.len(), 6);
        assert_eq!(BitMatrix::from_packed(3, 13, &p).unwrap(), m);
        assert_eq!(m.column(12), BitSet::from_indices(3, [1]));
    }
}
