//! Log-strided sparse attention pattern.
//!
//! Query `i` attends to keys `i + o` for `o` in `{0} ∪ {±2^k : 0 <= k < L}`
//! with `L = floor(log2 n)`, clipped to `[0, n)`. Each query sees at most
//! `2L + 1` keys, so the whole pattern holds `O(n log n)` edges. At `n = 2`
//! this is full attention.

/// Edges in compressed-row form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pattern {
    pub n: usize,
    /// Signed offsets `j - i`, ascending.
    pub offsets: Vec<i64>,
    /// `start[i]..start[i + 1]` indexes the edges of query `i`.
    pub start: Vec<usize>,
    pub key: Vec<usize>,
    /// Index into `offsets` for each edge.
    pub offset_idx: Vec<usize>,
}

pub fn levels(n: usize) -> u32 {
    if n < 2 {
        0
    } else {
        usize::BITS - 1 - n.leading_zeros()
    }
}

pub fn signed_offsets(n: usize) -> Vec<i64> {
    let l = levels(n);
    let mut out: Vec<i64> = (0..l).map(|k| -(1i64 << k)).collect();
    out.reverse();
    out.push(0);
    out.extend((0..l).map(|k| 1i64 << k));
    out
}

impl Pattern {
    pub fn new(n: usize) -> Self {
        let offsets = signed_offsets(n);
        let mut start = Vec::with_capacity(n + 1);
        let mut key = Vec::new();
        let mut offset_idx = Vec::new();
        for i in 0..n {
            start.push(key.len());
            for (oi, &o) in offsets.iter().enumerate() {
                let j = i as i64 + o;
                if (0..n as i64).contains(&j) {
                    key.push(j as usize);
                    offset_idx.push(oi);
                }
            }
        }
        start.push(key.len());
        Pattern { n, offsets, start, key, offset_idx }
    }

    pub fn edges(&self) -> usize {
        self.key.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.key[self.start[i]..self.start[i + 1]]
    }

    pub fn max_per_query(n: usize) -> usize {
        2 * levels(n) as usize + 1
    }

    /// Closed form: `n + sum_k 2 (n - 2^k) = n (2L + 1) - 2 (2^L - 1)`.
    pub fn edge_count(n: usize) -> usize {
        let l = levels(n) as usize;
        if n == 0 {
            return 0;
        }
        n * (2 * l + 1) - 2 * ((1usize << l) - 1)
    }
}
