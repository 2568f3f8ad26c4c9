//! LEB128 varints and zigzag mapping.

pub fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

pub fn unzigzag(v: u64) -> i64 {
    ((v >> 1) as i64) ^ -((v & 1) as i64)
}

pub fn put_uvarint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

pub fn put_ivarint(out: &mut Vec<u8>, v: i64) {
    put_uvarint(out, zigzag(v));
}

/// Cursor over an encoded buffer.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn uvarint(&mut self) -> Option<u64> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = *self.buf.get(self.pos)?;
            self.pos += 1;
            // the tenth byte may only carry the top bit
            if shift == 63 && b > 1 {
                return None;
            }
            v |= ((b & 0x7F) as u64) << shift;
            if b & 0x80 == 0 {
                return Some(v);
            }
        }
        None
    }

    pub fn ivarint(&mut self) -> Option<i64> {
        self.uvarint().map(unzigzag)
    }

    pub fn bytes(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zigzag_small_magnitudes_stay_small() {
        assert_eq!(zigzag(0), 0);
        assert_eq!(zigzag(-1), 1);
        assert_eq!(zigzag(1), 2);
        assert_eq!(zigzag(-2), 3);
        assert_eq!(zigzag(i64::MIN), u64::MAX);
    }

    #[test]
    fn varint_lengths() {
        let mut out = Vec::new();
        put_uvarint(&mut out, 127);
        assert_eq!(out, [0x7F]);
        out.clear();
        put_uvarint(&mut out, 300);
        assert_eq!(out, [0xAC, 0x02]);
        out.clear();
        put_uvarint(&mut out, u64::MAX);
        assert_eq!(out.len(), 10);
    }

    #[test]
    fn overlong_varint_rejected() {
        let bad = [0xFF; 11];
        assert_eq!(Reader::new(&bad).uvarint(), None);
        assert_eq!(Reader::new(&[0x80]).uvarint(), None);
    }

    proptest! {
        #[test]
        fn ivarint_round_trip(v in any::<i64>()) {
            let mut out = Vec::new();
            put_ivarint(&mut out, v);
            let mut r = Reader::new(&out);
            prop_assert_eq!(r.ivarint(), Some(v));
            prop_assert_eq!(r.remaining(), 0);
        }
    }
}
