use alloc::vec::Vec;

/// MSB-first bit writer.
#[derive(Default)]
pub(crate) struct BitWriter {
    bytes: Vec<u8>,
    acc: u64,
    pending: u32,
    total: u64,
}

impl BitWriter {
    pub(crate) fn new() -> Self {
        Self::default()
    }

    /// Appends the low `len` bits of `value`, most significant first.
    pub(crate) fn write(&mut self, value: u64, len: u32) {
        debug_assert!(len <= 64);
        if len > 32 {
            self.write_small(value >> 32, len - 32);
            self.write_small(value & 0xffff_ffff, 32);
        } else {
            self.write_small(value, len);
        }
    }

    fn write_small(&mut self, value: u64, len: u32) {
        if len == 0 {
            return;
        }
        let mask = (1u64 << len) - 1;
        self.acc = (self.acc << len) | (value & mask);
        self.pending += len;
        self.total += u64::from(len);
        while self.pending >= 8 {
            self.pending -= 8;
            self.bytes.push((self.acc >> self.pending) as u8);
        }
        self.acc &= (1u64 << self.pending) - 1;
    }

    /// Returns the bytes (last byte zero-padded) and the exact bit count.
    pub(crate) fn finish(mut self) -> (Vec<u8>, u64) {
        if self.pending > 0 {
            self.bytes.push((self.acc << (8 - self.pending)) as u8);
        }
        (self.bytes, self.total)
    }
}

/// MSB-first bit reader bounded by an explicit bit count.
pub(crate) struct BitReader<'a> {
    bytes: &'a [u8],
    pos: u64,
    limit: u64,
}

impl<'a> BitReader<'a> {
    pub(crate) fn new(bytes: &'a [u8], limit: u64) -> Self {
        Self { bytes, pos: 0, limit }
    }

    #[inline]
    pub(crate) fn read_bit(&mut self) -> Option<u64> {
        if self.pos >= self.limit {
            return None;
        }
        let byte = *self.bytes.get((self.pos >> 3) as usize)?;
        let bit = (byte >> (7 - (self.pos & 7))) & 1;
        self.pos += 1;
        Some(u64::from(bit))
    }

    pub(crate) fn position(&self) -> u64 {
        self.pos
    }
}
