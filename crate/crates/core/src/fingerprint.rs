//! Stable 64-bit FNV-1a fingerprints of numeric buffers.

const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone)]
pub struct Fingerprint(u64);

impl Default for Fingerprint {
    fn default() -> Self {
        Fingerprint(OFFSET)
    }
}

impl Fingerprint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, bytes: &[u8]) -> &mut Self {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(PRIME);
        }
        self
    }

    pub fn floats<'a>(&mut self, values: impl IntoIterator<Item = &'a f64>) -> &mut Self {
        for v in values {
            self.bytes(&v.to_le_bytes());
        }
        self
    }

    pub fn finish(&self) -> u64 {
        self.0
    }

    /// Lower-case 16-digit hex rendering.
    pub fn hex(&self) -> String {
        format!("{:016x}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_fnv1a_vector() {
        // FNV-1a 64 of "a".
        assert_eq!(Fingerprint::new().bytes(b"a").finish(), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn order_sensitive() {
        let a = Fingerprint::new().floats(&[1.0, 2.0]).finish();
        let b = Fingerprint::new().floats(&[2.0, 1.0]).finish();
        assert_ne!(a, b);
    }
}
