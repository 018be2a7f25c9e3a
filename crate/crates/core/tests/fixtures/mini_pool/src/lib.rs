pub const BUF_CAP: usize = 16;

/// Fixed-capacity byte buffer.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Buf {
    pub data: [u8; BUF_CAP],
    pub len: usize,
}

impl Buf {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_slice(bytes: &[u8]) -> Self {
        let mut b = Self::new();
        b.data[..bytes.len()].copy_from_slice(bytes);
        b.len = bytes.len();
        b
    }
}

pub mod hashing {
    pub const FNV_OFFSET: u32 = 2166136261;
    pub const FNV_PRIME: u32 = 16777619;
}
