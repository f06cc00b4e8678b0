//! CRC-8/SAE-J1850: polynomial 0x1D, init 0xFF, final XOR 0xFF, unreflected.

const POLY: u8 = 0x1D;
const INIT: u8 = 0xFF;
const XOR_OUT: u8 = 0xFF;

const TABLE: [u8; 256] = build_table();

const fn build_table() -> [u8; 256] {
    let mut table = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        let mut c = i as u8;
        let mut bit = 0;
        while bit < 8 {
            c = if c & 0x80 != 0 { (c << 1) ^ POLY } else { c << 1 };
            bit += 1;
        }
        table[i] = c;
        i += 1;
    }
    table
}

/// Incremental CRC over several byte slices.
#[derive(Debug, Clone, Copy)]
pub struct Crc8 {
    state: u8,
}

impl Default for Crc8 {
    fn default() -> Self {
        Self { state: INIT }
    }
}

impl Crc8 {
    pub fn update(&mut self, bytes: &[u8]) -> &mut Self {
        for &b in bytes {
            self.state = TABLE[(self.state ^ b) as usize];
        }
        self
    }

    pub fn finish(&self) -> u8 {
        self.state ^ XOR_OUT
    }
}

pub fn crc8_sae_j1850(bytes: &[u8]) -> u8 {
    Crc8::default().update(bytes).finish()
}
