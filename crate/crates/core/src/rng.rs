//! Counter-based random streams.
//!
//! Every draw is a pure function of `(seed, stream_id, counter)`, computed with
//! the Philox4x32-10 block cipher: the seed is the 64-bit key, the counter and
//! stream id fill the 128-bit counter block. Realization `m` of any
//! parametrized family reads stream `m`, so two parameter values evaluated at
//! the same index see the same underlying numbers, whatever order or thread
//! they are evaluated on.

use crate::special;

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = (a as u64) * (b as u64);
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with 10 rounds.
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// Mixes a domain tag into a seed so that distinct purposes (training draws,
/// observation synthesis, design corners...) read unrelated streams.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let out = philox4x32_10(
        [tag as u32, (tag >> 32) as u32, 0x5EED_0000, 0],
        [seed as u32, (seed >> 32) as u32],
    );
    (out[0] as u64) << 32 | out[1] as u64
}

/// Position in the counter-based generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RandomStream {
    pub seed: u64,
    pub stream_id: u64,
    pub counter: u64,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id, counter: 0 }
    }

    /// Same seed and stream, positioned at `counter`.
    pub fn at(self, counter: u64) -> Self {
        Self { counter, ..self }
    }

    /// Raw 64 bits at the current position.
    pub fn bits(&self) -> u64 {
        let out = philox4x32_10(
            [
                self.counter as u32,
                (self.counter >> 32) as u32,
                self.stream_id as u32,
                (self.stream_id >> 32) as u32,
            ],
            [self.seed as u32, (self.seed >> 32) as u32],
        );
        (out[0] as u64) << 32 | out[1] as u64
    }

    /// Uniform on the open interval (0, 1), 53 bits of resolution.
    pub fn open01(&self) -> f64 {
        ((self.bits() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_open01(&mut self) -> f64 {
        let u = self.open01();
        self.counter += 1;
        u
    }

    pub fn next_uniform_pm_sqrt3(&mut self) -> f64 {
        let z = uniform_pm_sqrt3(self);
        self.counter += 1;
        z
    }

    pub fn next_standard_normal(&mut self) -> f64 {
        let z = standard_normal(self);
        self.counter += 1;
        z
    }
}

/// Uniform variate on `[-sqrt(3), sqrt(3)]` (zero mean, unit variance).
pub fn uniform_pm_sqrt3(stream: &RandomStream) -> f64 {
    3f64.sqrt() * (2.0 * stream.open01() - 1.0)
}

/// Standard normal variate by inversion of the uniform at the same position,
/// so one draw consumes exactly one counter value.
pub fn standard_normal(stream: &RandomStream) -> f64 {
    special::normal_quantile(stream.open01())
}
