//! Counter-based normal variates.
//!
//! Every variate is a pure function of `(seed, path_id, index)`: the
//! Philox4x32-10 block cipher maps the counter `(index / 2, path_id)` under
//! the key `seed` to 128 random bits, each 64-bit half becomes a uniform on
//! the open interval `(0, 1)` and is pushed through the inverse normal CDF.
//! Paths can therefore be generated in any order, on any number of workers,
//! and always come out bit-identical.

use statrs::function::erf::erfc_inv;

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = a as u64 * b as u64;
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with 10 rounds.
#[inline]
pub fn philox4x32(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
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

/// Maps 64 random bits to a uniform in the open interval `(0, 1)`.
#[inline]
pub fn open_uniform(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal quantile.
#[inline]
pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Deterministic stream of standard normals for one path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NormalStream {
    key: [u32; 2],
    path_id: u64,
}

impl NormalStream {
    pub fn new(seed: u64, path_id: u64) -> Self {
        NormalStream {
            key: [seed as u32, (seed >> 32) as u32],
            path_id,
        }
    }

    #[inline]
    fn block(&self, block: u64) -> [u64; 2] {
        let out = philox4x32(
            [
                block as u32,
                (block >> 32) as u32,
                self.path_id as u32,
                (self.path_id >> 32) as u32,
            ],
            self.key,
        );
        [
            out[0] as u64 | (out[1] as u64) << 32,
            out[2] as u64 | (out[3] as u64) << 32,
        ]
    }

    /// The `index`-th variate of the stream.
    pub fn normal(&self, index: u64) -> f64 {
        let bits = self.block(index / 2)[(index % 2) as usize];
        normal_quantile(open_uniform(bits))
    }

    /// Fills `out` with variates `0..out.len()`.
    pub fn fill(&self, out: &mut [f64]) {
        for (block, pair) in out.chunks_mut(2).enumerate() {
            let bits = self.block(block as u64);
            for (slot, b) in pair.iter_mut().zip(bits) {
                *slot = normal_quantile(open_uniform(b));
            }
        }
    }
}

/// Mixes `salt` into `seed` (SplitMix64 finalizer), giving independent
/// streams for runs that share a base seed.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(7, 8);
        assert_eq!(a, derive_seed(7, 8));
        assert_ne!(a, derive_seed(7, 16));
        assert_ne!(a, derive_seed(8, 8));
    }

    // Known-answer vectors distributed with Random123.
    #[test]
    fn philox_known_answers() {
        assert_eq!(
            philox4x32([0, 0, 0, 0], [0, 0]),
            [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]
        );
        assert_eq!(
            philox4x32([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]
        );
        assert_eq!(
            philox4x32(
                [0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344],
                [0xa409_3822, 0x299f_31d0]
            ),
            [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x2412_6ea1]
        );
    }

    #[test]
    fn quantile_matches_known_values() {
        assert!(normal_quantile(0.5).abs() < 1e-15);
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-13);
        assert!((normal_quantile(1e-10) + 6.361_340_902_404_056).abs() < 1e-10);
    }

    #[test]
    fn fill_matches_indexed_access() {
        let s = NormalStream::new(42, 7);
        let mut buf = vec![0.0; 11];
        s.fill(&mut buf);
        for (i, v) in buf.iter().enumerate() {
            assert_eq!(*v, s.normal(i as u64));
        }
    }

    #[test]
    fn streams_differ_by_path_and_seed() {
        let a = NormalStream::new(1, 0).normal(0);
        assert_ne!(a, NormalStream::new(1, 1).normal(0));
        assert_ne!(a, NormalStream::new(2, 0).normal(0));
        assert_eq!(a, NormalStream::new(1, 0).normal(0));
    }

    #[test]
    fn sample_moments() {
        let s = NormalStream::new(2024, 3);
        let mut buf = vec![0.0; 200_000];
        s.fill(&mut buf);
        let n = buf.len() as f64;
        let mean = buf.iter().sum::<f64>() / n;
        let var = buf.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let kurt = buf.iter().map(|x| x.powi(4)).sum::<f64>() / n;
        assert!(mean.abs() < 4.0 / n.sqrt());
        assert!((var - 1.0).abs() < 5.0 * (2.0 / n).sqrt());
        assert!((kurt - 3.0).abs() < 5.0 * (96.0 / n).sqrt());
    }
}
