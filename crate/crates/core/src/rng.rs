//! Counter-based Gaussian source.
//!
//! Every normal draw is a pure function of `(seed, path, step, component)`,
//! computed with Philox4x32-10. Simulating path `p` therefore gives the same
//! numbers whatever the batching or worker count.

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

/// Step index reserved for draws that precede the time grid (prior values).
pub const PRIOR_STEP: u32 = u32::MAX;

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let prod = (a as u64) * (b as u64);
    ((prod >> 32) as u32, prod as u32)
}

/// Philox4x32 with 10 rounds.
#[inline]
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut ctr = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, ctr[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ k[0], lo1, hi0 ^ ctr[3] ^ k[1], lo0];
    }
    ctr
}

/// SplitMix64 finalizer, used to derive sub-seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent seed for job `index` of stream `stream` under `seed`.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    mix64(mix64(seed ^ mix64(stream)) ^ index)
}

/// Keyed, stateless standard-normal generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CounterNormal {
    key: [u32; 2],
}

impl CounterNormal {
    pub fn new(seed: u64) -> Self {
        Self {
            key: [seed as u32, (seed >> 32) as u32],
        }
    }

    /// Two independent uniforms in (0, 1] with 53 bits each.
    #[inline]
    fn uniform_pair(&self, path: u64, step: u32, block: u32) -> (f64, f64) {
        let out = philox4x32_10([path as u32, (path >> 32) as u32, step, block], self.key);
        let a = ((out[0] as u64) << 32) | out[1] as u64;
        let b = ((out[2] as u64) << 32) | out[3] as u64;
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (
            ((a >> 11) + 1) as f64 * SCALE,
            ((b >> 11) + 1) as f64 * SCALE,
        )
    }

    /// The pair of normals sharing one Philox block (components `2*block`, `2*block+1`).
    #[inline]
    pub fn normal_pair(&self, path: u64, step: u32, block: u32) -> (f64, f64) {
        let (u1, u2) = self.uniform_pair(path, step, block);
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        (r * c, r * s)
    }

    #[inline]
    pub fn normal(&self, path: u64, step: u32, component: u32) -> f64 {
        let (a, b) = self.normal_pair(path, step, component / 2);
        if component.is_multiple_of(2) {
            a
        } else {
            b
        }
    }

    /// Fill `out` with the standard normals of `(path, step, 0..out.len())`.
    #[inline]
    pub fn fill(&self, path: u64, step: u32, out: &mut [f64]) {
        for (block, chunk) in out.chunks_mut(2).enumerate() {
            let (a, b) = self.normal_pair(path, step, block as u32);
            chunk[0] = a;
            if chunk.len() > 1 {
                chunk[1] = b;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Known-answer vectors published with the Random123 library.
    #[test]
    fn philox_known_answers() {
        assert_eq!(
            philox4x32_10([0, 0, 0, 0], [0, 0]),
            [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]
        );
        assert_eq!(
            philox4x32_10([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]
        );
        assert_eq!(
            philox4x32_10(
                [0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344],
                [0xa409_3822, 0x299f_31d0]
            ),
            [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x2412_6ea1]
        );
    }

    #[test]
    fn normals_are_a_pure_function_of_the_counter() {
        let g = CounterNormal::new(42);
        let a = g.normal(7, 3, 1);
        let b = CounterNormal::new(42).normal(7, 3, 1);
        assert_eq!(a.to_bits(), b.to_bits());
        assert_ne!(a, g.normal(7, 3, 0));
        assert_ne!(a, CounterNormal::new(43).normal(7, 3, 1));
    }

    #[test]
    fn normal_moments() {
        let g = CounterNormal::new(1);
        let n = 200_000u64;
        let (mut s1, mut s2) = (0.0, 0.0);
        for p in 0..n {
            let v = g.normal(p, 0, 0);
            s1 += v;
            s2 += v * v;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
        assert!(
            (var - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt(),
            "var {var}"
        );
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0, 0), derive_seed(1, 0, 1));
        assert_ne!(derive_seed(1, 0, 0), derive_seed(1, 1, 0));
        assert_eq!(derive_seed(9, 2, 3), derive_seed(9, 2, 3));
    }
}
