//! Counter-based keyed random numbers.
//!
//! Every random quantity in the crate is a pure function of a 64-bit key and
//! a counter, so lazily extended environments and replays never depend on
//! evaluation order. The mixer is the splitmix64 finalizer applied twice;
//! it is fast and statistically solid for simulation but not
//! cryptographically secure.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// splitmix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// A keyed stream: `bits(counter)` is a pure function of `(key, counter)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct KeyedStream {
    key: u64,
}

impl KeyedStream {
    /// Stream derived from a seed and a tag naming its purpose
    /// (`"environment"`, `"walk"`, ...).
    pub fn new(seed: u64, tag: &str) -> Self {
        Self {
            key: mix64(seed ^ mix64(fnv1a(tag))),
        }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    #[inline]
    pub fn bits(&self, counter: u64) -> u64 {
        let first = mix64(self.key ^ counter.wrapping_mul(GOLDEN_GAMMA));
        mix64(first.wrapping_add(self.key))
    }

    /// Uniform number in `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn unit(&self, counter: u64) -> f64 {
        (self.bits(counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Sequential cursor over the stream starting at counter 0.
    pub fn cursor(self) -> Cursor {
        Cursor {
            stream: self,
            counter: 0,
        }
    }
}

/// Sequential reader over a [`KeyedStream`].
#[derive(Clone, Debug)]
pub struct Cursor {
    stream: KeyedStream,
    counter: u64,
}

impl Cursor {
    #[inline]
    pub fn next_unit(&mut self) -> f64 {
        let u = self.stream.unit(self.counter);
        self.counter += 1;
        u
    }
}

/// Seed for the `index`-th child task of `seed` (replicas, census runs).
pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    KeyedStream::new(seed, tag).bits(index)
}
