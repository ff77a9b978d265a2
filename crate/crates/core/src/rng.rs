//! Seeded random streams.
//!
//! Each run owns one stream per source of randomness so that, for example, a
//! policy drawing extra random numbers never shifts the arrival sample path.

use rand::{Error as RandError, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent sources of randomness inside one simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Arrivals,
    Channel,
    Contention,
    Policy,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Arrivals => 0,
            Stream::Channel => 1,
            Stream::Contention => 2,
            Stream::Policy => 3,
        }
    }
}

/// A deterministic ChaCha8 stream keyed by `(seed, stream)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: Stream,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: Stream) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream.id());
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> Stream {
        self.stream
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), RandError> {
        self.inner.try_fill_bytes(dest)
    }
}

/// The full set of streams used by one run.
#[derive(Debug, Clone)]
pub struct RunRng {
    pub arrivals: RngStream,
    pub channel: RngStream,
    pub contention: RngStream,
    pub policy: RngStream,
}

impl RunRng {
    pub fn new(seed: u64) -> Self {
        Self {
            arrivals: RngStream::new(seed, Stream::Arrivals),
            channel: RngStream::new(seed, Stream::Channel),
            contention: RngStream::new(seed, Stream::Contention),
            policy: RngStream::new(seed, Stream::Policy),
        }
    }
}

/// Mixes a base seed with sub-indices (sweep point, replication, ...) into a
/// new 64-bit seed. SplitMix64 finalizer.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut z = base;
    for &p in parts {
        z = z
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(p.wrapping_mul(0xD1B5_4A32_D192_ED03));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}
