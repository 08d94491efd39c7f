//! Deterministic, splittable random streams.
//!
//! Every consumer of randomness in an episode asks for its own substream,
//! addressed by a [`Domain`] and up to three integer keys (step, agent, cell,
//! rollout index, ...). Substreams are derived by mixing the keys into a
//! 64-bit seed with SplitMix64 and seeding a ChaCha8 generator from it, so
//! the draws a consumer sees never depend on how many draws any other
//! consumer made or on the order in which consumers run.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator type handed to every consumer.
pub type SimRng = ChaCha8Rng;

/// Consumer families. The discriminant is part of the derived seed, so
/// values must never be renumbered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Domain {
    Kernel = 1,
    Arbitration = 2,
    Channel = 3,
    SchedulerMc = 4,
    Priorities = 5,
    Tasks = 6,
    Starts = 7,
    Planner = 8,
    Shadowing = 9,
    Decision = 10,
    Rollout = 11,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Root of a tree of substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    root: u64,
}

impl Streams {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Mixes the keys into a 64-bit seed.
    pub fn key(&self, domain: Domain, a: u64, b: u64, c: u64) -> u64 {
        let mut h = splitmix64(self.root ^ 0xA076_1D64_78BD_642F);
        for k in [domain as u64, a, b, c] {
            h = splitmix64(h ^ k);
        }
        h
    }

    pub fn stream(&self, domain: Domain, a: u64, b: u64, c: u64) -> SimRng {
        SimRng::seed_from_u64(self.key(domain, a, b, c))
    }

    /// A child tree, used for nested simulations such as Monte-Carlo rollouts.
    pub fn child(&self, domain: Domain, a: u64, b: u64, c: u64) -> Streams {
        Streams::new(self.key(domain, a, b, c))
    }
}
