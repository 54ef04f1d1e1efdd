//! Counter-based random streams.
//!
//! Every stochastic evaluation draws from a ChaCha8 stream keyed by the
//! master seed and a module tag, with the replicate index as the ChaCha
//! stream id. A replicate's draws therefore do not depend on how replicates
//! are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Random number generator used throughout the crate.
pub type SimRng = ChaCha8Rng;

/// Tag separating the streams of different experiments sharing a seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamTag {
    Coalescent,
    Fragmentation,
    Density,
    Normalizer,
    Martingale,
    Marginal,
    Importance,
    Pde,
    Comparison,
}

impl StreamTag {
    fn code(self) -> u64 {
        match self {
            StreamTag::Coalescent => 0x01,
            StreamTag::Fragmentation => 0x02,
            StreamTag::Density => 0x03,
            StreamTag::Normalizer => 0x04,
            StreamTag::Martingale => 0x05,
            StreamTag::Marginal => 0x06,
            StreamTag::Importance => 0x07,
            StreamTag::Pde => 0x08,
            StreamTag::Comparison => 0x09,
        }
    }
}

/// Full provenance of one substream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub master: u64,
    pub tag: StreamTag,
    pub index: u64,
}

impl StreamId {
    pub fn rng(&self) -> SimRng {
        Streams::new(self.master).stream(self.tag, self.index)
    }
}

/// Factory of substreams for one master seed.
#[derive(Clone, Copy, Debug)]
pub struct Streams {
    master: u64,
}

impl Streams {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn id(&self, tag: StreamTag, index: u64) -> StreamId {
        StreamId {
            master: self.master,
            tag,
            index,
        }
    }

    /// Stream `index` of the family `tag`.
    pub fn stream(&self, tag: StreamTag, index: u64) -> SimRng {
        let mut state = self.master ^ splitmix64(tag.code().wrapping_mul(0xA24B_AED4_963E_E407));
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            chunk.copy_from_slice(&splitmix64(state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(index);
        rng
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
