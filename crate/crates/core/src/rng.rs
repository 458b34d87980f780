//! Deterministic random substreams.
//!
//! Every random quantity is addressed by `(seed, domain, index)`, so results do
//! not depend on the order in which parallel workers consume them.

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Multiplier draws of the effect bootstrap (indexed by draw).
pub const DOMAIN_MULTIPLIER: u64 = 1;
/// Multiplier draws of the sup-score test (indexed by draw).
pub const DOMAIN_SUP_SCORE: u64 = 2;
/// Simulated datasets (indexed by replication).
pub const DOMAIN_DGP: u64 = 3;
/// Per-replication bootstrap seeds.
pub const DOMAIN_REPLICATION_SEED: u64 = 4;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn substream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut state = seed ^ domain.wrapping_mul(0xD1B5_4A32_D192_ED03);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Derives an independent child seed.
pub fn derive_seed(seed: u64, domain: u64, index: u64) -> u64 {
    let mut state = seed ^ domain.wrapping_mul(0xD1B5_4A32_D192_ED03);
    let a = splitmix64(&mut state);
    let mut s2 = a ^ index.wrapping_mul(0x2545_F491_4F6C_DD1D);
    splitmix64(&mut s2)
}

/// Source of the per-observation multipliers `g_i` of one bootstrap draw.
pub trait Multipliers: Sync {
    fn fill(&self, draw: usize, out: &mut [f64]);
}

/// I.i.d. standard normal multipliers, one substream per draw.
#[derive(Debug, Clone, Copy)]
pub struct GaussianMultipliers {
    pub seed: u64,
    pub domain: u64,
}

impl Multipliers for GaussianMultipliers {
    fn fill(&self, draw: usize, out: &mut [f64]) {
        let mut rng = substream(self.seed, self.domain, draw as u64);
        out.iter_mut().for_each(|g| *g = rng.sample::<f64, _>(StandardNormal));
    }
}

/// Every multiplier equal to one value. Used to probe the bootstrap algebra.
#[derive(Debug, Clone, Copy)]
pub struct ConstantMultipliers(pub f64);

impl Multipliers for ConstantMultipliers {
    fn fill(&self, _draw: usize, out: &mut [f64]) {
        out.fill(self.0);
    }
}

/// `out[b, m] = sum_i g_i^b u[i, m]` for `draws` multiplier vectors.
///
/// Multiplier rows are generated in parallel; each row comes from its own
/// substream, so the result does not depend on the thread count.
pub fn multiplier_sums(u: ArrayView2<f64>, draws: usize, source: &dyn Multipliers) -> Array2<f64> {
    let n = u.nrows();
    let mut g = Array2::<f64>::zeros((draws, n));
    g.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(b, mut row)| {
            source.fill(b, row.as_slice_mut().expect("row-major"));
        });
    g.dot(&u)
}
