#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splitnet::channel::{ChannelState, GainMatrix};
use splitnet::scenario::Tier;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tiers(tn: usize, sat: usize) -> Vec<Tier> {
    let mut t = vec![Tier::Terrestrial; tn];
    t.extend(std::iter::repeat(Tier::Satellite).take(sat));
    t
}

/// Gains drawn log-uniformly in `[10^lo, 10^hi]`.
pub fn random_channel(rng: &mut impl Rng, ues: usize, tiers: &[Tier], lo: f64, hi: f64) -> ChannelState {
    let rows = (0..ues)
        .map(|_| tiers.iter().map(|_| 10f64.powf(rng.gen_range(lo..hi))).collect())
        .collect();
    ChannelState::from_gains(GainMatrix::from_rows(rows).unwrap(), tiers.to_vec()).unwrap()
}

pub fn channel(rows: Vec<Vec<f64>>, tiers: &[Tier]) -> ChannelState {
    ChannelState::from_gains(GainMatrix::from_rows(rows).unwrap(), tiers.to_vec()).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
