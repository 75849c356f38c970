//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream keyed by
//! `(seed, purpose, index)`, so results do not depend on evaluation order
//! or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{dot, FactorMatrix};

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over the tag bytes, folded through splitmix.
fn tag_hash(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(h)
}

/// Derives a 64-bit stream key from `(seed, tag, index)`.
pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ tag_hash(tag)).wrapping_add(splitmix64(index)))
}

pub fn substream(seed: u64, tag: &str, index: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tag, index))
}

/// `d × r` factor with iid `N(0, std²)` entries.
pub fn gaussian_factor(d: usize, r: usize, std: f64, rng: &mut StreamRng) -> FactorMatrix {
    FactorMatrix::from_fn(d, r, |_, _| {
        let g: f64 = StandardNormal.sample(rng);
        std * g
    })
}

/// `n × k` matrix with orthonormal columns (Gram–Schmidt on a Gaussian draw).
pub fn random_orthonormal(n: usize, k: usize, rng: &mut StreamRng) -> FactorMatrix {
    assert!(k <= n);
    loop {
        let g = gaussian_factor(n, k, 1.0, rng);
        let mut cols: Vec<Vec<f64>> = (0..k).map(|c| (0..n).map(|i| g.get(i, c)).collect()).collect();
        let mut ok = true;
        for c in 0..k {
            for prev in 0..c {
                let (head, tail) = cols.split_at_mut(c);
                let proj = dot(&tail[0], &head[prev]);
                for (x, y) in tail[0].iter_mut().zip(&head[prev]) {
                    *x -= proj * y;
                }
            }
            let nrm = dot(&cols[c], &cols[c]).sqrt();
            if nrm < 1e-8 {
                ok = false;
                break;
            }
            cols[c].iter_mut().for_each(|x| *x /= nrm);
        }
        if ok {
            return FactorMatrix::from_fn(n, k, |i, c| cols[c][i]);
        }
    }
}
