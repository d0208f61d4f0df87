//! Deterministic stand-in for training: error falls with model size plus
//! reproducible architecture and seed noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::record::{ModelRecord, Source};
use crate::archspace::Family;
use crate::space::Architecture;

/// Error drop per unit of `ln(params)`.
pub const PARAMS_SLOPE: f64 = 1.2;
/// Spread of the per-architecture quality term.
pub const ARCH_NOISE: f64 = 1.5;
/// Spread of the per-seed term.
pub const SEED_NOISE: f64 = 0.3;

const REF_LOG_PARAMS: f64 = 11.512_925_464_970_229; // ln(1e5)

fn base(arch: &Architecture) -> f64 {
    match arch.family() {
        Some(Family::Vanilla) => 14.0,
        Some(Family::ResNet) => 11.0,
        Some(Family::ResNeXt) => 10.0,
        None => 9.0,
    }
}

fn rng_from(parts: &[&[u8]]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    ChaCha8Rng::from_seed(h.finalize().into())
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Synthetic error in percent, clamped to `[1, 95]`.
///
/// `base(family) - PARAMS_SLOPE * ln(params / 1e5)` plus a normal term fixed
/// by the architecture and a smaller one fixed by `(architecture, seed)`.
/// The sum passes through a softplus floor at 1 before the clamp, so large
/// models approach 1 without piling up on it as ties. `flops` only enters
/// through the architecture hash.
pub fn synthetic_error(arch: &Architecture, flops: u64, params: u64, seed: u64) -> f64 {
    assert!(flops > 0 && params > 0, "complexity must be positive");
    let canon = serde_json::to_vec(arch).expect("architectures serialize");
    let arch_noise = Normal::new(0.0, ARCH_NOISE).unwrap().sample(&mut rng_from(&[
        &canon,
        &flops.to_le_bytes(),
        &params.to_le_bytes(),
    ]));
    let seed_noise = Normal::new(0.0, SEED_NOISE)
        .unwrap()
        .sample(&mut rng_from(&[&canon, &seed.to_le_bytes()]));
    let raw = base(arch) - PARAMS_SLOPE * ((params as f64).ln() - REF_LOG_PARAMS) + arch_noise + seed_noise;
    (1.0 + softplus(raw - 1.0)).clamp(1.0, 95.0)
}

/// Fills in a synthetic error and marks the record as such.
pub fn evaluate_synthetic(record: &mut ModelRecord) {
    record.error = Some(synthetic_error(&record.arch, record.flops, record.params, record.seed));
    record.source = Source::Synthetic;
}
