//! Dataset composition: uniform downsampling, synthetic/real mixing and
//! train/validation splits. Everything is deterministic in its seed.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lidar::LabeledPointCloud;

/// Moves a uniformly chosen k-subset of `items` to the front, in draw order
/// (partial Fisher–Yates).
fn shuffle_prefix<T>(items: &mut [T], k: usize, rng: &mut impl Rng) {
    let n = items.len();
    for i in 0..k.min(n) {
        let j = rng.random_range(i..n);
        items.swap(i, j);
    }
}

/// Keeps `k` points chosen uniformly without replacement, in input order.
/// Returns the cloud unchanged when `k >= n`.
pub fn downsample(cloud: &LabeledPointCloud, k: usize, seed: u64) -> LabeledPointCloud {
    let n = cloud.len();
    if k >= n {
        return cloud.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    shuffle_prefix(&mut idx, k, &mut rng);
    let mut chosen = idx[..k].to_vec();
    chosen.sort_unstable();
    cloud.select(&chosen)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixSpec {
    #[serde(default = "default_total")]
    pub total: usize,
    #[serde(default = "default_fraction")]
    pub synthetic_fraction: f64,
    #[serde(default)]
    pub real: Vec<PathBuf>,
    #[serde(default)]
    pub synthetic: Vec<PathBuf>,
}

fn default_total() -> usize {
    10_000
}
fn default_fraction() -> f64 {
    0.5
}

impl MixSpec {
    /// Number of synthetic entries, `⌊total · fraction⌋`.
    pub fn synthetic_count(&self) -> usize {
        // The nudge keeps products like 100 × 0.29 from flooring to 28.
        let exact = self.total as f64 * self.synthetic_fraction;
        ((exact + 1e-9 * exact.max(1.0)).floor() as usize).min(self.total)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.synthetic_fraction) {
            return Err(Error::InvalidMix(format!(
                "synthetic_fraction must be in [0, 1], got {}",
                self.synthetic_fraction
            )));
        }
        let syn = self.synthetic_count();
        if syn > self.synthetic.len() {
            return Err(Error::InvalidMix(format!(
                "{syn} unique synthetic clouds needed but the pool has {}",
                self.synthetic.len()
            )));
        }
        if self.total > syn && self.real.is_empty() {
            return Err(Error::InvalidMix(format!(
                "{} real entries needed but the real pool is empty",
                self.total - syn
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Synthetic,
    Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixEntry {
    pub path: PathBuf,
    pub origin: Origin,
    pub count: usize,
}

/// Distinct files of a mixed dataset with their repetition counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixPlan {
    pub entries: Vec<MixEntry>,
}

impl MixPlan {
    /// The full list: synthetic files once each, then the real pool cycled.
    pub fn expanded(&self) -> Vec<PathBuf> {
        let mut out: Vec<PathBuf> = self
            .entries
            .iter()
            .filter(|e| e.origin == Origin::Synthetic)
            .map(|e| e.path.clone())
            .collect();
        let real: Vec<&MixEntry> = self.entries.iter().filter(|e| e.origin == Origin::Real).collect();
        let rounds = real.iter().map(|e| e.count).max().unwrap_or(0);
        for round in 0..rounds {
            out.extend(real.iter().filter(|e| e.count > round).map(|e| e.path.clone()));
        }
        out
    }

    pub fn total(&self) -> usize {
        self.entries.iter().map(|e| e.count).sum()
    }
}

/// Mixes unique synthetic clouds with an oversampled real pool.
///
/// The synthetic share is sampled without replacement. The real share is
/// filled by cycling a seeded shuffle of the real pool, so real multiplicities
/// differ by at most one.
pub fn mix_datasets(spec: &MixSpec, seed: u64) -> Result<MixPlan> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let syn_n = spec.synthetic_count();
    let mut synthetic = spec.synthetic.clone();
    shuffle_prefix(&mut synthetic, syn_n, &mut rng);
    let mut entries: Vec<MixEntry> = synthetic
        .into_iter()
        .take(syn_n)
        .map(|path| MixEntry {
            path,
            origin: Origin::Synthetic,
            count: 1,
        })
        .collect();

    let real_n = spec.total - syn_n;
    if real_n > 0 {
        let mut real = spec.real.clone();
        let m = real.len();
        shuffle_prefix(&mut real, m, &mut rng);
        let (base, extra) = (real_n / m, real_n % m);
        entries.extend(
            real.into_iter()
                .enumerate()
                .map(|(i, path)| MixEntry {
                    path,
                    origin: Origin::Real,
                    count: base + usize::from(i < extra),
                })
                .filter(|e| e.count > 0),
        );
    }
    Ok(MixPlan { entries })
}

/// Deterministic train/validation partition. Both halves keep the input
/// order.
pub fn split_dataset(files: &[PathBuf], val_count: usize, seed: u64) -> (Vec<PathBuf>, Vec<PathBuf>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..files.len()).collect();
    let val_count = val_count.min(files.len());
    shuffle_prefix(&mut idx, val_count, &mut rng);
    let mut in_val = vec![false; files.len()];
    for &i in &idx[..val_count] {
        in_val[i] = true;
    }
    let (val, train): (Vec<_>, Vec<_>) = files.iter().cloned().zip(in_val).partition(|(_, v)| *v);
    (
        train.into_iter().map(|(p, _)| p).collect(),
        val.into_iter().map(|(p, _)| p).collect(),
    )
}
