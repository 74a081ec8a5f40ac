//! Deterministic synthetic multi-label datasets.
//!
//! Instances live on a low-dimensional latent factor; labels threshold
//! noisy linear readouts of that factor, with groups of labels sharing a
//! direction so label correlations actually exist; features are a noisy
//! random projection of the same factor.  Difficulty is controlled by the
//! feature noise and the label flip rate.
//!
//! With `clusters > 0` the latent factors are drawn around a fixed set of
//! cluster centres instead of isotropically, giving groups of highly
//! redundant instances, and an `edge_fraction` share of instances is
//! interpolated between centre pairs so it lands near label boundaries.
//! That mix of redundant and informative instances mirrors photographic
//! benchmark collections.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::MultiLabelDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub q: usize,
    /// Latent dimensionality; labels and features both read from this
    /// factor.
    pub latent: usize,
    /// Standard deviation of additive feature noise.
    pub feature_noise: f64,
    /// Probability of flipping each label bit.
    pub label_noise: f64,
    /// Target fraction of positives per label.
    pub prevalence: f64,
    /// Number of latent cluster centres; 0 draws latents isotropically.
    pub clusters: usize,
    /// Latent spread around a cluster centre.
    pub cluster_spread: f64,
    /// Fraction of instances interpolated between two centres.
    pub edge_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n: 400,
            d: 20,
            q: 6,
            latent: 8,
            feature_noise: 0.6,
            label_noise: 0.04,
            prevalence: 0.2,
            clusters: 0,
            cluster_spread: 0.3,
            edge_fraction: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// Same shape as the scene benchmark: 2407 instances, 294 features,
    /// 6 labels, with a comparable label cardinality and the redundant
    /// cluster structure of a photo collection.
    pub fn scene_shaped(seed: u64) -> Self {
        SyntheticSpec {
            n: 2407,
            d: 294,
            q: 6,
            latent: 10,
            feature_noise: 0.7,
            label_noise: 0.01,
            prevalence: 0.18,
            clusters: 24,
            cluster_spread: 0.25,
            edge_fraction: 0.35,
            seed,
        }
    }

    /// Builds a spec from a compact descriptor: the preset name `scene`,
    /// `default`, or comma-separated `key=value` overrides of the default
    /// spec (keys: n, d, q, latent, feature_noise, label_noise,
    /// prevalence, clusters, cluster_spread, edge_fraction, seed).
    pub fn from_descriptor(desc: &str) -> Result<Self> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            value
                .parse()
                .map_err(|e| Error::Config(format!("synthetic descriptor {key}={value}: {e}")))
        }

        let desc = desc.trim();
        if desc.eq_ignore_ascii_case("scene") {
            return Ok(SyntheticSpec::scene_shaped(0));
        }
        let mut spec = SyntheticSpec::default();
        if desc.is_empty() || desc.eq_ignore_ascii_case("default") {
            return Ok(spec);
        }
        for part in desc.split(',') {
            let (key, value) = part
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| {
                    Error::Config(format!(
                        "synthetic descriptor entry {part:?} is not key=value"
                    ))
                })?;
            match key {
                "n" => spec.n = num(key, value)?,
                "d" => spec.d = num(key, value)?,
                "q" => spec.q = num(key, value)?,
                "latent" => spec.latent = num(key, value)?,
                "feature_noise" => spec.feature_noise = num(key, value)?,
                "label_noise" => spec.label_noise = num(key, value)?,
                "prevalence" => spec.prevalence = num(key, value)?,
                "clusters" => spec.clusters = num(key, value)?,
                "cluster_spread" => spec.cluster_spread = num(key, value)?,
                "edge_fraction" => spec.edge_fraction = num(key, value)?,
                "seed" => spec.seed = num(key, value)?,
                other => {
                    return Err(Error::Config(format!(
                        "unknown synthetic descriptor key {other:?}"
                    )))
                }
            }
        }
        Ok(spec)
    }
}

pub fn generate(spec: &SyntheticSpec) -> Result<MultiLabelDataset> {
    if spec.n == 0 || spec.d == 0 || spec.q == 0 || spec.latent == 0 {
        return Err(Error::Config(format!(
            "synthetic dataset needs positive n, d, q, latent; got {} {} {} {}",
            spec.n, spec.d, spec.q, spec.latent
        )));
    }
    if !(0.0..=0.5).contains(&spec.label_noise) || !(0.01..=0.99).contains(&spec.prevalence) {
        return Err(Error::Config(
            "label_noise must be in [0, 0.5] and prevalence in [0.01, 0.99]".into(),
        ));
    }
    if !(0.0..=1.0).contains(&spec.edge_fraction) || spec.cluster_spread < 0.0 {
        return Err(Error::Config(
            "edge_fraction must be in [0, 1] and cluster_spread nonnegative".into(),
        ));
    }
    if spec.edge_fraction > 0.0 && spec.clusters < 2 {
        return Err(Error::Config(
            "edge_fraction needs at least two clusters to interpolate between".into(),
        ));
    }
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = StandardNormal;
    let gauss = |rng: &mut ChaCha8Rng| -> f64 { normal.sample(rng) };

    let h = spec.latent;
    let z = if spec.clusters == 0 {
        Array2::from_shape_fn((spec.n, h), |_| gauss(&mut rng))
    } else {
        let centers = Array2::from_shape_fn((spec.clusters, h), |_| gauss(&mut rng));
        let mut z = Array2::<f64>::zeros((spec.n, h));
        for i in 0..spec.n {
            if rng.random::<f64>() < spec.edge_fraction {
                let a = rng.random_range(0..spec.clusters);
                let b = (a + rng.random_range(1..spec.clusters)) % spec.clusters;
                let t = rng.random_range(0.35..0.65);
                for c in 0..h {
                    z[[i, c]] = t * centers[[a, c]]
                        + (1.0 - t) * centers[[b, c]]
                        + spec.cluster_spread * gauss(&mut rng);
                }
            } else {
                let k = rng.random_range(0..spec.clusters);
                for c in 0..h {
                    z[[i, c]] = centers[[k, c]] + spec.cluster_spread * gauss(&mut rng);
                }
            }
        }
        z
    };

    // label directions: labels come in small groups sharing a base
    // direction, which induces correlated margins
    let groups = spec.q.div_ceil(2).max(1);
    let bases = Array2::from_shape_fn((groups, h), |_| gauss(&mut rng));
    let mut directions = Array2::<f64>::zeros((spec.q, h));
    for j in 0..spec.q {
        let g = j % groups;
        for c in 0..h {
            directions[[j, c]] = bases[[g, c]] + 0.45 * gauss(&mut rng);
        }
        let norm = directions.row(j).dot(&directions.row(j)).sqrt();
        for c in 0..h {
            directions[[j, c]] /= norm;
        }
    }

    let margins = z.dot(&directions.t());
    let mut labels = Array2::<u8>::zeros((spec.n, spec.q));
    for j in 0..spec.q {
        // empirical quantile threshold hits the requested prevalence
        let mut col: Vec<f64> = margins.column(j).to_vec();
        col.sort_by(f64::total_cmp);
        let cut_idx = ((1.0 - spec.prevalence) * spec.n as f64) as usize;
        let cut = col[cut_idx.min(spec.n - 1)];
        for i in 0..spec.n {
            let mut y = u8::from(margins[[i, j]] > cut);
            if rng.random::<f64>() < spec.label_noise {
                y ^= 1;
            }
            labels[[i, j]] = y;
        }
    }

    let proj = Array2::from_shape_fn((h, spec.d), |_| gauss(&mut rng) / (h as f64).sqrt());
    let mut features = z.dot(&proj);
    let offsets = Array1::from_shape_fn(spec.d, |_| 2.0 * gauss(&mut rng));
    for mut row in features.rows_mut() {
        for (c, v) in row.iter_mut().enumerate() {
            *v += spec.feature_noise * gauss(&mut rng) + offsets[c];
        }
    }

    MultiLabelDataset::new(features, labels)
}
