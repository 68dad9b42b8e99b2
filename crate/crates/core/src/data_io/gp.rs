//! Gaussian-process synthetic series for pretraining and test stations.

use std::collections::BTreeSet;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::series::{TimeSeries, HOUR};

/// Largest block drawn with one dense factorization.
pub const MAX_BLOCK: usize = 4096;
/// Points shared between consecutive blocks, blended linearly.
pub const CROSS_FADE: usize = 64;
pub const MAX_KERNEL_DEPTH: usize = 3;
const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-4;
/// Lower end of the wave-like range.
pub const WAVE_FLOOR: f64 = 0.1;

/// Covariance function over hourly time indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Rbf { length_scale: f64, variance: f64 },
    Periodic { period: f64, length_scale: f64, variance: f64 },
    /// `variance * (s - offset) * (t - offset)`.
    Linear { variance: f64, offset: f64 },
    White { variance: f64 },
    Sum { left: Box<KernelSpec>, right: Box<KernelSpec> },
    Product { left: Box<KernelSpec>, right: Box<KernelSpec> },
}

impl KernelSpec {
    pub fn sum(a: KernelSpec, b: KernelSpec) -> Self {
        KernelSpec::Sum {
            left: Box::new(a),
            right: Box::new(b),
        }
    }

    pub fn product(a: KernelSpec, b: KernelSpec) -> Self {
        KernelSpec::Product {
            left: Box::new(a),
            right: Box::new(b),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            KernelSpec::Sum { left, right } | KernelSpec::Product { left, right } => 1 + left.depth().max(right.depth()),
            _ => 1,
        }
    }

    /// Leaf kinds used anywhere in the tree.
    pub fn kinds(&self) -> BTreeSet<&'static str> {
        match self {
            KernelSpec::Rbf { .. } => BTreeSet::from(["rbf"]),
            KernelSpec::Periodic { .. } => BTreeSet::from(["periodic"]),
            KernelSpec::Linear { .. } => BTreeSet::from(["linear"]),
            KernelSpec::White { .. } => BTreeSet::from(["white"]),
            KernelSpec::Sum { left, right } | KernelSpec::Product { left, right } => left.kinds().union(&right.kinds()).copied().collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth() > MAX_KERNEL_DEPTH {
            return Err(Error::Config(format!("kernel depth {} exceeds {MAX_KERNEL_DEPTH}", self.depth())));
        }
        self.validate_leaves()
    }

    fn validate_leaves(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("kernel {name} must be positive, got {v}")))
            }
        };
        match *self {
            KernelSpec::Rbf { length_scale, variance } => {
                positive("length_scale", length_scale)?;
                positive("variance", variance)
            }
            KernelSpec::Periodic { period, length_scale, variance } => {
                positive("period", period)?;
                positive("length_scale", length_scale)?;
                positive("variance", variance)
            }
            KernelSpec::Linear { variance, offset } => {
                positive("variance", variance)?;
                if offset.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Config("linear kernel offset must be finite".into()))
                }
            }
            KernelSpec::White { variance } => positive("variance", variance),
            KernelSpec::Sum { ref left, ref right } | KernelSpec::Product { ref left, ref right } => {
                left.validate_leaves()?;
                right.validate_leaves()
            }
        }
    }

    pub fn eval(&self, s: f64, t: f64) -> f64 {
        match *self {
            KernelSpec::Rbf { length_scale, variance } => variance * (-(s - t).powi(2) / (2.0 * length_scale * length_scale)).exp(),
            KernelSpec::Periodic { period, length_scale, variance } => {
                let x = (std::f64::consts::PI * (s - t).abs() / period).sin();
                variance * (-2.0 * x * x / (length_scale * length_scale)).exp()
            }
            KernelSpec::Linear { variance, offset } => variance * (s - offset) * (t - offset),
            KernelSpec::White { variance } => {
                if s == t {
                    variance
                } else {
                    0.0
                }
            }
            KernelSpec::Sum { ref left, ref right } => left.eval(s, t) + right.eval(s, t),
            KernelSpec::Product { ref left, ref right } => left.eval(s, t) * right.eval(s, t),
        }
    }
}

/// Covariance matrix on the grid `0, 1, ..., n - 1`.
pub fn covariance(spec: &KernelSpec, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| spec.eval(i as f64, j as f64))
}

/// Cholesky factor of `k + jitter * I`, escalating the jitter tenfold from
/// 1e-8 up to 1e-4. Returns the factor and the jitter used.
pub fn factorize(k: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let n = k.nrows();
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || k[(i, j)] == 0.0));
    if diagonal && (0..n).all(|i| k[(i, i)] + JITTER_START > 0.0) {
        return Ok((DMatrix::from_fn(n, n, |i, j| if i == j { (k[(i, i)] + JITTER_START).sqrt() } else { 0.0 }), JITTER_START));
    }
    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX * (1.0 + 1e-9) {
        let mut m = k.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::<f64, Dyn>::new(m) {
            return Ok((c.l(), jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::Numerical(format!("covariance not factorizable with jitter up to {JITTER_MAX}")))
}

fn sample_block(spec: &KernelSpec, n: usize, seed: u64) -> Result<Vec<f64>> {
    let (l, _) = factorize(&covariance(spec, n))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    Ok((l * z).iter().copied().collect())
}

/// One zero-mean GP draw of `length` points. Longer than [`MAX_BLOCK`] means
/// independent blocks joined with a linear cross-fade over [`CROSS_FADE`] points.
pub fn gen_gp_values(spec: &KernelSpec, length: usize, seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    if length < 2 {
        return Err(Error::TooShort(format!("GP series needs at least 2 points, got {length}")));
    }
    if length <= MAX_BLOCK {
        return sample_block(spec, length, seed);
    }
    let mut out = sample_block(spec, MAX_BLOCK, derive_seed(seed, 0))?;
    let mut block = 1;
    while out.len() < length {
        let next = sample_block(spec, MAX_BLOCK, derive_seed(seed, block))?;
        let start = out.len() - CROSS_FADE;
        for j in 0..CROSS_FADE {
            let w = (j + 1) as f64 / (CROSS_FADE + 1) as f64;
            out[start + j] = (1.0 - w) * out[start + j] + w * next[j];
        }
        out.extend_from_slice(&next[CROSS_FADE..]);
        block += 1;
    }
    out.truncate(length);
    Ok(out)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Shifts the minimum to [`WAVE_FLOOR`] and stretches so the median lands on
/// `target_median`.
pub fn wave_shape(values: &[f64], target_median: f64) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = median(values) - min;
    let k = if spread > 0.0 && target_median > WAVE_FLOOR {
        (target_median - WAVE_FLOOR) / spread
    } else {
        1.0
    };
    values.iter().map(|v| WAVE_FLOOR + k * (v - min)).collect()
}

/// GP draw as an hourly series starting at `start`, optionally wave-shaped.
pub fn gen_gp_series(station_id: &str, spec: &KernelSpec, length: usize, seed: u64, start: i64, target_median: Option<f64>) -> Result<TimeSeries> {
    let mut values = gen_gp_values(spec, length, seed)?;
    if let Some(m) = target_median {
        values = wave_shape(&values, m);
    }
    TimeSeries::regular(station_id, start, HOUR, &values)
}

fn rbf(length_scale: f64) -> KernelSpec {
    KernelSpec::Rbf { length_scale, variance: 1.0 }
}

fn periodic(period: f64) -> KernelSpec {
    KernelSpec::Periodic {
        period,
        length_scale: 1.0,
        variance: 1.0,
    }
}

fn linear() -> KernelSpec {
    KernelSpec::Linear { variance: 1e-5, offset: 0.0 }
}

fn white(variance: f64) -> KernelSpec {
    KernelSpec::White { variance }
}

/// The fixed pretraining bank: single kernels and two-term compositions.
pub fn kernel_bank() -> Vec<KernelSpec> {
    use KernelSpec as K;
    vec![
        rbf(12.0),
        rbf(72.0),
        periodic(24.0),
        periodic(168.0),
        linear(),
        K::sum(periodic(24.0), white(0.1)),
        K::sum(periodic(24.0), rbf(72.0)),
        K::sum(periodic(168.0), rbf(12.0)),
        K::sum(periodic(24.0), periodic(168.0)),
        K::sum(linear(), periodic(24.0)),
        K::sum(rbf(72.0), white(0.1)),
        K::product(periodic(24.0), rbf(72.0)),
        K::product(periodic(168.0), rbf(72.0)),
        K::sum(linear(), rbf(12.0)),
        K::product(periodic(24.0), linear()),
        K::sum(rbf(12.0), white(0.1)),
    ]
}

/// Bank entries chosen uniformly for `n` series.
pub fn corpus_specs(n: usize, seed: u64) -> Vec<KernelSpec> {
    let bank = kernel_bank();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| bank[rng.random_range(0..bank.len())].clone()).collect()
}

/// Wave-shaped GP series for pretraining. Series `i` is drawn with seed
/// `derive_seed(seed, i)` and a target median in `[0.5, 2.5]` m.
pub fn gen_corpus(n_series: usize, length: usize, seed: u64) -> Result<Vec<TimeSeries>> {
    if n_series == 0 {
        return Err(Error::Config("corpus needs at least one series".into()));
    }
    corpus_specs(n_series, seed)
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let s = derive_seed(seed, i as u64);
            let median = ChaCha8Rng::seed_from_u64(s ^ 0x5eed).random_range(0.5..2.5);
            gen_gp_series(&format!("gp{i:04}"), spec, length, s, 0, Some(median))
        })
        .collect()
}

/// Station-like test series: a diurnal cycle plus slow weather variation
/// plus measurement noise, wave-shaped.
pub fn synthetic_station(station_id: &str, length: usize, seed: u64) -> Result<TimeSeries> {
    let spec = KernelSpec::sum(
        KernelSpec::sum(
            KernelSpec::Periodic {
                period: 24.0,
                length_scale: 1.0,
                variance: 1.0,
            },
            KernelSpec::Rbf {
                length_scale: 48.0,
                variance: 0.7,
            },
        ),
        white(0.05),
    );
    let median = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed).random_range(0.9..2.2);
    // 2020-01-01T00:00:00Z
    gen_gp_series(station_id, &spec, length, seed, 1_577_836_800, Some(median))
}
