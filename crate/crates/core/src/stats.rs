//! Statistical plumbing: seeded RNG streams, normal-distribution numerics,
//! and simple histograms.
//!
//! All randomness in the simulator flows through [`SeededRng`], a ChaCha
//! stream cipher RNG with counter-based splitting: `substream(id)` derives an
//! independent generator from the same root seed, so trials can be assigned
//! disjoint streams regardless of evaluation order.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Deterministic RNG with counter-based stream splitting.
///
/// Two generators with the same seed and stream id produce identical
/// sequences; distinct stream ids select disjoint cipher streams.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    /// Root generator for a run. Equivalent to `with_stream(seed, 0)`.
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Generator pinned to an explicit stream id.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        SeededRng { seed, stream, inner }
    }

    /// Derive an independent substream. The mapping mixes the parent stream
    /// with `id`, so hierarchical splits (scenario -> phase -> trial) stay
    /// disjoint without bookkeeping.
    pub fn substream(&self, id: u64) -> Self {
        Self::with_stream(self.seed, mix(self.stream, id))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Gaussian sample; `sigma = 0` returns `mean` exactly.
    pub fn gaussian(&mut self, mean: f64, sigma: f64) -> f64 {
        assert!(sigma >= 0.0, "gaussian sigma must be >= 0, got {sigma}");
        if sigma == 0.0 {
            return mean;
        }
        Normal::new(mean, sigma)
            .expect("valid normal parameters")
            .sample(&mut self.inner)
    }

    /// Bernoulli draw. `p` must lie in [0, 1].
    pub fn bernoulli(&mut self, p: f64) -> bool {
        assert!((0.0..=1.0).contains(&p), "bernoulli p must be in [0,1], got {p}");
        self.inner.gen_bool(p)
    }

    /// Fair random bit.
    pub fn bit(&mut self) -> bool {
        self.inner.gen::<bool>()
    }

    /// Uniform integer in `[0, n)`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index bound must be positive");
        self.inner.gen_range(0..n)
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

/// SplitMix64 finalizer; full-period bijection on u64.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(stream: u64, id: u64) -> u64 {
    splitmix(stream ^ splitmix(id ^ 0x6A09_E667_F3BC_C909))
}

/// Upper tail of the standard normal, `Q(x) = P(Z > x)`.
///
/// Rational approximation (two fixed-degree polynomial ratios plus a
/// continued-fraction tail) accurate to well below 1e-14 absolute error over
/// the tested range; the contract here is 1e-7 over |x| <= 8.
pub fn normal_tail_q(x: f64) -> f64 {
    let xa = x.abs();
    let tail = if xa > 37.0 {
        0.0
    } else {
        let e = (-xa * xa / 2.0).exp();
        if xa < 7.071_067_811_865_47 {
            let n = ((((((3.526_249_659_989_11e-2 * xa + 0.700_383_064_443_688) * xa
                + 6.373_962_203_531_65)
                * xa
                + 33.912_866_078_383)
                * xa
                + 112.079_291_497_871)
                * xa
                + 221.213_596_169_931)
                * xa
                + 220.206_867_912_376)
                * e;
            let d = (((((((8.838_834_764_831_84e-2 * xa + 1.755_667_163_182_64) * xa
                + 16.064_177_579_207)
                * xa
                + 86.780_732_202_946_1)
                * xa
                + 296.564_248_779_674)
                * xa
                + 637.333_633_378_831)
                * xa
                + 793.826_512_519_948)
                * xa)
                + 440.413_735_824_752;
            n / d
        } else {
            let b = xa + 0.65;
            let b = xa + 4.0 / b;
            let b = xa + 3.0 / b;
            let b = xa + 2.0 / b;
            let b = xa + 1.0 / b;
            e / (b * 2.506_628_274_631)
        }
    };
    if x >= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// Standard normal quantile, `Phi^{-1}(p)` for `0 < p < 1`.
///
/// Rational initial guess refined with one Halley step against
/// [`normal_tail_q`]; round-trips to better than 1e-9.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidProbability { name: "quantile p", value: p });
    }

    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -((((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0))
    };

    // One Halley refinement against the high-precision CDF.
    let err = (1.0 - normal_tail_q(x)) - p;
    let u = err * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    Ok(x - u / (1.0 + x * u / 2.0))
}

/// Equal-width histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` ascending edges; bin `i` covers `[edges[i], edges[i+1])`,
    /// except the last bin which also includes its upper edge.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Bin `samples` into `bins` equal-width bins spanning `[min, max]`.
///
/// The maximum sample lands in the last bin. A degenerate range (all samples
/// equal) falls back to unit-width bins anchored at the common value, leaving
/// a single occupied bin.
pub fn histogram(samples: &[f64], bins: usize) -> Histogram {
    assert!(!samples.is_empty(), "histogram needs at least one sample");
    assert!(bins >= 1, "histogram needs at least one bin");
    assert!(samples.iter().all(|s| s.is_finite()), "histogram samples must be finite");

    let min = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = if max > min { (max - min) / bins as f64 } else { 1.0 };

    let bin_edges: Vec<f64> = (0..=bins).map(|i| min + width * i as f64).collect();
    let mut counts = vec![0u64; bins];
    for &s in samples {
        let mut idx = ((s - min) / width) as usize;
        if idx >= bins {
            idx = bins - 1;
        }
        counts[idx] += 1;
    }
    Histogram { bin_edges, counts }
}

/// Arithmetic mean.
pub fn mean(samples: &[f64]) -> f64 {
    assert!(!samples.is_empty(), "mean of empty slice");
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Unbiased sample variance.
pub fn variance(samples: &[f64]) -> f64 {
    assert!(samples.len() >= 2, "variance needs at least two samples");
    let m = mean(samples);
    samples.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / (samples.len() - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values computed independently with 30-digit arithmetic;
    // guard digits beyond f64 precision are intentional.
    #[allow(clippy::excessive_precision)]
    const Q_TABLE: &[(f64, f64)] = &[
        (0.0, 0.5),
        (0.5, 0.3085375387259869),
        (1.0, 0.15865525393145705),
        (1.5, 0.066807201268858066),
        (2.0, 0.022750131948179207),
        (2.5, 0.0062096653257761352),
        (3.0, 0.0013498980316300945),
        (4.0, 3.1671241833119921e-5),
        (5.0, 2.8665157187919391e-7),
        (6.0, 9.8658764503769814e-10),
        (7.0, 1.279812543885835e-12),
        (8.0, 6.2209605742717841e-16),
        (-0.5, 0.6914624612740131),
        (-1.0, 0.84134474606854295),
        (-2.0, 0.97724986805182079),
    ];

    #[test]
    fn tail_q_matches_reference_table() {
        for &(x, expected) in Q_TABLE {
            let got = normal_tail_q(x);
            assert!(
                (got - expected).abs() <= 1e-9,
                "Q({x}) = {got}, reference {expected}"
            );
        }
    }

    #[test]
    fn tail_q_spec_point() {
        // Q(1.0) must be 0.158655 to 1e-6.
        assert!((normal_tail_q(1.0) - 0.158655).abs() <= 1e-6);
    }

    #[test]
    fn tail_q_symmetry_and_monotonicity() {
        let mut prev = f64::INFINITY;
        let mut x = -8.0;
        while x <= 8.0 {
            let q = normal_tail_q(x);
            let mirror = normal_tail_q(-x);
            assert!((q + mirror - 1.0).abs() < 1e-12, "symmetry broken at x = {x}");
            assert!(q <= prev, "Q must be non-increasing, broke at x = {x}");
            prev = q;
            x += 0.0625;
        }
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn quantile_matches_reference_table() {
        let table = [
            (0.75, 0.67448975019608174),
            (0.9, 1.2815515655446005),
            (0.95, 1.6448536269514727),
            (0.975, 1.9599639845400542),
            (0.99, 2.3263478740408411),
            (0.995, 2.5758293035489008),
            (0.999, 3.0902323061678135),
            (1e-6, -4.7534243088228989),
            (0.25, -0.67448975019608174),
        ];
        for (p, expected) in table {
            let got = normal_quantile(p).unwrap();
            assert!(
                (got - expected).abs() <= 1e-8,
                "quantile({p}) = {got}, reference {expected}"
            );
        }
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
    }

    #[test]
    fn quantile_round_trip() {
        // |Q(quantile(1 - p)) - p| <= 1e-6 across p in [1e-6, 0.5].
        let mut p = 1e-6;
        while p <= 0.5 {
            let x = normal_quantile(1.0 - p).unwrap();
            let back = normal_tail_q(x);
            assert!(
                (back - p).abs() <= 1e-6,
                "round trip failed at p = {p}: got {back}"
            );
            p *= 1.7;
        }
    }

    #[test]
    fn quantile_rejects_out_of_range() {
        for p in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
            assert!(matches!(
                normal_quantile(p),
                Err(Error::InvalidProbability { .. })
            ));
        }
    }

    #[test]
    fn same_seed_same_sequence() {
        let mut a = SeededRng::new(7);
        let mut b = SeededRng::new(7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn substreams_are_disjoint_and_order_independent() {
        let root = SeededRng::new(99);
        let mut s0 = root.substream(0);
        let mut s1 = root.substream(1);
        let a: Vec<u64> = (0..8).map(|_| s0.next_u64()).collect();
        let b: Vec<u64> = (0..8).map(|_| s1.next_u64()).collect();
        assert_ne!(a, b, "substreams 0 and 1 must differ");

        // Deriving a substream after consuming draws must not change it.
        let mut root2 = SeededRng::new(99);
        let _ = root2.next_u64();
        let mut s0_again = root2.substream(0);
        let a2: Vec<u64> = (0..8).map(|_| s0_again.next_u64()).collect();
        assert_eq!(a, a2, "substream derivation must ignore parent draw state");

        // Nested splits stay distinct from flat ones.
        let nested = root.substream(0).substream(1);
        assert_ne!(nested.stream(), root.substream(1).stream());
    }

    #[test]
    fn gaussian_sampler_moments() {
        let mut rng = SeededRng::new(1234);
        let n = 1_000_000usize;
        let sigma = 3.0;
        let samples: Vec<f64> = (0..n).map(|_| rng.gaussian(10.0, sigma)).collect();
        let m = mean(&samples);
        let v = variance(&samples);
        let mean_tol = 4.0 * sigma / (n as f64).sqrt();
        assert!((m - 10.0).abs() < mean_tol, "mean {m} off by more than {mean_tol}");
        let var_tol = 5.0 * sigma * sigma * (2.0 / n as f64).sqrt();
        assert!((v - 9.0).abs() < var_tol, "variance {v} off by more than {var_tol}");
    }

    #[test]
    fn gaussian_sigma_zero_is_exact() {
        let mut rng = SeededRng::new(5);
        for _ in 0..10 {
            assert_eq!(rng.gaussian(42.5, 0.0), 42.5);
        }
    }

    #[test]
    fn histogram_counts_and_last_bin() {
        let h = histogram(&[0.0, 1.0, 2.0, 3.0, 4.0], 4);
        assert_eq!(h.counts, vec![1, 1, 1, 2], "max sample belongs to the last bin");
        assert_eq!(h.bin_edges.len(), 5);
        assert_eq!(h.total(), 5);
    }

    #[test]
    fn histogram_degenerate_range_single_bin() {
        let h = histogram(&[7.0; 12], 5);
        assert_eq!(h.total(), 12);
        assert_eq!(h.counts[0], 12, "constant samples occupy exactly one bin");
        assert!(h.counts[1..].iter().all(|&c| c == 0));
        // Unit-width fallback keeps edges ascending.
        assert_eq!(h.bin_edges[1] - h.bin_edges[0], 1.0);
    }

    #[test]
    fn bernoulli_rate_close_to_p() {
        let mut rng = SeededRng::new(77);
        let hits = (0..10_000).filter(|_| rng.bernoulli(0.78)).count();
        let rate = hits as f64 / 10_000.0;
        assert!((rate - 0.78).abs() < 0.01, "empirical rate {rate} vs 0.78");
    }
}
