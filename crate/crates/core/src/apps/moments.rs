//! Scalar noise with prescribed mean, variance, skewness and kurtosis,
//! realized as a two-component Gaussian mixture.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourMomentSpec {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    /// Non-excess kurtosis (3 for a Gaussian).
    pub kurtosis: f64,
}

impl FourMomentSpec {
    pub fn gaussian(mean: f64, variance: f64) -> Self {
        Self {
            mean,
            variance,
            skewness: 0.0,
            kurtosis: 3.0,
        }
    }

    /// Point mass at `mean`.
    pub fn degenerate(mean: f64) -> Self {
        Self::gaussian(mean, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let (m, v, s, k) = (self.mean, self.variance, self.skewness, self.kurtosis);
        if ![m, v, s, k].iter().all(|x| x.is_finite()) {
            return Err(Error::MomentSpec("non-finite moment".into()));
        }
        if v < 0.0 {
            return Err(Error::MomentSpec(format!("variance {v} < 0")));
        }
        if v > 0.0 && k < s * s + 1.0 {
            return Err(Error::MomentSpec(format!(
                "kurtosis {k} below skewness² + 1 = {}",
                s * s + 1.0
            )));
        }
        Ok(())
    }
}

/// `p·N(m1, v1) + (1−p)·N(m2, v2)` with zero mean and unit variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandardMixture {
    pub p: f64,
    pub m1: f64,
    pub v1: f64,
    pub m2: f64,
    pub v2: f64,
}

impl StandardMixture {
    pub fn gaussian() -> Self {
        Self {
            p: 1.0,
            m1: 0.0,
            v1: 1.0,
            m2: 0.0,
            v2: 1.0,
        }
    }

    /// Raw moments `E[Z^k]`, k = 1..=4.
    pub fn moments(&self) -> [f64; 4] {
        let comp = |m: f64, v: f64| {
            [
                m,
                m * m + v,
                m.powi(3) + 3.0 * m * v,
                m.powi(4) + 6.0 * m * m * v + 3.0 * v * v,
            ]
        };
        let (a, b) = (comp(self.m1, self.v1), comp(self.m2, self.v2));
        std::array::from_fn(|i| self.p * a[i] + (1.0 - self.p) * b[i])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        let u: f64 = rng.random();
        if u < self.p {
            self.m1 + self.v1.sqrt() * z
        } else {
            self.m2 + self.v2.sqrt() * z
        }
    }

    /// Mixture with skewness `s` and kurtosis `k`.
    pub fn fit(s: f64, k: f64) -> Result<Self> {
        if k < s * s + 1.0 {
            return Err(Error::MomentSpec(format!("kurtosis {k} below skewness² + 1")));
        }
        if s == 0.0 {
            return Self::fit_symmetric(k);
        }
        Self::fit_skewed(s, k)
    }

    fn fit_symmetric(k: f64) -> Result<Self> {
        if k == 3.0 {
            return Ok(Self::gaussian());
        }
        if k > 3.0 {
            // Scale mixture: v1 = 1 + t/p, v2 = 1 − t/(1−p).
            let p = (1.5 / k).min(0.5);
            let t = ((k / 3.0 - 1.0) * p * (1.0 - p)).sqrt();
            return Ok(Self {
                p,
                m1: 0.0,
                v1: 1.0 + t / p,
                m2: 0.0,
                v2: 1.0 - t / (1.0 - p),
            });
        }
        // Location mixture ±a, equal weights: E[Z⁴] = 3 − 2a⁴.
        let a2 = ((3.0 - k) / 2.0).sqrt();
        if a2 >= 1.0 {
            return Err(Error::MomentSpec(format!(
                "kurtosis {k} too small for a Gaussian mixture"
            )));
        }
        let a = a2.sqrt();
        Ok(Self {
            p: 0.5,
            m1: a,
            v1: 1.0 - a2,
            m2: -a,
            v2: 1.0 - a2,
        })
    }

    /// Variances for fixed `(p, m1)`; the second and third moment equations
    /// are linear in `(v1, v2)`.
    fn variances(p: f64, m1: f64, s: f64) -> Option<Self> {
        let q = 1.0 - p;
        let m2 = -p * m1 / q;
        let r2 = 1.0 - p * m1 * m1 - q * m2 * m2;
        let r3 = s - p * m1.powi(3) - q * m2.powi(3);
        // [p, q; 3p m1, 3q m2] [v1; v2] = [r2; r3]
        let det = 3.0 * p * q * (m2 - m1);
        if det.abs() < 1e-14 {
            return None;
        }
        let v1 = (3.0 * q * m2 * r2 - q * r3) / det;
        let v2 = (p * r3 - 3.0 * p * m1 * r2) / det;
        (v1 > 0.0 && v2 > 0.0).then_some(Self { p, m1, v1, m2, v2 })
    }

    fn fit_skewed(s: f64, k: f64) -> Result<Self> {
        let residual = |p: f64, m1: f64| Self::variances(p, m1, s).map(|m| m.moments()[3] - k);
        let mut best: Option<(f64, Self)> = None;
        for pi in 1..50 {
            let p = pi as f64 / 50.0;
            let steps = 800;
            let mut prev: Option<(f64, f64)> = None;
            for mi in 0..=steps {
                let m1 = -4.0 + 8.0 * mi as f64 / steps as f64;
                let Some(r) = residual(p, m1) else {
                    prev = None;
                    continue;
                };
                if let Some((m0, r0)) = prev {
                    if r0.signum() != r.signum() || r == 0.0 {
                        let (mut a, mut b, mut ra) = (m0, m1, r0);
                        for _ in 0..100 {
                            let mid = 0.5 * (a + b);
                            match residual(p, mid) {
                                Some(rm) if rm.signum() == ra.signum() => {
                                    a = mid;
                                    ra = rm;
                                }
                                Some(_) => b = mid,
                                None => break,
                            }
                        }
                        if let Some(fit) = Self::variances(p, 0.5 * (a + b), s) {
                            // Prefer the most balanced component variances.
                            let score = fit.v1.min(fit.v2) / fit.v1.max(fit.v2);
                            if best.as_ref().is_none_or(|(b, _)| score > *b) {
                                best = Some((score, fit));
                            }
                        }
                    }
                }
                prev = Some((m1, r));
            }
        }
        best.map(|(_, f)| f)
            .ok_or_else(|| Error::MomentSpec(format!("no two-Gaussian mixture with skewness {s}, kurtosis {k}")))
    }
}

/// Fitted sampler for one [`FourMomentSpec`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourMomentSampler {
    spec: FourMomentSpec,
    mixture: StandardMixture,
}

impl FourMomentSampler {
    pub fn new(spec: FourMomentSpec) -> Result<Self> {
        spec.validate()?;
        let mixture = if spec.variance == 0.0 {
            StandardMixture::gaussian()
        } else {
            StandardMixture::fit(spec.skewness, spec.kurtosis)?
        };
        Ok(Self { spec, mixture })
    }

    pub fn spec(&self) -> &FourMomentSpec {
        &self.spec
    }

    pub fn mixture(&self) -> &StandardMixture {
        &self.mixture
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // Draw even for zero variance so RNG streams stay aligned.
        let z = self.mixture.sample(rng);
        self.spec.mean + self.spec.variance.sqrt() * z
    }
}

pub fn sample_four_moment<R: Rng + ?Sized>(spec: &FourMomentSpec, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    let s = FourMomentSampler::new(*spec)?;
    Ok((0..n).map(|_| s.sample(rng)).collect())
}

/// Sample mean, variance, skewness and kurtosis.
pub fn sample_moments(xs: &[f64]) -> [f64; 4] {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let central = |k: i32| xs.iter().map(|x| (x - mean).powi(k)).sum::<f64>() / n;
    let var = central(2);
    [mean, var, central(3) / var.powf(1.5), central(4) / (var * var)]
}
