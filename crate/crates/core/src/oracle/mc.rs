use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::oracle::DesignSystem;

const CHUNK: usize = 4096;

/// `f(ω) = 𝔼(f) + Σ_i f_i ξ_i(ω)` with jointly Gaussian, centred `ξ` of
/// correlation `R`, so `Cor(f) = 𝔼(f)𝔼(f)ᵀ + F R Fᵀ`.
#[derive(Debug, Clone)]
pub struct RandomLoadModel {
    mean: DVector<f64>,
    factors: DMatrix<f64>,
    coefficient_correlation: DMatrix<f64>,
    /// `S` with `S Sᵀ = R`, used to draw `ξ = S z`.
    sampler: DMatrix<f64>,
}

impl RandomLoadModel {
    pub fn new(
        mean: DVector<f64>,
        factors: DMatrix<f64>,
        coefficient_correlation: DMatrix<f64>,
    ) -> Result<Self> {
        let r = factors.ncols();
        if factors.nrows() != mean.len() {
            return Err(Error::DimensionMismatch {
                what: "load factors",
                expected: mean.len(),
                actual: factors.nrows(),
            });
        }
        if coefficient_correlation.nrows() != r || coefficient_correlation.ncols() != r {
            return Err(Error::DimensionMismatch {
                what: "coefficient correlation",
                expected: r,
                actual: coefficient_correlation.nrows(),
            });
        }
        if coefficient_correlation != coefficient_correlation.transpose() {
            return Err(Error::InvalidArgument(
                "coefficient correlation must be symmetric".into(),
            ));
        }
        let sampler = if r == 0 {
            DMatrix::zeros(0, 0)
        } else {
            let eig = SymmetricEigen::new(coefficient_correlation.clone());
            let tol = 1e-12 * coefficient_correlation.trace().abs().max(f64::MIN_POSITIVE);
            let mut s = eig.eigenvectors.clone();
            for (k, &lam) in eig.eigenvalues.iter().enumerate() {
                if lam < -tol {
                    return Err(Error::NotPsd {
                        pivot: k,
                        value: lam,
                    });
                }
                s.column_mut(k).scale_mut(lam.max(0.0).sqrt());
            }
            s
        };
        Ok(Self {
            mean,
            factors,
            coefficient_correlation,
            sampler,
        })
    }

    /// Independent standard Gaussian coefficients on the given factors.
    pub fn independent(mean: DVector<f64>, factors: DMatrix<f64>) -> Result<Self> {
        let r = factors.ncols();
        Self::new(mean, factors, DMatrix::identity(r, r))
    }

    /// Zero-mean `ξ_a g_a + ξ_b g_b` with `𝔼(ξ_a ξ_b) = α`.
    pub fn correlated_pair(g_a: DVector<f64>, g_b: DVector<f64>, alpha: f64) -> Result<Self> {
        let n = g_a.len();
        let r = DMatrix::from_row_slice(2, 2, &[1.0, alpha, alpha, 1.0]);
        Self::new(DVector::zeros(n), DMatrix::from_columns(&[g_a, g_b]), r)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn correlation(&self) -> DMatrix<f64> {
        &self.mean * self.mean.transpose()
            + &self.factors * &self.coefficient_correlation * self.factors.transpose()
    }

    /// `S Sᵀ` of the coefficient sampler.
    pub fn sampler_covariance(&self) -> DMatrix<f64> {
        &self.sampler * self.sampler.transpose()
    }

    fn draw(&self, rng: &mut ChaCha20Rng) -> DVector<f64> {
        let r = self.factors.ncols();
        if r == 0 {
            return self.mean.clone();
        }
        let z = DVector::from_fn(r, |_, _| StandardNormal.sample(rng));
        &self.mean + &self.factors * (&self.sampler * z)
    }
}

/// Sample mean and standard error of `uᵀℬu` over `samples` draws.
/// Chunks of draws use independent ChaCha streams of the master seed and
/// are reduced in chunk order, so the result depends only on the seed.
pub fn mc_estimate(
    sys: &DesignSystem,
    h: f64,
    model: &RandomLoadModel,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if samples < 100 {
        return Err(Error::InvalidArgument(format!(
            "need at least 100 samples, got {samples}"
        )));
    }
    if model.dim() != sys.dim() {
        return Err(Error::DimensionMismatch {
            what: "load model",
            expected: sys.dim(),
            actual: model.dim(),
        });
    }
    let lu = sys.matrix(h).lu();
    if !lu.is_invertible() {
        return Err(Error::Singular);
    }
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = CHUNK.min(samples - c * CHUNK);
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in 0..count {
                let f = model.draw(&mut rng);
                let u = lu.solve(&f).expect("invertible");
                let v = u.dot(&(&sys.cost * &u));
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })
        .collect();
    let (sum, sum2) = partial
        .iter()
        .fold((0.0, 0.0), |(a, b), (s, s2)| (a + s, b + s2));
    let n = samples as f64;
    let mean = sum / n;
    let var = ((sum2 - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok((mean, (var / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn system() -> DesignSystem {
        let a0 = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 0.0, 2.0]);
        DesignSystem::new(a0, DMatrix::zeros(2, 2), DMatrix::identity(2, 2)).unwrap()
    }

    #[test]
    fn sampler_reproduces_declared_correlation() {
        let r = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, -0.3, 0.1, -0.3, 0.7]);
        let m = RandomLoadModel::new(
            DVector::zeros(4),
            DMatrix::from_element(4, 3, 1.0),
            r.clone(),
        )
        .unwrap();
        assert!((m.sampler_covariance() - r).abs().max() < 1e-12);
    }

    #[test]
    fn indefinite_coefficients_are_rejected() {
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = RandomLoadModel::new(DVector::zeros(2), DMatrix::identity(2, 2), r).unwrap_err();
        assert!(matches!(err, Error::NotPsd { .. }));
    }

    #[test]
    fn deterministic_model_has_zero_stderr() {
        let sys = system();
        let f = DVector::from_vec(vec![1.0, 2.0]);
        let m = RandomLoadModel::independent(f.clone(), DMatrix::zeros(2, 0)).unwrap();
        let (mean, se) = mc_estimate(&sys, 0.0, &m, 200, 1).unwrap();
        let u = sys.matrix(0.0).lu().solve(&f).unwrap();
        assert!((mean - u.norm_squared()).abs() < 1e-12);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn estimate_is_reproducible_and_scales_like_sqrt_n() {
        let sys = system();
        let m = RandomLoadModel::correlated_pair(
            DVector::from_vec(vec![1.0, -1.0]),
            DVector::from_vec(vec![-1.0, 1.0]),
            0.3,
        )
        .unwrap();
        let a = mc_estimate(&sys, 0.0, &m, 20_000, 7).unwrap();
        assert_eq!(a, mc_estimate(&sys, 0.0, &m, 20_000, 7).unwrap());
        let b = mc_estimate(&sys, 0.0, &m, 80_000, 7).unwrap();
        let ratio = a.1 / b.1;
        assert!((ratio - 2.0).abs() < 0.4, "stderr ratio {ratio}");
    }
}
