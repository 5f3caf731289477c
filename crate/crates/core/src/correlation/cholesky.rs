use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Read access to a symmetric matrix, as pivoted Cholesky needs it.
pub trait MatrixAccessor: Sync {
    fn dim(&self) -> usize;
    fn diagonal(&self) -> Vec<f64>;
    fn column(&self, j: usize) -> Vec<f64>;

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.column(j)[i]
    }
}

/// Dense row-major symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseAccessor {
    n: usize,
    data: Vec<f64>,
}

impl DenseAccessor {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                what: "dense matrix",
                expected: n * n,
                actual: data.len(),
            });
        }
        Ok(Self { n, data })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    /// Materializes any accessor (tests and small problems only).
    pub fn from_accessor(acc: &dyn MatrixAccessor) -> Self {
        let n = acc.dim();
        let mut data = vec![0.0; n * n];
        for j in 0..n {
            for (i, v) in acc.column(j).into_iter().enumerate() {
                data[i * n + j] = v;
            }
        }
        Self { n, data }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

impl MatrixAccessor for DenseAccessor {
    fn dim(&self) -> usize {
        self.n
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.data[i * self.n + i]).collect()
    }

    fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.data[i * self.n + j]).collect()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

/// `C ≈ Σ_k ℓ̃_k ℓ̃_kᵀ` with a relative trace-norm certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowRankFactorization {
    pub factors: Vec<Vec<f64>>,
    pub pivots: Vec<usize>,
    /// `trace(C)`
    pub trace: f64,
    /// `trace(C − C_m) / trace(C)` for the returned factors.
    pub trace_error: f64,
    pub tolerance: f64,
    /// Relative trace error after `k` factors, `k = 0..=m`.
    pub history: Vec<f64>,
}

impl LowRankFactorization {
    pub fn rank(&self) -> usize {
        self.factors.len()
    }

    pub fn dim(&self) -> usize {
        self.factors.first().map_or(0, Vec::len)
    }

    /// `trace(C − C_m)`
    pub fn residual_trace(&self) -> f64 {
        self.trace_error * self.trace
    }

    /// Keeps the first `m` factors.
    pub fn truncated(&self, m: usize) -> Self {
        let m = m.min(self.rank());
        Self {
            factors: self.factors[..m].to_vec(),
            pivots: self.pivots[..m].to_vec(),
            trace: self.trace,
            trace_error: self.history[m],
            tolerance: self.tolerance,
            history: self.history[..=m].to_vec(),
        }
    }

    /// Entry `(i, j)` of `C_m`.
    pub fn approx_entry(&self, i: usize, j: usize) -> f64 {
        self.factors.iter().map(|l| l[i] * l[j]).sum()
    }
}

/// Relative tolerance for negative updated diagonal entries.
const PSD_TOL: f64 = 1e-8;

/// Greedy pivoted Cholesky: repeatedly eliminates the largest remaining
/// diagonal entry (smallest index on ties) until
/// `trace(C − C_m) ≤ epsilon · trace(C)`.
pub fn pivoted_cholesky(
    c: &dyn MatrixAccessor,
    epsilon: f64,
    max_rank: usize,
) -> Result<LowRankFactorization> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "trace tolerance {epsilon} must be > 0"
        )));
    }
    let n = c.dim();
    let mut d = c.diagonal();
    if let Some((pivot, &value)) = d.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::NotPsd { pivot, value });
    }
    let trace: f64 = d.iter().sum();
    let mut fac = LowRankFactorization {
        factors: Vec::new(),
        pivots: Vec::new(),
        trace,
        trace_error: 0.0,
        tolerance: epsilon,
        history: Vec::new(),
    };
    if trace == 0.0 {
        fac.history.push(0.0);
        return Ok(fac);
    }
    loop {
        let err = d.iter().sum::<f64>() / trace;
        fac.history.push(err);
        fac.trace_error = err;
        if err <= epsilon {
            return Ok(fac);
        }
        if fac.rank() >= max_rank.min(n) {
            return Err(Error::RankExhausted {
                max_rank,
                trace_error: err,
                partial: Box::new(fac),
            });
        }
        let mut p = 0;
        for i in 1..n {
            if d[i] > d[p] {
                p = i;
            }
        }
        let pivot = d[p];
        let mut col = c.column(p);
        for l in &fac.factors {
            let lp = l[p];
            for (ci, li) in col.iter_mut().zip(l) {
                *ci -= li * lp;
            }
        }
        let s = pivot.sqrt();
        let l: Vec<f64> = col.iter().map(|v| v / s).collect();
        for i in 0..n {
            d[i] -= l[i] * l[i];
            if d[i] < 0.0 {
                if d[i] < -PSD_TOL * trace {
                    return Err(Error::NotPsd {
                        pivot: i,
                        value: d[i],
                    });
                }
                d[i] = 0.0;
            }
        }
        d[p] = 0.0;
        fac.factors.push(l);
        fac.pivots.push(p);
    }
}
