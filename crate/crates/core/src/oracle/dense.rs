use nalgebra::{DMatrix, LU};

use crate::error::{Error, Result};

/// Largest dimension the dense oracle accepts.
pub const MAX_DENSE_DIM: usize = 200;

/// Affine design family `A(h) = A₀ + h A₁` with a symmetric cost `ℬ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSystem {
    pub a0: DMatrix<f64>,
    pub a1: DMatrix<f64>,
    pub cost: DMatrix<f64>,
}

/// Which adjoint the cross-correlation is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjointConvention {
    /// `Aᵀp = −2ℬu`, so that `dℳ/dh = tr(A₁ Cor(u,p))`. Matches finite
    /// differences and is what [`gradient_dense`] uses.
    Doubled,
    /// `Aᵀp = −ℬu`; the derivative then carries an explicit factor 2.
    Half,
}

impl DesignSystem {
    pub fn new(a0: DMatrix<f64>, a1: DMatrix<f64>, cost: DMatrix<f64>) -> Result<Self> {
        let n = a0.nrows();
        for (what, m) in [("A0", &a0), ("A1", &a1), ("cost", &cost)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    actual: if m.nrows() != n { m.nrows() } else { m.ncols() },
                });
            }
        }
        if n == 0 || n > MAX_DENSE_DIM {
            return Err(Error::InvalidArgument(format!(
                "dense oracle dimension {n} not in 1..={MAX_DENSE_DIM}"
            )));
        }
        if cost != cost.transpose() {
            return Err(Error::InvalidArgument(
                "cost matrix must be symmetric".into(),
            ));
        }
        Ok(Self { a0, a1, cost })
    }

    pub fn dim(&self) -> usize {
        self.a0.nrows()
    }

    pub fn matrix(&self, h: f64) -> DMatrix<f64> {
        &self.a0 + &self.a1 * h
    }

    fn lu(&self, h: f64) -> Result<LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
        let lu = self.matrix(h).lu();
        if !lu.is_invertible() {
            return Err(Error::Singular);
        }
        let u = lu.u();
        let max = u.diagonal().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let min = u
            .diagonal()
            .iter()
            .fold(f64::INFINITY, |m, x| m.min(x.abs()));
        if !(min > 1e-14 * max) {
            return Err(Error::Singular);
        }
        Ok(lu)
    }

    /// `u = A(h)⁻¹ f` for one load.
    pub fn solve(&self, h: f64, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.lu(h)?.solve(f).ok_or(Error::Singular)
    }
}

fn check_square(m: &DMatrix<f64>, n: usize, what: &'static str) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch {
            what,
            expected: n,
            actual: m.nrows(),
        });
    }
    Ok(())
}

/// `Cor(u) = A⁻¹ Cor(f) A⁻ᵀ`, the solution of `(A⊗A) Cor(u) = Cor(f)`.
pub fn solve_correlation_dense(
    sys: &DesignSystem,
    h: f64,
    cor_f: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_square(cor_f, sys.dim(), "Cor(f)")?;
    let lu = sys.lu(h)?;
    let x = lu.solve(cor_f).ok_or(Error::Singular)?;
    let y = lu.solve(&x.transpose()).ok_or(Error::Singular)?;
    let c = y.transpose();
    Ok((&c + c.transpose()) * 0.5)
}

/// `Cor(u,p) = 𝔼[u pᵀ]` for the adjoint of the given convention, from
/// `Aᵀ Cor(u,p)ᵀ = −c ℬ Cor(u)` with `c = 2` or `1`.
pub fn solve_cross_correlation_dense(
    sys: &DesignSystem,
    h: f64,
    cor_u: &DMatrix<f64>,
    convention: AdjointConvention,
) -> Result<DMatrix<f64>> {
    check_square(cor_u, sys.dim(), "Cor(u)")?;
    let c = match convention {
        AdjointConvention::Doubled => 2.0,
        AdjointConvention::Half => 1.0,
    };
    let at = sys.matrix(h).transpose().lu();
    let rhs = (&sys.cost * cor_u) * (-c);
    let xt = at.solve(&rhs).ok_or(Error::Singular)?;
    Ok(xt.transpose())
}

/// `ℳ(h) = ℬ : Cor(u)(h)`
pub fn objective_dense(sys: &DesignSystem, h: f64, cor_f: &DMatrix<f64>) -> Result<f64> {
    let cu = solve_correlation_dense(sys, h, cor_f)?;
    Ok(sys.cost.component_mul(&cu).sum())
}

/// `dℳ/dh = tr(A₁ Cor(u,p))` with the doubled adjoint.
pub fn gradient_dense(sys: &DesignSystem, h: f64, cor_f: &DMatrix<f64>) -> Result<f64> {
    let cu = solve_correlation_dense(sys, h, cor_f)?;
    let cup = solve_cross_correlation_dense(sys, h, &cu, AdjointConvention::Doubled)?;
    Ok(sys.a1.component_mul(&cup.transpose()).sum())
}

/// `Σ_k u_kᵀ ℬ u_k` from one solve per column of `factors`.
pub fn objective_from_factors(sys: &DesignSystem, h: f64, factors: &DMatrix<f64>) -> Result<f64> {
    let u = sys.solve(h, factors)?;
    Ok(u.column_iter().map(|c| c.dot(&(&sys.cost * c))).sum())
}
