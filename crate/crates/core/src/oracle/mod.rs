//! Finite-dimensional oracle: dense tensorized solves, Monte-Carlo
//! estimation and design-gradient checks for the low-rank formulas.

mod commutation;
mod dense;
mod mc;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use commutation::discrete_commutation_check;
pub use dense::{
    gradient_dense, objective_dense, objective_from_factors, solve_correlation_dense,
    solve_cross_correlation_dense, AdjointConvention, DesignSystem, MAX_DENSE_DIM,
};
pub use mc::{mc_estimate, RandomLoadModel};

/// Finite-difference step of the gradient check.
pub const FD_STEP: f64 = 1e-5;

/// A random design system with a factored load correlation `F Fᵀ`.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub system: DesignSystem,
    pub factors: DMatrix<f64>,
    pub h: f64,
}

impl RandomInstance {
    pub fn correlation(&self) -> DMatrix<f64> {
        &self.factors * self.factors.transpose()
    }
}

fn gaussian_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

/// Well-conditioned nonsymmetric `A₀`, random `A₁`, SPD cost and a rank
/// `rank` correlation.
pub fn random_instance(rng: &mut impl Rng, dim: usize, rank: usize) -> Result<RandomInstance> {
    let n = dim;
    let shift = 2.0 * (n as f64).sqrt() + 2.0;
    let a0 = gaussian_matrix(rng, n, n) + DMatrix::identity(n, n) * shift;
    let a1 = gaussian_matrix(rng, n, n) * 0.5;
    let c = gaussian_matrix(rng, n, n);
    let cost = c.transpose() * &c / n as f64 + DMatrix::identity(n, n);
    let cost = (&cost + cost.transpose()) * 0.5;
    let factors = gaussian_matrix(rng, n, rank);
    let h = rng.random_range(-0.2..0.2);
    Ok(RandomInstance {
        system: DesignSystem::new(a0, a1, cost)?,
        factors,
        h,
    })
}

/// Settings of the oracle suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub instances: usize,
    pub max_dim: usize,
    pub max_rank: usize,
    pub mc_instances: usize,
    pub mc_samples: usize,
    pub commutation_pairs: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            instances: 100,
            max_dim: 20,
            max_rank: 5,
            mc_instances: 10,
            mc_samples: 100_000,
            commutation_pairs: 50,
            seed: 0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        let range = |key: &str, message: String| Error::ConfigRange {
            key: format!("oracle.{key}"),
            message,
        };
        if !(1..=MAX_DENSE_DIM).contains(&self.max_dim) {
            return Err(range("max_dim", format!("must be in 1..={MAX_DENSE_DIM}")));
        }
        if self.max_rank == 0 {
            return Err(range("max_rank", "must be at least 1".into()));
        }
        if self.mc_instances > 0 && self.mc_samples < 100 {
            return Err(range("mc_samples", "must be at least 100".into()));
        }
        Ok(())
    }
}

/// One line of an oracle comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub quantity: String,
    pub formula_value: f64,
    pub oracle_value: f64,
    /// Absolute tolerance on `|formula − oracle|`.
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleRow {
    pub fn absolute(
        quantity: impl Into<String>,
        formula_value: f64,
        oracle_value: f64,
        tolerance: f64,
    ) -> Self {
        Self {
            quantity: quantity.into(),
            formula_value,
            oracle_value,
            tolerance,
            pass: (formula_value - oracle_value).abs() <= tolerance,
        }
    }

    /// Tolerance scaled by `|oracle_value|`.
    pub fn relative(
        quantity: impl Into<String>,
        formula_value: f64,
        oracle_value: f64,
        rel_tol: f64,
    ) -> Self {
        Self::absolute(
            quantity,
            formula_value,
            oracle_value,
            rel_tol * oracle_value.abs(),
        )
    }
}

/// `quantity,formula_value,oracle_value,tolerance,pass`
pub fn oracle_report_csv(rows: &[OracleRow]) -> String {
    let mut s = String::from("quantity,formula_value,oracle_value,tolerance,pass\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:.17e},{:.17e},{:.17e},{}",
            r.quantity, r.formula_value, r.oracle_value, r.tolerance, r.pass
        );
    }
    s
}

/// Objective against per-factor solves and gradient against central
/// differences on one instance.
pub fn check_instance(inst: &RandomInstance, label: &str) -> Result<[OracleRow; 2]> {
    let sys = &inst.system;
    let cf = inst.correlation();
    let m = objective_dense(sys, inst.h, &cf)?;
    let per_factor = objective_from_factors(sys, inst.h, &inst.factors)?;
    let g = gradient_dense(sys, inst.h, &cf)?;
    let fd = (objective_dense(sys, inst.h + FD_STEP, &cf)?
        - objective_dense(sys, inst.h - FD_STEP, &cf)?)
        / (2.0 * FD_STEP);
    Ok([
        OracleRow::relative(format!("objective[{label}]"), m, per_factor, 1e-10),
        OracleRow::relative(format!("gradient[{label}]"), g, fd, 1e-6),
    ])
}

/// Objective against a Monte-Carlo estimate, tolerance three standard errors.
pub fn check_monte_carlo(
    inst: &RandomInstance,
    samples: usize,
    seed: u64,
    label: &str,
) -> Result<OracleRow> {
    let n = inst.system.dim();
    let mean = DVector::from_fn(n, |i, _| 0.5 * ((i as f64) * 0.7).sin());
    let model = RandomLoadModel::independent(mean, inst.factors.clone())?;
    let m = objective_dense(&inst.system, inst.h, &model.correlation())?;
    let (est, se) = mc_estimate(&inst.system, inst.h, &model, samples, seed)?;
    Ok(OracleRow::absolute(
        format!("monte_carlo[{label}]"),
        m,
        est,
        3.0 * se,
    ))
}

/// Random correlated sample pair for the commutation check.
pub fn random_sample_pair(
    rng: &mut impl Rng,
    samples: usize,
    points: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let u = gaussian_matrix(rng, samples, points);
    let v = &u * 0.5 + gaussian_matrix(rng, samples, points);
    (u, v)
}

/// Runs every oracle comparison of `cfg` and returns the table rows.
pub fn run_oracle_suite(cfg: &OracleConfig) -> Result<Vec<OracleRow>> {
    cfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::new();
    let mut instances = Vec::with_capacity(cfg.instances);
    for i in 0..cfg.instances {
        let n = rng.random_range(1..=cfg.max_dim);
        let r = rng.random_range(1..=cfg.max_rank.min(n));
        let inst = random_instance(&mut rng, n, r)?;
        rows.extend(check_instance(&inst, &i.to_string())?);
        instances.push(inst);
    }
    for (i, inst) in instances.iter().take(cfg.mc_instances).enumerate() {
        rows.push(check_monte_carlo(
            inst,
            cfg.mc_samples,
            cfg.seed.wrapping_add(i as u64),
            &i.to_string(),
        )?);
    }
    for i in 0..cfg.commutation_pairs {
        let (u, v) = random_sample_pair(&mut rng, 64, 32);
        let dev = discrete_commutation_check(&u, &v)?;
        rows.push(OracleRow::absolute(
            format!("commutation[{i}]"),
            dev,
            0.0,
            1e-12,
        ));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let cfg = OracleConfig {
            instances: 5,
            mc_instances: 1,
            mc_samples: 20_000,
            commutation_pairs: 2,
            ..OracleConfig::default()
        };
        let rows = run_oracle_suite(&cfg).unwrap();
        assert_eq!(rows.len(), 5 * 2 + 1 + 2);
        assert!(rows.iter().all(|r| r.pass), "{rows:?}");
    }

    #[test]
    fn report_header_and_rows() {
        let csv = oracle_report_csv(&[OracleRow::absolute("x", 1.0, 1.5, 1.0)]);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next(),
            Some("quantity,formula_value,oracle_value,tolerance,pass")
        );
        assert!(lines.next().unwrap().ends_with(",true"));
    }

    #[test]
    fn invalid_config_is_a_range_error() {
        let cfg = OracleConfig {
            max_dim: 0,
            ..OracleConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::ConfigRange { .. })));
    }
}
