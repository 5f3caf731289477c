use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::Field;
use crate::mesh::Point;

/// Intensity profile of a closed-form kernel, evaluated on `t ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    H1,
    H2,
    H3,
    K1,
    K2,
    K3,
    /// Constant one.
    Unit,
}

impl Profile {
    pub fn h(i: usize) -> Result<Self> {
        match i {
            1 => Ok(Profile::H1),
            2 => Ok(Profile::H2),
            3 => Ok(Profile::H3),
            _ => Err(Error::InvalidArgument(format!(
                "profile index {i} not in 1..=3"
            ))),
        }
    }

    pub fn k(i: usize) -> Result<Self> {
        match i {
            1 => Ok(Profile::K1),
            2 => Ok(Profile::K2),
            3 => Ok(Profile::K3),
            _ => Err(Error::InvalidArgument(format!(
                "profile index {i} not in 1..=3"
            ))),
        }
    }

    pub fn eval(self, t: f64) -> f64 {
        let lower = t <= 0.5;
        match self {
            Profile::H1 => 1.0 - 4.0 * (t - 0.5).powi(2),
            Profile::H2 => 2.0 * t * (1.0 - t) + 0.5,
            Profile::H3 | Profile::Unit => 1.0,
            Profile::K1 if lower => 16.0 * (t - 0.25).powi(2),
            Profile::K1 => 16.0 * (t - 0.75).powi(2),
            Profile::K2 if lower => 24.0 * (t - 0.25) * (t - 1.0 / 3.0),
            Profile::K2 => 24.0 * (t - 0.75) * (t - 2.0 / 3.0),
            Profile::K3 if lower => 24.0 * (t - 0.25) * (t - 1.0 / 6.0),
            Profile::K3 => 24.0 * (t - 0.75) * (t - 5.0 / 6.0),
        }
    }

    /// `max(eval(t), 0)`
    pub fn positive(self, t: f64) -> f64 {
        self.eval(t).max(0.0)
    }
}

/// `h_i(t)` for `i ∈ {1, 2, 3}`.
pub fn profile_h(i: usize, t: f64) -> Result<f64> {
    Ok(Profile::h(i)?.eval(t))
}

/// `k_i(t)` for `i ∈ {1, 2, 3}`.
pub fn profile_k(i: usize, t: f64) -> Result<f64> {
    Ok(Profile::k(i)?.eval(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

/// `amplitude · √(p⁺(s) p⁺(t)) · exp(−|x_d − y_d| / l)` where `s`, `t` are the
/// two points' coordinates along `profile_axis`, mapped affinely from
/// `profile_range` onto `[0, 1]`, and `d` is `decay_axis`. The product form
/// keeps the kernel positive semi-definite for any profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosedFormKernel {
    /// Vector component the load acts on (0 or 1), `None` for scalar loads.
    pub component: Option<usize>,
    pub amplitude: f64,
    pub profile: Profile,
    pub correlation_length: f64,
    pub profile_axis: Axis,
    pub profile_range: [f64; 2],
    pub decay_axis: Axis,
}

impl ClosedFormKernel {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kernel amplitude {} must be ≥ 0",
                self.amplitude
            )));
        }
        if !(self.correlation_length > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "correlation length {} must be > 0",
                self.correlation_length
            )));
        }
        if !(self.profile_range[1] > self.profile_range[0]) {
            return Err(Error::InvalidArgument(format!(
                "empty profile range {:?}",
                self.profile_range
            )));
        }
        if matches!(self.component, Some(c) if c > 1) {
            return Err(Error::InvalidArgument(
                "kernel component must be 0 or 1".into(),
            ));
        }
        Ok(())
    }

    pub fn eval(&self, x: Point, y: Point) -> f64 {
        let a = self.profile_axis.index();
        let d = self.decay_axis.index();
        let [lo, hi] = self.profile_range;
        let p = |z: f64| self.profile.positive((z - lo) / (hi - lo));
        self.amplitude
            * (p(x[a]) * p(y[a])).sqrt()
            * (-(x[d] - y[d]).abs() / self.correlation_length).exp()
    }
}

/// `weight · (a⊗b + b⊗a) / 2`
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTerm {
    pub a: Field,
    pub b: Field,
    pub weight: f64,
}

impl KernelTerm {
    pub fn pure(a: Field, weight: f64) -> Self {
        Self {
            b: a.clone(),
            a,
            weight,
        }
    }

    pub fn is_pure(&self) -> bool {
        self.a == self.b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CorrelationKernel {
    FiniteRank { terms: Vec<KernelTerm> },
    ClosedForm(ClosedFormKernel),
}

impl CorrelationKernel {
    pub fn term_count(&self) -> usize {
        match self {
            CorrelationKernel::FiniteRank { terms } => terms.len(),
            CorrelationKernel::ClosedForm(_) => 0,
        }
    }
}

/// `g_a⊗g_a + g_b⊗g_b + α (g_a⊗g_b + g_b⊗g_a)`, collapsed to the single pure
/// term `(g_a ± g_b)⊗(g_a ± g_b)` when `α = ±1`.
pub fn finite_rank_correlated_pair(
    g_a: &Field,
    g_b: &Field,
    alpha: f64,
) -> Result<CorrelationKernel> {
    if !(alpha.abs() <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "correlation degree {alpha} not in [-1, 1]"
        )));
    }
    if g_a.kind() != g_b.kind() || g_a.values().len() != g_b.values().len() {
        return Err(Error::DimensionMismatch {
            what: "correlated load pair",
            expected: g_a.values().len(),
            actual: g_b.values().len(),
        });
    }
    let terms = if alpha == 1.0 || alpha == -1.0 {
        vec![KernelTerm::pure(g_a.axpy(alpha, g_b)?, 1.0)]
    } else {
        let mut t = vec![
            KernelTerm::pure(g_a.clone(), 1.0),
            KernelTerm::pure(g_b.clone(), 1.0),
        ];
        if alpha != 0.0 {
            t.push(KernelTerm {
                a: g_a.clone(),
                b: g_b.clone(),
                weight: 2.0 * alpha,
            });
        }
        t
    };
    Ok(CorrelationKernel::FiniteRank { terms })
}
