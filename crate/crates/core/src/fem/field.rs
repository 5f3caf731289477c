use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldKind {
    Scalar,
    /// Two components per node, stored interleaved `(x0, y0, x1, y1, ...)`.
    Vector2,
}

impl FieldKind {
    pub fn components(self) -> usize {
        match self {
            FieldKind::Scalar => 1,
            FieldKind::Vector2 => 2,
        }
    }
}

/// Nodal P1 field on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    kind: FieldKind,
    values: Vec<f64>,
}

impl Field {
    pub fn new(kind: FieldKind, values: Vec<f64>) -> Result<Self> {
        if !values.len().is_multiple_of(kind.components()) {
            return Err(Error::InvalidArgument(format!(
                "{} values do not fit a {:?} field",
                values.len(),
                kind
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite field value at index {i}"
            )));
        }
        Ok(Self { kind, values })
    }

    pub fn scalar(values: Vec<f64>) -> Self {
        Self::new(FieldKind::Scalar, values).expect("finite scalar field")
    }

    pub fn vector2(values: Vec<f64>) -> Self {
        Self::new(FieldKind::Vector2, values).expect("finite vector field")
    }

    pub fn zeros(kind: FieldKind, nodes: usize) -> Self {
        Self {
            kind,
            values: vec![0.0; nodes * kind.components()],
        }
    }

    /// Vector field equal to `value` at every node.
    pub fn uniform_vector(nodes: usize, value: [f64; 2]) -> Self {
        let mut v = Vec::with_capacity(2 * nodes);
        for _ in 0..nodes {
            v.extend_from_slice(&value);
        }
        Self::vector2(v)
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn node_count(&self) -> usize {
        self.values.len() / self.kind.components()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, node: usize, component: usize) -> f64 {
        self.values[node * self.kind.components() + component]
    }

    /// One component as a scalar nodal vector.
    pub fn component(&self, component: usize) -> Vec<f64> {
        let c = self.kind.components();
        self.values
            .iter()
            .skip(component)
            .step_by(c)
            .copied()
            .collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            kind: self.kind,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// `self + factor * other`
    pub fn axpy(&self, factor: f64, other: &Field) -> Result<Self> {
        if self.kind != other.kind || self.values.len() != other.values.len() {
            return Err(Error::DimensionMismatch {
                what: "field",
                expected: self.values.len(),
                actual: other.values.len(),
            });
        }
        Ok(Self {
            kind: self.kind,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + factor * b)
                .collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
