use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{
    assemble_elasticity, assemble_interface_dirichlet, assemble_poisson, constrained_dofs,
    nitsche_weight, solve_spd, Field, FieldKind, HookeLaw, SolverOptions,
};
use crate::levelset::{InterfaceCut, InterfaceSegment, LevelSet};
use crate::mesh::{BoundaryTag, Mesh};
use crate::sparse::CsrMatrix;

/// The deterministic boundary-value problem behind a state ensemble.
#[derive(Debug, Clone)]
pub enum Operator {
    /// `-div(ρ ∇u) = f` with `ρ` piecewise constant.
    Poisson { density: Vec<f64> },
    /// Poisson problem on the negative phase of a level set with `u = 0`
    /// imposed weakly (Nitsche) on the zero level. The void keeps an
    /// `ersatz`-scaled conductivity so the system stays definite.
    ImmersedPoisson {
        fraction: Vec<f64>,
        ersatz: f64,
        cut: InterfaceCut,
        penalty: f64,
    },
    /// Linear elasticity with an Ersatz-weighted Hooke's law.
    Elasticity { law: HookeLaw, density: Vec<f64> },
}

impl Operator {
    /// Immersed Poisson operator for the shape `{φ < 0}`.
    pub fn immersed_poisson(ls: &LevelSet, ersatz: f64, penalty: f64) -> Result<Self> {
        if !(ersatz > 0.0 && ersatz < 1.0) || !(penalty > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "immersed Poisson needs ersatz in (0,1) and penalty > 0 (got {ersatz}, {penalty})"
            )));
        }
        Ok(Operator::ImmersedPoisson {
            fraction: ls.material_fraction(),
            ersatz,
            cut: ls.interface()?,
            penalty,
        })
    }

    /// Ersatz elasticity operator for the shape `{φ < 0}`.
    pub fn ersatz_elasticity(ls: &LevelSet, law: HookeLaw, ersatz: f64) -> Result<Self> {
        if !(ersatz > 0.0 && ersatz < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "ersatz ratio {ersatz} not in (0,1)"
            )));
        }
        Ok(Operator::Elasticity {
            law,
            density: ls.density(ersatz),
        })
    }

    /// Material fraction per triangle for the immersed operator.
    pub fn material_fraction(&self) -> Option<&[f64]> {
        match self {
            Operator::ImmersedPoisson { fraction, .. } => Some(fraction),
            _ => None,
        }
    }

    pub fn field_kind(&self) -> FieldKind {
        match self {
            Operator::Elasticity { .. } => FieldKind::Vector2,
            _ => FieldKind::Scalar,
        }
    }

    /// Nitsche penalty `γ_k / h` on one interface piece, zero unless immersed.
    pub fn interface_weight(&self, mesh: &Mesh, seg: &InterfaceSegment) -> f64 {
        match self {
            Operator::ImmersedPoisson {
                fraction,
                ersatz,
                penalty,
                ..
            } => {
                let f = fraction[seg.triangle];
                nitsche_weight(
                    mesh,
                    seg.triangle,
                    seg.length,
                    f + (1.0 - f) * ersatz,
                    *penalty,
                )
            }
            _ => 0.0,
        }
    }

    /// Stiffness before boundary conditions.
    pub fn assemble(&self, mesh: &Mesh) -> Result<CsrMatrix> {
        match self {
            Operator::Poisson { density } => assemble_poisson(mesh, density),
            Operator::ImmersedPoisson {
                fraction,
                ersatz,
                cut,
                penalty,
            } => {
                let rho: Vec<f64> = fraction.iter().map(|f| f + (1.0 - f) * ersatz).collect();
                let k = assemble_poisson(mesh, &rho)?;
                Ok(k.add(&assemble_interface_dirichlet(mesh, cut, &rho, *penalty)))
            }
            Operator::Elasticity { law, density } => assemble_elasticity(mesh, law, density),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadKind {
    /// Nodal source density integrated against the P1 mass (restricted to
    /// the material phase for the immersed operator).
    Body,
    /// Nodal surface traction integrated over the edges carrying the tag.
    Surface(BoundaryTag),
}

/// Deterministic solutions `u_k`, one per load, and everything needed to
/// evaluate means and re-use the operator for adjoint solves.
#[derive(Debug, Clone)]
pub struct StateEnsemble {
    pub states: Vec<Field>,
    pub adjoints: Option<Vec<Field>>,
    /// `𝔼(u)`, when the load model has a mean.
    pub mean_state: Option<Field>,
    /// Coefficients `c_k` with `𝔼(u) = Σ c_k u_k`.
    pub mean_coefficients: Option<Vec<f64>>,
    pub operator: Arc<Operator>,
    /// Assembled discrete right-hand sides (constrained entries zeroed).
    pub rhs: Vec<Vec<f64>>,
    energy: Arc<CsrMatrix>,
    system: Arc<CsrMatrix>,
    constrained: Arc<Vec<bool>>,
    solver: SolverOptions,
}

impl StateEnsemble {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Matrix of the energy bilinear form (before elimination).
    pub fn energy_matrix(&self) -> &CsrMatrix {
        &self.energy
    }

    /// Solves the (symmetric) state operator for an arbitrary discrete rhs,
    /// with the same boundary conditions and solver options.
    pub fn solve_operator(&self, rhs: &[f64]) -> Result<Field> {
        let mut b = rhs.to_vec();
        for (v, &c) in b.iter_mut().zip(self.constrained.iter()) {
            if c {
                *v = 0.0;
            }
        }
        let x = solve_spd(&self.system, &b, self.solver)?;
        Field::new(self.operator.field_kind(), x)
    }

    /// Sets `𝔼(u) = Σ c_k u_k`.
    pub fn set_mean_from_states(&mut self, coefficients: Vec<f64>) -> Result<()> {
        if coefficients.len() != self.states.len() {
            return Err(Error::DimensionMismatch {
                what: "mean coefficients",
                expected: self.states.len(),
                actual: coefficients.len(),
            });
        }
        let mut mean = Field::zeros(
            self.operator.field_kind(),
            self.states.first().map_or(0, |s| s.node_count()),
        );
        for (c, u) in coefficients.iter().zip(&self.states) {
            mean = mean.axpy(*c, u)?;
        }
        self.mean_state = Some(mean);
        self.mean_coefficients = Some(coefficients);
        Ok(())
    }
}

/// Discrete rhs of one load.
pub fn load_vector(
    mesh: &Mesh,
    operator: &Operator,
    load: &Field,
    kind: LoadKind,
) -> Result<Vec<f64>> {
    let fk = operator.field_kind();
    if load.kind() != fk || load.node_count() != mesh.node_count() {
        return Err(Error::InvalidArgument(format!(
            "load of kind {:?} with {} nodes does not match operator kind {:?} on {} nodes",
            load.kind(),
            load.node_count(),
            fk,
            mesh.node_count()
        )));
    }
    let mass = match (kind, operator) {
        (LoadKind::Body, Operator::ImmersedPoisson { fraction, .. }) => {
            mesh.mass_matrix(Some(fraction))
        }
        (LoadKind::Body, _) => mesh.mass_matrix(None),
        (LoadKind::Surface(tag), _) => mesh.boundary_mass_matrix(tag)?,
    };
    let c = fk.components();
    let mut out = vec![0.0; load.values().len()];
    for comp in 0..c {
        let mc = mass.mul_vec(&load.component(comp));
        for (i, v) in mc.into_iter().enumerate() {
            out[c * i + comp] = v;
        }
    }
    Ok(out)
}

/// Assembles once and solves one boundary-value problem per load.
pub fn solve_state_ensemble(
    mesh: &Mesh,
    operator: Operator,
    clamp: BoundaryTag,
    loads: &[Field],
    load_kind: LoadKind,
    solver: SolverOptions,
) -> Result<StateEnsemble> {
    if loads.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let energy = operator.assemble(mesh)?;
    let constrained = constrained_dofs(mesh, clamp, operator.field_kind())?;
    let system = energy.eliminate(&constrained);
    let rhs: Vec<Vec<f64>> = loads
        .iter()
        .map(|l| {
            let mut b = load_vector(mesh, &operator, l, load_kind)?;
            for (v, &c) in b.iter_mut().zip(&constrained) {
                if c {
                    *v = 0.0;
                }
            }
            Ok(b)
        })
        .collect::<Result<_>>()?;
    let kind = operator.field_kind();
    let states = rhs
        .par_iter()
        .enumerate()
        .map(|(k, b)| {
            solve_spd(&system, b, solver)
                .and_then(|x| Field::new(kind, x))
                .map_err(|e| Error::LoadSolve {
                    index: k,
                    source: Box::new(e),
                })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(StateEnsemble {
        states,
        adjoints: None,
        mean_state: None,
        mean_coefficients: None,
        operator: Arc::new(operator),
        rhs,
        energy: Arc::new(energy),
        system: Arc::new(system),
        constrained: Arc::new(constrained),
        solver,
    })
}
