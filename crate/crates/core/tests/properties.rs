use std::sync::Arc;

use corshape::correlation::{pivoted_cholesky, DenseAccessor, KernelTerm};
use corshape::fem::{assemble_elasticity, assemble_poisson};
use corshape::levelset::{density_from_levelset, Band};
use corshape::objectives::{compliance_gradient, compliance_mean, compliance_work};
use corshape::oracle::{objective_dense, solve_correlation_dense, DesignSystem};
use corshape::*;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

fn unit_box() -> Rect {
    Rect::new(0.0, 0.0, 1.0, 1.0)
}

fn psd_matrix(n: usize, r: usize, entries: &[f64]) -> DMatrix<f64> {
    let f = DMatrix::from_fn(n, r, |i, j| entries[(i * r + j) % entries.len()]);
    &f * f.transpose()
}

fn spectral_tail(c: &DMatrix<f64>, m: usize) -> f64 {
    let mut eig = SymmetricEigen::new(c.clone())
        .eigenvalues
        .as_slice()
        .to_vec();
    eig.sort_by(|a, b| b.total_cmp(a));
    eig[m.min(eig.len())..].iter().map(|v| v.max(0.0)).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mesh_is_deterministic_and_closes_its_perimeter(
        nx in 1usize..20, ny in 1usize..20, w in 0.5f64..3.0, h in 0.5f64..3.0,
    ) {
        let bbox = Rect::new(0.0, 0.0, w, h);
        let a = generate_structured_mesh(nx, ny, bbox).unwrap();
        let b = generate_structured_mesh(nx, ny, bbox).unwrap();
        prop_assert_eq!(&a, &b);
        let perimeter: f64 = a.boundary_edges().iter().map(|e| a.edge_length(e)).sum();
        prop_assert!((perimeter - 2.0 * (w + h)).abs() <= 1e-12 * perimeter.max(1.0));
        prop_assert!((a.total_area() - w * h).abs() <= 1e-12 * w * h);
    }

    #[test]
    fn boundary_mass_rows_sum_to_segment_length(nx in 2usize..30, lo in 0.0f64..0.4, len in 0.2f64..0.6) {
        let region = Region::Segment { a: [lo, 1.0], b: [lo + len, 1.0], tol: 1e-9 };
        let mesh = generate_structured_mesh(nx, 3, unit_box()).unwrap();
        match mesh.tag_boundary(&region, BoundaryTag::Neumann) {
            Ok(mesh) => {
                let g = mesh.boundary_mass_matrix(BoundaryTag::Neumann).unwrap();
                let total: f64 = g.mul_vec(&vec![1.0; mesh.node_count()]).iter().sum();
                let tagged: f64 = mesh
                    .edges_with_tag(BoundaryTag::Neumann)
                    .map(|e| mesh.edge_length(e))
                    .sum();
                prop_assert!((total - tagged).abs() <= 1e-12);
            }
            Err(e) => prop_assert!(matches!(e, Error::EmptyRegion { .. }), "{e}"),
        }
    }

    #[test]
    fn pivoted_cholesky_certificate(
        n in 2usize..25, r in 1usize..8, entries in prop::collection::vec(-1.0f64..1.0, 16..64),
        eps_exp in 1i32..10,
    ) {
        let c = psd_matrix(n, r, &entries);
        let acc = DenseAccessor::from_fn(n, |i, j| c[(i, j)]);
        let eps = 10f64.powi(-eps_exp);
        let fac = match pivoted_cholesky(&acc, eps, n) {
            Ok(f) => f,
            Err(Error::RankExhausted { partial, .. }) => *partial,
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let trace = c.trace();
        if trace > 0.0 {
            prop_assert!(fac.history.windows(2).all(|w| w[1] <= w[0]));
            let residual: f64 = (0..n).map(|i| c[(i, i)] - fac.approx_entry(i, i)).sum();
            prop_assert!((residual / trace - fac.trace_error).abs() <= 1e-10);
            for i in 0..n {
                prop_assert!(c[(i, i)] - fac.approx_entry(i, i) >= -1e-10 * trace);
            }
            for m in 0..=fac.rank() {
                prop_assert!(fac.history[m] * trace >= spectral_tail(&c, m) - 1e-10 * trace);
            }
            prop_assert!(fac.rank() <= n);
        }
    }

    #[test]
    fn finite_rank_kernels_recover_their_rank(r in 1usize..5, seed in 0u64..1000) {
        let mesh = generate_structured_mesh(12, 12, unit_box()).unwrap();
        let n = mesh.node_count();
        let terms = (0..r)
            .map(|k| {
                let a = (k as f64 + 1.0) * 3.0;
                let f = mesh
                    .vertices()
                    .iter()
                    .map(|p| (a * p[0] + seed as f64).sin() * (1.0 + k as f64 * p[1]))
                    .collect();
                KernelTerm::pure(Field::scalar(f), 1.0 + k as f64)
            })
            .collect();
        let kernel = CorrelationKernel::FiniteRank { terms };
        let dc = assemble_correlation_matrix(&kernel, &mesh, CorrelationRegion::Domain).unwrap();
        prop_assert_eq!(dc.dim(), n);
        let fac = dc.factorize(1e-10, n).unwrap();
        prop_assert_eq!(fac.rank(), r);
    }

    #[test]
    fn assembled_matrices_are_exactly_symmetric(
        nx in 2usize..10, ny in 2usize..10, rho in prop::collection::vec(1e-3f64..1.0, 200),
    ) {
        let mesh = generate_structured_mesh(nx, ny, unit_box()).unwrap();
        let density: Vec<f64> = (0..mesh.triangle_count()).map(|t| rho[t % rho.len()]).collect();
        let k = assemble_poisson(&mesh, &density).unwrap();
        let e = assemble_elasticity(&mesh, &HookeLaw::from_young_poisson(1.0, 0.3).unwrap(), &density).unwrap();
        for m in [k, e] {
            for i in 0..m.dim() {
                for (j, v) in m.row(i) {
                    prop_assert_eq!(v, m.get(j, i));
                }
            }
        }
    }

    #[test]
    fn solve_is_linear_and_sign_flip_keeps_density(a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let mesh = generate_structured_mesh(10, 10, unit_box())
            .unwrap()
            .tag_boundary(&Region::Rect { rect: unit_box(), tol: 1e-9 }, BoundaryTag::Dirichlet)
            .unwrap();
        let mesh = Arc::new(mesh);
        let ls = LevelSet::from_fn(mesh.clone(), |p| (p[0] - 0.5).hypot(p[1] - 0.5) - 0.35).unwrap();
        let law = HookeLaw::from_young_poisson(1.0, 0.3).unwrap();
        let n = mesh.node_count();
        let f = Field::vector2((0..2 * n).map(|i| (i as f64 * 0.37).sin()).collect());
        let g = Field::vector2((0..2 * n).map(|i| (i as f64 * 0.11).cos()).collect());
        let combo = f.scaled(a).axpy(b, &g).unwrap();
        let opts = SolverOptions { tol: 1e-12, max_iter: 10_000 };
        let solve = |loads: &[Field]| {
            let op = Operator::ersatz_elasticity(&ls, law, 1e-3).unwrap();
            solve_state_ensemble(&mesh, op, BoundaryTag::Dirichlet, loads, LoadKind::Body, opts).unwrap()
        };
        let ens = solve(&[f.clone(), g.clone(), combo, f.scaled(-1.0)]);
        let expect = ens.states[0].scaled(a).axpy(b, &ens.states[1]).unwrap();
        let scale = ens.states[2].max_abs().max(1e-300);
        for (x, y) in ens.states[2].values().iter().zip(expect.values()) {
            prop_assert!((x - y).abs() <= 1e-8 * scale.max(1.0));
        }
        let plus = solve(std::slice::from_ref(&f));
        let minus = solve(&[f.scaled(-1.0)]);
        let gp = compliance_gradient(&plus, &ls).unwrap();
        let gm = compliance_gradient(&minus, &ls).unwrap();
        prop_assert_eq!(gp.values().collect::<Vec<_>>(), gm.values().collect::<Vec<_>>());
    }

    #[test]
    fn levelset_advection_and_redistance(
        cx in 0.3f64..0.7, cy in 0.3f64..0.7, r in 0.1f64..0.25, v in -1.0f64..1.0,
    ) {
        let mesh = Arc::new(generate_structured_mesh(40, 40, unit_box()).unwrap());
        let ls = LevelSet::from_fn(mesh.clone(), |p| ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt() - r).unwrap();
        let zero = ls.advect(&vec![0.0; mesh.node_count()], 0.1, 10).unwrap();
        prop_assert_eq!(zero.phi(), ls.phi());
        let t = 0.05;
        let vel = vec![v; mesh.node_count()];
        let moved = ls.advect(&vel, t, 10).unwrap();
        let bound = |l: &LevelSet| l.phi().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        prop_assert!(bound(&moved) <= bound(&ls) + v.abs() * t + 1e-12);
        let red = moved.redistance(Band::Full).unwrap();
        let before = moved.material_fraction();
        let after = red.material_fraction();
        for (b, a) in before.iter().zip(&after) {
            if *b == 0.0 || *b == 1.0 {
                prop_assert_eq!(a, b);
            }
        }
        let share = red.gradient_norm_share(0.8, 1.2);
        prop_assert!(share >= 0.95, "share {share}");
    }

    #[test]
    fn density_is_monotone_in_phi(shift in 0.0f64..0.3, cx in 0.2f64..0.8) {
        let mesh = Arc::new(generate_structured_mesh(16, 16, unit_box()).unwrap());
        let phi = |p: [f64; 2]| (p[0] - cx).abs() + 0.5 * (p[1] - 0.5).abs() - 0.3;
        let a = LevelSet::from_fn(mesh.clone(), phi).unwrap();
        let b = LevelSet::from_fn(mesh.clone(), |p| phi(p) - shift).unwrap();
        let da = density_from_levelset(&a, 1e-3);
        let db = density_from_levelset(&b, 1e-3);
        prop_assert!(da.iter().zip(&db).all(|(x, y)| y >= x));
    }

    #[test]
    fn dense_correlation_is_psd_and_factor_invariant(
        n in 1usize..10, r in 1usize..4, entries in prop::collection::vec(-1.0f64..1.0, 40),
        h in -0.2f64..0.2,
    ) {
        let a0 = DMatrix::from_fn(n, n, |i, j| entries[(i * 7 + j) % 40] + if i == j { 4.0 } else { 0.0 });
        let a1 = DMatrix::from_fn(n, n, |i, j| 0.3 * entries[(i + 3 * j) % 40]);
        let sys = DesignSystem::new(a0, a1, DMatrix::identity(n, n)).unwrap();
        let f = DMatrix::from_fn(n, r, |i, j| entries[(i * r + j + 5) % 40]);
        let cf = &f * f.transpose();
        let cu = solve_correlation_dense(&sys, h, &cf).unwrap();
        prop_assert_eq!(&cu, &cu.transpose());
        let floor = SymmetricEigen::new(cu.clone()).eigenvalues.min();
        prop_assert!(floor >= -1e-10 * cu.trace().abs().max(1e-300));
        // any orthogonal mix of the factors gives the same correlation
        let (c, s) = (0.6, 0.8);
        let mut g = f.clone();
        if r >= 2 {
            for i in 0..n {
                g[(i, 0)] = c * f[(i, 0)] - s * f[(i, 1)];
                g[(i, 1)] = s * f[(i, 0)] + c * f[(i, 1)];
            }
        }
        let m1 = objective_dense(&sys, h, &cf).unwrap();
        let m2 = objective_dense(&sys, h, &(&g * g.transpose())).unwrap();
        prop_assert!((m1 - m2).abs() <= 1e-12 * m1.abs().max(1.0));
    }
}

#[test]
fn compliance_equals_boundary_work() {
    let spec = io::ScenarioSpec::new(io::Preset::BridgeCorrelated { alpha: 0.5 }).unwrap();
    let cfg = OptimizationConfig::new(spec.resolve().unwrap(), 0.35, 1);
    let s = &cfg.scenario;
    let loads = optimizer::factorize_loads(s, cfg.cholesky_epsilon, cfg.max_rank).unwrap();
    let ls = initialize_levelset(s.mesh.clone(), &s.holes).unwrap();
    let ev = optimizer::evaluate(&cfg, &loads, &ls, 0).unwrap();
    let work = compliance_work(&ev.ensemble);
    let energy = compliance_mean(&ev.ensemble).unwrap();
    assert!((work - energy).abs() <= 1e-6 * energy, "{work} vs {energy}");
    assert!(ev.gradient.values().all(|d| d <= 0.0));
}

#[test]
fn vanishing_loads_give_vanishing_density_and_a_fixed_point() {
    let spec = io::ScenarioSpec::new(io::Preset::BridgeCorrelated { alpha: 0.0 }).unwrap();
    let mut scenario = spec.resolve().unwrap();
    scenario.pieces.clear();
    let mut cfg = OptimizationConfig::new(scenario, 0.5, 3);
    let ls = initialize_levelset(cfg.scenario.mesh.clone(), &cfg.scenario.holes).unwrap();
    let loads = optimizer::factorize_loads(&cfg.scenario, 1e-6, 10).unwrap();
    let ev = optimizer::evaluate(&cfg, &loads, &ls, 0).unwrap();
    assert!(ev.gradient.values().all(|d| d == 0.0));
    cfg.volume_target = ls.volume();
    cfg.penalty0 = Some(1.0);
    let h = run_optimization(&cfg).unwrap();
    assert_eq!(h.final_phi, ls.phi());
}
