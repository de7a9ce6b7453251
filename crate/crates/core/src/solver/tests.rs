use super::*;
use alloc::vec;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn trace_le(dims: &[usize], bound: f64) -> Vec<ProblemConstraint> {
    // one "Tr(X_b) <= bound" per block
    (0..dims.len())
        .map(|b| ProblemConstraint {
            coeffs: dims.iter().enumerate().map(|(j, &d)| if j == b { linalg::identity(d) } else { linalg::zeros(d) }).collect(),
            bound,
            sense: Sense::Le,
        })
        .collect()
}

#[test]
fn linear_program_in_disguise() {
    let p = ConvexProblem {
        block_dims: vec![1],
        log_terms: vec![],
        linear: vec![linalg::identity(1) * c(-1.0)],
        constraints: trace_le(&[1], 1.0),
    };
    let s = solve_problem(&p, None, &SolverOptions::default(), None).unwrap();
    assert_eq!(s.status, SolveStatus::Optimal);
    assert!((s.blocks[0][(0, 0)].re - 1.0).abs() < 1e-7);
    assert!((s.objective - 1.0).abs() < 1e-7);
}

#[test]
fn single_log_term_puts_all_power_on_first_entry() {
    let mut m = linalg::zeros(2);
    m[(0, 0)] = c(1.0);
    let p = ConvexProblem {
        block_dims: vec![2],
        log_terms: vec![ProblemLogTerm { weight: 1.0, constant: 1.0, coeffs: vec![m] }],
        linear: vec![linalg::zeros(2)],
        constraints: trace_le(&[2], 1.0),
    };
    let s = solve_problem(&p, None, &SolverOptions::default(), None).unwrap();
    assert_eq!(s.status, SolveStatus::Optimal);
    assert!((s.objective - core::f64::consts::LN_2).abs() < 1e-7, "{}", s.objective);
    assert!((s.blocks[0][(0, 0)].re - 1.0).abs() < 1e-6);
    assert!(s.blocks[0][(1, 1)].re.abs() < 1e-6);
}

#[test]
fn infeasible_and_boundary_are_distinguished() {
    let dims = [2usize];
    let mut cons = trace_le(&dims, 1.0);
    cons.push(ProblemConstraint { coeffs: vec![linalg::identity(2)], bound: 5.0, sense: Sense::Ge });
    let p = ConvexProblem { block_dims: dims.to_vec(), log_terms: vec![], linear: vec![linalg::zeros(2)], constraints: cons.clone() };
    assert!(matches!(phase1(&p, &SolverOptions::default()).unwrap(), Phase1Outcome::Infeasible { .. }));
    assert!(matches!(solve_problem(&p, None, &SolverOptions::default(), None), Err(Error::Infeasible { .. })));

    // Tr X >= 1 together with Tr X <= 1: only the boundary is feasible
    cons[1].bound = 1.0;
    let p = ConvexProblem { constraints: cons.clone(), ..p };
    assert!(matches!(phase1(&p, &SolverOptions::default()).unwrap(), Phase1Outcome::NoStrictInterior { .. }));

    cons[1].bound = 0.5;
    let p = ConvexProblem { constraints: cons, ..p };
    match phase1(&p, &SolverOptions::default()).unwrap() {
        Phase1Outcome::Feasible(x) => {
            let tr = linalg::real_trace(&x[0]);
            assert!(tr > 0.5 && tr < 1.0);
            assert!(HermitianEigen::new(&x[0]).min_value() > 0.0);
        }
        o => panic!("{o:?}"),
    }
}

#[test]
fn unbounded_feasible_set_is_rejected() {
    let p = ConvexProblem {
        block_dims: vec![2],
        log_terms: vec![],
        linear: vec![linalg::zeros(2)],
        constraints: vec![ProblemConstraint {
            coeffs: vec![linalg::outer(&crate::linalg::CVec::from_vec(vec![c(1.0), c(0.0)]))],
            bound: 1.0,
            sense: Sense::Le,
        }],
    };
    assert!(matches!(solve_problem(&p, None, &SolverOptions::default(), None), Err(Error::Unbounded { block: 0 })));
}

#[test]
fn zero_row_constraints() {
    let mut cons = trace_le(&[1], 1.0);
    cons.push(ProblemConstraint { coeffs: vec![linalg::zeros(1)], bound: 0.0, sense: Sense::Ge });
    let p = ConvexProblem { block_dims: vec![1], log_terms: vec![], linear: vec![linalg::identity(1) * c(-1.0)], constraints: cons.clone() };
    assert!(solve_problem(&p, None, &SolverOptions::default(), None).is_ok());
    cons[1].bound = 1.0;
    let p = ConvexProblem { constraints: cons, ..p };
    assert!(matches!(solve_problem(&p, None, &SolverOptions::default(), None), Err(Error::Infeasible { .. })));
}

#[test]
fn observer_sees_both_phases() {
    let dims = [2usize];
    let mut cons = trace_le(&dims, 1.0);
    cons.push(ProblemConstraint { coeffs: vec![linalg::identity(2)], bound: 0.9, sense: Sense::Ge });
    let p = ConvexProblem { block_dims: dims.to_vec(), log_terms: vec![], linear: vec![linalg::identity(2)], constraints: cons };
    let mut recs: Vec<TraceRecord> = Vec::new();
    let mut sink = |r: &TraceRecord| recs.push(*r);
    let s = solve_problem(&p, None, &SolverOptions::default(), Some(&mut sink)).unwrap();
    assert!((s.objective + 0.9).abs() < 1e-7);
    assert!(recs.iter().any(|r| r.phase == SolvePhase::PhaseOne));
    assert!(recs.iter().any(|r| r.phase == SolvePhase::Main));
}
