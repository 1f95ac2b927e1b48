use ddto::oracle::*;
use ddto::DdtoError;

fn pm3() -> GridSystem {
    integrator_instance("pm3", 5, vec![vec![3], vec![-3]], vec![0], 5)
}

#[test]
fn remark_counterexample_is_exact() {
    let s = remark_instance();
    assert_eq!(s.forward_reach(0, &[0, 0]), [vec![0, 0]].into_iter().collect());
    assert!(s.forward_reach(1, &[0, 0]).contains(&vec![3, 9]));
    assert!(s.forward_reach(2, &[0, 0]).contains(&vec![4, 8]));
    assert!(!s.forward_reach(1, &[3, 9]).contains(&vec![4, 8]));
    let rep = check_theorems(&s, DEFAULT_BUDGET).unwrap();
    assert!(rep.monotone_nonemptiness);
}

#[test]
fn empty_input_set_reaches_nothing() {
    let mut s = pm3();
    s.inputs.clear();
    assert!(s.forward_reach(1, &[0]).is_empty());
    assert_eq!(s.forward_reach(0, &[0]).len(), 1);
}

#[test]
fn backward_reach_examples() {
    let s = pm3();
    let z: StateSet = [vec![0]].into_iter().collect();
    assert_eq!(s.backward_reach(0, &z), z);
    assert_eq!(s.backward_reach(1, &z), [vec![-1], vec![0], vec![1]].into_iter().collect());
    let outside: StateSet = [vec![9]].into_iter().collect();
    assert!(s.backward_reach(2, &outside).is_empty());
}

#[test]
fn branch_time_examples() {
    let s = pm3();
    assert_eq!(branch_time_oracle(&s, &[0, 1]).unwrap(), 2);
    assert_eq!(branch_time_oracle(&s, &[1]).unwrap(), 5);
    let twin = integrator_instance("twin", 5, vec![vec![2], vec![2]], vec![0], 4);
    assert_eq!(branch_time_oracle(&twin, &[0, 1]).unwrap(), 4);
    let far = integrator_instance("far", 9, vec![vec![8]], vec![0], 3);
    assert!(matches!(branch_time_oracle(&far, &[0]), Err(DdtoError::UndefinedBranchTime(_))));
}

#[test]
fn lambda_sets_examples() {
    let s = pm3();
    let t = s.reach_tables();
    assert_eq!(t.lambda_sets(1), vec![vec![0], vec![1], vec![0, 1]]);
    assert_eq!(t.lambda_sets(5), vec![vec![0], vec![1]]);
    assert!(t.k_reach(0, 5).iter().all(|x| x == &vec![3]));
    assert!(t.k_reach_set(&[0, 1], 1).contains(&vec![0]));
}

#[test]
fn reach_sets_follow_the_one_step_recursion() {
    for sys in random_corpus(31, 25) {
        let z0 = sys.z0.clone();
        for m in 1..=sys.horizon {
            let direct = sys.forward_reach(m, &z0);
            let rec: StateSet = sys.forward_reach(m - 1, &z0).iter().flat_map(|y| sys.forward_reach(1, y)).collect();
            assert_eq!(direct, rec, "{}", sys.name);
        }
    }
}

#[test]
fn forward_and_backward_reach_are_dual() {
    for sys in random_corpus(32, 25) {
        let universe = sys.universe();
        for m in 0..=3 {
            let fwd = sys.forward_reach(m, &sys.z0);
            for y in &universe {
                let single: StateSet = [y.clone()].into_iter().collect();
                let back = sys.backward_reach(m, &single);
                assert_eq!(fwd.contains(y), back.contains(&sys.z0), "{} m={m} y={y:?}", sys.name);
            }
        }
    }
}

#[test]
fn every_feasible_trajectory_passes_through_the_k_reach_sets() {
    for sys in random_corpus(33, 20) {
        let t = sys.reach_tables();
        for j in 0..sys.targets.len() {
            for traj in trajectories_to(&sys, &t, j, DEFAULT_BUDGET).unwrap() {
                for (k, x) in traj.iter().enumerate() {
                    assert!(t.k_reach(j, k + 1).contains(x), "{}", sys.name);
                }
            }
        }
    }
}

#[test]
fn exhaustive_examples() {
    let one = integrator_instance("one", 4, vec![vec![2]], vec![0], 4);
    assert_eq!(exhaustive_ddto(&one, Anchor::Target(0), DEFAULT_BUDGET).unwrap().objective, 0);
    let twin = integrator_instance("twin", 4, vec![vec![2], vec![2]], vec![0], 4);
    let sol = exhaustive_ddto(&twin, Anchor::Free, DEFAULT_BUDGET).unwrap();
    assert_eq!(sol.objective, 0);
    assert!(sol.sets.iter().all(|s| s == &vec![0, 1]));
    let s = pm3();
    let sol = exhaustive_ddto(&s, Anchor::Target(0), DEFAULT_BUDGET).unwrap();
    let count: usize = sol.sets.iter().map(|j| j.len()).sum();
    assert_eq!(sol.objective + count, 2 * 5);
    assert_eq!(sol.branch_times, vec![5, 2]);
}

#[test]
fn enumeration_budget_is_enforced() {
    let s = pm3();
    assert!(matches!(exhaustive_ddto(&s, Anchor::Free, 3), Err(DdtoError::EnumerationBudget { .. })));
}

#[test]
fn theorem_battery_on_the_random_corpus() {
    let mut corpus = random_corpus(2024, 60);
    corpus.push(remark_instance());
    corpus.extend(convex_corpus(7, 10));
    for sys in &corpus {
        let r = check_theorems(sys, DEFAULT_BUDGET).unwrap();
        assert!(r.all_pass(), "{}: {:?}", sys.name, r.failures);
    }
}

#[test]
fn instances_round_trip_through_json() {
    for sys in random_corpus(5, 10) {
        let text = serde_json::to_string(&sys).unwrap();
        let back: GridSystem = serde_json::from_str(&text).unwrap();
        assert_eq!(back, sys);
    }
}
