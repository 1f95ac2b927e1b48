//! Exact reachability on the four-by-ten grid counterexample.
//!
//! `(3, 9)` is reachable in one step and `(4, 8)` in two, yet no one-step
//! move joins them, so pointwise reach sets do not compose.

use ddto::oracle::{exhaustive_ddto, remark_instance, Anchor, DEFAULT_BUDGET};

fn main() -> Result<(), ddto::DdtoError> {
    let sys = remark_instance();
    for m in 1..=2 {
        let f = sys.forward_reach(m, &sys.z0);
        println!("F{m}(z0): {} states, contains (3,9): {}, (4,8): {}", f.len(), f.contains(&vec![3, 9]), f.contains(&vec![4, 8]));
    }
    println!("F1((3,9)) contains (4,8): {}", sys.forward_reach(1, &[3, 9]).contains(&vec![4, 8]));

    let tables = sys.reach_tables();
    println!("branch time of target 1: {}", tables.branch_time(&[0])?);

    let ex = exhaustive_ddto(&sys, Anchor::Free, DEFAULT_BUDGET)?;
    println!("exhaustive anchor {}, objective {}", ex.anchor + 1, ex.objective);
    for (k, x) in ex.trajectories[0].iter().enumerate() {
        println!("  k={k} {x:?}");
    }
    Ok(())
}
