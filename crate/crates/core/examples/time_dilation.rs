//! Mapping between normalized and physical time for a piecewise-constant
//! dilation profile, and resampling node values onto a uniform clock.

use ddto::scp::TimeMap;

fn main() -> Result<(), ddto::DdtoError> {
    let s = [2.0, 2.0, 6.0, 1.0];
    let map = TimeMap::from_dilation(&s)?;
    println!("knot times {:?}, final time {}", map.knot_times(), map.final_time());

    for tau in [0.0, 0.1, 0.5, 0.6, 1.0] {
        let t = map.t(tau);
        println!("tau {tau:.2} -> t {t:.3} -> tau {:.2}", map.tau(t));
    }

    let values: Vec<Vec<f64>> = (0..=s.len()).map(|k| vec![k as f64, (k * k) as f64]).collect();
    let (times, rows) = map.resample(&values, 0.4);
    for (t, v) in times.iter().zip(&rows) {
        println!("t {t:.2}: {v:?}");
    }
    Ok(())
}
