//! Minimum-cost matching of detections between two frames.

use behavior_attn::tracking::{hungarian_assign, CostMatrix};

fn main() -> behavior_attn::Result<()> {
    // Three tracks, four detections: one detection stays unmatched.
    let rows = vec![
        vec![4.0, 1.0, 3.0, 9.0],
        vec![2.0, 0.0, 5.0, 8.0],
        vec![3.0, 2.0, 2.0, 7.0],
    ];
    let costs = CostMatrix::from_rows(&rows)?;
    let a = hungarian_assign(&costs);
    for (r, c) in &a.matches {
        println!("track {r} -> detection {c} (cost {})", costs.get(*r, *c));
    }
    println!("total cost {}", a.total_cost(&costs));
    Ok(())
}
