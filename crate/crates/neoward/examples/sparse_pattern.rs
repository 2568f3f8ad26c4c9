//! Size and speed of the log-strided attention pattern.
//!
//! ```text
//! cargo run --release -p neoward --example sparse_pattern
//! ```

use neoward_smt::params::Dims;
use neoward_smt::{scaling, Pattern};

fn main() {
    let n = 16;
    let p = Pattern::new(n);
    println!("n = {n}, offsets {:?}", p.offsets);
    for i in [0, 7, 15] {
        println!("  query {i:>2} sees {:?}", p.neighbors(i));
    }

    println!("\n{:>6} {:>9} {:>10} {:>8} {:>10}", "n", "edges", "dense", "ratio", "ms");
    let pts = scaling::measure(&scaling::default_lengths(), Dims::default(), 3, 1);
    for pt in &pts {
        let dense = pt.n * pt.n;
        println!("{:>6} {:>9} {:>10} {:>8.4} {:>10.3}", pt.n, pt.edges, dense, pt.edges as f64 / dense as f64, pt.seconds * 1e3);
    }
    println!("log-log slope {:.3}", scaling::log_log_slope(&pts));
}
