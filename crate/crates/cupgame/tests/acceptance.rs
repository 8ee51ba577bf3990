//! Runs every acceptance criterion and prints one line per criterion.
//! Built without the test harness so the lines always reach the output.
//!
//! The scale defaults to `full`; set `CUPGAME_ACCEPTANCE_SCALE=fast` for a
//! quick pass at reduced sizes.

use cupgame::suite::{CriterionReport, Scale, Suite};
use num_bigint::BigInt;
use num_rational::BigRational;

/// Final backlog the adaptive filler forces on greedy: half the harmonic
/// sum 1/2 + 1/3 + ... + p/n.
fn harmonic_oracle(n: u64, p: u64) -> BigRational {
    let half = BigRational::new(BigInt::from(1), BigInt::from(2));
    let sum = (2..=n / p).fold(BigRational::from_integer(BigInt::from(0)), |acc, k| {
        acc + BigRational::new(BigInt::from(1), BigInt::from(k))
    });
    sum * half
}

fn scale() -> Scale {
    std::env::var("CUPGAME_ACCEPTANCE_SCALE").ok().map_or(Scale::Full, |s| s.parse().expect("fast or full"))
}

fn check_exact(r: &CriterionReport) -> Vec<String> {
    let mut problems = Vec::new();
    for c in &r.exact {
        let oracle = harmonic_oracle(c.n, c.p);
        if c.bound.inner() != &oracle {
            problems.push(format!("{}: bound {} differs from oracle {}", c.label, c.bound, oracle));
        }
        if c.measured.inner() < &oracle {
            problems.push(format!("{}: measured {} below oracle {}", c.label, c.measured, oracle));
        }
    }
    problems
}

fn main() {
    let half = |n, d| BigRational::new(BigInt::from(n), BigInt::from(d));
    assert_eq!(harmonic_oracle(8, 2), half(13, 24));
    assert_eq!(harmonic_oracle(4, 1), half(13, 24));
    assert_eq!(harmonic_oracle(2, 1), half(1, 4));

    let scale = scale();
    println!("acceptance suite at {scale:?} scale");
    let mut suite = Suite::new(scale, 0);
    let reports = suite.run(|r| println!("{}", r.line()));
    let mut failures = Vec::new();
    for r in &reports {
        let problems = check_exact(r);
        let oracle_ok = problems.is_empty();
        if !r.exact.is_empty() {
            println!(
                "criterion {:>2} exact oracle check {}  {} comparisons{}",
                r.id,
                if oracle_ok { "PASS" } else { "FAIL" },
                r.exact.len(),
                if oracle_ok { String::new() } else { format!(": {}", problems.join("; ")) }
            );
        }
        if !r.passed || !oracle_ok {
            failures.push(r.id);
        }
    }
    assert_eq!(reports.len(), 10);
    if !failures.is_empty() {
        eprintln!("criteria failed at {scale:?} scale: {failures:?}");
        std::process::exit(1);
    }
    println!("all {} criteria passed", reports.len());
}
