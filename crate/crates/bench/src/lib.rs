//! Synthetic inputs shared by the benchmarks.

use std::collections::BTreeSet;

use prf_core::{CoverageMatrix, Profile, ProgramElement, TestId, TestRecord, TestStatus};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// A profile with `tests` tests over `elements` line elements, each test
/// covering roughly `density` of them. One test in ten fails.
pub fn random_profile(tests: usize, elements: usize, density: f64, seed: u64) -> Profile {
    let mut rng = StdRng::seed_from_u64(seed);
    let lines: Vec<ProgramElement> = (0..elements)
        .map(|i| ProgramElement::line(format!("src/f{}.c", i % 17), format!("fn{}", i % 53), i as u32 + 1))
        .collect();
    let mut records = Vec::with_capacity(tests);
    let mut matrix = CoverageMatrix::new();
    for t in 0..tests {
        let id = TestId::new(format!("t{t:05}")).expect("valid id");
        let status = if t % 10 == 0 { TestStatus::Failing } else { TestStatus::Passing };
        records.push(TestRecord { id: id.clone(), status, duration_ms: rng.random_range(1..500) });
        let covered: BTreeSet<ProgramElement> = lines.iter().filter(|_| rng.random_bool(density)).cloned().collect();
        matrix.insert(id, covered);
    }
    Profile::new(records, Some(matrix))
}
