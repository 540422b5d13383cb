// Draws negatives from a long-tail label marginal with an alias table and
// checks the empirical frequencies against the target probabilities.
//
// ```text
// cargo run --release --example alias_sampling
// ```

use negsample::label_stats::{make_profile, ImbalanceProfile, ProfileKind};
use negsample::rng;
use negsample::sampler::AliasTable;

pub struct AliasSummary {
    pub draws: usize,
    /// Largest `|empirical - target|` over labels.
    pub max_abs_error: f64,
    /// Draws of the excluded label (should be zero).
    pub excluded_hits: usize,
}

pub fn run_example() -> negsample::Result<AliasSummary> {
    let pi = make_profile(&ImbalanceProfile::new(ProfileKind::Exp, 50, 100.0))?;
    let table = AliasTable::new(&pi)?;
    let mut r = rng::stream(42, "example.alias", 0);

    let draws = 200_000;
    let mut counts = vec![0usize; pi.len()];
    for _ in 0..draws {
        counts[table.sample(&mut r)] += 1;
    }
    let max_abs_error = counts.iter().enumerate().map(|(j, &c)| (c as f64 / draws as f64 - pi.prob(j)).abs()).fold(0.0, f64::max);

    println!("label  target     empirical");
    for j in [0, 1, 10, 25, 49] {
        println!("{j:>5}  {:.6}   {:.6}", pi.prob(j), counts[j] as f64 / draws as f64);
    }
    println!("max |empirical - target| over {} labels: {max_abs_error:.2e}", pi.len());

    // m negatives for positive label 0, which carries the most mass
    let neg = table.draw(&mut r, 10_000, Some(0))?;
    let excluded_hits = neg.labels.iter().filter(|&&j| j == 0).count();
    println!("draws of the excluded positive among {} negatives: {excluded_hits}", neg.len());

    Ok(AliasSummary { draws, max_abs_error, excluded_hits })
}

fn main() -> negsample::Result<()> {
    run_example().map(|_| ())
}
