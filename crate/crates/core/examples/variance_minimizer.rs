// The sampling distribution that minimizes the variance of the sampled
// decoupled loss, compared with uniform and frequency-based sampling.

use negsample::label_stats::{make_profile, ImbalanceProfile, LabelDistribution, ProfileKind};
use negsample::variance_opt::{optimal_q, variance_under};
use negsample::{MarginLossPair, MarginMatrix, MarginPreset};

pub struct VarianceComparison {
    pub optimal: f64,
    pub uniform: f64,
    pub frequency: f64,
}

pub fn run_example() -> negsample::Result<VarianceComparison> {
    let (l, m, y) = (40, 8, 0);
    let pi = make_profile(&ImbalanceProfile::new(ProfileKind::Exp, l, 100.0))?;
    let rho = MarginMatrix::from_preset(MarginPreset::Equalised, &pi);
    let pair = MarginLossPair::softplus();
    let f: Vec<f64> = (0..l).map(|j| 1.5 * (j as f64 * 0.91).cos()).collect();

    let best = optimal_q(y, &f, &rho, &pair, m)?;
    let q_star = best.q_star.expect("softplus terms are positive");
    let optimal = variance_under(&q_star, y, &f, &rho, m, &pair)?;
    let uniform = variance_under(&LabelDistribution::uniform(l)?.excluding(y)?, y, &f, &rho, m, &pair)?;
    let frequency = variance_under(&pi.excluding(y)?, y, &f, &rho, m, &pair)?;

    println!("variance of the sampled decoupled loss, m = {m}");
    println!("  optimal q*   {optimal:.3e}");
    println!("  uniform      {uniform:.3e}");
    println!("  frequency    {frequency:.3e}");
    let top: Vec<String> = {
        let mut idx: Vec<usize> = (0..l).collect();
        idx.sort_by(|&a, &b| q_star.prob(b).total_cmp(&q_star.prob(a)));
        idx.iter().take(5).map(|&j| format!("{j}:{:.3}", q_star.prob(j))).collect()
    };
    println!("  largest q* entries {}", top.join(" "));
    Ok(VarianceComparison { optimal, uniform, frequency })
}

fn main() -> negsample::Result<()> {
    run_example().map(|_| ())
}
