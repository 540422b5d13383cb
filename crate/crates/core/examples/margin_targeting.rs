// Picks weights that make any sampler hit a chosen set of pairwise margins.
//
// With `w = rho / (m q)`, the softmax bound of the sampled loss is the
// margin cross-entropy for `rho`, whatever `q` is. Here the target is the
// adaptive margin from a long-tail marginal, reached from three samplers.

use negsample::implicit::implicit_softmax_bound;
use negsample::label_stats::{make_profile, ImbalanceProfile, LabelDistribution, ProfileKind};
use negsample::losses::margin_ce;
use negsample::numeric::softmax;
use negsample::{MarginMatrix, MarginPreset, WeightContext, WeightingScheme};

pub struct MarginTargetRow {
    pub sampler: &'static str,
    pub bound: f64,
    pub margin_ce: f64,
}

pub fn run_example() -> negsample::Result<Vec<MarginTargetRow>> {
    let (l, m, y) = (30, 16, 20);
    let pi = make_profile(&ImbalanceProfile::new(ProfileKind::Step, l, 50.0))?;
    let rho = MarginMatrix::from_preset(MarginPreset::Adaptive, &pi);
    let scheme = WeightingScheme::target_margin(rho.clone());
    let f: Vec<f64> = (0..l).map(|j| (j as f64 * 0.37).sin()).collect();
    let target = margin_ce(y, &f, &rho);

    let samplers: [(&str, LabelDistribution); 3] = [
        ("uniform", LabelDistribution::uniform(l)?.excluding(y)?),
        ("within_batch", pi.excluding(y)?),
        ("model_based", LabelDistribution::from_weights(&softmax(&f))?.excluding(y)?),
    ];
    let mut rows = Vec::new();
    println!("target margin cross-entropy: {target:.12}");
    for (name, q) in samplers {
        let bound = implicit_softmax_bound(y, &f, &q, &scheme, &WeightContext::default(), m)?.expected_or_bound;
        println!("{name:<14} bound {bound:.12}  (diff {:.1e})", bound - target);
        rows.push(MarginTargetRow { sampler: name, bound, margin_ce: target });
    }
    Ok(rows)
}

fn main() -> negsample::Result<()> {
    run_example().map(|_| ())
}
