// Prints the implicit-loss catalog and checks each row's closed-form margins
// against the generic implicit-loss computation on one random input.

use negsample::implicit::{catalog, QConvention};
use negsample::label_stats::{make_profile, ImbalanceProfile, ProfileKind};
use negsample::MarginLossPair;
use rand::Rng;

pub struct CatalogCheck {
    pub label: String,
    pub effect: &'static str,
    pub closed_form: f64,
    pub generic: f64,
}

pub fn run_example() -> negsample::Result<Vec<CatalogCheck>> {
    let (l, m, y) = (12, 16, 5);
    let pi = make_profile(&ImbalanceProfile::new(ProfileKind::Exp, l, 20.0))?;
    let mut r = negsample::rng::stream(3, "example.catalog", 0);
    let f: Vec<f64> = (0..l).map(|_| r.gen_range(-2.0..2.0)).collect();
    let pair = MarginLossPair::hinge();

    let mut out = Vec::new();
    println!("{:<34} {:<16} {:<22} {:>10} {:>10}", "row", "effect", "rho[y][y']", "closed", "generic");
    for row in catalog() {
        let closed_form = row.evaluate(y, &f, &pi, m, QConvention::Exclusive, Some(&pair))?;
        let generic = row.evaluate_generic(y, &f, &pi, m, QConvention::Exclusive, Some(&pair))?;
        println!(
            "{:<34} {:<16} {:<22} {:>10.6} {:>10.6}",
            row.label(),
            row.effect.name(),
            row.rho_pattern(QConvention::Exclusive),
            closed_form,
            generic
        );
        out.push(CatalogCheck { label: row.label(), effect: row.effect.name(), closed_form, generic });
    }
    Ok(out)
}

fn main() -> negsample::Result<()> {
    run_example().map(|_| ())
}
