//! Writes the default experiment config and shows how strict parsing reports
//! mistakes.

use ergodic_rc::harness::ExperimentConfig;

fn main() -> ergodic_rc::Result<()> {
    let cfg = ExperimentConfig::default();
    let text = cfg.to_toml_string()?;
    println!("{text}");

    let typo = text.replace("[search.rho_SR]", "[search.rho_Sr]");
    match ExperimentConfig::from_toml_str(&typo) {
        Err(e) => eprintln!("typo rejected: {e}"),
        Ok(_) => unreachable!("unknown keys are errors"),
    }
    let mut bad = cfg.clone();
    bad.search.leak_rate.upper = 1.5;
    if let Err(e) = bad.validate() {
        eprintln!("range check: {e}");
    }
    Ok(())
}
