//! Acceptance criteria. Prints one line per criterion and fails the target if any criterion fails.

use quadbarrier::verify::{acceptance, Profile};

fn main() {
    let checks = acceptance(&Profile::full());
    println!();
    for check in &checks {
        println!("{check}");
    }
    let failed: Vec<_> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    println!("\nacceptance: {} of {} criteria passed", checks.len() - failed.len(), checks.len());
    if !failed.is_empty() {
        eprintln!("failed criteria: {}", failed.join(", "));
        std::process::exit(1);
    }
}
