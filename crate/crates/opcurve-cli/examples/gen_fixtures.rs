//! Regenerates the committed integration-test fixtures:
//!
//! ```text
//! cargo run -p opcurve-cli --example gen_fixtures
//! ```
//!
//! `trainee.csv` is one learning-scenario stream; `standard.csv` draws a
//! 300-case cohort from the standard model itself (constant trajectory at
//! the standard scale, trainee shape/slope matched to the standard).

use opcurve::sim::{simulate_stream, GammaTrajectory, Mode, ScenarioSpec};
use opcurve_cli::ingest::write_cases;

fn main() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    std::fs::create_dir_all(&dir).unwrap();

    let spec = ScenarioSpec::benchmark();
    let trainee = simulate_stream(&spec, Mode::Learning, 42).unwrap();
    write_cases(&dir.join("trainee.csv"), &trainee).unwrap();

    let mut spec_s = ScenarioSpec::benchmark();
    spec_s.t = 300;
    spec_s.gamma_trajectory = GammaTrajectory::Constant(spec_s.standard.gamma());
    spec_s.eta_n = spec_s.standard.eta();
    spec_s.beta_n = spec_s.standard.beta().to_vec();
    let standard = simulate_stream(&spec_s, Mode::Inadequate, 7).unwrap();
    write_cases(&dir.join("standard.csv"), &standard).unwrap();

    println!("fixtures written to {}", dir.display());
}
