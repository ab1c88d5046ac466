//! End-to-end SFT and DPO builds from a TOML config with synthetic sources
//! and the mock client, followed by a composition report.
//!
//!     cargo run --release --example full_pipeline [out-dir]

use iealign::pipeline::{self, PipelineConfig};

const CONFIG: &str = r#"
seed = 42

[[synthetic]]
task = "NER"
size = 600
na_fraction = 0.3

[[synthetic]]
task = "RE"
size = 400
na_fraction = 0.2

[[synthetic]]
task = "EE"
size = 300

[[synthetic]]
task = "OnDemandIE"
size = 100

[augment]
cot_rate = 0.1

[dpo]
target_size = 200

[backend]
kind = "mock"
policy = { noisy_gold = 0.4 }
"#;

fn main() -> iealign::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/full_pipeline".into());
    let mut cfg = PipelineConfig::from_toml(CONFIG)?;
    cfg.out = out.into();

    let sft = pipeline::build_sft(&cfg)?;
    println!("sft: {:?}", sft.counts);
    for (name, r) in &sft.rates {
        println!("  {name:14} configured {:.2} observed {:.3}", r.configured, r.observed);
    }
    let dpo = pipeline::build_dpo(&cfg)?;
    if let Some(s) = &dpo.dpo {
        println!("dpo: {} online + {} offline pairs, mean gap {:.3}", s.online, s.offline, s.mean_delta);
    }

    let c = pipeline::stats_file(&cfg.out.join(pipeline::SFT_FILE))?;
    println!(
        "{} examples, {} closure violations, length histogram {:?}",
        c.total, c.label_closure_violations, c.length_histogram
    );
    sft.verify(&cfg.out)?;
    println!("outputs in {}", cfg.out.display());
    Ok(())
}
