//! Normalized energy-delay product per output scale under the synthetic
//! power model, or a CSV trace given as the first argument.
//!
//! cargo run --release --example energy_profile -- [trace.csv]

mod common;

use setgan::inference::GenerationRequest;
use setgan::profiler::{profile_generation, SyntheticPowerModel, TraceSource};

fn main() {
    let bundle = common::toy_bundle(10);
    let source = match std::env::args().nth(1) {
        Some(p) => TraceSource::File(p.into()),
        None => TraceSource::Synthetic(SyntheticPowerModel::default()),
    };
    let top = bundle.scale_count() - 1;
    let report = profile_generation(&bundle, &GenerationRequest::new(top, 0), &source).unwrap();
    print!("{}", report.to_table());
    if top > 0 {
        let cut = report.reduction(top, top - 1).unwrap();
        println!("dropping the finest scale saves {:.1}% EDP", 100.0 * cut);
    }
}
