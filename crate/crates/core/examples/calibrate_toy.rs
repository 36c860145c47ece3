// SPDX-License-Identifier: MIT OR Apache-2.0

//! Re-derives the toy network's default weight scale and bias magnitude.
//!
//! `cargo run --release -p nctr-core --example calibrate_toy`

use nctr_core::toysim::{calibrate, ToyConfig, CALIBRATION_GRID};

fn main() {
    let (scales, alphas) = CALIBRATION_GRID;
    let cal = calibrate(&ToyConfig::default(), scales, alphas).expect("valid grid");
    println!("scale\talpha\tratio\td\tp\trho_c\trho_n\tin_bands\tdistance");
    for c in &cal.cells {
        println!(
            "{}\t{}\t{:.3}\t{:.3}\t{:.2e}\t{:.3}\t{:.3}\t{}\t{:.3}",
            c.weight_scale,
            c.alpha,
            c.crossing_ratio,
            c.cohens_d,
            c.p_value,
            c.rho_closing,
            c.rho_nonclosing,
            c.in_bands,
            c.distance
        );
    }
    match cal.selected {
        Some(i) => println!("selected: scale {} alpha {}", cal.cells[i].weight_scale, cal.cells[i].alpha),
        None => println!("no cell inside all bands"),
    }
}
