//! Checkpoint a run part-way, resume it from disk and confirm the result
//! matches an uninterrupted run exactly.
//!
//! `cargo run --release --example checkpoint_resume`

use gsmnmf::harness::{synth_scene_with, SceneSpec};
use gsmnmf::model::SeparationConfig;
use gsmnmf::optimizer::{run, run_with, Checkpoint, RunOptions};
use gsmnmf::stft::{stft_forward, StftConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let stft = StftConfig::new(512, 128)?;
    let scene = synth_scene_with(SceneSpec::new(2, 2, 1.0, 8), stft)?;
    let x = stft_forward(&scene.mixture, &stft)?;
    let full = SeparationConfig {
        iterations: 30,
        ..Default::default()
    };
    let path = std::env::temp_dir().join("gsmnmf_checkpoint_example.json");

    // first leg: 12 iterations, checkpoint every 4
    let first = SeparationConfig { iterations: 12, ..full };
    run_with(
        &x,
        &first,
        RunOptions {
            checkpoint_path: Some(path.clone()),
            checkpoint_every: 4,
            resume: None,
        },
        |s| println!("iteration {:>2}: log-likelihood {:.6e}", s.iteration, s.log_likelihood),
    )?;
    let cp = Checkpoint::load(&path)?;
    println!("checkpoint at iteration {} ({} trace entries)", cp.iteration, cp.trace.values.len());

    let resumed = run_with(
        &x,
        &full,
        RunOptions {
            resume: Some(cp),
            ..Default::default()
        },
        |_| {},
    )?;
    let straight = run(&x, &full)?;
    println!(
        "resumed == uninterrupted: params {}, trace {}",
        resumed.params == straight.params,
        resumed.trace == straight.trace
    );
    std::fs::remove_file(&path).ok();
    Ok(())
}
