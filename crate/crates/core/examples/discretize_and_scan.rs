//! Zero-order-hold discretisation and the two ways of evaluating the
//! selective recurrence.
//!
//! `cargo run --release --example discretize_and_scan -- [T] [channels] [state]`

use std::time::Instant;

use mambakick::nn::Mat;
use mambakick::ssm::{discretize_zoh, SsmParams, LIMIT_THRESHOLD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> mambakick::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().ok());
    let t = args.next().flatten().unwrap_or(256);
    let channels = args.next().flatten().unwrap_or(16);
    let state = args.next().flatten().unwrap_or(16);

    println!("a = -1, b = 1");
    println!("{:>12}  {:>14}  {:>14}", "delta", "a_bar", "b_bar");
    for delta in [0.0, 1e-9, LIMIT_THRESHOLD, 1e-3, 0.1, std::f64::consts::LN_2, 5.0] {
        let (a_bar, b_bar) = discretize_zoh(-1.0, 1.0, delta)?;
        println!("{delta:>12.3e}  {a_bar:>14.10}  {b_bar:>14.10}");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let ssm = SsmParams::new(channels, state, 1e-3, 0.1, &mut rng);
    let x = Mat::from_vec(t, channels, (0..t * channels).map(|_| rng.random_range(-1.0..1.0)).collect())?;

    let start = Instant::now();
    let seq = ssm.scan_recurrent(&x)?;
    let t_seq = start.elapsed();
    let start = Instant::now();
    let par = ssm.scan_parallel(&x)?;
    let t_par = start.elapsed();

    let max_diff = seq.data.iter().zip(&par.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("\nT={t} channels={channels} state={state}");
    println!("recurrent {:.2} ms, parallel {:.2} ms", t_seq.as_secs_f64() * 1e3, t_par.as_secs_f64() * 1e3);
    println!("max |recurrent - parallel| = {max_diff:.3e}");
    Ok(())
}
