//! Draw a Q-environment for the two-point fixture and look at its ladder
//! blocks.
//!
//! cargo run --release --example environment

use rwre_lab::environment::{sample_q_environment, solve_s, OmegaDistribution};
use rwre_lab::io::{load_env, save_env};

fn main() -> rwre_lab::Result<()> {
    let dist = OmegaDistribution::fixture();
    let params = solve_s(&dist)?;
    println!("s = {:.6}, v_P = {:.6}", params.s, params.v_p.unwrap_or(0.0));
    println!("E rho = {:.4}, E log rho = {:.4}", params.e_rho, params.e_log_rho);

    let q = sample_q_environment(&dist, 12, 3, 7)?;
    println!(
        "{} sites on [{}, {}), {} context blocks",
        q.env.len(),
        q.env.left_index(),
        q.env.right_end(),
        q.ladders.context_blocks()
    );
    for b in q.ladders.blocks().filter(|b| b.index >= 1) {
        println!(
            "block {:>3}: [{:>4}, {:>4})  M = {:>10.3}",
            b.index,
            b.start,
            b.end,
            b.max()
        );
    }

    let path = std::env::temp_dir().join("rwre-lab-example-env.txt");
    save_env(&path, &q.env)?;
    let back = load_env(&path)?;
    assert_eq!(back, q.env);
    println!("round-tripped through {}", path.display());
    Ok(())
}
