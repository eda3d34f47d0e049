use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{critic_spec, policy_spec, Result, SacConfig};
use crate::curiosity::{decoder_spec, encoder_spec, fdm_spec, idf_spec, rnd_spec, tfm_spec, LATENT_DIM};
use crate::env::{Task, TOUCH_DIM};
use crate::numerics::{grad_check_with, GradCheckOptions, GradCheckReport, InputShape, Network, NetworkSpec};

/// Every network architecture a run can instantiate for `task` at
/// `image_size`, by name.
pub fn network_specs(task: Task, image_size: usize, sac: &SacConfig) -> Result<Vec<(&'static str, NetworkSpec)>> {
    let a = task.action_dim();
    Ok(vec![
        ("encoder", encoder_spec(image_size)?),
        ("decoder", decoder_spec(TOUCH_DIM)),
        ("fdm", fdm_spec(a)),
        ("idf", idf_spec(a)),
        ("rnd", rnd_spec()),
        ("touch-fdm", tfm_spec(TOUCH_DIM, a)),
        ("policy", policy_spec(LATENT_DIM, a, sac)),
        ("critic", critic_spec(LATENT_DIM, a, sac)),
    ])
}

/// Finite-difference check of each network at a fresh random init.
/// Image inputs are drawn in `[0, 1)`, everything else in `[-1, 1)`.
pub fn gradcheck_suite(
    task: Task,
    image_size: usize,
    seed: u64,
    tolerance: f64,
    max_coordinates: Option<usize>,
) -> Result<Vec<(&'static str, GradCheckReport)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (name, spec) in network_specs(task, image_size, &SacConfig::default())? {
        let lo = if matches!(spec.input, InputShape::Image { .. }) { 0.0 } else { -1.0 };
        let net = Network::new(spec, &mut rng)?;
        let batch = 2;
        let x: Vec<f64> = (0..batch * net.input_len()).map(|_| rng.random_range(lo..1.0)).collect();
        let opts = GradCheckOptions {
            max_coordinates,
            seed: rng.random(),
            ..GradCheckOptions::default()
        };
        out.push((name, grad_check_with(&net, &x, batch, tolerance, opts, |_| {})?));
    }
    Ok(out)
}
