use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::Network;
use super::params::ParamSet;
use super::Result;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Central-difference half step.
    pub epsilon: f64,
    /// Check at most this many parameter coordinates, sampled uniformly.
    pub max_coordinates: Option<usize>,
    /// Seeds the random output projection and the coordinate sample.
    pub seed: u64,
    /// Lower bound of the relative-error denominator. Central differences
    /// carry roughly 1e-10 of absolute roundoff on wide layers, so smaller
    /// gradients are compared in absolute terms.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            max_coordinates: None,
            seed: 0,
            floor: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Coordinates skipped because the probe crossed a LeakyReLU kink.
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
    /// Array name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric derivative at the worst coordinate.
    pub worst_values: Option<(f64, f64)>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares `backward` against central finite differences of the scalar
/// loss `sum_i c_i * y_i`, with `c` a fixed random projection.
pub fn grad_check(
    net: &Network,
    input: &[f64],
    batch: usize,
    tolerance: f64,
) -> Result<GradCheckReport> {
    grad_check_with(net, input, batch, tolerance, GradCheckOptions::default(), |_| {})
}

/// `grad_check` with explicit options and a hook that may tamper with the
/// analytic gradients before comparison.
pub fn grad_check_with(
    net: &Network,
    input: &[f64],
    batch: usize,
    tolerance: f64,
    opts: GradCheckOptions,
    mut corrupt: impl FnMut(&mut ParamSet),
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut probe = net.clone();
    let out_len = probe.output_len() * batch;
    let proj: Vec<f64> = (0..out_len).map(|_| rng.random_range(-1.0..1.0)).collect();

    let (_, tape) = probe.forward(input, batch)?;
    let mut analytic = probe.backward_params(tape, &proj)?;
    corrupt(&mut analytic);

    let mut coords: Vec<(usize, usize)> = Vec::new();
    for (ai, arr) in probe.params().arrays.iter().enumerate() {
        coords.extend((0..arr.len()).map(|i| (ai, i)));
    }
    if let Some(max) = opts.max_coordinates {
        if max < coords.len() {
            let picked = index::sample(&mut rng, coords.len(), max);
            coords = picked.into_iter().map(|i| coords[i]).collect();
        }
    }

    let mut report = GradCheckReport {
        checked: 0,
        skipped_kinks: 0,
        max_rel_error: 0.0,
        worst: None,
        worst_values: None,
        tolerance,
        passed: true,
    };
    for (ai, i) in coords {
        let orig = probe.params().arrays[ai].data[i];
        probe.params_mut().arrays[ai].data[i] = orig + opts.epsilon;
        let (yp, tp) = probe.forward(input, batch)?;
        let kinks_p = tp.kink_pattern(&probe);
        probe.params_mut().arrays[ai].data[i] = orig - opts.epsilon;
        let (ym, tm) = probe.forward(input, batch)?;
        let kinks_m = tm.kink_pattern(&probe);
        probe.params_mut().arrays[ai].data[i] = orig;
        if kinks_p != kinks_m {
            report.skipped_kinks += 1;
            continue;
        }
        // Differencing per output before projecting avoids cancellation
        // between two large loss values.
        let numeric = yp
            .iter()
            .zip(&ym)
            .zip(&proj)
            .map(|((p, m), c)| (p - m) * c)
            .sum::<f64>()
            / (2.0 * opts.epsilon);
        let a = analytic.arrays[ai].data[i];
        let denom = a.abs().max(numeric.abs()).max(opts.floor);
        let rel = (a - numeric).abs() / denom;
        report.checked += 1;
        if rel > report.max_rel_error || rel.is_nan() {
            report.max_rel_error = rel;
            report.worst = Some((probe.params().arrays[ai].name.clone(), i));
            report.worst_values = Some((a, numeric));
        }
    }
    report.passed = report.max_rel_error <= tolerance && report.checked > 0;
    Ok(report)
}
