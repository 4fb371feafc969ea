use alloc::vec;
use alloc::vec::Vec;

use super::net::TinyNet;
use crate::obsmap::ObservationMap;
use crate::{Result, Vec3};

/// Central-difference step.
const STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    /// Largest `‖analytic - numeric‖ / max(‖analytic‖, ‖numeric‖)` over the
    /// network's weight and bias tensors.
    pub max_rel_deviation: f64,
    /// Largest per-parameter `|analytic - numeric| / max(|analytic|, |numeric|)`.
    /// Dominated by finite-difference error on near-zero entries.
    pub max_elementwise_deviation: f64,
    pub checked: usize,
    /// Parameters skipped because a ±step perturbation flipped the sign of
    /// some leaky-ReLU input, where a finite difference is meaningless.
    pub skipped_kinks: usize,
}

/// Compares backpropagated gradients with central differences for every
/// parameter.
pub fn gradient_check(net: &TinyNet<f64>, map: &ObservationMap, label: &Vec3) -> Result<GradientCheck> {
    let all: Vec<usize> = (0..net.param_count()).collect();
    gradient_check_params(net, map, label, &all)
}

/// [`gradient_check`] restricted to the given parameter indices.
pub fn gradient_check_params(
    net: &TinyNet<f64>,
    map: &ObservationMap,
    label: &Vec3,
    indices: &[usize],
) -> Result<GradientCheck> {
    let input = map.to_input();
    let label = [label.x, label.y, label.z];
    let mut analytic = vec![0.0; net.param_count()];
    net.accumulate_gradient(&input, &label, &mut analytic)?;
    let base = net.forward(&input)?;
    let signs: Vec<bool> = base.pre_activation_signs().collect();
    let groups = net.architecture().param_groups();
    // Per tensor: Σ(a-n)², Σa², Σn².
    let mut sums = vec![[0.0f64; 3]; groups.len()];
    let mut probe = net.clone();
    let mut out = GradientCheck {
        max_rel_deviation: 0.0,
        max_elementwise_deviation: 0.0,
        checked: 0,
        skipped_kinks: 0,
    };
    for &i in indices {
        let original = probe.params()[i];
        let layer = net.layer_of(i);
        let mut eval = |delta: f64| -> Result<(f64, bool)> {
            probe.params_mut()[i] = original + delta;
            let trace = probe.forward_from(&input, &base, layer)?;
            let kink = trace.pre_activation_signs().zip(&signs).any(|(a, &b)| a != b);
            Ok((TinyNet::trace_loss(&trace, &label), kink))
        };
        let (plus, kink_p) = eval(STEP)?;
        let (minus, kink_m) = eval(-STEP)?;
        probe.params_mut()[i] = original;
        if kink_p || kink_m {
            out.skipped_kinks += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * STEP);
        let a = analytic[i];
        let scale = a.abs().max(numeric.abs());
        if scale > 0.0 {
            out.max_elementwise_deviation = out.max_elementwise_deviation.max((a - numeric).abs() / scale);
        }
        let g = groups.iter().position(|r| r.contains(&i)).expect("index within parameters");
        sums[g][0] += (a - numeric) * (a - numeric);
        sums[g][1] += a * a;
        sums[g][2] += numeric * numeric;
        out.checked += 1;
    }
    for [diff, a, n] in sums {
        let scale = a.max(n);
        if scale > 0.0 {
            out.max_rel_deviation = out.max_rel_deviation.max(libm::sqrt(diff / scale));
        }
    }
    Ok(out)
}
