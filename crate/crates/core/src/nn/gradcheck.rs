//! Central-difference verification of [`Network::backward`].

use super::network::{flatten, Gradients, Network};
use crate::error::Result;

/// Gradients smaller than this are compared in absolute rather than
/// relative terms; below it the finite difference is dominated by round-off.
pub const ABSOLUTE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Flat parameter index (see [`Network::params`]) of the worst entry.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub params_checked: usize,
    pub passed: bool,
}

/// `|a − n| / max(|a|, |n|, ABSOLUTE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABSOLUTE_FLOOR)
}

/// Compares `backward()` against central differences, parameter by
/// parameter. Passes iff the worst relative error is below `tolerance`.
pub fn gradient_check(
    net: &Network,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let (_, analytic) = net.backward(inputs, targets)?;
    compare_gradients(net, inputs, targets, &analytic, step, tolerance)
}

/// Checks a supplied gradient (e.g. a deliberately corrupted one) against
/// central differences of the batch loss.
pub fn compare_gradients(
    net: &Network,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    analytic: &Gradients,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let analytic = flatten(analytic);
    let base = net.params();
    let mut probe = net.clone();
    let mut params = base.clone();

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        params_checked: base.len(),
        passed: true,
    };
    for i in 0..base.len() {
        params[i] = base[i] + step;
        probe.set_params(&params)?;
        let (plus, _) = probe.backward(inputs, targets)?;
        params[i] = base[i] - step;
        probe.set_params(&params)?;
        let (minus, _) = probe.backward(inputs, targets)?;
        params[i] = base[i];

        let numeric = (plus - minus) / (2.0 * step);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_relative_error || !err.is_finite() {
            report.max_relative_error = err;
            report.worst_index = i;
            report.analytic = analytic[i];
            report.numeric = numeric;
        }
    }
    report.passed = report.max_relative_error < tolerance;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::{Activation, FnnTopology};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn batch(rng: &mut ChaCha8Rng, n: usize, d: usize, o: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let xs = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.5..1.5)).collect())
            .collect();
        let ys = (0..n)
            .map(|_| (0..o).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        (xs, ys)
    }

    fn network(act: Activation, seed: u64) -> (Network, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = FnnTopology::new(3, vec![8, 5], 2, act).unwrap();
        let mut net = Network::init(topo, &mut rng).unwrap();
        for layer in &mut net.layers {
            layer.biases.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        }
        loop {
            let (xs, ys) = batch(&mut rng, 6, 3, 2);
            let min = xs
                .iter()
                .map(|x| net.min_hidden_preactivation(x).unwrap())
                .fold(f64::INFINITY, f64::min);
            if min > 1e-3 {
                return (net, xs, ys);
            }
        }
    }

    #[test]
    fn relu_passes() {
        let (net, xs, ys) = network(Activation::Relu, 1);
        let r = gradient_check(&net, &xs, &ys, 1e-5, 1e-4).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn tanh_passes_tighter() {
        let (net, xs, ys) = network(Activation::Tanh, 2);
        let r = gradient_check(&net, &xs, &ys, 1e-5, 1e-5).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn corrupted_gradient_fails() {
        let (net, xs, ys) = network(Activation::Sigmoid, 3);
        let (_, mut grads) = net.backward(&xs, &ys).unwrap();
        // pick an entry with a clearly nonzero gradient
        let idx = grads[1]
            .weights
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap()
            .0;
        grads[1].weights[idx] *= 2.0;
        let r = compare_gradients(&net, &xs, &ys, &grads, 1e-5, 1e-4).unwrap();
        assert!(!r.passed);
        assert!(r.max_relative_error > 0.4);
    }
}
