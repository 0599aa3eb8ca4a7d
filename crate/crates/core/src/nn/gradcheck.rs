//! Central finite-difference checks for the hand-written backward passes.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use super::{Network, Tensor};
use crate::seed;

/// Finite-difference step.
pub const STEP: f64 = 1e-4;

/// Inputs whose ReLUs all sit at least this far from the kink are
/// differentiable over the whole stencil.
pub const KINK_MARGIN: f64 = 10.0 * STEP;

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Central difference of `f` along coordinate `i` at `x`.
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
    let mut p = x.to_vec();
    p[i] = x[i] + STEP;
    let up = f(&p);
    p[i] = x[i] - STEP;
    let down = f(&p);
    (up - down) / (2.0 * STEP)
}

/// Worst relative error of `analytic` against central differences of `f`.
pub fn max_rel_error(analytic: &[f64], f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64]) -> f64 {
    assert_eq!(
        analytic.len(),
        x.len(),
        "gradient and point differ in length"
    );
    (0..x.len())
        .map(|i| rel_err(analytic[i], central_difference(f, x, i)))
        .fold(0.0, f64::max)
}

/// Initial parameters plus `U(-0.1, 0.1)` jitter, so no bias or shift sits
/// exactly at zero. A dead unit with a zero bias would park a ReLU on its kink.
pub fn jittered_params(net: &Network, rng: &mut impl Rng) -> Vec<f64> {
    net.init_params(rng.gen())
        .into_iter()
        .map(|v| v + rng.gen_range(-0.1..0.1))
        .collect()
}

fn uniform(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Worst relative error of parameter and input gradients over `instances`
/// random draws of `L = Σ r·net(x)` with random `r`, `x` and parameters.
/// Draws with a ReLU input inside [`KINK_MARGIN`] are redrawn.
pub fn check_network(net: &Network, rng_seed: u64, instances: usize) -> f64 {
    let input = net.input_shape();
    let out = net.output_shape();
    let mut worst = 0.0f64;
    for inst in 0..instances {
        let mut rng = seed::rng(seed::derive(rng_seed, "gradcheck", inst as u64));
        let (params, x, cache) = loop {
            let params = jittered_params(net, &mut rng);
            let x = uniform(&mut rng, input.len());
            let tensor = Tensor {
                shape: input,
                data: x.clone(),
            };
            let (_, cache) = net
                .forward_cached(&params, &tensor)
                .expect("shapes match by construction");
            if net.relu_margin(&cache) > KINK_MARGIN {
                break (params, x, cache);
            }
        };
        let r = uniform(&mut rng, out.len());
        let objective = |p: &[f64], x: &[f64]| -> f64 {
            let y = net
                .forward(
                    p,
                    &Tensor {
                        shape: input,
                        data: x.to_vec(),
                    },
                )
                .expect("shapes match");
            y.data.iter().zip(&r).map(|(a, b)| a * b).sum()
        };
        let mut grad = vec![0.0; params.len()];
        let dx = net.backward(
            &params,
            &cache,
            &Tensor {
                shape: out,
                data: r.clone(),
            },
            &mut grad,
        );
        worst = worst.max(max_rel_error(&grad, &mut |p| objective(p, &x), &params));
        worst = worst.max(max_rel_error(
            &dx.data,
            &mut |xv| objective(&params, xv),
            &x,
        ));
    }
    worst
}
