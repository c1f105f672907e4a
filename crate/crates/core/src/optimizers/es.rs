use rand_chacha::ChaCha8Rng;

use super::{gaussian, uniform_point, Evaluator};

const SUCCESS_FACTOR: f64 = 1.5;

/// (1+1)-ES with the 1/5th success rule; restarts from a uniform point when
/// the step size collapses.
pub(super) fn one_plus_one(ev: &mut Evaluator, rng: &mut ChaCha8Rng) {
    let (d, b) = (ev.dimension(), ev.bounds());
    let fail_factor = SUCCESS_FACTOR.powf(-0.25);
    loop {
        let mut x = uniform_point(rng, d, b);
        let Some(mut fx) = ev.eval(&mut x) else { return };
        let mut sigma = 0.2 * b.width();
        while sigma > 1e-12 * b.width() {
            let mut y: Vec<f64> = x.iter().map(|xi| xi + sigma * gaussian(rng)).collect();
            let Some(fy) = ev.eval(&mut y) else { return };
            if fy <= fx {
                x = y;
                fx = fy;
                sigma *= SUCCESS_FACTOR;
            } else {
                sigma *= fail_factor;
            }
            sigma = sigma.min(b.width());
        }
    }
}
