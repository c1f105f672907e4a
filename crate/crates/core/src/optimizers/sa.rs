use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{gaussian, uniform_point, Evaluator};

const INITIAL_TEMPERATURE: f64 = 0.5;
const COOLING: f64 = 0.995;
const ADAPT_EVERY: usize = 20;

/// Simulated annealing with Gaussian proposals. Acceptance uses the relative
/// worsening `(f(y) - f(x)) / |f(x)|`, so the schedule does not depend on the
/// objective's scale. The step size adapts to keep acceptance near 30%; the
/// search reheats from the best point when the step collapses.
pub(super) fn simulated_annealing(ev: &mut Evaluator, rng: &mut ChaCha8Rng) {
    let (d, b) = (ev.dimension(), ev.bounds());
    let mut x = uniform_point(rng, d, b);
    let Some(mut fx) = ev.eval(&mut x) else { return };
    let (mut best, mut fbest) = (x.clone(), fx);
    loop {
        let mut temp = INITIAL_TEMPERATURE;
        let mut sigma = 0.1 * b.width();
        let mut accepted = 0usize;
        let mut proposed = 0usize;
        while sigma > 1e-10 * b.width() {
            let mut y: Vec<f64> = x.iter().map(|v| v + sigma * gaussian(rng)).collect();
            let Some(fy) = ev.eval(&mut y) else { return };
            let worse = (fy - fx) / (fx.abs() + 1e-12);
            proposed += 1;
            if fy <= fx || rng.random::<f64>() < (-worse / temp).exp() {
                x = y;
                fx = fy;
                accepted += 1;
                if fx < fbest {
                    best.clone_from(&x);
                    fbest = fx;
                }
            }
            temp = (temp * COOLING).max(1e-12);
            if proposed == ADAPT_EVERY {
                let rate = accepted as f64 / proposed as f64;
                if rate > 0.4 {
                    sigma *= 1.3;
                } else if rate < 0.2 {
                    sigma *= 0.7;
                }
                sigma = sigma.min(b.width());
                accepted = 0;
                proposed = 0;
            }
        }
        x.clone_from(&best);
        fx = fbest;
    }
}
