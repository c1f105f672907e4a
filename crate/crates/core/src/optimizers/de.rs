use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{population_size, uniform_point, Evaluator};

const F: f64 = 0.5;
const CR: f64 = 0.9;

/// DE/rand/1/bin with immediate replacement.
pub(super) fn de_rand_1_bin(ev: &mut Evaluator, rng: &mut ChaCha8Rng, design_budget: usize) {
    let (d, b) = (ev.dimension(), ev.bounds());
    let np = population_size(d, design_budget);
    let mut pop = Vec::with_capacity(np);
    let mut fit = Vec::with_capacity(np);
    for _ in 0..np {
        let mut x = uniform_point(rng, d, b);
        let Some(fx) = ev.eval(&mut x) else { return };
        pop.push(x);
        fit.push(fx);
    }
    loop {
        for i in 0..np {
            let mut pick = || loop {
                let r = rng.random_range(0..np);
                if r != i {
                    break r;
                }
            };
            let r1 = pick();
            let r2 = loop {
                let r = pick();
                if r != r1 {
                    break r;
                }
            };
            let r3 = loop {
                let r = pick();
                if r != r1 && r != r2 {
                    break r;
                }
            };
            let jrand = rng.random_range(0..d);
            let mut trial: Vec<f64> = (0..d)
                .map(|j| {
                    if j == jrand || rng.random::<f64>() < CR {
                        pop[r1][j] + F * (pop[r2][j] - pop[r3][j])
                    } else {
                        pop[i][j]
                    }
                })
                .collect();
            let Some(ft) = ev.eval(&mut trial) else { return };
            if ft <= fit[i] {
                pop[i] = trial;
                fit[i] = ft;
            }
        }
    }
}
