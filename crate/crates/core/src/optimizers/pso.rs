use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{population_size, uniform_point, Evaluator};

const INERTIA: f64 = 0.729;
const ACCEL: f64 = 1.494_45;

/// Particle swarm with ring neighbourhood (left, self, right), updated
/// particle by particle.
pub(super) fn pso_ring(ev: &mut Evaluator, rng: &mut ChaCha8Rng, design_budget: usize) {
    let (d, b) = (ev.dimension(), ev.bounds());
    let n = population_size(d, design_budget);
    let vmax = 0.5 * b.width();
    let mut pos = Vec::with_capacity(n);
    let mut vel = Vec::with_capacity(n);
    let mut best_pos = Vec::with_capacity(n);
    let mut best_fit = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x = uniform_point(rng, d, b);
        let Some(fx) = ev.eval(&mut x) else { return };
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-0.1..=0.1) * b.width()).collect();
        best_pos.push(x.clone());
        best_fit.push(fx);
        pos.push(x);
        vel.push(v);
    }
    loop {
        for i in 0..n {
            let left = (i + n - 1) % n;
            let right = (i + 1) % n;
            let mut leader = i;
            for k in [left, right] {
                if best_fit[k] < best_fit[leader] {
                    leader = k;
                }
            }
            for j in 0..d {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let v = INERTIA * vel[i][j]
                    + ACCEL * r1 * (best_pos[i][j] - pos[i][j])
                    + ACCEL * r2 * (best_pos[leader][j] - pos[i][j]);
                vel[i][j] = v.clamp(-vmax, vmax);
                pos[i][j] += vel[i][j];
            }
            let Some(f) = ev.eval(&mut pos[i]) else { return };
            if f <= best_fit[i] {
                best_fit[i] = f;
                best_pos[i] = pos[i].clone();
            }
        }
    }
}
