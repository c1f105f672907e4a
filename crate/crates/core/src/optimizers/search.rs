use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{uniform_point, Evaluator};
use crate::sampling::{SobolSequence, MAX_DIMENSION};

pub(super) fn random_search(ev: &mut Evaluator, rng: &mut ChaCha8Rng) {
    let (d, b) = (ev.dimension(), ev.bounds());
    loop {
        let mut x = uniform_point(rng, d, b);
        if ev.eval(&mut x).is_none() {
            return;
        }
    }
}

/// XOR-scrambled Sobol points in the box; plain uniform sampling above 32
/// dimensions.
pub(super) fn sobol_search(ev: &mut Evaluator, rng: &mut ChaCha8Rng) {
    let (d, b) = (ev.dimension(), ev.bounds());
    if d > MAX_DIMENSION {
        return random_search(ev, rng);
    }
    let seq = SobolSequence::new(d).expect("dimension checked");
    let masks: Vec<u32> = (0..d).map(|_| rng.random()).collect();
    let mut index: u32 = 0;
    loop {
        let mut x: Vec<f64> = seq
            .point_bits(index)
            .into_iter()
            .zip(&masks)
            .map(|(bits, m)| b.lo + f64::from(bits ^ m) / 4_294_967_296.0 * b.width())
            .collect();
        if ev.eval(&mut x).is_none() {
            return;
        }
        index = index.wrapping_add(1);
    }
}
