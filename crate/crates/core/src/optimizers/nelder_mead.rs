use rand_chacha::ChaCha8Rng;

use super::{uniform_point, Evaluator};

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

fn affine(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    // a + t (b - a)
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

/// Nelder-Mead simplex search, restarted from a fresh uniform point whenever
/// the simplex collapses or goes flat.
pub(super) fn nelder_mead_restart(ev: &mut Evaluator, rng: &mut ChaCha8Rng) {
    let (d, b) = (ev.dimension(), ev.bounds());
    let step = 0.1 * b.width();
    loop {
        let x0 = uniform_point(rng, d, b);
        let mut simplex = vec![x0.clone()];
        for i in 0..d {
            let mut v = x0.clone();
            v[i] = if v[i] + step <= b.hi { v[i] + step } else { v[i] - step };
            simplex.push(v);
        }
        let mut fs = Vec::with_capacity(d + 1);
        for v in simplex.iter_mut() {
            let Some(f) = ev.eval(v) else { return };
            fs.push(f);
        }
        loop {
            let mut order: Vec<usize> = (0..=d).collect();
            order.sort_by(|&i, &j| fs[i].total_cmp(&fs[j]).then(i.cmp(&j)));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            fs = order.iter().map(|&i| fs[i]).collect();

            let diameter = simplex[1..]
                .iter()
                .map(|v| v.iter().zip(&simplex[0]).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            if diameter < 1e-9 * b.width() || fs[d] == fs[0] {
                break;
            }

            let mut centroid = vec![0.0; d];
            for v in &simplex[..d] {
                for (c, x) in centroid.iter_mut().zip(v) {
                    *c += x / d as f64;
                }
            }
            let mut xr = affine(&centroid, &simplex[d], -REFLECT);
            let Some(fr) = ev.eval(&mut xr) else { return };
            if fr < fs[0] {
                let mut xe = affine(&centroid, &simplex[d], -EXPAND);
                let Some(fe) = ev.eval(&mut xe) else { return };
                if fe < fr {
                    simplex[d] = xe;
                    fs[d] = fe;
                } else {
                    simplex[d] = xr;
                    fs[d] = fr;
                }
                continue;
            }
            if fr < fs[d - 1] {
                simplex[d] = xr;
                fs[d] = fr;
                continue;
            }
            let (mut xc, threshold) = if fr < fs[d] {
                (affine(&centroid, &xr, CONTRACT), fr)
            } else {
                (affine(&centroid, &simplex[d], CONTRACT), fs[d])
            };
            let Some(fc) = ev.eval(&mut xc) else { return };
            if fc < threshold {
                simplex[d] = xc;
                fs[d] = fc;
                continue;
            }
            for i in 1..=d {
                let mut v = affine(&simplex[0], &simplex[i], SHRINK);
                let Some(f) = ev.eval(&mut v) else { return };
                simplex[i] = v;
                fs[i] = f;
            }
        }
    }
}
