use rand_chacha::ChaCha8Rng;

use super::{gaussian, population_size, uniform_point, Evaluator};

/// Separable (diagonal covariance) CMA-ES with restarts.
pub(super) fn sep_cma(ev: &mut Evaluator, rng: &mut ChaCha8Rng, design_budget: usize) {
    let (d, b) = (ev.dimension(), ev.bounds());
    let n = d as f64;
    let lambda = population_size(d, design_budget);
    let mu = lambda / 2;
    let raw: Vec<f64> = (0..mu).map(|i| (mu as f64 + 0.5).ln() - ((i + 1) as f64).ln()).collect();
    let wsum: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / wsum).collect();
    let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
    let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
    let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
    let sep = (n + 2.0) / 3.0;
    let c_1 = (sep * 2.0 / ((n + 1.3).powi(2) + mu_eff)).min(1.0);
    let c_mu = (sep * 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff)).clamp(0.0, 1.0 - c_1);
    let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

    loop {
        let mut mean = uniform_point(rng, d, b);
        let mut sigma = 0.3 * b.width();
        let mut cov = vec![1.0f64; d];
        let mut p_sigma = vec![0.0; d];
        let mut p_c = vec![0.0; d];
        let mut generation = 0i32;
        let mut best_seen = f64::INFINITY;
        let mut stale = 0usize;
        loop {
            let sd: Vec<f64> = cov.iter().map(|c| c.sqrt()).collect();
            let mut offspring: Vec<(f64, Vec<f64>)> = Vec::with_capacity(lambda);
            for _ in 0..lambda {
                let mut x: Vec<f64> = (0..d).map(|j| mean[j] + sigma * sd[j] * gaussian(rng)).collect();
                let Some(f) = ev.eval(&mut x) else { return };
                // step recomputed from the clamped point
                let y: Vec<f64> = x.iter().zip(&mean).map(|(xi, m)| (xi - m) / sigma).collect();
                offspring.push((f, y));
            }
            offspring.sort_by(|a, b| a.0.total_cmp(&b.0));
            generation += 1;

            let y_w: Vec<f64> = (0..d)
                .map(|j| weights.iter().zip(&offspring).map(|(w, (_, y))| w * y[j]).sum())
                .collect();
            for j in 0..d {
                mean[j] += sigma * y_w[j];
            }
            let norm_c = (c_sigma * (2.0 - c_sigma) * mu_eff).sqrt();
            for j in 0..d {
                p_sigma[j] = (1.0 - c_sigma) * p_sigma[j] + norm_c * y_w[j] / sd[j];
            }
            let ps_norm = p_sigma.iter().map(|v| v * v).sum::<f64>().sqrt();
            let h_sigma = ps_norm / (1.0 - (1.0 - c_sigma).powi(2 * generation)).sqrt() / chi_n
                < 1.4 + 2.0 / (n + 1.0);
            let h = if h_sigma { 1.0 } else { 0.0 };
            let norm_cc = (c_c * (2.0 - c_c) * mu_eff).sqrt();
            for j in 0..d {
                p_c[j] = (1.0 - c_c) * p_c[j] + h * norm_cc * y_w[j];
                let rank_mu: f64 = weights.iter().zip(&offspring).map(|(w, (_, y))| w * y[j] * y[j]).sum();
                cov[j] = (1.0 - c_1 - c_mu) * cov[j]
                    + c_1 * (p_c[j] * p_c[j] + (1.0 - h) * c_c * (2.0 - c_c) * cov[j])
                    + c_mu * rank_mu;
            }
            sigma *= ((c_sigma / d_sigma) * (ps_norm / chi_n - 1.0)).min(1.0).exp();

            if offspring[0].0 < best_seen {
                best_seen = offspring[0].0;
                stale = 0;
            } else {
                stale += 1;
            }
            let max_sd = cov.iter().copied().fold(0.0, f64::max).sqrt();
            let min_c = cov.iter().copied().fold(f64::INFINITY, f64::min);
            let max_c = cov.iter().copied().fold(0.0, f64::max);
            let collapsed = sigma * max_sd < 1e-12 * b.width();
            let diverged = !(sigma * max_sd < 1e3 * b.width());
            let ill = !(min_c > 0.0) || max_c / min_c > 1e14;
            if collapsed || diverged || ill || stale > 10 + 30 * d / lambda.max(1) + 100 {
                break;
            }
        }
    }
}
