//! Shared independent oracles for the integration suites. Everything here
//! re-derives its result from first principles (composite Simpson panels,
//! explicit Gaussian formulas) so it cannot share a bug with the library's
//! own quadrature or closed forms.

// each suite uses its own subset
#![allow(dead_code)]

/// Composite Simpson integration on a fixed grid; `n` must be even.
pub fn simpson<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> f64 {
    assert!(n >= 2 && n.is_multiple_of(2));
    let h = (hi - lo) / n as f64;
    let mut acc = f(lo) + f(hi);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + k as f64 * h);
    }
    acc * h / 3.0
}

/// Plain Gaussian density, written out independently of the library.
pub fn normal_density(x: f64, mean: f64, variance: f64) -> f64 {
    let z = x - mean;
    (-z * z / (2.0 * variance)).exp() / (2.0 * std::f64::consts::PI * variance).sqrt()
}

/// Binary entropy in bits.
pub fn entropy_bits(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
    }
}

/// Gaussian mutual informations of the covariance model, derived from
/// explicit variances and the correlation coefficient. This is the
/// benchmark-rate oracle: `I(A:B) - I(E:B) - 2H'` with the eavesdropper
/// placed on the noisy effective channel.
pub fn covariance_model_rate(g: f64, xi: f64, va: f64) -> f64 {
    let s = 1.0 + g * xi; // Bob's conditional variance
    let var_b = g * va + s;
    let i_ab = 0.5 * (var_b / s).ln() / std::f64::consts::LN_2;
    let n_e = 1.0 + 1.0 / ((1.0 - g) / g + xi);
    let var_c = va + n_e;
    let rho2 = g * va * va / (var_b * var_c);
    let i_eb = -0.5 * (1.0 - rho2).ln() / std::f64::consts::LN_2;
    let two_h_prime = s.ln() / std::f64::consts::LN_2;
    i_ab - i_eb - two_h_prime
}

/// Miller-Madow bias-corrected mutual information between a binned real
/// observable and a binary outcome.
pub fn binned_mi_bits(values: &[f64], outcomes: &[bool], bins: usize) -> f64 {
    assert_eq!(values.len(), outcomes.len());
    let n = values.len();
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (1..bins)
        .map(|k| sorted[k * n / bins])
        .collect();
    let bin_of = |v: f64| edges.partition_point(|&e| e <= v);
    let mut joint = vec![[0usize; 2]; bins];
    let mut ones = 0usize;
    for (&v, &o) in values.iter().zip(outcomes) {
        joint[bin_of(v)][o as usize] += 1;
        ones += o as usize;
    }
    let nf = n as f64;
    let p1 = ones as f64 / nf;
    let h_out = entropy_bits(p1);
    let mut cond = 0.0;
    let mut occupied_cells = 0usize;
    for counts in &joint {
        let total = counts[0] + counts[1];
        if total == 0 {
            continue;
        }
        occupied_cells += (counts[0] > 0) as usize + (counts[1] > 0) as usize;
        let w = total as f64 / nf;
        cond += w * entropy_bits(counts[1] as f64 / total as f64);
    }
    let occupied_bins = joint.iter().filter(|c| c[0] + c[1] > 0).count();
    let raw = h_out - cond;
    // Miller-Madow: subtract the estimator's upward bias
    let bias = (occupied_cells as f64 - occupied_bins as f64 - 1.0).max(0.0)
        / (2.0 * nf * std::f64::consts::LN_2);
    raw - bias
}
