//! Exact 1-D total-variation denoising.
//!
//! Solves `min_z 1/2 ||z - s||^2 + lambda * sum_j |z[j] - z[j+1]|` with the
//! direct taut-string style algorithm of Condat (2013), linear time in
//! practice. Within a flat run of the output every entry is the same float.

pub fn tv_denoise(input: &[f64], lambda: f64, output: &mut [f64]) {
    let width = input.len();
    assert_eq!(output.len(), width);
    if width == 0 {
        return;
    }
    if lambda <= 0.0 {
        output.copy_from_slice(input);
        return;
    }
    let last = width - 1;
    let two_lambda = 2.0 * lambda;
    let (mut k, mut k0, mut kplus, mut kminus) = (0usize, 0usize, 0usize, 0usize);
    let mut umin = lambda;
    let mut umax = -lambda;
    let mut vmin = input[0] - lambda;
    let mut vmax = input[0] + lambda;

    loop {
        while k == last {
            if umin < 0.0 {
                fill(output, &mut k0, kminus, vmin);
                k = k0;
                kminus = k0;
                vmin = input[k0];
                umin = lambda;
                umax = vmin + umin - vmax;
            } else if umax > 0.0 {
                fill(output, &mut k0, kplus, vmax);
                k = k0;
                kplus = k0;
                vmax = input[k0];
                umax = -lambda;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1) as f64;
                fill(output, &mut k0, k, vmin);
                return;
            }
        }
        umin += input[k + 1] - vmin;
        if umin < -lambda {
            fill(output, &mut k0, kminus, vmin);
            k = k0;
            kminus = k0;
            kplus = k0;
            vmin = input[k0];
            vmax = vmin + two_lambda;
            umin = lambda;
            umax = -lambda;
            continue;
        }
        umax += input[k + 1] - vmax;
        if umax > lambda {
            fill(output, &mut k0, kplus, vmax);
            k = k0;
            kminus = k0;
            kplus = k0;
            vmax = input[k0];
            vmin = vmax - two_lambda;
            umin = lambda;
            umax = -lambda;
        } else {
            k += 1;
            if umin >= lambda {
                kminus = k;
                vmin += (umin - lambda) / (k - k0 + 1) as f64;
                umin = lambda;
            }
            if umax <= -lambda {
                kplus = k;
                vmax += (umax + lambda) / (k - k0 + 1) as f64;
                umax = -lambda;
            }
        }
    }
}

/// Write `value` to `output[*k0..=upto]` and advance `k0` past it.
#[inline]
fn fill(output: &mut [f64], k0: &mut usize, upto: usize, value: f64) {
    output[*k0..=upto].fill(value);
    *k0 = upto + 1;
}
