//! Concentration helpers.

/// Failure probability used for every reported confidence radius.
pub const CONFIDENCE_DELTA: f64 = 0.05;

/// Two-sided Hoeffding radius for the mean of `n` i.i.d. variables with range `range`.
/// Compensated (Neumaier) sum.
pub fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        carry += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + carry
}

pub fn hoeffding_radius(n: usize, range: f64) -> f64 {
    if n == 0 {
        return f64::INFINITY;
    }
    range * ((2.0 / CONFIDENCE_DELTA).ln() / (2.0 * n as f64)).sqrt()
}

/// Radius for a coupled advantage estimate: each sample contributes a
/// difference of two acceptance bits, a variable of range 2.
pub fn advantage_radius(n: usize) -> f64 {
    hoeffding_radius(n, 2.0)
}

/// Samples needed so each of `family_size` estimates is within `accuracy`
/// simultaneously with probability `1 - delta`.
pub fn audit_sample_size(family_size: usize, accuracy: f64, delta: f64) -> usize {
    let k = family_size.max(1) as f64;
    ((2.0 * k / delta).ln() * 2.0 / (accuracy * accuracy)).ceil() as usize
}
