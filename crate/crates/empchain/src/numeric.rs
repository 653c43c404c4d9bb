//! Small numeric helpers shared across modules.

/// Neumaier-compensated sum. Deterministic left-to-right order; used for the
/// exact expectations and norms so that million-atom spaces stay well below
/// the 1e-12 relative tolerances promised by the report invariants.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for x in iter {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Dot product with compensation.
pub fn compensated_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    compensated_sum(a.iter().zip(b).map(|(x, y)| x * y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_catastrophic_cancellation() {
        // 1 + 1e100 - 1e100 = 1 exactly with compensation
        assert_eq!(compensated_sum([1.0, 1e100, -1e100]), 1.0);
    }

    #[test]
    fn compensated_dot_matches_plain_on_benign_input() {
        let a = [0.25, 0.75];
        let b = [3.0, -1.0];
        assert_eq!(compensated_dot(&a, &b), 0.0);
    }
}
