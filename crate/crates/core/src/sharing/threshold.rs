use super::SharingError;

// Absorbs float noise such as 0.7 * 10 = 7.000000000000001 before rounding up.
const RATE_EPSILON: f64 = 1e-9;

fn check_rate(rate: f64) -> Result<(), SharingError> {
    if rate.is_finite() && rate > 0.0 && rate <= 1.0 {
        Ok(())
    } else {
        Err(SharingError::InvalidRate(rate))
    }
}

/// Number of shares needed out of `n` for a threshold `rate`:
/// `max(1, ceil(rate * n))`, never more than `n`.
pub fn compute_threshold(rate: f64, n: usize) -> Result<usize, SharingError> {
    check_rate(rate)?;
    if n == 0 {
        return Err(SharingError::InvalidSpec("no shareholders".into()));
    }
    let t = (rate * n as f64 - RATE_EPSILON).ceil().max(1.0) as usize;
    Ok(t.min(n))
}

/// Storage-level and part-level rates whose product is the target rate.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct ThresholdRates {
    pub t_target: f64,
    /// `q / p`.
    pub t_storage: f64,
    pub t_storage_part: f64,
}

impl ThresholdRates {
    /// The storage-level quorum `q` for `parts` compartments.
    pub fn storage_quorum(&self, parts: usize) -> Result<usize, SharingError> {
        compute_threshold(self.t_storage, parts)
    }

    /// True when the part rate had to be capped at 1 and the product no
    /// longer equals the target.
    pub fn is_capped(&self) -> bool {
        (self.t_storage * self.t_storage_part - self.t_target).abs() > RATE_EPSILON
    }
}

/// Splits `t_target` into `t_storage = q/p` and `t_storagePart = t_target /
/// t_storage`, the latter capped at 1.
pub fn split_rates(t_target: f64, p: usize, q: usize) -> Result<ThresholdRates, SharingError> {
    check_rate(t_target)?;
    if p == 0 || q == 0 || q > p {
        return Err(SharingError::InvalidSpec(format!("need 1 <= q <= p, got p={p}, q={q}")));
    }
    let t_storage = q as f64 / p as f64;
    let mut t_storage_part = t_target / t_storage;
    if t_storage_part > 1.0 {
        log::warn!(
            "part threshold rate {t_storage_part:.4} exceeds 1 for t_target={t_target}, p={p}, q={q}; capping at 1"
        );
        t_storage_part = 1.0;
    }
    Ok(ThresholdRates { t_target, t_storage, t_storage_part })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn threshold_examples() {
        assert_eq!(compute_threshold(0.7, 10), Ok(7));
        assert_eq!(compute_threshold(0.7, 1), Ok(1));
        // 0.9 * 70 is 63.00000000000001 in binary floating point.
        assert_eq!(compute_threshold(0.9, 70), Ok(63));
        assert_eq!(compute_threshold(0.7, 65), Ok(46));
        assert_eq!(compute_threshold(0.01, 5), Ok(1));
        assert_eq!(compute_threshold(1.0, 255), Ok(255));
    }

    #[test]
    fn threshold_rejects_bad_rates() {
        for r in [0.0, -0.1, 1.5, f64::NAN, f64::INFINITY] {
            assert!(matches!(compute_threshold(r, 3), Err(SharingError::InvalidRate(_))));
        }
        assert!(compute_threshold(0.5, 0).is_err());
    }

    #[test]
    fn rate_split_examples() {
        let r = split_rates(0.7, 4, 4).unwrap();
        assert_eq!(r.t_storage, 1.0);
        assert!((r.t_storage_part - 0.7).abs() < 1e-12);
        assert!(!r.is_capped());

        let r = split_rates(0.7, 8, 7).unwrap();
        assert!((r.t_storage - 0.875).abs() < 1e-12);
        assert!((r.t_storage_part - 0.8).abs() < 1e-12);
        assert!((r.t_storage * r.t_storage_part - 0.7).abs() < 1e-9);
        assert_eq!(r.storage_quorum(8), Ok(7));

        let r = split_rates(0.9, 2, 1).unwrap();
        assert_eq!(r.t_storage, 0.5);
        assert_eq!(r.t_storage_part, 1.0);
        assert!(r.is_capped());
    }

    #[test]
    fn rate_split_rejects_bad_quorum() {
        assert!(split_rates(0.7, 4, 5).is_err());
        assert!(split_rates(0.7, 4, 0).is_err());
        assert!(split_rates(0.7, 0, 0).is_err());
        assert!(split_rates(1.2, 4, 4).is_err());
    }

    proptest! {
        #[test]
        fn threshold_is_monotone(r1 in 0.001f64..=1.0, r2 in 0.001f64..=1.0, n1 in 1usize..300, n2 in 1usize..300) {
            let (lo_r, hi_r) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            let (lo_n, hi_n) = if n1 <= n2 { (n1, n2) } else { (n2, n1) };
            prop_assert!(compute_threshold(lo_r, lo_n).unwrap() <= compute_threshold(hi_r, lo_n).unwrap());
            prop_assert!(compute_threshold(lo_r, lo_n).unwrap() <= compute_threshold(lo_r, hi_n).unwrap());
            let t = compute_threshold(hi_r, hi_n).unwrap();
            prop_assert!(t >= 1 && t <= hi_n);
        }

        #[test]
        fn uncapped_split_multiplies_back(t in 0.05f64..=1.0, p in 1usize..30, dq in 0usize..30) {
            let q = p - dq.min(p - 1);
            let r = split_rates(t, p, q).unwrap();
            if !r.is_capped() {
                prop_assert!((r.t_storage * r.t_storage_part - t).abs() < 1e-9);
            }
            prop_assert!(r.t_storage_part <= 1.0);
            prop_assert_eq!(r.storage_quorum(p).unwrap(), q);
        }
    }
}
