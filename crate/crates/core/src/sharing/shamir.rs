//! Byte-wise Shamir sharing: every secret byte gets its own random polynomial
//! of degree `t - 1`, and share `i` carries the evaluations at `x = i`.

use std::fmt;

use rand_core::RngCore;

use super::gf256::{gf_div, gf_mul};
use super::SharingError;
use crate::codec::impl_base64_serde;

pub const SCHEME_ID_LEN: usize = 16;
pub const MAX_SHARES: usize = 255;

/// Binds shares to one sharing instance so shares of different instances are
/// never interpolated together.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SchemeId([u8; SCHEME_ID_LEN]);

impl SchemeId {
    pub fn from_bytes(bytes: [u8; SCHEME_ID_LEN]) -> Self {
        SchemeId(bytes)
    }

    /// `SHA-256(owner, kind, epoch)` truncated to 16 bytes.
    pub fn derive(owner: &str, kind: &str, epoch: u64) -> Self {
        let d = crate::crypto::digest_parts(&[owner.as_bytes(), kind.as_bytes(), &epoch.to_be_bytes()]);
        SchemeId(d[..SCHEME_ID_LEN].try_into().expect("16 bytes"))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SchemeId(")?;
        for b in &self.0[..4] {
            write!(f, "{b:02x}")?;
        }
        write!(f, "..)")
    }
}

/// One point of the polynomial family.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Share {
    pub scheme_id: SchemeId,
    pub x: u8,
    pub payload: Vec<u8>,
}

impl Share {
    /// `scheme_id (16) || x (1) || payload`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(SCHEME_ID_LEN + 1 + self.payload.len());
        out.extend_from_slice(&self.scheme_id.0);
        out.push(self.x);
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SharingError> {
        if bytes.len() < SCHEME_ID_LEN + 2 {
            return Err(SharingError::Malformed("share shorter than header + 1 byte".into()));
        }
        let x = bytes[SCHEME_ID_LEN];
        if x == 0 {
            return Err(SharingError::Malformed("share index 0".into()));
        }
        Ok(Share {
            scheme_id: SchemeId(bytes[..SCHEME_ID_LEN].try_into().expect("16 bytes")),
            x,
            payload: bytes[SCHEME_ID_LEN + 1..].to_vec(),
        })
    }

    fn as_bytes(&self) -> Vec<u8> {
        self.to_bytes()
    }

    fn try_from_slice(bytes: &[u8]) -> Result<Self, SharingError> {
        Self::from_bytes(bytes)
    }
}

impl_base64_serde!(Share);

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ThresholdSpec {
    t: usize,
    n: usize,
}

impl ThresholdSpec {
    pub fn new(t: usize, n: usize) -> Result<Self, SharingError> {
        if n > MAX_SHARES {
            return Err(SharingError::CapacityExceeded { n });
        }
        if t == 0 || t > n {
            return Err(SharingError::InvalidSpec(format!("need 1 <= t <= n, got t={t}, n={n}")));
        }
        Ok(ThresholdSpec { t, n })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// `table[a] = a * x`.
fn mul_table(x: u8) -> [u8; 256] {
    let mut table = [0u8; 256];
    for (a, slot) in table.iter_mut().enumerate() {
        *slot = gf_mul(a as u8, x);
    }
    table
}

/// Splits `secret` into `spec.n()` shares with x-coordinates `1..=n`.
pub fn split(
    secret: &[u8],
    spec: ThresholdSpec,
    scheme_id: SchemeId,
    rng: &mut dyn RngCore,
) -> Result<Vec<Share>, SharingError> {
    if secret.is_empty() {
        return Err(SharingError::EmptySecret);
    }
    let len = secret.len();
    // coeffs[d] holds the degree-d coefficient for every secret byte.
    let mut coeffs = Vec::with_capacity(spec.t);
    coeffs.push(secret.to_vec());
    for _ in 1..spec.t {
        let mut row = vec![0u8; len];
        rng.fill_bytes(&mut row);
        coeffs.push(row);
    }

    let shares = (1..=spec.n)
        .map(|i| {
            let x = i as u8;
            let times_x = mul_table(x);
            let mut acc = coeffs[spec.t - 1].clone();
            for row in coeffs[..spec.t - 1].iter().rev() {
                for (a, c) in acc.iter_mut().zip(row) {
                    *a = times_x[*a as usize] ^ c;
                }
            }
            Share { scheme_id, x, payload: acc }
        })
        .collect();
    Ok(shares)
}

/// Interpolates the secret at `x = 0` from the first `t` shares.
///
/// All supplied shares are checked for consistent scheme, length and
/// distinct indices, even those beyond the first `t`.
pub fn reconstruct(shares: &[Share], t: usize) -> Result<Vec<u8>, SharingError> {
    if t == 0 {
        return Err(SharingError::InvalidSpec("threshold 0".into()));
    }
    if shares.len() < t {
        return Err(SharingError::InsufficientShares { needed: t, got: shares.len() });
    }
    let first = &shares[0];
    let mut seen = [false; 256];
    for s in shares {
        if s.scheme_id != first.scheme_id {
            return Err(SharingError::SchemeMismatch);
        }
        if s.payload.len() != first.payload.len() {
            return Err(SharingError::LengthMismatch);
        }
        if s.x == 0 {
            return Err(SharingError::Malformed("share index 0".into()));
        }
        if std::mem::replace(&mut seen[s.x as usize], true) {
            return Err(SharingError::DuplicateShareIndex(s.x));
        }
    }

    let used = &shares[..t];
    let mut secret = vec![0u8; first.payload.len()];
    for (i, si) in used.iter().enumerate() {
        // Lagrange basis polynomial for si evaluated at 0.
        let mut basis = 1u8;
        for (j, sj) in used.iter().enumerate() {
            if i != j {
                basis = gf_mul(basis, gf_div(sj.x, sj.x ^ si.x).expect("distinct x"));
            }
        }
        for (out, y) in secret.iter_mut().zip(&si.payload) {
            *out ^= gf_mul(basis, *y);
        }
    }
    Ok(secret)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sid() -> SchemeId {
        SchemeId::derive("u", "TS", 1)
    }

    // Independent field multiply for the brute-force oracles below.
    fn slow_mul(a: u8, b: u8) -> u8 {
        let mut p = 0u8;
        let (mut a, mut b) = (a, b);
        for _ in 0..8 {
            if b & 1 == 1 {
                p ^= a;
            }
            let hi = a & 0x80;
            a <<= 1;
            if hi != 0 {
                a ^= 0x1B;
            }
            b >>= 1;
        }
        p
    }

    fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
        (0u32..(1 << n))
            .filter(|m| m.count_ones() as usize == k)
            .map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect())
            .collect()
    }

    #[test]
    fn degree_zero_every_share_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let shares = split(b"secret", ThresholdSpec::new(1, 3).unwrap(), sid(), &mut rng).unwrap();
        for s in &shares {
            assert_eq!(reconstruct(std::slice::from_ref(s), 1).unwrap(), b"secret");
        }
    }

    #[test]
    fn one_byte_two_of_three_matches_brute_force_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let shares = split(&[0x2A], ThresholdSpec::new(2, 3).unwrap(), sid(), &mut rng).unwrap();
        for pair in subsets(3, 2) {
            let (a, b) = (&shares[pair[0]], &shares[pair[1]]);
            // Enumerate every line c0 + c1*x and keep those through both points.
            let lines: Vec<(u8, u8)> = (0..=255u8)
                .flat_map(|c0| (0..=255u8).map(move |c1| (c0, c1)))
                .filter(|&(c0, c1)| c0 ^ slow_mul(c1, a.x) == a.payload[0] && c0 ^ slow_mul(c1, b.x) == b.payload[0])
                .collect();
            assert_eq!(lines.len(), 1);
            assert_eq!(lines[0].0, 0x2A);
            assert_eq!(reconstruct(&[a.clone(), b.clone()], 2).unwrap(), vec![0x2A]);
        }
    }

    #[test]
    fn below_threshold_constrains_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shares = split(&[0x99], ThresholdSpec::new(2, 3).unwrap(), sid(), &mut rng).unwrap();
        for s in &shares {
            for candidate in 0..=255u8 {
                let consistent = (0..=255u8).filter(|&c1| candidate ^ slow_mul(c1, s.x) == s.payload[0]).count();
                assert_eq!(consistent, 1, "candidate {candidate} excluded by share x={}", s.x);
            }
        }
    }

    #[test]
    fn exhaustive_subsets_small_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let secret = b"\x00\x01\xfe\xffpartitioned";
        for n in 1..=6 {
            for t in 1..=n {
                let shares = split(secret, ThresholdSpec::new(t, n).unwrap(), sid(), &mut rng).unwrap();
                for subset in subsets(n, t) {
                    let picked: Vec<Share> = subset.iter().map(|&i| shares[i].clone()).collect();
                    assert_eq!(reconstruct(&picked, t).unwrap(), secret, "t={t} n={n} {subset:?}");
                }
            }
        }
    }

    #[test]
    fn full_capacity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let secret = [0xC3u8; 32];
        let mut shares = split(&secret, ThresholdSpec::new(255, 255).unwrap(), sid(), &mut rng).unwrap();
        shares.shuffle(&mut rng);
        assert_eq!(reconstruct(&shares, 255).unwrap(), secret);
    }

    #[test]
    fn spec_validation() {
        assert_eq!(ThresholdSpec::new(3, 256), Err(SharingError::CapacityExceeded { n: 256 }));
        assert!(matches!(ThresholdSpec::new(0, 3), Err(SharingError::InvalidSpec(_))));
        assert!(matches!(ThresholdSpec::new(4, 3), Err(SharingError::InvalidSpec(_))));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert_eq!(split(b"", ThresholdSpec::new(1, 1).unwrap(), sid(), &mut rng), Err(SharingError::EmptySecret));
    }

    #[test]
    fn reconstruct_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spec = ThresholdSpec::new(2, 3).unwrap();
        let shares = split(b"ab", spec, sid(), &mut rng).unwrap();
        assert_eq!(reconstruct(&shares[..1], 2), Err(SharingError::InsufficientShares { needed: 2, got: 1 }));
        assert_eq!(reconstruct(&[shares[0].clone(), shares[0].clone()], 2), Err(SharingError::DuplicateShareIndex(1)));
        let other = split(b"ab", spec, SchemeId::derive("u", "TS", 2), &mut rng).unwrap();
        assert_eq!(reconstruct(&[shares[0].clone(), other[1].clone()], 2), Err(SharingError::SchemeMismatch));
        let mut short = shares[1].clone();
        short.payload.pop();
        assert_eq!(reconstruct(&[shares[0].clone(), short], 2), Err(SharingError::LengthMismatch));
    }

    #[test]
    fn share_wire_format() {
        let s = Share { scheme_id: SchemeId::from_bytes([7; 16]), x: 3, payload: vec![1, 2, 3] };
        let bytes = s.to_bytes();
        assert_eq!(bytes.len(), 16 + 1 + 3);
        assert_eq!(&bytes[..16], &[7; 16]);
        assert_eq!(bytes[16], 3);
        assert_eq!(Share::from_bytes(&bytes).unwrap(), s);
        assert!(Share::from_bytes(&bytes[..17]).is_err());
        let mut zero = bytes.clone();
        zero[16] = 0;
        assert!(Share::from_bytes(&zero).is_err());
    }

    #[test]
    fn scheme_ids_separate_kind_and_epoch() {
        let a = SchemeId::derive("u", "TS", 1);
        assert_ne!(a, SchemeId::derive("u", "TS", 2));
        assert_ne!(a, SchemeId::derive("u", "CTS", 1));
        assert_ne!(a, SchemeId::derive("v", "TS", 1));
        assert_eq!(a, SchemeId::derive("u", "TS", 1));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn any_t_subset_round_trips(
            secret in proptest::collection::vec(any::<u8>(), 1..=64),
            n in 1usize..=20,
            t_frac in 0.0f64..1.0,
            seed in any::<u64>(),
        ) {
            let t = 1 + ((n as f64 - 1.0) * t_frac).round() as usize;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut shares = split(&secret, ThresholdSpec::new(t, n).unwrap(), sid(), &mut rng).unwrap();
            shares.shuffle(&mut rng);
            prop_assert_eq!(reconstruct(&shares[..t], t).unwrap(), secret);
        }

        #[test]
        fn share_bytes_round_trip(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            if let Ok(s) = Share::from_bytes(&bytes) {
                prop_assert_eq!(s.to_bytes(), bytes);
            }
        }
    }
}
