use alloc::collections::BTreeMap;

use crate::error::{Error, Result};

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|c| *c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * libm::log(p)
        })
        .sum()
}

/// Normalized mutual information `I(a; b) / sqrt(H(a)·H(b))`.
///
/// Two constant labelings score 1; a constant labeling against a non-constant
/// one scores 0. Noise labels are treated as an ordinary class.
pub fn nmi(a: &[i64], b: &[i64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::param("labelings are empty"));
    }
    let n = a.len() as f64;
    let mut joint: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    let mut ca: BTreeMap<i64, usize> = BTreeMap::new();
    let mut cb: BTreeMap<i64, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *ca.entry(x).or_default() += 1;
        *cb.entry(y).or_default() += 1;
    }
    let (ha, hb) = (entropy(ca.values().copied(), n), entropy(cb.values().copied(), n));
    if ca.len() == 1 && cb.len() == 1 {
        return Ok(1.0);
    }
    if ca.len() == 1 || cb.len() == 1 {
        return Ok(0.0);
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let pxy = c as f64 / n;
            let (px, py) = (ca[&x] as f64 / n, cb[&y] as f64 / n);
            pxy * libm::log(pxy / (px * py))
        })
        .sum();
    Ok((mi / libm::sqrt(ha * hb)).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let a = [0, 0, 1, 1, 2, 2];
        assert!((nmi(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(nmi(&a, &[5; 6]).unwrap(), 0.0);
        assert!((nmi(&a, &[7, 7, 3, 3, 9, 9]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(nmi(&[1, 1], &[2, 2]).unwrap(), 1.0);
        assert!(nmi(&a, &a[..5]).is_err());
        assert!(nmi(&[], &[]).is_err());
    }

    #[test]
    fn matches_hand_computation() {
        // a = {0,0,1,1}, b = {0,1,1,1}: H(a) = ln 2,
        // H(b) = -(1/4 ln 1/4 + 3/4 ln 3/4), I = H(b) - H(b|a) = H(b) - 1/2 ln 2.
        let hb = -(0.25 * libm::log(0.25) + 0.75 * libm::log(0.75));
        let i = hb - 0.5 * libm::log(2.0);
        let expected = i / libm::sqrt(libm::log(2.0) * hb);
        assert!((nmi(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap() - expected).abs() < 1e-12);
    }
}
