//! Lexicographic ranking of k-subsets of `0..n`.

use crate::error::{Error, Result};

/// `C(n, k)`, or `None` if it does not fit in a `u64`.
pub fn binomial(n: usize, k: usize) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k as u128 {
        // exact: the running product is always C(n - k + i, i)
        acc = acc.checked_mul(n as u128 - k as u128 + i)? / i;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

fn binomial_exact(n: usize, k: usize) -> Result<u64> {
    binomial(n, k).ok_or_else(|| Error::Config(format!("C({n}, {k}) overflows 64 bits")))
}

/// The `index`-th k-subset of `0..n` in lexicographic order.
pub fn unrank_combination(index: u64, n: usize, k: usize) -> Result<Vec<usize>> {
    let total = binomial_exact(n, k)?;
    if index >= total {
        return Err(Error::Bounds { index, len: total });
    }
    let mut rank = index;
    let mut combo = Vec::with_capacity(k);
    let mut next = 0;
    for slot in 0..k {
        let remaining = k - slot - 1;
        let mut c = next;
        loop {
            // subsets whose element at `slot` is exactly c
            let block = binomial_exact(n - c - 1, remaining)?;
            if rank < block {
                break;
            }
            rank -= block;
            c += 1;
        }
        combo.push(c);
        next = c + 1;
    }
    Ok(combo)
}

/// Inverse of [`unrank_combination`].
pub fn rank_combination(combo: &[usize], n: usize) -> Result<u64> {
    let k = combo.len();
    if combo.windows(2).any(|w| w[0] >= w[1]) || combo.last().is_some_and(|&c| c >= n) {
        return Err(Error::Validation(format!(
            "{combo:?} is not a strictly increasing subset of 0..{n}"
        )));
    }
    let mut rank = 0u64;
    let mut start = 0;
    for (slot, &c) in combo.iter().enumerate() {
        for skipped in start..c {
            rank += binomial_exact(n - skipped - 1, k - slot - 1)?;
        }
        start = c + 1;
    }
    Ok(rank)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Lexicographic enumeration by recursion, independent of the ranking arithmetic.
    fn enumerate(n: usize, k: usize) -> Vec<Vec<usize>> {
        fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for c in start..n {
                cur.push(c);
                rec(c + 1, n, k, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(0, n, k, &mut Vec::new(), &mut out);
        out
    }

    /// Pascal's triangle as the binomial oracle.
    fn pascal(n: usize, k: usize) -> u64 {
        let mut row = vec![1u64];
        for _ in 0..n {
            let mut next = vec![1u64; row.len() + 1];
            for i in 1..row.len() {
                next[i] = row[i - 1] + row[i];
            }
            row = next;
        }
        row.get(k).copied().unwrap_or(0)
    }

    #[test]
    fn binomial_matches_pascal() {
        for n in 0..40 {
            for k in 0..=n + 1 {
                assert_eq!(binomial(n, k), Some(pascal(n, k)), "C({n},{k})");
            }
        }
        assert_eq!(binomial(20, 5), Some(15504));
        assert_eq!(binomial(67, 33), Some(14226520737620288370));
        assert_eq!(binomial(68, 34), None);
    }

    #[test]
    fn pool_seven_choose_three() {
        let all = enumerate(7, 3);
        assert_eq!(all.len(), 35);
        for (i, combo) in all.iter().enumerate() {
            assert_eq!(&unrank_combination(i as u64, 7, 3).unwrap(), combo);
            assert_eq!(rank_combination(combo, 7).unwrap(), i as u64);
        }
    }

    #[test]
    fn endpoints() {
        assert_eq!(unrank_combination(0, 9, 4).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(unrank_combination(125, 9, 4).unwrap(), vec![5, 6, 7, 8]);
        assert!(matches!(
            unrank_combination(126, 9, 4),
            Err(Error::Bounds { index: 126, len: 126 })
        ));
        assert_eq!(unrank_combination(0, 3, 0).unwrap(), Vec::<usize>::new());
    }

    #[test]
    fn rank_rejects_non_canonical() {
        assert!(rank_combination(&[2, 1], 5).is_err());
        assert!(rank_combination(&[1, 1], 5).is_err());
        assert!(rank_combination(&[1, 5], 5).is_err());
    }

    #[test]
    fn large_pool_roundtrip() {
        let n = 4800;
        let total = binomial(n, 5).unwrap();
        for index in [0, 1, total / 3, total / 2 + 17, total - 1] {
            let combo = unrank_combination(index, n, 5).unwrap();
            assert!(combo.windows(2).all(|w| w[0] < w[1]));
            assert_eq!(rank_combination(&combo, n).unwrap(), index);
        }
    }
}
