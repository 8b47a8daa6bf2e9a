use crate::error::{Error, Result};

/// First Wasserstein distance between two empirical distributions,
/// `∫ |F_a(x) - F_b(x)| dx`, integrated exactly over the merged support.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("wasserstein distance needs non-empty samples".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Domain("wasserstein samples must be finite".into()));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable_by(f64::total_cmp);
    ys.sort_unstable_by(f64::total_cmp);
    let (n, m) = (xs.len(), ys.len());

    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = xs[0].min(ys[0]);
    let mut total = 0.0;
    while i < n || j < m {
        let next = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        let gap = (i as f64 / n as f64 - j as f64 / m as f64).abs();
        total += gap * (next - prev);
        while i < n && xs[i] == next {
            i += 1;
        }
        while j < m && ys[j] == next {
            j += 1;
        }
        prev = next;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_masses() {
        assert_eq!(wasserstein_1d(&[0.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(wasserstein_1d(&[0.3, 0.1, 0.2], &[0.2, 0.3, 0.1]).unwrap(), 0.0);
    }

    #[test]
    fn unequal_sizes() {
        // F_a jumps to 1 at 0; F_b is 1/2 on [0, 1)
        assert!((wasserstein_1d(&[0.0], &[0.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_rejected() {
        assert!(wasserstein_1d(&[], &[0.5]).is_err());
        assert!(wasserstein_1d(&[0.5], &[]).is_err());
    }
}
