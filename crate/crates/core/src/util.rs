//! Small shared helpers: empirical CDFs and a stable config hash.

/// Empirical CDF over integer-valued observations (hop counts, per-device
/// counts). Returns one `(value, cumulative_fraction)` step per distinct
/// value, sorted ascending; the last fraction is 1.0.
pub fn counts_cdf(values: &[u64]) -> Vec<(u64, f64)> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let mut out: Vec<(u64, f64)> = Vec::new();
    let mut seen = 0usize;
    let mut i = 0usize;
    while i < sorted.len() {
        let v = sorted[i];
        while i < sorted.len() && sorted[i] == v {
            i += 1;
            seen += 1;
        }
        out.push((v, seen as f64 / n));
    }
    out
}

/// FNV-1a over bytes. Used to fingerprint effective configurations in
/// result CSVs; stable across platforms and compiler versions, unlike
/// `DefaultHasher`.
pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_steps_are_cumulative() {
        let cdf = counts_cdf(&[2, 2, 4, 7]);
        assert_eq!(cdf, vec![(2, 0.5), (4, 0.75), (7, 1.0)]);
    }

    #[test]
    fn cdf_of_empty_input_is_empty() {
        assert!(counts_cdf(&[]).is_empty());
    }

    #[test]
    fn fnv_matches_reference_vector() {
        // Reference value for "a" from the FNV-1a specification.
        assert_eq!(fnv1a_64(b"a"), 0xaf63dc4c8601ec8c);
    }
}
