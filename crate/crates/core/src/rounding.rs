/// Apportion `total` items across `shares` by largest remainder.
///
/// Shares are normalised by their sum. Each part receives the floor of its
/// exact quota; leftover items go to the largest fractional parts. Equal
/// fractions are resolved in index order starting from `tie_start`
/// (wrapping), which lets callers rotate the tie-break between calls.
pub(crate) fn largest_remainder(total: usize, shares: &[f64], tie_start: usize) -> Vec<usize> {
    let parts = shares.len();
    if parts == 0 {
        return Vec::new();
    }
    let sum: f64 = shares.iter().sum();
    let quotas: Vec<f64> = shares.iter().map(|s| total as f64 * s / sum).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut leftover = total.saturating_sub(assigned);

    let mut order: Vec<usize> = (0..parts).collect();
    let rank = |i: usize| (i + parts - tie_start % parts) % parts;
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(rank(a).cmp(&rank(b)))
    });
    for &i in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        counts[i] += 1;
        leftover -= 1;
    }
    counts
}
