/// Local maxima and minima (indices) whose topographic prominence is at
/// least `prominence`. Flat peaks report their midpoint; the first and
/// last samples are never extrema.
pub fn find_extrema(smoothed: &[f64], prominence: f64) -> (Vec<usize>, Vec<usize>) {
    let maxima = peaks_with_prominence(smoothed, prominence);
    let negated: Vec<f64> = smoothed.iter().map(|v| -v).collect();
    let minima = peaks_with_prominence(&negated, prominence);
    (maxima, minima)
}

/// Total number of maxima plus minima at the given prominence.
pub fn extrema_count(smoothed: &[f64], prominence: f64) -> usize {
    let (a, b) = find_extrema(smoothed, prominence);
    a.len() + b.len()
}

/// Bisects the prominence over `[0, max - min]` for 50 iterations and
/// returns the probed value whose extrema count lies closest to
/// `target_count`, preferring the larger prominence on ties.
pub fn tune_prominence(smoothed: &[f64], target_count: usize) -> f64 {
    const ITERATIONS: usize = 50;
    let finite = smoothed.iter().copied().filter(|v| v.is_finite());
    let (lo_v, hi_v) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !(hi_v > lo_v) {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, hi_v - lo_v);
    let mut best: Option<(usize, f64)> = None;
    for _ in 0..ITERATIONS {
        let mid = 0.5 * (lo + hi);
        let count = extrema_count(smoothed, mid);
        let gap = count.abs_diff(target_count);
        let better = match best {
            None => true,
            Some((g, p)) => gap < g || (gap == g && mid > p),
        };
        if better {
            best = Some((gap, mid));
        }
        if count > target_count {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best.map_or(0.0, |(_, p)| p)
}

fn peaks_with_prominence(x: &[f64], min_prominence: f64) -> Vec<usize> {
    let candidates = local_maxima(x);
    if candidates.is_empty() {
        return candidates;
    }
    let table = MinTable::new(x);
    let prev = nearest_higher(x, false);
    let next = nearest_higher(x, true);
    candidates
        .into_iter()
        .filter(|&p| {
            let left_min = table.min(prev[p].map_or(0, |j| j + 1), p);
            let right_min = table.min(p, next[p].map_or(x.len() - 1, |j| j - 1));
            x[p] - left_min.max(right_min) >= min_prominence
        })
        .collect()
}

/// Strict rises followed by a strict fall, with flat tops reported at
/// the (lower) midpoint.
fn local_maxima(x: &[f64]) -> Vec<usize> {
    let n = x.len();
    let mut peaks = Vec::new();
    if n < 3 {
        return peaks;
    }
    let mut i = 1;
    while i < n - 1 {
        if x[i - 1] < x[i] {
            let mut ahead = i + 1;
            while ahead < n - 1 && x[ahead] == x[i] {
                ahead += 1;
            }
            if x[ahead] < x[i] {
                peaks.push((i + ahead - 1) / 2);
                i = ahead;
                continue;
            }
        }
        i += 1;
    }
    peaks
}

/// For each index, the nearest index (left, or right when `forward`)
/// holding a strictly larger value.
fn nearest_higher(x: &[f64], forward: bool) -> Vec<Option<usize>> {
    let n = x.len();
    let mut out = vec![None; n];
    let mut stack: Vec<usize> = Vec::new();
    let order: Box<dyn Iterator<Item = usize>> = if forward {
        Box::new((0..n).rev())
    } else {
        Box::new(0..n)
    };
    for i in order {
        while stack.last().is_some_and(|&j| x[j] <= x[i]) {
            stack.pop();
        }
        out[i] = stack.last().copied();
        stack.push(i);
    }
    out
}

/// Sparse table for O(1) range minimum queries.
struct MinTable {
    levels: Vec<Vec<f64>>,
}

impl MinTable {
    fn new(x: &[f64]) -> Self {
        let mut levels = vec![x.to_vec()];
        let mut width = 1;
        while 2 * width <= x.len() {
            let prev = levels.last().unwrap();
            let next: Vec<f64> = (0..=x.len() - 2 * width)
                .map(|i| prev[i].min(prev[i + width]))
                .collect();
            levels.push(next);
            width *= 2;
        }
        Self { levels }
    }

    /// Minimum over the inclusive range `[a, b]`.
    fn min(&self, a: usize, b: usize) -> f64 {
        let len = b - a + 1;
        let k = usize::BITS as usize - 1 - len.leading_zeros() as usize;
        self.levels[k][a].min(self.levels[k][b + 1 - (1 << k)])
    }
}
