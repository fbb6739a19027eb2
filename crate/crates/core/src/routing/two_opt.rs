use super::DistanceMatrix;

const EPS: f64 = 1e-10;

/// Length of depot -> stops -> depot, with stops given as matrix indices.
pub(crate) fn tour_length(dist: &DistanceMatrix, stops: &[usize]) -> f64 {
    let mut prev = 0;
    let mut total = 0.0;
    for &s in stops {
        total += dist.get(prev, s);
        prev = s;
    }
    total + dist.get(prev, 0)
}

/// First-improvement 2-opt on a single depot tour, until no reversal helps.
/// `stops` are matrix indices (the depot, index 0, is implicit at both ends).
pub(crate) fn two_opt(dist: &DistanceMatrix, stops: &mut [usize]) {
    let n = stops.len();
    if n < 2 {
        return;
    }
    let node = |tour: &[usize], k: usize| -> usize {
        // position 0 and n + 1 are the depot
        if k == 0 || k == n + 1 {
            0
        } else {
            tour[k - 1]
        }
    };
    let mut improved = true;
    while improved {
        improved = false;
        // reverse positions a..=b (1-based, within the stops)
        for a in 1..n {
            for b in (a + 1)..=n {
                let (p, x) = (node(stops, a - 1), node(stops, a));
                let (y, q) = (node(stops, b), node(stops, b + 1));
                let delta = dist.get(p, y) + dist.get(x, q) - dist.get(p, x) - dist.get(y, q);
                if delta < -EPS {
                    stops[a - 1..b].reverse();
                    improved = true;
                }
            }
        }
    }
}
