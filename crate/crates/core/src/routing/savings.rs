//! Clarke-Wright parallel savings construction.
//!
//! Every stop starts on its own depot round trip. Pairs are merged in order of
//! decreasing saving `d(0,i) + d(0,j) - d(i,j)` when both are route endpoints
//! and the combined load fits. Equal savings are taken in ascending stop index
//! order, and stops are indexed in ascending bin id order by the caller.

use super::DistanceMatrix;

struct Saving {
    i: usize,
    j: usize,
    value: f64,
}

/// `loads[k]` is the load of stop `k`; matrix index 0 is the depot and stop
/// `k` is matrix index `k + 1`. Returns routes as lists of stop indices.
pub(crate) fn clarke_wright(dist: &DistanceMatrix, loads: &[f64], capacity: f64) -> Vec<Vec<usize>> {
    let n = loads.len();
    let mut savings = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let value = dist.get(0, i + 1) + dist.get(0, j + 1) - dist.get(i + 1, j + 1);
            if value > 0.0 {
                savings.push(Saving { i, j, value });
            }
        }
    }
    savings.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.i.cmp(&b.i)).then(a.j.cmp(&b.j)));

    let mut route_of: Vec<usize> = (0..n).collect();
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut load: Vec<f64> = loads.to_vec();

    for s in &savings {
        let (ri, rj) = (route_of[s.i], route_of[s.j]);
        if ri == rj || load[ri] + load[rj] > capacity {
            continue;
        }
        let i_first = members[ri].first() == Some(&s.i);
        let i_last = members[ri].last() == Some(&s.i);
        let j_first = members[rj].first() == Some(&s.j);
        let j_last = members[rj].last() == Some(&s.j);
        if !(i_first || i_last) || !(j_first || j_last) {
            continue;
        }
        // orient so that ri ends with i and rj starts with j
        let mut left = std::mem::take(&mut members[ri]);
        let mut right = std::mem::take(&mut members[rj]);
        if !i_last {
            left.reverse();
        }
        if !j_first {
            right.reverse();
        }
        left.extend(right);
        for &k in &left {
            route_of[k] = ri;
        }
        members[ri] = left;
        load[ri] += load[rj];
        load[rj] = 0.0;
    }

    let mut routes: Vec<Vec<usize>> = members.into_iter().filter(|m| !m.is_empty()).collect();
    routes.sort_by_key(|r| *r.iter().min().expect("non-empty route"));
    routes
}
